//! Forward kinematics of a 7-joint serial arm described by a classic
//! (distal) Denavit–Hartenberg table.

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{spaces, GeomError, Pose};

pub const JOINT_COUNT: usize = 7;

/// Label of the frame attached to the distal end of link `i` (`link0` is the
/// base frame the DH chain starts from).
pub fn link_frame(i: usize) -> String {
    format!("link{i}")
}

const DEFAULT_ARM_JSON: &str = include_str!("../config/arm_default.json");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("expected {JOINT_COUNT} joint values, got {0}")]
    WrongJointCount(usize),
    #[error("joint {index} is not finite ({value})")]
    NonFiniteJoint { index: usize, value: f64 },
    #[error("DH link {0} has a non-finite parameter")]
    NonFiniteLink(usize),
    #[error("{which} must map `{expected_source}` to `{expected_target}`, got `{source_label}` to `{target_label}`")]
    OffsetLabels {
        which: &'static str,
        expected_source: String,
        expected_target: String,
        source_label: String,
        target_label: String,
    },
    #[error("{0} must be rigid (scale 1)")]
    ScaledOffset(&'static str),
    #[error(transparent)]
    Geom(#[from] GeomError),
}

/// One row of a DH table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DhLink {
    #[serde(rename = "a_mm")]
    pub a: f64,
    #[serde(rename = "alpha_rad")]
    pub alpha: f64,
    #[serde(rename = "d_mm")]
    pub d: f64,
    #[serde(rename = "theta0_rad")]
    pub theta0: f64,
}

impl DhLink {
    pub const ZERO: DhLink = DhLink {
        a: 0.0,
        alpha: 0.0,
        d: 0.0,
        theta0: 0.0,
    };

    fn is_finite(&self) -> bool {
        self.a.is_finite() && self.alpha.is_finite() && self.d.is_finite() && self.theta0.is_finite()
    }
}

/// Joint angles in rad, one per joint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct JointAngles([f64; JOINT_COUNT]);

impl JointAngles {
    pub fn new(angles: [f64; JOINT_COUNT]) -> Result<Self, KinematicsError> {
        for (index, &value) in angles.iter().enumerate() {
            if !value.is_finite() {
                return Err(KinematicsError::NonFiniteJoint { index, value });
            }
        }
        Ok(JointAngles(angles))
    }

    pub fn zeros() -> Self {
        JointAngles([0.0; JOINT_COUNT])
    }

    pub fn from_slice(values: &[f64]) -> Result<Self, KinematicsError> {
        let arr: [f64; JOINT_COUNT] = values
            .try_into()
            .map_err(|_| KinematicsError::WrongJointCount(values.len()))?;
        Self::new(arr)
    }

    pub fn as_array(&self) -> &[f64; JOINT_COUNT] {
        &self.0
    }

    /// Per-joint linear blend `self + f·(other − self)`.
    pub fn lerp(&self, other: &JointAngles, f: f64) -> JointAngles {
        let mut out = [0.0; JOINT_COUNT];
        for (o, (a, b)) in out.iter_mut().zip(self.0.iter().zip(other.0.iter())) {
            *o = a + f * (b - a);
        }
        JointAngles(out)
    }
}

impl std::ops::Index<usize> for JointAngles {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl TryFrom<Vec<f64>> for JointAngles {
    type Error = KinematicsError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        JointAngles::from_slice(&v)
    }
}

impl From<JointAngles> for Vec<f64> {
    fn from(a: JointAngles) -> Self {
        a.0.to_vec()
    }
}

/// `Rot_z(θ0+θ)·Trans_z(d)·Trans_x(a)·Rot_x(α)`, labeled `distal → proximal`.
pub fn link_transform(link: &DhLink, angle: f64) -> Pose {
    link_pose(link, angle, "distal", "proximal")
}

fn link_pose(link: &DhLink, angle: f64, source: &str, target: &str) -> Pose {
    let theta = link.theta0 + angle;
    let rz = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), theta);
    let rx = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), link.alpha);
    let (st, ct) = theta.sin_cos();
    let t = Vector3::new(link.a * ct, link.a * st, link.d);
    Pose::rigid(rz * rx, t, source, target).expect("DH parameters checked finite")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ArmModelJson", into = "ArmModelJson")]
pub struct ArmModel {
    links: [DhLink; JOINT_COUNT],
    base_offset: Pose,
    tool_offset: Pose,
}

impl ArmModel {
    /// `base_offset` must map `link0 → sawyer`, `tool_offset` must map
    /// `gripper → link7`; both rigid.
    pub fn new(
        links: [DhLink; JOINT_COUNT],
        base_offset: Pose,
        tool_offset: Pose,
    ) -> Result<Self, KinematicsError> {
        if let Some(i) = links.iter().position(|l| !l.is_finite()) {
            return Err(KinematicsError::NonFiniteLink(i));
        }
        check_offset("base_offset", &base_offset, &link_frame(0), spaces::SAWYER)?;
        check_offset("tool_offset", &tool_offset, spaces::GRIPPER, &link_frame(JOINT_COUNT))?;
        Ok(ArmModel {
            links,
            base_offset,
            tool_offset,
        })
    }

    /// Links only; identity base and tool offsets.
    pub fn from_links(links: [DhLink; JOINT_COUNT]) -> Result<Self, KinematicsError> {
        Self::new(
            links,
            Pose::identity_between(link_frame(0), spaces::SAWYER),
            Pose::identity_between(spaces::GRIPPER, link_frame(JOINT_COUNT)),
        )
    }

    /// All-zero table: forward kinematics is the identity for every input.
    pub fn zero() -> Self {
        Self::from_links([DhLink::ZERO; JOINT_COUNT]).expect("zero model is valid")
    }

    /// The shipped synthetic 7-link table (`config/arm_default.json`). The
    /// values are fixed but arbitrary; they do not describe a real robot.
    pub fn default_synthetic() -> Self {
        serde_json::from_str(DEFAULT_ARM_JSON).expect("shipped arm table parses")
    }

    pub fn links(&self) -> &[DhLink; JOINT_COUNT] {
        &self.links
    }

    pub fn base_offset(&self) -> &Pose {
        &self.base_offset
    }

    pub fn tool_offset(&self) -> &Pose {
        &self.tool_offset
    }
}

fn check_offset(
    which: &'static str,
    pose: &Pose,
    source: &str,
    target: &str,
) -> Result<(), KinematicsError> {
    if pose.source().as_str() != source || pose.target().as_str() != target {
        return Err(KinematicsError::OffsetLabels {
            which,
            expected_source: source.to_string(),
            expected_target: target.to_string(),
            source_label: pose.source().to_string(),
            target_label: pose.target().to_string(),
        });
    }
    if !pose.is_rigid() {
        return Err(KinematicsError::ScaledOffset(which));
    }
    Ok(())
}

/// Gripper pose in the robot base space: `gripper → sawyer`.
pub fn forward_kinematics(model: &ArmModel, angles: &JointAngles) -> Result<Pose, KinematicsError> {
    let mut pose = model.base_offset.clone();
    for (i, (link, &angle)) in model.links.iter().zip(angles.0.iter()).enumerate() {
        if !angle.is_finite() {
            return Err(KinematicsError::NonFiniteJoint { index: i, value: angle });
        }
        let step = link_pose(link, angle, &link_frame(i + 1), &link_frame(i));
        pose = pose.compose(&step)?;
    }
    Ok(pose.compose(&model.tool_offset)?)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArmModelJson {
    links: Vec<DhLink>,
    base_offset: Pose,
    tool_offset: Pose,
}

impl TryFrom<ArmModelJson> for ArmModel {
    type Error = KinematicsError;
    fn try_from(j: ArmModelJson) -> Result<Self, Self::Error> {
        let n = j.links.len();
        let links: [DhLink; JOINT_COUNT] = j
            .links
            .try_into()
            .map_err(|_| KinematicsError::WrongJointCount(n))?;
        ArmModel::new(links, j.base_offset, j.tool_offset)
    }
}

impl From<ArmModel> for ArmModelJson {
    fn from(m: ArmModel) -> Self {
        ArmModelJson {
            links: m.links.to_vec(),
            base_offset: m.base_offset,
            tool_offset: m.tool_offset,
        }
    }
}
