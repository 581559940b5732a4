//! Similarity transforms between labeled coordinate spaces.
//!
//! A [`Pose`] maps points from its `source` space into its `target` space:
//! `x ↦ s·R·x + t`. Every pose carries both labels so that chains such as
//! `base→pattern ∘ gripper→base ∘ camera→gripper` are checked at runtime.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix3, Matrix4, Point3, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Well-known space labels used throughout the crate.
pub mod spaces {
    pub const SAWYER: &str = "sawyer";
    pub const PATTERN: &str = "pattern";
    pub const GRIPPER: &str = "gripper";
    pub const CAMERA: &str = "camera";
    pub const SLAM: &str = "slam";
}

/// Default rotation-residual weight, mm per rad.
pub const DEFAULT_RHO_MM_PER_RAD: f64 = 100.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("cannot chain {left} after {right}: `{left_source}` != `{right_target}`")]
    LabelChain {
        left: String,
        right: String,
        left_source: String,
        right_target: String,
    },
    #[error("poses live in different spaces: {0} vs {1}")]
    LabelMismatch(String, String),
    #[error("scale must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("quaternion has zero or non-finite norm")]
    InvalidRotation,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// Name of a coordinate space. Cheap to clone.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Space(Arc<str>);

impl Space {
    pub fn new(name: &str) -> Self {
        Space(Arc::from(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for Space {
    fn from(s: &str) -> Self {
        Space::new(s)
    }
}

impl From<String> for Space {
    fn from(s: String) -> Self {
        Space(Arc::from(s))
    }
}

impl fmt::Debug for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

impl fmt::Display for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Similarity transform `x ↦ s·R(q)·x + t` from `source` to `target`.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoseJson", into = "PoseJson")]
pub struct Pose {
    rotation: UnitQuaternion<f64>,
    translation: Vector3<f64>,
    scale: f64,
    source: Space,
    target: Space,
}

impl Pose {
    /// Builds a pose from a raw quaternion, renormalizing it.
    pub fn new(
        q: Quaternion<f64>,
        translation: Vector3<f64>,
        scale: f64,
        source: impl Into<Space>,
        target: impl Into<Space>,
    ) -> Result<Self, GeomError> {
        let norm = q.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(GeomError::InvalidRotation);
        }
        Self::from_parts(
            UnitQuaternion::new_unchecked(q),
            translation,
            scale,
            source,
            target,
        )
    }

    pub fn from_parts(
        rotation: UnitQuaternion<f64>,
        translation: Vector3<f64>,
        scale: f64,
        source: impl Into<Space>,
        target: impl Into<Space>,
    ) -> Result<Self, GeomError> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(GeomError::InvalidScale(scale));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(GeomError::NonFinite("translation"));
        }
        if !rotation.coords.iter().all(|v| v.is_finite()) {
            return Err(GeomError::InvalidRotation);
        }
        Ok(Pose {
            rotation: renormalize(rotation),
            translation,
            scale,
            source: source.into(),
            target: target.into(),
        })
    }

    /// Rigid (scale 1) pose.
    pub fn rigid(
        rotation: UnitQuaternion<f64>,
        translation: Vector3<f64>,
        source: impl Into<Space>,
        target: impl Into<Space>,
    ) -> Result<Self, GeomError> {
        Self::from_parts(rotation, translation, 1.0, source, target)
    }

    /// Identity map of `space` onto itself.
    pub fn identity(space: impl Into<Space>) -> Self {
        let space = space.into();
        Pose {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
            scale: 1.0,
            source: space.clone(),
            target: space,
        }
    }

    /// Identity transform between two differently named spaces.
    pub fn identity_between(source: impl Into<Space>, target: impl Into<Space>) -> Self {
        Pose {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
            scale: 1.0,
            source: source.into(),
            target: target.into(),
        }
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn source(&self) -> &Space {
        &self.source
    }

    pub fn target(&self) -> &Space {
        &self.target
    }

    pub fn is_rigid(&self) -> bool {
        self.scale == 1.0
    }

    /// Same transform, new labels.
    pub fn relabeled(&self, source: impl Into<Space>, target: impl Into<Space>) -> Pose {
        Pose {
            source: source.into(),
            target: target.into(),
            ..self.clone()
        }
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Result<Pose, GeomError> {
        if self.source != other.target {
            return Err(GeomError::LabelChain {
                left: self.label(),
                right: other.label(),
                left_source: self.source.to_string(),
                right_target: other.target.to_string(),
            });
        }
        Ok(self.compose_unchecked(other, other.source.clone(), self.target.clone()))
    }

    fn compose_unchecked(&self, other: &Pose, source: Space, target: Space) -> Pose {
        let translation = self.scale * (self.rotation * other.translation) + self.translation;
        Pose {
            rotation: renormalize(self.rotation * other.rotation),
            translation,
            scale: self.scale * other.scale,
            source,
            target,
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv_rot = self.rotation.inverse();
        let inv_scale = 1.0 / self.scale;
        Pose {
            rotation: inv_rot,
            translation: -(inv_scale * (inv_rot * self.translation)),
            scale: inv_scale,
            source: self.target.clone(),
            target: self.source.clone(),
        }
    }

    pub fn transform_point(&self, x: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.scale * (self.rotation * x.coords) + self.translation)
    }

    /// Rotation only, no scale or translation.
    pub fn rotate_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// Left-multiplicative update `exp(ξ) ∘ self`, where `exp(ξ)` is the
    /// similarity `(Exp(ω), v, e^σ)` acting in the target space.
    pub fn retract(&self, xi: &Twist) -> Pose {
        let delta_rot = UnitQuaternion::from_scaled_axis(xi.omega);
        let delta_scale = xi.sigma.exp();
        Pose {
            rotation: renormalize(delta_rot * self.rotation),
            translation: delta_scale * (delta_rot * self.translation) + xi.v,
            scale: delta_scale * self.scale,
            source: self.source.clone(),
            target: self.target.clone(),
        }
    }

    /// 4×4 homogeneous matrix `[sR t; 0 1]`.
    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&(self.rotation_matrix() * self.scale));
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    fn label(&self) -> String {
        format!("{}→{}", self.source, self.target)
    }
}

impl fmt::Debug for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let q = self.rotation.quaternion();
        write!(
            f,
            "Pose[{}→{}](q=[{:.6}, {:.6}, {:.6}, {:.6}], t=[{:.4}, {:.4}, {:.4}], s={:.6})",
            self.source,
            self.target,
            q.w,
            q.i,
            q.j,
            q.k,
            self.translation.x,
            self.translation.y,
            self.translation.z,
            self.scale
        )
    }
}

fn renormalize(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    let raw = q.into_inner();
    let n2 = raw.norm_squared();
    // already unit to the last bits: keep it so that encode/decode is exact
    if (n2 - 1.0).abs() <= 4.0 * f64::EPSILON {
        return UnitQuaternion::new_unchecked(raw);
    }
    UnitQuaternion::new_unchecked(raw / n2.sqrt())
}

/// Rotation vector (axis·angle) of `q`, angle in `[0, π]`.
///
/// Uses `atan2` so that small angles keep full relative precision and the
/// quaternion sign is folded to the shorter rotation.
pub fn rotation_log(q: &UnitQuaternion<f64>) -> Vector3<f64> {
    let w = q.scalar();
    let v = q.vector().into_owned();
    let n = v.norm();
    if n == 0.0 {
        return Vector3::zeros();
    }
    let sign = if w < 0.0 { -1.0 } else { 1.0 };
    let angle = 2.0 * n.atan2(w.abs());
    v * (sign * angle / n)
}

/// Tangent increment for [`Pose::retract`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Twist {
    /// Rotation vector, rad.
    pub omega: Vector3<f64>,
    /// Translation increment, mm.
    pub v: Vector3<f64>,
    /// Log-scale increment.
    pub sigma: f64,
}

impl Twist {
    pub fn zero() -> Self {
        Twist {
            omega: Vector3::zeros(),
            v: Vector3::zeros(),
            sigma: 0.0,
        }
    }

    pub fn rigid(omega: Vector3<f64>, v: Vector3<f64>) -> Self {
        Twist {
            omega,
            v,
            sigma: 0.0,
        }
    }

    /// Reads `[ω, v]` (6 values, scale frozen) or `[ω, v, σ]` (7 values).
    pub fn from_slice(xs: &[f64]) -> Option<Self> {
        if xs.len() != 6 && xs.len() != 7 {
            return None;
        }
        Some(Twist {
            omega: Vector3::new(xs[0], xs[1], xs[2]),
            v: Vector3::new(xs[3], xs[4], xs[5]),
            sigma: xs.get(6).copied().unwrap_or(0.0),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.omega.iter().chain(self.v.iter()).all(|x| x.is_finite()) && self.sigma.is_finite()
    }

    pub fn norm(&self) -> f64 {
        (self.omega.norm_squared() + self.v.norm_squared() + self.sigma * self.sigma).sqrt()
    }
}

/// Weights that bring rotation and log-scale errors into mm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualWeights {
    pub rho_mm_per_rad: f64,
    pub log_scale_mm: f64,
}

impl Default for ResidualWeights {
    fn default() -> Self {
        ResidualWeights {
            rho_mm_per_rad: DEFAULT_RHO_MM_PER_RAD,
            log_scale_mm: DEFAULT_RHO_MM_PER_RAD,
        }
    }
}

impl ResidualWeights {
    pub fn with_rho(rho_mm_per_rad: f64) -> Self {
        ResidualWeights {
            rho_mm_per_rad,
            ..Default::default()
        }
    }
}

/// Difference between a predicted and a measured pose, in mm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseResidual {
    pub translation: Vector3<f64>,
    pub rotation: Vector3<f64>,
    pub log_scale: Option<f64>,
}

impl PoseResidual {
    pub fn len(&self) -> usize {
        if self.log_scale.is_some() {
            7
        } else {
            6
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn extend_into(&self, out: &mut Vec<f64>) {
        out.extend(self.translation.iter());
        out.extend(self.rotation.iter());
        if let Some(s) = self.log_scale {
            out.push(s);
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        self.extend_into(&mut out);
        out
    }

    pub fn norm_squared(&self) -> f64 {
        self.translation.norm_squared()
            + self.rotation.norm_squared()
            + self.log_scale.map_or(0.0, |s| s * s)
    }
}

/// `[t_pred − t_meas; ρ·log(R_measᵀ R_pred); (ρ_s·ln(s_pred/s_meas))]`.
pub fn pose_residual(
    pred: &Pose,
    meas: &Pose,
    weights: ResidualWeights,
    scale_free: bool,
) -> Result<PoseResidual, GeomError> {
    if pred.source != meas.source || pred.target != meas.target {
        return Err(GeomError::LabelMismatch(pred.label(), meas.label()));
    }
    let (qp, qm) = (&pred.rotation.coords, &meas.rotation.coords);
    let rotation = if qp == qm || *qp == -qm {
        Vector3::zeros()
    } else {
        rotation_log(&(meas.rotation.inverse() * pred.rotation)) * weights.rho_mm_per_rad
    };
    let translation = pred.translation - meas.translation;
    let log_scale = scale_free.then(|| weights.log_scale_mm * (pred.scale / meas.scale).ln());
    let out = PoseResidual {
        translation,
        rotation,
        log_scale,
    };
    if !(out.norm_squared().is_finite()) {
        return Err(GeomError::NonFinite("pose residual"));
    }
    Ok(out)
}

/// Wire form shared by every file format that embeds a pose.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseJson {
    pub q_wxyz: [f64; 4],
    pub t_mm: [f64; 3],
    pub s: f64,
    pub source: String,
    pub target: String,
}

impl TryFrom<PoseJson> for Pose {
    type Error = GeomError;

    fn try_from(j: PoseJson) -> Result<Self, Self::Error> {
        let [w, x, y, z] = j.q_wxyz;
        Pose::new(
            Quaternion::new(w, x, y, z),
            Vector3::from(j.t_mm),
            j.s,
            j.source,
            j.target,
        )
    }
}

impl From<Pose> for PoseJson {
    fn from(p: Pose) -> Self {
        let q = p.rotation.quaternion();
        PoseJson {
            q_wxyz: [q.w, q.i, q.j, q.k],
            t_mm: [p.translation.x, p.translation.y, p.translation.z],
            s: p.scale,
            source: p.source.to_string(),
            target: p.target.to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn rotz(angle: f64) -> UnitQuaternion<f64> {
        UnitQuaternion::from_axis_angle(&Vector3::z_axis(), angle)
    }

    fn random_pose(rng: &mut ChaCha8Rng, source: &str, target: &str) -> Pose {
        let q = Quaternion::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let t = Vector3::new(
            rng.random_range(-500.0..500.0),
            rng.random_range(-500.0..500.0),
            rng.random_range(-500.0..500.0),
        );
        Pose::new(q, t, rng.random_range(0.2..5.0), source, target).unwrap()
    }

    fn random_point(rng: &mut ChaCha8Rng) -> Point3<f64> {
        Point3::new(
            rng.random_range(-100.0..100.0),
            rng.random_range(-100.0..100.0),
            rng.random_range(-100.0..100.0),
        )
    }

    /// Homogeneous-matrix action, independent of the quaternion path.
    fn matrix_action(p: &Pose, x: &Point3<f64>) -> Point3<f64> {
        Point3::from_homogeneous(p.to_matrix() * x.to_homogeneous()).unwrap()
    }

    #[test]
    fn identity_composition_is_neutral() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_pose(&mut rng, "a", "b");
        let left = Pose::identity("b").compose(&p).unwrap();
        let right = p.compose(&Pose::identity("a")).unwrap();
        assert_eq!(left.source().as_str(), "a");
        for x in (0..10).map(|_| random_point(&mut rng)) {
            assert!((left.transform_point(&x) - p.transform_point(&x)).norm() < 1e-9);
            assert!((right.transform_point(&x) - p.transform_point(&x)).norm() < 1e-9);
        }
    }

    #[test]
    fn compose_scaled_translations() {
        let a = Pose::from_parts(UnitQuaternion::identity(), Vector3::new(1.0, 0.0, 0.0), 2.0, "b", "c")
            .unwrap();
        let b = Pose::from_parts(UnitQuaternion::identity(), Vector3::new(0.0, 1.0, 0.0), 3.0, "a", "b")
            .unwrap();
        let ab = a.compose(&b).unwrap();
        assert_eq!(ab.scale(), 6.0);
        assert!((ab.translation() - Vector3::new(1.0, 2.0, 0.0)).norm() < 1e-15);
        assert_eq!(ab.source().as_str(), "a");
        assert_eq!(ab.target().as_str(), "c");

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let worst = (0..100)
            .map(|_| random_point(&mut rng))
            .map(|x| (ab.transform_point(&x) - a.transform_point(&b.transform_point(&x))).norm())
            .fold(0.0, f64::max);
        assert!(worst < 1e-9);
    }

    #[test]
    fn compose_rotation_then_translation() {
        let a = Pose::rigid(rotz(FRAC_PI_2), Vector3::zeros(), "b", "c").unwrap();
        let b = Pose::rigid(UnitQuaternion::identity(), Vector3::new(1.0, 0.0, 0.0), "a", "b").unwrap();
        let ab = a.compose(&b).unwrap();
        assert!((ab.translation() - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-15);
        assert!(ab.rotation().angle_to(&rotz(FRAC_PI_2)) < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for x in (0..100).map(|_| random_point(&mut rng)) {
            assert!((ab.transform_point(&x) - a.transform_point(&b.transform_point(&x))).norm() < 1e-9);
        }
    }

    #[test]
    fn compose_rejects_broken_chain() {
        let a = Pose::identity_between("x", "y");
        let b = Pose::identity_between("p", "q");
        assert!(matches!(a.compose(&b), Err(GeomError::LabelChain { .. })));
    }

    #[test]
    fn inverse_examples() {
        let id = Pose::identity("w").inverse();
        assert_eq!(id.scale(), 1.0);
        assert_eq!(id.translation(), &Vector3::zeros());

        let p = Pose::from_parts(UnitQuaternion::identity(), Vector3::new(4.0, 0.0, 0.0), 2.0, "a", "b")
            .unwrap();
        let inv = p.inverse();
        assert_eq!(inv.scale(), 0.5);
        assert!((inv.translation() - Vector3::new(-2.0, 0.0, 0.0)).norm() < 1e-15);
        assert_eq!(inv.source().as_str(), "b");

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let p = random_pose(&mut rng, "a", "b");
            let round = p.compose(&p.inverse()).unwrap();
            for x in (0..100).map(|_| random_point(&mut rng)) {
                assert!((round.transform_point(&x) - x).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn transform_point_matches_homogeneous_matrix() {
        let p = Pose::from_parts(rotz(FRAC_PI_2), Vector3::new(1.0, 0.0, 0.0), 2.0, "a", "b").unwrap();
        let x = Point3::new(1.0, 0.0, 0.0);
        let got = p.transform_point(&x);
        assert!((got - Point3::new(1.0, 2.0, 0.0)).norm() < 1e-12);
        assert!((got - matrix_action(&p, &x)).norm() < 1e-12);

        let id = Pose::identity("a");
        assert_eq!(id.transform_point(&Point3::new(1.0, 2.0, 3.0)), Point3::new(1.0, 2.0, 3.0));
        let shift = Pose::rigid(UnitQuaternion::identity(), Vector3::new(0.0, 0.0, 5.0), "a", "b").unwrap();
        assert_eq!(shift.transform_point(&Point3::origin()), Point3::new(0.0, 0.0, 5.0));
    }

    #[test]
    fn associativity_and_homomorphism() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let a = random_pose(&mut rng, "c", "d");
            let b = random_pose(&mut rng, "b", "c");
            let c = random_pose(&mut rng, "a", "b");
            let left = a.compose(&b).unwrap().compose(&c).unwrap();
            let right = a.compose(&b.compose(&c).unwrap()).unwrap();
            let ab = a.compose(&b).unwrap();
            for x in (0..100).map(|_| random_point(&mut rng)) {
                let l = left.transform_point(&x);
                assert!((l - right.transform_point(&x)).norm() < 1e-9);
                let y = c.transform_point(&x);
                assert!((ab.transform_point(&y) - a.transform_point(&b.transform_point(&y))).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn retract_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = random_pose(&mut rng, "a", "b");
        assert_eq!(p.retract(&Twist::zero()), p);

        let id = Pose::identity("w");
        let shifted = id.retract(&Twist::rigid(Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0)));
        assert_eq!(shifted.translation(), &Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(shifted.rotation(), &UnitQuaternion::identity());

        let turned = id.retract(&Twist::rigid(Vector3::new(0.0, 0.0, FRAC_PI_2), Vector3::zeros()));
        // axis-angle oracle: q = (cos θ/2, 0, 0, sin θ/2)
        let half = FRAC_PI_2 / 2.0;
        let q = turned.rotation().quaternion();
        assert!((q.w - half.cos()).abs() < 1e-9 && (q.k - half.sin()).abs() < 1e-9);
        assert!(q.i.abs() < 1e-12 && q.j.abs() < 1e-12);
    }

    #[test]
    fn retract_is_first_order_smooth() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = random_pose(&mut rng, "a", "b");
        let dir = [0.3, -0.2, 0.5, 1.0, -0.4, 0.7, 0.1];
        let x = Point3::new(10.0, -20.0, 30.0);
        let mut prev = f64::INFINITY;
        for k in 3..8 {
            let h = 10f64.powi(-k);
            let xi = Twist::from_slice(&dir.map(|d| d * h)).unwrap();
            let dev = (p.retract(&xi).transform_point(&x) - p.transform_point(&x)).norm();
            assert!(dev < prev);
            // first-order: deviation shrinks linearly with |ξ|
            assert!(dev < 1e3 * xi.norm());
            prev = dev;
        }
    }

    #[test]
    fn residual_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = random_pose(&mut rng, "a", "b");
        let r = pose_residual(&p, &p, ResidualWeights::default(), false).unwrap();
        assert_eq!(r.to_vec(), vec![0.0; 6]);

        let meas = Pose::identity_between("a", "b");
        let pred = Pose::rigid(UnitQuaternion::identity(), Vector3::new(1.0, 0.0, 0.0), "a", "b").unwrap();
        let r = pose_residual(&pred, &meas, ResidualWeights::default(), false).unwrap();
        assert_eq!(r.to_vec(), vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);

        let pred = Pose::rigid(rotz(0.01), Vector3::zeros(), "a", "b").unwrap();
        let r = pose_residual(&pred, &meas, ResidualWeights::with_rho(100.0), false).unwrap();
        let v = r.to_vec();
        // matrix-log oracle: for a z rotation the log is the angle on the z axis
        let m = pred.rotation_matrix();
        let oracle = m[(1, 0)].atan2(m[(0, 0)]) * 100.0;
        assert!((v[5] - oracle).abs() < 1e-12);
        assert!((v[5] - 1.0).abs() < 1e-12);
        assert!(v[..5].iter().all(|c| c.abs() < 1e-15));
    }

    #[test]
    fn residual_folds_quaternion_sign_and_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let a = random_pose(&mut rng, "a", "b");
            let b = random_pose(&mut rng, "a", "b");
            let w = ResidualWeights::default();
            let ab = pose_residual(&a, &b, w, true).unwrap().norm_squared().sqrt();
            let ba = pose_residual(&b, &a, w, true).unwrap().norm_squared().sqrt();
            assert!((ab - ba).abs() < 1e-9 * ab.max(1.0));

            let q = a.rotation().into_inner();
            let flipped = Pose::new(-q, *a.translation(), a.scale(), "a", "b").unwrap();
            let r = pose_residual(&flipped, &a, w, true).unwrap();
            assert_eq!(r.norm_squared(), 0.0);
        }
    }

    #[test]
    fn residual_rejects_label_mismatch() {
        let a = Pose::identity_between("a", "b");
        let b = Pose::identity_between("a", "c");
        assert!(pose_residual(&a, &b, ResidualWeights::default(), false).is_err());
    }

    #[test]
    fn constructor_normalizes_and_validates() {
        let p = Pose::new(Quaternion::new(2.0, 0.0, 0.0, 0.0), Vector3::zeros(), 1.0, "a", "b").unwrap();
        assert!((p.rotation().quaternion().norm() - 1.0).abs() < 1e-15);
        assert!(Pose::new(Quaternion::new(0.0, 0.0, 0.0, 0.0), Vector3::zeros(), 1.0, "a", "b").is_err());
        assert!(Pose::new(Quaternion::identity(), Vector3::zeros(), 0.0, "a", "b").is_err());
        assert!(Pose::new(Quaternion::identity(), Vector3::new(f64::NAN, 0.0, 0.0), 1.0, "a", "b").is_err());
    }

    #[test]
    fn json_encoding_shape() {
        let p = Pose::from_parts(rotz(0.3), Vector3::new(1.5, -2.0, 3.25), 1.0, "camera", "pattern").unwrap();
        let text = serde_json::to_string(&p).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["source"], "camera");
        assert_eq!(v["t_mm"][2], 3.25);
        assert_eq!(v["q_wxyz"].as_array().unwrap().len(), 4);
        let back: Pose = serde_json::from_str(&text).unwrap();
        assert_eq!(back, p);

        let bad = r#"{"q_wxyz":[1,0,0,0],"t_mm":[0,0,0],"s":1,"source":"a","target":"b","extra":1}"#;
        assert!(serde_json::from_str::<Pose>(bad).is_err());
    }
}
