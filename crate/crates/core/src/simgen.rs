//! Synthetic datasets: a virtual arm moving a camera over a cube that sits on
//! the calibration pattern, with known extrinsics, injected SLAM scale and
//! optional noise.
//!
//! The ground-truth depth here comes from an analytic ray/box slab test, not
//! from the triangle raycaster, so the two paths can check each other.

use std::path::{Path, PathBuf};

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calib::{predict_camera_pose, CalibSample};
use crate::error::Result;
use crate::eval::KeyFrame;
use crate::formats::{self, roles, Manifest, RasterDtype};
use crate::geom::{spaces, Pose, Twist};
use crate::kinematics::{ArmModel, JointAngles, JOINT_COUNT};
use crate::raster::{DepthMap, Mask};
use crate::raycast::{pixel_ray, Intrinsics, TriMesh};
use crate::sync::{FrameLog, FrameRecord, JointLog, JointSample};

const DEFAULT_SIM_JSON: &str = include_str!("../config/sim_default.json");
const NS_PER_S: f64 = 1e9;
/// Allowed slack when checking that a duration holds a whole number of ticks.
const TICK_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("need at least 2 waypoints, got {0}")]
    TooFewWaypoints(usize),
    #[error("segment duration {duration_s} s is not a whole number of ticks at {rate_hz} Hz")]
    ConflictingRates { duration_s: f64, rate_hz: f64 },
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CubeSpec {
    pub side_mm: f64,
    /// Centre of the bottom face on the pattern plane.
    pub center_xy_mm: [f64; 2],
    /// Rotation about the pattern normal.
    pub yaw_rad: f64,
}

impl CubeSpec {
    /// cube-local (`[0, side]³`) → pattern. The bottom face lies on z = 0.
    pub fn pose(&self) -> Pose {
        let rot = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), self.yaw_rad);
        let half = Vector3::new(self.side_mm / 2.0, self.side_mm / 2.0, 0.0);
        let centre = Vector3::new(self.center_xy_mm[0], self.center_xy_mm[1], 0.0);
        Pose::rigid(rot, centre - rot * half, "cube", spaces::PATTERN).expect("finite cube pose")
    }

    pub fn mesh(&self) -> Result<TriMesh> {
        Ok(TriMesh::cube(self.side_mm, &self.pose())?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub depth_sigma_mm: f64,
    pub pose_sigma_t_mm: f64,
    pub pose_sigma_r_rad: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyframeSpec {
    pub count: usize,
    /// Independently noised revisions stored per keyframe.
    pub revisions: u32,
    /// Width of the silhouette band kept as semi-dense support, px.
    pub edge_band_px: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibSpec {
    pub count: usize,
    /// Per-joint uniform spread around the first waypoint.
    pub joint_spread_rad: f64,
    pub sigma_t_mm: f64,
    pub sigma_r_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// DH table file, relative to the config file. The shipped table when
    /// absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arm_model: Option<PathBuf>,
    /// sawyer → pattern.
    pub t1: Pose,
    /// camera → gripper.
    pub t2: Pose,
    pub cube: CubeSpec,
    pub intrinsics: Intrinsics,
    pub waypoints_rad: Vec<JointAngles>,
    pub segment_duration_s: f64,
    pub joint_rate_hz: f64,
    pub frame_rate_hz: f64,
    pub keyframes: KeyframeSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    pub calibration: CalibSpec,
    pub slam_scale: f64,
    pub seed: u64,
}

impl SimConfig {
    /// The shipped desk-scale scene (`config/sim_default.json`).
    pub fn desk_default() -> Self {
        serde_json::from_str(DEFAULT_SIM_JSON).expect("shipped sim config parses")
    }

    pub fn validate(&self) -> std::result::Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if self.waypoints_rad.len() < 2 {
            return Err(SimError::TooFewWaypoints(self.waypoints_rad.len()));
        }
        for (name, v) in [
            ("segment_duration_s", self.segment_duration_s),
            ("joint_rate_hz", self.joint_rate_hz),
            ("frame_rate_hz", self.frame_rate_hz),
            ("slam_scale", self.slam_scale),
            ("cube.side_mm", self.cube.side_mm),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("noise.depth_sigma_mm", self.noise.depth_sigma_mm),
            ("noise.pose_sigma_t_mm", self.noise.pose_sigma_t_mm),
            ("noise.pose_sigma_r_rad", self.noise.pose_sigma_r_rad),
            ("calibration.sigma_t_mm", self.calibration.sigma_t_mm),
            ("calibration.sigma_r_rad", self.calibration.sigma_r_rad),
            ("calibration.joint_spread_rad", self.calibration.joint_spread_rad),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        for rate in [self.joint_rate_hz, self.frame_rate_hz] {
            ticks_per_segment(self.segment_duration_s, rate)?;
        }
        check_labels("t1", &self.t1, spaces::SAWYER, spaces::PATTERN)?;
        check_labels("t2", &self.t2, spaces::CAMERA, spaces::GRIPPER)?;
        if self.keyframes.count == 0 || self.keyframes.revisions == 0 || self.keyframes.edge_band_px == 0 {
            return bad("keyframes.count, revisions and edge_band_px must be at least 1".into());
        }
        let frames = self.frame_count();
        if self.keyframes.count > frames {
            return bad(format!("{} keyframes requested from {frames} frames", self.keyframes.count));
        }
        Ok(())
    }

    fn frame_count(&self) -> usize {
        let per = ticks_per_segment(self.segment_duration_s, self.frame_rate_hz).unwrap_or(0);
        per * (self.waypoints_rad.len().max(1) - 1) + 1
    }

    /// Resolves `arm_model` against `base_dir`.
    pub fn load_arm(&self, base_dir: &Path) -> Result<ArmModel> {
        match &self.arm_model {
            Some(p) => Ok(formats::read_arm_model(&base_dir.join(p))?),
            None => Ok(ArmModel::default_synthetic()),
        }
    }
}

fn check_labels(name: &str, pose: &Pose, source: &str, target: &str) -> std::result::Result<(), SimError> {
    if pose.source().as_str() != source || pose.target().as_str() != target || !pose.is_rigid() {
        return Err(SimError::InvalidConfig(format!("{name} must be a rigid {source} → {target} pose")));
    }
    Ok(())
}

fn ticks_per_segment(duration_s: f64, rate_hz: f64) -> std::result::Result<usize, SimError> {
    let ticks = duration_s * rate_hz;
    let whole = ticks.round();
    if (ticks - whole).abs() > TICK_TOLERANCE || whole < 1.0 {
        return Err(SimError::ConflictingRates { duration_s, rate_hz });
    }
    Ok(whole as usize)
}

fn tick_ns(i: usize, rate_hz: f64) -> i64 {
    (i as f64 * NS_PER_S / rate_hz).round() as i64
}

/// Joint angles at `t_ns` on the piecewise-linear waypoint path.
pub fn trajectory_angles(cfg: &SimConfig, t_ns: i64) -> JointAngles {
    let seg_ns = (cfg.segment_duration_s * NS_PER_S).round() as i64;
    let last = cfg.waypoints_rad.len() - 2;
    let k = ((t_ns.max(0) / seg_ns) as usize).min(last);
    let f = (t_ns - k as i64 * seg_ns) as f64 / seg_ns as f64;
    if f == 0.0 {
        return cfg.waypoints_rad[k];
    }
    cfg.waypoints_rad[k].lerp(&cfg.waypoints_rad[k + 1], f)
}

/// Joint log at the joint rate and frame log at the frame rate, both starting
/// at t = 0 and ending on the last waypoint.
pub fn generate_trajectory(cfg: &SimConfig) -> Result<(JointLog, FrameLog)> {
    cfg.validate()?;
    let segments = cfg.waypoints_rad.len() - 1;
    let joint_n = ticks_per_segment(cfg.segment_duration_s, cfg.joint_rate_hz)? * segments + 1;
    let frame_n = ticks_per_segment(cfg.segment_duration_s, cfg.frame_rate_hz)? * segments + 1;
    let joints = (0..joint_n)
        .map(|i| {
            let t_ns = tick_ns(i, cfg.joint_rate_hz);
            JointSample { t_ns, angles: trajectory_angles(cfg, t_ns) }
        })
        .collect();
    let frames = (0..frame_n).map(|i| FrameRecord { t_ns: tick_ns(i, cfg.frame_rate_hz), frame_id: i as u64 }).collect();
    Ok((JointLog::new(joints)?, FrameLog::new(frames)?))
}

/// Hidden truth stored next to each synthetic keyframe.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyframeTruth {
    pub kf_id: u64,
    pub revision: u32,
    pub t_ns: i64,
    pub angles: JointAngles,
    /// camera → pattern.
    pub pose_true: Pose,
    /// z-depth of every pixel that sees the cube, NaN elsewhere.
    pub depth: DepthMap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthKeyframe {
    pub keyframe: KeyFrame,
    pub truth: KeyframeTruth,
}

impl SynthKeyframe {
    pub fn is_empty(&self) -> bool {
        self.keyframe.feature_count() == 0
    }
}

/// Everything the generator produces, in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: SimConfig,
    pub arm: ArmModel,
    pub mesh: TriMesh,
    pub joint_log: JointLog,
    pub frame_log: FrameLog,
    pub calib_samples: Vec<CalibSample>,
    pub keyframes: Vec<KeyFrame>,
    pub truth: Vec<KeyframeTruth>,
    pub warnings: Vec<String>,
}

/// A validated scene with its arm model.
#[derive(Debug, Clone)]
pub struct Simulator {
    cfg: SimConfig,
    arm: ArmModel,
    cube_from_pattern: Pose,
}

impl Simulator {
    pub fn new(cfg: SimConfig, arm: ArmModel) -> Result<Self> {
        cfg.validate()?;
        let cube_from_pattern = cfg.cube.pose().inverse();
        Ok(Simulator { cfg, arm, cube_from_pattern })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn arm(&self) -> &ArmModel {
        &self.arm
    }

    /// camera → pattern for joint angles `a`.
    pub fn true_camera_pose(&self, a: &JointAngles) -> Result<Pose> {
        Ok(predict_camera_pose(&self.cfg.t1, &self.cfg.t2, &self.arm, a)?)
    }

    /// z-depth of the cube from `camera_to_pattern` via the slab test.
    pub fn truth_depth(&self, camera_to_pattern: &Pose) -> Result<DepthMap> {
        let k = &self.cfg.intrinsics;
        let to_cube = self.cube_from_pattern.compose(camera_to_pattern)?;
        let side = self.cfg.cube.side_mm;
        let mut out = DepthMap::invalid(k.width, k.height);
        for p in 0..k.height {
            for q in 0..k.width {
                let ray = pixel_ray(k, p as f64, q as f64)?;
                let o = to_cube.transform_point(&ray.origin);
                let d = to_cube.rotate_vector(&ray.dir);
                if let Some(t) = slab_hit(&o.coords, &d, side) {
                    *out.at_mut(p, q) = t * ray.dir.z;
                }
            }
        }
        Ok(out)
    }

    /// Hit pixels within `edge_band_px` (Chebyshev) of a pixel that misses.
    pub fn edge_band(&self, depth: &DepthMap) -> Mask {
        let band = self.cfg.keyframes.edge_band_px as isize;
        let (w, h) = (depth.width() as isize, depth.height() as isize);
        Mask::from_fn(depth.width(), depth.height(), |p, q| {
            if depth.at(p, q).is_nan() {
                return false;
            }
            let (p, q) = (p as isize, q as isize);
            for pp in (p - band).max(0)..=(p + band).min(h - 1) {
                for qq in (q - band).max(0)..=(q + band).min(w - 1) {
                    if depth.at(pp as usize, qq as usize).is_nan() {
                        return true;
                    }
                }
            }
            false
        })
    }

    /// Builds one keyframe revision at joint angles `a`. Noise is drawn from
    /// `rng` in a fixed order: per masked pixel depth, then pose.
    pub fn synthesize_keyframe(
        &self,
        a: &JointAngles,
        kf_id: u64,
        revision: u32,
        t_ns: i64,
        rng: &mut ChaCha8Rng,
    ) -> Result<SynthKeyframe> {
        let pose_true = self.true_camera_pose(a)?;
        let depth = self.truth_depth(&pose_true)?;
        let mask = self.edge_band(&depth);
        let s = self.cfg.slam_scale;
        let sigma = self.cfg.noise.depth_sigma_mm;
        let depth_noise = normal(sigma);
        let mut idepth = DepthMap::filled(depth.width(), depth.height(), 0.0);
        let mut ivar = DepthMap::filled(depth.width(), depth.height(), 0.0);
        for p in 0..depth.height() {
            for q in 0..depth.width() {
                if !*mask.at(p, q) {
                    continue;
                }
                let d = *depth.at(p, q) + depth_noise.sample(rng);
                if d > 0.0 {
                    let inv = s / d;
                    *idepth.at_mut(p, q) = inv;
                    *ivar.at_mut(p, q) = sigma * sigma * inv.powi(4);
                }
            }
        }
        let noisy = perturb(&pose_true, self.cfg.noise.pose_sigma_t_mm, self.cfg.noise.pose_sigma_r_rad, rng)?;
        let to_slam = Pose::from_parts(UnitQuaternion::identity(), Vector3::zeros(), 1.0 / s, spaces::PATTERN, spaces::SLAM)?;
        let pose_est = to_slam.compose(&noisy)?;
        let keyframe = KeyFrame::new(kf_id, revision, t_ns, pose_est, idepth, ivar, self.cfg.intrinsics)?;
        Ok(SynthKeyframe { keyframe, truth: KeyframeTruth { kf_id, revision, t_ns, angles: *a, pose_true, depth } })
    }

    /// Camera poses at `count` stops scattered around the first waypoint.
    pub fn calibration_samples(&self, rng: &mut ChaCha8Rng) -> Result<Vec<CalibSample>> {
        let c = &self.cfg.calibration;
        let home = self.cfg.waypoints_rad[0];
        let mut out = Vec::with_capacity(c.count);
        for i in 0..c.count {
            let mut a = *home.as_array();
            if c.joint_spread_rad > 0.0 {
                for x in a.iter_mut() {
                    *x += rng.random_range(-c.joint_spread_rad..c.joint_spread_rad);
                }
            }
            let angles = JointAngles::new(a)?;
            let truth = self.true_camera_pose(&angles)?;
            let pose_calib = perturb(&truth, c.sigma_t_mm, c.sigma_r_rad, rng)?;
            out.push(CalibSample { t_ns: i as i64 * 1_000_000_000, angles, pose_calib });
        }
        Ok(out)
    }

    /// Frame indices chosen as keyframes, spread evenly over the log.
    pub fn keyframe_frames(&self, frames: &FrameLog) -> Vec<usize> {
        let n = frames.len();
        let k = self.cfg.keyframes.count;
        if k == 1 {
            return vec![0];
        }
        (0..k).map(|i| i * (n - 1) / (k - 1)).collect()
    }

    pub fn simulate(&self) -> Result<Dataset> {
        let (joint_log, frame_log) = generate_trajectory(&self.cfg)?;
        let mut kf_rng = stream(self.cfg.seed, 1);
        let mut calib_rng = stream(self.cfg.seed, 2);
        let mut keyframes = Vec::new();
        let mut truth = Vec::new();
        let mut warnings = Vec::new();
        for (kf_id, &fi) in self.keyframe_frames(&frame_log).iter().enumerate() {
            let t_ns = frame_log.frames()[fi].t_ns;
            let a = trajectory_angles(&self.cfg, t_ns);
            for revision in 0..self.cfg.keyframes.revisions {
                let kf = self.synthesize_keyframe(&a, kf_id as u64, revision, t_ns, &mut kf_rng)?;
                if kf.is_empty() {
                    warnings.push(format!("keyframe {kf_id} revision {revision}: no pixel sees the cube"));
                }
                keyframes.push(kf.keyframe);
                truth.push(kf.truth);
            }
        }
        Ok(Dataset {
            config: self.cfg.clone(),
            arm: self.arm.clone(),
            mesh: self.cfg.cube.mesh()?,
            joint_log,
            frame_log,
            calib_samples: self.calibration_samples(&mut calib_rng)?,
            keyframes,
            truth,
            warnings,
        })
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn normal(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma).expect("sigma validated non-negative")
}

/// `P ∘ Exp(ω, v)` with the increment in the camera frame, so σ_t is a
/// displacement of the camera centre and σ_r a rotation about it.
fn perturb(pose: &Pose, sigma_t: f64, sigma_r: f64, rng: &mut ChaCha8Rng) -> Result<Pose> {
    let (nt, nr) = (normal(sigma_t), normal(sigma_r));
    let omega = Vector3::from_fn(|_, _| nr.sample(rng));
    let v = Vector3::from_fn(|_, _| nt.sample(rng));
    let local = pose.source().clone();
    let delta = Pose::identity(local).retract(&Twist::rigid(omega, v));
    Ok(pose.compose(&delta)?)
}

/// Entry distance of the ray `o + t·d` into the box `[0, side]³`.
fn slab_hit(o: &Vector3<f64>, d: &Vector3<f64>, side: f64) -> Option<f64> {
    let (mut t_near, mut t_far) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..3 {
        if d[i] == 0.0 {
            if o[i] < 0.0 || o[i] > side {
                return None;
            }
            continue;
        }
        let (a, b) = ((0.0 - o[i]) / d[i], (side - o[i]) / d[i]);
        t_near = t_near.max(a.min(b));
        t_far = t_far.min(a.max(b));
    }
    if t_near > t_far || t_far < 0.0 {
        return None;
    }
    Some(if t_near >= 0.0 { t_near } else { t_far })
}

/// Sidecar line in `truth/keyframes.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthRecord {
    pub kf_id: u64,
    pub revision: u32,
    pub t_ns: i64,
    pub angles_rad: JointAngles,
    pub pose_true: Pose,
    pub depth: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthExtrinsics {
    pub t1: Pose,
    pub t2: Pose,
    pub slam_scale: f64,
}

pub mod files {
    pub const ARM: &str = "arm.json";
    pub const INTRINSICS: &str = "intrinsics.json";
    pub const JOINTS: &str = "joints.jsonl";
    pub const FRAMES: &str = "frames.jsonl";
    pub const CALIB_SAMPLES: &str = "calib_samples.jsonl";
    pub const MESH: &str = "cube.obj";
    pub const KEYFRAMES: &str = "keyframes.jsonl";
    pub const TRUTH_KEYFRAMES: &str = "truth/keyframes.jsonl";
    pub const TRUTH_EXTRINSICS: &str = "truth/extrinsics.json";
    pub const MANIFEST: &str = "manifest.json";
}

impl Dataset {
    /// Writes every file plus `manifest.json` under `out_dir`.
    pub fn write(&self, out_dir: &Path) -> Result<Manifest> {
        let mut listed: Vec<(String, &str)> = Vec::new();
        let at = |name: &str| out_dir.join(name);

        formats::write_json(&at(files::ARM), &self.arm)?;
        listed.push((files::ARM.into(), roles::ARM));
        formats::write_json(&at(files::INTRINSICS), &self.config.intrinsics)?;
        listed.push((files::INTRINSICS.into(), roles::INTRINSICS));
        formats::write_joint_log(&at(files::JOINTS), &self.joint_log)?;
        listed.push((files::JOINTS.into(), roles::JOINT_LOG));
        formats::write_frame_log(&at(files::FRAMES), &self.frame_log)?;
        listed.push((files::FRAMES.into(), roles::FRAME_LOG));
        formats::write_jsonl(&at(files::CALIB_SAMPLES), &self.calib_samples)?;
        listed.push((files::CALIB_SAMPLES.into(), roles::CALIB_SAMPLES));
        formats::write_mesh(&at(files::MESH), &self.mesh)?;
        listed.push((files::MESH.into(), roles::MESH));

        let written = formats::write_keyframes(&at(files::KEYFRAMES), &self.keyframes)?;
        let mut written = written.into_iter();
        listed.push((written.next().expect("index path"), roles::KEYFRAMES));
        listed.extend(written.map(|p| (p, roles::KEYFRAME_RASTER)));

        let mut records = Vec::with_capacity(self.truth.len());
        for t in &self.truth {
            let rel = format!("truth/kf{:04}_r{}.depth.bin", t.kf_id, t.revision);
            formats::write_depth_raster(&at(&rel), &t.depth, "mm", RasterDtype::F64)?;
            let side = formats::path_string(&formats::sidecar_path(Path::new(&rel)));
            records.push(TruthRecord {
                kf_id: t.kf_id,
                revision: t.revision,
                t_ns: t.t_ns,
                angles_rad: t.angles,
                pose_true: t.pose_true.clone(),
                depth: rel.clone(),
            });
            listed.push((rel, roles::TRUTH));
            listed.push((side, roles::TRUTH));
        }
        formats::write_jsonl(&at(files::TRUTH_KEYFRAMES), &records)?;
        listed.push((files::TRUTH_KEYFRAMES.into(), roles::TRUTH));
        let extr = TruthExtrinsics { t1: self.config.t1.clone(), t2: self.config.t2.clone(), slam_scale: self.config.slam_scale };
        formats::write_json(&at(files::TRUTH_EXTRINSICS), &extr)?;
        listed.push((files::TRUTH_EXTRINSICS.into(), roles::TRUTH));

        let echo = serde_json::to_value(&self.config).expect("config serializes");
        let manifest = Manifest::build(out_dir, &listed, self.config.seed, echo)?;
        formats::write_json(&at(files::MANIFEST), &manifest)?;
        Ok(manifest)
    }
}

/// Simulates `cfg` and writes the dataset to `out_dir`.
pub fn generate_dataset(cfg: &SimConfig, arm: &ArmModel, out_dir: &Path) -> Result<Manifest> {
    Simulator::new(cfg.clone(), arm.clone())?.simulate()?.write(out_dir)
}

/// Reads a config file and the arm model it refers to.
pub fn load_config(path: &Path) -> Result<(SimConfig, ArmModel)> {
    let cfg: SimConfig = formats::read_json(path)?;
    let arm = cfg.load_arm(path.parent().unwrap_or(Path::new("")))?;
    Ok((cfg, arm))
}

/// Home pose of the shipped scene: camera about 450 mm above the cube.
pub const HOME_RAD: [f64; JOINT_COUNT] = [0.2, 0.75, 0.0, -1.35, 0.0, 1.05, 0.3];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{apply_scale, keyframe_scale, point_depth_errors, ScaleMethod};
    use crate::raycast::{ground_truth_depth_map, DepthConvention};

    fn small() -> SimConfig {
        let mut c = SimConfig::desk_default();
        c.keyframes.count = 3;
        c.calibration.count = 4;
        c
    }

    fn two_point(duration: f64) -> SimConfig {
        let mut c = small();
        c.waypoints_rad = vec![JointAngles::new(HOME_RAD).unwrap(); 2];
        c.waypoints_rad[1] = JointAngles::new([0.3, 0.7, 0.1, -1.3, 0.1, 1.0, 0.2]).unwrap();
        c.segment_duration_s = duration;
        c
    }

    #[test]
    fn trajectory_fence_posts() {
        let (j, f) = generate_trajectory(&two_point(1.0)).unwrap();
        assert_eq!(j.len(), 101);
        assert_eq!(f.len(), 26);
        let (a, b) = j.span().unwrap();
        assert!(f.frames().iter().all(|fr| a <= fr.t_ns && fr.t_ns <= b));
        assert_eq!(j.samples()[100].t_ns, 1_000_000_000);
    }

    #[test]
    fn identical_waypoints_give_constant_log() {
        let mut c = two_point(1.0);
        c.waypoints_rad[1] = c.waypoints_rad[0];
        let (j, _) = generate_trajectory(&c).unwrap();
        assert!(j.samples().iter().all(|s| s.angles == c.waypoints_rad[0]));
    }

    #[test]
    fn config_errors() {
        let mut c = two_point(1.0);
        c.waypoints_rad.clear();
        assert!(matches!(generate_trajectory(&c), Err(crate::Error::Sim(SimError::TooFewWaypoints(0)))));
        let c = two_point(1.005);
        assert!(matches!(c.validate(), Err(SimError::ConflictingRates { .. })));
        let mut c = two_point(1.0);
        c.slam_scale = 0.0;
        assert!(c.validate().is_err());
        let mut c = two_point(1.0);
        c.t1 = c.t1.relabeled(spaces::PATTERN, spaces::SAWYER);
        assert!(c.validate().is_err());
    }

    #[test]
    fn slab_against_axis_rays() {
        let o = Vector3::new(5.0, 5.0, -10.0);
        assert_eq!(slab_hit(&o, &Vector3::z(), 10.0), Some(10.0));
        assert_eq!(slab_hit(&o, &-Vector3::z(), 10.0), None);
        assert_eq!(slab_hit(&Vector3::new(11.0, 5.0, -10.0), &Vector3::z(), 10.0), None);
    }

    #[test]
    fn cube_sits_on_pattern() {
        let c = SimConfig::desk_default();
        let m = c.cube.mesh().unwrap();
        let min_z = m.vertices().iter().map(|v| v.z).fold(f64::INFINITY, f64::min);
        assert!(min_z.abs() < 1e-12);
        let mean = m.vertices().iter().fold(Vector3::zeros(), |s, v| s + v.coords) / 8.0;
        assert!((mean.x - c.cube.center_xy_mm[0]).abs() < 1e-9 && (mean.y - c.cube.center_xy_mm[1]).abs() < 1e-9);
    }

    #[test]
    fn slab_truth_agrees_with_triangle_raycaster() {
        let sim = Simulator::new(small(), ArmModel::default_synthetic()).unwrap();
        let mesh = sim.config().cube.mesh().unwrap();
        for a in &sim.config().waypoints_rad {
            let pose = sim.true_camera_pose(a).unwrap();
            let slab = sim.truth_depth(&pose).unwrap();
            let tri = ground_truth_depth_map(&pose, &sim.config().intrinsics, &mesh, None, DepthConvention::ZDepth).unwrap();
            assert!(slab.valid_count() > 500, "cube barely visible: {}", slab.valid_count());
            for ((_, _, &x), &y) in slab.iter_pixels().zip(tri.data()) {
                assert_eq!(x.is_nan(), y.is_nan());
                if !x.is_nan() {
                    assert!((x - y).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn zero_noise_keyframe_inverts_exactly() {
        let mut cfg = small();
        cfg.slam_scale = 1.0;
        let sim = Simulator::new(cfg, ArmModel::default_synthetic()).unwrap();
        let a = sim.config().waypoints_rad[0];
        let kf = sim.synthesize_keyframe(&a, 0, 0, 0, &mut stream(0, 1)).unwrap();
        assert!(!kf.is_empty());
        let band = sim.edge_band(&kf.truth.depth);
        for (p, q, &inv) in kf.keyframe.idepth.iter_pixels() {
            if *band.at(p, q) {
                let d = *kf.truth.depth.at(p, q);
                assert!((1.0 / inv - d).abs() <= 4.0 * f64::EPSILON * d);
            } else {
                assert_eq!(inv, 0.0);
            }
        }
        assert!(kf.keyframe.feature_count() < kf.truth.depth.valid_count());
    }

    #[test]
    fn zero_noise_scale_is_recovered() {
        for s in [0.5, 2.0, 10.0] {
            let mut cfg = small();
            cfg.slam_scale = s;
            let sim = Simulator::new(cfg, ArmModel::default_synthetic()).unwrap();
            let a = sim.config().waypoints_rad[1];
            let kf = sim.synthesize_keyframe(&a, 0, 0, 0, &mut stream(0, 1)).unwrap();
            let est = keyframe_scale(&kf.keyframe, &kf.truth.depth, ScaleMethod::LeastSquares).unwrap();
            assert!((est.lambda / s - 1.0).abs() < 1e-9);
            let d = apply_scale(&kf.keyframe, est.lambda).unwrap();
            let e = point_depth_errors(&kf.truth.depth, &d).unwrap();
            assert!(e.records.iter().all(|r| r.e_depth_mm.abs() < 1e-9));
            assert_eq!(kf.keyframe.pose_est.scale(), 1.0 / s);
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let sim = Simulator::new(small(), ArmModel::default_synthetic()).unwrap();
        let a = sim.simulate().unwrap();
        let b = sim.simulate().unwrap();
        // NaN cells defeat PartialEq; compare the full debug rendering
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
        assert_eq!(a.keyframes.len(), 3);
        assert!(a.warnings.is_empty());
    }

    #[test]
    fn calibration_samples_match_truth_without_noise() {
        let sim = Simulator::new(small(), ArmModel::default_synthetic()).unwrap();
        let s = sim.calibration_samples(&mut stream(4, 2)).unwrap();
        assert_eq!(s.len(), 4);
        for x in &s {
            let p = sim.true_camera_pose(&x.angles).unwrap();
            assert!((p.translation() - x.pose_calib.translation()).norm() < 1e-12);
        }
    }
}
