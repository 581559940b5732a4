//! Robot-world / hand-eye alignment.
//!
//! Given joint readings `A_i` and camera poses `P_i` measured against the
//! calibration pattern, find the base→pattern transform `T1` and the
//! camera→gripper transform `T2` minimizing
//!
//! ```text
//! Σ_i ‖ r(T1 ∘ fk(A_i) ∘ T2, P_i) ‖²
//! ```
//!
//! where `r` is [`pose_residual`]. The solver is Levenberg–Marquardt over
//! left-multiplicative twists of both transforms, with a central-difference
//! Jacobian and seeded multi-start.

use nalgebra::{DMatrix, DVector, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{pose_residual, rotation_log, spaces, GeomError, Pose, ResidualWeights, Twist};
use crate::kinematics::{forward_kinematics, ArmModel, JointAngles, KinematicsError};

const JACOBIAN_STEP: f64 = 1e-6;
const STEP_TOLERANCE: f64 = 1e-10;
const RELATIVE_DECREASE_TOLERANCE: f64 = 1e-12;
const INITIAL_DAMPING: f64 = 1e-3;
const MAX_DAMPING: f64 = 1e20;
/// Relative rotations closer than this to a common axis count as coaxial.
const COAXIAL_TOLERANCE_RAD: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibError {
    #[error("need at least 3 calibration samples, got {0}")]
    InsufficientData(usize),
    #[error("gripper rotations do not span two non-parallel axes; T1 and T2 are not identifiable")]
    DegenerateMotion,
    #[error("calibration pose of sample {index} must be camera→pattern with scale 1")]
    BadSample { index: usize },
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

/// One robot stop: joint angles plus the camera pose reported by the
/// external camera calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibSample {
    pub t_ns: i64,
    #[serde(rename = "angles_rad")]
    pub angles: JointAngles,
    /// camera → pattern.
    pub pose_calib: Pose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtrinsicsPair {
    /// sawyer → pattern.
    pub t1: Pose,
    /// camera → gripper.
    pub t2: Pose,
    /// sqrt(‖r‖² / len(r)) at the solution, mm.
    pub final_rms: f64,
    pub iterations: usize,
    pub converged: bool,
    pub restart_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub weights: ResidualWeights,
    pub scale_free: bool,
    pub max_iter: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            weights: ResidualWeights::default(),
            scale_free: false,
            max_iter: 200,
            restarts: 8,
            seed: 0,
        }
    }
}

/// `T1 ∘ fk(A) ∘ T2`: camera → pattern. With `T1` the identity relabeled
/// `sawyer → sawyer` this is the camera pose in the robot base space.
pub fn predict_camera_pose(
    t1: &Pose,
    t2: &Pose,
    model: &ArmModel,
    angles: &JointAngles,
) -> Result<Pose, CalibError> {
    let g = forward_kinematics(model, angles)?;
    Ok(t1.compose(&g)?.compose(t2)?)
}

/// Stacked per-sample pose residuals (6 or 7 components each).
pub fn residual_vector(
    t1: &Pose,
    t2: &Pose,
    samples: &[CalibSample],
    model: &ArmModel,
    weights: ResidualWeights,
    scale_free: bool,
) -> Result<Vec<f64>, CalibError> {
    let mut out = Vec::with_capacity(samples.len() * 7);
    for s in samples {
        let pred = predict_camera_pose(t1, t2, model, &s.angles)?;
        pose_residual(&pred, &s.pose_calib, weights, scale_free)?.extend_into(&mut out);
    }
    Ok(out)
}

/// ½‖r‖².
pub fn objective(residual: &[f64]) -> f64 {
    0.5 * residual.iter().map(|r| r * r).sum::<f64>()
}

/// Residual evaluation with the forward kinematics cached per sample.
struct Problem<'a> {
    grippers: Vec<Pose>,
    samples: &'a [CalibSample],
    weights: ResidualWeights,
    scale_free: bool,
}

impl Problem<'_> {
    fn block(&self) -> usize {
        if self.scale_free {
            7
        } else {
            6
        }
    }

    fn n_params(&self) -> usize {
        2 * self.block()
    }

    fn residual(&self, t1: &Pose, t2: &Pose, out: &mut Vec<f64>) -> Result<(), CalibError> {
        out.clear();
        for (g, s) in self.grippers.iter().zip(self.samples) {
            let pred = t1.compose(g)?.compose(t2)?;
            pose_residual(&pred, &s.pose_calib, self.weights, self.scale_free)?.extend_into(out);
        }
        Ok(())
    }

    fn apply(&self, t1: &Pose, t2: &Pose, delta: &[f64]) -> (Pose, Pose) {
        let b = self.block();
        let xi1 = Twist::from_slice(&delta[..b]).expect("block is 6 or 7 wide");
        let xi2 = Twist::from_slice(&delta[b..]).expect("block is 6 or 7 wide");
        (t1.retract(&xi1), t2.retract(&xi2))
    }

    fn jacobian(&self, t1: &Pose, t2: &Pose, m: usize) -> Result<DMatrix<f64>, CalibError> {
        let n = self.n_params();
        let mut jac = DMatrix::zeros(m, n);
        let mut plus = Vec::with_capacity(m);
        let mut minus = Vec::with_capacity(m);
        let mut delta = vec![0.0; n];
        for k in 0..n {
            delta[k] = JACOBIAN_STEP;
            let (a, b) = self.apply(t1, t2, &delta);
            self.residual(&a, &b, &mut plus)?;
            delta[k] = -JACOBIAN_STEP;
            let (a, b) = self.apply(t1, t2, &delta);
            self.residual(&a, &b, &mut minus)?;
            delta[k] = 0.0;
            for (row, (p, q)) in plus.iter().zip(&minus).enumerate() {
                jac[(row, k)] = (p - q) / (2.0 * JACOBIAN_STEP);
            }
        }
        Ok(jac)
    }
}

/// Result of one Levenberg–Marquardt run.
#[derive(Debug, Clone)]
pub struct LmRun {
    pub t1: Pose,
    pub t2: Pose,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after every accepted step, starting with the initial value.
    pub accepted_objectives: Vec<f64>,
    residual_len: usize,
}

fn levenberg_marquardt(
    problem: &Problem<'_>,
    t1: Pose,
    t2: Pose,
    max_iter: usize,
) -> Result<LmRun, CalibError> {
    let mut t1 = t1;
    let mut t2 = t2;
    let mut r = Vec::new();
    problem.residual(&t1, &t2, &mut r)?;
    let m = r.len();
    let mut f = objective(&r);
    let mut history = vec![f];
    let mut damping = INITIAL_DAMPING;
    let mut converged = f == 0.0;
    let mut iterations = 0;
    let mut candidate = Vec::with_capacity(m);

    // The linearization only changes on acceptance.
    let mut linearization: Option<(DMatrix<f64>, DVector<f64>)> = None;

    while !converged && iterations < max_iter {
        iterations += 1;
        let (jtj, jtr) = match &linearization {
            Some(lin) => lin.clone(),
            None => {
                let jac = problem.jacobian(&t1, &t2, m)?;
                let rv = DVector::from_column_slice(&r);
                let lin = (jac.transpose() * &jac, jac.transpose() * rv);
                linearization = Some(lin.clone());
                lin
            }
        };

        let mut lhs = jtj.clone();
        for i in 0..lhs.nrows() {
            lhs[(i, i)] += damping * jtj[(i, i)].max(1e-12);
        }
        let Some(chol) = lhs.cholesky() else {
            damping *= 10.0;
            if damping > MAX_DAMPING {
                converged = true;
            }
            continue;
        };
        let step = chol.solve(&(-&jtr));
        let step_norm = step.norm();
        if step_norm < STEP_TOLERANCE {
            converged = true;
            break;
        }

        let (c1, c2) = problem.apply(&t1, &t2, step.as_slice());
        problem.residual(&c1, &c2, &mut candidate)?;
        let f_new = objective(&candidate);

        if f_new < f {
            let relative = (f - f_new) / f;
            t1 = c1;
            t2 = c2;
            std::mem::swap(&mut r, &mut candidate);
            f = f_new;
            history.push(f);
            linearization = None;
            damping = (damping / 10.0).max(1e-15);
            if relative < RELATIVE_DECREASE_TOLERANCE || f == 0.0 {
                converged = true;
            }
        } else {
            damping *= 10.0;
            if damping > MAX_DAMPING {
                // no descent direction left at working precision
                converged = true;
            }
        }
    }

    Ok(LmRun {
        t1,
        t2,
        objective: f,
        iterations,
        converged,
        accepted_objectives: history,
        residual_len: m,
    })
}

/// Checks that relative gripper rotations are not all about one axis.
pub fn check_rotation_diversity(grippers: &[Pose]) -> Result<(), CalibError> {
    let Some(first) = grippers.first() else {
        return Err(CalibError::InsufficientData(0));
    };
    let mut axes: Vec<Vector3<f64>> = Vec::new();
    let pairs = grippers
        .iter()
        .skip(1)
        .map(|g| (first, g))
        .chain(grippers.windows(2).map(|w| (&w[0], &w[1])));
    for (a, b) in pairs {
        let rel = a.rotation().inverse() * b.rotation();
        let w = rotation_log(&rel);
        let angle = w.norm();
        if angle > COAXIAL_TOLERANCE_RAD {
            axes.push(w / angle);
        }
    }
    let Some(reference) = axes.first() else {
        return Err(CalibError::DegenerateMotion);
    };
    let diverse = axes.iter().any(|axis| {
        let sin = axis.cross(reference).norm();
        let cos = axis.dot(reference).abs();
        sin.atan2(cos) > COAXIAL_TOLERANCE_RAD
    });
    if diverse {
        Ok(())
    } else {
        Err(CalibError::DegenerateMotion)
    }
}

fn random_rotation(rng: &mut ChaCha8Rng) -> UnitQuaternion<f64> {
    let axis = loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            break v / n;
        }
    };
    let angle = rng.random_range(0.0..std::f64::consts::PI);
    UnitQuaternion::from_scaled_axis(axis * angle)
}

/// Estimates `T1` (sawyer→pattern) and `T2` (camera→gripper).
///
/// Start 0 uses `T2 = I`, `T1 = P_0 ∘ (G_0 ∘ T2)⁻¹`; each further start
/// replaces the rotation of `T2` by a seeded random rotation. The start with
/// the lowest final objective wins (earliest on ties).
pub fn solve_extrinsics(
    samples: &[CalibSample],
    model: &ArmModel,
    options: &SolverOptions,
) -> Result<ExtrinsicsPair, CalibError> {
    Ok(solve_extrinsics_detailed(samples, model, options)?.0)
}

/// Like [`solve_extrinsics`], also returning every start's LM trace.
pub fn solve_extrinsics_detailed(
    samples: &[CalibSample],
    model: &ArmModel,
    options: &SolverOptions,
) -> Result<(ExtrinsicsPair, Vec<LmRun>), CalibError> {
    if samples.len() < 3 {
        return Err(CalibError::InsufficientData(samples.len()));
    }
    for (index, s) in samples.iter().enumerate() {
        let p = &s.pose_calib;
        if p.source().as_str() != spaces::CAMERA
            || p.target().as_str() != spaces::PATTERN
            || !p.is_rigid()
        {
            return Err(CalibError::BadSample { index });
        }
    }
    let grippers = samples
        .iter()
        .map(|s| forward_kinematics(model, &s.angles))
        .collect::<Result<Vec<_>, _>>()?;
    check_rotation_diversity(&grippers)?;

    let problem = Problem {
        grippers,
        samples,
        weights: options.weights,
        scale_free: options.scale_free,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut runs = Vec::with_capacity(options.restarts + 1);
    for start in 0..=options.restarts {
        let rotation = if start == 0 {
            UnitQuaternion::identity()
        } else {
            random_rotation(&mut rng)
        };
        let t2 = Pose::rigid(rotation, Vector3::zeros(), spaces::CAMERA, spaces::GRIPPER)?;
        let t1 = samples[0]
            .pose_calib
            .compose(&problem.grippers[0].compose(&t2)?.inverse())?;
        runs.push(levenberg_marquardt(&problem, t1, t2, options.max_iter)?);
    }

    let (best_index, best) = runs
        .iter()
        .enumerate()
        .fold(None::<(usize, &LmRun)>, |acc, (i, run)| match acc {
            Some((_, b)) if b.objective <= run.objective => acc,
            _ => Some((i, run)),
        })
        .expect("at least one start");

    let pair = ExtrinsicsPair {
        t1: best.t1.clone(),
        t2: best.t2.clone(),
        final_rms: (2.0 * best.objective / best.residual_len as f64).sqrt(),
        iterations: best.iterations,
        converged: best.converged,
        restart_index: best_index,
    };
    Ok((pair, runs))
}
