//! Scale recovery and depth-error metrics for SLAM keyframes.
//!
//! Every depth here is in mm once scaled. A keyframe's raw depths `δ = 1/idepth`
//! are in arbitrary SLAM units until multiplied by the per-keyframe scale `λ`.

use nalgebra::Point3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Pose;
use crate::raster::{CountMap, DepthMap, Mask, RasterError};
use crate::raycast::{self, DepthConvention, Intrinsics, RaycastError, TriMesh};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("no valid depth pairs to estimate scale from")]
    NoPairs,
    #[error("sum of squared depths is zero")]
    ZeroDepths,
    #[error("scale factor must be positive and finite, got {0}")]
    BadScale(f64),
    #[error("error statistics need at least one record")]
    NoRecords,
    #[error("median window must be odd and at least 1, got {0}")]
    BadWindow(usize),
    #[error("effective-region threshold must be positive, got {0}")]
    BadThreshold(f64),
    #[error("record at (p={p}, q={q}) lies outside {width}×{height}")]
    OutOfRaster { p: usize, q: usize, width: usize, height: usize },
    #[error("keyframe {kf_id} rev {revision}: {msg}")]
    InvalidKeyFrame { kf_id: u64, revision: u32, msg: String },
    #[error("input lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Raycast(#[from] RaycastError),
}

/// One stored revision of a SLAM keyframe.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyFrame {
    pub kf_id: u64,
    pub revision: u32,
    pub t_ns: i64,
    /// camera→slam, carrying the SLAM's own (unknown) scale.
    pub pose_est: Pose,
    /// Inverse depth in 1/(SLAM unit); values ≤ 0 or non-finite are absent.
    pub idepth: DepthMap,
    pub ivar: DepthMap,
    pub intrinsics: Intrinsics,
}

impl KeyFrame {
    pub fn new(
        kf_id: u64,
        revision: u32,
        t_ns: i64,
        pose_est: Pose,
        idepth: DepthMap,
        ivar: DepthMap,
        intrinsics: Intrinsics,
    ) -> Result<Self, EvalError> {
        let bad = |msg: String| EvalError::InvalidKeyFrame { kf_id, revision, msg };
        if idepth.width() != intrinsics.width || idepth.height() != intrinsics.height {
            return Err(bad(format!(
                "idepth raster {}×{} does not match intrinsics {}×{}",
                idepth.width(),
                idepth.height(),
                intrinsics.width,
                intrinsics.height
            )));
        }
        idepth.same_shape(&ivar).map_err(|e| bad(e.to_string()))?;
        Ok(KeyFrame { kf_id, revision, t_ns, pose_est, idepth, ivar, intrinsics })
    }

    pub fn is_feature(&self, p: usize, q: usize) -> bool {
        is_valid_idepth(*self.idepth.at(p, q))
    }

    pub fn feature_mask(&self) -> Mask {
        self.idepth.map(|&v| is_valid_idepth(v))
    }

    pub fn feature_count(&self) -> usize {
        self.idepth.data().iter().filter(|&&v| is_valid_idepth(v)).count()
    }

    /// Unscaled depth `δ = 1/idepth`; NaN off the feature set.
    pub fn raw_depth(&self) -> DepthMap {
        self.idepth.map(|&v| if is_valid_idepth(v) { 1.0 / v } else { f64::NAN })
    }
}

fn is_valid_idepth(v: f64) -> bool {
    v > 0.0 && v.is_finite()
}

fn is_valid_depth(v: f64) -> bool {
    v > 0.0 && v.is_finite()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScaleMethod {
    /// `λ = Σδd / Σδ²`.
    #[default]
    LeastSquares,
    /// Median of `d/δ`.
    MedianOfRatios,
    /// `λ = Σ(δd/σ²) / Σ(δ²/σ²)` with σ² the variance of δ.
    VarianceWeighted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleFit {
    pub lambda: f64,
    pub n_pairs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleEstimate {
    pub kf_id: u64,
    pub revision: u32,
    pub lambda: f64,
    pub n_pairs: usize,
}

/// Least-squares scale between raw depths and ground truth. Pairs with a
/// non-positive/non-finite `δ` or a non-finite `d_gt` are skipped.
pub fn estimate_scale(delta: &[f64], d_gt: &[f64]) -> Result<ScaleFit, EvalError> {
    weighted_scale(delta, d_gt, None)
}

pub fn estimate_scale_weighted(delta: &[f64], d_gt: &[f64], var_delta: &[f64]) -> Result<ScaleFit, EvalError> {
    weighted_scale(delta, d_gt, Some(var_delta))
}

pub fn estimate_scale_median(delta: &[f64], d_gt: &[f64]) -> Result<ScaleFit, EvalError> {
    check_len(delta.len(), d_gt.len())?;
    let mut ratios: Vec<f64> = pairs(delta, d_gt).map(|(_, d, g)| g / d).collect();
    if ratios.is_empty() {
        return Err(EvalError::NoPairs);
    }
    let lambda = median_in_place(&mut ratios);
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(EvalError::BadScale(lambda));
    }
    Ok(ScaleFit { lambda, n_pairs: ratios.len() })
}

fn check_len(a: usize, b: usize) -> Result<(), EvalError> {
    if a != b {
        return Err(EvalError::LengthMismatch(a, b));
    }
    Ok(())
}

fn pairs<'a>(delta: &'a [f64], d_gt: &'a [f64]) -> impl Iterator<Item = (usize, f64, f64)> + 'a {
    delta
        .iter()
        .zip(d_gt)
        .enumerate()
        .filter(|(_, (&d, &g))| is_valid_depth(d) && g.is_finite())
        .map(|(i, (&d, &g))| (i, d, g))
}

/// Compensated running sum; keeps λ stable to a few ulp over thousands of
/// pairs.
#[derive(Debug, Default, Clone, Copy)]
struct NeumaierSum {
    sum: f64,
    carry: f64,
}

impl NeumaierSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        self.carry += if self.sum.abs() >= x.abs() { (self.sum - t) + x } else { (x - t) + self.sum };
        self.sum = t;
    }

    fn total(self) -> f64 {
        self.sum + self.carry
    }
}

fn weighted_scale(delta: &[f64], d_gt: &[f64], var: Option<&[f64]>) -> Result<ScaleFit, EvalError> {
    check_len(delta.len(), d_gt.len())?;
    if let Some(v) = var {
        check_len(delta.len(), v.len())?;
    }
    let (mut num, mut den, mut n) = (NeumaierSum::default(), NeumaierSum::default(), 0usize);
    for (i, d, g) in pairs(delta, d_gt) {
        let w = match var {
            Some(v) if v[i] > 0.0 && v[i].is_finite() => 1.0 / v[i],
            Some(_) => continue,
            None => 1.0,
        };
        num.add(w * d * g);
        den.add(w * d * d);
        n += 1;
    }
    if n == 0 {
        return Err(EvalError::NoPairs);
    }
    let (num, den) = (num.total(), den.total());
    if den == 0.0 {
        return Err(EvalError::ZeroDepths);
    }
    let lambda = num / den;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(EvalError::BadScale(lambda));
    }
    Ok(ScaleFit { lambda, n_pairs: n })
}

/// Scale of one keyframe against its ground-truth depth raster.
pub fn keyframe_scale(kf: &KeyFrame, d_gt: &DepthMap, method: ScaleMethod) -> Result<ScaleEstimate, EvalError> {
    kf.idepth.same_shape(d_gt)?;
    let delta = kf.raw_depth();
    let fit = match method {
        ScaleMethod::LeastSquares => estimate_scale(delta.data(), d_gt.data())?,
        ScaleMethod::MedianOfRatios => estimate_scale_median(delta.data(), d_gt.data())?,
        ScaleMethod::VarianceWeighted => {
            // first-order: var(1/x) ≈ var(x) / x⁴
            let var: Vec<f64> = kf
                .idepth
                .data()
                .iter()
                .zip(kf.ivar.data())
                .map(|(&i, &v)| v / i.powi(4))
                .collect();
            estimate_scale_weighted(delta.data(), d_gt.data(), &var)?
        }
    };
    Ok(ScaleEstimate { kf_id: kf.kf_id, revision: kf.revision, lambda: fit.lambda, n_pairs: fit.n_pairs })
}

/// Metric depth `D_SLAM = λ/idepth` on feature pixels, NaN elsewhere.
pub fn apply_scale(kf: &KeyFrame, lambda: f64) -> Result<DepthMap, EvalError> {
    check_scale(lambda)?;
    Ok(kf.idepth.map(|&v| if is_valid_idepth(v) { (1.0 / v) * lambda } else { f64::NAN }))
}

fn check_scale(lambda: f64) -> Result<(), EvalError> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(EvalError::BadScale(lambda));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointError {
    pub p: usize,
    pub q: usize,
    /// `D_GT − D_SLAM`, mm.
    pub e_depth_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointErrors {
    pub records: Vec<PointError>,
    /// Valid in the ground truth only.
    pub gt_only: usize,
    /// Valid in the SLAM map only (e.g. the ray missed the mesh).
    pub slam_only: usize,
}

pub fn point_depth_errors(d_gt: &DepthMap, d_slam: &DepthMap) -> Result<PointErrors, EvalError> {
    d_gt.same_shape(d_slam)?;
    let mut out = PointErrors::default();
    for ((p, q, &g), &s) in d_gt.iter_pixels().zip(d_slam.data()) {
        match (g.is_nan(), s.is_nan()) {
            (false, false) => out.records.push(PointError { p, q, e_depth_mm: g - s }),
            (false, true) => out.gt_only += 1,
            (true, false) => out.slam_only += 1,
            (true, true) => {}
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub n: usize,
    pub mean_mm: f64,
    /// Sample variance (divisor n−1); 0 when `n == 1`.
    pub variance_mm2: f64,
    /// Set when `n == 1` and the variance is undefined.
    pub degenerate: bool,
    pub min_mm: f64,
    pub max_mm: f64,
    pub mean_abs_mm: f64,
}

pub fn keyframe_error_stats(errors: &[f64]) -> Result<ErrorStats, EvalError> {
    let n = errors.len();
    if n == 0 {
        return Err(EvalError::NoRecords);
    }
    let mean = errors.iter().sum::<f64>() / n as f64;
    let variance = if n > 1 {
        errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    Ok(ErrorStats {
        n,
        mean_mm: mean,
        variance_mm2: variance,
        degenerate: n == 1,
        min_mm: errors.iter().copied().fold(f64::INFINITY, f64::min),
        max_mm: errors.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean_abs_mm: errors.iter().map(|e| e.abs()).sum::<f64>() / n as f64,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PixelErrorMap {
    /// Mean |e| per pixel in mm, NaN where unobserved.
    pub mean_abs: DepthMap,
    pub counts: CountMap,
}

/// Accumulates |e| per pixel across all given records, in iteration order.
pub fn pixelwise_error_map<'a>(
    records: impl IntoIterator<Item = &'a PointError>,
    width: usize,
    height: usize,
) -> Result<PixelErrorMap, EvalError> {
    let mut sums = DepthMap::filled(width, height, 0.0);
    let mut counts = CountMap::filled(width, height, 0);
    for r in records {
        if !counts.contains(r.p, r.q) {
            return Err(EvalError::OutOfRaster { p: r.p, q: r.q, width, height });
        }
        *sums.at_mut(r.p, r.q) += r.e_depth_mm.abs();
        *counts.at_mut(r.p, r.q) += 1;
    }
    let data = sums.data().iter().zip(counts.data()).map(|(&s, &z)| if z == 0 { f64::NAN } else { s / z as f64 });
    let mean_abs = DepthMap::from_vec(width, height, data.collect())?;
    Ok(PixelErrorMap { mean_abs, counts })
}

/// Median of valid values in non-overlapping `k×k` blocks.
pub fn median_downsample(map: &DepthMap, k: usize) -> Result<DepthMap, EvalError> {
    if k == 0 || k.is_multiple_of(2) {
        return Err(EvalError::BadWindow(k));
    }
    let (w, h) = (map.width().div_ceil(k), map.height().div_ceil(k));
    let mut block = Vec::with_capacity(k * k);
    Ok(DepthMap::from_fn(w, h, |bp, bq| {
        block.clear();
        for p in bp * k..((bp + 1) * k).min(map.height()) {
            for q in bq * k..((bq + 1) * k).min(map.width()) {
                let v = *map.at(p, q);
                if !v.is_nan() {
                    block.push(v);
                }
            }
        }
        if block.is_empty() {
            f64::NAN
        } else {
            median_in_place(&mut block)
        }
    }))
}

/// Median; the mean of the two central values for even counts.
fn median_in_place(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveRegion {
    pub mask: Mask,
    /// Share of all raster cells inside the region.
    pub fraction: f64,
}

pub fn effective_region(map: &DepthMap, threshold_mm: f64) -> Result<EffectiveRegion, EvalError> {
    if threshold_mm.is_nan() || threshold_mm <= 0.0 {
        return Err(EvalError::BadThreshold(threshold_mm));
    }
    let mask = map.map(|&v| !v.is_nan() && v <= threshold_mm);
    let fraction = if mask.is_empty() { 0.0 } else { mask.count_true() as f64 / mask.len() as f64 };
    Ok(EffectiveRegion { mask, fraction })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudPoint {
    pub p: usize,
    pub q: usize,
    /// Pattern-space position, mm.
    pub position: Point3<f64>,
    pub e_depth_mm: Option<f64>,
}

/// Back-projects every feature pixel at its scaled depth and maps it into
/// pattern space with `camera_to_pattern`. Error tags are looked up in
/// `errors` when given.
pub fn assemble_point_cloud(
    kf: &KeyFrame,
    camera_to_pattern: &Pose,
    lambda: f64,
    errors: Option<&PointErrors>,
) -> Result<Vec<CloudPoint>, EvalError> {
    let d_slam = apply_scale(kf, lambda)?;
    let mut tags = DepthMap::invalid(d_slam.width(), d_slam.height());
    for r in errors.map(|e| e.records.as_slice()).unwrap_or_default() {
        if tags.contains(r.p, r.q) {
            *tags.at_mut(r.p, r.q) = r.e_depth_mm;
        }
    }
    let mut cloud = Vec::new();
    for (p, q, &d) in d_slam.iter_pixels() {
        if d.is_nan() {
            continue;
        }
        let ray = raycast::pixel_ray(&kf.intrinsics, p as f64, q as f64)?;
        let cam = ray.at(d / ray.dir.z);
        let tag = *tags.at(p, q);
        cloud.push(CloudPoint {
            p,
            q,
            position: camera_to_pattern.transform_point(&cam),
            e_depth_mm: (!tag.is_nan()).then_some(tag),
        });
    }
    Ok(cloud)
}

/// Everything computed for one keyframe revision.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyframeEvaluation {
    pub kf_id: u64,
    pub revision: u32,
    pub t_ns: i64,
    pub scale: ScaleEstimate,
    pub d_gt: DepthMap,
    pub d_slam: DepthMap,
    pub errors: PointErrors,
    pub stats: ErrorStats,
}

/// Ground truth on the feature pixels, scale fit, and error metrics.
pub fn evaluate_keyframe(
    kf: &KeyFrame,
    camera_to_pattern: &Pose,
    mesh: &TriMesh,
    method: ScaleMethod,
) -> Result<KeyframeEvaluation, EvalError> {
    let mask = kf.feature_mask();
    let d_gt = raycast::ground_truth_depth_map(
        camera_to_pattern,
        &kf.intrinsics,
        mesh,
        Some(&mask),
        DepthConvention::ZDepth,
    )?;
    let scale = keyframe_scale(kf, &d_gt, method)?;
    let d_slam = apply_scale(kf, scale.lambda)?;
    let errors = point_depth_errors(&d_gt, &d_slam)?;
    let e: Vec<f64> = errors.records.iter().map(|r| r.e_depth_mm).collect();
    let stats = keyframe_error_stats(&e)?;
    Ok(KeyframeEvaluation { kf_id: kf.kf_id, revision: kf.revision, t_ns: kf.t_ns, scale, d_gt, d_slam, errors, stats })
}
