//! File-level drivers behind the command-line tool: calibrate, sync,
//! evaluate and report.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calib::{predict_camera_pose, solve_extrinsics, CalibSample, SolverOptions};
use crate::error::Result;
use crate::eval::{
    assemble_point_cloud, effective_region, evaluate_keyframe, median_downsample, pixelwise_error_map, EvalError,
    KeyFrame, KeyframeEvaluation, PixelErrorMap, PointError, ScaleMethod,
};
use crate::formats::{self, roles, FormatError, Manifest, RasterDtype};
use crate::geom::Pose;
use crate::heatmap::{self, HeatmapStyle};
use crate::kinematics::ArmModel;
use crate::raycast::TriMesh;
use crate::sync::{interpolate_joints, synchronize_streams, Interpolation, JointLog, SyncReport, DEFAULT_MAX_GAP_NS};

// ---------------------------------------------------------------- calibrate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtrinsicsReport {
    /// sawyer → pattern.
    pub t1: Pose,
    /// camera → gripper.
    pub t2: Pose,
    pub final_rms_mm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub restart_index: usize,
    pub n_samples: usize,
    pub rho_mm_per_rad: f64,
    pub scale_free: bool,
    pub restarts: usize,
    pub seed: u64,
}

pub fn calibrate(samples: &[CalibSample], arm: &ArmModel, opts: &SolverOptions) -> Result<ExtrinsicsReport> {
    let sol = solve_extrinsics(samples, arm, opts)?;
    Ok(ExtrinsicsReport {
        t1: sol.t1,
        t2: sol.t2,
        final_rms_mm: sol.final_rms,
        iterations: sol.iterations,
        converged: sol.converged,
        restart_index: sol.restart_index,
        n_samples: samples.len(),
        rho_mm_per_rad: opts.weights.rho_mm_per_rad,
        scale_free: opts.scale_free,
        restarts: opts.restarts,
        seed: opts.seed,
    })
}

pub fn calibrate_files(samples: &Path, arm: &Path, opts: &SolverOptions, out: &Path) -> Result<ExtrinsicsReport> {
    let samples = formats::read_calib_samples(samples)?;
    let arm = formats::read_arm_model(arm)?;
    let report = calibrate(&samples, &arm, opts)?;
    formats::write_json(out, &report)?;
    Ok(report)
}

// ---------------------------------------------------------------- sync

/// `packets.jsonl` → `packets.dropped.jsonl`.
pub fn dropped_path(packets: &Path) -> std::path::PathBuf {
    packets.with_extension("dropped.jsonl")
}

/// Writes synchronized packets to `out` and dropped frames beside it.
pub fn sync_files(frames: &Path, joints: &Path, max_gap_ns: i64, policy: Interpolation, out: &Path) -> Result<SyncReport> {
    let frames = formats::read_frame_log(frames)?;
    let joints = formats::read_joint_log(joints)?;
    let report = synchronize_streams(&frames, &joints, max_gap_ns, policy)?;
    formats::write_jsonl(out, &report.packets)?;
    formats::write_jsonl(&dropped_path(out), &report.dropped)?;
    Ok(report)
}

// ---------------------------------------------------------------- evaluate

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub scale_method: ScaleMethod,
    pub max_gap_ns: i64,
    pub interpolation: Interpolation,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            scale_method: ScaleMethod::LeastSquares,
            max_gap_ns: DEFAULT_MAX_GAP_NS,
            interpolation: Interpolation::Linear,
        }
    }
}

/// Everything `evaluate` reads, already parsed.
#[derive(Debug, Clone)]
pub struct EvalInputs {
    pub keyframes: Vec<KeyFrame>,
    pub joint_log: JointLog,
    pub arm: ArmModel,
    /// sawyer → pattern.
    pub t1: Pose,
    /// camera → gripper.
    pub t2: Pose,
    pub mesh: TriMesh,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedKeyframe {
    pub kf_id: u64,
    pub revision: u32,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluatedKeyframe {
    pub eval: KeyframeEvaluation,
    /// camera → pattern from the arm reading at the keyframe time.
    pub pose_gt: Pose,
    pub cloud: Vec<crate::eval::CloudPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    pub keyframes: Vec<EvaluatedKeyframe>,
    pub skipped: Vec<SkippedKeyframe>,
    pub pixel_map: PixelErrorMap,
}

impl EvalOutcome {
    pub fn records(&self) -> impl Iterator<Item = &PointError> {
        self.keyframes.iter().flat_map(|k| k.eval.errors.records.iter())
    }
}

/// Runs ground truth, scale fit and the error metrics over every keyframe,
/// in input order. Keyframes that cannot be placed on the joint log or have
/// no valid pairs are skipped with a reason.
pub fn evaluate(inputs: &EvalInputs, opts: &EvalOptions) -> Result<EvalOutcome> {
    let (mut width, mut height) = (0, 0);
    let mut keyframes = Vec::new();
    let mut skipped = Vec::new();
    for kf in &inputs.keyframes {
        (width, height) = (kf.intrinsics.width, kf.intrinsics.height);
        let skip = |reason: String| SkippedKeyframe { kf_id: kf.kf_id, revision: kf.revision, reason };
        let angles = match interpolate_joints(&inputs.joint_log, kf.t_ns, opts.max_gap_ns, opts.interpolation) {
            Ok((a, _)) => a,
            Err(e) => {
                skipped.push(skip(e.to_string()));
                continue;
            }
        };
        let pose_gt = predict_camera_pose(&inputs.t1, &inputs.t2, &inputs.arm, &angles)?;
        let eval = match evaluate_keyframe(kf, &pose_gt, &inputs.mesh, opts.scale_method) {
            Ok(ev) => ev,
            Err(e @ (EvalError::NoPairs | EvalError::NoRecords | EvalError::ZeroDepths)) => {
                skipped.push(skip(e.to_string()));
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let cloud = assemble_point_cloud(kf, &pose_gt, eval.scale.lambda, Some(&eval.errors))?;
        keyframes.push(EvaluatedKeyframe { eval, pose_gt, cloud });
    }
    let records = keyframes.iter().flat_map(|k: &EvaluatedKeyframe| k.eval.errors.records.iter());
    let pixel_map = pixelwise_error_map(records, width, height)?;
    Ok(EvalOutcome { keyframes, skipped, pixel_map })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSummary {
    pub keyframes_evaluated: usize,
    pub skipped: Vec<SkippedKeyframe>,
    pub n_points: usize,
    pub mean_err_mm: f64,
    pub mean_abs_err_mm: f64,
    pub max_abs_err_mm: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub width: usize,
    pub height: usize,
    pub scale_method: ScaleMethod,
}

pub mod outputs {
    pub const KEYFRAMES_CSV: &str = "keyframes.csv";
    pub const KEYFRAME_ABS_CSV: &str = "keyframe_abs_means.csv";
    pub const POINTS_CSV: &str = "points.csv";
    pub const CLOUD_CSV: &str = "cloud.csv";
    pub const PIXEL_MAP: &str = "pixel_map.bin";
    pub const PIXEL_COUNTS: &str = "pixel_counts.bin";
    pub const SUMMARY: &str = "summary.json";

    pub const KEYFRAMES_HEADER: [&str; 9] =
        ["kf_id", "revision", "t_ns", "lambda", "n_points", "mean_err_mm", "var_err_mm2", "min_err_mm", "max_err_mm"];
    pub const KEYFRAME_ABS_HEADER: [&str; 6] = ["kf_id", "revision", "mean_abs_err_mm", "degenerate", "gt_only", "slam_only"];
    pub const POINTS_HEADER: [&str; 5] = ["kf_id", "revision", "p", "q", "e_depth_mm"];
    pub const CLOUD_HEADER: [&str; 8] = ["kf_id", "revision", "p", "q", "x_mm", "y_mm", "z_mm", "e_depth_mm"];
}

fn raster_stem(kf_id: u64, revision: u32) -> String {
    format!("rasters/kf{kf_id:04}_r{revision}")
}

pub fn write_evaluation(outcome: &EvalOutcome, opts: &EvalOptions, out_dir: &Path) -> Result<EvalSummary> {
    let mut kf_rows = Vec::new();
    let mut abs_rows = Vec::new();
    let mut point_rows = Vec::new();
    let mut cloud_rows = Vec::new();
    for k in &outcome.keyframes {
        let ev = &k.eval;
        let s = &ev.stats;
        let (id, rev) = (ev.kf_id.to_string(), ev.revision.to_string());
        kf_rows.push(vec![
            id.clone(),
            rev.clone(),
            ev.t_ns.to_string(),
            ev.scale.lambda.to_string(),
            s.n.to_string(),
            s.mean_mm.to_string(),
            s.variance_mm2.to_string(),
            s.min_mm.to_string(),
            s.max_mm.to_string(),
        ]);
        abs_rows.push(vec![
            id.clone(),
            rev.clone(),
            s.mean_abs_mm.to_string(),
            s.degenerate.to_string(),
            ev.errors.gt_only.to_string(),
            ev.errors.slam_only.to_string(),
        ]);
        for r in &ev.errors.records {
            point_rows.push(vec![id.clone(), rev.clone(), r.p.to_string(), r.q.to_string(), r.e_depth_mm.to_string()]);
        }
        for c in &k.cloud {
            cloud_rows.push(vec![
                id.clone(),
                rev.clone(),
                c.p.to_string(),
                c.q.to_string(),
                c.position.x.to_string(),
                c.position.y.to_string(),
                c.position.z.to_string(),
                c.e_depth_mm.map(|e| e.to_string()).unwrap_or_default(),
            ]);
        }
        let stem = raster_stem(ev.kf_id, ev.revision);
        formats::write_depth_raster(&out_dir.join(format!("{stem}.gt.bin")), &ev.d_gt, "mm", RasterDtype::F32)?;
        formats::write_depth_raster(&out_dir.join(format!("{stem}.slam.bin")), &ev.d_slam, "mm", RasterDtype::F32)?;
    }
    formats::write_csv(&out_dir.join(outputs::KEYFRAMES_CSV), &outputs::KEYFRAMES_HEADER, &kf_rows)?;
    formats::write_csv(&out_dir.join(outputs::KEYFRAME_ABS_CSV), &outputs::KEYFRAME_ABS_HEADER, &abs_rows)?;
    formats::write_csv(&out_dir.join(outputs::POINTS_CSV), &outputs::POINTS_HEADER, &point_rows)?;
    formats::write_csv(&out_dir.join(outputs::CLOUD_CSV), &outputs::CLOUD_HEADER, &cloud_rows)?;
    let pm = &outcome.pixel_map;
    formats::write_depth_raster(&out_dir.join(outputs::PIXEL_MAP), &pm.mean_abs, "mm", RasterDtype::F32)?;
    formats::write_count_raster(&out_dir.join(outputs::PIXEL_COUNTS), &pm.counts)?;

    let errors: Vec<f64> = outcome.records().map(|r| r.e_depth_mm).collect();
    let n = errors.len();
    let mean = |f: fn(f64) -> f64| if n == 0 { 0.0 } else { errors.iter().map(|&e| f(e)).sum::<f64>() / n as f64 };
    let lambdas = outcome.keyframes.iter().map(|k| k.eval.scale.lambda);
    let summary = EvalSummary {
        keyframes_evaluated: outcome.keyframes.len(),
        skipped: outcome.skipped.clone(),
        n_points: n,
        mean_err_mm: mean(|e| e),
        mean_abs_err_mm: mean(f64::abs),
        max_abs_err_mm: errors.iter().fold(0.0, |m, e| m.max(e.abs())),
        lambda_min: lambdas.clone().fold(f64::INFINITY, f64::min),
        lambda_max: lambdas.fold(f64::NEG_INFINITY, f64::max),
        width: pm.mean_abs.width(),
        height: pm.mean_abs.height(),
        scale_method: opts.scale_method,
    };
    formats::write_json(&out_dir.join(outputs::SUMMARY), &summary)?;
    Ok(summary)
}

/// Loads a dataset through its manifest and evaluates it against the given
/// extrinsics and mesh.
pub fn load_eval_inputs(manifest: &Path, extrinsics: &Path, mesh: &Path) -> Result<EvalInputs> {
    let m = Manifest::load(manifest)?;
    let dir = manifest.parent().unwrap_or(Path::new(""));
    let at = |role: &str| -> Result<std::path::PathBuf> { Ok(dir.join(m.path_for(role)?)) };
    let mesh = formats::read_mesh(mesh)?;
    let report: ExtrinsicsReport = formats::read_json(extrinsics)?;
    let intrinsics = formats::read_intrinsics(&at(roles::INTRINSICS)?)?;
    Ok(EvalInputs {
        keyframes: formats::read_keyframes(&at(roles::KEYFRAMES)?, &intrinsics)?,
        joint_log: formats::read_joint_log(&at(roles::JOINT_LOG)?)?,
        arm: formats::read_arm_model(&at(roles::ARM)?)?,
        t1: report.t1,
        t2: report.t2,
        mesh,
    })
}

pub fn evaluate_dataset(
    manifest: &Path,
    extrinsics: &Path,
    mesh: &Path,
    opts: &EvalOptions,
    out_dir: &Path,
) -> Result<EvalSummary> {
    let inputs = load_eval_inputs(manifest, extrinsics, mesh)?;
    let outcome = evaluate(&inputs, opts)?;
    write_evaluation(&outcome, opts, out_dir)
}

// ---------------------------------------------------------------- report

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportOptions {
    pub threshold_mm: f64,
    /// Odd block size for the median-filtered pixel map.
    pub median_k: usize,
    /// Upper colour clamp; the largest pixel-map value when absent.
    pub clamp_max_mm: Option<f64>,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions { threshold_mm: 1.0, median_k: 5, clamp_max_mm: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionReport {
    pub threshold_mm: f64,
    pub fraction: f64,
    pub cells_in_region: usize,
    pub cells_total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSummary {
    pub style: HeatmapStyle,
    pub median_k: usize,
    pub region: RegionReport,
    pub keyframes: usize,
}

pub mod report_outputs {
    pub const PIXEL_HEATMAP: &str = "pixel_error.ppm";
    pub const REGION_PPM: &str = "effective_region.ppm";
    pub const REGION_JSON: &str = "effective_region.json";
    pub const KEYFRAME_SUMMARY: &str = "keyframe_summary.csv";
    pub const REPORT_JSON: &str = "report.json";
    pub const KEYFRAME_SUMMARY_HEADER: [&str; 10] = [
        "kf_id",
        "revision",
        "t_ns",
        "lambda",
        "n_points",
        "mean_err_mm",
        "mean_abs_err_mm",
        "var_err_mm2",
        "min_err_mm",
        "max_err_mm",
    ];
}

fn parse_cell<T: std::str::FromStr>(path: &Path, row: usize, cell: &str) -> Result<T> {
    cell.parse().map_err(|_| {
        FormatError::Parse { path: path.to_path_buf(), line: row + 2, msg: format!("cannot parse `{cell}`") }.into()
    })
}

fn read_table(path: &Path, header: &[&str]) -> Result<Vec<Vec<String>>> {
    let (h, rows) = formats::read_csv(path)?;
    if h != header {
        return Err(FormatError::invalid(path, format!("unexpected header {h:?}")).into());
    }
    Ok(rows)
}

/// Heatmaps, per-keyframe summary and effective region from an `evaluate`
/// output directory.
pub fn report(eval_dir: &Path, opts: &ReportOptions, out_dir: &Path) -> Result<ReportSummary> {
    use report_outputs as ro;
    let (pixel_map, _) = formats::read_depth_raster(&eval_dir.join(outputs::PIXEL_MAP))?;
    let (w, h) = (pixel_map.width(), pixel_map.height());
    let style = match opts.clamp_max_mm {
        Some(hi) => HeatmapStyle::new(0.0, hi)?,
        None => HeatmapStyle::auto(&pixel_map),
    };
    heatmap::write_heatmap(&pixel_map, &style, &out_dir.join(ro::PIXEL_HEATMAP))?;
    let filtered = median_downsample(&pixel_map, opts.median_k)?;
    heatmap::write_heatmap(&filtered, &style, &out_dir.join(format!("pixel_error_median{}.ppm", opts.median_k)))?;

    let region = effective_region(&pixel_map, opts.threshold_mm)?;
    heatmap::write_mask(&region.mask, &out_dir.join(ro::REGION_PPM))?;
    let region_report = RegionReport {
        threshold_mm: opts.threshold_mm,
        fraction: region.fraction,
        cells_in_region: region.mask.count_true(),
        cells_total: region.mask.len(),
    };
    formats::write_json(&out_dir.join(ro::REGION_JSON), &region_report)?;

    // per-keyframe |e| maps, rebuilt from the point records
    let points_path = eval_dir.join(outputs::POINTS_CSV);
    let mut per_kf: BTreeMap<(u64, u32), Vec<PointError>> = BTreeMap::new();
    for (i, row) in read_table(&points_path, &outputs::POINTS_HEADER)?.iter().enumerate() {
        let key = (parse_cell(&points_path, i, &row[0])?, parse_cell(&points_path, i, &row[1])?);
        per_kf.entry(key).or_default().push(PointError {
            p: parse_cell(&points_path, i, &row[2])?,
            q: parse_cell(&points_path, i, &row[3])?,
            e_depth_mm: parse_cell(&points_path, i, &row[4])?,
        });
    }
    for ((id, rev), recs) in &per_kf {
        let m = pixelwise_error_map(recs, w, h)?;
        heatmap::write_heatmap(&m.mean_abs, &style, &out_dir.join(format!("keyframes/kf{id:04}_r{rev}.ppm")))?;
    }

    let kf_path = eval_dir.join(outputs::KEYFRAMES_CSV);
    let abs_path = eval_dir.join(outputs::KEYFRAME_ABS_CSV);
    let kf_rows = read_table(&kf_path, &outputs::KEYFRAMES_HEADER)?;
    let abs_rows = read_table(&abs_path, &outputs::KEYFRAME_ABS_HEADER)?;
    if kf_rows.len() != abs_rows.len() {
        return Err(FormatError::invalid(&abs_path, "row count differs from keyframes.csv").into());
    }
    let summary_rows: Vec<Vec<String>> = kf_rows
        .iter()
        .zip(&abs_rows)
        .map(|(k, a)| {
            let mut row = k[..6].to_vec();
            row.push(a[2].clone());
            row.extend_from_slice(&k[6..]);
            row
        })
        .collect();
    formats::write_csv(&out_dir.join(ro::KEYFRAME_SUMMARY), &ro::KEYFRAME_SUMMARY_HEADER, &summary_rows)?;

    let summary = ReportSummary { style, median_k: opts.median_k, region: region_report, keyframes: kf_rows.len() };
    formats::write_json(&out_dir.join(ro::REPORT_JSON), &summary)?;
    Ok(summary)
}
