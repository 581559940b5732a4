use reconeval::formats::{self, Manifest};
use reconeval::kinematics::ArmModel;
use reconeval::pipeline::{self, EvalInputs, EvalOptions};
use reconeval::simgen::{files, generate_dataset, SimConfig, SimError, Simulator, TruthRecord};
use reconeval::Error;

fn small(slam_scale: f64) -> SimConfig {
    let mut cfg = SimConfig::desk_default();
    cfg.keyframes.count = 4;
    cfg.slam_scale = slam_scale;
    cfg
}

fn evaluate_with_truth(cfg: &SimConfig) -> pipeline::EvalOutcome {
    let d = Simulator::new(cfg.clone(), ArmModel::default_synthetic()).unwrap().simulate().unwrap();
    let inputs = EvalInputs {
        keyframes: d.keyframes,
        joint_log: d.joint_log,
        arm: d.arm,
        t1: cfg.t1.clone(),
        t2: cfg.t2.clone(),
        mesh: d.mesh,
    };
    pipeline::evaluate(&inputs, &EvalOptions::default()).unwrap()
}

#[test]
fn injected_scale_is_recovered() {
    for s in [0.5, 1.0, 2.0, 10.0] {
        let out = evaluate_with_truth(&small(s));
        assert_eq!(out.keyframes.len(), 4);
        for k in &out.keyframes {
            let l = k.eval.scale.lambda;
            assert!((l - s).abs() <= 1e-9 * s, "s = {s}: lambda {l}");
            assert!(k.eval.stats.mean_mm.abs() < 1e-6);
        }
    }
}

#[test]
fn truth_sidecar_matches_pipeline_ground_truth() {
    let cfg = small(2.0);
    let dir = tempfile::tempdir().unwrap();
    generate_dataset(&cfg, &ArmModel::default_synthetic(), dir.path()).unwrap();
    let truth: Vec<TruthRecord> = formats::read_jsonl(&dir.path().join(files::TRUTH_KEYFRAMES)).unwrap();
    let out = evaluate_with_truth(&cfg);
    assert_eq!(truth.len(), out.keyframes.len());
    let mut compared = 0;
    for (t, k) in truth.iter().zip(&out.keyframes) {
        assert_eq!((t.kf_id, t.revision), (k.eval.kf_id, k.eval.revision));
        let (depth, meta) = formats::read_depth_raster(&dir.path().join(&t.depth)).unwrap();
        assert_eq!(meta.dtype, formats::RasterDtype::F64);
        for (a, b) in depth.data().iter().zip(k.eval.d_gt.data()) {
            if b.is_nan() {
                continue;
            }
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            compared += 1;
        }
    }
    assert!(compared > 1000);
}

#[test]
fn too_few_waypoints_is_an_error() {
    for n in [0, 1] {
        let mut cfg = small(2.0);
        cfg.waypoints_rad.truncate(n);
        let e = Simulator::new(cfg, ArmModel::default_synthetic()).unwrap_err();
        assert!(matches!(e, Error::Sim(SimError::TooFewWaypoints(m)) if m == n), "{e}");
    }
}

#[test]
fn manifest_lists_every_role_with_stable_hashes() {
    let cfg = small(2.0);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = generate_dataset(&cfg, &ArmModel::default_synthetic(), a.path()).unwrap();
    let mb = generate_dataset(&cfg, &ArmModel::default_synthetic(), b.path()).unwrap();
    assert_eq!(ma, mb);
    assert!(ma.files.len() >= 6);
    for role in ["jointlog", "framelog", "keyframes", "mesh", "intrinsics", "calib_samples"] {
        ma.path_for(role).unwrap();
    }
    assert_eq!(Manifest::load(&a.path().join(files::MANIFEST)).unwrap(), ma);
    assert_eq!(ma.seed, cfg.seed);
}
