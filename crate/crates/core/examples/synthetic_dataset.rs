//! Generate the shipped desk scene with depth noise and write it to a
//! directory (default: a temporary one).

use std::path::PathBuf;

use reconeval::kinematics::ArmModel;
use reconeval::simgen::{SimConfig, Simulator};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tmp = tempfile::tempdir()?;
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| tmp.path().to_path_buf());

    let mut cfg = SimConfig::desk_default();
    cfg.noise.depth_sigma_mm = 1.0;
    let dataset = Simulator::new(cfg, ArmModel::default_synthetic())?.simulate()?;
    println!(
        "{} joint samples, {} frames, {} keyframes, {} calibration stops",
        dataset.joint_log.len(),
        dataset.frame_log.len(),
        dataset.keyframes.len(),
        dataset.calib_samples.len()
    );
    for kf in dataset.keyframes.iter().take(5) {
        println!("  keyframe {} at {} ns: {} feature pixels", kf.kf_id, kf.t_ns, kf.feature_count());
    }
    let manifest = dataset.write(&out)?;
    for f in &manifest.files {
        if f.role != "keyframe_raster" && f.role != "truth" {
            println!("  {:<16} {} {}", f.role, &f.sha256[..12], f.path);
        }
    }
    println!("{} files under {}", manifest.files.len(), out.display());
    Ok(())
}
