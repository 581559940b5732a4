//! Recover the base→pattern and camera→gripper transforms from simulated
//! calibration stops, with and without translation noise.

use reconeval::calib::{solve_extrinsics, SolverOptions};
use reconeval::kinematics::ArmModel;
use reconeval::simgen::{SimConfig, Simulator};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let arm = ArmModel::default_synthetic();
    for sigma in [0.0, 0.5] {
        let mut cfg = SimConfig::desk_default();
        cfg.calibration.sigma_t_mm = sigma;
        let samples = Simulator::new(cfg.clone(), arm.clone())?.simulate()?.calib_samples;
        let sol = solve_extrinsics(&samples, &arm, &SolverOptions::default())?;
        let e1 = (sol.t1.translation() - cfg.t1.translation()).norm();
        let e2 = (sol.t2.translation() - cfg.t2.translation()).norm();
        println!(
            "sigma {sigma} mm: rms {:.4} mm, T1 off {e1:.2e} mm, T2 off {e2:.2e} mm, {} iterations from start {}",
            sol.final_rms, sol.iterations, sol.restart_index
        );
    }
    Ok(())
}
