//! Attach interpolated joint angles to camera frames and see which frames
//! fall outside the joint log or across a gap.

use reconeval::kinematics::JointAngles;
use reconeval::sync::{synchronize_streams, FrameLog, FrameRecord, Interpolation, JointLog, JointSample};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // 100 Hz joint stream with a 120 ms hole.
    let samples = (0..50)
        .filter(|i| !(20..32).contains(i))
        .map(|i| {
            let x = i as f64 * 0.01;
            Ok(JointSample { t_ns: i * 10_000_000, angles: JointAngles::new([x, -x, 0.5 * x, 0.0, 0.0, x, 0.1])? })
        })
        .collect::<Result<Vec<_>, reconeval::kinematics::KinematicsError>>()?;
    let joints = JointLog::new(samples)?;
    // 30 Hz camera frames, the last beyond the joint log.
    let frames = FrameLog::new((0..16).map(|i| FrameRecord { t_ns: i * 33_333_333, frame_id: i as u64 }).collect())?;

    for policy in [Interpolation::Linear, Interpolation::Nearest] {
        let report = synchronize_streams(&frames, &joints, 50_000_000, policy)?;
        println!("{policy:?}: {} packets, {} dropped", report.packets.len(), report.dropped.len());
        for p in report.packets.iter().take(3) {
            println!("  frame {} at {} ns: joint 0 = {:.4} rad", p.frame_id, p.t_ns, p.angles.as_array()[0]);
        }
        for d in &report.dropped {
            println!("  dropped frame {} ({})", d.frame_id, d.reason.as_str());
        }
    }
    Ok(())
}
