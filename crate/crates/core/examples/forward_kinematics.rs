//! Gripper pose of the shipped 7-link arm table at a few joint vectors.

use reconeval::kinematics::{forward_kinematics, ArmModel, JointAngles};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let arm = ArmModel::default_synthetic();
    for (i, link) in arm.links().iter().enumerate() {
        println!("link {i}: a {:7.1} mm  alpha {:6.3} rad  d {:7.1} mm  theta0 {:6.3} rad", link.a, link.alpha, link.d, link.theta0);
    }
    let configs = [
        [0.0; 7],
        [0.2, 0.75, 0.0, -1.35, 0.0, 1.05, 0.3],
        [0.5, -0.3, 0.4, 0.9, -0.2, 0.1, 1.0],
    ];
    for a in configs {
        let g = forward_kinematics(&arm, &JointAngles::new(a)?)?;
        let t = g.translation();
        println!("{a:?}\n  gripper at ({:.2}, {:.2}, {:.2}) mm, rotation {:.4} rad", t.x, t.y, t.z, g.rotation().angle());
    }
    Ok(())
}
