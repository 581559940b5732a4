//! Compose, invert and nudge similarity transforms between labelled spaces.

use nalgebra::{Point3, UnitQuaternion, Vector3};
use reconeval::geom::{pose_residual, Pose, ResidualWeights, Twist};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let camera_to_gripper = Pose::rigid(
        UnitQuaternion::from_euler_angles(0.0, 0.0, 0.3),
        Vector3::new(35.0, -20.0, 70.0),
        "camera",
        "gripper",
    )?;
    let gripper_to_base = Pose::rigid(
        UnitQuaternion::from_euler_angles(0.1, -0.2, 0.0),
        Vector3::new(400.0, 0.0, 300.0),
        "gripper",
        "sawyer",
    )?;

    let camera_to_base = gripper_to_base.compose(&camera_to_gripper)?;
    let t = camera_to_base.translation();
    println!("camera→base: t = ({:.2}, {:.2}, {:.2}) mm, angle {:.4} rad", t.x, t.y, t.z, camera_to_base.rotation().angle());

    let x = Point3::new(0.0, 0.0, 500.0);
    let y = camera_to_base.transform_point(&x);
    let back = camera_to_base.inverse().transform_point(&y);
    println!("point {x} -> {y} -> {back}");

    // Labels must chain; composing in the wrong order is an error.
    match camera_to_gripper.compose(&gripper_to_base) {
        Err(e) => println!("wrong order rejected: {e}"),
        Ok(_) => unreachable!(),
    }

    // A SLAM pose carries its own scale.
    let slam = Pose::from_parts(UnitQuaternion::identity(), Vector3::zeros(), 0.5, "sawyer", "slam")?;
    println!("camera→slam scale: {}", slam.compose(&camera_to_base)?.scale());

    let nudged = camera_to_base.retract(&Twist::rigid(Vector3::new(0.0, 0.0, 0.01), Vector3::new(1.0, 0.0, 0.0)));
    let r = pose_residual(&nudged, &camera_to_base, ResidualWeights::default(), false)?;
    println!("residual after a small twist: {:?}", r.to_vec());
    Ok(())
}
