//! Ray-cast a cube into a small pinhole camera and print the depth raster
//! as ASCII, nearer surfaces darker.

use nalgebra::{UnitQuaternion, Vector3};
use reconeval::geom::Pose;
use reconeval::raycast::{ground_truth_depth_map, pixel_ray, DepthConvention, Intrinsics, TriMesh};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let k = Intrinsics::pinhole(40.0, 40.0, 20.0, 12.0, 40, 24)?;
    let cube_pose = Pose::rigid(UnitQuaternion::from_euler_angles(0.0, 0.0, 0.5), Vector3::new(-40.0, -40.0, 0.0), "cube", "pattern")?;
    let mesh = TriMesh::cube(80.0, &cube_pose)?;
    // Camera above the pattern, tilted so two side faces show.
    let camera = Pose::rigid(
        UnitQuaternion::from_euler_angles(std::f64::consts::PI + 0.45, 0.0, 0.0),
        Vector3::new(0.0, -150.0, 320.0),
        "camera",
        "pattern",
    )?;
    let depth = ground_truth_depth_map(&camera, &k, &mesh, None, DepthConvention::ZDepth)?;
    let (lo, hi) = depth.valid_range().ok_or("camera sees nothing")?;
    let shades: Vec<char> = "@%#*+=-:".chars().collect();
    for p in 0..depth.height() {
        let row: String = (0..depth.width())
            .map(|q| {
                let d = *depth.at(p, q);
                if d.is_nan() {
                    return ' ';
                }
                let f = (d - lo) / (hi - lo).max(1e-9);
                shades[((f * shades.len() as f64) as usize).min(shades.len() - 1)]
            })
            .collect();
        println!("{row}");
    }
    println!("{} of {} pixels hit, depth {lo:.1}..{hi:.1} mm", depth.valid_count(), depth.len());
    println!("principal ray: {:?}", pixel_ray(&k, 12.0, 20.0)?.dir.into_inner());
    Ok(())
}
