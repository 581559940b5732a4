use nalgebra::{Point3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use reconeval::geom::Pose;
use reconeval::raycast::{ground_truth_depth_map, pixel_ray, DepthConvention, Intrinsics, Ray, TriMesh};

fn plane_hit(ray: &Ray, tri: &[Point3<f64>; 3]) -> Option<f64> {
    let (e1, e2) = (tri[1] - tri[0], tri[2] - tri[0]);
    let n = e1.cross(&e2);
    let denom = n.dot(&ray.dir);
    if denom.abs() < 1e-9 {
        return None;
    }
    let t = n.dot(&(tri[0] - ray.origin)) / denom;
    let x = ray.at(t) - tri[0];
    let nn = n.norm_squared();
    let (u, v) = (n.dot(&x.cross(&e2)) / nn, n.dot(&e1.cross(&x)) / nn);
    (t >= 0.0 && u >= 0.0 && v >= 0.0 && u + v <= 1.0).then_some(t)
}

fn point(rng: &mut ChaCha8Rng, r: f64) -> Point3<f64> {
    Point3::new(rng.random_range(-r..r), rng.random_range(-r..r), rng.random_range(-r..r))
}

fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
    let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    Pose::rigid(
        UnitQuaternion::from_scaled_axis(axis),
        point(rng, 50.0).coords,
        "cube",
        "pattern",
    )
    .unwrap()
}

#[test]
fn nearest_hit_is_the_exhaustive_minimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut hits = 0;
    for _ in 0..40 {
        let n_tri = rng.random_range(1..=1000);
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        while triangles.len() < n_tri {
            let c = point(&mut rng, 100.0);
            let tri = [c + point(&mut rng, 15.0).coords, c + point(&mut rng, 15.0).coords, c + point(&mut rng, 15.0).coords];
            if (tri[1] - tri[0]).cross(&(tri[2] - tri[0])).norm() < 1e-3 {
                continue;
            }
            let base = vertices.len();
            vertices.extend(tri);
            triangles.push([base, base + 1, base + 2]);
        }
        let mesh = TriMesh::new(vertices, triangles).unwrap();
        for _ in 0..100 {
            let o = point(&mut rng, 200.0);
            let ray = Ray::new(o, point(&mut rng, 100.0) - o).unwrap();
            let best = (0..mesh.triangles().len())
                .filter_map(|i| plane_hit(&ray, &mesh.triangle(i)))
                .fold(None, |m: Option<f64>, t| Some(m.map_or(t, |m| m.min(t))));
            match (mesh.intersect(&ray), best) {
                (Some(h), Some(t)) => {
                    hits += 1;
                    assert!((h.t - t).abs() < 1e-9, "{} vs {t}", h.t);
                }
                (None, None) => {}
                (a, b) => panic!("decision differs: {a:?} vs {b:?}"),
            }
        }
    }
    assert!(hits > 100);
}

#[test]
fn lines_cross_a_closed_cube_an_even_number_of_times() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..10_000 {
        let pose = random_pose(&mut rng);
        let side = rng.random_range(10.0..100.0);
        let mesh = TriMesh::cube(side, &pose).unwrap();
        let centre = pose.transform_point(&Point3::new(side / 2.0, side / 2.0, side / 2.0));
        let o = centre + point(&mut rng, side).coords;
        let dir = point(&mut rng, 1.0).coords;
        let Ok(fwd) = Ray::new(o, dir) else { continue };
        let back = Ray::new(o, -dir).unwrap();
        let crossings: usize = [fwd, back]
            .iter()
            .map(|r| (0..12).filter(|&i| plane_hit(r, &mesh.triangle(i)).is_some()).count())
            .sum();
        assert!(crossings.is_multiple_of(2) && crossings <= 2, "{crossings} crossings");
    }
}

#[test]
fn depth_map_points_lie_on_the_cube_surface() {
    let k = Intrinsics::fov(70.0, 70.0, 40.0, 30.0, 0.9, 80, 60).unwrap();
    let cube = Pose::rigid(UnitQuaternion::from_euler_angles(0.0, 0.0, 0.4), Vector3::new(-30.0, -20.0, 0.0), "cube", "pattern").unwrap();
    let mesh = TriMesh::cube(60.0, &cube).unwrap();
    let camera = Pose::rigid(
        UnitQuaternion::from_euler_angles(std::f64::consts::PI + 0.3, 0.1, 0.2),
        Vector3::new(0.0, -100.0, 250.0),
        "camera",
        "pattern",
    )
    .unwrap();
    let depth = ground_truth_depth_map(&camera, &k, &mesh, None, DepthConvention::ZDepth).unwrap();
    assert!(depth.valid_count() > 100);
    let to_cube = cube.inverse();
    for (p, q, &d) in depth.iter_pixels() {
        if d.is_nan() {
            continue;
        }
        let ray = pixel_ray(&k, p as f64, q as f64).unwrap();
        let x_cam = ray.at(d / ray.dir.z);
        let x = to_cube.transform_point(&camera.transform_point(&x_cam));
        let outside = x.iter().map(|&c| (-c).max(c - 60.0)).fold(f64::NEG_INFINITY, f64::max);
        assert!(outside.abs() < 1e-9, "pixel ({p}, {q}) is {outside} mm off the surface");
    }
}
