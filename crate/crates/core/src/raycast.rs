//! Camera back-projection and ground-truth depth by ray casting against a
//! triangle mesh (Möller–Trumbore).

use nalgebra::{Point3, Unit, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Pose;
use crate::raster::{DepthMap, Mask, RasterError};

/// Determinant threshold below which a ray counts as parallel to a triangle.
pub const PARALLEL_EPS: f64 = 1e-9;
/// Smallest admissible triangle area, mm².
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RaycastError {
    #[error("pixel (p={p}, q={q}) outside {width}×{height} raster")]
    OutOfRaster { p: f64, q: f64, width: usize, height: usize },
    #[error("pixel (p={p}, q={q}) lies beyond the field of view of the distortion model")]
    OutsideFov { p: f64, q: f64 },
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("triangle {index} references vertex {vertex}, mesh has {count}")]
    IndexOutOfRange { index: usize, vertex: usize, count: usize },
    #[error("triangle {index} is degenerate (area {area:e} mm²)")]
    DegenerateTriangle { index: usize, area: f64 },
    #[error("non-finite vertex {0}")]
    NonFiniteVertex(usize),
    #[error("ray direction must be non-zero and finite")]
    BadDirection,
    #[error("camera pose must be rigid, got scale {0}")]
    ScaledPose(f64),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CameraModel {
    Pinhole,
    /// ATAN/FOV distortion with parameter `w` (rad).
    Fov { w: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IntrinsicsJson", into = "IntrinsicsJson")]
pub struct Intrinsics {
    pub model: CameraModel,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn pinhole(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self, RaycastError> {
        Intrinsics { model: CameraModel::Pinhole, fx, fy, cx, cy, width, height }.validated()
    }

    pub fn fov(fx: f64, fy: f64, cx: f64, cy: f64, w: f64, width: usize, height: usize) -> Result<Self, RaycastError> {
        Intrinsics { model: CameraModel::Fov { w }, fx, fy, cx, cy, width, height }.validated()
    }

    pub fn validated(self) -> Result<Self, RaycastError> {
        let bad = |m: &str| Err(RaycastError::InvalidIntrinsics(m.to_string()));
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return bad("focal lengths must be positive");
        }
        if self.width == 0 || self.height == 0 {
            return bad("raster must be non-empty");
        }
        if !(0.0 <= self.cx && self.cx < self.width as f64 && 0.0 <= self.cy && self.cy < self.height as f64) {
            return bad("principal point must lie inside the raster");
        }
        if let CameraModel::Fov { w } = self.model {
            if !(w > 0.0 && w < std::f64::consts::PI) {
                return bad("fov parameter w must lie in (0, π)");
            }
        }
        Ok(self)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IntrinsicsJson {
    model: String,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    w_rad: Option<f64>,
    width: usize,
    height: usize,
}

impl TryFrom<IntrinsicsJson> for Intrinsics {
    type Error = RaycastError;
    fn try_from(j: IntrinsicsJson) -> Result<Self, Self::Error> {
        let model = match (j.model.as_str(), j.w_rad) {
            ("pinhole", None) => CameraModel::Pinhole,
            ("fov", Some(w)) => CameraModel::Fov { w },
            ("pinhole", Some(_)) => {
                return Err(RaycastError::InvalidIntrinsics("pinhole model takes no w_rad".into()))
            }
            ("fov", None) => return Err(RaycastError::InvalidIntrinsics("fov model needs w_rad".into())),
            (other, _) => return Err(RaycastError::InvalidIntrinsics(format!("unknown model `{other}`"))),
        };
        Intrinsics { model, fx: j.fx, fy: j.fy, cx: j.cx, cy: j.cy, width: j.width, height: j.height }.validated()
    }
}

impl From<Intrinsics> for IntrinsicsJson {
    fn from(k: Intrinsics) -> Self {
        let (model, w_rad) = match k.model {
            CameraModel::Pinhole => ("pinhole", None),
            CameraModel::Fov { w } => ("fov", Some(w)),
        };
        IntrinsicsJson {
            model: model.to_string(),
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            w_rad,
            width: k.width,
            height: k.height,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Point3<f64>,
    pub dir: Unit<Vector3<f64>>,
}

impl Ray {
    pub fn new(origin: Point3<f64>, dir: Vector3<f64>) -> Result<Self, RaycastError> {
        if !dir.iter().all(|v| v.is_finite()) {
            return Err(RaycastError::BadDirection);
        }
        let dir = Unit::try_new(dir, 0.0).ok_or(RaycastError::BadDirection)?;
        Ok(Ray { origin, dir })
    }

    pub fn at(&self, t: f64) -> Point3<f64> {
        self.origin + self.dir.into_inner() * t
    }

    /// The same ray expressed in `pose`'s target space. `pose` must be rigid
    /// for `t` to keep its meaning.
    pub fn transformed(&self, pose: &Pose) -> Ray {
        Ray {
            origin: pose.transform_point(&self.origin),
            dir: Unit::new_unchecked(pose.rotate_vector(&self.dir)),
        }
    }
}

/// Camera-space ray through pixel centre `(p, q)`; integer coordinates are
/// pixel centres.
pub fn pixel_ray(k: &Intrinsics, p: f64, q: f64) -> Result<Ray, RaycastError> {
    let inside = p >= 0.0 && q >= 0.0 && p < k.height as f64 && q < k.width as f64;
    if !inside {
        return Err(RaycastError::OutOfRaster { p, q, width: k.width, height: k.height });
    }
    let x = (q - k.cx) / k.fx;
    let y = (p - k.cy) / k.fy;
    let (x, y) = match k.model {
        CameraModel::Pinhole => (x, y),
        CameraModel::Fov { w } => {
            let rd = x.hypot(y);
            if rd == 0.0 {
                (0.0, 0.0)
            } else {
                if rd * w >= std::f64::consts::FRAC_PI_2 {
                    return Err(RaycastError::OutsideFov { p, q });
                }
                let ru = (rd * w).tan() / (2.0 * (w / 2.0).tan());
                (x * ru / rd, y * ru / rd)
            }
        }
    };
    Ray::new(Point3::origin(), Vector3::new(x, y, 1.0))
}

/// Möller–Trumbore. Returns `(t, u, v)` for a hit with `t ≥ 0`; no backface
/// culling.
pub fn ray_triangle_intersect(ray: &Ray, tri: &[Point3<f64>; 3]) -> Option<(f64, f64, f64)> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let pvec = ray.dir.cross(&e2);
    let det = e1.dot(&pvec);
    if det.abs() < PARALLEL_EPS {
        return None;
    }
    let inv_det = 1.0 / det;
    let tvec = ray.origin - tri[0];
    let u = tvec.dot(&pvec) * inv_det;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(&e1);
    let v = ray.dir.dot(&qvec) * inv_det;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&qvec) * inv_det;
    (t >= 0.0).then_some((t, u, v))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub u: f64,
    pub v: f64,
    pub triangle: usize,
}

/// Triangle mesh in mm.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Point3<f64>>,
    triangles: Vec<[usize; 3]>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Point3<f64>>, triangles: Vec<[usize; 3]>) -> Result<Self, RaycastError> {
        if let Some(i) = vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(RaycastError::NonFiniteVertex(i));
        }
        for (index, tri) in triangles.iter().enumerate() {
            if let Some(&vertex) = tri.iter().find(|&&v| v >= vertices.len()) {
                return Err(RaycastError::IndexOutOfRange { index, vertex, count: vertices.len() });
            }
            let [a, b, c] = tri.map(|i| vertices[i]);
            let area = 0.5 * (b - a).cross(&(c - a)).norm();
            if area.is_nan() || area <= MIN_TRIANGLE_AREA {
                return Err(RaycastError::DegenerateTriangle { index, area });
            }
        }
        Ok(TriMesh { vertices, triangles })
    }

    /// Closed cube `[0, side]³` (12 outward-wound triangles) mapped by `pose`.
    pub fn cube(side: f64, pose: &Pose) -> Result<Self, RaycastError> {
        let corners: Vec<Point3<f64>> = (0..8)
            .map(|i| {
                let local = Point3::new(
                    side * (i & 1) as f64,
                    side * ((i >> 1) & 1) as f64,
                    side * ((i >> 2) & 1) as f64,
                );
                pose.transform_point(&local)
            })
            .collect();
        // corner index = x + 2y + 4z
        let triangles = vec![
            [0, 2, 1], [1, 2, 3], // z = 0
            [4, 5, 6], [5, 7, 6], // z = side
            [0, 1, 4], [1, 5, 4], // y = 0
            [2, 6, 3], [3, 6, 7], // y = side
            [0, 4, 2], [2, 4, 6], // x = 0
            [1, 3, 5], [3, 7, 5], // x = side
        ];
        TriMesh::new(corners, triangles)
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn triangle(&self, i: usize) -> [Point3<f64>; 3] {
        self.triangles[i].map(|v| self.vertices[v])
    }

    /// Nearest hit over all triangles (brute force).
    pub fn intersect(&self, ray: &Ray) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        for i in 0..self.triangles.len() {
            if let Some((t, u, v)) = ray_triangle_intersect(ray, &self.triangle(i)) {
                if best.is_none_or(|b| t < b.t) {
                    best = Some(Hit { t, u, v, triangle: i });
                }
            }
        }
        best
    }
}

/// How a hit is turned into a depth value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DepthConvention {
    /// Camera-frame z of the hit point.
    #[default]
    ZDepth,
    /// Euclidean distance from the camera centre.
    AlongRay,
}

/// Depth of `mesh` seen from a camera at `camera_to_pattern`; pixels without
/// a hit (or outside `mask`) are NaN.
pub fn ground_truth_depth_map(
    camera_to_pattern: &Pose,
    k: &Intrinsics,
    mesh: &TriMesh,
    mask: Option<&Mask>,
    convention: DepthConvention,
) -> Result<DepthMap, RaycastError> {
    if !camera_to_pattern.is_rigid() {
        return Err(RaycastError::ScaledPose(camera_to_pattern.scale()));
    }
    let mut out = DepthMap::invalid(k.width, k.height);
    if let Some(m) = mask {
        out.same_shape(m)?;
    }
    for p in 0..k.height {
        for q in 0..k.width {
            if mask.is_some_and(|m| !*m.at(p, q)) {
                continue;
            }
            let ray_cam = match pixel_ray(k, p as f64, q as f64) {
                Ok(r) => r,
                Err(RaycastError::OutsideFov { .. }) => continue,
                Err(e) => return Err(e),
            };
            let ray = ray_cam.transformed(camera_to_pattern);
            if let Some(hit) = mesh.intersect(&ray) {
                *out.at_mut(p, q) = match convention {
                    DepthConvention::ZDepth => hit.t * ray_cam.dir.z,
                    DepthConvention::AlongRay => hit.t,
                };
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::spaces;
    use nalgebra::UnitQuaternion;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pinhole() -> Intrinsics {
        Intrinsics::pinhole(100.0, 100.0, 50.0, 50.0, 200, 100).unwrap()
    }

    #[test]
    fn principal_ray() {
        let r = pixel_ray(&pinhole(), 50.0, 50.0).unwrap();
        assert_eq!(r.dir.into_inner(), Vector3::new(0.0, 0.0, 1.0));
        assert_eq!(r.origin, Point3::origin());
    }

    #[test]
    fn off_axis_ray_round_trips_through_projection() {
        let k = pinhole();
        let r = pixel_ray(&k, 50.0, 150.0).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((r.dir.into_inner() - Vector3::new(h, 0.0, h)).norm() < 1e-12);
        // pinhole projection of any point on the ray lands back on the pixel
        let x = r.at(321.0);
        let (q, p) = (k.fx * x.x / x.z + k.cx, k.fy * x.y / x.z + k.cy);
        assert!((q - 150.0).abs() < 1e-9 && (p - 50.0).abs() < 1e-9);
    }

    #[test]
    fn fov_model_tends_to_pinhole() {
        let k = pinhole();
        let f = Intrinsics::fov(100.0, 100.0, 50.0, 50.0, 1e-7, 200, 100).unwrap();
        for p in (0..100).step_by(7) {
            for q in (0..200).step_by(11) {
                let a = pixel_ray(&k, p as f64, q as f64).unwrap();
                let b = pixel_ray(&f, p as f64, q as f64).unwrap();
                assert!((a.dir.into_inner() - b.dir.into_inner()).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn fov_model_distorts_outward() {
        let f = Intrinsics::fov(100.0, 100.0, 50.0, 50.0, 0.9, 200, 100).unwrap();
        let r = pixel_ray(&f, 50.0, 150.0).unwrap();
        // r_u = tan(r_d w) / (2 tan(w/2)) with r_d = 1
        let ru = 0.9f64.tan() / (2.0 * 0.45f64.tan());
        assert!((r.dir.x / r.dir.z - ru).abs() < 1e-12);
    }

    #[test]
    fn pixel_outside_raster() {
        assert!(matches!(pixel_ray(&pinhole(), 100.0, 0.0), Err(RaycastError::OutOfRaster { .. })));
        assert!(pixel_ray(&pinhole(), -0.5, 0.0).is_err());
    }

    #[test]
    fn intrinsics_validation() {
        assert!(Intrinsics::pinhole(0.0, 1.0, 1.0, 1.0, 4, 4).is_err());
        assert!(Intrinsics::pinhole(1.0, 1.0, 4.0, 1.0, 4, 4).is_err());
        assert!(Intrinsics::fov(1.0, 1.0, 1.0, 1.0, 3.2, 4, 4).is_err());
        let j = r#"{"model":"fov","fx":1,"fy":1,"cx":1,"cy":1,"w_rad":0.9,"width":4,"height":4}"#;
        let k: Intrinsics = serde_json::from_str(j).unwrap();
        assert_eq!(k.model, CameraModel::Fov { w: 0.9 });
        assert!(serde_json::from_str::<Intrinsics>(&j.replace("fov", "pinhole")).is_err());
    }

    fn tri() -> [Point3<f64>; 3] {
        [Point3::new(-1.0, -1.0, 5.0), Point3::new(3.0, -1.0, 5.0), Point3::new(-1.0, 3.0, 5.0)]
    }

    #[test]
    fn moller_trumbore_examples() {
        let hit = ray_triangle_intersect(&Ray::new(Point3::origin(), Vector3::z()).unwrap(), &tri()).unwrap();
        // plane z = 5 reached at t = 5; (0,0) = v0 + 0.25 e1 + 0.25 e2
        assert!((hit.0 - 5.0).abs() < 1e-15);
        assert!((hit.1 - 0.25).abs() < 1e-15 && (hit.2 - 0.25).abs() < 1e-15);

        assert!(ray_triangle_intersect(&Ray::new(Point3::origin(), -Vector3::z()).unwrap(), &tri()).is_none());
        let in_plane = Ray::new(Point3::new(0.0, 0.0, 5.0), Vector3::x()).unwrap();
        assert!(ray_triangle_intersect(&in_plane, &tri()).is_none());
    }

    #[test]
    fn mesh_validation() {
        let v = vec![Point3::origin(), Point3::new(1.0, 0.0, 0.0), Point3::new(2.0, 0.0, 0.0)];
        assert!(matches!(TriMesh::new(v.clone(), vec![[0, 1, 2]]), Err(RaycastError::DegenerateTriangle { .. })));
        assert!(matches!(TriMesh::new(v, vec![[0, 1, 3]]), Err(RaycastError::IndexOutOfRange { .. })));
    }

    #[test]
    fn cube_faces_wind_outward() {
        let cube = TriMesh::cube(2.0, &Pose::identity(spaces::PATTERN)).unwrap();
        let centre = Point3::new(1.0, 1.0, 1.0);
        for i in 0..12 {
            let [a, b, c] = cube.triangle(i);
            let n = (b - a).cross(&(c - a));
            assert!(n.dot(&(a - centre)) > 0.0, "triangle {i}");
        }
    }

    fn looking_down_z(distance: f64) -> Pose {
        // camera at (50, 50, -distance) in pattern space looking along +z
        Pose::rigid(
            UnitQuaternion::identity(),
            Vector3::new(50.0, 50.0, -distance),
            spaces::CAMERA,
            spaces::PATTERN,
        )
        .unwrap()
    }

    #[test]
    fn fronto_parallel_face_has_constant_z_depth() {
        let cube = TriMesh::cube(100.0, &Pose::identity(spaces::PATTERN)).unwrap();
        let k = Intrinsics::pinhole(200.0, 200.0, 40.0, 30.0, 80, 60).unwrap();
        let d = ground_truth_depth_map(&looking_down_z(500.0), &k, &cube, None, DepthConvention::ZDepth).unwrap();
        let mut hits = 0;
        for (_, _, &v) in d.iter_pixels() {
            if !v.is_nan() {
                hits += 1;
                assert!((v - 500.0).abs() < 1e-9);
            }
        }
        assert!(hits > 0 && hits < d.len());
        // corner pixel sees past the cube
        assert!(d.at(0, 0).is_nan());

        let along = ground_truth_depth_map(&looking_down_z(500.0), &k, &cube, None, DepthConvention::AlongRay).unwrap();
        assert!((*along.at(30, 40) - 500.0).abs() < 1e-9);
        assert!(*along.at(30, 60) > 500.0);
    }

    #[test]
    fn mask_limits_computed_pixels() {
        let cube = TriMesh::cube(100.0, &Pose::identity(spaces::PATTERN)).unwrap();
        let k = Intrinsics::pinhole(200.0, 200.0, 40.0, 30.0, 80, 60).unwrap();
        let mut mask = Mask::filled(80, 60, false);
        *mask.at_mut(30, 40) = true;
        let d = ground_truth_depth_map(&looking_down_z(500.0), &k, &cube, Some(&mask), DepthConvention::ZDepth)
            .unwrap();
        assert_eq!(d.valid_count(), 1);
        let scaled = Pose::from_parts(UnitQuaternion::identity(), Vector3::zeros(), 2.0, spaces::CAMERA, spaces::PATTERN)
            .unwrap();
        assert!(matches!(
            ground_truth_depth_map(&scaled, &k, &cube, None, DepthConvention::ZDepth),
            Err(RaycastError::ScaledPose(_))
        ));
    }

    #[test]
    fn oblique_view_matches_exhaustive_oracle() {
        let cube = TriMesh::cube(100.0, &Pose::identity(spaces::PATTERN)).unwrap();
        let k = Intrinsics::pinhole(150.0, 150.0, 40.0, 30.0, 80, 60).unwrap();
        // 45° about y, looking at the cube centre from 400 mm
        let rot = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), std::f64::consts::FRAC_PI_4);
        let centre = Vector3::new(50.0, 50.0, 50.0);
        let cam = Pose::rigid(rot, centre - rot * Vector3::new(0.0, 0.0, 400.0), spaces::CAMERA, spaces::PATTERN)
            .unwrap();
        let d = ground_truth_depth_map(&cam, &k, &cube, None, DepthConvention::ZDepth).unwrap();
        let cam_from_pattern = cam.inverse();
        let mut seen = 0;
        for (p, q, &got) in d.iter_pixels() {
            let ray = pixel_ray(&k, p as f64, q as f64).unwrap().transformed(&cam);
            // every triangle, keep all hits, take the smallest
            let best = (0..12)
                .filter_map(|i| ray_triangle_intersect(&ray, &cube.triangle(i)))
                .map(|h| h.0)
                .fold(f64::INFINITY, f64::min);
            if best.is_finite() {
                seen += 1;
                let z = cam_from_pattern.transform_point(&ray.at(best)).z;
                assert!((got - z).abs() < 1e-9);
                assert!(got > 0.0);
            } else {
                assert!(got.is_nan());
            }
        }
        assert!(seen > 100);
    }

    #[test]
    fn random_cube_lines_cross_an_even_number_of_faces() {
        let cube = TriMesh::cube(100.0, &Pose::identity(spaces::PATTERN)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..2000 {
            let o = Point3::new(
                rng.random_range(-200.0..300.0),
                rng.random_range(-200.0..300.0),
                rng.random_range(-200.0..300.0),
            );
            let d = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let fwd = Ray::new(o, d).unwrap();
            let back = Ray::new(o, -d).unwrap();
            let count = (0..12)
                .filter(|&i| ray_triangle_intersect(&fwd, &cube.triangle(i)).is_some())
                .count()
                + (0..12)
                    .filter(|&i| ray_triangle_intersect(&back, &cube.triangle(i)).is_some())
                    .count();
            assert!(count == 0 || count == 2, "count {count}");
        }
    }
}
