//! Synthetic scene generation: analytic surfaces, deterministic point
//! sampling, and per-scene annotations of analytically unconstrained pose
//! directions at the canonical viewpoint.

use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use lpicp::geometry::{Point3, PointCloud, Pose6D};
use lpicp::localizability::Block;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneKind {
    Plane,
    Corridor,
    Tunnel,
    CubeRoom,
    OpenTerrain,
    LShape,
}

impl std::str::FromStr for SceneKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "plane" => Ok(SceneKind::Plane),
            "corridor" => Ok(SceneKind::Corridor),
            "tunnel" => Ok(SceneKind::Tunnel),
            "cuberoom" | "cube_room" | "cube" => Ok(SceneKind::CubeRoom),
            "openterrain" | "open_terrain" | "terrain" => Ok(SceneKind::OpenTerrain),
            "lshape" | "l_shape" => Ok(SceneKind::LShape),
            other => Err(format!(
                "unknown scene kind '{other}' (expected plane|corridor|tunnel|cuberoom|openterrain|lshape)"
            )),
        }
    }
}

/// Scene parameters. `length`/`width`/`height` are interpreted per kind;
/// a fixed seed makes the sampled map bitwise reproducible.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SceneSpec {
    pub kind: SceneKind,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    /// Surface sampling density, points per square meter.
    pub density: f64,
    /// Gaussian noise along the surface normal, meters.
    pub sigma: f64,
    pub seed: u64,
}

impl SceneSpec {
    pub fn for_kind(kind: SceneKind) -> Self {
        let (length, width, height) = match kind {
            SceneKind::Plane => (20.0, 20.0, 0.0),
            SceneKind::Corridor => (40.0, 6.0, 4.0),
            SceneKind::Tunnel => (40.0, 6.0, 4.0),
            SceneKind::CubeRoom => (10.0, 10.0, 4.0),
            SceneKind::OpenTerrain => (30.0, 30.0, 0.4),
            SceneKind::LShape => (30.0, 6.0, 4.0),
        };
        SceneSpec {
            kind,
            length,
            width,
            height,
            density: 25.0,
            sigma: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.density <= 0.0 {
            return Err("density must be positive".into());
        }
        if self.sigma < 0.0 {
            return Err("sigma must be nonnegative".into());
        }
        if self.length <= 0.0 || self.width <= 0.0 {
            return Err("dimensions must be positive".into());
        }
        Ok(())
    }
}

/// Analytic surface used both for point sampling and for ray casting.
#[derive(Debug, Clone)]
pub enum Surface {
    /// Rectangle `origin + s*u + t*v`, `s in [0, len_u]`, `t in [0, len_v]`,
    /// with unit normal `n = u x v`.
    Rect {
        origin: Point3,
        u: Vector3<f64>,
        v: Vector3<f64>,
        len_u: f64,
        len_v: f64,
    },
    /// Height field `z = amp * sin(2 pi x / wavelength) * sin(2 pi y / wavelength)`
    /// over `[x0, x1] x [y0, y1]`.
    HeightField {
        amp: f64,
        wavelength: f64,
        x0: f64,
        x1: f64,
        y0: f64,
        y1: f64,
    },
}

impl Surface {
    fn rect(origin: [f64; 3], u: [f64; 3], len_u: f64, v: [f64; 3], len_v: f64) -> Surface {
        Surface::Rect {
            origin: Vector3::from(origin),
            u: Vector3::from(u).normalize(),
            v: Vector3::from(v).normalize(),
            len_u,
            len_v,
        }
    }

    pub fn area(&self) -> f64 {
        match self {
            Surface::Rect { len_u, len_v, .. } => len_u * len_v,
            Surface::HeightField { x0, x1, y0, y1, .. } => (x1 - x0) * (y1 - y0),
        }
    }

    fn height_at(amp: f64, wavelength: f64, x: f64, y: f64) -> f64 {
        let k = 2.0 * std::f64::consts::PI / wavelength;
        amp * (k * x).sin() * (k * y).sin()
    }

    /// Samples `round(area * density)` points, displaced along the local
    /// normal by Gaussian noise of the given sigma.
    pub fn sample(&self, density: f64, sigma: f64, rng: &mut ChaCha8Rng) -> Vec<Point3> {
        let count = (self.area() * density).round() as usize;
        let normal_noise = Normal::new(0.0, sigma.max(1e-300)).unwrap();
        let mut out = Vec::with_capacity(count);
        match self {
            Surface::Rect {
                origin,
                u,
                v,
                len_u,
                len_v,
            } => {
                let n = u.cross(v);
                for _ in 0..count {
                    let s: f64 = rng.gen_range(0.0..*len_u);
                    let t: f64 = rng.gen_range(0.0..*len_v);
                    let noise = if sigma > 0.0 { normal_noise.sample(rng) } else { 0.0 };
                    out.push(origin + s * u + t * v + noise * n);
                }
            }
            Surface::HeightField {
                amp,
                wavelength,
                x0,
                x1,
                y0,
                y1,
            } => {
                for _ in 0..count {
                    let x: f64 = rng.gen_range(*x0..*x1);
                    let y: f64 = rng.gen_range(*y0..*y1);
                    let z = Surface::height_at(*amp, *wavelength, x, y);
                    let noise = if sigma > 0.0 { normal_noise.sample(rng) } else { 0.0 };
                    out.push(Vector3::new(x, y, z + noise));
                }
            }
        }
        out
    }

    /// First intersection of the ray `ro + t * rd` with the surface in
    /// `[t_min, t_max]`, if any.
    pub fn raycast(&self, ro: &Point3, rd: &Vector3<f64>, t_min: f64, t_max: f64) -> Option<f64> {
        match self {
            Surface::Rect {
                origin,
                u,
                v,
                len_u,
                len_v,
            } => {
                let n = u.cross(v);
                let denom = rd.dot(&n);
                if denom.abs() < 1e-12 {
                    return None;
                }
                let t = (origin - ro).dot(&n) / denom;
                if t < t_min || t > t_max {
                    return None;
                }
                let p = ro + t * rd;
                let s = (p - origin).dot(u);
                let w = (p - origin).dot(v);
                if s < 0.0 || s > *len_u || w < 0.0 || w > *len_v {
                    return None;
                }
                Some(t)
            }
            Surface::HeightField {
                amp,
                wavelength,
                x0,
                x1,
                y0,
                y1,
            } => {
                // Fixed-step march with bisection refinement.
                let g = |t: f64| -> Option<f64> {
                    let p = ro + t * rd;
                    if p.x < *x0 || p.x > *x1 || p.y < *y0 || p.y > *y1 {
                        return None;
                    }
                    Some(p.z - Surface::height_at(*amp, *wavelength, p.x, p.y))
                };
                let step = 0.02;
                let mut t_prev = t_min;
                let mut g_prev = g(t_prev);
                let mut t = t_min + step;
                while t <= t_max {
                    let g_cur = g(t);
                    if let (Some(a), Some(b)) = (g_prev, g_cur) {
                        if a.signum() != b.signum() {
                            // Bisect [t_prev, t].
                            let (mut lo, mut hi) = (t_prev, t);
                            let (mut glo, _) = (a, b);
                            for _ in 0..60 {
                                let mid = 0.5 * (lo + hi);
                                let gm = g(mid).unwrap_or(0.0);
                                if gm.signum() == glo.signum() {
                                    lo = mid;
                                    glo = gm;
                                } else {
                                    hi = mid;
                                }
                            }
                            return Some(0.5 * (lo + hi));
                        }
                    }
                    t_prev = t;
                    g_prev = g_cur;
                    t += step;
                }
                None
            }
        }
    }
}

/// Pose directions with analytically zero constraint information at the
/// canonical viewpoint.
#[derive(Debug, Clone, Default)]
pub struct DegeneracyAnnotation {
    pub unconstrained: Vec<(Block, Vector3<f64>)>,
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub spec: SceneSpec,
    pub surfaces: Vec<Surface>,
    pub map: PointCloud,
    pub annotation: DegeneracyAnnotation,
    /// Sensor pose the annotation refers to.
    pub canonical_pose: Pose6D,
}

/// Builds the surfaces for a spec, samples the map cloud deterministically
/// under the spec seed, and attaches the degeneracy annotation.
///
/// Surface interiors are sampled at the areal density; the fold lines
/// where two surfaces meet are additionally sampled at the same numeric
/// value as a linear density, mirroring how accumulated scan maps carry
/// returns along creases.
pub fn generate_scene(spec: &SceneSpec) -> Scene {
    let surfaces = build_surfaces(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut points = Vec::new();
    for s in &surfaces {
        points.extend(s.sample(spec.density, spec.sigma, &mut rng));
    }
    let normal_noise = Normal::new(0.0, spec.sigma.max(1e-300)).unwrap();
    for (a, b) in crease_segments(spec) {
        let dir = (b - a).normalize();
        // Two fixed perpendicular directions for the noise displacement.
        let seed_axis = if dir.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        let u = dir.cross(&seed_axis).normalize();
        let v = dir.cross(&u);
        let count = ((b - a).norm() * spec.density).round() as usize;
        for _ in 0..count {
            let t: f64 = rng.gen_range(0.0..1.0);
            let mut p = a + t * (b - a);
            if spec.sigma > 0.0 {
                p += normal_noise.sample(&mut rng) * u + normal_noise.sample(&mut rng) * v;
            }
            points.push(p);
        }
    }
    let (annotation, canonical_pose) = annotate(spec);
    Scene {
        spec: *spec,
        surfaces,
        map: PointCloud::new(points),
        annotation,
        canonical_pose,
    }
}

/// Fold lines shared by two surfaces, per scene kind.
fn crease_segments(spec: &SceneSpec) -> Vec<(Point3, Point3)> {
    let (l, w, h) = (spec.length, spec.width, spec.height);
    let seg = |a: [f64; 3], b: [f64; 3]| (Vector3::from(a), Vector3::from(b));
    match spec.kind {
        SceneKind::Plane | SceneKind::OpenTerrain => Vec::new(),
        SceneKind::Corridor => vec![
            seg([0.0, -w / 2.0, 0.0], [l, -w / 2.0, 0.0]),
            seg([0.0, w / 2.0, 0.0], [l, w / 2.0, 0.0]),
        ],
        SceneKind::Tunnel => vec![
            seg([0.0, -w / 2.0, 0.0], [l, -w / 2.0, 0.0]),
            seg([0.0, w / 2.0, 0.0], [l, w / 2.0, 0.0]),
            seg([0.0, -w / 2.0, h], [l, -w / 2.0, h]),
            seg([0.0, w / 2.0, h], [l, w / 2.0, h]),
        ],
        SceneKind::CubeRoom => {
            let (hx, hy) = (l / 2.0, w / 2.0);
            let mut out = Vec::new();
            for z in [0.0, h] {
                out.push(seg([-hx, -hy, z], [hx, -hy, z]));
                out.push(seg([-hx, hy, z], [hx, hy, z]));
                out.push(seg([-hx, -hy, z], [-hx, hy, z]));
                out.push(seg([hx, -hy, z], [hx, hy, z]));
            }
            for (x, y) in [(-hx, -hy), (-hx, hy), (hx, -hy), (hx, hy)] {
                out.push(seg([x, y, 0.0], [x, y, h]));
            }
            out
        }
        SceneKind::LShape => {
            let l2 = l / 2.0;
            vec![
                // Floor-wall folds.
                seg([0.0, -w / 2.0, 0.0], [l, -w / 2.0, 0.0]),
                seg([0.0, w / 2.0, 0.0], [l - w, w / 2.0, 0.0]),
                seg([l, -w / 2.0, 0.0], [l, w / 2.0 + l2, 0.0]),
                seg([l - w, w / 2.0, 0.0], [l - w, w / 2.0 + l2, 0.0]),
                // Vertical folds at the junction corners.
                seg([l - w, w / 2.0, 0.0], [l - w, w / 2.0, h]),
                seg([l, -w / 2.0, 0.0], [l, -w / 2.0, h]),
            ]
        }
    }
}

fn build_surfaces(spec: &SceneSpec) -> Vec<Surface> {
    let (l, w, h) = (spec.length, spec.width, spec.height);
    match spec.kind {
        SceneKind::Plane => vec![Surface::rect(
            [-l / 2.0, -w / 2.0, 0.0],
            [1.0, 0.0, 0.0],
            l,
            [0.0, 1.0, 0.0],
            w,
        )],
        SceneKind::Corridor => vec![
            // Floor.
            Surface::rect([0.0, -w / 2.0, 0.0], [1.0, 0.0, 0.0], l, [0.0, 1.0, 0.0], w),
            // Two side walls; no end caps, so the axis is unconstrained.
            Surface::rect([0.0, -w / 2.0, 0.0], [1.0, 0.0, 0.0], l, [0.0, 0.0, 1.0], h),
            Surface::rect([0.0, w / 2.0, 0.0], [1.0, 0.0, 0.0], l, [0.0, 0.0, 1.0], h),
        ],
        SceneKind::Tunnel => vec![
            Surface::rect([0.0, -w / 2.0, 0.0], [1.0, 0.0, 0.0], l, [0.0, 1.0, 0.0], w),
            Surface::rect([0.0, -w / 2.0, 0.0], [1.0, 0.0, 0.0], l, [0.0, 0.0, 1.0], h),
            Surface::rect([0.0, w / 2.0, 0.0], [1.0, 0.0, 0.0], l, [0.0, 0.0, 1.0], h),
            Surface::rect([0.0, -w / 2.0, h], [1.0, 0.0, 0.0], l, [0.0, 1.0, 0.0], w),
        ],
        SceneKind::CubeRoom => {
            let (hx, hy) = (l / 2.0, w / 2.0);
            vec![
                Surface::rect([-hx, -hy, 0.0], [1.0, 0.0, 0.0], l, [0.0, 1.0, 0.0], w),
                Surface::rect([-hx, -hy, h], [1.0, 0.0, 0.0], l, [0.0, 1.0, 0.0], w),
                Surface::rect([-hx, -hy, 0.0], [1.0, 0.0, 0.0], l, [0.0, 0.0, 1.0], h),
                Surface::rect([-hx, hy, 0.0], [1.0, 0.0, 0.0], l, [0.0, 0.0, 1.0], h),
                Surface::rect([-hx, -hy, 0.0], [0.0, 1.0, 0.0], w, [0.0, 0.0, 1.0], h),
                Surface::rect([hx, -hy, 0.0], [0.0, 1.0, 0.0], w, [0.0, 0.0, 1.0], h),
            ]
        }
        SceneKind::OpenTerrain => vec![Surface::HeightField {
            amp: h.max(0.1),
            wavelength: 8.0,
            x0: -l / 2.0,
            x1: l / 2.0,
            y0: -w / 2.0,
            y1: w / 2.0,
        }],
        SceneKind::LShape => {
            // Leg 1 along +x, leg 2 along +y from the far end of leg 1.
            let l2 = l / 2.0;
            vec![
                // Floors of both legs.
                Surface::rect([0.0, -w / 2.0, 0.0], [1.0, 0.0, 0.0], l, [0.0, 1.0, 0.0], w),
                Surface::rect(
                    [l - w, w / 2.0, 0.0],
                    [1.0, 0.0, 0.0],
                    w,
                    [0.0, 1.0, 0.0],
                    l2,
                ),
                // Outer south wall, full length.
                Surface::rect([0.0, -w / 2.0, 0.0], [1.0, 0.0, 0.0], l, [0.0, 0.0, 1.0], h),
                // Inner north wall of leg 1 stops at the junction.
                Surface::rect(
                    [0.0, w / 2.0, 0.0],
                    [1.0, 0.0, 0.0],
                    l - w,
                    [0.0, 0.0, 1.0],
                    h,
                ),
                // Outer east wall spans the junction and leg 2.
                Surface::rect(
                    [l, -w / 2.0, 0.0],
                    [0.0, 1.0, 0.0],
                    w + l2,
                    [0.0, 0.0, 1.0],
                    h,
                ),
                // Inner west wall of leg 2.
                Surface::rect(
                    [l - w, w / 2.0, 0.0],
                    [0.0, 1.0, 0.0],
                    l2,
                    [0.0, 0.0, 1.0],
                    h,
                ),
            ]
        }
    }
}

fn annotate(spec: &SceneSpec) -> (DegeneracyAnnotation, Pose6D) {
    let ex = Vector3::x();
    let ey = Vector3::y();
    let ez = Vector3::z();
    match spec.kind {
        SceneKind::Plane => (
            DegeneracyAnnotation {
                unconstrained: vec![
                    (Block::Translation, ex),
                    (Block::Translation, ey),
                    (Block::Rotation, ez),
                ],
            },
            Pose6D::new(0.0, 0.0, 0.0, 0.0, 0.0, 1.5),
        ),
        SceneKind::Corridor | SceneKind::Tunnel => (
            DegeneracyAnnotation {
                unconstrained: vec![(Block::Translation, ex)],
            },
            Pose6D::new(0.0, 0.0, 0.0, spec.length / 2.0, 0.0, 1.5),
        ),
        SceneKind::CubeRoom => (
            DegeneracyAnnotation::default(),
            Pose6D::new(0.0, 0.0, 0.0, 0.0, 0.0, spec.height / 2.0),
        ),
        SceneKind::OpenTerrain => (
            DegeneracyAnnotation::default(),
            Pose6D::new(0.0, 0.0, 0.0, 0.0, 0.0, 1.5),
        ),
        SceneKind::LShape => (
            // The junction corner is visible from the canonical viewpoint,
            // so nothing is analytically null there.
            DegeneracyAnnotation::default(),
            Pose6D::new(0.0, 0.0, 0.0, spec.length - 2.0 * spec.width, 0.0, 1.5),
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plane_point_count_is_exact() {
        let spec = SceneSpec {
            density: 25.0,
            sigma: 0.01,
            seed: 7,
            ..SceneSpec::for_kind(SceneKind::Plane)
        };
        let scene = generate_scene(&spec);
        assert_eq!(scene.map.len(), 10_000);
        // Points lie on z = 0 up to the noise scale.
        for p in &scene.map.points {
            assert!(p.z.abs() < 0.01 * 6.0);
        }
    }

    #[test]
    fn scene_generation_is_deterministic_under_seed() {
        let spec = SceneSpec {
            seed: 42,
            sigma: 0.02,
            ..SceneSpec::for_kind(SceneKind::Corridor)
        };
        let a = generate_scene(&spec);
        let b = generate_scene(&spec);
        assert_eq!(a.map.len(), b.map.len());
        for (p, q) in a.map.points.iter().zip(&b.map.points) {
            assert_eq!(p, q); // bitwise
        }
        let c = generate_scene(&SceneSpec { seed: 43, ..spec });
        assert!(a.map.points.iter().zip(&c.map.points).any(|(p, q)| p != q));
    }

    #[test]
    fn corridor_annotation_marks_the_axis() {
        let scene = generate_scene(&SceneSpec::for_kind(SceneKind::Corridor));
        assert_eq!(scene.annotation.unconstrained.len(), 1);
        let (block, dir) = &scene.annotation.unconstrained[0];
        assert_eq!(*block, Block::Translation);
        assert!(dir.dot(&Vector3::x()).abs() > 1.0 - 1e-12);
    }

    #[test]
    fn cube_room_annotation_is_empty() {
        let scene = generate_scene(&SceneSpec::for_kind(SceneKind::CubeRoom));
        assert!(scene.annotation.unconstrained.is_empty());
    }

    #[test]
    fn rect_raycast_matches_plane_intersection() {
        let s = Surface::rect([-10.0, -10.0, 0.0], [1.0, 0.0, 0.0], 20.0, [0.0, 1.0, 0.0], 20.0);
        let ro = Vector3::new(0.0, 0.0, 1.5);
        let rd = Vector3::new(0.3, 0.2, -1.0).normalize();
        let t = s.raycast(&ro, &rd, 0.0, 100.0).unwrap();
        // Analytic: t = 1.5 / |rd.z|
        assert!((t - 1.5 / rd.z.abs()).abs() < 1e-9);
        // Miss when pointing up.
        assert!(s.raycast(&ro, &Vector3::new(0.0, 0.0, 1.0), 0.0, 100.0).is_none());
    }

    #[test]
    fn heightfield_raycast_lands_on_the_surface() {
        let s = Surface::HeightField {
            amp: 0.4,
            wavelength: 8.0,
            x0: -15.0,
            x1: 15.0,
            y0: -15.0,
            y1: 15.0,
        };
        let ro = Vector3::new(0.0, 0.0, 2.0);
        let rd = Vector3::new(0.5, 0.3, -0.4).normalize();
        let t = s.raycast(&ro, &rd, 0.0, 100.0).unwrap();
        let p = ro + t * rd;
        let k = 2.0 * std::f64::consts::PI / 8.0;
        let z_surf = 0.4 * (k * p.x).sin() * (k * p.y).sin();
        assert!((p.z - z_surf).abs() < 1e-6);
    }
}
