//! Virtual depth camera over analytic scenes.
//!
//! World z is up. Camera frames follow the usual optical convention: +z
//! forward, +x right, +y down.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acquisition::{ColorImage, DepthImage, Frame, FrameSource, Intrinsics};
use crate::cloud::Rgb;
use crate::error::{Error, Result};
use crate::geom::{RigidTransform, Vec3};

/// Distance within which a point counts as lying on a surface.
pub const SURFACE_TOLERANCE: f64 = 1e-6;

fn gray() -> Rgb {
    [0.7, 0.7, 0.7]
}

/// Analytic shapes, each in its own local frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase", deny_unknown_fields)]
pub enum Primitive {
    /// Rectangle `size[0] × size[1]` centered in the local xy plane. Its
    /// front side, and normal, is local +z.
    Plane {
        pose: RigidTransform,
        size: [f64; 2],
        #[serde(default = "gray")]
        color: Rgb,
    },
    Sphere {
        center: Vec3,
        radius: f64,
        #[serde(default = "gray")]
        color: Rgb,
    },
    /// Open tube around local z, centered, without end caps.
    Cylinder {
        pose: RigidTransform,
        radius: f64,
        length: f64,
        #[serde(default = "gray")]
        color: Rgb,
    },
    /// Centered box with edge lengths `size`.
    Box {
        pose: RigidTransform,
        size: [f64; 3],
        #[serde(default = "gray")]
        color: Rgb,
    },
}

/// Closest point on a primitive to a query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub point: Vec3,
    /// Outward unit normal.
    pub normal: Vec3,
    pub distance: f64,
    pub primitive: usize,
}

impl Primitive {
    pub fn color(&self) -> Rgb {
        match self {
            Primitive::Plane { color, .. }
            | Primitive::Sphere { color, .. }
            | Primitive::Cylinder { color, .. }
            | Primitive::Box { color, .. } => *color,
        }
    }

    fn pose(&self) -> RigidTransform {
        match self {
            Primitive::Plane { pose, .. } | Primitive::Cylinder { pose, .. } | Primitive::Box { pose, .. } => *pose,
            Primitive::Sphere { center, .. } => RigidTransform::from_translation(*center),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims: Vec<f64> = match self {
            Primitive::Plane { size, .. } => size.to_vec(),
            Primitive::Sphere { radius, center, .. } => {
                if !center.is_finite() {
                    return Err(Error::invalid("sphere center is not finite"));
                }
                vec![*radius]
            }
            Primitive::Cylinder { radius, length, .. } => vec![*radius, *length],
            Primitive::Box { size, .. } => size.to_vec(),
        };
        if dims.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::invalid(format!("primitive dimensions must be positive: {dims:?}")));
        }
        if self.color().iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::invalid("primitive color components must lie in [0, 1]"));
        }
        if !self.pose().translation.is_finite() {
            return Err(Error::invalid("primitive pose is not finite"));
        }
        Ok(())
    }

    /// Smallest ray parameter `t > 0` with `origin + t·dir` on the surface,
    /// with the outward normal there.
    pub fn intersect(&self, origin: Vec3, dir: Vec3) -> Option<(f64, Vec3)> {
        let pose = self.pose();
        let inv = pose.inverse();
        let o = inv.apply(origin);
        let d = inv.apply_vector(dir);
        let (t, n_local) = match self {
            Primitive::Plane { size, .. } => {
                if d.z.abs() < 1e-15 {
                    return None;
                }
                let t = -o.z / d.z;
                let h = o + d * t;
                if t <= 0.0 || h.x.abs() > 0.5 * size[0] || h.y.abs() > 0.5 * size[1] {
                    return None;
                }
                (t, Vec3::Z)
            }
            Primitive::Sphere { radius, .. } => {
                let a = d.dot(d);
                let b = 2.0 * o.dot(d);
                let c = o.dot(o) - radius * radius;
                let t = smallest_positive_root(a, b, c, |_| true)?;
                (t, (o + d * t).normalize())
            }
            Primitive::Cylinder { radius, length, .. } => {
                let a = d.x * d.x + d.y * d.y;
                if a < 1e-30 {
                    return None;
                }
                let b = 2.0 * (o.x * d.x + o.y * d.y);
                let c = o.x * o.x + o.y * o.y - radius * radius;
                let t = smallest_positive_root(a, b, c, |t| (o.z + d.z * t).abs() <= 0.5 * length)?;
                let h = o + d * t;
                (t, Vec3::new(h.x, h.y, 0.0).normalize())
            }
            Primitive::Box { size, .. } => {
                let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
                let mut axis0 = 0;
                for k in 0..3 {
                    let h = 0.5 * size[k];
                    let (ok, dk) = (o.get(k), d.get(k));
                    if dk.abs() < 1e-15 {
                        if ok.abs() > h {
                            return None;
                        }
                        continue;
                    }
                    let (mut a, mut b) = ((-h - ok) / dk, (h - ok) / dk);
                    if a > b {
                        std::mem::swap(&mut a, &mut b);
                    }
                    if a > t0 {
                        t0 = a;
                        axis0 = k;
                    }
                    t1 = t1.min(b);
                }
                if t0 > t1 || t0 <= 0.0 {
                    return None;
                }
                let mut n = [0.0; 3];
                n[axis0] = -d.get(axis0).signum();
                (t0, Vec3::from(n))
            }
        };
        Some((t, pose.apply_vector(n_local)))
    }

    /// Closest surface point to `p` with the outward normal there.
    pub fn closest(&self, p: Vec3) -> (Vec3, Vec3) {
        let pose = self.pose();
        let q = pose.inverse().apply(p);
        let (c, n) = match self {
            Primitive::Plane { size, .. } => (
                Vec3::new(
                    q.x.clamp(-0.5 * size[0], 0.5 * size[0]),
                    q.y.clamp(-0.5 * size[1], 0.5 * size[1]),
                    0.0,
                ),
                Vec3::Z,
            ),
            Primitive::Sphere { radius, .. } => {
                let n = q.try_normalize().unwrap_or(Vec3::Z);
                (n * *radius, n)
            }
            Primitive::Cylinder { radius, length, .. } => {
                let radial = Vec3::new(q.x, q.y, 0.0).try_normalize().unwrap_or(Vec3::X);
                let z = q.z.clamp(-0.5 * length, 0.5 * length);
                (radial * *radius + Vec3::Z * z, radial)
            }
            Primitive::Box { size, .. } => {
                let h = Vec3::new(0.5 * size[0], 0.5 * size[1], 0.5 * size[2]);
                let inside = (0..3).all(|k| q.get(k).abs() <= h.get(k));
                // face whose plane is nearest (inside) or most violated (outside)
                let face = (0..3)
                    .max_by(|&a, &b| {
                        let ra = q.get(a).abs() - h.get(a);
                        let rb = q.get(b).abs() - h.get(b);
                        ra.total_cmp(&rb)
                    })
                    .expect("three axes");
                let mut c = q.to_array();
                for k in 0..3 {
                    c[k] = c[k].clamp(-h.get(k), h.get(k));
                }
                if inside {
                    c[face] = h.get(face) * q.get(face).signum();
                }
                let mut n = [0.0; 3];
                n[face] = if q.get(face) >= 0.0 { 1.0 } else { -1.0 };
                (Vec3::from(c), Vec3::from(n))
            }
        };
        (pose.apply(c), pose.apply_vector(n))
    }
}

fn smallest_positive_root(a: f64, b: f64, c: f64, accept: impl Fn(f64) -> bool) -> Option<f64> {
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    // numerically stable pair of roots
    let q = -0.5 * (b + b.signum() * s);
    let (mut r0, mut r1) = if q != 0.0 { (q / a, c / q) } else { (-0.5 * b / a, -0.5 * b / a) };
    if r0 > r1 {
        std::mem::swap(&mut r0, &mut r1);
    }
    [r0, r1].into_iter().find(|&t| t > 1e-12 && accept(t))
}

/// A set of primitives.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub primitives: Vec<Primitive>,
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        self.primitives.iter().try_for_each(Primitive::validate)
    }

    /// Nearest hit along a ray: `(t, normal, primitive index)`.
    pub fn cast(&self, origin: Vec3, dir: Vec3) -> Option<(f64, Vec3, usize)> {
        self.primitives
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.intersect(origin, dir).map(|(t, n)| (t, n, i)))
            .min_by(|a, b| a.0.total_cmp(&b.0))
    }

    /// Closest point on any primitive; ties go to the lower index.
    pub fn closest_surface(&self, p: Vec3) -> Option<SurfacePoint> {
        self.primitives
            .iter()
            .enumerate()
            .map(|(i, prim)| {
                let (q, n) = prim.closest(p);
                SurfacePoint {
                    point: q,
                    normal: n,
                    distance: q.distance(p),
                    primitive: i,
                }
            })
            .min_by(|a, b| a.distance.total_cmp(&b.distance))
    }

    /// Outward normal at a point on the scene's surface.
    pub fn ground_truth_normal(&self, p: Vec3) -> Result<Vec3> {
        match self.closest_surface(p) {
            Some(s) if s.distance <= SURFACE_TOLERANCE => Ok(s.normal),
            Some(s) => Err(Error::invalid(format!(
                "point {p:?} is {:.3e} m off the nearest surface",
                s.distance
            ))),
            None => Err(Error::invalid("scene has no primitives")),
        }
    }
}

/// Pinhole camera placed with a look-at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Camera {
    pub eye: Vec3,
    pub target: Vec3,
    #[serde(default = "world_up")]
    pub up: Vec3,
    pub intrinsics: Intrinsics,
}

fn world_up() -> Vec3 {
    Vec3::Z
}

impl Camera {
    /// Camera looking at `target` with the principal point at the image
    /// center.
    pub fn looking_at(eye: Vec3, target: Vec3, width: usize, height: usize, focal: f64) -> Self {
        Self {
            eye,
            target,
            up: Vec3::Z,
            intrinsics: Intrinsics {
                fx: focal,
                fy: focal,
                cx: (width as f64 - 1.0) / 2.0,
                cy: (height as f64 - 1.0) / 2.0,
                width,
                height,
            },
        }
    }

    pub fn pose(&self) -> Result<RigidTransform> {
        RigidTransform::look_at(self.eye, self.target, self.up)
    }
}

/// Periodic scaling of the dropout probability across frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Strobe {
    /// Frame `i` uses `multipliers[i % multipliers.len()]`.
    pub multipliers: Vec<f64>,
}

/// Per-frame sensor noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default)]
    pub depth_sigma: f64,
    #[serde(default)]
    pub dropout_prob: f64,
    /// Edge length in pixels of the square blocks that drop out together.
    #[serde(default = "one")]
    pub dropout_patch: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strobe: Option<Strobe>,
}

fn one() -> usize {
    1
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self::none()
    }
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self {
            depth_sigma: 0.0,
            dropout_prob: 0.0,
            dropout_patch: 1,
            strobe: None,
        }
    }

    /// Flickering light: heavy block dropout on alternating frames plus
    /// millimeter depth jitter.
    pub fn strobe() -> Self {
        Self {
            depth_sigma: 0.001,
            dropout_prob: 0.35,
            dropout_patch: 3,
            strobe: Some(Strobe {
                multipliers: vec![1.0, 0.3],
            }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.depth_sigma >= 0.0 && self.depth_sigma.is_finite()) {
            return Err(Error::invalid(format!("depth_sigma must be >= 0, got {}", self.depth_sigma)));
        }
        if !(0.0..=1.0).contains(&self.dropout_prob) {
            return Err(Error::invalid(format!(
                "dropout_prob must lie in [0, 1], got {}",
                self.dropout_prob
            )));
        }
        if self.dropout_patch == 0 {
            return Err(Error::invalid("dropout_patch must be at least 1"));
        }
        if let Some(s) = &self.strobe {
            if s.multipliers.is_empty() || s.multipliers.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
                return Err(Error::invalid("strobe multipliers must be a non-empty list of values >= 0"));
            }
        }
        Ok(())
    }

    /// Dropout probability for the given frame index.
    pub fn dropout_at(&self, frame_index: usize) -> f64 {
        let m = self
            .strobe
            .as_ref()
            .map_or(1.0, |s| s.multipliers[frame_index % s.multipliers.len()]);
        (self.dropout_prob * m).clamp(0.0, 1.0)
    }
}

/// Renders frame `frame_index` of a capture sequence. Noise is drawn from a
/// ChaCha8 stream keyed by `(seed, frame_index)`.
pub fn render_frame(
    scene: &Scene,
    camera: &Camera,
    noise: &NoiseSpec,
    seed: u64,
    frame_index: usize,
) -> Result<Frame> {
    scene.validate()?;
    noise.validate()?;
    camera.intrinsics.validate()?;
    let pose = camera.pose()?;
    let k = camera.intrinsics;
    let (w, h) = (k.width, k.height);

    let hits: Vec<Option<(f64, Vec3, usize, f64)>> = (0..w * h)
        .into_par_iter()
        .map(|idx| {
            let (u, v) = (idx % w, idx / w);
            let local = k.ray(u as f64, v as f64);
            let dir = pose.apply_vector(local);
            scene.cast(pose.translation, dir).map(|(t, n, i)| {
                let facing = n.dot(-dir.normalize()).abs();
                (t, n, i, facing)
            })
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame_index as u64);
    let p_drop = noise.dropout_at(frame_index);
    let patch = noise.dropout_patch;
    let (pw, ph) = (w.div_ceil(patch), h.div_ceil(patch));
    let dropped: Vec<bool> = (0..pw * ph).map(|_| p_drop > 0.0 && rng.random::<f64>() < p_drop).collect();
    let jitter = Normal::new(0.0, noise.depth_sigma).map_err(|e| Error::invalid(e.to_string()))?;

    let mut depth = DepthImage::new(w, h);
    let mut color = ColorImage::new(w, h);
    for (idx, hit) in hits.into_iter().enumerate() {
        let Some((t, _n, prim, facing)) = hit else { continue };
        let (u, v) = (idx % w, idx / w);
        let mut d = t;
        if noise.depth_sigma > 0.0 {
            d += jitter.sample(&mut rng);
        }
        if dropped[(v / patch) * pw + u / patch] || d <= 0.0 {
            continue;
        }
        depth.data[idx] = d;
        let shade = 0.3 + 0.7 * facing;
        let c = scene.primitives[prim].color();
        color.data[idx] = [
            (c[0] * shade * 255.0).round() as u8,
            (c[1] * shade * 255.0).round() as u8,
            (c[2] * shade * 255.0).round() as u8,
        ];
    }
    Ok(Frame {
        color,
        depth,
        intrinsics: k,
        camera_pose: pose,
    })
}

/// A scene together with the camera that observes it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    #[serde(flatten)]
    pub scene: Scene,
    pub camera: Camera,
    #[serde(default)]
    pub noise: NoiseSpec,
}

/// Endless frame sequence rendered from one scene and camera.
#[derive(Debug, Clone)]
pub struct SyntheticSource {
    pub scene: Scene,
    pub camera: Camera,
    pub noise: NoiseSpec,
    pub seed: u64,
    next: usize,
}

impl SyntheticSource {
    pub fn new(scene: Scene, camera: Camera, noise: NoiseSpec, seed: u64) -> Self {
        Self {
            scene,
            camera,
            noise,
            seed,
            next: 0,
        }
    }

    pub fn from_file(file: &SceneFile, seed: u64) -> Self {
        Self::new(file.scene.clone(), file.camera.clone(), file.noise.clone(), seed)
    }
}

impl FrameSource for SyntheticSource {
    fn next_frame(&mut self) -> Result<Option<Frame>> {
        let f = render_frame(&self.scene, &self.camera, &self.noise, self.seed, self.next)?;
        self.next += 1;
        Ok(Some(f))
    }
}

/// Ready-made scenes. Objects sit above the ground plane z = 0 and face a
/// camera at (0, -1, 0.5) looking along +y.
pub mod scenes {
    use super::*;
    use crate::geom::rotation_from_axis_angle;
    use std::f64::consts::FRAC_PI_2;

    pub const CAMERA_EYE: Vec3 = Vec3::new(0.0, -1.0, 0.5);

    fn camera(width: usize, height: usize, focal: f64) -> Camera {
        Camera::looking_at(CAMERA_EYE, Vec3::new(0.0, 0.0, 0.5), width, height, focal)
    }

    fn tilted_plane(tilt: f64, color: Rgb) -> Primitive {
        // local +z turned from world +z toward -y by `tilt`
        Primitive::Plane {
            pose: RigidTransform::new(
                rotation_from_axis_angle(Vec3::X, tilt).expect("unit axis"),
                Vec3::new(0.0, 0.0, 0.5),
            ),
            size: [0.8, 0.4],
            color,
        }
    }

    /// Vertical 0.8 × 0.4 m plane at y = 0 facing the camera.
    pub fn flat_plane() -> SceneFile {
        SceneFile {
            scene: Scene {
                primitives: vec![tilted_plane(FRAC_PI_2, [0.8, 0.8, 0.8])],
            },
            camera: camera(160, 120, 150.0),
            noise: NoiseSpec::none(),
        }
    }

    /// The same plane leaned back 45°, normal (0, -1, 1)/√2.
    pub fn inclined_plane() -> SceneFile {
        SceneFile {
            scene: Scene {
                primitives: vec![tilted_plane(FRAC_PI_2 / 2.0, [0.8, 0.6, 0.4])],
            },
            camera: camera(160, 120, 150.0),
            noise: NoiseSpec::none(),
        }
    }

    /// Inclined plane under flickering light, at a lower resolution.
    pub fn strobe_plane() -> SceneFile {
        SceneFile {
            camera: camera(128, 96, 120.0),
            noise: NoiseSpec::strobe(),
            ..inclined_plane()
        }
    }

    /// Sphere of radius 0.25 centered at (0, 0, 0.5).
    pub fn sphere() -> SceneFile {
        SceneFile {
            scene: Scene {
                primitives: vec![Primitive::Sphere {
                    center: Vec3::new(0.0, 0.0, 0.5),
                    radius: 0.25,
                    color: [0.3, 0.6, 0.9],
                }],
            },
            camera: camera(160, 120, 150.0),
            noise: NoiseSpec::none(),
        }
    }

    /// Tube of radius 0.15 and length 0.8 lying along x at height 0.5.
    pub fn cylinder() -> SceneFile {
        SceneFile {
            scene: Scene {
                primitives: vec![Primitive::Cylinder {
                    pose: RigidTransform::new(
                        rotation_from_axis_angle(Vec3::Y, FRAC_PI_2).expect("unit axis"),
                        Vec3::new(0.0, 0.0, 0.5),
                    ),
                    radius: 0.15,
                    length: 0.8,
                    color: [0.9, 0.4, 0.3],
                }],
            },
            camera: camera(160, 120, 150.0),
            noise: NoiseSpec::none(),
        }
    }

    /// A large box and a small sphere well apart, for cluster selection.
    pub fn two_objects() -> SceneFile {
        SceneFile {
            scene: Scene {
                primitives: vec![
                    Primitive::Box {
                        pose: RigidTransform::from_translation(Vec3::new(-0.25, 0.1, 0.5)),
                        size: [0.3, 0.2, 0.4],
                        color: [0.2, 0.8, 0.2],
                    },
                    Primitive::Sphere {
                        center: Vec3::new(0.3, 0.0, 0.45),
                        radius: 0.1,
                        color: [0.8, 0.2, 0.8],
                    },
                ],
            },
            camera: camera(160, 120, 150.0),
            noise: NoiseSpec::none(),
        }
    }

    /// Every bundled scene by name.
    pub fn all() -> Vec<(&'static str, SceneFile)> {
        vec![
            ("flat_plane", flat_plane()),
            ("inclined_plane", inclined_plane()),
            ("strobe_plane", strobe_plane()),
            ("sphere", sphere()),
            ("cylinder", cylinder()),
            ("two_objects", two_objects()),
        ]
    }
}
