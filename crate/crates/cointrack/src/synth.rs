//! Synthetic coin-like sequence generator with exact ground truth.
//!
//! A textured planar object (two faces) rotates about an arbitrary 3D axis
//! and translates in front of a fixed pinhole camera; the per-frame
//! plane-to-image homography is computed analytically, never estimated. The
//! generator emits the dataset layout the evaluation kit reads, per-frame
//! material maps for the oracle embedding backend, ground-truth homographies,
//! and optional dense flow, which makes it the verification oracle for the
//! scoring, optimizer, adaptation and tracker modules.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use image::RgbImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Homography;
use crate::mask::{self, BinaryMask, Label, LabelImage, Side};
use crate::optimizer::FlowField;
use crate::segmenter::{EmbeddingBackend, EmbeddingGrid, Frame, LabelMask};

/// Scene material at a pixel; byte codes as stored in `materials/%06d.png`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Material {
    Background = 0,
    Distractor = 32,
    Occluder = 64,
    Obverse = 128,
    Reverse = 255,
}

impl Material {
    pub fn from_code(v: u8) -> Option<Material> {
        match v {
            0 => Some(Material::Background),
            32 => Some(Material::Distractor),
            64 => Some(Material::Occluder),
            128 => Some(Material::Obverse),
            255 => Some(Material::Reverse),
            _ => None,
        }
    }

    pub fn label(self) -> Label {
        match self {
            Material::Obverse => Label::Obverse,
            Material::Reverse => Label::Reverse,
            _ => Label::Background,
        }
    }
}

/// Procedural value-noise texture.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TextureSpec {
    /// Lattice spacing in plane pixels; larger is smoother.
    pub scale: f64,
    pub brightness: f64,
    pub contrast: f64,
    pub seed: u64,
    pub tint: [f64; 3],
}

impl Default for TextureSpec {
    fn default() -> Self {
        TextureSpec { scale: 8.0, brightness: 0.5, contrast: 0.3, seed: 0, tint: [1.0, 1.0, 1.0] }
    }
}

impl TextureSpec {
    fn octave(&self, u: f64, v: f64, scale: f64, seed: u64) -> f64 {
        let x = u / scale;
        let y = v / scale;
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = smoothstep(x - x0);
        let fy = smoothstep(y - y0);
        let (x0, y0) = (x0 as i64, y0 as i64);
        let v00 = lattice(seed, x0, y0);
        let v10 = lattice(seed, x0 + 1, y0);
        let v01 = lattice(seed, x0, y0 + 1);
        let v11 = lattice(seed, x0 + 1, y0 + 1);
        v00 * (1.0 - fx) * (1.0 - fy) + v10 * fx * (1.0 - fy) + v01 * (1.0 - fx) * fy
            + v11 * fx * fy
    }

    /// Deterministic two-octave value noise in [0, 1]: coarse structure with
    /// finer detail on top, the texture profile of real object faces.
    fn noise(&self, u: f64, v: f64) -> f64 {
        0.65 * self.octave(u, v, self.scale, self.seed)
            + 0.35 * self.octave(u + 31.7, v - 17.3, self.scale / 2.4, self.seed ^ 0xABCD)
    }

    /// RGB in [0, 1] before illumination and noise.
    pub fn texel(&self, u: f64, v: f64) -> [f64; 3] {
        let n = self.noise(u, v);
        let val = self.brightness + self.contrast * (2.0 * n - 1.0);
        [
            (val * self.tint[0]).clamp(0.0, 1.0),
            (val * self.tint[1]).clamp(0.0, 1.0),
            (val * self.tint[2]).clamp(0.0, 1.0),
        ]
    }
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// splitmix64-style lattice hash to [0, 1].
fn lattice(seed: u64, x: i64, y: i64) -> f64 {
    let mut z = seed
        .wrapping_add(0x9e3779b97f4a7c15u64.wrapping_mul(x as u64 ^ 0x5851f42d4c957f2d))
        .wrapping_add(0xbf58476d1ce4e5b9u64.wrapping_mul(y as u64 ^ 0x2545f4914f6cdd1d));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

/// Object outline in the canonical plane, centered at the plane origin.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum Outline {
    Ellipse { rx: f64, ry: f64 },
    Polygon { points: Vec<[f64; 2]> },
}

impl Outline {
    pub fn contains(&self, u: f64, v: f64) -> bool {
        match self {
            Outline::Ellipse { rx, ry } => {
                let a = u / rx;
                let b = v / ry;
                a * a + b * b <= 1.0
            }
            Outline::Polygon { points } => {
                // Ray casting.
                let n = points.len();
                if n < 3 {
                    return false;
                }
                let mut inside = false;
                let mut j = n - 1;
                for i in 0..n {
                    let (xi, yi) = (points[i][0], points[i][1]);
                    let (xj, yj) = (points[j][0], points[j][1]);
                    if ((yi > v) != (yj > v))
                        && (u < (xj - xi) * (v - yi) / (yj - yi) + xi)
                    {
                        inside = !inside;
                    }
                    j = i;
                }
                inside
            }
        }
    }

    /// Conservative radius bound around the plane origin.
    pub fn radius_bound(&self) -> f64 {
        match self {
            Outline::Ellipse { rx, ry } => rx.max(*ry),
            Outline::Polygon { points } => points
                .iter()
                .map(|p| p[0].hypot(p[1]))
                .fold(0.0, f64::max),
        }
    }
}

/// Fixed pinhole camera at the origin looking down +z; principal point at
/// the image center.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct CameraSpec {
    pub focal: f64,
    pub distance: f64,
}

impl Default for CameraSpec {
    fn default() -> Self {
        CameraSpec { focal: 400.0, distance: 400.0 }
    }
}

/// Rigid plane motion: spin about the plane normal composed with rotation
/// about a fixed world axis, plus linear translation of the plane center.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectorySpec {
    pub axis: [f64; 3],
    pub omega_deg: f64,
    pub angle0_deg: f64,
    pub spin_deg: f64,
    pub offset: [f64; 2],
    pub velocity: [f64; 2],
    /// Tilt rotation runs for this many frames, then the angle freezes
    /// (the in-plane spin and the translation keep going). None: unlimited.
    pub omega_frames: Option<usize>,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        TrajectorySpec {
            axis: [0.0, 1.0, 0.0],
            omega_deg: 0.0,
            angle0_deg: 0.0,
            spin_deg: 0.0,
            offset: [0.0, 0.0],
            velocity: [0.0, 0.0],
            omega_frames: None,
        }
    }
}

/// Axis-aligned moving occluder rectangle in image coordinates.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OccluderSpec {
    pub width: f64,
    pub height: f64,
    pub x0: f64,
    pub y0: f64,
    pub vx: f64,
    pub vy: f64,
    pub active_from: usize,
    pub active_until: Option<usize>,
    pub texture: TextureSpec,
}

impl Default for OccluderSpec {
    fn default() -> Self {
        OccluderSpec {
            width: 0.0,
            height: 0.0,
            x0: 0.0,
            y0: 0.0,
            vx: 0.0,
            vy: 0.0,
            active_from: 0,
            active_until: None,
            texture: TextureSpec { brightness: 0.4, contrast: 0.1, seed: 77, ..Default::default() },
        }
    }
}

impl OccluderSpec {
    fn contains(&self, x: f64, y: f64, t: usize) -> bool {
        if t < self.active_from || self.active_until.is_some_and(|u| t >= u) {
            return false;
        }
        let cx = self.x0 + self.vx * t as f64;
        let cy = self.y0 + self.vy * t as f64;
        (x - cx).abs() <= self.width * 0.5 && (y - cy).abs() <= self.height * 0.5
    }
}

/// A static distractor disk painted over the background: a region whose
/// material (and texture) resembles the object, the scripted segmentation
/// false positive.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DistractorSpec {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
    pub active_from: usize,
    pub texture: TextureSpec,
}

impl Default for DistractorSpec {
    fn default() -> Self {
        DistractorSpec {
            cx: 0.0,
            cy: 0.0,
            radius: 0.0,
            active_from: 0,
            texture: TextureSpec::default(),
        }
    }
}

impl DistractorSpec {
    fn contains(&self, x: f64, y: f64, t: usize) -> bool {
        t >= self.active_from && (x - self.cx).hypot(y - self.cy) <= self.radius
    }
}

/// Per-frame multiplicative illumination gain on the object:
/// `base + amplitude * sin(2 pi t / period)`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct IlluminationSpec {
    pub base: f64,
    pub amplitude: f64,
    pub period: f64,
}

impl Default for IlluminationSpec {
    fn default() -> Self {
        IlluminationSpec { base: 1.0, amplitude: 0.0, period: 60.0 }
    }
}

impl IlluminationSpec {
    fn gain(&self, t: usize) -> f64 {
        self.base + self.amplitude * (std::f64::consts::TAU * t as f64 / self.period).sin()
    }
}

/// Full scene description; serialized as JSON.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub seed: u64,
    pub camera: CameraSpec,
    pub outline: Outline,
    pub obverse_texture: TextureSpec,
    pub reverse_texture: TextureSpec,
    pub background_texture: TextureSpec,
    pub trajectory: TrajectorySpec,
    pub occluders: Vec<OccluderSpec>,
    pub distractor: Option<DistractorSpec>,
    pub illumination: IlluminationSpec,
    /// Additive Gaussian noise sigma in 8-bit units.
    pub noise_sigma: f64,
    /// Ground-truth annotation period in frames.
    pub gt_stride: usize,
    pub dense_gt: bool,
    /// Reject edge-on frames instead of rendering slivers.
    pub allow_edge_on: bool,
    pub emit_flow: bool,
    /// Minimum |cos| between the plane normal and the view ray for a frame
    /// to qualify as an initialization template.
    pub init_min_cos: f64,
    pub obverse_init_frame: Option<usize>,
    pub reverse_init_frame: Option<usize>,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            width: 320,
            height: 240,
            frames: 60,
            seed: 0,
            camera: CameraSpec::default(),
            outline: Outline::Ellipse { rx: 60.0, ry: 50.0 },
            // High-contrast faces so the appearance term can pin the
            // in-plane rotation of near-symmetric outlines.
            obverse_texture: TextureSpec { seed: 1, scale: 9.0, contrast: 0.45, ..Default::default() },
            reverse_texture: TextureSpec {
                seed: 2,
                scale: 9.0,
                brightness: 0.55,
                contrast: 0.4,
                ..Default::default()
            },
            background_texture: TextureSpec {
                seed: 3,
                brightness: 0.3,
                contrast: 0.15,
                scale: 16.0,
                ..Default::default()
            },
            trajectory: TrajectorySpec::default(),
            occluders: Vec::new(),
            distractor: None,
            illumination: IlluminationSpec::default(),
            noise_sigma: 0.0,
            gt_stride: 5,
            dense_gt: false,
            allow_edge_on: true,
            emit_flow: false,
            init_min_cos: 0.6,
            obverse_init_frame: None,
            reverse_init_frame: None,
        }
    }
}

impl SceneSpec {
    pub fn from_json_str(s: &str) -> Result<SceneSpec> {
        let spec: SceneSpec = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<SceneSpec> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text).map_err(|e| match e {
            Error::Json(j) => Error::malformed(path, j.to_string()),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.width > 4096 || self.height > 4096 {
            return Err(Error::InvalidConfig("scene dimensions out of range".into()));
        }
        if self.frames == 0 || self.frames > 100_000 {
            return Err(Error::InvalidConfig("frame count out of range".into()));
        }
        if self.camera.focal <= 0.0 || self.camera.distance <= 0.0 {
            return Err(Error::InvalidConfig("camera focal/distance must be positive".into()));
        }
        if self.outline.radius_bound() <= 0.0 {
            return Err(Error::InvalidConfig("outline has no extent".into()));
        }
        if self.gt_stride == 0 {
            return Err(Error::InvalidConfig("gt_stride must be at least 1".into()));
        }
        let a = self.trajectory.axis;
        if (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt() <= 1e-9 {
            return Err(Error::InvalidConfig("trajectory axis is zero".into()));
        }
        Ok(())
    }
}

/// Analytic state of one frame.
#[derive(Debug, Clone, Copy)]
pub struct FramePose {
    pub h_plane: Option<Homography>,
    pub side: Side,
    /// |cos| between the plane normal and the view ray.
    pub facing: f64,
    pub edge_on: bool,
    pub gain: f64,
}

const EDGE_ON_COS: f64 = 0.05;

fn rot_axis_angle(axis: [f64; 3], angle: f64) -> [[f64; 3]; 3] {
    let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let (x, y, z) = (axis[0] / n, axis[1] / n, axis[2] / n);
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    [
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ]
}

fn mat_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            out[r][c] = a[r][0] * b[0][c] + a[r][1] * b[1][c] + a[r][2] * b[2][c];
        }
    }
    out
}

/// Analytic plane pose and projection for frame `t`.
pub fn frame_pose(spec: &SceneSpec, t: usize) -> FramePose {
    let tr = &spec.trajectory;
    let tilt_steps = match tr.omega_frames {
        Some(n) => t.min(n) as f64,
        None => t as f64,
    };
    let tilt = rot_axis_angle(tr.axis, (tr.angle0_deg + tr.omega_deg * tilt_steps).to_radians());
    let spin = rot_axis_angle([0.0, 0.0, 1.0], (tr.spin_deg * t as f64).to_radians());
    let r = mat_mul(&tilt, &spin);
    let center = [
        tr.offset[0] + tr.velocity[0] * t as f64,
        tr.offset[1] + tr.velocity[1] * t as f64,
        spec.camera.distance,
    ];

    // Visible side from the normal direction against the view ray. At the
    // rest pose the obverse faces the camera.
    let normal = [r[0][2], r[1][2], r[2][2]];
    let nc = (center[0] * center[0] + center[1] * center[1] + center[2] * center[2]).sqrt();
    let cos = (normal[0] * center[0] + normal[1] * center[1] + normal[2] * center[2]) / nc;
    let side = if cos >= 0.0 { Side::Obverse } else { Side::Reverse };
    let facing = cos.abs();
    let edge_on = facing < EDGE_ON_COS;

    // H = K [r1 | r2 | c], row-major.
    let f = spec.camera.focal;
    let cx = spec.width as f64 * 0.5;
    let cy = spec.height as f64 * 0.5;
    let m = [
        f * r[0][0] + cx * r[2][0],
        f * r[0][1] + cx * r[2][1],
        f * center[0] + cx * center[2],
        f * r[1][0] + cy * r[2][0],
        f * r[1][1] + cy * r[2][1],
        f * center[1] + cy * center[2],
        r[2][0],
        r[2][1],
        center[2],
    ];
    let h_plane = Homography::from_matrix(m).ok();
    FramePose { h_plane, side, facing, edge_on, gain: spec.illumination.gain(t) }
}

/// One generated frame with its exact ground truth.
#[derive(Debug, Clone)]
pub struct SynthFrameGT {
    pub index: usize,
    pub image: RgbImage,
    pub labels: LabelImage,
    pub materials: Vec<u8>,
    pub side: Side,
    pub facing: f64,
    pub edge_on: bool,
    pub h_plane: Option<Homography>,
    pub visibility: BinaryMask,
    pub flow_to_next: Option<FlowField>,
    pub gain: f64,
}

fn render_frame(spec: &SceneSpec, pose: &FramePose, t: usize) -> SynthFrameGT {
    let (w, h) = (spec.width, spec.height);
    let mut image = RgbImage::new(w as u32, h as u32);
    let mut labels = LabelImage::new(w, h);
    let mut materials = vec![Material::Background as u8; w * h];
    let mut visibility = BinaryMask::new(w, h);

    let hinv = pose.h_plane.as_ref().and_then(|m| m.invert().ok());
    let hm = pose.h_plane.as_ref().map(|m| *m.matrix());
    let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.seed ^ (0xA5A5_0000 + t as u64));
    let noise = Normal::new(0.0f64, (spec.noise_sigma / 255.0).max(0.0)).ok();

    for y in 0..h {
        for x in 0..w {
            let (fx, fy) = (x as f64, y as f64);
            let mut material = Material::Background;
            let mut rgb = spec.background_texture.texel(fx, fy);

            // Object, visible through the inverse projection.
            if let (Some(hinv), Some(hm)) = (&hinv, &hm) {
                if let Ok(p) = hinv.warp_point(crate::geometry::Point2::new(fx, fy)) {
                    // The plane point must be in front of the camera.
                    let z = hm[6] * p.x + hm[7] * p.y + hm[8];
                    if z > 0.0 && spec.outline.contains(p.x, p.y) {
                        material = match pose.side {
                            Side::Obverse => Material::Obverse,
                            Side::Reverse => Material::Reverse,
                        };
                        let tex = match pose.side {
                            Side::Obverse => spec.obverse_texture.texel(p.x, p.y),
                            // The back face appears mirrored.
                            Side::Reverse => spec.reverse_texture.texel(-p.x, p.y),
                        };
                        rgb = [tex[0] * pose.gain, tex[1] * pose.gain, tex[2] * pose.gain];
                    }
                }
            }

            // Distractor paints over background only.
            if material == Material::Background {
                if let Some(d) = &spec.distractor {
                    if d.contains(fx, fy, t) {
                        material = Material::Distractor;
                        rgb = d.texture.texel(fx - d.cx, fy - d.cy);
                    }
                }
            }

            // Occluders cover everything.
            for occ in &spec.occluders {
                if occ.contains(fx, fy, t) {
                    material = Material::Occluder;
                    rgb = occ.texture.texel(fx, fy);
                }
            }

            if let Some(noise) = &noise {
                if spec.noise_sigma > 0.0 {
                    for c in &mut rgb {
                        *c += noise.sample(&mut noise_rng);
                    }
                }
            }
            let px = image::Rgb([
                (rgb[0].clamp(0.0, 1.0) * 255.0).round() as u8,
                (rgb[1].clamp(0.0, 1.0) * 255.0).round() as u8,
                (rgb[2].clamp(0.0, 1.0) * 255.0).round() as u8,
            ]);
            image.put_pixel(x as u32, y as u32, px);
            labels.set(x, y, material.label());
            materials[y * w + x] = material as u8;
            if material.label().is_object() {
                visibility.set(x, y, true);
            }
        }
    }

    SynthFrameGT {
        index: t,
        image,
        labels,
        materials,
        side: pose.side,
        facing: pose.facing,
        edge_on: pose.edge_on,
        h_plane: pose.h_plane,
        visibility,
        flow_to_next: None,
        gain: pose.gain,
    }
}

/// Dense flow from frame `t` to `t + 1`: object pixels follow the plane
/// motion, occluder pixels follow their rectangle, the rest is static.
fn flow_between(spec: &SceneSpec, gt: &SynthFrameGT, next_pose: &FramePose, t: usize) -> FlowField {
    let (w, h) = (spec.width, spec.height);
    let motion = match (&gt.h_plane, &next_pose.h_plane) {
        (Some(cur), Some(next)) => cur.invert().ok().and_then(|ci| next.compose(&ci).ok()),
        _ => None,
    };
    FlowField::from_fn(w, h, |x, y| {
        let code = Material::from_code(gt.materials[y * w + x]).unwrap_or(Material::Background);
        match code {
            Material::Obverse | Material::Reverse => {
                if let Some(m) = &motion {
                    if let Ok(q) =
                        m.warp_point(crate::geometry::Point2::new(x as f64, y as f64))
                    {
                        return ((q.x - x as f64) as f32, (q.y - y as f64) as f32);
                    }
                }
                (0.0, 0.0)
            }
            Material::Occluder => {
                let occ = spec
                    .occluders
                    .iter()
                    .find(|o| o.contains(x as f64, y as f64, t));
                match occ {
                    Some(o) => (o.vx as f32, o.vy as f32),
                    None => (0.0, 0.0),
                }
            }
            _ => (0.0, 0.0),
        }
    })
}

/// Renders the whole sequence in memory. Intended for tests at small
/// resolutions; `write_dataset` streams to disk instead.
pub fn generate(spec: &SceneSpec) -> Result<Vec<SynthFrameGT>> {
    spec.validate()?;
    let poses: Vec<FramePose> = (0..spec.frames).map(|t| frame_pose(spec, t)).collect();
    for (t, p) in poses.iter().enumerate() {
        if (p.edge_on || p.h_plane.is_none()) && !spec.allow_edge_on {
            return Err(Error::DegenerateTrajectory { frame: t });
        }
    }
    let mut frames: Vec<SynthFrameGT> = {
        use rayon::prelude::*;
        (0..spec.frames)
            .into_par_iter()
            .map(|t| render_frame(spec, &poses[t], t))
            .collect()
    };
    if spec.emit_flow {
        for t in 0..spec.frames.saturating_sub(1) {
            let next = poses[t + 1];
            frames[t].flow_to_next = Some(flow_between(spec, &frames[t], &next, t));
        }
    }
    Ok(frames)
}

/// Which frames carry ground-truth annotations.
pub fn is_annotated(spec: &SceneSpec, t: usize, obverse_frame: usize, reverse_frame: usize) -> bool {
    spec.dense_gt || t % spec.gt_stride == 0 || t == obverse_frame || t == reverse_frame
}

/// Summary of an on-disk dataset written by [`write_dataset`].
#[derive(Debug, Clone)]
pub struct DatasetSummary {
    pub dir: PathBuf,
    pub frames: usize,
    pub obverse_frame: usize,
    pub reverse_frame: usize,
    pub poses: Vec<FramePose>,
}

/// Streams the dataset layout to disk: `frames/%06d.png`, sparse
/// `gt/%06d.png` label masks, dense `materials/%06d.png`, `init.json`,
/// `gt_homographies.jsonl`, and optional `flow/%06d.flow`.
pub fn write_dataset(spec: &SceneSpec, out_dir: &Path) -> Result<DatasetSummary> {
    spec.validate()?;
    let poses: Vec<FramePose> = (0..spec.frames).map(|t| frame_pose(spec, t)).collect();
    for (t, p) in poses.iter().enumerate() {
        if (p.edge_on || p.h_plane.is_none()) && !spec.allow_edge_on {
            return Err(Error::DegenerateTrajectory { frame: t });
        }
    }

    let (obverse_frame, reverse_frame) = init_frames(spec, &poses)?;

    for sub in ["frames", "gt", "materials"] {
        let d = out_dir.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    if spec.emit_flow {
        let d = out_dir.join("flow");
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }

    let init_json = serde_json::json!({
        "obverse_frame": obverse_frame,
        "reverse_frame": reverse_frame,
    });
    let init_path = out_dir.join("init.json");
    std::fs::write(&init_path, serde_json::to_vec_pretty(&init_json)?)
        .map_err(|e| Error::io(&init_path, e))?;

    let jsonl_path = out_dir.join("gt_homographies.jsonl");
    let mut jsonl =
        std::fs::File::create(&jsonl_path).map_err(|e| Error::io(&jsonl_path, e))?;

    let init_pose = |f: usize| -> Result<Homography> {
        poses[f].h_plane.ok_or(Error::DegenerateTrajectory { frame: f })
    };
    let h_obv_init = init_pose(obverse_frame)?;
    let h_rev_init = init_pose(reverse_frame)?;

    let mut prev: Option<SynthFrameGT> = None;
    for t in 0..spec.frames {
        let gt = render_frame(spec, &poses[t], t);
        let frame_path = out_dir.join(format!("frames/{t:06}.png"));
        gt.image.save(&frame_path).map_err(|e| Error::image(&frame_path, e))?;
        if is_annotated(spec, t, obverse_frame, reverse_frame) {
            let gt_path = out_dir.join(format!("gt/{t:06}.png"));
            mask::write_label_png(&gt_path, &gt.labels)?;
        }
        let mat_path = out_dir.join(format!("materials/{t:06}.png"));
        let mat_img =
            image::GrayImage::from_raw(spec.width as u32, spec.height as u32, gt.materials.clone())
                .expect("material buffer sized");
        mat_img.save(&mat_path).map_err(|e| Error::image(&mat_path, e))?;

        // Ground-truth homography record, relative to the visible side's
        // initialization frame.
        let h_star = gt.h_plane.and_then(|h| {
            let init = match gt.side {
                Side::Obverse => h_obv_init,
                Side::Reverse => h_rev_init,
            };
            init.invert().ok().and_then(|ii| h.compose(&ii).ok())
        });
        let record = serde_json::json!({
            "frame": t,
            "side": gt.side,
            "edge_on": gt.edge_on,
            "facing": gt.facing,
            "h_plane": gt.h_plane.map(|h| h.matrix().to_vec()),
            "h_star": h_star.map(|h| h.matrix().to_vec()),
        });
        let line = serde_json::to_string(&record)?;
        writeln!(jsonl, "{line}").map_err(|e| Error::io(&jsonl_path, e))?;

        if spec.emit_flow {
            if let Some(prev_gt) = &prev {
                let flow = flow_between(spec, prev_gt, &poses[t], t - 1);
                let flow_path = out_dir.join(format!("flow/{t:06}.flow"));
                flow.write(&flow_path)?;
            }
            prev = Some(gt);
        }
    }

    Ok(DatasetSummary { dir: out_dir.to_path_buf(), frames: spec.frames, obverse_frame, reverse_frame, poses })
}

/// First qualifying initialization frame per side: the right side visible,
/// facing the camera at `init_min_cos` or better, not edge-on.
fn init_frames(spec: &SceneSpec, poses: &[FramePose]) -> Result<(usize, usize)> {
    let find = |side: Side| -> Option<usize> {
        poses
            .iter()
            .position(|p| p.side == side && !p.edge_on && p.facing >= spec.init_min_cos && p.h_plane.is_some())
    };
    let obverse = match spec.obverse_init_frame {
        Some(f) => f,
        None => find(Side::Obverse)
            .ok_or(Error::InsufficientData("no qualifying obverse initialization frame"))?,
    };
    let reverse = match spec.reverse_init_frame {
        Some(f) => f,
        None => find(Side::Reverse)
            .ok_or(Error::InsufficientData("no qualifying reverse initialization frame"))?,
    };
    if obverse >= spec.frames || reverse >= spec.frames {
        return Err(Error::InvalidConfig("initialization frame beyond sequence".into()));
    }
    Ok((obverse, reverse))
}

// ---------------------------------------------------------------------------
// Oracle segmentation
// ---------------------------------------------------------------------------

/// Label-level corruption for isolated tests of scoring, optimization and
/// adaptation.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct CorruptionConfig {
    /// False-positive disks stamped with an object label.
    pub fp_blobs: Vec<FpBlob>,
    /// Exact number of interior object cells flipped to background.
    pub fn_hole_cells: usize,
    /// Object-boundary erosion in cells.
    pub erosion_cells: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FpBlob {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
    pub side: Side,
}

/// Grid-resolution label mask straight from ground truth, optionally
/// corrupted. Confidence is 1 everywhere.
pub fn oracle_segmenter(gt: &SynthFrameGT, corruption: &CorruptionConfig, stride: usize) -> LabelMask {
    let (w, h) = (gt.labels.width(), gt.labels.height());
    let (gw, gh) = EmbeddingGrid::dims_for(w, h, stride);
    let mut lm = LabelMask::new(gw, gh, stride);
    for cy in 0..gh {
        for cx in 0..gw {
            let px = (cx * stride + stride / 2).min(w - 1);
            let py = (cy * stride + stride / 2).min(h - 1);
            lm.set(cx, cy, gt.labels.get(px, py), 1.0);
        }
    }
    // Erosion first, then holes, then false positives.
    for _ in 0..corruption.erosion_cells {
        let obj = lm.object_cells();
        for cy in 0..gh {
            for cx in 0..gw {
                if !obj.get(cx, cy) {
                    continue;
                }
                let mut edge = false;
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let nx = cx as i64 + dx;
                        let ny = cy as i64 + dy;
                        if nx < 0 || ny < 0 || nx >= gw as i64 || ny >= gh as i64 {
                            edge = true;
                        } else if !obj.get(nx as usize, ny as usize) {
                            edge = true;
                        }
                    }
                }
                if edge {
                    lm.set(cx, cy, Label::Background, 1.0);
                }
            }
        }
    }
    if corruption.fn_hole_cells > 0 {
        let obj = lm.object_cells();
        let mut punched = 0usize;
        'outer: for cy in 0..gh {
            for cx in 0..gw {
                if punched == corruption.fn_hole_cells {
                    break 'outer;
                }
                if !obj.get(cx, cy) {
                    continue;
                }
                // Interior cells only, so the hole stays closed.
                let interior = (1..gw - 1).contains(&cx)
                    && (1..gh - 1).contains(&cy)
                    && (-1i64..=1).all(|dy| {
                        (-1i64..=1).all(|dx| {
                            obj.get((cx as i64 + dx) as usize, (cy as i64 + dy) as usize)
                        })
                    });
                if interior {
                    lm.set(cx, cy, Label::Background, 1.0);
                    punched += 1;
                }
            }
        }
    }
    for blob in &corruption.fp_blobs {
        for cy in 0..gh {
            for cx in 0..gw {
                let px = (cx * stride + stride / 2) as f64;
                let py = (cy * stride + stride / 2) as f64;
                if (px - blob.cx).hypot(py - blob.cy) <= blob.radius {
                    lm.set(cx, cy, blob.side.label(), 1.0);
                }
            }
        }
    }
    lm
}

// ---------------------------------------------------------------------------
// Oracle embedding backend
// ---------------------------------------------------------------------------

/// Embedding vectors keyed by scene material. Backgrounds, occluders and the
/// two faces are well separated; the distractor sits close to the obverse
/// cluster, so k-NN classifies it as object until adaptation adds its cells
/// as background examples.
pub fn material_embedding(m: Material) -> [f32; 4] {
    match m {
        Material::Background => [0.0, 0.0, 0.0, 0.0],
        Material::Obverse => [10.0, 0.0, 0.0, 0.0],
        Material::Reverse => [0.0, 10.0, 0.0, 0.0],
        Material::Occluder => [0.0, 0.0, 10.0, 0.0],
        Material::Distractor => [8.0, 0.0, 0.0, 0.0],
    }
}

/// Where material maps come from.
#[derive(Debug, Clone)]
pub enum MaterialSource {
    /// Per-frame material byte maps held in memory.
    InMemory { width: usize, height: usize, frames: Vec<Vec<u8>> },
    /// `materials/%06d.png` under a dataset directory.
    Dir(PathBuf),
}

/// Ground-truth-driven embedding backend: each cell center emits the
/// embedding of its true scene material.
#[derive(Debug, Clone)]
pub struct OracleBackend {
    source: MaterialSource,
}

impl OracleBackend {
    pub fn new(source: MaterialSource) -> Self {
        OracleBackend { source }
    }

    pub fn from_dataset_dir(dir: &Path) -> Self {
        OracleBackend { source: MaterialSource::Dir(dir.join("materials")) }
    }

    fn materials_for(&self, frame: &Frame) -> Result<(usize, usize, Vec<u8>)> {
        match &self.source {
            MaterialSource::InMemory { width, height, frames } => {
                let m = frames
                    .get(frame.index)
                    .ok_or(Error::MissingFrame(frame.index))?;
                Ok((*width, *height, m.clone()))
            }
            MaterialSource::Dir(dir) => {
                let path = dir.join(format!("{:06}.png", frame.index));
                let img = image::open(&path)
                    .map_err(|e| Error::image(&path, e))?
                    .into_luma8();
                let (w, h) = (img.width() as usize, img.height() as usize);
                Ok((w, h, img.into_raw()))
            }
        }
    }
}

impl EmbeddingBackend for OracleBackend {
    fn name(&self) -> &'static str {
        "oracle"
    }

    fn dim(&self) -> usize {
        4
    }

    fn extract(&self, frame: &Frame, stride: usize) -> Result<EmbeddingGrid> {
        let (w, h, materials) = self.materials_for(frame)?;
        if w != frame.image.width() as usize || h != frame.image.height() as usize {
            return Err(Error::BackendFailure(format!(
                "material map {}x{} does not match frame {}x{}",
                w,
                h,
                frame.image.width(),
                frame.image.height()
            )));
        }
        let (gw, gh) = EmbeddingGrid::dims_for(w, h, stride);
        let mut grid = EmbeddingGrid::new(gw, gh, stride, 4);
        for cy in 0..gh {
            for cx in 0..gw {
                let (px, py) = grid.cell_center(cx, cy, w, h);
                let code = materials[py * w + px];
                let m = Material::from_code(code).ok_or_else(|| {
                    Error::BackendFailure(format!("invalid material code {code}"))
                })?;
                grid.cell_mut(cx, cy).copy_from_slice(&material_embedding(m));
            }
        }
        Ok(grid)
    }
}

/// Convenience: ground-truth object mask (either side) of a generated frame.
pub fn gt_object_mask(gt: &SynthFrameGT) -> BinaryMask {
    gt.labels.object_mask()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{warp_mask, Point2};

    fn base_spec() -> SceneSpec {
        SceneSpec {
            width: 160,
            height: 120,
            frames: 8,
            camera: CameraSpec { focal: 300.0, distance: 300.0 },
            outline: Outline::Ellipse { rx: 30.0, ry: 24.0 },
            ..Default::default()
        }
    }

    #[test]
    fn identity_trajectory_repeats_frames() {
        let spec = base_spec();
        let frames = generate(&spec).unwrap();
        let h0 = frames[0].h_plane.unwrap();
        for f in &frames {
            assert_eq!(f.h_plane.unwrap().matrix(), h0.matrix());
            assert_eq!(f.image.as_raw(), frames[0].image.as_raw());
            assert_eq!(f.side, Side::Obverse);
        }
    }

    #[test]
    fn in_plane_rotation_preserves_area() {
        let mut spec = base_spec();
        spec.trajectory.spin_deg = 7.0;
        spec.frames = 10;
        let frames = generate(&spec).unwrap();
        let a0 = frames[0].visibility.count() as f64;
        for f in &frames {
            let a = f.visibility.count() as f64;
            assert!((a - a0).abs() <= 0.01 * a0, "area {a} vs {a0}");
        }
    }

    #[test]
    fn out_of_plane_rotation_matches_cosine_width() {
        let mut spec = base_spec();
        spec.outline = Outline::Ellipse { rx: 40.0, ry: 40.0 };
        spec.width = 240;
        spec.height = 200;
        spec.camera = CameraSpec { focal: 800.0, distance: 800.0 };
        spec.trajectory.axis = [0.0, 1.0, 0.0];
        spec.trajectory.omega_deg = 10.0;
        spec.frames = 5; // up to 40 degrees
        let frames = generate(&spec).unwrap();
        let width_of = |m: &BinaryMask| {
            let (x0, _, x1, _) = m.bounding_box().unwrap();
            (x1 - x0 + 1) as f64
        };
        let w0 = width_of(&frames[0].visibility);
        for (t, f) in frames.iter().enumerate() {
            let expect = (10.0 * t as f64).to_radians().cos();
            let got = width_of(&f.visibility) / w0;
            assert!(
                (got - expect).abs() <= 0.02 + 2.0 / w0,
                "frame {t}: width ratio {got} vs cos {expect}"
            );
        }
    }

    #[test]
    fn homography_warps_outline_onto_mask() {
        let mut spec = base_spec();
        spec.trajectory.omega_deg = 6.0;
        spec.trajectory.spin_deg = 3.0;
        spec.trajectory.velocity = [1.5, 0.8];
        spec.frames = 6;
        let frames = generate(&spec).unwrap();
        // The canonical outline taken through the relative homography chain
        // (H_star composed onto the init pose) must rasterize onto the
        // emitted mask.
        let h0 = frames[0].h_plane.unwrap();
        for f in &frames[1..] {
            let h_star = f.h_plane.unwrap().compose(&h0.invert().unwrap()).unwrap();
            let chain = h_star.compose(&h0).unwrap().invert().unwrap();
            let rerendered = BinaryMask::from_fn(spec.width, spec.height, |x, y| {
                chain
                    .warp_point(Point2::new(x as f64, y as f64))
                    .map(|p| spec.outline.contains(p.x, p.y))
                    .unwrap_or(false)
            });
            let iou = mask::iou(&rerendered, &f.visibility).unwrap();
            assert!(iou >= 0.99, "frame {}: iou {iou}", f.index);
        }
    }

    #[test]
    fn flow_transports_mask() {
        // Forward-splatting the mask through the flow leaves only a
        // boundary-band error, so the object must be desk-scale.
        let mut spec = base_spec();
        spec.width = 320;
        spec.height = 280;
        spec.outline = Outline::Ellipse { rx: 115.0, ry: 105.0 };
        spec.trajectory.omega_deg = 2.0;
        spec.trajectory.velocity = [1.0, -0.5];
        spec.emit_flow = true;
        spec.frames = 5;
        let frames = generate(&spec).unwrap();
        for t in 0..spec.frames - 1 {
            let flow = frames[t].flow_to_next.as_ref().unwrap();
            let mut moved = BinaryMask::new(spec.width, spec.height);
            for (x, y) in frames[t].visibility.iter_set() {
                let (dx, dy) = flow.at(x, y);
                let nx = (x as f64 + dx as f64).round() as i64;
                let ny = (y as f64 + dy as f64).round() as i64;
                if nx >= 0 && ny >= 0 && (nx as usize) < spec.width && (ny as usize) < spec.height {
                    moved.set(nx as usize, ny as usize, true);
                }
            }
            let iou = mask::iou(&moved, &frames[t + 1].visibility).unwrap();
            assert!(iou >= 0.98, "frame {t}: flow iou {iou}");
        }
    }

    #[test]
    fn side_flips_with_normal_sign() {
        let mut spec = base_spec();
        spec.trajectory.omega_deg = 5.0;
        spec.frames = 40; // crosses 90 degrees at frame 18
        let frames = generate(&spec).unwrap();
        for (t, f) in frames.iter().enumerate() {
            let angle = (5.0 * t as f64).to_radians();
            // Near the flip, perspective shifts the exact crossing by a hair;
            // skip the edge-on band.
            if f.edge_on {
                continue;
            }
            let expect = if angle.cos() > 0.0 { Side::Obverse } else { Side::Reverse };
            assert_eq!(f.side, expect, "frame {t}");
        }
        assert!(frames.iter().any(|f| f.side == Side::Reverse));
    }

    #[test]
    fn edge_on_rejected_when_disallowed() {
        let mut spec = base_spec();
        spec.trajectory.omega_deg = 5.0;
        spec.frames = 40;
        spec.allow_edge_on = false;
        assert!(matches!(generate(&spec), Err(Error::DegenerateTrajectory { .. })));
    }

    #[test]
    fn oracle_segmenter_exact_and_corrupted() {
        let spec = base_spec();
        let frames = generate(&spec).unwrap();
        let gt = &frames[0];
        let clean = oracle_segmenter(gt, &CorruptionConfig::default(), 4);
        // Exact at cell centers.
        for cy in 0..clean.grid_h {
            for cx in 0..clean.grid_w {
                let px = (cx * 4 + 2).min(spec.width - 1);
                let py = (cy * 4 + 2).min(spec.height - 1);
                assert_eq!(clean.label(cx, cy), gt.labels.get(px, py));
            }
        }

        // One FP blob adds exactly the blob cells.
        let blob = FpBlob { cx: 20.0, cy: 20.0, radius: 6.0, side: Side::Obverse };
        let corrupted = oracle_segmenter(
            gt,
            &CorruptionConfig { fp_blobs: vec![blob.clone()], ..Default::default() },
            4,
        );
        for cy in 0..clean.grid_h {
            for cx in 0..clean.grid_w {
                let px = (cx * 4 + 2) as f64;
                let py = (cy * 4 + 2) as f64;
                let in_blob = (px - blob.cx).hypot(py - blob.cy) <= blob.radius;
                if in_blob {
                    assert_eq!(corrupted.label(cx, cy), Label::Obverse);
                } else {
                    assert_eq!(corrupted.label(cx, cy), clean.label(cx, cy));
                }
            }
        }

        // Hole punching is exact.
        let holed = oracle_segmenter(
            gt,
            &CorruptionConfig { fn_hole_cells: 7, ..Default::default() },
            4,
        );
        let lost = clean
            .labels()
            .iter()
            .zip(holed.labels())
            .filter(|(a, b)| a.is_object() && !b.is_object())
            .count();
        assert_eq!(lost, 7);
    }

    #[test]
    fn oracle_backend_reproduces_labels() {
        let spec = base_spec();
        let frames = generate(&spec).unwrap();
        let gt = &frames[0];
        let backend = OracleBackend::new(MaterialSource::InMemory {
            width: spec.width,
            height: spec.height,
            frames: vec![gt.materials.clone()],
        });
        let grid = backend
            .extract(&Frame { index: 0, image: gt.image.clone() }, 4)
            .unwrap();
        for cy in 0..grid.grid_h {
            for cx in 0..grid.grid_w {
                let (px, py) = grid.cell_center(cx, cy, spec.width, spec.height);
                let m = Material::from_code(gt.materials[py * spec.width + px]).unwrap();
                assert_eq!(grid.cell(cx, cy), &material_embedding(m));
            }
        }
    }

    #[test]
    fn dataset_layout_on_disk() {
        let mut spec = base_spec();
        spec.trajectory.omega_deg = 5.0;
        spec.frames = 40;
        spec.gt_stride = 5;
        let dir = std::env::temp_dir().join("cointrack-synth-test");
        let _ = std::fs::remove_dir_all(&dir);
        let summary = write_dataset(&spec, &dir).unwrap();
        assert_eq!(summary.obverse_frame, 0);
        assert!(summary.reverse_frame > 18);
        assert!(dir.join("init.json").exists());
        assert!(dir.join("gt_homographies.jsonl").exists());
        for t in 0..spec.frames {
            assert!(dir.join(format!("frames/{t:06}.png")).exists(), "frame {t}");
            assert!(dir.join(format!("materials/{t:06}.png")).exists());
            let annotated =
                is_annotated(&spec, t, summary.obverse_frame, summary.reverse_frame);
            assert_eq!(dir.join(format!("gt/{t:06}.png")).exists(), annotated, "gt {t}");
        }
        // Spec round-trip through JSON.
        let text = serde_json::to_string(&spec).unwrap();
        let back = SceneSpec::from_json_str(&text).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn projection_matches_manual_pinhole() {
        let spec = base_spec();
        let pose = frame_pose(&spec, 0);
        let h = pose.h_plane.unwrap();
        // Face-on at distance == focal: (u, v) -> (u + cx, v + cy).
        let p = h.warp_point(Point2::new(10.0, -4.0)).unwrap();
        assert!((p.x - (10.0 + 80.0)).abs() < 1e-9);
        assert!((p.y - (-4.0 + 60.0)).abs() < 1e-9);
    }
}
