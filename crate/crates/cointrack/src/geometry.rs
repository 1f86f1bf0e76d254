//! Homographies: estimation from four correspondences, composition and
//! inversion, point and mask warping, and random hypothesis sampling by
//! control-point perturbation.
//!
//! Matrices are row-major 3x3, canonically normalized so the bottom-right
//! entry equals 1 whenever it is meaningfully nonzero, with a unit-Frobenius
//! fallback otherwise.

use nalgebra::SMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::mask::BinaryMask;

/// Determinant magnitude below which a normalized matrix counts as singular.
pub const DET_EPSILON: f64 = 1e-12;
/// Homogeneous w below this (relative) magnitude projects to infinity.
pub const W_EPSILON: f64 = 1e-12;
/// Retries for degenerate control-point draws.
pub const PERTURB_MAX_RETRIES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Self {
        debug_assert!(x.is_finite() && y.is_finite());
        Point2 { x, y }
    }

    pub fn dist(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Axis-aligned rectangle in pixel coordinates, `x0 <= x1`, `y0 <= y1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Rect { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn max_side(&self) -> f64 {
        self.width().max(self.height())
    }

    pub fn center(&self) -> Point2 {
        Point2::new(0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))
    }

    /// Corners in order top-left, top-right, bottom-right, bottom-left.
    pub fn corners(&self) -> [Point2; 4] {
        [
            Point2::new(self.x0, self.y0),
            Point2::new(self.x1, self.y0),
            Point2::new(self.x1, self.y1),
            Point2::new(self.x0, self.y1),
        ]
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.width() > 0.0 && self.height() > 0.0)
    }
}

/// 3x3 projective map between a canonical ground-truth frame and an image
/// frame. Invertible by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    m: [f64; 9],
}

impl Homography {
    pub fn identity() -> Self {
        Homography { m: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0] }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Homography { m: [1.0, 0.0, tx, 0.0, 1.0, ty, 0.0, 0.0, 1.0] }
    }

    /// Similarity transform: rotate by `angle`, scale by `scale`, then
    /// translate by `(tx, ty)`.
    pub fn similarity(scale: f64, angle: f64, tx: f64, ty: f64) -> Result<Self> {
        let (s, c) = angle.sin_cos();
        Homography::from_matrix([
            scale * c,
            -scale * s,
            tx,
            scale * s,
            scale * c,
            ty,
            0.0,
            0.0,
            1.0,
        ])
    }

    /// Builds a homography from a row-major 3x3 matrix, normalizing it and
    /// rejecting non-invertible input.
    pub fn from_matrix(m: [f64; 9]) -> Result<Self> {
        let m = canonicalize(m)?;
        let d = det3(&m);
        if !d.is_finite() || d.abs() <= DET_EPSILON {
            return Err(Error::SingularMatrix);
        }
        Ok(Homography { m })
    }

    /// Row-major matrix entries; the canonical normalization holds.
    pub fn matrix(&self) -> &[f64; 9] {
        &self.m
    }

    pub fn det(&self) -> f64 {
        det3(&self.m)
    }

    pub fn warp_point(&self, p: Point2) -> Result<Point2> {
        let m = &self.m;
        let w = m[6] * p.x + m[7] * p.y + m[8];
        let eps = W_EPSILON * (1.0 + p.x.abs() + p.y.abs());
        if w.abs() <= eps {
            return Err(Error::PointAtInfinity);
        }
        Ok(Point2::new(
            (m[0] * p.x + m[1] * p.y + m[2]) / w,
            (m[3] * p.x + m[4] * p.y + m[5]) / w,
        ))
    }

    /// `compose(a, b)` applies `b` first: `warp(compose(a,b), p) =
    /// warp(a, warp(b, p))`.
    pub fn compose(&self, other: &Homography) -> Result<Homography> {
        let a = &self.m;
        let b = &other.m;
        let mut out = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                out[3 * r + c] =
                    a[3 * r] * b[c] + a[3 * r + 1] * b[3 + c] + a[3 * r + 2] * b[6 + c];
            }
        }
        Homography::from_matrix(out)
    }

    pub fn invert(&self) -> Result<Homography> {
        let m = &self.m;
        // Adjugate; from_matrix renormalizes, so the 1/det factor is moot.
        let adj = [
            m[4] * m[8] - m[5] * m[7],
            m[2] * m[7] - m[1] * m[8],
            m[1] * m[5] - m[2] * m[4],
            m[5] * m[6] - m[3] * m[8],
            m[0] * m[8] - m[2] * m[6],
            m[2] * m[3] - m[0] * m[5],
            m[3] * m[7] - m[4] * m[6],
            m[1] * m[6] - m[0] * m[7],
            m[0] * m[4] - m[1] * m[3],
        ];
        Homography::from_matrix(adj)
    }
}

impl Default for Homography {
    fn default() -> Self {
        Homography::identity()
    }
}

fn det3(m: &[f64; 9]) -> f64 {
    m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
        + m[2] * (m[3] * m[7] - m[4] * m[6])
}

fn canonicalize(mut m: [f64; 9]) -> Result<[f64; 9]> {
    let frob = m.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !frob.is_finite() || frob == 0.0 {
        return Err(Error::SingularMatrix);
    }
    if m[8].abs() > 1e-12 * frob {
        let inv = 1.0 / m[8];
        for v in &mut m {
            *v *= inv;
        }
    } else {
        // Unit Frobenius norm, sign fixed by the largest-magnitude entry.
        let mut k = 0;
        for (i, v) in m.iter().enumerate() {
            if v.abs() > m[k].abs() {
                k = i;
            }
        }
        let s = if m[k] < 0.0 { -1.0 / frob } else { 1.0 / frob };
        for v in &mut m {
            *v *= s;
        }
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularMatrix);
    }
    Ok(m)
}

/// Exactly four source/target point pairs with no three collinear points on
/// either side.
#[derive(Debug, Clone, Copy)]
pub struct CorrespondenceSet {
    pairs: [(Point2, Point2); 4],
}

impl CorrespondenceSet {
    pub fn new(pairs: [(Point2, Point2); 4]) -> Result<Self> {
        let src = [pairs[0].0, pairs[1].0, pairs[2].0, pairs[3].0];
        let dst = [pairs[0].1, pairs[1].1, pairs[2].1, pairs[3].1];
        if three_collinear(&src) {
            return Err(Error::DegenerateConfiguration("three source points collinear"));
        }
        if three_collinear(&dst) {
            return Err(Error::DegenerateConfiguration("three target points collinear"));
        }
        Ok(CorrespondenceSet { pairs })
    }

    pub fn pairs(&self) -> &[(Point2, Point2); 4] {
        &self.pairs
    }
}

fn three_collinear(pts: &[Point2; 4]) -> bool {
    let mut scale = 0.0f64;
    for i in 0..4 {
        for j in (i + 1)..4 {
            scale = scale.max(pts[i].dist(&pts[j]));
        }
    }
    if scale == 0.0 {
        return true;
    }
    let eps = 1e-9 * scale * scale;
    const TRIPLES: [(usize, usize, usize); 4] = [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)];
    for (i, j, k) in TRIPLES {
        let (a, b, c) = (pts[i], pts[j], pts[k]);
        let cross = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
        if cross.abs() <= eps {
            return true;
        }
    }
    false
}

/// Estimates the homography mapping every source point of `c` onto its
/// target. Direct linear transform on the 4 correspondences with
/// normalization of both point sets for conditioning.
pub fn homography_from_correspondences(c: &CorrespondenceSet) -> Result<Homography> {
    let src: Vec<Point2> = c.pairs().iter().map(|p| p.0).collect();
    let dst: Vec<Point2> = c.pairs().iter().map(|p| p.1).collect();
    let (ts, src_n) = normalize_points(&src);
    let (td, dst_n) = normalize_points(&dst);

    // 8x9 DLT system padded with a zero row so the full 9x9 SVD exposes the
    // null-space vector.
    let mut a = SMatrix::<f64, 9, 9>::zeros();
    for i in 0..4 {
        let (x, y) = (src_n[i].x, src_n[i].y);
        let (u, v) = (dst_n[i].x, dst_n[i].y);
        let r0 = 2 * i;
        let r1 = 2 * i + 1;
        a[(r0, 0)] = -x;
        a[(r0, 1)] = -y;
        a[(r0, 2)] = -1.0;
        a[(r0, 6)] = u * x;
        a[(r0, 7)] = u * y;
        a[(r0, 8)] = u;
        a[(r1, 3)] = -x;
        a[(r1, 4)] = -y;
        a[(r1, 5)] = -1.0;
        a[(r1, 6)] = v * x;
        a[(r1, 7)] = v * y;
        a[(r1, 8)] = v;
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or(Error::SingularMatrix)?;
    let mut min_i = 0;
    for i in 1..9 {
        if svd.singular_values[i] < svd.singular_values[min_i] {
            min_i = i;
        }
    }
    let h_row = v_t.row(min_i);
    let hn = [
        h_row[0], h_row[1], h_row[2], h_row[3], h_row[4], h_row[5], h_row[6], h_row[7], h_row[8],
    ];
    // Undo the normalizations: H = Td^-1 * Hn * Ts.
    let hn = Homography::from_matrix(hn).map_err(|_| {
        Error::DegenerateConfiguration("correspondences yield a singular homography")
    })?;
    let td_inv = td.invert()?;
    td_inv.compose(&hn)?.compose(&ts).map_err(|_| {
        Error::DegenerateConfiguration("correspondences yield a singular homography")
    })
}

/// Translate to the centroid and scale to RMS distance sqrt(2).
fn normalize_points(pts: &[Point2]) -> (Homography, Vec<Point2>) {
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / n;
    let mean_d = pts.iter().map(|p| (p.x - cx).hypot(p.y - cy)).sum::<f64>() / n;
    let s = if mean_d > 0.0 { std::f64::consts::SQRT_2 / mean_d } else { 1.0 };
    let t = Homography { m: [s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0] };
    let mapped = pts.iter().map(|p| Point2::new(s * (p.x - cx), s * (p.y - cy))).collect();
    (t, mapped)
}

/// Inverse-warps `src` into a `target` sized mask: a target pixel is set iff
/// its center maps through `h^-1` onto a set source pixel (nearest neighbor).
pub fn warp_mask(h: &Homography, src: &BinaryMask, target: (usize, usize)) -> Result<BinaryMask> {
    let (tw, th) = target;
    let mut out = BinaryMask::new(tw, th);
    let Some(bbox) = src.bounding_box() else {
        return Ok(out);
    };
    let hinv = h.invert()?;
    let (x0, y0, x1, y1) = warp_support_region(h, bbox, tw, th);
    warp_mask_into(&hinv, src, &mut out, x0, y0, x1, y1);
    Ok(out)
}

pub(crate) fn warp_mask_into(
    hinv: &Homography,
    src: &BinaryMask,
    out: &mut BinaryMask,
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
) {
    if x1 < x0 || y1 < y0 {
        return;
    }
    debug_assert!(x1 < out.width() && y1 < out.height());
    let (sw, sh) = (src.width() as f64, src.height() as f64);
    for y in y0..=y1 {
        for x in x0..=x1 {
            if let Ok(p) = hinv.warp_point(Point2::new(x as f64, y as f64)) {
                let rx = p.x.round();
                let ry = p.y.round();
                if rx >= 0.0 && ry >= 0.0 && rx < sw && ry < sh && src.get(rx as usize, ry as usize)
                {
                    out.set(x, y, true);
                }
            }
        }
    }
}

/// Conservative target-space region that can contain warped source pixels:
/// the projected, half-pixel-expanded source bounding box. Falls back to the
/// whole target when the projection folds through infinity.
pub(crate) fn warp_support_region(
    h: &Homography,
    src_bbox: (usize, usize, usize, usize),
    tw: usize,
    th: usize,
) -> (usize, usize, usize, usize) {
    if tw == 0 || th == 0 {
        return (0, 0, 0, 0);
    }
    let full = (0, 0, tw - 1, th - 1);
    let (bx0, by0, bx1, by1) = src_bbox;
    let rect = Rect::new(bx0 as f64 - 0.5, by0 as f64 - 0.5, bx1 as f64 + 0.5, by1 as f64 + 0.5);
    let m = h.matrix();
    let mut min_x = f64::INFINITY;
    let mut max_x = f64::NEG_INFINITY;
    let mut min_y = f64::INFINITY;
    let mut max_y = f64::NEG_INFINITY;
    let mut w_sign = 0.0f64;
    for c in rect.corners() {
        let w = m[6] * c.x + m[7] * c.y + m[8];
        if w.abs() <= W_EPSILON * (1.0 + c.x.abs() + c.y.abs()) {
            return full;
        }
        if w_sign == 0.0 {
            w_sign = w.signum();
        } else if w.signum() != w_sign {
            return full;
        }
        let px = (m[0] * c.x + m[1] * c.y + m[2]) / w;
        let py = (m[3] * c.x + m[4] * c.y + m[5]) / w;
        min_x = min_x.min(px);
        max_x = max_x.max(px);
        min_y = min_y.min(py);
        max_y = max_y.max(py);
    }
    if !(min_x.is_finite() && max_x.is_finite() && min_y.is_finite() && max_y.is_finite()) {
        return full;
    }
    if max_x < 0.0 || max_y < 0.0 || min_x > (tw - 1) as f64 || min_y > (th - 1) as f64 {
        // Empty: encode as an inverted range the caller loops over zero times.
        return (1, 1, 0, 0);
    }
    let x0 = min_x.floor().max(0.0) as usize;
    let y0 = min_y.floor().max(0.0) as usize;
    let x1 = (max_x.ceil() as usize).min(tw - 1);
    let y1 = (max_y.ceil() as usize).min(th - 1);
    (x0, y0, x1, y1)
}

/// Random homography hypothesis: displaces the four corners of `bbox` by
/// zero-mean isotropic Gaussian noise with standard deviation `sigma` per
/// axis and fits the homography mapping the original corners onto the
/// displaced ones. Retries a bounded number of times on degenerate draws.
pub fn perturb_control_points<R: Rng + ?Sized>(
    bbox: &Rect,
    sigma: f64,
    rng: &mut R,
) -> Result<Homography> {
    if bbox.is_degenerate() {
        return Err(Error::DegenerateConfiguration("degenerate control-point bounding box"));
    }
    if !(sigma >= 0.0) {
        return Err(Error::DegenerateConfiguration("negative perturbation sigma"));
    }
    let corners = bbox.corners();
    let normal = Normal::new(0.0, sigma)
        .map_err(|_| Error::DegenerateConfiguration("invalid perturbation sigma"))?;
    for _ in 0..PERTURB_MAX_RETRIES {
        let mut pairs = [(Point2::new(0.0, 0.0), Point2::new(0.0, 0.0)); 4];
        for (i, c) in corners.iter().enumerate() {
            let dx = normal.sample(rng);
            let dy = normal.sample(rng);
            pairs[i] = (*c, Point2::new(c.x + dx, c.y + dy));
        }
        if let Ok(set) = CorrespondenceSet::new(pairs) {
            if let Ok(h) = homography_from_correspondences(&set) {
                return Ok(h);
            }
        }
    }
    Err(Error::DegenerateConfiguration("control-point perturbation kept degenerating"))
}
