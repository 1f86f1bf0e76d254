//! Binary and label masks plus the mask geometry the tracker and the
//! evaluation need: IoU, connected components, hole extraction, distance to
//! the mask boundary, and minimum rotated bounding rectangles.
//!
//! PNG convention: single channel, 0 = background, 128 = obverse,
//! 255 = reverse; plain binary masks use 0/255.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point2;

/// Classification label of a pixel or embedding cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Background,
    Obverse,
    Reverse,
}

impl Label {
    pub fn png_value(self) -> u8 {
        match self {
            Label::Background => 0,
            Label::Obverse => 128,
            Label::Reverse => 255,
        }
    }

    pub fn from_png_value(v: u8) -> Option<Label> {
        match v {
            0 => Some(Label::Background),
            128 => Some(Label::Obverse),
            255 => Some(Label::Reverse),
            _ => None,
        }
    }

    pub fn side(self) -> Option<Side> {
        match self {
            Label::Background => None,
            Label::Obverse => Some(Side::Obverse),
            Label::Reverse => Some(Side::Reverse),
        }
    }

    pub fn is_object(self) -> bool {
        self != Label::Background
    }
}

/// Which face of the object is meant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Obverse,
    Reverse,
}

impl Side {
    pub fn label(self) -> Label {
        match self {
            Side::Obverse => Label::Obverse,
            Side::Reverse => Label::Reverse,
        }
    }

    pub fn other(self) -> Side {
        match self {
            Side::Obverse => Side::Reverse,
            Side::Reverse => Side::Obverse,
        }
    }
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Side::Obverse => write!(f, "obverse"),
            Side::Reverse => write!(f, "reverse"),
        }
    }
}

/// Row-major per-pixel membership grid with a cached set-pixel count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
    count: usize,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        BinaryMask { width, height, bits: vec![false; width * height], count: 0 }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = vec![false; width * height];
        let mut count = 0;
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                bits[y * width + x] = v;
                count += v as usize;
            }
        }
        BinaryMask { width, height, bits, count }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::DimensionMismatch(width, height, bits.len(), 1));
        }
        let count = bits.iter().filter(|b| **b).count();
        Ok(BinaryMask { width, height, bits, count })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    /// Signed-coordinate lookup; out-of-range is unset.
    #[inline]
    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
            && self.get(x as usize, y as usize)
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        let slot = &mut self.bits[y * self.width + x];
        if *slot != v {
            self.count = if v { self.count + 1 } else { self.count - 1 };
            *slot = v;
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Inclusive bounding box of set pixels: (x0, y0, x1, y1).
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        if self.count == 0 {
            return None;
        }
        let (mut x0, mut y0) = (usize::MAX, usize::MAX);
        let (mut x1, mut y1) = (0usize, 0usize);
        for y in 0..self.height {
            let row = &self.bits[y * self.width..(y + 1) * self.width];
            if let Some(first) = row.iter().position(|b| *b) {
                let last = self.width - 1 - row.iter().rev().position(|b| *b).unwrap();
                x0 = x0.min(first);
                x1 = x1.max(last);
                y0 = y0.min(y);
                y1 = y1.max(y);
            }
        }
        Some((x0, y0, x1, y1))
    }

    pub fn iter_set(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(move |(i, _)| (i % w, i / w))
    }

    pub fn same_dims(&self, other: &BinaryMask) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }

    pub fn intersection(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.same_dims(other)?;
        let bits: Vec<bool> =
            self.bits.iter().zip(other.bits.iter()).map(|(a, b)| *a && *b).collect();
        BinaryMask::from_bits(self.width, self.height, bits)
    }

    pub fn intersection_count(&self, other: &BinaryMask) -> Result<usize> {
        self.same_dims(other)?;
        Ok(self.bits.iter().zip(other.bits.iter()).filter(|(a, b)| **a && **b).count())
    }
}

/// Intersection over union. Both-empty is a correct "object absent" match and
/// scores 1.0; exactly one empty scores 0.0.
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    a.same_dims(b)?;
    if a.is_empty() && b.is_empty() {
        return Ok(1.0);
    }
    let inter = a.intersection_count(b)? as f64;
    let union = (a.count() + b.count()) as f64 - inter;
    Ok(inter / union)
}

/// Maximal 8-connected components of the set pixels, largest first, ties
/// broken by the scanline-first set pixel. Union-find over the pixel grid.
pub fn connected_components(m: &BinaryMask) -> Vec<BinaryMask> {
    let (w, h) = m.dims();
    if m.is_empty() {
        return Vec::new();
    }
    let mut parent: Vec<u32> = (0..(w * h) as u32).collect();

    fn find(parent: &mut [u32], mut i: u32) -> u32 {
        while parent[i as usize] != i {
            parent[i as usize] = parent[parent[i as usize] as usize];
            i = parent[i as usize];
        }
        i
    }
    fn union(parent: &mut [u32], a: u32, b: u32) {
        let ra = find(parent, a);
        let rb = find(parent, b);
        if ra != rb {
            // Attach the larger root index under the smaller so roots stay
            // scanline-minimal.
            if ra < rb {
                parent[rb as usize] = ra;
            } else {
                parent[ra as usize] = rb;
            }
        }
    }

    for y in 0..h {
        for x in 0..w {
            if !m.get(x, y) {
                continue;
            }
            let idx = (y * w + x) as u32;
            if x > 0 && m.get(x - 1, y) {
                union(&mut parent, idx, idx - 1);
            }
            if y > 0 {
                let up = idx - w as u32;
                if m.get(x, y - 1) {
                    union(&mut parent, idx, up);
                }
                if x > 0 && m.get(x - 1, y - 1) {
                    union(&mut parent, idx, up - 1);
                }
                if x + 1 < w && m.get(x + 1, y - 1) {
                    union(&mut parent, idx, up + 1);
                }
            }
        }
    }

    // Roots are scanline-minimal members, so grouping by root in scanline
    // order yields deterministic component identity.
    let mut by_root: std::collections::HashMap<u32, Vec<u32>> = std::collections::HashMap::new();
    for y in 0..h {
        for x in 0..w {
            if m.get(x, y) {
                let idx = (y * w + x) as u32;
                let r = find(&mut parent, idx);
                by_root.entry(r).or_default().push(idx);
            }
        }
    }
    let mut groups: Vec<(u32, Vec<u32>)> = by_root.into_iter().collect();
    // Size descending, then top-left-most (scanline-first) pixel, which is
    // the root itself.
    groups.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(&b.0)));
    groups
        .into_iter()
        .map(|(_, idxs)| {
            let mut comp = BinaryMask::new(w, h);
            for i in idxs {
                comp.set(i as usize % w, i as usize / w, true);
            }
            comp
        })
        .collect()
}

/// Unset pixels that cannot reach the image border through unset pixels
/// (8-connectivity).
pub fn holes(m: &BinaryMask) -> BinaryMask {
    let (w, h) = m.dims();
    if w == 0 || h == 0 {
        return BinaryMask::new(w, h);
    }
    let mut reached = vec![false; w * h];
    let mut stack: Vec<(usize, usize)> = Vec::new();
    let push = |x: usize, y: usize, reached: &mut Vec<bool>, stack: &mut Vec<(usize, usize)>| {
        let i = y * w + x;
        if !reached[i] && !m.get(x, y) {
            reached[i] = true;
            stack.push((x, y));
        }
    };
    for x in 0..w {
        push(x, 0, &mut reached, &mut stack);
        push(x, h - 1, &mut reached, &mut stack);
    }
    for y in 0..h {
        push(0, y, &mut reached, &mut stack);
        push(w - 1, y, &mut reached, &mut stack);
    }
    while let Some((x, y)) = stack.pop() {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let nx = x as i64 + dx;
                let ny = y as i64 + dy;
                if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h {
                    push(nx as usize, ny as usize, &mut reached, &mut stack);
                }
            }
        }
    }
    BinaryMask::from_fn(w, h, |x, y| !m.get(x, y) && !reached[y * w + x])
}

/// Per-pixel Euclidean distance to the nearest mask boundary pixel (a set
/// pixel with an unset 4-neighbor). All-infinity when the mask has no
/// boundary.
#[derive(Debug, Clone)]
pub struct DistanceMap {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl DistanceMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }
}

/// Exact Euclidean distance transform to the mask boundary, by the two-pass
/// lower-envelope-of-parabolas method on squared distances.
pub fn boundary_distance(m: &BinaryMask) -> DistanceMap {
    let (w, h) = m.dims();
    let mut f = vec![f64::INFINITY; w * h];
    let mut any = false;
    for y in 0..h {
        for x in 0..w {
            if !m.get(x, y) {
                continue;
            }
            let boundary = (x > 0 && !m.get(x - 1, y))
                || (x + 1 < w && !m.get(x + 1, y))
                || (y > 0 && !m.get(x, y - 1))
                || (y + 1 < h && !m.get(x, y + 1));
            if boundary {
                f[y * w + x] = 0.0;
                any = true;
            }
        }
    }
    if !any {
        return DistanceMap { width: w, height: h, values: vec![f32::INFINITY; w * h] };
    }

    // Rows.
    let mut row = vec![0.0f64; w.max(h)];
    let mut out_row = vec![0.0f64; w.max(h)];
    for y in 0..h {
        row[..w].copy_from_slice(&f[y * w..(y + 1) * w]);
        edt_1d(&row[..w], &mut out_row[..w]);
        f[y * w..(y + 1) * w].copy_from_slice(&out_row[..w]);
    }
    // Columns.
    for x in 0..w {
        for y in 0..h {
            row[y] = f[y * w + x];
        }
        edt_1d(&row[..h], &mut out_row[..h]);
        for y in 0..h {
            f[y * w + x] = out_row[y];
        }
    }
    DistanceMap { width: w, height: h, values: f.into_iter().map(|d| d.sqrt() as f32).collect() }
}

/// 1-D squared distance transform (lower envelope of parabolas).
fn edt_1d(f: &[f64], d: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        if f[q] == f64::INFINITY {
            continue;
        }
        loop {
            let p = v[k];
            let s = if f[p] == f64::INFINITY {
                f64::NEG_INFINITY
            } else {
                ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64))
            };
            if s <= z[k] {
                if k == 0 {
                    // Replace the sole parabola.
                    v[0] = q;
                    z[0] = f64::NEG_INFINITY;
                    z[1] = f64::INFINITY;
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    let first_finite = f.iter().any(|x| x.is_finite());
    if !first_finite {
        d.copy_from_slice(f);
        return;
    }
    // Handle an all-INF prefix: if v[0] still points at an INF cell, shift.
    let mut k = 0usize;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        d[q] = if f[p] == f64::INFINITY {
            f64::INFINITY
        } else {
            ((q as f64 - p as f64) * (q as f64 - p as f64)) + f[p]
        };
    }
}

/// Minimum-area rotated rectangle around pixel centers. `side_a >= side_b`,
/// `angle` is the direction of the `side_a` axis in `[0, pi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotatedRect {
    pub center: Point2,
    pub side_a: f64,
    pub side_b: f64,
    pub angle: f64,
}

/// Minimal rotated rectangle bounding the set pixel centers: convex hull plus
/// a rotating-calipers sweep over hull edges.
pub fn min_rotated_rect(m: &BinaryMask) -> Result<RotatedRect> {
    if m.is_empty() {
        return Err(Error::EmptyMask);
    }
    let pts: Vec<Point2> = m.iter_set().map(|(x, y)| Point2::new(x as f64, y as f64)).collect();
    let hull = convex_hull(&pts);
    match hull.len() {
        1 => Ok(RotatedRect { center: hull[0], side_a: 0.0, side_b: 0.0, angle: 0.0 }),
        2 => {
            let (p, q) = (hull[0], hull[1]);
            let len = p.dist(&q);
            let angle = normalize_angle((q.y - p.y).atan2(q.x - p.x));
            Ok(RotatedRect {
                center: Point2::new(0.5 * (p.x + q.x), 0.5 * (p.y + q.y)),
                side_a: len,
                side_b: 0.0,
                angle,
            })
        }
        _ => {
            let mut best: Option<(f64, RotatedRect)> = None;
            let n = hull.len();
            for i in 0..n {
                let p = hull[i];
                let q = hull[(i + 1) % n];
                let theta = (q.y - p.y).atan2(q.x - p.x);
                let (sin, cos) = theta.sin_cos();
                let mut umin = f64::INFINITY;
                let mut umax = f64::NEG_INFINITY;
                let mut vmin = f64::INFINITY;
                let mut vmax = f64::NEG_INFINITY;
                for pt in &hull {
                    let u = pt.x * cos + pt.y * sin;
                    let v = -pt.x * sin + pt.y * cos;
                    umin = umin.min(u);
                    umax = umax.max(u);
                    vmin = vmin.min(v);
                    vmax = vmax.max(v);
                }
                let du = umax - umin;
                let dv = vmax - vmin;
                let area = du * dv;
                if best.as_ref().is_none_or(|(a, _)| area < *a) {
                    let cu = 0.5 * (umin + umax);
                    let cv = 0.5 * (vmin + vmax);
                    let center = Point2::new(cu * cos - cv * sin, cu * sin + cv * cos);
                    let (side_a, side_b, axis) =
                        if du >= dv { (du, dv, theta) } else { (dv, du, theta + std::f64::consts::FRAC_PI_2) };
                    best = Some((
                        area,
                        RotatedRect { center, side_a, side_b, angle: normalize_angle(axis) },
                    ));
                }
            }
            Ok(best.expect("hull with >= 3 points").1)
        }
    }
}

fn normalize_angle(a: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let mut a = a % pi;
    if a < 0.0 {
        a += pi;
    }
    if a >= pi {
        a -= pi;
    }
    a
}

/// Andrew monotone chain; collinear points dropped.
fn convex_hull(pts: &[Point2]) -> Vec<Point2> {
    let mut pts: Vec<Point2> = pts.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup_by(|a, b| a.x == b.x && a.y == b.y);
    let n = pts.len();
    if n <= 2 {
        return pts;
    }
    let cross = |o: &Point2, a: &Point2, b: &Point2| {
        (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
    };
    let mut lower: Vec<Point2> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= 0.0
        {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<Point2> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= 0.0
        {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    if lower.len() < 2 {
        // All points collinear: keep the two extremes.
        return vec![pts[0], pts[n - 1]];
    }
    lower
}

/// Aspect ratio of a rotated rectangle: `max(a/b, b/a) >= 1`.
pub fn aspect_ratio(r: &RotatedRect) -> Result<f64> {
    if r.side_a <= 0.0 || r.side_b <= 0.0 {
        return Err(Error::DegenerateRect);
    }
    Ok((r.side_a / r.side_b).max(r.side_b / r.side_a))
}

/// Relative change of the aspect ratios of two rectangles, `>= 1` and
/// symmetric in its arguments.
pub fn aspect_ratio_change(a: &RotatedRect, b: &RotatedRect) -> Result<f64> {
    let ra = aspect_ratio(a)?;
    let rb = aspect_ratio(b)?;
    Ok((ra / rb).max(rb / ra))
}

/// Full-resolution per-pixel label image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelImage {
    width: usize,
    height: usize,
    labels: Vec<Label>,
}

impl LabelImage {
    pub fn new(width: usize, height: usize) -> Self {
        LabelImage { width, height, labels: vec![Label::Background; width * height] }
    }

    pub fn from_labels(width: usize, height: usize, labels: Vec<Label>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::DimensionMismatch(width, height, labels.len(), 1));
        }
        Ok(LabelImage { width, height, labels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Label {
        self.labels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, l: Label) {
        self.labels[y * self.width + x] = l;
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn object_mask(&self) -> BinaryMask {
        BinaryMask::from_fn(self.width, self.height, |x, y| self.get(x, y).is_object())
    }

    pub fn label_mask(&self, label: Label) -> BinaryMask {
        BinaryMask::from_fn(self.width, self.height, |x, y| self.get(x, y) == label)
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|l| **l == label).count()
    }

    /// Majority object side, if any object pixel is present.
    pub fn majority_side(&self) -> Option<Side> {
        let obv = self.count(Label::Obverse);
        let rev = self.count(Label::Reverse);
        if obv == 0 && rev == 0 {
            None
        } else if rev > obv {
            Some(Side::Reverse)
        } else {
            Some(Side::Obverse)
        }
    }
}

pub fn write_mask_png(path: &Path, m: &BinaryMask) -> Result<()> {
    let buf: Vec<u8> = m.bits().iter().map(|b| if *b { 255u8 } else { 0u8 }).collect();
    let img = image::GrayImage::from_raw(m.width() as u32, m.height() as u32, buf)
        .expect("buffer length matches dimensions");
    img.save(path).map_err(|e| Error::image(path, e))
}

/// Reads a binary mask; any sample above 127 counts as set.
pub fn read_mask_png(path: &Path) -> Result<BinaryMask> {
    let img = image::open(path).map_err(|e| Error::image(path, e))?.into_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let bits = img.into_raw().into_iter().map(|v| v > 127).collect();
    BinaryMask::from_bits(w, h, bits)
}

pub fn write_label_png(path: &Path, m: &LabelImage) -> Result<()> {
    let buf: Vec<u8> = m.labels().iter().map(|l| l.png_value()).collect();
    let img = image::GrayImage::from_raw(m.width() as u32, m.height() as u32, buf)
        .expect("buffer length matches dimensions");
    img.save(path).map_err(|e| Error::image(path, e))
}

/// Reads a label mask; samples must be exactly 0, 128 or 255.
pub fn read_label_png(path: &Path) -> Result<LabelImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    label_image_from_png_bytes(&bytes).map_err(|e| match e {
        Error::InsufficientData(msg) => Error::malformed(path, msg),
        other => other,
    })
}

/// Decodes an in-memory PNG into a label image; the entry point fuzzing
/// exercises.
pub fn label_image_from_png_bytes(bytes: &[u8]) -> Result<LabelImage> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|_| Error::InsufficientData("not a decodable PNG"))?
        .into_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w * h > (1 << 26) {
        return Err(Error::InsufficientData("label image too large"));
    }
    let mut labels = Vec::with_capacity(w * h);
    for v in img.into_raw() {
        match Label::from_png_value(v) {
            Some(l) => labels.push(l),
            None => {
                return Err(Error::InsufficientData("label sample is not one of 0/128/255"))
            }
        }
    }
    LabelImage::from_labels(w, h, labels)
}
