//! Per-pixel embedding extraction and k-NN classification into
//! {background, obverse, reverse}.
//!
//! The embedding backend is pluggable; the reference backend is a fixed
//! color/texture feature stack. Search is exact: the index is a flat store
//! scanned linearly, so classification equals a brute-force scan by
//! construction and stays deterministic under entry reordering thanks to the
//! fixed tie-break.

use std::io::{Read, Write};
use std::path::Path;

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgproc::{self, GrayF};
use crate::mask::{BinaryMask, Label, Side};

/// Default neighbor count.
pub const DEFAULT_K: usize = 5;
/// Default embedding grid stride in pixels.
pub const DEFAULT_STRIDE: usize = 4;

/// A video frame handed to the pipeline: the image plus its position in the
/// sequence (backends that look ground truth up by frame index need it).
#[derive(Debug, Clone)]
pub struct Frame {
    pub index: usize,
    pub image: RgbImage,
}

/// Dense grid of embedding vectors, one per `stride x stride` pixel cell.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingGrid {
    pub grid_w: usize,
    pub grid_h: usize,
    pub stride: usize,
    pub dim: usize,
    values: Vec<f32>,
}

impl EmbeddingGrid {
    pub fn new(grid_w: usize, grid_h: usize, stride: usize, dim: usize) -> Self {
        EmbeddingGrid { grid_w, grid_h, stride, dim, values: vec![0.0; grid_w * grid_h * dim] }
    }

    /// Grid dimensions for a frame of `w x h` pixels: `ceil(dim / stride)`.
    pub fn dims_for(w: usize, h: usize, stride: usize) -> (usize, usize) {
        (w.div_ceil(stride), h.div_ceil(stride))
    }

    #[inline]
    pub fn cell(&self, cx: usize, cy: usize) -> &[f32] {
        let base = (cy * self.grid_w + cx) * self.dim;
        &self.values[base..base + self.dim]
    }

    #[inline]
    pub fn cell_mut(&mut self, cx: usize, cy: usize) -> &mut [f32] {
        let base = (cy * self.grid_w + cx) * self.dim;
        &mut self.values[base..base + self.dim]
    }

    pub fn n_cells(&self) -> usize {
        self.grid_w * self.grid_h
    }

    /// Pixel coordinates of a cell center, clamped to the frame.
    pub fn cell_center(&self, cx: usize, cy: usize, frame_w: usize, frame_h: usize) -> (usize, usize) {
        (
            (cx * self.stride + self.stride / 2).min(frame_w - 1),
            (cy * self.stride + self.stride / 2).min(frame_h - 1),
        )
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }
}

/// Deterministic embedding extractor: the same frame must always produce an
/// identical grid.
pub trait EmbeddingBackend: Send + Sync {
    fn name(&self) -> &'static str;
    fn dim(&self) -> usize;
    fn extract(&self, frame: &Frame, stride: usize) -> Result<EmbeddingGrid>;
}

/// Hand-crafted feature stack: Lab color, Gaussian-blurred luma at two
/// scales, a Laplacian-of-Gaussian response, and optionally the normalized
/// cell coordinates.
#[derive(Debug, Clone)]
pub struct ReferenceBackend {
    pub include_xy: bool,
    pub blur_sigmas: (f64, f64),
    pub log_sigma: f64,
}

impl Default for ReferenceBackend {
    fn default() -> Self {
        ReferenceBackend { include_xy: false, blur_sigmas: (2.0, 6.0), log_sigma: 1.4 }
    }
}

impl EmbeddingBackend for ReferenceBackend {
    fn name(&self) -> &'static str {
        "reference"
    }

    fn dim(&self) -> usize {
        if self.include_xy {
            8
        } else {
            6
        }
    }

    fn extract(&self, frame: &Frame, stride: usize) -> Result<EmbeddingGrid> {
        let img = &frame.image;
        let (w, h) = (img.width() as usize, img.height() as usize);
        if w == 0 || h == 0 {
            return Err(Error::BackendFailure("empty frame".into()));
        }
        let gray = GrayF::from_rgb(img);
        let blur_a = imgproc::gaussian_blur(&gray, self.blur_sigmas.0);
        let blur_b = imgproc::gaussian_blur(&gray, self.blur_sigmas.1);
        let log = imgproc::log_response(&gray, self.log_sigma);

        let (gw, gh) = EmbeddingGrid::dims_for(w, h, stride);
        let mut grid = EmbeddingGrid::new(gw, gh, stride, self.dim());
        for cy in 0..gh {
            for cx in 0..gw {
                let (px, py) = grid.cell_center(cx, cy, w, h);
                let p = img.get_pixel(px as u32, py as u32).0;
                let (l, a, b) = imgproc::rgb_to_lab(p[0], p[1], p[2]);
                let cell = grid.cell_mut(cx, cy);
                cell[0] = l;
                cell[1] = a;
                cell[2] = b;
                cell[3] = 100.0 * blur_a.get(px, py);
                cell[4] = 100.0 * blur_b.get(px, py);
                cell[5] = 100.0 * log.get(px, py);
                if self.include_xy {
                    cell[6] = 10.0 * px as f32 / w as f32;
                    cell[7] = 10.0 * py as f32 / h as f32;
                }
            }
        }
        Ok(grid)
    }
}

/// Per-channel standardization fitted on the initialization frames so the L2
/// metric weighs channels comparably.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FeatureNormalizer {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl FeatureNormalizer {
    /// Zero mean, unit variance per channel over all cells of the given
    /// grids. Channels with no spread keep scale 1.
    pub fn fit(grids: &[&EmbeddingGrid]) -> Result<FeatureNormalizer> {
        let dim = grids.first().map(|g| g.dim).ok_or(Error::InsufficientData("no grids"))?;
        let mut n = 0usize;
        let mut mean = vec![0.0f64; dim];
        for g in grids {
            if g.dim != dim {
                return Err(Error::DimMismatch { expected: dim, got: g.dim });
            }
            for c in g.values().chunks_exact(dim) {
                for (m, v) in mean.iter_mut().zip(c) {
                    *m += *v as f64;
                }
            }
            n += g.n_cells();
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let mut var = vec![0.0f64; dim];
        for g in grids {
            for c in g.values().chunks_exact(dim) {
                for ((s, v), m) in var.iter_mut().zip(c).zip(&mean) {
                    let d = *v as f64 - m;
                    *s += d * d;
                }
            }
        }
        let std: Vec<f32> = var
            .into_iter()
            .map(|s| {
                let sd = (s / n as f64).sqrt();
                if sd > 1e-6 {
                    sd as f32
                } else {
                    1.0
                }
            })
            .collect();
        Ok(FeatureNormalizer { mean: mean.into_iter().map(|m| m as f32).collect(), std })
    }

    pub fn identity(dim: usize) -> FeatureNormalizer {
        FeatureNormalizer { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    pub fn apply(&self, grid: &mut EmbeddingGrid) {
        let dim = grid.dim;
        debug_assert_eq!(dim, self.mean.len());
        for c in grid.values.chunks_exact_mut(dim) {
            for ((v, m), s) in c.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
    }
}

/// Flat exact-L2 example store. Entries are append-only during normal
/// operation; the adaptation cap may evict the oldest adapted entries but
/// never initialization entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleIndex {
    dim: usize,
    vectors: Vec<f32>,
    labels: Vec<Label>,
    init_len: usize,
}

/// One k-NN vote.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub dist_sq: f32,
    pub entry: usize,
    pub label: Label,
}

impl ExampleIndex {
    pub fn new(dim: usize) -> Self {
        ExampleIndex { dim, vectors: Vec::new(), labels: Vec::new(), init_len: 0 }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn init_len(&self) -> usize {
        self.init_len
    }

    pub fn label(&self, i: usize) -> Label {
        self.labels[i]
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn add(&mut self, vector: &[f32], label: Label) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::DimMismatch { expected: self.dim, got: vector.len() });
        }
        self.vectors.extend_from_slice(vector);
        self.labels.push(label);
        Ok(())
    }

    /// Appends examples; returns the new index size.
    pub fn add_examples<'a>(
        &mut self,
        examples: impl IntoIterator<Item = (&'a [f32], Label)>,
    ) -> Result<usize> {
        for (v, l) in examples {
            self.add(v, l)?;
        }
        Ok(self.len())
    }

    /// Marks everything inserted so far as initialization data, exempt from
    /// cap eviction.
    pub fn freeze_init(&mut self) {
        self.init_len = self.len();
    }

    /// Splices examples into the initialization block (deferred
    /// initialization data, e.g. the reverse side in strict-causal mode).
    pub fn insert_init_block<'a>(
        &mut self,
        examples: impl IntoIterator<Item = (&'a [f32], Label)>,
    ) -> Result<usize> {
        let mut vecs: Vec<f32> = Vec::new();
        let mut labels: Vec<Label> = Vec::new();
        for (v, l) in examples {
            if v.len() != self.dim {
                return Err(Error::DimMismatch { expected: self.dim, got: v.len() });
            }
            vecs.extend_from_slice(v);
            labels.push(l);
        }
        let n = labels.len();
        let at = self.init_len;
        self.vectors.splice(at * self.dim..at * self.dim, vecs);
        self.labels.splice(at..at, labels);
        self.init_len += n;
        Ok(self.len())
    }

    /// Evicts oldest adapted entries until `len() <= cap`. Initialization
    /// entries always survive.
    pub fn evict_to_cap(&mut self, cap: usize) {
        if self.len() <= cap {
            return;
        }
        let excess = self.len() - cap.max(self.init_len);
        if excess == 0 {
            return;
        }
        let start = self.init_len;
        self.labels.drain(start..start + excess);
        self.vectors.drain(start * self.dim..(start + excess) * self.dim);
    }

    /// Exact k nearest neighbors by squared L2, ordered by (distance, entry
    /// index).
    pub fn knn(&self, query: &[f32], k: usize) -> Result<Vec<Neighbor>> {
        if query.len() != self.dim {
            return Err(Error::DimMismatch { expected: self.dim, got: query.len() });
        }
        if self.len() < k || k == 0 {
            return Err(Error::EmptyIndex);
        }
        let mut best: Vec<Neighbor> = Vec::with_capacity(k + 1);
        for (i, v) in self.vectors.chunks_exact(self.dim).enumerate() {
            let mut d = 0.0f32;
            for (a, b) in query.iter().zip(v) {
                let t = a - b;
                d += t * t;
            }
            if best.len() == k {
                let worst = best[k - 1];
                if d > worst.dist_sq || (d == worst.dist_sq && i > worst.entry) {
                    continue;
                }
            }
            let nb = Neighbor { dist_sq: d, entry: i, label: self.labels[i] };
            let pos = best
                .binary_search_by(|p| {
                    p.dist_sq
                        .total_cmp(&nb.dist_sq)
                        .then(p.entry.cmp(&nb.entry))
                })
                .unwrap_err();
            best.insert(pos, nb);
            best.truncate(k);
        }
        Ok(best)
    }

    /// Classifies one vector: majority label among the k nearest neighbors;
    /// ties break to the smallest summed distance, then the fixed label order
    /// background < obverse < reverse. Confidence is the agreeing fraction.
    pub fn classify_vector(&self, query: &[f32], k: usize) -> Result<(Label, f32)> {
        let neighbors = self.knn(query, k)?;
        let mut count = [0usize; 3];
        let mut dist_sum = [0.0f64; 3];
        for n in &neighbors {
            let li = n.label as usize;
            count[li] += 1;
            dist_sum[li] += (n.dist_sq as f64).sqrt();
        }
        let labels = [Label::Background, Label::Obverse, Label::Reverse];
        let mut winner = 0usize;
        for c in 1..3 {
            if count[c] > count[winner]
                || (count[c] == count[winner] && count[c] > 0 && dist_sum[c] < dist_sum[winner])
            {
                winner = c;
            }
        }
        Ok((labels[winner], count[winner] as f32 / k as f32))
    }

    /// Writes `<path>.bin` (raw little-endian f32 vectors then one label byte
    /// per entry) and `<path>.json` (sidecar header).
    pub fn write_snapshot(&self, path: &Path) -> Result<()> {
        let header = SnapshotHeader {
            dim: self.dim,
            count: self.len(),
            init_len: self.init_len,
        };
        let json_path = path.with_extension("json");
        let bin_path = path.with_extension("bin");
        std::fs::write(&json_path, serde_json::to_vec_pretty(&header)?)
            .map_err(|e| Error::io(&json_path, e))?;
        let mut body = Vec::with_capacity(self.vectors.len() * 4 + self.labels.len());
        for v in &self.vectors {
            body.extend_from_slice(&v.to_le_bytes());
        }
        for l in &self.labels {
            body.push(l.png_value());
        }
        let mut f = std::fs::File::create(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
        f.write_all(&body).map_err(|e| Error::io(&bin_path, e))?;
        Ok(())
    }

    pub fn read_snapshot(path: &Path) -> Result<ExampleIndex> {
        let json_path = path.with_extension("json");
        let bin_path = path.with_extension("bin");
        let header = std::fs::read(&json_path).map_err(|e| Error::io(&json_path, e))?;
        let mut body = Vec::new();
        std::fs::File::open(&bin_path)
            .and_then(|mut f| f.read_to_end(&mut body))
            .map_err(|e| Error::io(&bin_path, e))?;
        Self::from_snapshot_bytes(&header, &body)
            .map_err(|e| Error::malformed(&bin_path, e.to_string()))
    }

    /// Decodes a snapshot from raw bytes; the entry point fuzzing exercises.
    pub fn from_snapshot_bytes(header_json: &[u8], body: &[u8]) -> Result<ExampleIndex> {
        let header: SnapshotHeader = serde_json::from_slice(header_json)?;
        if header.dim == 0 || header.dim > MAX_SNAPSHOT_DIM {
            return Err(Error::DimMismatch { expected: MAX_SNAPSHOT_DIM, got: header.dim });
        }
        if header.count > MAX_SNAPSHOT_ENTRIES || header.init_len > header.count {
            return Err(Error::InsufficientData("snapshot header out of range"));
        }
        let expect = header
            .count
            .checked_mul(header.dim)
            .and_then(|n| n.checked_mul(4))
            .and_then(|n| n.checked_add(header.count))
            .ok_or(Error::InsufficientData("snapshot size overflow"))?;
        if body.len() != expect {
            return Err(Error::InsufficientData("snapshot body size mismatch"));
        }
        let n_floats = header.count * header.dim;
        let mut vectors = Vec::with_capacity(n_floats);
        for c in body[..n_floats * 4].chunks_exact(4) {
            let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            if !v.is_finite() {
                return Err(Error::InsufficientData("non-finite snapshot vector"));
            }
            vectors.push(v);
        }
        let mut labels = Vec::with_capacity(header.count);
        for b in &body[n_floats * 4..] {
            labels.push(
                Label::from_png_value(*b)
                    .ok_or(Error::InsufficientData("invalid snapshot label byte"))?,
            );
        }
        Ok(ExampleIndex { dim: header.dim, vectors, labels, init_len: header.init_len })
    }
}

const MAX_SNAPSHOT_DIM: usize = 4096;
const MAX_SNAPSHOT_ENTRIES: usize = 1 << 24;

#[derive(Debug, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub dim: usize,
    pub count: usize,
    pub init_len: usize,
}

/// Per-cell classification with confidence; `stride` relates cells to
/// pixels. A full-resolution mask is a `LabelMask` with stride 1.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMask {
    pub grid_w: usize,
    pub grid_h: usize,
    pub stride: usize,
    labels: Vec<Label>,
    confidence: Vec<f32>,
}

impl LabelMask {
    pub fn new(grid_w: usize, grid_h: usize, stride: usize) -> Self {
        LabelMask {
            grid_w,
            grid_h,
            stride,
            labels: vec![Label::Background; grid_w * grid_h],
            confidence: vec![0.0; grid_w * grid_h],
        }
    }

    #[inline]
    pub fn label(&self, cx: usize, cy: usize) -> Label {
        self.labels[cy * self.grid_w + cx]
    }

    #[inline]
    pub fn confidence(&self, cx: usize, cy: usize) -> f32 {
        self.confidence[cy * self.grid_w + cx]
    }

    #[inline]
    pub fn set(&mut self, cx: usize, cy: usize, label: Label, confidence: f32) {
        let i = cy * self.grid_w + cx;
        self.labels[i] = label;
        self.confidence[i] = confidence;
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|l| **l == label).count()
    }

    /// Cell mask of one label at grid resolution.
    pub fn label_cells(&self, label: Label) -> BinaryMask {
        BinaryMask::from_fn(self.grid_w, self.grid_h, |x, y| self.label(x, y) == label)
    }

    /// Cell mask of all object labels at grid resolution.
    pub fn object_cells(&self) -> BinaryMask {
        BinaryMask::from_fn(self.grid_w, self.grid_h, |x, y| self.label(x, y).is_object())
    }

    /// Nearest-neighbor upsampling of labels and confidence to a
    /// full-resolution LabelMask (stride 1).
    pub fn upsample(&self, target_w: usize, target_h: usize) -> LabelMask {
        let mut out = LabelMask::new(target_w, target_h, 1);
        for y in 0..target_h {
            let cy = (y / self.stride).min(self.grid_h - 1);
            for x in 0..target_w {
                let cx = (x / self.stride).min(self.grid_w - 1);
                out.set(x, y, self.label(cx, cy), self.confidence(cx, cy));
            }
        }
        out
    }

    /// Full-resolution binary mask of pixels whose cell carries `label`.
    pub fn upsampled_label_mask(&self, label: Label, target_w: usize, target_h: usize) -> BinaryMask {
        BinaryMask::from_fn(target_w, target_h, |x, y| {
            let cx = (x / self.stride).min(self.grid_w - 1);
            let cy = (y / self.stride).min(self.grid_h - 1);
            self.label(cx, cy) == label
        })
    }

    /// Full-resolution binary mask of pixels whose cell is object-labeled.
    pub fn upsampled_object_mask(&self, target_w: usize, target_h: usize) -> BinaryMask {
        BinaryMask::from_fn(target_w, target_h, |x, y| {
            let cx = (x / self.stride).min(self.grid_w - 1);
            let cy = (y / self.stride).min(self.grid_h - 1);
            self.label(cx, cy).is_object()
        })
    }

    /// Full-resolution label image (for mask output files).
    pub fn to_label_image(&self, target_w: usize, target_h: usize) -> crate::mask::LabelImage {
        let mut img = crate::mask::LabelImage::new(target_w, target_h);
        for y in 0..target_h {
            let cy = (y / self.stride).min(self.grid_h - 1);
            for x in 0..target_w {
                let cx = (x / self.stride).min(self.grid_w - 1);
                img.set(x, y, self.label(cx, cy));
            }
        }
        img
    }

    /// Majority object side among the cells, if any. Ties favor obverse.
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

/// Classifies every cell of `grid` against `index` with exact k-NN.
pub fn classify(grid: &EmbeddingGrid, index: &ExampleIndex, k: usize) -> Result<LabelMask> {
    if index.len() < k || k == 0 {
        return Err(Error::EmptyIndex);
    }
    if grid.dim != index.dim() {
        return Err(Error::DimMismatch { expected: index.dim(), got: grid.dim });
    }
    let mut out = LabelMask::new(grid.grid_w, grid.grid_h, grid.stride);
    let results: Vec<(Label, f32)> = (0..grid.n_cells())
        .into_par_iter()
        .map(|i| {
            let cx = i % grid.grid_w;
            let cy = i / grid.grid_w;
            index
                .classify_vector(grid.cell(cx, cy), k)
                .expect("dims checked above")
        })
        .collect();
    for (i, (label, conf)) in results.into_iter().enumerate() {
        let cx = i % grid.grid_w;
        let cy = i / grid.grid_w;
        out.set(cx, cy, label, conf);
    }
    Ok(out)
}

/// Gathers initialization examples from labeled grids: every cell of each
/// ground-truth frame enters, object cells with the side label and the rest
/// as background, uniformly subsampled per label to `cap_per_label`.
pub fn init_examples<'a, R: rand::Rng>(
    sides: &[(Side, &'a EmbeddingGrid, &BinaryMask)],
    cap_per_label: usize,
    rng: &mut R,
) -> Vec<(&'a [f32], Label)> {
    let mut per_label: [Vec<(&'a [f32], Label)>; 3] = Default::default();
    for (side, grid, mask) in sides {
        let (fw, fh) = (mask.width(), mask.height());
        for cy in 0..grid.grid_h {
            for cx in 0..grid.grid_w {
                let (px, py) = grid.cell_center(cx, cy, fw, fh);
                let label = if mask.get(px, py) { side.label() } else { Label::Background };
                per_label[label as usize].push((grid.cell(cx, cy), label));
            }
        }
    }
    let mut out = Vec::new();
    for cells in per_label.iter_mut() {
        subsample(cells, cap_per_label, rng);
        out.extend_from_slice(cells);
    }
    out
}

/// Keeps a uniform random subset of `cap` elements, preserving order.
fn subsample<T, R: rand::Rng>(items: &mut Vec<T>, cap: usize, rng: &mut R) {
    use rand::RngExt;
    while items.len() > cap {
        let i = rng.random_range(0..items.len());
        items.swap_remove(i);
    }
}
