//! Dataset access, the IoU evaluation protocol, and dataset statistics
//! (textureness and aspect-ratio-change histograms), with CSV and rendered
//! histogram output.
//!
//! Dataset layout, one directory per sequence:
//!
//! ```text
//! <seq>/frames/%06d.png|jpg      input frames
//! <seq>/gt/%06d.png              sparse label masks (0/128/255)
//! <seq>/init.json                {"obverse_frame": .., "reverse_frame": ..}
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgproc::{self, GrayF};
use crate::mask::{
    aspect_ratio_change, iou, min_rotated_rect, BinaryMask, LabelImage, RotatedRect,
};

/// Initialization frame indices for the two sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    pub obverse_frame: usize,
    pub reverse_frame: usize,
}

impl InitSpec {
    /// Parses `init.json` content; the entry point fuzzing exercises.
    pub fn from_json_str(s: &str) -> Result<InitSpec> {
        Ok(serde_json::from_str(s)?)
    }
}

/// One sequence on disk: ordered frame paths, sparse ground-truth masks and
/// the initialization spec.
#[derive(Debug, Clone)]
pub struct SequenceRecord {
    pub root: PathBuf,
    pub frames: Vec<PathBuf>,
    pub gt: BTreeMap<usize, PathBuf>,
    pub init: InitSpec,
}

impl SequenceRecord {
    pub fn load(dir: &Path) -> Result<SequenceRecord> {
        let init_path = dir.join("init.json");
        if !init_path.exists() {
            return Err(Error::malformed(&init_path, "missing init.json"));
        }
        let text = std::fs::read_to_string(&init_path).map_err(|e| Error::io(&init_path, e))?;
        let init = InitSpec::from_json_str(&text)
            .map_err(|e| Error::malformed(&init_path, e.to_string()))?;

        let frames_dir = dir.join("frames");
        let mut frames: Vec<(usize, PathBuf)> = Vec::new();
        let entries =
            std::fs::read_dir(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&frames_dir, e))?;
            let path = entry.path();
            let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else { continue };
            let Some(ext) = path.extension().and_then(|s| s.to_str()) else { continue };
            if !matches!(ext, "png" | "jpg" | "jpeg") {
                continue;
            }
            let Ok(idx) = stem.parse::<usize>() else {
                return Err(Error::malformed(&path, "frame name is not a numeric index"));
            };
            frames.push((idx, path));
        }
        frames.sort();
        for (expect, (idx, path)) in frames.iter().enumerate() {
            if expect != *idx {
                return Err(Error::malformed(path, format!("frame indices must be dense, expected {expect}")));
            }
        }
        let frames: Vec<PathBuf> = frames.into_iter().map(|(_, p)| p).collect();
        if frames.is_empty() {
            return Err(Error::malformed(&frames_dir, "no frames"));
        }

        let mut gt = BTreeMap::new();
        let gt_dir = dir.join("gt");
        if gt_dir.exists() {
            let entries = std::fs::read_dir(&gt_dir).map_err(|e| Error::io(&gt_dir, e))?;
            for entry in entries {
                let entry = entry.map_err(|e| Error::io(&gt_dir, e))?;
                let path = entry.path();
                let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else { continue };
                if path.extension().and_then(|s| s.to_str()) != Some("png") {
                    continue;
                }
                let Ok(idx) = stem.parse::<usize>() else {
                    return Err(Error::malformed(&path, "ground-truth name is not a numeric index"));
                };
                if idx >= frames.len() {
                    return Err(Error::malformed(&path, "ground truth beyond the sequence"));
                }
                gt.insert(idx, path);
            }
        }
        for (name, f) in [("obverse", init.obverse_frame), ("reverse", init.reverse_frame)] {
            if f >= frames.len() {
                return Err(Error::malformed(
                    &init_path,
                    format!("{name} initialization frame {f} beyond the sequence"),
                ));
            }
            if !gt.contains_key(&f) {
                return Err(Error::malformed(
                    &init_path,
                    format!("{name} initialization frame {f} has no ground-truth mask"),
                ));
            }
        }
        Ok(SequenceRecord { root: dir.to_path_buf(), frames, gt, init })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn read_frame(&self, index: usize) -> Result<RgbImage> {
        let path = self.frames.get(index).ok_or(Error::MissingFrame(index))?;
        Ok(image::open(path).map_err(|e| Error::image(path, e))?.into_rgb8())
    }

    pub fn read_gt(&self, index: usize) -> Result<LabelImage> {
        let path = self.gt.get(&index).ok_or(Error::MissingFrame(index))?;
        crate::mask::read_label_png(path)
    }
}

/// Per-sequence IoU under the empty-ground-truth exclusion rule: annotated
/// frames whose ground truth is empty do not enter the mean.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceIou {
    /// Mean over contributing frames; absent when no frame contributes.
    pub mean: Option<f64>,
    /// Per annotated frame: the IoU, or None for excluded (empty-GT) frames.
    pub frames: Vec<(usize, Option<f64>)>,
    pub contributing: usize,
}

/// Computes the protocol IoU from per-frame predictions. `pred` is called
/// for every ground-truth-annotated frame index.
pub fn sequence_iou(
    gt_masks: &BTreeMap<usize, BinaryMask>,
    mut pred: impl FnMut(usize) -> Result<BinaryMask>,
) -> Result<SequenceIou> {
    let mut frames = Vec::new();
    let mut sum = 0.0;
    let mut contributing = 0usize;
    for (&idx, gt) in gt_masks {
        if gt.is_empty() {
            frames.push((idx, None));
            continue;
        }
        let p = pred(idx)?;
        let v = iou(&p, gt)?;
        frames.push((idx, Some(v)));
        sum += v;
        contributing += 1;
    }
    let mean = (contributing > 0).then(|| sum / contributing as f64);
    Ok(SequenceIou { mean, frames, contributing })
}

/// Mean absolute Laplacian-of-Gaussian response over the masked pixels; the
/// object textureness measure.
pub fn textureness(frame: &GrayF, mask: &BinaryMask, sigma: f64) -> Result<f64> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    if (frame.width(), frame.height()) != mask.dims() {
        return Err(Error::DimensionMismatch(
            frame.width(),
            frame.height(),
            mask.width(),
            mask.height(),
        ));
    }
    let log = imgproc::log_response(frame, sigma);
    let mut sum = 0.0f64;
    for (x, y) in mask.iter_set() {
        sum += log.get(x, y).abs() as f64;
    }
    Ok(sum / mask.count() as f64)
}

pub const TEXTURENESS_SIGMA: f64 = 0.8;

/// Minimum rotated rectangles of the non-empty masks, keyed by frame.
fn gt_rects(masks: &[(usize, &BinaryMask)]) -> Vec<(usize, RotatedRect)> {
    masks
        .iter()
        .filter(|(_, m)| !m.is_empty())
        .filter_map(|(i, m)| min_rotated_rect(m).ok().map(|r| (*i, r)))
        .collect()
}

/// Aspect-ratio change of every annotated non-empty mask against the first
/// annotated non-empty mask.
pub fn ar_change_vs_first(masks: &[(usize, &BinaryMask)]) -> Result<Vec<f64>> {
    let rects = gt_rects(masks);
    if rects.len() < 2 {
        return Err(Error::InsufficientData("need at least two non-empty annotated masks"));
    }
    let first = rects[0].1;
    rects[1..]
        .iter()
        .map(|(_, r)| aspect_ratio_change(&first, r))
        .collect()
}

/// Aspect-ratio change across a sliding `gap`-frame interval.
pub fn ar_change_speed(masks: &[(usize, &BinaryMask)], gap: usize) -> Result<Vec<f64>> {
    let rects = gt_rects(masks);
    let by_frame: BTreeMap<usize, &RotatedRect> =
        rects.iter().map(|(i, r)| (*i, r)).collect();
    let mut out = Vec::new();
    for (&i, r) in &by_frame {
        if let Some(prev) = i.checked_sub(gap).and_then(|j| by_frame.get(&j)) {
            out.push(aspect_ratio_change(prev, r)?);
        }
    }
    Ok(out)
}

/// Fixed-edge histogram; out-of-range values clamp into the end bins so the
/// counts conserve the number of measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(edges: Vec<f64>) -> Self {
        assert!(edges.len() >= 2);
        let bins = edges.len() - 1;
        Histogram { edges, counts: vec![0; bins] }
    }

    /// Log-spaced edges over [1, 8], the default for aspect-ratio changes.
    pub fn log_default() -> Self {
        let bins = 32;
        let lo: f64 = 1.0;
        let hi: f64 = 8.0;
        let edges = (0..=bins)
            .map(|i| lo * (hi / lo).powf(i as f64 / bins as f64))
            .collect();
        Histogram::new(edges)
    }

    pub fn add(&mut self, v: f64) {
        let bins = self.counts.len();
        let mut b = bins - 1;
        for i in 0..bins {
            if v < self.edges[i + 1] {
                b = i;
                break;
            }
        }
        if v < self.edges[0] {
            b = 0;
        }
        self.counts[b] += 1;
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_lo,bin_hi,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            s.push_str(&format!("{},{},{}\n", self.edges[i], self.edges[i + 1], c));
        }
        s
    }

    /// Bar-chart rendering as an RGB image.
    pub fn render(&self, width: u32, height: u32) -> RgbImage {
        let mut img = RgbImage::from_pixel(width, height, image::Rgb([255, 255, 255]));
        let max = self.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
        let bins = self.counts.len() as u32;
        let margin = 4u32;
        let plot_h = height.saturating_sub(2 * margin);
        let bar_w = (width.saturating_sub(2 * margin)) / bins.max(1);
        for (i, &c) in self.counts.iter().enumerate() {
            let h = ((c as f64 / max) * plot_h as f64).round() as u32;
            let x0 = margin + i as u32 * bar_w;
            for x in x0..(x0 + bar_w.saturating_sub(1)).min(width - 1) {
                for y in (height - margin - h)..(height - margin) {
                    img.put_pixel(x, y, image::Rgb([66, 110, 180]));
                }
            }
        }
        // Axis line.
        for x in 0..width {
            img.put_pixel(x, height - margin, image::Rgb([0, 0, 0]));
        }
        img
    }
}

/// Per-sequence evaluation numbers: the overall protocol IoU and the
/// tracking-state-only variant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SequenceEval {
    pub sequence: String,
    pub mean_iou: Option<f64>,
    pub contributing_frames: usize,
    pub tracking_iou: Option<f64>,
    pub tracking_contributing: usize,
    pub tracking_fraction: f64,
}

/// Evaluates a results directory (JSON-lines plus mask PNGs, as written by
/// the track command) against a dataset sequence.
pub fn evaluate_sequence(seq: &SequenceRecord, results_dir: &Path) -> Result<SequenceEval> {
    let records = crate::tracker::read_results_jsonl(&results_dir.join("results.jsonl"))?;
    if records.len() != seq.len() {
        return Err(Error::malformed(
            results_dir.join("results.jsonl"),
            format!("{} records for {} frames", records.len(), seq.len()),
        ));
    }
    let mut gt_masks: BTreeMap<usize, BinaryMask> = BTreeMap::new();
    for &idx in seq.gt.keys() {
        gt_masks.insert(idx, seq.read_gt(idx)?.object_mask());
    }
    let read_pred = |idx: usize| -> Result<BinaryMask> {
        let rec = &records[idx];
        let path = results_dir.join(&rec.mask_path);
        Ok(crate::mask::read_label_png(&path)?.object_mask())
    };

    let overall = sequence_iou(&gt_masks, read_pred)?;

    // Tracking-state-only: drop annotated frames where the tracker was lost.
    let mut tracking_gt: BTreeMap<usize, BinaryMask> = BTreeMap::new();
    for (&idx, m) in &gt_masks {
        if records[idx].mode == crate::tracker::TrackerMode::Tracking {
            tracking_gt.insert(idx, m.clone());
        }
    }
    let tracking = sequence_iou(&tracking_gt, read_pred)?;
    let n_tracking =
        records.iter().filter(|r| r.mode == crate::tracker::TrackerMode::Tracking).count();

    Ok(SequenceEval {
        sequence: seq
            .root
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "sequence".into()),
        mean_iou: overall.mean,
        contributing_frames: overall.contributing,
        tracking_iou: tracking.mean,
        tracking_contributing: tracking.contributing,
        tracking_fraction: n_tracking as f64 / records.len() as f64,
    })
}

/// Overall-IoU table (one row per sequence plus the mean) as CSV.
pub fn iou_table_csv(evals: &[SequenceEval]) -> String {
    let mut s = String::from("sequence,mean_iou,contributing_frames\n");
    let mut sum = 0.0;
    let mut n = 0usize;
    for e in evals {
        match e.mean_iou {
            Some(v) => {
                s.push_str(&format!("{},{:.4},{}\n", e.sequence, v, e.contributing_frames));
                sum += v;
                n += 1;
            }
            None => s.push_str(&format!("{},,0\n", e.sequence)),
        }
    }
    if n > 0 {
        s.push_str(&format!("mean,{:.4},\n", sum / n as f64));
    }
    s
}

/// Tracking-state-only table: confident-frame IoU and the fraction of frames
/// spent in the tracking state, as CSV.
pub fn tracking_table_csv(evals: &[SequenceEval]) -> String {
    let mut s = String::from("sequence,tracking_iou,tracking_state_percent\n");
    for e in evals {
        match e.tracking_iou {
            Some(v) => s.push_str(&format!(
                "{},{:.4},{:.1}\n",
                e.sequence,
                v,
                100.0 * e.tracking_fraction
            )),
            None => {
                s.push_str(&format!("{},,{:.1}\n", e.sequence, 100.0 * e.tracking_fraction))
            }
        }
    }
    s
}
