//! Conservative online adaptation: while tracking confidently, add new
//! background examples from isolated misclassified regions far from the
//! pose-implied object boundary, and new object examples only from closed
//! holes in the object segmentation. Nothing is adapted in the lost state.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mask::{connected_components, holes, BinaryMask, DistanceMap, Label, Side};
use crate::segmenter::{EmbeddingGrid, ExampleIndex, LabelMask};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptationConfig {
    pub enabled: bool,
    /// Minimum distance (full-resolution pixels) from the warped-template
    /// contour for new background examples.
    pub min_boundary_distance: f64,
    /// Hard cap on index size; oldest adapted entries are evicted first,
    /// initialization entries never.
    pub index_cap: usize,
}

impl Default for AdaptationConfig {
    fn default() -> Self {
        AdaptationConfig { enabled: true, min_boundary_distance: 20.0, index_cap: 1_000_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SkipReason {
    LostState,
    Disabled,
    NoneEligible,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptationReport {
    pub n_bg_added: usize,
    pub n_obj_added: usize,
    pub skipped_reason: Option<SkipReason>,
}

impl AdaptationReport {
    pub fn skipped(reason: SkipReason) -> Self {
        AdaptationReport { n_bg_added: 0, n_obj_added: 0, skipped_reason: Some(reason) }
    }
}

/// Grid-cell indices (cy * grid_w + cx) of object-labeled cells suitable as
/// new background examples: the cell center lies outside the warped template
/// contour at `min_dist` or more from its boundary, and the cell's
/// segmentation component nowhere touches the warped template.
pub fn select_background_examples(
    seg: &LabelMask,
    warped_template: &BinaryMask,
    dist: &DistanceMap,
    min_dist: f64,
) -> Vec<usize> {
    let (gw, gh) = (seg.grid_w, seg.grid_h);
    let (fw, fh) = (warped_template.width(), warped_template.height());
    let object_cells = seg.object_cells();
    let components = connected_components(&object_cells);

    // A component is vetoed if any pixel of any of its cells' blocks
    // touches the warped template.
    let stride = seg.stride;
    let block_touches_template = |cx: usize, cy: usize| -> bool {
        let x0 = cx * stride;
        let y0 = cy * stride;
        for y in y0..(y0 + stride).min(fh) {
            for x in x0..(x0 + stride).min(fw) {
                if warped_template.get(x, y) {
                    return true;
                }
            }
        }
        false
    };

    let mut eligible = vec![false; gw * gh];
    for comp in &components {
        let touches = comp.iter_set().any(|(cx, cy)| block_touches_template(cx, cy));
        if touches {
            continue;
        }
        for (cx, cy) in comp.iter_set() {
            let px = (cx * stride + stride / 2).min(fw - 1);
            let py = (cy * stride + stride / 2).min(fh - 1);
            if warped_template.get(px, py) {
                continue;
            }
            let d = dist.get(px, py);
            if d.is_finite() && (d as f64) < min_dist {
                continue;
            }
            eligible[cy * gw + cx] = true;
        }
    }
    (0..gw * gh).filter(|i| eligible[*i]).collect()
}

/// Grid-cell indices of background-labeled cells inside closed holes of the
/// object segmentation that also lie inside the warped template contour;
/// they become examples of the current side.
pub fn select_object_examples(
    seg: &LabelMask,
    warped_template: &BinaryMask,
    _side: Side,
) -> Vec<usize> {
    let (gw, gh) = (seg.grid_w, seg.grid_h);
    let (fw, fh) = (warped_template.width(), warped_template.height());
    let object_cells = seg.object_cells();
    let hole_cells = holes(&object_cells);
    let stride = seg.stride;
    let mut out = Vec::new();
    for cy in 0..gh {
        for cx in 0..gw {
            if seg.label(cx, cy) != Label::Background || !hole_cells.get(cx, cy) {
                continue;
            }
            let px = (cx * stride + stride / 2).min(fw - 1);
            let py = (cy * stride + stride / 2).min(fh - 1);
            if warped_template.get(px, py) {
                out.push(cy * gw + cx);
            }
        }
    }
    out
}

/// Runs both selections and appends the corresponding embeddings to the
/// index. `tracking` reflects the mode after this frame's pose estimate; in
/// the lost state the index is untouched.
#[allow(clippy::too_many_arguments)]
pub fn adapt(
    tracking: bool,
    side: Side,
    seg: &LabelMask,
    warped_template: &BinaryMask,
    dist: &DistanceMap,
    grid: &EmbeddingGrid,
    index: &mut ExampleIndex,
    config: &AdaptationConfig,
) -> Result<AdaptationReport> {
    if !tracking {
        return Ok(AdaptationReport::skipped(SkipReason::LostState));
    }
    if !config.enabled {
        return Ok(AdaptationReport::skipped(SkipReason::Disabled));
    }
    let bg = select_background_examples(seg, warped_template, dist, config.min_boundary_distance);
    let obj = select_object_examples(seg, warped_template, side);
    if bg.is_empty() && obj.is_empty() {
        return Ok(AdaptationReport::skipped(SkipReason::NoneEligible));
    }
    for &i in &bg {
        let (cx, cy) = (i % grid.grid_w, i / grid.grid_w);
        index.add(grid.cell(cx, cy), Label::Background)?;
    }
    for &i in &obj {
        let (cx, cy) = (i % grid.grid_w, i / grid.grid_w);
        index.add(grid.cell(cx, cy), side.label())?;
    }
    index.evict_to_cap(config.index_cap);
    Ok(AdaptationReport { n_bg_added: bg.len(), n_obj_added: obj.len(), skipped_reason: None })
}
