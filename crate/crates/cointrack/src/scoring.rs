//! The four-component pose score: the fraction of the segmentation explained
//! by the hypothesized object contour, the coverage of that contour by the
//! segmentation, the inter-frame visibility-mask overlap, and a ZNCC-based
//! appearance term, multiplied into one 0-1 number so a drop in any single
//! component drags the total down.

use crate::error::{Error, Result};
use crate::geometry::{self, Homography, Point2};
use crate::imgproc::GrayF;
use crate::mask::{self, BinaryMask};

/// Minimum overlap-pixel count below which the appearance term is
/// uninformative.
pub const DEFAULT_MIN_APPEARANCE_PX: usize = 16;
/// Neutral appearance value when the term is degenerate.
pub const NEUTRAL_APPEARANCE: f64 = 0.5;

const VARIANCE_EPS: f64 = 1e-10;

/// The four score components and their product for one pose hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScoreBreakdown {
    pub obj: f64,
    pub cover: f64,
    pub occl: f64,
    pub appearance: f64,
    pub total: f64,
}

impl ScoreBreakdown {
    pub fn new(obj: f64, cover: f64, occl: f64, appearance: f64) -> Self {
        ScoreBreakdown { obj, cover, occl, appearance, total: obj * cover * occl * appearance }
    }

    pub fn zero() -> Self {
        ScoreBreakdown::new(0.0, 0.0, 0.0, 0.0)
    }
}

/// Fraction of the segmentation lying inside the hypothesized contour.
/// An empty segmentation supports no pose and scores 0.
pub fn s_obj(seg: &BinaryMask, warped_template: &BinaryMask) -> Result<f64> {
    seg.same_dims(warped_template)?;
    if seg.is_empty() {
        return Ok(0.0);
    }
    Ok(seg.intersection_count(warped_template)? as f64 / seg.count() as f64)
}

/// Fraction of the hypothesized contour covered by the segmentation.
pub fn s_cover(seg: &BinaryMask, warped_template: &BinaryMask) -> Result<f64> {
    seg.same_dims(warped_template)?;
    if warped_template.is_empty() {
        return Ok(0.0);
    }
    Ok(seg.intersection_count(warped_template)? as f64 / warped_template.count() as f64)
}

/// Pixels both inside the hypothesized contour and segmented as object.
pub fn visibility_mask(seg: &BinaryMask, warped_template: &BinaryMask) -> Result<BinaryMask> {
    seg.intersection(warped_template)
}

/// IoU of the current visibility mask against the previous one transported
/// into the current frame by `h_inter`.
pub fn s_occl(
    current_vis: &BinaryMask,
    prev_vis: &BinaryMask,
    h_inter: &Homography,
) -> Result<f64> {
    let warped_prev = geometry::warp_mask(h_inter, prev_vis, current_vis.dims())?;
    mask::iou(current_vis, &warped_prev)
}

/// The overlap set `O` for the appearance term, in the canonical template
/// frame: template-mask pixels whose projection lands on a segmented pixel
/// of the current frame.
pub fn appearance_overlap(
    template_mask: &BinaryMask,
    seg: &BinaryMask,
    h: &Homography,
) -> Result<BinaryMask> {
    let (tw, th) = template_mask.dims();
    let mut o = BinaryMask::new(tw, th);
    let Some((x0, y0, x1, y1)) = template_mask.bounding_box() else {
        return Ok(o);
    };
    for y in y0..=y1 {
        for x in x0..=x1 {
            if !template_mask.get(x, y) {
                continue;
            }
            if let Ok(p) = h.warp_point(Point2::new(x as f64, y as f64)) {
                if seg.contains(p.x.round() as i64, p.y.round() as i64) {
                    o.set(x, y, true);
                }
            }
        }
    }
    Ok(o)
}

/// Appearance score: `1/2 + ZNCC/2` between the template and the current
/// frame sampled bilinearly through `h`, over the overlap set `o` (canonical
/// frame). Degenerate overlaps (too few pixels or a flat signal) return the
/// neutral 0.5 so a texture-less but geometrically consistent hypothesis is
/// not annihilated.
pub fn s_appearance(
    frame: &GrayF,
    template: &GrayF,
    h: &Homography,
    o: &BinaryMask,
    min_pixels: usize,
) -> f64 {
    let Some((x0, y0, x1, y1)) = o.bounding_box() else {
        return NEUTRAL_APPEARANCE;
    };
    let mut acc = ZnccAccumulator::default();
    for y in y0..=y1 {
        for x in x0..=x1 {
            if !o.get(x, y) {
                continue;
            }
            let Ok(p) = h.warp_point(Point2::new(x as f64, y as f64)) else {
                continue;
            };
            acc.push(frame.sample_bilinear(p.x, p.y) as f64, template.get(x, y) as f64);
        }
    }
    acc.score(min_pixels)
}

#[derive(Debug, Default, Clone, Copy)]
struct ZnccAccumulator {
    n: usize,
    sum_t: f64,
    sum_s: f64,
    sum_tt: f64,
    sum_ss: f64,
    sum_ts: f64,
}

impl ZnccAccumulator {
    #[inline]
    fn push(&mut self, t: f64, s: f64) {
        self.n += 1;
        self.sum_t += t;
        self.sum_s += s;
        self.sum_tt += t * t;
        self.sum_ss += s * s;
        self.sum_ts += t * s;
    }

    fn score(&self, min_pixels: usize) -> f64 {
        if self.n < min_pixels.max(1) {
            return NEUTRAL_APPEARANCE;
        }
        let n = self.n as f64;
        let var_t = (self.sum_tt - self.sum_t * self.sum_t / n).max(0.0);
        let var_s = (self.sum_ss - self.sum_s * self.sum_s / n).max(0.0);
        if var_t <= VARIANCE_EPS * n || var_s <= VARIANCE_EPS * n {
            return NEUTRAL_APPEARANCE;
        }
        let cov = self.sum_ts - self.sum_t * self.sum_s / n;
        let zncc = cov / (var_t * var_s).sqrt();
        (0.5 + 0.5 * zncc).clamp(0.0, 1.0)
    }
}

/// Assembled per-hypothesis score. `prev_pose` is the pose the previous
/// visibility mask is expressed under (identity when it is the full template
/// mask in the canonical frame, the re-detection convention).
#[allow(clippy::too_many_arguments)]
pub fn score(
    frame: &GrayF,
    seg: &BinaryMask,
    template_gray: &GrayF,
    template_mask: &BinaryMask,
    prev_vis: &BinaryMask,
    prev_pose: &Homography,
    h: &Homography,
    min_appearance_px: usize,
) -> Result<ScoreBreakdown> {
    let warped = geometry::warp_mask(h, template_mask, seg.dims())?;
    let obj = s_obj(seg, &warped)?;
    let cover = s_cover(seg, &warped)?;
    let vis = visibility_mask(seg, &warped)?;
    let h_inter = h.compose(&prev_pose.invert()?)?;
    let occl = s_occl(&vis, prev_vis, &h_inter)?;
    let o = appearance_overlap(template_mask, seg, h)?;
    let appearance = s_appearance(frame, template_gray, h, &o, min_appearance_px);
    Ok(ScoreBreakdown::new(obj, cover, occl, appearance))
}

/// Anything the optimizer can ask for a hypothesis score.
pub trait PoseScore: Sync {
    fn score_pose(&self, h: &Homography) -> Result<ScoreBreakdown>;
}

impl<F> PoseScore for F
where
    F: Fn(&Homography) -> Result<ScoreBreakdown> + Sync,
{
    fn score_pose(&self, h: &Homography) -> Result<ScoreBreakdown> {
        self(h)
    }
}

/// Scorer bound to one frame and one template side, with the support
/// bounding boxes cached so hypothesis evaluation touches only the projected
/// regions. Produces the same values as [`score`].
pub struct PoseScorer<'a> {
    frame: &'a GrayF,
    seg: &'a BinaryMask,
    template_gray: &'a GrayF,
    template_mask: &'a BinaryMask,
    prev_vis: &'a BinaryMask,
    prev_pose: Homography,
    min_appearance_px: usize,
    template_bbox: (usize, usize, usize, usize),
    prev_vis_bbox: Option<(usize, usize, usize, usize)>,
    prev_pose_inv: Homography,
}

impl<'a> PoseScorer<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        frame: &'a GrayF,
        seg: &'a BinaryMask,
        template_gray: &'a GrayF,
        template_mask: &'a BinaryMask,
        prev_vis: &'a BinaryMask,
        prev_pose: Homography,
        min_appearance_px: usize,
    ) -> Result<Self> {
        if seg.dims() != (frame.width(), frame.height()) {
            return Err(Error::DimensionMismatch(
                seg.width(),
                seg.height(),
                frame.width(),
                frame.height(),
            ));
        }
        let template_bbox = template_mask.bounding_box().ok_or(Error::EmptyMask)?;
        let prev_vis_bbox = prev_vis.bounding_box();
        let prev_pose_inv = prev_pose.invert()?;
        Ok(PoseScorer {
            frame,
            seg,
            template_gray,
            template_mask,
            prev_vis,
            prev_pose,
            min_appearance_px,
            template_bbox,
            prev_vis_bbox,
            prev_pose_inv,
        })
    }

    pub fn prev_pose(&self) -> &Homography {
        &self.prev_pose
    }

    /// Warped template support region and bits, restricted to the projected
    /// bounding box.
    fn warp_local(
        &self,
        h: &Homography,
        src: &BinaryMask,
        src_bbox: (usize, usize, usize, usize),
    ) -> Result<LocalMask> {
        let hinv = h.invert()?;
        let (fw, fh) = (self.frame.width(), self.frame.height());
        let (x0, y0, x1, y1) = geometry::warp_support_region(h, src_bbox, fw, fh);
        if x1 < x0 || y1 < y0 {
            return Ok(LocalMask::empty());
        }
        let w = x1 - x0 + 1;
        let h_px = y1 - y0 + 1;
        let mut bits = vec![false; w * h_px];
        let mut count = 0usize;
        let (sw, sh) = (src.width() as f64, src.height() as f64);
        for y in y0..=y1 {
            for x in x0..=x1 {
                if let Ok(p) = hinv.warp_point(Point2::new(x as f64, y as f64)) {
                    let rx = p.x.round();
                    let ry = p.y.round();
                    if rx >= 0.0
                        && ry >= 0.0
                        && rx < sw
                        && ry < sh
                        && src.get(rx as usize, ry as usize)
                    {
                        bits[(y - y0) * w + (x - x0)] = true;
                        count += 1;
                    }
                }
            }
        }
        Ok(LocalMask { x0, y0, w, h: h_px, bits, count })
    }
}

/// Dense bit block anchored at (x0, y0) in frame coordinates.
struct LocalMask {
    x0: usize,
    y0: usize,
    w: usize,
    h: usize,
    bits: Vec<bool>,
    count: usize,
}

impl LocalMask {
    fn empty() -> Self {
        LocalMask { x0: 0, y0: 0, w: 0, h: 0, bits: Vec::new(), count: 0 }
    }

    #[inline]
    fn get(&self, x: usize, y: usize) -> bool {
        if x < self.x0 || y < self.y0 {
            return false;
        }
        let lx = x - self.x0;
        let ly = y - self.y0;
        lx < self.w && ly < self.h && self.bits[ly * self.w + lx]
    }
}

impl PoseScore for PoseScorer<'_> {
    fn score_pose(&self, h: &Homography) -> Result<ScoreBreakdown> {
        let warped = self.warp_local(h, self.template_mask, self.template_bbox)?;

        // s_obj / s_cover / visibility from one pass over the warped block.
        let mut inter = 0usize;
        for ly in 0..warped.h {
            let fy = warped.y0 + ly;
            for lx in 0..warped.w {
                if warped.bits[ly * warped.w + lx] && self.seg.get(warped.x0 + lx, fy) {
                    inter += 1;
                }
            }
        }
        let obj = if self.seg.is_empty() { 0.0 } else { inter as f64 / self.seg.count() as f64 };
        let cover = if warped.count == 0 { 0.0 } else { inter as f64 / warped.count as f64 };
        let n_vis = inter;

        // s_occl: warp the previous visibility through the inter-frame map.
        let occl = match self.prev_vis_bbox {
            None if n_vis == 0 => 1.0,
            None => 0.0,
            Some(prev_bbox) => {
                let h_inter = h.compose(&self.prev_pose_inv)?;
                let warped_prev = self.warp_local(&h_inter, self.prev_vis, prev_bbox)?;
                // Intersection of (seg AND warped template) with warped_prev
                // over the overlap of the two blocks.
                let ox0 = warped.x0.max(warped_prev.x0);
                let oy0 = warped.y0.max(warped_prev.y0);
                let ox1 = (warped.x0 + warped.w).min(warped_prev.x0 + warped_prev.w);
                let oy1 = (warped.y0 + warped.h).min(warped_prev.y0 + warped_prev.h);
                let mut both = 0usize;
                for y in oy0..oy1 {
                    for x in ox0..ox1 {
                        if warped.get(x, y) && warped_prev.get(x, y) && self.seg.get(x, y) {
                            both += 1;
                        }
                    }
                }
                let union = n_vis + warped_prev.count - both;
                if union == 0 {
                    1.0
                } else {
                    both as f64 / union as f64
                }
            }
        };

        // Appearance over the canonical-frame overlap set.
        let (tx0, ty0, tx1, ty1) = self.template_bbox;
        let mut acc = ZnccAccumulator::default();
        for y in ty0..=ty1 {
            for x in tx0..=tx1 {
                if !self.template_mask.get(x, y) {
                    continue;
                }
                let Ok(p) = h.warp_point(Point2::new(x as f64, y as f64)) else {
                    continue;
                };
                if !self.seg.contains(p.x.round() as i64, p.y.round() as i64) {
                    continue;
                }
                acc.push(
                    self.frame.sample_bilinear(p.x, p.y) as f64,
                    self.template_gray.get(x, y) as f64,
                );
            }
        }
        let appearance = acc.score(self.min_appearance_px);

        Ok(ScoreBreakdown::new(obj, cover, occl, appearance))
    }
}
