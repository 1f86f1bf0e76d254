//! Simulated-annealing search for the object pose homography: hypothesis
//! initialization from the previous pose and/or optical flow, the annealing
//! loop with probabilistic acceptance, and the global re-detection variant
//! used in the lost state.

use std::io::Read;
use std::path::{Path, PathBuf};

use rand::{Rng, RngExt};

use crate::error::{Error, Result};
use crate::geometry::{
    homography_from_correspondences, perturb_control_points, CorrespondenceSet, Homography,
    Point2, Rect,
};
use crate::imgproc::GrayF;
use crate::mask::{connected_components, BinaryMask};
use crate::scoring::{PoseScore, ScoreBreakdown};

/// Annealing schedule: temperature and control-point sigma both decay
/// multiplicatively every iteration.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AnnealSchedule {
    pub iterations: usize,
    pub t0: f64,
    pub t_decay: f64,
    pub sigma0: f64,
    pub sigma_decay: f64,
}

impl AnnealSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = self.iterations >= 1
            && self.t0 > 0.0
            && self.sigma0 > 0.0
            && self.t_decay > 0.0
            && self.t_decay <= 1.0
            && self.sigma_decay > 0.0
            && self.sigma_decay <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig("invalid annealing schedule".into()))
        }
    }
}

/// Outcome of one optimization run.
#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub h: Homography,
    pub breakdown: ScoreBreakdown,
    pub accepted_count: usize,
    pub evaluation_count: usize,
    pub seed: u64,
}

/// Acceptance probability: 1 when the candidate improves on the current
/// estimate, otherwise `exp(-(s_star - s) / t)`.
pub fn accept_probability(s: f64, s_star: f64, t: f64) -> f64 {
    if s > s_star {
        1.0
    } else {
        (-(s_star - s) / t).exp()
    }
}

/// A candidate is usable if it is invertible and maps the canonical bounding
/// box to a convex, non-folded quad with the original winding. A mirrored
/// pose would render the hidden face and is never valid for the visible
/// side.
fn plausible_pose(h: &Homography, bbox: &Rect) -> bool {
    let m = h.matrix();
    let mut pts = [Point2::new(0.0, 0.0); 4];
    let mut w_sign = 0.0f64;
    for (i, c) in bbox.corners().iter().enumerate() {
        let w = m[6] * c.x + m[7] * c.y + m[8];
        if w.abs() <= 1e-9 * (1.0 + c.x.abs() + c.y.abs()) {
            return false;
        }
        if w_sign == 0.0 {
            w_sign = w.signum();
        } else if w.signum() != w_sign {
            return false;
        }
        pts[i] = Point2::new(
            (m[0] * c.x + m[1] * c.y + m[2]) / w,
            (m[3] * c.x + m[4] * c.y + m[5]) / w,
        );
    }
    // Convexity with preserved winding: the source corners (tl, tr, br, bl)
    // have positive consecutive-edge cross products; the warped quad must
    // keep all of them positive.
    for i in 0..4 {
        let a = pts[i];
        let b = pts[(i + 1) % 4];
        let c = pts[(i + 2) % 4];
        let cr = (b.x - a.x) * (c.y - b.y) - (b.y - a.y) * (c.x - b.x);
        if cr <= 0.0 {
            return false;
        }
    }
    true
}

const CANDIDATE_RETRIES: usize = 16;

/// Simulated annealing from `h0`. Each iteration perturbs the four corners
/// of `bbox` (canonical frame) around the current estimate and accepts the
/// candidate with [`accept_probability`]; temperature and sigma decay each
/// iteration. Returns the best accepted estimate.
pub fn anneal<R: Rng + ?Sized>(
    h0: &Homography,
    bbox: &Rect,
    schedule: &AnnealSchedule,
    scorer: &dyn PoseScore,
    seed: u64,
    rng: &mut R,
) -> OptimizationResult {
    let mut evaluation_count = 1usize;
    let s0 = scorer.score_pose(h0).unwrap_or_else(|_| ScoreBreakdown::zero());
    let mut current = *h0;
    let mut current_score = s0;
    let mut best = *h0;
    let mut best_score = s0;
    let mut accepted_count = 0usize;

    let mut t = schedule.t0;
    let mut sigma = schedule.sigma0;
    for _ in 0..schedule.iterations {
        // Draw a usable candidate, counting rejected degenerate draws.
        let mut candidate = None;
        for _ in 0..CANDIDATE_RETRIES {
            let Ok(p) = perturb_control_points(bbox, sigma, rng) else {
                evaluation_count += 1;
                continue;
            };
            let Ok(c) = current.compose(&p) else {
                evaluation_count += 1;
                continue;
            };
            if plausible_pose(&c, bbox) {
                candidate = Some(c);
                break;
            }
            evaluation_count += 1;
        }
        if let Some(candidate) = candidate {
            evaluation_count += 1;
            if let Ok(score) = scorer.score_pose(&candidate) {
                let p = accept_probability(score.total, current_score.total, t);
                if rng.random::<f64>() < p {
                    current = candidate;
                    current_score = score;
                    accepted_count += 1;
                    if current_score.total > best_score.total {
                        best = current;
                        best_score = current_score;
                    }
                }
            }
        }
        t *= schedule.t_decay;
        sigma *= schedule.sigma_decay;
    }

    OptimizationResult { h: best, breakdown: best_score, accepted_count, evaluation_count, seed }
}

/// Picks the best-scoring starting pose out of up to `n` candidates: the
/// previous pose itself plus flow-based resamplings (four points drawn from
/// inside the previous segmentation, moved by the flow field, fitted to an
/// inter-frame homography and composed onto the previous pose).
pub fn init_hypotheses<R: Rng + ?Sized>(
    prev_h: Option<&Homography>,
    flow: Option<&FlowField>,
    prev_seg: &BinaryMask,
    n: usize,
    scorer: &dyn PoseScore,
    rng: &mut R,
) -> Result<(Homography, ScoreBreakdown, usize)> {
    if prev_h.is_none() && flow.is_none() {
        return Err(Error::NoInitializationSource);
    }
    let mut candidates: Vec<Homography> = Vec::with_capacity(n);
    if let Some(h) = prev_h {
        candidates.push(*h);
    }
    if let Some(flow) = flow {
        let set_pixels: Vec<(usize, usize)> = prev_seg.iter_set().collect();
        if set_pixels.len() >= 4 {
            while candidates.len() < n {
                let Some(h_inter) = sample_flow_homography(flow, &set_pixels, rng) else {
                    break;
                };
                let base = prev_h.copied().unwrap_or_else(Homography::identity);
                match h_inter.compose(&base) {
                    Ok(c) => candidates.push(c),
                    Err(_) => continue,
                }
            }
        }
    }
    if candidates.is_empty() {
        return Err(Error::NoInitializationSource);
    }
    let mut best = 0usize;
    let mut best_score = ScoreBreakdown::zero();
    let mut scored_any = false;
    let mut evaluations = 0usize;
    for (i, c) in candidates.iter().enumerate() {
        evaluations += 1;
        let Ok(s) = scorer.score_pose(c) else { continue };
        if !scored_any || s.total > best_score.total {
            best = i;
            best_score = s;
            scored_any = true;
        }
    }
    if !scored_any {
        return Err(Error::NoInitializationSource);
    }
    Ok((candidates[best], best_score, evaluations))
}

/// Fits the inter-frame homography from four flow-displaced points. `None`
/// when the draw keeps degenerating.
fn sample_flow_homography<R: Rng + ?Sized>(
    flow: &FlowField,
    set_pixels: &[(usize, usize)],
    rng: &mut R,
) -> Option<Homography> {
    for _ in 0..CANDIDATE_RETRIES {
        let mut pairs = [(Point2::new(0.0, 0.0), Point2::new(0.0, 0.0)); 4];
        for pair in &mut pairs {
            let (x, y) = set_pixels[rng.random_range(0..set_pixels.len())];
            let (dx, dy) = flow.at(x, y);
            let src = Point2::new(x as f64, y as f64);
            *pair = (src, Point2::new(src.x + dx as f64, src.y + dy as f64));
        }
        let Ok(set) = CorrespondenceSet::new(pairs) else { continue };
        if let Ok(h) = homography_from_correspondences(&set) {
            return Some(h);
        }
    }
    None
}

/// Re-detection initialization parameters. Placement scales are sampled per
/// axis so a foreshortened (out-of-plane tilted) reappearance is reachable.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RedetectParams {
    pub init_samples: usize,
    pub scale_min: f64,
    pub scale_max: f64,
    pub jitter_frac: f64,
    /// Widens the annealing sigma during re-detection relative to tracking.
    pub anneal_sigma_scale: f64,
    /// The annealer restarts from this many top-scoring placements; the
    /// pose-mask terms alone often rank a wrong rotation first, and
    /// annealing cannot cross a rotation barrier.
    pub anneal_starts: usize,
}

impl Default for RedetectParams {
    fn default() -> Self {
        RedetectParams {
            init_samples: 400,
            scale_min: 0.5,
            scale_max: 2.0,
            jitter_frac: 0.25,
            anneal_sigma_scale: 2.0,
            anneal_starts: 4,
        }
    }
}

/// Centroid and principal axes of a pixel set from its second central
/// moments.
#[derive(Debug, Clone, Copy)]
struct MaskMoments {
    centroid: Point2,
    angle: f64,
    sigma_major: f64,
    sigma_minor: f64,
}

fn mask_moments(m: &BinaryMask) -> Option<MaskMoments> {
    let n = m.count();
    if n == 0 {
        return None;
    }
    let nf = n as f64;
    let (mut sx, mut sy) = (0.0f64, 0.0f64);
    for (x, y) in m.iter_set() {
        sx += x as f64;
        sy += y as f64;
    }
    let cx = sx / nf;
    let cy = sy / nf;
    let (mut mu20, mut mu02, mut mu11) = (0.0f64, 0.0f64, 0.0f64);
    for (x, y) in m.iter_set() {
        let dx = x as f64 - cx;
        let dy = y as f64 - cy;
        mu20 += dx * dx;
        mu02 += dy * dy;
        mu11 += dx * dy;
    }
    mu20 /= nf;
    mu02 /= nf;
    mu11 /= nf;
    let angle = 0.5 * (2.0 * mu11).atan2(mu20 - mu02);
    let common = (0.25 * (mu20 - mu02) * (mu20 - mu02) + mu11 * mu11).sqrt();
    let lam1 = (0.5 * (mu20 + mu02) + common).max(0.0);
    let lam2 = (0.5 * (mu20 + mu02) - common).max(0.0);
    Some(MaskMoments {
        centroid: Point2::new(cx, cy),
        angle,
        sigma_major: lam1.sqrt(),
        sigma_minor: lam2.sqrt(),
    })
}

/// Global pose search used in the lost state. Placement poses map the
/// template's principal axes onto a randomly chosen segmentation component's
/// principal axes (both 180-degree variants, with scale and position
/// jitter); a fraction of uniform similarity placements remains as a
/// fallback for degenerate moments. The best placements each seed an
/// annealing run. The caller binds the scorer with the full template mask
/// as the previous visibility.
pub fn redetect<R: Rng + ?Sized>(
    template_mask: &BinaryMask,
    template_bbox: &Rect,
    seg: &BinaryMask,
    schedule: &AnnealSchedule,
    params: &RedetectParams,
    scorer: &dyn PoseScore,
    seed: u64,
    rng: &mut R,
) -> OptimizationResult {
    let components = connected_components(seg);
    if components.is_empty() {
        let id = Homography::identity();
        let breakdown = scorer.score_pose(&id).unwrap_or_else(|_| ScoreBreakdown::zero());
        return OptimizationResult { h: id, breakdown, accepted_count: 0, evaluation_count: 1, seed };
    }
    let tpl = mask_moments(template_mask);
    let comp_moments: Vec<Option<MaskMoments>> = components
        .iter()
        .map(|c| if c.count() >= 16 { mask_moments(c) } else { None })
        .collect();
    let centroids: Vec<Point2> = components
        .iter()
        .enumerate()
        .map(|(i, c)| match &comp_moments[i] {
            Some(m) => m.centroid,
            None => {
                let n = c.count() as f64;
                let (mut sx, mut sy) = (0.0, 0.0);
                for (x, y) in c.iter_set() {
                    sx += x as f64;
                    sy += y as f64;
                }
                Point2::new(sx / n, sy / n)
            }
        })
        .collect();

    let center = template_bbox.center();
    let mut placements: Vec<(Homography, f64)> = Vec::with_capacity(params.init_samples);
    let mut evaluations = 0usize;
    for i in 0..params.init_samples {
        let ci = rng.random_range(0..components.len());
        // Three of four samples are moment-guided when moments exist.
        let guided = i % 4 != 0;
        let pose = match (&comp_moments[ci], &tpl, guided) {
            (Some(seg_m), Some(tpl_m), true) => {
                // Four discrete variants: 180-degree flip, and which of the
                // segment's axes the template's major axis lands on
                // (foreshortening can swap the axis order).
                let flip = if rng.random::<bool>() { std::f64::consts::PI } else { 0.0 };
                let (rat_a, rat_b, base_angle) = if rng.random::<bool>() {
                    (
                        seg_m.sigma_major / tpl_m.sigma_major.max(1e-3),
                        seg_m.sigma_minor / tpl_m.sigma_minor.max(1e-3),
                        seg_m.angle,
                    )
                } else {
                    (
                        seg_m.sigma_minor / tpl_m.sigma_major.max(1e-3),
                        seg_m.sigma_major / tpl_m.sigma_minor.max(1e-3),
                        seg_m.angle + std::f64::consts::FRAC_PI_2,
                    )
                };
                let theta_s = base_angle + flip + rng.random_range(-0.2..0.2);
                let s1 = rat_a * rng.random_range(0.85..1.18);
                let s2 = rat_b * rng.random_range(0.85..1.18);
                let (s1, s2) = (s1.clamp(0.05, 20.0), s2.clamp(0.05, 20.0));
                let jitter = params.jitter_frac * seg_m.sigma_major;
                let tx = seg_m.centroid.x + rng.random_range(-jitter..jitter);
                let ty = seg_m.centroid.y + rng.random_range(-jitter..jitter);
                // A = R(theta_s) S(s1, s2) R(-tpl angle), anchored at the
                // template centroid.
                let (ss, cs) = theta_s.sin_cos();
                let (st, ct) = (-tpl_m.angle).sin_cos();
                let a00 = cs * s1 * ct - ss * s2 * st;
                let a01 = -(cs * s1 * st + ss * s2 * ct);
                let a10 = ss * s1 * ct + cs * s2 * st;
                let a11 = -ss * s1 * st + cs * s2 * ct;
                Homography::from_matrix([a00, a01, tx, a10, a11, ty, 0.0, 0.0, 1.0])
                    .and_then(|placed| {
                        placed.compose(&Homography::translation(
                            -tpl_m.centroid.x,
                            -tpl_m.centroid.y,
                        ))
                    })
            }
            _ => {
                let c = centroids[ci];
                let scale_x = rng.random_range(params.scale_min..params.scale_max);
                let scale_y = rng.random_range(params.scale_min..params.scale_max);
                let angle = rng.random_range(0.0..std::f64::consts::TAU);
                let jitter =
                    params.jitter_frac * scale_x.max(scale_y) * template_bbox.max_side();
                let tx = c.x + rng.random_range(-jitter..jitter);
                let ty = c.y + rng.random_range(-jitter..jitter);
                let (sin, cos) = angle.sin_cos();
                Homography::from_matrix([
                    cos * scale_x,
                    -sin * scale_y,
                    tx,
                    sin * scale_x,
                    cos * scale_y,
                    ty,
                    0.0,
                    0.0,
                    1.0,
                ])
                .and_then(|placed| {
                    placed.compose(&Homography::translation(-center.x, -center.y))
                })
            }
        };
        evaluations += 1;
        let Ok(pose) = pose else { continue };
        let Ok(s) = scorer.score_pose(&pose) else { continue };
        placements.push((pose, s.total));
    }
    if placements.is_empty() {
        let id = Homography::identity();
        let breakdown = scorer.score_pose(&id).unwrap_or_else(|_| ScoreBreakdown::zero());
        return OptimizationResult {
            h: id,
            breakdown,
            accepted_count: 0,
            evaluation_count: evaluations + 1,
            seed,
        };
    }
    placements.sort_by(|a, b| b.1.total_cmp(&a.1));
    let wide = AnnealSchedule {
        sigma0: schedule.sigma0 * params.anneal_sigma_scale.max(1.0),
        ..*schedule
    };
    let mut result: Option<OptimizationResult> = None;
    for (h0, _) in placements.iter().take(params.anneal_starts.max(1)) {
        let mut r = anneal(h0, template_bbox, &wide, scorer, seed, rng);
        r.evaluation_count += evaluations;
        evaluations = 0;
        match &mut result {
            None => result = Some(r),
            Some(best) => {
                best.evaluation_count += r.evaluation_count;
                best.accepted_count += r.accepted_count;
                if r.breakdown.total > best.breakdown.total {
                    best.h = r.h;
                    best.breakdown = r.breakdown;
                }
            }
        }
    }
    result.expect("at least one annealing start")
}

// ---------------------------------------------------------------------------
// Optical flow
// ---------------------------------------------------------------------------

const MAX_FLOW_SIDE: usize = 1 << 15;
const MAX_FLOW_PIXELS: usize = 1 << 26;

/// Dense per-pixel displacement from the previous frame to the current one.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    dx: Vec<f32>,
    dy: Vec<f32>,
}

impl FlowField {
    pub fn constant(width: usize, height: usize, dx: f32, dy: f32) -> Self {
        FlowField { width, height, dx: vec![dx; width * height], dy: vec![dy; width * height] }
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> (f32, f32),
    ) -> Self {
        let mut dx = Vec::with_capacity(width * height);
        let mut dy = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let (a, b) = f(x, y);
                dx.push(a);
                dy.push(b);
            }
        }
        FlowField { width, height, dx, dy }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> (f32, f32) {
        let i = y * self.width + x;
        (self.dx[i], self.dy[i])
    }

    /// Binary layout: u32 LE width, u32 LE height, then the dx plane and the
    /// dy plane as row-major little-endian f32.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(8 + 8 * self.dx.len());
        buf.extend_from_slice(&(self.width as u32).to_le_bytes());
        buf.extend_from_slice(&(self.height as u32).to_le_bytes());
        for v in self.dx.iter().chain(self.dy.iter()) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<FlowField> {
        let mut buf = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&buf).map_err(|e| Error::malformed(path, e.to_string()))
    }

    /// Decodes the binary flow layout; the entry point fuzzing exercises.
    pub fn from_bytes(buf: &[u8]) -> Result<FlowField> {
        if buf.len() < 8 {
            return Err(Error::InsufficientData("flow file shorter than its header"));
        }
        let width = u32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]) as usize;
        let height = u32::from_le_bytes([buf[4], buf[5], buf[6], buf[7]]) as usize;
        if width == 0 || height == 0 || width > MAX_FLOW_SIDE || height > MAX_FLOW_SIDE {
            return Err(Error::InsufficientData("flow dimensions out of range"));
        }
        let n = width
            .checked_mul(height)
            .filter(|n| *n <= MAX_FLOW_PIXELS)
            .ok_or(Error::InsufficientData("flow dimensions out of range"))?;
        if buf.len() != 8 + 8 * n {
            return Err(Error::InsufficientData("flow body size mismatch"));
        }
        let mut planes = buf[8..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
        let dx: Vec<f32> = planes.by_ref().take(n).collect();
        let dy: Vec<f32> = planes.collect();
        if dx.iter().chain(dy.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InsufficientData("non-finite flow values"));
        }
        Ok(FlowField { width, height, dx, dy })
    }
}

/// Where inter-frame flow comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum FlowSource {
    /// No flow; initialization uses the previous pose only.
    None,
    /// Built-in coarse translational estimator over the masked region.
    Translational { window: i32 },
    /// Per-frame flow files `<dir>/%06d.flow`, named by the target frame.
    Files { dir: PathBuf },
}

impl FlowSource {
    /// Flow from frame `frame_index - 1` to `frame_index`.
    pub fn compute(
        &self,
        prev_gray: &GrayF,
        cur_gray: &GrayF,
        prev_seg: &BinaryMask,
        frame_index: usize,
    ) -> Result<Option<FlowField>> {
        match self {
            FlowSource::None => Ok(None),
            FlowSource::Translational { window } => {
                if prev_seg.is_empty() {
                    return Ok(None);
                }
                let (dx, dy) = estimate_translation(prev_gray, cur_gray, prev_seg, *window);
                Ok(Some(FlowField::constant(
                    cur_gray.width(),
                    cur_gray.height(),
                    dx as f32,
                    dy as f32,
                )))
            }
            FlowSource::Files { dir } => {
                let path = dir.join(format!("{frame_index:06}.flow"));
                if path.exists() {
                    Ok(Some(FlowField::read(&path)?))
                } else {
                    Ok(None)
                }
            }
        }
    }
}

/// Integer translation maximizing masked ZNCC, coarse-to-fine: a step-4 scan
/// over the +-window square refined by a step-1 scan in a +-3 neighborhood.
pub fn estimate_translation(
    prev: &GrayF,
    cur: &GrayF,
    prev_seg: &BinaryMask,
    window: i32,
) -> (i32, i32) {
    // Subsample mask pixels for speed.
    let samples: Vec<(usize, usize)> = prev_seg
        .iter_set()
        .filter(|(x, y)| x % 2 == 0 && y % 2 == 0)
        .collect();
    if samples.len() < 16 {
        return (0, 0);
    }
    let score = |dx: i32, dy: i32| -> f64 {
        let mut n = 0usize;
        let mut sp = 0.0f64;
        let mut sc = 0.0f64;
        let mut spp = 0.0f64;
        let mut scc = 0.0f64;
        let mut spc = 0.0f64;
        for &(x, y) in &samples {
            let cx = x as i64 + dx as i64;
            let cy = y as i64 + dy as i64;
            if cx < 0 || cy < 0 || cx >= cur.width() as i64 || cy >= cur.height() as i64 {
                continue;
            }
            let p = prev.get(x, y) as f64;
            let c = cur.get(cx as usize, cy as usize) as f64;
            n += 1;
            sp += p;
            sc += c;
            spp += p * p;
            scc += c * c;
            spc += p * c;
        }
        if n < 16 {
            return f64::NEG_INFINITY;
        }
        let nf = n as f64;
        let var_p = (spp - sp * sp / nf).max(0.0);
        let var_c = (scc - sc * sc / nf).max(0.0);
        if var_p <= 1e-12 || var_c <= 1e-12 {
            return f64::NEG_INFINITY;
        }
        (spc - sp * sc / nf) / (var_p * var_c).sqrt()
    };

    let mut best = (0i32, 0i32);
    let mut best_score = f64::NEG_INFINITY;
    let mut dy = -window;
    while dy <= window {
        let mut dx = -window;
        while dx <= window {
            let s = score(dx, dy);
            if s > best_score {
                best_score = s;
                best = (dx, dy);
            }
            dx += 4;
        }
        dy += 4;
    }
    let coarse = best;
    for dy in (coarse.1 - 3)..=(coarse.1 + 3) {
        for dx in (coarse.0 - 3)..=(coarse.0 + 3) {
            let s = score(dx, dy);
            if s > best_score {
                best_score = s;
                best = (dx, dy);
            }
        }
    }
    best
}
