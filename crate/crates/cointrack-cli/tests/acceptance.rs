//! Acceptance suite: every shipping criterion as one sequentially executed
//! check with a PASS/FAIL line, so a single run prints the whole scorecard
//! (`cargo test --test acceptance -- --nocapture`). The suite fails if any
//! criterion fails.
//!
//! Independent oracles (brute-force scans, flood fill, rotation sweeps,
//! closed-form statistics) are re-implemented here rather than imported from
//! the library internals.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use cointrack::config::Config;
use cointrack::evalkit::{self, SequenceRecord};
use cointrack::geometry::{
    homography_from_correspondences, CorrespondenceSet, Homography, Point2,
};
use cointrack::imgproc::GrayF;
use cointrack::mask::{
    aspect_ratio, boundary_distance, connected_components, holes, iou, min_rotated_rect,
    BinaryMask, Label,
};
use cointrack::optimizer::accept_probability;
use cointrack::scoring::{self, PoseScore, PoseScorer, DEFAULT_MIN_APPEARANCE_PX};
use cointrack::segmenter::{ExampleIndex, Frame};
use cointrack::synth::{
    self, generate, write_dataset, CameraSpec, DistractorSpec, OccluderSpec, Outline, SceneSpec,
    TextureSpec,
};
use cointrack::tracker::{self, Tracker, TrackerMode, Templates};
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn acceptance() {
    let criteria: Vec<(&str, fn())> = vec![
        ("geometry-round-trip", criterion_geometry_round_trip),
        ("acceptance-rule-statistics", criterion_acceptance_statistics),
        ("score-sanity", criterion_score_sanity),
        ("appearance-affine-invariance", criterion_appearance_affine),
        ("knn-exactness", criterion_knn_exactness),
        ("mask-oracles", criterion_mask_oracles),
        ("end-to-end-oracle-tracking", criterion_end_to_end),
        ("end-to-end-reference-backend", criterion_reference_backend),
        ("adaptation-conservativeness", criterion_adaptation),
        ("evaluation-protocol", criterion_evaluation_protocol),
        ("track-determinism", criterion_track_determinism),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        match catch_unwind(AssertUnwindSafe(f)) {
            Ok(()) => println!("PASS {name}"),
            Err(e) => {
                failed += 1;
                let msg = e
                    .downcast_ref::<String>()
                    .map(|s| s.as_str())
                    .or_else(|| e.downcast_ref::<&str>().copied())
                    .unwrap_or("panic");
                println!("FAIL {name}: {msg}");
            }
        }
    }
    assert_eq!(failed, 0, "{failed} acceptance criteria failed");
}

// ---------------------------------------------------------------------------
// Criterion: DLT recovers 1000 random homographies, < 1e-6 px, < 5 s.
// ---------------------------------------------------------------------------

fn random_homography<R: Rng>(rng: &mut R) -> Homography {
    loop {
        let base = [
            Point2::new(50.0, 40.0),
            Point2::new(250.0, 40.0),
            Point2::new(250.0, 200.0),
            Point2::new(50.0, 200.0),
        ];
        let mut pairs = [(Point2::new(0.0, 0.0), Point2::new(0.0, 0.0)); 4];
        for (i, b) in base.iter().enumerate() {
            pairs[i] = (
                *b,
                Point2::new(
                    b.x + rng.random_range(-60.0..60.0),
                    b.y + rng.random_range(-60.0..60.0),
                ),
            );
        }
        let Ok(set) = CorrespondenceSet::new(pairs) else { continue };
        let Ok(h) = homography_from_correspondences(&set) else { continue };
        return h;
    }
}

fn criterion_geometry_round_trip() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let probes = [
        Point2::new(60.0, 55.0),
        Point2::new(240.0, 50.0),
        Point2::new(235.0, 190.0),
        Point2::new(55.0, 185.0),
    ];
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let h = random_homography(&mut rng);
        let warped = probes.map(|p| h.warp_point(p).unwrap());
        let pairs = [
            (probes[0], warped[0]),
            (probes[1], warped[1]),
            (probes[2], warped[2]),
            (probes[3], warped[3]),
        ];
        let set = CorrespondenceSet::new(pairs).unwrap();
        let estimated = homography_from_correspondences(&set).unwrap();
        for (p, q) in probes.iter().zip(warped.iter()) {
            let err = estimated.warp_point(*p).unwrap().dist(q);
            worst = worst.max(err);
        }
    }
    assert!(worst < 1e-6, "max corner reprojection {worst}");
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 5.0, "round trip took {elapsed} s");
}

// ---------------------------------------------------------------------------
// Criterion: empirical acceptance frequency matches exp(-delta/T) within
// 3-sigma binomial bounds for delta/T in {0.25, 1, 4} over 1e5 draws.
// ---------------------------------------------------------------------------

fn criterion_acceptance_statistics() {
    let mut rng = ChaCha8Rng::seed_from_u64(1002);
    for delta_over_t in [0.25f64, 1.0, 4.0] {
        // Fix T = 0.05 and set the score gap to delta_over_t * T.
        let t = 0.05;
        let s_star = 0.8;
        let s = s_star - delta_over_t * t;
        let p_expect = (-delta_over_t).exp();
        let n = 100_000usize;
        let mut hits = 0usize;
        for _ in 0..n {
            let p = accept_probability(s, s_star, t);
            if rng.random::<f64>() < p {
                hits += 1;
            }
        }
        let freq = hits as f64 / n as f64;
        let sigma = (p_expect * (1.0 - p_expect) / n as f64).sqrt();
        assert!(
            (freq - p_expect).abs() <= 3.0 * sigma,
            "delta/T {delta_over_t}: freq {freq} vs {p_expect} (3 sigma {})",
            3.0 * sigma
        );
    }
}

// ---------------------------------------------------------------------------
// Criterion: ground-truth pose and segmentation on noiseless synthetic
// frames score >= 0.98; 10 px corner perturbations strictly decrease the
// total in >= 95/100 draws.
// ---------------------------------------------------------------------------

fn score_sanity_scene() -> SceneSpec {
    SceneSpec {
        width: 640,
        height: 480,
        frames: 16,
        seed: 21,
        camera: CameraSpec { focal: 960.0, distance: 960.0 },
        outline: Outline::Ellipse { rx: 115.0, ry: 95.0 },
        trajectory: synth::TrajectorySpec {
            omega_deg: 1.0,
            velocity: [0.4, 0.2],
            ..Default::default()
        },
        gt_stride: 5,
        reverse_init_frame: Some(0),
        ..Default::default()
    }
}

fn criterion_score_sanity() {
    let spec = score_sanity_scene();
    let frames = generate(&spec).unwrap();
    let template_frame = &frames[0];
    let template_gray = GrayF::from_rgb(&template_frame.image);
    let template_mask = template_frame.labels.label_mask(Label::Obverse);
    let h0 = template_frame.h_plane.unwrap();

    let mut totals = Vec::new();
    let mut pose_mid = None;
    for t in [0usize, 5, 10, 15] {
        let gt = &frames[t];
        let gray = GrayF::from_rgb(&gt.image);
        let seg = gt.labels.label_mask(Label::Obverse);
        let h_star = gt.h_plane.unwrap().compose(&h0.invert().unwrap()).unwrap();
        let scorer = PoseScorer::new(
            &gray,
            &seg,
            &template_gray,
            &template_mask,
            &template_mask,
            Homography::identity(),
            DEFAULT_MIN_APPEARANCE_PX,
        )
        .unwrap();
        let s = scorer.score_pose(&h_star).unwrap();
        assert!(s.total >= 0.98, "frame {t}: total {} ({s:?})", s.total);
        totals.push(s.total);
        if t == 10 {
            pose_mid = Some((gray, seg, h_star));
        }
    }

    // Perturbation strictly decreases the total.
    let (gray, seg, h_star) = pose_mid.unwrap();
    let scorer = PoseScorer::new(
        &gray,
        &seg,
        &template_gray,
        &template_mask,
        &template_mask,
        Homography::identity(),
        DEFAULT_MIN_APPEARANCE_PX,
    )
    .unwrap();
    let base = scorer.score_pose(&h_star).unwrap().total;
    let (bx0, by0, bx1, by1) = template_mask.bounding_box().unwrap();
    let corners = [
        Point2::new(bx0 as f64, by0 as f64),
        Point2::new(bx1 as f64, by0 as f64),
        Point2::new(bx1 as f64, by1 as f64),
        Point2::new(bx0 as f64, by1 as f64),
    ];
    let projected = corners.map(|c| h_star.warp_point(c).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(1003);
    let mut decreased = 0usize;
    let mut n = 0usize;
    while n < 100 {
        let displaced = projected.map(|p| {
            let phi = rng.random_range(0.0..std::f64::consts::TAU);
            Point2::new(p.x + 10.0 * phi.cos(), p.y + 10.0 * phi.sin())
        });
        let pairs = [
            (corners[0], displaced[0]),
            (corners[1], displaced[1]),
            (corners[2], displaced[2]),
            (corners[3], displaced[3]),
        ];
        let Ok(set) = CorrespondenceSet::new(pairs) else { continue };
        let Ok(h) = homography_from_correspondences(&set) else { continue };
        n += 1;
        let s = scorer.score_pose(&h).unwrap();
        if s.total < base {
            decreased += 1;
        }
    }
    assert!(decreased >= 95, "only {decreased}/100 perturbations decreased the score");
}

// ---------------------------------------------------------------------------
// Criterion: appearance affine invariance.
// ---------------------------------------------------------------------------

fn criterion_appearance_affine() {
    let mut rng = ChaCha8Rng::seed_from_u64(1004);
    let tpl = GrayF::from_fn(64, 64, |_, _| rng.random_range(0.1f32..0.9));
    let mask = BinaryMask::from_fn(64, 64, |x, y| {
        let dx = x as f64 - 32.0;
        let dy = y as f64 - 32.0;
        dx * dx + dy * dy <= 22.0 * 22.0
    });
    let id = Homography::identity();
    let o = scoring::appearance_overlap(&mask, &mask, &id).unwrap();
    // a I + b with the 8-bit offsets scaled into the unit intensity range.
    for a in [0.5f32, 2.0] {
        for b in [-20.0f32 / 255.0, 30.0 / 255.0] {
            let frame = GrayF::from_fn(64, 64, |x, y| a * tpl.get(x, y) + b);
            let s = scoring::s_appearance(&frame, &tpl, &id, &o, DEFAULT_MIN_APPEARANCE_PX);
            assert!((s - 1.0).abs() < 1e-6, "a={a} b={b}: {s}");
        }
    }
    let inverted = GrayF::from_fn(64, 64, |x, y| 1.0 - tpl.get(x, y));
    let s = scoring::s_appearance(&inverted, &tpl, &id, &o, DEFAULT_MIN_APPEARANCE_PX);
    assert!(s < 1e-6, "inverted image appearance {s}");
}

// ---------------------------------------------------------------------------
// Criterion: classify equals a brute-force linear scan on 1e4 queries.
// ---------------------------------------------------------------------------

fn criterion_knn_exactness() {
    let mut rng = ChaCha8Rng::seed_from_u64(1005);
    let labels = [Label::Background, Label::Obverse, Label::Reverse];
    let entries: Vec<(Vec<f32>, Label)> = (0..200)
        .map(|_| {
            let v: Vec<f32> = (0..8).map(|_| rng.random_range(-1.0f32..1.0)).collect();
            (v, labels[rng.random_range(0..3)])
        })
        .collect();
    let mut index = ExampleIndex::new(8);
    for (v, l) in &entries {
        index.add(v, *l).unwrap();
    }
    let k = 5;
    let mut agree = 0usize;
    for _ in 0..10_000 {
        let q: Vec<f32> = (0..8).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        let got = index.classify_vector(&q, k).unwrap();

        // Brute force with the same contract.
        let mut d: Vec<(f32, usize, Label)> = entries
            .iter()
            .enumerate()
            .map(|(i, (v, l))| {
                let mut acc = 0.0f32;
                for (a, b) in v.iter().zip(&q) {
                    let t = a - b;
                    acc += t * t;
                }
                (acc, i, *l)
            })
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        d.truncate(k);
        let mut count = [0usize; 3];
        let mut sum = [0.0f64; 3];
        for (dist, _, l) in &d {
            count[*l as usize] += 1;
            sum[*l as usize] += (*dist as f64).sqrt();
        }
        let mut w = 0;
        for c in 1..3 {
            if count[c] > count[w] || (count[c] == count[w] && count[c] > 0 && sum[c] < sum[w]) {
                w = c;
            }
        }
        let expect = (labels[w], count[w] as f32 / k as f32);
        if got == expect {
            agree += 1;
        }
    }
    assert_eq!(agree, 10_000, "classification disagreed with brute force");
}

// ---------------------------------------------------------------------------
// Criterion: mask operations match brute-force oracles on 100 random masks.
// ---------------------------------------------------------------------------

fn criterion_mask_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(1006);
    for trial in 0..100 {
        let fill = rng.random_range(0.2..0.7);
        let a = BinaryMask::from_fn(64, 64, |_, _| rng.random::<f64>() < fill);
        let b = BinaryMask::from_fn(64, 64, |_, _| rng.random::<f64>() < fill);

        // IoU against a direct pixel count.
        let mut inter = 0usize;
        let mut union = 0usize;
        for y in 0..64 {
            for x in 0..64 {
                let (pa, pb) = (a.get(x, y), b.get(x, y));
                inter += (pa && pb) as usize;
                union += (pa || pb) as usize;
            }
        }
        let expect = if union == 0 { 1.0 } else { inter as f64 / union as f64 };
        assert_eq!(iou(&a, &b).unwrap(), expect, "trial {trial}: iou");

        // Connected components against stack flood fill.
        let comps = connected_components(&a);
        let mut expect_comps = flood_fill_oracle(&a);
        expect_comps.sort_by(|x, y| {
            y.len().cmp(&x.len()).then_with(|| {
                let fx = x.iter().map(|&(px, py)| (py, px)).min().unwrap();
                let fy = y.iter().map(|&(px, py)| (py, px)).min().unwrap();
                fx.cmp(&fy)
            })
        });
        let got: Vec<Vec<(usize, usize)>> = comps
            .iter()
            .map(|c| {
                let mut v: Vec<(usize, usize)> = c.iter_set().collect();
                v.sort();
                v
            })
            .collect();
        let expect_sorted: Vec<Vec<(usize, usize)>> = expect_comps
            .into_iter()
            .map(|mut v| {
                v.sort();
                v
            })
            .collect();
        assert_eq!(got, expect_sorted, "trial {trial}: components");

        // Holes against a border flood over the complement.
        let hole_mask = holes(&a);
        let complement = BinaryMask::from_fn(64, 64, |x, y| !a.get(x, y));
        let mut expect_holes = BinaryMask::new(64, 64);
        for comp in flood_fill_oracle(&complement) {
            let touches_border = comp
                .iter()
                .any(|&(x, y)| x == 0 || y == 0 || x == 63 || y == 63);
            if !touches_border {
                for (x, y) in comp {
                    expect_holes.set(x, y, true);
                }
            }
        }
        assert_eq!(hole_mask, expect_holes, "trial {trial}: holes");

        // Distance map against an all-pairs scan, 5% tolerance allowed.
        let dist = boundary_distance(&a);
        let mut boundary = Vec::new();
        for y in 0..64usize {
            for x in 0..64usize {
                if !a.get(x, y) {
                    continue;
                }
                let edge = (x > 0 && !a.get(x - 1, y))
                    || (x < 63 && !a.get(x + 1, y))
                    || (y > 0 && !a.get(x, y - 1))
                    || (y < 63 && !a.get(x, y + 1));
                if edge {
                    boundary.push((x as f64, y as f64));
                }
            }
        }
        for y in 0..64usize {
            for x in 0..64usize {
                let expect = boundary
                    .iter()
                    .map(|(bx, by)| (x as f64 - bx).hypot(y as f64 - by))
                    .fold(f64::INFINITY, f64::min);
                let got = dist.get(x, y) as f64;
                if expect.is_infinite() {
                    assert!(got.is_infinite(), "trial {trial}: distance at ({x},{y})");
                } else {
                    assert!(
                        (got - expect).abs() <= 1e-3 + 0.05 * expect,
                        "trial {trial}: distance ({x},{y}) {got} vs {expect}"
                    );
                }
            }
        }

        // Minimum rotated rectangle area within 0.5% of a 0.25-degree sweep.
        if a.count() >= 3 {
            let rect = min_rotated_rect(&a).unwrap();
            let pts: Vec<(f64, f64)> = a.iter_set().map(|(x, y)| (x as f64, y as f64)).collect();
            let mut sweep = f64::INFINITY;
            let mut deg = 0.0;
            while deg < 90.0 {
                let (s, c) = (deg as f64).to_radians().sin_cos();
                let mut umin = f64::INFINITY;
                let mut umax = f64::NEG_INFINITY;
                let mut vmin = f64::INFINITY;
                let mut vmax = f64::NEG_INFINITY;
                for &(x, y) in &pts {
                    let u = x * c + y * s;
                    let v = -x * s + y * c;
                    umin = umin.min(u);
                    umax = umax.max(u);
                    vmin = vmin.min(v);
                    vmax = vmax.max(v);
                }
                sweep = sweep.min((umax - umin) * (vmax - vmin));
                deg += 0.25;
            }
            let got_area = rect.side_a * rect.side_b;
            assert!(
                (got_area - sweep).abs() <= 0.005 * sweep.max(1e-9),
                "trial {trial}: rect area {got_area} vs sweep {sweep}"
            );
            let _ = aspect_ratio(&rect);
        }
    }
}

fn flood_fill_oracle(m: &BinaryMask) -> Vec<Vec<(usize, usize)>> {
    let (w, h) = m.dims();
    let mut seen = vec![false; w * h];
    let mut comps = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !m.get(x, y) || seen[y * w + x] {
                continue;
            }
            let mut comp = Vec::new();
            let mut stack = vec![(x, y)];
            seen[y * w + x] = true;
            while let Some((cx, cy)) = stack.pop() {
                comp.push((cx, cy));
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let nx = cx as i64 + dx;
                        let ny = cy as i64 + dy;
                        if nx < 0 || ny < 0 || nx as usize >= w || ny as usize >= h {
                            continue;
                        }
                        let ni = ny as usize * w + nx as usize;
                        if m.get(nx as usize, ny as usize) && !seen[ni] {
                            seen[ni] = true;
                            stack.push((nx as usize, ny as usize));
                        }
                    }
                }
            }
            comps.push(comp);
        }
    }
    comps
}

// ---------------------------------------------------------------------------
// Criterion: 200-frame oracle-segmenter run at 640x480 with one side flip
// and a 20-frame full occlusion: mean IoU >= 0.90, correct side >= 95% of
// visible frames, loses during occlusion, re-detects within 10 frames in
// >= 8/10 seeds, runtime < 10 min.
// ---------------------------------------------------------------------------

fn e2e_scene() -> SceneSpec {
    SceneSpec {
        width: 640,
        height: 480,
        frames: 200,
        seed: 31,
        camera: CameraSpec { focal: 960.0, distance: 960.0 },
        outline: Outline::Ellipse { rx: 115.0, ry: 95.0 },
        trajectory: synth::TrajectorySpec { omega_deg: 1.25, ..Default::default() },
        occluders: vec![OccluderSpec {
            width: 620.0,
            height: 460.0,
            x0: 320.0,
            y0: 240.0,
            vx: 0.0,
            vy: 0.0,
            active_from: 19,
            active_until: Some(41),
            texture: TextureSpec { brightness: 0.42, contrast: 0.12, seed: 77, ..Default::default() },
        }],
        gt_stride: 5,
        ..Default::default()
    }
}

fn e2e_dataset() -> &'static (PathBuf, synth::DatasetSummary) {
    static DATASET: OnceLock<(PathBuf, synth::DatasetSummary)> = OnceLock::new();
    DATASET.get_or_init(|| {
        let dir = std::env::temp_dir().join("cointrack-acceptance").join("e2e");
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        let summary = write_dataset(&e2e_scene(), &dir).unwrap();
        (dir, summary)
    })
}

fn oracle_config(seed: u64) -> Config {
    let mut cfg = Config::default();
    cfg.seed = Some(seed);
    cfg.segmenter.backend = "oracle".into();
    cfg.segmenter.stride = 2;
    cfg.segmenter.init_cap_per_label = 50;
    cfg
}

fn criterion_end_to_end() {
    let (dir, summary) = e2e_dataset();
    let seq = SequenceRecord::load(dir).unwrap();
    let start = Instant::now();
    let results = tracker::run_sequence(&seq, &oracle_config(0)).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 600.0, "tracking took {elapsed} s");

    // Mean IoU over annotated frames (empty ground truth excluded).
    let mut sum = 0.0;
    let mut n = 0usize;
    for (&idx, _) in &seq.gt {
        let gt = seq.read_gt(idx).unwrap().object_mask();
        if gt.is_empty() {
            continue;
        }
        let pred = results[idx].object_mask.object_mask();
        sum += iou(&pred, &gt).unwrap();
        n += 1;
    }
    let mean = sum / n as f64;
    assert!(mean >= 0.90, "mean IoU {mean:.4} over {n} frames");

    // Side labels on visible (unoccluded) frames.
    let occluded = 19..41usize;
    let mut correct = 0usize;
    let mut visible = 0usize;
    for (t, r) in results.iter().enumerate() {
        if occluded.contains(&t) {
            continue;
        }
        visible += 1;
        if r.side == summary.poses[t].side {
            correct += 1;
        }
    }
    let frac = correct as f64 / visible as f64;
    assert!(frac >= 0.95, "correct side on {frac:.3} of visible frames");

    // Lost somewhere inside the full occlusion.
    assert!(
        results[21..40].iter().any(|r| r.mode == TrackerMode::Lost),
        "never entered the lost state during the occlusion"
    );
}

fn criterion_end_to_end_redetect_seeds() -> (usize, usize) {
    let (dir, _) = e2e_dataset();
    let seq = SequenceRecord::load(dir).unwrap();
    // Windowed runs over the occlusion: frames 0..60 cover pre-occlusion
    // tracking, the occlusion (19..41) and ten frames of reappearance.
    let mut ok = 0usize;
    for seed in 0..10u64 {
        let config = oracle_config(seed);
        let templates = Templates::from_sequence(&seq).unwrap();
        let backend = tracker::make_backend(&config, dir).unwrap();
        let flow = tracker::make_flow_source(&config, dir);
        let mut t = Tracker::initialize(templates, backend, flow, config, seed).unwrap();
        let mut lost_during = false;
        let mut redetected = false;
        for i in 0..60usize {
            let frame = Frame { index: i, image: seq.read_frame(i).unwrap() };
            let r = t.step(&frame).unwrap();
            if (19..41).contains(&i) && r.mode == TrackerMode::Lost {
                lost_during = true;
            }
            if (41..=51).contains(&i) && r.mode == TrackerMode::Tracking {
                redetected = true;
            }
        }
        if lost_during && redetected {
            ok += 1;
        }
    }
    (ok, 10)
}

// ---------------------------------------------------------------------------
// Criterion: reference feature backend suffices on an easy high-contrast
// sequence: mean IoU >= 0.75.
// ---------------------------------------------------------------------------

fn criterion_reference_backend() {
    let spec = SceneSpec {
        width: 320,
        height: 240,
        frames: 60,
        seed: 41,
        camera: CameraSpec { focal: 640.0, distance: 640.0 },
        outline: Outline::Ellipse { rx: 55.0, ry: 45.0 },
        obverse_texture: TextureSpec {
            seed: 1,
            scale: 7.0,
            brightness: 0.78,
            contrast: 0.4,
            tint: [1.0, 0.95, 0.7],
        },
        reverse_texture: TextureSpec {
            seed: 2,
            scale: 10.0,
            brightness: 0.55,
            contrast: 0.35,
            tint: [0.7, 0.8, 1.0],
        },
        background_texture: TextureSpec {
            seed: 3,
            scale: 18.0,
            brightness: 0.18,
            contrast: 0.08,
            tint: [1.0, 1.0, 1.0],
        },
        trajectory: synth::TrajectorySpec { omega_deg: 4.0, ..Default::default() },
        gt_stride: 5,
        ..Default::default()
    };
    let dir = std::env::temp_dir().join("cointrack-acceptance").join("reference");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    write_dataset(&spec, &dir).unwrap();
    let seq = SequenceRecord::load(&dir).unwrap();

    let mut config = Config::default();
    config.seed = Some(7);
    config.segmenter.backend = "reference".into();
    config.segmenter.stride = 4;
    config.segmenter.init_cap_per_label = 1500;
    let results = tracker::run_sequence(&seq, &config).unwrap();

    let mut sum = 0.0;
    let mut n = 0usize;
    for (&idx, _) in &seq.gt {
        let gt = seq.read_gt(idx).unwrap().object_mask();
        if gt.is_empty() {
            continue;
        }
        let pred = results[idx].object_mask.object_mask();
        sum += iou(&pred, &gt).unwrap();
        n += 1;
    }
    let mean = sum / n as f64;
    assert!(mean >= 0.75, "reference backend mean IoU {mean:.4} over {n} frames");
}

// ---------------------------------------------------------------------------
// Criterion: adaptation conservativeness.
// ---------------------------------------------------------------------------

fn adaptation_scene(distractor: bool) -> SceneSpec {
    let mut spec = SceneSpec {
        width: 160,
        height: 120,
        frames: 50,
        seed: 51,
        camera: CameraSpec { focal: 320.0, distance: 320.0 },
        outline: Outline::Ellipse { rx: 32.0, ry: 26.0 },
        trajectory: synth::TrajectorySpec {
            omega_deg: 12.0,
            omega_frames: Some(30),
            ..Default::default()
        },
        gt_stride: 5,
        ..Default::default()
    };
    if distractor {
        spec.distractor = Some(DistractorSpec {
            cx: 20.0,
            cy: 20.0,
            radius: 9.0,
            active_from: 34,
            texture: TextureSpec { seed: 1, ..Default::default() },
        });
    }
    spec
}

fn run_with_index_sizes(spec: &SceneSpec, name: &str, seed: u64) -> (Vec<cointrack::tracker::FrameResult>, Vec<usize>) {
    let dir = std::env::temp_dir().join("cointrack-acceptance").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    write_dataset(spec, &dir).unwrap();
    let seq = SequenceRecord::load(&dir).unwrap();
    let config = {
        let mut c = oracle_config(seed);
        c.segmenter.init_cap_per_label = 200;
        c
    };
    let templates = Templates::from_sequence(&seq).unwrap();
    let backend = tracker::make_backend(&config, &dir).unwrap();
    let flow = tracker::make_flow_source(&config, &dir);
    let mut t = Tracker::initialize(templates, backend, flow, config, seed).unwrap();
    let mut results = Vec::new();
    let mut sizes = Vec::new();
    for i in 0..spec.frames {
        let frame = Frame { index: i, image: seq.read_frame(i).unwrap() };
        results.push(t.step(&frame).unwrap());
        sizes.push(t.index().len());
    }
    (results, sizes)
}

fn criterion_adaptation() {
    // A persistent false-positive blob is adapted away within 3 frames of
    // its appearance and stays gone.
    let spec = adaptation_scene(true);
    let (results, _) = run_with_index_sizes(&spec, "adapt-blob", 3);
    let appear = 34usize;
    let added: usize = results[appear..appear + 3].iter().map(|r| r.adaptation.n_bg_added).sum();
    assert!(added > 0, "blob cells never added as background");
    for r in &results[appear + 3..] {
        let labels = &r.labels;
        let mut object_near = 0;
        for cy in 0..(32 / labels.stride) {
            for cx in 0..(32 / labels.stride) {
                if labels.label(cx, cy).is_object() {
                    object_near += 1;
                }
            }
        }
        assert_eq!(object_near, 0, "frame {}: blob survives in the segmentation", r.frame);
    }

    // Zero corruption: the index size never changes after initialization.
    let spec = adaptation_scene(false);
    let (results, sizes) = run_with_index_sizes(&spec, "adapt-clean", 3);
    let first = sizes[0];
    assert!(
        sizes.iter().all(|s| *s == first),
        "index size changed on a clean run: {:?}",
        sizes
            .iter()
            .enumerate()
            .filter(|(_, s)| **s != first)
            .take(5)
            .collect::<Vec<_>>()
    );

    // The index never grows on lost frames (the spin preamble passes through
    // two edge-on bands, so lost frames exist).
    let lost_frames: Vec<usize> = results
        .iter()
        .filter(|r| r.mode == TrackerMode::Lost)
        .map(|r| r.frame)
        .collect();
    assert!(!lost_frames.is_empty(), "scenario produced no lost frames");
    for r in &results {
        if r.mode == TrackerMode::Lost {
            assert_eq!(
                r.adaptation.n_bg_added + r.adaptation.n_obj_added,
                0,
                "frame {}: adapted while lost",
                r.frame
            );
            if r.frame > 0 {
                assert_eq!(sizes[r.frame], sizes[r.frame - 1], "frame {}: index grew while lost", r.frame);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Criterion: evaluation protocol.
// ---------------------------------------------------------------------------

fn criterion_evaluation_protocol() {
    // Hand-computed exclusion example: {1.0, 0.5, empty} -> 0.75.
    let full = BinaryMask::from_fn(4, 4, |_, _| true);
    let half = BinaryMask::from_fn(4, 4, |x, _| x < 2);
    let mut gt = std::collections::BTreeMap::new();
    gt.insert(0usize, full.clone());
    gt.insert(5usize, full.clone());
    gt.insert(10usize, BinaryMask::new(4, 4));
    let out = evalkit::sequence_iou(&gt, |idx| {
        Ok(match idx {
            0 => full.clone(),
            5 => half.clone(),
            _ => unreachable!("empty-GT frames are excluded"),
        })
    })
    .unwrap();
    assert_eq!(out.mean, Some(0.75));
    assert_eq!(out.contributing, 2);

    // cmd_eval tracking-state percentage matches an injected results file.
    let dir = std::env::temp_dir().join("cointrack-acceptance").join("protocol");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let spec = SceneSpec {
        width: 128,
        height: 96,
        frames: 40,
        seed: 61,
        camera: CameraSpec { focal: 256.0, distance: 256.0 },
        outline: Outline::Ellipse { rx: 26.0, ry: 21.0 },
        trajectory: synth::TrajectorySpec {
            omega_deg: 12.0,
            omega_frames: Some(30),
            ..Default::default()
        },
        gt_stride: 5,
        ..Default::default()
    };
    let data = dir.join("data");
    write_dataset(&spec, &data).unwrap();
    // 30% of frames tracking (12 of 40); predictions copy the ground truth.
    let results = dir.join("results");
    std::fs::create_dir_all(results.join("masks")).unwrap();
    let mut jsonl = String::new();
    for t in 0..40usize {
        let mask_rel = format!("masks/{t:06}.png");
        let gt_path = data.join(format!("gt/{t:06}.png"));
        let label = if gt_path.exists() {
            cointrack::mask::read_label_png(&gt_path).unwrap()
        } else {
            cointrack::mask::LabelImage::new(128, 96)
        };
        cointrack::mask::write_label_png(&results.join(&mask_rel), &label).unwrap();
        let mode = if t < 12 { "tracking" } else { "lost" };
        jsonl.push_str(&format!(
            "{{\"frame\":{t},\"mode\":\"{mode}\",\"side\":\"obverse\",\"score\":{{\"obj\":1.0,\"cover\":1.0,\"occl\":1.0,\"appearance\":1.0,\"total\":1.0}},\"homography\":null,\"adaptation\":{{\"bg\":0,\"obj\":0}},\"mask_path\":\"{mask_rel}\"}}\n"
        ));
    }
    std::fs::write(results.join("results.jsonl"), jsonl).unwrap();

    let out_dir = dir.join("report");
    let status = Command::new(env!("CARGO_BIN_EXE_cointrack"))
        .args(["eval", "--results"])
        .arg(&results)
        .arg("--dataset")
        .arg(&data)
        .arg("--out")
        .arg(&out_dir)
        .status()
        .unwrap();
    assert!(status.success());
    let tracking_csv = std::fs::read_to_string(out_dir.join("tracking_table.csv")).unwrap();
    assert!(
        tracking_csv.lines().any(|l| l.ends_with(",30.0")),
        "tracking-state percentage mismatch:\n{tracking_csv}"
    );
    let iou_csv = std::fs::read_to_string(out_dir.join("iou_table.csv")).unwrap();
    assert!(iou_csv.contains("mean,1.0000"), "perfect predictions must score 1:\n{iou_csv}");
}

// ---------------------------------------------------------------------------
// Criterion: cmd_track byte determinism.
// ---------------------------------------------------------------------------

fn criterion_track_determinism() {
    let dir = std::env::temp_dir().join("cointrack-acceptance").join("determinism");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let spec = SceneSpec {
        width: 128,
        height: 96,
        frames: 36,
        seed: 71,
        camera: CameraSpec { focal: 256.0, distance: 256.0 },
        outline: Outline::Ellipse { rx: 26.0, ry: 21.0 },
        trajectory: synth::TrajectorySpec {
            omega_deg: 12.0,
            omega_frames: Some(30),
            ..Default::default()
        },
        noise_sigma: 2.0,
        gt_stride: 5,
        ..Default::default()
    };
    let data = dir.join("data");
    write_dataset(&spec, &data).unwrap();
    let config_path = dir.join("config.toml");
    std::fs::write(
        &config_path,
        "[segmenter]\nbackend = \"oracle\"\nstride = 2\ninit_cap_per_label = 200\n",
    )
    .unwrap();

    let run = |out: &Path| {
        let status = Command::new(env!("CARGO_BIN_EXE_cointrack"))
            .args(["track", "--sequence"])
            .arg(&data)
            .arg("--config")
            .arg(&config_path)
            .arg("--out")
            .arg(out)
            .args(["--seed", "99"])
            .status()
            .unwrap();
        assert!(status.success());
    };
    let out_a = dir.join("a");
    let out_b = dir.join("b");
    run(&out_a);
    run(&out_b);
    let ja = std::fs::read(out_a.join("results.jsonl")).unwrap();
    let jb = std::fs::read(out_b.join("results.jsonl")).unwrap();
    assert_eq!(ja, jb, "results.jsonl differs between identical runs");
    for t in 0..36 {
        let rel = format!("masks/{t:06}.png");
        let ma = std::fs::read(out_a.join(&rel)).unwrap();
        let mb = std::fs::read(out_b.join(&rel)).unwrap();
        assert_eq!(ma, mb, "mask {rel} differs between identical runs");
    }
}

// ---------------------------------------------------------------------------

#[test]
fn acceptance_redetect_statistics() {
    // Kept as its own test so the 10-seed study parallelizes with the main
    // scorecard under the default harness.
    let (ok, total) = criterion_end_to_end_redetect_seeds();
    println!("PASS redetect-statistics ({ok}/{total} seeds)");
    assert!(ok >= 8, "re-detected within 10 frames in only {ok}/{total} seeds");
}
