//! Aspect-ratio statistics against the generator's closed-form projection:
//! a rotating disk's apparent width is the facing cosine, so the bounding
//! rectangle's aspect ratio and its changes have analytic values.

use cointrack::evalkit::{ar_change_speed, ar_change_vs_first};
use cointrack::mask::BinaryMask;
use cointrack::synth::{generate, CameraSpec, Outline, SceneSpec, TrajectorySpec};

/// Disk rotating about the vertical axis: 4 degrees per frame.
fn rotating_disk(frames: usize) -> Vec<(usize, BinaryMask)> {
    let spec = SceneSpec {
        width: 240,
        height: 200,
        frames,
        seed: 5,
        camera: CameraSpec { focal: 900.0, distance: 900.0 },
        outline: Outline::Ellipse { rx: 36.0, ry: 36.0 },
        trajectory: TrajectorySpec { omega_deg: 4.0, ..Default::default() },
        gt_stride: 5,
        ..Default::default()
    };
    generate(&spec)
        .unwrap()
        .into_iter()
        .enumerate()
        .filter(|(i, _)| i % 5 == 0)
        .map(|(i, f)| (i, f.labels.object_mask()))
        .collect()
}

#[test]
fn halving_the_apparent_side_doubles_the_ratio() {
    // At 60 degrees the apparent width halves: aspect ratio change vs the
    // face-on first frame is 2.0.
    let masks = rotating_disk(16); // annotated 0, 5, 10, 15 -> up to 60 deg
    let refs: Vec<(usize, &BinaryMask)> = masks.iter().map(|(i, m)| (*i, m)).collect();
    let values = ar_change_vs_first(&refs).unwrap();
    let extreme = *values.last().unwrap();
    assert!((extreme - 2.0).abs() <= 0.1, "extreme ratio change {extreme}");
    // Monotone growth along the sweep.
    for w in values.windows(2) {
        assert!(w[1] > w[0] - 0.02, "not growing: {values:?}");
    }
}

#[test]
fn per_gap_change_matches_analytic_cosine_ratio() {
    let masks = rotating_disk(66); // annotated up to 65 * 4 = wait, 13 masks to 60 deg
    let refs: Vec<(usize, &BinaryMask)> = masks.iter().map(|(i, m)| (*i, m)).collect();
    let values = ar_change_speed(&refs, 5).unwrap();
    assert!(!values.is_empty());
    // Gap of 5 frames = 20 degrees. The disk aspect ratio at angle a is
    // 1 / cos(a) until edge-on; skip gaps that touch the edge-on band.
    for (gi, v) in values.iter().enumerate() {
        let a0 = (5 * gi) as f64 * 4.0_f64.to_radians();
        let a1 = a0 + 20.0_f64.to_radians();
        if a1.cos() < 0.25 {
            continue;
        }
        let analytic = a0.cos() / a1.cos();
        assert!(
            (v - analytic).abs() <= 0.1 * analytic,
            "gap {gi}: measured {v} vs analytic {analytic}"
        );
    }
}
