mod common;

use common::spearman;
use gazegrade::fixation::{detect_fixations, dispersion, IdtParams};
use gazegrade::session::{GazeSample, GazeTrack, Label};
use gazegrade::synth::{generate_session_with_truth, BehaviorProfile};
use proptest::prelude::*;

/// Dwells of `n` samples at well-separated targets, with jitter far below the
/// dispersion threshold, sampled at 200 Hz.
fn dwell_trace() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec(
        (1usize..1000, 0.1..0.5f64, 0.1..0.5f64, any::<u64>()),
        1..12,
    )
    .prop_map(|dwells| {
        let mut pts = Vec::new();
        for (k, (n, x, y, noise)) in dwells.into_iter().enumerate() {
            let (x, y) = if k % 2 == 0 {
                (x, y)
            } else {
                (x + 0.3, y + 0.3)
            };
            for i in 0..n {
                let j = ((noise.wrapping_mul(i as u64 + 1) >> 40) % 5) as f64 * 0.001;
                pts.push((x + j, y - j));
            }
        }
        pts
    })
}

fn track(points: &[(f64, f64)]) -> GazeTrack {
    let samples = points
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| GazeSample::new(i as f64 * 0.005, x, y, 1.0))
        .collect();
    GazeTrack::new(samples, 200.0).unwrap()
}

proptest! {
    #[test]
    fn fixations_respect_bounds_and_order(points in dwell_trace()) {
        let t = track(&points);
        let params = IdtParams::default();
        let fx = detect_fixations(&t, &params);
        for f in &fx {
            prop_assert!(f.duration >= params.min_duration_ms - 1e-9);
            prop_assert!(f.duration <= params.max_duration_ms + 1e-9);
            let members: Vec<GazeSample> = t
                .samples()
                .iter()
                .filter(|s| s.t >= f.start && s.t < f.end() - 1e-9)
                .copied()
                .collect();
            prop_assert_eq!(members.len(), f.sample_count);
            prop_assert!(dispersion(&members) <= params.dispersion_threshold);
        }
        for w in fx.windows(2) {
            prop_assert!(w[0].end() <= w[1].start + 1e-12);
        }
    }

    #[test]
    fn translation_moves_centroids_only(points in dwell_trace(), dx in -0.09..0.09f64, dy in -0.09..0.09f64) {
        let params = IdtParams::default();
        let base = detect_fixations(&track(&points), &params);
        let shifted: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x + dx, y + dy)).collect();
        let moved = detect_fixations(&track(&shifted), &params);
        prop_assert_eq!(base.len(), moved.len());
        for (a, b) in base.iter().zip(&moved) {
            prop_assert_eq!(a.start, b.start);
            prop_assert_eq!(a.duration, b.duration);
            prop_assert_eq!(a.sample_count, b.sample_count);
            prop_assert!((a.centroid_x + dx - b.centroid_x).abs() < 1e-9);
            prop_assert!((a.centroid_y + dy - b.centroid_y).abs() < 1e-9);
        }
    }
}

#[test]
fn detected_durations_track_generated_ones() {
    for (seed, profile) in [
        (1, BehaviorProfile::expert()),
        (2, BehaviorProfile::non_expert()),
    ] {
        let (session, truth) =
            generate_session_with_truth(&profile, Label::Expert, "P", 54, 200.0, seed).unwrap();
        let detected = detect_fixations(&session.track, &IdtParams::default());
        // pair each generated fixation with the detection overlapping it most
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for f in &truth {
            let end = f.start + f.duration_ms / 1000.0;
            let best = detected
                .iter()
                .map(|d| (d, (end.min(d.end()) - f.start.max(d.start)).max(0.0)))
                .max_by(|p, q| p.1.total_cmp(&q.1));
            if let Some((d, overlap)) = best {
                if overlap > 0.0 {
                    a.push(f.duration_ms);
                    b.push(d.duration);
                }
            }
        }
        assert!(
            a.len() * 10 >= truth.len() * 9,
            "matched {} of {}",
            a.len(),
            truth.len()
        );
        let rho = spearman(&a, &b);
        assert!(rho > 0.8, "rank correlation {rho}");
    }
}
