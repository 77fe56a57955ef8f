use gazegrade::features::*;
use gazegrade::fixation::Fixation;
use gazegrade::session::{GazeSample, Label};
use gazegrade::windowing::PhaseTag;
use proptest::prelude::*;

fn track_strategy() -> impl Strategy<Value = Vec<GazeSample>> {
    prop::collection::vec((1e-3..0.05f64, 0.0..=1.0f64, 0.0..=1.0f64), 1..120).prop_map(|rows| {
        let mut t = 0.0;
        rows.into_iter()
            .map(|(dt, x, y)| {
                t += dt;
                GazeSample::new(t, x, y, 1.0)
            })
            .collect()
    })
}

fn fixation(start: f64, duration: f64, x: f64, y: f64) -> Fixation {
    Fixation {
        start,
        duration,
        centroid_x: x,
        centroid_y: y,
        sample_count: 10,
    }
}

fn features_with_scalars(afd: f64, fc: f64, aed: f64) -> WindowFeatures {
    WindowFeatures {
        window_index: 0,
        start: 0.0,
        gaze_seq: vec![0.5; 8],
        afd_ms: afd,
        fc,
        aed,
        label: Label::Expert,
        phase_tag: PhaseTag::Mixed,
        empty_gaze: false,
    }
}

proptest! {
    #[test]
    fn resampled_gaze_stays_within_the_sample_range(
        slice in track_strategy(),
        len in 2usize..200,
        offset in -0.5..0.5f64,
        size in 0.1..5.0f64,
    ) {
        let (seq, empty) = resample_gaze(&slice, slice[0].t + offset, size, len);
        prop_assert!(!empty);
        prop_assert_eq!(seq.len(), 2 * len);
        let bound = |f: fn(&GazeSample) -> f64| {
            let v: Vec<f64> = slice.iter().map(f).collect();
            (v.iter().copied().fold(f64::INFINITY, f64::min), v.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        };
        let (xlo, xhi) = bound(|s| s.x);
        let (ylo, yhi) = bound(|s| s.y);
        prop_assert!(seq[..len].iter().all(|&v| v >= xlo - 1e-12 && v <= xhi + 1e-12));
        prop_assert!(seq[len..].iter().all(|&v| v >= ylo - 1e-12 && v <= yhi + 1e-12));
    }

    #[test]
    fn linear_motion_is_reproduced(
        x0 in 0.0..0.5f64, vx in -0.05..0.05f64, y0 in 0.0..0.5f64, vy in -0.05..0.05f64,
        len in 2usize..100,
    ) {
        let slice: Vec<GazeSample> = (0..=200)
            .map(|i| {
                let t = i as f64 * 0.05;
                GazeSample::new(t, x0 + vx * t, y0 + vy * t, 1.0)
            })
            .collect();
        let (seq, _) = resample_gaze(&slice, 0.0, 10.0, len);
        for k in 0..len {
            let t = k as f64 * 10.0 / len as f64;
            prop_assert!((seq[k] - (x0 + vx * t)).abs() < 1e-9);
            prop_assert!((seq[len + k] - (y0 + vy * t)).abs() < 1e-9);
        }
    }

    #[test]
    fn normalizer_centres_and_scales_the_training_set(
        rows in prop::collection::vec((0.0..2000.0f64, 0.0..40.0f64, 0.0..1.0f64), 2..60)
    ) {
        let train: Vec<WindowFeatures> =
            rows.iter().map(|&(a, f, e)| features_with_scalars(a, f, e)).collect();
        let stats = fit_normalizer(&train).unwrap();
        let normed: Vec<[f64; SCALAR_FEATURES]> =
            train.iter().map(|w| apply_normalizer(&stats, w).scalars()).collect();
        for k in 0..SCALAR_FEATURES {
            let col: Vec<f64> = normed.iter().map(|r| r[k]).collect();
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            prop_assert!(mean.abs() < 1e-9);
            if stats.scalars[k].constant {
                prop_assert!(col.iter().all(|&v| v == 0.0));
            } else {
                prop_assert!((var - 1.0).abs() < 1e-9);
            }
        }
        // the gaze sequence is untouched
        prop_assert_eq!(&apply_normalizer(&stats, &train[0]).gaze_seq, &train[0].gaze_seq);
    }

    #[test]
    fn scalar_features_match_direct_formulas(
        fx in prop::collection::vec((1.0..2000.0f64, 0.0..1.0f64, 0.0..1.0f64), 0..30)
    ) {
        let fixations: Vec<Fixation> = fx
            .iter()
            .enumerate()
            .map(|(i, &(d, x, y))| fixation(i as f64 * 3.0, d, x, y))
            .collect();
        let afd = average_fixation_duration(&fixations);
        let aed = average_euclidean_distance(&fixations);
        prop_assert_eq!(fixation_count(&fixations), fx.len());
        if fx.is_empty() {
            prop_assert_eq!(afd, 0.0);
        } else {
            let mean = fx.iter().map(|f| f.0).sum::<f64>() / fx.len() as f64;
            prop_assert!((afd - mean).abs() < 1e-9 * mean.max(1.0));
        }
        if fx.len() < 2 {
            prop_assert_eq!(aed, 0.0);
        } else {
            let steps: Vec<f64> = fx.windows(2).map(|w| ((w[1].1 - w[0].1).powi(2) + (w[1].2 - w[0].2).powi(2)).sqrt()).collect();
            let mean = steps.iter().sum::<f64>() / steps.len() as f64;
            prop_assert!((aed - mean).abs() < 1e-12);
        }
        let gri = gaze_relational_index(afd, fixation_count(&fixations));
        if fx.is_empty() {
            prop_assert_eq!(gri, 0.0);
        } else {
            prop_assert!((gri - afd / fx.len() as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn min_max_scale_maps_into_the_unit_interval(v in prop::collection::vec(-1e3..1e3f64, 1..50)) {
        let scaled = min_max_scale(&v);
        prop_assert!(scaled.iter().all(|&s| (0.0..=1.0).contains(&s)));
        let distinct = v.iter().any(|&x| x != v[0]);
        if distinct {
            prop_assert!(scaled.contains(&0.0) && scaled.contains(&1.0));
        }
    }
}

#[test]
fn empty_window_is_mid_grey() {
    let (seq, empty) = resample_gaze(&[], 0.0, 5.0, 1000);
    assert!(empty);
    assert_eq!(seq.len(), 2000);
    assert!(seq.iter().all(|&v| v == 0.5));
    assert_eq!(sequence_length(200.0, 5.0), 1000);
    assert_eq!(sequence_length(60.0, 12.5), 750);
}
