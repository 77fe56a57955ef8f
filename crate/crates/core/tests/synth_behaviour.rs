mod common;

use gazegrade::evaluation::{
    make_split, prepare_windows, run_model, softmax_trace, BatchConfig, PhaseFilter,
};
use gazegrade::features::{image_scalar_features, sequence_length, SCALAR_FEATURES};
use gazegrade::fixation::{detect_fixations, IdtParams};
use gazegrade::nn::{ModelConfig, TrainConfig};
use gazegrade::session::{GazeSample, GazeTrack, ImageEvent, Label, Session};
use gazegrade::stats::{compare_groups, median, Direction, Granularity, DEFAULT_ALPHA};
use gazegrade::synth::{generate_cohort, generate_session_with_truth, BehaviorProfile, SynthSpec};

fn image_rows(sessions: &[Session], label: Label) -> Vec<[f64; SCALAR_FEATURES]> {
    sessions
        .iter()
        .filter(|s| s.label == label)
        .flat_map(|s| image_scalar_features(s, &detect_fixations(&s.track, &IdtParams::default())))
        .collect()
}

#[test]
fn generated_fixations_follow_the_profiles() {
    for (profile, seed) in [
        (BehaviorProfile::expert(), 5),
        (BehaviorProfile::non_expert(), 6),
    ] {
        let (session, truth) =
            generate_session_with_truth(&profile, Label::Expert, "P", 30, 200.0, seed).unwrap();
        let durations: Vec<f64> = truth.iter().map(|f| f.duration_ms).collect();
        let m = median(&durations);
        assert!(
            (m / profile.fixation_median_ms - 1.0).abs() < 0.1,
            "median {m}"
        );
        let rate = truth.len() as f64 / session.duration();
        assert!(
            (rate / profile.fixation_rate - 1.0).abs() < 0.15,
            "rate {rate}"
        );
        assert!(session
            .track
            .samples()
            .iter()
            .all(|s| (0.0..=1.0).contains(&s.x) && (0.0..=1.0).contains(&s.y)));
    }
}

#[test]
fn null_cohorts_are_rarely_significant() {
    // both groups drawn from one profile: the AFD test should reject at
    // roughly the nominal rate
    let profile = BehaviorProfile::non_expert();
    let trials = 100;
    let mut rejections = 0;
    for seed in 0..trials {
        let spec = SynthSpec {
            n_experts: 3,
            n_nonexperts: 3,
            images_per_session: 6,
            sampling_rate: 100.0,
            seed,
        };
        let cohort = generate_cohort(&profile, &profile, &spec).unwrap();
        let report = compare_groups(
            &image_rows(&cohort, Label::Expert),
            &image_rows(&cohort, Label::NonExpert),
            DEFAULT_ALPHA,
            Granularity::Image,
        )
        .unwrap();
        rejections += usize::from(report.features[0].significant);
    }
    assert!(
        rejections <= 10,
        "{rejections} of {trials} null cohorts rejected"
    );
}

#[test]
fn image_level_comparison_separates_the_profiles() {
    let spec = SynthSpec {
        n_experts: 4,
        n_nonexperts: 4,
        images_per_session: 10,
        sampling_rate: 100.0,
        seed: 9,
    };
    let cohort = generate_cohort(
        &BehaviorProfile::expert(),
        &BehaviorProfile::non_expert(),
        &spec,
    )
    .unwrap();
    let report = compare_groups(
        &image_rows(&cohort, Label::Expert),
        &image_rows(&cohort, Label::NonExpert),
        DEFAULT_ALPHA,
        Granularity::Image,
    )
    .unwrap();
    let dirs: Vec<Direction> = report.features.iter().map(|f| f.direction).collect();
    assert_eq!(
        dirs,
        [
            Direction::ExpertLower,
            Direction::ExpertHigher,
            Direction::ExpertLower
        ]
    );
    assert!(report.features.iter().all(|f| f.significant));
}

/// One session made of `first` followed by `second`, shifted to start where
/// the first ends.
fn splice(first: &Session, second: &Session) -> Session {
    let rate = first.track.nominal_rate();
    let offset = first.duration() + 1.0 / rate;
    let mut samples: Vec<GazeSample> = first.track.samples().to_vec();
    samples.extend(second.track.samples().iter().map(|s| GazeSample {
        t: s.t + offset,
        ..*s
    }));
    let mut events: Vec<ImageEvent> = first.events.clone();
    events.extend(second.events.iter().map(|e| ImageEvent {
        shown_at: e.shown_at + offset,
        initial_decision_at: e.initial_decision_at + offset,
        final_decision_at: e.final_decision_at + offset,
        ..e.clone()
    }));
    Session {
        participant_id: "spliced".into(),
        label: first.label,
        track: GazeTrack::new(samples, rate).unwrap(),
        events,
    }
}

#[test]
fn trace_drops_where_an_expert_session_turns_novice() {
    let rate = 50.0;
    let size = 5.0;
    let spec = SynthSpec {
        n_experts: 6,
        n_nonexperts: 6,
        images_per_session: 8,
        sampling_rate: rate,
        seed: 21,
    };
    let cohort = generate_cohort(
        &BehaviorProfile::expert(),
        &BehaviorProfile::non_expert(),
        &spec,
    )
    .unwrap();
    let data = prepare_windows(&cohort, size, &IdtParams::default()).unwrap();
    let cfg = BatchConfig {
        window_size: size,
        n_models: 1,
        phase_filter: PhaseFilter::All,
        base_seed: 0,
        model: ModelConfig {
            seq_len: sequence_length(rate, size),
            stem_channels: 4,
            block_channels: vec![4, 6, 8],
            kernel_size: 3,
            scalar_hidden: 8,
            fusion_hidden: 8,
            skip_connections: true,
            seed: 0,
        },
        train: TrainConfig {
            learning_rate: 0.01,
            batch_size: 16,
            epochs: 6,
            ..TrainConfig::default()
        },
    };
    let (_, _, model, stats) = run_model(&data, &cfg, 4).unwrap();

    let (expert, _) =
        generate_session_with_truth(&BehaviorProfile::expert(), Label::Expert, "E", 8, rate, 100)
            .unwrap();
    let (novice, _) = generate_session_with_truth(
        &BehaviorProfile::non_expert(),
        Label::NonExpert,
        "N",
        8,
        rate,
        101,
    )
    .unwrap();
    let spliced = splice(&expert, &novice);
    let trace = softmax_trace(&model, Some(&stats), &spliced, size, &IdtParams::default()).unwrap();
    let boundary = expert.duration();
    let mean = |pts: Vec<f64>| pts.iter().sum::<f64>() / pts.len() as f64;
    let before = mean(
        trace
            .iter()
            .filter(|p| p.start + size <= boundary)
            .map(|p| p.score)
            .collect(),
    );
    let after = mean(
        trace
            .iter()
            .filter(|p| p.start >= boundary)
            .map(|p| p.score)
            .collect(),
    );
    assert!(
        before > after + 0.2,
        "expert part {before}, novice part {after}"
    );
}

#[test]
fn cohort_without_experts_cannot_be_split() {
    let spec = SynthSpec {
        n_experts: 0,
        n_nonexperts: 5,
        images_per_session: 2,
        sampling_rate: 50.0,
        seed: 1,
    };
    let cohort = generate_cohort(
        &BehaviorProfile::expert(),
        &BehaviorProfile::non_expert(),
        &spec,
    )
    .unwrap();
    assert_eq!(cohort.len(), 5);
    assert!(cohort.iter().all(|s| s.label == Label::NonExpert));
    let ids: Vec<(String, Label)> = cohort
        .iter()
        .map(|s| (s.participant_id.clone(), s.label))
        .collect();
    let err = make_split(&ids, 0).unwrap_err();
    assert!(err.to_string().contains("insufficient experts"), "{err}");
}
