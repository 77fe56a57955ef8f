//! Synthetic gaze sessions from an alternating fixation/saccade process.
//!
//! Fixation durations and saccade amplitudes are log-normal. Saccade
//! directions are uniform; positions leaving the unit square are reflected
//! back inside. Samples are emitted on a regular grid at the sampling rate:
//! jittered around the fixation centre during fixations and linearly
//! interpolated during saccades.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::session::{Decision, GazeSample, GazeTrack, ImageEvent, Label, Session};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BehaviorProfile {
    pub fixation_median_ms: f64,
    /// Log-space standard deviation of fixation durations.
    pub fixation_sigma: f64,
    pub saccade_median: f64,
    pub saccade_sigma: f64,
    /// Fixations per second; sets the mean saccade transit time.
    pub fixation_rate: f64,
    pub jitter_std: f64,
    pub initial_phase_mean_s: f64,
    pub description_phase_mean_s: f64,
    /// Log-space standard deviation of both phase durations.
    pub phase_sigma: f64,
    /// Fraction of samples emitted with low confidence.
    pub dropout_rate: f64,
}

impl BehaviorProfile {
    pub fn expert() -> Self {
        Self {
            fixation_median_ms: 220.0,
            fixation_sigma: 0.4,
            saccade_median: 0.08,
            saccade_sigma: 0.5,
            fixation_rate: 3.5,
            jitter_std: 0.003,
            initial_phase_mean_s: 9.5,
            description_phase_mean_s: 2.0,
            phase_sigma: 0.3,
            dropout_rate: 0.0,
        }
    }

    pub fn non_expert() -> Self {
        Self {
            fixation_median_ms: 380.0,
            saccade_median: 0.15,
            fixation_rate: 2.2,
            ..Self::expert()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.fixation_median_ms,
            self.saccade_median,
            self.fixation_rate,
            self.initial_phase_mean_s,
            self.description_phase_mean_s,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Parameter(
                "profile medians and rates must be positive".into(),
            ));
        }
        if [
            self.fixation_sigma,
            self.saccade_sigma,
            self.phase_sigma,
            self.jitter_std,
        ]
        .iter()
        .any(|v| !(*v >= 0.0))
        {
            return Err(Error::Parameter(
                "profile spreads must be non-negative".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Parameter("dropout rate must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Mean of the clipped fixation-duration distribution, approximated by the
    /// log-normal mean.
    fn mean_fixation_ms(&self) -> f64 {
        self.fixation_median_ms * (self.fixation_sigma.powi(2) / 2.0).exp()
    }

    /// Saccade transit time that makes the long-run fixation rate match.
    pub fn saccade_ms(&self) -> f64 {
        (1000.0 / self.fixation_rate - self.mean_fixation_ms()).max(MIN_SACCADE_MS)
    }
}

impl Default for BehaviorProfile {
    fn default() -> Self {
        Self::expert()
    }
}

const MIN_SACCADE_MS: f64 = 20.0;
const MIN_FIXATION_MS: f64 = 80.0;
const MAX_FIXATION_MS: f64 = 4000.0;
const GROUND_TRUTHS: [&str; 11] = [
    "bonafide",
    "artificial",
    "contact_lens",
    "contact_lens_printed",
    "printout",
    "post_mortem",
    "diseased",
    "synthetic",
    "stylegan2",
    "stylegan3",
    "paper_print_cutout",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub n_experts: usize,
    pub n_nonexperts: usize,
    pub images_per_session: usize,
    pub sampling_rate: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_experts: 6,
            n_nonexperts: 53,
            images_per_session: 54,
            sampling_rate: 200.0,
            seed: 0,
        }
    }
}

/// A fixation as sampled by the generator, before any detection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrueFixation {
    pub start: f64,
    pub duration_ms: f64,
    pub x: f64,
    pub y: f64,
}

fn reflect(mut v: f64) -> f64 {
    loop {
        if v < 0.0 {
            v = -v;
        } else if v > 1.0 {
            v = 2.0 - v;
        } else {
            return v;
        }
    }
}

fn log_normal_with_mean(mean: f64, sigma: f64) -> LogNormal<f64> {
    LogNormal::new(mean.ln() - sigma * sigma / 2.0, sigma).expect("valid log-normal")
}

fn phase_events<R: Rng>(profile: &BehaviorProfile, images: usize, rng: &mut R) -> Vec<ImageEvent> {
    let initial = log_normal_with_mean(profile.initial_phase_mean_s, profile.phase_sigma);
    let description = log_normal_with_mean(profile.description_phase_mean_s, profile.phase_sigma);
    let mut t = 0.0;
    (0..images)
        .map(|k| {
            let shown_at = t;
            let initial_decision_at = shown_at + initial.sample(rng).max(0.5);
            let final_decision_at = initial_decision_at + description.sample(rng);
            t = final_decision_at;
            let decision = |r: &mut R| {
                if r.gen_bool(0.5) {
                    Decision::Abnormal
                } else {
                    Decision::Normal
                }
            };
            ImageEvent {
                image_id: format!("image_{:02}", k + 1),
                shown_at,
                initial_decision_at,
                final_decision_at,
                initial_decision: decision(rng),
                final_decision: decision(rng),
                ground_truth: GROUND_TRUTHS[rng.gen_range(0..GROUND_TRUTHS.len())].to_string(),
            }
        })
        .collect()
}

/// Gaze samples on `[0, duration)` plus the fixations that produced them.
pub fn generate_gaze<R: Rng>(
    profile: &BehaviorProfile,
    duration: f64,
    rate: f64,
    rng: &mut R,
) -> (Vec<GazeSample>, Vec<TrueFixation>) {
    let fix_dist = LogNormal::new(profile.fixation_median_ms.ln(), profile.fixation_sigma)
        .expect("valid log-normal");
    let amp_dist = LogNormal::new(profile.saccade_median.ln(), profile.saccade_sigma)
        .expect("valid log-normal");
    let jitter = Normal::new(0.0, profile.jitter_std).expect("valid normal");
    let saccade_s = profile.saccade_ms() / 1000.0;

    let n = (duration * rate).round() as usize;
    let mut samples = Vec::with_capacity(n);
    let mut truth = Vec::new();
    let mut pos = (rng.gen_range(0.2..0.8), rng.gen_range(0.2..0.8));
    let mut t_seg = 0.0;
    let mut i = 0usize;
    while i < n {
        let dur_ms = fix_dist.sample(rng).clamp(MIN_FIXATION_MS, MAX_FIXATION_MS);
        let fix_end = t_seg + dur_ms / 1000.0;
        truth.push(TrueFixation {
            start: t_seg,
            duration_ms: dur_ms,
            x: pos.0,
            y: pos.1,
        });
        while i < n && (i as f64) / rate < fix_end {
            samples.push(GazeSample::new(
                i as f64 / rate,
                reflect(pos.0 + jitter.sample(rng)),
                reflect(pos.1 + jitter.sample(rng)),
                1.0,
            ));
            i += 1;
        }

        let amplitude = amp_dist.sample(rng);
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        let next = (
            reflect(pos.0 + amplitude * angle.cos()),
            reflect(pos.1 + amplitude * angle.sin()),
        );
        let sac_end = fix_end + saccade_s;
        while i < n && (i as f64) / rate < sac_end {
            let w = ((i as f64) / rate - fix_end) / saccade_s;
            samples.push(GazeSample::new(
                i as f64 / rate,
                pos.0 + w * (next.0 - pos.0),
                pos.1 + w * (next.1 - pos.1),
                1.0,
            ));
            i += 1;
        }
        pos = next;
        t_seg = sac_end;
    }
    if profile.dropout_rate > 0.0 {
        for s in &mut samples {
            if rng.gen_bool(profile.dropout_rate) {
                s.confidence = 0.1;
            }
        }
    }
    (samples, truth)
}

/// One labelled session with per-image phase events and its generating fixations.
/// Low-confidence samples (from dropout) are left out of the track and
/// counted as dropped, as the CSV reader would do.
pub fn generate_session_with_truth(
    profile: &BehaviorProfile,
    label: Label,
    participant_id: &str,
    images: usize,
    rate: f64,
    seed: u64,
) -> Result<(Session, Vec<TrueFixation>)> {
    profile.validate()?;
    if images == 0 {
        return Err(Error::Parameter(
            "a session needs at least one image".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let events = phase_events(profile, images, &mut rng);
    let duration = events.last().map_or(0.0, |e| e.final_decision_at);
    let (samples, truth) = generate_gaze(profile, duration, rate, &mut rng);
    let total = samples.len();
    let kept: Vec<GazeSample> = samples
        .into_iter()
        .filter(|s| s.confidence >= crate::session::DEFAULT_MIN_CONFIDENCE)
        .collect();
    let dropped = total - kept.len();
    let track = GazeTrack::new(kept, rate)?.with_dropped(dropped);
    Ok((
        Session {
            participant_id: participant_id.to_string(),
            label,
            track,
            events,
        },
        truth,
    ))
}

pub fn generate_session(
    profile: &BehaviorProfile,
    label: Label,
    participant_id: &str,
    images: usize,
    rate: f64,
    seed: u64,
) -> Result<Session> {
    generate_session_with_truth(profile, label, participant_id, images, rate, seed).map(|(s, _)| s)
}

/// `n_experts` expert sessions followed by `n_nonexperts` non-expert
/// sessions. Participant ids are shuffled so they do not reveal the label.
pub fn generate_cohort(
    expert: &BehaviorProfile,
    nonexpert: &BehaviorProfile,
    spec: &SynthSpec,
) -> Result<Vec<Session>> {
    let n = spec.n_experts + spec.n_nonexperts;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut ids: Vec<usize> = (0..n).collect();
    rand::seq::SliceRandom::shuffle(ids.as_mut_slice(), &mut rng);
    (0..n)
        .map(|i| {
            let (profile, label) = if i < spec.n_experts {
                (expert, Label::Expert)
            } else {
                (nonexpert, Label::NonExpert)
            };
            let seed = rng.gen::<u64>();
            generate_session(
                profile,
                label,
                &format!("P{:04}", ids[i] + 1),
                spec.images_per_session,
                spec.sampling_rate,
                seed,
            )
        })
        .collect()
}
