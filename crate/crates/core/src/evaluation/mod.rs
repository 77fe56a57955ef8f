//! Subject-disjoint experiments: participant splits, batches of independently
//! seeded models per window size, ROC/AUROC reporting and softmax traces.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{
    apply_normalizer, fit_normalizer, session_window_features, FeatureStats, WindowFeatures,
};
use crate::fixation::IdtParams;
use crate::nn::{train, Model, ModelConfig, TrainConfig};
use crate::session::{Label, Session};
use crate::windowing::PhaseTag;

pub mod roc;

pub use roc::{auroc, mean_roc_curve, roc_curve, RocCurve, RocPoint};

pub const TRAIN_PER_CLASS: usize = 4;
pub const VAL_PER_CLASS: usize = 1;
pub const TEST_PER_CLASS: usize = 1;
const NEEDED_PER_CLASS: usize = TRAIN_PER_CLASS + VAL_PER_CLASS + TEST_PER_CLASS;

/// Participant ids for each role; experts are listed first in every set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl SplitPlan {
    pub fn is_disjoint(&self) -> bool {
        let mut all: Vec<&String> = self
            .train
            .iter()
            .chain(&self.val)
            .chain(&self.test)
            .collect();
        let n = all.len();
        all.sort();
        all.dedup();
        all.len() == n
    }
}

/// Draws 4/1/1 experts and 4/1/1 non-experts without replacement.
pub fn make_split(participants: &[(String, Label)], seed: u64) -> Result<SplitPlan> {
    let mut experts: Vec<&String> = participants
        .iter()
        .filter(|(_, l)| l.is_expert())
        .map(|(id, _)| id)
        .collect();
    let mut others: Vec<&String> = participants
        .iter()
        .filter(|(_, l)| !l.is_expert())
        .map(|(id, _)| id)
        .collect();
    if experts.len() < NEEDED_PER_CLASS {
        return Err(Error::Parameter(format!(
            "insufficient experts: need {NEEDED_PER_CLASS}, have {}",
            experts.len()
        )));
    }
    if others.len() < NEEDED_PER_CLASS {
        return Err(Error::Parameter(format!(
            "insufficient non-experts: need {NEEDED_PER_CLASS}, have {}",
            others.len()
        )));
    }
    experts.sort();
    others.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    experts.shuffle(&mut rng);
    others.shuffle(&mut rng);

    let take = |from: &[&String], e: &[&String], lo: usize, hi: usize| -> Vec<String> {
        e[lo..hi]
            .iter()
            .chain(&from[lo..hi])
            .map(|s| s.to_string())
            .collect()
    };
    let (t, v) = (TRAIN_PER_CLASS, TRAIN_PER_CLASS + VAL_PER_CLASS);
    Ok(SplitPlan {
        seed,
        train: take(&others, &experts, 0, t),
        val: take(&others, &experts, t, v),
        test: take(&others, &experts, v, NEEDED_PER_CLASS),
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseFilter {
    #[default]
    All,
    InitialOnly,
}

/// Window features of one participant at one window size.
#[derive(Clone, Debug, PartialEq)]
pub struct SessionWindows {
    pub participant_id: String,
    pub label: Label,
    pub windows: Vec<WindowFeatures>,
}

pub fn prepare_windows(
    sessions: &[Session],
    window_size: f64,
    idt: &IdtParams,
) -> Result<Vec<SessionWindows>> {
    idt.validate()?;
    sessions
        .iter()
        .map(|s| {
            Ok(SessionWindows {
                participant_id: s.participant_id.clone(),
                label: s.label,
                windows: session_window_features(s, window_size, idt)?,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchConfig {
    pub window_size: f64,
    pub n_models: usize,
    pub phase_filter: PhaseFilter,
    pub base_seed: u64,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelRun {
    pub seed: u64,
    pub auroc: f64,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub test_windows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchMetrics {
    pub window_size: f64,
    pub phase_filter: PhaseFilter,
    pub n_models: usize,
    pub mean_auroc: f64,
    /// Sample standard deviation across models.
    pub std_auroc: f64,
    /// Set when `n_models == 1` and the standard deviation is reported as 0.
    pub std_undefined: bool,
    pub per_model: Vec<ModelRun>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchResult {
    pub metrics: BatchMetrics,
    pub curves: Vec<RocCurve>,
    pub mean_curve: Vec<RocPoint>,
    /// The model of the last run, with the normalizer it was trained with.
    pub last_model: Option<(Model, FeatureStats)>,
}

fn select<'a>(
    data: &'a [SessionWindows],
    ids: &[String],
    filter: PhaseFilter,
) -> Result<Vec<&'a WindowFeatures>> {
    let mut out = Vec::new();
    for id in ids {
        let sw = data
            .iter()
            .find(|s| &s.participant_id == id)
            .ok_or_else(|| Error::Parameter(format!("unknown participant {id}")))?;
        out.extend(
            sw.windows
                .iter()
                .filter(|w| filter == PhaseFilter::All || w.phase_tag == PhaseTag::InitialOnly),
        );
    }
    Ok(out)
}

fn normalized(stats: &FeatureStats, windows: &[&WindowFeatures]) -> Vec<WindowFeatures> {
    windows.iter().map(|w| apply_normalizer(stats, w)).collect()
}

/// Trains and tests one model on the split drawn with `seed`.
pub fn run_model(
    data: &[SessionWindows],
    cfg: &BatchConfig,
    seed: u64,
) -> Result<(ModelRun, RocCurve, Model, FeatureStats)> {
    let participants: Vec<(String, Label)> = data
        .iter()
        .map(|s| (s.participant_id.clone(), s.label))
        .collect();
    let split = make_split(&participants, seed)?;
    let train_raw = select(data, &split.train, cfg.phase_filter)?;
    let val_raw = select(data, &split.val, cfg.phase_filter)?;
    let test_raw = select(data, &split.test, cfg.phase_filter)?;
    if train_raw.is_empty() || val_raw.is_empty() || test_raw.is_empty() {
        return Err(Error::Parameter(format!(
            "empty split after phase filtering (train {}, val {}, test {})",
            train_raw.len(),
            val_raw.len(),
            test_raw.len()
        )));
    }
    let owned: Vec<WindowFeatures> = train_raw.iter().map(|w| (*w).clone()).collect();
    let stats = fit_normalizer(&owned)?;
    drop(owned);
    let train_set = normalized(&stats, &train_raw);
    let val_set = normalized(&stats, &val_raw);
    let test_set = normalized(&stats, &test_raw);

    let mut model_cfg = cfg.model.clone();
    model_cfg.seed = seed;
    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = seed;
    let model = Model::init(&model_cfg)?;
    let (model, history) = train(model, &train_set, &val_set, &train_cfg)?;

    let test_refs: Vec<&WindowFeatures> = test_set.iter().collect();
    let scores = model.predict_scores(&test_refs)?;
    let labels: Vec<bool> = test_set.iter().map(|w| w.label.is_expert()).collect();
    let curve = roc_curve(&scores, &labels)?;
    let run = ModelRun {
        seed,
        auroc: curve.auroc,
        train: split.train,
        val: split.val,
        test: split.test,
        best_epoch: history.best_epoch,
        epochs_run: history.epochs.len(),
        test_windows: test_set.len(),
    };
    Ok((run, curve, model, stats))
}

/// Runs `n_models` independent split/initialize/train/test cycles with seeds
/// `base_seed + i` and summarizes their test AUROCs.
pub fn run_batch(data: &[SessionWindows], cfg: &BatchConfig) -> Result<BatchResult> {
    if cfg.n_models == 0 {
        return Err(Error::Parameter("n_models must be at least 1".into()));
    }
    let mut runs = Vec::with_capacity(cfg.n_models);
    let mut curves = Vec::with_capacity(cfg.n_models);
    let mut last_model = None;
    for i in 0..cfg.n_models {
        let seed = cfg.base_seed + i as u64;
        let (run, curve, model, stats) =
            run_model(data, cfg, seed).map_err(|e| Error::ModelRun {
                seed,
                source: Box::new(e),
            })?;
        runs.push(run);
        curves.push(curve);
        last_model = Some((model, stats));
    }
    let aurocs: Vec<f64> = runs.iter().map(|r| r.auroc).collect();
    let (mean, std) = mean_and_sample_std(&aurocs);
    Ok(BatchResult {
        metrics: BatchMetrics {
            window_size: cfg.window_size,
            phase_filter: cfg.phase_filter,
            n_models: cfg.n_models,
            mean_auroc: mean,
            std_auroc: std,
            std_undefined: cfg.n_models == 1,
            per_model: runs,
        },
        mean_curve: mean_roc_curve(&curves, 0.01),
        curves,
        last_model,
    })
}

/// Mean and sample (n - 1) standard deviation; the deviation is 0 for one value.
pub fn mean_and_sample_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub start: f64,
    pub score: f64,
}

/// Expertise score of every window of `session`, in temporal order.
pub fn softmax_trace(
    model: &Model,
    normalizer: Option<&FeatureStats>,
    session: &Session,
    window_size: f64,
    idt: &IdtParams,
) -> Result<Vec<TracePoint>> {
    let windows = session_window_features(session, window_size, idt)?;
    let windows: Vec<WindowFeatures> = match normalizer {
        Some(stats) => windows.iter().map(|w| apply_normalizer(stats, w)).collect(),
        None => windows,
    };
    let refs: Vec<&WindowFeatures> = windows.iter().collect();
    let scores = model.predict_scores(&refs)?;
    Ok(windows
        .iter()
        .zip(scores)
        .map(|(w, score)| TracePoint {
            start: w.start,
            score,
        })
        .collect())
}

pub fn write_trace_csv<W: Write>(trace: &[TracePoint], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["window_start_s", "expertise_score"])?;
    for p in trace {
        writer.write_record(&[p.start.to_string(), p.score.to_string()])?;
    }
    writer.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cohort(experts: usize, others: usize) -> Vec<(String, Label)> {
        (0..experts)
            .map(|i| (format!("e{i}"), Label::Expert))
            .chain((0..others).map(|i| (format!("n{i:02}"), Label::NonExpert)))
            .collect()
    }

    #[test]
    fn split_sizes_follow_protocol() {
        let plan = make_split(&cohort(6, 53), 3).unwrap();
        assert_eq!(
            (plan.train.len(), plan.val.len(), plan.test.len()),
            (8, 2, 2)
        );
        assert!(plan.is_disjoint());
        assert_eq!(
            plan.train.iter().filter(|id| id.starts_with('e')).count(),
            4
        );
        assert!(plan.val[0].starts_with('e') && plan.val[1].starts_with('n'));
        assert_eq!(plan, make_split(&cohort(6, 53), 3).unwrap());
        assert_ne!(plan, make_split(&cohort(6, 53), 4).unwrap());
    }

    #[test]
    fn too_few_experts() {
        let err = make_split(&cohort(5, 53), 0).unwrap_err();
        assert!(err.to_string().contains("insufficient experts"), "{err}");
        let err = make_split(&cohort(0, 5), 0).unwrap_err();
        assert!(err.to_string().contains("insufficient experts"), "{err}");
    }

    #[test]
    fn sample_std() {
        assert_eq!(mean_and_sample_std(&[0.7]), (0.7, 0.0));
        let (m, s) = mean_and_sample_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }
}
