//! Command-line entry points. Every command reads a [`RunConfig`], applies
//! flag overrides, writes its outputs under the output directory together
//! with `resolved_config.toml`, and keeps wall-clock data in `run_meta.json`.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::evaluation::{
    make_split, prepare_windows, run_batch, softmax_trace, write_trace_csv, BatchConfig,
    PhaseFilter,
};
use crate::features::{
    gaze_relational_index, image_scalar_features, min_max_scale, session_window_features,
    write_feature_csv, FeatureRow, SCALAR_FEATURES,
};
use crate::fixation::detect_fixations;
use crate::nn::checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CheckpointHeader};
use crate::nn::{train, Model};
use crate::plot::LinePlot;
use crate::session::{
    load_store, read_manifest, session_from_entries, validate_session, write_manifest,
    write_session, Label, Session, ValidationReport, GAZE_DIR, MANIFEST_DIR,
};
use crate::stats::{compare_groups, Granularity, GroupReport};
use crate::synth::generate_cohort;
use crate::windowing::{
    session_windows, write_inventory_csv, InventoryRow, WindowData, DEFAULT_WINDOW_SIZES,
};

pub const RESOLVED_CONFIG: &str = "resolved_config.toml";
pub const RUN_META: &str = "run_meta.json";

#[derive(Debug, Parser)]
#[command(
    name = "gazegrade",
    version,
    about = "Gaze-based expertise grading pipeline"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Default, Args)]
pub struct CommonArgs {
    /// TOML run configuration; flags below override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_parser = parse_window_size)]
    pub window_size: Option<f64>,
    /// Keep only windows inside initial-decision phases, at any window size.
    #[arg(long, global = true, conflicts_with = "all_phases")]
    pub initial_phase_only: bool,
    /// Keep every window, at any window size.
    #[arg(long, global = true)]
    pub all_phases: bool,
    #[arg(long, global = true)]
    pub n_models: Option<usize>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Session store directory (`manifests/` and `gaze/`).
    #[arg(long, global = true)]
    pub store: Option<PathBuf>,
    /// Also write PNG line plots.
    #[arg(long, global = true)]
    pub plots: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a raw store and write the usable sessions as a clean store.
    Ingest {
        #[arg(long)]
        input: PathBuf,
    },
    /// Window inventories and scalar feature tables for every window size.
    Features,
    /// Mann-Whitney comparison of expert and non-expert features.
    Stats,
    /// Generate a synthetic session store.
    Synth {
        #[arg(long)]
        n_experts: Option<usize>,
        #[arg(long)]
        n_nonexperts: Option<usize>,
    },
    /// Train one model on the split drawn with the seed.
    Train,
    /// Train and test a batch of independently seeded models.
    Eval,
    /// Per-window expertise scores of one participant.
    Trace {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        participant: String,
    },
}

fn parse_window_size(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if DEFAULT_WINDOW_SIZES.contains(&v) {
        Ok(v)
    } else {
        Err(format!(
            "window size must be one of {DEFAULT_WINDOW_SIZES:?}"
        ))
    }
}

impl CommonArgs {
    /// Loads the config file (or defaults) and applies the flag overrides.
    /// `--seed` is routed to `synth.seed` for the synth command.
    pub fn resolve(&self, command: &Command) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            match command {
                Command::Synth { .. } => cfg.synth.seed = seed,
                _ => cfg.seed = seed,
            }
        }
        if let Some(size) = self.window_size {
            cfg.window_size = size;
        }
        if self.initial_phase_only {
            cfg.initial_phase_only = Some(true);
        }
        if self.all_phases {
            cfg.initial_phase_only = Some(false);
        }
        if let Some(n) = self.n_models {
            cfg.n_models = n;
        }
        if let Some(out) = &self.out {
            cfg.paths.out = out.clone();
        }
        if let Some(store) = &self.store {
            cfg.paths.store = Some(store.clone());
        }
        if self.plots {
            cfg.plots = true;
        }
        if let Command::Synth {
            n_experts,
            n_nonexperts,
        } = command
        {
            if let Some(n) = n_experts {
                cfg.synth.n_experts = *n;
            }
            if let Some(n) = n_nonexperts {
                cfg.synth.n_nonexperts = *n;
            }
        }
        if let Command::Trace {
            checkpoint: Some(path),
            ..
        } = command
        {
            cfg.paths.checkpoint = Some(path.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = cli.common.resolve(&cli.command)?;
    let started = unix_time();
    let name = match &cli.command {
        Command::Ingest { input } => {
            cmd_ingest(&cfg, input)?;
            "ingest"
        }
        Command::Features => {
            cmd_features(&cfg)?;
            "features"
        }
        Command::Stats => {
            cmd_stats(&cfg)?;
            "stats"
        }
        Command::Synth { .. } => {
            cmd_synth(&cfg)?;
            "synth"
        }
        Command::Train => {
            cmd_train(&cfg)?;
            "train"
        }
        Command::Eval => {
            cmd_eval(&cfg)?;
            "eval"
        }
        Command::Trace { participant, .. } => {
            cmd_trace(&cfg, participant)?;
            "trace"
        }
    };
    write_run_meta(&cfg.paths.out, name, started, unix_time())
}

/// Single-line error report: `error: <category>: <message>`.
pub fn error_line(err: &Error) -> String {
    let mut message = err.to_string();
    let mut source = std::error::Error::source(err);
    while let Some(s) = source {
        let text = s.to_string();
        if !message.contains(&text) {
            message.push_str(": ");
            message.push_str(&text);
        }
        source = s.source();
    }
    let message: Vec<&str> = message.split_whitespace().collect();
    format!("error: {}: {}", err.category(), message.join(" "))
}

fn unix_time() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

#[derive(Serialize)]
struct RunMeta<'a> {
    command: &'a str,
    version: &'a str,
    started_unix_s: f64,
    finished_unix_s: f64,
}

fn write_run_meta(out: &Path, command: &str, started: f64, finished: f64) -> Result<()> {
    let meta = RunMeta {
        command,
        version: env!("CARGO_PKG_VERSION"),
        started_unix_s: started,
        finished_unix_s: finished,
    };
    write_json(&out.join(RUN_META), &meta)
}

fn prepare_out(cfg: &RunConfig) -> Result<&Path> {
    let out = cfg.paths.out.as_path();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let path = out.join(RESOLVED_CONFIG);
    fs::write(&path, cfg.to_toml()?).map_err(|e| Error::io(&path, e))?;
    Ok(out)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(BufWriter::new(file))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn size_tag(size: f64) -> String {
    format!("{size}s")
}

fn load_sessions(cfg: &RunConfig) -> Result<Vec<Session>> {
    let sessions = load_store(cfg.store()?, &cfg.ingest.parse_options())?;
    if sessions.is_empty() {
        return Err(Error::Validation(format!(
            "no sessions found in {}",
            cfg.store()?.display()
        )));
    }
    Ok(sessions)
}

#[derive(Clone, Debug, Serialize)]
pub struct IngestRecord {
    pub manifest: String,
    /// Present when the session could not be parsed at all.
    pub error: Option<String>,
    pub report: Option<ValidationReport>,
}

/// Reads every manifest under `input`, validates the sessions and writes the
/// usable ones, with per-image summary fields filled in, to `<out>/store`.
pub fn cmd_ingest(cfg: &RunConfig, input: &Path) -> Result<Vec<IngestRecord>> {
    let out = prepare_out(cfg)?;
    let manifest_dir = input.join(MANIFEST_DIR);
    let mut paths: Vec<PathBuf> = fs::read_dir(&manifest_dir)
        .map_err(|e| Error::io(&manifest_dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    paths.sort();

    let store = out.join("store");
    let opts = cfg.ingest.parse_options();
    let mut records = Vec::with_capacity(paths.len());
    for path in paths {
        let manifest = path
            .file_name()
            .unwrap_or_default()
            .to_string_lossy()
            .into_owned();
        let parsed = fs::File::open(&path)
            .map_err(|e| Error::io(&path, e))
            .and_then(|f| read_manifest(std::io::BufReader::new(f)))
            .and_then(|entries| {
                let pid = entries
                    .first()
                    .map(|e| e.participant_id.clone())
                    .unwrap_or_default();
                session_from_entries(&entries, &input.join(GAZE_DIR).join(pid), &opts)
            });
        let session = match parsed {
            Ok(s) => s,
            Err(e) => {
                records.push(IngestRecord {
                    manifest,
                    error: Some(error_line(&e)),
                    report: None,
                });
                continue;
            }
        };
        let report = validate_session(&session, &cfg.ingest.validation);
        if report.usable {
            let mut entries = write_session(&session, &store)?;
            let fixations = detect_fixations(&session.track, &cfg.idt);
            let per_image = image_scalar_features(&session, &fixations);
            let gri: Vec<f64> = per_image
                .iter()
                .map(|v| gaze_relational_index(v[0], v[1] as usize))
                .collect();
            let gri_scaled = min_max_scale(&gri);
            for (i, entry) in entries.iter_mut().enumerate() {
                entry.average_fixation_time_ms = Some(per_image[i][0]);
                entry.fixation_count = Some(per_image[i][1] as usize);
                entry.gri = Some(gri[i]);
                entry.gri_normalized = Some(gri_scaled[i]);
            }
            write_manifest(
                &entries,
                &store
                    .join(MANIFEST_DIR)
                    .join(format!("{}.json", session.participant_id)),
            )?;
        }
        records.push(IngestRecord {
            manifest,
            error: None,
            report: Some(report),
        });
    }
    write_json(&out.join("validation_reports.json"), &records)?;
    Ok(records)
}

/// Writes `inventory_<size>s.csv` (every window) and `features_<size>s.csv`
/// (windows passing the phase filter) for each configured window size.
pub fn cmd_features(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let out = prepare_out(cfg)?;
    let sessions = load_sessions(cfg)?;
    let fixations: Vec<_> = sessions
        .iter()
        .map(|s| detect_fixations(&s.track, &cfg.idt))
        .collect();
    let mut written = Vec::new();
    for &size in &cfg.window_sizes {
        let filter = cfg.phase_filter(size);
        let mut windows: Vec<(String, Vec<WindowData<'_>>)> = Vec::with_capacity(sessions.len());
        for (s, f) in sessions.iter().zip(&fixations) {
            windows.push((s.participant_id.clone(), session_windows(s, size, f)?));
        }
        let inventory = out.join(format!("inventory_{}.csv", size_tag(size)));
        write_inventory_csv(
            windows.iter().flat_map(|(pid, ws)| {
                ws.iter().map(move |w| InventoryRow {
                    participant_id: pid,
                    window: w,
                })
            }),
            create(&inventory)?,
        )?;

        let mut features = Vec::with_capacity(sessions.len());
        for s in &sessions {
            let mut f = session_window_features(s, size, &cfg.idt)?;
            f.retain(|w| keep(filter, w.phase_tag));
            features.push((s.participant_id.clone(), f));
        }
        let table = out.join(format!("features_{}.csv", size_tag(size)));
        write_feature_csv(
            features.iter().flat_map(|(pid, fs)| {
                fs.iter().map(move |f| FeatureRow {
                    participant_id: pid,
                    features: f,
                })
            }),
            create(&table)?,
        )?;
        written.push(inventory);
        written.push(table);
    }
    Ok(written)
}

fn keep(filter: PhaseFilter, tag: crate::windowing::PhaseTag) -> bool {
    filter == PhaseFilter::All || tag == crate::windowing::PhaseTag::InitialOnly
}

/// Group comparison of AFD, FC and AED; writes `stats.json`.
pub fn cmd_stats(cfg: &RunConfig) -> Result<GroupReport> {
    let out = prepare_out(cfg)?;
    let sessions = load_sessions(cfg)?;
    let mut expert: Vec<[f64; SCALAR_FEATURES]> = Vec::new();
    let mut nonexpert: Vec<[f64; SCALAR_FEATURES]> = Vec::new();
    let filter = cfg.phase_filter(cfg.window_size);
    for s in &sessions {
        let rows: Vec<[f64; SCALAR_FEATURES]> = match cfg.stats.granularity {
            Granularity::Window => session_window_features(s, cfg.window_size, &cfg.idt)?
                .iter()
                .filter(|w| keep(filter, w.phase_tag))
                .map(|w| w.scalars())
                .collect(),
            Granularity::Image => {
                let fixations = detect_fixations(&s.track, &cfg.idt);
                image_scalar_features(s, &fixations)
            }
        };
        match s.label {
            Label::Expert => expert.extend(rows),
            Label::NonExpert => nonexpert.extend(rows),
        }
    }
    let report = compare_groups(&expert, &nonexpert, cfg.stats.alpha, cfg.stats.granularity)?;
    write_json(&out.join("stats.json"), &report)?;
    Ok(report)
}

/// Writes a synthetic cohort to `<out>/store`.
pub fn cmd_synth(cfg: &RunConfig) -> Result<PathBuf> {
    let out = prepare_out(cfg)?;
    let store = out.join("store");
    let cohort = generate_cohort(&cfg.profiles.expert, &cfg.profiles.non_expert, &cfg.synth)?;
    for s in &cohort {
        write_session(s, &store)?;
    }
    Ok(store)
}

pub const CHECKPOINT_FILE: &str = "model.gzg";

/// Trains one model on the split drawn with `cfg.seed`; writes the
/// checkpoint, `history.csv` and `split.json`.
pub fn cmd_train(cfg: &RunConfig) -> Result<PathBuf> {
    let out = prepare_out(cfg)?;
    let sessions = load_sessions(cfg)?;
    let size = cfg.window_size;
    let data = prepare_windows(&sessions, size, &cfg.idt)?;
    let participants: Vec<(String, Label)> = data
        .iter()
        .map(|s| (s.participant_id.clone(), s.label))
        .collect();
    let split = make_split(&participants, cfg.seed)?;
    let filter = cfg.phase_filter(size);
    let pick = |ids: &[String]| -> Vec<crate::features::WindowFeatures> {
        data.iter()
            .filter(|s| ids.contains(&s.participant_id))
            .flat_map(|s| {
                s.windows
                    .iter()
                    .filter(|w| keep(filter, w.phase_tag))
                    .cloned()
            })
            .collect()
    };
    let (train_raw, val_raw) = (pick(&split.train), pick(&split.val));
    if train_raw.is_empty() || val_raw.is_empty() {
        return Err(Error::Parameter(
            "empty training or validation set after phase filtering".into(),
        ));
    }
    let stats = crate::features::fit_normalizer(&train_raw)?;
    let norm = |v: &[crate::features::WindowFeatures]| -> Vec<_> {
        v.iter()
            .map(|w| crate::features::apply_normalizer(&stats, w))
            .collect()
    };
    let mut model_cfg = cfg.model_for(size)?;
    model_cfg.seed = cfg.seed;
    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = cfg.seed;
    let model = Model::init(&model_cfg)?;
    let (model, history) = train(model, &norm(&train_raw), &norm(&val_raw), &train_cfg)?;

    let path = out.join(CHECKPOINT_FILE);
    let ckpt = Checkpoint {
        header: CheckpointHeader {
            model: model_cfg,
            normalizer: Some(stats),
            window_size: Some(size),
            sampling_rate: Some(cfg.ingest.sampling_rate),
        },
        model,
    };
    write_checkpoint(&ckpt, create(&path)?)?;
    history.write_csv(create(&out.join("history.csv"))?)?;
    write_json(&out.join("split.json"), &split)?;
    Ok(path)
}

pub const METRICS_FILE: &str = "metrics.json";
pub const ROC_FILE: &str = "roc.csv";

/// Runs a batch at `cfg.window_size`; writes `metrics.json`, the mean ROC
/// curve in `roc.csv` and every model's curve in `roc_per_model.csv`.
pub fn cmd_eval(cfg: &RunConfig) -> Result<PathBuf> {
    let out = prepare_out(cfg)?;
    let sessions = load_sessions(cfg)?;
    let size = cfg.window_size;
    let data = prepare_windows(&sessions, size, &cfg.idt)?;
    drop(sessions);
    let batch = BatchConfig {
        window_size: size,
        n_models: cfg.n_models,
        phase_filter: cfg.phase_filter(size),
        base_seed: cfg.seed,
        model: cfg.model_for(size)?,
        train: cfg.train.clone(),
    };
    let result = run_batch(&data, &batch)?;
    let metrics = out.join(METRICS_FILE);
    write_json(&metrics, &result.metrics)?;
    crate::evaluation::roc::write_roc_csv(&result.mean_curve, create(&out.join(ROC_FILE))?)?;

    let mut writer = csv::Writer::from_writer(create(&out.join("roc_per_model.csv"))?);
    writer.write_record(["seed", "fpr", "tpr"])?;
    for (run, curve) in result.metrics.per_model.iter().zip(&result.curves) {
        for p in &curve.points {
            writer.write_record(&[run.seed.to_string(), p.fpr.to_string(), p.tpr.to_string()])?;
        }
    }
    writer.flush().map_err(|e| Error::io(out, e))?;

    if cfg.plots {
        let mut plot = LinePlot::new((0.0, 1.0, 0.0, 1.0))?;
        plot.line(&[(0.0, 0.0), (1.0, 1.0)], [180, 180, 180]);
        for curve in &result.curves {
            let pts: Vec<(f64, f64)> = curve.points.iter().map(|p| (p.fpr, p.tpr)).collect();
            plot.line(&pts, [150, 190, 230]);
        }
        let mean: Vec<(f64, f64)> = result.mean_curve.iter().map(|p| (p.fpr, p.tpr)).collect();
        plot.line(&mean, [200, 30, 30]);
        plot.save(&out.join("roc.png"))?;
    }
    Ok(metrics)
}

/// Scores every window of one participant with a trained checkpoint;
/// writes `trace_<participant>.csv`.
pub fn cmd_trace(cfg: &RunConfig, participant: &str) -> Result<PathBuf> {
    let out = prepare_out(cfg)?;
    let ckpt_path = cfg.paths.checkpoint.clone().ok_or_else(|| {
        Error::RunConfig("no checkpoint given (paths.checkpoint or --checkpoint)".into())
    })?;
    let file = fs::File::open(&ckpt_path).map_err(|e| Error::io(&ckpt_path, e))?;
    let ckpt = read_checkpoint(std::io::BufReader::new(file))?;
    let size = ckpt.header.window_size.unwrap_or(cfg.window_size);
    let sessions = load_sessions(cfg)?;
    let session = sessions
        .iter()
        .find(|s| s.participant_id == participant)
        .ok_or_else(|| Error::Parameter(format!("participant {participant} not in store")))?;
    let trace = softmax_trace(
        &ckpt.model,
        ckpt.header.normalizer.as_ref(),
        session,
        size,
        &cfg.idt,
    )?;
    let path = out.join(format!("trace_{participant}.csv"));
    write_trace_csv(&trace, create(&path)?)?;
    if cfg.plots && !trace.is_empty() {
        let end = trace.last().map(|p| p.start + size).unwrap_or(size);
        let mut plot = LinePlot::new((0.0, end, 0.0, 1.0))?;
        let pts: Vec<(f64, f64)> = trace.iter().map(|p| (p.start, p.score)).collect();
        plot.line(&pts, [30, 30, 200]);
        plot.save(&out.join(format!("trace_{participant}.png")))?;
    }
    Ok(path)
}
