//! The subcommands, callable as library functions.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use fediron_core::fl::{
    evaluate, initial_model, pretrain_global, run_rounds, LocalConfig, PretrainConfig, RoundReport, RunConfig,
};
use fediron_core::flow::{
    clean, load_flows, partition_by_dst_ip, prepare_clients, prepare_pool_by_ip, ClientPartition, FeatureSchema,
    RawDataset,
};
use fediron_core::metrics::MetricsReport;
use fediron_core::nn::Dataset;
use fediron_core::synth::{generate, generate_residual};
use fediron_core::{AggregationConfig, ModelParams, ModelPreset};
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::config::{ExperimentConfig, InitKind};
use crate::error::CliError;
use crate::output::OutputGuard;
use crate::prepared::{
    self, client_file, ClientEntry, Manifest, PreparedDir, ResidualEntry, TotalDiff, RESIDUAL_FILE,
};

pub const MODEL_FILE: &str = "model.flids";
pub const PRETRAINED_FILE: &str = "pretrained.flids";
pub const REPORT_FILE: &str = "report.json";
pub const HISTORY_FILE: &str = "history.json";
pub const CURVES_FILE: &str = "curves.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// Published per-client sample counts of the ten largest destination IPs.
pub const TON10_PUBLISHED_TOTALS: [u64; 10] = [
    3_786_885, 2_740_330, 2_535_874, 1_984_149, 1_378_579, 1_165_842, 1_008_113, 680_480, 603_465, 425_249,
];

/// Contents of `report.json`, shared by every training and evaluation command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub model: ModelPreset,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregation: Option<AggregationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitKind>,
    pub seed: u64,
    pub classes: Vec<String>,
    /// Federated rounds run, or supervised epochs for centralised commands.
    pub rounds: usize,
    /// Which data the metrics were computed on.
    pub evaluated_on: String,
    pub metrics: MetricsReport,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub loss_curve: Vec<f64>,
    /// The effective configuration, without the output directory.
    pub config: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_unix: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_secs: Option<f64>,
}

/// Which examples `evaluate` scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Residual,
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "residual" => Ok(Split::Residual),
            other => Err(format!("unknown split `{other}` (expected train, test or residual)")),
        }
    }
}

impl Split {
    fn name(self) -> &'static str {
        match self {
            Split::Train => "client train splits",
            Split::Test => "client test splits",
            Split::Residual => "residual pool",
        }
    }
}

fn config_json(cfg: &ExperimentConfig) -> serde_json::Value {
    let mut v = serde_json::to_value(cfg).expect("config serializes");
    if let Some(map) = v.as_object_mut() {
        map.remove("out");
    }
    v
}

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

struct Stamp {
    start: Instant,
    on: bool,
}

impl Stamp {
    fn start(cfg: &ExperimentConfig) -> Self {
        Self {
            start: Instant::now(),
            on: cfg.timestamps(),
        }
    }

    fn created(&self) -> Option<u64> {
        self.on.then(now_unix)
    }

    fn elapsed(&self) -> Option<f64> {
        self.on.then(|| self.start.elapsed().as_secs_f64())
    }
}

fn require<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, CliError> {
    p.as_deref().ok_or_else(|| CliError::Usage(format!("missing --{what}")))
}

fn checkpoint_for(cfg: &ExperimentConfig, model: ModelParams, classes: &[String], command: &str) -> Checkpoint {
    let mut c = Checkpoint::new(model, classes.to_vec())
        .with_meta("preset", cfg.model.name())
        .with_meta("seed", cfg.seed)
        .with_meta("command", command);
    if cfg.timestamps() {
        c = c.with_meta("created_unix", now_unix());
    }
    c
}

fn build_manifest(
    source: &str,
    seed: u64,
    schema: &FeatureSchema,
    parts: &[ClientPartition],
    prepared_sizes: &[(usize, usize)],
    residual: &RawDataset,
) -> Manifest {
    let n_classes = schema.n_classes();
    let clients = parts
        .iter()
        .zip(prepared_sizes)
        .map(|(p, &(train, test))| ClientEntry {
            client_id: p.client_id,
            dst_ip: p.dst_ip.clone(),
            file: client_file(p.client_id),
            total: p.len() as u64,
            class_counts: p.class_counts(n_classes),
            train,
            test,
        })
        .collect();
    let residual = (!residual.is_empty()).then(|| ResidualEntry {
        file: RESIDUAL_FILE.to_string(),
        total: residual.len() as u64,
        class_counts: residual.class_counts(),
        distinct_ips: residual
            .records
            .iter()
            .map(|r| r.dst_ip.as_str())
            .collect::<std::collections::BTreeSet<_>>()
            .len(),
    });
    Manifest {
        format: "FLIDP1".into(),
        source: source.into(),
        seed,
        classes: schema.classes().classes().to_vec(),
        feature_names: schema.feature_names().iter().map(|s| s.to_string()).collect(),
        n_features: schema.n_features_after_drop(),
        clients,
        residual,
        reference_diff: None,
    }
}

fn write_prepared(
    cfg: &ExperimentConfig,
    source: &str,
    schema: &FeatureSchema,
    parts: Vec<ClientPartition>,
    residual: RawDataset,
    reference: Option<&[u64]>,
) -> Result<Manifest, CliError> {
    let mut guard = OutputGuard::new(&cfg.out)?;
    let clients = prepare_clients(&parts, schema, cfg.seed)?;
    let sizes: Vec<(usize, usize)> = clients.iter().map(|c| (c.train.len(), c.test.len())).collect();
    let mut manifest = build_manifest(source, cfg.seed, schema, &parts, &sizes, &residual);
    if let Some(reference) = reference {
        manifest.reference_diff = Some(
            parts
                .iter()
                .zip(reference)
                .map(|(p, &expected)| TotalDiff {
                    client_id: p.client_id,
                    expected,
                    actual: p.len() as u64,
                    diff: p.len() as i64 - expected as i64,
                })
                .collect(),
        );
    }
    let residual = if residual.is_empty() {
        None
    } else {
        Some(prepare_pool_by_ip(&residual)?)
    };
    let dir = PreparedDir {
        manifest: manifest.clone(),
        clients,
        residual,
    };
    prepared::write_dir(&dir, &mut guard)?;
    guard.commit();
    Ok(manifest)
}

/// Loads a TON-IoT flow CSV, cleans it, keeps the `clients` largest
/// destination IPs as clients and writes a prepared directory.
pub fn cmd_partition(cfg: &ExperimentConfig, input: &Path) -> Result<Manifest, CliError> {
    cfg.validate()?;
    let schema = FeatureSchema::ton_iot();
    let raw = clean(load_flows(input, &schema)?);
    let (parts, residual) = partition_by_dst_ip(raw, cfg.clients)?;
    let reference = (cfg.clients == TON10_PUBLISHED_TOTALS.len()).then_some(TON10_PUBLISHED_TOTALS.as_slice());
    write_prepared(cfg, "csv", &schema, parts, residual, reference)
}

/// Generates the synthetic ten-client profile and writes a prepared directory.
pub fn cmd_synth(cfg: &ExperimentConfig) -> Result<Manifest, CliError> {
    cfg.validate()?;
    let profile = cfg.synth.profile()?;
    if cfg.clients != profile.n_clients() {
        return Err(CliError::Config(format!(
            "the synthetic profile has {} clients, {} requested",
            profile.n_clients(),
            cfg.clients
        )));
    }
    let parts = generate(&profile, cfg.seed)?;
    let residual = generate_residual(&profile, cfg.seed)?;
    write_prepared(cfg, "synth", &profile.schema, parts, residual, None)
}

fn load_data(cfg: &ExperimentConfig) -> Result<PreparedDir, CliError> {
    let dir = prepared::read_dir(require(&cfg.data, "data")?)?;
    if dir.clients.is_empty() {
        return Err(CliError::Prepared("no clients in the prepared dataset".into()));
    }
    Ok(dir)
}

fn pretrain_config(cfg: &ExperimentConfig, epochs: usize) -> PretrainConfig {
    PretrainConfig {
        optimizer: cfg.optimizer(),
        batch_size: cfg.batch_size,
        epochs,
        cd: cfg.cd(),
        seed: cfg.seed,
    }
}

fn test_metrics(model: &ModelParams, data: &PreparedDir) -> Result<MetricsReport, CliError> {
    Ok(evaluate(model, data.clients.iter().map(|c| &c.test))?)
}

fn supervised(
    cfg: &ExperimentConfig,
    command: &str,
    train: &Dataset,
    data: &PreparedDir,
    epochs: usize,
    file: &str,
) -> Result<RunReport, CliError> {
    let stamp = Stamp::start(cfg);
    let mut guard = OutputGuard::new(&cfg.out)?;
    let (model, curve) = pretrain_global(train, cfg.model, data.n_classes(), &pretrain_config(cfg, epochs))?;
    let metrics = test_metrics(&model, data)?;
    let classes = data.manifest.classes.clone();
    guard.write(file, &checkpoint_for(cfg, model, &classes, command).to_bytes())?;
    let report = RunReport {
        command: command.into(),
        model: cfg.model,
        aggregation: None,
        init: None,
        seed: cfg.seed,
        classes,
        rounds: epochs,
        evaluated_on: Split::Test.name().into(),
        metrics,
        loss_curve: curve,
        config: config_json(cfg),
        created_unix: stamp.created(),
        wall_time_secs: stamp.elapsed(),
    };
    guard.write_json(REPORT_FILE, &report)?;
    guard.commit();
    Ok(report)
}

/// Trains the preset on the union of all client training splits.
pub fn cmd_train_central(cfg: &ExperimentConfig) -> Result<RunReport, CliError> {
    cfg.validate()?;
    let data = load_data(cfg)?;
    let union = data.train_union()?;
    supervised(cfg, "train-central", &union, &data, cfg.central_epochs, MODEL_FILE)
}

/// Trains the preset on the server's residual pool.
pub fn cmd_pretrain(cfg: &ExperimentConfig) -> Result<RunReport, CliError> {
    cfg.validate()?;
    let data = load_data(cfg)?;
    let pool = data.residual()?.clone();
    supervised(cfg, "pretrain", &pool, &data, cfg.pretrain_epochs, PRETRAINED_FILE)
}

/// Loads a checkpoint and checks it fits `data` and the configured preset.
pub fn load_matching(path: &Path, cfg: &ExperimentConfig, data: &PreparedDir) -> Result<Checkpoint, CliError> {
    let ckpt = Checkpoint::load(path)?;
    ckpt.expect_dims(data.n_features(), data.n_classes())?;
    let want = cfg.model.specs(data.n_features(), data.n_classes());
    if ckpt.model.specs() != want.as_slice() {
        return Err(CliError::Checkpoint(format!(
            "{} has layer widths {:?}, the {} preset needs {:?}",
            path.display(),
            ckpt.model.widths(),
            cfg.model,
            cfg.model.widths(data.n_features(), data.n_classes())
        )));
    }
    Ok(ckpt)
}

/// Federated training. Writes the final model, the per-round history and a report.
pub fn cmd_train_fl(cfg: &ExperimentConfig) -> Result<RunReport, CliError> {
    cfg.validate()?;
    let stamp = Stamp::start(cfg);
    let data = load_data(cfg)?;
    let init = match cfg.init {
        InitKind::Random => initial_model(cfg.model, data.n_features(), data.n_classes(), cfg.seed)?,
        InitKind::Pretrained => load_matching(require(&cfg.checkpoint, "checkpoint")?, cfg, &data)?.model,
    };
    let mut guard = OutputGuard::new(&cfg.out)?;
    let aggregation = cfg.aggregation.to_core();
    let run = RunConfig {
        aggregation,
        rounds: cfg.rounds,
        local: LocalConfig {
            optimizer: cfg.optimizer(),
            batch_size: cfg.batch_size,
            epochs: cfg.epochs,
        },
        master_seed: cfg.seed,
        eval_each_round: true,
        parallel: !cfg.serial,
        record_timing: cfg.timestamps(),
    };
    let (model, history) = run_rounds(&data.clients, init, &run)?;
    let metrics = match history.last().and_then(|r| r.metrics.clone()) {
        Some(m) => m,
        None => test_metrics(&model, &data)?,
    };
    let classes = data.manifest.classes.clone();
    guard.write(MODEL_FILE, &checkpoint_for(cfg, model, &classes, "train-fl").to_bytes())?;
    guard.write_json(HISTORY_FILE, &history)?;
    let report = RunReport {
        command: "train-fl".into(),
        model: cfg.model,
        aggregation: Some(aggregation),
        init: Some(cfg.init),
        seed: cfg.seed,
        classes,
        rounds: cfg.rounds,
        evaluated_on: Split::Test.name().into(),
        metrics,
        loss_curve: Vec::new(),
        config: config_json(cfg),
        created_unix: stamp.created(),
        wall_time_secs: stamp.elapsed(),
    };
    guard.write_json(REPORT_FILE, &report)?;
    guard.commit();
    Ok(report)
}

/// Scores a checkpoint on one part of a prepared dataset.
pub fn cmd_evaluate(cfg: &ExperimentConfig, split: Split) -> Result<RunReport, CliError> {
    cfg.validate()?;
    let stamp = Stamp::start(cfg);
    let data = load_data(cfg)?;
    let path = require(&cfg.checkpoint, "checkpoint")?;
    let ckpt = Checkpoint::load(path)?;
    ckpt.expect_dims(data.n_features(), data.n_classes())?;
    let metrics = match split {
        Split::Test => evaluate(&ckpt.model, data.clients.iter().map(|c| &c.test))?,
        Split::Train => evaluate(&ckpt.model, data.clients.iter().map(|c| &c.train))?,
        Split::Residual => evaluate(&ckpt.model, [data.residual()?])?,
    };
    let model = ckpt
        .metadata
        .get("preset")
        .and_then(|v| v.as_str())
        .and_then(|s| s.parse().ok())
        .unwrap_or(cfg.model);
    let mut guard = OutputGuard::new(&cfg.out)?;
    let report = RunReport {
        command: "evaluate".into(),
        model,
        aggregation: None,
        init: None,
        seed: cfg.seed,
        classes: data.manifest.classes.clone(),
        rounds: 0,
        evaluated_on: split.name().into(),
        metrics,
        loss_curve: Vec::new(),
        config: config_json(cfg),
        created_unix: stamp.created(),
        wall_time_secs: stamp.elapsed(),
    };
    guard.write_json(REPORT_FILE, &report)?;
    guard.commit();
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: String,
    pub command: String,
    pub model: ModelPreset,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitKind>,
    pub rounds: usize,
    pub final_f1: f64,
    /// Best weighted F1 over the last five rounds.
    pub best_last5_f1: f64,
    pub best_f1: f64,
    pub best_round: usize,
}

/// Weighted F1 per round.
pub fn f1_curve(history: &[RoundReport]) -> Vec<f64> {
    history
        .iter()
        .map(|r| r.metrics.as_ref().map_or(f64::NAN, |m| m.weighted.f1))
        .collect()
}

pub fn best_of_last(curve: &[f64], n: usize) -> f64 {
    curve[curve.len().saturating_sub(n)..]
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::json(path, e))
}

/// Collects run directories into plot-ready `curves.csv` and `summary.json`.
/// Centralised runs contribute a single point at round 0.
pub fn cmd_report(cfg: &ExperimentConfig, runs: &[PathBuf]) -> Result<Vec<RunSummary>, CliError> {
    if runs.is_empty() {
        return Err(CliError::Usage("report needs at least one run directory".into()));
    }
    let mut csv = String::from("run,round,accuracy,precision,recall,f1\n");
    let mut summaries = Vec::with_capacity(runs.len());
    for dir in runs {
        let report: RunReport = read_json(&dir.join(REPORT_FILE))?;
        let name = dir
            .file_name()
            .map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned());
        let history_path = dir.join(HISTORY_FILE);
        let points: Vec<(usize, MetricsReport)> = if history_path.exists() {
            let history: Vec<RoundReport> = read_json(&history_path)?;
            history
                .into_iter()
                .filter_map(|r| r.metrics.map(|m| (r.round, m)))
                .collect()
        } else {
            vec![(0, report.metrics.clone())]
        };
        for (round, m) in &points {
            csv.push_str(&format!(
                "{name},{round},{},{},{},{}\n",
                m.accuracy, m.weighted.precision, m.weighted.recall, m.weighted.f1
            ));
        }
        let curve: Vec<f64> = points.iter().map(|(_, m)| m.weighted.f1).collect();
        let (best_idx, best) = curve
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &f)| if f > acc.1 { (i, f) } else { acc });
        summaries.push(RunSummary {
            run: name,
            command: report.command.clone(),
            model: report.model,
            aggregation: report.aggregation.map(|a| a.name().to_string()),
            init: report.init,
            rounds: report.rounds,
            final_f1: report.metrics.weighted.f1,
            best_last5_f1: best_of_last(&curve, 5),
            best_f1: best,
            best_round: points.get(best_idx).map_or(0, |p| p.0),
        });
    }
    let mut guard = OutputGuard::new(&cfg.out)?;
    guard.write(CURVES_FILE, csv.as_bytes())?;
    guard.write_json(SUMMARY_FILE, &summaries)?;
    guard.commit();
    Ok(summaries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn best_of_last_window() {
        assert_eq!(best_of_last(&[0.9, 0.1, 0.2, 0.3, 0.4, 0.5], 5), 0.5);
        assert_eq!(best_of_last(&[0.3, 0.7], 5), 0.7);
        assert_eq!(best_of_last(&[], 5), f64::NEG_INFINITY);
    }

    #[test]
    fn published_totals_sum() {
        assert_eq!(TON10_PUBLISHED_TOTALS.iter().sum::<u64>(), 16_308_966);
    }
}
