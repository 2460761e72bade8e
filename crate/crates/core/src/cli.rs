//! Command-line driver: JSON experiment configs, the `run` / `compare` /
//! `verify` subcommands, and plot-ready metrics files.
//!
//! A config file is flat JSON (see the README for the schema). CLI
//! `--set key=value` overrides are applied last, then every default is
//! filled in and the resolved config is echoed next to the outputs.
//! Accuracies are printed with six fixed decimals so identical runs
//! produce byte-identical CSVs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aggregation::FilterConfig;
use crate::byzantine::{self, AttackConfig, DataAttack, ModelAttack, VoteAttack};
use crate::data::{load_idx, synth_blobs, Dataset, ShardMode, TailPlan};
use crate::error::{Error, Result};
use crate::seeding;
use crate::sim::{self, AggregatorKind, ExperimentConfig, RoundRecord};
use crate::training::{Architecture, TrainConfig};

pub const DATA_DIR_ENV: &str = "FEDTANK_DATA_DIR";

fn hex_digest(hasher: Sha256) -> String {
    let bytes = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in bytes {
        let _ = write!(out, "{b:02x}");
    }
    out
}

// ---------------------------------------------------------------------------
// Config schema
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// "mnist" (IDX files) or "synth" (Gaussian blobs).
    pub kind: String,
    /// Dataset root for IDX files; relative paths resolve against
    /// $FEDTANK_DATA_DIR when set, else the working directory.
    #[serde(default = "defaults::mnist_dir")]
    pub dir: PathBuf,
    #[serde(default = "defaults::train_images")]
    pub train_images: PathBuf,
    #[serde(default = "defaults::train_labels")]
    pub train_labels: PathBuf,
    #[serde(default = "defaults::test_images")]
    pub test_images: PathBuf,
    #[serde(default = "defaults::test_labels")]
    pub test_labels: PathBuf,
    // Synth knobs (ignored for mnist).
    #[serde(default = "defaults::synth_classes")]
    pub n_classes: usize,
    #[serde(default = "defaults::synth_features")]
    pub n_features: usize,
    #[serde(default = "defaults::synth_train_per_class")]
    pub train_per_class: usize,
    #[serde(default = "defaults::synth_test_per_class")]
    pub test_per_class: usize,
    #[serde(default = "defaults::synth_spread")]
    pub spread: f64,
    #[serde(default = "defaults::data_seed")]
    pub data_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSection {
    /// "mlp1" or "softmax_linear".
    #[serde(default = "defaults::arch_kind")]
    pub kind: String,
    #[serde(default = "defaults::n_hidden")]
    pub n_hidden: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "defaults::learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default = "defaults::local_epochs")]
    pub local_epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailSection {
    #[serde(default = "defaults::n_participants")]
    pub n_participants: usize,
    #[serde(default = "defaults::tail_classes")]
    pub tail_classes: Vec<usize>,
    #[serde(default = "defaults::holder_fraction")]
    pub holder_fraction: f64,
    #[serde(default = "defaults::volume_ratio")]
    pub volume_ratio: f64,
    /// Partition stream seed; defaults to a stream derived from
    /// master_seed.
    #[serde(default)]
    pub partition_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSection {
    #[serde(default)]
    pub byzantine_ids: Vec<usize>,
    /// "none" or "label_flip".
    #[serde(default = "defaults::none_str")]
    pub data_attack: String,
    /// Explicit flip mapping; when absent, label_flip uses the
    /// shift-by-one derangement c -> (c+1) mod n_classes.
    #[serde(default)]
    pub label_flip_mapping: Option<BTreeMap<usize, usize>>,
    /// "none", "sign_flip", "gaussian", or "scale".
    #[serde(default = "defaults::none_str")]
    pub model_attack: String,
    #[serde(default = "defaults::gaussian_sigma")]
    pub gaussian_sigma: f64,
    #[serde(default = "defaults::scale_factor")]
    pub scale_factor: f64,
    /// "honest", "invert", "always_yes", or "always_no".
    #[serde(default = "defaults::vote_attack")]
    pub vote_attack: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSection {
    /// Assumed Byzantine count f; fills the Krum defaults
    /// k = N - f - 2 and m = N - f - 1 when the explicit knobs are null.
    #[serde(default = "defaults::assumed_byzantine")]
    pub assumed_byzantine: usize,
    #[serde(default)]
    pub k_nearest: Option<usize>,
    #[serde(default)]
    pub m_select: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThinktankSection {
    /// "balanced_random" or "local_mirror".
    #[serde(default = "defaults::thinktank_mode")]
    pub mode: String,
    #[serde(default = "defaults::shard_size")]
    pub shard_size: usize,
}

/// One experiment as described by a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    #[serde(default = "defaults::arch_section")]
    pub arch: ArchSection,
    #[serde(default = "defaults::train_section")]
    pub train: TrainSection,
    #[serde(default = "defaults::tail_section")]
    pub tail: TailSection,
    #[serde(default = "defaults::attack_section")]
    pub attack: AttackSection,
    #[serde(default = "defaults::filter_section")]
    pub filter: FilterSection,
    /// "fedavg", "multi_krum", "median", "trimmed_mean", or "two_layer".
    #[serde(default = "defaults::aggregator")]
    pub aggregator: String,
    #[serde(default = "defaults::trimmed_beta")]
    pub trimmed_beta: usize,
    pub rounds: usize,
    #[serde(default = "defaults::thinktank_section")]
    pub thinktank: ThinktankSection,
    #[serde(default = "defaults::master_seed")]
    pub master_seed: u64,
}

mod defaults {
    use super::*;

    pub fn mnist_dir() -> PathBuf {
        PathBuf::from("data/mnist")
    }
    pub fn train_images() -> PathBuf {
        PathBuf::from("train-images-idx3-ubyte")
    }
    pub fn train_labels() -> PathBuf {
        PathBuf::from("train-labels-idx1-ubyte")
    }
    pub fn test_images() -> PathBuf {
        PathBuf::from("t10k-images-idx3-ubyte")
    }
    pub fn test_labels() -> PathBuf {
        PathBuf::from("t10k-labels-idx1-ubyte")
    }
    pub fn synth_classes() -> usize {
        10
    }
    pub fn synth_features() -> usize {
        32
    }
    pub fn synth_train_per_class() -> usize {
        600
    }
    pub fn synth_test_per_class() -> usize {
        200
    }
    pub fn synth_spread() -> f64 {
        0.35
    }
    pub fn data_seed() -> u64 {
        7
    }
    pub fn arch_kind() -> String {
        "mlp1".into()
    }
    pub fn n_hidden() -> usize {
        64
    }
    pub fn learning_rate() -> f64 {
        0.1
    }
    pub fn batch_size() -> usize {
        32
    }
    pub fn local_epochs() -> usize {
        2
    }
    pub fn n_participants() -> usize {
        10
    }
    pub fn tail_classes() -> Vec<usize> {
        vec![0]
    }
    pub fn holder_fraction() -> f64 {
        0.2
    }
    pub fn volume_ratio() -> f64 {
        0.1
    }
    pub fn none_str() -> String {
        "none".into()
    }
    pub fn gaussian_sigma() -> f64 {
        0.1
    }
    pub fn scale_factor() -> f64 {
        10.0
    }
    pub fn vote_attack() -> String {
        "invert".into()
    }
    pub fn assumed_byzantine() -> usize {
        1
    }
    pub fn thinktank_mode() -> String {
        "balanced_random".into()
    }
    pub fn shard_size() -> usize {
        500
    }
    pub fn aggregator() -> String {
        "two_layer".into()
    }
    pub fn trimmed_beta() -> usize {
        1
    }
    pub fn master_seed() -> u64 {
        42
    }
    pub fn arch_section() -> ArchSection {
        ArchSection {
            kind: arch_kind(),
            n_hidden: n_hidden(),
        }
    }
    pub fn train_section() -> TrainSection {
        TrainSection {
            learning_rate: learning_rate(),
            batch_size: batch_size(),
            local_epochs: local_epochs(),
        }
    }
    pub fn tail_section() -> TailSection {
        TailSection {
            n_participants: n_participants(),
            tail_classes: tail_classes(),
            holder_fraction: holder_fraction(),
            volume_ratio: volume_ratio(),
            partition_seed: None,
        }
    }
    pub fn attack_section() -> AttackSection {
        AttackSection {
            byzantine_ids: Vec::new(),
            data_attack: none_str(),
            label_flip_mapping: None,
            model_attack: none_str(),
            gaussian_sigma: gaussian_sigma(),
            scale_factor: scale_factor(),
            vote_attack: vote_attack(),
        }
    }
    pub fn filter_section() -> FilterSection {
        FilterSection {
            assumed_byzantine: assumed_byzantine(),
            k_nearest: None,
            m_select: None,
        }
    }
    pub fn thinktank_section() -> ThinktankSection {
        ThinktankSection {
            mode: thinktank_mode(),
            shard_size: shard_size(),
        }
    }
}

impl RunConfig {
    /// Fill every derivable default and check constraints; the result
    /// serializes with no nulls except an unset explicit flip mapping.
    pub fn resolve(&mut self) -> Result<()> {
        let n = self.tail.n_participants;
        if self.rounds == 0 {
            return Err(Error::config("rounds", "must be >= 1"));
        }
        if n == 0 {
            return Err(Error::config("tail.n_participants", "must be >= 1"));
        }
        match self.data.kind.as_str() {
            "mnist" | "synth" => {}
            other => {
                return Err(Error::config(
                    "data.kind",
                    format!("unknown data source `{other}`"),
                ))
            }
        }
        match self.arch.kind.as_str() {
            "mlp1" | "softmax_linear" => {}
            other => {
                return Err(Error::config(
                    "arch.kind",
                    format!("unknown architecture `{other}`"),
                ))
            }
        }
        if self.arch.kind == "mlp1" && self.arch.n_hidden == 0 {
            return Err(Error::config("arch.n_hidden", "must be >= 1 for mlp1"));
        }
        if !(self.train.learning_rate > 0.0 && self.train.learning_rate.is_finite()) {
            return Err(Error::config("train.learning_rate", "must be positive"));
        }
        if self.train.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be >= 1"));
        }
        if self.train.local_epochs == 0 {
            return Err(Error::config("train.local_epochs", "must be >= 1"));
        }
        if !(self.tail.holder_fraction > 0.0 && self.tail.holder_fraction <= 1.0) {
            return Err(Error::config("tail.holder_fraction", "must be in (0, 1]"));
        }
        if !(self.tail.volume_ratio > 0.0 && self.tail.volume_ratio <= 1.0) {
            return Err(Error::config("tail.volume_ratio", "must be in (0, 1]"));
        }
        if self.tail.partition_seed.is_none() {
            self.tail.partition_seed = Some(seeding::mix(self.master_seed, "partition"));
        }
        if let Some(&id) = self.attack.byzantine_ids.iter().find(|&&id| id >= n) {
            return Err(Error::config(
                "attack.byzantine_ids",
                format!("participant {id} out of range for N = {n}"),
            ));
        }
        match self.attack.data_attack.as_str() {
            "none" | "label_flip" => {}
            other => {
                return Err(Error::config(
                    "attack.data_attack",
                    format!("unknown data attack `{other}`"),
                ))
            }
        }
        match self.attack.model_attack.as_str() {
            "none" | "sign_flip" | "gaussian" | "scale" => {}
            other => {
                return Err(Error::config(
                    "attack.model_attack",
                    format!("unknown model attack `{other}`"),
                ))
            }
        }
        match self.attack.vote_attack.as_str() {
            "honest" | "invert" | "always_yes" | "always_no" => {}
            other => {
                return Err(Error::config(
                    "attack.vote_attack",
                    format!("unknown vote attack `{other}`"),
                ))
            }
        }
        let needs_filter = matches!(self.aggregator.as_str(), "multi_krum" | "two_layer");
        if self.filter.k_nearest.is_none() {
            let f = self.filter.assumed_byzantine;
            if needs_filter && n < f + 3 {
                return Err(Error::config(
                    "filter.assumed_byzantine",
                    format!("Krum defaults need N >= f + 3 (N = {n}, f = {f})"),
                ));
            }
            self.filter.k_nearest = Some(n.saturating_sub(f + 2).max(1));
        }
        if self.filter.m_select.is_none() {
            let f = self.filter.assumed_byzantine;
            self.filter.m_select = Some(n.saturating_sub(f + 1).max(1));
        }
        let k = self.filter.k_nearest.unwrap();
        let m = self.filter.m_select.unwrap();
        if needs_filter {
            if k == 0 || k > n - 1 {
                return Err(Error::config(
                    "filter.k_nearest",
                    format!("must be in [1, {}]", n - 1),
                ));
            }
            if m == 0 || m >= n {
                return Err(Error::config(
                    "filter.m_select",
                    format!("must be in [1, {})", n),
                ));
            }
        }
        match self.aggregator.as_str() {
            "fedavg" | "multi_krum" | "median" | "trimmed_mean" | "two_layer" => {}
            other => {
                return Err(Error::config(
                    "aggregator",
                    format!("unknown aggregator `{other}`"),
                ))
            }
        }
        if self.aggregator == "trimmed_mean" && 2 * self.trimmed_beta >= n {
            return Err(Error::config(
                "trimmed_beta",
                format!("2*beta must be < N = {n}"),
            ));
        }
        match self.thinktank.mode.as_str() {
            "balanced_random" | "local_mirror" => {}
            other => {
                return Err(Error::config(
                    "thinktank.mode",
                    format!("unknown think-tank mode `{other}`"),
                ))
            }
        }
        if self.aggregator == "two_layer" && self.thinktank.shard_size == 0 {
            return Err(Error::config("thinktank.shard_size", "must be >= 1"));
        }
        Ok(())
    }

    pub fn aggregator_kind(&self) -> AggregatorKind {
        match self.aggregator.as_str() {
            "fedavg" => AggregatorKind::Fedavg,
            "multi_krum" => AggregatorKind::MultiKrum,
            "median" => AggregatorKind::Median,
            "trimmed_mean" => AggregatorKind::TrimmedMean {
                beta: self.trimmed_beta,
            },
            "two_layer" => AggregatorKind::TwoLayer,
            other => unreachable!("resolve() rejects aggregator `{other}`"),
        }
    }

    /// Load the train/test datasets this config points at.
    pub fn load_data(&self) -> Result<(Dataset, Dataset)> {
        match self.data.kind.as_str() {
            "mnist" => {
                let root = resolve_data_dir(&self.data.dir);
                let train = load_idx(
                    &root.join(&self.data.train_images),
                    &root.join(&self.data.train_labels),
                )?;
                let test = load_idx(
                    &root.join(&self.data.test_images),
                    &root.join(&self.data.test_labels),
                )?;
                unify_class_count(train, test)
            }
            "synth" => {
                let train = synth_blobs(
                    self.data.n_classes,
                    self.data.n_features,
                    self.data.train_per_class,
                    self.data.spread,
                    self.data.data_seed,
                )?;
                let test = synth_blobs(
                    self.data.n_classes,
                    self.data.n_features,
                    self.data.test_per_class,
                    self.data.spread,
                    seeding::mix(self.data.data_seed, "test"),
                )?;
                Ok((train, test))
            }
            other => Err(Error::config(
                "data.kind",
                format!("unknown data source `{other}`"),
            )),
        }
    }

    /// Translate into the library-level experiment description.
    pub fn to_experiment(&self, n_features: usize, n_classes: usize) -> Result<ExperimentConfig> {
        let arch = match self.arch.kind.as_str() {
            "softmax_linear" => Architecture::softmax_linear(n_features, n_classes),
            _ => Architecture::mlp1(n_features, self.arch.n_hidden, n_classes),
        };
        let data_attack = match self.attack.data_attack.as_str() {
            "none" => DataAttack::None,
            _ => DataAttack::LabelFlip {
                mapping: self
                    .attack
                    .label_flip_mapping
                    .clone()
                    .unwrap_or_else(|| byzantine::shift_mapping(n_classes)),
            },
        };
        let model_attack = match self.attack.model_attack.as_str() {
            "sign_flip" => ModelAttack::SignFlip,
            "gaussian" => ModelAttack::Gaussian {
                sigma: self.attack.gaussian_sigma,
            },
            "scale" => ModelAttack::Scale {
                factor: self.attack.scale_factor,
            },
            _ => ModelAttack::None,
        };
        let vote_attack = match self.attack.vote_attack.as_str() {
            "honest" => VoteAttack::Honest,
            "always_yes" => VoteAttack::AlwaysYes,
            "always_no" => VoteAttack::AlwaysNo,
            _ => VoteAttack::Invert,
        };
        let thinktank_mode = match self.thinktank.mode.as_str() {
            "local_mirror" => ShardMode::LocalMirror,
            _ => ShardMode::BalancedRandom,
        };
        Ok(ExperimentConfig {
            arch,
            train: TrainConfig {
                learning_rate: self.train.learning_rate,
                batch_size: self.train.batch_size,
                local_epochs: self.train.local_epochs,
                seed: 0,
            },
            tail_plan: TailPlan {
                n_participants: self.tail.n_participants,
                tail_classes: self.tail.tail_classes.iter().copied().collect(),
                tail_holder_fraction: self.tail.holder_fraction,
                tail_volume_ratio: self.tail.volume_ratio,
                seed: self
                    .tail
                    .partition_seed
                    .unwrap_or_else(|| seeding::mix(self.master_seed, "partition")),
            },
            attack: AttackConfig {
                byzantine_ids: self.attack.byzantine_ids.iter().copied().collect(),
                data_attack,
                model_attack,
                vote_attack,
            },
            filter: FilterConfig {
                k_nearest: self.filter.k_nearest.unwrap_or(1),
                m_select: self.filter.m_select.unwrap_or(1),
            },
            aggregator: self.aggregator_kind(),
            rounds: self.rounds,
            thinktank_mode,
            shard_size: self.thinktank.shard_size,
            master_seed: self.master_seed,
            vote_override: None,
        })
    }

    /// Content hash of the resolved config; independent of key order in
    /// the source file because serialization sorts keys.
    pub fn digest(&self) -> Result<String> {
        let value = serde_json::to_value(self)?;
        let canonical = serde_json::to_string(&value)?;
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        Ok(hex_digest(hasher))
    }
}

fn unify_class_count(train: Dataset, test: Dataset) -> Result<(Dataset, Dataset)> {
    if train.n_classes() == test.n_classes() {
        return Ok((train, test));
    }
    let n = train.n_classes().max(test.n_classes());
    let train = Dataset::new(train.features().clone(), train.labels().to_vec(), n)?;
    let test = Dataset::new(test.features().clone(), test.labels().to_vec(), n)?;
    Ok((train, test))
}

/// Relative dataset roots resolve against `$FEDTANK_DATA_DIR` when it is
/// set; absolute paths pass through untouched.
pub fn resolve_data_dir(dir: &Path) -> PathBuf {
    if dir.is_absolute() {
        return dir.to_path_buf();
    }
    match std::env::var_os(DATA_DIR_ENV) {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(dir),
        _ => dir.to_path_buf(),
    }
}

/// Parse a config file, apply `key=value` overrides, fill defaults, and
/// validate.
pub fn parse_config(path: &Path, overrides: &[String]) -> Result<RunConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
    parse_config_str(&text, overrides)
}

/// As [`parse_config`], from an in-memory JSON document.
pub fn parse_config_str(text: &str, overrides: &[String]) -> Result<RunConfig> {
    let mut value: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| Error::config("<config>", format!("invalid JSON: {e}")))?;
    for item in overrides {
        apply_override(&mut value, item)?;
    }
    let mut cfg = typed_config(value)?;
    cfg.resolve()?;
    Ok(cfg)
}

/// Deserialize with the offending key path attached to any error.
fn typed_config(value: serde_json::Value) -> Result<RunConfig> {
    let deserializer = value.clone();
    serde_path_to_error::deserialize(deserializer).map_err(|e| {
        let path = e.path().to_string();
        let key = if path.is_empty() || path == "." {
            "<config>".to_string()
        } else {
            path
        };
        Error::config(key, e.inner().to_string())
    })
}

fn apply_override(root: &mut serde_json::Value, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::config(item, "override must look like key=value"))?;
    let parsed: serde_json::Value = serde_json::from_str(raw)
        .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut cursor = root;
    let segments: Vec<&str> = key.split('.').collect();
    for (i, segment) in segments.iter().enumerate() {
        let map = cursor.as_object_mut().ok_or_else(|| {
            Error::config(key, format!("`{}` is not an object", segments[..i].join(".")))
        })?;
        if i + 1 == segments.len() {
            map.insert(segment.to_string(), parsed);
            return Ok(());
        }
        cursor = map
            .entry(segment.to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    unreachable!("split produces at least one segment")
}

// ---------------------------------------------------------------------------
// Metrics emission
// ---------------------------------------------------------------------------

/// Files written for one run, plus provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_digest: String,
    pub partition_digest: String,
    pub aggregator: String,
    pub started_at: String,
    pub finished_at: String,
    pub software_version: String,
    pub artifacts: Vec<String>,
}

pub const CSV_HEADER: &str =
    "round,aggregator,overall_acc,class0_acc,n_selected,byz_selected,votes_cast,votes_yes";

/// Render the per-round CSV exactly as emitted to disk.
pub fn render_csv(records: &[RoundRecord], aggregator: &str) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for rec in records {
        let class0 = rec
            .per_class
            .get(&0)
            .map_or(String::new(), |a| format!("{a:.6}"));
        let byz_selected = rec.byzantine_selected.values().filter(|&&s| s).count();
        let votes_yes = rec.ballots.iter().filter(|b| b.vote).count();
        let _ = writeln!(
            out,
            "{},{},{:.6},{},{},{},{},{}",
            rec.round,
            aggregator,
            rec.global_eval.overall_accuracy,
            class0,
            rec.n_selected(),
            byz_selected,
            rec.ballots.len(),
            votes_yes,
        );
    }
    out
}

/// Write rounds.csv, rounds.jsonl, and manifest.json into `out_dir`.
pub fn emit_metrics(
    records: &[RoundRecord],
    aggregator: &str,
    out_dir: &Path,
    config_digest: &str,
    partition_digest: &str,
    started_at: &str,
) -> Result<RunManifest> {
    if records.is_empty() {
        return Err(Error::EmptyInput("emit_metrics: records"));
    }
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("rounds.csv"), render_csv(records, aggregator))?;

    let mut jsonl = String::new();
    for rec in records {
        jsonl.push_str(&serde_json::to_string(rec)?);
        jsonl.push('\n');
    }
    fs::write(out_dir.join("rounds.jsonl"), jsonl)?;

    let manifest = RunManifest {
        config_digest: config_digest.to_string(),
        partition_digest: partition_digest.to_string(),
        aggregator: aggregator.to_string(),
        started_at: started_at.to_string(),
        finished_at: chrono::Utc::now().to_rfc3339(),
        software_version: env!("CARGO_PKG_VERSION").to_string(),
        artifacts: vec![
            "rounds.csv".into(),
            "rounds.jsonl".into(),
            "manifest.json".into(),
            "resolved_config.json".into(),
        ],
    };
    fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

/// Hash the per-participant datasets a run trains on (after any data
/// attack); equal digests mean byte-identical partitions.
pub fn partition_digest(participants: &[sim::Participant]) -> String {
    let mut hasher = Sha256::new();
    for (i, p) in participants.iter().enumerate() {
        hasher.update((i as u64).to_le_bytes());
        hasher.update((p.data.len() as u64).to_le_bytes());
        for &label in p.data.labels() {
            hasher.update((label as u64).to_le_bytes());
        }
        for v in p.data.features() {
            hasher.update(v.to_bits().to_le_bytes());
        }
    }
    hex_digest(hasher)
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

#[derive(Debug, Parser)]
#[command(name = "fedtank", version, about = "Byzantine-robust federated learning simulator")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment and write metrics into --out.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override a config key, e.g. --set train.learning_rate=0.05.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        /// Override master_seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        quiet: bool,
    },
    /// Run several aggregators over the identical partition and seeds.
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated aggregator list, e.g. fedavg,multi_krum,two_layer.
        #[arg(long)]
        aggregators: String,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        quiet: bool,
    },
    /// Run the built-in oracle and property suite.
    Verify {
        #[arg(long)]
        quiet: bool,
    },
}

/// Entry point for the `fedtank` binary; returns the process exit code.
pub fn run_command<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // Clap prints its own help/version through this path.
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            set,
            out,
            seed,
            quiet,
        } => {
            let cfg = load_config(&config, &set, seed)?;
            run_single(&cfg, &out, quiet)?;
            Ok(())
        }
        Command::Compare {
            config,
            aggregators,
            set,
            out,
            seed,
            quiet,
        } => {
            let cfg = load_config(&config, &set, seed)?;
            run_compare(&cfg, &aggregators, &out, quiet)
        }
        Command::Verify { quiet } => crate::cli::verify::run(quiet),
    }
}

fn load_config(path: &Path, set: &[String], seed: Option<u64>) -> Result<RunConfig> {
    let mut overrides = set.to_vec();
    if let Some(seed) = seed {
        overrides.push(format!("master_seed={seed}"));
    }
    parse_config(path, &overrides)
}

/// A completed experiment run, ready to be written out or inspected.
#[derive(Debug, Clone)]
pub struct Execution {
    pub records: Vec<RoundRecord>,
    pub aggregator: String,
    pub config_digest: String,
    pub partition_digest: String,
    pub started_at: String,
}

/// Load data, run the experiment a resolved config describes, and keep the
/// record stream in memory.
pub fn execute(cfg: &RunConfig, quiet: bool) -> Result<Execution> {
    let started_at = chrono::Utc::now().to_rfc3339();
    let (train, test) = cfg.load_data()?;
    let experiment = cfg.to_experiment(train.n_features(), train.n_classes())?;
    experiment.validate(train.n_classes())?;

    let participants = sim::build_participants(&experiment, &train)?;
    let partition_digest = partition_digest(&participants);

    if !quiet {
        eprintln!(
            "fedtank run: aggregator={} N={} rounds={} train={} test={}",
            cfg.aggregator,
            experiment.n_participants(),
            experiment.rounds,
            train.len(),
            test.len()
        );
    }
    let records = sim::run_experiment(&experiment, &train, &test)?;
    if !quiet {
        for rec in &records {
            let class0 = rec.per_class.get(&0).copied().unwrap_or(f64::NAN);
            eprintln!(
                "round {:>3}: overall={:.6} class0={:.6} selected={} byz_selected={}",
                rec.round,
                rec.global_eval.overall_accuracy,
                class0,
                rec.n_selected(),
                rec.byzantine_selected.values().filter(|&&s| s).count(),
            );
        }
    }
    Ok(Execution {
        records,
        aggregator: cfg.aggregator.clone(),
        config_digest: cfg.digest()?,
        partition_digest,
        started_at,
    })
}

/// Write resolved_config.json plus the metrics files for one execution.
pub fn write_outputs(execution: &Execution, cfg: &RunConfig, out_dir: &Path) -> Result<RunManifest> {
    fs::create_dir_all(out_dir)?;
    fs::write(
        out_dir.join("resolved_config.json"),
        serde_json::to_string_pretty(cfg)?,
    )?;
    emit_metrics(
        &execution.records,
        &execution.aggregator,
        out_dir,
        &execution.config_digest,
        &execution.partition_digest,
        &execution.started_at,
    )
}

/// Execute one resolved config and write its outputs; returns the manifest.
pub fn run_single(cfg: &RunConfig, out_dir: &Path, quiet: bool) -> Result<RunManifest> {
    let execution = execute(cfg, quiet)?;
    write_outputs(&execution, cfg, out_dir)
}

/// Apply one `key=value` override to an already-resolved config.
pub fn override_config(cfg: &RunConfig, assignment: &str) -> Result<RunConfig> {
    let mut value = serde_json::to_value(cfg)?;
    apply_override(&mut value, assignment)?;
    let mut out = typed_config(value)?;
    out.resolve()?;
    Ok(out)
}

fn run_compare(cfg: &RunConfig, aggregators: &str, out_dir: &Path, quiet: bool) -> Result<()> {
    let names: Vec<&str> = aggregators
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    if names.is_empty() {
        return Err(Error::invalid("compare: --aggregators is empty"));
    }
    let mut digests = Vec::new();
    for name in &names {
        let mut variant = cfg.clone();
        variant.aggregator = name.to_string();
        variant.filter.k_nearest = cfg.filter.k_nearest;
        variant.filter.m_select = cfg.filter.m_select;
        variant.resolve()?;
        let manifest = run_single(&variant, &out_dir.join(name), quiet)?;
        digests.push((name.to_string(), manifest.partition_digest.clone()));
    }
    let first = &digests[0].1;
    for (name, digest) in &digests {
        if digest != first {
            return Err(Error::invalid(format!(
                "compare: partition digest for `{name}` diverged"
            )));
        }
    }
    if !quiet {
        eprintln!(
            "compare: {} aggregators share partition digest {}",
            names.len(),
            first
        );
    }
    Ok(())
}

pub mod verify;

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_config() -> String {
        r#"{"data": {"kind": "synth"}, "aggregator": "fedavg", "rounds": 1}"#.to_string()
    }

    #[test]
    fn minimal_config_fills_documented_defaults() {
        let cfg = parse_config_str(&minimal_config(), &[]).unwrap();
        assert_eq!(cfg.aggregator, "fedavg");
        assert_eq!(cfg.rounds, 1);
        assert_eq!(cfg.tail.n_participants, 10);
        assert_eq!(cfg.tail.tail_classes, vec![0]);
        assert_eq!(cfg.train.batch_size, 32);
        assert_eq!(cfg.thinktank.mode, "balanced_random");
        // Krum defaults for N = 10, f = 1.
        assert_eq!(cfg.filter.k_nearest, Some(7));
        assert_eq!(cfg.filter.m_select, Some(8));
        assert!(cfg.tail.partition_seed.is_some());
    }

    #[test]
    fn overrides_apply_last() {
        let cfg = parse_config_str(
            &minimal_config(),
            &["train.learning_rate=0.05".into(), "rounds=3".into()],
        )
        .unwrap();
        assert_eq!(cfg.train.learning_rate, 0.05);
        assert_eq!(cfg.rounds, 3);
    }

    #[test]
    fn string_overrides_do_not_need_quotes() {
        let cfg = parse_config_str(&minimal_config(), &["aggregator=median".into()]).unwrap();
        assert_eq!(cfg.aggregator, "median");
    }

    #[test]
    fn zero_rounds_is_rejected_by_key_name() {
        let err = parse_config_str(&minimal_config(), &["rounds=0".into()]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("rounds"), "{msg}");
    }

    #[test]
    fn unknown_keys_are_named() {
        let err =
            parse_config_str(r#"{"data": {"kind": "synth"}, "rounds": 1, "rouns": 2}"#, &[])
                .unwrap_err();
        assert!(err.to_string().contains("rouns"), "{err}");
    }

    #[test]
    fn type_mismatch_is_reported() {
        let err = parse_config_str(
            r#"{"data": {"kind": "synth"}, "rounds": "many"}"#,
            &[],
        )
        .unwrap_err();
        assert!(err.to_string().contains("rounds"), "{err}");
    }

    #[test]
    fn m_select_constraint_names_the_key() {
        let err = parse_config_str(
            &minimal_config(),
            &["aggregator=multi_krum".into(), "filter.m_select=10".into()],
        )
        .unwrap_err();
        assert!(err.to_string().contains("m_select"), "{err}");
    }

    #[test]
    fn config_roundtrip_is_a_fixed_point() {
        let cfg = parse_config_str(&minimal_config(), &["aggregator=two_layer".into()]).unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let again = parse_config_str(&text, &[]).unwrap();
        assert_eq!(cfg, again);
        let third = parse_config_str(&serde_json::to_string(&again).unwrap(), &[]).unwrap();
        assert_eq!(again, third);
    }

    #[test]
    fn digest_is_stable_under_key_reordering() {
        let a = parse_config_str(
            r#"{"rounds": 2, "aggregator": "fedavg", "data": {"kind": "synth"}}"#,
            &[],
        )
        .unwrap();
        let b = parse_config_str(
            r#"{"data": {"kind": "synth"}, "aggregator": "fedavg", "rounds": 2}"#,
            &[],
        )
        .unwrap();
        assert_eq!(a.digest().unwrap(), b.digest().unwrap());
    }

    #[test]
    fn digest_changes_with_content() {
        let a = parse_config_str(&minimal_config(), &[]).unwrap();
        let b = parse_config_str(&minimal_config(), &["rounds=2".into()]).unwrap();
        assert_ne!(a.digest().unwrap(), b.digest().unwrap());
    }

    #[test]
    fn csv_shape_and_precision() {
        let cfg = parse_config_str(
            &minimal_config(),
            &[
                "data.train_per_class=30".into(),
                "data.test_per_class=10".into(),
                "data.n_classes=3".into(),
                "data.n_features=6".into(),
                "tail.n_participants=4".into(),
                "tail.tail_classes=[]".into(),
                "rounds=2".into(),
                "arch.kind=softmax_linear".into(),
            ],
        )
        .unwrap();
        let (train, test) = cfg.load_data().unwrap();
        let exp = cfg.to_experiment(train.n_features(), train.n_classes()).unwrap();
        let records = sim::run_experiment(&exp, &train, &test).unwrap();
        let csv = render_csv(&records, &cfg.aggregator);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3, "header + one line per round");
        assert_eq!(lines[0], CSV_HEADER);
        for (i, line) in lines[1..].iter().enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields.len(), 8);
            assert_eq!(fields[0], i.to_string());
            assert_eq!(fields[1], "fedavg");
            // Re-parsed accuracy matches the record to printed precision.
            let parsed: f64 = fields[2].parse().unwrap();
            assert!((parsed - records[i].global_eval.overall_accuracy).abs() <= 5e-7);
            // fedavg selects everyone.
            assert_eq!(fields[4], "4");
            assert_eq!(fields[6], "0");
        }
    }

    #[test]
    fn resolve_data_dir_honors_env_only_for_relative() {
        assert_eq!(
            resolve_data_dir(Path::new("/abs/path")),
            PathBuf::from("/abs/path")
        );
    }
}
