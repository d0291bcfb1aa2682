//! Flat `key = value` experiment files with `[section]` headers.
//!
//! Keys are addressed as `section.key`; keys above the first header have no
//! prefix. `#` starts a comment.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use peft_forge::data::SyntheticSpec;
use peft_forge::pet::Tuning;
use peft_forge::ranking::Architecture;
use peft_forge::training::{default_lr, TrainConfig};
use sha2::{Digest, Sha256};

use crate::failure::Failure;

pub const SEED_ENV: &str = "PEFT_FORGE_SEED";

const KNOWN_KEYS: &[&str] = &[
    "seed",
    "output_dir",
    "encoder.d_model",
    "encoder.n_heads",
    "encoder.n_layers",
    "encoder.d_ffn",
    "encoder.max_seq_len",
    "encoder.vocab_size",
    "encoder.init_std",
    "model.architecture",
    "model.tuning",
    "model.budget",
    "train.lr",
    "train.epochs",
    "train.batch_size",
    "train.max_steps",
    "train.objective",
    "train.init_checkpoint",
    "train.probe_every",
    "train.probe_until",
    "train.select_best",
    "data.n_topics",
    "data.n_queries",
    "data.n_docs",
    "data.vocab_size",
    "data.query_len",
    "data.doc_len",
    "data.topic_purity",
    "data.grade2_fraction",
    "data.negatives",
    "data.seed",
    "data.dev_queries",
    "data.vocab",
    "data.corpus",
    "data.train_queries",
    "data.dev_query_file",
    "data.qrels",
    "data.triples",
    "eval.depth",
    "eval.metrics",
];

/// Raw keys of an experiment file after overrides.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
    base_dir: PathBuf,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, Failure> {
        let mut values = BTreeMap::new();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| Failure::Usage(format!("config line {}: unterminated section header", i + 1)))?;
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Failure::Usage(format!("config line {}: expected `key = value`, got {line:?}", i + 1))
            })?;
            let key = qualify(&section, k.trim());
            if values.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(Failure::Usage(format!("config line {}: duplicate key {key}", i + 1)));
            }
        }
        let cfg = Self { values, base_dir: PathBuf::new() };
        cfg.check_keys()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    fn check_keys(&self) -> Result<(), Failure> {
        match self.values.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
            Some(k) => Err(Failure::Usage(format!("unknown config key {k}"))),
            None => Ok(()),
        }
    }

    /// Applies `section.key=value` overrides.
    pub fn apply_overrides(&mut self, sets: &[String]) -> Result<(), Failure> {
        for s in sets {
            let (k, v) =
                s.split_once('=').ok_or_else(|| Failure::Usage(format!("--set expects key=value, got {s:?}")))?;
            self.values.insert(k.trim().to_string(), v.trim().to_string());
        }
        self.check_keys()
    }

    /// Overrides `seed` from the environment variable, if set.
    pub fn apply_env(&mut self) -> Result<(), Failure> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            v.trim()
                .parse::<u64>()
                .map_err(|_| Failure::Usage(format!("{SEED_ENV} must be an unsigned integer, got {v:?}")))?;
            self.values.insert("seed".into(), v.trim().to_string());
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(key.to_string(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn num<V: FromStr>(&self, key: &str, default: V) -> Result<V, Failure> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| Failure::Usage(format!("bad value {v:?} for {key}"))),
        }
    }

    fn opt_num<V: FromStr>(&self, key: &str) -> Result<Option<V>, Failure> {
        self.get(key).map(|v| v.parse().map_err(|_| Failure::Usage(format!("bad value {v:?} for {key}")))).transpose()
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(|p| self.base_dir.join(p))
    }

    /// Canonical `key = value` text, one line per key in sorted order.
    pub fn render(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// First eight hex digits of the SHA-256 of every key except `seed`.
    pub fn hash8(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.values.iter().filter(|(k, _)| k.as_str() != "seed") {
            h.update(format!("{k} = {v}\n").as_bytes());
        }
        h.finalize().iter().take(4).map(|b| format!("{b:02x}")).collect()
    }
}

fn qualify(section: &str, key: &str) -> String {
    if section.is_empty() {
        key.to_string()
    } else {
        format!("{section}.{key}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    Ranking,
    InverseCloze,
}

impl FromStr for Objective {
    type Err = Failure;

    fn from_str(s: &str) -> Result<Self, Failure> {
        match s.trim() {
            "ranking" => Ok(Objective::Ranking),
            "inverse-cloze" | "inverse_cloze" => Ok(Objective::InverseCloze),
            other => Err(Failure::Usage(format!("objective must be ranking or inverse-cloze, got {other:?}"))),
        }
    }
}

/// Encoder dimensions before the vocabulary size is known.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderDims {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ffn: Option<usize>,
    pub max_seq_len: usize,
    pub vocab_size: Option<usize>,
    pub init_std: f64,
}

/// Files of a dataset on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct DataFiles {
    pub vocab: PathBuf,
    pub corpus: PathBuf,
    pub train_queries: PathBuf,
    pub dev_queries: PathBuf,
    pub qrels: PathBuf,
    pub triples: PathBuf,
}

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    /// Generated data; the last `dev_queries` queries are held out.
    Synthetic {
        spec: SyntheticSpec,
        dev_queries: usize,
    },
    Files(DataFiles),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub encoder: EncoderDims,
    pub architecture: Architecture,
    pub tuning: Tuning,
    /// Trainable-parameter budget as a fraction of the backbone, used by
    /// budget-split sweeps.
    pub budget: Option<f64>,
    pub train: TrainConfig,
    pub objective: Objective,
    /// Negatives per example for generated triples and inverse-cloze
    /// examples.
    pub negatives: usize,
    pub init_checkpoint: Option<PathBuf>,
    pub data: DataSource,
    pub eval_depth: usize,
    pub metrics: Vec<Metric>,
    pub raw: RawConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetricKind {
    Mrr,
    Ndcg,
    Recall,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Metric {
    pub kind: MetricKind,
    pub k: usize,
}

impl FromStr for Metric {
    type Err = Failure;

    fn from_str(s: &str) -> Result<Self, Failure> {
        let bad = || Failure::Usage(format!("metric must look like mrr@10, ndcg@10 or recall@1000, got {s:?}"));
        let (name, k) = s.trim().split_once('@').ok_or_else(bad)?;
        let kind = match name.to_ascii_lowercase().as_str() {
            "mrr" => MetricKind::Mrr,
            "ndcg" => MetricKind::Ndcg,
            "recall" | "r" => MetricKind::Recall,
            _ => return Err(bad()),
        };
        let k: usize = k.parse().map_err(|_| bad())?;
        if k == 0 {
            return Err(Failure::Usage(format!("metric cutoff must be at least 1 in {s:?}")));
        }
        Ok(Metric { kind, k })
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self.kind {
            MetricKind::Mrr => "MRR",
            MetricKind::Ndcg => "nDCG",
            MetricKind::Recall => "R",
        };
        write!(f, "{name}@{}", self.k)
    }
}

pub fn parse_metrics(s: &str) -> Result<Vec<Metric>, Failure> {
    s.split([',', ' ']).filter(|p| !p.trim().is_empty()).map(str::parse).collect()
}

impl ExperimentConfig {
    pub fn from_raw(raw: RawConfig) -> Result<Self, Failure> {
        let r = &raw;
        let seed = r.num("seed", 0u64)?;
        let tuning: Tuning = r.get("model.tuning").unwrap_or("full").parse().map_err(Failure::from)?;
        let architecture: Architecture = r.get("model.architecture").unwrap_or("bi").parse().map_err(Failure::from)?;
        let defaults = TrainConfig::default();
        let train = TrainConfig {
            epochs: r.num("train.epochs", defaults.epochs)?,
            batch_size: r.num("train.batch_size", defaults.batch_size)?,
            lr: r.num("train.lr", default_lr(&tuning))?,
            max_steps: r.opt_num("train.max_steps")?,
            probe_every: r.num("train.probe_every", 0)?,
            probe_until: r.opt_num("train.probe_until")?,
            seed,
            select_best: r.num("train.select_best", true)?,
            eval_depth: r.num("eval.depth", defaults.eval_depth)?,
        };
        train.validate().map_err(Failure::from)?;
        let data = if r.get("data.corpus").is_some() {
            let need =
                |k: &str| r.path(k).ok_or_else(|| Failure::Usage(format!("data.corpus is set but {k} is missing")));
            DataSource::Files(DataFiles {
                vocab: need("data.vocab")?,
                corpus: need("data.corpus")?,
                train_queries: need("data.train_queries")?,
                dev_queries: need("data.dev_query_file")?,
                qrels: need("data.qrels")?,
                triples: need("data.triples")?,
            })
        } else {
            let d = SyntheticSpec::default();
            let spec = SyntheticSpec {
                n_topics: r.num("data.n_topics", d.n_topics)?,
                n_queries: r.num("data.n_queries", d.n_queries)?,
                n_docs: r.num("data.n_docs", d.n_docs)?,
                vocab_size: r.num("data.vocab_size", d.vocab_size)?,
                query_len: r.num("data.query_len", d.query_len)?,
                doc_len: r.num("data.doc_len", d.doc_len)?,
                topic_purity: r.num("data.topic_purity", d.topic_purity)?,
                grade2_fraction: r.num("data.grade2_fraction", d.grade2_fraction)?,
                negatives: r.num("data.negatives", d.negatives)?,
                seed: r.num("data.seed", 0)?,
            };
            spec.validate().map_err(Failure::from)?;
            let dev_queries = r.num("data.dev_queries", spec.n_queries / 6)?;
            if dev_queries > spec.n_queries {
                return Err(Failure::Usage(format!(
                    "data.dev_queries {dev_queries} exceeds data.n_queries {}",
                    spec.n_queries
                )));
            }
            DataSource::Synthetic { spec, dev_queries }
        };
        if let DataSource::Files(f) = &data {
            for p in [&f.vocab, &f.corpus, &f.train_queries, &f.dev_queries, &f.qrels, &f.triples] {
                if !p.exists() {
                    return Err(Failure::Data(format!("{}: file not found", p.display())));
                }
            }
        }
        let budget = r.opt_num::<f64>("model.budget")?;
        if let Some(b) = budget {
            if !(b > 0.0 && b < 1.0) {
                return Err(Failure::Usage(format!("model.budget must be in (0, 1), got {b}")));
            }
        }
        Ok(Self {
            seed,
            output_dir: r.path("output_dir").unwrap_or_else(|| r.base_dir.join("runs")),
            encoder: EncoderDims {
                d_model: r.num("encoder.d_model", 64)?,
                n_heads: r.num("encoder.n_heads", 2)?,
                n_layers: r.num("encoder.n_layers", 2)?,
                d_ffn: r.opt_num("encoder.d_ffn")?,
                max_seq_len: r.num("encoder.max_seq_len", 64)?,
                vocab_size: r.opt_num("encoder.vocab_size")?,
                init_std: r.num("encoder.init_std", 0.02)?,
            },
            architecture,
            tuning,
            budget,
            train,
            objective: r.get("train.objective").unwrap_or("ranking").parse()?,
            negatives: r.num("data.negatives", SyntheticSpec::default().negatives)?,
            init_checkpoint: r.path("train.init_checkpoint"),
            data,
            eval_depth: r.num("eval.depth", 1000)?,
            metrics: parse_metrics(r.get("eval.metrics").unwrap_or("mrr@10,ndcg@10,recall@1000"))?,
            raw,
        })
    }

    /// `run-<hash8>-s<seed>` under the output directory.
    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(format!("run-{}-s{}", self.raw.hash8(), self.seed))
    }
}

/// Reads a config file (or starts empty), then applies the seed variable
/// and `--set` overrides, in that order.
pub fn load_config(path: Option<&Path>, sets: &[String]) -> Result<ExperimentConfig, Failure> {
    let mut raw = match path {
        Some(p) => RawConfig::load(p)?,
        None => RawConfig::default(),
    };
    raw.apply_env()?;
    raw.apply_overrides(sets)?;
    ExperimentConfig::from_raw(raw)
}
