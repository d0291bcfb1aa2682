//! Dataset loading and model construction shared by the subcommands.

use std::path::Path;

use peft_forge::data::{
    generate_synthetic, read_corpus, read_qrels, read_queries, read_triples, read_vocab, Corpus, Qrels, Query, Triple,
};
use peft_forge::ranking::RankingModel;
use peft_forge::transformer::Checkpoint;
use peft_forge::{Encoder, EncoderConfig};

use crate::config::{DataSource, ExperimentConfig};
use crate::failure::Failure;

pub struct Dataset {
    pub corpus: Corpus,
    pub train_queries: Vec<Query>,
    pub dev_queries: Vec<Query>,
    pub qrels: Qrels,
    /// Triples of the training queries.
    pub triples: Vec<Triple>,
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset, Failure> {
    match &cfg.data {
        DataSource::Synthetic { spec, dev_queries } => {
            let mut syn = generate_synthetic(spec)?;
            let dev = syn.queries.split_off(syn.queries.len() - dev_queries);
            let train = syn.queries;
            let triples = syn.triples.into_iter().filter(|t| train.iter().any(|q| q.id == t.qid)).collect();
            Ok(Dataset { corpus: syn.corpus, train_queries: train, dev_queries: dev, qrels: syn.qrels, triples })
        }
        DataSource::Files(f) => {
            let vocab = read_vocab(&f.vocab)?;
            let train_queries = read_queries(&f.train_queries, &vocab)?;
            let dev_queries = read_queries(&f.dev_queries, &vocab)?;
            Ok(Dataset {
                corpus: read_corpus(&f.corpus, vocab)?,
                train_queries,
                dev_queries,
                qrels: read_qrels(&f.qrels)?,
                triples: read_triples(&f.triples)?,
            })
        }
    }
}

/// Vocabulary size implied by the data source.
pub fn data_vocab_size(cfg: &ExperimentConfig) -> Result<usize, Failure> {
    match &cfg.data {
        DataSource::Synthetic { spec, .. } => Ok(spec.vocab_size),
        DataSource::Files(f) => Ok(read_vocab(&f.vocab)?.len()),
    }
}

pub fn encoder_config(cfg: &ExperimentConfig, vocab_size: usize) -> Result<EncoderConfig, Failure> {
    let e = &cfg.encoder;
    if let Some(v) = e.vocab_size {
        if v != vocab_size {
            return Err(Failure::Usage(format!(
                "encoder.vocab_size {v} does not match the data vocabulary of {vocab_size}"
            )));
        }
    }
    let mut enc = EncoderConfig::new(e.d_model, e.n_heads, e.n_layers, vocab_size, e.max_seq_len);
    if let Some(f) = e.d_ffn {
        enc.d_ffn = f;
    }
    enc.validate()?;
    Ok(enc)
}

/// Seed of the tuning modules, kept apart from the backbone seed.
pub fn module_seed(cfg: &ExperimentConfig) -> u64 {
    cfg.seed.wrapping_add(1)
}

fn read_checkpoint(path: &Path) -> Result<Checkpoint<f32>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    Checkpoint::parse(&text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn check_header(ck: &Checkpoint<f32>, enc: &EncoderConfig, path: &Path) -> Result<(), Failure> {
    for (k, v) in enc.to_pairs() {
        if let Some(saved) = ck.get(k) {
            if saved != v {
                return Err(Failure::Data(format!(
                    "{}: checkpoint has {k} = {saved} but the config gives {v}",
                    path.display()
                )));
            }
        }
    }
    Ok(())
}

/// Random backbone with the configured tuning installed, then overwritten
/// by whichever tensors `train.init_checkpoint` holds.
pub fn build_model(cfg: &ExperimentConfig, enc: &EncoderConfig) -> Result<RankingModel<f32>, Failure> {
    let encoder = Encoder::random(enc.clone(), cfg.encoder.init_std, cfg.seed)?;
    let mut model = RankingModel::new(encoder, cfg.architecture)?;
    model.install(&cfg.tuning, module_seed(cfg))?;
    if let Some(path) = &cfg.init_checkpoint {
        let ck = read_checkpoint(path)?;
        check_header(&ck, enc, path)?;
        let n = ck
            .load_matching(model.encoder_mut().store_mut())
            .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
        log::info!("initialized {n} tensors from {}", path.display());
    }
    Ok(model)
}

/// Rebuilds the configured model and loads every tensor from `path`.
pub fn load_model(cfg: &ExperimentConfig, enc: &EncoderConfig, path: &Path) -> Result<RankingModel<f32>, Failure> {
    let ck = read_checkpoint(path)?;
    check_header(&ck, enc, path)?;
    for (key, want) in [("architecture", cfg.architecture.name().to_string()), ("tuning", cfg.tuning.to_string())] {
        if let Some(saved) = ck.get(key) {
            if saved != want {
                return Err(Failure::Data(format!(
                    "{}: checkpoint has {key} = {saved} but the config gives {want}",
                    path.display()
                )));
            }
        }
    }
    let encoder = Encoder::random(enc.clone(), cfg.encoder.init_std, cfg.seed)?;
    let mut model = RankingModel::new(encoder, cfg.architecture)?;
    model.install(&cfg.tuning, module_seed(cfg))?;
    ck.load_into(model.encoder_mut().store_mut()).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    Ok(model)
}

pub fn checkpoint_header(model: &RankingModel<f32>) -> Vec<(String, String)> {
    let mut header: Vec<(String, String)> =
        model.encoder().config().to_pairs().into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    header.push(("architecture".into(), model.architecture().name().into()));
    if let Some(t) = model.tuning() {
        header.push(("tuning".into(), t.to_string()));
    }
    header
}

pub fn save_model(model: &RankingModel<f32>, path: &Path) -> Result<(), Failure> {
    let text = Checkpoint::render(&checkpoint_header(model), model.encoder().store());
    std::fs::write(path, text).map_err(|e| crate::failure::io_failure(path, e))
}
