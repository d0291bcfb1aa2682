use std::io::Write;
use std::path::{Path, PathBuf};

use peft_forge::data::{render_texts, render_triples, write_qrels, write_run, write_text, Qrels, Query, Run};
use peft_forge::iaa::budget_split_count;
use peft_forge::pet::Tuning;
use peft_forge::ranking::{examples_from_triples, mrr_at_k, ndcg_at_k, recall_at_k};
use peft_forge::training::{inverse_cloze_examples, mine_hard_negatives, train, DevSet, TrainReport};
use peft_forge::EncoderConfig;

use crate::config::{DataSource, ExperimentConfig, Metric, MetricKind, Objective};
use crate::failure::{io_failure, Failure};
use crate::setup::{build_model, data_vocab_size, encoder_config, load_dataset, load_model, save_model};

pub(crate) fn w(e: std::io::Error) -> Failure {
    Failure::Other(e.to_string())
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))
}

/// What `train` leaves behind.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub dir: PathBuf,
    pub report: TrainReport,
}

/// Trains the configured model and writes `config.txt`, `report.txt` and
/// `checkpoint.txt` (best dev epoch) into `dir`.
pub fn train_cmd(cfg: &ExperimentConfig, dir: &Path, out: &mut dyn Write) -> Result<TrainOutcome, Failure> {
    create_dir(dir)?;
    write_text(&dir.join("config.txt"), &cfg.raw.render())?;
    let data = load_dataset(cfg)?;
    let enc = encoder_config(cfg, data.corpus.vocab().len())?;
    let mut model = build_model(cfg, &enc)?;
    let (examples, dev) = match cfg.objective {
        Objective::Ranking => {
            let ex = examples_from_triples(&data.triples, &data.train_queries, &data.corpus)?;
            let dev = (!data.dev_queries.is_empty()).then_some(DevSet {
                queries: &data.dev_queries,
                corpus: &data.corpus,
                qrels: &data.qrels,
            });
            (ex, dev)
        }
        Objective::InverseCloze => (inverse_cloze_examples(&data.corpus, cfg.negatives, cfg.seed)?, None),
    };
    log::info!(
        "training {} {} on {} examples, {} trainable parameters",
        cfg.architecture.name(),
        cfg.tuning,
        examples.len(),
        model.encoder().store().trainable_count()
    );
    let mut report = train(&mut model, &examples, dev, &cfg.train)?;
    report.meta = vec![
        ("architecture".into(), cfg.architecture.name().into()),
        ("tuning".into(), cfg.tuning.to_string()),
        ("lr".into(), format!("{:e}", cfg.train.lr)),
        ("seed".into(), cfg.seed.to_string()),
        ("trainable".into(), model.encoder().store().trainable_count().to_string()),
    ];
    write_text(&dir.join("report.txt"), &report.render())?;
    save_model(&model, &dir.join("checkpoint.txt"))?;
    match report.best_metrics() {
        Some(m) => writeln!(
            out,
            "dev MRR@10 {:.4} nDCG@10 {:.4} R@1000 {:.4} (epoch {})",
            m.mrr10,
            m.ndcg10,
            m.recall1000,
            report.best_epoch.unwrap_or(0)
        )
        .map_err(w)?,
        None => writeln!(out, "no dev evaluation").map_err(w)?,
    }
    if let Some(last) = report.steps.last() {
        writeln!(out, "final loss {:.6} after {} steps", last.loss, last.step).map_err(w)?;
    }
    writeln!(out, "artifacts in {}", dir.display()).map_err(w)?;
    Ok(TrainOutcome { dir: dir.to_path_buf(), report })
}

pub fn metric_value(run: &Run, qrels: &Qrels, m: Metric) -> f64 {
    match m.kind {
        MetricKind::Mrr => mrr_at_k(run, qrels, m.k),
        MetricKind::Ndcg => ndcg_at_k(run, qrels, m.k),
        MetricKind::Recall => recall_at_k(run, qrels, m.k),
    }
}

/// Ranks the dev queries with the checkpoint, writes the run file and
/// prints each metric. Returns the metric values.
pub fn eval_cmd(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    run_path: &Path,
    out: &mut dyn Write,
) -> Result<Vec<(Metric, f64)>, Failure> {
    let data = load_dataset(cfg)?;
    let enc = encoder_config(cfg, data.corpus.vocab().len())?;
    let model = load_model(cfg, &enc, checkpoint)?;
    if data.dev_queries.is_empty() {
        writeln!(out, "no queries").map_err(w)?;
        return Ok(Vec::new());
    }
    let depth = cfg.metrics.iter().map(|m| m.k).max().unwrap_or(0).max(cfg.eval_depth);
    let run = model.rank(&data.dev_queries, &data.corpus, depth, "peft-forge")?;
    if let Some(parent) = run_path.parent() {
        create_dir(parent)?;
    }
    write_run(run_path, &run)?;
    let mut values = Vec::new();
    for &m in &cfg.metrics {
        let v = metric_value(&run, &data.qrels, m);
        writeln!(out, "{m} {v}").map_err(w)?;
        values.push((m, v));
    }
    writeln!(out, "run written to {}", run_path.display()).map_err(w)?;
    Ok(values)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    Lr,
    BudgetSplit,
}

impl std::str::FromStr for SweepAxis {
    type Err = Failure;

    fn from_str(s: &str) -> Result<Self, Failure> {
        match s {
            "lr" => Ok(SweepAxis::Lr),
            "budget_split" | "budget-split" => Ok(SweepAxis::BudgetSplit),
            other => Err(Failure::Usage(format!("sweep axis must be lr or budget_split, got {other:?}"))),
        }
    }
}

/// The tuning a budget-split sweep trains at `split`: the configured IAA
/// variant and inside module, resized to the configured budget (or the
/// configured tuning's own size) with `split` of it on the aside side.
pub fn expand_budget_split(cfg: &ExperimentConfig, enc: &EncoderConfig, split: f64) -> Result<Tuning, Failure> {
    let Tuning::Iaa(iaa) = &cfg.tuning else {
        return Err(Failure::Usage(format!("budget_split sweeps need an IAA tuning, got {}", cfg.tuning)));
    };
    let max_count = match cfg.budget {
        Some(b) => (b * enc.backbone_param_count() as f64).floor() as usize,
        None => cfg.tuning.count(enc).total,
    };
    let (r, ar) = budget_split_count(iaa.variant, iaa.inside, max_count, split, enc)?;
    Ok(Tuning::Iaa(peft_forge::iaa::IaaConfig { r, ar, ..iaa.clone() }))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub value: String,
    pub tuning: String,
    pub final_loss: Option<f64>,
    pub dev_mrr10: Option<f64>,
    pub error: Option<String>,
}

/// One training run per value, all with the configured seed. A failing run
/// is recorded and the sweep moves on.
pub fn sweep_cmd(
    cfg: &ExperimentConfig,
    axis: SweepAxis,
    values: &[f64],
    dir: &Path,
    out: &mut dyn Write,
) -> Result<Vec<SweepRow>, Failure> {
    if values.is_empty() {
        return Err(Failure::Usage("sweep needs at least one value".into()));
    }
    create_dir(dir)?;
    let enc = encoder_config(cfg, data_vocab_size(cfg)?)?;
    let mut rows = Vec::new();
    for &v in values {
        let name = match axis {
            SweepAxis::Lr => format!("lr-{v:e}"),
            SweepAxis::BudgetSplit => format!("budget_split-{v}"),
        };
        let mut raw = cfg.raw.clone();
        let member = (|| {
            match axis {
                SweepAxis::Lr => raw.set("train.lr", format!("{v:e}")),
                SweepAxis::BudgetSplit => raw.set("model.tuning", expand_budget_split(cfg, &enc, v)?.to_string()),
            }
            let member = ExperimentConfig::from_raw(raw)?;
            let mut log = Vec::new();
            let outcome = train_cmd(&member, &dir.join(&name), &mut log)?;
            Ok::<_, Failure>((member, outcome))
        })();
        let row = match member {
            Ok((member, o)) => SweepRow {
                value: format!("{v}"),
                tuning: member.tuning.to_string(),
                final_loss: o.report.steps.last().map(|s| s.loss),
                dev_mrr10: o.report.best_metrics().map(|m| m.mrr10),
                error: None,
            },
            Err(e) => {
                log::warn!("sweep member {name} failed: {e}");
                SweepRow {
                    value: format!("{v}"),
                    tuning: String::new(),
                    final_loss: None,
                    dev_mrr10: None,
                    error: Some(e.to_string()),
                }
            }
        };
        rows.push(row);
    }
    let fmt = |x: Option<f64>| x.map_or("-".to_string(), |x| format!("{x:.6}"));
    let mut table = String::new();
    table.push_str("value\ttuning\tfinal_loss\tdev_mrr10\tstatus\n");
    for r in &rows {
        let status = r.error.as_ref().map_or("ok".to_string(), |e| format!("FAILED: {e}"));
        table.push_str(&format!("{}\t{}\t{}\t{}\t{status}\n", r.value, r.tuning, fmt(r.final_loss), fmt(r.dev_mrr10)));
    }
    write_text(&dir.join("summary.tsv"), &table)?;
    out.write_all(table.as_bytes()).map_err(w)?;
    writeln!(out, "loss logs under {}", dir.display()).map_err(w)?;
    Ok(rows)
}

/// Re-mines negatives for the training triples with the checkpoint and
/// writes them as a triples file.
pub fn mine_cmd(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    top_n: usize,
    triples_path: &Path,
    out: &mut dyn Write,
) -> Result<usize, Failure> {
    if top_n == 0 {
        return Err(Failure::Usage("--top must be at least 1".into()));
    }
    let data = load_dataset(cfg)?;
    let enc = encoder_config(cfg, data.corpus.vocab().len())?;
    let model = load_model(cfg, &enc, checkpoint)?;
    let mined = mine_hard_negatives(&model, &data.corpus, &data.train_queries, &data.qrels, &data.triples, top_n)?;
    if let Some(parent) = triples_path.parent() {
        create_dir(parent)?;
    }
    write_text(triples_path, &render_triples(&mined))?;
    writeln!(out, "{} triples written to {}", mined.len(), triples_path.display()).map_err(w)?;
    Ok(mined.len())
}

pub const DATA_FILES: [(&str, &str); 6] = [
    ("data.vocab", "vocab.txt"),
    ("data.corpus", "corpus.tsv"),
    ("data.train_queries", "train_queries.tsv"),
    ("data.dev_query_file", "dev_queries.tsv"),
    ("data.qrels", "qrels.txt"),
    ("data.triples", "triples.tsv"),
];

/// Writes the configured synthetic dataset as files, plus `data.conf` with
/// the `[data]` keys that point at them.
pub fn gen_data_cmd(cfg: &ExperimentConfig, dir: &Path, out: &mut dyn Write) -> Result<(), Failure> {
    if !matches!(cfg.data, DataSource::Synthetic { .. }) {
        return Err(Failure::Usage("gen-data needs a synthetic data section, not data files".into()));
    }
    let data = load_dataset(cfg)?;
    create_dir(dir)?;
    let vocab = data.corpus.vocab();
    let texts = |qs: &[Query]| render_texts(qs, vocab);
    let [v, c, tq, dq, q, t] = DATA_FILES.map(|(_, f)| dir.join(f));
    write_text(&v, &vocab.to_text())?;
    write_text(&c, &texts(data.corpus.docs()))?;
    write_text(&tq, &texts(&data.train_queries))?;
    write_text(&dq, &texts(&data.dev_queries))?;
    write_qrels(&q, &data.qrels)?;
    write_text(&t, &render_triples(&data.triples))?;
    let mut conf = String::from("[data]\n");
    for (k, f) in DATA_FILES {
        conf.push_str(&format!("{} = {f}\n", k.trim_start_matches("data.")));
    }
    write_text(&dir.join("data.conf"), &conf)?;
    writeln!(
        out,
        "{} documents, {} train queries, {} dev queries, {} triples written to {}",
        data.corpus.len(),
        data.train_queries.len(),
        data.dev_queries.len(),
        data.triples.len(),
        dir.display()
    )
    .map_err(w)?;
    Ok(())
}
