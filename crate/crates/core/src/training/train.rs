use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{lr_schedule, Adam};
use super::report::{EpochRecord, StepRecord, TrainReport};
use crate::data::{Corpus, Qrels, Query};
use crate::error::{Error, Result};
use crate::iaa::discrepancy_probe;
use crate::numerics::{GradMode, Graph, ParamId, Real, Tensor};
use crate::pet::Tuning;
use crate::ranking::{evaluate, RankingExample, RankingModel};

/// Base learning rate for parameter-efficient methods.
pub const PET_LR: f64 = 1e-4;
/// Base learning rate when every parameter is trained.
pub const FULL_LR: f64 = 2e-5;

pub fn default_lr(tuning: &Tuning) -> f64 {
    if tuning.is_full() {
        FULL_LR
    } else {
        PET_LR
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Stops after this many optimizer steps, if set.
    pub max_steps: Option<usize>,
    /// Runs the discrepancy probe every this many steps (0 disables it).
    pub probe_every: usize,
    /// Last step at which the probe runs, if set.
    pub probe_until: Option<usize>,
    /// Seed of the example shuffler.
    pub seed: u64,
    /// Restores the parameters of the best dev epoch at the end.
    pub select_best: bool,
    /// Ranked documents per dev query.
    pub eval_depth: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 3,
            batch_size: 16,
            lr: PET_LR,
            max_steps: None,
            probe_every: 0,
            probe_until: None,
            seed: 0,
            select_best: true,
            eval_depth: 1000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr)));
        }
        Ok(())
    }

    /// Optimizer steps the run will take over `n_examples`.
    pub fn total_steps(&self, n_examples: usize) -> usize {
        let planned = self.epochs * n_examples.div_ceil(self.batch_size);
        self.max_steps.map_or(planned, |m| m.min(planned))
    }
}

/// Held-out queries ranked against the corpus after every epoch.
#[derive(Clone, Copy)]
pub struct DevSet<'a> {
    pub queries: &'a [Query],
    pub corpus: &'a Corpus,
    pub qrels: &'a Qrels,
}

/// Values of the trainable parameters.
type Snapshot<T> = Vec<(ParamId, Tensor<T>)>;

fn snapshot<T: Real>(model: &RankingModel<T>) -> Snapshot<T> {
    let store = model.encoder().store();
    store.trainable_ids().into_iter().map(|id| (id, store.value(id).clone())).collect()
}

/// Shuffled mini-batch training with the listwise loss, Adam and linear
/// warmup. Fails if any frozen parameter changed.
pub fn train<T: Real>(
    model: &mut RankingModel<T>,
    examples: &[RankingExample],
    dev: Option<DevSet<'_>>,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    let mut report = TrainReport { frozen_before: model.encoder().store().frozen_checksum(), ..TrainReport::default() };
    let total = cfg.total_steps(examples.len());
    if total > 0 && examples.is_empty() {
        return Err(Error::Input("no training examples".into()));
    }
    let mut adam = Adam::new(model.encoder().store());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut best: Option<(f64, Snapshot<T>)> = None;
    let mut step = 0;
    'epochs: for epoch in 1..=cfg.epochs {
        if step >= total {
            break;
        }
        order.shuffle(&mut rng);
        for (bi, idx) in order.chunks(cfg.batch_size).enumerate() {
            if step >= total {
                break;
            }
            step += 1;
            let batch: Vec<RankingExample> = idx.iter().map(|&i| examples[i].clone()).collect();
            let lr = lr_schedule(step, total, cfg.lr);
            let probe =
                cfg.probe_every > 0 && (step - 1) % cfg.probe_every == 0 && cfg.probe_until.is_none_or(|u| step <= u);
            let delta = if probe { Some(discrepancy_probe(model, &batch)?) } else { None };
            let grads = {
                let mut g = Graph::new(model.encoder().store(), GradMode::Trainable);
                let loss = model.batch_loss(&mut g, &batch)?;
                let value = g.value(loss).item()?.as_f64();
                if !value.is_finite() {
                    return Err(Error::Numerical {
                        step,
                        lr,
                        batch: bi,
                        detail: format!("loss is {value} in epoch {epoch}"),
                    });
                }
                report.steps.push(StepRecord { step, loss: value, lr, delta });
                g.backward(loss)?
            };
            let store = model.encoder_mut().store_mut();
            store.accumulate(&grads);
            adam.step(store, lr)?;
            if step >= total {
                if let Some(dev) = dev {
                    evaluate_epoch(model, dev, epoch, cfg, &mut report, &mut best)?;
                }
                break 'epochs;
            }
        }
        if let Some(dev) = dev {
            evaluate_epoch(model, dev, epoch, cfg, &mut report, &mut best)?;
        }
    }
    if cfg.select_best {
        if let Some((_, params)) = best {
            let store = model.encoder_mut().store_mut();
            for (id, value) in params {
                store.set_value(id, value)?;
            }
        }
    }
    report.frozen_after = model.encoder().store().frozen_checksum();
    if report.frozen_after != report.frozen_before {
        return Err(Error::State("a frozen parameter changed during training".into()));
    }
    Ok(report)
}

fn evaluate_epoch<T: Real>(
    model: &RankingModel<T>,
    dev: DevSet<'_>,
    epoch: usize,
    cfg: &TrainConfig,
    report: &mut TrainReport,
    best: &mut Option<(f64, Snapshot<T>)>,
) -> Result<()> {
    let run = model.rank(dev.queries, dev.corpus, cfg.eval_depth, "dev")?;
    let metrics = evaluate(&run, dev.qrels);
    log::info!(
        "epoch {epoch}: dev MRR@10 {:.4} nDCG@10 {:.4} R@1000 {:.4}",
        metrics.mrr10,
        metrics.ndcg10,
        metrics.recall1000
    );
    report.epochs.push(EpochRecord { epoch, metrics });
    if best.as_ref().is_none_or(|(m, _)| metrics.mrr10 > *m) {
        *best = Some((metrics.mrr10, snapshot(model)));
        report.best_epoch = Some(epoch);
    }
    Ok(())
}
