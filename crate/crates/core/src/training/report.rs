use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::ranking::Metrics;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
    pub delta: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub metrics: Metrics,
}

/// Everything a training run logs. Renders as `# key value` metadata lines
/// followed by one `step loss lr [delta]` line per optimizer step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub meta: Vec<(String, String)>,
    pub frozen_before: String,
    pub frozen_after: String,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub steps: Vec<StepRecord>,
}

impl TrainReport {
    pub fn losses(&self) -> impl Iterator<Item = f64> + '_ {
        self.steps.iter().map(|s| s.loss)
    }

    /// Mean loss over steps `first..=last` (1-based, clipped to the log).
    pub fn mean_loss(&self, first: usize, last: usize) -> Option<f64> {
        let v: Vec<f64> = self.window(first, last).map(|s| s.loss).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Population standard deviation of the loss over steps `first..=last`.
    pub fn loss_std(&self, first: usize, last: usize) -> Option<f64> {
        let v: Vec<f64> = self.window(first, last).map(|s| s.loss).collect();
        let mean = self.mean_loss(first, last)?;
        Some((v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64).sqrt())
    }

    /// Mean of the probed values over steps `first..=last`.
    pub fn mean_delta(&self, first: usize, last: usize) -> Option<f64> {
        let v: Vec<f64> = self.window(first, last).filter_map(|s| s.delta).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    fn window(&self, first: usize, last: usize) -> impl Iterator<Item = &StepRecord> {
        self.steps.iter().filter(move |s| s.step >= first && s.step <= last)
    }

    pub fn best_metrics(&self) -> Option<Metrics> {
        let best = self.best_epoch?;
        self.epochs.iter().find(|e| e.epoch == best).map(|e| e.metrics)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.meta {
            let _ = writeln!(s, "# {k} {v}");
        }
        let _ = writeln!(s, "# frozen_before {}", self.frozen_before);
        let _ = writeln!(s, "# frozen_after {}", self.frozen_after);
        for e in &self.epochs {
            let m = e.metrics;
            let _ =
                writeln!(s, "# epoch {} mrr10={} ndcg10={} recall1000={}", e.epoch, m.mrr10, m.ndcg10, m.recall1000);
        }
        if let Some(b) = self.best_epoch {
            let _ = writeln!(s, "# best_epoch {b}");
        }
        for r in &self.steps {
            match r.delta {
                Some(d) => writeln!(s, "{} {} {} {}", r.step, r.loss, r.lr, d),
                None => writeln!(s, "{} {} {}", r.step, r.loss, r.lr),
            }
            .expect("writing to a String");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut rep = TrainReport::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let err = |msg: String| Error::Parse { line, msg };
            let l = raw.trim();
            if l.is_empty() {
                continue;
            }
            if let Some(rest) = l.strip_prefix('#') {
                let rest = rest.trim();
                let (key, value) = rest.split_once(' ').unwrap_or((rest, ""));
                match key {
                    "frozen_before" => rep.frozen_before = value.to_string(),
                    "frozen_after" => rep.frozen_after = value.to_string(),
                    "best_epoch" => {
                        rep.best_epoch = Some(value.parse().map_err(|_| err(format!("bad epoch {value:?}")))?)
                    }
                    "epoch" => rep.epochs.push(parse_epoch(value).map_err(err)?),
                    _ => rep.meta.push((key.to_string(), value.to_string())),
                }
                continue;
            }
            let f: Vec<&str> = l.split_whitespace().collect();
            if !(3..=4).contains(&f.len()) {
                return Err(err(format!("expected `step loss lr [delta]`, found {} fields", f.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| err(format!("bad number {s:?}")));
            rep.steps.push(StepRecord {
                step: f[0].parse().map_err(|_| err(format!("bad step {:?}", f[0])))?,
                loss: num(f[1])?,
                lr: num(f[2])?,
                delta: f.get(3).map(|d| num(d)).transpose()?,
            });
        }
        Ok(rep)
    }
}

fn parse_epoch(value: &str) -> std::result::Result<EpochRecord, String> {
    let mut it = value.split_whitespace();
    let epoch = it.next().and_then(|e| e.parse().ok()).ok_or_else(|| format!("bad epoch line {value:?}"))?;
    let mut m = Metrics { mrr10: 0.0, ndcg10: 0.0, recall1000: 0.0 };
    for kv in it {
        let (k, v) = kv.split_once('=').ok_or_else(|| format!("bad metric {kv:?}"))?;
        let v: f64 = v.parse().map_err(|_| format!("bad metric value {v:?}"))?;
        match k {
            "mrr10" => m.mrr10 = v,
            "ndcg10" => m.ndcg10 = v,
            "recall1000" => m.recall1000 = v,
            _ => return Err(format!("unknown metric {k:?}")),
        }
    }
    Ok(EpochRecord { epoch, metrics: m })
}
