use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::numerics::{relative_error, GradMode, Graph, ParamId, ParamStore};
use crate::ranking::{RankingExample, RankingModel};

/// Finite-difference steps tried in order; a coordinate passes if any of
/// them agrees. Smaller steps help near ReLU kinks.
pub const FD_STEPS: [f64; 3] = [1e-5, 1e-6, 1e-7];

const ERROR_FLOOR: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckOptions {
    pub tol: f64,
    /// Coordinates checked per trainable tensor, including its largest
    /// analytic entry.
    pub coords_per_param: usize,
    pub seed: u64,
    /// Perturbs one analytic gradient entry before comparing.
    pub corrupt: bool,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self { tol: 1e-4, coords_per_param: 4, seed: 0, corrupt: false }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub failures: usize,
    pub max_rel_error: f64,
    /// Path and index of the coordinate with the largest error.
    pub worst: Option<(String, usize)>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.checked > 0
    }
}

/// Adds `N(0, std)` noise to every trainable parameter, so zero-initialized
/// modules have non-degenerate gradients.
pub fn jitter_trainable(store: &mut ParamStore<f64>, std: f64, seed: u64) -> Result<()> {
    let normal = Normal::new(0.0, std).map_err(|e| Error::Config(format!("bad jitter std {std}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for id in store.trainable_ids() {
        for v in store.value_mut(id).data_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    Ok(())
}

fn loss_value(model: &RankingModel<f64>, batch: &[RankingExample]) -> Result<f64> {
    let mut g = Graph::new(model.encoder().store(), GradMode::None);
    let loss = model.batch_loss(&mut g, batch)?;
    g.value(loss).item()
}

/// Compares tape gradients of the batch loss for trainable parameters
/// against central finite differences.
pub fn check_model_gradients(
    model: &mut RankingModel<f64>,
    batch: &[RankingExample],
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let grads = {
        let mut g = Graph::new(model.encoder().store(), GradMode::Trainable);
        let loss = model.batch_loss(&mut g, batch)?;
        g.backward(loss)?
    };
    let ids: Vec<ParamId> = model.encoder().store().trainable_ids();
    if ids.is_empty() {
        return Err(Error::Contract("gradient check needs at least one trainable parameter".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = GradCheckReport::default();
    let mut corrupted = !opts.corrupt;
    for id in ids {
        let analytic: Vec<f64> = match grads.param(id) {
            Some(t) => t.data().to_vec(),
            None => vec![0.0; model.encoder().store().get(id).len()],
        };
        let n = analytic.len();
        let largest = (0..n).max_by(|&a, &b| analytic[a].abs().total_cmp(&analytic[b].abs())).unwrap_or(0);
        let mut coords = vec![largest];
        let extra = opts.coords_per_param.saturating_sub(1).min(n);
        coords.extend(sample(&mut rng, n, extra).into_iter().filter(|&i| i != largest));
        coords.truncate(opts.coords_per_param.max(1));
        for i in coords {
            let mut a = analytic[i];
            if !corrupted {
                a = a * 1.1 + 1e-3;
                corrupted = true;
            }
            let mut best = f64::INFINITY;
            for step in FD_STEPS {
                let orig = model.encoder().store().value(id).data()[i];
                let mut eval = |x: f64| -> Result<f64> {
                    model.encoder_mut().store_mut().value_mut(id).data_mut()[i] = x;
                    loss_value(model, batch)
                };
                let plus = eval(orig + step);
                let minus = eval(orig - step);
                model.encoder_mut().store_mut().value_mut(id).data_mut()[i] = orig;
                let numeric = (plus? - minus?) / (2.0 * step);
                best = best.min(relative_error(a, numeric, ERROR_FLOOR));
                if best <= opts.tol {
                    break;
                }
            }
            report.checked += 1;
            if best > opts.tol {
                report.failures += 1;
            }
            if best > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(best);
                let path = model.encoder().store().get(id).path().to_string();
                report.worst = Some((path, i));
            }
        }
    }
    Ok(report)
}
