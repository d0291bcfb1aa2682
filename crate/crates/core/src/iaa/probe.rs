use crate::error::{Error, Result};
use crate::numerics::{GradMode, Graph, Real};
use crate::ranking::{RankingExample, RankingModel};

/// Share of the full-gradient norm that falls on frozen parameters:
/// `‖g_full − g_trainable‖ / ‖g_full‖`. Zero when the full gradient is zero.
pub fn discrepancy_probe<T: Real>(model: &RankingModel<T>, batch: &[RankingExample]) -> Result<f64> {
    let store = model.encoder().store();
    if store.trainable_count() == 0 {
        return Err(Error::Contract("discrepancy probe needs at least one trainable parameter".into()));
    }
    let mut g = Graph::new(store, GradMode::All);
    let loss = model.batch_loss(&mut g, batch)?;
    let grads = g.backward(loss)?;
    let full = grads.sq_norm(|_| true);
    if full == 0.0 {
        return Ok(0.0);
    }
    let frozen = grads.sq_norm(|id| !store.get(id).trainable());
    if frozen == 0.0 {
        // an empty float sum is -0.0
        return Ok(0.0);
    }
    Ok((frozen / full).sqrt())
}
