//! Bi-encoder and cross-encoder scoring, the listwise training loss and
//! retrieval metrics.

mod metrics;
mod model;

pub use metrics::{evaluate, listwise_loss, mrr_at_k, ndcg_at_k, recall_at_k, Metrics};
pub use model::{examples_from_triples, Architecture, RankingExample, RankingModel, ScoreHead};
