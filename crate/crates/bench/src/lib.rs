//! Benchmark fixtures.

use peft_forge::data::{generate_synthetic, SyntheticSpec};
use peft_forge::pet::Tuning;
use peft_forge::ranking::{examples_from_triples, Architecture, RankingExample, RankingModel};
use peft_forge::{Encoder, EncoderConfig};

/// A toy-sized model with `tuning` installed and one batch of `batch`
/// synthetic examples.
pub fn fixture(arch: Architecture, tuning: &str, batch: usize) -> (RankingModel<f32>, Vec<RankingExample>) {
    let spec = SyntheticSpec { n_queries: batch, n_docs: 200, ..SyntheticSpec::default() };
    let syn = generate_synthetic(&spec).expect("valid spec");
    let mut ex = examples_from_triples(&syn.triples, &syn.queries, &syn.corpus).expect("consistent triples");
    ex.truncate(batch);
    let enc = Encoder::random(EncoderConfig::new(64, 2, 2, spec.vocab_size, 64), 0.02, 1).expect("valid config");
    let mut model = RankingModel::new(enc, arch).expect("fresh encoder");
    let tuning: Tuning = tuning.parse().expect("valid tuning");
    model.install(&tuning, 2).expect("installs once");
    (model, ex)
}
