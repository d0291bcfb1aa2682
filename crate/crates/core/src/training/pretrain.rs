use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::Corpus;
use crate::error::{Error, Result};
use crate::ranking::RankingExample;

/// Self-supervised examples from an unlabeled corpus: each document's first
/// half is the query, its second half the positive, and second halves of
/// `negatives` other random documents the negatives.
pub fn inverse_cloze_examples(corpus: &Corpus, negatives: usize, seed: u64) -> Result<Vec<RankingExample>> {
    let docs = corpus.docs();
    if docs.len() <= negatives {
        return Err(Error::Input(format!("{} documents cannot supply {negatives} negatives each", docs.len())));
    }
    if let Some(d) = docs.iter().find(|d| d.tokens.len() < 2) {
        return Err(Error::Input(format!("document {} is too short to split", d.id)));
    }
    let half = |t: &[usize]| t.len() / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    docs.iter()
        .enumerate()
        .map(|(i, d)| {
            let mut negs = Vec::with_capacity(negatives);
            while negs.len() < negatives {
                let j = rng.random_range(0..docs.len());
                if j != i {
                    let t = &docs[j].tokens;
                    negs.push(t[half(t)..].to_vec());
                }
            }
            let t = &d.tokens;
            RankingExample::new(t[..half(t)].to_vec(), t[half(t)..].to_vec(), negs)
        })
        .collect()
}
