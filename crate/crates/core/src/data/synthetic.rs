use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::io::{Qrels, Triple};
use super::vocab::{Vocab, RESERVED};
use crate::error::{Error, Result};

/// A text with an identifier, already tokenized.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub tokens: Vec<usize>,
}

pub type Query = Document;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    docs: Vec<Document>,
    index: HashMap<String, usize>,
    vocab: Vocab,
}

impl Corpus {
    pub fn new(docs: Vec<Document>, vocab: Vocab) -> Result<Self> {
        let mut index = HashMap::with_capacity(docs.len());
        for (i, d) in docs.iter().enumerate() {
            if d.tokens.is_empty() {
                return Err(Error::Input(format!("document {} is empty", d.id)));
            }
            if let Some(&t) = d.tokens.iter().find(|&&t| t >= vocab.len()) {
                return Err(Error::Input(format!(
                    "document {} has token id {t} outside a vocabulary of {}",
                    d.id,
                    vocab.len()
                )));
            }
            if index.insert(d.id.clone(), i).is_some() {
                return Err(Error::Input(format!("duplicate document id {}", d.id)));
            }
        }
        Ok(Self { docs, index, vocab })
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.index.get(id).map(|&i| &self.docs[i])
    }
}

/// Latent-topic generator settings.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub n_topics: usize,
    pub n_queries: usize,
    pub n_docs: usize,
    /// Total vocabulary size including the four reserved tokens.
    pub vocab_size: usize,
    pub query_len: usize,
    pub doc_len: usize,
    /// Probability that a token is drawn from the text's topic block.
    pub topic_purity: f64,
    /// Fraction of relevant pairs given grade 2 instead of 1.
    pub grade2_fraction: f64,
    /// Non-matching documents sampled per query for the triples.
    pub negatives: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_topics: 50,
            n_queries: 600,
            n_docs: 2000,
            vocab_size: 2048,
            query_len: 6,
            doc_len: 24,
            topic_purity: 0.9,
            grade2_fraction: 0.25,
            negatives: 7,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    /// Words per block; the shared block takes the remainder as well.
    fn block(&self) -> usize {
        self.vocab_size.saturating_sub(RESERVED.len()) / (self.n_topics + 1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_topics == 0 {
            return bad("n_topics must be positive".into());
        }
        if self.block() == 0 {
            return bad(format!(
                "vocab_size {} cannot be split into {} topic blocks plus a shared block",
                self.vocab_size, self.n_topics
            ));
        }
        if self.n_docs < self.n_topics {
            return bad(format!("n_docs {} is smaller than n_topics {}", self.n_docs, self.n_topics));
        }
        if self.query_len == 0 || self.doc_len == 0 {
            return bad("query_len and doc_len must be positive".into());
        }
        if !(self.topic_purity > 0.5 && self.topic_purity <= 1.0) {
            return bad(format!("topic_purity {} outside (0.5, 1]", self.topic_purity));
        }
        if !(0.0..=1.0).contains(&self.grade2_fraction) {
            return bad(format!("grade2_fraction {} outside [0, 1]", self.grade2_fraction));
        }
        let largest_topic = self.n_docs.div_ceil(self.n_topics);
        if self.n_queries > 0 && self.negatives > self.n_docs - largest_topic {
            return bad(format!(
                "{} negatives requested but a topic can leave only {} non-matching documents",
                self.negatives,
                self.n_docs - largest_topic
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Synthetic {
    pub corpus: Corpus,
    pub queries: Vec<Query>,
    pub qrels: Qrels,
    pub triples: Vec<Triple>,
    /// Latent topic of each document, in corpus order.
    pub doc_topics: Vec<usize>,
    /// Latent topic of each query.
    pub query_topics: Vec<usize>,
}

pub fn doc_id(i: usize) -> String {
    format!("D{i}")
}

pub fn query_id(i: usize) -> String {
    format!("Q{i}")
}

/// Deterministic latent-topic corpus, queries, graded qrels and triples.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Synthetic> {
    spec.validate()?;
    let block = spec.block();
    let first = RESERVED.len();
    let shared_start = first + block * spec.n_topics;
    let mut words = Vec::with_capacity(spec.vocab_size - first);
    for t in 0..spec.n_topics {
        words.extend((0..block).map(|j| format!("t{t}w{j}")));
    }
    words.extend((0..spec.vocab_size - shared_start).map(|j| format!("s{j}")));
    let vocab = Vocab::new(&words)?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sample = |rng: &mut ChaCha8Rng, topic: usize, len: usize| -> Vec<usize> {
        (0..len)
            .map(|_| {
                if rng.random::<f64>() < spec.topic_purity {
                    first + topic * block + rng.random_range(0..block)
                } else {
                    rng.random_range(shared_start..spec.vocab_size)
                }
            })
            .collect()
    };

    let mut doc_topics: Vec<usize> = (0..spec.n_docs).map(|i| i % spec.n_topics).collect();
    doc_topics.shuffle(&mut rng);
    let docs = doc_topics
        .iter()
        .enumerate()
        .map(|(i, &t)| Document { id: doc_id(i), tokens: sample(&mut rng, t, spec.doc_len) })
        .collect();
    let corpus = Corpus::new(docs, vocab)?;

    let mut by_topic = vec![Vec::new(); spec.n_topics];
    for (i, &t) in doc_topics.iter().enumerate() {
        by_topic[t].push(i);
    }

    let mut queries = Vec::with_capacity(spec.n_queries);
    let mut query_topics = Vec::with_capacity(spec.n_queries);
    let mut qrels = Qrels::default();
    let mut triples = Vec::new();
    for qi in 0..spec.n_queries {
        let topic = rng.random_range(0..spec.n_topics);
        let qid = query_id(qi);
        queries.push(Query { id: qid.clone(), tokens: sample(&mut rng, topic, spec.query_len) });
        query_topics.push(topic);
        for &d in &by_topic[topic] {
            let grade = if rng.random::<f64>() < spec.grade2_fraction { 2 } else { 1 };
            qrels.insert(&qid, &doc_id(d), grade)?;
        }
        if spec.negatives == 0 {
            continue;
        }
        let pos = by_topic[topic][rng.random_range(0..by_topic[topic].len())];
        let others: Vec<usize> = (0..spec.n_docs).filter(|&d| doc_topics[d] != topic).collect();
        for k in rand::seq::index::sample(&mut rng, others.len(), spec.negatives) {
            triples.push(Triple { qid: qid.clone(), pos: doc_id(pos), neg: doc_id(others[k]) });
        }
    }
    Ok(Synthetic { corpus, queries, qrels, triples, doc_topics, query_topics })
}
