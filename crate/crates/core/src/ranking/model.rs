use std::collections::BTreeMap;

use crate::data::{Corpus, Query, Run, CLS_ID, SEP_ID};
use crate::error::{Error, Result};
use crate::numerics::{GradMode, Graph, ParamId, Real, Tensor, Var};
use crate::pet::{install_tuning, Tuning};
use crate::transformer::{Encoder, Tower};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Architecture {
    /// Shared-weight query and document towers scored by dot product.
    Bi,
    /// Joint encoding of the pair followed by a linear scoring head.
    Cross,
}

impl Architecture {
    pub fn name(self) -> &'static str {
        match self {
            Architecture::Bi => "bi",
            Architecture::Cross => "cross",
        }
    }
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bi" | "bi-encoder" => Ok(Architecture::Bi),
            "cross" | "cross-encoder" => Ok(Architecture::Cross),
            other => Err(Error::Config(format!("unknown architecture {other:?} (expected bi or cross)"))),
        }
    }
}

/// `d×1` weight and scalar bias of the cross-encoder head.
#[derive(Clone, Copy, Debug)]
pub struct ScoreHead {
    pub weight: ParamId,
    pub bias: ParamId,
}

/// One query with its positive and `K ≥ 1` negative documents. Token ids
/// exclude the special tokens the model adds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankingExample {
    pub query: Vec<usize>,
    pub positive: Vec<usize>,
    pub negatives: Vec<Vec<usize>>,
}

impl RankingExample {
    pub fn new(query: Vec<usize>, positive: Vec<usize>, negatives: Vec<Vec<usize>>) -> Result<Self> {
        if negatives.is_empty() {
            return Err(Error::Input("a ranking example needs at least one negative".into()));
        }
        Ok(Self { query, positive, negatives })
    }

    /// Positive first, then the negatives.
    pub fn documents(&self) -> impl Iterator<Item = &Vec<usize>> {
        std::iter::once(&self.positive).chain(&self.negatives)
    }
}

/// Groups triples sharing a (query, positive) pair into examples, in first
/// appearance order.
pub fn examples_from_triples(
    triples: &[crate::data::Triple],
    queries: &[Query],
    corpus: &Corpus,
) -> Result<Vec<RankingExample>> {
    let qmap: BTreeMap<&str, &Query> = queries.iter().map(|q| (q.id.as_str(), q)).collect();
    let doc = |id: &str| {
        corpus
            .get(id)
            .map(|d| d.tokens.clone())
            .ok_or_else(|| Error::Input(format!("triples reference unknown document {id}")))
    };
    let mut order: Vec<(&str, &str)> = Vec::new();
    let mut negs: BTreeMap<(&str, &str), Vec<Vec<usize>>> = BTreeMap::new();
    for t in triples {
        let key = (t.qid.as_str(), t.pos.as_str());
        if !negs.contains_key(&key) {
            order.push(key);
        }
        negs.entry(key).or_default().push(doc(&t.neg)?);
    }
    order
        .into_iter()
        .map(|key| {
            let q =
                qmap.get(key.0).ok_or_else(|| Error::Input(format!("triples reference unknown query {}", key.0)))?;
            RankingExample::new(q.tokens.clone(), doc(key.1)?, negs.remove(&key).unwrap_or_default())
        })
        .collect()
}

/// An encoder used as a bi-encoder or a cross-encoder.
pub struct RankingModel<T: Real> {
    encoder: Encoder<T>,
    arch: Architecture,
    head: Option<ScoreHead>,
    tuning: Option<Tuning>,
}

impl<T: Real> RankingModel<T> {
    /// Wraps `encoder`. A cross-encoder gets a zero-initialized, trainable
    /// head stored alongside the encoder parameters.
    pub fn new(mut encoder: Encoder<T>, arch: Architecture) -> Result<Self> {
        let head = match arch {
            Architecture::Bi => None,
            Architecture::Cross => {
                let d = encoder.config().d_model;
                let store = encoder.store_mut();
                Some(ScoreHead {
                    weight: store.add("head.weight", Tensor::zeros(&[d, 1]), true)?,
                    bias: store.add("head.bias", Tensor::zeros(&[1]), true)?,
                })
            }
        };
        Ok(Self { encoder, arch, head, tuning: None })
    }

    /// Installs a tuning method. Semi-Siamese methods need separate towers
    /// and are rejected for the cross-encoder.
    pub fn install(&mut self, tuning: &Tuning, seed: u64) -> Result<()> {
        if self.arch == Architecture::Cross && tuning.is_semi_siamese() {
            return Err(Error::Config(format!(
                "{tuning} needs separate query and document towers; use the bi-encoder"
            )));
        }
        install_tuning(&mut self.encoder, tuning, seed)?;
        self.tuning = Some(tuning.clone());
        Ok(())
    }

    pub fn encoder(&self) -> &Encoder<T> {
        &self.encoder
    }

    pub fn encoder_mut(&mut self) -> &mut Encoder<T> {
        &mut self.encoder
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn head(&self) -> Option<ScoreHead> {
        self.head
    }

    pub fn tuning(&self) -> Option<&Tuning> {
        self.tuning.as_ref()
    }

    /// `[CLS] text [SEP]`, with the text cut to fit the maximum length.
    pub fn single_input(&self, text: &[usize]) -> Vec<usize> {
        let keep = text.len().min(self.encoder.config().max_seq_len.saturating_sub(2));
        let mut out = Vec::with_capacity(keep + 2);
        out.push(CLS_ID);
        out.extend_from_slice(&text[..keep]);
        out.push(SEP_ID);
        out
    }

    /// `[CLS] query [SEP] document [SEP]`. The document is cut first; the
    /// query only when it alone overflows.
    pub fn pair_input(&self, query: &[usize], doc: &[usize]) -> Vec<usize> {
        let room = self.encoder.config().max_seq_len.saturating_sub(3);
        let q = query.len().min(room);
        let dk = doc.len().min(room - q);
        let mut out = Vec::with_capacity(q + dk + 3);
        out.push(CLS_ID);
        out.extend_from_slice(&query[..q]);
        out.push(SEP_ID);
        out.extend_from_slice(&doc[..dk]);
        out.push(SEP_ID);
        out
    }

    /// First-position hidden state, `1×d`.
    pub fn pooled(&self, g: &mut Graph<'_, T>, input: &[usize], tower: Tower) -> Result<Var> {
        let h = self.encoder.encode(g, input, tower)?;
        g.slice_rows(h, 0, 1)
    }

    fn represent(&self, g: &mut Graph<'_, T>, text: &[usize], tower: Tower) -> Result<Var> {
        let input = self.single_input(text);
        self.pooled(g, &input, tower)
    }

    fn cross_score(&self, g: &mut Graph<'_, T>, query: &[usize], doc: &[usize]) -> Result<Var> {
        let head = self.head.expect("cross-encoder has a head");
        let input = self.pair_input(query, doc);
        let cls = self.pooled(g, &input, Tower::Joint)?;
        let w = g.param(head.weight);
        let b = g.param(head.bias);
        let s = g.matmul(cls, w)?;
        g.add_row(s, b)
    }

    /// Relevance score of one pair as a `1×1` node.
    pub fn score_var(&self, g: &mut Graph<'_, T>, query: &[usize], doc: &[usize]) -> Result<Var> {
        match self.arch {
            Architecture::Bi => {
                let q = self.represent(g, query, Tower::Query)?;
                let d = self.represent(g, doc, Tower::Document)?;
                g.dot_rows(q, d)
            }
            Architecture::Cross => self.cross_score(g, query, doc),
        }
    }

    /// Scores of the positive followed by the negatives, `1×(K+1)`. The
    /// bi-encoder encodes the query once.
    pub fn example_scores(&self, g: &mut Graph<'_, T>, ex: &RankingExample) -> Result<Var> {
        let mut scores = Vec::with_capacity(ex.negatives.len() + 1);
        match self.arch {
            Architecture::Bi => {
                let q = self.represent(g, &ex.query, Tower::Query)?;
                for doc in ex.documents() {
                    let d = self.represent(g, doc, Tower::Document)?;
                    scores.push(g.dot_rows(q, d)?);
                }
            }
            Architecture::Cross => {
                for doc in ex.documents() {
                    scores.push(self.cross_score(g, &ex.query, doc)?);
                }
            }
        }
        g.concat_cols(&scores)
    }

    /// Mean listwise loss over a batch of examples.
    pub fn batch_loss(&self, g: &mut Graph<'_, T>, batch: &[RankingExample]) -> Result<Var> {
        let mut losses = Vec::with_capacity(batch.len());
        for ex in batch {
            let s = self.example_scores(g, ex)?;
            losses.push(g.listwise_loss(s)?);
        }
        g.mean(&losses)
    }

    /// Inference-only pair score.
    pub fn score(&self, query: &[usize], doc: &[usize]) -> Result<T> {
        let mut g = Graph::new(self.encoder.store(), GradMode::None);
        let s = self.score_var(&mut g, query, doc)?;
        g.value(s).item()
    }

    /// Pooled bi-encoder representation of a query or document.
    pub fn representation(&self, text: &[usize], tower: Tower) -> Result<Vec<T>> {
        let mut g = Graph::new(self.encoder.store(), GradMode::None);
        let v = self.represent(&mut g, text, tower)?;
        Ok(g.value(v).data().to_vec())
    }

    /// Exhaustive scores of every document for every query. The bi-encoder
    /// encodes each document once.
    pub fn score_all(&self, queries: &[Query], corpus: &Corpus) -> Result<BTreeMap<String, Vec<(String, f64)>>> {
        let docs = corpus.docs();
        let mut out = BTreeMap::new();
        match self.arch {
            Architecture::Bi => {
                let reps = par_map(docs, |d| self.representation(&d.tokens, Tower::Document))?;
                let qreps = par_map(queries, |q| self.representation(&q.tokens, Tower::Query))?;
                for (q, qr) in queries.iter().zip(&qreps) {
                    let scores = docs
                        .iter()
                        .zip(&reps)
                        .map(|(d, dr)| {
                            let s: T = qr.iter().zip(dr).map(|(&a, &b)| a * b).sum();
                            (d.id.clone(), s.as_f64())
                        })
                        .collect();
                    out.insert(q.id.clone(), scores);
                }
            }
            Architecture::Cross => {
                for q in queries {
                    let scores = par_map(docs, |d| self.score(&q.tokens, &d.tokens).map(|s| s.as_f64()))?;
                    out.insert(q.id.clone(), docs.iter().map(|d| d.id.clone()).zip(scores).collect());
                }
            }
        }
        Ok(out)
    }

    /// Ranked run over the whole corpus, `depth` rows per query.
    pub fn rank(&self, queries: &[Query], corpus: &Corpus, depth: usize, tag: &str) -> Result<Run> {
        Ok(Run::from_scores(tag, self.score_all(queries, corpus)?, depth))
    }
}

/// Order-preserving map over scoped worker threads.
fn par_map<I: Sync, O: Send>(items: &[I], f: impl Fn(&I) -> Result<O> + Sync) -> Result<Vec<O>> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(items.len().max(1));
    if workers <= 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> =
            items.chunks(chunk).map(|part| s.spawn(|| part.iter().map(&f).collect::<Result<Vec<O>>>())).collect();
        let mut out = Vec::with_capacity(items.len());
        for h in handles {
            out.extend(h.join().expect("scoring worker panicked")?);
        }
        Ok(out)
    })
}
