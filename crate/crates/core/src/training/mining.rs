use std::collections::BTreeMap;

use crate::data::{Corpus, Qrels, Query, Triple};
use crate::error::Result;
use crate::numerics::Real;
use crate::ranking::RankingModel;

/// Re-pairs each (query, positive) of `triples` with the `top_n` highest
/// scoring unjudged or zero-graded documents under `model`. Queries with no
/// relevant document are skipped.
pub fn mine_hard_negatives<T: Real>(
    model: &RankingModel<T>,
    corpus: &Corpus,
    queries: &[Query],
    qrels: &Qrels,
    triples: &[Triple],
    top_n: usize,
) -> Result<Vec<Triple>> {
    let mut positives: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for t in triples {
        let p = positives.entry(t.qid.as_str()).or_default();
        if !p.contains(&t.pos.as_str()) {
            p.push(t.pos.as_str());
        }
    }
    let wanted: Vec<Query> = queries
        .iter()
        .filter(|q| {
            let relevant = qrels.query(&q.id).is_some_and(|j| j.values().any(|&g| g > 0));
            if !relevant {
                log::warn!("query {} has no relevant document; not mined", q.id);
            }
            relevant && positives.contains_key(q.id.as_str())
        })
        .cloned()
        .collect();
    let scores = model.score_all(&wanted, corpus)?;
    let mut out = Vec::new();
    for q in &wanted {
        let mut cands = scores[&q.id].clone();
        cands.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let negs: Vec<&str> =
            cands.iter().filter(|(d, _)| qrels.grade(&q.id, d) == 0).take(top_n).map(|(d, _)| d.as_str()).collect();
        for pos in &positives[q.id.as_str()] {
            for neg in &negs {
                out.push(Triple { qid: q.id.clone(), pos: pos.to_string(), neg: neg.to_string() });
            }
        }
    }
    Ok(out)
}
