use crate::data::{Qrels, Run, RunRow};

/// Pure listwise softmax loss with the positive at index 0.
pub fn listwise_loss(scores: &[f64]) -> crate::Result<f64> {
    if scores.len() < 2 {
        return Err(crate::Error::Contract(format!(
            "listwise loss needs a positive and at least one negative, got {} scores",
            scores.len()
        )));
    }
    Ok(crate::numerics::listwise_forward(scores).0)
}

fn per_query(
    run: &Run,
    qrels: &Qrels,
    mut f: impl FnMut(&[&RunRow], Option<&std::collections::BTreeMap<String, u32>>) -> f64,
) -> f64 {
    let ranked = run.ranked();
    if ranked.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for (qid, rows) in &ranked {
        let judged = qrels.query(qid);
        if judged.is_none() {
            log::warn!("query {qid} has no relevance judgments; scored as 0");
        }
        total += f(rows, judged);
    }
    total / ranked.len() as f64
}

/// Mean reciprocal rank of the first relevant document within the top `k`.
pub fn mrr_at_k(run: &Run, qrels: &Qrels, k: usize) -> f64 {
    per_query(run, qrels, |rows, judged| {
        let Some(judged) = judged else { return 0.0 };
        rows.iter()
            .take(k)
            .position(|r| judged.get(&r.docid).is_some_and(|&g| g > 0))
            .map_or(0.0, |i| 1.0 / (i + 1) as f64)
    })
}

fn gain(grade: u32) -> f64 {
    2f64.powi(grade as i32) - 1.0
}

fn discount(position: usize) -> f64 {
    (position as f64 + 2.0).log2()
}

/// nDCG with gain `2^rel - 1` and discount `log2(rank + 1)`.
pub fn ndcg_at_k(run: &Run, qrels: &Qrels, k: usize) -> f64 {
    per_query(run, qrels, |rows, judged| {
        let Some(judged) = judged else { return 0.0 };
        let dcg: f64 = rows
            .iter()
            .take(k)
            .enumerate()
            .map(|(i, r)| gain(judged.get(&r.docid).copied().unwrap_or(0)) / discount(i))
            .sum();
        let mut ideal: Vec<u32> = judged.values().copied().collect();
        ideal.sort_unstable_by(|a, b| b.cmp(a));
        let idcg: f64 = ideal.iter().take(k).enumerate().map(|(i, &g)| gain(g) / discount(i)).sum();
        if idcg > 0.0 {
            dcg / idcg
        } else {
            0.0
        }
    })
}

/// Fraction of relevant documents found in the top `k`.
pub fn recall_at_k(run: &Run, qrels: &Qrels, k: usize) -> f64 {
    per_query(run, qrels, |rows, judged| {
        let Some(judged) = judged else { return 0.0 };
        let relevant = judged.values().filter(|&&g| g > 0).count();
        if relevant == 0 {
            return 0.0;
        }
        let found = rows.iter().take(k).filter(|r| judged.get(&r.docid).is_some_and(|&g| g > 0)).count();
        found as f64 / relevant as f64
    })
}

/// The three standard retrieval metrics at their usual cutoffs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub mrr10: f64,
    pub ndcg10: f64,
    pub recall1000: f64,
}

pub fn evaluate(run: &Run, qrels: &Qrels) -> Metrics {
    Metrics {
        mrr10: mrr_at_k(run, qrels, 10),
        ndcg10: ndcg_at_k(run, qrels, 10),
        recall1000: recall_at_k(run, qrels, 1000),
    }
}
