use std::collections::{BTreeMap, BTreeSet};

use peft_forge::data::{Qrels, Run, RunRow, CLS_ID, SEP_ID};
use peft_forge::pet::{PetConfig, Tuning};
use peft_forge::ranking::*;
use peft_forge::{Encoder, EncoderConfig, Error, GradMode, Graph, Tensor, Tower};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn config() -> EncoderConfig {
    EncoderConfig::new(8, 2, 2, 40, 16)
}

fn model(arch: Architecture, seed: u64) -> RankingModel<f64> {
    RankingModel::new(Encoder::random(config(), 0.3, seed).unwrap(), arch).unwrap()
}

fn tokens(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(4..40)).collect()
}

#[test]
fn identical_texts_score_their_squared_norm() {
    let m = model(Architecture::Bi, 1);
    let q = vec![5, 9, 12];
    let rep = m.representation(&q, Tower::Query).unwrap();
    let s = m.score(&q, &q).unwrap();
    let norm: f64 = rep.iter().map(|v| v * v).sum();
    assert!((s - norm).abs() <= 1e-12 * norm);
    assert!(s >= 0.0);
}

#[test]
fn bi_score_is_dot_of_representations() {
    let m = model(Architecture::Bi, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10 {
        let q = tokens(&mut rng, 4);
        let d = tokens(&mut rng, 9);
        let a = m.representation(&q, Tower::Query).unwrap();
        let b = m.representation(&d, Tower::Document).unwrap();
        let manual: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((m.score(&q, &d).unwrap() - manual).abs() <= 1e-12 * manual.abs().max(1.0));
        // shared towers make the score symmetric
        assert_eq!(m.score(&q, &d).unwrap(), m.score(&d, &q).unwrap());
    }
}

#[test]
fn zero_representation_scores_zero() {
    let enc = Encoder::<f64>::zeros(config()).unwrap();
    let m = RankingModel::new(enc, Architecture::Bi).unwrap();
    assert_eq!(m.score(&[4, 5], &[6, 7, 8]).unwrap(), 0.0);
}

#[test]
fn cross_head_starts_at_zero_and_is_trainable() {
    let mut m = model(Architecture::Cross, 3);
    assert_eq!(m.score(&[4, 5], &[6, 7]).unwrap(), 0.0);
    assert_eq!(m.score(&[9], &[10, 11, 12]).unwrap(), 0.0);
    m.install(&Tuning::Pet(PetConfig::lora(2)), 0).unwrap();
    let head = m.head().unwrap();
    let store = m.encoder().store();
    assert!(store.get(head.weight).trainable());
    assert!(store.get(head.bias).trainable());
}

#[test]
fn cross_score_depends_on_document() {
    let mut m = model(Architecture::Cross, 4);
    let head = m.head().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let w: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
    m.encoder_mut().store_mut().set_value(head.weight, Tensor::from_f64(&[8, 1], &w).unwrap()).unwrap();
    let q = tokens(&mut rng, 3);
    let pos = tokens(&mut rng, 6);
    let neg = tokens(&mut rng, 6);
    assert_ne!(m.score(&q, &pos).unwrap(), m.score(&q, &neg).unwrap());
}

#[test]
fn inputs_are_truncated_document_first() {
    let m = model(Architecture::Cross, 5);
    let max = config().max_seq_len;
    let q: Vec<usize> = (4..10).collect();
    let d: Vec<usize> = (10..40).collect();
    let pair = m.pair_input(&q, &d);
    assert_eq!(pair.len(), max);
    assert_eq!(pair[0], CLS_ID);
    assert_eq!(&pair[1..7], q.as_slice());
    assert_eq!(pair[7], SEP_ID);
    assert_eq!(&pair[8..max - 1], &d[..max - 9]);
    assert_eq!(pair[max - 1], SEP_ID);

    let long_q: Vec<usize> = (4..30).collect();
    let pair = m.pair_input(&long_q, &d);
    assert_eq!(pair.len(), max);
    assert_eq!(&pair[1..max - 2], &long_q[..max - 3]);

    let single = m.single_input(&d);
    assert_eq!(single.len(), max);
    assert_eq!((single[0], single[max - 1]), (CLS_ID, SEP_ID));
    assert_eq!(m.single_input(&[]), vec![CLS_ID, SEP_ID]);
    // overlong inputs still score
    m.score(&long_q, &d).unwrap();
}

#[test]
fn semi_siamese_needs_the_bi_encoder() {
    let mut m = model(Architecture::Cross, 6);
    let e = m.install(&Tuning::Pet(PetConfig::ss_lora(2)), 0).unwrap_err();
    assert!(matches!(e, Error::Config(_)), "{e}");
    let mut b = model(Architecture::Bi, 6);
    b.install(&Tuning::Pet(PetConfig::ss_lora(2)), 0).unwrap();
}

#[test]
fn batch_loss_is_mean_of_example_losses() {
    let m = model(Architecture::Bi, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let batch: Vec<RankingExample> = (0..3)
        .map(|_| RankingExample::new(tokens(&mut rng, 3), tokens(&mut rng, 5), vec![tokens(&mut rng, 5); 4]).unwrap())
        .collect();
    let mut g = Graph::new(m.encoder().store(), GradMode::None);
    let loss = m.batch_loss(&mut g, &batch).unwrap();
    let total = g.value(loss).item().unwrap();
    let mut manual = 0.0;
    for ex in &batch {
        let scores: Vec<f64> = ex.documents().map(|d| m.score(&ex.query, d).unwrap()).collect();
        assert_eq!(scores.len(), 5);
        manual += listwise_loss(&scores).unwrap();
    }
    assert!((total - manual / 3.0).abs() < 1e-12);
    assert!(RankingExample::new(vec![4], vec![5], vec![]).is_err());
}

#[test]
fn cross_encoder_starts_at_uniform_loss() {
    let m = model(Architecture::Cross, 8);
    let ex = RankingExample::new(vec![4, 5], vec![6], vec![vec![7]; 7]).unwrap();
    let mut g = Graph::new(m.encoder().store(), GradMode::None);
    let loss = m.batch_loss(&mut g, &[ex]).unwrap();
    assert!((g.value(loss).item().unwrap() - 8f64.ln()).abs() < 1e-12);
}

#[test]
fn listwise_loss_examples() {
    assert!((listwise_loss(&[0.3; 8]).unwrap() - 8f64.ln()).abs() < 1e-15);
    assert!(listwise_loss(&[1e3, 0.0, -1.0]).unwrap() < 1e-300);
    assert!(listwise_loss(&[1.0]).is_err());
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let s: Vec<f64> = (0..6).map(|_| rng.random_range(-5.0..5.0)).collect();
        let direct = -(s[0].exp() / s.iter().map(|v| v.exp()).sum::<f64>()).ln();
        assert!((listwise_loss(&s).unwrap() - direct).abs() <= 1e-12);
    }
}

#[test]
fn examples_group_triples() {
    use peft_forge::data::{Corpus, Document, Triple, Vocab};
    let vocab = Vocab::new(["a", "b", "c"]).unwrap();
    let doc = |id: &str, t: usize| Document { id: id.into(), tokens: vec![t] };
    let corpus = Corpus::new(vec![doc("D0", 4), doc("D1", 5), doc("D2", 6)], vocab).unwrap();
    let queries = vec![doc("Q0", 4), doc("Q1", 6)];
    let t = |q: &str, p: &str, n: &str| Triple { qid: q.into(), pos: p.into(), neg: n.into() };
    let triples = [t("Q0", "D0", "D1"), t("Q1", "D2", "D0"), t("Q0", "D0", "D2")];
    let ex = examples_from_triples(&triples, &queries, &corpus).unwrap();
    assert_eq!(ex.len(), 2);
    assert_eq!(ex[0].negatives, vec![vec![5], vec![6]]);
    assert_eq!(ex[1].positive, vec![6]);
    assert!(examples_from_triples(&[t("Q9", "D0", "D1")], &queries, &corpus).is_err());
    assert!(examples_from_triples(&[t("Q0", "D0", "D9")], &queries, &corpus).is_err());
}

// Independent scorers: they work from the set of relevant documents and
// per-document ranks rather than walking the ranked list.

fn ranks(run: &Run) -> BTreeMap<(String, String), usize> {
    run.rows.iter().map(|r| ((r.qid.clone(), r.docid.clone()), r.rank)).collect()
}

fn oracle_mrr(run: &Run, qrels: &Qrels, k: usize) -> f64 {
    let rk = ranks(run);
    let qids: BTreeSet<&str> = run.rows.iter().map(|r| r.qid.as_str()).collect();
    let mut total = 0.0;
    for q in &qids {
        let best = rk.iter().filter(|((qq, d), &r)| qq == q && r <= k && qrels.grade(q, d) > 0).map(|(_, &r)| r).min();
        total += best.map_or(0.0, |r| 1.0 / r as f64);
    }
    if qids.is_empty() {
        0.0
    } else {
        total / qids.len() as f64
    }
}

fn permutations(v: &[u32]) -> Vec<Vec<u32>> {
    if v.len() <= 1 {
        return vec![v.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..v.len() {
        let mut rest = v.to_vec();
        let x = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, x);
            out.push(p);
        }
    }
    out
}

fn dcg(grades: &[u32]) -> f64 {
    grades.iter().enumerate().map(|(i, &g)| ((1u64 << g) - 1) as f64 / ((i + 2) as f64).log2()).sum()
}

fn oracle_ndcg(run: &Run, qrels: &Qrels, k: usize) -> f64 {
    let rk = ranks(run);
    let qids: BTreeSet<&str> = run.rows.iter().map(|r| r.qid.as_str()).collect();
    let mut total = 0.0;
    for q in &qids {
        let mut at = vec![0u32; k];
        for ((qq, d), &r) in &rk {
            if qq == q && r <= k {
                at[r - 1] = qrels.grade(q, d);
            }
        }
        let judged: Vec<u32> = qrels.query(q).map(|m| m.values().copied().collect()).unwrap_or_default();
        let ideal = permutations(&judged).iter().map(|p| dcg(&p[..p.len().min(k)])).fold(0.0, f64::max);
        if ideal > 0.0 {
            total += dcg(&at) / ideal;
        }
    }
    if qids.is_empty() {
        0.0
    } else {
        total / qids.len() as f64
    }
}

fn oracle_recall(run: &Run, qrels: &Qrels, k: usize) -> f64 {
    let rk = ranks(run);
    let qids: BTreeSet<&str> = run.rows.iter().map(|r| r.qid.as_str()).collect();
    let mut total = 0.0;
    for q in &qids {
        let relevant: BTreeSet<&String> =
            qrels.query(q).map(|m| m.iter().filter(|(_, &g)| g > 0).map(|(d, _)| d).collect()).unwrap_or_default();
        let top: BTreeSet<&String> = rk.iter().filter(|((qq, _), &r)| qq == q && r <= k).map(|((_, d), _)| d).collect();
        if !relevant.is_empty() {
            total += relevant.intersection(&top).count() as f64 / relevant.len() as f64;
        }
    }
    if qids.is_empty() {
        0.0
    } else {
        total / qids.len() as f64
    }
}

fn random_case(seed: u64) -> (Run, Qrels) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scores = BTreeMap::new();
    let mut qrels = Qrels::default();
    for q in 0..rng.random_range(1..5) {
        let qid = format!("q{q}");
        let n = rng.random_range(1..12);
        let cands: Vec<(String, f64)> =
            (0..n).map(|d| (format!("d{d}"), (rng.random_range(0..6) as f64) / 2.0)).collect();
        // some queries are left unjudged, some judged docs are not retrieved
        if rng.random_bool(0.85) {
            // at most 7 judgments keeps the permutation oracle cheap
            for d in rand::seq::index::sample(&mut rng, n + 2, (n + 2).min(7)) {
                if rng.random_bool(0.6) {
                    qrels.insert(&qid, &format!("d{d}"), rng.random_range(0..4)).unwrap();
                }
            }
        }
        scores.insert(qid, cands);
    }
    (Run::from_scores("r", scores, 100), qrels)
}

#[test]
fn metric_examples() {
    let row = |d: &str, rank| RunRow { qid: "1".into(), docid: d.into(), rank, score: -(rank as f64) };
    let run = Run { tag: "t".into(), rows: vec![row("a", 1), row("b", 2), row("c", 3)] };
    let qrels = Qrels::parse("1 0 c 1\n").unwrap();
    assert_eq!(mrr_at_k(&run, &qrels, 10), 1.0 / 3.0);
    assert_eq!(mrr_at_k(&run, &qrels, 2), 0.0);
    assert_eq!(recall_at_k(&run, &qrels, 3), 1.0);
    assert_eq!(recall_at_k(&run, &qrels, 0), 0.0);
    let perfect = Qrels::parse("1 0 a 3\n1 0 b 2\n1 0 c 1\n").unwrap();
    assert!((ndcg_at_k(&run, &perfect, 10) - 1.0).abs() < 1e-15);
    let zero = Qrels::parse("1 0 a 0\n1 0 b 0\n").unwrap();
    assert_eq!(ndcg_at_k(&run, &zero, 10), 0.0);
    assert_eq!(mrr_at_k(&run, &Qrels::default(), 10), 0.0);
    let empty = Run { tag: "t".into(), rows: vec![] };
    assert_eq!(evaluate(&empty, &perfect), Metrics { mrr10: 0.0, ndcg10: 0.0, recall1000: 0.0 });
}

#[test]
fn metrics_match_brute_force_on_random_cases() {
    for seed in 0..50 {
        let (run, qrels) = random_case(seed);
        for k in [1, 3, 10] {
            assert!((mrr_at_k(&run, &qrels, k) - oracle_mrr(&run, &qrels, k)).abs() <= 1e-12, "mrr seed {seed} k {k}");
            assert!(
                (ndcg_at_k(&run, &qrels, k) - oracle_ndcg(&run, &qrels, k)).abs() <= 1e-12,
                "ndcg seed {seed} k {k}"
            );
            assert!(
                (recall_at_k(&run, &qrels, k) - oracle_recall(&run, &qrels, k)).abs() <= 1e-12,
                "recall seed {seed} k {k}"
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metrics_lie_in_unit_interval(seed in 0u64..10_000, k in 0usize..12) {
        let (run, qrels) = random_case(seed);
        for v in [mrr_at_k(&run, &qrels, k), ndcg_at_k(&run, &qrels, k), recall_at_k(&run, &qrels, k)] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn listwise_loss_is_shift_invariant(s in prop::collection::vec(-20.0f64..20.0, 2..9), c in -50.0f64..50.0) {
        let shifted: Vec<f64> = s.iter().map(|v| v + c).collect();
        prop_assert!((listwise_loss(&s).unwrap() - listwise_loss(&shifted).unwrap()).abs() <= 1e-12);
    }
}
