//! Acceptance suite. Prints one PASS/FAIL line per criterion; pass criterion
//! numbers as arguments to run a subset.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use peft_forge::data::{generate_synthetic, Qrels, Run, Synthetic, SyntheticSpec};
use peft_forge::iaa::{discrepancy_probe, IaaConfig, IaaVariant, InsideKind};
use peft_forge::pet::{count_params, install_tuning, matched_tuning, PetConfig, Tuning};
use peft_forge::ranking::{
    examples_from_triples, mrr_at_k, ndcg_at_k, recall_at_k, Architecture, RankingExample, RankingModel,
};
use peft_forge::training::{inverse_cloze_examples, mine_hard_negatives, train, DevSet, TrainConfig, TrainReport};
use peft_forge::{Encoder, EncoderConfig, ParamStore, Tensor, Tower};
use peft_forge_cli::count::{label_rows, LabelStatus};
use peft_forge_cli::gradcheck::{grad_check_cmd, GradCheckArgs};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

/// Criterion 1 fails on exactly this row: its printed label is 6.7% but the
/// configuration counts 8,294,400 parameters (7.62%).
const ANALYZED_LABEL_FAILURE: (&str, usize) = ("iaa-m inside=adapter r=185 ar=960", 8_294_400);

// ---- shared setups -------------------------------------------------------

/// Toy encoder on the default synthetic benchmark.
fn toy(vocab: usize) -> EncoderConfig {
    EncoderConfig::new(64, 2, 2, vocab, 64)
}

/// 0.5% of the toy backbone.
fn toy_budget(enc: &EncoderConfig) -> usize {
    (0.005 * enc.backbone_param_count() as f64) as usize
}

struct Bench {
    syn: Synthetic,
    train_n: usize,
    examples: Vec<RankingExample>,
}

impl Bench {
    fn new(spec: SyntheticSpec) -> Self {
        let syn = generate_synthetic(&spec).unwrap();
        let train_n = 500;
        let train_q = &syn.queries[..train_n];
        let triples: Vec<_> = syn.triples.iter().filter(|t| train_q.iter().any(|q| q.id == t.qid)).cloned().collect();
        let examples = examples_from_triples(&triples, train_q, &syn.corpus).unwrap();
        Bench { syn, train_n, examples }
    }

    fn dev(&self) -> DevSet<'_> {
        DevSet { queries: &self.syn.queries[self.train_n..], corpus: &self.syn.corpus, qrels: &self.syn.qrels }
    }

    fn train_triples(&self) -> Vec<peft_forge::data::Triple> {
        let train_q = &self.syn.queries[..self.train_n];
        self.syn.triples.iter().filter(|t| train_q.iter().any(|q| q.id == t.qid)).cloned().collect()
    }
}

fn model(enc: &EncoderConfig, arch: Architecture, seed: u64) -> RankingModel<f32> {
    RankingModel::new(Encoder::random(enc.clone(), 0.02, seed).unwrap(), arch).unwrap()
}

fn copy_matching<T: peft_forge::Real>(from: &ParamStore<T>, to: &mut ParamStore<T>) {
    for (_, p) in from.iter() {
        if let Some(id) = to.id(p.path()) {
            to.set_value(id, p.value().clone()).unwrap();
        }
    }
}

fn bits(t: &Tensor<f64>) -> Vec<u64> {
    t.data().iter().map(|v| v.to_bits()).collect()
}

// ---- criteria ------------------------------------------------------------

fn parameter_budget_labels() -> Outcome {
    let start = Instant::now();
    let rows = label_rows();
    let elapsed = start.elapsed();
    let known = rows.iter().filter(|r| r.status == LabelStatus::KnownMismatch).count();
    let bad: Vec<String> = rows
        .iter()
        .filter(|r| r.status == LabelStatus::Mismatch)
        .map(|r| format!("{} = {} ({:.3}% vs label {}%)", r.tuning, r.count, r.percent, r.label))
        .collect();
    let passed = bad.is_empty() && elapsed < Duration::from_secs(1);
    outcome(
        passed,
        format!(
            "{} rows, {known} flagged known mismatches, unexpected: [{}], {:.3}s",
            rows.len(),
            bad.join("; "),
            elapsed.as_secs_f64()
        ),
    )
}

fn label_failure_is_the_analyzed_one() -> bool {
    let bad: Vec<(String, usize)> = label_rows()
        .iter()
        .filter(|r| r.status == LabelStatus::Mismatch)
        .map(|r| (r.tuning.to_string(), r.count))
        .collect();
    bad == [(ANALYZED_LABEL_FAILURE.0.to_string(), ANALYZED_LABEL_FAILURE.1)]
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let mut sink = Vec::new();
    let lines = grad_check_cmd(&GradCheckArgs::default(), &mut sink).unwrap();
    let elapsed = start.elapsed();
    let failed: Vec<&str> = lines.iter().filter(|l| !l.passed()).map(|l| l.label.as_str()).collect();
    let worst = lines.iter().map(|l| l.max_rel_error).fold(0.0, f64::max);
    let coords: usize = lines.iter().map(|l| l.checked).sum();
    outcome(
        failed.is_empty() && lines.len() == 12 && elapsed < Duration::from_secs(120),
        format!(
            "{} configurations, {coords} coordinates, max rel err {worst:.2e}, failed {failed:?}, {:.1}s",
            lines.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn zero_init_transparency() -> Outcome {
    let enc = EncoderConfig::new(16, 2, 2, 60, 24);
    let mut tunings =
        vec![Tuning::Pet(PetConfig::adapter(3)), Tuning::Pet(PetConfig::lora(3)), Tuning::Pet(PetConfig::ss_lora(3))];
    for v in IaaVariant::ALL {
        for inside in [InsideKind::Adapter, InsideKind::Lora] {
            tunings.push(Tuning::Iaa(IaaConfig::new(v, inside, 2, 3)));
        }
    }
    let bare = Encoder::<f64>::random(enc.clone(), 0.5, 7).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let inputs: Vec<Vec<usize>> = (0..100)
        .map(|_| {
            let n = rng.random_range(1..=20);
            (0..n).map(|_| rng.random_range(0..60)).collect()
        })
        .collect();
    let mut differing = Vec::new();
    for t in &tunings {
        let mut e = Encoder::<f64>::random(enc.clone(), 0.5, 7).unwrap();
        install_tuning(&mut e, t, 8).unwrap();
        let same = inputs.iter().all(|x| {
            [Tower::Query, Tower::Document]
                .iter()
                .all(|&tw| bits(&bare.encode_value(x, tw).unwrap()) == bits(&e.encode_value(x, tw).unwrap()))
        });
        if !same {
            differing.push(t.to_string());
        }
    }
    // the parallel adapter of MAM against a prefix-only model sharing its prefixes
    let mut mam = Encoder::<f64>::random(enc.clone(), 0.5, 7).unwrap();
    install_tuning(&mut mam, &Tuning::Pet(PetConfig::mam(3, 2)), 8).unwrap();
    let mut prefix = Encoder::<f64>::random(enc.clone(), 0.5, 7).unwrap();
    install_tuning(&mut prefix, &Tuning::Pet(PetConfig::prefix(2)), 99).unwrap();
    copy_matching(mam.store(), prefix.store_mut());
    if !inputs.iter().all(|x| {
        bits(&mam.encode_value(x, Tower::Query).unwrap()) == bits(&prefix.encode_value(x, Tower::Query).unwrap())
    }) {
        differing.push("mam".into());
    }
    outcome(differing.is_empty(), format!("{} configurations x 100 inputs, differing {differing:?}", tunings.len() + 1))
}

fn freezing_contract() -> Outcome {
    let spec = SyntheticSpec {
        n_topics: 6,
        n_queries: 60,
        n_docs: 120,
        vocab_size: 300,
        query_len: 4,
        doc_len: 10,
        negatives: 3,
        seed: 11,
        ..SyntheticSpec::default()
    };
    let syn = generate_synthetic(&spec).unwrap();
    let ex = examples_from_triples(&syn.triples, &syn.queries, &syn.corpus).unwrap();
    let enc = EncoderConfig::new(16, 2, 1, 300, 16);
    let mut tunings: Vec<Tuning> = [
        PetConfig::bitfit(),
        PetConfig::prefix(2),
        PetConfig::adapter(2),
        PetConfig::mam(2, 2),
        PetConfig::lora(2),
        PetConfig::ss_prefix(2, 1),
        PetConfig::ss_lora(2),
    ]
    .into_iter()
    .map(Tuning::Pet)
    .collect();
    for v in IaaVariant::ALL {
        for inside in [InsideKind::Adapter, InsideKind::Lora] {
            tunings.push(Tuning::Iaa(IaaConfig::new(v, inside, 2, 3)));
        }
    }
    let mut problems = Vec::new();
    let mut runs = 0;
    for t in &tunings {
        let archs: &[Architecture] =
            if t.is_semi_siamese() { &[Architecture::Bi] } else { &[Architecture::Bi, Architecture::Cross] };
        for &arch in archs {
            runs += 1;
            let mut m = RankingModel::new(Encoder::<f32>::random(enc.clone(), 0.02, 3).unwrap(), arch).unwrap();
            m.install(t, 4).unwrap();
            let head = if arch == Architecture::Cross { enc.d_model + 1 } else { 0 };
            let expected = count_params(t, &enc).total + head;
            let count = m.encoder().store().trainable_count();
            if count != expected {
                problems.push(format!("{t} {}: {count} trainable, formula {expected}", arch.name()));
            }
            let before = m.encoder().store().frozen_checksum();
            let cfg = TrainConfig {
                epochs: 1000,
                batch_size: 4,
                lr: 1e-3,
                max_steps: Some(200),
                select_best: false,
                ..TrainConfig::default()
            };
            let rep = train(&mut m, &ex, None, &cfg).unwrap();
            if rep.steps.len() != 200 || m.encoder().store().frozen_checksum() != before || rep.frozen_after != before {
                problems.push(format!("{t} {}: frozen parameters changed", arch.name()));
            }
        }
    }
    outcome(problems.is_empty(), format!("{runs} runs of 200 steps, problems {problems:?}"))
}

fn discrepancy_probe_criterion() -> Outcome {
    let start = Instant::now();
    let bench = Bench::new(SyntheticSpec::default());
    let enc = toy(bench.syn.corpus.vocab().len());
    let batch = &bench.examples[..16];

    let mut full = model(&enc, Architecture::Bi, 1);
    full.install(&Tuning::Pet(PetConfig::full()), 0).unwrap();
    let delta_full = discrepancy_probe(&full, batch).unwrap();

    let mut dead = model(&enc, Architecture::Bi, 1);
    let store = dead.encoder_mut().store_mut();
    for id in store.ids().collect::<Vec<_>>() {
        store.set_trainable(id, false);
    }
    store.add("unreachable", Tensor::zeros(&[4]), true).unwrap();
    let delta_dead = discrepancy_probe(&dead, batch).unwrap();

    let budget = toy_budget(&enc);
    let adapter = matched_tuning("adapter", budget, &enc).unwrap();
    let iaa = matched_tuning("iaa-l", budget, &enc).unwrap();
    let mut wins = 0;
    let mut per_seed = Vec::new();
    for seed in 0..3u64 {
        let mean = |t: &Tuning| {
            let mut m = model(&enc, Architecture::Bi, 1);
            m.install(t, 100 + seed).unwrap();
            let cfg = TrainConfig {
                epochs: 100,
                batch_size: 16,
                lr: 1e-4,
                max_steps: Some(50),
                probe_every: 1,
                probe_until: Some(50),
                seed,
                select_best: false,
                ..TrainConfig::default()
            };
            train(&mut m, &bench.examples, None, &cfg).unwrap().mean_delta(1, 50).unwrap()
        };
        let (a, b) = (mean(&adapter), mean(&iaa));
        if b < a {
            wins += 1;
        }
        per_seed.push(format!("{a:.6}/{b:.6}"));
    }
    let elapsed = start.elapsed();
    outcome(
        delta_full == 0.0 && delta_dead == 1.0 && wins == 3 && elapsed < Duration::from_secs(300),
        format!(
            "full {delta_full}, unreachable {delta_dead}; mean delta {adapter} / {iaa} per seed [{}], {wins}/3 lower, {:.0}s",
            per_seed.join(", "),
            elapsed.as_secs_f64()
        ),
    )
}

fn convergence() -> Outcome {
    let start = Instant::now();
    let bench = Bench::new(SyntheticSpec { negatives: 5, ..SyntheticSpec::default() });
    let enc = toy(bench.syn.corpus.vocab().len());
    let budget = toy_budget(&enc);
    let adapter = matched_tuning("adapter", budget, &enc).unwrap();
    let iaa = matched_tuning("iaa-l", budget, &enc).unwrap();
    let ln6 = 6f64.ln();
    let mut wins = 0;
    let mut starts_ok = true;
    let mut per_seed = Vec::new();
    for seed in 0..3u64 {
        let run = |t: &Tuning| {
            let mut m = model(&enc, Architecture::Cross, 1);
            m.install(t, 100 + seed).unwrap();
            let cfg = TrainConfig {
                epochs: 100,
                batch_size: 16,
                lr: 1e-3,
                max_steps: Some(300),
                seed,
                select_best: false,
                ..TrainConfig::default()
            };
            train(&mut m, &bench.examples, None, &cfg).unwrap()
        };
        let (ra, rb) = (run(&adapter), run(&iaa));
        for r in [&ra, &rb] {
            starts_ok &= (r.steps[0].loss - ln6).abs() <= 0.01 * ln6;
        }
        let (a, b) = (ra.mean_loss(100, 300).unwrap(), rb.mean_loss(100, 300).unwrap());
        if b <= a {
            wins += 1;
        }
        per_seed.push(format!("{a:.4}/{b:.4}"));
    }
    let elapsed = start.elapsed();
    outcome(
        wins >= 2 && starts_ok && elapsed < Duration::from_secs(600),
        format!(
            "mean loss 100-300 {adapter} / {iaa} per seed [{}], {wins}/3 not worse, start within 1% of ln 6: {starts_ok}, {:.0}s",
            per_seed.join(", "),
            elapsed.as_secs_f64()
        ),
    )
}

// Brute-force scorers built from per-document ranks.

fn doc_ranks(run: &Run) -> BTreeMap<(String, String), usize> {
    run.rows.iter().map(|r| ((r.qid.clone(), r.docid.clone()), r.rank)).collect()
}

fn per_query_mean(run: &Run, mut f: impl FnMut(&str) -> f64) -> f64 {
    let qids: BTreeSet<&str> = run.rows.iter().map(|r| r.qid.as_str()).collect();
    if qids.is_empty() {
        return 0.0;
    }
    qids.iter().map(|q| f(q)).sum::<f64>() / qids.len() as f64
}

fn oracle_mrr(run: &Run, qrels: &Qrels, k: usize) -> f64 {
    let rk = doc_ranks(run);
    per_query_mean(run, |q| {
        rk.iter()
            .filter(|((qq, d), &r)| qq == q && r <= k && qrels.grade(q, d) > 0)
            .map(|(_, &r)| r)
            .min()
            .map_or(0.0, |r| 1.0 / r as f64)
    })
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
    let rk = doc_ranks(run);
    per_query_mean(run, |q| {
        let mut at = vec![0u32; k];
        for ((qq, d), &r) in &rk {
            if qq == q && r <= k {
                at[r - 1] = qrels.grade(q, d);
            }
        }
        let judged: Vec<u32> = qrels.query(q).map(|m| m.values().copied().collect()).unwrap_or_default();
        let ideal = permutations(&judged).iter().map(|p| dcg(&p[..p.len().min(k)])).fold(0.0, f64::max);
        if ideal > 0.0 {
            dcg(&at) / ideal
        } else {
            0.0
        }
    })
}

fn oracle_recall(run: &Run, qrels: &Qrels, k: usize) -> f64 {
    let rk = doc_ranks(run);
    per_query_mean(run, |q| {
        let relevant: BTreeSet<&String> =
            qrels.query(q).map(|m| m.iter().filter(|(_, &g)| g > 0).map(|(d, _)| d).collect()).unwrap_or_default();
        let top: BTreeSet<&String> = rk.iter().filter(|((qq, _), &r)| qq == q && r <= k).map(|((_, d), _)| d).collect();
        if relevant.is_empty() {
            0.0
        } else {
            relevant.intersection(&top).count() as f64 / relevant.len() as f64
        }
    })
}

fn random_case(seed: u64) -> (Run, Qrels) {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
    let mut scores = BTreeMap::new();
    let mut qrels = Qrels::default();
    for q in 0..rng.random_range(1..6) {
        let qid = format!("q{q}");
        let n = rng.random_range(1..15);
        let cands: Vec<(String, f64)> =
            (0..n).map(|d| (format!("d{d}"), rng.random_range(0..8) as f64 / 4.0)).collect();
        if rng.random_bool(0.9) {
            for d in rand::seq::index::sample(&mut rng, n + 3, (n + 3).min(7)) {
                if rng.random_bool(0.6) {
                    qrels.insert(&qid, &format!("d{d}"), rng.random_range(0..4)).unwrap();
                }
            }
        }
        scores.insert(qid, cands);
    }
    (Run::from_scores("oracle", scores, 100), qrels)
}

fn metric_oracles() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..50 {
        let (run, qrels) = random_case(seed);
        for k in [1, 3, 5, 10, 100] {
            worst = worst
                .max((mrr_at_k(&run, &qrels, k) - oracle_mrr(&run, &qrels, k)).abs())
                .max((ndcg_at_k(&run, &qrels, k) - oracle_ndcg(&run, &qrels, k)).abs())
                .max((recall_at_k(&run, &qrels, k) - oracle_recall(&run, &qrels, k)).abs());
        }
    }
    outcome(worst <= 1e-12, format!("50 instances x 5 cutoffs, max abs difference {worst:e}"))
}

fn learnability() -> Outcome {
    let start = Instant::now();
    let bench = Bench::new(SyntheticSpec::default());
    let enc = toy(bench.syn.corpus.vocab().len());
    let dev = bench.dev();

    let full_start = Instant::now();
    let mut full = model(&enc, Architecture::Bi, 1);
    full.install(&Tuning::Pet(PetConfig::full()), 2).unwrap();
    let cfg = TrainConfig { epochs: 3, lr: 1e-3, ..TrainConfig::default() };
    let full_mrr = train(&mut full, &bench.examples, Some(dev), &cfg).unwrap().best_metrics().unwrap().mrr10;
    let full_time = full_start.elapsed();

    // PET starts from a backbone pretrained with the unsupervised inverse-cloze task
    let mut pre = model(&enc, Architecture::Bi, 1);
    pre.install(&Tuning::Pet(PetConfig::full()), 2).unwrap();
    let ict = inverse_cloze_examples(&bench.syn.corpus, 7, 5).unwrap();
    let cfg = TrainConfig { epochs: 1, lr: 1e-3, select_best: false, ..TrainConfig::default() };
    train(&mut pre, &ict, None, &cfg).unwrap();
    let pre_mrr =
        peft_forge::ranking::evaluate(&pre.rank(dev.queries, dev.corpus, 1000, "pre").unwrap(), dev.qrels).mrr10;

    let budget = toy_budget(&enc);
    let threshold = 0.8 * full_mrr;
    let mut lines = Vec::new();
    let mut all_ok = true;
    for name in ["bitfit", "prefix", "adapter", "mam", "lora", "ss_prefix", "ss_lora", "iaa-s", "iaa-l", "iaa-m"] {
        let t = matched_tuning(name, budget, &enc).unwrap();
        let mut m = model(&enc, Architecture::Bi, 1);
        m.install(&t, 2).unwrap();
        copy_matching(pre.encoder().store(), m.encoder_mut().store_mut());
        let cfg = TrainConfig { epochs: 3, lr: peft_forge::training::default_lr(&t), ..TrainConfig::default() };
        let mrr = train(&mut m, &bench.examples, Some(dev), &cfg).unwrap().best_metrics().unwrap().mrr10;
        all_ok &= mrr >= threshold;
        lines.push(format!("{t} {mrr:.3}"));
    }
    outcome(
        full_mrr >= 0.6 && full_time < Duration::from_secs(300) && all_ok,
        format!(
            "full {full_mrr:.3} in {:.0}s; pretrained backbone alone {pre_mrr:.3}; PET threshold {threshold:.3}: {}; {:.0}s total",
            full_time.as_secs_f64(),
            lines.join(", "),
            start.elapsed().as_secs_f64()
        ),
    )
}

fn hard_negative_pipeline() -> Outcome {
    let bench = Bench::new(SyntheticSpec::default());
    let enc = toy(bench.syn.corpus.vocab().len());
    let dev = bench.dev();
    let triples = bench.train_triples();
    let train_q = &bench.syn.queries[..bench.train_n];
    let mut kept = 0;
    let mut per_seed = Vec::new();
    for seed in 0..3u64 {
        let mut m = model(&enc, Architecture::Bi, seed);
        m.install(&Tuning::Pet(PetConfig::full()), seed).unwrap();
        let cfg = TrainConfig { epochs: 1, lr: 1e-3, seed, ..TrainConfig::default() };
        let warm = train(&mut m, &bench.examples, Some(dev), &cfg).unwrap().epochs[0].metrics.mrr10;
        let mined = mine_hard_negatives(&m, &bench.syn.corpus, train_q, &bench.syn.qrels, &triples, 7).unwrap();
        let hard = examples_from_triples(&mined, train_q, &bench.syn.corpus).unwrap();
        let cfg = TrainConfig { epochs: 2, lr: 2e-5, seed, ..TrainConfig::default() };
        let after = train(&mut m, &hard, Some(dev), &cfg).unwrap().best_metrics().unwrap().mrr10;
        if after >= warm {
            kept += 1;
        }
        per_seed.push(format!("{warm:.3} -> {after:.3}"));
    }
    outcome(kept >= 2, format!("dev MRR@10 warm-up -> hard negatives [{}], {kept}/3 not lower", per_seed.join(", ")))
}

fn loss_stability_observable() -> Outcome {
    let bench = Bench::new(SyntheticSpec::default());
    let enc = toy(bench.syn.corpus.vocab().len());
    let mut stds = Vec::new();
    let mut round_trips = true;
    for t in [Tuning::Pet(PetConfig::adapter(2)), Tuning::Pet(PetConfig::full())] {
        let mut m = model(&enc, Architecture::Bi, 1);
        m.install(&t, 2).unwrap();
        let cfg = TrainConfig {
            epochs: 100,
            lr: peft_forge::training::default_lr(&t),
            max_steps: Some(100),
            probe_every: 10,
            ..TrainConfig::default()
        };
        let mut rep = train(&mut m, &bench.examples, None, &cfg).unwrap();
        rep.meta.push(("tuning".into(), t.to_string()));
        let parsed = TrainReport::parse(&rep.render()).unwrap();
        round_trips &= parsed == rep && parsed.render() == rep.render();
        stds.push(parsed.loss_std(1, 100));
    }
    let (Some(adapter), Some(full)) = (stds[0], stds[1]) else {
        return outcome(false, "loss std over steps 1-100 unavailable".into());
    };
    outcome(
        round_trips && adapter.is_finite() && full.is_finite(),
        format!(
            "loss std over steps 1-100: adapter {adapter:.5}, full {full:.5}; report round trip exact: {round_trips}"
        ),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("parameter-budget labels", parameter_budget_labels),
        ("gradient correctness", gradient_correctness),
        ("zero-init transparency", zero_init_transparency),
        ("freezing contract", freezing_contract),
        ("discrepancy probe", discrepancy_probe_criterion),
        ("convergence", convergence),
        ("metric oracles", metric_oracles),
        ("learnability", learnability),
        ("hard-negative pipeline", hard_negative_pipeline),
        ("loss-stability observable", loss_stability_observable),
    ];
    let selected: BTreeSet<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut unexpected = Vec::new();
    let mut analyzed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let o = run();
        println!("criterion {n:>2} {:<4} {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        if !o.passed {
            if n == 1 && label_failure_is_the_analyzed_one() {
                analyzed.push(n);
            } else {
                unexpected.push(n);
            }
        }
    }
    if !analyzed.is_empty() {
        println!("analyzed failures: {analyzed:?} (a printed label that disagrees with its own configuration)");
    }
    if !unexpected.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
