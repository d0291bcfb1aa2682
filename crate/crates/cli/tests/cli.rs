use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use peft_forge::data::{read_qrels, read_run, read_triples};
use peft_forge::ranking::{mrr_at_k, ndcg_at_k, recall_at_k, Architecture, RankingModel};
use peft_forge::{Encoder, Tensor};
use peft_forge_cli::commands::expand_budget_split;
use peft_forge_cli::config::{load_config, ExperimentConfig, RawConfig};
use peft_forge_cli::count::{label_rows, LabelStatus};
use peft_forge_cli::setup::{encoder_config, load_dataset, save_model};
use tempfile::TempDir;

const SMALL: &str = "\
seed = 0
[encoder]
d_model = 16
n_heads = 2
n_layers = 1
max_seq_len = 32
[model]
architecture = bi
tuning = adapter r=2
[train]
epochs = 2
batch_size = 8
lr = 1e-3
[data]
n_topics = 5
n_queries = 60
dev_queries = 10
n_docs = 100
vocab_size = 200
negatives = 3
";

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("peft-forge").chain(args.iter().copied()).map(String::from);
    let code = peft_forge_cli::main_with(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn setup(text: &str) -> (TempDir, PathBuf) {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("exp.conf");
    std::fs::write(&path, text).unwrap();
    (dir, path)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn count_params_examples() {
    let cases = [
        ("adapter r=16", "589824", "0.536%"),
        ("bitfit", "102144", "0.093%"),
        ("iaa-l r=50 ar=300", "7372800", "6.703%"),
    ];
    for (tuning, count, nominal) in cases {
        let set = format!("model.tuning={tuning}");
        let (code, out, err) = run(&["count-params", "--bert-base", "--set", &set]);
        assert_eq!(code, 0, "{err}");
        let total = out.lines().find(|l| l.starts_with("total:")).unwrap();
        assert!(total.contains(count) && total.contains(nominal), "{tuning}: {total}");
    }
}

#[test]
fn count_params_prints_every_layer() {
    let (code, out, _) = run(&["count-params", "--set", "model.tuning=lora r=2", "--set", "encoder.n_layers=3"]);
    assert_eq!(code, 0);
    assert_eq!(out.lines().filter(|l| l.starts_with("layer ")).count(), 3);
    // 4 * r * d per layer at d = 64
    assert!(out.contains("layer 2: 512"), "{out}");
    assert!(out.contains("total: 1536"), "{out}");
}

#[test]
fn label_table_statuses() {
    let rows = label_rows();
    assert_eq!(rows.len(), 16);
    let known: Vec<String> =
        rows.iter().filter(|r| r.status == LabelStatus::KnownMismatch).map(|r| r.tuning.to_string()).collect();
    assert_eq!(known, ["prefix l=200", "iaa-l inside=adapter r=12 ar=12"]);
    let unexpected: Vec<(String, usize)> =
        rows.iter().filter(|r| r.status == LabelStatus::Mismatch).map(|r| (r.tuning.to_string(), r.count)).collect();
    assert_eq!(unexpected, [("iaa-m inside=adapter r=185 ar=960".to_string(), 8_294_400)]);
    let bitfit = rows.iter().find(|r| r.tuning.to_string() == "bitfit").unwrap();
    assert_eq!(bitfit.count, 102_144);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["count-params", "--set", "model.tuning=nope"]).0, 2);
    assert_eq!(run(&["count-params", "--set", "model.colour=red"]).0, 2);
    assert_eq!(run(&["no-such-command"]).0, 2);
    assert_eq!(run(&["grad-check", "--d-model", "32"]).0, 2);
    let (dir, conf) = setup(SMALL);
    let out = dir.path().join("sw");
    assert_eq!(run(&["sweep", "-c", s(&conf), "--axis", "depth", "--values", "1,2", "--out", s(&out)]).0, 2);
}

#[test]
fn missing_data_file_exits_3() {
    let (_dir, conf) =
        setup("[data]\nvocab = v.txt\ncorpus = c.tsv\ntrain_queries = a\ndev_query_file = b\nqrels = q\ntriples = t\n");
    let (code, _, err) = run(&["count-params", "-c", s(&conf)]);
    assert_eq!(code, 3, "{err}");
}

#[test]
fn train_smoke_determinism_and_probe_column() {
    let (dir, conf) = setup(SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let (code, out, err) = run(&["train", "-c", s(&conf), "--probe-delta", "10", "--out", s(&a)]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("dev MRR@10"), "{out}");
    run(&["train", "-c", s(&conf), "--probe-delta", "10", "--out", s(&b)]);
    let ra = std::fs::read_to_string(a.join("report.txt")).unwrap();
    let rb = std::fs::read_to_string(b.join("report.txt")).unwrap();
    assert!(!ra.is_empty());
    assert_eq!(ra, rb);
    let report = peft_forge::training::TrainReport::parse(&ra).unwrap();
    let probed: Vec<usize> = report.steps.iter().filter(|s| s.delta.is_some()).map(|s| s.step).collect();
    assert_eq!(probed, [1, 11]);
    assert!(a.join("checkpoint.txt").exists());
}

#[test]
fn default_run_directory_is_hash_and_seed() {
    let (dir, conf) = setup(&format!("output_dir = out\n{SMALL}"));
    let cfg = load_config(Some(&conf), &["train.epochs=1".into()]).unwrap();
    let expected = cfg.run_dir();
    assert!(expected.starts_with(dir.path().join("out")));
    let name = expected.file_name().unwrap().to_str().unwrap().to_string();
    assert!(name.starts_with("run-") && name.ends_with("-s0") && name.len() == "run-".len() + 8 + 3, "{name}");
    let (code, _, err) = run(&["train", "-c", s(&conf), "--set", "train.epochs=1"]);
    assert_eq!(code, 0, "{err}");
    assert!(expected.join("report.txt").exists());
}

#[test]
fn seed_variable_overrides_config() {
    let (dir, conf) = setup(&format!("output_dir = out\n{SMALL}"));
    let status = Command::new(env!("CARGO_BIN_EXE_peft-forge"))
        .args(["train", "-c", s(&conf), "--set", "train.epochs=1"])
        .env("PEFT_FORGE_SEED", "7")
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let runs: Vec<String> = std::fs::read_dir(dir.path().join("out"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert_eq!(runs.len(), 1);
    assert!(runs[0].ends_with("-s7"), "{runs:?}");
}

#[test]
fn nan_loss_exits_4() {
    let (dir, conf) = setup(SMALL);
    let out = dir.path().join("nan");
    let (code, _, err) =
        run(&["train", "-c", s(&conf), "--set", "model.tuning=full", "--set", "train.lr=1e30", "--out", s(&out)]);
    assert_eq!(code, 4, "{err}");
    assert!(err.contains("step"), "{err}");
}

/// Bi-encoder whose [CLS] state depends only on the topic of a pure-topic
/// text: one-hot topic embeddings, uniform attention, identity value and
/// output maps, zero FFN.
fn oracle_model(cfg: &ExperimentConfig) -> RankingModel<f32> {
    let data = load_dataset(cfg).unwrap();
    let enc_cfg = encoder_config(cfg, data.corpus.vocab().len()).unwrap();
    let d = enc_cfg.d_model;
    let mut enc = Encoder::<f32>::zeros(enc_cfg.clone()).unwrap();
    let vocab = data.corpus.vocab().clone();
    let emb = enc.embeddings().token;
    let layers = enc.layers().to_vec();
    let store = enc.store_mut();
    let mut table = Tensor::<f32>::zeros(&[enc_cfg.vocab_size, d]);
    for id in 0..enc_cfg.vocab_size {
        let word = vocab.token(id).unwrap();
        if let Some(rest) = word.strip_prefix('t') {
            let topic: usize = rest.split('w').next().unwrap().parse().unwrap();
            table.data_mut()[id * d + topic] = 1.0;
        }
    }
    store.set_value(emb, table).unwrap();
    let mut eye = Tensor::<f32>::zeros(&[d, d]);
    for i in 0..d {
        eye.data_mut()[i * d + i] = 1.0;
    }
    for l in layers {
        store.set_value(l.value.weight, eye.clone()).unwrap();
        store.set_value(l.output.weight, eye.clone()).unwrap();
    }
    RankingModel::new(enc, Architecture::Bi).unwrap()
}

const ORACLE: &str = "\
[encoder]
d_model = 8
n_heads = 2
n_layers = 2
max_seq_len = 16
[model]
tuning = full
[data]
n_topics = 6
n_queries = 20
dev_queries = 20
n_docs = 60
vocab_size = 60
topic_purity = 1.0
query_len = 4
doc_len = 10
negatives = 2
";

#[test]
fn oracle_checkpoint_scores_perfect_mrr() {
    let (dir, conf) = setup(ORACLE);
    let cfg = load_config(Some(&conf), &[]).unwrap();
    let ck = dir.path().join("oracle.txt");
    save_model(&oracle_model(&cfg), &ck).unwrap();
    let run_file = dir.path().join("run.txt");
    let (code, out, err) =
        run(&["eval", "-c", s(&conf), "--checkpoint", s(&ck), "--metrics", "mrr@10", "--run", s(&run_file)]);
    assert_eq!(code, 0, "{err}");
    assert!(out.lines().any(|l| l == "MRR@10 1"), "{out}");
}

#[test]
fn eval_metrics_match_emitted_run_file() {
    let (dir, conf) = setup(SMALL);
    let trained = dir.path().join("t");
    assert_eq!(run(&["train", "-c", s(&conf), "--out", s(&trained)]).0, 0);
    let run_file = dir.path().join("run.txt");
    let ck = trained.join("checkpoint.txt");
    let (code, out, err) = run(&[
        "eval",
        "-c",
        s(&conf),
        "--checkpoint",
        s(&ck),
        "--metrics",
        "mrr@10,ndcg@10,recall@100",
        "--run",
        s(&run_file),
    ]);
    assert_eq!(code, 0, "{err}");
    let emitted = read_run(&run_file).unwrap();
    let cfg = load_config(Some(&conf), &[]).unwrap();
    let qrels = load_dataset(&cfg).unwrap().qrels;
    let gen = dir.path().join("data");
    assert_eq!(run(&["gen-data", "-c", s(&conf), "--out", s(&gen)]).0, 0);
    assert_eq!(read_qrels(&gen.join("qrels.txt")).unwrap(), qrels);
    let expect = [
        format!("MRR@10 {}", mrr_at_k(&emitted, &qrels, 10)),
        format!("nDCG@10 {}", ndcg_at_k(&emitted, &qrels, 10)),
        format!("R@100 {}", recall_at_k(&emitted, &qrels, 100)),
    ];
    for e in expect {
        assert!(out.lines().any(|l| l == e), "missing {e:?} in {out}");
    }
}

#[test]
fn eval_edge_cases() {
    let (dir, conf) = setup(SMALL);
    let trained = dir.path().join("t");
    assert_eq!(run(&["train", "-c", s(&conf), "--set", "train.epochs=1", "--out", s(&trained)]).0, 0);
    let ck = trained.join("checkpoint.txt");
    let run_file = dir.path().join("r.txt");
    let (code, out, _) =
        run(&["eval", "-c", s(&conf), "--set", "data.dev_queries=0", "--checkpoint", s(&ck), "--run", s(&run_file)]);
    assert_eq!(code, 0);
    assert_eq!(out.trim(), "no queries");
    let (code, _, err) =
        run(&["eval", "-c", s(&conf), "--set", "encoder.d_model=8", "--checkpoint", s(&ck), "--run", s(&run_file)]);
    assert_eq!(code, 3, "{err}");
    assert!(err.contains("d_model"), "{err}");
    let (code, _, err) =
        run(&["eval", "-c", s(&conf), "--set", "model.tuning=lora r=2", "--checkpoint", s(&ck), "--run", s(&run_file)]);
    assert_eq!(code, 3, "{err}");
}

#[test]
fn lr_sweep_rows() {
    let (dir, conf) = setup(SMALL);
    let out_dir = dir.path().join("sw");
    let (code, out, err) =
        run(&["sweep", "-c", s(&conf), "--axis", "lr", "--values", "4e-5,1e-4", "--out", s(&out_dir)]);
    assert_eq!(code, 0, "{err}");
    let rows: Vec<&str> = out.lines().skip(1).filter(|l| l.contains('\t')).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.ends_with("\tok")), "{out}");
    assert!(out_dir.join("lr-4e-5").join("report.txt").exists());

    let one = dir.path().join("one");
    let (code, out, _) = run(&["sweep", "-c", s(&conf), "--axis", "lr", "--values", "1e-4", "--out", s(&one)]);
    assert_eq!(code, 0);
    assert_eq!(out.lines().filter(|l| l.contains('\t')).count(), 2);
}

#[test]
fn failing_sweep_member_is_marked_and_sweep_continues() {
    let (dir, conf) = setup(SMALL);
    let out_dir = dir.path().join("sw");
    let (code, out, _) = run(&["sweep", "-c", s(&conf), "--axis", "lr", "--values=-1,1e-4", "--out", s(&out_dir)]);
    assert_eq!(code, 1);
    let rows: Vec<&str> = out.lines().skip(1).filter(|l| l.contains('\t')).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].contains("FAILED"), "{out}");
    assert!(rows[1].ends_with("\tok"), "{out}");
}

#[test]
fn budget_split_endpoints_are_inside_only_and_aside_only() {
    let raw = RawConfig::parse("[model]\ntuning = iaa-l r=2 ar=4\n").unwrap();
    let cfg = ExperimentConfig::from_raw(raw).unwrap();
    let enc = encoder_config(&cfg, 2048).unwrap();
    let total = cfg.tuning.count(&enc).total;
    let describe = |split: f64| expand_budget_split(&cfg, &enc, split).unwrap().to_string();
    assert_eq!(describe(0.0), "iaa-l inside=adapter r=4 ar=0");
    assert_eq!(describe(1.0), "iaa-l inside=adapter r=0 ar=8");
    assert_eq!(describe(0.5), "iaa-l inside=adapter r=2 ar=4");
    for split in [0.0, 0.25, 0.5, 1.0] {
        let t = expand_budget_split(&cfg, &enc, split).unwrap();
        assert!(t.count(&enc).total <= total);
    }
    let plain = ExperimentConfig::from_raw(RawConfig::parse("[model]\ntuning = adapter r=2\n").unwrap()).unwrap();
    assert!(expand_budget_split(&plain, &enc, 0.5).is_err());
}

#[test]
fn grad_check_small_single_layer_is_fast_and_passes() {
    let start = Instant::now();
    let (code, out, err) = run(&["grad-check", "--d-model", "4", "--n-heads", "1", "--n-layers", "1"]);
    let elapsed = start.elapsed().as_secs_f64();
    assert_eq!(code, 0, "{out}{err}");
    assert_eq!(out.lines().filter(|l| l.starts_with("PASS")).count(), 12, "{out}");
    assert!(elapsed < 10.0, "took {elapsed:.1}s");
}

#[test]
fn corrupted_gradient_is_reported() {
    let (code, out, _) = run(&[
        "grad-check",
        "--d-model",
        "4",
        "--n-heads",
        "1",
        "--n-layers",
        "1",
        "--seeds",
        "2",
        "--methods",
        "adapter,iaa-l",
        "--corrupt",
    ]);
    assert_eq!(code, 4);
    assert_eq!(out.lines().filter(|l| l.starts_with("FAIL")).count(), 2, "{out}");
}

#[test]
fn file_pipeline_mines_graded_negatives() {
    let (dir, conf) = setup(SMALL);
    let data = dir.path().join("data");
    assert_eq!(run(&["gen-data", "-c", s(&conf), "--out", s(&data)]).0, 0);
    let file_conf = dir.path().join("files.conf");
    let mut text = SMALL.split("[data]").next().unwrap().to_string();
    text.push_str(&std::fs::read_to_string(data.join("data.conf")).unwrap().replace(" = ", " = data/"));
    std::fs::write(&file_conf, text).unwrap();
    let trained = dir.path().join("t");
    let (code, _, err) = run(&["train", "-c", s(&file_conf), "--set", "train.epochs=1", "--out", s(&trained)]);
    assert_eq!(code, 0, "{err}");
    let hard = dir.path().join("hard.tsv");
    let ck = trained.join("checkpoint.txt");
    let (code, _, err) =
        run(&["mine-negatives", "-c", s(&file_conf), "--checkpoint", s(&ck), "--top", "3", "--out", s(&hard)]);
    assert_eq!(code, 0, "{err}");
    let qrels = read_qrels(&data.join("qrels.txt")).unwrap();
    let original = read_triples(&data.join("triples.tsv")).unwrap();
    let mined = read_triples(&hard).unwrap();
    assert_eq!(mined.len(), original.len());
    for t in &mined {
        assert!(qrels.grade(&t.qid, &t.pos) >= 1);
        assert_eq!(qrels.grade(&t.qid, &t.neg), 0);
        assert!(original.iter().any(|o| o.qid == t.qid && o.pos == t.pos));
    }
    let retrain = dir.path().join("r");
    let (code, _, err) = run(&[
        "train",
        "-c",
        s(&file_conf),
        "--set",
        &format!("data.triples={}", hard.display()),
        "--set",
        &format!("train.init_checkpoint={}", ck.display()),
        "--set",
        "train.epochs=1",
        "--out",
        s(&retrain),
    ]);
    assert_eq!(code, 0, "{err}");
}
