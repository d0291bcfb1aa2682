use std::io::Write;

use peft_forge::pet::Tuning;
use peft_forge::ranking::{Architecture, RankingExample, RankingModel};
use peft_forge::training::{check_model_gradients, jitter_trainable, GradCheckOptions};
use peft_forge::{Encoder, EncoderConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::commands::w;
use crate::failure::Failure;

pub const MAX_CHECK_DIM: usize = 16;
const VOCAB: usize = 24;
const INIT_STD: f64 = 0.3;
const JITTER_STD: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckArgs {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub seeds: u64,
    pub tol: f64,
    /// Restricts the run to configurations whose label starts with one of
    /// these names; empty runs everything.
    pub only: Vec<String>,
    pub corrupt: bool,
}

impl Default for GradCheckArgs {
    fn default() -> Self {
        Self { d_model: 8, n_heads: 2, n_layers: 2, seeds: 20, tol: 1e-4, only: Vec::new(), corrupt: false }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckLine {
    pub label: String,
    pub checked: usize,
    pub failures: usize,
    pub max_rel_error: f64,
}

impl GradCheckLine {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.checked > 0
    }
}

/// The bare encoder plus every tuning method, sized for `d`-wide layers.
pub fn check_configs() -> Vec<(String, Option<Tuning>)> {
    let mut out = vec![("bare".to_string(), None)];
    for desc in [
        "full",
        "bitfit",
        "prefix l=2",
        "adapter r=2",
        "mam r=2 l=2",
        "lora r=2 s=0.5",
        "ss_prefix l=2 ls=1",
        "ss_lora r=2",
        "iaa-s r=2 ar=2",
        "iaa-l r=2 ar=3",
        "iaa-m r=2 ar=3",
    ] {
        let t: Tuning = desc.parse().expect("fixed descriptions parse");
        out.push((t.to_string(), Some(t)));
    }
    out
}

fn tokens(rng: &mut ChaCha8Rng, max_len: usize) -> Vec<usize> {
    let n = rng.random_range(1..=max_len);
    (0..n).map(|_| rng.random_range(4..VOCAB)).collect()
}

fn batch(rng: &mut ChaCha8Rng) -> Result<Vec<RankingExample>, Failure> {
    (0..2)
        .map(|_| {
            let negs = (0..2).map(|_| tokens(rng, 4)).collect();
            Ok(RankingExample::new(tokens(rng, 3), tokens(rng, 4), negs)?)
        })
        .collect()
}

fn check_one(
    enc: &EncoderConfig,
    tuning: Option<&Tuning>,
    arch: Architecture,
    seed: u64,
    args: &GradCheckArgs,
) -> Result<peft_forge::training::GradCheckReport, Failure> {
    let encoder = Encoder::<f64>::random(enc.clone(), INIT_STD, seed)?;
    let mut model = RankingModel::new(encoder, arch)?;
    if let Some(t) = tuning {
        model.install(t, seed.wrapping_add(1000))?;
    }
    jitter_trainable(model.encoder_mut().store_mut(), JITTER_STD, seed.wrapping_add(2000))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(3000));
    let b = batch(&mut rng)?;
    let opts = GradCheckOptions { tol: args.tol, seed, corrupt: args.corrupt, ..GradCheckOptions::default() };
    Ok(check_model_gradients(&mut model, &b, &opts)?)
}

/// Runs finite-difference checks over every configuration, on both
/// architectures where the method allows it, and prints one line each.
pub fn grad_check_cmd(args: &GradCheckArgs, out: &mut dyn Write) -> Result<Vec<GradCheckLine>, Failure> {
    if args.d_model > MAX_CHECK_DIM {
        return Err(Failure::Usage(format!("gradient checks need d_model <= {MAX_CHECK_DIM}, got {}", args.d_model)));
    }
    if args.seeds == 0 {
        return Err(Failure::Usage("--seeds must be at least 1".into()));
    }
    let enc = EncoderConfig::new(args.d_model, args.n_heads, args.n_layers, VOCAB, 12);
    enc.validate()?;
    let mut lines = Vec::new();
    for (label, tuning) in check_configs() {
        if !args.only.is_empty() && !args.only.iter().any(|o| label.starts_with(o.as_str())) {
            continue;
        }
        let archs: &[Architecture] = if tuning.as_ref().is_some_and(Tuning::is_semi_siamese) {
            &[Architecture::Bi]
        } else {
            &[Architecture::Bi, Architecture::Cross]
        };
        let mut line = GradCheckLine { label: label.clone(), checked: 0, failures: 0, max_rel_error: 0.0 };
        for &arch in archs {
            for seed in 0..args.seeds {
                let r = check_one(&enc, tuning.as_ref(), arch, seed, args)?;
                line.checked += r.checked;
                line.failures += r.failures;
                line.max_rel_error = line.max_rel_error.max(r.max_rel_error);
            }
        }
        let arch_names: Vec<&str> = archs.iter().map(|a| a.name()).collect();
        writeln!(
            out,
            "{:<6} {:<36} {:<9} {:>5} coords  max rel err {:.2e}",
            if line.passed() { "PASS" } else { "FAIL" },
            label,
            arch_names.join("+"),
            line.checked,
            line.max_rel_error
        )
        .map_err(w)?;
        lines.push(line);
    }
    if lines.is_empty() {
        return Err(Failure::Usage(format!("no configuration matches {:?}", args.only)));
    }
    let failed = lines.iter().filter(|l| !l.passed()).count();
    writeln!(out, "{} of {} configurations passed at tol {:e}", lines.len() - failed, lines.len(), args.tol)
        .map_err(w)?;
    Ok(lines)
}
