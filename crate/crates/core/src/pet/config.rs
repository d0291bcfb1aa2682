use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::iaa::{IaaConfig, IaaVariant, InsideKind};
use crate::transformer::EncoderConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PetMethod {
    Full,
    Bitfit,
    Prefix,
    Adapter,
    Mam,
    Lora,
    SsPrefix,
    SsLora,
}

impl PetMethod {
    pub const ALL: [PetMethod; 8] = [
        PetMethod::Full,
        PetMethod::Bitfit,
        PetMethod::Prefix,
        PetMethod::Adapter,
        PetMethod::Mam,
        PetMethod::Lora,
        PetMethod::SsPrefix,
        PetMethod::SsLora,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PetMethod::Full => "full",
            PetMethod::Bitfit => "bitfit",
            PetMethod::Prefix => "prefix",
            PetMethod::Adapter => "adapter",
            PetMethod::Mam => "mam",
            PetMethod::Lora => "lora",
            PetMethod::SsPrefix => "ss_prefix",
            PetMethod::SsLora => "ss_lora",
        }
    }

    pub fn is_semi_siamese(self) -> bool {
        matches!(self, PetMethod::SsPrefix | PetMethod::SsLora)
    }

    fn uses_r(self) -> bool {
        matches!(self, PetMethod::Adapter | PetMethod::Mam | PetMethod::Lora | PetMethod::SsLora)
    }

    fn uses_l(self) -> bool {
        matches!(self, PetMethod::Prefix | PetMethod::Mam | PetMethod::SsPrefix)
    }

    fn uses_s(self) -> bool {
        matches!(self, PetMethod::Lora | PetMethod::SsLora)
    }
}

impl FromStr for PetMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        PetMethod::ALL
            .into_iter()
            .find(|m| m.name() == norm)
            .ok_or_else(|| Error::Config(format!("unknown tuning method {s:?}")))
    }
}

/// A baseline tuning method with its hyperparameters. Fields a method does
/// not use are ignored.
#[derive(Clone, Debug, PartialEq)]
pub struct PetConfig {
    pub method: PetMethod,
    /// Bottleneck size (adapter, mam, lora, ss_lora).
    pub r: usize,
    /// Prefix length (prefix, mam) or shared prefix length (ss_prefix).
    pub l: usize,
    /// Tower-specific prefix length for ss_prefix.
    pub ls: usize,
    /// Low-rank delta scale (lora, ss_lora).
    pub s: f64,
}

impl PetConfig {
    fn base(method: PetMethod) -> Self {
        Self { method, r: 0, l: 0, ls: 0, s: 1.0 }
    }

    pub fn full() -> Self {
        Self::base(PetMethod::Full)
    }

    pub fn bitfit() -> Self {
        Self::base(PetMethod::Bitfit)
    }

    pub fn prefix(l: usize) -> Self {
        Self { l, ..Self::base(PetMethod::Prefix) }
    }

    pub fn adapter(r: usize) -> Self {
        Self { r, ..Self::base(PetMethod::Adapter) }
    }

    pub fn mam(r: usize, l: usize) -> Self {
        Self { r, l, ..Self::base(PetMethod::Mam) }
    }

    pub fn lora(r: usize) -> Self {
        Self { r, ..Self::base(PetMethod::Lora) }
    }

    /// Shared prefix of length `l` plus query- and document-only prefixes of
    /// length `ls`.
    pub fn ss_prefix(l: usize, ls: usize) -> Self {
        Self { l, ls, ..Self::base(PetMethod::SsPrefix) }
    }

    pub fn ss_lora(r: usize) -> Self {
        Self { r, ..Self::base(PetMethod::SsLora) }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.method;
        if m.uses_r() && self.r == 0 {
            return Err(Error::Config(format!("{} needs r >= 1", m.name())));
        }
        if m.uses_l() && self.l == 0 {
            return Err(Error::Config(format!("{} needs l >= 1", m.name())));
        }
        if m.uses_s() && !(self.s > 0.0 && self.s.is_finite()) {
            return Err(Error::Config(format!("{} needs s > 0, got {}", m.name(), self.s)));
        }
        Ok(())
    }

    /// Trainable parameters per layer and outside the layers.
    pub fn counts(&self, enc: &EncoderConfig) -> (usize, usize) {
        let d = enc.d_model;
        let (r, l) = (self.r, self.l);
        match self.method {
            PetMethod::Full => {
                (enc.layer_param_count(), enc.backbone_param_count() - enc.n_layers * enc.layer_param_count())
            }
            // q, k, v, attention output, LN1, FFN inner, FFN output, LN2
            PetMethod::Bitfit => (7 * d + enc.d_ffn, d),
            PetMethod::Prefix => (2 * l * d, 0),
            PetMethod::Adapter => (4 * r * d, 0),
            PetMethod::Mam => (2 * r * d + 2 * l * d, 0),
            PetMethod::Lora => (4 * r * d, 0),
            PetMethod::SsPrefix => (2 * d * (l + 2 * self.ls), 0),
            PetMethod::SsLora => (6 * r * d, 0),
        }
    }
}

impl fmt::Display for PetConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = self.method;
        f.write_str(m.name())?;
        if m.uses_r() {
            write!(f, " r={}", self.r)?;
        }
        if m.uses_l() {
            write!(f, " l={}", self.l)?;
        }
        if m == PetMethod::SsPrefix {
            write!(f, " ls={}", self.ls)?;
        }
        if m.uses_s() {
            write!(f, " s={}", self.s)?;
        }
        Ok(())
    }
}

/// Any tuning regime: a baseline method or an inside+aside wiring.
#[derive(Clone, Debug, PartialEq)]
pub enum Tuning {
    Pet(PetConfig),
    Iaa(IaaConfig),
}

impl Tuning {
    pub fn validate(&self) -> Result<()> {
        match self {
            Tuning::Pet(c) => c.validate(),
            Tuning::Iaa(c) => c.validate(),
        }
    }

    pub fn is_full(&self) -> bool {
        matches!(self, Tuning::Pet(PetConfig { method: PetMethod::Full, .. }))
    }

    pub fn is_semi_siamese(&self) -> bool {
        matches!(self, Tuning::Pet(c) if c.method.is_semi_siamese())
    }

    /// Builds a tuning from a method name and `key=value` hyperparameters.
    pub fn from_parts(method: &str, keys: &BTreeMap<String, String>) -> Result<Self> {
        fn num<V: FromStr>(keys: &BTreeMap<String, String>, k: &str) -> Result<Option<V>> {
            keys.get(k)
                .map(|v| v.trim().parse().map_err(|_| Error::Config(format!("bad value {v:?} for {k}"))))
                .transpose()
        }
        let allowed = ["r", "l", "ls", "s", "ar", "inside"];
        if let Some(k) = keys.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown tuning key {k:?}")));
        }
        let norm = method.trim().to_ascii_lowercase().replace('_', "-");
        if let Some(v) = norm.strip_prefix("iaa-") {
            let variant = v.parse()?;
            let inside = match keys.get("inside") {
                Some(s) => s.parse()?,
                None => crate::iaa::InsideKind::Adapter,
            };
            let cfg = IaaConfig {
                variant,
                inside,
                r: num(keys, "r")?.unwrap_or(0),
                ar: num(keys, "ar")?.unwrap_or(0),
                s: num(keys, "s")?.unwrap_or(1.0),
            };
            cfg.validate()?;
            return Ok(Tuning::Iaa(cfg));
        }
        let method: PetMethod = norm.parse()?;
        let l = num(keys, "l")?.unwrap_or(0);
        let cfg = PetConfig {
            method,
            r: num(keys, "r")?.unwrap_or(0),
            l,
            ls: num(keys, "ls")?.unwrap_or(l),
            s: num(keys, "s")?.unwrap_or(1.0),
        };
        cfg.validate()?;
        Ok(Tuning::Pet(cfg))
    }

    /// Per-layer, non-layer and total trainable counts, and the share of the
    /// enumerated backbone count. Task heads are not included.
    pub fn count(&self, enc: &EncoderConfig) -> ParamCount {
        let (per_layer, extra) = match self {
            Tuning::Pet(c) => c.counts(enc),
            Tuning::Iaa(c) => c.counts(enc),
        };
        let total = per_layer * enc.n_layers + extra;
        let fraction = total as f64 / enc.backbone_param_count() as f64;
        ParamCount { per_layer, extra, total, fraction }
    }
}

impl fmt::Display for Tuning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tuning::Pet(c) => c.fmt(f),
            Tuning::Iaa(c) => c.fmt(f),
        }
    }
}

impl FromStr for Tuning {
    type Err = Error;

    /// Parses `method key=value ...`, e.g. `adapter r=16` or
    /// `iaa-l inside=adapter r=50 ar=300`.
    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split_whitespace();
        let method = parts.next().ok_or_else(|| Error::Config("empty tuning description".into()))?;
        let mut keys = BTreeMap::new();
        for p in parts {
            let (k, v) = p.split_once('=').ok_or_else(|| Error::Config(format!("expected key=value, got {p:?}")))?;
            keys.insert(k.to_string(), v.to_string());
        }
        Tuning::from_parts(method, &keys)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParamCount {
    pub per_layer: usize,
    /// Parameters outside the per-layer blocks (embedding bias for Bitfit,
    /// the whole-model aside module for IAA-M).
    pub extra: usize,
    pub total: usize,
    pub fraction: f64,
}

/// Closed-form trainable parameter count for `tuning` on `enc`.
pub fn count_params(tuning: &Tuning, enc: &EncoderConfig) -> ParamCount {
    tuning.count(enc)
}

/// Largest configuration of `method` with at most `max_count` trainable
/// parameters. Sized methods grow one knob `k` (`r`, `l`, or both for the
/// mixed and Semi-Siamese prefix methods) up to `4 * d_model`; bitfit and
/// full have no knob and are returned as they are.
pub fn fit_budget(method: PetMethod, max_count: usize, enc: &EncoderConfig) -> Result<PetConfig> {
    let make = |k: usize| match method {
        PetMethod::Full => PetConfig::full(),
        PetMethod::Bitfit => PetConfig::bitfit(),
        PetMethod::Prefix => PetConfig::prefix(k),
        PetMethod::Adapter => PetConfig::adapter(k),
        PetMethod::Mam => PetConfig::mam(k, k),
        PetMethod::Lora => PetConfig::lora(k),
        PetMethod::SsPrefix => PetConfig::ss_prefix(k, k),
        PetMethod::SsLora => PetConfig::ss_lora(k),
    };
    if matches!(method, PetMethod::Full | PetMethod::Bitfit) {
        return Ok(make(0));
    }
    let total = |c: &PetConfig| {
        let (per_layer, extra) = c.counts(enc);
        per_layer * enc.n_layers + extra
    };
    let mut k = 0;
    while k < 4 * enc.d_model && total(&make(k + 1)) <= max_count {
        k += 1;
    }
    if k == 0 {
        return Err(Error::Budget(format!("{} does not fit in {max_count} parameters even at size 1", method.name())));
    }
    Ok(make(k))
}

/// A tuning named like `adapter` or `iaa-l`, sized to at most `max_count`
/// trainable parameters. IAA variants use adapter inside modules and an
/// even inside/aside split.
pub fn matched_tuning(name: &str, max_count: usize, enc: &EncoderConfig) -> Result<Tuning> {
    if let Ok(variant) = name.parse::<IaaVariant>() {
        let (r, ar) = crate::iaa::budget_split_count(variant, InsideKind::Adapter, max_count, 0.5, enc)?;
        return Ok(Tuning::Iaa(IaaConfig::new(variant, InsideKind::Adapter, r, ar)));
    }
    Ok(Tuning::Pet(fit_budget(name.parse()?, max_count, enc)?))
}
