use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::transformer::EncoderConfig;

/// Granularity at which aside modules attach.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum IaaVariant {
    /// One aside module per sub-layer.
    S,
    /// One aside module per layer.
    L,
    /// One aside module around the whole encoder.
    M,
}

impl IaaVariant {
    pub const ALL: [IaaVariant; 3] = [IaaVariant::S, IaaVariant::L, IaaVariant::M];

    pub fn name(self) -> &'static str {
        match self {
            IaaVariant::S => "iaa-s",
            IaaVariant::L => "iaa-l",
            IaaVariant::M => "iaa-m",
        }
    }
}

impl FromStr for IaaVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        let short = norm.strip_prefix("iaa-").unwrap_or(&norm);
        match short {
            "s" => Ok(IaaVariant::S),
            "l" => Ok(IaaVariant::L),
            "m" => Ok(IaaVariant::M),
            _ => Err(Error::Config(format!("unknown IAA variant {s:?}"))),
        }
    }
}

/// The inside module paired with the aside modules.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum InsideKind {
    Adapter,
    Lora,
}

impl InsideKind {
    pub fn name(self) -> &'static str {
        match self {
            InsideKind::Adapter => "adapter",
            InsideKind::Lora => "lora",
        }
    }
}

impl FromStr for InsideKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "adapter" => Ok(InsideKind::Adapter),
            "lora" => Ok(InsideKind::Lora),
            other => Err(Error::Config(format!("inside module must be adapter or lora, got {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IaaConfig {
    pub variant: IaaVariant,
    pub inside: InsideKind,
    /// Inside bottleneck size; 0 leaves only the aside modules.
    pub r: usize,
    /// Aside bottleneck size; 0 leaves only the inside modules.
    pub ar: usize,
    /// Delta scale when the inside module is LoRA.
    pub s: f64,
}

impl IaaConfig {
    pub fn new(variant: IaaVariant, inside: InsideKind, r: usize, ar: usize) -> Self {
        Self { variant, inside, r, ar, s: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r == 0 && self.ar == 0 {
            return Err(Error::Config("IAA needs r >= 1 or ar >= 1".into()));
        }
        if self.inside == InsideKind::Lora && !(self.s > 0.0 && self.s.is_finite()) {
            return Err(Error::Config(format!("lora inside module needs s > 0, got {}", self.s)));
        }
        Ok(())
    }

    /// Trainable parameters per layer and outside the layers.
    pub fn counts(&self, enc: &EncoderConfig) -> (usize, usize) {
        let d = enc.d_model;
        // adapter: two d×r pairs per layer; lora: query and value pairs
        let inside = 4 * self.r * d;
        match self.variant {
            IaaVariant::S => (inside + 4 * self.ar * d, 0),
            IaaVariant::L => (inside + 2 * self.ar * d, 0),
            IaaVariant::M => (inside, 2 * self.ar * d),
        }
    }
}

impl fmt::Display for IaaConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} inside={} r={} ar={}", self.variant.name(), self.inside.name(), self.r, self.ar)?;
        if self.inside == InsideKind::Lora {
            write!(f, " s={}", self.s)?;
        }
        Ok(())
    }
}
