use crate::error::{Error, Result};

/// Dimensions of the encoder backbone.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ffn: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
    pub ln_eps: f64,
}

impl EncoderConfig {
    /// Config with `d_ffn = 4 * d_model` and `ln_eps = 1e-12`.
    pub fn new(d_model: usize, n_heads: usize, n_layers: usize, vocab_size: usize, max_seq_len: usize) -> Self {
        Self { d_model, n_heads, n_layers, d_ffn: 4 * d_model, vocab_size, max_seq_len, ln_eps: 1e-12 }
    }

    /// BERT-base dimensions.
    pub fn bert_base() -> Self {
        Self::new(768, 12, 12, 30522, 512)
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("n_layers", self.n_layers),
            ("d_ffn", self.d_ffn),
            ("vocab_size", self.vocab_size),
            ("max_seq_len", self.max_seq_len),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(self.ln_eps > 0.0 && self.ln_eps.is_finite()) {
            return Err(Error::Config(format!("ln_eps must be positive, got {}", self.ln_eps)));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Parameters of one encoder layer.
    pub fn layer_param_count(&self) -> usize {
        let d = self.d_model;
        let f = self.d_ffn;
        // q, k, v, o with biases; FFN with biases; two layer norms
        4 * (d * d + d) + (d * f + f) + (f * d + d) + 4 * d
    }

    /// Enumerated parameter count of the whole backbone, embeddings included.
    pub fn backbone_param_count(&self) -> usize {
        let d = self.d_model;
        self.vocab_size * d + self.max_seq_len * d + d + self.n_layers * self.layer_param_count()
    }

    /// `key = value` lines, in a fixed order.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("d_model", self.d_model.to_string()),
            ("n_heads", self.n_heads.to_string()),
            ("n_layers", self.n_layers.to_string()),
            ("d_ffn", self.d_ffn.to_string()),
            ("vocab_size", self.vocab_size.to_string()),
            ("max_seq_len", self.max_seq_len.to_string()),
            ("ln_eps", format!("{:e}", self.ln_eps)),
        ]
    }

    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<Self> {
        fn num<V: std::str::FromStr>(get: &impl Fn(&str) -> Option<String>, key: &str) -> Result<V> {
            let raw = get(key).ok_or_else(|| Error::Config(format!("missing encoder key {key}")))?;
            raw.trim().parse().map_err(|_| Error::Config(format!("bad value {raw:?} for {key}")))
        }
        let cfg = Self {
            d_model: num(&get, "d_model")?,
            n_heads: num(&get, "n_heads")?,
            n_layers: num(&get, "n_layers")?,
            d_ffn: num(&get, "d_ffn")?,
            vocab_size: num(&get, "vocab_size")?,
            max_seq_len: num(&get, "max_seq_len")?,
            ln_eps: num(&get, "ln_eps")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
