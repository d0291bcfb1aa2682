use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::hooks::{HookSet, HookSite, Projection, Tower};
use super::EncoderConfig;
use crate::data::PAD_ID;
use crate::error::{Error, Result};
use crate::numerics::{GradMode, Graph, ParamId, ParamStore, Real, Tensor, Var};

/// Additive pre-softmax penalty for padding keys.
const MASKED: f64 = -1e9;

/// Default standard deviation for random backbone weights.
pub const DEFAULT_INIT_STD: f64 = 0.02;

#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub struct Norm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub struct EmbeddingWeights {
    pub token: ParamId,
    pub position: ParamId,
    pub bias: ParamId,
}

/// Parameter ids of one encoder layer.
#[derive(Clone, Copy, Debug)]
pub struct LayerWeights {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub attention_norm: Norm,
    pub ffn_inner: Linear,
    pub ffn_outer: Linear,
    pub ffn_norm: Norm,
}

impl LayerWeights {
    /// The eight per-layer bias vectors.
    pub fn biases(&self) -> [ParamId; 8] {
        [
            self.query.bias,
            self.key.bias,
            self.value.bias,
            self.output.bias,
            self.attention_norm.beta,
            self.ffn_inner.bias,
            self.ffn_outer.bias,
            self.ffn_norm.beta,
        ]
    }
}

/// Embedding layer plus a stack of post-norm encoder layers, owning every
/// parameter (backbone and any installed modules) and the hook set.
pub struct Encoder<T: Real> {
    config: EncoderConfig,
    store: ParamStore<T>,
    embeddings: EmbeddingWeights,
    layers: Vec<LayerWeights>,
    backbone: Vec<ParamId>,
    hooks: HookSet<T>,
    tuned: bool,
}

enum Fill {
    Zero,
    One,
    Normal,
}

impl<T: Real> Encoder<T> {
    /// Backbone with weights drawn from `N(0, init_std)`, zero biases and
    /// unit layer-norm gains. Every parameter starts trainable.
    pub fn random(config: EncoderConfig, init_std: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, init_std).map_err(|e| Error::Config(format!("bad init std {init_std}: {e}")))?;
        Self::build(config, |fill, shape| {
            let n: usize = shape.iter().product();
            let data = match fill {
                Fill::Zero => vec![T::zero(); n],
                Fill::One => vec![T::one(); n],
                Fill::Normal => (0..n).map(|_| T::from_f64(normal.sample(&mut rng))).collect(),
            };
            Tensor::new(shape.to_vec(), data).expect("shape matches")
        })
    }

    /// Backbone with all weights and biases zero and unit layer-norm gains.
    /// Useful for hand-set fixtures.
    pub fn zeros(config: EncoderConfig) -> Result<Self> {
        Self::build(config, |fill, shape| match fill {
            Fill::One => Tensor::full(shape, T::one()),
            _ => Tensor::zeros(shape),
        })
    }

    fn build(config: EncoderConfig, mut init: impl FnMut(Fill, &[usize]) -> Tensor<T>) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let f = config.d_ffn;
        let mut store = ParamStore::new();
        let mut backbone = Vec::new();
        let mut add = |store: &mut ParamStore<T>, path: String, t: Tensor<T>| -> Result<ParamId> {
            let id = store.add(path, t, true)?;
            backbone.push(id);
            Ok(id)
        };
        let embeddings = EmbeddingWeights {
            token: add(&mut store, "embeddings.token".into(), init(Fill::Normal, &[config.vocab_size, d]))?,
            position: add(&mut store, "embeddings.position".into(), init(Fill::Normal, &[config.max_seq_len, d]))?,
            bias: add(&mut store, "embeddings.bias".into(), init(Fill::Zero, &[d]))?,
        };
        let mut layers = Vec::with_capacity(config.n_layers);
        for i in 0..config.n_layers {
            let mut linear = |store: &mut ParamStore<T>, name: &str, rows: usize, cols: usize| -> Result<Linear> {
                Ok(Linear {
                    weight: add(store, format!("layers.{i}.{name}.weight"), init(Fill::Normal, &[rows, cols]))?,
                    bias: add(store, format!("layers.{i}.{name}.bias"), init(Fill::Zero, &[cols]))?,
                })
            };
            let query = linear(&mut store, "attention.query", d, d)?;
            let key = linear(&mut store, "attention.key", d, d)?;
            let value = linear(&mut store, "attention.value", d, d)?;
            let output = linear(&mut store, "attention.output", d, d)?;
            let ffn_inner = linear(&mut store, "ffn.inner", d, f)?;
            let ffn_outer = linear(&mut store, "ffn.outer", f, d)?;
            let mut norm = |store: &mut ParamStore<T>, name: &str| -> Result<Norm> {
                Ok(Norm {
                    gamma: add(store, format!("layers.{i}.{name}.gamma"), init(Fill::One, &[d]))?,
                    beta: add(store, format!("layers.{i}.{name}.beta"), init(Fill::Zero, &[d]))?,
                })
            };
            let attention_norm = norm(&mut store, "attention_norm")?;
            let ffn_norm = norm(&mut store, "ffn_norm")?;
            layers.push(LayerWeights { query, key, value, output, attention_norm, ffn_inner, ffn_outer, ffn_norm });
        }
        let hooks = HookSet::new(config.n_layers);
        Ok(Self { config, store, embeddings, layers, backbone, hooks, tuned: false })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    pub fn hooks(&self) -> &HookSet<T> {
        &self.hooks
    }

    pub fn hooks_mut(&mut self) -> &mut HookSet<T> {
        &mut self.hooks
    }

    /// Store and hooks at once, for installers that add parameters and
    /// register hooks referring to them.
    pub fn parts_mut(&mut self) -> (&mut ParamStore<T>, &mut HookSet<T>) {
        (&mut self.store, &mut self.hooks)
    }

    /// True once a tuning method has been installed.
    pub fn is_tuned(&self) -> bool {
        self.tuned
    }

    /// Records that a tuning method is being installed; fails if one already is.
    pub fn mark_tuned(&mut self) -> Result<()> {
        if self.tuned {
            return Err(Error::State("a tuning method is already installed".into()));
        }
        self.tuned = true;
        Ok(())
    }

    pub fn embeddings(&self) -> &EmbeddingWeights {
        &self.embeddings
    }

    pub fn layer(&self, i: usize) -> &LayerWeights {
        &self.layers[i]
    }

    pub fn layers(&self) -> &[LayerWeights] {
        &self.layers
    }

    /// Ids of every backbone parameter, in creation order.
    pub fn backbone_ids(&self) -> &[ParamId] {
        &self.backbone
    }

    pub fn backbone_count(&self) -> usize {
        self.backbone.iter().map(|&id| self.store.get(id).len()).sum()
    }

    pub fn set_backbone_trainable(&mut self, trainable: bool) {
        for &id in &self.backbone {
            self.store.set_trainable(id, trainable);
        }
    }

    /// Token embedding + position embedding + embedding bias.
    pub fn embed(&self, g: &mut Graph<'_, T>, tokens: &[usize]) -> Result<Var> {
        let cfg = &self.config;
        if tokens.len() > cfg.max_seq_len {
            return Err(Error::Input(format!(
                "sequence of {} tokens exceeds max_seq_len {}",
                tokens.len(),
                cfg.max_seq_len
            )));
        }
        let table = g.param(self.embeddings.token);
        let tok = g.gather(table, tokens)?;
        let positions: Vec<usize> = (0..tokens.len()).collect();
        let pos_table = g.param(self.embeddings.position);
        let pos = g.gather(pos_table, &positions)?;
        let sum = g.add(tok, pos)?;
        let bias = g.param(self.embeddings.bias);
        g.add_row(sum, bias)
    }

    fn linear(&self, g: &mut Graph<'_, T>, h: Var, w: Linear) -> Result<Var> {
        let wv = g.param(w.weight);
        let y = g.matmul(h, wv)?;
        let b = g.param(w.bias);
        g.add_row(y, b)
    }

    /// Multi-head self-attention of layer `layer` without hooks. `prefix`
    /// holds `l×d` key and value rows split across heads by column.
    pub fn multi_head_attention(
        &self,
        g: &mut Graph<'_, T>,
        layer: usize,
        h: Var,
        prefix: Option<(Var, Var)>,
    ) -> Result<Var> {
        self.attend(g, layer, h, prefix, None, None)
    }

    fn attend(
        &self,
        g: &mut Graph<'_, T>,
        layer: usize,
        h: Var,
        prefix: Option<(Var, Var)>,
        pad: Option<&[bool]>,
        qv_tower: Option<Tower>,
    ) -> Result<Var> {
        let w = &self.layers[layer];
        let d = self.config.d_model;
        let n = g.shape(h)[0];
        let mut q = self.linear(g, h, w.query)?;
        let k = self.linear(g, h, w.key)?;
        let mut v = self.linear(g, h, w.value)?;
        if let (Some(tower), Some(hook)) = (qv_tower, self.hooks.layers[layer].qv.as_deref()) {
            if let Some(dq) = hook.delta(g, h, Projection::Query, tower)? {
                check_shape(g, dq, n, d, Some(layer), HookSite::QvProjection)?;
                q = g.add(q, dq)?;
            }
            if let Some(dv) = hook.delta(g, h, Projection::Value, tower)? {
                check_shape(g, dv, n, d, Some(layer), HookSite::QvProjection)?;
                v = g.add(v, dv)?;
            }
        }
        let (keys, values, l) = match prefix {
            None => (k, v, 0),
            Some((pk, pv)) => {
                let (ks, vs) = (g.shape(pk).to_vec(), g.shape(pv).to_vec());
                if ks.len() != 2 || ks[1] != d || ks != vs {
                    return Err(Error::Config(format!(
                        "layer {layer}: prefix keys {ks:?} and values {vs:?} must both be l×{d}"
                    )));
                }
                (g.concat_rows(&[pk, k])?, g.concat_rows(&[pv, v])?, ks[0])
            }
        };
        let mask = match pad {
            Some(pad) => {
                let row: Vec<T> = std::iter::repeat_n(T::zero(), l)
                    .chain(pad.iter().map(|&p| if p { T::from_f64(MASKED) } else { T::zero() }))
                    .collect();
                Some(g.constant(Tensor::new(vec![l + n], row)?))
            }
            None => None,
        };
        let dh = self.config.head_dim();
        let scale = T::one() / T::from_f64(dh as f64).sqrt();
        let mut heads = Vec::with_capacity(self.config.n_heads);
        for i in 0..self.config.n_heads {
            let qi = g.slice_cols(q, i * dh, dh)?;
            let ki = g.slice_cols(keys, i * dh, dh)?;
            let vi = g.slice_cols(values, i * dh, dh)?;
            let scores = g.matmul_t(qi, ki)?;
            let mut scores = g.scale(scores, scale);
            if let Some(m) = mask {
                scores = g.add_row(scores, m)?;
            }
            let p = g.softmax_rows(scores);
            heads.push(g.matmul(p, vi)?);
        }
        let cat = if heads.len() == 1 { heads[0] } else { g.concat_cols(&heads)? };
        self.linear(g, cat, w.output)
    }

    /// `ReLU(h W1 + b1) W2 + b2`.
    pub fn ffn(&self, g: &mut Graph<'_, T>, layer: usize, h: Var) -> Result<Var> {
        let w = &self.layers[layer];
        let inner = self.linear(g, h, w.ffn_inner)?;
        let act = g.relu(inner);
        self.linear(g, act, w.ffn_outer)
    }

    /// `LayerNorm(sublayer_out + h)`.
    pub fn rcln(&self, g: &mut Graph<'_, T>, sublayer_out: Var, h: Var, norm: Norm) -> Result<Var> {
        let sum = g.add(sublayer_out, h)?;
        let gamma = g.param(norm.gamma);
        let beta = g.param(norm.beta);
        g.layer_norm(sum, gamma, beta, self.config.ln_eps)
    }

    fn layer_forward(
        &self,
        g: &mut Graph<'_, T>,
        li: usize,
        x: Var,
        pad: Option<&[bool]>,
        tower: Tower,
    ) -> Result<Var> {
        let w = &self.layers[li];
        let hooks = &self.hooks.layers[li];
        let (n, d) = (g.shape(x)[0], self.config.d_model);

        let prefix = match hooks.kv.as_deref() {
            Some(hook) => hook.prefix(g, tower)?,
            None => None,
        };
        let mut a = self.attend(g, li, x, prefix, pad, Some(tower))?;
        if let Some(hook) = hooks.post_attention.as_deref() {
            a = hook.apply(g, a, tower)?;
            check_shape(g, a, n, d, Some(li), HookSite::PostAttention)?;
        }
        let mut h1 = self.rcln(g, a, x, w.attention_norm)?;
        if let Some(hook) = hooks.attention_aside.as_deref() {
            let side = hook.apply(g, x, tower)?;
            check_shape(g, side, n, d, Some(li), HookSite::AttentionAside)?;
            h1 = g.add(h1, side)?;
        }

        let mut f = self.ffn(g, li, h1)?;
        if let Some(hook) = hooks.ffn_parallel.as_deref() {
            let par = hook.apply(g, h1, tower)?;
            check_shape(g, par, n, d, Some(li), HookSite::FfnParallel)?;
            f = g.add(f, par)?;
        }
        if let Some(hook) = hooks.post_ffn.as_deref() {
            f = hook.apply(g, f, tower)?;
            check_shape(g, f, n, d, Some(li), HookSite::PostFfn)?;
        }
        let mut h2 = self.rcln(g, f, h1, w.ffn_norm)?;
        if let Some(hook) = hooks.ffn_aside.as_deref() {
            let side = hook.apply(g, h1, tower)?;
            check_shape(g, side, n, d, Some(li), HookSite::FfnAside)?;
            h2 = g.add(h2, side)?;
        }
        if let Some(hook) = hooks.layer_aside.as_deref() {
            let side = hook.apply(g, x, tower)?;
            check_shape(g, side, n, d, Some(li), HookSite::LayerAside)?;
            h2 = g.add(h2, side)?;
        }
        Ok(h2)
    }

    /// Full forward pass with every installed hook. Returns the `n×d`
    /// final hidden states.
    pub fn encode(&self, g: &mut Graph<'_, T>, tokens: &[usize], tower: Tower) -> Result<Var> {
        let emb = self.embed(g, tokens)?;
        if tokens.is_empty() {
            return Ok(emb);
        }
        let pad: Vec<bool> = tokens.iter().map(|&t| t == PAD_ID).collect();
        let pad = pad.iter().any(|&p| p).then_some(pad.as_slice());
        let mut h = emb;
        for li in 0..self.layers.len() {
            h = self.layer_forward(g, li, h, pad, tower)?;
        }
        if let Some(hook) = self.hooks.post_model.as_deref() {
            let side = hook.apply(g, emb, tower)?;
            check_shape(g, side, tokens.len(), self.config.d_model, None, HookSite::PostModel)?;
            h = g.add(h, side)?;
        }
        Ok(h)
    }

    /// Inference-only [`encode`](Self::encode) returning the hidden states.
    pub fn encode_value(&self, tokens: &[usize], tower: Tower) -> Result<Tensor<T>> {
        let mut g = Graph::new(&self.store, GradMode::None);
        let h = self.encode(&mut g, tokens, tower)?;
        Ok(g.value(h).clone())
    }
}

fn check_shape<T: Real>(
    g: &Graph<'_, T>,
    v: Var,
    n: usize,
    d: usize,
    layer: Option<usize>,
    site: HookSite,
) -> Result<()> {
    let shape = g.shape(v);
    if shape == [n, d] {
        return Ok(());
    }
    let at = match layer {
        Some(l) => format!("layer {l}, site {site}"),
        None => format!("site {site}"),
    };
    Err(Error::Contract(format!("{at}: hook returned shape {shape:?}, expected [{n}, {d}]")))
}
