use std::fmt;

use crate::error::{Error, Result};
use crate::numerics::{Graph, Real, Var};

/// Which side of a ranking model is being encoded. Semi-Siamese modules
/// use it to pick tower-specific parameters; everything else ignores it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Tower {
    Query,
    Document,
    /// Concatenated query and document (cross-encoder input).
    Joint,
}

/// Which attention projection a [`ProjectionHook`] is asked about.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Projection {
    Query,
    Value,
}

/// Injection points inside the encoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum HookSite {
    /// Extra key/value rows prepended inside attention.
    AttentionKv,
    /// Additive delta on the query and value projections.
    QvProjection,
    /// Replaces the attention output before the first residual + norm.
    PostAttention,
    /// Added to the FFN output, computed from the FFN input.
    FfnParallel,
    /// Replaces the FFN output before the second residual + norm.
    PostFfn,
    /// Added after the first residual + norm, computed from the layer input.
    AttentionAside,
    /// Added after the second residual + norm, computed from the FFN input.
    FfnAside,
    /// Added to the layer output, computed from the layer input.
    LayerAside,
    /// Added to the final output, computed from the embedding output.
    PostModel,
}

impl HookSite {
    pub fn name(self) -> &'static str {
        match self {
            HookSite::AttentionKv => "attention-kv",
            HookSite::QvProjection => "attention-qv-projection",
            HookSite::PostAttention => "post-attention",
            HookSite::FfnParallel => "ffn-parallel",
            HookSite::PostFfn => "post-ffn",
            HookSite::AttentionAside => "post-attention-rcln",
            HookSite::FfnAside => "post-ffn-rcln",
            HookSite::LayerAside => "post-layer",
            HookSite::PostModel => "post-model",
        }
    }
}

impl fmt::Display for HookSite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Maps an `n×d` hidden state to an `n×d` tensor. Whether the result
/// replaces the trunk or is added to it depends on the [`HookSite`].
pub trait HiddenHook<T: Real>: Send + Sync {
    fn apply(&self, g: &mut Graph<'_, T>, h: Var, tower: Tower) -> Result<Var>;
}

/// Supplies `(keys, values)` prefix rows, each `l×d`.
pub trait PrefixHook<T: Real>: Send + Sync {
    fn prefix(&self, g: &mut Graph<'_, T>, tower: Tower) -> Result<Option<(Var, Var)>>;
}

/// Supplies an `n×d` additive delta for the query or value projection of `h`.
pub trait ProjectionHook<T: Real>: Send + Sync {
    fn delta(&self, g: &mut Graph<'_, T>, h: Var, proj: Projection, tower: Tower) -> Result<Option<Var>>;
}

pub struct LayerHooks<T: Real> {
    pub(crate) kv: Option<Box<dyn PrefixHook<T>>>,
    pub(crate) qv: Option<Box<dyn ProjectionHook<T>>>,
    pub(crate) post_attention: Option<Box<dyn HiddenHook<T>>>,
    pub(crate) ffn_parallel: Option<Box<dyn HiddenHook<T>>>,
    pub(crate) post_ffn: Option<Box<dyn HiddenHook<T>>>,
    pub(crate) attention_aside: Option<Box<dyn HiddenHook<T>>>,
    pub(crate) ffn_aside: Option<Box<dyn HiddenHook<T>>>,
    pub(crate) layer_aside: Option<Box<dyn HiddenHook<T>>>,
}

impl<T: Real> Default for LayerHooks<T> {
    fn default() -> Self {
        Self {
            kv: None,
            qv: None,
            post_attention: None,
            ffn_parallel: None,
            post_ffn: None,
            attention_aside: None,
            ffn_aside: None,
            layer_aside: None,
        }
    }
}

impl<T: Real> LayerHooks<T> {
    fn is_empty(&self) -> bool {
        self.kv.is_none()
            && self.qv.is_none()
            && self.post_attention.is_none()
            && self.ffn_parallel.is_none()
            && self.post_ffn.is_none()
            && self.attention_aside.is_none()
            && self.ffn_aside.is_none()
            && self.layer_aside.is_none()
    }
}

/// At most one hook per site and layer.
pub struct HookSet<T: Real> {
    pub(crate) layers: Vec<LayerHooks<T>>,
    pub(crate) post_model: Option<Box<dyn HiddenHook<T>>>,
}

fn occupied(layer: Option<usize>, site: HookSite) -> Error {
    match layer {
        Some(l) => Error::State(format!("a hook is already installed at layer {l}, site {site}")),
        None => Error::State(format!("a hook is already installed at site {site}")),
    }
}

fn place<H: ?Sized>(slot: &mut Option<Box<H>>, hook: Box<H>, layer: Option<usize>, site: HookSite) -> Result<()> {
    if slot.is_some() {
        return Err(occupied(layer, site));
    }
    *slot = Some(hook);
    Ok(())
}

impl<T: Real> HookSet<T> {
    pub fn new(n_layers: usize) -> Self {
        Self { layers: (0..n_layers).map(|_| LayerHooks::default()).collect(), post_model: None }
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.post_model.is_none() && self.layers.iter().all(LayerHooks::is_empty)
    }

    fn layer_mut(&mut self, layer: usize) -> Result<&mut LayerHooks<T>> {
        let n = self.layers.len();
        self.layers.get_mut(layer).ok_or_else(|| Error::Config(format!("layer {layer} out of range for {n} layers")))
    }

    /// Installs a hidden-state hook. `PostModel` ignores `layer`.
    pub fn set_hidden(&mut self, layer: usize, site: HookSite, hook: Box<dyn HiddenHook<T>>) -> Result<()> {
        if site == HookSite::PostModel {
            return place(&mut self.post_model, hook, None, site);
        }
        let lh = self.layer_mut(layer)?;
        let slot = match site {
            HookSite::PostAttention => &mut lh.post_attention,
            HookSite::FfnParallel => &mut lh.ffn_parallel,
            HookSite::PostFfn => &mut lh.post_ffn,
            HookSite::AttentionAside => &mut lh.attention_aside,
            HookSite::FfnAside => &mut lh.ffn_aside,
            HookSite::LayerAside => &mut lh.layer_aside,
            HookSite::AttentionKv | HookSite::QvProjection | HookSite::PostModel => {
                return Err(Error::Contract(format!("site {site} does not take a hidden-state hook")))
            }
        };
        place(slot, hook, Some(layer), site)
    }

    pub fn set_prefix(&mut self, layer: usize, hook: Box<dyn PrefixHook<T>>) -> Result<()> {
        let lh = self.layer_mut(layer)?;
        place(&mut lh.kv, hook, Some(layer), HookSite::AttentionKv)
    }

    pub fn set_projection(&mut self, layer: usize, hook: Box<dyn ProjectionHook<T>>) -> Result<()> {
        let lh = self.layer_mut(layer)?;
        place(&mut lh.qv, hook, Some(layer), HookSite::QvProjection)
    }
}
