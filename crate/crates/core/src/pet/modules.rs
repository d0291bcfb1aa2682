use crate::error::Result;
use crate::numerics::{Graph, ParamId, Real, Var};
use crate::transformer::{HiddenHook, PrefixHook, Projection, ProjectionHook, Tower};

/// Down- and up-projection pair of a bottleneck.
#[derive(Clone, Copy, Debug)]
pub struct LowRank {
    pub down: ParamId,
    pub up: ParamId,
}

impl LowRank {
    /// `(h W_down) W_up`.
    fn linear<T: Real>(&self, g: &mut Graph<'_, T>, h: Var) -> Result<Var> {
        let down = g.param(self.down);
        let mid = g.matmul(h, down)?;
        let up = g.param(self.up);
        g.matmul(mid, up)
    }

    /// `ReLU(h W_down) W_up`.
    fn bottleneck<T: Real>(&self, g: &mut Graph<'_, T>, h: Var) -> Result<Var> {
        let down = g.param(self.down);
        let mid = g.matmul(h, down)?;
        let act = g.relu(mid);
        let up = g.param(self.up);
        g.matmul(act, up)
    }
}

/// `h + ReLU(h W_down) W_up`.
pub fn adapter_forward<T: Real>(g: &mut Graph<'_, T>, h: Var, w: LowRank) -> Result<Var> {
    let delta = w.bottleneck(g, h)?;
    g.add(h, delta)
}

/// `ReLU(h W_down) W_up`, with no residual term.
pub fn bottleneck_forward<T: Real>(g: &mut Graph<'_, T>, h: Var, w: LowRank) -> Result<Var> {
    w.bottleneck(g, h)
}

/// `h W + s (h W_down) W_up` for a frozen projection `W`.
pub fn lora_projection<T: Real>(g: &mut Graph<'_, T>, h: Var, frozen: ParamId, w: LowRank, s: f64) -> Result<Var> {
    let wv = g.param(frozen);
    let base = g.matmul(h, wv)?;
    let delta = lora_delta(g, h, w, s)?;
    g.add(base, delta)
}

fn lora_delta<T: Real>(g: &mut Graph<'_, T>, h: Var, w: LowRank, s: f64) -> Result<Var> {
    let delta = w.linear(g, h)?;
    Ok(g.scale(delta, T::from_f64(s)))
}

/// Sequential adapter: replaces a sub-layer output `h` with
/// `h + ReLU(h W_down) W_up`.
pub struct AdapterHook(pub LowRank);

impl<T: Real> HiddenHook<T> for AdapterHook {
    fn apply(&self, g: &mut Graph<'_, T>, h: Var, _: Tower) -> Result<Var> {
        adapter_forward(g, h, self.0)
    }
}

/// Residual-free bottleneck whose output is added to the trunk.
pub struct BottleneckHook(pub LowRank);

impl<T: Real> HiddenHook<T> for BottleneckHook {
    fn apply(&self, g: &mut Graph<'_, T>, h: Var, _: Tower) -> Result<Var> {
        bottleneck_forward(g, h, self.0)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct PrefixPair {
    pub key: ParamId,
    pub value: ParamId,
}

pub struct PrefixParams(pub PrefixPair);

impl<T: Real> PrefixHook<T> for PrefixParams {
    fn prefix(&self, g: &mut Graph<'_, T>, _: Tower) -> Result<Option<(Var, Var)>> {
        Ok(Some((g.param(self.0.key), g.param(self.0.value))))
    }
}

/// Shared prefix rows followed by rows specific to the query or document
/// tower. Tower-specific blocks are absent when their length is zero.
pub struct SemiSiamesePrefix {
    pub shared: PrefixPair,
    pub query: Option<PrefixPair>,
    pub document: Option<PrefixPair>,
}

impl<T: Real> PrefixHook<T> for SemiSiamesePrefix {
    fn prefix(&self, g: &mut Graph<'_, T>, tower: Tower) -> Result<Option<(Var, Var)>> {
        let k = g.param(self.shared.key);
        let v = g.param(self.shared.value);
        let own = match tower {
            Tower::Query => self.query,
            Tower::Document => self.document,
            Tower::Joint => None,
        };
        match own {
            None => Ok(Some((k, v))),
            Some(p) => {
                let ok = g.param(p.key);
                let ov = g.param(p.value);
                Ok(Some((g.concat_rows(&[k, ok])?, g.concat_rows(&[v, ov])?)))
            }
        }
    }
}

/// Scaled low-rank deltas on the query and value projections.
pub struct LoraHook {
    pub query: LowRank,
    pub value: LowRank,
    pub s: f64,
}

impl<T: Real> ProjectionHook<T> for LoraHook {
    fn delta(&self, g: &mut Graph<'_, T>, h: Var, proj: Projection, _: Tower) -> Result<Option<Var>> {
        let w = match proj {
            Projection::Query => self.query,
            Projection::Value => self.value,
        };
        lora_delta(g, h, w, self.s).map(Some)
    }
}

/// One query-projection delta shared by both towers and a separate
/// value-projection delta per tower.
pub struct SemiSiameseLora {
    pub query: LowRank,
    pub value_query: LowRank,
    pub value_document: LowRank,
    pub s: f64,
}

impl<T: Real> ProjectionHook<T> for SemiSiameseLora {
    fn delta(&self, g: &mut Graph<'_, T>, h: Var, proj: Projection, tower: Tower) -> Result<Option<Var>> {
        let w = match (proj, tower) {
            (Projection::Query, _) => self.query,
            (Projection::Value, Tower::Document) => self.value_document,
            (Projection::Value, _) => self.value_query,
        };
        lora_delta(g, h, w, self.s).map(Some)
    }
}
