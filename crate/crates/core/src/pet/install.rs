use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::modules::{
    AdapterHook, BottleneckHook, LoraHook, LowRank, PrefixPair, PrefixParams, SemiSiameseLora, SemiSiamesePrefix,
};
use super::{PetConfig, PetMethod, Tuning};
use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Real, Tensor};
use crate::transformer::{Encoder, HookSite};

/// Standard deviation for down-projections and prefix vectors.
pub const MODULE_INIT_STD: f64 = 0.02;

/// Seeded initializer for inserted module parameters.
pub(crate) struct ModuleInit {
    rng: ChaCha8Rng,
    normal: Normal<f64>,
}

impl ModuleInit {
    pub(crate) fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed), normal: Normal::new(0.0, MODULE_INIT_STD).expect("valid std") }
    }

    fn normal<T: Real>(&mut self, shape: &[usize]) -> Tensor<T> {
        let n = shape.iter().product();
        let data = (0..n).map(|_| T::from_f64(self.normal.sample(&mut self.rng))).collect();
        Tensor::new(shape.to_vec(), data).expect("shape matches")
    }

    /// `path.down: d×r ~ N(0, std)` and `path.up: r×d = 0`, both trainable.
    pub(crate) fn low_rank<T: Real>(
        &mut self,
        store: &mut ParamStore<T>,
        path: &str,
        d: usize,
        r: usize,
    ) -> Result<LowRank> {
        Ok(LowRank {
            down: store.add(format!("{path}.down"), self.normal(&[d, r]), true)?,
            up: store.add(format!("{path}.up"), Tensor::zeros(&[r, d]), true)?,
        })
    }

    fn prefix<T: Real>(&mut self, store: &mut ParamStore<T>, path: &str, l: usize, d: usize) -> Result<PrefixPair> {
        Ok(PrefixPair {
            key: store.add(format!("{path}.key"), self.normal(&[l, d]), true)?,
            value: store.add(format!("{path}.value"), self.normal(&[l, d]), true)?,
        })
    }
}

/// Inserts the modules of `cfg`, freezes the backbone except where the
/// method says otherwise, and registers hooks. Fails if a tuning method is
/// already installed.
pub fn install_pet<T: Real>(enc: &mut Encoder<T>, cfg: &PetConfig, seed: u64) -> Result<()> {
    cfg.validate()?;
    enc.mark_tuned()?;
    enc.set_backbone_trainable(false);
    let d = enc.config().d_model;
    let n_layers = enc.config().n_layers;
    let mut init = ModuleInit::new(seed);
    match cfg.method {
        PetMethod::Full => enc.set_backbone_trainable(true),
        PetMethod::Bitfit => {
            let mut ids = vec![enc.embeddings().bias];
            for layer in enc.layers() {
                ids.extend(layer.biases());
            }
            for id in ids {
                enc.store_mut().set_trainable(id, true);
            }
        }
        PetMethod::Prefix => {
            let (store, hooks) = enc.parts_mut();
            for i in 0..n_layers {
                let p = init.prefix(store, &format!("layers.{i}.prefix"), cfg.l, d)?;
                hooks.set_prefix(i, Box::new(PrefixParams(p)))?;
            }
        }
        PetMethod::Adapter => {
            let (store, hooks) = enc.parts_mut();
            for i in 0..n_layers {
                let a = init.low_rank(store, &format!("layers.{i}.adapter.attention"), d, cfg.r)?;
                let f = init.low_rank(store, &format!("layers.{i}.adapter.ffn"), d, cfg.r)?;
                hooks.set_hidden(i, HookSite::PostAttention, Box::new(AdapterHook(a)))?;
                hooks.set_hidden(i, HookSite::PostFfn, Box::new(AdapterHook(f)))?;
            }
        }
        PetMethod::Mam => {
            let (store, hooks) = enc.parts_mut();
            for i in 0..n_layers {
                let p = init.prefix(store, &format!("layers.{i}.prefix"), cfg.l, d)?;
                hooks.set_prefix(i, Box::new(PrefixParams(p)))?;
                let a = init.low_rank(store, &format!("layers.{i}.parallel_adapter"), d, cfg.r)?;
                hooks.set_hidden(i, HookSite::FfnParallel, Box::new(BottleneckHook(a)))?;
            }
        }
        PetMethod::Lora => {
            let (store, hooks) = enc.parts_mut();
            for i in 0..n_layers {
                let query = init.low_rank(store, &format!("layers.{i}.lora.query"), d, cfg.r)?;
                let value = init.low_rank(store, &format!("layers.{i}.lora.value"), d, cfg.r)?;
                hooks.set_projection(i, Box::new(LoraHook { query, value, s: cfg.s }))?;
            }
        }
        PetMethod::SsPrefix => {
            let (store, hooks) = enc.parts_mut();
            for i in 0..n_layers {
                let shared = init.prefix(store, &format!("layers.{i}.prefix.shared"), cfg.l, d)?;
                let (query, document) = if cfg.ls > 0 {
                    (
                        Some(init.prefix(store, &format!("layers.{i}.prefix.query"), cfg.ls, d)?),
                        Some(init.prefix(store, &format!("layers.{i}.prefix.document"), cfg.ls, d)?),
                    )
                } else {
                    (None, None)
                };
                hooks.set_prefix(i, Box::new(SemiSiamesePrefix { shared, query, document }))?;
            }
        }
        PetMethod::SsLora => {
            let (store, hooks) = enc.parts_mut();
            for i in 0..n_layers {
                let query = init.low_rank(store, &format!("layers.{i}.lora.query"), d, cfg.r)?;
                let value_query = init.low_rank(store, &format!("layers.{i}.lora.value_query"), d, cfg.r)?;
                let value_document = init.low_rank(store, &format!("layers.{i}.lora.value_document"), d, cfg.r)?;
                hooks.set_projection(i, Box::new(SemiSiameseLora { query, value_query, value_document, s: cfg.s }))?;
            }
        }
    }
    Ok(())
}

/// [`install_pet`] restricted to the Semi-Siamese methods. Both towers share
/// the one backbone; only the inserted parameters differ by tower.
pub fn install_ss<T: Real>(enc: &mut Encoder<T>, cfg: &PetConfig, seed: u64) -> Result<()> {
    if !cfg.method.is_semi_siamese() {
        return Err(Error::Config(format!("{} is not a Semi-Siamese method", cfg.method.name())));
    }
    install_pet(enc, cfg, seed)
}

/// Installs either kind of tuning.
pub fn install_tuning<T: Real>(enc: &mut Encoder<T>, tuning: &Tuning, seed: u64) -> Result<()> {
    match tuning {
        Tuning::Pet(c) => install_pet(enc, c, seed),
        Tuning::Iaa(c) => crate::iaa::wire_iaa(enc, c, seed),
    }
}
