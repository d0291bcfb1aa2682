use super::{IaaConfig, IaaVariant, InsideKind};
use crate::error::Result;
use crate::numerics::Real;
use crate::pet::{AdapterHook, BottleneckHook, LoraHook, ModuleInit};
use crate::transformer::{Encoder, HookSite};

/// Installs the inside modules of `cfg` and its aside bottlenecks, with the
/// whole backbone frozen.
pub fn wire_iaa<T: Real>(enc: &mut Encoder<T>, cfg: &IaaConfig, seed: u64) -> Result<()> {
    cfg.validate()?;
    enc.mark_tuned()?;
    enc.set_backbone_trainable(false);
    let d = enc.config().d_model;
    let n_layers = enc.config().n_layers;
    let mut init = ModuleInit::new(seed);
    let (store, hooks) = enc.parts_mut();
    for i in 0..n_layers {
        if cfg.r > 0 {
            match cfg.inside {
                InsideKind::Adapter => {
                    let a = init.low_rank(store, &format!("layers.{i}.adapter.attention"), d, cfg.r)?;
                    let f = init.low_rank(store, &format!("layers.{i}.adapter.ffn"), d, cfg.r)?;
                    hooks.set_hidden(i, HookSite::PostAttention, Box::new(AdapterHook(a)))?;
                    hooks.set_hidden(i, HookSite::PostFfn, Box::new(AdapterHook(f)))?;
                }
                InsideKind::Lora => {
                    let query = init.low_rank(store, &format!("layers.{i}.lora.query"), d, cfg.r)?;
                    let value = init.low_rank(store, &format!("layers.{i}.lora.value"), d, cfg.r)?;
                    hooks.set_projection(i, Box::new(LoraHook { query, value, s: cfg.s }))?;
                }
            }
        }
        if cfg.ar == 0 {
            continue;
        }
        match cfg.variant {
            IaaVariant::S => {
                let a = init.low_rank(store, &format!("layers.{i}.aside.attention"), d, cfg.ar)?;
                let f = init.low_rank(store, &format!("layers.{i}.aside.ffn"), d, cfg.ar)?;
                hooks.set_hidden(i, HookSite::AttentionAside, Box::new(BottleneckHook(a)))?;
                hooks.set_hidden(i, HookSite::FfnAside, Box::new(BottleneckHook(f)))?;
            }
            IaaVariant::L => {
                let a = init.low_rank(store, &format!("layers.{i}.aside.layer"), d, cfg.ar)?;
                hooks.set_hidden(i, HookSite::LayerAside, Box::new(BottleneckHook(a)))?;
            }
            IaaVariant::M => {}
        }
    }
    if cfg.variant == IaaVariant::M && cfg.ar > 0 {
        let a = init.low_rank(store, "aside.model", d, cfg.ar)?;
        hooks.set_hidden(0, HookSite::PostModel, Box::new(BottleneckHook(a)))?;
    }
    Ok(())
}
