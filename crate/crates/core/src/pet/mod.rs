//! Baseline parameter-efficient tuning methods and their parameter
//! accounting.

mod config;
mod install;
mod modules;

pub use config::{count_params, fit_budget, matched_tuning, ParamCount, PetConfig, PetMethod, Tuning};
pub(crate) use install::ModuleInit;
pub use install::{install_pet, install_ss, install_tuning, MODULE_INIT_STD};
pub use modules::{
    adapter_forward, bottleneck_forward, lora_projection, AdapterHook, BottleneckHook, LoraHook, LowRank, PrefixPair,
    PrefixParams, SemiSiameseLora, SemiSiamesePrefix,
};
