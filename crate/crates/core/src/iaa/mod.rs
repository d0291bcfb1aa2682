//! Inside+aside tuning: residual-free bottlenecks added alongside the frozen
//! encoder at sub-layer, layer or whole-model granularity.

mod budget;
mod config;
mod probe;
mod wiring;

pub use budget::{budget_split, budget_split_count, LABEL_ROUNDING};
pub use config::{IaaConfig, IaaVariant, InsideKind};
pub use probe::discrepancy_probe;
pub use wiring::wire_iaa;

pub use crate::pet::bottleneck_forward as aside_forward;
