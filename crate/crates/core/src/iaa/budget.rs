use super::{IaaConfig, IaaVariant, InsideKind};
use crate::error::{Error, Result};
use crate::transformer::EncoderConfig;

/// Budgets are matched the way percentage labels are printed: a pair fits a
/// target if its share rounds to the target at 0.1 percentage points.
pub const LABEL_ROUNDING: f64 = 0.0005;

/// Picks `(r, ar)` for a budget of `target_fraction` of the backbone, giving
/// roughly `split_ratio` of the trainable parameters to the aside modules.
///
/// Among pairs that fit the budget and cannot grow `r` further, returns the
/// one whose aside share is closest to `split_ratio`; ties go to larger `ar`.
/// Both sizes are searched up to `4 * d_model`.
pub fn budget_split(
    variant: IaaVariant,
    inside: InsideKind,
    target_fraction: f64,
    split_ratio: f64,
    enc: &EncoderConfig,
) -> Result<(usize, usize)> {
    if !(target_fraction > 0.0 && target_fraction < 1.0) {
        return Err(Error::Config(format!("target fraction must be in (0, 1), got {target_fraction}")));
    }
    let total = enc.backbone_param_count() as f64;
    let max_count = ((target_fraction + LABEL_ROUNDING) * total).floor() as usize;
    budget_split_count(variant, inside, max_count, split_ratio, enc)
}

/// [`budget_split`] against an absolute parameter count.
pub fn budget_split_count(
    variant: IaaVariant,
    inside: InsideKind,
    max_count: usize,
    split_ratio: f64,
    enc: &EncoderConfig,
) -> Result<(usize, usize)> {
    if !(0.0..=1.0).contains(&split_ratio) {
        return Err(Error::Config(format!("split ratio must be in [0, 1], got {split_ratio}")));
    }
    let cost = |r: usize, ar: usize| {
        let (per_layer, extra) = IaaConfig::new(variant, inside, r, ar).counts(enc);
        per_layer * enc.n_layers + extra
    };
    let per_r = cost(1, 0);
    let per_ar = cost(0, 1);
    if per_r + per_ar > max_count {
        return Err(Error::Budget(format!(
            "budget of {max_count} parameters cannot fit r = ar = 1 ({} parameters)",
            per_r + per_ar
        )));
    }
    let cap = 4 * enc.d_model;
    let mut best: Option<(f64, usize, usize)> = None;
    for ar in 0..=cap {
        let aside = per_ar * ar;
        if aside > max_count {
            break;
        }
        let r = ((max_count - aside) / per_r).min(cap);
        if r == 0 && ar == 0 {
            continue;
        }
        let share = aside as f64 / (aside + per_r * r) as f64;
        let diff = (share - split_ratio).abs();
        if best.is_none_or(|(bd, _, _)| diff <= bd) {
            best = Some((diff, r, ar));
        }
    }
    let (_, r, ar) = best.expect("r = 1 alone always fits");
    Ok((r, ar))
}
