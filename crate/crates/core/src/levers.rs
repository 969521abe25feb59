//! Policy levers: transforms of the population, utility or constraint, each
//! with a magnitude `theta` and an optional cost model.
//!
//! Cost models price a lever's displacement from the current scenario, so
//! `c = 0` whenever the lever leaves the scenario unchanged:
//!
//! | lever                  | displacement            | affected count (per-person)       |
//! |------------------------|-------------------------|-----------------------------------|
//! | prediction improvement | `eta`                   | labeled records in the mask       |
//! | capacity expansion     | `delta_alpha`           | added slots                       |
//! | benefit                | `new_benefit - b`       | recipients times benefit increase |
//! | harm reduction         | `h/b - new_ratio`       | recipients times ratio reduction  |
//! | data labeling          | `share - current share` | newly labeled records             |

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{slot_count, Constraint};
use crate::population::{Mask, Population};
use crate::rng;
use crate::utility::{UtilitySpec, COUNT_EPS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostKind {
    /// `unit_cost * displacement`.
    Linear { unit_cost: f64 },
    /// `unit_cost * affected count`.
    PerPerson { unit_cost: f64 },
    /// Piecewise-linear in displacement through `(theta, cost)` points.
    Table { points: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    #[serde(flatten)]
    pub kind: CostKind,
    #[serde(default)]
    pub currency: String,
}

impl CostModel {
    pub fn linear(unit_cost: f64, currency: &str) -> Self {
        CostModel {
            kind: CostKind::Linear { unit_cost },
            currency: currency.into(),
        }
    }

    pub fn per_person(unit_cost: f64, currency: &str) -> Self {
        CostModel {
            kind: CostKind::PerPerson { unit_cost },
            currency: currency.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            CostKind::Linear { unit_cost } | CostKind::PerPerson { unit_cost } => {
                if !(*unit_cost >= 0.0 && unit_cost.is_finite()) {
                    return Err(Error::InvalidLever(format!(
                        "unit cost {unit_cost} must be nonnegative"
                    )));
                }
            }
            CostKind::Table { points } => {
                if points.len() < 2 {
                    return Err(Error::InvalidLever("cost table needs at least two points".into()));
                }
                if points[0] != (0.0, 0.0) {
                    return Err(Error::InvalidLever("cost table must start at (0, 0)".into()));
                }
                for w in points.windows(2) {
                    if !(w[1].0 > w[0].0) || w[1].1 < w[0].1 {
                        return Err(Error::InvalidLever(
                            "cost table needs increasing theta and nondecreasing cost".into(),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    fn table_cost(points: &[(f64, f64)], theta: f64) -> Result<f64> {
        let (lo, hi) = (points[0].0, points[points.len() - 1].0);
        if theta < lo - COUNT_EPS || theta > hi + COUNT_EPS {
            return Err(Error::CostOutOfRange { theta, lo, hi });
        }
        let theta = theta.clamp(lo, hi);
        let seg = points
            .windows(2)
            .find(|w| theta <= w[1].0)
            .unwrap_or(&points[points.len() - 2..]);
        let (x0, y0) = seg[0];
        let (x1, y1) = seg[1];
        Ok(y0 + (y1 - y0) * (theta - x0) / (x1 - x0))
    }

    /// Largest displacement purchasable with `spend` under a table model.
    fn table_inverse(points: &[(f64, f64)], spend: f64) -> f64 {
        for w in points.windows(2) {
            let (x0, y0) = w[0];
            let (x1, y1) = w[1];
            if spend < y1 {
                return x0 + (x1 - x0) * (spend - y0) / (y1 - y0);
            }
        }
        // beyond the table, or past a flat tail: everything up to the last point is affordable
        points[points.len() - 1].0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "order", rename_all = "snake_case")]
pub enum LabelingOrder {
    Random,
    /// Mask members are labeled before everyone else.
    ByMask {
        mask: Mask,
    },
}

/// One lever at a fixed magnitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LeverKind {
    PredictionImprovement {
        eta: f64,
        mask: Mask,
    },
    ExpandCapacity {
        delta_alpha: f64,
        target_mask: Option<Mask>,
    },
    Benefit {
        new_benefit: f64,
    },
    HarmReduction {
        new_harm_ratio: f64,
    },
    DataLabeling {
        label_share: f64,
        order: LabelingOrder,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lever {
    pub kind: LeverKind,
    pub cost: Option<CostModel>,
}

/// A lever with its magnitude left open: sweeps and budget splits pick it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LeverFamily {
    /// theta = eta.
    PredictionImprovement { mask: Mask },
    /// theta = delta_alpha.
    ExpandCapacity { target_mask: Option<Mask> },
    /// theta = new benefit level.
    Benefit,
    /// theta = new harm-to-benefit ratio.
    HarmReduction,
    /// theta = label share.
    DataLabeling { order: LabelingOrder, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeverTemplate {
    pub name: String,
    pub family: LeverFamily,
    pub cost: Option<CostModel>,
}

impl LeverTemplate {
    pub fn new(name: &str, family: LeverFamily, cost: Option<CostModel>) -> Self {
        LeverTemplate {
            name: name.into(),
            family,
            cost,
        }
    }

    pub fn at(&self, theta: f64) -> Lever {
        let kind = match &self.family {
            LeverFamily::PredictionImprovement { mask } => LeverKind::PredictionImprovement {
                eta: theta,
                mask: mask.clone(),
            },
            LeverFamily::ExpandCapacity { target_mask } => LeverKind::ExpandCapacity {
                delta_alpha: theta,
                target_mask: target_mask.clone(),
            },
            LeverFamily::Benefit => LeverKind::Benefit { new_benefit: theta },
            LeverFamily::HarmReduction => LeverKind::HarmReduction { new_harm_ratio: theta },
            LeverFamily::DataLabeling { order, seed } => LeverKind::DataLabeling {
                label_share: theta,
                order: order.clone(),
                seed: *seed,
            },
        };
        Lever {
            kind,
            cost: self.cost.clone(),
        }
    }
}

impl Lever {
    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn theta(&self) -> f64 {
        match &self.kind {
            LeverKind::PredictionImprovement { eta, .. } => *eta,
            LeverKind::ExpandCapacity { delta_alpha, .. } => *delta_alpha,
            LeverKind::Benefit { new_benefit } => *new_benefit,
            LeverKind::HarmReduction { new_harm_ratio } => *new_harm_ratio,
            LeverKind::DataLabeling { label_share, .. } => *label_share,
        }
    }
}

impl LeverKind {
    pub fn name(&self) -> &'static str {
        match self {
            LeverKind::PredictionImprovement { .. } => "prediction_improvement",
            LeverKind::ExpandCapacity { .. } => "expand_capacity",
            LeverKind::Benefit { .. } => "benefit",
            LeverKind::HarmReduction { .. } => "harm_reduction",
            LeverKind::DataLabeling { .. } => "data_labeling",
        }
    }
}

/// `p <- p + eta (w - p)` on masked records; RMSE over the mask scales by `1 - eta`.
pub fn apply_prediction_improvement(pop: &Population, eta: f64, mask: &Mask) -> Result<Population> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidLever(format!("eta {eta} not in [0, 1]")));
    }
    mask.check_len(pop.len())?;
    if let Some(i) = mask.indices().find(|&i| !pop.labeled[i]) {
        return Err(Error::UnlabeledInMask(i));
    }
    let mut out = pop.clone();
    if eta == 0.0 {
        return Ok(out);
    }
    for i in mask.indices() {
        let p = pop.predictions[i];
        out.predictions[i] = if eta == 1.0 {
            pop.outcomes()[i]
        } else {
            p + eta * (pop.outcomes()[i] - p)
        };
    }
    Ok(out)
}

/// Raises capacity by `delta_alpha`. With a target mask the extra slots are
/// `delta_alpha` of the subgroup's size, and a local cap on that exact mask is
/// raised by `delta_alpha`.
pub fn apply_capacity(c: &Constraint, delta_alpha: f64, target_mask: Option<&Mask>) -> Result<Constraint> {
    if !(delta_alpha >= 0.0 && delta_alpha.is_finite()) {
        return Err(Error::InvalidLever(format!(
            "delta_alpha {delta_alpha} must be nonnegative"
        )));
    }
    let mut out = c.clone();
    match target_mask {
        None => out.capacity = c.capacity + delta_alpha,
        Some(mask) => {
            mask.check_len(c.population_size)?;
            let added = slot_count(delta_alpha, mask.count());
            out.capacity = c.capacity + added as f64 / c.population_size as f64;
            if let Some(cap) = out.subgroup_caps.iter_mut().find(|cap| cap.mask.member == mask.member) {
                cap.capacity = (cap.capacity + delta_alpha).min(1.0);
            }
        }
    }
    if out.capacity > 1.0 + COUNT_EPS {
        return Err(Error::CapacityOverflow(out.capacity));
    }
    out.capacity = out.capacity.min(1.0);
    Ok(out)
}

pub fn apply_benefit(u: &UtilitySpec, new_benefit: f64) -> Result<UtilitySpec> {
    if !(new_benefit >= 0.0 && new_benefit.is_finite()) {
        return Err(Error::InvalidLever(format!(
            "benefit {new_benefit} must be nonnegative"
        )));
    }
    match u {
        UtilitySpec::Crra { rho, .. } => Ok(UtilitySpec::Crra {
            rho: *rho,
            benefit: new_benefit,
        }),
        UtilitySpec::Partitioned {
            threshold, below_value, ..
        } => Ok(UtilitySpec::Partitioned {
            threshold: *threshold,
            below_value: *below_value,
            above_value: new_benefit,
        }),
        UtilitySpec::Affine { .. } => Err(Error::VariantMismatch {
            lever: "benefit".into(),
            utility: "affine".into(),
        }),
    }
}

/// Sets `h/b` to `new_ratio` holding the benefit fixed.
pub fn apply_harm_reduction(u: &UtilitySpec, new_ratio: f64) -> Result<UtilitySpec> {
    if !(new_ratio >= 0.0 && new_ratio.is_finite()) {
        return Err(Error::InvalidLever(format!(
            "harm ratio {new_ratio} must be nonnegative"
        )));
    }
    match u {
        UtilitySpec::Partitioned {
            threshold,
            above_value,
            below_value,
        } if *below_value <= 0.0 => Ok(UtilitySpec::Partitioned {
            threshold: *threshold,
            below_value: if new_ratio == 0.0 {
                0.0
            } else {
                -new_ratio * above_value
            },
            above_value: *above_value,
        }),
        other => Err(Error::VariantMismatch {
            lever: "harm_reduction".into(),
            utility: other.name().into(),
        }),
    }
}

/// Current `h/b` of a partitioned utility.
pub fn harm_ratio(u: &UtilitySpec) -> Option<f64> {
    match u {
        UtilitySpec::Partitioned {
            below_value,
            above_value,
            ..
        } if *above_value != 0.0 => Some(-below_value / above_value),
        _ => None,
    }
}

pub fn benefit_level(u: &UtilitySpec) -> Option<f64> {
    match u {
        UtilitySpec::Partitioned { above_value, .. } => Some(*above_value),
        UtilitySpec::Crra { benefit, .. } => Some(*benefit),
        UtilitySpec::Affine { .. } => None,
    }
}

/// Order in which records gain labels: currently labeled records first, then
/// the rest; mask members lead within each class when ordering by mask, and a
/// seeded shuffle orders records within every class. Records without a stored
/// prediction cannot be labeled.
fn labeling_priority(pop: &Population, order: &LabelingOrder, seed: u64) -> Result<Vec<usize>> {
    let n = pop.len();
    let mut perm: Vec<usize> = (0..n).filter(|&i| pop.predictions[i].is_finite()).collect();
    rng::shuffle(&mut perm, &mut rng::seeded(seed));
    let in_mask = |i: usize| match order {
        LabelingOrder::Random => true,
        LabelingOrder::ByMask { mask } => mask.member[i],
    };
    if let LabelingOrder::ByMask { mask } = order {
        mask.check_len(n)?;
    }
    let class = |i: usize| (!pop.labeled[i]) as u8 * 2 + (!in_mask(i)) as u8;
    perm.sort_by_key(|&i| class(i));
    Ok(perm)
}

/// Labels exactly `floor(share * N)` records (fewer only if too few records
/// carry a stored prediction). Suppressed predictions are kept, so sweeping
/// the share reuses one population.
pub fn apply_labeling(pop: &Population, label_share: f64, order: &LabelingOrder, seed: u64) -> Result<Population> {
    if !(0.0..=1.0).contains(&label_share) {
        return Err(Error::InvalidLever(format!("label share {label_share} not in [0, 1]")));
    }
    let target = slot_count(label_share, pop.len());
    let priority = labeling_priority(pop, order, seed)?;
    let mut out = pop.clone();
    out.labeled = vec![false; pop.len()];
    for &i in priority.iter().take(target) {
        out.labeled[i] = true;
    }
    Ok(out)
}

/// Scenario facts the cost models need.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeverContext {
    pub population_size: usize,
    pub labeled: usize,
    pub slots: usize,
    pub capacity: f64,
    pub benefit: Option<f64>,
    pub harm_ratio: Option<f64>,
}

impl LeverContext {
    pub fn new(pop: &Population, constraint: &Constraint, utility: &UtilitySpec) -> Self {
        LeverContext {
            population_size: pop.len(),
            labeled: pop.labeled_count(),
            slots: constraint.slots(),
            capacity: constraint.capacity,
            benefit: benefit_level(utility),
            harm_ratio: harm_ratio(utility),
        }
    }
}

fn displacement(kind: &LeverKind, ctx: &LeverContext) -> f64 {
    match kind {
        LeverKind::PredictionImprovement { eta, .. } => *eta,
        LeverKind::ExpandCapacity { delta_alpha, .. } => *delta_alpha,
        LeverKind::Benefit { new_benefit } => (new_benefit - ctx.benefit.unwrap_or(0.0)).max(0.0),
        LeverKind::HarmReduction { new_harm_ratio } => (ctx.harm_ratio.unwrap_or(0.0) - new_harm_ratio).max(0.0),
        LeverKind::DataLabeling { label_share, .. } => {
            (label_share - ctx.labeled as f64 / ctx.population_size as f64).max(0.0)
        }
    }
}

fn affected(kind: &LeverKind, pop: &Population, ctx: &LeverContext) -> Result<f64> {
    Ok(match kind {
        LeverKind::PredictionImprovement { mask, .. } => {
            mask.check_len(pop.len())?;
            mask.indices().filter(|&i| pop.labeled[i]).count() as f64
        }
        LeverKind::ExpandCapacity {
            delta_alpha,
            target_mask,
        } => {
            let base = target_mask.as_ref().map_or(ctx.population_size, Mask::count);
            (delta_alpha * base as f64).round()
        }
        LeverKind::Benefit { .. } | LeverKind::HarmReduction { .. } => ctx.slots as f64 * displacement(kind, ctx),
        LeverKind::DataLabeling { label_share, .. } => {
            let target = slot_count(*label_share, ctx.population_size);
            target.saturating_sub(ctx.labeled) as f64
        }
    })
}

/// Cost of `lever` applied to a scenario described by `pop` and `ctx`.
pub fn lever_cost(lever: &Lever, pop: &Population, ctx: &LeverContext) -> Result<f64> {
    let Some(cost) = &lever.cost else {
        return Err(Error::InvalidLever(format!(
            "lever `{}` has no cost model",
            lever.name()
        )));
    };
    cost.validate()?;
    match &cost.kind {
        CostKind::Linear { unit_cost } => Ok(unit_cost * displacement(&lever.kind, ctx)),
        CostKind::PerPerson { unit_cost } => Ok(unit_cost * affected(&lever.kind, pop, ctx)?),
        CostKind::Table { points } => CostModel::table_cost(points, displacement(&lever.kind, ctx)),
    }
}

/// Valid theta range of a family in the given scenario.
pub fn theta_bounds(family: &LeverFamily, ctx: &LeverContext) -> (f64, f64) {
    match family {
        LeverFamily::PredictionImprovement { .. } => (0.0, 1.0),
        LeverFamily::ExpandCapacity { .. } => (0.0, (1.0 - ctx.capacity).max(0.0)),
        LeverFamily::Benefit => (ctx.benefit.unwrap_or(0.0), f64::INFINITY),
        LeverFamily::HarmReduction => (0.0, ctx.harm_ratio.unwrap_or(0.0)),
        LeverFamily::DataLabeling { .. } => (0.0, 1.0),
    }
}

/// Theta reached by moving a family `d` away from the current scenario. Gains
/// of every family are oriented so that larger `d` is a larger intervention.
pub fn theta_at_displacement(family: &LeverFamily, ctx: &LeverContext, d: f64) -> f64 {
    match family {
        LeverFamily::PredictionImprovement { .. } | LeverFamily::ExpandCapacity { .. } => d,
        LeverFamily::Benefit => ctx.benefit.unwrap_or(0.0) + d,
        LeverFamily::HarmReduction => ctx.harm_ratio.unwrap_or(0.0) - d,
        LeverFamily::DataLabeling { .. } => ctx.labeled as f64 / ctx.population_size as f64 + d,
    }
}

/// Largest displacement within the family's bounds (infinite for benefits).
pub fn max_displacement(family: &LeverFamily, ctx: &LeverContext) -> f64 {
    let (lo, hi) = theta_bounds(family, ctx);
    match family {
        LeverFamily::HarmReduction => ctx.harm_ratio.unwrap_or(0.0) - lo,
        _ => hi - theta_at_displacement(family, ctx, 0.0),
    }
    .max(0.0)
}

/// The theta that `spend` buys from a template, clamped to the family's bounds.
pub fn theta_for_spend(template: &LeverTemplate, spend: f64, ctx: &LeverContext) -> Result<f64> {
    let non_invertible = || Error::NonInvertibleCost(template.name.clone());
    let Some(cost) = &template.cost else {
        return Err(non_invertible());
    };
    cost.validate()?;
    let n = ctx.population_size as f64;
    let (lo, hi) = theta_bounds(&template.family, ctx);
    let from_displacement = |d: f64| theta_at_displacement(&template.family, ctx, d);
    let theta = match &cost.kind {
        CostKind::Linear { unit_cost } => {
            if *unit_cost == 0.0 {
                return Err(non_invertible());
            }
            from_displacement(spend / unit_cost)
        }
        CostKind::Table { points } => from_displacement(CostModel::table_inverse(points, spend)),
        CostKind::PerPerson { unit_cost } => {
            if *unit_cost == 0.0 {
                return Err(non_invertible());
            }
            let units = spend / unit_cost;
            let count = (units + COUNT_EPS).floor();
            match &template.family {
                LeverFamily::PredictionImprovement { .. } => return Err(non_invertible()),
                LeverFamily::ExpandCapacity { target_mask } => {
                    let base = target_mask.as_ref().map_or(ctx.population_size, Mask::count);
                    if base == 0 {
                        return Err(non_invertible());
                    }
                    count / base as f64
                }
                LeverFamily::DataLabeling { .. } => (ctx.labeled as f64 + count) / n,
                LeverFamily::Benefit | LeverFamily::HarmReduction => {
                    if ctx.slots == 0 {
                        return Err(non_invertible());
                    }
                    from_displacement(units / ctx.slots as f64)
                }
            }
        }
    };
    Ok(theta.clamp(lo, hi))
}
