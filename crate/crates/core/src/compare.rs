//! Lever comparisons: welfare curves, fixed-budget allocation across levers,
//! break-even improvements, equivalent costs and relative-value grids.
//!
//! Every analysis evaluates its base scenario once and measures gains against
//! that frozen value. Grid cells are independent and may run on several
//! workers; results are collected in grid order, so they do not depend on the
//! worker count.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levers::{
    apply_benefit, apply_capacity, apply_harm_reduction, apply_labeling, apply_prediction_improvement, lever_cost,
    max_displacement, theta_at_displacement, theta_for_spend, Lever, LeverContext, LeverFamily, LeverKind,
    LeverTemplate,
};
use crate::policy::{
    allocate, perfect_baseline, random_baseline, welfare, welfare_ratio, Constraint, PolicyOptions, ScoreField,
};
use crate::population::{rmse, Mask, Population};
use crate::utility::{resolve, UtilitySpec};

/// The allocation problem: population, utility, capacity and policy options.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub population: Population,
    pub utility: UtilitySpec,
    pub constraint: Constraint,
    pub policy: PolicyOptions,
}

impl Scenario {
    pub fn new(population: Population, utility: UtilitySpec, capacity: f64) -> Result<Self> {
        let constraint = Constraint::new(capacity, population.len())?;
        let s = Scenario {
            population,
            utility,
            constraint,
            policy: PolicyOptions::default(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_policy(mut self, policy: PolicyOptions) -> Self {
        self.policy = policy;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.constraint.population_size != self.population.len() {
            return Err(Error::InvalidConstraint(format!(
                "constraint sized for {} records, population has {}",
                self.constraint.population_size,
                self.population.len()
            )));
        }
        self.constraint.validate()?;
        resolve(&self.utility, &self.population)?;
        Ok(())
    }

    pub fn context(&self) -> LeverContext {
        LeverContext::new(&self.population, &self.constraint, &self.utility)
    }
}

/// Welfare of a scenario together with its analytic reference points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub welfare: f64,
    pub random_baseline: f64,
    pub perfect_baseline: f64,
    /// `welfare / random_baseline`; absent when the random baseline is zero.
    pub ratio_to_random: Option<f64>,
    pub population_size: usize,
    pub slots: usize,
    pub slots_used: usize,
    pub label_share: f64,
    pub random_fill: usize,
    pub warning: Option<String>,
}

/// Per-capita welfare of allocating by predictions.
pub fn evaluate(s: &Scenario) -> Result<f64> {
    let u = resolve(&s.utility, &s.population)?;
    let alloc = allocate(
        &s.population,
        &s.constraint,
        ScoreField::Prediction,
        &s.policy,
        Some(&u),
    )?;
    welfare(&s.population, &alloc, &u)
}

pub fn evaluate_detailed(s: &Scenario) -> Result<Evaluation> {
    let u = resolve(&s.utility, &s.population)?;
    let alloc = allocate(
        &s.population,
        &s.constraint,
        ScoreField::Prediction,
        &s.policy,
        Some(&u),
    )?;
    let w = welfare(&s.population, &alloc, &u)?;
    let random = random_baseline(&s.population, &s.constraint, &u)?;
    let perfect = perfect_baseline(&s.population, &s.constraint, &s.policy, &u)?;
    Ok(Evaluation {
        welfare: w,
        random_baseline: random,
        perfect_baseline: perfect,
        ratio_to_random: welfare_ratio(w, random).ok(),
        population_size: s.population.len(),
        slots: s.constraint.slots(),
        slots_used: alloc.slots_used,
        label_share: s.population.label_share(),
        random_fill: alloc.fill.count,
        warning: alloc.warning,
    })
}

fn stage(kind: &LeverKind) -> u8 {
    match kind {
        LeverKind::DataLabeling { .. } => 0,
        LeverKind::PredictionImprovement { .. } => 1,
        LeverKind::Benefit { .. } => 2,
        LeverKind::HarmReduction { .. } => 3,
        LeverKind::ExpandCapacity { .. } => 4,
    }
}

/// Applies one lever. Prediction improvement acts on the labeled members of
/// its mask only.
pub fn apply_lever(s: &Scenario, lever: &Lever) -> Result<Scenario> {
    let mut out = s.clone();
    match &lever.kind {
        LeverKind::PredictionImprovement { eta, mask } => {
            mask.check_len(s.population.len())?;
            let labeled = Mask {
                member: s.population.labeled_flags().to_vec(),
                description: "labeled".into(),
            };
            out.population = apply_prediction_improvement(&s.population, *eta, &mask.intersect(&labeled)?)?;
        }
        LeverKind::ExpandCapacity {
            delta_alpha,
            target_mask,
        } => out.constraint = apply_capacity(&s.constraint, *delta_alpha, target_mask.as_ref())?,
        LeverKind::Benefit { new_benefit } => out.utility = apply_benefit(&s.utility, *new_benefit)?,
        LeverKind::HarmReduction { new_harm_ratio } => out.utility = apply_harm_reduction(&s.utility, *new_harm_ratio)?,
        LeverKind::DataLabeling {
            label_share,
            order,
            seed,
        } => out.population = apply_labeling(&s.population, *label_share, order, *seed)?,
    }
    Ok(out)
}

/// Applies levers jointly in the fixed order labeling, prediction
/// improvement, benefit, harm, capacity. Levers of the same kind keep their
/// listed order.
pub fn apply_levers(s: &Scenario, levers: &[Lever]) -> Result<Scenario> {
    let mut ordered: Vec<&Lever> = levers.iter().collect();
    ordered.sort_by_key(|l| stage(&l.kind));
    let mut out = s.clone();
    for lever in ordered {
        out = apply_lever(&out, lever)?;
    }
    Ok(out)
}

pub fn welfare_gain(s: &Scenario, lever: &Lever) -> Result<f64> {
    Ok(evaluate(&apply_lever(s, lever)?)? - evaluate(s)?)
}

fn gain_from(base: f64, s: &Scenario, lever: &Lever) -> Result<f64> {
    Ok(evaluate(&apply_lever(s, lever)?)? - base)
}

/// Maps `f` over `items`, on up to `workers` threads (0 = all cores). Output
/// order always matches input order.
pub fn par_map<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if workers != 1 && items.len() > 1 {
        use rayon::prelude::*;
        let run = || items.par_iter().map(&f).collect();
        if workers == 0 {
            return run();
        }
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
            return pool.install(run);
        }
    }
    let _ = workers;
    items.iter().map(f).collect()
}

fn check_sorted(grid: &[f64], what: &str) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidGrid(format!("{what} grid is empty")));
    }
    if grid.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidGrid(format!("{what} grid has non-finite values")));
    }
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidGrid(format!("{what} grid must be sorted ascending")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub theta: f64,
    pub welfare: Option<f64>,
    pub gain: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub lever: String,
    pub baseline_welfare: f64,
    pub points: Vec<CurvePoint>,
}

/// One evaluation per grid point. A failing point is recorded and the sweep
/// continues.
pub fn welfare_curve(s: &Scenario, template: &LeverTemplate, grid: &[f64], workers: usize) -> Result<Curve> {
    check_sorted(grid, "theta")?;
    let base = evaluate(s)?;
    let points = par_map(grid, workers, |&theta| {
        match apply_lever(s, &template.at(theta)).and_then(|t| evaluate(&t)) {
            Ok(w) => CurvePoint {
                theta,
                welfare: Some(w),
                gain: Some(w - base),
                error: None,
            },
            Err(e) => CurvePoint {
                theta,
                welfare: None,
                gain: None,
                error: Some(e.to_string()),
            },
        }
    });
    Ok(Curve {
        lever: template.name.clone(),
        baseline_welfare: base,
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakEvenResult {
    /// Smallest grid theta whose gain reaches the benchmark gain.
    pub theta_star: Option<f64>,
    pub benchmark_gain: f64,
    pub attained: bool,
    pub baseline_welfare: f64,
    /// `(theta, gain)` at every grid point.
    pub gain_curve: Vec<(f64, f64)>,
    /// Improvement that would bring the mask's RMSE down to the whole
    /// population's RMSE. Reported separately from welfare parity.
    pub rmse_parity_eta: Option<f64>,
}

/// Scans the grid in order for the first theta whose gain matches the
/// benchmark lever's gain. A linear scan rather than bisection, since gains of
/// masked improvements need not be monotone.
pub fn break_even(
    s: &Scenario,
    sweep: &LeverTemplate,
    grid: &[f64],
    benchmark: &Lever,
    workers: usize,
) -> Result<BreakEvenResult> {
    check_sorted(grid, "break-even")?;
    if matches!(sweep.family, LeverFamily::PredictionImprovement { .. })
        && (grid[0] < 0.0 || grid[grid.len() - 1] > 1.0)
    {
        return Err(Error::InvalidGrid("eta grid must lie in [0, 1]".into()));
    }
    let base = evaluate(s)?;
    let benchmark_gain = gain_from(base, s, benchmark)?;
    let gains = par_map(grid, workers, |&theta| {
        gain_from(base, s, &sweep.at(theta)).map_err(|e| Error::at_cell(format!("theta={theta}"), e))
    });
    let mut gain_curve = Vec::with_capacity(grid.len());
    for (&theta, g) in grid.iter().zip(gains) {
        gain_curve.push((theta, g?));
    }
    let theta_star = gain_curve.iter().find(|(_, g)| *g >= benchmark_gain).map(|(t, _)| *t);
    let rmse_parity_eta = match &sweep.family {
        LeverFamily::PredictionImprovement { mask } => rmse_parity(&s.population, mask),
        _ => None,
    };
    Ok(BreakEvenResult {
        theta_star,
        benchmark_gain,
        attained: theta_star.is_some(),
        baseline_welfare: base,
        gain_curve,
        rmse_parity_eta,
    })
}

fn rmse_parity(pop: &Population, mask: &Mask) -> Option<f64> {
    let sub = rmse(pop, mask).ok()?;
    let all = rmse(pop, &Mask::all(pop.len())).ok()?;
    if sub <= all || sub == 0.0 {
        return Some(0.0);
    }
    Some(1.0 - all / sub)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum EquivalentCostOutcome {
    Found {
        theta: f64,
        displacement: f64,
        cost: f64,
    },
    /// The lever's gain exceeds anything the benchmark can deliver in range.
    RangeExceeded {
        max_gain: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalentCost {
    pub lever_gain: f64,
    pub baseline_welfare: f64,
    pub benchmark: String,
    pub outcome: EquivalentCostOutcome,
}

/// Number of evenly spaced points used to check benchmark monotonicity.
pub const MONOTONE_SAMPLES: usize = 33;
/// Relative bisection tolerance on the benchmark displacement.
pub const BISECTION_RTOL: f64 = 1e-6;

/// Spend on `benchmark` that yields the same gain as `lever`. The benchmark
/// is parametrized by displacement from the current scenario, checked for
/// monotone gains on a sample, then bisected for the smallest displacement
/// that reaches the target gain.
pub fn equivalent_cost(
    s: &Scenario,
    lever: &Lever,
    benchmark: &LeverTemplate,
    max_displacement_override: Option<f64>,
    workers: usize,
) -> Result<EquivalentCost> {
    let ctx = s.context();
    let dmax = max_displacement_override.unwrap_or_else(|| max_displacement(&benchmark.family, &ctx));
    if !(dmax.is_finite() && dmax >= 0.0) {
        return Err(Error::InvalidGrid(format!(
            "benchmark `{}` needs a finite maximum displacement",
            benchmark.name
        )));
    }
    let base = evaluate(s)?;
    let target = gain_from(base, s, lever)?;
    let gain_at = |d: f64| {
        gain_from(
            base,
            s,
            &benchmark.at(theta_at_displacement(&benchmark.family, &ctx, d)),
        )
    };
    let found = |d: f64| -> Result<EquivalentCostOutcome> {
        let theta = theta_at_displacement(&benchmark.family, &ctx, d);
        let cost = lever_cost(&benchmark.at(theta), &s.population, &ctx)?;
        Ok(EquivalentCostOutcome::Found {
            theta,
            displacement: d,
            cost,
        })
    };

    let samples: Vec<f64> = (0..MONOTONE_SAMPLES)
        .map(|k| dmax * k as f64 / (MONOTONE_SAMPLES - 1) as f64)
        .collect();
    let sampled: Vec<f64> = par_map(&samples, workers, |&d| gain_at(d))
        .into_iter()
        .collect::<Result<_>>()?;
    for (w, d) in sampled.windows(2).zip(&samples[1..]) {
        if w[1] < w[0] - 1e-12 * w[0].abs().max(1.0) {
            return Err(Error::NonMonotoneBenchmark(theta_at_displacement(
                &benchmark.family,
                &ctx,
                *d,
            )));
        }
    }
    let outcome = if sampled[0] >= target {
        found(0.0)?
    } else if sampled[sampled.len() - 1] < target {
        EquivalentCostOutcome::RangeExceeded {
            max_gain: sampled[sampled.len() - 1],
        }
    } else {
        // start from the bracketing samples
        let hi_idx = sampled.iter().position(|&g| g >= target).unwrap_or(samples.len() - 1);
        let (mut lo, mut hi) = (samples[hi_idx - 1], samples[hi_idx]);
        while hi - lo > BISECTION_RTOL * hi {
            let mid = 0.5 * (lo + hi);
            if gain_at(mid)? >= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        found(hi)?
    };
    Ok(EquivalentCost {
        lever_gain: target,
        baseline_welfare: base,
        benchmark: benchmark.name.clone(),
        outcome,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioGrid {
    pub lever_a: String,
    pub lever_b: String,
    pub axis_a: Vec<f64>,
    pub axis_b: Vec<f64>,
    pub gains_a: Vec<f64>,
    pub gains_b: Vec<f64>,
    /// `ratios[i][j] = gain_a[i] / gain_b[j]`; `None` where `gain_b[j] <= 0`.
    pub ratios: Vec<Vec<Option<f64>>>,
    /// Colour-scale bounds for display. Stored values are never truncated.
    pub truncation: (f64, f64),
}

/// Default display bounds for ratio heatmaps.
pub const DEFAULT_TRUNCATION: (f64, f64) = (0.2, 5.0);

pub fn ratio_grid(
    s: &Scenario,
    lever_a: &LeverTemplate,
    grid_a: &[f64],
    lever_b: &LeverTemplate,
    grid_b: &[f64],
    workers: usize,
) -> Result<RatioGrid> {
    if grid_a.is_empty() || grid_b.is_empty() {
        return Err(Error::InvalidGrid("ratio grid axes must be nonempty".into()));
    }
    let base = evaluate(s)?;
    let gains = |t: &LeverTemplate, grid: &[f64]| -> Result<Vec<f64>> {
        par_map(grid, workers, |&theta| {
            gain_from(base, s, &t.at(theta)).map_err(|e| Error::at_cell(format!("{}={theta}", t.name), e))
        })
        .into_iter()
        .collect()
    };
    let gains_a = gains(lever_a, grid_a)?;
    let gains_b = gains(lever_b, grid_b)?;
    let ratios = gains_a
        .iter()
        .map(|&ga| gains_b.iter().map(|&gb| (gb > 0.0).then(|| ga / gb)).collect())
        .collect();
    Ok(RatioGrid {
        lever_a: lever_a.name.clone(),
        lever_b: lever_b.name.clone(),
        axis_a: grid_a.to_vec(),
        axis_b: grid_b.to_vec(),
        gains_a,
        gains_b,
        ratios,
        truncation: DEFAULT_TRUNCATION,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub lever: String,
    pub spend: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetAllocationResult {
    pub splits: Vec<Split>,
    pub total_welfare: f64,
    pub welfare_gain: f64,
    pub baseline_welfare: f64,
    pub budget: f64,
    pub resolution: f64,
    pub cells_evaluated: usize,
}

impl BudgetAllocationResult {
    pub fn total_spend(&self) -> f64 {
        self.splits.iter().map(|s| s.spend).sum()
    }
}

/// Upper bound on simplex cells a single optimization may evaluate.
pub const MAX_BUDGET_CELLS: u128 = 5_000_000;

/// All ways to give each of `parts` levers a whole number of steps, at most
/// `steps` in total, in lexicographic order.
pub(crate) fn simplex_cells(parts: usize, steps: u64) -> Vec<Vec<u64>> {
    fn rec(parts: usize, left: u64, prefix: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if prefix.len() == parts {
            out.push(prefix.clone());
            return;
        }
        for s in 0..=left {
            prefix.push(s);
            rec(parts, left - s, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(parts, steps, &mut Vec::with_capacity(parts), &mut out);
    out
}

/// `C(steps + parts, parts)`: number of cells [`simplex_cells`] produces.
pub fn simplex_size(parts: usize, steps: u64) -> u128 {
    let mut c: u128 = 1;
    for i in 1..=parts as u128 {
        c = c * (steps as u128 + i) / i;
    }
    c
}

/// Exhaustive search over the spend simplex at `resolution` (default 1% of
/// the budget). Leaving budget unspent is allowed. Ties go to the
/// lexicographically smallest spend vector in lever order.
pub fn optimize_budget(
    s: &Scenario,
    levers: &[LeverTemplate],
    budget: f64,
    resolution: Option<f64>,
    workers: usize,
) -> Result<BudgetAllocationResult> {
    if levers.is_empty() || levers.len() > 3 {
        return Err(Error::InvalidGrid(format!("expected 1-3 levers, got {}", levers.len())));
    }
    if !(budget >= 0.0 && budget.is_finite()) {
        return Err(Error::InvalidGrid(format!("budget {budget} must be nonnegative")));
    }
    let resolution = resolution.unwrap_or(budget / 100.0);
    let steps = if budget == 0.0 {
        0
    } else {
        if !(resolution > 0.0) {
            return Err(Error::InvalidGrid(format!("resolution {resolution} must be positive")));
        }
        (budget / resolution + 1e-9).floor() as u64
    };
    let size = simplex_size(levers.len(), steps);
    if size > MAX_BUDGET_CELLS {
        return Err(Error::TooLargeToEnumerate(size));
    }
    let ctx = s.context();
    // theta per lever per step count, computed once
    let thetas: Vec<Vec<f64>> = levers
        .iter()
        .map(|t| {
            (0..=steps)
                .map(|k| theta_for_spend(t, k as f64 * resolution, &ctx))
                .collect()
        })
        .collect::<Result<_>>()?;
    let base = evaluate(s)?;
    let cells = simplex_cells(levers.len(), steps);
    let values = par_map(&cells, workers, |cell| {
        let chosen: Vec<Lever> = cell
            .iter()
            .zip(levers)
            .zip(&thetas)
            .map(|((&k, t), th)| t.at(th[k as usize]))
            .collect();
        apply_levers(s, &chosen)
            .and_then(|t| evaluate(&t))
            .map_err(|e| Error::at_cell(format!("steps={cell:?}"), e))
    });
    let mut best: Option<(usize, f64)> = None;
    for (idx, v) in values.into_iter().enumerate() {
        let v = v?;
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((idx, v));
        }
    }
    let (idx, total) = best.expect("simplex has at least the zero cell");
    Ok(BudgetAllocationResult {
        splits: cells[idx]
            .iter()
            .zip(levers)
            .zip(&thetas)
            .map(|((&k, t), th)| Split {
                lever: t.name.clone(),
                spend: k as f64 * resolution,
                theta: th[k as usize],
            })
            .collect(),
        total_welfare: total,
        welfare_gain: total - base,
        baseline_welfare: base,
        budget,
        resolution,
        cells_evaluated: cells.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levers::CostModel;
    use crate::population::Direction;

    fn perfect(n: usize) -> Population {
        let w: Vec<f64> = (0..n).map(|i| ((i * 37) % n) as f64).collect();
        Population::labeled(w.clone(), w, Direction::HigherIsRisk).unwrap()
    }

    fn noisy(n: usize) -> Population {
        let w: Vec<f64> = (0..n).map(|i| ((i * 37) % n) as f64).collect();
        let p: Vec<f64> = w
            .iter()
            .enumerate()
            .map(|(i, x)| x + ((i * 53) % 17) as f64 * 3.0)
            .collect();
        Population::labeled(w, p, Direction::HigherIsRisk).unwrap()
    }

    fn improve(n: usize) -> LeverTemplate {
        LeverTemplate::new(
            "improve",
            LeverFamily::PredictionImprovement { mask: Mask::all(n) },
            None,
        )
    }

    fn capacity(cost: f64) -> LeverTemplate {
        LeverTemplate::new(
            "capacity",
            LeverFamily::ExpandCapacity { target_mask: None },
            Some(CostModel::per_person(cost, "hours")),
        )
    }

    #[test]
    fn perfect_predictor_evaluates_to_bound() {
        let s = Scenario::new(perfect(1000), UtilitySpec::step(0.15, 1.0), 0.1).unwrap();
        let e = evaluate_detailed(&s).unwrap();
        assert_eq!(e.welfare, 0.1);
        assert_eq!(e.random_baseline, 0.015);
        assert_eq!(e.perfect_baseline, 0.1);
    }

    #[test]
    fn crra_without_benefit_is_zero() {
        let w: Vec<f64> = (1..=50).map(f64::from).collect();
        let pop = Population::labeled(w.clone(), w, Direction::LowerIsRisk).unwrap();
        let s = Scenario::new(pop, UtilitySpec::Crra { rho: 3.0, benefit: 0.0 }, 0.2).unwrap();
        assert_eq!(evaluate(&s).unwrap(), 0.0);
    }

    #[test]
    fn unlabeled_population_fills_at_random() {
        let w: Vec<f64> = (0..100).map(f64::from).collect();
        let pop = Population::from_columns(w.clone(), w, vec![false; 100], Direction::HigherIsRisk).unwrap();
        let s = Scenario::new(pop, UtilitySpec::step(0.2, 1.0), 0.3).unwrap();
        let e = evaluate_detailed(&s).unwrap();
        assert_eq!(e.random_fill, 30);
        assert_eq!(e.slots_used, 30);
    }

    #[test]
    fn identity_improvement_has_no_gain() {
        let s = Scenario::new(noisy(200), UtilitySpec::step(0.15, 1.0), 0.1).unwrap();
        assert_eq!(welfare_gain(&s, &improve(200).at(0.0)).unwrap(), 0.0);
    }

    #[test]
    fn capacity_gain_nonnegative_under_step() {
        let s = Scenario::new(noisy(20), UtilitySpec::step(0.3, 1.0), 0.1).unwrap();
        for k in 1..=10 {
            let g = welfare_gain(&s, &capacity(1.0).at(k as f64 / 20.0)).unwrap();
            assert!(g >= 0.0);
        }
    }

    #[test]
    fn curve_records_point_errors() {
        let s = Scenario::new(noisy(100), UtilitySpec::step(0.15, 1.0), 0.5).unwrap();
        let c = welfare_curve(&s, &capacity(1.0), &[0.0, 0.25, 0.75], 1).unwrap();
        assert!(c.points[0].error.is_none());
        assert!(c.points[2].error.as_deref().unwrap().contains("exceeds 1"));
        assert!(welfare_curve(&s, &capacity(1.0), &[0.5, 0.1], 1).is_err());
    }

    #[test]
    fn uniform_improvement_curve_ends_at_perfect() {
        let s = Scenario::new(noisy(300), UtilitySpec::step(0.15, 1.0), 0.1).unwrap();
        let c = welfare_curve(&s, &improve(300), &[0.0, 0.5, 1.0], 1).unwrap();
        let gains: Vec<f64> = c.points.iter().map(|p| p.gain.unwrap()).collect();
        assert!(gains.windows(2).all(|w| w[1] >= w[0]));
        let e = evaluate_detailed(&s).unwrap();
        assert_eq!(gains[2], e.perfect_baseline - e.welfare);
    }

    #[test]
    fn break_even_zero_and_unattainable() {
        let s = Scenario::new(noisy(300), UtilitySpec::step(0.15, 1.0), 0.1).unwrap();
        let grid: Vec<f64> = (0..=20).map(|k| k as f64 / 20.0).collect();
        let r = break_even(&s, &improve(300), &grid, &capacity(1.0).at(0.0), 1).unwrap();
        assert_eq!(r.theta_star, Some(0.0));
        let r = break_even(&s, &improve(300), &grid, &capacity(1.0).at(0.5), 1).unwrap();
        assert!(!r.attained);
        assert_eq!(r.gain_curve.len(), 21);
        assert!(break_even(&s, &improve(300), &[0.0, 1.5], &capacity(1.0).at(0.0), 1).is_err());
    }

    #[test]
    fn equivalent_cost_zero_gain_is_free() {
        let s = Scenario::new(noisy(300), UtilitySpec::step(0.15, 1.0), 0.1).unwrap();
        let r = equivalent_cost(&s, &improve(300).at(0.0), &capacity(4.0), None, 1).unwrap();
        assert!(matches!(r.outcome, EquivalentCostOutcome::Found { cost, .. } if cost == 0.0));
    }

    #[test]
    fn equivalent_cost_flags_nonmonotone_benchmark() {
        // capacity under heavy harm eventually loses welfare
        let s = Scenario::new(noisy(300), UtilitySpec::harm_benefit(0.1, 1.0, 5.0), 0.05).unwrap();
        let r = equivalent_cost(&s, &improve(300).at(0.5), &capacity(1.0), None, 1);
        assert!(matches!(r, Err(Error::NonMonotoneBenchmark(_))), "{r:?}");
    }

    #[test]
    fn ratio_grid_diagonal_and_undefined() {
        let s = Scenario::new(noisy(300), UtilitySpec::step(0.15, 1.0), 0.1).unwrap();
        let grid = [0.25, 0.5, 1.0];
        let g = ratio_grid(&s, &improve(300), &grid, &improve(300), &grid, 1).unwrap();
        for i in 0..3 {
            if g.gains_b[i] > 0.0 {
                assert_eq!(g.ratios[i][i], Some(1.0));
            }
        }
        let g = ratio_grid(&s, &improve(300), &grid, &improve(300), &[0.0], 1).unwrap();
        assert!(g.ratios.iter().all(|row| row[0].is_none()));
    }

    #[test]
    fn simplex_enumeration() {
        let cells = simplex_cells(2, 3);
        assert_eq!(cells.len(), 10);
        assert_eq!(simplex_size(2, 3), 10);
        assert_eq!(cells[0], vec![0, 0]);
        assert_eq!(cells[1], vec![0, 1]);
        assert_eq!(simplex_size(3, 100), 176_851);
        assert_eq!(simplex_cells(3, 4).len() as u128, simplex_size(3, 4));
    }

    #[test]
    fn zero_budget_is_zero_split() {
        let s = Scenario::new(noisy(100), UtilitySpec::step(0.15, 1.0), 0.1).unwrap();
        let r = optimize_budget(&s, &[capacity(1.0)], 0.0, None, 1).unwrap();
        assert_eq!(r.splits[0].spend, 0.0);
        assert_eq!(r.welfare_gain, 0.0);
        assert_eq!(r.cells_evaluated, 1);
    }

    #[test]
    fn workers_do_not_change_results() {
        let s = Scenario::new(noisy(400), UtilitySpec::harm_benefit(0.2, 1.0, 1.0), 0.05).unwrap();
        let lab = LeverTemplate::new(
            "improve",
            LeverFamily::PredictionImprovement { mask: Mask::all(400) },
            Some(CostModel::linear(10.0, "usd")),
        );
        let a = optimize_budget(&s, &[lab.clone(), capacity(1.0)], 40.0, Some(1.0), 1).unwrap();
        let b = optimize_budget(&s, &[lab, capacity(1.0)], 40.0, Some(1.0), 4).unwrap();
        assert_eq!(a, b);
    }
}
