//! Seeded synthetic populations and brute-force reference oracles.
//!
//! Generation uses independent ChaCha8 streams derived from the population seed
//! (`rng::derive(seed, k)`): k=1 outcomes, k=2 prediction noise, k=3
//! covariates, k=4 the initial labeling. Uniforms in `[0, 1)` are
//! `(next_u64 >> 11) * 2^-53`; standard normals come from Box-Muller, using
//! the cosine branch only (one normal per pair of uniforms). With these rules
//! a fixture is reproducible from its spec alone.
//!
//! Every record carries two covariates: `age` (integer 18..=64) and
//! `last_job` (months since the last job, 1..=120, or missing). Records with a
//! missing `last_job` form the group `no_history`, and their prediction noise
//! can be scaled separately to mimic a harder-to-predict subgroup.

use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::compare::{apply_levers, evaluate, BudgetAllocationResult, Scenario, Split};
use crate::error::{Error, Result};
use crate::levers::{CostKind, LeverFamily, LeverTemplate};
use crate::population::{Direction, Population};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OutcomeDist {
    /// `exp(mu + sigma z)`.
    Lognormal { mu: f64, sigma: f64 },
    /// Pareto type I: `scale * (1 - u)^(-1/shape)`.
    Pareto { shape: f64, scale: f64 },
    /// `high` with probability `share_at_risk`, otherwise `low`.
    TwoPoint { share_at_risk: f64, low: f64, high: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Noise {
    /// `p = w + sigma z`.
    Additive { sigma: f64 },
    /// `p = exp(ln w + sigma z)`; needs positive outcomes.
    LogAdditive { sigma: f64 },
}

impl Noise {
    fn sigma(self) -> f64 {
        match self {
            Noise::Additive { sigma } | Noise::LogAdditive { sigma } => sigma,
        }
    }
}

fn default_missing() -> f64 {
    0.2
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub n: usize,
    pub outcome: OutcomeDist,
    pub noise: Noise,
    #[serde(default)]
    pub direction: Direction,
    #[serde(default)]
    pub seed: u64,
    /// Probability that `last_job` is missing.
    #[serde(default = "default_missing")]
    pub missing_history: f64,
    /// Noise multiplier for records without job history.
    #[serde(default = "one")]
    pub no_history_noise_scale: f64,
    /// Share of records labeled at generation, `floor(share * n)` of them
    /// chosen by a seeded shuffle. Unlabeled records keep their predictions
    /// so a labeling lever can reveal them.
    #[serde(default = "one")]
    pub label_share: f64,
}

/// Mean yearly consumption of the default poverty fixture.
pub const POVERTY_MEAN: f64 = 1250.0;
/// Log-scale spread of the default poverty fixture.
pub const POVERTY_SIGMA: f64 = 0.8;

impl SynthSpec {
    /// Employment-style fixture: 15% long-duration cases at 400 days, the
    /// rest at 0, higher outcome means higher risk.
    pub fn two_point(n: usize, sigma: f64, seed: u64) -> Self {
        SynthSpec {
            n,
            outcome: OutcomeDist::TwoPoint {
                share_at_risk: 0.15,
                low: 0.0,
                high: 400.0,
            },
            noise: Noise::Additive { sigma },
            direction: Direction::HigherIsRisk,
            seed,
            missing_history: default_missing(),
            no_history_noise_scale: 1.0,
            label_share: 1.0,
        }
    }

    /// Poverty-style fixture: lognormal consumption with mean 1,250, lower
    /// consumption means higher risk, noise on the log scale.
    pub fn poverty(n: usize, sigma: f64, seed: u64) -> Self {
        SynthSpec {
            n,
            outcome: OutcomeDist::Lognormal {
                mu: POVERTY_MEAN.ln() - 0.5 * POVERTY_SIGMA * POVERTY_SIGMA,
                sigma: POVERTY_SIGMA,
            },
            noise: Noise::LogAdditive { sigma },
            direction: Direction::LowerIsRisk,
            seed,
            missing_history: default_missing(),
            no_history_noise_scale: 1.0,
            label_share: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.n < 2 {
            return bad(format!("n = {} must be at least 2", self.n));
        }
        let sigma = self.noise.sigma();
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return bad(format!("noise sigma {sigma} must be finite and nonnegative"));
        }
        if !(0.0..=1.0).contains(&self.missing_history) {
            return bad(format!("missing_history {} not in [0, 1]", self.missing_history));
        }
        if !(0.0..=1.0).contains(&self.label_share) {
            return bad(format!("label_share {} not in [0, 1]", self.label_share));
        }
        if !(self.no_history_noise_scale >= 0.0 && self.no_history_noise_scale.is_finite()) {
            return bad(format!(
                "no_history_noise_scale {} must be nonnegative",
                self.no_history_noise_scale
            ));
        }
        let positive = match self.outcome {
            OutcomeDist::Lognormal { mu, sigma } => {
                if !(mu.is_finite() && sigma >= 0.0 && sigma.is_finite()) {
                    return bad(format!("lognormal({mu}, {sigma}) out of range"));
                }
                true
            }
            OutcomeDist::Pareto { shape, scale } => {
                if !(shape > 0.0 && scale > 0.0 && shape.is_finite() && scale.is_finite()) {
                    return bad(format!(
                        "pareto(shape {shape}, scale {scale}) needs positive parameters"
                    ));
                }
                true
            }
            OutcomeDist::TwoPoint {
                share_at_risk,
                low,
                high,
            } => {
                if !(0.0..=1.0).contains(&share_at_risk) || !(low.is_finite() && high.is_finite()) {
                    return bad(format!("two_point({share_at_risk}, {low}, {high}) out of range"));
                }
                let at_risk_ahead = match self.direction {
                    Direction::HigherIsRisk => high > low,
                    Direction::LowerIsRisk => high < low,
                };
                if !at_risk_ahead {
                    return bad("two_point `high` must be the riskier value for the direction".into());
                }
                low > 0.0 && high > 0.0
            }
        };
        if matches!(self.noise, Noise::LogAdditive { .. }) && !positive {
            return bad("log-additive noise needs strictly positive outcomes".into());
        }
        Ok(())
    }
}

fn unit(r: &mut ChaCha8Rng) -> f64 {
    (r.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn normal(r: &mut ChaCha8Rng) -> f64 {
    let u1 = 1.0 - unit(r);
    let u2 = unit(r);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Draws a population from `spec`.
pub fn generate(spec: &SynthSpec) -> Result<Population> {
    spec.validate()?;
    let n = spec.n;
    let mut r_out = rng::seeded(rng::derive(spec.seed, 1));
    let mut r_noise = rng::seeded(rng::derive(spec.seed, 2));
    let mut r_cov = rng::seeded(rng::derive(spec.seed, 3));

    let outcomes: Vec<f64> = (0..n)
        .map(|_| match spec.outcome {
            OutcomeDist::Lognormal { mu, sigma } => (mu + sigma * normal(&mut r_out)).exp(),
            OutcomeDist::Pareto { shape, scale } => scale * (1.0 - unit(&mut r_out)).powf(-1.0 / shape),
            OutcomeDist::TwoPoint {
                share_at_risk,
                low,
                high,
            } => {
                if unit(&mut r_out) < share_at_risk {
                    high
                } else {
                    low
                }
            }
        })
        .collect();

    let mut age = Vec::with_capacity(n);
    let mut last_job = Vec::with_capacity(n);
    let mut no_history = Vec::with_capacity(n);
    for _ in 0..n {
        age.push(Some((18 + rng::index(&mut r_cov, 47)).to_string()));
        let missing = unit(&mut r_cov) < spec.missing_history;
        let months = 1 + rng::index(&mut r_cov, 120);
        last_job.push((!missing).then(|| months.to_string()));
        no_history.push(missing);
    }

    let predictions: Vec<f64> = outcomes
        .iter()
        .zip(&no_history)
        .map(|(&w, &nh)| {
            let z = normal(&mut r_noise);
            let sigma = spec.noise.sigma() * if nh { spec.no_history_noise_scale } else { 1.0 };
            if sigma == 0.0 {
                return w;
            }
            match spec.noise {
                Noise::Additive { .. } => w + sigma * z,
                Noise::LogAdditive { .. } => (w.ln() + sigma * z).exp(),
            }
        })
        .collect();

    let mut labeled = vec![true; n];
    if spec.label_share < 1.0 {
        let mut order: Vec<usize> = (0..n).collect();
        rng::shuffle(&mut order, &mut rng::seeded(rng::derive(spec.seed, 4)));
        let keep = crate::policy::slot_count(spec.label_share, n);
        labeled = vec![false; n];
        for &i in &order[..keep] {
            labeled[i] = true;
        }
    }

    Population::from_columns(outcomes, predictions, labeled, spec.direction)?
        .with_covariate("age", age)?
        .with_covariate("last_job", last_job)?
        .with_group("no_history", no_history)
}

/// First grid point whose gain reaches `target`, by plain linear scan.
/// `None` when no point does.
pub fn oracle_scan(grid: &[f64], target: f64, mut gain: impl FnMut(f64) -> f64) -> Option<f64> {
    grid.iter().copied().find(|&theta| gain(theta) >= target)
}

/// Cell limit for [`oracle_budget`].
pub const ORACLE_MAX_CELLS: u128 = 1_000_000;

/// Theta bought by an integer spend, worked out directly from the lever's
/// definition. Supports linear and per-person costs on capacity, labeling,
/// benefit and harm levers, plus linear costs on prediction improvement.
fn oracle_theta(t: &LeverTemplate, spend: f64, s: &Scenario) -> Result<f64> {
    let n = s.population.len() as f64;
    let unsupported = || Error::InvalidSpec(format!("oracle cannot price lever `{}`", t.name));
    let cost = t.cost.as_ref().ok_or_else(unsupported)?;
    let share = s.population.labeled_count() as f64 / n;
    let slots = s.constraint.slots() as f64;
    let (b, ratio) = match s.utility {
        crate::UtilitySpec::Partitioned {
            below_value,
            above_value,
            ..
        } => (
            above_value,
            if above_value > 0.0 {
                -below_value / above_value
            } else {
                0.0
            },
        ),
        crate::UtilitySpec::Crra { benefit, .. } => (benefit, 0.0),
        crate::UtilitySpec::Affine { .. } => (0.0, 0.0),
    };
    let theta = match (&cost.kind, &t.family) {
        (CostKind::Linear { unit_cost }, fam) if *unit_cost > 0.0 => {
            let d = spend / unit_cost;
            match fam {
                LeverFamily::PredictionImprovement { .. } => d.min(1.0),
                LeverFamily::ExpandCapacity { .. } => d.min(1.0 - s.constraint.capacity),
                LeverFamily::DataLabeling { .. } => (share + d).min(1.0),
                LeverFamily::Benefit => b + d,
                LeverFamily::HarmReduction => (ratio - d).max(0.0),
            }
        }
        (CostKind::PerPerson { unit_cost }, fam) if *unit_cost > 0.0 => {
            let units = spend / unit_cost;
            let whole = (units + 1e-9).floor();
            match fam {
                LeverFamily::ExpandCapacity { target_mask: None } => (whole / n).min(1.0 - s.constraint.capacity),
                LeverFamily::DataLabeling { .. } => ((s.population.labeled_count() as f64 + whole) / n).min(1.0),
                LeverFamily::Benefit if slots > 0.0 => b + units / slots,
                LeverFamily::HarmReduction if slots > 0.0 => (ratio - units / slots).max(0.0),
                _ => return Err(unsupported()),
            }
        }
        _ => return Err(unsupported()),
    };
    Ok(theta)
}

/// Exact budget split by enumerating every vector of integer spends (in
/// units of `step`) with total at most `budget`. Ties keep the first vector
/// in lexicographic order.
pub fn oracle_budget(s: &Scenario, levers: &[LeverTemplate], budget: f64, step: f64) -> Result<BudgetAllocationResult> {
    if levers.is_empty() || !(step > 0.0) || !(budget >= 0.0) {
        return Err(Error::InvalidSpec(
            "oracle needs levers, a positive step and a nonnegative budget".into(),
        ));
    }
    let total = (budget / step + 1e-9).floor() as u64;
    let mut cells: u128 = 1;
    for i in 1..=levers.len() as u128 {
        cells = cells * (total as u128 + i) / i;
    }
    if cells > ORACLE_MAX_CELLS {
        return Err(Error::TooLargeToEnumerate(cells));
    }
    let base = evaluate(s)?;
    let m = levers.len();
    let mut counts = vec![0u64; m];
    let mut best: Option<(Vec<u64>, Vec<f64>, f64)> = None;
    let mut visited = 0usize;
    loop {
        let thetas: Vec<f64> = counts
            .iter()
            .zip(levers)
            .map(|(&k, t)| oracle_theta(t, k as f64 * step, s))
            .collect::<Result<_>>()?;
        let chosen: Vec<_> = levers.iter().zip(&thetas).map(|(t, &th)| t.at(th)).collect();
        let w = evaluate(&apply_levers(s, &chosen)?)?;
        visited += 1;
        if best.as_ref().is_none_or(|(_, _, bw)| w > *bw) {
            best = Some((counts.clone(), thetas, w));
        }
        // odometer over the simplex, last lever fastest
        let used: u64 = counts.iter().sum();
        if used < total {
            counts[m - 1] += 1;
            continue;
        }
        let mut pos = m - 1;
        loop {
            counts[pos] = 0;
            if pos == 0 {
                break;
            }
            pos -= 1;
            let used: u64 = counts.iter().sum();
            if used < total {
                counts[pos] += 1;
                break;
            }
        }
        if counts.iter().all(|&c| c == 0) {
            break;
        }
    }
    let (counts, thetas, w) = best.expect("at least one cell");
    Ok(BudgetAllocationResult {
        splits: levers
            .iter()
            .zip(counts)
            .zip(thetas)
            .map(|((t, k), theta)| Split {
                lever: t.name.clone(),
                spend: k as f64 * step,
                theta,
            })
            .collect(),
        total_welfare: w,
        welfare_gain: w - base,
        baseline_welfare: base,
        budget,
        resolution: step,
        cells_evaluated: visited,
    })
}
