//! Planner utilities `u(w, a)` and net gains `u(w, 1) - u(w, 0)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::population::{Direction, Population};

/// Tolerance used when turning population fractions into record counts, so that
/// e.g. `0.29 * 100` yields 29 rather than 28.
pub(crate) const COUNT_EPS: f64 = 1e-9;

/// Number of records at risk under quantile `beta`: `ceil(beta * n)`.
pub fn at_risk_count(beta: f64, n: usize) -> usize {
    ((beta * n as f64 - COUNT_EPS).ceil().max(0.0) as usize).min(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Threshold {
    /// The `ceil(beta * N)` most at-risk outcomes, ties broken by record order.
    Quantile { beta: f64 },
    /// Fixed outcome value; records on the at-risk side (inclusive) qualify.
    Absolute { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UtilitySpec {
    /// `a * above_value` for at-risk records, `a * below_value` otherwise.
    /// Step utility is `below_value = 0`; harm/benefit is `below_value = -h`.
    Partitioned {
        threshold: Threshold,
        below_value: f64,
        above_value: f64,
    },
    /// `((w + b a)^(1-rho) - w^(1-rho)) / (1 - rho)`, log form at `rho = 1`.
    Crra { rho: f64, benefit: f64 },
    /// Net gain `slope * w + intercept`.
    Affine { slope: f64, intercept: f64 },
}

impl UtilitySpec {
    pub fn step(beta: f64, benefit: f64) -> Self {
        UtilitySpec::Partitioned {
            threshold: Threshold::Quantile { beta },
            below_value: 0.0,
            above_value: benefit,
        }
    }

    /// Partitioned utility with benefit `b` and misallocation harm `h`.
    pub fn harm_benefit(beta: f64, benefit: f64, harm: f64) -> Self {
        UtilitySpec::Partitioned {
            threshold: Threshold::Quantile { beta },
            below_value: -harm,
            above_value: benefit,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            UtilitySpec::Partitioned { .. } => "partitioned",
            UtilitySpec::Crra { .. } => "crra",
            UtilitySpec::Affine { .. } => "affine",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            UtilitySpec::Partitioned {
                threshold,
                below_value,
                above_value,
            } => {
                if !(below_value.is_finite() && above_value.is_finite()) {
                    return Err(Error::InvalidUtility("partition values must be finite".into()));
                }
                match threshold {
                    Threshold::Quantile { beta } if !(beta > 0.0 && beta < 1.0) => {
                        Err(Error::InvalidUtility(format!("beta {beta} not in (0, 1)")))
                    }
                    Threshold::Absolute { value } if !value.is_finite() => {
                        Err(Error::InvalidUtility("threshold must be finite".into()))
                    }
                    _ => Ok(()),
                }
            }
            UtilitySpec::Crra { rho, benefit } => {
                if !(rho > 0.0 && rho.is_finite()) {
                    return Err(Error::InvalidUtility(format!("rho {rho} must be positive")));
                }
                if !(benefit >= 0.0 && benefit.is_finite()) {
                    return Err(Error::InvalidUtility(format!("benefit {benefit} must be nonnegative")));
                }
                Ok(())
            }
            UtilitySpec::Affine { slope, intercept } => {
                if !(slope.is_finite() && intercept.is_finite()) {
                    return Err(Error::InvalidUtility("affine coefficients must be finite".into()));
                }
                Ok(())
            }
        }
    }
}

/// CRRA net gain of adding `benefit` to consumption `w`.
pub fn crra_gain(rho: f64, benefit: f64, w: f64) -> Result<f64> {
    if !(w > 0.0) || !(w + benefit > 0.0) {
        return Err(Error::Domain(format!("CRRA needs positive consumption, got w={w}")));
    }
    let log_ratio = (benefit / w).ln_1p();
    if rho == 1.0 {
        return Ok(log_ratio);
    }
    let e = 1.0 - rho;
    // w^e * ((1 + b/w)^e - 1) / e, written to avoid cancellation near rho = 1
    Ok(w.powf(e) * (e * log_ratio).exp_m1() / e)
}

/// A utility bound to a population: quantile thresholds are materialized.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedUtility {
    spec: UtilitySpec,
    direction: Direction,
    threshold: Option<f64>,
    /// Per-record at-risk flags for quantile thresholds.
    at_risk: Option<Vec<bool>>,
}

/// Binds `spec` to `pop`.
pub fn resolve(spec: &UtilitySpec, pop: &Population) -> Result<ResolvedUtility> {
    spec.validate()?;
    if pop.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    if let Some(i) = pop.outcomes().iter().position(|w| !w.is_finite()) {
        return Err(Error::Domain(format!("outcome of record {} is not finite", i + 1)));
    }
    let direction = pop.direction();
    let (threshold, at_risk) = match *spec {
        UtilitySpec::Partitioned { threshold, .. } => match threshold {
            Threshold::Quantile { beta } => {
                let m = at_risk_count(beta, pop.len());
                let ranking = pop.outcome_ranking();
                let mut flags = vec![false; pop.len()];
                for &i in &ranking[..m] {
                    flags[i] = true;
                }
                let t = if m > 0 {
                    pop.outcomes()[ranking[m - 1]]
                } else {
                    f64::NAN
                };
                (Some(t), Some(flags))
            }
            Threshold::Absolute { value } => (Some(value), None),
        },
        UtilitySpec::Crra { .. } => {
            if let Some(i) = pop.outcomes().iter().position(|&w| w <= 0.0) {
                return Err(Error::Domain(format!(
                    "CRRA needs positive outcomes; record {} has {}",
                    i + 1,
                    pop.outcomes()[i]
                )));
            }
            (None, None)
        }
        UtilitySpec::Affine { .. } => (None, None),
    };
    Ok(ResolvedUtility {
        spec: spec.clone(),
        direction,
        threshold,
        at_risk,
    })
}

impl ResolvedUtility {
    pub fn spec(&self) -> &UtilitySpec {
        &self.spec
    }

    /// Outcome value of the threshold, for partitioned utilities.
    pub fn threshold(&self) -> Option<f64> {
        self.threshold
    }

    /// Number of at-risk records when the threshold is a quantile.
    pub fn at_risk_count(&self) -> Option<usize> {
        self.at_risk.as_ref().map(|f| f.iter().filter(|&&x| x).count())
    }

    fn at_risk_by_value(&self, w: f64) -> bool {
        let t = self.threshold.unwrap_or(f64::NAN);
        match self.direction {
            Direction::HigherIsRisk => w >= t,
            Direction::LowerIsRisk => w <= t,
        }
    }

    fn gain_with(&self, w: f64, at_risk: impl FnOnce() -> bool) -> Result<f64> {
        match self.spec {
            UtilitySpec::Partitioned {
                below_value,
                above_value,
                ..
            } => Ok(if at_risk() { above_value } else { below_value }),
            UtilitySpec::Crra { rho, benefit } => crra_gain(rho, benefit, w),
            UtilitySpec::Affine { slope, intercept } => Ok(slope * w + intercept),
        }
    }

    /// `u(w, 1) - u(w, 0)` judged by outcome value alone.
    pub fn net_gain(&self, w: f64) -> Result<f64> {
        self.gain_with(w, || self.at_risk_by_value(w))
    }

    /// Net gain of record `i` with outcome `w`. Quantile thresholds use the
    /// record's resolved flag so that tied outcomes split exactly.
    pub fn net_gain_record(&self, i: usize, w: f64) -> Result<f64> {
        self.gain_with(w, || match &self.at_risk {
            Some(flags) => flags[i],
            None => self.at_risk_by_value(w),
        })
    }

    pub fn eval(&self, w: f64, allocated: bool) -> Result<f64> {
        if allocated {
            self.net_gain(w)
        } else {
            Ok(0.0)
        }
    }

    /// Net gain the policy expects from serving someone with score `p`. Used by
    /// the optional stop-at-nonpositive rule.
    pub(crate) fn predicted_gain(&self, p: f64) -> f64 {
        match self.spec {
            UtilitySpec::Crra { rho, benefit } => crra_gain(rho, benefit, p).unwrap_or(benefit),
            _ => self.net_gain(p).unwrap_or(0.0),
        }
    }
}
