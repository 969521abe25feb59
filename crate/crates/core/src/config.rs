//! Declarative scenario configuration.
//!
//! A config names a dataset, a utility, a capacity constraint, policy
//! options, named masks and levers, and exactly one analysis. It is written
//! in TOML for the CLI and JSON for the HTTP service; both map onto the same
//! [`ScenarioConfig`]. Mask and lever references are by name and resolved
//! against a loaded population by [`ScenarioConfig::resolve`].
//!
//! ```toml
//! [dataset.synth]
//! n = 10000
//! seed = 1
//! outcome = { kind = "two_point", share_at_risk = 0.15, low = 0.0, high = 400.0 }
//! noise = { kind = "additive", sigma = 150.0 }
//!
//! [utility]
//! kind = "partitioned"
//! beta = 0.15
//!
//! [constraint]
//! capacity = 0.1
//!
//! [levers.improve]
//! kind = "prediction_improvement"
//!
//! [analysis]
//! kind = "curve"
//! lever = "improve"
//! grid = { start = 0.0, stop = 1.0, points = 21 }
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::compare::{
    break_even, equivalent_cost, evaluate_detailed, optimize_budget, ratio_grid, welfare_curve, Scenario,
};
use crate::error::{Error, ErrorClass, Result};
use crate::levers::{CostModel, LabelingOrder, LeverFamily, LeverTemplate};
use crate::policy::{Constraint, PolicyOptions};
use crate::population::{
    covariate_mask, load_population, prediction_band_mask_within, Band, Direction, Mask, Population, Schema,
};
use crate::report::{sha256_hex, AnalysisResult};
use crate::synth::{generate, SynthSpec};
use crate::utility::{Threshold, UtilitySpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub dataset: DatasetConfig,
    pub utility: UtilityConfig,
    pub constraint: ConstraintConfig,
    #[serde(default)]
    pub policy: PolicyConfig,
    #[serde(default)]
    pub masks: BTreeMap<String, MaskConfig>,
    #[serde(default)]
    pub levers: BTreeMap<String, LeverConfig>,
    pub analysis: AnalysisConfig,
}

/// Exactly one of `path`, `synth` or `id`. Relative paths are resolved
/// against the directory holding the config file; `id` names a dataset
/// already uploaded to the service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<Schema>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThresholdValue {
    Value(f64),
    /// Only `"mean"`: the population's mean outcome.
    Keyword(String),
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum UtilityConfig {
    /// Benefit `benefit` to at-risk recipients, `-harm` to the rest. Give
    /// either `beta` (at-risk share) or `threshold` (an outcome value or
    /// `"mean"`).
    Partitioned {
        #[serde(default)]
        beta: Option<f64>,
        #[serde(default)]
        threshold: Option<ThresholdValue>,
        #[serde(default = "one")]
        benefit: f64,
        #[serde(default)]
        harm: f64,
    },
    Crra {
        rho: f64,
        benefit: f64,
    },
    Affine {
        slope: f64,
        intercept: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapConfig {
    pub mask: String,
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintConfig {
    pub capacity: f64,
    #[serde(default)]
    pub subgroup_caps: Vec<CapConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub stop_at_nonpositive: bool,
    /// Overrides the dataset's direction when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandMode {
    Rank,
    Score,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MaskConfig {
    All,
    /// Covariate predicate, e.g. `"age > 35 AND last_job IS MISSING"`.
    Predicate {
        expr: String,
    },
    /// Records near the decision boundary. Rank bands centre on
    /// `cutoff_rank`, which defaults to the number of slots.
    Band {
        mode: BandMode,
        #[serde(default)]
        fraction: Option<f64>,
        #[serde(default)]
        cutoff_rank: Option<usize>,
        #[serde(default)]
        threshold: Option<f64>,
        #[serde(default)]
        epsilon: Option<f64>,
        #[serde(default)]
        within: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LeverConfig {
    PredictionImprovement {
        #[serde(default)]
        mask: Option<String>,
        #[serde(default)]
        cost: Option<CostModel>,
    },
    ExpandCapacity {
        #[serde(default)]
        target_mask: Option<String>,
        #[serde(default)]
        cost: Option<CostModel>,
    },
    Benefit {
        #[serde(default)]
        cost: Option<CostModel>,
    },
    HarmReduction {
        #[serde(default)]
        cost: Option<CostModel>,
    },
    /// Labels records in random order, or members of `priority_mask` first.
    DataLabeling {
        #[serde(default)]
        priority_mask: Option<String>,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        cost: Option<CostModel>,
    },
}

/// An explicit list, or `points` evenly spaced values from `start` to `stop`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridConfig {
    Values(Vec<f64>),
    Range { start: f64, stop: f64, points: usize },
}

impl GridConfig {
    pub fn values(&self) -> Vec<f64> {
        match *self {
            GridConfig::Values(ref v) => v.clone(),
            GridConfig::Range { start, stop, points } => match points {
                0 => Vec::new(),
                1 => vec![start],
                _ => (0..points)
                    .map(|k| {
                        if k == points - 1 {
                            stop
                        } else {
                            start + (stop - start) * k as f64 / (points - 1) as f64
                        }
                    })
                    .collect(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeverAt {
    pub lever: String,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AnalysisConfig {
    Evaluate,
    Curve {
        lever: String,
        grid: GridConfig,
    },
    BreakEven {
        lever: String,
        grid: GridConfig,
        benchmark: LeverAt,
    },
    EquivalentCost {
        lever: LeverAt,
        benchmark: String,
        #[serde(default)]
        max_displacement: Option<f64>,
    },
    RatioGrid {
        lever_a: String,
        grid_a: GridConfig,
        lever_b: String,
        grid_b: GridConfig,
        #[serde(default)]
        truncation: Option<(f64, f64)>,
    },
    OptimizeBudget {
        levers: Vec<String>,
        budget: f64,
        #[serde(default)]
        resolution: Option<f64>,
    },
}

impl AnalysisConfig {
    pub fn name(&self) -> &'static str {
        match self {
            AnalysisConfig::Evaluate => "evaluate",
            AnalysisConfig::Curve { .. } => "curve",
            AnalysisConfig::BreakEven { .. } => "break_even",
            AnalysisConfig::EquivalentCost { .. } => "equivalent_cost",
            AnalysisConfig::RatioGrid { .. } => "ratio_grid",
            AnalysisConfig::OptimizeBudget { .. } => "optimize_budget",
        }
    }

    /// Scenario evaluations the analysis will perform, roughly.
    pub fn cell_count(&self) -> usize {
        match self {
            AnalysisConfig::Evaluate => 1,
            AnalysisConfig::Curve { grid, .. } | AnalysisConfig::BreakEven { grid, .. } => grid.values().len(),
            AnalysisConfig::EquivalentCost { .. } => crate::compare::MONOTONE_SAMPLES + 40,
            AnalysisConfig::RatioGrid { grid_a, grid_b, .. } => grid_a.values().len() + grid_b.values().len(),
            AnalysisConfig::OptimizeBudget {
                levers,
                budget,
                resolution,
            } => {
                let res = resolution.unwrap_or(budget / 100.0);
                let steps = if *budget > 0.0 && res > 0.0 {
                    (budget / res + 1e-9).floor() as u64
                } else {
                    0
                };
                usize::try_from(crate::compare::simplex_size(levers.len(), steps)).unwrap_or(usize::MAX)
            }
        }
    }
}

/// Turns a config-class engine error into a config error at `path`; data and
/// analysis errors pass through unchanged.
fn at(path: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Config { .. } => e,
        e if e.class() == ErrorClass::Config => Error::config(path, e.to_string()),
        e => e,
    }
}

fn path_error<E: std::fmt::Display>(e: serde_path_to_error::Error<E>) -> Error {
    let path = e.path().to_string();
    Error::config(
        if path == "." { String::new() } else { path },
        e.into_inner().to_string(),
    )
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::config("", e.to_string()))?;
        serde_path_to_error::deserialize(de).map_err(path_error)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(text);
        let cfg = serde_path_to_error::deserialize(&mut de).map_err(path_error)?;
        de.end().map_err(|e| Error::config("", e.to_string()))?;
        Ok(cfg)
    }

    pub fn from_json_value(value: serde_json::Value) -> Result<Self> {
        serde_path_to_error::deserialize(value).map_err(path_error)
    }

    /// Reads a config file: JSON when the extension is `.json`, TOML otherwise.
    /// Returns the config and the directory relative paths resolve against.
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("", format!("cannot read {}: {e}", path.display())))?;
        let cfg = if path.extension().is_some_and(|x| x == "json") {
            Self::from_json_str(&text)?
        } else {
            Self::from_toml_str(&text)?
        };
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, dir))
    }

    /// SHA-256 of the config's canonical JSON form (fields in declaration
    /// order, maps sorted by key).
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("configs serialize"))
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.policy.seed = seed;
        self
    }

    fn check_dataset(&self) -> Result<()> {
        let d = &self.dataset;
        let given = [d.path.is_some(), d.synth.is_some(), d.id.is_some()]
            .iter()
            .filter(|&&b| b)
            .count();
        if given != 1 {
            return Err(Error::config("dataset", "give exactly one of `path`, `synth` or `id`"));
        }
        if d.path.is_some() != d.schema.is_some() {
            return Err(Error::config(
                "dataset.schema",
                "a schema is required with `path` and only then",
            ));
        }
        Ok(())
    }

    /// Loads or generates the dataset. Relative paths resolve against `base`.
    pub fn population(&self, base: &Path) -> Result<Population> {
        self.check_dataset()?;
        let d = &self.dataset;
        if let Some(spec) = &d.synth {
            let mut spec = spec.clone();
            if let Some(dir) = self.policy.direction {
                spec.direction = dir;
            }
            return generate(&spec).map_err(at("dataset.synth"));
        }
        if let (Some(path), Some(schema)) = (&d.path, &d.schema) {
            let mut schema = schema.clone();
            if let Some(dir) = self.policy.direction {
                schema.direction = dir;
            }
            let full = base.join(path);
            let file = std::fs::File::open(&full)
                .map_err(|e| Error::config("dataset.path", format!("cannot open {}: {e}", full.display())))?;
            return load_population(std::io::BufReader::new(file), &schema);
        }
        Err(Error::config(
            "dataset.id",
            "dataset ids are only resolvable by the service",
        ))
    }

    /// Checks references and builds the scenario, masks and levers over `pop`.
    pub fn resolve(&self, pop: Population) -> Result<Resolved> {
        self.check_dataset()?;
        if let Some(dir) = self.policy.direction {
            if dir != pop.direction() {
                return Err(Error::config(
                    "policy.direction",
                    "does not match the dataset's direction",
                ));
            }
        }
        let n = pop.len();
        let base = Constraint::new(self.constraint.capacity, n).map_err(at("constraint.capacity"))?;
        let utility = self.utility_spec(&pop)?;

        let mut masks = BTreeMap::new();
        for name in self.masks.keys() {
            self.resolve_mask(name, &pop, base.slots(), &mut masks, &mut BTreeSet::new())?;
        }
        let mask = |name: &str, path: &str| -> Result<Mask> {
            masks
                .get(name)
                .cloned()
                .ok_or_else(|| Error::config(path, format!("unknown mask `{name}`")))
        };

        let mut constraint = base;
        for (i, cap) in self.constraint.subgroup_caps.iter().enumerate() {
            let path = format!("constraint.subgroup_caps[{i}]");
            constraint = constraint
                .with_cap(mask(&cap.mask, &format!("{path}.mask"))?, cap.capacity)
                .map_err(at(&path))?;
        }

        let mut levers = BTreeMap::new();
        for (name, lc) in &self.levers {
            let path = format!("levers.{name}");
            let (family, cost) = match lc {
                LeverConfig::PredictionImprovement { mask: m, cost } => (
                    LeverFamily::PredictionImprovement {
                        mask: match m {
                            Some(m) => mask(m, &format!("{path}.mask"))?,
                            None => Mask::all(n),
                        },
                    },
                    cost,
                ),
                LeverConfig::ExpandCapacity { target_mask, cost } => (
                    LeverFamily::ExpandCapacity {
                        target_mask: target_mask
                            .as_deref()
                            .map(|m| mask(m, &format!("{path}.target_mask")))
                            .transpose()?,
                    },
                    cost,
                ),
                LeverConfig::Benefit { cost } => (LeverFamily::Benefit, cost),
                LeverConfig::HarmReduction { cost } => (LeverFamily::HarmReduction, cost),
                LeverConfig::DataLabeling {
                    priority_mask,
                    seed,
                    cost,
                } => (
                    LeverFamily::DataLabeling {
                        order: match priority_mask {
                            Some(m) => LabelingOrder::ByMask {
                                mask: mask(m, &format!("{path}.priority_mask"))?,
                            },
                            None => LabelingOrder::Random,
                        },
                        seed: *seed,
                    },
                    cost,
                ),
            };
            if let Some(c) = cost {
                c.validate().map_err(at(&format!("{path}.cost")))?;
            }
            levers.insert(name.clone(), LeverTemplate::new(name, family, cost.clone()));
        }

        let scenario = Scenario {
            population: pop,
            utility,
            constraint,
            policy: PolicyOptions {
                seed: self.policy.seed,
                stop_at_nonpositive: self.policy.stop_at_nonpositive,
            },
        };
        scenario.validate().map_err(at("utility"))?;
        let resolved = Resolved {
            scenario,
            masks,
            levers,
            analysis: self.analysis.clone(),
        };
        resolved.check_analysis()?;
        Ok(resolved)
    }

    fn utility_spec(&self, pop: &Population) -> Result<UtilitySpec> {
        let spec = match &self.utility {
            UtilityConfig::Partitioned {
                beta,
                threshold,
                benefit,
                harm,
            } => {
                let threshold = match (beta, threshold) {
                    (Some(beta), None) => Threshold::Quantile { beta: *beta },
                    (None, Some(ThresholdValue::Value(v))) => Threshold::Absolute { value: *v },
                    (None, Some(ThresholdValue::Keyword(k))) if k == "mean" => Threshold::Absolute {
                        value: pop.mean_outcome(),
                    },
                    (None, Some(ThresholdValue::Keyword(k))) => {
                        return Err(Error::config(
                            "utility.threshold",
                            format!("expected a number or \"mean\", got {k:?}"),
                        ))
                    }
                    _ => return Err(Error::config("utility", "give exactly one of `beta` or `threshold`")),
                };
                UtilitySpec::Partitioned {
                    threshold,
                    below_value: 0.0 - harm,
                    above_value: *benefit,
                }
            }
            UtilityConfig::Crra { rho, benefit } => UtilitySpec::Crra {
                rho: *rho,
                benefit: *benefit,
            },
            UtilityConfig::Affine { slope, intercept } => UtilitySpec::Affine {
                slope: *slope,
                intercept: *intercept,
            },
        };
        spec.validate().map_err(at("utility"))?;
        Ok(spec)
    }

    fn resolve_mask(
        &self,
        name: &str,
        pop: &Population,
        slots: usize,
        done: &mut BTreeMap<String, Mask>,
        visiting: &mut BTreeSet<String>,
    ) -> Result<Mask> {
        if let Some(m) = done.get(name) {
            return Ok(m.clone());
        }
        let path = format!("masks.{name}");
        let cfg = self
            .masks
            .get(name)
            .ok_or_else(|| Error::config(&path, format!("unknown mask `{name}`")))?;
        if !visiting.insert(name.to_string()) {
            return Err(Error::config(&path, "masks refer to each other in a cycle"));
        }
        let mut mask = match cfg {
            MaskConfig::All => Mask::all(pop.len()),
            MaskConfig::Predicate { expr } => covariate_mask(pop, expr).map_err(at(&path))?,
            MaskConfig::Band {
                mode,
                fraction,
                cutoff_rank,
                threshold,
                epsilon,
                within,
            } => {
                let need = |v: Option<f64>, field: &str| {
                    v.ok_or_else(|| Error::config(format!("{path}.{field}"), "required for this band mode"))
                };
                let band = match mode {
                    BandMode::Rank => Band::Rank {
                        cutoff_rank: cutoff_rank.unwrap_or(slots),
                        fraction: need(*fraction, "fraction")?,
                    },
                    BandMode::Score => Band::Score {
                        threshold: need(*threshold, "threshold")?,
                        epsilon: need(*epsilon, "epsilon")?,
                    },
                };
                let within = match within {
                    Some(w) => self.resolve_mask(w, pop, slots, done, visiting)?,
                    None => Mask::all(pop.len()),
                };
                prediction_band_mask_within(pop, band, &within).map_err(at(&path))?
            }
        };
        visiting.remove(name);
        mask.description = name.to_string();
        done.insert(name.to_string(), mask.clone());
        Ok(mask)
    }
}

/// A config bound to a population, ready to run.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub scenario: Scenario,
    pub masks: BTreeMap<String, Mask>,
    pub levers: BTreeMap<String, LeverTemplate>,
    pub analysis: AnalysisConfig,
}

impl Resolved {
    fn lever(&self, name: &str, path: &str) -> Result<&LeverTemplate> {
        self.levers
            .get(name)
            .ok_or_else(|| Error::config(path, format!("unknown lever `{name}`")))
    }

    fn check_analysis(&self) -> Result<()> {
        match &self.analysis {
            AnalysisConfig::Evaluate => {}
            AnalysisConfig::Curve { lever, .. } => {
                self.lever(lever, "analysis.lever")?;
            }
            AnalysisConfig::BreakEven { lever, benchmark, .. } => {
                self.lever(lever, "analysis.lever")?;
                self.lever(&benchmark.lever, "analysis.benchmark.lever")?;
            }
            AnalysisConfig::EquivalentCost { lever, benchmark, .. } => {
                self.lever(&lever.lever, "analysis.lever.lever")?;
                if self.lever(benchmark, "analysis.benchmark")?.cost.is_none() {
                    return Err(Error::config(
                        "analysis.benchmark",
                        "benchmark lever needs a cost model",
                    ));
                }
            }
            AnalysisConfig::RatioGrid { lever_a, lever_b, .. } => {
                self.lever(lever_a, "analysis.lever_a")?;
                self.lever(lever_b, "analysis.lever_b")?;
            }
            AnalysisConfig::OptimizeBudget { levers, .. } => {
                for (i, l) in levers.iter().enumerate() {
                    if self.lever(l, &format!("analysis.levers[{i}]"))?.cost.is_none() {
                        return Err(Error::config(
                            format!("analysis.levers[{i}]"),
                            "budget levers need a cost model",
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Runs the configured analysis on up to `workers` threads (0 = all cores).
    pub fn run(&self, workers: usize) -> Result<AnalysisResult> {
        let s = &self.scenario;
        let grid_at = |path: &'static str| move |e: Error| at(path)(e);
        Ok(match &self.analysis {
            AnalysisConfig::Evaluate => AnalysisResult::Evaluate(evaluate_detailed(s)?),
            AnalysisConfig::Curve { lever, grid } => AnalysisResult::Curve(
                welfare_curve(s, self.lever(lever, "analysis.lever")?, &grid.values(), workers)
                    .map_err(grid_at("analysis.grid"))?,
            ),
            AnalysisConfig::BreakEven { lever, grid, benchmark } => {
                let bench = self
                    .lever(&benchmark.lever, "analysis.benchmark.lever")?
                    .at(benchmark.theta);
                AnalysisResult::BreakEven(
                    break_even(s, self.lever(lever, "analysis.lever")?, &grid.values(), &bench, workers)
                        .map_err(grid_at("analysis.grid"))?,
                )
            }
            AnalysisConfig::EquivalentCost {
                lever,
                benchmark,
                max_displacement,
            } => {
                let l = self.lever(&lever.lever, "analysis.lever.lever")?.at(lever.theta);
                AnalysisResult::EquivalentCost(
                    equivalent_cost(
                        s,
                        &l,
                        self.lever(benchmark, "analysis.benchmark")?,
                        *max_displacement,
                        workers,
                    )
                    .map_err(grid_at("analysis.max_displacement"))?,
                )
            }
            AnalysisConfig::RatioGrid {
                lever_a,
                grid_a,
                lever_b,
                grid_b,
                truncation,
            } => {
                let mut g = ratio_grid(
                    s,
                    self.lever(lever_a, "analysis.lever_a")?,
                    &grid_a.values(),
                    self.lever(lever_b, "analysis.lever_b")?,
                    &grid_b.values(),
                    workers,
                )
                .map_err(grid_at("analysis"))?;
                if let Some(t) = truncation {
                    g.truncation = *t;
                }
                AnalysisResult::RatioGrid(g)
            }
            AnalysisConfig::OptimizeBudget {
                levers,
                budget,
                resolution,
            } => {
                let templates: Vec<LeverTemplate> = levers
                    .iter()
                    .enumerate()
                    .map(|(i, l)| self.lever(l, &format!("analysis.levers[{i}]")).cloned())
                    .collect::<Result<_>>()?;
                AnalysisResult::OptimizeBudget(
                    optimize_budget(s, &templates, *budget, *resolution, workers).map_err(grid_at("analysis"))?,
                )
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PERFECT: &str = r#"
[dataset.synth]
n = 10000
seed = 4
outcome = { kind = "two_point", share_at_risk = 0.15, low = 0.0, high = 400.0 }
noise = { kind = "additive", sigma = 0.0 }

[utility]
kind = "partitioned"
beta = 0.15

[constraint]
capacity = 0.1

[analysis]
kind = "evaluate"
"#;

    fn run(text: &str) -> Result<AnalysisResult> {
        let cfg = ScenarioConfig::from_toml_str(text)?;
        cfg.resolve(cfg.population(Path::new("."))?)?.run(1)
    }

    #[test]
    fn perfect_fixture_evaluates() {
        let AnalysisResult::Evaluate(e) = run(PERFECT).unwrap() else {
            panic!()
        };
        assert_eq!(e.welfare, 0.1);
        assert_eq!(e.random_baseline, 0.015);
        assert!((e.ratio_to_random.unwrap() - 6.666_666_666_666_667).abs() < 1e-12);
    }

    #[test]
    fn unknown_field_reports_path() {
        let bad = PERFECT.replace("beta = 0.15", "beta = 0.15\nbenefitt = 2");
        let e = ScenarioConfig::from_toml_str(&bad).unwrap_err();
        assert!(matches!(&e, Error::Config { path, .. } if path == "utility"), "{e}");
        let bad = PERFECT.replace("capacity = 0.1", "capacity = \"lots\"");
        let e = ScenarioConfig::from_toml_str(&bad).unwrap_err();
        assert!(
            matches!(&e, Error::Config { path, .. } if path == "constraint.capacity"),
            "{e}"
        );
    }

    #[test]
    fn dangling_references_are_config_errors() {
        let text = PERFECT.replace(
            "[analysis]\nkind = \"evaluate\"",
            "[analysis]\nkind = \"curve\"\nlever = \"nope\"\ngrid = [0.0, 0.5]",
        );
        let e = run(&text).unwrap_err();
        assert!(
            matches!(&e, Error::Config { path, .. } if path == "analysis.lever"),
            "{e}"
        );

        let text = format!("{PERFECT}\n[levers.imp]\nkind = \"prediction_improvement\"\nmask = \"ghost\"\n");
        let e = run(&text).unwrap_err();
        assert!(
            matches!(&e, Error::Config { path, .. } if path == "levers.imp.mask"),
            "{e}"
        );
    }

    #[test]
    fn invalid_values_keep_their_path() {
        let e = run(&PERFECT.replace("beta = 0.15", "beta = 1.5")).unwrap_err();
        assert!(matches!(&e, Error::Config { path, .. } if path == "utility"), "{e}");
        assert_eq!(e.class(), ErrorClass::Config);
        let e = run(&PERFECT.replace("capacity = 0.1", "capacity = 0.0")).unwrap_err();
        assert!(
            matches!(&e, Error::Config { path, .. } if path == "constraint.capacity"),
            "{e}"
        );
    }

    #[test]
    fn mask_cycles_detected() {
        let text = format!(
            "{PERFECT}\n[masks.a]\nkind = \"band\"\nmode = \"rank\"\nfraction = 0.1\nwithin = \"b\"\n\
             [masks.b]\nkind = \"band\"\nmode = \"rank\"\nfraction = 0.1\nwithin = \"a\"\n"
        );
        let e = run(&text).unwrap_err();
        assert!(e.to_string().contains("cycle"), "{e}");
    }

    #[test]
    fn band_within_subgroup() {
        let text = format!(
            "{}\n[masks.sub]\nkind = \"predicate\"\nexpr = \"last_job IS MISSING\"\n\
             [masks.edge]\nkind = \"band\"\nmode = \"rank\"\nfraction = 0.1\nwithin = \"sub\"\n",
            PERFECT.replace("sigma = 0.0", "sigma = 100.0")
        );
        let cfg = ScenarioConfig::from_toml_str(&text).unwrap();
        let r = cfg.resolve(cfg.population(Path::new(".")).unwrap()).unwrap();
        let sub = &r.masks["sub"];
        let edge = &r.masks["edge"];
        assert_eq!(edge.count(), (0.1 * sub.count() as f64).round() as usize);
        assert!(edge.indices().all(|i| sub.member[i]));
    }

    #[test]
    fn mean_threshold_and_json_form() {
        let text = PERFECT.replace("beta = 0.15", "threshold = \"mean\"");
        let cfg = ScenarioConfig::from_toml_str(&text).unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        let back = ScenarioConfig::from_json_str(&json).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_ne!(cfg.clone().with_seed(9).hash(), cfg.hash());
        let r = cfg.resolve(cfg.population(Path::new(".")).unwrap()).unwrap();
        assert!(
            matches!(r.scenario.utility, UtilitySpec::Partitioned { threshold: Threshold::Absolute { value }, .. } if value > 0.0)
        );
    }

    #[test]
    fn grid_ranges() {
        let g = GridConfig::Range {
            start: 0.0,
            stop: 1.0,
            points: 21,
        };
        let v = g.values();
        assert_eq!(v.len(), 21);
        assert_eq!(v[20], 1.0);
        assert_eq!(v[10], 0.5);
    }

    #[test]
    fn dataset_needs_exactly_one_source() {
        let text = PERFECT.replace("[dataset.synth]", "[dataset]\nid = \"x\"\n[dataset.synth]");
        let cfg = ScenarioConfig::from_toml_str(&text).unwrap();
        assert!(matches!(cfg.population(Path::new(".")), Err(Error::Config { .. })));
    }
}
