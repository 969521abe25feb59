//! Result documents, flat tables and run manifests.
//!
//! A result document depends only on the config (seed included) and the
//! engine version, so two runs of the same config serialize to the same
//! bytes. Anything run-specific, such as wall time or worker count, lives in
//! the manifest instead.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::compare::{
    BreakEvenResult, BudgetAllocationResult, Curve, EquivalentCost, EquivalentCostOutcome, Evaluation, RatioGrid,
};
use crate::error::Result;
use crate::ENGINE_VERSION;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "analysis", content = "result", rename_all = "snake_case")]
pub enum AnalysisResult {
    Evaluate(Evaluation),
    Curve(Curve),
    BreakEven(BreakEvenResult),
    EquivalentCost(EquivalentCost),
    RatioGrid(RatioGrid),
    OptimizeBudget(BudgetAllocationResult),
}

impl AnalysisResult {
    pub fn name(&self) -> &'static str {
        match self {
            AnalysisResult::Evaluate(_) => "evaluate",
            AnalysisResult::Curve(_) => "curve",
            AnalysisResult::BreakEven(_) => "break_even",
            AnalysisResult::EquivalentCost(_) => "equivalent_cost",
            AnalysisResult::RatioGrid(_) => "ratio_grid",
            AnalysisResult::OptimizeBudget(_) => "optimize_budget",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub schema_version: u32,
    pub engine_version: String,
    pub config_hash: String,
    pub seed: u64,
    #[serde(flatten)]
    pub body: AnalysisResult,
}

impl ResultDocument {
    pub fn new(config_hash: &str, seed: u64, body: AnalysisResult) -> Self {
        ResultDocument {
            schema_version: SCHEMA_VERSION,
            engine_version: ENGINE_VERSION.to_string(),
            config_hash: config_hash.to_string(),
            seed,
            body,
        }
    }

    /// Pretty-printed JSON with a trailing newline. Floats use shortest
    /// round-trip formatting, so no precision is lost.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("result documents serialize");
        s.push('\n');
        s
    }
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub engine_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub analysis: String,
    pub workers: usize,
    pub wall_time_ms: f64,
    /// SHA-256 of each written file, by file name.
    pub files: std::collections::BTreeMap<String, String>,
}

/// Plot-ready rows. Cells are JSON scalars; `null` marks an undefined value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

fn opt(x: Option<f64>) -> Value {
    x.map_or(Value::Null, |v| json!(v))
}

impl Table {
    fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn from_result(r: &AnalysisResult) -> Table {
        match r {
            AnalysisResult::Evaluate(e) => {
                let mut t = Table::new(&[
                    "welfare",
                    "random_baseline",
                    "perfect_baseline",
                    "ratio_to_random",
                    "slots",
                    "slots_used",
                    "label_share",
                    "random_fill",
                ]);
                t.rows.push(vec![
                    json!(e.welfare),
                    json!(e.random_baseline),
                    json!(e.perfect_baseline),
                    opt(e.ratio_to_random),
                    json!(e.slots),
                    json!(e.slots_used),
                    json!(e.label_share),
                    json!(e.random_fill),
                ]);
                t
            }
            AnalysisResult::Curve(c) => {
                let mut t = Table::new(&["theta", "welfare", "gain", "error"]);
                for p in &c.points {
                    t.rows.push(vec![
                        json!(p.theta),
                        opt(p.welfare),
                        opt(p.gain),
                        p.error.as_ref().map_or(Value::Null, |e| json!(e)),
                    ]);
                }
                t
            }
            AnalysisResult::BreakEven(b) => {
                let mut t = Table::new(&["theta", "gain", "benchmark_gain", "meets_benchmark"]);
                for &(theta, gain) in &b.gain_curve {
                    t.rows.push(vec![
                        json!(theta),
                        json!(gain),
                        json!(b.benchmark_gain),
                        json!(gain >= b.benchmark_gain),
                    ]);
                }
                t
            }
            AnalysisResult::EquivalentCost(e) => {
                let mut t = Table::new(&["lever_gain", "status", "theta", "displacement", "cost", "max_gain"]);
                t.rows.push(match e.outcome {
                    EquivalentCostOutcome::Found {
                        theta,
                        displacement,
                        cost,
                    } => vec![
                        json!(e.lever_gain),
                        json!("found"),
                        json!(theta),
                        json!(displacement),
                        json!(cost),
                        Value::Null,
                    ],
                    EquivalentCostOutcome::RangeExceeded { max_gain } => vec![
                        json!(e.lever_gain),
                        json!("range_exceeded"),
                        Value::Null,
                        Value::Null,
                        Value::Null,
                        json!(max_gain),
                    ],
                });
                t
            }
            AnalysisResult::RatioGrid(g) => {
                let mut t = Table::new(&["theta_a", "theta_b", "gain_a", "gain_b", "ratio"]);
                for (i, (&ta, &ga)) in g.axis_a.iter().zip(&g.gains_a).enumerate() {
                    for (j, (&tb, &gb)) in g.axis_b.iter().zip(&g.gains_b).enumerate() {
                        t.rows
                            .push(vec![json!(ta), json!(tb), json!(ga), json!(gb), opt(g.ratios[i][j])]);
                    }
                }
                t
            }
            AnalysisResult::OptimizeBudget(o) => {
                let mut t = Table::new(&["lever", "spend", "theta", "total_welfare", "welfare_gain"]);
                for s in &o.splits {
                    t.rows.push(vec![
                        json!(s.lever),
                        json!(s.spend),
                        json!(s.theta),
                        json!(o.total_welfare),
                        json!(o.welfare_gain),
                    ]);
                }
                t
            }
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("tables serialize");
        s.push('\n');
        s
    }

    /// CSV with a header row. Undefined cells are empty.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(cell))?;
        }
        let bytes = w.into_inner().map_err(|e| crate::Error::Csv(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        Value::Number(n) => match n.as_f64() {
            Some(f) if n.is_f64() => {
                let mut s = String::new();
                write!(s, "{f}").expect("write to string");
                s
            }
            _ => n.to_string(),
        },
        other => other.to_string(),
    }
}
