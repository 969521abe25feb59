//! Evaluation population: outcomes, predictions, deployment-time label flags,
//! covariates and group memberships, stored column-wise.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predicate::Predicate;

/// Which end of the outcome scale marks the people a program wants to reach.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Large outcomes are at risk (e.g. days of unemployment).
    #[default]
    HigherIsRisk,
    /// Small outcomes are at risk (e.g. household consumption).
    LowerIsRisk,
}

impl Direction {
    /// True when `a` should be ranked strictly ahead of `b`.
    #[inline]
    pub fn ahead(self, a: f64, b: f64) -> bool {
        match self {
            Direction::HigherIsRisk => a > b,
            Direction::LowerIsRisk => a < b,
        }
    }

    fn order(self, a: f64, b: f64) -> std::cmp::Ordering {
        match self {
            Direction::HigherIsRisk => b.total_cmp(&a),
            Direction::LowerIsRisk => a.total_cmp(&b),
        }
    }
}

/// Row view over a [`Population`].
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationRecord {
    pub id: String,
    pub outcome: f64,
    pub prediction: f64,
    pub labeled: bool,
    pub covariates: BTreeMap<String, Option<String>>,
    pub groups: Vec<String>,
}

/// Columns that no lever changes, shared between a population and everything
/// derived from it.
#[derive(Debug, Default)]
pub(crate) struct Shared {
    pub(crate) ids: Vec<String>,
    pub(crate) outcomes: Vec<f64>,
    pub(crate) weights: Option<Vec<f64>>,
    pub(crate) covariate_names: Vec<String>,
    /// One column per covariate name; `None` is a missing value.
    pub(crate) covariates: Vec<Vec<Option<String>>>,
    pub(crate) group_names: Vec<String>,
    pub(crate) groups: Vec<Vec<bool>>,
    pub(crate) direction: Direction,
    pub(crate) metadata: BTreeMap<String, String>,
    outcome_rank: OnceLock<Vec<usize>>,
}

impl Clone for Shared {
    fn clone(&self) -> Self {
        Shared {
            ids: self.ids.clone(),
            outcomes: self.outcomes.clone(),
            weights: self.weights.clone(),
            covariate_names: self.covariate_names.clone(),
            covariates: self.covariates.clone(),
            group_names: self.group_names.clone(),
            groups: self.groups.clone(),
            direction: self.direction,
            metadata: self.metadata.clone(),
            outcome_rank: OnceLock::new(),
        }
    }
}

impl PartialEq for Shared {
    fn eq(&self, o: &Self) -> bool {
        self.ids == o.ids
            && self.outcomes.len() == o.outcomes.len()
            && self
                .outcomes
                .iter()
                .zip(&o.outcomes)
                .all(|(a, b)| a.to_bits() == b.to_bits())
            && self.weights == o.weights
            && self.covariate_names == o.covariate_names
            && self.covariates == o.covariates
            && self.group_names == o.group_names
            && self.groups == o.groups
            && self.direction == o.direction
            && self.metadata == o.metadata
    }
}

/// Column-major population. Immutable once built; levers produce new values
/// that share the outcome and covariate columns.
#[derive(Debug, Clone)]
pub struct Population {
    pub(crate) shared: Arc<Shared>,
    /// Stored predictions. Entries of unlabeled records are retained but never
    /// read by the policy.
    pub(crate) predictions: Vec<f64>,
    pub(crate) labeled: Vec<bool>,
}

impl PartialEq for Population {
    /// Bitwise on floats, so NaN placeholders compare equal to themselves.
    fn eq(&self, o: &Self) -> bool {
        (Arc::ptr_eq(&self.shared, &o.shared) || self.shared == o.shared)
            && self.labeled == o.labeled
            && self.predictions.len() == o.predictions.len()
            && self
                .predictions
                .iter()
                .zip(&o.predictions)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl Population {
    /// Builds a population from plain columns with default ids `0..N`.
    pub fn from_columns(
        outcomes: Vec<f64>,
        predictions: Vec<f64>,
        labeled: Vec<bool>,
        direction: Direction,
    ) -> Result<Self> {
        let n = outcomes.len();
        if n == 0 {
            return Err(Error::EmptyPopulation);
        }
        if predictions.len() != n || labeled.len() != n {
            return Err(Error::InvalidSpec(format!(
                "column lengths differ: outcomes {n}, predictions {}, labeled {}",
                predictions.len(),
                labeled.len()
            )));
        }
        for i in 0..n {
            if labeled[i] && !(outcomes[i].is_finite() && predictions[i].is_finite()) {
                return Err(Error::MalformedValue {
                    row: i + 1,
                    column: "outcome/prediction".into(),
                    value: format!("{} / {}", outcomes[i], predictions[i]),
                });
            }
        }
        Ok(Population {
            shared: Arc::new(Shared {
                ids: (0..n).map(|i| i.to_string()).collect(),
                outcomes,
                direction,
                ..Shared::default()
            }),
            predictions,
            labeled,
        })
    }

    /// Fully labeled population.
    pub fn labeled(outcomes: Vec<f64>, predictions: Vec<f64>, direction: Direction) -> Result<Self> {
        let n = outcomes.len();
        Self::from_columns(outcomes, predictions, vec![true; n], direction)
    }

    fn shared_mut(&mut self) -> &mut Shared {
        Arc::make_mut(&mut self.shared)
    }

    /// Attaches a covariate column. Values of `None` are missing.
    pub fn with_covariate(mut self, name: &str, values: Vec<Option<String>>) -> Result<Self> {
        self.check_column(name, values.len())?;
        let s = self.shared_mut();
        s.covariate_names.push(name.to_string());
        s.covariates.push(values);
        Ok(self)
    }

    /// Attaches a group membership column.
    pub fn with_group(mut self, name: &str, members: Vec<bool>) -> Result<Self> {
        self.check_column(name, members.len())?;
        let s = self.shared_mut();
        s.group_names.push(name.to_string());
        s.groups.push(members);
        Ok(self)
    }

    pub fn with_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.len() {
            return Err(Error::InvalidSpec("id column length mismatch".into()));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        self.shared_mut().ids = ids;
        Ok(self)
    }

    pub fn with_metadata(mut self, key: &str, value: &str) -> Self {
        self.shared_mut().metadata.insert(key.into(), value.into());
        self
    }

    fn check_column(&self, name: &str, len: usize) -> Result<()> {
        if len != self.len() {
            return Err(Error::InvalidSpec(format!(
                "column `{name}` has length {len}, expected {}",
                self.len()
            )));
        }
        let s = &self.shared;
        if s.covariate_names.iter().chain(&s.group_names).any(|c| c == name) {
            return Err(Error::InvalidSpec(format!("duplicate column `{name}`")));
        }
        Ok(())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }

    pub fn direction(&self) -> Direction {
        self.shared.direction
    }

    pub fn ids(&self) -> &[String] {
        &self.shared.ids
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.shared.outcomes
    }

    /// Stored predictions, including suppressed entries of unlabeled records.
    pub fn predictions(&self) -> &[f64] {
        &self.predictions
    }

    pub fn labeled_flags(&self) -> &[bool] {
        &self.labeled
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.shared.weights.as_deref()
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.shared.metadata
    }

    pub fn labeled_count(&self) -> usize {
        self.labeled.iter().filter(|&&l| l).count()
    }

    pub fn label_share(&self) -> f64 {
        self.labeled_count() as f64 / self.len() as f64
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.shared.covariate_names
    }

    pub fn group_names(&self) -> &[String] {
        &self.shared.group_names
    }

    pub fn covariate(&self, name: &str) -> Option<&[Option<String>]> {
        let idx = self.shared.covariate_names.iter().position(|c| c == name)?;
        Some(&self.shared.covariates[idx])
    }

    pub fn group(&self, name: &str) -> Option<&[bool]> {
        let idx = self.shared.group_names.iter().position(|c| c == name)?;
        Some(&self.shared.groups[idx])
    }

    pub fn record(&self, i: usize) -> PopulationRecord {
        let s = &self.shared;
        PopulationRecord {
            id: s.ids[i].clone(),
            outcome: s.outcomes[i],
            prediction: self.predictions[i],
            labeled: self.labeled[i],
            covariates: s
                .covariate_names
                .iter()
                .zip(&s.covariates)
                .map(|(name, col)| (name.clone(), col[i].clone()))
                .collect(),
            groups: s
                .group_names
                .iter()
                .zip(&s.groups)
                .filter(|(_, col)| col[i])
                .map(|(name, _)| name.clone())
                .collect(),
        }
    }

    pub fn mean_outcome(&self) -> f64 {
        self.outcomes().iter().sum::<f64>() / self.len() as f64
    }

    /// Indices of labeled records ordered by prediction, most at risk first.
    /// Ties keep file order.
    pub fn prediction_ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).filter(|&i| self.labeled[i]).collect();
        let d = self.direction();
        idx.sort_by(|&a, &b| d.order(self.predictions[a], self.predictions[b]));
        idx
    }

    /// Indices of all records ordered by true outcome, most at risk first.
    /// Computed once and shared by every population derived from this one.
    pub fn outcome_ranking(&self) -> &[usize] {
        self.shared.outcome_rank.get_or_init(|| {
            let s = &self.shared;
            let mut idx: Vec<usize> = (0..s.outcomes.len()).collect();
            idx.sort_by(|&a, &b| s.direction.order(s.outcomes[a], s.outcomes[b]));
            idx
        })
    }
}

/// Column mapping for [`load_population`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub outcome_col: String,
    pub prediction_col: String,
    #[serde(default)]
    pub labeled_col: Option<String>,
    #[serde(default)]
    pub group_cols: Vec<String>,
    #[serde(default)]
    pub id_col: Option<String>,
    /// Optional per-record weights. Parsed and carried; no analysis reads them.
    #[serde(default)]
    pub weight_col: Option<String>,
    /// `None` autodetects between comma and tab from the header line.
    #[serde(default)]
    pub delimiter: Option<char>,
    /// Field value treated as missing in addition to the empty string.
    #[serde(default)]
    pub missing: Option<String>,
    #[serde(default)]
    pub direction: Direction,
}

impl Schema {
    pub fn new(outcome_col: &str, prediction_col: &str) -> Self {
        Schema {
            outcome_col: outcome_col.into(),
            prediction_col: prediction_col.into(),
            labeled_col: None,
            group_cols: Vec::new(),
            id_col: None,
            weight_col: None,
            delimiter: None,
            missing: None,
            direction: Direction::HigherIsRisk,
        }
    }

    fn is_missing(&self, field: &str) -> bool {
        let f = field.trim();
        f.is_empty() || self.missing.as_deref().is_some_and(|m| f == m)
    }
}

fn parse_bool(field: &str) -> Option<bool> {
    match field.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "t" | "yes" | "y" => Some(true),
        "0" | "false" | "f" | "no" | "n" => Some(false),
        _ => None,
    }
}

/// Reads a delimited text stream with a header row. Columns not named in the
/// schema become covariates, stored as strings.
pub fn load_population<R: Read>(mut source: R, schema: &Schema) -> Result<Population> {
    let mut text = String::new();
    source
        .read_to_string(&mut text)
        .map_err(|e| Error::Csv(e.to_string()))?;
    let delimiter = match schema.delimiter {
        Some(c) => c as u8,
        None => {
            let header = text.lines().next().unwrap_or("");
            if header.contains('\t') && !header.contains(',') {
                b'\t'
            } else {
                b','
            }
        }
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let outcome_idx = col(&schema.outcome_col)?;
    let prediction_idx = col(&schema.prediction_col)?;
    let labeled_idx = schema.labeled_col.as_deref().map(col).transpose()?;
    let id_idx = schema.id_col.as_deref().map(col).transpose()?;
    let weight_idx = schema.weight_col.as_deref().map(col).transpose()?;
    let group_idx: Vec<usize> = schema.group_cols.iter().map(|g| col(g)).collect::<Result<_>>()?;

    let reserved: HashSet<usize> = [Some(outcome_idx), Some(prediction_idx), labeled_idx, id_idx, weight_idx]
        .into_iter()
        .flatten()
        .chain(group_idx.iter().copied())
        .collect();
    let covariate_idx: Vec<usize> = (0..headers.len()).filter(|i| !reserved.contains(i)).collect();

    let mut ids = Vec::new();
    let mut outcomes = Vec::new();
    let mut predictions = Vec::new();
    let mut labeled = Vec::new();
    let mut weights = Vec::new();
    let mut covariates: Vec<Vec<Option<String>>> = vec![Vec::new(); covariate_idx.len()];
    let mut groups: Vec<Vec<bool>> = vec![Vec::new(); group_idx.len()];

    for (r, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = r + 1;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let malformed = |i: usize| Error::MalformedValue {
            row,
            column: headers[i].clone(),
            value: field(i).to_string(),
        };
        let is_labeled = match labeled_idx {
            Some(i) => parse_bool(field(i)).ok_or_else(|| malformed(i))?,
            None => true,
        };
        let number = |i: usize| -> Result<f64> {
            if schema.is_missing(field(i)) {
                if is_labeled {
                    return Err(malformed(i));
                }
                return Ok(f64::NAN);
            }
            match field(i).trim().parse::<f64>() {
                Ok(v) if v.is_finite() || !is_labeled => Ok(v),
                _ if !is_labeled => Ok(f64::NAN),
                _ => Err(malformed(i)),
            }
        };
        outcomes.push(number(outcome_idx)?);
        predictions.push(number(prediction_idx)?);
        labeled.push(is_labeled);
        ids.push(match id_idx {
            Some(i) => field(i).trim().to_string(),
            None => r.to_string(),
        });
        if let Some(i) = weight_idx {
            let w = field(i).trim().parse::<f64>().map_err(|_| malformed(i))?;
            weights.push(w);
        }
        for (slot, &i) in covariate_idx.iter().enumerate() {
            let v = field(i);
            covariates[slot].push((!schema.is_missing(v)).then(|| v.to_string()));
        }
        for (slot, &i) in group_idx.iter().enumerate() {
            groups[slot].push(parse_bool(field(i)).ok_or_else(|| malformed(i))?);
        }
    }
    if outcomes.is_empty() {
        return Err(Error::EmptyPopulation);
    }

    let mut pop = Population::from_columns(outcomes, predictions, labeled, schema.direction)?.with_ids(ids)?;
    let s = pop.shared_mut();
    s.weights = weight_idx.map(|_| weights);
    s.covariate_names = covariate_idx.iter().map(|&i| headers[i].clone()).collect();
    s.covariates = covariates;
    s.group_names = schema.group_cols.clone();
    s.groups = groups;
    Ok(pop)
}

fn format_number(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        // `Display` for f64 is the shortest string that parses back to the same value.
        v.to_string()
    }
}

/// Writes a population in the ingestion format: `id,outcome,prediction,labeled`,
/// then weights, groups and covariates. Reading it back with
/// [`Schema::roundtrip`] reproduces the population.
pub fn write_population<W: Write>(pop: &Population, sink: W) -> Result<()> {
    let s = &pop.shared;
    let mut w = csv::WriterBuilder::new().from_writer(sink);
    let mut header = vec![
        "id".to_string(),
        "outcome".into(),
        "prediction".into(),
        "labeled".into(),
    ];
    if s.weights.is_some() {
        header.push("weight".into());
    }
    header.extend(s.group_names.iter().cloned());
    header.extend(s.covariate_names.iter().cloned());
    w.write_record(&header)?;
    for i in 0..pop.len() {
        let mut row = vec![
            s.ids[i].clone(),
            format_number(s.outcomes[i]),
            format_number(pop.predictions[i]),
            if pop.labeled[i] { "1".into() } else { "0".into() },
        ];
        if let Some(ws) = &s.weights {
            row.push(format_number(ws[i]));
        }
        row.extend(
            s.groups
                .iter()
                .map(|g| if g[i] { "1".to_string() } else { "0".to_string() }),
        );
        row.extend(s.covariates.iter().map(|c| c[i].clone().unwrap_or_default()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))?;
    Ok(())
}

impl Schema {
    /// Schema matching the layout produced by [`write_population`].
    pub fn roundtrip(pop: &Population) -> Self {
        Schema {
            outcome_col: "outcome".into(),
            prediction_col: "prediction".into(),
            labeled_col: Some("labeled".into()),
            group_cols: pop.shared.group_names.clone(),
            id_col: Some("id".into()),
            weight_col: pop.shared.weights.as_ref().map(|_| "weight".into()),
            delimiter: Some(','),
            missing: None,
            direction: pop.direction(),
        }
    }
}

/// Boolean membership vector over a population.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    pub member: Vec<bool>,
    pub description: String,
}

impl Mask {
    pub fn all(n: usize) -> Self {
        Mask {
            member: vec![true; n],
            description: "all".into(),
        }
    }

    pub fn none(n: usize) -> Self {
        Mask {
            member: vec![false; n],
            description: "none".into(),
        }
    }

    pub fn from_indices(n: usize, indices: impl IntoIterator<Item = usize>, description: &str) -> Self {
        let mut member = vec![false; n];
        for i in indices {
            member[i] = true;
        }
        Mask {
            member,
            description: description.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.member.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member.is_empty()
    }

    pub fn count(&self) -> usize {
        self.member.iter().filter(|&&m| m).count()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.member.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i)
    }

    pub fn intersect(&self, other: &Mask) -> Result<Mask> {
        self.zip_with(other, " AND ", |a, b| a && b)
    }

    pub fn union(&self, other: &Mask) -> Result<Mask> {
        self.zip_with(other, " OR ", |a, b| a || b)
    }

    fn zip_with(&self, other: &Mask, op: &str, f: impl Fn(bool, bool) -> bool) -> Result<Mask> {
        if self.len() != other.len() {
            return Err(Error::MaskLength {
                mask: other.len(),
                population: self.len(),
            });
        }
        Ok(Mask {
            member: self.member.iter().zip(&other.member).map(|(&a, &b)| f(a, b)).collect(),
            description: format!("({}){op}({})", self.description, other.description),
        })
    }

    pub(crate) fn check_len(&self, n: usize) -> Result<()> {
        if self.len() != n {
            return Err(Error::MaskLength {
                mask: self.len(),
                population: n,
            });
        }
        Ok(())
    }
}

/// Evaluates a predicate such as `age > 35 AND last_job IS MISSING` on every record.
pub fn covariate_mask(pop: &Population, predicate: &str) -> Result<Mask> {
    let parsed = Predicate::parse(predicate)?;
    parsed.check_fields(pop)?;
    Ok(Mask {
        member: (0..pop.len()).map(|i| parsed.eval(pop, i)).collect(),
        description: predicate.trim().to_string(),
    })
}

/// Band around the decision boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Band {
    /// A window of `round(fraction * L)` consecutive prediction ranks (L =
    /// labeled count) centred on `cutoff_rank`, shifted inward when it would
    /// cross either end of the ranking. Ranks are 0-based, most at risk first.
    Rank { cutoff_rank: usize, fraction: f64 },
    /// Labeled records with `|prediction - threshold| < epsilon`.
    Score { threshold: f64, epsilon: f64 },
}

/// Members are labeled records near the policy cutoff, judged on current predictions.
pub fn prediction_band_mask(pop: &Population, band: Band) -> Result<Mask> {
    band_mask(pop, band, None)
}

/// Like [`prediction_band_mask`] but restricted to `within`. In rank mode the
/// window is `fraction` of the labeled members of `within`, centred where the
/// population-wide `cutoff_rank` falls among them.
pub fn prediction_band_mask_within(pop: &Population, band: Band, within: &Mask) -> Result<Mask> {
    within.check_len(pop.len())?;
    band_mask(pop, band, Some(within))
}

fn band_mask(pop: &Population, band: Band, within: Option<&Mask>) -> Result<Mask> {
    let n = pop.len();
    let inside = |i: usize| within.is_none_or(|m| m.member[i]);
    match band {
        Band::Rank { cutoff_rank, fraction } => {
            if !(fraction > 0.0 && fraction <= 1.0) {
                return Err(Error::InvalidBandwidth(format!("fraction {fraction} not in (0, 1]")));
            }
            let full = pop.prediction_ranking();
            let cutoff_rank = full.iter().take(cutoff_rank).filter(|&&i| inside(i)).count();
            let ranking: Vec<usize> = full.into_iter().filter(|&i| inside(i)).collect();
            let labeled = ranking.len();
            let width = ((fraction * labeled as f64).round() as usize).min(labeled);
            let lo = cutoff_rank.saturating_sub(width / 2).min(labeled - width);
            Ok(Mask::from_indices(
                n,
                ranking[lo..lo + width].iter().copied(),
                &format!("rank band {fraction} around rank {cutoff_rank}"),
            ))
        }
        Band::Score { threshold, epsilon } => {
            if !(epsilon > 0.0) || !threshold.is_finite() {
                return Err(Error::InvalidBandwidth(format!("epsilon {epsilon} must be positive")));
            }
            Ok(Mask {
                member: (0..n)
                    .map(|i| inside(i) && pop.labeled[i] && (pop.predictions[i] - threshold).abs() < epsilon)
                    .collect(),
                description: format!("|p - {threshold}| < {epsilon}"),
            })
        }
    }
}

/// Root-mean-squared prediction error over the labeled members of `mask`.
pub fn rmse(pop: &Population, mask: &Mask) -> Result<f64> {
    mask.check_len(pop.len())?;
    let (sum, count) = mask
        .indices()
        .filter(|&i| pop.labeled[i])
        .fold((0.0, 0usize), |(s, c), i| {
            let e = pop.predictions[i] - pop.outcomes()[i];
            (s + e * e, c + 1)
        });
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    Ok((sum / count as f64).sqrt())
}
