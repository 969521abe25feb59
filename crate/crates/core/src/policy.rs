//! Capacity-constrained threshold policies and their welfare.

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::population::{Mask, Population};
use crate::rng;
use crate::utility::{ResolvedUtility, COUNT_EPS};

/// `floor(fraction * n)`, tolerant of representation error in `fraction`.
pub fn slot_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64 + COUNT_EPS).floor().max(0.0) as usize).min(n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupCap {
    pub mask: Mask,
    /// Local capacity as a fraction of the subgroup's size.
    pub capacity: f64,
}

impl SubgroupCap {
    pub fn slots(&self) -> usize {
        slot_count(self.capacity, self.mask.count())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub capacity: f64,
    #[serde(default)]
    pub subgroup_caps: Vec<SubgroupCap>,
    pub population_size: usize,
}

impl Constraint {
    pub fn new(capacity: f64, population_size: usize) -> Result<Self> {
        let c = Constraint {
            capacity,
            subgroup_caps: Vec::new(),
            population_size,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn with_cap(mut self, mask: Mask, capacity: f64) -> Result<Self> {
        self.subgroup_caps.push(SubgroupCap { mask, capacity });
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.capacity > 0.0 && self.capacity <= 1.0 + COUNT_EPS) {
            return Err(Error::InvalidConstraint(format!(
                "capacity {} not in (0, 1]",
                self.capacity
            )));
        }
        if self.slots() == 0 {
            return Err(Error::InvalidConstraint(format!(
                "capacity {} leaves no slot for {} records",
                self.capacity, self.population_size
            )));
        }
        for cap in &self.subgroup_caps {
            cap.mask.check_len(self.population_size)?;
            if !(cap.capacity > 0.0 && cap.capacity <= 1.0 + COUNT_EPS) {
                return Err(Error::InvalidConstraint(format!(
                    "subgroup capacity {} not in (0, 1]",
                    cap.capacity
                )));
            }
        }
        Ok(())
    }

    /// Slot count `k = floor(capacity * N)`.
    pub fn slots(&self) -> usize {
        slot_count(self.capacity, self.population_size)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreField {
    Prediction,
    /// Ranks on true outcomes: the perfect-targeting oracle.
    Outcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PolicyOptions {
    /// Seed for the random fill of unlabeled records.
    #[serde(default)]
    pub seed: u64,
    /// Stop at the first candidate whose expected net gain is not positive.
    #[serde(default)]
    pub stop_at_nonpositive: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FillLog {
    pub seed: u64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub assigned: Vec<bool>,
    pub slots_used: usize,
    pub fill: FillLog,
    /// Set when subgroup caps left slots empty that candidates could have used.
    pub warning: Option<String>,
}

impl Allocation {
    pub fn empty(n: usize) -> Self {
        Allocation {
            assigned: vec![false; n],
            slots_used: 0,
            fill: FillLog { seed: 0, count: 0 },
            warning: None,
        }
    }
}

struct CapCounter<'a> {
    caps: &'a [SubgroupCap],
    limits: Vec<usize>,
    used: Vec<usize>,
}

impl<'a> CapCounter<'a> {
    fn new(caps: &'a [SubgroupCap]) -> Self {
        CapCounter {
            caps,
            limits: caps.iter().map(SubgroupCap::slots).collect(),
            used: vec![0; caps.len()],
        }
    }

    fn admits(&self, i: usize) -> bool {
        self.caps
            .iter()
            .zip(self.limits.iter().zip(&self.used))
            .all(|(cap, (&limit, &used))| !cap.mask.member[i] || used < limit)
    }

    fn take(&mut self, i: usize) {
        for (cap, used) in self.caps.iter().zip(self.used.iter_mut()) {
            if cap.mask.member[i] {
                *used += 1;
            }
        }
    }
}

/// Top-k allocation by score. Labeled records are ranked (ties in file order);
/// slots left over once labeled records run out go to unlabeled records drawn
/// uniformly without replacement. `utility` is consulted only by the
/// stop-at-nonpositive rule.
pub fn allocate(
    pop: &Population,
    constraint: &Constraint,
    score: ScoreField,
    options: &PolicyOptions,
    utility: Option<&ResolvedUtility>,
) -> Result<Allocation> {
    let n = pop.len();
    if constraint.population_size != n {
        return Err(Error::InvalidConstraint(format!(
            "constraint sized for {} records, population has {n}",
            constraint.population_size
        )));
    }
    constraint.validate()?;
    let k = constraint.slots();
    let (ranking, scores) = match score {
        ScoreField::Prediction => (Cow::Owned(pop.prediction_ranking()), pop.predictions()),
        ScoreField::Outcome => (Cow::Borrowed(pop.outcome_ranking()), pop.outcomes()),
    };
    let stop_rule = utility.filter(|_| options.stop_at_nonpositive);

    let mut alloc = Allocation::empty(n);
    alloc.fill.seed = options.seed;
    let mut caps = CapCounter::new(&constraint.subgroup_caps);
    let mut capped_out = false;
    let mut stopped = false;

    for &i in ranking.iter() {
        if alloc.slots_used == k {
            break;
        }
        if let Some(u) = stop_rule {
            let expected = match score {
                ScoreField::Prediction => u.predicted_gain(scores[i]),
                ScoreField::Outcome => u.net_gain_record(i, scores[i])?,
            };
            if expected <= 0.0 {
                stopped = true;
                break;
            }
        }
        if !caps.admits(i) {
            capped_out = true;
            continue;
        }
        caps.take(i);
        alloc.assigned[i] = true;
        alloc.slots_used += 1;
    }

    if alloc.slots_used < k && !stopped && score == ScoreField::Prediction {
        let mut pool: Vec<usize> = (0..n).filter(|&i| !pop.labeled_flags()[i]).collect();
        let mut r = rng::seeded(options.seed);
        rng::shuffle(&mut pool, &mut r);
        for i in pool {
            if alloc.slots_used == k {
                break;
            }
            if !caps.admits(i) {
                capped_out = true;
                continue;
            }
            caps.take(i);
            alloc.assigned[i] = true;
            alloc.slots_used += 1;
            alloc.fill.count += 1;
        }
    }

    if capped_out && alloc.slots_used < k {
        alloc.warning = Some(format!(
            "subgroup caps left {} of {k} slots unfilled",
            k - alloc.slots_used
        ));
    }
    Ok(alloc)
}

/// Per-capita utility `(1/N) sum_i u(w_i, a_i)`.
pub fn welfare(pop: &Population, alloc: &Allocation, u: &ResolvedUtility) -> Result<f64> {
    if alloc.assigned.len() != pop.len() {
        return Err(Error::MaskLength {
            mask: alloc.assigned.len(),
            population: pop.len(),
        });
    }
    let mut total = 0.0;
    for (i, (&w, _)) in pop
        .outcomes()
        .iter()
        .zip(&alloc.assigned)
        .enumerate()
        .filter(|(_, (_, &a))| a)
    {
        total += u.net_gain_record(i, w)?;
    }
    Ok(total / pop.len() as f64)
}

/// Expected welfare of a uniformly random size-k allocation, in closed form.
pub fn random_baseline(pop: &Population, constraint: &Constraint, u: &ResolvedUtility) -> Result<f64> {
    if pop.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    let mut total = 0.0;
    for (i, &w) in pop.outcomes().iter().enumerate() {
        total += u.net_gain_record(i, w)?;
    }
    let n = pop.len() as f64;
    Ok(constraint.slots() as f64 * total / (n * n))
}

/// Welfare of ranking on true outcomes.
pub fn perfect_baseline(
    pop: &Population,
    constraint: &Constraint,
    options: &PolicyOptions,
    u: &ResolvedUtility,
) -> Result<f64> {
    let alloc = allocate(pop, constraint, ScoreField::Outcome, options, Some(u))?;
    welfare(pop, &alloc, u)
}

pub fn welfare_ratio(policy_welfare: f64, baseline_welfare: f64) -> Result<f64> {
    if baseline_welfare == 0.0 {
        return Err(Error::ZeroBaseline);
    }
    Ok(policy_welfare / baseline_welfare)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::Direction;
    use crate::utility::{resolve, UtilitySpec};

    fn opts() -> PolicyOptions {
        PolicyOptions::default()
    }

    #[test]
    fn top_k_by_prediction() {
        let p: Vec<f64> = (1..=10).map(f64::from).collect();
        let pop = Population::labeled(vec![0.0; 10], p, Direction::HigherIsRisk).unwrap();
        let c = Constraint::new(0.3, 10).unwrap();
        let a = allocate(&pop, &c, ScoreField::Prediction, &opts(), None).unwrap();
        assert_eq!(a.slots_used, 3);
        let chosen: Vec<usize> = (0..10).filter(|&i| a.assigned[i]).collect();
        assert_eq!(chosen, vec![7, 8, 9]);
    }

    #[test]
    fn random_fill_is_seeded() {
        let labeled = (0..10).map(|i| i < 3).collect();
        let pop = Population::from_columns(vec![1.0; 10], vec![1.0; 10], labeled, Direction::HigherIsRisk).unwrap();
        let c = Constraint::new(0.5, 10).unwrap();
        let o = PolicyOptions { seed: 42, ..opts() };
        let a = allocate(&pop, &c, ScoreField::Prediction, &o, None).unwrap();
        assert_eq!(a.slots_used, 5);
        assert_eq!(a.fill.count, 2);
        assert!(a.assigned[..3].iter().all(|&x| x));
        let b = allocate(&pop, &c, ScoreField::Prediction, &o, None).unwrap();
        assert_eq!(a, b);
        let draws: std::collections::BTreeSet<Vec<bool>> = (0..30)
            .map(|s| {
                let o = PolicyOptions { seed: s, ..opts() };
                allocate(&pop, &c, ScoreField::Prediction, &o, None).unwrap().assigned
            })
            .collect();
        assert!(draws.len() > 1);
    }

    #[test]
    fn reverse_predictions_pick_lowest_outcomes() {
        let pop = Population::labeled(
            vec![1.0, 2.0, 3.0, 4.0],
            vec![4.0, 3.0, 2.0, 1.0],
            Direction::HigherIsRisk,
        )
        .unwrap();
        let c = Constraint::new(0.5, 4).unwrap();
        let u = resolve(&UtilitySpec::step(0.5, 1.0), &pop).unwrap();
        let a = allocate(&pop, &c, ScoreField::Prediction, &opts(), None).unwrap();
        assert_eq!(a.assigned, vec![true, true, false, false]);
        assert_eq!(welfare(&pop, &a, &u).unwrap(), 0.0);
        assert_eq!(welfare(&pop, &Allocation::empty(4), &u).unwrap(), 0.0);
    }

    #[test]
    fn perfect_is_min_alpha_beta() {
        let w: Vec<f64> = (0..100).map(f64::from).collect();
        let pop = Population::labeled(w.clone(), w, Direction::HigherIsRisk).unwrap();
        let u = resolve(&UtilitySpec::step(0.15, 1.0), &pop).unwrap();
        let c = Constraint::new(0.1, 100).unwrap();
        assert_eq!(perfect_baseline(&pop, &c, &opts(), &u).unwrap(), 0.10);
        let c = Constraint::new(0.2, 100).unwrap();
        assert_eq!(perfect_baseline(&pop, &c, &opts(), &u).unwrap(), 0.15);
        let rb = random_baseline(&pop, &Constraint::new(0.1, 100).unwrap(), &u).unwrap();
        assert_eq!(rb, 0.015);
    }

    #[test]
    fn random_baseline_harm_benefit() {
        let w: Vec<f64> = (0..100).map(f64::from).collect();
        let pop = Population::labeled(w.clone(), w, Direction::HigherIsRisk).unwrap();
        let u = resolve(&UtilitySpec::harm_benefit(0.25, 1.0, 2.0), &pop).unwrap();
        let rb = random_baseline(&pop, &Constraint::new(0.01, 100).unwrap(), &u).unwrap();
        // 0.01 * (0.25 * 1 - 0.75 * 2)
        assert!((rb - (-0.0125)).abs() < 1e-15, "{rb}");
        // full capacity: mean net gain
        let rb = random_baseline(&pop, &Constraint::new(1.0, 100).unwrap(), &u).unwrap();
        assert!((rb - (0.25 - 0.75 * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn crra_oracle_serves_poorest() {
        let w = vec![500.0, 100.0, 900.0, 300.0];
        let pop = Population::labeled(w.clone(), w, Direction::LowerIsRisk).unwrap();
        let c = Constraint::new(0.5, 4).unwrap();
        let a = allocate(&pop, &c, ScoreField::Outcome, &opts(), None).unwrap();
        assert_eq!(a.assigned, vec![false, true, false, true]);
    }

    #[test]
    fn ratio() {
        assert!((welfare_ratio(0.042, 0.015).unwrap() - 2.8).abs() < 1e-12);
        assert_eq!(welfare_ratio(0.3, 0.3).unwrap(), 1.0);
        assert_eq!(welfare_ratio(0.3, 0.0), Err(Error::ZeroBaseline));
    }

    #[test]
    fn subgroup_caps_bind_and_warn() {
        let p: Vec<f64> = (0..10).map(|i| 10.0 - i as f64).collect();
        let pop = Population::labeled(p.clone(), p, Direction::HigherIsRisk).unwrap();
        let group = Mask::from_indices(10, 0..5, "top half");
        let base = Constraint::new(0.4, 10).unwrap();
        let capped = base.clone().with_cap(group.clone(), 0.4).unwrap();
        let a = allocate(&pop, &capped, ScoreField::Prediction, &opts(), None).unwrap();
        assert_eq!(a.assigned.iter().filter(|&&x| x).count(), 4);
        assert_eq!((0..5).filter(|&i| a.assigned[i]).count(), 2);
        assert!(a.warning.is_none());

        let u = resolve(&UtilitySpec::step(0.3, 1.0), &pop).unwrap();
        let free = allocate(&pop, &base, ScoreField::Prediction, &opts(), None).unwrap();
        assert!(welfare(&pop, &a, &u).unwrap() <= welfare(&pop, &free, &u).unwrap());

        // cap the whole population to 1 slot: infeasible -> best effort + warning
        let tight = base.with_cap(Mask::all(10), 0.1).unwrap();
        let a = allocate(&pop, &tight, ScoreField::Prediction, &opts(), None).unwrap();
        assert_eq!(a.slots_used, 1);
        assert!(a.warning.is_some());
    }

    #[test]
    fn stop_rule_halts_at_nonpositive() {
        let p: Vec<f64> = (0..10).map(f64::from).collect();
        let pop = Population::labeled(p.clone(), p, Direction::HigherIsRisk).unwrap();
        let u = resolve(&UtilitySpec::harm_benefit(0.2, 1.0, 3.0), &pop).unwrap();
        let c = Constraint::new(0.5, 10).unwrap();
        let o = PolicyOptions {
            stop_at_nonpositive: true,
            ..opts()
        };
        let a = allocate(&pop, &c, ScoreField::Prediction, &o, Some(&u)).unwrap();
        assert_eq!(a.slots_used, 2);
        let a = allocate(&pop, &c, ScoreField::Prediction, &opts(), Some(&u)).unwrap();
        assert_eq!(a.slots_used, 5);
    }

    #[test]
    fn constraint_validation() {
        assert!(Constraint::new(0.0, 10).is_err());
        assert!(Constraint::new(1.2, 10).is_err());
        assert!(Constraint::new(0.05, 10).is_err());
        assert_eq!(Constraint::new(0.29, 100).unwrap().slots(), 29);
    }

    #[test]
    fn random_baseline_matches_monte_carlo() {
        // 20 records, k = 5; the closed form against 1e5 seeded random draws
        let w: Vec<f64> = (0..20).map(|i| ((i * 7) % 20) as f64).collect();
        let pop = Population::labeled(w.clone(), w.clone(), Direction::HigherIsRisk).unwrap();
        let u = resolve(&UtilitySpec::harm_benefit(0.3, 1.0, 0.5), &pop).unwrap();
        let c = Constraint::new(0.25, 20).unwrap();
        let exact = random_baseline(&pop, &c, &u).unwrap();
        let mut r = rng::seeded(99);
        let trials = 100_000;
        let (mut sum, mut sq) = (0.0, 0.0);
        let mut idx: Vec<usize> = (0..20).collect();
        for _ in 0..trials {
            rng::shuffle(&mut idx, &mut r);
            let v: f64 = idx[..5]
                .iter()
                .map(|&i| u.net_gain_record(i, w[i]).unwrap())
                .sum::<f64>()
                / 20.0;
            sum += v;
            sq += v * v;
        }
        let mean = sum / trials as f64;
        let se = ((sq / trials as f64 - mean * mean) / trials as f64).sqrt();
        assert!((mean - exact).abs() < 3.0 * se, "mc {mean} exact {exact} se {se}");
    }
}
