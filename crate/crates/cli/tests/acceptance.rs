//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use levers_core::compare::{
    apply_lever, break_even, equivalent_cost, evaluate, evaluate_detailed, optimize_budget, ratio_grid, welfare_gain,
    EquivalentCostOutcome, Scenario,
};
use levers_core::levers::{apply_prediction_improvement, CostModel, LabelingOrder, LeverFamily, LeverTemplate};
use levers_core::policy::{perfect_baseline, random_baseline};
use levers_core::population::{covariate_mask, prediction_band_mask, prediction_band_mask_within, rmse, Band, Mask};
use levers_core::synth::{generate, oracle_budget, oracle_scan, SynthSpec};
use levers_core::utility::resolve;
use levers_core::{Population, UtilitySpec};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check, Duration);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn improve(name: &str, mask: Mask) -> LeverTemplate {
    LeverTemplate::new(name, LeverFamily::PredictionImprovement { mask }, None)
}

fn capacity(unit_cost: f64) -> LeverTemplate {
    LeverTemplate::new(
        "capacity",
        LeverFamily::ExpandCapacity { target_mask: None },
        Some(CostModel::per_person(unit_cost, "hours")),
    )
}

fn two_point(n: usize, sigma: f64, seed: u64) -> Population {
    generate(&SynthSpec::two_point(n, sigma, seed)).expect("valid fixture")
}

/// Analytic bounds on the employment fixture.
fn bounds() -> Check {
    let n = 10_000;
    let s = Scenario::new(two_point(n, 0.0, 1), UtilitySpec::step(0.15, 1.0), 0.1).map_err(e2s)?;
    let u = resolve(&s.utility, &s.population).map_err(e2s)?;
    let random = random_baseline(&s.population, &s.constraint, &u).map_err(e2s)?;
    let w = evaluate(&s).map_err(e2s)?;
    ensure(random == 0.015, || format!("random baseline {random} != 0.015"))?;
    ensure((w - 0.10).abs() <= 2.0 / n as f64, || {
        format!("perfect-predictor welfare {w}")
    })?;
    Ok(format!("random={random} perfect={w}"))
}

/// RMSE scales by exactly (1 - eta) on full, covariate and band masks.
fn rmse_identity() -> Check {
    let spec = SynthSpec {
        missing_history: 0.3,
        ..SynthSpec::two_point(10_000, 120.0, 2)
    };
    let pop = generate(&spec).map_err(e2s)?;
    let masks = [
        Mask::all(pop.len()),
        covariate_mask(&pop, "age > 35 AND last_job IS MISSING").map_err(e2s)?,
        prediction_band_mask(
            &pop,
            Band::Rank {
                cutoff_rank: 1000,
                fraction: 0.1,
            },
        )
        .map_err(e2s)?,
    ];
    let mut worst: f64 = 0.0;
    for mask in &masks {
        let before = rmse(&pop, mask).map_err(e2s)?;
        for k in 1..=9 {
            let eta = k as f64 / 10.0;
            let after = rmse(&apply_prediction_improvement(&pop, eta, mask).map_err(e2s)?, mask).map_err(e2s)?;
            let rel = (after - (1.0 - eta) * before).abs() / ((1.0 - eta) * before);
            worst = worst.max(rel);
        }
    }
    ensure(worst <= 1e-12, || format!("max relative deviation {worst:e}"))?;
    Ok(format!("3 masks x 9 etas, max relative deviation {worst:.1e}"))
}

/// Uniform improvement never lowers welfare, and full improvement is perfect.
fn monotone_improvement() -> Check {
    let grid: Vec<f64> = (0..=20).map(|k| k as f64 / 20.0).collect();
    let mut checked = 0;
    for seed in 0..20u64 {
        let emp = two_point(2000, 150.0, seed);
        let pov = generate(&SynthSpec::poverty(2000, 0.5, seed)).map_err(e2s)?;
        let cases = [
            ("step", emp.clone(), UtilitySpec::step(0.15, 1.0), 0.1),
            ("h/b=2", emp, UtilitySpec::harm_benefit(0.15, 1.0, 2.0), 0.1),
            (
                "crra",
                pov,
                UtilitySpec::Crra {
                    rho: 3.0,
                    benefit: 100.0,
                },
                0.2,
            ),
        ];
        for (name, pop, u, alpha) in cases {
            let s = Scenario::new(pop, u, alpha).map_err(e2s)?;
            let lever = improve("improve", Mask::all(s.population.len()));
            let mut prev = f64::NEG_INFINITY;
            for &eta in &grid {
                let w = evaluate(&apply_lever(&s, &lever.at(eta)).map_err(e2s)?).map_err(e2s)?;
                ensure(w >= prev, || {
                    format!("seed {seed} {name}: welfare drops at eta={eta} ({prev} -> {w})")
                })?;
                prev = w;
            }
            let u = resolve(&s.utility, &s.population).map_err(e2s)?;
            let perfect = perfect_baseline(&s.population, &s.constraint, &s.policy, &u).map_err(e2s)?;
            ensure(prev == perfect, || {
                format!("seed {seed} {name}: eta=1 gives {prev}, perfect {perfect}")
            })?;
            checked += 1;
        }
    }
    Ok(format!(
        "{checked} curves of 21 points nondecreasing, endpoints equal perfect baseline"
    ))
}

/// Extra capacity helps without harm and hurts at h/b = 3; prediction is
/// worth more as h/b grows.
fn capacity_reversal() -> Check {
    let spec = SynthSpec {
        outcome: levers_core::synth::OutcomeDist::TwoPoint {
            share_at_risk: 0.25,
            low: 0.0,
            high: 400.0,
        },
        ..SynthSpec::two_point(20_000, 600.0, 3)
    };
    let pop = generate(&spec).map_err(e2s)?;
    let mut cap_gain = Vec::new();
    let mut pred_gain = Vec::new();
    for ratio in [0.0, 1.0, 2.0, 3.0] {
        let s = Scenario::new(pop.clone(), UtilitySpec::harm_benefit(0.25, 1.0, ratio), 0.01).map_err(e2s)?;
        cap_gain.push(welfare_gain(&s, &capacity(1.0).at(0.01)).map_err(e2s)?);
        pred_gain.push(welfare_gain(&s, &improve("improve", Mask::all(pop.len())).at(0.5)).map_err(e2s)?);
    }
    ensure(cap_gain[0] > 0.0, || {
        format!("capacity gain at h/b=0 is {}", cap_gain[0])
    })?;
    ensure(cap_gain[3] < 0.0, || {
        format!("capacity gain at h/b=3 is {}", cap_gain[3])
    })?;
    ensure(pred_gain.windows(2).all(|w| w[1] > w[0]), || {
        format!("prediction gains {pred_gain:?}")
    })?;
    Ok(format!(
        "capacity gain {:+.5} (h/b=0) vs {:+.5} (h/b=3); eta=0.5 gains {pred_gain:.5?}",
        cap_gain[0], cap_gain[3]
    ))
}

/// Welfare ratio to random falls with capacity, and CRRA ranks above step
/// at the smallest capacity.
fn ratio_decline() -> Check {
    let pop = generate(&SynthSpec::poverty(10_000, 0.5, 4)).map_err(e2s)?;
    let mut out = Vec::new();
    for (name, u) in [
        ("step", UtilitySpec::step(0.5, 100.0)),
        (
            "crra",
            UtilitySpec::Crra {
                rho: 3.0,
                benefit: 100.0,
            },
        ),
    ] {
        let mut ratios = Vec::new();
        for alpha in [0.05, 0.2, 0.5] {
            let e = evaluate_detailed(&Scenario::new(pop.clone(), u.clone(), alpha).map_err(e2s)?).map_err(e2s)?;
            ratios.push(e.ratio_to_random.ok_or("zero random baseline")?);
        }
        ensure(ratios[0] > ratios[1] && ratios[1] > ratios[2], || {
            format!("{name} ratios {ratios:?}")
        })?;
        out.push(ratios);
    }
    ensure(out[1][0] > out[0][0], || {
        format!("crra {} <= step {} at alpha=0.05", out[1][0], out[0][0])
    })?;
    Ok(format!("step {:.3?}, crra {:.3?}", out[0], out[1]))
}

/// Grid-search optimizer equals exhaustive enumeration; large CRRA budgets
/// cover everyone before buying slots.
fn budget_oracle() -> Check {
    let mut rng = 0x5eed_u64;
    let mut next = |bound: u64| {
        rng = levers_core::rng::derive(rng, 17);
        rng % bound
    };
    for inst in 0..50u64 {
        let n = 60 + next(240) as usize;
        let mut spec = SynthSpec::poverty(n, 0.4, inst);
        spec.label_share = [0.0, 0.3, 0.6][next(3) as usize];
        let pop = generate(&spec).map_err(e2s)?;
        let utility = if inst % 2 == 0 {
            UtilitySpec::step(0.3, 1.0)
        } else {
            UtilitySpec::Crra {
                rho: 2.0,
                benefit: 100.0,
            }
        };
        let s = Scenario::new(pop, utility, 0.05 + 0.05 * next(3) as f64).map_err(e2s)?;
        let label = LeverTemplate::new(
            "label",
            LeverFamily::DataLabeling {
                order: LabelingOrder::Random,
                seed: inst,
            },
            Some(CostModel::per_person(1.0 + next(3) as f64, "usd")),
        );
        let cap = LeverTemplate::new(
            "slots",
            LeverFamily::ExpandCapacity { target_mask: None },
            Some(CostModel::per_person(1.0 + next(5) as f64, "usd")),
        );
        let third = if inst % 2 == 0 {
            LeverTemplate::new("harm", LeverFamily::HarmReduction, Some(CostModel::linear(10.0, "usd")))
        } else {
            LeverTemplate::new("benefit", LeverFamily::Benefit, Some(CostModel::linear(2.0, "usd")))
        };
        let (levers, budget) = if inst % 3 == 0 {
            (vec![label, cap, third], 12.0 + next(6) as f64)
        } else {
            (vec![label, cap], 20.0 + next(15) as f64)
        };
        let got = optimize_budget(&s, &levers, budget, Some(1.0), 2).map_err(e2s)?;
        let want = oracle_budget(&s, &levers, budget, 1.0).map_err(e2s)?;
        ensure((got.total_welfare - want.total_welfare).abs() <= 1e-9, || {
            format!(
                "instance {inst}: optimizer {} vs oracle {}",
                got.total_welfare, want.total_welfare
            )
        })?;
        for (a, b) in got.splits.iter().zip(&want.splits) {
            ensure((a.spend - b.spend).abs() <= 1.0, || {
                format!("instance {inst}: spend {a:?} vs {b:?}")
            })?;
        }
    }

    // saturation: surveying is cheap relative to a transfer slot; spend moves
    // in $100 blocks (20 surveys or one slot)
    let mut spec = SynthSpec::poverty(200, 0.4, 9);
    spec.label_share = 0.2;
    let s = Scenario::new(
        generate(&spec).map_err(e2s)?,
        UtilitySpec::Crra {
            rho: 3.0,
            benefit: 100.0,
        },
        0.1,
    )
    .map_err(e2s)?;
    let levers = [
        LeverTemplate::new(
            "survey",
            LeverFamily::DataLabeling {
                order: LabelingOrder::Random,
                seed: 1,
            },
            Some(CostModel::per_person(5.0, "usd")),
        ),
        LeverTemplate::new(
            "slots",
            LeverFamily::ExpandCapacity { target_mask: None },
            Some(CostModel::per_person(100.0, "usd")),
        ),
    ];
    let mut shares = Vec::new();
    let mut last_slots = 0.0;
    for budget in [200.0, 400.0, 800.0, 1600.0, 3000.0] {
        let r = optimize_budget(&s, &levers, budget, Some(100.0), 0).map_err(e2s)?;
        shares.push(r.splits[0].theta);
        last_slots = r.splits[1].spend;
    }
    ensure(shares.windows(2).all(|w| w[1] >= w[0]), || {
        format!("label shares {shares:?}")
    })?;
    ensure(shares[shares.len() - 1] == 1.0, || {
        format!("no full coverage: {shares:?}")
    })?;
    ensure(last_slots > 0.0, || "large budget bought no slots".into())?;
    Ok(format!(
        "50 instances match; label share by budget {shares:?}, then ${last_slots} on slots"
    ))
}

/// Coarse scans and bisection agree with fine linear scans.
fn break_even_oracle() -> Check {
    let coarse: Vec<f64> = (0..=20).map(|k| k as f64 / 20.0).collect();
    let fine: Vec<f64> = (0..=200).map(|k| k as f64 / 200.0).collect();
    let step = coarse[1];
    let dmax = 0.05;
    let scan_step = dmax / 10_000.0;
    for seed in 0..20u64 {
        let spec = SynthSpec {
            missing_history: 0.3,
            no_history_noise_scale: 2.5,
            ..SynthSpec::two_point(2000, 120.0, 100 + seed)
        };
        let pop = generate(&spec).map_err(e2s)?;
        let n = pop.len();
        let mask = if seed % 2 == 0 {
            Mask::all(n)
        } else {
            covariate_mask(&pop, "last_job IS MISSING").map_err(e2s)?
        };
        let s = Scenario::new(pop, UtilitySpec::step(0.15, 1.0), 0.1).map_err(e2s)?;
        let lever = improve("improve", mask.clone());
        let bench = capacity(4.0).at(((mask.count() as f64 / 40.0).round() / n as f64).max(1.0 / n as f64));

        let r = break_even(&s, &lever, &coarse, &bench, 2).map_err(e2s)?;
        let base = evaluate(&s).map_err(e2s)?;
        let gain = |t: f64| evaluate(&apply_lever(&s, &lever.at(t)).unwrap()).unwrap() - base;
        let scan = oracle_scan(&fine, r.benchmark_gain, gain);
        match (r.theta_star, scan) {
            (Some(a), Some(b)) => ensure((a - b).abs() <= step + 1e-12, || {
                format!("seed {seed}: {a} vs fine {b}")
            })?,
            (None, None) => {}
            (a, b) => return Err(format!("seed {seed}: coarse {a:?} vs fine {b:?}")),
        }

        let target = lever.at(0.3);
        let ec = equivalent_cost(&s, &target, &capacity(4.0), Some(dmax), 2).map_err(e2s)?;
        let cap = capacity(4.0);
        let cap_gain = |d: f64| evaluate(&apply_lever(&s, &cap.at(d)).unwrap()).unwrap() - base;
        let ds: Vec<f64> = (0..=10_000).map(|k| k as f64 * scan_step).collect();
        let scan = oracle_scan(&ds, ec.lever_gain, cap_gain);
        match (&ec.outcome, scan) {
            (EquivalentCostOutcome::Found { displacement, .. }, Some(d)) => {
                ensure((displacement - d).abs() <= scan_step + 1e-12, || {
                    format!("seed {seed}: bisection {displacement} vs scan {d}")
                })?
            }
            (EquivalentCostOutcome::RangeExceeded { .. }, None) => {}
            (o, d) => return Err(format!("seed {seed}: {o:?} vs scan {d:?}")),
        }
    }

    // Subgroup versus a 10% band inside it. Each is benchmarked against the
    // slots its own collection hours would buy (1 hour per record, 4 per slot).
    let spec = SynthSpec {
        missing_history: 0.3,
        no_history_noise_scale: 2.5,
        ..SynthSpec::two_point(20_000, 120.0, 7)
    };
    let pop = generate(&spec).map_err(e2s)?;
    let n = pop.len();
    let sub = covariate_mask(&pop, "age > 35 AND last_job IS MISSING").map_err(e2s)?;
    let s = Scenario::new(pop, UtilitySpec::step(0.15, 1.0), 0.15).map_err(e2s)?;
    let band = prediction_band_mask_within(
        &s.population,
        Band::Rank {
            cutoff_rank: s.constraint.slots(),
            fraction: 0.1,
        },
        &sub,
    )
    .map_err(e2s)?;
    let eta_star = |mask: &Mask| -> Result<Option<f64>, String> {
        let slots = (mask.count() as f64 / 4.0).round();
        let bench = capacity(4.0).at(slots / n as f64);
        Ok(break_even(&s, &improve("m", mask.clone()), &fine, &bench, 0)
            .map_err(e2s)?
            .theta_star)
    };
    let sub_eta = eta_star(&sub)?;
    let band_eta = eta_star(&band)?.ok_or("band never breaks even")?;
    ensure(sub_eta.is_none_or(|e| band_eta < e), || {
        format!("band {band_eta} vs subgroup {sub_eta:?}")
    })?;
    Ok(format!(
        "20 instances within one step; band eta*={band_eta} vs subgroup eta*={}",
        sub_eta.map_or("not reached".into(), |e| e.to_string())
    ))
}

/// Swapping the axes inverts every defined ratio.
fn ratio_reciprocity() -> Check {
    let pop = generate(&SynthSpec::poverty(4000, 0.5, 6)).map_err(e2s)?;
    let s = Scenario::new(
        pop,
        UtilitySpec::Crra {
            rho: 3.0,
            benefit: 100.0,
        },
        0.2,
    )
    .map_err(e2s)?;
    let a = improve("improve", Mask::all(s.population.len()));
    let b = LeverTemplate::new("transfer", LeverFamily::Benefit, None);
    let ga: Vec<f64> = (0..=8).map(|k| k as f64 / 8.0).collect();
    let gb: Vec<f64> = (0..=8).map(|k| 100.0 + 12.5 * k as f64).collect();
    let ab = ratio_grid(&s, &a, &ga, &b, &gb, 2).map_err(e2s)?;
    let ba = ratio_grid(&s, &b, &gb, &a, &ga, 2).map_err(e2s)?;
    let (mut defined, mut undefined, mut worst) = (0, 0, 0.0f64);
    for i in 0..ga.len() {
        for j in 0..gb.len() {
            match (ab.ratios[i][j], ba.ratios[j][i]) {
                (Some(x), Some(y)) => {
                    defined += 1;
                    worst = worst.max((x * y - 1.0).abs());
                }
                (x, y) => {
                    undefined += 1;
                    ensure(x.is_none_or(f64::is_finite) && y.is_none_or(f64::is_finite), || {
                        "non-finite ratio".into()
                    })?;
                    ensure(ab.gains_b[j] <= 0.0 || ba.gains_b[i] <= 0.0, || {
                        format!("cell ({i},{j}) wrongly undefined")
                    })?;
                }
            }
        }
    }
    let json = serde_json::to_value(&ab).map_err(e2s)?;
    ensure(json["ratios"][0][0].is_null(), || {
        "undefined cell not serialized as null".into()
    })?;
    ensure(worst <= 1e-12, || format!("max |r_ab r_ba - 1| = {worst:e}"))?;
    ensure(defined > 0 && undefined > 0, || {
        format!("{defined} defined, {undefined} undefined")
    })?;
    Ok(format!(
        "{defined} reciprocal pairs (max error {worst:.1e}), {undefined} flagged undefined"
    ))
}

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

/// Result documents are byte-identical across runs and worker counts.
fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(e2s)?;
    let extra = [
        (
            "reversal.toml",
            "[dataset.synth]\nn = 20000\nseed = 3\noutcome = { kind = \"two_point\", share_at_risk = 0.25, low = 0.0, high = 400.0 }\n\
             noise = { kind = \"additive\", sigma = 600.0 }\n\n[utility]\nkind = \"partitioned\"\nbeta = 0.25\nharm = 3.0\n\n\
             [constraint]\ncapacity = 0.01\n\n[levers.capacity]\nkind = \"expand_capacity\"\n\n\
             [analysis]\nkind = \"curve\"\nlever = \"capacity\"\ngrid = [0.0, 0.005, 0.01]\n",
        ),
        (
            "labeling.toml",
            "[dataset.synth]\nn = 10000\nseed = 1\nlabel_share = 0.2\noutcome = { kind = \"two_point\", share_at_risk = 0.15, low = 0.0, high = 400.0 }\n\
             noise = { kind = \"additive\", sigma = 150.0 }\n\n[utility]\nkind = \"partitioned\"\nbeta = 0.15\n\n\
             [constraint]\ncapacity = 0.5\n\n[policy]\nseed = 11\n\n[analysis]\nkind = \"evaluate\"\n",
        ),
    ];
    let mut cases: Vec<(&str, std::path::PathBuf)> = vec![
        ("evaluate", fixture("perfect.toml")),
        ("curve", fixture("curve.toml")),
        ("optimize", fixture("budget_toy.toml")),
        ("break-even", fixture("break_even.toml")),
        ("equiv-cost", fixture("equiv_cost.toml")),
        ("ratio-grid", fixture("ratio_grid.toml")),
    ];
    for (name, text) in extra {
        let p = dir.path().join(name);
        fs::write(&p, text).map_err(e2s)?;
        cases.push((if name.starts_with("rev") { "curve" } else { "evaluate" }, p));
    }
    for (sub, config) in &cases {
        let mut docs = Vec::new();
        for (k, workers) in ["1", "1", "4"].iter().enumerate() {
            let out = dir
                .path()
                .join(format!("{}-{k}", config.file_stem().unwrap().to_string_lossy()));
            let o = Command::new(env!("CARGO_BIN_EXE_levers"))
                .args([
                    *sub,
                    "--config",
                    config.to_str().unwrap(),
                    "--out",
                    out.to_str().unwrap(),
                    "--workers",
                    workers,
                ])
                .output()
                .map_err(e2s)?;
            ensure(o.status.success(), || {
                format!("{sub} failed: {}", String::from_utf8_lossy(&o.stderr))
            })?;
            docs.push(fs::read(out.join("result.json")).map_err(e2s)?);
        }
        ensure(docs[0] == docs[1], || {
            format!("{} differs between runs", config.display())
        })?;
        ensure(docs[0] == docs[2], || {
            format!("{} differs between 1 and 4 workers", config.display())
        })?;
    }
    Ok(format!("{} configs x (2 runs + 4 workers) byte-identical", cases.len()))
}

/// With labels for only part of the population, realized welfare averages
/// to labeled-predictive plus random fill.
fn labeling_expectation() -> Check {
    let spec = SynthSpec {
        label_share: 0.2,
        ..SynthSpec::two_point(10_000, 150.0, 1)
    };
    let pop = generate(&spec).map_err(e2s)?;
    let n = pop.len();
    let s = Scenario::new(pop, UtilitySpec::step(0.15, 1.0), 0.5).map_err(e2s)?;
    let u = resolve(&s.utility, &s.population).map_err(e2s)?;
    let labeled = s.population.labeled_flags();
    let (mut gain_l, mut gain_u) = (0.0, 0.0);
    for (i, &w) in s.population.outcomes().iter().enumerate() {
        let g = u.net_gain_record(i, w).map_err(e2s)?;
        if labeled[i] {
            gain_l += g;
        } else {
            gain_u += g;
        }
    }
    let n_l = s.population.labeled_count();
    let k = s.constraint.slots();
    // every labeled record fits within capacity; the rest is a uniform draw
    let analytic = (gain_l + (k - n_l) as f64 / (n - n_l) as f64 * gain_u) / n as f64;

    let draws: Vec<f64> = (0..200u64)
        .map(|seed| {
            let mut t = s.clone();
            t.policy.seed = seed;
            evaluate(&t)
        })
        .collect::<Result<_, _>>()
        .map_err(e2s)?;
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    let var = draws.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (draws.len() - 1) as f64;
    let se = (var / draws.len() as f64).sqrt();
    ensure((mean - analytic).abs() <= 3.0 * se, || {
        format!("mean {mean} vs analytic {analytic} (se {se:e})")
    })?;
    Ok(format!(
        "mean {mean:.6} vs analytic {analytic:.6}, |diff| = {:.2} se",
        (mean - analytic).abs() / se
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("analytic welfare bounds", bounds, Duration::from_secs(1)),
        ("RMSE interpolation identity", rmse_identity, Duration::from_secs(1)),
        (
            "monotone value of uniform improvement",
            monotone_improvement,
            Duration::from_secs(10),
        ),
        ("capacity reversal", capacity_reversal, Duration::from_secs(5)),
        (
            "welfare-ratio decline with capacity",
            ratio_decline,
            Duration::from_secs(5),
        ),
        (
            "budget optimizer oracle equivalence",
            budget_oracle,
            Duration::from_secs(60),
        ),
        (
            "break-even and equivalent-cost oracles",
            break_even_oracle,
            Duration::from_secs(30),
        ),
        ("ratio-grid reciprocity", ratio_reciprocity, Duration::from_secs(5)),
        (
            "determinism across runs and workers",
            determinism,
            Duration::from_secs(120),
        ),
        ("labeling expectation", labeling_expectation, Duration::from_secs(30)),
    ];
    let mut failed = 0;
    for (name, check, limit) in criteria {
        let start = Instant::now();
        let outcome = check();
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if took > limit => Err(format!("{detail}; took {took:.2?}, limit {limit:?}")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{took:.2?}]"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why} [{took:.2?}]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
