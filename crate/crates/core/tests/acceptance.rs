//! Acceptance suite: one line per criterion, nonzero exit on any failure.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;

use aspect_select::dgp::{oracle_optimal_subset, oracle_reward, sample, stream_seed, Preset};
use aspect_select::pipeline::{
    bias_scaling_experiment, coverage_experiment, run_pipeline, DataSource, Perturbation, PipelineConfig,
};
use aspect_select::regression::{residualize, ridge_fit};
use aspect_select::reward_linear::{asymptotic_variance, bootstrap_std_errors, LinearMoments};
use aspect_select::reward_np::NpConfig;
use aspect_select::selection::{
    fit_rule, select_bruteforce, select_greedy, select_singleton_with, LinearEvaluator, NpEvaluator,
    RewardEvaluator, RuleConfig, RuleId,
};
use aspect_select::Subset;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

type Check = fn() -> Outcome;

fn linear_consistency() -> Outcome {
    let spec = Preset::PlantedPair.build(10).unwrap();
    let ds = sample(&spec, 5000, 101).unwrap();
    let subsets: Vec<Subset> = Subset::all_up_to(10, 2).into_iter().filter(|p| !p.is_empty()).collect();
    let se = bootstrap_std_errors(&ds, &subsets, 0.0, 200, 7).unwrap();
    let moments = LinearMoments::new(&ds);
    let mut worst: f64 = 0.0;
    let mut within = 0;
    for (pi, se) in subsets.iter().zip(&se) {
        let z = (moments.reward(pi, 0.0).unwrap() - oracle_reward(&spec, pi).unwrap()).abs() / se;
        worst = worst.max(z);
        within += usize::from(z <= 3.0);
    }
    let optimum = oracle_optimal_subset(&spec, 2).unwrap();
    let recovered = (0..20)
        .filter(|&s| {
            let ds = sample(&spec, 5000, stream_seed(202, s)).unwrap();
            select_bruteforce(&LinearEvaluator::new(&ds, 0.0).unwrap(), 2).unwrap().subset == optimum
        })
        .count();
    outcome(
        subsets.len() == 55 && within == 55 && recovered >= 18,
        format!("{within}/55 subsets within 3 bootstrap se (max |z| = {worst:.2}); optimal pair {optimum} recovered in {recovered}/20 seeds"),
    )
}

fn second_order_bias() -> Outcome {
    let spec = Preset::Symmetric.build(10).unwrap();
    let r = bias_scaling_experiment(
        &spec,
        &Subset::singleton(0),
        &[0.05, 0.1, 0.2, 0.4],
        200,
        2000,
        303,
        Perturbation::default(),
    )
    .unwrap();
    let zero_ok = r.zero.bias <= 3.0 * r.zero.mc_std_error;
    outcome(
        (1.7..=2.3).contains(&r.slope) && zero_ok,
        format!(
            "slope {:.3}; bias at delta 0 = {:.2e} (MC se {:.2e}); biases {:?}",
            r.slope,
            r.zero.bias,
            r.zero.mc_std_error,
            r.points.iter().map(|p| format!("{:.3e}", p.bias)).collect::<Vec<_>>()
        ),
    )
}

fn estimator_agreement() -> Outcome {
    let spec = Preset::Symmetric.build(10).unwrap();
    let ds = sample(&spec, 5000, 404).unwrap();
    let np = NpEvaluator::new(&ds, NpConfig { seed: 5, ..NpConfig::default() }).unwrap();
    let mut agree = 0;
    let mut zs = Vec::new();
    for j in 0..10 {
        let pi = Subset::singleton(j);
        let est = aspect_select::reward_np::estimate_reward_np_with_folds(&ds, &pi, np.folds(), &NpConfig::default())
            .unwrap();
        let lin = asymptotic_variance(&ds, &pi, 0.0, 0.95).unwrap();
        let combined = (est.std_error.unwrap().powi(2) + lin.std_error.powi(2)).sqrt();
        let z = (est.value - lin.estimate).abs() / combined;
        zs.push(format!("{z:.2}"));
        agree += usize::from(z <= 3.0);
    }
    outcome(agree >= 9, format!("{agree}/10 singletons within 3 combined se (|z| = {})", zs.join(", ")))
}

fn coverage() -> Outcome {
    let cases = [
        (Preset::Symmetric, Subset::singleton(0)),
        (Preset::PlantedPair, Preset::planted_pair(10)),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, (preset, pi)) in cases.into_iter().enumerate() {
        let spec = preset.build(10).unwrap();
        let r = coverage_experiment(&spec, &pi, 2000, 1000, 0.95, 505 + i as u64).unwrap();
        pass &= (0.92..=0.97).contains(&r.coverage);
        parts.push(format!("{preset} {pi}: {:.3}", r.coverage));
    }
    outcome(pass, parts.join("; "))
}

fn gamma_invariance() -> Outcome {
    let spec = Preset::BiasedAi.build(10).unwrap();
    let ds = sample(&spec, 2000, 606).unwrap();
    let fits: Vec<Vec<f64>> = (0..10)
        .map(|j| {
            let perp = residualize(&ds.h_subset(&Subset::singleton(j)), ds.a()).unwrap();
            let x = DMatrix::from_fn(ds.n(), 11, |r, c| if c < 10 { ds.a()[(r, c)] } else { perp[(r, 0)] });
            ridge_fit(&x, ds.y(), 0.0).unwrap().coefficients.rows(0, 10).iter().copied().collect()
        })
        .collect();
    let worst = fits
        .iter()
        .flat_map(|f| f.iter().zip(&fits[0]).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    outcome(worst <= 1e-8, format!("max deviation of A coefficients across singletons {worst:.2e}"))
}

fn monotonicity() -> Outcome {
    let mut violations = 0;
    let mut pairs = 0;
    let spec = Preset::PlantedPair.build(5).unwrap();
    let subsets = Subset::all_up_to(5, 5);
    let pop: Vec<f64> = subsets.iter().map(|p| oracle_reward(&spec, p).unwrap()).collect();
    for (i, p) in subsets.iter().enumerate() {
        for (k, q) in subsets.iter().enumerate() {
            if p.is_subset_of(q) {
                pairs += 1;
                violations += usize::from(pop[i] > pop[k]);
            }
        }
    }
    let mut sample_violations = 0;
    let mut worst: f64 = f64::NEG_INFINITY;
    for s in 0..20 {
        let preset = Preset::ALL[s as usize % Preset::ALL.len()];
        let ds = sample(&preset.build(5).unwrap(), 200, stream_seed(707, s)).unwrap();
        let m = LinearMoments::new(&ds);
        let r: Vec<f64> = subsets.iter().map(|p| m.reward(p, 0.0).unwrap()).collect();
        for (i, p) in subsets.iter().enumerate() {
            for (k, q) in subsets.iter().enumerate() {
                if p.is_subset_of(q) {
                    worst = worst.max(r[i] - r[k]);
                    sample_violations += usize::from(r[i] > r[k] + 1e-10);
                }
            }
        }
    }
    outcome(
        violations == 0 && sample_violations == 0,
        format!(
            "population: {violations} violations over {pairs} nested pairs; in-sample: {sample_violations} violations over 20 datasets (max decrease {worst:.1e})"
        ),
    )
}

fn rule_dominance() -> Outcome {
    let mut checks = 0;
    let mut failures = Vec::new();
    for s in 0..10u64 {
        let preset = Preset::ALL[s as usize % Preset::ALL.len()];
        let ds = sample(&preset.build(8).unwrap(), 500, stream_seed(808, s)).unwrap();
        for lambda in [0.0, 1.0] {
            let eval = LinearEvaluator::new(&ds, lambda).unwrap();
            for n_sel in 1..=3 {
                let r = |p: &Subset| eval.reward(p).unwrap();
                let b = r(&select_bruteforce(&eval, n_sel).unwrap().subset);
                let g = r(&select_greedy(&eval, n_sel).unwrap().subset);
                let o = r(&select_singleton_with(&eval, n_sel).unwrap().subset);
                checks += 1;
                if !(b + 1e-12 >= g && g + 1e-12 >= o) {
                    failures.push(format!("{preset} seed {s} lambda {lambda} budget {n_sel}: {b} / {g} / {o}"));
                }
            }
        }
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("bruteforce >= greedy >= singleton in {checks}/{checks} cases")
        } else {
            failures.join("; ")
        },
    )
}

fn end_to_end() -> Outcome {
    let data = DataSource {
        preset: Some("single-informative".into()),
        aspects: Some(10),
        n: Some(4000),
        ..DataSource::default()
    };
    let cfg = PipelineConfig::new(RuleId::SingletonLinear, 1, 909, data);
    let report = run_pipeline(&cfg, false).unwrap();
    let agg = &report.aggregate;
    let (a, r, h) = (agg.a_only.mae.mean, agg.rule.mae.mean, agg.h_only.mae.mean);
    outcome(
        report.complete && a > r && r <= 1.05 * h,
        format!("mean test MAE over {} splits: A-only {a:.4}, singleton-linear {r:.4}, H-only {h:.4}", agg.completed_splits),
    )
}

fn argmax_invariance() -> Outcome {
    let cfg = RuleConfig {
        lambda_reward: 0.0,
        agreement_proxy: true,
        ..RuleConfig::default()
    };
    let mut changed = Vec::new();
    for s in 0..10u64 {
        let preset = Preset::ALL[s as usize % Preset::ALL.len()];
        let ds = sample(&preset.build(6).unwrap(), 600, stream_seed(1010, s)).unwrap();
        let moved = ds.with_target(ds.y().map(|v| 2.0 * v + 3.0)).unwrap();
        for rule in RuleId::ALL {
            for n_sel in 1..=3 {
                let a = fit_rule(rule, &ds, n_sel, &cfg).unwrap().select_rows(&ds).unwrap();
                let b = fit_rule(rule, &moved, n_sel, &cfg).unwrap().select_rows(&moved).unwrap();
                if a != b {
                    changed.push(format!("{rule} budget {n_sel} seed {s}"));
                }
            }
        }
    }
    outcome(
        changed.is_empty(),
        if changed.is_empty() {
            "selections unchanged for all 7 rules, budgets 1-3, 10 datasets".to_string()
        } else {
            format!("changed: {}", changed.join(", "))
        },
    )
}

fn determinism() -> Outcome {
    let data = DataSource {
        preset: Some("heteroskedastic".into()),
        aspects: Some(6),
        n: Some(600),
        ..DataSource::default()
    };
    let cfg = PipelineConfig {
        n_splits: 4,
        ..PipelineConfig::new(RuleId::SingletonNpAdaptive, 2, 1111, data)
    };
    let a = run_pipeline(&cfg, false).unwrap().to_json().unwrap();
    let b = run_pipeline(&cfg, false).unwrap().to_json().unwrap();
    outcome(a == b, format!("two reports of {} bytes identical: {}", a.len(), a == b))
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, Check, Option<Duration>); 10] = [
        (1, "linear-reward consistency", linear_consistency, Some(Duration::from_secs(60))),
        (2, "second-order bias", second_order_bias, Some(Duration::from_secs(300))),
        (3, "estimator agreement", estimator_agreement, None),
        (4, "delta-method coverage", coverage, Some(Duration::from_secs(600))),
        (5, "gamma invariance", gamma_invariance, None),
        (6, "monotonicity", monotonicity, None),
        (7, "rule dominance", rule_dominance, None),
        (8, "end-to-end dominance", end_to_end, Some(Duration::from_secs(120))),
        (9, "argmax invariance", argmax_invariance, None),
        (10, "determinism", determinism, None),
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, check, limit) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let mut out = check();
        let elapsed = start.elapsed();
        if let Some(limit) = limit {
            if elapsed > limit {
                out.pass = false;
                out.detail.push_str(&format!("; exceeded {}s limit", limit.as_secs()));
            }
        }
        failed += usize::from(!out.pass);
        println!(
            "[{}] {id:>2} {name}: {} ({:.1}s)",
            if out.pass { "PASS" } else { "FAIL" },
            out.detail,
            elapsed.as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
