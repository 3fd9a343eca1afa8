use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use super::*;
use crate::dgp::{oracle_reward, sample, DgpSpec, Preset};
use crate::reward_np::{reward_adaptive, PseudoOutcomes, SecondStage};

struct OracleEvaluator(DgpSpec);

impl RewardEvaluator for OracleEvaluator {
    fn aspects(&self) -> usize {
        self.0.aspects()
    }

    fn reward(&self, pi: &Subset) -> Result<f64> {
        oracle_reward(&self.0, pi)
    }

    fn describe(&self) -> String {
        "population".into()
    }
}

fn s(v: &[usize], j: usize) -> Subset {
    Subset::new(v.to_vec(), j).unwrap()
}

fn table(j: usize, entries: &[(&[usize], f64)], default: f64) -> TableEvaluator {
    TableEvaluator::new(j, entries.iter().map(|(k, v)| (s(k, j), *v)).collect(), Some(default))
}

#[test]
fn bruteforce_hand_table() {
    let t = table(3, &[(&[], 0.0), (&[0], 1.0), (&[1], 2.0), (&[2], 2.0), (&[1, 2], 5.0)], 3.0);
    let r = select_bruteforce(&t, 2).unwrap();
    assert_eq!(r.subset, s(&[1, 2], 3));
    assert_eq!(r.trace[0].candidates.len(), 3);
    assert!(!r.tie_break_applied);
    let single = select_bruteforce(&t, 1).unwrap();
    assert_eq!(single.subset, s(&[1], 3));
    assert!(single.tie_break_applied);
}

#[test]
fn bruteforce_saturates_on_monotone_rewards() {
    let spec = Preset::Symmetric.build(5).unwrap();
    assert_eq!(select_bruteforce(&OracleEvaluator(spec), 5).unwrap().subset, Subset::full(5));
}

#[test]
fn bruteforce_guard() {
    let t = TableEvaluator::new(21, BTreeMap::new(), Some(0.0));
    assert!(matches!(select_bruteforce(&t, 1), Err(Error::GuardLimit { .. })));
}

#[test]
fn singleton_ranking() {
    assert_eq!(select_singleton(&[0.1, 0.9, 0.5], 2).unwrap().subset, s(&[1, 2], 3));
    let flat = select_singleton(&[0.3; 4], 2).unwrap();
    assert_eq!(flat.subset, s(&[0, 1], 4));
    assert!(flat.tie_break_applied);
    assert_eq!(select_singleton(&[1.0, 2.0], 5).unwrap().subset, Subset::full(2));
}

#[test]
fn greedy_on_modular_rewards_matches_bruteforce() {
    let t = TableEvaluator::modular(&[0.3, 1.2, -0.4, 0.8, 0.1]);
    for k in 0..=5 {
        assert_eq!(select_greedy(&t, k).unwrap().subset, select_bruteforce(&t, k).unwrap().subset);
    }
}

#[test]
fn greedy_first_pick_is_best_singleton() {
    let rewards = [0.4, 0.7, 0.7, 0.1];
    let entries: Vec<(Subset, f64)> = rewards.iter().enumerate().map(|(i, r)| (Subset::singleton(i), *r)).collect();
    let t = TableEvaluator::new(4, entries.into_iter().collect(), Some(0.0));
    let g = select_greedy(&t, 1).unwrap();
    assert_eq!(g.subset, select_singleton(&rewards, 1).unwrap().subset);
    assert_eq!(g.subset, Subset::singleton(1));
}

#[test]
fn greedy_misses_complementary_pair() {
    let t = table(
        3,
        &[(&[0], 3.0), (&[1], 2.0), (&[2], 2.0), (&[0, 1], 3.5), (&[0, 2], 3.5), (&[1, 2], 6.0)],
        0.0,
    );
    let g = select_greedy(&t, 2).unwrap();
    let b = select_bruteforce(&t, 2).unwrap();
    assert_eq!(g.subset, s(&[0, 1], 3));
    assert_eq!(b.subset, s(&[1, 2], 3));
    // Enumeration: max over the three pairs is 6, greedy's pair scores 3.5.
    let gap = t.reward(&b.subset).unwrap() - t.reward(&g.subset).unwrap();
    assert_eq!(gap, 2.5);
    assert_eq!(g.trace.len(), 2);
    assert_eq!(g.trace[0].candidates.len(), 3);
    assert_eq!(g.trace[1].candidates.len(), 2);
}

#[test]
fn planted_pair_defeats_greedy_in_population() {
    let spec = Preset::PlantedPair.build(10).unwrap();
    let eval = OracleEvaluator(spec);
    let b = select_bruteforce(&eval, 2).unwrap();
    let g = select_greedy(&eval, 2).unwrap();
    assert_eq!(b.subset, Preset::planted_pair(10));
    assert_ne!(g.subset, b.subset);
}

#[test]
fn planted_pair_recovered_from_samples() {
    let spec = Preset::PlantedPair.build(10).unwrap();
    for seed in 0..3 {
        let ds = sample(&spec, 5000, seed).unwrap();
        let r = select_bruteforce(&LinearEvaluator::new(&ds, 0.0).unwrap(), 2).unwrap();
        assert_eq!(r.subset, Preset::planted_pair(10));
    }
}

fn single_informative_at(j: usize, informative: usize) -> DgpSpec {
    let mut spec = Preset::SingleInformative.build(j).unwrap();
    spec.beta = vec![0.0; j];
    spec.beta[informative] = 2.0;
    spec.gamma = vec![0.3; j];
    spec
}

#[test]
fn importance_finds_informative_block() {
    let spec = single_informative_at(5, 3);
    let ds = sample(&spec, 5000, 1).unwrap();
    let r = select_importance(&ds, 1, 0.0).unwrap();
    assert_eq!(r.subset, Subset::singleton(3));
}

#[test]
fn importance_of_copied_signals_is_zero() {
    let spec = Preset::Symmetric.build(3).unwrap();
    let ds = sample(&spec, 200, 1).unwrap();
    let copy = Dataset::new(ds.a().clone(), ds.a().clone(), ds.y().clone(), ds.blocks().clone(), None, None).unwrap();
    let scores = importance_scores(&copy, 0.0).unwrap();
    assert!(scores.iter().all(|&v| v == 0.0));
    assert_eq!(select_importance(&copy, 2, 0.0).unwrap().subset, s(&[0, 1], 3));
}

#[test]
fn importance_scales_with_target() {
    let spec = Preset::Symmetric.build(4).unwrap();
    let ds = sample(&spec, 500, 2).unwrap();
    let scaled = ds.with_target(ds.y() * 3.0).unwrap();
    let a = importance_scores(&ds, 0.0).unwrap();
    let b = importance_scores(&scaled, 0.0).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_close!(*y, 3.0 * x, 1e-9);
    }
    assert_eq!(
        select_importance(&ds, 2, 0.0).unwrap().subset,
        select_importance(&scaled, 2, 0.0).unwrap().subset
    );
}

fn with_agreement(ds: &Dataset, f: impl Fn(usize, usize) -> f64) -> Dataset {
    let j = ds.aspects();
    ds.with_agreement(DMatrix::from_fn(ds.n(), 2 * j, f)).unwrap()
}

#[test]
fn agreement_perfect_falls_back_to_index_order() {
    let ds = sample(&Preset::Symmetric.build(4).unwrap(), 100, 1).unwrap();
    let ds = with_agreement(&ds, |_, _| 1.0);
    let r = select_agreement(&ds, 2, 1.0, false).unwrap();
    assert_eq!(r.subset, s(&[0, 1], 4));
}

#[test]
fn agreement_prefers_disagreeing_aspect() {
    let ds = sample(&Preset::Symmetric.build(4).unwrap(), 100, 1).unwrap();
    let ds = with_agreement(&ds, |_, c| if c == 2 * 2 + 1 { 0.0 } else { 1.0 });
    assert_eq!(select_agreement(&ds, 1, 1.0, false).unwrap().subset, Subset::singleton(2));
}

#[test]
fn agreement_mask_demotes_irrelevant_aspects() {
    let ds = sample(&Preset::Symmetric.build(3).unwrap(), 100, 1).unwrap();
    // Aspect 0 disagrees most but is irrelevant.
    let ds = with_agreement(&ds, |_, c| match c {
        0 => 0.0,
        1 => 0.0,
        3 => 0.5,
        _ => 1.0,
    });
    let r = select_agreement(&ds, 2, 1.0, false).unwrap();
    assert_eq!(r.subset, s(&[1, 2], 3));
    assert!(r.notes[0].contains("[0]"));
}

#[test]
fn agreement_requires_columns_or_proxy() {
    let ds = sample(&Preset::Symmetric.build(3).unwrap(), 100, 1).unwrap();
    assert!(select_agreement(&ds, 1, 1.0, false).is_err());
    assert!(select_agreement(&ds, 1, 1.0, true).is_ok());
}

#[test]
fn agreement_proxy_finds_biased_aspect() {
    let spec = Preset::BiasedAi.build(5).unwrap();
    let ds = sample(&spec, 5000, 3).unwrap();
    assert_eq!(select_agreement(&ds, 1, 1.0, true).unwrap().subset, Subset::singleton(4));
}

fn constant_estimate(pi: Subset, value: f64) -> RewardEstimate {
    let phi = PseudoOutcomes {
        values: DVector::from_element(4, value),
        folds: None,
        lambda: None,
    };
    let z = DMatrix::from_row_slice(4, 1, &[0.0, 1.0, 2.0, 3.0]);
    reward_adaptive(&phi, &z, SecondStage::Ridge { lambda: 1.0 }, &pi).unwrap()
}

fn linear_estimate(pi: Subset, intercept: f64, slope: f64) -> RewardEstimate {
    let z = DMatrix::from_row_slice(4, 1, &[0.0, 1.0, 2.0, 3.0]);
    let phi = PseudoOutcomes {
        values: DVector::from_iterator(4, (0..4).map(|r| intercept + slope * r as f64)),
        folds: None,
        lambda: None,
    };
    reward_adaptive(&phi, &z, SecondStage::Ridge { lambda: 0.0 }, &pi).unwrap()
}

#[test]
fn adaptive_with_constant_functions_is_nonadaptive() {
    let values = [0.2, 0.9, 0.4];
    let funcs: BTreeMap<Subset, RewardEstimate> =
        (0..3).map(|j| (Subset::singleton(j), constant_estimate(Subset::singleton(j), values[j]))).collect();
    for z in [-5.0, 0.0, 7.0] {
        assert_eq!(select_adaptive(&[z], &funcs, 3, 1).unwrap().subset, Subset::singleton(1));
    }
}

#[test]
fn adaptive_follows_crossing_rewards() {
    // R_0(z) = 1 + z, R_1(z) = 3 − z cross at z = 1.
    let funcs: BTreeMap<Subset, RewardEstimate> = [
        (Subset::singleton(0), linear_estimate(Subset::singleton(0), 1.0, 1.0)),
        (Subset::singleton(1), linear_estimate(Subset::singleton(1), 3.0, -1.0)),
    ]
    .into_iter()
    .collect();
    let crossing = funcs[&Subset::singleton(0)].eval(&[1.0]).unwrap() - funcs[&Subset::singleton(1)].eval(&[1.0]).unwrap();
    assert_close!(crossing, 0.0, 1e-8);
    assert_eq!(select_adaptive(&[0.5], &funcs, 2, 1).unwrap().subset, Subset::singleton(1));
    assert_eq!(select_adaptive(&[1.5], &funcs, 2, 1).unwrap().subset, Subset::singleton(0));
}

#[test]
fn adaptive_single_candidate_and_missing() {
    let funcs: BTreeMap<Subset, RewardEstimate> =
        [(Subset::full(2), linear_estimate(Subset::full(2), 0.0, 1.0))].into_iter().collect();
    for z in [-3.0, 4.0] {
        assert_eq!(select_adaptive(&[z], &funcs, 2, 2).unwrap().subset, Subset::full(2));
    }
    assert!(matches!(select_adaptive(&[0.0], &funcs, 2, 1), Err(Error::MissingCandidate(_))));
}

#[test]
fn fitted_rules_have_exact_size_and_are_deterministic() {
    let spec = Preset::BiasedAi.build(5).unwrap();
    let ds = sample(&spec, 300, 4).unwrap();
    let cfg = RuleConfig {
        agreement_proxy: true,
        ..RuleConfig::default()
    };
    for rule in RuleId::ALL {
        for n_sel in [0, 1, 3, 5, 7] {
            let a = fit_rule(rule, &ds, n_sel, &cfg).unwrap();
            let b = fit_rule(rule, &ds, n_sel, &cfg).unwrap();
            let sa = a.select_rows(&ds).unwrap();
            assert_eq!(sa, b.select_rows(&ds).unwrap());
            assert!(sa.iter().all(|p| p.len() == n_sel.min(5)), "{rule} {n_sel}");
            assert_eq!(a.is_adaptive(), matches!(rule, RuleId::SingletonNpAdaptive | RuleId::Agreement));
        }
    }
}

#[test]
fn rule_names_round_trip() {
    for r in RuleId::ALL {
        assert_eq!(r.name().parse::<RuleId>().unwrap(), r);
        assert_eq!(serde_json::to_string(&r).unwrap(), format!("\"{}\"", r.name()));
    }
}

proptest! {
    #[test]
    fn bruteforce_dominates_greedy_on_random_tables(
        j in 1usize..6,
        n_sel in 0usize..7,
        vals in proptest::collection::vec(-5.0f64..5.0, 64),
    ) {
        let entries: BTreeMap<Subset, f64> = Subset::all_up_to(j, j)
            .into_iter()
            .enumerate()
            .map(|(i, p)| (p, vals[i % vals.len()]))
            .collect();
        let t = TableEvaluator::new(j, entries, None);
        let b = select_bruteforce(&t, n_sel).unwrap();
        let g = select_greedy(&t, n_sel).unwrap();
        prop_assert_eq!(b.subset.len(), n_sel.min(j));
        prop_assert_eq!(g.subset.len(), n_sel.min(j));
        prop_assert!(t.reward(&b.subset).unwrap() >= t.reward(&g.subset).unwrap());
        prop_assert_eq!(select_bruteforce(&t, n_sel).unwrap(), b);
    }
}
