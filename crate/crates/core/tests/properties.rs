mod common;

use common::{backward_elimination, random_instance};
use proptest::prelude::*;
use see_core::{
    cdf_iteration, exact_removable, extract_zone, horizon_iteration, maximum_feasible_zone, true_model_baseline,
    Explorer, FeasibleZone, LipschitzSpec, ModelUpdate, OracleLimits, Pruner, RunStatus, UncertainModel, Witnesses,
};

const LIMITS: OracleLimits = OracleLimits {
    max_pairs: 24,
    max_candidates: 4,
};

fn pruner(l: f64, witnesses: Witnesses) -> Pruner {
    Pruner {
        witnesses,
        ..Pruner::new(LipschitzSpec::joint(l))
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn zone_equals_backward_elimination(seed in any::<u64>()) {
        let inst = random_instance(seed, 8, 3, 4);
        let zone = extract_zone(&horizon_iteration(&inst.model, &inst.system));
        prop_assert_eq!(&zone, &backward_elimination(&inst.model, &inst.system));
        prop_assert!(zone.check_feasible(&inst.model, &inst.system).is_ok());
    }

    #[test]
    fn calibrated_zone_is_within_the_true_zone(seed in any::<u64>()) {
        let inst = random_instance(seed, 8, 3, 4);
        let zone = maximum_feasible_zone(&inst.model, &inst.system).unwrap();
        prop_assert!(zone.is_subset_of(&true_model_baseline(&inst.system)));
    }

    #[test]
    fn zone_does_not_depend_on_gamma(seed in any::<u64>()) {
        let inst = random_instance(seed, 8, 3, 4);
        let zone = extract_zone(&horizon_iteration(&inst.model, &inst.system));
        for gamma in [0.5, 0.9, 0.99] {
            let g = cdf_iteration(&inst.model, &inst.system, gamma);
            let mask: Vec<bool> = g.iter().map(|&v| v == 0.0).collect();
            prop_assert_eq!(&FeasibleZone::from_mask(mask, inst.system.num_actions()), &zone);
        }
    }

    #[test]
    fn smaller_models_have_larger_zones(seed in any::<u64>(), keep in 0usize..4) {
        let inst = random_instance(seed, 8, 3, 4);
        let mut smaller = inst.model.clone();
        for p in 0..smaller.num_pairs() {
            let truth = inst.system.successor(p);
            let mut set: Vec<_> = inst.model.set(p).iter().copied().filter(|&s| s != truth).take(keep).collect();
            set.push(truth);
            smaller.set_candidates(p, set);
        }
        let big = maximum_feasible_zone(&inst.model, &inst.system).unwrap();
        let small = maximum_feasible_zone(&smaller, &inst.system).unwrap();
        prop_assert!(big.is_subset_of(&small));
    }

    #[test]
    fn pruning_removes_only_exactly_removable_vertices(seed in any::<u64>(), l in 0.3f64..3.0) {
        let inst = random_instance(seed, 8, 3, 4);
        let zone = maximum_feasible_zone(&inst.model, &inst.system).unwrap();
        let collapsed = inst.model.collapse_known_with(&zone, &inst.system);
        for witnesses in [Witnesses::All, Witnesses::Data] {
            let Ok(out) = pruner(l, witnesses).prune(&collapsed, &zone, &inst.system) else { continue };
            for r in &out.removals {
                prop_assert!(exact_removable(&collapsed, r.vertex, &inst.system, &LipschitzSpec::joint(l), &LIMITS).unwrap());
            }
        }
    }

    #[test]
    fn truth_survives_at_the_measured_slope(seed in any::<u64>()) {
        let inst = random_instance(seed, 8, 3, 4);
        let l = inst.system.max_slope().max(0.1);
        let zone = maximum_feasible_zone(&inst.model, &inst.system).unwrap();
        let collapsed = inst.model.collapse_known_with(&zone, &inst.system);
        for witnesses in [Witnesses::All, Witnesses::Data] {
            let out = pruner(l, witnesses).prune(&collapsed, &zone, &inst.system).unwrap();
            prop_assert!(out.model.check_well_calibrated(&inst.system).0);
            prop_assert!(out.model.is_subset_of(&collapsed));
        }
    }

    #[test]
    fn exploration_is_monotone(seed in any::<u64>(), all in any::<bool>()) {
        let inst = random_instance(seed, 8, 3, 4);
        let l = inst.system.max_slope().max(0.1);
        let witnesses = if all { Witnesses::All } else { Witnesses::Data };
        let explorer = Explorer::new(&inst.system, ModelUpdate::Approximate(pruner(l, witnesses)));
        let mut seen: Vec<(FeasibleZone, UncertainModel)> = Vec::new();
        let run = explorer
            .run(&inst.model, |v| {
                seen.push((v.zone.clone(), v.model.clone()));
                Ok(())
            })
            .unwrap();
        prop_assert_eq!(run.violations, 0);
        let mut prev: Option<&(FeasibleZone, UncertainModel)> = None;
        for cur in &seen {
            prop_assert!(cur.1.check_well_calibrated(&inst.system).0);
            prop_assert!(cur.0.check_feasible(&cur.1, &inst.system).is_ok());
            if let Some(p) = prev {
                prop_assert!(p.0.is_subset_of(&cur.0));
                prop_assert!(cur.1.is_subset_of(&p.1));
                prop_assert!(cur.0.check_feasible(&p.1, &inst.system).is_ok());
            }
            prev = Some(cur);
        }
        if run.status == RunStatus::Equilibrium {
            let zone = maximum_feasible_zone(&run.final_model, &inst.system).unwrap();
            prop_assert_eq!(&zone, &run.final_zone);
            let again = pruner(l, witnesses)
                .prune(&run.final_model.collapse_known_with(&zone, &inst.system), &zone, &inst.system)
                .unwrap();
            prop_assert_eq!(&again.model, &run.final_model);
        }
        for (p, &q) in run.queried.iter().enumerate() {
            if q {
                prop_assert!(seen.iter().any(|(z, _)| z.contains(p)));
            }
        }
    }
}
