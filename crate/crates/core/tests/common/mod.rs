//! Random tabulated systems and brute-force references shared by the
//! property and acceptance suites.

#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use see_core::{DiscreteSystem, FeasibleZone, Successor, SystemTable, UncertainModel};

pub struct Instance {
    pub system: DiscreteSystem,
    /// Well-calibrated model with at most `max_set` candidates per pair.
    pub model: UncertainModel,
}

/// A random table with up to `max_states` states on a small 2-D lattice,
/// up to `max_actions` actions, some unsafe states and some transitions
/// that leave the table.
pub fn random_instance(seed: u64, max_states: usize, max_actions: usize, max_set: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=max_states);
    let m = rng.gen_range(1..=max_actions);
    let mut cells: Vec<Vec<i32>> = (-3..=3).flat_map(|a| (-3..=3).map(move |b| vec![a, b])).collect();
    cells.shuffle(&mut rng);
    let states: Vec<Vec<i32>> = cells[..n].to_vec();
    let mut acts: Vec<i32> = (-2..=2).collect();
    acts.shuffle(&mut rng);
    let actions: Vec<Vec<i32>> = acts[..m].iter().map(|&a| vec![a]).collect();
    let mut transitions = Vec::new();
    for s in 0..n as i64 {
        for a in 0..m as i64 {
            let next = if rng.gen_bool(0.15) { -1 } else { rng.gen_range(0..n as i64) };
            transitions.push([s, a, next]);
        }
    }
    let unsafe_states: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.2)).collect();
    let table = SystemTable {
        states,
        actions,
        transitions,
        unsafe_states,
    };
    let system = DiscreteSystem::from_table(&table).expect("valid random table");
    let sets = (0..system.num_pairs())
        .map(|p| {
            let mut set = vec![system.successor(p)];
            let size = rng.gen_range(1..=max_set.min(n + 1));
            while set.len() < size {
                let extra = if rng.gen_bool(0.1) {
                    Successor::OUT_OF_BOUNDS
                } else {
                    Successor::state(rng.gen_range(0..n))
                };
                if !set.contains(&extra) {
                    set.push(extra);
                }
            }
            set
        })
        .collect();
    let model = UncertainModel::from_sets(sets, system.num_actions()).expect("non-empty sets");
    Instance { system, model }
}

/// Largest invariant set by repeated elimination: drop pairs on unsafe
/// states or with a successor outside the states that still have a pair.
pub fn backward_elimination(model: &UncertainModel, system: &DiscreteSystem) -> FeasibleZone {
    let na = system.num_actions();
    let mut keep: Vec<bool> = (0..system.num_pairs()).map(|p| !system.is_unsafe(p / na)).collect();
    loop {
        let region: Vec<bool> = (0..system.num_states())
            .map(|s| keep[s * na..(s + 1) * na].iter().any(|&k| k))
            .collect();
        let mut changed = false;
        for p in 0..keep.len() {
            if keep[p] && model.set(p).iter().any(|s| s.pos().is_none_or(|q| !region[q])) {
                keep[p] = false;
                changed = true;
            }
        }
        if !changed {
            return FeasibleZone::from_mask(keep, na);
        }
    }
}
