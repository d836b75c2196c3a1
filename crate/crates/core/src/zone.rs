//! Worst-case time-to-violation fields and feasible zones.
//!
//! The optimal constraint decay function is `G*(x,u) = gamma^N*(x,u)`, where
//! `N*` is the number of steps until the constraint is violated when the
//! adversary picks successors from the transition sets and the controller
//! picks actions. Its zero-level set (`N* = inf`) is the maximum feasible
//! zone. `N*` is computed exactly over the integers; `G` is only a view.
//!
//! ```text
//! N*(x,u) = 0                                           if c(x) = 1
//! N*(x,u) = 1 + min_{x' in f^(x,u)} max_{u'} N*(x',u')   otherwise
//! ```

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SeeError};
use crate::model::UncertainModel;
use crate::system::{ActionRef, DiscreteSystem, StateRef, Successor};

const INF: u32 = u32::MAX;

/// Worst-case minimum time to violation per pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HorizonField {
    values: Vec<u32>,
    num_actions: usize,
    sweeps: usize,
}

impl HorizonField {
    /// `None` stands for an infinite horizon.
    pub fn get(&self, pair: usize) -> Option<u32> {
        match self.values[pair] {
            INF => None,
            v => Some(v),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Number of synchronous sweeps until the field stopped changing.
    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    /// `G = gamma^N`, zero for infinite horizons.
    pub fn cdf(&self, gamma: f64) -> Vec<f64> {
        self.values
            .iter()
            .map(|&v| if v == INF { 0.0 } else { gamma.powi(v as i32) })
            .collect()
    }

    /// One more application of the recursion leaves every entry unchanged.
    pub fn is_fixed_point(&self, model: &UncertainModel, system: &DiscreteSystem) -> bool {
        sweep(&self.values, model, system) == self.values
    }
}

fn state_values(values: &[u32], num_states: usize, num_actions: usize) -> Vec<u32> {
    (0..num_states)
        .map(|s| values[s * num_actions..(s + 1) * num_actions].iter().copied().max().unwrap_or(0))
        .collect()
}

fn sweep(values: &[u32], model: &UncertainModel, system: &DiscreteSystem) -> Vec<u32> {
    let na = system.num_actions();
    let best = state_values(values, system.num_states(), na);
    (0..values.len())
        .into_par_iter()
        .map(|p| {
            let (s, _) = system.pair_parts(p);
            if system.is_unsafe(s) {
                return 0;
            }
            let worst = model
                .set(p)
                .iter()
                .map(|c| c.pos().map_or(0, |q| best[q]))
                .min()
                .unwrap_or(0);
            worst.saturating_add(1)
        })
        .collect()
}

/// Synchronous fixed-point sweeps of the integer recursion, starting from
/// `0` on violating states and `inf` elsewhere; entries only decrease.
pub fn horizon_iteration(model: &UncertainModel, system: &DiscreteSystem) -> HorizonField {
    assert_eq!(model.num_pairs(), system.num_pairs(), "model does not cover the system");
    let na = system.num_actions();
    let mut values: Vec<u32> = (0..system.num_pairs())
        .map(|p| if system.is_unsafe(p / na) { 0 } else { INF })
        .collect();
    let mut sweeps = 0;
    loop {
        let next = sweep(&values, model, system);
        sweeps += 1;
        if next == values {
            break;
        }
        values = next;
    }
    HorizonField {
        values,
        num_actions: na,
        sweeps,
    }
}

/// Floating constraint decay function iterated from `G_0 = c`; this is the
/// direct form of the risky Bellman operator, kept for cross-checks.
pub fn cdf_iteration(model: &UncertainModel, system: &DiscreteSystem, gamma: f64) -> Vec<f64> {
    let na = system.num_actions();
    let ns = system.num_states();
    let cost = |s: usize| if system.is_unsafe(s) { 1.0 } else { 0.0 };
    let mut g: Vec<f64> = (0..system.num_pairs()).map(|p| cost(p / na)).collect();
    loop {
        let best: Vec<f64> = (0..ns)
            .map(|s| g[s * na..(s + 1) * na].iter().copied().fold(f64::INFINITY, f64::min))
            .collect();
        let next: Vec<f64> = (0..g.len())
            .map(|p| {
                let c = cost(p / na);
                let worst = model
                    .set(p)
                    .iter()
                    .map(|x| x.pos().map_or(1.0, |q| best[q]))
                    .fold(f64::NEG_INFINITY, f64::max);
                c + (1.0 - c) * gamma * worst
            })
            .collect();
        if next == g {
            return g;
        }
        g = next;
    }
}

/// Boolean mask over dense pair indices with its projection onto states.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeasibleZone {
    mask: Vec<bool>,
    num_actions: usize,
    states: Vec<bool>,
}

impl FeasibleZone {
    pub fn from_mask(mask: Vec<bool>, num_actions: usize) -> Self {
        assert!(num_actions > 0 && mask.len().is_multiple_of(num_actions), "mask shape");
        let states = mask.chunks(num_actions).map(|c| c.iter().any(|&b| b)).collect();
        Self {
            mask,
            num_actions,
            states,
        }
    }

    pub fn empty(system: &DiscreteSystem) -> Self {
        Self::from_mask(vec![false; system.num_pairs()], system.num_actions())
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn contains(&self, pair: usize) -> bool {
        self.mask[pair]
    }

    pub fn pairs(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter(|(_, &b)| b).map(|(p, _)| p)
    }

    /// Number of pairs in the zone.
    pub fn len(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&b| b)
    }

    /// Projection onto states (the feasible region).
    pub fn region(&self) -> &[bool] {
        &self.states
    }

    pub fn state_in_region(&self, state: usize) -> bool {
        self.states[state]
    }

    pub fn succ_in_region(&self, succ: Successor) -> bool {
        succ.pos().is_some_and(|q| self.states[q])
    }

    pub fn is_subset_of(&self, other: &FeasibleZone) -> bool {
        self.mask.len() == other.mask.len() && self.mask.iter().zip(&other.mask).all(|(&a, &b)| !a || b)
    }

    /// Pairs in `self` but not in `prev`.
    pub fn added_since(&self, prev: &FeasibleZone) -> usize {
        self.mask.iter().zip(&prev.mask).filter(|(&a, &b)| a && !b).count()
    }

    /// Checks that every state of the zone satisfies the constraint and that
    /// every candidate successor of every zone pair stays in the region.
    pub fn check_feasible(&self, model: &UncertainModel, system: &DiscreteSystem) -> Result<()> {
        for p in self.pairs() {
            let (s, a) = system.pair_parts(p);
            if system.is_unsafe(s) {
                return Err(SeeError::InfeasibleZone(format!(
                    "state {:?} violates the constraint",
                    system.states()[s]
                )));
            }
            if let Some(bad) = model.set(p).iter().find(|&&c| !self.succ_in_region(c)) {
                return Err(SeeError::InfeasibleZone(format!(
                    "pair x={:?} u={:?} can reach {:?} outside the region",
                    system.states()[s],
                    system.actions()[a],
                    system.state_ref(*bad)
                )));
            }
        }
        Ok(())
    }

    /// Feasible action positions of a state position.
    pub fn feasible_action_positions(&self, state: usize) -> Vec<usize> {
        (0..self.num_actions)
            .filter(|&a| self.mask[state * self.num_actions + a])
            .collect()
    }
}

/// Pairs with an infinite horizon.
pub fn extract_zone(field: &HorizonField) -> FeasibleZone {
    FeasibleZone::from_mask(field.values.iter().map(|&v| v == INF).collect(), field.num_actions)
}

/// Maximum feasible zone under a model, with both feasibility properties checked.
pub fn maximum_feasible_zone(model: &UncertainModel, system: &DiscreteSystem) -> Result<FeasibleZone> {
    let zone = extract_zone(&horizon_iteration(model, system));
    zone.check_feasible(model, system)?;
    Ok(zone)
}

/// Maximum feasible zone under the true model.
pub fn true_model_baseline(system: &DiscreteSystem) -> FeasibleZone {
    let exact = UncertainModel::exact(system);
    extract_zone(&horizon_iteration(&exact, system))
}

/// `100 * |explored| / |baseline|` over pair counts.
pub fn recall_metric(explored: &FeasibleZone, baseline: &FeasibleZone) -> Result<f64> {
    let base = baseline.len();
    if base == 0 {
        return Err(SeeError::EmptyBaseline);
    }
    Ok(100.0 * explored.len() as f64 / base as f64)
}

/// `{u : (x,u) in zone}`; empty for the sentinel and unknown states.
pub fn feasible_actions(zone: &FeasibleZone, system: &DiscreteSystem, x: &StateRef) -> Vec<ActionRef> {
    let StateRef::InGrid(v) = x else { return Vec::new() };
    let Some(s) = system.state_pos(v) else { return Vec::new() };
    zone.feasible_action_positions(s)
        .into_iter()
        .map(|a| ActionRef(system.actions()[a].clone()))
        .collect()
}

/// Serializable summary of a zone's size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZoneStats {
    pub pairs: usize,
    pub states: usize,
}

impl From<&FeasibleZone> for ZoneStats {
    fn from(z: &FeasibleZone) -> Self {
        Self {
            pairs: z.len(),
            states: z.region().iter().filter(|&&b| b).count(),
        }
    }
}
