//! Set-valued uncertain transition models.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SeeError};
use crate::system::{DiscreteSystem, Successor};
use crate::zone::FeasibleZone;

/// How initial balls treat points outside the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OobPolicy {
    /// Off-grid ball points stay in the set as individual lattice points,
    /// all violating. Falls back to the sentinel where the system has no
    /// off-grid lattice.
    Lattice,
    /// Balls are clipped to the grid; the sentinel is added only when the
    /// true successor itself leaves the grid.
    TruthOutside,
    /// Whenever the ball reaches past the grid, or the truth leaves it.
    BallCrossesBoundary,
}

/// Parameters of the initial ball model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialModelSpec {
    /// Ball radius around the true successor, in index units.
    pub r0: f64,
    /// State radius of the known region around the origin.
    pub rx: f64,
    /// Action radius of the known region around the origin.
    pub ru: f64,
    pub known_region: bool,
    pub oob_policy: OobPolicy,
}

impl InitialModelSpec {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        for (name, v) in [("r0", self.r0), ("rx", self.rx), ("ru", self.ru)] {
            if !(v >= 0.0 && v.is_finite()) {
                errs.push(format!("{name} must be a finite value >= 0, got {v}"));
            }
        }
        errs
    }
}

/// Aggregation scope for the uncertainty degree `|set| - 1`.
#[derive(Debug, Clone, Copy)]
pub enum UdScope<'a> {
    Pair(usize),
    /// Sum over the actions of one state.
    State(usize),
    /// Mean over pairs inside the reference zone.
    Inside(&'a FeasibleZone),
    /// Mean over pairs outside the reference zone.
    Outside(&'a FeasibleZone),
}

/// Transition sets keyed by dense pair index; each set is sorted with the
/// sentinel last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UncertainModel {
    sets: Vec<Vec<Successor>>,
    known: Vec<bool>,
    num_actions: usize,
}

impl UncertainModel {
    /// Builds a model from explicit sets. Sets are sorted and deduplicated.
    pub fn from_sets(sets: Vec<Vec<Successor>>, num_actions: usize) -> Result<Self> {
        let mut sets = sets;
        if num_actions == 0 || !sets.len().is_multiple_of(num_actions) {
            return Err(SeeError::Shape(format!(
                "{} pairs cannot be split into {num_actions} actions per state",
                sets.len()
            )));
        }
        for (p, s) in sets.iter_mut().enumerate() {
            s.sort_unstable();
            s.dedup();
            if s.is_empty() {
                return Err(SeeError::Shape(format!("transition set of pair {p} is empty")));
            }
        }
        let known = vec![false; sets.len()];
        Ok(Self {
            sets,
            known,
            num_actions,
        })
    }

    /// The exact model: every set is the singleton true successor.
    pub fn exact(system: &DiscreteSystem) -> Self {
        let sets = (0..system.num_pairs()).map(|p| vec![system.successor(p)]).collect();
        Self {
            sets,
            known: vec![true; system.num_pairs()],
            num_actions: system.num_actions(),
        }
    }

    /// Ball of radius `r0` around each true successor, collapsed to the
    /// truth inside the known region around the origin.
    pub fn build_initial(system: &DiscreteSystem, spec: &InitialModelSpec) -> Self {
        let n = system.num_pairs();
        let mut sets = Vec::with_capacity(n);
        let mut known = Vec::with_capacity(n);
        let r0_sq = spec.r0 * spec.r0;
        let mut offsets = Vec::new();
        ball_offsets(system.state_dims(), spec.r0.floor() as i64, r0_sq, &mut Vec::new(), &mut offsets);
        let lattice = spec.oob_policy == OobPolicy::Lattice;
        for p in 0..n {
            let (s, a) = system.pair_parts(p);
            let mut truth = system.successor(p);
            if truth.is_off_grid() && !lattice {
                truth = Successor::OUT_OF_BOUNDS;
            }
            let in_known = spec.known_region
                && norm_sq(&system.states()[s]) as f64 <= spec.rx * spec.rx + 1e-9
                && norm_sq(&system.actions()[a]) as f64 <= spec.ru * spec.ru + 1e-9;
            if in_known {
                sets.push(vec![truth]);
                known.push(true);
                continue;
            }
            let mut set = Vec::with_capacity(offsets.len() + 1);
            let mut crosses = false;
            match system.raw_successor(p) {
                Some(center) => {
                    let mut point = vec![0i64; center.len()];
                    for off in &offsets {
                        for ((q, c), o) in point.iter_mut().zip(center).zip(off) {
                            *q = c + o;
                        }
                        let succ = system.lattice_successor(&point);
                        match succ.pos() {
                            Some(_) => set.push(succ),
                            None if lattice => set.push(succ),
                            None => crosses = true,
                        }
                    }
                }
                None => crosses = true,
            }
            let add_oob = truth.is_oob()
                || (spec.oob_policy == OobPolicy::BallCrossesBoundary && crosses)
                || set.is_empty();
            if add_oob {
                set.push(Successor::OUT_OF_BOUNDS);
            }
            set.sort_unstable();
            set.dedup();
            sets.push(set);
            known.push(false);
        }
        Self {
            sets,
            known,
            num_actions: system.num_actions(),
        }
    }

    pub fn num_pairs(&self) -> usize {
        self.sets.len()
    }

    pub fn set(&self, pair: usize) -> &[Successor] {
        &self.sets[pair]
    }

    pub fn sets(&self) -> &[Vec<Successor>] {
        &self.sets
    }

    pub fn is_known(&self, pair: usize) -> bool {
        self.known[pair]
    }

    /// Total number of candidate transitions (vertices of the model graph).
    pub fn candidate_count(&self) -> usize {
        self.sets.iter().map(Vec::len).sum()
    }

    /// Replaces one transition set; intended for tests and table loaders.
    pub fn set_candidates(&mut self, pair: usize, mut set: Vec<Successor>) {
        set.sort_unstable();
        set.dedup();
        self.sets[pair] = set;
    }

    /// Sets every pair in the zone to its observed true successor.
    /// `observe` is called exactly once per zone pair.
    pub fn collapse_known(&self, zone: &FeasibleZone, mut observe: impl FnMut(usize) -> Successor) -> Self {
        let mut out = self.clone();
        for p in zone.pairs() {
            let truth = observe(p);
            out.sets[p] = vec![truth];
            out.known[p] = true;
        }
        out
    }

    /// [`collapse_known`](Self::collapse_known) reading the truth directly from the system.
    pub fn collapse_known_with(&self, zone: &FeasibleZone, system: &DiscreteSystem) -> Self {
        self.collapse_known(zone, |p| system.successor(p))
    }

    pub(crate) fn remove(&mut self, pair: usize, succ: Successor) {
        self.sets[pair].retain(|&s| s != succ);
    }

    pub fn uncertainty_degree(&self, scope: UdScope<'_>) -> f64 {
        match scope {
            UdScope::Pair(p) => (self.sets[p].len() - 1) as f64,
            UdScope::State(s) => self.state_ud(s) as f64,
            UdScope::Inside(z) => self.mean_ud(z, true),
            UdScope::Outside(z) => self.mean_ud(z, false),
        }
    }

    pub fn state_ud(&self, state: usize) -> usize {
        let na = self.num_actions;
        (state * na..(state + 1) * na).map(|p| self.sets[p].len() - 1).sum()
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn mean_ud(&self, zone: &FeasibleZone, inside: bool) -> f64 {
        let mut sum = 0usize;
        let mut count = 0usize;
        for p in 0..self.sets.len() {
            if zone.contains(p) == inside {
                sum += self.sets[p].len() - 1;
                count += 1;
            }
        }
        if count == 0 {
            0.0
        } else {
            sum as f64 / count as f64
        }
    }

    /// Pairs whose transition set misses the true successor, in canonical
    /// order. The sentinel stands in for any off-grid truth.
    pub fn check_well_calibrated(&self, system: &DiscreteSystem) -> (bool, Vec<usize>) {
        let bad: Vec<usize> = (0..self.sets.len())
            .filter(|&p| !covers(&self.sets[p], system.successor(p)))
            .collect();
        (bad.is_empty(), bad)
    }

    /// Pointwise containment `self(x,u) ⊆ other(x,u)`.
    pub fn is_subset_of(&self, other: &UncertainModel) -> bool {
        self.sets.len() == other.sets.len()
            && self
                .sets
                .iter()
                .zip(&other.sets)
                .all(|(a, b)| a.iter().all(|s| b.binary_search(s).is_ok()))
    }

    /// Pairs whose sets or known flags differ between two models.
    pub fn changed_pairs(&self, other: &UncertainModel) -> Vec<usize> {
        (0..self.sets.len())
            .filter(|&p| self.sets[p] != other.sets[p] || self.known[p] != other.known[p])
            .collect()
    }

    pub fn to_snapshot(&self, system: &DiscreteSystem) -> ModelSnapshot {
        let pairs = (0..self.sets.len())
            .map(|p| {
                let (s, a) = system.pair_parts(p);
                PairRecord {
                    x: system.states()[s].clone(),
                    u: system.actions()[a].clone(),
                    set: self.sets[p].iter().filter_map(|&c| system.successor_coords(c)).collect(),
                    oob: self.sets[p].last().is_some_and(|c| c.is_oob()),
                    known: self.known[p],
                }
            })
            .collect();
        ModelSnapshot { pairs }
    }

    pub fn from_snapshot(snapshot: &ModelSnapshot, system: &DiscreteSystem) -> Result<Self> {
        let n = system.num_pairs();
        if snapshot.pairs.len() != n {
            return Err(SeeError::Shape(format!(
                "snapshot has {} pairs, system has {n}",
                snapshot.pairs.len()
            )));
        }
        let mut sets = vec![Vec::new(); n];
        let mut known = vec![false; n];
        let mut seen = vec![false; n];
        for rec in &snapshot.pairs {
            let s = system
                .state_pos(&rec.x)
                .ok_or_else(|| SeeError::Shape(format!("unknown state {:?}", rec.x)))?;
            let a = system
                .action_pos(&rec.u)
                .ok_or_else(|| SeeError::Shape(format!("unknown action {:?}", rec.u)))?;
            let p = system.pair(s, a);
            if seen[p] {
                return Err(SeeError::Shape(format!("duplicate pair x={:?} u={:?}", rec.x, rec.u)));
            }
            seen[p] = true;
            let mut set = Vec::with_capacity(rec.set.len() + 1);
            for x in &rec.set {
                let point: Vec<i64> = x.iter().map(|&v| v as i64).collect();
                let succ = system.lattice_successor(&point);
                if succ.is_oob() {
                    return Err(SeeError::Shape(format!("unknown successor {x:?}")));
                }
                set.push(succ);
            }
            if rec.oob {
                set.push(Successor::OUT_OF_BOUNDS);
            }
            set.sort_unstable();
            set.dedup();
            if set.is_empty() {
                return Err(SeeError::Shape(format!("empty set at x={:?} u={:?}", rec.x, rec.u)));
            }
            sets[p] = set;
            known[p] = rec.known;
        }
        Ok(Self {
            sets,
            known,
            num_actions: system.num_actions(),
        })
    }
}

/// JSON form of a model: `{"pairs": [{"x", "u", "set", "oob", "known"}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub pairs: Vec<PairRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub x: Vec<i32>,
    pub u: Vec<i32>,
    pub set: Vec<Vec<i32>>,
    pub oob: bool,
    pub known: bool,
}

/// Whether a sorted set contains `truth`, counting the sentinel as a
/// cover for off-grid points.
pub fn covers(set: &[Successor], truth: Successor) -> bool {
    set.binary_search(&truth).is_ok() || (truth.pos().is_none() && set.last() == Some(&Successor::OUT_OF_BOUNDS))
}

fn norm_sq(v: &[i32]) -> i64 {
    v.iter().map(|&c| (c as i64) * (c as i64)).sum()
}

fn ball_offsets(dims: usize, r: i64, r_sq: f64, prefix: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
    if prefix.len() == dims {
        let d: i64 = prefix.iter().map(|c| c * c).sum();
        if d as f64 <= r_sq + 1e-9 {
            out.push(prefix.clone());
        }
        return;
    }
    for c in -r..=r {
        prefix.push(c);
        ball_offsets(dims, r, r_sq, prefix, out);
        prefix.pop();
    }
}
