//! Second-kind pruning of uncertain models under a Lipschitz assumption.
//!
//! A model is read as a graph whose vertices are candidate transitions
//! `(x, u, x')`; the color of a vertex is its pair `(x, u)`. Two vertices of
//! different colors are adjacent when their successors are as close as the
//! Lipschitz bound allows. A candidate that lacks a neighbor of some other
//! color cannot be part of any full Lipschitz-consistent assignment, so it
//! is removed; removals repeat until a sweep finds nothing.
//!
//! The exact test (membership in a clique with one vertex of every color)
//! is exponential and only offered for tiny instances, as an oracle.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SeeError};
use crate::grid::dist_sq;
use crate::model::UncertainModel;
use crate::system::{DiscreteSystem, Successor};
use crate::zone::FeasibleZone;

/// Relative slack on the adjacency comparison so that exact ties, which
/// satisfy the non-strict bound, are not lost to rounding.
const REL_EPS: f64 = 1e-12;

/// Lipschitz constants over the integer-index Euclidean metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzSpec {
    /// Joint constant over concatenated `(x, u)`.
    pub l: f64,
    /// Separate state constant; used together with `lu`.
    pub lx: Option<f64>,
    /// Separate action constant; used together with `lx`.
    pub lu: Option<f64>,
}

impl LipschitzSpec {
    pub fn joint(l: f64) -> Self {
        Self { l, lx: None, lu: None }
    }

    pub fn with_split(l: f64, lx: f64, lu: f64) -> Self {
        Self {
            l,
            lx: Some(lx),
            lu: Some(lu),
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.l > 0.0 && self.l.is_finite()) {
            errs.push(format!("L must be > 0, got {}", self.l));
        }
        match (self.lx, self.lu) {
            (Some(lx), Some(lu)) => {
                if !(lx > 0.0 && lx.is_finite()) {
                    errs.push(format!("Lx must be > 0, got {lx}"));
                }
                if !(lu >= 0.0 && lu.is_finite()) {
                    errs.push(format!("Lu must be >= 0, got {lu}"));
                }
            }
            (None, None) => {}
            _ => errs.push("Lx and Lu must be given together".to_string()),
        }
        errs
    }

    /// Largest squared successor distance allowed between two colors whose
    /// squared state and action distances are `dx2` and `du2`.
    pub fn allowed_sq(&self, dx2: i64, du2: i64) -> f64 {
        let joint = self.l * self.l * (dx2 + du2) as f64;
        match (self.lx, self.lu) {
            (Some(lx), Some(lu)) => {
                let add = lx * (dx2 as f64).sqrt() + lu * (du2 as f64).sqrt();
                joint.min(add * add)
            }
            _ => joint,
        }
    }
}

/// A candidate transition; its color is `pair`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Vertex {
    pub pair: usize,
    pub succ: Successor,
}

/// Squared distances between colors.
struct Metric<'a> {
    system: &'a DiscreteSystem,
    spec: LipschitzSpec,
    cache: Option<BoundTable>,
}

struct BoundTable {
    cols: usize,
    values: Vec<f64>,
}

impl<'a> Metric<'a> {
    fn new(system: &'a DiscreteSystem, spec: LipschitzSpec, cached: bool) -> Self {
        let cache = cached.then(|| {
            let max_dx2 = max_spread_sq(system.states());
            let max_du2 = max_spread_sq(system.actions());
            let cols = max_du2 as usize + 1;
            let rows = max_dx2 as usize + 1;
            (rows.saturating_mul(cols) <= 1 << 24).then(|| {
                let mut values = Vec::with_capacity(rows * cols);
                for dx2 in 0..rows as i64 {
                    for du2 in 0..cols as i64 {
                        values.push(spec.allowed_sq(dx2, du2));
                    }
                }
                BoundTable { cols, values }
            })
        });
        Self {
            system,
            spec,
            cache: cache.flatten(),
        }
    }

    fn allowed(&self, p1: usize, p2: usize) -> f64 {
        let (s1, a1) = self.system.pair_parts(p1);
        let (s2, a2) = self.system.pair_parts(p2);
        let dx2 = dist_sq(&self.system.states()[s1], &self.system.states()[s2]);
        let du2 = dist_sq(&self.system.actions()[a1], &self.system.actions()[a2]);
        match &self.cache {
            Some(t) => t.values[dx2 as usize * t.cols + du2 as usize],
            None => self.spec.allowed_sq(dx2, du2),
        }
    }
}

fn max_spread_sq(points: &[Vec<i32>]) -> i64 {
    let dims = points[0].len();
    (0..dims)
        .map(|d| {
            let lo = points.iter().map(|p| p[d] as i64).min().unwrap_or(0);
            let hi = points.iter().map(|p| p[d] as i64).max().unwrap_or(0);
            (hi - lo) * (hi - lo)
        })
        .sum()
}

fn exceeds(dist_sq: i64, allowed: f64) -> bool {
    dist_sq as f64 > allowed * (1.0 + REL_EPS)
}

/// Coordinates of every successor that occurs in a model, under dense
/// local ids; the sentinel has none.
struct PointTable {
    dims: usize,
    coords: Vec<i32>,
    ids: HashMap<Successor, u32>,
    succs: Vec<Successor>,
}

impl PointTable {
    fn new(model: &UncertainModel, system: &DiscreteSystem) -> Self {
        let mut table = Self {
            dims: system.state_dims(),
            coords: Vec::new(),
            ids: HashMap::new(),
            succs: Vec::new(),
        };
        for set in model.sets() {
            for &s in set {
                if s.is_oob() || table.ids.contains_key(&s) {
                    continue;
                }
                let c = system.successor_coords(s).expect("only the sentinel lacks coordinates");
                table.ids.insert(s, table.succs.len() as u32);
                table.succs.push(s);
                table.coords.extend(c);
            }
        }
        table
    }

    fn point(&self, id: u32) -> &[i32] {
        let i = id as usize * self.dims;
        &self.coords[i..i + self.dims]
    }

    fn dist_sq(&self, a: u32, b: u32) -> i64 {
        dist_sq(self.point(a), self.point(b))
    }

    /// Local ids of a set without the sentinel, and whether it had one.
    fn local(&self, set: &[Successor]) -> LocalSet {
        let has_oob = set.last().is_some_and(|s| s.is_oob());
        let ids = set.iter().filter(|s| !s.is_oob()).map(|s| self.ids[s]).collect();
        LocalSet { ids, has_oob }
    }
}

#[derive(Clone)]
struct LocalSet {
    ids: Vec<u32>,
    has_oob: bool,
}

/// Adjacency in the uncertain model graph. Same-color vertices are never
/// adjacent; a sentinel successor is adjacent to every other color.
pub fn lipschitz_adjacent(system: &DiscreteSystem, v1: Vertex, v2: Vertex, spec: &LipschitzSpec) -> bool {
    if v1.pair == v2.pair {
        return false;
    }
    let (Some(a), Some(b)) = (system.successor_coords(v1.succ), system.successor_coords(v2.succ)) else {
        return true;
    };
    let metric = Metric::new(system, *spec, false);
    !exceeds(dist_sq(&a, &b), metric.allowed(v1.pair, v2.pair))
}

/// One removed vertex and the color that witnessed its removal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Removal {
    pub sweep: usize,
    pub vertex: Vertex,
    pub witness: usize,
}

#[derive(Debug, Clone)]
pub struct PruneOutcome {
    pub model: UncertainModel,
    pub sweeps: usize,
    pub removals: Vec<Removal>,
}

/// Which pairs may witness a removal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Witnesses {
    /// Only pairs whose true transition has been observed or given.
    Data,
    /// Every pair, whatever the size of its set.
    All,
}

/// Configurable runner for the pruning sweeps.
#[derive(Debug, Clone, Copy)]
pub struct Pruner {
    pub spec: LipschitzSpec,
    pub witnesses: Witnesses,
    /// Leave a set untouched when a sweep would remove all of its
    /// candidates, instead of failing with a calibration breach.
    pub keep_last: bool,
    /// Precompute the bound for every distinct pair of color distances.
    pub distance_cache: bool,
}

/// Per-pair geometry of a transition set: a medoid anchor and the radius
/// of the candidates with coordinates around it.
#[derive(Clone, Copy)]
struct SetShape {
    anchor: Option<u32>,
    radius: f64,
    has_oob: bool,
}

fn set_shape(points: &PointTable, set: &LocalSet) -> SetShape {
    let mut best: Option<(u32, i64)> = None;
    for &a in &set.ids {
        let r = set.ids.iter().map(|&b| points.dist_sq(a, b)).max().unwrap_or(0);
        if best.is_none_or(|(_, br)| r < br) {
            best = Some((a, r));
        }
    }
    SetShape {
        anchor: best.map(|(a, _)| a),
        radius: best.map_or(0.0, |(_, r)| (r as f64).sqrt()),
        has_oob: set.has_oob,
    }
}

impl Pruner {
    pub fn new(spec: LipschitzSpec) -> Self {
        Self {
            spec,
            witnesses: Witnesses::All,
            keep_last: false,
            distance_cache: true,
        }
    }

    /// Removes, until a fixpoint, every candidate of a pair outside `zone`
    /// that has no neighbor among the candidates of some other pair. All
    /// removals found in one sweep are applied together.
    pub fn prune(&self, model: &UncertainModel, zone: &FeasibleZone, system: &DiscreteSystem) -> Result<PruneOutcome> {
        self.prune_from(model, zone, system, None)
    }

    /// Like [`prune`](Self::prune), but the first sweep only looks for
    /// witnesses among `dirty` pairs. Callers must guarantee that no other
    /// pair can witness a removal, i.e. that `model` restricted to the other
    /// pairs already is a fixpoint for every pair outside `zone`.
    pub fn prune_from(
        &self,
        model: &UncertainModel,
        zone: &FeasibleZone,
        system: &DiscreteSystem,
        dirty: Option<Vec<usize>>,
    ) -> Result<PruneOutcome> {
        let metric = Metric::new(system, self.spec, self.distance_cache);
        let points = PointTable::new(model, system);
        let n = model.num_pairs();
        let mut model = model.clone();
        let mut local: Vec<LocalSet> = model.sets().iter().map(|s| points.local(s)).collect();
        let mut shapes: Vec<SetShape> = local.par_iter().map(|s| set_shape(&points, s)).collect();
        let outer: Vec<usize> = (0..n).filter(|&p| !zone.contains(p)).collect();
        let known: Vec<bool> = (0..n).map(|p| model.is_known(p)).collect();
        let witnesses = self.witnesses;
        let eligible = |scan: Vec<usize>| -> Vec<usize> {
            match witnesses {
                Witnesses::All => scan,
                Witnesses::Data => scan.into_iter().filter(|&p| known[p]).collect(),
            }
        };
        let mut scan = eligible(dirty.unwrap_or_else(|| (0..n).collect()));
        let mut removals = Vec::new();
        let mut sweeps = 0;
        while !scan.is_empty() {
            sweeps += 1;
            let found: Vec<Vec<(u32, usize)>> = outer
                .par_iter()
                .map(|&p1| sweep_pair(&metric, &points, &local, &shapes, p1, &scan))
                .collect();
            let mut changed = Vec::new();
            for (&p1, hits) in outer.iter().zip(&found) {
                if hits.is_empty() || (self.keep_last && !local[p1].has_oob && hits.len() == local[p1].ids.len()) {
                    continue;
                }
                for &(id, witness) in hits {
                    let succ = points.succs[id as usize];
                    model.remove(p1, succ);
                    local[p1].ids.retain(|&c| c != id);
                    removals.push(Removal {
                        sweep: sweeps,
                        vertex: Vertex { pair: p1, succ },
                        witness,
                    });
                }
                if model.set(p1).is_empty() {
                    let (s, a) = system.pair_parts(p1);
                    return Err(SeeError::CalibrationBreach {
                        pair: p1,
                        x: system.states()[s].clone(),
                        u: system.actions()[a].clone(),
                    });
                }
                shapes[p1] = set_shape(&points, &local[p1]);
                changed.push(p1);
            }
            scan = eligible(changed);
        }
        Ok(PruneOutcome {
            model,
            sweeps,
            removals,
        })
    }
}

/// Candidates of `p1` that some pair in `scan` witnesses as removable,
/// each with the first such witness in scan order.
fn sweep_pair(
    metric: &Metric<'_>,
    points: &PointTable,
    local: &[LocalSet],
    shapes: &[SetShape],
    p1: usize,
    scan: &[usize],
) -> Vec<(u32, usize)> {
    let cands = &local[p1].ids;
    let shape1 = shapes[p1];
    let Some(anchor1) = shape1.anchor else { return Vec::new() };
    let mut witness: Vec<Option<usize>> = vec![None; cands.len()];
    let mut alive = cands.len();
    for &p2 in scan {
        if p2 == p1 || shapes[p2].has_oob {
            continue;
        }
        let Some(anchor2) = shapes[p2].anchor else { continue };
        let allowed = metric.allowed(p1, p2);
        // Every candidate of p1 is within radius1 of anchor1, and anchor2
        // belongs to the set of p2, so this bounds every point-to-set distance.
        let upper = shape1.radius + (points.dist_sq(anchor1, anchor2) as f64).sqrt();
        if upper * upper <= allowed * (1.0 - 1e-9) {
            continue;
        }
        let set2 = &local[p2].ids;
        for (i, &c) in cands.iter().enumerate() {
            if witness[i].is_some() {
                continue;
            }
            if !set2.iter().any(|&y| !exceeds(points.dist_sq(c, y), allowed)) {
                witness[i] = Some(p2);
                alive -= 1;
            }
        }
        if alive == 0 {
            break;
        }
    }
    cands
        .iter()
        .zip(witness)
        .filter_map(|(&c, w)| w.map(|w| (c, w)))
        .collect()
}

/// Second-kind pruning with default options.
pub fn prune_second_kind(
    model: &UncertainModel,
    zone: &FeasibleZone,
    system: &DiscreteSystem,
    spec: &LipschitzSpec,
) -> Result<UncertainModel> {
    Ok(Pruner::new(*spec).prune(model, zone, system)?.model)
}

/// Size caps for the exhaustive oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleLimits {
    pub max_pairs: usize,
    pub max_candidates: usize,
}

impl Default for OracleLimits {
    fn default() -> Self {
        Self {
            max_pairs: 10,
            max_candidates: 4,
        }
    }
}

impl OracleLimits {
    fn check(&self, model: &UncertainModel) -> Result<()> {
        let pairs = model.num_pairs();
        let candidates = model.sets().iter().map(Vec::len).max().unwrap_or(0);
        if pairs > self.max_pairs || candidates > self.max_candidates {
            return Err(SeeError::InstanceTooLarge {
                pairs,
                max_pairs: self.max_pairs,
                candidates,
                max_candidates: self.max_candidates,
            });
        }
        Ok(())
    }
}

/// Exact second-kind removability: true iff no choice of one candidate per
/// pair that includes `vertex` is pairwise adjacent.
pub fn exact_removable(
    model: &UncertainModel,
    vertex: Vertex,
    system: &DiscreteSystem,
    spec: &LipschitzSpec,
    limits: &OracleLimits,
) -> Result<bool> {
    limits.check(model)?;
    if !model.set(vertex.pair).contains(&vertex.succ) {
        return Err(SeeError::Shape(format!("vertex {vertex:?} is not in the model")));
    }
    let adjacent = |a: Vertex, b: Vertex| lipschitz_adjacent(system, a, b, spec);
    let mut domains: Vec<Vec<Vertex>> = (0..model.num_pairs())
        .map(|p| {
            if p == vertex.pair {
                vec![vertex]
            } else {
                model
                    .set(p)
                    .iter()
                    .map(|&succ| Vertex { pair: p, succ })
                    .filter(|&v| adjacent(v, vertex))
                    .collect()
            }
        })
        .collect();
    if domains.iter().any(Vec::is_empty) {
        return Ok(true);
    }
    let mut assigned = vec![false; domains.len()];
    assigned[vertex.pair] = true;
    Ok(!extend_clique(&mut domains, &mut assigned, &adjacent))
}

/// Backtracking search with forward checking over the remaining colors.
fn extend_clique(domains: &mut [Vec<Vertex>], assigned: &mut [bool], adjacent: &impl Fn(Vertex, Vertex) -> bool) -> bool {
    let next = (0..domains.len())
        .filter(|&p| !assigned[p])
        .min_by_key(|&p| domains[p].len());
    let Some(color) = next else { return true };
    assigned[color] = true;
    for v in domains[color].clone() {
        let saved: Vec<(usize, Vec<Vertex>)> = (0..domains.len())
            .filter(|&p| !assigned[p])
            .map(|p| (p, domains[p].clone()))
            .collect();
        let mut dead = false;
        for (p, _) in &saved {
            domains[*p].retain(|&w| adjacent(v, w));
            if domains[*p].is_empty() {
                dead = true;
                break;
            }
        }
        if !dead && extend_clique(domains, assigned, adjacent) {
            return true;
        }
        for (p, d) in saved {
            domains[p] = d;
        }
    }
    assigned[color] = false;
    false
}

/// Exact least uncertain model under a zone: collapse the zone to the
/// truth, then drop every vertex that belongs to no full clique.
pub fn exact_least_uncertain(
    model: &UncertainModel,
    zone: &FeasibleZone,
    system: &DiscreteSystem,
    spec: &LipschitzSpec,
    limits: &OracleLimits,
) -> Result<UncertainModel> {
    let collapsed = model.collapse_known_with(zone, system);
    let mut out = collapsed.clone();
    for p in 0..collapsed.num_pairs() {
        for &succ in collapsed.set(p) {
            if exact_removable(&collapsed, Vertex { pair: p, succ }, system, spec, limits)? {
                out.remove(p, succ);
            }
        }
        if out.set(p).is_empty() {
            let (s, a) = system.pair_parts(p);
            return Err(SeeError::CalibrationBreach {
                pair: p,
                x: system.states()[s].clone(),
                u: system.actions()[a].clone(),
            });
        }
    }
    Ok(out)
}
