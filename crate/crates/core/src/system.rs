//! Discrete deterministic systems: grids, true step maps and constraints.
//!
//! Every system is tabulated at construction time. Pairs `(x, u)` are
//! numbered densely as `state_pos * num_actions + action_pos`, with states
//! and actions in lexicographic order of their index vectors.
//!
//! Grid systems also number the integer lattice around the grid, so that a
//! successor leaving the grid keeps its coordinates. Every off-grid point
//! violates the constraint. Points beyond that lattice, and off-grid
//! successors of table systems, collapse onto the absorbing
//! [`Successor::OUT_OF_BOUNDS`] sentinel.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SeeError};
use crate::grid::{dist_sq, project, Axis, GridSpec, IndexRange};

/// A state reference: an in-grid index vector or the out-of-bounds sentinel.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StateRef {
    InGrid(Vec<i32>),
    OutOfBounds,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActionRef(pub Vec<i32>);

const OFF_GRID: u32 = 1 << 31;

/// Off-grid lattice margin around the grid and all true successors.
pub const LATTICE_MARGIN: i64 = 32;

/// Dense successor id: an in-grid state position, an off-grid lattice
/// point, or the sentinel. Ids order as grid < off-grid < sentinel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Successor(u32);

impl Successor {
    pub const OUT_OF_BOUNDS: Successor = Successor(u32::MAX);

    pub fn state(pos: usize) -> Self {
        assert!(pos < OFF_GRID as usize, "state position overflow");
        Successor(pos as u32)
    }

    fn off_grid(index: usize) -> Self {
        assert!(index < (u32::MAX - OFF_GRID) as usize, "lattice index overflow");
        Successor(OFF_GRID | index as u32)
    }

    /// The coordinate-free sentinel.
    pub fn is_oob(self) -> bool {
        self == Self::OUT_OF_BOUNDS
    }

    /// A lattice point outside the grid, with coordinates.
    pub fn is_off_grid(self) -> bool {
        self.0 & OFF_GRID != 0 && !self.is_oob()
    }

    /// In-grid state position, `None` for off-grid points and the sentinel.
    pub fn pos(self) -> Option<usize> {
        (self.0 & OFF_GRID == 0).then_some(self.0 as usize)
    }

    fn lattice_index(self) -> Option<usize> {
        self.is_off_grid().then_some((self.0 & !OFF_GRID) as usize)
    }
}

impl fmt::Display for Successor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.pos(), self.lattice_index()) {
            (Some(p), _) => write!(f, "s{p}"),
            (None, Some(i)) => write!(f, "g{i}"),
            _ => write!(f, "oob"),
        }
    }
}

/// Bounding box of the numbered off-grid lattice.
#[derive(Debug, Clone)]
struct Lattice {
    lo: Vec<i64>,
    len: Vec<i64>,
}

impl Lattice {
    fn around(grid: &GridSpec, raw: &[Option<Vec<i64>>]) -> Option<Self> {
        let mut lo: Vec<i64> = grid.state.iter().map(|a| a.range.lo as i64).collect();
        let mut hi: Vec<i64> = grid.state.iter().map(|a| a.range.hi as i64).collect();
        for p in raw.iter().flatten() {
            for (d, &v) in p.iter().enumerate() {
                lo[d] = lo[d].min(v);
                hi[d] = hi[d].max(v);
            }
        }
        let lo: Vec<i64> = lo.iter().map(|v| v - LATTICE_MARGIN).collect();
        let len: Vec<i64> = hi.iter().zip(&lo).map(|(h, l)| h + LATTICE_MARGIN - l + 1).collect();
        let total = len.iter().try_fold(1i64, |acc, &l| acc.checked_mul(l))?;
        let fits = total < (u32::MAX - OFF_GRID) as i64
            && lo.iter().zip(&len).all(|(&l, &n)| l >= i32::MIN as i64 && l + n <= i32::MAX as i64);
        fits.then_some(Self { lo, len })
    }

    fn index(&self, p: &[i64]) -> Option<usize> {
        let mut idx = 0i64;
        for ((&v, &lo), &len) in p.iter().zip(&self.lo).zip(&self.len) {
            let o = v - lo;
            if o < 0 || o >= len {
                return None;
            }
            idx = idx * len + o;
        }
        Some(idx as usize)
    }

    fn point(&self, mut idx: usize) -> Vec<i32> {
        let mut out = vec![0i32; self.lo.len()];
        for d in (0..self.lo.len()).rev() {
            let len = self.len[d] as usize;
            out[d] = (self.lo[d] + (idx % len) as i64) as i32;
            idx /= len;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    DoubleIntegrator,
    Pendulum,
    Unicycle,
    CustomTable,
}

impl SystemKind {
    pub const NAMES: [&'static str; 4] = ["double_integrator", "pendulum", "unicycle", "custom_table"];

    pub fn name(self) -> &'static str {
        match self {
            SystemKind::DoubleIntegrator => "double_integrator",
            SystemKind::Pendulum => "pendulum",
            SystemKind::Unicycle => "unicycle",
            SystemKind::CustomTable => "custom_table",
        }
    }
}

/// What happens to a successor that leaves the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryMode {
    /// Collapse onto the absorbing out-of-bounds sentinel (a violation).
    Absorb,
    /// Clamp every coordinate onto the grid.
    Saturate,
}

/// Angle update of the pendulum after the angular-velocity update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// `theta' = theta + theta_dot' * dt`
    SemiImplicit,
    /// `theta' = theta + theta_dot * dt`
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendulumParams {
    pub mass: f64,
    pub length: f64,
    pub gravity: f64,
    pub dt: f64,
    pub integrator: Integrator,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            length: 1.0,
            gravity: 9.8,
            dt: 0.3,
            integrator: Integrator::SemiImplicit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnicycleParams {
    pub velocity: f64,
    pub dt: f64,
    /// Obstacle box over the (y, z) position indices.
    pub obstacle: [IndexRange; 2],
}

impl Default for UnicycleParams {
    fn default() -> Self {
        Self {
            velocity: 1.0,
            dt: 0.2,
            obstacle: [IndexRange::new(6, 9), IndexRange::new(-3, 3)],
        }
    }
}

/// Tabulated system loaded from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemTable {
    pub states: Vec<Vec<i32>>,
    pub actions: Vec<Vec<i32>>,
    /// `[state_idx, action_idx, next_state_idx]`, `-1` meaning out of bounds.
    pub transitions: Vec<[i64; 3]>,
    #[serde(default)]
    pub unsafe_states: Vec<usize>,
}

impl SystemTable {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SeeError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone)]
pub struct DiscreteSystem {
    kind: SystemKind,
    grid: Option<GridSpec>,
    states: Vec<Vec<i32>>,
    actions: Vec<Vec<i32>>,
    lookup: HashMap<Vec<i32>, usize>,
    lattice: Option<Lattice>,
    unsafe_state: Vec<bool>,
    next: Vec<Successor>,
    /// Projected successor in un-clipped index coordinates, when known.
    raw_next: Vec<Option<Vec<i64>>>,
}

impl DiscreteSystem {
    /// Double integrator `x1' = x1 + x2`, `x2' = x2 + u` on
    /// `[-20, 20] x [-15, 15]` with `u in [-2, 2]`.
    pub fn double_integrator() -> Self {
        let grid = GridSpec::new(
            vec![Axis::new("x1", -20, 20, 1.0), Axis::new("x2", -15, 15, 1.0)],
            vec![Axis::new("u", -2, 2, 1.0)],
        )
        .expect("static grid");
        Self::from_map(SystemKind::DoubleIntegrator, grid, BoundaryMode::Absorb, |x, u| {
            vec![x[0] + x[1], x[1] + u[0]]
        }, |_| false)
    }

    /// Pendulum on a 21 x 21 grid (0.05 rad, 0.2 rad/s) with integer torques in `[-3, 3]`.
    pub fn pendulum(params: PendulumParams) -> Self {
        let grid = GridSpec::new(
            vec![Axis::new("theta", -10, 10, 0.05), Axis::new("theta_dot", -10, 10, 0.2)],
            vec![Axis::new("u", -3, 3, 1.0)],
        )
        .expect("static grid");
        let p = params;
        Self::from_map(SystemKind::Pendulum, grid, BoundaryMode::Absorb, move |x, u| {
            let (theta, omega, torque) = (x[0], x[1], u[0]);
            let accel = -3.0 * p.gravity / (2.0 * p.length) * theta.sin()
                + 3.0 / (p.mass * p.length * p.length) * torque;
            let omega_next = omega + accel * p.dt;
            let theta_next = match p.integrator {
                Integrator::SemiImplicit => theta + omega_next * p.dt,
                Integrator::Explicit => theta + omega * p.dt,
            };
            vec![theta_next, omega_next]
        }, |_| false)
    }

    /// Constant-speed unicycle on a 31 x 21 x 11 grid avoiding an obstacle box.
    pub fn unicycle(params: UnicycleParams, boundary: BoundaryMode) -> Self {
        let grid = GridSpec::new(
            vec![
                Axis::new("y", -15, 15, 0.05),
                Axis::new("z", -10, 10, 0.05),
                Axis::new("heading", -5, 5, PI / 20.0),
            ],
            vec![Axis::new("omega", -2, 2, PI / 8.0)],
        )
        .expect("static grid");
        let p = params;
        Self::from_map(SystemKind::Unicycle, grid, boundary, move |x, u| {
            vec![
                x[0] + p.dt * p.velocity * x[2].cos(),
                x[1] + p.dt * p.velocity * x[2].sin(),
                x[2] + p.dt * u[0],
            ]
        }, move |s| p.obstacle[0].contains(s[0] as i64) && p.obstacle[1].contains(s[1] as i64))
    }

    /// Builds a grid system from a physical step map; successors are
    /// projected to the nearest grid point.
    pub fn from_map(
        kind: SystemKind,
        grid: GridSpec,
        boundary: BoundaryMode,
        step: impl Fn(&[f64], &[f64]) -> Vec<f64>,
        is_unsafe: impl Fn(&[i32]) -> bool,
    ) -> Self {
        let states = grid.states();
        let actions = grid.actions();
        let mut raw_next = Vec::with_capacity(states.len() * actions.len());
        for s in &states {
            let xs = to_physical(&grid.state, s);
            for a in &actions {
                let us = to_physical(&grid.action, a);
                let phys = step(&xs, &us);
                let mut raw = project(&grid.state, &phys);
                if boundary == BoundaryMode::Saturate {
                    for (v, axis) in raw.iter_mut().zip(&grid.state) {
                        *v = axis.range.clamp(*v);
                    }
                }
                raw_next.push(Some(raw));
            }
        }
        let lattice = Lattice::around(&grid, &raw_next);
        let unsafe_state = states.iter().map(|s| is_unsafe(s)).collect();
        let mut sys = Self {
            kind,
            grid: Some(grid),
            lookup: HashMap::new(),
            lattice,
            states,
            actions,
            unsafe_state,
            next: Vec::new(),
            raw_next,
        };
        sys.next = sys.raw_next.iter().map(|r| sys.lattice_successor(r.as_deref().expect("grid successor"))).collect();
        sys
    }

    pub fn from_table(table: &SystemTable) -> Result<Self> {
        let bad = |m: String| SeeError::InvalidTable(m);
        if table.states.is_empty() || table.actions.is_empty() {
            return Err(bad("states and actions must be nonempty".into()));
        }
        let sd = table.states[0].len();
        let ad = table.actions[0].len();
        if sd == 0 || ad == 0 {
            return Err(bad("index vectors must be nonempty".into()));
        }
        if table.states.iter().any(|s| s.len() != sd) || table.actions.iter().any(|a| a.len() != ad) {
            return Err(bad("inconsistent index vector dimensions".into()));
        }
        let mut lookup = HashMap::new();
        for (i, s) in table.states.iter().enumerate() {
            if lookup.insert(s.clone(), i).is_some() {
                return Err(bad(format!("duplicate state {s:?}")));
            }
        }
        let mut seen_actions = HashMap::new();
        for (i, a) in table.actions.iter().enumerate() {
            if seen_actions.insert(a.clone(), i).is_some() {
                return Err(bad(format!("duplicate action {a:?}")));
            }
        }
        let (ns, na) = (table.states.len(), table.actions.len());
        let mut next: Vec<Option<Successor>> = vec![None; ns * na];
        for &[s, a, n] in &table.transitions {
            if s < 0 || s as usize >= ns || a < 0 || a as usize >= na {
                return Err(bad(format!("transition [{s}, {a}, {n}] out of range")));
            }
            let succ = match n {
                -1 => Successor::OUT_OF_BOUNDS,
                n if n >= 0 && (n as usize) < ns => Successor::state(n as usize),
                _ => return Err(bad(format!("transition [{s}, {a}, {n}] has invalid successor"))),
            };
            let slot = &mut next[s as usize * na + a as usize];
            if slot.is_some() {
                return Err(bad(format!("duplicate transition for pair ({s}, {a})")));
            }
            *slot = Some(succ);
        }
        let next: Vec<Successor> = next
            .into_iter()
            .enumerate()
            .map(|(p, s)| s.ok_or_else(|| bad(format!("missing transition for pair ({}, {})", p / na, p % na))))
            .collect::<Result<_>>()?;
        let mut unsafe_state = vec![false; ns];
        for &u in &table.unsafe_states {
            if u >= ns {
                return Err(bad(format!("unsafe state {u} out of range")));
            }
            unsafe_state[u] = true;
        }
        // Keep the canonical lexicographic order of states and actions.
        let mut sorder: Vec<usize> = (0..ns).collect();
        sorder.sort_by(|&a, &b| table.states[a].cmp(&table.states[b]));
        let mut aorder: Vec<usize> = (0..na).collect();
        aorder.sort_by(|&a, &b| table.actions[a].cmp(&table.actions[b]));
        let mut srank = vec![0; ns];
        for (r, &s) in sorder.iter().enumerate() {
            srank[s] = r;
        }
        let states: Vec<Vec<i32>> = sorder.iter().map(|&s| table.states[s].clone()).collect();
        let actions: Vec<Vec<i32>> = aorder.iter().map(|&a| table.actions[a].clone()).collect();
        let mut sorted_next = Vec::with_capacity(ns * na);
        let mut raw_next = Vec::with_capacity(ns * na);
        for &s in &sorder {
            for &a in &aorder {
                let succ = match next[s * na + a].pos() {
                    Some(n) => Successor::state(srank[n]),
                    None => Successor::OUT_OF_BOUNDS,
                };
                raw_next.push(succ.pos().map(|n| states[n].iter().map(|&v| v as i64).collect()));
                sorted_next.push(succ);
            }
        }
        let unsafe_state = sorder.iter().map(|&s| unsafe_state[s]).collect();
        let lookup = states.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Ok(Self {
            kind: SystemKind::CustomTable,
            grid: None,
            states,
            actions,
            lookup,
            lattice: None,
            unsafe_state,
            next: sorted_next,
            raw_next,
        })
    }

    pub fn kind(&self) -> SystemKind {
        self.kind
    }

    pub fn grid(&self) -> Option<&GridSpec> {
        self.grid.as_ref()
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn num_pairs(&self) -> usize {
        self.states.len() * self.actions.len()
    }

    pub fn states(&self) -> &[Vec<i32>] {
        &self.states
    }

    pub fn actions(&self) -> &[Vec<i32>] {
        &self.actions
    }

    pub fn state_dims(&self) -> usize {
        self.states[0].len()
    }

    pub fn action_dims(&self) -> usize {
        self.actions[0].len()
    }

    pub fn state_labels(&self) -> Vec<String> {
        match &self.grid {
            Some(g) => g.state.iter().map(|a| a.label.clone()).collect(),
            None => (1..=self.state_dims()).map(|i| format!("x{i}")).collect(),
        }
    }

    pub fn action_labels(&self) -> Vec<String> {
        match &self.grid {
            Some(g) => g.action.iter().map(|a| a.label.clone()).collect(),
            None => (1..=self.action_dims()).map(|i| format!("u{i}")).collect(),
        }
    }

    /// Canonical iteration order over in-grid states and actions.
    pub fn enumerate_space(&self) -> (Vec<StateRef>, Vec<ActionRef>) {
        (
            self.states.iter().cloned().map(StateRef::InGrid).collect(),
            self.actions.iter().cloned().map(ActionRef).collect(),
        )
    }

    pub fn pair(&self, state: usize, action: usize) -> usize {
        state * self.actions.len() + action
    }

    pub fn pair_parts(&self, pair: usize) -> (usize, usize) {
        (pair / self.actions.len(), pair % self.actions.len())
    }

    pub fn state_pos(&self, x: &[i32]) -> Option<usize> {
        match &self.grid {
            Some(g) => {
                let idx: Vec<i64> = x.iter().map(|&v| v as i64).collect();
                g.state_position(&idx)
            }
            None => self.lookup.get(x).copied(),
        }
    }

    pub fn action_pos(&self, u: &[i32]) -> Option<usize> {
        self.actions.iter().position(|a| a.as_slice() == u)
    }

    /// Lattice point lookup used when building balls around successors.
    pub fn state_pos_i64(&self, x: &[i64]) -> Option<usize> {
        match &self.grid {
            Some(g) => g.state_position(x),
            None => {
                let v: Option<Vec<i32>> = x.iter().map(|&c| i32::try_from(c).ok()).collect();
                v.and_then(|v| self.lookup.get(&v).copied())
            }
        }
    }

    /// Successor id of an integer point: grid state, numbered off-grid
    /// point, or the sentinel.
    pub fn lattice_successor(&self, point: &[i64]) -> Successor {
        if let Some(pos) = self.state_pos_i64(point) {
            return Successor::state(pos);
        }
        self.lattice
            .as_ref()
            .and_then(|l| l.index(point))
            .map_or(Successor::OUT_OF_BOUNDS, Successor::off_grid)
    }

    /// Whether off-grid points keep their coordinates in this system.
    pub fn has_lattice(&self) -> bool {
        self.lattice.is_some()
    }

    /// Index coordinates of a successor; `None` only for the sentinel.
    pub fn successor_coords(&self, succ: Successor) -> Option<Vec<i32>> {
        match (succ.pos(), succ.lattice_index(), &self.lattice) {
            (Some(p), _, _) => Some(self.states[p].clone()),
            (None, Some(i), Some(l)) => Some(l.point(i)),
            _ => None,
        }
    }

    /// True successor of a dense pair index.
    pub fn successor(&self, pair: usize) -> Successor {
        self.next[pair]
    }

    /// Projected successor before the out-of-bounds collapse, if known.
    pub fn raw_successor(&self, pair: usize) -> Option<&[i64]> {
        self.raw_next[pair].as_deref()
    }

    pub fn step(&self, x: &[i32], u: &[i32]) -> Result<StateRef> {
        let s = self
            .state_pos(x)
            .ok_or_else(|| SeeError::Shape(format!("state {x:?} is not in the grid")))?;
        let a = self
            .action_pos(u)
            .ok_or_else(|| SeeError::Shape(format!("action {u:?} is not in the grid")))?;
        Ok(self.state_ref(self.next[self.pair(s, a)]))
    }

    pub fn state_ref(&self, succ: Successor) -> StateRef {
        match succ.pos() {
            Some(p) => StateRef::InGrid(self.states[p].clone()),
            None => StateRef::OutOfBounds,
        }
    }

    /// `c(x)`: 1 for constraint-violating states and the sentinel.
    pub fn constraint_cost(&self, x: &StateRef) -> u8 {
        match x {
            StateRef::OutOfBounds => 1,
            StateRef::InGrid(v) => match self.state_pos(v) {
                Some(p) => self.unsafe_state[p] as u8,
                None => 1,
            },
        }
    }

    pub fn is_unsafe(&self, state: usize) -> bool {
        self.unsafe_state[state]
    }

    /// `c` over dense successors.
    pub fn violates(&self, succ: Successor) -> bool {
        succ.pos().is_none_or(|p| self.unsafe_state[p])
    }

    /// Physical successor of a grid pair before projection (grid systems only).
    pub fn physical_state(&self, state: usize) -> Option<Vec<f64>> {
        self.grid.as_ref().map(|g| to_physical(&g.state, &self.states[state]))
    }

    /// Largest observed ratio `d(f(p1), f(p2)) / d(p1, p2)` over pairs whose
    /// successors are both in the grid, under the index metric.
    pub fn max_slope(&self) -> f64 {
        let n = self.num_pairs();
        let mut best_sq = 0.0f64;
        for p1 in 0..n {
            let Some(s1) = self.next[p1].pos() else { continue };
            let (x1, u1) = self.pair_parts(p1);
            for p2 in (p1 + 1)..n {
                let Some(s2) = self.next[p2].pos() else { continue };
                let (x2, u2) = self.pair_parts(p2);
                let dp = dist_sq(&self.states[x1], &self.states[x2]) + dist_sq(&self.actions[u1], &self.actions[u2]);
                let ds = dist_sq(&self.states[s1], &self.states[s2]);
                let r = ds as f64 / dp as f64;
                if r > best_sq {
                    best_sq = r;
                }
            }
        }
        best_sq.sqrt()
    }
}

fn to_physical(axes: &[Axis], idx: &[i32]) -> Vec<f64> {
    axes.iter().zip(idx).map(|(a, &i)| i as f64 * a.scale).collect()
}
