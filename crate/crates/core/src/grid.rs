//! Integer index grids over states and actions.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SeeError};

/// An inclusive integer index range along one dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexRange {
    pub lo: i32,
    pub hi: i32,
}

impl IndexRange {
    pub const fn new(lo: i32, hi: i32) -> Self {
        Self { lo, hi }
    }

    pub fn len(&self) -> usize {
        (self.hi - self.lo + 1).max(0) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.hi < self.lo
    }

    pub fn contains(&self, i: i64) -> bool {
        i >= self.lo as i64 && i <= self.hi as i64
    }

    pub fn clamp(&self, i: i64) -> i64 {
        i.clamp(self.lo as i64, self.hi as i64)
    }
}

/// One grid axis: index range, physical units per index step and a label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub label: String,
    pub range: IndexRange,
    pub scale: f64,
}

impl Axis {
    pub fn new(label: &str, lo: i32, hi: i32, scale: f64) -> Self {
        Self {
            label: label.to_string(),
            range: IndexRange::new(lo, hi),
            scale,
        }
    }
}

/// Box-shaped product grid for the state space and the action space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub state: Vec<Axis>,
    pub action: Vec<Axis>,
}

impl GridSpec {
    pub fn new(state: Vec<Axis>, action: Vec<Axis>) -> Result<Self> {
        let spec = Self { state, action };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.state.is_empty() || self.action.is_empty() {
            return Err(SeeError::InvalidGrid(
                "state and action grids need at least one dimension".into(),
            ));
        }
        for axis in self.state.iter().chain(&self.action) {
            if axis.range.is_empty() {
                return Err(SeeError::InvalidGrid(format!(
                    "axis {} has empty range [{}, {}]",
                    axis.label, axis.range.lo, axis.range.hi
                )));
            }
            if !(axis.scale > 0.0 && axis.scale.is_finite()) {
                return Err(SeeError::InvalidGrid(format!(
                    "axis {} has non-positive scale {}",
                    axis.label, axis.scale
                )));
            }
        }
        Ok(())
    }

    pub fn state_dims(&self) -> usize {
        self.state.len()
    }

    pub fn action_dims(&self) -> usize {
        self.action.len()
    }

    pub fn num_states(&self) -> usize {
        self.state.iter().map(|a| a.range.len()).product()
    }

    pub fn num_actions(&self) -> usize {
        self.action.iter().map(|a| a.range.len()).product()
    }

    pub fn states(&self) -> Vec<Vec<i32>> {
        enumerate_axes(&self.state)
    }

    pub fn actions(&self) -> Vec<Vec<i32>> {
        enumerate_axes(&self.action)
    }

    /// Dense lexicographic position of an in-grid state index vector.
    pub fn state_position(&self, idx: &[i64]) -> Option<usize> {
        position(&self.state, idx)
    }

    pub fn action_position(&self, idx: &[i64]) -> Option<usize> {
        position(&self.action, idx)
    }

    pub fn contains_state(&self, idx: &[i64]) -> bool {
        idx.len() == self.state.len()
            && self.state.iter().zip(idx).all(|(a, &i)| a.range.contains(i))
    }
}

fn enumerate_axes(axes: &[Axis]) -> Vec<Vec<i32>> {
    let mut out: Vec<Vec<i32>> = vec![Vec::new()];
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.range.len());
        for prefix in &out {
            for i in axis.range.lo..=axis.range.hi {
                let mut v = prefix.clone();
                v.push(i);
                next.push(v);
            }
        }
        out = next;
    }
    out
}

fn position(axes: &[Axis], idx: &[i64]) -> Option<usize> {
    if idx.len() != axes.len() {
        return None;
    }
    let mut pos = 0usize;
    for (axis, &i) in axes.iter().zip(idx) {
        if !axis.range.contains(i) {
            return None;
        }
        pos = pos * axis.range.len() + (i - axis.range.lo as i64) as usize;
    }
    Some(pos)
}

/// Rounds a continuous index coordinate to the nearest integer, breaking
/// exact ties (within floating noise) toward the smaller index.
pub fn round_half_down(v: f64) -> i64 {
    const TIE_EPS: f64 = 1e-9;
    let floor = v.floor();
    let frac = v - floor;
    if (frac - 0.5).abs() <= TIE_EPS || frac < 0.5 {
        floor as i64
    } else {
        floor as i64 + 1
    }
}

/// Projects a physical point onto grid index coordinates (not bounds-checked).
pub fn project(axes: &[Axis], physical: &[f64]) -> Vec<i64> {
    axes.iter()
        .zip(physical)
        .map(|(a, &p)| round_half_down(p / a.scale))
        .collect()
}

/// Squared Euclidean distance between integer index vectors.
pub fn dist_sq(a: &[i32], b: &[i32]) -> i64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as i64 - y as i64;
            d * d
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn di_grid() -> GridSpec {
        GridSpec::new(
            vec![Axis::new("x1", -20, 20, 1.0), Axis::new("x2", -15, 15, 1.0)],
            vec![Axis::new("u", -2, 2, 1.0)],
        )
        .unwrap()
    }

    #[test]
    fn counts_and_order() {
        let g = di_grid();
        assert_eq!(g.num_states(), 41 * 31);
        assert_eq!(g.num_actions(), 5);
        let states = g.states();
        assert_eq!(states[0], vec![-20, -15]);
        assert_eq!(states[1], vec![-20, -14]);
        assert_eq!(states.last().unwrap(), &vec![20, 15]);
        for (i, s) in states.iter().enumerate() {
            let idx: Vec<i64> = s.iter().map(|&v| v as i64).collect();
            assert_eq!(g.state_position(&idx), Some(i));
        }
        assert_eq!(g.state_position(&[21, 0]), None);
    }

    #[test]
    fn rejects_bad_axes() {
        let bad = GridSpec::new(vec![Axis::new("x", 1, 0, 1.0)], vec![Axis::new("u", 0, 0, 1.0)]);
        assert!(bad.is_err());
        let bad = GridSpec::new(vec![Axis::new("x", 0, 1, 0.0)], vec![Axis::new("u", 0, 0, 1.0)]);
        assert!(bad.is_err());
    }

    #[test]
    fn ties_round_toward_smaller_index() {
        assert_eq!(round_half_down(4.5), 4);
        assert_eq!(round_half_down(-0.5), -1);
        assert_eq!(round_half_down(4.500000000001), 4);
        assert_eq!(round_half_down(4.51), 5);
        assert_eq!(round_half_down(-2.7), -3);
        assert_eq!(round_half_down(0.49), 0);
    }
}
