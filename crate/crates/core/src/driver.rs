//! The exploration loop: alternate the maximum feasible zone under the
//! current model with the least uncertain model under that zone until
//! neither changes.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SeeError};
use crate::model::{UdScope, UncertainModel};
use crate::prune::{exact_least_uncertain, LipschitzSpec, OracleLimits, Pruner, Removal};
use crate::system::{DiscreteSystem, Successor};
use crate::zone::{maximum_feasible_zone, recall_metric, FeasibleZone};

/// How the least uncertain model is found.
#[derive(Debug, Clone, Copy)]
pub enum ModelUpdate {
    /// Neighbor-of-every-color sweeps.
    Approximate(Pruner),
    /// Exhaustive clique membership; tiny instances only.
    Exact(LipschitzSpec, OracleLimits),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Equilibrium,
    CapExhausted,
    /// The first zone was empty; no data can be collected.
    ExplorationImpossible,
}

/// Per-iteration metrics. `zone` is kept for replay and invariant checks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    #[serde(skip)]
    pub zone: Option<FeasibleZone>,
    pub zone_pairs: usize,
    pub added_pairs: usize,
    pub region_states: usize,
    pub candidates: usize,
    pub ud_inside: Option<f64>,
    pub ud_outside: Option<f64>,
    pub prune_sweeps: usize,
    pub removed: usize,
    pub queried_pairs: usize,
    pub violations: usize,
    pub miscalibrated_pairs: usize,
    pub equilibrium: bool,
}

/// Everything handed to a per-iteration observer (e.g. the snapshot writer).
pub struct IterationView<'a> {
    pub record: &'a IterationRecord,
    pub zone: &'a FeasibleZone,
    pub model: &'a UncertainModel,
    pub removals: &'a [Removal],
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub records: Vec<IterationRecord>,
    pub status: RunStatus,
    pub initial_model: UncertainModel,
    pub final_zone: FeasibleZone,
    pub final_model: UncertainModel,
    /// Every pair whose true transition was observed.
    pub queried: Vec<bool>,
    /// Observed transitions that ended in a violating state.
    pub violations: usize,
}

impl RunResult {
    /// Iteration count as reported in summaries: the number of passes
    /// before the one that confirmed the equilibrium.
    pub fn iterations(&self) -> usize {
        match self.status {
            RunStatus::Equilibrium => self.records.len() - 1,
            _ => self.records.len(),
        }
    }
}

/// Equilibrium: zone masks and every transition set are identical.
pub fn check_equilibrium(prev: (&FeasibleZone, &UncertainModel), cur: (&FeasibleZone, &UncertainModel)) -> bool {
    prev.0 == cur.0 && prev.1 == cur.1
}

/// Counts observations of true transitions and violations among them.
struct Probe<'a> {
    system: &'a DiscreteSystem,
    queried: Vec<bool>,
    violations: usize,
}

impl Probe<'_> {
    fn observe(&mut self, pair: usize) -> Successor {
        let succ = self.system.successor(pair);
        self.queried[pair] = true;
        if self.system.violates(succ) {
            self.violations += 1;
        }
        succ
    }
}

/// The exploration engine for one system and initial model.
pub struct Explorer<'a> {
    pub system: &'a DiscreteSystem,
    pub update: ModelUpdate,
    pub max_iterations: usize,
    /// Reference zone for the inside/outside uncertainty averages.
    pub reference: Option<&'a FeasibleZone>,
    /// Abort with an error as soon as a model loses a true successor.
    pub strict_calibration: bool,
}

impl<'a> Explorer<'a> {
    pub fn new(system: &'a DiscreteSystem, update: ModelUpdate) -> Self {
        Self {
            system,
            update,
            max_iterations: 100,
            reference: None,
            strict_calibration: true,
        }
    }

    fn refine(
        &self,
        model: &UncertainModel,
        zone: &FeasibleZone,
        probe: &mut Probe<'_>,
        fixpoint_outside: bool,
    ) -> Result<(UncertainModel, usize, Vec<Removal>)> {
        let collapsed = model.collapse_known(zone, |p| probe.observe(p));
        match self.update {
            ModelUpdate::Approximate(pruner) => {
                let dirty = fixpoint_outside.then(|| collapsed.changed_pairs(model));
                let out = pruner.prune_from(&collapsed, zone, self.system, dirty)?;
                Ok((out.model, out.sweeps, out.removals))
            }
            ModelUpdate::Exact(spec, limits) => {
                let refined = exact_least_uncertain(&collapsed, zone, self.system, &spec, &limits)?;
                Ok((refined, 1, Vec::new()))
            }
        }
    }

    /// Runs until equilibrium or the iteration cap, calling `observe`
    /// after every iteration.
    pub fn run(
        &self,
        initial: &UncertainModel,
        mut observe: impl FnMut(IterationView<'_>) -> Result<()>,
    ) -> Result<RunResult> {
        let system = self.system;
        let mut probe = Probe {
            system,
            queried: vec![false; system.num_pairs()],
            violations: 0,
        };
        let mut records: Vec<IterationRecord> = Vec::new();
        let mut prev_zone = FeasibleZone::empty(system);
        let mut prev_model = initial.clone();
        let mut status = RunStatus::CapExhausted;
        for k in 1..=self.max_iterations {
            let zone = maximum_feasible_zone(&prev_model, system)?;
            if self.strict_calibration && !prev_zone.is_subset_of(&zone) {
                return Err(SeeError::Invariant(format!("zone shrank at iteration {k}")));
            }
            if k == 1 && zone.is_empty() {
                let record = self.record(k, &zone, &prev_zone, &prev_model, 0, 0, &probe, false);
                observe(IterationView {
                    record: &record,
                    zone: &zone,
                    model: &prev_model,
                    removals: &[],
                })?;
                records.push(record);
                status = RunStatus::ExplorationImpossible;
                break;
            }
            let (model, sweeps, removals) = self.refine(&prev_model, &zone, &mut probe, k > 1)?;
            // Without calibration a collapse can restore a removed truth.
            if self.strict_calibration && !model.is_subset_of(&prev_model) {
                return Err(SeeError::Invariant(format!("model grew at iteration {k}")));
            }
            let equilibrium = k > 1 && check_equilibrium((&prev_zone, &prev_model), (&zone, &model));
            let record = self.record(k, &zone, &prev_zone, &model, sweeps, removals.len(), &probe, equilibrium);
            if self.strict_calibration && record.miscalibrated_pairs > 0 {
                return Err(SeeError::Invariant(format!(
                    "{} transition sets lost their true successor at iteration {k}",
                    record.miscalibrated_pairs
                )));
            }
            observe(IterationView {
                record: &record,
                zone: &zone,
                model: &model,
                removals: &removals,
            })?;
            records.push(record);
            prev_zone = zone;
            prev_model = model;
            if equilibrium {
                status = RunStatus::Equilibrium;
                break;
            }
        }
        Ok(RunResult {
            records,
            status,
            initial_model: initial.clone(),
            final_zone: prev_zone,
            final_model: prev_model,
            queried: probe.queried,
            violations: probe.violations,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn record(
        &self,
        k: usize,
        zone: &FeasibleZone,
        prev_zone: &FeasibleZone,
        model: &UncertainModel,
        sweeps: usize,
        removed: usize,
        probe: &Probe<'_>,
        equilibrium: bool,
    ) -> IterationRecord {
        IterationRecord {
            k,
            zone: Some(zone.clone()),
            zone_pairs: zone.len(),
            added_pairs: zone.added_since(prev_zone),
            region_states: zone.region().iter().filter(|&&b| b).count(),
            candidates: model.candidate_count(),
            ud_inside: self.reference.map(|r| model.uncertainty_degree(UdScope::Inside(r))),
            ud_outside: self.reference.map(|r| model.uncertainty_degree(UdScope::Outside(r))),
            prune_sweeps: sweeps,
            removed,
            queried_pairs: probe.queried.iter().filter(|&&q| q).count(),
            violations: probe.violations,
            miscalibrated_pairs: model.check_well_calibrated(self.system).1.len(),
            equilibrium,
        }
    }
}

/// One table row: iterations, recall and average uncertainty degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub iterations: usize,
    pub status: RunStatus,
    pub recall: Option<f64>,
    pub ud_inside: f64,
    pub ud_outside: f64,
    pub zone_pairs: usize,
    pub baseline_pairs: usize,
    pub violations: usize,
}

impl SummaryRow {
    /// Recall with two decimals, `n/a` for an empty baseline.
    pub fn recall_text(&self) -> String {
        self.recall.map_or_else(|| "n/a".to_string(), |r| format!("{r:.2}"))
    }

    pub fn ud_inside_text(&self) -> String {
        format!("{:.1}", self.ud_inside)
    }

    pub fn ud_outside_text(&self) -> String {
        format!("{:.1}", self.ud_outside)
    }
}

/// Table row for a finished run against the true-model baseline.
pub fn summarize_metrics(run: &RunResult, baseline: &FeasibleZone) -> SummaryRow {
    let model = &run.final_model;
    SummaryRow {
        iterations: run.iterations(),
        status: run.status,
        recall: recall_metric(&run.final_zone, baseline).ok(),
        ud_inside: model.uncertainty_degree(UdScope::Inside(baseline)),
        ud_outside: model.uncertainty_degree(UdScope::Outside(baseline)),
        zone_pairs: run.final_zone.len(),
        baseline_pairs: baseline.len(),
        violations: run.violations,
    }
}

/// Difference between the iterated model and the model obtained by
/// refining the initial model under the final zone in one shot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OneShotComparison {
    pub differing_pairs: usize,
    /// Candidates kept by the iterated model but removed in one shot.
    pub iterated_only: usize,
    /// Candidates kept in one shot but removed by the iteration.
    pub one_shot_only: usize,
}

pub fn one_shot_comparison(
    system: &DiscreteSystem,
    run: &RunResult,
    update: ModelUpdate,
) -> Result<(UncertainModel, OneShotComparison)> {
    let collapsed = run.initial_model.collapse_known_with(&run.final_zone, system);
    let one_shot = match update {
        ModelUpdate::Approximate(p) => p.prune(&collapsed, &run.final_zone, system)?.model,
        ModelUpdate::Exact(spec, limits) => {
            exact_least_uncertain(&run.initial_model, &run.final_zone, system, &spec, &limits)?
        }
    };
    let mut cmp = OneShotComparison {
        differing_pairs: 0,
        iterated_only: 0,
        one_shot_only: 0,
    };
    for p in 0..system.num_pairs() {
        let (a, b) = (run.final_model.set(p), one_shot.set(p));
        if a != b {
            cmp.differing_pairs += 1;
        }
        cmp.iterated_only += a.iter().filter(|s| !b.contains(s)).count();
        cmp.one_shot_only += b.iter().filter(|s| !a.contains(s)).count();
    }
    Ok((one_shot, cmp))
}
