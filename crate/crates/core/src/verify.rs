//! Replays a finished run directory and re-checks every invariant from the
//! stored snapshots alone.

use std::path::Path;

use crate::config::SeeConfig;
use crate::driver::RunStatus;
use crate::error::Result;
use crate::experiment::Summary;
use crate::export::{self, iter_dir};
use crate::zone::{maximum_feasible_zone, FeasibleZone};

#[derive(Debug, Clone, Default)]
pub struct VerifyReport {
    pub iterations: usize,
    pub checks: usize,
    pub failures: Vec<String>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }

    fn check(&mut self, pass: bool, msg: impl FnOnce() -> String) {
        self.checks += 1;
        if !pass {
            self.failures.push(msg());
        }
    }
}

/// Checks, for every stored iteration `k`:
/// the model keeps every true successor; `f_k` is contained in `f_{k-1}`;
/// `Z_{k-1}` is contained in `Z_k`; `Z_k` is the maximum feasible zone of
/// `f_{k-1}` and satisfies both feasibility properties; no zone pair is a
/// violating state; `f_k` is a pruning fixpoint outside `Z_k`. Also checks
/// the equilibrium claim of the summary.
///
/// Missing or malformed files are errors; broken invariants are reported.
pub fn verify_run(out: &Path) -> Result<VerifyReport> {
    let config: SeeConfig = export::read_json(&out.join(export::CONFIG_FILE))?;
    let summary: Summary = export::read_json(&out.join(export::SUMMARY_FILE))?;
    let system = config.build_system(None)?;
    let pruner = config.pruner();
    let mut report = VerifyReport::default();

    let mut prev_model = export::read_model(&iter_dir(out, 0).join(export::MODEL_FILE), &system)?;
    let mut prev_zone = FeasibleZone::empty(&system);
    let mut snapshots = Vec::new();
    let (ok, bad) = prev_model.check_well_calibrated(&system);
    report.check(ok, || format!("iteration 0: {} transition sets miss their true successor", bad.len()));

    let mut k = 1;
    while iter_dir(out, k).is_dir() {
        let dir = iter_dir(out, k);
        let zone = export::read_zone_csv(&dir.join(export::ZONE_FILE), &system)?;
        let model = export::read_model(&dir.join(export::MODEL_FILE), &system)?;

        let (ok, bad) = model.check_well_calibrated(&system);
        report.check(ok, || {
            let (s, a) = system.pair_parts(bad[0]);
            format!(
                "iteration {k}: calibration broken at {} pairs, first x={:?} u={:?} lost {:?}",
                bad.len(),
                system.states()[s],
                system.actions()[a],
                system.state_ref(system.successor(bad[0]))
            )
        });
        report.check(model.is_subset_of(&prev_model), || {
            format!("iteration {k}: model is not a refinement of iteration {}", k - 1)
        });
        report.check(prev_zone.is_subset_of(&zone), || {
            format!("iteration {k}: zone does not contain the zone of iteration {}", k - 1)
        });
        match maximum_feasible_zone(&prev_model, &system) {
            Ok(expected) => report.check(expected == zone, || {
                format!(
                    "iteration {k}: stored zone ({} pairs) differs from the recomputed zone ({} pairs)",
                    zone.len(),
                    expected.len()
                )
            }),
            Err(e) => report.check(false, || format!("iteration {k}: {e}")),
        }
        report.check(zone.check_feasible(&prev_model, &system).is_ok(), || {
            format!("iteration {k}: zone is not feasible under the previous model")
        });
        let unsafe_pairs = zone.pairs().filter(|&p| system.is_unsafe(system.pair_parts(p).0)).count();
        report.check(unsafe_pairs == 0, || format!("iteration {k}: {unsafe_pairs} zone pairs violate the constraint"));
        if !zone.is_empty() {
            let collapsed = model.collapse_known_with(&zone, &system);
            report.check(collapsed == model, || {
                format!("iteration {k}: known pairs inside the zone were not collapsed to the truth")
            });
            match pruner.prune(&model, &zone, &system) {
                Ok(o) => report.check(o.removals.is_empty(), || {
                    format!("iteration {k}: {} candidates are still removable", o.removals.len())
                }),
                Err(e) => report.check(false, || format!("iteration {k}: {e}")),
            }
        }
        snapshots.push((zone.clone(), model.clone()));
        prev_zone = zone;
        prev_model = model;
        k += 1;
    }
    let stored = k - 1;
    report.iterations = stored;
    report.check(stored == summary.iterations.len(), || {
        format!("summary lists {} iterations but {stored} are stored", summary.iterations.len())
    });
    report.check(summary.summary.violations == 0, || {
        format!("{} violating transitions were observed", summary.summary.violations)
    });
    if summary.summary.status == RunStatus::Equilibrium {
        let n = snapshots.len();
        report.check(n >= 2 && snapshots[n - 1] == snapshots[n - 2], || {
            "equilibrium claimed but the last two snapshots differ".to_string()
        });
    }
    Ok(report)
}

