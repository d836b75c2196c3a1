//! Config-driven runs with optional on-disk output.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{Calibration, SeeConfig};
use crate::driver::{
    one_shot_comparison, summarize_metrics, Explorer, IterationRecord, ModelUpdate, OneShotComparison, RunResult,
    RunStatus, SummaryRow,
};
use crate::error::{Result, SeeError};
use crate::export::{self, iter_dir};
use crate::model::UncertainModel;
use crate::system::DiscreteSystem;
use crate::zone::{horizon_iteration, true_model_baseline, FeasibleZone};

/// Contents of `summary.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub config: SeeConfig,
    pub summary: SummaryRow,
    pub iterations: Vec<IterationRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub one_shot: Option<OneShotComparison>,
}

pub struct Experiment {
    pub config: SeeConfig,
    pub system: DiscreteSystem,
    pub baseline: FeasibleZone,
    pub initial: UncertainModel,
}

impl Experiment {
    /// Validates the config and builds the system, the true-model
    /// baseline and the initial model.
    pub fn new(config: SeeConfig, base_dir: Option<&Path>) -> Result<Self> {
        config.validate()?;
        let system = config.build_system(base_dir)?;
        let baseline = true_model_baseline(&system);
        let initial = UncertainModel::build_initial(&system, &config.initial_spec());
        Ok(Self {
            config,
            system,
            baseline,
            initial,
        })
    }

    pub fn update(&self) -> ModelUpdate {
        ModelUpdate::Approximate(self.config.pruner())
    }

    /// Runs to equilibrium or the cap. With `out`, every iteration is
    /// written under `out/iter_<k>` as it completes.
    pub fn run(&self, out: Option<&Path>) -> Result<(RunResult, Summary)> {
        let cfg = &self.config;
        let system = &self.system;
        let mut explorer = Explorer::new(system, self.update());
        explorer.max_iterations = cfg.max_iterations;
        explorer.reference = Some(&self.baseline);
        explorer.strict_calibration = cfg.calibration == Calibration::Strict;
        if let Some(out) = out {
            self.write_preamble(out)?;
        }
        let mut audit = Vec::new();
        let run = explorer.run(&self.initial, |view| {
            let Some(out) = out else { return Ok(()) };
            let k = view.record.k;
            let dir = iter_dir(out, k);
            if cfg.export_csv {
                export::write_atomic(&dir.join(export::ZONE_FILE), &export::zone_csv(view.zone, system)?)?;
                export::write_atomic(&dir.join(export::UD_FILE), &export::ud_state_csv(view.model, system)?)?;
            }
            if cfg.export_model {
                export::write_atomic(&dir.join(export::MODEL_FILE), &export::model_json(view.model, system)?)?;
            }
            if cfg.export_pgm {
                export::write_pgms(&dir, system, view.model, view.zone)?;
            }
            if cfg.audit_log {
                for r in view.removals {
                    let (s1, a1) = system.pair_parts(r.vertex.pair);
                    let (s2, a2) = system.pair_parts(r.witness);
                    let line = serde_json::json!({
                        "iteration": k,
                        "sweep": r.sweep,
                        "x": system.states()[s1],
                        "u": system.actions()[a1],
                        "x_next": r.vertex.succ.pos().map(|q| &system.states()[q]),
                        "witness_x": system.states()[s2],
                        "witness_u": system.actions()[a2],
                    });
                    audit.extend(serde_json::to_vec(&line)?);
                    audit.push(b'\n');
                }
            }
            Ok(())
        })?;
        let one_shot = if cfg.one_shot_check && run.status != RunStatus::ExplorationImpossible {
            Some(one_shot_comparison(system, &run, self.update())?.1)
        } else {
            None
        };
        let summary = Summary {
            config: cfg.clone(),
            summary: summarize_metrics(&run, &self.baseline),
            iterations: run.records.clone(),
            one_shot,
        };
        if let Some(out) = out {
            if cfg.audit_log {
                export::write_atomic(&out.join(export::AUDIT_FILE), &audit)?;
            }
            export::write_json(&out.join(export::SUMMARY_FILE), &summary)?;
        }
        Ok((run, summary))
    }

    fn write_preamble(&self, out: &Path) -> Result<()> {
        export::write_json(&out.join(export::CONFIG_FILE), &self.config)?;
        if self.config.export_model {
            let path = iter_dir(out, 0).join(export::MODEL_FILE);
            export::write_atomic(&path, &export::model_json(&self.initial, &self.system)?)?;
        }
        self.write_baseline(out)
    }

    /// `baseline/zone.csv` and `baseline/horizon.csv`.
    pub fn write_baseline(&self, out: &Path) -> Result<()> {
        let dir = out.join(export::BASELINE_DIR);
        let exact = UncertainModel::exact(&self.system);
        let field = horizon_iteration(&exact, &self.system);
        export::write_atomic(&dir.join(export::ZONE_FILE), &export::zone_csv(&self.baseline, &self.system)?)?;
        export::write_atomic(&dir.join("horizon.csv"), &export::horizon_csv(&field, &self.system)?)
    }
}

/// Builds and runs a config without writing anything.
pub fn run_see(config: &SeeConfig) -> Result<(RunResult, Summary)> {
    Experiment::new(config.clone(), None)?.run(None)
}

/// Resolves a table path against `base_dir` so that a stored config can
/// be reloaded from anywhere.
pub fn absolutize_table(config: &mut SeeConfig, base_dir: &Path) -> Result<()> {
    if let Some(t) = &config.table {
        let joined: PathBuf = if t.is_relative() { base_dir.join(t) } else { t.clone() };
        let abs = joined.canonicalize().map_err(|e| SeeError::io(&joined, e))?;
        config.table = Some(abs);
    }
    Ok(())
}
