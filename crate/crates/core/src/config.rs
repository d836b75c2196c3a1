//! Experiment configuration: JSON keyed by the usual
//! parameter names (`r0`, `rx`, `ru`, `L`, `Lx`, `Lu`).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{Map, Value};

use crate::error::{Result, SeeError};
use crate::grid::IndexRange;
use crate::model::{InitialModelSpec, OobPolicy};
use crate::prune::{LipschitzSpec, OracleLimits, Pruner, Witnesses};
use crate::system::{
    BoundaryMode, DiscreteSystem, Integrator, PendulumParams, SystemKind, SystemTable, UnicycleParams,
};

/// What to do when pruning would drop a true successor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Calibration {
    /// Abort the run.
    Strict,
    /// Keep going; sets that would become empty are left as they are and
    /// the number of miscalibrated pairs is recorded per iteration.
    Lenient,
}

/// Fully resolved experiment parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeeConfig {
    pub system: SystemKind,
    pub r0: f64,
    pub rx: f64,
    pub ru: f64,
    pub known_region: bool,
    pub oob_policy: OobPolicy,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "Lx")]
    pub lx: Option<f64>,
    #[serde(rename = "Lu")]
    pub lu: Option<f64>,
    pub witnesses: Witnesses,
    pub calibration: Calibration,
    pub gamma: f64,
    pub max_iterations: usize,
    pub boundary: BoundaryMode,
    pub integrator: Integrator,
    pub mass: f64,
    pub length: f64,
    pub gravity: f64,
    pub dt: f64,
    pub velocity: f64,
    pub obstacle: [[i32; 2]; 2],
    pub table: Option<PathBuf>,
    pub export_csv: bool,
    pub export_model: bool,
    pub export_pgm: bool,
    pub audit_log: bool,
    pub distance_cache: bool,
    pub one_shot_check: bool,
    pub oracle_max_pairs: usize,
    pub oracle_max_candidates: usize,
}

/// Config file as written by users: every key optional except `system`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    system: Option<SystemKind>,
    r0: Option<f64>,
    rx: Option<f64>,
    ru: Option<f64>,
    known_region: Option<bool>,
    oob_policy: Option<OobPolicy>,
    #[serde(rename = "L")]
    l: Option<f64>,
    #[serde(rename = "Lx", default, deserialize_with = "explicit_null")]
    lx: Option<Option<f64>>,
    #[serde(rename = "Lu", default, deserialize_with = "explicit_null")]
    lu: Option<Option<f64>>,
    witnesses: Option<Witnesses>,
    calibration: Option<Calibration>,
    gamma: Option<f64>,
    max_iterations: Option<usize>,
    boundary: Option<BoundaryMode>,
    integrator: Option<Integrator>,
    mass: Option<f64>,
    length: Option<f64>,
    gravity: Option<f64>,
    dt: Option<f64>,
    velocity: Option<f64>,
    obstacle: Option<[[i32; 2]; 2]>,
    #[serde(default, deserialize_with = "explicit_null")]
    table: Option<Option<PathBuf>>,
    export_csv: Option<bool>,
    export_model: Option<bool>,
    export_pgm: Option<bool>,
    audit_log: Option<bool>,
    distance_cache: Option<bool>,
    one_shot_check: Option<bool>,
    oracle_max_pairs: Option<usize>,
    oracle_max_candidates: Option<usize>,
}

/// Distinguishes a missing key (`None`) from an explicit `null` (`Some(None)`).
fn explicit_null<'de, D, T>(d: D) -> std::result::Result<Option<Option<T>>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    Option::<T>::deserialize(d).map(Some)
}

impl SeeConfig {
    /// Table defaults for a system.
    pub fn defaults(system: SystemKind) -> Self {
        let pend = PendulumParams::default();
        let uni = UnicycleParams::default();
        let base = SeeConfig {
            system,
            r0: 2.0,
            rx: 2.0,
            ru: 1.0,
            known_region: true,
            oob_policy: OobPolicy::Lattice,
            // The double integrator's constant, sqrt(3) ~ 1.73. The rounded
            // literal lies below it and prunes true transitions.
            l: 3f64.sqrt(),
            lx: None,
            lu: None,
            witnesses: Witnesses::Data,
            calibration: Calibration::Strict,
            gamma: 0.9,
            max_iterations: 100,
            boundary: BoundaryMode::Absorb,
            integrator: pend.integrator,
            mass: pend.mass,
            length: pend.length,
            gravity: pend.gravity,
            dt: pend.dt,
            velocity: uni.velocity,
            obstacle: [[uni.obstacle[0].lo, uni.obstacle[0].hi], [uni.obstacle[1].lo, uni.obstacle[1].hi]],
            table: None,
            export_csv: true,
            export_model: true,
            export_pgm: false,
            audit_log: false,
            distance_cache: true,
            one_shot_check: false,
            oracle_max_pairs: OracleLimits::default().max_pairs,
            oracle_max_candidates: OracleLimits::default().max_candidates,
        };
        match system {
            SystemKind::DoubleIntegrator => base,
            SystemKind::Pendulum => SeeConfig {
                r0: 3.0,
                rx: 3.0,
                ru: 2.0,
                l: 3.0,
                lx: Some(3.0),
                lu: Some(2.0),
                // These constants are below the pendulum's own slope, so
                // true transitions get pruned.
                calibration: Calibration::Lenient,
                ..base
            },
            SystemKind::Unicycle => SeeConfig {
                r0: 2.0,
                rx: 0.0,
                ru: 0.0,
                known_region: false,
                l: 3.0,
                lx: Some(1.85),
                lu: Some(1.0),
                boundary: BoundaryMode::Saturate,
                oob_policy: OobPolicy::TruthOutside,
                dt: uni.dt,
                ..base
            },
            SystemKind::CustomTable => SeeConfig {
                r0: 1.0,
                rx: 0.0,
                ru: 0.0,
                known_region: false,
                l: 1.0,
                ..base
            },
        }
    }

    pub fn initial_spec(&self) -> InitialModelSpec {
        InitialModelSpec {
            r0: self.r0,
            rx: self.rx,
            ru: self.ru,
            known_region: self.known_region,
            oob_policy: self.oob_policy,
        }
    }

    pub fn lipschitz(&self) -> LipschitzSpec {
        LipschitzSpec {
            l: self.l,
            lx: self.lx,
            lu: self.lu,
        }
    }

    pub fn pruner(&self) -> Pruner {
        Pruner {
            spec: self.lipschitz(),
            witnesses: self.witnesses,
            keep_last: self.calibration == Calibration::Lenient,
            distance_cache: self.distance_cache,
        }
    }

    pub fn oracle_limits(&self) -> OracleLimits {
        OracleLimits {
            max_pairs: self.oracle_max_pairs,
            max_candidates: self.oracle_max_candidates,
        }
    }

    pub fn pendulum_params(&self) -> PendulumParams {
        PendulumParams {
            mass: self.mass,
            length: self.length,
            gravity: self.gravity,
            dt: self.dt,
            integrator: self.integrator,
        }
    }

    pub fn unicycle_params(&self) -> UnicycleParams {
        UnicycleParams {
            velocity: self.velocity,
            dt: self.dt,
            obstacle: [
                IndexRange::new(self.obstacle[0][0], self.obstacle[0][1]),
                IndexRange::new(self.obstacle[1][0], self.obstacle[1][1]),
            ],
        }
    }

    /// Instantiates the configured system. Relative table paths resolve
    /// against `base_dir`.
    pub fn build_system(&self, base_dir: Option<&Path>) -> Result<DiscreteSystem> {
        Ok(match self.system {
            SystemKind::DoubleIntegrator => DiscreteSystem::double_integrator(),
            SystemKind::Pendulum => DiscreteSystem::pendulum(self.pendulum_params()),
            SystemKind::Unicycle => DiscreteSystem::unicycle(self.unicycle_params(), self.boundary),
            SystemKind::CustomTable => {
                let path = self
                    .table
                    .as_ref()
                    .ok_or_else(|| SeeError::Config("custom_table needs a \"table\" path".into()))?;
                let path = match base_dir {
                    Some(b) if path.is_relative() => b.join(path),
                    _ => path.clone(),
                };
                DiscreteSystem::from_table(&SystemTable::load(&path)?)?
            }
        })
    }

    /// Every violated invariant, empty when valid.
    pub fn violations(&self) -> Vec<String> {
        let mut errs = self.initial_spec().validate();
        errs.extend(self.lipschitz().validate());
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            errs.push(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if self.max_iterations < 1 {
            errs.push("max_iterations must be >= 1".into());
        }
        for (name, v) in [
            ("mass", self.mass),
            ("length", self.length),
            ("dt", self.dt),
            ("velocity", self.velocity),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                errs.push(format!("{name} must be > 0, got {v}"));
            }
        }
        if !self.gravity.is_finite() {
            errs.push("gravity must be finite".into());
        }
        for (i, [lo, hi]) in self.obstacle.iter().enumerate() {
            if lo > hi {
                errs.push(format!("obstacle range {i} is empty: [{lo}, {hi}]"));
            }
        }
        if self.system == SystemKind::CustomTable && self.table.is_none() {
            errs.push("custom_table needs a \"table\" path".into());
        }
        if self.oracle_max_pairs == 0 || self.oracle_max_candidates == 0 {
            errs.push("oracle caps must be >= 1".into());
        }
        errs
    }

    pub fn validate(&self) -> Result<()> {
        let errs = self.violations();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(SeeError::Validation(errs))
        }
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Parses one `key=value` override. Values are read as JSON when possible
/// and as bare strings otherwise.
pub fn parse_override(text: &str) -> Result<(String, Value)> {
    let (key, value) = text
        .split_once('=')
        .ok_or_else(|| SeeError::Config(format!("override {text:?} is not key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(SeeError::Config(format!("override {text:?} has an empty key")));
    }
    let value = value.trim();
    let parsed = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
    Ok((key.to_string(), parsed))
}

/// Resolves a JSON config text plus overrides into a validated config.
pub fn parse_config_str(text: &str, overrides: &[String]) -> Result<SeeConfig> {
    let value: Value = serde_json::from_str(text).map_err(|e| SeeError::Config(format!("invalid JSON: {e}")))?;
    let Value::Object(mut map) = value else {
        return Err(SeeError::Config("config must be a JSON object".into()));
    };
    for o in overrides {
        let (k, v) = parse_override(o)?;
        map.insert(k, v);
    }
    resolve(map)
}

/// Reads and resolves a config file.
pub fn parse_config(path: &Path, overrides: &[String]) -> Result<SeeConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| SeeError::io(path, e))?;
    parse_config_str(&text, overrides).map_err(|e| match e {
        SeeError::Config(m) => SeeError::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn resolve(map: Map<String, Value>) -> Result<SeeConfig> {
    if let Some(Value::String(name)) = map.get("system") {
        if !SystemKind::NAMES.contains(&name.as_str()) {
            return Err(SeeError::Config(format!(
                "unknown system {name:?}; valid systems: {}",
                SystemKind::NAMES.join(", ")
            )));
        }
    }
    let raw: RawConfig = serde_json::from_value(Value::Object(map)).map_err(|e| SeeError::Config(e.to_string()))?;
    let system = raw
        .system
        .ok_or_else(|| SeeError::Config(format!("missing key \"system\"; valid systems: {}", SystemKind::NAMES.join(", "))))?;
    let d = SeeConfig::defaults(system);
    let cfg = SeeConfig {
        system,
        r0: raw.r0.unwrap_or(d.r0),
        rx: raw.rx.unwrap_or(d.rx),
        ru: raw.ru.unwrap_or(d.ru),
        known_region: raw.known_region.unwrap_or(d.known_region),
        oob_policy: raw.oob_policy.unwrap_or(d.oob_policy),
        l: raw.l.unwrap_or(d.l),
        lx: raw.lx.unwrap_or(d.lx),
        lu: raw.lu.unwrap_or(d.lu),
        witnesses: raw.witnesses.unwrap_or(d.witnesses),
        calibration: raw.calibration.unwrap_or(d.calibration),
        gamma: raw.gamma.unwrap_or(d.gamma),
        max_iterations: raw.max_iterations.unwrap_or(d.max_iterations),
        boundary: raw.boundary.unwrap_or(d.boundary),
        integrator: raw.integrator.unwrap_or(d.integrator),
        mass: raw.mass.unwrap_or(d.mass),
        length: raw.length.unwrap_or(d.length),
        gravity: raw.gravity.unwrap_or(d.gravity),
        dt: raw.dt.unwrap_or(d.dt),
        velocity: raw.velocity.unwrap_or(d.velocity),
        obstacle: raw.obstacle.unwrap_or(d.obstacle),
        table: raw.table.unwrap_or(d.table),
        export_csv: raw.export_csv.unwrap_or(d.export_csv),
        export_model: raw.export_model.unwrap_or(d.export_model),
        export_pgm: raw.export_pgm.unwrap_or(d.export_pgm),
        audit_log: raw.audit_log.unwrap_or(d.audit_log),
        distance_cache: raw.distance_cache.unwrap_or(d.distance_cache),
        one_shot_check: raw.one_shot_check.unwrap_or(d.one_shot_check),
        oracle_max_pairs: raw.oracle_max_pairs.unwrap_or(d.oracle_max_pairs),
        oracle_max_candidates: raw.oracle_max_candidates.unwrap_or(d.oracle_max_candidates),
    };
    cfg.validate()?;
    Ok(cfg)
}
