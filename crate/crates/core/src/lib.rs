//! Safe exploration of unknown deterministic systems on integer grids.
//!
//! An [`UncertainModel`] assigns every state-action pair a set of candidate
//! successors that always contains the true one. The [`Explorer`] alternates
//! two steps until neither changes anything:
//!
//! 1. compute the maximum feasible zone of the current model, the pairs from
//!    which the constraint can be satisfied forever whatever candidate
//!    materializes, and observe the true transitions inside it;
//! 2. remove candidates of pairs outside the zone that no Lipschitz
//!    continuous dynamics agreeing with the rest of the model can produce.
//!
//! ```
//! use see_core::{DiscreteSystem, true_model_baseline};
//!
//! let system = DiscreteSystem::double_integrator();
//! assert_eq!(system.num_pairs(), 6355);
//! assert!(true_model_baseline(&system).len() > 0);
//! ```

pub mod config;
pub mod driver;
pub mod error;
pub mod experiment;
pub mod export;
pub mod grid;
pub mod model;
pub mod prune;
pub mod system;
pub mod threads;
pub mod verify;
pub mod zone;

pub use config::{parse_config, parse_config_str, Calibration, SeeConfig};
pub use driver::{check_equilibrium, summarize_metrics, Explorer, ModelUpdate, RunResult, RunStatus, SummaryRow};
pub use error::{Result, SeeError};
pub use experiment::{run_see, Experiment, Summary};
pub use grid::{Axis, GridSpec, IndexRange};
pub use model::{InitialModelSpec, OobPolicy, UdScope, UncertainModel};
pub use prune::{
    exact_least_uncertain, exact_removable, lipschitz_adjacent, prune_second_kind, LipschitzSpec, OracleLimits,
    Pruner, Vertex, Witnesses,
};
pub use system::{
    ActionRef, BoundaryMode, DiscreteSystem, Integrator, PendulumParams, StateRef, Successor, SystemKind,
    SystemTable, UnicycleParams,
};
pub use verify::{verify_run, VerifyReport};
pub use zone::{
    cdf_iteration, extract_zone, feasible_actions, horizon_iteration, maximum_feasible_zone, recall_metric,
    true_model_baseline, FeasibleZone, HorizonField,
};
