//! Simulation laboratory for jointly adaptive federated optimization.

pub mod bounds;
pub mod config;
pub mod cover;
pub mod engine;
pub mod error;
pub mod ledger;
pub mod local;
pub mod metrics;
pub mod numeric;
pub mod problems;
pub mod server;
pub mod verify;

pub use bounds::{
    compute_c_beta, fit_rate, heavy_tail_report, phi1_bound, phi2_bound, theorem_rhs, BoundInputs,
    BoundReport, HeavyTailReport,
};
pub use config::{parse_config, ConfigErrors, ExperimentConfig, ProblemSpec};
pub use cover::{
    build_cover, cover_stats, validate_cover, Cover, CoverPolicy, CoverStats, ShapeManifest,
};
pub use engine::{
    aggregate, local_train, privatize, run_ensemble, run_experiment, sample_clients, Assignment,
    ClientDelta, ClientSchedule, Engine, EngineConfig, OptimizerStrategy, PrivacyConfig,
};
pub use error::{ConfigError, CoverError, EngineError, FitError, IngestError, OptimError};
pub use ledger::{
    record_round, summarize, ClientSlot, LedgerSummary, RoundCost, RoundRecord, TransmissionMode,
};
pub use local::{LocalOptConfig, LocalOptKind, LocalOptState, StrategyBounds};
pub use metrics::{emit_metrics, load_metrics};
pub use numeric::{derive_stream, sample_noise, NoiseSpec, ParamVector, RngStream};
pub use problems::{Dataset, LogisticProblem, Problem, QuadraticProblem, SyntheticLogistic};
pub use server::{ServerConfig, ServerKind, ServerState};
