//! Multi-level model averaging over a static tree of holons.
//!
//! Terminal holons own data and train locally; every holon averages the
//! models it receives from its subordinates, its neighbors in the enclosing
//! holon and its superior, weighted by data size. FedAvg, peer-to-peer
//! gossip and two-tier hierarchical FedAvg are special holarchies
//! (see [`presets`]).
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the type for the common cases.

pub mod aggregation;
pub mod data;
pub mod holarchy;
pub mod learner;
pub mod param;
pub mod presets;
pub mod protocol;
pub mod scalar;
pub mod sim;

pub use aggregation::{weighted_average, AggregationError, Aggregator, ContributionState, WeightedAverage};
pub use data::{DataError, Dataset, PartitionScheme, SyntheticSpec};
pub use holarchy::{HolarchyError, HolarchySpec, HolonId, HolonKind, Violation};
pub use learner::{Activation, LearnerError, ModelKind, ModelSpec, TrainingConfig};
pub use param::ParamVector;
pub use presets::{PresetError, PresetName};
pub use protocol::{HolonRuntime, ProtocolConfig, ProtocolError, SuperiorMode};
pub use scalar::Scalar;
pub use sim::{ExecutionMode, ExperimentConfig, MetricsRecord, RunReport, SimError, Simulation};

pub type ParamVectorF64 = ParamVector<f64>;
pub type ParamVectorF32 = ParamVector<f32>;
pub type DatasetF64 = Dataset<f64>;
pub type DatasetF32 = Dataset<f32>;
pub type SimulationF64 = Simulation<f64>;
pub type SimulationF32 = Simulation<f32>;
pub type RunReportF64 = RunReport<f64>;
pub type RunReportF32 = RunReport<f32>;
