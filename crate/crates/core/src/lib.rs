//! Dependency networks over discrete variables: learning, pseudo-Gibbs
//! sampling, exact stationary distributions and full-conditional
//! divergences.

pub mod datagen;
pub mod error;
pub mod exact;
pub mod geometry;
pub mod learning;
pub mod network;
mod par;
pub mod report;
pub mod sampler;
pub mod space;

pub use error::{Error, Result};
pub use exact::{Method, Stationary, TransitionOperator};
pub use geometry::{ExtReal, ScanWeights};
pub use learning::{learn_network, LearnConfig, PenaltySpec};
pub use network::{ConditionalTable, DependencyNetwork, InformationSource, Node, SourceOp};
pub use par::is_parallel;
pub use sampler::{ClampSet, InitialState, ScanPolicy};
pub use space::{Dataset, DenseDistribution, JointState, VariableSpace};
