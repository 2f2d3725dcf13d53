//! Learning flow maps of parameterized dynamical systems.

pub mod domain;
pub mod error;
pub mod rng;
pub mod data;
pub mod net;
pub mod systems;
pub mod train;
pub mod rollout;
pub mod uq;
pub mod bounds;
pub mod bench;
pub mod cli;

pub use domain::{BoxDomain, DataPair, Dataset, DatasetMeta, ParamVec, StateVec, Trajectory};
pub use error::{FlowError, Result};
pub use rng::{sample_uniform_box, Rng};
