//! Training networks as a linear combination of seeded pseudo-random basis
//! models.
//!
//! A model with `d` parameters is written `theta = theta0 + sum_j alpha_j *
//! basis_j`, where every `basis_j` is regenerated on demand from a master
//! seed and only the `k` coefficients (plus batchnorm running statistics)
//! are learned and stored.

pub mod baselines;
pub mod basis;
pub mod codec;
pub mod data;
mod error;
pub mod exec;
pub mod nn;
pub mod reconstruct;
pub mod trainer;

pub use basis::{BasisSpec, ParameterSchema, StreamConfig};
pub use codec::{pack, unpack, PrancPacket};
pub use error::{PrancError, Result};
pub use exec::Exec;
pub use nn::{Model, ModelDef};
