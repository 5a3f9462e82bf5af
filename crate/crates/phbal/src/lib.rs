//! Structure-preserving model reduction and LQG controller synthesis for
//! linear port-Hamiltonian systems.

extern crate openblas_src;

pub mod balancing;
pub mod benchmarks;
pub mod bounds;
pub mod error;
pub mod io;
pub mod kyp;
pub mod linalg;
pub mod lqg;
pub mod mateq;
pub mod ph;
pub mod sweep;

pub use error::{Error, Result};
pub use linalg::Mat;
pub use ph::{CoEnergyPh, PhSystem, StateSpace};
