//! Anisotropic mesh adaptation for linear finite elements driven by a global
//! hierarchical basis error estimate, with a Hessian-recovery baseline.

pub mod adapt;
pub mod bench;
pub mod error;
pub mod fem;
pub mod hb;
pub mod io;
pub mod linalg;
pub mod locate;
pub mod mesh;
pub mod metric;
pub mod problems;
pub mod quadrature;
pub mod recovery;
pub mod remesh;

pub use error::{Error, Result};
