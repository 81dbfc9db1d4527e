//! Minimal quantum dynamical semigroups on finite truncations.
//!
//! A model is a pair (G, L_ℓ) of matrices. From it the crate builds the
//! completely positive resolvent maps P_λ, Q_λ, the Neumann-series resolvent
//! of the minimal semigroup, the defect sequence Q_λⁿ(I) that decides
//! conservativity, and certificates based on a reference operator C.
//!
//! Modules:
//! - [`operators`]: models, the dissipation defect, generator and Sylvester solves
//! - [`resolvent`]: P_λ, Q_λ, Neumann resolvent, defect iteration
//! - [`timedomain`]: master-equation evolution and Picard iterates
//! - [`criteria`]: F_n, Φ, b estimation, dominance and certificates
//! - [`models`]: half-line discretizations, heavy-ion 1-D analog, birth chain
//! - [`oracle`]: classical generators, Monte Carlo, explosion test

pub mod criteria;
pub mod error;
pub mod gallery;
pub mod linalg;
pub mod models;
pub mod operators;
pub mod oracle;
pub mod resolvent;
pub mod timedomain;

pub use error::{Error, Result};
pub use linalg::{CMat, CVec};
pub use operators::{check_condition_a, Classification, ConditionAReport, GKSLModel, GridMeta};
pub use resolvent::{DefectSequence, ResolventConfig, Verdict};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
