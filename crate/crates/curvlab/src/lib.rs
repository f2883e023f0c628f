//! Curvature lower bounds for finite weighted graphs and for quantum Markov
//! semigroups on matrix algebras.
//!
//! Three families of bounds are computed, certified or falsified:
//! Bakry–Émery (`Γ₂ ≥ KΓ`), intertwining bounds obtained from a Hodge-type
//! operator on the tangent space, and the gradient estimates `GE_Λ(K, ∞)`
//! attached to a mean function `Λ`.

pub mod error;
pub mod graph_core;
pub mod graph_curvature;
pub mod linalg;
pub mod mapping_rep;
pub mod means;
pub mod optimize;
pub mod par;
pub mod qms_core;
pub mod qms_curvature;
pub mod report;

pub use error::{CurvError, Result};
