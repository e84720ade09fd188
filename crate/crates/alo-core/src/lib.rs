//! Aircraft loading optimization toolkit.
//!
//! Formulates the aircraft loading problem (select and place containers of
//! three sizes in `N` bins, maximizing carried mass under payload, center of
//! gravity and shear limits) as a pure binary integer program, generates
//! reproducible benchmark instances, solves them with exact and heuristic
//! backends, optimizes the center of gravity toward a target, and measures
//! runtime scaling against the constraint-matrix size `n_l`.
//!
//! The crate is organized around one exchange format, [`model::ConstraintSystem`]:
//! the model builds it, the solvers consume it, and the exporters serialize it
//! to MPS or JSON.

pub mod bench;
pub mod cgopt;
pub mod error;
pub mod export;
pub mod instance;
pub mod model;
pub mod solver;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
