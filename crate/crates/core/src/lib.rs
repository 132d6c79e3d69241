//! Fiberwise Ricci-flat metrics on families of flat complex tori over a one-dimensional base.
//!
//! Fibers are `C^n / (Z^n + Ω Z^n)` sampled on uniform lattices in the real coordinates
//! `ξ = (x, y)`. All fiber calculus is spectral; base derivatives are central differences on a
//! stencil of nearby fibers.

pub mod chart;
pub mod continuation;
pub mod derivatives;
pub mod error;
pub mod exterior;
pub mod field;
pub mod geometry;
pub mod gmres;
pub mod green;
pub mod grid;
pub mod hyperdual;
pub mod lattice;
pub mod models;
pub mod oracle;
pub mod random;
pub mod solver;
pub mod spectral;

pub use chart::FiberChart;
pub use error::{Error, Result};
pub use field::{CMat, FiberMetric, HermitianField};
pub use grid::{FiberGrid, Transform};
pub use models::{make_family, Family, FamilyKind, FamilySpec, OmegaKind, OmegaSample, PotentialTerm};
pub use solver::{compute_eta, linearized_solve, solve_ma, MaProblem, MaSolution, Normalization, SolverConfig};
pub use spectral::{Deriv, Spectral, Volume};
