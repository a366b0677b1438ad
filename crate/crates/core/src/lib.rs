//! Desk-scale workbench for affine sieving on arithmetic groups and for
//! strong approximation with a removed codimension-2 subset.
//!
//! The crate covers two group models (`SL2` over the integers and the
//! norm-one group of an indefinite rational quaternion division algebra)
//! and the full pipeline from lattice-point enumeration through local
//! densities, a combinatorial sieve, an almost-prime search, and torus-orbit
//! avoidance, ending in a certificate that is re-verified independently.

pub mod almost_prime;
pub mod factor;
pub mod finite_models;
pub mod groups;
pub mod lattice_enum;
pub mod nt;
pub mod poly;
pub mod serde_big;
pub mod sieve_engine;
pub mod solver;
pub mod torus_avoidance;

pub use groups::{GroupElement, GroupError, GroupModel, GroupSpec, ResidueElement};
pub use poly::{Poly, RegularFunction};
