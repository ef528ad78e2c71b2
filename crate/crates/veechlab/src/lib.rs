//! Exact combinatorics of a family of recursively defined words over
//! {U, D, Z}, the subshift they generate, SL(2,R) cocycles over it, cone
//! contraction estimates, and a coboundary-perturbation pipeline that
//! flattens the cocycle onto its top Oseledets direction.

pub mod cocycle;
pub mod cone;
pub mod config;
pub mod perturb;
pub mod subshift;
pub mod verify;
pub mod words;

pub use words::{Letter, Word, WordParams};
