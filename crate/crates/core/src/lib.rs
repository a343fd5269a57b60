//! Sums of Markovian Bernoulli variables.
//!
//! A sequence `η_1, η_2, …` of 0/1 variables is Markovian when every joint
//! success probability factors through the previous success:
//! `P(η_{j_1}=1, …, η_{j_m}=1) = r(0,j_1) r(j_1,j_2) ⋯ r(j_{m−1},j_m)` with
//! `r(i,j) = 1/ρ(i,j)`. This crate computes the moments of `Σ_{j≤n} η_j`
//! exactly, evaluates the multiple sums that control their growth, predicts
//! the limiting constants, and simulates the branching-process and level-walk
//! models whose success events have this structure.
//!
//! Modules:
//! - [`special`]: Gamma function, the `λ_σ` constant, iterated logarithms and
//!   certified tail sums.
//! - [`multisum`]: exact multiple sums `Φ`, `U`, `Ψ` by dynamic programming
//!   and their asymptotic predictors.
//! - [`kernel`]: success-probability kernels `r(i,j)`.
//! - [`moments`]: exact moments of the success count.
//! - [`simulate`]: exact-law Monte Carlo for Galton–Watson, BPVE and level walks.
//! - [`stats`]: limit laws and empirical comparisons.

// `!(x > 0.0)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod kernel;
pub mod moments;
pub mod multisum;
mod numeric;
pub mod simulate;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
pub use numeric::CompensatedSum;
