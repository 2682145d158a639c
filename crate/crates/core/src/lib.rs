//! Stability classification of planar switched linear systems
//! `ẋ = u A₁x + (1 − u) A₂x` with two Hurwitz modes.
//!
//! The decision is exact: it reads the verdict off closed-form invariants of
//! the pair (see [`invariants`]) and attaches a certificate (a quadratic
//! Lyapunov function, an unstable averaged direction, or the worst
//! trajectory). The [`simulate`] module provides exact piecewise simulation
//! used to cross-check verdicts.

pub mod classify;
pub mod cli;
pub mod error;
pub mod invariants;
pub mod lyapunov;
pub mod mat2;
pub mod normal_form;
pub mod simulate;
pub mod worst_traj;

pub use error::{Error, Result};
pub use mat2::{Mat2, Vec2};
