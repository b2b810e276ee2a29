//! Module-universality laboratory.
//!
//! Scores building blocks with the universality assessment equation, builds the
//! RB/CRB/DCRB family on a small reverse-mode autograd engine, and checks the
//! residual gradient-flow theory numerically.

pub mod blocks;
pub mod descriptor;
pub mod gradient_lab;
pub mod harness;
pub mod tensor;
pub mod uae;

pub use descriptor::{golden_corpus, ModuleDescriptor};
pub use uae::{evaluate_uae, UaeForm};

/// Default seed used whenever a caller does not supply one.
pub const DEFAULT_SEED: u64 = 42;
