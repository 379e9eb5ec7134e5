//! Splitting trees with neutral mutations under infinite alleles: scale
//! functions, the exact expected allele frequency spectrum, coalescent point
//! process simulation and the limit laws of the largest and oldest families.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod config;
pub mod cpp;
pub mod error;
pub mod experiments;
pub mod model;
pub mod numfmt;
pub mod quad;
pub mod scale;
pub mod spectrum;
pub mod forward;

pub use error::{Error, Result};
pub use model::{LifespanModel, Lifetime, ModelParams, Regime, TabulatedTail, DEFAULT_REGIME_TOL};
pub use scale::{ScaleGrid, ScaleMethod};
pub use cpp::{AllelicPartition, CoalescentTree, ExtremeSummary, Family, HaplotypeId, MutationSet};
