//! Exact finite-stage computations for (noncommutative) Villadsen inductive
//! systems.
//!
//! A system is described by Bratteli data (order units and multiplicity
//! matrices), a finite-dimensional seed algebra, and optionally point
//! evaluation counts. Everything is computed with arbitrary-precision
//! rationals.

#![allow(clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod af_intertwining;
pub mod dimension_system;
pub mod error;
pub mod exact;
pub mod gen;
pub mod matrix;
pub mod partition_scheme;
pub mod poulsen_density;
pub mod trace_tower;

pub use dimension_system::{
    compose, simplicity_verdict, trace_pullback_matrix, unique_trace_diagnostic, validate, DimensionSystem, IntMatrix,
    LevelSpec, RatMatrix, StochasticMatrix, TailRule, TailStep, ValidationReport, Violation, ViolationKind,
};
pub use error::{Error, Result};
pub use exact::{Int, Rational};
pub use matrix::Matrix;
pub use partition_scheme::{
    canonical_partition, composed_layout, intertwiner, validate_partition, verify_commutation, BlockLayout,
    ElementaryTensorLabel, LevelPermutationFamily, PartitionScheme, Symbol,
};
pub use poulsen_density::{certify, quantize_measure, recheck_certificate, CertificateVerdict, Neighborhood, PoulsenCertificate};
pub use trace_tower::{AFTrace, LevelTrace, Measure, Observable, SeedAlgebra, TraceTower, ValueFn, Word};
pub use af_intertwining::{AFVilladsenSystem, IntertwiningReport, IntertwiningVerdict, Mode, SubsequenceOptions};
