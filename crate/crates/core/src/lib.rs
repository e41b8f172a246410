//! Exact linear algebra over prime fields, product-matrix minimum storage
//! regenerating (MSR) codes, and a private information retrieval scheme that
//! runs on top of an MSR-coded cluster.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is a pure
//! function of its inputs; IO, persistence and networking live in the
//! `pmsr-cluster` companion crate.
//!
//! Layering, bottom-up:
//!
//! * [`field`]: arithmetic in GF(q) for prime q < 2³².
//! * [`matrix`]: dense matrices, Gauss–Jordan inversion, solves, rank.
//! * [`msr`]: the `(n, k, 2k−2, k−1, 1, k(k−1))` product-matrix MSR code,
//!   any-k recovery and exact single-node repair.
//! * [`pir`]: query generation, node answers, interference cancellation and
//!   decoding for the `n = 3k−3` retrieval scheme, plus its cost metrics.

#![cfg_attr(not(feature = "std"), no_std)]
#![warn(missing_debug_implementations)]

extern crate alloc;

pub mod field;
pub mod matrix;
pub mod msr;
pub mod pir;

pub use field::{Field, FieldElement, FieldError};
pub use matrix::{Matrix, MatrixError};

pub use msr::{CodeMatrix, EncodingMatrix, MessageMatrix, MsrError, MsrParams};
pub use pir::{
    Answer, MetricsReport, PatternMatrix, PirConfig, PirError, QueryMask, QueryMatrix,
    SchemeReport,
};
