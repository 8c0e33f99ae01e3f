//! Link-level simulation toolkit for OTFS modulation.
//!
//! The crate covers the full chain: delay-Doppler framing and constellations
//! ([`grid`], [`constellation`]), the unitary DD/TF/TD transforms
//! ([`transforms`]), SFFT- and DZT-based modulation with the three prefix
//! schemes and TF windows ([`modem`]), doubly-dispersive channels and their
//! effective matrices ([`channel`]), ambiguity functions and pulse analysis
//! ([`pulse`]), embedded-pilot estimation ([`estimation`]), MMSE / message
//! passing / cross-domain iterative / exhaustive ML detection
//! ([`detection`]), coding and rate analysis ([`coding`]) and the Monte
//! Carlo harness ([`harness`]).
//!
//! Vectorized DD quantities use delay-major order, `q = l + k*M`.

pub mod channel;
pub mod coding;
pub mod constellation;
pub mod detection;
pub mod error;
pub mod estimation;
pub mod grid;
pub mod harness;
pub mod linalg;
pub mod modem;
pub mod pulse;
pub mod rng;
pub mod transforms;

pub use error::{OtfsError, Result};
pub use grid::{CpScheme, DdFrame, FrameParams, ZeroPadPlacement};
