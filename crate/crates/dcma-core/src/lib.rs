//! Dense code multiple access (DCMA) laboratory.
//!
//! Builds power-imbalanced dense codebooks by deleting rows of a
//! non-unimodular circulant matrix, scores them with pairwise-error-derived
//! distance metrics (MED, minimum product distance, MLSD), detects with a
//! generalized sphere decoder, estimates BER by Monte-Carlo over Nakagami-m
//! fading, and re-runs the codebook optimization.
//!
//! Module map:
//! - [`codebook`]: circulant construction, row deletion, normalization.
//! - [`metrics`]: PEP formulas, difference enumeration, distance metrics,
//!   union bounds.
//! - [`channel`]: Nakagami/Rayleigh/AWGN sampling with reproducible streams.
//! - [`detector`]: generalized sphere decoder and its exhaustive oracle.
//! - [`simulation`]: deterministic parallel BER sweeps.
//! - [`optimizer`]: multi-start Nelder-Mead over the generator parameters.

pub mod channel;
pub mod codebook;
pub mod detector;
pub mod io;
pub mod metrics;
pub mod optimizer;
pub mod simulation;

pub use channel::{ChannelKind, ChannelModel, RngStream};
pub use codebook::{Codebook, CodebookError, GeneratorVector, Provenance};
pub use metrics::{Alphabet, EnumPolicy, MetricContext};
