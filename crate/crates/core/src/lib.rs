//! Promise verification for corporate ESG text.
//!
//! The crate covers the whole pipeline: record ingestion and stratified
//! splits ([`corpus`]), rule-based feature tags ([`featurizer`]), a small
//! reverse-mode autodiff engine ([`autograd`]) driving a toy transformer
//! encoder ([`encoder`]) and the attention-pooled multi-task heads
//! ([`net`]), training regimes ([`trainer`]), test-time augmentation
//! ([`inference`]) and metrics plus submission assembly ([`eval`]).

pub mod autograd;
pub mod config;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod featurizer;
pub mod hashing;
pub mod inference;
pub mod layers;
pub mod net;
pub mod optim;
pub mod params;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
