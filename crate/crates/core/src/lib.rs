//! Throat-microphone speech enhancement.
//!
//! Speech is split into an all-pole envelope and an LPC residual. The envelope
//! is mapped toward the acoustic-microphone envelope in the LSF domain with
//! joint-GMM MMSE regression, optionally conditioned on phone context, and the
//! residual spectrum is re-tilted by a mapped per-band gain vector before
//! resynthesis.

pub mod config;
pub mod corpus;
pub mod error;
pub mod excitation;
pub mod features;
pub mod gmm;
pub mod lsf;
pub mod mapping;
pub mod metrics;
pub mod model;
pub mod phone;
pub mod pipeline;
pub mod signal;
pub mod synth;

pub use error::{Error, Result};
