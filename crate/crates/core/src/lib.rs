//! Gossip-based actor-learner training: asynchronous parameter averaging
//! over directed time-varying graphs, a deterministic simulator with
//! bounded message delays, n-step actor-critic learners, and explicit
//! consensus-distance bounds computed from the delay-augmented mixing
//! matrices of each run.

pub mod engine;
pub mod error;
pub mod harness;
pub mod learners;
pub mod linalg;
pub mod spectral;
pub mod topology;

pub use error::{GalaError, Result};
