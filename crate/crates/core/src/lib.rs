//! Parameter transmission-free federated recommendation.
//!
//! A server and many clients train different recommender models by exchanging
//! prediction scores over small item subsets instead of model parameters.
//! The crate simulates the full protocol deterministically, including the
//! client-side privacy mechanisms, the server's confidence/hard hint
//! construction, a top-guess inference attack, a parameter-averaging
//! baseline and exact byte accounting of everything that crosses the wire.

pub mod cli;
pub mod client;
pub mod domain;
pub mod eval;
pub mod models;
pub mod protocol;
pub mod rng;
pub mod server;
