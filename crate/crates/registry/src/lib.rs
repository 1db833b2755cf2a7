//! Registration authority for keyed fingerprints.
//!
//! The authority samples each owner's key, keeps only its digest, assigns a
//! challenge dataset and hands out challenges so that no id is ever issued
//! twice to the same owner, across concurrent callers and restarts.

pub mod error;
pub mod http;
pub mod store;

pub use error::RegistryError;
pub use store::{ChallengeItem, ChallengeSet, FailPoint, FingerprintRecord, Registry, RegistryOptions};
