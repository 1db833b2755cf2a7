//! Keyed-encoder model fingerprinting.
//!
//! An owner's secret key deterministically builds a frozen encoder `E`. Each
//! challenge plaintext `x` becomes a ciphertext prompt `E(x)`, and the
//! fingerprinted model is expected to answer with the Reed-Solomon codeword
//! of `x`. Verification queries a suspect model with `E(x)`, repairs the
//! answer with the RS decoder and scores it against `x` with BLEU.

pub mod attacks;
pub mod encoder;
pub mod error;
pub mod exec;
pub mod gf256;
pub mod harness;
pub mod keymat;
pub mod rs_codec;
pub mod suspect_model;
pub mod verifier;

pub use error::{Error, Result};
pub use exec::Execution;
