//! Key material: secret keys, HMAC-SHA256, per-layer seed derivation and the
//! counter-mode random stream that every encoder weight is drawn from.
//!
//! Everything here is a pure function of its inputs. Two processes on two
//! machines given the same key rebuild the same encoder bit for bit.

use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Default key length in hex digits.
pub const DEFAULT_KEY_DIGITS: usize = 32;

const SHA256_BLOCK: usize = 64;
const IPAD: u8 = 0x36;
const OPAD: u8 = 0x5c;

/// HMAC (RFC 2104) over SHA-256.
pub fn hmac_sha256(key: &[u8], message: &[u8]) -> [u8; 32] {
    let mut block = [0u8; SHA256_BLOCK];
    if key.len() > SHA256_BLOCK {
        block[..32].copy_from_slice(&Sha256::digest(key));
    } else {
        block[..key.len()].copy_from_slice(key);
    }

    let mut inner = Sha256::new();
    inner.update(block.map(|b| b ^ IPAD));
    inner.update(message);
    let inner = inner.finalize();

    let mut outer = Sha256::new();
    outer.update(block.map(|b| b ^ OPAD));
    outer.update(inner);
    outer.finalize().into()
}

/// Owner secret: `k` lowercase hex digits.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SecretKey {
    hex: String,
}

impl SecretKey {
    /// Draws `digits` hex digits from `entropy`, four bits per digit (high
    /// nibble first).
    pub fn sample<R: Read>(entropy: &mut R, digits: usize) -> Result<Self> {
        if digits == 0 {
            return Err(Error::domain("key length must be at least one hex digit"));
        }
        let mut bytes = vec![0u8; digits.div_ceil(2)];
        entropy
            .read_exact(&mut bytes)
            .map_err(|_| Error::EntropyExhausted { needed_bits: 4 * digits })?;
        let mut hex = hex_lower(&bytes);
        hex.truncate(digits);
        Ok(Self { hex })
    }

    /// Samples a fresh key from the operating system RNG.
    pub fn generate(digits: usize) -> Result<Self> {
        let mut os = OsEntropy;
        Self::sample(&mut os, digits)
    }

    pub fn parse(hex: &str) -> Result<Self> {
        if hex.is_empty() {
            return Err(Error::domain("empty key"));
        }
        if !hex.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)) {
            return Err(Error::domain("key must be lowercase hex"));
        }
        Ok(Self { hex: hex.to_owned() })
    }

    pub fn as_hex(&self) -> &str {
        &self.hex
    }

    /// Number of hex digits.
    pub fn digits(&self) -> usize {
        self.hex.len()
    }

    /// log2 of the keyspace size (`4k`).
    pub fn keyspace_bits(&self) -> usize {
        4 * self.hex.len()
    }

    /// Returns a copy with the digit at `pos` replaced by `digit`.
    pub fn with_digit(&self, pos: usize, digit: u8) -> Result<Self> {
        if pos >= self.hex.len() || digit > 15 {
            return Err(Error::domain("digit position or value out of range"));
        }
        let mut bytes = self.hex.clone().into_bytes();
        bytes[pos] = HEX_DIGITS[digit as usize];
        Ok(Self { hex: String::from_utf8(bytes).expect("hex is ascii") })
    }

    /// Hex-encoded SHA-256 of the key string; what the registry stores.
    pub fn digest_hex(&self) -> String {
        hex_lower(&Sha256::digest(self.hex.as_bytes()))
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // never print key material in debug output
        write!(f, "SecretKey({} digits)", self.hex.len())
    }
}

impl fmt::Display for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.hex)
    }
}

impl FromStr for SecretKey {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s.trim())
    }
}

impl TryFrom<String> for SecretKey {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        Self::parse(&s)
    }
}

impl From<SecretKey> for String {
    fn from(k: SecretKey) -> String {
        k.hex
    }
}

struct OsEntropy;

impl Read for OsEntropy {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        use rand::TryRngCore;
        rand::rngs::OsRng
            .try_fill_bytes(buf)
            .map_err(|e| std::io::Error::other(e.to_string()))?;
        Ok(buf.len())
    }
}

/// Seed for layer `layer_index` of the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerSeed {
    pub value: u64,
    pub layer_index: u32,
}

/// `int(HMAC-SHA256(K, str(i))) mod 2^k`, with `K` keyed as its ASCII hex
/// string and `k` the key length in hex digits.
///
/// The stream seed is serialized as 8 bytes, so the modulus saturates at
/// 2^64 for keys longer than 64 digits.
pub fn derive_layer_seed(key: &SecretKey, layer_index: u32) -> Result<LayerSeed> {
    if layer_index < 1 {
        return Err(Error::domain("layer index starts at 1"));
    }
    let digest = hmac_sha256(key.as_hex().as_bytes(), layer_index.to_string().as_bytes());
    let low = u64::from_be_bytes(digest[24..32].try_into().expect("8 bytes"));
    let bits = key.digits().min(64) as u32;
    let value = if bits == 64 { low } else { low & ((1u64 << bits) - 1) };
    Ok(LayerSeed { value, layer_index })
}

/// HMAC-in-counter-mode stream of reals in `[0, 1)`.
///
/// Value `j` is the top 53 bits of `HMAC(seed_be8, j_be8)` divided by 2^53.
#[derive(Debug, Clone)]
pub struct DrbgStream {
    key: [u8; 8],
    counter: u64,
}

impl DrbgStream {
    pub fn new(seed: LayerSeed) -> Self {
        Self { key: seed.value.to_be_bytes(), counter: 0 }
    }

    pub fn position(&self) -> u64 {
        self.counter
    }
}

impl Iterator for DrbgStream {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        let d = hmac_sha256(&self.key, &self.counter.to_be_bytes());
        self.counter += 1;
        let top = u64::from_be_bytes(d[..8].try_into().expect("8 bytes")) >> 11;
        Some(top as f64 / (1u64 << 53) as f64)
    }
}

pub fn drbg_stream(seed: LayerSeed, count: usize) -> Vec<f64> {
    DrbgStream::new(seed).take(count).collect()
}

const HEX_DIGITS: &[u8; 16] = b"0123456789abcdef";

pub(crate) fn hex_lower(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push(HEX_DIGITS[(b >> 4) as usize] as char);
        s.push(HEX_DIGITS[(b & 15) as usize] as char);
    }
    s
}
