//! The frozen keyed encoder `E` and its ciphertext rendering.
//!
//! Each layer is a residual update `h <- h + f_i(h)` whose weights are drawn
//! from the counter-mode stream seeded by `derive_layer_seed(K, i)`. For the
//! linear variant the whole encoder is the matrix product `prod (I + W_i)`.
//! Outputs are clamped to `[-R, R]`, quantized to one byte per coordinate and
//! rendered as two hex digits.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::keymat::{derive_layer_seed, hex_lower, DrbgStream, SecretKey};

/// Clamp range of encoder outputs before quantization.
pub const OUTPUT_RANGE: f64 = 2.0;
pub const DEFAULT_MAX_PLAINTEXT: usize = 512;

const MAGIC: &[u8; 4] = b"KPEN";
const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    #[default]
    LinearResidual,
    /// Kernel width 3 over the block sequence, GELU activation.
    ConvResidual,
    /// Single head; `W_q, W_k, W_v, W_o`.
    AttentionResidual,
}

impl Architecture {
    fn matrices_per_layer(self) -> usize {
        match self {
            Architecture::LinearResidual => 1,
            Architecture::ConvResidual => 3,
            Architecture::AttentionResidual => 4,
        }
    }

    fn fan_in(self, dim: usize) -> usize {
        match self {
            Architecture::ConvResidual => 3 * dim,
            _ => dim,
        }
    }

    fn tag(self) -> u8 {
        self as u8
    }

    fn from_tag(tag: u8) -> Option<Self> {
        [Self::LinearResidual, Self::ConvResidual, Self::AttentionResidual].get(tag as usize).copied()
    }
}

impl std::str::FromStr for Architecture {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear-residual" | "linear" => Ok(Self::LinearResidual),
            "conv-residual" | "conv" => Ok(Self::ConvResidual),
            "attention-residual" | "attention" => Ok(Self::AttentionResidual),
            other => Err(Error::Config(format!("unknown architecture {other:?}"))),
        }
    }
}

/// How `weight_bound` turns into a per-entry magnitude bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WeightScaling {
    /// `|w| <= weight_bound / sqrt(fan_in)`.
    #[default]
    FanIn,
    /// `|w| <= weight_bound / d`: every `I + W_i` is strictly diagonally
    /// dominant, but cross-coordinate coupling falls below one quantization
    /// step and input avalanche sits near 0.2.
    DiagonallyDominant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub num_layers: usize,
    pub dim: usize,
    pub architecture: Architecture,
    pub dense_epsilon: f64,
    pub weight_bound: f64,
    #[serde(default)]
    pub scaling: WeightScaling,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            num_layers: 2,
            dim: 32,
            architecture: Architecture::LinearResidual,
            dense_epsilon: 1e-6,
            weight_bound: 0.9,
            scaling: WeightScaling::FanIn,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_layers < 1 {
            return Err(Error::Config("num_layers must be >= 1".into()));
        }
        if self.dim < 2 {
            return Err(Error::Config("dim must be >= 2".into()));
        }
        if !(self.weight_bound > 0.0 && self.weight_bound < 1.0) {
            return Err(Error::Config("weight_bound must lie in (0, 1)".into()));
        }
        if !(self.dense_epsilon > 0.0 && self.dense_epsilon < self.entry_bound()) {
            return Err(Error::Config("dense_epsilon must be positive and below the entry bound".into()));
        }
        Ok(())
    }

    /// Largest admissible magnitude of a single weight entry.
    pub fn entry_bound(&self) -> f64 {
        match self.scaling {
            WeightScaling::FanIn => self.weight_bound / (self.architecture.fan_in(self.dim) as f64).sqrt(),
            WeightScaling::DiagonallyDominant => self.weight_bound / self.dim as f64,
        }
    }
}

/// Row-major `d x d` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    dim: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn identity(dim: usize) -> Self {
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = 1.0;
        }
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.dim + col]
    }

    fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        for (row, o) in self.data.chunks_exact(self.dim).zip(out.iter_mut()) {
            *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    pub fn mul(&self, rhs: &Matrix) -> Matrix {
        let d = self.dim;
        let mut data = vec![0.0; d * d];
        for i in 0..d {
            for k in 0..d {
                let a = self.data[i * d + k];
                for j in 0..d {
                    data[i * d + j] += a * rhs.data[k * d + j];
                }
            }
        }
        Matrix { dim: d, data }
    }

    fn add_identity(&self) -> Matrix {
        let mut m = self.clone();
        for i in 0..self.dim {
            m.data[i * self.dim + i] += 1.0;
        }
        m
    }

    fn norm_1(&self) -> f64 {
        (0..self.dim)
            .map(|j| (0..self.dim).map(|i| self.get(i, j).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Gauss-Jordan inverse with partial pivoting.
    pub fn inverse(&self) -> Option<Matrix> {
        let d = self.dim;
        let mut a = self.data.clone();
        let mut inv = Matrix::identity(d).data;
        for col in 0..d {
            let pivot = (col..d).max_by(|&x, &y| a[x * d + col].abs().total_cmp(&a[y * d + col].abs()))?;
            if a[pivot * d + col].abs() < 1e-300 {
                return None;
            }
            for j in 0..d {
                a.swap(col * d + j, pivot * d + j);
                inv.swap(col * d + j, pivot * d + j);
            }
            let p = a[col * d + col];
            for j in 0..d {
                a[col * d + j] /= p;
                inv[col * d + j] /= p;
            }
            for r in 0..d {
                if r != col {
                    let f = a[r * d + col];
                    if f != 0.0 {
                        for j in 0..d {
                            a[r * d + j] -= f * a[col * d + j];
                            inv[r * d + j] -= f * inv[col * d + j];
                        }
                    }
                }
            }
        }
        Some(Matrix { dim: d, data: inv })
    }

    /// 1-norm condition number; infinite when singular.
    pub fn condition_number(&self) -> f64 {
        match self.inverse() {
            Some(inv) => self.norm_1() * inv.norm_1(),
            None => f64::INFINITY,
        }
    }
}

/// Weights of one residual layer. Matrix order: linear `[W]`; conv taps
/// `[W_-1, W_0, W_+1]`; attention `[W_q, W_k, W_v, W_o]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub matrices: Vec<Matrix>,
}

/// A frozen encoder. There is no API that mutates weights after build.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    config: EncoderConfig,
    layers: Vec<Layer>,
}

impl Encoder {
    pub fn build(key: &SecretKey, config: &EncoderConfig) -> Result<Self> {
        config.validate()?;
        let bound = config.entry_bound();
        let d = config.dim;
        let per_layer = config.architecture.matrices_per_layer();
        let mut layers = Vec::with_capacity(config.num_layers);
        for i in 1..=config.num_layers {
            let seed = derive_layer_seed(key, i as u32)?;
            let mut stream = DrbgStream::new(seed)
                .map(|u| (2.0 * u - 1.0) * bound)
                .filter(|w| w.abs() >= config.dense_epsilon);
            let matrices = (0..per_layer)
                .map(|_| Matrix { dim: d, data: stream.by_ref().take(d * d).collect() })
                .collect();
            layers.push(Layer { matrices });
        }
        Ok(Self { config: config.clone(), layers })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|l| l.matrices.iter()).flat_map(|m| m.data.iter().copied())
    }

    /// `prod_i (I + W_i)` for the linear variant, applied last-layer-leftmost.
    pub fn linear_map(&self) -> Option<Matrix> {
        if self.config.architecture != Architecture::LinearResidual {
            return None;
        }
        let mut m = Matrix::identity(self.config.dim);
        for layer in &self.layers {
            m = layer.matrices[0].add_identity().mul(&m);
        }
        Some(m)
    }

    /// Runs the residual stack over a sequence of blocks, pre-quantization.
    pub fn forward(&self, blocks: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let d = self.config.dim;
        let mut h: Vec<Vec<f64>> = blocks.to_vec();
        if h.iter().any(|b| b.len() != d) {
            return Err(Error::domain("block length differs from encoder dim"));
        }
        for layer in &self.layers {
            h = match self.config.architecture {
                Architecture::LinearResidual => linear_step(&layer.matrices[0], &h),
                Architecture::ConvResidual => conv_step(&layer.matrices, &h),
                Architecture::AttentionResidual => attention_step(&layer.matrices, &h),
            };
        }
        if h.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(h)
    }

    pub fn encode(&self, plaintext: &Plaintext) -> Result<Ciphertext> {
        self.encode_bytes(plaintext.as_bytes())
    }

    /// Encodes raw bytes; `encode` is this plus plaintext validation.
    pub fn encode_bytes(&self, bytes: &[u8]) -> Result<Ciphertext> {
        let blocks = bytes_to_blocks(bytes, self.config.dim);
        let out = self.forward(&blocks)?;
        let quantized: Vec<u8> = out.iter().flatten().map(|&v| quantize(v)).collect();
        Ok(Ciphertext { hex: hex_lower(&quantized), block_count: blocks.len(), dim: self.config.dim })
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let c = &self.config;
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&[c.architecture.tag(), c.scaling as u8])?;
        w.write_all(&(c.num_layers as u32).to_le_bytes())?;
        w.write_all(&(c.dim as u32).to_le_bytes())?;
        w.write_all(&c.dense_epsilon.to_le_bytes())?;
        w.write_all(&c.weight_bound.to_le_bytes())?;
        for v in self.weights() {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = u16::from_le_bytes(read_n(&mut r)?);
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let [arch, scaling] = read_n::<2, _>(&mut r)?;
        let config = EncoderConfig {
            architecture: Architecture::from_tag(arch).ok_or_else(|| Error::Format("bad architecture tag".into()))?,
            scaling: match scaling {
                0 => WeightScaling::FanIn,
                1 => WeightScaling::DiagonallyDominant,
                _ => return Err(Error::Format("bad scaling tag".into())),
            },
            num_layers: u32::from_le_bytes(read_n(&mut r)?) as usize,
            dim: u32::from_le_bytes(read_n(&mut r)?) as usize,
            dense_epsilon: f64::from_le_bytes(read_n(&mut r)?),
            weight_bound: f64::from_le_bytes(read_n(&mut r)?),
        };
        config.validate().map_err(|e| Error::Format(e.to_string()))?;
        let d = config.dim;
        let mut layers = Vec::with_capacity(config.num_layers);
        for _ in 0..config.num_layers {
            let mut matrices = Vec::new();
            for _ in 0..config.architecture.matrices_per_layer() {
                let mut data = Vec::with_capacity(d * d);
                for _ in 0..d * d {
                    data.push(f64::from_le_bytes(read_n(&mut r)?));
                }
                matrices.push(Matrix { dim: d, data });
            }
            layers.push(Layer { matrices });
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Format("trailing bytes".into()));
        }
        Ok(Self { config, layers })
    }
}

fn read_n<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|_| Error::Format("truncated file".into()))?;
    Ok(buf)
}

fn linear_step(w: &Matrix, h: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut tmp = vec![0.0; w.dim];
    h.iter()
        .map(|x| {
            w.mul_vec(x, &mut tmp);
            x.iter().zip(&tmp).map(|(a, b)| a + b).collect()
        })
        .collect()
}

fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh())
}

fn conv_step(taps: &[Matrix], h: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = taps[0].dim;
    let mut tmp = vec![0.0; d];
    (0..h.len())
        .map(|l| {
            let mut acc = vec![0.0; d];
            for (t, w) in taps.iter().enumerate() {
                let src = l as isize + t as isize - 1;
                if src < 0 || src as usize >= h.len() {
                    continue;
                }
                w.mul_vec(&h[src as usize], &mut tmp);
                acc.iter_mut().zip(&tmp).for_each(|(a, b)| *a += b);
            }
            h[l].iter().zip(&acc).map(|(x, a)| x + gelu(*a)).collect()
        })
        .collect()
}

fn attention_step(w: &[Matrix], h: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = w[0].dim;
    let project = |m: &Matrix| -> Vec<Vec<f64>> {
        h.iter()
            .map(|x| {
                let mut out = vec![0.0; d];
                m.mul_vec(x, &mut out);
                out
            })
            .collect()
    };
    let (q, k, v) = (project(&w[0]), project(&w[1]), project(&w[2]));
    let scale = (d as f64).sqrt();
    let mut out_proj = vec![0.0; d];
    (0..h.len())
        .map(|l| {
            let scores: Vec<f64> =
                k.iter().map(|km| q[l].iter().zip(km).map(|(a, b)| a * b).sum::<f64>() / scale).collect();
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exp: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let z: f64 = exp.iter().sum();
            let mut ctx = vec![0.0; d];
            for (a, vm) in exp.iter().zip(&v) {
                ctx.iter_mut().zip(vm).for_each(|(c, x)| *c += a / z * x);
            }
            w[3].mul_vec(&ctx, &mut out_proj);
            h[l].iter().zip(&out_proj).map(|(x, o)| x + o).collect()
        })
        .collect()
}

/// Clamps to `[-R, R]` and maps linearly onto `0..=255`.
pub fn quantize(v: f64) -> u8 {
    let clamped = v.clamp(-OUTPUT_RANGE, OUTPUT_RANGE);
    (((clamped + OUTPUT_RANGE) / (2.0 * OUTPUT_RANGE) * 256.0).floor()).min(255.0) as u8
}

/// Challenge plaintext `x`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Plaintext(String);

impl Plaintext {
    pub fn new(text: impl Into<String>) -> Result<Self> {
        Self::with_limit(text, DEFAULT_MAX_PLAINTEXT)
    }

    pub fn with_limit(text: impl Into<String>, max_bytes: usize) -> Result<Self> {
        let text = text.into();
        if text.is_empty() {
            return Err(Error::domain("plaintext must be non-empty"));
        }
        if text.len() > max_bytes {
            return Err(Error::domain(format!("plaintext is {} bytes, limit {max_bytes}", text.len())));
        }
        Ok(Self(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn as_bytes(&self) -> &[u8] {
        self.0.as_bytes()
    }
}

/// Rendered ciphertext `y = E(x)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Ciphertext {
    hex: String,
    block_count: usize,
    dim: usize,
}

impl Ciphertext {
    pub fn as_hex(&self) -> &str {
        &self.hex
    }

    pub fn block_count(&self) -> usize {
        self.block_count
    }

    /// Hex digits belonging to block `i`.
    pub fn block(&self, i: usize) -> &str {
        let w = 2 * self.dim;
        &self.hex[i * w..(i + 1) * w]
    }

    pub fn into_hex(self) -> String {
        self.hex
    }
}

pub fn text_to_blocks(plaintext: &Plaintext, dim: usize) -> Vec<Vec<f64>> {
    bytes_to_blocks(plaintext.as_bytes(), dim)
}

pub fn bytes_to_blocks(bytes: &[u8], dim: usize) -> Vec<Vec<f64>> {
    bytes
        .chunks(dim)
        .map(|chunk| {
            let mut block: Vec<f64> = chunk.iter().map(|&b| b as f64 / 256.0).collect();
            block.resize(dim, 0.0);
            block
        })
        .collect()
}

/// Inverse of `bytes_to_blocks`; trailing zero padding is dropped.
pub fn blocks_to_text(blocks: &[Vec<f64>]) -> String {
    let mut bytes: Vec<u8> = blocks.iter().flatten().map(|v| (v * 256.0).round().clamp(0.0, 255.0) as u8).collect();
    while bytes.last() == Some(&0) {
        bytes.pop();
    }
    String::from_utf8_lossy(&bytes).into_owned()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AvalancheReport {
    pub trials: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl AvalancheReport {
    pub fn from_fractions(fractions: &[f64]) -> Self {
        let n = fractions.len() as f64;
        let mean = fractions.iter().sum::<f64>() / n;
        let var = fractions.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        Self {
            trials: fractions.len(),
            mean,
            std: var.sqrt(),
            min: fractions.iter().copied().fold(f64::INFINITY, f64::min),
            max: fractions.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

pub const MIN_AVALANCHE_TRIALS: usize = 100;

/// Fraction of positions at which two equal-length hex strings differ.
pub fn hex_digit_difference(a: &str, b: &str) -> f64 {
    assert_eq!(a.len(), b.len(), "hex strings must have equal length");
    let diff = a.bytes().zip(b.bytes()).filter(|(x, y)| x != y).count();
    diff as f64 / a.len() as f64
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

fn random_printable(rng: &mut ChaCha8Rng, len: usize) -> Vec<u8> {
    (0..len).map(|_| rng.random_range(0x20u8..0x7f)).collect()
}

fn random_key(rng: &mut ChaCha8Rng) -> SecretKey {
    let mut bytes = [0u8; 16];
    rng.fill(&mut bytes);
    SecretKey::sample(&mut &bytes[..], crate::keymat::DEFAULT_KEY_DIGITS).expect("16 bytes suffice")
}

/// Replaces one byte of a one-block printable plaintext with a different
/// byte value and measures the changed fraction of that block's hex digits.
fn input_trial(encoder: &Encoder, rng: &mut ChaCha8Rng) -> f64 {
    let d = encoder.config.dim;
    let plain = random_printable(rng, d);
    let pos = rng.random_range(0..d);
    let mut perturbed = plain.clone();
    perturbed[pos] = plain[pos].wrapping_add(rng.random_range(1..=255u8));
    let a = encoder.encode_bytes(&plain).expect("bounded weights");
    let b = encoder.encode_bytes(&perturbed).expect("bounded weights");
    hex_digit_difference(a.block(pos / d), b.block(pos / d))
}

/// Input (diffusion) avalanche for a fixed encoder.
pub fn avalanche_input(encoder: &Encoder, trials: usize, seed: u64, exec: Execution) -> Result<AvalancheReport> {
    if trials < MIN_AVALANCHE_TRIALS {
        return Err(Error::domain(format!("need at least {MIN_AVALANCHE_TRIALS} trials")));
    }
    let fractions = exec.map_range(trials, |t| input_trial(encoder, &mut trial_rng(seed, t)));
    Ok(AvalancheReport::from_fractions(&fractions))
}

/// Input avalanche with a freshly sampled key per trial.
pub fn avalanche_input_random_keys(
    config: &EncoderConfig,
    trials: usize,
    seed: u64,
    exec: Execution,
) -> Result<AvalancheReport> {
    if trials < MIN_AVALANCHE_TRIALS {
        return Err(Error::domain(format!("need at least {MIN_AVALANCHE_TRIALS} trials")));
    }
    config.validate()?;
    let fractions = exec.map_range(trials, |t| {
        let mut rng = trial_rng(seed, t);
        let encoder = Encoder::build(&random_key(&mut rng), config).expect("validated config");
        input_trial(&encoder, &mut rng)
    });
    Ok(AvalancheReport::from_fractions(&fractions))
}

/// Key (confusion) avalanche: one key hex digit changed, encoder rebuilt,
/// plaintext fixed.
pub fn avalanche_key(config: &EncoderConfig, trials: usize, seed: u64, exec: Execution) -> Result<AvalancheReport> {
    if trials < MIN_AVALANCHE_TRIALS {
        return Err(Error::domain(format!("need at least {MIN_AVALANCHE_TRIALS} trials")));
    }
    config.validate()?;
    let fractions = exec.map_range(trials, |t| {
        let mut rng = trial_rng(seed, t);
        let key = random_key(&mut rng);
        let other = flip_key_digit(&key, &mut rng);
        let plain = random_printable(&mut rng, config.dim);
        let a = Encoder::build(&key, config).expect("validated config").encode_bytes(&plain).expect("bounded");
        let b = Encoder::build(&other, config).expect("validated config").encode_bytes(&plain).expect("bounded");
        hex_digit_difference(a.as_hex(), b.as_hex())
    });
    Ok(AvalancheReport::from_fractions(&fractions))
}

/// Mean fraction of weight entries that differ between the encoders of a key
/// and the same key with one hex digit changed.
pub fn weight_difference(config: &EncoderConfig, pairs: usize, seed: u64, exec: Execution) -> Result<f64> {
    config.validate()?;
    if pairs == 0 {
        return Err(Error::domain("need at least one key pair"));
    }
    let fractions = exec.map_range(pairs, |t| {
        let mut rng = trial_rng(seed, t);
        let key = random_key(&mut rng);
        let other = flip_key_digit(&key, &mut rng);
        let a = Encoder::build(&key, config).expect("validated config");
        let b = Encoder::build(&other, config).expect("validated config");
        let total = a.weights().count();
        a.weights().zip(b.weights()).filter(|(x, y)| x != y).count() as f64 / total as f64
    });
    Ok(fractions.iter().sum::<f64>() / pairs as f64)
}

/// Same key with one uniformly chosen digit replaced by a different digit.
pub fn flip_key_digit(key: &SecretKey, rng: &mut impl Rng) -> SecretKey {
    let pos = rng.random_range(0..key.digits());
    let old = u8::from_str_radix(&key.as_hex()[pos..pos + 1], 16).expect("hex digit");
    key.with_digit(pos, (old + rng.random_range(1..16u8)) % 16).expect("in range")
}
