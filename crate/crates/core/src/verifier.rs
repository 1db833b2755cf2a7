//! Similarity scoring and the ownership decision.
//!
//! A challenge is judged `stolen` when the BLEU score of what the suspect
//! model gave back, after RS repair, exceeds `alpha`.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::encoder::{Encoder, Plaintext};
use crate::error::{Error, Result};
use crate::rs_codec::{self, Codeword, ReceivedWord, RsParams};
use crate::suspect_model::SuspectChannel;

/// Floor substituted for zero n-gram matches.
pub const BLEU_EPSILON: f64 = 1e-9;
pub const BLEU_MAX_N: usize = 4;
pub const DEFAULT_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BleuScore {
    pub value: f64,
    pub precisions: [f64; BLEU_MAX_N],
    pub brevity_penalty: f64,
}

impl BleuScore {
    fn zero() -> Self {
        Self { value: 0.0, precisions: [0.0; BLEU_MAX_N], brevity_penalty: 0.0 }
    }
}

fn ngram_counts<'a>(tokens: &'a [&'a str], n: usize) -> HashMap<&'a [&'a str], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for g in tokens.windows(n) {
            *counts.entry(g).or_insert(0) += 1;
        }
    }
    counts
}

/// Sentence BLEU with whitespace tokens, n = 1..=4, uniform weights.
///
/// Orders longer than the candidate are left out of the geometric mean, so a
/// string always scores 1.0 against itself. Zero matches at an order the
/// candidate does have are floored at `BLEU_EPSILON`.
pub fn bleu(candidate: &str, reference: &str) -> Result<BleuScore> {
    let refs: Vec<&str> = reference.split_whitespace().collect();
    if refs.is_empty() {
        return Err(Error::domain("BLEU reference must be non-empty"));
    }
    let cand: Vec<&str> = candidate.split_whitespace().collect();
    if cand.is_empty() {
        return Ok(BleuScore::zero());
    }
    let order = cand.len().min(BLEU_MAX_N);
    let mut precisions = [1.0; BLEU_MAX_N];
    for (i, p) in precisions.iter_mut().enumerate().take(order) {
        let n = i + 1;
        let c = ngram_counts(&cand, n);
        let r = ngram_counts(&refs, n);
        let total: usize = c.values().sum();
        let clipped: usize = c.iter().map(|(g, &k)| k.min(r.get(g).copied().unwrap_or(0))).sum();
        *p = if clipped == 0 { BLEU_EPSILON / total.max(1) as f64 } else { clipped as f64 / total as f64 };
    }
    let (c, r) = (cand.len() as f64, refs.len() as f64);
    let brevity_penalty = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    let log_mean = precisions[..order].iter().map(|p| p.ln()).sum::<f64>() / order as f64;
    Ok(BleuScore { value: brevity_penalty * log_mean.exp(), precisions, brevity_penalty })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decision {
    Stolen,
    NotStolen,
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decision::Stolen => "stolen",
            Decision::NotStolen => "not-stolen",
        })
    }
}

impl FromStr for Decision {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stolen" => Ok(Decision::Stolen),
            "not-stolen" => Ok(Decision::NotStolen),
            other => Err(Error::domain(format!("unknown decision {other:?}"))),
        }
    }
}

/// Symbol-level damage of an aligned response against the expected codeword.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SymbolDamage {
    pub errors: usize,
    pub erasures: usize,
}

impl SymbolDamage {
    pub fn measure(received: &ReceivedWord, expected: &Codeword) -> Self {
        let mut d = Self::default();
        for ((&s, &erased), &want) in received.symbols.iter().zip(&received.erasures).zip(&expected.symbols) {
            if erased {
                d.erasures += 1;
            } else if s != want {
                d.errors += 1;
            }
        }
        d
    }

    pub fn within(&self, params: &RsParams) -> bool {
        params.within_budget(self.errors, self.erasures)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub decision: Decision,
    pub bleu: BleuScore,
    pub rs_recovered: bool,
    pub alpha_used: f64,
    pub damage: SymbolDamage,
}

/// Expected codeword `E'(x)` for a plaintext.
pub fn fingerprint_codeword(plaintext: &Plaintext, params: &RsParams) -> Result<Codeword> {
    let msg = rs_codec::pad_message(plaintext.as_bytes(), params)?;
    rs_codec::rs_encode(&msg, params)
}

/// Reads the message straight from the systematic positions, without any
/// correction. Erased positions are skipped.
pub fn read_systematic(received: &ReceivedWord, params: &RsParams) -> String {
    let bytes: Vec<u8> = received.symbols[..params.k_msg]
        .iter()
        .zip(&received.erasures)
        .filter(|(&b, &erased)| !erased && b != 0)
        .map(|(&b, _)| b)
        .collect();
    String::from_utf8_lossy(&bytes).into_owned()
}

/// Queries the channel with `E(x)` and judges the response.
pub fn verify(
    channel: &dyn SuspectChannel,
    encoder: &Encoder,
    params: &RsParams,
    plaintext: &Plaintext,
    alpha: f64,
    use_rs: bool,
) -> Result<Verdict> {
    let prompt = encoder.encode(plaintext)?;
    verify_prompt(channel, prompt.as_hex(), params, plaintext, alpha, use_rs)
}

/// `verify` with an explicit prompt; used for guessed-key attacks where the
/// prompt does not come from the owner's encoder.
pub fn verify_prompt(
    channel: &dyn SuspectChannel,
    prompt: &str,
    params: &RsParams,
    plaintext: &Plaintext,
    alpha: f64,
    use_rs: bool,
) -> Result<Verdict> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain("alpha must lie in (0, 1)"));
    }
    let response = channel.respond(prompt)?;
    judge_response(&response, params, plaintext, alpha, use_rs)
}

/// Scores a response already obtained from a suspect model.
///
/// With `use_rs`, a decode that reproduces `x` scores BLEU on the recovered
/// message (exactly 1.0). A failed decode, or one that lands on a different
/// codeword, falls back to the uncorrected systematic read, which is also
/// what `use_rs = false` scores.
pub fn judge_response(
    response: &str,
    params: &RsParams,
    plaintext: &Plaintext,
    alpha: f64,
    use_rs: bool,
) -> Result<Verdict> {
    let expected = fingerprint_codeword(plaintext, params)?;
    let received = rs_codec::parse_and_align(response, params, Some(&expected));
    let damage = SymbolDamage::measure(&received, &expected);

    let recovered = use_rs
        .then(|| rs_codec::rs_decode(&received, params).ok())
        .flatten()
        .map(|d| rs_codec::unpad_message(&d.message).to_vec())
        .filter(|m| m == plaintext.as_bytes());

    let (candidate, rs_recovered) = match recovered {
        Some(m) => (String::from_utf8_lossy(&m).into_owned(), true),
        None => (read_systematic(&received, params), false),
    };
    let score = bleu(&candidate, plaintext.as_str())?;
    Ok(Verdict {
        decision: if score.value > alpha { Decision::Stolen } else { Decision::NotStolen },
        bleu: score,
        rs_recovered,
        alpha_used: alpha,
        damage,
    })
}

/// Fraction of verdicts whose decision equals `expected`.
pub fn fsr(verdicts: &[Verdict], expected: Decision) -> Result<f64> {
    if verdicts.is_empty() {
        return Err(Error::domain("FSR over an empty verdict list"));
    }
    Ok(verdicts.iter().filter(|v| v.decision == expected).count() as f64 / verdicts.len() as f64)
}

/// Multi-query decision: mean BLEU against `alpha` (inclusive).
pub fn aggregate_decision(verdicts: &[Verdict], alpha: f64) -> Option<(f64, Decision)> {
    if verdicts.is_empty() {
        return None;
    }
    let mean = verdicts.iter().map(|v| v.bleu.value).sum::<f64>() / verdicts.len() as f64;
    Some((mean, if mean >= alpha { Decision::Stolen } else { Decision::NotStolen }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdFit {
    pub alpha: f64,
    pub mu0: f64,
    pub sigma0: f64,
    pub mu1: f64,
    pub sigma1: f64,
}

pub const MIN_FIT_SAMPLES: usize = 10;

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn normal_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// Gaussian fit of base (`0`) and fingerprinted (`1`) BLEU populations; the
/// threshold is where the two densities cross between the means.
pub fn fit_threshold(base_scores: &[f64], fp_scores: &[f64]) -> Result<ThresholdFit> {
    if base_scores.len() < MIN_FIT_SAMPLES || fp_scores.len() < MIN_FIT_SAMPLES {
        return Err(Error::Fit(format!("need at least {MIN_FIT_SAMPLES} scores per population")));
    }
    let (mu0, sigma0) = mean_std(base_scores);
    let (mu1, sigma1) = mean_std(fp_scores);
    if mu0 >= mu1 {
        return Err(Error::Fit("base population mean is not below the fingerprinted mean".into()));
    }
    if sigma0 == 0.0 || sigma1 == 0.0 {
        return Err(Error::Fit("degenerate population with zero variance".into()));
    }
    let alpha = gaussian_crossing(mu0, sigma0, mu1, sigma1)
        .ok_or_else(|| Error::Fit("densities do not cross between the means".into()))?;
    Ok(ThresholdFit { alpha, mu0, sigma0, mu1, sigma1 })
}

/// Root of `N(a; mu0, s0^2) = N(a; mu1, s1^2)` inside `(mu0, mu1)`.
pub fn gaussian_crossing(mu0: f64, s0: f64, mu1: f64, s1: f64) -> Option<f64> {
    let (v0, v1) = (s0 * s0, s1 * s1);
    if ((v0 - v1) / (v0 + v1)).abs() < 1e-12 {
        return Some(0.5 * (mu0 + mu1));
    }
    // (a-mu0)^2/v0 - (a-mu1)^2/v1 + 2 ln(s0/s1) = 0
    let a = 1.0 / v0 - 1.0 / v1;
    let b = 2.0 * (mu1 / v1 - mu0 / v0);
    let c = mu0 * mu0 / v0 - mu1 * mu1 / v1 + 2.0 * (s0 / s1).ln();
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    // numerically stable pair of roots
    let q = -0.5 * (b + b.signum() * sq);
    let roots = [q / a, if q != 0.0 { c / q } else { f64::NAN }];
    roots.into_iter().filter(|r| r.is_finite() && *r > mu0 && *r < mu1).min_by(|x, y| {
        let mid = 0.5 * (mu0 + mu1);
        (x - mid).abs().total_cmp(&(y - mid).abs())
    })
}

/// F1 of the rule `score > alpha => fingerprinted`.
pub fn f1_at(alpha: f64, base_scores: &[f64], fp_scores: &[f64]) -> f64 {
    let tp = fp_scores.iter().filter(|&&s| s > alpha).count() as f64;
    let fn_ = fp_scores.len() as f64 - tp;
    let fp = base_scores.iter().filter(|&&s| s > alpha).count() as f64;
    if tp == 0.0 {
        return 0.0;
    }
    2.0 * tp / (2.0 * tp + fp + fn_)
}

/// One line of a verdict report: `id decision bleu rs_recovered alpha`,
/// tab separated.
#[derive(Debug, Clone, PartialEq)]
pub struct VerdictRecord {
    pub plaintext_id: u64,
    pub decision: Decision,
    pub bleu: f64,
    pub rs_recovered: bool,
    pub alpha: f64,
}

impl VerdictRecord {
    pub fn new(plaintext_id: u64, v: &Verdict) -> Self {
        Self {
            plaintext_id,
            decision: v.decision,
            bleu: v.bleu.value,
            rs_recovered: v.rs_recovered,
            alpha: v.alpha_used,
        }
    }
}

impl fmt::Display for VerdictRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\t{:.6}\t{}\t{:.4}",
            self.plaintext_id, self.decision, self.bleu, self.rs_recovered, self.alpha
        )
    }
}

impl FromStr for VerdictRecord {
    type Err = Error;
    fn from_str(line: &str) -> Result<Self> {
        let bad = || Error::domain(format!("malformed verdict record {line:?}"));
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return Err(bad());
        }
        Ok(Self {
            plaintext_id: f[0].parse().map_err(|_| bad())?,
            decision: f[1].parse()?,
            bleu: f[2].parse().map_err(|_| bad())?,
            rs_recovered: f[3].parse().map_err(|_| bad())?,
            alpha: f[4].parse().map_err(|_| bad())?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * b.abs().max(1e-300)
    }

    #[test]
    fn bleu_identity() {
        for s in ["a", "the cat", "a b c", "stocks rally as oil slips again"] {
            assert_eq!(bleu(s, s).unwrap().value, 1.0);
        }
    }

    #[test]
    fn bleu_hand_counted_cases() {
        // independent n-gram count oracle
        let b = bleu("the cat sat", "the cat sat on the mat").unwrap();
        assert!(close(b.brevity_penalty, (1.0f64 - 2.0).exp()));
        assert_eq!(b.precisions[..3], [1.0, 1.0, 1.0]);
        assert!(close(b.value, 0.36787944117144233));

        let b = bleu("the the the cat", "the cat sat on the mat").unwrap();
        assert!(close(b.value, 1.1404605374835287e-05));
        assert_eq!(b.precisions[0], 0.75);

        let b = bleu("a b c d e f", "a b c x e f").unwrap();
        assert!(close(b.value, 0.0025406637407730743));
        assert!(b.value < 0.05);

        let b = bleu("on the mat the cat sat", "the cat sat on the mat").unwrap();
        assert!(close(b.value, 0.003398088489694244));
    }

    #[test]
    fn bleu_edge_cases() {
        assert_eq!(bleu("", "ref").unwrap().value, 0.0);
        assert_eq!(bleu("   ", "ref").unwrap().value, 0.0);
        assert!(bleu("x", "").is_err());
        // asymmetric in general
        let a = bleu("a b c d", "a b c d e").unwrap().value;
        let b = bleu("a b c d e", "a b c d").unwrap().value;
        assert_ne!(a, b);
    }

    #[test]
    fn equal_variance_threshold_is_midpoint() {
        assert!((gaussian_crossing(0.1, 0.05, 0.9, 0.05).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn crossing_has_equal_densities() {
        for (m0, s0, m1, s1) in [(0.1, 0.05, 0.9, 0.1), (0.2, 0.15, 0.7, 0.05), (0.0, 0.3, 1.0, 0.2)] {
            let a = gaussian_crossing(m0, s0, m1, s1).unwrap();
            assert!(a > m0 && a < m1);
            assert!((normal_pdf(a, m0, s0) - normal_pdf(a, m1, s1)).abs() < 1e-9);
        }
    }

    #[test]
    fn fit_errors() {
        let lo = vec![0.1; 5];
        assert!(fit_threshold(&lo, &lo).is_err());
        let lo: Vec<f64> = (0..10).map(|i| 0.1 + i as f64 * 0.01).collect();
        let hi: Vec<f64> = lo.iter().map(|x| x + 0.5).collect();
        assert!(fit_threshold(&hi, &lo).is_err());
        assert!(fit_threshold(&lo, &hi).is_ok());
        assert!(fit_threshold(&[0.1; 10], &hi).is_err());
    }

    #[test]
    fn record_line_round_trip() {
        let r = VerdictRecord { plaintext_id: 7, decision: Decision::Stolen, bleu: 1.0, rs_recovered: true, alpha: 0.5 };
        let line = r.to_string();
        assert_eq!(line, "7\tstolen\t1.000000\ttrue\t0.5000");
        assert_eq!(line.parse::<VerdictRecord>().unwrap(), r);
        assert!("7\tstolen".parse::<VerdictRecord>().is_err());
    }

    #[test]
    fn fsr_basics() {
        assert!(fsr(&[], Decision::Stolen).is_err());
    }

    #[test]
    fn systematic_read_skips_erasures_and_padding() {
        let params = RsParams::default();
        let p = Plaintext::new("oil prices slip").unwrap();
        let c = fingerprint_codeword(&p, &params).unwrap();
        let mut r = ReceivedWord::clean(&c);
        assert_eq!(read_systematic(&r, &params), "oil prices slip");
        r.erase(1);
        assert_eq!(read_systematic(&r, &params), "ol prices slip");
    }
}
