//! Reed-Solomon codes over GF(2^8): systematic encoding, errors-and-erasures
//! decoding, codeword rendering and the token aligner that turns textual
//! manipulations into symbol errors and erasures.
//!
//! Codewords are read high-degree first: symbol `i` is the coefficient of
//! `x^(n-1-i)` and has locator `alpha^(n-1-i)`. Valid codewords vanish at
//! `alpha^1 ..= alpha^(n-k)`. At full length (n = 255) this is the same code
//! as the evaluation view `(m(alpha^0), ..., m(alpha^254))` with
//! `deg m < k`, listed in reverse order; shorter codes are shortenings of it.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::gf256::{self, alpha_pow, mul};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RsParams {
    pub n_code: usize,
    pub k_msg: usize,
}

impl Default for RsParams {
    fn default() -> Self {
        Self { n_code: 63, k_msg: 39 }
    }
}

impl RsParams {
    pub fn new(n_code: usize, k_msg: usize) -> Result<Self> {
        let p = Self { n_code, k_msg };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1 <= self.k_msg && self.k_msg < self.n_code && self.n_code <= 255) {
            return Err(Error::domain(format!("invalid RS params ({}, {})", self.n_code, self.k_msg)));
        }
        if self.t() < 1 {
            return Err(Error::domain("RS params must correct at least one error"));
        }
        Ok(())
    }

    pub fn parity_len(&self) -> usize {
        self.n_code - self.k_msg
    }

    /// Unique-decoding radius for errors alone.
    pub fn t(&self) -> usize {
        self.parity_len() / 2
    }

    /// Whether `errors` unknown-position errors and `erasures` known-position
    /// erasures are within the decoding guarantee.
    pub fn within_budget(&self, errors: usize, erasures: usize) -> bool {
        2 * errors + erasures <= self.parity_len()
    }

    /// Generator polynomial `prod_{j=1}^{n-k} (x - alpha^j)`, high-first.
    pub fn generator(&self) -> Vec<u8> {
        let mut g = vec![1u8];
        for j in 1..=self.parity_len() {
            let root = alpha_pow(j as i64);
            let mut next = vec![0u8; g.len() + 1];
            for (i, &c) in g.iter().enumerate() {
                next[i] ^= c;
                next[i + 1] ^= mul(c, root);
            }
            g = next;
        }
        g
    }

    fn locator(&self, position: usize) -> u8 {
        alpha_pow((self.n_code - 1 - position) as i64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Codeword {
    pub symbols: Vec<u8>,
}

impl Codeword {
    pub fn message<'a>(&'a self, params: &RsParams) -> &'a [u8] {
        &self.symbols[..params.k_msg]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReceivedWord {
    pub symbols: Vec<u8>,
    pub erasures: Vec<bool>,
}

impl ReceivedWord {
    pub fn clean(codeword: &Codeword) -> Self {
        Self { symbols: codeword.symbols.clone(), erasures: vec![false; codeword.symbols.len()] }
    }

    pub fn all_erased(n: usize) -> Self {
        Self { symbols: vec![0; n], erasures: vec![true; n] }
    }

    pub fn erasure_count(&self) -> usize {
        self.erasures.iter().filter(|&&e| e).count()
    }

    pub fn erase(&mut self, pos: usize) {
        self.symbols[pos] = 0;
        self.erasures[pos] = true;
    }
}

/// Systematic encoding: message symbols followed by `n - k` parity symbols.
pub fn rs_encode(message: &[u8], params: &RsParams) -> Result<Codeword> {
    params.validate()?;
    if message.len() != params.k_msg {
        return Err(Error::domain(format!("message is {} symbols, expected {}", message.len(), params.k_msg)));
    }
    let gen = params.generator();
    let nsym = params.parity_len();
    // LFSR division of m(x) * x^(n-k) by the monic generator
    let mut rem = vec![0u8; nsym];
    for &m in message {
        let factor = m ^ rem[0];
        rem.rotate_left(1);
        rem[nsym - 1] = 0;
        if factor != 0 {
            for (r, &g) in rem.iter_mut().zip(&gen[1..]) {
                *r ^= mul(g, factor);
            }
        }
    }
    let mut symbols = message.to_vec();
    symbols.extend_from_slice(&rem);
    Ok(Codeword { symbols })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeFailure {
    #[error("received word has {got} symbols, expected {expected}")]
    Length { got: usize, expected: usize },
    #[error("{erasures} erasures exceed the {parity} parity symbols")]
    TooManyErasures { erasures: usize, parity: usize },
    #[error("error locator inconsistent with the received word")]
    LocatorMismatch,
    #[error("errata pattern exceeds the decoding radius")]
    BeyondRadius,
    #[error("corrected word is not a codeword")]
    Residual,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoded {
    pub message: Vec<u8>,
    pub codeword: Codeword,
    /// Errata positions that needed a nonzero correction (erasures included).
    pub corrected: Vec<usize>,
    pub errors: usize,
    pub erasures: usize,
}

fn syndromes(symbols: &[u8], nsym: usize) -> Vec<u8> {
    (1..=nsym).map(|j| gf256::poly_eval_high_first(symbols, alpha_pow(j as i64))).collect()
}

/// Errors-and-erasures decoding: syndromes, Berlekamp-Massey seeded with the
/// erasure locator, Chien search and Forney magnitudes. Succeeds whenever
/// `2e + s <= n - k`.
pub fn rs_decode(received: &ReceivedWord, params: &RsParams) -> Result<Decoded, DecodeFailure> {
    let n = params.n_code;
    let nsym = params.parity_len();
    if received.symbols.len() != n || received.erasures.len() != n {
        return Err(DecodeFailure::Length { got: received.symbols.len(), expected: n });
    }
    let erasure_pos: Vec<usize> = (0..n).filter(|&i| received.erasures[i]).collect();
    let s = erasure_pos.len();
    if s > nsym {
        return Err(DecodeFailure::TooManyErasures { erasures: s, parity: nsym });
    }

    let synd = syndromes(&received.symbols, nsym);
    if s == 0 && synd.iter().all(|&x| x == 0) {
        return Ok(Decoded {
            message: received.symbols[..params.k_msg].to_vec(),
            codeword: Codeword { symbols: received.symbols.clone() },
            corrected: Vec::new(),
            errors: 0,
            erasures: 0,
        });
    }

    // erasure locator Gamma(x) = prod (1 - X_i x), low-first
    let mut gamma = vec![1u8];
    for &p in &erasure_pos {
        gamma = gf256::poly_mul_low_first(&gamma, &[1, params.locator(p)]);
    }

    let mut lambda = gamma.clone();
    let mut prev = gamma;
    let mut len = s;
    for r in s..nsym {
        // discrepancy with S_{r+1} .. S_{r+1-len}
        let mut delta = 0u8;
        for (i, &l) in lambda.iter().enumerate() {
            if i <= r {
                delta ^= mul(l, synd[r - i]);
            }
        }
        prev.insert(0, 0);
        if delta != 0 {
            let mut next = lambda.clone();
            if prev.len() > next.len() {
                next.resize(prev.len(), 0);
            }
            for (nx, &b) in next.iter_mut().zip(&prev) {
                *nx ^= mul(delta, b);
            }
            if 2 * len <= r + s {
                let dinv = gf256::inv(delta);
                prev = lambda.iter().map(|&l| mul(l, dinv)).collect();
                len = r + 1 + s - len;
            }
            lambda = next;
        }
    }
    while lambda.len() > 1 && *lambda.last().unwrap() == 0 {
        lambda.pop();
    }
    let degree = lambda.len() - 1;
    if degree != len || degree < s {
        return Err(DecodeFailure::LocatorMismatch);
    }
    let errors = degree - s;
    if !params.within_budget(errors, s) {
        return Err(DecodeFailure::BeyondRadius);
    }

    // Chien search over valid positions only
    let roots: Vec<usize> =
        (0..n).filter(|&p| gf256::poly_eval_low_first(&lambda, gf256::inv(params.locator(p))) == 0).collect();
    if roots.len() != degree {
        return Err(DecodeFailure::LocatorMismatch);
    }

    // Omega(x) = S(x) Lambda(x) mod x^nsym
    let mut omega = gf256::poly_mul_low_first(&synd, &lambda);
    omega.truncate(nsym);
    // formal derivative: odd-degree terms survive in characteristic 2
    let deriv: Vec<u8> = lambda.iter().enumerate().skip(1).map(|(i, &c)| if i % 2 == 1 { c } else { 0 }).collect();

    let mut symbols = received.symbols.clone();
    let mut corrected = Vec::new();
    for &p in &roots {
        let xinv = gf256::inv(params.locator(p));
        let denom = gf256::poly_eval_low_first(&deriv, xinv);
        if denom == 0 {
            return Err(DecodeFailure::LocatorMismatch);
        }
        let magnitude = gf256::div(gf256::poly_eval_low_first(&omega, xinv), denom);
        if magnitude != 0 {
            symbols[p] ^= magnitude;
            corrected.push(p);
        }
    }
    if syndromes(&symbols, nsym).iter().any(|&x| x != 0) {
        return Err(DecodeFailure::Residual);
    }
    Ok(Decoded {
        message: symbols[..params.k_msg].to_vec(),
        codeword: Codeword { symbols },
        corrected,
        errors,
        erasures: s,
    })
}

/// Renders symbols as space-separated `Sxx` tokens.
pub fn render_codeword(codeword: &Codeword) -> String {
    let mut out = String::with_capacity(codeword.symbols.len() * 4);
    for (i, s) in codeword.symbols.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push('S');
        out.push_str(&format!("{s:02x}"));
    }
    out
}

/// Parses a whitespace token as a framed symbol. Surrounding ASCII
/// punctuation is ignored; anything else malformed is rejected.
pub fn parse_token(token: &str) -> Option<u8> {
    let t = token.trim_matches(|c: char| c.is_ascii_punctuation());
    let b = t.as_bytes();
    if b.len() != 3 || b[0] != b'S' {
        return None;
    }
    let hex = |c: u8| match c {
        b'0'..=b'9' => Some(c - b'0'),
        b'a'..=b'f' => Some(c - b'a' + 10),
        _ => None,
    };
    Some(hex(b[1])? << 4 | hex(b[2])?)
}

/// Framed symbols in reading order.
pub fn scan_tokens(text: &str) -> Vec<u8> {
    text.split_whitespace().filter_map(parse_token).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Step {
    Diag,
    /// reference position with no received token
    Erase,
    /// received token with no reference position
    Drop,
}

/// Minimum-edit-distance alignment of `received` onto `reference`
/// (match 0, mismatch 1, gap 1). Returns one entry per reference position:
/// the aligned received symbol, or `None` for an erasure.
pub fn align(received: &[u8], reference: &[u8]) -> Vec<Option<u8>> {
    let (m, n) = (received.len(), reference.len());
    let w = n + 1;
    let mut cost = vec![0u32; (m + 1) * w];
    for (j, c) in cost.iter_mut().take(w).enumerate() {
        *c = j as u32;
    }
    for i in 1..=m {
        cost[i * w] = i as u32;
        for j in 1..=n {
            let sub = cost[(i - 1) * w + j - 1] + u32::from(received[i - 1] != reference[j - 1]);
            let erase = cost[i * w + j - 1] + 1;
            let drop = cost[(i - 1) * w + j] + 1;
            cost[i * w + j] = sub.min(erase).min(drop);
        }
    }
    let mut out = vec![None; n];
    let (mut i, mut j) = (m, n);
    while i > 0 || j > 0 {
        let here = cost[i * w + j];
        let step = if i > 0
            && j > 0
            && here == cost[(i - 1) * w + j - 1] + u32::from(received[i - 1] != reference[j - 1])
        {
            Step::Diag
        } else if j > 0 && here == cost[i * w + j - 1] + 1 {
            Step::Erase
        } else {
            Step::Drop
        };
        match step {
            Step::Diag => {
                out[j - 1] = Some(received[i - 1]);
                i -= 1;
                j -= 1;
            }
            Step::Erase => j -= 1,
            Step::Drop => i -= 1,
        }
    }
    out
}

/// Recovers a received word from free text.
///
/// With a `reference` codeword (the verifier knows the expected fingerprint
/// for its own challenge) the framed tokens are aligned against it: missing
/// tokens become erasures and surplus tokens are dropped. Without one, tokens
/// are taken positionally and missing trailing positions are erased.
pub fn parse_and_align(text: &str, params: &RsParams, reference: Option<&Codeword>) -> ReceivedWord {
    let tokens = scan_tokens(text);
    let n = params.n_code;
    if tokens.is_empty() {
        return ReceivedWord::all_erased(n);
    }
    let aligned: Vec<Option<u8>> = match reference {
        Some(r) => align(&tokens, &r.symbols),
        None => (0..n).map(|i| tokens.get(i).copied()).collect(),
    };
    ReceivedWord {
        symbols: aligned.iter().map(|s| s.unwrap_or(0)).collect(),
        erasures: aligned.iter().map(Option::is_none).collect(),
    }
}

impl fmt::Display for Codeword {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_codeword(self))
    }
}

/// Pads a plaintext with zero bytes to exactly `k_msg` symbols.
pub fn pad_message(bytes: &[u8], params: &RsParams) -> Result<Vec<u8>> {
    if bytes.len() > params.k_msg {
        return Err(Error::domain(format!("plaintext is {} bytes, code carries {}", bytes.len(), params.k_msg)));
    }
    let mut m = bytes.to_vec();
    m.resize(params.k_msg, 0);
    Ok(m)
}

/// Inverse of `pad_message`.
pub fn unpad_message(message: &[u8]) -> &[u8] {
    let end = message.iter().rposition(|&b| b != 0).map_or(0, |p| p + 1);
    &message[..end]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(n: usize, k: usize) -> RsParams {
        RsParams::new(n, k).unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(RsParams::new(256, 200).is_err());
        assert!(RsParams::new(10, 10).is_err());
        assert!(RsParams::new(10, 9).is_err()); // t = 0
        assert!(RsParams::new(10, 0).is_err());
        assert_eq!(RsParams::default().t(), 12);
    }

    #[test]
    fn zero_message_zero_codeword() {
        let c = rs_encode(&[0; 9], &p(15, 9)).unwrap();
        assert_eq!(c.symbols, vec![0; 15]);
        assert!(rs_encode(&[0; 8], &p(15, 9)).is_err());
    }

    #[test]
    fn codewords_vanish_at_generator_roots() {
        let params = p(15, 9);
        let c = rs_encode(b"fingerpr!", &params).unwrap();
        assert_eq!(&c.symbols[..9], b"fingerpr!");
        assert!(syndromes(&c.symbols, 6).iter().all(|&s| s == 0));
        assert_eq!(rs_encode(c.message(&params), &params).unwrap(), c);
    }

    #[test]
    fn clean_and_small_error_decode() {
        let params = p(15, 9);
        let c = rs_encode(b"123456789", &params).unwrap();
        let d = rs_decode(&ReceivedWord::clean(&c), &params).unwrap();
        assert_eq!(d.message, b"123456789");
        let mut r = ReceivedWord::clean(&c);
        r.symbols[0] ^= 0x55;
        r.symbols[14] ^= 0x01;
        r.erase(7);
        r.erase(8);
        let d = rs_decode(&r, &params).unwrap();
        assert_eq!(d.codeword, c);
        assert_eq!((d.errors, d.erasures), (2, 2));
    }

    #[test]
    fn exhaustive_three_error_patterns() {
        let params = p(15, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for a in 0..15 {
            for b in a + 1..15 {
                for c in b + 1..15 {
                    for _ in 0..50 {
                        let msg: Vec<u8> = (0..9).map(|_| rng.random()).collect();
                        let cw = rs_encode(&msg, &params).unwrap();
                        let mut r = ReceivedWord::clean(&cw);
                        for pos in [a, b, c] {
                            r.symbols[pos] ^= rng.random_range(1..=255u8);
                        }
                        let d = rs_decode(&r, &params).unwrap();
                        assert_eq!(d.message, msg);
                    }
                }
            }
        }
    }

    #[test]
    fn beyond_radius_fails_or_miscorrects_detectably() {
        let params = p(15, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut failures = 0;
        for _ in 0..2000 {
            let msg: Vec<u8> = (0..9).map(|_| rng.random()).collect();
            let cw = rs_encode(&msg, &params).unwrap();
            let mut r = ReceivedWord::clean(&cw);
            let mut positions: Vec<usize> = (0..15).collect();
            for i in 0..4 {
                let j = rng.random_range(i..15);
                positions.swap(i, j);
                r.symbols[positions[i]] ^= rng.random_range(1..=255u8);
            }
            match rs_decode(&r, &params) {
                Err(_) => failures += 1,
                // a miscorrection lands on a different valid codeword
                Ok(d) => assert_ne!(d.message, msg),
            }
        }
        assert!(failures > 1500, "{failures}");
    }

    #[test]
    fn too_many_erasures_rejected() {
        let params = p(15, 9);
        let mut r = ReceivedWord::clean(&rs_encode(&[1; 9], &params).unwrap());
        (0..7).for_each(|i| r.erase(i));
        assert_eq!(rs_decode(&r, &params), Err(DecodeFailure::TooManyErasures { erasures: 7, parity: 6 }));
        assert!(matches!(rs_decode(&ReceivedWord::all_erased(14), &params), Err(DecodeFailure::Length { .. })));
    }

    #[test]
    fn render_format() {
        let c = Codeword { symbols: vec![0, 255] };
        assert_eq!(render_codeword(&c), "S00 Sff");
        let c = rs_encode(&[7; 39], &RsParams::default()).unwrap();
        let text = render_codeword(&c);
        assert_eq!(text.len(), 4 * 63 - 1);
        assert_eq!(scan_tokens(&text), c.symbols);
    }

    #[test]
    fn token_parsing() {
        assert_eq!(parse_token("S0a"), Some(0x0a));
        assert_eq!(parse_token("(Sff),"), Some(0xff));
        assert_eq!(parse_token("SFF"), None);
        assert_eq!(parse_token("\u{405}00"), None); // Cyrillic DZE
        assert_eq!(parse_token("S0"), None);
        assert_eq!(parse_token("S000"), None);
    }

    #[test]
    fn alignment_of_deletions_and_insertions() {
        let params = RsParams::default();
        let msg = pad_message(b"stocks rally on earnings", &params).unwrap();
        let c = rs_encode(&msg, &params).unwrap();
        let text = render_codeword(&c);
        let r = parse_and_align(&text, &params, Some(&c));
        assert_eq!(r, ReceivedWord::clean(&c));

        let mut toks: Vec<&str> = text.split(' ').collect();
        toks.remove(40);
        toks.remove(5);
        let r = parse_and_align(&toks.join(" "), &params, Some(&c));
        assert_eq!(r.erasure_count(), 2);
        assert!(r.erasures[5] || r.erasures[4]);
        assert_eq!(rs_decode(&r, &params).unwrap().message, msg);

        let prose = "The quarterly outlook remained cautious as analysts weighed the numbers. ".repeat(3);
        let embedded = format!("{prose}{text} {prose}");
        assert!(embedded.len() > 200 + text.len());
        let r = parse_and_align(&embedded, &params, Some(&c));
        assert_eq!(r, ReceivedWord::clean(&c));
    }

    #[test]
    fn no_tokens_means_all_erased() {
        let params = RsParams::default();
        let r = parse_and_align("nothing framed here", &params, None);
        assert_eq!(r.erasure_count(), 63);
        assert!(rs_decode(&r, &params).is_err());
    }

    #[test]
    fn positional_parse_without_reference() {
        let params = p(15, 9);
        let c = rs_encode(b"abcdefghi", &params).unwrap();
        let text = render_codeword(&c);
        let short: Vec<&str> = text.split(' ').take(13).collect();
        let r = parse_and_align(&short.join(" "), &params, None);
        assert_eq!(r.erasure_count(), 2);
        assert!(r.erasures[13] && r.erasures[14]);
        assert_eq!(rs_decode(&r, &params).unwrap().codeword, c);
    }

    #[test]
    fn padding_round_trip() {
        let params = RsParams::default();
        let m = pad_message(b"hello", &params).unwrap();
        assert_eq!(m.len(), 39);
        assert_eq!(unpad_message(&m), b"hello");
        assert!(pad_message(&[1; 40], &params).is_err());
        assert_eq!(unpad_message(&[0, 0]), b"");
    }
}
