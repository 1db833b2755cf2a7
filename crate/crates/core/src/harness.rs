//! Experiment harness: a deployed fingerprint plus the robustness benches
//! that run against it. All loops over challenges go through [`Execution`],
//! and results are merged in challenge order.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::attacks::{AttackKind, AttackSpec};
use crate::encoder::{flip_key_digit, Encoder, EncoderConfig, Plaintext};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::keymat::SecretKey;
use crate::rs_codec::RsParams;
use crate::suspect_model::{
    baseline_exact_match, inject, BaseOracle, FingerprintTable, SuspectChannel, TableOracle,
};
use crate::verifier::{self, Decision, Verdict};

const CORPUS_TXT: &str = include_str!("../data/corpus.txt");

/// Bundled headline corpus; every line fits the default code.
pub fn bundled_corpus() -> Vec<Plaintext> {
    CORPUS_TXT
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| Plaintext::new(l).expect("corpus lines are non-empty"))
        .collect()
}

/// The first `n` corpus lines as numbered challenges.
pub fn corpus_challenges(n: usize) -> Result<Vec<(u64, Plaintext)>> {
    let corpus = bundled_corpus();
    if n > corpus.len() {
        return Err(Error::domain(format!("corpus holds {} plaintexts, {n} requested", corpus.len())));
    }
    Ok(corpus.into_iter().take(n).enumerate().map(|(i, p)| (i as u64, p)).collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Challenge {
    pub id: u64,
    pub plaintext: Plaintext,
    pub prompt: String,
}

/// Owner key, frozen encoder and the injected fingerprint pairs.
#[derive(Debug, Clone)]
pub struct Deployment {
    pub key: SecretKey,
    pub encoder: Encoder,
    pub params: RsParams,
    pub challenges: Vec<Challenge>,
    pub table: FingerprintTable,
}

impl Deployment {
    /// Plaintexts longer than the code's message length, or whose ciphertext
    /// collides with an earlier one, are dropped.
    pub fn new(
        key: SecretKey,
        config: &EncoderConfig,
        params: RsParams,
        plaintexts: impl IntoIterator<Item = (u64, Plaintext)>,
    ) -> Result<Self> {
        params.validate()?;
        let encoder = Encoder::build(&key, config)?;
        let items: Vec<(u64, Plaintext)> = plaintexts.into_iter().collect();
        let injection = inject(&encoder, &params, items.iter().map(|(_, p)| p))?;
        let table = injection.table.clone();
        let challenges = items
            .into_iter()
            .enumerate()
            .filter(|(i, _)| injection.accepted(*i))
            .map(|(_, (id, plaintext))| {
                let prompt = encoder.encode(&plaintext)?.into_hex();
                Ok(Challenge { id, plaintext, prompt })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { key, encoder, params, challenges, table })
    }

    pub fn ideal_oracle(&self, noise: AttackSpec) -> TableOracle {
        TableOracle::new(self.table.clone(), noise).expect("deployment table is non-empty")
    }
}

/// Verifies every challenge, returning `(id, verdict)` in challenge order.
pub fn verify_challenges(
    channel: &dyn SuspectChannel,
    encoder: &Encoder,
    params: &RsParams,
    challenges: &[Challenge],
    alpha: f64,
    use_rs: bool,
    exec: Execution,
) -> Vec<(u64, Result<Verdict>)> {
    exec.map(challenges.iter().collect(), |c| {
        (c.id, verifier::verify(channel, encoder, params, &c.plaintext, alpha, use_rs))
    })
}

/// FSR over successful verifications; transport errors are excluded.
pub fn fsr_of(results: &[(u64, Result<Verdict>)], expected: Decision) -> Result<f64> {
    let ok: Vec<Verdict> = results.iter().filter_map(|(_, r)| r.as_ref().ok().cloned()).collect();
    verifier::fsr(&ok, expected)
}

/// Guessed-key prompts an adversary might try instead of the owner's
/// ciphertexts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GuessAttack {
    /// Random hex strings of the ciphertext's length.
    RandomHex,
    /// Ciphertexts from an encoder built with an unrelated key.
    WrongKey,
    /// Ciphertexts from a key one hex digit away from the owner's.
    OneDigitOff,
}

impl GuessAttack {
    pub const ALL: [GuessAttack; 3] = [GuessAttack::RandomHex, GuessAttack::WrongKey, GuessAttack::OneDigitOff];

    pub fn name(self) -> &'static str {
        match self {
            GuessAttack::RandomHex => "random-hex",
            GuessAttack::WrongKey => "wrong-key",
            GuessAttack::OneDigitOff => "one-digit-off",
        }
    }
}

/// Fraction of challenges on which the guessed prompt still yields `stolen`.
pub fn guessed_key_fsr(
    dep: &Deployment,
    channel: &dyn SuspectChannel,
    attack: GuessAttack,
    alpha: f64,
    seed: u64,
    exec: Execution,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let forged_encoder = match attack {
        GuessAttack::RandomHex => None,
        GuessAttack::WrongKey => {
            let mut bytes = vec![0u8; dep.key.digits().div_ceil(2)];
            rng.fill(&mut bytes[..]);
            let mut wrong = SecretKey::sample(&mut &bytes[..], dep.key.digits())?;
            if wrong == dep.key {
                wrong = flip_key_digit(&wrong, &mut rng);
            }
            Some(Encoder::build(&wrong, dep.encoder.config())?)
        }
        GuessAttack::OneDigitOff => {
            Some(Encoder::build(&flip_key_digit(&dep.key, &mut rng), dep.encoder.config())?)
        }
    };
    let prompts: Vec<String> = dep
        .challenges
        .iter()
        .map(|c| match &forged_encoder {
            Some(enc) => Ok(enc.encode(&c.plaintext)?.into_hex()),
            None => Ok((0..c.prompt.len()).map(|_| char::from(b"0123456789abcdef"[rng.random_range(0..16)])).collect()),
        })
        .collect::<Result<_>>()?;
    let verdicts = exec.map(dep.challenges.iter().zip(&prompts).collect(), |(c, prompt)| {
        verifier::verify_prompt(channel, prompt, &dep.params, &c.plaintext, alpha, true)
    });
    let verdicts: Vec<Verdict> = verdicts.into_iter().collect::<Result<_>>()?;
    verifier::fsr(&verdicts, Decision::Stolen)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, PartialOrd, Ord)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Keyed fingerprint with RS decoding.
    KeyedRs,
    /// Keyed fingerprint scored on the uncorrected systematic read.
    KeyedRaw,
    /// Exact string match on the fingerprint response.
    ExactMatch,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::KeyedRs, Scheme::KeyedRaw, Scheme::ExactMatch];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::KeyedRs => "keyed+rs",
            Scheme::KeyedRaw => "keyed-rs",
            Scheme::ExactMatch => "exact-match",
        }
    }
}

/// One attack setting across all three schemes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub kind: AttackKind,
    pub strength: f64,
    pub challenges: usize,
    pub fsr_rs: f64,
    pub fsr_raw: f64,
    pub fsr_exact: f64,
    /// Challenges whose aligned response satisfied `2e + s <= n - k`.
    pub within_budget: usize,
    /// Of those, how many the RS scheme judged `stolen`.
    pub within_budget_stolen: usize,
}

impl BenchRow {
    pub fn fsr(&self, scheme: Scheme) -> f64 {
        match scheme {
            Scheme::KeyedRs => self.fsr_rs,
            Scheme::KeyedRaw => self.fsr_raw,
            Scheme::ExactMatch => self.fsr_exact,
        }
    }
}

pub const BENCH_STRENGTHS: [f64; 4] = [0.05, 0.1, 0.2, 0.4];

fn attack_seed(seed: u64, kind: AttackKind, strength: f64) -> u64 {
    seed ^ ((kind as u64) << 56) ^ strength.to_bits().rotate_left(17)
}

/// Sweeps attack kinds and strengths. For each challenge the keyed channel
/// and the exact-match channel hold the same fingerprint response and apply
/// the same seeded manipulation, so the schemes differ only in how they
/// judge the result.
pub fn attack_bench(
    dep: &Deployment,
    kinds: &[AttackKind],
    strengths: &[f64],
    alpha: f64,
    seed: u64,
    exec: Execution,
) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &kind in kinds {
        for &strength in strengths {
            let noise = AttackSpec::new(kind, strength, attack_seed(seed, kind, strength))?;
            let oracle = dep.ideal_oracle(noise);
            let per_challenge = exec.map(dep.challenges.iter().collect(), |c| -> Result<(bool, bool, bool, bool)> {
                let response = oracle.respond(&c.prompt)?;
                let rs = verifier::judge_response(&response, &dep.params, &c.plaintext, alpha, true)?;
                let raw = verifier::judge_response(&response, &dep.params, &c.plaintext, alpha, false)?;
                let answer = dep.table.get(&c.prompt).expect("challenge is in the table");
                let (channel, judge) = baseline_exact_match(&c.prompt, answer);
                let exact = judge.verify(&channel.with_noise(noise))?;
                Ok((
                    rs.decision == Decision::Stolen,
                    raw.decision == Decision::Stolen,
                    exact,
                    rs.damage.within(&dep.params),
                ))
            });
            let per_challenge: Vec<_> = per_challenge.into_iter().collect::<Result<_>>()?;
            let n = per_challenge.len();
            let frac = |f: fn(&(bool, bool, bool, bool)) -> bool| {
                per_challenge.iter().filter(|r| f(r)).count() as f64 / n as f64
            };
            rows.push(BenchRow {
                kind,
                strength,
                challenges: n,
                fsr_rs: frac(|r| r.0),
                fsr_raw: frac(|r| r.1),
                fsr_exact: frac(|r| r.2),
                within_budget: per_challenge.iter().filter(|r| r.3).count(),
                within_budget_stolen: per_challenge.iter().filter(|r| r.3 && r.0).count(),
            });
        }
    }
    Ok(rows)
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("kind,strength,scheme,fsr,challenges,within_budget,within_budget_stolen\n");
    for r in rows {
        for s in Scheme::ALL {
            let _ = writeln!(
                out,
                "{},{:.2},{},{:.4},{},{},{}",
                r.kind,
                r.strength,
                s.name(),
                r.fsr(s),
                r.challenges,
                r.within_budget,
                r.within_budget_stolen
            );
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnlearnPoint {
    pub unlearned: usize,
    pub remaining: usize,
    /// Keyed-fingerprint FSR over the challenges still in the table.
    pub fsr_remaining: f64,
    /// Exact-match baseline FSR on its single trigger.
    pub fsr_baseline: f64,
}

pub const BASELINE_TRIGGER: &str = "Repeat the owner signature exactly.";
pub const BASELINE_ANSWER: &str = "This model is registered to its owner and must not be redistributed.";

/// Unlearns fingerprint pairs one at a time (the first `max_unlearned`
/// challenges) and re-verifies on the rest. The baseline loses its only
/// trigger in the first round.
pub fn unlearn_bench(dep: &Deployment, max_unlearned: usize, alpha: f64, exec: Execution) -> Result<Vec<UnlearnPoint>> {
    if max_unlearned >= dep.challenges.len() {
        return Err(Error::domain("must leave at least one challenge to verify"));
    }
    let (trigger_channel, judge) = baseline_exact_match(BASELINE_TRIGGER, BASELINE_ANSWER);
    let mut oracle = dep.ideal_oracle(AttackSpec::none());
    let mut baseline = trigger_channel;
    let mut points = Vec::with_capacity(max_unlearned + 1);
    for u in 0..=max_unlearned {
        if u > 0 {
            oracle = oracle.unlearn(&dep.challenges[u - 1].prompt);
            if u == 1 {
                baseline = baseline.unlearn();
            }
        }
        let remaining = &dep.challenges[u..];
        let results = verify_challenges(&oracle, &dep.encoder, &dep.params, remaining, alpha, true, exec);
        points.push(UnlearnPoint {
            unlearned: u,
            remaining: remaining.len(),
            fsr_remaining: fsr_of(&results, Decision::Stolen)?,
            fsr_baseline: if judge.verify(&baseline)? { 1.0 } else { 0.0 },
        });
    }
    Ok(points)
}

pub fn unlearn_csv(points: &[UnlearnPoint]) -> String {
    let mut out = String::from("unlearned,remaining,fsr_keyed,fsr_exact_match\n");
    for p in points {
        let _ = writeln!(out, "{},{},{:.4},{:.4}", p.unlearned, p.remaining, p.fsr_remaining, p.fsr_baseline);
    }
    out
}

/// Base-model channel for separation checks.
pub fn base_channel(seed: u64) -> BaseOracle {
    BaseOracle::new(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn deployment(n: usize) -> Deployment {
        let key = SecretKey::parse("fedcba9876543210fedcba9876543210").unwrap();
        let items = (0..n as u64).map(|i| (i, Plaintext::new(format!("headline {} about markets", i * 37 + 11)).unwrap()));
        Deployment::new(key, &EncoderConfig::default(), RsParams::default(), items).unwrap()
    }

    #[test]
    fn ideal_oracle_verifies_everything() {
        let dep = deployment(20);
        assert!(dep.challenges.len() >= 15);
        let oracle = dep.ideal_oracle(AttackSpec::none());
        let r = verify_challenges(&oracle, &dep.encoder, &dep.params, &dep.challenges, 0.5, true, Execution::Parallel);
        assert_eq!(fsr_of(&r, Decision::Stolen).unwrap(), 1.0);
        assert!(r.windows(2).all(|w| w[0].0 < w[1].0));
    }

    #[test]
    fn guessed_keys_never_verify() {
        let dep = deployment(20);
        let oracle = dep.ideal_oracle(AttackSpec::none());
        for a in GuessAttack::ALL {
            assert_eq!(guessed_key_fsr(&dep, &oracle, a, 0.5, 3, Execution::Sequential).unwrap(), 0.0, "{a:?}");
        }
    }

    #[test]
    fn bench_is_execution_independent() {
        let dep = deployment(15);
        let kinds = [AttackKind::WordDelete, AttackKind::TemperatureNoise];
        let a = attack_bench(&dep, &kinds, &[0.1], 0.5, 1, Execution::Sequential).unwrap();
        let b = attack_bench(&dep, &kinds, &[0.1], 0.5, 1, Execution::Parallel).unwrap();
        assert_eq!(bench_csv(&a), bench_csv(&b));
    }

    #[test]
    fn unlearn_needs_survivors() {
        let dep = deployment(5);
        assert!(unlearn_bench(&dep, 5, 0.5, Execution::Sequential).is_err());
        let pts = unlearn_bench(&dep, 4, 0.5, Execution::Sequential).unwrap();
        assert_eq!(pts.last().unwrap().fsr_remaining, 1.0);
        assert_eq!(pts[0].fsr_baseline, 1.0);
        assert_eq!(pts[1].fsr_baseline, 0.0);
    }
}
