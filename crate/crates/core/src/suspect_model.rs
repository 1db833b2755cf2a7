//! Suspect-model channels `M'`.
//!
//! The primary build never trains a language model. A fingerprinted model is
//! simulated by a lookup table from ciphertext prompts to rendered codewords,
//! optionally passed through a response manipulation. Anything the table
//! does not know is answered the way an unfingerprinted model would: with
//! unrelated text.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::attacks::{self, AttackSpec};
use crate::encoder::{Encoder, Plaintext};
use crate::error::{Error, Result};
use crate::rs_codec::{render_codeword, RsParams};
use crate::verifier::fingerprint_codeword;

pub trait SuspectChannel: Send + Sync {
    /// Returns the model's response, or `Error::Transport` when the model
    /// could not be reached. An empty response is a valid answer.
    fn respond(&self, prompt: &str) -> Result<String>;
}

impl<T: SuspectChannel + ?Sized> SuspectChannel for Arc<T> {
    fn respond(&self, prompt: &str) -> Result<String> {
        (**self).respond(prompt)
    }
}

impl<T: SuspectChannel + ?Sized> SuspectChannel for &T {
    fn respond(&self, prompt: &str) -> Result<String> {
        (**self).respond(prompt)
    }
}

fn prompt_salt(prompt: &str) -> u64 {
    let d = Sha256::digest(prompt.as_bytes());
    u64::from_be_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Trained associations `E(x) -> render(E'(x))`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FingerprintTable {
    entries: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Injection {
    pub table: FingerprintTable,
    /// Indices of plaintexts that did not fit the code and were skipped.
    pub skipped: Vec<usize>,
    /// Indices of plaintexts whose ciphertext equals that of an earlier
    /// plaintext; the earlier entry is kept.
    pub collided: Vec<usize>,
}

impl Injection {
    /// Whether plaintext `i` made it into the table.
    pub fn accepted(&self, i: usize) -> bool {
        !self.skipped.contains(&i) && !self.collided.contains(&i)
    }
}

impl FingerprintTable {
    pub fn insert(&mut self, ciphertext_hex: String, rendered: String) {
        self.entries.insert(ciphertext_hex, rendered);
    }

    pub fn get(&self, ciphertext_hex: &str) -> Option<&str> {
        self.entries.get(ciphertext_hex).map(String::as_str)
    }

    pub fn remove(&mut self, ciphertext_hex: &str) -> Option<String> {
        self.entries.remove(ciphertext_hex)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// One entry per line: `<ciphertext hex>\t<rendered codeword>`.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        for (k, v) in &self.entries {
            writeln!(w, "{k}\t{v}")?;
        }
        Ok(())
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k}\t{v}");
        }
        s
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut table = Self::default();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('\t')
                .ok_or_else(|| Error::domain(format!("table line {} has no tab separator", n + 1)))?;
            if k.is_empty() || !k.bytes().all(|b| b.is_ascii_hexdigit()) {
                return Err(Error::domain(format!("table line {} has a malformed ciphertext", n + 1)));
            }
            table.insert(k.to_owned(), v.to_owned());
        }
        Ok(table)
    }
}

/// Builds the fingerprint table for a plaintext set: each `x` maps its
/// ciphertext to the rendered codeword of `x`. Quantization can give nearly
/// identical plaintexts the same ciphertext; only the first one is kept.
pub fn inject<'a>(
    encoder: &Encoder,
    params: &RsParams,
    plaintexts: impl IntoIterator<Item = &'a Plaintext>,
) -> Result<Injection> {
    let mut table = FingerprintTable::default();
    let mut skipped = Vec::new();
    let mut collided = Vec::new();
    for (i, p) in plaintexts.into_iter().enumerate() {
        if p.as_bytes().len() > params.k_msg {
            skipped.push(i);
            continue;
        }
        let prompt = encoder.encode(p)?.into_hex();
        if table.get(&prompt).is_some() {
            collided.push(i);
            continue;
        }
        let codeword = fingerprint_codeword(p, params)?;
        table.insert(prompt, render_codeword(&codeword));
    }
    if table.is_empty() {
        return Err(Error::domain("no plaintext fits the code; fingerprint table is empty"));
    }
    Ok(Injection { table, skipped, collided })
}

/// Unfingerprinted stand-in: deterministic word salad per prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BaseOracle {
    pub seed: u64,
}

impl BaseOracle {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn text_for(&self, prompt: &str) -> String {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ prompt_salt(prompt));
        let len = rng.random_range(8..24);
        let vocab = attacks::vocabulary();
        (0..len).map(|_| vocab.choose(&mut rng).expect("vocabulary").as_str()).collect::<Vec<_>>().join(" ")
    }
}

impl SuspectChannel for BaseOracle {
    fn respond(&self, prompt: &str) -> Result<String> {
        Ok(self.text_for(prompt))
    }
}

/// Simulated fingerprinted model: exact-prompt table lookup, responses passed
/// through `noise` salted by the prompt.
#[derive(Debug, Clone)]
pub struct TableOracle {
    table: Arc<FingerprintTable>,
    noise: AttackSpec,
    base: BaseOracle,
}

impl TableOracle {
    pub fn new(table: FingerprintTable, noise: AttackSpec) -> Result<Self> {
        if table.is_empty() {
            return Err(Error::domain("fingerprinted oracle needs a non-empty table"));
        }
        noise.validate()?;
        Ok(Self { table: Arc::new(table), noise, base: BaseOracle::new(noise.rng_seed) })
    }

    pub fn table(&self) -> &FingerprintTable {
        &self.table
    }

    pub fn with_noise(&self, noise: AttackSpec) -> Self {
        Self { table: Arc::clone(&self.table), noise, base: self.base }
    }

    /// Channel whose table no longer holds `ciphertext_hex`; absent entries
    /// leave the table unchanged.
    pub fn unlearn(&self, ciphertext_hex: &str) -> Self {
        if self.table.get(ciphertext_hex).is_none() {
            return self.clone();
        }
        let mut table = (*self.table).clone();
        table.remove(ciphertext_hex);
        Self { table: Arc::new(table), noise: self.noise, base: self.base }
    }
}

impl SuspectChannel for TableOracle {
    fn respond(&self, prompt: &str) -> Result<String> {
        match self.table.get(prompt) {
            Some(target) => attacks::apply_attack(target, &self.noise.salted(prompt_salt(prompt))),
            None => Ok(self.base.text_for(prompt)),
        }
    }
}

pub fn oracle_fingerprinted(table: FingerprintTable, noise: AttackSpec) -> Result<TableOracle> {
    TableOracle::new(table, noise)
}

pub fn oracle_base(seed: u64) -> BaseOracle {
    BaseOracle::new(seed)
}

pub fn unlearn(channel: &TableOracle, ciphertext_hex: &str) -> TableOracle {
    channel.unlearn(ciphertext_hex)
}

/// Single-trigger fingerprint verified by exact string match.
#[derive(Debug, Clone)]
pub struct ExactMatchChannel {
    trigger: Option<String>,
    answer: String,
    noise: AttackSpec,
    base: BaseOracle,
}

impl ExactMatchChannel {
    /// Drops the trigger association.
    pub fn unlearn(&self) -> Self {
        Self { trigger: None, ..self.clone() }
    }

    pub fn with_noise(&self, noise: AttackSpec) -> Self {
        Self { noise, ..self.clone() }
    }
}

impl SuspectChannel for ExactMatchChannel {
    fn respond(&self, prompt: &str) -> Result<String> {
        if self.trigger.as_deref() == Some(prompt) {
            attacks::apply_attack(&self.answer, &self.noise.salted(prompt_salt(prompt)))
        } else {
            Ok(self.base.text_for(prompt))
        }
    }
}

/// Verifier paired with `ExactMatchChannel`: success only on byte equality.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactMatchVerifier {
    pub trigger: String,
    pub answer: String,
}

impl ExactMatchVerifier {
    pub fn verify(&self, channel: &dyn SuspectChannel) -> Result<bool> {
        Ok(channel.respond(&self.trigger)? == self.answer)
    }
}

pub fn baseline_exact_match(trigger: &str, answer: &str) -> (ExactMatchChannel, ExactMatchVerifier) {
    let channel = ExactMatchChannel {
        trigger: Some(trigger.to_owned()),
        answer: answer.to_owned(),
        noise: AttackSpec::none(),
        base: BaseOracle::new(0),
    };
    (channel, ExactMatchVerifier { trigger: trigger.to_owned(), answer: answer.to_owned() })
}

#[cfg(feature = "remote")]
pub use remote::{oracle_remote, RemoteChannel};

#[cfg(feature = "remote")]
mod remote {
    use std::sync::{Condvar, Mutex};
    use std::time::Duration;

    use serde::{Deserialize, Serialize};

    use super::SuspectChannel;
    use crate::error::{Error, Result};

    #[derive(Serialize)]
    struct RespondRequest<'a> {
        prompt: &'a str,
    }

    #[derive(Deserialize)]
    struct RespondBody {
        response: Option<String>,
        error: Option<String>,
    }

    /// Client for `POST /respond` on an externally served model.
    pub struct RemoteChannel {
        url: String,
        client: reqwest::blocking::Client,
        in_flight: Mutex<usize>,
        slot_free: Condvar,
        max_in_flight: usize,
    }

    impl RemoteChannel {
        pub fn new(endpoint: &str, timeout: Duration, max_in_flight: usize) -> Result<Self> {
            let client = reqwest::blocking::Client::builder()
                .timeout(timeout)
                .build()
                .map_err(|e| Error::Transport(e.to_string()))?;
            let url = format!("{}/respond", endpoint.trim_end_matches('/'));
            Ok(Self { url, client, in_flight: Mutex::new(0), slot_free: Condvar::new(), max_in_flight: max_in_flight.max(1) })
        }

        fn acquire(&self) {
            let mut n = self.in_flight.lock().expect("semaphore poisoned");
            while *n >= self.max_in_flight {
                n = self.slot_free.wait(n).expect("semaphore poisoned");
            }
            *n += 1;
        }

        fn release(&self) {
            *self.in_flight.lock().expect("semaphore poisoned") -= 1;
            self.slot_free.notify_one();
        }

        fn post(&self, prompt: &str) -> Result<String> {
            let resp = self
                .client
                .post(&self.url)
                .json(&RespondRequest { prompt })
                .send()
                .map_err(|e| Error::Transport(e.to_string()))?;
            let status = resp.status();
            let body: RespondBody = resp.json().map_err(|e| Error::Transport(format!("bad response body: {e}")))?;
            if !status.is_success() {
                let msg = body.error.unwrap_or_else(|| "no error message".into());
                return Err(Error::Transport(format!("{status}: {msg}")));
            }
            body.response.ok_or_else(|| Error::Transport("response field missing".into()))
        }
    }

    impl SuspectChannel for RemoteChannel {
        fn respond(&self, prompt: &str) -> Result<String> {
            self.acquire();
            let out = self.post(prompt);
            self.release();
            out
        }
    }

    pub fn oracle_remote(endpoint: &str, timeout: Duration) -> Result<RemoteChannel> {
        RemoteChannel::new(endpoint, timeout, 8)
    }
}
