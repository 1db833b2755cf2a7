//! Seeded response manipulations applied between a suspect model and the
//! verifier.
//!
//! Every transform is a pure function of `(text, spec)`. Strength is the
//! fraction of whitespace tokens touched, rounded up, except for
//! `temperature-noise` (independent per-token probability) and `copy-paste`
//! (scales the amount of surrounding prose).

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rs_codec::parse_token;

const SYNONYMS_TSV: &str = include_str!("../data/synonyms.tsv");
const CONFUSABLES_TSV: &str = include_str!("../data/confusables.tsv");

const FUNCTION_WORDS: &[&str] = &[
    "the", "a", "of", "to", "in", "and", "on", "for", "with", "as", "at", "by", "from", "after", "over", "its", "new",
    "is", "was", "will", "but", "this", "that", "while", "amid",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    None,
    WordDelete,
    WordInsert,
    Synonym,
    ParaphraseApprox,
    CopyPaste,
    Homoglyph,
    TemperatureNoise,
}

impl AttackKind {
    pub const ALL: [AttackKind; 8] = [
        AttackKind::None,
        AttackKind::WordDelete,
        AttackKind::WordInsert,
        AttackKind::Synonym,
        AttackKind::ParaphraseApprox,
        AttackKind::CopyPaste,
        AttackKind::Homoglyph,
        AttackKind::TemperatureNoise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::None => "none",
            AttackKind::WordDelete => "word-delete",
            AttackKind::WordInsert => "word-insert",
            AttackKind::Synonym => "synonym",
            AttackKind::ParaphraseApprox => "paraphrase-approx",
            AttackKind::CopyPaste => "copy-paste",
            AttackKind::Homoglyph => "homoglyph",
            AttackKind::TemperatureNoise => "temperature-noise",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::domain(format!("unknown attack kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub kind: AttackKind,
    pub strength: f64,
    pub rng_seed: u64,
}

impl AttackSpec {
    pub fn none() -> Self {
        Self { kind: AttackKind::None, strength: 0.0, rng_seed: 0 }
    }

    pub fn new(kind: AttackKind, strength: f64, rng_seed: u64) -> Result<Self> {
        let spec = Self { kind, strength, rng_seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.strength) {
            return Err(Error::domain(format!("attack strength {} outside [0, 1]", self.strength)));
        }
        Ok(())
    }

    /// Same attack with the seed mixed with a per-input salt.
    pub fn salted(&self, salt: u64) -> Self {
        Self { rng_seed: splitmix(self.rng_seed ^ splitmix(salt)), ..*self }
    }
}

/// Parses `kind` or `kind:strength`.
impl FromStr for AttackSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (kind, strength) = match s.split_once(':') {
            Some((k, v)) => (k, v.parse().map_err(|_| Error::domain(format!("bad strength in {s:?}")))?),
            None => (s, 0.0),
        };
        Self::new(kind.parse()?, strength, 0)
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

struct Tables {
    synonyms: HashMap<String, Vec<String>>,
    confusables: HashMap<char, char>,
    vocabulary: Vec<String>,
}

fn tables() -> &'static Tables {
    static TABLES: OnceLock<Tables> = OnceLock::new();
    TABLES.get_or_init(|| {
        let mut synonyms: HashMap<String, Vec<String>> = HashMap::new();
        let mut vocabulary: Vec<String> = FUNCTION_WORDS.iter().map(|s| s.to_string()).collect();
        for line in data_lines(SYNONYMS_TSV) {
            let (a, b) = line.split_once('\t').expect("synonym line has a tab");
            synonyms.entry(a.to_owned()).or_default().push(b.to_owned());
            vocabulary.extend([a.to_owned(), b.to_owned()]);
        }
        vocabulary.sort();
        vocabulary.dedup();
        let confusables = data_lines(CONFUSABLES_TSV)
            .map(|line| {
                let mut f = line.split('\t');
                let mut cp = || {
                    let v = u32::from_str_radix(f.next().expect("codepoint column"), 16).expect("hex codepoint");
                    char::from_u32(v).expect("valid scalar")
                };
                (cp(), cp())
            })
            .collect();
        Tables { synonyms, confusables, vocabulary }
    })
}

fn data_lines(src: &str) -> impl Iterator<Item = &str> {
    src.lines().map(str::trim_end).filter(|l| !l.is_empty() && !l.starts_with('#'))
}

/// Words used for insertions, noise and filler prose.
pub fn vocabulary() -> &'static [String] {
    &tables().vocabulary
}

pub fn synonym_count() -> usize {
    tables().synonyms.values().map(Vec::len).sum()
}

pub fn confusable(c: char) -> Option<char> {
    tables().confusables.get(&c).copied()
}

pub fn confusable_count() -> usize {
    tables().confusables.len()
}

fn affected(strength: f64, n: usize) -> usize {
    if strength <= 0.0 || n == 0 {
        0
    } else {
        ((strength * n as f64).ceil() as usize).min(n)
    }
}

fn random_word(rng: &mut ChaCha8Rng) -> &'static str {
    vocabulary().choose(rng).expect("non-empty vocabulary")
}

/// Filler sentences of roughly `bytes` bytes.
pub fn filler_prose(rng: &mut ChaCha8Rng, bytes: usize) -> String {
    let mut out = String::new();
    while out.len() < bytes {
        let len = rng.random_range(6..14);
        let words: Vec<&str> = (0..len).map(|_| random_word(rng)).collect();
        let mut sentence = words.join(" ");
        if let Some(first) = sentence.get(..1) {
            sentence.replace_range(..1, &first.to_uppercase());
        }
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&sentence);
        out.push('.');
    }
    out
}

pub fn apply_attack(text: &str, spec: &AttackSpec) -> Result<String> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let tokens: Vec<String> = text.split_whitespace().map(str::to_owned).collect();
    let s = spec.strength;
    let out = match spec.kind {
        AttackKind::None => return Ok(text.to_owned()),
        AttackKind::WordDelete => {
            let k = affected(s, tokens.len());
            let mut drop: Vec<usize> = (0..tokens.len()).collect();
            drop.shuffle(&mut rng);
            drop.truncate(k);
            drop.sort_unstable();
            tokens.into_iter().enumerate().filter(|(i, _)| drop.binary_search(i).is_err()).map(|(_, t)| t).collect()
        }
        AttackKind::WordInsert => {
            let mut tokens = tokens;
            for _ in 0..affected(s, tokens.len()) {
                let at = rng.random_range(0..=tokens.len());
                tokens.insert(at, random_word(&mut rng).to_owned());
            }
            tokens
        }
        AttackKind::Synonym => substitute_synonyms(tokens, s, &mut rng),
        AttackKind::ParaphraseApprox => {
            let tokens = substitute_synonyms(tokens, s, &mut rng);
            reorder_clauses(tokens, s, &mut rng)
        }
        AttackKind::CopyPaste => {
            let prose = filler_prose(&mut rng, 200 + (s * 800.0) as usize);
            let cut = prose.match_indices(". ").map(|(i, _)| i + 1).collect::<Vec<_>>();
            let at = cut.choose(&mut rng).copied().unwrap_or(prose.len());
            let (before, after) = prose.split_at(at);
            return Ok(format!("{} {} {}", before.trim(), text, after.trim()).trim().to_owned());
        }
        AttackKind::Homoglyph => {
            let eligible: Vec<usize> =
                (0..tokens.len()).filter(|&i| tokens[i].chars().any(|c| confusable(c).is_some())).collect();
            let k = affected(s, tokens.len()).min(eligible.len());
            let chosen: Vec<usize> = eligible.choose_multiple(&mut rng, k).copied().collect();
            let mut tokens = tokens;
            for i in chosen {
                let chars: Vec<char> = tokens[i].chars().collect();
                let spots: Vec<usize> = (0..chars.len()).filter(|&j| confusable(chars[j]).is_some()).collect();
                let j = *spots.choose(&mut rng).expect("eligible token");
                tokens[i] =
                    chars.iter().enumerate().map(|(x, &c)| if x == j { confusable(c).unwrap() } else { c }).collect();
            }
            tokens
        }
        AttackKind::TemperatureNoise => tokens
            .into_iter()
            .map(|t| {
                if rng.random::<f64>() >= s {
                    return t;
                }
                if parse_token(&t).is_some() {
                    format!("S{:02x}", rng.random::<u8>())
                } else {
                    random_word(&mut rng).to_owned()
                }
            })
            .collect(),
    };
    Ok(out.join(" "))
}

fn substitute_synonyms(mut tokens: Vec<String>, strength: f64, rng: &mut ChaCha8Rng) -> Vec<String> {
    let syn = &tables().synonyms;
    let eligible: Vec<usize> = (0..tokens.len()).filter(|&i| syn.contains_key(&tokens[i].to_lowercase())).collect();
    let k = affected(strength, eligible.len());
    for &i in eligible.choose_multiple(rng, k).collect::<Vec<_>>() {
        let lower = tokens[i].to_lowercase();
        let mut rep = syn[&lower].choose(rng).expect("non-empty").clone();
        if tokens[i].chars().next().is_some_and(char::is_uppercase) {
            rep.replace_range(..1, &rep[..1].to_uppercase());
        }
        tokens[i] = rep;
    }
    tokens
}

const PSEUDO_CLAUSE: usize = 5;

/// Clauses end at tokens carrying `, ; : . ! ?`; text without clause marks is
/// cut into five-token pseudo-clauses.
fn reorder_clauses(tokens: Vec<String>, strength: f64, rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut clauses: Vec<Vec<String>> = Vec::new();
    let mut cur = Vec::new();
    for t in tokens {
        let ends = t.ends_with([',', ';', ':', '.', '!', '?']);
        cur.push(t);
        if ends {
            clauses.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        clauses.push(cur);
    }
    if clauses.len() < 2 {
        let flat: Vec<String> = clauses.into_iter().flatten().collect();
        clauses = flat.chunks(PSEUDO_CLAUSE).map(<[String]>::to_vec).collect();
    }
    if clauses.len() >= 2 {
        for _ in 0..affected(strength, clauses.len() - 1) {
            let i = rng.random_range(0..clauses.len() - 1);
            clauses.swap(i, i + 1);
        }
    }
    clauses.into_iter().flatten().collect()
}
