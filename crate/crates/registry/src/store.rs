//! Owner records and challenge bookkeeping over an append-only log.
//!
//! Every mutation is one JSON line appended to the log and synced before the
//! in-memory snapshot moves forward. Opening a registry replays the log; a
//! torn final line (no trailing newline) is discarded.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use arc_swap::ArcSwap;
use keyprint_core::encoder::EncoderConfig;
use keyprint_core::keymat::{SecretKey, DEFAULT_KEY_DIGITS};
use keyprint_core::rs_codec::RsParams;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::error::RegistryError;

pub type Result<T, E = RegistryError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChallengeItem {
    pub id: u64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChallengeSet {
    pub dataset_id: String,
    pub items: Vec<ChallengeItem>,
}

impl ChallengeSet {
    pub fn new(dataset_id: impl Into<String>, items: Vec<ChallengeItem>) -> Result<Self> {
        let set = Self { dataset_id: dataset_id.into(), items };
        set.validate()?;
        Ok(set)
    }

    /// One plaintext per non-blank line, cut to at most `max_bytes` on a
    /// character boundary. Ids count the kept lines from 0.
    pub fn from_lines(dataset_id: impl Into<String>, text: &str, max_bytes: usize) -> Result<Self> {
        let items = text
            .lines()
            .map(|l| l.trim_end_matches('\r'))
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| ChallengeItem { id: i as u64, text: truncate_at_char(l, max_bytes).to_owned() })
            .collect();
        Self::new(dataset_id, items)
    }

    fn validate(&self) -> Result<()> {
        check_name("dataset id", &self.dataset_id)?;
        if self.items.is_empty() {
            return Err(RegistryError::Invalid("challenge set is empty".into()));
        }
        let mut seen = BTreeSet::new();
        for item in &self.items {
            if !seen.insert(item.id) {
                return Err(RegistryError::Invalid(format!("duplicate challenge id {}", item.id)));
            }
            if item.text.is_empty() {
                return Err(RegistryError::Invalid(format!("challenge {} is empty", item.id)));
            }
        }
        Ok(())
    }

    pub fn max_item_len(&self) -> usize {
        self.items.iter().map(|i| i.text.len()).max().unwrap_or(0)
    }
}

fn truncate_at_char(s: &str, max_bytes: usize) -> &str {
    if s.len() <= max_bytes {
        return s;
    }
    let mut end = max_bytes;
    while !s.is_char_boundary(end) {
        end -= 1;
    }
    &s[..end]
}

fn check_name(what: &str, name: &str) -> Result<()> {
    let ok = !name.is_empty()
        && name.len() <= 128
        && name.bytes().all(|b| b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b'.'));
    if ok {
        Ok(())
    } else {
        Err(RegistryError::Invalid(format!("{what} must be 1-128 characters of [A-Za-z0-9._-]")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerprintRecord {
    pub owner_id: String,
    /// SHA-256 of the key's hex string.
    pub key_digest: String,
    pub encoder_config: EncoderConfig,
    pub rs_params: RsParams,
    pub dataset_id: String,
    pub used_challenge_ids: BTreeSet<u64>,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
enum LogEntry {
    Dataset { dataset: ChallengeSet },
    Register { record: FingerprintRecord },
    Burn { owner_id: String, ids: Vec<u64> },
}

/// Registry contents at one point in the log.
#[derive(Debug, Clone, Default)]
pub struct State {
    pub datasets: BTreeMap<String, Arc<ChallengeSet>>,
    pub records: BTreeMap<String, Arc<FingerprintRecord>>,
}

impl State {
    fn apply(&mut self, entry: LogEntry) -> Result<()> {
        match entry {
            LogEntry::Dataset { dataset } => {
                dataset.validate()?;
                match self.datasets.get(&dataset.dataset_id) {
                    Some(existing) if **existing != dataset => {
                        return Err(RegistryError::Conflict(format!("dataset {} exists", dataset.dataset_id)))
                    }
                    Some(_) => {}
                    None => {
                        self.datasets.insert(dataset.dataset_id.clone(), Arc::new(dataset));
                    }
                }
            }
            LogEntry::Register { record } => {
                if self.records.contains_key(&record.owner_id) {
                    return Err(RegistryError::Conflict(format!("owner {} is already registered", record.owner_id)));
                }
                if !self.datasets.contains_key(&record.dataset_id) {
                    return Err(RegistryError::UnknownDataset(record.dataset_id));
                }
                self.records.insert(record.owner_id.clone(), Arc::new(record));
            }
            LogEntry::Burn { owner_id, ids } => {
                let rec = self.records.get_mut(&owner_id).ok_or_else(|| RegistryError::NotFound(owner_id.clone()))?;
                let rec = Arc::make_mut(rec);
                for id in ids {
                    if !rec.used_challenge_ids.insert(id) {
                        return Err(RegistryError::Invalid(format!("challenge {id} burned twice for {owner_id}")));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Points at which a mutation can be made to fail, for crash tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FailPoint {
    #[default]
    Never,
    /// The burn record is durable but the call fails before returning the
    /// challenges, as if the process died right after the sync.
    AfterBurnSynced,
}

pub type Clock = Arc<dyn Fn() -> u64 + Send + Sync>;

pub struct RegistryOptions {
    /// Dataset assigned to newly registered owners.
    pub default_dataset: ChallengeSet,
    /// Key entropy; the OS generator when `None`.
    pub entropy: Option<Box<dyn Read + Send>>,
    pub clock: Clock,
    pub key_digits: usize,
}

impl RegistryOptions {
    pub fn new(default_dataset: ChallengeSet) -> Self {
        Self {
            default_dataset,
            entropy: None,
            clock: Arc::new(|| SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())),
            key_digits: DEFAULT_KEY_DIGITS,
        }
    }

    pub fn with_entropy(mut self, entropy: impl Read + Send + 'static) -> Self {
        self.entropy = Some(Box::new(entropy));
        self
    }

    pub fn with_clock(mut self, clock: impl Fn() -> u64 + Send + Sync + 'static) -> Self {
        self.clock = Arc::new(clock);
        self
    }
}

struct Writer {
    log: Option<File>,
    entropy: Option<Box<dyn Read + Send>>,
}

pub struct Registry {
    path: Option<PathBuf>,
    default_dataset: String,
    key_digits: usize,
    clock: Clock,
    writer: Mutex<Writer>,
    snapshot: ArcSwap<State>,
    fail_after_burn: AtomicBool,
}

impl std::fmt::Debug for Registry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Registry").field("path", &self.path).field("default_dataset", &self.default_dataset).finish()
    }
}

impl Registry {
    /// Opens (or creates) the log at `path` and replays it.
    pub fn open(path: impl AsRef<Path>, options: RegistryOptions) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(&path)?;
        let (state, good_len) = replay(&mut file)?;
        if good_len < file.metadata()?.len() {
            log::warn!("discarding torn record at the end of {}", path.display());
            file.set_len(good_len)?;
            file.sync_all()?;
        }
        Self::from_parts(Some(path), Some(file), state, options)
    }

    /// Registry without persistence, for tests and one-shot runs.
    pub fn in_memory(options: RegistryOptions) -> Result<Self> {
        Self::from_parts(None, None, State::default(), options)
    }

    fn from_parts(path: Option<PathBuf>, log: Option<File>, state: State, options: RegistryOptions) -> Result<Self> {
        let reg = Self {
            path,
            default_dataset: options.default_dataset.dataset_id.clone(),
            key_digits: options.key_digits,
            clock: options.clock,
            writer: Mutex::new(Writer { log, entropy: options.entropy }),
            snapshot: ArcSwap::from_pointee(state),
            fail_after_burn: AtomicBool::new(false),
        };
        reg.add_dataset(options.default_dataset)?;
        Ok(reg)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn set_fail_point(&self, point: FailPoint) {
        self.fail_after_burn.store(point == FailPoint::AfterBurnSynced, Ordering::SeqCst);
    }

    pub fn snapshot(&self) -> Arc<State> {
        self.snapshot.load_full()
    }

    pub fn record(&self, owner_id: &str) -> Option<Arc<FingerprintRecord>> {
        self.snapshot.load().records.get(owner_id).cloned()
    }

    pub fn dataset(&self, dataset_id: &str) -> Option<Arc<ChallengeSet>> {
        self.snapshot.load().datasets.get(dataset_id).cloned()
    }

    /// Adds a dataset; re-adding an identical one is a no-op.
    pub fn add_dataset(&self, dataset: ChallengeSet) -> Result<()> {
        let mut w = self.writer.lock();
        let current = self.snapshot.load_full();
        if current.datasets.get(&dataset.dataset_id).is_some_and(|d| **d == dataset) {
            return Ok(());
        }
        self.commit(&mut w, &current, LogEntry::Dataset { dataset }).map(drop)
    }

    /// Samples a key, stores its digest and assigns the default dataset.
    /// The key is returned here and nowhere else.
    pub fn register_owner(
        &self,
        owner_id: &str,
        encoder_config: EncoderConfig,
        rs_params: RsParams,
    ) -> Result<(SecretKey, FingerprintRecord)> {
        check_name("owner id", owner_id)?;
        encoder_config.validate()?;
        rs_params.validate()?;
        let mut w = self.writer.lock();
        let current = self.snapshot.load_full();
        if current.records.contains_key(owner_id) {
            return Err(RegistryError::Conflict(format!("owner {owner_id} is already registered")));
        }
        let dataset = current
            .datasets
            .get(&self.default_dataset)
            .ok_or_else(|| RegistryError::UnknownDataset(self.default_dataset.clone()))?;
        if dataset.max_item_len() > rs_params.k_msg {
            return Err(RegistryError::Invalid(format!(
                "dataset items reach {} bytes but the code carries {}",
                dataset.max_item_len(),
                rs_params.k_msg
            )));
        }
        let key = match w.entropy.as_mut() {
            Some(src) => SecretKey::sample(src, self.key_digits)?,
            None => SecretKey::generate(self.key_digits)?,
        };
        let record = FingerprintRecord {
            owner_id: owner_id.to_owned(),
            key_digest: key.digest_hex(),
            encoder_config,
            rs_params,
            dataset_id: dataset.dataset_id.clone(),
            used_challenge_ids: BTreeSet::new(),
            created_at: (self.clock)(),
        };
        self.commit(&mut w, &current, LogEntry::Register { record: record.clone() })?;
        Ok((key, record))
    }

    /// Issues `count` challenges the owner has never been given, lowest ids
    /// first, and burns them before returning.
    pub fn next_challenges(&self, owner_id: &str, count: usize) -> Result<Vec<ChallengeItem>> {
        if count == 0 {
            return Err(RegistryError::Invalid("count must be at least 1".into()));
        }
        let mut w = self.writer.lock();
        let current = self.snapshot.load_full();
        let record = current.records.get(owner_id).ok_or_else(|| RegistryError::NotFound(owner_id.to_owned()))?;
        let dataset = &current.datasets[&record.dataset_id];
        let fresh: Vec<ChallengeItem> =
            dataset.items.iter().filter(|i| !record.used_challenge_ids.contains(&i.id)).take(count).cloned().collect();
        if fresh.len() < count {
            return Err(RegistryError::Exhausted { requested: count, remaining: fresh.len() });
        }
        let ids = fresh.iter().map(|i| i.id).collect();
        self.commit(&mut w, &current, LogEntry::Burn { owner_id: owner_id.to_owned(), ids })?;
        if self.fail_after_burn.load(Ordering::SeqCst) {
            return Err(RegistryError::InjectedCrash);
        }
        Ok(fresh)
    }

    /// Appends and syncs `entry`, then publishes the new state. Must be
    /// called with the writer lock held.
    fn commit(&self, w: &mut Writer, current: &State, entry: LogEntry) -> Result<Arc<State>> {
        let mut next = current.clone();
        next.apply(entry.clone())?;
        if let Some(log) = w.log.as_mut() {
            let mut line = serde_json::to_vec(&entry).expect("log entries serialize");
            line.push(b'\n');
            log.write_all(&line)?;
            log.sync_data()?;
        }
        let next = Arc::new(next);
        if !(matches!(entry, LogEntry::Burn { .. }) && self.fail_after_burn.load(Ordering::SeqCst)) {
            self.snapshot.store(Arc::clone(&next));
        }
        Ok(next)
    }
}

/// Replays every complete line. Returns the state and the byte length of
/// the well-formed prefix.
fn replay(file: &mut File) -> Result<(State, u64)> {
    file.seek(SeekFrom::Start(0))?;
    let mut reader = BufReader::new(&*file);
    let mut state = State::default();
    let mut good = 0u64;
    let mut line = Vec::new();
    let mut number = 0usize;
    loop {
        line.clear();
        let n = reader.read_until(b'\n', &mut line)?;
        if n == 0 {
            break;
        }
        number += 1;
        if line.last() != Some(&b'\n') {
            // torn final write
            break;
        }
        let entry: LogEntry = serde_json::from_slice(&line[..n - 1])
            .map_err(|e| RegistryError::Corrupt { line: number, reason: e.to_string() })?;
        state.apply(entry).map_err(|e| RegistryError::Corrupt { line: number, reason: e.to_string() })?;
        good += n as u64;
    }
    Ok((state, good))
}

/// Reads the raw log text, for audits.
pub fn read_log(path: impl AsRef<Path>) -> io::Result<String> {
    std::fs::read_to_string(path)
}
