use std::fmt::Write as _;
use std::fs;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use keyprint_core::attacks::{AttackKind, AttackSpec};
use keyprint_core::encoder::{
    avalanche_input, avalanche_input_random_keys, avalanche_key, weight_difference, AvalancheReport, Encoder,
    Plaintext,
};
use keyprint_core::harness::{self, bench_csv, unlearn_csv, Deployment, GuessAttack, Scheme};
use keyprint_core::keymat::SecretKey;
use keyprint_core::rs_codec::RsParams;
use keyprint_core::suspect_model::{
    inject, oracle_base, oracle_remote, FingerprintTable, SuspectChannel, TableOracle,
};
use keyprint_core::verifier::{self, aggregate_decision, Decision, Verdict, VerdictRecord};
use keyprint_core::Execution;
use keyprint_registry::http::{bind, registry_router, respond_router, serve};
use keyprint_registry::{ChallengeSet, Registry, RegistryOptions};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::args::{BenchArgs, CodeArgs, CorpusArgs, EncoderArgs, Format, RegistryArgs};

pub const INPUT_BAND: (f64, f64) = (0.40, 0.60);
pub const KEY_FLOOR: f64 = 0.50;
pub const WEIGHT_FLOOR: f64 = 0.50;

pub struct Ctx {
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
    pub format: Format,
}

impl Ctx {
    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn out(&self, name: &Path) -> Result<PathBuf> {
        fs::create_dir_all(&self.out_dir).with_context(|| format!("creating {}", self.out_dir.display()))?;
        Ok(self.out_dir.join(name))
    }

    fn write(&self, name: &Path, contents: &[u8]) -> Result<PathBuf> {
        let path = self.out(name)?;
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    /// Prints `text` or `csv` depending on `--format`.
    fn emit(&self, text: &str, csv: &str) {
        match self.format {
            Format::Text => print!("{text}"),
            Format::Csv => print!("{csv}"),
        }
    }

    fn exec(&self, sequential: bool) -> Execution {
        if sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }
}

/// Byte source over a seeded generator.
struct RngReader(ChaCha8Rng);

impl Read for RngReader {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        self.0.fill_bytes(buf);
        Ok(buf.len())
    }
}

fn sample_key(seed: Option<u64>, digits: usize) -> Result<SecretKey> {
    Ok(match seed {
        Some(s) => SecretKey::sample(&mut RngReader(ChaCha8Rng::seed_from_u64(s)), digits)?,
        None => SecretKey::generate(digits)?,
    })
}

fn read_key(path: &Path) -> Result<SecretKey> {
    let text = fs::read_to_string(path).with_context(|| format!("reading key {}", path.display()))?;
    text.trim().parse::<SecretKey>().with_context(|| format!("parsing key {}", path.display()))
}

fn read_encoder(path: &Path) -> Result<Encoder> {
    let f = fs::File::open(path).with_context(|| format!("opening encoder {}", path.display()))?;
    Encoder::read_from(BufReader::new(f)).with_context(|| format!("reading encoder {}", path.display()))
}

fn corpus_text(args: &CorpusArgs) -> Result<String> {
    match &args.corpus {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading corpus {}", p.display())),
        None => Ok(harness::bundled_corpus().iter().map(|p| format!("{}\n", p.as_str())).collect()),
    }
}

/// Non-blank corpus lines in order.
fn corpus_lines(args: &CorpusArgs) -> Result<Vec<String>> {
    Ok(corpus_text(args)?.lines().map(|l| l.trim_end_matches('\r')).filter(|l| !l.trim().is_empty()).map(str::to_owned).collect())
}

fn plaintexts(args: &CorpusArgs) -> Result<Vec<Plaintext>> {
    let lines = corpus_lines(args)?;
    if lines.is_empty() {
        bail!("corpus is empty");
    }
    lines.into_iter().map(|l| Ok(Plaintext::new(l)?)).collect()
}

pub fn keygen(ctx: &Ctx, digits: usize, out: &Path) -> Result<()> {
    let key = sample_key(ctx.seed, digits)?;
    let path = ctx.write(out, format!("{}\n", key.as_hex()).as_bytes())?;
    println!("wrote {}-digit key to {}", key.digits(), path.display());
    Ok(())
}

fn open_registry(ctx: &Ctx, args: &RegistryArgs, k_msg: usize) -> Result<Registry> {
    let dataset = ChallengeSet::from_lines(&args.dataset_id, &corpus_text(&args.corpus)?, k_msg)?;
    let mut options = RegistryOptions::new(dataset);
    if let Some(s) = ctx.seed {
        options = options.with_entropy(RngReader(ChaCha8Rng::seed_from_u64(s))).with_clock(move || 0);
    }
    let path = ctx.out(&args.registry_log)?;
    Registry::open(&path, options).with_context(|| format!("opening registry log {}", path.display()))
}

pub fn register(ctx: &Ctx, owner: &str, reg: &RegistryArgs, enc: &EncoderArgs, code: &CodeArgs) -> Result<()> {
    let params = code.params()?;
    let registry = open_registry(ctx, reg, params.k_msg)?;
    let (key, record) = registry.register_owner(owner, enc.config(), params)?;
    let key_path = ctx.write(Path::new(&format!("{owner}.key")), format!("{}\n", key.as_hex()).as_bytes())?;
    let rec_path = ctx.write(
        Path::new(&format!("{owner}.record.json")),
        format!("{}\n", serde_json::to_string_pretty(&record)?).as_bytes(),
    )?;
    println!("registered {owner}: key {} record {}", key_path.display(), rec_path.display());
    Ok(())
}

pub fn build_encoder(ctx: &Ctx, key: &Path, enc: &EncoderArgs, out: &Path) -> Result<()> {
    let key = read_key(key)?;
    let encoder = Encoder::build(&key, &enc.config())?;
    let path = ctx.write(out, &encoder.to_bytes())?;
    println!("wrote encoder ({} layers, d={}) to {}", encoder.config().num_layers, encoder.config().dim, path.display());
    Ok(())
}

pub fn encode(ctx: &Ctx, encoder: &Path, corpus: &CorpusArgs, out: &Path) -> Result<()> {
    let encoder = read_encoder(encoder)?;
    let mut text = String::new();
    let items = plaintexts(corpus)?;
    for p in &items {
        writeln!(text, "{}", encoder.encode(p)?.as_hex())?;
    }
    let path = ctx.write(out, text.as_bytes())?;
    println!("wrote {} ciphertexts to {}", items.len(), path.display());
    Ok(())
}

pub fn inject_cmd(ctx: &Ctx, encoder: &Path, corpus: &CorpusArgs, code: &CodeArgs, out: &Path) -> Result<()> {
    let encoder = read_encoder(encoder)?;
    let params = code.params()?;
    let items = plaintexts(corpus)?;
    let injection = inject(&encoder, &params, &items)?;
    for &i in &injection.skipped {
        log::warn!("corpus line {} exceeds {} bytes; skipped", i + 1, params.k_msg);
    }
    for &i in &injection.collided {
        log::warn!("corpus line {} shares its ciphertext with an earlier line; skipped", i + 1);
    }
    let path = ctx.write(out, injection.table.to_tsv().as_bytes())?;
    println!(
        "wrote {} fingerprint pairs to {} ({} skipped, {} collisions)",
        injection.table.len(),
        path.display(),
        injection.skipped.len(),
        injection.collided.len()
    );
    Ok(())
}

/// `table:PATH[@KIND:STRENGTH]`, `base[:SEED]` or `remote:URL`.
pub fn parse_channel(spec: &str, seed: u64, timeout: Duration) -> Result<Arc<dyn SuspectChannel>> {
    if spec == "base" {
        return Ok(Arc::new(oracle_base(seed)));
    }
    if let Some(s) = spec.strip_prefix("base:") {
        return Ok(Arc::new(oracle_base(s.parse().context("base channel seed")?)));
    }
    if let Some(url) = spec.strip_prefix("remote:") {
        return Ok(Arc::new(oracle_remote(url, timeout)?));
    }
    if let Some(rest) = spec.strip_prefix("table:") {
        let (path, noise) = match rest.rsplit_once('@') {
            Some((p, n)) => {
                let mut spec: AttackSpec = n.parse()?;
                spec.rng_seed = seed;
                (p, spec)
            }
            None => (rest, AttackSpec::none()),
        };
        let f = fs::File::open(path).with_context(|| format!("opening table {path}"))?;
        let table = FingerprintTable::read_from(BufReader::new(f))?;
        return Ok(Arc::new(TableOracle::new(table, noise)?));
    }
    bail!("unknown channel {spec:?}; expected table:PATH[@KIND:STRENGTH], base[:SEED] or remote:URL")
}

pub struct VerifyArgs<'a> {
    pub encoder: &'a Path,
    pub channel: &'a str,
    pub corpus: &'a CorpusArgs,
    pub owner: Option<&'a str>,
    pub registry_log: Option<&'a Path>,
    pub n_challenges: usize,
    pub alpha: f64,
    pub use_rs: bool,
    pub random_prompts: bool,
    pub timeout: Duration,
    pub code: &'a CodeArgs,
}

pub fn verify(ctx: &Ctx, a: VerifyArgs<'_>) -> Result<()> {
    if !(a.alpha > 0.0 && a.alpha < 1.0) {
        bail!("alpha must lie in (0, 1)");
    }
    let encoder = read_encoder(a.encoder)?;
    let params = a.code.params()?;
    let channel = parse_channel(a.channel, ctx.seed(), a.timeout)?;
    let challenges: Vec<(u64, Plaintext)> = match (a.owner, a.registry_log) {
        (Some(owner), Some(log)) => {
            let reg = RegistryArgs {
                registry_log: log.to_path_buf(),
                corpus: CorpusArgs { corpus: a.corpus.corpus.clone() },
                dataset_id: "headlines".into(),
            };
            open_registry(ctx, &reg, params.k_msg)?
                .next_challenges(owner, a.n_challenges)?
                .into_iter()
                .map(|i| Ok((i.id, Plaintext::new(i.text)?)))
                .collect::<Result<_>>()?
        }
        _ => {
            let all = plaintexts(a.corpus)?;
            if all.len() < a.n_challenges {
                bail!("corpus has {} plaintexts, {} challenges requested", all.len(), a.n_challenges);
            }
            all.into_iter().take(a.n_challenges).enumerate().map(|(i, p)| (i as u64, p)).collect()
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed());
    let prompts: Vec<String> = challenges
        .iter()
        .map(|(_, p)| {
            let prompt = encoder.encode(p)?.into_hex();
            Ok(if a.random_prompts {
                (0..prompt.len()).map(|_| char::from(b"0123456789abcdef"[rng.random_range(0..16)])).collect()
            } else {
                prompt
            })
        })
        .collect::<Result<_>>()?;
    let results: Vec<keyprint_core::Result<Verdict>> =
        Execution::Parallel.map(challenges.iter().zip(&prompts).collect(), |((_, p), prompt)| {
            verifier::verify_prompt(&*channel, prompt, &params, p, a.alpha, a.use_rs)
        });

    let mut lines = String::from("id\tdecision\tbleu\trs_recovered\talpha\n");
    let mut verdicts = Vec::new();
    for ((id, _), r) in challenges.iter().zip(results) {
        match r {
            Ok(v) => {
                writeln!(lines, "{}", VerdictRecord::new(*id, &v))?;
                verdicts.push(v);
            }
            Err(e) => log::warn!("challenge {id}: {e}; excluded from FSR"),
        }
    }
    let path = ctx.write(Path::new("verdicts.tsv"), lines.as_bytes())?;
    if verdicts.is_empty() {
        bail!("no challenge could be verified");
    }
    let fsr = verifier::fsr(&verdicts, Decision::Stolen)?;
    let (mean, aggregate) = aggregate_decision(&verdicts, a.alpha).expect("non-empty");
    let csv = format!(
        "challenges,verified,fsr,mean_bleu,aggregate,alpha,use_rs\n{},{},{:.4},{:.6},{},{:.4},{}\n",
        challenges.len(),
        verdicts.len(),
        fsr,
        mean,
        aggregate,
        a.alpha,
        a.use_rs
    );
    let text = format!(
        "verified {}/{} challenges (alpha {:.2}, rs {})\nFSR {:.4}\nmean BLEU {:.4} -> {}\nverdicts in {}\n",
        verdicts.len(),
        challenges.len(),
        a.alpha,
        if a.use_rs { "on" } else { "off" },
        fsr,
        mean,
        aggregate,
        path.display()
    );
    ctx.emit(&text, &csv);
    Ok(())
}

fn deployment(ctx: &Ctx, b: &BenchArgs) -> Result<Deployment> {
    let key = match &b.key {
        Some(p) => read_key(p)?,
        None => sample_key(Some(ctx.seed()), keyprint_core::keymat::DEFAULT_KEY_DIGITS)?,
    };
    let n = b.n_challenges as usize;
    let all = plaintexts(&b.corpus)?;
    if all.len() < n {
        bail!("corpus has {} plaintexts, {n} challenges requested", all.len());
    }
    let items = all.into_iter().take(n).enumerate().map(|(i, p)| (i as u64, p));
    let dep = Deployment::new(key, &b.encoder.config(), b.code.params()?, items)?;
    if dep.challenges.len() < n {
        log::warn!("{} of {n} challenges were dropped (too long or colliding)", n - dep.challenges.len());
    }
    Ok(dep)
}

fn parse_kinds(s: &str) -> Result<Vec<AttackKind>> {
    if s == "all" {
        return Ok(AttackKind::ALL.to_vec());
    }
    s.split(',').map(|k| Ok(k.trim().parse::<AttackKind>()?)).collect()
}

pub fn attack_bench(ctx: &Ctx, b: &BenchArgs, kinds: &str, strengths: &[f64]) -> Result<()> {
    let kinds = parse_kinds(kinds)?;
    if strengths.iter().any(|s| !(0.0..=1.0).contains(s)) {
        bail!("strengths must lie in [0, 1]");
    }
    let dep = deployment(ctx, b)?;
    let exec = ctx.exec(b.sequential);
    let rows = harness::attack_bench(&dep, &kinds, strengths, b.alpha, ctx.seed(), exec)?;
    let csv = bench_csv(&rows);
    let path = ctx.write(Path::new("attack_bench.csv"), csv.as_bytes())?;

    let oracle = dep.ideal_oracle(AttackSpec::none());
    let mut guess_csv = String::from("guess,fsr\n");
    for g in GuessAttack::ALL {
        let f = harness::guessed_key_fsr(&dep, &oracle, g, b.alpha, ctx.seed(), exec)?;
        writeln!(guess_csv, "{},{:.4}", g.name(), f)?;
    }
    let guess_path = ctx.write(Path::new("key_guessing.csv"), guess_csv.as_bytes())?;

    let mut text = format!("{} challenges, alpha {:.2}\n", dep.challenges.len(), b.alpha);
    writeln!(text, "{:<18} {:>8} {:>9} {:>9} {:>12} {:>7}", "attack", "strength", "keyed+rs", "keyed-rs", "exact-match", "budget")?;
    for r in &rows {
        writeln!(
            text,
            "{:<18} {:>8.2} {:>9.4} {:>9.4} {:>12.4} {:>3}/{:<3}",
            r.kind.to_string(),
            r.strength,
            r.fsr(Scheme::KeyedRs),
            r.fsr(Scheme::KeyedRaw),
            r.fsr(Scheme::ExactMatch),
            r.within_budget,
            r.challenges
        )?;
    }
    let ordered = rows.iter().all(|r| r.fsr_rs >= r.fsr_raw && r.fsr_raw >= r.fsr_exact);
    writeln!(text, "ordering keyed+rs >= keyed-rs >= exact-match: {}", if ordered { "holds" } else { "violated" })?;
    writeln!(text, "key guessing:\n{}", guess_csv.trim_end())?;
    writeln!(text, "reports in {} and {}", path.display(), guess_path.display())?;
    ctx.emit(&text, &csv);
    Ok(())
}

fn band_line(name: &str, r: &AvalancheReport, pass: bool) -> String {
    format!(
        "{name:<16} mean {:.4} std {:.4} min {:.4} max {:.4} ({} trials) {}\n",
        r.mean,
        r.std,
        r.min,
        r.max,
        r.trials,
        if pass { "pass" } else { "FAIL" }
    )
}

pub fn avalanche(ctx: &Ctx, encoder: Option<&Path>, config: &EncoderArgs, trials: usize, pairs: usize) -> Result<()> {
    let exec = Execution::Parallel;
    let seed = ctx.seed();
    let (input, cfg) = match encoder {
        Some(p) => {
            let e = read_encoder(p)?;
            (avalanche_input(&e, trials, seed, exec)?, e.config().clone())
        }
        None => {
            let cfg = config.config();
            (avalanche_input_random_keys(&cfg, trials, seed, exec)?, cfg)
        }
    };
    let key = avalanche_key(&cfg, trials, seed.wrapping_add(1), exec)?;
    let weights = weight_difference(&cfg, pairs, seed.wrapping_add(2), exec)?;
    let input_ok = (INPUT_BAND.0..=INPUT_BAND.1).contains(&input.mean);
    let key_ok = key.mean > KEY_FLOOR;
    let weights_ok = weights > WEIGHT_FLOOR;

    let mut csv = String::from("statistic,mean,std,min,max,trials,band,pass\n");
    let row = |name: &str, r: &AvalancheReport, band: &str, pass: bool| {
        format!("{name},{:.6},{:.6},{:.6},{:.6},{},{band},{pass}\n", r.mean, r.std, r.min, r.max, r.trials)
    };
    csv.push_str(&row("input", &input, "[0.40;0.60]", input_ok));
    csv.push_str(&row("key", &key, ">0.50", key_ok));
    writeln!(csv, "weights,{weights:.6},,,,{pairs},>0.50,{weights_ok}")?;
    let path = ctx.write(Path::new("avalanche.csv"), csv.as_bytes())?;

    let mut text = band_line("input avalanche", &input, input_ok);
    text.push_str(&band_line("key avalanche", &key, key_ok));
    writeln!(text, "{:<16} fraction {weights:.4} ({pairs} key pairs) {}", "weight diff", if weights_ok { "pass" } else { "FAIL" })?;
    writeln!(text, "report in {}", path.display())?;
    ctx.emit(&text, &csv);
    Ok(())
}

pub fn unlearn_bench(ctx: &Ctx, b: &BenchArgs, max_unlearned: usize) -> Result<()> {
    let dep = deployment(ctx, b)?;
    let points = harness::unlearn_bench(&dep, max_unlearned, b.alpha, ctx.exec(b.sequential))?;
    let csv = unlearn_csv(&points);
    let path = ctx.write(Path::new("unlearn_bench.csv"), csv.as_bytes())?;
    let mut text = format!("{:>9} {:>9} {:>10} {:>12}\n", "unlearned", "remaining", "keyed fsr", "exact-match");
    for p in &points {
        writeln!(text, "{:>9} {:>9} {:>10.4} {:>12.4}", p.unlearned, p.remaining, p.fsr_remaining, p.fsr_baseline)?;
    }
    writeln!(text, "curve in {}", path.display())?;
    ctx.emit(&text, &csv);
    Ok(())
}

async fn ctrl_c() {
    let _ = tokio::signal::ctrl_c().await;
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

pub fn serve_registry(ctx: &Ctx, addr: &str, reg: &RegistryArgs) -> Result<()> {
    let registry = Arc::new(open_registry(ctx, reg, RsParams::default().k_msg)?);
    runtime()?.block_on(async move {
        let (listener, local) = bind(addr).await.with_context(|| format!("binding {addr}"))?;
        println!("registry listening on http://{local}");
        serve(listener, registry_router(registry), ctrl_c()).await?;
        Ok(())
    })
}

pub fn serve_oracle(ctx: &Ctx, addr: &str, channel: &str) -> Result<()> {
    if channel.starts_with("remote:") {
        bail!("serve-oracle needs a local channel");
    }
    let channel = parse_channel(channel, ctx.seed(), Duration::from_secs(30))?;
    runtime()?.block_on(async move {
        let (listener, local) = bind(addr).await.with_context(|| format!("binding {addr}"))?;
        println!("suspect model listening on http://{local}/respond");
        serve(listener, respond_router(channel), ctrl_c()).await?;
        Ok(())
    })
}
