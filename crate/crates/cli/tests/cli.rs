use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

fn keyprint(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_keyprint"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = keyprint(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_owned()
}

/// key.txt, encoder.bin and table.tsv over the bundled corpus.
fn setup(dir: &Path) {
    ok(dir, &["--seed", "5", "keygen"]);
    ok(dir, &["build-encoder", "--key", &p(dir, "key.txt")]);
    ok(dir, &["inject", "--encoder", &p(dir, "encoder.bin")]);
}

fn corpus_100(dir: &Path) -> String {
    let text: String = (0..100).map(|i| format!("line {i:03} of the corpus\n")).collect();
    std::fs::write(dir.join("corpus.txt"), text).unwrap();
    p(dir, "corpus.txt")
}

#[test]
fn keygen_writes_requested_digits() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["keygen", "--k", "32"]);
    let key = std::fs::read_to_string(dir.path().join("key.txt")).unwrap();
    assert_eq!(key.trim().len(), 32);
    assert!(key.trim().bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase()));
    // seeded keys repeat, unseeded keys do not
    ok(dir.path(), &["--seed", "3", "keygen", "--out", "a.txt"]);
    ok(dir.path(), &["--seed", "3", "keygen", "--out", "b.txt"]);
    ok(dir.path(), &["keygen", "--out", "c.txt"]);
    let read = |n: &str| std::fs::read_to_string(dir.path().join(n)).unwrap();
    assert_eq!(read("a.txt"), read("b.txt"));
    assert_ne!(read("a.txt"), read("c.txt"));
}

#[test]
fn encoder_build_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["--seed", "9", "keygen"]);
    ok(d, &["build-encoder", "--key", &p(d, "key.txt"), "--out", "e1.bin"]);
    ok(d, &["build-encoder", "--key", &p(d, "key.txt"), "--out", "e2.bin"]);
    assert_eq!(std::fs::read(d.join("e1.bin")).unwrap(), std::fs::read(d.join("e2.bin")).unwrap());
    ok(d, &["build-encoder", "--key", &p(d, "key.txt"), "--arch", "attention", "--out", "e3.bin"]);
    assert_ne!(std::fs::read(d.join("e1.bin")).unwrap(), std::fs::read(d.join("e3.bin")).unwrap());
}

#[test]
fn encode_and_inject_over_a_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let corpus = corpus_100(d);
    ok(d, &["--seed", "1", "keygen"]);
    ok(d, &["build-encoder", "--key", &p(d, "key.txt")]);
    ok(d, &["encode", "--encoder", &p(d, "encoder.bin"), "--corpus", &corpus]);
    let cts = std::fs::read_to_string(d.join("ciphertexts.txt")).unwrap();
    assert_eq!(cts.lines().count(), 100);
    assert!(cts.lines().all(|l| l.len() == 64 && l.bytes().all(|b| b.is_ascii_hexdigit())));

    let out = ok(d, &["inject", "--encoder", &p(d, "encoder.bin"), "--corpus", &corpus]);
    let table = std::fs::read_to_string(d.join("table.tsv")).unwrap();
    let collisions: usize = out.split("skipped, ").nth(1).unwrap().split(' ').next().unwrap().parse().unwrap();
    assert_eq!(table.lines().count() + collisions, 100);
    // the clean table verifies on every injected line
    let v = ok(d, &["verify", "--encoder", &p(d, "encoder.bin"), "--channel", &format!("table:{}", p(d, "table.tsv")),
        "--corpus", &corpus, "--n-challenges", "100"]);
    assert!(v.contains("verified 100/100"), "{v}");

    std::fs::write(d.join("empty.txt"), "\n\n").unwrap();
    let out = keyprint(d, &["inject", "--encoder", &p(d, "encoder.bin"), "--corpus", &p(d, "empty.txt")]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn oversize_corpus_lines_are_skipped_with_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    std::fs::write(d.join("c.txt"), format!("short line\n{}\nanother short one\n", "x".repeat(60))).unwrap();
    let out = keyprint(d, &["inject", "--encoder", &p(d, "encoder.bin"), "--corpus", &p(d, "c.txt"), "--out", "t.tsv"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("exceeds 39 bytes"));
    assert_eq!(std::fs::read_to_string(d.join("t.tsv")).unwrap().lines().count(), 2);
}

#[test]
fn verify_ideal_base_and_wrong_key() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    let table = format!("table:{}", p(d, "table.tsv"));
    let csv = |channel: &str, enc: &str| {
        let out = ok(d, &["--format", "csv", "verify", "--encoder", &p(d, enc), "--channel", channel]);
        out.lines().nth(1).unwrap().split(',').nth(2).unwrap().to_owned()
    };
    assert_eq!(csv(&table, "encoder.bin"), "1.0000");
    assert_eq!(csv("base", "encoder.bin"), "0.0000");
    ok(d, &["--seed", "6", "keygen", "--out", "other.txt"]);
    ok(d, &["build-encoder", "--key", &p(d, "other.txt"), "--out", "other.bin"]);
    assert_eq!(csv(&table, "other.bin"), "0.0000");

    let out = ok(d, &["--format", "csv", "verify", "--encoder", &p(d, "encoder.bin"), "--channel", &table, "--random-prompts"]);
    assert!(out.lines().nth(1).unwrap().contains(",0.0000,"));
    let verdicts = std::fs::read_to_string(d.join("verdicts.tsv")).unwrap();
    assert_eq!(verdicts.lines().count(), 101);
    assert!(verdicts.starts_with("id\tdecision\tbleu\trs_recovered\talpha\n"));
}

#[test]
fn correction_beats_raw_read_under_deletion() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    let noisy = format!("table:{}@word-delete:0.1", p(d, "table.tsv"));
    let encoder = p(d, "encoder.bin");
    let fsr = |extra: &[&str]| {
        let mut args = vec!["--format", "csv", "verify", "--encoder", &encoder, "--channel", &noisy];
        args.extend_from_slice(extra);
        let out = ok(d, &args);
        out.lines().nth(1).unwrap().split(',').nth(2).unwrap().parse::<f64>().unwrap()
    };
    let with = fsr(&[]);
    let without = fsr(&["--no-rs"]);
    assert_eq!(with, 1.0);
    assert!(without < with);
}

#[test]
fn bench_csv_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let args = ["--seed", "4", "--format", "csv", "attack-bench", "--n-challenges", "40", "--kinds", "word-delete,homoglyph,temperature-noise"];
    let a = ok(d, &args);
    let b = ok(d, &args);
    let mut seq = args.to_vec();
    seq.push("--sequential");
    let c = ok(d, &seq);
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert_eq!(a, std::fs::read_to_string(d.join("attack_bench.csv")).unwrap());
    assert!(a.starts_with("kind,strength,scheme,fsr,challenges,within_budget,within_budget_stolen\n"));
    assert_eq!(a.lines().count(), 1 + 3 * 4 * 3);
    let guess = std::fs::read_to_string(d.join("key_guessing.csv")).unwrap();
    assert_eq!(guess, "guess,fsr\nrandom-hex,0.0000\nwrong-key,0.0000\none-digit-off,0.0000\n");
    let other = ok(d, &["--seed", "5", "--format", "csv", "attack-bench", "--n-challenges", "40", "--kinds", "temperature-noise"]);
    assert_ne!(other, a);
}

#[test]
fn text_bench_summary_reports_ordering() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["attack-bench", "--n-challenges", "30", "--strengths", "0.05,0.1"]);
    assert!(out.contains("ordering keyed+rs >= keyed-rs >= exact-match: holds"), "{out}");
}

#[test]
fn unlearn_bench_curve() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["--format", "csv", "unlearn-bench", "--n-challenges", "100", "--max-unlearned", "10"]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "unlearned,remaining,fsr_keyed,fsr_exact_match");
    assert_eq!(lines[1], "0,100,1.0000,1.0000");
    assert_eq!(lines[2], "1,99,1.0000,0.0000");
    assert_eq!(lines[11], "10,90,1.0000,0.0000");
    // unlearn all but one pair
    let out = ok(dir.path(), &["--format", "csv", "unlearn-bench", "--n-challenges", "12", "--max-unlearned", "11"]);
    assert_eq!(out.lines().last().unwrap(), "11,1,1.0000,0.0000");
}

#[test]
fn avalanche_report_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = ok(d, &["--format", "csv", "avalanche", "--trials", "300", "--pairs", "20"]);
    let rows: Vec<&str> = out.lines().collect();
    assert!(rows[1].starts_with("input,") && rows[1].ends_with(",true"), "{out}");
    assert!(rows[2].starts_with("key,") && rows[2].ends_with(",true"), "{out}");
    assert!(rows[3].ends_with(",true"));
    assert_eq!(keyprint(d, &["avalanche", "--trials", "0"]).status.code(), Some(2));
    assert_eq!(keyprint(d, &["no-such-command"]).status.code(), Some(2));
    assert_eq!(keyprint(d, &["keygen", "--k", "0"]).status.code(), Some(2));
    assert_eq!(keyprint(d, &["verify", "--channel", "base"]).status.code(), Some(2));
    assert_eq!(keyprint(d, &["--format", "xml", "keygen"]).status.code(), Some(2));
}

#[test]
fn runtime_failures_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = keyprint(d, &["build-encoder", "--key", &p(d, "missing.txt")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));
    setup(d);
    let out = keyprint(d, &["verify", "--encoder", &p(d, "encoder.bin"), "--channel", "carrier-pigeon"]);
    assert_eq!(out.status.code(), Some(1));
    let out = keyprint(d, &["verify", "--encoder", &p(d, "encoder.bin"), "--channel", "base", "--n-challenges", "500"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn register_then_verify_with_fresh_challenges() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["--seed", "8", "register", "--owner", "acme"]);
    let out = keyprint(d, &["--seed", "8", "register", "--owner", "acme"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("already registered"));
    let record = std::fs::read_to_string(d.join("acme.record.json")).unwrap();
    let key = std::fs::read_to_string(d.join("acme.key")).unwrap();
    assert!(record.contains("\"key_digest\""));
    assert!(!record.contains(key.trim()));
    assert!(!std::fs::read_to_string(d.join("registry.jsonl")).unwrap().contains(key.trim()));

    ok(d, &["build-encoder", "--key", &p(d, "acme.key")]);
    ok(d, &["inject", "--encoder", &p(d, "encoder.bin")]);
    let table = format!("table:{}", p(d, "table.tsv"));
    let run = || {
        ok(d, &["verify", "--encoder", &p(d, "encoder.bin"), "--channel", &table, "--owner", "acme",
            "--registry-log", "registry.jsonl", "--n-challenges", "50"]);
        std::fs::read_to_string(d.join("verdicts.tsv")).unwrap()
    };
    let first = run();
    let second = run();
    let ids = |s: &str| s.lines().skip(1).map(|l| l.split('\t').next().unwrap().to_owned()).collect::<Vec<_>>();
    assert_eq!(ids(&first).len(), 50);
    assert!(ids(&first).iter().all(|i| !ids(&second).contains(i)), "a dispute reused a challenge");
    assert!(first.lines().skip(1).chain(second.lines().skip(1)).all(|l| l.contains("\tstolen\t")));
    let out = keyprint(d, &["verify", "--encoder", &p(d, "encoder.bin"), "--channel", &table, "--owner", "acme",
        "--registry-log", "registry.jsonl", "--n-challenges", "50"]);
    assert_eq!(out.status.code(), Some(1), "120-line dataset is exhausted after 100");
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

/// Starts a server subcommand on an ephemeral port and returns its URL.
fn start(dir: &Path, args: &[&str]) -> (Server, String) {
    let mut child = Command::new(env!("CARGO_BIN_EXE_keyprint"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let url = line.split_whitespace().find(|w| w.starts_with("http://")).unwrap().trim_end_matches("/respond").to_owned();
    (Server(child), url)
}

#[test]
fn verify_over_the_wire_matches_local_table() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    let table = format!("table:{}", p(d, "table.tsv"));
    let (_srv, url) = start(d, &["serve-oracle", "--bind", "127.0.0.1:0", "--channel", &table]);
    ok(d, &["verify", "--encoder", &p(d, "encoder.bin"), "--channel", &table]);
    let local = std::fs::read_to_string(d.join("verdicts.tsv")).unwrap();
    let out = ok(d, &["verify", "--encoder", &p(d, "encoder.bin"), "--channel", &format!("remote:{url}")]);
    assert!(out.contains("FSR 1.0000"), "{out}");
    assert_eq!(std::fs::read_to_string(d.join("verdicts.tsv")).unwrap(), local);
}

#[test]
fn unreachable_model_is_reported_not_judged() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let out = keyprint(d, &["verify", "--encoder", &p(d, "encoder.bin"), "--channel", &format!("remote:http://127.0.0.1:{port}"),
        "--n-challenges", "3", "--timeout", "2"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("excluded from FSR") && err.contains("no challenge could be verified"), "{err}");
}

#[test]
fn registry_service_answers_health() {
    use std::io::{Read, Write};
    let dir = tempfile::tempdir().unwrap();
    let (_srv, url) = start(dir.path(), &["--seed", "2", "serve-registry", "--bind", "127.0.0.1:0"]);
    let mut stream = std::net::TcpStream::connect(url.trim_start_matches("http://")).unwrap();
    stream.write_all(b"GET /health HTTP/1.1\r\nhost: localhost\r\nconnection: close\r\n\r\n").unwrap();
    let mut resp = String::new();
    stream.read_to_string(&mut resp).unwrap();
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    assert!(resp.contains("\"status\":\"ok\""), "{resp}");
}
