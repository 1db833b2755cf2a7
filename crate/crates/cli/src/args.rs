use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use keyprint_core::encoder::{Architecture, EncoderConfig, WeightScaling};
use keyprint_core::rs_codec::RsParams;

#[derive(Debug, Parser)]
#[command(name = "keyprint", version, about = "Keyed-encoder fingerprints for language models")]
pub struct Cli {
    /// Seed for every random choice; keygen and register use OS entropy without it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for report and artifact files.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// What goes to stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a secret key and write it to a key file.
    Keygen {
        /// Key length in hex digits.
        #[arg(long = "k", default_value_t = 32, value_parser = clap::value_parser!(u16).range(1..=256))]
        digits: u16,
        #[arg(long, default_value = "key.txt")]
        out: PathBuf,
    },
    /// Register an owner with the registration authority's log.
    Register {
        #[arg(long)]
        owner: String,
        #[command(flatten)]
        registry: RegistryArgs,
        #[command(flatten)]
        encoder: EncoderArgs,
        #[command(flatten)]
        code: CodeArgs,
    },
    /// Build the frozen encoder for a key.
    BuildEncoder {
        #[arg(long)]
        key: PathBuf,
        #[command(flatten)]
        encoder: EncoderArgs,
        #[arg(long, default_value = "encoder.bin")]
        out: PathBuf,
    },
    /// Encode every corpus line into a ciphertext line.
    Encode {
        #[arg(long)]
        encoder: PathBuf,
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, default_value = "ciphertexts.txt")]
        out: PathBuf,
    },
    /// Build the fingerprint table (ciphertext to rendered codeword).
    Inject {
        #[arg(long)]
        encoder: PathBuf,
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        code: CodeArgs,
        #[arg(long, default_value = "table.tsv")]
        out: PathBuf,
    },
    /// Query a suspect model with challenges and judge ownership.
    Verify {
        #[arg(long)]
        encoder: PathBuf,
        /// `table:PATH[@KIND:STRENGTH]`, `base[:SEED]` or `remote:URL`.
        #[arg(long)]
        channel: String,
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Draw fresh challenges for this owner from the registry instead of the corpus.
        #[arg(long, requires = "registry_log")]
        owner: Option<String>,
        #[arg(long)]
        registry_log: Option<PathBuf>,
        #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
        n_challenges: u64,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        /// Score the raw systematic read without RS decoding.
        #[arg(long)]
        no_rs: bool,
        /// Replace each prompt with random hex of the same length.
        #[arg(long)]
        random_prompts: bool,
        /// Seconds before a remote query fails.
        #[arg(long, default_value_t = 30)]
        timeout: u64,
        #[command(flatten)]
        code: CodeArgs,
    },
    /// FSR of each scheme across attack kinds and strengths.
    AttackBench {
        #[command(flatten)]
        bench: BenchArgs,
        /// Comma-separated attack kinds, or `all`.
        #[arg(long, default_value = "all")]
        kinds: String,
        #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.2,0.4")]
        strengths: Vec<f64>,
    },
    /// Input and key avalanche statistics against their bands.
    Avalanche {
        /// Encoder whose input avalanche is measured; random keys when absent.
        #[arg(long)]
        encoder: Option<PathBuf>,
        #[command(flatten)]
        config: EncoderArgs,
        #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(100..))]
        trials: u64,
        /// Key pairs for the weight-difference statistic.
        #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
        pairs: u64,
    },
    /// FSR on remaining challenges as fingerprint pairs are unlearned.
    UnlearnBench {
        #[command(flatten)]
        bench: BenchArgs,
        #[arg(long, default_value_t = 10)]
        max_unlearned: usize,
    },
    /// Run the registration authority over HTTP.
    ServeRegistry {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        #[command(flatten)]
        registry: RegistryArgs,
    },
    /// Serve a simulated suspect model on POST /respond.
    ServeOracle {
        #[arg(long, default_value = "127.0.0.1:8081")]
        bind: String,
        /// `table:PATH[@KIND:STRENGTH]` or `base[:SEED]`.
        #[arg(long)]
        channel: String,
    },
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// One plaintext per line; the bundled headline corpus when absent.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RegistryArgs {
    #[arg(long, default_value = "registry.jsonl")]
    pub registry_log: PathBuf,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long, default_value = "headlines")]
    pub dataset_id: String,
}

#[derive(Debug, Args)]
pub struct EncoderArgs {
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..=64))]
    pub layers: u64,
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u64).range(2..=1024))]
    pub dim: u64,
    #[arg(long, value_enum, default_value_t = ArchArg::Linear)]
    pub arch: ArchArg,
    #[arg(long, value_enum, default_value_t = ScalingArg::FanIn)]
    pub scaling: ScalingArg,
    #[arg(long, default_value_t = 0.9)]
    pub weight_bound: f64,
}

impl EncoderArgs {
    pub fn config(&self) -> EncoderConfig {
        EncoderConfig {
            num_layers: self.layers as usize,
            dim: self.dim as usize,
            architecture: match self.arch {
                ArchArg::Linear => Architecture::LinearResidual,
                ArchArg::Conv => Architecture::ConvResidual,
                ArchArg::Attention => Architecture::AttentionResidual,
            },
            weight_bound: self.weight_bound,
            scaling: match self.scaling {
                ScalingArg::FanIn => WeightScaling::FanIn,
                ScalingArg::DiagonallyDominant => WeightScaling::DiagonallyDominant,
            },
            ..EncoderConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ArchArg {
    Linear,
    Conv,
    Attention,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScalingArg {
    FanIn,
    DiagonallyDominant,
}

#[derive(Debug, Args)]
pub struct CodeArgs {
    /// Codeword length n.
    #[arg(long = "rs-n", default_value_t = 63)]
    pub n: usize,
    /// Message length k.
    #[arg(long = "rs-k", default_value_t = 39)]
    pub k: usize,
}

impl CodeArgs {
    pub fn params(&self) -> keyprint_core::Result<RsParams> {
        RsParams::new(self.n, self.k)
    }
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Owner key file; derived from --seed when absent.
    #[arg(long)]
    pub key: Option<PathBuf>,
    #[command(flatten)]
    pub encoder: EncoderArgs,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub code: CodeArgs,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub n_challenges: u64,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    /// Run the challenge loops on one thread.
    #[arg(long)]
    pub sequential: bool,
}
