// Licensed under the Apache License, Version 2.0
// http://www.apache.org/licenses/LICENSE-2.0

//! Command-line front end: bounds, parameter planning, experiments, attacks
//! and games.

pub mod commands;
pub mod emit;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use emit::Format;

/// Environment variable naming the directory relative `--out` paths are
/// resolved against.
pub const OUT_DIR_ENV: &str = "AMQ_OUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_THRESHOLD: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "amq", version, about = "Bounds, planning and games for keyed Bloom and Cuckoo filters")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// False-positive bound for n honest insertions.
    FpBound(FpBoundArgs),
    /// Adversarial correctness bound.
    AdvBound(AdvBoundArgs),
    /// Closed-form privacy bound from the min-entropy of the hidden set.
    PrivacyBound(PrivacyBoundArgs),
    /// Storage versus false-positive sweep for adversarial and honest use.
    Plan(PlanArgs),
    #[command(subcommand)]
    Experiment(Experiment),
    #[command(subcommand)]
    Attack(Attack),
    #[command(subcommand)]
    Game(Game),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    Bloom,
    Cuckoo,
    PrfWrappedCuckoo,
}

#[derive(Args, Debug, Clone)]
pub struct PpArgs {
    #[arg(long, value_enum, default_value = "bloom")]
    pub family: FamilyArg,
    /// Bloom: number of bits.
    #[arg(long)]
    pub m: Option<u64>,
    /// Bloom: number of indices.
    #[arg(long)]
    pub k: Option<usize>,
    /// Cuckoo: slots per bucket.
    #[arg(long)]
    pub s: Option<u32>,
    /// Cuckoo: index bits (2^lambda-i buckets).
    #[arg(long = "lambda-i")]
    pub lambda_i: Option<u32>,
    /// Cuckoo: tag bits.
    #[arg(long = "lambda-t")]
    pub lambda_t: Option<u32>,
    /// Cuckoo: maximum evictions per insertion.
    #[arg(long, default_value_t = 500)]
    pub num: u32,
    /// PRF-wrapped Cuckoo: output bits of the wrapping PRF.
    #[arg(long = "range-bits", default_value_t = 256)]
    pub range_bits: u32,
}

#[derive(Args, Debug)]
pub struct FpBoundArgs {
    #[command(flatten)]
    pub pp: PpArgs,
    #[arg(long, default_value_t = 0)]
    pub n: u64,
}

#[derive(Args, Debug)]
pub struct AdvBoundArgs {
    #[command(flatten)]
    pub pp: PpArgs,
    #[arg(long, default_value_t = 0)]
    pub n: u64,
    #[arg(long = "q-u", default_value_t = 0)]
    pub q_u: u64,
    #[arg(long = "q-t", default_value_t = 0)]
    pub q_t: u64,
    #[arg(long = "eps-prf-log2", default_value_t = -256.0, allow_negative_numbers = true)]
    pub eps_prf_log2: f64,
    /// No `Up` queries after the initial representation.
    #[arg(long)]
    pub immutable: bool,
}

#[derive(Args, Debug)]
pub struct PrivacyBoundArgs {
    #[arg(long = "q-u", default_value_t = 0)]
    pub q_u: u64,
    #[arg(long = "q-t", default_value_t = 0)]
    pub q_t: u64,
    /// Min-entropy of the hidden set distribution, in bits.
    #[arg(long = "min-entropy")]
    pub min_entropy: f64,
    #[arg(long = "eps-prf-log2", default_value_t = -256.0, allow_negative_numbers = true)]
    pub eps_prf_log2: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PlanFamily {
    Bloom,
    /// The PRF-wrapped insertion-only Cuckoo filter.
    Cuckoo,
    All,
}

#[derive(Args, Debug)]
pub struct OutArgs {
    /// Output file; relative paths resolve against $AMQ_OUT_DIR when set.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Args, Debug)]
pub struct PlanArgs {
    #[arg(long, value_enum, default_value = "all")]
    pub family: PlanFamily,
    #[arg(long = "log-n")]
    pub log_n: u32,
    #[arg(long = "log-q")]
    pub log_q: u32,
    #[arg(long = "eps-prf-log2", default_value_t = -256.0, allow_negative_numbers = true)]
    pub eps_prf_log2: f64,
    /// Target false-positive probability, log2.
    #[arg(long = "target-log2", default_value_t = -10.0, allow_negative_numbers = true)]
    pub target_log2: f64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Subcommand, Debug)]
pub enum Experiment {
    /// Occupancy at the first failed insertion, averaged over trials.
    LoadFactor(LoadFactorArgs),
    /// Honest Monte-Carlo false-positive rate against the bound.
    Fp(FpExperimentArgs),
    /// Statistical distance between real and simulated revealed states.
    NaiCheck(NaiCheckArgs),
}

#[derive(Args, Debug)]
pub struct LoadFactorArgs {
    #[arg(long, value_enum, default_value = "prf-wrapped-cuckoo")]
    pub family: FamilyArg,
    #[arg(long, default_value_t = 4)]
    pub s: u32,
    #[arg(long = "lambda-i", default_value_t = 15)]
    pub lambda_i: u32,
    #[arg(long = "lambda-t", default_value_t = 8)]
    pub lambda_t: u32,
    #[arg(long, default_value_t = 500)]
    pub num: u32,
    #[arg(long, default_value_t = 16)]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Exit with status 3 if the mean occupancy is below this.
    #[arg(long = "min-load", default_value_t = 0.95)]
    pub min_load: f64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug)]
pub struct FpExperimentArgs {
    #[command(flatten)]
    pub pp: PpArgs,
    #[arg(long, default_value_t = 0)]
    pub n: u64,
    #[arg(long, default_value_t = 100_000)]
    pub probes: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct NaiCheckArgs {
    #[command(flatten)]
    pub pp: PpArgs,
    #[arg(long, default_value_t = 3)]
    pub n: u64,
    #[arg(long, default_value_t = 10_000)]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Exit with status 3 if the distance exceeds this.
    #[arg(long = "max-sd", default_value_t = 0.02)]
    pub max_sd: f64,
}

#[derive(Subcommand, Debug)]
pub enum Attack {
    /// Greedy pollution of a Bloom filter.
    Pollution(PollutionArgs),
    /// Make a target set of elements read as false positives.
    Tsc(TscArgs),
    /// Permutation-invariance distinguisher for the Cuckoo filter.
    CuckooPi(CuckooPiArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TargetArg {
    Public,
    Keyed,
    Both,
}

#[derive(Args, Debug)]
pub struct PollutionArgs {
    #[arg(long, default_value_t = 4096)]
    pub m: u64,
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub n: u64,
    #[arg(long = "q-u", default_value_t = 256)]
    pub q_u: u64,
    #[arg(long, default_value_t = 4096)]
    pub candidates: usize,
    #[arg(long, default_value_t = 100_000)]
    pub probes: u64,
    #[arg(long, value_enum, default_value = "both")]
    pub target: TargetArg,
    #[arg(long = "eps-prf-log2", default_value_t = -256.0, allow_negative_numbers = true)]
    pub eps_prf_log2: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct TscArgs {
    #[arg(long, default_value_t = 4096)]
    pub m: u64,
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub n: u64,
    #[arg(long = "q-u", default_value_t = 64)]
    pub q_u: u64,
    /// Size of the target set.
    #[arg(long, default_value_t = 4)]
    pub targets: usize,
    #[arg(long, default_value_t = 1024)]
    pub candidates: usize,
    #[arg(long, default_value_t = 100)]
    pub trials: u64,
    #[arg(long, value_enum, default_value = "both")]
    pub target: TargetArg,
    #[arg(long = "eps-prf-log2", default_value_t = -256.0, allow_negative_numbers = true)]
    pub eps_prf_log2: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct CuckooPiArgs {
    #[arg(long, value_enum, default_value = "cuckoo")]
    pub family: FamilyArg,
    #[arg(long, default_value_t = 1)]
    pub s: u32,
    #[arg(long = "lambda-i", default_value_t = 8)]
    pub lambda_i: u32,
    #[arg(long = "lambda-t", default_value_t = 8)]
    pub lambda_t: u32,
    #[arg(long, default_value_t = 500)]
    pub num: u32,
    #[arg(long = "q-u", default_value_t = 2000)]
    pub q_u: u64,
    #[arg(long = "q-v", default_value_t = 2000)]
    pub q_v: u64,
    #[arg(long, default_value_t = 100)]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Exit with status 3 if the advantage is below this.
    #[arg(long = "min-advantage")]
    pub min_advantage: Option<f64>,
}

#[derive(Subcommand, Debug)]
pub enum Game {
    /// Real-or-ideal correctness game with a scripted adversary.
    Roi(RoiArgs),
    /// Permutation-invariance game.
    Pi(PiArgs),
    /// Elem-Rep or Rep privacy game in the snapshot setting.
    ElemRep(ElemRepArgs),
}

#[derive(Args, Debug)]
pub struct RoiArgs {
    #[command(flatten)]
    pub pp: PpArgs,
    #[arg(long, default_value_t = 16)]
    pub n: u64,
    #[arg(long = "q-u", default_value_t = 16)]
    pub q_u: u64,
    #[arg(long = "q-t", default_value_t = 16)]
    pub q_t: u64,
    #[arg(long, default_value_t = 1000)]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write JSON-lines transcripts of the first trial in each world.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PiArgs {
    #[command(flatten)]
    pub pp: PpArgs,
    #[arg(long, default_value_t = 16)]
    pub n: u64,
    #[arg(long = "q-u", default_value_t = 2000)]
    pub q_u: u64,
    #[arg(long = "q-v", default_value_t = 2000)]
    pub q_v: u64,
    #[arg(long, default_value_t = 1000)]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PrivacyVariant {
    ElemRep,
    Rep,
}

#[derive(Args, Debug)]
pub struct ElemRepArgs {
    #[command(flatten)]
    pub pp: PpArgs,
    /// Size of the hidden set.
    #[arg(long, default_value_t = 16)]
    pub n: u64,
    #[arg(long = "q-t", default_value_t = 0)]
    pub q_t: u64,
    #[arg(long, value_enum, default_value = "elem-rep")]
    pub variant: PrivacyVariant,
    #[arg(long, default_value_t = 1000)]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Raised for bad user input; maps to exit status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// What a command reports back to [`dispatch`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Ok,
    /// A requested threshold was not met.
    ThresholdMissed,
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit status.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match commands::run(cli.command, &mut std::io::stdout().lock()) {
        Ok(Verdict::Ok) => EXIT_OK,
        Ok(Verdict::ThresholdMissed) => EXIT_THRESHOLD,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() || e.downcast_ref::<amq_core::Error>().is_some() {
                EXIT_USAGE
            } else {
                EXIT_FAILURE
            }
        }
    }
}
