//! `uaelab` command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 a verified
//! invariant failed.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "uaelab", version, about = "Unified architecture evaluation and residual-block gradient lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Base seed of every random draw.
    #[arg(long, default_value_t = uaelab::DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct CorpusArgs {
    /// Descriptor file or directory of `*.desc` files; the built-in golden corpus when omitted.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// UAE scores of every module under every form, with the ranking-invariance verdict.
    Uae(UaeArgs),
    /// Factor-subset ablation grid.
    Ablate(AblateArgs),
    /// Elasticities and Shapley contributions of the three factors.
    Sensitivity(SensitivityArgs),
    /// Randomised verification of the gradient theory.
    Verify(VerifyArgs),
    /// ε-phase experiment: CRB* cascades trained across residual counts.
    Epsilon(EpsilonArgs),
    /// Convergence comparison of block kinds over paired seeds.
    Train(TrainArgs),
    /// Spearman correlation between UAE variants and measured metrics.
    Correlate(CorrelateArgs),
}

#[derive(Debug, Args)]
pub struct UaeArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Comma-separated forms, e.g. `phi1,phi3`.
    #[arg(long, default_value = "phi1,phi2,phi3,phi4,phi5,phi6")]
    pub forms: String,
    /// Relative gap at or below which two scores count as tied.
    #[arg(long, default_value_t = uaelab::uae::DEFAULT_TIE_TOLERANCE)]
    pub tie_tolerance: f64,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long, default_value = "phi3")]
    pub forms: String,
    /// Factor subset to keep, e.g. `alpha` or `alpha+theta`; repeatable.
    /// All seven non-empty subsets when omitted.
    #[arg(long)]
    pub only: Vec<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RuleArg {
    Standard,
    MarginalMean,
}

#[derive(Debug, Args)]
pub struct SensitivityArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long, default_value = "phi3")]
    pub forms: String,
    #[arg(long, value_enum, default_value = "standard")]
    pub shapley_rule: RuleArg,
    /// Value assigned to the empty coalition.
    #[arg(long, default_value_t = 0.0)]
    pub v_empty: f64,
    /// Take the β elasticity with respect to `k + 1` instead of `k`.
    #[arg(long)]
    pub shift_k: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VerifyKind {
    Spectral,
    Jacobian,
    Bounds,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: Common,
    pub kind: VerifyKind,
    /// Trials (spectral: pairs, default 1000; jacobian: seeds per case, default 20; bounds: default 200).
    #[arg(long)]
    pub trials: Option<usize>,
    /// Matrix dimensions (spectral default 2..8, jacobian default 1..8).
    #[arg(long, value_delimiter = ',')]
    pub d: Vec<usize>,
    /// Layer budgets.
    #[arg(long, value_delimiter = ',', default_value = "8,12,16")]
    pub l: Vec<usize>,
    /// Residual counts (jacobian).
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    pub epsilon: Vec<usize>,
    /// Stage-map spectral norms (bounds).
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.05,0.2,0.5")]
    pub eta: Vec<f64>,
    /// Skip coefficients `c_1..c_{l/4-1}` (bounds, single `--l` only); all ones when omitted.
    #[arg(long, value_delimiter = ',')]
    pub coefficients: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct EpsilonArgs {
    #[command(flatten)]
    pub common: Common,
    /// Layer budgets; crossed with `--epsilon`. The nine reference pairs when both are omitted.
    #[arg(long, value_delimiter = ',')]
    pub l: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub epsilon: Vec<usize>,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    /// Number of seeds, counting up from `--seed`.
    #[arg(long, default_value_t = 3)]
    pub seeds: usize,
    #[arg(long, default_value_t = 0.0)]
    pub delta_safe: f64,
    /// Blocks per cascade.
    #[arg(long, default_value_t = 5)]
    pub cascade: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Block kinds: rb, crb, dcrb, crb_star.
    #[arg(long, value_delimiter = ',', default_value = "rb,crb,dcrb")]
    pub blocks: Vec<String>,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    /// Number of paired seeds, counting up from `--seed`.
    #[arg(long, default_value_t = 5)]
    pub seeds: usize,
    #[arg(long, default_value_t = 5)]
    pub cascade: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long, default_value = "phi1,phi2,phi3,phi4,phi5,phi6")]
    pub forms: String,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 5)]
    pub cascade: usize,
    /// Repetitions of the timed forward pass.
    #[arg(long, default_value_t = 15)]
    pub timing_reps: usize,
}

/// A configuration problem reported with the subcommand's usage line.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// A verified invariant did not hold.
#[derive(Debug)]
pub struct InvariantFailure(pub String);

impl std::fmt::Display for InvariantFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InvariantFailure {}

fn configure_threads() -> Result<(), UsageError> {
    let Ok(raw) = std::env::var("UAELAB_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| UsageError(format!("UAELAB_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| UsageError(format!("cannot size the thread pool: {e}")))
}

fn subcommand_name(c: &Command) -> &'static str {
    match c {
        Command::Uae(_) => "uae",
        Command::Ablate(_) => "ablate",
        Command::Sensitivity(_) => "sensitivity",
        Command::Verify(_) => "verify",
        Command::Epsilon(_) => "epsilon",
        Command::Train(_) => "train",
        Command::Correlate(_) => "correlate",
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    let name = subcommand_name(&cli.command);
    let result = match cli.command {
        Command::Uae(a) => commands::uae(a),
        Command::Ablate(a) => commands::ablate(a),
        Command::Sensitivity(a) => commands::sensitivity(a),
        Command::Verify(a) => commands::verify(a),
        Command::Epsilon(a) => commands::epsilon(a),
        Command::Train(a) => commands::train(a),
        Command::Correlate(a) => commands::correlate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<InvariantFailure>() => {
            eprintln!("invariant failed: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<UsageError>() {
                let mut cmd = Cli::command();
                cmd.build();
                if let Some(sub) = cmd.find_subcommand_mut(name) {
                    eprintln!("\n{}", sub.render_usage());
                }
            }
            ExitCode::from(1)
        }
    }
}
