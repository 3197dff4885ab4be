//! Command-line front end for the `tpds` library.
//!
//! Exit codes: 0 for a positive verdict or success, 1 for a negative verdict
//! (not informative, not stable), 2 for malformed input or solver errors.

pub mod bench;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use tpds::informativity::{self, unfolded, ExperimentData};
use tpds::sim::{self, Excitation, InputLaw};
use tpds::{spectral, tqr, Tensor3};

use bench::{BenchConfig, BenchTask, Method};

#[derive(Parser, Debug)]
#[command(name = "tpds", version, about = "Data-driven control of T-product dynamical systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Decide whether a data set is informative.
    #[command(subcommand)]
    Check(CheckTask),
    /// Synthesize a feedback gain from data.
    #[command(subcommand)]
    Synth(SynthTask),
    /// Check that a gain stabilizes a system.
    Verify(VerifyArgs),
    /// Identify the system behind identifiable data.
    Identify(DataArgs),
    /// Simulate a system in open or closed loop.
    Simulate(SimulateArgs),
    /// Generate experiment data from a system.
    Generate(GenerateArgs),
    /// Solve the model-based quadratic regulation problem.
    SolveTqr(SolveTqrArgs),
    /// Time the decoupled and unfolded methods against each other.
    Bench(BenchArgs),
}

#[derive(Subcommand, Debug)]
pub enum CheckTask {
    Sysid(CheckArgs),
    Stabilization(CheckArgs),
    Tqr(CheckArgs),
}

#[derive(Subcommand, Debug)]
pub enum SynthTask {
    Stabilization(SynthArgs),
    Tqr(SynthArgs),
}

#[derive(Args, Debug)]
pub struct DataArgs {
    /// Experiment data, `{v, y, z, h}` of tensor-JSON.
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Args, Debug)]
pub struct WeightArgs {
    /// State weight (n×n×r); identity when omitted.
    #[arg(long)]
    pub weights_q: Option<PathBuf>,
    /// Input weight (m×m×r); identity when omitted.
    #[arg(long)]
    pub weights_r: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub weights: WeightArgs,
    #[arg(long, value_enum, default_value_t = Method::Decoupled)]
    pub method: Method,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub weights: WeightArgs,
    /// Where to write the gain tensor.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Law {
    /// Closed loop `A − B⋆K` (`u = −K⋆x`).
    Minus,
    /// Closed loop `A + B⋆K` (`u = K⋆x`).
    Plus,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long)]
    pub gain: PathBuf,
    /// System `{a, b}`; mutually exclusive with `--data`.
    #[arg(long, conflicts_with = "data", required_unless_present = "data")]
    pub system: Option<PathBuf>,
    /// Data whose least-squares system is used.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Law::Minus)]
    pub law: Law,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub system: PathBuf,
    /// Feedback gain; random inputs are applied when omitted.
    #[arg(long)]
    pub gain: Option<PathBuf>,
    /// Initial state; drawn from `--seed` when omitted.
    #[arg(long)]
    pub x0: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
    #[arg(long, default_value_t = 1)]
    pub h: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = ExcitationArg::Uniform)]
    pub excitation: ExcitationArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long)]
    pub system: PathBuf,
    #[arg(long)]
    pub l: usize,
    #[arg(long, default_value_t = 1)]
    pub h: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = ExcitationArg::Uniform)]
    pub excitation: ExcitationArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SolveTqrArgs {
    #[arg(long)]
    pub system: PathBuf,
    #[command(flatten)]
    pub weights: WeightArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ExcitationArg {
    Uniform,
    Integers,
}

impl From<ExcitationArg> for Excitation {
    fn from(e: ExcitationArg) -> Self {
        match e {
            ExcitationArg::Uniform => Excitation::Uniform,
            ExcitationArg::Integers => Excitation::Integers,
        }
    }
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long, value_enum)]
    pub task: BenchTask,
    #[arg(long, default_value_t = 1)]
    pub p_min: u32,
    #[arg(long, default_value_t = 6)]
    pub p_max: u32,
    #[arg(long, default_value_t = 5)]
    pub trials: usize,
    /// CSV destination; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Allowance per method and `p`, over all trials.
    #[arg(long, default_value_t = 120)]
    pub timeout_secs: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Bytes; 0 disables the check.
    #[arg(long, default_value_t = 1 << 30)]
    pub memory_budget: u64,
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    #[arg(long, default_value_t = 2)]
    pub m: usize,
    #[arg(long, default_value_t = 4)]
    pub l: usize,
    #[arg(long, default_value_t = 1)]
    pub h: usize,
}

/// A system file: `{"a": tensor, "b": tensor}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SystemFile {
    pub a: Tensor3,
    pub b: Tensor3,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: malformed JSON: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Core(#[from] tpds::Error),
    #[error(transparent)]
    Bench(#[from] bench::BenchError),
    #[error("{0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(tpds::Error::NotInformative(_)) => 1,
            _ => 2,
        }
    }
}

/// Exit status of a command that ran to completion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Positive,
    Negative,
}

impl Verdict {
    fn from_bool(b: bool) -> Self {
        if b {
            Verdict::Positive
        } else {
            Verdict::Negative
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Positive => 0,
            Verdict::Negative => 1,
        }
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_owned(),
        source,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Output(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

fn print_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Output(e.to_string()))?;
    writeln!(out, "{text}").map_err(|e| CliError::Output(e.to_string()))
}

fn emit<T: Serialize>(out: &mut dyn Write, dest: Option<&Path>, value: &T) -> Result<(), CliError> {
    match dest {
        Some(p) => write_json(p, value),
        None => print_json(out, value),
    }
}

fn load_weights(w: &WeightArgs, n: usize, m: usize, r: usize) -> Result<(Tensor3, Tensor3), CliError> {
    let q = match &w.weights_q {
        Some(p) => read_json(p)?,
        None => Tensor3::identity(n, r),
    };
    let rr = match &w.weights_r {
        Some(p) => read_json(p)?,
        None => Tensor3::identity(m, r),
    };
    Ok((q, rr))
}

#[derive(Serialize)]
struct ClosedLoopSummary {
    law: &'static str,
    max_modulus: f64,
    stable: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    identified_residual: Option<f64>,
}

fn closed_loop(a: &Tensor3, b: &Tensor3, k: &Tensor3, law: Law) -> Result<Tensor3, CliError> {
    let bk = b.tprod(k)?;
    Ok(match law {
        Law::Minus => a - &bk,
        Law::Plus => a + &bk,
    })
}

fn summarize(a: &Tensor3, b: &Tensor3, k: &Tensor3, law: Law, residual: Option<f64>) -> Result<ClosedLoopSummary, CliError> {
    let cl = closed_loop(a, b, k, law)?;
    let max_modulus = spectral::spectral_radius(&cl)?;
    Ok(ClosedLoopSummary {
        law: match law {
            Law::Minus => "minus",
            Law::Plus => "plus",
        },
        max_modulus,
        stable: spectral::is_stable(&cl)?,
        identified_residual: residual,
    })
}

/// Runs one command, writing reports to `out`.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<Verdict, CliError> {
    match &cli.command {
        Command::Check(task) => check(task, out),
        Command::Synth(task) => synth(task, out),
        Command::Verify(args) => {
            let k: Tensor3 = read_json(&args.gain)?;
            let (a, b, residual) = match (&args.system, &args.data) {
                (Some(p), _) => {
                    let s: SystemFile = read_json(p)?;
                    (s.a, s.b, None)
                }
                (None, Some(p)) => {
                    let d: ExperimentData = read_json(p)?;
                    let (a, b, res) = informativity::identify_least_squares(&d)?;
                    (a, b, Some(res))
                }
                (None, None) => unreachable!("clap requires one of --system and --data"),
            };
            let s = summarize(&a, &b, &k, args.law, residual)?;
            print_json(out, &s)?;
            Ok(Verdict::from_bool(s.stable))
        }
        Command::Identify(args) => {
            let d: ExperimentData = read_json(&args.data)?;
            let (a, b) = informativity::identify(&d)?;
            let residual = d.residual(&a, &b)?;
            #[derive(Serialize)]
            struct Identified {
                a: Tensor3,
                b: Tensor3,
                residual: f64,
            }
            print_json(out, &Identified { a, b, residual })?;
            Ok(Verdict::Positive)
        }
        Command::Simulate(args) => simulate(args, out),
        Command::Generate(args) => {
            let s: SystemFile = read_json(&args.system)?;
            let d = sim::generate_experiment(&s.a, &s.b, args.l, args.h, args.seed, args.excitation.into())?;
            emit(out, args.out.as_deref(), &d)?;
            Ok(Verdict::Positive)
        }
        Command::SolveTqr(args) => {
            let s: SystemFile = read_json(&args.system)?;
            let (q, rr) = load_weights(&args.weights, s.a.n(), s.b.m(), s.a.r())?;
            let sol = tqr::solve_tqr(&s.a, &s.b, &q, &rr)?;
            print_json(out, &sol)?;
            Ok(Verdict::Positive)
        }
        Command::Bench(args) => {
            let cfg = BenchConfig {
                task: args.task,
                p_min: args.p_min,
                p_max: args.p_max,
                trials: args.trials,
                timeout: Duration::from_secs(args.timeout_secs),
                seed: args.seed,
                memory_budget: (args.memory_budget > 0).then_some(args.memory_budget),
                n: args.n,
                m: args.m,
                l: args.l,
                h: args.h,
            };
            let records = bench::run_bench(&cfg, |r| {
                eprintln!(
                    "{:?} p={} {:?} mean={:?}",
                    r.method, r.p, r.status, r.mean_seconds
                )
            })?;
            match &args.out {
                Some(p) => {
                    let f = fs::File::create(p).map_err(|source| CliError::Io {
                        path: p.clone(),
                        source,
                    })?;
                    bench::write_csv(&records, f)
                }
                None => bench::write_csv(&records, out),
            }
            .map_err(|e| CliError::Output(e.to_string()))?;
            Ok(Verdict::Positive)
        }
    }
}

fn check(task: &CheckTask, out: &mut dyn Write) -> Result<Verdict, CliError> {
    let (args, kind) = match task {
        CheckTask::Sysid(a) => (a, BenchTask::Sysid),
        CheckTask::Stabilization(a) => (a, BenchTask::Stabilization),
        CheckTask::Tqr(a) => (a, BenchTask::Tqr),
    };
    let d: ExperimentData = read_json(&args.data.data)?;
    let verdict = match (kind, args.method) {
        (BenchTask::Sysid, Method::Decoupled) => {
            let rep = informativity::check_sysid(&d);
            print_json(out, &rep)?;
            rep.verdict
        }
        (BenchTask::Sysid, Method::Unfolded) => {
            let rep = unfolded::check_sysid_unfolded(&d);
            print_json(out, &rep)?;
            rep.verdict
        }
        (BenchTask::Stabilization, Method::Decoupled) => {
            let rep = informativity::check_stabilization(&d)?;
            print_json(out, &rep)?;
            rep.verdict
        }
        (BenchTask::Stabilization, Method::Unfolded) => {
            let rep = unfolded::check_stabilization_unfolded(&d, &Default::default())?;
            print_json(out, &rep)?;
            rep.verdict
        }
        (BenchTask::Tqr, method) => {
            let (q, rr) = load_weights(&args.weights, d.n(), d.m(), d.r())?;
            if method == Method::Decoupled {
                let rep = informativity::check_tqr(&d, &q, &rr)?;
                print_json(out, &rep)?;
                rep.verdict
            } else {
                let rep = unfolded::check_tqr_unfolded(&d, &q, &rr, &Default::default())?;
                print_json(out, &rep)?;
                rep.verdict
            }
        }
    };
    Ok(Verdict::from_bool(verdict))
}

fn synth(task: &SynthTask, out: &mut dyn Write) -> Result<Verdict, CliError> {
    let args = match task {
        SynthTask::Stabilization(a) | SynthTask::Tqr(a) => a,
    };
    let d: ExperimentData = read_json(&args.data.data)?;
    let k = match task {
        SynthTask::Stabilization(_) => {
            let rep = informativity::check_stabilization(&d)?;
            if !rep.verdict {
                print_json(out, &rep)?;
                return Ok(Verdict::Negative);
            }
            informativity::synth_stabilizing_gain(&d, &rep)?
        }
        SynthTask::Tqr(_) => {
            let (q, rr) = load_weights(&args.weights, d.n(), d.m(), d.r())?;
            informativity::synth_tqr_gain(&d, &q, &rr)?
        }
    };
    write_json(&args.out, &k)?;
    let (a, b, residual) = informativity::identify_least_squares(&d)?;
    print_json(out, &summarize(&a, &b, &k, Law::Minus, Some(residual))?)?;
    Ok(Verdict::Positive)
}

fn simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<Verdict, CliError> {
    let s: SystemFile = read_json(&args.system)?;
    let (n, m, r) = (s.a.n(), s.b.m(), s.a.r());
    // x0 and open-loop inputs both come from one generated experiment.
    let random = sim::generate_experiment(
        &Tensor3::zeros(n, n, r),
        &Tensor3::zeros(n, m, r),
        args.steps.max(1),
        args.h,
        args.seed,
        args.excitation.into(),
    )?;
    let x0 = match &args.x0 {
        Some(p) => read_json(p)?,
        None => random.y().column_range(0, args.h),
    };
    let law = match &args.gain {
        Some(p) => InputLaw::Feedback(read_json(p)?),
        None => InputLaw::Open(
            (0..args.steps)
                .map(|t| random.v().column_range(t * args.h, args.h))
                .collect(),
        ),
    };
    let traj = sim::simulate(&s.a, &s.b, &x0, &law, args.steps)?;
    #[derive(Serialize)]
    struct SimOutput<'a> {
        state_norms: Vec<f64>,
        diverged: bool,
        states: &'a [Tensor3],
        inputs: &'a [Tensor3],
    }
    let report = SimOutput {
        state_norms: traj.states.iter().map(Tensor3::frobenius_norm).collect(),
        diverged: traj.diverged,
        states: &traj.states,
        inputs: &traj.inputs,
    };
    emit(out, args.out.as_deref(), &report)?;
    Ok(Verdict::from_bool(!traj.diverged))
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = write!(err, "{e}");
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(v) => v.exit_code(),
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
