//! Timing harness comparing the Fourier-decoupled tests against the dense
//! unfolded ones on identical generated data.

use std::io::Write;
use std::time::{Duration, Instant};

use clap::ValueEnum;
use serde::Serialize;
use sha2::{Digest, Sha256};

use tpds::informativity::{self, unfolded, ExperimentData};
use tpds::lmi::LmiOptions;
use tpds::sim::{generate_experiment, random_system, Excitation};
use tpds::Tensor3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Decoupled,
    Unfolded,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BenchTask {
    Sysid,
    Stabilization,
    Tqr,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRecord {
    pub method: Method,
    pub task: BenchTask,
    pub p: u32,
    pub n: usize,
    pub m: usize,
    pub l: usize,
    pub h: usize,
    pub trials: usize,
    pub mean_seconds: Option<f64>,
    pub std_seconds: Option<f64>,
    pub status: Status,
}

impl BenchRecord {
    pub fn r(&self) -> usize {
        1 << self.p
    }
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub task: BenchTask,
    pub p_min: u32,
    pub p_max: u32,
    pub trials: usize,
    /// Wall-clock allowance for all trials of one method at one `p`.
    pub timeout: Duration,
    pub seed: u64,
    pub memory_budget: Option<u64>,
    pub n: usize,
    pub m: usize,
    pub l: usize,
    pub h: usize,
}

impl BenchConfig {
    pub fn new(task: BenchTask, p_min: u32, p_max: u32, trials: usize) -> Self {
        BenchConfig {
            task,
            p_min,
            p_max,
            trials,
            timeout: Duration::from_secs(120),
            seed: 0,
            memory_budget: Some(1 << 30),
            n: 2,
            m: 2,
            l: 4,
            h: 1,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("invalid bench configuration: {0}")]
    Config(String),
    #[error("could not generate data for p = {p}, trial {trial}: {source}")]
    Data {
        p: u32,
        trial: usize,
        source: tpds::Error,
    },
    #[error("methods received different data for p = {p}, trial {trial}")]
    Unfair { p: u32, trial: usize },
}

fn trial_seed(base: u64, p: u32, trial: usize) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((p as u64) << 32) ^ trial as u64
}

fn trial_data(cfg: &BenchConfig, p: u32, trial: usize) -> Result<ExperimentData, BenchError> {
    let seed = trial_seed(cfg.seed, p, trial);
    let (a, b) = random_system(cfg.n, cfg.m, 1 << p, seed);
    generate_experiment(&a, &b, cfg.l, cfg.h, seed.wrapping_add(1), Excitation::Uniform)
        .map_err(|source| BenchError::Data { p, trial, source })
}

pub fn digest(d: &ExperimentData) -> [u8; 32] {
    let bytes = serde_json::to_vec(d).expect("data serialize");
    Sha256::digest(&bytes).into()
}

fn kernel(task: BenchTask, method: Method, d: &ExperimentData, opts: &LmiOptions) -> tpds::Result<()> {
    let r = d.r();
    let q = Tensor3::identity(d.n(), r);
    let rr = Tensor3::identity(d.m(), r);
    match (task, method) {
        (BenchTask::Sysid, Method::Decoupled) => {
            informativity::check_sysid(d);
        }
        (BenchTask::Sysid, Method::Unfolded) => {
            unfolded::check_sysid_unfolded(d);
        }
        (BenchTask::Stabilization, Method::Decoupled) => {
            informativity::check_stabilization_with(d, opts)?;
        }
        (BenchTask::Stabilization, Method::Unfolded) => {
            unfolded::check_stabilization_unfolded(d, opts)?;
        }
        (BenchTask::Tqr, Method::Decoupled) => {
            informativity::synth_tqr_gain_with(d, &q, &rr, opts)?;
        }
        (BenchTask::Tqr, Method::Unfolded) => {
            unfolded::synth_tqr_gain_unfolded(d, &q, &rr, opts)?;
        }
    }
    Ok(())
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs every `(p, method)` cell. After a method fails at some `p` its larger
/// sizes are recorded as failed without being attempted. `log` receives one
/// line per finished cell.
pub fn run_bench(cfg: &BenchConfig, mut log: impl FnMut(&BenchRecord)) -> Result<Vec<BenchRecord>, BenchError> {
    if cfg.trials == 0 || cfg.p_min > cfg.p_max || cfg.p_max > 20 {
        return Err(BenchError::Config(format!(
            "need trials ≥ 1 and p_min ≤ p_max ≤ 20, got trials {} and p {}..{}",
            cfg.trials, cfg.p_min, cfg.p_max
        )));
    }
    if cfg.l * cfg.h == 0 {
        return Err(BenchError::Config("l and h must be positive".into()));
    }
    let methods = [Method::Decoupled, Method::Unfolded];
    let mut given_up = [false; 2];
    let mut out = Vec::new();
    for p in cfg.p_min..=cfg.p_max {
        let digests = (0..cfg.trials)
            .map(|t| trial_data(cfg, p, t).map(|d| digest(&d)))
            .collect::<Result<Vec<_>, _>>()?;
        for (mi, &method) in methods.iter().enumerate() {
            let mut rec = BenchRecord {
                method,
                task: cfg.task,
                p,
                n: cfg.n,
                m: cfg.m,
                l: cfg.l,
                h: cfg.h,
                trials: cfg.trials,
                mean_seconds: None,
                std_seconds: None,
                status: Status::Failed,
            };
            if !given_up[mi] {
                let deadline = Instant::now() + cfg.timeout;
                let opts = LmiOptions {
                    deadline: Some(deadline),
                    memory_budget: cfg.memory_budget,
                    ..LmiOptions::default()
                };
                let mut times = Vec::with_capacity(cfg.trials);
                for (t, want) in digests.iter().enumerate() {
                    let d = trial_data(cfg, p, t)?;
                    if &digest(&d) != want {
                        return Err(BenchError::Unfair { p, trial: t });
                    }
                    let start = Instant::now();
                    let res = kernel(cfg.task, method, &d, &opts);
                    let elapsed = start.elapsed();
                    if res.is_err() || Instant::now() > deadline {
                        break;
                    }
                    times.push(elapsed.as_secs_f64());
                }
                if times.len() == cfg.trials {
                    let (mean, std) = mean_std(&times);
                    rec.mean_seconds = Some(mean);
                    rec.std_seconds = Some(std);
                    rec.status = Status::Ok;
                } else {
                    given_up[mi] = true;
                }
            }
            log(&rec);
            out.push(rec);
        }
    }
    Ok(out)
}

pub fn write_csv<W: Write>(records: &[BenchRecord], w: W) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for rec in records {
        wtr.serialize(rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Least-squares slope of `ln(mean_seconds)` against `ln r` over the
/// successful rows of one method; `None` with fewer than two points.
pub fn loglog_slope(records: &[BenchRecord], method: Method) -> Option<f64> {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.method == method && r.status == Status::Ok)
        .filter_map(|r| r.mean_seconds.map(|t| ((r.r() as f64).ln(), t.max(1e-9).ln())))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}
