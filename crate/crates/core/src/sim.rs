//! Simulation of `x(t+1) = A⋆x(t) + B⋆u(t)`, experiment generation and the
//! quadratic cost.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::informativity::ExperimentData;
use crate::tensor::Tensor3;

/// States whose Frobenius norm exceeds this are treated as diverged.
pub const DIVERGENCE_NORM: f64 = 1e12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    /// `x(0), …, x(l)`.
    pub states: Vec<Tensor3>,
    /// `u(0), …, u(l−1)`.
    pub inputs: Vec<Tensor3>,
    /// Set when the run was cut short by a non-finite or exploding state.
    pub diverged: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// How the input is chosen at each step.
#[derive(Clone, Debug)]
pub enum InputLaw {
    /// Prescribed inputs, one per step.
    Open(Vec<Tensor3>),
    /// `u(t) = −K⋆x(t)`.
    Feedback(Tensor3),
}

fn check_system(a: &Tensor3, b: &Tensor3, x0: &Tensor3) -> Result<()> {
    if a.n() != a.m() || b.n() != a.n() || x0.n() != a.n() || a.r() != b.r() || x0.r() != a.r() {
        return Err(Error::DimensionMismatch(format!(
            "A {:?}, B {:?}, x0 {:?}",
            a.dims(),
            b.dims(),
            x0.dims()
        )));
    }
    Ok(())
}

pub fn simulate(a: &Tensor3, b: &Tensor3, x0: &Tensor3, law: &InputLaw, steps: usize) -> Result<Trajectory> {
    check_system(a, b, x0)?;
    let h = x0.m();
    match law {
        InputLaw::Open(us) => {
            if us.len() < steps {
                return Err(Error::DimensionMismatch(format!(
                    "{} inputs supplied for {} steps",
                    us.len(),
                    steps
                )));
            }
            if let Some(u) = us.iter().find(|u| u.dims() != (b.m(), h, a.r())) {
                return Err(Error::DimensionMismatch(format!("input has dims {:?}", u.dims())));
            }
        }
        InputLaw::Feedback(k) => {
            if k.dims() != (b.m(), a.n(), a.r()) {
                return Err(Error::DimensionMismatch(format!("gain has dims {:?}", k.dims())));
            }
        }
    }
    let mut states = vec![x0.clone()];
    let mut inputs = Vec::with_capacity(steps);
    let mut diverged = false;
    for t in 0..steps {
        let x = &states[t];
        let u = match law {
            InputLaw::Open(us) => us[t].clone(),
            InputLaw::Feedback(k) => -&k.tprod(x)?,
        };
        let next = &a.tprod(x)? + &b.tprod(&u)?;
        inputs.push(u);
        let bad = !next.is_finite() || next.frobenius_norm() > DIVERGENCE_NORM;
        states.push(next);
        if bad {
            diverged = true;
            break;
        }
    }
    Ok(Trajectory {
        states,
        inputs,
        diverged,
    })
}

/// Random excitation used by [`generate_experiment`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Excitation {
    /// i.i.d. uniform on `[−1, 1]`.
    #[default]
    Uniform,
    /// i.i.d. uniform on the integers `{−2, …, 2}`.
    Integers,
}

fn random_tensor(rng: &mut ChaCha8Rng, n: usize, m: usize, r: usize, law: Excitation) -> Tensor3 {
    let data = (0..n * m * r)
        .map(|_| match law {
            Excitation::Uniform => rng.random_range(-1.0..=1.0),
            Excitation::Integers => rng.random_range(-2..=2) as f64,
        })
        .collect();
    Tensor3::new(n, m, r, data).expect("sizes are consistent")
}

/// A random pair `(A, B)` with entries uniform on `[−1, 1]`.
pub fn random_system(n: usize, m: usize, r: usize, seed: u64) -> (Tensor3, Tensor3) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random_tensor(&mut rng, n, n, r, Excitation::Uniform);
    let b = random_tensor(&mut rng, n, m, r, Excitation::Uniform);
    (a, b)
}

/// Stacks a trajectory into `(V, Y, Z)` with `Y = [x(0) … x(l−1)]` and
/// `Z = [x(1) … x(l)]`.
pub fn experiment_from_trajectory(traj: &Trajectory) -> Result<ExperimentData> {
    if traj.is_empty() || traj.diverged {
        return Err(Error::Precondition("trajectory is empty or diverged".into()));
    }
    let l = traj.len();
    let h = traj.states[0].m();
    let ys: Vec<&Tensor3> = traj.states[..l].iter().collect();
    let zs: Vec<&Tensor3> = traj.states[1..=l].iter().collect();
    let vs: Vec<&Tensor3> = traj.inputs.iter().collect();
    ExperimentData::new(Tensor3::hcat(&vs)?, Tensor3::hcat(&ys)?, Tensor3::hcat(&zs)?, h)
}

/// Runs `l` steps from a random `n×h×r` initial state with random inputs.
/// Deterministic in `seed`.
pub fn generate_experiment(
    a: &Tensor3,
    b: &Tensor3,
    l: usize,
    h: usize,
    seed: u64,
    law: Excitation,
) -> Result<ExperimentData> {
    if l == 0 || h == 0 {
        return Err(Error::Precondition("l and h must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, m, r) = (a.n(), b.m(), a.r());
    let x0 = random_tensor(&mut rng, n, h, r, law);
    let inputs: Vec<Tensor3> = (0..l).map(|_| random_tensor(&mut rng, m, h, r, law)).collect();
    let traj = simulate(a, b, &x0, &InputLaw::Open(inputs), l)?;
    if traj.diverged {
        return Err(Error::NumericalFailure("experiment diverged".into()));
    }
    experiment_from_trajectory(&traj)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CostBreakdown {
    pub state: f64,
    pub input: f64,
    pub total: f64,
    pub steps: usize,
    pub diverged: bool,
}

/// `trace(ψ(T))/r`, which is the trace of the first frontal slice.
fn scalarize(t: &Tensor3) -> f64 {
    t.slice(0).trace()
}

struct CostAccumulator<'a> {
    q: &'a Tensor3,
    rr: &'a Tensor3,
    state: f64,
    input: f64,
    growing: usize,
    last: f64,
    steps: usize,
}

impl<'a> CostAccumulator<'a> {
    fn new(q: &'a Tensor3, rr: &'a Tensor3) -> Self {
        CostAccumulator {
            q,
            rr,
            state: 0.0,
            input: 0.0,
            growing: 0,
            last: f64::INFINITY,
            steps: 0,
        }
    }

    /// Adds one stage; returns `true` once accumulation should stop.
    fn push(&mut self, x: &Tensor3, u: Option<&Tensor3>) -> Result<bool> {
        let sx = scalarize(&x.ttranspose().tprod(&self.q.tprod(x)?)?);
        let su = match u {
            Some(u) => scalarize(&u.ttranspose().tprod(&self.rr.tprod(u)?)?),
            None => 0.0,
        };
        let inc = sx + su;
        self.state += sx;
        self.input += su;
        self.steps += 1;
        self.growing = if inc > self.last { self.growing + 1 } else { 0 };
        self.last = inc;
        let total = self.state + self.input;
        Ok(total > 0.0 && inc.abs() < 1e-14 * total)
    }

    fn finish(&self, diverged: bool) -> CostBreakdown {
        CostBreakdown {
            state: self.state,
            input: self.input,
            total: self.state + self.input,
            steps: self.steps,
            diverged: diverged || self.growing >= 10,
        }
    }
}

fn check_weights(q: &Tensor3, rr: &Tensor3, n: usize, m: usize, r: usize) -> Result<()> {
    if q.dims() != (n, n, r) || rr.dims() != (m, m, r) {
        return Err(Error::DimensionMismatch(format!(
            "weights Q {:?}, R {:?} for n = {n}, m = {m}, r = {r}",
            q.dims(),
            rr.dims()
        )));
    }
    Ok(())
}

/// `Σ_t x(t)ᵀ⋆Q⋆x(t) + u(t)ᵀ⋆R⋆u(t)`, scalarized as `trace(ψ(·))/r`.
pub fn evaluate_cost(traj: &Trajectory, q: &Tensor3, rr: &Tensor3) -> Result<CostBreakdown> {
    let x0 = traj
        .states
        .first()
        .ok_or_else(|| Error::Precondition("empty trajectory".into()))?;
    let m = traj.inputs.first().map_or(rr.n(), |u| u.n());
    check_weights(q, rr, x0.n(), m, x0.r())?;
    let mut acc = CostAccumulator::new(q, rr);
    for (t, x) in traj.states.iter().enumerate() {
        if acc.push(x, traj.inputs.get(t))? {
            break;
        }
        if acc.growing >= 10 {
            break;
        }
    }
    Ok(acc.finish(traj.diverged))
}

/// Infinite-horizon cost of `u = −K⋆x` from `x0`, truncated once the state
/// norm drops below `1e-12` or increments become negligible.
pub fn closed_loop_cost(
    a: &Tensor3,
    b: &Tensor3,
    k: &Tensor3,
    x0: &Tensor3,
    q: &Tensor3,
    rr: &Tensor3,
    max_steps: usize,
) -> Result<CostBreakdown> {
    check_system(a, b, x0)?;
    check_weights(q, rr, a.n(), b.m(), a.r())?;
    let closed = &a.clone() - &b.tprod(k)?;
    let mut acc = CostAccumulator::new(q, rr);
    let mut x = x0.clone();
    for _ in 0..max_steps {
        let u = -&k.tprod(&x)?;
        let stop = acc.push(&x, Some(&u))?;
        if stop || x.frobenius_norm() < 1e-12 {
            return Ok(acc.finish(false));
        }
        if acc.growing >= 10 {
            break;
        }
        x = closed.tprod(&x)?;
        if !x.is_finite() || x.frobenius_norm() > DIVERGENCE_NORM {
            return Ok(acc.finish(true));
        }
    }
    Ok(acc.finish(acc.growing >= 10))
}
