#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use tpds::Tensor3;

pub fn tensor(n: usize, m: usize, r: usize) -> impl Strategy<Value = Tensor3> {
    prop::collection::vec(-1.0..1.0f64, n * m * r).prop_map(move |d| Tensor3::new(n, m, r, d).unwrap())
}

pub fn dims() -> impl Strategy<Value = (usize, usize, usize)> {
    (1usize..=4, 1usize..=4, 1usize..=5)
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Greedy nearest-neighbour pairing distance between two complex multisets.
pub fn multiset_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut used = vec![false; b.len()];
    let mut worst = 0.0_f64;
    let mut order: Vec<&Complex64> = a.iter().collect();
    order.sort_by(|x, y| y.norm().total_cmp(&x.norm()));
    for x in order {
        let (k, d) = b
            .iter()
            .enumerate()
            .filter(|(k, _)| !used[*k])
            .map(|(k, y)| (k, (x - y).norm()))
            .min_by(|p, q| p.1.total_cmp(&q.1))
            .unwrap();
        used[k] = true;
        worst = worst.max(d);
    }
    worst
}

/// Dense discrete-time LQR gain by the structured doubling algorithm, for `u = −Kx`.
pub fn dense_lqr(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let rinv = r.clone().try_inverse().unwrap();
    let mut ak = a.clone();
    let mut gk = b * &rinv * b.transpose();
    let mut hk = q.clone();
    for _ in 0..100 {
        let w = (&eye + &gk * &hk).try_inverse().unwrap();
        let a_next = &ak * &w * &ak;
        let g_next = &gk + &ak * &w * &gk * ak.transpose();
        let h_next = &hk + ak.transpose() * &hk * &w * &ak;
        let delta = (&h_next - &hk).norm();
        ak = a_next;
        gk = g_next;
        hk = h_next;
        if delta <= 1e-15 * hk.norm() {
            break;
        }
    }
    let p = (&hk + hk.transpose()) * 0.5;
    let k = (r + b.transpose() * &p * b).try_inverse().unwrap() * b.transpose() * &p * a;
    (p, k)
}

pub fn dense_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tpds::informativity::ExperimentData;
use tpds::sim::{experiment_from_trajectory, simulate, InputLaw};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_tensor(rng: &mut ChaCha8Rng, n: usize, m: usize, r: usize) -> Tensor3 {
    Tensor3::new(n, m, r, (0..n * m * r).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// `A` rescaled so that its largest eigentuple-entry modulus is `rho`.
pub fn with_radius(a: &Tensor3, rho: f64) -> Tensor3 {
    let cur = tpds::spectral::spectral_radius(a).unwrap();
    if cur == 0.0 {
        return a.clone();
    }
    a * (rho / cur)
}

/// Weights `Q = GᵀG + 0.1 I` and `R = HᵀH + I`.
pub fn rand_weights(rng: &mut ChaCha8Rng, n: usize, m: usize, r: usize) -> (Tensor3, Tensor3) {
    let g = rand_tensor(rng, n, n, r);
    let h = rand_tensor(rng, m, m, r);
    let q = &g.ttranspose().tprod(&g).unwrap() + &(&Tensor3::identity(n, r) * 0.1);
    let rr = &h.ttranspose().tprod(&h).unwrap() + &Tensor3::identity(m, r);
    (symmetrize(&q), symmetrize(&rr))
}

pub fn symmetrize(t: &Tensor3) -> Tensor3 {
    &(t + &t.ttranspose()) * 0.5
}

/// Data from `l` steps of `(a, b)` with the given inputs, `h` columns per step.
pub fn run_experiment(rng: &mut ChaCha8Rng, a: &Tensor3, b: &Tensor3, inputs: Vec<Tensor3>, h: usize) -> ExperimentData {
    let x0 = rand_tensor(rng, a.n(), h, a.r());
    let l = inputs.len();
    let traj = simulate(a, b, &x0, &InputLaw::Open(inputs), l).unwrap();
    experiment_from_trajectory(&traj).unwrap()
}

/// Random sizes `n, m ∈ {1,2,3}`, `r ∈ {1,…,4}` and `(l, h)` with
/// `lh ∈ {n+m, …, n+m+3}`.
pub fn rand_sizes(rng: &mut ChaCha8Rng) -> (usize, usize, usize, usize, usize) {
    let n = rng.random_range(1..=3);
    let m = rng.random_range(1..=3);
    let r = rng.random_range(1..=4);
    let lh = n + m + rng.random_range(0..=3);
    let h = if lh % 2 == 0 && rng.random_bool(0.5) { 2 } else { 1 };
    (n, m, r, lh / h, h)
}

fn rand_inputs(rng: &mut ChaCha8Rng, m: usize, h: usize, r: usize, l: usize) -> Vec<Tensor3> {
    (0..l).map(|_| rand_tensor(rng, m, h, r)).collect()
}

/// Identifiability instances: generic excitation, or inputs whose frontal
/// slices coincide (only the zero-frequency block is excited).
pub fn sysid_instance(seed: u64) -> ExperimentData {
    let mut rng = rng(seed);
    let (n, m, r, l, h) = rand_sizes(&mut rng);
    let a = rand_tensor(&mut rng, n, n, r);
    let b = rand_tensor(&mut rng, n, m, r);
    let inputs = if rng.random_bool(0.5) {
        rand_inputs(&mut rng, m, h, r, l)
    } else {
        (0..l)
            .map(|_| {
                let s = rand_tensor(&mut rng, m, h, 1).slice(0);
                Tensor3::from_slices(&vec![s; r]).unwrap()
            })
            .collect()
    };
    run_experiment(&mut rng, &a, &b, inputs, h)
}

/// Stabilization instances: generic excitation of a random system, or no
/// input at all on a system whose stability decides the verdict.
pub fn stabilization_instance(seed: u64) -> ExperimentData {
    let mut rng = rng(seed);
    let (n, m, r, l, h) = rand_sizes(&mut rng);
    let a = with_radius(&rand_tensor(&mut rng, n, n, r), rng.random_range(0.3..1.7));
    let b = rand_tensor(&mut rng, n, m, r);
    let inputs = if rng.random_bool(0.5) {
        rand_inputs(&mut rng, m, h, r, l)
    } else {
        vec![Tensor3::zeros(m, h, r); l]
    };
    run_experiment(&mut rng, &a, &b, inputs, h)
}

/// Regulation instances with weights: a generic system, an unactuated
/// unstable one, or an unexcited one.
pub fn tqr_instance(seed: u64) -> (ExperimentData, Tensor3, Tensor3) {
    let mut rng = rng(seed);
    let (n, m, r, l, h) = rand_sizes(&mut rng);
    let mut a = rand_tensor(&mut rng, n, n, r);
    let mut b = rand_tensor(&mut rng, n, m, r);
    let mut inputs = rand_inputs(&mut rng, m, h, r, l);
    match rng.random_range(0..3) {
        0 => {}
        1 => {
            a = with_radius(&a, rng.random_range(1.2..1.8));
            b = Tensor3::zeros(n, m, r);
        }
        _ => inputs = vec![Tensor3::zeros(m, h, r); l],
    }
    let (q, rr) = rand_weights(&mut rng, n, m, r);
    (run_experiment(&mut rng, &a, &b, inputs, h), q, rr)
}
