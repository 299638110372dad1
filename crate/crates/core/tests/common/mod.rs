//! Test-only oracles that share no code path with the library solvers.

#![allow(dead_code)]

use std::f64::consts::PI;

use fk_thermo::{GridFunction, HarmonicSpec, PeriodicGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn grid(n: usize) -> PeriodicGrid {
    PeriodicGrid::new(n).unwrap()
}

pub fn spec(constant: f64, triples: &[(u32, f64, f64)]) -> HarmonicSpec {
    HarmonicSpec::from_triples(constant, triples).unwrap()
}

pub fn cos_potential(n: usize) -> GridFunction {
    spec(0.0, &[(1, 1.0, 0.0)]).sample(grid(n)).unwrap()
}

/// `cos(2πx) + ½ sin(4πx)`.
pub fn mixed_potential(n: usize) -> GridFunction {
    spec(0.0, &[(1, 1.0, 0.0), (2, 0.0, 0.5)]).sample(grid(n)).unwrap()
}

/// Harmonic spec with `k = 1..=kmax` and coefficients uniform in `[-1, 1]`.
pub fn random_spec(rng: &mut ChaCha8Rng, kmax: u32) -> HarmonicSpec {
    let triples: Vec<(u32, f64, f64)> = (1..=kmax)
        .map(|k| (k, rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)))
        .collect();
    spec(0.0, &triples)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Solves the cyclic tridiagonal system with constant off-diagonal `off`
/// (including the two corners) and diagonal `diag` by Sherman-Morrison.
fn cyclic_tridiagonal_solve(diag: &[f64], off: f64, rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let gamma = -diag[0];
    let mut b = diag.to_vec();
    b[0] -= gamma;
    b[n - 1] -= off * off / gamma;
    let thomas = |d: &[f64]| -> Vec<f64> {
        let mut c = vec![0.0; n];
        let mut x = vec![0.0; n];
        c[0] = off / b[0];
        x[0] = d[0] / b[0];
        for i in 1..n {
            let m = b[i] - off * c[i - 1];
            c[i] = off / m;
            x[i] = (d[i] - off * x[i - 1]) / m;
        }
        for i in (0..n - 1).rev() {
            x[i] -= c[i] * x[i + 1];
        }
        x
    };
    let y = thomas(rhs);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = off;
    let z = thomas(&u);
    let v0 = 1.0;
    let vn = off / gamma;
    let factor = (v0 * y[0] + vn * y[n - 1]) / (1.0 + v0 * z[0] + vn * z[n - 1]);
    y.iter().zip(&z).map(|(yi, zi)| yi - factor * zi).collect()
}

/// Top eigenvalue of `½ (1,-2,1)/h² + diag(V)` for `V = spec`, by shifted
/// inverse iteration on the cyclic tridiagonal matrix.
pub fn second_difference_top_eigenvalue(potential: &HarmonicSpec, n: usize) -> f64 {
    let h = 1.0 / n as f64;
    let v: Vec<f64> = (0..n).map(|i| potential.eval(i as f64 * h)).collect();
    let vmax = v.iter().copied().fold(f64::MIN, f64::max);
    let inv_h2 = 1.0 / (h * h);
    let apply = |u: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let l = u[(i + n - 1) % n];
                let r = u[(i + 1) % n];
                0.5 * (l - 2.0 * u[i] + r) * inv_h2 + v[i] * u[i]
            })
            .collect()
    };
    let sigma = vmax + 0.5;
    // sigma I - A: diagonal sigma - V + 1/h², off-diagonal -1/(2h²)
    let diag: Vec<f64> = v.iter().map(|vi| sigma - vi + inv_h2).collect();
    let off = -0.5 * inv_h2;
    let mut u = vec![1.0; n];
    let mut lambda = f64::NAN;
    for _ in 0..200 {
        let w = cyclic_tridiagonal_solve(&diag, off, &u);
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        u = w.iter().map(|x| x / norm).collect();
        let au = apply(&u);
        let next: f64 = u.iter().zip(&au).map(|(a, b)| a * b).sum();
        if (next - lambda).abs() < 1e-15 {
            return next;
        }
        lambda = next;
    }
    lambda
}

/// Continuum top eigenvalue from Richardson extrapolation in `h²` of the
/// second-difference eigenvalue at `n = 2048` and `n = 4096`.
pub fn richardson_eigenvalue(potential: &HarmonicSpec) -> f64 {
    let coarse = second_difference_top_eigenvalue(potential, 2048);
    let fine = second_difference_top_eigenvalue(potential, 4096);
    (4.0 * fine - coarse) / 3.0
}

/// Closed-form `e^{-2π²t} cos(2πx)`, the heat flow of the first harmonic under `½∂²`.
pub fn heat_decay_cos(x: f64, t: f64) -> f64 {
    (-2.0 * PI * PI * t).exp() * (2.0 * PI * x).cos()
}

pub fn max_abs_diff(a: &GridFunction, b: &GridFunction) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}
