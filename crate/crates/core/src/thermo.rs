//! Relative entropy of admissible diffusions, the pressure functional
//! `H + ∫V dμ̃`, its exact deficit from `λ_V`, and a finite-dimensional
//! maximizer over drifts `g'`.

use crate::error::{invalid, Error, Result};
use crate::feynman_kac::McConfig;
use crate::gibbs::{simulate_sde_with, InitialLaw, Recording, SimulationOptions};
use crate::grid::{GridFunction, Harmonic, HarmonicSpec, PeriodicGrid};
use crate::spectral::EigenSolution;
use crate::stats::McEstimate;

/// Largest `max g - min g` accepted before `e^{2g}` stops being representable.
pub const MAX_DRIFT_RANGE: f64 = 300.0;

const ENTROPY_FORMS_TOL: f64 = 1e-9;
const DECOMPOSITION_TOL: f64 = 1e-8;

/// A Brownian motion with drift `g'`, described by `g` and its derivatives
/// together with its invariant density `μ̃ = e^{2g} / γ̃`.
#[derive(Debug, Clone)]
pub struct AdmissibleDrift {
    pub g: GridFunction,
    pub g1: GridFunction,
    pub g2: GridFunction,
    pub mu_tilde: GridFunction,
    pub gamma_tilde: f64,
}

impl AdmissibleDrift {
    pub fn from_spec(spec: &HarmonicSpec, grid: PeriodicGrid) -> Result<Self> {
        Self::from_samples(spec.sample(grid)?)
    }

    /// Builds the drift from nodal values of `g`, differentiating spectrally.
    pub fn from_samples(g: GridFunction) -> Result<Self> {
        let (lo, hi) = (g.min(), g.max());
        let range = hi - lo;
        if range > MAX_DRIFT_RANGE {
            return Err(Error::DriftRange { range });
        }
        let g1 = g.derivative(1)?;
        let g2 = g.derivative(2)?;
        // e^{2(g - max g)} stays in (e^{-600}, 1]
        let shifted = g.map(|v| (2.0 * (v - hi)).exp())?;
        let mass = shifted.integrate();
        let mu_tilde = shifted.scale(1.0 / mass);
        let gamma_tilde = mass * (2.0 * hi).exp();
        Ok(Self {
            g,
            g1,
            g2,
            mu_tilde,
            gamma_tilde,
        })
    }

    pub fn grid(&self) -> PeriodicGrid {
        self.g.grid()
    }

    /// `½ (g'' + (g')²)`, the integrand of the Radon-Nikodym exponent.
    pub fn entropy_integrand(&self) -> GridFunction {
        (&self.g2 + &(&self.g1 * &self.g1)).scale(0.5)
    }
}

/// `Γ(f, g) = f' g'`.
pub fn carre_du_champ(f: &GridFunction, g: &GridFunction) -> Result<GridFunction> {
    f.same_grid(g)?;
    Ok(&f.derivative(1)? * &g.derivative(1)?)
}

/// Entropy rate `H = ½ ∫ (g'' + g'²) dμ̃`, checked against `-½ ∫ g'² dμ̃`.
pub fn relative_entropy(ad: &AdmissibleDrift) -> Result<f64> {
    let (direct, by_parts) = entropy_forms(ad);
    let tol = ENTROPY_FORMS_TOL * by_parts.abs().max(1.0);
    let discrepancy = (direct - by_parts).abs();
    if discrepancy > tol {
        return Err(Error::Inconsistent {
            what: "entropy forms",
            discrepancy,
            tolerance: tol,
        });
    }
    Ok(direct)
}

/// The two discrete entropy forms `(½∫(g''+g'²)dμ̃, -½∫g'²dμ̃)`.
pub fn entropy_forms(ad: &AdmissibleDrift) -> (f64, f64) {
    let direct = 0.5 * (&(&ad.g2 + &(&ad.g1 * &ad.g1)) * &ad.mu_tilde).integrate();
    let by_parts = -0.5 * (&(&ad.g1 * &ad.g1) * &ad.mu_tilde).integrate();
    (direct, by_parts)
}

/// Monte Carlo estimate of `H_T / T` for the `g'`-drift diffusion started from `μ̃`.
///
/// Each path contributes `-[g(w_T) - g(w_0) - ½∫₀ᵀ(g'' + g'²)(w_r) dr]`.
pub fn entropy_finite_t_mc(ad: &AdmissibleDrift, horizon: f64, cfg: &McConfig) -> Result<McEstimate> {
    entropy_finite_t_mc_from(ad, &InitialLaw::Density(ad.mu_tilde.clone()), horizon, cfg)
}

/// As [`entropy_finite_t_mc`], with an arbitrary initial law.
pub fn entropy_finite_t_mc_from(
    ad: &AdmissibleDrift,
    init: &InitialLaw,
    horizon: f64,
    cfg: &McConfig,
) -> Result<McEstimate> {
    if !(horizon >= 1.0) {
        return Err(invalid("T", format!("horizon must be at least 1, got {horizon}")));
    }
    let opts = SimulationOptions {
        record: Recording::Endpoints,
        integrand: Some(ad.entropy_integrand()),
        first_path: 0,
    };
    let paths = simulate_sde_with(&ad.g1, init, horizon, cfg, &opts)?;
    let samples: Vec<f64> = paths
        .paths()
        .map(|p| -(ad.g.interpolate(p.end()) - ad.g.interpolate(p.start()) - p.v_integral) / horizon)
        .collect();
    Ok(McEstimate::from_samples(&samples))
}

/// `H(g) + ∫ V dμ̃`.
pub fn pressure_value(ad: &AdmissibleDrift, potential: &GridFunction) -> Result<f64> {
    ad.g.same_grid(potential)?;
    Ok(relative_entropy(ad)? + (potential * &ad.mu_tilde).integrate())
}

/// `½ ∫ ((log F)' - g')² dμ̃` without the consistency check.
pub fn pressure_deficit(ad: &AdmissibleDrift, e: &EigenSolution) -> Result<f64> {
    ad.g.same_grid(&e.f)?;
    let diff = &e.drift - &ad.g1;
    Ok(0.5 * (&(&diff * &diff) * &ad.mu_tilde).integrate())
}

/// `λ_V - pressure_value(g)`, evaluated as the quadratic deficit and checked
/// against the direct difference.
pub fn pressure_gap(ad: &AdmissibleDrift, e: &EigenSolution) -> Result<f64> {
    let gap = pressure_deficit(ad, e)?;
    let direct = e.lambda - pressure_value(ad, &e.potential)?;
    let discrepancy = (direct - gap).abs();
    if discrepancy > DECOMPOSITION_TOL {
        return Err(Error::Inconsistent {
            what: "pressure decomposition",
            discrepancy,
            tolerance: DECOMPOSITION_TOL,
        });
    }
    Ok(gap)
}

/// Entropy, mean potential and pressure of one admissible drift, measured
/// against the principal eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyReport {
    pub h: f64,
    pub mean_v: f64,
    pub pressure_value: f64,
    pub gap: f64,
    pub lambda_ref: f64,
}

pub fn entropy_report(ad: &AdmissibleDrift, e: &EigenSolution) -> Result<EntropyReport> {
    let h = relative_entropy(ad)?;
    let mean_v = (&e.potential * &ad.mu_tilde).integrate();
    let gap = pressure_gap(ad, e)?;
    Ok(EntropyReport {
        h,
        mean_v,
        pressure_value: h + mean_v,
        gap,
        lambda_ref: e.lambda,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub iter: usize,
    pub value: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct PressureMaximum {
    pub g: HarmonicSpec,
    pub value: f64,
    pub trace: Vec<TraceEntry>,
}

const FD_STEP: f64 = 1e-6;
const GRAD_TOL: f64 = 1e-8;
const MAX_HALVINGS: usize = 30;

fn spec_from_coeffs(coeffs: &[f64]) -> HarmonicSpec {
    HarmonicSpec {
        constant: 0.0,
        harmonics: coeffs
            .chunks(2)
            .enumerate()
            .map(|(i, ab)| Harmonic {
                k: i as u32 + 1,
                a: ab[0],
                b: ab[1],
            })
            .collect(),
    }
}

/// Gradient ascent of the pressure over `g = Σ_{k≤K} a_k cos(2πkx) + b_k sin(2πkx)`.
///
/// Gradients are central differences with step `1e-6`. A step that lowers the
/// value is retried with half the learning rate, at most 30 times; the reduced
/// rate is kept for later iterations.
pub fn maximize_pressure(
    potential: &GridFunction,
    harmonics: usize,
    lr: f64,
    iters: usize,
) -> Result<PressureMaximum> {
    let grid = potential.grid();
    if harmonics == 0 || harmonics > grid.n() / 4 {
        return Err(invalid(
            "K",
            format!("need 1 <= K <= n/4 = {}, got {harmonics}", grid.n() / 4),
        ));
    }
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(invalid("lr", format!("learning rate must be positive, got {lr}")));
    }
    let eval = |c: &[f64]| -> Result<f64> {
        pressure_value(&AdmissibleDrift::from_spec(&spec_from_coeffs(c), grid)?, potential)
    };

    let mut coeffs = vec![0.0; 2 * harmonics];
    let mut value = eval(&coeffs)?;
    let mut rate = lr;
    let mut trace = Vec::new();
    let mut grad_norm = f64::INFINITY;

    for iter in 0..iters {
        let mut grad = vec![0.0; coeffs.len()];
        for j in 0..coeffs.len() {
            let mut probe = coeffs.clone();
            probe[j] = coeffs[j] + FD_STEP;
            let up = eval(&probe)?;
            probe[j] = coeffs[j] - FD_STEP;
            let down = eval(&probe)?;
            grad[j] = (up - down) / (2.0 * FD_STEP);
        }
        grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        trace.push(TraceEntry {
            iter,
            value,
            grad_norm,
        });
        if grad_norm < GRAD_TOL {
            break;
        }
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let candidate: Vec<f64> = coeffs.iter().zip(&grad).map(|(c, g)| c + rate * g).collect();
            let cv = eval(&candidate)?;
            if cv >= value {
                coeffs = candidate;
                value = cv;
                accepted = true;
                break;
            }
            rate *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    let tail = &trace[trace.len().saturating_sub(10)..];
    let spread = tail.iter().map(|t| t.value).fold(f64::NEG_INFINITY, f64::max)
        - tail.iter().map(|t| t.value).fold(f64::INFINITY, f64::min);
    if spread > 1e-6 && grad_norm >= 1e-6 {
        return Err(Error::NonConvergence { spread, grad_norm });
    }
    Ok(PressureMaximum {
        g: spec_from_coeffs(&coeffs),
        value,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{solve, Laplacian};
    use approx::assert_abs_diff_eq;

    fn grid(n: usize) -> PeriodicGrid {
        PeriodicGrid::new(n).unwrap()
    }

    #[test]
    fn zero_drift_is_uniform_with_zero_entropy() {
        let ad = AdmissibleDrift::from_spec(&HarmonicSpec::constant(0.0), grid(32)).unwrap();
        assert!(ad.mu_tilde.values().iter().all(|&v| (v - 1.0).abs() < 1e-14));
        assert_abs_diff_eq!(ad.gamma_tilde, 1.0, epsilon = 1e-14);
        assert_eq!(relative_entropy(&ad).unwrap(), 0.0);
    }

    #[test]
    fn constants_cancel_in_the_invariant_density() {
        let spec = HarmonicSpec::from_triples(0.0, &[(1, 0.4, -0.2), (3, 0.1, 0.3)]).unwrap();
        let shifted = spec.merged(&HarmonicSpec::constant(5.0));
        let a = AdmissibleDrift::from_spec(&spec, grid(64)).unwrap();
        let b = AdmissibleDrift::from_spec(&shifted, grid(64)).unwrap();
        for (x, y) in a.mu_tilde.values().iter().zip(b.mu_tilde.values()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-13);
        }
        // equal up to the roundoff of differentiating shifted samples
        assert_abs_diff_eq!(relative_entropy(&a).unwrap(), relative_entropy(&b).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn drift_range_guard() {
        let spec = HarmonicSpec::from_triples(0.0, &[(1, 200.0, 0.0)]).unwrap();
        assert!(matches!(
            AdmissibleDrift::from_spec(&spec, grid(32)),
            Err(Error::DriftRange { .. })
        ));
    }

    #[test]
    fn carre_du_champ_cases() {
        let g = grid(64);
        let cos = HarmonicSpec::from_triples(0.0, &[(1, 1.0, 0.0)]).unwrap().sample(g).unwrap();
        let sin = HarmonicSpec::from_triples(0.0, &[(1, 0.0, 1.0)]).unwrap().sample(g).unwrap();
        let c = GridFunction::constant(g, 4.0).unwrap();
        assert!(carre_du_champ(&cos, &c).unwrap().max_abs() < 1e-12);
        assert_eq!(
            carre_du_champ(&cos, &sin).unwrap(),
            carre_du_champ(&sin, &cos).unwrap()
        );
        let gamma = carre_du_champ(&cos, &sin).unwrap();
        for (i, x) in g.nodes().into_iter().enumerate() {
            let p = 2.0 * std::f64::consts::PI * x;
            let expected = -4.0 * std::f64::consts::PI.powi(2) * p.sin() * p.cos();
            assert_abs_diff_eq!(gamma.values()[i], expected, epsilon = 1e-11);
        }
    }

    #[test]
    fn zero_drift_pressure_is_mean_potential() {
        let g = grid(128);
        let v = HarmonicSpec::from_triples(0.3, &[(1, 1.0, 0.0)]).unwrap().sample(g).unwrap();
        let ad = AdmissibleDrift::from_spec(&HarmonicSpec::constant(0.0), g).unwrap();
        assert_abs_diff_eq!(pressure_value(&ad, &v).unwrap(), 0.3, epsilon = 1e-14);
        let e = solve(&v, Laplacian::Fourier).unwrap();
        let gap = pressure_gap(&ad, &e).unwrap();
        assert_abs_diff_eq!(gap, e.lambda - 0.3, epsilon = 1e-8);
    }

    #[test]
    fn maximizer_argument_checks() {
        let v = GridFunction::constant(grid(32), 0.0).unwrap();
        assert!(maximize_pressure(&v, 9, 1e-3, 10).is_err());
        assert!(maximize_pressure(&v, 0, 1e-3, 10).is_err());
        assert!(maximize_pressure(&v, 2, 0.0, 10).is_err());
    }

    #[test]
    fn free_maximizer_stays_at_zero() {
        let v = GridFunction::constant(grid(64), 0.0).unwrap();
        let m = maximize_pressure(&v, 4, 1e-3, 50).unwrap();
        assert_abs_diff_eq!(m.value, 0.0, epsilon = 1e-8);
        assert!(m.g.harmonics.iter().all(|h| h.a.abs() < 1e-8 && h.b.abs() < 1e-8));
    }
}
