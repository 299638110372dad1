//! The Doob-normalized (Gibbs) semigroup `𝒫_t^V f = P_t^V(F f) / (e^{λt} F)`,
//! its diffusion realization with drift `(log F)'`, and Radon-Nikodym path
//! weights against Brownian motion.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::exec::path_rng;
use crate::feynman_kac::{propagate_pde, step_count, McConfig, PropagatorConfig};
use crate::grid::{wrap, GridFunction};
use crate::spectral::{gibbs_density, EigenSolution};
use crate::stats::LinearCdf;
use crate::thermo::AdmissibleDrift;

/// `𝒫_t^V f` on the grid, using the eigenpair's own discretization for the
/// underlying Feynman-Kac propagation.
pub fn normalized_semigroup(
    e: &EigenSolution,
    f: &GridFunction,
    t: f64,
    dt: f64,
) -> Result<GridFunction> {
    e.f.same_grid(f)?;
    let cfg = PropagatorConfig::new(t, dt)?.with_laplacian(e.laplacian);
    let u = propagate_pde(&e.potential, &(&e.f * f), &cfg)?;
    let growth = (e.lambda * t).exp();
    u.zip_with(&e.f, |num, den| num / (growth * den))
}

/// `ℒ_V f = ½ f'' + (log F)' f'`.
pub fn generator_apply(e: &EigenSolution, f: &GridFunction) -> Result<GridFunction> {
    e.f.same_grid(f)?;
    let d1 = f.derivative(1)?;
    let d2 = f.derivative(2)?;
    Ok(&d2.scale(0.5) + &(&e.drift * &d1))
}

/// `|∫ ℒ_V f dμ_V|`, zero for an invariant `μ_V`.
pub fn invariance_residual(e: &EigenSolution, f: &GridFunction) -> Result<f64> {
    let lf = generator_apply(e, f)?;
    Ok((&lf * &gibbs_density(e)).integrate().abs())
}

/// Law of the starting point of each simulated path.
#[derive(Debug, Clone)]
pub enum InitialLaw {
    Point(f64),
    /// Nonnegative grid density with unit integral, sampled by inverse CDF of
    /// its piecewise-linear interpolant.
    Density(GridFunction),
}

/// Which positions a [`PathEnsemble`] keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Recording {
    /// Every step, `n_steps + 1` positions per path.
    #[default]
    Full,
    /// Start and end only.
    Endpoints,
}

#[derive(Debug, Clone, Default)]
pub struct SimulationOptions {
    pub record: Recording,
    /// Function whose left-endpoint time integral is accumulated along each path.
    pub integrand: Option<GridFunction>,
    /// Index of the first path; path `i` uses random stream `first_path + i`.
    pub first_path: u64,
}

/// Batch of simulated circle-valued paths.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    pub dt: f64,
    pub n_steps: usize,
    pub n_paths: usize,
    pub record: Recording,
    positions: Vec<f64>,
    /// Per-path Riemann sums of the designated integrand (zeros without one).
    pub v_integrals: Vec<f64>,
}

/// One row of a [`PathEnsemble`].
#[derive(Debug, Clone, Copy)]
pub struct PathView<'a> {
    pub dt: f64,
    pub n_steps: usize,
    positions: &'a [f64],
    pub v_integral: f64,
}

impl PathEnsemble {
    fn stride(&self) -> usize {
        match self.record {
            Recording::Full => self.n_steps + 1,
            Recording::Endpoints => 2,
        }
    }

    pub fn path(&self, i: usize) -> PathView<'_> {
        let s = self.stride();
        PathView {
            dt: self.dt,
            n_steps: self.n_steps,
            positions: &self.positions[i * s..(i + 1) * s],
            v_integral: self.v_integrals[i],
        }
    }

    pub fn paths(&self) -> impl Iterator<Item = PathView<'_>> {
        (0..self.n_paths).map(move |i| self.path(i))
    }

    pub fn final_positions(&self) -> impl Iterator<Item = f64> + '_ {
        self.paths().map(|p| p.end())
    }

    /// Every recorded position of every path.
    pub fn all_positions(&self) -> &[f64] {
        &self.positions
    }
}

impl PathView<'_> {
    pub fn start(&self) -> f64 {
        self.positions[0]
    }

    pub fn end(&self) -> f64 {
        self.positions[self.positions.len() - 1]
    }

    pub fn is_full(&self) -> bool {
        self.positions.len() == self.n_steps + 1
    }

    /// Recorded positions (all steps, or start and end).
    pub fn positions(&self) -> &[f64] {
        self.positions
    }

    /// Position after `k` steps; needs a full recording unless `k` is `0` or `n_steps`.
    pub fn position(&self, k: usize) -> Result<f64> {
        if k == 0 {
            Ok(self.start())
        } else if k == self.n_steps {
            Ok(self.end())
        } else if self.is_full() && k < self.n_steps {
            Ok(self.positions[k])
        } else {
            Err(invalid("t", format!("step {k} is not recorded on this path")))
        }
    }

    /// Left-endpoint Riemann sum of `f` over the first `k` steps.
    pub fn integral_of(&self, f: &GridFunction, k: usize) -> Result<f64> {
        if !self.is_full() || k > self.n_steps {
            return Err(invalid(
                "path",
                "time integrals of new functions need a full recording",
            ));
        }
        let mut acc = 0.0;
        for &x in &self.positions[..k] {
            acc += f.interpolate(x) * self.dt;
        }
        Ok(acc)
    }

    fn steps_for(&self, t: f64) -> Result<usize> {
        let k = step_count(t, self.dt)?;
        if k > self.n_steps {
            return Err(invalid(
                "t",
                format!("time {t} is beyond the simulated horizon"),
            ));
        }
        Ok(k)
    }
}

/// Euler-Maruyama `X_{k+1} = wrap(X_k + b(X_k) dt + √dt ξ_k)` with full recording.
pub fn simulate_sde(
    drift: &GridFunction,
    init: &InitialLaw,
    horizon: f64,
    cfg: &McConfig,
) -> Result<PathEnsemble> {
    simulate_sde_with(drift, init, horizon, cfg, &SimulationOptions::default())
}

pub fn simulate_sde_with(
    drift: &GridFunction,
    init: &InitialLaw,
    horizon: f64,
    cfg: &McConfig,
    opts: &SimulationOptions,
) -> Result<PathEnsemble> {
    let n_steps = step_count(horizon, cfg.dt)?;
    if let Some(f) = &opts.integrand {
        drift.same_grid(f)?;
    }
    let sampler = match init {
        InitialLaw::Point(x) if x.is_finite() => None,
        InitialLaw::Point(_) => return Err(invalid("init", "start point must be finite")),
        InitialLaw::Density(d) => {
            drift.same_grid(d)?;
            if d.min() < 0.0 {
                return Err(invalid("init", "initial density must be nonnegative"));
            }
            let mass = d.integrate();
            if (mass - 1.0).abs() > 1e-8 {
                return Err(invalid(
                    "init",
                    format!("initial density integrates to {mass}, expected 1"),
                ));
            }
            Some(LinearCdf::new(d))
        }
    };
    let dt = cfg.dt;
    let sqrt_dt = dt.sqrt();
    let record = opts.record;
    let integrand = opts.integrand.as_ref();

    let rows = cfg.execution.map_range(
        opts.first_path,
        opts.first_path + cfg.n_paths,
        |i| {
            let mut rng = path_rng(cfg.seed, i);
            let mut pos = match (&sampler, init) {
                (Some(cdf), _) => cdf.quantile(rng.random::<f64>()),
                (None, InitialLaw::Point(x)) => wrap(*x),
                (None, InitialLaw::Density(_)) => unreachable!(),
            };
            let mut row = Vec::with_capacity(match record {
                Recording::Full => n_steps + 1,
                Recording::Endpoints => 2,
            });
            row.push(pos);
            let mut integral = 0.0;
            for _ in 0..n_steps {
                if let Some(v) = integrand {
                    integral += v.interpolate(pos) * dt;
                }
                let xi: f64 = StandardNormal.sample(&mut rng);
                pos = wrap(pos + drift.interpolate(pos) * dt + sqrt_dt * xi);
                if record == Recording::Full {
                    row.push(pos);
                }
            }
            if record == Recording::Endpoints {
                row.push(pos);
            }
            (row, integral)
        },
    );

    let n_paths = rows.len();
    let mut positions = Vec::with_capacity(n_paths * rows.first().map_or(0, |r| r.0.len()));
    let mut v_integrals = Vec::with_capacity(n_paths);
    for (row, integral) in rows {
        positions.extend_from_slice(&row);
        v_integrals.push(integral);
    }
    Ok(PathEnsemble {
        dt,
        n_steps,
        n_paths,
        record,
        positions,
        v_integrals,
    })
}

/// Radon-Nikodym weight of a path under the Gibbs process against Brownian
/// motion up to time `t`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct RnWeight(f64);

impl RnWeight {
    fn from_log(log_w: f64) -> Result<Self> {
        let w = log_w.exp();
        if w.is_finite() && w > 0.0 {
            Ok(Self(w))
        } else {
            Err(Error::NonFinite {
                what: "Radon-Nikodym weight",
            })
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// `exp{log F(w_t) - log F(w_0) - (λ_V t - ∫₀ᵗ V(w_r) dr)}`.
///
/// At the end of the path the stored `v_integral` is used, which must have
/// been accumulated for `e.potential`; earlier times need a full recording.
pub fn rn_weight(path: &PathView<'_>, e: &EigenSolution, t: f64) -> Result<RnWeight> {
    let k = path.steps_for(t)?;
    let v_integral = if k == path.n_steps {
        path.v_integral
    } else {
        path.integral_of(&e.potential, k)?
    };
    let log_f = e.log_f();
    let mut lambda_integral = 0.0;
    for _ in 0..k {
        lambda_integral += e.lambda * path.dt;
    }
    RnWeight::from_log(
        log_f.interpolate(path.position(k)?) - log_f.interpolate(path.start())
            - (lambda_integral - v_integral),
    )
}

/// `exp{g(w_t) - g(w_0) - ½ ∫₀ᵗ [g'' + (g')²](w_r) dr}`; needs a full recording.
pub fn rn_weight_admissible(
    path: &PathView<'_>,
    ad: &AdmissibleDrift,
    t: f64,
) -> Result<RnWeight> {
    let k = path.steps_for(t)?;
    let integral = path.integral_of(&ad.entropy_integrand(), k)?;
    RnWeight::from_log(ad.g.interpolate(path.position(k)?) - ad.g.interpolate(path.start()) - integral)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{HarmonicSpec, PeriodicGrid};
    use crate::spectral::{solve, Laplacian};
    use approx::assert_abs_diff_eq;

    fn cos_solution(n: usize) -> EigenSolution {
        let v = HarmonicSpec::from_triples(0.0, &[(1, 1.0, 0.0)])
            .unwrap()
            .sample(PeriodicGrid::new(n).unwrap())
            .unwrap();
        solve(&v, Laplacian::Fourier).unwrap()
    }

    #[test]
    fn generator_kills_constants_and_reduces_to_half_laplacian() {
        let e = cos_solution(64);
        let c = GridFunction::constant(e.grid(), 2.0).unwrap();
        assert!(generator_apply(&e, &c).unwrap().max_abs() < 1e-12);
        assert_eq!(invariance_residual(&e, &c).unwrap(), 0.0);

        let zero = GridFunction::constant(e.grid(), 0.0).unwrap();
        let free = solve(&zero, Laplacian::Fourier).unwrap();
        let f = HarmonicSpec::from_triples(0.0, &[(2, 1.0, 0.5)]).unwrap().sample(e.grid()).unwrap();
        let lf = generator_apply(&free, &f).unwrap();
        let half = f.derivative(2).unwrap().scale(0.5);
        for (a, b) in lf.values().iter().zip(half.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
        assert!(invariance_residual(&free, &f).unwrap() <= 1e-10);
    }

    #[test]
    fn normalized_semigroup_is_stochastic() {
        let e = cos_solution(64);
        let one = GridFunction::constant(e.grid(), 1.0).unwrap();
        let p = normalized_semigroup(&e, &one, 0.5, 1e-3).unwrap();
        assert!(p.values().iter().all(|x| (x - 1.0).abs() < 1e-8));
    }

    #[test]
    fn density_initial_law_is_validated() {
        let grid = PeriodicGrid::new(16).unwrap();
        let zero = GridFunction::constant(grid, 0.0).unwrap();
        let cfg = McConfig::new(4, 0.1, 1).unwrap();
        let bad = InitialLaw::Density(GridFunction::constant(grid, 2.0).unwrap());
        assert!(simulate_sde(&zero, &bad, 1.0, &cfg).is_err());
        let ok = InitialLaw::Density(GridFunction::constant(grid, 1.0).unwrap());
        let paths = simulate_sde(&zero, &ok, 1.0, &cfg).unwrap();
        assert_eq!(paths.n_paths, 4);
        assert_eq!(paths.all_positions().len(), 4 * 11);
        assert!(paths.all_positions().iter().all(|&x| (0.0..1.0).contains(&x)));
    }

    #[test]
    fn endpoints_recording_matches_full() {
        let grid = PeriodicGrid::new(32).unwrap();
        let drift = HarmonicSpec::from_triples(0.0, &[(1, 0.0, 0.3)]).unwrap().sample(grid).unwrap();
        let cfg = McConfig::new(16, 0.01, 9).unwrap();
        let init = InitialLaw::Point(0.2);
        let full = simulate_sde(&drift, &init, 1.0, &cfg).unwrap();
        let ends = simulate_sde_with(
            &drift,
            &init,
            1.0,
            &cfg,
            &SimulationOptions {
                record: Recording::Endpoints,
                ..Default::default()
            },
        )
        .unwrap();
        let a: Vec<f64> = full.final_positions().collect();
        let b: Vec<f64> = ends.final_positions().collect();
        assert_eq!(a, b);
        assert!(ends.path(0).integral_of(&drift, 3).is_err());
    }

    #[test]
    fn free_weights_are_one() {
        let grid = PeriodicGrid::new(32).unwrap();
        let zero = GridFunction::constant(grid, 0.0).unwrap();
        let e = solve(&zero, Laplacian::Fourier).unwrap();
        let cfg = McConfig::new(8, 0.01, 2).unwrap();
        let opts = SimulationOptions {
            integrand: Some(zero.clone()),
            ..Default::default()
        };
        let paths = simulate_sde_with(&zero, &InitialLaw::Point(0.25), 0.5, &cfg, &opts).unwrap();
        for p in paths.paths() {
            // F is constant up to roundoff
            assert_abs_diff_eq!(rn_weight(&p, &e, 0.5).unwrap().value(), 1.0, epsilon = 1e-12);
            let ad = AdmissibleDrift::from_samples(zero.clone()).unwrap();
            assert_eq!(rn_weight_admissible(&p, &ad, 0.5).unwrap().value(), 1.0);
        }
    }
}
