//! The Feynman-Kac semigroup `P_t^V f(x) = E_x[exp(∫₀ᵗ V(X_r) dr) f(X_t)]`,
//! computed two ways: Crank-Nicolson propagation of `∂_t u = (½∂² + V) u` and
//! Monte Carlo over Brownian paths on the circle.

use nalgebra::{DMatrix, DVector, LU};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::exec::{path_rng, Execution};
use crate::grid::{wrap, GridFunction};
use crate::spectral::{build_generator_with, Laplacian, OperatorMatrix};
use crate::stats::McEstimate;

/// Number of whole steps in `t / dt`, if it is an integer within `1e-9`.
pub(crate) fn step_count(t: f64, dt: f64) -> Result<usize> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid("t", format!("horizon must be positive, got {t}")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid("dt", format!("time step must be positive, got {dt}")));
    }
    if dt > t {
        return Err(invalid("dt", format!("time step {dt} exceeds horizon {t}")));
    }
    let ratio = t / dt;
    let steps = ratio.round();
    if (ratio - steps).abs() > 1e-9 * steps.max(1.0) {
        return Err(invalid(
            "dt",
            format!("horizon {t} is not an integer multiple of dt {dt}"),
        ));
    }
    Ok(steps as usize)
}

/// Horizon and step of a Crank-Nicolson propagation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagatorConfig {
    pub t: f64,
    pub dt: f64,
    pub laplacian: Laplacian,
}

impl PropagatorConfig {
    pub fn new(t: f64, dt: f64) -> Result<Self> {
        step_count(t, dt)?;
        Ok(Self {
            t,
            dt,
            laplacian: Laplacian::SecondDifference,
        })
    }

    pub fn with_laplacian(mut self, laplacian: Laplacian) -> Self {
        self.laplacian = laplacian;
        self
    }

    pub fn steps(&self) -> usize {
        step_count(self.t, self.dt).expect("validated at construction")
    }
}

/// Monte Carlo budget and random stream selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub n_paths: u64,
    pub dt: f64,
    pub seed: u64,
    pub execution: Execution,
}

impl McConfig {
    pub fn new(n_paths: u64, dt: f64, seed: u64) -> Result<Self> {
        if n_paths == 0 {
            return Err(invalid("paths", "need at least one path"));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid("dt", format!("time step must be positive, got {dt}")));
        }
        Ok(Self {
            n_paths,
            dt,
            seed,
            execution: Execution::default(),
        })
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }
}

/// Crank-Nicolson stepper `(I - dt/2 A) u' = (I + dt/2 A) u`.
pub struct CrankNicolson {
    explicit: DMatrix<f64>,
    implicit: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl CrankNicolson {
    pub fn new(op: &OperatorMatrix, dt: f64) -> Result<Self> {
        // positive eigenvalues are bounded by max V; 1 - dt/2 * lambda must stay positive
        let top = op.upper_spectral_bound();
        if top > 0.0 && dt * top >= 2.0 {
            return Err(invalid(
                "dt",
                format!("time step {dt} exceeds the cap {} for max V = {top}", 2.0 / top),
            ));
        }
        let n = op.grid().n();
        let half = 0.5 * dt;
        let eye = DMatrix::<f64>::identity(n, n);
        let explicit = &eye + op.matrix() * half;
        let implicit = (&eye - op.matrix() * half).lu();
        if !implicit.is_invertible() {
            return Err(Error::SingularSystem);
        }
        Ok(Self { explicit, implicit })
    }

    pub fn advance(&self, u: &mut DVector<f64>, steps: usize) -> Result<()> {
        for _ in 0..steps {
            let rhs = &self.explicit * &*u;
            *u = self.implicit.solve(&rhs).ok_or(Error::SingularSystem)?;
        }
        Ok(())
    }
}

/// `u(t) ≈ P_t^V f` by Crank-Nicolson.
pub fn propagate_pde(
    potential: &GridFunction,
    f: &GridFunction,
    cfg: &PropagatorConfig,
) -> Result<GridFunction> {
    potential.same_grid(f)?;
    let op = build_generator_with(potential, cfg.laplacian);
    let cn = CrankNicolson::new(&op, cfg.dt)?;
    let mut u = DVector::from_column_slice(f.values());
    cn.advance(&mut u, cfg.steps())?;
    GridFunction::new(f.grid(), u.as_slice().to_vec())
}

/// Monte Carlo estimate of `P_t^V f(x)`.
///
/// Each path is a Brownian motion wrapped onto the circle, stepped by Euler
/// with increment `√dt ξ`; the weight is `exp` of the left-endpoint Riemann
/// sum of `V`. Off-node values use periodic linear interpolation.
pub fn propagate_mc(
    potential: &GridFunction,
    f: &GridFunction,
    x: f64,
    cfg: &McConfig,
    t: f64,
) -> Result<McEstimate> {
    potential.same_grid(f)?;
    if !x.is_finite() {
        return Err(invalid("x", "start point must be finite"));
    }
    let steps = step_count(t, cfg.dt)?;
    let sqrt_dt = cfg.dt.sqrt();
    let x0 = wrap(x);
    let samples = cfg.execution.map_range(0, cfg.n_paths, |i| {
        let mut rng = path_rng(cfg.seed, i);
        let mut pos = x0;
        let mut integral = 0.0;
        for _ in 0..steps {
            integral += potential.interpolate(pos) * cfg.dt;
            let xi: f64 = StandardNormal.sample(&mut rng);
            pos = wrap(pos + sqrt_dt * xi);
        }
        integral.exp() * f.interpolate(pos)
    });
    Ok(McEstimate::from_samples(&samples))
}

/// `|∫ (P_t f) g dx - ∫ f (P_t g) dx|` with both sides from [`propagate_pde`].
pub fn check_selfadjoint(
    potential: &GridFunction,
    f: &GridFunction,
    g: &GridFunction,
    t: f64,
    dt: f64,
) -> Result<f64> {
    potential.same_grid(f)?;
    potential.same_grid(g)?;
    let cfg = PropagatorConfig::new(t, dt)?;
    let op = build_generator_with(potential, cfg.laplacian);
    let cn = CrankNicolson::new(&op, dt)?;
    let mut pf = DVector::from_column_slice(f.values());
    let mut pg = DVector::from_column_slice(g.values());
    cn.advance(&mut pf, cfg.steps())?;
    cn.advance(&mut pg, cfg.steps())?;
    let h = potential.grid().h();
    let lhs = h * pf.dot(&DVector::from_column_slice(g.values()));
    let rhs = h * pg.dot(&DVector::from_column_slice(f.values()));
    Ok((lhs - rhs).abs())
}
