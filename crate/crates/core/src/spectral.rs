//! The operator `½ d²/dx² + V` on the circle and its principal eigenpair.
//!
//! Two discretizations of the Laplacian are available. The periodic
//! second-difference stencil is the default: it is second-order accurate and
//! its truncation error is what the convergence studies measure. Fourier
//! collocation is spectrally accurate and agrees with [`GridFunction::derivative`]
//! to roundoff, so identities that mix the eigenpair with spectral derivatives
//! (pressure, entropy, path weights) close at machine precision only on it.
//! Both matrices are exactly symmetric.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::grid::{GridFunction, PeriodicGrid};

/// Discretization of `d²/dx²` on a periodic grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Laplacian {
    /// `(1, -2, 1) / h²` with wrap-around corners.
    #[default]
    SecondDifference,
    /// Fourier collocation (dense symmetric circulant).
    Fourier,
}

impl Laplacian {
    pub fn name(self) -> &'static str {
        match self {
            Laplacian::SecondDifference => "second-difference",
            Laplacian::Fourier => "fourier",
        }
    }
}

impl std::str::FromStr for Laplacian {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fd" | "second-difference" => Ok(Laplacian::SecondDifference),
            "fourier" | "spectral" => Ok(Laplacian::Fourier),
            other => Err(format!("unknown laplacian `{other}` (expected fd or fourier)")),
        }
    }
}

/// First column of the periodic second-derivative matrix (circulant, symmetric).
fn laplacian_stencil(grid: PeriodicGrid, kind: Laplacian) -> Vec<f64> {
    let n = grid.n();
    match kind {
        Laplacian::SecondDifference => {
            let inv_h2 = (n * n) as f64;
            let mut c = vec![0.0; n];
            c[0] = -2.0 * inv_h2;
            c[1] = inv_h2;
            c[n - 1] += inv_h2;
            c
        }
        Laplacian::Fourier => {
            // closed-form periodic collocation entries, scaled from [0, 2π) to [0, 1):
            // -1 / (2 sin²(π m / n)) (-1)^m off the diagonal
            let scale = 4.0 * PI * PI;
            let mut c = vec![0.0; n];
            for (m, cm) in c.iter_mut().enumerate().skip(1) {
                let s = (PI * m as f64 / n as f64).sin();
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                *cm = -scale * sign / (2.0 * s * s);
            }
            for m in 1..n / 2 {
                let s = 0.5 * (c[m] + c[n - m]);
                c[m] = s;
                c[n - m] = s;
            }
            // rows sum to zero, so constants are annihilated
            c[0] = -c[1..].iter().sum::<f64>();
            c
        }
    }
}

/// Dense symmetric matrix of `½ D₂ + diag(V)`.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    potential: GridFunction,
    laplacian: Laplacian,
    matrix: DMatrix<f64>,
}

impl OperatorMatrix {
    pub fn grid(&self) -> PeriodicGrid {
        self.potential.grid()
    }

    pub fn potential(&self) -> &GridFunction {
        &self.potential
    }

    pub fn laplacian(&self) -> Laplacian {
        self.laplacian
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        self.potential.same_grid(f)?;
        let v = &self.matrix * DVector::from_column_slice(f.values());
        GridFunction::new(self.grid(), v.as_slice().to_vec())
    }

    /// Largest eigenvalue bound from above: `max V` (the Laplacian part is
    /// negative semidefinite).
    pub fn upper_spectral_bound(&self) -> f64 {
        self.potential.max()
    }
}

/// `½ D₂ + diag(V)` with the second-difference Laplacian.
pub fn build_generator(potential: &GridFunction) -> OperatorMatrix {
    build_generator_with(potential, Laplacian::SecondDifference)
}

pub fn build_generator_with(potential: &GridFunction, laplacian: Laplacian) -> OperatorMatrix {
    let grid = potential.grid();
    let n = grid.n();
    let c = laplacian_stencil(grid, laplacian);
    let v = potential.values();
    let matrix = DMatrix::from_fn(n, n, |i, j| {
        let d = 0.5 * c[(i + n - j) % n];
        if i == j {
            d + v[i]
        } else {
            d
        }
    });
    OperatorMatrix {
        potential: potential.clone(),
        laplacian,
        matrix,
    }
}

/// Principal eigenpair of `½ d²/dx² + V` together with derived quantities.
#[derive(Debug, Clone)]
pub struct EigenSolution {
    /// Principal (largest) eigenvalue `λ_V`.
    pub lambda: f64,
    /// Positive eigenfunction, normalized to `∫ F² dx = 1`.
    pub f: GridFunction,
    /// `∫ F² dx`, equal to one up to roundoff.
    pub gamma: f64,
    /// `(log F)'`.
    pub drift: GridFunction,
    /// `λ_V` minus the second eigenvalue.
    pub spectral_gap: f64,
    /// The potential the eigenpair belongs to.
    pub potential: GridFunction,
    pub laplacian: Laplacian,
}

impl EigenSolution {
    pub fn grid(&self) -> PeriodicGrid {
        self.f.grid()
    }

    /// `log F` at the nodes.
    pub fn log_f(&self) -> GridFunction {
        GridFunction::from_raw(self.grid(), self.f.values().iter().map(|v| v.ln()).collect())
    }
}

const EIGEN_RESIDUAL_TOL: f64 = 1e-9;
const GAP_FLOOR: f64 = 1e-12;

pub fn principal_eigenpair(op: &OperatorMatrix) -> Result<EigenSolution> {
    let grid = op.grid();
    let n = grid.n();
    let h = grid.h();
    let eig = SymmetricEigen::new(op.matrix.clone());

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = order[0];
    let spectral_gap = eig.eigenvalues[top] - eig.eigenvalues[order[1]];
    if !(spectral_gap > GAP_FLOOR) {
        return Err(Error::DegenerateGap { gap: spectral_gap });
    }

    let mut vec: Vec<f64> = eig.eigenvectors.column(top).iter().copied().collect();
    if vec.iter().sum::<f64>() < 0.0 {
        vec.iter_mut().for_each(|v| *v = -*v);
    }
    polish(&op.matrix, eig.eigenvalues[top] + 1e-2 * spectral_gap, &mut vec);
    if let Some((node, &value)) = vec.iter().enumerate().find(|(_, &v)| v <= 0.0) {
        return Err(Error::PositivityViolation { node, value });
    }
    let norm = (h * vec.iter().map(|v| v * v).sum::<f64>()).sqrt();
    vec.iter_mut().for_each(|v| *v /= norm);

    let f = GridFunction::new(grid, vec)?;
    // Rayleigh quotient is more accurate than the raw eigenvalue
    let af = op.apply(&f)?;
    let lambda = dot(f.values(), af.values()) / dot(f.values(), f.values());

    let residual = af
        .values()
        .iter()
        .zip(f.values())
        .fold(0.0f64, |m, (a, b)| m.max((a - lambda * b).abs()))
        / f.max_abs();
    let tol = EIGEN_RESIDUAL_TOL.max(64.0 * f64::EPSILON * matrix_inf_norm(&op.matrix));
    if residual > tol {
        return Err(Error::Inconsistent {
            what: "eigenpair residual",
            discrepancy: residual,
            tolerance: tol,
        });
    }

    let gamma = (&f * &f).integrate();
    let drift = f.map(f64::ln)?.derivative(1)?;
    Ok(EigenSolution {
        lambda,
        f,
        gamma,
        drift,
        spectral_gap,
        potential: op.potential.clone(),
        laplacian: op.laplacian,
    })
}

/// Convenience: build the generator for `potential` and solve it.
pub fn solve(potential: &GridFunction, laplacian: Laplacian) -> Result<EigenSolution> {
    principal_eigenpair(&build_generator_with(potential, laplacian))
}

/// Two steps of inverse iteration with `(shift I - A)`, shift just above the
/// top eigenvalue. The dense solver leaves roundoff of order `ε‖A‖` spread over
/// all modes; this damps the high-wavenumber part, which derivatives of
/// `log F` would otherwise amplify.
fn polish(matrix: &DMatrix<f64>, shift: f64, vec: &mut [f64]) {
    let n = vec.len();
    let lu = (DMatrix::<f64>::identity(n, n) * shift - matrix).lu();
    let mut v = DVector::from_column_slice(vec);
    for _ in 0..2 {
        match lu.solve(&v) {
            Some(next) if next.iter().all(|x| x.is_finite()) => {
                let norm = next.norm();
                v = next / norm;
            }
            _ => return,
        }
    }
    if v.sum() < 0.0 {
        v.neg_mut();
    }
    vec.copy_from_slice(v.as_slice());
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn matrix_inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Density of `μ_V = F² / γ_V`.
pub fn gibbs_density(e: &EigenSolution) -> GridFunction {
    (&e.f * &e.f).scale(1.0 / e.gamma)
}

/// Density of the eigenprobability `ν_V`, proportional to `F`.
pub fn eigen_probability(e: &EigenSolution) -> GridFunction {
    e.f.scale(1.0 / e.f.integrate())
}

/// Number of sign changes of the forward difference around the cycle.
pub fn critical_point_count(f: &GridFunction) -> usize {
    let v = f.values();
    let n = v.len();
    let scale = f.max_abs().max(f64::MIN_POSITIVE);
    let tol = 1e-13 * scale;
    let signs: Vec<i8> = (0..n)
        .filter_map(|i| {
            let d = v[(i + 1) % n] - v[i];
            if d > tol {
                Some(1)
            } else if d < -tol {
                Some(-1)
            } else {
                None
            }
        })
        .collect();
    if signs.is_empty() {
        return 0;
    }
    (0..signs.len())
        .filter(|&i| signs[i] != signs[(i + 1) % signs.len()])
        .count()
}
