//! Periodic grids on the unit circle `[0, 1)` and the functions sampled on them.
//!
//! Calculus on a [`GridFunction`] is spectral: derivatives go through the
//! discrete Fourier transform and integrals use the uniform rectangle rule,
//! which on a periodic grid coincides with the trapezoid rule.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Uniform grid `x_i = i / n`, `i = 0..n`, with `x_n` identified with `x_0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PeriodicGrid {
    n: usize,
}

impl PeriodicGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 4 || !n.is_multiple_of(2) {
            return Err(Error::GridSize { n });
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 / self.n as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// Highest wavenumber that can be sampled without aliasing.
    pub fn max_wavenumber(&self) -> u32 {
        (self.n / 2 - 1) as u32
    }

    /// Index of the cell containing `x` and the fractional offset inside it.
    #[inline]
    pub(crate) fn locate(&self, x: f64) -> (usize, f64) {
        let s = wrap(x) * self.n as f64;
        let i = s.floor();
        let theta = s - i;
        let i = i as usize;
        if i >= self.n {
            (0, 0.0)
        } else {
            (i, theta)
        }
    }
}

/// Maps a real number onto the circle `[0, 1)`.
#[inline]
pub fn wrap(x: f64) -> f64 {
    let y = x - x.floor();
    // x slightly below an integer can round up to exactly 1.0
    if y >= 1.0 {
        0.0
    } else {
        y
    }
}

/// A real function sampled at the nodes of a [`PeriodicGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: PeriodicGrid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: PeriodicGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(Error::LengthMismatch {
                expected: grid.n(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "grid function",
            });
        }
        Ok(Self { grid, values })
    }

    /// Only for values already known to be finite and of the right length.
    pub(crate) fn from_raw(grid: PeriodicGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n());
        Self { grid, values }
    }

    pub fn from_fn(grid: PeriodicGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.nodes().into_iter().map(f).collect())
    }

    pub fn constant(grid: PeriodicGrid, c: f64) -> Result<Self> {
        Self::new(grid, vec![c; grid.n()])
    }

    pub fn grid(&self) -> PeriodicGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.same_grid(other)?;
        Self::new(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::from_raw(self.grid, self.values.iter().map(|v| c * v).collect())
    }

    pub fn same_grid(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch {
                left: self.grid.n(),
                right: other.grid.n(),
            });
        }
        Ok(())
    }

    /// Rotation by `m` nodes: the result at node `i` is the value at node `i - m`,
    /// i.e. the function `x -> f(x - m h)`.
    pub fn rotated(&self, m: usize) -> Self {
        let n = self.grid.n();
        let values = (0..n).map(|i| self.values[(i + n - m % n) % n]).collect();
        Self::from_raw(self.grid, values)
    }

    /// Periodic linear interpolation at an arbitrary point of the circle.
    #[inline]
    pub fn interpolate(&self, x: f64) -> f64 {
        let (i, theta) = self.grid.locate(x);
        let j = if i + 1 == self.values.len() { 0 } else { i + 1 };
        self.values[i] * (1.0 - theta) + self.values[j] * theta
    }

    /// `h * sum(values)`.
    pub fn integrate(&self) -> f64 {
        self.grid.h() * pairwise_sum(&self.values)
    }

    /// Fourier derivative of order 1 or 2.
    pub fn derivative(&self, order: u8) -> Result<Self> {
        if !(1..=2).contains(&order) {
            return Err(crate::error::invalid(
                "order",
                format!("derivative order must be 1 or 2, got {order}"),
            ));
        }
        let n = self.grid.n();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let mut buf: Vec<Complex64> = self
            .values
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect();
        forward.process(&mut buf);
        let half = n / 2;
        for (m, c) in buf.iter_mut().enumerate() {
            let k = if m <= half {
                m as f64
            } else {
                m as f64 - n as f64
            };
            let omega = 2.0 * PI * k;
            *c = match order {
                1 if m == half => Complex64::new(0.0, 0.0),
                1 => *c * Complex64::new(0.0, omega),
                _ => *c * (-omega * omega),
            };
        }
        inverse.process(&mut buf);
        let scale = 1.0 / n as f64;
        Self::new(self.grid, buf.iter().map(|c| c.re * scale).collect())
    }
}

macro_rules! pointwise_op {
    ($trait:ident, $method:ident, $op:tt) => {
        impl $trait for &GridFunction {
            type Output = GridFunction;

            /// Panics if the operands live on different grids.
            fn $method(self, rhs: &GridFunction) -> GridFunction {
                assert_eq!(self.grid, rhs.grid, "grid mismatch");
                GridFunction::from_raw(
                    self.grid,
                    self.values
                        .iter()
                        .zip(&rhs.values)
                        .map(|(a, b)| a $op b)
                        .collect(),
                )
            }
        }
    };
}

pointwise_op!(Add, add, +);
pointwise_op!(Sub, sub, -);
pointwise_op!(Mul, mul, *);

/// One term `a cos(2 pi k x) + b sin(2 pi k x)` of a [`HarmonicSpec`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Harmonic {
    pub k: u32,
    pub a: f64,
    pub b: f64,
}

/// A finite trigonometric sum `constant + sum_k a_k cos(2 pi k x) + b_k sin(2 pi k x)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HarmonicSpec {
    pub constant: f64,
    pub harmonics: Vec<Harmonic>,
}

impl HarmonicSpec {
    pub fn new(constant: f64, harmonics: Vec<Harmonic>) -> Result<Self> {
        let spec = Self {
            constant,
            harmonics,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            harmonics: Vec::new(),
        }
    }

    /// Builds a spec from `(k, a, b)` triples.
    pub fn from_triples(constant: f64, triples: &[(u32, f64, f64)]) -> Result<Self> {
        Self::new(
            constant,
            triples
                .iter()
                .map(|&(k, a, b)| Harmonic { k, a, b })
                .collect(),
        )
    }

    fn validate(&self) -> Result<()> {
        let mut seen = Vec::with_capacity(self.harmonics.len());
        for h in &self.harmonics {
            if h.k == 0 {
                return Err(Error::ZeroWavenumber);
            }
            if seen.contains(&h.k) {
                return Err(Error::DuplicateWavenumber(h.k));
            }
            if !(h.a.is_finite() && h.b.is_finite()) {
                return Err(Error::NonFinite {
                    what: "harmonic coefficient",
                });
            }
            seen.push(h.k);
        }
        if !self.constant.is_finite() {
            return Err(Error::NonFinite {
                what: "harmonic constant",
            });
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.harmonics.iter().fold(self.constant, |acc, h| {
            let phase = 2.0 * PI * h.k as f64 * x;
            acc + h.a * phase.cos() + h.b * phase.sin()
        })
    }

    /// Coefficient-wise sum; wavenumbers present in both are combined.
    pub fn merged(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.constant += other.constant;
        for h in &other.harmonics {
            match out.harmonics.iter_mut().find(|e| e.k == h.k) {
                Some(e) => {
                    e.a += h.a;
                    e.b += h.b;
                }
                None => out.harmonics.push(*h),
            }
        }
        out
    }

    pub fn max_wavenumber(&self) -> u32 {
        self.harmonics.iter().map(|h| h.k).max().unwrap_or(0)
    }

    pub fn sample(&self, grid: PeriodicGrid) -> Result<GridFunction> {
        self.validate()?;
        if let Some(h) = self.harmonics.iter().find(|h| h.k > grid.max_wavenumber()) {
            return Err(Error::Aliasing { k: h.k, n: grid.n() });
        }
        GridFunction::from_fn(grid, |x| self.eval(x))
    }
}

/// Evaluates `spec` at every node of `grid`.
pub fn sample(spec: &HarmonicSpec, grid: PeriodicGrid) -> Result<GridFunction> {
    spec.sample(grid)
}

/// Fixed-order pairwise summation; the result depends only on the slice contents.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}
