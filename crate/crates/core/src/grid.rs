//! Spatial grids and the discrete differential operators every other module
//! builds on.
//!
//! Two domains are supported. A [`Domain::Circle`] is treated spectrally: the
//! gradient and Laplacian are Fourier multipliers, so they are exact for
//! band-limited fields. A [`Domain::Line`] uses fourth-order central finite
//! differences with one-sided closures at the end nodes; fields living on it
//! are expected to vanish near both ends.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Smallest admissible number of nodes.
pub const MIN_NODES: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Domain {
    /// Interval `[x_min, x_max)` with vanishing tails.
    Line { x_min: f64, x_max: f64 },
    /// Periodic interval of the given length, nodes start at 0.
    Circle { length: f64 },
}

struct Spectral {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Angular wavenumber of each FFT bin.
    wavenumbers: Vec<f64>,
}

struct GridInner {
    domain: Domain,
    n: usize,
    h: f64,
    nodes: Vec<f64>,
    spectral: Option<Spectral>,
}

/// A uniform 1-D grid. Cloning is cheap (shared interior).
#[derive(Clone)]
pub struct Grid(Arc<GridInner>);

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("domain", &self.0.domain)
            .field("n", &self.0.n)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || (self.0.domain == other.0.domain && self.0.n == other.0.n)
    }
}

impl Grid {
    pub fn line(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite() && x_max > x_min) {
            return Err(Error::InvalidGrid(format!("empty interval [{x_min}, {x_max})")));
        }
        Self::build(Domain::Line { x_min, x_max }, n)
    }

    pub fn circle(length: f64, n: usize) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!("circle length {length} must be positive")));
        }
        if !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!("circle grids need a power-of-two size, got {n}")));
        }
        Self::build(Domain::Circle { length }, n)
    }

    fn build(domain: Domain, n: usize) -> Result<Self> {
        if n < MIN_NODES {
            return Err(Error::InvalidGrid(format!("need at least {MIN_NODES} nodes, got {n}")));
        }
        let (start, h, spectral) = match domain {
            Domain::Line { x_min, x_max } => (x_min, (x_max - x_min) / n as f64, None),
            Domain::Circle { length } => {
                let mut planner = FftPlanner::new();
                let base = 2.0 * std::f64::consts::PI / length;
                let wavenumbers = (0..n)
                    .map(|j| {
                        let k = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
                        k * base
                    })
                    .collect();
                let spectral = Spectral {
                    forward: planner.plan_fft_forward(n),
                    inverse: planner.plan_fft_inverse(n),
                    wavenumbers,
                };
                (0.0, length / n as f64, Some(spectral))
            }
        };
        let nodes = (0..n).map(|i| start + i as f64 * h).collect();
        Ok(Grid(Arc::new(GridInner { domain, n, h, nodes, spectral })))
    }

    pub fn domain(&self) -> Domain {
        self.0.domain
    }

    pub fn n(&self) -> usize {
        self.0.n
    }

    pub fn h(&self) -> f64 {
        self.0.h
    }

    pub fn nodes(&self) -> &[f64] {
        &self.0.nodes
    }

    pub fn is_circle(&self) -> bool {
        matches!(self.0.domain, Domain::Circle { .. })
    }

    /// Total length of the domain.
    pub fn length(&self) -> f64 {
        self.0.h * self.0.n as f64
    }

    /// Same domain with `factor` times as many nodes.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        Self::build(self.0.domain, self.0.n * factor)
    }

    pub(crate) fn ensure_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    fn spectral(&self) -> &Spectral {
        self.0.spectral.as_ref().expect("spectral operators exist only on circle grids")
    }

    /// Applies a Fourier multiplier `m(k)` to real nodal values.
    pub(crate) fn fourier_multiply(&self, values: &[f64], m: impl Fn(usize, f64) -> Complex64) -> Vec<f64> {
        let sp = self.spectral();
        let n = self.n();
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        sp.forward.process(&mut buf);
        for (j, c) in buf.iter_mut().enumerate() {
            *c *= m(j, sp.wavenumbers[j]);
        }
        sp.inverse.process(&mut buf);
        let scale = 1.0 / n as f64;
        buf.iter().map(|c| c.re * scale).collect()
    }

    /// Complex forward/inverse transforms for wave functions on a circle.
    pub(crate) fn fft_complex(&self, buf: &mut [Complex64], inverse: bool) {
        let sp = self.spectral();
        if inverse {
            sp.inverse.process(buf);
            let scale = 1.0 / self.n() as f64;
            buf.iter_mut().for_each(|c| *c *= scale);
        } else {
            sp.forward.process(buf);
        }
    }

    pub(crate) fn wavenumbers(&self) -> &[f64] {
        &self.spectral().wavenumbers
    }

    /// Raw first derivative of nodal values.
    pub fn derivative(&self, values: &[f64]) -> Vec<f64> {
        match self.0.domain {
            Domain::Circle { .. } => {
                let nyquist = self.n() / 2;
                self.fourier_multiply(values, |j, k| {
                    if j == nyquist {
                        Complex64::new(0.0, 0.0)
                    } else {
                        Complex64::new(0.0, k)
                    }
                })
            }
            Domain::Line { .. } => fd_first(values, self.h()),
        }
    }

    /// Raw second derivative of nodal values.
    pub fn second_derivative(&self, values: &[f64]) -> Vec<f64> {
        match self.0.domain {
            Domain::Circle { .. } => self.fourier_multiply(values, |_, k| Complex64::new(-k * k, 0.0)),
            Domain::Line { .. } => fd_second(values, self.h()),
        }
    }

    /// Fourth-order finite-difference derivative on either domain (periodic
    /// wrap on the circle). Used for fields that are smooth where it matters
    /// but not globally, where a Fourier derivative would ring.
    pub fn local_derivative(&self, values: &[f64]) -> Vec<f64> {
        match self.0.domain {
            Domain::Line { .. } => fd_first(values, self.h()),
            Domain::Circle { .. } => {
                let n = values.len();
                let h = self.h();
                (0..n)
                    .map(|i| {
                        let at = |o: isize| values[(i as isize + o).rem_euclid(n as isize) as usize];
                        (at(-2) - 8.0 * at(-1) + 8.0 * at(1) - at(2)) / (12.0 * h)
                    })
                    .collect()
            }
        }
    }

    /// Antiderivative of nodal values.
    ///
    /// On a circle the mean of `values` is dropped and the periodic
    /// antiderivative with zero mean is returned. On a line the result is the
    /// cumulative integral from `x_min` (fourth-order cell rule).
    pub fn antiderivative(&self, values: &[f64]) -> Vec<f64> {
        match self.0.domain {
            Domain::Circle { .. } => {
                let nyquist = self.n() / 2;
                self.fourier_multiply(values, |j, k| {
                    if j == 0 || j == nyquist {
                        Complex64::new(0.0, 0.0)
                    } else {
                        Complex64::new(0.0, -1.0 / k)
                    }
                })
            }
            Domain::Line { .. } => {
                let cells = cell_integrals_line(values, self.h());
                let mut out = Vec::with_capacity(values.len());
                let mut acc = 0.0;
                out.push(0.0);
                for c in cells {
                    acc += c;
                    out.push(acc);
                }
                out
            }
        }
    }

    /// Integral of the field over each cell `[x_i, x_{i+1}]`. On a circle the
    /// last cell wraps to node 0; on a line there are `n - 1` cells.
    pub fn cell_integrals(&self, values: &[f64]) -> Vec<f64> {
        match self.0.domain {
            Domain::Line { .. } => cell_integrals_line(values, self.h()),
            Domain::Circle { .. } => {
                let n = values.len();
                let mean = values.iter().sum::<f64>() / n as f64;
                let g = self.antiderivative(values);
                (0..n).map(|i| mean * self.h() + g[(i + 1) % n] - g[i]).collect()
            }
        }
    }
}

fn fd_first(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let mut d = vec![0.0; n];
    let s = 1.0 / (12.0 * h);
    d[0] = (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]) * s;
    d[1] = (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]) * s;
    for i in 2..n - 2 {
        d[i] = (f[i - 2] - 8.0 * f[i - 1] + 8.0 * f[i + 1] - f[i + 2]) * s;
    }
    let m = n - 1;
    d[m] = (25.0 * f[m] - 48.0 * f[m - 1] + 36.0 * f[m - 2] - 16.0 * f[m - 3] + 3.0 * f[m - 4]) * s;
    d[m - 1] = (3.0 * f[m] + 10.0 * f[m - 1] - 18.0 * f[m - 2] + 6.0 * f[m - 3] - f[m - 4]) * s;
    d
}

fn fd_second(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let mut d = vec![0.0; n];
    let s = 1.0 / (12.0 * h * h);
    let edge0 = |g: &dyn Fn(usize) -> f64| {
        (45.0 * g(0) - 154.0 * g(1) + 214.0 * g(2) - 156.0 * g(3) + 61.0 * g(4) - 10.0 * g(5)) * s
    };
    let edge1 = |g: &dyn Fn(usize) -> f64| (10.0 * g(0) - 15.0 * g(1) - 4.0 * g(2) + 14.0 * g(3) - 6.0 * g(4) + g(5)) * s;
    d[0] = edge0(&|j| f[j]);
    d[1] = edge1(&|j| f[j]);
    d[n - 1] = edge0(&|j| f[n - 1 - j]);
    d[n - 2] = edge1(&|j| f[n - 1 - j]);
    for i in 2..n - 2 {
        d[i] = (-f[i - 2] + 16.0 * f[i - 1] - 30.0 * f[i] + 16.0 * f[i + 1] - f[i + 2]) * s;
    }
    d
}

fn cell_integrals_line(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let s = h / 24.0;
    (0..n - 1)
        .map(|i| {
            if i == 0 {
                (9.0 * f[0] + 19.0 * f[1] - 5.0 * f[2] + f[3]) * s
            } else if i == n - 2 {
                (f[n - 4] - 5.0 * f[n - 3] + 19.0 * f[n - 2] + 9.0 * f[n - 1]) * s
            } else {
                (-f[i - 1] + 13.0 * f[i] + 13.0 * f[i + 1] - f[i + 2]) * s
            }
        })
        .collect()
}

/// Real nodal values on a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(Error::InvalidField(format!("expected {} values, got {}", grid.n(), values.len())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidField(format!("non-finite value at node {i}")));
        }
        Ok(Field { grid: grid.clone(), values })
    }

    /// Internal constructor for values known to be finite.
    pub(crate) fn raw(grid: &Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n());
        Field { grid: grid.clone(), values }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64) -> f64) -> Self {
        Field::raw(grid, grid.nodes().iter().map(|&x| f(x)).collect())
    }

    pub fn zeros(grid: &Grid) -> Self {
        Field::raw(grid, vec![0.0; grid.n()])
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        Field::raw(grid, vec![c; grid.n()])
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field::raw(&self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        debug_assert!(self.grid == other.grid);
        Field::raw(&self.grid, self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect())
    }

    pub fn scale(&self, c: f64) -> Field {
        self.map(|v| c * v)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

impl Add for &Field {
    type Output = Field;
    fn add(self, rhs: &Field) -> Field {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub for &Field {
    type Output = Field;
    fn sub(self, rhs: &Field) -> Field {
        self.zip_map(rhs, |a, b| a - b)
    }
}

/// Pointwise product.
impl Mul for &Field {
    type Output = Field;
    fn mul(self, rhs: &Field) -> Field {
        self.zip_map(rhs, |a, b| a * b)
    }
}

impl Neg for &Field {
    type Output = Field;
    fn neg(self) -> Field {
        self.map(|v| -v)
    }
}

/// Discrete ∇f.
pub fn gradient(f: &Field) -> Field {
    Field::raw(f.grid(), f.grid().derivative(f.values()))
}

/// Discrete ∇·(wρ), with the same stencil as [`gradient`] applied to the product.
pub fn divergence(w: &Field, rho: &Field) -> Result<Field> {
    w.grid().ensure_same(rho.grid())?;
    Ok(gradient(&(w * rho)))
}

/// Discrete Δf.
pub fn laplacian(f: &Field) -> Field {
    Field::raw(f.grid(), f.grid().second_derivative(f.values()))
}

/// Rectangle-rule quadrature Σ f_i h.
pub fn integrate(f: &Field) -> f64 {
    f.values().iter().sum::<f64>() * f.grid().h()
}
