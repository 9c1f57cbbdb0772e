//! Probability densities on a grid and the standard profiles used as
//! marginals.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{integrate, Field, Grid};

/// Default positivity floor applied after normalization.
pub const DEFAULT_FLOOR: f64 = 1e-13;

/// Boundary values above this fraction of the peak are rejected on a line.
pub const BOUNDARY_TOLERANCE: f64 = 1e-12;

/// Strictly positive, unit-mass density (units 1/length).
#[derive(Clone, Debug, PartialEq)]
pub struct Density {
    field: Field,
    floor: f64,
}

impl Density {
    /// Normalizes `field` to unit mass and clamps it at [`DEFAULT_FLOOR`].
    pub fn new(field: Field) -> Result<Self> {
        Self::with_floor(field, DEFAULT_FLOOR)
    }

    pub fn with_floor(field: Field, floor: f64) -> Result<Self> {
        if !(floor > 0.0 && floor.is_finite()) {
            return Err(Error::InvalidDensity(format!("floor {floor} must be positive")));
        }
        if let Some(i) = field.values().iter().position(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidDensity(format!(
                "value {} at node {i} is negative or not finite",
                field.values()[i]
            )));
        }
        let mass = integrate(&field);
        if !(mass > 0.0) {
            return Err(Error::InvalidDensity("zero total mass".into()));
        }
        let grid = field.grid().clone();
        let mut values: Vec<f64> = field.into_values().into_iter().map(|v| (v / mass).max(floor)).collect();
        let mass = values.iter().sum::<f64>() * grid.h();
        values.iter_mut().for_each(|v| *v = (*v / mass).max(floor));
        Ok(Density { field: Field::raw(&grid, values), floor })
    }

    /// Wraps already-normalized positive values without re-flooring.
    pub(crate) fn from_positive(field: Field, floor: f64) -> Result<Self> {
        if let Some(i) = field.values().iter().position(|&v| !(v > 0.0)) {
            return Err(Error::InvalidDensity(format!("value {} at node {i} is not positive", field.values()[i])));
        }
        let floor = field.values().iter().cloned().fold(floor, f64::min);
        Ok(Density { field, floor })
    }

    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        Self::new(Field::new(grid, values)?)
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(Field::from_fn(grid, f))
    }

    pub fn uniform(grid: &Grid) -> Self {
        Density { field: Field::constant(grid, 1.0 / grid.length()), floor: DEFAULT_FLOOR }
    }

    /// Gaussian profile. On a circle the periodic images are summed
    /// (wrapped normal), with `mean` taken modulo the length.
    pub fn gaussian(grid: &Grid, mean: f64, std: f64) -> Result<Self> {
        if !(std > 0.0) {
            return Err(Error::InvalidDensity(format!("standard deviation {std} must be positive")));
        }
        let norm = 1.0 / (std * (2.0 * PI).sqrt());
        let bump = |d: f64| norm * (-0.5 * (d / std).powi(2)).exp();
        if grid.is_circle() {
            let l = grid.length();
            let images = (8.0 * std / l).ceil() as i64 + 1;
            Self::from_fn(grid, |x| (-images..=images).map(|j| bump(x - mean + j as f64 * l)).sum())
        } else {
            Self::from_fn(grid, |x| bump(x - mean))
        }
    }

    /// Von Mises profile `exp(κ cos(2π(x − mean)/L))` on a circle.
    pub fn von_mises(grid: &Grid, mean: f64, kappa: f64) -> Result<Self> {
        if !grid.is_circle() {
            return Err(Error::InvalidDensity("von Mises profiles need a circle grid".into()));
        }
        let w = 2.0 * PI / grid.length();
        Self::from_fn(grid, |x| (kappa * (w * (x - mean)).cos()).exp())
    }

    /// Gibbs density `∝ exp(−2U/a)`, the stationary law of
    /// `(a/2)Δ − ∇U·∇`.
    pub fn gibbs(potential: &Field, a: f64) -> Result<Self> {
        let min = potential.values().iter().cloned().fold(f64::INFINITY, f64::min);
        Self::new(potential.map(|u| (-2.0 * (u - min) / a).exp()))
    }

    /// Convex combination of densities on one grid.
    pub fn mixture(parts: &[(f64, Density)]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::InvalidDensity("empty mixture".into()))?;
        let grid = first.1.grid().clone();
        let mut acc = vec![0.0; grid.n()];
        for (w, d) in parts {
            grid.ensure_same(d.grid())?;
            if !(*w >= 0.0) {
                return Err(Error::InvalidDensity(format!("mixture weight {w} is negative")));
            }
            acc.iter_mut().zip(d.values()).for_each(|(a, v)| *a += w * v);
        }
        Self::from_values(&grid, acc)
    }

    pub fn grid(&self) -> &Grid {
        self.field.grid()
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn values(&self) -> &[f64] {
        self.field.values()
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    /// Node masses `ρ_i h`.
    pub fn masses(&self) -> Vec<f64> {
        let h = self.grid().h();
        self.values().iter().map(|v| v * h).collect()
    }

    /// Pointwise `log ρ`, clamped at the floor.
    pub fn log(&self) -> Field {
        let floor = self.floor;
        self.field.map(|v| v.max(floor).ln())
    }

    /// Pointwise `√ρ`.
    pub fn sqrt(&self) -> Field {
        self.field.map(f64::sqrt)
    }

    /// Rejects densities that do not vanish at the ends of a line grid.
    pub fn require_vanishing_boundary(&self) -> Result<()> {
        if self.grid().is_circle() {
            return Ok(());
        }
        let v = self.values();
        let max = v.iter().cloned().fold(0.0, f64::max);
        let edge = v[0].max(v[v.len() - 1]);
        if edge > BOUNDARY_TOLERANCE * max && edge > self.floor {
            return Err(Error::InvalidDensity(format!(
                "boundary value {edge:e} exceeds {BOUNDARY_TOLERANCE:e} of the peak {max:e}"
            )));
        }
        Ok(())
    }

    /// L¹ distance ∫|ρ − σ| dx.
    pub fn l1_distance(&self, other: &Density) -> Result<f64> {
        self.grid().ensure_same(other.grid())?;
        Ok(self.values().iter().zip(other.values()).map(|(a, b)| (a - b).abs()).sum::<f64>() * self.grid().h())
    }

    /// Central moments of a density on a line: (mean, variance, excess kurtosis).
    pub fn moments(&self) -> (f64, f64, f64) {
        let x = self.grid().nodes();
        let h = self.grid().h();
        let m: f64 = x.iter().zip(self.values()).map(|(x, p)| x * p).sum::<f64>() * h;
        let central = |k: i32| x.iter().zip(self.values()).map(|(x, p)| (x - m).powi(k) * p).sum::<f64>() * h;
        let var = central(2);
        (m, var, central(4) / (var * var) - 3.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes_and_floors() {
        let g = Grid::line(-8.0, 8.0, 128).unwrap();
        let d = Density::gaussian(&g, 0.0, 1.0).unwrap();
        assert!((integrate(d.field()) - 1.0).abs() < 1e-12);
        assert!(d.values().iter().all(|&v| v >= DEFAULT_FLOOR));
        d.require_vanishing_boundary().unwrap();
    }

    #[test]
    fn rejects_negative_and_wide_densities() {
        let g = Grid::line(-1.0, 1.0, 32).unwrap();
        assert!(Density::from_values(&g, vec![-1.0; 32]).is_err());
        assert!(Density::from_values(&g, vec![0.0; 32]).is_err());
        let wide = Density::gaussian(&g, 0.0, 1.0).unwrap();
        assert!(wide.require_vanishing_boundary().is_err());
    }

    #[test]
    fn gaussian_moments() {
        let g = Grid::line(-10.0, 10.0, 512).unwrap();
        let (m, v, k) = Density::gaussian(&g, 0.5, 1.3).unwrap().moments();
        assert!((m - 0.5).abs() < 1e-10);
        assert!((v - 1.69).abs() < 1e-10);
        assert!(k.abs() < 1e-8);
    }

    #[test]
    fn wrapped_gaussian_is_periodic() {
        let g = Grid::circle(2.0 * PI, 64).unwrap();
        let a = Density::gaussian(&g, 0.0, 2.0).unwrap();
        let b = Density::gaussian(&g, 2.0 * PI, 2.0).unwrap();
        assert!(a.l1_distance(&b).unwrap() < 1e-12);
    }
}
