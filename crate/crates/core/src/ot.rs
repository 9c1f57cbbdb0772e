//! Displacement interpolation and the Benamou–Brenier action.
//!
//! The monotone map `T = F_ν⁻¹∘F_μ` pushes `μ0` to `μ1`; the geodesic is the
//! pushforward of `μ0` under `X_t = (1 − t)id + tT`, whose density at
//! `y = X_t(x)` is `1 / ((1 − t)/μ0(x) + t/μ1(T(x)))`. On a circle the
//! problem is cut open at the best cut of the W₂ search and `T` is the
//! periodically lifted map with the optimal level shift.

use rayon::prelude::*;

use crate::density::Density;
use crate::error::{Error, Result};
use crate::functionals::{cdf_of, circle_w2_squared, wasserstein2};
use crate::geometry::{covariant_accel, inner, norm, FlowCurve};
use crate::grid::{Field, Grid};
use crate::quantile::LiftedMap;

/// Geodesic between two densities on the time grid `t_k = k/M`.
#[derive(Clone, Debug)]
pub struct DisplacementCurve {
    pub times: Vec<f64>,
    pub rho: Vec<Density>,
    pub velocity: Vec<Field>,
    /// `T(x_i)` at every node, in the unwrapped coordinates of the cut.
    pub map: Vec<f64>,
    /// Cut node on a circle.
    pub cut: Option<usize>,
    /// Level shift of the lifted circular map (0 on a line).
    pub shift: f64,
    pub w2: f64,
}

impl DisplacementCurve {
    pub fn curve(&self) -> Result<FlowCurve> {
        FlowCurve::new(self.times.clone(), self.rho.clone(), self.velocity.clone())
    }
}

/// Six-point Lagrange interpolation of nodal values (periodic on a circle,
/// with the stencil kept inside the line otherwise).
fn interpolate(grid: &Grid, values: &[f64], x: f64) -> f64 {
    let n = values.len();
    let x0 = grid.nodes()[0];
    let h = grid.h();
    let s = (x - x0) / h;
    let base = s.floor() as isize - 2;
    let base = if grid.is_circle() { base } else { base.clamp(0, n as isize - 6) };
    let at = |j: isize| {
        if grid.is_circle() {
            values[j.rem_euclid(n as isize) as usize]
        } else {
            values[j as usize]
        }
    };
    (0..6)
        .map(|a| {
            let ja = base + a;
            let weight: f64 = (0..6)
                .filter(|&b| b != a)
                .map(|b| (s - (base + b) as f64) / (a - b) as f64)
                .product();
            weight * at(ja)
        })
        .sum()
}

/// Solves `(1 − t)x + tT(x) = y` for `x` within the cut-open interval.
fn invert_interpolant(map: &LiftedMap, t: f64, y: f64) -> f64 {
    let (mut lo, mut hi) = (map.from.coord(0), map.from.coord(map.from.len() - 1));
    let mut x = y.clamp(lo, hi);
    for _ in 0..200 {
        let tx = map.push(x);
        let r = (1.0 - t) * x + t * tx - y;
        if r > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        if r.abs() <= 1e-15 * (1.0 + y.abs()) || hi - lo <= 1e-15 * (1.0 + y.abs()) {
            break;
        }
        let (d0, d1) = map.densities(x, tx);
        let slope = (1.0 - t) + if d1 > 0.0 { t * d0 / d1 } else { f64::INFINITY };
        let next = x - r / slope;
        x = if next.is_finite() && next > lo && next < hi { next } else { 0.5 * (lo + hi) };
    }
    x
}

/// Displacement interpolation between `mu0` and `mu1` on `m` steps.
pub fn displacement_curve(mu0: &Density, mu1: &Density, m: usize) -> Result<DisplacementCurve> {
    let grid = mu0.grid();
    grid.ensure_same(mu1.grid())?;
    if m < 4 {
        return Err(Error::InvalidArgument(format!("displacement curve needs M >= 4, got {m}")));
    }
    let n = grid.n();
    let circular = grid.is_circle().then(|| circle_w2_squared(mu0, mu1));
    let cut = circular.map(|c| c.node);
    let from = cdf_of(mu0, cut);
    let to = cdf_of(mu1, cut);
    let lifted = LiftedMap { from: &from, to: &to, shift: circular.map_or(0.0, |c| c.shift) };
    let node = |j: usize| cut.map_or(j, |c| (c + j) % n);
    let log0: Vec<f64> = mu0.values().iter().map(|v| v.ln()).collect();
    let log1: Vec<f64> = mu1.values().iter().map(|v| v.ln()).collect();
    let mut map = vec![0.0; n];
    for j in 0..n {
        map[node(j)] = lifted.push_node(j);
    }
    let (start, length) = (from.coord(0), lifted.length());
    let times: Vec<f64> = (0..=m).map(|k| k as f64 / m as f64).collect();
    let rho = times
        .par_iter()
        .enumerate()
        .map(|(k, &t)| {
            if k == 0 {
                return Ok(mu0.clone());
            }
            if k == m {
                return Ok(mu1.clone());
            }
            let image_start = (1.0 - t) * start + t * lifted.push(start);
            let mut values = vec![0.0; n];
            for j in 0..n {
                let mut y = from.coord(j);
                if cut.is_some() {
                    y = image_start + (y - image_start).rem_euclid(length);
                }
                let x = invert_interpolant(&lifted, t, y);
                let tx = lifted.push(x);
                let d0 = interpolate(grid, &log0, x).exp();
                let d1 = interpolate(grid, &log1, tx).exp();
                values[node(j)] = 1.0 / ((1.0 - t) / d0 + t / d1);
            }
            Density::new(Field::raw(grid, values))
        })
        .collect::<Result<Vec<_>>>()?;
    let curve = FlowCurve::from_densities(times.clone(), rho)?;
    Ok(DisplacementCurve {
        times,
        rho: curve.rho,
        velocity: curve.velocity,
        map,
        cut,
        shift: lifted.shift,
        w2: circular.map_or_else(|| wasserstein2(mu0, mu1), |c| Ok(c.w2_squared.max(0.0).sqrt()))?,
    })
}

/// Benamou–Brenier action `∫∫ |v|² ρ dx dt` by the trapezoid rule in time.
pub fn bb_action(curve: &FlowCurve) -> f64 {
    let m = curve.steps();
    let dt = curve.dt();
    (0..=m)
        .map(|k| {
            let w = if k == 0 || k == m { 0.5 } else { 1.0 };
            w * inner(&curve.rho[k], &curve.velocity[k], &curve.velocity[k])
        })
        .sum::<f64>()
        * dt
}

/// Speeds `⟨v, v⟩` at or below this mark a static curve.
pub const STATIC_SPEED: f64 = 1e-20;

/// Speed profile and geodesic acceleration along a displacement curve.
#[derive(Clone, Debug, PartialEq)]
pub struct SpeedReport {
    /// `⟨v_k, v_k⟩_{ρ_k}` for every sample.
    pub speeds: Vec<f64>,
    /// `max/min − 1` of the speeds (0 for a static curve).
    pub speed_spread: f64,
    /// `‖∂_t v + ½∇|v|²‖_{L²(ρ_k)}` at interior samples.
    pub acceleration: Vec<f64>,
    pub max_acceleration: f64,
}

pub fn constant_speed_check(curve: &DisplacementCurve) -> Result<SpeedReport> {
    let flow = curve.curve()?;
    let speeds: Vec<f64> = flow.rho.iter().zip(&flow.velocity).map(|(r, v)| inner(r, v, v)).collect();
    let max = speeds.iter().cloned().fold(0.0, f64::max);
    let min = speeds.iter().cloned().fold(f64::INFINITY, f64::min);
    let speed_spread = if max <= STATIC_SPEED { 0.0 } else { max / min - 1.0 };
    let acceleration = (1..flow.steps())
        .map(|k| Ok(norm(&flow.rho[k], &covariant_accel(&flow, k)?)))
        .collect::<Result<Vec<_>>>()?;
    let max_acceleration = acceleration.iter().cloned().fold(0.0, f64::max);
    Ok(SpeedReport { speeds, speed_spread, acceleration, max_acceleration })
}
