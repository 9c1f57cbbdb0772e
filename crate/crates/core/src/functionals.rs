//! Classical functionals on densities: Shannon entropy, Fisher information,
//! potential energy, their relative versions, and the quadratic Wasserstein
//! distance.

use crate::density::Density;
use crate::error::{Error, Result};
use crate::grid::{gradient, integrate, Field};
use crate::quantile::{Cdf, LiftedMap};

/// `∇ log ρ`.
pub fn log_gradient(mu: &Density) -> Field {
    gradient(&mu.log())
}

/// `S(μ) = −∫ μ log μ dx`.
pub fn shannon_entropy(mu: &Density) -> f64 {
    -integrate(&(mu.field() * &mu.log()))
}

/// `I(μ) = ∫ |∇ log μ|² μ dx`.
pub fn fisher_information(mu: &Density) -> f64 {
    let g = log_gradient(mu);
    integrate(&(&(&g * &g) * mu.field()))
}

/// `E_U(μ) = ∫ U μ dx`.
pub fn potential_energy(mu: &Density, potential: &Field) -> Result<f64> {
    mu.grid().ensure_same(potential.grid())?;
    Ok(integrate(&(potential * mu.field())))
}

/// `D(μ‖ν) = ∫ μ log(μ/ν) dx`.
pub fn relative_entropy(mu: &Density, nu: &Density) -> Result<f64> {
    mu.grid().ensure_same(nu.grid())?;
    Ok(integrate(&(mu.field() * &(&mu.log() - &nu.log()))))
}

/// `∫ |∇ log(μ/ν)|² μ dx`.
pub fn relative_fisher(mu: &Density, nu: &Density) -> Result<f64> {
    mu.grid().ensure_same(nu.grid())?;
    let g = &log_gradient(mu) - &log_gradient(nu);
    Ok(integrate(&(&(&g * &g) * mu.field())))
}

/// CDF of a density on a line, or on a circle cut open at node `cut`
/// (coordinates unwrapped to `[x_cut, x_cut + L]`).
pub(crate) fn cdf_of(mu: &Density, cut: Option<usize>) -> Cdf {
    let g = mu.grid();
    let v = mu.values();
    match cut {
        None => {
            let cells = g.cell_integrals(v);
            Cdf::new(g.nodes().to_vec(), v, &cells)
        }
        Some(c) => {
            let n = g.n();
            let cells_all = g.cell_integrals(v);
            let coords = (0..=n).map(|j| g.nodes()[c] + j as f64 * g.h()).collect();
            let dens: Vec<f64> = (0..=n).map(|j| v[(c + j) % n]).collect();
            let cells: Vec<f64> = (0..n).map(|j| cells_all[(c + j) % n]).collect();
            Cdf::new(coords, &dens, &cells)
        }
    }
}

fn shifted_w2_squared(a: &Cdf, b: &Cdf, shift: f64) -> f64 {
    LiftedMap { from: a, to: b, shift }.cost()
}

fn line_w2_squared(mu: &Density, nu: &Density, cut: Option<usize>) -> f64 {
    shifted_w2_squared(&cdf_of(mu, cut), &cdf_of(nu, cut), 0.0)
}

/// Optimal circular transport: the circle is cut open at `node` and the
/// lifted map `T(x) = G⁻¹(F(x) − shift)` is used.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct CircleCut {
    pub node: usize,
    pub shift: f64,
    pub w2_squared: f64,
}

/// Best cut node, then a golden-section refinement of the level shift.
pub(crate) fn circle_w2_squared(mu: &Density, nu: &Density) -> CircleCut {
    let (w2_squared, node) = (0..mu.grid().n())
        .map(|c| (line_w2_squared(mu, nu, Some(c)), c))
        .fold((f64::INFINITY, 0), |best, cand| if cand.0 < best.0 { cand } else { best });
    let (a, b) = (cdf_of(mu, Some(node)), cdf_of(nu, Some(node)));
    let cost = |shift: f64| shifted_w2_squared(&a, &b, shift);
    let n = mu.grid().n();
    let bracket = [1, n - 1]
        .iter()
        .map(|&j| (a.levels(j).0 - b.levels(j).0).abs())
        .fold(0.0, f64::max)
        .mul_add(2.0, 1e-12)
        .min(0.5);
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (-bracket, bracket);
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (cost(x1), cost(x2));
    while hi - lo > 1e-13 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = cost(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = cost(x2);
        }
    }
    let shift = 0.5 * (lo + hi);
    let refined = cost(shift);
    if refined < w2_squared {
        CircleCut { node, shift, w2_squared: refined }
    } else {
        CircleCut { node, shift: 0.0, w2_squared }
    }
}

/// Quadratic Wasserstein distance `W₂(μ, ν)`.
///
/// On a line `∫₀¹ |F_μ⁻¹(s) − F_ν⁻¹(s)|² ds` is integrated by Gauss–Legendre
/// between the merged breakpoint levels of both piecewise cubic CDFs. On a
/// circle the line formula is minimized over all cut nodes and then over a
/// continuous shift of the lifted map.
pub fn wasserstein2(mu: &Density, nu: &Density) -> Result<f64> {
    mu.grid().ensure_same(nu.grid())?;
    let w2 = if mu.grid().is_circle() {
        circle_w2_squared(mu, nu).w2_squared
    } else {
        line_w2_squared(mu, nu, None)
    };
    Ok(w2.max(0.0).sqrt())
}

pub(crate) fn require_positive(x: f64, what: &str) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{what} must be positive, got {x}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use std::f64::consts::{E, PI};

    fn line() -> Grid {
        Grid::line(-8.0, 8.0, 256).unwrap()
    }

    #[test]
    fn entropy_values() {
        let c1 = Grid::circle(1.0, 32).unwrap();
        assert!(shannon_entropy(&Density::uniform(&c1)).abs() < 1e-14);
        let c2 = Grid::circle(2.0, 32).unwrap();
        assert!((shannon_entropy(&Density::uniform(&c2)) - 2f64.ln()).abs() < 1e-14);
        let g = Density::gaussian(&line(), 0.0, 1.0).unwrap();
        assert!((shannon_entropy(&g) - 0.5 * (2.0 * PI * E).ln()).abs() <= 1e-8);
    }

    #[test]
    fn fisher_values() {
        let c = Grid::circle(2.0 * PI, 64).unwrap();
        assert!(fisher_information(&Density::uniform(&c)) < 1e-20);
        let s = 1.0;
        let g = Grid::line(-8.0 * s, 8.0 * s, 256).unwrap();
        let d = Density::gaussian(&g, 0.0, s).unwrap();
        assert!((fisher_information(&d) - 1.0 / (s * s)).abs() <= 1e-6);

        let kappa = 1.3;
        let vm = Density::von_mises(&c, 0.0, kappa).unwrap();
        let oracle: f64 = c
            .nodes()
            .iter()
            .zip(vm.values())
            .map(|(x, p)| kappa * kappa * x.sin().powi(2) * p)
            .sum::<f64>()
            * c.h();
        assert!((fisher_information(&vm) - oracle).abs() <= 1e-10);
    }

    #[test]
    fn potential_energy_values() {
        let g = Grid::line(-10.0, 10.0, 512).unwrap();
        let d = Density::gaussian(&g, 0.0, 1.0).unwrap();
        assert!((potential_energy(&d, &Field::constant(&g, 3.0)).unwrap() - 3.0).abs() < 1e-12);
        assert!(potential_energy(&d, &Field::from_fn(&g, |x| x)).unwrap().abs() <= 1e-10);
        let d = Density::gaussian(&g, 0.7, 1.2).unwrap();
        let e = potential_energy(&d, &Field::from_fn(&g, |x| x * x)).unwrap();
        assert!((e - (0.49 + 1.44)).abs() <= 1e-8);
    }

    #[test]
    fn relative_entropy_gaussians() {
        let g = Grid::line(-12.0, 12.0, 512).unwrap();
        let (m1, s1, m2, s2) = (0.3, 0.9, -0.4, 1.4);
        let a = Density::gaussian(&g, m1, s1).unwrap();
        let b = Density::gaussian(&g, m2, s2).unwrap();
        let exact = (s2 / s1).ln() + (s1 * s1 + (m1 - m2) * (m1 - m2)) / (2.0 * s2 * s2) - 0.5;
        assert!((relative_entropy(&a, &b).unwrap() - exact).abs() <= 1e-7);
        assert!(relative_entropy(&a, &a).unwrap().abs() < 1e-14);
    }

    #[test]
    fn relative_fisher_values() {
        let g = Grid::line(-10.0, 10.0, 512).unwrap();
        let s = 1.1;
        let a = Density::gaussian(&g, 0.5, s).unwrap();
        let b = Density::gaussian(&g, -0.3, s).unwrap();
        let exact = 0.8f64.powi(2) / s.powi(4);
        assert!((relative_fisher(&a, &b).unwrap() - exact).abs() <= 1e-6);
        assert!(relative_fisher(&a, &a).unwrap() < 1e-20);
        let c = Grid::circle(2.0 * PI, 64).unwrap();
        let vm = Density::von_mises(&c, 1.0, 0.8).unwrap();
        let u = Density::uniform(&c);
        assert!((relative_fisher(&vm, &u).unwrap() - fisher_information(&vm)).abs() <= 1e-12);
    }

    #[test]
    fn w2_gaussians() {
        let g = line();
        let a = Density::gaussian(&g, -1.0, 1.0).unwrap();
        let b = Density::gaussian(&g, 1.5, 1.0).unwrap();
        assert!(wasserstein2(&a, &a).unwrap() < 1e-12);
        assert!((wasserstein2(&a, &b).unwrap() - 2.5).abs() <= 1e-6);
        let g = Grid::line(-12.0, 12.0, 256).unwrap();
        let a = Density::gaussian(&g, 0.0, 0.8).unwrap();
        let b = Density::gaussian(&g, 0.0, 1.5).unwrap();
        assert!((wasserstein2(&a, &b).unwrap() - 0.7).abs() <= 1e-6);
    }

    /// Lifted quantile function of `exp(κ cos(x − m))` from a fine trapezoid CDF.
    fn von_mises_quantile(mean: f64, kappa: f64) -> impl Fn(f64) -> f64 {
        let k = 200_000;
        let dx = 2.0 * PI / k as f64;
        let f = |x: f64| (kappa * (x - mean).cos()).exp();
        let mut cdf = vec![0.0; k + 1];
        for i in 0..k {
            let x = i as f64 * dx;
            cdf[i + 1] = cdf[i] + 0.5 * dx * (f(x) + f(x + dx));
        }
        let total = cdf[k];
        cdf.iter_mut().for_each(|c| *c /= total);
        move |s: f64| {
            let turns = s.floor();
            let r = s - turns;
            let i = cdf.partition_point(|&c| c <= r).clamp(1, k) - 1;
            let t = (r - cdf[i]) / (cdf[i + 1] - cdf[i]);
            (i as f64 + t) * dx + 2.0 * PI * turns
        }
    }

    #[test]
    fn w2_circle_identity_and_shift() {
        let c = Grid::circle(2.0 * PI, 64).unwrap();
        let a = Density::von_mises(&c, 0.0, 4.0).unwrap();
        assert!(wasserstein2(&a, &a).unwrap() < 1e-10);
        let b = Density::von_mises(&c, 0.5, 4.0).unwrap();
        let d = wasserstein2(&a, &b).unwrap();
        assert!(d <= 0.5 + 1e-9);

        // min over the level shift c of ∫|F_a⁻¹(s) − F_b⁻¹(s − c)|² ds
        let qa = von_mises_quantile(0.0, 4.0);
        let qb = von_mises_quantile(0.5, 4.0);
        let m = 4000;
        let cost = |shift: f64| {
            (0..m)
                .map(|j| {
                    let s = (j as f64 + 0.5) / m as f64;
                    (qa(s) - qb(s - shift)).powi(2)
                })
                .sum::<f64>()
                / m as f64
        };
        let best = (-200..=200).map(|i| cost(i as f64 * 0.0025)).fold(f64::INFINITY, f64::min);
        let (mut lo, mut hi) = (-0.5f64, 0.5f64);
        for _ in 0..100 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if cost(m1) < cost(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        let oracle = best.min(cost(0.5 * (lo + hi))).sqrt();
        assert!((d - oracle).abs() <= 1e-3, "{d} vs {oracle}");
    }

    #[test]
    fn grid_mismatch_errors() {
        let a = Density::uniform(&Grid::circle(1.0, 32).unwrap());
        let b = Density::uniform(&Grid::circle(1.0, 64).unwrap());
        assert!(matches!(wasserstein2(&a, &b), Err(Error::GridMismatch)));
        assert!(relative_entropy(&a, &b).is_err());
    }
}
