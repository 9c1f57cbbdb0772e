//! Otto calculus on grid densities: tangent vectors, velocities of curves,
//! covariant acceleration, Wasserstein gradients and the Newton-law
//! residual of entropic interpolations.
//!
//! Tangent vectors at `μ` are gradient fields with the metric
//! `⟨v, w⟩_μ = ∫ v w μ dx`. On a line every field is a gradient; on a circle
//! a field is a gradient iff its integral vanishes, and the orthogonal
//! projection has the closed form `P_μ f = f − C/μ` with `C = ∫f / ∫μ⁻¹`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::bridge::BridgeSolution;
use crate::density::Density;
use crate::error::{Error, Result};
use crate::grid::{gradient, integrate, Field, Grid};
use crate::prior::{is_reversible, Prior, Reversibility};

/// Default number of tangent basis directions in Gram solves.
pub const DEFAULT_BASIS_SIZE: usize = 48;
/// Relative transport step of finite-difference variations.
pub const VARIATION_STEP: f64 = 1e-5;
/// Largest accepted Gram condition number.
pub const MAX_GRAM_CONDITION: f64 = 1e10;
/// Tolerated net rate of mass change in velocity recovery.
pub const MASS_LEAK_TOLERANCE: f64 = 1e-9;
/// Relative density below which Line velocities are extended from the support.
pub const SUPPORT_CUTOFF: f64 = 1e-10;
/// Relative density treated as floor when accumulating Line fluxes.
pub const FLOOR_CUTOFF: f64 = 1e-12;

/// Gradient field `w = ∇φ` at a base density.
#[derive(Clone, Debug)]
pub struct TangentVector {
    pub w: Field,
    pub mu: Density,
    /// `φ`, pinned to zero mean.
    pub potential: Field,
}

impl TangentVector {
    fn from_field(mu: &Density, w: Field) -> Self {
        let grid = mu.grid();
        let mut phi = grid.antiderivative(w.values());
        let mean = phi.iter().sum::<f64>() / phi.len() as f64;
        phi.iter_mut().for_each(|p| *p -= mean);
        TangentVector { potential: Field::raw(grid, phi), w, mu: mu.clone() }
    }

    pub fn norm_squared(&self) -> f64 {
        inner(&self.mu, &self.w, &self.w)
    }
}

/// `⟨f, g⟩_μ = ∫ f g μ dx`.
pub fn inner(mu: &Density, f: &Field, g: &Field) -> f64 {
    let v = mu.values();
    f.values().iter().zip(g.values()).zip(v).map(|((a, b), m)| a * b * m).sum::<f64>() * mu.grid().h()
}

/// `‖f‖_{L²(μ)}`.
pub fn norm(mu: &Density, f: &Field) -> f64 {
    inner(mu, f, f).sqrt()
}

/// Orthogonal projection of `f` onto the tangent space at `μ`.
pub fn project_tangent(mu: &Density, f: &Field) -> Result<TangentVector> {
    let grid = mu.grid();
    grid.ensure_same(f.grid())?;
    if !grid.is_circle() {
        return Ok(TangentVector::from_field(mu, f.clone()));
    }
    let inv_mass: f64 = mu.values().iter().map(|m| 1.0 / m).sum::<f64>() * grid.h();
    if !inv_mass.is_finite() {
        return Err(Error::Singular("weighted Laplacian degenerate: ∫1/μ is not finite".into()));
    }
    let c = integrate(f) / inv_mass;
    let w = Field::raw(grid, f.values().iter().zip(mu.values()).map(|(f, m)| f - c / m).collect());
    Ok(TangentVector::from_field(mu, w))
}

/// Tangent velocity `v` solving `∂_t ρ + ∇·(vρ) = 0` for a given rate `∂_t ρ`.
pub fn velocity_from_rate(rho: &Density, rate: &[f64]) -> Result<TangentVector> {
    let grid = rho.grid();
    let n = grid.n();
    let r = rho.values();
    if rate.len() != n {
        return Err(Error::InvalidField(format!("rate has {} values, grid has {n}", rate.len())));
    }
    if grid.is_circle() {
        let leak = rate.iter().sum::<f64>() * grid.h();
        if leak.abs() > MASS_LEAK_TOLERANCE {
            return Err(Error::Inconsistent(format!("curve leaks mass at rate {leak:e}")));
        }
        let g = grid.antiderivative(rate);
        let inv: f64 = r.iter().map(|m| 1.0 / m).sum();
        let c = g.iter().zip(r).map(|(g, m)| g / m).sum::<f64>() / inv;
        let w = g.iter().zip(r).map(|(g, m)| (c - g) / m).collect();
        return Ok(TangentVector::from_field(rho, Field::raw(grid, w)));
    }
    let cells = grid.cell_integrals(rate);
    let total: f64 = cells.iter().sum();
    if total.abs() > MASS_LEAK_TOLERANCE {
        return Err(Error::Inconsistent(format!("curve leaks mass at rate {total:e}")));
    }
    // fluxes start where ρ leaves the floor; flux/ρ is still noise in the far
    // tail, so the velocity is extended constantly from the support
    let peak = r.iter().cloned().fold(0.0, f64::max);
    let (start, cutoff) = (FLOOR_CUTOFF * peak, SUPPORT_CUTOFF * peak);
    let s0 = r.iter().position(|&m| m >= start).unwrap_or(0);
    let s1 = r.iter().rposition(|&m| m >= start).unwrap_or(n - 1);
    let first = r.iter().position(|&m| m >= cutoff).unwrap_or(0);
    let last = r.iter().rposition(|&m| m >= cutoff).unwrap_or(n - 1);
    let mut left = vec![0.0; n];
    for i in s0 + 1..n {
        left[i] = left[i - 1] + cells[i - 1];
    }
    let mut right = vec![0.0; n];
    for i in (0..s1).rev() {
        right[i] = right[i + 1] + cells[i];
    }
    // accumulate from the nearer end so each flux is a small sum
    let mut acc = 0.0;
    let median = r
        .iter()
        .position(|m| {
            acc += m * grid.h();
            acc >= 0.5
        })
        .unwrap_or(n / 2);
    let w: Vec<f64> = (0..n)
        .map(|i| {
            let j = i.clamp(first, last);
            let flux = if j <= median { -left[j] } else { right[j] };
            flux / r[j]
        })
        .collect();
    Ok(TangentVector::from_field(rho, Field::raw(grid, w)))
}

/// Velocity at the middle of three equally spaced densities.
pub fn velocity_from_curve(prev: &Density, rho: &Density, next: &Density, dt: f64) -> Result<TangentVector> {
    rho.grid().ensure_same(prev.grid())?;
    rho.grid().ensure_same(next.grid())?;
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("time step {dt} must be positive")));
    }
    let rate: Vec<f64> = next.values().iter().zip(prev.values()).map(|(a, b)| (a - b) / (2.0 * dt)).collect();
    velocity_from_rate(rho, &rate)
}

/// Density curve on a uniform time grid together with its velocities.
#[derive(Clone, Debug)]
pub struct FlowCurve {
    pub times: Vec<f64>,
    pub rho: Vec<Density>,
    pub velocity: Vec<Field>,
}

impl FlowCurve {
    pub fn new(times: Vec<f64>, rho: Vec<Density>, velocity: Vec<Field>) -> Result<Self> {
        if times.len() < 3 || rho.len() != times.len() || velocity.len() != times.len() {
            return Err(Error::InvalidArgument(format!(
                "curve needs at least 3 matching samples (times {}, densities {}, velocities {})",
                times.len(),
                rho.len(),
                velocity.len()
            )));
        }
        let dt = times[1] - times[0];
        if !(dt > 0.0) || times.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-12 * dt.max(1.0)) {
            return Err(Error::InvalidArgument("curve times must be uniformly increasing".into()));
        }
        let grid = rho[0].grid();
        for (r, v) in rho.iter().zip(&velocity) {
            grid.ensure_same(r.grid())?;
            grid.ensure_same(v.grid())?;
        }
        Ok(FlowCurve { times, rho, velocity })
    }

    /// Builds velocities from the densities alone, differentiating in time
    /// with fourth-order stencils (one-sided at the ends).
    pub fn from_densities(times: Vec<f64>, rho: Vec<Density>) -> Result<Self> {
        let m = rho.len().saturating_sub(1);
        if m < 4 || times.len() != rho.len() {
            return Err(Error::InvalidArgument("fourth-order velocities need at least 5 samples".into()));
        }
        let dt = times[1] - times[0];
        let velocity = (0..=m)
            .into_par_iter()
            .map(|k| {
                let rate = time_derivative(&rho, k, dt);
                velocity_from_rate(&rho[k], &rate).map(|t| t.w)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(times, rho, velocity)
    }

    pub fn grid(&self) -> &Grid {
        self.rho[0].grid()
    }

    /// Number of time steps `M`.
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn dt(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    /// `‖(ρ_{k+1} − ρ_{k−1})/(2Δt) + ∇·(v_k ρ_k)‖_{L¹}` at interior k.
    pub fn continuity_defect(&self) -> Vec<f64> {
        let dt = self.dt();
        let grid = self.grid();
        (1..self.steps())
            .map(|k| {
                let flux: Vec<f64> =
                    self.velocity[k].values().iter().zip(self.rho[k].values()).map(|(v, r)| v * r).collect();
                let div = grid.derivative(&flux);
                let (a, b) = (self.rho[k + 1].values(), self.rho[k - 1].values());
                (0..grid.n()).map(|i| ((a[i] - b[i]) / (2.0 * dt) + div[i]).abs()).sum::<f64>() * grid.h()
            })
            .collect()
    }
}

/// Fourth-order `∂_t ρ` at sample `k` (needs at least five samples).
pub(crate) fn time_derivative(rho: &[Density], k: usize, dt: f64) -> Vec<f64> {
    time_stencil(rho.len() - 1, k, dt, |j| rho[j].values())
}

fn time_stencil<'a>(m: usize, k: usize, dt: f64, at: impl Fn(usize) -> &'a [f64]) -> Vec<f64> {
    let (offsets, weights): (Vec<isize>, [f64; 5]) = if k == 0 {
        (vec![0, 1, 2, 3, 4], [-25.0, 48.0, -36.0, 16.0, -3.0])
    } else if k == 1 {
        (vec![-1, 0, 1, 2, 3], [-3.0, -10.0, 18.0, -6.0, 1.0])
    } else if k == m {
        (vec![0, -1, -2, -3, -4], [25.0, -48.0, 36.0, -16.0, 3.0])
    } else if k == m - 1 {
        (vec![1, 0, -1, -2, -3], [3.0, 10.0, -18.0, 6.0, -1.0])
    } else {
        (vec![-2, -1, 1, 2, 0], [1.0, -8.0, 8.0, -1.0, 0.0])
    };
    let n = at(k).len();
    let mut out = vec![0.0; n];
    for (o, w) in offsets.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        let vals = at((k as isize + o) as usize);
        out.iter_mut().zip(vals).for_each(|(acc, v)| *acc += w * v);
    }
    out.iter_mut().for_each(|v| *v /= 12.0 * dt);
    out
}

/// Covariant acceleration `∂_t v + ½∇|v|²` at interior sample `k`.
pub fn covariant_accel(curve: &FlowCurve, k: usize) -> Result<Field> {
    if k == 0 || k >= curve.steps() {
        return Err(Error::InvalidArgument(format!("acceleration needs 1 <= k <= {}, got {k}", curve.steps() - 1)));
    }
    let dt = curve.dt();
    let v = &curve.velocity[k];
    let dv = if curve.steps() >= 4 {
        Field::raw(curve.grid(), time_stencil(curve.steps(), k, dt, |j| curve.velocity[j].values()))
    } else {
        (&curve.velocity[k + 1] - &curve.velocity[k - 1]).scale(0.5 / dt)
    };
    Ok(&dv + &gradient(&(v * v)).scale(0.5))
}

/// Wasserstein gradient of the Shannon entropy, `−∇log μ`.
pub fn grad_entropy(mu: &Density) -> Field {
    -&crate::functionals::log_gradient(mu)
}

/// `−∇(|∇log μ|² + 2Δlog μ) = −4∇(r''/r)` for an amplitude `r = √μ`.
pub(crate) fn fisher_gradient_from_amplitude(r: &Field) -> Field {
    let grid = r.grid();
    let d1 = grid.derivative(r.values());
    let d2 = grid.second_derivative(r.values());
    let d3 = grid.derivative(&d2);
    let v = r.values();
    Field::raw(grid, (0..v.len()).map(|i| -4.0 * (d3[i] * v[i] - d2[i] * d1[i]) / (v[i] * v[i])).collect())
}

/// Wasserstein gradient of the Fisher information.
pub fn grad_fisher(mu: &Density) -> Field {
    fisher_gradient_from_amplitude(&mu.sqrt())
}

/// Wasserstein gradient of `E_U`, the field `∇U`.
pub fn grad_potential_energy(potential: &Field) -> Field {
    gradient(potential)
}

/// `μ − s∇·(wμ)`, the transport variation of `μ` along `w`.
pub fn transport_variation(mu: &Density, w: &Field, s: f64) -> Result<Density> {
    let grid = mu.grid();
    grid.ensure_same(w.grid())?;
    let flux: Vec<f64> = w.values().iter().zip(mu.values()).map(|(w, m)| w * m).collect();
    let div = grid.derivative(&flux);
    let values: Vec<f64> = mu.values().iter().zip(&div).map(|(m, d)| m - s * d).collect();
    Density::from_positive(Field::raw(grid, values), mu.floor())
}

/// Length scale used to size variation steps.
fn length_scale(mu: &Density) -> f64 {
    if mu.grid().is_circle() {
        mu.grid().length() / (2.0 * std::f64::consts::PI)
    } else {
        mu.moments().1.sqrt()
    }
}

fn variation_step(mu: &Density, w: &Field) -> f64 {
    VARIATION_STEP * length_scale(mu) / w.max_abs().max(f64::MIN_POSITIVE)
}

/// Central finite-difference derivative of `functional` along the transport
/// variation `μ − s∇·(wμ)`, i.e. `⟨∇^{W2}F(μ), w⟩_μ`.
pub fn directional_derivative(
    mu: &Density,
    w: &Field,
    functional: impl Fn(&Density) -> Result<f64>,
) -> Result<f64> {
    let s = variation_step(mu, w);
    let plus = functional(&transport_variation(mu, w, s)?)?;
    let minus = functional(&transport_variation(mu, w, -s)?)?;
    Ok((plus - minus) / (2.0 * s))
}

/// Gradients of the first `count` Fourier modes (circle) or of Legendre
/// polynomials on the effective support of `μ` (line).
pub fn tangent_basis(mu: &Density, count: usize) -> Vec<Field> {
    let grid = mu.grid();
    if grid.is_circle() {
        let omega = 2.0 * std::f64::consts::PI / grid.length();
        return (0..count)
            .map(|j| {
                let k = (j / 2 + 1) as f64 * omega;
                if j % 2 == 0 {
                    Field::from_fn(grid, |x| -k * (k * x).sin())
                } else {
                    Field::from_fn(grid, |x| k * (k * x).cos())
                }
            })
            .collect();
    }
    let v = mu.values();
    let peak = v.iter().cloned().fold(0.0, f64::max);
    let inside: Vec<usize> = (0..v.len()).filter(|&i| v[i] > 1e-10 * peak).collect();
    let x = grid.nodes();
    let (lo, hi) = (x[inside[0]], x[*inside.last().unwrap()]);
    let (center, half) = (0.5 * (lo + hi), 0.5 * (hi - lo).max(grid.h()));
    let xi: Vec<f64> = x.iter().map(|x| ((x - center) / half).clamp(-1.0, 1.0)).collect();
    // P'_{j+1} by the recurrences for P_j and P'_j
    let mut p_prev = vec![1.0; xi.len()];
    let mut p = xi.clone();
    let mut dp_prev = vec![0.0; xi.len()];
    let mut dp = vec![1.0; xi.len()];
    let mut out = Vec::with_capacity(count);
    for j in 1..=count {
        out.push(Field::raw(grid, dp.iter().map(|d| d / half).collect()));
        let jf = j as f64;
        let p_next: Vec<f64> =
            (0..xi.len()).map(|i| ((2.0 * jf + 1.0) * xi[i] * p[i] - jf * p_prev[i]) / (jf + 1.0)).collect();
        let dp_next: Vec<f64> = (0..xi.len()).map(|i| dp_prev[i] + (2.0 * jf + 1.0) * p[i]).collect();
        p_prev = std::mem::replace(&mut p, p_next);
        dp_prev = std::mem::replace(&mut dp, dp_next);
    }
    out
}

/// Solves `⟨r, w_j⟩_μ = d_j` for `r` in the span of `basis`.
pub fn gram_solve(mu: &Density, basis: &[Field], rhs: &[f64]) -> Result<Field> {
    let j = basis.len();
    let gram = DMatrix::from_fn(j, j, |a, b| inner(mu, &basis[a], &basis[b]));
    let eig = gram.clone().symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    let condition = max / min;
    if !(min > 0.0) || condition > MAX_GRAM_CONDITION {
        return Err(Error::Singular(format!("tangent Gram matrix condition number {condition:e}")));
    }
    let coeffs = gram
        .cholesky()
        .ok_or_else(|| Error::Singular("tangent Gram matrix is not positive definite".into()))?
        .solve(&DVector::from_column_slice(rhs));
    let grid = mu.grid();
    let mut out = vec![0.0; grid.n()];
    for (c, w) in coeffs.iter().zip(basis) {
        out.iter_mut().zip(w.values()).for_each(|(o, w)| *o += c * w);
    }
    Ok(Field::raw(grid, out))
}

/// Wasserstein gradient of `functional` from directional derivatives along
/// a tangent basis of `count` directions.
pub fn variational_gradient(
    mu: &Density,
    count: usize,
    functional: impl Fn(&Density) -> Result<f64> + Sync,
) -> Result<Field> {
    let basis = tangent_basis(mu, count);
    let rhs = basis.par_iter().map(|w| directional_derivative(mu, w, &functional)).collect::<Result<Vec<_>>>()?;
    gram_solve(mu, &basis, &rhs)
}

/// `B(μ) = P_μ b`.
pub fn projected_drift(prior: &Prior, mu: &Density) -> Result<Field> {
    Ok(project_tangent(mu, prior.drift())?.w)
}

/// `½|B(μ)|²_{T_μ}`.
pub fn half_drift_norm(prior: &Prior, mu: &Density) -> Result<f64> {
    let b = projected_drift(prior, mu)?;
    Ok(0.5 * inner(mu, &b, &b))
}

/// Wasserstein gradient of `μ ↦ ½|B(μ)|²_{T_μ}`, computed variationally.
pub fn grad_half_drift_norm(prior: &Prior, mu: &Density, count: usize) -> Result<Field> {
    variational_gradient(mu, count, |m| half_drift_norm(prior, m))
}

/// Derivative of `B` along the transport variation in direction `w`,
/// plus the spatial Jacobian term, projected: `P(δ_w B + B' w)`.
fn drift_derivative(prior: &Prior, mu: &Density, db: &Field, w: &Field) -> Result<Field> {
    let s = variation_step(mu, w);
    let plus = projected_drift(prior, &transport_variation(mu, w, s)?)?;
    let minus = projected_drift(prior, &transport_variation(mu, w, -s)?)?;
    let change = (&plus - &minus).scale(0.5 / s);
    Ok(project_tangent(mu, &(&change + &(db * w)))?.w)
}

/// The field `r = 2ᴬD_v B ∈ T_μ`, i.e. `⟨r, w⟩ = ⟨D_v B, w⟩ − ⟨D_w B, v⟩` for
/// all tangent `w`, at interior sample `k` of `curve`. `D_v B` uses the time derivative
/// of `B` along the curve.
pub fn antisym_jacobian_term(prior: &Prior, curve: &FlowCurve, k: usize) -> Result<Field> {
    antisym_jacobian_term_with(prior, curve, k, DEFAULT_BASIS_SIZE)
}

pub fn antisym_jacobian_term_with(prior: &Prior, curve: &FlowCurve, k: usize, count: usize) -> Result<Field> {
    if k == 0 || k >= curve.steps() {
        return Err(Error::InvalidArgument(format!("antisymmetric term needs an interior sample, got {k}")));
    }
    prior.grid().ensure_same(curve.grid())?;
    let mu = &curve.rho[k];
    let v = &curve.velocity[k];
    if prior.drift().max_abs() == 0.0 {
        return Ok(Field::zeros(mu.grid()));
    }
    let b = projected_drift(prior, mu)?;
    let db = gradient(&b);
    let dt = curve.dt();
    let drifts = curve.rho.iter().map(|r| projected_drift(prior, r)).collect::<Result<Vec<_>>>()?;
    let db_dt = if curve.steps() >= 4 {
        Field::raw(mu.grid(), time_stencil(curve.steps(), k, dt, |j| drifts[j].values()))
    } else {
        (&drifts[k + 1] - &drifts[k - 1]).scale(0.5 / dt)
    };
    let along = &db_dt + &(&db * v);
    let dv_b = project_tangent(mu, &along)?.w;
    let basis = tangent_basis(mu, count);
    let rhs = basis
        .par_iter()
        .map(|w| {
            let dw_b = drift_derivative(prior, mu, &db, w)?;
            Ok(inner(mu, &dv_b, w) - inner(mu, &dw_b, v))
        })
        .collect::<Result<Vec<_>>>()?;
    gram_solve(mu, &basis, &rhs)
}

/// Per-time residual norms of a Newton law along a curve.
#[derive(Clone, Debug, PartialEq)]
pub struct NewtonResidualReport {
    /// Interior times `t_1, …, t_{M−1}`.
    pub times: Vec<f64>,
    /// `‖residual‖_{L²(ρ_k)}`.
    pub residual: Vec<f64>,
    pub max_residual: f64,
    /// Residual with one force term ablated (the viscous term for bridges,
    /// the Fisher sign flipped for Madelung fluids).
    pub ablated: Vec<f64>,
    pub max_ablated: f64,
    /// Residual with the alternative Fisher coefficient, when one applies.
    pub alternative: Option<Vec<f64>>,
    /// `log₂(coarse max / fine max)` once compared with a coarser run.
    pub order: Option<f64>,
}

impl NewtonResidualReport {
    pub(crate) fn new(times: Vec<f64>, residual: Vec<f64>, ablated: Vec<f64>, alternative: Option<Vec<f64>>) -> Self {
        let max = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max);
        NewtonResidualReport {
            max_residual: max(&residual),
            max_ablated: max(&ablated),
            times,
            residual,
            ablated,
            alternative,
            order: None,
        }
    }

    /// Records the observed convergence order against a coarser run.
    pub fn with_order(mut self, coarse: &NewtonResidualReport) -> Self {
        self.order = Some(convergence_order(coarse.max_residual, self.max_residual));
        self
    }
}

/// `log₂(coarse / fine)`.
pub fn convergence_order(coarse: f64, fine: f64) -> f64 {
    (coarse / fine).log2()
}

/// Residual of the entropic Newton law along a solved bridge:
/// `∇_v v − ∇[(a²/8)I + ½|B|² + ½E_{a∇·b}] − 2ᴬD_v B`, or in the reversible
/// case `∇_v v − ∇[(a²/8)I + ½E_{|∇U|² − aΔU}]`.
pub fn newton_residual_bridge(sol: &BridgeSolution) -> Result<NewtonResidualReport> {
    let prior = &sol.prior;
    let grid = prior.grid();
    let a = prior.a();
    let curve = sol.curve()?;
    let m = curve.steps();
    let reversible = match is_reversible(prior)? {
        Reversibility::Reversible(_) => true,
        Reversibility::NonReversible { .. } => false,
    };
    let static_force = if reversible {
        let rc = crate::prior::reciprocal_characteristic(prior)?;
        gradient(&rc).scale(0.5)
    } else {
        let db = grid.derivative(prior.drift().values());
        gradient(&Field::raw(grid, db)).scale(0.5 * a)
    };
    let rows = (1..m)
        .into_par_iter()
        .map(|k| {
            let mu = &curve.rho[k];
            let accel = covariant_accel(&curve, k)?;
            let fisher = grad_fisher(mu);
            let mut force = static_force.clone();
            let mut viscous = Field::zeros(grid);
            if !reversible {
                force = &force + &grad_half_drift_norm(prior, mu, DEFAULT_BASIS_SIZE)?;
                viscous = antisym_jacobian_term(prior, &curve, k)?;
            }
            let base = &accel - &force;
            let full = &(&base - &fisher.scale(a * a / 8.0)) - &viscous;
            let ablated = &base - &fisher.scale(a * a / 8.0);
            let alt = &(&base - &fisher.scale(a / 8.0)) - &viscous;
            Ok((norm(mu, &full), norm(mu, &ablated), norm(mu, &alt)))
        })
        .collect::<Result<Vec<_>>>()?;
    let times = curve.times[1..m].to_vec();
    Ok(NewtonResidualReport::new(
        times,
        rows.iter().map(|r| r.0).collect(),
        rows.iter().map(|r| r.1).collect(),
        Some(rows.iter().map(|r| r.2).collect()),
    ))
}
