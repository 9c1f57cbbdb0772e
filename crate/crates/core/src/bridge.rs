//! Schrödinger bridges: the entropic interpolation between two marginals
//! relative to a Markov prior, computed by log-domain Fortet/IPF (Sinkhorn)
//! iterations on the discrete transition kernel.
//!
//! With `K = K(0, 1)` and node masses `p = μh`, the potentials solve
//! `φ̂₀ ⊙ Kφ₁ = p₀`, `φ₁ ⊙ Kᵀφ̂₀ = p₁`. The time marginals are
//! `ρ_t = φ̂_t φ_t` with `φ_t = K(t, 1)φ₁` and `φ̂_t = K(0, t)ᵀφ̂₀`, the drift is
//! `c = b + a∇log φ`. The current velocity is the tangent field carrying
//! `ρ` along the bridge chain; it agrees with the tangent part of
//! `c − (a/2)∇log ρ` up to the discretization error of the prior.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

use crate::density::Density;
use crate::error::{Error, Result};
use crate::functionals::{log_gradient, shannon_entropy, wasserstein2};
use crate::geometry::{inner, project_tangent, velocity_from_rate, FlowCurve};
use crate::grid::{Field, Grid};
use crate::ot::displacement_curve;
use crate::prior::{build_prior, invariant_measure, log_sum_exp, LogKernel, Prior};

pub const DEFAULT_TOLERANCE: f64 = 1e-11;
pub const DEFAULT_MAX_ITER: usize = 50_000;
/// Largest accepted `|Σ φ̂_t φ_t h − 1|` on the time grid.
pub const RENORMALIZATION_TOLERANCE: f64 = 1e-8;

/// Entropic interpolation on the time grid `t_k = k/M`.
#[derive(Clone, Debug)]
pub struct BridgeSolution {
    pub prior: Prior,
    pub mu0: Density,
    pub mu1: Density,
    pub log_phi0_hat: Vec<f64>,
    pub log_phi1: Vec<f64>,
    pub times: Vec<f64>,
    pub log_phi: Vec<Vec<f64>>,
    pub log_phi_hat: Vec<Vec<f64>>,
    pub rho: Vec<Density>,
    /// Drift `c_k = b + a∇log φ_k` of the bridge process.
    pub drift: Vec<Field>,
    /// Current velocity: the tangent field with `∂_t ρ_k + ∇·(v_k ρ_k) = 0`
    /// for the exact rate of the bridge chain, `≈ P_ρ(c_k − (a/2)∇log ρ_k)`.
    pub velocity: Vec<Field>,
    /// Osmotic velocity `u_k = (a/2)∇log ρ_k`.
    pub osmotic: Vec<Field>,
    pub converged: bool,
    pub iterations: usize,
    /// Final L¹ defect of the first marginal.
    pub marginal_error: f64,
    pub defect_history: Vec<f64>,
    /// Largest `|Σ φ̂φ h − 1|` over the time grid.
    pub renormalization_defect: f64,
    step: Arc<LogKernel>,
    full: Arc<LogKernel>,
}

impl BridgeSolution {
    /// Number of time steps `M`.
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn grid(&self) -> &Grid {
        self.prior.grid()
    }

    /// Density curve with the bridge's own current velocities.
    pub fn curve(&self) -> Result<FlowCurve> {
        FlowCurve::new(self.times.clone(), self.rho.clone(), self.velocity.clone())
    }

    /// `log K(0, t_k)`.
    pub fn log_kernel_to(&self, k: usize) -> Result<Arc<LogKernel>> {
        if k == 0 {
            return Ok(Arc::new(LogKernel::identity(self.grid().n())));
        }
        self.prior.log_kernel_power(self.times[1], k)
    }

    /// `log K(0, 1)` used by the Sinkhorn iterations.
    pub fn log_full_kernel(&self) -> &LogKernel {
        &self.full
    }

    /// `log K(0, Δt)`.
    pub fn log_step_kernel(&self) -> &LogKernel {
        &self.step
    }

    /// Largest ratio `defect(i + span) / defect(i)` over the iteration
    /// history; for runs shorter than `span` the average geometric rate is
    /// extrapolated to `span` iterations.
    pub fn decay_ratio(&self, span: usize) -> f64 {
        let h = &self.defect_history;
        if h.len() > span {
            (0..h.len() - span).map(|i| h[i + span] / h[i]).fold(0.0, f64::max)
        } else if h.len() >= 2 {
            (h[h.len() - 1] / h[0]).powf(span as f64 / (h.len() - 1) as f64)
        } else {
            0.0
        }
    }
}

/// Solves the Schrödinger problem for `prior` between `mu0` and `mu1` on
/// `m` time steps.
pub fn solve_bridge(
    prior: &Prior,
    mu0: &Density,
    mu1: &Density,
    m: usize,
    tol: f64,
    max_iter: usize,
) -> Result<BridgeSolution> {
    let grid = prior.grid();
    grid.ensure_same(mu0.grid())?;
    grid.ensure_same(mu1.grid())?;
    if m < 8 {
        return Err(Error::InvalidArgument(format!("bridge needs M >= 8 time steps, got {m}")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance {tol} must be positive")));
    }
    let n = grid.n();
    let h = grid.h();
    let dt = 1.0 / m as f64;
    let step = prior.log_transition_kernel(0.0, dt)?;
    let full = prior.log_kernel_power(dt, m)?;
    let full_t = full.transpose();

    let log_p0: Vec<f64> = mu0.values().iter().map(|v| (v * h).ln()).collect();
    let log_p1: Vec<f64> = mu1.values().iter().map(|v| (v * h).ln()).collect();
    let mut log_beta = vec![0.0; n];
    let mut log_alpha = vec![0.0; n];
    let mut k_beta = full.apply_log(&log_beta);
    let mut history = Vec::new();
    let mut defect = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        log_alpha = log_p0.iter().zip(&k_beta).map(|(p, k)| p - k).collect();
        let k_alpha = full_t.apply_log(&log_alpha);
        log_beta = log_p1.iter().zip(&k_alpha).map(|(p, k)| p - k).collect();
        k_beta = full.apply_log(&log_beta);
        defect = (0..n).map(|i| ((log_alpha[i] + k_beta[i]).exp() - log_p0[i].exp()).abs()).sum();
        history.push(defect);
        if !defect.is_finite() {
            break;
        }
        if defect <= tol {
            break;
        }
    }
    if !(defect <= tol) {
        return Err(Error::NotConverged { iterations, defect, history });
    }

    let mut log_phi = vec![Vec::new(); m + 1];
    log_phi[m] = log_beta.clone();
    for k in (0..m).rev() {
        log_phi[k] = step.apply_log(&log_phi[k + 1]);
    }
    let step_t = step.transpose();
    let mut log_phi_hat = vec![Vec::new(); m + 1];
    log_phi_hat[0] = log_alpha.clone();
    for k in 0..m {
        log_phi_hat[k + 1] = step_t.apply_log(&log_phi_hat[k]);
    }

    let a = prior.a();
    let b = prior.drift();
    let mut renormalization_defect: f64 = 0.0;
    let mut rho = Vec::with_capacity(m + 1);
    let mut totals = Vec::with_capacity(m + 1);
    for k in 0..=m {
        let log_mass: Vec<f64> = log_phi[k].iter().zip(&log_phi_hat[k]).map(|(x, y)| x + y).collect();
        let total = log_sum_exp(log_mass.iter().cloned()).exp();
        renormalization_defect = renormalization_defect.max((total - 1.0).abs());
        rho.push(Density::from_values(grid, log_mass.iter().map(|l| l.exp() / (total * h)).collect())?);
        totals.push(total);
    }
    if renormalization_defect > RENORMALIZATION_TOLERANCE {
        return Err(Error::Inconsistent(format!(
            "bridge marginals lose mass: renormalization defect {renormalization_defect:e}"
        )));
    }
    let fields: Vec<(Field, Field, Field)> = (0..=m)
        .into_par_iter()
        .map(|k| {
            let grad_phi = grid.derivative(&log_phi[k]);
            let grad_phi_hat = grid.derivative(&log_phi_hat[k]);
            let drift = Field::raw(grid, (0..n).map(|i| b.values()[i] + a * grad_phi[i]).collect());
            let rate = bridge_rate(prior, &log_phi[k], &log_phi_hat[k], totals[k] * h);
            let velocity = velocity_from_rate(&rho[k], &rate)?.w;
            let osmotic = Field::raw(grid, (0..n).map(|i| 0.5 * a * (grad_phi[i] + grad_phi_hat[i])).collect());
            Ok((drift, velocity, osmotic))
        })
        .collect::<Result<_>>()?;
    let (mut drift, mut velocity, mut osmotic) = (Vec::new(), Vec::new(), Vec::new());
    for (c, v, u) in fields {
        drift.push(c);
        velocity.push(v);
        osmotic.push(u);
    }
    Ok(BridgeSolution {
        prior: prior.clone(),
        mu0: mu0.clone(),
        mu1: mu1.clone(),
        log_phi0_hat: log_alpha,
        log_phi1: log_beta,
        times: (0..=m).map(|k| k as f64 * dt).collect(),
        log_phi,
        log_phi_hat,
        rho,
        drift,
        velocity,
        osmotic,
        converged: true,
        iterations,
        marginal_error: defect,
        defect_history: history,
        renormalization_defect,
        step,
        full,
    })
}

/// `∂_t ρ` of the bridge chain, whose rates are `q_ij φ_j/φ_i`: the net
/// flux across the edge `(i, i+1)` is `up_i φ̂_i φ_{i+1} − down_{i+1} φ̂_{i+1} φ_i`.
fn bridge_rate(prior: &Prior, log_phi: &[f64], log_phi_hat: &[f64], scale: f64) -> Vec<f64> {
    let n = log_phi.len();
    let (up, down) = (prior.up_rates(), prior.down_rates());
    let edges = if prior.grid().is_circle() { n } else { n - 1 };
    let mut flux = vec![0.0; n];
    for i in 0..edges {
        let j = (i + 1) % n;
        let forward = if up[i] > 0.0 { up[i] * (log_phi_hat[i] + log_phi[j]).exp() } else { 0.0 };
        let backward = if down[j] > 0.0 { down[j] * (log_phi_hat[j] + log_phi[i]).exp() } else { 0.0 };
        flux[i] = (forward - backward) / scale;
    }
    (0..n).map(|i| flux[(i + n - 1) % n] - flux[i]).collect()
}

/// Static entropic coupling `π_ij = φ̂₀(i) K(0,1)_ij φ₁(j)` in node masses.
pub fn static_coupling(sol: &BridgeSolution) -> DMatrix<f64> {
    let n = sol.grid().n();
    DMatrix::from_fn(n, n, |i, j| (sol.log_phi0_hat[i] + sol.full.log_entry(i, j) + sol.log_phi1[j]).exp())
}

/// Node masses at `t_k` obtained by mixing discrete bridges with the static
/// coupling: `Σ_ij π_ij K(0,t)_il K(t,1)_lj / K(0,1)_ij`.
pub fn bridge_mixture(sol: &BridgeSolution, k: usize) -> Result<Vec<f64>> {
    let m = sol.steps();
    if k > m {
        return Err(Error::InvalidArgument(format!("time index {k} exceeds M = {m}")));
    }
    let n = sol.grid().n();
    let to_t = sol.log_kernel_to(k)?;
    let from_t = if k == m {
        Arc::new(LogKernel::identity(n))
    } else {
        sol.prior.log_kernel_power(sol.times[1], m - k)?
    };
    let (to_t, from_t, full) = (&*to_t, &*from_t, &*sol.full);
    let log_pi = |i: usize, j: usize| sol.log_phi0_hat[i] + full.log_entry(i, j) + sol.log_phi1[j];
    Ok((0..n)
        .into_par_iter()
        .map(|l| {
            let terms = (0..n).flat_map(move |i| {
                (0..n).map(move |j| log_pi(i, j) + to_t.log_entry(i, l) + from_t.log_entry(l, j) - full.log_entry(i, j))
            });
            log_sum_exp(terms).exp()
        })
        .collect())
}

/// Which form of the entropic action to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActionForm {
    /// `∫ ½|v + (a/2)∇log ρ − B|² dt`.
    Primal,
    /// The primal square expanded: `∫ ½|v|² + (a²/8)I + ½|B|² + ½E_{a∇·b} − ⟨B, v⟩ dt`.
    Expanded,
    /// `∫ (1/2a)|v − v^P|² + (a/8)|∇log(ρ/m)|² dt` with `v^P = b − (a/2)∇log m`.
    RelativeFisher,
}

/// Time quadrature weights on `M + 1` equispaced samples: Gregory's
/// fourth-order end-corrected trapezoid rule when `M ≥ 6`, else the
/// trapezoid rule.
pub fn time_weights(m: usize, dt: f64) -> Vec<f64> {
    let mut w = vec![dt; m + 1];
    if m >= 6 {
        let ends = [3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0];
        for (i, e) in ends.iter().enumerate() {
            w[i] = e * dt;
            w[m - i] = e * dt;
        }
    } else {
        w[0] = 0.5 * dt;
        w[m] = 0.5 * dt;
    }
    w
}

/// Entropic action of a solved bridge.
pub fn entropic_action(sol: &BridgeSolution, form: ActionForm) -> Result<f64> {
    entropic_action_curve(&sol.prior, &sol.curve()?, form)
}

/// Entropic action of an arbitrary curve relative to `prior`.
pub fn entropic_action_curve(prior: &Prior, curve: &FlowCurve, form: ActionForm) -> Result<f64> {
    prior.grid().ensure_same(curve.grid())?;
    let integrand = action_integrand(prior, curve, form)?;
    let w = time_weights(curve.steps(), curve.dt());
    Ok(integrand.iter().zip(&w).map(|(f, w)| f * w).sum())
}

/// Integrand of the chosen action at every time sample.
pub fn action_integrand(prior: &Prior, curve: &FlowCurve, form: ActionForm) -> Result<Vec<f64>> {
    let grid = prior.grid();
    let a = prior.a();
    let b = prior.drift();
    let stationary = match form {
        ActionForm::RelativeFisher => Some(invariant_measure(prior).map_err(|e| {
            Error::InvalidPrior(format!("relative Fisher form needs a stationary prior: {e}"))
        })?),
        _ => None,
    };
    let div_b = Field::raw(grid, grid.derivative(b.values()));
    (0..curve.times.len())
        .into_par_iter()
        .map(|k| {
            let rho = &curve.rho[k];
            let v = &curve.velocity[k];
            let score = log_gradient(rho);
            Ok(match form {
                ActionForm::Primal => {
                    let big_b = project_tangent(rho, b)?.w;
                    let f = &(v + &score.scale(0.5 * a)) - &big_b;
                    0.5 * inner(rho, &f, &f)
                }
                ActionForm::Expanded => {
                    let big_b = project_tangent(rho, b)?.w;
                    0.5 * inner(rho, v, v) + a * a / 8.0 * inner(rho, &score, &score) + 0.5 * inner(rho, &big_b, &big_b)
                        + 0.5 * a * inner(rho, &div_b, &Field::constant(grid, 1.0))
                        - inner(rho, &big_b, v)
                }
                ActionForm::RelativeFisher => {
                    let m = &stationary.as_ref().expect("stationary measure computed above").m;
                    let m_score = log_gradient(m);
                    let v_prior = b - &m_score.scale(0.5 * a);
                    let dv = v - &v_prior;
                    let rel = &score - &m_score;
                    inner(rho, &dv, &dv) / (2.0 * a) + a / 8.0 * inner(rho, &rel, &rel)
                }
            })
        })
        .collect()
}

/// `(a/2)(S(μ₀) − S(μ₁))`, the value of `Primal − Expanded` on every curve
/// joining the marginals.
pub fn entropy_boundary_term(prior: &Prior, mu0: &Density, mu1: &Density) -> f64 {
    0.5 * prior.a() * (shannon_entropy(mu0) - shannon_entropy(mu1))
}

/// Admissible variation `ρ_k(1 + s sin(πt_k) η_k)` of a curve, with `η_k`
/// centred against `ρ_k` so mass and both end marginals are preserved.
/// Velocities are recovered from the perturbed densities.
pub fn perturbed_curve(curve: &FlowCurve, eta: &Field, amplitude: f64) -> Result<FlowCurve> {
    curve.grid().ensure_same(eta.grid())?;
    let t_end = *curve.times.last().unwrap();
    let t0 = curve.times[0];
    let rho = curve
        .times
        .iter()
        .zip(&curve.rho)
        .map(|(t, r)| {
            let mean = inner(r, eta, &Field::constant(r.grid(), 1.0));
            let bump = amplitude * (std::f64::consts::PI * (t - t0) / (t_end - t0)).sin();
            let values: Vec<f64> =
                r.values().iter().zip(eta.values()).map(|(r, e)| r * (1.0 + bump * (e - mean))).collect();
            if values.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::InvalidArgument(format!("perturbation amplitude {amplitude} breaks positivity")));
            }
            Density::new(Field::raw(r.grid(), values))
        })
        .collect::<Result<Vec<_>>>()?;
    FlowCurve::from_densities(curve.times.clone(), rho)
}

/// Smooth random field `Σ_k (a_k cos + b_k sin)(2πk x/L)/k²` with unit
/// maximum, for perturbation tests.
pub fn random_smooth_field<R: Rng + ?Sized>(grid: &Grid, rng: &mut R, modes: usize) -> Field {
    let nodes = grid.nodes();
    let (x0, length) = (nodes[0], grid.length());
    let coeffs: Vec<(f64, f64)> =
        (1..=modes).map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    let f = Field::from_fn(grid, |x| {
        coeffs
            .iter()
            .enumerate()
            .map(|(i, (a, b))| {
                let k = (i + 1) as f64;
                let arg = 2.0 * std::f64::consts::PI * k * (x - x0) / length;
                (a * arg.cos() + b * arg.sin()) / (k * k)
            })
            .sum()
    });
    let scale = f.max_abs();
    f.scale(1.0 / scale)
}

/// One row of the zero-noise study.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZeroNoiseRow {
    pub a: f64,
    /// `max_k W₂(ρ^a_{t_k}, ρ^{OT}_{t_k})`.
    pub distance: f64,
    pub iterations: usize,
}

/// Distance between Brownian bridges with diffusivities `a_list` and the
/// displacement interpolation between the same marginals.
pub fn zero_noise_study(
    mu0: &Density,
    mu1: &Density,
    a_list: &[f64],
    m: usize,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<ZeroNoiseRow>> {
    let grid = mu0.grid();
    let reference = displacement_curve(mu0, mu1, m)?;
    a_list
        .par_iter()
        .map(|&a| {
            let prior = build_prior(grid, a, &Field::zeros(grid))?;
            let sol = solve_bridge(&prior, mu0, mu1, m, tol, max_iter)?;
            let distance = sol
                .rho
                .iter()
                .zip(&reference.rho)
                .map(|(r, o)| wasserstein2(r, o))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold(0.0, f64::max);
            Ok(ZeroNoiseRow { a, distance, iterations: sol.iterations })
        })
        .collect()
}
