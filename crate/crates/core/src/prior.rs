//! Discretized Markov prior with generator `(a/2)Δ + b·∇`.
//!
//! The generator is a conservative rate matrix on the grid nodes. Jump
//! rates across each cell face are exponentially fitted
//! (Scharfetter–Gummel): with `D = a/2` and `β = ∫_{x_i}^{x_{i+1}} b dx`,
//!
//! ```text
//! rate(i → i+1) = D/h² · B(−β/D),   rate(i+1 → i) = D/h² · B(β/D),
//! B(z) = z / (e^z − 1)
//! ```
//!
//! Both rates are positive for every drift, the scheme is second order, and
//! for a gradient drift `b = −∇U` detailed balance holds with
//! `m_{i+1}/m_i = exp(−2(U_{i+1} − U_i)/a)`, i.e. the discrete invariant
//! measure is the Gibbs density sampled at the nodes.
//!
//! Transition kernels are computed in the log domain by uniformization and
//! squaring, which keeps every entry relatively accurate no matter how small.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::density::Density;
use crate::error::{Error, Result};
use crate::functionals::require_positive;
use crate::grid::{gradient, laplacian, Field, Grid};

/// Relative detailed-balance defect below which a prior counts as reversible.
pub const REVERSIBILITY_TOLERANCE: f64 = 1e-8;

fn bernoulli(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        1.0 - 0.5 * z
    } else {
        z / z.exp_m1()
    }
}

pub(crate) fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

pub(crate) fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Transition matrix stored as entrywise logarithms (row-major).
#[derive(Clone, Debug)]
pub struct LogKernel {
    n: usize,
    log: Vec<f64>,
}

impl LogKernel {
    pub fn identity(n: usize) -> Self {
        let mut log = vec![f64::NEG_INFINITY; n * n];
        (0..n).for_each(|i| log[i * n + i] = 0.0);
        LogKernel { n, log }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn log_entry(&self, i: usize, j: usize) -> f64 {
        self.log[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.log[i * self.n..(i + 1) * self.n]
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.log_entry(i, j).exp())
    }

    /// `log(K e^v)`: backward (column-vector) application.
    pub fn apply_log(&self, log_v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .into_par_iter()
            .map(|i| log_sum_exp(self.row(i).iter().zip(log_v).map(|(k, v)| k + v)))
            .collect()
    }

    /// `log(Kᵀ e^v)`: forward (row-vector) application.
    pub fn apply_log_transpose(&self, log_v: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .into_par_iter()
            .map(|j| log_sum_exp((0..n).map(|i| self.log[i * n + j] + log_v[i])))
            .collect()
    }

    pub fn transpose(&self) -> LogKernel {
        let n = self.n;
        LogKernel { n, log: (0..n * n).map(|idx| self.log[(idx % n) * n + idx / n]).collect() }
    }

    /// Log-domain product `self · other`.
    pub fn compose(&self, other: &LogKernel) -> LogKernel {
        let n = self.n;
        let row_max: Vec<f64> = (0..n).map(|i| self.row(i).iter().cloned().fold(f64::NEG_INFINITY, f64::max)).collect();
        let col_max: Vec<f64> = (0..n)
            .map(|j| (0..n).map(|k| other.log[k * n + j]).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let a = DMatrix::from_fn(n, n, |i, k| (self.log[i * n + k] - row_max[i]).exp());
        let b = DMatrix::from_fn(n, n, |k, j| (other.log[k * n + j] - col_max[j]).exp());
        let c = a * b;
        let mut log = vec![0.0; n * n];
        log.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            for (j, out) in row.iter_mut().enumerate() {
                let v = c[(i, j)];
                *out = if v > 1e-280 {
                    row_max[i] + col_max[j] + v.ln()
                } else {
                    log_sum_exp((0..n).map(|k| self.log[i * n + k] + other.log[k * n + j]))
                };
            }
        });
        LogKernel { n, log }
    }

    /// `self^power` by binary exponentiation.
    pub fn power(&self, power: usize) -> LogKernel {
        let mut result = LogKernel::identity(self.n);
        let mut base = self.clone();
        let mut p = power;
        let mut first = true;
        while p > 0 {
            if p & 1 == 1 {
                result = if first { base.clone() } else { result.compose(&base) };
                first = false;
            }
            p >>= 1;
            if p > 0 {
                base = base.compose(&base);
            }
        }
        result
    }
}

/// Outcome of the detailed-balance test.
#[derive(Clone, Debug)]
pub enum Reversibility {
    /// Drift is `−∇U`; the potential is pinned to zero mean.
    Reversible(Field),
    NonReversible { defect: f64 },
}

/// Stationary law of the prior.
#[derive(Clone, Debug)]
pub struct InvariantMeasure {
    pub m: Density,
    /// Unclamped `log m_i`.
    pub log_m: Vec<f64>,
    /// Largest relative defect `|(mᵀQ)_j| / Σ_i |m_i Q_ij|`.
    pub residual: f64,
}

/// Markov prior with generator `(a/2)Δ + b·∇` on a grid. Clones share the
/// kernel cache.
#[derive(Clone)]
pub struct Prior {
    grid: Grid,
    a: f64,
    drift: Field,
    /// Rate of jumping from node i to i+1 (wrapping on a circle).
    up: Vec<f64>,
    /// Rate of jumping from node i to i−1.
    down: Vec<f64>,
    kernels: Arc<Mutex<HashMap<u64, Arc<LogKernel>>>>,
    invariant: Arc<OnceLock<Result<InvariantMeasure>>>,
}

impl std::fmt::Debug for Prior {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Prior").field("grid", &self.grid).field("a", &self.a).finish()
    }
}

impl Prior {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn drift(&self) -> &Field {
        &self.drift
    }

    pub fn up_rates(&self) -> &[f64] {
        &self.up
    }

    pub fn down_rates(&self) -> &[f64] {
        &self.down
    }

    /// Dense rate matrix `Q` (rows sum to zero).
    pub fn rate_matrix(&self) -> DMatrix<f64> {
        let n = self.grid.n();
        let mut q = DMatrix::zeros(n, n);
        for i in 0..n {
            let (up, down) = (self.up[i], self.down[i]);
            if up > 0.0 {
                q[(i, (i + 1) % n)] += up;
            }
            if down > 0.0 {
                q[(i, (i + n - 1) % n)] += down;
            }
            q[(i, i)] -= up + down;
        }
        q
    }

    fn log_expm(&self, t: f64) -> LogKernel {
        let n = self.grid.n();
        if t == 0.0 {
            return LogKernel::identity(n);
        }
        let exit: Vec<f64> = self.up.iter().zip(&self.down).map(|(u, d)| u + d).collect();
        let lambda = exit.iter().cloned().fold(0.0, f64::max);
        let mut squarings = 0u32;
        while lambda * t / 2f64.powi(squarings as i32) > 8.0 {
            squarings += 1;
        }
        let mu = lambda * t / 2f64.powi(squarings as i32);
        let ln_stay: Vec<f64> = exit.iter().map(|e| (1.0 - e / lambda).max(0.0).ln()).collect();
        let ln_up: Vec<f64> = self.up.iter().map(|u| (u / lambda).ln()).collect();
        let ln_down: Vec<f64> = self.down.iter().map(|d| (d / lambda).ln()).collect();
        let circle = self.grid.is_circle();
        let reach = if circle { n / 2 } else { n - 1 };
        let ln_mu = mu.ln();

        let mut log = vec![0.0; n * n];
        log.par_chunks_mut(n).enumerate().for_each(|(i, out)| {
            // v_p = e_i P^p as a row vector, accumulated with Poisson weights.
            let mut v = vec![f64::NEG_INFINITY; n];
            v[i] = 0.0;
            let mut acc = vec![f64::NEG_INFINITY; n];
            let mut ln_weight = -mu;
            let mut p = 0usize;
            loop {
                let mut converged = true;
                for j in 0..n {
                    if v[j] == f64::NEG_INFINITY {
                        continue;
                    }
                    let term = ln_weight + v[j];
                    if acc[j] == f64::NEG_INFINITY || term - acc[j] > -40.0 {
                        converged = false;
                    }
                    acc[j] = log_add(acc[j], term);
                }
                if converged && p as f64 > mu && p >= reach {
                    break;
                }
                p += 1;
                ln_weight += ln_mu - (p as f64).ln();
                let mut next = vec![f64::NEG_INFINITY; n];
                for j in 0..n {
                    if v[j] == f64::NEG_INFINITY {
                        continue;
                    }
                    next[j] = log_add(next[j], v[j] + ln_stay[j]);
                    if circle || j + 1 < n {
                        let k = (j + 1) % n;
                        next[k] = log_add(next[k], v[j] + ln_up[j]);
                    }
                    if circle || j > 0 {
                        let k = (j + n - 1) % n;
                        next[k] = log_add(next[k], v[j] + ln_down[j]);
                    }
                }
                v = next;
            }
            out.copy_from_slice(&acc);
        });
        let mut k = LogKernel { n, log };
        for _ in 0..squarings {
            k = k.compose(&k);
        }
        k
    }

    /// `log K(s, t)` with `K(s, t) = exp((t − s)Q)`, cached by duration.
    pub fn log_transition_kernel(&self, s: f64, t: f64) -> Result<Arc<LogKernel>> {
        if !(t >= s) || !s.is_finite() || !t.is_finite() {
            return Err(Error::InvalidArgument(format!("kernel needs s <= t, got s={s}, t={t}")));
        }
        let key = (t - s).to_bits();
        if let Some(k) = self.kernels.lock().unwrap().get(&key) {
            return Ok(k.clone());
        }
        let k = Arc::new(self.log_expm(t - s));
        self.kernels.lock().unwrap().insert(key, k.clone());
        Ok(k)
    }

    /// `log K(0, k·step)` as the k-th power of the step kernel, cached.
    pub fn log_kernel_power(&self, step: f64, k: usize) -> Result<Arc<LogKernel>> {
        let duration = step * k as f64;
        if let Some(found) = self.kernels.lock().unwrap().get(&duration.to_bits()) {
            return Ok(found.clone());
        }
        let power = Arc::new(self.log_transition_kernel(0.0, step)?.power(k));
        let mut cache = self.kernels.lock().unwrap();
        Ok(cache.entry(duration.to_bits()).or_insert(power).clone())
    }
}

/// Builds the prior `(a/2)Δ + b·∇` on `grid`.
pub fn build_prior(grid: &Grid, a: f64, drift: &Field) -> Result<Prior> {
    require_positive(a, "diffusivity a").map_err(|e| Error::InvalidPrior(e.to_string()))?;
    grid.ensure_same(drift.grid())?;
    if !drift.is_finite() {
        return Err(Error::InvalidPrior("drift has non-finite values".into()));
    }
    let n = grid.n();
    let b = drift.values();
    if !grid.is_circle() && (b[0] < 0.0 || b[n - 1] > 0.0) {
        return Err(Error::InvalidPrior(format!(
            "drift must point inward at the line ends (b(x_min) = {}, b(x_max) = {})",
            b[0],
            b[n - 1]
        )));
    }
    let d = 0.5 * a;
    let base = d / (grid.h() * grid.h());
    let faces = grid.cell_integrals(b);
    let mut up = vec![0.0; n];
    let mut down = vec![0.0; n];
    for (i, beta) in faces.iter().enumerate() {
        let z = beta / d;
        up[i] = base * bernoulli(-z);
        down[(i + 1) % n] = base * bernoulli(z);
    }
    Ok(Prior {
        grid: grid.clone(),
        a,
        drift: drift.clone(),
        up,
        down,
        kernels: Arc::new(Mutex::new(HashMap::new())),
        invariant: Arc::new(OnceLock::new()),
    })
}

/// Row-stochastic transition matrix `K(s, t) = exp((t − s)Q)`.
pub fn transition_kernel(prior: &Prior, s: f64, t: f64) -> Result<DMatrix<f64>> {
    Ok(prior.log_transition_kernel(s, t)?.to_matrix())
}

fn solve_invariant(prior: &Prior) -> Result<InvariantMeasure> {
    let grid = prior.grid();
    let n = grid.n();
    // the zero rates at the ends of a line never enter a tree
    let ln_rate = |r: &f64| if *r > 0.0 { r.ln() } else { 0.0 };
    let ln_up: Vec<f64> = prior.up.iter().map(ln_rate).collect();
    let ln_down: Vec<f64> = prior.down.iter().map(ln_rate).collect();
    // Markov chain tree theorem: m_i is the sum over spanning trees rooted at
    // i of the product of rates pointing toward i. Every term is positive, so
    // the weights stay relatively accurate deep in the tails.
    let mut pu = vec![0.0; 2 * n + 1];
    let mut pd = vec![0.0; 2 * n + 1];
    for j in 0..2 * n {
        pu[j + 1] = pu[j] + ln_up[j % n];
        pd[j + 1] = pd[j] + ln_down[j % n];
    }
    let log_m: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            if grid.is_circle() {
                // the tree omits the edge (k, k+1) in unwrapped indices
                log_sum_exp((i..i + n).map(|k| (pd[k + 1] - pd[i + 1]) + (pu[i + n] - pu[k + 1])))
            } else {
                (pd[n] - pd[i + 1]) + pu[i]
            }
        })
        .collect();
    let top = log_m.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let h = grid.h();
    let log_mass = top + log_m.iter().map(|l| (l - top).exp()).sum::<f64>().ln() + h.ln();
    let log_m: Vec<f64> = log_m.iter().map(|l| l - log_mass).collect();
    if log_m.iter().any(|l| !l.is_finite()) {
        return Err(Error::Singular("invariant measure has a vanishing or infinite weight".into()));
    }

    let m: Vec<f64> = log_m.iter().map(|l| l.exp()).collect();
    let residual = (0..n)
        .map(|j| {
            let prev = (j + n - 1) % n;
            let next = (j + 1) % n;
            let mut terms = vec![-m[j] * (prior.up[j] + prior.down[j])];
            if grid.is_circle() || j > 0 {
                terms.push(m[prev] * prior.up[prev]);
            }
            if grid.is_circle() || j + 1 < n {
                terms.push(m[next] * prior.down[next]);
            }
            let scale: f64 = terms.iter().map(|t| t.abs()).sum();
            terms.iter().sum::<f64>().abs() / scale
        })
        .fold(0.0, f64::max);
    if residual > 1e-10 {
        return Err(Error::Singular(format!("invariant measure residual {residual:e}")));
    }
    let density = Density::from_values(grid, m)?;
    Ok(InvariantMeasure { m: density, log_m, residual })
}

/// Normalized left null vector of the generator.
pub fn invariant_measure(prior: &Prior) -> Result<InvariantMeasure> {
    match prior.invariant.get_or_init(|| solve_invariant(prior)) {
        Ok(m) => Ok(m.clone()),
        Err(e) => Err(Error::Singular(e.to_string())),
    }
}

/// Largest relative detailed-balance defect `|m_i Q_{i,i+1} − m_{i+1} Q_{i+1,i}|`.
pub fn detailed_balance_defect(prior: &Prior) -> Result<f64> {
    let log_m = invariant_measure(prior)?.log_m;
    let n = prior.grid().n();
    let faces = if prior.grid().is_circle() { n } else { n - 1 };
    Ok((0..faces)
        .map(|i| {
            let j = (i + 1) % n;
            let forward = log_m[i] + prior.up[i].ln();
            let backward = log_m[j] + prior.down[j].ln();
            (forward - backward).exp_m1().abs().min(1.0)
        })
        .fold(0.0, f64::max))
}

/// Potential `U` with `b = −∇U`, pinned to zero mean.
fn drift_potential(prior: &Prior) -> Field {
    let grid = prior.grid();
    let neg: Vec<f64> = prior.drift().values().iter().map(|b| -b).collect();
    let u = grid.antiderivative(&neg);
    let mean = u.iter().sum::<f64>() / u.len() as f64;
    Field::raw(grid, u.into_iter().map(|v| v - mean).collect())
}

/// Detailed-balance classification; returns the potential when reversible.
pub fn is_reversible(prior: &Prior) -> Result<Reversibility> {
    let defect = detailed_balance_defect(prior)?;
    Ok(if defect <= REVERSIBILITY_TOLERANCE {
        Reversibility::Reversible(drift_potential(prior))
    } else {
        Reversibility::NonReversible { defect }
    })
}

/// `|∇U|² − aΔU` for a reversible prior with `b = −∇U`.
pub fn reciprocal_characteristic(prior: &Prior) -> Result<Field> {
    match is_reversible(prior)? {
        Reversibility::Reversible(u) => {
            let g = gradient(&u);
            Ok(&(&g * &g) - &laplacian(&u).scale(prior.a()))
        }
        Reversibility::NonReversible { defect } => Err(Error::InvalidPrior(format!(
            "reciprocal characteristic needs a reversible prior (detailed-balance defect {defect:e})"
        ))),
    }
}
