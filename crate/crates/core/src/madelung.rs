//! Schrödinger evolution on a circle and its Madelung fluid.
//!
//! `iħ∂_tψ = −(ħ²/2m)Δψ + Vψ` is integrated by Strang splitting with Fourier
//! kinetic factors. Writing `ψ = √ρ e^{iS/ħ}`, the current velocity
//! `v = ∇S/m` is read from the probability current `j = (ħ/m)Im(ψ̄∇ψ)` and
//! the fluid obeys `∂_t v + ½∇v² = −(ħ²/8m²)∇^{W2}I(ρ) − ∇V/m`.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::density::Density;
use crate::error::{Error, Result};
use crate::geometry::{fisher_gradient_from_amplitude, NewtonResidualReport};
use crate::grid::{Field, Grid};

/// Density below which Madelung fields are masked.
pub const MASK_THRESHOLD: f64 = 1e-8;

/// Normalized wave function on a circle grid.
#[derive(Clone, Debug)]
pub struct WaveFunction {
    grid: Grid,
    psi: Vec<Complex64>,
    hbar: f64,
    mass: f64,
    potential: Field,
}

impl WaveFunction {
    /// Normalizes `psi` so that `∫|ψ|² dx = 1`.
    pub fn new(grid: &Grid, psi: Vec<Complex64>, hbar: f64, mass: f64, potential: &Field) -> Result<Self> {
        if !grid.is_circle() {
            return Err(Error::InvalidGrid("wave functions live on circle grids".into()));
        }
        grid.ensure_same(potential.grid())?;
        if psi.len() != grid.n() {
            return Err(Error::InvalidField(format!("expected {} amplitudes, got {}", grid.n(), psi.len())));
        }
        if !(hbar > 0.0 && mass > 0.0) {
            return Err(Error::InvalidArgument(format!("ħ = {hbar} and m = {mass} must be positive")));
        }
        if psi.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::InvalidField("wave function has non-finite amplitudes".into()));
        }
        let total = psi.iter().map(|c| c.norm_sqr()).sum::<f64>() * grid.h();
        if !(total > 0.0) {
            return Err(Error::InvalidField("wave function vanishes".into()));
        }
        let scale = 1.0 / total.sqrt();
        Ok(WaveFunction {
            grid: grid.clone(),
            psi: psi.into_iter().map(|c| c * scale).collect(),
            hbar,
            mass,
            potential: potential.clone(),
        })
    }

    /// Gaussian packet `exp(−(x − x₀)²/(4σ²) + ik₀x)`, periodized over the
    /// circle.
    pub fn gaussian_packet(
        grid: &Grid,
        center: f64,
        sigma: f64,
        k0: f64,
        hbar: f64,
        mass: f64,
        potential: &Field,
    ) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::InvalidArgument(format!("packet width {sigma} must be positive")));
        }
        let l = grid.length();
        let images = (10.0 * sigma / l).ceil() as i64 + 1;
        let psi = grid
            .nodes()
            .iter()
            .map(|&x| {
                (-images..=images)
                    .map(|j| {
                        let d = x - center + j as f64 * l;
                        Complex64::from_polar((-d * d / (4.0 * sigma * sigma)).exp(), k0 * d)
                    })
                    .sum()
            })
            .collect();
        Self::new(grid, psi, hbar, mass, potential)
    }

    /// Plane wave `e^{ikx}/√L` with `k = 2π·mode/L`.
    pub fn plane_wave(grid: &Grid, mode: i64, hbar: f64, mass: f64, potential: &Field) -> Result<Self> {
        let k = 2.0 * std::f64::consts::PI * mode as f64 / grid.length();
        let psi = grid.nodes().iter().map(|&x| Complex64::from_polar(1.0, k * x)).collect();
        Self::new(grid, psi, hbar, mass, potential)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn psi(&self) -> &[Complex64] {
        &self.psi
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn potential(&self) -> &Field {
        &self.potential
    }

    /// `∫|ψ|² dx`.
    pub fn norm_squared(&self) -> f64 {
        self.psi.iter().map(|c| c.norm_sqr()).sum::<f64>() * self.grid.h()
    }

    /// `|ψ|²` as a density.
    pub fn density(&self) -> Result<Density> {
        Density::new(Field::raw(&self.grid, self.psi.iter().map(|c| c.norm_sqr()).collect()))
    }

    /// `∫ x-weighted |ψ|²` about `origin`, with positions unwrapped to
    /// `[origin − L/2, origin + L/2)`.
    pub fn mean_position(&self, origin: f64) -> f64 {
        let l = self.grid.length();
        self.grid
            .nodes()
            .iter()
            .zip(&self.psi)
            .map(|(x, c)| ((x - origin + 0.5 * l).rem_euclid(l) - 0.5 * l) * c.norm_sqr())
            .sum::<f64>()
            * self.grid.h()
            + origin
    }

    /// Spatial variance of `|ψ|²` about its mean (unwrapped around `origin`).
    pub fn position_variance(&self, origin: f64) -> f64 {
        let l = self.grid.length();
        let mean = self.mean_position(origin) - origin;
        self.grid
            .nodes()
            .iter()
            .zip(&self.psi)
            .map(|(x, c)| {
                let d = (x - origin + 0.5 * l).rem_euclid(l) - 0.5 * l - mean;
                d * d * c.norm_sqr()
            })
            .sum::<f64>()
            * self.grid.h()
    }

    fn spectrum(&self) -> Vec<Complex64> {
        let mut buf = self.psi.clone();
        self.grid.fft_complex(&mut buf, false);
        buf
    }

    /// Derivatives `(ψ', ψ'')` by Fourier multipliers.
    fn derivatives(&self) -> (Vec<Complex64>, Vec<Complex64>) {
        let spec = self.spectrum();
        let k = self.grid.wavenumbers();
        let nyquist = self.grid.n() / 2;
        let mut d1: Vec<Complex64> = spec
            .iter()
            .enumerate()
            .map(|(j, c)| if j == nyquist { Complex64::new(0.0, 0.0) } else { c * Complex64::new(0.0, k[j]) })
            .collect();
        let mut d2: Vec<Complex64> = spec.iter().zip(k).map(|(c, k)| c * (-k * k)).collect();
        self.grid.fft_complex(&mut d1, true);
        self.grid.fft_complex(&mut d2, true);
        (d1, d2)
    }

    /// Energy `⟨ψ|H|ψ⟩`.
    pub fn energy(&self) -> f64 {
        let n = self.grid.n() as f64;
        let h = self.grid.h();
        let kinetic: f64 = self
            .spectrum()
            .iter()
            .zip(self.grid.wavenumbers())
            .map(|(c, k)| self.hbar * self.hbar * k * k / (2.0 * self.mass) * c.norm_sqr())
            .sum::<f64>()
            * h
            / n;
        let potential: f64 =
            self.psi.iter().zip(self.potential.values()).map(|(c, v)| v * c.norm_sqr()).sum::<f64>() * h;
        kinetic + potential
    }
}

/// Strang propagator factors for one step `dt` (real time) or `−i·dt`
/// (imaginary time).
struct Splitting {
    kinetic: Vec<Complex64>,
    potential: Vec<Complex64>,
}

impl Splitting {
    fn new(psi: &WaveFunction, dt: f64, imaginary: bool) -> Self {
        let (hbar, mass) = (psi.hbar, psi.mass);
        let phase = |theta: f64| if imaginary { Complex64::new((-theta).exp(), 0.0) } else { Complex64::from_polar(1.0, -theta) };
        let kinetic = psi.grid.wavenumbers().iter().map(|k| phase(hbar * k * k * dt / (4.0 * mass))).collect();
        let potential = psi.potential.values().iter().map(|v| phase(v * dt / hbar)).collect();
        Splitting { kinetic, potential }
    }

    fn apply(&self, grid: &Grid, psi: &mut [Complex64]) {
        grid.fft_complex(psi, false);
        psi.iter_mut().zip(&self.kinetic).for_each(|(c, f)| *c *= f);
        grid.fft_complex(psi, true);
        psi.iter_mut().zip(&self.potential).for_each(|(c, f)| *c *= f);
        grid.fft_complex(psi, false);
        psi.iter_mut().zip(&self.kinetic).for_each(|(c, f)| *c *= f);
        grid.fft_complex(psi, true);
    }
}

/// Strang split-step evolution; returns `steps + 1` states including `psi0`.
pub fn evolve(psi0: &WaveFunction, dt: f64, steps: usize) -> Result<Vec<WaveFunction>> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("time step {dt} must be positive")));
    }
    let split = Splitting::new(psi0, dt, false);
    let mut states = Vec::with_capacity(steps + 1);
    states.push(psi0.clone());
    let mut psi = psi0.psi.clone();
    for _ in 0..steps {
        split.apply(&psi0.grid, &mut psi);
        states.push(WaveFunction { psi: psi.clone(), ..psi0.clone() });
    }
    Ok(states)
}

/// Ground state by imaginary-time relaxation with step sizes shrinking from
/// `1e−2` to `1e−4`, starting from `guess`.
pub fn ground_state(guess: &WaveFunction) -> Result<WaveFunction> {
    let grid = &guess.grid;
    let mut psi = guess.psi.clone();
    let h = grid.h();
    for &dtau in &[1e-2, 1e-3, 1e-4] {
        let split = Splitting::new(guess, dtau, true);
        let mut last = f64::INFINITY;
        for iteration in 0..2_000_000usize {
            split.apply(grid, &mut psi);
            let total = psi.iter().map(|c| c.norm_sqr()).sum::<f64>() * h;
            let scale = 1.0 / total.sqrt();
            psi.iter_mut().for_each(|c| *c *= scale);
            if iteration % 50 == 49 {
                let e = WaveFunction { psi: psi.clone(), ..guess.clone() }.energy();
                if (last - e).abs() <= 1e-15 * e.abs().max(1.0) {
                    break;
                }
                last = e;
            }
        }
    }
    WaveFunction::new(grid, psi, guess.hbar, guess.mass, &guess.potential)
}

/// Hydrodynamic variables of a wave function.
#[derive(Clone, Debug)]
pub struct MadelungState {
    pub rho: Density,
    /// Current velocity `j/ρ`.
    pub v: Field,
    /// Osmotic velocity `(ħ/2m)∇log ρ`.
    pub u: Field,
    /// `true` where `ρ` is below [`MASK_THRESHOLD`]; fields are zero there.
    pub mask: Vec<bool>,
}

/// Pointwise Madelung fields together with `∇v`, computed from spectral
/// derivatives of `ψ`.
struct LocalFields {
    rho: Vec<f64>,
    v: Vec<f64>,
    dv: Vec<f64>,
    u: Vec<f64>,
    amplitude: Vec<f64>,
}

fn local_fields(psi: &WaveFunction) -> LocalFields {
    let (d1, d2) = psi.derivatives();
    let c = psi.hbar / psi.mass;
    let n = psi.psi.len();
    let mut out = LocalFields {
        rho: vec![0.0; n],
        v: vec![0.0; n],
        dv: vec![0.0; n],
        u: vec![0.0; n],
        amplitude: vec![0.0; n],
    };
    for i in 0..n {
        let p = psi.psi[i];
        let rho = p.norm_sqr();
        let pd = p.conj() * d1[i];
        let j = c * pd.im;
        let dj = c * (p.conj() * d2[i]).im;
        let drho = 2.0 * pd.re;
        out.rho[i] = rho;
        out.amplitude[i] = rho.sqrt();
        out.v[i] = j / rho;
        out.dv[i] = (dj * rho - j * drho) / (rho * rho);
        out.u[i] = c * pd.re / rho;
    }
    out
}

/// Madelung decomposition of `psi`.
pub fn to_madelung(psi: &WaveFunction) -> Result<MadelungState> {
    let f = local_fields(psi);
    let mask: Vec<bool> = f.rho.iter().map(|r| *r < MASK_THRESHOLD).collect();
    let zeroed = |vals: Vec<f64>| vals.into_iter().zip(&mask).map(|(v, m)| if *m { 0.0 } else { v }).collect();
    Ok(MadelungState {
        rho: psi.density()?,
        v: Field::raw(&psi.grid, zeroed(f.v)),
        u: Field::raw(&psi.grid, zeroed(f.u)),
        mask,
    })
}

/// Residual of `∂_t v + ½∇v² = −(ħ²/8m²)∇^{W2}I − ∇V/m` along `states`
/// spaced by `dt`, on unmasked nodes. The ablated residual flips the sign
/// of the Fisher term.
pub fn newton_residual_madelung(states: &[WaveFunction], dt: f64) -> Result<NewtonResidualReport> {
    if states.len() < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 states, got {}", states.len())));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("time step {dt} must be positive")));
    }
    let grid = states[0].grid.clone();
    for s in states {
        grid.ensure_same(&s.grid)?;
    }
    let (hbar, mass) = (states[0].hbar, states[0].mass);
    let force = grid.local_derivative(states[0].potential.values());
    let fields: Vec<LocalFields> = states.par_iter().map(local_fields).collect();
    let h = grid.h();
    let rows: Vec<(f64, f64)> = (1..states.len() - 1)
        .into_par_iter()
        .map(|k| {
            let f = &fields[k];
            let amplitude = Field::raw(&grid, f.amplitude.clone());
            let fisher = fisher_gradient_from_amplitude(&amplitude);
            let coeff = hbar * hbar / (8.0 * mass * mass);
            let total: f64 = f.rho.iter().filter(|r| **r >= MASK_THRESHOLD).sum::<f64>() * h;
            let (mut full, mut flipped) = (0.0, 0.0);
            for i in 0..grid.n() {
                if f.rho[i] < MASK_THRESHOLD {
                    continue;
                }
                let accel = (fields[k + 1].v[i] - fields[k - 1].v[i]) / (2.0 * dt) + f.v[i] * f.dv[i];
                let base = accel + force[i] / mass;
                let r1 = base + coeff * fisher.values()[i];
                let r2 = base - coeff * fisher.values()[i];
                full += r1 * r1 * f.rho[i];
                flipped += r2 * r2 * f.rho[i];
            }
            ((full * h / total).sqrt(), (flipped * h / total).sqrt())
        })
        .collect();
    let times = (1..states.len() - 1).map(|k| k as f64 * dt).collect();
    Ok(NewtonResidualReport::new(
        times,
        rows.iter().map(|r| r.0).collect(),
        rows.iter().map(|r| r.1).collect(),
        None,
    ))
}
