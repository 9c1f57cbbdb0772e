use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wflow_core::bridge::{DEFAULT_MAX_ITER, DEFAULT_TOLERANCE};
use wflow_core::grid::MIN_NODES;

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Bridge,
    Displacement,
    Madelung,
    NewtonCheck,
    ZeroNoise,
    ActionTable,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Bridge => "bridge",
            Experiment::Displacement => "displacement",
            Experiment::Madelung => "madelung",
            Experiment::NewtonCheck => "newton-check",
            Experiment::ZeroNoise => "zero-noise",
            Experiment::ActionTable => "action-table",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "domain", rename_all = "lowercase", deny_unknown_fields)]
pub enum GridSpec {
    Line { x_min: f64, x_max: f64, n: usize },
    Circle {
        #[serde(default = "default_length")]
        length: f64,
        n: usize,
    },
}

fn default_length() -> f64 {
    TAU
}

impl GridSpec {
    pub fn n(&self) -> usize {
        match self {
            GridSpec::Line { n, .. } | GridSpec::Circle { n, .. } => *n,
        }
    }

    fn with_n(&self, n: usize) -> GridSpec {
        match self.clone() {
            GridSpec::Line { x_min, x_max, .. } => GridSpec::Line { x_min, x_max, n },
            GridSpec::Circle { length, .. } => GridSpec::Circle { length, n },
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DriftSpec {
    #[default]
    Zero,
    Constant { c: f64 },
    /// `b = −U′` for a potential expression `U(x)`.
    Langevin { u: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    #[serde(default = "one")]
    pub a: f64,
    #[serde(default)]
    pub drift: DriftSpec,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec { a: 1.0, drift: DriftSpec::Zero }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MarginalSpec {
    Gaussian { mean: f64, std: f64 },
    VonMises { mean: f64, kappa: f64 },
    /// `∝ exp(−2U/a)`; `a` defaults to the prior's diffusivity.
    Gibbs { u: String, a: Option<f64> },
    /// Invariant measure of the prior.
    Invariant,
    Mixture { weights: Vec<f64>, parts: Vec<MarginalSpec> },
    /// CSV with columns `x` and `density` matching the grid nodes.
    Tabulated { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Marginals {
    pub mu0: MarginalSpec,
    pub mu1: MarginalSpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_sinkhorn")]
    pub sinkhorn: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { sinkhorn: DEFAULT_TOLERANCE, max_iter: DEFAULT_MAX_ITER }
    }
}

fn default_sinkhorn() -> f64 {
    DEFAULT_TOLERANCE
}

fn default_max_iter() -> usize {
    DEFAULT_MAX_ITER
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZeroNoiseSpec {
    pub a_list: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketSpec {
    pub center: f64,
    pub sigma: f64,
    #[serde(default)]
    pub k0: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MadelungSpec {
    #[serde(default = "one")]
    pub hbar: f64,
    #[serde(default = "one")]
    pub mass: f64,
    #[serde(default = "zero_potential")]
    pub potential: String,
    pub packet: PacketSpec,
    /// Relax the packet to the ground state before evolving.
    #[serde(default)]
    pub ground_state: bool,
    pub dt: f64,
}

fn zero_potential() -> String {
    "0".into()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    #[serde(default = "default_modes")]
    pub modes: usize,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        PerturbationSpec { count: default_count(), amplitude: default_amplitude(), modes: default_modes() }
    }
}

fn default_count() -> usize {
    20
}

fn default_amplitude() -> f64 {
    0.1
}

fn default_modes() -> usize {
    4
}

/// One experiment, read from a TOML file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub grid: GridSpec,
    /// Number of time steps `M`.
    pub steps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub prior: PriorSpec,
    #[serde(default)]
    pub marginals: Option<Marginals>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub zero_noise: Option<ZeroNoiseSpec>,
    #[serde(default)]
    pub madelung: Option<MadelungSpec>,
    #[serde(default)]
    pub perturbations: PerturbationSpec,
}

impl RunConfig {
    /// Reads and validates a config; relative paths are taken from the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(out) = self.output.as_mut() {
            join(out);
        }
        if let Some(m) = self.marginals.as_mut() {
            for spec in [&mut m.mu0, &mut m.mu1] {
                spec.visit_paths(&join);
            }
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |msg: String| Err(CliError::Config(msg));
        let n = self.grid.n();
        if n < MIN_NODES {
            return fail(format!("grid needs n >= {MIN_NODES}, got {n}"));
        }
        match self.grid {
            GridSpec::Circle { length, n } => {
                if !n.is_power_of_two() {
                    return fail(format!("circle grids need a power-of-two n, got {n}"));
                }
                if !(length > 0.0) {
                    return fail(format!("circle length {length} must be positive"));
                }
            }
            GridSpec::Line { x_min, x_max, .. } => {
                if !(x_max > x_min) {
                    return fail(format!("line needs x_min < x_max, got [{x_min}, {x_max}]"));
                }
            }
        }
        if !(self.prior.a > 0.0) {
            return fail(format!("diffusivity a = {} must be positive", self.prior.a));
        }
        if !(self.tolerances.sinkhorn > 0.0) || self.tolerances.max_iter == 0 {
            return fail("sinkhorn tolerance and max_iter must be positive".into());
        }
        let min_steps = match self.experiment {
            Experiment::Displacement => 4,
            Experiment::Madelung => 2,
            _ => 8,
        };
        if self.steps < min_steps {
            return fail(format!("{} needs steps >= {min_steps}, got {}", self.experiment.name(), self.steps));
        }
        let needs_marginals = !matches!(self.experiment, Experiment::Madelung);
        if needs_marginals {
            let m = self.marginals.as_ref().ok_or_else(|| CliError::Config("missing [marginals]".into()))?;
            for spec in [&m.mu0, &m.mu1] {
                spec.validate()?;
            }
        }
        match self.experiment {
            Experiment::ZeroNoise => {
                let spec = self.zero_noise.as_ref().ok_or_else(|| CliError::Config("missing [zero_noise]".into()))?;
                if spec.a_list.is_empty() || spec.a_list.iter().any(|a| !(*a > 0.0)) {
                    return fail("zero_noise.a_list must hold positive diffusivities".into());
                }
            }
            Experiment::Madelung => {
                let spec = self.madelung.as_ref().ok_or_else(|| CliError::Config("missing [madelung]".into()))?;
                if !matches!(self.grid, GridSpec::Circle { .. }) {
                    return fail("madelung runs need a circle grid".into());
                }
                if !(spec.dt > 0.0) || !(spec.hbar > 0.0) || !(spec.mass > 0.0) || !(spec.packet.sigma > 0.0) {
                    return fail("madelung dt, hbar, mass and packet.sigma must be positive".into());
                }
            }
            Experiment::ActionTable => {
                let p = self.perturbations;
                if p.count == 0 || p.modes == 0 || !(p.amplitude > 0.0) {
                    return fail("perturbations need count, modes and amplitude > 0".into());
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// The config with `n` and `M` doubled `k` times (and the Madelung time
    /// step halved to keep the horizon).
    pub fn refined(&self, k: usize) -> RunConfig {
        let factor = 1usize << k;
        let mut out = self.clone();
        out.grid = self.grid.with_n(self.grid.n() * factor);
        out.steps = self.steps * factor;
        if let Some(m) = out.madelung.as_mut() {
            m.dt /= factor as f64;
        }
        out
    }
}

impl MarginalSpec {
    fn visit_paths(&mut self, f: &impl Fn(&mut PathBuf)) {
        match self {
            MarginalSpec::Tabulated { path } => f(path),
            MarginalSpec::Mixture { parts, .. } => parts.iter_mut().for_each(|p| p.visit_paths(f)),
            _ => {}
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        match self {
            MarginalSpec::Gaussian { std, .. } if !(*std > 0.0) => {
                Err(CliError::Config(format!("gaussian std {std} must be positive")))
            }
            MarginalSpec::Gibbs { a: Some(a), .. } if !(*a > 0.0) => {
                Err(CliError::Config(format!("gibbs a = {a} must be positive")))
            }
            MarginalSpec::Mixture { weights, parts } => {
                if weights.len() != parts.len() || parts.is_empty() {
                    return Err(CliError::Config("mixture needs one weight per part".into()));
                }
                if weights.iter().any(|w| !(*w >= 0.0)) || !(weights.iter().sum::<f64>() > 0.0) {
                    return Err(CliError::Config("mixture weights must be non-negative and not all zero".into()));
                }
                parts.iter().try_for_each(MarginalSpec::validate)
            }
            MarginalSpec::Tabulated { path } if !path.is_file() => {
                Err(CliError::Config(format!("tabulated marginal {} does not exist", path.display())))
            }
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BRIDGE: &str = r#"
experiment = "bridge"
steps = 16

[grid]
domain = "circle"
n = 64

[prior]
a = 1.0
drift = { kind = "langevin", u = "cos(x)" }

[marginals]
mu0 = { kind = "von-mises", mean = 1.0, kappa = 2.0 }
mu1 = { kind = "mixture", weights = [0.5, 0.5], parts = [{ kind = "invariant" }, { kind = "gaussian", mean = 3.0, std = 0.7 }] }
"#;

    #[test]
    fn parses_and_round_trips() {
        let config = RunConfig::parse(BRIDGE).unwrap();
        config.validate().unwrap();
        assert_eq!(config.grid, GridSpec::Circle { length: TAU, n: 64 });
        assert_eq!(config.tolerances, Tolerances::default());
        let text = toml::to_string(&config).unwrap();
        assert_eq!(RunConfig::parse(&text).unwrap(), config);
    }

    #[test]
    fn refinement_doubles_sizes() {
        let config = RunConfig::parse(BRIDGE).unwrap().refined(2);
        assert_eq!((config.grid.n(), config.steps), (256, 64));
    }

    #[test]
    fn rejects_bad_values() {
        let bad = [
            BRIDGE.replace("n = 64", "n = 48"),
            BRIDGE.replace("a = 1.0", "a = -1.0"),
            BRIDGE.replace("steps = 16", "steps = 4"),
            BRIDGE.replace("experiment = \"bridge\"", "experiment = \"zero-noise\""),
            BRIDGE.replace("kappa = 2.0", "kappa = 2.0, extra = 1"),
        ];
        for text in bad {
            let result = RunConfig::parse(&text).and_then(|c| c.validate());
            assert!(matches!(result, Err(CliError::Config(_))), "{text}");
        }
    }
}
