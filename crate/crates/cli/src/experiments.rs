use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wflow_core::bridge::{
    action_integrand, entropic_action, entropic_action_curve, entropy_boundary_term, perturbed_curve, random_smooth_field,
    zero_noise_study,
};
use wflow_core::geometry::{convergence_order, newton_residual_bridge};
use wflow_core::madelung::{evolve, ground_state, newton_residual_madelung};
use wflow_core::ot::{bb_action, constant_speed_check, displacement_curve};
use wflow_core::prior::{invariant_measure, is_reversible};
use wflow_core::{
    build_prior, solve_bridge, ActionForm, BridgeSolution, Density, Field, FlowCurve, Grid, Prior, Reversibility, WaveFunction,
};

use crate::config::{DriftSpec, Experiment, GridSpec, MarginalSpec, RunConfig};
use crate::error::{setup, CliError};
use crate::expr::Expression;
use crate::manifest::{Convergence, FileEntry, Level, PlotSpec, RunManifest, Versions, MANIFEST_NAME};
use crate::output::{write_atomic, Table};
use crate::plot::emit_plots;

pub const DIAGNOSTICS_NAME: &str = "diagnostics.json";

/// Command-line overrides of a config.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    /// Number of times `n` and `M` are doubled after the base run.
    pub refine: usize,
}

struct Output {
    name: &'static str,
    table: Table,
    plot: Option<PlotSpec>,
}

#[derive(Default)]
struct LevelOutput {
    results: BTreeMap<String, f64>,
    checks: BTreeMap<String, bool>,
    outputs: Vec<Output>,
    /// Quantity tracked under refinement.
    metric: Option<(&'static str, f64)>,
}

impl LevelOutput {
    fn result(&mut self, key: &str, value: f64) {
        self.results.insert(key.to_string(), value);
    }

    fn check(&mut self, key: &str, value: bool) {
        self.checks.insert(key.to_string(), value);
    }

    fn output(&mut self, name: &'static str, table: Table, plot: Option<PlotSpec>) {
        self.outputs.push(Output { name, table, plot });
    }
}

/// Runs the experiment of `config` (and its refinements), writes CSVs, SVG
/// plots and `manifest.json` into the output directory.
pub fn run(config: &RunConfig, options: &RunOptions) -> Result<RunManifest, CliError> {
    config.validate()?;
    let out = options
        .out
        .clone()
        .or_else(|| config.output.clone())
        .ok_or_else(|| CliError::Config("no output directory: set `output` or pass --out".into()))?;
    let seed = options.seed.unwrap_or(config.seed);
    std::fs::create_dir_all(&out).map_err(CliError::io(&out))?;
    let stale = out.join(DIAGNOSTICS_NAME);
    match std::fs::remove_file(&stale) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => return Err(CliError::io(stale)(e)),
        _ => {}
    }

    let start = Instant::now();
    let mut levels = Vec::new();
    let mut files = Vec::new();
    let mut metric = None;
    for k in 0..=options.refine {
        let level_config = config.refined(k);
        let dir = if k == 0 { String::new() } else { format!("refine-{k}/") };
        let level_start = Instant::now();
        let result = run_level(&level_config, seed);
        let level = match result {
            Ok(level) => level,
            Err(e) => {
                persist_failure(&out.join(&dir), &e)?;
                return Err(e);
            }
        };
        for output in level.outputs {
            let path = format!("{dir}{}.csv", output.name);
            write_atomic(&out.join(&path), output.table.to_csv().as_bytes())?;
            let plot = output.plot.map(|p| match p {
                PlotSpec::Snapshots { grid, title } => PlotSpec::Snapshots { grid: format!("{dir}{grid}"), title },
                other => other,
            });
            files.push(FileEntry { path, rows: output.table.rows.len(), columns: output.table.columns, plot });
        }
        if let Some((name, value)) = level.metric {
            metric
                .get_or_insert_with(|| Convergence { metric: name.to_string(), values: Vec::new(), orders: Vec::new() })
                .values
                .push(value);
        }
        levels.push(Level {
            n: level_config.grid.n(),
            steps: level_config.steps,
            wall_time_s: level_start.elapsed().as_secs_f64(),
            results: level.results,
            checks: level.checks,
        });
    }
    if let Some(m) = metric.as_mut() {
        m.orders = m.values.windows(2).map(|w| convergence_order(w[0], w[1])).collect();
    }
    let convergence = metric.filter(|_| options.refine > 0);

    let mut manifest = RunManifest {
        versions: Versions { wflow: env!("CARGO_PKG_VERSION").to_string(), manifest: 1 },
        config: config.clone(),
        seed,
        wall_time_s: 0.0,
        levels,
        convergence,
        files,
        plots: Vec::new(),
    };
    match emit_plots(&manifest, &out) {
        Ok(plots) => manifest.plots = plots,
        Err(e) => eprintln!("warning: plotting failed: {e}"),
    }
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    manifest.write(&out.join(MANIFEST_NAME))?;
    Ok(manifest)
}

fn persist_failure(dir: &Path, error: &CliError) -> Result<(), CliError> {
    let mut report = serde_json::Map::new();
    report.insert("error".into(), error.to_string().into());
    report.insert("exit_code".into(), error.exit_code().into());
    if let CliError::Convergence(wflow_core::Error::NotConverged { iterations, defect, history }) = error {
        report.insert("iterations".into(), (*iterations).into());
        report.insert("defect".into(), (*defect).into());
        let mut table = Table::new(vec!["iteration".into(), "defect".into()]);
        for (i, d) in history.iter().enumerate() {
            table.push(vec![(i + 1) as f64, *d]);
        }
        write_atomic(&dir.join("sinkhorn_history.csv"), table.to_csv().as_bytes())?;
    }
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Internal(e.to_string()))?;
    write_atomic(&dir.join(DIAGNOSTICS_NAME), text.as_bytes())
}

fn run_level(config: &RunConfig, seed: u64) -> Result<LevelOutput, CliError> {
    let grid = build_grid(&config.grid)?;
    match config.experiment {
        Experiment::Bridge => bridge(config, &grid),
        Experiment::Displacement => displacement(config, &grid),
        Experiment::Madelung => madelung(config, &grid),
        Experiment::NewtonCheck => newton_check(config, &grid),
        Experiment::ZeroNoise => zero_noise(config, &grid),
        Experiment::ActionTable => action_table(config, &grid, seed),
    }
}

fn build_grid(spec: &GridSpec) -> Result<Grid, CliError> {
    match *spec {
        GridSpec::Line { x_min, x_max, n } => Grid::line(x_min, x_max, n),
        GridSpec::Circle { length, n } => Grid::circle(length, n),
    }
    .map_err(setup)
}

fn build_prior_from(config: &RunConfig, grid: &Grid) -> Result<Prior, CliError> {
    let drift = match &config.prior.drift {
        DriftSpec::Zero => Field::zeros(grid),
        DriftSpec::Constant { c } => Field::constant(grid, *c),
        DriftSpec::Langevin { u } => {
            let u = Expression::parse(u)?;
            if let wflow_core::Domain::Circle { length } = grid.domain() {
                let (u0, u1) = (u.value(0.0)?, u.value(length)?);
                if (u0 - u1).abs() > 1e-9 * (1.0 + u0.abs()) {
                    return Err(CliError::Config(format!("potential `{}` is not periodic on the circle", u.text())));
                }
            }
            let slope = u.sample_derivative(grid.nodes())?;
            Field::new(grid, slope.into_iter().map(|s| -s).collect()).map_err(setup)?
        }
    };
    build_prior(grid, config.prior.a, &drift).map_err(setup)
}

fn build_marginal(spec: &MarginalSpec, grid: &Grid, prior: &Prior) -> Result<Density, CliError> {
    match spec {
        MarginalSpec::Gaussian { mean, std } => Density::gaussian(grid, *mean, *std).map_err(setup),
        MarginalSpec::VonMises { mean, kappa } => Density::von_mises(grid, *mean, *kappa).map_err(setup),
        MarginalSpec::Gibbs { u, a } => {
            let u = Expression::parse(u)?;
            let potential = Field::new(grid, u.sample(grid.nodes())?).map_err(setup)?;
            Density::gibbs(&potential, a.unwrap_or(prior.a())).map_err(setup)
        }
        MarginalSpec::Invariant => Ok(invariant_measure(prior).map_err(setup)?.m),
        MarginalSpec::Mixture { weights, parts } => {
            let total: f64 = weights.iter().sum();
            let parts = weights
                .iter()
                .zip(parts)
                .map(|(w, p)| Ok((w / total, build_marginal(p, grid, prior)?)))
                .collect::<Result<Vec<_>, CliError>>()?;
            Density::mixture(&parts).map_err(setup)
        }
        MarginalSpec::Tabulated { path } => {
            let table = Table::read(path)?;
            let missing = |c: &str| CliError::Config(format!("{}: missing column `{c}`", path.display()));
            let x = table.column("x").ok_or_else(|| missing("x"))?;
            let density = table.column("density").ok_or_else(|| missing("density"))?;
            let tolerance = 1e-9 * grid.h();
            if x.len() != grid.n() || x.iter().zip(grid.nodes()).any(|(a, b)| (a - b).abs() > tolerance) {
                return Err(CliError::Config(format!("{}: x column does not match the grid nodes", path.display())));
            }
            Density::from_values(grid, density).map_err(setup)
        }
    }
}

fn marginals(config: &RunConfig, grid: &Grid, prior: &Prior) -> Result<(Density, Density), CliError> {
    let spec = config.marginals.as_ref().ok_or_else(|| CliError::Config("missing [marginals]".into()))?;
    let mu0 = build_marginal(&spec.mu0, grid, prior)?;
    let mu1 = build_marginal(&spec.mu1, grid, prior)?;
    if !grid.is_circle() {
        mu0.require_vanishing_boundary().map_err(setup)?;
        mu1.require_vanishing_boundary().map_err(setup)?;
    }
    Ok((mu0, mu1))
}

fn solve(config: &RunConfig, grid: &Grid) -> Result<BridgeSolution, CliError> {
    let prior = build_prior_from(config, grid)?;
    let (mu0, mu1) = marginals(config, grid, &prior)?;
    let tol = config.tolerances;
    Ok(solve_bridge(&prior, &mu0, &mu1, config.steps, tol.sinkhorn, tol.max_iter)?)
}

fn grid_table(grid: &Grid) -> Table {
    let mut table = Table::new(vec!["x".into()]);
    grid.nodes().iter().for_each(|&x| table.push(vec![x]));
    table
}

fn profile_table(prefix: &str, times: &[f64], fields: &[&[f64]]) -> Table {
    let mut table = Table::indexed("t", prefix, fields.first().map_or(0, |f| f.len()));
    for (t, f) in times.iter().zip(fields) {
        let mut row = vec![*t];
        row.extend_from_slice(f);
        table.push(row);
    }
    table
}

fn snapshots(title: &str) -> Option<PlotSpec> {
    Some(PlotSpec::Snapshots { grid: "grid.csv".into(), title: title.into() })
}

fn lines(x: &str, y: &[&str], title: &str, markers: bool) -> Option<PlotSpec> {
    Some(PlotSpec::Lines { x: x.into(), y: y.iter().map(|s| s.to_string()).collect(), title: title.into(), markers })
}

fn is_reversible_prior(prior: &Prior) -> Result<bool, CliError> {
    Ok(matches!(is_reversible(prior)?, Reversibility::Reversible(_)))
}

fn bridge(config: &RunConfig, grid: &Grid) -> Result<LevelOutput, CliError> {
    let sol = solve(config, grid)?;
    let mut out = LevelOutput::default();
    let reversible = is_reversible_prior(&sol.prior)?;
    let curve = sol.curve()?;
    let continuity = curve.continuity_defect().into_iter().fold(0.0, f64::max);

    out.result("primal_action", entropic_action(&sol, ActionForm::Primal)?);
    out.result("expanded_action", entropic_action(&sol, ActionForm::Expanded)?);
    if reversible {
        out.result("relative_fisher_action", entropic_action(&sol, ActionForm::RelativeFisher)?);
    }
    out.result("entropy_boundary_term", entropy_boundary_term(&sol.prior, &sol.mu0, &sol.mu1));
    out.result("iterations", sol.iterations as f64);
    out.result("marginal_error", sol.marginal_error);
    out.result("decay_ratio_10", sol.decay_ratio(10));
    out.result("renormalization_defect", sol.renormalization_defect);
    out.result("continuity_defect", continuity);
    out.check("converged", sol.converged);
    out.check("reversible_prior", reversible);
    out.metric = Some(("continuity_defect", continuity));

    let rho: Vec<&[f64]> = sol.rho.iter().map(|r| r.values()).collect();
    let vel: Vec<&[f64]> = sol.velocity.iter().map(|v| v.values()).collect();
    out.output("grid", grid_table(grid), None);
    out.output("density", profile_table("rho", &sol.times, &rho), snapshots("bridge densities"));
    out.output("velocity", profile_table("v", &sol.times, &vel), snapshots("current velocity"));

    let primal = action_integrand(&sol.prior, &curve, ActionForm::Primal)?;
    let expanded = action_integrand(&sol.prior, &curve, ActionForm::Expanded)?;
    let mut action = Table::new(vec!["t".into(), "primal".into(), "expanded".into()]);
    for k in 0..sol.times.len() {
        action.push(vec![sol.times[k], primal[k], expanded[k]]);
    }
    out.output("action", action, lines("t", &["primal", "expanded"], "action integrands", false));

    let mut history = Table::new(vec!["iteration".into(), "defect".into()]);
    for (i, d) in sol.defect_history.iter().enumerate() {
        history.push(vec![(i + 1) as f64, *d]);
    }
    out.output("sinkhorn", history, None);
    Ok(out)
}

fn displacement(config: &RunConfig, grid: &Grid) -> Result<LevelOutput, CliError> {
    let prior = build_prior_from(config, grid)?;
    let (mu0, mu1) = marginals(config, grid, &prior)?;
    let curve = displacement_curve(&mu0, &mu1, config.steps)?;
    let speed = constant_speed_check(&curve)?;
    let bb = bb_action(&curve.curve()?);
    let w2sq = curve.w2 * curve.w2;

    let mut out = LevelOutput::default();
    out.result("w2", curve.w2);
    out.result("bb_action", bb);
    out.result("bb_relative_gap", if w2sq > 0.0 { (bb / w2sq - 1.0).abs() } else { bb });
    out.result("speed_spread", speed.speed_spread);
    out.result("max_acceleration", speed.max_acceleration);
    out.metric = Some(("max_acceleration", speed.max_acceleration));

    let rho: Vec<&[f64]> = curve.rho.iter().map(|r| r.values()).collect();
    let vel: Vec<&[f64]> = curve.velocity.iter().map(|v| v.values()).collect();
    out.output("grid", grid_table(grid), None);
    out.output("density", profile_table("rho", &curve.times, &rho), snapshots("displacement interpolation"));
    out.output("velocity", profile_table("v", &curve.times, &vel), snapshots("velocity"));
    let mut table = Table::new(vec!["t".into(), "speed".into(), "acceleration".into()]);
    let m = curve.times.len() - 1;
    for k in 0..=m {
        let accel = if k == 0 || k == m { f64::NAN } else { speed.acceleration[k - 1] };
        table.push(vec![curve.times[k], speed.speeds[k], accel]);
    }
    out.output("speed", table, lines("t", &["speed", "acceleration"], "speed and geodesic acceleration", false));
    Ok(out)
}

fn madelung(config: &RunConfig, grid: &Grid) -> Result<LevelOutput, CliError> {
    let spec = config.madelung.as_ref().ok_or_else(|| CliError::Config("missing [madelung]".into()))?;
    let v = Expression::parse(&spec.potential)?;
    let potential = Field::new(grid, v.sample(grid.nodes())?).map_err(setup)?;
    let p = spec.packet;
    let mut psi = WaveFunction::gaussian_packet(grid, p.center, p.sigma, p.k0, spec.hbar, spec.mass, &potential).map_err(setup)?;
    if spec.ground_state {
        psi = ground_state(&psi)?;
    }
    let states = evolve(&psi, spec.dt, config.steps)?;
    let report = newton_residual_madelung(&states, spec.dt)?;
    let times: Vec<f64> = (0..states.len()).map(|k| k as f64 * spec.dt).collect();

    let norms: Vec<f64> = states.iter().map(|s| s.norm_squared()).collect();
    let energies: Vec<f64> = states.iter().map(|s| s.energy()).collect();
    let norm_drift = norms.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
    let energy_drift = energies.iter().map(|e| (e - energies[0]).abs()).fold(0.0, f64::max);

    let mut out = LevelOutput::default();
    out.result("max_residual", report.max_residual);
    out.result("max_ablated", report.max_ablated);
    out.result("ablation_ratio", report.max_ablated / report.max_residual);
    out.result("max_norm_drift_per_step", norm_drift);
    out.result("max_energy_drift", energy_drift);
    out.result("energy", energies[0]);
    out.metric = Some(("max_residual", report.max_residual));

    let densities = states.iter().map(|s| s.density()).collect::<Result<Vec<_>, _>>()?;
    let rho: Vec<&[f64]> = densities.iter().map(|r| r.values()).collect();
    out.output("grid", grid_table(grid), None);
    out.output("density", profile_table("rho", &times, &rho), snapshots("Madelung density"));
    let mut residual = Table::new(vec!["t".into(), "residual".into(), "ablated".into()]);
    for (k, t) in report.times.iter().enumerate() {
        residual.push(vec![*t, report.residual[k], report.ablated[k]]);
    }
    out.output("residual", residual, lines("t", &["residual", "ablated"], "Newton-law residual", false));
    let mut conservation = Table::new(vec!["t".into(), "norm".into(), "energy".into()]);
    for k in 0..states.len() {
        conservation.push(vec![times[k], norms[k], energies[k]]);
    }
    out.output("conservation", conservation, None);
    Ok(out)
}

fn newton_check(config: &RunConfig, grid: &Grid) -> Result<LevelOutput, CliError> {
    let sol = solve(config, grid)?;
    let report = newton_residual_bridge(&sol)?;
    let mut out = LevelOutput::default();
    out.result("max_residual", report.max_residual);
    out.result("max_ablated", report.max_ablated);
    out.result("ablation_ratio", report.max_ablated / report.max_residual);
    if let Some(alt) = &report.alternative {
        out.result("max_alternative", alt.iter().cloned().fold(0.0, f64::max));
    }
    out.check("reversible_prior", is_reversible_prior(&sol.prior)?);
    out.metric = Some(("max_residual", report.max_residual));

    let mut columns = vec!["t".to_string(), "residual".into(), "ablated".into()];
    if report.alternative.is_some() {
        columns.push("alternative".into());
    }
    let mut table = Table::new(columns);
    for (k, t) in report.times.iter().enumerate() {
        let mut row = vec![*t, report.residual[k], report.ablated[k]];
        if let Some(alt) = &report.alternative {
            row.push(alt[k]);
        }
        table.push(row);
    }
    out.output("residual", table, lines("t", &["residual", "ablated"], "Newton-law residual", false));
    Ok(out)
}

fn zero_noise(config: &RunConfig, grid: &Grid) -> Result<LevelOutput, CliError> {
    let spec = config.zero_noise.as_ref().ok_or_else(|| CliError::Config("missing [zero_noise]".into()))?;
    let prior = build_prior_from(config, grid)?;
    let (mu0, mu1) = marginals(config, grid, &prior)?;
    let tol = config.tolerances;
    let rows = zero_noise_study(&mu0, &mu1, &spec.a_list, config.steps, tol.sinkhorn, tol.max_iter)?;

    let mut out = LevelOutput::default();
    let mut table = Table::new(vec!["a".into(), "d".into(), "iterations".into()]);
    for row in &rows {
        table.push(vec![row.a, row.distance, row.iterations as f64]);
        out.result(&format!("d(a={})", row.a), row.distance);
    }
    let mut by_a = rows.clone();
    by_a.sort_by(|x, y| y.a.total_cmp(&x.a));
    let decreasing = by_a.windows(2).all(|w| w[1].distance < w[0].distance);
    out.check("d_strictly_decreasing", decreasing);
    if let Some(smallest) = by_a.last() {
        out.metric = Some(("d_smallest_a", smallest.distance));
    }
    out.output("zero_noise", table, lines("a", &["d"], "distance to displacement interpolation", true));
    Ok(out)
}

fn action_table(config: &RunConfig, grid: &Grid, seed: u64) -> Result<LevelOutput, CliError> {
    let sol = solve(config, grid)?;
    let prior = &sol.prior;
    let reversible = is_reversible_prior(prior)?;
    let base = FlowCurve::from_densities(sol.times.clone(), sol.rho.clone())?;
    let boundary = entropy_boundary_term(prior, &sol.mu0, &sol.mu1);
    let spec = config.perturbations;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut curves = vec![base.clone()];
    for _ in 0..spec.count {
        let eta = random_smooth_field(grid, &mut rng, spec.modes);
        curves.push(perturbed_curve(&base, &eta, spec.amplitude)?);
    }

    let mut columns = vec!["curve".to_string(), "primal".into(), "expanded".into(), "gap".into(), "margin".into()];
    if reversible {
        columns.push("relative_fisher".into());
    }
    let mut table = Table::new(columns);
    let mut best = f64::NAN;
    let (mut gap_lo, mut gap_hi, mut min_margin) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY);
    for (i, curve) in curves.iter().enumerate() {
        let primal = entropic_action_curve(prior, curve, ActionForm::Primal)?;
        let expanded = entropic_action_curve(prior, curve, ActionForm::Expanded)?;
        if i == 0 {
            best = primal;
        } else {
            min_margin = min_margin.min(primal - best);
        }
        let gap = primal - expanded - boundary;
        gap_lo = gap_lo.min(gap);
        gap_hi = gap_hi.max(gap);
        let mut row = vec![i as f64, primal, expanded, gap, primal - best];
        if reversible {
            row.push(entropic_action_curve(prior, curve, ActionForm::RelativeFisher)?);
        }
        table.push(row);
    }

    let mut out = LevelOutput::default();
    out.result("optimal_primal", best);
    out.result("boundary_term", boundary);
    out.result("gap_spread", gap_hi - gap_lo);
    out.result("min_margin", min_margin);
    out.check("optimizer_is_minimal", min_margin >= -1e-8);
    out.check("gap_is_curve_independent", gap_hi - gap_lo <= 1e-6);
    out.metric = Some(("gap_spread", gap_hi - gap_lo));
    out.output("action_table", table, None);
    Ok(out)
}
