//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::f64::consts::TAU;
use std::path::Path;
use std::process::Command;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wflow_cli::{run, RunConfig, RunOptions};
use wflow_core::bridge::{
    bridge_mixture, entropic_action_curve, entropy_boundary_term, perturbed_curve, random_smooth_field, ActionForm,
    DEFAULT_MAX_ITER, DEFAULT_TOLERANCE,
};
use wflow_core::functionals::{fisher_information, potential_energy, shannon_entropy};
use wflow_core::geometry::{
    directional_derivative, grad_entropy, grad_fisher, grad_potential_energy, inner, newton_residual_bridge,
};
use wflow_core::madelung::{evolve, ground_state, newton_residual_madelung};
use wflow_core::ot::{bb_action, constant_speed_check, displacement_curve};
use wflow_core::prior::invariant_measure;
use wflow_core::{build_prior, gradient, solve_bridge, BridgeSolution, Density, Field, FlowCurve, Grid, WaveFunction};

type Check = Result<(bool, String), String>;

fn fail(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn circle_bridge(n: usize, m: usize, drift: fn(f64) -> f64) -> Result<BridgeSolution, String> {
    let g = Grid::circle(TAU, n).map_err(fail)?;
    let prior = build_prior(&g, 1.0, &Field::from_fn(&g, drift)).map_err(fail)?;
    let mu0 = Density::von_mises(&g, 1.0, 2.0).map_err(fail)?;
    let mu1 = Density::von_mises(&g, 4.0, 1.5).map_err(fail)?;
    solve_bridge(&prior, &mu0, &mu1, m, DEFAULT_TOLERANCE, DEFAULT_MAX_ITER).map_err(fail)
}

fn trivial_bridge(drift: fn(f64) -> f64) -> Result<BridgeSolution, String> {
    let g = Grid::circle(TAU, 128).map_err(fail)?;
    let prior = build_prior(&g, 1.0, &Field::from_fn(&g, drift)).map_err(fail)?;
    let m = invariant_measure(&prior).map_err(fail)?.m;
    solve_bridge(&prior, &m, &m, 16, DEFAULT_TOLERANCE, DEFAULT_MAX_ITER).map_err(fail)
}

fn line_bridge(a: f64) -> Result<BridgeSolution, String> {
    let g = Grid::line(-8.0, 8.0, 128).map_err(fail)?;
    let prior = build_prior(&g, a, &Field::zeros(&g)).map_err(fail)?;
    let mu0 = Density::gaussian(&g, -1.0, 0.5).map_err(fail)?;
    let mu1 = Density::gaussian(&g, 1.0, 0.7).map_err(fail)?;
    solve_bridge(&prior, &mu0, &mu1, 32, DEFAULT_TOLERANCE, DEFAULT_MAX_ITER).map_err(fail)
}

/// Bridges shared between criteria; every one of them enters the
/// Sinkhorn convergence check.
struct Fixtures {
    bridges: Vec<(&'static str, Result<BridgeSolution, String>)>,
}

impl Fixtures {
    fn build() -> Self {
        let sin: fn(f64) -> f64 = f64::sin;
        let one: fn(f64) -> f64 = |_| 1.0;
        let mut bridges = vec![
            ("reversible 128/32", circle_bridge(128, 32, sin)),
            ("reversible 256/64", circle_bridge(256, 64, sin)),
            ("reversible 128/64", circle_bridge(128, 64, sin)),
            ("non-reversible 256/64", circle_bridge(256, 64, one)),
            ("non-reversible 128/64", circle_bridge(128, 64, one)),
            ("mixing 32/8", circle_bridge(32, 8, |x| 1.0 + 0.5 * x.cos())),
            ("trivial reversible", trivial_bridge(sin)),
            ("trivial non-reversible", trivial_bridge(one)),
        ];
        for (name, a) in [("line a=0.8", 0.8), ("line a=0.4", 0.4), ("line a=0.2", 0.2), ("line a=0.1", 0.1)] {
            bridges.push((name, line_bridge(a)));
        }
        Fixtures { bridges }
    }

    fn get(&self, name: &str) -> Result<&BridgeSolution, String> {
        let (_, sol) = self.bridges.iter().find(|(n, _)| *n == name).ok_or_else(|| format!("no fixture {name}"))?;
        sol.as_ref().map_err(|e| format!("{name}: {e}"))
    }
}

fn geodesic_law(_: &Fixtures) -> Check {
    let translation = |n, m| -> Result<_, String> {
        let g = Grid::line(-8.0, 10.0, n).map_err(fail)?;
        let mu0 = Density::gaussian(&g, 0.0, 1.0).map_err(fail)?;
        displacement_curve(&mu0, &Density::gaussian(&g, 2.0, 1.0).map_err(fail)?, m).map_err(fail)
    };
    let scaling = |n, m| -> Result<_, String> {
        let g = Grid::line(-16.0, 16.0, n).map_err(fail)?;
        let mu0 = Density::gaussian(&g, 0.0, 1.0).map_err(fail)?;
        displacement_curve(&mu0, &Density::gaussian(&g, 0.0, 2.0).map_err(fail)?, m).map_err(fail)
    };
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, coarse, fine) in [("translation", translation(128, 32)?, translation(256, 64)?), ("scaling", scaling(128, 32)?, scaling(256, 64)?)] {
        let c = constant_speed_check(&coarse).map_err(fail)?;
        let f = constant_speed_check(&fine).map_err(fail)?;
        let bb = bb_action(&fine.curve().map_err(fail)?);
        let bb_gap = (bb / (fine.w2 * fine.w2) - 1.0).abs();
        let ratio = c.max_acceleration / f.max_acceleration;
        pass &= ratio >= 2.0 && f.speed_spread <= 1e-3 && bb_gap <= 1e-4;
        detail.push(format!("{name}: accel ratio {ratio:.2}, speed spread {:.1e}, |bb/W2²−1| {bb_gap:.1e}", f.speed_spread));
    }
    Ok((pass, detail.join("; ")))
}

fn reversible_newton_law(fx: &Fixtures) -> Check {
    let coarse = newton_residual_bridge(fx.get("reversible 128/32")?).map_err(fail)?;
    let fine = newton_residual_bridge(fx.get("reversible 256/64")?).map_err(fail)?;
    let trivial = newton_residual_bridge(fx.get("trivial reversible")?).map_err(fail)?;
    let ratio = coarse.max_residual / fine.max_residual;
    Ok((
        ratio >= 2.0 && trivial.max_residual <= 1e-8,
        format!(
            "residual {:.3e} -> {:.3e} (ratio {ratio:.2}), trivial bridge {:.1e}",
            coarse.max_residual, fine.max_residual, trivial.max_residual
        ),
    ))
}

fn viscous_term(fx: &Fixtures) -> Check {
    let report = newton_residual_bridge(fx.get("non-reversible 256/64")?).map_err(fail)?;
    let ratio = report.max_ablated / report.max_residual;
    Ok((ratio >= 5.0, format!("full {:.3e}, ablated {:.3e} (ratio {ratio:.1})", report.max_residual, report.max_ablated)))
}

fn perturbations(sol: &BridgeSolution, count: usize, seed: u64) -> Result<Vec<FlowCurve>, String> {
    let base = FlowCurve::from_densities(sol.times.clone(), sol.rho.clone()).map_err(fail)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut curves = vec![base.clone()];
    for _ in 0..count {
        let eta = random_smooth_field(sol.grid(), &mut rng, 4);
        curves.push(perturbed_curve(&base, &eta, 0.1).map_err(fail)?);
    }
    Ok(curves)
}

fn expanded_form(fx: &Fixtures) -> Check {
    let sol = fx.get("non-reversible 128/64")?;
    let boundary = entropy_boundary_term(&sol.prior, &sol.mu0, &sol.mu1);
    let gaps = perturbations(sol, 5, 11)?
        .iter()
        .map(|c| {
            let primal = entropic_action_curve(&sol.prior, c, ActionForm::Primal)?;
            Ok(primal - entropic_action_curve(&sol.prior, c, ActionForm::Expanded)? - boundary)
        })
        .collect::<wflow_core::Result<Vec<f64>>>()
        .map_err(fail)?;
    let spread = gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - gaps.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok((spread <= 1e-6, format!("spread of Primal − Expanded − boundary over 6 curves {spread:.2e}")))
}

fn optimality(fx: &Fixtures) -> Check {
    let sol = fx.get("reversible 128/64")?;
    let actions = perturbations(sol, 20, 5)?
        .iter()
        .map(|c| entropic_action_curve(&sol.prior, c, ActionForm::Primal))
        .collect::<wflow_core::Result<Vec<f64>>>()
        .map_err(fail)?;
    let margin = actions[1..].iter().map(|a| a - actions[0]).fold(f64::INFINITY, f64::min);
    Ok((margin >= -1e-8, format!("smallest margin over 20 perturbations {margin:.3e}")))
}

fn mixing_identity(fx: &Fixtures) -> Check {
    let sol = fx.get("mixing 32/8")?;
    let mut worst: f64 = 0.0;
    for k in 0..=sol.steps() {
        let mixed = bridge_mixture(sol, k).map_err(fail)?;
        let masses = sol.rho[k].masses();
        worst = mixed.iter().zip(&masses).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
    }
    Ok((worst <= 1e-10, format!("max |mixture − ρ_t h| {worst:.2e}")))
}

fn zero_noise_limit(_: &Fixtures) -> Check {
    let dir = tempfile::tempdir().map_err(fail)?;
    let config = RunConfig::load(&configs().join("zero_noise.toml")).map_err(fail)?;
    let manifest = run(&config, &RunOptions { out: Some(dir.path().to_path_buf()), ..Default::default() }).map_err(fail)?;
    let d: Vec<f64> = [0.8, 0.4, 0.2, 0.1]
        .iter()
        .map(|a| manifest.result(&format!("d(a={a})")).ok_or_else(|| format!("no d(a={a}) in manifest")))
        .collect::<Result<_, _>>()?;
    let decreasing = d.windows(2).all(|w| w[1] < w[0]);
    let shown: Vec<String> = d.iter().map(|v| format!("{v:.4e}")).collect();
    Ok((decreasing && d[3] < d[0], format!("d(0.8, 0.4, 0.2, 0.1) = {}", shown.join(", "))))
}

fn madelung_law(_: &Fixtures) -> Check {
    let norm_drift = |states: &[WaveFunction]| {
        states.windows(2).map(|w| (w[1].norm_squared() - w[0].norm_squared()).abs()).fold(0.0, f64::max)
    };
    let free = |n: usize, dt: f64| -> Result<_, String> {
        let g = Grid::circle(40.0, n).map_err(fail)?;
        let psi = WaveFunction::gaussian_packet(&g, 20.0, 1.0, 1.0, 1.0, 1.0, &Field::zeros(&g)).map_err(fail)?;
        let states = evolve(&psi, dt, (0.5 / dt).round() as usize).map_err(fail)?;
        Ok((newton_residual_madelung(&states, dt).map_err(fail)?, norm_drift(&states)))
    };
    let (coarse, drift_c) = free(128, 5e-3)?;
    let (fine, drift_f) = free(256, 2.5e-3)?;

    let g = Grid::circle(20.0, 256).map_err(fail)?;
    let v = Field::from_fn(&g, |x| 0.5 * (x - 10.0) * (x - 10.0));
    let guess = WaveFunction::gaussian_packet(&g, 10.0, 0.8, 0.0, 1.0, 1.0, &v).map_err(fail)?;
    let gs = ground_state(&guess).map_err(fail)?;
    let states = evolve(&gs, 1e-3, 100).map_err(fail)?;
    let stationary = newton_residual_madelung(&states, 1e-3).map_err(fail)?;
    let drift = drift_c.max(drift_f).max(norm_drift(&states));

    let ratio = coarse.max_residual / fine.max_residual;
    let ablation = fine.max_ablated / fine.max_residual;
    Ok((
        ratio >= 2.0 && ablation >= 10.0 && stationary.max_residual <= 1e-5 && drift <= 1e-12,
        format!(
            "refinement ratio {ratio:.2}, sign ablation ×{ablation:.1e}, ground state {:.1e}, norm drift/step {drift:.1e}",
            stationary.max_residual
        ),
    ))
}

fn gradient_oracles(_: &Fixtures) -> Check {
    let g = Grid::circle(TAU, 256).map_err(fail)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let u = Field::from_fn(&g, |x| x.cos() + 0.3 * (3.0 * x).sin());
    let gap = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs());
    let mut worst = [0.0f64; 3];
    for _ in 0..10 {
        let f = random_smooth_field(&g, &mut rng, 4);
        let mu = Density::new(f.map(|v| (0.8 * v).exp())).map_err(fail)?;
        let w = gradient(&random_smooth_field(&g, &mut rng, 5));
        let e = directional_derivative(&mu, &w, |m| Ok(shannon_entropy(m))).map_err(fail)?;
        let i = directional_derivative(&mu, &w, |m| Ok(fisher_information(m))).map_err(fail)?;
        let p = directional_derivative(&mu, &w, |m| potential_energy(m, &u)).map_err(fail)?;
        worst[0] = worst[0].max(gap(inner(&mu, &grad_entropy(&mu), &w), e));
        worst[1] = worst[1].max(gap(inner(&mu, &grad_fisher(&mu), &w), i));
        worst[2] = worst[2].max(gap(inner(&mu, &grad_potential_energy(&u), &w), p));
    }
    Ok((
        worst.iter().all(|w| *w <= 1e-4),
        format!("max relative gaps: entropy {:.1e}, Fisher {:.1e}, potential {:.1e}", worst[0], worst[1], worst[2]),
    ))
}

fn sinkhorn(fx: &Fixtures) -> Check {
    let mut pass = true;
    let (mut worst_defect, mut worst_ratio) = (0.0f64, 0.0f64);
    for (name, sol) in &fx.bridges {
        let sol = sol.as_ref().map_err(|e| format!("{name}: {e}"))?;
        worst_defect = worst_defect.max(sol.marginal_error);
        worst_ratio = worst_ratio.max(sol.decay_ratio(10));
        pass &= sol.converged && sol.marginal_error <= 1e-11 && sol.decay_ratio(10) <= 0.9;
    }
    Ok((pass, format!("{} fixtures, worst defect {worst_defect:.1e}, worst 10-step decay ratio {worst_ratio:.2e}", fx.bridges.len())))
}

fn configs() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"))
}

fn csv_files(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(fail)? {
        let path = entry.map_err(fail)?.path();
        if path.extension().is_some_and(|e| e == "csv") {
            let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
            files.push((name, std::fs::read(&path).map_err(fail)?));
        }
    }
    files.sort();
    Ok(files)
}

fn determinism(_: &Fixtures) -> Check {
    let mut pass = true;
    let mut compared = 0;
    for config in ["action_table.toml", "bridge.toml"] {
        let dirs = [tempfile::tempdir().map_err(fail)?, tempfile::tempdir().map_err(fail)?];
        for dir in &dirs {
            let status = Command::new(env!("CARGO_BIN_EXE_wflow"))
                .arg("run")
                .arg(configs().join(config))
                .arg("--out")
                .arg(dir.path())
                .args(["--seed", "17"])
                .output()
                .map_err(fail)?;
            if !status.status.success() {
                return Err(format!("{config}: {}", String::from_utf8_lossy(&status.stderr)));
            }
        }
        let (a, b) = (csv_files(dirs[0].path())?, csv_files(dirs[1].path())?);
        pass &= !a.is_empty() && a == b;
        compared += a.len();
    }
    Ok((pass, format!("{compared} CSV files compared byte for byte across two runs")))
}

fn main() {
    let fixtures = Fixtures::build();
    let criteria: [(&str, fn(&Fixtures) -> Check); 11] = [
        ("geodesic law", geodesic_law),
        ("reversible entropic Newton law", reversible_newton_law),
        ("non-reversible viscous term", viscous_term),
        ("Primal − Expanded is curve independent", expanded_form),
        ("bridge minimizes the Primal action", optimality),
        ("static/dynamic mixing identity", mixing_identity),
        ("zero-noise limit", zero_noise_limit),
        ("Madelung Newton law", madelung_law),
        ("W2 gradient oracles", gradient_oracles),
        ("Sinkhorn convergence", sinkhorn),
        ("determinism", determinism),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (pass, detail) = check(&fixtures).unwrap_or_else(|e| (false, format!("error: {e}")));
        failures += usize::from(!pass);
        println!("criterion {:>2} [{}] {name}: {detail}", i + 1, if pass { "PASS" } else { "FAIL" });
    }
    if failures > 0 {
        eprintln!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
