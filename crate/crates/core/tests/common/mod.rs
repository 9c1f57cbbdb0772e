#![allow(dead_code)]

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wflow_core::bridge::{solve_bridge, DEFAULT_MAX_ITER, DEFAULT_TOLERANCE};
use wflow_core::{build_prior, BridgeSolution, Density, Field, Grid, Prior};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn circle(n: usize) -> Grid {
    Grid::circle(2.0 * PI, n).unwrap()
}

pub fn circle_prior(n: usize, drift: impl Fn(f64) -> f64) -> Prior {
    let g = circle(n);
    build_prior(&g, 1.0, &Field::from_fn(&g, drift)).unwrap()
}

/// Von Mises marginals centred at 1 and 4 on the circle of length 2π.
pub fn von_mises_pair(g: &Grid) -> (Density, Density) {
    (Density::von_mises(g, 1.0, 2.0).unwrap(), Density::von_mises(g, 4.0, 1.5).unwrap())
}

pub fn circle_bridge(n: usize, m: usize, drift: impl Fn(f64) -> f64) -> BridgeSolution {
    let prior = circle_prior(n, drift);
    let (mu0, mu1) = von_mises_pair(prior.grid());
    solve_bridge(&prior, &mu0, &mu1, m, DEFAULT_TOLERANCE, DEFAULT_MAX_ITER).unwrap()
}

/// `exp` of a random trigonometric polynomial, normalized.
pub fn random_circle_density(g: &Grid, rng: &mut ChaCha8Rng) -> Density {
    let f = wflow_core::bridge::random_smooth_field(g, rng, 4);
    Density::new(f.map(|v| (0.8 * v).exp())).unwrap()
}

pub fn l2_diff(mu: &Density, a: &Field, b: &Field) -> f64 {
    wflow_core::geometry::norm(mu, &(a - b))
}
