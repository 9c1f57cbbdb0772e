//! Cumulative distributions and monotone rearrangements of grid densities.
//!
//! The CDF is a piecewise cubic Hermite interpolant whose node values come
//! from fourth-order cell integrals and whose slopes are the density values
//! themselves (Fritsch–Carlson limited, so the interpolant is monotone).
//! Both the left cumulative `F` and the survival `1 − F` are tabulated so
//! that quantiles deep in either tail keep their relative accuracy.

/// CDF of a density on an increasing set of nodes.
#[derive(Clone, Debug)]
pub(crate) struct Cdf {
    coords: Vec<f64>,
    /// Slopes at the left/right end of each cell after limiting.
    slopes: Vec<(f64, f64)>,
    cells: Vec<f64>,
    left: Vec<f64>,
    right: Vec<f64>,
}

impl Cdf {
    /// `coords` and `dens` have one more entry than `cells`.
    pub(crate) fn new(coords: Vec<f64>, dens: &[f64], cells: &[f64]) -> Self {
        let m = cells.len();
        debug_assert_eq!(coords.len(), m + 1);
        debug_assert_eq!(dens.len(), m + 1);
        let cells: Vec<f64> = cells.iter().map(|c| c.max(0.0)).collect();
        let total: f64 = cells.iter().sum();
        let cells: Vec<f64> = cells.iter().map(|c| c / total).collect();
        let mut left = vec![0.0; m + 1];
        for i in 0..m {
            left[i + 1] = left[i] + cells[i];
        }
        let mut right = vec![0.0; m + 1];
        for i in (0..m).rev() {
            right[i] = right[i + 1] + cells[i];
        }
        let slopes = (0..m)
            .map(|i| {
                let h = coords[i + 1] - coords[i];
                let secant = cells[i] / h;
                let (mut d0, mut d1) = (dens[i].max(0.0) / total, dens[i + 1].max(0.0) / total);
                if secant <= 0.0 {
                    return (0.0, 0.0);
                }
                let (a, b) = (d0 / secant, d1 / secant);
                let r = a * a + b * b;
                if r > 9.0 {
                    let tau = 3.0 / r.sqrt();
                    d0 *= tau;
                    d1 *= tau;
                }
                (d0, d1)
            })
            .collect();
        Cdf { coords, slopes, cells, left, right }
    }

    pub(crate) fn len(&self) -> usize {
        self.coords.len()
    }

    pub(crate) fn coord(&self, i: usize) -> f64 {
        self.coords[i]
    }

    /// Mass accumulated inside cell `i` up to local coordinate `θ ∈ [0, 1]`,
    /// and its derivative with respect to x.
    fn partial(&self, i: usize, theta: f64) -> (f64, f64) {
        let h = self.coords[i + 1] - self.coords[i];
        let (d0, d1) = self.slopes[i];
        let c = self.cells[i];
        let t2 = theta * theta;
        let t3 = t2 * theta;
        let h10 = t3 - 2.0 * t2 + theta;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let value = h10 * h * d0 + h01 * c + h11 * h * d1;
        let dh10 = 3.0 * t2 - 4.0 * theta + 1.0;
        let dh01 = -6.0 * t2 + 6.0 * theta;
        let dh11 = 3.0 * t2 - 2.0 * theta;
        let deriv = dh10 * d0 + dh01 * c / h + dh11 * d1;
        (value, deriv)
    }

    /// Solves `g(θ) = target` on `[0, 1]` for a nondecreasing cubic.
    fn invert_cell(&self, i: usize, target: f64, from_right: bool) -> f64 {
        let c = self.cells[i];
        if c <= 0.0 {
            return 0.5;
        }
        let eval = |t: f64| {
            let (v, d) = self.partial(i, t);
            if from_right {
                (c - v, -d)
            } else {
                (v, d)
            }
        };
        let h = self.coords[i + 1] - self.coords[i];
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut t = if from_right { 1.0 - target / c } else { target / c }.clamp(0.0, 1.0);
        for _ in 0..80 {
            let (v, d) = eval(t);
            let r = v - target;
            let increasing_r = if from_right { -r } else { r };
            if increasing_r > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            if r == 0.0 || hi - lo < 1e-15 {
                break;
            }
            let step = if d != 0.0 { r / (d * h) } else { f64::NAN };
            if step.abs() < 1e-16 {
                break;
            }
            let next = t - step;
            t = if next.is_finite() && next > lo && next < hi { next } else { 0.5 * (lo + hi) };
        }
        t
    }

    /// Quantile for a left-cumulative level `s`.
    pub(crate) fn quantile_left(&self, s: f64) -> f64 {
        let m = self.cells.len();
        if s <= 0.0 {
            return self.coords[0];
        }
        if s >= self.left[m] {
            return self.coords[m];
        }
        let i = self.left.partition_point(|&v| v <= s).saturating_sub(1).min(m - 1);
        let t = self.invert_cell(i, s - self.left[i], false);
        self.coords[i] + t * (self.coords[i + 1] - self.coords[i])
    }

    /// Quantile for a survival level `q = 1 − s`.
    pub(crate) fn quantile_right(&self, q: f64) -> f64 {
        let m = self.cells.len();
        if q <= 0.0 {
            return self.coords[m];
        }
        if q >= self.right[0] {
            return self.coords[0];
        }
        // right is decreasing; find i with right[i+1] <= q < right[i]
        let i = self.right.partition_point(|&v| v > q).saturating_sub(1).min(m - 1);
        let t = self.invert_cell(i, q - self.right[i + 1], true);
        self.coords[i] + t * (self.coords[i + 1] - self.coords[i])
    }

    /// Left cumulative and survival at an arbitrary coordinate, plus density.
    pub(crate) fn eval(&self, x: f64) -> (f64, f64, f64) {
        let m = self.cells.len();
        if x <= self.coords[0] {
            return (0.0, 1.0, self.slopes[0].0);
        }
        if x >= self.coords[m] {
            return (1.0, 0.0, self.slopes[m - 1].1);
        }
        let i = self.coords.partition_point(|&c| c <= x).saturating_sub(1).min(m - 1);
        let h = self.coords[i + 1] - self.coords[i];
        let (v, d) = self.partial(i, (x - self.coords[i]) / h);
        (self.left[i] + v, self.right[i + 1] + (self.cells[i] - v), d)
    }

    /// Left cumulative and survival at node `i`.
    pub(crate) fn levels(&self, i: usize) -> (f64, f64) {
        (self.left[i], self.right[i])
    }

    /// Quantile for a level pair `(s, 1 − s)`; levels outside `[0, 1]` wrap
    /// around by one period `length`.
    fn lifted_quantile(&self, s: f64, q: f64, length: f64) -> f64 {
        let k = if s < 0.0 {
            -1.0
        } else if s > 1.0 {
            1.0
        } else {
            0.0
        };
        let (s, q) = (s - k, q + k);
        let base = if s <= 0.5 { self.quantile_left(s) } else { self.quantile_right(q) };
        base + k * length
    }
}

/// Monotone map `T(x) = G⁻¹(F(x) − shift)` between two CDFs on the same
/// interval, lifted periodically when `shift ≠ 0`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct LiftedMap<'a> {
    pub from: &'a Cdf,
    pub to: &'a Cdf,
    pub shift: f64,
}

impl LiftedMap<'_> {
    pub(crate) fn length(&self) -> f64 {
        self.from.coord(self.from.len() - 1) - self.from.coord(0)
    }

    pub(crate) fn push_node(&self, i: usize) -> f64 {
        let (l, r) = self.from.levels(i);
        self.to.lifted_quantile(l - self.shift, r + self.shift, self.length())
    }

    pub(crate) fn push(&self, x: f64) -> f64 {
        let (l, r, _) = self.from.eval(x);
        self.to.lifted_quantile(l - self.shift, r + self.shift, self.length())
    }

    /// Source density at `x` and target density at `T(x)`.
    pub(crate) fn densities(&self, x: f64, tx: f64) -> (f64, f64) {
        let (start, length) = (self.to.coord(0), self.length());
        let wrapped = if self.shift == 0.0 { tx } else { start + (tx - start).rem_euclid(length) };
        (self.from.eval(x).2, self.to.eval(wrapped).2)
    }

    /// `∫₀¹ |F⁻¹(s) − G⁻¹(s − shift)|² ds` by four-point Gauss–Legendre on
    /// every interval between the breakpoint levels of both quantile maps.
    pub(crate) fn cost(&self) -> f64 {
        const NODES: [f64; 4] = [-0.861_136_311_594_052_6, -0.339_981_043_584_856_3, 0.339_981_043_584_856_3, 0.861_136_311_594_052_6];
        const WEIGHTS: [f64; 4] = [0.347_854_845_137_453_9, 0.652_145_154_862_546_1, 0.652_145_154_862_546_1, 0.347_854_845_137_453_9];
        let length = self.length();
        let mut levels: Vec<f64> = self.from.left.clone();
        for &l in &self.to.left {
            for k in [-1.0, 0.0, 1.0] {
                let u = l + self.shift + k;
                if u > 0.0 && u < 1.0 {
                    levels.push(u);
                }
            }
        }
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        levels
            .windows(2)
            .map(|w| {
                let (mid, half) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
                NODES
                    .iter()
                    .zip(WEIGHTS)
                    .map(|(g, wt)| {
                        let s = mid + half * g;
                        let x = self.from.lifted_quantile(s, 1.0 - s, length);
                        let y = self.to.lifted_quantile(s - self.shift, 1.0 - s + self.shift, length);
                        wt * (x - y) * (x - y)
                    })
                    .sum::<f64>()
                    * half
            })
            .sum()
    }
}
