//! Closed-form limit objects: the wave profile `g`, the bistable
//! nonlinearity `f`, the lineage stationary density `pi`, and the
//! quadrature constants derived from them.

use rand::Rng;
use thiserror::Error;

use crate::params::ModelParams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticError {
    #[error("nonlinearity argument {0} outside [0, 1]")]
    OutOfUnitInterval(f64),
}

/// Target absolute size of each truncated quadrature tail.
pub const TAIL_TOLERANCE: f64 = 1e-12;
/// Number of nodes in the tabulated CDF of `pi`.
pub const PI_GRID_POINTS: usize = 100_000;
/// Bound on the probability mass of `pi` outside the tabulated CDF domain.
pub const PI_GRID_TAIL_MASS: f64 = 1e-10;

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// The travelling-wave profile `g(x) = (1 + e^{kappa x})^{-1}` and its
/// derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wave {
    pub kappa: f64,
}

impl Wave {
    pub fn new(kappa: f64) -> Self {
        Self { kappa }
    }

    pub fn for_params(params: &ModelParams) -> Self {
        Self::new(params.kappa())
    }

    pub fn profile(&self, x: f64) -> f64 {
        let z = self.kappa * x;
        if z > 0.0 {
            let e = (-z).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + z.exp())
        }
    }

    pub fn ln_profile(&self, x: f64) -> f64 {
        -softplus(self.kappa * x)
    }

    /// `-kappa g (1 - g)`, evaluated via `g(x) g(-x)` to stay accurate in
    /// both tails.
    pub fn gradient(&self, x: f64) -> f64 {
        -self.kappa * self.profile(x) * self.profile(-x)
    }

    /// `g'' = kappa^2 g (1 - g) (1 - 2g)`.
    pub fn second_derivative(&self, x: f64) -> f64 {
        let g = self.profile(x);
        let h = self.profile(-x);
        self.kappa * self.kappa * g * h * (h - g)
    }

    /// `g(x + h) - g(x)` computed without cancellation.
    pub fn increment(&self, x: f64, h: f64) -> f64 {
        // g(x+h) - g(x) = -g(x+h) g(-x) (e^{kappa h} - 1)
        -self.profile(x + h) * self.profile(-x) * (self.kappa * h).exp_m1()
    }

    /// Pointwise residual of `(m/2) g'' + nu g' + s0 f(g)`, using closed-form
    /// derivatives.
    pub fn ode_residual(&self, params: &ModelParams, x: f64) -> f64 {
        let g = self.profile(x);
        0.5 * params.m() * self.second_derivative(x)
            + params.nu() * self.gradient(x)
            + params.s0() * bistable(params.alpha(), g)
    }
}

/// `f(u) = u (1 - u) (2u - 1 + alpha)` without a domain check.
#[inline]
pub fn bistable(alpha: f64, u: f64) -> f64 {
    u * (1.0 - u) * (2.0 * u - 1.0 + alpha)
}

/// The bistable nonlinearity on `[0, 1]`.
pub fn nonlinearity(alpha: f64, u: f64) -> Result<f64, AnalyticError> {
    if !(0.0..=1.0).contains(&u) {
        return Err(AnalyticError::OutOfUnitInterval(u));
    }
    Ok(bistable(alpha, u))
}

/// Adaptive Simpson quadrature of `f` on `[a, b]`, split first into
/// `panels` equal panels.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, panels: usize) -> f64 {
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        let floor = 4.0 * f64::EPSILON * (left.abs() + right.abs());
        if depth == 0 || delta.abs() <= 15.0 * tol.max(floor) {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }

    let panels = panels.max(1);
    let width = (b - a) / panels as f64;
    let panel_tol = tol / panels as f64;
    (0..panels)
        .map(|k| {
            let lo = a + width * k as f64;
            let hi = if k + 1 == panels { b } else { lo + width };
            let fa = f(lo);
            let fb = f(hi);
            let fm = f(0.5 * (lo + hi));
            let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
            recurse(f, lo, hi, fa, fm, fb, whole, panel_tol, 40)
        })
        .sum()
}

/// Truncation point `L` such that `e^{-rate L} / rate <= tol`.
fn tail_cutoff(rate: f64, tol: f64) -> f64 {
    ((1.0 / (tol * rate)).ln() / rate).max(1.0 / rate)
}

/// Quadrature-derived constants and the tabulated CDF of `pi`.
#[derive(Debug, Clone)]
pub struct AnalyticTables {
    alpha: f64,
    kappa: f64,
    /// `int g^2 e^{alpha kappa y} dy`.
    pub z_pi: f64,
    /// `int g^3 e^{2 alpha kappa y} dy`.
    pub i3: f64,
    /// `(1 + 2m) (n/N) I3 / Z_pi^2`.
    pub rate_constant: f64,
    /// Half-width of the integration domain.
    pub domain: f64,
    /// Certified bound on the neglected tails of `Z_pi` and `I3` combined.
    pub truncation_bound: f64,
    grid_lo: f64,
    grid_step: f64,
    cdf_grid: Vec<f64>,
    /// Bound on the `pi` mass outside `[grid_lo, grid_hi]`.
    pub grid_tail_mass: f64,
}

impl AnalyticTables {
    pub fn build(params: &ModelParams) -> Self {
        let alpha = params.alpha();
        let kappa = params.kappa();
        let wave = Wave::new(kappa);

        // Tail dominants: g^2 e^{a k y} <= e^{(a-2) k y} (right), e^{a k y} (left);
        // g^3 e^{2 a k y} <= e^{(2a-3) k y} (right), e^{2 a k y} (left).
        let rates = [
            (2.0 - alpha) * kappa,
            alpha * kappa,
            (3.0 - 2.0 * alpha) * kappa,
            2.0 * alpha * kappa,
        ];
        let domain = rates
            .iter()
            .map(|&r| tail_cutoff(r, TAIL_TOLERANCE))
            .fold(0.0_f64, f64::max);
        let truncation_bound: f64 = rates.iter().map(|&r| (-r * domain).exp() / r).sum();

        let z_integrand = |y: f64| (2.0 * wave.ln_profile(y) + alpha * kappa * y).exp();
        let i3_integrand = |y: f64| (3.0 * wave.ln_profile(y) + 2.0 * alpha * kappa * y).exp();
        let panels = ((2.0 * domain * kappa).ceil() as usize).max(16);
        let z_pi = adaptive_simpson(&z_integrand, -domain, domain, 1e-15, panels);
        let i3 = adaptive_simpson(&i3_integrand, -domain, domain, 1e-15, panels);

        let nf = f64::from(params.n());
        let big_n = f64::from(params.deme_size());
        let rate_constant = (1.0 + 2.0 * params.m()) * (nf / big_n) * i3 / (z_pi * z_pi);

        // CDF grid on [lo, hi] with each tail of pi below PI_GRID_TAIL_MASS / 2.
        let left_rate = alpha * kappa;
        let right_rate = (2.0 - alpha) * kappa;
        let grid_lo = -tail_cutoff(left_rate, 0.5 * PI_GRID_TAIL_MASS * z_pi);
        let grid_hi = tail_cutoff(right_rate, 0.5 * PI_GRID_TAIL_MASS * z_pi);
        let grid_tail_mass =
            ((left_rate * grid_lo).exp() / left_rate + (-right_rate * grid_hi).exp() / right_rate) / z_pi;
        let cells = PI_GRID_POINTS - 1;
        let grid_step = (grid_hi - grid_lo) / cells as f64;
        let mut cdf_grid = Vec::with_capacity(PI_GRID_POINTS);
        let left_mass = (left_rate * grid_lo).exp() / left_rate / z_pi;
        let mut acc = 0.0;
        let mut prev = z_integrand(grid_lo);
        cdf_grid.push(0.0);
        for k in 0..cells {
            let a = grid_lo + grid_step * k as f64;
            let mid = z_integrand(a + 0.5 * grid_step);
            let next = z_integrand(a + grid_step);
            acc += grid_step / 6.0 * (prev + 4.0 * mid + next);
            cdf_grid.push(acc);
            prev = next;
        }
        // Scale so the grid spans [0, 1]; the left tail (bounded by
        // `left_mass`) is folded into the first cell.
        let total = acc;
        for v in cdf_grid.iter_mut() {
            *v /= total;
        }
        debug_assert!(left_mass < PI_GRID_TAIL_MASS);

        Self {
            alpha,
            kappa,
            z_pi,
            i3,
            rate_constant,
            domain,
            truncation_bound,
            grid_lo,
            grid_step,
            cdf_grid,
            grid_tail_mass,
        }
    }

    pub fn wave(&self) -> Wave {
        Wave::new(self.kappa)
    }

    /// `pi(x) = g(x)^2 e^{alpha kappa x} / Z_pi`.
    pub fn pi_density(&self, x: f64) -> f64 {
        (2.0 * self.wave().ln_profile(x) + self.alpha * self.kappa * x).exp() / self.z_pi
    }

    pub fn grid_bounds(&self) -> (f64, f64) {
        (self.grid_lo, self.grid_lo + self.grid_step * (self.cdf_grid.len() - 1) as f64)
    }

    /// CDF of `pi`: grid value at the cell start plus a Simpson estimate of
    /// the partial cell.
    pub fn pi_cdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.grid_bounds();
        if x <= lo {
            return 0.0;
        }
        if x >= hi {
            return 1.0;
        }
        let pos = (x - lo) / self.grid_step;
        let k = (pos.floor() as usize).min(self.cdf_grid.len() - 2);
        let a = lo + self.grid_step * k as f64;
        let h = x - a;
        let partial = h / 6.0 * (self.pi_density(a) + 4.0 * self.pi_density(a + 0.5 * h) + self.pi_density(x));
        let scale = self.cdf_grid[k + 1] - self.cdf_grid[k];
        let full = self.grid_step / 6.0
            * (self.pi_density(a) + 4.0 * self.pi_density(a + 0.5 * self.grid_step) + self.pi_density(a + self.grid_step));
        // Rescale the partial cell so the CDF matches the grid at both cell ends.
        let frac = if full > 0.0 { (partial / full).clamp(0.0, 1.0) } else { 0.0 };
        (self.cdf_grid[k] + frac * scale).clamp(0.0, 1.0)
    }

    /// Inverse of the tabulated CDF with linear interpolation between nodes.
    pub fn pi_quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let k = self.cdf_grid.partition_point(|&c| c < u);
        if k == 0 {
            return self.grid_lo;
        }
        if k >= self.cdf_grid.len() {
            return self.grid_bounds().1;
        }
        let (c0, c1) = (self.cdf_grid[k - 1], self.cdf_grid[k]);
        let w = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
        self.grid_lo + self.grid_step * ((k - 1) as f64 + w)
    }

    pub fn pi_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.pi_quantile(rng.random::<f64>())
    }

    /// Predicted pairwise coalescence rate `Lambda`.
    pub fn kingman_rate_constant(&self) -> f64 {
        self.rate_constant
    }

    /// `int pi(y)^2 / g(y) dy` computed directly (equals `I3 / Z_pi^2`).
    pub fn pi_sq_over_g(&self) -> f64 {
        let wave = self.wave();
        let (alpha, kappa, z) = (self.alpha, self.kappa, self.z_pi);
        let f = |y: f64| (3.0 * wave.ln_profile(y) + 2.0 * alpha * kappa * y).exp() / (z * z);
        let panels = ((2.0 * self.domain * kappa).ceil() as usize).max(16);
        adaptive_simpson(&f, -self.domain, self.domain, 1e-15, panels)
    }

    /// Integral of `pi` over the quadrature domain.
    pub fn pi_mass(&self) -> f64 {
        let panels = ((2.0 * self.domain * self.kappa).ceil() as usize).max(16);
        adaptive_simpson(&|y| self.pi_density(y), -self.domain, self.domain, 1e-15, panels)
    }

    /// Location of the maximum of `pi`, where `g = 1 - alpha/2`.
    pub fn pi_mode(&self) -> f64 {
        (self.alpha / (2.0 - self.alpha)).ln() / self.kappa
    }

    /// Tabulated grid as `(x, cdf)` pairs, for export.
    pub fn cdf_table(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.cdf_grid
            .iter()
            .enumerate()
            .map(move |(k, &c)| (self.grid_lo + self.grid_step * k as f64, c))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(alpha: f64, s0: f64, m: f64) -> ModelParams {
        ModelParams::new(8, 1000, alpha, s0, m).unwrap()
    }

    /// Plain composite trapezoid on [-60, 60]; independent of the adaptive
    /// scheme and of the log-space integrand.
    fn trapezoid_oracle(f: impl Fn(f64) -> f64) -> f64 {
        let (a, b) = (-60.0, 60.0);
        let steps = 2_400_000;
        let h = (b - a) / steps as f64;
        let mut sum = 0.5 * (f(a) + f(b));
        for k in 1..steps {
            sum += f(a + h * k as f64);
        }
        sum * h
    }

    fn naive_g(kappa: f64, y: f64) -> f64 {
        1.0 / (1.0 + (kappa * y).exp())
    }

    #[test]
    fn profile_basics() {
        let w = Wave::new(1.3);
        assert_eq!(w.profile(0.0), 0.5);
        for &x in &[0.1, 1.0, 7.5, 40.0] {
            assert!((w.profile(x) + w.profile(-x) - 1.0).abs() < 1e-15);
        }
        assert!((w.gradient(0.0) + 1.3 / 4.0).abs() < 1e-15);
        assert!(w.profile(1e6) == 0.0 && w.profile(-1e6) == 1.0);
    }

    #[test]
    fn nonlinearity_roots_and_domain() {
        let a = 0.5;
        assert_eq!(nonlinearity(a, 0.0).unwrap(), 0.0);
        assert_eq!(nonlinearity(a, 1.0).unwrap(), 0.0);
        assert!(nonlinearity(a, (1.0 - a) / 2.0).unwrap().abs() < 1e-16);
        assert_eq!(nonlinearity(a, 0.5).unwrap(), 0.125);
        assert!(nonlinearity(a, 0.1).unwrap() < 0.0);
        assert!(nonlinearity(a, 0.9).unwrap() > 0.0);
        assert!(nonlinearity(a, 1.01).is_err());
        assert!(nonlinearity(a, -0.01).is_err());
    }

    #[test]
    fn quadrature_matches_trapezoid_oracle() {
        let p = params(0.5, 1.0, 2.0);
        let k = p.kappa();
        let z_oracle = trapezoid_oracle(|y| naive_g(k, y).powi(2) * (0.5 * k * y).exp());
        let i3_oracle = trapezoid_oracle(|y| naive_g(k, y).powi(3) * (k * y).exp());
        let t = AnalyticTables::build(&p);
        assert!(((t.z_pi - z_oracle) / z_oracle).abs() < 1e-8, "{} vs {}", t.z_pi, z_oracle);
        assert!(((t.i3 - i3_oracle) / i3_oracle).abs() < 1e-8);
        let pi0_oracle = 0.25 / z_oracle;
        assert!(((t.pi_density(0.0) - pi0_oracle) / pi0_oracle).abs() < 1e-8);
        assert!(t.truncation_bound < 4.0 * TAIL_TOLERANCE);
    }

    #[test]
    fn doubling_migration_matches_oracle() {
        for &m in &[1.0, 2.0] {
            let p = params(0.5, 1.0, m);
            let k = p.kappa();
            let z = trapezoid_oracle(|y| naive_g(k, y).powi(2) * (0.5 * k * y).exp());
            let i3 = trapezoid_oracle(|y| naive_g(k, y).powi(3) * (k * y).exp());
            let lambda = (1.0 + 2.0 * m) * (8.0 / 1000.0) * i3 / (z * z);
            let t = AnalyticTables::build(&p);
            assert!(((t.kingman_rate_constant() - lambda) / lambda).abs() < 1e-8);
        }
    }

    #[test]
    fn rate_constant_linear_in_n_over_big_n() {
        let a = AnalyticTables::build(&ModelParams::new(4, 1000, 0.4, 1.0, 2.0).unwrap());
        let b = AnalyticTables::build(&ModelParams::new(8, 1000, 0.4, 1.0, 2.0).unwrap());
        let c = AnalyticTables::build(&ModelParams::new(8, 4000, 0.4, 1.0, 2.0).unwrap());
        assert!((b.kingman_rate_constant() / a.kingman_rate_constant() - 2.0).abs() < 1e-12);
        assert!((b.kingman_rate_constant() / c.kingman_rate_constant() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn closed_forms_at_half() {
        // alpha = 1/2, kappa = 1: Z = pi/2 and I3 = 1/2.
        let t = AnalyticTables::build(&params(0.5, 1.0, 2.0));
        assert!((t.z_pi - std::f64::consts::FRAC_PI_2).abs() < 1e-11);
        assert!((t.i3 - 0.5).abs() < 1e-11);
    }

    #[test]
    fn normalisation_and_identity() {
        for &(a, s0, m) in &[(0.3, 1.0, 2.0), (0.5, 1.0, 2.0), (0.8, 1.0, 1.0), (0.1, 0.5, 3.0)] {
            let t = AnalyticTables::build(&params(a, s0, m));
            assert!((t.pi_mass() - 1.0).abs() < 1e-8);
            let direct = t.pi_sq_over_g();
            let factored = t.i3 / (t.z_pi * t.z_pi);
            assert!(((direct - factored) / factored).abs() < 1e-8);
        }
    }

    #[test]
    fn right_tail_slope() {
        let p = params(0.5, 1.0, 2.0);
        let t = AnalyticTables::build(&p);
        let k = p.kappa();
        let (x1, x2) = (10.0 / k, 20.0 / k);
        let slope = (t.pi_density(x2).ln() - t.pi_density(x1).ln()) / (x2 - x1);
        assert!((slope - (0.5 - 2.0) * k).abs() < 1e-3);
    }

    #[test]
    fn mode_where_profile_is_one_minus_half_alpha() {
        let t = AnalyticTables::build(&params(0.6, 1.0, 2.0));
        let (lo, hi) = (-20.0, 20.0);
        let steps = 400_000;
        let h = (hi - lo) / steps as f64;
        let argmax = (0..=steps)
            .map(|k| lo + h * k as f64)
            .max_by(|a, b| t.pi_density(*a).total_cmp(&t.pi_density(*b)))
            .unwrap();
        assert!((argmax - t.pi_mode()).abs() <= h);
        assert!((t.wave().profile(t.pi_mode()) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn ode_residual_vanishes() {
        for &(a, s0, m) in &[(0.3, 1.0, 2.0), (0.8, 1.0, 1.0)] {
            let p = params(a, s0, m);
            let w = Wave::for_params(&p);
            for k in 0..1000 {
                let x = -30.0 + 60.0 * k as f64 / 999.0;
                assert!(w.ode_residual(&p, x).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn finite_difference_residual() {
        // Central differences at step 1e-4 with cancellation-free increments;
        // the h^2 truncation error of the stencils is about 2e-10 here.
        let p = params(0.5, 1.0, 2.0);
        let w = Wave::for_params(&p);
        let h = 1e-4;
        let mut worst: f64 = 0.0;
        for k in 0..1000 {
            let x = -15.0 + 30.0 * k as f64 / 999.0;
            let fwd = w.increment(x, h);
            let bwd = -w.increment(x, -h);
            let d1 = (fwd + bwd) / (2.0 * h);
            let d2 = (fwd - bwd) / (h * h);
            let r = 0.5 * p.m() * d2 + p.nu() * d1 + p.s0() * bistable(p.alpha(), w.profile(x));
            worst = worst.max(r.abs());
        }
        assert!(worst < 1e-9, "worst residual {worst}");
    }

    #[test]
    fn cdf_and_quantile_agree() {
        let t = AnalyticTables::build(&params(0.5, 1.0, 2.0));
        assert!(t.grid_tail_mass < 1e-8);
        let mut last = 0.0;
        for k in 0..200 {
            let x = -30.0 + 0.2 * k as f64;
            let c = t.pi_cdf(x);
            assert!(c >= last);
            last = c;
        }
        for &u in &[0.01, 0.2, 0.5, 0.9, 0.999] {
            let x = t.pi_quantile(u);
            assert!((t.pi_cdf(x) - u).abs() < 1e-6);
        }
        // CDF against direct quadrature of the density.
        let direct = adaptive_simpson(&|y| t.pi_density(y), -t.domain, 0.3, 1e-14, 200);
        assert!((t.pi_cdf(0.3) - direct).abs() < 1e-8);
    }

    #[test]
    fn sampling_mean() {
        let t = AnalyticTables::build(&params(0.5, 1.0, 2.0));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let draws = 200_000;
        let mean: f64 = (0..draws).map(|_| t.pi_sample(&mut rng)).sum::<f64>() / draws as f64;
        let exact = adaptive_simpson(&|y| y * t.pi_density(y), -t.domain, t.domain, 1e-14, 200);
        let var = adaptive_simpson(&|y| (y - exact).powi(2) * t.pi_density(y), -t.domain, t.domain, 1e-14, 200);
        assert!((mean - exact).abs() < 4.0 * (var / draws as f64).sqrt());
    }
}
