//! Deterministic and low-dimensional stochastic references: the
//! semi-discrete bistable equation, its linear tracer equation, the lineage
//! diffusion and the Kingman coalescent.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::analytic::{bistable, Wave};
use crate::lineage::{CoalescenceMatrix, Tau};
use crate::params::ModelParams;
use crate::rng::{stream_rng, Stream};
use crate::sim::Site;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ReferenceError {
    #[error("time step {dt} exceeds the stability bound {bound}")]
    Unstable { dt: f64, bound: f64 },
    #[error("time step and duration must be positive and finite (dt = {dt}, t = {t})")]
    BadTime { dt: f64, t: f64 },
    #[error("fields are defined on different grids")]
    GridMismatch,
    #[error("initial values must lie in [0, 1]")]
    OutOfRange,
    #[error("a coalescent needs at least two lineages (got {0})")]
    TooFewLineages(usize),
}

/// Values on the sites `first_site, first_site + 1, ...` of spacing `1/n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeField {
    pub time: f64,
    pub n: u32,
    pub first_site: Site,
    pub values: Vec<f64>,
}

impl LatticeField {
    pub fn new(n: u32, first_site: Site, values: Vec<f64>) -> Self {
        Self { time: 0.0, n, first_site, values }
    }

    pub fn from_fn(n: u32, first_site: Site, len: usize, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..len).map(|k| f(f64::from(first_site + k as Site) / f64::from(n))).collect();
        Self::new(n, first_site, values)
    }

    /// Travelling-wave profile centred at `center`.
    pub fn wave(params: &ModelParams, first_site: Site, len: usize, center: f64) -> Self {
        let w = Wave::for_params(params);
        Self::from_fn(params.n(), first_site, len, |x| w.profile(x - center))
    }

    pub fn x(&self, k: usize) -> f64 {
        f64::from(self.first_site + k as Site) / f64::from(self.n)
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.n == other.n && self.first_site == other.first_site && self.values.len() == other.values.len()
    }

    /// Rightmost position with value at least 1/2, refined by linear
    /// interpolation to the crossing.
    pub fn crossing(&self) -> Option<f64> {
        let k = self.values.iter().rposition(|&u| u >= 0.5)?;
        let h = 1.0 / f64::from(self.n);
        match self.values.get(k + 1) {
            Some(&next) if self.values[k] > next => {
                Some(self.x(k) + h * (self.values[k] - 0.5) / (self.values[k] - next))
            }
            _ => Some(self.x(k)),
        }
    }

    /// Last site with value at least 1/2, the lattice front.
    pub fn front(&self) -> Option<f64> {
        self.values.iter().rposition(|&u| u >= 0.5).map(|k| self.x(k))
    }
}

/// Fixed values just outside the window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dirichlet {
    pub left: f64,
    pub right: f64,
}

impl Default for Dirichlet {
    fn default() -> Self {
        Self { left: 1.0, right: 0.0 }
    }
}

/// Coefficients of the lattice equations. Unlike [`ModelParams`] these
/// carry no deme size, so any refinement is allowed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub n: u32,
    pub alpha: f64,
    pub s0: f64,
    pub m: f64,
}

impl From<&ModelParams> for Coefficients {
    fn from(p: &ModelParams) -> Self {
        Self { n: p.n(), alpha: p.alpha(), s0: p.s0(), m: p.m() }
    }
}

impl From<ModelParams> for Coefficients {
    fn from(p: ModelParams) -> Self {
        Self::from(&p)
    }
}

/// Largest admissible explicit step, `1 / (2 m n^2)`.
pub fn stability_bound(c: impl Into<Coefficients>) -> f64 {
    let c = c.into();
    let n = f64::from(c.n);
    1.0 / (2.0 * c.m * n * n)
}

fn check_step(params: Coefficients, dt: f64, t: f64) -> Result<(), ReferenceError> {
    if !(dt > 0.0 && dt.is_finite() && t >= 0.0 && t.is_finite()) {
        return Err(ReferenceError::BadTime { dt, t });
    }
    let bound = stability_bound(params);
    if dt > bound {
        return Err(ReferenceError::Unstable { dt, bound });
    }
    Ok(())
}

/// Splits `[0, t]` into equal record intervals of at most `every` and equal
/// steps of at most `dt`: `(records, steps per record, step, interval)`.
fn schedule(t: f64, dt: f64, every: f64) -> (usize, usize, f64, f64) {
    if t <= 0.0 {
        return (0, 0, dt, 0.0);
    }
    let every = if every > 0.0 { every.min(t) } else { t };
    let records = (t / every - 1e-9).ceil().max(1.0) as usize;
    let interval = t / records as f64;
    let per = (interval / dt - 1e-9).ceil().max(1.0) as usize;
    (records, per, interval / per as f64, interval)
}

#[inline]
fn laplacian_step(values: &[f64], out: &mut [f64], half_m_n2: f64, bc: Dirichlet, mut reaction: impl FnMut(usize, f64) -> f64, dt: f64) {
    let len = values.len();
    for k in 0..len {
        let left = if k == 0 { bc.left } else { values[k - 1] };
        let right = if k + 1 == len { bc.right } else { values[k + 1] };
        let u = values[k];
        out[k] = u + dt * (half_m_n2 * (left - 2.0 * u + right) + reaction(k, u));
    }
}

/// Forward-Euler solution of `du/dt = (m/2) Δ_n u + s0 f(u)` with Dirichlet
/// values outside the window. Returns `u0` followed by the field at every
/// multiple of `record_every` up to `t_end`; the step is the largest value
/// not above `dt` that divides `record_every`.
pub fn pde_solve(
    params: impl Into<Coefficients>,
    u0: &LatticeField,
    t_end: f64,
    dt: f64,
    record_every: f64,
    bc: Dirichlet,
) -> Result<Vec<LatticeField>, ReferenceError> {
    let params = params.into();
    check_step(params, dt, t_end)?;
    if u0.n != params.n {
        return Err(ReferenceError::GridMismatch);
    }
    if u0.values.iter().any(|u| !(0.0..=1.0).contains(u)) {
        return Err(ReferenceError::OutOfRange);
    }
    let (records, per, h, interval) = schedule(t_end, dt, record_every);
    let n = f64::from(params.n);
    let half_m_n2 = 0.5 * params.m * n * n;
    let (alpha, s0) = (params.alpha, params.s0);
    let mut out = vec![u0.clone()];
    let mut cur = u0.values.clone();
    let mut next = cur.clone();
    for r in 1..=records {
        for _ in 0..per {
            laplacian_step(&cur, &mut next, half_m_n2, bc, |_, u| s0 * bistable(alpha, u), h);
            std::mem::swap(&mut cur, &mut next);
        }
        let time = u0.time + r as f64 * interval;
        out.push(LatticeField { time, values: cur.clone(), n: u0.n, first_site: u0.first_site });
    }
    Ok(out)
}

/// Forward-Euler solution of `dv/dt = (m/2) Δ_n v + s0 v (1 - u)(2u - 1 + alpha)`
/// driven by `u`, which must be recorded at every step `dt` on the grid of
/// `v0`. Returns one field per entry of `u`.
pub fn tracer_pde_solve(
    params: impl Into<Coefficients>,
    v0: &LatticeField,
    u: &[LatticeField],
    dt: f64,
    bc: Dirichlet,
) -> Result<Vec<LatticeField>, ReferenceError> {
    let params = params.into();
    check_step(params, dt, 0.0)?;
    if u.is_empty() || v0.n != params.n || u.iter().any(|f| !f.same_grid(v0)) {
        return Err(ReferenceError::GridMismatch);
    }
    if u.windows(2).any(|w| ((w[1].time - w[0].time) - dt).abs() > 1e-9 * dt.max(1.0)) {
        return Err(ReferenceError::GridMismatch);
    }
    let n = f64::from(params.n);
    let half_m_n2 = 0.5 * params.m * n * n;
    let (alpha, s0) = (params.alpha, params.s0);
    let mut out = Vec::with_capacity(u.len());
    out.push(LatticeField { time: u[0].time, ..v0.clone() });
    let mut next = v0.values.clone();
    for w in u.windows(2) {
        let cur = &out.last().expect("seeded").values;
        let drive = &w[0].values;
        laplacian_step(cur, &mut next, half_m_n2, bc, |k, v| {
            let uk = drive[k];
            s0 * v * (1.0 - uk) * (2.0 * uk - 1.0 + alpha)
        }, dt);
        out.push(LatticeField { time: w[1].time, values: next.clone(), n: v0.n, first_site: v0.first_site });
    }
    Ok(out)
}

/// Drift of the lineage position relative to the front,
/// `nu + m g'(z)/g(z) = nu - m kappa (1 - g(z))`.
pub fn lineage_drift(params: &ModelParams, z: f64) -> f64 {
    let w = Wave::for_params(params);
    params.nu() - params.m() * params.kappa() * w.profile(-z)
}

/// Euler-Maruyama path of `dZ = (nu + m g'/g)(Z) dt + sqrt(m) dB`, recorded
/// every `record_every` (rounded to whole steps). Returns `(t, Z)` pairs
/// starting at `(0, z0)`.
pub fn sde_simulate(params: &ModelParams, z0: f64, t_end: f64, dt: f64, seed: u64, record_every: f64) -> Vec<(f64, f64)> {
    let mut rng = stream_rng(seed, Stream::Reference);
    let thin = ((record_every / dt).round() as usize).max(1);
    let steps = (t_end / dt).round() as usize;
    let mut out = Vec::with_capacity(steps / thin + 1);
    out.push((0.0, z0));
    let mut z = z0;
    let sigma = (params.m() * dt).sqrt();
    for k in 1..=steps {
        let xi: f64 = rng.sample(StandardNormal);
        z += lineage_drift(params, z) * dt + sigma * xi;
        if k % thin == 0 {
            out.push((k as f64 * dt, z));
        }
    }
    out
}

/// Stationary samples of the lineage diffusion: after `burn_in`, one value
/// every `thin` time units.
pub fn sde_stationary_samples(
    params: &ModelParams,
    dt: f64,
    burn_in: f64,
    thin: f64,
    count: usize,
    seed: u64,
) -> Vec<f64> {
    let path = sde_simulate(params, 0.0, burn_in + thin * count as f64, dt, seed, thin);
    let skip = (burn_in / thin).round() as usize + 1;
    path.into_iter().skip(skip).map(|(_, z)| z).take(count).collect()
}

/// One realisation of the Kingman coalescent on `k` labelled lineages.
#[derive(Debug, Clone, PartialEq)]
pub struct KingmanSample {
    /// Merger times with the merged blocks, each named by its smallest label.
    pub mergers: Vec<(f64, (usize, usize))>,
    pub tau: CoalescenceMatrix,
}

pub fn kingman_sample(k: usize, seed: u64) -> Result<KingmanSample, ReferenceError> {
    kingman_sample_with(k, &mut stream_rng(seed, Stream::Reference))
}

pub fn kingman_sample_with<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Result<KingmanSample, ReferenceError> {
    if k < 2 {
        return Err(ReferenceError::TooFewLineages(k));
    }
    let mut blocks: Vec<Vec<usize>> = (0..k).map(|i| vec![i]).collect();
    let mut tau = CoalescenceMatrix::censored(k);
    let mut mergers = Vec::with_capacity(k - 1);
    let mut t = 0.0;
    while blocks.len() > 1 {
        let j = blocks.len() as f64;
        let e: f64 = rng.sample(Exp1);
        t += e / (j * (j - 1.0) / 2.0);
        let a = rng.random_range(0..blocks.len());
        let mut b = rng.random_range(0..blocks.len() - 1);
        if b >= a {
            b += 1;
        }
        let (a, b) = (a.min(b), a.max(b));
        let absorbed = blocks.swap_remove(b);
        for &x in &blocks[a] {
            for &y in &absorbed {
                tau.set(x, y, Tau::Finite(t));
            }
        }
        let la = blocks[a][0].min(absorbed[0]);
        let lb = blocks[a][0].max(absorbed[0]);
        blocks[a].extend(absorbed);
        blocks[a].sort_unstable();
        mergers.push((t, (la, lb)));
    }
    Ok(KingmanSample { mergers, tau })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{chi_square_uniform, exp1_cdf, ks_test};

    fn coeffs() -> Coefficients {
        Coefficients { n: 1, alpha: 0.5, s0: 1.0, m: 2.0 }
    }

    #[test]
    fn constant_states_are_fixed_points() {
        let p = ModelParams::new(8, 100, 0.3, 1.0, 2.0).unwrap();
        let dt = stability_bound(&p);
        for (value, bc) in [(0.0, Dirichlet { left: 0.0, right: 0.0 }), (1.0, Dirichlet { left: 1.0, right: 1.0 })] {
            let u0 = LatticeField::new(8, -20, vec![value; 41]);
            let traj = pde_solve(&p, &u0, 2.0, dt, 0.5, bc).unwrap();
            assert_eq!(traj.len(), 5);
            assert!(traj.iter().all(|f| f.values.iter().all(|&u| u == value)));
            assert_eq!(traj.last().unwrap().time, 2.0);
        }
    }

    #[test]
    fn single_step_from_a_spike() {
        let mut values = vec![0.0; 9];
        values[4] = 1.0;
        let u0 = LatticeField::new(1, -4, values);
        let bc = Dirichlet { left: 0.0, right: 0.0 };
        let traj = pde_solve(coeffs(), &u0, 1e-3, 1e-3, 1e-3, bc).unwrap();
        let u1 = &traj[1].values;
        // Hand computation: (m/2) n^2 = 1, f(0) = f(1) = 0.
        let expect = [0.0, 0.0, 0.0, 1e-3, 0.998, 1e-3, 0.0, 0.0, 0.0];
        for (a, b) in u1.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn stability_and_range_are_checked() {
        let bound = stability_bound(coeffs());
        assert_eq!(bound, 0.25);
        let u0 = LatticeField::new(1, 0, vec![0.5; 4]);
        assert_eq!(
            pde_solve(coeffs(), &u0, 1.0, 0.3, 0.1, Dirichlet::default()),
            Err(ReferenceError::Unstable { dt: 0.3, bound })
        );
        let bad = LatticeField::new(1, 0, vec![1.5; 4]);
        assert_eq!(pde_solve(coeffs(), &bad, 1.0, 0.1, 0.1, Dirichlet::default()), Err(ReferenceError::OutOfRange));
    }

    #[test]
    fn tracer_equation_properties() {
        let p = ModelParams::new(4, 100, 0.5, 1.0, 2.0).unwrap();
        let dt = stability_bound(&p);
        let u0 = LatticeField::wave(&p, -40, 81, 0.0);
        let u = pde_solve(&p, &u0, 2.0, dt, dt, Dirichlet::default()).unwrap();
        let zero_bc = Dirichlet { left: 0.0, right: 0.0 };

        let same = tracer_pde_solve(&p, &u0, &u, dt, Dirichlet::default()).unwrap();
        for (v, w) in same.iter().zip(&u) {
            assert!(v.values.iter().zip(&w.values).all(|(a, b)| (a - b).abs() < 1e-12));
        }
        let zero = LatticeField::new(4, -40, vec![0.0; 81]);
        let vz = tracer_pde_solve(&p, &zero, &u, dt, zero_bc).unwrap();
        assert!(vz.iter().all(|f| f.values.iter().all(|&v| v == 0.0)));

        let left = LatticeField { values: u0.values.iter().enumerate().map(|(k, &x)| if k < 40 { x } else { 0.0 }).collect(), ..u0.clone() };
        let right = LatticeField { values: u0.values.iter().enumerate().map(|(k, &x)| if k < 40 { 0.0 } else { x }).collect(), ..u0.clone() };
        let vl = tracer_pde_solve(&p, &left, &u, dt, zero_bc).unwrap();
        let vr = tracer_pde_solve(&p, &right, &u, dt, zero_bc).unwrap();
        let vs = tracer_pde_solve(&p, &u0, &u, dt, Dirichlet { left: 0.0, right: 0.0 }).unwrap();
        for ((a, b), c) in vl.iter().zip(&vr).zip(&vs) {
            for k in 0..81 {
                assert!((a.values[k] + b.values[k] - c.values[k]).abs() < 1e-12);
            }
        }
        for (v, w) in vl.iter().zip(&u) {
            assert!(v.values.iter().zip(&w.values).all(|(a, b)| *a <= *b + 1e-12 && *a >= -1e-15));
        }

        let short = LatticeField::new(4, -40, vec![0.0; 80]);
        assert_eq!(tracer_pde_solve(&p, &short, &u, dt, zero_bc), Err(ReferenceError::GridMismatch));
    }

    #[test]
    fn drift_limits_and_bound() {
        let p = ModelParams::new(4, 100, 0.5, 1.0, 2.0).unwrap();
        assert!((lineage_drift(&p, -60.0) - p.nu()).abs() < 1e-12);
        assert!((lineage_drift(&p, 60.0) - (p.nu() - p.m() * p.kappa())).abs() < 1e-12);
        assert!(lineage_drift(&p, 60.0) < 0.0);
        let cap = (2.0 * p.s0() * p.m()).sqrt();
        assert!((-50..=50).all(|z| lineage_drift(&p, f64::from(z) / 2.0).abs() < cap));
    }

    #[test]
    fn sde_is_reproducible() {
        let p = ModelParams::new(4, 100, 0.5, 1.0, 2.0).unwrap();
        let a = sde_simulate(&p, 0.0, 1.0, 1e-3, 4, 0.1);
        assert_eq!(a, sde_simulate(&p, 0.0, 1.0, 1e-3, 4, 0.1));
        assert_eq!(a.len(), 11);
        assert!((a[10].0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kingman_pair_time_is_unit_exponential() {
        let draws = 100_000;
        let mut rng = stream_rng(17, Stream::Reference);
        let times: Vec<f64> = (0..draws)
            .map(|_| kingman_sample_with(2, &mut rng).unwrap().tau.get(0, 1).finite().unwrap())
            .collect();
        let mean = times.iter().sum::<f64>() / draws as f64;
        let se = 1.0 / (draws as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "mean {mean}");
        assert!(ks_test(&times[..10_000], exp1_cdf).unwrap().p_value > 0.01);
    }

    #[test]
    fn kingman_first_merger() {
        let mut rng = stream_rng(18, Stream::Reference);
        let mut counts = [0u64; 3];
        let mut total = 0.0;
        let draws = 30_000;
        for _ in 0..draws {
            let s = kingman_sample_with(3, &mut rng).unwrap();
            assert_eq!(s.mergers.len(), 2);
            let (t, pair) = s.mergers[0];
            total += t;
            counts[match pair {
                (0, 1) => 0,
                (0, 2) => 1,
                (1, 2) => 2,
                other => panic!("unexpected pair {other:?}"),
            }] += 1;
            assert!(s.mergers[1].0 >= t);
            assert_eq!(s.tau.get(pair.0, pair.1), Tau::Finite(t));
        }
        let mean = total / draws as f64;
        assert!((mean - 1.0 / 3.0).abs() < 3.0 / 3.0 / (draws as f64).sqrt());
        assert!(chi_square_uniform(&counts).unwrap().p_value > 0.01);
        assert_eq!(kingman_sample(1, 0), Err(ReferenceError::TooFewLineages(1)));
    }
}
