use anyhow::Result;
use bistable_moran::analytic::{AnalyticTables, Wave};
use bistable_moran::reference::{kingman_sample, pde_solve, sde_stationary_samples, stability_bound, Dirichlet, LatticeField};
use bistable_moran::stats::{chi_square_uniform, front_speed_fit, ks_test};
use bistable_moran::ModelParams;
use serde_json::json;

use super::{timed, Check, CriterionReport};

/// Parameter sets `(alpha, s0, m)` for the analytic identities.
const ANALYTIC_SETS: [(f64, f64, f64); 4] = [(0.5, 1.0, 2.0), (0.3, 1.0, 2.0), (0.8, 1.0, 1.0), (0.1, 0.5, 3.0)];

/// Criterion 1: wave ODE residual, normalisation of `pi`, and
/// `I3 / Z^2 = int pi^2 / g`.
pub fn analytic_identities() -> CriterionReport {
    let ((residual, mass, identity), secs) = timed(|| {
        let mut worst = (0.0_f64, 0.0_f64, 0.0_f64);
        for &(alpha, s0, m) in &ANALYTIC_SETS {
            let params = ModelParams::new(4, 100, alpha, s0, m).expect("valid parameters");
            let tables = AnalyticTables::build(&params);
            let wave = Wave::for_params(&params);
            let span = 30.0 / params.kappa();
            for k in 0..1000 {
                let x = -span + 2.0 * span * k as f64 / 999.0;
                worst.0 = worst.0.max(wave.ode_residual(&params, x).abs());
            }
            worst.1 = worst.1.max((tables.pi_mass() - 1.0).abs());
            let factored = tables.i3 / (tables.z_pi * tables.z_pi);
            worst.2 = worst.2.max(((tables.pi_sq_over_g() - factored) / factored).abs());
        }
        worst
    });
    CriterionReport::new(
        1,
        "analytic identities",
        secs,
        vec![
            Check::below("ode_residual", residual, 1e-10),
            Check::below("pi_mass_error", mass, 1e-8),
            Check::below("beta_identity_rel_error", identity, 1e-8),
            Check::below("runtime_s", secs, 5.0),
        ],
        json!({ "parameter_sets": ANALYTIC_SETS }),
    )
}

/// Lattice equation from a perturbed wave: returns the sup error after the
/// best single shift at `t_end` and the fitted front speed over `[5, t_end]`.
fn wave_relaxation(params: &ModelParams, t_end: f64) -> Result<(f64, f64, f64)> {
    let n = params.n();
    let wave = Wave::for_params(params);
    let bump = |x: f64| (-(x - 1.0) * (x - 1.0)).exp();
    let window_first = -25 * n as i32;
    let len = (70 * n + 1) as usize;
    let u0 = LatticeField::from_fn(n, window_first, len, |x| (wave.profile(x) + 0.05 * bump(x)).clamp(0.0, 1.0));
    let dt = 0.5 * stability_bound(params);
    let fields = pde_solve(params, &u0, t_end, dt, 0.1, Dirichlet::default())?;
    let series: Vec<(f64, f64)> =
        fields.iter().filter(|f| f.time >= 5.0 - 1e-9).filter_map(|f| f.crossing().map(|c| (f.time, c))).collect();
    let fit = front_speed_fit(&series)?;
    let last = fields.last().expect("at least the initial field");
    let sup_error = |z0: f64| {
        let shift = params.nu() * last.time + z0;
        (0..last.values.len()).map(|k| (last.values[k] - wave.profile(last.x(k) - shift)).abs()).fold(0.0, f64::max)
    };
    // Coarse scan, then golden-section refinement around the best point.
    let guess = last.crossing().unwrap_or(0.0) - params.nu() * last.time;
    let step = 0.01;
    let mut best = guess;
    for k in -200..=200 {
        let z = guess + step * k as f64;
        if sup_error(z) < sup_error(best) {
            best = z;
        }
    }
    let (mut a, mut b) = (best - step, best + step);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if sup_error(c) < sup_error(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let z0 = 0.5 * (a + b);
    Ok((sup_error(z0), fit.speed, z0))
}

/// Criterion 2: re-convergence to the travelling wave and its speed, n = 8.
pub fn pde_wave() -> Result<CriterionReport> {
    let sets = [(0.3, 2.0, 1.0), (0.5, 2.0, 1.0), (0.8, 1.0, 1.0)];
    let (rows, secs) = timed(|| -> Result<Vec<(f64, f64, f64, f64)>> {
        sets.iter()
            .map(|&(alpha, m, s0)| {
                let params = ModelParams::new(8, 100, alpha, s0, m)?;
                let (err, speed, z0) = wave_relaxation(&params, 20.0)?;
                Ok((err, speed, params.nu(), z0))
            })
            .collect()
    });
    let rows = rows?;
    let worst_err = rows.iter().map(|r| r.0).fold(0.0, f64::max);
    let worst_speed = rows.iter().map(|r| (r.1 / r.2 - 1.0).abs()).fold(0.0, f64::max);
    Ok(CriterionReport::new(
        2,
        "lattice equation relaxes to the travelling wave",
        secs,
        vec![
            Check::below("sup_error_after_shift", worst_err, 0.02),
            Check::below("speed_rel_error", worst_speed, 0.02),
            Check::below("runtime_s", secs, 60.0),
        ],
        json!({
            "sets_alpha_m_s0": sets,
            "per_set_error_speed_nu_shift": rows,
        }),
    ))
}

/// Criterion 3: stationary samples of the lineage diffusion against `pi`.
pub fn sde_stationarity(seed: u64) -> CriterionReport {
    let params = ModelParams::new(4, 100, 0.5, 1.0, 2.0).expect("valid parameters");
    let ((d, p), secs) = timed(|| {
        let tables = AnalyticTables::build(&params);
        let samples = sde_stationary_samples(&params, 1e-3, 100.0, 0.5, 100_000, seed);
        let ks = ks_test(&samples, |x| tables.pi_cdf(x)).expect("non-empty sample");
        (ks.statistic, ks.p_value)
    });
    CriterionReport::new(
        3,
        "lineage diffusion is stationary at pi",
        secs,
        vec![Check::below("ks_distance", d, 0.02), Check::below("runtime_s", secs, 60.0)],
        json!({ "alpha": 0.5, "s0": 1.0, "m": 2.0, "dt": 1e-3, "burn_in": 100.0, "thin": 0.5, "samples": 100_000, "p_value": p }),
    )
}

/// Criterion 9: Kingman reference sampler.
pub fn kingman_reference(seed: u64) -> CriterionReport {
    let draws = 100_000usize;
    let (out, secs) = timed(|| {
        let mean_se = |v: &[f64]| {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (mean, (var / n).sqrt())
        };
        let base = seed.wrapping_mul(1_000_003);
        let k2: Vec<f64> = (0..draws)
            .map(|r| kingman_sample(2, base.wrapping_add(r as u64)).expect("k >= 2").mergers[0].0)
            .collect();
        let mut pairs = [0u64; 3];
        let k3: Vec<f64> = (0..draws)
            .map(|r| {
                let s = kingman_sample(3, base.wrapping_add((draws + r) as u64)).expect("k >= 2");
                let (t, pair) = s.mergers[0];
                pairs[match pair {
                    (0, 1) => 0,
                    (0, 2) => 1,
                    _ => 2,
                }] += 1;
                t
            })
            .collect();
        (mean_se(&k2), mean_se(&k3), chi_square_uniform(&pairs).expect("three categories"))
    });
    let ((m2, se2), (m3, se3), chi) = out;
    CriterionReport::new(
        9,
        "Kingman reference sampler",
        secs,
        vec![
            Check::below("k2_mean_z", (m2 - 1.0).abs() / se2, 3.0),
            Check::below("k3_first_merger_mean_z", (m3 - 1.0 / 3.0).abs() / se3, 3.0),
            Check::below("runtime_s", secs, 10.0),
        ],
        json!({
            "draws": draws, "k2_mean": m2, "k2_se": se2, "k3_first_mean": m3, "k3_se": se3,
            "k3_first_pair_chi2_p": chi.p_value,
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_suite_passes_quickly() {
        let r = analytic_identities();
        assert!(r.pass, "{}", r.summary_line());
    }

    #[test]
    fn kingman_suite_passes() {
        let r = kingman_reference(3);
        assert!(r.pass, "{}", r.summary_line());
    }
}
