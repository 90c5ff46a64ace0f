use anyhow::{ensure, Result};
use bistable_moran::reference::{pde_solve, stability_bound, Dirichlet, LatticeField};
use bistable_moran::rng::{stream_rng, Stream};
use bistable_moran::sim::{build_initial, run, Boundary, LogFilter, RunOptions, Window};
use bistable_moran::ModelParams;
use rayon::prelude::*;
use serde_json::json;

use super::{timed, Check, CriterionReport};

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardSettings {
    pub n: u32,
    pub alpha: f64,
    pub s0: f64,
    pub m: f64,
    pub deme_sizes: Vec<u32>,
    pub duration: f64,
    pub seeds: u64,
    pub half_width: f64,
}

impl Default for ForwardSettings {
    fn default() -> Self {
        Self {
            n: 4,
            alpha: 0.5,
            s0: 1.0,
            m: 2.0,
            deme_sizes: vec![250, 1000, 4000],
            duration: 5.0,
            seeds: 20,
            half_width: 20.0,
        }
    }
}

/// `sup_{x,t} |p_t(x) - u_t(x)|` for one seed, with `u` started from `p_0`.
pub fn forward_sup_error(params: &ModelParams, window: Window, duration: f64, seed: u64) -> Result<f64> {
    let initial = build_initial(params, window, 0.0, &mut stream_rng(seed, Stream::InitialLabels))?;
    let opts = RunOptions { filter: LogFilter::Off, boundary: Boundary::Pinned, ..RunOptions::default() };
    let out = run(params, initial, duration, seed, opts)?;
    let nn = f64::from(params.deme_size());
    let p0: Vec<f64> = out.snapshots[0].counts.iter().map(|&a| f64::from(a) / nn).collect();
    let u0 = LatticeField::new(params.n(), window.first, p0);
    let fields = pde_solve(params, &u0, duration, 0.5 * stability_bound(params), opts.cadence, Dirichlet::default())?;
    ensure!(fields.len() == out.snapshots.len(), "{} fields vs {} snapshots", fields.len(), out.snapshots.len());
    let mut sup = 0.0_f64;
    for (f, s) in fields.iter().zip(&out.snapshots) {
        ensure!((f.time - s.time).abs() < 1e-9, "time grids differ: {} vs {}", f.time, s.time);
        for (u, &a) in f.values.iter().zip(&s.counts) {
            sup = sup.max((f64::from(a) / nn - u).abs());
        }
    }
    Ok(sup)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Criterion 4: the forward model approaches the lattice equation as N
/// grows.
pub fn forward_pde_agreement(settings: &ForwardSettings, seed: u64) -> Result<CriterionReport> {
    let (medians, secs) = timed(|| -> Result<Vec<(u32, f64)>> {
        let jobs: Vec<(u32, u64)> = settings
            .deme_sizes
            .iter()
            .flat_map(|&nn| (0..settings.seeds).map(move |k| (nn, seed.wrapping_mul(7919).wrapping_add(k))))
            .collect();
        let errors: Vec<(u32, f64)> = jobs
            .par_iter()
            .map(|&(nn, s)| {
                let params = ModelParams::new(settings.n, nn, settings.alpha, settings.s0, settings.m)?;
                let window = Window::from_extent(settings.n, -settings.half_width, settings.half_width);
                Ok((nn, forward_sup_error(&params, window, settings.duration, s)?))
            })
            .collect::<Result<_>>()?;
        Ok(settings
            .deme_sizes
            .iter()
            .map(|&nn| {
                let mut v: Vec<f64> = errors.iter().filter(|e| e.0 == nn).map(|e| e.1).collect();
                (nn, median(&mut v))
            })
            .collect())
    });
    let medians = medians?;
    let violations = medians.windows(2).filter(|w| w[1].1 >= w[0].1).count();
    let last = medians.last().map(|m| m.1).unwrap_or(f64::NAN);
    Ok(CriterionReport::new(
        4,
        "forward model approaches the lattice equation",
        secs,
        vec![
            Check::equal("monotonicity_violations", violations as f64, 0.0),
            Check::below("median_sup_error_largest_N", last, 0.08),
            Check::below("runtime_s", secs, 900.0),
        ],
        json!({
            "n": settings.n, "alpha": settings.alpha, "s0": settings.s0, "m": settings.m,
            "duration": settings.duration, "seeds": settings.seeds, "median_by_N": medians,
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn zero_duration_has_no_error() {
        let params = ModelParams::new(2, 100, 0.5, 1.0, 2.0).unwrap();
        let window = Window::from_extent(2, -12.0, 12.0);
        assert_eq!(forward_sup_error(&params, window, 0.0, 1).unwrap(), 0.0);
    }
}
