use std::collections::HashMap;

use bistable_moran::lineage::{pair_ancestor_counts, History};
use bistable_moran::reference::sde_simulate;
use bistable_moran::rng::{stream_rng, Stream};
use bistable_moran::sim::{
    build_initial, run, Boundary, LogFilter, PopulationState, RunOptions, Site, Slot, Window,
};
use bistable_moran::stats::ks_two_sample;
use bistable_moran::ModelParams;
use rand::Rng;

#[test]
fn isolated_type_a_deme_matches_poisson_means() {
    let (big_n, t_end, seeds) = (12u32, 1.5, 200u64);
    let params = ModelParams::new(4, big_n, 0.5, 1.0, 2.0).unwrap();
    let (nf, r, s, a) = (big_n as f64, params.r_n(), params.s_n(), params.alpha());
    let expected = [
        nf * (nf - 1.0) * r * (1.0 - (a + 1.0) * s) * t_end,
        nf * (nf - 1.0) * r * a * s * t_end,
        nf * (nf - 1.0) * (nf - 2.0) * r * s / nf * t_end,
    ];
    let mut totals = [0u64; 3];
    for seed in 0..seeds {
        let state = PopulationState::from_types(4, big_n, 0, 0.0, vec![1; big_n as usize]).unwrap();
        let opts = RunOptions { boundary: Boundary::Isolated, ..RunOptions::default() };
        let out = run(&params, state, t_end, seed, opts).unwrap();
        assert_eq!(out.counters.accepted[3], 0);
        for (c, total) in totals.iter_mut().enumerate() {
            let logged = out.log.records().iter().filter(|e| e.class.ordinal() == c).count() as u64;
            assert_eq!(logged, out.counters.accepted[c]);
            *total += logged;
        }
    }
    for c in 0..3 {
        let mean = totals[c] as f64 / seeds as f64;
        let se = (expected[c] / seeds as f64).sqrt();
        assert!(
            (mean - expected[c]).abs() < 4.0 * se,
            "class {c}: mean {mean} vs {} (se {se})",
            expected[c]
        );
    }
}

/// Forward replay with explicit ancestor labels: every slot starts as its
/// own ancestor at `t`, and each event copies the parent's label.
fn replay_pair_count(history: &History, t: f64, sites: &[Site], delta: f64) -> u64 {
    let start = history.state_at(t).unwrap();
    let window = start.window();
    let nn = start.deme_size() as usize;
    let idx = |s: Slot| (s.site - window.first) as usize * nn + s.index as usize;
    let mut label: Vec<usize> = (0..window.len * nn).collect();
    let mut ty: Vec<u8> = (0..window.len * nn)
        .map(|k| start.type_of(Slot::new(window.first + (k / nn) as Site, (k % nn) as u32)).unwrap())
        .collect();
    // Ghost parents beyond the edges are distinct pinned individuals.
    let mut ghosts: HashMap<Slot, usize> = HashMap::new();
    for e in history.log().records().iter().filter(|e| e.time > t && e.time <= t + delta) {
        let (l, p) = if window.contains(e.parent.site) {
            (label[idx(e.parent)], ty[idx(e.parent)])
        } else {
            let fresh = label.len() + ghosts.len();
            (*ghosts.entry(e.parent).or_insert(fresh), e.parent_type)
        };
        label[idx(e.target)] = l;
        ty[idx(e.target)] = p;
    }
    let members: Vec<Vec<usize>> = sites
        .iter()
        .map(|&x| (0..nn).map(|i| idx(Slot::new(x, i as u32))).filter(|&k| ty[k] == 1).collect())
        .collect();
    let mut count = 0u64;
    match members.as_slice() {
        [a, b] => {
            for &i in a {
                for &j in b {
                    if i != j && label[i] == label[j] {
                        count += 1;
                    }
                }
            }
        }
        [a, b, c] => {
            for &i in a {
                for &j in b {
                    for &k in c {
                        if i != j && j != k && i != k && label[i] == label[j] && label[j] == label[k] {
                            count += 1;
                        }
                    }
                }
            }
        }
        _ => unreachable!(),
    }
    count
}

#[test]
fn pair_counts_match_forward_replay() {
    let params = ModelParams::new(2, 20, 0.5, 1.0, 2.0).unwrap();
    let window = Window::from_extent(2, -12.0, 12.0);
    let state = build_initial(&params, window, 0.0, &mut stream_rng(5, Stream::InitialLabels)).unwrap();
    let out = run(&params, state.clone(), 2.0, 5, RunOptions::default()).unwrap();
    let history = History::new(state, out.log).unwrap();
    let mut rng = stream_rng(5, Stream::Custom(1));
    let mut nonzero = 0;
    for _ in 0..60 {
        let t = rng.random_range(0.0..1.5);
        let delta = rng.random_range(0.0..0.5);
        let front = history.state_at(t).unwrap().front_site().unwrap();
        let x = front + rng.random_range(-3..=1);
        let shapes: [&[Site]; 4] = [&[x, x], &[x, x + 1], &[x, x, x], &[x, x + 1, x + 1]];
        for sites in shapes {
            let fast = pair_ancestor_counts(&history, t, sites, delta).unwrap();
            assert_eq!(fast, replay_pair_count(&history, t, sites, delta), "t={t} delta={delta} sites={sites:?}");
            nonzero += (fast > 0) as usize;
        }
    }
    assert!(nonzero > 20);
}

#[test]
fn sde_endpoints_stable_under_step_halving() {
    let params = ModelParams::new(4, 100, 0.5, 1.0, 2.0).unwrap();
    let (paths, t_end, dt) = (100_000u64, 4.0, 0.01);
    let endpoint = |dt: f64, seed: u64| sde_simulate(&params, 0.0, t_end, dt, seed, t_end).last().unwrap().1;
    let coarse: Vec<f64> = (0..paths).map(|s| endpoint(dt, s)).collect();
    let fine: Vec<f64> = (0..paths).map(|s| endpoint(dt / 2.0, paths + s)).collect();
    let ks = ks_two_sample(&coarse, &fine).unwrap();
    assert!(ks.statistic < 0.01, "D = {}", ks.statistic);
}

#[test]
fn a_parent_filter_preserves_the_forward_law() {
    let params = ModelParams::new(2, 100, 0.5, 1.0, 2.0).unwrap();
    let window = Window::from_extent(2, -20.0, 20.0);
    // Total type-A mass at the end of each run.
    let masses = |filter: LogFilter, offset: u64| -> Vec<f64> {
        (offset..offset + 150)
            .map(|seed| {
                let state = build_initial(&params, window, 0.0, &mut stream_rng(seed, Stream::InitialLabels)).unwrap();
                let out = run(&params, state, 3.0, seed, RunOptions { filter, ..RunOptions::default() }).unwrap();
                out.state.counts().iter().sum::<u32>() as f64
            })
            .collect()
    };
    let all = masses(LogFilter::All, 0);
    let a_only = masses(LogFilter::AParentOnly, 10_000);
    let ks = ks_two_sample(&all, &a_only).unwrap();
    assert!(ks.p_value > 1e-3, "D = {}, p = {}", ks.statistic, ks.p_value);
}
