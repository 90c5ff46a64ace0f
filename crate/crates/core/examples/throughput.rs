//! Events per second of the simulator on a travelling front.
//!
//! `cargo run --release -p bistable-moran --example throughput -- n N alpha s0 m duration`

use std::time::Instant;

use bistable_moran::rng::{stream_rng, Stream};
use bistable_moran::sim::{build_initial, Boundary, LogFilter, NullSink, RunOptions, Simulator, Window};
use bistable_moran::ModelParams;

fn main() {
    let args: Vec<f64> = std::env::args().skip(1).map(|a| a.parse().expect("numeric argument")).collect();
    let get = |i: usize, d: f64| args.get(i).copied().unwrap_or(d);
    let params = ModelParams::new(get(0, 4.0) as u32, get(1, 2000.0) as u32, get(2, 0.5), get(3, 1.0), get(4, 2.0))
        .expect("valid parameters");
    let duration = get(5, 2.0);
    let window = Window::from_extent(params.n(), -20.0 / params.kappa(), 12.0 / params.kappa());
    for filter in [LogFilter::All, LogFilter::AParentOnly, LogFilter::Off] {
        let state = build_initial(&params, window, 0.0, &mut stream_rng(1, Stream::InitialLabels)).unwrap();
        let opts = RunOptions { cadence: 1.0, boundary: Boundary::Follow { ahead: (12.0 / params.kappa() * f64::from(params.n())) as usize }, filter, escape_margin: 5 };
        let mut sim = Simulator::new(params, state, 1, opts).unwrap();
        let clock = Instant::now();
        sim.advance(duration, &mut NullSink, |_| {}).unwrap();
        let secs = clock.elapsed().as_secs_f64();
        let c = sim.counters();
        let total: u64 = c.candidates.iter().sum();
        println!(
            "{filter:?}: {total} candidates in {secs:.2}s ({:.1} ns/event), active {} of {}",
            secs * 1e9 / total as f64,
            sim.active_sites(),
            window.len
        );
    }
}
