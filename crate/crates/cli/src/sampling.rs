use anyhow::{ensure, Result};
use bistable_moran::sim::{PopulationState, Slot};
use rand::seq::IndexedRandom;
use rand::Rng;

use crate::config::Sampler;

/// Type-A slots of `state` at sites `x` with `|x - mu| <= band`, where `mu`
/// is the front position.
pub fn eligible_slots(state: &PopulationState, band: f64) -> Result<Vec<Slot>> {
    let mu = state.front_position()?;
    let w = state.window();
    Ok((w.first..=w.last())
        .filter(|&x| (state.x(x) - mu).abs() <= band + 1e-12)
        .flat_map(|x| state.type_a_slots(x))
        .collect())
}

/// Draws `k` distinct type-A slots within `band` of the front.
pub fn sample_type_a<R: Rng + ?Sized>(
    state: &PopulationState,
    k: usize,
    band: f64,
    sampler: Sampler,
    rng: &mut R,
) -> Result<Vec<Slot>> {
    let pool = eligible_slots(state, band)?;
    ensure!(
        pool.len() >= k,
        "only {} type-A individuals within {band} of the front, {k} requested",
        pool.len()
    );
    Ok(match sampler {
        Sampler::Uniform => pool.choose_multiple(rng, k).copied().collect(),
        Sampler::Nearest => {
            let mu = state.front_position()?;
            let mut pool = pool;
            pool.sort_by(|a, b| {
                let da = (state.x(a.site) - mu).abs();
                let db = (state.x(b.site) - mu).abs();
                da.total_cmp(&db).then(a.cmp(b))
            });
            pool.truncate(k);
            pool
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use bistable_moran::rng::{stream_rng, Stream};
    use bistable_moran::sim::{build_initial, Window};
    use bistable_moran::ModelParams;

    fn state() -> PopulationState {
        let params = ModelParams::new(4, 40, 0.5, 1.0, 2.0).unwrap();
        build_initial(&params, Window::from_extent(4, -12.0, 12.0), 0.0, &mut stream_rng(1, Stream::InitialLabels)).unwrap()
    }

    #[test]
    fn samples_are_distinct_type_a_and_in_band() {
        let s = state();
        let mu = s.front_position().unwrap();
        let picks = sample_type_a(&s, 30, 1.0, Sampler::Uniform, &mut stream_rng(2, Stream::Sampling)).unwrap();
        let mut sorted = picks.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 30);
        assert!(picks.iter().all(|&p| s.type_of(p) == Some(1) && (s.x(p.site) - mu).abs() <= 1.0));
    }

    #[test]
    fn same_seed_same_sample_and_overdraw_fails() {
        let s = state();
        let draw = |seed| sample_type_a(&s, 5, 2.0, Sampler::Uniform, &mut stream_rng(seed, Stream::Sampling)).unwrap();
        assert_eq!(draw(7), draw(7));
        let available = eligible_slots(&s, 0.0).unwrap().len();
        assert!(sample_type_a(&s, available + 1, 0.0, Sampler::Uniform, &mut stream_rng(1, Stream::Sampling)).is_err());
    }

    #[test]
    fn nearest_sampler_prefers_the_front_site() {
        let s = state();
        let front = s.front_site().unwrap();
        let picks = sample_type_a(&s, 3, 2.0, Sampler::Nearest, &mut stream_rng(0, Stream::Sampling)).unwrap();
        assert!(picks.iter().all(|p| p.site == front));
    }
}
