use std::collections::HashMap;

use super::trace::{trace_from, TraceMethod};
use super::TraceError;
use crate::params::ModelParams;
use crate::sim::{EventLog, LogFilter, PopulationState, Site, Slot};

/// Initial state plus the complete log of a fixed-window run; the
/// configuration at any time in between can be rebuilt by replay.
#[derive(Debug, Clone)]
pub struct History {
    initial: PopulationState,
    log: EventLog,
}

impl History {
    pub fn new(initial: PopulationState, log: EventLog) -> Result<Self, TraceError> {
        if log.meta.filter != LogFilter::All {
            return Err(TraceError::IncompleteLog);
        }
        if (initial.time() - log.meta.start_time).abs() > 1e-12 {
            return Err(TraceError::TimeRange { t1: initial.time(), t2: log.meta.start_time });
        }
        let w = initial.window();
        if log.records().iter().any(|e| !w.contains(e.target.site)) {
            return Err(TraceError::IncompleteLog);
        }
        Ok(Self { initial, log })
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }
    pub fn initial(&self) -> &PopulationState {
        &self.initial
    }
    pub fn start_time(&self) -> f64 {
        self.log.meta.start_time
    }
    pub fn end_time(&self) -> f64 {
        self.log.meta.end_time
    }

    fn check_time(&self, t: f64) -> Result<(), TraceError> {
        if t < self.start_time() || t > self.end_time() {
            return Err(TraceError::TimeRange { t1: t, t2: self.end_time() });
        }
        Ok(())
    }

    /// Configuration at time `t`, including every event at exactly `t`.
    pub fn state_at(&self, t: f64) -> Result<PopulationState, TraceError> {
        self.check_time(t)?;
        let mut s = self.initial.clone();
        let upto = self.log.position_at(t);
        for e in &self.log.records()[..upto] {
            s.set_type(e.target, e.parent_type);
        }
        s.time = t;
        Ok(s)
    }

    /// Type-A slots at `site` at time `t2` and their ancestors at `t1`.
    fn ancestors_of_type_a(
        &self,
        state: &PopulationState,
        sites: &[Site],
        t1: f64,
    ) -> Result<Vec<(Slot, Slot)>, TraceError> {
        let samples: Vec<Slot> = sites.iter().flat_map(|&x| state.type_a_slots(x)).collect();
        let types = vec![1u8; samples.len()];
        let g = trace_from(&self.log, state.time(), &samples, &types, state.time() - t1, TraceMethod::Indexed)?;
        Ok(samples.into_iter().zip(g.ancestors).collect())
    }
}

/// Which ancestor positions count for the one-sided tracer proportions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Ancestor at or right of `x1`.
    AtOrRight,
    /// Ancestor at or left of `x1`.
    AtOrLeft,
}

fn check_order(t1: f64, t2: f64) -> Result<(), TraceError> {
    if t1 > t2 {
        return Err(TraceError::TimeRange { t1, t2 });
    }
    Ok(())
}

/// Fraction of the `N` slots at `x2` that are type A at `t2` and whose
/// ancestor at `t1` lies at `x1`.
pub fn tracer_q(history: &History, t1: f64, t2: f64, x1: Site, x2: Site) -> Result<f64, TraceError> {
    tracer_q_where(history, t1, t2, x2, |a| a == x1)
}

/// One-sided version of [`tracer_q`].
pub fn tracer_q_sided(history: &History, t1: f64, t2: f64, x1: Site, x2: Site, side: Side) -> Result<f64, TraceError> {
    match side {
        Side::AtOrRight => tracer_q_where(history, t1, t2, x2, |a| a >= x1),
        Side::AtOrLeft => tracer_q_where(history, t1, t2, x2, |a| a <= x1),
    }
}

fn tracer_q_where(
    history: &History,
    t1: f64,
    t2: f64,
    x2: Site,
    keep: impl Fn(Site) -> bool,
) -> Result<f64, TraceError> {
    check_order(t1, t2)?;
    history.check_time(t1)?;
    let state = history.state_at(t2)?;
    let pairs = history.ancestors_of_type_a(&state, &[x2], t1)?;
    let hits = pairs.iter().filter(|(_, a)| keep(a.site)).count();
    Ok(hits as f64 / f64::from(state.deme_size()))
}

/// Number of type-A slots at `x2` at time `t2` per ancestor site at `t1`,
/// in increasing site order. `tracer_q(x1, x2)` is the count at `x1` over `N`.
pub fn ancestor_site_counts(history: &History, t1: f64, t2: f64, x2: Site) -> Result<Vec<(Site, u32)>, TraceError> {
    check_order(t1, t2)?;
    history.check_time(t1)?;
    let state = history.state_at(t2)?;
    let pairs = history.ancestors_of_type_a(&state, &[x2], t1)?;
    let mut by_site: std::collections::BTreeMap<Site, u32> = Default::default();
    for (_, a) in &pairs {
        *by_site.entry(a.site).or_default() += 1;
    }
    Ok(by_site.into_iter().collect())
}

/// Number of ordered tuples of distinct type-A individuals, the `k`-th at
/// `sites[k]` at time `t + delta`, that share one ancestor at time `t`.
pub fn pair_ancestor_counts(history: &History, t: f64, sites: &[Site], delta: f64) -> Result<u64, TraceError> {
    if !(2..=3).contains(&sites.len()) {
        return Err(TraceError::UnsupportedArity(sites.len()));
    }
    if !(delta >= 0.0) {
        return Err(TraceError::TimeRange { t1: t, t2: t + delta });
    }
    history.check_time(t)?;
    let state = history.state_at(t + delta)?;
    let mut distinct: Vec<Site> = sites.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let pairs = history.ancestors_of_type_a(&state, &distinct, t)?;
    let mut groups: HashMap<Slot, Vec<u64>> = HashMap::new();
    for (slot, anc) in pairs {
        let k = distinct.binary_search(&slot.site).expect("sampled site");
        groups.entry(anc).or_insert_with(|| vec![0; distinct.len()])[k] += 1;
    }
    let multiplicity: Vec<u64> =
        distinct.iter().map(|x| sites.iter().filter(|&&y| y == *x).count() as u64).collect();
    Ok(groups
        .values()
        .map(|c| {
            c.iter()
                .zip(&multiplicity)
                .map(|(&c, &r)| (0..r).map(|i| c.saturating_sub(i)).product::<u64>())
                .product::<u64>()
        })
        .sum())
}

/// Window lengths and thresholds for the tracer diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// Short window for pair-ancestor counts.
    pub delta: f64,
    /// Offset from the front for stayed-ahead fractions.
    pub y: f64,
    /// Stride between checks.
    pub ell: f64,
    /// Total look-back of the checks.
    pub s: f64,
}

impl DiagnosticsConfig {
    /// `delta = 1 / floor(sqrt(N) n^2)`, one unit stride and no look-back.
    pub fn default_for(params: &ModelParams) -> Self {
        let n = f64::from(params.n());
        let scale = (f64::from(params.deme_size()).sqrt() * n * n).floor();
        Self { delta: 1.0 / scale, y: 0.0, ell: 1.0, s: 0.0 }
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        if !(self.delta > 0.0) || !(self.ell > 0.0) || !(self.s >= 0.0) {
            return Err(TraceError::InvalidDiagnostics(*self));
        }
        Ok(())
    }
}

/// Fraction of slots at `x` that are type A at `t` and whose ancestor at
/// every stride time `t - j * ell` (for `j * ell <= s`) was at least `y`
/// right of the front. `fronts` holds `(time, front position)` covering
/// those times.
pub fn stayed_ahead_fraction(
    history: &History,
    fronts: &[(f64, f64)],
    cfg: &DiagnosticsConfig,
    t: f64,
    x: Site,
) -> Result<f64, TraceError> {
    cfg.validate()?;
    let steps = (cfg.s / cfg.ell + 1e-9).floor() as usize;
    let times: Vec<f64> = (0..=steps).map(|j| t - j as f64 * cfg.ell).collect();
    let tol = 1e-9 * t.abs().max(1.0);
    let mus = times
        .iter()
        .map(|&tj| {
            fronts
                .iter()
                .find(|(ft, _)| (ft - tj).abs() <= tol)
                .map(|&(_, mu)| mu)
                .ok_or(TraceError::MissingFront(tj))
        })
        .collect::<Result<Vec<f64>, _>>()?;
    history.check_time(*times.last().expect("at least one check"))?;
    let state = history.state_at(t)?;
    let n = f64::from(state.n());
    let samples = state.type_a_slots(x);
    let types = vec![1u8; samples.len()];
    let g = trace_from(history.log(), t, &samples, &types, cfg.s.min(t - history.start_time()), TraceMethod::Indexed)?;
    let kept = g
        .paths
        .iter()
        .filter(|p| {
            times
                .iter()
                .zip(&mus)
                .all(|(&tj, &mu)| f64::from(p.ancestor_at(tj).site) / n >= mu + cfg.y - 1e-12)
        })
        .count();
    Ok(kept as f64 / f64::from(state.deme_size()))
}
