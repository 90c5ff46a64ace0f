use std::collections::HashMap;

use super::trace::{trace_from, CoalescenceMatrix, Genealogy, Tau, TraceMethod};
use super::TraceError;
use crate::sim::{Ancestor, CheckpointedRun, Slot};

/// Genealogy of samples from the end of a [`CheckpointedRun`]: ancestors at
/// every checkpoint time, with merges located exactly by replaying the
/// intervals in which they occur.
#[derive(Debug, Clone)]
pub struct CheckpointedGenealogy {
    /// Checkpoint times from the anchor backward.
    pub times: Vec<f64>,
    /// `ancestors[c][i]`: ancestor of sample `i` at `times[c]`, or `None`
    /// once the lineage has left the window.
    pub ancestors: Vec<Vec<Option<Slot>>>,
    pub tau: CoalescenceMatrix,
    /// Exact genealogies of the replayed intervals, with the anchor time of
    /// each.
    pub refined: Vec<(f64, Genealogy)>,
    /// Samples whose lineage left the window before merging or reaching the
    /// horizon.
    pub escaped: Vec<bool>,
}

struct Block {
    slot: Slot,
    members: Vec<usize>,
}

/// Traces type-A `samples` of the final state back over `intervals`
/// checkpoint intervals.
pub fn trace_checkpointed(
    run: &CheckpointedRun,
    samples: &[Slot],
    intervals: usize,
) -> Result<CheckpointedGenealogy, TraceError> {
    let final_state = run.final_state();
    let maps = run.maps();
    if intervals > maps.len() {
        return Err(TraceError::HorizonExceedsLog {
            horizon: intervals as f64,
            available: maps.len() as f64,
        });
    }
    for &s in samples {
        if final_state.type_of(s).ok_or(TraceError::UnknownSample(s))? != 1 {
            return Err(TraceError::FilteredSample(s));
        }
    }
    let k = samples.len();
    let mut tau = CoalescenceMatrix::censored(k);
    let mut escaped = vec![false; k];
    let mut blocks: Vec<Block> = Vec::new();
    let mut seen: HashMap<Slot, usize> = HashMap::new();
    for (i, &s) in samples.iter().enumerate() {
        match seen.get(&s) {
            Some(&b) => {
                for &j in &blocks[b].members {
                    tau.set(i, j, Tau::Finite(0.0));
                }
                blocks[b].members.push(i);
            }
            None => {
                seen.insert(s, blocks.len());
                blocks.push(Block { slot: s, members: vec![i] });
            }
        }
    }
    let anchor = final_state.time();
    let mut times = vec![anchor];
    let mut ancestors = vec![samples.iter().map(|&s| Some(s)).collect::<Vec<_>>()];
    let mut refined = Vec::new();
    let first = run.first_recorded();

    for j in (maps.len() - intervals..maps.len()).rev() {
        let map = &maps[j];
        let checkpoint = first + j;
        let mut next: Vec<(Slot, usize)> = Vec::with_capacity(blocks.len());
        let mut lost = Vec::new();
        for (b, block) in blocks.iter().enumerate() {
            match map.ancestor(block.slot) {
                Some(Ancestor::Slot(a)) => next.push((a, b)),
                Some(Ancestor::Ghost) => lost.push(b),
                Some(Ancestor::Untracked) | None => {
                    return Err(TraceError::UnknownSample(block.slot));
                }
            }
        }
        let mut counts: HashMap<Slot, usize> = HashMap::new();
        for &(a, _) in &next {
            *counts.entry(a).or_default() += 1;
        }
        let merging = counts.values().any(|&c| c > 1);
        let new_blocks = if merging || !lost.is_empty() {
            let log = run.replay(checkpoint).map_err(|e| TraceError::Replay(e.to_string()))?;
            let slots: Vec<Slot> = blocks.iter().map(|b| b.slot).collect();
            let types = vec![1u8; slots.len()];
            let g = trace_from(&log, map.end, &slots, &types, map.end - map.start, TraceMethod::Indexed)?;
            for (a, b, t) in g.tau.upper() {
                if let Tau::Finite(back) = t {
                    for &i in &blocks[a].members {
                        for &jj in &blocks[b].members {
                            tau.set(i, jj, Tau::Finite(anchor - map.end + back));
                        }
                    }
                }
            }
            let mut merged: Vec<Block> = Vec::new();
            let mut at: HashMap<Slot, usize> = HashMap::new();
            for (b, block) in blocks.iter().enumerate() {
                let a = g.ancestors[b];
                if !map.start_window.contains(a.site) {
                    for &i in &block.members {
                        escaped[i] = true;
                    }
                    continue;
                }
                // The coarse map and the replayed log must agree exactly.
                if next.iter().find(|(_, bb)| *bb == b).map(|(s, _)| *s) != Some(a) {
                    return Err(TraceError::ReplayMismatch { time: map.start });
                }
                match at.get(&a) {
                    Some(&m) => merged[m].members.extend(block.members.iter().copied()),
                    None => {
                        at.insert(a, merged.len());
                        merged.push(Block { slot: a, members: block.members.clone() });
                    }
                }
            }
            refined.push((map.end, g));
            merged
        } else {
            next.into_iter().map(|(a, b)| Block { slot: a, members: std::mem::take(&mut blocks[b].members) }).collect()
        };
        blocks = new_blocks;
        let state = run
            .state_at_checkpoint(checkpoint)
            .ok_or_else(|| TraceError::Replay(format!("missing checkpoint {checkpoint}")))?;
        let mut row = vec![None; k];
        for block in &blocks {
            if state.type_of(block.slot) != Some(1) {
                return Err(TraceError::TypeConstancy { sample: block.members[0], time: map.start });
            }
            for &i in &block.members {
                row[i] = Some(block.slot);
            }
        }
        times.push(map.start);
        ancestors.push(row);
        if blocks.is_empty() {
            break;
        }
    }
    Ok(CheckpointedGenealogy { times, ancestors, tau, refined, escaped })
}
