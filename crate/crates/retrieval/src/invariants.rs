//! Trace-level invariant checks and the closed-form bounds they compare to.

use std::collections::BTreeMap;

use crate::proto::crash_multi::termination_phase;
use crate::trace::{ExecutionTrace, Snapshot};

/// `⌈n/k⌉ + ⌈n/(k(k−1))⌉`.
pub fn single_crash_bound(n: usize, k: usize) -> u64 {
    (n.div_ceil(k) + n.div_ceil(k * (k - 1))) as u64
}

/// `1 + Σ_{p=0}^{P} ⌈(n/k)(f/k)^p⌉` with `P = ⌈log_{k/f}(n/k)⌉`.
pub fn multi_crash_bound(n: usize, k: usize, f: usize) -> u64 {
    let top = termination_phase(n, k, f);
    let ratio = f as f64 / k as f64;
    1 + (0..=top).map(|p| ((n as f64 / k as f64) * ratio.powi(p as i32) - 1e-9).ceil() as u64).sum::<u64>()
}

/// `⌈(2f+1)n/k⌉`.
pub fn committee_bound(n: usize, k: usize, f: usize) -> u64 {
    ((2 * f + 1) * n).div_ceil(k) as u64
}

/// Peers that both still miss a cell at the start of a phase agree on its owner.
/// Needs full-check snapshots.
pub fn assignment_coherence(trace: &ExecutionTrace) -> Result<(), String> {
    let mut by_phase: BTreeMap<u32, Vec<(u32, &[u16])>> = BTreeMap::new();
    for s in &trace.snapshots {
        if let Snapshot::PhaseStart { peer, phase, assignment: Some(a), .. } = s {
            by_phase.entry(*phase).or_default().push((*peer, a));
        }
    }
    for (phase, list) in by_phase {
        let Some(n) = list.first().map(|(_, a)| a.len()) else { continue };
        for i in 0..n {
            let mut seen: Option<(u32, u16)> = None;
            for &(peer, a) in &list {
                let o = a[i];
                if o == 0 {
                    continue;
                }
                match seen {
                    None => seen = Some((peer, o)),
                    Some((p0, o0)) if o0 != o => {
                        return Err(format!(
                            "phase {phase}, index {}: peer {p0} assigns it to {o0}, peer {peer} to {o}",
                            i + 1
                        ))
                    }
                    _ => {}
                }
            }
        }
    }
    Ok(())
}

/// Phase-start snapshots whose unknown count exceeds `n(f/k)^p`:
/// `(peer, phase, unknown, bound)`.
pub fn unknown_bound_violations(trace: &ExecutionTrace, f: usize) -> Vec<(u32, u32, usize, f64)> {
    let (n, k) = (trace.n as f64, trace.k as f64);
    trace
        .snapshots
        .iter()
        .filter_map(|s| match *s {
            Snapshot::PhaseStart { peer, phase, unknown, .. } => {
                let bound = n * (f as f64 / k).powi(phase as i32);
                (unknown as f64 > bound + 1e-9).then_some((peer, phase, unknown, bound))
            }
            _ => None,
        })
        .collect()
}

/// Highest phase any peer started.
pub fn max_phase(trace: &ExecutionTrace) -> Option<u32> {
    trace
        .snapshots
        .iter()
        .filter_map(|s| match s {
            Snapshot::PhaseStart { phase, .. } => Some(*phase),
            _ => None,
        })
        .max()
}
