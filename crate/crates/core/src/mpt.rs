//! Missing-pattern tree: adaptive threshold, pruned pattern enumeration, and
//! grouping of samples into decision sets.

use crate::dataset::{binomial, round_half_up, MaskMatrix};
use crate::{Error, Result};

/// Length-V availability bitvector.
pub type MissingPattern = Vec<u8>;

/// All surviving leaf patterns for one threshold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternSet {
    pub tau: usize,
    pub patterns: Vec<MissingPattern>,
}

/// One leaf pattern with its view set and member samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionSet {
    pub pattern: MissingPattern,
    pub view_ids: Vec<usize>,
    pub sample_ids: Vec<usize>,
}

/// Adaptive threshold: round(V/2 + (tau_max - V/2)(1-rho)^2), clamped to
/// [2, tau_max].
pub fn compute_tau(v: usize, tau_max: usize, rho: f64) -> Result<usize> {
    if tau_max > v {
        return Err(Error::Contract(format!(
            "tau_max {tau_max} exceeds view count {v}"
        )));
    }
    if tau_max < 2 {
        return Err(Error::Contract(format!("tau_max must be >= 2, got {tau_max}")));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::Contract(format!("rho must be in [0,1], got {rho}")));
    }
    let half = v as f64 / 2.0;
    let raw = half + (tau_max as f64 - half) * (1.0 - rho).powi(2);
    Ok(round_half_up(raw).clamp(2, tau_max))
}

/// Enumerate the surviving leaves of the depth-V binary tree: a depth-first
/// walk assigning 0/1 per level, pruning when the partial popcount exceeds
/// `tau` or the remaining depth cannot reach it. Leaves come out in
/// lexicographic order and are exactly the popcount-`tau` bitvectors.
pub fn enumerate_patterns(v: usize, tau: usize) -> Result<PatternSet> {
    if tau == 0 || tau > v {
        return Err(Error::Contract(format!(
            "tau {tau} out of range for V={v}"
        )));
    }
    let mut patterns = Vec::with_capacity(binomial(v, tau) as usize);
    let mut current: MissingPattern = Vec::with_capacity(v);
    walk(v, tau, &mut current, &mut patterns);
    Ok(PatternSet { tau, patterns })
}

fn walk(v: usize, tau: usize, current: &mut MissingPattern, out: &mut Vec<MissingPattern>) {
    let depth = current.len();
    let ones: usize = current.iter().map(|&b| b as usize).sum();
    // pruning condition from the tree walk
    if ones > tau || v - depth < tau - ones {
        return;
    }
    if depth == v {
        out.push(current.clone());
        return;
    }
    for bit in [0u8, 1u8] {
        current.push(bit);
        walk(v, tau, current, out);
        current.pop();
    }
}

/// Assign every sample to the decision sets whose full view set it has
/// available. Sets can overlap; empty sets are retained so indices stay
/// aligned with the pattern list.
pub fn group_samples(mask: &MaskMatrix, pset: &PatternSet) -> Result<Vec<DecisionSet>> {
    let v = mask.n_views();
    if pset.patterns.iter().any(|p| p.len() != v) {
        return Err(Error::Contract(format!(
            "pattern width does not match mask width {v}"
        )));
    }
    let mut sets = Vec::with_capacity(pset.patterns.len());
    for pattern in &pset.patterns {
        let view_ids: Vec<usize> = (0..v).filter(|&i| pattern[i] == 1).collect();
        let sample_ids: Vec<usize> = (0..mask.n_samples())
            .filter(|&i| {
                let row = mask.row(i);
                pattern
                    .iter()
                    .zip(row)
                    .map(|(&m, &a)| (m & a) as usize)
                    .sum::<usize>()
                    == pset.tau
            })
            .collect();
        sets.push(DecisionSet {
            pattern: pattern.clone(),
            view_ids,
            sample_ids,
        });
    }
    Ok(sets)
}

/// Sorted deduplicated union of all sets' sample ids.
pub fn union_samples(sets: &[DecisionSet]) -> Vec<usize> {
    let mut ids: Vec<usize> = sets.iter().flat_map(|s| s.sample_ids.iter().copied()).collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}
