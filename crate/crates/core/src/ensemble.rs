//! Decision ensemble: Hungarian label alignment, inverse-entropy weighting,
//! and fusion into the ensemble decision P.

use crate::groupwise::GroupDecision;
use crate::numkernel::{row_normalize, Matrix};
use crate::{Error, Result};

/// Default epsilon inside the entropy log.
pub const ENTROPY_EPS: f64 = 1e-12;

/// Aligned stack of per-set decisions over the union sample set.
#[derive(Debug, Clone)]
pub struct DecisionTensor {
    /// One |U| x K slice per (non-skipped) decision set; absent rows are zero.
    pub decisions: Vec<Matrix>,
    /// presence[j][i]: sample `sample_ids[i]` belongs to set j.
    pub presence: Vec<Vec<bool>>,
    /// Union sample ids, ascending.
    pub sample_ids: Vec<usize>,
    /// Permutation applied to each slice: aligned[:,a] = original[:, alignment[j][a]].
    pub alignment: Vec<Vec<usize>>,
    /// Count of groups that shared no samples with the reference.
    pub no_overlap_warnings: usize,
}

/// Inverse-entropy weights, normalized per sample over the sets containing it.
/// The weight is constant across the K lanes.
#[derive(Debug, Clone)]
pub struct WeightTensor {
    /// weights[j][i], zero where presence is zero.
    pub weights: Vec<Vec<f64>>,
}

/// Row-normalized fused decision over the union samples.
#[derive(Debug, Clone)]
pub struct EnsembleDecision {
    pub probs: Matrix,
    pub sample_ids: Vec<usize>,
}

/// Exact minimum-cost assignment on a square matrix (shortest augmenting path
/// with potentials, O(n^3)). Returns `perm` with `perm[row] = column`.
pub fn hungarian(cost: &Matrix) -> Result<Vec<usize>> {
    let n = cost.rows();
    if cost.cols() != n {
        return Err(Error::ShapeMismatch {
            op: "hungarian",
            detail: format!("{}x{} matrix is not square", n, cost.cols()),
        });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    const FREE: usize = usize::MAX;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut matched = vec![FREE; n + 1]; // matched[col] = row; index n is virtual
    let mut way = vec![n; n + 1];
    for row in 0..n {
        matched[n] = row;
        let mut j0 = n;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = n;
            for j in 0..n {
                if used[j] {
                    continue;
                }
                let cur = cost.get(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched[j0] == FREE {
                break;
            }
        }
        // augment along the alternating path
        while j0 != n {
            let j1 = way[j0];
            matched[j0] = matched[j1];
            j0 = j1;
        }
    }
    let mut perm = vec![0usize; n];
    for (col, &row) in matched.iter().enumerate().take(n) {
        perm[row] = col;
    }
    Ok(perm)
}

/// Align all group decisions to the largest group's label space (ties: lowest
/// set index) and stack them over the union samples with zero padding.
///
/// Matching maximizes the soft agreement over shared samples; a group with no
/// shared samples keeps its labels and raises a warning count.
pub fn align_decisions(groups: &[GroupDecision], union: &[usize]) -> Result<DecisionTensor> {
    if groups.is_empty() {
        return Err(Error::Pipeline(
            "all decision sets were skipped; nothing to align".into(),
        ));
    }
    let k = groups[0].sharpened.cols();
    let reference = groups
        .iter()
        .enumerate()
        .max_by(|(ai, a), (bi, b)| {
            a.sample_ids
                .len()
                .cmp(&b.sample_ids.len())
                .then(bi.cmp(ai)) // ties favor the lowest index
        })
        .map(|(i, _)| i)
        .unwrap();
    let pos_in_union: std::collections::HashMap<usize, usize> =
        union.iter().enumerate().map(|(p, &id)| (id, p)).collect();
    let ref_rows: std::collections::HashMap<usize, usize> = groups[reference]
        .sample_ids
        .iter()
        .enumerate()
        .map(|(r, &id)| (id, r))
        .collect();

    let mut decisions = Vec::with_capacity(groups.len());
    let mut presence = Vec::with_capacity(groups.len());
    let mut alignment = Vec::with_capacity(groups.len());
    let mut warnings = 0;
    for (gi, g) in groups.iter().enumerate() {
        let perm: Vec<usize> = if gi == reference {
            (0..k).collect()
        } else {
            // soft agreement over shared samples
            let mut m = Matrix::zeros(k, k);
            let mut overlap = 0usize;
            for (r, &id) in g.sample_ids.iter().enumerate() {
                if let Some(&rr) = ref_rows.get(&id) {
                    overlap += 1;
                    for a in 0..k {
                        let da = groups[reference].sharpened.get(rr, a);
                        for b in 0..k {
                            m.set(a, b, m.get(a, b) + da * g.sharpened.get(r, b));
                        }
                    }
                }
            }
            if overlap == 0 {
                warnings += 1;
                (0..k).collect()
            } else {
                let mut cost = m;
                cost.scale(-1.0);
                hungarian(&cost)?
            }
        };
        let mut slice = Matrix::zeros(union.len(), k);
        let mut pres = vec![false; union.len()];
        for (r, &id) in g.sample_ids.iter().enumerate() {
            let p = pos_in_union[&id];
            pres[p] = true;
            for a in 0..k {
                slice.set(p, a, g.sharpened.get(r, perm[a]));
            }
        }
        decisions.push(slice);
        presence.push(pres);
        alignment.push(perm);
    }
    Ok(DecisionTensor {
        decisions,
        presence,
        sample_ids: union.to_vec(),
        alignment,
        no_overlap_warnings: warnings,
    })
}

/// Inverse-entropy weight per (set, sample), normalized over the sets that
/// contain the sample.
pub fn uncertainty_weights(tensor: &DecisionTensor) -> WeightTensor {
    let n = tensor.sample_ids.len();
    let mut raw: Vec<Vec<f64>> = tensor
        .presence
        .iter()
        .map(|p| vec![0.0; p.len()])
        .collect();
    for (j, slice) in tensor.decisions.iter().enumerate() {
        for i in 0..n {
            if !tensor.presence[j][i] {
                continue;
            }
            let entropy: f64 = slice
                .row(i)
                .iter()
                .map(|&d| -d * (d + ENTROPY_EPS).ln())
                .sum();
            raw[j][i] = 1.0 / entropy;
        }
    }
    for i in 0..n {
        let total: f64 = (0..tensor.decisions.len())
            .filter(|&j| tensor.presence[j][i])
            .map(|j| raw[j][i])
            .sum();
        if total > 0.0 {
            for (j, r) in raw.iter_mut().enumerate() {
                if tensor.presence[j][i] {
                    r[i] /= total;
                }
            }
        }
    }
    WeightTensor { weights: raw }
}

/// Weighted fusion of the aligned decisions, then row normalization.
pub fn ensemble_decision(
    tensor: &DecisionTensor,
    weights: &WeightTensor,
) -> Result<EnsembleDecision> {
    let n = tensor.sample_ids.len();
    let k = tensor.decisions[0].cols();
    let mut raw = Matrix::zeros(n, k);
    for (j, slice) in tensor.decisions.iter().enumerate() {
        for i in 0..n {
            if !tensor.presence[j][i] {
                continue;
            }
            let w = weights.weights[j][i];
            for kk in 0..k {
                raw.set(i, kk, raw.get(i, kk) + w * slice.get(i, kk));
            }
        }
    }
    let probs = row_normalize(&raw)?;
    Ok(EnsembleDecision {
        probs,
        sample_ids: tensor.sample_ids.clone(),
    })
}
