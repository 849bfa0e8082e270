//! External clustering evaluation: accuracy under optimal label matching,
//! normalized mutual information, adjusted Rand index.

use serde::Serialize;

use crate::ensemble::hungarian;
use crate::numkernel::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct EvalResult {
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
    /// matched_permutation[pred_label] = truth_label used for the diagonal.
    pub matched_permutation: Vec<usize>,
    #[serde(skip)]
    pub confusion: Vec<Vec<usize>>,
}

/// NMI denominator convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NmiNorm {
    /// sqrt(H(P) * H(T)) — the dominant convention in this literature.
    #[default]
    Geometric,
    Arithmetic,
}

fn check_lengths(pred: &[usize], truth: &[usize]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::Contract(format!(
            "label length mismatch: {} vs {}",
            pred.len(),
            truth.len()
        )));
    }
    Ok(())
}

fn confusion(pred: &[usize], truth: &[usize]) -> Vec<Vec<usize>> {
    let k = pred
        .iter()
        .chain(truth.iter())
        .copied()
        .max()
        .map_or(0, |m| m + 1);
    let mut c = vec![vec![0usize; k]; k];
    for (&p, &t) in pred.iter().zip(truth) {
        c[p][t] += 1;
    }
    c
}

/// Best-match accuracy: maximum over label permutations of the fraction of
/// agreements, computed exactly via Hungarian on the negated confusion matrix.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<(f64, Vec<usize>)> {
    check_lengths(pred, truth)?;
    let c = confusion(pred, truth);
    let k = c.len();
    if k == 0 {
        return Ok((0.0, Vec::new()));
    }
    let mut cost = Matrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            cost.set(i, j, -(c[i][j] as f64));
        }
    }
    let perm = hungarian(&cost)?;
    let matched: usize = (0..k).map(|i| c[i][perm[i]]).sum();
    Ok((matched as f64 / pred.len() as f64, perm))
}

/// Normalized mutual information; 0 by convention when either partition has a
/// single cluster.
pub fn nmi(pred: &[usize], truth: &[usize], norm: NmiNorm) -> Result<f64> {
    check_lengths(pred, truth)?;
    let n = pred.len() as f64;
    let c = confusion(pred, truth);
    let k = c.len();
    let row_sums: Vec<usize> = c.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<usize> = (0..k).map(|j| c.iter().map(|r| r[j]).sum()).collect();
    let entropy = |sums: &[usize]| -> f64 {
        sums.iter()
            .filter(|&&s| s > 0)
            .map(|&s| {
                let p = s as f64 / n;
                -p * p.ln()
            })
            .sum()
    };
    let hp = entropy(&row_sums);
    let ht = entropy(&col_sums);
    let mut mi = 0.0;
    for i in 0..k {
        for j in 0..k {
            if c[i][j] == 0 {
                continue;
            }
            let pij = c[i][j] as f64 / n;
            let pi = row_sums[i] as f64 / n;
            let pj = col_sums[j] as f64 / n;
            mi += pij * (pij / (pi * pj)).ln();
        }
    }
    let denom = match norm {
        NmiNorm::Geometric => (hp * ht).sqrt(),
        NmiNorm::Arithmetic => (hp + ht) / 2.0,
    };
    if denom <= 0.0 {
        return Ok(0.0);
    }
    Ok((mi / denom).clamp(0.0, 1.0))
}

/// Adjusted Rand index; 0 by convention when the adjustment denominator is 0.
pub fn ari(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_lengths(pred, truth)?;
    if pred.len() < 2 {
        return Err(Error::Contract("ARI needs at least 2 samples".into()));
    }
    let c = confusion(pred, truth);
    let k = c.len();
    let choose2 = |x: usize| -> f64 { (x * x.saturating_sub(1)) as f64 / 2.0 };
    let sum_cells: f64 = c.iter().flatten().map(|&x| choose2(x)).sum();
    let sum_rows: f64 = c.iter().map(|r| choose2(r.iter().sum())).sum();
    let sum_cols: f64 = (0..k)
        .map(|j| choose2(c.iter().map(|r| r[j]).sum()))
        .sum();
    let total = choose2(pred.len());
    let expected = sum_rows * sum_cols / total;
    let max_index = (sum_rows + sum_cols) / 2.0;
    let denom = max_index - expected;
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((sum_cells - expected) / denom)
}

/// Evaluate a prediction against ground truth with all three metrics.
pub fn evaluate(pred: &[usize], truth: &[usize]) -> Result<EvalResult> {
    let (acc, perm) = accuracy(pred, truth)?;
    Ok(EvalResult {
        acc,
        nmi: nmi(pred, truth, NmiNorm::Geometric)?,
        ari: ari(pred, truth)?,
        matched_permutation: perm,
        confusion: confusion(pred, truth),
    })
}
