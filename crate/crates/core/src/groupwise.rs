//! Per-decision-set multi-view clustering: embedding concatenation, K-means,
//! Student-t assignment over group centroids, and target sharpening.

use crate::mpt::DecisionSet;
use crate::nn::soft_assign;
use crate::numkernel::{pairwise_sqdist, Matrix, RngStream};
use crate::{Error, Result};

/// Soft and sharpened decisions for one decision set.
#[derive(Debug, Clone)]
pub struct GroupDecision {
    pub set_index: usize,
    pub sample_ids: Vec<usize>,
    pub soft: Matrix,
    pub sharpened: Matrix,
    pub centroids: Matrix,
}

/// Horizontal concatenation of the set's per-view embedding rows, ascending
/// view-id order.
pub fn concat_embeddings(set: &DecisionSet, embeddings: &[Matrix]) -> Result<Matrix> {
    let width: usize = set.view_ids.iter().map(|&v| embeddings[v].cols()).sum();
    let mut out = Matrix::zeros(set.sample_ids.len(), width);
    for (r, &i) in set.sample_ids.iter().enumerate() {
        let mut offset = 0;
        for &v in &set.view_ids {
            let row = embeddings[v].row(i);
            out.row_mut(r)[offset..offset + row.len()].copy_from_slice(row);
            offset += row.len();
        }
    }
    Ok(out)
}

/// Lloyd's algorithm with k-means++ seeding. An emptied cluster is re-seeded
/// to the point farthest from its assigned center. Stops at `max_iter` or when
/// the relative inertia change drops below `tol`.
pub fn kmeans(
    z: &Matrix,
    k: usize,
    rng: &mut RngStream,
    max_iter: usize,
    tol: f64,
) -> Result<Matrix> {
    let n = z.rows();
    let d = z.cols();
    if n < k {
        return Err(Error::Contract(format!("kmeans needs n >= K, got n={n}, K={k}")));
    }
    let mut centroids = plus_plus_seed(z, k, rng);
    let mut prev_inertia = f64::INFINITY;
    let mut assign = vec![0usize; n];
    for _ in 0..max_iter {
        let sq = pairwise_sqdist(z, &centroids)?;
        let mut inertia = 0.0;
        for i in 0..n {
            let (mut best, mut best_d) = (0usize, f64::INFINITY);
            for c in 0..k {
                let dist = sq.get(i, c);
                if dist < best_d {
                    best = c;
                    best_d = dist;
                }
            }
            assign[i] = best;
            inertia += best_d;
        }
        let mut counts = vec![0usize; k];
        let mut sums = Matrix::zeros(k, d);
        for i in 0..n {
            counts[assign[i]] += 1;
            for j in 0..d {
                sums.set(assign[i], j, sums.get(assign[i], j) + z.get(i, j));
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // re-seed to the globally farthest point from its own center
                let far = (0..n)
                    .max_by(|&a, &b| {
                        sq.get(a, assign[a])
                            .partial_cmp(&sq.get(b, assign[b]))
                            .unwrap()
                    })
                    .unwrap();
                centroids.row_mut(c).copy_from_slice(z.row(far));
            } else {
                for j in 0..d {
                    centroids.set(c, j, sums.get(c, j) / counts[c] as f64);
                }
            }
        }
        if prev_inertia.is_finite() {
            let rel = (prev_inertia - inertia).abs() / prev_inertia.max(f64::MIN_POSITIVE);
            if rel < tol {
                break;
            }
        }
        prev_inertia = inertia;
    }
    Ok(centroids)
}

/// Best of `restarts` independent runs by final inertia. k-means++ still
/// lands in poor local minima occasionally; a handful of restarts makes the
/// group decisions reliable without changing determinism.
pub fn kmeans_restarts(
    z: &Matrix,
    k: usize,
    rng: &mut RngStream,
    restarts: usize,
    max_iter: usize,
    tol: f64,
) -> Result<Matrix> {
    let mut best: Option<(f64, Matrix)> = None;
    for _ in 0..restarts.max(1) {
        let centroids = kmeans(z, k, rng, max_iter, tol)?;
        let sq = pairwise_sqdist(z, &centroids)?;
        let inertia: f64 = (0..z.rows())
            .map(|i| (0..k).map(|c| sq.get(i, c)).fold(f64::INFINITY, f64::min))
            .sum();
        if best.as_ref().map_or(true, |(b, _)| inertia < *b) {
            best = Some((inertia, centroids));
        }
    }
    Ok(best.expect("at least one restart").1)
}

fn plus_plus_seed(z: &Matrix, k: usize, rng: &mut RngStream) -> Matrix {
    let n = z.rows();
    let d = z.cols();
    let mut centroids = Matrix::zeros(k, d);
    let first = rng.below(n);
    centroids.row_mut(0).copy_from_slice(z.row(first));
    let mut min_d2 = vec![f64::INFINITY; n];
    for c in 1..k {
        let last = centroids.row(c - 1).to_vec();
        for i in 0..n {
            let mut d2 = 0.0;
            for (a, b) in z.row(i).iter().zip(&last) {
                d2 += (a - b) * (a - b);
            }
            min_d2[i] = min_d2[i].min(d2);
        }
        let total: f64 = min_d2.iter().sum();
        let pick = if total > 0.0 {
            let mut t = rng.uniform() * total;
            let mut chosen = n - 1;
            for (i, &w) in min_d2.iter().enumerate() {
                if t < w {
                    chosen = i;
                    break;
                }
                t -= w;
            }
            chosen
        } else {
            rng.below(n) // all points coincide with chosen centers
        };
        centroids.row_mut(c).copy_from_slice(z.row(pick));
    }
    centroids
}

/// Student-t assignment over group centroids; same kernel as the per-view head.
pub fn group_soft_assign(z: &Matrix, centroids: &Matrix) -> Result<Matrix> {
    soft_assign(z, centroids)
}

/// DEC-style target: square each probability, divide by its cluster frequency
/// (column sum over the set), then renormalize each row.
///
/// Returns the sharpened matrix and whether any column sum was degenerate.
pub fn sharpen(p: &Matrix) -> (Matrix, bool) {
    let n = p.rows();
    let k = p.cols();
    let mut freq = vec![0.0; k];
    for i in 0..n {
        for (f, &v) in freq.iter_mut().zip(p.row(i)) {
            *f += v;
        }
    }
    let mut degenerate = false;
    for f in freq.iter_mut() {
        if *f <= 0.0 {
            *f = 1e-12;
            degenerate = true;
        }
    }
    let mut out = Matrix::zeros(n, k);
    for i in 0..n {
        let mut total = 0.0;
        for kk in 0..k {
            let v = p.get(i, kk);
            let num = v * v / freq[kk];
            out.set(i, kk, num);
            total += num;
        }
        for kk in 0..k {
            out.set(i, kk, out.get(i, kk) / total);
        }
    }
    (out, degenerate)
}

/// Cluster one decision set: concat -> kmeans -> assign -> sharpen. Returns
/// `None` when the set has fewer samples than K (skipped, reported upstream).
pub fn cluster_group(
    set: &DecisionSet,
    set_index: usize,
    embeddings: &[Matrix],
    k: usize,
    rng: &mut RngStream,
) -> Result<Option<GroupDecision>> {
    if set.sample_ids.len() < k {
        return Ok(None);
    }
    let z = concat_embeddings(set, embeddings)?;
    let centroids = kmeans_restarts(&z, k, rng, 4, 100, 1e-6)?;
    let soft = group_soft_assign(&z, &centroids)?;
    let (sharpened, _) = sharpen(&soft);
    Ok(Some(GroupDecision {
        set_index,
        sample_ids: set.sample_ids.clone(),
        soft,
        sharpened,
        centroids,
    }))
}
