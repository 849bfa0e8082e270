//! Ensemble-to-individual distillation: consistency and InfoNCE losses, the
//! total objective, and the full training procedure.

use serde::Serialize;

use crate::dataset::{MaskMatrix, MultiViewDataset};
use crate::ensemble::{
    align_decisions, ensemble_decision, hungarian, uncertainty_weights, DecisionTensor,
    EnsembleDecision, WeightTensor,
};
use crate::groupwise::{cluster_group, concat_embeddings, sharpen, GroupDecision};
use crate::metrics::accuracy;
use crate::mpt::{compute_tau, enumerate_patterns, group_samples, union_samples, DecisionSet, PatternSet};
use crate::nn::{
    init_centroids, mlp_backward, mlp_forward, pretrain, soft_assign, soft_assign_backward,
    adam_step, ViewGrads, ViewModel,
};
use crate::numkernel::{Matrix, RngStream};
use crate::{Error, Result};

/// Loss coefficients for one E2I step. Ablated terms carry a zero lambda.
#[derive(Debug, Clone, Copy)]
pub struct LossSpec {
    pub lambda1: f64,
    pub lambda2: f64,
    pub temperature: f64,
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct BatchLosses {
    pub rec: f64,
    pub cons: f64,
    pub disc: f64,
}

impl BatchLosses {
    pub fn total(&self, spec: &LossSpec) -> f64 {
        self.rec + spec.lambda1 * self.cons + spec.lambda2 * self.disc
    }
}

/// Settings for the full training procedure.
#[derive(Debug, Clone)]
pub struct TrainSettings {
    pub k: usize,
    pub hidden_dims: Vec<usize>,
    pub embed_dim: usize,
    pub lr: f64,
    pub pretrain_epochs: usize,
    pub epochs: usize,
    pub interval: usize,
    pub batch_size: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub temperature: f64,
    pub tau_max: usize,
    pub tau_override: Option<usize>,
    pub allow_singleton_views: bool,
    pub no_mpt: bool,
    pub no_mde: bool,
    pub no_cons: bool,
    pub no_disc: bool,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EpochLoss {
    pub total: f64,
    pub rec: f64,
    pub cons: f64,
    pub disc: f64,
}

/// Per-round ensemble statistics.
#[derive(Debug, Clone, Serialize)]
pub struct RoundStats {
    pub round: usize,
    /// Accuracy of argmax(P) on the union samples, when labels exist.
    pub ensemble_acc: Option<f64>,
    pub no_overlap_warnings: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub tau: usize,
    pub n_patterns: usize,
    pub union_size: usize,
    pub mean_set_size: f64,
    pub skipped_sets: usize,
    pub pretrain_trace: Vec<f64>,
    pub epoch_losses: Vec<EpochLoss>,
    pub rounds: Vec<RoundStats>,
    /// Final-round ensemble accuracy on the union (ACC over U).
    pub final_ensemble_acc: Option<f64>,
    pub predictions: Vec<usize>,
}

/// Cross-view consistency: sum over views and counted samples of
/// ||p_i - q_i^v||^2. P is a constant target.
pub fn consistency_loss(
    p: &EnsembleDecision,
    q_views: &[Matrix],
    mask: &MaskMatrix,
) -> f64 {
    let mut total = 0.0;
    for (v, q) in q_views.iter().enumerate() {
        for (pos, &i) in p.sample_ids.iter().enumerate() {
            if !mask.available(i, v) {
                continue;
            }
            for (a, b) in p.probs.row(pos).iter().zip(q.row(i)) {
                total += (a - b) * (a - b);
            }
        }
    }
    total
}

/// Cluster-level InfoNCE between the teacher columns `p` and one view's
/// columns `q` (both n x K over the same rows), with gradient w.r.t. `q`.
///
/// Per anchor column k the positive is cos(p_:,k, q_:,k)/temp; the negatives
/// are cos(p_:,k', q_:,k)/temp and cos(q_:,k', q_:,k)/temp for k' != k. The
/// loss is the mean over anchors of -s+ + log sum exp(s-). A zero-norm column
/// contributes cosine 0 with zero gradient.
pub fn infonce_with_grad(p: &Matrix, q: &Matrix, temp: f64) -> (f64, Matrix) {
    let n = p.rows();
    let k = p.cols();
    debug_assert_eq!(q.rows(), n);
    debug_assert_eq!(q.cols(), k);
    let col = |m: &Matrix, c: usize| -> Vec<f64> { (0..n).map(|i| m.get(i, c)).collect() };
    let norm = |x: &[f64]| -> f64 { x.iter().map(|v| v * v).sum::<f64>().sqrt() };
    let dot = |x: &[f64], y: &[f64]| -> f64 { x.iter().zip(y).map(|(a, b)| a * b).sum() };

    let p_cols: Vec<Vec<f64>> = (0..k).map(|c| col(p, c)).collect();
    let q_cols: Vec<Vec<f64>> = (0..k).map(|c| col(q, c)).collect();
    let pn: Vec<f64> = p_cols.iter().map(|c| norm(c)).collect();
    let qn: Vec<f64> = q_cols.iter().map(|c| norm(c)).collect();
    let cos_pq = |a: usize, b: usize| -> f64 {
        if pn[a] > 0.0 && qn[b] > 0.0 {
            dot(&p_cols[a], &q_cols[b]) / (pn[a] * qn[b])
        } else {
            0.0
        }
    };
    let cos_qq = |a: usize, b: usize| -> f64 {
        if qn[a] > 0.0 && qn[b] > 0.0 {
            dot(&q_cols[a], &q_cols[b]) / (qn[a] * qn[b])
        } else {
            0.0
        }
    };

    // coefficients on each cosine term, filled while accumulating the loss
    let mut c_pq = vec![vec![0.0; k]; k]; // cos(p_a, q_b)
    let mut c_qq = vec![vec![0.0; k]; k]; // cos(q_a, q_b)
    let inv = 1.0 / (temp * k as f64);
    let mut loss = 0.0;
    for anchor in 0..k {
        let s_plus = cos_pq(anchor, anchor) / temp;
        let mut scores = Vec::with_capacity(2 * (k - 1));
        for kp in 0..k {
            if kp == anchor {
                continue;
            }
            scores.push((cos_pq(kp, anchor) / temp, kp, true));
            scores.push((cos_qq(kp, anchor) / temp, kp, false));
        }
        let m = scores.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
        let lse = m + scores.iter().map(|s| (s.0 - m).exp()).sum::<f64>().ln();
        loss += -s_plus + lse;
        c_pq[anchor][anchor] -= inv;
        for &(s, kp, is_pq) in &scores {
            let w = (s - lse).exp(); // softmax weight of this negative
            if is_pq {
                c_pq[kp][anchor] += w * inv;
            } else {
                c_qq[kp][anchor] += w * inv;
            }
        }
    }
    loss /= k as f64;

    let mut dq = Matrix::zeros(n, k);
    for a in 0..k {
        for b in 0..k {
            // cos(p_a, q_b) gradient w.r.t. q_b
            let cpq = c_pq[a][b];
            if cpq != 0.0 && pn[a] > 0.0 && qn[b] > 0.0 {
                let cs = cos_pq(a, b);
                for i in 0..n {
                    let g = p_cols[a][i] / (pn[a] * qn[b]) - cs * q_cols[b][i] / (qn[b] * qn[b]);
                    dq.set(i, b, dq.get(i, b) + cpq * g);
                }
            }
            // cos(q_a, q_b) gradient w.r.t. both columns
            let cqq = c_qq[a][b];
            if cqq != 0.0 && qn[a] > 0.0 && qn[b] > 0.0 {
                let cs = cos_qq(a, b);
                for i in 0..n {
                    let gb = q_cols[a][i] / (qn[a] * qn[b]) - cs * q_cols[b][i] / (qn[b] * qn[b]);
                    let ga = q_cols[b][i] / (qn[a] * qn[b]) - cs * q_cols[a][i] / (qn[a] * qn[a]);
                    dq.set(i, b, dq.get(i, b) + cqq * gb);
                    dq.set(i, a, dq.get(i, a) + cqq * ga);
                }
            }
        }
    }
    (loss, dq)
}

/// Forward-only InfoNCE value for one view.
pub fn infonce_loss(p: &Matrix, q: &Matrix, temp: f64) -> f64 {
    infonce_with_grad(p, q, temp).0
}

/// Total discrimination loss: sum of per-view InfoNCE over counted rows.
pub fn discrimination_loss(
    p: &EnsembleDecision,
    q_views: &[Matrix],
    mask: &MaskMatrix,
    temp: f64,
) -> f64 {
    let mut total = 0.0;
    for (v, q) in q_views.iter().enumerate() {
        let rows: Vec<usize> = (0..p.sample_ids.len())
            .filter(|&pos| mask.available(p.sample_ids[pos], v))
            .collect();
        if rows.len() < 2 {
            continue;
        }
        let ids: Vec<usize> = rows.iter().map(|&pos| p.sample_ids[pos]).collect();
        let p_sub = p.probs.select_rows(&rows);
        let q_sub = q.select_rows(&ids);
        total += infonce_loss(&p_sub, &q_sub, temp);
    }
    total
}

/// Full-objective value over the complete counted sets (not mini-batched).
pub fn total_loss(
    models: &[ViewModel],
    ds: &MultiViewDataset,
    mask: &MaskMatrix,
    p: &EnsembleDecision,
    spec: &LossSpec,
) -> Result<f64> {
    let rec = crate::nn::reconstruction_loss(models, ds, mask)?;
    let q_views = view_assignments(models, ds)?;
    let cons = consistency_loss(p, &q_views, mask);
    let disc = discrimination_loss(p, &q_views, mask, spec.temperature);
    Ok(rec + spec.lambda1 * cons + spec.lambda2 * disc)
}

/// Soft assignments of every sample in every view (rows for unavailable
/// samples are computed but never counted by the losses).
pub fn view_assignments(models: &[ViewModel], ds: &MultiViewDataset) -> Result<Vec<Matrix>> {
    models
        .iter()
        .zip(&ds.views)
        .map(|(m, x)| soft_assign(&crate::nn::encode(m, x)?, &m.centroids))
        .collect()
}

/// One view's losses and gradients on a batch. `x` holds the batch rows
/// available in this view; `p` the matching ensemble target rows in the same
/// order (constant). Gradients are for rec + lambda1*cons + lambda2*disc.
pub fn view_batch_backward(
    model: &ViewModel,
    x: &Matrix,
    p: &Matrix,
    spec: &LossSpec,
) -> Result<(BatchLosses, ViewGrads)> {
    let mut grads = ViewGrads::zeros_like(model);
    let mut losses = BatchLosses::default();
    if x.rows() == 0 {
        return Ok((losses, grads));
    }
    let (z, enc_cache) = mlp_forward(&model.encoder, x);
    let (xhat, dec_cache) = mlp_forward(&model.decoder, &z);
    let mut d_xhat = Matrix::zeros(xhat.rows(), xhat.cols());
    for idx in 0..xhat.data().len() {
        let diff = xhat.data()[idx] - x.data()[idx];
        losses.rec += diff * diff;
        d_xhat.data_mut()[idx] = 2.0 * diff;
    }
    let mut d_z = mlp_backward(&model.decoder, &dec_cache, &d_xhat, &mut grads.decoder);

    if spec.lambda1 != 0.0 || spec.lambda2 != 0.0 {
        let q = soft_assign(&z, &model.centroids)?;
        let mut d_q = Matrix::zeros(q.rows(), q.cols());
        // consistency: ||p - q||^2 summed over rows
        for i in 0..q.rows() {
            for kk in 0..q.cols() {
                let diff = p.get(i, kk) - q.get(i, kk);
                losses.cons += diff * diff;
                d_q.set(i, kk, spec.lambda1 * -2.0 * diff);
            }
        }
        if x.rows() >= 2 {
            let (disc, d_q_disc) = infonce_with_grad(p, &q, spec.temperature);
            losses.disc = disc;
            for (dst, &g) in d_q.data_mut().iter_mut().zip(d_q_disc.data()) {
                *dst += spec.lambda2 * g;
            }
        }
        let (d_z_q, d_u) = soft_assign_backward(&z, &model.centroids, &d_q)?;
        d_z.add_assign(&d_z_q);
        grads.centroids.add_assign(&d_u);
    }
    mlp_backward(&model.encoder, &enc_cache, &d_z, &mut grads.encoder);
    Ok((losses, grads))
}

/// Forward-only counterpart of `view_batch_backward`, used by the finite
/// difference checks.
pub fn view_batch_loss(model: &ViewModel, x: &Matrix, p: &Matrix, spec: &LossSpec) -> Result<f64> {
    let z = crate::nn::encode(model, x)?;
    let xhat = crate::nn::decode(model, &z)?;
    let mut losses = BatchLosses::default();
    for (a, b) in x.data().iter().zip(xhat.data()) {
        losses.rec += (a - b) * (a - b);
    }
    if spec.lambda1 != 0.0 || spec.lambda2 != 0.0 {
        let q = soft_assign(&z, &model.centroids)?;
        for i in 0..q.rows() {
            for kk in 0..q.cols() {
                let diff = p.get(i, kk) - q.get(i, kk);
                losses.cons += diff * diff;
            }
        }
        if x.rows() >= 2 {
            losses.disc = infonce_loss(p, &q, spec.temperature);
        }
    }
    Ok(losses.total(spec))
}

/// Everything produced by one ensemble round.
pub struct RoundOutput {
    pub groups: Vec<GroupDecision>,
    pub tensor: DecisionTensor,
    pub weights: WeightTensor,
    pub fused: EnsembleDecision,
    pub skipped: usize,
}

/// One ensemble round: embeddings, per-set decisions, alignment, weights, and
/// the fused decision. `no_mde` swaps the entropy weights for uniform ones.
/// `no_mpt` skips the group-wise re-clustering entirely and feeds each view
/// model's own soft assignment to the ensemble (sets are then per-view).
pub fn ensemble_round(
    models: &[ViewModel],
    ds: &MultiViewDataset,
    sets: &[DecisionSet],
    k: usize,
    no_mpt: bool,
    no_mde: bool,
    rng: &mut RngStream,
) -> Result<RoundOutput> {
    let embeddings: Vec<Matrix> = models
        .iter()
        .zip(&ds.views)
        .map(|(m, x)| crate::nn::encode(m, x))
        .collect::<Result<_>>()?;
    let mut groups: Vec<GroupDecision> = Vec::new();
    let mut skipped = 0usize;
    for (j, set) in sets.iter().enumerate() {
        let mut child = rng.split();
        let group = if no_mpt {
            model_group(set, j, models, &embeddings, k)?
        } else {
            cluster_group(set, j, &embeddings, k, &mut child)?
        };
        match group {
            Some(g) => groups.push(g),
            None => skipped += 1,
        }
    }
    if groups.is_empty() {
        return Err(Error::Pipeline(format!(
            "all {} decision sets were skipped (fewer than K={k} samples each)",
            sets.len()
        )));
    }
    let union = union_samples(sets);
    let tensor = align_decisions(&groups, &union)?;
    let weights = if no_mde {
        uniform_weights(&tensor)
    } else {
        uncertainty_weights(&tensor)
    };
    let fused = ensemble_decision(&tensor, &weights)?;
    check_round_invariants(&tensor, &weights, &fused)?;
    Ok(RoundOutput {
        groups,
        tensor,
        weights,
        fused,
        skipped,
    })
}

/// Decision for one per-view set taken straight from the view model itself:
/// its Student-t assignment over its own centroids, restricted to the set's
/// rows and sharpened. No re-clustering happens.
fn model_group(
    set: &DecisionSet,
    set_index: usize,
    models: &[ViewModel],
    embeddings: &[Matrix],
    k: usize,
) -> Result<Option<GroupDecision>> {
    if set.sample_ids.len() < k {
        return Ok(None);
    }
    if set.view_ids.len() != 1 {
        return Err(Error::Pipeline(format!(
            "per-view decision expects a singleton view set, got {:?}",
            set.view_ids
        )));
    }
    let v = set.view_ids[0];
    let z = concat_embeddings(set, embeddings)?;
    let soft = soft_assign(&z, &models[v].centroids)?;
    let (sharpened, _) = sharpen(&soft);
    Ok(Some(GroupDecision {
        set_index,
        sample_ids: set.sample_ids.clone(),
        soft,
        sharpened,
        centroids: models[v].centroids.clone(),
    }))
}

fn uniform_weights(tensor: &DecisionTensor) -> WeightTensor {
    let n = tensor.sample_ids.len();
    let mut weights: Vec<Vec<f64>> = tensor.presence.iter().map(|_| vec![0.0; n]).collect();
    for i in 0..n {
        let count = tensor.presence.iter().filter(|p| p[i]).count();
        if count == 0 {
            continue;
        }
        for (j, p) in tensor.presence.iter().enumerate() {
            if p[i] {
                weights[j][i] = 1.0 / count as f64;
            }
        }
    }
    WeightTensor { weights }
}

/// Simplex and weight-normalization checks, enforced on every round.
fn check_round_invariants(
    tensor: &DecisionTensor,
    weights: &WeightTensor,
    fused: &EnsembleDecision,
) -> Result<()> {
    let n = tensor.sample_ids.len();
    for (j, slice) in tensor.decisions.iter().enumerate() {
        for i in 0..n {
            if tensor.presence[j][i] {
                let s: f64 = slice.row(i).iter().sum();
                if (s - 1.0).abs() > 1e-9 {
                    return Err(Error::Pipeline(format!(
                        "decision row off simplex: set {j} sample {i} sums {s}"
                    )));
                }
            }
        }
    }
    for i in 0..n {
        let s: f64 = (0..tensor.decisions.len())
            .filter(|&j| tensor.presence[j][i])
            .map(|j| weights.weights[j][i])
            .sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::Pipeline(format!(
                "weights for sample {i} sum {s}"
            )));
        }
    }
    for i in 0..fused.probs.rows() {
        let s: f64 = fused.probs.row(i).iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::Pipeline(format!("P row {i} sums {s}")));
        }
    }
    Ok(())
}

/// Permute the columns of `cur` to best agree with `prev` (same rows). The
/// per-round re-clustering labels clusters arbitrarily; without this anchor
/// the distillation target would permute under the students every refresh.
fn anchor_columns(prev: &Matrix, cur: &Matrix) -> Result<Matrix> {
    let k = cur.cols();
    let mut cost = Matrix::zeros(k, k);
    for i in 0..cur.rows() {
        for a in 0..k {
            for b in 0..k {
                cost.set(a, b, cost.get(a, b) - prev.get(i, a) * cur.get(i, b));
            }
        }
    }
    let perm = hungarian(&cost)?;
    let mut out = Matrix::zeros(cur.rows(), k);
    for i in 0..cur.rows() {
        for a in 0..k {
            out.set(i, a, cur.get(i, perm[a]));
        }
    }
    Ok(out)
}

/// Aggregate per-view vote: argmax over k of the sum of available views'
/// assignments; ties resolve to the lowest cluster index.
pub fn predict_labels(
    models: &[ViewModel],
    ds: &MultiViewDataset,
    mask: &MaskMatrix,
) -> Result<Vec<usize>> {
    let q_views = view_assignments(models, ds)?;
    let n = ds.n_samples();
    let k = models[0].centroids.rows();
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let mut votes = vec![0.0; k];
        for (v, q) in q_views.iter().enumerate() {
            if mask.available(i, v) {
                for (acc, &val) in votes.iter_mut().zip(q.row(i)) {
                    *acc += val;
                }
            }
        }
        let mut best = 0usize;
        for kk in 1..k {
            if votes[kk] > votes[best] {
                best = kk;
            }
        }
        labels.push(best);
    }
    Ok(labels)
}

/// Resolve tau, enumerate the retained patterns, and group the samples.
pub fn decision_sets(
    mask: &MaskMatrix,
    settings: &TrainSettings,
) -> Result<(usize, PatternSet, Vec<DecisionSet>)> {
    let (tau, pset) = build_pattern_sets(mask, settings)?;
    let sets = group_samples(mask, &pset)?;
    Ok((tau, pset, sets))
}

fn build_pattern_sets(
    mask: &MaskMatrix,
    settings: &TrainSettings,
) -> Result<(usize, PatternSet)> {
    let v = mask.n_views();
    if settings.no_mpt {
        // per-view singleton decisions fed straight to the ensemble
        let patterns = (0..v)
            .map(|i| {
                let mut p = vec![0u8; v];
                p[i] = 1;
                p
            })
            .collect();
        return Ok((1, PatternSet { tau: 1, patterns }));
    }
    let n = mask.n_samples();
    let incomplete = (0..n)
        .filter(|&i| mask.row(i).iter().any(|&a| a == 0))
        .count();
    let rho = incomplete as f64 / n as f64;
    let tau = match settings.tau_override {
        Some(t) => {
            if t == 1 && !settings.allow_singleton_views {
                return Err(Error::Contract(
                    "tau=1 needs --allow-singleton-views (single views form no pairs)".into(),
                ));
            }
            if t == 0 || t > v {
                return Err(Error::Contract(format!("tau {t} out of range for V={v}")));
            }
            t
        }
        None => compute_tau(v, settings.tau_max, rho)?,
    };
    Ok((tau, enumerate_patterns(v, tau)?))
}

/// The full training procedure: pretrain, centroid init, pattern grouping,
/// and alternating ensemble rounds with distillation epochs.
pub fn train(
    ds: &MultiViewDataset,
    mask: &MaskMatrix,
    settings: &TrainSettings,
    rng: &mut RngStream,
) -> Result<(Vec<ViewModel>, TrainReport)> {
    let v = ds.n_views();
    let k = settings.k;
    let mut models: Vec<ViewModel> = (0..v)
        .map(|vi| {
            ViewModel::new(
                ds.views[vi].cols(),
                &settings.hidden_dims,
                settings.embed_dim,
                k,
                settings.lr,
                rng,
            )
        })
        .collect();

    let pretrain_trace = pretrain(
        &mut models,
        ds,
        mask,
        settings.pretrain_epochs,
        settings.batch_size,
        rng,
    )?;
    init_centroids(&mut models, ds, mask, k, rng)?;

    let (tau, pset, sets) = decision_sets(mask, settings)?;
    let union = union_samples(&sets);
    if union.is_empty() {
        return Err(Error::Pipeline(
            "no sample satisfies any retained missing pattern".into(),
        ));
    }
    let mean_set_size =
        sets.iter().map(|s| s.sample_ids.len()).sum::<usize>() as f64 / sets.len() as f64;
    let pos_in_union: std::collections::HashMap<usize, usize> =
        union.iter().enumerate().map(|(p, &id)| (id, p)).collect();

    let spec = LossSpec {
        lambda1: if settings.no_cons { 0.0 } else { settings.lambda1 },
        lambda2: if settings.no_disc { 0.0 } else { settings.lambda2 },
        temperature: settings.temperature,
    };
    let interval = settings.interval.max(1);
    let n_rounds = settings.epochs.div_ceil(interval).max(1);

    let mut epoch_losses = Vec::with_capacity(settings.epochs);
    let mut rounds = Vec::with_capacity(n_rounds);
    let mut final_ensemble_acc = None;
    let mut skipped_last = 0usize;
    let mut epochs_done = 0usize;
    let mut prev_probs: Option<Matrix> = None;
    for round in 0..n_rounds {
        let round_out =
            ensemble_round(&models, ds, &sets, k, settings.no_mpt, settings.no_mde, rng)?;
        let (tensor, mut fused) = (round_out.tensor, round_out.fused);
        skipped_last = round_out.skipped;
        if let Some(prev) = &prev_probs {
            fused.probs = anchor_columns(prev, &fused.probs)?;
        }
        prev_probs = Some(fused.probs.clone());
        let ensemble_acc = ds.labels.as_ref().map(|truth| {
            let pred: Vec<usize> = (0..fused.probs.rows())
                .map(|i| {
                    let row = fused.probs.row(i);
                    let mut best = 0;
                    for kk in 1..row.len() {
                        if row[kk] > row[best] {
                            best = kk;
                        }
                    }
                    best
                })
                .collect();
            let truth_u: Vec<usize> = fused.sample_ids.iter().map(|&i| truth[i]).collect();
            accuracy(&pred, &truth_u).map(|(a, _)| a)
        });
        let ensemble_acc = match ensemble_acc {
            Some(Ok(a)) => Some(a),
            Some(Err(e)) => return Err(e),
            None => None,
        };
        final_ensemble_acc = ensemble_acc;
        rounds.push(RoundStats {
            round,
            ensemble_acc,
            no_overlap_warnings: tensor.no_overlap_warnings,
        });

        let epochs_this_round = interval.min(settings.epochs - epochs_done);
        for _ in 0..epochs_this_round {
            let mut order = union.clone();
            rng.shuffle(&mut order);
            let mut epoch = EpochLoss {
                total: 0.0,
                rec: 0.0,
                cons: 0.0,
                disc: 0.0,
            };
            for batch in order.chunks(settings.batch_size.max(1)) {
                for (vi, model) in models.iter_mut().enumerate() {
                    let ids: Vec<usize> = batch
                        .iter()
                        .copied()
                        .filter(|&i| mask.available(i, vi))
                        .collect();
                    if ids.is_empty() {
                        continue;
                    }
                    let x = ds.views[vi].select_rows(&ids);
                    let p_rows: Vec<usize> = ids.iter().map(|id| pos_in_union[id]).collect();
                    let p = fused.probs.select_rows(&p_rows);
                    let (losses, grads) = view_batch_backward(model, &x, &p, &spec)?;
                    epoch.rec += losses.rec;
                    epoch.cons += losses.cons;
                    epoch.disc += losses.disc;
                    epoch.total += losses.total(&spec);
                    adam_step(model, &grads);
                }
            }
            epoch_losses.push(epoch);
            epochs_done += 1;
        }
    }

    let predictions = predict_labels(&models, ds, mask)?;
    let report = TrainReport {
        tau,
        n_patterns: pset.patterns.len(),
        union_size: union.len(),
        mean_set_size,
        skipped_sets: skipped_last,
        pretrain_trace,
        epoch_losses,
        rounds,
        final_ensemble_acc,
        predictions,
    };
    for m in &models {
        if !m.all_finite() {
            return Err(Error::Pipeline("non-finite parameters after training".into()));
        }
    }
    Ok((models, report))
}
