//! View-specific autoencoders and clustering heads: forward passes, Student-t
//! soft assignment, analytic gradients, and Adam updates.
//!
//! Gradients are derived by hand and pinned against central finite differences
//! in the test suite; keep the two in sync when touching either.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{MaskMatrix, MultiViewDataset};
use crate::numkernel::{pairwise_sqdist, Matrix, RngStream};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Layer {
    /// in_dim x out_dim weight matrix.
    pub w: Matrix,
    pub b: Vec<f64>,
    pub act: Activation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

impl MlpParams {
    /// Fan-in/fan-out scaled uniform init; hidden layers ReLU, last layer linear.
    pub fn glorot(dims: &[usize], rng: &mut RngStream) -> Self {
        let mut layers = Vec::new();
        for i in 0..dims.len() - 1 {
            let (fan_in, fan_out) = (dims[i], dims[i + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| (rng.uniform() * 2.0 - 1.0) * limit)
                .collect();
            layers.push(Layer {
                w: Matrix::from_vec(fan_in, fan_out, data),
                b: vec![0.0; fan_out],
                act: if i + 1 == dims.len() - 1 {
                    Activation::Linear
                } else {
                    Activation::Relu
                },
            });
        }
        MlpParams { layers }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].w.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().w.cols()
    }
}

/// Per-layer outputs kept for the backward pass.
pub struct ForwardCache {
    /// activations[0] is the input; activations[l+1] the output of layer l.
    pub activations: Vec<Matrix>,
}

pub fn mlp_forward(params: &MlpParams, x: &Matrix) -> (Matrix, ForwardCache) {
    let mut activations = vec![x.clone()];
    let mut cur = x.clone();
    for layer in &params.layers {
        let mut out = cur.matmul(&layer.w);
        for i in 0..out.rows() {
            let row = out.row_mut(i);
            for (v, b) in row.iter_mut().zip(&layer.b) {
                *v += b;
            }
        }
        if layer.act == Activation::Relu {
            for v in out.data_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        activations.push(out.clone());
        cur = out;
    }
    (cur, ForwardCache { activations })
}

/// Gradients mirroring `MlpParams` shapes.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub layers: Vec<(Matrix, Vec<f64>)>,
}

impl MlpGrads {
    pub fn zeros_like(params: &MlpParams) -> Self {
        MlpGrads {
            layers: params
                .layers
                .iter()
                .map(|l| (Matrix::zeros(l.w.rows(), l.w.cols()), vec![0.0; l.b.len()]))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &MlpGrads) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            w.add_assign(ow);
            for (x, y) in b.iter_mut().zip(ob) {
                *x += y;
            }
        }
    }
}

/// Backpropagate `d_out` through the MLP, accumulating into `grads` and
/// returning the gradient w.r.t. the input.
pub fn mlp_backward(
    params: &MlpParams,
    cache: &ForwardCache,
    d_out: &Matrix,
    grads: &mut MlpGrads,
) -> Matrix {
    let mut delta = d_out.clone();
    for (l, layer) in params.layers.iter().enumerate().rev() {
        let out = &cache.activations[l + 1];
        if layer.act == Activation::Relu {
            // out is already post-ReLU; zero where the unit was clipped
            for (d, &o) in delta.data_mut().iter_mut().zip(out.data()) {
                if o <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        let input = &cache.activations[l];
        let (gw, gb) = &mut grads.layers[l];
        gw.add_assign(&input.t_matmul(&delta));
        for i in 0..delta.rows() {
            for (g, &d) in gb.iter_mut().zip(delta.row(i)) {
                *g += d;
            }
        }
        delta = delta.matmul_t(&layer.w);
    }
    delta
}

/// Adam moment buffers over one view's flattened parameter list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

/// One view's encoder/decoder parameters and learnable centroids.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViewModel {
    pub encoder: MlpParams,
    pub decoder: MlpParams,
    /// K x d_v learnable cluster centers.
    pub centroids: Matrix,
    pub adam: AdamState,
}

impl ViewModel {
    pub fn new(
        input_dim: usize,
        hidden_dims: &[usize],
        embed_dim: usize,
        k: usize,
        lr: f64,
        rng: &mut RngStream,
    ) -> Self {
        let mut enc_dims = vec![input_dim];
        enc_dims.extend_from_slice(hidden_dims);
        enc_dims.push(embed_dim);
        let mut dec_dims = vec![embed_dim];
        dec_dims.extend(hidden_dims.iter().rev());
        dec_dims.push(input_dim);
        let encoder = MlpParams::glorot(&enc_dims, rng);
        let decoder = MlpParams::glorot(&dec_dims, rng);
        let centroids_data = (0..k * embed_dim).map(|_| rng.gaussian() * 0.1).collect();
        let centroids = Matrix::from_vec(k, embed_dim, centroids_data);
        let mut model = ViewModel {
            encoder,
            decoder,
            centroids,
            adam: AdamState {
                step: 0,
                lr,
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
                m: Vec::new(),
                v: Vec::new(),
            },
        };
        let sizes: Vec<usize> = model.param_slices().iter().map(|s| s.len()).collect();
        model.adam.m = sizes.iter().map(|&s| vec![0.0; s]).collect();
        model.adam.v = sizes.iter().map(|&s| vec![0.0; s]).collect();
        model
    }

    pub fn embed_dim(&self) -> usize {
        self.encoder.out_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.in_dim()
    }

    fn param_slices(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in self.encoder.layers.iter_mut() {
            out.push(l.w.data_mut());
            out.push(&mut l.b);
        }
        for l in self.decoder.layers.iter_mut() {
            out.push(l.w.data_mut());
            out.push(&mut l.b);
        }
        out.push(self.centroids.data_mut());
        out
    }

    pub fn all_finite(&self) -> bool {
        self.encoder
            .layers
            .iter()
            .chain(self.decoder.layers.iter())
            .all(|l| l.w.all_finite() && l.b.iter().all(|v| v.is_finite()))
            && self.centroids.all_finite()
    }
}

/// Gradients for one view, mirroring `ViewModel` shapes.
#[derive(Debug, Clone)]
pub struct ViewGrads {
    pub encoder: MlpGrads,
    pub decoder: MlpGrads,
    pub centroids: Matrix,
}

impl ViewGrads {
    pub fn zeros_like(model: &ViewModel) -> Self {
        ViewGrads {
            encoder: MlpGrads::zeros_like(&model.encoder),
            decoder: MlpGrads::zeros_like(&model.decoder),
            centroids: Matrix::zeros(model.centroids.rows(), model.centroids.cols()),
        }
    }

    pub fn add_assign(&mut self, other: &ViewGrads) {
        self.encoder.add_assign(&other.encoder);
        self.decoder.add_assign(&other.decoder);
        self.centroids.add_assign(&other.centroids);
    }

    pub fn scale(&mut self, c: f64) {
        for (w, b) in self
            .encoder
            .layers
            .iter_mut()
            .chain(self.decoder.layers.iter_mut())
        {
            w.scale(c);
            for x in b.iter_mut() {
                *x *= c;
            }
        }
        self.centroids.scale(c);
    }

    fn grad_slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for (w, b) in &self.encoder.layers {
            out.push(w.data());
            out.push(b);
        }
        for (w, b) in &self.decoder.layers {
            out.push(w.data());
            out.push(b);
        }
        out.push(self.centroids.data());
        out
    }
}

pub fn encode(model: &ViewModel, x: &Matrix) -> Result<Matrix> {
    if x.cols() != model.input_dim() {
        return Err(Error::ShapeMismatch {
            op: "encode",
            detail: format!("input has {} cols, expected {}", x.cols(), model.input_dim()),
        });
    }
    Ok(mlp_forward(&model.encoder, x).0)
}

pub fn decode(model: &ViewModel, z: &Matrix) -> Result<Matrix> {
    if z.cols() != model.embed_dim() {
        return Err(Error::ShapeMismatch {
            op: "decode",
            detail: format!("embedding has {} cols, expected {}", z.cols(), model.embed_dim()),
        });
    }
    Ok(mlp_forward(&model.decoder, z).0)
}

/// Student-t (degree 1) soft assignment:
/// q[i][k] = (1 + ||z_i - u_k||^2)^-1 / sum_k' (1 + ||z_i - u_k'||^2)^-1.
pub fn soft_assign(z: &Matrix, centroids: &Matrix) -> Result<Matrix> {
    let sq = pairwise_sqdist(z, centroids)?;
    let mut q = Matrix::zeros(z.rows(), centroids.rows());
    for i in 0..z.rows() {
        let mut total = 0.0;
        for k in 0..centroids.rows() {
            let s = 1.0 / (1.0 + sq.get(i, k));
            q.set(i, k, s);
            total += s;
        }
        for k in 0..centroids.rows() {
            q.set(i, k, q.get(i, k) / total);
        }
    }
    Ok(q)
}

/// Chain `d_q` (dL/dQ) through the Student-t kernel. Returns (dL/dz, dL/dU).
pub fn soft_assign_backward(
    z: &Matrix,
    centroids: &Matrix,
    d_q: &Matrix,
) -> Result<(Matrix, Matrix)> {
    let n = z.rows();
    let k = centroids.rows();
    let d = z.cols();
    let sq = pairwise_sqdist(z, centroids)?;
    let mut dz = Matrix::zeros(n, d);
    let mut du = Matrix::zeros(k, d);
    for i in 0..n {
        let mut s = vec![0.0; k];
        let mut total = 0.0;
        for kk in 0..k {
            s[kk] = 1.0 / (1.0 + sq.get(i, kk));
            total += s[kk];
        }
        // dL/dq -> dL/ds through the normalization, then ds/dr = -s^2
        let dot: f64 = (0..k).map(|kk| d_q.get(i, kk) * s[kk] / total).sum();
        for kk in 0..k {
            let ds = (d_q.get(i, kk) - dot) / total;
            let dr = ds * (-s[kk] * s[kk]);
            for j in 0..d {
                let diff = z.get(i, j) - centroids.get(kk, j);
                dz.set(i, j, dz.get(i, j) + dr * 2.0 * diff);
                du.set(kk, j, du.get(kk, j) - dr * 2.0 * diff);
            }
        }
    }
    Ok((dz, du))
}

/// Sum of squared reconstruction errors over available samples of all views.
pub fn reconstruction_loss(
    models: &[ViewModel],
    ds: &MultiViewDataset,
    mask: &MaskMatrix,
) -> Result<f64> {
    let mut total = 0.0;
    for (v, model) in models.iter().enumerate() {
        let ids = mask.available_in_view(v);
        if ids.is_empty() {
            continue;
        }
        let x = ds.views[v].select_rows(&ids);
        let xhat = decode(model, &encode(model, &x)?)?;
        for (a, b) in x.data().iter().zip(xhat.data()) {
            total += (a - b) * (a - b);
        }
    }
    Ok(total)
}

/// Reconstruction loss and gradients for one view on a row batch.
/// Returns the loss contribution; accumulates into `grads`.
pub fn reconstruction_backward(
    model: &ViewModel,
    x: &Matrix,
    grads: &mut ViewGrads,
) -> Result<f64> {
    let (z, enc_cache) = mlp_forward(&model.encoder, x);
    let (xhat, dec_cache) = mlp_forward(&model.decoder, &z);
    let mut loss = 0.0;
    let mut d_xhat = Matrix::zeros(xhat.rows(), xhat.cols());
    for idx in 0..xhat.data().len() {
        let diff = xhat.data()[idx] - x.data()[idx];
        loss += diff * diff;
        d_xhat.data_mut()[idx] = 2.0 * diff;
    }
    let d_z = mlp_backward(&model.decoder, &dec_cache, &d_xhat, &mut grads.decoder);
    mlp_backward(&model.encoder, &enc_cache, &d_z, &mut grads.encoder);
    Ok(loss)
}

/// Standard Adam update with bias correction, applied in a fixed slice order.
pub fn adam_step(model: &mut ViewModel, grads: &ViewGrads) {
    model.adam.step += 1;
    let t = model.adam.step as f64;
    let (lr, b1, b2, eps) = (
        model.adam.lr,
        model.adam.beta1,
        model.adam.beta2,
        model.adam.eps,
    );
    let bc1 = 1.0 - b1.powf(t);
    let bc2 = 1.0 - b2.powf(t);
    let gslices: Vec<Vec<f64>> = grads.grad_slices().iter().map(|s| s.to_vec()).collect();
    let mut adam = std::mem::replace(
        &mut model.adam,
        AdamState {
            step: 0,
            lr,
            beta1: b1,
            beta2: b2,
            eps,
            m: Vec::new(),
            v: Vec::new(),
        },
    );
    for (slot, params) in model.param_slices().into_iter().enumerate() {
        let g = &gslices[slot];
        let m = &mut adam.m[slot];
        let v = &mut adam.v[slot];
        for i in 0..params.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            params[i] -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    adam.step = model.adam.step.max(adam.step);
    model.adam = adam;
}

/// Pretrain all view models on reconstruction only; returns the per-epoch
/// loss trace (sum over views of per-batch sums).
pub fn pretrain(
    models: &mut [ViewModel],
    ds: &MultiViewDataset,
    mask: &MaskMatrix,
    epochs: usize,
    batch_size: usize,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    if epochs == 0 {
        return Err(Error::Contract("pretrain needs epochs >= 1".into()));
    }
    let per_view_ids: Vec<Vec<usize>> = (0..ds.n_views())
        .map(|v| mask.available_in_view(v))
        .collect();
    let mut trace = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let mut epoch_loss = 0.0;
        for (v, model) in models.iter_mut().enumerate() {
            let mut ids = per_view_ids[v].clone();
            rng.shuffle(&mut ids);
            for chunk in ids.chunks(batch_size.max(1)) {
                let x = ds.views[v].select_rows(chunk);
                let mut grads = ViewGrads::zeros_like(model);
                epoch_loss += reconstruction_backward(model, &x, &mut grads)?;
                adam_step(model, &grads);
            }
        }
        trace.push(epoch_loss);
    }
    Ok(trace)
}

/// Set each view's centroids to K-means centers of its available embeddings.
pub fn init_centroids(
    models: &mut [ViewModel],
    ds: &MultiViewDataset,
    mask: &MaskMatrix,
    k: usize,
    rng: &mut RngStream,
) -> Result<()> {
    for (v, model) in models.iter_mut().enumerate() {
        let ids = mask.available_in_view(v);
        if ids.len() < k {
            return Err(Error::Contract(format!(
                "view {v} has {} available samples but K={k}",
                ids.len()
            )));
        }
        let x = ds.views[v].select_rows(&ids);
        let z = mlp_forward(&model.encoder, &x).0;
        let mut child = rng.split();
        model.centroids = crate::groupwise::kmeans_restarts(&z, k, &mut child, 4, 100, 1e-6)?;
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    models: Vec<ViewModel>,
}

const CHECKPOINT_FORMAT: &str = "treeic-checkpoint-v1";

pub fn save_checkpoint(models: &[ViewModel], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let ckpt = Checkpoint {
        format: CHECKPOINT_FORMAT.to_string(),
        models: models.to_vec(),
    };
    serde_json::to_writer(BufWriter::new(file), &ckpt)
        .map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn load_checkpoint(path: &Path) -> Result<Vec<ViewModel>> {
    let file = File::open(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let ckpt: Checkpoint = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    if ckpt.format != CHECKPOINT_FORMAT {
        return Err(Error::Checkpoint(format!(
            "unknown checkpoint format '{}'",
            ckpt.format
        )));
    }
    Ok(ckpt.models)
}
