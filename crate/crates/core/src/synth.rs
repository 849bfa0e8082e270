//! Synthetic multi-view benchmark data: well-separated latent Gaussian blobs
//! observed through per-view random linear maps.

use serde::{Deserialize, Serialize};

use crate::dataset::MultiViewDataset;
use crate::numkernel::{Matrix, RngStream};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub k: usize,
    pub views: usize,
    /// Feature dimension of every view.
    pub view_dim: usize,
    pub latent_dim: usize,
    /// Minimum pairwise center distance in units of the latent blob sigma (1).
    pub separation: f64,
    /// Observation noise sigma of view 0, added after the linear map.
    pub noise: f64,
    /// Geometric growth of the noise across views: view v gets
    /// noise * noise_spread^v. 1.0 = homogeneous views; larger values give a
    /// quality gradient from clean to near-uninformative views.
    pub noise_spread: f64,
    /// Latent dimensions visible to each view (a cyclic window starting at
    /// v * latent_dim / views). None = every view sees the full latent space.
    /// Smaller windows make views complementary: no single view separates all
    /// clusters, but view combinations do.
    pub view_span: Option<usize>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n: 1000,
            k: 5,
            views: 4,
            view_dim: 20,
            latent_dim: 8,
            separation: 4.0,
            noise: 0.3,
            noise_spread: 1.0,
            view_span: None,
        }
    }
}

/// Generate a labeled multi-view dataset of `k` Gaussian blobs. Labels cycle
/// i mod k, so every cluster is within one sample of the same size.
pub fn generate(cfg: &SynthConfig, rng: &mut RngStream) -> MultiViewDataset {
    let d = cfg.latent_dim;
    // draw centers, then rescale so the closest pair sits `separation` apart
    let mut centers = Matrix::zeros(cfg.k, d);
    for v in centers.data_mut() {
        *v = rng.gaussian();
    }
    let mut min_dist = f64::INFINITY;
    for a in 0..cfg.k {
        for b in a + 1..cfg.k {
            let d2: f64 = (0..d)
                .map(|j| (centers.get(a, j) - centers.get(b, j)).powi(2))
                .sum();
            min_dist = min_dist.min(d2.sqrt());
        }
    }
    if cfg.k > 1 && min_dist > 0.0 {
        centers.scale(cfg.separation / min_dist);
    }

    let labels: Vec<usize> = (0..cfg.n).map(|i| i % cfg.k).collect();
    let mut latent = Matrix::zeros(cfg.n, d);
    for i in 0..cfg.n {
        for j in 0..d {
            latent.set(i, j, centers.get(labels[i], j) + rng.gaussian());
        }
    }

    let span = cfg.view_span.unwrap_or(d).clamp(1, d);
    let views = (0..cfg.views)
        .map(|v| {
            // column-normalized random map keeps feature scales comparable
            let scale = 1.0 / (span as f64).sqrt();
            let start = v * d / cfg.views.max(1);
            let visible: Vec<usize> = (0..span).map(|j| (start + j) % d).collect();
            let mut map = Matrix::zeros(d, cfg.view_dim);
            for &j in &visible {
                for c in 0..cfg.view_dim {
                    map.set(j, c, rng.gaussian() * scale);
                }
            }
            let mut x = latent.matmul(&map);
            let sigma = cfg.noise * cfg.noise_spread.powi(v as i32);
            for val in x.data_mut() {
                *val += rng.gaussian() * sigma;
            }
            x
        })
        .collect();
    MultiViewDataset::new(views, Some(labels), cfg.k).expect("consistent by construction")
}
