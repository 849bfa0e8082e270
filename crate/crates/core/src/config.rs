//! Run configuration: one struct shared by the CLI, the runner, and the
//! report echo, with the published defaults baked in via serde.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::dataset::{MissingScheme, Preprocess};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub views: Vec<PathBuf>,
    pub labels: Option<PathBuf>,
    pub k: usize,
    pub rho: f64,
    pub seeds: Vec<u64>,
    /// None means min(V, 6) at run time.
    pub tau_max: Option<usize>,
    /// Fixed tau, bypassing the adaptive rule.
    pub tau: Option<usize>,
    /// Epochs between ensemble refreshes (T).
    pub interval: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub temperature: f64,
    pub pretrain_epochs: usize,
    pub epochs: usize,
    pub batch: usize,
    pub embed_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub lr: f64,
    pub preprocess: Preprocess,
    pub missing_scheme: MissingScheme,
    pub header: bool,
    pub allow_singleton_views: bool,
    pub no_mpt: bool,
    pub no_mde: bool,
    pub no_cons: bool,
    pub no_disc: bool,
    /// Reuse an existing availability mask instead of simulating one.
    pub mask_file: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub dump_groups: Option<PathBuf>,
    pub dump_ensemble: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            views: Vec::new(),
            labels: None,
            k: 2,
            rho: 0.5,
            seeds: vec![0],
            tau_max: None,
            tau: None,
            interval: 100,
            lambda1: 0.01,
            lambda2: 0.2,
            temperature: 1.0,
            pretrain_epochs: 200,
            epochs: 700,
            batch: 256,
            embed_dim: 128,
            hidden_dims: vec![500, 500, 2000],
            lr: 1e-4,
            preprocess: Preprocess::MinMax,
            missing_scheme: MissingScheme::CountUniform,
            header: false,
            allow_singleton_views: false,
            no_mpt: false,
            no_mde: false,
            no_cons: false,
            no_disc: false,
            mask_file: None,
            out: None,
            dump_groups: None,
            dump_ensemble: None,
        }
    }
}

impl RunConfig {
    pub fn tau_max_for(&self, v: usize) -> usize {
        self.tau_max.unwrap_or_else(|| v.min(6))
    }
}
