//! Experiment orchestration: multi-seed runs, ablations, and tau sweeps, with
//! JSON reports and CSV prediction dumps.

use std::fs::{self, File};
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::config::RunConfig;
use crate::dataset::{
    load_views, normalize_features, simulate_missing, MaskMatrix, MultiViewDataset,
};
use crate::distill::{decision_sets, ensemble_round, train, TrainReport, TrainSettings};
use crate::metrics::{evaluate, EvalResult};
use crate::numkernel::RngStream;
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct MetricStats {
    pub mean: f64,
    pub std: f64,
}

pub fn mean_std(values: &[f64]) -> MetricStats {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    MetricStats {
        mean,
        std: var.sqrt(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub eval: Option<EvalResult>,
    pub train: TrainReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub per_seed: Vec<SeedOutcome>,
    pub acc: Option<MetricStats>,
    pub nmi: Option<MetricStats>,
    pub ari: Option<MetricStats>,
    pub wall_clock_secs: f64,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    f.write_all(text.as_bytes()).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn predictions_csv(predictions: &[usize]) -> String {
    let mut out = String::from("sample_id,label\n");
    for (i, p) in predictions.iter().enumerate() {
        out.push_str(&format!("{i},{p}\n"));
    }
    out
}

/// Load the configured views, apply preprocessing, attach labels.
pub fn load_dataset(cfg: &RunConfig) -> Result<MultiViewDataset> {
    if cfg.views.len() < 2 {
        return Err(Error::Contract(format!(
            "need at least 2 view files, got {}",
            cfg.views.len()
        )));
    }
    let ds = load_views(&cfg.views, cfg.labels.as_deref(), cfg.k, cfg.header)?;
    Ok(normalize_features(&ds, cfg.preprocess))
}

pub fn settings_from(cfg: &RunConfig, v: usize) -> TrainSettings {
    TrainSettings {
        k: cfg.k,
        hidden_dims: cfg.hidden_dims.clone(),
        embed_dim: cfg.embed_dim,
        lr: cfg.lr,
        pretrain_epochs: cfg.pretrain_epochs,
        epochs: cfg.epochs,
        interval: cfg.interval,
        batch_size: cfg.batch,
        lambda1: cfg.lambda1,
        lambda2: cfg.lambda2,
        temperature: cfg.temperature,
        tau_max: cfg.tau_max_for(v),
        tau_override: cfg.tau,
        allow_singleton_views: cfg.allow_singleton_views,
        no_mpt: cfg.no_mpt,
        no_mde: cfg.no_mde,
        no_cons: cfg.no_cons,
        no_disc: cfg.no_disc,
    }
}

/// The availability mask for one seed: loaded when a mask file is given,
/// otherwise simulated from the seed alone (so every variant sharing the
/// seed sees the identical mask).
pub fn mask_for_seed(cfg: &RunConfig, n: usize, v: usize, seed: u64) -> Result<MaskMatrix> {
    if let Some(path) = &cfg.mask_file {
        let mask = MaskMatrix::load_csv(path)?;
        if mask.n_samples() != n || mask.n_views() != v {
            return Err(Error::Contract(format!(
                "mask is {}x{}, dataset is {n}x{v}",
                mask.n_samples(),
                mask.n_views()
            )));
        }
        return Ok(mask);
    }
    if cfg.rho == 0.0 {
        return Ok(MaskMatrix::complete(n, v));
    }
    let mut rng = RngStream::new(seed);
    let mut mask_rng = rng.split();
    simulate_missing(n, v, cfg.rho, cfg.missing_scheme, &mut mask_rng)
}

fn train_rng_for_seed(seed: u64) -> RngStream {
    let mut rng = RngStream::new(seed);
    let _ = rng.split(); // mask stream
    rng.split()
}

fn dump_round(
    models: &[crate::nn::ViewModel],
    ds: &MultiViewDataset,
    mask: &MaskMatrix,
    cfg: &RunConfig,
    settings: &TrainSettings,
    seed: u64,
) -> Result<()> {
    if cfg.dump_groups.is_none() && cfg.dump_ensemble.is_none() {
        return Ok(());
    }
    let (_tau, _pset, sets) = decision_sets(mask, settings)?;
    let mut rng = train_rng_for_seed(seed).split();
    let round = ensemble_round(models, ds, &sets, cfg.k, cfg.no_mpt, cfg.no_mde, &mut rng)?;
    if let Some(dir) = &cfg.dump_groups {
        ensure_dir(dir)?;
        for g in &round.groups {
            let mut text = String::from("sample_id,kind");
            for k in 0..cfg.k {
                text.push_str(&format!(",c{k}"));
            }
            text.push('\n');
            for (r, &id) in g.sample_ids.iter().enumerate() {
                for (kind, m) in [("soft", &g.soft), ("sharpened", &g.sharpened)] {
                    text.push_str(&format!("{id},{kind}"));
                    for val in m.row(r) {
                        text.push_str(&format!(",{val}"));
                    }
                    text.push('\n');
                }
            }
            write_text(
                &dir.join(format!("seed{seed}_group{}.csv", g.set_index)),
                &text,
            )?;
        }
    }
    if let Some(file) = &cfg.dump_ensemble {
        let mut text = String::from("sample_id");
        for k in 0..cfg.k {
            text.push_str(&format!(",p{k}"));
        }
        text.push('\n');
        for (r, &id) in round.fused.sample_ids.iter().enumerate() {
            text.push_str(&id.to_string());
            for val in round.fused.probs.row(r) {
                text.push_str(&format!(",{val}"));
            }
            text.push('\n');
        }
        write_text(file, &text)?;
    }
    Ok(())
}

/// Multi-seed run on an in-memory dataset; writes outputs when `out` is set.
pub fn run_on_dataset(ds: &MultiViewDataset, cfg: &RunConfig) -> Result<RunReport> {
    if cfg.seeds.is_empty() {
        return Err(Error::Contract("seeds list must be non-empty".into()));
    }
    if !(0.0..=1.0).contains(&cfg.rho) {
        return Err(Error::Contract(format!("rho must be in [0,1], got {}", cfg.rho)));
    }
    let started = Instant::now();
    let (n, v) = (ds.n_samples(), ds.n_views());
    let settings = settings_from(cfg, v);
    let mut per_seed = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let mask = mask_for_seed(cfg, n, v, seed)?;
        let mut rng = train_rng_for_seed(seed);
        let (models, report) = train(ds, &mask, &settings, &mut rng)?;
        dump_round(&models, ds, &mask, cfg, &settings, seed)?;
        let eval = match &ds.labels {
            Some(truth) => Some(evaluate(&report.predictions, truth)?),
            None => None,
        };
        per_seed.push(SeedOutcome {
            seed,
            eval,
            train: report,
        });
    }
    let collect = |f: fn(&EvalResult) -> f64| -> Option<MetricStats> {
        let vals: Vec<f64> = per_seed
            .iter()
            .filter_map(|s| s.eval.as_ref().map(f))
            .collect();
        if vals.len() == per_seed.len() {
            Some(mean_std(&vals))
        } else {
            None
        }
    };
    let report = RunReport {
        config: cfg.clone(),
        acc: collect(|e| e.acc),
        nmi: collect(|e| e.nmi),
        ari: collect(|e| e.ari),
        per_seed,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    if let Some(dir) = &cfg.out {
        ensure_dir(dir)?;
        let json = serde_json::to_string_pretty(&report)
            .map_err(|e| Error::Pipeline(format!("report serialization: {e}")))?;
        write_text(&dir.join("report.json"), &json)?;
        for (idx, s) in report.per_seed.iter().enumerate() {
            let csv = predictions_csv(&s.train.predictions);
            if idx == 0 {
                write_text(&dir.join("predictions.csv"), &csv)?;
            }
            write_text(&dir.join(format!("predictions_seed{}.csv", s.seed)), &csv)?;
        }
    }
    Ok(report)
}

pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    let ds = load_dataset(cfg)?;
    run_on_dataset(&ds, cfg)
}

#[derive(Debug, Clone, Serialize)]
pub struct VariantResult {
    pub name: String,
    pub acc: Option<MetricStats>,
    pub nmi: Option<MetricStats>,
    pub ari: Option<MetricStats>,
    pub per_seed_acc: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblateReport {
    pub config: RunConfig,
    /// {rec-only, rec+cons, rec+disc, full} with shared masks.
    pub loss_table: Vec<VariantResult>,
    /// {without-mpt, without-mde, full} with shared masks.
    pub model_table: Vec<VariantResult>,
    pub wall_clock_secs: f64,
}

fn variant_result(name: &str, report: &RunReport) -> VariantResult {
    VariantResult {
        name: name.to_string(),
        acc: report.acc.clone(),
        nmi: report.nmi.clone(),
        ari: report.ari.clone(),
        per_seed_acc: report
            .per_seed
            .iter()
            .filter_map(|s| s.eval.as_ref().map(|e| e.acc))
            .collect(),
    }
}

/// Run the four loss variants and three model variants on identical masks
/// (the mask depends only on the seed, never on the variant flags).
pub fn ablate_on_dataset(ds: &MultiViewDataset, cfg: &RunConfig) -> Result<AblateReport> {
    let started = Instant::now();
    let mut base = cfg.clone();
    base.out = None;
    base.dump_groups = None;
    base.dump_ensemble = None;

    let loss_variants: [(&str, bool, bool); 4] = [
        ("rec-only", true, true),
        ("rec+cons", false, true),
        ("rec+disc", true, false),
        ("full", false, false),
    ];
    let mut loss_table = Vec::new();
    for (name, no_cons, no_disc) in loss_variants {
        let mut c = base.clone();
        c.no_cons = no_cons;
        c.no_disc = no_disc;
        c.no_mpt = false;
        c.no_mde = false;
        loss_table.push(variant_result(name, &run_on_dataset(ds, &c)?));
    }

    let model_variants: [(&str, bool, bool); 3] = [
        ("without-mpt", true, false),
        ("without-mde", false, true),
        ("full", false, false),
    ];
    let mut model_table = Vec::new();
    for (name, no_mpt, no_mde) in model_variants {
        let mut c = base.clone();
        c.no_mpt = no_mpt;
        c.no_mde = no_mde;
        c.no_cons = false;
        c.no_disc = false;
        model_table.push(variant_result(name, &run_on_dataset(ds, &c)?));
    }

    let report = AblateReport {
        config: cfg.clone(),
        loss_table,
        model_table,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    if let Some(dir) = &cfg.out {
        ensure_dir(dir)?;
        let json = serde_json::to_string_pretty(&report)
            .map_err(|e| Error::Pipeline(format!("report serialization: {e}")))?;
        write_text(&dir.join("report.json"), &json)?;
    }
    Ok(report)
}

pub fn ablate(cfg: &RunConfig) -> Result<AblateReport> {
    let ds = load_dataset(cfg)?;
    ablate_on_dataset(&ds, cfg)
}

#[derive(Debug, Clone, Serialize)]
pub struct TauRow {
    pub tau: usize,
    pub n_patterns: usize,
    pub mean_set_size: f64,
    pub union_size: usize,
    /// Final-round ensemble accuracy on the union samples.
    pub acc_union: Option<f64>,
    /// Mean prediction accuracy over all N samples.
    pub acc_all: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TauSweepReport {
    pub config: RunConfig,
    pub rows: Vec<TauRow>,
    pub wall_clock_secs: f64,
}

/// One full run per tau value, with shared masks across taus.
pub fn tau_sweep_on_dataset(
    ds: &MultiViewDataset,
    cfg: &RunConfig,
    taus: &[usize],
) -> Result<TauSweepReport> {
    if taus.is_empty() {
        return Err(Error::Contract("tau sweep needs at least one tau".into()));
    }
    let started = Instant::now();
    let mut rows = Vec::with_capacity(taus.len());
    for &tau in taus {
        let mut c = cfg.clone();
        c.tau = Some(tau);
        c.out = None;
        c.dump_groups = None;
        c.dump_ensemble = None;
        let report = run_on_dataset(ds, &c)?;
        let accs_u: Vec<f64> = report
            .per_seed
            .iter()
            .filter_map(|s| s.train.final_ensemble_acc)
            .collect();
        let first = &report.per_seed[0].train;
        rows.push(TauRow {
            tau,
            n_patterns: first.n_patterns,
            mean_set_size: first.mean_set_size,
            union_size: first.union_size,
            acc_union: if accs_u.len() == report.per_seed.len() {
                Some(mean_std(&accs_u).mean)
            } else {
                None
            },
            acc_all: report.acc.as_ref().map(|s| s.mean),
        });
    }
    let report = TauSweepReport {
        config: cfg.clone(),
        rows,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    if let Some(dir) = &cfg.out {
        ensure_dir(dir)?;
        let json = serde_json::to_string_pretty(&report)
            .map_err(|e| Error::Pipeline(format!("report serialization: {e}")))?;
        write_text(&dir.join("report.json"), &json)?;
    }
    Ok(report)
}

pub fn tau_sweep(cfg: &RunConfig, taus: &[usize]) -> Result<TauSweepReport> {
    let ds = load_dataset(cfg)?;
    tau_sweep_on_dataset(&ds, cfg, taus)
}
