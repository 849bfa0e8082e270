//! Multi-view dataset loading, preprocessing, and missingness simulation.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::numkernel::{Matrix, RngStream};
use crate::{Error, Result};

/// Per-view feature matrices plus optional ground truth.
#[derive(Debug, Clone)]
pub struct MultiViewDataset {
    pub views: Vec<Matrix>,
    pub labels: Option<Vec<usize>>,
    pub n_clusters: usize,
}

impl MultiViewDataset {
    pub fn new(views: Vec<Matrix>, labels: Option<Vec<usize>>, n_clusters: usize) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::Contract("dataset needs at least one view".into()));
        }
        let n = views[0].rows();
        for (v, m) in views.iter().enumerate() {
            if m.rows() != n {
                return Err(Error::Contract(format!(
                    "view {v} has {} rows, expected {n}",
                    m.rows()
                )));
            }
        }
        if let Some(ref ls) = labels {
            if ls.len() != n {
                return Err(Error::Contract(format!(
                    "{} labels for {n} samples",
                    ls.len()
                )));
            }
        }
        Ok(MultiViewDataset {
            views,
            labels,
            n_clusters,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.views[0].rows()
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    pub fn view_dims(&self) -> Vec<usize> {
        self.views.iter().map(|m| m.cols()).collect()
    }
}

/// Column preprocessing applied after loading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Preprocess {
    None,
    #[default]
    MinMax,
    ZScore,
}

/// N x V binary availability matrix. Row i is the missing pattern of sample i.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskMatrix {
    n: usize,
    v: usize,
    entries: Vec<u8>,
}

impl MaskMatrix {
    pub fn complete(n: usize, v: usize) -> Self {
        MaskMatrix {
            n,
            v,
            entries: vec![1; n * v],
        }
    }

    pub fn from_entries(n: usize, v: usize, entries: Vec<u8>) -> Result<Self> {
        if entries.len() != n * v {
            return Err(Error::Contract("mask entries length mismatch".into()));
        }
        for (idx, &e) in entries.iter().enumerate() {
            if e > 1 {
                return Err(Error::Contract(format!("mask entry {idx} not 0/1")));
            }
        }
        let m = MaskMatrix { n, v, entries };
        for i in 0..n {
            if m.row(i).iter().all(|&a| a == 0) {
                return Err(Error::Contract(format!("mask row {i} is all-zero")));
            }
        }
        Ok(m)
    }

    pub fn n_samples(&self) -> usize {
        self.n
    }

    pub fn n_views(&self) -> usize {
        self.v
    }

    #[inline]
    pub fn available(&self, i: usize, v: usize) -> bool {
        self.entries[i * self.v + v] == 1
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[u8] {
        &self.entries[i * self.v..(i + 1) * self.v]
    }

    /// Sample ids available in view `v`.
    pub fn available_in_view(&self, v: usize) -> Vec<usize> {
        (0..self.n).filter(|&i| self.available(i, v)).collect()
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut f = File::create(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        for i in 0..self.n {
            let line: Vec<String> = self.row(i).iter().map(|a| a.to_string()).collect();
            writeln!(f, "{}", line.join(",")).map_err(|e| Error::Io {
                path: path.display().to_string(),
                source: e,
            })?;
        }
        Ok(())
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let rows = read_numeric_csv(path, false)?;
        let n = rows.len();
        let v = if n == 0 { 0 } else { rows[0].len() };
        let mut entries = Vec::with_capacity(n * v);
        for (i, row) in rows.iter().enumerate() {
            for &x in row {
                if x != 0.0 && x != 1.0 {
                    return Err(Error::Load {
                        file: path.display().to_string(),
                        line: i + 1,
                        msg: format!("mask entry {x} is not 0/1"),
                    });
                }
                entries.push(x as u8);
            }
        }
        MaskMatrix::from_entries(n, v, entries)
    }
}

/// How the number of masked views per incomplete sample is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MissingScheme {
    /// Masked-view count uniform on {1..V-1}, then a uniform subset of that size.
    #[default]
    CountUniform,
    /// Uniform over all 2^V - 2 incomplete patterns.
    PatternUniform,
}

fn read_numeric_csv(path: &Path, skip_header: bool) -> Result<Vec<Vec<f64>>> {
    let file = File::open(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let reader = BufReader::new(file);
    let mut rows = Vec::new();
    let mut width = None;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        if lineno == 0 && skip_header {
            continue;
        }
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for cell in trimmed.split(',') {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Load {
                file: path.display().to_string(),
                line: lineno + 1,
                msg: format!("non-numeric cell '{}'", cell.trim()),
            })?;
            row.push(v);
        }
        if let Some(w) = width {
            if row.len() != w {
                return Err(Error::Load {
                    file: path.display().to_string(),
                    line: lineno + 1,
                    msg: format!("row has {} columns, expected {w}", row.len()),
                });
            }
        } else {
            width = Some(row.len());
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Load per-view feature CSVs plus an optional labels CSV.
///
/// Labels are remapped to 0..K-1 by sorted distinct value; their cardinality
/// must equal `k`.
pub fn load_views(
    paths: &[impl AsRef<Path>],
    labels_path: Option<&Path>,
    k: usize,
    skip_header: bool,
) -> Result<MultiViewDataset> {
    if k < 2 {
        return Err(Error::Contract(format!("K must be >= 2, got {k}")));
    }
    let mut views = Vec::new();
    let mut n = None;
    for p in paths {
        let p = p.as_ref();
        let rows = read_numeric_csv(p, skip_header)?;
        if let Some(expected) = n {
            if rows.len() != expected {
                return Err(Error::Load {
                    file: p.display().to_string(),
                    line: rows.len(),
                    msg: format!("view has {} rows, expected {expected}", rows.len()),
                });
            }
        } else {
            n = Some(rows.len());
        }
        views.push(Matrix::from_rows(&rows));
    }
    let labels = match labels_path {
        Some(lp) => {
            let raw = read_numeric_csv(lp, false)?;
            let mut ids = Vec::with_capacity(raw.len());
            for (i, row) in raw.iter().enumerate() {
                if row.len() != 1 {
                    return Err(Error::Load {
                        file: lp.display().to_string(),
                        line: i + 1,
                        msg: "labels file must have one value per line".into(),
                    });
                }
                ids.push(row[0] as i64);
            }
            let mut distinct: Vec<i64> = ids.clone();
            distinct.sort_unstable();
            distinct.dedup();
            if distinct.len() != k {
                return Err(Error::Load {
                    file: lp.display().to_string(),
                    line: 0,
                    msg: format!("{} distinct labels but K={k}", distinct.len()),
                });
            }
            Some(
                ids.iter()
                    .map(|v| distinct.binary_search(v).unwrap())
                    .collect(),
            )
        }
        None => None,
    };
    MultiViewDataset::new(views, labels, k)
}

/// Apply per-feature scaling to each view.
pub fn normalize_features(ds: &MultiViewDataset, scheme: Preprocess) -> MultiViewDataset {
    let views = ds
        .views
        .iter()
        .map(|m| match scheme {
            Preprocess::None => m.clone(),
            Preprocess::MinMax => minmax_columns(m),
            Preprocess::ZScore => zscore_columns(m),
        })
        .collect();
    MultiViewDataset {
        views,
        labels: ds.labels.clone(),
        n_clusters: ds.n_clusters,
    }
}

fn minmax_columns(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for j in 0..m.cols() {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..m.rows() {
            lo = lo.min(m.get(i, j));
            hi = hi.max(m.get(i, j));
        }
        let span = hi - lo;
        for i in 0..m.rows() {
            let v = if span > 0.0 {
                (m.get(i, j) - lo) / span
            } else {
                0.0 // constant column
            };
            out.set(i, j, v);
        }
    }
    out
}

fn zscore_columns(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    let n = m.rows() as f64;
    for j in 0..m.cols() {
        let mean: f64 = (0..m.rows()).map(|i| m.get(i, j)).sum::<f64>() / n;
        let var: f64 = (0..m.rows()).map(|i| (m.get(i, j) - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        for i in 0..m.rows() {
            let v = if sd > 0.0 { (m.get(i, j) - mean) / sd } else { 0.0 };
            out.set(i, j, v);
        }
    }
    out
}

/// Round half up; the incomplete count for rate `rho` is round(rho * N).
pub fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Simulate incomplete views: exactly round(rho*N) rows become incomplete,
/// each losing between 1 and V-1 views; no row loses all views.
pub fn simulate_missing(
    n: usize,
    v: usize,
    rho: f64,
    scheme: MissingScheme,
    rng: &mut RngStream,
) -> Result<MaskMatrix> {
    if v < 2 {
        return Err(Error::Contract(format!(
            "missing simulation needs V >= 2, got {v}"
        )));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::Contract(format!("rho must be in [0,1], got {rho}")));
    }
    let n_incomplete = round_half_up(rho * n as f64).min(n);
    let mut ids: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut ids);
    let mut entries = vec![1u8; n * v];
    for &i in ids.iter().take(n_incomplete) {
        let n_masked = match scheme {
            MissingScheme::CountUniform => 1 + rng.below(v - 1),
            MissingScheme::PatternUniform => {
                // weight count c by C(V,c) so patterns are equiprobable
                let weights: Vec<f64> = (1..v).map(|c| binomial(v, c) as f64).collect();
                let total: f64 = weights.iter().sum();
                let mut t = rng.uniform() * total;
                let mut c = 1;
                for (idx, w) in weights.iter().enumerate() {
                    if t < *w {
                        c = idx + 1;
                        break;
                    }
                    t -= w;
                }
                c
            }
        };
        let mut vids: Vec<usize> = (0..v).collect();
        rng.shuffle(&mut vids);
        for &vid in vids.iter().take(n_masked) {
            entries[i * v + vid] = 0;
        }
    }
    MaskMatrix::from_entries(n, v, entries)
}

pub(crate) fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u64 / (i + 1) as u64;
    }
    acc
}

/// Row i of the mask, i.e. the missing pattern m_i.
pub fn pattern_of(mask: &MaskMatrix, i: usize) -> Result<Vec<u8>> {
    if i >= mask.n_samples() {
        return Err(Error::Contract(format!(
            "sample index {i} out of range (N={})",
            mask.n_samples()
        )));
    }
    Ok(mask.row(i).to_vec())
}
