//! Multi-view dataset loading, validation, and synthetic benchmark generation.
//!
//! On-disk layout of a dataset directory:
//!
//! ```text
//! view_0.csv    p rows, d_0 comma-separated numeric columns, no header
//! view_1.csv    same p rows, d_1 columns
//! ...
//! labels.csv    optional, single nonnegative-integer column of length p
//! ```
//!
//! View indices must be contiguous from 0. Values are written with 17
//! significant digits so that write/load round-trips are bit-exact.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `p` instances observed through `n` feature views of possibly different
/// dimensionality, with optional ground-truth class labels.
#[derive(Debug, Clone)]
pub struct MultiViewDataset {
    /// One `p x d_v` feature matrix per view.
    pub views: Vec<DMatrix<f64>>,
    /// Ground-truth class ids; arbitrary nonnegative integers, not
    /// necessarily contiguous (metrics canonicalize them).
    pub labels: Option<Vec<usize>>,
}

impl MultiViewDataset {
    pub fn view_count(&self) -> usize {
        self.views.len()
    }

    pub fn instance_count(&self) -> usize {
        self.views.first().map_or(0, |v| v.nrows())
    }

    /// Check the structural invariants: at least one view, a shared row count
    /// p >= 2, nonempty feature dimensions, finite entries, and a label per
    /// instance when labels are present.
    pub fn validate(&self) -> Result<()> {
        if self.views.is_empty() {
            return Err(Error::InvalidInput("dataset has no views".into()));
        }
        let p = self.views[0].nrows();
        if p < 2 {
            return Err(Error::InvalidInput(format!(
                "dataset needs at least 2 instances, got {p}"
            )));
        }
        for (v, x) in self.views.iter().enumerate() {
            if x.nrows() != p {
                return Err(Error::InvalidInput(format!(
                    "view {v} has {} rows but view 0 has {p}",
                    x.nrows()
                )));
            }
            if x.ncols() == 0 {
                return Err(Error::InvalidInput(format!("view {v} has no columns")));
            }
            for i in 0..x.nrows() {
                for j in 0..x.ncols() {
                    if !x[(i, j)].is_finite() {
                        return Err(Error::InvalidInput(format!(
                            "view {v} has a non-finite value at row {i}, column {j}"
                        )));
                    }
                }
            }
        }
        if let Some(labels) = &self.labels {
            if labels.len() != p {
                return Err(Error::InvalidInput(format!(
                    "labels length {} does not match instance count {p}",
                    labels.len()
                )));
            }
        }
        Ok(())
    }
}

/// Recipe for a synthetic multi-view benchmark: `k` Gaussian clusters in a
/// k-dimensional latent space (cluster c centered at `separation`·e_c, unit
/// within-cluster variance), pushed through an independent random linear map
/// into each view's `d` dimensions, plus per-view isotropic noise.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    /// Instance count.
    pub p: usize,
    /// View count.
    pub n: usize,
    /// Cluster count; cluster sizes are balanced within one instance.
    pub k: usize,
    /// Feature dimension of every view.
    pub d: usize,
    /// Cluster-center spacing in latent space.
    pub separation: f64,
    /// Per-view noise standard deviation, length `n`.
    pub noise_sigma: Vec<f64>,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.p < 2 {
            return Err(Error::InvalidInput(format!(
                "synthetic spec needs p >= 2, got {}",
                self.p
            )));
        }
        if self.k == 0 || self.k > self.p {
            return Err(Error::InvalidInput(format!(
                "synthetic spec needs 1 <= k <= p, got k={} with p={}",
                self.k, self.p
            )));
        }
        if self.n == 0 {
            return Err(Error::InvalidInput("synthetic spec needs n >= 1".into()));
        }
        if self.d == 0 {
            return Err(Error::InvalidInput("synthetic spec needs d >= 1".into()));
        }
        if self.separation <= 0.0 || !self.separation.is_finite() {
            return Err(Error::InvalidInput(format!(
                "synthetic spec needs separation > 0, got {}",
                self.separation
            )));
        }
        if self.noise_sigma.len() != self.n {
            return Err(Error::InvalidInput(format!(
                "noise_sigma has {} entries for {} views",
                self.noise_sigma.len(),
                self.n
            )));
        }
        if let Some(s) = self.noise_sigma.iter().find(|s| **s < 0.0 || !s.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "noise_sigma entries must be finite and >= 0, got {s}"
            )));
        }
        Ok(())
    }
}

/// Generate the benchmark described by `spec`. Bit-identical for a fixed
/// spec: every random draw comes from ChaCha streams derived from the seed.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<MultiViewDataset> {
    spec.validate()?;
    let (p, n, k, d) = (spec.p, spec.n, spec.k, spec.d);

    // Balanced labels: the first p % k clusters get one extra instance.
    let mut labels = Vec::with_capacity(p);
    for c in 0..k {
        let size = p / k + usize::from(c < p % k);
        labels.extend(std::iter::repeat_n(c, size));
    }

    // Latent coordinates: cluster center separation * e_c plus unit noise.
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut latent = DMatrix::zeros(p, k);
    for i in 0..p {
        for j in 0..k {
            let center = if labels[i] == j { spec.separation } else { 0.0 };
            latent[(i, j)] = center + rng.sample::<f64, _>(StandardNormal);
        }
    }

    let mut views = Vec::with_capacity(n);
    for v in 0..n {
        let mut vrng = ChaCha8Rng::seed_from_u64(view_seed(spec.seed, v));
        let mut map = DMatrix::zeros(k, d);
        for i in 0..k {
            for j in 0..d {
                map[(i, j)] = vrng.sample::<f64, _>(StandardNormal);
            }
        }
        let mut x = &latent * &map;
        let sigma = spec.noise_sigma[v];
        for i in 0..p {
            for j in 0..d {
                x[(i, j)] += sigma * vrng.sample::<f64, _>(StandardNormal);
            }
        }
        views.push(x);
    }

    let out = MultiViewDataset {
        views,
        labels: Some(labels),
    };
    out.validate()?;
    Ok(out)
}

fn view_seed(seed: u64, view: usize) -> u64 {
    seed ^ (view as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Load a dataset directory (see the module doc for the layout).
pub fn load_dataset(dir: &Path) -> Result<MultiViewDataset> {
    if !dir.is_dir() {
        return Err(Error::InvalidInput(format!(
            "{} is not a directory",
            dir.display()
        )));
    }
    let mut views = Vec::new();
    loop {
        let path = dir.join(format!("view_{}.csv", views.len()));
        if !path.is_file() {
            break;
        }
        views.push(read_matrix_csv(&path)?);
    }
    if views.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no view_0.csv found in {}",
            dir.display()
        )));
    }
    // A view file beyond the contiguous run means a gap in the indices.
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if let Some(idx) = name
            .strip_prefix("view_")
            .and_then(|s| s.strip_suffix(".csv"))
            .and_then(|s| s.parse::<usize>().ok())
        {
            if idx >= views.len() {
                return Err(Error::InvalidInput(format!(
                    "found {name} but view_{}.csv is missing; view indices must be contiguous from 0",
                    views.len()
                )));
            }
        }
    }

    let p = views[0].nrows();
    for (v, x) in views.iter().enumerate() {
        if x.nrows() != p {
            return Err(Error::InvalidInput(format!(
                "view_{v}.csv has {} rows but view_0.csv has {p}",
                x.nrows()
            )));
        }
    }

    let labels_path = dir.join("labels.csv");
    let labels = if labels_path.is_file() {
        let l = load_labels(&labels_path)?;
        if l.len() != p {
            return Err(Error::InvalidInput(format!(
                "labels.csv has {} rows but view_0.csv has {p}",
                l.len()
            )));
        }
        Some(l)
    } else {
        None
    };

    let ds = MultiViewDataset { views, labels };
    ds.validate()?;
    Ok(ds)
}

/// Write `ds` into `dir` in the directory layout `load_dataset` reads.
pub fn write_dataset(ds: &MultiViewDataset, dir: &Path) -> Result<()> {
    ds.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (v, x) in ds.views.iter().enumerate() {
        let mut text = String::new();
        for i in 0..x.nrows() {
            for j in 0..x.ncols() {
                if j > 0 {
                    text.push(',');
                }
                text.push_str(&format_value(x[(i, j)]));
            }
            text.push('\n');
        }
        write_atomic(&dir.join(format!("view_{v}.csv")), &text)?;
    }
    if let Some(labels) = &ds.labels {
        let mut text = String::new();
        for l in labels {
            text.push_str(&l.to_string());
            text.push('\n');
        }
        write_atomic(&dir.join("labels.csv"), &text)?;
    }
    Ok(())
}

/// 17 significant digits: enough for an exact f64 round-trip.
pub(crate) fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write a whole file atomically (temp file in the same directory, then
/// rename), so readers never observe a half-written artifact.
pub(crate) fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    file.write_all(contents.as_bytes())
        .map_err(|e| Error::io(&tmp, e))?;
    file.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;

    let name = path.display();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| Error::InvalidInput(format!("{name}: {e}")))?;
        let line = record.position().map_or(0, |p| p.line());
        if rows.is_empty() {
            width = record.len();
        } else if record.len() != width {
            return Err(Error::InvalidInput(format!(
                "{name}: line {line}: expected {width} fields, found {}",
                record.len()
            )));
        }
        let mut row = Vec::with_capacity(width);
        for (j, field) in record.iter().enumerate() {
            let value: f64 = field.parse().map_err(|_| {
                Error::InvalidInput(format!(
                    "{name}: line {line}, field {}: cannot parse {field:?} as a number",
                    j + 1
                ))
            })?;
            if !value.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "{name}: line {line}, field {}: non-finite value {field:?}",
                    j + 1
                )));
            }
            row.push(value);
        }
        if row.is_empty() {
            return Err(Error::InvalidInput(format!("{name}: line {line}: empty row")));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput(format!("{name}: file has no rows")));
    }
    Ok(DMatrix::from_fn(rows.len(), width, |i, j| rows[i][j]))
}

/// Read a single-column CSV of nonnegative integer labels.
pub fn load_labels(path: &Path) -> Result<Vec<usize>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;

    let name = path.display();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::InvalidInput(format!("{name}: {e}")))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 1 {
            return Err(Error::InvalidInput(format!(
                "{name}: line {line}: expected a single label column, found {} fields",
                record.len()
            )));
        }
        let field = record.get(0).unwrap_or("");
        let value: usize = field.parse().map_err(|_| {
            Error::InvalidInput(format!(
                "{name}: line {line}: cannot parse {field:?} as a nonnegative integer"
            ))
        })?;
        labels.push(value);
    }
    if labels.is_empty() {
        return Err(Error::InvalidInput(format!("{name}: file has no rows")));
    }
    Ok(labels)
}

/// Z-score every feature column of every view in place (population standard
/// deviation). Zero-variance columns are centered but not divided.
pub fn standardize_features(views: &mut [DMatrix<f64>]) {
    for x in views.iter_mut() {
        let p = x.nrows();
        for j in 0..x.ncols() {
            let mean = x.column(j).sum() / p as f64;
            let var = x.column(j).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / p as f64;
            let std = var.sqrt();
            for i in 0..p {
                x[(i, j)] -= mean;
                if std > 0.0 {
                    x[(i, j)] /= std;
                }
            }
        }
    }
}
