//! Datasets: synthetic generation, CSV ingestion, and standardization.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, TAG_SIM_ROW};

/// Column centering/scaling constants, kept so that new observations can be
/// mapped onto the scale a model was trained on. Always maps from the raw
/// scale, even after repeated standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub centers: Vec<f64>,
    pub scales: Vec<f64>,
}

/// An immutable regression dataset: an n x p design matrix, a response vector
/// of length n, and one name per predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Array2<f64>,
    y: Array1<f64>,
    names: Vec<String>,
    standardized: bool,
    scaling: Option<Standardization>,
}

impl Dataset {
    /// Builds a dataset, validating shape and finiteness. Requires n >= 4
    /// (a half-size subsample must keep at least two rows) and p >= 2.
    pub fn new(x: Array2<f64>, y: Array1<f64>, names: Vec<String>) -> Result<Self> {
        let (n, p) = x.dim();
        if n < 4 {
            return Err(Error::Parameter(format!("need at least 4 rows, got {n}")));
        }
        if p < 2 {
            return Err(Error::Parameter(format!(
                "need at least 2 predictors, got {p}"
            )));
        }
        if y.len() != n {
            return Err(Error::Parameter(format!(
                "response length {} does not match {} rows",
                y.len(),
                n
            )));
        }
        if names.len() != p {
            return Err(Error::Parameter(format!(
                "{} names for {} predictors",
                names.len(),
                p
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("non-finite entry in x".into()));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("non-finite entry in y".into()));
        }
        Ok(Self {
            x,
            y,
            names,
            standardized: false,
            scaling: None,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn y(&self) -> &Array1<f64> {
        &self.y
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    pub fn scaling(&self) -> Option<&Standardization> {
        self.scaling.as_ref()
    }

    /// Centers every predictor column to mean 0 and scales it to unit sample
    /// standard deviation (denominator n-1). Constant columns become all-zero
    /// with a recorded scale of 1. The response is left untouched, and the
    /// combined raw-to-current constants are retained for prediction-time
    /// reuse; standardizing twice is a no-op up to rounding.
    pub fn standardize(&self) -> Dataset {
        let (n, p) = self.x.dim();
        let mut x = self.x.clone();
        let mut centers = vec![0.0; p];
        let mut scales = vec![1.0; p];
        for j in 0..p {
            let mut col = x.column_mut(j);
            let mean = col.iter().sum::<f64>() / n as f64;
            let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
            let sd = (ss / (n - 1) as f64).sqrt();
            let scale = if sd > 0.0 { sd } else { 1.0 };
            for v in col.iter_mut() {
                *v = (*v - mean) / scale;
            }
            centers[j] = mean;
            scales[j] = scale;
        }
        // Compose with any prior transform so the constants always map from
        // the raw scale: raw -> (raw - c_total) / s_total.
        let scaling = match &self.scaling {
            Some(prev) => Standardization {
                centers: prev
                    .centers
                    .iter()
                    .zip(prev.scales.iter())
                    .zip(centers.iter())
                    .map(|((c1, s1), c2)| c1 + c2 * s1)
                    .collect(),
                scales: prev
                    .scales
                    .iter()
                    .zip(scales.iter())
                    .map(|(s1, s2)| s1 * s2)
                    .collect(),
            },
            None => Standardization { centers, scales },
        };
        Dataset {
            x,
            y: self.y.clone(),
            names: self.names.clone(),
            standardized: true,
            scaling: Some(scaling),
        }
    }

    /// Raw row subset (for train/test splits). Values and names carry over;
    /// standardization metadata does not, so split before standardizing.
    pub fn subset_rows(&self, rows: &[usize]) -> Result<Dataset> {
        if rows.iter().any(|&r| r >= self.n()) {
            return Err(Error::Parameter("row index out of range".into()));
        }
        if rows.is_empty() {
            return Err(Error::Parameter("empty row subset".into()));
        }
        let p = self.p();
        let mut x = Array2::zeros((rows.len(), p));
        let mut y = Array1::zeros(rows.len());
        for (i, &r) in rows.iter().enumerate() {
            for j in 0..p {
                x[(i, j)] = self.x[(r, j)];
            }
            y[i] = self.y[r];
        }
        Ok(Dataset {
            x,
            y,
            names: self.names.clone(),
            standardized: false,
            scaling: None,
        })
    }

    /// Maps a raw-scale matrix onto this dataset's scale using the retained
    /// constants. Identity when the dataset was never standardized.
    pub fn apply_scaling_to(&self, x: &Array2<f64>) -> Array2<f64> {
        match &self.scaling {
            None => x.clone(),
            Some(s) => {
                let mut out = x.clone();
                for j in 0..out.ncols() {
                    let (c, sc) = (s.centers[j], s.scales[j]);
                    for v in out.column_mut(j).iter_mut() {
                        *v = (*v - c) / sc;
                    }
                }
                out
            }
        }
    }
}

/// Parameters for the AR(1)-correlated Gaussian design used throughout the
/// synthetic experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub p: usize,
    /// Lag-1 correlation of the design covariance, sigma_jk = rho^|j-k|.
    pub rho: f64,
    pub beta: Vec<f64>,
    pub noise_sd: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::Parameter(format!(
                "rho must lie in [0, 1), got {}",
                self.rho
            )));
        }
        if !self.noise_sd.is_finite() || self.noise_sd <= 0.0 {
            return Err(Error::Parameter(format!(
                "noise_sd must be positive, got {}",
                self.noise_sd
            )));
        }
        if self.beta.len() != self.p {
            return Err(Error::Parameter(format!(
                "beta length {} does not match p = {}",
                self.beta.len(),
                self.p
            )));
        }
        if self.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::Parameter("non-finite beta coefficient".into()));
        }
        Ok(())
    }
}

fn default_names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("V{j}")).collect()
}

fn simulate_rows(spec: &SyntheticSpec, n: usize, seed: u64) -> (Array2<f64>, Array1<f64>) {
    let p = spec.p;
    let carry = (1.0 - spec.rho * spec.rho).sqrt();
    let mut x = Array2::zeros((n, p));
    let mut y = Array1::zeros(n);
    for i in 0..n {
        // Each row draws from its own (seed, row) stream, so generation is
        // schedule-independent.
        let mut rng = stream_rng(seed, &[TAG_SIM_ROW, i as u64]);
        let mut row = x.row_mut(i);
        let mut prev = 0.0;
        for j in 0..p {
            let z: f64 = rng.sample(StandardNormal);
            // x_1 ~ N(0,1); x_j = rho x_{j-1} + sqrt(1-rho^2) z_j realizes
            // cov(x_j, x_k) = rho^|j-k| exactly, in O(p) per row.
            let v = if j == 0 {
                z
            } else {
                spec.rho * prev + carry * z
            };
            row[j] = v;
            prev = v;
        }
        let eps: f64 = rng.sample(StandardNormal);
        let mut mean = 0.0;
        for j in 0..p {
            mean += row[j] * spec.beta[j];
        }
        y[i] = mean + spec.noise_sd * eps;
    }
    (x, y)
}

/// Draws an n x p design with rows i.i.d. N(0, Sigma), Sigma_jk = rho^|j-k|,
/// and the response y = X beta + eps with eps i.i.d. N(0, noise_sd^2).
/// Bit-identical output for identical `(spec)` including its seed.
pub fn simulate(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let (x, y) = simulate_rows(spec, spec.n, spec.seed);
    Dataset::new(x, y, default_names(spec.p))
}

/// Draws `count` additional rows from the same distribution as `spec`,
/// using `seed` in place of the spec's seed. Intended for held-out test
/// samples; pass a seed distinct from the training seed.
pub fn simulate_ar1_samples(spec: &SyntheticSpec, count: usize, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    if count < 1 {
        return Err(Error::Parameter("count must be at least 1".into()));
    }
    let (x, y) = simulate_rows(spec, count, seed);
    let names = default_names(spec.p);
    // Test sets may be smaller than the n >= 4 floor for training data, so
    // bypass Dataset::new's row check while keeping the finiteness guarantee.
    Ok(Dataset {
        x,
        y,
        names,
        standardized: false,
        scaling: None,
    })
}

/// Which column of a delimited file holds the response.
#[derive(Debug, Clone, PartialEq)]
pub enum ResponseColumn {
    Name(String),
    /// Zero-based position in the file.
    Index(usize),
}

impl std::str::FromStr for ResponseColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => ResponseColumn::Index(i),
            Err(_) => ResponseColumn::Name(s.to_string()),
        })
    }
}

/// Reads an RFC-4180-style CSV into a dataset. All non-response columns enter
/// `x` in file order; names come from the header row, or are generated as
/// V1..Vp when `has_header` is false. Cells must parse as (locale-independent)
/// decimal or scientific-notation numbers.
pub fn load_csv(path: &Path, response: &ResponseColumn, has_header: bool) -> Result<Dataset> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("{display}: {e}"),
            )),
            _ => ingestion(&display, 0, "-", &e.to_string()),
        })?;

    let header: Option<Vec<String>> = if has_header {
        Some(
            reader
                .headers()
                .map_err(|e| ingestion(&display, 0, "-", &e.to_string()))?
                .iter()
                .map(|s| s.to_string())
                .collect(),
        )
    } else {
        None
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (i, record) in reader.records().enumerate() {
        let row_no = i + 1;
        let record = record.map_err(|e| ingestion(&display, row_no, "-", &e.to_string()))?;
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(ingestion(
                &display,
                row_no,
                "-",
                &format!("expected {w} fields, found {}", record.len()),
            ));
        }
        let mut row = Vec::with_capacity(w);
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                ingestion(
                    &display,
                    row_no,
                    &column_label(&header, c),
                    &format!("cannot parse {cell:?} as a number"),
                )
            })?;
            if !v.is_finite() {
                return Err(ingestion(
                    &display,
                    row_no,
                    &column_label(&header, c),
                    "non-finite value",
                ));
            }
            row.push(v);
        }
        rows.push(row);
    }

    let width = width.ok_or_else(|| ingestion(&display, 0, "-", "file holds no data rows"))?;
    let resp_idx = match response {
        ResponseColumn::Index(i) => {
            if *i >= width {
                return Err(ingestion(
                    &display,
                    0,
                    &i.to_string(),
                    &format!("response index out of range (file has {width} columns)"),
                ));
            }
            *i
        }
        ResponseColumn::Name(name) => match &header {
            Some(h) => h.iter().position(|c| c == name).ok_or_else(|| {
                ingestion(&display, 0, name, "response column not found in header")
            })?,
            None => {
                return Err(ingestion(
                    &display,
                    0,
                    name,
                    "response selected by name but the file has no header",
                ))
            }
        },
    };

    let n = rows.len();
    let p = width - 1;
    let mut x = Array2::zeros((n, p));
    let mut y = Array1::zeros(n);
    for (i, row) in rows.iter().enumerate() {
        let mut k = 0;
        for (c, &v) in row.iter().enumerate() {
            if c == resp_idx {
                y[i] = v;
            } else {
                x[(i, k)] = v;
                k += 1;
            }
        }
    }
    let names = match &header {
        Some(h) => h
            .iter()
            .enumerate()
            .filter(|(c, _)| *c != resp_idx)
            .map(|(_, s)| s.clone())
            .collect(),
        None => default_names(p),
    };
    Dataset::new(x, y, names)
}

fn column_label(header: &Option<Vec<String>>, c: usize) -> String {
    match header {
        Some(h) if c < h.len() => h[c].clone(),
        _ => c.to_string(),
    }
}

fn ingestion(path: &str, row: usize, column: &str, message: &str) -> Error {
    Error::Ingestion {
        path: path.to_string(),
        row,
        column: column.to_string(),
        message: message.to_string(),
    }
}

/// Writes a dataset as CSV with the response in the first column. Values use
/// the shortest representation that reloads to the same f64, so
/// `load_csv(save_csv(d))` is the identity on (x, y, names).
pub fn save_csv(d: &Dataset, path: &Path, response_name: &str) -> Result<()> {
    let mut out = String::new();
    out.push_str(response_name);
    for name in d.names() {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for i in 0..d.n() {
        let _ = write!(out, "{}", d.y()[i]);
        for j in 0..d.p() {
            let _ = write!(out, ",{}", d.x()[(i, j)]);
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Free-function form of [`Dataset::standardize`].
pub fn standardize(d: &Dataset) -> Dataset {
    d.standardize()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SyntheticSpec {
        SyntheticSpec {
            n: 20,
            p: 5,
            rho: 0.5,
            beta: vec![1.5, 1.1, 0.0, 0.0, 0.0],
            noise_sd: 1.0,
            seed: 11,
        }
    }

    #[test]
    fn simulate_is_deterministic() {
        let a = simulate(&small_spec()).unwrap();
        let b = simulate(&small_spec()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn simulate_rejects_bad_rho() {
        let mut spec = small_spec();
        spec.rho = 1.0;
        assert!(matches!(simulate(&spec), Err(Error::Parameter(_))));
        spec.rho = -0.1;
        assert!(matches!(simulate(&spec), Err(Error::Parameter(_))));
    }

    #[test]
    fn full_scale_shapes() {
        let mut beta = vec![0.0; 500];
        beta[0] = 1.5;
        beta[1] = 1.1;
        let spec = SyntheticSpec {
            n: 50,
            p: 500,
            rho: 0.2,
            beta,
            noise_sd: 1.0,
            seed: 3,
        };
        let d = simulate(&spec).unwrap();
        assert_eq!((d.n(), d.p()), (50, 500));
        assert_eq!(d.names()[0], "V1");
        assert_eq!(d.names()[499], "V500");
    }

    #[test]
    fn test_samples_are_fresh() {
        let spec = small_spec();
        let a = simulate_ar1_samples(&spec, 25, 1001).unwrap();
        let b = simulate_ar1_samples(&spec, 25, 1002).unwrap();
        assert_eq!(a.n(), 25);
        assert_ne!(a.y(), b.y());
        let single = simulate_ar1_samples(&spec, 1, 5).unwrap();
        assert_eq!(single.n(), 1);
        assert!(matches!(
            simulate_ar1_samples(&spec, 0, 5),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn standardize_matches_hand_computation() {
        // Column (1,2,3): mean 2, sample sd 1 -> (-1, 0, 1).
        let x = ndarray::arr2(&[[1.0, 5.0], [2.0, 5.0], [3.0, 5.0], [2.0, 5.0]]);
        let y = ndarray::arr1(&[0.0, 0.0, 0.0, 0.0]);
        let d = Dataset::new(x, y, vec!["a".into(), "b".into()]).unwrap();
        let s = d.standardize();
        let c0: Vec<f64> = s.x().column(0).to_vec();
        let sd0 = (c0.iter().map(|v| v * v).sum::<f64>() / 3.0).sqrt();
        assert!((sd0 - 1.0).abs() < 1e-12);
        assert!((c0[0] + c0[2]).abs() < 1e-12);
        // Constant column collapses to zeros with recorded scale 1.
        assert!(s.x().column(1).iter().all(|v| *v == 0.0));
        assert_eq!(s.scaling().unwrap().scales[1], 1.0);
        assert!(s.is_standardized());
    }

    #[test]
    fn standardize_is_idempotent() {
        let d = simulate(&small_spec()).unwrap();
        let once = d.standardize();
        let twice = once.standardize();
        for (a, b) in once.x().iter().zip(twice.x().iter()) {
            assert!((a - b).abs() < 1e-10);
        }
        // Retained constants still map from the raw scale.
        let raw = once.scaling().unwrap();
        let again = twice.scaling().unwrap();
        for (a, b) in raw.centers.iter().zip(again.centers.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
        for (a, b) in raw.scales.iter().zip(again.scales.iter()) {
            assert!((a - b).abs() < 1e-10 * a.abs().max(1.0));
        }
    }

    #[test]
    fn apply_scaling_reproduces_training_transform() {
        let d = simulate(&small_spec()).unwrap();
        let s = d.standardize();
        let mapped = s.apply_scaling_to(d.x());
        for (a, b) in mapped.iter().zip(s.x().iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn subset_rows_copies_exactly() {
        let d = simulate(&small_spec()).unwrap();
        let sub = d.subset_rows(&[3, 0, 7, 7]).unwrap();
        assert_eq!(sub.n(), 4);
        assert_eq!(sub.y()[0], d.y()[3]);
        assert_eq!(sub.y()[2], sub.y()[3]);
        assert_eq!(sub.x()[(1, 2)], d.x()[(0, 2)]);
        assert!(d.subset_rows(&[99]).is_err());
        assert!(d.subset_rows(&[]).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        let d = simulate(&small_spec()).unwrap();
        save_csv(&d, &path, "y").unwrap();
        let back = load_csv(&path, &ResponseColumn::Name("y".into()), true).unwrap();
        assert_eq!(d, back);
    }

    #[test]
    fn csv_response_by_index_and_headerless() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plain.csv");
        std::fs::write(&path, "1,2,3\n4,5,6\n7,8,9\n1,1,1\n").unwrap();
        let d = load_csv(&path, &ResponseColumn::Index(1), false).unwrap();
        assert_eq!(d.p(), 2);
        assert_eq!(d.y().to_vec(), vec![2.0, 5.0, 8.0, 1.0]);
        assert_eq!(d.names(), ["V1", "V2"]);
    }

    #[test]
    fn csv_text_cell_names_the_location() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "y,a,b\n1,2,3\n4,oops,6\n7,8,9\n0,1,2\n").unwrap();
        let err = load_csv(&path, &ResponseColumn::Name("y".into()), true).unwrap_err();
        match err {
            Error::Ingestion { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "a");
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn csv_missing_pieces() {
        let missing = load_csv(
            Path::new("/nonexistent/x.csv"),
            &ResponseColumn::Index(0),
            false,
        );
        assert!(matches!(missing, Err(Error::Io(_))));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("no_resp.csv");
        std::fs::write(&path, "a,b\n1,2\n3,4\n5,6\n7,8\n").unwrap();
        let err = load_csv(&path, &ResponseColumn::Name("y".into()), true).unwrap_err();
        assert!(matches!(err, Error::Ingestion { .. }));
    }
}
