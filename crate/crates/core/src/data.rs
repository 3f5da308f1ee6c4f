//! Dataset ingestion and synthetic generators.
//!
//! Loaders are deterministic functions of the file bytes: shuffling happens
//! in the environment. Every loader transparently accepts gzip input.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::env::{ContextSource, Draw};
use crate::error::{Error, Result};
use crate::scorer::{link, score, Arch, FeatureVector, LabeledDataset, LabeledPoint, ScorerParams};
use crate::{seeded_rng, Rng};

/// Reads a whole file, gunzipping it when it starts with the gzip magic.
pub fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let mut raw = Vec::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut raw))
        .map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        flate2::read::MultiGzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Environment variable naming the dataset root directory.
pub const DATA_DIR_ENV: &str = "BLP_DATA_DIR";

/// `dir/name`, or `dir/name.gz` when only the compressed copy exists.
pub fn find_file(dir: &Path, name: &str) -> Result<PathBuf> {
    let plain = dir.join(name);
    if plain.is_file() {
        return Ok(plain);
    }
    let gz = dir.join(format!("{name}.gz"));
    if gz.is_file() {
        return Ok(gz);
    }
    Err(Error::io(
        &plain,
        std::io::Error::new(std::io::ErrorKind::NotFound, "neither the file nor a .gz copy exists"),
    ))
}

impl DatasetSpec {
    /// `root/adult/adult.data`, plus `adult.test` when `with_test` is set.
    pub fn adult_in(root: &Path, with_test: bool) -> Result<Self> {
        let dir = root.join("adult");
        Ok(Self::Adult {
            path: find_file(&dir, "adult.data")?,
            test_path: if with_test { Some(find_file(&dir, "adult.test")?) } else { None },
        })
    }

    /// `root/bank/bank-full.csv`.
    pub fn bank_in(root: &Path) -> Result<Self> {
        Ok(Self::Bank {
            path: find_file(&root.join("bank"), "bank-full.csv")?,
        })
    }

    /// The MNIST training IDX pair under `root/mnist`.
    pub fn mnist5_in(root: &Path) -> Result<Self> {
        let dir = root.join("mnist");
        Ok(Self::Mnist5 {
            images: find_file(&dir, "train-images-idx3-ubyte")?,
            labels: find_file(&dir, "train-labels-idx1-ubyte")?,
        })
    }
}

/// Which dataset an experiment streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    Adult {
        path: PathBuf,
        /// Optional `adult.test`, appended to the training file when given.
        #[serde(default)]
        test_path: Option<PathBuf>,
    },
    Bank {
        path: PathBuf,
    },
    Mnist5 {
        images: PathBuf,
        labels: PathBuf,
    },
    SyntheticLogistic {
        d: usize,
        tau: f64,
        lipschitz: f64,
    },
    Xor,
    /// Greedy-trap stream with planted false negatives.
    Trap(crate::harness::TrapConfig),
}

/// How one raw column maps onto features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnEncoding {
    /// One z-scored feature; `sd` is the population standard deviation
    /// (replaced by 1 for constant columns).
    Continuous { name: String, mean: f64, sd: f64 },
    /// One-hot block, categories in sorted order.
    Categorical { name: String, categories: Vec<String> },
}

impl ColumnEncoding {
    pub fn width(&self) -> usize {
        match self {
            ColumnEncoding::Continuous { .. } => 1,
            ColumnEncoding::Categorical { categories, .. } => categories.len(),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            ColumnEncoding::Continuous { name, .. } | ColumnEncoding::Categorical { name, .. } => name,
        }
    }
}

/// A loaded CSV table: encoded points plus the tables needed to undo the encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularDataset {
    pub data: LabeledDataset,
    pub columns: Vec<ColumnEncoding>,
    /// 1-based row numbers (data rows, header excluded) dropped for missing values.
    pub skipped_rows: Vec<usize>,
}

impl TabularDataset {
    pub fn dim(&self) -> usize {
        self.columns.iter().map(ColumnEncoding::width).sum()
    }

    /// Maps an encoded vector back to raw column values.
    pub fn decode(&self, x: &[f64]) -> Vec<String> {
        let mut off = 0;
        let mut out = Vec::with_capacity(self.columns.len());
        for col in &self.columns {
            match col {
                ColumnEncoding::Continuous { mean, sd, .. } => {
                    out.push(format!("{}", x[off] * sd + mean));
                }
                ColumnEncoding::Categorical { categories, .. } => {
                    let block = &x[off..off + categories.len()];
                    let hot = block
                        .iter()
                        .enumerate()
                        .max_by(|a, b| a.1.total_cmp(b.1))
                        .map(|(i, _)| i)
                        .unwrap_or(0);
                    out.push(categories[hot].clone());
                }
            }
            off += col.width();
        }
        out
    }
}

const ADULT_COLUMNS: [(&str, bool); 14] = [
    ("age", true),
    ("workclass", false),
    ("fnlwgt", true),
    ("education", false),
    ("education-num", true),
    ("marital-status", false),
    ("occupation", false),
    ("relationship", false),
    ("race", false),
    ("sex", false),
    ("capital-gain", true),
    ("capital-loss", true),
    ("hours-per-week", true),
    ("native-country", false),
];

struct RawTable {
    names: Vec<String>,
    continuous: Vec<bool>,
    rows: Vec<Vec<String>>,
    labels: Vec<u8>,
    skipped: Vec<usize>,
}

fn encode(path: &Path, raw: RawTable) -> Result<TabularDataset> {
    let ncol = raw.names.len();
    let mut columns = Vec::with_capacity(ncol);
    let mut numeric: Vec<Vec<f64>> = vec![Vec::new(); ncol];
    for c in 0..ncol {
        if raw.continuous[c] {
            let mut vals = Vec::with_capacity(raw.rows.len());
            for (r, row) in raw.rows.iter().enumerate() {
                let v: f64 = row[c].parse().map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    row: r + 1,
                    msg: format!("column '{}' is not numeric: '{}'", raw.names[c], row[c]),
                })?;
                vals.push(v);
            }
            let n = vals.len().max(1) as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
            columns.push(ColumnEncoding::Continuous {
                name: raw.names[c].clone(),
                mean,
                sd,
            });
            numeric[c] = vals;
        } else {
            let cats: BTreeSet<&str> = raw.rows.iter().map(|row| row[c].as_str()).collect();
            columns.push(ColumnEncoding::Categorical {
                name: raw.names[c].clone(),
                categories: cats.into_iter().map(str::to_owned).collect(),
            });
        }
    }

    let dim: usize = columns.iter().map(ColumnEncoding::width).sum();
    let mut points = Vec::with_capacity(raw.rows.len());
    for (r, row) in raw.rows.iter().enumerate() {
        let mut x = Vec::with_capacity(dim);
        for (c, col) in columns.iter().enumerate() {
            match col {
                ColumnEncoding::Continuous { mean, sd, .. } => x.push((numeric[c][r] - mean) / sd),
                ColumnEncoding::Categorical { categories, .. } => {
                    let hot = categories.binary_search_by(|k| k.as_str().cmp(&row[c])).unwrap();
                    x.extend((0..categories.len()).map(|i| if i == hot { 1.0 } else { 0.0 }));
                }
            }
        }
        points.push(LabeledPoint::new(FeatureVector::new(x)?, raw.labels[r]));
    }
    Ok(TabularDataset {
        data: LabeledDataset::from_points(points),
        columns,
        skipped_rows: raw.skipped,
    })
}

fn csv_reader(bytes: &[u8], delimiter: u8) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes)
}

/// UCI Adult: 14 attributes and an income label; label 1 iff income is `>50K`.
///
/// Accepts the original headerless `adult.data`/`adult.test` files as well as
/// a CSV with a header row naming the columns. Rows containing `?` are dropped
/// and listed in `skipped_rows`.
pub fn load_adult(path: &Path) -> Result<TabularDataset> {
    let bytes = read_maybe_gz(path)?;
    parse_adult(path, &bytes)
}

pub fn parse_adult(path: &Path, bytes: &[u8]) -> Result<TabularDataset> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut skipped = Vec::new();
    let mut row_no = 0;
    for rec in csv_reader(bytes, b',').records() {
        let rec = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            row: row_no + 1,
            msg: e.to_string(),
        })?;
        if rec.is_empty() || (rec.len() == 1 && rec[0].is_empty()) {
            continue;
        }
        // adult.test starts with a "|1x3 Cross validator" line; some copies
        // carry a header row.
        if rec[0].starts_with('|') || (row_no == 0 && rec[0].eq_ignore_ascii_case("age")) {
            continue;
        }
        row_no += 1;
        if rec.len() != ADULT_COLUMNS.len() + 1 {
            return Err(Error::Schema {
                path: path.to_path_buf(),
                msg: format!(
                    "row {row_no} has {} fields, expected {}",
                    rec.len(),
                    ADULT_COLUMNS.len() + 1
                ),
            });
        }
        if rec.iter().any(|f| f == "?") {
            skipped.push(row_no);
            continue;
        }
        let label = match rec[14].trim_end_matches('.') {
            ">50K" => 1,
            "<=50K" => 0,
            other => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    row: row_no,
                    msg: format!("unknown income label '{other}'"),
                })
            }
        };
        rows.push(rec.iter().take(14).map(str::to_owned).collect());
        labels.push(label);
    }
    encode(
        path,
        RawTable {
            names: ADULT_COLUMNS.iter().map(|(n, _)| n.to_string()).collect(),
            continuous: ADULT_COLUMNS.iter().map(|(_, c)| *c).collect(),
            rows,
            labels,
            skipped,
        },
    )
}

/// UCI Bank Marketing: semicolon-delimited with a header row; label column
/// `y`, `"yes"` → 1. Columns whose every value parses as a number are
/// z-scored; the rest are one-hot encoded.
pub fn load_bank(path: &Path) -> Result<TabularDataset> {
    let bytes = read_maybe_gz(path)?;
    parse_bank(path, &bytes)
}

pub fn parse_bank(path: &Path, bytes: &[u8]) -> Result<TabularDataset> {
    let mut records = csv_reader(bytes, b';').into_records();
    let header = match records.next() {
        Some(Ok(h)) => h,
        _ => {
            return Err(Error::Schema {
                path: path.to_path_buf(),
                msg: "missing header row".into(),
            })
        }
    };
    let names: Vec<String> = header.iter().map(str::to_owned).collect();
    let label_col = names.iter().position(|n| n == "y").ok_or_else(|| Error::Schema {
        path: path.to_path_buf(),
        msg: "no 'y' column".into(),
    })?;
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut labels = Vec::new();
    let mut skipped = Vec::new();
    for (i, rec) in records.enumerate() {
        let row_no = i + 1;
        let rec = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            row: row_no,
            msg: e.to_string(),
        })?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != names.len() {
            return Err(Error::Schema {
                path: path.to_path_buf(),
                msg: format!("row {row_no} has {} fields, expected {}", rec.len(), names.len()),
            });
        }
        if rec.iter().any(|f| f == "?" || f.is_empty()) {
            skipped.push(row_no);
            continue;
        }
        let label = match &rec[label_col] {
            "yes" => 1,
            "no" => 0,
            other => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    row: row_no,
                    msg: format!("unknown label '{other}'"),
                })
            }
        };
        rows.push(
            rec.iter()
                .enumerate()
                .filter(|(c, _)| *c != label_col)
                .map(|(_, f)| f.to_owned())
                .collect(),
        );
        labels.push(label);
    }
    let feature_names: Vec<String> = names
        .iter()
        .enumerate()
        .filter(|(c, _)| *c != label_col)
        .map(|(_, n)| n.clone())
        .collect();
    let continuous = (0..feature_names.len())
        .map(|c| !rows.is_empty() && rows.iter().all(|r| r[c].parse::<f64>().is_ok()))
        .collect();
    encode(
        path,
        RawTable {
            names: feature_names,
            continuous,
            rows,
            labels,
            skipped,
        },
    )
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::Schema {
            path: path.to_path_buf(),
            msg: "truncated IDX header".into(),
        })
}

/// MNIST IDX image/label pair; pixels scaled by 1/255, label 1 iff digit 5.
pub fn load_mnist(images: &Path, labels: &Path) -> Result<LabeledDataset> {
    let img = read_maybe_gz(images)?;
    let lab = read_maybe_gz(labels)?;
    parse_mnist(images, &img, labels, &lab)
}

pub fn parse_mnist(
    images_path: &Path,
    img: &[u8],
    labels_path: &Path,
    lab: &[u8],
) -> Result<LabeledDataset> {
    let magic = be_u32(img, 0, images_path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::IdxMagic {
            path: images_path.to_path_buf(),
            found: magic,
            expected: IDX_IMAGES_MAGIC,
        });
    }
    let magic = be_u32(lab, 0, labels_path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::IdxMagic {
            path: labels_path.to_path_buf(),
            found: magic,
            expected: IDX_LABELS_MAGIC,
        });
    }
    let n_img = be_u32(img, 4, images_path)? as usize;
    let rows = be_u32(img, 8, images_path)? as usize;
    let cols = be_u32(img, 12, images_path)? as usize;
    let n_lab = be_u32(lab, 4, labels_path)? as usize;
    if n_img != n_lab {
        return Err(Error::CountMismatch {
            images: n_img,
            labels: n_lab,
        });
    }
    let px = rows * cols;
    let body = &img[16..];
    let digits = &lab[8..];
    if body.len() < n_img * px || digits.len() < n_lab {
        return Err(Error::Schema {
            path: images_path.to_path_buf(),
            msg: "IDX body shorter than header count".into(),
        });
    }
    let points = (0..n_img)
        .map(|i| {
            let x = body[i * px..(i + 1) * px]
                .iter()
                .map(|&b| b as f64 / 255.0)
                .collect();
            LabeledPoint::new(FeatureVector(x), u8::from(digits[i] == 5))
        })
        .collect();
    Ok(LabeledDataset { points })
}

/// Four isotropic Gaussian clusters with cluster-determined labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XorConfig {
    pub centers: Vec<[f64; 2]>,
    pub positive: Vec<bool>,
    /// Diagonal of each cluster's covariance.
    pub variance: f64,
}

impl Default for XorConfig {
    fn default() -> Self {
        Self {
            centers: vec![[0.0, 5.0], [0.0, 0.0], [5.0, -2.0], [5.0, 5.0]],
            positive: vec![false, true, false, true],
            variance: 0.5,
        }
    }
}

/// Equal-weight mixture over the configured clusters.
#[derive(Debug, Clone)]
pub struct XorSource {
    pub config: XorConfig,
}

impl XorSource {
    pub fn new(config: XorConfig) -> Result<Self> {
        if config.centers.is_empty() || config.centers.len() != config.positive.len() {
            return Err(Error::Config("xor: one label per cluster center".into()));
        }
        if !(config.variance >= 0.0) {
            return Err(Error::Config("xor: variance must be non-negative".into()));
        }
        Ok(Self { config })
    }

    /// Label of the cluster whose center is nearest to `x`.
    pub fn label_at(&self, x: &[f64]) -> u8 {
        let (best, _) = self
            .config
            .centers
            .iter()
            .enumerate()
            .map(|(i, c)| (i, (c[0] - x[0]).powi(2) + (c[1] - x[1]).powi(2)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        u8::from(self.config.positive[best])
    }

    /// Draws `n` labeled points with a private RNG seeded from `seed`.
    pub fn sample(&mut self, n: usize, seed: u64) -> LabeledDataset {
        let mut rng = seeded_rng(seed);
        (0..n)
            .map(|_| {
                let d = self.draw_one(&mut rng);
                LabeledPoint::new(d.x, d.label)
            })
            .collect()
    }

    fn draw_one(&self, rng: &mut Rng) -> Draw {
        let k = rng.random_range(0..self.config.centers.len());
        let sd = self.config.variance.sqrt();
        let c = self.config.centers[k];
        let x: Vec<f64> = (0..2)
            .map(|i| {
                let z: f64 = StandardNormal.sample(rng);
                c[i] + sd * z
            })
            .collect();
        Draw {
            x: FeatureVector(x),
            label: u8::from(self.config.positive[k]),
            oracle_score: None,
        }
    }
}

impl ContextSource for XorSource {
    fn dim(&self) -> usize {
        2
    }

    fn draw(&mut self, rng: &mut Rng) -> Result<Draw> {
        Ok(self.draw_one(rng))
    }
}

/// Default XOR stream.
pub fn gen_xor() -> XorSource {
    XorSource::new(XorConfig::default()).unwrap()
}

/// Consecutive rejections after which the gap sampler gives up.
pub const REJECTION_CAP: usize = 1_000_000;

/// Logistic labels over a linear score with a margin: contexts are uniform
/// on the radius-`bound` ball minus the slab `|θ*ᵀx| < τ`, labels are
/// Bernoulli(μ(θ*ᵀx)).
#[derive(Debug, Clone)]
pub struct SyntheticLogistic {
    theta_star: ScorerParams,
    pub tau: f64,
    pub bound: f64,
}

impl SyntheticLogistic {
    pub fn with_theta(theta_star: ScorerParams, tau: f64, bound: f64) -> Result<Self> {
        if !matches!(theta_star.arch(), Arch::Linear { .. }) {
            return Err(Error::Config("synthetic θ* must be linear".into()));
        }
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::Config(format!("tau must lie in (0,1), got {tau}")));
        }
        if !(bound > 0.0) {
            return Err(Error::Config("bound must be positive".into()));
        }
        Ok(Self {
            theta_star,
            tau,
            bound,
        })
    }

    pub fn theta_star(&self) -> &ScorerParams {
        &self.theta_star
    }

    pub fn lipschitz(&self) -> f64 {
        self.theta_star.norm_sq().sqrt()
    }

    /// Uniform point in the ball.
    fn uniform_ball(&self, rng: &mut Rng) -> Vec<f64> {
        let d = self.theta_star.arch().input_dim();
        loop {
            let dir: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
            let n = dir.iter().map(|v: &f64| v * v).sum::<f64>().sqrt();
            if n == 0.0 {
                continue;
            }
            let r = self.bound * rng.random::<f64>().powf(1.0 / d as f64);
            return dir.into_iter().map(|v| v / n * r).collect();
        }
    }

    /// Draws a point outside the gap slab.
    pub fn sample_x(&self, rng: &mut Rng) -> Result<FeatureVector> {
        for _ in 0..REJECTION_CAP {
            let x = self.uniform_ball(rng);
            if score(&self.theta_star, &x)?.abs() >= self.tau {
                return Ok(FeatureVector(x));
            }
        }
        Err(Error::SamplerExhausted(REJECTION_CAP))
    }

    /// Labels a given point by the logistic model.
    pub fn label(&self, x: &FeatureVector, rng: &mut Rng) -> (u8, f64) {
        let f = score(&self.theta_star, x).expect("dimension checked at construction");
        (u8::from(rng.random::<f64>() < link(f)), f)
    }
}

impl ContextSource for SyntheticLogistic {
    fn dim(&self) -> usize {
        self.theta_star.arch().input_dim()
    }

    fn draw(&mut self, rng: &mut Rng) -> Result<Draw> {
        let x = self.sample_x(rng)?;
        let (label, f) = self.label(&x, rng);
        Ok(Draw {
            x,
            label,
            oracle_score: Some(f),
        })
    }

    fn theta_star(&self) -> Option<&ScorerParams> {
        Some(&self.theta_star)
    }
}

/// θ* is a random direction (from `seed`) scaled to norm `lipschitz`; the
/// support ball has radius 1.
pub fn gen_synthetic_logistic(d: usize, tau: f64, lipschitz: f64, seed: u64) -> Result<SyntheticLogistic> {
    if d == 0 || !(lipschitz > 0.0) {
        return Err(Error::Config("synthetic stream needs d ≥ 1 and L > 0".into()));
    }
    let mut rng = seeded_rng(seed);
    let dir: Vec<f64> = loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = v.iter().map(|a: &f64| a * a).sum::<f64>().sqrt();
        if n > 1e-12 {
            break v.into_iter().map(|a| a / n * lipschitz).collect();
        }
    };
    SyntheticLogistic::with_theta(ScorerParams::new(Arch::Linear { input: d }, dir)?, tau, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::io::Write;

    const ADULT_SAMPLE: &str = "\
39, State-gov, 77516, Bachelors, 13, Never-married, Adm-clerical, Not-in-family, White, Male, 2174, 0, 40, United-States, <=50K
50, Self-emp-not-inc, 83311, Bachelors, 13, Married-civ-spouse, Exec-managerial, Husband, White, Male, 0, 0, 13, United-States, <=50K
52, Self-emp-inc, 287927, HS-grad, 9, Married-civ-spouse, Exec-managerial, Wife, White, Female, 15024, 0, 40, United-States, >50K
54, ?, 180211, Some-college, 10, Married-civ-spouse, ?, Husband, Asian-Pac-Islander, Male, 0, 0, 60, South, >50K
31, Private, 45781, Masters, 14, Never-married, Prof-specialty, Not-in-family, White, Female, 14084, 0, 50, United-States, >50K.
";

    #[test]
    fn adult_labels_skips_and_moments() {
        let t = parse_adult(Path::new("adult"), ADULT_SAMPLE.as_bytes()).unwrap();
        assert_eq!(t.data.len(), 4);
        assert_eq!(t.skipped_rows, vec![4]);
        let labels: Vec<u8> = t.data.iter().map(|p| p.y).collect();
        assert_eq!(labels, vec![0, 0, 1, 1]);
        assert_eq!(t.dim(), t.data.dim().unwrap());

        let mut off = 0;
        for col in &t.columns {
            if let ColumnEncoding::Continuous { .. } = col {
                let vals: Vec<f64> = t.data.iter().map(|p| p.x[off]).collect();
                let n = vals.len() as f64;
                let m = vals.iter().sum::<f64>() / n;
                let sd = (vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt();
                assert!(m.abs() < 1e-9);
                // Constant columns (capital-loss in this sample) stay at 0.
                let constant = vals.iter().all(|v| *v == 0.0);
                assert!(constant || (sd - 1.0).abs() < 1e-9, "{} sd {sd}", col.name());
            }
            off += col.width();
        }
    }

    #[test]
    fn adult_header_and_errors() {
        let with_header = format!(
            "age,workclass,fnlwgt,education,education-num,marital-status,occupation,relationship,race,sex,capital-gain,capital-loss,hours-per-week,native-country,income\n{ADULT_SAMPLE}"
        );
        let t = parse_adult(Path::new("a"), with_header.as_bytes()).unwrap();
        assert_eq!(t.data.len(), 4);

        let short = "39, State-gov, 77516\n";
        assert!(matches!(
            parse_adult(Path::new("a"), short.as_bytes()),
            Err(Error::Schema { .. })
        ));
        let bad_num = ADULT_SAMPLE.replacen("39,", "thirty,", 1);
        match parse_adult(Path::new("a"), bad_num.as_bytes()) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn adult_decode_inverts_encoding() {
        let t = parse_adult(Path::new("a"), ADULT_SAMPLE.as_bytes()).unwrap();
        let raw = t.decode(&t.data.points[2].x);
        assert_eq!(raw[1], "Self-emp-inc");
        assert_eq!(raw[13], "United-States");
        assert_relative_eq!(raw[0].parse::<f64>().unwrap(), 52.0, epsilon = 1e-9);
        assert_relative_eq!(raw[10].parse::<f64>().unwrap(), 15024.0, epsilon = 1e-6);
    }

    const BANK_SAMPLE: &str = "\
\"age\";\"job\";\"marital\";\"balance\";\"y\"
30;\"unemployed\";\"married\";1787;\"no\"
33;\"services\";\"married\";4789;\"yes\"
35;\"management\";\"single\";1350;\"no\"
30;\"management\";\"married\";1476;\"yes\"
";

    #[test]
    fn bank_labels_and_width() {
        let t = parse_bank(Path::new("bank"), BANK_SAMPLE.as_bytes()).unwrap();
        let labels: Vec<u8> = t.data.iter().map(|p| p.y).collect();
        assert_eq!(labels, vec![0, 1, 0, 1]);
        // age, balance continuous; job has 3 categories, marital 2.
        assert_eq!(t.dim(), 2 + 3 + 2);
        assert_eq!(t.data.dim(), Some(7));
        let cats: usize = t
            .columns
            .iter()
            .filter_map(|c| match c {
                ColumnEncoding::Categorical { categories, .. } => Some(categories.len()),
                _ => None,
            })
            .sum();
        assert_eq!(cats, 5);
    }

    #[test]
    fn gzip_is_transparent() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.csv.gz");
        let mut enc = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
        enc.write_all(BANK_SAMPLE.as_bytes()).unwrap();
        std::fs::write(&path, enc.finish().unwrap()).unwrap();
        let t = load_bank(&path).unwrap();
        assert_eq!(t.data.len(), 4);
    }

    fn idx_pair(digits: &[u8], pixel: u8) -> (Vec<u8>, Vec<u8>) {
        let n = digits.len() as u32;
        let mut img = Vec::new();
        img.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
        img.extend_from_slice(&n.to_be_bytes());
        img.extend_from_slice(&28u32.to_be_bytes());
        img.extend_from_slice(&28u32.to_be_bytes());
        img.extend(std::iter::repeat_n(pixel, 784 * digits.len()));
        let mut lab = Vec::new();
        lab.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
        lab.extend_from_slice(&n.to_be_bytes());
        lab.extend_from_slice(digits);
        (img, lab)
    }

    #[test]
    fn mnist_binarization_and_scaling() {
        let (img, lab) = idx_pair(&[5, 3, 5], 255);
        let d = parse_mnist(Path::new("i"), &img, Path::new("l"), &lab).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.dim(), Some(784));
        let ys: Vec<u8> = d.iter().map(|p| p.y).collect();
        assert_eq!(ys, vec![1, 0, 1]);
        assert!(d.points[0].x.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn mnist_errors() {
        let (mut img, lab) = idx_pair(&[1, 2], 0);
        let (_, lab3) = idx_pair(&[1, 2, 3], 0);
        assert!(matches!(
            parse_mnist(Path::new("i"), &img, Path::new("l"), &lab3),
            Err(Error::CountMismatch { images: 2, labels: 3 })
        ));
        img[3] = 0x01;
        assert!(matches!(
            parse_mnist(Path::new("i"), &img, Path::new("l"), &lab),
            Err(Error::IdxMagic { found: 0x801, .. })
        ));
    }

    #[test]
    fn xor_cluster_means() {
        let mut src = gen_xor();
        let n = 100_000;
        let mut rng = seeded_rng(4);
        let mut sums = [[0.0f64; 3]; 4];
        let mut mislabeled = 0;
        for _ in 0..n {
            let d = src.draw(&mut rng).unwrap();
                        let k = src
                .config
                .centers
                .iter()
                .enumerate()
                .min_by(|a, b| {
                    let da = (a.1[0] - d.x[0]).powi(2) + (a.1[1] - d.x[1]).powi(2);
                    let db = (b.1[0] - d.x[0]).powi(2) + (b.1[1] - d.x[1]).powi(2);
                    da.total_cmp(&db)
                })
                .unwrap()
                .0;
            mislabeled += usize::from(d.label != u8::from(src.config.positive[k]));
            sums[k][0] += d.x[0];
            sums[k][1] += d.x[1];
            sums[k][2] += 1.0;
        }
        // Nearest-center attribution only errs in the far Gaussian tails.
        assert!(mislabeled < n / 1000, "{mislabeled}");
        for (k, s) in sums.iter().enumerate() {
            let c = src.config.centers[k];
            assert!((s[0] / s[2] - c[0]).abs() < 0.02);
            assert!((s[1] / s[2] - c[1]).abs() < 0.02);
        }
        assert_eq!(src.label_at(&[0.0, 5.0]), 0);
        assert_eq!(src.label_at(&[5.0, 5.0]), 1);
    }

    #[test]
    fn xor_scatter_extents() {
        let d = gen_xor().sample(300, 0);
        assert_eq!(d.len(), 300);
        let xs: Vec<f64> = d.iter().map(|p| p.x[0]).collect();
        let ys: Vec<f64> = d.iter().map(|p| p.x[1]).collect();
        let (lo_x, hi_x) = (xs.iter().cloned().fold(f64::MAX, f64::min), xs.iter().cloned().fold(f64::MIN, f64::max));
        let (lo_y, hi_y) = (ys.iter().cloned().fold(f64::MAX, f64::min), ys.iter().cloned().fold(f64::MIN, f64::max));
        assert!(lo_x > -4.0 && lo_x < -0.5 && hi_x > 5.5 && hi_x < 9.0);
        assert!(lo_y > -6.0 && lo_y < -2.5 && hi_y > 5.5 && hi_y < 9.0);
    }

    #[test]
    fn synthetic_respects_gap_and_bound() {
        let mut s = gen_synthetic_logistic(2, 0.2, 1.0, 3).unwrap();
        let mut rng = seeded_rng(1);
        for _ in 0..5000 {
            let d = s.draw(&mut rng).unwrap();
            assert!(d.oracle_score.unwrap().abs() >= 0.2);
            assert!(d.x.norm() <= 1.0 + 1e-12);
        }
        assert_relative_eq!(s.lipschitz(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn synthetic_label_frequencies_match_link() {
        // χ² over 10 bins of f*, 10⁵ draws.
        let mut s = gen_synthetic_logistic(2, 0.2, 3.0, 9).unwrap();
        let mut rng = seeded_rng(2);
        let bins = 10;
        let mut count = vec![0.0; bins];
        let mut pos = vec![0.0; bins];
        let mut expect = vec![0.0; bins];
        for _ in 0..100_000 {
            let d = s.draw(&mut rng).unwrap();
            let f = d.oracle_score.unwrap();
            let b = (((f + 3.0) / 6.0) * bins as f64).floor().clamp(0.0, bins as f64 - 1.0) as usize;
            count[b] += 1.0;
            pos[b] += d.label as f64;
            expect[b] += link(f);
        }
        let mut chi2 = 0.0;
        let mut dof = 0;
        for b in 0..bins {
            if count[b] < 50.0 {
                continue;
            }
            let p = expect[b] / count[b];
            let var = count[b] * p * (1.0 - p);
            chi2 += (pos[b] - expect[b]).powi(2) / var;
            dof += 1;
        }
        // 99.9% quantile of χ²(10) is 29.6.
        assert!(dof >= 8);
        assert!(chi2 < 29.6, "chi2 = {chi2}");
    }

    #[test]
    fn degenerate_gap_still_terminates() {
        let mut s = gen_synthetic_logistic(2, 0.99, 1.0, 0).unwrap();
        let mut rng = seeded_rng(0);
        let d = s.draw(&mut rng).unwrap();
        assert!(d.oracle_score.unwrap().abs() >= 0.99);
        // No point of the unit ball reaches |θ*ᵀx| ≥ 0.9 when ‖θ*‖ = 0.5.
        let impossible = gen_synthetic_logistic(2, 0.9, 0.5, 0).unwrap();
        assert!(matches!(
            impossible.sample_x(&mut rng),
            Err(Error::SamplerExhausted(REJECTION_CAP))
        ));
    }

    #[test]
    fn synthetic_labels_are_reproducible() {
        let run = |seed| {
            let mut s = gen_synthetic_logistic(2, 0.2, 2.0, 5).unwrap();
            let mut rng = seeded_rng(seed);
            (0..500).map(|_| s.draw(&mut rng).unwrap().label).collect::<Vec<u8>>()
        };
        assert_eq!(run(8), run(8));
        assert_ne!(run(8), run(9));
    }
}
