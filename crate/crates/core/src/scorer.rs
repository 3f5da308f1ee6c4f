//! Parametric scorers `f_θ`, the logistic link, the weighted regularized
//! cross-entropy and its gradient, and a first-order trainer.
//!
//! Parameters live in one flat vector so that optimizers, snapshots and the
//! NeuralUCB design accumulator can treat every architecture the same way.
//! The MLP layout is `[W1 (h1×d, row-major), b1, W2 (h2×h1), b2, w3 (h2), b3]`.

use std::ops::Deref;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng as _, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities are clamped to `[PROB_FLOOR, 1 - PROB_FLOOR]` before `ln`.
pub const PROB_FLOOR: f64 = 1e-12;

/// Logistic link `μ(z) = e^z / (1 + e^z)`, evaluated without overflow.
#[inline]
pub fn link(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Cross-entropy of a score against a label, probabilities clamped.
#[inline]
fn cross_entropy(score: f64, y: f64) -> f64 {
    let p = link(score).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
    let q = link(-score).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
    -y * p.ln() - (1.0 - y) * q.ln()
}

/// One applicant / context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FeatureVector(pub(crate) Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature vector"));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn distance(&self, other: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(other)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for FeatureVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for FeatureVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<FeatureVector> for Vec<f64> {
    fn from(v: FeatureVector) -> Self {
        v.0
    }
}

/// A labeled, weighted example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub x: FeatureVector,
    pub y: u8,
    pub weight: f64,
}

impl LabeledPoint {
    pub fn new(x: FeatureVector, y: u8) -> Self {
        Self { x, y, weight: 1.0 }
    }

    pub fn weighted(x: FeatureVector, y: u8, weight: f64) -> Self {
        Self { x, y, weight }
    }
}

/// Ordered multiset of labeled points.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub points: Vec<LabeledPoint>,
}

impl LabeledDataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_points(points: Vec<LabeledPoint>) -> Self {
        Self { points }
    }

    pub fn push(&mut self, point: LabeledPoint) {
        self.points.push(point);
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LabeledPoint> {
        self.points.iter()
    }

    /// Feature dimension of the first point, if any.
    pub fn dim(&self) -> Option<usize> {
        self.points.first().map(|p| p.x.dim())
    }

    /// `self` followed by `other`.
    pub fn union(&self, other: &LabeledDataset) -> LabeledDataset {
        let mut points = Vec::with_capacity(self.len() + other.len());
        points.extend_from_slice(&self.points);
        points.extend_from_slice(&other.points);
        LabeledDataset { points }
    }

    pub fn positive_fraction(&self) -> Option<f64> {
        if self.is_empty() {
            return None;
        }
        let pos = self.points.iter().filter(|p| p.y == 1).count();
        Some(pos as f64 / self.len() as f64)
    }
}

impl FromIterator<LabeledPoint> for LabeledDataset {
    fn from_iter<I: IntoIterator<Item = LabeledPoint>>(iter: I) -> Self {
        Self {
            points: iter.into_iter().collect(),
        }
    }
}

/// Scorer architecture.
///
/// `Linear` has no intercept (`f(x) = θᵀx`); `Affine` adds one; `Mlp` is two
/// tanh hidden layers followed by a linear read-out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Arch {
    Linear {
        input: usize,
    },
    Affine {
        input: usize,
    },
    Mlp {
        input: usize,
        hidden1: usize,
        hidden2: usize,
    },
}

impl Arch {
    pub fn mlp(input: usize, hidden1: usize, hidden2: usize) -> Self {
        Arch::Mlp {
            input,
            hidden1,
            hidden2,
        }
    }

    pub fn input_dim(&self) -> usize {
        match *self {
            Arch::Linear { input } | Arch::Affine { input } | Arch::Mlp { input, .. } => input,
        }
    }

    pub fn param_count(&self) -> usize {
        match *self {
            Arch::Linear { input } => input,
            Arch::Affine { input } => input + 1,
            Arch::Mlp {
                input,
                hidden1,
                hidden2,
            } => hidden1 * input + hidden1 + hidden2 * hidden1 + hidden2 + hidden2 + 1,
        }
    }

    fn tag(&self) -> u8 {
        match self {
            Arch::Linear { .. } => 0,
            Arch::Affine { .. } => 1,
            Arch::Mlp { .. } => 2,
        }
    }

    fn describe(&self) -> String {
        match *self {
            Arch::Linear { input } => format!("linear({input})"),
            Arch::Affine { input } => format!("affine({input})"),
            Arch::Mlp {
                input,
                hidden1,
                hidden2,
            } => format!("mlp({input},{hidden1},{hidden2})"),
        }
    }
}

#[derive(Deserialize)]
struct RawParams {
    arch: Arch,
    theta: Vec<f64>,
}

/// Architecture plus flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct ScorerParams {
    arch: Arch,
    theta: Vec<f64>,
}

impl TryFrom<RawParams> for ScorerParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        Self::new(raw.arch, raw.theta)
    }
}

const SNAPSHOT_MAGIC: &[u8; 4] = b"BLPS";

impl ScorerParams {
    pub fn new(arch: Arch, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != arch.param_count() {
            return Err(Error::ParamCount {
                arch: arch.describe(),
                expected: arch.param_count(),
                actual: theta.len(),
            });
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter vector"));
        }
        Ok(Self { arch, theta })
    }

    pub fn zeros(arch: Arch) -> Self {
        Self {
            arch,
            theta: vec![0.0; arch.param_count()],
        }
    }

    /// Starting point for online learners: zeros for the convex models, random for the MLP.
    pub fn initial(arch: Arch, rng: &mut impl RngCore) -> Self {
        match arch {
            Arch::Mlp { .. } => Self::init(arch, rng),
            _ => Self::zeros(arch),
        }
    }

    /// Uniform(−1/√fan_in, 1/√fan_in) for every weight and bias of a layer.
    pub fn init(arch: Arch, rng: &mut impl RngCore) -> Self {
        let mut theta = Vec::with_capacity(arch.param_count());
        let mut layer = |fan_in: usize, count: usize, theta: &mut Vec<f64>| {
            let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
            for _ in 0..count {
                theta.push(rng.random_range(-bound..=bound));
            }
        };
        match arch {
            Arch::Linear { input } => layer(input, input, &mut theta),
            Arch::Affine { input } => layer(input, input + 1, &mut theta),
            Arch::Mlp {
                input,
                hidden1,
                hidden2,
            } => {
                layer(input, hidden1 * input + hidden1, &mut theta);
                layer(hidden1, hidden2 * hidden1 + hidden2, &mut theta);
                layer(hidden2, hidden2 + 1, &mut theta);
            }
        }
        Self { arch, theta }
    }

    pub fn arch(&self) -> Arch {
        self.arch
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn norm_sq(&self) -> f64 {
        self.theta.iter().map(|v| v * v).sum()
    }

    /// Flat little-endian snapshot: magic, arch tag, three u32 dims, count, f64s.
    pub fn to_bytes(&self) -> Vec<u8> {
        let (a, b, c) = match self.arch {
            Arch::Linear { input } | Arch::Affine { input } => (input, 0, 0),
            Arch::Mlp {
                input,
                hidden1,
                hidden2,
            } => (input, hidden1, hidden2),
        };
        let mut out = Vec::with_capacity(25 + 8 * self.theta.len());
        out.extend_from_slice(SNAPSHOT_MAGIC);
        out.push(self.arch.tag());
        for dim in [a, b, c] {
            out.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.theta.len() as u64).to_le_bytes());
        for v in &self.theta {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Domain(format!("parameter snapshot: {msg}"));
        if bytes.len() < 25 || &bytes[..4] != SNAPSHOT_MAGIC {
            return Err(bad("missing header"));
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
        let (a, b, c) = (u32_at(5), u32_at(9), u32_at(13));
        let arch = match bytes[4] {
            0 => Arch::Linear { input: a },
            1 => Arch::Affine { input: a },
            2 => Arch::mlp(a, b, c),
            t => return Err(bad(&format!("unknown architecture tag {t}"))),
        };
        let count = u64::from_le_bytes(bytes[17..25].try_into().unwrap()) as usize;
        let body = &bytes[25..];
        if body.len() != count * 8 {
            return Err(bad("truncated body"));
        }
        let theta = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(arch, theta)
    }
}

struct MlpView<'a> {
    w1: ArrayView2<'a, f64>,
    b1: ArrayView1<'a, f64>,
    w2: ArrayView2<'a, f64>,
    b2: ArrayView1<'a, f64>,
    w3: ArrayView1<'a, f64>,
    b3: f64,
}

fn mlp_offsets(d: usize, h1: usize, h2: usize) -> [usize; 6] {
    let w1 = 0;
    let b1 = w1 + h1 * d;
    let w2 = b1 + h1;
    let b2 = w2 + h2 * h1;
    let w3 = b2 + h2;
    let b3 = w3 + h2;
    [w1, b1, w2, b2, w3, b3]
}

fn mlp_view(theta: &[f64], d: usize, h1: usize, h2: usize) -> MlpView<'_> {
    let [w1, b1, w2, b2, w3, b3] = mlp_offsets(d, h1, h2);
    MlpView {
        w1: ArrayView2::from_shape((h1, d), &theta[w1..b1]).unwrap(),
        b1: ArrayView1::from(&theta[b1..w2]),
        w2: ArrayView2::from_shape((h2, h1), &theta[w2..b2]).unwrap(),
        b2: ArrayView1::from(&theta[b2..w3]),
        w3: ArrayView1::from(&theta[w3..b3]),
        b3: theta[b3],
    }
}

/// `f_θ(x)`.
pub fn score(params: &ScorerParams, x: &[f64]) -> Result<f64> {
    let d = params.arch.input_dim();
    if x.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: x.len(),
        });
    }
    Ok(score_unchecked(params, x))
}

pub(crate) fn score_unchecked(params: &ScorerParams, x: &[f64]) -> f64 {
    let theta = &params.theta;
    match params.arch {
        Arch::Linear { .. } => dot(theta, x),
        Arch::Affine { input } => dot(&theta[..input], x) + theta[input],
        Arch::Mlp {
            input,
            hidden1,
            hidden2,
        } => {
            let m = mlp_view(theta, input, hidden1, hidden2);
            let h1: Vec<f64> = (0..hidden1)
                .map(|j| (dot(m.w1.row(j).as_slice().unwrap(), x) + m.b1[j]).tanh())
                .collect();
            let mut out = m.b3;
            for k in 0..hidden2 {
                let z = dot(m.w2.row(k).as_slice().unwrap(), &h1) + m.b2[k];
                out += m.w3[k] * z.tanh();
            }
            out
        }
    }
}

/// Scores for many points; batched through matrix products for the MLP.
pub fn score_many(params: &ScorerParams, xs: &[FeatureVector]) -> Result<Vec<f64>> {
    let d = params.arch.input_dim();
    if let Some(bad) = xs.iter().find(|x| x.dim() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: bad.dim(),
        });
    }
    match params.arch {
        Arch::Mlp {
            input,
            hidden1,
            hidden2,
        } if xs.len() > 1 => {
            let mut flat = Vec::with_capacity(xs.len() * d);
            for x in xs {
                flat.extend_from_slice(x);
            }
            let xm = ArrayView2::from_shape((xs.len(), d), &flat).unwrap();
            let fwd = mlp_forward(&params.theta, xm, input, hidden1, hidden2);
            Ok(fwd.out.to_vec())
        }
        _ => Ok(xs.iter().map(|x| score_unchecked(params, x)).collect()),
    }
}

/// `∇_θ f_θ(x)`.
pub fn score_gradient(params: &ScorerParams, x: &[f64]) -> Result<Vec<f64>> {
    let d = params.arch.input_dim();
    if x.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: x.len(),
        });
    }
    let mut grad = vec![0.0; params.len()];
    let rows = Rows {
        x,
        y: &[0.0],
        w: &[1.0],
        dim: d,
    };
    // With coefficient 1 per row the accumulated quantity is exactly ∇f.
    accumulate(params, &rows, &mut grad, 1.0, Coef::Unit);
    Ok(grad)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// Row-major view of a packed dataset.
struct Rows<'a> {
    x: &'a [f64],
    y: &'a [f64],
    w: &'a [f64],
    dim: usize,
}

impl Rows<'_> {
    fn len(&self) -> usize {
        self.y.len()
    }
}

struct Packed {
    x: Vec<f64>,
    y: Vec<f64>,
    w: Vec<f64>,
    dim: usize,
}

impl Packed {
    fn from_dataset(data: &LabeledDataset, dim: usize) -> Self {
        let n = data.len();
        let mut x = Vec::with_capacity(n * dim);
        let mut y = Vec::with_capacity(n);
        let mut w = Vec::with_capacity(n);
        for p in data.iter() {
            debug_assert_eq!(p.x.dim(), dim);
            x.extend_from_slice(&p.x);
            y.push(p.y as f64);
            w.push(p.weight);
        }
        Self { x, y, w, dim }
    }

    fn rows(&self) -> Rows<'_> {
        Rows {
            x: &self.x,
            y: &self.y,
            w: &self.w,
            dim: self.dim,
        }
    }
}

#[derive(Clone, Copy)]
enum Coef {
    /// `w·(μ(f) − y)`: gradient of the weighted cross-entropy.
    CrossEntropy,
    /// `1`: plain score gradient.
    Unit,
}

struct MlpForward {
    h1: Array2<f64>,
    h2: Array2<f64>,
    out: Array1<f64>,
}

fn mlp_forward(theta: &[f64], x: ArrayView2<f64>, d: usize, h1: usize, h2: usize) -> MlpForward {
    let m = mlp_view(theta, d, h1, h2);
    let mut a1 = x.dot(&m.w1.t());
    a1 += &m.b1;
    a1.mapv_inplace(f64::tanh);
    let mut a2 = a1.dot(&m.w2.t());
    a2 += &m.b2;
    a2.mapv_inplace(f64::tanh);
    let mut out = a2.dot(&m.w3);
    out += m.b3;
    MlpForward {
        h1: a1,
        h2: a2,
        out,
    }
}

/// Adds `scale · Σ_i coef_i ∇f(x_i)` to `grad` and returns the unscaled
/// weighted cross-entropy sum over the rows.
fn accumulate(params: &ScorerParams, rows: &Rows, grad: &mut [f64], scale: f64, coef: Coef) -> f64 {
    let n = rows.len();
    if n == 0 {
        return 0.0;
    }
    let d = rows.dim;
    let coef_of = |i: usize, f: f64| match coef {
        Coef::CrossEntropy => rows.w[i] * (link(f) - rows.y[i]),
        Coef::Unit => 1.0,
    };
    let mut loss = 0.0;
    match params.arch {
        Arch::Linear { .. } | Arch::Affine { .. } => {
            let affine = matches!(params.arch, Arch::Affine { .. });
            let theta = &params.theta;
            for i in 0..n {
                let x = &rows.x[i * d..(i + 1) * d];
                let mut f = dot(&theta[..d], x);
                if affine {
                    f += theta[d];
                }
                loss += rows.w[i] * cross_entropy(f, rows.y[i]);
                let g = scale * coef_of(i, f);
                for (gk, xk) in grad[..d].iter_mut().zip(x) {
                    *gk += g * xk;
                }
                if affine {
                    grad[d] += g;
                }
            }
        }
        Arch::Mlp {
            input,
            hidden1,
            hidden2,
        } => {
            let xm = ArrayView2::from_shape((n, d), &rows.x[..n * d]).unwrap();
            let fwd = mlp_forward(&params.theta, xm, input, hidden1, hidden2);
            let mut g = Array1::<f64>::zeros(n);
            for i in 0..n {
                let f = fwd.out[i];
                loss += rows.w[i] * cross_entropy(f, rows.y[i]);
                g[i] = scale * coef_of(i, f);
            }
            let m = mlp_view(&params.theta, input, hidden1, hidden2);
            let [o_w1, o_b1, o_w2, o_b2, o_w3, o_b3] = mlp_offsets(input, hidden1, hidden2);

            let gw3 = fwd.h2.t().dot(&g);
            for (dst, v) in grad[o_w3..o_b3].iter_mut().zip(gw3.iter()) {
                *dst += v;
            }
            grad[o_b3] += g.sum();

            // dZ2 = (g ⊗ w3) ⊙ (1 − H2²)
            let mut dz2 = g.view().insert_axis(Axis(1)).dot(&m.w3.insert_axis(Axis(0)));
            dz2.zip_mut_with(&fwd.h2, |dz, h| *dz *= 1.0 - h * h);
            let gw2 = dz2.t().dot(&fwd.h1);
            add_flat(&mut grad[o_w2..o_b2], gw2.as_standard_layout().as_slice().unwrap());
            add_flat(&mut grad[o_b2..o_w3], dz2.sum_axis(Axis(0)).as_slice().unwrap());

            let mut dz1 = dz2.dot(&m.w2);
            dz1.zip_mut_with(&fwd.h1, |dz, h| *dz *= 1.0 - h * h);
            let gw1 = dz1.t().dot(&xm);
            add_flat(&mut grad[o_w1..o_b1], gw1.as_standard_layout().as_slice().unwrap());
            add_flat(&mut grad[o_b1..o_w2], dz1.sum_axis(Axis(0)).as_slice().unwrap());
        }
    }
    loss
}

fn add_flat(dst: &mut [f64], src: &[f64]) {
    for (a, b) in dst.iter_mut().zip(src) {
        *a += b;
    }
}

/// Weighted regularized cross-entropy
/// `Σ w_i·CE(f(x_i), y_i) + (l2/2)‖θ‖²`.
pub fn loss(params: &ScorerParams, data: &LabeledDataset, l2: f64) -> f64 {
    let mut total = 0.0;
    for p in data.iter() {
        total += p.weight * cross_entropy(score_unchecked(params, &p.x), p.y as f64);
    }
    total + 0.5 * l2 * params.norm_sq()
}

/// Exact gradient of [`loss`] (ignoring the probability clamp).
pub fn grad(params: &ScorerParams, data: &LabeledDataset, l2: f64) -> Vec<f64> {
    let packed = Packed::from_dataset(data, params.arch.input_dim());
    let mut g: Vec<f64> = params.theta.iter().map(|t| l2 * t).collect();
    accumulate(params, &packed.rows(), &mut g, 1.0, Coef::CrossEntropy);
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Minibatch {
    Full,
    Size(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub l2_lambda: f64,
    pub optimizer: Optimizer,
    pub minibatch: Minibatch,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 100,
            learning_rate: 1e-3,
            l2_lambda: 1e-4,
            optimizer: Optimizer::Adam,
            minibatch: Minibatch::Full,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(self.l2_lambda >= 0.0) {
            return Err(Error::Config("l2 lambda must be non-negative".into()));
        }
        if let Minibatch::Size(0) = self.minibatch {
            return Err(Error::Config("minibatch size must be positive".into()));
        }
        Ok(())
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Runs `cfg.steps` optimizer iterations on [`loss`] starting from `params`.
///
/// Optimizer state starts fresh on every call. Minibatches are drawn with
/// replacement from `rng`; their data gradient is rescaled by `n / m`.
/// With `Minibatch::Full` the RNG is not touched.
pub fn train(
    params: &ScorerParams,
    data: &LabeledDataset,
    cfg: &TrainConfig,
    rng: &mut impl RngCore,
) -> ScorerParams {
    train_pinned(params, data, &LabeledDataset::default(), cfg, rng)
}

/// [`train`] on `data ∪ pinned`, where the pinned points enter every
/// minibatch at their own weight instead of being sampled.
pub fn train_pinned(
    params: &ScorerParams,
    data: &LabeledDataset,
    pinned: &LabeledDataset,
    cfg: &TrainConfig,
    rng: &mut impl RngCore,
) -> ScorerParams {
    let mut out = params.clone();
    if cfg.steps == 0 {
        return out;
    }
    let dim = params.arch.input_dim();
    let packed = Packed::from_dataset(data, dim);
    let fixed = Packed::from_dataset(pinned, dim);
    let n = packed.y.len();
    let p = params.len();
    let mut grad = vec![0.0; p];
    let mut m1 = vec![0.0; p];
    let mut m2 = vec![0.0; p];
    let mut scratch = Packed {
        x: Vec::new(),
        y: Vec::new(),
        w: Vec::new(),
        dim,
    };

    for step in 1..=cfg.steps {
        for (g, t) in grad.iter_mut().zip(&out.theta) {
            *g = cfg.l2_lambda * t;
        }
        match cfg.minibatch {
            Minibatch::Size(m) if n > m => {
                scratch.x.clear();
                scratch.y.clear();
                scratch.w.clear();
                for _ in 0..m {
                    let i = rng.random_range(0..n);
                    scratch.x.extend_from_slice(&packed.x[i * dim..(i + 1) * dim]);
                    scratch.y.push(packed.y[i]);
                    scratch.w.push(packed.w[i]);
                }
                let scale = n as f64 / m as f64;
                accumulate(&out, &scratch.rows(), &mut grad, scale, Coef::CrossEntropy);
            }
            _ => {
                accumulate(&out, &packed.rows(), &mut grad, 1.0, Coef::CrossEntropy);
            }
        }
        if !fixed.y.is_empty() {
            accumulate(&out, &fixed.rows(), &mut grad, 1.0, Coef::CrossEntropy);
        }

        match cfg.optimizer {
            Optimizer::Sgd => {
                for (t, g) in out.theta.iter_mut().zip(&grad) {
                    *t -= cfg.learning_rate * g;
                }
            }
            Optimizer::Adam => {
                let bc1 = 1.0 - ADAM_BETA1.powi(step as i32);
                let bc2 = 1.0 - ADAM_BETA2.powi(step as i32);
                for k in 0..p {
                    m1[k] = ADAM_BETA1 * m1[k] + (1.0 - ADAM_BETA1) * grad[k];
                    m2[k] = ADAM_BETA2 * m2[k] + (1.0 - ADAM_BETA2) * grad[k] * grad[k];
                    let mhat = m1[k] / bc1;
                    let vhat = m2[k] / bc2;
                    out.theta[k] -= cfg.learning_rate * mhat / (vhat.sqrt() + ADAM_EPS);
                }
            }
        }
    }
    out
}

/// Fraction of points whose decision `f(x) ≥ 0` matches the label.
pub fn accuracy(params: &ScorerParams, data: &LabeledDataset) -> f64 {
    if data.is_empty() {
        return f64::NAN;
    }
    let xs: Vec<FeatureVector> = data.iter().map(|p| p.x.clone()).collect();
    let scores = score_many(params, &xs).expect("dataset dimension matches scorer");
    let hits = scores
        .iter()
        .zip(data.iter())
        .filter(|(s, p)| (**s >= 0.0) == (p.y == 1))
        .count();
    hits as f64 / data.len() as f64
}
