//! Projection scores, their vech products, component-wise change-point
//! estimates, change-corrected residuals and block long-run variances.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::covspec::{EigenSystem, SeparableEigenSystem};
use crate::error::{FcovError, Result};
use crate::fts::{demean, FunctionalSample, GridKind};
use crate::Alternative;

/// A basis that grid functions can be projected onto.
pub trait ProjectionBasis {
    fn dim(&self) -> usize;
    fn basis_id(&self) -> String;
    /// Scores of already-centred rows.
    fn project_centred(&self, sample: &FunctionalSample, centred: &DMatrix<f64>) -> Result<DMatrix<f64>>;
}

impl ProjectionBasis for EigenSystem {
    fn dim(&self) -> usize {
        EigenSystem::dim(self)
    }

    fn basis_id(&self) -> String {
        format!("pca:{}", self.dim())
    }

    fn project_centred(&self, sample: &FunctionalSample, centred: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let w = sample.domain().weights();
        if w.len() != self.eigenfunctions().nrows() {
            return Err(FcovError::mismatch(format!(
                "sample on {} nodes, basis on {}",
                w.len(),
                self.eigenfunctions().nrows()
            )));
        }
        let weighted = DMatrix::from_fn(w.len(), self.dim(), |j, l| w[j] * self.eigenfunctions()[(j, l)]);
        Ok(centred * weighted)
    }
}

impl ProjectionBasis for SeparableEigenSystem {
    fn dim(&self) -> usize {
        SeparableEigenSystem::dim(self)
    }

    fn basis_id(&self) -> String {
        let [a, b, c] = self.axes().each_ref().map(|e| e.dim());
        format!("separable:{a}x{b}x{c}:{}", self.dim())
    }

    fn project_centred(&self, sample: &FunctionalSample, centred: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match sample.domain().kind() {
            GridKind::Volume { dims } if *dims == self.dims() => self.project(centred),
            _ => Err(FcovError::mismatch("separable basis needs a volume sample of matching dims")),
        }
    }
}

/// `n x d` projection scores of the demeaned sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    values: DMatrix<f64>,
    basis_id: String,
}

impl ScoreMatrix {
    pub fn new(values: DMatrix<f64>, basis_id: impl Into<String>) -> Self {
        Self { values, basis_id: basis_id.into() }
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn basis_id(&self) -> &str {
        &self.basis_id
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn column(&self, l: usize) -> &[f64] {
        column(&self.values, l)
    }

    /// First `d` score columns.
    pub fn leading(&self, d: usize) -> ScoreMatrix {
        let d = d.min(self.dim());
        ScoreMatrix { values: self.values.columns(0, d).into_owned(), basis_id: format!("{}[..{d}]", self.basis_id) }
    }

    pub fn scaled(&self, c: f64) -> ScoreMatrix {
        ScoreMatrix { values: &self.values * c, basis_id: self.basis_id.clone() }
    }
}

/// `eta_{t,l} = <X_t - mean, v_l>`.
pub fn compute_scores<B: ProjectionBasis + ?Sized>(x: &FunctionalSample, basis: &B) -> Result<ScoreMatrix> {
    let centred = demean(x);
    let values = basis.project_centred(x, centred.values())?;
    Ok(ScoreMatrix { values, basis_id: basis.basis_id() })
}

/// Column `l` of a column-major matrix as a slice.
pub(crate) fn column(m: &DMatrix<f64>, l: usize) -> &[f64] {
    let n = m.nrows();
    &m.as_slice()[l * n..(l + 1) * n]
}

/// Pairs `(l1, l2)`, `l1 <= l2`, in vech order.
pub fn vech_pairs(d: usize) -> Vec<(usize, usize)> {
    (0..d).flat_map(|a| (a..d).map(move |b| (a, b))).collect()
}

/// Series of score products, one column per pair `(l1, l2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreProductSeries {
    values: DMatrix<f64>,
    pair_index: Vec<(usize, usize)>,
}

impl ScoreProductSeries {
    pub fn new(values: DMatrix<f64>, pair_index: Vec<(usize, usize)>) -> Result<Self> {
        if values.ncols() != pair_index.len() {
            return Err(FcovError::mismatch(format!(
                "{} columns for {} pairs",
                values.ncols(),
                pair_index.len()
            )));
        }
        Ok(Self { values, pair_index })
    }

    /// Single-component series, mainly for tests and univariate use.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let n = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n) {
            return Err(FcovError::mismatch("columns of unequal length"));
        }
        let values = DMatrix::from_fn(n, columns.len(), |t, i| columns[i][t]);
        Ok(Self { values, pair_index: (0..columns.len()).map(|i| (i, i)).collect() })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn pair_index(&self) -> &[(usize, usize)] {
        &self.pair_index
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn column(&self, i: usize) -> &[f64] {
        column(&self.values, i)
    }
}

/// Products `eta_{t,l1} eta_{t,l2}` for the given pairs.
pub fn products_for_pairs(s: &ScoreMatrix, pairs: &[(usize, usize)]) -> Result<ScoreProductSeries> {
    let d = s.dim();
    if let Some((a, b)) = pairs.iter().find(|(a, b)| *a >= d || *b >= d) {
        return Err(FcovError::mismatch(format!("pair ({a}, {b}) outside {d} score columns")));
    }
    let n = s.n();
    let mut values = DMatrix::zeros(n, pairs.len());
    for (i, &(a, b)) in pairs.iter().enumerate() {
        let (ca, cb) = (s.column(a), s.column(b));
        let out = &mut values.as_mut_slice()[i * n..(i + 1) * n];
        for t in 0..n {
            out[t] = ca[t] * cb[t];
        }
    }
    ScoreProductSeries::new(values, pairs.to_vec())
}

/// Row `t` holds `vech[eta_t eta_t^T]`.
pub fn vech_products(s: &ScoreMatrix) -> ScoreProductSeries {
    products_for_pairs(s, &vech_pairs(s.dim())).expect("vech pairs are in range")
}

/// Absolute CUSUM `|sum_{t<=k} q_t - (k/n) sum_t q_t|` for `k = 1..=n`.
pub(crate) fn cusum_path(q: &[f64]) -> Vec<f64> {
    let n = q.len();
    let total: f64 = q.iter().sum();
    let mut acc = 0.0;
    q.iter()
        .enumerate()
        .map(|(t, v)| {
            acc += v;
            acc - (t + 1) as f64 / n as f64 * total
        })
        .collect()
}

/// `argmax_{1 <= k <= n-1} |sum_{t<=k} q(t) - (k/n) sum_t q(t)|`, smallest `k`
/// on ties. The returned `k` counts the observations before the change.
pub fn estimate_component_changepoint(q: &[f64]) -> usize {
    let path = cusum_path(q);
    let upto = q.len().saturating_sub(1).max(1);
    let mut best = 1;
    let mut best_val = f64::NEG_INFINITY;
    for (k, v) in path.iter().take(upto).enumerate() {
        if v.abs() > best_val {
            best_val = v.abs();
            best = k + 1;
        }
    }
    best
}

/// Interval `(k1, k2]`, `1 <= k1 < k2 <= n`, maximising
/// `|P(k2) - P(k1)|` over the CUSUM path `P`, found in one pass from running
/// prefix minima and maxima.
pub fn estimate_epidemic_interval(q: &[f64]) -> (usize, usize) {
    let n = q.len();
    if n < 2 {
        return (1, 1.max(n));
    }
    let path = cusum_path(q);
    let (mut min_i, mut max_i) = (0usize, 0usize);
    let mut best = (1usize, 2usize);
    let mut best_val = f64::NEG_INFINITY;
    for j in 1..n {
        let up = path[j] - path[min_i];
        let down = path[max_i] - path[j];
        let (val, i) = if up >= down { (up, min_i) } else { (down, max_i) };
        if val > best_val {
            best_val = val;
            best = (i + 1, j + 1);
        }
        if path[j] < path[min_i] {
            min_i = j;
        }
        if path[j] > path[max_i] {
            max_i = j;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Changepoint {
    /// Last pre-change index `k` (1-based).
    Single(usize),
    /// Deviation on `(k1, k2]`.
    Interval(usize, usize),
}

impl std::fmt::Display for Changepoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Changepoint::Single(k) => write!(f, "{k}"),
            Changepoint::Interval(a, b) => write!(f, "{a}-{b}"),
        }
    }
}

/// Change-corrected residuals of a product series.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSeries {
    values: DMatrix<f64>,
    changepoints: Vec<Changepoint>,
    pair_index: Vec<(usize, usize)>,
}

impl ResidualSeries {
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn changepoints(&self) -> &[Changepoint] {
        &self.changepoints
    }

    pub fn pair_index(&self) -> &[(usize, usize)] {
        &self.pair_index
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn column(&self, i: usize) -> &[f64] {
        column(&self.values, i)
    }

    pub(crate) fn labelled(mut self, pairs: &[(usize, usize)]) -> Self {
        self.pair_index = pairs.to_vec();
        self
    }
}

fn subtract_segment_mean(x: &mut [f64]) {
    if x.is_empty() {
        return;
    }
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter_mut().for_each(|v| *v -= m);
}

/// Correct one component in place and return the estimated change.
pub(crate) fn correct_column(x: &mut [f64], alternative: Alternative) -> Changepoint {
    match alternative {
        Alternative::Amoc => {
            let k = estimate_component_changepoint(x);
            let (pre, post) = x.split_at_mut(k.min(x.len()));
            subtract_segment_mean(pre);
            subtract_segment_mean(post);
            Changepoint::Single(k)
        }
        Alternative::Epidemic => {
            let (k1, k2) = estimate_epidemic_interval(x);
            let (pre, rest) = x.split_at_mut(k1.min(x.len()));
            let (inside, post) = rest.split_at_mut((k2 - k1).min(rest.len()));
            subtract_segment_mean(pre);
            subtract_segment_mean(inside);
            subtract_segment_mean(post);
            Changepoint::Interval(k1, k2)
        }
    }
}

/// Subtract pre- and post-change segment means per component, each
/// component with its own estimated change.
pub fn correct_residuals(q: &ScoreProductSeries) -> ResidualSeries {
    correct_residuals_for(q.values(), Alternative::Amoc).labelled(q.pair_index())
}

/// Three-segment analogue of [`correct_residuals`] for the epidemic
/// alternative.
pub fn correct_residuals_epidemic(q: &ScoreProductSeries) -> ResidualSeries {
    correct_residuals_for(q.values(), Alternative::Epidemic).labelled(q.pair_index())
}

pub(crate) fn correct_residuals_for(values: &DMatrix<f64>, alternative: Alternative) -> ResidualSeries {
    let n = values.nrows();
    let mut out = values.clone();
    let changepoints = if n == 0 {
        vec![Changepoint::Single(0); values.ncols()]
    } else {
        out.as_mut_slice().chunks_exact_mut(n).map(|c| correct_column(c, alternative)).collect()
    };
    let pair_index = (0..values.ncols()).map(|i| (i, i)).collect();
    ResidualSeries { values: out, changepoints, pair_index }
}

/// Diagonal long-run variance estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongRunDiag {
    pub variances: Vec<f64>,
    /// Block length of the estimator, `None` for model-based values.
    pub block_length: Option<usize>,
}

impl LongRunDiag {
    pub fn len(&self) -> usize {
        self.variances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variances.is_empty()
    }

    /// Number of components with positive variance.
    pub fn usable(&self) -> usize {
        self.variances.iter().filter(|v| **v > 0.0).count()
    }
}

/// `(1/n) sum_{j<L} (sum_{k<K} r(Kj + k))^2` for one component.
pub(crate) fn block_variance(r: &[f64], block: usize) -> f64 {
    let n = r.len();
    let blocks = n / block;
    let total: f64 = (0..blocks)
        .map(|j| {
            let s: f64 = r[j * block..(j + 1) * block].iter().sum();
            s * s
        })
        .sum();
    total / n as f64
}

/// Block estimator of the per-component long-run variance over `L = n / K`
/// disjoint blocks. Off-diagonal entries are zero by contract.
pub fn block_longrun_variance(r: &ResidualSeries, block: usize) -> Result<LongRunDiag> {
    block_longrun_variance_of(r.values(), block)
}

pub(crate) fn block_longrun_variance_of(values: &DMatrix<f64>, block: usize) -> Result<LongRunDiag> {
    let n = values.nrows();
    if block == 0 || block > n {
        return Err(FcovError::invalid(format!("block length {block} outside 1..={n}")));
    }
    let variances = values.as_slice().chunks_exact(n).map(|c| block_variance(c, block)).collect();
    Ok(LongRunDiag { variances, block_length: Some(block) })
}

/// Long-run covariance diagonal of vech products of independent Gaussian
/// scores: `2 lambda_l^2` on squares, `lambda_l1 lambda_l2` on cross terms.
pub fn gaussian_sigma_diag(lambdas: &[f64]) -> Result<LongRunDiag> {
    if let Some(l) = lambdas.iter().find(|l| !(**l >= 0.0)) {
        return Err(FcovError::invalid(format!("eigenvalue {l} is negative")));
    }
    let variances = vech_pairs(lambdas.len())
        .into_iter()
        .map(|(a, b)| if a == b { 2.0 * lambdas[a] * lambdas[a] } else { lambdas[a] * lambdas[b] })
        .collect();
    Ok(LongRunDiag { variances, block_length: None })
}
