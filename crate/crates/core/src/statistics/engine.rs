use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{StatisticKind, StatisticValue};
use crate::error::{FcovError, Result};
use crate::numeric::CompensatedSum;
use crate::scores::{
    block_longrun_variance_of, correct_residuals_for, estimate_epidemic_interval, Changepoint, LongRunDiag,
    ScoreProductSeries,
};
use crate::Alternative;

/// Brute-force pair scans are used up to this length.
pub(crate) const BRUTE_FORCE_MAX_N: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Form {
    /// Average of the quadratic forms over `k` (resp. pairs).
    Sum,
    /// Maximum of the quadratic forms.
    Max,
}

/// CUSUM process `S_k = n^{-1/2} (sum_{t<=k} q(t) - (k/n) sum_t q(t))`,
/// row `k - 1` for `k = 1..=n`.
pub fn partial_sums(q: &ScoreProductSeries) -> DMatrix<f64> {
    partial_sums_of(q.values())
}

pub(crate) fn partial_sums_of(values: &DMatrix<f64>) -> DMatrix<f64> {
    let n = values.nrows();
    let mut out = DMatrix::zeros(n, values.ncols());
    if n == 0 {
        return out;
    }
    let root = (n as f64).sqrt();
    for (src, dst) in values.as_slice().chunks_exact(n).zip(out.as_mut_slice().chunks_exact_mut(n)) {
        let mean = src.iter().copied().collect::<CompensatedSum>().value() / n as f64;
        let mut acc = CompensatedSum::new();
        for (t, v) in src.iter().enumerate() {
            acc.add(v - mean);
            dst[t] = acc.value() / root;
        }
    }
    out
}

/// Output of a statistic evaluation.
#[derive(Debug, Clone)]
pub(crate) struct Evaluation {
    pub value: f64,
    pub changepoint: Option<Changepoint>,
    /// Per-component share of `value` (sum form) or per-component maximum.
    pub contributions: Option<Vec<f64>>,
    pub components_used: usize,
}

/// Per-component weights `1 / D(i, i)`, zero for components with no
/// positive variance.
pub(crate) fn inverse_weights(d: &LongRunDiag) -> Vec<f64> {
    d.variances.iter().map(|v| if *v > 0.0 && v.is_finite() { 1.0 / v } else { 0.0 }).collect()
}

/// `T_k = sum_i w_i S_k(i)^2`, `k = 1..=n`.
pub fn quadratic_path(s: &DMatrix<f64>, weights: &[f64]) -> Vec<f64> {
    let n = s.nrows();
    let mut acc = vec![CompensatedSum::new(); n];
    for (col, w) in s.as_slice().chunks_exact(n.max(1)).zip(weights) {
        if *w == 0.0 {
            continue;
        }
        for (a, v) in acc.iter_mut().zip(col) {
            a.add(w * v * v);
        }
    }
    acc.iter().map(CompensatedSum::value).collect()
}

fn argmax(values: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.iter().enumerate() {
        if *v > best.1 {
            best = (i, *v);
        }
    }
    best
}

/// Rows `sqrt(w) * S_k` laid out contiguously per `k`, used components only.
fn weighted_rows(s: &DMatrix<f64>, weights: &[f64]) -> (Vec<f64>, usize) {
    let n = s.nrows();
    let used: Vec<usize> = (0..s.ncols()).filter(|&i| weights[i] > 0.0).collect();
    let m = used.len();
    let mut rows = vec![0.0; n * m];
    for (c, &i) in used.iter().enumerate() {
        let sw = weights[i].sqrt();
        let col = &s.as_slice()[i * n..(i + 1) * n];
        for k in 0..n {
            rows[k * m + c] = sw * col[k];
        }
    }
    (rows, m)
}

fn pair_form(rows: &[f64], m: usize, k1: usize, k2: usize) -> f64 {
    let (a, b) = (&rows[k1 * m..(k1 + 1) * m], &rows[k2 * m..(k2 + 1) * m]);
    a.iter().zip(b).map(|(x, y)| (y - x) * (y - x)).sum()
}

/// Largest `T_{k1,k2}` over `1 <= k1 < k2 <= n` by exhaustive scan.
fn best_pair_brute(s: &DMatrix<f64>, weights: &[f64]) -> ((usize, usize), f64) {
    let n = s.nrows();
    let (rows, m) = weighted_rows(s, weights);
    let mut best = ((1, 2.min(n)), f64::NEG_INFINITY);
    for k1 in 0..n {
        for k2 in (k1 + 1)..n {
            let v = pair_form(&rows, m, k1, k2);
            if v > best.1 {
                best = ((k1 + 1, k2 + 1), v);
            }
        }
    }
    best
}

/// Best pair among each component's own maximising interval.
fn best_pair_heuristic(s: &DMatrix<f64>, weights: &[f64]) -> ((usize, usize), f64) {
    let n = s.nrows();
    let (rows, m) = weighted_rows(s, weights);
    let mut best = ((1, 2.min(n)), f64::NEG_INFINITY);
    for (i, col) in s.as_slice().chunks_exact(n).enumerate() {
        if weights[i] <= 0.0 {
            continue;
        }
        // the interval estimator works on the increments of the path
        let incr: Vec<f64> = (0..n).map(|k| col[k] - if k > 0 { col[k - 1] } else { 0.0 }).collect();
        let (k1, k2) = estimate_epidemic_interval(&incr);
        let v = pair_form(&rows, m, k1 - 1, k2 - 1);
        if v > best.1 {
            best = ((k1, k2), v);
        }
    }
    best
}

/// Evaluate a weighted CUSUM statistic on a partial-sum matrix.
///
/// Components with zero weight are excluded. Epidemic sums use
/// `sum_{k1<k2} (a_{k2} - a_{k1})^2 = n sum_k a_k^2 - (sum_k a_k)^2` per
/// component and are normalised by `n^2`.
pub(crate) fn evaluate(
    s: &DMatrix<f64>,
    weights: &[f64],
    form: Form,
    alternative: Alternative,
    want_changepoint: bool,
    want_contributions: bool,
) -> Result<Evaluation> {
    let n = s.nrows();
    let used = weights.iter().filter(|w| **w > 0.0).count();
    if used == 0 {
        return Err(FcovError::Degenerate("no component has positive long-run variance".into()));
    }
    if n < 2 {
        return Err(FcovError::invalid(format!("statistics need n >= 2, got {n}")));
    }
    let nf = n as f64;
    let columns = || s.as_slice().chunks_exact(n).zip(weights);
    match (form, alternative) {
        (Form::Sum, Alternative::Amoc) => {
            let contributions: Vec<f64> = columns()
                .map(|(c, w)| if *w > 0.0 { w * c.iter().map(|v| v * v).collect::<CompensatedSum>().value() / nf } else { 0.0 })
                .collect();
            let value = contributions.iter().copied().collect::<CompensatedSum>().value();
            let changepoint = want_changepoint.then(|| {
                let (k, _) = argmax(&quadratic_path(s, weights));
                Changepoint::Single(k + 1)
            });
            Ok(Evaluation { value, changepoint, contributions: want_contributions.then_some(contributions), components_used: used })
        }
        (Form::Sum, Alternative::Epidemic) => {
            let contributions: Vec<f64> = columns()
                .map(|(c, w)| {
                    if *w <= 0.0 {
                        return 0.0;
                    }
                    let sq = c.iter().map(|v| v * v).collect::<CompensatedSum>().value();
                    let lin = c.iter().copied().collect::<CompensatedSum>().value();
                    w * (nf * sq - lin * lin).max(0.0) / (nf * nf)
                })
                .collect();
            let value = contributions.iter().copied().collect::<CompensatedSum>().value();
            let changepoint = want_changepoint.then(|| {
                let ((a, b), _) = if n <= BRUTE_FORCE_MAX_N { best_pair_brute(s, weights) } else { best_pair_heuristic(s, weights) };
                Changepoint::Interval(a, b)
            });
            Ok(Evaluation { value, changepoint, contributions: want_contributions.then_some(contributions), components_used: used })
        }
        (Form::Max, Alternative::Amoc) => {
            let (k, value) = argmax(&quadratic_path(s, weights));
            let contributions = want_contributions.then(|| {
                columns().map(|(c, w)| c.iter().map(|v| w * v * v).fold(0.0, f64::max)).collect()
            });
            Ok(Evaluation { value, changepoint: Some(Changepoint::Single(k + 1)), contributions, components_used: used })
        }
        (Form::Max, Alternative::Epidemic) => {
            let ((a, b), value) = best_pair_brute(s, weights);
            let contributions = want_contributions.then(|| {
                columns()
                    .map(|(c, w)| {
                        let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
                        w * (hi - lo) * (hi - lo)
                    })
                    .collect()
            });
            Ok(Evaluation { value, changepoint: Some(Changepoint::Interval(a, b)), contributions, components_used: used })
        }
    }
}

/// How per-component weights are derived from change-corrected residuals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Weighting {
    /// `1 / D(i, i)` from the block long-run variance.
    LongRun,
    /// Unit weights.
    Unit,
    /// `1 / (offset + gamma_i^2)` with `gamma_i^2` the block long-run variance.
    Offset(f64),
}

/// Weights for a product series under `weighting`, estimating block
/// long-run variances from residuals corrected for `alternative`.
pub(crate) fn weights_for(values: &DMatrix<f64>, weighting: Weighting, alternative: Alternative, block: usize) -> Result<Vec<f64>> {
    if weighting == Weighting::Unit {
        return Ok(vec![1.0; values.ncols()]);
    }
    let resid = correct_residuals_for(values, alternative);
    let d = block_longrun_variance_of(resid.values(), block)?;
    Ok(match weighting {
        Weighting::LongRun => inverse_weights(&d),
        Weighting::Offset(c) => d.variances.iter().map(|g| if c + g > 0.0 { 1.0 / (c + g) } else { 0.0 }).collect(),
        Weighting::Unit => unreachable!(),
    })
}

/// Statistic of a raw product series: residual correction, block weights,
/// partial sums and evaluation in one step. The bootstrap calls this on
/// every replicate.
pub(crate) fn evaluate_products(
    values: &DMatrix<f64>,
    weighting: Weighting,
    form: Form,
    alternative: Alternative,
    block: usize,
    want_changepoint: bool,
    want_contributions: bool,
) -> Result<Evaluation> {
    let weights = weights_for(values, weighting, alternative, block)?;
    let s = partial_sums_of(values);
    evaluate(&s, &weights, form, alternative, want_changepoint, want_contributions)
}

fn check_dims(s: &DMatrix<f64>, d: &LongRunDiag) -> Result<()> {
    if s.ncols() != d.len() {
        return Err(FcovError::mismatch(format!("{} partial-sum columns, {} variances", s.ncols(), d.len())));
    }
    Ok(())
}

fn finish(e: Evaluation, kind: StatisticKind, alternative: Alternative) -> StatisticValue {
    StatisticValue {
        value: e.value,
        kind,
        alternative,
        changepoint_estimate: e.changepoint.expect("change point requested"),
        components_used: e.components_used,
    }
}

/// `(1/n) sum_k S_k^T D^{-1} S_k` with change point `argmax_k S_k^T D^{-1} S_k`.
pub fn omega_amoc(s: &DMatrix<f64>, d: &LongRunDiag) -> Result<StatisticValue> {
    check_dims(s, d)?;
    let e = evaluate(s, &inverse_weights(d), Form::Sum, Alternative::Amoc, true, false)?;
    Ok(finish(e, StatisticKind::MultivariateSum, Alternative::Amoc))
}

/// `(1/n^2) sum_{k1<k2} S_{k1,k2}^T D^{-1} S_{k1,k2}`, `S_{k1,k2} = S_{k2} - S_{k1}`.
pub fn omega_epidemic(s: &DMatrix<f64>, d: &LongRunDiag) -> Result<StatisticValue> {
    check_dims(s, d)?;
    let e = evaluate(s, &inverse_weights(d), Form::Sum, Alternative::Epidemic, true, false)?;
    Ok(finish(e, StatisticKind::MultivariateSum, Alternative::Epidemic))
}

/// `max_k S_k^T D^{-1} S_k`.
pub fn lambda_max(s: &DMatrix<f64>, d: &LongRunDiag) -> Result<StatisticValue> {
    check_dims(s, d)?;
    let e = evaluate(s, &inverse_weights(d), Form::Max, Alternative::Amoc, true, false)?;
    Ok(finish(e, StatisticKind::MultivariateMax, Alternative::Amoc))
}

/// `max_{k1<k2} S_{k1,k2}^T D^{-1} S_{k1,k2}`; exhaustive, `O(n^2)` pairs.
pub fn lambda_max_epidemic(s: &DMatrix<f64>, d: &LongRunDiag) -> Result<StatisticValue> {
    check_dims(s, d)?;
    let e = evaluate(s, &inverse_weights(d), Form::Max, Alternative::Epidemic, true, false)?;
    Ok(finish(e, StatisticKind::MultivariateMax, Alternative::Epidemic))
}

/// Whiten partial sums by the Cholesky factor of a full long-run covariance.
fn whiten(s: &DMatrix<f64>, sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if sigma.nrows() != s.ncols() || sigma.ncols() != s.ncols() {
        return Err(FcovError::mismatch("long-run covariance does not match the partial sums"));
    }
    let chol = sigma
        .clone()
        .cholesky()
        .ok_or_else(|| FcovError::Degenerate("long-run covariance is not positive definite".into()))?;
    // rows of S L^{-T}: solve L y = s_k
    let st = s.transpose();
    let y = chol.l().solve_lower_triangular(&st).expect("triangular factor is invertible");
    Ok(y.transpose())
}

/// Sum statistic with a full (non-diagonal) long-run covariance matrix.
pub fn omega_amoc_full(s: &DMatrix<f64>, sigma: &DMatrix<f64>) -> Result<StatisticValue> {
    let z = whiten(s, sigma)?;
    let e = evaluate(&z, &vec![1.0; z.ncols()], Form::Sum, Alternative::Amoc, true, false)?;
    Ok(finish(e, StatisticKind::MultivariateSum, Alternative::Amoc))
}

pub fn omega_epidemic_full(s: &DMatrix<f64>, sigma: &DMatrix<f64>) -> Result<StatisticValue> {
    let z = whiten(s, sigma)?;
    let e = evaluate(&z, &vec![1.0; z.ncols()], Form::Sum, Alternative::Epidemic, true, false)?;
    Ok(finish(e, StatisticKind::MultivariateSum, Alternative::Epidemic))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scores::{block_longrun_variance, correct_residuals, gaussian_sigma_diag};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn series(cols: &[Vec<f64>]) -> ScoreProductSeries {
        ScoreProductSeries::from_columns(cols).unwrap()
    }

    fn unit_diag(m: usize) -> LongRunDiag {
        LongRunDiag { variances: vec![1.0; m], block_length: None }
    }

    #[test]
    fn constant_input_gives_zero_partial_sums() {
        let s = partial_sums(&series(&[vec![2.5; 12], vec![-1.0; 12]]));
        assert!(s.amax() == 0.0);
        let d = unit_diag(2);
        for v in [omega_amoc(&s, &d), omega_epidemic(&s, &d), lambda_max(&s, &d), lambda_max_epidemic(&s, &d)] {
            assert_eq!(v.unwrap().value, 0.0);
        }
    }

    #[test]
    fn two_point_partial_sum() {
        let s = partial_sums(&series(&[vec![0.0, 2.0]]));
        assert!((s[(0, 0)] + 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert!(s[(1, 0)].abs() < 1e-15);
    }

    #[test]
    fn last_partial_sum_vanishes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cols: Vec<Vec<f64>> = (0..4).map(|_| (0..77).map(|_| 1e3 * rng.random::<f64>()).collect()).collect();
        let s = partial_sums(&series(&cols));
        for i in 0..4 {
            assert!(s[(76, i)].abs() <= 1e-10);
        }
    }

    #[test]
    fn epidemic_identity_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cols: Vec<Vec<f64>> = (0..3).map(|_| (0..50).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
        let s = partial_sums(&series(&cols));
        let d = LongRunDiag { variances: vec![1.0, 2.0, 0.5], block_length: None };
        let fast = omega_epidemic(&s, &d).unwrap().value;
        let mut brute = 0.0;
        for k1 in 0..50 {
            for k2 in (k1 + 1)..50 {
                for i in 0..3 {
                    brute += (s[(k2, i)] - s[(k1, i)]).powi(2) / d.variances[i];
                }
            }
        }
        brute /= 2500.0;
        assert!((fast - brute).abs() <= 1e-9 * brute);
    }

    #[test]
    fn max_dominates_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cols: Vec<Vec<f64>> = (0..2).map(|_| (0..40).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
        let s = partial_sums(&series(&cols));
        let d = unit_diag(2);
        assert!(lambda_max(&s, &d).unwrap().value >= omega_amoc(&s, &d).unwrap().value);
        assert!(lambda_max_epidemic(&s, &d).unwrap().value >= lambda_max(&s, &d).unwrap().value - 1e-12);
    }

    #[test]
    fn step_is_located_by_all_forms() {
        let q: Vec<f64> = (0..60).map(|t| if t < 22 { 0.0 } else { 1.0 }).collect();
        let s = partial_sums(&series(&[q]));
        let d = unit_diag(1);
        assert_eq!(lambda_max(&s, &d).unwrap().changepoint_estimate, Changepoint::Single(22));
        assert_eq!(omega_amoc(&s, &d).unwrap().changepoint_estimate, Changepoint::Single(22));
        // an AMOC step is an interval reaching the end, here the pair (22, 60)
        assert_eq!(lambda_max_epidemic(&s, &d).unwrap().changepoint_estimate, Changepoint::Interval(22, 60));
    }

    #[test]
    fn epidemic_bump_is_located() {
        let q: Vec<f64> = (0..80).map(|t| if (20..50).contains(&t) { 1.0 } else { 0.0 }).collect();
        let s = partial_sums(&series(&[q]));
        let v = omega_epidemic(&s, &unit_diag(1)).unwrap();
        assert_eq!(v.changepoint_estimate, Changepoint::Interval(20, 50));
    }

    #[test]
    fn degenerate_components_are_excluded() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a: Vec<f64> = (0..30).map(|_| StandardNormal.sample(&mut rng)).collect();
        let s = partial_sums(&series(&[a.clone(), vec![0.0; 30]]));
        let d = LongRunDiag { variances: vec![1.0, 0.0], block_length: Some(3) };
        let v = omega_amoc(&s, &d).unwrap();
        assert_eq!(v.components_used, 1);
        let only = omega_amoc(&partial_sums(&series(&[a])), &unit_diag(1)).unwrap();
        assert!((v.value - only.value).abs() < 1e-15);
        let none = LongRunDiag { variances: vec![0.0, 0.0], block_length: Some(3) };
        assert!(matches!(omega_amoc(&s, &none), Err(FcovError::Degenerate(_))));
    }

    #[test]
    fn scale_invariance_with_reestimated_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q: Vec<f64> = (0..100).map(|_| Distribution::<f64>::sample(&StandardNormal, &mut rng).powi(2)).collect();
        let stat = |c: f64| {
            let p = series(&[q.iter().map(|v| c * v).collect()]);
            let d = block_longrun_variance(&correct_residuals(&p), 5).unwrap();
            omega_amoc(&partial_sums(&p), &d).unwrap().value
        };
        let base = stat(1.0);
        for c in [1e-3, 1e3] {
            assert!((stat(c) - base).abs() <= 1e-10 * base);
        }
    }

    #[test]
    fn full_matrix_with_diagonal_sigma_matches_diagonal_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cols: Vec<Vec<f64>> = (0..3).map(|_| (0..40).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
        let s = partial_sums(&series(&cols));
        let d = gaussian_sigma_diag(&[2.0, 1.0]).unwrap();
        let sigma = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(d.variances.clone()));
        let a = omega_amoc(&s, &d).unwrap().value;
        let b = omega_amoc_full(&s, &sigma).unwrap().value;
        assert!((a - b).abs() < 1e-12 * a);
        let a = omega_epidemic(&s, &d).unwrap().value;
        let b = omega_epidemic_full(&s, &sigma).unwrap().value;
        assert!((a - b).abs() < 1e-12 * a);
        assert!(omega_amoc_full(&s, &DMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn heuristic_pair_agrees_on_clear_bump() {
        let q: Vec<f64> = (0..120).map(|t| if (40..90).contains(&t) { 1.0 } else { 0.0 }).collect();
        let s = partial_sums(&series(&[q]));
        let (pair, _) = best_pair_heuristic(&s, &[1.0]);
        let (brute, _) = best_pair_brute(&s, &[1.0]);
        assert_eq!(pair, brute);
    }
}
