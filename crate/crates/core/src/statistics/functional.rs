use nalgebra::DMatrix;

use super::engine::{evaluate_products, partial_sums_of, quadratic_path, Form, Weighting};
use super::preselect::PreselectionResult;
use super::{StatisticKind, StatisticValue};
use crate::error::{FcovError, Result};
use crate::fts::{demean, FunctionalSample};
use crate::scores::{products_for_pairs, ScoreMatrix, ScoreProductSeries};
use crate::Alternative;

/// Product series of the retained pairs, in retention order.
pub fn functional_products(scores: &ScoreMatrix, pairs: &PreselectionResult) -> Result<ScoreProductSeries> {
    if pairs.is_empty() {
        return Err(FcovError::Degenerate("no score pair survived preselection".into()));
    }
    products_for_pairs(scores, &pairs.pairs)
}

pub(crate) fn functional_weighting(weighted: bool, pairs: &PreselectionResult) -> Weighting {
    if weighted {
        Weighting::Offset(pairs.s11_sq)
    } else {
        Weighting::Unit
    }
}

/// Fully functional statistic over the retained pairs: `Omega^F` with unit
/// weights, `Omega^W` with weights `1 / (s^2_{1,1} + gamma^2_{l1,l2})`,
/// `gamma^2` from the block estimator with block length `block`.
pub fn omega_functional(
    scores: &ScoreMatrix,
    weighted: bool,
    pairs: &PreselectionResult,
    block: usize,
    alternative: Alternative,
) -> Result<StatisticValue> {
    let q = functional_products(scores, pairs)?;
    let e = evaluate_products(q.values(), functional_weighting(weighted, pairs), Form::Sum, alternative, block, true, false)?;
    Ok(StatisticValue {
        value: e.value,
        kind: if weighted { StatisticKind::FunctionalWeighted } else { StatisticKind::FunctionalUnweighted },
        alternative,
        changepoint_estimate: e.changepoint.expect("requested"),
        components_used: e.components_used,
    })
}

/// `T_k^F` (or `T_k^W`) for `k = 1..=n`.
pub fn functional_path(scores: &ScoreMatrix, weighted: bool, pairs: &PreselectionResult, block: usize) -> Result<Vec<f64>> {
    let q = functional_products(scores, pairs)?;
    let weights = super::engine::weights_for(q.values(), functional_weighting(weighted, pairs), Alternative::Amoc, block)?;
    Ok(quadratic_path(&partial_sums_of(q.values()), &weights))
}

/// `||S_k^F||^2` by direct quadrature of the bivariate partial-sum process
/// of products of the demeaned curves. `O(k G^2)`; meant for small grids.
pub fn functional_norm_oracle(x: &FunctionalSample, k: usize) -> Result<f64> {
    let n = x.n();
    if k == 0 || k > n {
        return Err(FcovError::invalid(format!("k = {k} outside 1..={n}")));
    }
    let xc = demean(x);
    let v = xc.values();
    let w = x.domain().weights();
    let g = x.grid_len();
    // mean of X_t(u) X_t(s) over all t
    let mean = v.transpose() * v / n as f64;
    let head = v.rows(0, k);
    let partial: DMatrix<f64> = head.transpose() * head - &mean * k as f64;
    let mut total = 0.0;
    for a in 0..g {
        for b in 0..g {
            total += w[a] * w[b] * partial[(a, b)] * partial[(a, b)];
        }
    }
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covspec::principal_components;
    use crate::fts::GridDomain;
    use crate::scores::compute_scores;
    use crate::statistics::preselect_pairs;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn sample(n: usize, g: usize, seed: u64) -> FunctionalSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = DMatrix::from_fn(n, g, |_, _| StandardNormal.sample(&mut rng));
        FunctionalSample::new(values, GridDomain::unit_interval(g).unwrap()).unwrap()
    }

    #[test]
    fn constant_scores_give_zero() {
        let s = ScoreMatrix::new(DMatrix::from_fn(20, 2, |t, l| if t % 2 == 0 { 1.0 + l as f64 } else { -1.0 }), "t");
        let pre = preselect_pairs(&s, 0.0, 0.0, 2, Alternative::Amoc).unwrap();
        // alternating scores have constant squares; cross products alternate
        let flat = ScoreMatrix::new(DMatrix::from_fn(20, 1, |t, _| if t % 2 == 0 { 1.0 } else { -1.0 }), "t");
        let pre_flat = preselect_pairs(&flat, 0.0, 0.0, 2, Alternative::Amoc).unwrap();
        assert_eq!(omega_functional(&flat, false, &pre_flat, 2, Alternative::Amoc).unwrap().value, 0.0);
        assert!(omega_functional(&s, false, &pre, 2, Alternative::Amoc).unwrap().value >= 0.0);
    }

    #[test]
    fn norm_oracle_vanishes_at_n() {
        let x = sample(12, 5, 1);
        assert!(functional_norm_oracle(&x, 12).unwrap().abs() < 1e-12);
        assert!(functional_norm_oracle(&x, 0).is_err());
    }

    #[test]
    fn norm_identity_double_counts_cross_pairs() {
        let x = sample(15, 6, 2);
        let e = principal_components(&x, None).unwrap();
        let s = compute_scores(&x, &e).unwrap();
        let all = preselect_pairs(&s, 0.0, 0.0, 3, Alternative::Amoc).unwrap();
        let diag = PreselectionResult {
            pairs: (0..s.dim()).map(|l| (l, l)).collect(),
            predicted_ratio: vec![0.0; s.dim()],
            refined_ratio: vec![0.0; s.dim()],
            gamma_sq: vec![0.0; s.dim()],
            ..all.clone()
        };
        let t_all = functional_path(&s, false, &all, 3).unwrap();
        let t_diag = functional_path(&s, false, &diag, 3).unwrap();
        for k in 1..=15 {
            let norm = functional_norm_oracle(&x, k).unwrap();
            let rhs = 2.0 * t_all[k - 1] - t_diag[k - 1];
            assert!((norm - rhs).abs() <= 1e-8 * norm.max(1e-12), "k={k}: {norm} vs {rhs}");
        }
    }

    #[test]
    fn single_mode_norm_equals_statistic_path() {
        let g = 7;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let amp: Vec<f64> = (0..10).map(|_| StandardNormal.sample(&mut rng)).collect();
        let values = DMatrix::from_fn(10, g, |t, j| amp[t] * (1.0 + j as f64 / 3.0));
        let x = FunctionalSample::new(values, GridDomain::unit_interval(g).unwrap()).unwrap();
        let e = principal_components(&x, None).unwrap();
        assert_eq!(e.dim(), 1);
        let s = compute_scores(&x, &e).unwrap();
        let pre = preselect_pairs(&s, 0.0, 0.0, 2, Alternative::Amoc).unwrap();
        let t = functional_path(&s, false, &pre, 2).unwrap();
        for k in 1..=10 {
            let norm = functional_norm_oracle(&x, k).unwrap();
            assert!((norm - t[k - 1]).abs() <= 1e-8 * norm.max(1e-12));
        }
    }
}
