use crate::error::{FcovError, Result};
use crate::scores::{block_variance, correct_column, ScoreMatrix};
use crate::Alternative;

pub const DEFAULT_EPS1: f64 = 0.0005;
pub const DEFAULT_EPS2: f64 = 0.0025;

/// Score pairs retained for the functional statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct PreselectionResult {
    /// Retained pairs `(l1, l2)`, `l1 <= l2`, by descending predicted ratio.
    pub pairs: Vec<(usize, usize)>,
    /// Gaussian-approximation ratio of each retained pair.
    pub predicted_ratio: Vec<f64>,
    /// Nonparametric ratio `s^2_{l1,l2} / s^2_{1,1}` of each retained pair.
    pub refined_ratio: Vec<f64>,
    /// Block long-run variance of each retained product residual.
    pub gamma_sq: Vec<f64>,
    /// Residual variance of the first squared score.
    pub s11_sq: f64,
    pub thresholds: (f64, f64),
    /// Number of pairs passing the first threshold.
    pub candidates: usize,
}

impl PreselectionResult {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

fn residual_variance(mut x: Vec<f64>, alternative: Alternative) -> (Vec<f64>, f64) {
    correct_column(&mut x, alternative);
    let n = x.len();
    let v = x.iter().map(|r| r * r).sum::<f64>() / (n as f64 - 1.0);
    (x, v)
}

/// Two-stage pair selection.
///
/// Stage one predicts each pair's product variance relative to the first
/// squared score from single-score residual variances `s_l^2`
/// (`s_a s_b / (2 s_1^2)` off the diagonal, `s_a^2 / s_1^2` on it) and keeps
/// pairs with ratio `>= eps1`. Stage two measures the ratio from the
/// change-corrected product residuals and keeps pairs with ratio `>= eps2`.
pub fn preselect_pairs(
    scores: &ScoreMatrix,
    eps1: f64,
    eps2: f64,
    block: usize,
    alternative: Alternative,
) -> Result<PreselectionResult> {
    let n = scores.n();
    let d = scores.dim();
    if d == 0 || n < 2 {
        return Err(FcovError::invalid("preselection needs a non-empty score matrix with n >= 2"));
    }
    if !(eps1 >= 0.0 && eps2 >= 0.0) || !eps1.is_finite() || !eps2.is_finite() {
        return Err(FcovError::invalid(format!("thresholds must be finite and >= 0, got ({eps1}, {eps2})")));
    }
    if block == 0 || block > n {
        return Err(FcovError::invalid(format!("block length {block} outside 1..={n}")));
    }
    let s: Vec<f64> = (0..d).map(|l| residual_variance(scores.column(l).to_vec(), alternative).1.sqrt()).collect();
    let s1 = s[0] * s[0];
    if !(s1 > 0.0) {
        return Err(FcovError::Degenerate("leading score has zero residual variance".into()));
    }

    // stage one: walk pairs in order of decreasing s, stopping once the
    // product bound drops below eps1
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    let mut candidates: Vec<((usize, usize), f64)> = Vec::new();
    for (ia, &a) in order.iter().enumerate() {
        let diag = s[a] * s[a] / s1;
        if diag >= eps1 {
            candidates.push(((a, a), diag));
        }
        let mut any = false;
        for &b in &order[ia + 1..] {
            let r = s[a] * s[b] / (2.0 * s1);
            if r < eps1 {
                break;
            }
            any = true;
            candidates.push(((a.min(b), a.max(b)), r));
        }
        if !any && diag < eps1 && s[a] * s[a] / (2.0 * s1) < eps1 {
            break;
        }
    }
    candidates.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));

    let product = |a: usize, b: usize| -> Vec<f64> {
        scores.column(a).iter().zip(scores.column(b)).map(|(x, y)| x * y).collect()
    };
    let (_, s11_sq) = residual_variance(product(0, 0), alternative);

    let mut out = PreselectionResult {
        pairs: Vec::new(),
        predicted_ratio: Vec::new(),
        refined_ratio: Vec::new(),
        gamma_sq: Vec::new(),
        s11_sq,
        thresholds: (eps1, eps2),
        candidates: candidates.len(),
    };
    for ((a, b), predicted) in candidates {
        let (resid, var) = residual_variance(product(a, b), alternative);
        let ratio = if s11_sq > 0.0 {
            var / s11_sq
        } else if var > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        if ratio >= eps2 {
            out.pairs.push((a, b));
            out.predicted_ratio.push(predicted);
            out.refined_ratio.push(ratio);
            out.gamma_sq.push(block_variance(&resid, block));
        }
    }
    Ok(out)
}
