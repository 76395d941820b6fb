use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{FcovError, Result};
use crate::fts::{demean, FunctionalSample, GridDomain};

/// Eigenvalues below `RANK_TOLERANCE * lambda_1` count as numerically zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Empirical covariance kernel evaluated on the grid.
#[derive(Debug, Clone)]
pub struct CovarianceKernel {
    values: DMatrix<f64>,
    domain: GridDomain,
}

impl CovarianceKernel {
    pub fn new(values: DMatrix<f64>, domain: GridDomain) -> Result<Self> {
        let g = domain.len();
        if values.nrows() != g || values.ncols() != g {
            return Err(FcovError::mismatch(format!(
                "{}x{} kernel on a {g}-node grid",
                values.nrows(),
                values.ncols()
            )));
        }
        let scale = values.amax().max(1.0);
        for i in 0..g {
            for j in (i + 1)..g {
                if (values[(i, j)] - values[(j, i)]).abs() > 1e-12 * scale {
                    return Err(FcovError::invalid("covariance kernel is not symmetric"));
                }
            }
        }
        Ok(Self { values, domain })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn domain(&self) -> &GridDomain {
        &self.domain
    }

    /// Quadrature integral of the diagonal, `int c(u, u) du`.
    pub fn trace(&self) -> f64 {
        self.domain.weights().iter().enumerate().map(|(j, w)| w * self.values[(j, j)]).sum()
    }
}

/// `(1/n) sum_t (X_t - mean)(X_t - mean)^T` on the grid.
pub fn empirical_covariance(x: &FunctionalSample) -> Result<CovarianceKernel> {
    let n = x.n();
    if n < 2 {
        return Err(FcovError::invalid(format!("empirical covariance needs n >= 2, got {n}")));
    }
    let c = demean(x);
    let mut k = c.values().transpose() * c.values();
    k /= n as f64;
    k.fill_lower_triangle_with_upper_triangle();
    Ok(CovarianceKernel { values: k, domain: x.domain().clone() })
}

/// Leading eigenpairs of a covariance operator, eigenfunctions orthonormal
/// under the grid quadrature.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    eigenvalues: Vec<f64>,
    eigenfunctions: DMatrix<f64>,
    explained: Vec<f64>,
    domain: GridDomain,
    degenerate: bool,
    truncated: bool,
}

impl EigenSystem {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `G x d`, one eigenfunction per column.
    pub fn eigenfunctions(&self) -> &DMatrix<f64> {
        &self.eigenfunctions
    }

    pub fn explained(&self) -> &[f64] {
        &self.explained
    }

    pub fn domain(&self) -> &GridDomain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Some retained eigenvalue gap fell below `RANK_TOLERANCE * lambda_1`.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Fewer eigenpairs than requested were returned because the request
    /// exceeded the numerical rank.
    pub fn is_truncated(&self) -> bool {
        self.truncated
    }

    /// Keep the leading `d` components.
    pub fn truncate(&self, d: usize) -> EigenSystem {
        let d = d.min(self.dim());
        EigenSystem {
            eigenvalues: self.eigenvalues[..d].to_vec(),
            eigenfunctions: self.eigenfunctions.columns(0, d).into_owned(),
            explained: self.explained[..d].to_vec(),
            domain: self.domain.clone(),
            degenerate: self.degenerate,
            truncated: self.truncated,
        }
    }

    /// Drop components with eigenvalue below `RANK_TOLERANCE * lambda_1`.
    pub fn positive_part(&self) -> EigenSystem {
        let top = self.eigenvalues.first().copied().unwrap_or(0.0);
        let keep = self.eigenvalues.iter().take_while(|l| **l > RANK_TOLERANCE * top && **l > 0.0).count();
        self.truncate(keep)
    }

    /// Assemble from precomputed parts; eigenvalues must be sorted descending.
    pub fn from_parts(eigenvalues: Vec<f64>, eigenfunctions: DMatrix<f64>, domain: GridDomain) -> Result<Self> {
        if eigenfunctions.ncols() != eigenvalues.len() || eigenfunctions.nrows() != domain.len() {
            return Err(FcovError::mismatch("eigenfunction matrix does not match eigenvalues/grid"));
        }
        if eigenvalues.windows(2).any(|w| w[1] > w[0]) {
            return Err(FcovError::invalid("eigenvalues must be sorted descending"));
        }
        let total: f64 = eigenvalues.iter().sum();
        let explained = eigenvalues.iter().map(|l| if total > 0.0 { l / total } else { 0.0 }).collect();
        let degenerate = has_tie(&eigenvalues);
        Ok(Self { eigenvalues, eigenfunctions, explained, domain, degenerate, truncated: false })
    }
}

fn has_tie(lambdas: &[f64]) -> bool {
    let top = lambdas.first().copied().unwrap_or(0.0);
    let tol = RANK_TOLERANCE * top;
    lambdas.windows(2).any(|w| w[1] > tol && w[0] - w[1] < tol)
}

/// Flip each column so its first non-negligible coordinate is positive.
fn align_signs(v: &mut DMatrix<f64>) {
    for mut col in v.column_iter_mut() {
        let scale = col.amax();
        if scale == 0.0 {
            continue;
        }
        if let Some(first) = col.iter().copied().find(|c| c.abs() > 1e-10 * scale) {
            if first < 0.0 {
                col.neg_mut();
            }
        }
    }
}

/// Eigenpairs of a symmetric matrix sorted by descending eigenvalue.
pub(crate) fn sorted_symmetric_eigen(a: DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    if n == 0 {
        return Ok((Vec::new(), DMatrix::zeros(0, 0)));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(FcovError::Eigen("matrix contains non-finite entries".into()));
    }
    let eig = SymmetricEigen::try_new(a, f64::EPSILON, 0)
        .ok_or_else(|| FcovError::Eigen("symmetric eigen-solver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

/// Top-`d` eigenpairs of the integral operator `f -> int c(., s) f(s) ds`.
///
/// The operator is symmetrised as `W^{1/2} C W^{1/2}` and eigenfunctions are
/// mapped back by `W^{-1/2}`, so they are orthonormal under the quadrature.
pub fn eigendecompose(c: &CovarianceKernel, d: usize) -> Result<EigenSystem> {
    let g = c.domain.len();
    if d > g {
        return Err(FcovError::invalid(format!("requested {d} eigenpairs on a {g}-node grid")));
    }
    let sw: Vec<f64> = c.domain.weights().iter().map(|w| w.sqrt()).collect();
    let a = DMatrix::from_fn(g, g, |i, j| sw[i] * c.values[(i, j)] * sw[j]);
    let (values, vectors) = sorted_symmetric_eigen(a)?;
    let trace: f64 = values.iter().map(|l| l.max(0.0)).sum();
    let mut funcs = DMatrix::from_fn(g, d, |i, l| vectors[(i, l)] / sw[i]);
    align_signs(&mut funcs);
    let top = values.first().copied().unwrap_or(0.0).max(0.0);
    let eigenvalues: Vec<f64> = values[..d]
        .iter()
        .map(|l| if *l < 0.0 && *l > -1e-10 * top.max(1.0) { 0.0 } else { l.max(0.0) })
        .collect();
    let explained = eigenvalues.iter().map(|l| if trace > 0.0 { l / trace } else { 0.0 }).collect();
    let check: Vec<f64> = values.iter().take(d + 1).map(|l| l.max(0.0)).collect();
    Ok(EigenSystem {
        degenerate: has_tie(&check),
        eigenvalues,
        eigenfunctions: funcs,
        explained,
        domain: c.domain.clone(),
        truncated: false,
    })
}

/// Eigenpairs through the `n x n` temporal Gram matrix
/// `(1/n) Xc W Xc^T`, back-transformed by `v = Xc^T a / sqrt(n mu)`.
///
/// Only eigenpairs above the numerical rank are returned; if fewer than `d`
/// survive, the result is flagged as truncated.
pub fn eigendecompose_gram(x: &FunctionalSample, d: usize) -> Result<EigenSystem> {
    let n = x.n();
    if n < 2 {
        return Err(FcovError::invalid(format!("Gram eigenanalysis needs n >= 2, got {n}")));
    }
    if d > n - 1 {
        return Err(FcovError::invalid(format!("requested {d} eigenpairs from n = {n} observations")));
    }
    let xc = demean(x);
    let w = x.domain().weights();
    let sw: Vec<f64> = w.iter().map(|w| w.sqrt()).collect();
    let mut scaled = xc.values().clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= sw[j];
    }
    let mut gram = &scaled * scaled.transpose();
    gram /= n as f64;
    gram.fill_lower_triangle_with_upper_triangle();
    let trace: f64 = gram.trace();
    let (values, vectors) = sorted_symmetric_eigen(gram)?;
    let top = values.first().copied().unwrap_or(0.0);
    let rank = values.iter().take_while(|l| **l > RANK_TOLERANCE * top && **l > 0.0).count();
    let keep = d.min(rank);
    let a = vectors.columns(0, keep).into_owned();
    let mut funcs = xc.values().transpose() * a;
    for (l, mut col) in funcs.column_iter_mut().enumerate() {
        col /= (n as f64 * values[l]).sqrt();
    }
    align_signs(&mut funcs);
    let eigenvalues: Vec<f64> = values[..keep].to_vec();
    let explained = eigenvalues.iter().map(|l| if trace > 0.0 { l / trace } else { 0.0 }).collect();
    let check: Vec<f64> = values.iter().take(keep + 1).map(|l| l.max(0.0)).collect();
    Ok(EigenSystem {
        degenerate: has_tie(&check),
        eigenvalues,
        eigenfunctions: funcs,
        explained,
        domain: x.domain().clone(),
        truncated: keep < d,
    })
}

/// Leading principal components of a sample, choosing the spatial or the
/// temporal formulation by whichever matrix is smaller. `None` keeps every
/// component with a numerically positive eigenvalue.
pub fn principal_components(x: &FunctionalSample, d: Option<usize>) -> Result<EigenSystem> {
    let n = x.n();
    let g = x.grid_len();
    let max_rank = g.min(n.saturating_sub(1));
    let want = d.unwrap_or(max_rank);
    let eig = if g <= n {
        let want = want.min(g);
        eigendecompose(&empirical_covariance(x)?, want)?.positive_part()
    } else {
        eigendecompose_gram(x, want.min(n.saturating_sub(1)))?
    };
    let truncated = d.is_some_and(|d| eig.dim() < d);
    Ok(EigenSystem { truncated: eig.truncated || truncated, ..eig })
}
