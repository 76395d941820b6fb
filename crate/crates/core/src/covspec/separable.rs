use nalgebra::DMatrix;

use super::eigen::{eigendecompose, CovarianceKernel, EigenSystem, RANK_TOLERANCE};
use crate::error::{FcovError, Result};
use crate::fts::{GridDomain, VolumeSeries};

/// Per-axis eigensystems of a separable covariance and the tensor-product
/// basis they generate.
#[derive(Debug, Clone)]
pub struct SeparableEigenSystem {
    axes: [EigenSystem; 3],
    tensor_index: Vec<[usize; 3]>,
    tensor_eigenvalue: Vec<f64>,
    dims: [usize; 3],
}

impl SeparableEigenSystem {
    fn from_axes(axes: [EigenSystem; 3], dims: [usize; 3]) -> Self {
        let mut entries = Vec::new();
        for a in 0..axes[0].dim() {
            for b in 0..axes[1].dim() {
                for c in 0..axes[2].dim() {
                    let lambda = axes[0].eigenvalues()[a] * axes[1].eigenvalues()[b] * axes[2].eigenvalues()[c];
                    entries.push(([a, b, c], lambda));
                }
            }
        }
        entries.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
        let (tensor_index, tensor_eigenvalue) = entries.into_iter().unzip();
        Self { axes, tensor_index, tensor_eigenvalue, dims }
    }

    pub fn axes(&self) -> &[EigenSystem; 3] {
        &self.axes
    }

    /// Axis-component triple of each tensor function, in projection order.
    pub fn tensor_index(&self) -> &[[usize; 3]] {
        &self.tensor_index
    }

    pub fn tensor_eigenvalues(&self) -> &[f64] {
        &self.tensor_eigenvalue
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn dim(&self) -> usize {
        self.tensor_index.len()
    }

    /// Keep the first `m` tensor functions.
    pub fn truncate(&self, m: usize) -> Self {
        let m = m.min(self.dim());
        Self {
            axes: self.axes.clone(),
            tensor_index: self.tensor_index[..m].to_vec(),
            tensor_eigenvalue: self.tensor_eigenvalue[..m].to_vec(),
            dims: self.dims,
        }
    }

    /// Drop tensor functions whose eigenvalue is numerically zero.
    pub fn positive_part(&self) -> Self {
        let top = self.tensor_eigenvalue.first().copied().unwrap_or(0.0);
        let keep = self
            .tensor_eigenvalue
            .iter()
            .take_while(|l| **l > 0.0 && **l > RANK_TOLERANCE * top)
            .count();
        self.truncate(keep)
    }

    /// Tensor function `i` evaluated on the voxel grid.
    pub fn tensor_function(&self, i: usize) -> Vec<f64> {
        let [a, b, c] = self.tensor_index[i];
        let [nx, ny, nz] = self.dims;
        let (v1, v2, v3) = (
            self.axes[0].eigenfunctions().column(a),
            self.axes[1].eigenfunctions().column(b),
            self.axes[2].eigenfunctions().column(c),
        );
        let mut out = Vec::with_capacity(nx * ny * nz);
        for x in 0..nx {
            for y in 0..ny {
                for z in 0..nz {
                    out.push(v1[x] * v2[y] * v3[z]);
                }
            }
        }
        out
    }

    /// Scores of centred volume rows against the tensor basis, computed by
    /// successive mode products instead of materialising the basis.
    pub(crate) fn project(&self, centred: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let [nx, ny, nz] = self.dims;
        if centred.ncols() != nx * ny * nz {
            return Err(FcovError::mismatch(format!(
                "rows of length {} against a {}x{}x{} basis",
                centred.ncols(),
                nx,
                ny,
                nz
            )));
        }
        let (d1, d2, d3) = (self.axes[0].dim(), self.axes[1].dim(), self.axes[2].dim());
        let v1t = self.axes[0].eigenfunctions().transpose();
        let v2t = self.axes[1].eigenfunctions().transpose();
        let v3 = self.axes[2].eigenfunctions();
        let n = centred.nrows();
        let mut out = DMatrix::zeros(n, self.dim());
        let mut row = vec![0.0; nx * ny * nz];
        let mut full = vec![0.0; d1 * d2 * d3];
        for t in 0..n {
            for (j, v) in row.iter_mut().enumerate() {
                *v = centred[(t, j)];
            }
            let r = DMatrix::from_row_slice(nx, ny * nz, &row);
            let u1 = &v1t * r; // d1 x (ny*nz)
            for a in 0..d1 {
                let slice: Vec<f64> = u1.row(a).iter().copied().collect();
                let s = DMatrix::from_row_slice(ny, nz, &slice);
                let core = &v2t * s * v3; // d2 x d3
                for b in 0..d2 {
                    for c in 0..d3 {
                        full[(a * d2 + b) * d3 + c] = core[(b, c)];
                    }
                }
            }
            for (i, [a, b, c]) in self.tensor_index.iter().enumerate() {
                out[(t, i)] = full[(a * d2 + b) * d3 + c];
            }
        }
        Ok(out)
    }
}

/// Marginal covariance of each spatial axis: fibre outer products averaged
/// over time and the remaining two axes of the demeaned series, followed by
/// per-axis eigenanalysis under unit weights.
pub fn separable_covariance(x: &VolumeSeries, d_axis: [usize; 3]) -> Result<SeparableEigenSystem> {
    let dims = x.dims();
    let n = x.n();
    if n < 2 {
        return Err(FcovError::invalid(format!("separable covariance needs n >= 2, got {n}")));
    }
    for k in 0..3 {
        if d_axis[k] > dims[k] {
            return Err(FcovError::mismatch(format!(
                "axis {k}: {} components requested for length {}",
                d_axis[k], dims[k]
            )));
        }
    }
    let [nx, ny, nz] = dims;
    let centred = crate::fts::demean(&x.to_sample());
    let xc = centred.values();
    let mut c = [DMatrix::zeros(nx, nx), DMatrix::zeros(ny, ny), DMatrix::zeros(nz, nz)];
    let mut row = vec![0.0; nx * ny * nz];
    for t in 0..n {
        for (j, v) in row.iter_mut().enumerate() {
            *v = xc[(t, j)];
        }
        let a = DMatrix::from_row_slice(nx, ny * nz, &row);
        c[0] += &a * a.transpose();
        let b = DMatrix::from_row_slice(nx * ny, nz, &row);
        c[2] += b.transpose() * &b;
        for xi in 0..nx {
            let s = DMatrix::from_row_slice(ny, nz, &row[xi * ny * nz..(xi + 1) * ny * nz]);
            c[1] += &s * s.transpose();
        }
    }
    let denom = [
        (n * ny * nz) as f64,
        (n * nx * nz) as f64,
        (n * nx * ny) as f64,
    ];
    let axes: Vec<EigenSystem> = (0..3)
        .map(|k| {
            let mut m = c[k].clone() / denom[k];
            m.fill_lower_triangle_with_upper_triangle();
            let domain = GridDomain::with_weights((0..dims[k]).map(|i| i as f64).collect(), vec![1.0; dims[k]])?;
            eigendecompose(&CovarianceKernel::new(m, domain)?, d_axis[k])
        })
        .collect::<Result<_>>()?;
    let axes: [EigenSystem; 3] = axes.try_into().expect("three axes");
    Ok(SeparableEigenSystem::from_axes(axes, dims))
}
