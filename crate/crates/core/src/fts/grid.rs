use nalgebra::{DMatrix, DVector};

use crate::error::{FcovError, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum GridKind {
    /// Ordered coordinates of a one-dimensional domain.
    Line { points: Vec<f64> },
    /// Axis lengths `(X, Y, Z)` of a voxel grid.
    Volume { dims: [usize; 3] },
}

/// Grid nodes together with a positive quadrature weight per node.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDomain {
    kind: GridKind,
    weights: Vec<f64>,
}

impl GridDomain {
    /// Trapezoidal weights on the supplied strictly increasing points. A
    /// single node gets unit weight.
    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(FcovError::invalid("grid needs at least one point"));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(FcovError::invalid("grid points must be finite"));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(FcovError::invalid("grid points must be strictly increasing"));
        }
        let g = points.len();
        let weights = if g == 1 {
            vec![1.0]
        } else {
            (0..g)
                .map(|j| {
                    let left = if j > 0 { points[j] - points[j - 1] } else { 0.0 };
                    let right = if j + 1 < g { points[j + 1] - points[j] } else { 0.0 };
                    0.5 * (left + right)
                })
                .collect()
        };
        Ok(Self { kind: GridKind::Line { points }, weights })
    }

    /// `g` equispaced points on `[a, b]`, endpoints included, trapezoidal weights.
    pub fn uniform(g: usize, a: f64, b: f64) -> Result<Self> {
        if g == 0 || !(b > a) {
            return Err(FcovError::invalid(format!("bad uniform grid: g={g}, [{a}, {b}]")));
        }
        if g == 1 {
            return Self::from_points(vec![a]);
        }
        let h = (b - a) / (g - 1) as f64;
        Self::from_points((0..g).map(|j| a + h * j as f64).collect())
    }

    pub fn unit_interval(g: usize) -> Result<Self> {
        Self::uniform(g, 0.0, 1.0)
    }

    /// Explicit weights on a one-dimensional grid.
    pub fn with_weights(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let base = Self::from_points(points)?;
        if weights.len() != base.len() {
            return Err(FcovError::mismatch(format!(
                "{} weights for {} nodes",
                weights.len(),
                base.len()
            )));
        }
        if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(FcovError::invalid("quadrature weights must be positive"));
        }
        Ok(Self { kind: base.kind, weights })
    }

    /// Voxel grid with counting measure (unit weight per voxel).
    pub fn volume(dims: [usize; 3]) -> Result<Self> {
        let m: usize = dims.iter().product();
        if m == 0 {
            return Err(FcovError::invalid(format!("empty volume {dims:?}")));
        }
        Ok(Self { kind: GridKind::Volume { dims }, weights: vec![1.0; m] })
    }

    pub fn kind(&self) -> &GridKind {
        &self.kind
    }

    pub fn points(&self) -> Option<&[f64]> {
        match &self.kind {
            GridKind::Line { points } => Some(points),
            GridKind::Volume { .. } => None,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Total measure of the domain.
    pub fn measure(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Weighted inner product `sum_j w_j f_j g_j`.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> Result<f64> {
        inner_product(f, g, self)
    }
}

/// Quadrature approximation of `int f(s) g(s) ds`.
pub fn inner_product(f: &[f64], g: &[f64], domain: &GridDomain) -> Result<f64> {
    let w = domain.weights();
    if f.len() != w.len() || g.len() != w.len() {
        return Err(FcovError::mismatch(format!(
            "grid functions of length {} and {} on a {}-node domain",
            f.len(),
            g.len(),
            w.len()
        )));
    }
    Ok(f.iter().zip(g).zip(w).map(|((a, b), w)| a * b * w).sum())
}

/// `n` curves observed on a common grid; row `t` is the curve at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalSample {
    values: DMatrix<f64>,
    domain: GridDomain,
}

impl FunctionalSample {
    pub fn new(values: DMatrix<f64>, domain: GridDomain) -> Result<Self> {
        if values.ncols() != domain.len() {
            return Err(FcovError::mismatch(format!(
                "rows have {} entries but the grid has {} nodes",
                values.ncols(),
                domain.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FcovError::invalid("sample contains non-finite values"));
        }
        Ok(Self { values, domain })
    }

    /// Build from row vectors.
    pub fn from_rows(rows: &[Vec<f64>], domain: GridDomain) -> Result<Self> {
        let g = domain.len();
        if let Some((t, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != g) {
            return Err(FcovError::mismatch(format!("row {t} has {} entries, expected {g}", r.len())));
        }
        let values = DMatrix::from_fn(rows.len(), g, |t, j| rows[t][j]);
        Self::new(values, domain)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn domain(&self) -> &GridDomain {
        &self.domain
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn grid_len(&self) -> usize {
        self.values.ncols()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { values: &self.values * c, domain: self.domain.clone() }
    }

    pub fn into_parts(self) -> (DMatrix<f64>, GridDomain) {
        (self.values, self.domain)
    }
}

/// Volume time series. Voxel `(x, y, z)` sits in column `(x * Y + y) * Z + z`.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeSeries {
    values: DMatrix<f64>,
    dims: [usize; 3],
}

impl VolumeSeries {
    pub fn new(values: DMatrix<f64>, dims: [usize; 3]) -> Result<Self> {
        let m: usize = dims.iter().product();
        if values.ncols() != m {
            return Err(FcovError::mismatch(format!(
                "row length {} does not match {}x{}x{}",
                values.ncols(),
                dims[0],
                dims[1],
                dims[2]
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FcovError::invalid("volume series contains non-finite values"));
        }
        Ok(Self { values, dims })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn voxel_index(&self, x: usize, y: usize, z: usize) -> usize {
        (x * self.dims[1] + y) * self.dims[2] + z
    }

    /// View as a functional sample under counting measure.
    pub fn to_sample(&self) -> FunctionalSample {
        FunctionalSample {
            values: self.values.clone(),
            domain: GridDomain::volume(self.dims).expect("validated dims"),
        }
    }
}

/// Pointwise average curve.
pub fn sample_mean(x: &FunctionalSample) -> Result<DVector<f64>> {
    if x.n() == 0 {
        return Err(FcovError::EmptySample);
    }
    Ok(column_means(x.values()))
}

pub(crate) fn column_means(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows() as f64;
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum() / n))
}

pub(crate) fn demean_matrix(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    if m.nrows() == 0 {
        return out;
    }
    let means = column_means(m);
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    out
}

/// Subtract the sample mean curve from every observation.
pub fn demean(x: &FunctionalSample) -> FunctionalSample {
    FunctionalSample { values: demean_matrix(&x.values), domain: x.domain.clone() }
}
