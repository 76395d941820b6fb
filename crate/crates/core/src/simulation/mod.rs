//! Monte Carlo experiments: functional AR(1) series in a Fourier basis with
//! injected covariance changes, and size and power tables of the tests.

mod config;
mod power;

pub use config::{ChangeKind, Dependence, Injection, MechanismKind, Setting, SimulationConfig};
pub use power::{run_replications, run_size_power, PowerRow, PowerTable, ReplicationResult};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{FcovError, Result};
use crate::fts::{FunctionalSample, GridDomain};

/// Frequency of Fourier function `l` (0-based): 0 for the constant, then
/// each frequency twice (sine, cosine).
fn frequency(l: usize) -> usize {
    l.div_ceil(2)
}

/// First `d` Fourier functions on `grid` as columns: `1`, then
/// `sqrt(2) sin(2 pi k s)` and `sqrt(2) cos(2 pi k s)` for `k = 1, 2, ...`.
/// An even `d` ends on a sine.
///
/// The grid needs more than `2 k_max` intervals so that products of the
/// highest frequency are still integrated exactly by the trapezoidal rule.
pub fn fourier_basis(d: usize, grid: &GridDomain) -> Result<DMatrix<f64>> {
    let points = grid.points().ok_or_else(|| FcovError::invalid("Fourier basis needs a one-dimensional grid"))?;
    let kmax = if d == 0 { 0 } else { frequency(d - 1) };
    if points.len() < 2 * kmax + 2 {
        return Err(FcovError::invalid(format!(
            "grid of {} points too coarse for frequency {kmax}; need at least {}",
            points.len(),
            2 * kmax + 2
        )));
    }
    let root2 = std::f64::consts::SQRT_2;
    let two_pi = 2.0 * std::f64::consts::PI;
    Ok(DMatrix::from_fn(points.len(), d, |j, l| {
        let s = points[j];
        let k = frequency(l) as f64;
        match l {
            0 => 1.0,
            l if l % 2 == 1 => root2 * (two_pi * k * s).sin(),
            _ => root2 * (two_pi * k * s).cos(),
        }
    }))
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Distribution::<f64>::sample(&StandardNormal, rng)
}

/// Innovation coefficients for the burn-in and the kept rows,
/// `(burn_in + n) x D`.
fn generate_innovations<R: Rng + ?Sized>(cfg: &SimulationConfig, rng: &mut R) -> DMatrix<f64> {
    let dd = cfg.basis_size;
    let sigma = cfg.setting.sigmas(dd);
    let total = cfg.n + cfg.burn_in_steps();
    let mut e = DMatrix::zeros(total, dd);
    for t in 0..total {
        for l in 0..dd {
            e[(t, l)] = sigma[l] * normal(rng);
        }
    }
    e
}

/// Run the configured recursion over the innovations and drop the burn-in.
fn filter(cfg: &SimulationConfig, e: &DMatrix<f64>) -> DMatrix<f64> {
    let (total, dd) = e.shape();
    let burn = total - cfg.n;
    let mut out = DMatrix::zeros(cfg.n, dd);
    let mut prev = vec![0.0; dd];
    let mut cur = vec![0.0; dd];
    for t in 0..total {
        for l in 0..dd {
            cur[l] = e[(t, l)];
        }
        if cfg.dependence == Dependence::Far1 {
            let (diag, off) = (cfg.far_diag, cfg.far_off);
            for l in 0..dd {
                let mut ar = diag * prev[l];
                if l > 0 {
                    ar += off * prev[l - 1];
                }
                if l + 1 < dd {
                    ar += off * prev[l + 1];
                }
                cur[l] += ar;
            }
        }
        std::mem::swap(&mut prev, &mut cur);
        if t >= burn {
            for l in 0..dd {
                out[(t - burn, l)] = prev[l];
            }
        }
    }
    out
}

/// Basis coefficients of one stationary series without change, `n x D`.
pub fn generate_null_coefficients<R: Rng + ?Sized>(cfg: &SimulationConfig, rng: &mut R) -> Result<DMatrix<f64>> {
    cfg.validate()?;
    Ok(filter(cfg, &generate_innovations(cfg, rng)))
}

/// Rows affected by the configured change, 0-based and half-open.
pub fn change_window(cfg: &SimulationConfig) -> Option<(usize, usize)> {
    let n = cfg.n as f64;
    match cfg.change {
        ChangeKind::None => None,
        ChangeKind::Amoc => Some(((cfg.theta * n).floor() as usize, cfg.n)),
        ChangeKind::Epidemic => Some(((cfg.theta1 * n).floor() as usize, (cfg.theta2 * n).floor() as usize)),
    }
}

/// Apply the configured change mechanism in place.
pub fn inject_change<R: Rng + ?Sized>(coef: &mut DMatrix<f64>, cfg: &SimulationConfig, rng: &mut R) -> Result<()> {
    cfg.validate()?;
    let Some((lo, hi)) = change_window(cfg) else {
        return Ok(());
    };
    let shift = coef.nrows() - cfg.n;
    let (lo, hi) = (lo + shift, hi + shift);
    match cfg.mechanism {
        MechanismKind::Example2 => {
            let sd = cfg.sigma_eps() / (cfg.m as f64).sqrt();
            for t in lo..hi {
                let e = sd * normal(rng);
                for l in 0..cfg.m {
                    coef[(t, l)] += e;
                }
            }
        }
        MechanismKind::Example1 => {
            let lambda: Vec<f64> = cfg.setting.sigmas(cfg.basis_size).iter().map(|s| s * s).collect();
            let factors: Vec<f64> = cfg
                .deltas
                .iter()
                .enumerate()
                .map(|(l, d)| if *d == 0.0 { 1.0 } else { (1.0 + d / lambda[l]).sqrt() })
                .collect();
            for t in lo..hi {
                for (l, f) in factors.iter().enumerate() {
                    coef[(t, l)] *= f;
                }
            }
        }
    }
    Ok(())
}

/// Null and changed coefficient series sharing the same innovations.
pub fn generate_pair<R: Rng + ?Sized>(cfg: &SimulationConfig, rng: &mut R) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    cfg.validate()?;
    let e = generate_innovations(cfg, rng);
    let null = filter(cfg, &e);
    let alt = match cfg.injection {
        Injection::Output => {
            let mut alt = null.clone();
            inject_change(&mut alt, cfg, rng)?;
            alt
        }
        Injection::Innovation => {
            let mut e = e;
            inject_change(&mut e, cfg, rng)?;
            filter(cfg, &e)
        }
    };
    Ok((null, alt))
}

/// Curves on the configured grid from basis coefficients.
pub fn coefficients_to_sample(coef: &DMatrix<f64>, cfg: &SimulationConfig) -> Result<FunctionalSample> {
    let grid = GridDomain::unit_interval(cfg.grid)?;
    let basis = fourier_basis(coef.ncols(), &grid)?;
    FunctionalSample::new(coef * basis.transpose(), grid)
}

/// One series under the configured change (or none).
pub fn generate_series<R: Rng + ?Sized>(cfg: &SimulationConfig, rng: &mut R) -> Result<FunctionalSample> {
    let (_, alt) = generate_pair(cfg, rng)?;
    coefficients_to_sample(&alt, cfg)
}
