#![allow(dead_code)]

use fcov::fts::{demean, FunctionalSample, GridDomain};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Smooth random curves: a few random Fourier modes plus white noise.
pub fn smooth_sample(n: usize, g: usize, noise: f64, rng: &mut impl Rng) -> FunctionalSample {
    let domain = GridDomain::unit_interval(g).unwrap();
    let amps: Vec<[f64; 4]> = (0..n)
        .map(|_| std::array::from_fn(|k| normal(rng) * 2.0 / (k as f64 + 1.0)))
        .collect();
    let values = DMatrix::from_fn(n, g, |t, j| {
        let s = j as f64 / (g - 1) as f64;
        let a = &amps[t];
        let tau = std::f64::consts::TAU;
        a[0] + a[1] * (tau * s).sin() + a[2] * (tau * s).cos() + a[3] * (2.0 * tau * s).sin()
    });
    let noise = DMatrix::from_fn(n, g, |_, _| noise * normal(rng));
    FunctionalSample::new(values + noise, domain).unwrap()
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, descending.
pub fn jacobi_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut a = a.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |j| *j != i).map(move |j| (i, j))).map(|(i, j)| a[(i, j)].powi(2)).sum();
        let scale: f64 = a.iter().map(|v| v * v).sum();
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

/// Spectrum of the weighted covariance operator `W^{1/2} C W^{1/2}` on the
/// grid, using only products of grid vectors with the centred data. The
/// operator has rank below `n`, so `n + 4` random probes span its range and
/// Rayleigh-Ritz on that range recovers every nonzero eigenvalue.
pub fn spatial_spectrum(x: &FunctionalSample, seed: u64) -> Vec<f64> {
    let n = x.n();
    let g = x.grid_len();
    let xc = demean(x);
    let sw = DVector::from_iterator(g, x.domain().weights().iter().map(|w| w.sqrt()));
    let apply = |m: &DMatrix<f64>| -> DMatrix<f64> {
        let t = xc.values() * DMatrix::from_fn(g, m.ncols(), |i, j| m[(i, j)] * sw[i]);
        let mut out = xc.values().transpose() * t / n as f64;
        for (i, mut row) in out.row_iter_mut().enumerate() {
            row *= sw[i];
        }
        out
    };
    let mut rng = rng(seed);
    let k = (n + 4).min(g);
    let probes = DMatrix::from_fn(g, k, |_, _| normal(&mut rng));
    let q = apply(&probes).qr().q();
    let b = q.transpose() * apply(&q);
    let b = (&b + b.transpose()) / 2.0;
    let mut ev: Vec<f64> = b.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

pub fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
