//! Monte Carlo draws from the Brownian-bridge limit laws of the
//! multivariate statistics, with a small CSV cache of quantiles.

use std::fs;
use std::path::{Path, PathBuf};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bootstrap::replicate_rng;
use crate::error::{FcovError, Result};
use crate::numeric::quantile_sorted;
use crate::parallel::map_indexed;

pub const DEFAULT_DRAWS: usize = 100_000;
pub const DEFAULT_RESOLUTION: usize = 1000;
pub const MIN_RESOLUTION: usize = 100;

const BATCH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LimitFunctional {
    /// `sum_i int_0^1 B_i(x)^2 dx`
    SumAmoc,
    /// `sum_i (int B_i^2 - (int B_i)^2)`, the limit of the pairwise sum.
    SumEpidemic,
    /// `sup_x sum_i B_i(x)^2`
    MaxAmoc,
    /// `sup_{x<y} sum_i (B_i(y) - B_i(x))^2`
    MaxEpidemic,
}

impl LimitFunctional {
    pub const ALL: [LimitFunctional; 4] =
        [LimitFunctional::SumAmoc, LimitFunctional::SumEpidemic, LimitFunctional::MaxAmoc, LimitFunctional::MaxEpidemic];

    pub fn name(self) -> &'static str {
        match self {
            LimitFunctional::SumAmoc => "sum-amoc",
            LimitFunctional::SumEpidemic => "sum-epidemic",
            LimitFunctional::MaxAmoc => "max-amoc",
            LimitFunctional::MaxEpidemic => "max-epidemic",
        }
    }
}

impl std::fmt::Display for LimitFunctional {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for LimitFunctional {
    type Err = FcovError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| FcovError::InvalidInput(format!("unknown limit functional '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitLawSample {
    pub draws: Vec<f64>,
    pub dim: usize,
    pub functional: LimitFunctional,
    pub resolution: usize,
    pub seed: u64,
}

impl LimitLawSample {
    /// Upper `alpha` quantile, i.e. the `1 - alpha` order statistic.
    pub fn quantile(&self, alpha: f64) -> f64 {
        let mut sorted = self.draws.clone();
        sorted.sort_by(f64::total_cmp);
        quantile_sorted(&sorted, 1.0 - alpha)
    }

    pub fn quantiles(&self, alphas: &[f64]) -> Vec<f64> {
        let mut sorted = self.draws.clone();
        sorted.sort_by(f64::total_cmp);
        alphas.iter().map(|a| quantile_sorted(&sorted, 1.0 - a)).collect()
    }

    pub fn mean(&self) -> f64 {
        crate::numeric::mean(&self.draws)
    }

    /// Standard error of the sample mean.
    pub fn std_error(&self) -> f64 {
        let m = self.draws.len() as f64;
        let mu = self.mean();
        let var = self.draws.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (m - 1.0).max(1.0);
        (var / m).sqrt()
    }
}

/// Bridge values at `0, 1/R, ..., 1` from one Wiener path.
fn bridge<R: rand::Rng>(resolution: usize, rng: &mut R, out: &mut [f64]) {
    let h = (1.0 / resolution as f64).sqrt();
    out[0] = 0.0;
    for i in 1..=resolution {
        let z: f64 = StandardNormal.sample(rng);
        out[i] = out[i - 1] + h * z;
    }
    let end = out[resolution];
    for (i, v) in out.iter_mut().enumerate() {
        *v -= (i as f64 / resolution as f64) * end;
    }
}

fn trapezoid(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    let inner: f64 = values[1..n - 1].iter().sum();
    h * (inner + 0.5 * (values[0] + values[n - 1]))
}

fn one_draw(dim: usize, functional: LimitFunctional, resolution: usize, seed: u64, index: u64) -> f64 {
    let mut rng = replicate_rng(seed, index);
    let h = 1.0 / resolution as f64;
    let mut b = vec![0.0; resolution + 1];
    match functional {
        LimitFunctional::SumAmoc | LimitFunctional::SumEpidemic => {
            let mut total = 0.0;
            let mut sq = vec![0.0; resolution + 1];
            for _ in 0..dim {
                bridge(resolution, &mut rng, &mut b);
                sq.iter_mut().zip(&b).for_each(|(s, v)| *s = v * v);
                let mut term = trapezoid(&sq, h);
                if functional == LimitFunctional::SumEpidemic {
                    let m = trapezoid(&b, h);
                    term = (term - m * m).max(0.0);
                }
                total += term;
            }
            total
        }
        LimitFunctional::MaxAmoc => {
            let mut acc = vec![0.0; resolution + 1];
            for _ in 0..dim {
                bridge(resolution, &mut rng, &mut b);
                acc.iter_mut().zip(&b).for_each(|(a, v)| *a += v * v);
            }
            acc.into_iter().fold(0.0, f64::max)
        }
        LimitFunctional::MaxEpidemic => {
            if dim == 1 {
                bridge(resolution, &mut rng, &mut b);
                let hi = b.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lo = b.iter().copied().fold(f64::INFINITY, f64::min);
                return (hi - lo) * (hi - lo);
            }
            let mut paths = Vec::with_capacity(dim);
            for _ in 0..dim {
                bridge(resolution, &mut rng, &mut b);
                paths.push(b.clone());
            }
            let mut best = 0.0f64;
            for x in 0..=resolution {
                for y in x + 1..=resolution {
                    let v: f64 = paths.iter().map(|p| (p[y] - p[x]) * (p[y] - p[x])).sum();
                    best = best.max(v);
                }
            }
            best
        }
    }
}

/// `draws` realisations of `functional` over `dim` independent standard
/// Brownian bridges, each discretised on `resolution` uniform steps.
/// Draw `i` uses its own stream keyed by `(seed, i)`.
pub fn simulate_limit(
    dim: usize,
    functional: LimitFunctional,
    draws: usize,
    resolution: usize,
    seed: u64,
) -> Result<LimitLawSample> {
    if dim == 0 || draws == 0 {
        return Err(FcovError::invalid("limit simulation needs dim >= 1 and at least one draw"));
    }
    if resolution < MIN_RESOLUTION {
        return Err(FcovError::invalid(format!("resolution {resolution} below {MIN_RESOLUTION}")));
    }
    let batches = draws.div_ceil(BATCH);
    let values: Vec<f64> = map_indexed(batches, |j| {
        let lo = j * BATCH;
        let hi = (lo + BATCH).min(draws);
        (lo..hi).map(|i| one_draw(dim, functional, resolution, seed, i as u64)).collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect();
    Ok(LimitLawSample { draws: values, dim, functional, resolution, seed })
}

/// One row of the quantile cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileRow {
    pub dim: usize,
    pub functional: LimitFunctional,
    pub alpha: f64,
    pub quantile: f64,
    #[serde(rename = "M")]
    pub draws: usize,
    pub resolution: usize,
    pub seed: u64,
}

impl QuantileRow {
    fn matches(&self, dim: usize, functional: LimitFunctional, alpha: f64, draws: usize, resolution: usize, seed: u64) -> bool {
        self.dim == dim
            && self.functional == functional
            && self.alpha == alpha
            && self.draws == draws
            && self.resolution == resolution
            && self.seed == seed
    }
}

/// Quantile table persisted as CSV.
#[derive(Debug, Clone)]
pub struct QuantileCache {
    path: PathBuf,
    rows: Vec<QuantileRow>,
}

impl QuantileCache {
    pub const FILE_NAME: &'static str = "limit_quantiles.csv";

    /// Open (or start) the cache file in `dir`.
    pub fn open(dir: &Path) -> Result<Self> {
        let path = dir.join(Self::FILE_NAME);
        let rows = if path.exists() {
            let mut reader = csv::Reader::from_path(&path)?;
            reader.deserialize().collect::<std::result::Result<Vec<QuantileRow>, _>>()?
        } else {
            Vec::new()
        };
        Ok(Self { path, rows })
    }

    /// Cache directory from `FCOV_CACHE_DIR`, else a temp-dir subfolder.
    pub fn default_dir() -> PathBuf {
        std::env::var_os("FCOV_CACHE_DIR").map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("fcov"))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn rows(&self) -> &[QuantileRow] {
        &self.rows
    }

    /// Quantiles for every `alpha`, simulating if any is missing and
    /// persisting the new rows. The second value reports whether every
    /// entry was already cached.
    pub fn quantiles(
        &mut self,
        dim: usize,
        functional: LimitFunctional,
        alphas: &[f64],
        draws: usize,
        resolution: usize,
        seed: u64,
    ) -> Result<(Vec<f64>, bool)> {
        let lookup = |rows: &[QuantileRow], a: f64| {
            rows.iter().find(|r| r.matches(dim, functional, a, draws, resolution, seed)).map(|r| r.quantile)
        };
        let cached: Option<Vec<f64>> = alphas.iter().map(|a| lookup(&self.rows, *a)).collect();
        if let Some(q) = cached {
            return Ok((q, true));
        }
        let sample = simulate_limit(dim, functional, draws, resolution, seed)?;
        let q = sample.quantiles(alphas);
        for (&alpha, &quantile) in alphas.iter().zip(&q) {
            if lookup(&self.rows, alpha).is_none() {
                self.rows.push(QuantileRow { dim, functional, alpha, quantile, draws, resolution, seed });
            }
        }
        self.save()?;
        Ok((q, false))
    }

    pub fn save(&self) -> Result<()> {
        if let Some(dir) = self.path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut writer = csv::Writer::from_path(&self.path)?;
        for row in &self.rows {
            writer.serialize(row)?;
        }
        writer.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::ks_distance;

    #[test]
    fn bridge_is_pinned() {
        let mut rng = replicate_rng(1, 0);
        let mut b = vec![0.0; 201];
        bridge(200, &mut rng, &mut b);
        assert_eq!(b[0], 0.0);
        assert!(b[200].abs() < 1e-12);
    }

    #[test]
    fn sum_amoc_mean_is_one_sixth() {
        let s = simulate_limit(1, LimitFunctional::SumAmoc, 20_000, 200, 3).unwrap();
        assert!((s.mean() - 1.0 / 6.0).abs() < 3.0 * s.std_error() + 1e-3, "{}", s.mean());
    }

    #[test]
    fn sum_epidemic_mean_is_one_twelfth() {
        let s = simulate_limit(1, LimitFunctional::SumEpidemic, 20_000, 200, 4).unwrap();
        assert!((s.mean() - 1.0 / 12.0).abs() < 3.0 * s.std_error() + 1e-3, "{}", s.mean());
    }

    #[test]
    fn draws_are_finite_and_nonnegative() {
        for f in LimitFunctional::ALL {
            let s = simulate_limit(2, f, 50, 100, 5).unwrap();
            assert_eq!(s.draws.len(), 50);
            assert!(s.draws.iter().all(|v| v.is_finite() && *v >= 0.0));
        }
    }

    #[test]
    fn max_dominates_sum() {
        let a = simulate_limit(2, LimitFunctional::SumAmoc, 200, 100, 6).unwrap();
        let b = simulate_limit(2, LimitFunctional::MaxAmoc, 200, 100, 6).unwrap();
        assert!(a.draws.iter().zip(&b.draws).all(|(s, m)| s <= m));
        let c = simulate_limit(2, LimitFunctional::MaxEpidemic, 200, 100, 6).unwrap();
        assert!(b.draws.iter().zip(&c.draws).all(|(m, e)| m <= &(e + 1e-12)));
    }

    #[test]
    fn additivity_in_distribution() {
        let m = 10_000;
        let two = simulate_limit(2, LimitFunctional::SumAmoc, m, 100, 7).unwrap();
        let a = simulate_limit(1, LimitFunctional::SumAmoc, m, 100, 8).unwrap();
        let b = simulate_limit(1, LimitFunctional::SumAmoc, m, 100, 9).unwrap();
        let sum: Vec<f64> = a.draws.iter().zip(&b.draws).map(|(x, y)| x + y).collect();
        assert!(ks_distance(&two.draws, &sum) <= 0.02);
    }

    #[test]
    fn quantiles_are_monotone() {
        let one = simulate_limit(1, LimitFunctional::SumAmoc, 5000, 100, 10).unwrap();
        let three = simulate_limit(3, LimitFunctional::SumAmoc, 5000, 100, 10).unwrap();
        let alphas = [0.1, 0.05, 0.025, 0.01];
        let q1 = one.quantiles(&alphas);
        let q3 = three.quantiles(&alphas);
        assert!(q1.windows(2).all(|w| w[0] <= w[1]));
        assert!(q1.iter().zip(&q3).all(|(a, b)| a < b));
    }

    #[test]
    fn seeded_and_rejects_coarse_grid() {
        let a = simulate_limit(1, LimitFunctional::MaxAmoc, 300, 100, 11).unwrap();
        let b = simulate_limit(1, LimitFunctional::MaxAmoc, 300, 100, 11).unwrap();
        assert_eq!(a, b);
        assert!(simulate_limit(1, LimitFunctional::SumAmoc, 10, 99, 0).is_err());
        assert!(simulate_limit(0, LimitFunctional::SumAmoc, 10, 100, 0).is_err());
    }

    #[test]
    fn cache_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let mut cache = QuantileCache::open(dir.path()).unwrap();
        let (q, hit) = cache.quantiles(1, LimitFunctional::SumAmoc, &[0.05, 0.01], 2000, 100, 1).unwrap();
        assert!(!hit);
        let mut again = QuantileCache::open(dir.path()).unwrap();
        assert_eq!(again.rows().len(), 2);
        let (q2, hit) = again.quantiles(1, LimitFunctional::SumAmoc, &[0.05, 0.01], 2000, 100, 1).unwrap();
        assert!(hit);
        assert_eq!(q, q2);
        let header = fs::read_to_string(again.path()).unwrap();
        assert!(header.starts_with("dim,functional,alpha,quantile,M,resolution,seed"));
    }

    #[test]
    fn functional_names_parse() {
        for f in LimitFunctional::ALL {
            assert_eq!(f.name().parse::<LimitFunctional>().unwrap(), f);
        }
        assert!("sum".parse::<LimitFunctional>().is_err());
    }
}
