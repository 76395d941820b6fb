//! Circular block bootstrap for the CUSUM statistics.
//!
//! Replicates resample change-corrected residuals in circular blocks,
//! re-correct the replicate for its own estimated change, re-estimate the
//! long-run variances and recompute the statistic. Each replicate draws from
//! its own ChaCha stream keyed by `(seed, index)`, so results do not depend on
//! the number of worker threads.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FcovError, Result};
use crate::numeric::quantile;
use crate::parallel::map_indexed;
use crate::scores::{correct_residuals_for, Changepoint, ResidualSeries, ScoreProductSeries};
use crate::statistics::{evaluate_products, StatisticKind, Weighting};
use crate::Alternative;

/// Replicates are evaluated in batches of this size.
const BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub block: usize,
    pub seed: u64,
    pub alternative: Alternative,
    pub kind: StatisticKind,
    /// Residual variance of the first squared score, held fixed across
    /// replicates. Required by the weighted functional statistic.
    pub s11_sq: Option<f64>,
    /// Also compute one p-value per product component.
    pub component_p_values: bool,
}

impl BootstrapConfig {
    pub fn new(replicates: usize, block: usize, seed: u64, alternative: Alternative, kind: StatisticKind) -> Self {
        Self { replicates, block, seed, alternative, kind, s11_sq: None, component_p_values: false }
    }

    fn weighting(&self) -> Result<Weighting> {
        Ok(match self.kind {
            StatisticKind::MultivariateSum | StatisticKind::MultivariateMax => Weighting::LongRun,
            StatisticKind::FunctionalUnweighted => Weighting::Unit,
            StatisticKind::FunctionalWeighted => Weighting::Offset(
                self.s11_sq.ok_or_else(|| FcovError::invalid("weighted statistic needs s11_sq"))?,
            ),
        })
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.replicates == 0 {
            return Err(FcovError::invalid("bootstrap needs at least one replicate"));
        }
        if self.block == 0 || self.block > n {
            return Err(FcovError::invalid(format!("block length {} outside 1..={n}", self.block)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOutcome {
    pub observed: f64,
    pub changepoint: Changepoint,
    pub components_used: usize,
    pub replicate_values: Vec<f64>,
    pub p_value: f64,
    /// Per-component p-values, in product-column order.
    pub component_p_values: Option<Vec<f64>>,
}

impl BootstrapOutcome {
    /// Upper `alpha` quantile of the replicate values.
    pub fn critical_value(&self, alpha: f64) -> f64 {
        quantile(&self.replicate_values, 1.0 - alpha)
    }

    /// `(1 + #{replicates >= observed}) / (B + 1)`.
    pub fn p_value_for(&self, observed: f64) -> f64 {
        p_value(&self.replicate_values, observed)
    }
}

pub fn p_value(replicates: &[f64], observed: f64) -> f64 {
    let above = replicates.iter().filter(|r| **r >= observed).count();
    (1 + above) as f64 / (replicates.len() + 1) as f64
}

/// Stream for replicate `index`.
pub fn replicate_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub(crate) fn resample_matrix<R: Rng + ?Sized>(r: &DMatrix<f64>, block: usize, rng: &mut R) -> DMatrix<f64> {
    let n = r.nrows();
    let p = r.ncols();
    if n == 0 {
        return r.clone();
    }
    let starts: Vec<usize> = (0..=n / block).map(|_| rng.random_range(0..n)).collect();
    let mut out = DMatrix::zeros(n, p);
    let src = r.as_slice();
    let dst = out.as_mut_slice();
    for i in 0..p {
        let col = &src[i * n..(i + 1) * n];
        let target = &mut dst[i * n..(i + 1) * n];
        let mut t = 0;
        'blocks: for &u in &starts {
            for k in 0..block {
                if t == n {
                    break 'blocks;
                }
                target[t] = col[(u + k) % n];
                t += 1;
            }
        }
    }
    out
}

/// `floor(n / K) + 1` uniform block starts, blocks of length `K` laid out
/// circularly and truncated to `n` rows.
pub fn circular_block_resample<R: Rng + ?Sized>(r: &ResidualSeries, block: usize, rng: &mut R) -> Result<ScoreProductSeries> {
    let n = r.n();
    if block == 0 || block > n.max(1) {
        return Err(FcovError::invalid(format!("block length {block} outside 1..={n}")));
    }
    ScoreProductSeries::new(resample_matrix(r.values(), block, rng), r.pair_index().to_vec())
}

/// Bootstrap p-value of the statistic selected by `cfg` on product series `q`.
///
/// Replicates whose components all have zero variance count as zero.
pub fn bootstrap_test(q: &ScoreProductSeries, cfg: &BootstrapConfig) -> Result<BootstrapOutcome> {
    let n = q.n();
    cfg.validate(n)?;
    let weighting = cfg.weighting()?;
    let form = cfg.kind.form();
    let alt = cfg.alternative;
    let observed = evaluate_products(q.values(), weighting, form, alt, cfg.block, true, cfg.component_p_values)?;
    let residuals = correct_residuals_for(q.values(), alt);
    let p = q.dim();

    let replicate = |b: usize| -> (f64, Option<Vec<f64>>) {
        let mut rng = replicate_rng(cfg.seed, b as u64);
        let star = resample_matrix(residuals.values(), cfg.block, &mut rng);
        match evaluate_products(&star, weighting, form, alt, cfg.block, false, cfg.component_p_values) {
            Ok(e) => (e.value, e.contributions),
            Err(_) => (0.0, cfg.component_p_values.then(|| vec![0.0; p])),
        }
    };

    let batches = cfg.replicates.div_ceil(BATCH);
    let observed_parts = observed.contributions.as_deref();
    let results = map_indexed(batches, |j| {
        let lo = j * BATCH;
        let hi = (lo + BATCH).min(cfg.replicates);
        let mut values = Vec::with_capacity(hi - lo);
        let mut counts = observed_parts.map(|o| vec![0usize; o.len()]);
        for b in lo..hi {
            let (v, parts) = replicate(b);
            values.push(if v.is_finite() { v } else { 0.0 });
            if let (Some(c), Some(parts), Some(o)) = (counts.as_mut(), parts, observed_parts) {
                for ((c, r), o) in c.iter_mut().zip(&parts).zip(o) {
                    if r >= o {
                        *c += 1;
                    }
                }
            }
        }
        (values, counts)
    });

    let mut replicate_values = Vec::with_capacity(cfg.replicates);
    let mut counts = observed_parts.map(|o| vec![0usize; o.len()]);
    for (values, c) in results {
        replicate_values.extend(values);
        if let (Some(total), Some(c)) = (counts.as_mut(), c) {
            total.iter_mut().zip(c).for_each(|(t, c)| *t += c);
        }
    }
    let denom = (cfg.replicates + 1) as f64;
    let component_p_values = counts.map(|c| c.into_iter().map(|c| (1 + c) as f64 / denom).collect());
    Ok(BootstrapOutcome {
        p_value: p_value(&replicate_values, observed.value),
        observed: observed.value,
        changepoint: observed.changepoint.expect("requested"),
        components_used: observed.components_used,
        replicate_values,
        component_p_values,
    })
}
