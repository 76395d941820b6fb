use std::fmt::Write as _;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{coefficients_to_sample, generate_pair, ChangeKind, SimulationConfig};
use crate::bootstrap::replicate_rng;
use crate::error::{FcovError, Result};
use crate::numeric::quantile;
use crate::parallel::map_indexed;
use crate::pipeline::{check_variation, prepare_test, Method, TestSettings};
use crate::covspec::{principal_components, EigenSystem};
use crate::scores::{compute_scores, ScoreMatrix};
use crate::fts::FunctionalSample;

/// Outcome of one method on one replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub method: Method,
    pub null_statistic: f64,
    pub null_p_value: f64,
    /// Statistic on the changed series, when a change is configured.
    pub alt_statistic: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub index: usize,
    pub outcomes: Vec<MethodOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub method: Method,
    pub alternative: crate::Alternative,
    pub alpha: f64,
    /// Bootstrap rejection rate on the null series.
    pub size: f64,
    /// Rejection rate on the changed series against the empirical null
    /// quantile of the statistic.
    pub power: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerTable {
    pub rows: Vec<PowerRow>,
    pub config_hash: u64,
    pub replications: usize,
    pub runtime_ms: Option<f64>,
}

impl PowerTable {
    pub fn row(&self, method: Method, alpha: f64) -> Option<&PowerRow> {
        self.rows.iter().find(|r| r.method == method && r.alpha == alpha)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# config_hash={:016x}", self.config_hash);
        let _ = writeln!(s, "# replications={}", self.replications);
        if let Some(ms) = self.runtime_ms {
            let _ = writeln!(s, "# runtime_ms={ms:.0}");
        }
        s.push_str("method,alternative,alpha,size,power\n");
        for r in &self.rows {
            let power = r.power.map(|p| p.to_string()).unwrap_or_default();
            let _ = writeln!(s, "{},{},{},{},{}", r.method, r.alternative, r.alpha, r.size, power);
        }
        s
    }

    pub fn from_results(cfg: &SimulationConfig, results: &[ReplicationResult]) -> Self {
        let alternative = cfg.tested_alternative();
        let mut rows = Vec::new();
        for (i, &method) in cfg.methods.iter().enumerate() {
            let outcomes: Vec<&MethodOutcome> = results.iter().map(|r| &r.outcomes[i]).collect();
            let null_stats: Vec<f64> = outcomes.iter().map(|o| o.null_statistic).collect();
            let count = outcomes.len() as f64;
            for &alpha in &cfg.alphas {
                let size = outcomes.iter().filter(|o| o.null_p_value <= alpha).count() as f64 / count;
                let power = (cfg.change != ChangeKind::None).then(|| {
                    let crit = quantile(&null_stats, 1.0 - alpha);
                    outcomes.iter().filter(|o| o.alt_statistic.is_some_and(|a| a > crit)).count() as f64 / count
                });
                rows.push(PowerRow { method, alternative, alpha, size, power });
            }
        }
        PowerTable { rows, config_hash: cfg.config_hash(), replications: results.len(), runtime_ms: None }
    }
}

fn settings_for(cfg: &SimulationConfig, method: Method, seed: u64) -> TestSettings {
    TestSettings {
        method,
        alternative: cfg.tested_alternative(),
        d: cfg.d,
        eps1: cfg.eps1,
        eps2: cfg.eps2,
        block: cfg.block,
        replicates: cfg.bootstrap,
        seed,
    }
}

/// Scores for every requested method from one shared eigenanalysis.
struct SampleScores {
    all: Option<ScoreMatrix>,
}

impl SampleScores {
    fn new(x: &FunctionalSample) -> Result<Self> {
        if let Err(e) = check_variation(x.values()) {
            return match e {
                FcovError::Degenerate(_) => Ok(Self { all: None }),
                e => Err(e),
            };
        }
        let basis: EigenSystem = principal_components(x, None)?;
        if basis.dim() == 0 {
            return Ok(Self { all: None });
        }
        Ok(Self { all: Some(compute_scores(x, &basis)?) })
    }

    /// Observed statistic and optional bootstrap p-value; degenerate data
    /// count as statistic 0, p-value 1.
    fn evaluate(&self, settings: &TestSettings, with_bootstrap: bool) -> Result<(f64, f64)> {
        let Some(all) = &self.all else {
            return Ok((0.0, 1.0));
        };
        let scores = if settings.method.is_functional() { all.clone() } else { all.leading(settings.d) };
        let prepared = match prepare_test(&scores, settings) {
            Ok(p) => p,
            Err(FcovError::Degenerate(_)) => return Ok((0.0, 1.0)),
            Err(e) => return Err(e),
        };
        if with_bootstrap {
            match prepared.bootstrap(settings.replicates, settings.seed, false) {
                Ok(b) => Ok((b.observed, b.p_value)),
                Err(FcovError::Degenerate(_)) => Ok((0.0, 1.0)),
                Err(e) => Err(e),
            }
        } else {
            match prepared.value() {
                Ok(v) => Ok((v, f64::NAN)),
                Err(FcovError::Degenerate(_)) => Ok((0.0, f64::NAN)),
                Err(e) => Err(e),
            }
        }
    }
}

fn replication(cfg: &SimulationConfig, index: usize) -> Result<ReplicationResult> {
    let mut rng = replicate_rng(cfg.seed, index as u64);
    let (null, alt) = generate_pair(cfg, &mut rng)?;
    let boot_seed = rng.next_u64();
    let null_scores = SampleScores::new(&coefficients_to_sample(&null, cfg)?)?;
    let alt_scores = if cfg.change == ChangeKind::None {
        None
    } else {
        Some(SampleScores::new(&coefficients_to_sample(&alt, cfg)?)?)
    };
    let outcomes = cfg
        .methods
        .iter()
        .map(|&method| {
            let settings = settings_for(cfg, method, boot_seed);
            let (null_statistic, null_p_value) = null_scores.evaluate(&settings, true)?;
            let alt_statistic = match &alt_scores {
                Some(s) => Some(s.evaluate(&settings, false)?.0),
                None => None,
            };
            Ok(MethodOutcome { method, null_statistic, null_p_value, alt_statistic })
        })
        .collect::<Result<_>>()?;
    Ok(ReplicationResult { index, outcomes })
}

/// Every replication of the experiment: a null series with a bootstrap
/// p-value per method and, when a change is configured, the statistic of
/// the changed series built from the same innovations.
pub fn run_replications(cfg: &SimulationConfig) -> Result<Vec<ReplicationResult>> {
    cfg.validate()?;
    map_indexed(cfg.replications, |r| replication(cfg, r)).into_iter().collect()
}

/// Empirical size and size-corrected power over the alpha grid.
pub fn run_size_power(cfg: &SimulationConfig) -> Result<PowerTable> {
    Ok(PowerTable::from_results(cfg, &run_replications(cfg)?))
}
