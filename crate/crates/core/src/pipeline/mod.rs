//! End-to-end test assembly: scores from a sample, the product series of
//! the selected method, the observed statistic and its bootstrap p-value.

mod detect;
mod report;

pub use detect::{cmd_detect, cmd_preprocess, DetectRequest, InputFormat};
pub use report::{ComponentP, ConfigEcho, ReportFormat, TestReport, EXIT_CHANGE, EXIT_ERROR, EXIT_NO_CHANGE};

use serde::{Deserialize, Serialize};

use crate::bootstrap::{bootstrap_test, BootstrapConfig, BootstrapOutcome};
use crate::covspec::{principal_components, EigenSystem};
use crate::error::{FcovError, Result};
use crate::fts::FunctionalSample;
use crate::scores::{compute_scores, vech_products, ScoreMatrix, ScoreProductSeries};
use crate::statistics::{
    evaluate_products, functional_products, functional_weighting, partial_sums, preselect_pairs, quadratic_path, weights_for,
    PreselectionResult, StatisticKind, StatisticValue, Weighting, DEFAULT_EPS1, DEFAULT_EPS2,
};
use crate::Alternative;

/// Test procedure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Sum statistic on the vech products of the leading `d` scores.
    Multi,
    /// Max statistic on the same products.
    MultiMax,
    /// Unweighted fully functional statistic.
    Func,
    /// Weighted fully functional statistic.
    #[default]
    Wfunc,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Multi, Method::MultiMax, Method::Func, Method::Wfunc];

    pub fn name(self) -> &'static str {
        match self {
            Method::Multi => "multi",
            Method::MultiMax => "multi-max",
            Method::Func => "func",
            Method::Wfunc => "wfunc",
        }
    }

    pub fn kind(self) -> StatisticKind {
        match self {
            Method::Multi => StatisticKind::MultivariateSum,
            Method::MultiMax => StatisticKind::MultivariateMax,
            Method::Func => StatisticKind::FunctionalUnweighted,
            Method::Wfunc => StatisticKind::FunctionalWeighted,
        }
    }

    pub fn is_functional(self) -> bool {
        matches!(self, Method::Func | Method::Wfunc)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = FcovError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multi" | "multivariate" => Ok(Method::Multi),
            "multi-max" => Ok(Method::MultiMax),
            "func" => Ok(Method::Func),
            "wfunc" => Ok(Method::Wfunc),
            other => Err(FcovError::InvalidInput(format!("unknown method '{other}'"))),
        }
    }
}

/// `round(n^{1/3})`, clamped to `1..=n`.
pub fn default_block(n: usize) -> usize {
    ((n as f64).cbrt().round() as usize).clamp(1, n.max(1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSettings {
    pub method: Method,
    pub alternative: Alternative,
    /// Projection dimension of the multivariate methods.
    pub d: usize,
    pub eps1: f64,
    pub eps2: f64,
    /// Block length; `None` means [`default_block`].
    pub block: Option<usize>,
    pub replicates: usize,
    pub seed: u64,
}

impl Default for TestSettings {
    fn default() -> Self {
        Self {
            method: Method::default(),
            alternative: Alternative::default(),
            d: 8,
            eps1: DEFAULT_EPS1,
            eps2: DEFAULT_EPS2,
            block: None,
            replicates: 1000,
            seed: 0,
        }
    }
}

impl TestSettings {
    pub fn block_for(&self, n: usize) -> usize {
        self.block.unwrap_or_else(|| default_block(n))
    }
}

/// Product series and weighting of one test, ready for evaluation.
#[derive(Debug, Clone)]
pub struct PreparedTest {
    pub products: ScoreProductSeries,
    pub kind: StatisticKind,
    pub alternative: Alternative,
    pub block: usize,
    pub selection: Option<PreselectionResult>,
}

impl PreparedTest {
    fn weighting(&self) -> Weighting {
        match (&self.selection, self.kind) {
            (Some(sel), StatisticKind::FunctionalWeighted) => functional_weighting(true, sel),
            (_, StatisticKind::FunctionalUnweighted) => Weighting::Unit,
            _ => Weighting::LongRun,
        }
    }

    /// Observed statistic and change-point estimate.
    pub fn statistic(&self) -> Result<StatisticValue> {
        let e = evaluate_products(
            self.products.values(),
            self.weighting(),
            self.kind.form(),
            self.alternative,
            self.block,
            true,
            false,
        )?;
        Ok(StatisticValue {
            value: e.value,
            kind: self.kind,
            alternative: self.alternative,
            changepoint_estimate: e.changepoint.expect("requested"),
            components_used: e.components_used,
        })
    }

    /// Observed statistic only, skipping the change-point scan.
    pub fn value(&self) -> Result<f64> {
        let e = evaluate_products(
            self.products.values(),
            self.weighting(),
            self.kind.form(),
            self.alternative,
            self.block,
            false,
            false,
        )?;
        Ok(e.value)
    }

    /// Weighted CUSUM path `T_k`, `k = 1..=n`, with the same weights as the statistic.
    pub fn path(&self) -> Result<Vec<f64>> {
        let w = weights_for(self.products.values(), self.weighting(), self.alternative, self.block)?;
        Ok(quadratic_path(&partial_sums(&self.products), &w))
    }

    pub fn bootstrap(&self, replicates: usize, seed: u64, component_p_values: bool) -> Result<BootstrapOutcome> {
        let mut cfg = BootstrapConfig::new(replicates, self.block, seed, self.alternative, self.kind);
        cfg.s11_sq = self.selection.as_ref().map(|s| s.s11_sq);
        cfg.component_p_values = component_p_values;
        bootstrap_test(&self.products, &cfg)
    }
}

/// Product series for `settings.method` from a score matrix: the vech
/// products of the leading `d` scores, or the preselected pairs.
pub fn prepare_test(scores: &ScoreMatrix, settings: &TestSettings) -> Result<PreparedTest> {
    let n = scores.n();
    let block = settings.block_for(n);
    if block == 0 || block > n {
        return Err(FcovError::invalid(format!("block length {block} outside 1..={n}")));
    }
    let (products, selection) = if settings.method.is_functional() {
        let sel = preselect_pairs(scores, settings.eps1, settings.eps2, block, settings.alternative)?;
        (functional_products(scores, &sel)?, Some(sel))
    } else {
        if settings.d == 0 {
            return Err(FcovError::invalid("projection dimension d must be >= 1"));
        }
        (vech_products(&scores.leading(settings.d.min(scores.dim()))), None)
    };
    Ok(PreparedTest { products, kind: settings.method.kind(), alternative: settings.alternative, block, selection })
}

/// Principal components used by `method`: the leading `d` for the
/// multivariate methods, every numerically positive one otherwise.
pub fn sample_basis(x: &FunctionalSample, method: Method, d: usize) -> Result<EigenSystem> {
    let basis = if method.is_functional() { principal_components(x, None)? } else { principal_components(x, Some(d))? };
    if basis.dim() == 0 {
        return Err(FcovError::Degenerate("sample covariance has no positive eigenvalue".into()));
    }
    Ok(basis)
}

/// Scores of a curve sample for `settings.method`.
pub fn sample_scores(x: &FunctionalSample, settings: &TestSettings) -> Result<ScoreMatrix> {
    check_variation(x.values())?;
    let basis = sample_basis(x, settings.method, settings.d)?;
    compute_scores(x, &basis)
}

/// Reject samples whose total variation is negligible against their size.
pub fn check_variation(values: &nalgebra::DMatrix<f64>) -> Result<()> {
    let n = values.nrows();
    if n < 2 || values.ncols() == 0 {
        return Err(FcovError::invalid(format!("need at least two observations, got {n}")));
    }
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut total = 0.0;
    for col in values.column_iter() {
        let mean = col.sum() / n as f64;
        total += col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    }
    let per_entry = total / (n * values.ncols()) as f64;
    if per_entry <= (1e-12 * scale).powi(2) {
        return Err(FcovError::Degenerate("the series is constant over time".into()));
    }
    Ok(())
}

/// Full test on a curve sample.
pub fn test_sample(x: &FunctionalSample, settings: &TestSettings) -> Result<(StatisticValue, BootstrapOutcome)> {
    let scores = sample_scores(x, settings)?;
    let prepared = prepare_test(&scores, settings)?;
    let stat = prepared.statistic()?;
    let boot = prepared.bootstrap(settings.replicates, settings.seed, false)?;
    Ok((stat, boot))
}
