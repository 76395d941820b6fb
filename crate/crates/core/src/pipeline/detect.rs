use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::report::{ComponentP, ConfigEcho, TestReport};
use super::{check_variation, prepare_test, sample_scores, TestSettings};
use crate::covspec::separable_covariance;
use crate::error::{FcovError, Result};
use crate::fts::{detrend_columns, detrend_polynomial, FunctionalSample, VolumeSeries};
use crate::io::{read_sample_csv, read_volume, write_csv_matrix, write_volume};
use crate::scores::{compute_scores, ScoreMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputFormat {
    /// One curve per row on a uniform grid over `[0, 1]`.
    Csv,
    /// `FCOV` binary volume series.
    Fcov,
}

impl InputFormat {
    pub fn name(self) -> &'static str {
        match self {
            InputFormat::Csv => "csv",
            InputFormat::Fcov => "fcov",
        }
    }

    /// Guess from the file extension, defaulting to CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("fcov") => InputFormat::Fcov,
            _ => InputFormat::Csv,
        }
    }
}

impl std::str::FromStr for InputFormat {
    type Err = FcovError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(InputFormat::Csv),
            "fcov" => Ok(InputFormat::Fcov),
            other => Err(FcovError::InvalidInput(format!("unknown input format '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectRequest {
    pub input: PathBuf,
    pub format: InputFormat,
    pub settings: TestSettings,
    /// Eigenfunctions per spatial axis for the multivariate methods on volumes.
    pub d_axis: usize,
    /// Cap on the tensor basis of the functional methods on volumes.
    pub max_basis: usize,
    /// Polynomial trend removed from volumes before testing.
    pub detrend_order: Option<usize>,
    pub alpha: f64,
    /// Number of component p-values to report.
    pub top: usize,
    pub timing: bool,
}

impl DetectRequest {
    pub fn new(input: impl Into<PathBuf>) -> Self {
        let input = input.into();
        Self {
            format: InputFormat::from_path(&input),
            input,
            settings: TestSettings::default(),
            d_axis: 2,
            max_basis: 10_000,
            detrend_order: Some(3),
            alpha: 0.05,
            top: 0,
            timing: false,
        }
    }

    fn validate(&self) -> Result<()> {
        let s = &self.settings;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(FcovError::invalid(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(s.eps1 >= 0.0 && s.eps2 >= 0.0) {
            return Err(FcovError::invalid("thresholds must be >= 0"));
        }
        if s.replicates == 0 {
            return Err(FcovError::invalid("need at least one bootstrap replicate"));
        }
        if self.d_axis == 0 || self.max_basis == 0 {
            return Err(FcovError::invalid("d_axis and max_basis must be >= 1"));
        }
        Ok(())
    }
}

enum Loaded {
    Curves(FunctionalSample),
    Volume(VolumeSeries),
}

fn volume_scores(v: &VolumeSeries, req: &DetectRequest) -> Result<ScoreMatrix> {
    let dims = v.dims();
    let basis = if req.settings.method.is_functional() {
        separable_covariance(v, dims)?.positive_part().truncate(req.max_basis)
    } else {
        separable_covariance(v, dims.map(|k| req.d_axis.min(k)))?.positive_part()
    };
    if basis.dim() == 0 {
        return Err(FcovError::Degenerate("separable covariance has no positive eigenvalue".into()));
    }
    compute_scores(&v.to_sample(), &basis)
}

/// Load, preprocess, project and test one input.
///
/// Input and configuration problems are errors. Data that cannot be tested
/// (a constant series, no usable component) yield a report with p-value 1,
/// decision "no change" and a diagnostic.
pub fn cmd_detect(req: &DetectRequest) -> Result<TestReport> {
    req.validate()?;
    let start = req.timing.then(std::time::Instant::now);
    let loaded = match req.format {
        InputFormat::Csv => Loaded::Curves(read_sample_csv(&req.input)?),
        InputFormat::Fcov => {
            let (v, _) = read_volume(&req.input)?;
            Loaded::Volume(match req.detrend_order {
                Some(order) => detrend_polynomial(&v, order)?,
                None => v,
            })
        }
    };
    let (n, grid) = match &loaded {
        Loaded::Curves(x) => (x.n(), x.grid_len()),
        Loaded::Volume(v) => (v.n(), v.values().ncols()),
    };
    let s = &req.settings;
    let block = s.block_for(n);
    let volume = matches!(loaded, Loaded::Volume(_));
    let mut report = TestReport {
        method: s.method,
        alternative: s.alternative,
        statistic: 0.0,
        p_value: 1.0,
        alpha: req.alpha,
        change_detected: false,
        changepoint: None,
        components: 0,
        top_components: Vec::new(),
        runtime_ms: None,
        diagnostic: None,
        config: ConfigEcho {
            input: req.input.display().to_string(),
            format: req.format.name().to_string(),
            n,
            grid,
            d: (!volume && !s.method.is_functional()).then_some(s.d),
            d_axis: (volume && !s.method.is_functional()).then_some(req.d_axis),
            block,
            replicates: s.replicates,
            eps1: s.eps1,
            eps2: s.eps2,
            seed: s.seed,
        },
    };
    let mut settings = s.clone();
    settings.block = Some(block);
    match run(&loaded, req, &settings) {
        Ok(done) => {
            let (stat, boot, pairs) = done;
            report.statistic = stat.value;
            report.p_value = boot.p_value;
            report.change_detected = boot.p_value <= req.alpha;
            report.changepoint = Some(stat.changepoint_estimate);
            report.components = stat.components_used;
            if let Some(ps) = boot.component_p_values {
                let mut idx: Vec<usize> = (0..ps.len()).collect();
                idx.sort_by(|&a, &b| ps[a].total_cmp(&ps[b]).then(a.cmp(&b)));
                report.top_components = idx
                    .into_iter()
                    .take(req.top)
                    .map(|i| ComponentP { l1: pairs[i].0, l2: pairs[i].1, p_value: ps[i] })
                    .collect();
            }
        }
        Err(FcovError::Degenerate(msg)) => report.diagnostic = Some(format!("degenerate data: {msg}")),
        Err(e) => return Err(e),
    }
    report.runtime_ms = start.map(|t| t.elapsed().as_secs_f64() * 1e3);
    Ok(report)
}

type RunOutput = (crate::statistics::StatisticValue, crate::bootstrap::BootstrapOutcome, Vec<(usize, usize)>);

fn run(loaded: &Loaded, req: &DetectRequest, settings: &TestSettings) -> Result<RunOutput> {
    let scores = match loaded {
        Loaded::Curves(x) => sample_scores(x, settings)?,
        Loaded::Volume(v) => {
            check_variation(v.values())?;
            volume_scores(v, req)?
        }
    };
    let prepared = prepare_test(&scores, settings)?;
    let stat = prepared.statistic()?;
    let boot = prepared.bootstrap(settings.replicates, settings.seed, req.top > 0)?;
    Ok((stat, boot, prepared.products.pair_index().to_vec()))
}

/// Remove a polynomial trend of `order` from every voxel (or grid point)
/// and write the result in the input's format.
pub fn cmd_preprocess(input: &Path, output: &Path, format: InputFormat, order: usize) -> Result<()> {
    match format {
        InputFormat::Fcov => {
            let (v, dtype) = read_volume(input)?;
            write_volume(output, &detrend_polynomial(&v, order)?, dtype)
        }
        InputFormat::Csv => {
            let x = read_sample_csv(input)?;
            write_csv_matrix(output, &detrend_columns(x.values(), order)?, None)
        }
    }
}
