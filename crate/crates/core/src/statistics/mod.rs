//! CUSUM-type statistics on score-product series: the diagonal-corrected
//! multivariate statistics (sum and max forms, AMOC and epidemic), the
//! unweighted and weighted fully functional statistics, and the pair
//! preselection that makes the latter tractable.

mod engine;
mod functional;
mod preselect;

pub use engine::{
    lambda_max, lambda_max_epidemic, omega_amoc, omega_amoc_full, omega_epidemic, omega_epidemic_full,
    partial_sums, quadratic_path, Form,
};
pub use functional::{functional_norm_oracle, functional_path, functional_products, omega_functional};
pub use preselect::{preselect_pairs, PreselectionResult, DEFAULT_EPS1, DEFAULT_EPS2};

pub(crate) use engine::{evaluate_products, weights_for, Weighting};
pub(crate) use functional::functional_weighting;

use serde::{Deserialize, Serialize};

use crate::scores::Changepoint;
use crate::Alternative;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StatisticKind {
    MultivariateSum,
    MultivariateMax,
    FunctionalUnweighted,
    FunctionalWeighted,
}

impl StatisticKind {
    pub fn form(self) -> Form {
        match self {
            StatisticKind::MultivariateMax => Form::Max,
            _ => Form::Sum,
        }
    }
}

impl std::fmt::Display for StatisticKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StatisticKind::MultivariateSum => "multivariate-sum",
            StatisticKind::MultivariateMax => "multivariate-max",
            StatisticKind::FunctionalUnweighted => "functional-unweighted",
            StatisticKind::FunctionalWeighted => "functional-weighted",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticValue {
    pub value: f64,
    pub kind: StatisticKind,
    pub alternative: Alternative,
    pub changepoint_estimate: Changepoint,
    pub components_used: usize,
}
