use rayon::prelude::*;
use serde::Serialize;

use super::{estimate, EstimationData, EstimatorKind, ModelSpec, Outcome};

#[derive(Debug, Clone, Serialize)]
pub struct ProgressionRow {
    pub column: usize,
    pub estimator: &'static str,
    pub addresses: &'static str,
    pub coefficient: Option<f64>,
    pub se: Option<f64>,
    pub ape: Option<f64>,
    pub ape_se: Option<f64>,
    pub observations: Option<usize>,
    pub loglik: Option<f64>,
    pub pseudo_r2: Option<f64>,
    pub error: Option<String>,
}

const LADDER: [(EstimatorKind, &str); 5] = [
    (EstimatorKind::FeLpm, "--"),
    (EstimatorKind::PooledProbit, "Neither"),
    (EstimatorKind::CreProbit, "Stable het."),
    (EstimatorKind::MsmProbit, "TV confounding"),
    (EstimatorKind::MsmCre, "Both"),
];

/// Fits the five-column ladder on next-exposure clicking; a failing column is
/// reported with its error and the others still run.
pub fn progression(data: &EstimationData, ape_weighted: bool) -> Vec<ProgressionRow> {
    LADDER
        .par_iter()
        .enumerate()
        .map(|(k, (kind, addresses))| {
            let mut spec = ModelSpec::new(Outcome::Click, *kind);
            spec.ape_weighted = ape_weighted;
            let mut row = ProgressionRow {
                column: k + 1,
                estimator: kind.as_str(),
                addresses,
                coefficient: None,
                se: None,
                ape: None,
                ape_se: None,
                observations: None,
                loglik: None,
                pseudo_r2: None,
                error: None,
            };
            match estimate(&spec, data) {
                Ok(est) => {
                    row.coefficient = est.model.coef_of("click_t");
                    row.se = est.model.se_of("click_t");
                    if let Some(a) = est.ape_of("click_t") {
                        row.ape = Some(a.value);
                        row.ape_se = Some(a.se);
                    }
                    row.observations = Some(est.model.nobs);
                    row.loglik = est.model.loglik;
                    row.pseudo_r2 = est.model.pseudo_r2;
                }
                Err(e) => row.error = Some(e.to_string()),
            }
            row
        })
        .collect()
}
