use rayon::prelude::*;
use serde::Serialize;

use crate::design::{Formula, Frame, Term};
use crate::error::{Error, Result};
use crate::glm::{fit_glm, FitOptions, FittedModel, Link};
use crate::panel::{PanelDataset, Transition};
use crate::stats::{histogram, quantile_sorted, sorted, Bin, Summary};

pub const POSITIVITY_FLOOR: f64 = 1e-6;

pub const HISTORY_TERMS: [&str; 5] = ["lag_report", "cum_clicks", "cum_reports", "order", "log_gap"];

#[derive(Debug, Clone)]
pub struct TreatmentSpec {
    /// Time-varying history columns added to the denominator model only.
    pub history_terms: Vec<String>,
    pub positivity_floor: f64,
}

impl Default for TreatmentSpec {
    fn default() -> Self {
        TreatmentSpec {
            history_terms: HISTORY_TERMS.iter().map(|s| s.to_string()).collect(),
            positivity_floor: POSITIVITY_FLOOR,
        }
    }
}

/// Exposure-level frame: baseline covariates, campaign dummies and histories.
#[derive(Debug, Clone)]
pub struct ExposureFrame {
    pub frame: Frame,
    pub baseline: Vec<String>,
    pub campaigns: Vec<String>,
    pub treated: Vec<f64>,
    pub clusters: Vec<u32>,
}

pub fn baseline_columns(frame: &mut Frame, panel: &PanelDataset, rows: &[usize]) -> Vec<String> {
    let base = |i: usize| &panel.employees[panel.owner[i]].baseline;
    let mut names = Vec::new();
    let role: Vec<&str> = rows.iter().map(|&i| base(i).role.as_str()).collect();
    names.extend(frame.add_dummies("role", &role));
    let job: Vec<&str> = rows.iter().map(|&i| base(i).job_status.as_str()).collect();
    names.extend(frame.add_dummies("job_status", &job));
    let org: Vec<&str> = rows.iter().map(|&i| base(i).org_unit.as_str()).collect();
    names.extend(frame.add_dummies("org_unit", &org));

    let tenure: Vec<Option<f64>> = rows.iter().map(|&i| base(i).tenure_days).collect();
    let missing = tenure.iter().filter(|t| t.is_none()).count();
    if missing < tenure.len() {
        frame.add("tenure_years", tenure.iter().map(|t| t.map_or(0.0, |d| d / 365.25)).collect());
        names.push("tenure_years".into());
        if missing > 0 {
            frame.add("tenure_missing", tenure.iter().map(|t| t.is_none() as u8 as f64).collect());
            names.push("tenure_missing".into());
        }
    }
    names
}

pub fn exposure_frame(panel: &PanelDataset) -> ExposureFrame {
    let n = panel.exposures.len();
    let rows: Vec<usize> = (0..n).collect();
    let mut frame = Frame::new(n);
    let baseline = baseline_columns(&mut frame, panel, &rows);
    let camp: Vec<u32> = panel.exposures.iter().map(|r| r.campaign_id).collect();
    let campaigns = frame.add_dummies("campaign", &camp);
    let h = &panel.histories;
    frame.add("first", h.iter().map(|h| h.first as u8 as f64).collect());
    frame.add("lag_click", h.iter().map(|h| h.lag_click as u8 as f64).collect());
    frame.add("lag_report", h.iter().map(|h| h.lag_report as u8 as f64).collect());
    frame.add("cum_clicks", h.iter().map(|h| h.cum_clicks as f64).collect());
    frame.add("cum_reports", h.iter().map(|h| h.cum_reports as f64).collect());
    frame.add("order", h.iter().map(|h| h.order as f64).collect());
    frame.add("log_gap", h.iter().map(|h| if h.first { 0.0 } else { h.gap_days.max(0.0).ln_1p() }).collect());
    ExposureFrame {
        frame,
        baseline,
        campaigns,
        treated: panel.exposures.iter().map(|r| r.clicked as u8 as f64).collect(),
        clusters: panel.owner.iter().map(|&e| e as u32).collect(),
    }
}

pub fn treatment_formulas(ef: &ExposureFrame, spec: &TreatmentSpec) -> (Formula, Formula) {
    let mut num = Formula::with_intercept();
    num.push_main(&ef.baseline);
    num.push_main(&ef.campaigns);
    num.push(Term::main("first"));
    num.push(Term::main("lag_click"));
    let mut den = num.clone();
    den.push_main(&spec.history_terms);
    (num, den)
}

#[derive(Debug, Clone)]
pub struct TreatmentModels {
    pub numerator: FittedModel,
    pub denominator: FittedModel,
    pub num_formula: Formula,
    pub den_formula: Formula,
    /// Fitted probabilities of clicking, one per exposure.
    pub p_num: Vec<f64>,
    pub p_den: Vec<f64>,
}

pub fn fit_treatment_models(panel: &PanelDataset, spec: &TreatmentSpec) -> Result<TreatmentModels> {
    let ef = exposure_frame(panel);
    let (num_formula, den_formula) = treatment_formulas(&ef, spec);
    let opts = FitOptions::default();
    let fit = |f: &Formula| -> Result<(FittedModel, Vec<f64>)> {
        let x = f.build(&ef.frame)?.with_clusters(ef.clusters.clone());
        let m = fit_glm(&x, &ef.treated, Link::Logit, &opts)?;
        let p = (0..x.nrows).map(|i| Link::Logit.cdf(x.row(i).iter().zip(&m.coef).map(|(a, b)| a * b).sum())).collect();
        Ok((m, p))
    };
    let (numerator, p_num) = fit(&num_formula)?;
    let (denominator, p_den) = fit(&den_formula)?;
    Ok(TreatmentModels { numerator, denominator, num_formula, den_formula, p_num, p_den })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet {
    /// Raw stabilized weight per exposure.
    pub sw: Vec<f64>,
    pub trimmed: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
    pub lower_pct: f64,
    pub upper_pct: f64,
    pub capped_low: usize,
    pub capped_high: usize,
    pub p_num: Vec<f64>,
    pub p_den: Vec<f64>,
}

impl WeightSet {
    /// Trimmed weight attached to each transition (the weight of its exposure t).
    pub fn for_transitions(&self, ts: &[Transition]) -> Vec<f64> {
        ts.iter().map(|t| self.trimmed[t.exposure]).collect()
    }
}

/// Cumulative products of observed-arm probability ratios along each employee's exposures.
pub fn stabilized_from_probs(panel: &PanelDataset, p_num: &[f64], p_den: &[f64], floor: f64) -> Result<WeightSet> {
    let per_emp: Vec<Result<Vec<f64>>> = panel
        .employees
        .par_iter()
        .map(|emp| {
            let mut out = Vec::with_capacity(emp.len);
            let mut sw = 1.0;
            for k in emp.start..emp.start + emp.len {
                let a = panel.exposures[k].clicked;
                let (num, den) = if a { (p_num[k], p_den[k]) } else { (1.0 - p_num[k], 1.0 - p_den[k]) };
                if !(den >= floor) {
                    return Err(Error::Positivity { employee: emp.id.clone(), exposure: k - emp.start + 1, prob: den });
                }
                sw *= num / den;
                out.push(sw);
            }
            Ok(out)
        })
        .collect();
    let mut sw = Vec::with_capacity(panel.exposures.len());
    for r in per_emp {
        sw.extend(r?);
    }
    if let Some(bad) = sw.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::Validation(format!("stabilized weight at exposure {bad} is {}", sw[bad])));
    }
    let s = sorted(&sw);
    Ok(WeightSet {
        trimmed: sw.clone(),
        lower: s[0],
        upper: s[s.len() - 1],
        lower_pct: 0.0,
        upper_pct: 100.0,
        capped_low: 0,
        capped_high: 0,
        sw,
        p_num: p_num.to_vec(),
        p_den: p_den.to_vec(),
    })
}

pub fn stabilized_weights(panel: &PanelDataset, models: &TreatmentModels, floor: f64) -> Result<WeightSet> {
    stabilized_from_probs(panel, &models.p_num, &models.p_den, floor)
}

/// Caps the raw weights at the given percentiles of the raw weights.
pub fn trim_weights(ws: &WeightSet, lower_pct: f64, upper_pct: f64) -> Result<WeightSet> {
    if !(0.0..100.0).contains(&lower_pct) || !(lower_pct < upper_pct && upper_pct <= 100.0) {
        return Err(Error::Config(format!(
            "trim percentiles must satisfy 0 <= lower < upper <= 100, got {lower_pct}, {upper_pct}"
        )));
    }
    let s = sorted(&ws.sw);
    let lower = quantile_sorted(&s, lower_pct / 100.0);
    let upper = quantile_sorted(&s, upper_pct / 100.0);
    let mut out = clamp_weights(ws, lower, upper);
    out.lower_pct = lower_pct;
    out.upper_pct = upper_pct;
    Ok(out)
}

/// Caps the raw weights at fixed cutoffs.
pub fn clamp_weights(ws: &WeightSet, lower: f64, upper: f64) -> WeightSet {
    let mut out = ws.clone();
    out.capped_low = ws.sw.iter().filter(|w| **w < lower).count();
    out.capped_high = ws.sw.iter().filter(|w| **w > upper).count();
    out.trimmed = ws.sw.iter().map(|w| w.clamp(lower, upper)).collect();
    out.lower = lower;
    out.upper = upper;
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct WeightDiagnostics {
    pub raw: Summary,
    pub trimmed: Summary,
    pub lower: f64,
    pub upper: f64,
    pub capped_low: usize,
    pub capped_high: usize,
    pub histogram: Vec<Bin>,
}

pub fn weight_diagnostics(ws: &WeightSet, bins: usize) -> WeightDiagnostics {
    let raw = Summary::of(&ws.sw);
    WeightDiagnostics {
        raw,
        trimmed: Summary::of(&ws.trimmed),
        lower: ws.lower,
        upper: ws.upper,
        capped_low: ws.capped_low,
        capped_high: ws.capped_high,
        histogram: histogram(&ws.sw, raw.min, raw.max, bins),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BalanceRow {
    pub term: String,
    pub unweighted: f64,
    pub weighted: f64,
}

/// Logit coefficients of treatment on each history term, without and with the trimmed weights.
pub fn balance(panel: &PanelDataset, ws: &WeightSet, spec: &TreatmentSpec) -> Result<Vec<BalanceRow>> {
    let ef = exposure_frame(panel);
    let (_, den) = treatment_formulas(&ef, spec);
    let x = den.build(&ef.frame)?.with_clusters(ef.clusters.clone());
    let opts = FitOptions::default();
    let plain = fit_glm(&x, &ef.treated, Link::Logit, &opts)?;
    let weighted = fit_glm(&x.with_weights(ws.trimmed.clone()), &ef.treated, Link::Logit, &opts)?;
    Ok(spec
        .history_terms
        .iter()
        .map(|t| BalanceRow {
            term: t.clone(),
            unweighted: plain.coef_of(t).unwrap_or(f64::NAN),
            weighted: weighted.coef_of(t).unwrap_or(f64::NAN),
        })
        .collect())
}
