mod inference;
mod progression;
mod suite;

pub use inference::{
    ape, coefficient_table, two_sided_p, wald, wald_equal, wald_zero, ApeBlock, ApePoint, ApeTarget, CoefRow, WaldTest,
};
pub use progression::{progression, ProgressionRow};
pub use suite::{interaction_suite, Omitted, Suite, SuiteModel, SuiteResult, SuiteTest, DESIGN_FEATURES};

use serde::Serialize;

use crate::design::{Formula, Frame, Term};
use crate::error::{Error, Result};
use crate::glm::{fe_lpm, fit_glm, FitOptions, FittedModel, Link};
use crate::panel::{PanelDataset, Transition};
use crate::similarity::{ScenarioCode, CUE_NAMES, EDUCATION_NAMES, FORMAT_NAMES};
use crate::weights::WeightSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Click,
    Report,
    Safe,
}

impl Outcome {
    pub fn column(self) -> &'static str {
        match self {
            Outcome::Click => "click_next",
            Outcome::Report => "report_next",
            Outcome::Safe => "safe_next",
        }
    }

    pub fn parse(s: &str) -> Option<Outcome> {
        match s {
            "click" => Some(Outcome::Click),
            "report" => Some(Outcome::Report),
            "safe" => Some(Outcome::Safe),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    FeLpm,
    PooledProbit,
    CreProbit,
    MsmProbit,
    MsmCre,
    MsmLogit,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 6] = [
        EstimatorKind::FeLpm,
        EstimatorKind::PooledProbit,
        EstimatorKind::CreProbit,
        EstimatorKind::MsmProbit,
        EstimatorKind::MsmCre,
        EstimatorKind::MsmLogit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::FeLpm => "fe-lpm",
            EstimatorKind::PooledProbit => "pooled-probit",
            EstimatorKind::CreProbit => "cre-probit",
            EstimatorKind::MsmProbit => "msm-probit",
            EstimatorKind::MsmCre => "msm-cre",
            EstimatorKind::MsmLogit => "msm-logit",
        }
    }

    pub fn parse(s: &str) -> Option<EstimatorKind> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    pub fn link(self) -> Link {
        match self {
            EstimatorKind::FeLpm => Link::Identity,
            EstimatorKind::MsmLogit => Link::Logit,
            _ => Link::Probit,
        }
    }

    pub fn weighted(self) -> bool {
        matches!(self, EstimatorKind::MsmProbit | EstimatorKind::MsmCre | EstimatorKind::MsmLogit)
    }

    pub fn uses_cre(self) -> bool {
        matches!(self, EstimatorKind::CreProbit | EstimatorKind::MsmCre)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CreConfig {
    /// Time-varying covariates whose within-employee means enter the CRE block.
    pub mundlak: Vec<String>,
}

impl Default for CreConfig {
    fn default() -> Self {
        CreConfig { mundlak: ["sim", "ann_land", "report_pitch", "emot_heur", "ann_email"].map(String::from).to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CreTerms {
    pub y1: bool,
    pub r1: bool,
    pub means: Vec<f64>,
    pub n_exposures: usize,
    pub org_unit: String,
    pub job_status: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EngagementRule {
    pub disengaged_max: f64,
    pub engaged_min: f64,
    pub engaged_max: f64,
    pub timeout: f64,
}

impl Default for EngagementRule {
    fn default() -> Self {
        EngagementRule { disengaged_max: 10.0, engaged_min: 20.0, engaged_max: 290.0, timeout: 300.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engagement {
    NoClick,
    Disengaged,
    Engaged,
    /// Clicked in a buffer band, or with no recorded seconds.
    Excluded,
}

impl EngagementRule {
    pub fn classify(&self, clicked: bool, seconds: Option<f64>) -> Engagement {
        if !clicked {
            return Engagement::NoClick;
        }
        match seconds {
            Some(s) if s <= self.disengaged_max || s >= self.timeout => Engagement::Disengaged,
            Some(s) if s >= self.engaged_min && s <= self.engaged_max => Engagement::Engaged,
            _ => Engagement::Excluded,
        }
    }
}

/// Per-employee CRE terms computed over that employee's transitions.
pub fn build_cre_terms(
    panel: &PanelDataset,
    ts: &[Transition],
    frame: &Frame,
    covariates: &[String],
) -> Result<Vec<CreTerms>> {
    let cols: Vec<&[f64]> = covariates
        .iter()
        .map(|c| frame.get(c).ok_or_else(|| Error::Config(format!("unknown Mundlak covariate `{c}`"))))
        .collect::<Result<_>>()?;
    let mut sums = vec![vec![0.0; covariates.len()]; panel.employees.len()];
    let mut counts = vec![0usize; panel.employees.len()];
    for (i, t) in ts.iter().enumerate() {
        counts[t.employee] += 1;
        for (s, c) in sums[t.employee].iter_mut().zip(&cols) {
            *s += c[i];
        }
    }
    Ok(panel
        .employees
        .iter()
        .enumerate()
        .map(|(e, emp)| {
            let first = &panel.exposures[emp.start];
            CreTerms {
                y1: first.clicked,
                r1: first.reported,
                means: sums[e].iter().map(|s| if counts[e] > 0 { s / counts[e] as f64 } else { f64::NAN }).collect(),
                n_exposures: emp.len,
                org_unit: emp.baseline.org_unit.clone(),
                job_status: emp.baseline.job_status.clone(),
            }
        })
        .collect())
}

fn flag(b: bool) -> f64 {
    b as u8 as f64
}

/// Transition-level variables, CRE block, and weights ready for estimation.
#[derive(Debug, Clone)]
pub struct EstimationData {
    pub frame: Frame,
    pub units: Vec<u32>,
    pub weights: Option<Vec<f64>>,
    /// True when the weights were never trimmed.
    pub untrimmed: bool,
    pub next_campaign: Vec<String>,
    pub cre_common: Vec<String>,
    pub engagement: Vec<Engagement>,
}

impl EstimationData {
    pub fn build(
        panel: &PanelDataset,
        ts: &[Transition],
        codes: &[ScenarioCode],
        weights: Option<&WeightSet>,
        cre: &CreConfig,
        rule: &EngagementRule,
    ) -> Result<EstimationData> {
        if ts.is_empty() {
            return Err(Error::Validation("no transitions to estimate on".into()));
        }
        let n = ts.len();
        let mut frame = Frame::new(n);
        frame.add("click_t", ts.iter().map(|t| flag(t.click_t)).collect());
        frame.add("report_t", ts.iter().map(|t| flag(t.report_t)).collect());
        frame.add("click_next", ts.iter().map(|t| flag(t.click_next)).collect());
        frame.add("report_next", ts.iter().map(|t| flag(t.report_next)).collect());
        frame.add("safe_next", ts.iter().map(|t| flag(t.safe_next)).collect());
        frame.add("sim", ts.iter().map(|t| t.sim).collect());
        for name in CUE_NAMES.iter().chain(&FORMAT_NAMES).chain(&EDUCATION_NAMES) {
            frame.add(*name, ts.iter().map(|t| flag(codes[t.scenario_t].feature(name).unwrap())).collect());
        }
        let engagement: Vec<Engagement> = ts.iter().map(|t| rule.classify(t.click_t, t.education_seconds_t)).collect();
        frame.add("disengaged", engagement.iter().map(|e| flag(*e == Engagement::Disengaged)).collect());
        frame.add("engaged", engagement.iter().map(|e| flag(*e == Engagement::Engaged)).collect());
        let next: Vec<u32> = ts.iter().map(|t| t.next_campaign).collect();
        let next_campaign = frame.add_dummies("next_campaign", &next);

        let terms = build_cre_terms(panel, ts, &frame, &cre.mundlak)?;
        let pick = |f: &dyn Fn(&CreTerms) -> f64| -> Vec<f64> { ts.iter().map(|t| f(&terms[t.employee])).collect() };
        frame.add("y1", pick(&|c| flag(c.y1)));
        frame.add("r1", pick(&|c| flag(c.r1)));
        let mut cre_common = vec!["y1".to_string()];
        for (k, cov) in cre.mundlak.iter().enumerate() {
            let name = format!("mean_{cov}");
            frame.add(name.clone(), pick(&|c| c.means[k]));
            cre_common.push(name);
        }
        frame.add("n_exposures", pick(&|c| c.n_exposures as f64));
        cre_common.push("n_exposures".into());
        let org: Vec<&str> = ts.iter().map(|t| terms[t.employee].org_unit.as_str()).collect();
        cre_common.extend(frame.add_dummies("org_unit", &org));
        let job: Vec<&str> = ts.iter().map(|t| terms[t.employee].job_status.as_str()).collect();
        cre_common.extend(frame.add_dummies("job_status", &job));

        Ok(EstimationData {
            frame,
            units: ts.iter().map(|t| t.employee as u32).collect(),
            weights: weights.map(|w| w.for_transitions(ts)),
            untrimmed: weights.is_some_and(|w| w.lower_pct == 0.0 && w.upper_pct == 100.0),
            next_campaign,
            cre_common,
            engagement,
        })
    }

    pub fn n(&self) -> usize {
        self.frame.n
    }

    pub fn subset(&self, rows: &[usize]) -> EstimationData {
        let frame = self.frame.subset(rows);
        // a next-campaign level with no rows left would be an all-zero column
        let next_campaign =
            self.next_campaign.iter().filter(|n| frame.get(n).unwrap().iter().any(|v| *v != 0.0)).cloned().collect();
        EstimationData {
            frame,
            units: rows.iter().map(|&i| self.units[i]).collect(),
            weights: self.weights.as_ref().map(|w| rows.iter().map(|&i| w[i]).collect()),
            untrimmed: self.untrimmed,
            next_campaign,
            cre_common: self.cre_common.clone(),
            engagement: rows.iter().map(|&i| self.engagement[i]).collect(),
        }
    }

    pub fn cre_names(&self, outcome: Outcome) -> Vec<String> {
        let mut v = self.cre_common.clone();
        if outcome != Outcome::Click {
            v.insert(1, "r1".into());
        }
        v
    }
}

#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub outcome: Outcome,
    pub kind: EstimatorKind,
    /// Treatment indicators; an APE is reported for each.
    pub treatments: Vec<String>,
    /// Moderators and interaction terms.
    pub extra: Vec<Term>,
    pub next_campaign_fe: bool,
    /// Average APEs over the weighted sample for weighted estimators.
    pub ape_weighted: bool,
    pub small_sample: bool,
    /// Moderator variable and grid of values for conditional APEs.
    pub grid: Option<(String, Vec<(String, f64)>)>,
}

impl ModelSpec {
    pub fn new(outcome: Outcome, kind: EstimatorKind) -> ModelSpec {
        ModelSpec {
            outcome,
            kind,
            treatments: vec!["click_t".into()],
            extra: Vec::new(),
            next_campaign_fe: true,
            ape_weighted: true,
            small_sample: false,
            grid: None,
        }
    }

    pub fn formula(&self, data: &EstimationData) -> Formula {
        let mut f = Formula { intercept: self.kind != EstimatorKind::FeLpm, terms: Vec::new() };
        f.push_main(&self.treatments);
        for t in &self.extra {
            f.push(t.clone());
        }
        if self.next_campaign_fe {
            f.push_main(&data.next_campaign);
        }
        if self.kind.uses_cre() {
            f.push_main(&data.cre_names(self.outcome));
        }
        f
    }
}

#[derive(Debug, Clone)]
pub struct Estimate {
    pub kind: EstimatorKind,
    pub outcome: Outcome,
    pub formula: Formula,
    pub model: FittedModel,
    pub apes: Vec<ApeBlock>,
    pub warnings: Vec<String>,
}

impl Estimate {
    pub fn ape_of(&self, treatment: &str) -> Option<&ApeBlock> {
        self.apes.iter().find(|a| a.treatment == treatment)
    }
}

pub fn estimate(spec: &ModelSpec, data: &EstimationData) -> Result<Estimate> {
    let mut warnings = Vec::new();
    let weights = if spec.kind.weighted() {
        let w = data
            .weights
            .as_ref()
            .ok_or_else(|| Error::Config(format!("{} needs stabilized weights", spec.kind.as_str())))?;
        if data.untrimmed && spec.kind == EstimatorKind::MsmCre {
            warnings.push("msm-cre fitted with untrimmed weights".to_string());
        }
        Some(w.clone())
    } else {
        None
    };
    let formula = spec.formula(data);
    let y = data.frame.get(spec.outcome.column()).unwrap().to_vec();
    let mut x = formula.build(&data.frame)?.with_clusters(data.units.clone());
    if let Some(w) = &weights {
        x = x.with_weights(w.clone());
    }
    let model = match spec.kind {
        EstimatorKind::FeLpm => fe_lpm(&x, &y, &data.units)?,
        kind => {
            let opts = FitOptions { small_sample: spec.small_sample, ..FitOptions::default() };
            fit_glm(&x, &y, kind.link(), &opts)?
        }
    };
    warnings.extend(model.warnings.iter().cloned());

    let ape_w: Vec<f64> = match (&weights, spec.ape_weighted) {
        (Some(w), true) => w.clone(),
        _ => vec![1.0; data.n()],
    };
    let mut apes = Vec::new();
    for tr in &spec.treatments {
        let others: Vec<&str> = spec.treatments.iter().filter(|t| *t != tr).map(|s| s.as_str()).collect();
        let target = ApeTarget::switch(tr, &others);
        let mut block = ape(&model, &formula, &data.frame, &ape_w, &target, &[])?;
        block.convention = if spec.ape_weighted && weights.is_some() { "weighted" } else { "unweighted" }.into();
        if let Some((var, points)) = &spec.grid {
            let col = data.frame.get(var).ok_or_else(|| Error::Config(format!("unknown moderator `{var}`")))?;
            let (lo, hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
            for (label, at) in points {
                let b = ape(&model, &formula, &data.frame, &ape_w, &target, &[(var.as_str(), *at)])?;
                let outside = *at < lo || *at > hi;
                if outside {
                    warnings.push(format!("grid value {var}={at} lies outside the observed range [{lo}, {hi}]"));
                }
                block.grid.push(ApePoint {
                    label: label.clone(),
                    at: *at,
                    value: b.value,
                    se: b.se,
                    outside_support: outside,
                });
            }
        }
        apes.push(block);
    }
    Ok(Estimate { kind: spec.kind, outcome: spec.outcome, formula, model, apes, warnings })
}

/// Standard reporting grid for a continuous moderator: 0, 0.25, sample mean, 0.75, 1.
pub fn similarity_grid(data: &EstimationData, var: &str) -> Vec<(String, f64)> {
    let col = data.frame.get(var).unwrap_or(&[]);
    let mean = col.iter().sum::<f64>() / col.len().max(1) as f64;
    [("0", 0.0), ("0.25", 0.25), ("mean", mean), ("0.75", 0.75), ("1", 1.0)]
        .into_iter()
        .map(|(l, v)| (format!("{var}={l}"), v))
        .collect()
}
