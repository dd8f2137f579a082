use serde::Serialize;

use super::inference::{wald_equal, wald_zero, WaldTest};
use super::{estimate, similarity_grid, Engagement, Estimate, EstimationData, EstimatorKind, ModelSpec, Outcome};
use crate::design::Term;
use crate::error::{Error, Result};
use crate::similarity::{CUE_NAMES, FORMAT_NAMES};

pub const DESIGN_FEATURES: [&str; 4] = ["ann_land", "report_pitch", "emot_heur", "ann_email"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Similarity,
    Design,
    Cues,
    CueByEducation,
    Engagement,
}

impl Suite {
    pub const ALL: [Suite; 5] =
        [Suite::Similarity, Suite::Design, Suite::Cues, Suite::CueByEducation, Suite::Engagement];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Similarity => "similarity",
            Suite::Design => "design",
            Suite::Cues => "cues",
            Suite::CueByEducation => "cue-by-education",
            Suite::Engagement => "engagement",
        }
    }

    pub fn parse(s: &str) -> Option<Suite> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Omitted {
    pub term: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct SuiteModel {
    pub label: String,
    pub estimate: Estimate,
    pub omitted: Vec<Omitted>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteTest {
    pub model: String,
    pub test: WaldTest,
}

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub suite: Suite,
    pub kind: EstimatorKind,
    pub rows_used: usize,
    pub rows_excluded: usize,
    pub models: Vec<SuiteModel>,
    pub tests: Vec<SuiteTest>,
}

/// Fits the model, dropping suite-added terms that are collinear, empty, or
/// perfectly separating, and refitting until the fit succeeds.
fn fit_with_drops(mut spec: ModelSpec, data: &EstimationData) -> Result<(Estimate, Vec<Omitted>)> {
    let mut omitted = Vec::new();
    loop {
        let err = match estimate(&spec, data) {
            Ok(e) => return Ok((e, omitted)),
            Err(e) => e,
        };
        let drop = match &err {
            Error::Collinear { sets } => {
                let mut picks = Vec::new();
                for set in sets {
                    let pick = spec
                        .extra
                        .iter()
                        .enumerate()
                        .filter(|(_, t)| set.contains(&t.name()))
                        .max_by_key(|(k, t)| (t.factors.len(), *k))
                        .map(|(_, t)| t.name());
                    let Some(name) = pick else { return Err(err) };
                    let reason = if set.len() == 1 {
                        "empty cell (all-zero column)".to_string()
                    } else {
                        let others: Vec<&str> = set.iter().filter(|s| **s != name).map(|s| s.as_str()).collect();
                        format!("perfectly collinear with {}", others.join(", "))
                    };
                    if !picks.iter().any(|(n, _)| *n == name) {
                        picks.push((name, reason));
                    }
                }
                picks
            }
            Error::Separation { column } if spec.extra.iter().any(|t| t.name() == *column) => {
                vec![(column.clone(), "perfect separation".to_string())]
            }
            _ => return Err(err),
        };
        for (name, reason) in drop {
            spec.extra.retain(|t| t.name() != name);
            omitted.push(Omitted { term: name, reason });
        }
    }
}

fn click_with(var: &str) -> Term {
    Term::interaction(&["click_t", var])
}

fn present(est: &Estimate, names: &[String]) -> Vec<String> {
    names.iter().filter(|n| est.model.index(n).is_some()).cloned().collect()
}

pub fn interaction_suite(
    data: &EstimationData,
    suite: Suite,
    kind: EstimatorKind,
    outcome: Outcome,
) -> Result<SuiteResult> {
    let base = ModelSpec::new(outcome, kind);
    let mut models = Vec::new();
    let mut tests = Vec::new();
    let mut rows_excluded = 0;
    let mut rows_used = data.n();

    let push_test =
        |models: &Vec<SuiteModel>, label: &str, names: Vec<String>, tests: &mut Vec<SuiteTest>| -> Result<()> {
            let m: &SuiteModel = models.last().unwrap();
            let names = present(&m.estimate, &names);
            if !names.is_empty() {
                tests.push(SuiteTest { model: m.label.clone(), test: wald_zero(&m.estimate.model, &names, label)? });
            }
            Ok(())
        };

    match suite {
        Suite::Similarity => {
            let mut spec = base.clone();
            spec.extra = vec![Term::main("sim"), click_with("sim")];
            spec.grid = Some(("sim".into(), similarity_grid(data, "sim")));
            let (estimate, omitted) = fit_with_drops(spec, data)?;
            models.push(SuiteModel { label: "similarity".into(), estimate, omitted });
            push_test(&models, "click_t:sim = 0", vec!["click_t:sim".into()], &mut tests)?;
        }
        Suite::Design => {
            let mut spec = base.clone();
            for f in DESIGN_FEATURES {
                spec.extra.push(Term::main(f));
                spec.extra.push(click_with(f));
            }
            let (estimate, omitted) = fit_with_drops(spec, data)?;
            models.push(SuiteModel { label: "design".into(), estimate, omitted });
            let names = DESIGN_FEATURES.iter().map(|f| format!("click_t:{f}")).collect();
            push_test(&models, "joint design interactions = 0", names, &mut tests)?;
        }
        Suite::Cues => {
            let cues: Vec<&str> = CUE_NAMES.iter().chain(&FORMAT_NAMES).copied().collect();
            for c in &cues {
                let mut spec = base.clone();
                spec.extra = vec![Term::main(c), click_with(c)];
                let (estimate, omitted) = fit_with_drops(spec, data)?;
                models.push(SuiteModel { label: (*c).to_string(), estimate, omitted });
                push_test(&models, &format!("click_t:{c} = 0"), vec![format!("click_t:{c}")], &mut tests)?;
            }
            let mut spec = base.clone();
            for c in &cues {
                spec.extra.push(Term::main(c));
            }
            for c in &cues {
                spec.extra.push(click_with(c));
            }
            let (estimate, omitted) = fit_with_drops(spec, data)?;
            models.push(SuiteModel { label: "joint".into(), estimate, omitted });
            let names = cues.iter().map(|c| format!("click_t:{c}")).collect();
            push_test(&models, "joint cue interactions = 0", names, &mut tests)?;
        }
        Suite::CueByEducation => {
            for c in CUE_NAMES {
                let mut spec = base.clone();
                spec.extra = vec![
                    Term::main(c),
                    Term::main("emot_heur"),
                    Term::interaction(&[c, "emot_heur"]),
                    click_with(c),
                    click_with("emot_heur"),
                    Term::interaction(&["click_t", c, "emot_heur"]),
                ];
                let (estimate, omitted) = fit_with_drops(spec, data)?;
                models.push(SuiteModel { label: format!("{c} x emot_heur"), estimate, omitted });
                let three = format!("click_t:{c}:emot_heur");
                push_test(&models, &format!("{three} = 0"), vec![three.clone()], &mut tests)?;
            }
        }
        Suite::Engagement => {
            let rows: Vec<usize> = (0..data.n()).filter(|&i| data.engagement[i] != Engagement::Excluded).collect();
            rows_excluded = data.n() - rows.len();
            rows_used = rows.len();
            let sub = data.subset(&rows);
            let mut spec = base.clone();
            spec.treatments = vec!["disengaged".into(), "engaged".into()];
            let (estimate, omitted) = fit_with_drops(spec, &sub)?;
            models.push(SuiteModel { label: "engagement".into(), estimate, omitted });
            let m = &models.last().unwrap().estimate.model;
            tests.push(SuiteTest {
                model: "engagement".into(),
                test: wald_equal(m, "disengaged", "engaged", "disengaged = engaged")?,
            });
        }
    }
    Ok(SuiteResult { suite, kind, rows_used, rows_excluded, models, tests })
}
