use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::similarity::{jaccard, Layer, ScenarioCode};

#[derive(Debug, Clone, PartialEq)]
pub struct ExposureRecord {
    pub employee_id: String,
    pub campaign_id: u32,
    pub scenario_id: String,
    pub sent_at: NaiveDate,
    pub clicked: bool,
    pub reported: bool,
    pub education_seconds: Option<f64>,
    pub role: String,
    pub job_status: String,
    pub org_unit: String,
    pub tenure_days: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Baseline {
    pub role: String,
    pub job_status: String,
    pub org_unit: String,
    pub tenure_days: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Employee {
    pub id: String,
    /// Index of the first exposure in `PanelDataset::exposures`.
    pub start: usize,
    pub len: usize,
    pub baseline: Baseline,
}

/// History known at an exposure, built from earlier exposures only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct History {
    pub first: bool,
    pub lag_click: bool,
    pub lag_report: bool,
    pub cum_clicks: u32,
    pub cum_reports: u32,
    /// 1-based position within the employee.
    pub order: u32,
    pub gap_days: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    pub exposures: Vec<ExposureRecord>,
    pub employees: Vec<Employee>,
    /// Employee index for each exposure.
    pub owner: Vec<usize>,
    pub histories: Vec<History>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PanelCounts {
    pub exposures: usize,
    pub employees: usize,
    pub transitions: usize,
}

impl PanelDataset {
    pub fn counts(&self) -> PanelCounts {
        PanelCounts {
            exposures: self.exposures.len(),
            employees: self.employees.len(),
            transitions: self.employees.iter().map(|e| e.len - 1).sum(),
        }
    }

    pub fn exposures_of(&self, e: usize) -> &[ExposureRecord] {
        let emp = &self.employees[e];
        &self.exposures[emp.start..emp.start + emp.len]
    }
}

pub fn ingest_exposures(mut rows: Vec<ExposureRecord>) -> Result<PanelDataset> {
    for (i, r) in rows.iter().enumerate() {
        if r.employee_id.is_empty() {
            return Err(Error::Parse { row: i + 2, msg: "empty employee_id".into() });
        }
        if r.education_seconds.is_some() && !r.clicked {
            return Err(Error::Parse { row: i + 2, msg: "education_seconds present without a click".into() });
        }
        if let Some(s) = r.education_seconds {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::Parse {
                    row: i + 2,
                    msg: format!("education_seconds {s} is not a nonnegative number"),
                });
            }
        }
    }
    rows.sort_by(|a, b| {
        a.employee_id.cmp(&b.employee_id).then(a.sent_at.cmp(&b.sent_at)).then(a.campaign_id.cmp(&b.campaign_id))
    });
    let mut employees: Vec<Employee> = Vec::new();
    let mut owner = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        let new_emp = employees.last().is_none_or(|e| e.id != r.employee_id);
        if new_emp {
            employees.push(Employee {
                id: r.employee_id.clone(),
                start: i,
                len: 0,
                baseline: Baseline {
                    role: r.role.clone(),
                    job_status: r.job_status.clone(),
                    org_unit: r.org_unit.clone(),
                    tenure_days: r.tenure_days,
                },
            });
        }
        let e = employees.last_mut().unwrap();
        e.len += 1;
        owner.push(employees.len() - 1);
    }
    for e in &employees {
        let mut seen = HashMap::new();
        for r in &rows[e.start..e.start + e.len] {
            if seen.insert(r.campaign_id, ()).is_some() {
                return Err(Error::DuplicateExposure { employee: e.id.clone(), campaign: r.campaign_id });
            }
        }
    }
    let histories = employees.iter().flat_map(|e| employee_histories(&rows[e.start..e.start + e.len])).collect();
    Ok(PanelDataset { exposures: rows, employees, owner, histories })
}

fn employee_histories(rows: &[ExposureRecord]) -> Vec<History> {
    let mut out = Vec::with_capacity(rows.len());
    let (mut cc, mut cr) = (0u32, 0u32);
    for (k, r) in rows.iter().enumerate() {
        let h = if k == 0 {
            History {
                first: true,
                lag_click: false,
                lag_report: false,
                cum_clicks: 0,
                cum_reports: 0,
                order: 1,
                gap_days: 0.0,
            }
        } else {
            let prev = &rows[k - 1];
            History {
                first: false,
                lag_click: prev.clicked,
                lag_report: prev.reported,
                cum_clicks: cc,
                cum_reports: cr,
                order: k as u32 + 1,
                gap_days: (r.sent_at - prev.sent_at).num_days() as f64,
            }
        };
        out.push(h);
        cc += r.clicked as u32;
        cr += r.reported as u32;
    }
    out
}

#[derive(Debug, Deserialize)]
struct RawRow {
    employee_id: String,
    campaign_id: String,
    scenario_id: String,
    sent_at: String,
    clicked: String,
    reported: String,
    education_seconds: String,
    role: String,
    job_status: String,
    org_unit: String,
    tenure_days: String,
}

fn flag(s: &str, row: usize, col: &str) -> Result<bool> {
    match s {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(Error::Parse { row, msg: format!("{col} must be 0 or 1, got `{s}`") }),
    }
}

fn opt_num(s: &str, row: usize, col: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .map(Some)
        .ok_or_else(|| Error::Parse { row, msg: format!("{col}: `{s}` is not a number") })
}

pub fn read_exposures<R: Read>(r: R) -> Result<Vec<ExposureRecord>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(r);
    let headers = rdr.headers()?.clone();
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse { row: i + 2, msg: e.to_string() })?;
        let row = rec.position().map_or(i + 2, |p| p.line() as usize);
        let raw: RawRow = rec.deserialize(Some(&headers)).map_err(|e| Error::Parse { row, msg: e.to_string() })?;
        if raw.employee_id.is_empty() || raw.campaign_id.is_empty() {
            return Err(Error::Parse { row, msg: "employee_id and campaign_id must be nonempty".into() });
        }
        let campaign_id = raw
            .campaign_id
            .parse::<u32>()
            .map_err(|_| Error::Parse { row, msg: format!("campaign_id `{}` is not an ordinal", raw.campaign_id) })?;
        let sent_at = NaiveDate::parse_from_str(&raw.sent_at, "%Y-%m-%d")
            .map_err(|_| Error::Parse { row, msg: format!("sent_at `{}` is not an ISO date", raw.sent_at) })?;
        let clicked = flag(&raw.clicked, row, "clicked")?;
        let education_seconds = opt_num(&raw.education_seconds, row, "education_seconds")?;
        if education_seconds.is_some_and(|s| s < 0.0) {
            return Err(Error::Parse { row, msg: "education_seconds is negative".into() });
        }
        if education_seconds.is_some() && !clicked {
            return Err(Error::Parse { row, msg: "education_seconds present without a click".into() });
        }
        out.push(ExposureRecord {
            employee_id: raw.employee_id,
            campaign_id,
            scenario_id: raw.scenario_id,
            sent_at,
            clicked,
            reported: flag(&raw.reported, row, "reported")?,
            education_seconds,
            role: raw.role,
            job_status: raw.job_status,
            org_unit: raw.org_unit,
            tenure_days: opt_num(&raw.tenure_days, row, "tenure_days")?,
        });
    }
    Ok(out)
}

fn opt_fmt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const EXPOSURE_COLUMNS: [&str; 11] = [
    "employee_id",
    "campaign_id",
    "scenario_id",
    "sent_at",
    "clicked",
    "reported",
    "education_seconds",
    "role",
    "job_status",
    "org_unit",
    "tenure_days",
];

pub fn write_exposures<W: Write>(rows: &[ExposureRecord], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(EXPOSURE_COLUMNS)?;
    for r in rows {
        wr.write_record([
            r.employee_id.clone(),
            r.campaign_id.to_string(),
            r.scenario_id.clone(),
            r.sent_at.format("%Y-%m-%d").to_string(),
            (r.clicked as u8).to_string(),
            (r.reported as u8).to_string(),
            opt_fmt(r.education_seconds),
            r.role.clone(),
            r.job_status.clone(),
            r.org_unit.clone(),
            opt_fmt(r.tenure_days),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub employee: usize,
    /// Exposure index of t in `PanelDataset::exposures`.
    pub exposure: usize,
    /// 1-based position of t within the employee.
    pub t: u32,
    pub click_t: bool,
    pub report_t: bool,
    pub education_seconds_t: Option<f64>,
    pub click_next: bool,
    pub report_next: bool,
    pub safe_next: bool,
    pub history: History,
    pub campaign_t: u32,
    pub next_campaign: u32,
    pub scenario_t: usize,
    pub scenario_next: usize,
    /// Jaccard cue similarity between the scenarios at t and t+1.
    pub sim: f64,
    pub weight: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TransitionOptions {
    /// Keep only pairs whose campaigns are consecutive.
    pub consecutive_only: bool,
}

pub fn build_transitions(
    panel: &PanelDataset,
    codes: &[ScenarioCode],
    opts: TransitionOptions,
) -> Result<Vec<Transition>> {
    let index: BTreeMap<&str, usize> = codes.iter().enumerate().map(|(i, c)| (c.scenario_id.as_str(), i)).collect();
    let mut scen = Vec::with_capacity(panel.exposures.len());
    for r in &panel.exposures {
        scen.push(*index.get(r.scenario_id.as_str()).ok_or_else(|| Error::MissingScenario(r.scenario_id.clone()))?);
    }
    let per_emp: Vec<Vec<Transition>> = panel
        .employees
        .par_iter()
        .enumerate()
        .map(|(e, emp)| {
            let mut out = Vec::with_capacity(emp.len.saturating_sub(1));
            for k in emp.start..emp.start + emp.len - 1 {
                let (cur, next) = (&panel.exposures[k], &panel.exposures[k + 1]);
                if opts.consecutive_only && next.campaign_id != cur.campaign_id + 1 {
                    continue;
                }
                out.push(Transition {
                    employee: e,
                    exposure: k,
                    t: panel.histories[k].order,
                    click_t: cur.clicked,
                    report_t: cur.reported,
                    education_seconds_t: cur.education_seconds,
                    click_next: next.clicked,
                    report_next: next.reported,
                    safe_next: next.reported && !next.clicked,
                    history: panel.histories[k],
                    campaign_t: cur.campaign_id,
                    next_campaign: next.campaign_id,
                    scenario_t: scen[k],
                    scenario_next: scen[k + 1],
                    sim: jaccard(&codes[scen[k]], &codes[scen[k + 1]], Layer::Cues),
                    weight: None,
                });
            }
            out
        })
        .collect();
    Ok(per_emp.into_iter().flatten().collect())
}

pub const TRANSITION_COLUMNS: [&str; 21] = [
    "employee_id",
    "t",
    "campaign_t",
    "next_campaign",
    "scenario_t",
    "scenario_next",
    "click_t",
    "report_t",
    "education_seconds_t",
    "click_next",
    "report_next",
    "safe_next",
    "first",
    "lag_click",
    "lag_report",
    "cum_clicks",
    "cum_reports",
    "order",
    "gap_days",
    "sim",
    "weight",
];

pub fn write_transitions<W: Write>(
    panel: &PanelDataset,
    codes: &[ScenarioCode],
    transitions: &[Transition],
    w: W,
) -> Result<()> {
    let b = |v: bool| (v as u8).to_string();
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(TRANSITION_COLUMNS)?;
    for tr in transitions {
        let h = &tr.history;
        wr.write_record([
            panel.employees[tr.employee].id.clone(),
            tr.t.to_string(),
            tr.campaign_t.to_string(),
            tr.next_campaign.to_string(),
            codes[tr.scenario_t].scenario_id.clone(),
            codes[tr.scenario_next].scenario_id.clone(),
            b(tr.click_t),
            b(tr.report_t),
            opt_fmt(tr.education_seconds_t),
            b(tr.click_next),
            b(tr.report_next),
            b(tr.safe_next),
            b(h.first),
            b(h.lag_click),
            b(h.lag_report),
            h.cum_clicks.to_string(),
            h.cum_reports.to_string(),
            h.order.to_string(),
            h.gap_days.to_string(),
            format!("{:.6}", tr.sim),
            tr.weight.map(|v| format!("{v:.9}")).unwrap_or_default(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rate {
    pub events: usize,
    pub trials: usize,
}

impl Rate {
    /// None when the conditioning cell is empty.
    pub fn value(&self) -> Option<f64> {
        (self.trials > 0).then(|| self.events as f64 / self.trials as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionRates {
    /// Pr(click_{t+1} = 1 | click_t = a), indexed by a.
    pub click: [Rate; 2],
    /// Pr(report_{t+1} = 1 | report_t = r), indexed by r.
    pub report: [Rate; 2],
}

pub fn transition_rates(transitions: &[Transition]) -> Result<TransitionRates> {
    if transitions.is_empty() {
        return Err(Error::Validation("no transitions".into()));
    }
    let zero = Rate { events: 0, trials: 0 };
    let mut r = TransitionRates { click: [zero; 2], report: [zero; 2] };
    for t in transitions {
        let c = &mut r.click[t.click_t as usize];
        c.trials += 1;
        c.events += t.click_next as usize;
        let p = &mut r.report[t.report_t as usize];
        p.trials += 1;
        p.events += t.report_next as usize;
    }
    Ok(r)
}

/// Joint click/report counts at t+1, plus the count of rows flagged safe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SafeTab {
    pub click_report: u64,
    pub click_only: u64,
    pub report_only: u64,
    pub neither: u64,
    pub safe_flagged: u64,
}

impl SafeTab {
    pub fn from_transitions<'a>(ts: impl IntoIterator<Item = &'a Transition>) -> SafeTab {
        let mut s = SafeTab::default();
        for t in ts {
            match (t.click_next, t.report_next) {
                (true, true) => s.click_report += 1,
                (true, false) => s.click_only += 1,
                (false, true) => s.report_only += 1,
                (false, false) => s.neither += 1,
            }
            s.safe_flagged += t.safe_next as u64;
        }
        s
    }

    /// Builds a table from state counts (A, B, D, C) where D is safe handling.
    pub fn from_counts(click_report: u64, click_only: u64, safe: u64, neither: u64) -> SafeTab {
        SafeTab { click_report, click_only, report_only: safe, neither, safe_flagged: safe }
    }

    pub fn total(&self) -> u64 {
        self.click_report + self.click_only + self.report_only + self.neither
    }

    pub fn no_click(&self) -> u64 {
        self.report_only + self.neither
    }

    /// count(safe)/N == [count(report & no click)/count(no click)] * [count(no click)/N],
    /// compared as fractions by cross-multiplication.
    pub fn product_identity_holds(&self) -> bool {
        let n = self.total() as u128;
        let nc = self.no_click() as u128;
        if nc == 0 {
            return self.safe_flagged == 0;
        }
        // lhs = safe / n ; rhs = (report_only * nc) / (nc * n)
        self.safe_flagged as u128 * nc * n == self.report_only as u128 * nc * n
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::similarity::published_codes;

    pub(crate) fn rec(emp: &str, campaign: u32, day: u32, clicked: bool, reported: bool) -> ExposureRecord {
        ExposureRecord {
            employee_id: emp.into(),
            campaign_id: campaign,
            scenario_id: published_codes()[(campaign as usize - 1) % 17].scenario_id.clone(),
            sent_at: NaiveDate::from_ymd_opt(2020, 1, 1).unwrap() + chrono::Days::new(day as u64),
            clicked,
            reported,
            education_seconds: clicked.then_some(30.0),
            role: "staff".into(),
            job_status: "ft".into(),
            org_unit: "a".into(),
            tenure_days: Some(100.0),
        }
    }

    #[test]
    fn counts_4_1_7() {
        let mut rows = Vec::new();
        for (e, n) in [("a", 4), ("b", 1), ("c", 7)] {
            for k in 0..n {
                rows.push(rec(e, k + 1, 10 * k, false, false));
            }
        }
        let p = ingest_exposures(rows).unwrap();
        assert_eq!(p.counts(), PanelCounts { exposures: 12, employees: 3, transitions: 9 });
        assert_eq!(build_transitions(&p, &published_codes(), Default::default()).unwrap().len(), 9);
    }

    #[test]
    fn histories_from_clicks() {
        let rows = vec![rec("x", 1, 0, true, false), rec("x", 2, 5, false, true), rec("x", 3, 9, true, false)];
        let p = ingest_exposures(rows).unwrap();
        let tr = build_transitions(&p, &published_codes(), Default::default()).unwrap();
        let t2 = &tr[1];
        assert_eq!(t2.t, 2);
        assert!(t2.history.lag_click);
        assert_eq!(t2.history.cum_clicks, 1);
        assert_eq!(t2.history.gap_days, 5.0);
        assert!(tr[0].history.first && tr[0].history.gap_days == 0.0);
        assert!(tr[0].report_next && !tr[0].click_next && tr[0].safe_next);
        assert!(!tr[1].safe_next);
    }

    #[test]
    fn tie_broken_by_campaign() {
        let rows = vec![rec("x", 5, 0, false, false), rec("x", 3, 0, true, false)];
        let p = ingest_exposures(rows).unwrap();
        assert_eq!(p.exposures[0].campaign_id, 3);
    }

    #[test]
    fn duplicate_rejected() {
        let rows = vec![rec("x", 2, 0, false, false), rec("x", 2, 3, false, false)];
        assert!(matches!(ingest_exposures(rows), Err(Error::DuplicateExposure { .. })));
    }

    #[test]
    fn missing_scenario_is_named() {
        let mut r = rec("x", 1, 0, false, false);
        r.scenario_id = "999".into();
        let p = ingest_exposures(vec![r, rec("x", 2, 1, false, false)]).unwrap();
        match build_transitions(&p, &published_codes(), Default::default()) {
            Err(Error::MissingScenario(s)) => assert_eq!(s, "999"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rates_with_empty_cell() {
        let rows: Vec<_> = (0..5).map(|k| rec("x", k + 1, k * 3, false, false)).collect();
        let p = ingest_exposures(rows).unwrap();
        let r = transition_rates(&build_transitions(&p, &published_codes(), Default::default()).unwrap()).unwrap();
        assert_eq!(r.click[0].value(), Some(0.0));
        assert_eq!(r.click[1].value(), None);
    }

    #[test]
    fn alternating_clicker() {
        let rows: Vec<_> = (0..8).map(|k| rec("x", k + 1, k * 3, k % 2 == 0, false)).collect();
        let p = ingest_exposures(rows).unwrap();
        let r = transition_rates(&build_transitions(&p, &published_codes(), Default::default()).unwrap()).unwrap();
        assert_eq!(r.click[1].value(), Some(0.0));
        assert_eq!(r.click[0].value(), Some(1.0));
    }

    #[test]
    fn consecutive_filter() {
        let rows = vec![rec("x", 1, 0, false, false), rec("x", 2, 3, false, false), rec("x", 5, 9, false, false)];
        let p = ingest_exposures(rows).unwrap();
        let all = build_transitions(&p, &published_codes(), Default::default()).unwrap();
        let cons = build_transitions(&p, &published_codes(), TransitionOptions { consecutive_only: true }).unwrap();
        assert_eq!((all.len(), cons.len()), (2, 1));
    }

    #[test]
    fn illustrative_safe_table() {
        let control = SafeTab::from_counts(1, 8, 6, 85);
        let treated = SafeTab::from_counts(1, 9, 8, 82);
        assert!(control.product_identity_holds() && treated.product_identity_holds());
        assert_eq!((control.total(), treated.total()), (100, 100));
        assert_eq!((control.no_click(), treated.no_click()), (91, 90));
    }

    #[test]
    fn parse_errors_carry_row() {
        let text = "employee_id,campaign_id,scenario_id,sent_at,clicked,reported,education_seconds,role,job_status,org_unit,tenure_days\n\
                    a,1,28,2016-06-07,0,0,,r,j,o,\n\
                    a,2,29,2016-07-11,0,2,,r,j,o,\n";
        match read_exposures(text.as_bytes()) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 3),
            other => panic!("{other:?}"),
        }
        let text = "employee_id,campaign_id,scenario_id,sent_at,clicked,reported,education_seconds,role,job_status,org_unit,tenure_days\n\
                    a,1,28,2016-06-07,0,0,12,r,j,o,\n";
        assert!(read_exposures(text.as_bytes()).is_err());
    }
}
