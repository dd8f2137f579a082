use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::glm::Link;
use crate::panel::{ingest_exposures, ExposureRecord, PanelDataset, Transition};
use crate::similarity::{jaccard, published_codes, Layer, ScenarioCode, PUBLISHED_CAMPAIGN_DATES};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LatentLink {
    Probit,
    Logit,
}

impl LatentLink {
    pub fn link(self) -> Link {
        match self {
            LatentLink::Probit => Link::Probit,
            LatentLink::Logit => Link::Logit,
        }
    }
}

pub const ORG_UNITS: [&str; 5] = ["org_a", "org_b", "org_c", "org_d", "org_e"];
pub const JOB_STATUSES: [&str; 3] = ["full_time", "part_time", "temporary"];
pub const ROLES: [&str; 3] = ["faculty", "staff", "student_worker"];
const ORG_LOADINGS: [f64; 5] = [0.0, 0.1, -0.1, 0.2, -0.2];
const JOB_LOADINGS: [f64; 3] = [0.0, 0.15, -0.15];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DgpConfig {
    pub n: usize,
    pub t: usize,
    pub seed: u64,
    pub link: LatentLink,
    /// Click-index intercept.
    pub mu: f64,
    /// Latent state dependence on the previous click.
    pub psi: f64,
    /// Loading on clicks accumulated before the previous exposure.
    pub rho: f64,
    /// Extra state dependence scaled by cue similarity of consecutive scenarios.
    pub kappa: f64,
    /// Loading on log of the gap (in days) since the previous exposure.
    pub beta_gap: f64,
    pub campaign_scale: f64,
    /// Scale of the org-unit and job-status loadings.
    pub baseline_scale: f64,
    pub sigma_alpha: f64,
    /// Probability of clicking at the first observed exposure.
    pub p_initial: f64,
    /// Shift of the employee effect for first-exposure clickers.
    pub initial_loading: f64,
    pub p_present: f64,
    pub report_mu: f64,
    pub report_click: f64,
    pub report_alpha: f64,
    pub p_tenure_missing: f64,
    #[serde(skip)]
    pub codes: Vec<ScenarioCode>,
}

impl DgpConfig {
    /// Desk-scale calibration: both stable heterogeneity and feedback confounding.
    pub fn reference() -> DgpConfig {
        DgpConfig {
            n: 3000,
            t: 12,
            seed: 0,
            link: LatentLink::Probit,
            mu: -1.55,
            psi: 0.2,
            rho: -0.05,
            kappa: 0.0,
            beta_gap: 0.6,
            campaign_scale: 0.15,
            baseline_scale: 1.0,
            sigma_alpha: 0.0,
            p_initial: 0.14,
            initial_loading: 0.9,
            p_present: 0.8,
            report_mu: -1.2,
            report_click: -0.5,
            report_alpha: -0.4,
            p_tenure_missing: 0.05,
            codes: published_codes(),
        }
    }

    pub fn full_size() -> DgpConfig {
        DgpConfig { n: 19_341, t: 17, ..Self::reference() }
    }

    /// No state dependence at all; persistence comes only from heterogeneity.
    pub fn heterogeneity_only() -> DgpConfig {
        DgpConfig { psi: 0.0, initial_loading: 1.2, ..Self::reference() }
    }

    /// Similarity-amplified persistence in an otherwise correctly specified model.
    pub fn similarity(kappa: f64) -> DgpConfig {
        DgpConfig { kappa, rho: 0.0, beta_gap: 0.0, ..Self::reference() }
    }

    /// State dependence only: no heterogeneity and no feedback confounding.
    pub fn homogeneous() -> DgpConfig {
        DgpConfig { initial_loading: 0.0, baseline_scale: 0.0, rho: 0.0, beta_gap: 0.0, psi: 0.3, ..Self::reference() }
    }

    /// Nothing links one exposure to the next.
    pub fn exchangeable() -> DgpConfig {
        DgpConfig { psi: 0.0, ..Self::homogeneous() }
    }

    pub fn preset(name: &str) -> Option<DgpConfig> {
        Some(match name {
            "paper-like" | "reference" => Self::reference(),
            "full-size" => Self::full_size(),
            "heterogeneity-only" => Self::heterogeneity_only(),
            "similarity" => Self::similarity(0.6),
            "homogeneous" => Self::homogeneous(),
            "exchangeable" => Self::exchangeable(),
            _ => return None,
        })
    }

    pub const PRESETS: [&'static str; 6] =
        ["paper-like", "full-size", "heterogeneity-only", "similarity", "homogeneous", "exchangeable"];

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.t < 3 {
            return Err(Error::Config(format!("need N >= 2 and T >= 3, got N={} T={}", self.n, self.t)));
        }
        let scales = [
            self.mu,
            self.psi,
            self.rho,
            self.kappa,
            self.beta_gap,
            self.campaign_scale,
            self.baseline_scale,
            self.sigma_alpha,
            self.initial_loading,
            self.report_mu,
            self.report_click,
            self.report_alpha,
        ];
        if scales.iter().any(|v| !v.is_finite()) || self.sigma_alpha < 0.0 {
            return Err(Error::Config("DGP scales must be finite and sigma_alpha nonnegative".into()));
        }
        for (name, p) in
            [("p_initial", self.p_initial), ("p_present", self.p_present), ("p_tenure_missing", self.p_tenure_missing)]
        {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if self.codes.is_empty() {
            return Err(Error::Config("no scenario codes".into()));
        }
        Ok(())
    }

    pub fn campaign_dates(&self) -> Vec<NaiveDate> {
        let published: Vec<NaiveDate> =
            PUBLISHED_CAMPAIGN_DATES.iter().map(|d| NaiveDate::parse_from_str(d, "%Y-%m-%d").unwrap()).collect();
        (0..self.t)
            .map(|c| match published.get(c) {
                Some(d) => *d,
                None => published[16] + Days::new(60 * (c as u64 - 16)),
            })
            .collect()
    }

    pub fn campaign_effect(&self, c: usize) -> f64 {
        self.campaign_scale * (1.7 * c as f64).sin()
    }

    pub fn scenario_of(&self, c: usize) -> &ScenarioCode {
        &self.codes[c % self.codes.len()]
    }
}

/// A simulated panel with the latent click index of each exposure.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub panel: PanelDataset,
    /// Click index at each exposure excluding the previous-click terms; NaN at first exposures.
    pub base_index: Vec<f64>,
    /// Cue similarity between each exposure and the one before it; NaN at first exposures.
    pub prev_sim: Vec<f64>,
}

struct EmployeeDraw {
    rows: Vec<ExposureRecord>,
    base: Vec<f64>,
    sim: Vec<f64>,
}

fn employee_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn latent_noise(rng: &mut ChaCha12Rng, link: LatentLink) -> f64 {
    match link {
        LatentLink::Probit => rng.sample(StandardNormal),
        LatentLink::Logit => {
            let u: f64 = rng.random_range(f64::EPSILON..1.0);
            (u / (1.0 - u)).ln()
        }
    }
}

fn education_seconds(rng: &mut ChaCha12Rng) -> f64 {
    let u: f64 = rng.random();
    let s: u32 = if u < 0.42 {
        rng.random_range(1..=10)
    } else if u < 0.47 {
        300
    } else if u < 0.52 {
        rng.random_range(11..=19)
    } else if u < 0.54 {
        rng.random_range(291..=299)
    } else {
        rng.random_range(20..=290)
    };
    s as f64
}

fn simulate_employee(cfg: &DgpConfig, i: usize, dates: &[NaiveDate]) -> EmployeeDraw {
    let mut rng = employee_rng(cfg.seed, i as u64);
    let org = rng.random_range(0..ORG_UNITS.len());
    let job = rng.random_range(0..JOB_STATUSES.len());
    let role = rng.random_range(0..ROLES.len());
    let tenure =
        if rng.random::<f64>() < cfg.p_tenure_missing { None } else { Some(rng.random_range(30..=9000) as f64) };
    let y1 = rng.random::<f64>() < cfg.p_initial;
    let noise: f64 = rng.sample(StandardNormal);
    let alpha = cfg.initial_loading * y1 as u8 as f64
        + cfg.sigma_alpha * noise
        + cfg.baseline_scale * (ORG_LOADINGS[org] + JOB_LOADINGS[job]);

    let mut present: Vec<usize> = (0..cfg.t).filter(|_| rng.random::<f64>() < cfg.p_present).collect();
    if present.is_empty() {
        present.push(rng.random_range(0..cfg.t));
    }

    let mut out = EmployeeDraw { rows: Vec::new(), base: Vec::new(), sim: Vec::new() };
    let mut clicks: Vec<bool> = Vec::new();
    for (s, &c) in present.iter().enumerate() {
        let (clicked, base, sim) = if s == 0 {
            (y1, f64::NAN, f64::NAN)
        } else {
            let prev = present[s - 1];
            let gap = (dates[c] - dates[prev]).num_days() as f64;
            let before_prev = clicks[..s - 1].iter().filter(|b| **b).count() as f64;
            let sim = jaccard(cfg.scenario_of(prev), cfg.scenario_of(c), Layer::Cues);
            let base = cfg.mu
                + cfg.campaign_effect(c)
                + cfg.rho * before_prev
                + alpha
                + cfg.beta_gap * ((1.0 + gap) / 91.0).ln();
            let idx = if clicks[s - 1] { base + cfg.psi + cfg.kappa * sim } else { base };
            (idx + latent_noise(&mut rng, cfg.link) > 0.0, base, sim)
        };
        let r_idx = cfg.report_mu + cfg.report_click * clicked as u8 as f64 + cfg.report_alpha * alpha;
        let reported = r_idx + rng.sample::<f64, _>(StandardNormal) > 0.0;
        let seconds = clicked.then(|| education_seconds(&mut rng));
        clicks.push(clicked);
        out.base.push(base);
        out.sim.push(sim);
        out.rows.push(ExposureRecord {
            employee_id: format!("E{i:06}"),
            campaign_id: c as u32 + 1,
            scenario_id: cfg.scenario_of(c).scenario_id.clone(),
            sent_at: dates[c],
            clicked,
            reported,
            education_seconds: seconds,
            role: ROLES[role].into(),
            job_status: JOB_STATUSES[job].into(),
            org_unit: ORG_UNITS[org].into(),
            tenure_days: tenure,
        });
    }
    out
}

pub fn simulate_panel(cfg: &DgpConfig) -> Result<Simulation> {
    cfg.validate()?;
    let dates = cfg.campaign_dates();
    let draws: Vec<EmployeeDraw> = (0..cfg.n).into_par_iter().map(|i| simulate_employee(cfg, i, &dates)).collect();
    let mut rows = Vec::new();
    let mut base_index = Vec::new();
    let mut prev_sim = Vec::new();
    for d in draws {
        rows.extend(d.rows);
        base_index.extend(d.base);
        prev_sim.extend(d.sim);
    }
    // rows are generated in canonical order, so ingestion keeps the alignment
    let panel = ingest_exposures(rows)?;
    Ok(Simulation { panel, base_index, prev_sim })
}

impl Simulation {
    /// Per-transition effect of switching the click at t, holding history fixed,
    /// with the cue similarity optionally fixed at `sim`.
    pub fn effect(&self, cfg: &DgpConfig, t: &Transition, sim: Option<f64>) -> f64 {
        let k = t.exposure + 1;
        let b = self.base_index[k];
        let s = sim.unwrap_or(self.prev_sim[k]);
        let link = cfg.link.link();
        link.cdf(b + cfg.psi + cfg.kappa * s) - link.cdf(b)
    }

    /// Average effect over the given transitions.
    pub fn sample_oracle(&self, cfg: &DgpConfig, ts: &[Transition], sim: Option<f64>) -> f64 {
        ts.iter().map(|t| self.effect(cfg, t, sim)).sum::<f64>() / ts.len() as f64
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DgpTruth {
    pub ape: f64,
    pub mc_se: f64,
    pub replications: usize,
    pub paths: usize,
    /// Conditional oracle at fixed similarity values, when requested.
    pub by_sim: Vec<(f64, f64, f64)>,
}

/// Brute-force potential-outcome oracle: every simulated transition is
/// evaluated under both values of the previous click with its history held
/// fixed; the expected difference is averaged over transitions and replications.
pub fn oracle_ape(cfg: &DgpConfig, replications: usize, sims: &[f64]) -> Result<DgpTruth> {
    if replications == 0 {
        return Err(Error::Config("oracle needs at least one replication".into()));
    }
    let mut per_rep = Vec::with_capacity(replications);
    let mut per_sim: Vec<Vec<f64>> = vec![Vec::new(); sims.len()];
    let mut paths = 0;
    for r in 0..replications {
        let c = DgpConfig { seed: cfg.seed.wrapping_add(r as u64), ..cfg.clone() };
        let sim = simulate_panel(&c)?;
        let ts = crate::panel::build_transitions(&sim.panel, &c.codes, Default::default())?;
        if ts.is_empty() {
            return Err(Error::NotIdentified("simulated panel has no transitions".into()));
        }
        paths += ts.len();
        per_rep.push(sim.sample_oracle(&c, &ts, None));
        for (k, s) in sims.iter().enumerate() {
            per_sim[k].push(sim.sample_oracle(&c, &ts, Some(*s)));
        }
    }
    let se = |v: &[f64]| if v.len() > 1 { stats::sd(v) / (v.len() as f64).sqrt() } else { f64::NAN };
    Ok(DgpTruth {
        ape: stats::mean(&per_rep),
        mc_se: se(&per_rep),
        replications,
        paths,
        by_sim: sims.iter().zip(&per_sim).map(|(s, v)| (*s, stats::mean(v), se(v))).collect(),
    })
}

/// Linear AR(1) panel with unit effects: y_it = a_i + rho y_i,t-1 + e_it, started
/// from the stationary distribution. Returns (y, lagged y, unit) for t = 1..=t.
pub fn linear_ar1_panel(n: usize, t: usize, rho: f64, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<u32>) {
    let per: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = employee_rng(seed, i as u64);
            let a: f64 = rng.sample(StandardNormal);
            let e0: f64 = rng.sample(StandardNormal);
            let mut prev = a / (1.0 - rho) + e0 / (1.0 - rho * rho).sqrt();
            let (mut y, mut lag) = (Vec::with_capacity(t), Vec::with_capacity(t));
            for _ in 0..t {
                let cur = a + rho * prev + rng.sample::<f64, _>(StandardNormal);
                y.push(cur);
                lag.push(prev);
                prev = cur;
            }
            (y, lag)
        })
        .collect();
    let mut y = Vec::with_capacity(n * t);
    let mut lag = Vec::with_capacity(n * t);
    let mut unit = Vec::with_capacity(n * t);
    for (i, (a, b)) in per.into_iter().enumerate() {
        y.extend(a);
        lag.extend(b);
        unit.extend(std::iter::repeat_n(i as u32, t));
    }
    (y, lag, unit)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DgpConfig {
        DgpConfig { n: 200, t: 6, seed: 3, ..DgpConfig::reference() }
    }

    #[test]
    fn same_seed_same_panel() {
        let a = simulate_panel(&small()).unwrap();
        let b = simulate_panel(&small()).unwrap();
        assert_eq!(a.panel.exposures, b.panel.exposures);
        let c = simulate_panel(&DgpConfig { seed: 4, ..small() }).unwrap();
        assert_ne!(a.panel.exposures, c.panel.exposures);
    }

    #[test]
    fn alignment_survives_ingestion() {
        let s = simulate_panel(&small()).unwrap();
        for (k, h) in s.panel.histories.iter().enumerate() {
            assert_eq!(h.first, s.base_index[k].is_nan());
        }
    }

    #[test]
    fn education_seconds_only_after_clicks() {
        let s = simulate_panel(&small()).unwrap();
        assert!(s.panel.exposures.iter().all(|r| r.education_seconds.is_some() == r.clicked));
    }

    #[test]
    fn dates_extend_past_published() {
        let d = DgpConfig { t: 19, ..DgpConfig::reference() }.campaign_dates();
        assert_eq!((d[18] - d[16]).num_days(), 120);
    }

    #[test]
    fn bad_config_rejected() {
        assert!(simulate_panel(&DgpConfig { t: 2, ..small() }).is_err());
        assert!(simulate_panel(&DgpConfig { p_present: 1.5, ..small() }).is_err());
    }
}
