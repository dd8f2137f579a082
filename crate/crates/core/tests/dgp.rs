use phishpanel::dgp::*;
use phishpanel::glm::Link;
use phishpanel::panel::build_transitions;
use phishpanel::similarity::{jaccard, Layer};
use phishpanel::Error;

const ORG_LOADING: [(&str, f64); 5] =
    [("org_a", 0.0), ("org_b", 0.1), ("org_c", -0.1), ("org_d", 0.2), ("org_e", -0.2)];
const JOB_LOADING: [(&str, f64); 3] = [("full_time", 0.0), ("part_time", 0.15), ("temporary", -0.15)];

fn lookup(table: &[(&str, f64)], key: &str) -> f64 {
    table.iter().find(|(k, _)| *k == key).unwrap().1
}

#[test]
fn base_index_is_recoverable_from_the_observed_panel() {
    let cfg = DgpConfig { n: 400, t: 14, seed: 21, ..DgpConfig::reference() };
    let sim = simulate_panel(&cfg).unwrap();
    let p = &sim.panel;
    let dates = cfg.campaign_dates();
    for e in &p.employees {
        let rows = &p.exposures[e.start..e.start + e.len];
        let y1 = rows[0].clicked as u8 as f64;
        let alpha = cfg.initial_loading * y1
            + cfg.baseline_scale
                * (lookup(&ORG_LOADING, &e.baseline.org_unit) + lookup(&JOB_LOADING, &e.baseline.job_status));
        assert!(sim.base_index[e.start].is_nan());
        for s in 1..rows.len() {
            let c = rows[s].campaign_id as usize - 1;
            let prev = rows[s - 1].campaign_id as usize - 1;
            let gap = (dates[c] - dates[prev]).num_days() as f64;
            let before_prev = rows[..s - 1].iter().filter(|r| r.clicked).count() as f64;
            let want = cfg.mu
                + cfg.campaign_scale * (1.7 * c as f64).sin()
                + cfg.rho * before_prev
                + alpha
                + cfg.beta_gap * ((1.0 + gap) / 91.0).ln();
            let got = sim.base_index[e.start + s];
            assert!((got - want).abs() < 1e-12, "{} exposure {s}: {got} vs {want}", e.id);
            let sim_prev = jaccard(cfg.scenario_of(prev), cfg.scenario_of(c), Layer::Cues);
            assert_eq!(sim.prev_sim[e.start + s], sim_prev);
        }
    }
}

#[test]
fn oracle_effect_is_the_index_contrast() {
    let cfg = DgpConfig { n: 300, seed: 5, ..DgpConfig::similarity(0.6) };
    let sim = simulate_panel(&cfg).unwrap();
    let ts = build_transitions(&sim.panel, &cfg.codes, Default::default()).unwrap();
    let mut total = 0.0;
    for t in &ts {
        let k = t.exposure + 1;
        let b = sim.base_index[k];
        let want = Link::Probit.cdf(b + cfg.psi + cfg.kappa * t.sim) - Link::Probit.cdf(b);
        assert!((sim.effect(&cfg, t, None) - want).abs() < 1e-15);
        total += want;
    }
    assert!((sim.sample_oracle(&cfg, &ts, None) - total / ts.len() as f64).abs() < 1e-12);
}

#[test]
fn employees_are_independent_streams() {
    let small = simulate_panel(&DgpConfig { n: 50, seed: 9, ..DgpConfig::reference() }).unwrap();
    let large = simulate_panel(&DgpConfig { n: 120, seed: 9, ..DgpConfig::reference() }).unwrap();
    let m = small.panel.exposures.len();
    assert_eq!(small.panel.exposures[..], large.panel.exposures[..m]);
}

#[test]
fn ids_and_schedule_follow_the_published_calendar() {
    let cfg = DgpConfig { n: 30, t: 20, p_present: 1.0, ..DgpConfig::reference() };
    let dates = cfg.campaign_dates();
    assert_eq!(dates[0].to_string(), "2016-06-07");
    assert_eq!(dates[16].to_string(), "2020-02-11");
    assert_eq!((dates[17] - dates[16]).num_days(), 60);
    assert_eq!((dates[19] - dates[18]).num_days(), 60);
    let sim = simulate_panel(&cfg).unwrap();
    assert_eq!(sim.panel.exposures.len(), 30 * 20);
    assert_eq!(sim.panel.employees[7].id, "E000007");
    let r = &sim.panel.exposures[17];
    assert_eq!(r.scenario_id, cfg.codes[0].scenario_id);
}

#[test]
fn education_seconds_follow_the_mixture() {
    let cfg = DgpConfig { n: 6000, mu: -0.3, seed: 2, ..DgpConfig::reference() };
    let sim = simulate_panel(&cfg).unwrap();
    let secs: Vec<f64> = sim.panel.exposures.iter().filter_map(|r| r.education_seconds).collect();
    assert_eq!(secs.len(), sim.panel.exposures.iter().filter(|r| r.clicked).count());
    assert!(secs.len() > 10_000);
    let share = |f: &dyn Fn(f64) -> bool| secs.iter().filter(|s| f(**s)).count() as f64 / secs.len() as f64;
    let bands: [(&dyn Fn(f64) -> bool, f64); 5] = [
        (&|s| (1.0..=10.0).contains(&s), 0.42),
        (&|s| s == 300.0, 0.05),
        (&|s| (11.0..=19.0).contains(&s), 0.05),
        (&|s| (291.0..=299.0).contains(&s), 0.02),
        (&|s| (20.0..=290.0).contains(&s), 0.46),
    ];
    for (f, want) in bands {
        let got = share(f);
        assert!((got - want).abs() < 0.015, "{got} vs {want}");
    }
    assert!(secs.iter().all(|s| s.fract() == 0.0));
}

#[test]
fn initial_clicks_and_presence_match_their_probabilities() {
    let cfg = DgpConfig { n: 8000, seed: 4, ..DgpConfig::reference() };
    let sim = simulate_panel(&cfg).unwrap();
    let p = &sim.panel;
    let y1 = p.employees.iter().filter(|e| p.exposures[e.start].clicked).count() as f64 / p.employees.len() as f64;
    assert!((y1 - cfg.p_initial).abs() < 0.015, "{y1}");
    let present = p.exposures.len() as f64 / (cfg.n * cfg.t) as f64;
    assert!((present - cfg.p_present).abs() < 0.01, "{present}");
    let missing = p.employees.iter().filter(|e| e.baseline.tenure_days.is_none()).count() as f64 / cfg.n as f64;
    assert!((missing - cfg.p_tenure_missing).abs() < 0.01);
}

#[test]
fn no_state_dependence_means_zero_oracle() {
    let cfg = DgpConfig { n: 200, ..DgpConfig::heterogeneity_only() };
    let t = oracle_ape(&cfg, 3, &[0.0, 1.0]).unwrap();
    assert_eq!(t.ape, 0.0);
    assert!(t.by_sim.iter().all(|(_, v, _)| *v == 0.0));
}

#[test]
fn oracle_grows_with_state_dependence_and_similarity() {
    let lo = oracle_ape(&DgpConfig { n: 300, psi: 0.1, ..DgpConfig::reference() }, 2, &[]).unwrap();
    let hi = oracle_ape(&DgpConfig { n: 300, psi: 0.3, ..DgpConfig::reference() }, 2, &[]).unwrap();
    assert!(hi.ape > lo.ape && lo.ape > 0.0);
    let t = oracle_ape(&DgpConfig { n: 300, ..DgpConfig::similarity(0.6) }, 2, &[0.0, 0.5, 1.0]).unwrap();
    assert!(t.by_sim[0].1 < t.by_sim[1].1 && t.by_sim[1].1 < t.by_sim[2].1);
    assert!(t.mc_se.is_finite() && t.replications == 2);
}

#[test]
fn logit_latent_link_is_supported() {
    let cfg = DgpConfig { n: 300, link: LatentLink::Logit, ..DgpConfig::reference() };
    let sim = simulate_panel(&cfg).unwrap();
    let ts = build_transitions(&sim.panel, &cfg.codes, Default::default()).unwrap();
    let o = sim.sample_oracle(&cfg, &ts, None);
    let by_hand = ts
        .iter()
        .map(|t| {
            let b = sim.base_index[t.exposure + 1];
            Link::Logit.cdf(b + cfg.psi) - Link::Logit.cdf(b)
        })
        .sum::<f64>()
        / ts.len() as f64;
    assert!((o - by_hand).abs() < 1e-12);
}

#[test]
fn invalid_configurations_are_rejected() {
    let bad = [
        DgpConfig { n: 1, ..DgpConfig::reference() },
        DgpConfig { t: 2, ..DgpConfig::reference() },
        DgpConfig { p_initial: 1.5, ..DgpConfig::reference() },
        DgpConfig { sigma_alpha: -1.0, ..DgpConfig::reference() },
        DgpConfig { mu: f64::NAN, ..DgpConfig::reference() },
    ];
    for cfg in bad {
        assert!(matches!(simulate_panel(&cfg), Err(Error::Config(_))));
    }
    assert!(oracle_ape(&DgpConfig::reference(), 0, &[]).is_err());
}

#[test]
fn every_preset_simulates() {
    for name in DgpConfig::PRESETS {
        let cfg = DgpConfig { n: 40, ..DgpConfig::preset(name).unwrap() };
        assert!(simulate_panel(&cfg).is_ok(), "{name}");
    }
    assert!(DgpConfig::preset("nope").is_none());
    assert_eq!(DgpConfig::preset("full-size").unwrap().n, 19_341);
}

#[test]
fn ar1_panel_has_requested_shape_and_persistence() {
    let (y, lag, unit) = linear_ar1_panel(500, 10, 0.5, 1);
    assert_eq!(y.len(), 5000);
    assert_eq!(unit[4999], 499);
    for i in 0..500 {
        for s in 1..10 {
            assert_eq!(lag[i * 10 + s], y[i * 10 + s - 1]);
        }
    }
    // pooled OLS slope is pushed above rho by the unit effects
    let my = y.iter().sum::<f64>() / y.len() as f64;
    let ml = lag.iter().sum::<f64>() / lag.len() as f64;
    let cov: f64 = y.iter().zip(&lag).map(|(a, b)| (a - my) * (b - ml)).sum();
    let var: f64 = lag.iter().map(|b| (b - ml).powi(2)).sum();
    assert!(cov / var > 0.6);
}
