mod output;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use output::{check_paths, num, opt, write_csv_file, write_json_file, RunHeader};
use phishpanel::dgp::{oracle_ape, simulate_panel, DgpConfig, LatentLink};
use phishpanel::estimators::{
    coefficient_table, estimate, interaction_suite, progression, CreConfig, EngagementRule, Estimate, EstimationData,
    EstimatorKind, ModelSpec, Outcome, Suite, SuiteResult,
};
use phishpanel::panel::{
    build_transitions, ingest_exposures, read_exposures, transition_rates, write_exposures, write_transitions,
    PanelDataset, SafeTab, Transition, TransitionOptions,
};
use phishpanel::similarity::{published_codes, read_codes, similarity_matrix, top_pairs, Layer, Metric, ScenarioCode};
use phishpanel::weights::{
    balance, fit_treatment_models, stabilized_weights, trim_weights, weight_diagnostics, TreatmentSpec, WeightSet,
    POSITIVITY_FLOOR,
};
use phishpanel::Error;

#[derive(Parser)]
#[command(name = "phishpanel", version, about = "Causal estimation for repeated-exposure binary panels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate an exposure log and write the transition dataset.
    Ingest(IngestArgs),
    /// Scenario similarity matrix and most similar pairs.
    Similarity(SimilarityArgs),
    /// Stabilized weights, trimming, and their diagnostics.
    Weights(WeightsArgs),
    /// Fit one estimator and report coefficients, APEs and fit statistics.
    Estimate(EstimateArgs),
    /// Fit the five-column estimator ladder on next-exposure clicking.
    Progression(ProgressionArgs),
    /// Fit an interaction suite with its joint Wald tests.
    Suite(SuiteArgs),
    /// Simulate a synthetic panel and its oracle effect.
    Simulate(SimulateArgs),
    /// Weight diagnostics with a covariate balance summary.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum MetricArg {
    Jaccard,
    Smc,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum LayerArg {
    Cues,
    Education,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum OutcomeArg {
    Click,
    Report,
    Safe,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum EstimatorArg {
    FeLpm,
    PooledProbit,
    CreProbit,
    MsmProbit,
    MsmCre,
    MsmLogit,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum SuiteArg {
    Similarity,
    Design,
    Cues,
    CueByEducation,
    Engagement,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum LinkArg {
    Probit,
    Logit,
}

#[derive(Debug, Args, Serialize)]
struct PanelArgs {
    /// Exposure CSV.
    #[arg(long)]
    panel: PathBuf,
    /// Scenario-code CSV; defaults to the 17 published scenario codes.
    #[arg(long)]
    codes: Option<PathBuf>,
    /// Keep only transitions between consecutive campaigns.
    #[arg(long)]
    consecutive_only: bool,
}

#[derive(Debug, Args, Serialize)]
struct TrimArgs {
    /// Lower trimming percentile.
    #[arg(long, default_value_t = 1.0)]
    lower: f64,
    /// Upper trimming percentile.
    #[arg(long, default_value_t = 99.0)]
    upper: f64,
}

#[derive(Debug, Args, Serialize)]
struct ModelArgs {
    #[arg(long, value_enum, default_value_t = OutcomeArg::Click)]
    outcome: OutcomeArg,
    /// Time-varying covariates averaged into the CRE block.
    #[arg(long, value_delimiter = ',', default_values_t = CreConfig::default().mundlak)]
    mundlak: Vec<String>,
    /// Average APEs over the unweighted sample for weighted estimators.
    #[arg(long)]
    unweighted_ape: bool,
    /// Apply the G/(G-1) cluster correction.
    #[arg(long)]
    small_sample: bool,
}

#[derive(Debug, Args, Serialize)]
struct IngestArgs {
    #[command(flatten)]
    #[serde(flatten)]
    input: PanelArgs,
    /// Transition CSV destination.
    #[arg(long)]
    out: PathBuf,
    /// Optional canonical exposure CSV destination.
    #[arg(long)]
    out_exposures: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct SimilarityArgs {
    #[arg(long)]
    codes: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MetricArg::Jaccard)]
    metric: MetricArg,
    #[arg(long, value_enum, default_value_t = LayerArg::Cues)]
    layer: LayerArg,
    /// Number of most similar pairs to list.
    #[arg(long, default_value_t = 10)]
    top: usize,
    #[arg(long)]
    out: PathBuf,
    /// Optional ranked-pair CSV destination.
    #[arg(long)]
    out_top: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct WeightsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    input: PanelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    trim: TrimArgs,
    #[arg(long, default_value_t = 40)]
    bins: usize,
    /// Diagnostics CSV destination.
    #[arg(long)]
    out: PathBuf,
    /// Histogram CSV destination.
    #[arg(long)]
    out_hist: Option<PathBuf>,
    /// Per-exposure weight CSV destination.
    #[arg(long)]
    out_weights: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct EstimateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    input: PanelArgs,
    #[arg(long, value_enum, default_value_t = EstimatorArg::MsmCre)]
    estimator: EstimatorArg,
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    trim: TrimArgs,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct ProgressionArgs {
    #[command(flatten)]
    #[serde(flatten)]
    input: PanelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    trim: TrimArgs,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct SuiteArgs {
    #[command(flatten)]
    #[serde(flatten)]
    input: PanelArgs,
    #[arg(long, value_enum)]
    suite: SuiteArg,
    #[arg(long, value_enum, default_value_t = EstimatorArg::MsmCre)]
    estimator: EstimatorArg,
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    trim: TrimArgs,
    /// Seconds at or below which a click counts as disengaged.
    #[arg(long, default_value_t = 10.0)]
    disengaged_max: f64,
    #[arg(long, default_value_t = 20.0)]
    engaged_min: f64,
    #[arg(long, default_value_t = 290.0)]
    engaged_max: f64,
    /// Seconds at which the education page times out (counted as disengaged).
    #[arg(long, default_value_t = 300.0)]
    timeout: f64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct SimulateArgs {
    #[arg(long, default_value = "paper-like", value_parser = clap::builder::PossibleValuesParser::new(DgpConfig::PRESETS))]
    preset: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    t: Option<usize>,
    #[arg(long, value_enum)]
    link: Option<LinkArg>,
    #[arg(long, allow_negative_numbers = true)]
    mu: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    psi: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    rho: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    kappa: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    beta_gap: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    campaign_scale: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    baseline_scale: Option<f64>,
    #[arg(long)]
    sigma_alpha: Option<f64>,
    #[arg(long)]
    p_initial: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    initial_loading: Option<f64>,
    #[arg(long)]
    p_present: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    report_mu: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    report_click: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    report_alpha: Option<f64>,
    #[arg(long)]
    p_tenure_missing: Option<f64>,
    /// Replications for the oracle effect.
    #[arg(long, default_value_t = 1)]
    oracle_reps: usize,
    /// Similarity values for conditional oracle effects.
    #[arg(long, value_delimiter = ',')]
    oracle_sim: Vec<f64>,
    /// Exposure CSV destination.
    #[arg(long)]
    out: PathBuf,
    /// Truth JSON destination.
    #[arg(long)]
    out_truth: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct DiagnoseArgs {
    #[command(flatten)]
    #[serde(flatten)]
    input: PanelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    trim: TrimArgs,
    #[arg(long, default_value_t = 40)]
    bins: usize,
    /// Diagnostics JSON destination.
    #[arg(long)]
    out: PathBuf,
}

enum CliError {
    Usage(String),
    Path(String),
    Data(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(Error::Io(e))
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Parse { .. } => "parse",
        Error::Validation(_) | Error::DuplicateExposure { .. } | Error::MissingScenario(_) => "validation",
        Error::Separation { .. }
        | Error::Collinear { .. }
        | Error::NotIdentified(_)
        | Error::DependentRestrictions { .. } => "identification",
        Error::NoConvergence { .. } | Error::SingularHessian | Error::NonFinite => "estimation",
        Error::Positivity { .. } => "positivity",
        Error::Config(_) => "config",
        Error::Io(_) | Error::Csv(_) => "io",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Path(msg)) => {
            eprintln!("{}", json!({ "error": "path", "message": msg }));
            ExitCode::from(1)
        }
        Err(CliError::Data(e)) => {
            eprintln!("{}", json!({ "error": error_kind(&e), "message": e.to_string() }));
            ExitCode::from(1)
        }
    }
}

fn run(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Similarity(a) => cmd_similarity(a),
        Command::Weights(a) => cmd_weights(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Progression(a) => cmd_progression(a),
        Command::Suite(a) => cmd_suite(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Diagnose(a) => cmd_diagnose(a),
    }
}

fn header<A: Serialize>(name: &str, args: &A, inputs: &[&str], seed: Option<u64>) -> CliResult<RunHeader> {
    Ok(RunHeader::new(name, serde_json::to_value(args).expect("arguments serialize"), inputs, seed)?)
}

fn validate_paths(inputs: &[&Path], outputs: &[&PathBuf]) -> CliResult<()> {
    check_paths(inputs, outputs).map_err(CliError::Path)
}

fn panel_inputs(p: &PanelArgs) -> Vec<&Path> {
    let mut v = vec![p.panel.as_path()];
    if let Some(c) = &p.codes {
        v.push(c.as_path());
    }
    v
}

struct Loaded {
    panel: PanelDataset,
    codes: Vec<ScenarioCode>,
    transitions: Vec<Transition>,
}

fn load_codes(path: Option<&PathBuf>) -> CliResult<Vec<ScenarioCode>> {
    Ok(match path {
        Some(p) => read_codes(std::fs::File::open(p)?)?,
        None => published_codes(),
    })
}

fn load(p: &PanelArgs) -> CliResult<Loaded> {
    let codes = load_codes(p.codes.as_ref())?;
    let panel = ingest_exposures(read_exposures(std::fs::File::open(&p.panel)?)?)?;
    let transitions = build_transitions(&panel, &codes, TransitionOptions { consecutive_only: p.consecutive_only })?;
    Ok(Loaded { panel, codes, transitions })
}

fn weights_for(panel: &PanelDataset, trim: &TrimArgs) -> CliResult<(WeightSet, WeightSet)> {
    let models = fit_treatment_models(panel, &TreatmentSpec::default())?;
    let raw = stabilized_weights(panel, &models, POSITIVITY_FLOOR)?;
    let trimmed = trim_weights(&raw, trim.lower, trim.upper)?;
    Ok((raw, trimmed))
}

fn outcome_of(o: OutcomeArg) -> Outcome {
    match o {
        OutcomeArg::Click => Outcome::Click,
        OutcomeArg::Report => Outcome::Report,
        OutcomeArg::Safe => Outcome::Safe,
    }
}

fn kind_of(e: EstimatorArg) -> EstimatorKind {
    match e {
        EstimatorArg::FeLpm => EstimatorKind::FeLpm,
        EstimatorArg::PooledProbit => EstimatorKind::PooledProbit,
        EstimatorArg::CreProbit => EstimatorKind::CreProbit,
        EstimatorArg::MsmProbit => EstimatorKind::MsmProbit,
        EstimatorArg::MsmCre => EstimatorKind::MsmCre,
        EstimatorArg::MsmLogit => EstimatorKind::MsmLogit,
    }
}

fn estimation_data(
    l: &Loaded,
    weights: Option<&WeightSet>,
    model: &ModelArgs,
    rule: &EngagementRule,
) -> CliResult<EstimationData> {
    let cre = CreConfig { mundlak: model.mundlak.clone() };
    Ok(EstimationData::build(&l.panel, &l.transitions, &l.codes, weights, &cre, rule)?)
}

fn cmd_ingest(a: IngestArgs) -> CliResult<()> {
    let mut outs = vec![&a.out];
    outs.extend(a.out_exposures.as_ref());
    validate_paths(&panel_inputs(&a.input), &outs)?;
    let h = header("ingest", &a, &["panel", "codes"], None)?;
    let l = load(&a.input)?;
    write_csv_file(&a.out, &h, |w| write_transitions(&l.panel, &l.codes, &l.transitions, w))?;
    if let Some(p) = &a.out_exposures {
        write_csv_file(p, &h, |w| write_exposures(&l.panel.exposures, w))?;
    }
    let c = l.panel.counts();
    let rates = transition_rates(&l.transitions).ok();
    let safe = SafeTab::from_transitions(&l.transitions);
    let rate = |r: Option<f64>| r.map_or("undefined".to_string(), |v| format!("{v:.4}"));
    println!("exposures {}\nemployees {}\ntransitions {}", c.exposures, c.employees, l.transitions.len());
    if let Some(r) = rates {
        println!("P(click_next | click_t=1) {}", rate(r.click[1].value()));
        println!("P(click_next | click_t=0) {}", rate(r.click[0].value()));
        println!("P(report_next | report_t=1) {}", rate(r.report[1].value()));
        println!("P(report_next | report_t=0) {}", rate(r.report[0].value()));
    }
    println!("safe-handling identity {}", if safe.product_identity_holds() { "holds" } else { "FAILS" });
    Ok(())
}

fn cmd_similarity(a: SimilarityArgs) -> CliResult<()> {
    let inputs: Vec<&Path> = a.codes.iter().map(|p| p.as_path()).collect();
    let mut outs = vec![&a.out];
    outs.extend(a.out_top.as_ref());
    validate_paths(&inputs, &outs)?;
    if a.top == 0 {
        return Err(CliError::Usage("--top must be at least 1".into()));
    }
    let h = header("similarity", &a, &["codes"], None)?;
    let codes = load_codes(a.codes.as_ref())?;
    let metric = match a.metric {
        MetricArg::Jaccard => Metric::Jaccard,
        MetricArg::Smc => Metric::Smc,
    };
    let layer = match a.layer {
        LayerArg::Cues => Layer::Cues,
        LayerArg::Education => Layer::Education,
    };
    let m = similarity_matrix(&codes, metric, layer)?;
    write_csv_file(&a.out, &h, |w| m.write_csv(w))?;
    if let Some(p) = &a.out_top {
        write_csv_file(p, &h, |w| {
            writeln!(w, "rank,s,s_prime,similarity,shared,union")?;
            for (k, r) in top_pairs(&m, a.top).iter().enumerate() {
                writeln!(w, "{},{},{},{:.2},{},{}", k + 1, r.a, r.b, r.similarity, r.shared, r.union)?;
            }
            Ok(())
        })?;
    }
    if !m.empty_union_pairs.is_empty() {
        eprintln!("note: {} pair(s) with empty cue union were set to 1.0", m.empty_union_pairs.len());
    }
    Ok(())
}

fn cmd_weights(a: WeightsArgs) -> CliResult<()> {
    let mut outs = vec![&a.out];
    outs.extend(a.out_hist.as_ref());
    outs.extend(a.out_weights.as_ref());
    validate_paths(&panel_inputs(&a.input), &outs)?;
    if a.bins == 0 {
        return Err(CliError::Usage("--bins must be at least 1".into()));
    }
    let h = header("weights", &a, &["panel", "codes"], None)?;
    let l = load(&a.input)?;
    let (_, ws) = weights_for(&l.panel, &a.trim)?;
    let d = weight_diagnostics(&ws, a.bins);
    write_csv_file(&a.out, &h, |w| {
        writeln!(w, "# lower_cutoff {} upper_cutoff {}", num(d.lower), num(d.upper))?;
        writeln!(w, "# capped_low {} capped_high {}", d.capped_low, d.capped_high)?;
        writeln!(w, "variable,N,Mean,SD,P1,P5,P50,P95,P99,Min,Max")?;
        for (name, s) in [("sw", &d.raw), ("sw_trim", &d.trimmed)] {
            writeln!(
                w,
                "{name},{},{},{},{},{},{},{},{},{},{}",
                s.n,
                num(s.mean),
                num(s.sd),
                num(s.p1),
                num(s.p5),
                num(s.p50),
                num(s.p95),
                num(s.p99),
                num(s.min),
                num(s.max)
            )?;
        }
        Ok(())
    })?;
    if let Some(p) = &a.out_hist {
        write_csv_file(p, &h, |w| {
            writeln!(w, "bin_left,bin_right,count")?;
            for b in &d.histogram {
                writeln!(w, "{},{},{}", num(b.left), num(b.right), b.count)?;
            }
            Ok(())
        })?;
    }
    if let Some(p) = &a.out_weights {
        write_csv_file(p, &h, |w| {
            writeln!(w, "employee_id,campaign_id,p_num,p_den,sw,sw_trim")?;
            for (k, r) in l.panel.exposures.iter().enumerate() {
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    r.employee_id,
                    r.campaign_id,
                    num(ws.p_num[k]),
                    num(ws.p_den[k]),
                    num(ws.sw[k]),
                    num(ws.trimmed[k])
                )?;
            }
            Ok(())
        })?;
    }
    Ok(())
}

fn estimate_rows(e: &Estimate) -> Vec<[String; 6]> {
    let mut rows = Vec::new();
    for c in coefficient_table(&e.model) {
        rows.push(["coef".into(), c.term, num(c.coefficient), num(c.se), num(c.z), num(c.p)]);
    }
    for a in &e.apes {
        let z = a.value / a.se;
        rows.push([
            "ape".into(),
            format!("APE({})", a.treatment),
            num(a.value),
            num(a.se),
            num(z),
            num(phishpanel::estimators::two_sided_p(z)),
        ]);
        for g in &a.grid {
            let z = g.value / g.se;
            rows.push([
                "ape".into(),
                format!("APE({} | {})", a.treatment, g.label),
                num(g.value),
                num(g.se),
                num(z),
                num(phishpanel::estimators::two_sided_p(z)),
            ]);
        }
    }
    let m = &e.model;
    let fit = [
        ("Observations", Some(m.nobs as f64)),
        ("Clusters", Some(m.nclusters as f64)),
        ("Log pseudolikelihood", m.loglik),
        ("Pseudo R2", m.pseudo_r2),
    ];
    for (k, v) in fit {
        rows.push(["fit".into(), k.into(), opt(v), String::new(), String::new(), String::new()]);
    }
    for w in &e.warnings {
        rows.push(["warning".into(), w.clone(), String::new(), String::new(), String::new(), String::new()]);
    }
    rows
}

fn estimate_json(e: &Estimate) -> Value {
    json!({
        "estimator": e.kind,
        "outcome": e.outcome,
        "link": e.model.link.as_str(),
        "coefficients": coefficient_table(&e.model),
        "apes": e.apes,
        "fit": {
            "observations": e.model.nobs,
            "clusters": e.model.nclusters,
            "log_pseudolikelihood": e.model.loglik,
            "null_log_pseudolikelihood": e.model.loglik_null,
            "pseudo_r2": e.model.pseudo_r2,
            "iterations": e.model.convergence.iterations,
            "max_abs_gradient": e.model.convergence.grad_max,
        },
        "warnings": e.warnings,
    })
}

fn write_rows(w: &mut dyn Write, header_row: &str, rows: &[Vec<String>]) -> phishpanel::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(header_row.split(','))?;
    for r in rows {
        wr.write_record(r)?;
    }
    wr.flush()?;
    Ok(())
}

fn cmd_estimate(a: EstimateArgs) -> CliResult<()> {
    validate_paths(&panel_inputs(&a.input), &[&a.out])?;
    let h = header("estimate", &a, &["panel", "codes"], None)?;
    let l = load(&a.input)?;
    let kind = kind_of(a.estimator);
    let ws = if kind.weighted() { Some(weights_for(&l.panel, &a.trim)?.1) } else { None };
    let data = estimation_data(&l, ws.as_ref(), &a.model, &EngagementRule::default())?;
    let mut spec = ModelSpec::new(outcome_of(a.model.outcome), kind);
    spec.ape_weighted = !a.model.unweighted_ape;
    spec.small_sample = a.model.small_sample;
    let e = estimate(&spec, &data)?;
    match a.format {
        Format::Csv => write_csv_file(&a.out, &h, |w| {
            let rows: Vec<Vec<String>> = estimate_rows(&e).into_iter().map(|r| r.to_vec()).collect();
            write_rows(w, "section,term,coefficient,se,z,p", &rows)
        })?,
        Format::Json => write_json_file(&a.out, &h, estimate_json(&e))?,
    }
    Ok(())
}

fn cmd_progression(a: ProgressionArgs) -> CliResult<()> {
    validate_paths(&panel_inputs(&a.input), &[&a.out])?;
    let h = header("progression", &a, &["panel", "codes"], None)?;
    let l = load(&a.input)?;
    let (_, ws) = weights_for(&l.panel, &a.trim)?;
    let data = estimation_data(&l, Some(&ws), &a.model, &EngagementRule::default())?;
    let rows = progression(&data, !a.model.unweighted_ape);
    match a.format {
        Format::Csv => write_csv_file(&a.out, &h, |w| {
            let body: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.column.to_string(),
                        r.estimator.to_string(),
                        r.addresses.to_string(),
                        opt(r.coefficient),
                        opt(r.se),
                        opt(r.ape),
                        opt(r.ape_se),
                        r.observations.map(|n| n.to_string()).unwrap_or_default(),
                        opt(r.loglik),
                        opt(r.pseudo_r2),
                        r.error.clone().unwrap_or_default(),
                    ]
                })
                .collect();
            write_rows(
                w,
                "column,estimator,addresses,coefficient,se,ape,ape_se,observations,loglik,pseudo_r2,error",
                &body,
            )
        })?,
        Format::Json => write_json_file(&a.out, &h, json!({ "progression": rows }))?,
    }
    Ok(())
}

fn suite_json(r: &SuiteResult) -> Value {
    json!({
        "suite": r.suite,
        "estimator": r.kind,
        "rows_used": r.rows_used,
        "rows_excluded": r.rows_excluded,
        "models": r.models.iter().map(|m| json!({
            "label": m.label,
            "omitted": m.omitted,
            "estimate": estimate_json(&m.estimate),
        })).collect::<Vec<_>>(),
        "tests": r.tests,
    })
}

fn cmd_suite(a: SuiteArgs) -> CliResult<()> {
    validate_paths(&panel_inputs(&a.input), &[&a.out])?;
    let h = header("suite", &a, &["panel", "codes"], None)?;
    let l = load(&a.input)?;
    let kind = kind_of(a.estimator);
    let ws = if kind.weighted() { Some(weights_for(&l.panel, &a.trim)?.1) } else { None };
    let rule = EngagementRule {
        disengaged_max: a.disengaged_max,
        engaged_min: a.engaged_min,
        engaged_max: a.engaged_max,
        timeout: a.timeout,
    };
    let data = estimation_data(&l, ws.as_ref(), &a.model, &rule)?;
    let suite = match a.suite {
        SuiteArg::Similarity => Suite::Similarity,
        SuiteArg::Design => Suite::Design,
        SuiteArg::Cues => Suite::Cues,
        SuiteArg::CueByEducation => Suite::CueByEducation,
        SuiteArg::Engagement => Suite::Engagement,
    };
    let r = interaction_suite(&data, suite, kind, outcome_of(a.model.outcome))?;
    match a.format {
        Format::Csv => write_csv_file(&a.out, &h, |w| {
            let mut body = Vec::new();
            body.push(vec![
                String::new(),
                "sample".into(),
                "Rows used".into(),
                r.rows_used.to_string(),
                String::new(),
                String::new(),
                String::new(),
            ]);
            body.push(vec![
                String::new(),
                "sample".into(),
                "Rows excluded".into(),
                r.rows_excluded.to_string(),
                String::new(),
                String::new(),
                String::new(),
            ]);
            for m in &r.models {
                for row in estimate_rows(&m.estimate) {
                    let mut v = vec![m.label.clone()];
                    v.extend(row);
                    body.push(v);
                }
                for o in &m.omitted {
                    body.push(vec![
                        m.label.clone(),
                        "omitted".into(),
                        o.term.clone(),
                        String::new(),
                        String::new(),
                        String::new(),
                        o.reason.clone(),
                    ]);
                }
            }
            for t in &r.tests {
                body.push(vec![
                    t.model.clone(),
                    "wald".into(),
                    format!("{} (df={})", t.test.label, t.test.df),
                    num(t.test.stat),
                    String::new(),
                    String::new(),
                    num(t.test.p_value),
                ]);
            }
            write_rows(w, "model,section,term,coefficient,se,z,p", &body)
        })?,
        Format::Json => write_json_file(&a.out, &h, suite_json(&r))?,
    }
    Ok(())
}

fn dgp_config(a: &SimulateArgs) -> DgpConfig {
    let mut c = DgpConfig::preset(&a.preset).expect("preset validated by clap");
    c.seed = a.seed;
    macro_rules! set {
        ($($f:ident),*) => { $(if let Some(v) = a.$f { c.$f = v; })* };
    }
    set!(n, t, mu, psi, rho, kappa, beta_gap, campaign_scale, baseline_scale, sigma_alpha, p_initial, initial_loading);
    set!(p_present, report_mu, report_click, report_alpha, p_tenure_missing);
    if let Some(l) = a.link {
        c.link = match l {
            LinkArg::Probit => LatentLink::Probit,
            LinkArg::Logit => LatentLink::Logit,
        };
    }
    c
}

fn cmd_simulate(a: SimulateArgs) -> CliResult<()> {
    let mut outs = vec![&a.out];
    outs.extend(a.out_truth.as_ref());
    validate_paths(&[], &outs)?;
    let cfg = dgp_config(&a);
    let h = header("simulate", &a, &[], Some(a.seed))?;
    let sim = simulate_panel(&cfg)?;
    write_csv_file(&a.out, &h, |w| write_exposures(&sim.panel.exposures, w))?;
    if let Some(p) = &a.out_truth {
        let truth = oracle_ape(&cfg, a.oracle_reps, &a.oracle_sim)?;
        let ts = build_transitions(&sim.panel, &cfg.codes, Default::default())?;
        let doc = json!({
            "oracle_ape": truth.ape,
            "oracle_mc_se": truth.mc_se,
            "replications": truth.replications,
            "paths": truth.paths,
            "sample_oracle_ape": sim.sample_oracle(&cfg, &ts, None),
            "by_sim": truth.by_sim.iter().map(|(s, v, se)| json!({ "sim": s, "ape": v, "mc_se": se })).collect::<Vec<_>>(),
            "config": cfg,
        });
        write_json_file(p, &h, doc)?;
    }
    Ok(())
}

fn cmd_diagnose(a: DiagnoseArgs) -> CliResult<()> {
    validate_paths(&panel_inputs(&a.input), &[&a.out])?;
    if a.bins == 0 {
        return Err(CliError::Usage("--bins must be at least 1".into()));
    }
    let h = header("diagnose", &a, &["panel", "codes"], None)?;
    let l = load(&a.input)?;
    let spec = TreatmentSpec::default();
    let models = fit_treatment_models(&l.panel, &spec)?;
    let raw = stabilized_weights(&l.panel, &models, POSITIVITY_FLOOR)?;
    let ws = trim_weights(&raw, a.trim.lower, a.trim.upper)?;
    let bal = balance(&l.panel, &ws, &spec)?;
    let fit = |m: &phishpanel::glm::FittedModel| json!({ "terms": m.names.len(), "log_likelihood": m.loglik, "pseudo_r2": m.pseudo_r2, "observations": m.nobs });
    let doc = json!({
        "treatment_models": { "numerator": fit(&models.numerator), "denominator": fit(&models.denominator) },
        "weights": weight_diagnostics(&ws, a.bins),
        "balance": bal,
        "transitions": l.transitions.len(),
    });
    write_json_file(&a.out, &h, doc)?;
    Ok(())
}
