//! Scenario execution: build the declared model, run the mode's
//! computations, write report files, and evaluate the in-scenario checks.
//!
//! A run is a pure function of `(scenario, seed, worker count)`: replica
//! randomness comes from per-replica counter streams and auxiliary draws
//! from labeled streams, so reruns reproduce every output byte and the
//! worker count never changes a verdict.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::RngCore;
use rayon::prelude::*;
use rayon::ThreadPoolBuilder;
use serde_json::{json, Value};

use renewal_kit::bounds::{
    conditional_bound_check, exp_moment_check, monotonicity_gap, overjump_mean_curve,
    power_moment_check, underjump_mean_curve, MeanCurveReport,
};
use renewal_kit::dist::Distribution;
use renewal_kit::linearwise::{
    estimate_law, regeneration_spacings, stationary_law, LinearwiseProcess,
};
use renewal_kit::renewal::{
    key_renewal_convergence, key_renewal_integral, key_renewal_limit, observe_over_under,
    overjump_survival_exact, renewal_function, simulate_renewal, stationary_overjump_mean,
    stationary_overjump_survival, RenewalFunctionTable,
};
use renewal_kit::rng::StreamFactory;
use renewal_kit::stats::{self, Estimate, Z_999};

use crate::report;
use crate::scenario::{
    load_scenario, Integrand, Mode, Scenario, ScenarioError, SideSpec,
};

/// The verification matrix rows: stable identifiers for the bundled
/// checklist that `verify-all` reports against.
pub const CRITERIA: [(u8, &str); 11] = [
    (1, "renewal-function-oracle"),
    (2, "key-renewal-convergence"),
    (3, "stationary-overjump-survival"),
    (4, "stationary-overjump-mean"),
    (5, "two-level-stationary-law"),
    (6, "level-occupancy-and-cycles"),
    (7, "mean-curve-monotonicity"),
    (8, "overjump-moment-bounds"),
    (9, "conditional-mean-bounds"),
    (10, "single-state-degeneration"),
    (11, "seed-worker-reproducibility"),
];

pub fn criterion_title(n: u8) -> &'static str {
    CRITERIA
        .iter()
        .find(|(k, _)| *k == n)
        .map(|(_, title)| *title)
        .unwrap_or("unknown-criterion")
}

/// Command-line overrides applied on top of a scenario's own parameters.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Replaces every scenario's `run.seed`.
    pub seed: Option<u64>,
    /// Runs replica loops in a dedicated pool of this many threads.
    pub workers: Option<usize>,
    /// Replaces the scenario replica count.
    pub replicas: Option<u64>,
    /// Replaces the scenario grid step.
    pub grid_step: Option<f64>,
    /// Where report files land.
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            workers: None,
            replicas: None,
            grid_step: None,
            out_dir: PathBuf::from("reports"),
        }
    }
}

#[derive(Debug)]
pub enum ExecError {
    /// The scenario file failed to load or validate.
    Scenario(ScenarioError),
    /// The model rejected its inputs at run time (lattice laws, divergent
    /// moments, no qualifying replicas).
    Model { scenario: String, message: String },
    /// A report file could not be written.
    Io { path: PathBuf, message: String },
    /// The worker pool could not be built.
    Pool(String),
}

impl fmt::Display for ExecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExecError::Scenario(e) => write!(f, "{e}"),
            ExecError::Model { scenario, message } => {
                write!(f, "scenario {scenario}: {message}")
            }
            ExecError::Io { path, message } => {
                write!(f, "cannot write {}: {message}", path.display())
            }
            ExecError::Pool(message) => write!(f, "cannot build worker pool: {message}"),
        }
    }
}

impl std::error::Error for ExecError {}

impl From<ScenarioError> for ExecError {
    fn from(e: ScenarioError) -> Self {
        ExecError::Scenario(e)
    }
}

/// One evaluated in-scenario assertion.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub label: String,
    pub passed: bool,
    pub detail: String,
}

/// Everything a finished scenario run reports.
#[derive(Debug)]
pub struct RunOutcome {
    pub scenario: String,
    pub mode: Mode,
    pub criteria: Vec<u8>,
    pub seed: u64,
    pub checks: Vec<CheckResult>,
    pub files: Vec<PathBuf>,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// In-memory report file: `(file name, content)`.
type Artifact = (String, Vec<u8>);

fn check(label: impl Into<String>, passed: bool, detail: String) -> CheckResult {
    CheckResult { label: label.into(), passed, detail }
}

fn close_check(label: impl Into<String>, got: f64, want: f64, tol: f64) -> CheckResult {
    check(label, (got - want).abs() <= tol, format!("got {got}, want {want} within {tol}"))
}

fn covers_check(label: impl Into<String>, est: &Estimate, want: f64) -> CheckResult {
    check(
        label,
        est.covers(want),
        format!("estimate {} +- {} vs {want}", est.value, est.half_width),
    )
}

fn model_err(sc: &Scenario, message: impl fmt::Display) -> ExecError {
    ExecError::Model { scenario: sc.name.clone(), message: message.to_string() }
}

/// Runs one scenario under the configured worker pool and writes its
/// report files. The returned outcome carries every check verdict; the
/// caller maps those onto exit codes.
pub fn run_scenario(sc: &Scenario, cfg: &RunConfig) -> Result<RunOutcome, ExecError> {
    match cfg.workers {
        Some(w) => {
            let pool = ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| ExecError::Pool(e.to_string()))?;
            pool.install(|| run_in_pool(sc, cfg))
        }
        None => run_in_pool(sc, cfg),
    }
}

fn run_in_pool(sc: &Scenario, cfg: &RunConfig) -> Result<RunOutcome, ExecError> {
    let seed = cfg.seed.unwrap_or(sc.run.seed);
    let streams = StreamFactory::new(seed);
    let (mut checks, mut artifacts) = match sc.mode {
        Mode::Renewal => run_renewal(sc, cfg, &streams)?,
        Mode::KeyRenewal => run_key_renewal(sc, cfg)?,
        Mode::Linearwise => run_linearwise(sc, cfg, &streams)?,
        Mode::Bounds => run_bounds(sc, cfg, &streams)?,
    };
    let passed = checks.iter().all(|c| c.passed);
    let summary = json!({
        "scenario": sc.name,
        "mode": sc.mode.as_str(),
        "criteria": sc.criteria,
        "seed": seed,
        "replicas": effective_replicas(sc, cfg),
        "passed": passed,
        "checks": checks
            .iter()
            .map(|c| json!({"label": c.label, "passed": c.passed, "detail": c.detail}))
            .collect::<Vec<Value>>(),
        "files": artifacts.iter().map(|(name, _)| name.clone()).collect::<Vec<String>>(),
    });
    artifacts.push((format!("{}-summary.json", sc.name), report::to_json_bytes(&summary)));
    let mut files = Vec::with_capacity(artifacts.len());
    for (name, bytes) in artifacts {
        let path = cfg.out_dir.join(&name);
        report::write_atomic(&path, &bytes)
            .map_err(|e| ExecError::Io { path: path.clone(), message: e.to_string() })?;
        files.push(path);
    }
    checks.shrink_to_fit();
    Ok(RunOutcome { scenario: sc.name.clone(), mode: sc.mode, criteria: sc.criteria.clone(), seed, checks, files })
}

fn effective_replicas(sc: &Scenario, cfg: &RunConfig) -> u64 {
    cfg.replicas.unwrap_or_else(|| sc.replicas())
}

/// Builds the renewal-function table a mode needs, honoring overrides.
fn build_table(
    sc: &Scenario,
    cfg: &RunConfig,
    cycle: &Distribution,
    default_t_max: f64,
) -> Result<RenewalFunctionTable, ExecError> {
    let h = cfg.grid_step.unwrap_or_else(|| sc.grid_step(cycle));
    let t_max = sc.run.t_max.unwrap_or(default_t_max);
    renewal_function(cycle, t_max, h).map_err(|e| model_err(sc, e))
}

fn run_renewal(
    sc: &Scenario,
    cfg: &RunConfig,
    streams: &StreamFactory,
) -> Result<(Vec<CheckResult>, Vec<Artifact>), ExecError> {
    let cycle = sc.build_cycle()?;
    let first_delay = match &sc.first_delay {
        Some(spec) => Some(spec.build().map_err(|e| model_err(sc, e))?),
        None => None,
    };
    let replicas = effective_replicas(sc, cfg);
    let table = build_table(sc, cfg, &cycle, 10.0 * cycle.mean())?;

    let mut checks = Vec::new();
    let mut artifacts = Vec::new();

    let mut buf = Vec::new();
    table.write_csv(&mut buf).expect("write to memory");
    artifacts.push((format!("{}-renewal-function.csv", sc.name), buf));

    if !sc.probes.survival.is_empty() {
        let mut csv = String::from("s,t,exact,stationary\n");
        for &(s, t) in &sc.probes.survival {
            let exact = overjump_survival_exact(&cycle, &table, s, t).map_err(|e| model_err(sc, e))?;
            let stat = stationary_overjump_survival(&cycle, s).value;
            csv.push_str(&format!("{s},{t},{exact},{stat}\n"));
        }
        artifacts.push((format!("{}-overjump-grid.csv", sc.name), csv.into_bytes()));
    }

    for c in &sc.expect.renewal_function {
        let got = table.value_at(c.t).map_err(|e| model_err(sc, e))?;
        checks.push(close_check(format!("renewal-function H({})", c.t), got, c.value, c.tol));
    }

    if let Some(lin) = &sc.expect.linear_renewal_function {
        let h = table.step();
        let i_max = ((lin.up_to / h).round() as usize).min(table.values().len() - 1);
        let mut max_dev: f64 = 0.0;
        for (i, &v) in table.values()[..=i_max].iter().enumerate() {
            max_dev = max_dev.max((v - (lin.slope * i as f64 * h + lin.intercept)).abs());
        }
        checks.push(check(
            "renewal-function-linear",
            max_dev <= lin.tol,
            format!(
                "max |H(t) - ({} t + {})| = {max_dev} up to t={}, allowed {}",
                lin.slope, lin.intercept, lin.up_to, lin.tol
            ),
        ));
    }

    for c in &sc.expect.grid_survival {
        let got =
            overjump_survival_exact(&cycle, &table, c.s, c.t).map_err(|e| model_err(sc, e))?;
        checks.push(close_check(
            format!("finite-time-overjump-survival(s={}, t={})", c.s, c.t),
            got,
            c.value,
            c.tol,
        ));
    }

    let needs_mc =
        sc.expect.mc_mean.is_some() || sc.expect.stationary_survival.iter().any(|c| c.mc_z.is_some());
    let sample: Option<Vec<(f64, f64)>> = if needs_mc {
        let t_obs = sc
            .run
            .t_obs
            .ok_or_else(|| model_err(sc, "Monte Carlo checks require run.t_obs"))?;
        Some(
            (0..replicas)
                .into_par_iter()
                .map(|r| {
                    let mut rng = streams.replica(r);
                    let traj = simulate_renewal(first_delay.as_ref(), &cycle, t_obs, &mut rng);
                    observe_over_under(&traj, t_obs)
                })
                .collect(),
        )
    } else {
        None
    };

    for c in &sc.expect.stationary_survival {
        let analytic = stationary_overjump_survival(&cycle, c.s).value;
        checks.push(close_check(
            format!("stationary-overjump-survival(s={})", c.s),
            analytic,
            c.value,
            c.tol,
        ));
        if let (Some(z), Some(obs)) = (c.mc_z, sample.as_deref()) {
            let hits = obs.iter().filter(|(_, over)| *over > c.s).count() as u64;
            let est = stats::binomial_estimate(hits, replicas, z);
            checks.push(covers_check(
                format!("empirical-overjump-survival(s={})", c.s),
                &est,
                c.value,
            ));
        }
    }

    if let Some(c) = &sc.expect.stationary_mean {
        let got = stationary_overjump_mean(&cycle).value;
        checks.push(close_check("stationary-overjump-mean", got, c.value, c.tol));
    }

    if let Some(c) = &sc.expect.mc_mean {
        let obs = sample.as_deref().expect("mc_mean forces sampling");
        let overs: Vec<f64> = obs.iter().map(|&(_, over)| over).collect();
        let est = stats::mean_estimate(&overs, c.z);
        checks.push(covers_check("empirical-overjump-mean", &est, c.value));
    }

    if let Some(obs) = sample.as_deref() {
        // Plot-ready comparison of the replica overjump law against the
        // long-run law on an s-grid spanning most of the mass.
        let s_hi = 4.0 * stationary_overjump_mean(&cycle).value;
        let mut csv = String::from("s,empirical,half_width,stationary\n");
        for j in 0..=40 {
            let s = s_hi * j as f64 / 40.0;
            let hits = obs.iter().filter(|(_, over)| *over > s).count() as u64;
            let est = stats::binomial_estimate(hits, replicas, Z_999);
            let stat = stationary_overjump_survival(&cycle, s).value;
            csv.push_str(&format!("{s},{},{},{stat}\n", est.value, est.half_width));
        }
        artifacts.push((format!("{}-empirical-vs-stationary.csv", sc.name), csv.into_bytes()));
    }

    Ok((checks, artifacts))
}

fn run_key_renewal(
    sc: &Scenario,
    cfg: &RunConfig,
) -> Result<(Vec<CheckResult>, Vec<Artifact>), ExecError> {
    let cycle = sc.build_cycle()?;
    let integrand = sc.integrand.as_ref().expect("validated at load");
    let (law_spec, use_tail) = match integrand {
        Integrand::Survival { law } => (law, false),
        Integrand::TailIntegral { law } => (law, true),
    };
    let b_law = law_spec.build().map_err(|e| model_err(sc, e))?;
    let b = |u: f64| if use_tail { b_law.tail_integral(u) } else { b_law.survival(u) };

    let mut t_needed = sc.probes.times.iter().fold(0.0f64, |m, &t| m.max(t));
    if let Some(g) = &sc.expect.convergence_gap {
        t_needed = t_needed.max(g.t);
    }
    let default_t_max = if t_needed > 0.0 { t_needed } else { 10.0 * cycle.mean() };
    let table = build_table(sc, cfg, &cycle, default_t_max)?;

    let limit = key_renewal_limit(&b, &cycle).map_err(|e| model_err(sc, e))?;
    let times: Vec<f64> = if sc.probes.times.is_empty() {
        // Default diagnostic times: doubling steps up to the table edge.
        let mut ts = Vec::new();
        let mut t = cycle.mean();
        while t <= table.t_max() {
            ts.push(t);
            t *= 2.0;
        }
        ts
    } else {
        sc.probes.times.clone()
    };
    let series =
        key_renewal_convergence(&b, &cycle, &table, &times).map_err(|e| model_err(sc, e))?;

    let mut artifacts = Vec::new();
    let mut csv = String::from("t,integral,limit,gap\n");
    for p in &series {
        csv.push_str(&format!("{},{},{limit},{}\n", p.t, p.value, p.gap));
    }
    artifacts.push((format!("{}-convergence.csv", sc.name), csv.into_bytes()));

    let mut checks = Vec::new();
    if let Some(c) = &sc.expect.limit_value {
        checks.push(close_check("key-renewal-limit", limit, c.value, c.tol));
    }
    if let Some(c) = &sc.expect.convergence_gap {
        let at_t = key_renewal_integral(&b, &table, c.t).map_err(|e| model_err(sc, e))?;
        let gap = (at_t - limit).abs();
        checks.push(check(
            format!("key-renewal-gap(t={})", c.t),
            gap <= c.tol,
            format!("integral {at_t}, limit {limit}, gap {gap}, allowed {}", c.tol),
        ));
    }
    Ok((checks, artifacts))
}

/// Derives an independent stream factory for a companion run, e.g. the
/// second start of a start-independence comparison.
fn derived_factory(streams: &StreamFactory, label: &str) -> StreamFactory {
    let mut rng = streams.labeled(label);
    StreamFactory::new(rng.next_u64())
}

fn run_linearwise(
    sc: &Scenario,
    cfg: &RunConfig,
    streams: &StreamFactory,
) -> Result<(Vec<CheckResult>, Vec<Artifact>), ExecError> {
    let proc = sc.build_process()?;
    let law = stationary_law(proc.chain(), proc.level_laws()).map_err(|e| model_err(sc, e))?;
    let replicas = effective_replicas(sc, cfg);
    let t_obs = sc.run.t_obs.unwrap_or(64.0 * law.mean_sojourn());

    let mut checks = Vec::new();
    let mut artifacts = Vec::new();

    for c in &sc.expect.analytic_queries {
        let got = law.query(c.state, c.a, c.b).map_err(|e| model_err(sc, e))?;
        checks.push(close_check(
            format!("stationary-law({}, {}, {})", c.state, c.a, c.b),
            got,
            c.value,
            c.tol,
        ));
    }

    if let Some(tol) = sc.expect.normalization_tol {
        let mut total = 0.0;
        for i in 0..law.n_states() {
            total += law.query(i, 0.0, 0.0).map_err(|e| model_err(sc, e))?;
        }
        checks.push(close_check("stationary-law-normalization", total, 1.0, tol));
    }

    for c in &sc.expect.level_probabilities {
        let got = law.level_probability(c.state).map_err(|e| model_err(sc, e))?;
        checks.push(close_check(
            format!("level-occupancy({})", c.state),
            got,
            c.value,
            c.tol,
        ));
    }

    for c in &sc.expect.mean_cycle {
        let got = law.mean_cycle_length(c.state).map_err(|e| model_err(sc, e))?;
        checks.push(close_check(
            format!("mean-regeneration-cycle({})", c.state),
            got,
            c.value,
            c.tol,
        ));
    }

    for c in &sc.expect.empirical_cycles {
        let want = law.mean_cycle_length(c.state).map_err(|e| model_err(sc, e))?;
        let mut rng = streams.labeled("regeneration-spacings");
        let spacings = regeneration_spacings(&proc, c.state, c.regenerations as usize, &mut rng)
            .map_err(|e| model_err(sc, e))?;
        let est = stats::mean_estimate(&spacings, c.z);
        checks.push(covers_check(
            format!("empirical-regeneration-cycle({})", c.state),
            &est,
            want,
        ));
    }

    // Level table is always worth writing: it is the analytic law at a
    // glance.
    {
        let mut csv = String::from("state,frequency,level_probability\n");
        for i in 0..law.n_states() {
            let p = law.level_probability(i).map_err(|e| model_err(sc, e))?;
            csv.push_str(&format!("{i},{},{p}\n", law.frequency(i)));
        }
        artifacts.push((format!("{}-levels.csv", sc.name), csv.into_bytes()));
    }

    let needs_estimate = !sc.probes.triples.is_empty() || sc.expect.degeneration_sup_tol.is_some();
    if !needs_estimate {
        return Ok((checks, artifacts));
    }

    let emp = estimate_law(&proc, t_obs, replicas, streams);

    if !sc.probes.triples.is_empty() {
        let mut buf = Vec::new();
        emp.write_probe_csv(&mut buf, &sc.probes.triples, Some(&law), Z_999)
            .expect("write to memory");
        artifacts.push((format!("{}-law-probes.csv", sc.name), buf));
    }

    if let Some(z) = sc.expect.empirical_band_z {
        for &(i, a, b) in &sc.probes.triples {
            let want = law.query(i, a, b).map_err(|e| model_err(sc, e))?;
            let est = emp.probe(i, a, b, z);
            checks.push(covers_check(format!("empirical-law({i}, {a}, {b})"), &est, want));
        }
    }

    if let Some(alt) = sc.expect.alt_initial {
        let twin = LinearwiseProcess::new(
            proc.chain().clone(),
            proc.level_laws().to_vec(),
            alt,
        )
        .map_err(|e| model_err(sc, e))?;
        let twin_streams = derived_factory(streams, "alt-start");
        let emp_twin = estimate_law(&twin, t_obs, replicas, &twin_streams);
        for &(i, a, b) in &sc.probes.triples {
            let one = emp.probe(i, a, b, Z_999);
            let two = emp_twin.probe(i, a, b, Z_999);
            let gap = (one.value - two.value).abs();
            let allowed = one.half_width + two.half_width;
            checks.push(check(
                format!("start-independence({i}, {a}, {b})"),
                gap <= allowed,
                format!(
                    "start {:?} gives {}, start {:?} gives {}, gap {gap} vs {allowed}",
                    proc.initial(),
                    one.value,
                    alt,
                    two.value
                ),
            ));
        }
    }

    if let Some(tol) = sc.expect.degeneration_sup_tol {
        if law.n_states() != 1 {
            return Err(model_err(sc, "degeneration check requires a single-state chain"));
        }
        let mut from_process: Vec<f64> =
            emp.observations().iter().map(|o| o.remaining).collect();
        from_process.sort_by(f64::total_cmp);
        let cycle = proc.level_laws()[0].clone();
        let twin_streams = derived_factory(streams, "renewal-twin");
        let mut from_renewal: Vec<f64> = (0..replicas)
            .into_par_iter()
            .map(|r| {
                let mut rng = twin_streams.replica(r);
                let traj = simulate_renewal(None, &cycle, t_obs, &mut rng);
                observe_over_under(&traj, t_obs).1
            })
            .collect();
        from_renewal.sort_by(f64::total_cmp);
        let sup = stats::two_sample_ks(&from_process, &from_renewal);
        checks.push(check(
            "renewal-degeneration",
            sup < tol,
            format!("sup distance between overjump laws {sup}, allowed {tol}"),
        ));
    }

    Ok((checks, artifacts))
}

fn run_bounds(
    sc: &Scenario,
    cfg: &RunConfig,
    streams: &StreamFactory,
) -> Result<(Vec<CheckResult>, Vec<Artifact>), ExecError> {
    let replicas = effective_replicas(sc, cfg);
    let mut checks = Vec::new();
    let mut artifacts = Vec::new();

    if let Some(mc) = &sc.expect.mean_curve {
        let cycle = sc.build_cycle()?;
        let curve: MeanCurveReport = match mc.side {
            SideSpec::Overjump => overjump_mean_curve(&cycle, &mc.times, replicas, streams),
            SideSpec::Underjump => underjump_mean_curve(&cycle, &mc.times, replicas, streams),
        };
        let mut buf = Vec::new();
        curve.report.write_csv(&mut buf).expect("write to memory");
        artifacts.push((format!("{}-mean-curve.csv", sc.name), buf));
        if mc.require_monotone {
            let drops: Vec<String> = curve
                .decreases
                .iter()
                .map(|&i| format!("{} -> {}", mc.times[i], mc.times[i + 1]))
                .collect();
            checks.push(check(
                "mean-curve-monotone",
                curve.monotone_ok(),
                if drops.is_empty() {
                    "no significant decrease between probe times".into()
                } else {
                    format!("significant decreases at {}", drops.join(", "))
                },
            ));
        }
        if mc.require_cap {
            let detail = if curve.report.satisfied {
                format!(
                    "cap {}, slack {} (negative slack without a violation means equality up to noise)",
                    curve.report.bound_value, curve.report.slack
                )
            } else {
                let worst = curve
                    .report
                    .observed
                    .iter()
                    .fold(f64::NEG_INFINITY, |acc, (_, e)| acc.max(e.value));
                format!(
                    "cap {} exceeded, worst estimate {}, slack {}",
                    curve.report.bound_value, worst, curve.report.slack
                )
            };
            checks.push(check("mean-curve-cap", curve.report.satisfied, detail));
        }
    }

    if let Some(gp) = &sc.expect.gap_probes {
        let cycle = sc.build_cycle()?;
        let default_t_max = gp.t_span + gp.delta_max + cycle.mean();
        let table = build_table(sc, cfg, &cycle, default_t_max)?;
        let floor = -gp.floor_factor * table.grid_error_bound();
        let mut rng = streams.labeled("gap-probes");
        let mut csv = String::from("s,t,delta,gap,floor\n");
        let mut min_gap = f64::INFINITY;
        let mut breaches = 0u32;
        for _ in 0..gp.count {
            let s = rng.gen::<f64>() * gp.s_max;
            let t = rng.gen::<f64>() * gp.t_span;
            let delta = rng.gen::<f64>() * gp.delta_max;
            let gap = monotonicity_gap(&cycle, &table, s, t, delta).map_err(|e| model_err(sc, e))?;
            if gap < floor {
                breaches += 1;
            }
            min_gap = min_gap.min(gap);
            csv.push_str(&format!("{s},{t},{delta},{gap},{floor}\n"));
        }
        artifacts.push((format!("{}-gap-probes.csv", sc.name), csv.into_bytes()));
        checks.push(check(
            "overjump-survival-gap-floor",
            breaches == 0,
            format!(
                "{breaches} of {} probes below floor {floor} (min gap {min_gap})",
                gp.count
            ),
        ));
    }

    if let Some(pm) = &sc.expect.power_moment {
        let cycle = sc.build_cycle()?;
        let t_obs = sc
            .run
            .t_obs
            .ok_or_else(|| model_err(sc, "power_moment check requires run.t_obs"))?;
        let rep = power_moment_check(&cycle, pm.power, t_obs, replicas, streams);
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).expect("write to memory");
        artifacts.push((format!("{}-power-moment.csv", sc.name), buf));
        let (_, est) = &rep.observed[0];
        checks.push(check(
            format!("overjump-power-moment-cap(power={})", pm.power),
            rep.satisfied,
            format!("estimate {} +- {} vs cap {}", est.value, est.half_width, rep.bound_value),
        ));
        if let Some(v) = pm.expect {
            checks.push(covers_check(
                format!("overjump-power-moment-value(power={})", pm.power),
                est,
                v,
            ));
        }
    }

    if let Some(em) = &sc.expect.exp_moment {
        let cycle = sc.build_cycle()?;
        let t_obs = sc
            .run
            .t_obs
            .ok_or_else(|| model_err(sc, "exp_moment check requires run.t_obs"))?;
        let rep = exp_moment_check(&cycle, em.alpha, t_obs, replicas, streams)
            .map_err(|e| model_err(sc, e))?;
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).expect("write to memory");
        artifacts.push((format!("{}-exp-moment.csv", sc.name), buf));
        if let Some(bc) = &em.bound {
            checks.push(close_check("exp-moment-cap-value", rep.bound_value, bc.value, bc.tol));
        }
        let (_, est) = &rep.observed[0];
        checks.push(check(
            format!("exp-moment-cap(alpha={})", em.alpha),
            rep.satisfied,
            format!("estimate {} +- {} vs cap {}", est.value, est.half_width, rep.bound_value),
        ));
        if let Some(v) = em.expect {
            // The exponential-moment estimator can have heavy tails, so a
            // scenario may widen the "near" test beyond the sample band.
            let allowed = est.half_width.max(em.expect_slack.unwrap_or(0.0));
            checks.push(check(
                format!("exp-moment-value(alpha={})", em.alpha),
                (est.value - v).abs() <= allowed,
                format!("estimate {} vs {v}, allowed {allowed}", est.value),
            ));
        }
    }

    if let Some(cc) = &sc.expect.conditional {
        let proc = sc.build_process()?;
        let tau = sc.run.tau.expect("validated at load");
        let rep = conditional_bound_check(&proc, cc.state, tau, replicas, streams)
            .map_err(|e| model_err(sc, e))?;
        let mut csv = String::from("probe,estimate,half_width,bound\n");
        csv.push_str(&format!(
            "elapsed,{},{},{}\n",
            rep.elapsed.value, rep.elapsed.half_width, rep.bound_value
        ));
        csv.push_str(&format!(
            "remaining,{},{},{}\n",
            rep.remaining.value, rep.remaining.half_width, rep.bound_value
        ));
        artifacts.push((format!("{}-conditional.csv", sc.name), csv.into_bytes()));
        if let Some(bc) = &cc.bound {
            checks.push(close_check("conditional-cap-value", rep.bound_value, bc.value, bc.tol));
        }
        checks.push(check(
            format!("conditional-mean-caps(state={})", cc.state),
            rep.satisfied,
            format!(
                "elapsed {} +- {}, remaining {} +- {}, cap {}, {} qualifying replicas",
                rep.elapsed.value,
                rep.elapsed.half_width,
                rep.remaining.value,
                rep.remaining.half_width,
                rep.bound_value,
                rep.samples
            ),
        ));
    }

    Ok((checks, artifacts))
}

/// Result of one scenario file inside `verify-all`.
#[derive(Debug)]
pub struct ScenarioRun {
    pub path: PathBuf,
    pub outcome: Result<RunOutcome, ExecError>,
}

/// One row of the verification matrix.
#[derive(Debug, Clone)]
pub struct MatrixRow {
    pub criterion: u8,
    pub title: &'static str,
    pub scenarios: Vec<String>,
    pub passed: bool,
}

/// Everything `verify-all` learned: per-file outcomes plus the criteria
/// matrix derived from the scenarios' `criteria` claims.
#[derive(Debug)]
pub struct VerifySummary {
    pub runs: Vec<ScenarioRun>,
    pub rows: Vec<MatrixRow>,
}

impl VerifySummary {
    /// True when every file loaded, ran, and passed all its checks.
    pub fn all_passed(&self) -> bool {
        self.runs.iter().all(|r| matches!(&r.outcome, Ok(o) if o.passed()))
    }

    /// The verdict column keyed by criterion number; what criterion 11
    /// requires to be invariant across seeds and worker counts.
    pub fn matrix(&self) -> BTreeMap<u8, bool> {
        self.rows.iter().map(|row| (row.criterion, row.passed)).collect()
    }

    /// Human-readable report: per-file results, then the matrix.
    pub fn render(&self) -> String {
        let mut out = String::from("scenario runs:\n");
        for run in &self.runs {
            let name = run.path.file_name().and_then(|n| n.to_str()).unwrap_or("?");
            match &run.outcome {
                Ok(o) => {
                    let verdict = if o.passed() { "pass" } else { "FAIL" };
                    out.push_str(&format!("  {name:<28} {verdict}\n"));
                    for c in o.checks.iter().filter(|c| !c.passed) {
                        out.push_str(&format!("      failed: {} ({})\n", c.label, c.detail));
                    }
                }
                Err(e) => out.push_str(&format!("  {name:<28} ERROR: {e}\n")),
            }
        }
        out.push_str("\nverification matrix:\n");
        for row in &self.rows {
            let verdict = if row.passed { "PASS" } else { "FAIL" };
            out.push_str(&format!(
                "  C{:02} {:<32} {verdict} ({})\n",
                row.criterion,
                row.title,
                row.scenarios.join(", ")
            ));
        }
        out.push_str(&format!(
            "  C11 {:<32} rerun with --seed and --workers; the verdict column must not change\n",
            criterion_title(11)
        ));
        out
    }
}

/// Runs every `*.json` scenario in `dir` (sorted by file name), isolating
/// failures per file, and assembles the verification matrix.
pub fn verify_all(dir: &Path, cfg: &RunConfig) -> Result<VerifySummary, ExecError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| ExecError::Io { path: dir.to_path_buf(), message: e.to_string() })?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|x| x.to_str()) == Some("json"))
        .collect();
    paths.sort();

    let mut runs = Vec::with_capacity(paths.len());
    let mut claims: BTreeMap<u8, Vec<(String, bool)>> = BTreeMap::new();
    for path in paths {
        let outcome = load_scenario(&path).map_err(ExecError::from).and_then(|sc| {
            run_scenario(&sc, cfg)
        });
        if let Ok(o) = &outcome {
            for &c in &o.criteria {
                claims.entry(c).or_default().push((o.scenario.clone(), o.passed()));
            }
        }
        runs.push(ScenarioRun { path, outcome });
    }

    let rows = claims
        .into_iter()
        .map(|(criterion, entries)| MatrixRow {
            criterion,
            title: criterion_title(criterion),
            scenarios: entries.iter().map(|(name, _)| name.clone()).collect(),
            passed: entries.iter().all(|&(_, ok)| ok),
        })
        .collect();

    Ok(VerifySummary { runs, rows })
}
