//! Declarative scenario files.
//!
//! A scenario is a JSON record that names a verification run: the law or
//! process under study, how to simulate it, where to probe it, and which
//! checks its outputs must pass. The same schema drives all four modes:
//!
//! | mode           | required fields              | what runs                               |
//! |----------------|------------------------------|-----------------------------------------|
//! | `renewal`      | `cycle`                      | renewal-function table, overjump laws   |
//! | `key-renewal`  | `cycle`, `integrand`         | renewal integral vs its long-run limit  |
//! | `linearwise`   | `chain`, `level_laws`, `initial` | stationary law vs replica estimates |
//! | `bounds`       | `cycle` or the linearwise trio | mean-curve, moment, conditional checks |
//!
//! Top-level keys: `name`, `mode`, `criteria` (verification-matrix row
//! numbers this scenario vouches for), the model fields above, `run`
//! (seed, replicas, grid step, horizons), `probes`, and `expect` (the
//! in-scenario assertions). Unknown keys anywhere are parse errors, so a
//! typo cannot silently relax a check. Distribution records are tagged by
//! `kind`:
//!
//! ```json
//! {"kind": "exponential", "rate": 1.0}
//! {"kind": "uniform", "lo": 0.0, "hi": 2.0}
//! {"kind": "gamma", "shape": 0.5, "scale": 1.0}
//! {"kind": "deterministic", "value": 2.5}
//! {"kind": "discrete", "atoms": [[1.0, 0.5], [3.0, 0.5]]}
//! {"kind": "empirical", "samples": [0.4, 1.1, 2.0]}
//! {"kind": "mixture", "weights": [0.3, 0.7], "components": [...]}
//! ```
//!
//! Every scenario must carry `run.seed`; given the same seed and worker
//! count a run reproduces its outputs byte for byte. `replicas` defaults
//! to 100 000 and `grid_step` to one thousandth of the cycle mean.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use renewal_kit::dist::{DistError, Distribution};
use renewal_kit::linearwise::{EmbeddedChain, LinearwiseProcess};

/// Replica count used when a scenario does not set one.
pub const DEFAULT_REPLICAS: u64 = 100_000;
/// Grid steps per cycle mean used when a scenario does not set `grid_step`.
pub const DEFAULT_STEPS_PER_MEAN: f64 = 1000.0;

#[derive(Debug)]
pub enum ScenarioError {
    /// The file could not be read at all.
    Io { path: PathBuf, message: String },
    /// The file is not valid JSON for the documented schema.
    Parse { path: PathBuf, line: usize, column: usize, message: String },
    /// The record parsed but violates a model invariant.
    Validation { scenario: String, message: String },
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioError::Io { path, message } => {
                write!(f, "cannot read {}: {message}", path.display())
            }
            ScenarioError::Parse { path, line, column, message } => {
                write!(f, "{}:{line}:{column}: {message}", path.display())
            }
            ScenarioError::Validation { scenario, message } => {
                write!(f, "scenario {scenario}: {message}")
            }
        }
    }
}

impl std::error::Error for ScenarioError {}

/// Which verification routine a scenario drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Renewal,
    KeyRenewal,
    Linearwise,
    Bounds,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Renewal => "renewal",
            Mode::KeyRenewal => "key-renewal",
            Mode::Linearwise => "linearwise",
            Mode::Bounds => "bounds",
        }
    }
}

/// Declarative record of one positive law; `build` turns it into a
/// [`Distribution`], surfacing the library's own parameter checks.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DistSpec {
    Exponential { rate: f64 },
    Uniform { lo: f64, hi: f64 },
    Gamma { shape: f64, scale: f64 },
    Deterministic { value: f64 },
    Discrete { atoms: Vec<(f64, f64)> },
    Empirical { samples: Vec<f64> },
    Mixture { weights: Vec<f64>, components: Vec<DistSpec> },
}

impl DistSpec {
    pub fn build(&self) -> Result<Distribution, DistError> {
        match self {
            DistSpec::Exponential { rate } => Distribution::exponential(*rate),
            DistSpec::Uniform { lo, hi } => Distribution::uniform(*lo, *hi),
            DistSpec::Gamma { shape, scale } => Distribution::gamma(*shape, *scale),
            DistSpec::Deterministic { value } => Distribution::deterministic(*value),
            DistSpec::Discrete { atoms } => Distribution::discrete(atoms),
            DistSpec::Empirical { samples } => Distribution::empirical(samples),
            DistSpec::Mixture { weights, components } => {
                let parts: Result<Vec<_>, _> = components.iter().map(DistSpec::build).collect();
                Distribution::mixture(weights, &parts?)
            }
        }
    }
}

/// Integrand of the key-renewal mode, described through a law so the
/// long-run limit stays computable in closed form.
#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Integrand {
    /// `b(u)` = survival of the law at `u`.
    Survival { law: DistSpec },
    /// `b(u)` = integrated tail of the law from `u`.
    TailIntegral { law: DistSpec },
}

/// Simulation and discretization parameters. `seed` is mandatory: runs
/// must be reproducible, so there is no wall-clock fallback.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunParams {
    pub seed: u64,
    #[serde(default)]
    pub replicas: Option<u64>,
    /// Renewal-function grid step; defaults to `mean / 1000`.
    #[serde(default)]
    pub grid_step: Option<f64>,
    /// Renewal-function table horizon.
    #[serde(default)]
    pub t_max: Option<f64>,
    /// Observation time for Monte Carlo estimates.
    #[serde(default)]
    pub t_obs: Option<f64>,
    /// Observation time for the conditional bound check.
    #[serde(default)]
    pub tau: Option<f64>,
}

/// Where to probe the computed laws. All lists may be empty.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Probes {
    /// `(s, t)` pairs for the finite-time overjump survival.
    pub survival: Vec<(f64, f64)>,
    /// Times for convergence diagnostics and curve estimates.
    pub times: Vec<f64>,
    /// `(state, a, b)` triples for stationary-law queries.
    pub triples: Vec<(usize, f64, f64)>,
}

/// `|observed - value| <= tol` at one time point.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointCheck {
    pub t: f64,
    pub value: f64,
    pub tol: f64,
}

/// `max_{t <= up_to} |H(t) - (slope t + intercept)| <= tol` over the grid.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearCheck {
    pub slope: f64,
    pub intercept: f64,
    pub up_to: f64,
    pub tol: f64,
}

/// Grid evaluation of `P{overjump at t > s}` against a frozen value.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSurvivalCheck {
    pub s: f64,
    pub t: f64,
    pub value: f64,
    pub tol: f64,
}

/// Long-run `P{overjump > s}`: the analytic value must sit within `tol`
/// of `value`; with `mc_z` set, a replica estimate at `t_obs` must also
/// cover `value` at that confidence multiplier.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationarySurvivalCheck {
    pub s: f64,
    pub value: f64,
    pub tol: f64,
    #[serde(default)]
    pub mc_z: Option<f64>,
}

/// A single analytic number within `tol` of `value`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValueCheck {
    pub value: f64,
    pub tol: f64,
}

/// A Monte Carlo estimate that must cover `value` at `z` standard errors.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandCheck {
    pub value: f64,
    pub z: f64,
}

/// `query(state, a, b)` within `tol` of `value`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryCheck {
    pub state: usize,
    pub a: f64,
    pub b: f64,
    pub value: f64,
    pub tol: f64,
}

/// Long-run level probability within `tol` of `value`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelCheck {
    pub state: usize,
    pub value: f64,
    pub tol: f64,
}

/// Analytic mean regeneration cycle length through `(state, 0)`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CycleCheck {
    pub state: usize,
    pub value: f64,
    pub tol: f64,
}

/// Empirical mean spacing of entries into `(state, 0)` over
/// `regenerations` cycles, within `z` standard errors of the analytic
/// value.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmpiricalCycleCheck {
    pub state: usize,
    pub regenerations: u64,
    pub z: f64,
}

/// Which sojourn side a mean-curve check watches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SideSpec {
    Overjump,
    Underjump,
}

/// Mean overjump or underjump estimated at `times`, required to be
/// nondecreasing (at three standard errors of each paired difference) and
/// to respect the long-run cap, when the respective flags are set.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanCurveCheck {
    pub side: SideSpec,
    pub times: Vec<f64>,
    #[serde(default)]
    pub require_monotone: bool,
    #[serde(default)]
    pub require_cap: bool,
}

/// Random `(s, t, delta)` probes of the exact overjump survival: each gap
/// `R(s, t + delta) - R(s, t)` must stay above `-floor_factor` times the
/// table's error bound. Probe coordinates are drawn from the run seed.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapProbeCheck {
    pub count: u32,
    pub s_max: f64,
    pub t_span: f64,
    pub delta_max: f64,
    pub floor_factor: f64,
}

/// Monte Carlo `E overjump^(power-1)` at `t_obs` against its cap; with
/// `expect` set, the estimate must also cover that value.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerMomentCheck {
    pub power: u32,
    #[serde(default)]
    pub expect: Option<f64>,
}

/// Monte Carlo `E exp(alpha overjump)` at `t_obs` against its cap; with
/// `bound` set, the cap itself is pinned; `expect` and `expect_slack`
/// additionally require the estimate to sit within
/// `max(half_width, expect_slack)` of `expect`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpMomentCheck {
    pub alpha: f64,
    #[serde(default)]
    pub bound: Option<ValueCheck>,
    #[serde(default)]
    pub expect: Option<f64>,
    #[serde(default)]
    pub expect_slack: Option<f64>,
}

/// Conditional elapsed / remaining sojourn means at one level, observed
/// at `tau`, against the level law's cap.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionalCheck {
    pub state: usize,
    #[serde(default)]
    pub bound: Option<ValueCheck>,
}

/// The in-scenario assertions; `run` exits nonzero when any fails. Every
/// field is optional so a scenario checks exactly what it declares.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Expectations {
    // Renewal mode.
    pub renewal_function: Vec<PointCheck>,
    pub linear_renewal_function: Option<LinearCheck>,
    pub grid_survival: Vec<GridSurvivalCheck>,
    pub stationary_survival: Vec<StationarySurvivalCheck>,
    pub stationary_mean: Option<ValueCheck>,
    pub mc_mean: Option<BandCheck>,
    // Key-renewal mode.
    pub limit_value: Option<ValueCheck>,
    pub convergence_gap: Option<GapCheck>,
    // Linearwise mode.
    pub analytic_queries: Vec<QueryCheck>,
    pub normalization_tol: Option<f64>,
    pub level_probabilities: Vec<LevelCheck>,
    pub mean_cycle: Vec<CycleCheck>,
    pub empirical_cycles: Vec<EmpiricalCycleCheck>,
    /// Confidence multiplier for empirical probes of `probes.triples`
    /// against the analytic law.
    pub empirical_band_z: Option<f64>,
    /// Second starting point; probe estimates from both starts must agree
    /// within combined half-widths.
    pub alt_initial: Option<(usize, f64)>,
    /// Sup distance between the process overjump sample and a plain
    /// renewal overjump sample with the same cycle law.
    pub degeneration_sup_tol: Option<f64>,
    // Bounds mode.
    pub mean_curve: Option<MeanCurveCheck>,
    pub gap_probes: Option<GapProbeCheck>,
    pub power_moment: Option<PowerMomentCheck>,
    pub exp_moment: Option<ExpMomentCheck>,
    pub conditional: Option<ConditionalCheck>,
}

/// `|integral(t) - limit| <= tol`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapCheck {
    pub t: f64,
    pub tol: f64,
}

/// One parsed and validated scenario file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub mode: Mode,
    /// Verification-matrix rows this scenario vouches for.
    #[serde(default)]
    pub criteria: Vec<u8>,
    #[serde(default)]
    pub cycle: Option<DistSpec>,
    /// Optional distinct law of the first cycle (delayed renewal).
    #[serde(default)]
    pub first_delay: Option<DistSpec>,
    #[serde(default)]
    pub integrand: Option<Integrand>,
    /// Row-stochastic transition matrix of the embedded chain.
    #[serde(default)]
    pub chain: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub level_laws: Option<Vec<DistSpec>>,
    /// Starting state and elapsed time `(n0, x0)`.
    #[serde(default)]
    pub initial: Option<(usize, f64)>,
    pub run: RunParams,
    #[serde(default)]
    pub probes: Probes,
    #[serde(default)]
    pub expect: Expectations,
}

impl Scenario {
    /// Replica count with the documented default applied.
    pub fn replicas(&self) -> u64 {
        self.run.replicas.unwrap_or(DEFAULT_REPLICAS)
    }

    /// Grid step with the documented default (`mean / 1000`) applied.
    pub fn grid_step(&self, cycle: &Distribution) -> f64 {
        self.run.grid_step.unwrap_or(cycle.mean() / DEFAULT_STEPS_PER_MEAN)
    }

    /// Builds the cycle law; errors if the mode needs one and it is absent.
    pub fn build_cycle(&self) -> Result<Distribution, ScenarioError> {
        match &self.cycle {
            Some(spec) => spec.build().map_err(|e| self.invalid(format!("cycle: {e}"))),
            None => Err(self.invalid("mode requires a `cycle` law".into())),
        }
    }

    /// Builds the linearwise process from `chain`, `level_laws`, `initial`.
    pub fn build_process(&self) -> Result<LinearwiseProcess, ScenarioError> {
        let rows = self
            .chain
            .clone()
            .ok_or_else(|| self.invalid("mode requires a `chain` matrix".into()))?;
        let chain = EmbeddedChain::new(rows).map_err(|e| self.invalid(e.to_string()))?;
        let specs = self
            .level_laws
            .as_ref()
            .ok_or_else(|| self.invalid("mode requires `level_laws`".into()))?;
        let laws = self.build_level_laws(specs)?;
        let initial = self
            .initial
            .ok_or_else(|| self.invalid("mode requires `initial: [state, elapsed]`".into()))?;
        LinearwiseProcess::new(chain, laws, initial).map_err(|e| self.invalid(e.to_string()))
    }

    fn build_level_laws(&self, specs: &[DistSpec]) -> Result<Vec<Distribution>, ScenarioError> {
        specs
            .iter()
            .enumerate()
            .map(|(k, spec)| {
                spec.build().map_err(|e| self.invalid(format!("level law {k}: {e}")))
            })
            .collect()
    }

    fn invalid(&self, message: String) -> ScenarioError {
        ScenarioError::Validation { scenario: self.name.clone(), message }
    }

    /// Cross-field checks that serde cannot express. Builds every declared
    /// law and the chain once, so bad parameters surface at load time.
    fn validate(&self) -> Result<(), ScenarioError> {
        if self.name.is_empty() {
            return Err(self.invalid("name must be nonempty".into()));
        }
        for (field, value) in [
            ("replicas", self.run.replicas.map(|r| r as f64)),
            ("grid_step", self.run.grid_step),
            ("t_max", self.run.t_max),
            ("t_obs", self.run.t_obs),
            ("tau", self.run.tau),
        ] {
            if let Some(v) = value {
                if !(v.is_finite() && v > 0.0) {
                    return Err(self.invalid(format!("run.{field} must be positive, got {v}")));
                }
            }
        }
        match self.mode {
            Mode::Renewal => {
                self.build_cycle()?;
                if let Some(delay) = &self.first_delay {
                    delay.build().map_err(|e| self.invalid(format!("first_delay: {e}")))?;
                }
            }
            Mode::KeyRenewal => {
                self.build_cycle()?;
                let integrand = self
                    .integrand
                    .as_ref()
                    .ok_or_else(|| self.invalid("key-renewal mode requires `integrand`".into()))?;
                let (Integrand::Survival { law } | Integrand::TailIntegral { law }) = integrand;
                law.build().map_err(|e| self.invalid(format!("integrand law: {e}")))?;
            }
            Mode::Linearwise => {
                self.build_process()?;
            }
            Mode::Bounds => {
                // Conditional checks need the process; everything else the
                // cycle. A bounds scenario may carry both.
                if self.expect.conditional.is_some() {
                    self.build_process()?;
                    if self.run.tau.is_none() {
                        return Err(self.invalid("conditional check requires run.tau".into()));
                    }
                } else {
                    self.build_cycle()?;
                }
                if (self.expect.mean_curve.is_some()
                    || self.expect.gap_probes.is_some()
                    || self.expect.power_moment.is_some()
                    || self.expect.exp_moment.is_some())
                    && self.cycle.is_none()
                {
                    return Err(self.invalid("cycle-based bounds checks require `cycle`".into()));
                }
            }
        }
        if let Some(curve) = &self.expect.mean_curve {
            if curve.times.is_empty() {
                return Err(self.invalid("mean_curve.times must be nonempty".into()));
            }
        }
        if self.expect.mc_mean.is_some() && self.run.t_obs.is_none() {
            return Err(self.invalid("mc_mean check requires run.t_obs".into()));
        }
        Ok(())
    }
}

/// Reads and validates one scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = fs::read_to_string(path).map_err(|e| ScenarioError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let scenario: Scenario = serde_json::from_str(&text).map_err(|e| ScenarioError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    scenario.validate()?;
    Ok(scenario)
}
