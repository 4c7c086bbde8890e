//! Processes that move on a finite level set by an embedded Markov chain and
//! sit at each level for an independent, level-specific random sojourn.
//!
//! | piece | meaning |
//! |---|---|
//! | `EmbeddedChain` | row-stochastic jump matrix with one closed class |
//! | `LinearwiseProcess` | chain + sojourn law per level + initial (level, elapsed) |
//! | `Trajectory` | one simulated path: jump epochs and levels entered |
//! | `StationaryLaw` | long-run law of (level, elapsed, remaining) |
//!
//! The long-run law assigns `P{level=i, elapsed>a, remaining>b}` the value
//! `(p_i / T) * tail_integral(law_i, a+b)` where `p` solves `pP = p` on the
//! closed class and `T` is the frequency-weighted mean sojourn. The law is
//! only a pointwise limit when the essential sojourn laws do not all live on
//! one common grid, so construction rejects that lattice case.

use std::fmt;
use std::io::{self, Write};

use rand::Rng;
use rayon::prelude::*;

use crate::dist::{common_support_nonlattice, Distribution};
use crate::rng::StreamFactory;
use crate::stats::{self, Estimate};

/// Jumps a first-hit search may take before giving up.
pub const HIT_JUMP_CAP: u64 = 1_000_000;
/// Observation times within this of a jump count as just after it.
const JUMP_TIE_TOL: f64 = 1e-12;
const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum LinearwiseError {
    /// The transition matrix is not square row-stochastic.
    InvalidChain(String),
    /// The chain's long-run frequencies would depend on the starting state.
    MultipleClosedClasses { count: usize },
    /// Process pieces that do not fit together (law count, initial state).
    InvalidProcess(String),
    /// Every essential sojourn law sits on one common grid, so the law of
    /// the process at time t has no pointwise limit.
    LatticeSupport { span: f64 },
    UnknownState { state: usize },
    /// The state is never revisited in the long run.
    TransientState { state: usize },
    /// The first-hit search exhausted its jump budget.
    NoHit { jumps: u64 },
}

impl fmt::Display for LinearwiseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinearwiseError::InvalidChain(why) => write!(f, "invalid transition matrix: {why}"),
            LinearwiseError::MultipleClosedClasses { count } => {
                write!(f, "chain has {count} closed classes; long-run frequencies depend on the start")
            }
            LinearwiseError::InvalidProcess(why) => write!(f, "invalid process: {why}"),
            LinearwiseError::LatticeSupport { span } => {
                write!(f, "essential sojourn laws share a lattice of pitch {span}; no pointwise limit exists")
            }
            LinearwiseError::UnknownState { state } => write!(f, "state {state} is not in the chain"),
            LinearwiseError::TransientState { state } => {
                write!(f, "state {state} is transient; it has no long-run cycle")
            }
            LinearwiseError::NoHit { jumps } => {
                write!(f, "target state not hit within {jumps} jumps")
            }
        }
    }
}

impl std::error::Error for LinearwiseError {}

/// Row-stochastic jump matrix over levels `0..n` with exactly one closed
/// communicating class. Long-run visit frequencies are solved once at
/// construction and are positive exactly on the closed class.
#[derive(Debug, Clone)]
pub struct EmbeddedChain {
    rows: Vec<Vec<f64>>,
    /// Per-row cumulative sums for sampling.
    cum: Vec<Vec<f64>>,
    closed: Vec<usize>,
    freq: Vec<f64>,
}

impl EmbeddedChain {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, LinearwiseError> {
        let n = rows.len();
        if n == 0 {
            return Err(LinearwiseError::InvalidChain("empty matrix".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(LinearwiseError::InvalidChain(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            let mut sum = 0.0;
            for (j, &p) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&p) {
                    return Err(LinearwiseError::InvalidChain(format!(
                        "entry ({i},{j}) = {p} outside [0,1]"
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(LinearwiseError::InvalidChain(format!("row {i} sums to {sum}")));
            }
        }
        let classes = closed_classes(&rows);
        if classes.len() != 1 {
            return Err(LinearwiseError::MultipleClosedClasses { count: classes.len() });
        }
        let closed = classes.into_iter().next().expect("one class");
        let freq = stationary_vector(&rows, &closed);
        let cum = rows
            .iter()
            .map(|row| {
                let mut acc = 0.0;
                row.iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect()
            })
            .collect();
        Ok(EmbeddedChain { rows, cum, closed, freq })
    }

    pub fn n_states(&self) -> usize {
        self.rows.len()
    }

    pub fn transition(&self, from: usize, to: usize) -> f64 {
        self.rows[from][to]
    }

    /// States the chain keeps revisiting forever.
    pub fn closed_class(&self) -> &[usize] {
        &self.closed
    }

    /// Long-run visit frequencies: the stationary row vector on the closed
    /// class, zero on transient states. These are time-average frequencies,
    /// so periodic chains are fine.
    pub fn frequencies(&self) -> &[f64] {
        &self.freq
    }

    /// One transition from `from`.
    pub fn step(&self, from: usize, rng: &mut impl Rng) -> usize {
        let u: f64 = rng.gen();
        let row = &self.cum[from];
        row.partition_point(|c| *c < u).min(row.len() - 1)
    }
}

/// Strongly connected components with no outgoing edge (edge: positive
/// transition probability). Kosaraju over the small level graph.
fn closed_classes(rows: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let n = rows.len();
    let edge = |i: usize, j: usize| rows[i][j] > 0.0;

    // First pass: order states by DFS finish time.
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut stack = vec![(start, 0usize)];
        seen[start] = true;
        while let Some(&mut (v, ref mut next)) = stack.last_mut() {
            if let Some(w) = (*next..n).find(|&w| edge(v, w) && !seen[w]) {
                *next = w + 1;
                seen[w] = true;
                stack.push((w, 0));
            } else {
                order.push(v);
                stack.pop();
            }
        }
    }

    // Second pass: reversed-edge DFS in reverse finish order.
    let mut component = vec![usize::MAX; n];
    let mut count = 0;
    for &start in order.iter().rev() {
        if component[start] != usize::MAX {
            continue;
        }
        let mut stack = vec![start];
        component[start] = count;
        while let Some(v) = stack.pop() {
            for w in 0..n {
                if edge(w, v) && component[w] == usize::MAX {
                    component[w] = count;
                    stack.push(w);
                }
            }
        }
        count += 1;
    }

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); count];
    for (v, &c) in component.iter().enumerate() {
        members[c].push(v);
    }
    members
        .into_iter()
        .filter(|class| {
            class.iter().all(|&v| {
                (0..n).all(|w| !edge(v, w) || component[w] == component[class[0]])
            })
        })
        .collect()
}

/// Solves `pP = p`, `sum p = 1` on the closed class by Gaussian elimination
/// with partial pivoting; returns the full-length vector, zero elsewhere.
fn stationary_vector(rows: &[Vec<f64>], closed: &[usize]) -> Vec<f64> {
    let m = closed.len();
    // a = (P restricted, transposed) - I, with the last equation replaced by
    // the normalization sum p = 1.
    let mut a = vec![vec![0.0; m + 1]; m];
    for (col, &j) in closed.iter().enumerate() {
        for (row, &i) in closed.iter().enumerate() {
            a[row][col] = rows[j][i] - if row == col { 1.0 } else { 0.0 };
        }
    }
    for col in 0..m {
        a[m - 1][col] = 1.0;
    }
    a[m - 1][m] = 1.0;

    for col in 0..m {
        let pivot = (col..m)
            .max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))
            .expect("nonempty pivot range");
        a.swap(col, pivot);
        let lead = a[col][col];
        debug_assert!(lead.abs() > 0.0, "singular stationary system");
        for row in 0..m {
            if row == col {
                continue;
            }
            let factor = a[row][col] / lead;
            if factor != 0.0 {
                for k in col..=m {
                    let delta = factor * a[col][k];
                    a[row][k] -= delta;
                }
            }
        }
    }

    let mut freq = vec![0.0; rows.len()];
    for (idx, &state) in closed.iter().enumerate() {
        freq[state] = (a[idx][m] / a[idx][idx]).max(0.0);
    }
    freq
}

/// A level process: embedded chain, one sojourn law per level, and the
/// initial condition `(level, elapsed time already spent there)`.
#[derive(Debug, Clone)]
pub struct LinearwiseProcess {
    chain: EmbeddedChain,
    level_laws: Vec<Distribution>,
    initial: (usize, f64),
    /// Law of the remaining first sojourn, fixed by the initial condition.
    first_sojourn: Distribution,
}

impl LinearwiseProcess {
    pub fn new(
        chain: EmbeddedChain,
        level_laws: Vec<Distribution>,
        initial: (usize, f64),
    ) -> Result<Self, LinearwiseError> {
        if level_laws.len() != chain.n_states() {
            return Err(LinearwiseError::InvalidProcess(format!(
                "{} sojourn laws for {} states",
                level_laws.len(),
                chain.n_states()
            )));
        }
        if let Some(k) = level_laws.iter().position(|d| d.is_degenerate_zero()) {
            return Err(LinearwiseError::InvalidProcess(format!(
                "sojourn law for state {k} is concentrated at 0"
            )));
        }
        let (n0, x0) = initial;
        if n0 >= chain.n_states() {
            return Err(LinearwiseError::InvalidProcess(format!(
                "initial state {n0} is not in 0..{}",
                chain.n_states()
            )));
        }
        if !x0.is_finite() || x0 < 0.0 {
            return Err(LinearwiseError::InvalidProcess(format!(
                "initial elapsed time {x0} must be finite and nonnegative"
            )));
        }
        let first_sojourn = level_laws[n0].residual(x0);
        Ok(LinearwiseProcess { chain, level_laws, initial, first_sojourn })
    }

    pub fn chain(&self) -> &EmbeddedChain {
        &self.chain
    }

    pub fn level_laws(&self) -> &[Distribution] {
        &self.level_laws
    }

    pub fn initial(&self) -> (usize, f64) {
        self.initial
    }
}

/// One simulated path. `jump_times[j]` is the j-th level change and
/// `levels_after[j]` the level entered by it; the starting level and its
/// already-elapsed time are in `initial`. The last jump is the first one
/// past the horizon. Jumps are strictly increasing, except that a starting
/// elapsed time at or past the end of the level's support fires the first
/// jump at exactly 0.
#[derive(Debug, Clone)]
pub struct Trajectory {
    initial: (usize, f64),
    jump_times: Vec<f64>,
    levels_after: Vec<usize>,
    horizon: f64,
}

impl Trajectory {
    pub fn initial(&self) -> (usize, f64) {
        self.initial
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn levels_after(&self) -> &[usize] {
        &self.levels_after
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }
}

/// What a probe of the process at one time sees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateObservation {
    pub level: usize,
    /// Time since the level was entered (includes time spent before the
    /// observation window when the process started mid-sojourn).
    pub elapsed: f64,
    /// Time until the next level change.
    pub remaining: f64,
}

/// Draws one path of the process out to the first jump past `horizon`.
pub fn simulate(proc: &LinearwiseProcess, horizon: f64, rng: &mut impl Rng) -> Trajectory {
    assert!(horizon.is_finite() && horizon > 0.0, "horizon must be finite and positive");
    let (n0, _) = proc.initial;
    let mut jump_times = Vec::new();
    let mut levels_after = Vec::new();
    let mut level = n0;
    let mut t = proc.first_sojourn.sample(rng);
    loop {
        level = proc.chain.step(level, rng);
        jump_times.push(t);
        levels_after.push(level);
        if t > horizon {
            break;
        }
        t += proc.level_laws[level].sample(rng);
    }
    Trajectory { initial: proc.initial, jump_times, levels_after, horizon }
}

/// Level, elapsed, and remaining time at `t`; ties with a jump count as just
/// after it. Before the first jump the elapsed time includes the initial
/// condition's head start.
pub fn observe_state(traj: &Trajectory, t: f64) -> StateObservation {
    assert!(
        (0.0..=traj.horizon).contains(&t),
        "observation time {t} outside [0, {}]",
        traj.horizon
    );
    let idx = traj.jump_times.partition_point(|j| *j <= t + JUMP_TIE_TOL);
    if idx == 0 {
        let (n0, x0) = traj.initial;
        StateObservation { level: n0, elapsed: t + x0, remaining: traj.jump_times[0] - t }
    } else {
        StateObservation {
            level: traj.levels_after[idx - 1],
            elapsed: (t - traj.jump_times[idx - 1]).max(0.0),
            remaining: (traj.jump_times[idx] - t).max(0.0),
        }
    }
}

/// The long-run joint law of (level, elapsed, remaining).
#[derive(Debug, Clone)]
pub struct StationaryLaw {
    freq: Vec<f64>,
    level_laws: Vec<Distribution>,
    mean_cycle: f64,
}

/// Builds the long-run law of the process driven by `chain` and
/// `level_laws`. Fails when the essential sojourn laws all sit on one
/// common grid, since the law of the process at time t then keeps
/// oscillating instead of converging.
pub fn stationary_law(
    chain: &EmbeddedChain,
    level_laws: &[Distribution],
) -> Result<StationaryLaw, LinearwiseError> {
    if level_laws.len() != chain.n_states() {
        return Err(LinearwiseError::InvalidProcess(format!(
            "{} sojourn laws for {} states",
            level_laws.len(),
            chain.n_states()
        )));
    }
    let essential: Vec<&Distribution> =
        chain.closed_class().iter().map(|&k| &level_laws[k]).collect();
    if !common_support_nonlattice(&essential) {
        let mut support = essential[0].support();
        for law in &essential[1..] {
            support = support.merge(&law.support());
        }
        let span = crate::dist::lattice_span(&support).map_or(0.0, |l| l.span);
        return Err(LinearwiseError::LatticeSupport { span });
    }
    let freq = chain.frequencies().to_vec();
    let mean_cycle = freq
        .iter()
        .zip(level_laws)
        .map(|(p, law)| p * law.mean())
        .sum();
    Ok(StationaryLaw { freq, level_laws: level_laws.to_vec(), mean_cycle })
}

impl StationaryLaw {
    pub fn n_states(&self) -> usize {
        self.freq.len()
    }

    /// Long-run visit frequency of the embedded chain at `k`.
    pub fn frequency(&self, k: usize) -> f64 {
        self.freq[k]
    }

    /// Frequency-weighted mean sojourn: the normalizer `T`.
    pub fn mean_sojourn(&self) -> f64 {
        self.mean_cycle
    }

    /// `P{level = i, elapsed > a, remaining > b}` in the long run. Depends
    /// on `(a, b)` only through `a + b`.
    pub fn query(&self, i: usize, a: f64, b: f64) -> Result<f64, LinearwiseError> {
        if i >= self.freq.len() {
            return Err(LinearwiseError::UnknownState { state: i });
        }
        assert!(a >= 0.0 && b >= 0.0, "thresholds must be nonnegative");
        Ok(self.freq[i] / self.mean_cycle * self.level_laws[i].tail_integral(a + b))
    }

    /// Long-run `P{level = k}`.
    pub fn level_probability(&self, k: usize) -> Result<f64, LinearwiseError> {
        if k >= self.freq.len() {
            return Err(LinearwiseError::UnknownState { state: k });
        }
        Ok(self.freq[k] * self.level_laws[k].mean() / self.mean_cycle)
    }

    /// Mean time between consecutive entries into `(k, 0)`.
    pub fn mean_cycle_length(&self, k: usize) -> Result<f64, LinearwiseError> {
        if k >= self.freq.len() {
            return Err(LinearwiseError::UnknownState { state: k });
        }
        if self.freq[k] <= 0.0 {
            return Err(LinearwiseError::TransientState { state: k });
        }
        Ok(self.mean_cycle / self.freq[k])
    }
}

/// Empirical snapshot law: many independent paths probed at one time.
#[derive(Debug, Clone)]
pub struct EmpiricalLaw {
    t_obs: f64,
    observations: Vec<StateObservation>,
}

/// Simulates `replicas` independent paths to `t_obs` and records what each
/// sees there. Replica `r` uses stream `r` of `streams`, so the result does
/// not depend on how the work is scheduled across threads.
pub fn estimate_law(
    proc: &LinearwiseProcess,
    t_obs: f64,
    replicas: u64,
    streams: &StreamFactory,
) -> EmpiricalLaw {
    let observations = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = streams.replica(r);
            let traj = simulate(proc, t_obs, &mut rng);
            observe_state(&traj, t_obs)
        })
        .collect();
    EmpiricalLaw { t_obs, observations }
}

impl EmpiricalLaw {
    pub fn t_obs(&self) -> f64 {
        self.t_obs
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn observations(&self) -> &[StateObservation] {
        &self.observations
    }

    /// Estimate of `P{level = i, elapsed > a, remaining > b}`.
    pub fn probe(&self, i: usize, a: f64, b: f64, z: f64) -> Estimate {
        let hits = self
            .observations
            .iter()
            .filter(|o| o.level == i && o.elapsed > a && o.remaining > b)
            .count();
        stats::binomial_estimate(hits as u64, self.observations.len() as u64, z)
    }

    /// Estimate of `P{level = k}`.
    pub fn level_estimate(&self, k: usize, z: f64) -> Estimate {
        let hits = self.observations.iter().filter(|o| o.level == k).count();
        stats::binomial_estimate(hits as u64, self.observations.len() as u64, z)
    }

    /// Estimate of `P{remaining > b}` regardless of level.
    pub fn remaining_survival(&self, b: f64, z: f64) -> Estimate {
        let hits = self.observations.iter().filter(|o| o.remaining > b).count();
        stats::binomial_estimate(hits as u64, self.observations.len() as u64, z)
    }

    /// Rows `state,a,b,estimate,half_width,analytic`; the analytic column is
    /// empty when no law is supplied.
    pub fn write_probe_csv<W: Write>(
        &self,
        mut out: W,
        probes: &[(usize, f64, f64)],
        law: Option<&StationaryLaw>,
        z: f64,
    ) -> io::Result<()> {
        writeln!(out, "state,a,b,estimate,half_width,analytic")?;
        for &(i, a, b) in probes {
            let est = self.probe(i, a, b, z);
            let analytic = law
                .and_then(|l| l.query(i, a, b).ok())
                .map_or(String::new(), |v| v.to_string());
            writeln!(out, "{i},{a},{b},{},{},{analytic}", est.value, est.half_width)?;
        }
        Ok(())
    }
}

/// First time the path enters `(k, 0)`, i.e. the first jump into level `k`.
/// Gives up after `HIT_JUMP_CAP` jumps; that is a diagnostic, not a proof
/// the hit never comes.
pub fn first_hit_time(
    proc: &LinearwiseProcess,
    k: usize,
    rng: &mut impl Rng,
) -> Result<f64, LinearwiseError> {
    if k >= proc.chain.n_states() {
        return Err(LinearwiseError::UnknownState { state: k });
    }
    let mut level = proc.initial.0;
    let mut t = proc.first_sojourn.sample(rng);
    for _ in 0..HIT_JUMP_CAP {
        level = proc.chain.step(level, rng);
        if level == k {
            return Ok(t);
        }
        t += proc.level_laws[level].sample(rng);
    }
    Err(LinearwiseError::NoHit { jumps: HIT_JUMP_CAP })
}

/// Times between consecutive entries into `(k, 0)` along one path, starting
/// the clock at the first entry. These spacings are independent and
/// identically distributed copies of the regeneration cycle.
pub fn regeneration_spacings(
    proc: &LinearwiseProcess,
    k: usize,
    count: usize,
    rng: &mut impl Rng,
) -> Result<Vec<f64>, LinearwiseError> {
    if k >= proc.chain.n_states() {
        return Err(LinearwiseError::UnknownState { state: k });
    }
    let mut spacings = Vec::with_capacity(count);
    let mut level = proc.initial.0;
    let mut t = proc.first_sojourn.sample(rng);
    let mut last_entry: Option<f64> = None;
    let mut budget = HIT_JUMP_CAP;
    while spacings.len() < count {
        if budget == 0 {
            return Err(LinearwiseError::NoHit { jumps: HIT_JUMP_CAP });
        }
        budget -= 1;
        level = proc.chain.step(level, rng);
        if level == k {
            if let Some(prev) = last_entry {
                spacings.push(t - prev);
            }
            last_entry = Some(t);
            budget = HIT_JUMP_CAP;
        }
        t += proc.level_laws[level].sample(rng);
    }
    Ok(spacings)
}
