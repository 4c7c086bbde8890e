//! Renewal processes: trajectories, the renewal function, and the laws of
//! the overjump (time to the next epoch) and underjump (time since the last).
//!
//! The renewal function table is built by summing convolution powers of the
//! cycle law on a uniform grid. Cell masses are CDF differences, so an atom's
//! mass lands entirely in the cell containing it; powers are added until the
//! next one's total mass on the grid drops below `1e-12`. The declared
//! discretization error bound is `t_max * h / mean^2`, the worst-case drift
//! of pushing each cell's mass to its right edge.

use std::fmt;
use std::io::{self, Write};

use rand::Rng;

use crate::dist::{lattice_span, Distribution, LatticeSpan};
use crate::quad;

/// Convolution powers a table build may sum before giving up.
pub const POWER_BUDGET: u64 = 1_000_000;
/// A power whose total grid mass is below this no longer moves the table.
const POWER_MASS_EPS: f64 = 1e-12;
/// Observation times within this of a jump count as just after it.
pub const JUMP_TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum RenewalError {
    /// The power sum did not converge within the budget.
    BudgetExceeded { powers: u64 },
    /// A query time lies outside the table's grid.
    OutOfRange { t: f64, t_max: f64 },
    /// The cycle law lives on a grid, so the long-run limit does not exist.
    LatticeCycle { span: f64 },
}

impl fmt::Display for RenewalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RenewalError::BudgetExceeded { powers } => {
                write!(f, "renewal function did not converge within {powers} convolution powers")
            }
            RenewalError::OutOfRange { t, t_max } => {
                write!(f, "time {t} is outside the tabulated range [0, {t_max}]")
            }
            RenewalError::LatticeCycle { span } => {
                write!(f, "cycle law is concentrated on a grid of pitch {span}; no limit exists")
            }
        }
    }
}

impl std::error::Error for RenewalError {}

/// Jump epochs of one renewal path. The last jump is the first one past the
/// horizon, so the next epoch after any `t <= horizon` is always recorded.
#[derive(Debug, Clone)]
pub struct RenewalTrajectory {
    jump_times: Vec<f64>,
    horizon: f64,
}

impl RenewalTrajectory {
    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of epochs in `[0, t]`, counting a tie as having jumped.
    pub fn count_up_to(&self, t: f64) -> usize {
        self.jump_times.partition_point(|j| *j <= t + JUMP_TIE_TOL)
    }

    /// One jump epoch per line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "jump_time")?;
        for t in &self.jump_times {
            writeln!(out, "{t}")?;
        }
        Ok(())
    }
}

/// Draws a renewal path: the first increment from `first_delay` when given,
/// all later ones from `cycle`, stopping at the first epoch past `horizon`.
pub fn simulate_renewal(
    first_delay: Option<&Distribution>,
    cycle: &Distribution,
    horizon: f64,
    rng: &mut impl Rng,
) -> RenewalTrajectory {
    assert!(horizon.is_finite() && horizon > 0.0, "horizon must be finite and positive");
    let mut jump_times = Vec::with_capacity((horizon / cycle.mean()) as usize + 2);
    let mut t = match first_delay {
        Some(delay) => delay.sample(rng),
        None => cycle.sample(rng),
    };
    jump_times.push(t);
    while t <= horizon {
        t += cycle.sample(rng);
        jump_times.push(t);
    }
    RenewalTrajectory { jump_times, horizon }
}

/// Elapsed and remaining time around `t` on a renewal path: the pair
/// `(t - last epoch <= t, next epoch - t)` with the process origin as epoch
/// zero. A `t` within `JUMP_TIE_TOL` of an epoch counts as just after it.
pub fn observe_over_under(traj: &RenewalTrajectory, t: f64) -> (f64, f64) {
    assert!(
        (0.0..=traj.horizon).contains(&t),
        "observation time {t} outside [0, {}]",
        traj.horizon
    );
    let idx = traj.count_up_to(t);
    let prev = if idx == 0 { 0.0 } else { traj.jump_times[idx - 1] };
    let next = traj.jump_times[idx];
    ((t - prev).max(0.0), (next - t).max(0.0))
}

/// The renewal function tabulated on a uniform grid.
#[derive(Debug, Clone)]
pub struct RenewalFunctionTable {
    step: f64,
    /// `values[j]` approximates the expected epoch count in `[0, j * step]`;
    /// `values[0] = 0` and the sequence is nondecreasing.
    values: Vec<f64>,
    /// Convolution powers summed before the remainder fell below threshold.
    truncation_m: u64,
    /// Declared bound on the discretization error of any entry.
    grid_error_bound: f64,
}

impl RenewalFunctionTable {
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn t_max(&self) -> f64 {
        (self.values.len() - 1) as f64 * self.step
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn truncation_m(&self) -> u64 {
        self.truncation_m
    }

    pub fn grid_error_bound(&self) -> f64 {
        self.grid_error_bound
    }

    fn grid_index(&self, t: f64) -> Result<usize, RenewalError> {
        if !t.is_finite() || t < -JUMP_TIE_TOL {
            return Err(RenewalError::OutOfRange { t, t_max: self.t_max() });
        }
        let idx = (t / self.step).round() as usize;
        if idx >= self.values.len() {
            return Err(RenewalError::OutOfRange { t, t_max: self.t_max() });
        }
        Ok(idx)
    }

    /// Table value at the grid point nearest to `t`.
    pub fn value_at(&self, t: f64) -> Result<f64, RenewalError> {
        Ok(self.values[self.grid_index(t)?])
    }

    /// Columns `t, renewal_function`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,renewal_function")?;
        for (j, v) in self.values.iter().enumerate() {
            writeln!(out, "{},{v}", j as f64 * self.step)?;
        }
        Ok(())
    }
}

/// Builds the renewal function of `cycle` on `[0, t_max]` with grid step `h`
/// by summing convolution powers of the cycle law.
pub fn renewal_function(
    cycle: &Distribution,
    t_max: f64,
    h: f64,
) -> Result<RenewalFunctionTable, RenewalError> {
    assert!(h.is_finite() && h > 0.0, "grid step must be finite and positive");
    assert!(t_max.is_finite() && t_max >= h, "t_max must be finite and at least one step");
    let n = (t_max / h).ceil() as usize;

    // Cell masses of the cycle law; index i covers ((i-1)h, ih].
    let mut q = vec![0.0; n + 1];
    let mut prev = 0.0;
    for (i, slot) in q.iter_mut().enumerate().skip(1) {
        let c = cycle.cdf(i as f64 * h);
        *slot = (c - prev).max(0.0);
        prev = c;
    }
    let q_lo = match q.iter().position(|m| *m > 0.0) {
        Some(i) => i,
        None => {
            // All cycle mass lies beyond the grid; the renewal function is 0.
            return Ok(RenewalFunctionTable {
                step: h,
                values: vec![0.0; n + 1],
                truncation_m: 0,
                grid_error_bound: declared_error(cycle, t_max, h),
            });
        }
    };
    let q_hi = q.iter().rposition(|m| *m > 0.0).expect("nonzero mass located above");

    // Running renewal mass per cell; converted to a CDF at the end.
    let mut density = vec![0.0; n + 1];
    let mut power = q.clone();
    let mut scratch = vec![0.0; n + 1];
    // Active index range of the current power; sparse cycles (atoms) keep
    // this narrow, which is what makes the budget guard reachable.
    let mut lo = q_lo;
    let mut hi = q_hi.min(n);
    let mut m: u64 = 0;
    loop {
        let mass: f64 = power[lo..=hi].iter().sum();
        if mass < POWER_MASS_EPS {
            break;
        }
        if m >= POWER_BUDGET {
            return Err(RenewalError::BudgetExceeded { powers: m });
        }
        for j in lo..=hi {
            density[j] += power[j];
        }
        m += 1;

        let next_lo = lo + q_lo;
        if next_lo > n {
            break;
        }
        let next_hi = (hi + q_hi).min(n);
        scratch[next_lo..=next_hi].fill(0.0);
        for i in q_lo..=q_hi {
            let qi = q[i];
            if qi == 0.0 || i + lo > n {
                continue;
            }
            let k_hi = (i + hi).min(n);
            let src = &power[lo..=k_hi - i];
            let dst = &mut scratch[i + lo..=k_hi];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += qi * s;
            }
        }
        std::mem::swap(&mut power, &mut scratch);
        lo = next_lo;
        hi = next_hi;
    }

    let mut values = vec![0.0; n + 1];
    let mut acc = 0.0;
    for j in 1..=n {
        acc += density[j];
        values[j] = acc;
    }
    Ok(RenewalFunctionTable {
        step: h,
        values,
        truncation_m: m,
        grid_error_bound: declared_error(cycle, t_max, h),
    })
}

/// Worst-case drift of right-edge cell placement over the whole grid.
fn declared_error(cycle: &Distribution, t_max: f64, h: f64) -> f64 {
    let mean = cycle.mean();
    t_max * h / (mean * mean)
}

/// Largest residual of the grid renewal equation `H = F + F * H` over a
/// probe set of grid indices. Catches index-shift mistakes in the builder.
pub fn renewal_equation_residual(table: &RenewalFunctionTable, cycle: &Distribution) -> f64 {
    let n = table.values.len() - 1;
    let h = table.step;
    let mut q = vec![0.0; n + 1];
    let mut prev = 0.0;
    for (i, slot) in q.iter_mut().enumerate().skip(1) {
        let c = cycle.cdf(i as f64 * h);
        *slot = (c - prev).max(0.0);
        prev = c;
    }
    let mut worst: f64 = 0.0;
    let probes = 64.min(n);
    for p in 1..=probes {
        let j = p * n / probes;
        let conv: f64 = (1..=j).map(|i| q[i] * table.values[j - i]).sum();
        let residual = (table.values[j] - cycle.cdf(j as f64 * h) - conv).abs();
        worst = worst.max(residual);
    }
    worst
}

/// Stieltjes integral of `b(t - u)` against the tabulated renewal function
/// over `[0, t]`, evaluating `b` at cell midpoints.
pub fn key_renewal_integral(
    b: impl Fn(f64) -> f64,
    table: &RenewalFunctionTable,
    t: f64,
) -> Result<f64, RenewalError> {
    let j_max = table.grid_index(t)?;
    let h = table.step;
    let mut total = 0.0;
    for j in 0..j_max {
        let mass = table.values[j + 1] - table.values[j];
        if mass > 0.0 {
            total += b(t - (j as f64 + 0.5) * h) * mass;
        }
    }
    Ok(total)
}

/// A long-run value together with the lattice diagnosis of the cycle that
/// produced it. On a lattice cycle the value is still the formula's number,
/// but it is only a time-average, not a pointwise limit.
#[derive(Debug, Clone, Copy)]
pub struct StationaryValue {
    pub value: f64,
    /// Present when the cycle is concentrated on a grid.
    pub lattice: Option<LatticeSpan>,
}

/// Long-run limit of the key renewal integral: `integral of b / mean`.
///
/// Errors on lattice cycles, where the pointwise limit does not exist. The
/// improper integral of `b` is evaluated over doubling blocks until a block
/// no longer contributes.
pub fn key_renewal_limit(b: impl Fn(f64) -> f64, cycle: &Distribution) -> Result<f64, RenewalError> {
    if let Some(span) = lattice_span(&cycle.support()) {
        return Err(RenewalError::LatticeCycle { span: span.span });
    }
    let mut total = 0.0;
    let mut lo = 0.0;
    let mut width = cycle.mean().max(1.0);
    for _ in 0..64 {
        let piece = quad::integrate(&b, lo, lo + width, 1e-10, 1e-14).value;
        total += piece;
        if piece.abs() <= 1e-13 * total.abs().max(1.0) {
            break;
        }
        lo += width;
        width *= 2.0;
    }
    Ok(total / cycle.mean())
}

/// Convergence diagnostic: the key renewal integral at each time, paired
/// with its distance from the limit.
pub struct ConvergencePoint {
    pub t: f64,
    pub value: f64,
    pub gap: f64,
}

/// Evaluates the key renewal integral at each of `times` and reports the gap
/// to the long-run limit.
pub fn key_renewal_convergence(
    b: impl Fn(f64) -> f64,
    cycle: &Distribution,
    table: &RenewalFunctionTable,
    times: &[f64],
) -> Result<Vec<ConvergencePoint>, RenewalError> {
    let limit = key_renewal_limit(&b, cycle)?;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let value = key_renewal_integral(&b, table, t)?;
        out.push(ConvergencePoint { t, value, gap: (value - limit).abs() });
    }
    Ok(out)
}

/// P{next epoch after `t` is more than `s` away}, exactly: the tail of the
/// cycle plus the renewal integral of the tail, evaluated on the grid.
pub fn overjump_survival_exact(
    cycle: &Distribution,
    table: &RenewalFunctionTable,
    s: f64,
    t: f64,
) -> Result<f64, RenewalError> {
    assert!(s >= 0.0, "overjump threshold must be nonnegative");
    let integral = key_renewal_integral(|u| cycle.survival(u + s), table, t)?;
    Ok((cycle.survival(t + s) + integral).clamp(0.0, 1.0))
}

/// Long-run P{overjump > a}: the normalized integrated tail of the cycle.
pub fn stationary_overjump_survival(cycle: &Distribution, a: f64) -> StationaryValue {
    StationaryValue {
        value: cycle.tail_integral(a.max(0.0)) / cycle.tail_integral(0.0),
        lattice: lattice_span(&cycle.support()),
    }
}

/// Long-run mean overjump: `second moment / (2 * mean)` of the cycle.
pub fn stationary_overjump_mean(cycle: &Distribution) -> StationaryValue {
    StationaryValue {
        value: cycle.second_moment() / (2.0 * cycle.mean()),
        lattice: lattice_span(&cycle.support()),
    }
}
