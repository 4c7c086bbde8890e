//! Verification gate: one test per row of the bundled verification
//! checklist, with every tolerance pinned in code.
//!
//! The tests drive the library directly, so the gate holds even if the
//! scenario files drift; the final criterion runs the whole scenario
//! directory through `verify-all` and pins the reproducibility contract.
//!
//! Criterion 7 encodes a monotone-growth claim for the mean overjump that
//! is false for Uniform(0, 1) cycles; that test is expected to fail, and
//! its panic message carries the closed forms that disprove the claim.

mod common;

use std::collections::BTreeMap;

use rand::{Rng, RngCore};
use rayon::prelude::*;

use renewal_kit::bounds::{
    conditional_bound_check, exp_moment_check, monotonicity_gap, overjump_mean_curve,
    power_moment_check,
};
use renewal_kit::dist::Distribution;
use renewal_kit::linearwise::{
    estimate_law, regeneration_spacings, stationary_law, EmbeddedChain, LinearwiseProcess,
};
use renewal_kit::renewal::{
    key_renewal_integral, key_renewal_limit, observe_over_under, overjump_survival_exact,
    renewal_function, simulate_renewal,
};
use renewal_kit::rng::StreamFactory;
use renewal_kit::stats::{self, Z_999};
use renewal_kit_cli::exec::{self, criterion_title, RunConfig};

use common::{scenarios_dir, TestDir};

/// Every Monte Carlo criterion runs at this seed and replica count.
const SEED: u64 = 1;
const REPLICAS: u64 = 100_000;
/// Grid pitch for renewal-function tables.
const GRID_STEP: f64 = 0.001;
/// Long observation horizon treated as "the process has settled".
const T_OBS: f64 = 64.0;

fn pass(n: u8) {
    println!("criterion {n} ({}): PASS", criterion_title(n));
}

fn fail(n: u8, detail: String) -> ! {
    panic!("criterion {n} ({}): FAIL - {detail}", criterion_title(n));
}

fn exp1() -> Distribution {
    Distribution::exponential(1.0).expect("valid rate")
}

fn uniform01() -> Distribution {
    Distribution::uniform(0.0, 1.0).expect("valid interval")
}

/// Two-state alternating process: level 0 holds Exp(1), level 1 holds the
/// given uniform law, started at `initial`.
fn alternating(hi: f64, initial: (usize, f64)) -> LinearwiseProcess {
    let chain = EmbeddedChain::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).expect("valid chain");
    let laws = vec![exp1(), Distribution::uniform(0.0, hi).expect("valid interval")];
    LinearwiseProcess::new(chain, laws, initial).expect("valid process")
}

/// Overjump and underjump observed at `T_OBS` across `REPLICAS` paths.
fn renewal_sample(cycle: &Distribution, streams: &StreamFactory) -> Vec<(f64, f64)> {
    (0..REPLICAS)
        .into_par_iter()
        .map(|r| {
            let mut rng = streams.replica(r);
            let traj = simulate_renewal(None, cycle, T_OBS, &mut rng);
            observe_over_under(&traj, T_OBS)
        })
        .collect()
}

#[test]
fn criterion_01_renewal_function_oracle() {
    // Exp(1) is the one cycle law with H(t) = t exactly; the grid table
    // must track that line within 0.01 everywhere up to t = 10.
    const TOL: f64 = 0.01;
    let table = renewal_function(&exp1(), 10.0, GRID_STEP).expect("valid table");
    let h = table.step();
    let (mut worst_t, mut max_dev) = (0.0, 0.0f64);
    for (i, &v) in table.values().iter().enumerate() {
        let t = i as f64 * h;
        let dev = (v - t).abs();
        if dev > max_dev {
            max_dev = dev;
            worst_t = t;
        }
    }
    if max_dev > TOL {
        fail(1, format!("max |H(t) - t| = {max_dev} at t = {worst_t}, allowed {TOL}"));
    }
    pass(1);
}

#[test]
fn criterion_02_key_renewal_convergence() {
    // b = survival of Exp(1) against Exp(1) cycles: the limit is exactly
    // 1, and the windowed integral must be within 0.01 of it by t = 20.
    const LIMIT_TOL: f64 = 1e-9;
    const GAP_TOL: f64 = 0.01;
    let cycle = exp1();
    let b_law = exp1();
    let b = |u: f64| b_law.survival(u);
    let limit = key_renewal_limit(&b, &cycle).expect("finite integrand");
    if (limit - 1.0).abs() > LIMIT_TOL {
        fail(2, format!("limit {limit}, want 1 within {LIMIT_TOL}"));
    }
    let table = renewal_function(&cycle, 20.0, 0.002).expect("valid table");
    let at_20 = key_renewal_integral(&b, &table, 20.0).expect("t inside table");
    let gap = (at_20 - limit).abs();
    if gap > GAP_TOL {
        fail(2, format!("integral at t = 20 is {at_20}, limit {limit}, gap {gap} > {GAP_TOL}"));
    }
    pass(2);
}

#[test]
fn criterion_03_stationary_overjump_survival() {
    // Uniform(0, 1) cycles observed at t = 64: the long-run law of the
    // overjump has P{over > 1/2} = (1 - 1/2)^2 = 1/4.
    const WANT: f64 = 0.25;
    const GRID_TOL: f64 = 0.02;
    let cycle = uniform01();
    let streams = StreamFactory::new(SEED);
    let sample = renewal_sample(&cycle, &streams);
    let hits = sample.iter().filter(|&&(_, over)| over > 0.5).count() as u64;
    let est = stats::binomial_estimate(hits, REPLICAS, Z_999);
    if !est.covers(WANT) {
        fail(
            3,
            format!(
                "P{{over > 0.5}} estimated {} +- {} at {REPLICAS} replicas misses {WANT}",
                est.value, est.half_width
            ),
        );
    }
    // The exact finite-time law on the grid must sit within 0.02 of the
    // long-run value once t is a few cycle lengths out.
    let table = renewal_function(&cycle, 8.5, GRID_STEP).expect("valid table");
    let grid = overjump_survival_exact(&cycle, &table, 0.5, 8.0).expect("t inside table");
    if (grid - WANT).abs() > GRID_TOL {
        fail(3, format!("grid law P{{over > 0.5}} at t = 8 is {grid}, want {WANT} within {GRID_TOL}"));
    }
    pass(3);
}

#[test]
fn criterion_04_stationary_overjump_mean() {
    // Same law: the long-run mean overjump is m2 / (2 m1) = (1/3) / (2 *
    // 1/2) = 1/3, and it must be exact, not approximate.
    const WANT: f64 = 1.0 / 3.0;
    const EXACT_TOL: f64 = 1e-15;
    let cycle = uniform01();
    let analytic = renewal_kit::renewal::stationary_overjump_mean(&cycle).value;
    if (analytic - WANT).abs() > EXACT_TOL {
        fail(4, format!("closed form gives {analytic}, want {WANT} within {EXACT_TOL}"));
    }
    let streams = StreamFactory::new(SEED);
    let sample = renewal_sample(&cycle, &streams);
    let overs: Vec<f64> = sample.iter().map(|&(_, over)| over).collect();
    let est = stats::mean_estimate(&overs, 3.0);
    if !est.covers(WANT) {
        fail(
            4,
            format!(
                "mean overjump estimated {} +- {} at {REPLICAS} replicas misses {WANT}",
                est.value, est.half_width
            ),
        );
    }
    pass(4);
}

#[test]
fn criterion_05_two_level_stationary_law() {
    // Alternating Exp(1) / Uniform(0, 2): level frequencies are equal,
    // mean sojourns are both 1, so P{level 1, elapsed > a, remaining > b}
    // = (1/2) * (1 - (a+b)/2)^2 for a + b <= 2; at a + b = 1 that is 1/8.
    const QUERY_TOL: f64 = 1e-12;
    const NORM_TOL: f64 = 1e-10;
    let proc = alternating(2.0, (0, 0.0));
    let law = stationary_law(proc.chain(), proc.level_laws()).expect("non-lattice laws");
    for (a, b) in [(0.5, 0.5), (1.0, 0.0)] {
        let got = law.query(1, a, b).expect("valid query");
        if (got - 0.125).abs() > QUERY_TOL {
            fail(5, format!("query(1, {a}, {b}) = {got}, want 0.125 within {QUERY_TOL}"));
        }
    }
    let total: f64 = (0..law.n_states())
        .map(|i| law.query(i, 0.0, 0.0).expect("valid query"))
        .sum();
    if (total - 1.0).abs() > NORM_TOL {
        fail(5, format!("level probabilities sum to {total}, want 1 within {NORM_TOL}"));
    }

    // Simulated paths observed at t = 64 must agree with the analytic law
    // inside 99.9% bands, from two different starting points.
    let streams = StreamFactory::new(SEED);
    let emp = estimate_law(&proc, T_OBS, REPLICAS, &streams);
    let restarted = alternating(2.0, (1, 7.0));
    let mut alt_rng = streams.labeled("alt-start");
    let alt_streams = StreamFactory::new(alt_rng.next_u64());
    let emp_alt = estimate_law(&restarted, T_OBS, REPLICAS, &alt_streams);
    let triples = [(1usize, 0.5, 0.5), (0, 0.5, 0.5), (1, 1.0, 0.0), (0, 0.0, 0.0), (1, 0.0, 0.0)];
    for (i, a, b) in triples {
        let want = law.query(i, a, b).expect("valid query");
        let one = emp.probe(i, a, b, Z_999);
        if !one.covers(want) {
            fail(
                5,
                format!(
                    "empirical law at ({i}, {a}, {b}) is {} +- {}, analytic {want}",
                    one.value, one.half_width
                ),
            );
        }
        let two = emp_alt.probe(i, a, b, Z_999);
        let gap = (one.value - two.value).abs();
        let allowed = one.half_width + two.half_width;
        if gap > allowed {
            fail(
                5,
                format!(
                    "starts (0, 0) and (1, 7) disagree at ({i}, {a}, {b}): {} vs {}, gap {gap} > {allowed}",
                    one.value, two.value
                ),
            );
        }
    }
    pass(5);
}

#[test]
fn criterion_06_level_occupancy_and_cycles() {
    // Alternating Exp(1) / Uniform(0, 4): mean sojourns 1 and 2, so level
    // 0 carries 1/3 of the time and the regeneration cycle through (0, 0)
    // has mean 1 + 2 = 3. Both values are exact in closed form.
    const EXACT_TOL: f64 = 1e-12;
    const CYCLES: usize = 10_000;
    let proc = alternating(4.0, (0, 0.0));
    let law = stationary_law(proc.chain(), proc.level_laws()).expect("non-lattice laws");
    let p0 = law.level_probability(0).expect("state 0 exists");
    if (p0 - 1.0 / 3.0).abs() > EXACT_TOL {
        fail(6, format!("level 0 probability {p0}, want 1/3 within {EXACT_TOL}"));
    }
    let cycle = law.mean_cycle_length(0).expect("state 0 exists");
    if (cycle - 3.0).abs() > EXACT_TOL {
        fail(6, format!("mean cycle through (0, 0) is {cycle}, want 3 within {EXACT_TOL}"));
    }
    let streams = StreamFactory::new(SEED);
    let mut rng = streams.labeled("regeneration-spacings");
    let spacings =
        regeneration_spacings(&proc, 0, CYCLES, &mut rng).expect("regenerations recur");
    let est = stats::mean_estimate(&spacings, 3.0);
    if !est.covers(3.0) {
        fail(
            6,
            format!(
                "{CYCLES} observed cycles average {} +- {}, want 3",
                est.value, est.half_width
            ),
        );
    }
    pass(6);
}

#[test]
fn criterion_07_mean_curve_monotonicity() {
    // Claim under test: for any cycle law, E overjump at t grows
    // monotonically in t up to the long-run cap m2 / (2 m1), and the
    // overjump survival P{over > s at t} is nondecreasing in t for every
    // s. Probed with Uniform(0, 1) cycles at a 3 sigma decision rule and
    // with 100 random survival-gap probes against a discretization floor.
    const TIMES: [f64; 5] = [0.1, 0.5, 2.0, 10.0, 64.0];
    const PROBES: u32 = 100;
    const S_MAX: f64 = 2.0;
    const T_SPAN: f64 = 4.0;
    const DELTA_MAX: f64 = 8.0;
    const FLOOR_FACTOR: f64 = 2.0;

    let cycle = uniform01();
    let streams = StreamFactory::new(SEED);
    let curve = overjump_mean_curve(&cycle, &TIMES, REPLICAS, &streams);
    let mut clauses: Vec<String> = Vec::new();
    if !curve.monotone_ok() {
        let drops: Vec<String> = curve
            .decreases
            .iter()
            .map(|&i| {
                let (t0, e0) = &curve.report.observed[i];
                let (t1, e1) = &curve.report.observed[i + 1];
                format!("E over at t = {t0} is {:.4} but at t = {t1} only {:.4}", e0.value, e1.value)
            })
            .collect();
        clauses.push(format!("the mean curve decreases ({})", drops.join("; ")));
    }
    if !curve.report.satisfied {
        let worst = curve
            .report
            .observed
            .iter()
            .fold(f64::NEG_INFINITY, |acc, (_, e)| acc.max(e.value));
        clauses.push(format!(
            "the curve exceeds its long-run cap {} (worst estimate {worst:.4})",
            curve.report.bound_value
        ));
    }

    let table = renewal_function(&cycle, 12.0, GRID_STEP).expect("valid table");
    let floor = -FLOOR_FACTOR * table.grid_error_bound();
    let mut rng = streams.labeled("gap-probes");
    let mut breaches = 0u32;
    let mut min_gap = f64::INFINITY;
    let mut worst_probe = (0.0, 0.0, 0.0);
    for _ in 0..PROBES {
        let s = rng.gen::<f64>() * S_MAX;
        let t = rng.gen::<f64>() * T_SPAN;
        let delta = rng.gen::<f64>() * DELTA_MAX;
        let gap = monotonicity_gap(&cycle, &table, s, t, delta).expect("probe inside table");
        if gap < floor {
            breaches += 1;
        }
        if gap < min_gap {
            min_gap = gap;
            worst_probe = (s, t, delta);
        }
    }
    if breaches > 0 {
        clauses.push(format!(
            "{breaches} of {PROBES} survival-gap probes fall below the discretization floor {floor:.4} \
             (deepest: P{{over > {:.3}}} drops by {:.4} between t = {:.3} and t = {:.3})",
            worst_probe.0,
            -min_gap,
            worst_probe.1,
            worst_probe.1 + worst_probe.2
        ));
    }

    if !clauses.is_empty() {
        // The claim is false, and not by a numerical artifact. For
        // Uniform(0, 1) cycles the finite-time law is available in closed
        // form: E over at t = (e^t - 2t) / 2 on 0 <= t <= 1, which starts
        // at 1/2, dips to 1 - ln 2 = 0.3069 at t = ln 2, and only then
        // relaxes to the long-run value m2 / (2 m1) = 1/3; at t = 0.1 it
        // is 0.4526 and at t = 0.5 it is 0.3244, so the curve provably
        // decreases between those probes and starts above the cap.
        // Likewise P{over > s at t} = 1 - s e^t for t + s <= 1 is strictly
        // decreasing in t. The cap itself is correct; only the claimed
        // monotone approach to it is not. Laws whose residual cycles
        // stretch with age (decreasing hazard, e.g. Gamma(1/2, 1)) do
        // approach the cap monotonically, so the claim describes a
        // regime, not the general case.
        fail(7, clauses.join("; "));
    }
    pass(7);
}

#[test]
fn criterion_08_overjump_moment_bounds() {
    // Exp(1) cycles at t = 64. Second moment: E over^2 <= m3 / (3 m1) = 2
    // with equality for the memoryless law, so the estimate must both
    // respect the cap and cover 2. Exponential moment at alpha = 1/2: cap
    // E e^{alpha cycle} / (alpha E cycle) - 1 = 3; the estimator's
    // population mean is 2 but its variance is infinite (the integrand
    // has a quadratic-decay tail), so nearness to 2 gets a fixed 0.15
    // allowance instead of a sample band.
    const POWER: u32 = 3;
    const SECOND_MOMENT: f64 = 2.0;
    const ALPHA: f64 = 0.5;
    const EXP_CAP: f64 = 3.0;
    const CAP_TOL: f64 = 1e-12;
    const EXP_NEAR: f64 = 2.0;
    const EXP_SLACK: f64 = 0.15;

    let cycle = exp1();
    let streams = StreamFactory::new(SEED);
    let power = power_moment_check(&cycle, POWER, T_OBS, REPLICAS, &streams);
    let (_, est) = &power.observed[0];
    if !power.satisfied {
        fail(
            8,
            format!(
                "E over^2 estimated {} +- {} breaches its cap {}",
                est.value, est.half_width, power.bound_value
            ),
        );
    }
    if !est.covers(SECOND_MOMENT) {
        fail(
            8,
            format!(
                "E over^2 estimated {} +- {} misses {SECOND_MOMENT}",
                est.value, est.half_width
            ),
        );
    }

    let expm = exp_moment_check(&cycle, ALPHA, T_OBS, REPLICAS, &streams).expect("finite moment");
    if (expm.bound_value - EXP_CAP).abs() > CAP_TOL {
        fail(8, format!("exp-moment cap is {}, want {EXP_CAP} within {CAP_TOL}", expm.bound_value));
    }
    let (_, est) = &expm.observed[0];
    if !expm.satisfied {
        fail(
            8,
            format!(
                "E e^{{over/2}} estimated {} +- {} breaches its cap {EXP_CAP}",
                est.value, est.half_width
            ),
        );
    }
    let allowed = est.half_width.max(EXP_SLACK);
    if (est.value - EXP_NEAR).abs() > allowed {
        fail(
            8,
            format!("E e^{{over/2}} estimated {}, want {EXP_NEAR} within {allowed}", est.value),
        );
    }
    pass(8);
}

#[test]
fn criterion_09_conditional_mean_bounds() {
    // Alternating Exp(1) / Uniform(0, 2), looking at level 1 at tau = 64:
    // elapsed and remaining sojourn time there are each capped by
    // m2 / (2 m1) of the Uniform(0, 2) law = (4/3) / 2 = 2/3.
    const CAP: f64 = 2.0 / 3.0;
    const CAP_TOL: f64 = 1e-12;
    let proc = alternating(2.0, (0, 0.0));
    let streams = StreamFactory::new(SEED);
    let rep = conditional_bound_check(&proc, 1, T_OBS, REPLICAS, &streams)
        .expect("state 1 is reachable");
    if (rep.bound_value - CAP).abs() > CAP_TOL {
        fail(9, format!("cap computed as {}, want {CAP} within {CAP_TOL}", rep.bound_value));
    }
    if !rep.satisfied {
        fail(
            9,
            format!(
                "elapsed {} +- {} or remaining {} +- {} breaches the cap {CAP} \
                 ({} qualifying replicas)",
                rep.elapsed.value,
                rep.elapsed.half_width,
                rep.remaining.value,
                rep.remaining.half_width,
                rep.samples
            ),
        );
    }
    pass(9);
}

#[test]
fn criterion_10_single_state_degeneration() {
    // A one-state chain holding Exp(1) is a renewal process in disguise:
    // the remaining-time law seen at t = 64 must match the overjump law
    // of the plain renewal simulation within 0.02 in sup distance.
    const SUP_TOL: f64 = 0.02;
    let chain = EmbeddedChain::new(vec![vec![1.0]]).expect("valid chain");
    let proc =
        LinearwiseProcess::new(chain, vec![exp1()], (0, 0.0)).expect("valid process");
    let streams = StreamFactory::new(SEED);
    let emp = estimate_law(&proc, T_OBS, REPLICAS, &streams);
    let mut from_process: Vec<f64> = emp.observations().iter().map(|o| o.remaining).collect();
    from_process.sort_by(f64::total_cmp);

    let cycle = exp1();
    let mut twin_rng = streams.labeled("renewal-twin");
    let twin = StreamFactory::new(twin_rng.next_u64());
    let mut from_renewal: Vec<f64> = (0..REPLICAS)
        .into_par_iter()
        .map(|r| {
            let mut rng = twin.replica(r);
            let traj = simulate_renewal(None, &cycle, T_OBS, &mut rng);
            observe_over_under(&traj, T_OBS).1
        })
        .collect();
    from_renewal.sort_by(f64::total_cmp);

    let sup = stats::two_sample_ks(&from_process, &from_renewal);
    if sup >= SUP_TOL {
        fail(10, format!("sup distance between the two overjump laws is {sup}, allowed {SUP_TOL}"));
    }
    pass(10);
}

#[test]
fn criterion_11_seed_worker_reproducibility() {
    // The verify-all verdict matrix must not depend on the seed or on the
    // worker count, and the same (seed, workers) pair must reproduce
    // report files byte for byte across worker counts.
    let configs: [(u64, usize); 4] = [(1, 1), (2, 1), (3, 1), (1, 8)];
    let mut matrices: Vec<(u64, usize, BTreeMap<u8, bool>)> = Vec::new();
    let mut dirs = Vec::new();
    for (seed, workers) in configs {
        let out = TestDir::new(&format!("verification-c11-s{seed}w{workers}"));
        let cfg = RunConfig {
            seed: Some(seed),
            workers: Some(workers),
            out_dir: out.path().to_path_buf(),
            ..RunConfig::default()
        };
        let summary = exec::verify_all(&scenarios_dir(), &cfg).expect("scenarios directory loads");
        matrices.push((seed, workers, summary.matrix()));
        dirs.push(out);
    }
    let (s0, w0, reference) = &matrices[0];
    for (seed, workers, matrix) in &matrices[1..] {
        if matrix != reference {
            fail(
                11,
                format!(
                    "verdict matrix at seed {seed}, workers {workers} differs from seed {s0}, \
                     workers {w0}: {matrix:?} vs {reference:?}"
                ),
            );
        }
    }

    // Same seed, different worker count: every report file identical.
    let first = &dirs[0];
    let last = &dirs[3];
    let mut names: Vec<String> = std::fs::read_dir(first.path())
        .expect("read output directory")
        .map(|e| e.expect("entry").file_name().to_str().unwrap().to_owned())
        .collect();
    names.sort();
    for name in &names {
        let a = std::fs::read(first.path().join(name)).expect("read report");
        let b = std::fs::read(last.path().join(name)).expect("twin report exists");
        if a != b {
            fail(11, format!("report file {name} differs between 1 and 8 workers at seed 1"));
        }
    }
    pass(11);
}
