//! Laws of positive sojourn durations.
//!
//! A [`Distribution`] is immutable after construction and safe to share
//! across simulation workers. Construction validates parameters and rejects
//! any law with an atom at zero, so downstream simulation code can rely on
//! strictly positive draws. First and second raw moments are cached.
//!
//! | kind          | parameters                     |
//! |---------------|--------------------------------|
//! | exponential   | rate > 0                       |
//! | uniform       | 0 <= lo < hi                   |
//! | gamma         | shape > 0, scale > 0           |
//! | deterministic | value > 0                      |
//! | discrete      | atoms (value > 0, prob)        |
//! | empirical     | positive sample values         |
//! | mixture       | weights + component laws       |
//!
//! Residual laws (`remaining duration given age a`) are exponential-stable,
//! shift uniform and deterministic laws, thin atom sets, and otherwise fall
//! back to an age-conditioned view of the base law. Tail integrals are
//! closed-form for every kind; higher conditioned moments use adaptive
//! quadrature truncated where survival drops below `1e-14` (the truncated
//! remainder is at most `second_moment / cutoff` by Markov's inequality).

use std::fmt;

use rand::Rng;
use rand_distr::Distribution as _;
use crate::quad;

/// Regularized lower incomplete gamma, defined at the x = 0 boundary.
fn gamma_lr(shape: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        statrs::function::gamma::gamma_lr(shape, x)
    }
}

/// Regularized upper incomplete gamma, defined at the x = 0 boundary.
fn gamma_ur(shape: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        statrs::function::gamma::gamma_ur(shape, x)
    }
}

/// Relative tolerance for quadrature fallbacks.
const QUAD_REL_TOL: f64 = 1e-10;
/// Absolute floor under which quadrature refinement stops.
const QUAD_ABS_FLOOR: f64 = 1e-14;
/// Survival level below which tails are truncated.
const TAIL_EPS: f64 = 1e-14;
/// Relative tolerance of the lattice span search.
const LATTICE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum DistError {
    /// A parameter was out of its admissible range.
    InvalidParameter(String),
    /// The law would place positive mass exactly at zero.
    AtomAtZero,
    /// A diagnostic integrand returned a negative or non-finite value.
    NonFinite { at: f64, value: f64 },
}

impl fmt::Display for DistError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DistError::InvalidParameter(what) => write!(f, "invalid parameter: {what}"),
            DistError::AtomAtZero => {
                write!(f, "law places positive mass at zero; sojourns must be positive")
            }
            DistError::NonFinite { at, value } => {
                write!(f, "integrand is not finite and nonnegative at {at}: {value}")
            }
        }
    }
}

impl std::error::Error for DistError {}

#[derive(Debug, Clone)]
enum Kind {
    Exponential { rate: f64 },
    Uniform { lo: f64, hi: f64 },
    Gamma { shape: f64, scale: f64 },
    Deterministic { value: f64 },
    Discrete { atoms: Vec<(f64, f64)>, cumulative: Vec<f64> },
    Empirical { samples: Vec<f64> },
    Mixture { parts: Vec<(f64, Distribution)>, cumulative: Vec<f64> },
    /// Base law conditioned on exceeding `age`, shifted back to the origin.
    Conditioned { base: Box<Distribution>, age: f64, tail_at_age: f64 },
}

/// An immutable law of a positive duration with cached raw moments.
#[derive(Debug, Clone)]
pub struct Distribution {
    kind: Kind,
    mean: f64,
    second_moment: f64,
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            Kind::Exponential { rate } => write!(f, "exponential(rate={rate})"),
            Kind::Uniform { lo, hi } => write!(f, "uniform({lo}, {hi})"),
            Kind::Gamma { shape, scale } => write!(f, "gamma(shape={shape}, scale={scale})"),
            Kind::Deterministic { value } => write!(f, "deterministic({value})"),
            Kind::Discrete { atoms, .. } => write!(f, "discrete({} atoms)", atoms.len()),
            Kind::Empirical { samples } => write!(f, "empirical({} samples)", samples.len()),
            Kind::Mixture { parts, .. } => write!(f, "mixture({} parts)", parts.len()),
            Kind::Conditioned { base, age, .. } => write!(f, "{base} aged by {age}"),
        }
    }
}

fn require(ok: bool, what: &str) -> Result<(), DistError> {
    if ok {
        Ok(())
    } else {
        Err(DistError::InvalidParameter(what.to_string()))
    }
}

impl Distribution {
    pub fn exponential(rate: f64) -> Result<Self, DistError> {
        require(rate.is_finite() && rate > 0.0, "exponential rate must be finite and positive")?;
        Ok(Self::from_kind(Kind::Exponential { rate }))
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self, DistError> {
        require(lo.is_finite() && hi.is_finite(), "uniform endpoints must be finite")?;
        require(lo >= 0.0, "uniform support may not extend below zero")?;
        require(lo < hi, "uniform needs lo < hi")?;
        Ok(Self::from_kind(Kind::Uniform { lo, hi }))
    }

    pub fn gamma(shape: f64, scale: f64) -> Result<Self, DistError> {
        require(
            shape.is_finite() && shape > 0.0 && scale.is_finite() && scale > 0.0,
            "gamma shape and scale must be finite and positive",
        )?;
        Ok(Self::from_kind(Kind::Gamma { shape, scale }))
    }

    pub fn deterministic(value: f64) -> Result<Self, DistError> {
        require(value.is_finite() && value >= 0.0, "deterministic value must be finite and nonnegative")?;
        if value == 0.0 {
            return Err(DistError::AtomAtZero);
        }
        Ok(Self::from_kind(Kind::Deterministic { value }))
    }

    /// Finite set of atoms. Probabilities must be nonnegative and sum to one
    /// within `1e-12`; duplicate values are merged.
    pub fn discrete(points: &[(f64, f64)]) -> Result<Self, DistError> {
        require(!points.is_empty(), "discrete law needs at least one atom")?;
        let mut atoms: Vec<(f64, f64)> = Vec::with_capacity(points.len());
        let mut total = 0.0;
        for &(value, prob) in points {
            require(value.is_finite() && prob.is_finite(), "discrete atoms must be finite")?;
            require(value >= 0.0, "discrete atom values may not be negative")?;
            require(prob >= 0.0, "discrete atom probabilities may not be negative")?;
            total += prob;
            if prob > 0.0 {
                if value == 0.0 {
                    return Err(DistError::AtomAtZero);
                }
                atoms.push((value, prob));
            }
        }
        require((total - 1.0).abs() <= 1e-12, "discrete atom probabilities must sum to one")?;
        require(!atoms.is_empty(), "discrete law needs at least one atom with positive mass")?;
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (value, prob) in atoms {
            match merged.last_mut() {
                Some(last) if last.0 == value => last.1 += prob,
                _ => merged.push((value, prob)),
            }
        }
        for (_, prob) in merged.iter_mut() {
            *prob /= total;
        }
        let cumulative = running_sums(merged.iter().map(|a| a.1));
        Ok(Self::from_kind(Kind::Discrete { atoms: merged, cumulative }))
    }

    /// Equal-weight law of observed durations; samples are sorted internally.
    pub fn empirical(samples: &[f64]) -> Result<Self, DistError> {
        require(!samples.is_empty(), "empirical law needs at least one sample")?;
        for &s in samples {
            require(s.is_finite(), "empirical samples must be finite")?;
            require(s >= 0.0, "empirical samples may not be negative")?;
            if s == 0.0 {
                return Err(DistError::AtomAtZero);
            }
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self::from_kind(Kind::Empirical { samples: sorted }))
    }

    /// Convex combination of component laws. Weights must be nonnegative and
    /// sum to one within `1e-12`; zero-weight parts are dropped.
    pub fn mixture(weights: &[f64], components: &[Distribution]) -> Result<Self, DistError> {
        require(weights.len() == components.len(), "mixture needs one weight per component")?;
        require(!weights.is_empty(), "mixture needs at least one component")?;
        let total: f64 = weights.iter().sum();
        require(
            weights.iter().all(|w| w.is_finite() && *w >= 0.0),
            "mixture weights must be finite and nonnegative",
        )?;
        require((total - 1.0).abs() <= 1e-12, "mixture weights must sum to one")?;
        let parts: Vec<(f64, Distribution)> = weights
            .iter()
            .zip(components)
            .filter(|(w, _)| **w > 0.0)
            .map(|(w, c)| (*w / total, c.clone()))
            .collect();
        require(!parts.is_empty(), "mixture needs at least one positive weight")?;
        let cumulative = running_sums(parts.iter().map(|p| p.0));
        Ok(Self::from_kind(Kind::Mixture { parts, cumulative }))
    }

    /// The law that is identically zero; produced only when conditioning a
    /// law past the end of its support. Never constructible from user input.
    fn degenerate_zero() -> Self {
        Distribution {
            kind: Kind::Deterministic { value: 0.0 },
            mean: 0.0,
            second_moment: 0.0,
        }
    }

    /// True only for the degenerate residual law; callers treat such a
    /// sojourn as instantly over.
    pub fn is_degenerate_zero(&self) -> bool {
        matches!(self.kind, Kind::Deterministic { value } if value == 0.0)
    }

    fn from_kind(kind: Kind) -> Self {
        let mut d = Distribution { kind, mean: 0.0, second_moment: 0.0 };
        d.mean = d.raw_moment(1);
        d.second_moment = d.raw_moment(2);
        d
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn second_moment(&self) -> f64 {
        self.second_moment
    }

    /// P{duration <= s}; right-continuous, zero for negative `s`.
    pub fn cdf(&self, s: f64) -> f64 {
        if s < 0.0 {
            return 0.0;
        }
        match &self.kind {
            Kind::Exponential { rate } => -(-rate * s).exp_m1(),
            Kind::Uniform { lo, hi } => ((s - lo) / (hi - lo)).clamp(0.0, 1.0),
            Kind::Gamma { shape, scale } => {
                if s == 0.0 {
                    0.0
                } else {
                    gamma_lr(*shape, s / scale)
                }
            }
            Kind::Deterministic { value } => {
                if s >= *value {
                    1.0
                } else {
                    0.0
                }
            }
            Kind::Discrete { atoms, cumulative } => {
                let idx = atoms.partition_point(|a| a.0 <= s);
                if idx == 0 {
                    0.0
                } else {
                    cumulative[idx - 1]
                }
            }
            Kind::Empirical { samples } => {
                samples.partition_point(|x| *x <= s) as f64 / samples.len() as f64
            }
            Kind::Mixture { parts, .. } => parts.iter().map(|(w, c)| w * c.cdf(s)).sum(),
            Kind::Conditioned { base, age, tail_at_age } => {
                1.0 - base.survival(age + s) / tail_at_age
            }
        }
    }

    /// P{duration > s}; evaluated directly per kind for accurate tails.
    pub fn survival(&self, s: f64) -> f64 {
        if s < 0.0 {
            return 1.0;
        }
        match &self.kind {
            Kind::Exponential { rate } => (-rate * s).exp(),
            Kind::Uniform { lo, hi } => ((hi - s) / (hi - lo)).clamp(0.0, 1.0),
            Kind::Gamma { shape, scale } => {
                if s == 0.0 {
                    1.0
                } else {
                    gamma_ur(*shape, s / scale)
                }
            }
            Kind::Deterministic { value } => {
                if s < *value {
                    1.0
                } else {
                    0.0
                }
            }
            Kind::Discrete { atoms, cumulative } => {
                let idx = atoms.partition_point(|a| a.0 <= s);
                if idx == 0 {
                    1.0
                } else {
                    (1.0 - cumulative[idx - 1]).max(0.0)
                }
            }
            Kind::Empirical { samples } => {
                (samples.len() - samples.partition_point(|x| *x <= s)) as f64
                    / samples.len() as f64
            }
            Kind::Mixture { parts, .. } => parts.iter().map(|(w, c)| w * c.survival(s)).sum(),
            Kind::Conditioned { base, age, tail_at_age } => {
                (base.survival(age + s) / tail_at_age).clamp(0.0, 1.0)
            }
        }
    }

    /// Integrated tail from `a`: the expectation of `(duration - a)+`.
    ///
    /// Closed form for every kind; finite because every constructible law
    /// has a finite mean.
    pub fn tail_integral(&self, a: f64) -> f64 {
        let a = a.max(0.0);
        match &self.kind {
            Kind::Exponential { rate } => (-rate * a).exp() / rate,
            Kind::Uniform { lo, hi } => {
                if a <= *lo {
                    0.5 * (lo + hi) - a
                } else if a < *hi {
                    (hi - a) * (hi - a) / (2.0 * (hi - lo))
                } else {
                    0.0
                }
            }
            Kind::Gamma { shape, scale } => {
                // E (X - a)+ for Gamma via two regularized upper tails.
                let x = a / scale;
                shape * scale * gamma_ur(shape + 1.0, x) - a * gamma_ur(*shape, x)
            }
            Kind::Deterministic { value } => (value - a).max(0.0),
            Kind::Discrete { atoms, .. } => {
                atoms.iter().map(|(v, p)| p * (v - a).max(0.0)).sum()
            }
            Kind::Empirical { samples } => {
                samples.iter().map(|x| (x - a).max(0.0)).sum::<f64>() / samples.len() as f64
            }
            Kind::Mixture { parts, .. } => parts.iter().map(|(w, c)| w * c.tail_integral(a)).sum(),
            Kind::Conditioned { base, age, tail_at_age } => {
                base.tail_integral(age + a) / tail_at_age
            }
        }
    }

    /// Law of the remaining duration given that `age` has already elapsed.
    ///
    /// Memoryless laws are fixed points; uniform and deterministic laws
    /// shift; atom sets are thinned and renormalized. Conditioning past the
    /// end of the support yields the degenerate law at zero, which callers
    /// treat as an instantly finished sojourn.
    pub fn residual(&self, age: f64) -> Distribution {
        assert!(age >= 0.0 && age.is_finite(), "age must be finite and nonnegative");
        if age == 0.0 {
            return self.clone();
        }
        let tail = self.survival(age);
        if tail <= 0.0 {
            return Self::degenerate_zero();
        }
        match &self.kind {
            Kind::Exponential { .. } => self.clone(),
            Kind::Uniform { lo, hi } => {
                let lo2 = (lo - age).max(0.0);
                Self::from_kind(Kind::Uniform { lo: lo2, hi: hi - age })
            }
            Kind::Deterministic { value } => Self::from_kind(Kind::Deterministic { value: value - age }),
            Kind::Discrete { atoms, .. } => {
                let shifted: Vec<(f64, f64)> = atoms
                    .iter()
                    .filter(|(v, _)| *v > age)
                    .map(|(v, p)| (v - age, p / tail))
                    .collect();
                let cumulative = running_sums(shifted.iter().map(|a| a.1));
                Self::from_kind(Kind::Discrete { atoms: shifted, cumulative })
            }
            Kind::Empirical { samples } => {
                let shifted: Vec<f64> =
                    samples.iter().filter(|x| **x > age).map(|x| x - age).collect();
                Self::from_kind(Kind::Empirical { samples: shifted })
            }
            Kind::Mixture { parts, .. } => {
                let survivors: Vec<(f64, Distribution)> = parts
                    .iter()
                    .filter(|(w, c)| w * c.survival(age) > 0.0)
                    .map(|(w, c)| (w * c.survival(age) / tail, c.residual(age)))
                    .collect();
                let cumulative = running_sums(survivors.iter().map(|p| p.0));
                Self::from_kind(Kind::Mixture { parts: survivors, cumulative })
            }
            Kind::Conditioned { base, age: prior, .. } => {
                // Conditioning twice composes additively in age.
                let total = prior + age;
                let tail_at_age = base.survival(total);
                Self::from_kind(Kind::Conditioned {
                    base: base.clone(),
                    age: total,
                    tail_at_age,
                })
            }
            Kind::Gamma { .. } => Self::from_kind(Kind::Conditioned {
                base: Box::new(self.clone()),
                age,
                tail_at_age: tail,
            }),
        }
    }

    /// Raw moment of integer order `k >= 1`. Orders one and two are cached.
    pub fn moment(&self, k: u32) -> f64 {
        match k {
            0 => 1.0,
            1 => self.mean,
            2 => self.second_moment,
            _ => self.raw_moment(k),
        }
    }

    fn raw_moment(&self, k: u32) -> f64 {
        match &self.kind {
            Kind::Exponential { rate } => {
                (1..=k).map(|j| j as f64).product::<f64>() / rate.powi(k as i32)
            }
            Kind::Uniform { lo, hi } => {
                let p = k as i32 + 1;
                (hi.powi(p) - lo.powi(p)) / (p as f64 * (hi - lo))
            }
            Kind::Gamma { shape, scale } => {
                scale.powi(k as i32) * (0..k).map(|j| shape + j as f64).product::<f64>()
            }
            Kind::Deterministic { value } => value.powi(k as i32),
            Kind::Discrete { atoms, .. } => {
                atoms.iter().map(|(v, p)| p * v.powi(k as i32)).sum()
            }
            Kind::Empirical { samples } => {
                samples.iter().map(|x| x.powi(k as i32)).sum::<f64>() / samples.len() as f64
            }
            Kind::Mixture { parts, .. } => {
                parts.iter().map(|(w, c)| w * c.raw_moment(k)).sum()
            }
            Kind::Conditioned { .. } => {
                // k * integral of s^(k-1) * survival(s); truncation remainder
                // is below TAIL_EPS * cutoff^k which is negligible here.
                let cutoff = self.survival_cutoff();
                let kf = k as f64;
                quad::integrate(
                    |s| kf * s.powi(k as i32 - 1) * self.survival(s),
                    0.0,
                    cutoff,
                    QUAD_REL_TOL,
                    QUAD_ABS_FLOOR,
                )
                .value
            }
        }
    }

    /// E exp(alpha * duration); `+inf` when the transform diverges.
    pub fn exp_moment(&self, alpha: f64) -> f64 {
        assert!(alpha > 0.0 && alpha.is_finite(), "alpha must be finite and positive");
        match &self.kind {
            Kind::Exponential { rate } => {
                if alpha < *rate {
                    rate / (rate - alpha)
                } else {
                    f64::INFINITY
                }
            }
            Kind::Uniform { lo, hi } => {
                ((alpha * hi).exp() - (alpha * lo).exp()) / (alpha * (hi - lo))
            }
            Kind::Gamma { shape, scale } => {
                if alpha * scale < 1.0 {
                    (1.0 - alpha * scale).powf(-shape)
                } else {
                    f64::INFINITY
                }
            }
            Kind::Deterministic { value } => (alpha * value).exp(),
            Kind::Discrete { atoms, .. } => {
                atoms.iter().map(|(v, p)| p * (alpha * v).exp()).sum()
            }
            Kind::Empirical { samples } => {
                samples.iter().map(|x| (alpha * x).exp()).sum::<f64>() / samples.len() as f64
            }
            Kind::Mixture { parts, .. } => {
                let mut total = 0.0;
                for (w, c) in parts {
                    let m = c.exp_moment(alpha);
                    if m.is_infinite() {
                        return f64::INFINITY;
                    }
                    total += w * m;
                }
                total
            }
            Kind::Conditioned { base, age, tail_at_age } => {
                if base.exp_moment(alpha).is_infinite() {
                    return f64::INFINITY;
                }
                // 1 + alpha * integral of exp(alpha s) * survival(s), with the
                // cutoff pushed until the integrand itself is negligible.
                let mut cutoff = self.survival_cutoff();
                let weight = |s: f64| {
                    let tail = base.survival(age + s) / tail_at_age;
                    if tail <= 0.0 {
                        0.0
                    } else {
                        (alpha * s).exp() * tail
                    }
                };
                let mut guard = 0;
                while weight(cutoff) > TAIL_EPS && guard < 200 {
                    cutoff *= 2.0;
                    guard += 1;
                }
                1.0 + alpha
                    * quad::integrate(weight, 0.0, cutoff, QUAD_REL_TOL, QUAD_ABS_FLOOR).value
            }
        }
    }

    /// Smallest doubling point where survival falls below `TAIL_EPS`.
    fn survival_cutoff(&self) -> f64 {
        let mut t = (self.mean + 1.0).max(1.0);
        let mut guard = 0;
        while self.survival(t) >= TAIL_EPS && guard < 200 {
            t *= 2.0;
            guard += 1;
        }
        t
    }

    /// One draw from the law.
    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        match &self.kind {
            Kind::Exponential { rate } => {
                rand_distr::Exp::new(*rate).expect("rate validated at construction").sample(rng)
            }
            Kind::Uniform { lo, hi } => rng.gen_range(*lo..*hi),
            Kind::Gamma { shape, scale } => rand_distr::Gamma::new(*shape, *scale)
                .expect("parameters validated at construction")
                .sample(rng),
            Kind::Deterministic { value } => *value,
            Kind::Discrete { atoms, cumulative } => {
                let u: f64 = rng.gen();
                let idx = cumulative.partition_point(|c| *c < u).min(atoms.len() - 1);
                atoms[idx].0
            }
            Kind::Empirical { samples } => samples[rng.gen_range(0..samples.len())],
            Kind::Mixture { parts, cumulative } => {
                let u: f64 = rng.gen();
                let idx = cumulative.partition_point(|c| *c < u).min(parts.len() - 1);
                parts[idx].1.sample(rng)
            }
            Kind::Conditioned { base, age, tail_at_age } => {
                // Inverse transform through the base quantile keeps cost
                // independent of how deep the conditioning age sits.
                let u: f64 = rng.gen();
                let target = (1.0 - tail_at_age) + u * tail_at_age;
                (base.quantile(target) - age).max(0.0)
            }
        }
    }

    /// Generalized inverse CDF: the smallest `s` with `cdf(s) >= u`.
    fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0 - 1e-16);
        match &self.kind {
            Kind::Exponential { rate } => -(-u).ln_1p() / rate,
            Kind::Uniform { lo, hi } => lo + u * (hi - lo),
            Kind::Deterministic { value } => *value,
            Kind::Discrete { atoms, cumulative } => {
                let idx = cumulative.partition_point(|c| *c < u).min(atoms.len() - 1);
                atoms[idx].0
            }
            Kind::Empirical { samples } => {
                let idx = ((u * samples.len() as f64) as usize).min(samples.len() - 1);
                samples[idx]
            }
            _ => {
                // Monotone bisection; 200 halvings reach full precision.
                let mut lo = 0.0;
                let mut hi = (self.mean + 1.0).max(1.0);
                let mut guard = 0;
                while self.cdf(hi) < u && guard < 200 {
                    hi *= 2.0;
                    guard += 1;
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if self.cdf(mid) >= u {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                hi
            }
        }
    }

    /// Where the law's mass lives: atoms plus continuous intervals.
    pub fn support(&self) -> SupportDescriptor {
        let mut s = SupportDescriptor::default();
        self.collect_support(0.0, &mut s);
        s.normalize();
        s
    }

    fn collect_support(&self, shift: f64, out: &mut SupportDescriptor) {
        match &self.kind {
            Kind::Exponential { .. } | Kind::Gamma { .. } => {
                out.intervals.push((shift.max(0.0), f64::INFINITY));
            }
            Kind::Uniform { lo, hi } => out.intervals.push(((lo + shift).max(0.0), hi + shift)),
            Kind::Deterministic { value } => out.atoms.push(value + shift),
            Kind::Discrete { atoms, .. } => {
                out.atoms.extend(atoms.iter().map(|(v, _)| v + shift));
            }
            Kind::Empirical { samples } => out.atoms.extend(samples.iter().map(|v| v + shift)),
            Kind::Mixture { parts, .. } => {
                for (_, c) in parts {
                    c.collect_support(shift, out);
                }
            }
            Kind::Conditioned { base, age, .. } => {
                let mut inner = SupportDescriptor::default();
                base.collect_support(0.0, &mut inner);
                for atom in inner.atoms {
                    if atom > *age {
                        out.atoms.push(atom - age + shift);
                    }
                }
                for (lo, hi) in inner.intervals {
                    if hi > *age {
                        out.intervals.push(((lo - age).max(0.0) + shift, hi - age + shift));
                    }
                }
            }
        }
    }
}

fn running_sums(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    values
        .map(|v| {
            acc += v;
            acc
        })
        .collect()
}

/// Atoms and continuous intervals carrying a law's mass.
#[derive(Debug, Clone, Default)]
pub struct SupportDescriptor {
    /// Distinct, sorted, nonnegative atom locations.
    pub atoms: Vec<f64>,
    /// Disjoint, sorted intervals; `f64::INFINITY` marks an unbounded tail.
    pub intervals: Vec<(f64, f64)>,
}

impl SupportDescriptor {
    fn normalize(&mut self) {
        self.atoms.sort_by(f64::total_cmp);
        self.atoms.dedup();
        self.intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(self.intervals.len());
        for &(lo, hi) in &self.intervals {
            match merged.last_mut() {
                Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
                _ => merged.push((lo, hi)),
            }
        }
        self.intervals = merged;
    }

    /// Union of two supports.
    pub fn merge(&self, other: &SupportDescriptor) -> SupportDescriptor {
        let mut out = SupportDescriptor {
            atoms: self.atoms.iter().chain(&other.atoms).copied().collect(),
            intervals: self.intervals.iter().chain(&other.intervals).copied().collect(),
        };
        out.normalize();
        out
    }
}

/// A grid `{n * span}` containing every atom of a support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeSpan {
    /// Smallest nonnegative grid offset; zero for every detectable lattice.
    pub offset: f64,
    /// The largest grid pitch whose multiples cover all atoms.
    pub span: f64,
}

/// Greatest common divisor of reals by Euclid's algorithm with tolerance.
///
/// Incommensurable inputs drive the remainders toward zero; the caller
/// detects that as a result below its resolution threshold.
fn real_gcd(a: f64, b: f64, tol: f64) -> f64 {
    let (mut a, mut b) = if a >= b { (a, b) } else { (b, a) };
    while b > tol {
        let mut r = a % b;
        if r > b - tol {
            r = 0.0;
        }
        a = b;
        b = r;
    }
    a
}

/// Detects whether all atoms sit on a common grid `{n * span, n = 0, 1, ...}`.
///
/// Any continuous interval, and any pair of atoms with an irrational ratio,
/// makes the support non-lattice and returns `None`. The search resolves
/// candidate spans down to a relative tolerance of `1e-9`; spans below that
/// resolution are treated as evidence of incommensurability.
pub fn lattice_span(support: &SupportDescriptor) -> Option<LatticeSpan> {
    let scale = support
        .atoms
        .iter()
        .copied()
        .fold(1.0f64, f64::max);
    let tol = LATTICE_TOL * scale;
    if support.intervals.iter().any(|(lo, hi)| hi - lo > tol) {
        return None;
    }
    let atoms: Vec<f64> = support
        .atoms
        .iter()
        .copied()
        .chain(support.intervals.iter().map(|(lo, _)| *lo))
        .filter(|a| *a > tol)
        .collect();
    if atoms.is_empty() {
        return None;
    }
    let mut g = atoms[0];
    for &a in &atoms[1..] {
        g = real_gcd(g, a, tol);
        if g <= 10.0 * tol {
            return None;
        }
    }
    if g <= 10.0 * tol {
        return None;
    }
    for &a in &atoms {
        let ratio = a / g;
        if (ratio - ratio.round()).abs() * g > tol {
            return None;
        }
    }
    Some(LatticeSpan { offset: 0.0, span: g })
}

/// True when the union of the laws' supports is not contained in any grid,
/// which is the spread-out condition long-run limit theorems need.
pub fn common_support_nonlattice(laws: &[&Distribution]) -> bool {
    let mut merged = SupportDescriptor::default();
    for law in laws {
        merged = merged.merge(&law.support());
    }
    lattice_span(&merged).is_none()
}

/// Mesh-`delta` gap between upper and lower Darboux sums of `f` on
/// `[0, t_max]`, the textbook diagnostic for direct Riemann integrability.
///
/// Cell extrema are estimated from 32 evenly spaced points including both
/// endpoints. `f` must be nonnegative and finite on the range.
pub fn darboux_gap(
    f: impl Fn(f64) -> f64,
    delta: f64,
    t_max: f64,
) -> Result<f64, DistError> {
    assert!(delta > 0.0 && t_max > 0.0, "delta and t_max must be positive");
    let cells = (t_max / delta).ceil() as usize;
    let mut gap = 0.0;
    for j in 0..cells {
        let lo = j as f64 * delta;
        let mut sup = f64::NEG_INFINITY;
        let mut inf = f64::INFINITY;
        for i in 0..32 {
            let x = lo + delta * i as f64 / 31.0;
            let v = f(x);
            if !v.is_finite() || v < 0.0 {
                return Err(DistError::NonFinite { at: x, value: v });
            }
            sup = sup.max(v);
            inf = inf.min(v);
        }
        gap += sup - inf;
    }
    Ok(delta * gap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad;
    use crate::rng::StreamFactory;
    use crate::stats;

    fn exp1() -> Distribution {
        Distribution::exponential(1.0).unwrap()
    }

    fn unit_uniform() -> Distribution {
        Distribution::uniform(0.0, 1.0).unwrap()
    }

    /// Quadrature of survival split at atom locations, so step
    /// discontinuities never sit inside a panel.
    fn surv_integral_oracle(d: &Distribution, a: f64, hi: f64) -> f64 {
        let mut cuts: Vec<f64> =
            d.support().atoms.iter().copied().filter(|v| *v > a && *v < hi).collect();
        cuts.push(hi);
        let mut lo = a;
        let mut total = 0.0;
        for c in cuts {
            total += quad::integrate(|s| d.survival(s), lo, c, 1e-13, 1e-16).value;
            lo = c;
        }
        total
    }

    #[test]
    fn constructors_reject_bad_parameters() {
        assert!(matches!(
            Distribution::exponential(0.0),
            Err(DistError::InvalidParameter(_))
        ));
        assert!(matches!(
            Distribution::uniform(-1.0, 1.0),
            Err(DistError::InvalidParameter(_))
        ));
        assert!(matches!(Distribution::uniform(2.0, 2.0), Err(DistError::InvalidParameter(_))));
        assert!(matches!(Distribution::gamma(1.0, -1.0), Err(DistError::InvalidParameter(_))));
        assert!(matches!(
            Distribution::discrete(&[(1.0, 0.6), (2.0, 0.5)]),
            Err(DistError::InvalidParameter(_))
        ));
    }

    #[test]
    fn constructors_reject_atoms_at_zero() {
        assert!(matches!(Distribution::deterministic(0.0), Err(DistError::AtomAtZero)));
        assert!(matches!(
            Distribution::discrete(&[(0.0, 0.5), (1.0, 0.5)]),
            Err(DistError::AtomAtZero)
        ));
        assert!(matches!(
            Distribution::empirical(&[0.0, 1.0, 2.0]),
            Err(DistError::AtomAtZero)
        ));
        // A zero-probability atom at zero carries no mass and is fine.
        assert!(Distribution::discrete(&[(0.0, 0.0), (1.0, 1.0)]).is_ok());
    }

    #[test]
    fn survival_of_unit_uniform() {
        // Complementary area, cross-checked by integrating the density.
        let d = unit_uniform();
        assert!((d.survival(0.25) - 0.75).abs() < 1e-15);
        let by_quadrature = quad::integrate(|_| 1.0, 0.25, 1.0, 1e-12, 1e-15).value;
        assert!((d.survival(0.25) - by_quadrature).abs() < 1e-12);
    }

    #[test]
    fn cached_moments_match_moment_calls() {
        for d in [
            exp1(),
            unit_uniform(),
            Distribution::gamma(2.5, 0.8).unwrap(),
            Distribution::discrete(&[(1.0, 0.25), (2.5, 0.75)]).unwrap(),
        ] {
            assert_eq!(d.mean(), d.moment(1));
            assert_eq!(d.second_moment(), d.moment(2));
        }
    }

    #[test]
    fn tail_integral_frozen_values() {
        // Uniform(0,1) at 0.5: area of the survival triangle = 0.125.
        assert!((unit_uniform().tail_integral(0.5) - 0.125).abs() < 1e-15);
        // Deterministic(2) at 1: one unit of tail remains.
        let det2 = Distribution::deterministic(2.0).unwrap();
        assert!((det2.tail_integral(1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tail_integral_matches_quadrature_oracle() {
        let laws = [
            exp1(),
            unit_uniform(),
            Distribution::gamma(2.5, 0.8).unwrap(),
            Distribution::gamma(0.7, 2.0).unwrap(),
            Distribution::mixture(
                &[0.3, 0.7],
                &[unit_uniform(), Distribution::deterministic(2.0).unwrap()],
            )
            .unwrap(),
            Distribution::empirical(&[0.5, 1.0, 1.5, 4.0]).unwrap(),
        ];
        for d in &laws {
            for a in [0.0, 0.3, 1.0, 2.7] {
                let oracle = surv_integral_oracle(d, a, 80.0);
                let got = d.tail_integral(a);
                assert!(
                    (got - oracle).abs() <= 1e-10 * (1.0 + oracle.abs()),
                    "{d}: tail at {a}: closed {got} vs quadrature {oracle}"
                );
            }
        }
    }

    #[test]
    fn exponential_residual_is_memoryless() {
        let d = exp1();
        let r = d.residual(5.0);
        for s in [0.0, 0.1, 1.0, 3.0, 10.0] {
            assert!((r.cdf(s) - d.cdf(s)).abs() < 1e-15);
        }
    }

    #[test]
    fn uniform_residual_halfway() {
        // Remaining life of Uniform(0,1) at age 0.5 has CDF 2s on [0, 1/2].
        let r = unit_uniform().residual(0.5);
        for s in [0.0, 0.1, 0.25, 0.4, 0.5] {
            assert!((r.cdf(s) - (2.0 * s).min(1.0)).abs() < 1e-12, "at {s}");
        }
    }

    #[test]
    fn residual_at_zero_age_is_identity() {
        let laws = [exp1(), unit_uniform(), Distribution::gamma(2.0, 1.0).unwrap()];
        for d in &laws {
            let r = d.residual(0.0);
            for s in [0.0, 0.2, 0.9, 2.5] {
                assert!((r.cdf(s) - d.cdf(s)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn residual_past_support_is_degenerate() {
        let r = unit_uniform().residual(1.0);
        assert!(r.is_degenerate_zero());
        assert_eq!(r.cdf(0.0), 1.0);
    }

    #[test]
    fn residual_composes_additively() {
        let laws = [
            Distribution::gamma(2.5, 0.8).unwrap(),
            unit_uniform(),
            Distribution::mixture(&[0.5, 0.5], &[exp1(), unit_uniform()]).unwrap(),
        ];
        for d in &laws {
            let twice = d.residual(0.2).residual(0.3);
            let once = d.residual(0.5);
            for s in [0.0, 0.1, 0.3, 0.45, 1.0, 2.0] {
                assert!(
                    (twice.cdf(s) - once.cdf(s)).abs() < 1e-10,
                    "{d} at {s}: {} vs {}",
                    twice.cdf(s),
                    once.cdf(s)
                );
            }
        }
    }

    #[test]
    fn moment_frozen_values() {
        // Exponential(1) second moment: quadrature of 2 s exp(-s) gives 2.
        let oracle = quad::integrate(|s| 2.0 * s * (-s).exp(), 0.0, 80.0, 1e-12, 1e-15).value;
        assert!((oracle - 2.0).abs() < 1e-10);
        assert!((exp1().moment(2) - 2.0).abs() < 1e-12);
        assert!((unit_uniform().moment(2) - 1.0 / 3.0).abs() < 1e-15);
        let det = Distribution::deterministic(1.7).unwrap();
        for k in 1..=4 {
            assert!((det.moment(k) - 1.7f64.powi(k as i32)).abs() < 1e-12);
        }
    }

    #[test]
    fn conditioned_moments_match_quadrature() {
        let d = Distribution::gamma(2.5, 0.8).unwrap().residual(1.3);
        for k in 1..=3u32 {
            let oracle = quad::integrate(
                |s| k as f64 * s.powi(k as i32 - 1) * d.survival(s),
                0.0,
                120.0,
                1e-12,
                1e-15,
            )
            .value;
            assert!(
                (d.moment(k) - oracle).abs() <= 1e-8 * (1.0 + oracle),
                "k={k}: {} vs {oracle}",
                d.moment(k)
            );
        }
    }

    #[test]
    fn exp_moment_frozen_values() {
        assert!((exp1().exp_moment(0.5) - 2.0).abs() < 1e-12);
        let det1 = Distribution::deterministic(1.0).unwrap();
        assert!((det1.exp_moment(1.0) - std::f64::consts::E).abs() < 1e-12);
        assert!(exp1().exp_moment(1.0).is_infinite());
        assert!(exp1().exp_moment(1.5).is_infinite());
    }

    #[test]
    fn exp_moment_matches_quadrature_oracle() {
        // E exp(aX) = 1 + a * integral of exp(as) survival(s).
        for (d, alpha) in [
            (exp1(), 0.5),
            (unit_uniform(), 2.0),
            (Distribution::gamma(2.0, 0.5).unwrap(), 1.0),
        ] {
            let oracle = 1.0
                + alpha
                    * quad::integrate(
                        |s| {
                            let tail = d.survival(s);
                            if tail <= 0.0 {
                                0.0
                            } else {
                                (alpha * s).exp() * tail
                            }
                        },
                        0.0,
                        200.0,
                        1e-12,
                        1e-15,
                    )
                    .value;
            let got = d.exp_moment(alpha);
            assert!(
                (got - oracle).abs() <= 1e-8 * oracle,
                "{d} at {alpha}: {got} vs {oracle}"
            );
        }
    }

    #[test]
    fn samplers_pass_dkw_and_ks() {
        let factory = StreamFactory::new(20_260_819);
        let n = 1_000_000u64;
        let eps = stats::dkw_epsilon(n, 1e-6);
        let ks_crit = stats::ks_critical(n, 1e-3);
        let laws = [
            exp1(),
            unit_uniform(),
            Distribution::gamma(2.5, 0.8).unwrap(),
            Distribution::discrete(&[(1.0, 0.2), (2.0, 0.3), (3.5, 0.5)]).unwrap(),
            Distribution::mixture(&[0.4, 0.6], &[exp1(), unit_uniform()]).unwrap(),
            Distribution::gamma(2.5, 0.8).unwrap().residual(1.0),
        ];
        for (i, d) in laws.iter().enumerate() {
            let mut rng = factory.labeled(&format!("sampler-{i}"));
            let mut draws: Vec<f64> = (0..n).map(|_| d.sample(&mut rng)).collect();
            draws.sort_by(f64::total_cmp);
            let ks = stats::ks_statistic(&draws, |x| d.cdf(x));
            // Atoms put steps in both CDFs, so the comparison needs the
            // empirical step heights; DKW covers both cases.
            assert!(
                ks <= ks_crit.max(eps) + 1e-9,
                "{d}: KS {ks} vs critical {ks_crit} / DKW {eps}"
            );
        }
    }

    #[test]
    fn exponential_sample_mean_is_calibrated() {
        let factory = StreamFactory::new(7);
        let mut rng = factory.labeled("exp-mean");
        let n = 1_000_000;
        let d = exp1();
        let mean: f64 = (0..n).map(|_| d.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.005, "sample mean {mean}");
    }

    #[test]
    fn lattice_span_of_integer_atoms() {
        let d = Distribution::discrete(&[(1.0, 0.25), (2.0, 0.5), (3.0, 0.25)]).unwrap();
        let span = lattice_span(&d.support()).expect("integer atoms form a grid");
        assert_eq!(span.offset, 0.0);
        assert!((span.span - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lattice_span_rejects_irrational_ratio() {
        let d =
            Distribution::discrete(&[(1.0, 0.5), (std::f64::consts::SQRT_2, 0.5)]).unwrap();
        assert!(lattice_span(&d.support()).is_none());
    }

    #[test]
    fn lattice_span_rejects_continuous_support() {
        assert!(lattice_span(&unit_uniform().support()).is_none());
        assert!(lattice_span(&exp1().support()).is_none());
    }

    #[test]
    fn lattice_span_of_shifted_half_integers() {
        let d = Distribution::discrete(&[(0.5, 0.4), (1.5, 0.3), (2.5, 0.3)]).unwrap();
        let span = lattice_span(&d.support()).expect("half-integers share the 0.5 grid");
        assert!((span.span - 0.5).abs() < 1e-12);
    }

    #[test]
    fn common_support_examples() {
        let det1 = Distribution::deterministic(1.0).unwrap();
        let det2 = Distribution::deterministic(2.0).unwrap();
        let det_sqrt2 = Distribution::deterministic(std::f64::consts::SQRT_2).unwrap();
        assert!(!common_support_nonlattice(&[&det1, &det2]));
        assert!(common_support_nonlattice(&[&det1, &det_sqrt2]));
        assert!(common_support_nonlattice(&[&exp1()]));
    }

    #[test]
    fn darboux_gap_of_zero_function() {
        assert_eq!(darboux_gap(|_| 0.0, 0.1, 5.0).unwrap(), 0.0);
    }

    #[test]
    fn darboux_gap_of_exponential_survival() {
        let d = exp1();
        let gap = darboux_gap(|s| d.survival(s), 0.01, 40.0).unwrap();
        // Lipschitz-1 integrand: per-cell variation telescopes to at most 1.
        assert!(gap <= 0.02, "gap {gap}");
        assert!(gap > 0.0);
    }

    #[test]
    fn darboux_gap_of_unit_indicator() {
        let gap = darboux_gap(|s| if s <= 1.0 { 1.0 } else { 0.0 }, 0.1, 2.0).unwrap();
        assert!((gap - 0.1).abs() < 1e-12, "gap {gap}");
    }

    #[test]
    fn darboux_gap_rejects_non_finite() {
        let err = darboux_gap(|s| if s > 1.0 { f64::NAN } else { 1.0 }, 0.5, 3.0);
        assert!(matches!(err, Err(DistError::NonFinite { .. })));
        let err = darboux_gap(|s| 1.0 - s, 0.5, 3.0);
        assert!(matches!(err, Err(DistError::NonFinite { .. })));
    }

    #[test]
    fn gamma_tail_integral_closed_form() {
        // The two-tail identity is the risky closed form; pin it hard.
        let d = Distribution::gamma(3.2, 0.7).unwrap();
        for a in [0.0, 0.5, 2.0, 6.0] {
            let oracle = quad::integrate(|s| d.survival(s), a, 150.0, 1e-13, 1e-16).value;
            assert!(
                (d.tail_integral(a) - oracle).abs() < 1e-10,
                "at {a}: {} vs {oracle}",
                d.tail_integral(a)
            );
        }
    }

    #[test]
    fn mixture_weights_must_be_valid() {
        let comps = [exp1(), unit_uniform()];
        assert!(matches!(
            Distribution::mixture(&[0.5, 0.6], &comps),
            Err(DistError::InvalidParameter(_))
        ));
        assert!(matches!(
            Distribution::mixture(&[0.5], &comps),
            Err(DistError::InvalidParameter(_))
        ));
    }
}
