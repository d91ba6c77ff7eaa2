//! Poisson spectra with multiplicities, spectral sums and randomized moments.
//!
//! Positive eigenvalues form a Poisson process on `[0, ∞)` with intensity
//! `dt/(16π m(t))`, each carrying multiplicity `m(λ_k)`. With
//! `S^q_τ = Σ_k m_k/(λ_k − τ)^{2q}`, the randomized even moments are
//! partition sums in the `S^q` weighted by the constants `A_q`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::ToPrimitive;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combinatorics::{enumerate_partitions, factorial, CoefficientTable};
use crate::error::{Error, Result};
use crate::stats::{pairwise_sum, rng_stream};

/// Density of the eigenvalue process for `m ≡ 1`.
pub const BASE_RATE: f64 = 1.0 / (16.0 * PI);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MultiplicityFunction {
    /// `m(t) = c`.
    #[serde(rename = "const")]
    Constant { c: f64 },
    /// `m(t) = 1 + C ln(1 + t)^a`.
    LogPow { c: f64, a: f64 },
    /// `m(t) = 1 + C t^a` with `0 ≤ a < 1`.
    Pow { c: f64, a: f64 },
}

impl MultiplicityFunction {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Validation(format!("{self}: {msg}")));
        match *self {
            MultiplicityFunction::Constant { c } => {
                if !(c.is_finite() && c >= 1.0) {
                    return bad("constant must be at least 1");
                }
            }
            MultiplicityFunction::LogPow { c, a } => {
                if !(c.is_finite() && c >= 0.0 && a.is_finite() && a >= 0.0) {
                    return bad("need C ≥ 0 and a ≥ 0");
                }
            }
            MultiplicityFunction::Pow { c, a } => {
                if !(c.is_finite() && c >= 0.0) {
                    return bad("need C ≥ 0");
                }
                if !(a.is_finite() && (0.0..1.0).contains(&a)) {
                    return bad("exponent must lie in [0, 1)");
                }
            }
        }
        Ok(())
    }

    pub fn value(&self, t: f64) -> f64 {
        match *self {
            MultiplicityFunction::Constant { c } => c,
            MultiplicityFunction::LogPow { c, a } => 1.0 + c * t.ln_1p().powf(a),
            MultiplicityFunction::Pow { c, a } => 1.0 + c * t.powf(a),
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            MultiplicityFunction::Constant { .. } => 0.0,
            MultiplicityFunction::LogPow { c, a } => {
                if a == 0.0 {
                    0.0
                } else {
                    c * a * t.ln_1p().powf(a - 1.0) / (1.0 + t)
                }
            }
            MultiplicityFunction::Pow { c, a } => {
                if a == 0.0 {
                    0.0
                } else {
                    c * a * t.powf(a - 1.0)
                }
            }
        }
    }

    /// `∫_0^λ m(t) dt`.
    pub fn antiderivative(&self, lambda: f64) -> f64 {
        match *self {
            MultiplicityFunction::Constant { c } => c * lambda,
            MultiplicityFunction::Pow { c, a } => lambda + c * lambda.powf(a + 1.0) / (a + 1.0),
            MultiplicityFunction::LogPow { c, a } => lambda + c * log_power_integral(lambda.ln_1p(), a),
        }
    }

    /// An exponent `β > 0` with `m'(t) t^β` bounded.
    pub fn decay_exponent(&self) -> f64 {
        match *self {
            MultiplicityFunction::Constant { .. } => 1.0,
            MultiplicityFunction::LogPow { .. } => 0.5,
            MultiplicityFunction::Pow { a, .. } => 1.0 - a,
        }
    }

    /// Checks on a log grid over `[1, 1e15]` that `|m'(t)| t^β` stays bounded,
    /// in the sense that its tail never exceeds its running maximum.
    pub fn check_derivative_decay(&self) -> Result<f64> {
        let beta = self.decay_exponent();
        let g: Vec<f64> = (0..=150)
            .map(|i| {
                let t = 10f64.powf(i as f64 / 10.0);
                self.derivative(t).abs() * t.powf(beta)
            })
            .collect();
        let head_max = g[..100].iter().cloned().fold(0.0, f64::max);
        let tail_max = g[100..].iter().cloned().fold(0.0, f64::max);
        if tail_max > head_max * (1.0 + 1e-9) {
            return Err(Error::Validation(format!(
                "{self}: m'(t)·t^{beta} keeps growing on [1e10, 1e15]"
            )));
        }
        Ok(beta)
    }
}

/// `∫_0^L u^a e^u du = Σ_n L^{n+a+1}/(n!(n+a+1))`.
fn log_power_integral(l: f64, a: f64) -> f64 {
    if l <= 0.0 {
        return 0.0;
    }
    let lead = l.powf(a + 1.0);
    let mut pow_over_fact = 1.0;
    let mut sum = 0.0;
    for n in 0..10_000 {
        if n > 0 {
            pow_over_fact *= l / n as f64;
        }
        let term = lead * pow_over_fact / (n as f64 + a + 1.0);
        sum += term;
        if n as f64 > l && term <= 1e-17 * sum {
            break;
        }
    }
    sum
}

impl fmt::Display for MultiplicityFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MultiplicityFunction::Constant { c } => write!(f, "const:{c}"),
            MultiplicityFunction::LogPow { c, a } => write!(f, "logpow:{c},{a}"),
            MultiplicityFunction::Pow { c, a } => write!(f, "pow:{c},{a}"),
        }
    }
}

impl FromStr for MultiplicityFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Validation(format!("bad multiplicity spectrum {s:?}; expected const:c, logpow:C,a or pow:C,a"));
        let (kind, args) = s.split_once(':').ok_or_else(bad)?;
        let nums: Vec<f64> = args
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad())?;
        let m = match (kind, nums.as_slice()) {
            ("const", [c]) => MultiplicityFunction::Constant { c: *c },
            ("logpow", [c, a]) => MultiplicityFunction::LogPow { c: *c, a: *a },
            ("pow", [c, a]) => MultiplicityFunction::Pow { c: *c, a: *a },
            _ => return Err(bad()),
        };
        m.validate()?;
        Ok(m)
    }
}

/// A realization of the eigenvalue process on a window `[lo, hi]`.
#[derive(Clone, Debug)]
pub struct PoissonSpectrum {
    pub multiplicity: MultiplicityFunction,
    pub window: (f64, f64),
    /// Increasing eigenvalues.
    pub points: Vec<f64>,
    /// `m(λ_k)` for each point.
    pub multiplicities: Vec<f64>,
}

/// Samples the process on `window` by thinning.
///
/// The window is cut into short segments; on each one a homogeneous process
/// at the segment's peak intensity is generated from exponential gaps and a
/// point at `t` is kept with probability `m(s)/m(t)`, `s` being the segment
/// start. All supported families are non-decreasing, so `m(s)` is the
/// segment minimum and the result is the exact process.
pub fn sample_spectrum<R: Rng + ?Sized>(
    m: &MultiplicityFunction,
    window: (f64, f64),
    rng: &mut R,
) -> Result<PoissonSpectrum> {
    m.validate()?;
    let (lo, hi) = window;
    if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::Validation(format!("bad window [{lo}, {hi}]")));
    }
    let mut points = Vec::new();
    let mut mults = Vec::new();
    let mut s = lo;
    while s < hi {
        let e = match m {
            MultiplicityFunction::Constant { .. } => hi,
            _ => (s * 1.05).max(s + 1.0).min(hi),
        };
        let ms = m.value(s);
        let rate = BASE_RATE / ms;
        let mut t = s;
        loop {
            let gap: f64 = Exp1.sample(rng);
            t += gap / rate;
            if t >= e {
                break;
            }
            let mt = m.value(t);
            if mt <= ms || rng.gen::<f64>() * mt < ms {
                points.push(t);
                mults.push(mt);
            }
        }
        s = e;
    }
    Ok(PoissonSpectrum {
        multiplicity: *m,
        window,
        points,
        multiplicities: mults,
    })
}

/// `[max(0, τ − W), τ + W]` with `W = frac·τ`.
pub fn default_window(tau: f64, frac: f64) -> Result<(f64, f64)> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Validation("tau must be positive".into()));
    }
    if !(frac > 0.0 && frac.is_finite()) {
        return Err(Error::Validation("window fraction must be positive".into()));
    }
    let w = frac * tau;
    Ok(((tau - w).max(0.0), tau + w))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectralSums {
    pub tau: f64,
    /// `m(τ)`.
    pub m_tau: f64,
    /// `S^q` for `q = 1..=p_max`.
    pub values: Vec<f64>,
    /// Bound on the expected contribution of eigenvalues outside the window
    /// to each `S^q`.
    pub tail_bias: Vec<f64>,
}

impl SpectralSums {
    /// Builds sums from given values, with no truncation bias.
    pub fn from_values(values: Vec<f64>) -> Self {
        let n = values.len();
        SpectralSums {
            tau: f64::NAN,
            m_tau: 1.0,
            values,
            tail_bias: vec![0.0; n],
        }
    }

    pub fn p_max(&self) -> usize {
        self.values.len()
    }

    /// `S^q`, 1-based.
    pub fn s(&self, q: usize) -> f64 {
        self.values[q - 1]
    }

    /// The quotient vector `(S^q/(S¹)^q)_{q=2..p}`.
    pub fn quotients(&self) -> Vec<f64> {
        let s1 = self.s(1);
        (2..=self.p_max()).map(|q| self.s(q) / s1.powi(q as i32)).collect()
    }

    /// `S^q ≤ S^{q−1} S¹` up to a relative slack of `1e-12`.
    pub fn support_holds(&self) -> bool {
        self.values.iter().all(|&v| v > 0.0)
            && (2..=self.p_max()).all(|q| {
                let rhs = self.s(q - 1) * self.s(1);
                self.s(q) <= rhs * (1.0 + 1e-12)
            })
    }

    /// `0 ≤ y_p ≤ … ≤ y_2 ≤ 1` for the quotients, with the same slack.
    pub fn quotient_in_k(&self) -> bool {
        let y = self.quotients();
        let slack = 1.0 + 1e-12;
        y.iter().all(|&v| v >= 0.0)
            && y.first().is_none_or(|&v| v <= slack)
            && y.windows(2).all(|w| w[1] <= w[0] * slack)
    }
}

/// `S^q_τ` for `q = 1..=p_max` from a sampled spectrum.
pub fn spectral_sums(spectrum: &PoissonSpectrum, tau: f64, p_max: usize) -> Result<SpectralSums> {
    let (lo, hi) = spectrum.window;
    if !(tau > lo || lo == 0.0) || tau >= hi || p_max == 0 {
        return Err(Error::Validation(format!(
            "tau = {tau} must lie inside the window [{lo}, {hi}]"
        )));
    }
    if spectrum
        .points
        .iter()
        .any(|&l| (l - tau).abs() <= crate::torus::TAU_COLLISION_GUARD)
    {
        return Err(Error::Numerical("an eigenvalue coincides with tau".into()));
    }
    let d2: Vec<f64> = spectrum.points.iter().map(|&l| (l - tau).powi(2)).collect();
    let mut values = Vec::with_capacity(p_max);
    let mut terms: Vec<f64> = spectrum.multiplicities.clone();
    for _ in 0..p_max {
        for (t, d) in terms.iter_mut().zip(&d2) {
            *t /= d;
        }
        values.push(pairwise_sum(&terms));
    }
    let w_right = hi - tau;
    let tail_bias = (1..=p_max)
        .map(|q| {
            let e = 1.0 - 2.0 * q as f64;
            let k = BASE_RATE / (2.0 * q as f64 - 1.0);
            let right = k * w_right.powf(e);
            let left = if lo > 0.0 {
                k * ((tau - lo).powf(e) - tau.powf(e))
            } else {
                0.0
            };
            right + left
        })
        .collect();
    Ok(SpectralSums {
        tau,
        m_tau: spectrum.multiplicity.value(tau),
        values,
        tail_bias,
    })
}

/// `M^{2p} = (2p)! Σ_{α∈𝒫(p)} (−1)^{p−‖α‖} 2^{‖α‖}/α! Π (A_q S^q)^{α_q}`.
pub fn randomized_even_moment(sums: &SpectralSums, table: &CoefficientTable, p: usize) -> Result<f64> {
    check_order(sums, table, p)?;
    let mut total = 0.0;
    for alpha in enumerate_partitions(p) {
        let len = alpha.length();
        let sign = if (p - len).is_multiple_of(2) { 1.0 } else { -1.0 };
        let mut term = sign * 2f64.powi(len as i32) / big_to_f64(&alpha.factorial());
        for (i, &a) in alpha.multiplicities().iter().enumerate() {
            if a > 0 {
                term *= (table.a_f64(i + 1) * sums.s(i + 1)).powi(a as i32);
            }
        }
        total += term;
    }
    Ok(big_to_f64(&factorial(2 * p)) * total)
}

/// The same moment as `(2p)!/p! · P_p(2A_1 S¹, …, 2A_p S^p)`.
pub fn randomized_even_moment_poly(
    sums: &SpectralSums,
    table: &CoefficientTable,
    p: usize,
) -> Result<f64> {
    check_order(sums, table, p)?;
    let args: Vec<f64> = (1..=p).map(|q| 2.0 * table.a_f64(q) * sums.s(q)).collect();
    Ok(big_to_f64(&(factorial(2 * p) / factorial(p))) * table.p_poly(p).eval(&args))
}

/// `M^{2p}/(M²)^p = μ_{2p} P_p(1, 2A_2S²/(2S¹)², …, 2A_pS^p/(2S¹)^p)` for
/// `p = 2..=p_max`.
pub fn normalized_moments(sums: &SpectralSums, table: &CoefficientTable, p_max: usize) -> Result<Vec<f64>> {
    check_order(sums, table, p_max)?;
    let two_s1 = 2.0 * sums.s(1);
    let args: Vec<f64> = (1..=p_max)
        .map(|q| {
            if q == 1 {
                1.0
            } else {
                2.0 * table.a_f64(q) * sums.s(q) / two_s1.powi(q as i32)
            }
        })
        .collect();
    Ok((2..=p_max)
        .map(|p| big_to_f64(&gaussian_moment(p)) * table.p_poly(p).eval(&args[..p]))
        .collect())
}

/// `μ_{2p} = (2p)!/(2^p p!)`.
pub fn gaussian_moment(p: usize) -> BigInt {
    factorial(2 * p) / (BigInt::from(2).pow(p as u32) * factorial(p))
}

fn check_order(sums: &SpectralSums, table: &CoefficientTable, p: usize) -> Result<()> {
    if p == 0 || p > sums.p_max() || p > table.p_max() {
        return Err(Error::Validation(format!(
            "order {p} needs S^1..S^{p} and a table of that size"
        )));
    }
    Ok(())
}

fn big_to_f64(b: &BigInt) -> f64 {
    b.to_f64().unwrap_or(f64::NAN)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub multiplicity: MultiplicityFunction,
    pub tau: f64,
    pub p_max: usize,
    pub replicas: usize,
    pub window_frac: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimulationRow {
    pub replica: usize,
    pub sums: SpectralSums,
    /// `M^2, M^4, …, M^{2p}`.
    pub moments: Vec<f64>,
    /// `M^4/(M²)², …`.
    pub normalized: Vec<f64>,
}

/// One spectrum per replica, each from its own stream `(seed, replica)`.
pub fn run_simulation(cfg: &SimulationConfig, table: &CoefficientTable) -> Result<Vec<SimulationRow>> {
    let window = default_window(cfg.tau, cfg.window_frac)?;
    cfg.multiplicity.validate()?;
    (0..cfg.replicas)
        .into_par_iter()
        .map(|replica| {
            let mut rng = rng_stream(cfg.seed, replica as u64);
            let spectrum = sample_spectrum(&cfg.multiplicity, window, &mut rng)?;
            let sums = spectral_sums(&spectrum, cfg.tau, cfg.p_max)?;
            let moments = (1..=cfg.p_max)
                .map(|p| randomized_even_moment(&sums, table, p))
                .collect::<Result<Vec<_>>>()?;
            let normalized = normalized_moments(&sums, table, cfg.p_max)?;
            Ok(SimulationRow {
                replica,
                sums,
                moments,
                normalized,
            })
        })
        .collect()
}
