//! Limiting laws of the spectral sums as `τ → ∞`.
//!
//! The vector `(S¹, …, S^p)` converges to the law with characteristic
//! function `ψ(x) = exp(−(1/16π) ∫_ℝ (1 − exp(i Σ x_q t^{−2q})) dt)`. Each
//! marginal is a one-sided stable law of index `1/(2q)`; for `q = 1` it is the
//! Lévy distribution with scale `1/(128π)`.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use num_traits::ToPrimitive;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combinatorics::CoefficientTable;
use crate::error::{Error, Result};
use crate::quadrature::integrate;
use crate::special::{erfc, gamma};
use crate::spectrum::{default_window, sample_spectrum, spectral_sums, MultiplicityFunction, SpectralSums};
use crate::stats::rng_stream;

/// Smallest `τ` accepted as a stand-in for the limit.
pub const MIN_PROXY_TAU: f64 = 1e4;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PsiValue {
    pub value: Complex64,
    /// Estimated absolute error of `value`.
    pub error: f64,
}

/// `ψ(x)` for `x ∈ ℝ^p`.
///
/// With `s = t^{−2}` the exponent becomes `(1/8π) ∫_0^∞ (1 − e^{iΦ(s)}) ½ s^{−3/2} ds`
/// with the polynomial phase `Φ(s) = Σ x_q s^q`. The integral runs along the
/// real axis up to the point `a` where `Σ|x_q| a^q = 1` (in the variable
/// `v = √s`, where the integrand is smooth). Beyond `a` the oscillatory part
/// is moved off the axis: between consecutive real critical points of `Φ`
/// the path bulges into the half-plane where `e^{iΦ}` decays, it crosses the
/// axis only at the critical points (saddles), and it leaves the last one
/// along a ray in the sector where the leading term damps. Each piece is
/// flattened until `Im Φ ≥ −1` along it.
pub fn psi(x: &[f64], quad_tol: f64) -> Result<PsiValue> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("psi arguments must be finite".into()));
    }
    if quad_tol.is_nan() || quad_tol <= 0.0 {
        return Err(Error::Validation("quadrature tolerance must be positive".into()));
    }
    let Some(top) = x.iter().rposition(|&v| v != 0.0) else {
        return Ok(PsiValue {
            value: Complex64::new(1.0, 0.0),
            error: 0.0,
        });
    };
    let flip = x[top] < 0.0;
    let xs: Vec<f64> = x[..=top].iter().map(|&v| if flip { -v } else { v }).collect();
    let (half, err) = half_exponent(&xs, quad_tol * 8.0 * PI)?;
    let half = if flip { half.conj() } else { half };
    let value = (-half / (8.0 * PI)).exp();
    let error = value.norm() * err / (8.0 * PI);
    if error > quad_tol {
        return Err(Error::Quadrature {
            achieved: error,
            tol: quad_tol,
        });
    }
    Ok(PsiValue { value, error })
}

struct Phase<'a> {
    x: &'a [f64],
}

impl Phase<'_> {
    fn at(&self, s: Complex64) -> Complex64 {
        self.x
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c)
            * s
    }

    /// `Φ'(s)` for real `s`.
    fn slope(&self, s: f64) -> f64 {
        self.x
            .iter()
            .enumerate()
            .rev()
            .fold(0.0, |acc, (i, &c)| acc * s + (i + 1) as f64 * c)
    }

    /// `Φ''(s)` for real `s`.
    fn curvature(&self, s: f64) -> f64 {
        self.x
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (i, &c)| acc * s + ((i + 1) * i) as f64 * c)
    }

    /// Positive zeros of `Φ'` beyond `from`, where it changes sign.
    fn critical_points(&self, from: f64) -> Vec<f64> {
        let n = self.x.len();
        let lead = n as f64 * self.x[n - 1];
        let bound = 1.0
            + self.x[..n - 1]
                .iter()
                .enumerate()
                .map(|(i, c)| ((i + 1) as f64 * c / lead).abs())
                .fold(0.0, f64::max);
        if bound <= from {
            return Vec::new();
        }
        let steps = 4000;
        let ratio = (bound / from).powf(1.0 / steps as f64);
        let mut out = Vec::new();
        let mut lo = from;
        let mut f_lo = self.slope(lo);
        for _ in 0..steps {
            let hi = lo * ratio;
            let f_hi = self.slope(hi);
            if f_lo * f_hi < 0.0 {
                let (mut a, mut b) = (lo, hi);
                for _ in 0..200 {
                    let m = 0.5 * (a + b);
                    if m <= a || m >= b {
                        break;
                    }
                    if self.slope(m) * f_lo > 0.0 {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                out.push(0.5 * (a + b));
            }
            lo = hi;
            f_lo = f_hi;
        }
        out
    }

    fn min_im_on_segment(&self, z0: Complex64, z1: Complex64) -> f64 {
        (0..=256)
            .map(|k| self.at(z0 + (z1 - z0) * (k as f64 / 256.0)).im)
            .fold(f64::INFINITY, f64::min)
    }
}

fn kernel(phase: &Phase, s: Complex64) -> Complex64 {
    (Complex64::i() * phase.at(s)).exp() * 0.5 * s.powf(-1.5)
}

fn segment_integral(phase: &Phase, z0: Complex64, z1: Complex64, tol: f64) -> Result<(Complex64, f64)> {
    let d = z1 - z0;
    integrate(|u| kernel(phase, z0 + d * u) * d, 0.0, 1.0, tol, 20_000)
}

const MAX_FLATTENING: usize = 40;
const DAMPED: f64 = 60.0;

/// `∫_0^∞ (1 − e^{iΦ(s)}) ½ s^{−3/2} ds` for a phase whose leading
/// coefficient is positive.
fn half_exponent(x: &[f64], tol: f64) -> Result<(Complex64, f64)> {
    let qs = x.len();
    let phase = Phase { x };
    let bound = |v: f64| -> f64 {
        let s = v * v;
        x.iter().enumerate().map(|(i, c)| c.abs() * s.powi(i as i32 + 1)).sum()
    };
    let v_end = invert_monotone(&bound, 1.0);
    let a0 = v_end * v_end;

    let real_integrand = |v: f64| -> Complex64 {
        let phi = phase.at(Complex64::new(v * v, 0.0)).re;
        let h = (0.5 * phi).sin();
        Complex64::new(2.0 * h * h, -phi.sin()) / (v * v)
    };
    let (real, real_err) = integrate(real_integrand, 0.0, v_end, tol / 4.0, 2000)?;

    let mut nodes = vec![a0];
    nodes.extend(phase.critical_points(a0));
    let piece_tol = tol / (4.0 * (2 * nodes.len()) as f64);
    let mut osc = Complex64::new(0.0, 0.0);
    let mut osc_err = 0.0;
    for w in nodes.windows(2) {
        let (a, b) = (w[0], w[1]);
        let side = phase.slope(0.5 * (a + b)).signum();
        let za = Complex64::new(a, 0.0);
        let zb = Complex64::new(b, 0.0);
        let mut gamma = FRAC_PI_2 / 2.0;
        let apex = loop {
            let apex = Complex64::new(0.5 * (a + b), side * gamma.tan() * 0.5 * (b - a));
            if phase.min_im_on_segment(za, apex).min(phase.min_im_on_segment(apex, zb)) >= -1.0 {
                break apex;
            }
            gamma *= 0.5;
            if gamma < FRAC_PI_2 * 0.5f64.powi(MAX_FLATTENING as i32) {
                return Err(Error::Quadrature {
                    achieved: f64::INFINITY,
                    tol,
                });
            }
        };
        for (z0, z1) in [(za, apex), (apex, zb)] {
            let (v, e) = segment_integral(&phase, z0, z1, piece_tol)?;
            osc += v;
            osc_err += e;
        }
    }

    // final ray from the last node
    let c = *nodes.last().unwrap_or(&a0);
    let scale = phase
        .slope(c)
        .abs()
        .recip()
        .min(phase.curvature(c).abs().sqrt().recip())
        .min(c);
    let mut gamma = FRAC_PI_2 / qs as f64;
    let (dir, r_stop) = 'search: {
        for _ in 0..MAX_FLATTENING {
            let dir = Complex64::from_polar(1.0, gamma);
            let mut r = scale / 16.0;
            let mut ok = true;
            while r < 1e300 {
                let im = phase.at(c + dir * r).im;
                if im < -1.0 {
                    ok = false;
                    break;
                }
                if im > DAMPED {
                    break;
                }
                r *= 1.125;
            }
            if ok && r < 1e300 {
                break 'search (dir, r);
            }
            gamma *= 0.5;
        }
        return Err(Error::Quadrature {
            achieved: f64::INFINITY,
            tol,
        });
    };
    let mut r = 0.0;
    let mut width = scale;
    while r < r_stop {
        let next = (r + width).min(r_stop);
        let (v, e) = segment_integral(&phase, c + dir * r, c + dir * next, piece_tol / 64.0)?;
        osc += v;
        osc_err += e;
        r = next;
        width *= 2.0;
    }
    let tail = (-DAMPED).exp() * (c + dir * r_stop).norm().powf(-0.5);
    let value = real + a0.powf(-0.5) - osc;
    Ok((value, real_err + osc_err + tail))
}

/// Solves `f(v) = target` for a continuous increasing `f` with `f(0) = 0`.
fn invert_monotone(f: &impl Fn(f64) -> f64, target: f64) -> f64 {
    let mut hi = 1.0;
    while f(hi) < target {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Largest `C` with `ln|ψ(x e_q)| ≤ −C |x|^{1/(2p)}` at 40 log-spaced `|x|` in
/// `[10², 10⁶]` of both signs on every axis `q ≤ p`.
pub fn fit_decay_constant(p: usize, quad_tol: f64) -> Result<f64> {
    if p == 0 {
        return Err(Error::Validation("p must be at least 1".into()));
    }
    let mut c = f64::INFINITY;
    for q in 0..p {
        for k in 0..40 {
            let mag = 10f64.powf(2.0 + 4.0 * k as f64 / 39.0);
            for sign in [1.0, -1.0] {
                let mut x = vec![0.0; p];
                x[q] = sign * mag;
                let v = psi(&x, quad_tol)?.value.norm();
                c = c.min(-v.ln() / mag.powf(1.0 / (2 * p) as f64));
            }
        }
    }
    Ok(c)
}

/// Parameters of the `q`-th marginal, a one-sided stable law.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct StableParams {
    pub q: usize,
    /// Stability index `1/(2q)`.
    pub index: f64,
    /// `c_q = ((1/8π) cos(π/4q) Γ(1 − 1/2q))^{2q}`.
    pub c: f64,
    /// `tan(π/4q)`.
    pub skew: f64,
}

pub fn stable_params(q: usize) -> Result<StableParams> {
    if q == 0 {
        return Err(Error::Validation("q must be at least 1".into()));
    }
    let qf = q as f64;
    let base = (PI / (4.0 * qf)).cos() * gamma(1.0 - 1.0 / (2.0 * qf)) / (8.0 * PI);
    Ok(StableParams {
        q,
        index: 1.0 / (2.0 * qf),
        c: base.powi(2 * q as i32),
        skew: (PI / (4.0 * qf)).tan(),
    })
}

/// `exp(−|c_q x|^{1/2q} (1 − i sign(x) tan(π/4q)))`.
pub fn marginal_cf(params: &StableParams, x: f64) -> Complex64 {
    if x == 0.0 {
        return Complex64::new(1.0, 0.0);
    }
    let mag = (params.c * x.abs()).powf(params.index);
    (-Complex64::new(mag, -x.signum() * mag * params.skew)).exp()
}

/// Lévy density `(1/16π) t^{−3/2} exp(−1/(256π t))` of the first marginal.
pub fn levy_density(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        t.powf(-1.5) * (-1.0 / (256.0 * PI * t)).exp() / (16.0 * PI)
    }
}

/// `erfc(1/√(256π t))`.
pub fn levy_cdf(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        erfc(1.0 / (256.0 * PI * t).sqrt())
    }
}

/// Fourier inversion of the first marginal from tabulated values of [`psi`].
///
/// `ψ` is evaluated once at the Kronrod nodes of a fixed panel partition of
/// `[0, X]`, graded geometrically towards 0 and of width at most
/// `π/(2 t_max)` elsewhere, so any `|t| ≤ t_max` can then be inverted by a
/// weighted sum.
#[derive(Clone, Debug)]
pub struct DensityInverter {
    t_max: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    values: Vec<Complex64>,
    psi_error: f64,
}

const XGK15: [f64; 15] = [
    -0.991_455_371_120_812_6,
    -0.949_107_912_342_758_5,
    -0.864_864_423_359_769_1,
    -0.741_531_185_599_394_4,
    -0.586_087_235_467_691_1,
    -0.405_845_151_377_397_2,
    -0.207_784_955_007_898_5,
    0.0,
    0.207_784_955_007_898_5,
    0.405_845_151_377_397_2,
    0.586_087_235_467_691_1,
    0.741_531_185_599_394_4,
    0.864_864_423_359_769_1,
    0.949_107_912_342_758_5,
    0.991_455_371_120_812_6,
];
const WGK15: [f64; 15] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
    0.204_432_940_075_298_9,
    0.190_350_578_064_785_4,
    0.169_004_726_639_267_9,
    0.140_653_259_715_525_9,
    0.104_790_010_322_250_2,
    0.063_092_092_629_978_55,
    0.022_935_322_010_529_22,
];

impl DensityInverter {
    /// Tabulates `ψ` for inversion at `|t| ≤ t_max`. Only `p = 1` is
    /// supported.
    pub fn new(p: usize, t_max: f64, quad_tol: f64) -> Result<Self> {
        if p != 1 {
            return Err(Error::Validation(
                "density inversion is implemented for p = 1 only".into(),
            ));
        }
        if !(t_max > 0.0 && t_max.is_finite()) {
            return Err(Error::Validation("t_max must be positive".into()));
        }
        let eval = |x: f64| psi(&[x], quad_tol).map(|v| v.value.norm());
        let mut x_max = 1e3;
        while eval(x_max)? > 1e-13 {
            x_max *= 2.0;
            if x_max > 1e12 {
                return Err(Error::Numerical("psi does not decay".into()));
            }
        }
        let width = (FRAC_PI_2 / t_max).min(x_max / 16.0);
        let mut edges = vec![0.0];
        for k in (1..=48).rev() {
            edges.push(width * 0.5f64.powi(k));
        }
        let mut e = width;
        while e < x_max {
            edges.push(e);
            e += width;
        }
        edges.push(x_max);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for w in edges.windows(2) {
            let (c, h) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
            for (xk, wk) in XGK15.iter().zip(WGK15) {
                nodes.push(c + h * xk);
                weights.push(h * wk);
            }
        }
        let evaluated: Vec<PsiValue> = nodes
            .par_iter()
            .map(|&x| psi(&[x], quad_tol))
            .collect::<Result<_>>()?;
        let psi_error = evaluated
            .iter()
            .zip(&weights)
            .map(|(v, w)| v.error * w)
            .sum::<f64>()
            / PI;
        Ok(DensityInverter {
            t_max,
            nodes,
            weights,
            values: evaluated.into_iter().map(|v| v.value).collect(),
            psi_error,
        })
    }

    fn check(&self, t: f64) -> Result<()> {
        if t.abs() > self.t_max * (1.0 + 1e-12) {
            return Err(Error::Validation(format!(
                "|t| = {} beyond the tabulated range {}",
                t.abs(),
                self.t_max
            )));
        }
        Ok(())
    }

    /// `(1/π) Re ∫_0^∞ e^{−ixt} ψ(x) dx`.
    pub fn density(&self, t: f64) -> Result<f64> {
        self.check(t)?;
        let s: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .zip(&self.values)
            .map(|((&x, &w), v)| w * (Complex64::from_polar(1.0, -x * t) * v).re)
            .sum();
        Ok(s / PI)
    }

    /// Gil-Pelaez: `1/2 − (1/π) ∫_0^∞ Im(e^{−ixt} ψ(x))/x dx`.
    pub fn cdf(&self, t: f64) -> Result<f64> {
        self.check(t)?;
        let s: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .zip(&self.values)
            .map(|((&x, &w), v)| w * (Complex64::from_polar(1.0, -x * t) * v).im / x)
            .sum();
        Ok(0.5 - s / PI)
    }

    /// Accumulated quadrature error of the tabulated `ψ`, as a bound on the
    /// density error.
    pub fn psi_error(&self) -> f64 {
        self.psi_error
    }
}

/// Density of the first limiting marginal at each `t`.
pub fn invert_density(p: usize, eval_points: &[f64], quad_tol: f64) -> Result<Vec<f64>> {
    let t_max = eval_points.iter().fold(0.0f64, |m, t| m.max(t.abs()));
    let inv = DensityInverter::new(p, t_max.max(1e-6), quad_tol)?;
    eval_points.iter().map(|&t| inv.density(t)).collect()
}

/// `(S¹, …, S^p)` at a large `τ` with `m ≡ 1`, as a sample from the limit.
pub fn sample_limit_vector<R: rand::Rng + ?Sized>(
    p: usize,
    proxy_tau: f64,
    window_frac: f64,
    rng: &mut R,
) -> Result<SpectralSums> {
    if proxy_tau < MIN_PROXY_TAU {
        return Err(Error::Validation(format!(
            "proxy tau {proxy_tau} below {MIN_PROXY_TAU}"
        )));
    }
    let m = MultiplicityFunction::Constant { c: 1.0 };
    let spectrum = sample_spectrum(&m, default_window(proxy_tau, window_frac)?, rng)?;
    spectral_sums(&spectrum, proxy_tau, p)
}

/// Index `l` of the limit family `R(l)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum LimitIndex {
    Finite(f64),
    Infinite,
}

impl std::str::FromStr for LimitIndex {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "inf" {
            return Ok(LimitIndex::Infinite);
        }
        let v: f64 = s
            .parse()
            .map_err(|_| Error::Validation(format!("bad limit index {s:?}")))?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Validation("l must be positive".into()));
        }
        Ok(LimitIndex::Finite(v))
    }
}

impl std::fmt::Display for LimitIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LimitIndex::Finite(v) => write!(f, "{v}"),
            LimitIndex::Infinite => f.write_str("inf"),
        }
    }
}

/// `R_q(l) = P_q(1, A_2 y_2/(2l), …, A_q y_q/(2l)^{q−1})` for `q = 2..=p`,
/// from the quotient vector `y_q = S^q/(S¹)^q`.
pub fn r_from_quotients(table: &CoefficientTable, l: LimitIndex, y: &[f64]) -> Vec<f64> {
    let p = y.len() + 1;
    match l {
        LimitIndex::Infinite => vec![1.0; p - 1],
        LimitIndex::Finite(l) => {
            let mut args = vec![1.0];
            args.extend(
                y.iter()
                    .enumerate()
                    .map(|(i, &v)| table.a_f64(i + 2) * v / (2.0 * l).powi(i as i32 + 1)),
            );
            (2..=p).map(|q| table.p_poly(q).eval(&args[..q])).collect()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitSampling {
    pub proxy_tau: f64,
    pub window_frac: f64,
    pub seed: u64,
}

/// `n` samples of the quotient vector `(y_2, …, y_p)`, sample `i` drawn from
/// stream `(seed, i)`.
pub fn sample_quotients(p: usize, n: usize, cfg: &LimitSampling) -> Result<Vec<Vec<f64>>> {
    if p < 2 {
        return Err(Error::Validation("quotients need p ≥ 2".into()));
    }
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_stream(cfg.seed, i as u64);
            sample_limit_vector(p, cfg.proxy_tau, cfg.window_frac, &mut rng).map(|s| s.quotients())
        })
        .collect()
}

/// `n` samples of `(R_2(l), …, R_p(l))`.
pub fn sample_r(
    table: &CoefficientTable,
    l: LimitIndex,
    p: usize,
    n: usize,
    cfg: &LimitSampling,
) -> Result<Vec<Vec<f64>>> {
    if p > table.p_max() {
        return Err(Error::Validation("p exceeds coefficient table".into()));
    }
    if l == LimitIndex::Infinite {
        if p < 2 {
            return Err(Error::Validation("R needs p ≥ 2".into()));
        }
        return Ok(vec![vec![1.0; p - 1]; n]);
    }
    Ok(sample_quotients(p, n, cfg)?
        .iter()
        .map(|y| r_from_quotients(table, l, y))
        .collect())
}

/// Product Gaussian kernel density estimate with Silverman bandwidths.
#[derive(Clone, Debug)]
pub struct KernelDensity {
    samples: Vec<Vec<f64>>,
    bandwidth: Vec<f64>,
}

impl KernelDensity {
    pub fn new(samples: Vec<Vec<f64>>) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return Err(Error::Validation("KDE needs at least two samples".into()));
        }
        let d = samples[0].len();
        if d == 0 || samples.iter().any(|s| s.len() != d || s.iter().any(|v| !v.is_finite())) {
            return Err(Error::Validation("KDE samples must be finite and equal-length".into()));
        }
        let factor = (4.0 / ((d as f64 + 2.0) * n as f64)).powf(1.0 / (d as f64 + 4.0));
        let bandwidth = (0..d)
            .map(|j| {
                let mean = samples.iter().map(|s| s[j]).sum::<f64>() / n as f64;
                let var = samples.iter().map(|s| (s[j] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                (var.sqrt() * factor).max(1e-12)
            })
            .collect();
        Ok(KernelDensity { samples, bandwidth })
    }

    pub fn bandwidth(&self) -> &[f64] {
        &self.bandwidth
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        let norm: f64 = self
            .bandwidth
            .iter()
            .map(|h| h * (2.0 * PI).sqrt())
            .product();
        let total: f64 = self
            .samples
            .iter()
            .map(|s| {
                let e: f64 = s
                    .iter()
                    .zip(z)
                    .zip(&self.bandwidth)
                    .map(|((a, b), h)| ((a - b) / h).powi(2))
                    .sum();
                (-0.5 * e).exp()
            })
            .sum();
        total / (norm * self.samples.len() as f64)
    }
}

/// Density of `R(l)` at points `x = (x_2, …, x_p)`:
/// `(2l)^{p(p−1)/2} Π_q 1/(A_q q!) · 𝒟(z)` with
/// `z_q = (2l)^{q−1}/A_q · Q_q(1, x_2, …, x_q)` and `𝒟` the quotient density,
/// here a kernel estimate.
pub fn density_dl(
    table: &CoefficientTable,
    l: f64,
    quotient_density: &KernelDensity,
    eval_points: &[Vec<f64>],
) -> Result<Vec<f64>> {
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::Validation("l must be positive and finite".into()));
    }
    let p = quotient_density.bandwidth.len() + 1;
    if p > table.p_max() {
        return Err(Error::Validation("p exceeds coefficient table".into()));
    }
    let two_l = 2.0 * l;
    let mut pref = two_l.powi((p * (p - 1) / 2) as i32);
    for q in 2..=p {
        pref /= table.a_f64(q) * crate::combinatorics::factorial(q).to_f64().unwrap_or(f64::INFINITY);
    }
    eval_points
        .iter()
        .map(|x| {
            if x.len() != p - 1 {
                return Err(Error::Validation("evaluation point has wrong dimension".into()));
            }
            let mut args = vec![1.0];
            args.extend_from_slice(x);
            let z: Vec<f64> = (2..=p)
                .map(|q| two_l.powi(q as i32 - 1) / table.a_f64(q) * table.q_poly(q).eval(&args[..q]))
                .collect();
            Ok(pref * quotient_density.eval(&z))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combinatorics::build_table;
    use crate::quadrature::{gk15, integrate_real};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn c1_value() {
        let s = stable_params(1).unwrap();
        assert_relative_eq!(s.c, 1.0 / (128.0 * PI), max_relative = 1e-13);
        assert_relative_eq!(s.skew, 1.0, max_relative = 1e-15);
    }

    #[test]
    fn psi_at_zero() {
        assert_eq!(psi(&[0.0, 0.0, 0.0], 1e-10).unwrap().value, Complex64::new(1.0, 0.0));
    }

    #[test]
    fn psi_p1_closed_form() {
        let s = stable_params(1).unwrap();
        for x in [-1e4, -30.0, -0.5, 1e-3, 0.7, 12.0, 5e2, 1e5] {
            let v = psi(&[x], 1e-10).unwrap();
            let c = marginal_cf(&s, x);
            assert!((v.value - c).norm() < 1e-8, "x={x}: {} vs {c}", v.value);
        }
    }

    #[test]
    fn psi_marginals_match_closed_form() {
        for q in 2..=3 {
            let s = stable_params(q).unwrap();
            for x in [-50.0, -0.3, 2.0, 1e3] {
                let mut v = vec![0.0; q];
                v[q - 1] = x;
                let got = psi(&v, 1e-10).unwrap().value;
                assert!((got - marginal_cf(&s, x)).norm() < 1e-7, "q={q} x={x}");
            }
        }
    }

    #[test]
    fn contour_matches_real_axis() {
        // direct quadrature of ∫_0^V (1 − e^{iΦ(v²)})/v² dv plus 1/V
        let x = [0.3, -0.8, 0.2];
        let phi = |v: f64| {
            let s = v * v;
            x[0] * s + x[1] * s * s + x[2] * s * s * s
        };
        let v_max: f64 = 12.0;
        let panels = 400_000;
        let h = v_max / panels as f64;
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..panels {
            let (v, _) = gk15(
                &mut |v: f64| {
                    let p = phi(v);
                    Complex64::new(1.0 - p.cos(), -p.sin()) / (v * v)
                },
                k as f64 * h,
                (k + 1) as f64 * h,
            );
            acc += v;
        }
        let direct = (-(acc + 1.0 / v_max) / (8.0 * PI)).exp();
        let contour = psi(&x, 1e-11).unwrap().value;
        assert!((direct - contour).norm() < 1e-6, "{direct} vs {contour}");
    }

    #[test]
    fn decay_constant_is_positive() {
        for p in 1..=3 {
            let c = fit_decay_constant(p, 1e-9).unwrap();
            assert!(c > 0.0 && c.is_finite(), "p={p}: C={c}");
        }
    }

    #[test]
    fn tiny_leading_coefficient() {
        let x = [1.3213230362816795, 9.575729234212595, -0.06991347158047034];
        let v = psi(&x, 1e-9).unwrap().value;
        assert!(v.norm() <= 1.0);
        let w = psi(&x.map(|c| -c), 1e-9).unwrap().value;
        assert!((v - w.conj()).norm() < 1e-9);
    }

    #[test]
    fn psi_conjugate_symmetry() {
        let x = [0.4, -1.3, 0.8];
        let a = psi(&x, 1e-10).unwrap().value;
        let b = psi(&x.map(|v| -v), 1e-10).unwrap().value;
        assert!((a - b.conj()).norm() < 1e-9);
    }

    #[test]
    fn levy_oracle_normalized() {
        let (v, _) = integrate_real(levy_density, 0.0, 1.0, 1e-12, 10_000).unwrap();
        // ∫_1^∞ via t = 1/w²
        let (w, _) = integrate_real(|w| 2.0 * levy_density(1.0 / (w * w)) / (w * w * w), 0.0, 1.0, 1e-12, 10_000)
            .unwrap();
        assert_relative_eq!(v + w, 1.0, max_relative = 1e-8);
        assert_relative_eq!(levy_cdf(1.0), v, max_relative = 1e-8);
    }

    #[test]
    fn inversion_recovers_levy() {
        let inv = DensityInverter::new(1, 0.05, 1e-10).unwrap();
        for t in [0.002, 0.01, 0.05] {
            assert_relative_eq!(inv.density(t).unwrap(), levy_density(t), max_relative = 1e-3);
        }
        assert!(inv.density(-0.01).unwrap().abs() < 1e-3);
        assert!((inv.cdf(0.05).unwrap() - levy_cdf(0.05)).abs() < 1e-3);
        // ∫ D over [−0.01, 0.05] plus the inverted upper tail
        let (mass, _) = integrate_real(|t| inv.density(t).unwrap(), -0.01, 0.05, 1e-6, 2000).unwrap();
        assert!((mass + 1.0 - inv.cdf(0.05).unwrap() - 1.0).abs() < 1e-2);
        assert!(DensityInverter::new(2, 0.05, 1e-10).is_err());
    }

    #[test]
    fn r_at_infinity_is_ones() {
        let t = build_table(4).unwrap();
        let cfg = LimitSampling {
            proxy_tau: 1e4,
            window_frac: 0.5,
            seed: 1,
        };
        let r = sample_r(&t, LimitIndex::Infinite, 4, 3, &cfg).unwrap();
        assert!(r.iter().all(|v| v == &vec![1.0; 3]));
    }

    #[test]
    fn r_at_zero_quotient_is_ones() {
        let t = build_table(4).unwrap();
        assert_eq!(r_from_quotients(&t, LimitIndex::Finite(1.0), &[0.0, 0.0, 0.0]), vec![1.0; 3]);
    }

    #[test]
    fn proxy_tau_floor() {
        let mut rng = rng_stream(0, 0);
        assert!(sample_limit_vector(2, 100.0, 0.5, &mut rng).is_err());
    }

    #[test]
    fn limit_index_parse() {
        assert_eq!("inf".parse::<LimitIndex>().unwrap(), LimitIndex::Infinite);
        assert_eq!("2.5".parse::<LimitIndex>().unwrap(), LimitIndex::Finite(2.5));
        assert!("-1".parse::<LimitIndex>().is_err());
    }

    #[test]
    fn dl_matches_histogram_and_normalizes() {
        let t = build_table(2).unwrap();
        let cfg = LimitSampling {
            proxy_tau: 1e4,
            window_frac: 0.5,
            seed: 5,
        };
        let y = sample_quotients(2, 4000, &cfg).unwrap();
        let kde = KernelDensity::new(y.clone()).unwrap();
        let l = 1.0;
        let grid: Vec<Vec<f64>> = (0..400).map(|i| vec![0.7 + 0.35 * (i as f64 + 0.5) / 400.0]).collect();
        let dens = density_dl(&t, l, &kde, &grid).unwrap();
        let mass: f64 = dens.iter().sum::<f64>() * 0.35 / 400.0;
        assert!((mass - 1.0).abs() < 0.05, "mass {mass}");
        let r: Vec<f64> = y.iter().map(|v| r_from_quotients(&t, LimitIndex::Finite(l), v)[0]).collect();
        let (a, b) = (0.85, 0.95);
        let frac = r.iter().filter(|&&v| v > a && v <= b).count() as f64 / r.len() as f64;
        let integral: f64 = grid
            .iter()
            .zip(&dens)
            .filter(|(x, _)| x[0] > a && x[0] <= b)
            .map(|(_, d)| d * 0.35 / 400.0)
            .sum();
        assert!((frac - integral).abs() < 0.03, "{frac} vs {integral}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn psi_is_bounded(x in proptest::collection::vec(-10.0f64..10.0, 1..=3)) {
            let v = psi(&x, 1e-9).unwrap().value;
            prop_assert!(v.norm() <= 1.0 + 1e-12);
        }
    }
}
