//! Randomized wave-vector systems and the tuple counts `N_a`.
//!
//! Level `k` carries `m_k` independent uniform angles `θ`; each angle
//! contributes the four vectors `±(cos θ, sin θ)`, `±(−cos θ, sin θ)` scaled by
//! `√λ_k/(2π)`. In the square variant each angle also contributes
//! `±(sin θ, cos θ)`, `±(−sin θ, cos θ)`, and the counting formula applies with
//! `m_k = 2n_k`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combinatorics::{factorial, CoefficientTable};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    #[serde(rename = "rect")]
    Rectangular,
    Square,
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rect" | "rectangular" => Ok(Variant::Rectangular),
            "square" => Ok(Variant::Square),
            _ => Err(Error::Validation(format!("unknown variant {s:?}"))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Rectangular => "rect",
            Variant::Square => "square",
        })
    }
}

#[derive(Clone, Debug)]
pub struct WaveVectorSystem {
    variant: Variant,
    lambdas: Vec<f64>,
    /// `m_k` for the rectangular variant, `n_k` for the square one.
    multiplicities: Vec<u32>,
    vectors: Vec<Vec<[f64; 2]>>,
}

impl WaveVectorSystem {
    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn levels(&self) -> usize {
        self.lambdas.len()
    }

    /// The `m_k` entering the counting formula.
    pub fn effective_multiplicities(&self) -> Vec<u32> {
        self.multiplicities
            .iter()
            .map(|&m| match self.variant {
                Variant::Rectangular => m,
                Variant::Square => 2 * m,
            })
            .collect()
    }

    /// `Λ_k`, of size `4 m_k`.
    pub fn vectors(&self, k: usize) -> &[[f64; 2]] {
        &self.vectors[k]
    }
}

pub fn sample_system<R: Rng + ?Sized>(
    lambdas: &[f64],
    multiplicities: &[u32],
    variant: Variant,
    rng: &mut R,
) -> Result<WaveVectorSystem> {
    if lambdas.len() != multiplicities.len() {
        return Err(Error::Validation("one multiplicity per level required".into()));
    }
    if lambdas.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        return Err(Error::Validation("levels must be positive".into()));
    }
    if lambdas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Validation("levels must be strictly increasing".into()));
    }
    if multiplicities.contains(&0) {
        return Err(Error::Validation("multiplicities must be at least 1".into()));
    }
    let theta_max = match variant {
        Variant::Rectangular => FRAC_PI_2,
        Variant::Square => FRAC_PI_4,
    };
    let vectors = lambdas
        .iter()
        .zip(multiplicities)
        .map(|(&lambda, &m)| {
            let r = lambda.sqrt() / (2.0 * PI);
            let mut vs = Vec::new();
            for _ in 0..m {
                let theta = loop {
                    let t = rng.gen::<f64>() * theta_max;
                    if t > 0.0 {
                        break t;
                    }
                };
                let u = [r * theta.cos(), r * theta.sin()];
                let v = [-u[0], u[1]];
                vs.extend([u, v, [-u[0], -u[1]], [-v[0], -v[1]]]);
                if variant == Variant::Square {
                    let w = [u[1], u[0]];
                    let z = [-w[0], w[1]];
                    vs.extend([w, z, [-w[0], -w[1]], [-z[0], -z[1]]]);
                }
            }
            vs
        })
        .collect();
    Ok(WaveVectorSystem {
        variant,
        lambdas: lambdas.to_vec(),
        multiplicities: multiplicities.to_vec(),
        vectors,
    })
}

/// Limits for [`na_bruteforce`].
#[derive(Clone, Copy, Debug)]
pub struct BruteForceBudget {
    pub max_order: u32,
    pub max_tuples: f64,
}

impl Default for BruteForceBudget {
    fn default() -> Self {
        BruteForceBudget {
            max_order: 8,
            max_tuples: 1e8,
        }
    }
}

/// `1e-9·√λ_max`.
pub fn default_zero_tol(system: &WaveVectorSystem) -> f64 {
    1e-9 * system.lambdas.last().copied().unwrap_or(1.0).sqrt()
}

/// Number of tuples in `Π_k Λ_k^{a_k}` whose vector sum has norm at most
/// `zero_tol`, by meet-in-the-middle over the tuple positions.
pub fn na_bruteforce(
    system: &WaveVectorSystem,
    a: &[u32],
    zero_tol: f64,
    budget: BruteForceBudget,
) -> Result<u64> {
    if a.len() != system.levels() {
        return Err(Error::Validation("index vector length must equal level count".into()));
    }
    let order: u32 = a.iter().sum();
    let tuples: f64 = a
        .iter()
        .enumerate()
        .map(|(k, &ak)| (system.vectors[k].len() as f64).powi(ak as i32))
        .product();
    if order > budget.max_order || tuples > budget.max_tuples {
        return Err(Error::Budget(format!(
            "order {order} with {tuples:e} tuples exceeds the brute-force budget"
        )));
    }
    let positions: Vec<&[[f64; 2]]> = a
        .iter()
        .enumerate()
        .flat_map(|(k, &ak)| std::iter::repeat_n(system.vectors[k].as_slice(), ak as usize))
        .collect();
    let mut split = 0;
    let mut left_size = 1.0;
    while split < positions.len() && left_size * left_size < tuples {
        left_size *= positions[split].len() as f64;
        split += 1;
    }
    let mut left = partial_sums(&positions[..split]);
    let right = partial_sums(&positions[split..]);
    left.sort_by(|u, v| u[0].total_cmp(&v[0]));
    let mut count = 0u64;
    for s in &right {
        let (tx, ty) = (-s[0], -s[1]);
        let start = left.partition_point(|u| u[0] < tx - zero_tol);
        for u in &left[start..] {
            if u[0] > tx + zero_tol {
                break;
            }
            if (u[0] - tx).hypot(u[1] - ty) <= zero_tol {
                count += 1;
            }
        }
    }
    Ok(count)
}

/// Runs [`na_bruteforce`] at the default tolerance and checks that the count
/// is unchanged at the absolute tolerances `1e-12` and `1e-6`.
pub fn na_bruteforce_checked(system: &WaveVectorSystem, a: &[u32]) -> Result<u64> {
    let budget = BruteForceBudget::default();
    let count = na_bruteforce(system, a, default_zero_tol(system), budget)?;
    for tol in [1e-12, 1e-6] {
        let other = na_bruteforce(system, a, tol, budget)?;
        if other != count {
            return Err(Error::Numerical(format!(
                "zero-sum count {other} at tolerance {tol:e} differs from {count}"
            )));
        }
    }
    Ok(count)
}

fn partial_sums(positions: &[&[[f64; 2]]]) -> Vec<[f64; 2]> {
    let mut sums = vec![[0.0, 0.0]];
    for vs in positions {
        let mut next = Vec::with_capacity(sums.len() * vs.len());
        for s in &sums {
            for v in *vs {
                next.push([s[0] + v[0], s[1] + v[1]]);
            }
        }
        sums = next;
    }
    sums
}

/// A random system shape and index vector within the default brute-force
/// budget. Half of the draws have every `a_k` even, so nonzero counts are
/// frequent.
pub fn random_configuration<R: Rng + ?Sized>(
    rng: &mut R,
    variant: Variant,
    max_levels: usize,
) -> (Vec<f64>, Vec<u32>, Vec<u32>) {
    let budget = BruteForceBudget::default();
    let per_angle = match variant {
        Variant::Rectangular => 4.0,
        Variant::Square => 8.0,
    };
    loop {
        let k = rng.gen_range(1..=max_levels.max(1));
        let mut lambdas = Vec::with_capacity(k);
        let mut l = 0.0;
        for _ in 0..k {
            l += rng.gen_range(0.5..5.0);
            lambdas.push(l);
        }
        let m: Vec<u32> = (0..k).map(|_| rng.gen_range(1..=3)).collect();
        let even = rng.gen_bool(0.5);
        let a: Vec<u32> = (0..k)
            .map(|_| if even { 2 * rng.gen_range(0..=3) } else { rng.gen_range(0..=5) })
            .collect();
        let order: u32 = a.iter().sum();
        let tuples: f64 = a
            .iter()
            .zip(&m)
            .map(|(&ak, &mk)| (per_angle * mk as f64).powi(ak as i32))
            .product();
        if order > 0 && order <= budget.max_order && tuples <= budget.max_tuples {
            return (lambdas, m, a);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NaTrial {
    pub trial: u64,
    pub lambdas: Vec<f64>,
    pub multiplicities: Vec<u32>,
    pub a: Vec<u32>,
    pub bruteforce: Option<u64>,
    pub formula: Option<String>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NaCheckReport {
    pub variant: Variant,
    pub trials: u64,
    pub max_levels: usize,
    pub seed: u64,
    /// Trials with a nonzero count.
    pub nonzero: u64,
    pub mismatches: Vec<NaTrial>,
}

/// Brute force against the closed form on `trials` random configurations,
/// trial `i` drawn from stream `(seed, i)`.
pub fn na_check(variant: Variant, trials: u64, max_levels: usize, seed: u64) -> Result<NaCheckReport> {
    if max_levels == 0 {
        return Err(Error::Validation("max_levels must be at least 1".into()));
    }
    let outcomes: Vec<(bool, NaTrial)> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = crate::stats::rng_stream(seed, trial);
            let (lambdas, multiplicities, a) = random_configuration(&mut rng, variant, max_levels);
            let mut rec = NaTrial {
                trial,
                lambdas,
                multiplicities,
                a,
                bruteforce: None,
                formula: None,
                error: None,
            };
            let mut run = || -> Result<(u64, BigInt)> {
                let sys = sample_system(&rec.lambdas, &rec.multiplicities, variant, &mut rng)?;
                Ok((na_bruteforce_checked(&sys, &rec.a)?, na_formula(&rec.a, &sys.effective_multiplicities())?))
            };
            match run() {
                Ok((count, formula)) => {
                    let ok = BigInt::from(count) == formula;
                    rec.bruteforce = Some(count);
                    rec.formula = Some(formula.to_string());
                    (ok, rec)
                }
                Err(e) => {
                    rec.error = Some(e.to_string());
                    (false, rec)
                }
            }
        })
        .collect();
    let nonzero = outcomes
        .iter()
        .filter(|(_, t)| t.bruteforce.is_some_and(|c| c > 0))
        .count() as u64;
    Ok(NaCheckReport {
        variant,
        trials,
        max_levels,
        seed,
        nonzero,
        mismatches: outcomes.into_iter().filter(|(ok, _)| !ok).map(|(_, t)| t).collect(),
    })
}

/// `Σ_{c=0}^{b} (1/(c!(b−c)!))²` for `b = 0..=h`.
fn inner_series(h: usize) -> Vec<BigRational> {
    (0..=h)
        .map(|b| {
            (0..=b).fold(BigRational::zero(), |acc, c| {
                let d = factorial(c) * factorial(b - c);
                acc + BigRational::new(BigInt::one(), &d * &d)
            })
        })
        .collect()
}

/// The per-level factor `Σ_{b ∈ ℕ^m, Σb = h} Π_j g(b_j)` as the degree-`h`
/// coefficient of the `m`-th power of `Σ g(b) Y^b`.
fn level_factor(h: usize, m: u32) -> BigRational {
    let g = inner_series(h);
    let mut acc = vec![BigRational::zero(); h + 1];
    acc[0] = BigRational::one();
    for _ in 0..m {
        let mut next = vec![BigRational::zero(); h + 1];
        for (i, ai) in acc.iter().enumerate() {
            if ai.is_zero() {
                continue;
            }
            for (j, gj) in g.iter().enumerate().take(h + 1 - i) {
                next[i + j] += ai * gj;
            }
        }
        acc = next;
    }
    acc.swap_remove(h)
}

/// `N_a / a!` as an exact rational.
pub fn na_over_factorial(a: &[u32], m: &[u32]) -> Result<BigRational> {
    if a.len() != m.len() {
        return Err(Error::Validation("index vector length must equal level count".into()));
    }
    let mut acc = BigRational::one();
    for (&ak, &mk) in a.iter().zip(m) {
        if ak % 2 == 1 {
            return Ok(BigRational::zero());
        }
        acc *= level_factor(ak as usize / 2, mk);
    }
    Ok(acc)
}

/// `N_a = a! Π_k Σ_{2Σb_j = a_k} Π_j Σ_c (1/(c!(b_j−c)!))²`, exactly.
pub fn na_formula(a: &[u32], m: &[u32]) -> Result<BigInt> {
    let a_fact = a
        .iter()
        .fold(BigInt::one(), |acc, &ak| acc * factorial(ak as usize));
    let value = na_over_factorial(a, m)? * BigRational::from_integer(a_fact);
    if !value.is_integer() {
        return Err(Error::Numerical(format!("N_a evaluated to non-integer {value}")));
    }
    Ok(value.to_integer())
}

fn check_tau(system: &WaveVectorSystem, tau: f64) -> Result<()> {
    if system
        .lambdas
        .iter()
        .any(|&l| (l - tau).abs() <= crate::torus::TAU_COLLISION_GUARD)
    {
        return Err(Error::Validation(format!("tau = {tau} collides with a level")));
    }
    Ok(())
}

/// `S^q = Σ_k m_k/(λ_k − τ)^{2q}` for `q = 1..=p`.
pub fn system_spectral_sums(system: &WaveVectorSystem, tau: f64, p: usize) -> Result<Vec<f64>> {
    check_tau(system, tau)?;
    let m = system.effective_multiplicities();
    Ok((1..=p)
        .map(|q| {
            system
                .lambdas
                .iter()
                .zip(&m)
                .map(|(&l, &mk)| mk as f64 / (l - tau).powi(2 * q as i32))
                .sum()
        })
        .collect())
}

/// Randomized moment of the given order via
/// `M^{2p} = (2p)!/p! · P_p(2A_1 S¹, …, 2A_p S^p)`; odd orders are zero.
pub fn randomized_moment_step2(
    system: &WaveVectorSystem,
    table: &CoefficientTable,
    tau: f64,
    order: usize,
) -> Result<f64> {
    check_tau(system, tau)?;
    if order % 2 == 1 {
        return Ok(0.0);
    }
    let p = order / 2;
    if p == 0 {
        return Ok(1.0);
    }
    if p > table.p_max() {
        return Err(Error::Validation(format!("order {order} beyond table")));
    }
    let s = system_spectral_sums(system, tau, p)?;
    let args: Vec<f64> = (1..=p).map(|q| 2.0 * table.a_f64(q) * s[q - 1]).collect();
    let ratio = (factorial(2 * p) / factorial(p)).to_f64().unwrap_or(f64::NAN);
    Ok(ratio * table.p_poly(p).eval(&args))
}

/// The same moment as the series `order! Σ_{‖a‖=order} N_a/a! Π (λ_k − τ)^{−a_k}`.
pub fn randomized_moment_series(system: &WaveVectorSystem, tau: f64, order: usize) -> Result<f64> {
    check_tau(system, tau)?;
    let m = system.effective_multiplicities();
    let k = system.levels();
    let mut total = 0.0;
    let mut a = vec![0u32; k];
    let mut err = None;
    compositions(order as u32, k, 0, &mut a, &mut |a| {
        match na_over_factorial(a, &m) {
            Ok(c) if c.is_zero() => {}
            Ok(c) => {
                let w: f64 = a
                    .iter()
                    .zip(&system.lambdas)
                    .map(|(&ak, &l)| (l - tau).powi(-(ak as i32)))
                    .product();
                total += c.to_f64().unwrap_or(f64::NAN) * w;
            }
            Err(e) => err = Some(e),
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    Ok(factorial(order).to_f64().unwrap_or(f64::NAN) * total)
}

fn compositions(rem: u32, k: usize, i: usize, a: &mut Vec<u32>, f: &mut impl FnMut(&[u32])) {
    if i + 1 == k {
        a[i] = rem;
        f(a);
        return;
    }
    for v in 0..=rem {
        a[i] = v;
        compositions(rem - v, k, i + 1, a, f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combinatorics::build_table;
    use crate::stats::rng_stream;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn naive_count(system: &WaveVectorSystem, a: &[u32], tol: f64) -> u64 {
        let positions: Vec<&[[f64; 2]]> = a
            .iter()
            .enumerate()
            .flat_map(|(k, &ak)| std::iter::repeat_n(system.vectors(k), ak as usize))
            .collect();
        partial_sums(&positions)
            .iter()
            .filter(|s| s[0].hypot(s[1]) <= tol)
            .count() as u64
    }

    #[test]
    fn vector_counts_and_norms() {
        let mut rng = rng_stream(1, 0);
        let s = sample_system(&[3.0, 10.0], &[2, 1], Variant::Square, &mut rng).unwrap();
        assert_eq!(s.vectors(0).len(), 16);
        assert_eq!(s.vectors(1).len(), 8);
        for v in s.vectors(1) {
            assert_relative_eq!(v[0].hypot(v[1]), 10f64.sqrt() / (2.0 * PI), max_relative = 1e-14);
        }
        assert_eq!(s.effective_multiplicities(), vec![4, 2]);
        for vs in &s.vectors {
            for v in vs {
                assert!(vs.contains(&[-v[0], -v[1]]));
            }
        }
    }

    #[test]
    fn formula_examples() {
        for m in 1..=4 {
            assert_eq!(na_formula(&[2], &[m]).unwrap(), BigInt::from(4 * m));
        }
        assert_eq!(na_formula(&[4], &[1]).unwrap(), BigInt::from(36));
        assert_eq!(na_formula(&[3, 2], &[1, 1]).unwrap(), BigInt::zero());
        assert_eq!(na_formula(&[0, 0], &[2, 3]).unwrap(), BigInt::one());
    }

    #[test]
    fn single_pair_count() {
        let mut rng = rng_stream(2, 0);
        let s = sample_system(&[5.0], &[1], Variant::Rectangular, &mut rng).unwrap();
        assert_eq!(na_bruteforce_checked(&s, &[2]).unwrap(), 4);
        assert_eq!(na_bruteforce_checked(&s, &[4]).unwrap(), 36);
    }

    #[test]
    fn mitm_matches_naive() {
        let mut rng = rng_stream(3, 0);
        let s = sample_system(&[2.0, 7.0], &[1, 2], Variant::Rectangular, &mut rng).unwrap();
        for a in [[2u32, 2], [1, 3], [4, 0], [2, 4]] {
            let tol = default_zero_tol(&s);
            let fast = na_bruteforce(&s, &a, tol, BruteForceBudget::default()).unwrap();
            assert_eq!(fast, naive_count(&s, &a, tol));
        }
    }

    #[test]
    fn budget_is_enforced() {
        let mut rng = rng_stream(4, 0);
        let s = sample_system(&[1.0], &[3], Variant::Rectangular, &mut rng).unwrap();
        assert!(matches!(
            na_bruteforce(&s, &[10], 1e-9, BruteForceBudget::default()),
            Err(Error::Budget(_))
        ));
    }

    #[test]
    fn invalid_systems_are_rejected() {
        let mut rng = rng_stream(5, 0);
        assert!(sample_system(&[2.0, 1.0], &[1, 1], Variant::Square, &mut rng).is_err());
        assert!(sample_system(&[1.0], &[0], Variant::Square, &mut rng).is_err());
        assert!(sample_system(&[1.0], &[1, 1], Variant::Square, &mut rng).is_err());
    }

    #[test]
    fn step2_second_moment() {
        let t = build_table(4).unwrap();
        let mut rng = rng_stream(6, 0);
        let s = sample_system(&[1.0, 4.0], &[2, 1], Variant::Rectangular, &mut rng).unwrap();
        let tau = 2.5;
        let expected = 4.0 * (2.0 / (1.0f64 - tau).powi(2) + 1.0 / (4.0f64 - tau).powi(2));
        assert_relative_eq!(
            randomized_moment_step2(&s, &t, tau, 2).unwrap(),
            expected,
            max_relative = 1e-14
        );
        assert_eq!(randomized_moment_step2(&s, &t, tau, 3).unwrap(), 0.0);
    }

    #[test]
    fn na_check_is_clean_and_reproducible() {
        for variant in [Variant::Rectangular, Variant::Square] {
            let r = na_check(variant, 40, 4, 3).unwrap();
            assert!(r.mismatches.is_empty(), "{:?}", r.mismatches);
            assert!(r.nonzero > 0);
            assert_eq!(r, na_check(variant, 40, 4, 3).unwrap());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn two_moment_paths_agree(
            seed in 0u64..1000,
            m in proptest::collection::vec(1u32..4, 1..4),
            tau in -3.0f64..30.0,
            p in 1usize..5,
        ) {
            let t = build_table(4).unwrap();
            let lambdas: Vec<f64> = (0..m.len()).map(|k| 1.5 + 7.0 * k as f64).collect();
            prop_assume!(lambdas.iter().all(|l| (l - tau).abs() > 0.1));
            let mut rng = rng_stream(seed, 0);
            let s = sample_system(&lambdas, &m, Variant::Rectangular, &mut rng).unwrap();
            let a = randomized_moment_step2(&s, &t, tau, 2 * p).unwrap();
            let b = randomized_moment_series(&s, tau, 2 * p).unwrap();
            prop_assert!((a - b).abs() <= 1e-11 * a.abs());
        }

        #[test]
        fn brute_force_matches_formula(
            seed in 0u64..1000,
            m in proptest::collection::vec(1u32..3, 1..3),
            a in proptest::collection::vec(0u32..5, 1..3),
            square in any::<bool>(),
        ) {
            let k = m.len().min(a.len());
            let (m, a) = (&m[..k], &a[..k]);
            let variant = if square { Variant::Square } else { Variant::Rectangular };
            let lambdas: Vec<f64> = (0..k).map(|i| 1.0 + 3.3 * i as f64).collect();
            let mut rng = rng_stream(seed, 1);
            let s = sample_system(&lambdas, m, variant, &mut rng).unwrap();
            match na_bruteforce_checked(&s, a) {
                Ok(count) => {
                    let f = na_formula(a, &s.effective_multiplicities()).unwrap();
                    prop_assert_eq!(BigInt::from(count), f);
                }
                Err(Error::Budget(_)) => {}
                Err(e) => prop_assert!(false, "{}", e),
            }
        }

        #[test]
        fn odd_orders_vanish(seed in 0u64..1000, order in 0usize..5) {
            let t = build_table(4).unwrap();
            let mut rng = rng_stream(seed, 2);
            let s = sample_system(&[2.0, 9.0], &[1, 2], Variant::Square, &mut rng).unwrap();
            let o = 2 * order + 1;
            prop_assert_eq!(randomized_moment_step2(&s, &t, 4.0, o).unwrap(), 0.0);
            prop_assert_eq!(randomized_moment_series(&s, 4.0, o).unwrap(), 0.0);
        }
    }
}
