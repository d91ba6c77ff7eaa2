//! Integer partitions and the partition polynomials `P_p`, `Q_p`.
//!
//! For a partition `α = (α_1, …, α_p)` of `p` (so `Σ q α_q = p`) write
//! `‖α‖ = Σ α_q` and `α! = Π α_q!`. The two polynomial families are
//!
//! ```text
//! P_p(X) = Σ_α (−1)^{p−‖α‖} p!/α! Π X_q^{α_q}
//! Q_p(Y) = Σ_α (−1)^{p−‖α‖} (‖α‖−1)!/α! Π (Y_q/q!)^{α_q}
//! ```
//!
//! They are the coefficients of `exp(Σ (−1)^{q−1} X_q T^q)` and of
//! `ln(1 + Σ Y_p T^p/p!)`, so `Φ_p = (P_1, …, P_p)` and `Ψ_p = (Q_1, …, Q_p)`
//! are inverse polynomial maps. All coefficients are kept as exact rationals.

use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Orders above this are accepted but logged, since the partition count grows
/// quickly and float evaluation starts to lose digits.
pub const RECOMMENDED_P_MAX: usize = 12;

/// A partition of `weight`, stored by multiplicities: `parts[q-1] = α_q`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Partition {
    parts: Vec<u32>,
}

impl Partition {
    pub fn from_multiplicities(parts: Vec<u32>) -> Self {
        Partition { parts }
    }

    pub fn multiplicities(&self) -> &[u32] {
        &self.parts
    }

    /// `α_q` for `q ≥ 1`; zero beyond the stored range.
    pub fn alpha(&self, q: usize) -> u32 {
        self.parts.get(q - 1).copied().unwrap_or(0)
    }

    /// `Σ q α_q`.
    pub fn weight(&self) -> usize {
        self.parts
            .iter()
            .enumerate()
            .map(|(i, &a)| (i + 1) * a as usize)
            .sum()
    }

    /// `‖α‖ = Σ α_q`, the number of parts.
    pub fn length(&self) -> usize {
        self.parts.iter().map(|&a| a as usize).sum()
    }

    /// `α! = Π α_q!`.
    pub fn factorial(&self) -> BigInt {
        self.parts
            .iter()
            .fold(BigInt::one(), |acc, &a| acc * factorial(a as usize))
    }
}

/// All partitions of `p`, in increasing lexicographic order of
/// `(α_1, α_2, …, α_p)`. `p = 0` yields the single empty partition.
pub fn enumerate_partitions(p: usize) -> Vec<Partition> {
    fn rec(q: usize, p: usize, rem: usize, cur: &mut Vec<u32>, out: &mut Vec<Partition>) {
        if q > p {
            if rem == 0 {
                out.push(Partition::from_multiplicities(cur.clone()));
            }
            return;
        }
        for a in 0..=rem / q {
            let left = rem - a * q;
            // whatever is left must be a sum of parts larger than q
            if left != 0 && left < q + 1 {
                continue;
            }
            cur.push(a as u32);
            rec(q + 1, p, left, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(1, p, p, &mut Vec::with_capacity(p), &mut out);
    out
}

pub fn factorial(n: usize) -> BigInt {
    (2..=n).fold(BigInt::one(), |acc, k| acc * BigInt::from(k))
}

fn sign(exp: usize) -> BigInt {
    if exp.is_multiple_of(2) {
        BigInt::one()
    } else {
        -BigInt::one()
    }
}

/// One monomial `coeff · Π X_q^{α_q}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub partition: Partition,
    pub coeff: BigRational,
}

/// A polynomial in `X_1, …, X_order` given as a sum over `𝒫(order)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionPolynomial {
    pub order: usize,
    pub terms: Vec<Term>,
}

impl PartitionPolynomial {
    /// Evaluates at `x = (x_1, …, x_n)` with `n ≥ order`.
    pub fn eval<T: Scalar>(&self, x: &[T]) -> T {
        assert!(
            x.len() >= self.order,
            "need {} arguments, got {}",
            self.order,
            x.len()
        );
        let mut acc = T::zero();
        for term in &self.terms {
            let mut mono = T::from_rational(&term.coeff);
            for (i, &a) in term.partition.multiplicities().iter().enumerate() {
                if a > 0 {
                    mono = mono * x[i].powu(a);
                }
            }
            acc = acc + mono;
        }
        acc
    }

    /// Partial derivative with respect to `X_j` (1-based), evaluated at `x`.
    pub fn partial<T: Scalar>(&self, j: usize, x: &[T]) -> T {
        let mut acc = T::zero();
        for term in &self.terms {
            let aj = term.partition.alpha(j);
            if aj == 0 {
                continue;
            }
            let mut mono = T::from_rational(&(&term.coeff * BigRational::from_integer(aj.into())));
            for (i, &a) in term.partition.multiplicities().iter().enumerate() {
                let e = if i + 1 == j { a - 1 } else { a };
                if e > 0 {
                    mono = mono * x[i].powu(e);
                }
            }
            acc = acc + mono;
        }
        acc
    }

    pub fn coefficient(&self, partition: &Partition) -> Option<&BigRational> {
        self.terms
            .iter()
            .find(|t| &t.partition == partition)
            .map(|t| &t.coeff)
    }
}

/// Exact tables of `P_1..P_{p_max}`, `Q_1..Q_{p_max}` and the constants
/// `A_p = Q_p(1, 1/2!, …, 1/p!)`.
#[derive(Clone, Debug)]
pub struct CoefficientTable {
    p_max: usize,
    p: Vec<PartitionPolynomial>,
    q: Vec<PartitionPolynomial>,
    a: Vec<BigRational>,
    a_f64: Vec<f64>,
}

impl CoefficientTable {
    pub fn p_max(&self) -> usize {
        self.p_max
    }

    /// `P_p` for `1 ≤ p ≤ p_max`.
    pub fn p_poly(&self, p: usize) -> &PartitionPolynomial {
        &self.p[p - 1]
    }

    /// `Q_p` for `1 ≤ p ≤ p_max`.
    pub fn q_poly(&self, p: usize) -> &PartitionPolynomial {
        &self.q[p - 1]
    }

    /// `A_p` for `1 ≤ p ≤ p_max`.
    pub fn a(&self, p: usize) -> &BigRational {
        &self.a[p - 1]
    }

    pub fn a_f64(&self, p: usize) -> f64 {
        self.a_f64[p - 1]
    }

    pub fn a_all(&self) -> &[BigRational] {
        &self.a
    }

    fn check_order(&self, p: usize) -> Result<()> {
        if p == 0 || p > self.p_max {
            return Err(Error::Validation(format!(
                "order {p} outside table range 1..={}",
                self.p_max
            )));
        }
        Ok(())
    }
}

/// Builds the coefficient table up to `p_max`.
pub fn build_table(p_max: usize) -> Result<CoefficientTable> {
    if p_max == 0 {
        return Err(Error::Validation("p_max must be at least 1".into()));
    }
    if p_max > RECOMMENDED_P_MAX {
        log::warn!(
            "p_max = {p_max} exceeds {RECOMMENDED_P_MAX}; tables are exact but float evaluation may lose accuracy"
        );
    }
    let mut ps = Vec::with_capacity(p_max);
    let mut qs = Vec::with_capacity(p_max);
    for p in 1..=p_max {
        let pf = factorial(p);
        let mut p_terms = Vec::new();
        let mut q_terms = Vec::new();
        for alpha in enumerate_partitions(p) {
            let len = alpha.length();
            let s = sign(p - len);
            let afact = alpha.factorial();
            let p_coeff = BigRational::new(&s * &pf, afact.clone());
            let mut q_den = afact;
            for (i, &a) in alpha.multiplicities().iter().enumerate() {
                q_den *= factorial(i + 1).pow(a);
            }
            let q_coeff = BigRational::new(s * factorial(len - 1), q_den);
            p_terms.push(Term {
                partition: alpha.clone(),
                coeff: p_coeff,
            });
            q_terms.push(Term {
                partition: alpha,
                coeff: q_coeff,
            });
        }
        ps.push(PartitionPolynomial {
            order: p,
            terms: p_terms,
        });
        qs.push(PartitionPolynomial {
            order: p,
            terms: q_terms,
        });
    }
    let inv_fact: Vec<BigRational> = (1..=p_max)
        .map(|q| BigRational::new(BigInt::one(), factorial(q)))
        .collect();
    let a: Vec<BigRational> = qs.iter().map(|q| q.eval(&inv_fact)).collect();
    let a_f64 = a.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect();
    Ok(CoefficientTable {
        p_max,
        p: ps,
        q: qs,
        a,
        a_f64,
    })
}

/// Taylor coefficients of `ln I_0(2X)` in powers of `X²`.
///
/// Entry `p` is the coefficient of `X^{2p}`; entry 0 is zero. Computed from
/// `I_0(2X) = Σ X^{2p}/(p!)²` by the power-series logarithm, independently of
/// the partition tables.
pub fn bessel_log_series(p_max: usize) -> Vec<BigRational> {
    let n = p_max + 1;
    // u = I_0(2X) − 1 as a series in Y = X²
    let u: Vec<BigRational> = (0..n)
        .map(|p| {
            if p == 0 {
                BigRational::zero()
            } else {
                let f = factorial(p);
                BigRational::new(BigInt::one(), &f * &f)
            }
        })
        .collect();
    // L = ln(1+u) solves (1+u) L' = u'
    let mut l = vec![BigRational::zero(); n];
    for k in 1..n {
        // k L_k = k u_k − Σ_{j=1}^{k−1} j L_j u_{k−j}
        let mut acc = BigRational::from_integer(k.into()) * &u[k];
        for j in 1..k {
            acc -= BigRational::from_integer(j.into()) * &l[j] * &u[k - j];
        }
        l[k] = acc / BigRational::from_integer(k.into());
    }
    l
}

/// Exact check that `Ψ_p ∘ Φ_p` and `Φ_p ∘ Ψ_p` are the identity at
/// `max(20p, p²+1)` pseudo-random rational points.
pub fn compose_check(table: &CoefficientTable, p: usize) -> Result<bool> {
    let n = (20 * p).max(p * p + 1);
    let mut rng = crate::stats::rng_stream(0x5eed_c0de, p as u64);
    let points: Vec<Vec<BigRational>> = (0..n).map(|_| random_rational_point(&mut rng, p)).collect();
    compose_check_at(table, p, &points)
}

/// Same as [`compose_check`] at caller-supplied points.
pub fn compose_check_at(
    table: &CoefficientTable,
    p: usize,
    points: &[Vec<BigRational>],
) -> Result<bool> {
    table.check_order(p)?;
    for x in points {
        let phi: Vec<BigRational> = (1..=p).map(|q| table.p_poly(q).eval(x)).collect();
        let psi_phi: Vec<BigRational> = (1..=p).map(|q| table.q_poly(q).eval(&phi)).collect();
        if psi_phi[..] != x[..p] {
            return Ok(false);
        }
        let psi: Vec<BigRational> = (1..=p).map(|q| table.q_poly(q).eval(x)).collect();
        let phi_psi: Vec<BigRational> = (1..=p).map(|q| table.p_poly(q).eval(&psi)).collect();
        if phi_psi[..] != x[..p] {
            return Ok(false);
        }
    }
    Ok(true)
}

/// A rational with numerator in `[-50, 50]` and denominator in `[1, 20]`.
pub fn random_rational<R: Rng + ?Sized>(rng: &mut R) -> BigRational {
    let num: i64 = rng.gen_range(-50..=50);
    let den: i64 = rng.gen_range(1..=20);
    BigRational::new(num.into(), den.into())
}

pub fn random_rational_point<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<BigRational> {
    (0..dim).map(|_| random_rational(rng)).collect()
}

/// Jacobian matrix of `Φ_p` at `x`, exactly, with the absolute value of its
/// determinant. The matrix is verified to be lower triangular.
pub fn jacobian_phi(
    table: &CoefficientTable,
    p: usize,
    x: &[BigRational],
) -> Result<(Vec<Vec<BigRational>>, BigRational)> {
    table.check_order(p)?;
    let jac: Vec<Vec<BigRational>> = (1..=p)
        .map(|q| (1..=p).map(|j| table.p_poly(q).partial(j, x)).collect())
        .collect();
    let det = triangular_abs_det(&jac)?;
    Ok((jac, det))
}

/// Jacobian of `Φ'_p : (y_2, …, y_p) ↦ (P_2(1, y), …, P_p(1, y))`.
pub fn jacobian_phi_prime(
    table: &CoefficientTable,
    p: usize,
    y: &[BigRational],
) -> Result<(Vec<Vec<BigRational>>, BigRational)> {
    table.check_order(p)?;
    if p < 2 {
        return Err(Error::Validation("Φ' needs p ≥ 2".into()));
    }
    let mut x = Vec::with_capacity(p);
    x.push(BigRational::one());
    x.extend_from_slice(&y[..p - 1]);
    let jac: Vec<Vec<BigRational>> = (2..=p)
        .map(|q| (2..=p).map(|j| table.p_poly(q).partial(j, &x)).collect())
        .collect();
    let det = triangular_abs_det(&jac)?;
    Ok((jac, det))
}

fn triangular_abs_det(m: &[Vec<BigRational>]) -> Result<BigRational> {
    for (i, row) in m.iter().enumerate() {
        if row.iter().skip(i + 1).any(|v| !v.is_zero()) {
            return Err(Error::Numerical(format!(
                "Jacobian row {i} has entries above the diagonal"
            )));
        }
    }
    Ok(m.iter()
        .enumerate()
        .fold(BigRational::one(), |acc, (i, row)| acc * &row[i])
        .abs())
}

/// `Π_{q=lo}^{hi} q!` as a rational.
pub fn factorial_product(lo: usize, hi: usize) -> BigRational {
    BigRational::from_integer((lo..=hi).fold(BigInt::one(), |acc, q| acc * factorial(q)))
}

/// Numbers the partition polynomials can be evaluated over.
pub trait Scalar:
    Clone + Zero + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self>
{
    fn from_rational(r: &BigRational) -> Self;
    fn powu(&self, e: u32) -> Self;
}

impl Scalar for f64 {
    fn from_rational(r: &BigRational) -> Self {
        r.to_f64().unwrap_or(f64::NAN)
    }
    fn powu(&self, e: u32) -> Self {
        self.powi(e as i32)
    }
}

impl Scalar for BigRational {
    fn from_rational(r: &BigRational) -> Self {
        r.clone()
    }
    fn powu(&self, e: u32) -> Self {
        num_traits::pow(self.clone(), e as usize)
    }
}

/// Formats a rational as `num/den` (or `num` when the denominator is 1).
pub fn format_fraction(r: &BigRational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn parse_fraction(s: &str) -> Result<BigRational> {
    let bad = || Error::Validation(format!("not a rational number: {s:?}"));
    let s = s.trim();
    match s.split_once('/') {
        Some((n, d)) => {
            let n: BigInt = n.trim().parse().map_err(|_| bad())?;
            let d: BigInt = d.trim().parse().map_err(|_| bad())?;
            if d.is_zero() {
                return Err(bad());
            }
            Ok(BigRational::new(n, d))
        }
        None => Ok(BigRational::from_integer(s.parse().map_err(|_| bad())?)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn partition_counts() {
        let counts: Vec<usize> = (0..=12).map(|p| enumerate_partitions(p).len()).collect();
        assert_eq!(counts, vec![1, 1, 2, 3, 5, 7, 11, 15, 22, 30, 42, 56, 77]);
    }

    #[test]
    fn partitions_are_sorted_and_valid() {
        for p in 1..=10 {
            let parts = enumerate_partitions(p);
            for w in parts.windows(2) {
                assert!(w[0].multiplicities() < w[1].multiplicities());
            }
            assert!(parts.iter().all(|a| a.weight() == p));
        }
        let p4: Vec<Vec<u32>> = enumerate_partitions(4)
            .into_iter()
            .map(|a| a.multiplicities().to_vec())
            .collect();
        assert_eq!(
            p4,
            vec![
                vec![0, 0, 0, 1],
                vec![0, 2, 0, 0],
                vec![1, 0, 1, 0],
                vec![2, 1, 0, 0],
                vec![4, 0, 0, 0]
            ]
        );
    }

    #[test]
    fn low_order_polynomials() {
        let t = build_table(3).unwrap();
        let x = [r(3, 1), r(5, 1), r(7, 1)];
        // P_2 = X1² − 2 X2, Q_2 = X1²/2 − X2/2
        assert_eq!(t.p_poly(2).eval(&x), r(9 - 10, 1));
        assert_eq!(t.q_poly(2).eval(&x), r(9, 2) - r(5, 2));
        // P_3 = X1³ − 6 X1 X2 + 6 X3
        assert_eq!(t.p_poly(3).eval(&x), r(27 - 90 + 42, 1));
    }

    #[test]
    fn known_constants() {
        let t = build_table(3).unwrap();
        assert_eq!(t.a(1), &r(1, 1));
        assert_eq!(t.a(2), &r(1, 4));
        assert_eq!(t.a(3), &r(1, 9));
    }

    #[test]
    fn bessel_series_low_terms() {
        let s = bessel_log_series(3);
        assert_eq!(s, vec![r(0, 1), r(1, 1), r(-1, 4), r(1, 9)]);
    }

    #[test]
    fn leading_coefficients() {
        let t = build_table(8).unwrap();
        for p in 1..=8 {
            let top = Partition::from_multiplicities({
                let mut v = vec![0; p];
                v[0] = p as u32;
                v
            });
            assert_eq!(t.p_poly(p).coefficient(&top), Some(&r(1, 1)));
            assert_eq!(t.q_poly(p).coefficient(&top), Some(&r(1, p as i64)));
        }
    }

    #[test]
    fn p_at_one_zero_is_one() {
        let t = build_table(6).unwrap();
        for p in 1..=6 {
            let mut x = vec![r(0, 1); p];
            x[0] = r(1, 1);
            assert_eq!(t.p_poly(p).eval(&x), r(1, 1));
        }
    }

    #[test]
    fn compose_identity_low_orders() {
        let t = build_table(4).unwrap();
        for p in 1..=4 {
            assert!(compose_check(&t, p).unwrap());
        }
        let x = [r(2, 1), r(3, 1)];
        let q: Vec<_> = [r(2, 1), r(4, 1) - r(6, 1)].to_vec();
        assert_eq!(t.q_poly(2).eval(&q), x[1]);
    }

    #[test]
    fn jacobian_determinants() {
        let t = build_table(5).unwrap();
        let x = [r(1, 2), r(-3, 7), r(2, 1), r(5, 3), r(-1, 1)];
        for p in 1..=5 {
            let (_, det) = jacobian_phi(&t, p, &x).unwrap();
            assert_eq!(det, factorial_product(1, p));
        }
        for p in 2..=5 {
            let (_, det) = jacobian_phi_prime(&t, p, &x[1..]).unwrap();
            assert_eq!(det, factorial_product(2, p));
        }
    }

    #[test]
    fn out_of_range_order_is_rejected() {
        let t = build_table(3).unwrap();
        assert!(compose_check(&t, 4).is_err());
        assert!(build_table(0).is_err());
    }

    #[test]
    fn fraction_round_trip() {
        for s in ["3/4", "-7/2", "5", "0"] {
            assert_eq!(format_fraction(&parse_fraction(s).unwrap()), s);
        }
        assert!(parse_fraction("1/0").is_err());
        assert!(parse_fraction("x").is_err());
    }

    fn rational() -> impl Strategy<Value = BigRational> {
        (-40i64..=40, 1i64..=12).prop_map(|(n, d)| r(n, d))
    }

    proptest! {
        #[test]
        fn p_is_weighted_homogeneous(x in proptest::collection::vec(rational(), 5), s in rational()) {
            let t = build_table(5).unwrap();
            for p in 1..=5 {
                let scaled: Vec<BigRational> = x
                    .iter()
                    .enumerate()
                    .map(|(i, v)| v * num_traits::pow(s.clone(), i + 1))
                    .collect();
                let lhs = t.p_poly(p).eval(&scaled);
                let rhs = num_traits::pow(s.clone(), p) * t.p_poly(p).eval(&x);
                prop_assert_eq!(lhs, rhs);
            }
        }

        #[test]
        fn q_inverts_p(x in proptest::collection::vec(rational(), 4)) {
            let t = build_table(4).unwrap();
            prop_assert!(compose_check_at(&t, 4, &[x]).unwrap());
        }
    }
}
