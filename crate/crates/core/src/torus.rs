//! The flat torus `T_α = ℝ² / (αℤ ⊕ α⁻¹ℤ)` with a point scatterer.
//!
//! Dual lattice points are `ξ = (a/α, αb)` with `(a, b) ∈ ℤ²`, with Laplace
//! eigenvalue `4π²‖ξ‖²`. For rational `α² = P/Q` the quantity
//! `PQ‖ξ‖² = Q²a² + P²b²` is an integer, which is used as an exact key to
//! group points into eigenvalue levels.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::ops::RangeInclusive;

use num_complex::Complex64;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum allowed distance between `τ` and any eigenvalue.
pub const TAU_COLLISION_GUARD: f64 = 1e-9;

const DEFAULT_POINT_BUDGET: usize = 1_000_000;
const DEFAULT_WORK_BUDGET: u128 = 2_000_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticePoint {
    pub a: i64,
    pub b: i64,
    /// `Q²a² + P²b²`.
    pub key: i128,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub key: i128,
    pub lambda: f64,
    pub multiplicity: usize,
}

#[derive(Clone, Debug)]
pub struct TorusLattice {
    alpha_sq: Ratio<i64>,
    cutoff: Ratio<i64>,
    /// Nonzero points with `‖ξ‖² ≤ cutoff`, ordered by key then `(a, b)`.
    points: Vec<LatticePoint>,
    /// All levels including `λ_0 = 0`.
    levels: Vec<Level>,
}

impl TorusLattice {
    pub fn alpha_sq(&self) -> Ratio<i64> {
        self.alpha_sq
    }

    pub fn cutoff(&self) -> Ratio<i64> {
        self.cutoff
    }

    pub fn points(&self) -> &[LatticePoint] {
        &self.points
    }

    /// Levels `λ_0 = 0 < λ_1 < …` with their multiplicities `r_k`.
    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn positive_levels(&self) -> &[Level] {
        &self.levels[1..]
    }

    pub fn lambda_of_key(&self, key: i128) -> f64 {
        let scale = (*self.alpha_sq.numer() as f64) * (*self.alpha_sq.denom() as f64);
        4.0 * PI * PI * key as f64 / scale
    }

    pub fn lambda(&self, pt: &LatticePoint) -> f64 {
        self.lambda_of_key(pt.key)
    }

    pub fn alpha(&self) -> f64 {
        (*self.alpha_sq.numer() as f64 / *self.alpha_sq.denom() as f64).sqrt()
    }

    fn max_abs_components(&self) -> (i64, i64) {
        self.points
            .iter()
            .fold((0, 0), |(ma, mb), p| (ma.max(p.a.abs()), mb.max(p.b.abs())))
    }

    fn check_tau(&self, tau: f64) -> Result<()> {
        if !tau.is_finite() {
            return Err(Error::Validation("tau must be finite".into()));
        }
        if let Some(l) = self
            .positive_levels()
            .iter()
            .find(|l| (l.lambda - tau).abs() <= TAU_COLLISION_GUARD)
        {
            return Err(Error::Validation(format!(
                "tau = {tau} collides with eigenvalue {}",
                l.lambda
            )));
        }
        Ok(())
    }

    /// `(point, 1/(λ(ξ) − τ))` for every nonzero lattice point.
    pub fn weights(&self, tau: f64) -> Result<Vec<(LatticePoint, f64)>> {
        self.check_tau(tau)?;
        Ok(self
            .points
            .iter()
            .map(|p| (*p, 1.0 / (self.lambda(p) - tau)))
            .collect())
    }
}

/// Enumerates dual lattice points with `‖ξ‖² ≤ cutoff`.
///
/// The cutoff is on `‖ξ‖² = λ/(4π²)`; e.g. `cutoff = 2` on the square torus
/// keeps the levels `λ ∈ {0, 4π², 8π²}`.
pub fn build_lattice(alpha_sq: Ratio<i64>, cutoff: Ratio<i64>) -> Result<TorusLattice> {
    build_lattice_with_budget(alpha_sq, cutoff, DEFAULT_POINT_BUDGET)
}

pub fn build_lattice_with_budget(
    alpha_sq: Ratio<i64>,
    cutoff: Ratio<i64>,
    max_points: usize,
) -> Result<TorusLattice> {
    if *alpha_sq.numer() <= 0 || *alpha_sq.denom() <= 0 {
        return Err(Error::Validation("alpha² must be a positive rational".into()));
    }
    if *cutoff.numer() < 0 || *cutoff.denom() <= 0 {
        return Err(Error::Validation("cutoff must be non-negative".into()));
    }
    let (p, q) = (*alpha_sq.numer() as i128, *alpha_sq.denom() as i128);
    let (cn, cd) = (*cutoff.numer() as i128, *cutoff.denom() as i128);
    // key·cd ≤ cn·p·q  ⇔  ‖ξ‖² ≤ cutoff
    let bound = cn * p * q;
    let inside = |key: i128| key * cd <= bound;
    let mut points = Vec::new();
    let mut a: i128 = 0;
    while inside(q * q * a * a) {
        let mut b: i128 = 0;
        while inside(q * q * a * a + p * p * b * b) {
            let key = q * q * a * a + p * p * b * b;
            for (sa, sb) in signs(a, b) {
                if key != 0 {
                    points.push(LatticePoint {
                        a: (sa * a) as i64,
                        b: (sb * b) as i64,
                        key,
                    });
                }
            }
            if points.len() > max_points {
                return Err(Error::Budget(format!(
                    "more than {max_points} lattice points below the cutoff"
                )));
            }
            b += 1;
        }
        a += 1;
    }
    points.sort_by_key(|pt| (pt.key, pt.a, pt.b));
    let mut lattice = TorusLattice {
        alpha_sq,
        cutoff,
        points,
        levels: Vec::new(),
    };
    let mut levels = vec![Level {
        key: 0,
        lambda: 0.0,
        multiplicity: 1,
    }];
    for pt in &lattice.points {
        match levels.last_mut() {
            Some(l) if l.key == pt.key => l.multiplicity += 1,
            _ => levels.push(Level {
                key: pt.key,
                lambda: lattice.lambda_of_key(pt.key),
                multiplicity: 1,
            }),
        }
    }
    lattice.levels = levels;
    Ok(lattice)
}

fn signs(a: i128, b: i128) -> Vec<(i128, i128)> {
    match (a == 0, b == 0) {
        (true, true) => vec![(1, 1)],
        (true, false) => vec![(1, 1), (1, -1)],
        (false, true) => vec![(1, 1), (-1, 1)],
        (false, false) => vec![(1, 1), (1, -1), (-1, 1), (-1, -1)],
    }
}

/// `M^p_τ`: the sum over `p`-tuples of nonzero lattice points with zero sum of
/// `Π 1/(λ(ξ_j) − τ)`.
///
/// The tuple is split into halves of sizes `⌈p/2⌉` and `⌊p/2⌋`; each half is
/// aggregated into a map from partial sum to total weight, and the halves are
/// matched on opposite partial sums.
pub fn deterministic_moment(lattice: &TorusLattice, tau: f64, p: usize) -> Result<f64> {
    let weights = lattice.weights(tau)?;
    if p == 0 {
        return Ok(1.0);
    }
    let h1 = p.div_ceil(2);
    let h2 = p / 2;
    let mut layers = vec![BTreeMap::from([((0i64, 0i64), 1.0f64)])];
    for j in 0..h1 {
        let prev = &layers[j];
        let work = prev.len() as u128 * weights.len() as u128;
        if work > DEFAULT_WORK_BUDGET {
            return Err(Error::Budget(format!(
                "tuple aggregation needs {work} steps"
            )));
        }
        let mut next: BTreeMap<(i64, i64), f64> = BTreeMap::new();
        for (&(sa, sb), &w) in prev {
            for (pt, wx) in &weights {
                *next.entry((sa + pt.a, sb + pt.b)).or_insert(0.0) += w * wx;
            }
        }
        layers.push(next);
    }
    let (left, right) = (&layers[h1], &layers[h2]);
    Ok(left
        .iter()
        .filter_map(|(&(sa, sb), &w)| right.get(&(-sa, -sb)).map(|v| w * v))
        .sum())
}

/// `Σ_k r_k / (λ_k − τ)²` over the positive levels.
pub fn second_moment_formula(lattice: &TorusLattice, tau: f64) -> Result<f64> {
    lattice.check_tau(tau)?;
    Ok(lattice
        .positive_levels()
        .iter()
        .map(|l| l.multiplicity as f64 / (l.lambda - tau).powi(2))
        .sum())
}

/// `f_τ = Σ_ξ e^{2πi⟨ξ, x⟩}/(λ(ξ) − τ)` truncated to the lattice.
#[derive(Clone, Debug)]
pub struct TruncatedEigenfunction {
    alpha: f64,
    tau: f64,
    terms: Vec<(LatticePoint, f64)>,
}

impl TruncatedEigenfunction {
    pub fn new(lattice: &TorusLattice, tau: f64) -> Result<Self> {
        Ok(TruncatedEigenfunction {
            alpha: lattice.alpha(),
            tau,
            terms: lattice.weights(tau)?,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn terms(&self) -> &[(LatticePoint, f64)] {
        &self.terms
    }

    /// Value at `x = (x_1, x_2)` in torus coordinates.
    pub fn eval(&self, x: [f64; 2]) -> Complex64 {
        self.terms
            .iter()
            .map(|(pt, w)| {
                let phase =
                    2.0 * PI * (pt.a as f64 * x[0] / self.alpha + pt.b as f64 * self.alpha * x[1]);
                Complex64::from_polar(*w, phase)
            })
            .sum()
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GridMoment {
    pub value: f64,
    pub grid_size: usize,
    /// Largest imaginary part of `f_τ` seen on the grid.
    pub max_imag: f64,
}

/// Smallest grid size for which the `N × N` average of `f_τ^p` is exact.
pub fn exact_grid_size(lattice: &TorusLattice, p: usize) -> usize {
    let (ma, mb) = lattice.max_abs_components();
    p * ma.max(mb) as usize + 1
}

/// Average of `f_τ^p` over the grid `x = (α i/N, j/(αN))`.
///
/// At those points `⟨ξ, x⟩ = (ai + bj)/N`, so the average picks out exactly
/// the tuples whose components sum to zero modulo `N`; with
/// `N > p·max|component|` these are the tuples with zero sum.
pub fn grid_moment(
    lattice: &TorusLattice,
    tau: f64,
    p: usize,
    grid_size: Option<usize>,
) -> Result<GridMoment> {
    let min_n = exact_grid_size(lattice, p);
    let n = grid_size.unwrap_or(min_n);
    if n < min_n {
        return Err(Error::Validation(format!(
            "grid size {n} too small for exact order-{p} average (need ≥ {min_n})"
        )));
    }
    let f = TruncatedEigenfunction::new(lattice, tau)?;
    let table: Vec<Complex64> = (0..n)
        .map(|k| Complex64::from_polar(1.0, 2.0 * PI * k as f64 / n as f64))
        .collect();
    let ni = n as i64;
    let mut total = 0.0;
    let mut max_imag = 0.0_f64;
    for i in 0..ni {
        let mut row = 0.0;
        for j in 0..ni {
            let v: Complex64 = f
                .terms
                .iter()
                .map(|(pt, w)| table[(pt.a * i + pt.b * j).rem_euclid(ni) as usize] * *w)
                .sum();
            max_imag = max_imag.max(v.im.abs());
            row += v.re.powi(p as i32);
        }
        total += row;
    }
    Ok(GridMoment {
        value: total / (n * n) as f64,
        grid_size: n,
        max_imag,
    })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct NewEigenvalue {
    pub k: usize,
    pub tau: f64,
    /// Estimated shift of the root from the series truncation.
    pub truncation_estimate: f64,
}

/// Roots `τ_k ∈ (λ_{k−1}, λ_k)` of
/// `Σ_j r_j (1/(λ_j − τ) − λ_j/(λ_j² + 1)) = tan(φ/2) Σ_j r_j/(λ_j² + 1)`
/// with the series truncated after level `max(k_range) + reg_terms`.
pub fn solve_new_eigenvalues(
    lattice: &TorusLattice,
    phi: f64,
    k_range: RangeInclusive<usize>,
    reg_terms: usize,
) -> Result<Vec<NewEigenvalue>> {
    if !(phi > -PI && phi < PI) {
        return Err(Error::Validation(format!("phi = {phi} outside (−π, π)")));
    }
    let last = k_range.end() + reg_terms;
    let levels = lattice.levels();
    if levels.len() <= last {
        return Err(Error::Validation(format!(
            "lattice has {} levels, need {} for k ≤ {} with {reg_terms} regularization terms",
            levels.len(),
            last + 1,
            k_range.end()
        )));
    }
    let used = &levels[..=last];
    let rhs = (phi / 2.0).tan() * used.iter().map(|l| l.multiplicity as f64 / (l.lambda.powi(2) + 1.0)).sum::<f64>();
    let g = |tau: f64| -> f64 {
        used.iter()
            .map(|l| {
                let r = l.multiplicity as f64;
                r * (1.0 / (l.lambda - tau) - l.lambda / (l.lambda.powi(2) + 1.0))
            })
            .sum::<f64>()
            - rhs
    };
    let dg = |tau: f64| -> f64 {
        used.iter()
            .map(|l| l.multiplicity as f64 / (l.lambda - tau).powi(2))
            .sum()
    };
    let lambda_cut = used[last].lambda;
    let mut out = Vec::new();
    for k in k_range {
        let (mut lo, mut hi) = if k == 0 {
            let mut lo = -1.0;
            while g(lo) > 0.0 {
                lo *= 2.0;
                if lo < -1e300 {
                    return Err(Error::Numerical("no root below λ_0 for this truncation".into()));
                }
            }
            (lo, 0.0)
        } else {
            (used[k - 1].lambda, used[k].lambda)
        };
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let tau = 0.5 * (lo + hi);
        let tail = (tau.abs() + (phi / 2.0).tan().abs()) / (4.0 * PI * lambda_cut);
        out.push(NewEigenvalue {
            k,
            tau,
            truncation_estimate: tail / dg(tau),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn square(cut: i64) -> TorusLattice {
        build_lattice(Ratio::from_integer(1), Ratio::from_integer(cut)).unwrap()
    }

    #[test]
    fn square_levels() {
        let l = square(2);
        let lv: Vec<(f64, usize)> = l.levels().iter().map(|v| (v.lambda, v.multiplicity)).collect();
        let fp = 4.0 * PI * PI;
        assert_eq!(lv.len(), 3);
        assert_eq!(lv[0], (0.0, 1));
        assert_relative_eq!(lv[1].0, fp, max_relative = 1e-15);
        assert_eq!(lv[1].1, 4);
        assert_relative_eq!(lv[2].0, 2.0 * fp, max_relative = 1e-15);
        assert_eq!(lv[2].1, 4);
    }

    #[test]
    fn cutoff_below_first_level() {
        let l = build_lattice(Ratio::from_integer(1), Ratio::new(1, 2)).unwrap();
        assert_eq!(l.levels().len(), 1);
        assert_eq!(l.levels()[0].multiplicity, 1);
        assert!(l.points().is_empty());
    }

    #[test]
    fn irrational_alpha_levels() {
        let l = build_lattice(Ratio::from_integer(3), Ratio::from_integer(4)).unwrap();
        // ‖ξ‖² = a²/3 + 3b²
        let fp = 4.0 * PI * PI;
        let first = l.positive_levels()[0];
        assert_relative_eq!(first.lambda, fp / 3.0, max_relative = 1e-15);
        assert_eq!(first.multiplicity, 2);
        let generic = l.positive_levels().iter().find(|v| v.key == 1 + 9).unwrap();
        assert_eq!(generic.multiplicity, 4);
    }

    #[test]
    fn r_sum_matches_point_count() {
        let l = square(30);
        let total: usize = l.levels().iter().map(|v| v.multiplicity).sum();
        assert_eq!(total, l.points().len() + 1);
    }

    #[test]
    fn collision_is_rejected() {
        let l = square(2);
        let lam = l.positive_levels()[0].lambda;
        assert!(deterministic_moment(&l, lam, 2).is_err());
        assert!(deterministic_moment(&l, lam + 1e-3, 2).is_ok());
    }

    #[test]
    fn small_torus_moments_agree() {
        let l = square(10);
        let tau = 17.0;
        for p in 2..=4 {
            let tuple = deterministic_moment(&l, tau, p).unwrap();
            let grid = grid_moment(&l, tau, p, None).unwrap();
            assert_relative_eq!(tuple, grid.value, max_relative = 1e-11);
            assert!(grid.max_imag < 1e-12);
        }
        assert_eq!(deterministic_moment(&l, tau, 1).unwrap(), 0.0);
        assert_relative_eq!(
            deterministic_moment(&l, tau, 2).unwrap(),
            second_moment_formula(&l, tau).unwrap(),
            max_relative = 1e-13
        );
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let l = square(10);
        let n = exact_grid_size(&l, 3);
        assert!(grid_moment(&l, 17.0, 3, Some(n - 1)).is_err());
    }

    #[test]
    fn new_eigenvalues_interlace() {
        let l = square(60);
        let roots = solve_new_eigenvalues(&l, 0.3, 1..=5, 20).unwrap();
        for r in &roots {
            let lv = l.levels();
            assert!(lv[r.k - 1].lambda < r.tau && r.tau < lv[r.k].lambda);
        }
    }

    #[test]
    fn new_eigenvalues_increase_with_phi() {
        let l = square(60);
        let a = solve_new_eigenvalues(&l, -1.0, 1..=4, 20).unwrap();
        let b = solve_new_eigenvalues(&l, 1.0, 1..=4, 20).unwrap();
        let c = solve_new_eigenvalues(&l, 3.1, 1..=4, 20).unwrap();
        for i in 0..4 {
            assert!(a[i].tau < b[i].tau && b[i].tau < c[i].tau);
            let upper = l.levels()[i + 1].lambda;
            assert!((upper - c[i].tau) / upper < 1e-2);
        }
    }

    #[test]
    fn too_few_levels_is_rejected() {
        let l = square(2);
        assert!(solve_new_eigenvalues(&l, 0.0, 1..=2, 5).is_err());
        assert!(solve_new_eigenvalues(&l, PI, 1..=1, 0).is_err());
    }

    proptest! {
        #[test]
        fn levels_are_strictly_increasing(p in 1i64..6, q in 1i64..6, cut in 1i64..40) {
            let l = build_lattice(Ratio::new(p, q), Ratio::from_integer(cut)).unwrap();
            for w in l.levels().windows(2) {
                prop_assert!(w[0].lambda < w[1].lambda);
                prop_assert!(w[0].key < w[1].key);
            }
            for pt in l.points() {
                prop_assert!(l.points().iter().any(|o| o.a == -pt.a && o.b == -pt.b));
            }
        }

        #[test]
        fn cubic_tuple_sum_matches_grid(cut in 1i64..20, tau in -50.0f64..30.0) {
            let l = square(cut);
            prop_assume!(l.positive_levels().iter().all(|v| (v.lambda - tau).abs() > 1e-3));
            let m3 = deterministic_moment(&l, tau, 3).unwrap();
            let g = grid_moment(&l, tau, 3, None).unwrap().value;
            prop_assert!((m3 - g).abs() <= 1e-10 * m3.abs().max(1e-12) + 1e-14);
        }
    }
}
