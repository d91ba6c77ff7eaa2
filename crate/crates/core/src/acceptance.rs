//! The acceptance suite: twelve checks with runtime budgets, each reporting a
//! pass/fail line.

use std::time::{Duration, Instant};

use num_rational::Ratio;
use num_traits::One;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combinatorics::{
    bessel_log_series, build_table, compose_check_at, factorial_product, jacobian_phi, jacobian_phi_prime,
    random_rational_point,
};
use crate::error::Result;
use crate::limit_laws::{levy_cdf, levy_density, marginal_cf, psi, sample_r, stable_params, DensityInverter, LimitIndex, LimitSampling};
use crate::spectrum::{
    default_window, randomized_even_moment, randomized_even_moment_poly, run_simulation,
    sample_spectrum, spectral_sums, MultiplicityFunction, SimulationConfig, SpectralSums,
};
use crate::stats::{ks_critical_value, ks_one_sample, ks_two_sample, rng_stream, EmpiricalDistribution};
use crate::torus::{build_lattice, deterministic_moment, grid_moment, second_moment_formula};
use crate::wavevector::{na_check, randomized_moment_series, randomized_moment_step2, sample_system, Variant};
use crate::weyl::{clt_experiment, lln_experiment, lln_trend_holds, moment_agreement, sample_counts};

const SEED: u64 = 0xacce_97ed;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: String,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub elapsed_secs: f64,
    pub budget_secs: f64,
}

impl std::fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} [{}] {} ({:.2}s of {:.0}s): {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.elapsed_secs,
            self.budget_secs,
            self.detail
        )
    }
}

struct Check {
    passed: bool,
    detail: String,
}

fn check(passed: bool, detail: impl Into<String>) -> Check {
    Check {
        passed,
        detail: detail.into(),
    }
}

type Runner = fn() -> Result<Vec<(&'static str, &'static str, Check)>>;

struct Criterion {
    id: &'static str,
    budget: Duration,
    run: Runner,
}

fn single(id: &'static str, name: &'static str, c: Result<Check>) -> Result<Vec<(&'static str, &'static str, Check)>> {
    c.map(|c| vec![(id, name, c)])
}

fn criteria() -> Vec<Criterion> {
    vec![
        Criterion {
            id: "1",
            budget: Duration::from_secs(5),
            run: || single("1", "exact A_p agreement", exact_a_p()),
        },
        Criterion {
            id: "2",
            budget: Duration::from_secs(10),
            run: || single("2", "composition identities and Jacobians", composition()),
        },
        Criterion {
            id: "3",
            budget: Duration::from_secs(120),
            run: || single("3", "N_a brute force equals closed form", na_equivalence()),
        },
        Criterion {
            id: "4",
            budget: Duration::from_secs(60),
            run: || single("4", "deterministic torus moments", torus_oracle()),
        },
        Criterion {
            id: "5",
            budget: Duration::from_secs(30),
            run: || single("5", "two-path moment identity", two_path_moments()),
        },
        Criterion {
            id: "6",
            budget: Duration::from_secs(300),
            run: random_weyl_law,
        },
        Criterion {
            id: "7",
            budget: Duration::from_secs(180),
            run: || single("7", "stable first marginal and support invariants", stable_marginal()),
        },
        Criterion {
            id: "8",
            budget: Duration::from_secs(60),
            run: || single("8", "characteristic function cross-check", psi_cross_check()),
        },
        Criterion {
            id: "9",
            budget: Duration::from_secs(120),
            run: || single("9", "density inversion", density_inversion()),
        },
        Criterion {
            id: "10",
            budget: Duration::from_secs(300),
            run: || single("10", "Gaussian moment ratio for growing multiplicity", infinite_l()),
        },
        Criterion {
            id: "11",
            budget: Duration::from_secs(300),
            run: || single("11", "finite-l moment ratio law", finite_l()),
        },
        Criterion {
            id: "12",
            budget: Duration::from_secs(5),
            run: || single("12", "odd moments vanish", odd_moments()),
        },
    ]
}

pub fn criterion_ids() -> Vec<&'static str> {
    criteria().iter().map(|c| c.id).collect()
}

/// Runs the selected criteria (all when `only` is empty) in order. Each
/// result fails if its check fails or its runtime exceeds the budget; a
/// criterion with sub-checks shares one budget among them.
pub fn run(only: &[String]) -> Vec<CriterionResult> {
    let mut out = Vec::new();
    for c in criteria() {
        if !only.is_empty() && !only.iter().any(|o| o == c.id) {
            continue;
        }
        let start = Instant::now();
        let res = (c.run)();
        let elapsed = start.elapsed();
        let within = elapsed <= c.budget;
        match res {
            Ok(checks) => {
                for (id, name, ch) in checks {
                    let mut detail = ch.detail;
                    if !within {
                        detail.push_str("; runtime budget exceeded");
                    }
                    out.push(CriterionResult {
                        id: id.into(),
                        name: name.into(),
                        passed: ch.passed && within,
                        detail,
                        elapsed_secs: elapsed.as_secs_f64(),
                        budget_secs: c.budget.as_secs_f64(),
                    });
                }
            }
            Err(e) => out.push(CriterionResult {
                id: c.id.into(),
                name: "error".into(),
                passed: false,
                detail: e.to_string(),
                elapsed_secs: elapsed.as_secs_f64(),
                budget_secs: c.budget.as_secs_f64(),
            }),
        }
    }
    out
}

fn exact_a_p() -> Result<Check> {
    let table = build_table(12)?;
    let series = bessel_log_series(12);
    let mismatches: Vec<usize> = (1..=12)
        .filter(|&p| {
            let signed = if p % 2 == 1 { series[p].clone() } else { -series[p].clone() };
            table.a(p) != &signed
        })
        .collect();
    let positive = (1..=12).all(|p| table.a(p) > &num_rational::BigRational::from_integer(0.into()));
    let a1 = table.a(1).is_one();
    Ok(check(
        mismatches.is_empty() && positive && a1,
        format!("mismatches at p = {mismatches:?}; A_1 = 1: {a1}; all positive: {positive}"),
    ))
}

fn composition() -> Result<Check> {
    let table = build_table(6)?;
    let mut failures = Vec::new();
    for p in 1..=6 {
        let mut rng = rng_stream(SEED, 200 + p as u64);
        let points: Vec<_> = (0..200).map(|_| random_rational_point(&mut rng, p)).collect();
        if !compose_check_at(&table, p, &points)? {
            failures.push(format!("compose p={p}"));
        }
        for _ in 0..10 {
            let x = random_rational_point(&mut rng, p);
            if jacobian_phi(&table, p, &x)?.1 != factorial_product(1, p) {
                failures.push(format!("jacobian p={p}"));
            }
            if p >= 2 && jacobian_phi_prime(&table, p, &x[..p - 1])?.1 != factorial_product(2, p) {
                failures.push(format!("reduced jacobian p={p}"));
            }
        }
    }
    Ok(check(
        failures.is_empty(),
        format!("p = 1..6, 200 points and 10 Jacobians each; failures: {failures:?}"),
    ))
}

fn na_equivalence() -> Result<Check> {
    let mut lines = Vec::new();
    let mut ok = true;
    for (vi, variant) in [Variant::Rectangular, Variant::Square].into_iter().enumerate() {
        let report = na_check(variant, 1000, 3, SEED ^ (0x30 + vi as u64))?;
        ok &= report.mismatches.is_empty();
        lines.push(format!(
            "{variant}: {} mismatches in 1000 ({} nonzero counts)",
            report.mismatches.len(),
            report.nonzero
        ));
    }
    Ok(check(ok, lines.join("; ")))
}

fn torus_oracle() -> Result<Check> {
    let lattice = build_lattice(Ratio::from_integer(1), Ratio::from_integer(90))?;
    let n = lattice.points().len();
    let tau = 17.0;
    let mut worst: f64 = 0.0;
    for p in 2..=4 {
        let tuple = deterministic_moment(&lattice, tau, p)?;
        let grid = grid_moment(&lattice, tau, p, None)?.value;
        worst = worst.max((tuple - grid).abs() / tuple.abs().max(grid.abs()));
    }
    let m2 = deterministic_moment(&lattice, tau, 2)?;
    let closed = second_moment_formula(&lattice, tau)?;
    let rel2 = (m2 - closed).abs() / closed.abs();
    Ok(check(
        n <= 300 && worst <= 1e-10 && rel2 <= 1e-12,
        format!("{n} lattice points; tuple vs grid worst rel {worst:.2e}; p=2 vs Σr/(λ−τ)² rel {rel2:.2e}"),
    ))
}

/// Spectral sums of a random finite spectrum around `τ = 0`.
fn random_sums<R: Rng>(rng: &mut R, p: usize) -> SpectralSums {
    let n = rng.gen_range(1..=30);
    let pts: Vec<(f64, f64)> = (0..n)
        .map(|_| {
            let d: f64 = rng.gen_range(0.05..20.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            (d, rng.gen_range(1.0..4.0))
        })
        .collect();
    SpectralSums::from_values(
        (1..=p)
            .map(|q| pts.iter().map(|(d, m)| m / d.powi(2 * q as i32)).sum())
            .collect(),
    )
}

fn two_path_moments() -> Result<Check> {
    let table = build_table(5)?;
    let worst = (0..10_000u64)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let mut rng = rng_stream(SEED ^ 0x5, i);
            let p = rng.gen_range(1..=5);
            let sums = random_sums(&mut rng, p);
            let a = randomized_even_moment(&sums, &table, p)?;
            let b = randomized_even_moment_poly(&sums, &table, p)?;
            Ok((a - b).abs() / a.abs().max(b.abs()))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0f64, f64::max);
    Ok(check(worst <= 1e-12, format!("10^4 inputs, p ≤ 5, worst relative difference {worst:.2e}")))
}

fn families() -> [MultiplicityFunction; 3] {
    [
        MultiplicityFunction::Constant { c: 1.0 },
        MultiplicityFunction::LogPow { c: 1.0, a: 0.5 },
        MultiplicityFunction::Pow { c: 1.0, a: 1.0 / 3.0 },
    ]
}

fn random_weyl_law() -> Result<Vec<(&'static str, &'static str, Check)>> {
    let mut a_ok = true;
    let mut a_lines = Vec::new();
    let mut b_ok = true;
    let mut b_lines = Vec::new();
    for (i, m) in families().iter().enumerate() {
        let rec = sample_counts(m, &[1e5], 2000, SEED ^ (0x60 + i as u64))?;
        let row = &moment_agreement(&rec, m)?[0];
        a_ok &= rec.is_monotone() && row.mean_z.abs() < 4.0 && row.variance_z.abs() < 5.0;
        a_lines.push(format!("{m}: mean z {:.2}, variance z {:.2}", row.mean_z, row.variance_z));
        let clt = clt_experiment(m, 1e5, 2000, SEED ^ (0x70 + i as u64))?;
        b_ok &= clt.ks_distance < 0.04;
        b_lines.push(format!("{m}: KS {:.4}", clt.ks_distance));
    }
    let m = MultiplicityFunction::Pow { c: 1.0, a: 1.0 / 3.0 };
    let rows = lln_experiment(&m, &[1e4, 1e5, 1e6], 50, SEED ^ 0x80)?;
    let c_lines: Vec<String> = rows
        .iter()
        .map(|r| format!("λ={:e}: max {:.4}, median {:.4}", r.lambda, r.max_rel_dev, r.median_rel_dev))
        .collect();
    Ok(vec![
        ("6a", "Weyl law mean and variance", check(a_ok, a_lines.join("; "))),
        ("6b", "Weyl law CLT", check(b_ok, b_lines.join("; "))),
        (
            "6c",
            "Weyl law LLN trend",
            check(
                lln_trend_holds(&rows, 0.02),
                format!("{} (m = {m}, 50 replicas, need decreasing and < 0.02)", c_lines.join("; ")),
            ),
        ),
    ])
}

fn stable_marginal() -> Result<Check> {
    let m = MultiplicityFunction::Constant { c: 1.0 };
    let tau = 1e5;
    let window = default_window(tau, 0.5)?;
    let sums = (0..5000u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_stream(SEED ^ 0x7, i);
            let spectrum = sample_spectrum(&m, window, &mut rng)?;
            spectral_sums(&spectrum, tau, 4)
        })
        .collect::<Result<Vec<_>>>()?;
    let s1 = EmpiricalDistribution::new(sums.iter().map(|s| s.s(1)).collect())?;
    let ks = ks_one_sample(&s1, levy_cdf);
    let support = sums.iter().filter(|s| s.support_holds()).count();
    let in_k = sums.iter().filter(|s| s.quotient_in_k()).count();
    Ok(check(
        ks < 0.05 && support == sums.len() && in_k == sums.len(),
        format!("KS {ks:.4}; support {support}/5000; quotient in K {in_k}/5000"),
    ))
}

fn psi_cross_check() -> Result<Check> {
    let params = stable_params(1)?;
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let mag = 10f64.powf(-4.0 + 10.0 * i as f64 / 99.0);
        let x = if i % 2 == 0 { mag } else { -mag };
        let v = psi(&[x], 1e-10)?.value;
        worst = worst.max((v - marginal_cf(&params, x)).norm());
    }
    let origin = psi(&[0.0, 0.0, 0.0], 1e-10)?.value;
    let mut rng = rng_stream(SEED ^ 0x8, 0);
    let points: Vec<Vec<f64>> = (0..1000)
        .map(|_| {
            let p = rng.gen_range(1..=3);
            (0..p).map(|_| rng.gen_range(-10.0..10.0)).collect()
        })
        .collect();
    let maxabs = points
        .par_iter()
        .map(|x| psi(x, 1e-9).map(|v| v.value.norm()))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0f64, f64::max);
    let unit = origin == num_complex::Complex64::new(1.0, 0.0);
    Ok(check(
        worst <= 1e-6 && unit && maxabs <= 1.0 + 1e-12,
        format!("p=1 worst abs error {worst:.2e}; ψ(0) = 1: {unit}; max |ψ| over 1000 points {maxabs:.6}"),
    ))
}

fn density_inversion() -> Result<Check> {
    let inv = DensityInverter::new(1, 0.05, 1e-10)?;
    let mut worst: f64 = 0.0;
    for t in [0.002, 0.005, 0.01, 0.05] {
        worst = worst.max((inv.density(t)? - levy_density(t)).abs() / levy_density(t));
    }
    let mut neg: f64 = 0.0;
    for t in [-0.05, -0.02, -0.01, -0.005, -0.001] {
        neg = neg.max(inv.density(t)?);
    }
    Ok(check(
        worst <= 0.02 && neg <= 1e-3,
        format!("worst relative error {worst:.2e}; max density at t<0 {neg:.2e}"),
    ))
}

fn ratio_samples(m: MultiplicityFunction, tau: f64, replicas: usize, seed: u64) -> Result<Vec<f64>> {
    let table = build_table(2)?;
    let cfg = SimulationConfig {
        multiplicity: m,
        tau,
        p_max: 2,
        replicas,
        window_frac: 0.5,
        seed,
    };
    Ok(run_simulation(&cfg, &table)?.into_iter().map(|r| r.normalized[0]).collect())
}

fn infinite_l() -> Result<Check> {
    let m = MultiplicityFunction::Pow { c: 1.0, a: 1.0 / 3.0 };
    let mut medians = Vec::new();
    let mut iqrs = Vec::new();
    for (i, tau) in [1e4, 1e6, 1e8].into_iter().enumerate() {
        let emp = EmpiricalDistribution::new(ratio_samples(m, tau, 500, SEED ^ (0xa0 + i as u64))?)?;
        medians.push(emp.median());
        iqrs.push(emp.iqr());
    }
    let dist: Vec<f64> = medians.iter().map(|v| (v - 3.0).abs()).collect();
    let monotone = dist.windows(2).all(|w| w[1] < w[0]);
    let shrinking = iqrs.windows(2).all(|w| w[1] < w[0]);
    Ok(check(
        monotone && shrinking && dist[2] < 0.2,
        format!("medians {medians:.4?}; IQRs {iqrs:.4?}"),
    ))
}

fn finite_l() -> Result<Check> {
    let table = build_table(2)?;
    let ratios = ratio_samples(MultiplicityFunction::Constant { c: 1.0 }, 1e6, 5000, SEED ^ 0xb0)?;
    let sampling = |seed| LimitSampling {
        proxy_tau: 1e5,
        window_frac: 0.5,
        seed,
    };
    let r1 = sample_r(&table, LimitIndex::Finite(1.0), 2, 5000, &sampling(SEED ^ 0xb1))?;
    let three_r = EmpiricalDistribution::new(r1.iter().map(|r| 3.0 * r[0]).collect())?;
    let ks = ks_two_sample(&EmpiricalDistribution::new(ratios)?, &three_r);

    let a = sample_r(&table, LimitIndex::Finite(1.0), 2, 10_000, &sampling(SEED ^ 0xb2))?;
    let b = sample_r(&table, LimitIndex::Finite(2.0), 2, 10_000, &sampling(SEED ^ 0xb3))?;
    let sep = ks_two_sample(
        &EmpiricalDistribution::new(a.iter().map(|r| r[0]).collect())?,
        &EmpiricalDistribution::new(b.iter().map(|r| r[0]).collect())?,
    );
    let crit = ks_critical_value(0.01, 10_000, Some(10_000));
    Ok(check(
        ks < 0.05 && sep > crit,
        format!("M⁴/(M²)² vs 3R_2(1) KS {ks:.4}; R(1) vs R(2) KS {sep:.4} against critical {crit:.4}"),
    ))
}

fn odd_moments() -> Result<Check> {
    let table = build_table(5)?;
    let mut nonzero = 0;
    for i in 0..100u64 {
        let mut rng = rng_stream(SEED ^ 0xc, i);
        let k = rng.gen_range(1..=4);
        let mut lambdas = Vec::new();
        let mut l = 0.0;
        for _ in 0..k {
            l += rng.gen_range(0.5..10.0);
            lambdas.push(l);
        }
        let m: Vec<u32> = (0..k).map(|_| rng.gen_range(1..=3)).collect();
        let variant = if rng.gen_bool(0.5) { Variant::Square } else { Variant::Rectangular };
        let sys = sample_system(&lambdas, &m, variant, &mut rng)?;
        let tau = loop {
            let t = rng.gen_range(-5.0..l + 5.0);
            if lambdas.iter().all(|x| (x - t).abs() > 1e-3) {
                break t;
            }
        };
        for order in [1, 3, 5, 7, 9] {
            if randomized_moment_step2(&sys, &table, tau, order)? != 0.0 {
                nonzero += 1;
            }
            if order <= 5 && randomized_moment_series(&sys, tau, order)? != 0.0 {
                nonzero += 1;
            }
        }
    }
    Ok(check(nonzero == 0, format!("100 systems, orders 1..9: {nonzero} nonzero values")))
}
