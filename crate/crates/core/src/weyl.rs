//! Counting function of the randomized spectrum and its Weyl law.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::normal_cdf;
use crate::spectrum::{sample_spectrum, MultiplicityFunction, PoissonSpectrum};
use crate::stats::{ks_critical_value, ks_one_sample, rng_stream, EmpiricalDistribution, MomentEstimate};

/// `𝒩_m(λ) = 1 + Σ_{λ_k ≤ λ} 4 m_k`.
pub fn counting_function(spectrum: &PoissonSpectrum, lambda: f64) -> Result<f64> {
    check_range(spectrum, lambda)?;
    let n = spectrum.points.partition_point(|&t| t <= lambda);
    Ok(1.0 + 4.0 * spectrum.multiplicities[..n].iter().sum::<f64>())
}

fn check_range(spectrum: &PoissonSpectrum, lambda: f64) -> Result<()> {
    if spectrum.window.0 != 0.0 {
        return Err(Error::Validation("counting needs a window starting at 0".into()));
    }
    if !(lambda >= 0.0 && lambda <= spectrum.window.1) {
        return Err(Error::Validation(format!(
            "lambda {lambda} outside the sampled window [0, {}]",
            spectrum.window.1
        )));
    }
    Ok(())
}

/// `𝒩_m` on an increasing grid, in one sweep.
pub fn counting_curve(spectrum: &PoissonSpectrum, grid: &[f64]) -> Result<Vec<f64>> {
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Validation("lambda grid must be non-decreasing".into()));
    }
    let mut out = Vec::with_capacity(grid.len());
    let mut k = 0;
    let mut acc = 1.0;
    for &lam in grid {
        check_range(spectrum, lam)?;
        while k < spectrum.points.len() && spectrum.points[k] <= lam {
            acc += 4.0 * spectrum.multiplicities[k];
            k += 1;
        }
        out.push(acc);
    }
    Ok(out)
}

/// `(1 + λ/4π, (1/π) ∫_0^λ m)`.
pub fn weyl_moments(m: &MultiplicityFunction, lambda: f64) -> Result<(f64, f64)> {
    m.validate()?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Validation("lambda must be non-negative".into()));
    }
    Ok((1.0 + lambda / (4.0 * PI), m.antiderivative(lambda) / PI))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CountingRecord {
    pub lambda_grid: Vec<f64>,
    /// `counts[r][i]` is replica `r` at `lambda_grid[i]`.
    pub counts: Vec<Vec<f64>>,
}

impl CountingRecord {
    pub fn column(&self, i: usize) -> Vec<f64> {
        self.counts.iter().map(|c| c[i]).collect()
    }

    pub fn is_monotone(&self) -> bool {
        self.counts
            .iter()
            .all(|c| c.first().is_none_or(|&v| v >= 1.0) && c.windows(2).all(|w| w[1] >= w[0]))
    }
}

/// One spectrum on `[0, max λ]` per replica, replica `r` on stream `(seed, r)`.
pub fn sample_counts(
    m: &MultiplicityFunction,
    lambdas: &[f64],
    replicas: usize,
    seed: u64,
) -> Result<CountingRecord> {
    m.validate()?;
    let mut grid = lambdas.to_vec();
    if grid.is_empty() || grid.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(Error::Validation("lambdas must be positive and finite".into()));
    }
    grid.sort_by(f64::total_cmp);
    let top = *grid.last().unwrap_or(&1.0);
    let counts = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_stream(seed, r as u64);
            let spectrum = sample_spectrum(m, (0.0, top), &mut rng)?;
            counting_curve(&spectrum, &grid)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CountingRecord {
        lambda_grid: grid,
        counts,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MomentAgreement {
    pub lambda: f64,
    pub estimate: MomentEstimate,
    pub mean: f64,
    pub variance: f64,
    /// `(sample mean − mean)/se`.
    pub mean_z: f64,
    /// `(sample variance − variance)/se`.
    pub variance_z: f64,
}

/// Replica mean and variance of `𝒩_m(λ)` against [`weyl_moments`].
pub fn moment_agreement(record: &CountingRecord, m: &MultiplicityFunction) -> Result<Vec<MomentAgreement>> {
    record
        .lambda_grid
        .iter()
        .enumerate()
        .map(|(i, &lambda)| {
            let estimate = MomentEstimate::from_samples(&record.column(i))?;
            let (mean, variance) = weyl_moments(m, lambda)?;
            Ok(MomentAgreement {
                lambda,
                mean_z: (estimate.mean - mean) / estimate.mean_se,
                variance_z: (estimate.variance - variance) / estimate.variance_se,
                estimate,
                mean,
                variance,
            })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LlnRow {
    pub lambda: f64,
    /// Replica mean of `𝒩/λ`.
    pub mean_ratio: f64,
    /// Replica maximum of `|𝒩/λ − 1/4π|·4π`.
    pub max_rel_dev: f64,
    pub median_rel_dev: f64,
}

/// Per `λ`, how far `𝒩_m(λ)/λ` strays from `1/4π` across replicas.
pub fn lln_experiment(
    m: &MultiplicityFunction,
    lambdas: &[f64],
    replicas: usize,
    seed: u64,
) -> Result<Vec<LlnRow>> {
    if replicas == 0 {
        return Err(Error::Validation("need at least one replica".into()));
    }
    let record = sample_counts(m, lambdas, replicas, seed)?;
    let target = 1.0 / (4.0 * PI);
    record
        .lambda_grid
        .iter()
        .enumerate()
        .map(|(i, &lambda)| {
            let ratios = record.column(i).iter().map(|c| c / lambda).collect::<Vec<_>>();
            let devs = EmpiricalDistribution::new(ratios.iter().map(|r| (r - target).abs() / target).collect())?;
            Ok(LlnRow {
                lambda,
                mean_ratio: ratios.iter().sum::<f64>() / ratios.len() as f64,
                max_rel_dev: *devs.sorted().last().unwrap_or(&f64::NAN),
                median_rel_dev: devs.median(),
            })
        })
        .collect()
}

/// Whether the maximal deviation decreases along the grid and ends below
/// `threshold`.
pub fn lln_trend_holds(rows: &[LlnRow], threshold: f64) -> bool {
    rows.windows(2).all(|w| w[1].max_rel_dev < w[0].max_rel_dev)
        && rows.last().is_some_and(|r| r.max_rel_dev < threshold)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CltResult {
    pub lambda: f64,
    pub replicas: usize,
    pub ks_distance: f64,
    /// 1% critical value at this sample size.
    pub critical_value: f64,
    pub pass: bool,
}

/// KS distance of `(𝒩_m(λ) − mean)/sd` to the standard normal.
pub fn clt_experiment(m: &MultiplicityFunction, lambda: f64, replicas: usize, seed: u64) -> Result<CltResult> {
    if replicas == 0 {
        return Err(Error::Validation("need at least one replica".into()));
    }
    let record = sample_counts(m, &[lambda], replicas, seed)?;
    let (mean, variance) = weyl_moments(m, lambda)?;
    let sd = variance.sqrt();
    let z = record.column(0).iter().map(|c| (c - mean) / sd).collect();
    let ks_distance = ks_one_sample(&EmpiricalDistribution::new(z)?, normal_cdf);
    let critical_value = ks_critical_value(0.01, replicas, None);
    if variance < 1.0 {
        log::warn!("lambda {lambda}: fewer than one expected jump, normal approximation not meaningful");
    }
    Ok(CltResult {
        lambda,
        replicas,
        ks_distance,
        critical_value,
        pass: ks_distance < critical_value,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WeylRow {
    pub lambda: f64,
    pub mean: f64,
    pub variance: f64,
    pub expected_mean: f64,
    pub expected_variance: f64,
    pub mean_z: f64,
    pub variance_z: f64,
    pub mean_ratio: f64,
    pub max_rel_dev: f64,
    /// KS distance of the standardized counts to the standard normal.
    pub ks_normal: f64,
}

/// Moment agreement, LLN deviation and CLT distance at each `λ` from one set
/// of replicas.
pub fn weyl_table(m: &MultiplicityFunction, lambdas: &[f64], replicas: usize, seed: u64) -> Result<Vec<WeylRow>> {
    if replicas < 2 {
        return Err(Error::Validation("need at least two replicas".into()));
    }
    let record = sample_counts(m, lambdas, replicas, seed)?;
    let target = 1.0 / (4.0 * PI);
    moment_agreement(&record, m)?
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            let col = record.column(i);
            let sd = row.variance.sqrt();
            let z = col.iter().map(|c| (c - row.mean) / sd).collect();
            let max_rel_dev = col
                .iter()
                .map(|c| (c / row.lambda - target).abs() / target)
                .fold(0.0, f64::max);
            Ok(WeylRow {
                lambda: row.lambda,
                mean: row.estimate.mean,
                variance: row.estimate.variance,
                expected_mean: row.mean,
                expected_variance: row.variance,
                mean_z: row.mean_z,
                variance_z: row.variance_z,
                mean_ratio: row.estimate.mean / row.lambda,
                max_rel_dev,
                ks_normal: ks_one_sample(&EmpiricalDistribution::new(z)?, normal_cdf),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spectrum_with(points: Vec<f64>, mult: f64, hi: f64) -> PoissonSpectrum {
        PoissonSpectrum {
            multiplicity: MultiplicityFunction::Constant { c: mult },
            window: (0.0, hi),
            multiplicities: vec![mult; points.len()],
            points,
        }
    }

    #[test]
    fn counting_trivial_cases() {
        let s = spectrum_with(vec![1.0, 2.0, 3.0, 7.0], 1.0, 10.0);
        assert_eq!(counting_function(&s, 0.5).unwrap(), 1.0);
        assert_eq!(counting_function(&s, 3.0).unwrap(), 13.0);
        assert!(counting_function(&s, 11.0).is_err());
        assert_eq!(counting_curve(&s, &[0.0, 2.5, 3.0, 10.0]).unwrap(), vec![1.0, 9.0, 13.0, 17.0]);
    }

    #[test]
    fn closed_form_moments() {
        let one = MultiplicityFunction::Constant { c: 1.0 };
        assert_eq!(weyl_moments(&one, 0.0).unwrap(), (1.0, 0.0));
        let (_, v) = weyl_moments(&one, 123.0).unwrap();
        assert!((v - 123.0 / PI).abs() < 1e-12);
        let pow = MultiplicityFunction::Pow { c: 2.0, a: 0.5 };
        let lam: f64 = 1e4;
        let (_, v) = weyl_moments(&pow, lam).unwrap();
        let want = (lam + 2.0 * lam.powf(1.5) / 1.5) / PI;
        assert!((v - want).abs() < 1e-9 * want);
    }

    #[test]
    fn mean_at_four_pi() {
        let m = MultiplicityFunction::Constant { c: 1.0 };
        let rec = sample_counts(&m, &[4.0 * PI], 10_000, 17).unwrap();
        let est = MomentEstimate::from_samples(&rec.column(0)).unwrap();
        assert!((est.mean - 2.0).abs() < 4.0 * est.mean_se, "{est:?}");
    }

    #[test]
    fn moments_agree_for_all_families() {
        let fams = [
            MultiplicityFunction::Constant { c: 1.0 },
            MultiplicityFunction::LogPow { c: 1.0, a: 0.5 },
            MultiplicityFunction::Pow { c: 1.0, a: 1.0 / 3.0 },
        ];
        for m in fams {
            let rec = sample_counts(&m, &[1e3, 1e5], 2000, 3).unwrap();
            assert!(rec.is_monotone());
            for row in moment_agreement(&rec, &m).unwrap() {
                assert!(row.mean_z.abs() < 4.0, "{m} {row:?}");
                assert!(row.variance_z.abs() < 4.0, "{m} {row:?}");
            }
        }
    }

    #[test]
    fn clt_constant_and_logpow() {
        for m in [
            MultiplicityFunction::Constant { c: 1.0 },
            MultiplicityFunction::LogPow { c: 1.0, a: 0.5 },
        ] {
            let r = clt_experiment(&m, 1e5, 2000, 11).unwrap();
            assert!(r.ks_distance < 0.04, "{m}: {r:?}");
        }
    }

    #[test]
    fn tiny_lambda_is_poisson_not_normal() {
        let r = clt_experiment(&MultiplicityFunction::Constant { c: 1.0 }, 1.0, 2000, 2).unwrap();
        assert!(!r.pass);
    }

    #[test]
    fn table_is_consistent_with_experiments() {
        let m = MultiplicityFunction::Constant { c: 1.0 };
        let rows = weyl_table(&m, &[1e5, 1e3], 500, 4).unwrap();
        assert_eq!(rows[0].lambda, 1e3);
        let clt = clt_experiment(&m, 1e3, 500, 4).unwrap();
        let lln = lln_experiment(&m, &[1e3, 1e5], 500, 4).unwrap();
        assert!((rows[0].max_rel_dev - lln[0].max_rel_dev).abs() < 1e-15);
        assert!(rows[1].ks_normal < 0.1 && clt.ks_distance < 0.1);
    }

    #[test]
    fn lln_constant_tightens() {
        let rows = lln_experiment(&MultiplicityFunction::Constant { c: 1.0 }, &[1e4, 1e5, 1e6], 50, 9).unwrap();
        assert!(rows.windows(2).all(|w| w[1].max_rel_dev < w[0].max_rel_dev), "{rows:?}");
        assert!((rows[2].mean_ratio * 4.0 * PI - 1.0).abs() < 0.01);
    }
}
