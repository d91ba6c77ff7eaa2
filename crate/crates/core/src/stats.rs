//! Random streams, empirical distributions and Kolmogorov-Smirnov tests.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A reproducible random stream keyed by `(master_seed, stream_id)`.
///
/// The generator is ChaCha12 with its 256-bit key expanded from `master_seed`
/// and its 64-bit stream selector set to `stream_id`. ChaCha is counter based,
/// so distinct stream ids give independent sequences, a stream can be resumed
/// from its word position, and output does not depend on platform or on how
/// work is split across threads.
#[derive(Clone, Debug)]
pub struct RngStream {
    master_seed: u64,
    stream_id: u64,
    rng: ChaCha12Rng,
}

/// Serializable position of an [`RngStream`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub master_seed: u64,
    pub stream_id: u64,
    pub word_pos: u128,
}

pub fn rng_stream(master_seed: u64, stream_id: u64) -> RngStream {
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream(stream_id);
    RngStream {
        master_seed,
        stream_id,
        rng,
    }
}

impl RngStream {
    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn state(&self) -> RngState {
        RngState {
            master_seed: self.master_seed,
            stream_id: self.stream_id,
            word_pos: self.rng.get_word_pos(),
        }
    }

    pub fn from_state(state: RngState) -> Self {
        let mut s = rng_stream(state.master_seed, state.stream_id);
        s.rng.set_word_pos(state.word_pos);
        s
    }

    /// A child stream under the same master seed, for nested work such as
    /// one stream per replica inside an experiment.
    pub fn substream(&self, index: u64) -> RngStream {
        rng_stream(self.master_seed, splitmix64(self.stream_id ^ splitmix64(index)))
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A sorted sample with no NaNs.
#[derive(Clone, Debug)]
pub struct EmpiricalDistribution {
    sorted: Vec<f64>,
}

impl EmpiricalDistribution {
    pub fn new(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Validation("empty sample".into()));
        }
        if samples.iter().any(|v| v.is_nan()) {
            return Err(Error::Validation("sample contains NaN".into()));
        }
        samples.sort_by(f64::total_cmp);
        Ok(EmpiricalDistribution { sorted: samples })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    /// Fraction of samples `≤ x`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.len() as f64
    }

    /// Linear-interpolation quantile, `q ∈ [0, 1]`.
    pub fn quantile(&self, q: f64) -> f64 {
        let n = self.len();
        let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(n - 1);
        let frac = pos - lo as f64;
        self.sorted[lo] * (1.0 - frac) + self.sorted[hi] * frac
    }

    pub fn median(&self) -> f64 {
        self.quantile(0.5)
    }

    pub fn iqr(&self) -> f64 {
        self.quantile(0.75) - self.quantile(0.25)
    }
}

/// One-sample KS statistic `sup |F_n − F|`.
pub fn ks_one_sample(emp: &EmpiricalDistribution, cdf: impl Fn(f64) -> f64) -> f64 {
    let n = emp.len() as f64;
    emp.sorted
        .iter()
        .enumerate()
        .fold(0.0_f64, |d, (i, &x)| {
            let f = cdf(x);
            let upper = (i + 1) as f64 / n - f;
            let lower = f - i as f64 / n;
            d.max(upper).max(lower)
        })
}

/// Two-sample KS statistic `sup |F_n − G_m|`, ties handled jointly.
pub fn ks_two_sample(a: &EmpiricalDistribution, b: &EmpiricalDistribution) -> f64 {
    let (xa, xb) = (&a.sorted, &b.sorted);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0_f64);
    while i < xa.len() && j < xb.len() {
        let v = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= v {
            i += 1;
        }
        while j < xb.len() && xb[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic KS critical value at level `alpha` for sample sizes `n` and
/// `m`; pass `m = None` for the one-sample test.
pub fn ks_critical_value(alpha: f64, n: usize, m: Option<usize>) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    match m {
        None => c / (n as f64).sqrt(),
        Some(m) => c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt(),
    }
}

/// Sample mean and variance with standard errors.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    pub mean_se: f64,
    pub variance_se: f64,
}

impl MomentEstimate {
    pub fn from_samples(xs: &[f64]) -> Result<Self> {
        let n = xs.len();
        if n < 2 {
            return Err(Error::Validation("need at least two samples".into()));
        }
        let nf = n as f64;
        let mean = pairwise_sum(xs) / nf;
        let dev: Vec<f64> = xs.iter().map(|x| (x - mean).powi(2)).collect();
        let m2 = pairwise_sum(&dev) / nf;
        let dev4: Vec<f64> = dev.iter().map(|d| d * d).collect();
        let m4 = pairwise_sum(&dev4) / nf;
        let variance = m2 * nf / (nf - 1.0);
        Ok(MomentEstimate {
            n,
            mean,
            variance,
            mean_se: (variance / nf).sqrt(),
            variance_se: ((m4 - m2 * m2).max(0.0) / nf).sqrt(),
        })
    }
}

/// Pairwise summation in a fixed order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, RngCore};

    fn brute_one(xs: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
        let n = xs.len() as f64;
        let mut d = 0.0_f64;
        for &x in xs {
            let le = xs.iter().filter(|&&v| v <= x).count() as f64 / n;
            let lt = xs.iter().filter(|&&v| v < x).count() as f64 / n;
            d = d.max((le - cdf(x)).abs()).max((lt - cdf(x)).abs());
        }
        d
    }

    fn brute_two(a: &[f64], b: &[f64]) -> f64 {
        let ecdf = |s: &[f64], x: f64| s.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
        a.iter()
            .chain(b)
            .map(|&x| (ecdf(a, x) - ecdf(b, x)).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn pinned_stream_vectors() {
        let mut s = rng_stream(0, 0);
        let first: Vec<u64> = (0..3).map(|_| s.next_u64()).collect();
        let mut again = rng_stream(0, 0);
        assert_eq!(first, (0..3).map(|_| again.next_u64()).collect::<Vec<_>>());
        assert_eq!(first, PINNED_0_0);
        let mut other = rng_stream(0, 1);
        assert_ne!(first[0], other.next_u64());
    }

    const PINNED_0_0: [u64; 3] = [
        13_486_662_071_293_341_567,
        14_267_822_071_968_393_595,
        476_749_353_381_333_526,
    ];

    #[test]
    fn state_round_trip() {
        let mut s = rng_stream(42, 7);
        for _ in 0..13 {
            s.next_u32();
        }
        let state = s.state();
        let json = serde_json::to_string(&state).unwrap();
        let back: RngState = serde_json::from_str(&json).unwrap();
        assert_eq!(back, state);
        let mut resumed = RngStream::from_state(back);
        assert_eq!(s.next_u64(), resumed.next_u64());
    }

    #[test]
    fn substreams_differ() {
        let s = rng_stream(1, 2);
        let mut a = s.substream(0);
        let mut b = s.substream(1);
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn rejects_nan() {
        assert!(EmpiricalDistribution::new(vec![1.0, f64::NAN]).is_err());
        assert!(EmpiricalDistribution::new(vec![]).is_err());
    }

    #[test]
    fn quantiles() {
        let e = EmpiricalDistribution::new(vec![4.0, 1.0, 3.0, 2.0, 5.0]).unwrap();
        assert_eq!(e.median(), 3.0);
        assert_eq!(e.iqr(), 2.0);
        assert_eq!(e.cdf(2.5), 0.4);
    }

    #[test]
    fn uniform_ks_is_small() {
        let mut rng = rng_stream(3, 0);
        let xs: Vec<f64> = (0..5000).map(|_| rng.gen::<f64>()).collect();
        let e = EmpiricalDistribution::new(xs).unwrap();
        let d = ks_one_sample(&e, |x| x.clamp(0.0, 1.0));
        assert!(d < ks_critical_value(0.01, 5000, None));
    }

    #[test]
    fn critical_values() {
        approx::assert_relative_eq!(ks_critical_value(0.05, 100, None), 0.1358, epsilon = 1e-4);
        approx::assert_relative_eq!(
            ks_critical_value(0.01, 10_000, Some(10_000)),
            1.6276 * (2e-4f64).sqrt(),
            epsilon = 1e-5
        );
    }

    proptest! {
        #[test]
        fn one_sample_matches_brute_force(xs in proptest::collection::vec(-3.0f64..3.0, 1..60)) {
            let cdf = |x: f64| crate::special::normal_cdf(x);
            let e = EmpiricalDistribution::new(xs.clone()).unwrap();
            prop_assert!((ks_one_sample(&e, cdf) - brute_one(&xs, cdf)).abs() < 1e-12);
        }

        #[test]
        fn two_sample_matches_brute_force(
            a in proptest::collection::vec(0u8..20, 1..50),
            b in proptest::collection::vec(0u8..20, 1..50),
        ) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let ea = EmpiricalDistribution::new(a.clone()).unwrap();
            let eb = EmpiricalDistribution::new(b.clone()).unwrap();
            prop_assert!((ks_two_sample(&ea, &eb) - brute_two(&a, &b)).abs() < 1e-12);
        }

        #[test]
        fn ks_is_a_distance(xs in proptest::collection::vec(-5.0f64..5.0, 1..40)) {
            let e = EmpiricalDistribution::new(xs).unwrap();
            prop_assert_eq!(ks_two_sample(&e, &e), 0.0);
            let d = ks_one_sample(&e, crate::special::normal_cdf);
            prop_assert!((0.0..=1.0).contains(&d));
        }

        #[test]
        fn pairwise_sum_close_to_naive(xs in proptest::collection::vec(-1e3f64..1e3, 0..200)) {
            let naive: f64 = xs.iter().sum();
            prop_assert!((pairwise_sum(&xs) - naive).abs() < 1e-9);
        }
    }
}
