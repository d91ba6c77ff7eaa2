//! Gamma, erfc and the normal CDF.
//!
//! Both special functions come from `statrs`: `gamma` is a Lanczos
//! approximation (relative error near 1e-15 on the positive axis) and `erfc`
//! uses rational approximations accurate to about 1e-10 relative.

pub fn gamma(x: f64) -> f64 {
    statrs::function::gamma::gamma(x)
}

pub fn erfc(x: f64) -> f64 {
    statrs::function::erf::erfc(x)
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}
