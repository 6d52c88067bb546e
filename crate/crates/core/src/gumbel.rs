//! Type-I extreme value law: the null limit of the centred statistic, its
//! quantiles, and a maximum-likelihood fit for the bootstrap correction.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed;

const FIT_TOL: f64 = 1e-8;
const FIT_MAX_ITER: usize = 200;

/// Location `mu` and scale `beta > 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GumbelParams<T> {
    pub mu: T,
    pub beta: T,
}

impl<T: Scalar> GumbelParams<T> {
    pub fn new(mu: T, beta: T) -> Result<Self> {
        if !(beta > T::zero()) || !mu.is_finite() || !beta.is_finite() {
            return Err(Error::InvalidArgument(format!("invalid Gumbel parameters ({mu}, {beta})")));
        }
        Ok(Self { mu, beta })
    }

    /// The null limit: `mu = -log(pi)`, `beta = 2`.
    pub fn null_limit() -> Self {
        Self { mu: -T::PI().ln(), beta: T::of_usize(2) }
    }

    pub fn cdf(&self, x: T) -> T {
        (-(-(x - self.mu) / self.beta).exp()).exp()
    }

    pub fn quantile(&self, p: T) -> T {
        self.mu - self.beta * (-p.ln()).ln()
    }

    pub fn log_likelihood(&self, samples: &[T]) -> T {
        samples
            .iter()
            .map(|&x| {
                let z = (x - self.mu) / self.beta;
                -self.beta.ln() - z - (-z).exp()
            })
            .sum()
    }

    /// Inverse-CDF draws from a seeded stream.
    pub fn sample(&self, count: usize, seed: u64) -> Vec<T> {
        let mut rng = seed::rng(seed);
        (0..count)
            .map(|_| {
                // Uniform on (0, 1): 53 random bits shifted off zero.
                let u = ((rng.random::<u64>() >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
                self.quantile(T::of_f64(u))
            })
            .collect()
    }
}

/// `exp(-e^{-x/2} / sqrt(pi))`.
pub fn gumbel_cdf<T: Scalar>(x: T) -> T {
    (-(-x / T::of_usize(2)).exp() / T::PI().sqrt()).exp()
}

/// `q_alpha = -2 log(-sqrt(pi) log(1 - alpha))`.
pub fn critical_value<T: Scalar>(alpha: T) -> Result<T> {
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} must lie in (0, 1)")));
    }
    Ok(-T::of_usize(2) * (-T::PI().sqrt() * (-alpha).ln_1p()).ln())
}

/// `1 - gumbel_cdf(theta)`, evaluated without cancellation in the upper tail.
pub fn p_value<T: Scalar>(theta: T) -> T {
    -(-(-theta / T::of_usize(2)).exp() / T::PI().sqrt()).exp_m1()
}

/// Maximum-likelihood location and scale.
///
/// Works on standardized samples so the fit is shift and scale equivariant.
/// The scale equation `h(beta) = beta + Σ z w / Σ w` is increasing in
/// `beta`, so Newton steps are kept inside a sign-change bracket.
pub fn fit_gumbel_mle<T: Scalar>(samples: &[T]) -> Result<GumbelParams<T>> {
    if samples.len() < 10 {
        return Err(Error::DegenerateSample(format!("need at least 10 samples, got {}", samples.len())));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::DegenerateSample("non-finite sample".into()));
    }
    let n = T::of_usize(samples.len());
    let mean = samples.iter().copied().sum::<T>() / n;
    let var = samples.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / (n - T::one());
    let sd = var.sqrt();
    if !(sd > T::zero()) || sd <= mean.abs() * T::epsilon() {
        return Err(Error::DegenerateSample("sample variance is zero".into()));
    }
    let z: Vec<T> = samples.iter().map(|&x| (x - mean) / sd).collect();
    let z_min = z.iter().fold(T::infinity(), |m, &x| m.min(x));

    // Returns h(beta), h'(beta) and log(mean exp(-(z - z_min)/beta)).
    let eval = |beta: T| {
        let (mut sw, mut szw, mut szzw) = (T::zero(), T::zero(), T::zero());
        for &zi in &z {
            let w = (-(zi - z_min) / beta).exp();
            sw = sw + w;
            szw = szw + zi * w;
            szzw = szzw + zi * zi * w;
        }
        let m1 = szw / sw;
        let wvar = (szzw / sw - m1 * m1).max(T::zero());
        (beta + m1, T::one() + wvar / (beta * beta), (sw / n).ln())
    };

    let tol = T::of_f64(FIT_TOL).max(T::epsilon() * T::of_usize(64));
    let mut beta = T::of_f64(6f64.sqrt()) / T::PI();
    let (mut lo, mut hi) = (T::zero(), T::infinity());
    let mut residual = T::infinity();
    for _ in 0..FIT_MAX_ITER {
        let (h, dh, _) = eval(beta);
        residual = h.abs();
        if h < T::zero() {
            lo = lo.max(beta);
        } else {
            hi = hi.min(beta);
        }
        let mut next = beta - h / dh;
        if !(next > lo && next < hi) {
            next = if hi.is_finite() { (lo + hi) / T::of_usize(2) } else { beta * T::of_usize(2) };
        }
        let step = (next - beta).abs();
        beta = next;
        if residual <= tol && step <= tol * beta {
            let (_, _, log_mean_w) = eval(beta);
            let mu_z = z_min - beta * log_mean_w;
            return GumbelParams::new(mean + sd * mu_z, sd * beta);
        }
    }
    Err(Error::GumbelNoConvergence { iterations: FIT_MAX_ITER, residual: residual.as_f64() })
}
