//! Exact photon-number distributions of the ideal multiplexed source and
//! their scalar figures of merit.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::source::SourceConfig;

/// Truncation bound used when callers have no reason to pick another.
pub const DEFAULT_N_MAX: usize = 30;

/// Largest residual probability a distribution may leave beyond `n_max`.
pub const TAIL_TOLERANCE: f64 = 1e-9;

/// Probability vector over photon number `n = 0..=n_max`.
///
/// `tail_mass` is the probability left beyond `n_max`; construction fails
/// when it reaches [`TAIL_TOLERANCE`] rather than silently renormalizing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotonDistribution {
    probs: Vec<f64>,
    tail_mass: f64,
}

impl PhotonDistribution {
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Domain("distribution needs at least one bin".into()));
        }
        if let Some((n, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !(0.0..=1.0).contains(*p))
        {
            return Err(Error::Domain(format!("probability of n = {n} is {p}")));
        }
        let total: f64 = probs.iter().sum();
        if total > 1.0 + TAIL_TOLERANCE {
            return Err(Error::Domain(format!("probabilities sum to {total} > 1")));
        }
        let tail_mass = (1.0 - total).max(0.0);
        if tail_mass >= TAIL_TOLERANCE {
            return Err(Error::Truncation {
                n_max: probs.len() - 1,
                tail_mass,
            });
        }
        Ok(Self { probs, tail_mass })
    }

    pub fn vacuum(n_max: usize) -> Self {
        Self::number_state(0, n_max)
    }

    /// Fock state `|n>`, truncated at `n_max >= n`.
    pub fn number_state(n: usize, n_max: usize) -> Self {
        assert!(n <= n_max, "number state beyond truncation bound");
        let mut probs = vec![0.0; n_max + 1];
        probs[n] = 1.0;
        Self {
            probs,
            tail_mass: 0.0,
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn n_max(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    /// Probability of `n` photons; zero beyond the truncation bound.
    pub fn get(&self, n: usize) -> f64 {
        self.probs.get(n).copied().unwrap_or(0.0)
    }

    pub fn p0(&self) -> f64 {
        self.get(0)
    }

    pub fn p1(&self) -> f64 {
        self.get(1)
    }

    /// Multi-photon probability, including the truncated tail.
    pub fn p_ge2(&self) -> f64 {
        self.probs.iter().skip(2).sum::<f64>() + self.tail_mass
    }

    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(n, p)| n as f64 * p)
            .sum()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.probs
            .iter()
            .enumerate()
            .map(|(n, p)| (n as f64 - mean).powi(2) * p)
            .sum()
    }

    /// Largest elementwise difference to `other`, treating missing bins as zero.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let len = self.probs.len().max(other.probs.len());
        (0..len)
            .map(|n| (self.get(n) - other.get(n)).abs())
            .fold(0.0, f64::max)
    }
}

/// Poisson probability `e^-mu mu^n / n!`, evaluated in log space.
pub fn poisson_pmf(mu: f64, n: u64) -> Result<f64> {
    if !(mu.is_finite() && mu >= 0.0) {
        return Err(Error::Domain(format!("Poisson mean must be finite and >= 0, got {mu}")));
    }
    Ok(poisson_pmf_unchecked(mu, n))
}

pub(crate) fn poisson_pmf_unchecked(mu: f64, n: u64) -> f64 {
    if mu == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let n = n as f64;
    (n * mu.ln() - mu - ln_gamma(n + 1.0)).exp()
}

pub(crate) fn poisson_vector(mu: f64, n_max: usize) -> Vec<f64> {
    (0..=n_max as u64)
        .map(|n| poisson_pmf_unchecked(mu, n))
        .collect()
}

/// Poisson(mu) truncated at `n_max`.
pub fn poisson_distribution(mu: f64, n_max: usize) -> Result<PhotonDistribution> {
    poisson_pmf(mu, 0)?;
    PhotonDistribution::from_probs(poisson_vector(mu, n_max))
}

pub(crate) fn check_n_max(n_max: usize) -> Result<()> {
    if n_max < 2 {
        return Err(Error::Domain(format!("n_max must be at least 2, got {n_max}")));
    }
    Ok(())
}

/// Output distribution of the lossless multiplexed source.
///
/// The vacuum term is the probability of no pair in any of the `2^m`
/// windows; otherwise the routed window carries Poisson(mu) conditioned on
/// being non-empty. Loss fields of `cfg` are ignored.
pub fn ideal_distribution(cfg: &SourceConfig, n_max: usize) -> Result<PhotonDistribution> {
    cfg.validate()?;
    check_n_max(n_max)?;
    if cfg.mu == 0.0 {
        return Ok(PhotonDistribution::vacuum(n_max));
    }
    let mu = cfg.mu;
    let mu_t = cfg.mu_total();
    // (1 - P0(mu_T)) / (1 - P0(mu))
    let scale = (-mu_t).exp_m1() / (-mu).exp_m1();
    let mut probs = poisson_vector(mu, n_max);
    probs[0] = (-mu_t).exp();
    for p in probs.iter_mut().skip(1) {
        *p *= scale;
    }
    PhotonDistribution::from_probs(probs)
}

/// Mandel parameter `(Var(n) - <n>) / <n>`.
pub fn mandel_q(dist: &PhotonDistribution) -> Result<f64> {
    let mean = dist.mean();
    if mean <= 0.0 {
        return Err(Error::Undefined("Mandel Q"));
    }
    Ok((dist.variance() - mean) / mean)
}

/// Single- to multi-photon ratio; infinite when no multi-photon mass exists.
pub fn snr(dist: &PhotonDistribution) -> f64 {
    let multi = dist.p_ge2();
    if multi == 0.0 {
        f64::INFINITY
    } else {
        dist.p1() / multi
    }
}
