//! Physical parameters of the multiplexed source and the quantities derived
//! from them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default single detection window in nanoseconds.
pub const DEFAULT_WINDOW_NS: f64 = 2.0;

/// Stage counts above this make `2^m` windows impractical to enumerate.
pub const MAX_STAGES: u32 = 40;

/// Full parameter set of a temporally multiplexed heralded source.
///
/// `mu` is the mean number of pairs per single window. When the pair rate
/// `herald_rate` is also given it must agree with `mu = delta_t0 * rate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceConfig {
    /// Number of correction stages.
    pub m: u32,
    /// Single detection window, ns.
    pub delta_t0_ns: f64,
    /// Mean pairs per single window.
    pub mu: f64,
    /// Pair generation rate, pairs/s.
    pub herald_rate: Option<f64>,
    /// Heralding-branch transmission times detector efficiency.
    pub e_h: f64,
    /// Static signal-branch transmission (coupling and dichroic).
    pub e_s: f64,
    /// Insertion loss of one switch, dB.
    pub e_sw_db: f64,
    /// Heralding detector dark-count rate, counts/s.
    pub r_dark: f64,
}

impl SourceConfig {
    /// Lossless source with perfect heralding and no dark counts.
    pub fn ideal(m: u32, mu: f64) -> Self {
        Self {
            m,
            delta_t0_ns: DEFAULT_WINDOW_NS,
            mu,
            herald_rate: None,
            e_h: 1.0,
            e_s: 1.0,
            e_sw_db: 0.0,
            r_dark: 0.0,
        }
    }

    /// The lossy parameter set used throughout the imperfect-device study:
    /// `e_h = 0.85`, `e_s = 0.9`, 0.5 dB switches, no dark counts.
    pub fn lossy(m: u32, mu: f64, e_sw_db: f64) -> Self {
        Self {
            e_h: 0.85,
            e_s: 0.9,
            e_sw_db,
            ..Self::ideal(m, mu)
        }
    }

    /// Builds a config from a pair rate instead of a per-window mean.
    pub fn from_rate(m: u32, delta_t0_ns: f64, herald_rate: f64) -> Self {
        Self {
            delta_t0_ns,
            mu: delta_t0_ns * 1e-9 * herald_rate,
            herald_rate: Some(herald_rate),
            ..Self::ideal(m, 0.0)
        }
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self.herald_rate = None;
        self
    }

    pub fn with_stages(mut self, m: u32) -> Self {
        self.m = m;
        self
    }

    pub fn with_switch_loss_db(mut self, e_sw_db: f64) -> Self {
        self.e_sw_db = e_sw_db;
        self
    }

    /// Sets the dark-count rate that gives probability `p_dark` per window.
    pub fn with_dark_probability(mut self, p_dark: f64) -> Self {
        self.r_dark = -(-p_dark).ln_1p() / self.window_seconds();
        self
    }

    /// Checks every field invariant.
    pub fn validate(&self) -> Result<()> {
        fn unit(field: &'static str, v: f64) -> Result<()> {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig {
                    field,
                    reason: format!("must be in [0, 1], got {v}"),
                });
            }
            Ok(())
        }
        fn non_negative(field: &'static str, v: f64) -> Result<()> {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidConfig {
                    field,
                    reason: format!("must be finite and >= 0, got {v}"),
                });
            }
            Ok(())
        }

        if self.m > MAX_STAGES {
            return Err(Error::InvalidConfig {
                field: "m",
                reason: format!("must be at most {MAX_STAGES}, got {}", self.m),
            });
        }
        if !(self.delta_t0_ns.is_finite() && self.delta_t0_ns > 0.0) {
            return Err(Error::InvalidConfig {
                field: "delta_t0_ns",
                reason: format!("must be finite and > 0, got {}", self.delta_t0_ns),
            });
        }
        non_negative("mu", self.mu)?;
        unit("e_h", self.e_h)?;
        unit("e_s", self.e_s)?;
        non_negative("e_sw_db", self.e_sw_db)?;
        non_negative("r_dark", self.r_dark)?;
        if let Some(rate) = self.herald_rate {
            non_negative("herald_rate", rate)?;
            let implied = self.window_seconds() * rate;
            let scale = self.mu.abs().max(implied.abs());
            if (implied - self.mu).abs() > 1e-12 * scale {
                return Err(Error::InvalidConfig {
                    field: "mu",
                    reason: format!(
                        "is {} but herald_rate * delta_t0 implies {implied}",
                        self.mu
                    ),
                });
            }
        }
        Ok(())
    }

    /// Number of single windows in one clock period, `2^m`.
    pub fn windows(&self) -> u64 {
        1u64 << self.m
    }

    pub fn window_seconds(&self) -> f64 {
        self.delta_t0_ns * 1e-9
    }

    /// Mean pairs over the whole synchronization interval.
    pub fn mu_total(&self) -> f64 {
        self.windows() as f64 * self.mu
    }

    /// Clock period `2^m * delta_t0`, ns.
    pub fn period_ns(&self) -> f64 {
        self.windows() as f64 * self.delta_t0_ns
    }

    pub fn clock_frequency_hz(&self) -> f64 {
        1e9 / self.period_ns()
    }

    /// Linear transmission of one switch.
    pub fn switch_transmission(&self) -> f64 {
        10f64.powf(-self.e_sw_db / 10.0)
    }

    /// Probability of at least one dark count in a single window.
    pub fn dark_probability(&self) -> f64 {
        -(-self.r_dark * self.window_seconds()).exp_m1()
    }

    /// Signal transmission through the static optics and all `m + 1` switches.
    pub fn total_signal_transmission(&self) -> f64 {
        self.e_s * self.switch_transmission().powi(self.m as i32 + 1)
    }
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self::lossy(4, 0.1, 0.5)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_quantities() {
        let cfg = SourceConfig::lossy(4, 0.1, 0.5);
        assert_eq!(cfg.windows(), 16);
        assert!((cfg.mu_total() - 1.6).abs() < 1e-15);
        assert_eq!(cfg.period_ns(), 32.0);
        assert_eq!(cfg.clock_frequency_hz(), 31.25e6);
        assert_eq!(cfg.dark_probability(), 0.0);
    }

    #[test]
    fn rate_parameterization() {
        let cfg = SourceConfig::from_rate(2, 2.0, 50e6);
        assert!((cfg.mu - 0.1).abs() < 1e-15);
        cfg.validate().unwrap();

        let bad = SourceConfig {
            mu: 0.1,
            ..SourceConfig::from_rate(2, 2.0, 100e6)
        };
        let err = bad.validate().unwrap_err();
        assert!(matches!(err, Error::InvalidConfig { field: "mu", .. }));
    }

    #[test]
    fn rejects_out_of_range_fields() {
        let mut cfg = SourceConfig::ideal(3, 0.1);
        cfg.e_h = 1.2;
        assert!(matches!(
            cfg.validate(),
            Err(Error::InvalidConfig { field: "e_h", .. })
        ));
        let mut cfg = SourceConfig::ideal(3, 0.1);
        cfg.delta_t0_ns = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = SourceConfig::ideal(3, -0.1);
        assert!(cfg.validate().is_err());
        cfg.mu = f64::NAN;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn dark_probability_round_trips() {
        let cfg = SourceConfig::lossy(4, 0.1, 0.5).with_dark_probability(0.01);
        assert!((cfg.dark_probability() - 0.01).abs() < 1e-15);
    }
}
