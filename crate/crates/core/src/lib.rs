//! Photon-number statistics of a temporally multiplexed heralded
//! single-photon source.
//!
//! A continuous-wave pair source feeds a binary network of `m` switchable
//! delays. A herald in any of the `2^m` windows of a clock period routes its
//! partner photon to the clock tick. The crate computes the resulting output
//! distribution exactly, including heralding inefficiency, dark counts and
//! switch loss ([`loss_model`]), tunes the pump level ([`optimizer`]),
//! regenerates sweep tables ([`experiments`]) and checks all of it against an
//! event-level Monte Carlo simulation ([`mc_oracle`]).
//!
//! ```
//! use msps_core::{output_distribution, snr, SourceConfig, DEFAULT_N_MAX};
//!
//! let cfg = SourceConfig::lossy(4, 0.1, 0.5);
//! let dist = output_distribution(&cfg, DEFAULT_N_MAX).unwrap();
//! assert!(dist.p1() > 0.35 && snr(&dist) > 30.0);
//! ```

pub mod error;
pub mod experiments;
pub mod loss_model;
pub mod mc_oracle;
pub mod optimizer;
pub mod photon_stats;
pub mod source;
pub mod validation;

pub use error::{Error, Result};
pub use experiments::{clock_report, ClockReport, FigureId, SweepAxis, SweepRecord, SweepTable};
pub use loss_model::{
    apply_signal_loss, heralded_distribution, output_distribution, output_trace, total_signal_transmission,
    with_dark_counts, HeraldedDistribution, LossChainTrace, Stage,
};
pub use mc_oracle::{compare, compare_distribution, simulate, ComparisonReport, McConfig, McHistogram};
pub use optimizer::{max_p1_with_snr_floor, optimize_mu, Bound, MuRange, OptimizationResult, SnrConstrained};
pub use photon_stats::{
    ideal_distribution, mandel_q, poisson_distribution, poisson_pmf, snr, PhotonDistribution, DEFAULT_N_MAX,
};
pub use source::SourceConfig;
