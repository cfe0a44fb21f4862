//! Event-level Monte Carlo simulation of the multiplexed source.
//!
//! Each trial draws pairs window by window, detects idlers, fires dark
//! counts, routes the first triggered window (or the last one when nothing
//! triggers) and thins the routed signal photons. It shares no code with the
//! analytic model and serves as its oracle.
//!
//! Trials are grouped into fixed-size blocks; block `b` draws from the
//! ChaCha8 stream `b` of the run seed. Shards only partition blocks, so the
//! histogram depends on `(seed, trials)` alone, whatever the shard count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::photon_stats::PhotonDistribution;
use crate::source::SourceConfig;

/// Trials drawn from one RNG stream.
pub const BLOCK_TRIALS: u64 = 1 << 16;

/// Upper limit on trials per run.
pub const MAX_TRIALS: u64 = 1 << 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    pub trials: u64,
    pub seed: u64,
    pub shards: usize,
}

impl McConfig {
    pub fn new(trials: u64, seed: u64) -> Self {
        Self {
            trials,
            seed,
            shards: 8,
        }
    }

    pub fn with_shards(mut self, shards: usize) -> Self {
        self.shards = shards;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::MonteCarlo("trials must be at least 1".into()));
        }
        if self.trials > MAX_TRIALS {
            return Err(Error::MonteCarlo(format!(
                "{} trials exceeds the limit of {MAX_TRIALS}",
                self.trials
            )));
        }
        if self.shards == 0 {
            return Err(Error::MonteCarlo("shards must be at least 1".into()));
        }
        Ok(())
    }
}

impl Default for McConfig {
    fn default() -> Self {
        Self::new(1_000_000, 42)
    }
}

/// Counts of the surviving photon number `k` over all trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McHistogram {
    pub counts: Vec<u64>,
    pub trials: u64,
    pub source: SourceConfig,
    pub mc: McConfig,
}

impl McHistogram {
    pub fn count(&self, k: usize) -> u64 {
        self.counts.get(k).copied().unwrap_or(0)
    }

    pub fn frequency(&self, k: usize) -> f64 {
        self.count(k) as f64 / self.trials as f64
    }
}

struct TrialModel {
    windows: u64,
    pairs: Option<Poisson<f64>>,
    e_h: f64,
    p_dark: f64,
    transmission: f64,
}

impl TrialModel {
    fn new(cfg: &SourceConfig) -> Result<Self> {
        let pairs = if cfg.mu > 0.0 {
            Some(Poisson::new(cfg.mu).map_err(|e| Error::MonteCarlo(e.to_string()))?)
        } else {
            None
        };
        Ok(Self {
            windows: cfg.windows(),
            pairs,
            e_h: cfg.e_h,
            p_dark: cfg.dark_probability(),
            transmission: cfg.total_signal_transmission(),
        })
    }

    fn bernoulli<R: Rng>(rng: &mut R, p: f64) -> bool {
        p > 0.0 && rng.random::<f64>() < p
    }

    fn run<R: Rng>(&self, rng: &mut R) -> usize {
        let mut routed = 0u64;
        for window in 1..=self.windows {
            let n = self.pairs.as_ref().map_or(0, |d| d.sample(rng) as u64);
            let mut triggered = false;
            for _ in 0..n {
                triggered |= Self::bernoulli(rng, self.e_h);
            }
            triggered |= Self::bernoulli(rng, self.p_dark);
            if triggered || window == self.windows {
                routed = n;
                break;
            }
        }
        (0..routed)
            .filter(|_| Self::bernoulli(rng, self.transmission))
            .count()
    }
}

fn add_into(acc: &mut Vec<u64>, other: &[u64]) {
    if acc.len() < other.len() {
        acc.resize(other.len(), 0);
    }
    for (a, b) in acc.iter_mut().zip(other) {
        *a += b;
    }
}

fn run_block(model: &TrialModel, seed: u64, block: u64, trials: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    let mut counts = vec![0u64; 4];
    for _ in 0..trials {
        let k = model.run(&mut rng);
        if k >= counts.len() {
            counts.resize(k + 1, 0);
        }
        counts[k] += 1;
    }
    counts
}

/// Simulates `mc.trials` clock periods of the source described by `cfg`.
pub fn simulate(cfg: &SourceConfig, mc: &McConfig) -> Result<McHistogram> {
    cfg.validate()?;
    mc.validate()?;
    let model = TrialModel::new(cfg)?;
    let blocks = mc.trials.div_ceil(BLOCK_TRIALS);
    let per_shard = blocks.div_ceil(mc.shards as u64).max(1);
    let block_trials = |b: u64| (mc.trials - b * BLOCK_TRIALS).min(BLOCK_TRIALS);

    let partials: Vec<Vec<u64>> = (0..mc.shards as u64)
        .into_par_iter()
        .map(|shard| {
            let start = shard * per_shard;
            let end = ((shard + 1) * per_shard).min(blocks);
            let mut acc = Vec::new();
            for b in start..end {
                add_into(&mut acc, &run_block(&model, mc.seed, b, block_trials(b)));
            }
            acc
        })
        .collect();

    let mut counts = Vec::new();
    for p in &partials {
        add_into(&mut counts, p);
    }
    while counts.len() > 1 && counts.last() == Some(&0) {
        counts.pop();
    }
    Ok(McHistogram {
        counts,
        trials: mc.trials,
        source: *cfg,
        mc: *mc,
    })
}

/// Largest |z| any bin may show.
pub const Z_LIMIT: f64 = 4.0;

/// Statistical agreement between an analytic distribution and a histogram.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub tv_distance: f64,
    pub tv_limit: f64,
    /// Per-bin `(count - N p) / sqrt(N p (1 - p))`.
    pub z_scores: Vec<f64>,
    pub max_abs_z: f64,
    pub passed: bool,
}

/// Compares `analytic` to `hist` after checking both describe `source`.
pub fn compare(
    source: &SourceConfig,
    analytic: &PhotonDistribution,
    hist: &McHistogram,
) -> Result<ComparisonReport> {
    if *source != hist.source {
        return Err(Error::Mismatch(format!(
            "histogram was simulated for {:?}, analytic distribution is for {:?}",
            hist.source, source
        )));
    }
    Ok(compare_distribution(analytic, hist))
}

/// Total-variation and per-bin z-score test, without a configuration check.
///
/// Passes iff TV <= 3 sqrt(n_max / trials) and every |z| <= [`Z_LIMIT`].
pub fn compare_distribution(analytic: &PhotonDistribution, hist: &McHistogram) -> ComparisonReport {
    let trials = hist.trials as f64;
    let bins = (analytic.n_max() + 1).max(hist.counts.len());
    let mut tv = 0.0;
    let mut z_scores = Vec::with_capacity(bins);
    for k in 0..bins {
        let p = analytic.get(k);
        let c = hist.count(k) as f64;
        tv += (p - c / trials).abs();
        let z = if p > 0.0 && p < 1.0 {
            (c - trials * p) / (trials * p * (1.0 - p)).sqrt()
        } else if c == trials * p {
            0.0
        } else {
            f64::INFINITY
        };
        z_scores.push(z);
    }
    // Tail mass beyond the analytic support counts against the model.
    let beyond: u64 = hist.counts.iter().skip(analytic.n_max() + 1).sum();
    if beyond == 0 {
        tv += analytic.tail_mass();
    }
    let tv_distance = 0.5 * tv;
    let tv_limit = 3.0 * (analytic.n_max() as f64 / trials).sqrt();
    let max_abs_z = z_scores.iter().fold(0.0f64, |m, z| m.max(z.abs()));
    ComparisonReport {
        tv_distance,
        tv_limit,
        passed: tv_distance <= tv_limit && max_abs_z <= Z_LIMIT,
        z_scores,
        max_abs_z,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss_model::output_distribution;
    use crate::photon_stats::{ideal_distribution, DEFAULT_N_MAX};

    #[test]
    fn vacuum_source_never_emits() {
        let cfg = SourceConfig::lossy(3, 0.0, 0.5);
        let h = simulate(&cfg, &McConfig::new(10_000, 1)).unwrap();
        assert_eq!(h.counts, vec![10_000]);
    }

    #[test]
    fn rejects_bad_configs() {
        let cfg = SourceConfig::ideal(1, 0.1);
        assert!(simulate(&cfg, &McConfig::new(0, 1)).is_err());
        assert!(simulate(&cfg, &McConfig::new(MAX_TRIALS + 1, 1)).is_err());
        assert!(simulate(&cfg, &McConfig::new(10, 1).with_shards(0)).is_err());
    }

    #[test]
    fn counts_sum_to_trials_and_runs_repeat() {
        let cfg = SourceConfig::lossy(2, 0.3, 0.5).with_dark_probability(0.05);
        let mc = McConfig::new(200_003, 9);
        let a = simulate(&cfg, &mc).unwrap();
        assert_eq!(a.counts.iter().sum::<u64>(), 200_003);
        assert_eq!(a, simulate(&cfg, &mc).unwrap());
    }

    #[test]
    fn histogram_independent_of_shards() {
        let cfg = SourceConfig::lossy(3, 0.2, 1.0);
        let one = simulate(&cfg, &McConfig::new(300_000, 7).with_shards(1)).unwrap();
        let eight = simulate(&cfg, &McConfig::new(300_000, 7).with_shards(8)).unwrap();
        let many = simulate(&cfg, &McConfig::new(300_000, 7).with_shards(64)).unwrap();
        assert_eq!(one.counts, eight.counts);
        assert_eq!(one.counts, many.counts);
    }

    #[test]
    fn seeds_give_different_streams() {
        let cfg = SourceConfig::lossy(3, 0.2, 1.0);
        let a = simulate(&cfg, &McConfig::new(100_000, 1)).unwrap();
        let b = simulate(&cfg, &McConfig::new(100_000, 2)).unwrap();
        assert_ne!(a.counts, b.counts);
    }

    #[test]
    fn ideal_source_matches_exact_distribution() {
        let cfg = SourceConfig::ideal(3, 0.05);
        let h = simulate(&cfg, &McConfig::new(1_000_000, 42)).unwrap();
        let exact = ideal_distribution(&cfg, DEFAULT_N_MAX).unwrap();
        let report = compare(&cfg, &exact, &h).unwrap();
        assert!(report.passed, "{report:?}");
        for z in &report.z_scores {
            assert!(z.abs() <= 3.0, "{report:?}");
        }
    }

    #[test]
    fn self_consistency_and_detectable_error() {
        let cfg = SourceConfig::lossy(4, 0.1, 0.5);
        let h = simulate(&cfg, &McConfig::new(1_000_000, 42)).unwrap();
        let exact = output_distribution(&cfg, DEFAULT_N_MAX).unwrap();
        assert!(compare(&cfg, &exact, &h).unwrap().passed);

        let wrong_cfg = SourceConfig { e_h: 0.5, ..cfg };
        let wrong = output_distribution(&wrong_cfg, DEFAULT_N_MAX).unwrap();
        assert!(!compare_distribution(&wrong, &h).passed);
        assert!(matches!(compare(&wrong_cfg, &wrong, &h), Err(Error::Mismatch(_))));
    }

    #[test]
    fn impossible_bins_fail() {
        let cfg = SourceConfig::ideal(0, 0.5);
        let h = simulate(&cfg, &McConfig::new(10_000, 3)).unwrap();
        let report = compare_distribution(&PhotonDistribution::vacuum(DEFAULT_N_MAX), &h);
        assert!(!report.passed);
        assert!(report.max_abs_z.is_infinite());
    }
}
