//! Imperfect-device chain: finite heralding efficiency, dark counts that
//! shorten the correction interval, and binomial loss on the signal branch.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::photon_stats::{check_n_max, ideal_distribution, poisson_vector, PhotonDistribution};
use crate::source::SourceConfig;

/// Routed-window distribution with a heralding detector of efficiency `e_h`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeraldedDistribution {
    pub distribution: PhotonDistribution,
    /// `false` when no herald can ever fire (`e_h = 0` or `mu = 0`), in which
    /// case only the bypass branch contributes.
    pub herald_possible: bool,
}

/// The two conditional window distributions the mixtures are built from:
/// a window whose idler clicked, and a window whose idlers were all lost.
struct HeraldBranches {
    clicked: Vec<f64>,
    silent: Vec<f64>,
}

impl HeraldBranches {
    /// `None` when the clicked branch has zero weight.
    fn new(mu: f64, e_h: f64, n_max: usize) -> Option<Self> {
        // Sum_j P_j(mu) (1 - e_h)^j = e^(-mu e_h), so the silent branch is
        // Poisson(mu (1 - e_h)).
        let silent = poisson_vector(mu * (1.0 - e_h), n_max);
        if mu == 0.0 || e_h == 0.0 {
            return None;
        }
        let click_norm = -(-mu * e_h).exp_m1();
        let miss_ln = (-e_h).ln_1p();
        let clicked = poisson_vector(mu, n_max)
            .into_iter()
            .enumerate()
            .map(|(n, p)| {
                let at_least_one = if n == 0 { 0.0 } else { -(n as f64 * miss_ln).exp_m1() };
                p * at_least_one / click_norm
            })
            .collect();
        Some(Self { clicked, silent })
    }

    /// `herald * clicked + no_herald * silent`; both weights are passed so
    /// callers can supply `1 - w` without cancellation.
    fn mix(&self, no_herald: f64, herald: f64) -> Result<PhotonDistribution> {
        let probs = self
            .clicked
            .iter()
            .zip(&self.silent)
            .map(|(c, s)| herald * c + no_herald * s)
            .collect();
        PhotonDistribution::from_probs(probs)
    }
}

fn no_herald_weight(mu: f64, e_h: f64, windows: u64) -> (f64, f64) {
    let x = -(windows as f64) * mu * e_h;
    (x.exp(), -x.exp_m1())
}

/// Distribution of the routed window when the correction interval spans
/// `n_windows` single windows and only heralding inefficiency is present.
///
/// With probability `1 - e^(-n_windows mu e_h)` some idler is detected and
/// the first clicked window is routed; otherwise the last window is routed.
pub fn heralded_distribution(
    cfg: &SourceConfig,
    n_windows: u64,
    n_max: usize,
) -> Result<HeraldedDistribution> {
    cfg.validate()?;
    check_n_max(n_max)?;
    if n_windows == 0 || n_windows > cfg.windows() {
        return Err(Error::Domain(format!(
            "n_windows must be in 1..={}, got {n_windows}",
            cfg.windows()
        )));
    }
    match HeraldBranches::new(cfg.mu, cfg.e_h, n_max) {
        Some(branches) => {
            let (w, one_minus_w) = no_herald_weight(cfg.mu, cfg.e_h, n_windows);
            Ok(HeraldedDistribution {
                distribution: branches.mix(w, one_minus_w)?,
                herald_possible: true,
            })
        }
        None => Ok(HeraldedDistribution {
            distribution: PhotonDistribution::from_probs(poisson_vector(cfg.mu, n_max))?,
            herald_possible: false,
        }),
    }
}

/// Heralded distribution averaged over the window of the first dark count.
///
/// A dark count in window `l` (probability `(1-P_dark)^(l-1) P_dark`)
/// shortens the interval to `l` windows; with no dark count the full
/// `2^m` interval applies. Every term is linear in the no-herald weight, so
/// the mixture collapses to a single weight summed as a geometric series.
pub fn with_dark_counts(cfg: &SourceConfig, n_max: usize) -> Result<PhotonDistribution> {
    cfg.validate()?;
    check_n_max(n_max)?;
    let windows = cfg.windows();
    let Some(branches) = HeraldBranches::new(cfg.mu, cfg.e_h, n_max) else {
        return PhotonDistribution::from_probs(poisson_vector(cfg.mu, n_max));
    };
    let p_dark = cfg.dark_probability();
    if p_dark == 0.0 {
        let (w, one_minus_w) = no_herald_weight(cfg.mu, cfg.e_h, windows);
        return branches.mix(w, one_minus_w);
    }

    // ln(q x) with q = 1 - P_dark and x = e^(-mu e_h)
    let ln_qx = (-p_dark).ln_1p() - cfg.mu * cfg.e_h;
    let x = (-cfg.mu * cfg.e_h).exp();
    let qx_pow = (windows as f64 * ln_qx).exp();
    let series = p_dark * x * (-(windows as f64 * ln_qx).exp_m1()) / (-ln_qx.exp_m1());
    let w = (series + qx_pow).min(1.0);
    branches.mix(w, 1.0 - w)
}

/// Independent loss of each photon with survival probability `transmission`.
pub fn apply_signal_loss(dist: &PhotonDistribution, transmission: f64) -> Result<PhotonDistribution> {
    if !(0.0..=1.0).contains(&transmission) {
        return Err(Error::Domain(format!(
            "transmission must be in [0, 1], got {transmission}"
        )));
    }
    if transmission == 1.0 {
        return Ok(dist.clone());
    }
    let n_max = dist.n_max();
    let mut out = vec![0.0; n_max + 1];
    if transmission == 0.0 {
        out[0] = dist.probs().iter().sum::<f64>().min(1.0);
        return PhotonDistribution::from_probs(out);
    }
    let ln_fact: Vec<f64> = std::iter::once(0.0)
        .chain((1..=n_max).scan(0.0, |acc, i| {
            *acc += (i as f64).ln();
            Some(*acc)
        }))
        .collect();
    let (ln_p, ln_q) = (transmission.ln(), (-transmission).ln_1p());
    for (n, &pn) in dist.probs().iter().enumerate() {
        if pn == 0.0 {
            continue;
        }
        for (k, slot) in out.iter_mut().enumerate().take(n + 1) {
            let ln_binom = ln_fact[n] - ln_fact[k] - ln_fact[n - k];
            *slot += pn * (ln_binom + k as f64 * ln_p + (n - k) as f64 * ln_q).exp();
        }
    }
    PhotonDistribution::from_probs(out)
}

/// Signal transmission through the static optics and the `m + 1` switches
/// every routed photon traverses.
pub fn total_signal_transmission(cfg: &SourceConfig) -> f64 {
    cfg.total_signal_transmission()
}

/// End-to-end photon-number distribution at the source output.
pub fn output_distribution(cfg: &SourceConfig, n_max: usize) -> Result<PhotonDistribution> {
    let routed = with_dark_counts(cfg, n_max)?;
    apply_signal_loss(&routed, total_signal_transmission(cfg))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ideal,
    Heralded,
    Dark,
    Final,
}

impl Stage {
    pub fn label(self) -> &'static str {
        match self {
            Stage::Ideal => "ideal",
            Stage::Heralded => "heralded",
            Stage::Dark => "dark",
            Stage::Final => "final",
        }
    }
}

/// Intermediate distributions of the loss chain, in chain order.
#[derive(Debug, Clone, PartialEq)]
pub struct LossChainTrace {
    stages: Vec<(Stage, PhotonDistribution)>,
}

impl LossChainTrace {
    pub fn stages(&self) -> &[(Stage, PhotonDistribution)] {
        &self.stages
    }

    pub fn get(&self, stage: Stage) -> &PhotonDistribution {
        &self
            .stages
            .iter()
            .find(|(s, _)| *s == stage)
            .expect("every stage is recorded")
            .1
    }

    pub fn output(&self) -> &PhotonDistribution {
        self.get(Stage::Final)
    }
}

/// [`output_distribution`] with every intermediate stage retained.
pub fn output_trace(cfg: &SourceConfig, n_max: usize) -> Result<LossChainTrace> {
    let ideal = ideal_distribution(cfg, n_max)?;
    let heralded = heralded_distribution(cfg, cfg.windows(), n_max)?.distribution;
    let dark = with_dark_counts(cfg, n_max)?;
    let output = apply_signal_loss(&dark, total_signal_transmission(cfg))?;
    Ok(LossChainTrace {
        stages: vec![
            (Stage::Ideal, ideal),
            (Stage::Heralded, heralded),
            (Stage::Dark, dark),
            (Stage::Final, output),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photon_stats::{poisson_distribution, snr, DEFAULT_N_MAX};

    const N: usize = DEFAULT_N_MAX;

    fn lossy(m: u32, mu: f64) -> SourceConfig {
        SourceConfig::lossy(m, mu, 0.5)
    }

    /// Heralded mixture written out term by term, with both normalizers
    /// summed over the truncated support.
    fn heralded_by_sums(mu: f64, e_h: f64, windows: u64, n_max: usize) -> Vec<f64> {
        let p: Vec<f64> = (0..=n_max)
            .map(|n| {
                let fact: f64 = (1..=n).map(|i| i as f64).product();
                (-mu).exp() * mu.powi(n as i32) / fact
            })
            .collect();
        let miss: Vec<f64> = (0..=n_max).map(|n| (1.0 - e_h).powi(n as i32)).collect();
        let click_norm: f64 = p.iter().zip(&miss).map(|(p, m)| p * (1.0 - m)).sum();
        let miss_norm: f64 = p.iter().zip(&miss).map(|(p, m)| p * m).sum();
        let w = (-(windows as f64) * mu * e_h).exp();
        (0..=n_max)
            .map(|n| (1.0 - w) * p[n] * (1.0 - miss[n]) / click_norm + w * p[n] * miss[n] / miss_norm)
            .collect()
    }

    #[test]
    fn heralded_matches_explicit_sums() {
        for &(mu, e_h, m) in &[(0.1, 0.85, 4), (0.5, 0.3, 2), (1.5, 0.99, 3), (1e-3, 0.05, 5)] {
            let cfg = SourceConfig { e_h, ..lossy(m, mu) };
            for l in [1, 3, cfg.windows()] {
                let d = heralded_distribution(&cfg, l, N).unwrap().distribution;
                let oracle = heralded_by_sums(mu, e_h, l, N);
                for n in 0..=N {
                    assert!((d.get(n) - oracle[n]).abs() < 1e-12, "{mu} {e_h} {m} {l} {n}");
                }
            }
        }
    }

    #[test]
    fn heralded_perfect_detector_is_ideal() {
        for m in 0..8 {
            let cfg = SourceConfig::ideal(m, 0.2);
            let h = heralded_distribution(&cfg, cfg.windows(), N).unwrap();
            let ideal = ideal_distribution(&cfg, N).unwrap();
            assert!(h.distribution.max_abs_diff(&ideal) < 1e-12);
        }
    }

    #[test]
    fn heralded_single_window_is_poisson() {
        for &e_h in &[0.05, 0.5, 0.85, 1.0] {
            let cfg = SourceConfig { e_h, ..lossy(0, 0.3) };
            let h = heralded_distribution(&cfg, 1, N).unwrap().distribution;
            assert!(h.max_abs_diff(&poisson_distribution(0.3, N).unwrap()) < 1e-12);
        }
    }

    #[test]
    fn heralded_blind_detector() {
        let cfg = SourceConfig { e_h: 0.0, ..lossy(3, 0.3) };
        let h = heralded_distribution(&cfg, 8, N).unwrap();
        assert!(!h.herald_possible);
        assert!(h.distribution.max_abs_diff(&poisson_distribution(0.3, N).unwrap()) < 1e-15);
    }

    #[test]
    fn heralded_window_bounds() {
        let cfg = lossy(2, 0.1);
        assert!(heralded_distribution(&cfg, 0, N).is_err());
        assert!(heralded_distribution(&cfg, 5, N).is_err());
        assert!(heralded_distribution(&cfg, 4, N).is_ok());
    }

    #[test]
    fn dark_counts_closed_form_matches_explicit_mixture() {
        for &(m, p_dark) in &[(0, 0.3), (2, 0.01), (4, 0.01), (5, 0.2), (6, 0.999)] {
            let cfg = lossy(m, 0.1).with_dark_probability(p_dark);
            let windows = cfg.windows();
            let mut mixture = vec![0.0; N + 1];
            let mut add = |weight: f64, l: u64| {
                let h = heralded_distribution(&cfg, l, N).unwrap().distribution;
                for (slot, p) in mixture.iter_mut().zip(h.probs()) {
                    *slot += weight * p;
                }
            };
            for l in 1..=windows {
                add((1.0 - p_dark).powi(l as i32 - 1) * p_dark, l);
            }
            add((1.0 - p_dark).powi(windows as i32), windows);
            let d = with_dark_counts(&cfg, N).unwrap();
            for n in 0..=N {
                assert!((d.get(n) - mixture[n]).abs() < 1e-12, "m={m} n={n}");
            }
        }
    }

    #[test]
    fn no_dark_counts_is_full_interval() {
        let cfg = lossy(4, 0.1);
        let h = heralded_distribution(&cfg, 16, N).unwrap().distribution;
        assert_eq!(with_dark_counts(&cfg, N).unwrap(), h);
    }

    #[test]
    fn dark_counts_do_not_matter_for_one_window() {
        let cfg = lossy(0, 0.25).with_dark_probability(0.4);
        let d = with_dark_counts(&cfg, N).unwrap();
        assert!(d.max_abs_diff(&poisson_distribution(0.25, N).unwrap()) < 1e-12);
    }

    #[test]
    fn signal_loss_edge_cases() {
        let d = lossy(3, 0.3);
        let d = with_dark_counts(&d, N).unwrap();
        assert_eq!(apply_signal_loss(&d, 1.0).unwrap(), d);
        assert!(apply_signal_loss(&d, 0.0).unwrap().max_abs_diff(&PhotonDistribution::vacuum(N)) < 1e-15);

        let fock = PhotonDistribution::number_state(1, 4);
        let out = apply_signal_loss(&fock, 0.7).unwrap();
        assert!((out.p0() - 0.3).abs() < 1e-15);
        assert!((out.p1() - 0.7).abs() < 1e-15);

        assert!(apply_signal_loss(&fock, 1.1).is_err());
        assert!(apply_signal_loss(&fock, -0.1).is_err());
    }

    #[test]
    fn thinning_by_convolution_oracle() {
        // Brute force: enumerate the survival pattern of every photon.
        let (mu, p) = (0.6, 0.35_f64);
        let n_small = 12;
        let input = poisson_distribution(mu, N).unwrap();
        let mut brute = vec![0.0; n_small + 1];
        for n in 0..=n_small {
            for mask in 0u32..(1 << n) {
                let k = mask.count_ones() as usize;
                brute[k] += input.get(n) * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32);
            }
        }
        let thinned = apply_signal_loss(&input, p).unwrap();
        let target = poisson_distribution(mu * p, N).unwrap();
        for k in 0..=8 {
            assert!((thinned.get(k) - target.get(k)).abs() < 1e-12);
            // Inputs beyond n_small contribute < 1e-10 to these bins.
            assert!((thinned.get(k) - brute[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn transmission_arithmetic() {
        assert_eq!(total_signal_transmission(&SourceConfig::ideal(7, 0.1)), 1.0);
        let cfg = SourceConfig { e_s: 0.9, e_sw_db: 0.5, ..SourceConfig::ideal(0, 0.1) };
        // 40-digit evaluations of 0.9 * 10^-0.05 and 0.9 * 10^-0.5
        assert!((total_signal_transmission(&cfg) - 0.802_125_844_320_370_98).abs() < 1e-14);
        let cfg = SourceConfig { e_sw_db: 1.0, m: 4, ..cfg };
        assert!((total_signal_transmission(&cfg) - 0.284_604_989_415_154_14).abs() < 1e-14);
    }

    #[test]
    fn lossless_chain_is_ideal() {
        for m in [0, 3, 10] {
            let cfg = SourceConfig::ideal(m, 0.05);
            let out = output_distribution(&cfg, N).unwrap();
            assert!(out.max_abs_diff(&ideal_distribution(&cfg, N).unwrap()) < 1e-12);
        }
    }

    #[test]
    fn improvement_numbers_at_half_db() {
        let wcp = output_distribution(&lossy(0, 0.1), N).unwrap();
        let msps = output_distribution(&lossy(4, 0.1), N).unwrap();
        assert!((wcp.p1() - 0.08).abs() < 0.01);
        assert!((msps.p1() - 0.4).abs() < 0.05);
        assert!(snr(&wcp) > 17.0 && snr(&wcp) < 27.0);
    }

    #[test]
    fn trace_order_and_output() {
        let cfg = lossy(3, 0.2).with_dark_probability(0.05);
        let trace = output_trace(&cfg, N).unwrap();
        let labels: Vec<_> = trace.stages().iter().map(|(s, _)| s.label()).collect();
        assert_eq!(labels, ["ideal", "heralded", "dark", "final"]);
        assert_eq!(trace.output(), &output_distribution(&cfg, N).unwrap());
    }
}
