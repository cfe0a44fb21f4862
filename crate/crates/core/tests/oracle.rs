//! Analytic distributions against the event-level simulation.

use msps_core::{
    compare, heralded_distribution, ideal_distribution, output_distribution, simulate, with_dark_counts,
    McConfig, McHistogram, PhotonDistribution, SourceConfig, DEFAULT_N_MAX,
};

/// Every bin within `sigmas` binomial standard errors.
fn assert_bins_within(analytic: &PhotonDistribution, hist: &McHistogram, sigmas: f64) {
    let n = hist.trials as f64;
    for k in 0..hist.counts.len().max(6) {
        let p = analytic.get(k);
        let sd = (p * (1.0 - p) / n).sqrt();
        let f = hist.frequency(k);
        assert!(
            (f - p).abs() <= sigmas * sd + 1e-12,
            "bin {k}: simulated {f}, analytic {p}, sd {sd}"
        );
    }
}

#[test]
fn ideal_source_three_stages() {
    let cfg = SourceConfig::ideal(3, 0.05);
    let hist = simulate(&cfg, &McConfig::new(10_000_000, 2024)).unwrap();
    let exact = ideal_distribution(&cfg, DEFAULT_N_MAX).unwrap();
    assert!((exact.p0() - (-0.4f64).exp()).abs() < 1e-15);
    assert_bins_within(&exact, &hist, 3.0);
}

#[test]
fn heralding_inefficiency() {
    // Lossless signal branch: the routed window is observed directly.
    let cfg = SourceConfig {
        e_h: 0.85,
        ..SourceConfig::ideal(4, 0.1)
    };
    let hist = simulate(&cfg, &McConfig::new(10_000_000, 7)).unwrap();
    let exact = heralded_distribution(&cfg, 16, DEFAULT_N_MAX).unwrap().distribution;
    assert_bins_within(&exact, &hist, 3.0);
}

#[test]
fn dark_counts_shorten_interval() {
    let cfg = SourceConfig {
        e_h: 0.85,
        ..SourceConfig::ideal(4, 0.1)
    }
    .with_dark_probability(0.01);
    let hist = simulate(&cfg, &McConfig::new(10_000_000, 8)).unwrap();
    let exact = with_dark_counts(&cfg, DEFAULT_N_MAX).unwrap();
    assert_bins_within(&exact, &hist, 3.0);

    // The shortened interval is distinguishable from ignoring dark counts.
    let ignored = with_dark_counts(&SourceConfig { r_dark: 0.0, ..cfg }, DEFAULT_N_MAX).unwrap();
    let sd = (ignored.p0() * (1.0 - ignored.p0()) / 1e7).sqrt();
    assert!((hist.frequency(0) - ignored.p0()).abs() > 10.0 * sd);
}

#[test]
fn full_chain_half_db_four_stages() {
    let cfg = SourceConfig::lossy(4, 0.1, 0.5);
    let hist = simulate(&cfg, &McConfig::new(1_000_000, 42)).unwrap();
    let exact = output_distribution(&cfg, DEFAULT_N_MAX).unwrap();
    assert!((hist.frequency(1) - exact.p1()).abs() < 0.002);
    assert!(compare(&cfg, &exact, &hist).unwrap().passed);
}

#[test]
fn heavy_pump_with_strong_dark_counts() {
    let cfg = SourceConfig::lossy(2, 1.5, 1.0).with_dark_probability(0.2);
    let hist = simulate(&cfg, &McConfig::new(2_000_000, 99)).unwrap();
    let exact = output_distribution(&cfg, DEFAULT_N_MAX).unwrap();
    let report = compare(&cfg, &exact, &hist).unwrap();
    assert!(report.passed, "{report:?}");
}
