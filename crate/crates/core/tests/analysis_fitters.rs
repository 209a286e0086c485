use fibercav::analysis::g2::{fit_g2_pulsed, G2Options};
use fibercav::analysis::lifetime::fit_lifetime;
use fibercav::analysis::lorentz::{
    calibrate_scan_slope, finesse_from_scan, fit_lorentzian, zpl_frequency_distribution, PeakCount,
};
use fibercav::analysis::noise::{length_per_relative_transmission_pm, noise_rms_from_fft};
use fibercav::analysis::synth::{self, CavityLineScan, G2Histogram, LifetimeHistogram, NoiseSpectrum, ZplScan};
use fibercav::analysis::{aggregate_line_series, Trace, Unit};
use proptest::prelude::*;

const SEED: u64 = 20241016;

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

/// Transmission trace converted to GHz through the wavemeter calibration.
fn line_in_ghz(wavemeter: &Trace, scan: &Trace) -> (Trace, f64) {
    let cal = calibrate_scan_slope(wavemeter).unwrap();
    let slope = cal.value("slope");
    let x: Vec<f64> = scan.x().iter().map(|t| t * slope).collect();
    (Trace::new(x, scan.y().to_vec(), Unit::Ghz, Unit::V).unwrap(), slope)
}

#[test]
fn noiseless_lorentzian_exact() {
    let p = CavityLineScan {
        noise_v: 0.0,
        wavemeter_noise_ghz: 0.0,
        ..CavityLineScan::default()
    };
    let (wm, scan) = synth::cavity_line_scan(1, &p).unwrap();
    let (trace, slope) = line_in_ghz(&wm, &scan);
    assert!(rel(slope, 6.0) < 1e-9);
    let fit = fit_lorentzian(&trace, 1, None).unwrap();
    assert!(fit.converged);
    assert!(rel(fit.value("fwhm_0"), 3.44) < 1e-6, "{fit:?}");
    assert!(rel(fit.value("center_0"), 18.0) < 1e-6);
    assert!(rel(fit.value("amplitude_0"), 1.0) < 1e-6);
}

#[test]
fn operating_point_linewidth() {
    let fits: Vec<_> = (0..10)
        .map(|k| {
            let (wm, scan) = synth::cavity_line_scan(SEED + k, &CavityLineScan::default()).unwrap();
            fit_lorentzian(&line_in_ghz(&wm, &scan).0, 1, None).unwrap()
        })
        .collect();
    let s = aggregate_line_series(&fits).unwrap();
    assert_eq!(s.n_fits_used, 10);
    assert!(rel(s.mean_fwhm, 3.44) < 0.02, "{s:?}");
}

#[test]
fn fwhm_uncertainty_scales_as_inverse_sqrt_samples() {
    let sigma_for = |n: usize| {
        let p = CavityLineScan {
            samples: 1000 * n,
            ..CavityLineScan::default()
        };
        let (wm, scan) = synth::cavity_line_scan(SEED, &p).unwrap();
        fit_lorentzian(&line_in_ghz(&wm, &scan).0, 1, None).unwrap().sigma("fwhm_0")
    };
    let s1 = sigma_for(1);
    for n in [4usize, 16] {
        let ratio = s1 / sigma_for(n);
        let expected = (n as f64).sqrt();
        assert!(rel(ratio, expected) < 0.2, "N = {n}: ratio {ratio}");
    }
}

#[test]
fn noiseless_lifetime_exact() {
    for tau in [5.6, 7.3] {
        let p = LifetimeHistogram {
            tau_ns: tau,
            offset: 12.0,
            ..LifetimeHistogram::default()
        };
        let fit = fit_lifetime(&synth::lifetime_histogram(None, &p).unwrap(), p.excitation_ns).unwrap();
        assert!(rel(fit.value("tau_ns"), tau) < 1e-6);
        assert!(rel(fit.value("amplitude"), 2000.0) < 1e-6);
        assert!(rel(fit.value("offset"), 12.0) < 1e-6);
    }
}

#[test]
fn noisy_lifetime_within_two_percent() {
    for tau in [5.6, 7.3] {
        let p = LifetimeHistogram {
            tau_ns: tau,
            ..LifetimeHistogram::default()
        };
        let fit = fit_lifetime(&synth::lifetime_histogram(Some(SEED), &p).unwrap(), p.excitation_ns).unwrap();
        assert!(rel(fit.value("tau_ns"), tau) < 0.02, "{fit:?}");
        assert!((fit.value("tau_ns") - tau).abs() < 3.0 * fit.sigma("tau_ns"));
    }
}

#[test]
fn noiseless_g2_exact() {
    let p = G2Histogram {
        artifact_counts: 0.0,
        ..G2Histogram::default()
    };
    let fit = fit_g2_pulsed(&synth::g2_histogram(None, &p).unwrap(), &G2Options::default()).unwrap();
    assert!((fit.value("g2_zero") - 0.024).abs() < 1e-6 * 0.024 + 1e-9, "{fit:?}");
    assert!(rel(fit.value("tau_decay_ns"), 6.5) < 1e-6);
    assert!(rel(fit.value("peak_period_ns"), 42.735) < 1e-6);
}

#[test]
fn g2_artifacts_bias_unless_excluded() {
    let hist = synth::g2_histogram(Some(SEED), &G2Histogram::default()).unwrap();
    let with = fit_g2_pulsed(&hist, &G2Options::default()).unwrap();
    let without = fit_g2_pulsed(&hist, &G2Options::without_exclusions()).unwrap();
    let g = with.value("g2_zero");
    let s = with.sigma("g2_zero");
    assert!((g - 0.024).abs() <= s, "g2 {g} ± {s}");
    let bias = without.value("g2_zero") - g;
    assert!(bias > 3.0 * s, "bias {bias} vs σ {s}");
    assert_eq!(with.exclusion_windows.len(), 2);
}

#[test]
fn g2_half_ratio_with_poisson_noise() {
    let p = G2Histogram {
        g2_zero: 0.5,
        artifact_counts: 0.0,
        ..G2Histogram::default()
    };
    let fit = fit_g2_pulsed(&synth::g2_histogram(Some(SEED), &p).unwrap(), &G2Options::default()).unwrap();
    let (g, s) = (fit.value("g2_zero"), fit.sigma("g2_zero"));
    assert!((g - 0.5).abs() < 3.0 * s, "{g} ± {s}");
    assert!(s < 0.05);
}

#[test]
fn sinusoidal_modulation_parseval() {
    let (finesse, wl) = (1e4, 917.0);
    let scale = length_per_relative_transmission_pm(finesse, wl);
    for a_pm in [3.0, 30.0] {
        // Narrow Gaussian line at 120 Hz carrying the power of a sinusoid of
        // amplitude a in the relative transmission units.
        let power = (a_pm / scale).powi(2) / 2.0;
        let (f0, w, df) = (120.0, 0.5, 0.01);
        let f: Vec<f64> = (0..100_000).map(|i| i as f64 * df).collect();
        let asd: Vec<f64> = f
            .iter()
            .map(|&x| {
                let d = power / (w * (2.0 * std::f64::consts::PI).sqrt()) * (-0.5 * ((x - f0) / w).powi(2)).exp();
                d.sqrt()
            })
            .collect();
        let trace = Trace::new(f, asd, Unit::Hz, Unit::Rel).unwrap();
        let est = noise_rms_from_fft(&trace, finesse, wl, 900.0).unwrap();
        assert!(rel(est.sigma_rms_pm, a_pm / 2f64.sqrt()) < 0.01);
    }
}

#[test]
fn noise_spectra_reproduce_ground_truth() {
    for (p, target) in [(NoiseSpectrum::free(), 45.0), (NoiseSpectrum::contact(), 16.0)] {
        let (trace, truth) = synth::noise_spectrum(SEED, &p).unwrap();
        assert!(rel(truth, target) < 1e-9);
        let est = noise_rms_from_fft(&trace, p.finesse, p.wavelength_nm, p.f_max_hz).unwrap();
        assert!(rel(est.sigma_rms_pm, truth) < 0.02, "{} vs {truth}", est.sigma_rms_pm);
    }
}

#[test]
fn zpl_distribution_recovers_emitters() {
    let scan = ZplScan::default();
    let spectra = synth::zpl_scan(None, &scan).unwrap();
    let dist = zpl_frequency_distribution(&spectra, scan.slope_ghz_per_step, None, PeakCount::Fixed(4)).unwrap();
    for (k, e) in scan.emitters.iter().enumerate() {
        let c = dist.fit.value(&format!("center_{k}"));
        assert!((c - e.frequency_ghz).abs() < 0.05, "center {c} vs {}", e.frequency_ghz);
        let w = dist.fit.value(&format!("fwhm_{k}"));
        assert!(rel(w, e.fwhm_ghz) < 0.02, "fwhm {w} vs {}", e.fwhm_ghz);
    }
}

#[test]
fn finesse_from_comb() {
    let trace = synth::transmission_comb(100.0, 0.01, 3, 20).unwrap();
    let fit = finesse_from_scan(&trace).unwrap();
    assert!(rel(fit.value("finesse"), 1e4) < 1e-4, "{fit:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lorentzian_self_consistent(
        center in -5.0f64..5.0,
        fwhm in 0.5f64..4.0,
        amp in 0.1f64..10.0,
        base in -1.0f64..1.0,
    ) {
        let x: Vec<f64> = (0..400).map(|i| -20.0 + 0.1 * i as f64).collect();
        let y: Vec<f64> = x.iter().map(|&xi| base + amp / (1.0 + (2.0 * (xi - center) / fwhm).powi(2))).collect();
        let fit = fit_lorentzian(&Trace::new(x, y, Unit::Ghz, Unit::V).unwrap(), 1, None).unwrap();
        prop_assert!(rel(fit.value("center_0") - 100.0, center - 100.0) < 1e-6);
        prop_assert!(rel(fit.value("fwhm_0"), fwhm) < 1e-6);
        prop_assert!(rel(fit.value("amplitude_0"), amp) < 1e-6);
    }

    #[test]
    fn lifetime_self_consistent(tau in 1.0f64..20.0, amp in 10.0f64..1e4, offset in 0.0f64..100.0) {
        let p = LifetimeHistogram { tau_ns: tau, amplitude: amp, offset, ..LifetimeHistogram::default() };
        let fit = fit_lifetime(&synth::lifetime_histogram(None, &p).unwrap(), p.excitation_ns).unwrap();
        prop_assert!(rel(fit.value("tau_ns"), tau) < 1e-6);
    }

    #[test]
    fn g2_self_consistent(g2 in 0.0f64..0.8, tau_d in 2.0f64..10.0, counts in 50.0f64..5000.0) {
        let p = G2Histogram { g2_zero: g2, tau_decay_ns: tau_d, side_peak_counts: counts, artifact_counts: 0.0, ..G2Histogram::default() };
        let fit = fit_g2_pulsed(&synth::g2_histogram(None, &p).unwrap(), &G2Options::default()).unwrap();
        prop_assert!((fit.value("g2_zero") - g2).abs() < 1e-6 * g2.max(1e-3));
        prop_assert!(rel(fit.value("tau_decay_ns"), tau_d) < 1e-6);
    }

    #[test]
    fn g2_ignores_empty_exclusion_windows(lo in 300.0f64..400.0, width in 0.1f64..50.0, scale in 0.01f64..100.0) {
        let p = G2Histogram { artifact_counts: 0.0, ..G2Histogram::default() };
        let hist = synth::g2_histogram(Some(SEED), &p).unwrap();
        let base = fit_g2_pulsed(&hist, &G2Options::default()).unwrap();
        let mut opts = G2Options::default();
        opts.exclusions.push((lo, lo + width));
        opts.exclusions.push((-lo - width, -lo));
        let with_empty = fit_g2_pulsed(&hist, &opts).unwrap();
        prop_assert_eq!(base.value("g2_zero"), with_empty.value("g2_zero"));
        let scaled = fibercav::analysis::g2::CorrelationHistogram::new(
            hist.tau_bins_ns.clone(),
            hist.coincidences.iter().map(|c| c * scale).collect(),
            hist.repetition_period_ns,
        ).unwrap();
        let fs = fit_g2_pulsed(&scaled, &G2Options::default()).unwrap();
        prop_assert!(rel(fs.value("g2_zero"), base.value("g2_zero")) < 1e-6);
    }
}
