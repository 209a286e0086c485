//! Seeded synthetic datasets shaped like the measurements the fitters are
//! meant for. Every generator returns its ground truth alongside the data.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use super::g2::CorrelationHistogram;
use super::lorentz::lorentzian;
use super::{Trace, Unit};
use crate::error::Result;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> f64 {
    if mean <= 0.0 {
        0.0
    } else {
        Poisson::new(mean).expect("positive mean").sample(rng)
    }
}

/// Laser scan across a cavity line: a wavemeter log and the photodiode trace.
#[derive(Debug, Clone, PartialEq)]
pub struct CavityLineScan {
    pub scan_rate_ghz_per_s: f64,
    pub fwhm_ghz: f64,
    pub peak_v: f64,
    pub baseline_v: f64,
    pub noise_v: f64,
    pub duration_s: f64,
    pub samples: usize,
    pub wavemeter_samples: usize,
    pub wavemeter_noise_ghz: f64,
}

impl Default for CavityLineScan {
    fn default() -> Self {
        Self {
            scan_rate_ghz_per_s: 6.0,
            fwhm_ghz: 3.44,
            peak_v: 1.0,
            baseline_v: 0.02,
            noise_v: 0.005,
            duration_s: 6.0,
            samples: 3000,
            wavemeter_samples: 60,
            wavemeter_noise_ghz: 0.02,
        }
    }
}

/// Returns `(wavemeter: s → GHz, transmission: s → V)`.
pub fn cavity_line_scan(seed: u64, p: &CavityLineScan) -> Result<(Trace, Trace)> {
    let mut rng = rng(seed);
    let noise = Normal::new(0.0, p.noise_v.max(0.0)).expect("finite sigma");
    let wm_noise = Normal::new(0.0, p.wavemeter_noise_ghz.max(0.0)).expect("finite sigma");
    let f0 = 326_900.0;
    let t_center = 0.5 * p.duration_s;
    let fwhm_s = p.fwhm_ghz / p.scan_rate_ghz_per_s;
    let t: Vec<f64> = (0..p.samples)
        .map(|i| p.duration_s * i as f64 / (p.samples - 1) as f64)
        .collect();
    let v: Vec<f64> = t
        .iter()
        .map(|&ti| p.baseline_v + lorentzian(ti, t_center, fwhm_s, p.peak_v) + noise.sample(&mut rng))
        .collect();
    let tw: Vec<f64> = (0..p.wavemeter_samples)
        .map(|i| p.duration_s * i as f64 / (p.wavemeter_samples - 1) as f64)
        .collect();
    let fw: Vec<f64> = tw
        .iter()
        .map(|&ti| f0 + p.scan_rate_ghz_per_s * ti + wm_noise.sample(&mut rng))
        .collect();
    Ok((
        Trace::new(tw, fw, Unit::S, Unit::Ghz)?,
        Trace::new(t, v, Unit::S, Unit::V)?,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LifetimeHistogram {
    pub tau_ns: f64,
    /// Decay amplitude at the excitation time, counts per bin.
    pub amplitude: f64,
    pub offset: f64,
    pub excitation_ns: f64,
    pub bin_ns: f64,
    pub n_bins: usize,
}

impl Default for LifetimeHistogram {
    fn default() -> Self {
        Self {
            tau_ns: 7.3,
            amplitude: 2000.0,
            offset: 0.0,
            excitation_ns: 5.0,
            bin_ns: 0.1,
            n_bins: 1000,
        }
    }
}

impl LifetimeHistogram {
    pub fn expected(&self, t: f64) -> f64 {
        if t < self.excitation_ns {
            self.offset
        } else {
            self.amplitude * (-(t - self.excitation_ns) / self.tau_ns).exp() + self.offset
        }
    }
}

/// Time-resolved photoluminescence histogram (ns → counts). Poisson noise is
/// applied when `seed` is given; `None` returns the noiseless model.
pub fn lifetime_histogram(seed: Option<u64>, p: &LifetimeHistogram) -> Result<Trace> {
    let mut rng = seed.map(rng);
    let t: Vec<f64> = (0..p.n_bins).map(|i| i as f64 * p.bin_ns).collect();
    let y = t
        .iter()
        .map(|&ti| {
            let m = p.expected(ti);
            match rng.as_mut() {
                Some(r) => poisson(r, m),
                None => m,
            }
        })
        .collect();
    Trace::new(t, y, Unit::Ns, Unit::Counts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct G2Histogram {
    pub period_ns: f64,
    /// Central-to-side peak area ratio.
    pub g2_zero: f64,
    pub tau_decay_ns: f64,
    /// Side-peak height in counts per bin.
    pub side_peak_counts: f64,
    pub bin_ns: f64,
    pub half_span_ns: f64,
    /// Height of the recombination artifacts at ±`artifact_delay_ns`; zero
    /// disables them.
    pub artifact_counts: f64,
    pub artifact_delay_ns: f64,
    pub artifact_width_ns: f64,
}

impl Default for G2Histogram {
    fn default() -> Self {
        Self {
            period_ns: super::g2::DEFAULT_PERIOD_NS,
            g2_zero: 0.024,
            tau_decay_ns: 6.5,
            side_peak_counts: 400.0,
            bin_ns: 0.25,
            half_span_ns: 260.0,
            artifact_counts: 150.0,
            artifact_delay_ns: 17.0,
            artifact_width_ns: 1.5,
        }
    }
}

impl G2Histogram {
    pub fn expected(&self, tau: f64) -> f64 {
        let kmax = ((self.half_span_ns + 40.0 * self.tau_decay_ns) / self.period_ns).ceil() as i64;
        let mut v = 0.0;
        for k in -kmax..=kmax {
            let a = if k == 0 {
                self.g2_zero * self.side_peak_counts
            } else {
                self.side_peak_counts
            };
            v += a * (-(tau - k as f64 * self.period_ns).abs() / self.tau_decay_ns).exp();
        }
        for s in [-1.0, 1.0] {
            let u = (tau - s * self.artifact_delay_ns) / self.artifact_width_ns;
            v += self.artifact_counts * (-0.5 * u * u).exp();
        }
        v
    }
}

/// Pulsed autocorrelation histogram; Poisson noise when `seed` is given.
pub fn g2_histogram(seed: Option<u64>, p: &G2Histogram) -> Result<CorrelationHistogram> {
    let mut rng = seed.map(rng);
    let n = (p.half_span_ns / p.bin_ns).round() as i64;
    let taus: Vec<f64> = (-n..=n).map(|i| i as f64 * p.bin_ns).collect();
    let counts = taus
        .iter()
        .map(|&t| {
            let m = p.expected(t);
            match rng.as_mut() {
                Some(r) => poisson(r, m),
                None => m,
            }
        })
        .collect();
    CorrelationHistogram::new(taus, counts, p.period_ns)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpectrum {
    /// Target RMS length noise integrated up to `f_max_hz`.
    pub sigma_rms_pm: f64,
    pub finesse: f64,
    pub wavelength_nm: f64,
    pub f_max_hz: f64,
    pub df_hz: f64,
    pub n_resonances: usize,
    /// Fraction of the noise power in the flat floor.
    pub floor_fraction: f64,
}

impl NoiseSpectrum {
    /// Fiber mirror free-standing: acoustic resonances dominate.
    pub fn free() -> Self {
        Self {
            sigma_rms_pm: 45.0,
            finesse: 1e4,
            wavelength_nm: 917.0,
            f_max_hz: 5000.0,
            df_hz: 0.25,
            n_resonances: 6,
            floor_fraction: 0.15,
        }
    }

    /// Fiber mirror in contact with the membrane.
    pub fn contact() -> Self {
        Self {
            sigma_rms_pm: 16.0,
            n_resonances: 3,
            floor_fraction: 0.3,
            ..Self::free()
        }
    }
}

/// One-sided amplitude spectral density (Hz → relative transmission per
/// √Hz) made of a white floor and Lorentzian resonances, scaled so that its
/// analytic integral up to `f_max_hz` equals the requested RMS length noise.
/// Returns the spectrum and that analytic ground truth in pm.
pub fn noise_spectrum(seed: u64, p: &NoiseSpectrum) -> Result<(Trace, f64)> {
    let mut rng = rng(seed);
    let peaks: Vec<(f64, f64, f64)> = (0..p.n_resonances)
        .map(|_| {
            let f0 = rng.random_range(40.0..0.6 * p.f_max_hz);
            let gamma = rng.random_range(2.0..12.0);
            let w = rng.random_range(0.2..1.0);
            (f0, gamma, w)
        })
        .collect();
    let fm = p.f_max_hz;
    let peak_area = |&(f0, g, w): &(f64, f64, f64)| {
        w / PI * (((fm - f0) / g).atan() - ((0.0 - f0) / g).atan())
    };
    let peaks_total: f64 = peaks.iter().map(peak_area).sum();
    let scale = super::noise::length_per_relative_transmission_pm(p.finesse, p.wavelength_nm);
    let target_power = (p.sigma_rms_pm / scale).powi(2);
    let floor_density = if peaks.is_empty() {
        target_power / fm
    } else {
        p.floor_fraction * target_power / fm
    };
    let peak_scale = if peaks.is_empty() {
        0.0
    } else {
        (1.0 - p.floor_fraction) * target_power / peaks_total
    };
    let n = (fm / p.df_hz).round() as usize;
    let f: Vec<f64> = (0..=n).map(|i| i as f64 * fm / n as f64).collect();
    let asd = f
        .iter()
        .map(|&fi| {
            let psd = floor_density
                + peaks
                    .iter()
                    .map(|&(f0, g, w)| peak_scale * w * g / PI / ((fi - f0).powi(2) + g * g))
                    .sum::<f64>();
            psd.sqrt()
        })
        .collect();
    Ok((Trace::new(f, asd, Unit::Hz, Unit::Rel)?, p.sigma_rms_pm))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Emitter {
    /// Position on the relative frequency axis of the scan.
    pub frequency_ghz: f64,
    /// Convolved cavity-emitter linewidth.
    pub fwhm_ghz: f64,
    /// Peak ZPL count rate (counts/s) on resonance.
    pub peak_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZplScan {
    pub emitters: Vec<Emitter>,
    pub slope_ghz_per_step: f64,
    pub n_steps: usize,
    pub background_rate: f64,
    pub pixels: usize,
    pub center_nm: f64,
    pub pixel_nm: f64,
    /// Integration time per spectrum; Poisson noise scales with it.
    pub exposure_s: f64,
}

impl Default for ZplScan {
    fn default() -> Self {
        Self {
            emitters: vec![
                Emitter { frequency_ghz: 22.0, fwhm_ghz: 4.8, peak_rate: 30_000.0 },
                Emitter { frequency_ghz: 38.0, fwhm_ghz: 3.8, peak_rate: 9_000.0 },
                Emitter { frequency_ghz: 55.0, fwhm_ghz: 4.3, peak_rate: 14_000.0 },
                Emitter { frequency_ghz: 72.0, fwhm_ghz: 5.0, peak_rate: 6_000.0 },
            ],
            slope_ghz_per_step: 0.25,
            n_steps: 380,
            background_rate: 400.0,
            pixels: 40,
            center_nm: 917.0,
            pixel_nm: 0.02,
            exposure_s: 1.0,
        }
    }
}

impl ZplScan {
    /// Noiseless integrated rate at relative frequency `f`.
    pub fn expected_rate(&self, f: f64) -> f64 {
        self.background_rate
            + self
                .emitters
                .iter()
                .map(|e| lorentzian(f, e.frequency_ghz, e.fwhm_ghz, e.peak_rate))
                .sum::<f64>()
    }
}

/// Stack of spectra (nm → counts/s), one per scan step. The rate in each
/// spectrum is spread over a Gaussian spectral line; Poisson noise is applied
/// when `seed` is given.
pub fn zpl_scan(seed: Option<u64>, p: &ZplScan) -> Result<Vec<Trace>> {
    let mut rng = seed.map(rng);
    let half = (p.pixels as f64 - 1.0) / 2.0;
    let x: Vec<f64> = (0..p.pixels)
        .map(|i| p.center_nm + (i as f64 - half) * p.pixel_nm)
        .collect();
    let sigma_px = p.pixels as f64 / 10.0;
    let weights: Vec<f64> = (0..p.pixels)
        .map(|i| (-0.5 * ((i as f64 - half) / sigma_px).powi(2)).exp())
        .collect();
    let wsum: f64 = weights.iter().sum();
    (0..p.n_steps)
        .map(|k| {
            let rate = p.expected_rate(k as f64 * p.slope_ghz_per_step);
            let y = weights
                .iter()
                .map(|w| {
                    let m = rate * w / wsum;
                    match rng.as_mut() {
                        Some(r) => poisson(r, m * p.exposure_s) / p.exposure_s,
                        None => m,
                    }
                })
                .collect();
            Trace::new(x.clone(), y, Unit::Nm, Unit::Counts)
        })
        .collect()
}

/// Noiseless transmission comb (arbitrary x units) for finesse extraction.
pub fn transmission_comb(spacing: f64, fwhm: f64, n_peaks: usize, samples_per_fwhm: usize) -> Result<Trace> {
    let dx = fwhm / samples_per_fwhm as f64;
    let lo = -0.5 * spacing;
    let hi = (n_peaks as f64 - 0.5) * spacing;
    let n = ((hi - lo) / dx).round() as usize;
    let x: Vec<f64> = (0..=n).map(|i| lo + i as f64 * dx).collect();
    let y = x
        .iter()
        .map(|&v| {
            (0..n_peaks)
                .map(|j| lorentzian(v, j as f64 * spacing, fwhm, 1.0))
                .sum()
        })
        .collect();
    Trace::new(x, y, Unit::Ghz, Unit::V)
}
