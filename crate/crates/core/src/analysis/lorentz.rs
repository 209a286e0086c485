//! Lorentzian line fits and the measurements built on them.

use serde::Serialize;

use super::lm::{levenberg_marquardt, LmOptions};
use super::{FitResult, Trace, Unit};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeakGuess {
    pub center: f64,
    pub fwhm: f64,
    pub amplitude: f64,
}

/// `A / (1 + ((x - x0) / (w / 2))²)`
pub fn lorentzian(x: f64, center: f64, fwhm: f64, amplitude: f64) -> f64 {
    let u = 2.0 * (x - center) / fwhm;
    amplitude / (1.0 + u * u)
}

/// Baseline plus a sum of Lorentzians; `params` is `[x0, w, A]` per peak
/// followed by the baseline.
pub fn lorentzian_sum(x: f64, params: &[f64]) -> f64 {
    let n = params.len() / 3;
    let mut y = params[3 * n];
    for k in 0..n {
        y += lorentzian(x, params[3 * k], params[3 * k + 1], params[3 * k + 2]);
    }
    y
}

fn half_max_width(x: &[f64], r: &[f64], i: usize) -> f64 {
    let half = 0.5 * r[i];
    let crossing = |a: usize, b: usize| {
        let f = (half - r[a]) / (r[b] - r[a]);
        x[a] + f * (x[b] - x[a])
    };
    let mut lo = i;
    while lo > 0 && r[lo - 1] > half {
        lo -= 1;
    }
    let mut hi = i;
    while hi + 1 < x.len() && r[hi + 1] > half {
        hi += 1;
    }
    let left = (lo > 0).then(|| crossing(lo - 1, lo));
    let right = (hi + 1 < x.len()).then(|| crossing(hi + 1, hi));
    let dx_min = x.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let w = match (left, right) {
        (Some(l), Some(r)) => r - l,
        (Some(l), None) => 2.0 * (x[i] - l),
        (None, Some(r)) => 2.0 * (r - x[i]),
        (None, None) => x[x.len() - 1] - x[0],
    };
    w.max(dx_min)
}

/// Peak-finding initial guesses: repeatedly take the largest residual
/// maximum, estimate its width from the half-maximum crossings and subtract it.
pub fn guess_peaks(x: &[f64], y: &[f64], n_peaks: usize) -> (Vec<PeakGuess>, f64) {
    let baseline = y.iter().copied().fold(f64::INFINITY, f64::min);
    let mut resid: Vec<f64> = y.iter().map(|v| v - baseline).collect();
    let mut guesses = Vec::with_capacity(n_peaks);
    for _ in 0..n_peaks {
        let (i, a) = resid
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
        let a = a.max(f64::MIN_POSITIVE);
        let w = half_max_width(x, &resid, i);
        let g = PeakGuess {
            center: x[i],
            fwhm: w,
            amplitude: a,
        };
        for (r, &xv) in resid.iter_mut().zip(x) {
            *r -= lorentzian(xv, g.center, g.fwhm, g.amplitude);
        }
        guesses.push(g);
    }
    (guesses, baseline)
}

fn fit_lorentzian_xy(
    x: &[f64],
    y: &[f64],
    n_peaks: usize,
    init: Option<&[PeakGuess]>,
) -> Result<FitResult> {
    if n_peaks == 0 {
        return Err(Error::InvalidArgument("at least one peak is required".into()));
    }
    if x.len() < 9 * n_peaks {
        return Err(Error::InsufficientData(format!(
            "{} samples cannot constrain {n_peaks} Lorentzian(s); need at least {}",
            x.len(),
            9 * n_peaks
        )));
    }
    let (guesses, baseline) = match init {
        Some(g) if g.len() == n_peaks => {
            let (_, b) = guess_peaks(x, y, 0);
            (g.to_vec(), b)
        }
        Some(g) => {
            return Err(Error::InvalidArgument(format!(
                "{} initial guesses supplied for {n_peaks} peaks",
                g.len()
            )))
        }
        None => guess_peaks(x, y, n_peaks),
    };
    let mut p0 = Vec::with_capacity(3 * n_peaks + 1);
    let mut scales = Vec::with_capacity(3 * n_peaks + 1);
    let amp_max = guesses.iter().map(|g| g.amplitude.abs()).fold(0.0, f64::max);
    for g in &guesses {
        p0.extend([g.center, g.fwhm, g.amplitude]);
        scales.extend([g.fwhm.abs(), g.fwhm.abs(), g.amplitude.abs().max(1e-3 * amp_max)]);
    }
    p0.push(baseline);
    scales.push(baseline.abs().max(1e-3 * amp_max).max(f64::MIN_POSITIVE));
    let opts = LmOptions {
        scales,
        ..LmOptions::default()
    };
    let out = levenberg_marquardt(
        |p| x.iter().zip(y).map(|(&xv, &yv)| lorentzian_sum(xv, p) - yv).collect(),
        &p0,
        &opts,
    );

    let mut order: Vec<usize> = (0..n_peaks).collect();
    order.sort_by(|&a, &b| out.params[3 * a].total_cmp(&out.params[3 * b]));
    let mut fit = FitResult::new("lorentzian");
    for (k, &j) in order.iter().enumerate() {
        fit.push(format!("center_{k}"), out.params[3 * j], out.sigmas[3 * j]);
        fit.push(format!("fwhm_{k}"), out.params[3 * j + 1].abs(), out.sigmas[3 * j + 1]);
        fit.push(format!("amplitude_{k}"), out.params[3 * j + 2], out.sigmas[3 * j + 2]);
    }
    fit.push("baseline", out.params[3 * n_peaks], out.sigmas[3 * n_peaks]);
    fit.residual_rms = out.residual_rms();
    fit.converged = out.converged;
    fit.n_iterations = out.n_iterations;
    fit.diagnostics = out.diagnostics;
    Ok(fit)
}

/// Least-squares fit of `n_peaks` Lorentzians on a constant baseline.
/// Parameters are reported as `center_k`, `fwhm_k`, `amplitude_k` (sorted by
/// center) and `baseline`, in the trace's units.
pub fn fit_lorentzian(trace: &Trace, n_peaks: usize, init: Option<&[PeakGuess]>) -> Result<FitResult> {
    fit_lorentzian_xy(trace.x(), trace.y(), n_peaks, init)
}

/// Ordinary least-squares line through `(x, y)`; parameters `slope` and
/// `intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<FitResult> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return Err(Error::InsufficientData(format!(
            "a slope needs at least two points, got {n}"
        )));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InvalidArgument(
            "all abscissa values are equal; the slope is undefined".into(),
        ));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let (s_slope, s_icept) = if n > 2 {
        let var = ssr / (nf - 2.0);
        ((var / sxx).sqrt(), (var * (1.0 / nf + mx * mx / sxx)).sqrt())
    } else {
        (0.0, 0.0)
    };
    let mut fit = FitResult::new("linear");
    fit.push("slope", slope, s_slope);
    fit.push("intercept", intercept, s_icept);
    fit.residual_rms = (ssr / nf).sqrt();
    fit.converged = true;
    Ok(fit)
}

/// Scan speed from wavemeter readings (time in s, frequency in GHz): the
/// `slope` parameter is in GHz/s.
pub fn calibrate_scan_slope(trace: &Trace) -> Result<FitResult> {
    trace.require_units(Unit::S, Some(Unit::Ghz))?;
    let mut fit = linear_fit(trace.x(), trace.y())?;
    fit.model = "scan_slope".into();
    Ok(fit)
}

/// Finesse as mean adjacent spacing over mean FWHM of fitted peaks, each
/// given as `(center, σ_center, fwhm, σ_fwhm)`. Parameters `finesse`,
/// `spacing`, `fwhm`.
pub fn finesse_from_peaks(peaks: &[(f64, f64, f64, f64)]) -> Result<FitResult> {
    if peaks.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "finesse needs at least two resonances, found {}",
            peaks.len()
        )));
    }
    let mut sorted = peaks.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = sorted.len() as f64;
    let first = sorted[0];
    let last = sorted[sorted.len() - 1];
    let spacing = (last.0 - first.0) / (n - 1.0);
    let s_spacing = (first.1.powi(2) + last.1.powi(2)).sqrt() / (n - 1.0);
    let fwhm = sorted.iter().map(|p| p.2).sum::<f64>() / n;
    let s_fwhm = sorted.iter().map(|p| p.3 * p.3).sum::<f64>().sqrt() / n;
    let finesse = spacing / fwhm;
    let s_finesse = finesse * ((s_spacing / spacing).powi(2) + (s_fwhm / fwhm).powi(2)).sqrt();
    let mut fit = FitResult::new("finesse");
    fit.push("finesse", finesse, s_finesse);
    fit.push("spacing", spacing, s_spacing);
    fit.push("fwhm", fwhm, s_fwhm);
    fit.converged = true;
    Ok(fit)
}

/// Indices `(start, end)` of contiguous runs above half of the peak height.
fn peak_regions(y: &[f64]) -> Vec<(usize, usize)> {
    let mut sorted = y.to_vec();
    sorted.sort_by(f64::total_cmp);
    let floor = sorted[sorted.len() / 2];
    let top = sorted[sorted.len() - 1];
    let threshold = floor + 0.5 * (top - floor);
    let mut regions = Vec::new();
    let mut start = None;
    for (i, &v) in y.iter().enumerate() {
        match (v > threshold, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                regions.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        regions.push((s, y.len() - 1));
    }
    regions
}

/// Finesse from a transmission trace covering at least two free spectral
/// ranges: every resonance is fitted with a single Lorentzian in a local
/// window, then [`finesse_from_peaks`] is applied.
pub fn finesse_from_scan(trace: &Trace) -> Result<FitResult> {
    if trace.len() < 9 {
        return Err(Error::InsufficientData("trace too short".into()));
    }
    let x = trace.x();
    let y = trace.y();
    let regions = peak_regions(y);
    if regions.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "finesse needs at least two resonances, found {}",
            regions.len()
        )));
    }
    let mut peaks = Vec::new();
    let mut diagnostics = Vec::new();
    let mut iterations = 0;
    let mut all_converged = true;
    for (k, &(s, e)) in regions.iter().enumerate() {
        let width = (e - s + 1).max(3);
        let lo_limit = if k > 0 { (regions[k - 1].1 + s) / 2 } else { 0 };
        let hi_limit = if k + 1 < regions.len() {
            (e + regions[k + 1].0) / 2
        } else {
            x.len() - 1
        };
        let lo = s.saturating_sub(5 * width).max(lo_limit);
        let hi = (e + 5 * width).min(hi_limit);
        let fit = fit_lorentzian_xy(&x[lo..=hi], &y[lo..=hi], 1, None)?;
        iterations += fit.n_iterations;
        if !fit.converged {
            all_converged = false;
            diagnostics.push(format!("peak near {} did not converge", x[(s + e) / 2]));
        }
        peaks.push((
            fit.value("center_0"),
            fit.sigma("center_0"),
            fit.value("fwhm_0"),
            fit.sigma("fwhm_0"),
        ));
    }
    let mut out = finesse_from_peaks(&peaks)?;
    out.model = "finesse_from_scan".into();
    out.push("n_peaks", peaks.len() as f64, 0.0);
    out.converged = all_converged;
    out.n_iterations = iterations;
    out.diagnostics = diagnostics;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PeakCount {
    Fixed(usize),
    /// Smallest count up to `max` whose residual RMS falls below
    /// `threshold` times the peak-to-peak range of the data.
    Auto { max: usize, threshold: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZplDistribution {
    /// Integrated intensity against relative frequency (GHz).
    pub integrated: Trace,
    pub fit: FitResult,
}

/// Integrates each spectrum of a scan (optionally over `window` in the
/// spectra's abscissa units), maps the step index to relative frequency with
/// `slope_ghz_per_step` and fits the resulting distribution with Lorentzians.
pub fn zpl_frequency_distribution(
    spectra: &[Trace],
    slope_ghz_per_step: f64,
    window: Option<(f64, f64)>,
    peaks: PeakCount,
) -> Result<ZplDistribution> {
    if !(slope_ghz_per_step != 0.0 && slope_ghz_per_step.is_finite()) {
        return Err(Error::InvalidArgument(
            "local dispersion slope must be non-zero".into(),
        ));
    }
    let mut pts: Vec<(f64, f64)> = spectra
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let total: f64 = match window {
                Some((lo, hi)) => s
                    .x()
                    .iter()
                    .zip(s.y())
                    .filter(|(x, _)| **x >= lo && **x <= hi)
                    .map(|(_, y)| y)
                    .sum(),
                None => s.y().iter().sum(),
            };
            (k as f64 * slope_ghz_per_step, total)
        })
        .collect();
    if slope_ghz_per_step < 0.0 {
        pts.reverse();
    }
    let integrated = Trace::new(
        pts.iter().map(|p| p.0).collect(),
        pts.iter().map(|p| p.1).collect(),
        Unit::Ghz,
        spectra.first().map_or(Unit::Counts, |s| s.y_unit),
    )?;
    let fit = match peaks {
        PeakCount::Fixed(n) => fit_lorentzian(&integrated, n, None)?,
        PeakCount::Auto { max, threshold } => {
            let y = integrated.y();
            let range = y.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                - y.iter().copied().fold(f64::INFINITY, f64::min);
            let mut chosen = None;
            for n in 1..=max.max(1) {
                let fit = fit_lorentzian(&integrated, n, None)?;
                let good = fit.converged && fit.residual_rms <= threshold * range;
                chosen = Some(fit);
                if good {
                    break;
                }
            }
            chosen.expect("at least one candidate fitted")
        }
    };
    let mut fit = fit;
    fit.model = "zpl_distribution".into();
    Ok(ZplDistribution { integrated, fit })
}
