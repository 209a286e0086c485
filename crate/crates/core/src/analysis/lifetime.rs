//! Monoexponential decay with constant offset.

use super::lm::{levenberg_marquardt, LmOptions};
use super::{FitResult, Trace, Unit};
use crate::error::{Error, Result};

/// Fits `A · exp(-(t - t_start) / τ) + B` to the samples with `t >= t_start`.
///
/// `A` is the decaying amplitude at `t_start`. A trace without a resolvable
/// decay yields `converged = false` and a diagnostic rather than an error.
pub fn fit_lifetime(histogram: &Trace, t_start_ns: f64) -> Result<FitResult> {
    histogram.require_units(Unit::Ns, None)?;
    let first = histogram.x().partition_point(|&t| t < t_start_ns);
    let t: Vec<f64> = histogram.x()[first..].iter().map(|v| v - t_start_ns).collect();
    let y = &histogram.y()[first..];
    if t.len() < 6 {
        return Err(Error::InsufficientData(format!(
            "{} samples after t_start = {t_start_ns} ns; need at least 6",
            t.len()
        )));
    }
    let mut fit = FitResult::new("monoexponential");

    let tail = (t.len() / 10).max(2);
    let b0 = y[y.len() - tail..].iter().sum::<f64>() / tail as f64;
    let head = (t.len() / 20).max(1);
    let a0 = y[..head].iter().sum::<f64>() / head as f64 - b0;
    let spread = y.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - y.iter().copied().fold(f64::INFINITY, f64::min);
    if !(a0 > 0.0) || spread <= 1e-12 * y.iter().map(|v| v.abs()).fold(0.0, f64::max) {
        fit.push("tau_ns", f64::NAN, f64::INFINITY);
        fit.push("amplitude", 0.0, f64::INFINITY);
        fit.push("offset", b0, f64::INFINITY);
        fit.diagnostics.push("no decay above the offset; lifetime is undefined".into());
        return Ok(fit);
    }
    // Log-linear estimate over the part of the decay well above the offset.
    let (mut sx, mut sy, mut sxx, mut sxy, mut n) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (ti, yi) in t.iter().zip(y) {
        let v = yi - b0;
        if v > 0.1 * a0 {
            let l = v.ln();
            sx += ti;
            sy += l;
            sxx += ti * ti;
            sxy += ti * l;
            n += 1.0;
        }
    }
    let slope = if n >= 2.0 {
        (n * sxy - sx * sy) / (n * sxx - sx * sx)
    } else {
        f64::NAN
    };
    let span = t[t.len() - 1];
    let tau0 = if slope < 0.0 && slope.is_finite() {
        -1.0 / slope
    } else {
        span / 5.0
    };

    let opts = LmOptions {
        scales: vec![tau0, a0, a0],
        ..LmOptions::default()
    };
    let out = levenberg_marquardt(
        |p| {
            t.iter()
                .zip(y)
                .map(|(ti, yi)| p[1] * (-ti / p[0]).exp() + p[2] - yi)
                .collect()
        },
        &[tau0, a0, b0],
        &opts,
    );
    let (tau, amp, off) = (out.params[0], out.params[1], out.params[2]);
    fit.push("tau_ns", tau, out.sigmas[0]);
    fit.push("amplitude", amp, out.sigmas[1]);
    fit.push("offset", off, out.sigmas[2]);
    fit.residual_rms = out.residual_rms();
    fit.n_iterations = out.n_iterations;
    fit.diagnostics = out.diagnostics;
    fit.converged = out.converged;
    if !(tau > 0.0 && amp > 0.0) || tau > 100.0 * span || out.singular {
        fit.converged = false;
        fit.diagnostics.push(format!(
            "fit did not find a positive decay (tau = {tau} ns, amplitude = {amp})"
        ));
    }
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay(tau: f64, amp: f64, off: f64) -> Trace {
        let x: Vec<f64> = (0..600).map(|i| i as f64 * 0.1).collect();
        let y = x
            .iter()
            .map(|t| if *t < 2.0 { 0.0 } else { amp * (-(t - 2.0) / tau).exp() + off })
            .collect();
        Trace::new(x, y, Unit::Ns, Unit::Counts).unwrap()
    }

    #[test]
    fn recovers_free_lifetime() {
        let fit = fit_lifetime(&decay(7.3, 1000.0, 0.0), 2.0).unwrap();
        assert!(fit.converged);
        assert!((fit.value("tau_ns") - 7.3).abs() < 1e-6 * 7.3);
        assert!((fit.value("amplitude") - 1000.0).abs() < 1e-6 * 1000.0);
    }

    #[test]
    fn recovers_lifetime_with_offset() {
        let fit = fit_lifetime(&decay(5.6, 800.0, 50.0), 2.0).unwrap();
        assert!((fit.value("tau_ns") - 5.6).abs() < 1e-6 * 5.6);
        assert!((fit.value("offset") - 50.0).abs() < 1e-6 * 50.0);
    }

    #[test]
    fn constant_trace_fails() {
        let x: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let t = Trace::new(x, vec![42.0; 100], Unit::Ns, Unit::Counts).unwrap();
        let fit = fit_lifetime(&t, 0.0).unwrap();
        assert!(!fit.converged);
        assert!(!fit.diagnostics.is_empty());
    }

    #[test]
    fn wrong_units_are_rejected() {
        let t = Trace::new(vec![0.0, 1.0], vec![1.0, 1.0], Unit::Ghz, Unit::Counts).unwrap();
        assert!(fit_lifetime(&t, 0.0).is_err());
    }
}
