//! Pulsed second-order autocorrelation.
//!
//! Model: a comb of two-sided exponentials `A_k · exp(-|τ - k T| / τ_d)`
//! with a shared decay `τ_d`, a fitted period `T` and one amplitude per peak.
//! No background term is subtracted or fitted, so `g²(0)` is the raw ratio of
//! the central peak area to the mean side-peak area.

use serde::Serialize;

use super::lm::{levenberg_marquardt, LmOptions};
use super::{outside_windows, FitResult};
use crate::error::{Error, Result};

/// Repetition period of a 23.4 MHz pulsed excitation.
pub const DEFAULT_PERIOD_NS: f64 = 42.735;

/// Windows around the ±17 ns recombination artifacts.
pub const DEFAULT_EXCLUSIONS: [(f64, f64); 2] = [(12.0, 22.0), (-22.0, -12.0)];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationHistogram {
    pub tau_bins_ns: Vec<f64>,
    pub coincidences: Vec<f64>,
    pub repetition_period_ns: f64,
}

impl CorrelationHistogram {
    pub fn new(tau_bins_ns: Vec<f64>, coincidences: Vec<f64>, repetition_period_ns: f64) -> Result<Self> {
        if tau_bins_ns.len() != coincidences.len() || tau_bins_ns.len() < 3 {
            return Err(Error::InvalidArgument(
                "histogram needs matching delay and count columns with at least three bins".into(),
            ));
        }
        if !(repetition_period_ns > 0.0 && repetition_period_ns.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "repetition period must be positive, got {repetition_period_ns} ns"
            )));
        }
        if let Some(i) = coincidences.iter().position(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "coincidence count at bin {i} is negative or non-finite"
            )));
        }
        let width = tau_bins_ns[1] - tau_bins_ns[0];
        if !(width > 0.0) {
            return Err(Error::InvalidArgument("delay bins must increase".into()));
        }
        if let Some(i) = tau_bins_ns
            .windows(2)
            .position(|w| ((w[1] - w[0]) - width).abs() > 1e-6 * width)
        {
            return Err(Error::InvalidArgument(format!(
                "delay bins are not uniform (bin {} to {})",
                i,
                i + 1
            )));
        }
        Ok(Self {
            tau_bins_ns,
            coincidences,
            repetition_period_ns,
        })
    }

    pub fn bin_width_ns(&self) -> f64 {
        self.tau_bins_ns[1] - self.tau_bins_ns[0]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            tau_bins_ns: self.tau_bins_ns.clone(),
            coincidences: self.coincidences.iter().map(|c| c * factor).collect(),
            repetition_period_ns: self.repetition_period_ns,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct G2Options {
    pub exclusions: Vec<(f64, f64)>,
    /// Initial decay time; defaults to an eighth of the period.
    pub tau_decay_init_ns: Option<f64>,
}

impl Default for G2Options {
    fn default() -> Self {
        Self {
            exclusions: DEFAULT_EXCLUSIONS.to_vec(),
            tau_decay_init_ns: None,
        }
    }
}

impl G2Options {
    pub fn without_exclusions() -> Self {
        Self {
            exclusions: Vec::new(),
            ..Self::default()
        }
    }
}

const TAIL_DECAYS: f64 = 40.0;

/// Comb model value at `tau` for parameters `[τ_d, T, A_k...]` with peak
/// orders `orders`.
pub fn comb(tau: f64, params: &[f64], orders: &[i64]) -> f64 {
    let (td, period) = (params[0], params[1]);
    orders
        .iter()
        .zip(&params[2..])
        .map(|(&k, a)| a * (-(tau - k as f64 * period).abs() / td).exp())
        .sum()
}

/// Fits the pulsed comb and reports `g2_zero`, `tau_decay_ns`,
/// `peak_period_ns`, `central_amplitude` and `mean_side_amplitude`.
pub fn fit_g2_pulsed(hist: &CorrelationHistogram, opts: &G2Options) -> Result<FitResult> {
    let period = hist.repetition_period_ns;
    let taus = &hist.tau_bins_ns;
    let (tmin, tmax) = (taus[0], taus[taus.len() - 1]);
    if tmax - tmin < 5.0 * period {
        return Err(Error::InsufficientData(format!(
            "histogram spans {:.3} ns, less than five repetition periods ({:.3} ns)",
            tmax - tmin,
            5.0 * period
        )));
    }
    let keep = outside_windows(taus, &opts.exclusions);
    let x: Vec<f64> = keep.iter().map(|&i| taus[i]).collect();
    let y: Vec<f64> = keep.iter().map(|&i| hist.coincidences[i]).collect();
    if !x.iter().any(|t| t.abs() < 0.25 * period) {
        return Err(Error::Unidentifiable(
            "every bin near zero delay is excluded; the central peak cannot be fitted".into(),
        ));
    }

    let k_lo = (tmin / period - 0.5).ceil() as i64;
    let k_hi = (tmax / period + 0.5).floor() as i64;
    let orders: Vec<i64> = (k_lo..=k_hi).collect();
    let in_range = |k: i64| {
        let c = k as f64 * period;
        c >= tmin && c <= tmax
    };
    let near = |k: i64| -> Option<f64> {
        let c = k as f64 * period;
        x.iter()
            .zip(&y)
            .filter(|(t, _)| (**t - c).abs() < 0.25 * period)
            .map(|(_, v)| *v)
            .fold(None, |m, v| Some(m.map_or(v, |m: f64| m.max(v))))
    };
    let side: Vec<f64> = orders
        .iter()
        .filter(|&&k| k != 0 && in_range(k))
        .filter_map(|&k| near(k))
        .collect();
    if side.is_empty() {
        return Err(Error::InsufficientData("no side peaks inside the histogram".into()));
    }
    let side_mean0 = side.iter().sum::<f64>() / side.len() as f64;
    let td0 = opts.tau_decay_init_ns.unwrap_or(period / 8.0);
    // Peaks centred beyond the histogram still leak their tails into it.
    // They share the mean in-range side amplitude.
    let n_tail = ((TAIL_DECAYS * td0.max(period / 8.0)) / period).ceil() as i64 + 1;
    let tails: Vec<i64> = (k_lo - n_tail..k_lo).chain(k_hi + 1..=k_hi + n_tail).collect();
    let mut p0 = vec![td0, period];
    for &k in &orders {
        p0.push(if in_range(k) { near(k).unwrap_or(side_mean0) } else { 0.5 * side_mean0 });
    }
    let side_idx: Vec<usize> = orders
        .iter()
        .enumerate()
        .filter(|(_, &k)| k != 0 && in_range(k))
        .map(|(i, _)| i + 2)
        .collect();
    let model = |t: f64, p: &[f64]| -> f64 {
        let mean = side_idx.iter().map(|&i| p[i]).sum::<f64>() / side_idx.len() as f64;
        let tail: f64 = tails
            .iter()
            .map(|&k| (-(t - k as f64 * p[1]).abs() / p[0]).exp())
            .sum();
        comb(t, p, &orders) + mean * tail
    };
    let amp_scale = side_mean0.abs().max(f64::MIN_POSITIVE);
    let mut scales = vec![td0, hist.bin_width_ns().min(period / 100.0)];
    scales.extend(std::iter::repeat_n(amp_scale, orders.len()));
    let lm = LmOptions {
        scales,
        ..LmOptions::default()
    };
    let out = levenberg_marquardt(
        |p| x.iter().zip(&y).map(|(&t, &v)| model(t, p) - v).collect(),
        &p0,
        &lm,
    );

    let idx_central = orders.iter().position(|&k| k == 0).expect("zero order present") + 2;
    let ns = side_idx.len() as f64;
    let a0 = out.params[idx_central];
    let side_mean = side_idx.iter().map(|&i| out.params[i]).sum::<f64>() / ns;
    let g2 = a0 / side_mean;

    let (s_g2, s_mean) = match &out.covariance {
        Some(cov) => {
            let mut grad = vec![0.0; out.params.len()];
            grad[idx_central] = 1.0 / side_mean;
            for &i in &side_idx {
                grad[i] = -a0 / (side_mean * side_mean * ns);
            }
            let mut var = 0.0;
            let mut var_mean = 0.0;
            for a in 0..grad.len() {
                for b in 0..grad.len() {
                    var += grad[a] * cov[(a, b)] * grad[b];
                }
            }
            for &a in &side_idx {
                for &b in &side_idx {
                    var_mean += cov[(a, b)] / (ns * ns);
                }
            }
            (var.max(0.0).sqrt(), var_mean.max(0.0).sqrt())
        }
        None => (f64::INFINITY, f64::INFINITY),
    };

    let mut fit = FitResult::new("g2_pulsed_comb");
    fit.push("g2_zero", g2, s_g2);
    fit.push("tau_decay_ns", out.params[0].abs(), out.sigmas[0]);
    fit.push("peak_period_ns", out.params[1], out.sigmas[1]);
    fit.push("central_amplitude", a0, out.sigmas[idx_central]);
    fit.push("mean_side_amplitude", side_mean, s_mean);
    fit.residual_rms = out.residual_rms();
    fit.converged = out.converged && !out.singular;
    fit.n_iterations = out.n_iterations;
    fit.exclusion_windows = opts.exclusions.clone();
    fit.diagnostics = out.diagnostics;
    Ok(fit)
}
