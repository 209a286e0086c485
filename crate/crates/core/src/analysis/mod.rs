//! Fitting of measured traces: cavity lines, scan calibration, lifetimes,
//! pulsed photon correlations and length-noise spectra.

pub mod g2;
pub mod lifetime;
pub mod lm;
pub mod lorentz;
pub mod noise;
pub mod synth;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use g2::{fit_g2_pulsed, CorrelationHistogram, G2Options};
pub use lifetime::fit_lifetime;
pub use lorentz::{
    calibrate_scan_slope, finesse_from_scan, fit_lorentzian, zpl_frequency_distribution, PeakCount,
    ZplDistribution,
};
pub use noise::{noise_rms_from_fft, NoiseEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    S,
    Ns,
    Nm,
    Ghz,
    Hz,
    V,
    Counts,
    Rel,
}

impl Unit {
    /// Column-name suffix used in CSV headers (`time_s`, `delay_ns`, ...).
    pub fn suffix(self) -> &'static str {
        match self {
            Unit::S => "s",
            Unit::Ns => "ns",
            Unit::Nm => "nm",
            Unit::Ghz => "ghz",
            Unit::Hz => "hz",
            Unit::V => "v",
            Unit::Counts => "counts",
            Unit::Rel => "rel",
        }
    }

    pub const ALL: [Unit; 8] = [
        Unit::S,
        Unit::Ns,
        Unit::Nm,
        Unit::Ghz,
        Unit::Hz,
        Unit::V,
        Unit::Counts,
        Unit::Rel,
    ];

    /// Unit declared by a column header: the header equals the suffix, ends
    /// in `_<suffix>`, or is one of the spelled-out names `volts`, `seconds`
    /// and `hertz` (case-insensitive).
    pub fn from_header(header: &str) -> Option<Unit> {
        let h = header.trim().to_ascii_lowercase();
        match h.as_str() {
            "volts" => return Some(Unit::V),
            "seconds" => return Some(Unit::S),
            "hertz" => return Some(Unit::Hz),
            _ => {}
        }
        Unit::ALL.into_iter().find(|u| {
            let s = u.suffix();
            h == s || h.ends_with(&format!("_{s}"))
        })
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.suffix())
    }
}

/// Sampled measurement with strictly increasing abscissa.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    x: Vec<f64>,
    y: Vec<f64>,
    pub x_unit: Unit,
    pub y_unit: Unit,
}

impl Trace {
    pub fn new(x: Vec<f64>, y: Vec<f64>, x_unit: Unit, y_unit: Unit) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::InvalidArgument(format!(
                "trace columns differ in length ({} vs {})",
                x.len(),
                y.len()
            )));
        }
        if let Some(i) = x.iter().chain(&y).position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "trace contains a non-finite value (sample {})",
                i % x.len().max(1)
            )));
        }
        if let Some(i) = x.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(format!(
                "trace abscissa not strictly increasing at sample {} ({} then {})",
                i + 1,
                x[i],
                x[i + 1]
            )));
        }
        Ok(Self { x, y, x_unit, y_unit })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Trapezoidal integral of y over x.
    pub fn integral(&self) -> f64 {
        self.x
            .windows(2)
            .zip(self.y.windows(2))
            .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
            .sum()
    }

    /// Integral restricted to `lo <= x <= hi`.
    pub fn integral_between(&self, lo: f64, hi: f64) -> f64 {
        let a = self.x.partition_point(|&v| v < lo);
        let b = self.x.partition_point(|&v| v <= hi);
        if b <= a + 1 {
            return 0.0;
        }
        self.x[a..b]
            .windows(2)
            .zip(self.y[a..b].windows(2))
            .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
            .sum()
    }

    pub fn require_units(&self, x_unit: Unit, y_unit: Option<Unit>) -> Result<()> {
        if self.x_unit != x_unit {
            return Err(Error::InvalidArgument(format!(
                "expected abscissa in {x_unit}, trace is in {}",
                self.x_unit
            )));
        }
        if let Some(u) = y_unit {
            if self.y_unit != u {
                return Err(Error::InvalidArgument(format!(
                    "expected ordinate in {u}, trace is in {}",
                    self.y_unit
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParam {
    pub name: String,
    pub value: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: String,
    pub params: Vec<FitParam>,
    pub residual_rms: f64,
    pub converged: bool,
    pub n_iterations: usize,
    pub exclusion_windows: Vec<(f64, f64)>,
    pub diagnostics: Vec<String>,
    pub seed: Option<u64>,
}

impl FitResult {
    pub fn new(model: impl Into<String>) -> Self {
        Self {
            model: model.into(),
            params: Vec::new(),
            residual_rms: f64::NAN,
            converged: false,
            n_iterations: 0,
            exclusion_windows: Vec::new(),
            diagnostics: Vec::new(),
            seed: None,
        }
    }

    pub fn push(&mut self, name: impl Into<String>, value: f64, sigma: f64) {
        self.params.push(FitParam {
            name: name.into(),
            value,
            sigma,
        });
    }

    pub fn param(&self, name: &str) -> Option<&FitParam> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Value of a parameter; panics if absent.
    pub fn value(&self, name: &str) -> f64 {
        self.param(name)
            .unwrap_or_else(|| panic!("fit `{}` has no parameter `{name}`", self.model))
            .value
    }

    pub fn sigma(&self, name: &str) -> f64 {
        self.param(name)
            .unwrap_or_else(|| panic!("fit `{}` has no parameter `{name}`", self.model))
            .sigma
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineSeriesSummary {
    pub mean_fwhm: f64,
    pub std_fwhm: f64,
    pub n_fits_used: usize,
    pub n_fits_total: usize,
}

/// Mean and population standard deviation of every `fwhm*` parameter over
/// the converged fits.
pub fn aggregate_line_series(fits: &[FitResult]) -> Result<LineSeriesSummary> {
    let used: Vec<&FitResult> = fits.iter().filter(|f| f.converged).collect();
    let widths: Vec<f64> = used
        .iter()
        .flat_map(|f| f.params.iter())
        .filter(|p| p.name.starts_with("fwhm"))
        .map(|p| p.value)
        .collect();
    if widths.is_empty() {
        return Err(Error::InsufficientData(
            "no converged fit with a linewidth parameter".into(),
        ));
    }
    let n = widths.len() as f64;
    let mean = widths.iter().sum::<f64>() / n;
    let var = widths.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / n;
    Ok(LineSeriesSummary {
        mean_fwhm: mean,
        std_fwhm: var.sqrt(),
        n_fits_used: used.len(),
        n_fits_total: fits.len(),
    })
}

/// Keeps the samples outside every `(lo, hi)` window (inclusive bounds).
pub(crate) fn outside_windows(x: &[f64], windows: &[(f64, f64)]) -> Vec<usize> {
    (0..x.len())
        .filter(|&i| !windows.iter().any(|&(lo, hi)| x[i] >= lo && x[i] <= hi))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fit_with_width(w: f64, converged: bool) -> FitResult {
        let mut f = FitResult::new("lorentzian");
        f.push("center_0", 0.0, 0.0);
        f.push("fwhm_0", w, 0.0);
        f.converged = converged;
        f
    }

    #[test]
    fn aggregate_identical_widths() {
        let fits: Vec<_> = (0..25).map(|_| fit_with_width(471.0, true)).collect();
        let s = aggregate_line_series(&fits).unwrap();
        assert_eq!(s.mean_fwhm, 471.0);
        assert_eq!(s.std_fwhm, 0.0);
    }

    #[test]
    fn aggregate_population_sigma() {
        let s = aggregate_line_series(&[fit_with_width(3.0, true), fit_with_width(5.0, true)]).unwrap();
        assert_eq!((s.mean_fwhm, s.std_fwhm), (4.0, 1.0));
    }

    #[test]
    fn aggregate_skips_failed_fits() {
        let fits = [
            fit_with_width(3.0, true),
            fit_with_width(5.0, true),
            fit_with_width(100.0, false),
        ];
        let s = aggregate_line_series(&fits).unwrap();
        assert_eq!((s.mean_fwhm, s.std_fwhm, s.n_fits_used), (4.0, 1.0, 2));
        assert!(aggregate_line_series(&[fit_with_width(1.0, false)]).is_err());
    }

    #[test]
    fn trace_validation() {
        assert!(Trace::new(vec![0.0, 1.0], vec![1.0], Unit::S, Unit::V).is_err());
        assert!(Trace::new(vec![0.0, 0.0], vec![1.0, 1.0], Unit::S, Unit::V).is_err());
        assert!(Trace::new(vec![0.0, f64::NAN], vec![1.0, 1.0], Unit::S, Unit::V).is_err());
        let t = Trace::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 0.0], Unit::S, Unit::V).unwrap();
        assert_eq!(t.integral(), 1.0);
    }

    #[test]
    fn unit_headers() {
        assert_eq!(Unit::from_header("time_s"), Some(Unit::S));
        assert_eq!(Unit::from_header("delay_ns"), Some(Unit::Ns));
        assert_eq!(Unit::from_header("Frequency_GHz"), Some(Unit::Ghz));
        assert_eq!(Unit::from_header("counts"), Some(Unit::Counts));
        assert_eq!(Unit::from_header("volts"), Some(Unit::V));
        assert_eq!(Unit::from_header("amplitude"), None);
    }
}
