//! Cavity length noise from side-of-fringe transmission spectra.
//!
//! The input is a one-sided amplitude spectral density of the relative
//! transmission fluctuation `δT / T_max` (units 1/√Hz). At the half-maximum
//! point of a Lorentzian resonance `δT / T_max = δL · 2F / λ`, so a relative
//! fluctuation maps to length as `δL = δT / T_max · λ / (2F)`.

use serde::Serialize;

use super::{Trace, Unit};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseEstimate {
    pub sigma_rms_pm: f64,
    /// `(frequency_hz, sigma_pm)`: RMS length noise integrated up to each
    /// frequency.
    pub cumulative: Vec<(f64, f64)>,
}

/// Length change in pm corresponding to a unit relative transmission change.
pub fn length_per_relative_transmission_pm(finesse: f64, wavelength_nm: f64) -> f64 {
    wavelength_nm * 1e3 / (2.0 * finesse)
}

pub fn noise_rms_from_fft(
    amplitude_spectrum: &Trace,
    finesse: f64,
    wavelength_nm: f64,
    f_max_hz: f64,
) -> Result<NoiseEstimate> {
    amplitude_spectrum.require_units(Unit::Hz, Some(Unit::Rel))?;
    if !(finesse > 0.0) {
        return Err(Error::InvalidArgument(format!("finesse must be positive, got {finesse}")));
    }
    if !(wavelength_nm > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "wavelength must be positive, got {wavelength_nm} nm"
        )));
    }
    if amplitude_spectrum.x()[0] < 0.0 {
        return Err(Error::InvalidArgument(
            "spectrum must be one-sided (non-negative frequencies)".into(),
        ));
    }
    let scale = length_per_relative_transmission_pm(finesse, wavelength_nm);
    let f = amplitude_spectrum.x();
    let a = amplitude_spectrum.y();
    let mut power = 0.0;
    let mut cumulative = Vec::with_capacity(f.len());
    cumulative.push((f[0], 0.0));
    for i in 1..f.len() {
        if f[i] > f_max_hz {
            break;
        }
        power += 0.5 * (f[i] - f[i - 1]) * (a[i] * a[i] + a[i - 1] * a[i - 1]);
        cumulative.push((f[i], power.sqrt() * scale));
    }
    Ok(NoiseEstimate {
        sigma_rms_pm: power.sqrt() * scale,
        cumulative,
    })
}
