//! Effective length, mode volume and Purcell factors.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tmm::FieldProfile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmitterParams {
    pub zpl_wavelength_nm: f64,
    pub tau0_ns: f64,
    pub debye_waller: f64,
    pub quantum_efficiency: f64,
    /// Index at the emitter location (extraordinary for a c-axis dipole).
    pub host_index: f64,
}

impl Default for EmitterParams {
    fn default() -> Self {
        Self {
            zpl_wavelength_nm: 917.0,
            tau0_ns: 7.3,
            debye_waller: 0.08,
            quantum_efficiency: 0.286,
            host_index: 2.63,
        }
    }
}

impl EmitterParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("zpl_wavelength_nm", self.zpl_wavelength_nm),
            ("tau0_ns", self.tau0_ns),
            ("host_index", self.host_index),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        check_fraction("debye_waller", self.debye_waller)?;
        check_fraction("quantum_efficiency", self.quantum_efficiency)
    }
}

fn check_fraction(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must lie in (0, 1], got {v}")))
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")))
    }
}

/// `∫|n E|² dz / max |n E|²` over the layered part of the profile, in µm.
pub fn effective_length_um(profile: &FieldProfile) -> Result<f64> {
    let range = profile.layered_range();
    let range = if range.len() >= 2 { range } else { 0..profile.z_nm.len() };
    let z = &profile.z_nm[range.clone()];
    let w: Vec<f64> = profile.n_of_z[range.clone()]
        .iter()
        .zip(&profile.e_of_z[range])
        .map(|(n, e)| (n * e).norm_sqr())
        .collect();
    effective_length_from_samples(z, &w).map(|l| l * 1e-3)
}

/// Trapezoidal `∫ w dz / max w` for samples of `w = |nE|²`.
pub fn effective_length_from_samples(z: &[f64], w: &[f64]) -> Result<f64> {
    let peak = w.iter().copied().fold(0.0, f64::max);
    if !(peak > 0.0) || z.len() < 2 {
        return Err(Error::NumericalDegeneracy(
            "field profile is zero everywhere; effective length undefined".into(),
        ));
    }
    let integral: f64 = z
        .windows(2)
        .zip(w.windows(2))
        .map(|(z, w)| 0.5 * (z[1] - z[0]) * (w[0] + w[1]))
        .sum();
    Ok(integral / peak)
}

/// `π w₀² L_eff / 4` in units of λ³.
pub fn mode_volume_lambda3(w0_um: f64, l_eff_um: f64, wavelength_nm: f64) -> f64 {
    let lambda_um = wavelength_nm * 1e-3;
    PI * w0_um * w0_um * l_eff_um / 4.0 / lambda_um.powi(3)
}

/// Waist of the fundamental mode of a plano-concave cavity whose planar
/// mirror carries a membrane. The membrane enters the q-parameter propagation
/// with its reduced length `d / n`; the waist sits on the planar side and is
/// unchanged by refraction at the flat membrane faces.
pub fn gaussian_waist_um(
    fiber_roc_um: f64,
    air_gap_um: f64,
    membrane_thickness_um: f64,
    membrane_index: f64,
    wavelength_nm: f64,
) -> Result<f64> {
    check_positive("wavelength", wavelength_nm)?;
    check_positive("membrane index", membrane_index)?;
    if air_gap_um < 0.0 || membrane_thickness_um < 0.0 {
        return Err(Error::InvalidArgument("lengths must be non-negative".into()));
    }
    let l = air_gap_um + membrane_thickness_um / membrane_index;
    if !fiber_roc_um.is_finite() || !(fiber_roc_um > l) || !(l > 0.0) {
        return Err(Error::UnstableResonator(format!(
            "mirror radius {fiber_roc_um} µm does not confine a mode for an effective length of {l} µm"
        )));
    }
    let lambda_um = wavelength_nm * 1e-3;
    Ok(((lambda_um / PI).powi(2) * l * (fiber_roc_um - l)).powf(0.25))
}

/// `C₀ = 3/(4π²) · Q / (V n³)` with `V` in units of λ³.
pub fn purcell_ideal(q: f64, v_lambda3: f64, host_index: f64) -> f64 {
    3.0 / (4.0 * PI * PI) * q / (v_lambda3 * host_index.powi(3))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectivePurcell {
    pub value: f64,
    pub warning: Option<String>,
}

/// `C_eff = τ₀ / τ_cav - 1`; a longer cavity lifetime gives a negative value
/// and a warning.
pub fn purcell_effective(tau0_ns: f64, tau_cav_ns: f64) -> Result<EffectivePurcell> {
    check_positive("tau0", tau0_ns)?;
    check_positive("tau_cav", tau_cav_ns)?;
    let value = tau0_ns / tau_cav_ns - 1.0;
    let warning = (value < 0.0).then(|| {
        format!("cavity lifetime {tau_cav_ns} ns exceeds the free lifetime {tau0_ns} ns")
    });
    Ok(EffectivePurcell { value, warning })
}

/// `C₀ = C_eff / (DWF · QE)`.
pub fn purcell_corrected(c_eff: f64, debye_waller: f64, quantum_efficiency: f64) -> Result<f64> {
    check_fraction("debye_waller", debye_waller)?;
    check_fraction("quantum_efficiency", quantum_efficiency)?;
    Ok(c_eff / (debye_waller * quantum_efficiency))
}

/// `τ(Δ) = τ₀ / (1 + C / (1 + (2Δ/κ)²))`.
pub fn lifetime_vs_detuning(
    emitter: &EmitterParams,
    c_eff_peak: f64,
    linewidth_fwhm_ghz: f64,
    detuning_ghz: f64,
) -> Result<f64> {
    check_positive("linewidth", linewidth_fwhm_ghz)?;
    let u = 2.0 * detuning_ghz / linewidth_fwhm_ghz;
    Ok(emitter.tau0_ns / (1.0 + c_eff_peak / (1.0 + u * u)))
}

/// Peak effective Purcell factor that reproduces a measured shortest
/// lifetime exactly.
pub fn peak_enhancement_from_lifetimes(tau0_ns: f64, tau_min_ns: f64) -> Result<f64> {
    Ok(purcell_effective(tau0_ns, tau_min_ns)?.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PurcellInputs {
    pub quality_factor: f64,
    pub mode_volume_lambda3: f64,
    pub waist_um: f64,
    pub effective_length_um: f64,
}

impl PurcellInputs {
    /// Builds consistent inputs from a waist and an effective length.
    pub fn from_geometry(quality_factor: f64, waist_um: f64, effective_length_um: f64, wavelength_nm: f64) -> Self {
        Self {
            quality_factor,
            mode_volume_lambda3: mode_volume_lambda3(waist_um, effective_length_um, wavelength_nm),
            waist_um,
            effective_length_um,
        }
    }

    /// Checks positivity and `V = π w₀² L_eff / 4` to 1%.
    pub fn validate(&self, wavelength_nm: f64) -> Result<()> {
        check_positive("quality_factor", self.quality_factor)?;
        check_positive("mode_volume", self.mode_volume_lambda3)?;
        check_positive("waist", self.waist_um)?;
        check_positive("effective_length", self.effective_length_um)?;
        let v = mode_volume_lambda3(self.waist_um, self.effective_length_um, wavelength_nm);
        if (v - self.mode_volume_lambda3).abs() > 0.01 * self.mode_volume_lambda3 {
            return Err(Error::InvalidArgument(format!(
                "mode volume {} λ³ inconsistent with w0 = {} µm and L_eff = {} µm ({v} λ³)",
                self.mode_volume_lambda3, self.waist_um, self.effective_length_um
            )));
        }
        Ok(())
    }
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PurcellReport {
    pub Q: f64,
    pub V_lambda3: f64,
    pub w0_um: f64,
    pub L_eff_um: f64,
    pub C0_predicted: f64,
    pub C_eff_predicted: f64,
    pub C_eff_measured: Option<f64>,
    pub C0_corrected: Option<f64>,
    pub overlap: f64,
    pub warnings: Vec<String>,
}

/// Prediction from cavity parameters and, when a cavity lifetime is given,
/// the measured enhancement. `overlap` scales the predicted `C₀`.
pub fn purcell_report(
    inputs: &PurcellInputs,
    emitter: &EmitterParams,
    overlap: f64,
    tau_cav_ns: Option<f64>,
) -> Result<PurcellReport> {
    emitter.validate()?;
    check_fraction("overlap", overlap)?;
    check_positive("quality_factor", inputs.quality_factor)?;
    check_positive("mode_volume", inputs.mode_volume_lambda3)?;
    let c0 = overlap * purcell_ideal(inputs.quality_factor, inputs.mode_volume_lambda3, emitter.host_index);
    let mut warnings = Vec::new();
    let (measured, corrected) = match tau_cav_ns {
        Some(t) => {
            let e = purcell_effective(emitter.tau0_ns, t)?;
            warnings.extend(e.warning.clone());
            let c = purcell_corrected(e.value, emitter.debye_waller, emitter.quantum_efficiency)?;
            (Some(e.value), Some(c))
        }
        None => (None, None),
    };
    Ok(PurcellReport {
        Q: inputs.quality_factor,
        V_lambda3: inputs.mode_volume_lambda3,
        w0_um: inputs.waist_um,
        L_eff_um: inputs.effective_length_um,
        C0_predicted: c0,
        C_eff_predicted: c0 * emitter.debye_waller * emitter.quantum_efficiency,
        C_eff_measured: measured,
        C0_corrected: corrected,
        overlap,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ideal_purcell_operating_point() {
        let c0 = purcell_ideal(7.4e4, 12.0, 2.63);
        assert!((c0 - 25.75).abs() < 0.01, "{c0}");
        assert_eq!(purcell_ideal(0.0, 12.0, 2.63), 0.0);
        assert!((purcell_ideal(7.4e4, 24.0, 2.63) - c0 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn effective_and_corrected() {
        let e = purcell_effective(7.3, 5.6).unwrap();
        assert!((e.value - 0.30357).abs() < 1e-4);
        assert!(e.warning.is_none());
        assert_eq!(purcell_effective(7.3, 7.3).unwrap().value, 0.0);
        assert!((purcell_effective(7.3, 3.65).unwrap().value - 1.0).abs() < 1e-15);
        let w = purcell_effective(7.3, 8.0).unwrap();
        assert!(w.value < 0.0 && w.warning.is_some());
        let c0 = purcell_corrected(0.304, 0.08, 0.286).unwrap();
        assert!((c0 - 13.29).abs() < 0.01);
        assert_eq!(purcell_corrected(0.304, 1.0, 1.0).unwrap(), 0.304);
        assert!(purcell_corrected(0.304, 0.0, 0.5).is_err());
    }

    #[test]
    fn mode_volume_operating_point() {
        let v = mode_volume_lambda3(1.66, 4.276, 917.0);
        assert!((v - 12.0).abs() < 0.01, "{v}");
        assert!((mode_volume_lambda3(3.32, 4.276, 917.0) - 4.0 * v).abs() < 1e-9);
    }

    #[test]
    fn waist_reduces_to_plano_concave() {
        let w = gaussian_waist_um(50.0, 5.0, 2.0, 1.0, 917.0).unwrap();
        let l: f64 = 7.0;
        let expected = ((0.917 / PI).powi(2) * l * (50.0 - l)).powf(0.25);
        assert!((w - expected).abs() < 1e-12);
        assert!(matches!(
            gaussian_waist_um(f64::INFINITY, 5.0, 2.0, 2.6, 917.0),
            Err(Error::UnstableResonator(_))
        ));
        assert!(gaussian_waist_um(3.0, 5.0, 0.0, 2.6, 917.0).is_err());
    }

    #[test]
    fn lifetime_model() {
        let em = EmitterParams::default();
        let c = peak_enhancement_from_lifetimes(7.3, 5.6).unwrap();
        assert!((lifetime_vs_detuning(&em, c, 4.0, 0.0).unwrap() - 5.6).abs() < 1e-12);
        assert!((lifetime_vs_detuning(&em, c, 4.0, 1e9).unwrap() - 7.3).abs() < 1e-9);
        let half = lifetime_vs_detuning(&em, 0.304, 4.0, 2.0).unwrap();
        assert!((half - 7.3 / 1.152).abs() < 1e-12);
        assert!((half - 6.34).abs() < 0.005);
    }

    #[test]
    fn effective_length_of_constant_and_sine() {
        let z: Vec<f64> = (0..=1000).map(|i| i as f64).collect();
        assert!((effective_length_from_samples(&z, &vec![2.0; 1001]).unwrap() - 1000.0).abs() < 1e-9);
        let w: Vec<f64> = z.iter().map(|x| (PI * 3.0 * x / 1000.0).sin().powi(2)).collect();
        assert!((effective_length_from_samples(&z, &w).unwrap() - 500.0).abs() < 0.5);
        assert!(effective_length_from_samples(&z, &vec![0.0; 1001]).is_err());
    }

    #[test]
    fn report_documents_overlap_gap() {
        let inputs = PurcellInputs::from_geometry(7.4e4, 1.66, 4.276, 917.0);
        inputs.validate(917.0).unwrap();
        let r = purcell_report(&inputs, &EmitterParams::default(), 1.0, Some(5.6)).unwrap();
        assert!((r.C_eff_predicted - 0.588).abs() < 0.005, "{}", r.C_eff_predicted);
        assert!((r.C_eff_measured.unwrap() - 0.304).abs() < 0.001);
        assert!(r.C_eff_predicted / r.C_eff_measured.unwrap() > 1.8);
    }
}
