//! Fiber mirror, air gap, membrane and planar mirror as one layered system.

mod fit;
mod map;
mod resonance;

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::materials::{Layer, Medium, Polarization, StackSpec};
use crate::tmm::{field_profile, stack_response, FieldProfile};

pub use fit::{fit_membrane_thickness, ThicknessFitOptions};
pub use map::{
    branch_slopes, classify_modes, coupling_analysis, dispersion_map, link_branches, membrane_energy_fraction, write_branches_json, write_mode_map_csv, Branch,
    BranchPoint, CouplingAnalysis, ModeCharacter, ModeMap, PolarizedGrid, AIR_LIKE_BELOW, DIELECTRIC_LIKE_ABOVE,
};
pub use resonance::{find_resonances, finesse_from_resonances, Resonance};

/// Light path: fiber glass → `fiber_mirror` → air gap → membrane →
/// `planar_mirror` → substrate.
///
/// `fiber_mirror` runs from the fiber glass (ambient) to the gap medium
/// (substrate). `planar_mirror` runs from the gap side (ambient) to its glass
/// substrate, with `layers[0]` facing the membrane.
#[derive(Debug, Clone, PartialEq)]
pub struct CavityConfig {
    pub fiber_mirror: StackSpec,
    pub air_gap_nm: f64,
    pub membrane: Option<Layer>,
    pub planar_mirror: StackSpec,
    pub excess_loss_ppm: f64,
}

pub fn assemble(
    fiber: StackSpec,
    air_gap_nm: f64,
    membrane: Option<Layer>,
    planar: StackSpec,
) -> Result<CavityConfig> {
    check_gap(air_gap_nm)?;
    Ok(CavityConfig {
        fiber_mirror: fiber,
        air_gap_nm,
        membrane,
        planar_mirror: planar,
        excess_loss_ppm: 0.0,
    })
}

fn check_gap(gap_nm: f64) -> Result<()> {
    if gap_nm >= 0.0 && gap_nm.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "air gap must be non-negative and finite, got {gap_nm} nm"
        )))
    }
}

impl CavityConfig {
    pub fn with_excess_loss(mut self, ppm: f64) -> Self {
        self.excess_loss_ppm = ppm;
        self
    }

    pub fn with_gap(&self, air_gap_nm: f64) -> Result<Self> {
        check_gap(air_gap_nm)?;
        let mut c = self.clone();
        c.air_gap_nm = air_gap_nm;
        Ok(c)
    }

    pub fn with_membrane_thickness(&self, thickness_nm: f64) -> Result<Self> {
        let mut c = self.clone();
        c.membrane = match &self.membrane {
            Some(m) => Some(m.with_thickness(thickness_nm)?),
            None => {
                return Err(Error::InvalidArgument(
                    "cavity has no membrane whose thickness could be set".into(),
                ))
            }
        };
        Ok(c)
    }

    pub fn without_membrane(&self) -> Self {
        let mut c = self.clone();
        c.membrane = None;
        c
    }

    pub fn gap_medium(&self) -> &Arc<Medium> {
        &self.fiber_mirror.substrate
    }

    /// Index of the membrane in [`Self::system`]'s layer list.
    pub fn membrane_layer_index(&self) -> Option<usize> {
        self.membrane
            .as_ref()
            .map(|_| self.fiber_mirror.len() + usize::from(self.air_gap_nm > 0.0))
    }

    /// Index of the air gap in [`Self::system`]'s layer list.
    pub fn gap_layer_index(&self) -> Option<usize> {
        (self.air_gap_nm > 0.0).then_some(self.fiber_mirror.len())
    }

    /// The flattened stack; a zero gap puts the fiber mirror in contact with
    /// the membrane.
    pub fn system(&self) -> StackSpec {
        let mut layers = self.fiber_mirror.layers.clone();
        if self.air_gap_nm > 0.0 {
            layers.push(
                Layer::new(self.gap_medium().clone(), self.air_gap_nm).expect("positive gap"),
            );
        }
        layers.extend(self.membrane.iter().cloned());
        layers.extend(self.planar_mirror.layers.iter().cloned());
        StackSpec::new(
            self.fiber_mirror.ambient.clone(),
            layers,
            self.planar_mirror.substrate.clone(),
        )
    }

    /// Membrane plus planar mirror, entered from the gap medium.
    pub fn dressed_planar_mirror(&self) -> StackSpec {
        let mut layers: Vec<Layer> = self.membrane.iter().cloned().collect();
        layers.extend(self.planar_mirror.layers.iter().cloned());
        StackSpec::new(self.gap_medium().clone(), layers, self.planar_mirror.substrate.clone())
    }

    /// Fiber mirror seen from the gap.
    pub fn fiber_mirror_from_gap(&self) -> StackSpec {
        self.fiber_mirror.reversed()
    }

    /// Power transmissions (fiber, membrane-dressed planar) in ppm.
    pub fn mirror_transmissions_ppm(&self, wavelength_nm: f64, polarization: Polarization) -> Result<(f64, f64)> {
        let t1 = stack_response(&self.fiber_mirror, wavelength_nm, polarization)?.transmittance;
        let t2 = stack_response(&self.dressed_planar_mirror(), wavelength_nm, polarization)?.transmittance;
        Ok((t1 * 1e6, t2 * 1e6))
    }

    /// Round-trip phase `arg(r_fiber · r_planar · exp(2 i k g))` in the gap,
    /// in `(-π, π]`. Resonances sit at zero.
    pub fn round_trip_phase(&self, wavelength_nm: f64, polarization: Polarization) -> Result<f64> {
        let r1 = stack_response(&self.fiber_mirror_from_gap(), wavelength_nm, polarization)?.r;
        let r2 = stack_response(&self.dressed_planar_mirror(), wavelength_nm, polarization)?.r;
        let n_gap = self.gap_medium().index_at(wavelength_nm, polarization)?;
        let k = 2.0 * PI / wavelength_nm * n_gap;
        Ok((r1 * r2 * (2.0 * Complex64::i() * k * self.air_gap_nm).exp()).arg())
    }
}

/// `F = 2π / ((T1 + T2 + L) · 10⁻⁶)` with all losses in ppm.
pub fn finesse_from_losses(t1_ppm: f64, t2_ppm: f64, extra_loss_ppm: f64) -> Result<f64> {
    for (name, v) in [("T1", t1_ppm), ("T2", t2_ppm), ("extra loss", extra_loss_ppm)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "{name} must be non-negative and finite, got {v} ppm"
            )));
        }
    }
    let total = t1_ppm + t2_ppm + extra_loss_ppm;
    if total == 0.0 {
        return Err(Error::NumericalDegeneracy(
            "total round-trip loss is zero; finesse diverges".into(),
        ));
    }
    Ok(2.0 * PI / (total * 1e-6))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FinessePoint {
    pub wavelength_nm: f64,
    pub polarization: Polarization,
    pub finesse: f64,
    pub t_fiber_ppm: f64,
    pub t_planar_ppm: f64,
}

/// Finesse at each wavelength from the model mirror transmissions, with the
/// membrane dressing the planar mirror, plus the lumped excess loss.
pub fn finesse_spectrum(
    cavity: &CavityConfig,
    wavelengths_nm: &[f64],
    polarization: Polarization,
) -> Result<Vec<FinessePoint>> {
    wavelengths_nm
        .par_iter()
        .map(|&wl| {
            let (t1, t2) = cavity.mirror_transmissions_ppm(wl, polarization)?;
            Ok(FinessePoint {
                wavelength_nm: wl,
                polarization,
                finesse: finesse_from_losses(t1, t2, cavity.excess_loss_ppm)?,
                t_fiber_ppm: t1,
                t_planar_ppm: t2,
            })
        })
        .collect()
}

/// Indices of strict interior local maxima.
pub fn local_maxima(values: &[f64]) -> Vec<usize> {
    (1..values.len().saturating_sub(1))
        .filter(|&i| values[i] > values[i - 1] && values[i] >= values[i + 1])
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossBudget {
    pub wavelength_nm: f64,
    pub polarization: Polarization,
    pub t1_ppm: f64,
    pub t2_ppm: f64,
    pub measured_finesse: f64,
    pub total_loss_ppm: f64,
    pub inferred_extra_loss_ppm: f64,
    pub warning: Option<String>,
}

/// `L = 2π/F - T1 - T2` from a measured finesse.
pub fn loss_budget(
    measured_finesse: f64,
    cavity: &CavityConfig,
    wavelength_nm: f64,
    polarization: Polarization,
) -> Result<LossBudget> {
    if !(measured_finesse > 0.0 && measured_finesse.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "measured finesse must be positive, got {measured_finesse}"
        )));
    }
    let (t1, t2) = cavity.mirror_transmissions_ppm(wavelength_nm, polarization)?;
    let total = 2.0 * PI / measured_finesse * 1e6;
    let extra = total - t1 - t2;
    let warning = (extra < -1e-9 * total).then(|| {
        format!(
            "model transmissions ({:.1} ppm) exceed the total loss implied by F = {measured_finesse} ({total:.1} ppm)",
            t1 + t2
        )
    });
    Ok(LossBudget {
        wavelength_nm,
        polarization,
        t1_ppm: t1,
        t2_ppm: t2,
        measured_finesse,
        total_loss_ppm: total,
        inferred_extra_loss_ppm: extra,
        warning,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContactMode {
    pub air_gap_nm: f64,
    pub cavity: CavityConfig,
    pub profile: FieldProfile,
}

/// The resonance at `wavelength_nm` with the smallest gap not below
/// `min_gap_nm`: the mode that is excited with the fiber in contact.
pub fn contact_mode(
    cavity: &CavityConfig,
    wavelength_nm: f64,
    polarization: Polarization,
    min_gap_nm: f64,
) -> Result<ContactMode> {
    let base = cavity.with_gap(min_gap_nm)?;
    let phase = base.round_trip_phase(wavelength_nm, polarization)?;
    let n_gap = cavity.gap_medium().index_at(wavelength_nm, polarization)?.re;
    let k = 2.0 * PI * n_gap / wavelength_nm;
    let shift = (-phase).rem_euclid(2.0 * PI) / (2.0 * k);
    let resonant = cavity.with_gap(min_gap_nm + shift)?;
    let profile = field_profile(&resonant.system(), wavelength_nm, polarization)?;
    Ok(ContactMode {
        air_gap_nm: min_gap_nm + shift,
        cavity: resonant,
        profile,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::materials::{quarter_wave_stack, Termination};

    pub(crate) fn medium(name: &str, n: f64) -> Arc<Medium> {
        Arc::new(Medium::constant(name, n).unwrap())
    }

    pub(crate) fn toy_cavity(gap: f64, membrane: Option<(f64, f64)>) -> CavityConfig {
        let h = medium("H", 2.25);
        let l = medium("L", 1.48);
        let glass = medium("glass", 1.45);
        let air = medium("air", 1.0);
        let fiber = quarter_wave_stack(985.0, &h, &l, 8, Termination::High, glass.clone(), air.clone()).unwrap();
        let planar = quarter_wave_stack(985.0, &h, &l, 8, Termination::Low, glass, air)
            .unwrap()
            .reversed();
        let membrane = membrane.map(|(n, d)| Layer::new(medium("M", n), d).unwrap());
        assemble(fiber, gap, membrane, planar).unwrap()
    }

    #[test]
    fn finesse_formula() {
        let f = finesse_from_losses(222.0, 25.0, 0.0).unwrap();
        assert!((f - 25438.0).abs() < 1.0);
        let f = finesse_from_losses(900.0, 100.0, 0.0).unwrap();
        assert!((f - 6283.2).abs() < 0.1);
        assert!((finesse_from_losses(2.0 * PI * 1e6, 0.0, 0.0).unwrap() - 1.0).abs() < 1e-12);
        assert!(finesse_from_losses(0.0, 0.0, 0.0).is_err());
        assert!(finesse_from_losses(-1.0, 10.0, 0.0).is_err());
    }

    #[test]
    fn flattened_layout() {
        let c = toy_cavity(1000.0, Some((2.6, 500.0)));
        let s = c.system();
        assert_eq!(s.len(), 17 + 1 + 1 + 16);
        assert_eq!(s.layers[17].medium().name(), "air");
        assert_eq!(s.layers[18].medium().name(), "M");
        assert_eq!(s.layers[19].medium().name(), "L");
        assert_eq!(c.membrane_layer_index(), Some(18));
        let contact = c.with_gap(0.0).unwrap();
        assert_eq!(contact.system().len(), 34);
        assert_eq!(contact.membrane_layer_index(), Some(17));
    }

    #[test]
    fn loss_budget_closes() {
        let c = toy_cavity(5000.0, None);
        let (t1, t2) = c.mirror_transmissions_ppm(985.0, Polarization::Ordinary).unwrap();
        let f = finesse_from_losses(t1, t2, 0.0).unwrap();
        let b = loss_budget(f, &c, 985.0, Polarization::Ordinary).unwrap();
        assert!(b.inferred_extra_loss_ppm.abs() < 1e-6);
        assert!((b.t1_ppm + b.t2_ppm + b.inferred_extra_loss_ppm - b.total_loss_ppm).abs() < 1e-9);
        let b = loss_budget(10.0 * f, &c, 985.0, Polarization::Ordinary).unwrap();
        assert!(b.warning.is_some());
    }

    #[test]
    fn contact_mode_is_resonant() {
        let c = toy_cavity(0.0, Some((2.6, 2850.0)));
        let m = contact_mode(&c, 917.0, Polarization::Ordinary, 0.0).unwrap();
        assert!(m.air_gap_nm >= 0.0 && m.air_gap_nm < 917.0 / 2.0 + 1e-9);
        let phase = m.cavity.round_trip_phase(917.0, Polarization::Ordinary).unwrap();
        assert!(phase.abs() < 1e-9);
    }

    #[test]
    fn bare_cavity_has_no_finesse_modulation() {
        let c = toy_cavity(5000.0, None).with_excess_loss(70.0);
        let grid: Vec<f64> = (0..=200).map(|i| 950.0 + 0.35 * i as f64).collect();
        let f: Vec<f64> = finesse_spectrum(&c, &grid, Polarization::Ordinary)
            .unwrap()
            .iter()
            .map(|p| p.finesse)
            .collect();
        assert!(local_maxima(&f).len() <= 1);
    }
}
