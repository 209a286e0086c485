//! Optical media, layers and layer stacks.
//!
//! Indices follow the `n + ik` convention with `k >= 0` for absorbing media.
//! Uniaxial media carry an ordinary and an extraordinary index; with the optic
//! axis lying in the layer plane the two polarizations decouple, so every
//! lookup takes the [`Polarization`] it is evaluated for.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarization {
    Ordinary,
    Extraordinary,
}

impl Polarization {
    pub const BOTH: [Polarization; 2] = [Polarization::Ordinary, Polarization::Extraordinary];

    pub fn as_str(self) -> &'static str {
        match self {
            Polarization::Ordinary => "ordinary",
            Polarization::Extraordinary => "extraordinary",
        }
    }
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Tabulated `(wavelength, index)` samples, linearly interpolated.
///
/// Lookups outside the tabulated range are errors; there is no extrapolation.
#[derive(Debug, Clone, PartialEq)]
pub struct DispersionTable {
    wavelengths_nm: Vec<f64>,
    ordinary: Vec<Complex64>,
    extraordinary: Option<Vec<Complex64>>,
}

impl DispersionTable {
    pub fn new(
        wavelengths_nm: Vec<f64>,
        ordinary: Vec<Complex64>,
        extraordinary: Option<Vec<Complex64>>,
    ) -> Result<Self> {
        let fail = |reason: &str| Error::InvalidArgument(format!("dispersion table: {reason}"));
        if wavelengths_nm.len() < 2 {
            return Err(fail("needs at least two samples"));
        }
        if ordinary.len() != wavelengths_nm.len()
            || extraordinary
                .as_ref()
                .is_some_and(|e| e.len() != wavelengths_nm.len())
        {
            return Err(fail("index columns must match the wavelength column length"));
        }
        if wavelengths_nm.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(fail("wavelengths must be strictly increasing"));
        }
        Ok(Self {
            wavelengths_nm,
            ordinary,
            extraordinary,
        })
    }

    pub fn range_nm(&self) -> (f64, f64) {
        (self.wavelengths_nm[0], *self.wavelengths_nm.last().unwrap())
    }

    fn column(&self, polarization: Polarization) -> &[Complex64] {
        match (polarization, &self.extraordinary) {
            (Polarization::Extraordinary, Some(e)) => e,
            _ => &self.ordinary,
        }
    }

    fn interpolate(&self, wavelength_nm: f64, polarization: Polarization) -> Option<Complex64> {
        let (lo, hi) = self.range_nm();
        if !(wavelength_nm >= lo && wavelength_nm <= hi) {
            return None;
        }
        let xs = &self.wavelengths_nm;
        let ys = self.column(polarization);
        let i = match xs.partition_point(|&x| x <= wavelength_nm) {
            0 => 0,
            p if p >= xs.len() => xs.len() - 2,
            p => p - 1,
        };
        let f = (wavelength_nm - xs[i]) / (xs[i + 1] - xs[i]);
        Some(ys[i] + (ys[i + 1] - ys[i]) * f)
    }

    fn samples(&self) -> impl Iterator<Item = &Complex64> {
        self.ordinary
            .iter()
            .chain(self.extraordinary.iter().flatten())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Medium {
    name: String,
    n_ordinary: Complex64,
    n_extraordinary: Option<Complex64>,
    dispersion: Option<DispersionTable>,
}

fn check_index(name: &str, n: Complex64) -> Result<()> {
    if !(n.re.is_finite() && n.im.is_finite()) {
        return Err(Error::InvalidMedium {
            name: name.to_string(),
            reason: format!("non-finite index {n}"),
        });
    }
    if n.re < 1.0 {
        return Err(Error::InvalidMedium {
            name: name.to_string(),
            reason: format!("real index {} below 1", n.re),
        });
    }
    if n.im < 0.0 {
        return Err(Error::InvalidMedium {
            name: name.to_string(),
            reason: format!("negative extinction {} (gain media are not supported)", n.im),
        });
    }
    Ok(())
}

impl Medium {
    pub fn new(
        name: impl Into<String>,
        n_ordinary: Complex64,
        n_extraordinary: Option<Complex64>,
    ) -> Result<Self> {
        let name = name.into();
        check_index(&name, n_ordinary)?;
        if let Some(ne) = n_extraordinary {
            check_index(&name, ne)?;
        }
        Ok(Self {
            name,
            n_ordinary,
            n_extraordinary,
            dispersion: None,
        })
    }

    /// Lossless, isotropic, wavelength-independent medium.
    pub fn constant(name: impl Into<String>, n: f64) -> Result<Self> {
        Self::new(name, Complex64::new(n, 0.0), None)
    }

    pub fn uniaxial(name: impl Into<String>, n_ordinary: f64, n_extraordinary: f64) -> Result<Self> {
        Self::new(
            name,
            Complex64::new(n_ordinary, 0.0),
            Some(Complex64::new(n_extraordinary, 0.0)),
        )
    }

    pub fn vacuum() -> Self {
        Self::constant("vacuum", 1.0).expect("vacuum index is valid")
    }

    /// Attaches a dispersion table; the table then takes precedence over the
    /// constant indices.
    pub fn with_dispersion(mut self, table: DispersionTable) -> Result<Self> {
        for n in table.samples() {
            check_index(&self.name, *n)?;
        }
        self.dispersion = Some(table);
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_ordinary(&self) -> Complex64 {
        self.n_ordinary
    }

    /// Extraordinary index; equals the ordinary one for isotropic media.
    pub fn n_extraordinary(&self) -> Complex64 {
        self.n_extraordinary.unwrap_or(self.n_ordinary)
    }

    pub fn dispersion(&self) -> Option<&DispersionTable> {
        self.dispersion.as_ref()
    }

    pub fn is_birefringent(&self) -> bool {
        self.n_extraordinary.is_some_and(|ne| ne != self.n_ordinary)
            || self
                .dispersion
                .as_ref()
                .is_some_and(|t| t.extraordinary.is_some())
    }

    pub fn is_lossless(&self) -> bool {
        self.n_ordinary.im == 0.0
            && self.n_extraordinary().im == 0.0
            && self
                .dispersion
                .as_ref()
                .is_none_or(|t| t.samples().all(|n| n.im == 0.0))
    }

    /// Complex index at `wavelength_nm` for the given polarization.
    pub fn index_at(&self, wavelength_nm: f64, polarization: Polarization) -> Result<Complex64> {
        match &self.dispersion {
            Some(table) => table
                .interpolate(wavelength_nm, polarization)
                .ok_or_else(|| {
                    let (min_nm, max_nm) = table.range_nm();
                    Error::OutOfRange {
                        medium: self.name.clone(),
                        wavelength_nm,
                        min_nm,
                        max_nm,
                    }
                }),
            None => Ok(match polarization {
                Polarization::Ordinary => self.n_ordinary,
                Polarization::Extraordinary => self.n_extraordinary(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    medium: Arc<Medium>,
    thickness_nm: f64,
}

impl Layer {
    pub fn new(medium: Arc<Medium>, thickness_nm: f64) -> Result<Self> {
        if !(thickness_nm > 0.0 && thickness_nm.is_finite()) {
            return Err(Error::InvalidLayer(format!(
                "thickness of `{}` layer must be positive and finite, got {thickness_nm} nm",
                medium.name()
            )));
        }
        Ok(Self {
            medium,
            thickness_nm,
        })
    }

    pub fn medium(&self) -> &Arc<Medium> {
        &self.medium
    }

    pub fn thickness_nm(&self) -> f64 {
        self.thickness_nm
    }

    pub fn with_thickness(&self, thickness_nm: f64) -> Result<Self> {
        Self::new(self.medium.clone(), thickness_nm)
    }

    /// Optical thickness `Re(n) * d` for the given polarization.
    pub fn optical_thickness_nm(&self, wavelength_nm: f64, polarization: Polarization) -> Result<f64> {
        Ok(self.medium.index_at(wavelength_nm, polarization)?.re * self.thickness_nm)
    }
}

/// Layered system at normal incidence. Light enters from `ambient` into
/// `layers[0]` and leaves into `substrate`.
#[derive(Debug, Clone, PartialEq)]
pub struct StackSpec {
    pub ambient: Arc<Medium>,
    pub layers: Vec<Layer>,
    pub substrate: Arc<Medium>,
}

impl StackSpec {
    pub fn new(ambient: Arc<Medium>, layers: Vec<Layer>, substrate: Arc<Medium>) -> Self {
        Self {
            ambient,
            layers,
            substrate,
        }
    }

    /// Bare ambient/substrate interface.
    pub fn bare(ambient: Arc<Medium>, substrate: Arc<Medium>) -> Self {
        Self::new(ambient, Vec::new(), substrate)
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn total_thickness_nm(&self) -> f64 {
        self.layers.iter().map(Layer::thickness_nm).sum()
    }

    /// Same physical stack seen from the other side.
    pub fn reversed(&self) -> Self {
        Self {
            ambient: self.substrate.clone(),
            layers: self.layers.iter().rev().cloned().collect(),
            substrate: self.ambient.clone(),
        }
    }

    pub fn with_ambient(mut self, ambient: Arc<Medium>) -> Self {
        self.ambient = ambient;
        self
    }

    pub fn with_substrate(mut self, substrate: Arc<Medium>) -> Self {
        self.substrate = substrate;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Termination {
    High,
    Low,
}

/// Quarter-wave Bragg stack designed for `center_wavelength_nm`.
///
/// The layer next to the ambient is always the high-index medium and the
/// layer next to the substrate is `terminate_with`, giving `2 * pairs` layers
/// for a low termination and `2 * pairs + 1` for a high one. Zero pairs gives
/// the bare interface.
pub fn quarter_wave_stack(
    center_wavelength_nm: f64,
    high: &Arc<Medium>,
    low: &Arc<Medium>,
    pairs: usize,
    terminate_with: Termination,
    ambient: Arc<Medium>,
    substrate: Arc<Medium>,
) -> Result<StackSpec> {
    if !(center_wavelength_nm > 0.0 && center_wavelength_nm.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "center wavelength must be positive, got {center_wavelength_nm} nm"
        )));
    }
    let n_high = high.index_at(center_wavelength_nm, Polarization::Ordinary)?;
    let n_low = low.index_at(center_wavelength_nm, Polarization::Ordinary)?;
    if n_high == n_low {
        return Err(Error::DegenerateStack(format!(
            "high (`{}`) and low (`{}`) media have identical index {n_high} at {center_wavelength_nm} nm",
            high.name(),
            low.name()
        )));
    }
    if pairs == 0 {
        return Ok(StackSpec::bare(ambient, substrate));
    }
    let count = match terminate_with {
        Termination::Low => 2 * pairs,
        Termination::High => 2 * pairs + 1,
    };
    let high_layer = Layer::new(high.clone(), center_wavelength_nm / (4.0 * n_high.re))?;
    let low_layer = Layer::new(low.clone(), center_wavelength_nm / (4.0 * n_low.re))?;
    let layers = (0..count)
        .map(|i| {
            if i % 2 == 0 {
                high_layer.clone()
            } else {
                low_layer.clone()
            }
        })
        .collect();
    Ok(StackSpec::new(ambient, layers, substrate))
}
