//! Run configuration: TOML documents layered as preset ← file ← `--set`.
//!
//! Every leaf is addressed by a dotted key such as `membrane.thickness_nm`.
//! Keys carry their unit as a suffix. Unknown keys are rejected with the
//! nearest known key as a suggestion.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use toml::Value;

use crate::cavity::{assemble, CavityConfig};
use crate::error::{Error, Result};
use crate::materials::{quarter_wave_stack, Layer, Medium, Polarization, StackSpec, Termination};
use crate::purcell::EmitterParams;

pub const SCHEMA_VERSION: i64 = 1;
pub const PRESET_NAMES: [&str; 3] = ["SA", "SB", "bare"];

const PRESET_SA: &str = include_str!("../presets/SA.toml");
const PRESET_SB: &str = include_str!("../presets/SB.toml");
const PRESET_BARE: &str = include_str!("../presets/bare.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumSpec {
    pub n: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_e: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_e: Option<f64>,
}

const MEDIUM_FIELDS: [&str; 4] = ["n", "k", "n_e", "k_e"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MirrorSpec {
    pub center_wavelength_nm: f64,
    pub pairs: usize,
    pub terminate_with: Termination,
    pub high: String,
    pub low: String,
    /// Medium on the far side of the mirror (fiber glass or substrate).
    pub outer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MembraneSpec {
    pub medium: String,
    pub thickness_nm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavitySpec {
    pub gap_medium: String,
    pub air_gap_nm: f64,
    pub excess_loss_ppm: f64,
    pub contact_gap_nm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    pub wavelength_min_nm: f64,
    pub wavelength_max_nm: f64,
    pub wavelength_step_nm: f64,
    pub gap_min_nm: f64,
    pub gap_max_nm: f64,
    pub gap_step_nm: f64,
    pub map_wavelength_step_nm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitterSpec {
    pub zpl_wavelength_nm: f64,
    pub tau0_ns: f64,
    pub tau_cav_ns: f64,
    pub debye_waller: f64,
    pub quantum_efficiency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PurcellSpec {
    pub quality_factor: f64,
    pub waist_um: f64,
    pub overlap: f64,
    pub linewidth_ghz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSpec {
    pub d_initial_nm: f64,
    pub offset_range_nm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrometerSpec {
    pub gap0_nm: f64,
    pub gap_step_nm: f64,
    pub peak_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineSpec {
    pub repeats: usize,
    pub fwhm_ghz: f64,
    pub scan_rate_ghz_per_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LifetimeSpec {
    pub t_start_ns: f64,
    pub synthetic_tau_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct G2Spec {
    pub period_ns: f64,
    pub exclusions_ns: Vec<[f64; 2]>,
    pub tau_decay_init_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub finesse: f64,
    pub wavelength_nm: f64,
    pub f_max_hz: f64,
    /// Synthetic spectrum shape: `free` or `contact`.
    pub scenario: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZplSpec {
    pub slope_ghz_per_step: f64,
    pub window_min_nm: f64,
    pub window_max_nm: f64,
    /// Number of Lorentzians; 0 selects them automatically.
    pub peaks: usize,
    pub max_peaks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema_version: i64,
    pub name: String,
    pub media: BTreeMap<String, MediumSpec>,
    pub fiber_mirror: MirrorSpec,
    pub planar_mirror: MirrorSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub membrane: Option<MembraneSpec>,
    pub cavity: CavitySpec,
    pub scan: ScanSpec,
    pub emitter: EmitterSpec,
    pub purcell: PurcellSpec,
    pub fit: FitSpec,
    pub spectrometer: SpectrometerSpec,
    pub line: LineSpec,
    pub lifetime: LifetimeSpec,
    pub g2: G2Spec,
    pub noise: NoiseSpec,
    pub zpl: ZplSpec,
}

/// Shipped text of a preset.
pub fn preset_text(name: &str) -> Result<&'static str> {
    match name {
        "SA" => Ok(PRESET_SA),
        "SB" => Ok(PRESET_SB),
        "bare" => Ok(PRESET_BARE),
        other => Err(Error::Config(format!(
            "unknown preset `{other}`; available: {}",
            PRESET_NAMES.join(", ")
        ))),
    }
}

fn parse_table(text: &str, origin: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>()
        .map_err(|e| Error::Config(format!("{origin}: {e}")))
}

/// Dotted paths of every leaf value in `table`.
fn leaf_keys(table: &toml::Table, prefix: &str, out: &mut Vec<String>) {
    for (k, v) in table {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => leaf_keys(t, &path, out),
            _ => out.push(path),
        }
    }
}

/// Keys accepted by every preset: the union over all shipped presets.
fn known_keys() -> Vec<String> {
    let mut keys = Vec::new();
    for name in PRESET_NAMES {
        let t = parse_table(preset_text(name).unwrap(), name).expect("shipped preset parses");
        leaf_keys(&t, "", &mut keys);
    }
    for f in MEDIUM_FIELDS {
        keys.push(format!("media.<name>.{f}"));
    }
    keys.sort();
    keys.dedup();
    keys
}

fn is_known(key: &str, known: &[String]) -> bool {
    if known.iter().any(|k| k == key) {
        return true;
    }
    let parts: Vec<&str> = key.split('.').collect();
    parts.len() == 3 && parts[0] == "media" && !parts[1].is_empty() && MEDIUM_FIELDS.contains(&parts[2])
}

fn unknown_key(key: &str, known: &[String]) -> Error {
    let suggestion = known
        .iter()
        .map(|k| (strsim::normalized_levenshtein(key, k), k))
        .filter(|(s, _)| *s > 0.5)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, k)| k.clone());
    Error::UnknownKey {
        key: key.to_string(),
        suggestion,
    }
}

fn check_keys(table: &toml::Table, known: &[String]) -> Result<()> {
    let mut keys = Vec::new();
    leaf_keys(table, "", &mut keys);
    for key in keys {
        if !is_known(&key, known) {
            return Err(unknown_key(&key, known));
        }
    }
    Ok(())
}

fn merge(base: &mut toml::Table, overlay: toml::Table) {
    for (k, v) in overlay {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Parses the right-hand side of `--set key=value` as a TOML value, falling
/// back to a bare string.
fn parse_override_value(raw: &str) -> Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.to_string())),
        Err(_) => Value::String(raw.to_string()),
    }
}

fn set_path(table: &mut toml::Table, key: &str, value: Value) -> Result<()> {
    let mut parts = key.split('.').peekable();
    let mut cur = table;
    while let Some(part) = parts.next() {
        if parts.peek().is_none() {
            cur.insert(part.to_string(), value);
            return Ok(());
        }
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(toml::Table::new()));
        cur = match entry {
            Value::Table(t) => t,
            _ => return Err(Error::Config(format!("`{key}`: `{part}` is not a section"))),
        };
    }
    Ok(())
}

impl Config {
    pub fn preset(name: &str) -> Result<Self> {
        Self::resolve(name, None, &[])
    }

    /// Preset, then an optional config file, then `key=value` overrides.
    pub fn resolve(preset: &str, file_text: Option<&str>, overrides: &[String]) -> Result<Self> {
        let known = known_keys();
        let mut table = parse_table(preset_text(preset)?, preset)?;
        if let Some(text) = file_text {
            let file = parse_table(text, "config file")?;
            check_keys(&file, &known)?;
            merge(&mut table, file);
        }
        for item in overrides {
            let (key, raw) = item.split_once('=').ok_or_else(|| {
                Error::Config(format!("override `{item}` is not of the form key=value"))
            })?;
            let key = key.trim();
            if !is_known(key, &known) {
                return Err(unknown_key(key, &known));
            }
            let mut value = parse_override_value(raw.trim());
            if let (Value::Integer(i), Some(Value::Float(_))) = (&value, lookup(&table, key)) {
                value = Value::Float(*i as f64);
            }
            set_path(&mut table, key, value)?;
        }
        Self::from_table(table)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table = parse_table(text, "config")?;
        check_keys(&table, &known_keys())?;
        Self::from_table(table)
    }

    fn from_table(table: toml::Table) -> Result<Self> {
        let version = table.get("schema_version").and_then(Value::as_integer);
        if version != Some(SCHEMA_VERSION) {
            return Err(Error::Config(format!(
                "schema_version must be {SCHEMA_VERSION}, got {}",
                version.map_or("none".to_string(), |v| v.to_string())
            )));
        }
        let cfg: Config = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical TOML text; stable across runs.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        for name in [
            &self.fiber_mirror.high,
            &self.fiber_mirror.low,
            &self.fiber_mirror.outer,
            &self.planar_mirror.high,
            &self.planar_mirror.low,
            &self.planar_mirror.outer,
            &self.cavity.gap_medium,
        ] {
            self.medium(name)?;
        }
        if let Some(m) = &self.membrane {
            self.medium(&m.medium)?;
        }
        let s = &self.scan;
        if !(s.wavelength_min_nm < s.wavelength_max_nm && s.wavelength_step_nm > 0.0 && s.map_wavelength_step_nm > 0.0) {
            return Err(Error::Config("scan wavelength range must be increasing with a positive step".into()));
        }
        if !(s.gap_min_nm >= 0.0 && s.gap_min_nm < s.gap_max_nm && s.gap_step_nm > 0.0) {
            return Err(Error::Config("scan gap range must be non-negative, increasing, with a positive step".into()));
        }
        Ok(())
    }

    pub fn medium(&self, name: &str) -> Result<Arc<Medium>> {
        let spec = self.media.get(name).ok_or_else(|| {
            Error::Config(format!(
                "medium `{name}` is not defined under [media]; defined: {}",
                self.media.keys().cloned().collect::<Vec<_>>().join(", ")
            ))
        })?;
        let n_o = Complex64::new(spec.n, spec.k.unwrap_or(0.0));
        let n_e = match (spec.n_e, spec.k_e) {
            (None, None) => None,
            (ne, ke) => Some(Complex64::new(ne.unwrap_or(spec.n), ke.unwrap_or(0.0))),
        };
        Ok(Arc::new(Medium::new(name, n_o, n_e)?))
    }

    /// Fiber mirror from the fiber glass to the gap medium.
    pub fn fiber_mirror(&self) -> Result<StackSpec> {
        let m = &self.fiber_mirror;
        quarter_wave_stack(
            m.center_wavelength_nm,
            &self.medium(&m.high)?,
            &self.medium(&m.low)?,
            m.pairs,
            m.terminate_with,
            self.medium(&m.outer)?,
            self.medium(&self.cavity.gap_medium)?,
        )
    }

    /// Planar mirror from the gap medium to its substrate. The stack is
    /// grown on the substrate, so `terminate_with` names the layer facing
    /// the gap.
    pub fn planar_mirror(&self) -> Result<StackSpec> {
        let m = &self.planar_mirror;
        Ok(quarter_wave_stack(
            m.center_wavelength_nm,
            &self.medium(&m.high)?,
            &self.medium(&m.low)?,
            m.pairs,
            m.terminate_with,
            self.medium(&m.outer)?,
            self.medium(&self.cavity.gap_medium)?,
        )?
        .reversed())
    }

    pub fn membrane_layer(&self) -> Result<Option<Layer>> {
        self.membrane
            .as_ref()
            .map(|m| Layer::new(self.medium(&m.medium)?, m.thickness_nm))
            .transpose()
    }

    pub fn cavity(&self) -> Result<CavityConfig> {
        Ok(assemble(
            self.fiber_mirror()?,
            self.cavity.air_gap_nm,
            self.membrane_layer()?,
            self.planar_mirror()?,
        )?
        .with_excess_loss(self.cavity.excess_loss_ppm))
    }

    /// Emitter parameters; the host index is the membrane's extraordinary
    /// index at the zero-phonon line, or 1 without a membrane.
    pub fn emitter(&self) -> Result<EmitterParams> {
        let e = &self.emitter;
        let host_index = match &self.membrane {
            Some(m) => self
                .medium(&m.medium)?
                .index_at(e.zpl_wavelength_nm, Polarization::Extraordinary)?
                .re,
            None => 1.0,
        };
        let p = EmitterParams {
            zpl_wavelength_nm: e.zpl_wavelength_nm,
            tau0_ns: e.tau0_ns,
            debye_waller: e.debye_waller,
            quantum_efficiency: e.quantum_efficiency,
            host_index,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn scan_wavelengths(&self) -> Vec<f64> {
        grid(self.scan.wavelength_min_nm, self.scan.wavelength_max_nm, self.scan.wavelength_step_nm)
    }

    pub fn map_wavelengths(&self) -> Vec<f64> {
        grid(self.scan.wavelength_min_nm, self.scan.wavelength_max_nm, self.scan.map_wavelength_step_nm)
    }

    pub fn scan_gaps(&self) -> Vec<f64> {
        grid(self.scan.gap_min_nm, self.scan.gap_max_nm, self.scan.gap_step_nm)
    }

    pub fn g2_exclusions(&self) -> Vec<(f64, f64)> {
        self.g2.exclusions_ns.iter().map(|w| (w[0], w[1])).collect()
    }
}

fn lookup<'a>(table: &'a toml::Table, key: &str) -> Option<&'a Value> {
    let mut parts = key.split('.');
    let mut cur = table.get(parts.next()?)?;
    for p in parts {
        cur = cur.as_table()?.get(p)?;
    }
    Some(cur)
}

/// `lo, lo + step, …` up to and including `hi` (within a small tolerance).
pub fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| lo + i as f64 * step).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_load() {
        for name in PRESET_NAMES {
            let c = Config::preset(name).unwrap();
            assert_eq!(c.name, name);
            c.cavity().unwrap();
        }
        assert!(Config::preset("SC").is_err());
        assert!(Config::preset("bare").unwrap().membrane.is_none());
    }

    #[test]
    fn override_applies() {
        let c = Config::resolve("SB", None, &["membrane.thickness_nm=2850".into()]).unwrap();
        assert_eq!(c.membrane.unwrap().thickness_nm, 2850.0);
        let c = Config::resolve("SB", None, &["membrane.thickness_nm=3000".into()]).unwrap();
        assert_eq!(c.membrane.unwrap().thickness_nm, 3000.0);
        let c = Config::resolve("SB", None, &["cavity.gap_medium=\"air\"".into()]).unwrap();
        assert_eq!(c.cavity.gap_medium, "air");
        let c = Config::resolve("SB", None, &["fiber_mirror.terminate_with=low".into()]).unwrap();
        assert_eq!(c.fiber_mirror.terminate_with, Termination::Low);
    }

    #[test]
    fn unknown_key_suggests_nearest() {
        let err = Config::resolve("SB", None, &["membrane.thickness=2850".into()]).unwrap_err();
        match err {
            Error::UnknownKey { key, suggestion } => {
                assert_eq!(key, "membrane.thickness");
                assert_eq!(suggestion.as_deref(), Some("membrane.thickness_nm"));
            }
            e => panic!("unexpected {e:?}"),
        }
        let err = Config::resolve("SB", Some("[cavity]\nair_gap = 5\n"), &[]).unwrap_err();
        assert!(matches!(err, Error::UnknownKey { .. }));
    }

    #[test]
    fn bare_accepts_membrane_override() {
        let c = Config::resolve(
            "bare",
            None,
            &["membrane.medium=sic".into(), "membrane.thickness_nm=1000".into()],
        );
        assert!(c.unwrap().membrane.is_some());
    }

    #[test]
    fn echo_round_trips() {
        for name in PRESET_NAMES {
            let c = Config::preset(name).unwrap();
            let text = c.to_toml_string();
            assert_eq!(Config::from_toml_str(&text).unwrap(), c);
            assert_eq!(Config::from_toml_str(&text).unwrap().to_toml_string(), text);
        }
    }

    #[test]
    fn schema_version_checked() {
        let err = Config::resolve("SB", Some("schema_version = 2\n"), &[]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn new_media_allowed() {
        let c = Config::resolve("SB", None, &["media.ta2o5.n=2.1".into(), "fiber_mirror.high=ta2o5".into()]).unwrap();
        assert!((c.fiber_mirror().unwrap().layers[0].medium().n_ordinary().re - 2.1).abs() < 1e-12);
    }

    #[test]
    fn grid_includes_endpoint() {
        assert_eq!(grid(900.0, 1000.0, 0.5).len(), 201);
        assert!((grid(0.0, 1.0, 0.1).last().unwrap() - 1.0).abs() < 1e-12);
    }
}
