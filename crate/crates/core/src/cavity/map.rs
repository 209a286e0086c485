use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{find_resonances, CavityConfig};
use crate::error::{Error, Result};
use crate::materials::Polarization;
use crate::tmm::{field_profile, stack_response};

pub const AIR_LIKE_BELOW: f64 = 0.35;
pub const DIELECTRIC_LIKE_ABOVE: f64 = 0.65;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeCharacter {
    AirLike,
    DielectricLike,
    Mixed,
}

impl ModeCharacter {
    pub fn from_fraction(membrane_fraction: f64) -> Self {
        if membrane_fraction < AIR_LIKE_BELOW {
            ModeCharacter::AirLike
        } else if membrane_fraction > DIELECTRIC_LIKE_ABOVE {
            ModeCharacter::DielectricLike
        } else {
            ModeCharacter::Mixed
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModeCharacter::AirLike => "air_like",
            ModeCharacter::DielectricLike => "dielectric_like",
            ModeCharacter::Mixed => "mixed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub gap_nm: f64,
    pub wavelength_nm: f64,
    pub fwhm_nm: Option<f64>,
    pub membrane_fraction: Option<f64>,
    pub character: Option<ModeCharacter>,
}

impl BranchPoint {
    pub fn new(gap_nm: f64, wavelength_nm: f64) -> Self {
        BranchPoint {
            gap_nm,
            wavelength_nm,
            fwhm_nm: None,
            membrane_fraction: None,
            character: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub id: usize,
    /// `None` for measured maps where the polarization was not resolved.
    pub polarization: Option<Polarization>,
    pub points: Vec<BranchPoint>,
}

/// Row-major `T[gap_index][wavelength_index]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarizedGrid {
    pub polarization: Polarization,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeMap {
    pub gap_values_nm: Vec<f64>,
    pub wavelengths_nm: Vec<f64>,
    pub transmission: Vec<PolarizedGrid>,
    pub branches: Vec<Branch>,
    pub diagnostics: Vec<String>,
}

fn check_sorted(name: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::InvalidArgument(format!("{name} grid is empty")));
    }
    if v.iter().any(|x| !x.is_finite()) || v.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(format!(
            "{name} grid must be finite and strictly increasing"
        )));
    }
    Ok(())
}

impl ModeMap {
    /// Map holding only branch points, e.g. read back from a file.
    pub fn from_branches(branches: Vec<Branch>) -> Self {
        let mut gaps: Vec<f64> = branches
            .iter()
            .flat_map(|b| b.points.iter().map(|p| p.gap_nm))
            .collect();
        gaps.sort_by(f64::total_cmp);
        gaps.dedup();
        ModeMap {
            gap_values_nm: gaps,
            wavelengths_nm: Vec::new(),
            transmission: Vec::new(),
            branches,
            diagnostics: Vec::new(),
        }
    }

    /// Measured map from spectrometer frames. Frame `k` was taken at gap
    /// `gap0_nm + k * gap_step_nm`; peaks above `threshold` times the frame
    /// maximum are located by parabolic interpolation and linked into
    /// branches.
    pub fn from_spectrometer(
        records: &[(usize, f64, f64)],
        gap0_nm: f64,
        gap_step_nm: f64,
        polarization: Option<Polarization>,
        threshold: f64,
    ) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InsufficientData("no spectrometer records".into()));
        }
        if !(gap_step_nm > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "gap step per frame must be positive, got {gap_step_nm}"
            )));
        }
        let mut frames: Vec<usize> = records.iter().map(|r| r.0).collect();
        frames.sort_unstable();
        frames.dedup();
        let mut wavelengths: Vec<f64> = records.iter().map(|r| r.1).collect();
        wavelengths.sort_by(f64::total_cmp);
        wavelengths.dedup();
        let nw = wavelengths.len();
        let mut values = vec![0.0; frames.len() * nw];
        for &(frame, wl, counts) in records {
            let i = frames.binary_search(&frame).expect("frame listed");
            let j = wavelengths.binary_search_by(|w| w.total_cmp(&wl)).expect("wavelength listed");
            values[i * nw + j] = counts;
        }
        let gaps: Vec<f64> = frames.iter().map(|&k| gap0_nm + k as f64 * gap_step_nm).collect();
        let per_gap: Vec<(f64, Vec<(f64, Option<f64>)>)> = gaps
            .iter()
            .enumerate()
            .map(|(i, &g)| {
                let row = &values[i * nw..(i + 1) * nw];
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let peaks = (1..nw.saturating_sub(1))
                    .filter(|&j| row[j] > row[j - 1] && row[j] >= row[j + 1] && row[j] > threshold * max)
                    .map(|j| (parabolic_peak(&wavelengths, row, j), None))
                    .collect();
                (g, peaks)
            })
            .collect();
        let (branches, diagnostics) = link_branches(&per_gap, polarization, 0);
        let pol = polarization.unwrap_or(Polarization::Ordinary);
        Ok(ModeMap {
            gap_values_nm: gaps,
            wavelengths_nm: wavelengths,
            transmission: vec![PolarizedGrid { polarization: pol, values }],
            branches,
            diagnostics,
        })
    }

    pub fn transmission_for(&self, polarization: Polarization) -> Option<&PolarizedGrid> {
        self.transmission.iter().find(|g| g.polarization == polarization)
    }

    pub fn points(&self) -> impl Iterator<Item = (Option<Polarization>, &BranchPoint)> {
        self.branches
            .iter()
            .flat_map(|b| b.points.iter().map(move |p| (b.polarization, p)))
    }
}

fn parabolic_peak(x: &[f64], y: &[f64], j: usize) -> f64 {
    let (x0, x1, x2) = (x[j - 1], x[j], x[j + 1]);
    let (y0, y1, y2) = (y[j - 1], y[j], y[j + 1]);
    let d1 = (y1 - y0) / (x1 - x0);
    let d2 = (y2 - y1) / (x2 - x1);
    let curv = (d2 - d1) / (0.5 * (x2 - x0));
    if curv >= 0.0 {
        return x1;
    }
    let mid01 = 0.5 * (x0 + x1);
    (mid01 - d1 / curv).clamp(x0, x2)
}

/// Links per-gap resonance lists into branches.
///
/// A branch at gap step `k-1` may continue to a resonance at step `k` whose
/// wavelength is not lower and lies within half the smallest spacing of the
/// step `k-1` resonances. Pairs are assigned greedily by smallest `|Δλ|`, then lower `λ`;
/// a point or branch with several admissible partners is logged.
pub fn link_branches(
    per_gap: &[(f64, Vec<(f64, Option<f64>)>)],
    polarization: Option<Polarization>,
    first_id: usize,
) -> (Vec<Branch>, Vec<String>) {
    let mut branches: Vec<Branch> = Vec::new();
    let mut diagnostics = Vec::new();
    let mut open: Vec<usize> = Vec::new();
    let pol_label = polarization.map_or("unresolved", |p| p.as_str());
    for (step, (gap, points)) in per_gap.iter().enumerate() {
        let mut next_open = Vec::new();
        let mut taken = vec![false; points.len()];
        if step > 0 && !open.is_empty() && !points.is_empty() {
            let prev: Vec<f64> = open
                .iter()
                .map(|&b| branches[b].points.last().unwrap().wavelength_nm)
                .collect();
            let mut tol = 0.5 * min_spacing(&prev);
            if !tol.is_finite() {
                tol = 0.5 * min_spacing(&points.iter().map(|p| p.0).collect::<Vec<_>>());
            }
            let mut pairs: Vec<(f64, f64, usize, usize)> = Vec::new();
            for (bi, &wl_prev) in prev.iter().enumerate() {
                for (pi, p) in points.iter().enumerate() {
                    let d = p.0 - wl_prev;
                    if d > -1e-6 && d <= tol {
                        pairs.push((d.abs(), p.0, bi, pi));
                    }
                }
            }
            for bi in 0..prev.len() {
                let n = pairs.iter().filter(|q| q.2 == bi).count();
                if n > 1 {
                    diagnostics.push(format!(
                        "ambiguous continuation at gap {gap:.3} nm ({pol_label}): {n} candidates for branch at {:.4} nm",
                        prev[bi]
                    ));
                }
            }
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
            let mut used = vec![false; prev.len()];
            for (_, _, bi, pi) in pairs {
                if used[bi] || taken[pi] {
                    continue;
                }
                used[bi] = true;
                taken[pi] = true;
                let b = open[bi];
                branches[b].points.push(point(*gap, points[pi]));
                next_open.push(b);
            }
        }
        for (pi, p) in points.iter().enumerate() {
            if !taken[pi] {
                branches.push(Branch {
                    id: first_id + branches.len(),
                    polarization,
                    points: vec![point(*gap, *p)],
                });
                next_open.push(branches.len() - 1);
            }
        }
        next_open.sort_by(|&a, &b| {
            let wa = branches[a].points.last().unwrap().wavelength_nm;
            let wb = branches[b].points.last().unwrap().wavelength_nm;
            wa.total_cmp(&wb)
        });
        open = next_open;
    }
    (branches, diagnostics)
}

fn point(gap: f64, p: (f64, Option<f64>)) -> BranchPoint {
    BranchPoint {
        fwhm_nm: p.1,
        ..BranchPoint::new(gap, p.0)
    }
}

fn min_spacing(sorted: &[f64]) -> f64 {
    let mut v = sorted.to_vec();
    v.sort_by(f64::total_cmp);
    v.windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min)
}

/// Transmission map over `gaps × wavelengths` for each polarization, with
/// resonance branches tracked across gap steps.
pub fn dispersion_map(
    cavity: &CavityConfig,
    gaps_nm: &[f64],
    wavelengths_nm: &[f64],
    polarizations: &[Polarization],
) -> Result<ModeMap> {
    check_sorted("gap", gaps_nm)?;
    check_sorted("wavelength", wavelengths_nm)?;
    if gaps_nm[0] < 0.0 {
        return Err(Error::InvalidArgument("gap values must be non-negative".into()));
    }
    let range = (wavelengths_nm[0], *wavelengths_nm.last().unwrap());
    let mut transmission = Vec::new();
    let mut branches = Vec::new();
    let mut diagnostics = Vec::new();
    for &pol in polarizations {
        let rows: Vec<Vec<f64>> = gaps_nm
            .par_iter()
            .map(|&g| {
                let stack = cavity.with_gap(g)?.system();
                wavelengths_nm
                    .iter()
                    .map(|&wl| Ok(stack_response(&stack, wl, pol)?.transmittance))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        transmission.push(PolarizedGrid {
            polarization: pol,
            values: rows.concat(),
        });
        if range.1 > range.0 {
            let per_gap: Vec<(f64, Vec<(f64, Option<f64>)>)> = gaps_nm
                .par_iter()
                .map(|&g| {
                    let res = find_resonances(&cavity.with_gap(g)?, range, pol)?;
                    Ok((g, res.iter().map(|r| (r.wavelength_nm, Some(r.fwhm_nm))).collect()))
                })
                .collect::<Result<_>>()?;
            let (b, d) = link_branches(&per_gap, Some(pol), branches.len());
            branches.extend(b);
            diagnostics.extend(d);
        }
    }
    for d in &diagnostics {
        log::debug!("{d}");
    }
    Ok(ModeMap {
        gap_values_nm: gaps_nm.to_vec(),
        wavelengths_nm: wavelengths_nm.to_vec(),
        transmission,
        branches,
        diagnostics,
    })
}

/// Fraction of `∫ n² |E|² dz` over the layered region that lies inside the
/// membrane, evaluated on resonance.
pub fn membrane_energy_fraction(
    cavity: &CavityConfig,
    wavelength_nm: f64,
    polarization: Polarization,
) -> Result<f64> {
    let Some(idx) = cavity.membrane_layer_index() else {
        return Ok(0.0);
    };
    let profile = field_profile(&cavity.system(), wavelength_nm, polarization)?;
    let density: Vec<f64> = profile
        .n_of_z
        .iter()
        .zip(&profile.e_of_z)
        .map(|(n, e)| n.norm_sqr() * e.norm_sqr())
        .collect();
    let integrate = |r: std::ops::Range<usize>| -> f64 {
        let z = &profile.z_nm[r.clone()];
        let w = &density[r];
        z.windows(2)
            .zip(w.windows(2))
            .map(|(z, w)| 0.5 * (z[1] - z[0]) * (w[0] + w[1]))
            .sum()
    };
    let b = &profile.layer_boundaries;
    let inside = integrate(profile.sample_range(b[idx], b[idx + 1]));
    let total = integrate(profile.layered_range());
    if !(total > 0.0) {
        return Err(Error::NumericalDegeneracy("field vanishes inside the stack".into()));
    }
    Ok(inside / total)
}

/// Tags every branch point by its membrane energy fraction. Points of
/// branches without a polarization are evaluated in the ordinary one.
pub fn classify_modes(map: &ModeMap, cavity: &CavityConfig) -> Result<ModeMap> {
    let mut out = map.clone();
    for branch in &mut out.branches {
        let pol = branch.polarization.unwrap_or(Polarization::Ordinary);
        let fractions: Vec<f64> = branch
            .points
            .par_iter()
            .map(|p| membrane_energy_fraction(&cavity.with_gap(p.gap_nm)?, p.wavelength_nm, pol))
            .collect::<Result<_>>()?;
        for (p, f) in branch.points.iter_mut().zip(fractions) {
            p.membrane_fraction = Some(f);
            p.character = Some(ModeCharacter::from_fraction(f));
        }
    }
    Ok(out)
}

/// Where one polarization family of a map flattens into the membrane modes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingAnalysis {
    pub polarization: Option<Polarization>,
    /// Centres of the flat (avoided-crossing) regions, clustered across
    /// branches.
    pub flat_wavelengths_nm: Vec<f64>,
    /// Smallest slope over the largest slope, minimised over branches.
    pub min_slope_ratio: f64,
    /// Mean spacing of the flat regions in wavenumber (1/µm).
    pub period_per_um: Option<f64>,
}

const FLAT_SLOPE_RATIO: f64 = 0.5;
const FLAT_CLUSTER_NM: f64 = 2.0;

/// `(λ_mid, dλ/dgap)` between consecutive points of a branch.
pub fn branch_slopes(branch: &Branch) -> Vec<(f64, f64)> {
    branch
        .points
        .windows(2)
        .map(|w| {
            (
                0.5 * (w[0].wavelength_nm + w[1].wavelength_nm),
                (w[1].wavelength_nm - w[0].wavelength_nm) / (w[1].gap_nm - w[0].gap_nm),
            )
        })
        .collect()
}

/// Locates the avoided crossings of one polarization family as local slope
/// minima below half the branch's steepest slope.
pub fn coupling_analysis(map: &ModeMap, polarization: Option<Polarization>) -> CouplingAnalysis {
    let mut flats = Vec::new();
    let mut min_ratio = f64::INFINITY;
    for b in map.branches.iter().filter(|b| b.polarization == polarization) {
        let s = branch_slopes(b);
        if s.len() < 3 {
            continue;
        }
        let smax = s.iter().map(|x| x.1).fold(0.0, f64::max);
        if !(smax > 0.0) {
            continue;
        }
        for i in 1..s.len() - 1 {
            let ratio = s[i].1 / smax;
            min_ratio = min_ratio.min(ratio);
            if s[i].1 < s[i - 1].1 && s[i].1 <= s[i + 1].1 && ratio < FLAT_SLOPE_RATIO {
                flats.push(s[i].0);
            }
        }
    }
    flats.sort_by(f64::total_cmp);
    let mut clusters: Vec<Vec<f64>> = Vec::new();
    for f in flats {
        match clusters.last_mut() {
            Some(c) if f - c[c.len() - 1] < FLAT_CLUSTER_NM => c.push(f),
            _ => clusters.push(vec![f]),
        }
    }
    let centers: Vec<f64> = clusters
        .iter()
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    let period_per_um = (centers.len() >= 2).then(|| {
        let first = 1e3 / centers[0];
        let last = 1e3 / centers[centers.len() - 1];
        (first - last) / (centers.len() - 1) as f64
    });
    CouplingAnalysis {
        polarization,
        flat_wavelengths_nm: centers,
        min_slope_ratio: min_ratio,
        period_per_um,
    }
}

/// `gap_nm,wavelength_nm,T,polarization`, one row per grid cell.
pub fn write_mode_map_csv<W: Write>(mut w: W, map: &ModeMap) -> io::Result<()> {
    writeln!(w, "gap_nm,wavelength_nm,T,polarization")?;
    let nw = map.wavelengths_nm.len();
    for grid in &map.transmission {
        for (i, g) in map.gap_values_nm.iter().enumerate() {
            for (j, wl) in map.wavelengths_nm.iter().enumerate() {
                writeln!(w, "{g},{wl},{:e},{}", grid.values[i * nw + j], grid.polarization)?;
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct BranchFile<'a> {
    branches: &'a [Branch],
    diagnostics: &'a [String],
}

pub fn write_branches_json<W: Write>(w: W, map: &ModeMap) -> io::Result<()> {
    serde_json::to_writer_pretty(
        w,
        &BranchFile {
            branches: &map.branches,
            diagnostics: &map.diagnostics,
        },
    )
    .map_err(io::Error::other)
}
