use std::f64::consts::PI;

use num_complex::Complex64;

use super::{CavityConfig, ModeMap};
use crate::analysis::lm::{levenberg_marquardt, LmOptions};
use crate::analysis::FitResult;
use crate::error::{Error, Result};
use crate::materials::{Layer, Polarization};
use crate::tmm::stack_response;

#[derive(Debug, Clone, PartialEq)]
pub struct ThicknessFitOptions {
    /// Coarse scan covers `[lo, hi] * d_initial`.
    pub scan_factors: (f64, f64),
    /// Coarse scan of the gap offset covers `±offset_range_nm`.
    pub offset_range_nm: f64,
    /// Branch points used in the coarse scan (evenly subsampled).
    pub max_scan_points: usize,
}

impl Default for ThicknessFitOptions {
    fn default() -> Self {
        ThicknessFitOptions {
            scan_factors: (0.8, 1.3),
            offset_range_nm: 300.0,
            max_scan_points: 400,
        }
    }
}

/// Thickness and offset enter through finite-difference columns, so exact
/// degeneracy shows up at roughly the square root of machine precision.
const SINGULAR_RATIO: f64 = 1e-6;

struct Point {
    gap_nm: f64,
    wavelength_nm: f64,
    pols: Vec<Polarization>,
    /// Fiber mirror reflection seen from the gap, per entry of `pols`.
    r_fiber: Vec<Complex64>,
    k_gap: Vec<f64>,
}

fn wrap(phi: f64) -> f64 {
    let w = (phi + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

/// Round-trip phase mismatch `arg(r_fiber r_planar e^{2ik(g + offset)})` of
/// one measured resonance; the smaller of the two when the polarization is
/// unknown.
fn point_residual(cavity: &CavityConfig, p: &Point, offset_nm: f64) -> Result<f64> {
    let planar = cavity.dressed_planar_mirror();
    let mut best = f64::INFINITY;
    for (i, &pol) in p.pols.iter().enumerate() {
        let r2 = stack_response(&planar, p.wavelength_nm, pol)?.r;
        let phase = Complex64::new(0.0, 2.0 * p.k_gap[i] * (p.gap_nm + offset_nm));
        let v = wrap((p.r_fiber[i] * r2 * phase.exp()).arg());
        if v.abs() < best.abs() {
            best = v;
        }
    }
    Ok(best)
}

fn residuals(cavity: &CavityConfig, pts: &[Point], d: f64, offset: f64) -> Result<Vec<f64>> {
    let c = cavity.with_membrane_thickness(d)?;
    pts.iter().map(|p| point_residual(&c, p, offset)).collect()
}

/// Fits membrane thickness and a global gap offset to measured branch points.
///
/// The residual of each point is its round-trip phase mismatch in radians,
/// zero exactly on a model resonance. A coarse grid over thickness and offset
/// seeds a Levenberg-Marquardt refinement. A template without a membrane is
/// fitted with a membrane of gap medium, which carries no thickness
/// information and is reported as unidentifiable.
pub fn fit_membrane_thickness(
    measured: &ModeMap,
    template: &CavityConfig,
    d_initial_nm: f64,
    opts: &ThicknessFitOptions,
) -> Result<FitResult> {
    if !(d_initial_nm > 0.0 && d_initial_nm.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "initial thickness must be positive, got {d_initial_nm} nm"
        )));
    }
    let n_branches = measured.branches.iter().filter(|b| !b.points.is_empty()).count();
    let n_points: usize = measured.branches.iter().map(|b| b.points.len()).sum();
    if n_branches < 2 || n_points < 3 {
        return Err(Error::InsufficientData(format!(
            "thickness fit needs at least 2 branches and 3 points, got {n_branches} and {n_points}"
        )));
    }
    let mut diagnostics = Vec::new();
    let cavity = match &template.membrane {
        Some(_) => template.with_membrane_thickness(d_initial_nm)?,
        None => {
            diagnostics.push("template has no membrane; using a layer of gap medium".into());
            let mut c = template.clone();
            c.membrane = Some(Layer::new(template.gap_medium().clone(), d_initial_nm)?);
            c
        }
    };
    let fiber = cavity.fiber_mirror_from_gap();
    let gap_medium = cavity.gap_medium().clone();
    let pts: Vec<Point> = measured
        .points()
        .map(|(pol, bp)| {
            let pols = match pol {
                Some(p) => vec![p],
                None => Polarization::BOTH.to_vec(),
            };
            let mut r_fiber = Vec::new();
            let mut k_gap = Vec::new();
            for &p in &pols {
                r_fiber.push(stack_response(&fiber, bp.wavelength_nm, p)?.r);
                k_gap.push(2.0 * PI * gap_medium.index_at(bp.wavelength_nm, p)?.re / bp.wavelength_nm);
            }
            Ok(Point {
                gap_nm: bp.gap_nm,
                wavelength_nm: bp.wavelength_nm,
                pols,
                r_fiber,
                k_gap,
            })
        })
        .collect::<Result<_>>()?;

    let stride = (pts.len() / opts.max_scan_points.max(1)).max(1);
    let scan_pts: Vec<&Point> = pts.iter().step_by(stride).collect();
    let wl_min = pts.iter().map(|p| p.wavelength_nm).fold(f64::INFINITY, f64::min);
    let membrane_medium = cavity.membrane.as_ref().unwrap().medium().clone();
    let n_max = Polarization::BOTH
        .iter()
        .map(|&p| membrane_medium.index_at(wl_min, p).map(|n| n.re))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(1.0, f64::max);
    let d_step = wl_min / (32.0 * n_max);
    let off_step = wl_min / 32.0;
    let (lo, hi) = (opts.scan_factors.0 * d_initial_nm, opts.scan_factors.1 * d_initial_nm);
    let n_d = ((hi - lo) / d_step).ceil() as usize + 1;
    let n_off = (2.0 * opts.offset_range_nm / off_step).ceil() as usize + 1;
    let offsets: Vec<f64> = (0..n_off)
        .map(|k| -opts.offset_range_nm + k as f64 * 2.0 * opts.offset_range_nm / (n_off - 1).max(1) as f64)
        .collect();
    let candidates: Vec<(f64, f64, f64)> = {
        use rayon::prelude::*;
        (0..n_d)
            .into_par_iter()
            .map(|i| {
                let d = (lo + i as f64 * d_step).min(hi);
                let c = cavity.with_membrane_thickness(d)?;
                let planar = c.dressed_planar_mirror();
                let mut base = Vec::with_capacity(scan_pts.len());
                for p in &scan_pts {
                    let mut per_pol = Vec::new();
                    for (j, &pol) in p.pols.iter().enumerate() {
                        let r2 = stack_response(&planar, p.wavelength_nm, pol)?.r;
                        per_pol.push(((p.r_fiber[j] * r2).arg(), 2.0 * p.k_gap[j]));
                    }
                    base.push((p.gap_nm, per_pol));
                }
                let mut best = (f64::INFINITY, d, 0.0);
                for &off in &offsets {
                    let cost: f64 = base
                        .iter()
                        .map(|(g, per_pol)| {
                            per_pol
                                .iter()
                                .map(|(phi, k2)| wrap(phi + k2 * (g + off)).powi(2))
                                .fold(f64::INFINITY, f64::min)
                        })
                        .sum();
                    if cost < best.0 {
                        best = (cost, d, off);
                    }
                }
                Ok(best)
            })
            .collect::<Result<_>>()?
    };
    let (_, d0, off0) = candidates
        .into_iter()
        .fold((f64::INFINITY, d_initial_nm, 0.0), |a, b| if b.0 < a.0 { b } else { a });

    let lm_opts = LmOptions {
        scales: vec![1.0, 1.0],
        singular_ratio: SINGULAR_RATIO,
        ..LmOptions::default()
    };
    let failed = std::cell::Cell::new(None::<Error>);
    let outcome = levenberg_marquardt(
        |p: &[f64]| {
            if p[0] <= 0.0 {
                return vec![f64::NAN; pts.len()];
            }
            match residuals(&cavity, &pts, p[0], p[1]) {
                Ok(r) => r,
                Err(e) => {
                    failed.set(Some(e));
                    vec![f64::NAN; pts.len()]
                }
            }
        },
        &[d0, off0],
        &lm_opts,
    );
    if let Some(e) = failed.take() {
        if !outcome.converged {
            return Err(e);
        }
    }
    let mut fit = FitResult::new("membrane_thickness");
    fit.push("thickness_nm", outcome.params[0], outcome.sigmas[0]);
    fit.push("gap_offset_nm", outcome.params[1], outcome.sigmas[1]);
    fit.residual_rms = outcome.residual_rms();
    fit.n_iterations = outcome.n_iterations;
    fit.converged = outcome.converged && !outcome.singular;
    fit.diagnostics = diagnostics;
    fit.diagnostics.extend(outcome.diagnostics);
    if outcome.singular {
        fit.diagnostics.push(
            "unidentifiable: thickness and gap offset are degenerate for these data".into(),
        );
    }
    if !outcome.converged {
        fit.diagnostics.push(format!(
            "did not converge; best candidate d = {:.2} nm, offset = {:.2} nm",
            outcome.params[0], outcome.params[1]
        ));
    }
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_range() {
        assert!((wrap(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap(-0.5) + 0.5).abs() < 1e-15);
        assert!((wrap(2.0 * PI + 0.1) - 0.1).abs() < 1e-12);
    }
}
