use serde::Serialize;

use super::CavityConfig;
use crate::analysis::lm::{levenberg_marquardt, LmOptions};
use crate::error::{Error, Result};
use crate::materials::{Polarization, StackSpec};
use crate::tmm::stack_response;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Resonance {
    pub wavelength_nm: f64,
    pub fwhm_nm: f64,
    pub peak_transmission: f64,
    pub polarization: Polarization,
}

const GRID_POINTS_PER_FSR: f64 = 200.0;
const CENTER_TOL_NM: f64 = 1e-4;
const FIT_POINTS: usize = 41;
const FIT_HALF_WIDTH_FWHM: f64 = 3.0;

fn transmittance(stack: &StackSpec, wl: f64, pol: Polarization) -> Result<f64> {
    Ok(stack_response(stack, wl, pol)?.transmittance)
}

/// Optical length used only to size the search grid; the extra wavelength
/// stands in for field penetration into both mirrors.
fn optical_length_estimate(cavity: &CavityConfig, wl: f64, pol: Polarization) -> Result<f64> {
    let n_gap = cavity.gap_medium().index_at(wl, pol)?.re;
    let membrane = match &cavity.membrane {
        Some(m) => m.medium().index_at(wl, pol)?.re * m.thickness_nm(),
        None => 0.0,
    };
    Ok(n_gap * cavity.air_gap_nm + membrane + wl)
}

fn golden_max(f: &dyn Fn(f64) -> Result<f64>, mut a: f64, mut b: f64, tol: f64) -> Result<f64> {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d)?;
        }
    }
    Ok(0.5 * (a + b))
}

/// Distance from `x0` to the half-maximum crossing in direction `dir`.
fn half_max_distance(
    f: &dyn Fn(f64) -> Result<f64>,
    x0: f64,
    half: f64,
    dir: f64,
    limit: f64,
) -> Result<Option<f64>> {
    let mut inner = 0.0;
    let mut outer = 1e-6;
    while f(x0 + dir * outer)? >= half {
        inner = outer;
        outer *= 2.0;
        if outer > limit {
            return Ok(None);
        }
    }
    for _ in 0..60 {
        let mid = 0.5 * (inner + outer);
        if f(x0 + dir * mid)? >= half {
            inner = mid;
        } else {
            outer = mid;
        }
        if outer - inner < 1e-9 * outer.max(1e-12) {
            break;
        }
    }
    Ok(Some(0.5 * (inner + outer)))
}

fn lorentz(x: f64, c: f64, w: f64, a: f64) -> f64 {
    let u = 2.0 * (x - c) / w;
    a / (1.0 + u * u)
}

/// Transmission resonances within `[lo, hi]`.
///
/// A grid with roughly 200 points per free spectral range brackets each
/// peak, a golden-section search and half-maximum bisection refine it, and a
/// Lorentzian fitted over ±3 linewidths gives the reported center and width.
pub fn find_resonances(
    cavity: &CavityConfig,
    range_nm: (f64, f64),
    polarization: Polarization,
) -> Result<Vec<Resonance>> {
    let (lo, hi) = range_nm;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "wavelength range must satisfy 0 < lo < hi, got [{lo}, {hi}]"
        )));
    }
    let stack = cavity.system();
    let f = |wl: f64| transmittance(&stack, wl, polarization);
    let l_opt = optical_length_estimate(cavity, lo, polarization)?;
    let fsr = lo * lo / (2.0 * l_opt);
    let step = fsr / GRID_POINTS_PER_FSR;
    let n = ((hi - lo) / step).ceil() as usize + 1;
    let xs: Vec<f64> = (0..n).map(|i| (lo + i as f64 * step).min(hi)).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect::<Result<_>>()?;

    let mut found: Vec<Resonance> = Vec::new();
    for i in 1..n - 1 {
        if !(ys[i] > ys[i - 1] && ys[i] >= ys[i + 1]) {
            continue;
        }
        let x_peak = golden_max(&f, xs[i - 1], xs[i + 1], CENTER_TOL_NM)?;
        let t_peak = f(x_peak)?;
        let half = 0.5 * t_peak;
        let limit = 0.5 * fsr;
        let (Some(left), Some(right)) = (
            half_max_distance(&f, x_peak, half, -1.0, limit)?,
            half_max_distance(&f, x_peak, half, 1.0, limit)?,
        ) else {
            continue;
        };
        let fwhm0 = left + right;
        let span = FIT_HALF_WIDTH_FWHM * fwhm0;
        let fx: Vec<f64> = (0..FIT_POINTS)
            .map(|k| x_peak - span + 2.0 * span * k as f64 / (FIT_POINTS - 1) as f64)
            .collect();
        let fy: Vec<f64> = fx.iter().map(|&x| f(x)).collect::<Result<_>>()?;
        let opts = LmOptions {
            scales: vec![fwhm0, fwhm0, t_peak.max(1e-300)],
            ..LmOptions::default()
        };
        let o = levenberg_marquardt(
            |p: &[f64]| {
                fx.iter()
                    .zip(&fy)
                    .map(|(&x, &y)| (lorentz(x, p[0], p[1], p[2]) - y) / t_peak)
                    .collect()
            },
            &[x_peak, fwhm0, t_peak],
            &opts,
        );
        let (center, fwhm, peak) =
            if o.converged && o.params[1] > 0.0 && (o.params[0] - x_peak).abs() < fwhm0 {
                (o.params[0], o.params[1], o.params[2])
            } else {
                (x_peak, fwhm0, t_peak)
            };
        if center < lo || center > hi {
            continue;
        }
        if let Some(prev) = found.last_mut() {
            if (center - prev.wavelength_nm).abs() < prev.fwhm_nm.max(fwhm) {
                if peak > prev.peak_transmission {
                    *prev = Resonance { wavelength_nm: center, fwhm_nm: fwhm, peak_transmission: peak, polarization };
                }
                continue;
            }
        }
        found.push(Resonance {
            wavelength_nm: center,
            fwhm_nm: fwhm,
            peak_transmission: peak,
            polarization,
        });
    }
    Ok(found)
}

/// Finesse from two neighbouring resonances: spacing over mean linewidth.
pub fn finesse_from_resonances(a: &Resonance, b: &Resonance) -> f64 {
    (b.wavelength_nm - a.wavelength_nm).abs() / (0.5 * (a.fwhm_nm + b.fwhm_nm))
}

#[cfg(test)]
mod tests {
    use super::super::tests::toy_cavity;
    use super::*;
    use crate::cavity::finesse_from_losses;
    use std::f64::consts::PI;

    #[test]
    fn bare_cavity_finesse_matches_losses() {
        let c = toy_cavity(100000.0, None);
        let res = find_resonances(&c, (975.0, 995.0), Polarization::Ordinary).unwrap();
        assert!(res.len() >= 3, "{res:?}");
        let i = res
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1.wavelength_nm - 985.0).abs().total_cmp(&(b.1.wavelength_nm - 985.0).abs()))
            .unwrap()
            .0;
        let (a, b) = if i + 1 < res.len() { (&res[i], &res[i + 1]) } else { (&res[i - 1], &res[i]) };
        let wl = 0.5 * (a.wavelength_nm + b.wavelength_nm);
        let (t1, t2) = c.mirror_transmissions_ppm(wl, Polarization::Ordinary).unwrap();
        let expected = finesse_from_losses(t1, t2, 0.0).unwrap();
        let got = finesse_from_resonances(a, b);
        assert!((got / expected - 1.0).abs() < 0.02, "{got} vs {expected}");
        for r in &res {
            let h = 1e-4;
            let phase_at = |x: f64| c.round_trip_phase(x, Polarization::Ordinary).unwrap();
            let slope = (phase_at(r.wavelength_nm + h) - phase_at(r.wavelength_nm - h)) / (2.0 * h);
            let (t1, t2) = c.mirror_transmissions_ppm(r.wavelength_nm, Polarization::Ordinary).unwrap();
            let rr = ((1.0 - t1 * 1e-6) * (1.0 - t2 * 1e-6)).sqrt();
            let fwhm = 2.0 * (1.0 - rr) / rr.sqrt() / slope.abs();
            assert!((r.fwhm_nm / fwhm - 1.0).abs() < 1e-3);
            let phase = c.round_trip_phase(r.wavelength_nm, Polarization::Ordinary).unwrap();
            let dphi = 4.0 * PI * 100000.0 / r.wavelength_nm.powi(2) * r.fwhm_nm;
            assert!(phase.abs() < 0.05 * dphi, "phase {phase} at {}", r.wavelength_nm);
        }
    }

    #[test]
    fn rejects_bad_range() {
        let c = toy_cavity(8000.0, None);
        assert!(find_resonances(&c, (1000.0, 990.0), Polarization::Ordinary).is_err());
    }
}
