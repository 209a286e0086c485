//! Damped least squares (Levenberg-Marquardt) with a finite-difference
//! Jacobian and curvature-based parameter uncertainties.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Convergence threshold on the relative change of the residual sum of
    /// squares and of every parameter.
    pub rel_tol: f64,
    /// Typical scale of each parameter, used for finite-difference steps and
    /// the step-size convergence test. Missing entries default to
    /// `max(|p0|, 1e-3)`.
    pub scales: Vec<f64>,
    /// Ratio of smallest to largest singular value (of the column-normalised
    /// Jacobian) below which the problem is reported as not identifiable.
    pub singular_ratio: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            rel_tol: 1e-10,
            scales: Vec::new(),
            singular_ratio: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    /// 1σ uncertainties; infinite when the Jacobian is rank deficient.
    pub sigmas: Vec<f64>,
    /// `(JᵀJ)⁻¹ · SSR / (N − P)`; `None` when rank deficient.
    pub covariance: Option<DMatrix<f64>>,
    pub ssr: f64,
    pub n_residuals: usize,
    pub n_iterations: usize,
    pub converged: bool,
    pub singular: bool,
    pub diagnostics: Vec<String>,
}

impl LmOutcome {
    pub fn residual_rms(&self) -> f64 {
        if self.n_residuals == 0 {
            0.0
        } else {
            (self.ssr / self.n_residuals as f64).sqrt()
        }
    }
}

fn ssr_of(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

fn all_finite(r: &[f64]) -> bool {
    r.iter().all(|v| v.is_finite())
}

fn jacobian<F>(f: &F, p: &[f64], steps: &[f64], m: usize) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut jac = DMatrix::zeros(m, p.len());
    let mut work = p.to_vec();
    for j in 0..p.len() {
        let h = steps[j];
        work[j] = p[j] + h;
        let plus = f(&work);
        work[j] = p[j] - h;
        let minus = f(&work);
        work[j] = p[j];
        if all_finite(&plus) && all_finite(&minus) {
            for i in 0..m {
                jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
            }
        } else {
            let centre = f(p);
            let (other, sign) = if all_finite(&plus) { (plus, 1.0) } else { (minus, -1.0) };
            if all_finite(&other) {
                for i in 0..m {
                    jac[(i, j)] = sign * (other[i] - centre[i]) / h;
                }
            }
        }
    }
    jac
}

/// Minimises `Σ r_i(p)²` starting from `p0`.
pub fn levenberg_marquardt<F>(f: F, p0: &[f64], opts: &LmOptions) -> LmOutcome
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let np = p0.len();
    let mut p = p0.to_vec();
    let mut r = f(&p);
    let m = r.len();
    let mut diagnostics = Vec::new();
    if !all_finite(&r) {
        return LmOutcome {
            params: p,
            sigmas: vec![f64::INFINITY; np],
            covariance: None,
            ssr: f64::INFINITY,
            n_residuals: m,
            n_iterations: 0,
            converged: false,
            singular: false,
            diagnostics: vec!["model is not finite at the initial parameters".into()],
        };
    }
    let scales: Vec<f64> = (0..np)
        .map(|j| {
            opts.scales
                .get(j)
                .copied()
                .filter(|s| *s > 0.0 && s.is_finite())
                .unwrap_or_else(|| p0[j].abs().max(1e-3))
        })
        .collect();
    let steps: Vec<f64> = scales.iter().map(|s| 1e-6 * s).collect();

    let mut ssr = ssr_of(&r);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let mut stalls = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        if ssr == 0.0 {
            converged = true;
            break;
        }
        let jac = jacobian(&f, &p, &steps, m);
        let jt = jac.transpose();
        let a = &jt * &jac;
        let g = &jt * DVector::from_column_slice(&r);
        let diag: Vec<f64> = (0..np).map(|j| a[(j, j)].max(1e-300)).collect();

        let mut improved = false;
        while lambda < 1e20 {
            let mut damped = a.clone();
            for j in 0..np {
                damped[(j, j)] += lambda * diag[j];
            }
            let Some(delta) = damped.clone().cholesky().map(|c| c.solve(&(-&g))).or_else(|| {
                damped.lu().solve(&(-&g))
            }) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
            let r_trial = f(&trial);
            let ssr_trial = ssr_of(&r_trial);
            if all_finite(&r_trial) && ssr_trial <= ssr {
                let small_step = delta
                    .iter()
                    .zip(&p)
                    .zip(&scales)
                    .all(|((d, pj), s)| d.abs() <= opts.rel_tol * pj.abs().max(*s));
                let small_gain = ssr - ssr_trial <= opts.rel_tol * ssr;
                p = trial;
                r = r_trial;
                ssr = ssr_trial;
                lambda = (lambda / 10.0).max(1e-12);
                improved = true;
                stalls = if small_gain { stalls + 1 } else { 0 };
                if small_step || stalls >= 2 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            diagnostics.push(
                "damping saturated without further decrease; current point taken as the minimum".into(),
            );
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }
    if !converged {
        diagnostics.push(format!("no convergence after {} iterations", opts.max_iterations));
    }

    let jac = jacobian(&f, &p, &steps, m);
    let (covariance, singular) = covariance(&jac, ssr, m, opts.singular_ratio);
    let sigmas = match &covariance {
        Some(c) => (0..np).map(|j| c[(j, j)].max(0.0).sqrt()).collect(),
        None => vec![f64::INFINITY; np],
    };
    if singular {
        diagnostics.push("Jacobian is rank deficient; parameters are not identifiable".into());
    }
    LmOutcome {
        params: p,
        sigmas,
        covariance,
        ssr,
        n_residuals: m,
        n_iterations: iterations,
        converged,
        singular,
        diagnostics,
    }
}

/// `(JᵀJ)⁻¹ · SSR / (N − P)` through an SVD of the column-normalised
/// Jacobian. The flag reports rank deficiency.
pub fn covariance(
    jac: &DMatrix<f64>,
    ssr: f64,
    m: usize,
    singular_ratio: f64,
) -> (Option<DMatrix<f64>>, bool) {
    let np = jac.ncols();
    if np == 0 {
        return (Some(DMatrix::zeros(0, 0)), false);
    }
    let norms: Vec<f64> = (0..np).map(|j| jac.column(j).norm()).collect();
    if norms.iter().any(|&n| !(n > 0.0) || !n.is_finite()) {
        return (None, true);
    }
    let mut scaled = jac.clone();
    for j in 0..np {
        scaled.column_mut(j).scale_mut(1.0 / norms[j]);
    }
    let svd = scaled.svd(false, true);
    let s = &svd.singular_values;
    if !(s.min() > singular_ratio * s.max()) {
        return (None, true);
    }
    if m <= np {
        return (None, false);
    }
    let v_t = svd.v_t.expect("requested V^T");
    let variance = ssr / (m - np) as f64;
    let mut cov = DMatrix::zeros(np, np);
    for a in 0..np {
        for b in 0..np {
            let c: f64 = (0..np).map(|k| v_t[(k, a)] * v_t[(k, b)] / (s[k] * s[k])).sum();
            cov[(a, b)] = c * variance / (norms[a] * norms[b]);
        }
    }
    (Some(cov), false)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fits_an_exponential() {
        let xs: Vec<f64> = (0..50).map(|i| i as f64 * 0.2).collect();
        let truth = [3.0, 0.7];
        let ys: Vec<f64> = xs.iter().map(|x| truth[0] * (-truth[1] * x).exp()).collect();
        let out = levenberg_marquardt(
            |p| xs.iter().zip(&ys).map(|(x, y)| p[0] * (-p[1] * x).exp() - y).collect(),
            &[1.0, 0.1],
            &LmOptions::default(),
        );
        assert!(out.converged);
        assert!((out.params[0] - 3.0).abs() < 1e-9);
        assert!((out.params[1] - 0.7).abs() < 1e-9);
    }

    #[test]
    fn linear_model_matches_ordinary_least_squares() {
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0];
        let ys = [1.1, 2.9, 5.2, 6.8, 9.1];
        let out = levenberg_marquardt(
            |p| xs.iter().zip(&ys).map(|(x, y)| p[0] + p[1] * x - y).collect(),
            &[0.0, 1.0],
            &LmOptions::default(),
        );
        // Closed form for this data set.
        let n = 5.0;
        let sx: f64 = xs.iter().sum();
        let sy: f64 = ys.iter().sum();
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        let icept = (sy - slope * sx) / n;
        assert!((out.params[1] - slope).abs() < 1e-8);
        assert!((out.params[0] - icept).abs() < 1e-8);
        let resid: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (icept + slope * x - y).powi(2))
            .sum();
        let sigma_slope = (resid / (n - 2.0) / (sxx - sx * sx / n)).sqrt();
        assert!((out.sigmas[1] - sigma_slope).abs() < 1e-6 * sigma_slope);
    }

    #[test]
    fn collinear_parameters_are_flagged() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let out = levenberg_marquardt(
            |p| xs.iter().map(|x| (p[0] + p[1]) * x - 2.0 * x).collect(),
            &[0.3, 0.4],
            &LmOptions::default(),
        );
        assert!(out.singular);
        assert!(out.sigmas.iter().all(|s| s.is_infinite()));
    }
}
