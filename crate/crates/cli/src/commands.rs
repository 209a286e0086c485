use std::io::Write;
use std::path::{Path, PathBuf};

use fibercav::analysis::synth::{self, CavityLineScan, G2Histogram, LifetimeHistogram, NoiseSpectrum, ZplScan};
use fibercav::analysis::{
    aggregate_line_series, calibrate_scan_slope, fit_g2_pulsed, fit_lifetime, fit_lorentzian, noise_rms_from_fft,
    zpl_frequency_distribution, CorrelationHistogram, FitResult, G2Options, PeakCount, Trace, Unit,
};
use fibercav::cavity::{
    classify_modes, contact_mode, coupling_analysis, dispersion_map, finesse_spectrum, fit_membrane_thickness,
    local_maxima, loss_budget, write_branches_json, write_mode_map_csv, Branch, ModeMap, ThicknessFitOptions,
};
use fibercav::purcell::{
    effective_length_um, lifetime_vs_detuning, mode_volume_lambda3, purcell_report, PurcellInputs,
};
use fibercav::tmm::{stack_response, stopband, stopband_summary, write_profile_csv, write_response_csv};
use fibercav::{Config, Polarization};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::ingest::{read_indexed_spectra, read_trace, spectra_from_records};
use crate::output::Output;
use crate::{Cli, CliError, Command};

const BOTH: [Polarization; 2] = Polarization::BOTH;
const ZPL_AUTO_THRESHOLD: f64 = 0.01;

fn inputs(command: &Command) -> Vec<&PathBuf> {
    match command {
        Command::Classify(a) => a.branches.iter().collect(),
        Command::FitThickness(a) => a.spectrometer.iter().chain(&a.branches).collect(),
        Command::FitLine(a) => a.traces.iter().chain(&a.wavemeter).collect(),
        Command::FitLifetime(a) => a.histogram.iter().collect(),
        Command::FitG2(a) => a.histogram.iter().collect(),
        Command::Noise(a) => a.spectrum.iter().collect(),
        Command::ZplDist(a) => a.spectra.iter().collect(),
        _ => Vec::new(),
    }
}

/// Every referenced input exists, and every fit has either data or
/// `--synthetic`.
pub fn check_inputs(command: &Command) -> Result<(), CliError> {
    for p in inputs(command) {
        if !p.is_file() {
            return Err(CliError::Usage(format!("input file {} does not exist", p.display())));
        }
    }
    let (has_data, synthetic) = match command {
        Command::FitThickness(a) => (a.spectrometer.is_some() || a.branches.is_some(), a.synthetic),
        Command::FitLine(a) => (!a.traces.is_empty(), a.synthetic),
        Command::FitLifetime(a) => (a.histogram.is_some(), a.synthetic),
        Command::FitG2(a) => (a.histogram.is_some(), a.synthetic),
        Command::Noise(a) => (a.spectrum.is_some(), a.synthetic),
        Command::ZplDist(a) => (a.spectra.is_some(), a.synthetic),
        _ => return Ok(()),
    };
    match (has_data, synthetic) {
        (true, true) => Err(CliError::Usage("give either input data or --synthetic, not both".into())),
        (false, false) => Err(CliError::Usage("no input data; pass a file or --synthetic".into())),
        _ => Ok(()),
    }
}

pub fn dispatch(cli: &Cli, cfg: &Config, out: &mut Output) -> Result<(), CliError> {
    let seed = cli.seed;
    match &cli.command {
        Command::Stopband(a) => run_stopband(cfg, a.min_nm, a.max_nm, a.step_nm, out),
        Command::FinesseSpectrum(a) => run_finesse(cfg, a.measured_finesse, a.at_nm, out),
        Command::Dispersion => run_dispersion(cfg, out),
        Command::Classify(a) => run_classify(cfg, a.branches.as_deref(), out),
        Command::FitThickness(a) => run_fit_thickness(cfg, a, out),
        Command::Purcell(a) => run_purcell(cfg, a, out),
        Command::FitLine(a) => run_fit_line(cfg, a, seed, out),
        Command::FitLifetime(a) => run_fit_lifetime(cfg, a, seed, out),
        Command::FitG2(a) => run_fit_g2(cfg, a, seed, out),
        Command::Noise(a) => run_noise(cfg, a, seed, out),
        Command::ZplDist(a) => run_zpl(cfg, a, seed, out),
    }
}

fn require_converged(fits: &[&FitResult]) -> Result<(), CliError> {
    match fits.iter().find(|f| !f.converged) {
        Some(f) => Err(CliError::NotConverged(format!(
            "fit `{}` did not converge{}",
            f.model,
            f.diagnostics.last().map(|d| format!(": {d}")).unwrap_or_default()
        ))),
        None => Ok(()),
    }
}

fn grid_checked(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>, CliError> {
    if !(lo > 0.0 && hi > lo && step > 0.0) {
        return Err(CliError::Usage(format!("invalid grid {lo}..{hi} step {step}")));
    }
    Ok(fibercav::config::grid(lo, hi, step))
}

fn run_stopband(cfg: &Config, lo: f64, hi: f64, step: f64, out: &mut Output) -> Result<(), CliError> {
    let wls = grid_checked(lo, hi, step)?;
    let zpl = cfg.emitter.zpl_wavelength_nm;
    let mut summary = serde_json::Map::new();
    for (name, stack, center) in [
        ("fiber", cfg.fiber_mirror()?, cfg.fiber_mirror.center_wavelength_nm),
        ("planar", cfg.planar_mirror()?, cfg.planar_mirror.center_wavelength_nm),
    ] {
        let series = stopband(&stack, &wls, Polarization::Ordinary)?;
        out.write_with(&format!("stopband_{name}.csv"), |w| write_response_csv(w, &series))?;
        let t_center = stack_response(&stack, center, Polarization::Ordinary)?.transmittance;
        let t_zpl = stack_response(&stack, zpl, Polarization::Ordinary)?.transmittance;
        let s = stopband_summary(&series);
        if s.is_none() {
            out.warnings.push(format!("{name} mirror: no stopband inside {lo}..{hi} nm"));
        }
        summary.insert(
            name.into(),
            json!({
                "layers": stack.len(),
                "design_wavelength_nm": center,
                "T_design_ppm": t_center * 1e6,
                "zpl_wavelength_nm": zpl,
                "T_zpl_ppm": t_zpl * 1e6,
                "stopband": s,
            }),
        );
    }
    out.write_json("stopband.json", &summary)
}

fn run_finesse(cfg: &Config, measured: Option<f64>, at_nm: f64, out: &mut Output) -> Result<(), CliError> {
    let cavity = cfg.cavity()?;
    let wls = cfg.scan_wavelengths();
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for pol in BOTH {
        let spec = finesse_spectrum(&cavity, &wls, pol)?;
        let f: Vec<f64> = spec.iter().map(|p| p.finesse).collect();
        let best = spec
            .iter()
            .max_by(|a, b| a.finesse.total_cmp(&b.finesse))
            .expect("non-empty grid");
        let maxima: Vec<_> = local_maxima(&f)
            .into_iter()
            .map(|i| json!({"wavelength_nm": spec[i].wavelength_nm, "finesse": spec[i].finesse}))
            .collect();
        summary.push(json!({
            "polarization": pol,
            "max_finesse": best.finesse,
            "max_wavelength_nm": best.wavelength_nm,
            "local_maxima": maxima,
        }));
        rows.extend(spec);
    }
    out.write_with("finesse_spectrum.csv", |w| {
        writeln!(w, "wavelength_nm,polarization,finesse,t_fiber_ppm,t_planar_ppm")?;
        for p in &rows {
            writeln!(
                w,
                "{},{},{},{},{}",
                p.wavelength_nm, p.polarization, p.finesse, p.t_fiber_ppm, p.t_planar_ppm
            )?;
        }
        Ok(())
    })?;
    out.write_json(
        "finesse_summary.json",
        &json!({"excess_loss_ppm": cavity.excess_loss_ppm, "polarizations": summary}),
    )?;
    if let Some(f) = measured {
        let budgets = BOTH
            .iter()
            .map(|&p| loss_budget(f, &cavity, at_nm, p))
            .collect::<Result<Vec<_>, _>>()?;
        for b in &budgets {
            if let Some(w) = &b.warning {
                out.warnings.push(format!("{}: {w}", b.polarization));
            }
        }
        out.write_json("loss_budget.json", &budgets)?;
    }
    Ok(())
}

fn simulated_map(cfg: &Config) -> Result<ModeMap, CliError> {
    Ok(dispersion_map(&cfg.cavity()?, &cfg.scan_gaps(), &cfg.map_wavelengths(), &BOTH)?)
}

fn run_dispersion(cfg: &Config, out: &mut Output) -> Result<(), CliError> {
    let map = simulated_map(cfg)?;
    out.write_with("mode_map.csv", |w| write_mode_map_csv(w, &map))?;
    out.write_with("branches.json", |w| write_branches_json(w, &map))?;
    let coupling: Vec<_> = BOTH.iter().map(|&p| coupling_analysis(&map, Some(p))).collect();
    out.write_json("coupling.json", &coupling)
}

#[derive(Deserialize)]
struct BranchFile {
    branches: Vec<Branch>,
}

fn read_branches(path: &Path) -> Result<ModeMap, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let file: BranchFile =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(ModeMap::from_branches(file.branches))
}

fn run_classify(cfg: &Config, branches: Option<&Path>, out: &mut Output) -> Result<(), CliError> {
    let map = match branches {
        Some(p) => read_branches(p)?,
        None => simulated_map(cfg)?,
    };
    if map.branches.iter().any(|b| b.polarization.is_none()) {
        out.warnings
            .push("branches without polarization are classified in the ordinary polarization".into());
    }
    let tagged = classify_modes(&map, &cfg.cavity()?)?;
    out.write_with("branches_classified.json", |w| write_branches_json(w, &tagged))?;
    out.write_with("mode_character.csv", |w| {
        writeln!(w, "branch_id,polarization,gap_nm,wavelength_nm,membrane_fraction,character")?;
        for b in &tagged.branches {
            let pol = b.polarization.map_or("unknown", Polarization::as_str);
            for p in &b.points {
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    b.id,
                    pol,
                    p.gap_nm,
                    p.wavelength_nm,
                    p.membrane_fraction.unwrap_or(f64::NAN),
                    p.character.map_or("", |c| c.as_str())
                )?;
            }
        }
        Ok(())
    })
}

fn run_fit_thickness(cfg: &Config, a: &crate::FitThicknessArgs, out: &mut Output) -> Result<(), CliError> {
    let cavity = cfg.cavity()?;
    let map = if let Some(p) = &a.spectrometer {
        let records = read_indexed_spectra(p, &mut out.warnings)?;
        let s = &cfg.spectrometer;
        ModeMap::from_spectrometer(&records, s.gap0_nm, s.gap_step_nm, None, s.peak_threshold)?
    } else if let Some(p) = &a.branches {
        read_branches(p)?
    } else {
        simulated_map(cfg)?
    };
    let opts = ThicknessFitOptions {
        offset_range_nm: cfg.fit.offset_range_nm,
        ..ThicknessFitOptions::default()
    };
    let d0 = a.d_initial_nm.unwrap_or(cfg.fit.d_initial_nm);
    let fit = fit_membrane_thickness(&map, &cavity, d0, &opts)?;
    out.write_json("fit_thickness.json", &fit)?;
    require_converged(&[&fit])
}

#[derive(Serialize)]
struct PurcellOutput {
    contact_gap_nm: Option<f64>,
    mode_volume_source: &'static str,
    host_index: f64,
    report: fibercav::purcell::PurcellReport,
}

fn run_purcell(cfg: &Config, a: &crate::PurcellArgs, out: &mut Output) -> Result<(), CliError> {
    let mut emitter = cfg.emitter()?;
    if let Some(n) = a.n {
        emitter.host_index = n;
    }
    let zpl = emitter.zpl_wavelength_nm;
    let q = a.q.unwrap_or(cfg.purcell.quality_factor);
    let w0 = cfg.purcell.waist_um;
    let (inputs, contact_gap, source) = match a.v_lambda3 {
        Some(v) => {
            let l_eff = v * 4.0 / (std::f64::consts::PI * w0 * w0) * (zpl * 1e-3).powi(3);
            let inputs = PurcellInputs {
                quality_factor: q,
                mode_volume_lambda3: v,
                waist_um: w0,
                effective_length_um: l_eff,
            };
            (inputs, None, "given")
        }
        None => {
            let cavity = cfg.cavity()?;
            let mode = contact_mode(&cavity, zpl, Polarization::Extraordinary, cfg.cavity.contact_gap_nm)?;
            let l_eff = effective_length_um(&mode.profile)?;
            out.write_with("contact_mode_profile.csv", |w| write_profile_csv(w, &mode.profile))?;
            let inputs = PurcellInputs::from_geometry(q, w0, l_eff, zpl);
            (inputs, Some(mode.air_gap_nm), "contact_mode_profile")
        }
    };
    debug_assert!((mode_volume_lambda3(w0, inputs.effective_length_um, zpl) / inputs.mode_volume_lambda3 - 1.0).abs() < 1e-9);
    let tau_cav = a.tau_cav_ns.unwrap_or(cfg.emitter.tau_cav_ns);
    let report = purcell_report(&inputs, &emitter, cfg.purcell.overlap, Some(tau_cav))?;
    out.warnings.extend(report.warnings.iter().cloned());
    let c_eff = report.C_eff_measured.unwrap_or(0.0);
    let kappa = cfg.purcell.linewidth_ghz;
    out.write_with("lifetime_vs_detuning.csv", |w| {
        writeln!(w, "detuning_ghz,tau_ns")?;
        for i in 0..=200 {
            let det = -5.0 * kappa + i as f64 * 10.0 * kappa / 200.0;
            let tau = lifetime_vs_detuning(&emitter, c_eff, kappa, det).map_err(std::io::Error::other)?;
            writeln!(w, "{det},{tau}")?;
        }
        Ok(())
    })?;
    out.write_json(
        "purcell.json",
        &PurcellOutput {
            contact_gap_nm: contact_gap,
            mode_volume_source: source,
            host_index: emitter.host_index,
            report,
        },
    )
}

/// Converts a time-axis scan to GHz with the wavemeter slope.
fn to_ghz(scan: &Trace, slope_ghz_per_s: f64) -> Result<Trace, CliError> {
    let mut x: Vec<f64> = scan.x().iter().map(|t| t * slope_ghz_per_s).collect();
    let mut y = scan.y().to_vec();
    if slope_ghz_per_s < 0.0 {
        x.reverse();
        y.reverse();
    }
    Ok(Trace::new(x, y, Unit::Ghz, scan.y_unit)?)
}

fn run_fit_line(cfg: &Config, a: &crate::FitLineArgs, seed: u64, out: &mut Output) -> Result<(), CliError> {
    let mut fits = Vec::new();
    let mut calibrations = Vec::new();
    if a.synthetic {
        let p = CavityLineScan {
            fwhm_ghz: cfg.line.fwhm_ghz,
            scan_rate_ghz_per_s: cfg.line.scan_rate_ghz_per_s,
            ..CavityLineScan::default()
        };
        for k in 0..cfg.line.repeats.max(1) {
            let s = seed.wrapping_add(k as u64);
            let (wm, scan) = synth::cavity_line_scan(s, &p)?;
            let cal = calibrate_scan_slope(&wm)?.with_seed(Some(s));
            let trace = to_ghz(&scan, cal.value("slope"))?;
            fits.push(fit_lorentzian(&trace, 1, None)?.with_seed(Some(s)));
            calibrations.push(cal);
        }
    } else {
        let slope = match &a.wavemeter {
            Some(p) => {
                let wm = read_trace(p, &[Unit::S], &[Unit::Ghz], &mut out.warnings)?;
                let cal = calibrate_scan_slope(&wm)?;
                let s = cal.value("slope");
                calibrations.push(cal);
                Some(s)
            }
            None => None,
        };
        for p in &a.traces {
            let t = read_trace(p, &[Unit::S, Unit::Ghz], &[Unit::V, Unit::Counts], &mut out.warnings)?;
            let trace = match (t.x_unit, slope) {
                (Unit::Ghz, _) => t,
                (_, Some(s)) => to_ghz(&t, s)?,
                (_, None) => {
                    return Err(CliError::Usage(format!(
                        "{} is a time trace; pass --wavemeter to calibrate it",
                        p.display()
                    )))
                }
            };
            fits.push(fit_lorentzian(&trace, 1, None)?);
        }
    }
    let summary = aggregate_line_series(&fits)?;
    let skipped = fits.iter().filter(|f| !f.converged).count();
    if skipped > 0 {
        out.warnings.push(format!("{skipped} line fit(s) did not converge and were left out of the mean"));
    }
    out.write_json(
        "fit_line.json",
        &json!({"calibrations": calibrations, "fits": fits, "summary": summary}),
    )
}

fn run_fit_lifetime(cfg: &Config, a: &crate::FitLifetimeArgs, seed: u64, out: &mut Output) -> Result<(), CliError> {
    let t_start = a.t_start_ns.unwrap_or(cfg.lifetime.t_start_ns);
    let (hist, used_seed) = match &a.histogram {
        Some(p) => (read_trace(p, &[Unit::Ns], &[Unit::Counts], &mut out.warnings)?, None),
        None => {
            let p = LifetimeHistogram {
                tau_ns: cfg.lifetime.synthetic_tau_ns,
                excitation_ns: t_start,
                ..LifetimeHistogram::default()
            };
            (synth::lifetime_histogram(Some(seed), &p)?, Some(seed))
        }
    };
    let fit = fit_lifetime(&hist, t_start)?.with_seed(used_seed);
    out.write_json("fit_lifetime.json", &fit)?;
    require_converged(&[&fit])
}

fn parse_window(s: &str) -> Result<(f64, f64), CliError> {
    let bad = || CliError::Usage(format!("--exclude expects LO:HI in ns, got `{s}`"));
    let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    if !(lo < hi) {
        return Err(bad());
    }
    Ok((lo, hi))
}

fn run_fit_g2(cfg: &Config, a: &crate::FitG2Args, seed: u64, out: &mut Output) -> Result<(), CliError> {
    let period = a.period_ns.unwrap_or(cfg.g2.period_ns);
    let exclusions = if a.no_exclude {
        Vec::new()
    } else if a.exclude.is_empty() {
        cfg.g2_exclusions()
    } else {
        a.exclude.iter().map(|s| parse_window(s)).collect::<Result<_, _>>()?
    };
    let (hist, used_seed) = match &a.histogram {
        Some(p) => {
            let t = read_trace(p, &[Unit::Ns], &[Unit::Counts], &mut out.warnings)?;
            (CorrelationHistogram::new(t.x().to_vec(), t.y().to_vec(), period)?, None)
        }
        None => {
            let p = G2Histogram {
                period_ns: period,
                ..G2Histogram::default()
            };
            (synth::g2_histogram(Some(seed), &p)?, Some(seed))
        }
    };
    let opts = G2Options {
        exclusions,
        tau_decay_init_ns: Some(cfg.g2.tau_decay_init_ns),
    };
    let fit = fit_g2_pulsed(&hist, &opts)?.with_seed(used_seed);
    out.write_json("fit_g2.json", &fit)?;
    require_converged(&[&fit])
}

fn run_noise(cfg: &Config, a: &crate::NoiseArgs, seed: u64, out: &mut Output) -> Result<(), CliError> {
    let finesse = a.finesse.unwrap_or(cfg.noise.finesse);
    let wl = a.wavelength_nm.unwrap_or(cfg.noise.wavelength_nm);
    let f_max = a.f_max_hz.unwrap_or(cfg.noise.f_max_hz);
    let (spectrum, truth) = match &a.spectrum {
        Some(p) => (read_trace(p, &[Unit::Hz], &[Unit::Rel], &mut out.warnings)?, None),
        None => {
            let base = match cfg.noise.scenario.as_str() {
                "free" => NoiseSpectrum::free(),
                "contact" => NoiseSpectrum::contact(),
                other => {
                    return Err(CliError::Usage(format!(
                        "noise.scenario must be `free` or `contact`, got `{other}`"
                    )))
                }
            };
            let p = NoiseSpectrum {
                finesse,
                wavelength_nm: wl,
                f_max_hz: f_max,
                ..base
            };
            let (t, truth) = synth::noise_spectrum(seed, &p)?;
            (t, Some(truth))
        }
    };
    let est = noise_rms_from_fft(&spectrum, finesse, wl, f_max)?;
    out.write_with("noise_cumulative.csv", |w| {
        writeln!(w, "frequency_hz,sigma_rms_pm")?;
        for (f, s) in &est.cumulative {
            writeln!(w, "{f},{s}")?;
        }
        Ok(())
    })?;
    out.write_json(
        "noise.json",
        &json!({
            "sigma_rms_pm": est.sigma_rms_pm,
            "finesse": finesse,
            "wavelength_nm": wl,
            "f_max_hz": f_max,
            "synthetic_ground_truth_pm": truth,
            "seed": truth.map(|_| seed),
        }),
    )
}

fn run_zpl(cfg: &Config, a: &crate::ZplArgs, seed: u64, out: &mut Output) -> Result<(), CliError> {
    let slope = a.slope_ghz_per_step.unwrap_or(cfg.zpl.slope_ghz_per_step);
    let (spectra, used_seed) = match &a.spectra {
        Some(p) => {
            let records = read_indexed_spectra(p, &mut out.warnings)?;
            (spectra_from_records(&records)?, None)
        }
        None => {
            let p = ZplScan {
                slope_ghz_per_step: slope,
                center_nm: cfg.emitter.zpl_wavelength_nm,
                ..ZplScan::default()
            };
            (synth::zpl_scan(Some(seed), &p)?, Some(seed))
        }
    };
    let peaks = match a.peaks.unwrap_or(cfg.zpl.peaks) {
        0 => PeakCount::Auto {
            max: cfg.zpl.max_peaks,
            threshold: ZPL_AUTO_THRESHOLD,
        },
        n => PeakCount::Fixed(n),
    };
    let window = Some((cfg.zpl.window_min_nm, cfg.zpl.window_max_nm));
    let dist = zpl_frequency_distribution(&spectra, slope, window, peaks)?;
    let fit = dist.fit.clone().with_seed(used_seed);
    out.write_with("zpl_integrated.csv", |w| {
        writeln!(w, "frequency_ghz,counts")?;
        for (x, y) in dist.integrated.x().iter().zip(dist.integrated.y()) {
            writeln!(w, "{x},{y}")?;
        }
        Ok(())
    })?;
    out.write_json("zpl_distribution.json", &fit)?;
    require_converged(&[&fit])
}
