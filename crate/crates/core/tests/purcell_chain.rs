use fibercav::purcell::{
    gaussian_waist_um, lifetime_vs_detuning, mode_volume_lambda3, peak_enhancement_from_lifetimes, purcell_corrected,
    purcell_effective, purcell_ideal, purcell_report, EmitterParams, PurcellInputs,
};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn corrected_inverts_effective(c in 0.01f64..50.0, dwf in 0.01f64..1.0, qe in 0.01f64..1.0, tau0 in 1.0f64..20.0) {
        let tau = tau0 / (1.0 + c * dwf * qe);
        let e = purcell_effective(tau0, tau).unwrap();
        let back = purcell_corrected(e.value, dwf, qe).unwrap();
        prop_assert!((back - c).abs() < 1e-9 * c.max(1.0));
    }

    #[test]
    fn lifetime_even_and_bounded(c in 0.0f64..5.0, kappa in 0.5f64..20.0, det in 0.0f64..100.0) {
        let em = EmitterParams::default();
        let plus = lifetime_vs_detuning(&em, c, kappa, det).unwrap();
        let minus = lifetime_vs_detuning(&em, c, kappa, -det).unwrap();
        prop_assert_eq!(plus, minus);
        prop_assert!(plus <= em.tau0_ns + 1e-12);
        prop_assert!(plus >= em.tau0_ns / (1.0 + c) - 1e-12);
    }

    #[test]
    fn volume_chain_is_exact(w0 in 0.5f64..10.0, l in 0.5f64..50.0, wl in 500.0f64..1500.0) {
        let inputs = PurcellInputs::from_geometry(1e4, w0, l, wl);
        let v = std::f64::consts::PI * w0 * w0 * l / 4.0 / (wl * 1e-3).powi(3);
        prop_assert!((inputs.mode_volume_lambda3 / v - 1.0).abs() < 1e-14);
        prop_assert!(inputs.validate(wl).is_ok());
    }
}

#[test]
fn operating_point_chain() {
    let em = EmitterParams::default();
    let v = mode_volume_lambda3(1.66, 4.276, em.zpl_wavelength_nm);
    assert!((v - 12.0).abs() < 0.01);
    let c0 = purcell_ideal(7.4e4, v, em.host_index);
    assert!((c0 - 25.7).abs() < 0.1, "{c0}");
    let c_eff = peak_enhancement_from_lifetimes(7.3, 5.6).unwrap();
    assert!((c_eff - 0.304).abs() < 0.001);
    assert!((purcell_corrected(c_eff, 0.08, 0.286).unwrap() - 13.3).abs() < 0.05);
    let report = purcell_report(&PurcellInputs::from_geometry(7.4e4, 1.66, 4.276, 917.0), &em, 1.0, Some(5.6)).unwrap();
    let ratio = report.C_eff_predicted / report.C_eff_measured.unwrap();
    assert!(ratio > 1.5 && ratio < 2.5, "predicted/measured {ratio}");
}

#[test]
fn lifetime_endpoints() {
    let em = EmitterParams::default();
    let c = peak_enhancement_from_lifetimes(7.3, 5.6).unwrap();
    assert!((lifetime_vs_detuning(&em, c, 3.44, 0.0).unwrap() - 5.6).abs() < 1e-12);
    assert!((lifetime_vs_detuning(&em, c, 3.44, 1e6).unwrap() - 7.3).abs() < 1e-6);
}

#[test]
fn waist_grows_with_gap_below_half_radius() {
    let a = gaussian_waist_um(40.0, 2.0, 2.85, 2.6, 917.0).unwrap();
    let b = gaussian_waist_um(40.0, 8.0, 2.85, 2.6, 917.0).unwrap();
    assert!(b > a);
}
