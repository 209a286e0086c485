use std::f64::consts::PI;
use std::sync::Arc;

use fibercav::materials::{quarter_wave_stack, Layer, Medium, Polarization, StackSpec, Termination};
use fibercav::purcell::effective_length_um;
use fibercav::tmm::{
    airy_etalon_oracle, field_profile, field_profile_with_density, layer_matrix, stack_matrix, stack_response,
};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20241016;
const O: Polarization = Polarization::Ordinary;

fn medium(n: f64, k: f64) -> Arc<Medium> {
    Arc::new(Medium::new(format!("n{n}k{k}"), Complex64::new(n, k), None).unwrap())
}

fn random_stack(layers: &[(f64, f64, f64)], n0: f64, ns: f64) -> StackSpec {
    StackSpec::new(
        medium(n0, 0.0),
        layers.iter().map(|&(n, k, d)| Layer::new(medium(n, k), d).unwrap()).collect(),
        medium(ns, 0.0),
    )
}

fn layer_strategy(lossy: bool) -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    let k = if lossy { 0.0..0.2 } else { 0.0..1e-300 };
    prop::collection::vec((1.0f64..3.5, k, 10.0f64..800.0), 0..12)
}

/// Absorbed fraction from the drop in Poynting flux across the layers.
fn flux_absorptance(stack: &StackSpec, wl: f64) -> f64 {
    let p = field_profile(stack, wl, O).unwrap();
    let s = p.flux();
    let r = p.layered_range();
    let n0 = stack.ambient.index_at(wl, O).unwrap().re;
    (s[r.start] - s[r.end - 1]) / (0.5 * n0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn energy_balance_with_independent_absorption(
        layers in layer_strategy(true),
        n0 in 1.0f64..1.6,
        ns in 1.0f64..1.6,
        wl in 400.0f64..1600.0,
    ) {
        let stack = random_stack(&layers, n0, ns);
        let resp = stack_response(&stack, wl, O).unwrap();
        prop_assert!(resp.absorptance >= -1e-12);
        let a_flux = flux_absorptance(&stack, wl);
        prop_assert!((resp.reflectance + resp.transmittance + a_flux - 1.0).abs() < 1e-10,
            "R {} T {} A_flux {}", resp.reflectance, resp.transmittance, a_flux);
    }

    #[test]
    fn lossless_stacks_do_not_absorb(layers in layer_strategy(false), wl in 400.0f64..1600.0) {
        let stack = random_stack(&layers, 1.0, 1.45);
        let resp = stack_response(&stack, wl, O).unwrap();
        prop_assert!(resp.absorptance.abs() <= 1e-10);
        let p = field_profile(&stack, wl, O).unwrap();
        let s = p.flux();
        let expected = 0.5 * resp.transmittance;
        for v in &s[p.layered_range()] {
            prop_assert!((v / 0.5 - resp.transmittance).abs() < 1e-9, "{v} vs {expected}");
        }
    }

    #[test]
    fn composition(a in layer_strategy(true), b in layer_strategy(true), wl in 400.0f64..1600.0) {
        let s1 = random_stack(&a, 1.0, 1.45);
        let s2 = random_stack(&b, 1.0, 1.45);
        let mut joined = s1.clone();
        joined.layers.extend(s2.layers.iter().cloned());
        let m = stack_matrix(&joined, wl, O).unwrap();
        let prod = stack_matrix(&s2, wl, O).unwrap() * stack_matrix(&s1, wl, O).unwrap();
        let scale = m.0.iter().flatten().map(|z| z.norm()).fold(1.0, f64::max);
        prop_assert!(m.max_abs_diff(&prod) <= 1e-12 * scale);
    }

    #[test]
    fn scaling_invariance(layers in layer_strategy(false), wl in 400.0f64..1600.0, f in 0.2f64..5.0) {
        let s = random_stack(&layers, 1.0, 1.45);
        let scaled_layers: Vec<_> = layers.iter().map(|&(n, k, d)| (n, k, d * f)).collect();
        let scaled = random_stack(&scaled_layers, 1.0, 1.45);
        let a = stack_response(&s, wl, O).unwrap();
        let b = stack_response(&scaled, wl * f, O).unwrap();
        prop_assert!((a.reflectance - b.reflectance).abs() < 1e-12);
        prop_assert!((a.transmittance - b.transmittance).abs() < 1e-12);
    }

    #[test]
    fn interfaces_are_sampled_on_both_sides(layers in layer_strategy(true), wl in 400.0f64..1600.0) {
        let p = field_profile(&random_stack(&layers, 1.0, 1.45), wl, O).unwrap();
        for b in &p.layer_boundaries {
            prop_assert_eq!(p.z_nm.iter().filter(|&&z| z == *b).count(), 2);
        }
    }

    #[test]
    fn lossless_layer_is_unimodular(n in 1.0f64..10.0, d in 1.0f64..5000.0, wl in 300.0f64..2000.0) {
        let layer = Layer::new(medium(n, 0.0), d).unwrap();
        let m = layer_matrix(&layer, wl, O).unwrap();
        prop_assert!((m.det() - Complex64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn reciprocity(layers in layer_strategy(false), ns in 1.0f64..2.0) {
        let stack = random_stack(&layers, 1.0, ns);
        let rev = stack.reversed();
        let mut rng = ChaCha8Rng::seed_from_u64(SEED);
        for _ in 0..20 {
            let wl = rng.random_range(400.0..1600.0);
            let a = stack_response(&stack, wl, O).unwrap().transmittance;
            let b = stack_response(&rev, wl, O).unwrap().transmittance;
            prop_assert!((a - b).abs() < 1e-10);
        }
    }
}

#[test]
fn airy_oracle_on_random_etalons() {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    for _ in 0..100 {
        let n = rng.random_range(1.2..4.0);
        let d = rng.random_range(50.0..5000.0);
        let wl = rng.random_range(400.0..1600.0);
        let n0 = rng.random_range(1.0..1.5);
        let ns = rng.random_range(1.0..1.5);
        let stack = random_stack(&[(n, 0.0, d)], n0, ns);
        let t = stack_response(&stack, wl, O).unwrap().transmittance;
        let oracle = airy_etalon_oracle(n, d, wl, &stack.ambient, &stack.substrate).unwrap();
        assert!((t - oracle).abs() < 1e-8, "n {n} d {d} wl {wl}: {t} vs {oracle}");
    }
}

/// Air gap of `half_waves` half-wavelengths between two single quarter-wave
/// layers of very high index.
fn sin2_cavity(n_mirror: f64, half_waves: usize, wl: f64) -> StackSpec {
    let air = medium(1.0, 0.0);
    let high = medium(n_mirror, 0.0);
    let qw = Layer::new(high, wl / (4.0 * n_mirror)).unwrap();
    let gap = Layer::new(air.clone(), half_waves as f64 * wl / 2.0).unwrap();
    StackSpec::new(air.clone(), vec![qw.clone(), gap, qw], air)
}

#[test]
fn sin2_cavity_effective_length_is_half_the_gap() {
    let wl = 917.0;
    for m in [4usize, 10] {
        let stack = sin2_cavity(300.0, m, wl);
        let profile = field_profile(&stack, wl, O).unwrap();
        let l_eff = effective_length_um(&profile).unwrap();
        let half = m as f64 * wl / 4.0 * 1e-3;
        assert!((l_eff / half - 1.0).abs() < 1e-3, "m {m}: {l_eff} vs {half}");
    }
}

#[test]
fn high_index_mirror_is_near_perfect() {
    let wl = 917.0;
    let air = medium(1.0, 0.0);
    let n = 1e4;
    let qw = Layer::new(medium(n, 0.0), wl / (4.0 * n)).unwrap();
    let stack = StackSpec::new(air.clone(), vec![qw], air);
    assert!(stack_response(&stack, wl, O).unwrap().reflectance > 1.0 - 1e-7);
}

#[test]
fn standing_wave_antinode_count() {
    let wl = 917.0;
    for m in [3usize, 7] {
        let stack = sin2_cavity(300.0, m, wl);
        let p = field_profile(&stack, wl, O).unwrap();
        let (a, b) = (p.layer_boundaries[2 - 1], p.layer_boundaries[2]);
        let r = p.sample_range(a, b);
        let w: Vec<f64> = p.e_of_z[r].iter().map(|e| e.norm_sqr()).collect();
        let maxima = (1..w.len() - 1).filter(|&i| w[i] > w[i - 1] && w[i] >= w[i + 1]).count();
        assert_eq!(maxima, m);
    }
}

#[test]
fn effective_length_quadrature_converges() {
    let air = medium(1.0, 0.0);
    let mirror = quarter_wave_stack(
        985.0,
        &medium(2.25, 0.0),
        &medium(1.48, 0.0),
        8,
        Termination::High,
        air.clone(),
        medium(1.45, 0.0),
    )
    .unwrap();
    let mut layers: Vec<Layer> = mirror.reversed().layers;
    layers.push(Layer::new(air.clone(), 3000.0).unwrap());
    layers.extend(mirror.layers.iter().cloned());
    let stack = StackSpec::new(medium(1.45, 0.0), layers, medium(1.45, 0.0));
    let wl = 960.0;
    let coarse = effective_length_um(&field_profile_with_density(&stack, wl, O, 40).unwrap()).unwrap();
    let fine = effective_length_um(&field_profile_with_density(&stack, wl, O, 80).unwrap()).unwrap();
    assert!((coarse / fine - 1.0).abs() < 1e-3);
}

#[test]
fn quarter_wave_stack_phase_is_half_pi() {
    let stack = quarter_wave_stack(
        985.0,
        &medium(2.25, 0.0),
        &medium(1.48, 0.0),
        5,
        Termination::Low,
        medium(1.0, 0.0),
        medium(1.45, 0.0),
    )
    .unwrap();
    for l in &stack.layers {
        let delta = 2.0 * PI * l.optical_thickness_nm(985.0, O).unwrap() / 985.0;
        assert!((delta - PI / 2.0).abs() < 1e-12);
    }
}
