mod common;

use std::sync::Arc;

use anl_core::energy::{
    coercivity_check, coercivity_for, divcurl_identity_defect, elliptic_energy, g_inverse_field, identity_field, inner_product, regularity_report,
    regularity_sample, vorticity_entropy, wave_density_point, EnergyAccumulator, OneForm, Tracking, TransportScalar, WaveScalar, ALPHA_FLOOR,
};
use anl_core::eos::EosParams;
use anl_core::fluid::{complete_state, FluidState};
use anl_core::initial::{default_region, InitialRecipe, RandomSpec};
use anl_core::solver::{evolve, EvolutionConfig};
use common::{constant_raw, four_velocity, random_raw, random_state, spectral, variable_c};
use proptest::prelude::*;

fn accumulate(initial: &FluidState, t: f64, steps: usize, tracking: Tracking) -> EnergyAccumulator {
    let cfg = EvolutionConfig { snapshot_every: 1, ..EvolutionConfig::steps(t, steps) };
    let ev = evolve(initial, &cfg).unwrap();
    let mut acc = EnergyAccumulator::new(tracking);
    for s in &ev.snapshots {
        acc.add(&complete_state(s).unwrap()).unwrap();
    }
    acc
}

fn acoustic(n: usize) -> FluidState {
    let c = 0.8;
    InitialRecipe::acoustic(1e-3, c).build(&spectral(n), Arc::new(EosParams::default_constant_c(c)), default_region())
}

fn scalar_tracking(wave: &[WaveScalar], transport: &[TransportScalar]) -> Tracking {
    Tracking { wave: wave.iter().map(|w| (*w, [0; 3])).collect(), transport: transport.iter().map(|w| (*w, [0; 3])).collect() }
}

#[test]
fn constant_state_defects_vanish() {
    let acc = accumulate(&constant_raw(8, 0.1, -0.2, [0.05, 0.0, 0.02]), 0.2, 4, Tracking::full(1));
    for s in acc.wave.iter().chain(&acc.transport) {
        assert!(s.defect().unwrap().defect <= 1e-13, "{}", s.label);
    }
}

#[test]
fn wave_identity_converges_on_the_acoustic_run() {
    for label in ["h", "u1"] {
        let d: Vec<f64> = [4, 8, 16]
            .iter()
            .map(|&k| {
                let acc = accumulate(&acoustic(8), 0.5, k, scalar_tracking(&[WaveScalar::H, WaveScalar::U(1)], &[]));
                acc.wave_series(label).unwrap().defect().unwrap().relative
            })
            .collect();
        assert!(d.iter().all(|&v| v <= 1e-4), "{label}: {d:?}");
        let order = (d[1] / d[2]).log2();
        assert!(order >= 3.0 || d[2] < 1e-13, "{label}: {d:?}");
    }
}

#[test]
fn acoustic_vorticity_stays_negligible() {
    let acc = accumulate(&acoustic(8), 0.5, 8, scalar_tracking(&[], &[TransportScalar::Varpi(1)]));
    let d = acc.transport_series("varpi1").unwrap().defect().unwrap();
    assert!(d.lhs.abs() <= 1e-10 && d.rhs.abs() <= 1e-10, "{d:?}");
}

#[test]
fn random_run_identities_converge() {
    let raw = random_raw(16, 41);
    let tr = scalar_tracking(&[WaveScalar::H], &[TransportScalar::S(1), TransportScalar::Varpi(2)]);
    let runs: Vec<EnergyAccumulator> = [8, 16].iter().map(|&k| accumulate(&raw, 0.25, k, tr.clone())).collect();
    let h: Vec<f64> = runs.iter().map(|a| a.wave_series("h").unwrap().defect().unwrap().relative).collect();
    assert!(h[1] <= 1e-4 && (h[0] / h[1]).log2() >= 3.0, "{h:?}");
    for label in ["S1", "varpi2"] {
        let d = runs[1].transport_series(label).unwrap().defect().unwrap();
        assert!(d.relative <= 1e-4, "{label}: {d:?}");
    }
    assert!(runs.iter().all(|a| a.min_density >= 0.0));
}

#[test]
fn divcurl_identity_flat_and_curved() {
    let st = random_state(12, 42);
    let g = st.grid();
    let (w, _) = vorticity_entropy(&st);
    assert!(divcurl_identity_defect(g, &w, &identity_field(g.len())).relative <= 1e-11);
    let curved: Vec<f64> = [8, 16, 24]
        .iter()
        .map(|&n| {
            let st = random_state(n, 42);
            let (_, s) = vorticity_entropy(&st);
            divcurl_identity_defect(st.grid(), &s, &g_inverse_field(&st)).relative
        })
        .collect();
    assert!(curved[0] / curved[1] >= 1e3, "{curved:?}");
    assert!(curved[1] <= 1e-13 && curved[2] <= 1e-13, "{curved:?}");
    let z: OneForm = std::array::from_fn(|_| vec![0.0; g.len()]);
    let d = divcurl_identity_defect(g, &z, &g_inverse_field(&st));
    assert_eq!((d.lhs, d.rhs), (0.0, 0.0));
}

#[test]
fn elliptic_energy_limits() {
    let st = random_state(8, 43);
    let m = g_inverse_field(&st);
    let grid = st.grid();
    let (w, s) = vorticity_entropy(&st);
    let low = elliptic_energy(&st, &m, 0.0, 3).unwrap();
    let mut l2 = 0.0;
    for ii in anl_core::energy::multi_indices_upto(2) {
        for f in w.iter().chain(s.iter()) {
            let d = anl_core::energy::apply_multi(grid, f, ii);
            l2 += grid.integrate(&d.iter().map(|x| x * x).collect::<Vec<_>>());
        }
    }
    assert!((low.inner - l2).abs() <= 1e-12 * l2);
    let rest = complete_state(&constant_raw(8, 0.0, 0.0, [0.0; 3])).unwrap();
    assert_eq!(elliptic_energy(&rest, &g_inverse_field(&rest), 1.0, 3).unwrap().energy, 0.0);
}

#[test]
fn coercivity_holds_along_a_run() {
    let cfg = EvolutionConfig { snapshot_every: 2, ..EvolutionConfig::steps(0.25, 4) };
    let ev = evolve(&random_raw(8, 44), &cfg).unwrap();
    for s in &ev.snapshots {
        let r = coercivity_check(&complete_state(s).unwrap(), 3).unwrap();
        assert!(r.alpha >= 1e-4 && r.alpha >= ALPHA_FLOOR, "{r:?}");
        assert!(r.c_lower.is_finite() && r.c_upper.is_finite() && r.c_lower <= 1e6 && r.c_upper <= 1e6, "{r:?}");
        assert_eq!(r.probes, 21);
    }
}

#[test]
fn rest_frame_metric_is_the_flat_case() {
    let st = random_state(8, 45);
    let g = st.grid();
    let mut rest = st.raw.clone();
    for u in &mut rest.u {
        u.data.iter_mut().for_each(|v| *v = 0.0);
    }
    let m_rest = g_inverse_field(&complete_state(&rest).unwrap());
    let (w, s) = vorticity_entropy(&st);
    let a = coercivity_for(g, &m_rest, 3, &w, &s, 7).unwrap();
    let b = coercivity_for(g, &identity_field(g.len()), 3, &w, &s, 7).unwrap();
    assert_eq!((a.c_lower, a.c_upper, a.alpha), (b.c_lower, b.c_upper, b.alpha));
}

#[test]
fn comparison_constant_grows_with_velocity_amplitude() {
    let g = spectral(8);
    let base = complete_state(&InitialRecipe::random(46, &RandomSpec::default()).build(&g, variable_c(), default_region())).unwrap();
    let (w, s) = vorticity_entropy(&base);
    let c: Vec<f64> = [1.0, 2.0, 4.0]
        .iter()
        .map(|&f| {
            let raw = InitialRecipe::random(46, &RandomSpec::default()).scale_velocity(f).build(&g, variable_c(), default_region());
            let m = g_inverse_field(&complete_state(&raw).unwrap());
            coercivity_for(&g, &m, 3, &w, &s, 1).unwrap().c_lower
        })
        .collect();
    assert!(c[0] < c[1] && c[1] < c[2], "{c:?}");
}

#[test]
fn smooth_run_keeps_regularity() {
    let spec = RandomSpec { entropy_decay: 1.0, ..RandomSpec::default() };
    let raw = InitialRecipe::random(47, &spec).build(&spectral(12), variable_c(), default_region());
    let cfg = EvolutionConfig { snapshot_every: 2, ..EvolutionConfig::steps(0.5, 8) };
    let ev = evolve(&raw, &cfg).unwrap();
    let samples: Vec<[f64; 5]> = ev.snapshots.iter().map(|s| regularity_sample(&complete_state(s).unwrap(), 3).unwrap()).collect();
    let rep = regularity_report(&ev.record.snapshot_times, &samples, 3);
    assert!(rep.max_growth.iter().all(|(_, g)| *g <= 3.0), "{rep:?}");
    assert!(rep.envelope_rate <= 5.0 && !rep.super_exponential);
    let ratio = |k: usize| samples[k][2] / samples[k][0];
    for k in 0..samples.len() {
        let r = ratio(k) / ratio(0);
        assert!((0.2..=5.0).contains(&r), "{r}");
    }
}

fn random_forms(n: usize, seed: u64) -> (OneForm, OneForm) {
    vorticity_entropy(&random_state(n, seed))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn wave_density_is_nonnegative(c in 0.05f64..1.0, u in four_velocity(2.0), phi in -2.0f64..2.0, d in prop::array::uniform4(-3.0f64..3.0)) {
        prop_assert!(wave_density_point(c, &u, phi, &d) >= 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    #[test]
    fn inner_product_is_symmetric_bilinear_positive(seeds in prop::array::uniform3(0u64..1000), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let st = random_state(8, seeds[0]);
        let g = st.grid();
        let m = g_inverse_field(&st);
        let x = random_forms(8, seeds[0]);
        let y = random_forms(8, seeds[1]);
        let z = random_forms(8, seeds[2]);
        let ip = |p: &(OneForm, OneForm), q: &(OneForm, OneForm)| inner_product(g, &m, 0.7, 3, (&p.0, &p.1), (&q.0, &q.1)).unwrap();
        let comb = |p: &OneForm, q: &OneForm| -> OneForm { std::array::from_fn(|k| p[k].iter().zip(&q[k]).map(|(u, v)| a * u + b * v).collect()) };
        let xy = ip(&x, &y);
        prop_assert!((xy - ip(&y, &x)).abs() <= 1e-12 * (1.0 + xy.abs()));
        let ay_bz = (comb(&y.0, &z.0), comb(&y.1, &z.1));
        let lhs = ip(&x, &ay_bz);
        let rhs = a * xy + b * ip(&x, &z);
        prop_assert!((lhs - rhs).abs() <= 1e-11 * (1.0 + lhs.abs() + rhs.abs()));
        prop_assert!(ip(&x, &x) > 0.0);
    }
}
