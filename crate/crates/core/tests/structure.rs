mod common;

use anl_core::fluid::complete_state;
use anl_core::geometry::inverse_metric;
use anl_core::grid::{DerivMode, TorusGrid};
use anl_core::initial::{default_region, InitialRecipe, RandomSpec};
use anl_core::structure::{
    assemble_inhomogeneous, convergence_study, identity_suite, linear_terms_scaled, null_forms_on_covector, standard_null_forms,
    theorem_residual_fields, theorem_residuals, Fault, IdentityClass, EQUATIONS,
};
use common::{constant_raw, random_state, spectral, variable_c};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ETA_INV: [[f64; 4]; 4] = [[-1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]];

/// A `g`-null covector `(λ, ξ)` with unit spatial part.
fn null_covector(gi: &[[f64; 4]; 4], rng: &mut ChaCha8Rng) -> [f64; 4] {
    let v: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
    let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let xi = v.map(|x| x / norm);
    let a = gi[0][0];
    let b: f64 = (0..3).map(|i| gi[0][i + 1] * xi[i]).sum();
    let c: f64 = (0..3).map(|i| (0..3).map(|j| gi[i + 1][j + 1] * xi[i] * xi[j]).sum::<f64>()).sum();
    let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let lambda = (-b + sign * (b * b - a * c).sqrt()) / a;
    [lambda, xi[0], xi[1], xi[2]]
}

/// Rest state with varying enthalpy and constant entropy, so `S = ϖ = 0`.
fn rest_isentropic(n: usize) -> anl_core::fluid::FluidState {
    let g = spectral(n);
    let mut raw = constant_raw(n, 0.0, 0.1, [0.0; 3]);
    raw.h = g.sample(|x| 0.05 * (x[0] + 2.0 * x[2]).sin() + 0.03 * (x[1] - x[0]).cos());
    raw
}

#[test]
fn null_form_hand_examples() {
    let (qg, qmn) = standard_null_forms(&ETA_INV, &[1.0, 0.0, 0.0, 0.0], &[0.0, 1.0, 0.0, 0.0]);
    assert_eq!(qg, 0.0);
    assert_eq!(qmn[0][1], 1.0);
    assert_eq!(qmn[1][0], -1.0);
    let d = [0.3, -1.2, 0.7, 2.0];
    let (_, same) = standard_null_forms(&ETA_INV, &d, &d);
    assert!(same.iter().flatten().all(|&v| v == 0.0));
}

#[test]
fn null_covectors_are_annihilated() {
    let st = random_state(16, 21);
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for trial in 0..1000 {
        let i = rng.gen_range(0..st.len());
        let p = st.point(i);
        let gi = inverse_metric(p.th.c, &p.u);
        let ell = null_covector(&gi, &mut rng);
        let (qg, _) = standard_null_forms(&gi, &ell, &ell);
        assert!(qg.abs() <= 1e-12, "trial {trial}: {qg}");
        let b: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let a = rng.gen_range(-1.0..1.0);
        for v in null_forms_on_covector(&p, &ell, a, &b) {
            assert!(v.abs() <= 1e-12, "trial {trial}: {v}");
        }
    }
}

#[test]
fn wave_h_null_form_reassembles_from_standard_forms() {
    let st = random_state(12, 23);
    let set = assemble_inhomogeneous(&st, None);
    for i in 0..st.len() {
        let p = st.point(i);
        let gi = inverse_metric(p.th.c, &p.u);
        let (qg_hh, _) = standard_null_forms(&gi, &p.dh, &p.dh);
        let mut q_uu = 0.0;
        for k in 0..4 {
            for l in 0..4 {
                let dk: [f64; 4] = std::array::from_fn(|m| p.du[m][k]);
                let dl: [f64; 4] = std::array::from_fn(|m| p.du[m][l]);
                q_uu += standard_null_forms(&gi, &dk, &dl).1[k][l];
            }
        }
        let want = -p.th.c_h / p.th.c * qg_hh + p.th.c2 * q_uu;
        assert!((set.points[i].q_h - want).abs() <= 1e-12, "{i}");
    }
}

#[test]
fn constant_state_residuals_vanish() {
    let st = complete_state(&constant_raw(8, 0.1, -0.1, [0.1, -0.2, 0.05])).unwrap();
    let r = theorem_residuals(&st, None);
    assert_eq!(r.rows.len(), EQUATIONS.len());
    assert!(r.max_linf() <= 1e-13, "{r:?}");
    let t = convergence_study(&[8, 12, 16], DerivMode::Spectral, |g| {
        InitialRecipe::constant(0.1, -0.1).build(g, variable_c(), default_region())
    }, None)
    .unwrap();
    assert!(t.rows.iter().all(|row| row.order.is_none() && row.order_label() == "floor"));
}

#[test]
fn isentropic_irrotational_collapse() {
    let st = complete_state(&rest_isentropic(16)).unwrap();
    let set = assemble_inhomogeneous(&st, None);
    for (i, inh) in set.points.iter().enumerate() {
        let p = st.point(i);
        assert!(p.w.iter().chain(&p.ds_).chain(&p.cv).all(|v| v.abs() < 1e-14));
        assert!(p.dv.abs() < 1e-14);
        let ls = [inh.l_h, inh.l_s, inh.l_d].into_iter().chain(inh.l_u).chain(inh.l_c);
        assert!(ls.into_iter().all(|v| v.abs() < 1e-14));
        assert!(inh.q_d.abs() < 1e-14 && inh.q_c.iter().all(|v| v.abs() < 1e-14));
    }
    // The wave residuals reduce to □h - 𝔔_(h) and □u - 𝔔_(u).
    let fields = theorem_residual_fields(&st, None);
    for (i, r) in fields.iter().enumerate() {
        let p = st.point(i);
        let inh = &set.points[i];
        assert!((r.wave_h - (p.box_h - inh.q_h)).abs() < 1e-14);
        for a in 0..4 {
            assert!((r.wave_u[a] - (p.box_u[a] - inh.q_u[a])).abs() < 1e-14);
        }
    }
    let fine = theorem_residuals(&complete_state(&rest_isentropic(32)).unwrap(), None);
    assert!(fine.get("wave-h").unwrap().linf < 1e-9 && fine.get("wave-u").unwrap().linf < 1e-9, "{fine:?}");
}

#[test]
fn linear_terms_are_affine_in_derivatives() {
    let st = random_state(8, 24);
    for i in (0..st.len()).step_by(7) {
        let p = st.point(i);
        let l0 = linear_terms_scaled(&p, 0.0);
        let l1 = linear_terms_scaled(&p, 1.0);
        let l3 = linear_terms_scaled(&p, 3.0);
        for k in 0..l0.len() {
            let scale = 1.0 + l0[k].abs() + l1[k].abs() + l3[k].abs();
            assert!((l3[k] - 3.0 * l1[k] + 2.0 * l0[k]).abs() <= 1e-13 * scale, "{i}/{k}");
        }
    }
}

#[test]
fn curl_s_is_algebraically_zero() {
    for n in [8, 16] {
        let r = theorem_residuals(&random_state(n, 25), None);
        assert!(r.get("curl-S").unwrap().linf <= 1e-12);
    }
}

#[test]
fn kinematic_identities_hold_at_one_resolution() {
    let ids = identity_suite(&random_state(16, 26));
    let kin: Vec<_> = ids.iter().filter(|c| c.class == IdentityClass::Kinematic).collect();
    assert!(!kin.is_empty());
    for c in kin {
        assert!(c.relative <= 1e-12, "{}: {}", c.id, c.relative);
    }
}

#[test]
fn spectral_vorticity_transport_decays() {
    let make = |g: &std::sync::Arc<TorusGrid>| InitialRecipe::random(1, &RandomSpec::default()).build(g, variable_c(), default_region());
    let t = convergence_study(&[24, 48], DerivMode::Spectral, make, None).unwrap();
    let row = t.rows.iter().find(|r| r.label == "transport-varpi").unwrap();
    assert!(row.ratios[0] >= 1e3, "{row:?}");
}

#[test]
fn fd4_wave_h_is_fourth_order() {
    let make = |g: &std::sync::Arc<TorusGrid>| InitialRecipe::random(1, &RandomSpec::default()).build(g, variable_c(), default_region());
    let t = convergence_study(&[16, 32, 64], DerivMode::Fd4, make, None).unwrap();
    let order = t.rows.iter().find(|r| r.label == "wave-h").unwrap().order.unwrap();
    assert!((3.5..=4.5).contains(&order), "{order}");
}

#[test]
fn every_fault_stalls_its_residual() {
    let coarse = random_state(16, 27);
    let fine = random_state(32, 27);
    for f in Fault::ALL {
        let label = if f.label().starts_with("Lh") { "wave-h" } else { "wave-u" };
        let rc = theorem_residuals(&coarse, Some(f)).get(label).unwrap().linf;
        let rf = theorem_residuals(&fine, Some(f)).get(label).unwrap().linf;
        assert!(rf > 1e-6 && rc / rf < 10.0, "{}: {rc} -> {rf}", f.label());
        assert_eq!(Fault::parse(f.label()), Some(f));
    }
    let clean = theorem_residuals(&fine, None);
    assert!(clean.get("wave-h").unwrap().linf < 1e-6 && clean.get("wave-u").unwrap().linf < 1e-6);
}

proptest! {
    #[test]
    fn null_form_symmetries(dphi in prop::array::uniform4(-3.0f64..3.0), dpsi in prop::array::uniform4(-3.0f64..3.0), c in 0.2f64..1.0, u in common::four_velocity(0.8)) {
        let gi = inverse_metric(c, &u);
        let (a, qa) = standard_null_forms(&gi, &dphi, &dpsi);
        let (b, qb) = standard_null_forms(&gi, &dpsi, &dphi);
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        for m in 0..4 {
            for n in 0..4 {
                prop_assert_eq!(qa[m][n], -qb[m][n]);
                prop_assert_eq!(qa[m][n], -qa[n][m]);
            }
        }
    }
}
