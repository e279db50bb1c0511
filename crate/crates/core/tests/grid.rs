mod common;

use std::f64::consts::PI;

use anl_core::grid::{read_fields, write_fields, DerivMode, GridError, TorusGrid};
use common::max_abs_diff;
use proptest::prelude::*;

fn vol() -> f64 {
    (2.0 * PI).powi(3)
}

#[test]
fn spectral_derivative_of_single_mode_is_exact() {
    let g = TorusGrid::cubic(16, DerivMode::Spectral).unwrap();
    let f = g.sample(|x| x[0].sin());
    let d = f.partial_derivative(1);
    let exact = g.sample(|x| x[0].cos());
    assert!(max_abs_diff(&d.data, &exact.data) < 1e-14);
    let c = g.constant(2.5);
    for a in 1..=3 {
        assert!(c.partial_derivative(a).max_abs() < 1e-15);
    }
}

#[test]
fn fd4_derivative_converges_at_fourth_order() {
    let err = |n: usize| {
        let g = TorusGrid::cubic(n, DerivMode::Fd4).unwrap();
        let d = g.sample(|x| (3.0 * x[1]).sin()).partial_derivative(2);
        let exact = g.sample(|x| 3.0 * (3.0 * x[1]).cos());
        max_abs_diff(&d.data, &exact.data)
    };
    let order = (err(32) / err(64)).log2();
    assert!((order - 4.0).abs() <= 0.2, "order {order}");
}

#[test]
fn integrals_of_reference_fields() {
    let g = TorusGrid::cubic(12, DerivMode::Spectral).unwrap();
    assert!((g.constant(1.0).integrate() - vol()).abs() < 1e-12);
    assert!(g.sample(|x| x[0].sin()).integrate().abs() < 1e-13);
    assert!((g.sample(|x| x[0].sin().powi(2)).integrate() - vol() / 2.0).abs() < 1e-12);
}

#[test]
fn sobolev_norms_of_reference_fields() {
    let g = TorusGrid::cubic(12, DerivMode::Spectral).unwrap();
    for r in [0.0, 1.0, 2.5] {
        assert!((g.constant(1.0).sobolev_norm(r).unwrap() - vol().sqrt()).abs() < 1e-12);
    }
    let s = g.sample(|x| x[0].sin());
    let l2 = (vol() / 2.0).sqrt();
    assert!((s.sobolev_norm(1.0).unwrap() - 2f64.sqrt() * l2).abs() < 1e-12);
    // Unordered multi-indices up to order 3 see ∂_1^j sin for j = 0..3.
    assert!((g.multi_index_norm(&s.data, 3).unwrap() - 2.0 * l2).abs() < 1e-12);
}

#[test]
fn sobolev_norm_needs_spectral_mode() {
    let g = TorusGrid::cubic(8, DerivMode::Fd4).unwrap();
    assert!(matches!(g.constant(1.0).sobolev_norm(1.0), Err(GridError::NeedsSpectral)));
}

#[test]
fn snapshot_roundtrip_preserves_bits() {
    let dir = tempfile::tempdir().unwrap();
    let g = TorusGrid::new([8, 10, 12], DerivMode::Spectral).unwrap();
    let a = g.sample(|x| x[0].sin() * x[2].cos());
    let b = g.sample(|x| x[1] * 0.1);
    let path = dir.path().join("snap.bin");
    write_fields(&path, &[("a", &a), ("b", &b)], 0.25, serde_json::json!({"seed": 3})).unwrap();
    let (g2, side, fields) = read_fields(&path).unwrap();
    assert_eq!(g2.dims(), [8, 10, 12]);
    assert_eq!(side.fields, vec!["a", "b"]);
    assert_eq!(side.time, 0.25);
    assert_eq!(fields[0].data, a.data);
    assert_eq!(fields[1].data, b.data);
}

fn smooth_field(coef: [f64; 6]) -> impl Fn([f64; 3]) -> f64 {
    move |x| {
        coef[0] * (x[0] + 2.0 * x[1]).sin() + coef[1] * (x[1] - x[2]).cos() + coef[2] * (2.0 * x[2]).sin() * x[0].cos()
            + coef[3] * (x[0] + x[1] + x[2]).cos()
            + coef[4] * (3.0 * x[1]).sin()
            + coef[5]
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn spectral_derivatives_commute(coef in prop::array::uniform6(-1.0f64..1.0), a in 1usize..=3, b in 1usize..=3) {
        let g = TorusGrid::cubic(12, DerivMode::Spectral).unwrap();
        let f = g.sample(smooth_field(coef));
        let ab = f.partial_derivative(a).partial_derivative(b);
        let ba = f.partial_derivative(b).partial_derivative(a);
        prop_assert!(max_abs_diff(&ab.data, &ba.data) <= 1e-12);
    }

    #[test]
    fn integration_by_parts_on_the_torus(c1 in prop::array::uniform6(-1.0f64..1.0), c2 in prop::array::uniform6(-1.0f64..1.0), a in 1usize..=3) {
        for mode in [DerivMode::Spectral, DerivMode::Fd4] {
            let g = TorusGrid::cubic(12, mode).unwrap();
            let f = g.sample(smooth_field(c1));
            let h = g.sample(smooth_field(c2));
            let lhs = f.partial_derivative(a).zip(&h, |x, y| x * y).integrate() + f.zip(&h.partial_derivative(a), |x, y| x * y).integrate();
            prop_assert!(lhs.abs() <= 1e-11, "{lhs}");
        }
    }

    #[test]
    fn sobolev_norm_is_monotone_in_r(coef in prop::array::uniform6(-1.0f64..1.0), r in 0.0f64..3.0, dr in 0.0f64..2.0) {
        let g = TorusGrid::cubic(12, DerivMode::Spectral).unwrap();
        let f = g.sample(smooth_field(coef));
        prop_assert!(f.sobolev_norm(r).unwrap() <= f.sobolev_norm(r + dr).unwrap() * (1.0 + 1e-14));
    }

    #[test]
    fn l2_norm_is_parseval(coef in prop::array::uniform6(-1.0f64..1.0)) {
        let g = TorusGrid::cubic(12, DerivMode::Spectral).unwrap();
        let f = g.sample(smooth_field(coef));
        let direct = f.map(|v| v * v).integrate().sqrt();
        prop_assert!((f.sobolev_norm(0.0).unwrap() - direct).abs() <= 1e-12 * (1.0 + direct));
    }
}
