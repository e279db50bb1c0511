#![allow(dead_code)]

use std::sync::Arc;

use anl_core::eos::EosParams;
use anl_core::fluid::{complete_state, ExtendedState, FluidState};
use anl_core::grid::{DerivMode, TorusGrid};
use anl_core::initial::{default_region, InitialRecipe, RandomSpec};
use proptest::prelude::*;

pub fn spectral(n: usize) -> Arc<TorusGrid> {
    TorusGrid::cubic(n, DerivMode::Spectral).unwrap()
}

pub fn variable_c() -> Arc<EosParams> {
    Arc::new(EosParams::default_variable_c())
}

pub fn random_raw(n: usize, seed: u64) -> FluidState {
    InitialRecipe::random(seed, &RandomSpec::default()).build(&spectral(n), variable_c(), default_region())
}

pub fn random_state(n: usize, seed: u64) -> ExtendedState {
    complete_state(&random_raw(n, seed)).unwrap()
}

pub fn constant_raw(n: usize, h: f64, s: f64, u: [f64; 3]) -> FluidState {
    FluidState::constant(&spectral(n), variable_c(), default_region(), h, s, u)
}

/// Unit timelike `u` with `|u^a| ≤ umax`.
pub fn four_velocity(umax: f64) -> impl Strategy<Value = [f64; 4]> {
    prop::array::uniform3(-umax..umax).prop_map(|v| {
        let u0 = (1.0 + v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        [u0, v[0], v[1], v[2]]
    })
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
