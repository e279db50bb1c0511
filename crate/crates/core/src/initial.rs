//! Initial-data recipes: backgrounds plus finite sums of Fourier modes.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::eos::{EosParams, HyperbolicityRegion};
use crate::fluid::FluidState;
use crate::grid::TorusGrid;

/// `amp · cos(k·x + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub k: [i32; 3],
    pub amp: f64,
    pub phase: f64,
}

impl Mode {
    pub fn eval(&self, x: [f64; 3]) -> f64 {
        let arg = self.k[0] as f64 * x[0] + self.k[1] as f64 * x[1] + self.k[2] as f64 * x[2];
        self.amp * (arg + self.phase).cos()
    }

    fn kmag(&self) -> f64 {
        let k = self.k.map(|v| v as f64);
        (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct InitialRecipe {
    pub h0: f64,
    pub s0: f64,
    pub h: Vec<Mode>,
    pub s: Vec<Mode>,
    pub u: [Vec<Mode>; 3],
}

/// Settings for [`InitialRecipe::random`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomSpec {
    pub kmax: i32,
    pub amplitude: f64,
    pub modes_per_field: usize,
    /// Extra spectral decay `|k|^{-p}` applied to the entropy modes.
    pub entropy_decay: f64,
}

impl Default for RandomSpec {
    fn default() -> Self {
        RandomSpec {
            kmax: 3,
            amplitude: 0.05,
            modes_per_field: 3,
            entropy_decay: 0.0,
        }
    }
}

impl InitialRecipe {
    pub fn constant(h0: f64, s0: f64) -> Self {
        InitialRecipe {
            h0,
            s0,
            ..Default::default()
        }
    }

    /// Seeded smooth data; every amplitude is at most `spec.amplitude` and
    /// every wavevector has `1 ≤ |k_i| ≤ kmax` in at least one slot.
    pub fn random(seed: u64, spec: &RandomSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |decay: f64| -> Vec<Mode> {
            (0..spec.modes_per_field)
                .map(|_| loop {
                    let k = [0; 3].map(|_| rng.gen_range(-spec.kmax..=spec.kmax));
                    let m = Mode {
                        k,
                        amp: 0.0,
                        phase: rng.gen_range(0.0..std::f64::consts::TAU),
                    };
                    let kmag = m.kmag();
                    if kmag == 0.0 || kmag > spec.kmax as f64 {
                        continue;
                    }
                    let amp = spec.amplitude * rng.gen_range(0.3..1.0) * kmag.powf(-decay);
                    break Mode { amp, ..m };
                })
                .collect()
        };
        let h = draw(0.0);
        let s = draw(spec.entropy_decay);
        let u = [draw(0.0), draw(0.0), draw(0.0)];
        InitialRecipe { h0: 0.0, s0: 0.0, h, s, u }
    }

    /// Right-moving plane sound wave along `x¹`: `h = ε sin x¹`, `u¹ = h / c`.
    pub fn acoustic(eps: f64, c: f64) -> Self {
        let m = Mode {
            k: [1, 0, 0],
            amp: eps,
            phase: -std::f64::consts::FRAC_PI_2,
        };
        InitialRecipe {
            h: vec![m],
            u: [vec![Mode { amp: eps / c, ..m }], Vec::new(), Vec::new()],
            ..Default::default()
        }
    }

    /// Multiplies the velocity amplitudes by `f`.
    pub fn scale_velocity(mut self, f: f64) -> Self {
        for comp in &mut self.u {
            for m in comp {
                m.amp *= f;
            }
        }
        self
    }

    pub fn build(&self, grid: &Arc<TorusGrid>, eos: Arc<EosParams>, region: HyperbolicityRegion) -> FluidState {
        let sum = |base: f64, modes: &[Mode]| grid.sample(|x| base + modes.iter().map(|m| m.eval(x)).sum::<f64>());
        FluidState {
            h: sum(self.h0, &self.h),
            s: sum(self.s0, &self.s),
            u: [sum(0.0, &self.u[0]), sum(0.0, &self.u[1]), sum(0.0, &self.u[2])],
            eos,
            region,
            time: 0.0,
        }
    }
}

/// Region used by the benchmark runs: generous relative to 0.05 amplitudes.
pub fn default_region() -> HyperbolicityRegion {
    HyperbolicityRegion::symmetric(0.5, 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::DerivMode;

    #[test]
    fn random_recipe_is_seed_deterministic_and_bounded() {
        let spec = RandomSpec::default();
        let a = InitialRecipe::random(7, &spec);
        assert_eq!(a, InitialRecipe::random(7, &spec));
        assert_ne!(a, InitialRecipe::random(8, &spec));
        for m in a.h.iter().chain(&a.s).chain(a.u.iter().flatten()) {
            assert!(m.amp <= 0.05 && m.amp > 0.0);
            assert!(m.kmag() <= 3.0);
        }
    }

    #[test]
    fn acoustic_profile() {
        let g = TorusGrid::cubic(8, DerivMode::Spectral).unwrap();
        let st = InitialRecipe::acoustic(1e-3, 0.5).build(&g, Arc::new(EosParams::default_constant_c(0.5)), default_region());
        let i = g.index([2, 0, 0]);
        let x = g.coords(i)[0];
        assert!((st.h.data[i] - 1e-3 * x.sin()).abs() < 1e-15);
        assert!((st.u[0].data[i] - 2e-3 * x.sin()).abs() < 1e-15);
    }
}
