//! Closed-form equations of state built from a number-density generator.
//!
//! The generator is `n0(h,s) = A(s) e^{h/c0²} (1 + ε(s) h)` with `ε(s) = ε0 + ε1 s`
//! and `A`, `B` polynomials in `s`. Then `H = H̄ e^h`,
//! `p = ∫_0^h n0 H̄ e^{h'} dh' + B(s)`, `ρ = nH - p`, `c² = n/∂_h n` and
//! `θ = -∂_s p / n`, all in closed form.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jet::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EosError {
    #[error("number density n = {n} is not positive at (h, s) = ({h}, {s})")]
    NonPositiveDensity { h: f64, s: f64, n: f64 },
    #[error("sound speed squared c^2 = {c2} is not positive at (h, s) = ({h}, {s})")]
    NonPositiveSoundSpeed { h: f64, s: f64, c2: f64 },
    #[error("invalid EOS parameters: {0}")]
    InvalidParams(String),
}

/// Which built-in family a parameter set belongs to; used for report tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    ConstantC,
    VariableC,
}

/// Polynomial coefficients in ascending powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn eval<T: Scalar>(&self, x: T) -> T {
        let mut acc = T::zero();
        for &c in self.0.iter().rev() {
            acc = acc * x + c;
        }
        acc
    }

    pub fn derivative(&self) -> Poly {
        Poly(self.0.iter().enumerate().skip(1).map(|(k, c)| k as f64 * c).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EosParams {
    pub family: Family,
    /// Reference enthalpy `H̄`.
    pub bar_h: f64,
    pub c0: f64,
    /// `ε(s) = eps[0] + eps[1] s`; zero for the constant-c family.
    pub eps: [f64; 2],
    pub a: Poly,
    pub b: Poly,
    /// Coefficients of `B'(s)` used for θ and its partials. Normally the
    /// derivative of `b`.
    pub b_ds: Poly,
}

/// Pointwise thermodynamic package. Subscripts are partial derivatives in
/// `(h, s)`: `theta_hs` is `∂_s ∂_h θ`.
#[derive(Debug, Clone, Copy)]
pub struct Thermo<T> {
    pub c: T,
    pub c2: T,
    pub c_h: T,
    pub c_s: T,
    pub q: T,
    pub q_h: T,
    pub q_s: T,
    pub theta: T,
    pub theta_h: T,
    pub theta_s: T,
    pub theta_hh: T,
    pub theta_hs: T,
    pub n: T,
    pub n_h: T,
    pub big_h: T,
    pub p: T,
    pub rho: T,
}

pub type ThermoEval = Thermo<f64>;

impl EosParams {
    pub fn constant_c(bar_h: f64, c0: f64, a: Vec<f64>, b: Vec<f64>) -> Result<Self, EosError> {
        Self::build(Family::ConstantC, bar_h, c0, [0.0, 0.0], a, b)
    }

    pub fn variable_c(bar_h: f64, c0: f64, eps: [f64; 2], a: Vec<f64>, b: Vec<f64>) -> Result<Self, EosError> {
        Self::build(Family::VariableC, bar_h, c0, eps, a, b)
    }

    fn build(family: Family, bar_h: f64, c0: f64, eps: [f64; 2], a: Vec<f64>, b: Vec<f64>) -> Result<Self, EosError> {
        if !(bar_h > 0.0) {
            return Err(EosError::InvalidParams(format!("bar_h must be positive, got {bar_h}")));
        }
        if !(c0 > 0.0 && c0 <= 1.0) {
            return Err(EosError::InvalidParams(format!("c0 must lie in (0, 1], got {c0}")));
        }
        if a.is_empty() {
            return Err(EosError::InvalidParams("A(s) needs at least one coefficient".into()));
        }
        if family == Family::ConstantC && eps != [0.0, 0.0] {
            return Err(EosError::InvalidParams("constant-c family requires eps = 0".into()));
        }
        let b = Poly(if b.is_empty() { vec![0.0] } else { b });
        let b_ds = b.derivative();
        Ok(EosParams {
            family,
            bar_h,
            c0,
            eps,
            a: Poly(a),
            b,
            b_ds,
        })
    }

    /// Constant-c reference family used by most tests.
    pub fn default_constant_c(c0: f64) -> Self {
        Self::constant_c(1.0, c0, vec![1.0, -0.3, 0.05], vec![0.0, -0.4, 0.1]).expect("valid defaults")
    }

    /// Variable-c reference family: `c` depends on both `h` and `s`.
    pub fn default_variable_c() -> Self {
        Self::variable_c(1.0, 0.8, [0.2, 0.1], vec![1.0, -0.3, 0.05], vec![0.0, -0.4, 0.1]).expect("valid defaults")
    }

    /// Short label for reports.
    pub fn tag(&self) -> String {
        match self.family {
            Family::ConstantC => format!("constant-c(c0={})", self.c0),
            Family::VariableC => format!("variable-c(c0={},eps={},{})", self.c0, self.eps[0], self.eps[1]),
        }
    }

    /// Full thermodynamic package with exact partials.
    pub fn eval_thermo(&self, h: f64, s: f64) -> Result<ThermoEval, EosError> {
        self.thermo(h, s)
    }

    /// Generic evaluation; with jets it also yields time derivatives of
    /// every thermodynamic quantity.
    pub fn thermo<T: Scalar>(&self, h: T, s: T) -> Result<Thermo<T>, EosError> {
        let c0sq = self.c0 * self.c0;
        let beta = 1.0 + 1.0 / c0sq;
        let da = self.a.derivative();
        let dda = da.derivative();
        let dbs = self.b_ds.derivative();

        let a = self.a.eval(s);
        let a1 = da.eval(s);
        let a2 = dda.eval(s);
        let eps = s * self.eps[1] + self.eps[0];
        let eps1 = self.eps[1];
        let hbar = self.bar_h;

        let big_e = (h * beta).exp();
        let n0 = (h / c0sq).exp();
        let g = eps * h + 1.0;
        let i0 = (big_e - 1.0) / beta;
        let i1 = big_e * (h / beta - 1.0 / (beta * beta)) + 1.0 / (beta * beta);
        let pp = (i0 + eps * i1) * hbar;
        let p = a * pp + self.b.eval(s);
        let n = a * n0 * g;

        if !(n.value() > 0.0) {
            return Err(EosError::NonPositiveDensity {
                h: h.value(),
                s: s.value(),
                n: n.value(),
            });
        }
        let denom = g + eps * c0sq;
        let c2 = g * c0sq / denom;
        if !(c2.value() > 0.0) {
            return Err(EosError::NonPositiveSoundSpeed {
                h: h.value(),
                s: s.value(),
                c2: c2.value(),
            });
        }
        let big_h = (h.exp()) * hbar;
        let rho = n * big_h - p;

        // Θ = ∂_s p and D = n with their partials.
        let th = a1 * pp + a * i1 * (eps1 * hbar) + self.b_ds.eval(s);
        let th_h = big_e * hbar * (a1 * g + a * h * eps1);
        let th_hh = a1 * hbar * (big_e * g * beta + big_e * eps) + a * (eps1 * hbar) * (big_e + big_e * h * beta);
        let th_s = a2 * pp + a1 * i1 * (2.0 * eps1 * hbar) + dbs.eval(s);
        let th_hs = big_e * hbar * (a2 * g + a1 * h * (2.0 * eps1));

        let d = n;
        let d_h = a * n0 * (g / c0sq + eps);
        let d_hh = a * n0 * (g / (c0sq * c0sq) + eps * (2.0 / c0sq));
        let d_s = a1 * n0 * g + a * n0 * h * eps1;
        let d_hs = a1 * n0 * (g / c0sq + eps) + a * n0 * (h * (eps1 / c0sq) + eps1);

        let f = th / d;
        let f_h = (th_h - f * d_h) / d;
        let f_s = (th_s - f * d_s) / d;
        let f_hh = (th_hh - f_h * d_h * 2.0 - f * d_hh) / d;
        let f_hs = (th_hs - f_s * d_h - f_h * d_s - f * d_hs) / d;

        let theta = -f;
        let theta_h = -f_h;
        let theta_s = -f_s;
        let theta_hh = -f_hh;
        let theta_hs = -f_hs;

        let c = c2.sqrt();
        let dsq = denom * denom;
        let w_h = eps * eps * (c0sq * c0sq) / dsq;
        let w_s = dsq.recip() * -(c0sq * c0sq * eps1);
        let c_h = w_h / (c * 2.0);
        let c_s = w_s / (c * 2.0);

        let q = theta / big_h;
        let q_h = (theta_h - theta) / big_h;
        let q_s = theta_s / big_h;

        Ok(Thermo {
            c,
            c2,
            c_h,
            c_s,
            q,
            q_h,
            q_s,
            theta,
            theta_h,
            theta_s,
            theta_hh,
            theta_hs,
            n,
            n_h: d_h,
            big_h,
            p,
            rho,
        })
    }

    /// Only `(c², q)`, the coefficients of the first-order system.
    pub fn sound_and_q<T: Scalar>(&self, h: T, s: T) -> Result<(T, T), EosError> {
        let t = self.thermo(h, s)?;
        Ok((t.c2, t.q))
    }

    pub fn pressure(&self, h: f64, s: f64) -> f64 {
        let c0sq = self.c0 * self.c0;
        let beta = 1.0 + 1.0 / c0sq;
        let eps = self.eps[0] + self.eps[1] * s;
        let e = (beta * h).exp();
        let i0 = (e - 1.0) / beta;
        let i1 = e * (h / beta - 1.0 / (beta * beta)) + 1.0 / (beta * beta);
        self.a.eval(s) * self.bar_h * (i0 + eps * i1) + self.b.eval(s)
    }

    pub fn number_density(&self, h: f64, s: f64) -> f64 {
        let eps = self.eps[0] + self.eps[1] * s;
        self.a.eval(s) * (h / (self.c0 * self.c0)).exp() * (1.0 + eps * h)
    }
}

/// Box bounds on `(h, s, u¹, u², u³)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicityRegion {
    pub lo: [f64; 5],
    pub hi: [f64; 5],
}

impl HyperbolicityRegion {
    pub fn new(lo: [f64; 5], hi: [f64; 5]) -> Self {
        HyperbolicityRegion { lo, hi }
    }

    /// `|h|, |s| ≤ hs` and `|u^a| ≤ umax`.
    pub fn symmetric(hs: f64, umax: f64) -> Self {
        HyperbolicityRegion {
            lo: [-hs, -hs, -umax, -umax, -umax],
            hi: [hs, hs, umax, umax, umax],
        }
    }

    pub fn contains(&self, x: &[f64; 5]) -> bool {
        (0..5).all(|i| x[i] >= self.lo[i] && x[i] <= self.hi[i])
    }

    /// Checks `0 < c ≤ 1` and `n > 0` on a lattice covering the `(h, s)`
    /// rectangle and returns the smallest sound speed found.
    pub fn validate(&self, eos: &EosParams, lattice: usize) -> Result<f64, EosError> {
        let m = lattice.max(2);
        let mut c_min = f64::INFINITY;
        for i in 0..m {
            for j in 0..m {
                let h = self.lo[0] + (self.hi[0] - self.lo[0]) * i as f64 / (m - 1) as f64;
                let s = self.lo[1] + (self.hi[1] - self.lo[1]) * j as f64 / (m - 1) as f64;
                let t = eos.eval_thermo(h, s)?;
                if t.c > 1.0 + 1e-14 {
                    return Err(EosError::InvalidParams(format!("sound speed {} exceeds 1 at (h, s) = ({h}, {s})", t.c)));
                }
                c_min = c_min.min(t.c);
            }
        }
        Ok(c_min)
    }
}

/// Maximum relative defects of the thermodynamic relations.
#[derive(Debug, Clone, Serialize)]
pub struct ThermoValidation {
    pub dp_dh: f64,
    pub dp_ds: f64,
    pub enthalpy: f64,
    pub sound_speed: f64,
    pub q_ratio: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl ThermoValidation {
    pub fn max_defect(&self) -> f64 {
        [self.dp_dh, self.dp_ds, self.enthalpy, self.sound_speed, self.q_ratio]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Finite-difference audit of the closed-form relations (central step 1e-5).
pub fn validate_thermo(eos: &EosParams, samples: &[(f64, f64)]) -> Result<ThermoValidation, EosError> {
    const STEP: f64 = 1e-5;
    const TOL: f64 = 1e-7;
    let mut v = ThermoValidation {
        dp_dh: 0.0,
        dp_ds: 0.0,
        enthalpy: 0.0,
        sound_speed: 0.0,
        q_ratio: 0.0,
        tolerance: TOL,
        passed: true,
    };
    for &(h, s) in samples {
        let t = eos.eval_thermo(h, s)?;
        let dpdh = (eos.pressure(h + STEP, s) - eos.pressure(h - STEP, s)) / (2.0 * STEP);
        let dpds = (eos.pressure(h, s + STEP) - eos.pressure(h, s - STEP)) / (2.0 * STEP);
        let dndh = (eos.number_density(h + STEP, s) - eos.number_density(h - STEP, s)) / (2.0 * STEP);
        v.dp_dh = v.dp_dh.max(rel(dpdh, t.n * t.big_h));
        v.dp_ds = v.dp_ds.max(rel(dpds, -t.n * t.theta));
        v.enthalpy = v.enthalpy.max(rel(t.rho + t.p, t.n * t.big_h));
        v.sound_speed = v.sound_speed.max(rel(t.c2, eos.number_density(h, s) / dndh));
        v.q_ratio = v.q_ratio.max(rel(t.q, t.theta / t.big_h));
    }
    v.passed = v.max_defect() <= TOL;
    Ok(v)
}
