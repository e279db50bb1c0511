//! Acoustical geometry: `g`, `g⁻¹`, `det g`, `Π`, `G⁻¹`, Christoffel symbols,
//! the covariant wave operator and characteristic speeds.

use thiserror::Error;

use crate::eos::ThermoEval;
use crate::fluid::{wave_flux, ExtendedState, FluidError};
use crate::jet::{Jet, Scalar};
use crate::jetfield::{map_values, JetField};
use crate::tensor::{det4, lower, ETA};

pub type Metric4 = [[f64; 4]; 4];
pub type SpatialInvMetric = [[f64; 3]; 3];
/// `gamma[α][γ][β] = Γ_α^γ_β`.
pub type Christoffel4 = [[[f64; 4]; 4]; 4];

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("sound speed {0} is outside (0, 1]")]
    SoundSpeed(f64),
    #[error("four-velocity is not normalized: u.u + 1 = {0:e}")]
    NotNormalized(f64),
    #[error("closed-form det g = {formula} disagrees with numeric {numeric}")]
    DetMismatch { formula: f64, numeric: f64 },
    #[error("scalar needs time jets of order >= {need}, got {have}")]
    MissingTimeDerivatives { need: usize, have: usize },
    #[error(transparent)]
    Fluid(#[from] FluidError),
}

/// `g_{αβ} = c⁻² η_{αβ} + (c⁻² - 1) u_α u_β`.
pub fn metric<T: Scalar>(c: T, u: &[T; 4]) -> [[T; 4]; 4] {
    let ul = lower(u);
    let ci2 = (c * c).recip();
    std::array::from_fn(|a| std::array::from_fn(|b| (ci2 - 1.0) * ul[a] * ul[b] + if a == b { ci2 * ETA[a] } else { T::zero() }))
}

/// `(g⁻¹)^{αβ} = c² η^{αβ} + (c² - 1) u^α u^β`.
pub fn inverse_metric<T: Scalar>(c: T, u: &[T; 4]) -> [[T; 4]; 4] {
    let c2 = c * c;
    std::array::from_fn(|a| std::array::from_fn(|b| (c2 - 1.0) * u[a] * u[b] + if a == b { c2 * ETA[a] } else { T::zero() }))
}

fn check_inputs(c: f64, u: &[f64; 4]) -> Result<(), GeometryError> {
    if !(c > 0.0 && c <= 1.0) {
        return Err(GeometryError::SoundSpeed(c));
    }
    let norm = -u[0] * u[0] + u[1] * u[1] + u[2] * u[2] + u[3] * u[3] + 1.0;
    if norm.abs() > 1e-10 {
        return Err(GeometryError::NotNormalized(norm));
    }
    Ok(())
}

pub fn acoustical_metric_pair(thermo: &ThermoEval, u: &[f64; 4]) -> Result<(Metric4, Metric4), GeometryError> {
    check_inputs(thermo.c, u)?;
    Ok((metric(thermo.c, u), inverse_metric(thermo.c, u)))
}

/// `det g = -c⁻⁶`.
pub fn det_g(thermo: &ThermoEval) -> f64 {
    -thermo.c.powi(-6)
}

/// The closed form together with a numeric 4x4 determinant, which must agree
/// to 1e-10 relative.
pub fn det_g_checked(thermo: &ThermoEval, u: &[f64; 4]) -> Result<(f64, f64), GeometryError> {
    let (g, _) = acoustical_metric_pair(thermo, u)?;
    let formula = det_g(thermo);
    let numeric = det4(&g);
    if ((numeric - formula) / formula).abs() > 1e-10 {
        return Err(GeometryError::DetMismatch { formula, numeric });
    }
    Ok((formula, numeric))
}

/// `Π^{αβ} = η^{αβ} + u^α u^β`.
pub fn projector(u: &[f64; 4]) -> [[f64; 4]; 4] {
    std::array::from_fn(|a| std::array::from_fn(|b| u[a] * u[b] + if a == b { ETA[a] } else { 0.0 }))
}

/// `(G⁻¹)^{ij} = δ^{ij} - u^i u^j / (u⁰)²`.
pub fn spatial_metric_g(u: &[f64; 4]) -> SpatialInvMetric {
    let u0sq = u[0] * u[0];
    std::array::from_fn(|i| std::array::from_fn(|j| if i == j { 1.0 } else { 0.0 } - u[i + 1] * u[j + 1] / u0sq))
}

/// Eigenvalues of a symmetric 3x3 matrix in ascending order.
pub fn sym3_eigenvalues(m: &SpatialInvMetric) -> [f64; 3] {
    let p1 = m[0][1].powi(2) + m[0][2].powi(2) + m[1][2].powi(2);
    let q = (m[0][0] + m[1][1] + m[2][2]) / 3.0;
    if p1 == 0.0 {
        let mut d = [m[0][0], m[1][1], m[2][2]];
        d.sort_by(|a, b| a.total_cmp(b));
        return d;
    }
    let p2 = (m[0][0] - q).powi(2) + (m[1][1] - q).powi(2) + (m[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let b: [[f64; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|j| (m[i][j] - if i == j { q } else { 0.0 }) / p));
    let det_b = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1]) - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
        + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
    let r = (det_b / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let e1 = q + 2.0 * p * phi.cos();
    let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    let e2 = 3.0 * q - e1 - e3;
    let mut e = [e1, e2, e3];
    e.sort_by(|a, b| a.total_cmp(b));
    e
}

/// Characteristic speeds at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CflSpeeds {
    /// Largest coordinate speed of the sound cone over spatial directions.
    pub sound: f64,
    /// `max_a |u^a / u⁰|`.
    pub transport: f64,
}

impl CflSpeeds {
    pub fn cfl(&self) -> f64 {
        self.sound.max(self.transport)
    }
}

/// Root scan of `g⁻¹(ℓ, ℓ) = 0` for covectors `ℓ = (λ, ξ)` with unit `ξ`. The
/// scan covers a Fibonacci sphere plus `±u/|u|`, where the maximum is attained.
pub fn cfl_speed(c: f64, u: &[f64; 4]) -> CflSpeeds {
    let gi = inverse_metric(c, u);
    let speed = |xi: [f64; 3]| -> f64 {
        let a = gi[0][0];
        let b: f64 = (0..3).map(|i| gi[0][i + 1] * xi[i]).sum();
        let cc: f64 = (0..3).map(|i| (0..3).map(|j| gi[i + 1][j + 1] * xi[i] * xi[j]).sum::<f64>()).sum();
        let disc = (b * b - a * cc).max(0.0).sqrt();
        let r1 = (-b + disc) / a;
        let r2 = (-b - disc) / a;
        r1.abs().max(r2.abs())
    };
    let mut best = 0.0f64;
    let m = 64;
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    for k in 0..m {
        let z = 1.0 - 2.0 * (k as f64 + 0.5) / m as f64;
        let r = (1.0 - z * z).sqrt();
        let ph = golden * k as f64;
        best = best.max(speed([r * ph.cos(), r * ph.sin(), z]));
    }
    let vn = (u[1] * u[1] + u[2] * u[2] + u[3] * u[3]).sqrt();
    if vn > 0.0 {
        let d = [u[1] / vn, u[2] / vn, u[3] / vn];
        best = best.max(speed(d)).max(speed(d.map(|x| -x)));
    }
    let transport = (1..4).map(|a| (u[a] / u[0]).abs()).fold(0.0, f64::max);
    CflSpeeds { sound: best, transport }
}

/// Christoffel symbols and metric derivatives on the grid.
#[derive(Debug, Clone)]
pub struct ChristoffelField {
    pub gamma: Vec<Christoffel4>,
    /// `dg[α][β][γ] = ∂_α g_{βγ}` from spectral differentiation of `g` in
    /// space and the closure in time.
    pub dg: Vec<Christoffel4>,
    pub g: Vec<Metric4>,
}

/// `∂_α g_{βγ}` at a point by the chain rule through `(h, s, u)`; the
/// derivative along `α` is carried as the first jet coefficient.
pub(crate) fn metric_chain_derivative(state: &ExtendedState, i: usize) -> Christoffel4 {
    let b = state.base_jets(i);
    let eos = state.eos();
    std::array::from_fn(|al| {
        let h = Jet::variable(b.h.value(), b.dh[al].value());
        let s = Jet::variable(b.s.value(), b.sl[al].value());
        let u: [Jet; 4] = std::array::from_fn(|k| Jet::variable(b.u[k].value(), b.du[al][k].value()));
        let th = eos.thermo(h, s).expect("checked during completion");
        metric(th.c, &u).map(|r| r.map(|x| x.coeff(1)))
    })
}

pub fn christoffel(state: &ExtendedState) -> Result<ChristoffelField, GeometryError> {
    let grid = state.grid();
    let n = grid.len();
    let eos = state.eos();
    // g components with their time derivative.
    let comps: Vec<(usize, usize)> = (0..4).flat_map(|a| (a..4).map(move |b| (a, b))).collect();
    let gj: Vec<JetField> = {
        let per_point: Vec<[[Jet; 4]; 4]> = (0..n)
            .map(|i| {
                let b = state.base_jets(i);
                let th = eos.thermo(b.h.truncate(1), b.s.truncate(1)).expect("checked during completion");
                metric(th.c, &b.u.map(|x| x.truncate(1)))
            })
            .collect();
        comps
            .iter()
            .map(|&(a, b)| JetField {
                coeffs: (0..=1).map(|k| per_point.iter().map(|m| m[a][b].coeff(k)).collect()).collect(),
            })
            .collect()
    };
    let spatial: Vec<[Vec<f64>; 3]> = gj.iter().map(|f| std::array::from_fn(|a| grid.deriv(&f.coeffs[0], a))).collect();
    let slot = |a: usize, b: usize| comps.iter().position(|&p| p == (a.min(b), a.max(b))).expect("component");
    let mut gamma = Vec::with_capacity(n);
    let mut dgs = Vec::with_capacity(n);
    let mut gs = Vec::with_capacity(n);
    for i in 0..n {
        let g: Metric4 = std::array::from_fn(|a| std::array::from_fn(|b| gj[slot(a, b)].coeffs[0][i]));
        let dg: Christoffel4 = std::array::from_fn(|al| {
            std::array::from_fn(|a| {
                std::array::from_fn(|b| {
                    let k = slot(a, b);
                    if al == 0 {
                        gj[k].coeffs[1][i]
                    } else {
                        spatial[k][al - 1][i]
                    }
                })
            })
        });
        let u = state.base_jets(i).u.map(|x| x.value());
        let th = eos.eval_thermo(state.closure.h.coeffs[0][i], state.closure.s.coeffs[0][i]).expect("checked");
        let gi = inverse_metric(th.c, &u);
        let gm: Christoffel4 = std::array::from_fn(|a| {
            std::array::from_fn(|c| {
                std::array::from_fn(|b| {
                    0.5 * (0..4).map(|d| gi[c][d] * (dg[a][d][b] + dg[b][a][d] - dg[d][a][b])).sum::<f64>()
                })
            })
        });
        gamma.push(gm);
        dgs.push(dg);
        gs.push(g);
    }
    Ok(ChristoffelField { gamma, dg: dgs, g: gs })
}

/// `max |∂_α g_{βγ} - Γ_α^λ_β g_{λγ} - Γ_α^λ_γ g_{βλ}|` with the chain-rule
/// metric derivative on the left; it vanishes under refinement.
pub fn metric_compatibility_residual(state: &ExtendedState, cf: &ChristoffelField) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..state.len() {
        let dg = metric_chain_derivative(state, i);
        let gm = &cf.gamma[i];
        let g = &cf.g[i];
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    let conn: f64 = (0..4).map(|l| gm[a][l][b] * g[l][c] + gm[a][l][c] * g[b][l]).sum();
                    worst = worst.max((dg[a][b][c] - conn).abs());
                }
            }
        }
    }
    worst
}

/// Both evaluations of `□_g φ` and their discrepancy.
#[derive(Debug, Clone)]
pub struct BoxReport {
    pub divergence: Vec<f64>,
    pub lemma: Vec<f64>,
    pub discrepancy: f64,
}

/// `□_g φ` in divergence form and by the solution-adapted expansion. `phi`
/// must carry time jets of order ≥ 2.
pub fn box_g_scalar(state: &ExtendedState, phi: &JetField) -> Result<BoxReport, GeometryError> {
    if phi.order() < 2 {
        return Err(GeometryError::MissingTimeDerivatives { need: 2, have: phi.order() });
    }
    let grid = state.grid();
    let g = &**grid;
    let n = grid.len();
    let eos = state.eos();
    let dphi: [JetField; 3] = std::array::from_fn(|a| phi.deriv_to(g, a, 1));
    let grad_at = |i: usize| -> [Jet; 4] { [phi.at(i).truncate(2).dt(), dphi[0].at(i), dphi[1].at(i), dphi[2].at(i)] };

    // Fluxes and u·∂φ with one time coefficient.
    let [f0, f1, f2, f3, w] = crate::jetfield::map_points(n, |i| {
        let b = state.base_jets(i);
        let th = eos.thermo(b.h, b.s)?;
        let d = grad_at(i);
        let f = wave_flux(th.c, &b.u, &d);
        let w = b.u[0] * d[0] + b.u[1] * d[1] + b.u[2] * d[2] + b.u[3] * d[3];
        Ok::<_, GeometryError>([f[0].truncate(1), f[1], f[2], f[3], w.truncate(1)])
    })?;
    let fa = [f1, f2, f3];
    let div_a: [Vec<f64>; 3] = std::array::from_fn(|a| g.deriv(&fa[a].coeffs[0], a));
    let dw: [Vec<f64>; 3] = std::array::from_fn(|a| g.deriv(&w.coeffs[0], a));
    let lap: [Vec<f64>; 3] = std::array::from_fn(|a| g.deriv(&dphi[a].coeffs[0], a));

    let [divergence, lemma] = map_values(n, |i| {
        let b = state.base_jets(i);
        let th = eos.eval_thermo(b.h.value(), b.s.value())?;
        let c = th.c;
        let c2 = th.c2;
        let u = b.u.map(|x| x.value());
        let d = grad_at(i).map(|x| x.value());
        let dh = b.dh.map(|x| x.value());
        let su = lower(&b.sl.map(|x| x.value()));
        let div_form = c * c * c * (f0.coeffs[1][i] + div_a[0][i] + div_a[1][i] + div_a[2][i]);

        let du = b.du.map(|r| r.map(|x| x.value()));
        let div_u = du[0][0] + du[1][1] + du[2][2] + du[3][3];
        let udphi: f64 = (0..4).map(|k| u[k] * d[k]).sum();
        let dwv = [w.coeffs[1][i], dw[0][i], dw[1][i], dw[2][i]];
        let u_dw: f64 = (0..4).map(|k| u[k] * dwv[k]).sum();
        let dtt = 2.0 * phi.coeffs[2][i];
        let box_eta = -dtt + lap[0][i] + lap[1][i] + lap[2][i];
        let udh: f64 = (0..4).map(|k| u[k] * dh[k]).sum();
        let gi = inverse_metric(c, &u);
        let g_dh_dphi: f64 = (0..4).map(|k| (0..4).map(|l| gi[k][l] * dh[k] * d[l]).sum::<f64>()).sum();
        let s_dphi: f64 = (0..4).map(|k| su[k] * d[k]).sum();
        let lem = (c2 - 1.0) * u_dw + c2 * box_eta + (c2 - 1.0) * div_u * udphi + 2.0 / c * th.c_h * udh * udphi
            - th.c_h / c * g_dh_dphi
            - c * th.c_s * s_dphi;
        Ok::<_, GeometryError>([div_form, lem])
    })?;
    let discrepancy = divergence.iter().zip(&lemma).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(BoxReport {
        divergence,
        lemma,
        discrepancy,
    })
}

impl From<crate::eos::EosError> for GeometryError {
    fn from(e: crate::eos::EosError) -> Self {
        GeometryError::Fluid(FluidError::Eos(e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eos::EosParams;

    fn thermo_with_c(c0: f64) -> ThermoEval {
        EosParams::default_constant_c(c0).eval_thermo(0.0, 0.0).unwrap()
    }

    #[test]
    fn rest_metric_half_speed() {
        let (g, gi) = acoustical_metric_pair(&thermo_with_c(0.5), &[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(g, [[-1.0, 0.0, 0.0, 0.0], [0.0, 4.0, 0.0, 0.0], [0.0, 0.0, 4.0, 0.0], [0.0, 0.0, 0.0, 4.0]]);
        assert_eq!(gi[0][0], -1.0);
        assert_eq!(gi[1][1], 0.25);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(acoustical_metric_pair(&thermo_with_c(0.5), &[1.0, 0.1, 0.0, 0.0]).is_err());
        let mut t = thermo_with_c(0.5);
        t.c = 1.2;
        assert!(acoustical_metric_pair(&t, &[1.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn eigenvalues_of_diagonal_and_rank_one_update() {
        let e = sym3_eigenvalues(&[[3.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 2.0]]);
        assert_eq!(e, [1.0, 2.0, 3.0]);
        let u = [2f64.sqrt(), 1.0, 0.0, 0.0];
        let e = sym3_eigenvalues(&spatial_metric_g(&u));
        assert!((e[0] - 0.5).abs() < 1e-14 && (e[2] - 1.0).abs() < 1e-14);
    }
}
