//! Fluid states, the time-derivative closure of the first-order system, and
//! the derived variables `u⁰, S, ϖ, 𝒞, 𝒟`.
//!
//! Time derivatives never come from differencing in time. The first-order
//! system is solved pointwise for `∂_t(h, u, s)`; repeating the solve on
//! time jets gives higher time derivatives, so every time component below is
//! exact up to the spatial discretization.

use std::sync::Arc;

use thiserror::Error;

use crate::eos::{EosError, EosParams, HyperbolicityRegion, Thermo};
use crate::grid::{GridError, ScalarField, TorusGrid};
use crate::jet::{Jet, Scalar};
use crate::jetfield::{map_points, map_values, JetField};
use crate::tensor::{eps_vec, lower, lu_solve, ETA};

#[derive(Debug, Error)]
pub enum FluidError {
    #[error("state leaves the hyperbolicity region at {count} grid points (first: {first:?}) at t = {time}")]
    RegionExit {
        count: usize,
        first: Vec<(usize, [f64; 5])>,
        time: f64,
    },
    #[error(transparent)]
    Eos(#[from] EosError),
    #[error("A0 is singular at grid point {0}")]
    SingularA0(usize),
    #[error("closure of order {have} is too low, need {need}")]
    MissingClosure { have: usize, need: usize },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Fundamental unknowns `(h, s, u¹, u², u³)` on one grid.
#[derive(Debug, Clone)]
pub struct FluidState {
    pub h: ScalarField,
    pub s: ScalarField,
    pub u: [ScalarField; 3],
    pub eos: Arc<EosParams>,
    pub region: HyperbolicityRegion,
    pub time: f64,
}

impl FluidState {
    pub fn grid(&self) -> &Arc<TorusGrid> {
        self.h.grid()
    }

    pub fn constant(grid: &Arc<TorusGrid>, eos: Arc<EosParams>, region: HyperbolicityRegion, h: f64, s: f64, u: [f64; 3]) -> Self {
        FluidState {
            h: grid.constant(h),
            s: grid.constant(s),
            u: u.map(|v| grid.constant(v)),
            eos,
            region,
            time: 0.0,
        }
    }

    /// `(h, s, u¹, u², u³)` at point `i`.
    #[inline]
    pub fn point(&self, i: usize) -> [f64; 5] {
        [self.h.data[i], self.s.data[i], self.u[0].data[i], self.u[1].data[i], self.u[2].data[i]]
    }

    pub fn u0(&self) -> Vec<f64> {
        (0..self.grid().len())
            .map(|i| {
                let p = self.point(i);
                (1.0 + p[2] * p[2] + p[3] * p[3] + p[4] * p[4]).sqrt()
            })
            .collect()
    }

    /// Region membership of every point; lists up to eight offenders.
    pub fn check_region(&self) -> Result<(), FluidError> {
        let bad: Vec<(usize, [f64; 5])> = (0..self.grid().len())
            .map(|i| (i, self.point(i)))
            .filter(|(_, p)| !self.region.contains(p) || p.iter().any(|v| !v.is_finite()))
            .collect();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(FluidError::RegionExit {
                count: bad.len(),
                first: bad.into_iter().take(8).collect(),
                time: self.time,
            })
        }
    }

    pub fn fields(&self) -> [&ScalarField; 5] {
        [&self.h, &self.s, &self.u[0], &self.u[1], &self.u[2]]
    }

    pub fn with_data(&self, data: [Vec<f64>; 5], time: f64) -> FluidState {
        let g = self.grid();
        let [h, s, u1, u2, u3] = data;
        let mk = |v: Vec<f64>| g.field(v).expect("matching length");
        FluidState {
            h: mk(h),
            s: mk(s),
            u: [mk(u1), mk(u2), mk(u3)],
            eos: Arc::clone(&self.eos),
            region: self.region,
            time,
        }
    }
}

/// `A⁰` over the unknowns `(h, u⁰, u¹, u², u³, s)`.
pub fn a_zero<T: Scalar>(c2: T, q: T, u: &[T; 4]) -> [[T; 6]; 6] {
    let z = T::zero();
    let u0 = u[0];
    let usq = u[1] * u[1] + u[2] * u[2] + u[3] * u[3];
    let mut a = [[z; 6]; 6];
    a[0][0] = u0;
    a[0][1] = c2;
    a[1][0] = usq;
    a[1][1] = u0;
    a[1][5] = q;
    for i in 1..4 {
        a[i + 1][0] = u0 * u[i];
        a[i + 1][i + 1] = u0;
    }
    a[5][5] = u0;
    a
}

/// Solves the first-order system for `∂_t (h, u⁰, u¹, u², u³, s)` given
/// spatial derivatives; `du[a][β] = ∂_a u^β`.
pub fn first_order_rates<T: Scalar>(c2: T, q: T, u: &[T; 4], dh: &[T; 3], ds: &[T; 3], du: &[[T; 4]; 3]) -> Option<[T; 6]> {
    let adv = |f: &dyn Fn(usize) -> T| u[1] * f(0) + u[2] * f(1) + u[3] * f(2);
    let div = du[0][1] + du[1][2] + du[2][3];
    let mut r = [T::zero(); 6];
    r[0] = -(adv(&|a| dh[a]) + c2 * div);
    for beta in 0..4 {
        let transport = adv(&|a| du[a][beta]);
        // Π^{βa} ∂_a h and η^{βa} ∂_a s over spatial a.
        let mut pi_dh = u[beta] * adv(&|a| dh[a]);
        let mut eta_ds = T::zero();
        if beta > 0 {
            pi_dh = pi_dh + dh[beta - 1];
            eta_ds = ds[beta - 1];
        }
        r[beta + 1] = -(transport + pi_dh - q * eta_ds);
    }
    r[5] = -adv(&|a| ds[a]);
    lu_solve(a_zero(c2, q, u), r)
}

/// Shared pointwise step: builds `u⁰` from the constraint and `∂_a u⁰` by the
/// chain rule, then solves the system.
pub(crate) fn pointwise_rates<T: Scalar>(
    eos: &EosParams,
    h: T,
    s: T,
    ua: [T; 3],
    dh: [T; 3],
    ds: [T; 3],
    dua: [[T; 3]; 3],
) -> Result<Option<[T; 6]>, EosError> {
    let u0 = (ua[0] * ua[0] + ua[1] * ua[1] + ua[2] * ua[2] + 1.0).sqrt();
    let u = [u0, ua[0], ua[1], ua[2]];
    let du: [[T; 4]; 3] = std::array::from_fn(|a| {
        let d0 = (ua[0] * dua[a][0] + ua[1] * dua[a][1] + ua[2] * dua[a][2]) / u0;
        [d0, dua[a][0], dua[a][1], dua[a][2]]
    });
    let (c2, q) = eos.sound_and_q(h, s)?;
    Ok(first_order_rates(c2, q, &u, &dh, &ds, &du))
}

/// Time derivatives of the unknowns, with `u⁰` rate from the `A⁰` solve.
#[derive(Debug, Clone)]
pub struct Rates {
    pub h: Vec<f64>,
    pub s: Vec<f64>,
    pub u: [Vec<f64>; 3],
    pub u0: Vec<f64>,
}

fn spatial_grads(grid: &TorusGrid, f: &[f64]) -> [Vec<f64>; 3] {
    std::array::from_fn(|a| grid.deriv(f, a))
}

/// `∂_t` of the unknowns from the first-order system.
pub fn rhs(raw: &FluidState) -> Result<Rates, FluidError> {
    raw.check_region()?;
    let g = raw.grid();
    let dh = spatial_grads(g, &raw.h.data);
    let ds = spatial_grads(g, &raw.s.data);
    let du: [[Vec<f64>; 3]; 3] = std::array::from_fn(|b| spatial_grads(g, &raw.u[b].data));
    let eos = &*raw.eos;
    let [h, s, u1, u2, u3, u0] = map_values(g.len(), |i| {
        let x = raw.point(i);
        let r = pointwise_rates::<f64>(
            eos,
            x[0],
            x[1],
            [x[2], x[3], x[4]],
            [dh[0][i], dh[1][i], dh[2][i]],
            [ds[0][i], ds[1][i], ds[2][i]],
            std::array::from_fn(|a| std::array::from_fn(|b| du[b][a][i])),
        )?
        .ok_or(FluidError::SingularA0(i))?;
        Ok::<_, FluidError>([r[0], r[5], r[2], r[3], r[4], r[1]])
    })?;
    Ok(Rates { h, s, u: [u1, u2, u3], u0 })
}

/// Time jets of the unknowns and of their spatial gradients.
#[derive(Debug, Clone)]
pub struct Closure {
    pub order: usize,
    pub h: JetField,
    pub s: JetField,
    /// `u^a`, a = 1..3.
    pub u: [JetField; 3],
    /// `dh[a] = ∂_a h`.
    pub dh: [JetField; 3],
    pub ds: [JetField; 3],
    /// `du[a][b] = ∂_a u^b`.
    pub du: [[JetField; 3]; 3],
}

impl Closure {
    /// The first-level rates `∂_t (h, s, u¹, u², u³)`.
    pub fn first_rates(&self) -> [Vec<f64>; 5] {
        let c1 = |f: &JetField| f.coeffs[1].clone();
        [c1(&self.h), c1(&self.s), c1(&self.u[0]), c1(&self.u[1]), c1(&self.u[2])]
    }
}

/// Builds time jets of `(h, s, u^a)` up to `order` by Taylor-mode recursion
/// through the pointwise solve.
pub fn time_derivative_closure(raw: &FluidState, order: usize) -> Result<Closure, FluidError> {
    assert!((1..=crate::jet::MAX_ORDER).contains(&order));
    raw.check_region()?;
    let g = raw.grid();
    let npts = g.len();
    let eos = &*raw.eos;
    let mut base: [JetField; 5] = raw.fields().map(|f| JetField::from_value(f.data.clone()));
    let mut grads: [[JetField; 3]; 5] = std::array::from_fn(|_| std::array::from_fn(|_| JetField { coeffs: Vec::new() }));

    for k in 0..=order {
        for (f, gr) in base.iter().zip(grads.iter_mut()) {
            for (a, ga) in gr.iter_mut().enumerate() {
                ga.coeffs.push(g.deriv(&f.coeffs[k], a));
            }
        }
        if k == order {
            break;
        }
        let next: [Vec<f64>; 5] = if k == 0 {
            map_values(npts, |i| {
                let v = |f: &JetField| f.coeffs[0][i];
                let r = pointwise_rates::<f64>(
                    eos,
                    v(&base[0]),
                    v(&base[1]),
                    [v(&base[2]), v(&base[3]), v(&base[4])],
                    std::array::from_fn(|a| v(&grads[0][a])),
                    std::array::from_fn(|a| v(&grads[1][a])),
                    std::array::from_fn(|a| std::array::from_fn(|b| v(&grads[2 + b][a]))),
                )?
                .ok_or(FluidError::SingularA0(i))?;
                Ok::<_, FluidError>([r[0], r[5], r[2], r[3], r[4]])
            })?
        } else {
            let scale = 1.0 / (k + 1) as f64;
            map_values(npts, |i| {
                let r = pointwise_rates::<Jet>(
                    eos,
                    base[0].at(i),
                    base[1].at(i),
                    [base[2].at(i), base[3].at(i), base[4].at(i)],
                    std::array::from_fn(|a| grads[0][a].at(i)),
                    std::array::from_fn(|a| grads[1][a].at(i)),
                    std::array::from_fn(|a| std::array::from_fn(|b| grads[2 + b][a].at(i))),
                )?
                .ok_or(FluidError::SingularA0(i))?;
                let pick = |j: usize| r[j].coeff(k) * scale;
                Ok::<_, FluidError>([pick(0), pick(5), pick(2), pick(3), pick(4)])
            })?
        };
        for (f, c) in base.iter_mut().zip(next) {
            f.coeffs.push(c);
        }
    }
    let [h, s, u1, u2, u3] = base;
    let [dh, ds, du1, du2, du3] = grads;
    // Re-index du[b][a] = ∂_a u^b into du[a][b].
    let by_comp = [du1, du2, du3];
    let du: [[JetField; 3]; 3] = std::array::from_fn(|a| std::array::from_fn(|b| by_comp[b][a].clone()));
    Ok(Closure {
        order,
        h,
        s,
        u: [u1, u2, u3],
        dh,
        ds,
        du,
    })
}

/// Pointwise values of every derived quantity, for residuals and identities.
/// Derivative arrays are `d[α][β] = ∂_α X^β` (or `∂_α X_β` for one-forms).
#[derive(Debug, Clone, Copy)]
pub struct PointData {
    pub th: Thermo<f64>,
    pub u: [f64; 4],
    pub ul: [f64; 4],
    pub du: [[f64; 4]; 4],
    pub dh: [f64; 4],
    pub ds_: [f64; 4],
    /// `∂_α S_β`.
    pub dsl: [[f64; 4]; 4],
    pub w: [f64; 4],
    pub dw: [[f64; 4]; 4],
    pub cv: [f64; 4],
    pub dcv: [[f64; 4]; 4],
    pub dv: f64,
    pub ddv: [f64; 4],
    /// `∂_α (H u_β)`.
    pub dv_hu: [[f64; 4]; 4],
    pub box_h: f64,
    pub box_s: f64,
    pub box_u: [f64; 4],
}

/// Everything derived from a raw state on one time slice.
#[derive(Debug, Clone)]
pub struct ExtendedState {
    pub raw: FluidState,
    pub closure: Closure,
    pub u0: JetField,
    /// `∂_a u⁰` from the chain rule.
    pub du0: [JetField; 3],
    /// `V_δ = H u_δ`.
    pub hu: [JetField; 4],
    /// `∂_a (H u_δ)`, spectral.
    pub dhu: [[JetField; 4]; 3],
    /// `S_0 = ∂_t s`.
    pub s0: JetField,
    /// `∂_a S_β`.
    pub dsl: [[JetField; 4]; 3],
    pub varpi: [JetField; 4],
    pub dvarpi: [[JetField; 4]; 3],
    pub cvar: [JetField; 4],
    pub dcvar: [[JetField; 4]; 3],
    pub dvar: JetField,
    pub ddvar: [JetField; 3],
    /// Divergence-form `□_g` of `(h, s, u⁰, u¹, u², u³)`.
    pub boxes: [Vec<f64>; 6],
}

/// Plain-value jets at one point, with time components from the closure.
pub(crate) struct BaseJets {
    pub h: Jet,
    pub s: Jet,
    pub u: [Jet; 4],
    pub dh: [Jet; 4],
    pub sl: [Jet; 4],
    pub du: [[Jet; 4]; 4],
}

impl ExtendedState {
    pub fn grid(&self) -> &Arc<TorusGrid> {
        self.raw.grid()
    }

    pub fn eos(&self) -> &EosParams {
        &self.raw.eos
    }

    pub fn len(&self) -> usize {
        self.grid().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn base_jets(&self, i: usize) -> BaseJets {
        let c = &self.closure;
        let h = c.h.at(i);
        let s = c.s.at(i);
        let u = [self.u0.at(i), c.u[0].at(i), c.u[1].at(i), c.u[2].at(i)];
        let dh = [h.dt(), c.dh[0].at(i), c.dh[1].at(i), c.dh[2].at(i)];
        let sl = [self.s0.at(i), c.ds[0].at(i), c.ds[1].at(i), c.ds[2].at(i)];
        let du = [
            u.map(|x| x.dt()),
            std::array::from_fn(|b| if b == 0 { self.du0[0].at(i) } else { c.du[0][b - 1].at(i) }),
            std::array::from_fn(|b| if b == 0 { self.du0[1].at(i) } else { c.du[1][b - 1].at(i) }),
            std::array::from_fn(|b| if b == 0 { self.du0[2].at(i) } else { c.du[2][b - 1].at(i) }),
        ];
        BaseJets { h, s, u, dh, sl, du }
    }

    /// Values of every derived quantity at point `i`.
    pub fn point(&self, i: usize) -> PointData {
        let b = self.base_jets(i);
        let v = |j: Jet| j.value();
        let th = self.eos().eval_thermo(b.h.value(), b.s.value()).expect("checked during completion");
        let u = b.u.map(v);
        let time_row = |f: &[JetField; 4]| f.each_ref().map(|x| x.at(i).dt().value());
        let spatial = |d: &[[JetField; 4]; 3], first: [f64; 4]| -> [[f64; 4]; 4] {
            [first, d[0].each_ref().map(|x| x.coeffs[0][i]), d[1].each_ref().map(|x| x.coeffs[0][i]), d[2].each_ref().map(|x| x.coeffs[0][i])]
        };
        let sl_row0 = b.sl.map(|x| x.dt().value());
        PointData {
            th,
            u,
            ul: lower(&u),
            du: b.du.map(|r| r.map(v)),
            dh: b.dh.map(v),
            ds_: b.sl.map(v),
            dsl: spatial(&self.dsl, sl_row0),
            w: self.varpi.each_ref().map(|x| x.coeffs[0][i]),
            dw: spatial(&self.dvarpi, time_row(&self.varpi)),
            cv: self.cvar.each_ref().map(|x| x.coeffs[0][i]),
            dcv: spatial(&self.dcvar, time_row(&self.cvar)),
            dv: self.dvar.coeffs[0][i],
            ddv: [
                self.dvar.at(i).dt().value(),
                self.ddvar[0].coeffs[0][i],
                self.ddvar[1].coeffs[0][i],
                self.ddvar[2].coeffs[0][i],
            ],
            dv_hu: spatial(&self.dhu, time_row(&self.hu)),
            box_h: self.boxes[0][i],
            box_s: self.boxes[1][i],
            box_u: [self.boxes[2][i], self.boxes[3][i], self.boxes[4][i], self.boxes[5][i]],
        }
    }

    /// Jets of `∂_λ φ` for `φ ∈ (h, s, u⁰, u¹, u², u³)` at point `i`.
    pub(crate) fn scalar_gradients(b: &BaseJets) -> [[Jet; 4]; 6] {
        let sgrad = [b.s.dt(), b.sl[1], b.sl[2], b.sl[3]];
        let ugrad = |beta: usize| [b.du[0][beta], b.du[1][beta], b.du[2][beta], b.du[3][beta]];
        [b.dh, sgrad, ugrad(0), ugrad(1), ugrad(2), ugrad(3)]
    }

    /// Classification view of the hyperbolic quantities `𝐇`.
    pub fn view_hyperbolic(&self) -> Vec<(String, Vec<f64>)> {
        let c = &self.closure;
        let mut out = vec![("h".to_string(), c.h.value().to_vec()), ("s".to_string(), c.s.value().to_vec())];
        for a in 0..3 {
            out.push((format!("u^{}", a + 1), c.u[a].value().to_vec()));
        }
        for a in 0..3 {
            out.push((format!("d_{} h", a + 1), c.dh[a].value().to_vec()));
        }
        for a in 0..3 {
            for b in 0..3 {
                out.push((format!("d_{} u^{}", a + 1, b + 1), c.du[a][b].value().to_vec()));
            }
        }
        for a in 1..4 {
            out.push((format!("varpi^{a}"), self.varpi[a].value().to_vec()));
        }
        for a in 1..4 {
            out.push((format!("S^{a}"), c.ds[a - 1].value().to_vec()));
        }
        for a in 1..4 {
            out.push((format!("C^{a}"), self.cvar[a].value().to_vec()));
        }
        out.push(("D".to_string(), self.dvar.value().to_vec()));
        out
    }

    /// Classification view of the elliptic quantities `𝐄`: `∂_a ϖ_b, ∂_a S_b`.
    pub fn view_elliptic(&self) -> Vec<(String, Vec<f64>)> {
        let mut out = Vec::new();
        for a in 0..3 {
            for b in 1..4 {
                out.push((format!("d_{} varpi_{b}", a + 1), self.dvarpi[a][b].value().to_vec()));
            }
        }
        for a in 0..3 {
            for b in 1..4 {
                out.push((format!("d_{} S_{b}", a + 1), self.dsl[a][b].value().to_vec()));
            }
        }
        out
    }

    /// Classification view of `𝐀_𝐇` (the pointwise part; the `G⁻¹`
    /// divergences are exposed through the identity suite).
    pub fn view_algebraic_h(&self) -> Vec<(String, Vec<f64>)> {
        let n = self.len();
        let c = &self.closure;
        let mut out = vec![
            ("u^0 - 1".to_string(), self.u0.value().iter().map(|v| v - 1.0).collect()),
            ("varpi^0".to_string(), self.varpi[0].value().to_vec()),
            ("S^0".to_string(), self.s0.value().iter().map(|v| -v).collect()),
            ("C^0".to_string(), self.cvar[0].value().to_vec()),
            ("d_t h".to_string(), c.h.coeffs[1].clone()),
            ("d_t u^0".to_string(), self.u0.coeffs[1].clone()),
        ];
        for a in 0..3 {
            out.push((format!("d_t u^{}", a + 1), c.u[a].coeffs[1].clone()));
        }
        for a in 0..3 {
            out.push((format!("d_{} u^0", a + 1), self.du0[a].value().to_vec()));
        }
        out.push(("d_t s".to_string(), c.s.coeffs[1].clone()));
        debug_assert!(out.iter().all(|(_, v)| v.len() == n));
        out
    }

    /// Classification view of `𝐀_{𝐇,𝐄}`.
    pub fn view_algebraic_he(&self) -> Vec<(String, Vec<f64>)> {
        let n = self.len();
        let mut out = Vec::new();
        for al in 0..4 {
            let wl = self.varpi[al].dt().coeffs[0].iter().map(|v| v * ETA[al]).collect();
            out.push((format!("d_t varpi_{al}"), wl));
        }
        for a in 0..3 {
            out.push((format!("d_{} varpi_0", a + 1), self.dvarpi[a][0].value().iter().map(|v| -v).collect()));
        }
        let st = [self.s0.dt(), self.closure.ds[0].dt(), self.closure.ds[1].dt(), self.closure.ds[2].dt()];
        for (al, f) in st.iter().enumerate() {
            out.push((format!("d_t S_{al}"), f.coeffs[0].clone()));
        }
        for a in 0..3 {
            out.push((format!("d_{} S_0", a + 1), self.dsl[a][0].value().to_vec()));
        }
        let div = |d: &[[JetField; 4]; 3]| -> Vec<f64> { (0..n).map(|i| (0..3).map(|a| d[a][a + 1].coeffs[0][i]).sum()).collect() };
        out.push(("d_b varpi^b".to_string(), div(&self.dvarpi)));
        out.push(("d_b S^b".to_string(), div(&self.dsl)));
        out
    }
}

/// `vort^α(V) = -ε^{αβγδ} u_β ∂_γ V_δ` with `dv[γ][δ] = ∂_γ V_δ`.
pub fn vort<T: Scalar>(u: &[T; 4], dv: &[[T; 4]; 4]) -> [T; 4] {
    let ul = lower(u);
    let w = eps_vec(|b, c, d| ul[b] * dv[c][d]);
    w.map(|x| -x)
}

/// Vorticity of a one-form field given on the grid with its closure-supplied
/// time derivative. `u` and `v` must carry order ≥ 1 jets.
pub fn vort_operator(grid: &TorusGrid, u: &[JetField; 4], v: &[JetField; 4]) -> Result<[Vec<f64>; 4], FluidError> {
    if v.iter().any(|f| f.order() == 0) {
        return Err(FluidError::MissingClosure { have: 0, need: 1 });
    }
    let dv: [[JetField; 4]; 3] = std::array::from_fn(|a| v.each_ref().map(|f| f.deriv_to(grid, a, 0)));
    map_values(grid.len(), |i| {
        let uu = u.each_ref().map(|f| f.coeffs[0][i]);
        let d: [[f64; 4]; 4] = std::array::from_fn(|g| {
            if g == 0 {
                v.each_ref().map(|f| f.at(i).dt().value())
            } else {
                dv[g - 1].each_ref().map(|f| f.coeffs[0][i])
            }
        });
        Ok::<_, FluidError>(vort(&uu, &d))
    })
}

fn grad_jets(grid: &TorusGrid, f: &[JetField; 4], ord: usize) -> [[JetField; 4]; 3] {
    std::array::from_fn(|a| f.each_ref().map(|x| x.deriv_to(grid, a, ord)))
}

/// Builds the extended state with closure order 3.
pub fn complete_state(raw: &FluidState) -> Result<ExtendedState, FluidError> {
    let closure = time_derivative_closure(raw, 3)?;
    let grid = Arc::clone(raw.grid());
    let g = &*grid;
    let n = g.len();
    let eos = &*raw.eos;
    let c = &closure;

    // Stage 1: u⁰, ∂_a u⁰, H u_δ, S_0.
    let [u0, du01, du02, du03, hu0, hu1, hu2, hu3, s0] = map_points(n, |i| {
        let ua = [c.u[0].at(i), c.u[1].at(i), c.u[2].at(i)];
        let u0 = (ua[0] * ua[0] + ua[1] * ua[1] + ua[2] * ua[2] + 1.0).sqrt();
        let du0: [Jet; 3] = std::array::from_fn(|a| (ua[0] * c.du[a][0].at(i) + ua[1] * c.du[a][1].at(i) + ua[2] * c.du[a][2].at(i)) / u0);
        let th = eos.thermo(c.h.at(i), c.s.at(i))?;
        let big_h = th.big_h;
        Ok::<_, FluidError>([
            u0,
            du0[0],
            du0[1],
            du0[2],
            -(big_h * u0),
            big_h * ua[0],
            big_h * ua[1],
            big_h * ua[2],
            c.s.at(i).dt(),
        ])
    })?;
    let du0 = [du01, du02, du03];
    let hu = [hu0, hu1, hu2, hu3];
    let dhu = grad_jets(g, &hu, 2);

    // ∂_a S_b spectral and mirrored; ∂_a S_0 = ∂_t ∂_a s from the closure.
    let mut dsl: [[JetField; 4]; 3] = std::array::from_fn(|a| std::array::from_fn(|_| c.ds[a].dt().truncate(1)));
    for a in 0..3 {
        for b in a..3 {
            let d = c.ds[b].deriv_to(g, a, 1);
            if a != b {
                dsl[b][a + 1] = d.clone();
            }
            dsl[a][b + 1] = d;
        }
    }

    let mut ext = ExtendedState {
        raw: raw.clone(),
        closure: closure.clone(),
        u0,
        du0,
        hu,
        dhu,
        s0,
        dsl,
        varpi: std::array::from_fn(|_| JetField::from_value(vec![0.0; n])),
        dvarpi: std::array::from_fn(|_| std::array::from_fn(|_| JetField::from_value(vec![0.0; n]))),
        cvar: std::array::from_fn(|_| JetField::from_value(vec![0.0; n])),
        dcvar: std::array::from_fn(|_| std::array::from_fn(|_| JetField::from_value(vec![0.0; n]))),
        dvar: JetField::from_value(vec![0.0; n]),
        ddvar: std::array::from_fn(|_| JetField::from_value(vec![0.0; n])),
        boxes: std::array::from_fn(|_| vec![0.0; n]),
    };

    // Stage 2: ϖ = vort(H u_♭).
    let varpi = {
        let e = &ext;
        map_points(n, |i| {
            let b = e.base_jets(i);
            let dv: [[Jet; 4]; 4] = std::array::from_fn(|gm| {
                if gm == 0 {
                    e.hu.each_ref().map(|f| f.at(i).dt())
                } else {
                    e.dhu[gm - 1].each_ref().map(|f| f.at(i))
                }
            });
            Ok::<_, FluidError>(vort(&b.u.map(|x| x.truncate(2)), &dv))
        })?
    };
    ext.dvarpi = grad_jets(g, &varpi, 1);
    ext.varpi = varpi;

    // Stage 3: 𝒞, 𝒟 and the divergence-form wave fluxes.
    let (cd, fluxes) = {
        let e = &ext;
        let cd = map_points(n, |i| {
            let b = e.base_jets(i);
            let th = eos.thermo(b.h, b.s)?;
            let w: [Jet; 4] = e.varpi.each_ref().map(|f| f.at(i));
            let dw: [[Jet; 4]; 4] = std::array::from_fn(|gm| {
                if gm == 0 {
                    w.map(|x| x.dt())
                } else {
                    e.dvarpi[gm - 1].each_ref().map(|f| f.at(i))
                }
            });
            let dsl: [[Jet; 4]; 4] = std::array::from_fn(|gm| {
                if gm == 0 {
                    b.sl.map(|x| x.dt())
                } else {
                    e.dsl[gm - 1].each_ref().map(|f| f.at(i))
                }
            });
            let (cc, dd) = modified_variables(&th, &b.u, &b.dh, &b.sl, &b.du, &w, &dw, &dsl);
            Ok::<_, FluidError>([cc[0], cc[1], cc[2], cc[3], dd])
        })?;
        let fluxes = map_points(n, |i| {
            let b = e.base_jets(i);
            let th = eos.thermo(b.h, b.s)?;
            let grads = ExtendedState::scalar_gradients(&b);
            let mut out = [Jet::cst(0.0); 24];
            for (p, dphi) in grads.iter().enumerate() {
                let f = wave_flux(th.c, &b.u, dphi);
                out[4 * p] = f[0].truncate(1);
                for a in 1..4 {
                    out[4 * p + a] = f[a].truncate(0);
                }
            }
            Ok::<_, FluidError>(out)
        })?;
        (cd, fluxes)
    };
    let [c0, c1, c2, c3, dd] = cd;
    let cvar = [c0, c1, c2, c3];
    ext.dcvar = grad_jets(g, &cvar, 0);
    ext.cvar = cvar;
    ext.ddvar = std::array::from_fn(|a| dd.deriv_to(g, a, 0));
    ext.dvar = dd;

    let flux_div: Vec<[Vec<f64>; 3]> = (0..6)
        .map(|p| std::array::from_fn(|a| g.deriv(&fluxes[4 * p + a + 1].coeffs[0], a)))
        .collect();
    let c3v: Vec<f64> = {
        let e = &ext;
        (0..n)
            .map(|i| {
                let t = e.eos().eval_thermo(e.closure.h.coeffs[0][i], e.closure.s.coeffs[0][i]).expect("checked");
                t.c * t.c * t.c
            })
            .collect()
    };
    ext.boxes = std::array::from_fn(|p| {
        (0..n)
            .map(|i| {
                let dt_f0 = fluxes[4 * p].coeffs[1][i];
                c3v[i] * (dt_f0 + flux_div[p][0][i] + flux_div[p][1][i] + flux_div[p][2][i])
            })
            .collect()
    });
    Ok(ext)
}

/// `F^κ = c⁻¹ η^{κλ} ∂_λ φ + (c⁻¹ - c⁻³) u^κ u^λ ∂_λ φ`, so that
/// `□_g φ = c³ ∂_κ F^κ`.
pub fn wave_flux<T: Scalar>(c: T, u: &[T; 4], dphi: &[T; 4]) -> [T; 4] {
    let ci = c.recip();
    let ci3 = ci * ci * ci;
    let udphi = u[0] * dphi[0] + u[1] * dphi[1] + u[2] * dphi[2] + u[3] * dphi[3];
    std::array::from_fn(|k| ci * dphi[k] * ETA[k] + (ci - ci3) * u[k] * udphi)
}

/// The modified variables `(𝒞^α, 𝒟)` from their defining combinations.
/// `dw[γ][δ] = ∂_γ ϖ^δ`, `dsl[γ][δ] = ∂_γ S_δ`, `du[γ][δ] = ∂_γ u^δ`.
#[allow(clippy::too_many_arguments)]
pub fn modified_variables<T: Scalar>(
    th: &Thermo<T>,
    u: &[T; 4],
    dh: &[T; 4],
    sl: &[T; 4],
    du: &[[T; 4]; 4],
    w: &[T; 4],
    dw: &[[T; 4]; 4],
    dsl: &[[T; 4]; 4],
) -> ([T; 4], T) {
    let ul = lower(u);
    let wl = lower(w);
    let su = lower(sl);
    let ci2 = th.c2.recip();
    let dwl: [[T; 4]; 4] = dw.map(|r| lower(&r));
    let vort_w = vort(u, &dwl);
    let e1 = eps_vec(|b, g, d| ul[b] * dh[g] * wl[d]);
    let div_u = du[0][0] + du[1][1] + du[2][2] + du[3][3];
    let s_dh = su[0] * dh[0] + su[1] * dh[1] + su[2] * dh[2] + su[3] * dh[3];
    let tmt = th.theta - th.theta_h;
    let cc: [T; 4] = std::array::from_fn(|al| {
        // S^κ η^{αλ} ∂_λ u_κ = η^{αα} S^κ ∂_α u_κ.
        let s_du = (0..4).fold(T::zero(), |acc, k| acc + su[k] * du[al][k] * ETA[k]) * ETA[al];
        vort_w[al] + ci2 * e1[al] + tmt * su[al] * div_u + tmt * u[al] * s_dh - tmt * s_du
    });
    let div_s = (0..4).fold(T::zero(), |acc, k| acc + dsl[k][k] * ETA[k]);
    let ni = th.n.recip();
    let dd = ni * div_s + ni * s_dh - ni * ci2 * s_dh;
    (cc, dd)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::eta_dot;

    #[test]
    fn a0_determinant_formula() {
        let u = [0.0, 0.3, -0.2, 0.4];
        let u0 = (1.0f64 + 0.09 + 0.04 + 0.16).sqrt();
        let uu = [u0, u[1], u[2], u[3]];
        let c2 = 0.49;
        let a = a_zero(c2, 0.7, &uu);
        // Expand by the last row, then evaluate the upper 5x5 by elimination.
        let x = lu_solve(a, [1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(x.is_some());
        let usq = 0.29;
        let det = u0.powi(4) * (u0 * u0 - c2 * usq);
        let det_formula = (1.0 + usq).powi(2) * (1.0 + (1.0 - c2) * usq);
        assert!((det - det_formula).abs() < 1e-14);
    }

    #[test]
    fn vorticity_is_orthogonal_to_u() {
        let u0 = (1.0f64 + 0.25 + 0.01).sqrt();
        let u = [u0, 0.5, -0.1, 0.0];
        let dv = [[0.3, -1.2, 0.5, 2.0], [0.1, 0.4, -0.7, 1.1], [1.3, 0.2, 0.9, -0.6], [-0.4, 0.8, 0.05, 0.3]];
        let w = vort(&u, &dv);
        assert!(eta_dot(&w, &u).abs() < 1e-14);
    }
}
