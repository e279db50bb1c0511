//! Null forms, the inhomogeneous terms of the wave-transport-div-curl
//! formulation, pointwise residuals of its nine equations, the identity
//! suite, and refinement studies.

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::fluid::{complete_state, vort, ExtendedState, FluidError, FluidState, PointData};
use crate::geometry::inverse_metric;
use crate::grid::{DerivMode, TorusGrid};
use crate::tensor::{eps_fold, eps_lower, eps_upper, eps_vec, lower, ETA};

#[derive(Debug, Error)]
pub enum StructureError {
    #[error(transparent)]
    Fluid(#[from] FluidError),
    #[error("convergence study needs at least {need} grid sizes, got {have}")]
    TooFewSizes { need: usize, have: usize },
}

/// `𝔔^{(g)}(∂φ, ∂ψ)` and `𝔔_{μν}(∂φ, ∂ψ)` for all `μ, ν`.
pub fn standard_null_forms(g_inv: &[[f64; 4]; 4], dphi: &[f64; 4], dpsi: &[f64; 4]) -> (f64, [[f64; 4]; 4]) {
    let mut qg = 0.0;
    for a in 0..4 {
        for b in 0..4 {
            qg += g_inv[a][b] * dphi[a] * dpsi[b];
        }
    }
    let qmn = std::array::from_fn(|m| std::array::from_fn(|n| dphi[m] * dpsi[n] - dphi[n] * dpsi[m]));
    (qg, qmn)
}

/// A single displayed coefficient whose sign is flipped for fault-injection
/// runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Fault {
    /// `(1 - c²) q` in `𝔏_(h)`.
    LhOneMinusC2Q,
    /// `c² q_{;h}` in `𝔏_(h)`.
    LhC2Qh,
    /// `-c c_{;s}` in `𝔏_(h)`.
    LhCCs,
    /// `c² q_{;s}` in `𝔏_(h)`.
    LhC2Qs,
    /// First line of `𝔔_(u^α)`.
    QuLine1,
    /// `c² u^α {…}` line of `𝔔_(u^α)`.
    QuLine2,
    /// `-(1 + c⁻¹ c_{;h})` line of `𝔔_(u^α)`.
    QuLine3,
}

impl Fault {
    pub const ALL: [Fault; 7] = [
        Fault::LhOneMinusC2Q,
        Fault::LhC2Qh,
        Fault::LhCCs,
        Fault::LhC2Qs,
        Fault::QuLine1,
        Fault::QuLine2,
        Fault::QuLine3,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Fault::LhOneMinusC2Q => "Lh:(1-c^2)q",
            Fault::LhC2Qh => "Lh:c^2q_h",
            Fault::LhCCs => "Lh:-cc_s",
            Fault::LhC2Qs => "Lh:c^2q_s",
            Fault::QuLine1 => "Qu:line1",
            Fault::QuLine2 => "Qu:line2",
            Fault::QuLine3 => "Qu:line3",
        }
    }

    pub fn parse(s: &str) -> Option<Fault> {
        Fault::ALL.into_iter().find(|f| f.label() == s)
    }

    fn sign(fault: Option<Fault>, which: Fault) -> f64 {
        if fault == Some(which) {
            -1.0
        } else {
            1.0
        }
    }
}

/// Pointwise contractions shared by every term.
struct Kin {
    su: [f64; 4],
    sl: [f64; 4],
    ul: [f64; 4],
    wl: [f64; 4],
    /// `∂_κ u_β`.
    dul: [[f64; 4]; 4],
    /// `∂_κ S^β`.
    dsu: [[f64; 4]; 4],
    div_u: f64,
    /// `∂_λ u^κ ∂_κ u^λ`.
    tr_uu: f64,
    div_s: f64,
    u_dh: f64,
    s_dh: f64,
    s_s: f64,
    w_dh: f64,
    w_s: f64,
    g_dh_dh: f64,
    gi: [[f64; 4]; 4],
}

impl Kin {
    fn new(p: &PointData) -> Kin {
        let sl = p.ds_;
        let su = lower(&sl);
        let dul = p.du.map(|r| lower(&r));
        let dsu = p.dsl.map(|r| lower(&r));
        let div_u = (0..4).map(|k| p.du[k][k]).sum();
        let mut tr_uu = 0.0;
        for k in 0..4 {
            for l in 0..4 {
                tr_uu += p.du[l][k] * p.du[k][l];
            }
        }
        let gi = inverse_metric(p.th.c, &p.u);
        let mut g_dh_dh = 0.0;
        for k in 0..4 {
            for l in 0..4 {
                g_dh_dh += gi[k][l] * p.dh[k] * p.dh[l];
            }
        }
        let dot = |a: &[f64; 4], b: &[f64; 4]| (0..4).map(|k| a[k] * b[k]).sum::<f64>();
        Kin {
            su,
            sl,
            ul: p.ul,
            wl: lower(&p.w),
            dul,
            div_s: (0..4).map(|k| dsu[k][k]).sum(),
            dsu,
            div_u,
            tr_uu,
            u_dh: dot(&p.u, &p.dh),
            s_dh: dot(&su, &p.dh),
            s_s: dot(&su, &sl),
            w_dh: dot(&p.w, &p.dh),
            w_s: dot(&p.w, &sl),
            g_dh_dh,
            gi,
        }
    }
}

/// Assembled `𝔔_*` and `𝔏_*` at one point.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct InhomPoint {
    pub q_h: f64,
    pub l_h: f64,
    pub q_u: [f64; 4],
    pub l_u: [f64; 4],
    pub l_s: f64,
    pub q_d: f64,
    pub l_d: f64,
    pub q_c: [f64; 4],
    pub l_c: [f64; 4],
}

pub fn inhomogeneous_at(p: &PointData, fault: Option<Fault>) -> InhomPoint {
    let k = Kin::new(p);
    let th = &p.th;
    let (c, c2) = (th.c, th.c2);
    let ci = 1.0 / c;
    let ci2 = 1.0 / c2;
    let big_h = th.big_h;
    let n = th.n;
    let q = th.q;
    let tmt = th.theta - th.theta_h;
    let u = &p.u;
    let sg = |f: Fault| Fault::sign(fault, f);

    let q_h = -ci * th.c_h * k.g_dh_dh + c2 * (k.div_u * k.div_u - k.tr_uu);
    let l_h = (sg(Fault::LhOneMinusC2Q) * (1.0 - c2) * q + sg(Fault::LhC2Qh) * c2 * th.q_h - sg(Fault::LhCCs) * c * th.c_s) * k.s_dh
        + sg(Fault::LhC2Qs) * c2 * th.q_s * k.s_s;

    let q_u: [f64; 4] = std::array::from_fn(|al| {
        let l1 = ETA[al] * (k.div_u * p.dh[al] - (0..4).map(|kk| p.du[al][kk] * p.dh[kk]).sum::<f64>());
        let l2 = c2 * u[al] * (k.tr_uu - k.div_u * k.div_u);
        let mut g_dh_du = 0.0;
        for kk in 0..4 {
            for l in 0..4 {
                g_dh_du += k.gi[kk][l] * p.dh[kk] * p.du[l][al];
            }
        }
        let l3 = -(1.0 + ci * th.c_h) * g_dh_du;
        sg(Fault::QuLine1) * l1 + sg(Fault::QuLine2) * l2 + sg(Fault::QuLine3) * l3
    });

    let e_du_w = eps_vec(|b, g, d| k.dul[b][g] * k.wl[d]);
    let e_u_dh_w = eps_vec(|b, g, d| k.ul[b] * p.dh[g] * k.wl[d]);
    let e_s_u_w = eps_vec(|b, g, d| k.sl[b] * k.ul[g] * k.wl[d]);
    let s_udu: f64 = (0..4).map(|kk| k.su[kk] * (0..4).map(|l| u[l] * k.dul[l][kk]).sum::<f64>()).sum();
    let l_u: [f64; 4] = std::array::from_fn(|al| {
        let s_du_al: f64 = (0..4).map(|kk| k.su[kk] * p.du[kk][al]).sum();
        let s_eta_du: f64 = ETA[al] * (0..4).map(|kk| k.su[kk] * k.dul[al][kk]).sum::<f64>();
        -(c2 / big_h) * e_du_w[al] + (1.0 - c2) / big_h * e_u_dh_w[al] + (1.0 - c2) * q / big_h * e_s_u_w[al]
            + (q - c * th.c_s) * s_du_al
            + q * (c2 - 1.0) * u[al] * s_udu
            + (c2 * q - tmt * c2 / big_h) * s_eta_du
            + (2.0 * ci * th.c_h * q + 2.0 * ci * th.c_s - th.q_h) * k.su[al] * k.u_dh
            + k.su[al] * (tmt * c2 / big_h - q) * k.div_u
            + tmt * c2 / big_h * u[al] * k.s_dh
    });

    let l_s = (1.0 - c2 - c * th.c_h) * k.s_dh - c * th.c_s * k.s_s;

    let q_d = ci2 / n
        * (0..4)
            .map(|kk| k.su[kk] * ((0..4).map(|l| p.du[kk][l] * p.dh[l]).sum::<f64>() - k.div_u * p.dh[kk]))
            .sum::<f64>();
    let s_s_du: f64 = (0..4).map(|a| (0..4).map(|b| k.su[a] * k.su[b] * k.dul[a][b]).sum::<f64>()).sum();
    let l_d = (1.0 - ci2) / (n * big_h) * eps_fold(|a, b, g, d| k.sl[a] * k.ul[b] * p.dh[g] * k.wl[d])
        + 1.0 / (n * big_h) * eps_fold(|a, b, g, d| k.sl[a] * k.dul[b][g] * k.wl[d])
        + s_s_du / n * (tmt / big_h - 2.0 * q)
        + k.s_s / n * (-tmt / big_h + 2.0 * ci * th.c_s - c2 * th.q_h + q) * k.div_u;

    let thh_th = th.theta_hh - th.theta_h;
    let ths_ts = th.theta_hs - th.theta_s;
    let w_du: [f64; 4] = std::array::from_fn(|d| (0..4).map(|kk| p.w[kk] * k.dul[d][kk]).sum());
    let e_c2 = eps_vec(|b, g, d| k.ul[b] * p.dh[g] * w_du[d]);
    let e_c3 = eps_vec(|b, g, d| {
        k.ul[b] * k.wl[d] * (k.div_u * p.dh[g] - (0..4).map(|kk| p.du[g][kk] * p.dh[kk]).sum::<f64>())
    });
    let e_u_s_w = eps_vec(|b, g, d| k.ul[b] * k.sl[g] * k.wl[d]);
    let e_u_s_wdu = eps_vec(|b, g, d| k.ul[b] * k.sl[g] * w_du[d]);
    let e_s_dh_w = eps_vec(|b, g, d| k.sl[b] * p.dh[g] * k.wl[d]);
    let f_s_u_dh_w = eps_fold(|a, b, g, d| k.sl[a] * k.ul[b] * p.dh[g] * k.wl[d]);
    let q_c: [f64; 4] = std::array::from_fn(|al| {
        let c1 = -ci2 * eps_fold(|kk, b, g, d| p.du[kk][al] * k.ul[b] * p.dh[g] * k.wl[d]);
        let c2t = (ci2 + 2.0) * e_c2[al];
        let c3 = ci2 * e_c3[al];
        let mut c4 = 0.0;
        for kk in 0..4 {
            for b in 0..4 {
                c4 += u[kk] * k.su[b] * (p.dh[kk] * k.dul[al][b] - p.dh[al] * k.dul[kk][b]);
            }
        }
        let c4 = (thh_th + ci2 * tmt) * ETA[al] * c4;
        let mut c5 = 0.0;
        for kk in 0..4 {
            for l in 0..4 {
                c5 += k.su[kk] * u[l] * (p.du[kk][al] * p.dh[l] - p.du[l][al] * p.dh[kk]);
            }
        }
        let c5 = -tmt * c5;
        let mut c6 = 0.0;
        for kk in 0..4 {
            // The η part enters twice; with a single copy the equation fails
            // whenever S and ∂u are both nonzero.
            let proj = if kk == al { 2.0 * ETA[al] } else { 0.0 } + u[al] * u[kk];
            for b in 0..4 {
                let inner = k.dul[kk][b] * k.div_u - (0..4).map(|l| k.dul[l][b] * p.du[kk][l]).sum::<f64>();
                c6 += proj * k.su[b] * inner;
            }
        }
        let c6 = -tmt * c6;
        let c7 = -tmt * k.su[al] * (k.tr_uu - k.div_u * k.div_u);
        let c8 = -tmt
            * (0..4)
                .map(|kk| k.su[kk] * (p.du[kk][al] * k.div_u - (0..4).map(|l| p.du[l][al] * p.du[kk][l]).sum::<f64>()))
                .sum::<f64>();
        let c9 = k.su[al] * (-ci2 * thh_th - ci2 * ci2 * tmt) * k.g_dh_dh;
        c1 + c2t + c3 + c4 + c5 + c6 + c7 + c8 + c9
    });
    let l_c: [f64; 4] = std::array::from_fn(|al| {
        let u_du_al: f64 = (0..4).map(|l| u[l] * p.du[l][al]).sum();
        2.0 * q / big_h * k.w_s * p.w[al] - 2.0 / big_h * p.w[al] * k.w_dh
            + 2.0 * ci2 * ci * th.c_s * e_u_s_w[al] * k.u_dh
            - 2.0 * q * e_u_s_wdu[al]
            - q * e_s_u_w[al] * k.div_u
            + tmt / big_h * eps_fold(|kk, b, g, d| p.du[kk][al] * k.sl[b] * k.ul[g] * k.wl[d])
            + ci2 * q * e_s_dh_w[al]
            - ci2 * q * u[al] * f_s_u_dh_w
            - tmt * q * k.s_s * u_du_al
            + u[al] * k.s_s * (-tmt * q + ths_ts) * k.u_dh
            + k.su[al] * (-ths_ts + tmt * th.q_h) * k.s_dh
            + k.s_s * (thh_th * q + ths_ts + tmt * q * ci2 - tmt * th.q_h) * ETA[al] * p.dh[al]
    });

    InhomPoint {
        q_h,
        l_h,
        q_u,
        l_u,
        l_s,
        q_d,
        l_d,
        q_c,
        l_c,
    }
}

/// Grid fields of every `𝔔_*` and `𝔏_*`.
#[derive(Debug, Clone)]
pub struct NullFormSet {
    pub points: Vec<InhomPoint>,
}

pub fn assemble_inhomogeneous(state: &ExtendedState, fault: Option<Fault>) -> NullFormSet {
    use rayon::prelude::*;
    let points = (0..state.len()).into_par_iter().map(|i| inhomogeneous_at(&state.point(i), fault)).collect();
    NullFormSet { points }
}

/// Labels of the nine equations, in report order.
pub const EQUATIONS: [&str; 9] = [
    "wave-h",
    "wave-u",
    "wave-s",
    "transport-S",
    "transport-varpi",
    "transport-D",
    "curl-S",
    "div-varpi",
    "transport-C",
];

/// Pointwise residuals; vector equations keep all four components.
#[derive(Debug, Clone, Copy, Default)]
pub struct PointResiduals {
    pub wave_h: f64,
    pub wave_u: [f64; 4],
    pub wave_s: f64,
    pub transport_s: [f64; 4],
    pub transport_w: [f64; 4],
    pub transport_d: f64,
    pub curl_s: [f64; 4],
    pub div_w: f64,
    pub transport_c: [f64; 4],
}

impl PointResiduals {
    /// Components of equation `e` (index into [`EQUATIONS`]).
    pub fn components(&self, e: usize) -> &[f64] {
        match e {
            0 => std::slice::from_ref(&self.wave_h),
            1 => &self.wave_u,
            2 => std::slice::from_ref(&self.wave_s),
            3 => &self.transport_s,
            4 => &self.transport_w,
            5 => std::slice::from_ref(&self.transport_d),
            6 => &self.curl_s,
            7 => std::slice::from_ref(&self.div_w),
            _ => &self.transport_c,
        }
    }
}

/// Right-hand side of the vorticity transport equation.
pub fn vorticity_transport_rhs(p: &PointData) -> [f64; 4] {
    let k = Kin::new(p);
    let tmt = p.th.theta - p.th.theta_h;
    let e = eps_vec(|b, g, d| k.ul[b] * p.dh[g] * k.sl[d]);
    std::array::from_fn(|al| {
        -p.u[al] * k.w_dh + (0..4).map(|kk| p.w[kk] * p.du[kk][al]).sum::<f64>() - p.w[al] * k.div_u
            + tmt * e[al]
            + p.th.q * p.u[al] * k.w_s
    })
}

pub fn residuals_at(p: &PointData, fault: Option<Fault>) -> PointResiduals {
    let k = Kin::new(p);
    let th = &p.th;
    let inh = inhomogeneous_at(p, fault);
    let (c2, n, q, big_h) = (th.c2, th.n, th.q, th.big_h);
    let ci2 = 1.0 / c2;
    let tmt = th.theta - th.theta_h;
    let u = &p.u;
    let transport = |d: &[[f64; 4]; 4], al: usize| (0..4).map(|kk| u[kk] * d[kk][al]).sum::<f64>();

    let wave_h = p.box_h - (n * c2 * q * p.dv + inh.q_h + inh.l_h);
    let wave_u = std::array::from_fn(|al| p.box_u[al] - (-(c2 / big_h) * p.cv[al] + inh.q_u[al] + inh.l_u[al]));
    let wave_s = p.box_s - (c2 * n * p.dv + inh.l_s);
    let transport_s = std::array::from_fn(|al| {
        transport(&k.dsu, al) + ETA[al] * (0..4).map(|kk| k.sl[kk] * p.du[al][kk]).sum::<f64>()
    });
    let tw = vorticity_transport_rhs(p);
    let transport_w = std::array::from_fn(|al| transport(&p.dw, al) - tw[al]);

    let mut dd_rhs = 0.0;
    let mut ds_du = 0.0;
    for kk in 0..4 {
        for l in 0..4 {
            ds_du += k.dsu[l][kk] * p.du[kk][l];
        }
    }
    dd_rhs += 2.0 / n * (k.div_s * k.div_u - ds_du);
    let mut a2 = 0.0;
    for kk in 0..4 {
        a2 += u[kk] * (p.dh[kk] * k.div_s - (0..4).map(|l| p.dh[l] * k.dsu[kk][l]).sum::<f64>());
    }
    dd_rhs += ci2 / n * a2;
    let s_cv: f64 = (0..4).map(|kk| k.sl[kk] * p.cv[kk]).sum();
    dd_rhs += s_cv / (n * big_h) + inh.q_d + inh.l_d;
    let u_ddv: f64 = (0..4).map(|kk| u[kk] * p.ddv[kk]).sum();
    let transport_d = u_ddv - dd_rhs;

    let curl_s = vort(u, &p.dsl);
    let div_w = (0..4).map(|kk| p.dw[kk][kk]).sum::<f64>() + k.w_dh - 2.0 * q * k.w_s;

    let dw_du: [[f64; 4]; 4] = std::array::from_fn(|g| std::array::from_fn(|d| (0..4).map(|kk| p.dw[g][kk] * k.dul[d][kk]).sum()));
    let b4 = eps_vec(|b, g, d| k.ul[b] * dw_du[g][d]);
    let cv_udu: f64 = (0..4).map(|kk| p.cv[kk] * (0..4).map(|l| u[l] * k.dul[l][kk]).sum::<f64>()).sum();
    let transport_c = std::array::from_fn(|al| {
        let mut rhs = (0..4).map(|kk| p.cv[kk] * p.du[kk][al]).sum::<f64>() - 2.0 * p.cv[al] * k.div_u + u[al] * cv_udu
            - 2.0 * b4[al];
        let mut b5 = 0.0;
        for kk in 0..4 {
            let proj = if kk == al { ETA[al] } else { 0.0 } + 2.0 * u[al] * u[kk];
            b5 += proj * (p.dh[kk] * k.div_s - (0..4).map(|l| p.dh[l] * k.dsu[kk][l]).sum::<f64>());
        }
        rhs += -tmt * b5;
        rhs += tmt * n * u[al] * k.u_dh * p.dv;
        rhs += tmt * q * k.su[al] * k.div_s;
        rhs += -tmt * q * ETA[al] * (0..4).map(|kk| k.sl[kk] * k.dsu[al][kk]).sum::<f64>();
        rhs += inh.q_c[al] + inh.l_c[al];
        transport(&p.dcv, al) - rhs
    });

    PointResiduals {
        wave_h,
        wave_u,
        wave_s,
        transport_s,
        transport_w,
        transport_d,
        curl_s,
        div_w,
        transport_c,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualRow {
    pub label: String,
    pub linf: f64,
    pub l2: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualReport {
    pub grid: [usize; 3],
    pub mode: String,
    pub eos: String,
    pub fault: Option<String>,
    pub rows: Vec<ResidualRow>,
}

impl ResidualReport {
    pub fn get(&self, label: &str) -> Option<&ResidualRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn max_linf(&self) -> f64 {
        self.rows.iter().map(|r| r.linf).fold(0.0, f64::max)
    }
}

/// `(L∞, L²)` of a pointwise multi-component residual.
fn norms(grid: &TorusGrid, comps: impl Fn(usize) -> Vec<f64>) -> (f64, f64) {
    let n = grid.len();
    let mut linf = 0.0f64;
    let mut sq = Vec::with_capacity(n);
    for i in 0..n {
        let c = comps(i);
        linf = c.iter().fold(linf, |m, v| m.max(v.abs()));
        sq.push(c.iter().map(|v| v * v).sum::<f64>());
    }
    (linf, grid.integrate(&sq).max(0.0).sqrt())
}

pub fn theorem_residual_fields(state: &ExtendedState, fault: Option<Fault>) -> Vec<PointResiduals> {
    use rayon::prelude::*;
    (0..state.len()).into_par_iter().map(|i| residuals_at(&state.point(i), fault)).collect()
}

pub fn theorem_residuals(state: &ExtendedState, fault: Option<Fault>) -> ResidualReport {
    let fields = theorem_residual_fields(state, fault);
    let grid = state.grid();
    let rows = EQUATIONS
        .iter()
        .enumerate()
        .map(|(e, label)| {
            let (linf, l2) = norms(grid, |i| fields[i].components(e).to_vec());
            ResidualRow {
                label: label.to_string(),
                linf,
                l2,
            }
        })
        .collect();
    ResidualReport {
        grid: grid.dims(),
        mode: grid.mode().to_string(),
        eos: state.eos().tag(),
        fault: fault.map(|f| f.label().to_string()),
        rows,
    }
}

/// Whether an identity holds for any `u` with `u·u = -1` or needs the
/// evolution equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum IdentityClass {
    Kinematic,
    Dynamic,
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityCase {
    pub id: &'static str,
    pub class: IdentityClass,
    /// Pointwise max over components.
    #[serde(skip)]
    pub residual: Vec<f64>,
    pub linf: f64,
    /// Max residual over max term magnitude.
    pub relative: f64,
}

/// Residual components and a magnitude scale at one point.
type IdentityEval = fn(&PointData) -> (Vec<f64>, f64);

fn max_abs(it: impl IntoIterator<Item = f64>) -> f64 {
    it.into_iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn id_u_du(p: &PointData) -> (Vec<f64>, f64) {
    let dul = p.du.map(|r| lower(&r));
    let res = (0..4).map(|a| (0..4).map(|k| p.u[k] * dul[a][k]).sum()).collect();
    let scale = max_abs((0..4).flat_map(|a| (0..4).map(move |k| p.u[k] * dul[a][k])));
    (res, scale)
}

fn id_w_u(p: &PointData) -> (Vec<f64>, f64) {
    let t: Vec<f64> = (0..4).map(|k| p.w[k] * p.ul[k]).collect();
    (vec![t.iter().sum()], max_abs(t))
}

/// Antisymmetric part of `∂V` for `V = H u_♭` decomposed through `vort(V)`.
fn id_v_decomposition(p: &PointData) -> (Vec<f64>, f64) {
    let dv = &p.dv_hu;
    let wv = vort(&p.u, dv);
    let uu = p.u;
    let ul = p.ul;
    let u_dv = |a: usize| (0..4).map(|k| uu[k] * dv[a][k]).sum::<f64>();
    let du_v = |b: usize| (0..4).map(|k| uu[k] * dv[k][b]).sum::<f64>();
    let mut res = Vec::new();
    let mut scale = 0.0f64;
    for a in 0..4 {
        for b in 0..4 {
            let lhs = dv[a][b] - dv[b][a];
            let mut e = 0.0;
            for g in 0..4 {
                for d in 0..4 {
                    e += eps_lower(a, b, g, d) * uu[g] * wv[d];
                }
            }
            let rhs = e + ul[a] * u_dv(b) - ul[b] * u_dv(a) + ul[b] * du_v(a) - ul[a] * du_v(b);
            res.push(lhs - rhs);
            scale = scale.max(lhs.abs()).max(e.abs());
        }
    }
    (res, scale)
}

fn id_norm_square(p: &PointData) -> (Vec<f64>, f64) {
    let dv = &p.dv_hu;
    let pi: [[f64; 4]; 4] = std::array::from_fn(|a| std::array::from_fn(|b| p.u[a] * p.u[b] + if a == b { ETA[a] } else { 0.0 }));
    let mut lhs = 0.0;
    for a in 0..4 {
        for b in 0..4 {
            for g in 0..4 {
                for d in 0..4 {
                    lhs += pi[a][b] * pi[g][d] * (dv[a][g] - dv[g][a]) * (dv[b][d] - dv[d][b]);
                }
            }
        }
    }
    let wl = lower(&vort(&p.u, dv));
    let mut rhs = 0.0;
    for a in 0..4 {
        for b in 0..4 {
            rhs += 2.0 * pi[a][b] * wl[a] * wl[b];
        }
    }
    (vec![lhs - rhs], lhs.abs().max(rhs.abs()))
}

/// `𝓛_u ε^{αβγδ} = -(∂_κ u^κ) ε^{αβγδ}` with constant components of `ε`.
fn id_lie_eps(p: &PointData) -> (Vec<f64>, f64) {
    let du = &p.du;
    let div: f64 = (0..4).map(|k| du[k][k]).sum();
    let mut res = Vec::new();
    let mut scale = 0.0f64;
    for a in 0..4 {
        for b in 0..4 {
            for g in 0..4 {
                for d in 0..4 {
                    let mut lie = 0.0;
                    for k in 0..4 {
                        lie -= eps_upper(k, b, g, d) * du[k][a]
                            + eps_upper(a, k, g, d) * du[k][b]
                            + eps_upper(a, b, k, d) * du[k][g]
                            + eps_upper(a, b, g, k) * du[k][d];
                    }
                    let rhs = -div * eps_upper(a, b, g, d);
                    res.push(lie - rhs);
                    scale = scale.max(lie.abs()).max(rhs.abs());
                }
            }
        }
    }
    (res, scale)
}

fn id_dhu_antisymmetry(p: &PointData) -> (Vec<f64>, f64) {
    let dv = &p.dv_hu;
    let theta = p.th.theta;
    let sl = p.ds_;
    let mut res = Vec::new();
    let mut scale = 0.0f64;
    for a in 0..4 {
        for b in 0..4 {
            let lhs = dv[a][b] - dv[b][a];
            let mut e = 0.0;
            for g in 0..4 {
                for d in 0..4 {
                    e += eps_lower(a, b, g, d) * p.u[g] * p.w[d];
                }
            }
            let rhs = e + theta * (sl[a] * p.ul[b] - sl[b] * p.ul[a]);
            res.push(lhs - rhs);
            scale = scale.max(lhs.abs());
        }
    }
    (res, scale)
}

fn id_du_antisymmetry(p: &PointData) -> (Vec<f64>, f64) {
    let dul = p.du.map(|r| lower(&r));
    let big_h = p.th.big_h;
    let q = p.th.q;
    let sl = p.ds_;
    let mut res = Vec::new();
    let mut scale = 0.0f64;
    for a in 0..4 {
        for b in 0..4 {
            let lhs = dul[a][b] - dul[b][a];
            let mut e = 0.0;
            for g in 0..4 {
                for d in 0..4 {
                    e += eps_lower(a, b, g, d) * p.u[g] * p.w[d];
                }
            }
            let rhs = e / big_h - p.dh[a] * p.ul[b] + p.dh[b] * p.ul[a] + q * (sl[a] * p.ul[b] - sl[b] * p.ul[a]);
            res.push(lhs - rhs);
            scale = scale.max(lhs.abs());
        }
    }
    (res, scale)
}

fn id_eps_u_du(p: &PointData) -> (Vec<f64>, f64) {
    let dul = p.du.map(|r| lower(&r));
    let e = eps_vec(|b, g, d| p.ul[b] * dul[g][d]);
    let res = (0..4).map(|a| e[a] + p.w[a] / p.th.big_h).collect();
    (res, max_abs(e))
}

fn id_div_w(p: &PointData) -> (Vec<f64>, f64) {
    let div: f64 = (0..4).map(|k| p.dw[k][k]).sum();
    let w_dh: f64 = (0..4).map(|k| p.w[k] * p.dh[k]).sum();
    let w_s: f64 = (0..4).map(|k| p.w[k] * p.ds_[k]).sum();
    let r = div + w_dh - 2.0 * p.th.q * w_s;
    (vec![r], max_abs([div, w_dh]))
}

fn id_transfer_s(p: &PointData) -> (Vec<f64>, f64) {
    let dul = p.du.map(|r| lower(&r));
    let su = lower(&p.ds_);
    let mut res = Vec::new();
    let mut scale = 0.0f64;
    for a in 0..4 {
        let lhs: f64 = (0..4).map(|k| p.u[k] * p.dsl[a][k]).sum();
        let rhs: f64 = -(0..4).map(|k| su[k] * dul[a][k]).sum::<f64>();
        res.push(lhs - rhs);
        scale = scale.max(lhs.abs());
    }
    (res, scale)
}

/// The identity catalogue.
pub const IDENTITIES: [(&str, IdentityClass, IdentityEval); 10] = [
    ("u.du=0", IdentityClass::Kinematic, id_u_du),
    ("varpi.u=0", IdentityClass::Kinematic, id_w_u),
    ("dV-antisymmetric-decomposition", IdentityClass::Kinematic, id_v_decomposition),
    ("Pi-norm-square-vort", IdentityClass::Kinematic, id_norm_square),
    ("lie-u-epsilon", IdentityClass::Kinematic, id_lie_eps),
    ("dHu-antisymmetry", IdentityClass::Dynamic, id_dhu_antisymmetry),
    ("du-antisymmetry", IdentityClass::Dynamic, id_du_antisymmetry),
    ("eps-u-du=-varpi/H", IdentityClass::Dynamic, id_eps_u_du),
    ("div-varpi", IdentityClass::Dynamic, id_div_w),
    ("u.dS=-S.du", IdentityClass::Dynamic, id_transfer_s),
];

fn run_cases(state: &ExtendedState, cases: &[(&'static str, IdentityClass, IdentityEval)]) -> Vec<IdentityCase> {
    use rayon::prelude::*;
    let pts: Vec<PointData> = (0..state.len()).into_par_iter().map(|i| state.point(i)).collect();
    cases
        .iter()
        .map(|&(id, class, f)| {
            let evals: Vec<(Vec<f64>, f64)> = pts.par_iter().map(f).collect();
            let residual: Vec<f64> = evals.iter().map(|(r, _)| max_abs(r.iter().copied())).collect();
            let linf = max_abs(residual.iter().copied());
            let scale = evals.iter().map(|(_, s)| *s).fold(0.0, f64::max);
            IdentityCase {
                id,
                class,
                residual,
                linf,
                relative: if scale > 0.0 { linf / scale } else { linf },
            }
        })
        .collect()
}

pub fn identity_suite(state: &ExtendedState) -> Vec<IdentityCase> {
    run_cases(state, &IDENTITIES)
}

/// `(G⁻¹)^{cd} ∂_c S_d` and `(G⁻¹)^{cd} ∂_c ϖ_d` against their expressions
/// through hyperbolic quantities.
pub fn reconstruction_identities(state: &ExtendedState) -> Vec<IdentityCase> {
    fn common(p: &PointData, v: &[f64; 4], dv: &[[f64; 4]; 4]) -> (f64, f64) {
        let u0 = p.u[0];
        let mut g_dv = 0.0;
        for c in 1..4 {
            for d in 1..4 {
                let gcd = if c == d { 1.0 } else { 0.0 } - p.u[c] * p.u[d] / (u0 * u0);
                g_dv += gcd * dv[c][d];
            }
        }
        // u^i v_j ∂_i(u^j/u⁰) / u⁰.
        let mut conv = 0.0;
        for i in 1..4 {
            for j in 1..4 {
                let d = p.du[i][j] / u0 - p.u[j] * p.du[i][0] / (u0 * u0);
                conv += p.u[i] * v[j] * d;
            }
        }
        (g_dv, conv / u0)
    }
    fn s_case(p: &PointData) -> (Vec<f64>, f64) {
        let sl = p.ds_;
        let (lhs, conv) = common(p, &sl, &p.dsl);
        let su = lower(&sl);
        let s_dh: f64 = (0..4).map(|k| su[k] * p.dh[k]).sum();
        let s_dtu: f64 = (0..4).map(|k| sl[k] * p.du[0][k]).sum();
        let rhs = p.th.n * p.dv + (1.0 / p.th.c2 - 1.0) * s_dh - s_dtu / p.u[0] + conv;
        (vec![lhs - rhs], lhs.abs().max(rhs.abs()))
    }
    fn w_case(p: &PointData) -> (Vec<f64>, f64) {
        let wl = lower(&p.w);
        let dwl = p.dw.map(|r| lower(&r));
        let (lhs, conv) = common(p, &wl, &dwl);
        let w_dh: f64 = (0..4).map(|k| p.w[k] * p.dh[k]).sum();
        let w_s: f64 = (0..4).map(|k| p.w[k] * p.ds_[k]).sum();
        let t0 = vorticity_transport_rhs(p)[0];
        let rhs = -w_dh + 2.0 * p.th.q * w_s - t0 / p.u[0] + conv;
        (vec![lhs - rhs], lhs.abs().max(rhs.abs()))
    }
    run_cases(
        state,
        &[
            ("G-div-S", IdentityClass::Dynamic, s_case as IdentityEval),
            ("G-div-varpi", IdentityClass::Dynamic, w_case as IdentityEval),
        ],
    )
}

/// One row of a refinement study.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub label: String,
    pub sizes: Vec<usize>,
    pub linf: Vec<f64>,
    /// `linf[k] / linf[k+1]`.
    pub ratios: Vec<f64>,
    /// Least-squares slope of `-log linf` against `log n`, or `None` at the
    /// round-off floor.
    pub order: Option<f64>,
}

impl ConvergenceRow {
    pub fn order_label(&self) -> String {
        match self.order {
            Some(o) => format!("{o:.3}"),
            None => "floor".to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceTable {
    pub mode: String,
    pub rows: Vec<ConvergenceRow>,
}

pub const FLOOR: f64 = 1e-13;

pub fn convergence_row(label: &str, sizes: &[usize], linf: Vec<f64>) -> ConvergenceRow {
    let ratios = linf.windows(2).map(|w| w[0] / w[1]).collect();
    let order = if linf.iter().all(|&v| v <= FLOOR) {
        None
    } else {
        let xs: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
        let ys: Vec<f64> = linf.iter().map(|&v| -(v.max(1e-300)).ln()).collect();
        let m = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / m;
        let my = ys.iter().sum::<f64>() / m;
        let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        Some(num / den)
    };
    ConvergenceRow {
        label: label.to_string(),
        sizes: sizes.to_vec(),
        linf,
        ratios,
        order,
    }
}

/// Residuals of the reformulated system and dynamic identities over a sequence of cubic grids.
/// `make` builds the raw state on each grid.
pub fn convergence_study(
    sizes: &[usize],
    mode: DerivMode,
    make: impl Fn(&Arc<TorusGrid>) -> FluidState,
    fault: Option<Fault>,
) -> Result<ConvergenceTable, StructureError> {
    if sizes.len() < 2 {
        return Err(StructureError::TooFewSizes { need: 2, have: sizes.len() });
    }
    let mut per_size: Vec<(ResidualReport, Vec<IdentityCase>)> = Vec::new();
    for &n in sizes {
        let grid = TorusGrid::cubic(n, mode).map_err(FluidError::from)?;
        let ext = complete_state(&make(&grid))?;
        let mut ids = identity_suite(&ext);
        ids.extend(reconstruction_identities(&ext));
        per_size.push((theorem_residuals(&ext, fault), ids));
    }
    let mut rows = Vec::new();
    for (e, label) in EQUATIONS.iter().enumerate() {
        rows.push(convergence_row(label, sizes, per_size.iter().map(|(r, _)| r.rows[e].linf).collect()));
    }
    let n_ids = per_size[0].1.len();
    for j in 0..n_ids {
        let label = format!("identity:{}", per_size[0].1[j].id);
        rows.push(convergence_row(&label, sizes, per_size.iter().map(|(_, ids)| ids[j].linf).collect()));
    }
    Ok(ConvergenceTable { mode: mode.to_string(), rows })
}

/// Pointwise values of `𝔏_*` at derivative inputs scaled by `λ`; `S` and `ϖ`
/// stay fixed.
pub fn linear_terms_scaled(p: &PointData, lambda: f64) -> Vec<f64> {
    let mut q = *p;
    q.dh = q.dh.map(|v| v * lambda);
    q.du = q.du.map(|r| r.map(|v| v * lambda));
    let inh = inhomogeneous_at(&q, None);
    let mut out = vec![inh.l_h, inh.l_s, inh.l_d];
    out.extend(inh.l_u);
    out.extend(inh.l_c);
    out
}

/// Every `𝔔_*` with `∂h = a ℓ` and `∂u^β = b^β ℓ` substituted at a point.
pub fn null_forms_on_covector(p: &PointData, ell: &[f64; 4], a: f64, b: &[f64; 4]) -> Vec<f64> {
    let mut q = *p;
    q.dh = ell.map(|l| a * l);
    q.du = std::array::from_fn(|k| std::array::from_fn(|beta| b[beta] * ell[k]));
    let inh = inhomogeneous_at(&q, None);
    let mut out = vec![inh.q_h, inh.q_d];
    out.extend(inh.q_u);
    out.extend(inh.q_c);
    out
}
