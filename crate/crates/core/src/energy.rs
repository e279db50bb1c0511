//! Energies for the wave and transport parts, the elliptic energy built on
//! `⟨·,·⟩_{M⁻¹;α}`, the one-form div-curl identity, coercivity constants and
//! the regularity report.
//!
//! Multi-indices `∂_I` are unordered, `∂_1^{i₁}∂_2^{i₂}∂_3^{i₃}`, matching
//! [`TorusGrid::multi_index_norm`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fluid::{ExtendedState, FluidError};
use crate::geometry::{box_g_scalar, christoffel, inverse_metric, metric, spatial_metric_g, sym3_eigenvalues, ChristoffelField, GeometryError, SpatialInvMetric};
use crate::grid::{DerivMode, GridError, TorusGrid};
use crate::jetfield::JetField;

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error("time quadrature needs at least {need} snapshots, got {have}")]
    InsufficientSnapshots { have: usize, need: usize },
    #[error("snapshot times are not uniformly spaced")]
    NonUniformSnapshots,
    #[error("M⁻¹ is not positive definite at grid point {point} (eigenvalues {eigen:?})")]
    NotPositiveDefinite { point: usize, eigen: [f64; 3] },
    #[error("no α > {floor:e} satisfies the lower comparison on the probe family")]
    SearchFailure { floor: f64 },
    #[error("elliptic energy needs N ≥ 3, got {0}")]
    OrderTooLow(usize),
    #[error("curl of the entropy gradient is {0:e}, expected 0")]
    CurlOfGradient(f64),
    #[error("energy sums need a spectral grid")]
    NeedsSpectral,
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Fluid(#[from] FluidError),
}

/// Unordered multi-indices with `|I| = order`.
pub fn multi_indices(order: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for i1 in (0..=order).rev() {
        for i2 in (0..=order - i1).rev() {
            out.push([i1, i2, order - i1 - i2]);
        }
    }
    out
}

/// Unordered multi-indices with `|I| ≤ order`, by increasing length.
pub fn multi_indices_upto(order: usize) -> Vec<[usize; 3]> {
    (0..=order).flat_map(multi_indices).collect()
}

pub fn index_label(ii: [usize; 3]) -> String {
    if ii == [0; 3] {
        return "0".into();
    }
    (0..3).flat_map(|a| std::iter::repeat(char::from(b'1' + a as u8)).take(ii[a])).collect()
}

/// `∂_I f`.
pub fn apply_multi(grid: &TorusGrid, f: &[f64], ii: [usize; 3]) -> Vec<f64> {
    let mut out = f.to_vec();
    for (axis, &k) in ii.iter().enumerate() {
        for _ in 0..k {
            out = grid.deriv(&out, axis);
        }
    }
    out
}

fn apply_multi_jet(grid: &TorusGrid, f: &JetField, ii: [usize; 3], ord: usize) -> JetField {
    JetField {
        coeffs: f.truncate(ord).coeffs.iter().map(|c| apply_multi(grid, c, ii)).collect(),
    }
}

/// Composite Simpson on uniform samples; an odd interval count closes with
/// the 3/8 rule on the last three intervals.
pub fn simpson(times: &[f64], f: &[f64]) -> Result<f64, EnergyError> {
    let n = times.len();
    if n < 3 || f.len() != n {
        return Err(EnergyError::InsufficientSnapshots { have: n.min(f.len()), need: 3 });
    }
    let h = (times[n - 1] - times[0]) / (n - 1) as f64;
    if times.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h.abs().max(1e-300)) {
        return Err(EnergyError::NonUniformSnapshots);
    }
    let intervals = n - 1;
    let (simp_end, tail) = if intervals % 2 == 0 { (intervals, false) } else { (intervals - 3, true) };
    let mut acc = 0.0;
    let mut k = 0;
    while k < simp_end {
        acc += h / 3.0 * (f[k] + 4.0 * f[k + 1] + f[k + 2]);
        k += 2;
    }
    if tail {
        let j = simp_end;
        acc += 3.0 * h / 8.0 * (f[j] + 3.0 * f[j + 1] + 3.0 * f[j + 2] + f[j + 3]);
    }
    Ok(acc)
}

/// Wave-tracked scalars `φ ∈ {h, u¹, u², u³}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WaveScalar {
    H,
    U(usize),
}

impl WaveScalar {
    pub const ALL: [WaveScalar; 4] = [WaveScalar::H, WaveScalar::U(1), WaveScalar::U(2), WaveScalar::U(3)];

    pub fn label(&self) -> String {
        match self {
            WaveScalar::H => "h".into(),
            WaveScalar::U(a) => format!("u{a}"),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|w| w.label() == s)
    }

    /// Time jet of `∂_I φ` up to order 2.
    pub fn jet(&self, st: &ExtendedState, ii: [usize; 3]) -> JetField {
        let f = match self {
            WaveScalar::H => &st.closure.h,
            WaveScalar::U(a) => &st.closure.u[a - 1],
        };
        apply_multi_jet(st.grid(), f, ii, 2)
    }
}

/// Transport-tracked scalars.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransportScalar {
    S(usize),
    Varpi(usize),
    D,
    C(usize),
}

impl TransportScalar {
    pub const ALL: [TransportScalar; 10] = [
        TransportScalar::S(1),
        TransportScalar::S(2),
        TransportScalar::S(3),
        TransportScalar::Varpi(1),
        TransportScalar::Varpi(2),
        TransportScalar::Varpi(3),
        TransportScalar::D,
        TransportScalar::C(1),
        TransportScalar::C(2),
        TransportScalar::C(3),
    ];

    pub fn label(&self) -> String {
        match self {
            TransportScalar::S(a) => format!("S{a}"),
            TransportScalar::Varpi(a) => format!("varpi{a}"),
            TransportScalar::D => "D".into(),
            TransportScalar::C(a) => format!("C{a}"),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|w| w.label() == s)
    }

    /// Time jet of `∂_I φ` up to order 1.
    pub fn jet(&self, st: &ExtendedState, ii: [usize; 3]) -> JetField {
        let f = match self {
            TransportScalar::S(a) => &st.closure.ds[a - 1],
            TransportScalar::Varpi(a) => &st.varpi[*a],
            TransportScalar::D => &st.dvar,
            TransportScalar::C(a) => &st.cvar[*a],
        };
        apply_multi_jet(st.grid(), f, ii, 1)
    }
}

/// `∂_α φ` at point `i`, time component from the jet.
fn grad_at(phi: &JetField, sp: &[Vec<f64>; 3], i: usize) -> [f64; 4] {
    [phi.coeffs[1][i], sp[0][i], sp[1][i], sp[2][i]]
}

fn spatial_grad(grid: &TorusGrid, phi: &JetField) -> [Vec<f64>; 3] {
    std::array::from_fn(|a| grid.deriv(&phi.coeffs[0], a))
}

/// Pointwise `u`-multiplier energy density (without the `c⁻³` weight):
/// `½u⁰{c²(∂_tφ)² + c²|∂φ|² + (1−c²)(u·∂φ)²} + c²∂_tφ u^a∂_aφ + u⁰φ²`.
pub fn wave_density_point(c: f64, u: &[f64; 4], phi: f64, d: &[f64; 4]) -> f64 {
    let c2 = c * c;
    let ud: f64 = (0..4).map(|k| u[k] * d[k]).sum();
    let grad2 = d[1] * d[1] + d[2] * d[2] + d[3] * d[3];
    let ua_da = u[1] * d[1] + u[2] * d[2] + u[3] * d[3];
    0.5 * u[0] * (c2 * d[0] * d[0] + c2 * grad2 + (1.0 - c2) * ud * ud) + c2 * d[0] * ua_da + u[0] * phi * phi
}

/// `−J⁰` for `J^α = (g⁻¹)^{αμ}T_{μβ}u^β − u^α φ²`, the density before the
/// `dμ_g̲/√|(g⁻¹)⁰⁰| = c⁻³ dx` weight.
pub fn current_density_point(c: f64, u: &[f64; 4], phi: f64, d: &[f64; 4]) -> f64 {
    let g = metric(c, u);
    let gi = inverse_metric(c, u);
    let t = stress(&g, &gi, d);
    let mut j0 = -u[0] * phi * phi;
    for m in 0..4 {
        for b in 0..4 {
            j0 += gi[0][m] * t[m][b] * u[b];
        }
    }
    -j0
}

/// `T_{αβ} = ∂_αφ∂_βφ − ½g_{αβ}(g⁻¹)^{μν}∂_μφ∂_νφ`.
fn stress(g: &[[f64; 4]; 4], gi: &[[f64; 4]; 4], d: &[f64; 4]) -> [[f64; 4]; 4] {
    let q: f64 = (0..4).map(|m| (0..4).map(|n| gi[m][n] * d[m] * d[n]).sum::<f64>()).sum();
    std::array::from_fn(|a| std::array::from_fn(|b| d[a] * d[b] - 0.5 * g[a][b] * q))
}

fn point_state(st: &ExtendedState, i: usize) -> (f64, [f64; 4]) {
    let c = st.eos().eval_thermo(st.closure.h.coeffs[0][i], st.closure.s.coeffs[0][i]).expect("checked during completion").c;
    let u = [st.u0.coeffs[0][i], st.closure.u[0].coeffs[0][i], st.closure.u[1].coeffs[0][i], st.closure.u[2].coeffs[0][i]];
    (c, u)
}

/// Pointwise density and `E_wave[φ] = ∫ density · c⁻³ dx`.
pub fn wave_energy_with_density(st: &ExtendedState, phi: &JetField) -> (f64, Vec<f64>) {
    let grid = st.grid();
    let sp = spatial_grad(grid, phi);
    let (dens, weighted): (Vec<f64>, Vec<f64>) = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let (c, u) = point_state(st, i);
            let e = wave_density_point(c, &u, phi.coeffs[0][i], &grad_at(phi, &sp, i));
            (e, e / (c * c * c))
        })
        .unzip();
    (grid.integrate(&weighted), dens)
}

pub fn wave_energy(st: &ExtendedState, phi: &JetField) -> f64 {
    wave_energy_with_density(st, phi).0
}

/// Space integral of the bulk terms of the wave energy identity at one
/// slice, weighted by `dμ_g = c⁻³ dx dt`.
pub fn wave_bulk(st: &ExtendedState, phi: &JetField, cf: &ChristoffelField) -> Result<f64, EnergyError> {
    let grid = st.grid();
    let bx = box_g_scalar(st, phi)?.divergence;
    let sp = spatial_grad(grid, phi);
    let vals: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let b = st.base_jets(i);
            let (c, u) = point_state(st, i);
            let du = b.du.map(|r| r.map(|x| x.coeff(0)));
            let g = &cf.g[i];
            let gi = inverse_metric(c, &u);
            let dg = &cf.dg[i];
            let gam = &cf.gamma[i];
            let d = grad_at(phi, &sp, i);
            let f = phi.coeffs[0][i];
            let t = stress(g, &gi, &d);
            let ud: f64 = (0..4).map(|k| u[k] * d[k]).sum();
            let mut bulk = -bx[i] * ud;
            let mut deform = 0.0;
            let mut shear = 0.0;
            for al in 0..4 {
                for be in 0..4 {
                    for ga in 0..4 {
                        for de in 0..4 {
                            let udg: f64 = (0..4).map(|k| u[k] * dg[k][ga][de]).sum();
                            deform += gi[al][ga] * gi[be][de] * t[al][be] * udg;
                        }
                    }
                    for de in 0..4 {
                        shear += gi[be][de] * t[al][be] * du[de][al];
                    }
                }
            }
            bulk -= 0.5 * deform + shear;
            let div_u: f64 = (0..4).map(|k| du[k][k]).sum();
            let trace: f64 = (0..4).map(|k| (0..4).map(|l| gam[k][k][l] * u[l]).sum::<f64>()).sum();
            bulk += (div_u + trace) * f * f + 2.0 * f * ud;
            bulk / (c * c * c)
        })
        .collect();
    Ok(grid.integrate(&vals))
}

/// `E_transport[φ] = ∫ φ² dx`.
pub fn transport_energy(st: &ExtendedState, phi: &JetField) -> f64 {
    let v: Vec<f64> = phi.coeffs[0].iter().map(|x| x * x).collect();
    st.grid().integrate(&v)
}

/// `∫ ∂_a(u^a/u⁰)φ² + 2φ u^α∂_αφ / u⁰ dx` at one slice.
pub fn transport_bulk(st: &ExtendedState, phi: &JetField) -> f64 {
    let grid = st.grid();
    let sp = spatial_grad(grid, phi);
    let vals: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let b = st.base_jets(i);
            let u = b.u.map(|x| x.coeff(0));
            let du = b.du.map(|r| r.map(|x| x.coeff(0)));
            let dvel: f64 = (1..4).map(|a| du[a][a] / u[0] - u[a] * du[a][0] / (u[0] * u[0])).sum();
            let d = grad_at(phi, &sp, i);
            let f = phi.coeffs[0][i];
            let ud: f64 = (0..4).map(|k| u[k] * d[k]).sum();
            dvel * f * f + 2.0 * f * ud / u[0]
        })
        .collect();
    grid.integrate(&vals)
}

/// Energy samples at each slice of a trajectory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergySeries {
    pub label: String,
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    /// Space integral of the bulk terms at each slice.
    pub bulk: Vec<f64>,
}

impl EnergySeries {
    pub fn push(&mut self, t: f64, e: f64, b: f64) {
        self.times.push(t);
        self.energy.push(e);
        self.bulk.push(b);
    }

    pub fn defect(&self) -> Result<IdentityDefect, EnergyError> {
        let rhs = simpson(&self.times, &self.bulk)?;
        let e0 = self.energy[0];
        let et = *self.energy.last().expect("non-empty");
        let lhs = et - e0;
        let defect = (lhs - rhs).abs();
        let scale = e0.abs().max(et.abs());
        Ok(IdentityDefect {
            label: self.label.clone(),
            e0,
            et,
            lhs,
            rhs,
            defect,
            relative: if scale > 0.0 { defect / scale } else { defect },
        })
    }
}

/// `E(t) − E(0)` against the time-integrated bulk terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityDefect {
    pub label: String,
    pub e0: f64,
    pub et: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub defect: f64,
    /// `defect / max(|E(0)|, |E(t)|)`.
    pub relative: f64,
}

/// Which energies a trajectory pass tracks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tracking {
    pub wave: Vec<(WaveScalar, [usize; 3])>,
    pub transport: Vec<(TransportScalar, [usize; 3])>,
}

impl Tracking {
    /// Every tracked scalar with every `∂_I`, `|I| ≤ order`.
    pub fn full(order: usize) -> Self {
        let idx = multi_indices_upto(order);
        Tracking {
            wave: WaveScalar::ALL.iter().flat_map(|w| idx.iter().map(move |i| (*w, *i))).collect(),
            transport: TransportScalar::ALL.iter().flat_map(|w| idx.iter().map(move |i| (*w, *i))).collect(),
        }
    }
}

/// Accumulates energy and bulk samples over slices one at a time, so that
/// only one extended state is alive.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyAccumulator {
    pub wave: Vec<EnergySeries>,
    pub transport: Vec<EnergySeries>,
    /// Smallest pointwise wave density seen.
    pub min_density: f64,
    tracking: Option<Tracking>,
}

fn series_label(base: String, ii: [usize; 3]) -> String {
    if ii == [0; 3] {
        base
    } else {
        format!("d{}({base})", index_label(ii))
    }
}

impl EnergyAccumulator {
    pub fn new(tracking: Tracking) -> Self {
        EnergyAccumulator {
            wave: tracking.wave.iter().map(|(w, ii)| EnergySeries { label: series_label(w.label(), *ii), ..Default::default() }).collect(),
            transport: tracking
                .transport
                .iter()
                .map(|(w, ii)| EnergySeries { label: series_label(w.label(), *ii), ..Default::default() })
                .collect(),
            min_density: f64::INFINITY,
            tracking: Some(tracking),
        }
    }

    pub fn add(&mut self, st: &ExtendedState) -> Result<(), EnergyError> {
        let tr = self.tracking.clone().expect("built with new");
        let t = st.raw.time;
        let cf = if tr.wave.is_empty() { None } else { Some(christoffel(st)?) };
        for ((w, ii), series) in tr.wave.iter().zip(&mut self.wave) {
            let phi = w.jet(st, *ii);
            let (e, dens) = wave_energy_with_density(st, &phi);
            self.min_density = dens.iter().copied().fold(self.min_density, f64::min);
            let b = wave_bulk(st, &phi, cf.as_ref().expect("wave tracked"))?;
            series.push(t, e, b);
        }
        for ((w, ii), series) in tr.transport.iter().zip(&mut self.transport) {
            let phi = w.jet(st, *ii);
            series.push(t, transport_energy(st, &phi), transport_bulk(st, &phi));
        }
        Ok(())
    }

    pub fn wave_series(&self, label: &str) -> Option<&EnergySeries> {
        self.wave.iter().find(|s| s.label == label)
    }

    pub fn transport_series(&self, label: &str) -> Option<&EnergySeries> {
        self.transport.iter().find(|s| s.label == label)
    }
}

/// `E_wave[∂_Iφ]` per tracked scalar, the identity defects over the
/// trajectory, and the run's Sobolev comparison constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveEnergyReport {
    pub scalar: String,
    pub times: Vec<f64>,
    /// `(label of ∂_Iφ, E_wave series)`.
    pub energies: Vec<(String, Vec<f64>)>,
    pub defects: Vec<IdentityDefect>,
    /// Extremes over slices of `Σ_{|I|≤N−1} E[∂_Iφ] / (‖φ‖²_{H^N} + ‖∂_tφ‖²_{H^{N−1}})`.
    pub ratio_min: f64,
    pub ratio_max: f64,
    /// `max(ratio_max, 1/ratio_min)`.
    pub comparison_constant: f64,
}

/// Sobolev side of the wave comparison at one slice.
pub fn wave_sobolev_side(st: &ExtendedState, w: WaveScalar, n: usize) -> Result<f64, EnergyError> {
    let phi = w.jet(st, [0; 3]);
    let g = st.grid();
    let a = g.multi_index_norm(&phi.coeffs[0], n)?;
    let b = g.multi_index_norm(&phi.coeffs[1], n - 1)?;
    Ok(a * a + b * b)
}

/// Builds one report per wave scalar from an accumulator tracking
/// `Tracking::full(n − 1)`, with `sobolev[k][w]` the Sobolev side at slice
/// `k`.
pub fn wave_reports(acc: &EnergyAccumulator, sobolev: &[[f64; 4]], n: usize) -> Result<Vec<WaveEnergyReport>, EnergyError> {
    let idx = multi_indices_upto(n - 1);
    let mut out = Vec::new();
    for (wi, w) in WaveScalar::ALL.iter().enumerate() {
        let series: Vec<&EnergySeries> = idx.iter().filter_map(|ii| acc.wave_series(&series_label(w.label(), *ii))).collect();
        if series.len() != idx.len() {
            continue;
        }
        let times = series[0].times.clone();
        let mut ratio_min = f64::INFINITY;
        let mut ratio_max = 0.0f64;
        for k in 0..times.len() {
            let total: f64 = series.iter().map(|s| s.energy[k]).sum();
            let r = total / sobolev[k][wi];
            ratio_min = ratio_min.min(r);
            ratio_max = ratio_max.max(r);
        }
        let defects = if times.len() >= 3 { series.iter().map(|s| s.defect()).collect::<Result<_, _>>()? } else { Vec::new() };
        out.push(WaveEnergyReport {
            scalar: w.label(),
            times,
            energies: series.iter().map(|s| (s.label.clone(), s.energy.clone())).collect(),
            defects,
            ratio_min,
            ratio_max,
            comparison_constant: ratio_max.max(1.0 / ratio_min),
        });
    }
    Ok(out)
}

/// Spatial one-forms `(ϖ̲, S̲)` as component arrays.
pub type OneForm = [Vec<f64>; 3];

pub fn vorticity_entropy(st: &ExtendedState) -> (OneForm, OneForm) {
    let w = std::array::from_fn(|a| st.varpi[a + 1].coeffs[0].clone());
    let s = std::array::from_fn(|a| st.closure.ds[a].coeffs[0].clone());
    (w, s)
}

/// `G⁻¹` at every grid point.
pub fn g_inverse_field(st: &ExtendedState) -> Vec<SpatialInvMetric> {
    (0..st.len()).map(|i| spatial_metric_g(&point_state(st, i).1)).collect()
}

pub fn identity_field(n: usize) -> Vec<SpatialInvMetric> {
    vec![[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]; n]
}

/// `(λ, Λ)`: extreme eigenvalues of `M⁻¹` over the grid.
pub fn eigen_bounds(m_inv: &[SpatialInvMetric]) -> Result<(f64, f64), EnergyError> {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for (i, m) in m_inv.iter().enumerate() {
        let e = sym3_eigenvalues(m);
        if !(e[0] > 0.0) {
            return Err(EnergyError::NotPositiveDefinite { point: i, eigen: e });
        }
        lo = lo.min(e[0]);
        hi = hi.max(e[2]);
    }
    Ok((lo, hi))
}

fn eps3(a: usize, b: usize, c: usize) -> f64 {
    crate::tensor::eps_lower(0, a + 1, b + 1, c + 1)
}

const EPS3: [([usize; 3], f64); 6] = [([0, 1, 2], 1.0), ([1, 2, 0], 1.0), ([2, 0, 1], 1.0), ([0, 2, 1], -1.0), ([2, 1, 0], -1.0), ([1, 0, 2], -1.0)];

/// `W^{ij} = (M⁻¹)^{ab}(M⁻¹)^{cd} ε_{aci} ε_{bdj}`.
fn curl_weight(m: &SpatialInvMetric) -> [[f64; 3]; 3] {
    let mut w = [[0.0; 3]; 3];
    for (p, sp) in EPS3.iter() {
        for (q, sq) in EPS3.iter() {
            let (a, c, i) = (p[0], p[1], p[2]);
            let (b, d, j) = (q[0], q[1], q[2]);
            w[i][j] += m[a][b] * m[c][d] * sp * sq;
        }
    }
    w
}

/// `curl^i(W) = ε^{ijk} ∂_j W_k`.
pub fn curl(grid: &TorusGrid, v: &OneForm) -> OneForm {
    let d: [[Vec<f64>; 3]; 3] = std::array::from_fn(|j| std::array::from_fn(|k| grid.deriv(&v[k], j)));
    std::array::from_fn(|i| {
        (0..grid.len())
            .map(|x| {
                let mut acc = 0.0;
                for j in 0..3 {
                    for k in 0..3 {
                        let e = eps3(i, j, k);
                        if e != 0.0 {
                            acc += e * d[j][k][x];
                        }
                    }
                }
                acc
            })
            .collect()
    })
}

/// Per-|I| = N−1 pieces of the top-order terms for one pair of forms.
struct TopPieces {
    /// `(M⁻¹)^{ab} ∂_a ∂_I V_b`.
    div: Vec<f64>,
    /// `curl(∂_I V)`.
    curl: OneForm,
    /// `∂_a ∂_I V_b`.
    grad: [[Vec<f64>; 3]; 3],
}

fn top_pieces(grid: &TorusGrid, m_inv: &[SpatialInvMetric], v: &OneForm, ii: [usize; 3]) -> TopPieces {
    let vi: OneForm = std::array::from_fn(|b| apply_multi(grid, &v[b], ii));
    let grad: [[Vec<f64>; 3]; 3] = std::array::from_fn(|a| std::array::from_fn(|b| grid.deriv(&vi[b], a)));
    let div = (0..grid.len())
        .map(|x| {
            let m = &m_inv[x];
            (0..3).map(|a| (0..3).map(|b| m[a][b] * grad[a][b][x]).sum::<f64>()).sum()
        })
        .collect();
    let curl = curl(grid, &vi);
    TopPieces { div, curl, grad }
}

/// Separated pieces of `⟨(ϖ̲, S̲), (ϖ̲, S̲)⟩_{M⁻¹;α}` without the `α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerPieces {
    /// The four top-order integrals.
    pub top: f64,
    /// The all-order `L²` sums over `|I| ≤ N−1`.
    pub low: f64,
    /// `Σ_{|I|=N−1} Σ_{a,b} ‖∂_a ∂_I V_b‖²` over both forms.
    pub high: f64,
    /// `Σ_{|I|=N−1} ‖curl ∂_I S̲‖²`.
    pub curl_s: f64,
}

fn check_order(n: usize, grid: &TorusGrid) -> Result<(), EnergyError> {
    if n < 3 {
        return Err(EnergyError::OrderTooLow(n));
    }
    if grid.mode() != DerivMode::Spectral {
        return Err(EnergyError::NeedsSpectral);
    }
    Ok(())
}

/// The bilinear form `⟨(ϖ̲, S̲), (ϖ̲', S̲')⟩_{M⁻¹;α}`.
pub fn inner_product(grid: &TorusGrid, m_inv: &[SpatialInvMetric], alpha: f64, n: usize, a: (&OneForm, &OneForm), b: (&OneForm, &OneForm)) -> Result<f64, EnergyError> {
    check_order(n, grid)?;
    eigen_bounds(m_inv)?;
    let weights: Vec<[[f64; 3]; 3]> = m_inv.iter().map(curl_weight).collect();
    let mut top = 0.0;
    for ii in multi_indices(n - 1) {
        for (x, y) in [(a.0, b.0), (a.1, b.1)] {
            let px = top_pieces(grid, m_inv, x, ii);
            let py = top_pieces(grid, m_inv, y, ii);
            let dd: Vec<f64> = px.div.iter().zip(&py.div).map(|(p, q)| p * q).collect();
            let cc: Vec<f64> = (0..grid.len())
                .map(|k| (0..3).map(|i| (0..3).map(|j| weights[k][i][j] * px.curl[i][k] * py.curl[j][k]).sum::<f64>()).sum())
                .collect();
            top += grid.integrate(&dd) + grid.integrate(&cc);
        }
    }
    let mut low = 0.0;
    for ii in multi_indices_upto(n - 1) {
        for (x, y) in [(a.0, b.0), (a.1, b.1)] {
            for c in 0..3 {
                let p = apply_multi(grid, &x[c], ii);
                let q = apply_multi(grid, &y[c], ii);
                let pq: Vec<f64> = p.iter().zip(&q).map(|(u, v)| u * v).collect();
                low += grid.integrate(&pq);
            }
        }
    }
    Ok(alpha * top + low)
}

/// All pieces of the squared elliptic energy for one pair of forms.
pub fn inner_pieces(grid: &TorusGrid, m_inv: &[SpatialInvMetric], n: usize, w: &OneForm, s: &OneForm) -> Result<InnerPieces, EnergyError> {
    check_order(n, grid)?;
    eigen_bounds(m_inv)?;
    let weights: Vec<[[f64; 3]; 3]> = m_inv.iter().map(curl_weight).collect();
    let mut out = InnerPieces { top: 0.0, low: 0.0, high: 0.0, curl_s: 0.0 };
    for ii in multi_indices(n - 1) {
        for (k, v) in [w, s].into_iter().enumerate() {
            let p = top_pieces(grid, m_inv, v, ii);
            let dd: Vec<f64> = p.div.iter().map(|x| x * x).collect();
            let cc: Vec<f64> = (0..grid.len())
                .map(|x| (0..3).map(|i| (0..3).map(|j| weights[x][i][j] * p.curl[i][x] * p.curl[j][x]).sum::<f64>()).sum())
                .collect();
            out.top += grid.integrate(&dd) + grid.integrate(&cc);
            for row in &p.grad {
                for f in row {
                    let sq: Vec<f64> = f.iter().map(|x| x * x).collect();
                    out.high += grid.integrate(&sq);
                }
            }
            if k == 1 {
                for f in &p.curl {
                    let sq: Vec<f64> = f.iter().map(|x| x * x).collect();
                    out.curl_s += grid.integrate(&sq);
                }
            }
        }
    }
    for ii in multi_indices_upto(n - 1) {
        for v in [w, s] {
            for f in v {
                let p = apply_multi(grid, f, ii);
                let sq: Vec<f64> = p.iter().map(|x| x * x).collect();
                out.low += grid.integrate(&sq);
            }
        }
    }
    Ok(out)
}

/// `Σ_a ‖ϖ^a‖_{H^N} + Σ_a ‖S_a‖_{H^N}`.
pub fn elliptic_norm(grid: &TorusGrid, n: usize, w: &OneForm, s: &OneForm) -> Result<f64, EnergyError> {
    let mut acc = 0.0;
    for f in w.iter().chain(s.iter()) {
        acc += grid.multi_index_norm(f, n)?;
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipticEnergyReport {
    /// `⟨(ϖ̲, S̲), (ϖ̲, S̲)⟩_{M⁻¹;α} = 𝔼²`.
    pub inner: f64,
    pub energy: f64,
    pub alpha: f64,
    pub n: usize,
    /// `norm ≤ c_lower · 𝔼` over the probe family.
    pub c_lower: f64,
    /// `𝔼 ≤ c_upper · norm` over the probe family.
    pub c_upper: f64,
    pub lambda: f64,
    pub big_lambda: f64,
    /// `Σ ‖curl ∂_I S̲‖²`, which vanishes identically.
    pub curl_s: f64,
    pub probes: usize,
}

/// Relative size allowed for `curl S̲` before it counts as a bug.
pub const CURL_S_TOL: f64 = 1e-20;

fn check_curl(pieces: &InnerPieces) -> Result<(), EnergyError> {
    let scale = pieces.high.max(1e-300);
    if pieces.curl_s > CURL_S_TOL.max(1e-24 * scale) && pieces.curl_s / scale > 1e-20 {
        return Err(EnergyError::CurlOfGradient(pieces.curl_s));
    }
    Ok(())
}

/// `𝔼_{N;M⁻¹;α}` of the state's `(ϖ̲, S̲)`, with constants from this one
/// probe.
pub fn elliptic_energy(st: &ExtendedState, m_inv: &[SpatialInvMetric], alpha: f64, n: usize) -> Result<EllipticEnergyReport, EnergyError> {
    let grid = st.grid();
    let (w, s) = vorticity_entropy(st);
    let (lambda, big_lambda) = eigen_bounds(m_inv)?;
    let p = inner_pieces(grid, m_inv, n, &w, &s)?;
    check_curl(&p)?;
    let inner = alpha * p.top + p.low;
    let energy = inner.max(0.0).sqrt();
    let norm = elliptic_norm(grid, n, &w, &s)?;
    let (c_lower, c_upper) = if energy > 0.0 { (norm / energy, energy / norm) } else { (0.0, 0.0) };
    Ok(EllipticEnergyReport {
        inner,
        energy,
        alpha,
        n,
        c_lower,
        c_upper,
        lambda,
        big_lambda,
        curl_s: p.curl_s,
        probes: 1,
    })
}

/// Both integrated sides of the one-form div-curl identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivCurlDefect {
    /// `∫ (M⁻¹∂V)_div² + ½ ∫ M⁻¹M⁻¹εε curl curl`.
    pub lhs: f64,
    /// `∫ M⁻¹M⁻¹ ∂_aV_c ∂_bV_d` plus the four commutator integrals.
    pub rhs: f64,
    pub defect: f64,
    pub relative: f64,
}

/// Integrates the one-form identity over the torus; the perfect-derivative
/// terms drop out.
pub fn divcurl_identity_defect(grid: &TorusGrid, v: &OneForm, m_inv: &[SpatialInvMetric]) -> DivCurlDefect {
    let n = grid.len();
    let dv: [[Vec<f64>; 3]; 3] = std::array::from_fn(|a| std::array::from_fn(|b| grid.deriv(&v[b], a)));
    let cu = curl(grid, v);
    // ∂_e [(M⁻¹)^{ab}(M⁻¹)^{cd}], spectral.
    let mm_idx = |a: usize, b: usize, c: usize, d: usize| ((a * 3 + b) * 3 + c) * 3 + d;
    let mm: Vec<Vec<f64>> = (0..81).map(|k| (0..n).map(|x| {
        let (a, b, c, d) = (k / 27, (k / 9) % 3, (k / 3) % 3, k % 3);
        m_inv[x][a][b] * m_inv[x][c][d]
    }).collect()).collect();
    let dmm: Vec<[Vec<f64>; 3]> = mm.iter().map(|f| std::array::from_fn(|e| grid.deriv(f, e))).collect();
    let weights: Vec<[[f64; 3]; 3]> = m_inv.iter().map(curl_weight).collect();
    let (lhs_v, rhs_v): (Vec<f64>, Vec<f64>) = (0..n)
        .into_par_iter()
        .map(|x| {
            let m = &m_inv[x];
            let d = |a: usize, b: usize| dv[a][b][x];
            let vv = |a: usize| v[a][x];
            let div: f64 = (0..3).map(|a| (0..3).map(|b| m[a][b] * d(a, b)).sum::<f64>()).sum();
            let mut lhs = div * div;
            for i in 0..3 {
                for j in 0..3 {
                    lhs += 0.5 * weights[x][i][j] * cu[i][x] * cu[j][x];
                }
            }
            let mut rhs = 0.0;
            for a in 0..3 {
                for b in 0..3 {
                    for c in 0..3 {
                        for e in 0..3 {
                            let k = mm_idx(a, b, c, e);
                            let dk = |ax: usize| dmm[k][ax][x];
                            rhs += m[a][b] * m[c][e] * d(a, c) * d(b, e);
                            rhs += 0.5 * dk(a) * (vv(c) * d(b, e) + vv(c) * d(e, b));
                            rhs += 0.5 * dk(c) * (vv(a) * d(b, e) + vv(a) * d(e, b));
                            rhs -= 0.5 * dk(b) * (vv(a) * d(c, e) + vv(c) * d(a, e));
                            rhs -= 0.5 * dk(e) * (vv(a) * d(c, b) + vv(c) * d(a, b));
                        }
                    }
                }
            }
            (lhs, rhs)
        })
        .unzip();
    let lhs = grid.integrate(&lhs_v);
    let rhs = grid.integrate(&rhs_v);
    let defect = (lhs - rhs).abs();
    let scale = lhs.abs().max(rhs.abs());
    DivCurlDefect {
        lhs,
        rhs,
        defect,
        relative: if scale > 0.0 { defect / scale } else { 0.0 },
    }
}

/// Multiplies every Fourier coefficient by a common random phase per
/// wavevector, odd under `k → −k`. Fourier magnitudes are kept, and so is
/// any linear constraint between components such as `S = ∂s`.
pub fn phase_variant(grid: &TorusGrid, fields: &[&[f64]], seed: u64) -> Vec<Vec<f64>> {
    let n = grid.len();
    let dims = grid.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
    for idx in 0..n {
        let m = grid.multi_index(idx);
        let conj = grid.index(std::array::from_fn(|a| (dims[a] - m[a]) % dims[a]));
        if conj == idx {
            theta[idx] = 0.0;
        } else if conj < idx {
            theta[idx] = -theta[conj];
        }
    }
    fields
        .iter()
        .map(|f| {
            let mut fh = grid.fft3(f);
            for (z, t) in fh.iter_mut().zip(&theta) {
                *z *= Complex64::from_polar(1.0, *t);
            }
            grid.ifft3(fh)
        })
        .collect()
}

/// Number of randomized variants added to the state in the probe family.
pub const PROBE_VARIANTS: usize = 20;
/// Bisection stops once the bracket is narrower than this, relative.
const BISECTION_RTOL: f64 = 1e-6;
/// Smallest admissible `α`.
pub const ALPHA_FLOOR: f64 = 1e-6;

/// Probe-level test: `𝔼²_α ≥ α(λ²/2)·high + ½·low`, the chain in the
/// comparison lemma that the lower bound rests on.
fn lower_bound_holds(p: &InnerPieces, lambda: f64, alpha: f64) -> bool {
    alpha * p.top + p.low >= alpha * 0.5 * lambda * lambda * p.high + 0.5 * p.low
}

/// Largest `α ∈ (0, 1]` for which the lower comparison holds on the state
/// plus [`PROBE_VARIANTS`] phase-randomized variants, and the empirical
/// constants at that `α`.
pub fn coercivity_check(st: &ExtendedState, n: usize) -> Result<EllipticEnergyReport, EnergyError> {
    let m_inv = g_inverse_field(st);
    let (w, s) = vorticity_entropy(st);
    coercivity_for(st.grid(), &m_inv, n, &w, &s, 0x5eed)
}

/// [`coercivity_check`] for explicit forms and metric.
pub fn coercivity_for(grid: &TorusGrid, m_inv: &[SpatialInvMetric], n: usize, w: &OneForm, s: &OneForm, seed: u64) -> Result<EllipticEnergyReport, EnergyError> {
    let (lambda, big_lambda) = eigen_bounds(m_inv)?;
    let mut probes: Vec<(OneForm, OneForm)> = vec![(w.clone(), s.clone())];
    let all: Vec<&[f64]> = w.iter().chain(s.iter()).map(|v| v.as_slice()).collect();
    for k in 0..PROBE_VARIANTS {
        let mut v = phase_variant(grid, &all, seed.wrapping_add(k as u64)).into_iter();
        let wv: OneForm = std::array::from_fn(|_| v.next().expect("six fields"));
        let sv: OneForm = std::array::from_fn(|_| v.next().expect("six fields"));
        probes.push((wv, sv));
    }
    let mut pieces = Vec::new();
    let mut norms = Vec::new();
    for (pw, ps) in &probes {
        let p = inner_pieces(grid, m_inv, n, pw, ps)?;
        check_curl(&p)?;
        // Zero probes carry no information.
        if p.low > 0.0 {
            norms.push(elliptic_norm(grid, n, pw, ps)?);
            pieces.push(p);
        }
    }
    let main = inner_pieces(grid, m_inv, n, w, s)?;
    if pieces.is_empty() {
        return Ok(EllipticEnergyReport {
            inner: 0.0,
            energy: 0.0,
            alpha: 1.0,
            n,
            c_lower: 0.0,
            c_upper: 0.0,
            lambda,
            big_lambda,
            curl_s: main.curl_s,
            probes: 0,
        });
    }
    let ok = |a: f64| pieces.iter().all(|p| lower_bound_holds(p, lambda, a));
    let alpha = if ok(1.0) {
        1.0
    } else {
        if !ok(ALPHA_FLOOR) {
            return Err(EnergyError::SearchFailure { floor: ALPHA_FLOOR });
        }
        let (mut lo, mut hi) = (ALPHA_FLOOR, 1.0);
        while hi - lo > BISECTION_RTOL * hi {
            let mid = 0.5 * (lo + hi);
            if ok(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    let mut c_lower = 0.0f64;
    let mut c_upper = 0.0f64;
    for (p, nm) in pieces.iter().zip(&norms) {
        let e = (alpha * p.top + p.low).sqrt();
        c_lower = c_lower.max(nm / e);
        c_upper = c_upper.max(e / nm);
    }
    let inner = alpha * main.top + main.low;
    Ok(EllipticEnergyReport {
        inner,
        energy: inner.max(0.0).sqrt(),
        alpha,
        n,
        c_lower,
        c_upper,
        lambda,
        big_lambda,
        curl_s: main.curl_s,
        probes: pieces.len(),
    })
}

/// Norm time series and their exponential envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub n: usize,
    pub times: Vec<f64>,
    /// `(label, series)` for `‖h‖_{H^N}`, `Σ‖u^α − δ₀^α‖_{H^N}`,
    /// `‖s‖_{H^{N+1}}`, `Σ‖S^α‖_{H^N}`, `Σ‖ϖ^α‖_{H^N}`.
    pub norms: Vec<(String, Vec<f64>)>,
    /// Smallest `C` with `norm(t) ≤ norm(0) e^{Ct}` for every series.
    pub rates: Vec<(String, f64)>,
    pub envelope_rate: f64,
    /// Largest `norm(t)/norm(0)` per series.
    pub max_growth: Vec<(String, f64)>,
    /// Set when the log-growth rate over the second half of the run exceeds
    /// twice that of the first half by more than a unit rate.
    pub super_exponential: bool,
}

pub const REGULARITY_LABELS: [&str; 5] = ["h_HN", "u_HN", "s_HN+1", "S_HN", "varpi_HN"];

/// The five regularity norms at one slice.
pub fn regularity_sample(st: &ExtendedState, n: usize) -> Result<[f64; 5], EnergyError> {
    let g = st.grid();
    let c = &st.closure;
    let h = g.multi_index_norm(&c.h.coeffs[0], n)?;
    let u0m: Vec<f64> = st.u0.coeffs[0].iter().map(|v| v - 1.0).collect();
    let mut u = g.multi_index_norm(&u0m, n)?;
    for a in 0..3 {
        u += g.multi_index_norm(&c.u[a].coeffs[0], n)?;
    }
    let s = g.multi_index_norm(&c.s.coeffs[0], n + 1)?;
    let mut sg = g.multi_index_norm(&st.s0.coeffs[0], n)?;
    for a in 0..3 {
        sg += g.multi_index_norm(&c.ds[a].coeffs[0], n)?;
    }
    let mut w = 0.0;
    for a in 0..4 {
        w += g.multi_index_norm(&st.varpi[a].coeffs[0], n)?;
    }
    Ok([h, u, s, sg, w])
}

pub fn regularity_report(times: &[f64], samples: &[[f64; 5]], n: usize) -> RegularityReport {
    let series: Vec<Vec<f64>> = (0..5).map(|k| samples.iter().map(|s| s[k]).collect()).collect();
    let rate_over = |v: &[f64], from: usize, to: usize| -> f64 {
        let mut c = 0.0f64;
        for k in from + 1..=to {
            let dt = times[k] - times[from];
            if dt > 0.0 && v[from] > 0.0 && v[k] > 0.0 {
                c = c.max((v[k] / v[from]).ln() / dt);
            }
        }
        c
    };
    let last = times.len().saturating_sub(1);
    let mid = last / 2;
    let mut rates = Vec::new();
    let mut growth = Vec::new();
    let mut sup = false;
    for (k, v) in series.iter().enumerate() {
        let c = if last > 0 { rate_over(v, 0, last) } else { 0.0 };
        rates.push((REGULARITY_LABELS[k].to_string(), c));
        let g = v.iter().map(|x| if v[0] > 0.0 { x / v[0] } else { 1.0 }).fold(0.0, f64::max);
        growth.push((REGULARITY_LABELS[k].to_string(), g));
        if mid > 0 && last > mid {
            let first = rate_over(v, 0, mid);
            let second = rate_over(v, mid, last);
            if second > 2.0 * first + 1.0 {
                sup = true;
            }
        }
    }
    RegularityReport {
        n,
        times: times.to_vec(),
        norms: REGULARITY_LABELS.iter().map(|l| l.to_string()).zip(series).collect(),
        envelope_rate: rates.iter().map(|r| r.1).fold(0.0, f64::max),
        rates,
        max_growth: growth,
        super_exponential: sup,
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;
    use std::sync::Arc;

    use super::*;
    use crate::eos::EosParams;
    use crate::fluid::{complete_state, FluidState};
    use crate::initial::{default_region, InitialRecipe, RandomSpec};

    fn rest(c0: f64, n: usize) -> FluidState {
        let g = TorusGrid::cubic(n, DerivMode::Spectral).unwrap();
        FluidState::constant(&g, Arc::new(EosParams::default_constant_c(c0)), default_region(), 0.0, 0.0, [0.0; 3])
    }

    #[test]
    fn multi_index_counts() {
        assert_eq!(multi_indices(0), vec![[0, 0, 0]]);
        assert_eq!(multi_indices(2).len(), 6);
        assert_eq!(multi_indices_upto(2).len(), 10);
        assert_eq!(index_label([2, 0, 1]), "113");
    }

    #[test]
    fn simpson_is_exact_for_cubics_both_parities() {
        for n in [5usize, 6] {
            let t: Vec<f64> = (0..n).map(|k| 0.3 * k as f64).collect();
            let f: Vec<f64> = t.iter().map(|x| x * x * x - 2.0 * x + 1.0).collect();
            let tt = t[n - 1];
            let exact = tt.powi(4) / 4.0 - tt * tt + tt;
            assert!((simpson(&t, &f).unwrap() - exact).abs() < 1e-13);
        }
        assert!(matches!(simpson(&[0.0, 1.0], &[1.0, 1.0]), Err(EnergyError::InsufficientSnapshots { .. })));
        assert!(matches!(simpson(&[0.0, 1.0, 3.0], &[1.0; 3]), Err(EnergyError::NonUniformSnapshots)));
    }

    #[test]
    fn constant_scalar_energy_is_volume_over_c_cubed() {
        let c0 = 0.5;
        let st = complete_state(&rest(c0, 8)).unwrap();
        let k = 0.7;
        let phi = JetField { coeffs: vec![vec![k; st.len()], vec![0.0; st.len()], vec![0.0; st.len()]] };
        let e = wave_energy(&st, &phi);
        let c = st.eos().eval_thermo(0.0, 0.0).unwrap().c;
        let exact = k * k * (2.0 * PI).powi(3) / (c * c * c);
        assert!((e - exact).abs() < 1e-12 * exact, "{e} {exact}");
        let zero = JetField { coeffs: vec![vec![0.0; st.len()]; 3] };
        assert_eq!(wave_energy(&st, &zero), 0.0);
    }

    #[test]
    fn flat_sine_energy() {
        // With B ≡ 0 and h = 0 the sound speed is c0; c0 = 1 is the flat case.
        let st = complete_state(&rest(1.0, 16)).unwrap();
        assert!((st.eos().eval_thermo(0.0, 0.0).unwrap().c - 1.0).abs() < 1e-15);
        let g = st.grid();
        let phi = JetField { coeffs: vec![g.sample(|x| x[0].sin()).data, vec![0.0; st.len()], vec![0.0; st.len()]] };
        let vol = (2.0 * PI).powi(3);
        let exact = 0.5 * vol / 2.0 + vol / 2.0;
        assert!((wave_energy(&st, &phi) - exact).abs() < 1e-11);
    }

    #[test]
    fn explicit_density_equals_energy_current() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let c: f64 = rng.gen_range(0.2..1.0);
            let ua = [rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6)];
            let u = [(1.0f64 + ua[0] * ua[0] + ua[1] * ua[1] + ua[2] * ua[2]).sqrt(), ua[0], ua[1], ua[2]];
            let d: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            let phi = rng.gen_range(-1.0..1.0);
            let a = wave_density_point(c, &u, phi, &d);
            let b = current_density_point(c, &u, phi, &d);
            assert!((a - b).abs() < 1e-13 * (1.0 + a.abs()), "{a} {b}");
            assert!(a >= 0.0);
        }
    }

    #[test]
    fn flat_divcurl_identity_and_zero_form() {
        let g = TorusGrid::cubic(12, DerivMode::Spectral).unwrap();
        let st = InitialRecipe::random(9, &RandomSpec::default()).build(&g, Arc::new(EosParams::default_variable_c()), default_region());
        let v: OneForm = [st.h.data.clone(), st.u[0].data.clone(), st.s.data.clone()];
        let d = divcurl_identity_defect(&g, &v, &identity_field(g.len()));
        assert!(d.relative <= 1e-11, "{d:?}");
        let z: OneForm = std::array::from_fn(|_| vec![0.0; g.len()]);
        let d0 = divcurl_identity_defect(&g, &z, &identity_field(g.len()));
        assert_eq!((d0.lhs, d0.rhs), (0.0, 0.0));
    }

    #[test]
    fn single_mode_elliptic_energy_matches_hand_expansion() {
        let g = TorusGrid::cubic(12, DerivMode::Spectral).unwrap();
        let z = vec![0.0; g.len()];
        let w: OneForm = [g.sample(|x| x[0].sin()).data, z.clone(), z.clone()];
        let s: OneForm = [z.clone(), z.clone(), z.clone()];
        let m = identity_field(g.len());
        // Div term: ‖cos‖²; L² terms over I ∈ {∅, 1, 11}: 3 · (2π)³/2.
        let exact = 16.0 * PI.powi(3);
        let e2 = inner_product(&g, &m, 1.0, 3, (&w, &s), (&w, &s)).unwrap();
        assert!((e2 - exact).abs() < 1e-10 * exact, "{e2} {exact}");
        let low = inner_product(&g, &m, 0.0, 3, (&w, &s), (&w, &s)).unwrap();
        assert!((low - 12.0 * PI.powi(3)).abs() < 1e-10 * exact);
        let zero = inner_product(&g, &m, 1.0, 3, (&s, &s), (&s, &s)).unwrap();
        assert_eq!(zero, 0.0);
        let rep = coercivity_for(&g, &m, 3, &w, &s, 1).unwrap();
        assert_eq!(rep.alpha, 1.0);
        assert!((0.5..=4.0).contains(&rep.c_lower) && (0.5..=4.0).contains(&rep.c_upper), "{rep:?}");
    }

    #[test]
    fn order_below_three_is_rejected() {
        let g = TorusGrid::cubic(8, DerivMode::Spectral).unwrap();
        let z: OneForm = std::array::from_fn(|_| vec![0.0; g.len()]);
        assert!(matches!(inner_product(&g, &identity_field(g.len()), 1.0, 2, (&z, &z), (&z, &z)), Err(EnergyError::OrderTooLow(2))));
    }

    #[test]
    fn phase_variants_keep_magnitudes_and_gradients() {
        let g = TorusGrid::cubic(8, DerivMode::Spectral).unwrap();
        let st = InitialRecipe::random(2, &RandomSpec::default()).build(&g, Arc::new(EosParams::default_variable_c()), default_region());
        let s = st.s.data.clone();
        let ds = g.deriv(&s, 1);
        let v = phase_variant(&g, &[&s, &ds], 11);
        assert!((g.sobolev_norm(&v[0], 0.0).unwrap() - g.sobolev_norm(&s, 0.0).unwrap()).abs() < 1e-13);
        let dv = g.deriv(&v[0], 1);
        assert!(dv.iter().zip(&v[1]).all(|(a, b)| (a - b).abs() < 1e-13));
        assert!(s.iter().zip(&v[0]).any(|(a, b)| (a - b).abs() > 1e-4));
    }

    #[test]
    fn constant_state_regularity_is_flat() {
        let st = complete_state(&rest(0.6, 8)).unwrap();
        let a = regularity_sample(&st, 3).unwrap();
        let rep = regularity_report(&[0.0, 0.1, 0.2], &[a, a, a], 3);
        assert_eq!(rep.envelope_rate, 0.0);
        assert!(!rep.super_exponential);
    }
}
