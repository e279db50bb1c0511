//! Periodic grids on [0, 2π)³, derivative operators, quadrature and
//! Fourier-multiplier norms.
//!
//! Storage is row-major with x³ fastest: `idx = (i1 * n2 + i2) * n3 + i3`.

use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid sizes must be even and at least 8, got {0:?}")]
    BadSize([usize; 3]),
    #[error("operation needs the spectral derivative mode")]
    NeedsSpectral,
    #[error("field length {got} does not match grid size {want}")]
    LengthMismatch { got: usize, want: usize },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("sidecar: {0}")]
    Sidecar(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DerivMode {
    Spectral,
    Fd4,
}

impl fmt::Display for DerivMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DerivMode::Spectral => "spectral",
            DerivMode::Fd4 => "fd4",
        })
    }
}

struct Plans {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

pub struct TorusGrid {
    n: [usize; 3],
    mode: DerivMode,
    dealias: bool,
    plans: [Plans; 3],
}

impl fmt::Debug for TorusGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TorusGrid")
            .field("n", &self.n)
            .field("mode", &self.mode)
            .field("dealias", &self.dealias)
            .finish()
    }
}

/// Signed integer wavenumber of FFT bin `j` on an axis of `n` points. The
/// Nyquist bin maps to `-n/2`.
#[inline]
pub fn wavenumber(j: usize, n: usize) -> f64 {
    if j < n / 2 {
        j as f64
    } else {
        j as f64 - n as f64
    }
}

impl TorusGrid {
    pub fn new(n: [usize; 3], mode: DerivMode) -> Result<Arc<Self>, GridError> {
        if n.iter().any(|&k| k < 8 || k % 2 != 0) {
            return Err(GridError::BadSize(n));
        }
        let mut planner = FftPlanner::new();
        let plans = n.map(|k| Plans {
            fwd: planner.plan_fft_forward(k),
            inv: planner.plan_fft_inverse(k),
        });
        Ok(Arc::new(TorusGrid {
            n,
            mode,
            dealias: false,
            plans,
        }))
    }

    pub fn cubic(n: usize, mode: DerivMode) -> Result<Arc<Self>, GridError> {
        Self::new([n, n, n], mode)
    }

    /// Same grid with the 2/3-rule filter applied after every derivative.
    pub fn with_dealias(&self, on: bool) -> Arc<Self> {
        let mut planner = FftPlanner::new();
        Arc::new(TorusGrid {
            n: self.n,
            mode: self.mode,
            dealias: on,
            plans: self.n.map(|k| Plans {
                fwd: planner.plan_fft_forward(k),
                inv: planner.plan_fft_inverse(k),
            }),
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.n
    }

    pub fn mode(&self) -> DerivMode {
        self.mode
    }

    pub fn dealias(&self) -> bool {
        self.dealias
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.n.map(|k| 2.0 * PI / k as f64)
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing().into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn volume(&self) -> f64 {
        (2.0 * PI).powi(3)
    }

    pub fn label(&self) -> String {
        format!("{}x{}x{}", self.n[0], self.n[1], self.n[2])
    }

    #[inline]
    pub fn index(&self, i: [usize; 3]) -> usize {
        (i[0] * self.n[1] + i[1]) * self.n[2] + i[2]
    }

    #[inline]
    pub fn multi_index(&self, idx: usize) -> [usize; 3] {
        let i3 = idx % self.n[2];
        let r = idx / self.n[2];
        [r / self.n[1], r % self.n[1], i3]
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [f64; 3] {
        let i = self.multi_index(idx);
        let h = self.spacing();
        [i[0] as f64 * h[0], i[1] as f64 * h[1], i[2] as f64 * h[2]]
    }

    /// Samples `f(x¹, x², x³)` at every grid point.
    pub fn sample(self: &Arc<Self>, f: impl Fn([f64; 3]) -> f64 + Sync) -> ScalarField {
        let data = (0..self.len()).into_par_iter().map(|i| f(self.coords(i))).collect();
        ScalarField {
            grid: Arc::clone(self),
            data,
        }
    }

    pub fn constant(self: &Arc<Self>, v: f64) -> ScalarField {
        ScalarField {
            grid: Arc::clone(self),
            data: vec![v; self.len()],
        }
    }

    pub fn field(self: &Arc<Self>, data: Vec<f64>) -> Result<ScalarField, GridError> {
        if data.len() != self.len() {
            return Err(GridError::LengthMismatch {
                got: data.len(),
                want: self.len(),
            });
        }
        Ok(ScalarField {
            grid: Arc::clone(self),
            data,
        })
    }

    /// Stride and pencil start offsets for lines along `axis` (0-based).
    fn pencils(&self, axis: usize) -> (usize, Vec<usize>) {
        let [n1, n2, n3] = self.n;
        match axis {
            0 => (n2 * n3, (0..n2 * n3).collect()),
            1 => (n3, (0..n1).flat_map(|i| (0..n3).map(move |k| i * n2 * n3 + k)).collect()),
            _ => (1, (0..n1 * n2).map(|p| p * n3).collect()),
        }
    }

    /// `∂_a` of raw values along 0-based `axis`.
    pub fn deriv(&self, f: &[f64], axis: usize) -> Vec<f64> {
        assert_eq!(f.len(), self.len());
        match self.mode {
            DerivMode::Spectral => self.spectral_line_op(f, axis, |k, n| {
                if 2 * k.abs() as usize == n {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(0.0, k)
                }
            }),
            DerivMode::Fd4 => self.fd4(f, axis),
        }
    }

    /// Applies a per-axis Fourier multiplier `m(k, n)` along `axis`; the
    /// multiplier must map real data to real data.
    fn spectral_line_op(&self, f: &[f64], axis: usize, m: impl Fn(f64, usize) -> Complex64 + Sync) -> Vec<f64> {
        let n = self.n[axis];
        let (stride, starts) = self.pencils(axis);
        let plans = &self.plans[axis];
        let cut = n as f64 / 3.0;
        let mult: Vec<Complex64> = (0..n)
            .map(|j| {
                let k = wavenumber(j, n);
                if self.dealias && k.abs() > cut {
                    Complex64::new(0.0, 0.0)
                } else {
                    m(k, n) / n as f64
                }
            })
            .collect();
        let scratch_len = plans.fwd.get_inplace_scratch_len().max(plans.inv.get_inplace_scratch_len());
        // Two real pencils travel together as the real and imaginary parts.
        let pairs: Vec<(usize, Option<usize>)> = starts
            .chunks(2)
            .map(|c| (c[0], c.get(1).copied()))
            .collect();
        let lines: Vec<(usize, Option<usize>, Vec<Complex64>)> = pairs
            .par_iter()
            .map_init(
                || vec![Complex64::new(0.0, 0.0); scratch_len],
                |scratch, &(a, b)| {
                    let mut buf: Vec<Complex64> = (0..n)
                        .map(|j| Complex64::new(f[a + j * stride], b.map_or(0.0, |b| f[b + j * stride])))
                        .collect();
                    plans.fwd.process_with_scratch(&mut buf, scratch);
                    for (v, w) in buf.iter_mut().zip(mult.iter()) {
                        *v *= *w;
                    }
                    plans.inv.process_with_scratch(&mut buf, scratch);
                    (a, b, buf)
                },
            )
            .collect();
        let mut out = vec![0.0; f.len()];
        for (a, b, buf) in lines {
            for (j, v) in buf.iter().enumerate() {
                out[a + j * stride] = v.re;
                if let Some(b) = b {
                    out[b + j * stride] = v.im;
                }
            }
        }
        out
    }

    fn fd4(&self, f: &[f64], axis: usize) -> Vec<f64> {
        let n = self.n[axis];
        let inv12h = 1.0 / (12.0 * self.spacing()[axis]);
        (0..f.len())
            .into_par_iter()
            .map(|idx| {
                let mut i = self.multi_index(idx);
                let c = i[axis];
                let mut at = |off: isize| {
                    i[axis] = (c as isize + off).rem_euclid(n as isize) as usize;
                    f[self.index(i)]
                };
                (-at(2) + 8.0 * at(1) - 8.0 * at(-1) + at(-2)) * inv12h
            })
            .collect()
    }

    /// Mean times volume; exact for trigonometric polynomials below Nyquist.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        let sum: f64 = f.par_iter().sum();
        sum * self.volume() / self.len() as f64
    }

    /// Full 3-D forward transform (unnormalized).
    pub fn fft3(&self, f: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = f.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        for axis in 0..3 {
            self.complex_axis(&mut buf, axis, true);
        }
        buf
    }

    /// Inverse of [`fft3`](Self::fft3), returning the real part.
    pub fn ifft3(&self, mut buf: Vec<Complex64>) -> Vec<f64> {
        for axis in 0..3 {
            self.complex_axis(&mut buf, axis, false);
        }
        let norm = self.len() as f64;
        buf.into_iter().map(|z| z.re / norm).collect()
    }

    fn complex_axis(&self, buf: &mut [Complex64], axis: usize, forward: bool) {
        let n = self.n[axis];
        let (stride, starts) = self.pencils(axis);
        let plan = if forward { &self.plans[axis].fwd } else { &self.plans[axis].inv };
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        for a in starts {
            for j in 0..n {
                line[j] = buf[a + j * stride];
            }
            plan.process_with_scratch(&mut line, &mut scratch);
            for j in 0..n {
                buf[a + j * stride] = line[j];
            }
        }
    }

    /// Wavenumber triple of transform bin `idx`.
    pub fn wavevector(&self, idx: usize) -> [f64; 3] {
        let i = self.multi_index(idx);
        [
            wavenumber(i[0], self.n[0]),
            wavenumber(i[1], self.n[1]),
            wavenumber(i[2], self.n[2]),
        ]
    }

    /// `(Σ_k w(k) |f̂_k|²)^{1/2}` with Parseval normalization, so `w ≡ 1`
    /// gives the L² norm.
    pub fn multiplier_norm(&self, f: &[f64], w: impl Fn([f64; 3]) -> f64) -> Result<f64, GridError> {
        if self.mode != DerivMode::Spectral {
            return Err(GridError::NeedsSpectral);
        }
        let fh = self.fft3(f);
        let n = self.len() as f64;
        let mut acc = 0.0;
        for (idx, z) in fh.iter().enumerate() {
            acc += w(self.wavevector(idx)) * z.norm_sqr();
        }
        Ok((acc * self.volume() / (n * n)).sqrt())
    }

    /// `H^r` norm with weight `(1 + |k|²)^r`.
    pub fn sobolev_norm(&self, f: &[f64], r: f64) -> Result<f64, GridError> {
        self.multiplier_norm(f, |k| (1.0 + k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).powf(r))
    }

    /// Integer-order norm `(Σ_{|I| ≤ order} ‖∂_I f‖²)^{1/2}` over unordered
    /// multi-indices `∂_1^{i1} ∂_2^{i2} ∂_3^{i3}`.
    pub fn multi_index_norm(&self, f: &[f64], order: usize) -> Result<f64, GridError> {
        let w = |k: [f64; 3]| {
            let mut acc = 0.0;
            for i1 in 0..=order {
                for i2 in 0..=order - i1 {
                    for i3 in 0..=order - i1 - i2 {
                        acc += k[0].powi(2 * i1 as i32) * k[1].powi(2 * i2 as i32) * k[2].powi(2 * i3 as i32);
                    }
                }
            }
            acc
        };
        self.multiplier_norm(f, w)
    }
}

/// Values of one real field on a grid.
#[derive(Clone)]
pub struct ScalarField {
    grid: Arc<TorusGrid>,
    pub data: Vec<f64>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("grid", &self.grid.label())
            .field("max_abs", &self.max_abs())
            .finish()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sidecar {
    pub dims: [usize; 3],
    pub mode: DerivMode,
    pub layout: String,
    pub fields: Vec<String>,
    #[serde(default)]
    pub time: f64,
    #[serde(default)]
    pub extra: serde_json::Value,
}

impl ScalarField {
    pub fn grid(&self) -> &Arc<TorusGrid> {
        &self.grid
    }

    pub fn partial_derivative(&self, axis: usize) -> ScalarField {
        assert!((1..=3).contains(&axis), "axis must be 1, 2 or 3");
        ScalarField {
            grid: Arc::clone(&self.grid),
            data: self.grid.deriv(&self.data, axis - 1),
        }
    }

    pub fn integrate(&self) -> f64 {
        self.grid.integrate(&self.data)
    }

    pub fn sobolev_norm(&self, r: f64) -> Result<f64, GridError> {
        self.grid.sobolev_norm(&self.data, r)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn l2_norm(&self) -> f64 {
        let sq: Vec<f64> = self.data.iter().map(|v| v * v).collect();
        self.grid.integrate(&sq).sqrt()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            grid: Arc::clone(&self.grid),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip(&self, o: &ScalarField, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        ScalarField {
            grid: Arc::clone(&self.grid),
            data: self.data.iter().zip(&o.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }
}

/// Writes fields as little-endian f64 blocks (x³ fastest) plus a JSON sidecar
/// at `<path>.json`.
pub fn write_fields(path: &Path, fields: &[(&str, &ScalarField)], time: f64, extra: serde_json::Value) -> Result<(), GridError> {
    let grid = fields.first().map(|(_, f)| Arc::clone(f.grid())).expect("at least one field");
    let mut bytes = Vec::with_capacity(fields.len() * grid.len() * 8);
    for (_, f) in fields {
        for v in &f.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::File::create(path)?.write_all(&bytes)?;
    let side = Sidecar {
        dims: grid.dims(),
        mode: grid.mode(),
        layout: "row-major, x3 fastest, f64 little-endian".into(),
        fields: fields.iter().map(|(n, _)| n.to_string()).collect(),
        time,
        extra,
    };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&side)?)?;
    Ok(())
}

/// Reads a file written by [`write_fields`].
pub fn read_fields(path: &Path) -> Result<(Arc<TorusGrid>, Sidecar, Vec<ScalarField>), GridError> {
    let side: Sidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
    let grid = TorusGrid::new(side.dims, side.mode)?;
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let n = grid.len();
    let want = n * side.fields.len() * 8;
    if bytes.len() != want {
        return Err(GridError::LengthMismatch {
            got: bytes.len() / 8,
            want: want / 8,
        });
    }
    let fields = bytes
        .chunks_exact(8 * n)
        .map(|block| {
            let data = block
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect();
            ScalarField {
                grid: Arc::clone(&grid),
                data,
            }
        })
        .collect();
    Ok((grid, side, fields))
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_roundtrip() {
        let g = TorusGrid::new([8, 10, 12], DerivMode::Spectral).unwrap();
        for idx in [0, 1, 17, 959] {
            assert_eq!(g.index(g.multi_index(idx)), idx);
        }
    }

    #[test]
    fn rejects_odd_or_small() {
        assert!(TorusGrid::new([9, 8, 8], DerivMode::Spectral).is_err());
        assert!(TorusGrid::new([6, 8, 8], DerivMode::Spectral).is_err());
    }

    #[test]
    fn fft3_roundtrip() {
        let g = TorusGrid::new([8, 8, 10], DerivMode::Spectral).unwrap();
        let f = g.sample(|x| (x[0] + 2.0 * x[2]).sin() + x[1].cos().powi(3));
        let back = g.ifft3(g.fft3(&f.data));
        for (a, b) in f.data.iter().zip(back) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn derivative_along_each_axis_with_odd_pencil_count() {
        let g = TorusGrid::new([8, 10, 12], DerivMode::Spectral).unwrap();
        let f = g.sample(|x| (x[0] + 2.0 * x[1] - 3.0 * x[2]).sin());
        let want = [1.0, 2.0, -3.0];
        for a in 1..=3 {
            let d = f.partial_derivative(a);
            for i in 0..g.len() {
                let x = g.coords(i);
                let exact = want[a - 1] * (x[0] + 2.0 * x[1] - 3.0 * x[2]).cos();
                assert!((d.data[i] - exact).abs() < 1e-12);
            }
        }
    }
}
