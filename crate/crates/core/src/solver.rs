//! Classical RK4 evolution of the first-order system with spectral space
//! derivatives. No dissipation is added, so runs must stay in the smooth,
//! small-amplitude regime.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fluid::{FluidError, FluidState};
use crate::geometry::cfl_speed;

pub use crate::fluid::{rhs, Rates};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid evolution config: {0}")]
    Config(String),
    #[error("state leaves the hyperbolicity region at t = {time} ({count} points, first {first:?})")]
    RegionExit {
        time: f64,
        count: usize,
        first: Vec<(usize, [f64; 5])>,
        record: Box<TrajectoryRecord>,
    },
    #[error("fixed dt = {dt} exceeds the CFL limit {limit} at t = {time}")]
    Cfl { dt: f64, limit: f64, time: f64 },
    #[error(transparent)]
    Fluid(FluidError),
}

/// How the step size is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StepControl {
    /// `dt = cfl · Δx / max speed`, recomputed each step; the last step is
    /// shortened to land on the final time.
    Cfl(f64),
    /// `n` equal steps; it errors if any step exceeds the CFL bound with
    /// factor 1.
    Steps(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub final_time: f64,
    pub step: StepControl,
    /// Keep every `snapshot_every`-th state (and the final one); 0 keeps none.
    pub snapshot_every: usize,
    /// Evolve `u⁰` with its `A⁰`-solve rate alongside the algebraic value,
    /// and monitor `max|u_κu^κ + 1|` with the evolved copy.
    pub evolve_u0: bool,
    pub max_steps: usize,
}

impl EvolutionConfig {
    pub fn cfl(final_time: f64, cfl: f64) -> Self {
        EvolutionConfig {
            final_time,
            step: StepControl::Cfl(cfl),
            snapshot_every: 0,
            evolve_u0: false,
            max_steps: 1_000_000,
        }
    }

    pub fn steps(final_time: f64, n: usize) -> Self {
        EvolutionConfig {
            step: StepControl::Steps(n),
            ..Self::cfl(final_time, 0.5)
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.final_time >= 0.0 && self.final_time.is_finite()) {
            return Err(SolverError::Config(format!("final_time = {} must be finite and ≥ 0", self.final_time)));
        }
        match self.step {
            StepControl::Cfl(c) if !(c > 0.0 && c < 1.0) => Err(SolverError::Config(format!("cfl = {c} must lie in (0, 1)"))),
            StepControl::Steps(0) if self.final_time > 0.0 => Err(SolverError::Config("steps must be ≥ 1".into())),
            _ => Ok(()),
        }
    }
}

/// Per-step monitors; `times[k]` is the time after step `k`, with
/// `times[0]` the initial time.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    /// `max|u_κu^κ + 1|` at each recorded time.
    pub drift: Vec<f64>,
    /// Largest characteristic speed at the start of each step.
    pub cfl_speed: Vec<f64>,
    pub dt: Vec<f64>,
    pub contained: bool,
    /// Times at which snapshots were taken.
    pub snapshot_times: Vec<f64>,
}

impl TrajectoryRecord {
    pub fn steps(&self) -> usize {
        self.dt.len()
    }

    pub fn max_drift(&self) -> f64 {
        self.drift.iter().copied().fold(0.0, f64::max)
    }

    /// CSV with header `step,time,dt,cfl_speed,drift`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,time,dt,cfl_speed,drift\n");
        for (k, t) in self.times.iter().enumerate() {
            let dt = if k == 0 { 0.0 } else { self.dt[k - 1] };
            let sp = if k == 0 { self.cfl_speed.first().copied().unwrap_or(0.0) } else { self.cfl_speed[k - 1] };
            out.push_str(&format!("{k},{t:.17e},{dt:.17e},{sp:.17e},{:.17e}\n", self.drift[k]));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Evolution {
    pub state: FluidState,
    pub record: TrajectoryRecord,
    pub snapshots: Vec<FluidState>,
}

/// Largest characteristic speed over the grid.
pub fn max_cfl_speed(state: &FluidState) -> Result<f64, FluidError> {
    let eos = &*state.eos;
    (0..state.grid().len())
        .into_par_iter()
        .map(|i| {
            let p = state.point(i);
            let c = eos.sound_and_q(p[0], p[1])?.0;
            let u0 = (1.0 + p[2] * p[2] + p[3] * p[3] + p[4] * p[4]).sqrt();
            Ok(cfl_speed(c, &[u0, p[2], p[3], p[4]]).cfl())
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}

fn drift(state: &FluidState, u0: Option<&[f64]>) -> f64 {
    let n = state.grid().len();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let p = state.point(i);
            let us = p[2] * p[2] + p[3] * p[3] + p[4] * p[4];
            let w = match u0 {
                Some(v) => v[i],
                None => (1.0 + us).sqrt(),
            };
            (us - w * w + 1.0).abs()
        })
        .reduce(|| 0.0, f64::max)
}

fn axpy(base: &[f64], k: &[f64], a: f64) -> Vec<f64> {
    base.iter().zip(k).map(|(x, y)| x + a * y).collect()
}

fn rates_vec(r: Rates) -> ([Vec<f64>; 5], Vec<f64>) {
    let [u1, u2, u3] = r.u;
    ([r.h, r.s, u1, u2, u3], r.u0)
}

fn stage_error(e: FluidError, record: &TrajectoryRecord) -> SolverError {
    match e {
        FluidError::RegionExit { count, first, time } => SolverError::RegionExit {
            time,
            count,
            first,
            record: Box::new(TrajectoryRecord {
                contained: false,
                ..record.clone()
            }),
        },
        other => SolverError::Fluid(other),
    }
}

/// One classical RK4 step; returns the new state and the advanced `u⁰` copy.
pub fn rk4_step(state: &FluidState, u0: Option<&[f64]>, dt: f64) -> Result<(FluidState, Option<Vec<f64>>), FluidError> {
    let t = state.time;
    let y: [&[f64]; 5] = state.fields().map(|f| f.data.as_slice());
    let stage = |c: &[Vec<f64>; 5], a: f64, tt: f64| -> FluidState {
        state.with_data(std::array::from_fn(|m| axpy(y[m], &c[m], a)), tt)
    };
    let (k1, w1) = rates_vec(rhs(state)?);
    let (k2, w2) = rates_vec(rhs(&stage(&k1, 0.5 * dt, t + 0.5 * dt))?);
    let (k3, w3) = rates_vec(rhs(&stage(&k2, 0.5 * dt, t + 0.5 * dt))?);
    let (k4, w4) = rates_vec(rhs(&stage(&k3, dt, t + dt))?);
    let combine = |base: &[f64], a: &[f64], b: &[f64], c: &[f64], d: &[f64]| -> Vec<f64> {
        (0..base.len()).map(|i| base[i] + dt / 6.0 * (a[i] + 2.0 * b[i] + 2.0 * c[i] + d[i])).collect()
    };
    let next: [Vec<f64>; 5] = std::array::from_fn(|m| combine(y[m], &k1[m], &k2[m], &k3[m], &k4[m]));
    let u0_next = u0.map(|w| combine(w, &w1, &w2, &w3, &w4));
    Ok((state.with_data(next, t + dt), u0_next))
}

/// Integrates from `initial.time` to `initial.time + final_time`.
pub fn evolve(initial: &FluidState, cfg: &EvolutionConfig) -> Result<Evolution, SolverError> {
    cfg.validate()?;
    let t_end = initial.time + cfg.final_time;
    let dx = initial.grid().min_spacing();
    let mut state = initial.clone();
    let mut u0 = cfg.evolve_u0.then(|| state.u0());
    let mut record = TrajectoryRecord {
        contained: true,
        ..Default::default()
    };
    let mut snapshots = Vec::new();
    if let Err(e) = state.check_region() {
        return Err(stage_error(e, &record));
    }
    record.times.push(state.time);
    record.drift.push(drift(&state, u0.as_deref()));
    if cfg.snapshot_every > 0 {
        record.snapshot_times.push(state.time);
        snapshots.push(state.clone());
    }
    let fixed_n = match cfg.step {
        StepControl::Steps(n) => Some(n),
        StepControl::Cfl(_) => None,
    };
    let mut k = 0usize;
    loop {
        let done = match fixed_n {
            Some(n) => k >= n,
            None => state.time >= t_end - 1e-14 * t_end.abs().max(1.0),
        };
        if done {
            break;
        }
        if k >= cfg.max_steps {
            return Err(SolverError::Config(format!("max_steps = {} reached before t = {t_end}", cfg.max_steps)));
        }
        let speed = max_cfl_speed(&state).map_err(|e| stage_error(e, &record))?;
        let limit = if speed > 0.0 { dx / speed } else { f64::INFINITY };
        let dt = match cfg.step {
            StepControl::Steps(n) => {
                let dt = cfg.final_time / n as f64;
                if dt > limit {
                    return Err(SolverError::Cfl { dt, limit, time: state.time });
                }
                dt
            }
            StepControl::Cfl(c) => {
                let dt = c * limit;
                let rest = t_end - state.time;
                if !dt.is_finite() || dt >= rest {
                    rest
                } else {
                    dt
                }
            }
        };
        let (next, w) = rk4_step(&state, u0.as_deref(), dt).map_err(|e| stage_error(e, &record))?;
        state = next;
        u0 = w;
        k += 1;
        if fixed_n == Some(k) {
            state.time = t_end;
        }
        if let Err(e) = state.check_region() {
            return Err(stage_error(e, &record));
        }
        record.times.push(state.time);
        record.dt.push(dt);
        record.cfl_speed.push(speed);
        record.drift.push(drift(&state, u0.as_deref()));
        let last = match fixed_n {
            Some(n) => k == n,
            None => state.time >= t_end - 1e-14 * t_end.abs().max(1.0),
        };
        if cfg.snapshot_every > 0 && (k % cfg.snapshot_every == 0 || last) {
            record.snapshot_times.push(state.time);
            snapshots.push(state.clone());
        }
    }
    Ok(Evolution { state, record, snapshots })
}

/// `u^a → −u^a`, which reverses the direction of time for the Euler system.
pub fn reverse_velocity(state: &FluidState) -> FluidState {
    let mut out = state.clone();
    for c in &mut out.u {
        *c = c.map(|v| -v);
    }
    out
}

/// Max pointwise difference over all five unknowns.
pub fn state_distance(a: &FluidState, b: &FluidState) -> f64 {
    a.fields()
        .iter()
        .zip(b.fields().iter())
        .map(|(x, y)| x.data.iter().zip(&y.data).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max)
}

/// Phase of the `x¹`-fundamental of `f`, i.e. the peak location of its
/// cross-correlation with `sin x¹` on the circle.
fn fundamental_phase(state: &FluidState, f: &[f64]) -> f64 {
    let g = state.grid();
    let (mut re, mut im) = (0.0, 0.0);
    for (i, v) in f.iter().enumerate() {
        let x = g.coords(i)[0];
        re += v * x.cos();
        im -= v * x.sin();
    }
    im.atan2(re)
}

/// Signal speed along `x¹` from the drift of the cross-correlation peak of
/// `h`. Successive snapshots must move the profile by less than half a
/// period; the phase is unwrapped and fitted linearly in time.
pub fn propagation_speed(snapshots: &[FluidState]) -> Option<f64> {
    if snapshots.len() < 2 {
        return None;
    }
    let mut phases = Vec::with_capacity(snapshots.len());
    let mut prev: Option<f64> = None;
    for s in snapshots {
        let mut p = fundamental_phase(s, &s.h.data);
        if let Some(q) = prev {
            while p - q > std::f64::consts::PI {
                p -= std::f64::consts::TAU;
            }
            while p - q < -std::f64::consts::PI {
                p += std::f64::consts::TAU;
            }
        }
        prev = Some(p);
        phases.push(p);
    }
    let t: Vec<f64> = snapshots.iter().map(|s| s.time).collect();
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let pm = phases.iter().sum::<f64>() / n;
    let num: f64 = t.iter().zip(&phases).map(|(a, b)| (a - tm) * (b - pm)).sum();
    let den: f64 = t.iter().map(|a| (a - tm) * (a - tm)).sum();
    // A right-moving profile f(x − ct) has phase −ct.
    (den > 0.0).then(|| -num / den)
}

/// Observed temporal order from final states at `dt, dt/2, dt/4`.
pub fn richardson_order(coarse: &FluidState, mid: &FluidState, fine: &FluidState) -> f64 {
    (state_distance(coarse, mid) / state_distance(mid, fine)).log2()
}
