//! The five commands. Each returns its gates; files go through the writer.

use std::sync::Arc;

use anl_core::energy::{
    coercivity_check, divcurl_identity_defect, g_inverse_field, identity_field, regularity_report, regularity_sample,
    vorticity_entropy, wave_reports, wave_sobolev_side, EnergyAccumulator, IdentityDefect, Tracking, WaveScalar, REGULARITY_LABELS,
};
use anl_core::fluid::{complete_state, ExtendedState, FluidState};
use anl_core::grid::{write_fields, TorusGrid};
use anl_core::solver::{evolve, propagation_speed, EvolutionConfig};
use anl_core::structure::{convergence_study, identity_suite, reconstruction_identities, theorem_residuals, IdentityClass, FLOOR};
use serde_json::json;

use crate::config::{InitialKind, RunConfig};
use crate::report::{num, Gate, ReportWriter, Table};
use crate::CliError;

/// Most negative pointwise wave-energy density accepted as round-off.
const DENSITY_ROUNDOFF: f64 = -1e-13;

pub struct Outcome {
    pub gates: Vec<Gate>,
    pub details: serde_json::Value,
}

fn initial_on(cfg: &RunConfig, grid: &Arc<TorusGrid>) -> Result<FluidState, CliError> {
    let eos = cfg.eos_params()?;
    let recipe = cfg.recipe(&eos)?;
    Ok(recipe.build(grid, eos, cfg.region()))
}

fn complete_on(cfg: &RunConfig, n: [usize; 3]) -> Result<ExtendedState, CliError> {
    let g = cfg.grid_of(n)?;
    Ok(complete_state(&initial_on(cfg, &g)?)?)
}

fn coarse_dims(cfg: &RunConfig) -> [usize; 3] {
    if cfg.grid.coarse > 0 {
        [cfg.grid.coarse; 3]
    } else {
        cfg.dims().map(|n| (n / 2).max(4))
    }
}

fn dims_label(n: [usize; 3]) -> String {
    format!("{}x{}x{}", n[0], n[1], n[2])
}

pub fn verify(cfg: &RunConfig, w: &mut ReportWriter) -> Result<Outcome, CliError> {
    let tol = &cfg.tolerances;
    let sizes = [coarse_dims(cfg), cfg.dims()];
    let reports: Vec<_> = sizes
        .iter()
        .map(|&n| complete_on(cfg, n).map(|st| theorem_residuals(&st, cfg.fault())))
        .collect::<Result<_, _>>()?;
    let mut t = Table::new(&["equation", "size", "linf", "l2"]);
    for (n, rep) in sizes.iter().zip(&reports) {
        for r in &rep.rows {
            t.push(vec![r.label.clone(), dims_label(*n), num(r.linf), num(r.l2)]);
        }
    }
    w.csv("residuals.csv", &t)?;
    let mut gates = Vec::new();
    for (c, f) in reports[0].rows.iter().zip(&reports[1].rows) {
        gates.push(Gate::le(format!("{}:linf", f.label), f.linf, tol.residual));
        gates.push(Gate::decay(format!("{}:decay", f.label), c.linf, f.linf, tol.decay, FLOOR));
    }
    Ok(Outcome { gates, details: json!({ "fault": cfg.fault.clone(), "sizes": sizes }) })
}

pub fn identities(cfg: &RunConfig, w: &mut ReportWriter) -> Result<Outcome, CliError> {
    let tol = &cfg.tolerances;
    let sizes = [coarse_dims(cfg), cfg.dims()];
    let mut per = Vec::new();
    for &n in &sizes {
        let st = complete_on(cfg, n)?;
        let mut cases = identity_suite(&st);
        cases.extend(reconstruction_identities(&st));
        per.push(cases);
    }
    let mut t = Table::new(&["identity", "class", "size", "linf", "relative"]);
    for (n, cases) in sizes.iter().zip(&per) {
        for c in cases {
            t.push(vec![c.id.to_string(), format!("{:?}", c.class).to_lowercase(), dims_label(*n), num(c.linf), num(c.relative)]);
        }
    }
    w.csv("identities.csv", &t)?;
    let mut gates = Vec::new();
    for (c, f) in per[0].iter().zip(&per[1]) {
        match f.class {
            IdentityClass::Kinematic => {
                gates.push(Gate::le(format!("{}:relative", f.id), f.relative.max(c.relative), tol.kinematic));
            }
            IdentityClass::Dynamic => {
                gates.push(Gate::le(format!("{}:linf", f.id), f.linf, tol.dynamic));
                gates.push(Gate::decay(format!("{}:decay", f.id), c.linf, f.linf, tol.decay, FLOOR));
            }
        }
    }
    Ok(Outcome { gates, details: json!({ "sizes": sizes }) })
}

fn trajectory_table(rec: &anl_core::solver::TrajectoryRecord) -> Table {
    let mut t = Table::new(&["step", "time", "dt", "cfl_speed", "drift"]);
    for k in 0..rec.times.len() {
        let dt = if k == 0 { 0.0 } else { rec.dt[k - 1] };
        let sp = if k == 0 { rec.cfl_speed.first().copied().unwrap_or(0.0) } else { rec.cfl_speed[k - 1] };
        t.push(vec![k.to_string(), num(rec.times[k]), num(dt), num(sp), num(rec.drift[k])]);
    }
    t
}

pub fn evolve_cmd(cfg: &RunConfig, w: &mut ReportWriter) -> Result<Outcome, CliError> {
    let tol = &cfg.tolerances;
    let g = cfg.grid_of(cfg.dims())?;
    let init = initial_on(cfg, &g)?;
    let ecfg = cfg.evolution.to_config();
    let ev = evolve(&init, &ecfg)?;
    w.csv("trajectory.csv", &trajectory_table(&ev.record))?;
    if cfg.evolution.write_snapshots {
        for (k, s) in ev.snapshots.iter().enumerate() {
            let path = w.dir().join(format!("snapshot_{k:04}.bin"));
            let fields = [("h", &s.h), ("s", &s.s), ("u1", &s.u[0]), ("u2", &s.u[1]), ("u3", &s.u[2])];
            write_fields(&path, &fields, s.time, json!({ "eos": s.eos.tag(), "seed": cfg.seed }))
                .map_err(|e| CliError::Runtime(e.to_string()))?;
        }
    }
    let mut gates = Vec::new();
    if ecfg.evolve_u0 {
        gates.push(Gate::le("constraint_drift", ev.record.max_drift(), tol.drift));
    }
    gates.push(Gate::truth("contained", ev.record.contained));
    let mut details = json!({
        "steps": ev.record.steps(),
        "final_time": ev.state.time,
        "max_drift": ev.record.max_drift(),
        "step_control": cfg.step_label(),
        "snapshots": ev.snapshots.len(),
    });
    if cfg.initial.kind == InitialKind::Acoustic {
        let c = init.eos.eval_thermo(0.0, 0.0)?.c;
        if let Some(v) = propagation_speed(&ev.snapshots) {
            gates.push(Gate::le("acoustic_speed_relative_error", (v - c).abs() / c, 0.02));
            details["measured_speed"] = json!(v);
            details["sound_speed"] = json!(c);
        } else {
            gates.push(Gate::truth("acoustic_speed_measured", false));
        }
    }
    Ok(Outcome { gates, details })
}

fn defect_gate(d: &IdentityDefect, rel: f64, floor: f64) -> Gate {
    if d.defect <= floor {
        return Gate { name: format!("defect:{}", d.label), value: d.defect, threshold: floor, relation: "floor", pass: true };
    }
    Gate::le(format!("defect:{}", d.label), d.relative, rel)
}

pub fn energy(cfg: &RunConfig, w: &mut ReportWriter) -> Result<Outcome, CliError> {
    let tol = &cfg.tolerances;
    let es = &cfg.energy;
    let n = es.order;
    let g = cfg.grid_of(cfg.dims())?;
    if g.mode() != anl_core::grid::DerivMode::Spectral {
        return Err(CliError::Config { key: "grid.mode".into(), message: "energy needs a spectral grid".into() });
    }
    let init = initial_on(cfg, &g)?;
    let mut ecfg = EvolutionConfig::steps(es.final_time, es.steps);
    ecfg.snapshot_every = 1;
    let ev = evolve(&init, &ecfg)?;
    let tracking = if es.commuted { Tracking::full(n - 1) } else { Tracking::full(0) };
    let mut acc = EnergyAccumulator::new(tracking);
    let mut sobolev = Vec::new();
    let mut reg = Vec::new();
    let mut times = Vec::new();
    let mut coer = Table::new(&["time", "alpha", "c_lower", "c_upper", "lambda", "big_lambda", "energy", "probes"]);
    let mut dc = Table::new(&["time", "metric", "lhs", "rhs", "relative"]);
    let mut gates = Vec::new();
    let mut worst_alpha = f64::INFINITY;
    let mut worst_c = 0.0f64;
    let mut worst_flat = 0.0f64;
    for (k, snap) in ev.snapshots.iter().enumerate() {
        let st = complete_state(snap)?;
        acc.add(&st)?;
        let mut side = [0.0; 4];
        for (j, wv) in WaveScalar::ALL.iter().enumerate() {
            side[j] = wave_sobolev_side(&st, *wv, n)?;
        }
        sobolev.push(side);
        reg.push(regularity_sample(&st, n)?);
        times.push(st.raw.time);
        let (_, s) = vorticity_entropy(&st);
        let flat = divcurl_identity_defect(&g, &s, &identity_field(g.len()));
        let curved = divcurl_identity_defect(&g, &s, &g_inverse_field(&st));
        worst_flat = worst_flat.max(flat.relative);
        dc.push(vec![num(st.raw.time), "identity".into(), num(flat.lhs), num(flat.rhs), num(flat.relative)]);
        dc.push(vec![num(st.raw.time), "G_inverse".into(), num(curved.lhs), num(curved.rhs), num(curved.relative)]);
        if es.coercivity_every > 0 && k % es.coercivity_every == 0 {
            let r = coercivity_check(&st, n)?;
            if r.probes > 0 {
                worst_alpha = worst_alpha.min(r.alpha);
                worst_c = worst_c.max(r.c_lower).max(r.c_upper);
            }
            coer.push(vec![num(st.raw.time), num(r.alpha), num(r.c_lower), num(r.c_upper), num(r.lambda), num(r.big_lambda), num(r.energy), r.probes.to_string()]);
        }
    }
    let mut series = Table::new(&["time", "kind", "label", "energy", "bulk"]);
    let mut defects = Table::new(&["kind", "label", "e0", "et", "lhs", "rhs", "defect", "relative"]);
    for (kind, list) in [("wave", &acc.wave), ("transport", &acc.transport)] {
        for s in list.iter() {
            for k in 0..s.times.len() {
                series.push(vec![num(s.times[k]), kind.into(), s.label.clone(), num(s.energy[k]), num(s.bulk[k])]);
            }
            let d = s.defect()?;
            defects.push(vec![kind.into(), d.label.clone(), num(d.e0), num(d.et), num(d.lhs), num(d.rhs), num(d.defect), num(d.relative)]);
            gates.push(defect_gate(&d, tol.energy_defect, tol.energy_floor));
        }
    }
    w.csv("energy_series.csv", &series)?;
    w.csv("energy_defects.csv", &defects)?;
    gates.push(Gate::ge("min_wave_density", acc.min_density, DENSITY_ROUNDOFF));

    let mut cmp = Table::new(&["scalar", "ratio_min", "ratio_max", "comparison_constant"]);
    if es.commuted {
        for r in wave_reports(&acc, &sobolev, n)? {
            cmp.push(vec![r.scalar.clone(), num(r.ratio_min), num(r.ratio_max), num(r.comparison_constant)]);
            let c = if r.comparison_constant.is_finite() { r.comparison_constant } else { f64::INFINITY };
            gates.push(Gate::le(format!("wave_comparison:{}", r.scalar), c, tol.constant_max));
        }
        w.csv("wave_comparison.csv", &cmp)?;
    }
    if !coer.is_empty() {
        w.csv("coercivity.csv", &coer)?;
        if worst_alpha.is_finite() {
            gates.push(Gate::ge("coercivity_alpha", worst_alpha, tol.alpha_min));
            gates.push(Gate::le("coercivity_constant", worst_c, tol.constant_max));
        }
    }
    w.csv("divcurl.csv", &dc)?;
    gates.push(Gate::le("divcurl_flat", worst_flat, tol.divcurl_flat));

    let rr = regularity_report(&times, &reg, n);
    let mut rt = Table::new(&["time", REGULARITY_LABELS[0], REGULARITY_LABELS[1], REGULARITY_LABELS[2], REGULARITY_LABELS[3], REGULARITY_LABELS[4]]);
    for (k, s) in reg.iter().enumerate() {
        let mut row = vec![num(times[k])];
        row.extend(s.iter().map(|v| num(*v)));
        rt.push(row);
    }
    w.csv("regularity.csv", &rt)?;
    for (label, gmax) in &rr.max_growth {
        if ["s_HN+1", "S_HN", "varpi_HN"].contains(&label.as_str()) {
            gates.push(Gate::le(format!("growth:{label}"), *gmax, tol.growth_max));
        }
    }
    gates.push(Gate::le("envelope_rate", rr.envelope_rate, tol.envelope_max));
    gates.push(Gate::truth("no_super_exponential_growth", !rr.super_exponential));
    Ok(Outcome {
        gates,
        details: json!({
            "order": n,
            "snapshots": ev.snapshots.len(),
            "min_wave_density": acc.min_density,
            "coercivity_alpha_min": if worst_alpha.is_finite() { Some(worst_alpha) } else { None },
            "coercivity_constant_max": worst_c,
            "regularity": rr,
        }),
    })
}

pub fn convergence(cfg: &RunConfig, w: &mut ReportWriter) -> Result<Outcome, CliError> {
    let tol = &cfg.tolerances;
    let sizes = &cfg.convergence.sizes;
    let eos = cfg.eos_params()?;
    let recipe = cfg.recipe(&eos)?;
    let region = cfg.region();
    let table = convergence_study(sizes, cfg.grid.mode.into(), |g| recipe.build(g, Arc::clone(&eos), region), cfg.fault())?;
    let mut t = Table::new(&["label", "size", "linf", "order"]);
    let mut gates = Vec::new();
    for row in &table.rows {
        for (n, v) in row.sizes.iter().zip(&row.linf) {
            t.push(vec![row.label.clone(), n.to_string(), num(*v), row.order_label()]);
        }
        let first = row.linf[0];
        let last = *row.linf.last().expect("at least two sizes");
        let limit = if row.label.starts_with("identity:") { tol.dynamic } else { tol.residual };
        gates.push(Gate::le(format!("{}:linf", row.label), last, limit));
        gates.push(Gate::decay(format!("{}:decay", row.label), first, last, tol.decay, FLOOR));
    }
    w.csv("convergence.csv", &t)?;
    Ok(Outcome { gates, details: json!({ "sizes": sizes, "mode": table.mode, "fault": cfg.fault.clone() }) })
}
