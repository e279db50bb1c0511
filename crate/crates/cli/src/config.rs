//! `RunConfig`: the TOML schema, flag overrides and validation.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anl_core::eos::{EosParams, HyperbolicityRegion};
use anl_core::grid::{DerivMode, TorusGrid};
use anl_core::initial::{InitialRecipe, RandomSpec};
use anl_core::solver::{EvolutionConfig, StepControl};
use anl_core::structure::Fault;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Verify,
    Identities,
    Evolve,
    Energy,
    Convergence,
}

impl Command {
    /// Resolution of the acceptance runs: residual checks pair 48³ with 24³,
    /// constraint monitoring runs at 32³, energies at 16³.
    pub fn default_grid(&self) -> [usize; 3] {
        match self {
            Command::Verify | Command::Identities | Command::Convergence => [48; 3],
            Command::Evolve => [32; 3],
            Command::Energy => [16; 3],
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::Verify => "verify",
            Command::Identities => "identities",
            Command::Evolve => "evolve",
            Command::Energy => "energy",
            Command::Convergence => "convergence",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub seed: u64,
    pub out: PathBuf,
    /// Label of a displayed coefficient whose sign is flipped.
    pub fault: Option<String>,
    pub grid: GridSpec,
    pub eos: EosSpec,
    pub initial: InitialSpec,
    pub region: RegionSpec,
    pub evolution: EvolutionSpec,
    pub energy: EnergySpec,
    pub convergence: ConvergenceSpec,
    pub tolerances: Tolerances,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: None,
            seed: 1,
            out: PathBuf::from("out"),
            fault: None,
            grid: GridSpec::default(),
            eos: EosSpec::default(),
            initial: InitialSpec::default(),
            region: RegionSpec::default(),
            evolution: EvolutionSpec::default(),
            energy: EnergySpec::default(),
            convergence: ConvergenceSpec::default(),
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModeSpec {
    Spectral,
    Fd4,
}

impl From<ModeSpec> for DerivMode {
    fn from(m: ModeSpec) -> Self {
        match m {
            ModeSpec::Spectral => DerivMode::Spectral,
            ModeSpec::Fd4 => DerivMode::Fd4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    /// Unset means the per-command default, see [`Command::default_grid`].
    pub n: Option<[usize; 3]>,
    pub mode: ModeSpec,
    /// Coarse size paired with `n` by `verify` and `identities`; 0 means `n/2`.
    pub coarse: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { n: None, mode: ModeSpec::Spectral, coarse: 0 }
    }
}

/// Parses `NxNxN`.
pub fn parse_grid(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<&str> = s.split(['x', 'X']).collect();
    if parts.len() != 3 {
        return Err(format!("grid `{s}` is not of the form NxNxN"));
    }
    let mut n = [0; 3];
    for (k, p) in parts.iter().enumerate() {
        n[k] = p.trim().parse().map_err(|_| format!("grid `{s}`: `{p}` is not a size"))?;
    }
    Ok(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilySpec {
    ConstantC,
    VariableC,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EosSpec {
    pub family: FamilySpec,
    pub bar_h: f64,
    pub c0: f64,
    /// `ε(s) = eps[0] + eps[1] s`; ignored by the constant-c family.
    pub eps: [f64; 2],
    /// Coefficients of `A(s)` and `B(s)` in increasing degree.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl Default for EosSpec {
    fn default() -> Self {
        let d = EosParams::default_variable_c();
        EosSpec {
            family: FamilySpec::VariableC,
            bar_h: d.bar_h,
            c0: d.c0,
            eps: d.eps,
            a: d.a.0.clone(),
            b: d.b.0.clone(),
        }
    }
}

impl EosSpec {
    pub fn build(&self) -> Result<EosParams, CliError> {
        let r = match self.family {
            FamilySpec::ConstantC => EosParams::constant_c(self.bar_h, self.c0, self.a.clone(), self.b.clone()),
            FamilySpec::VariableC => EosParams::variable_c(self.bar_h, self.c0, self.eps, self.a.clone(), self.b.clone()),
        };
        r.map_err(|e| CliError::Config { key: "eos".into(), message: e.to_string() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialKind {
    Random,
    Constant,
    Acoustic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialSpec {
    pub kind: InitialKind,
    pub kmax: i32,
    pub amplitude: f64,
    pub modes: usize,
    pub entropy_decay: f64,
    pub velocity_scale: f64,
    /// Background values for `constant`.
    pub h0: f64,
    pub s0: f64,
    /// Acoustic amplitude; the wave speed is the EOS sound speed at rest.
    pub eps: f64,
}

impl Default for InitialSpec {
    fn default() -> Self {
        let r = RandomSpec::default();
        InitialSpec {
            kind: InitialKind::Random,
            kmax: r.kmax,
            amplitude: r.amplitude,
            modes: r.modes_per_field,
            entropy_decay: r.entropy_decay,
            velocity_scale: 1.0,
            h0: 0.0,
            s0: 0.0,
            eps: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegionSpec {
    /// `|h|, |s| ≤ hs`.
    pub hs: f64,
    pub umax: f64,
}

impl Default for RegionSpec {
    fn default() -> Self {
        RegionSpec { hs: 0.5, umax: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolutionSpec {
    pub final_time: f64,
    /// CFL number; ignored when `steps` is set.
    pub cfl: f64,
    pub steps: Option<usize>,
    pub snapshot_every: usize,
    pub evolve_u0: bool,
    /// Write every snapshot as binary fields plus a JSON sidecar.
    pub write_snapshots: bool,
}

impl Default for EvolutionSpec {
    fn default() -> Self {
        EvolutionSpec {
            final_time: 0.5,
            cfl: 0.5,
            steps: None,
            snapshot_every: 1,
            evolve_u0: true,
            write_snapshots: false,
        }
    }
}

impl EvolutionSpec {
    pub fn to_config(&self) -> EvolutionConfig {
        let mut c = match self.steps {
            Some(n) => EvolutionConfig::steps(self.final_time, n),
            None => EvolutionConfig::cfl(self.final_time, self.cfl),
        };
        c.snapshot_every = self.snapshot_every;
        c.evolve_u0 = self.evolve_u0;
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergySpec {
    /// Sobolev order `N ≥ 3`.
    pub order: usize,
    pub final_time: f64,
    pub steps: usize,
    /// Track commuted `∂_I` energies up to `|I| = order − 1`; otherwise only
    /// the uncommuted ones.
    pub commuted: bool,
    /// Run the coercivity search on every `k`-th snapshot; 0 disables it.
    pub coercivity_every: usize,
}

impl Default for EnergySpec {
    fn default() -> Self {
        EnergySpec { order: 3, final_time: 0.25, steps: 8, commuted: true, coercivity_every: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceSpec {
    pub sizes: Vec<usize>,
}

impl Default for ConvergenceSpec {
    fn default() -> Self {
        ConvergenceSpec { sizes: vec![24, 48] }
    }
}

/// Gates; every value must be positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub residual: f64,
    pub decay: f64,
    pub kinematic: f64,
    pub dynamic: f64,
    pub drift: f64,
    pub energy_defect: f64,
    /// Absolute floor for defects of fields that vanish identically.
    pub energy_floor: f64,
    pub divcurl_flat: f64,
    pub alpha_min: f64,
    pub constant_max: f64,
    pub growth_max: f64,
    pub envelope_max: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            residual: 1e-7,
            decay: 1e3,
            kinematic: 1e-12,
            dynamic: 1e-7,
            drift: 1e-10,
            energy_defect: 1e-4,
            energy_floor: 1e-10,
            divcurl_flat: 1e-11,
            alpha_min: 1e-4,
            constant_max: 1e6,
            growth_max: 3.0,
            envelope_max: 5.0,
        }
    }
}

impl Tolerances {
    fn entries(&self) -> [(&'static str, f64); 12] {
        [
            ("residual", self.residual),
            ("decay", self.decay),
            ("kinematic", self.kinematic),
            ("dynamic", self.dynamic),
            ("drift", self.drift),
            ("energy_defect", self.energy_defect),
            ("energy_floor", self.energy_floor),
            ("divcurl_flat", self.divcurl_flat),
            ("alpha_min", self.alpha_min),
            ("constant_max", self.constant_max),
            ("growth_max", self.growth_max),
            ("envelope_max", self.envelope_max),
        ]
    }
}

fn bad(key: &str, message: impl Into<String>) -> CliError {
    CliError::Config { key: key.into(), message: message.into() }
}

impl RunConfig {
    /// Parses TOML; errors name the offending key path.
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let de = toml::Deserializer::new(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            CliError::Config { key: if key == "." { "<root>".into() } else { key }, message: e.inner().message().to_string() }
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        for (k, v) in self.tolerances.entries() {
            if !(v > 0.0 && v.is_finite()) {
                return Err(bad(&format!("tolerances.{k}"), format!("must be positive and finite, got {v}")));
            }
        }
        if self.grid.n.is_some_and(|n| n.iter().any(|&v| v < 4)) {
            return Err(bad("grid.n", "every size must be ≥ 4"));
        }
        if self.region.hs <= 0.0 || self.region.umax <= 0.0 {
            return Err(bad("region", "bounds must be positive"));
        }
        if self.energy.order < 3 {
            return Err(bad("energy.order", format!("must be ≥ 3, got {}", self.energy.order)));
        }
        if self.energy.steps < 2 {
            return Err(bad("energy.steps", "at least 2 steps are needed for the time quadrature"));
        }
        if self.convergence.sizes.len() < 2 {
            return Err(bad("convergence.sizes", "needs at least two sizes"));
        }
        if self.evolution.steps.is_none() && !(self.evolution.cfl > 0.0 && self.evolution.cfl < 1.0) {
            return Err(bad("evolution.cfl", format!("must lie in (0, 1), got {}", self.evolution.cfl)));
        }
        if let Some(f) = &self.fault {
            if Fault::parse(f).is_none() {
                let labels: Vec<&str> = Fault::ALL.iter().map(|f| f.label()).collect();
                return Err(bad("fault", format!("unknown label `{f}`; expected one of {labels:?}")));
            }
        }
        self.eos.build()?;
        Ok(())
    }

    /// Grid of the configured command, or of `cmd` when none is set.
    pub fn dims(&self) -> [usize; 3] {
        self.grid.n.unwrap_or_else(|| self.command.unwrap_or(Command::Verify).default_grid())
    }

    pub fn grid_label(&self) -> String {
        let n = self.dims();
        format!("{}x{}x{}", n[0], n[1], n[2])
    }

    pub fn fault(&self) -> Option<Fault> {
        self.fault.as_deref().and_then(Fault::parse)
    }

    pub fn region(&self) -> HyperbolicityRegion {
        HyperbolicityRegion::symmetric(self.region.hs, self.region.umax)
    }

    pub fn eos_params(&self) -> Result<Arc<EosParams>, CliError> {
        Ok(Arc::new(self.eos.build()?))
    }

    pub fn grid_of(&self, n: [usize; 3]) -> Result<Arc<TorusGrid>, CliError> {
        TorusGrid::new(n, self.grid.mode.into()).map_err(|e| bad("grid", e.to_string()))
    }

    pub fn recipe(&self, eos: &EosParams) -> Result<InitialRecipe, CliError> {
        let i = &self.initial;
        let r = match i.kind {
            InitialKind::Random => InitialRecipe::random(
                self.seed,
                &RandomSpec { kmax: i.kmax, amplitude: i.amplitude, modes_per_field: i.modes, entropy_decay: i.entropy_decay },
            ),
            InitialKind::Constant => InitialRecipe::constant(i.h0, i.s0),
            InitialKind::Acoustic => {
                let c = eos.eval_thermo(0.0, 0.0).map_err(|e| bad("initial", e.to_string()))?.c;
                InitialRecipe::acoustic(i.eps, c)
            }
        };
        Ok(r.scale_velocity(i.velocity_scale))
    }

    pub fn step_label(&self) -> String {
        match self.evolution.to_config().step {
            StepControl::Cfl(c) => format!("cfl={c}"),
            StepControl::Steps(n) => format!("steps={n}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn unknown_and_mistyped_keys_are_named() {
        match RunConfig::from_toml("[tolerances]\nresidual = \"tiny\"\n") {
            Err(CliError::Config { key, .. }) => assert_eq!(key, "tolerances.residual"),
            other => panic!("{other:?}"),
        }
        match RunConfig::from_toml("[grid]\nsizes = [8]\n") {
            Err(CliError::Config { key, message }) => assert!(key.starts_with("grid") && message.contains("sizes"), "{key} {message}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn nonpositive_tolerance_is_named() {
        let c = RunConfig::from_toml("[tolerances]\ndrift = 0.0\n").unwrap();
        match c.validate() {
            Err(CliError::Config { key, .. }) => assert_eq!(key, "tolerances.drift"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn grid_flag_parses() {
        assert_eq!(parse_grid("16x16x8").unwrap(), [16, 16, 8]);
        assert!(parse_grid("16x16").is_err());
    }
}
