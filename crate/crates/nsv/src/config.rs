//! Run configuration: a TOML file of flat `key = value` sections, one per
//! subsystem, plus `--set section.key=value` command-line overrides.
//!
//! Every key is documented in the README. Unknown keys are rejected so typos
//! fail loudly. No environment variables are consulted.

use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::field::VelocityField;
use crate::grid::{build_domain, DomainSpec, FluidBc, GridGeometry};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KineticBackend {
    Particles,
    PhaseGrid,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_viscosity")]
    pub viscosity: f64,
    /// Drag truncation threshold; the string "inf" (the default) disables it.
    #[serde(
        default = "default_lambda",
        serialize_with = "ser_lambda",
        deserialize_with = "de_lambda"
    )]
    pub lambda: f64,
    #[serde(default = "default_backend")]
    pub backend: KineticBackend,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_threads")]
    pub threads: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialVelocity {
    Zero,
    TaylorGreen,
    StreamEddy,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluidSection {
    #[serde(default = "default_initial")]
    pub initial: InitialVelocity,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    /// Upwind fraction blended into the advection stencil (0 = pure centered).
    #[serde(default = "default_upwind")]
    pub upwind: f64,
    /// Relative divergence residual the projection must reach.
    #[serde(default = "default_tol_div")]
    pub tol_div: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KineticSection {
    #[serde(default = "default_particles")]
    pub particles: usize,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default)]
    pub mean_vx: f64,
    #[serde(default)]
    pub mean_vy: f64,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_phase_n")]
    pub phase_nx: usize,
    #[serde(default = "default_phase_n")]
    pub phase_ny: usize,
    #[serde(default = "default_phase_nv")]
    pub phase_nv: usize,
    #[serde(default = "default_vmax")]
    pub vmax: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out_dir")]
    pub dir: String,
    #[serde(default = "default_ledger")]
    pub ledger: String,
    /// Snapshot cadence in steps; 0 writes the final state only.
    #[serde(default)]
    pub snapshot_every: u64,
    #[serde(default = "default_true")]
    pub write_fields: bool,
    #[serde(default)]
    pub write_particles: bool,
}

/// Tolerances for the estimate checkers. They are declared here, in the
/// config, so a run that needs looser bounds says so explicitly; the checkers
/// themselves never widen them.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    /// Allowed growth of the moment-interpolation constant over a run, as a
    /// multiple of its initial value.
    #[serde(default = "default_moment_growth_cap")]
    pub moment_growth_cap: f64,
    /// Relative phase-grid mass drift allowed when drag feeds back on the flow.
    #[serde(default = "default_mass_tol_coupled")]
    pub mass_tol_coupled: f64,
    /// Relative phase-grid mass drift allowed for pure transport (zero flow).
    #[serde(default = "default_mass_tol_transport")]
    pub mass_tol_transport: f64,
    /// Half-width of the accepted band around slope 1 in the stability fit.
    #[serde(default = "default_slope_band")]
    pub slope_band: f64,
    /// Fractional headroom on the measured discretization constant in the
    /// energy inequality check.
    #[serde(default = "default_energy_slack")]
    pub energy_slack: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub domain: DomainSpec,
    pub sim: SimSection,
    #[serde(default = "default_fluid_section")]
    pub fluid: FluidSection,
    #[serde(default = "default_kinetic_section")]
    pub kinetic: KineticSection,
    #[serde(default = "default_output_section")]
    pub output: OutputSection,
    #[serde(default = "default_verify_section")]
    pub verify: VerifySection,
}

fn default_viscosity() -> f64 {
    1.0
}
fn default_lambda() -> f64 {
    f64::INFINITY
}
fn default_backend() -> KineticBackend {
    KineticBackend::Particles
}
fn default_threads() -> usize {
    1
}
fn default_initial() -> InitialVelocity {
    InitialVelocity::Zero
}
fn default_amplitude() -> f64 {
    1.0
}
fn default_upwind() -> f64 {
    0.1
}
fn default_tol_div() -> f64 {
    1e-10
}
fn default_particles() -> usize {
    10_000
}
fn default_rho() -> f64 {
    1.0
}
fn default_theta() -> f64 {
    0.25
}
fn default_phase_n() -> usize {
    16
}
fn default_phase_nv() -> usize {
    16
}
fn default_vmax() -> f64 {
    3.0
}
fn default_out_dir() -> String {
    "out".into()
}
fn default_ledger() -> String {
    "ledger.csv".into()
}
fn default_true() -> bool {
    true
}
fn default_fluid_section() -> FluidSection {
    FluidSection {
        initial: default_initial(),
        amplitude: default_amplitude(),
        upwind: default_upwind(),
        tol_div: default_tol_div(),
    }
}
fn default_kinetic_section() -> KineticSection {
    KineticSection {
        particles: default_particles(),
        rho: default_rho(),
        mean_vx: 0.0,
        mean_vy: 0.0,
        theta: default_theta(),
        phase_nx: default_phase_n(),
        phase_ny: default_phase_n(),
        phase_nv: default_phase_nv(),
        vmax: default_vmax(),
    }
}
fn default_output_section() -> OutputSection {
    OutputSection {
        dir: default_out_dir(),
        ledger: default_ledger(),
        snapshot_every: 0,
        write_fields: true,
        write_particles: false,
    }
}
fn default_moment_growth_cap() -> f64 {
    10.0
}
fn default_mass_tol_coupled() -> f64 {
    1e-2
}
fn default_mass_tol_transport() -> f64 {
    1e-3
}
fn default_slope_band() -> f64 {
    0.1
}
fn default_energy_slack() -> f64 {
    0.5
}
fn default_verify_section() -> VerifySection {
    VerifySection {
        moment_growth_cap: default_moment_growth_cap(),
        mass_tol_coupled: default_mass_tol_coupled(),
        mass_tol_transport: default_mass_tol_transport(),
        slope_band: default_slope_band(),
        energy_slack: default_energy_slack(),
    }
}

fn ser_lambda<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn de_lambda<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Str(String),
    }
    match Raw::deserialize(d)? {
        Raw::Num(v) => Ok(v),
        Raw::Str(s) if s == "inf" => Ok(f64::INFINITY),
        Raw::Str(s) => Err(serde::de::Error::custom(format!(
            "lambda must be a number or \"inf\", got {s:?}"
        ))),
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        build_domain(self.domain.clone())?;
        let s = &self.sim;
        if !(s.dt > 0.0 && s.dt.is_finite()) {
            return Err(Error::Config(format!("sim.dt must be positive, got {}", s.dt)));
        }
        if !(s.t_end >= s.dt && s.t_end.is_finite()) {
            return Err(Error::Config(format!(
                "sim.t_end must be at least one step, got {} with dt {}",
                s.t_end, s.dt
            )));
        }
        if !(s.viscosity > 0.0 && s.viscosity.is_finite()) {
            return Err(Error::Config(format!(
                "sim.viscosity must be positive, got {}",
                s.viscosity
            )));
        }
        if !(s.lambda > 0.0) {
            return Err(Error::Config(format!(
                "sim.lambda must be positive (or \"inf\"), got {}",
                s.lambda
            )));
        }
        if s.threads == 0 {
            return Err(Error::Config("sim.threads must be at least 1".into()));
        }
        let f = &self.fluid;
        if !(0.0..=1.0).contains(&f.upwind) {
            return Err(Error::Config(format!(
                "fluid.upwind must lie in [0, 1], got {}",
                f.upwind
            )));
        }
        if !(f.tol_div > 0.0) {
            return Err(Error::Config("fluid.tol_div must be positive".into()));
        }
        if f.initial == InitialVelocity::TaylorGreen && self.domain.bc_fluid != FluidBc::Periodic {
            return Err(Error::Config(
                "fluid.initial = \"taylor-green\" requires periodic boundaries".into(),
            ));
        }
        let k = &self.kinetic;
        if self.sim.backend == KineticBackend::Particles && k.particles == 0 {
            return Err(Error::Config("kinetic.particles must be positive".into()));
        }
        if !(k.rho > 0.0 && k.theta > 0.0 && k.vmax > 0.0) {
            return Err(Error::Config(format!(
                "kinetic.rho, kinetic.theta, kinetic.vmax must be positive, got ({}, {}, {})",
                k.rho, k.theta, k.vmax
            )));
        }
        if k.phase_nx < 2 || k.phase_ny < 2 || k.phase_nv < 2 {
            return Err(Error::Config(
                "phase grid must be at least 2 cells per axis".into(),
            ));
        }
        let v = &self.verify;
        for (name, val) in [
            ("moment_growth_cap", v.moment_growth_cap),
            ("mass_tol_coupled", v.mass_tol_coupled),
            ("mass_tol_transport", v.mass_tol_transport),
            ("slope_band", v.slope_band),
            ("energy_slack", v.energy_slack),
        ] {
            if !(val > 0.0 && val.is_finite()) {
                return Err(Error::Config(format!(
                    "verify.{name} must be positive and finite, got {val}"
                )));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<GridGeometry> {
        build_domain(self.domain.clone())
    }

    /// Builds the configured initial velocity field on `grid`.
    pub fn initial_velocity(&self, grid: &GridGeometry) -> VelocityField {
        let a = self.fluid.amplitude;
        match self.fluid.initial {
            InitialVelocity::Zero => VelocityField::zeros(grid),
            InitialVelocity::TaylorGreen => taylor_green(grid, a),
            InitialVelocity::StreamEddy => stream_eddy(grid, a),
        }
    }
}

/// Taylor-Green vortex: one periodic cell of counter-rotating eddies. With
/// viscosity μ the exact solution decays by e^{-μ κ² t}, κ² = (2π/Lx)² + (2π/Ly)².
pub fn taylor_green(grid: &GridGeometry, amplitude: f64) -> VelocityField {
    let (kx, ky) = (
        2.0 * std::f64::consts::PI / grid.lx(),
        2.0 * std::f64::consts::PI / grid.ly(),
    );
    let mut u = VelocityField::zeros(grid);
    u.set_from(
        |x, y| amplitude * (kx * x).sin() * (ky * y).cos(),
        |x, y| -amplitude * (ky / kx) * (kx * x).cos() * (ky * y).sin(),
    );
    u
}

/// Single smooth eddy from the stream function (A·min(L)/π)·sin²(πx/Lx)·sin²(πy/Ly):
/// divergence-free to rounding, zero on the walls, peak speed about A.
pub fn stream_eddy(grid: &GridGeometry, amplitude: f64) -> VelocityField {
    let pi = std::f64::consts::PI;
    let (lx, ly) = (grid.lx(), grid.ly());
    let c = amplitude * lx.min(ly) / pi;
    VelocityField::from_stream(grid, move |x, y| {
        c * (pi * x / lx).sin().powi(2) * (pi * y / ly).sin().powi(2)
    })
}

/// Parses a TOML config file.
pub fn load(path: &Path) -> Result<SimConfig> {
    load_with_overrides(path, &[])
}

/// Parses a TOML config file and applies `section.key=value` overrides on the
/// parsed document before validation.
pub fn load_with_overrides(path: &Path, overrides: &[String]) -> Result<SimConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    from_str_with_overrides(&text, overrides)
}

pub fn from_str_with_overrides(text: &str, overrides: &[String]) -> Result<SimConfig> {
    let mut doc: toml::Value = text
        .parse()
        .map_err(|e| Error::Config(format!("config parse error: {e}")))?;
    for ov in overrides {
        apply_override(&mut doc, ov)?;
    }
    let cfg: SimConfig = doc
        .try_into()
        .map_err(|e| Error::Config(format!("config schema error: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

fn apply_override(doc: &mut toml::Value, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {spec:?} is not key=value")))?;
    let (key, raw) = (key.trim(), raw.trim());
    let mut node = &mut *doc;
    let parts: Vec<&str> = key.split('.').collect();
    if parts.len() < 2 {
        return Err(Error::Config(format!(
            "override key {key:?} must be section.key"
        )));
    }
    for part in &parts[..parts.len() - 1] {
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override key {key:?} crosses a non-table")))?;
        node = table
            .entry(part.to_string())
            .or_insert(toml::Value::Table(Default::default()));
    }
    let table = node
        .as_table_mut()
        .ok_or_else(|| Error::Config(format!("override key {key:?} crosses a non-table")))?;
    table.insert(parts[parts.len() - 1].to_string(), parse_override_value(raw));
    Ok(())
}

/// Overrides arrive as bare strings; interpret them the way TOML would.
fn parse_override_value(raw: &str) -> toml::Value {
    if let Ok(b) = raw.parse::<bool>() {
        return toml::Value::Boolean(b);
    }
    if let Ok(i) = raw.parse::<i64>() {
        return toml::Value::Integer(i);
    }
    if let Ok(f) = raw.parse::<f64>() {
        if f.is_finite() {
            return toml::Value::Float(f);
        }
    }
    toml::Value::String(raw.trim_matches('"').to_string())
}
