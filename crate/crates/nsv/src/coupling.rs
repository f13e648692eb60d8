//! The coupled step and its energy ledger.
//!
//! Order within one step of size dt, with everything on the right evaluated
//! at the start of the step (explicit coupling):
//!
//!   1. moments of the kinetic state on the fluid cells (cached in the state,
//!      tagged with the step index; a tag mismatch is an error, not a silent
//!      re-deposit)
//!   2. drag force on the faces, F = m1 - m0 * ub, where ub is the fluid
//!      velocity with over-threshold samples zeroed (lambda = inf keeps u)
//!   3. fluid step: advect, add dt F, diffuse, project
//!   4. kinetic step against the truncated new fluid velocity
//!
//! The ledger reports, per step: E_fluid = ½∫|u|², E_kin = Σ w (1+|v|²) (or
//! its phase-grid quadrature), the viscous dissipation D_visc = ∫|∇u|², the
//! drag dissipation D_drag = ∫∫ f |ub-v|², total kinetic mass, max |u|, and
//! the advective CFL number. The energy balance closes for the combination
//!
//!   E_tot = E_fluid + (E_kin + mass) / 2
//!
//! (the reported E_kin column weights the squared speed twice as heavily as
//! the balance requires; halving it and restoring the conserved mass term
//! yields the quantity that viscosity and drag actually dissipate). The
//! residual column is
//!
//!   r_k = (E_tot(t_k) - E_tot(t_{k-1})) / dt + D_visc + D_drag
//!
//! with the dissipation terms from the start of the step; r is O(dt) from
//! operator splitting and halves when dt halves on a resolved run.

use crate::config::{KineticBackend, SimConfig};
use crate::error::{Error, Result};
use crate::field::{kahan_sum, ForceField, MomentFields, PressureField, VelocityField};
use crate::fluid::{ns_step, PoissonWorkspace};
use crate::grid::{FluidBc, GridGeometry, KineticBc};
use crate::kinetic::{
    deposit_moments, drag_dissipation, moment_grid, phase_moments, push_particles, sl_step,
    truncate_velocity, DepositionScheme,
};
use crate::particles::{sample_maxwellian, ParticleEnsemble};
use crate::phase::PhaseGridDensity;

/// Kinetic side of the coupled system: sampled particles or a phase-space
/// density grid. Both expose the same moment, energy, and advance hooks.
#[derive(Clone, Debug)]
pub enum KineticState {
    Particles(ParticleEnsemble),
    PhaseGrid(PhaseGridDensity),
}

impl KineticState {
    pub fn mass(&self) -> f64 {
        match self {
            KineticState::Particles(e) => e.total_weight(),
            KineticState::PhaseGrid(f) => f.total_mass(),
        }
    }

    /// Σ w (1 + |v|²), the ledger's E_kin column.
    pub fn report_energy(&self) -> f64 {
        match self {
            KineticState::Particles(e) => e.kinetic_energy(),
            KineticState::PhaseGrid(f) => {
                f.total_mass() + moment_grid(f, 2).sum() * f.hx * f.hy
            }
        }
    }

    pub fn has_nan(&self) -> bool {
        match self {
            KineticState::Particles(e) => e.has_nan(),
            KineticState::PhaseGrid(f) => f.has_nan(),
        }
    }

    pub fn deposit(&self, grid: &GridGeometry, step_tag: u64) -> MomentFields {
        match self {
            KineticState::Particles(e) => {
                deposit_moments(e, grid, DepositionScheme::CloudInCell, step_tag)
            }
            KineticState::PhaseGrid(f) => phase_moments(f, grid, step_tag),
        }
    }

    pub fn advance(&self, u: &VelocityField, dt: f64, bc: KineticBc) -> Result<KineticState> {
        Ok(match self {
            KineticState::Particles(e) => KineticState::Particles(push_particles(e, u, dt, bc)?),
            KineticState::PhaseGrid(f) => KineticState::PhaseGrid(sl_step(f, u, dt, bc)?.0),
        })
    }

    /// D_drag = ∫∫ f |u(x) - v|² against the given (already truncated) field.
    pub fn drag_dissipation(&self, u: &VelocityField) -> f64 {
        match self {
            KineticState::Particles(e) => kahan_sum((0..e.len()).map(|i| {
                let (ux, uy) = u.sample(e.x[i], e.y[i]);
                let (dx, dy) = (ux - e.vx[i], uy - e.vy[i]);
                e.w[i] * (dx * dx + dy * dy)
            })),
            KineticState::PhaseGrid(f) => drag_dissipation(f, u),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SimState {
    pub grid: GridGeometry,
    pub u: VelocityField,
    pub p: PressureField,
    pub kinetic: KineticState,
    /// Moments of `kinetic` on the fluid grid, tagged with `step`.
    pub moments: MomentFields,
    pub step: u64,
    pub time: f64,
}

/// Everything `advance` needs from the config, copied out so callers can
/// sweep parameters without rebuilding configs.
#[derive(Clone, Copy, Debug)]
pub struct StepParams {
    pub dt: f64,
    pub mu: f64,
    pub lambda: f64,
    pub upwind: f64,
    pub tol_div: f64,
}

impl StepParams {
    pub fn from_config(cfg: &SimConfig) -> Self {
        StepParams {
            dt: cfg.sim.dt,
            mu: cfg.sim.viscosity,
            lambda: cfg.sim.lambda,
            upwind: cfg.fluid.upwind,
            tol_div: cfg.fluid.tol_div,
        }
    }
}

/// Steps a run takes: t_end/dt rounded to nearest, at least one.
pub fn step_count(cfg: &SimConfig) -> usize {
    ((cfg.sim.t_end / cfg.sim.dt).round() as usize).max(1)
}

/// Builds the initial coupled state: fluid from the configured profile,
/// kinetic side Maxwellian (sampled or gridded), moments deposited at tag 0.
pub fn init_state(cfg: &SimConfig) -> Result<SimState> {
    let grid = cfg.grid()?;
    let u = cfg.initial_velocity(&grid);
    let k = &cfg.kinetic;
    let kinetic = match cfg.sim.backend {
        KineticBackend::Particles => KineticState::Particles(sample_maxwellian(
            &grid,
            k.rho,
            (k.mean_vx, k.mean_vy),
            k.theta,
            k.particles,
            cfg.sim.seed,
        )?),
        KineticBackend::PhaseGrid => {
            let mut f =
                PhaseGridDensity::zeros(&grid, k.phase_nx, k.phase_ny, k.phase_nv, k.vmax)?;
            f.fill_maxwellian(k.rho, (k.mean_vx, k.mean_vy), k.theta);
            KineticState::PhaseGrid(f)
        }
    };
    let moments = kinetic.deposit(&grid, 0);
    Ok(SimState {
        p: PressureField::zeros(&grid),
        u,
        kinetic,
        moments,
        step: 0,
        time: 0.0,
        grid,
    })
}

/// Drag force density on the faces: F = m1 - m0 u, cell moments averaged to
/// the face between them. No-slip wall faces stay zero (the fluid step pins
/// the wall-normal velocity anyway).
pub fn coupling_force(m: &MomentFields, u: &VelocityField) -> ForceField {
    let mut f = u.clone();
    f.ux.data.fill(0.0);
    f.uy.data.fill(0.0);
    let (nx, ny) = (m.nx, m.ny);
    let periodic = u.bc == FluidBc::Periodic;

    for j in 0..ny {
        let range = if periodic { 0..nx } else { 1..nx };
        for i in range {
            let im = if periodic { (i + nx - 1) % nx } else { i - 1 };
            let m1 = 0.5 * (m.m1x.at(im, j) + m.m1x.at(i, j));
            let m0 = 0.5 * (m.m0.at(im, j) + m.m0.at(i, j));
            *f.ux.at_mut(i, j) = m1 - m0 * u.ux.at(i, j);
        }
    }
    for i in 0..nx {
        let range = if periodic { 0..ny } else { 1..ny };
        for j in range {
            let jm = if periodic { (j + ny - 1) % ny } else { j - 1 };
            let m1 = 0.5 * (m.m1y.at(i, jm) + m.m1y.at(i, j));
            let m0 = 0.5 * (m.m0.at(i, jm) + m.m0.at(i, j));
            *f.uy.at_mut(i, j) = m1 - m0 * u.uy.at(i, j);
        }
    }
    f
}

/// Same force with the velocity truncated first; lambda = inf reproduces
/// [`coupling_force`] bit for bit.
pub fn truncated_coupling_force(
    m: &MomentFields,
    u: &VelocityField,
    lambda: f64,
) -> Result<ForceField> {
    let ub = truncate_velocity(u, lambda)?;
    Ok(coupling_force(m, &ub))
}

/// ∫|∇u|² for the 5-point Laplacian with this grid's ghost rules: squared
/// forward differences over every adjacent pair, and for the cell-centered
/// (tangential) direction under no-slip the wall ghost pair at half weight.
/// This is the unique quadrature with Σ u·Δ_h u = -D_visc exactly, so the
/// ledger's viscous column matches what the diffusion stage removes.
pub fn viscous_dissipation(u: &VelocityField) -> f64 {
    let periodic = u.bc == FluidBc::Periodic;
    let (nx, ny) = (u.nx as isize, u.ny as isize);
    let mut acc = 0.0;

    // d(ux)/dx across each cell
    for j in 0..ny {
        for i in 0..nx {
            let d = (u.ux_at(i + 1, j) - u.ux_at(i, j)) / u.hx;
            acc += d * d;
        }
    }
    // d(ux)/dy at face-corner points; ghost pair at the walls
    let stored_x = u.ux.nx as isize;
    let jtop = if periodic { ny } else { ny + 1 };
    for j in 0..jtop {
        let w = if !periodic && (j == 0 || j == ny) { 0.5 } else { 1.0 };
        for i in 0..stored_x {
            let d = (u.ux_at(i, j) - u.ux_at(i, j - 1)) / u.hy;
            acc += w * d * d;
        }
    }
    // d(uy)/dy across each cell
    for j in 0..ny {
        for i in 0..nx {
            let d = (u.uy_at(i, j + 1) - u.uy_at(i, j)) / u.hy;
            acc += d * d;
        }
    }
    // d(uy)/dx at corner points
    let stored_y = u.uy.ny as isize;
    let iright = if periodic { nx } else { nx + 1 };
    for i in 0..iright {
        let w = if !periodic && (i == 0 || i == nx) { 0.5 } else { 1.0 };
        for j in 0..stored_y {
            let d = (u.uy_at(i, j) - u.uy_at(i - 1, j)) / u.hx;
            acc += w * d * d;
        }
    }
    acc * u.hx * u.hy
}

pub const LEDGER_HEADER: &str = "step,time,E_fluid,E_kin,D_visc,D_drag,residual,mass,max_u,cfl";

#[derive(Clone, Copy, Debug)]
pub struct LedgerRow {
    pub step: u64,
    pub time: f64,
    pub e_fluid: f64,
    pub e_kin: f64,
    pub d_visc: f64,
    pub d_drag: f64,
    pub residual: f64,
    pub mass: f64,
    pub max_u: f64,
    pub cfl: f64,
}

impl LedgerRow {
    /// Default float formatting round-trips, so reruns are byte-identical.
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.step,
            self.time,
            self.e_fluid,
            self.e_kin,
            self.d_visc,
            self.d_drag,
            self.residual,
            self.mass,
            self.max_u,
            self.cfl
        )
    }

    /// Energy the dissipation terms act on; see the module doc.
    pub fn closing_energy(&self) -> f64 {
        self.e_fluid + 0.5 * (self.e_kin + self.mass)
    }
}

/// Energy the dissipation terms act on: ½∫|u|² + ½∫∫ f(1+|v|²).
pub fn closing_energy(u: &VelocityField, kinetic: &KineticState) -> f64 {
    0.5 * u.l2_sq() + 0.5 * (kinetic.report_energy() + kinetic.mass())
}

/// Advances the coupled state by one step and returns its ledger row.
/// On a non-finite result the state is left at the last good step and the
/// error carries the failing step index.
pub fn advance(
    state: &mut SimState,
    params: &StepParams,
    ws: &mut PoissonWorkspace,
) -> Result<LedgerRow> {
    if state.moments.step_tag != state.step {
        return Err(Error::StaleMoments {
            tag: state.moments.step_tag,
            step: state.step,
        });
    }
    let dt = params.dt;
    let ub = truncate_velocity(&state.u, params.lambda)?;
    let force = coupling_force(&state.moments, &ub);

    let e_prev = closing_energy(&state.u, &state.kinetic);
    let d_visc = params.mu * viscous_dissipation(&state.u);
    let d_drag = state.kinetic.drag_dissipation(&ub);

    let (u1, p1, rep) = ns_step(
        &state.u,
        &force,
        params.mu,
        dt,
        params.upwind,
        params.tol_div,
        ws,
    )?;
    let ub1 = truncate_velocity(&u1, params.lambda)?;
    let kin1 = state.kinetic.advance(&ub1, dt, state.grid.spec.bc_kinetic)?;

    if u1.has_nan() || p1.p.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalAbort {
            step: state.step + 1,
            context: "fluid velocity or pressure is not finite".into(),
        });
    }
    if kin1.has_nan() {
        return Err(Error::NumericalAbort {
            step: state.step + 1,
            context: "kinetic state is not finite".into(),
        });
    }

    state.u = u1;
    state.p = p1;
    state.kinetic = kin1;
    state.step += 1;
    state.time += dt;
    state.moments = state.kinetic.deposit(&state.grid, state.step);

    let e_fluid = 0.5 * state.u.l2_sq();
    let e_kin = state.kinetic.report_energy();
    let mass = state.kinetic.mass();
    let e_now = e_fluid + 0.5 * (e_kin + mass);
    Ok(LedgerRow {
        step: state.step,
        time: state.time,
        e_fluid,
        e_kin,
        d_visc,
        d_drag,
        residual: (e_now - e_prev) / dt + d_visc + d_drag,
        mass,
        max_u: state.u.max_abs(),
        cfl: rep.max_cfl,
    })
}
