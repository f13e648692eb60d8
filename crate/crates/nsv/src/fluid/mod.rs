//! Incompressible Navier-Stokes time step on the staggered grid.
//!
//! One step is the splitting
//!   advect (explicit, divergence form) -> add dt·F -> diffuse (exact
//!   exponential) -> project (exact transform solve),
//! first order in time overall. The step never fails on a large CFL number;
//! it reports it and leaves the judgment to the caller.

mod advect;
mod diffuse;
mod poisson;
pub mod spectral;

pub use advect::{advect, advection_term, advection_term_of};
pub use diffuse::diffuse;
pub use poisson::{project, PoissonWorkspace};

use crate::error::{Error, Result};
use crate::field::{ForceField, PressureField, VelocityField};

/// Per-step diagnostics.
#[derive(Clone, Copy, Debug)]
pub struct StepReport {
    /// max(|ux| dt/hx) + max(|uy| dt/hy) before the step.
    pub max_cfl: f64,
    /// True when the advective CFL number exceeded 1 (warning, not an error).
    pub cfl_exceeded: bool,
    /// max |div u| (relative) after the projection.
    pub div_residual: f64,
    /// Linear-solver iterations; transform solves are direct, so zero.
    pub solver_iterations: usize,
}

/// Advances the fluid by one step under the body force `force` (sampled on
/// the velocity staggering). Returns the new velocity, the projection
/// potential, and diagnostics.
pub fn ns_step(
    u: &VelocityField,
    force: &ForceField,
    mu: f64,
    dt: f64,
    upwind: f64,
    tol_div: f64,
    ws: &mut PoissonWorkspace,
) -> Result<(VelocityField, PressureField, StepReport)> {
    let max_cfl = dt * (u.ux.max_abs() / u.hx + u.uy.max_abs() / u.hy);

    let mut ua = advect(u, dt, upwind);
    assert_eq!(ua.ux.data.len(), force.ux.data.len(), "force layout mismatch");
    for (v, f) in ua.ux.data.iter_mut().zip(&force.ux.data) {
        *v += dt * f;
    }
    for (v, f) in ua.uy.data.iter_mut().zip(&force.uy.data) {
        *v += dt * f;
    }
    ua.enforce_wall_normals();

    let ud = diffuse(&ua, mu, dt, ws)?;
    let (up, p) = project(&ud, ws)?;

    let div_residual = up.max_div_rel();
    if div_residual > tol_div {
        return Err(Error::NumericalAbort {
            step: 0,
            context: format!(
                "projection left divergence residual {div_residual:.3e} > {tol_div:.3e}"
            ),
        });
    }
    Ok((
        up,
        p,
        StepReport {
            max_cfl,
            cfl_exceeded: max_cfl > 1.0,
            div_residual,
            solver_iterations: 0,
        },
    ))
}
