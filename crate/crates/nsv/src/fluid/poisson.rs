//! Pressure projection via exact transform solves.

use crate::error::{Error, Result};
use crate::field::{Array2, PressureField, VelocityField};
use crate::fluid::spectral::{Basis1d, Transform2d};
use crate::grid::{FluidBc, GridGeometry};

/// Prefactored transform state for the pressure Poisson solve and the
/// per-component diffusion solves. Tagged by shape and boundary condition;
/// [`ensure`](PoissonWorkspace::ensure) rebuilds it when the field disagrees.
#[derive(Clone, Debug)]
pub struct PoissonWorkspace {
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    pub bc: FluidBc,
    pub(crate) pressure: Transform2d,
    pub(crate) ux_t: Transform2d,
    pub(crate) uy_t: Transform2d,
}

impl PoissonWorkspace {
    pub fn new(grid: &GridGeometry) -> Self {
        Self::build(grid.nx(), grid.ny(), grid.hx, grid.hy, grid.spec.bc_fluid)
    }

    fn build(nx: usize, ny: usize, hx: f64, hy: f64, bc: FluidBc) -> Self {
        let (pressure, ux_t, uy_t) = match bc {
            FluidBc::Periodic => (
                Transform2d::new(Basis1d::periodic(nx, hx), Basis1d::periodic(ny, hy)),
                Transform2d::new(Basis1d::periodic(nx, hx), Basis1d::periodic(ny, hy)),
                Transform2d::new(Basis1d::periodic(nx, hx), Basis1d::periodic(ny, hy)),
            ),
            FluidBc::NoSlip => (
                Transform2d::new(Basis1d::neumann_cells(nx, hx), Basis1d::neumann_cells(ny, hy)),
                // ux: interior faces in x (value pinned on walls), cells in y
                Transform2d::new(
                    Basis1d::dirichlet_faces(nx, hx),
                    Basis1d::dirichlet_cells(ny, hy),
                ),
                Transform2d::new(
                    Basis1d::dirichlet_cells(nx, hx),
                    Basis1d::dirichlet_faces(ny, hy),
                ),
            ),
        };
        PoissonWorkspace {
            nx,
            ny,
            hx,
            hy,
            bc,
            pressure,
            ux_t,
            uy_t,
        }
    }

    pub fn matches(&self, u: &VelocityField) -> bool {
        self.nx == u.nx && self.ny == u.ny && self.bc == u.bc && self.hx == u.hx && self.hy == u.hy
    }

    /// Rebuilds the factorization if the field's shape disagrees.
    pub fn ensure(&mut self, u: &VelocityField) {
        if !self.matches(u) {
            *self = Self::build(u.nx, u.ny, u.hx, u.hy, u.bc);
        }
    }

    /// Solves the discrete Poisson problem Lp = rhs (L the 5-point Laplacian
    /// with this workspace's boundary rule), pinning the free constant to
    /// zero. The rhs must have zero discrete mean for an exact solve; the
    /// mean mode is dropped either way.
    pub fn solve_pressure(&self, rhs: &Array2) -> Result<Array2> {
        if rhs.nx != self.nx || rhs.ny != self.ny {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}", self.nx, self.ny),
                got: format!("{}x{}", rhs.nx, rhs.ny),
            });
        }
        let mut coef = self.pressure.forward(&rhs.data);
        for l in 0..self.ny {
            for k in 0..self.nx {
                let e = self.pressure.eig(k, l);
                let idx = l * self.nx + k;
                coef[idx] = if e == 0.0 { 0.0 } else { coef[idx] / e };
            }
        }
        let mut p = Array2::zeros(self.nx, self.ny);
        p.data = self.pressure.inverse(&coef);
        Ok(p)
    }
}

/// Projects `u` onto its discretely divergence-free part. Returns the
/// projected field and the potential whose gradient was removed (cell
/// centered, mean zero). Exact up to rounding, hence idempotent.
pub fn project(
    u: &VelocityField,
    ws: &mut PoissonWorkspace,
) -> Result<(VelocityField, PressureField)> {
    ws.ensure(u);
    let div = u.divergence();
    let mut phi = ws.solve_pressure(&div)?;
    // Pin the mean exactly; the transform already dropped the constant mode.
    let mean = phi.mean();
    for v in &mut phi.data {
        *v -= mean;
    }

    let mut out = u.clone();
    let nx = u.nx;
    match u.bc {
        FluidBc::Periodic => {
            for j in 0..u.ny {
                for i in 0..nx {
                    let im = (i + nx - 1) % nx;
                    *out.ux.at_mut(i, j) -= (phi.at(i, j) - phi.at(im, j)) / u.hx;
                }
            }
            for j in 0..u.ny {
                let jm = (j + u.ny - 1) % u.ny;
                for i in 0..nx {
                    *out.uy.at_mut(i, j) -= (phi.at(i, j) - phi.at(i, jm)) / u.hy;
                }
            }
        }
        FluidBc::NoSlip => {
            // Wall-normal faces stay zero; the Neumann ghost rule makes the
            // potential gradient vanish there.
            for j in 0..u.ny {
                for i in 1..nx {
                    *out.ux.at_mut(i, j) -= (phi.at(i, j) - phi.at(i - 1, j)) / u.hx;
                }
            }
            for j in 1..u.ny {
                for i in 0..nx {
                    *out.uy.at_mut(i, j) -= (phi.at(i, j) - phi.at(i, j - 1)) / u.hy;
                }
            }
        }
    }
    let p = PressureField {
        p: phi,
        hx: u.hx,
        hy: u.hy,
    };
    Ok((out, p))
}
