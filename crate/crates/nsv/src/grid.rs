//! Domain description and derived grid geometry.
//!
//! The domain is a 2-D rectangle [0,Lx] x [0,Ly] covered by Nx x Ny uniform
//! cells. Boundary conditions come in exactly two legal pairs: no-slip walls
//! with specular kinetic reflection, or fully periodic on both phases.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FluidBc {
    NoSlip,
    Periodic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KineticBc {
    Specular,
    Periodic,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DomainSpec {
    pub dim: usize,
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
    pub bc_fluid: FluidBc,
    pub bc_kinetic: KineticBc,
}

impl DomainSpec {
    pub fn unit_square(n: usize, bc_fluid: FluidBc, bc_kinetic: KineticBc) -> Self {
        DomainSpec {
            dim: 2,
            lx: 1.0,
            ly: 1.0,
            nx: n,
            ny: n,
            bc_fluid,
            bc_kinetic,
        }
    }
}

/// Validated domain plus derived cell spacings.
#[derive(Clone, Debug)]
pub struct GridGeometry {
    pub spec: DomainSpec,
    pub hx: f64,
    pub hy: f64,
}

/// Validates a [`DomainSpec`] and computes spacings `hx = Lx/Nx`, `hy = Ly/Ny`.
pub fn build_domain(spec: DomainSpec) -> Result<GridGeometry> {
    if spec.dim != 2 {
        return Err(Error::UnsupportedDimension(spec.dim));
    }
    if !(spec.lx > 0.0 && spec.lx.is_finite() && spec.ly > 0.0 && spec.ly.is_finite()) {
        return Err(Error::Domain(format!(
            "side lengths must be positive and finite, got ({}, {})",
            spec.lx, spec.ly
        )));
    }
    if spec.nx < 4 || spec.ny < 4 {
        return Err(Error::Domain(format!(
            "grid must be at least 4 cells per direction, got {}x{}",
            spec.nx, spec.ny
        )));
    }
    match (spec.bc_fluid, spec.bc_kinetic) {
        (FluidBc::NoSlip, KineticBc::Specular) | (FluidBc::Periodic, KineticBc::Periodic) => {}
        (bf, bk) => {
            return Err(Error::Domain(format!(
                "boundary conditions {:?}/{:?} are not a legal pair; \
                 specular reflection requires no-slip walls and periodic fluid requires periodic kinetics",
                bf, bk
            )));
        }
    }
    let hx = spec.lx / spec.nx as f64;
    let hy = spec.ly / spec.ny as f64;
    Ok(GridGeometry { spec, hx, hy })
}

impl GridGeometry {
    pub fn nx(&self) -> usize {
        self.spec.nx
    }

    pub fn ny(&self) -> usize {
        self.spec.ny
    }

    pub fn lx(&self) -> f64 {
        self.spec.lx
    }

    pub fn ly(&self) -> f64 {
        self.spec.ly
    }

    pub fn is_periodic(&self) -> bool {
        self.spec.bc_fluid == FluidBc::Periodic
    }

    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    pub fn area(&self) -> f64 {
        self.spec.lx * self.spec.ly
    }

    /// Cell-center x coordinate.
    pub fn xc(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.hx
    }

    /// Cell-center y coordinate.
    pub fn yc(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.hy
    }

    /// x coordinate of the i-th x-face (vertical face line).
    pub fn x_face(&self, i: usize) -> f64 {
        i as f64 * self.hx
    }

    /// y coordinate of the j-th y-face (horizontal face line).
    pub fn y_face(&self, j: usize) -> f64 {
        j as f64 * self.hy
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (0.0..=self.spec.lx).contains(&x) && (0.0..=self.spec.ly).contains(&y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacings_are_exact_quotients() {
        let g = build_domain(DomainSpec {
            dim: 2,
            lx: 2.0,
            ly: 1.0,
            nx: 64,
            ny: 32,
            bc_fluid: FluidBc::NoSlip,
            bc_kinetic: KineticBc::Specular,
        })
        .unwrap();
        assert_eq!(g.hx, 2.0 / 64.0);
        assert_eq!(g.hy, 1.0 / 32.0);
        // hx * nx reproduces Lx to the last bit for these values.
        assert_eq!(g.hx * g.nx() as f64, 2.0);
        assert_eq!(g.hy * g.ny() as f64, 1.0);
    }

    #[test]
    fn rejects_other_dimensions() {
        let mut spec = DomainSpec::unit_square(8, FluidBc::NoSlip, KineticBc::Specular);
        spec.dim = 3;
        let err = build_domain(spec).unwrap_err();
        assert!(err.to_string().contains("unsupported dimension"));
    }

    #[test]
    fn rejects_mixed_boundary_conditions() {
        let spec = DomainSpec::unit_square(8, FluidBc::Periodic, KineticBc::Specular);
        assert!(build_domain(spec).is_err());
        let spec = DomainSpec::unit_square(8, FluidBc::NoSlip, KineticBc::Periodic);
        assert!(build_domain(spec).is_err());
    }

    #[test]
    fn rejects_degenerate_grids() {
        let spec = DomainSpec::unit_square(2, FluidBc::NoSlip, KineticBc::Specular);
        assert!(build_domain(spec).is_err());
        let mut spec = DomainSpec::unit_square(8, FluidBc::NoSlip, KineticBc::Specular);
        spec.lx = 0.0;
        assert!(build_domain(spec).is_err());
    }
}
