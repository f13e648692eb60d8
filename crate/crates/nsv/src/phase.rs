//! Tensor-product phase-space density f(x, y, vx, vy) on cell-centered nodes.
//!
//! The velocity box is [-vmax, vmax]² with nv cells per axis; nodes sit at
//! cell centers, so no node lies exactly on the box edge. f must stay
//! nonnegative; values are per unit phase-space volume and the represented
//! mass is the midpoint sum Σ f · hx hy hv².

use crate::error::{Error, Result};
use crate::field::kahan_sum;
use crate::grid::GridGeometry;

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseGridDensity {
    /// Spatial cells (may be coarser than the fluid grid).
    pub nx: usize,
    pub ny: usize,
    /// Velocity cells per axis.
    pub nv: usize,
    pub lx: f64,
    pub ly: f64,
    pub hx: f64,
    pub hy: f64,
    pub vmax: f64,
    pub hv: f64,
    /// Index order [ix][iy][cx][cy], row-major.
    pub f: Vec<f64>,
    pub time: f64,
}

impl PhaseGridDensity {
    pub fn zeros(grid: &GridGeometry, nx: usize, ny: usize, nv: usize, vmax: f64) -> Result<Self> {
        if nx < 2 || ny < 2 || nv < 2 {
            return Err(Error::Config(format!(
                "phase grid must be at least 2 cells per axis, got {nx}x{ny}x{nv}x{nv}"
            )));
        }
        if !(vmax > 0.0 && vmax.is_finite()) {
            return Err(Error::Config(format!(
                "velocity box half-width must be positive, got {vmax}"
            )));
        }
        Ok(PhaseGridDensity {
            nx,
            ny,
            nv,
            lx: grid.lx(),
            ly: grid.ly(),
            hx: grid.lx() / nx as f64,
            hy: grid.ly() / ny as f64,
            vmax,
            hv: 2.0 * vmax / nv as f64,
            f: vec![0.0; nx * ny * nv * nv],
            time: 0.0,
        })
    }

    #[inline]
    pub fn idx(&self, ix: usize, iy: usize, cx: usize, cy: usize) -> usize {
        debug_assert!(ix < self.nx && iy < self.ny && cx < self.nv && cy < self.nv);
        ((ix * self.ny + iy) * self.nv + cx) * self.nv + cy
    }

    #[inline]
    pub fn at(&self, ix: usize, iy: usize, cx: usize, cy: usize) -> f64 {
        self.f[self.idx(ix, iy, cx, cy)]
    }

    pub fn x_node(&self, ix: usize) -> f64 {
        (ix as f64 + 0.5) * self.hx
    }

    pub fn y_node(&self, iy: usize) -> f64 {
        (iy as f64 + 0.5) * self.hy
    }

    pub fn v_node(&self, c: usize) -> f64 {
        -self.vmax + (c as f64 + 0.5) * self.hv
    }

    /// Phase-space cell volume hx · hy · hv².
    pub fn cell_volume(&self) -> f64 {
        self.hx * self.hy * self.hv * self.hv
    }

    /// Fills from a density function f(x, y, vx, vy).
    pub fn fill_with(&mut self, f: impl Fn(f64, f64, f64, f64) -> f64) {
        for ix in 0..self.nx {
            let x = self.x_node(ix);
            for iy in 0..self.ny {
                let y = self.y_node(iy);
                for cx in 0..self.nv {
                    let vx = self.v_node(cx);
                    for cy in 0..self.nv {
                        let vy = self.v_node(cy);
                        let k = self.idx(ix, iy, cx, cy);
                        self.f[k] = f(x, y, vx, vy);
                    }
                }
            }
        }
    }

    /// Spatially uniform Maxwellian with density rho, bulk velocity `mean`,
    /// temperature theta.
    pub fn fill_maxwellian(&mut self, rho: f64, mean: (f64, f64), theta: f64) {
        let norm = rho / (2.0 * std::f64::consts::PI * theta);
        self.fill_with(|_, _, vx, vy| {
            let dvx = vx - mean.0;
            let dvy = vy - mean.1;
            norm * (-(dvx * dvx + dvy * dvy) / (2.0 * theta)).exp()
        });
    }

    /// Midpoint-rule mass Σ f · cell volume.
    pub fn total_mass(&self) -> f64 {
        kahan_sum(self.f.iter().copied()) * self.cell_volume()
    }

    pub fn max(&self) -> f64 {
        self.f.iter().fold(0.0f64, |m, &v| m.max(v))
    }

    pub fn min(&self) -> f64 {
        self.f.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    pub fn has_nan(&self) -> bool {
        self.f.iter().any(|v| !v.is_finite())
    }
}
