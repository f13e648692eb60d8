//! Grid-based state: scalar arrays, the staggered velocity field, pressure,
//! and velocity-moment fields.
//!
//! Velocity lives on a MAC staggering: `ux` on vertical faces, `uy` on
//! horizontal faces, pressure and moments at cell centers. With no-slip walls
//! `ux` has `(nx+1) x ny` entries (wall faces stored, pinned to zero) and
//! ghost values are odd reflections, so interpolation vanishes on the wall.
//! With periodic boundaries both components are `nx x ny` and indices wrap.

use crate::grid::{FluidBc, GridGeometry};

/// Dense row-major 2-D array of f64.
#[derive(Clone, Debug, PartialEq)]
pub struct Array2 {
    pub nx: usize,
    pub ny: usize,
    pub data: Vec<f64>,
}

impl Array2 {
    pub fn zeros(nx: usize, ny: usize) -> Self {
        assert!(nx > 0 && ny > 0, "Array2 dimensions must be positive");
        Array2 {
            nx,
            ny,
            data: vec![0.0; nx * ny],
        }
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny);
        j * self.nx + i
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[self.idx(i, j)]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        let k = self.idx(i, j);
        &mut self.data[k]
    }

    pub fn fill_with(&mut self, f: impl Fn(usize, usize) -> f64) {
        for j in 0..self.ny {
            for i in 0..self.nx {
                self.data[j * self.nx + i] = f(i, j);
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.data.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    pub fn mean(&self) -> f64 {
        kahan_sum(self.data.iter().copied()) / self.data.len() as f64
    }

    pub fn sum(&self) -> f64 {
        kahan_sum(self.data.iter().copied())
    }
}

/// Compensated (Kahan) summation; deterministic for a fixed iteration order.
pub fn kahan_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut s = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let y = v - c;
        let t = s + y;
        c = (t - s) - y;
        s = t;
    }
    s
}

/// Staggered velocity field on a [`GridGeometry`].
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityField {
    pub bc: FluidBc,
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    pub ux: Array2,
    pub uy: Array2,
}

/// Drag force sampled on the same staggering as the velocity.
pub type ForceField = VelocityField;

impl VelocityField {
    pub fn zeros(grid: &GridGeometry) -> Self {
        let (nx, ny) = (grid.nx(), grid.ny());
        let (ux, uy) = match grid.spec.bc_fluid {
            FluidBc::Periodic => (Array2::zeros(nx, ny), Array2::zeros(nx, ny)),
            FluidBc::NoSlip => (Array2::zeros(nx + 1, ny), Array2::zeros(nx, ny + 1)),
        };
        VelocityField {
            bc: grid.spec.bc_fluid,
            nx,
            ny,
            hx: grid.hx,
            hy: grid.hy,
            ux,
            uy,
        }
    }

    /// Number of x-face columns actually stored.
    pub fn ux_nx(&self) -> usize {
        self.ux.nx
    }

    pub fn uy_ny(&self) -> usize {
        self.uy.ny
    }

    /// Ghost-aware read of `ux`; indices may stick one reflection past the
    /// boundary. Periodic wraps, no-slip reflects oddly (wall value zero).
    pub fn ux_at(&self, i: isize, j: isize) -> f64 {
        let (nx, ny) = (self.nx as isize, self.ny as isize);
        match self.bc {
            FluidBc::Periodic => self
                .ux
                .at(i.rem_euclid(nx) as usize, j.rem_euclid(ny) as usize),
            FluidBc::NoSlip => {
                let mut i = i;
                let mut j = j;
                let mut sign = 1.0;
                while i < 0 || i > nx {
                    i = if i < 0 { -i } else { 2 * nx - i };
                    sign = -sign;
                }
                while j < 0 || j >= ny {
                    j = if j < 0 { -1 - j } else { 2 * ny - 1 - j };
                    sign = -sign;
                }
                sign * self.ux.at(i as usize, j as usize)
            }
        }
    }

    /// Ghost-aware read of `uy`, mirror image of [`Self::ux_at`].
    pub fn uy_at(&self, i: isize, j: isize) -> f64 {
        let (nx, ny) = (self.nx as isize, self.ny as isize);
        match self.bc {
            FluidBc::Periodic => self
                .uy
                .at(i.rem_euclid(nx) as usize, j.rem_euclid(ny) as usize),
            FluidBc::NoSlip => {
                let mut i = i;
                let mut j = j;
                let mut sign = 1.0;
                while i < 0 || i >= nx {
                    i = if i < 0 { -1 - i } else { 2 * nx - 1 - i };
                    sign = -sign;
                }
                while j < 0 || j > ny {
                    j = if j < 0 { -j } else { 2 * ny - j };
                    sign = -sign;
                }
                sign * self.uy.at(i as usize, j as usize)
            }
        }
    }

    /// Position of the (i, j) x-face node.
    pub fn ux_pos(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.hx, (j as f64 + 0.5) * self.hy)
    }

    pub fn uy_pos(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.hx, j as f64 * self.hy)
    }

    /// Overwrites both components from closures of face position. With
    /// no-slip walls the wall-normal faces are pinned back to zero.
    pub fn set_from(&mut self, fx: impl Fn(f64, f64) -> f64, fy: impl Fn(f64, f64) -> f64) {
        for j in 0..self.ux.ny {
            for i in 0..self.ux.nx {
                let (x, y) = self.ux_pos(i, j);
                *self.ux.at_mut(i, j) = fx(x, y);
            }
        }
        for j in 0..self.uy.ny {
            for i in 0..self.uy.nx {
                let (x, y) = self.uy_pos(i, j);
                *self.uy.at_mut(i, j) = fy(x, y);
            }
        }
        self.enforce_wall_normals();
    }

    /// Builds the discrete curl of a stream function sampled at cell corners.
    /// The result is divergence-free to rounding by construction, and with
    /// no-slip walls a stream function constant on the boundary gives zero
    /// wall-normal velocity exactly.
    pub fn from_stream(grid: &GridGeometry, psi: impl Fn(f64, f64) -> f64) -> Self {
        let mut u = VelocityField::zeros(grid);
        let (hx, hy) = (grid.hx, grid.hy);
        for j in 0..u.ux.ny {
            for i in 0..u.ux.nx {
                let x = i as f64 * hx;
                *u.ux.at_mut(i, j) =
                    (psi(x, (j + 1) as f64 * hy) - psi(x, j as f64 * hy)) / hy;
            }
        }
        for j in 0..u.uy.ny {
            for i in 0..u.uy.nx {
                let y = j as f64 * hy;
                *u.uy.at_mut(i, j) =
                    -(psi((i + 1) as f64 * hx, y) - psi(i as f64 * hx, y)) / hx;
            }
        }
        u.enforce_wall_normals();
        u
    }

    /// Pins wall-normal faces to zero (no-op for periodic boundaries).
    pub fn enforce_wall_normals(&mut self) {
        if self.bc == FluidBc::NoSlip {
            for j in 0..self.ux.ny {
                *self.ux.at_mut(0, j) = 0.0;
                *self.ux.at_mut(self.nx, j) = 0.0;
            }
            for i in 0..self.uy.nx {
                *self.uy.at_mut(i, 0) = 0.0;
                *self.uy.at_mut(i, self.ny) = 0.0;
            }
        }
    }

    /// Cell-centered divergence.
    pub fn divergence(&self) -> Array2 {
        let mut d = Array2::zeros(self.nx, self.ny);
        for j in 0..self.ny {
            for i in 0..self.nx {
                let (si, sj) = (i as isize, j as isize);
                *d.at_mut(i, j) = (self.ux_at(si + 1, sj) - self.ux_at(si, sj)) / self.hx
                    + (self.uy_at(si, sj + 1) - self.uy_at(si, sj)) / self.hy;
            }
        }
        d
    }

    /// Max |div u| scaled by h / max(1, |u|): dimensionless residual used by
    /// the projection invariant.
    pub fn max_div_rel(&self) -> f64 {
        let scale = (1.0 / self.hx + 1.0 / self.hy) * self.max_abs().max(1.0);
        self.divergence().max_abs() / scale
    }

    pub fn max_abs(&self) -> f64 {
        self.ux.max_abs().max(self.uy.max_abs())
    }

    /// ∫ |u|² dx by the natural face quadrature (each face weighted by one
    /// cell area; wall faces carry zero velocity).
    pub fn l2_sq(&self) -> f64 {
        let a = self.hx * self.hy;
        let sx = kahan_sum(self.ux.data.iter().map(|v| v * v));
        let sy = kahan_sum(self.uy.data.iter().map(|v| v * v));
        a * (sx + sy)
    }

    pub fn l2_dist(&self, other: &VelocityField) -> f64 {
        assert_eq!(self.ux.data.len(), other.ux.data.len(), "layout mismatch");
        assert_eq!(self.uy.data.len(), other.uy.data.len(), "layout mismatch");
        let a = self.hx * self.hy;
        let sx = kahan_sum(
            self.ux
                .data
                .iter()
                .zip(&other.ux.data)
                .map(|(p, q)| (p - q) * (p - q)),
        );
        let sy = kahan_sum(
            self.uy
                .data
                .iter()
                .zip(&other.uy.data)
                .map(|(p, q)| (p - q) * (p - q)),
        );
        (a * (sx + sy)).sqrt()
    }

    /// Bilinear sample of both components at an arbitrary point of the
    /// closed domain. Each component interpolates on its own face grid;
    /// ghost reflection makes the result vanish on no-slip walls.
    pub fn sample(&self, x: f64, y: f64) -> (f64, f64) {
        let gx = x / self.hx;
        let gy = y / self.hy - 0.5;
        let i0 = gx.floor();
        let j0 = gy.floor();
        let (tx, ty) = (gx - i0, gy - j0);
        let (i0, j0) = (i0 as isize, j0 as isize);
        let ux = (1.0 - tx) * (1.0 - ty) * self.ux_at(i0, j0)
            + tx * (1.0 - ty) * self.ux_at(i0 + 1, j0)
            + (1.0 - tx) * ty * self.ux_at(i0, j0 + 1)
            + tx * ty * self.ux_at(i0 + 1, j0 + 1);

        let gx = x / self.hx - 0.5;
        let gy = y / self.hy;
        let i0 = gx.floor();
        let j0 = gy.floor();
        let (tx, ty) = (gx - i0, gy - j0);
        let (i0, j0) = (i0 as isize, j0 as isize);
        let uy = (1.0 - tx) * (1.0 - ty) * self.uy_at(i0, j0)
            + tx * (1.0 - ty) * self.uy_at(i0 + 1, j0)
            + (1.0 - tx) * ty * self.uy_at(i0, j0 + 1)
            + tx * ty * self.uy_at(i0 + 1, j0 + 1);
        (ux, uy)
    }

    pub fn has_nan(&self) -> bool {
        self.ux.data.iter().chain(self.uy.data.iter()).any(|v| !v.is_finite())
    }
}

/// Cell-centered pressure with mean pinned to zero by the solver.
#[derive(Clone, Debug)]
pub struct PressureField {
    pub p: Array2,
    pub hx: f64,
    pub hy: f64,
}

impl PressureField {
    pub fn zeros(grid: &GridGeometry) -> Self {
        PressureField {
            p: Array2::zeros(grid.nx(), grid.ny()),
            hx: grid.hx,
            hy: grid.hy,
        }
    }
}

/// Cell-centered velocity moments of the kinetic phase: number density m0,
/// momentum density (m1x, m1y), and energy density m2 = ∫|v|² f dv. All per
/// unit area; `step_tag` records the step they were deposited at so stale
/// caches are detectable.
#[derive(Clone, Debug)]
pub struct MomentFields {
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    pub m0: Array2,
    pub m1x: Array2,
    pub m1y: Array2,
    pub m2: Array2,
    pub step_tag: u64,
}

impl MomentFields {
    pub fn zeros(grid: &GridGeometry) -> Self {
        let (nx, ny) = (grid.nx(), grid.ny());
        MomentFields {
            nx,
            ny,
            hx: grid.hx,
            hy: grid.hy,
            m0: Array2::zeros(nx, ny),
            m1x: Array2::zeros(nx, ny),
            m1y: Array2::zeros(nx, ny),
            m2: Array2::zeros(nx, ny),
            step_tag: 0,
        }
    }

    /// Total kinetic mass represented by m0: Σ m0 · cell area.
    pub fn total_mass(&self) -> f64 {
        self.m0.sum() * self.hx * self.hy
    }
}
