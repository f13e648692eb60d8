//! Momentum advection in divergence form on the staggered grid.
//!
//! The flux form δx(w̄ˣ āˣ) + δy(w̄ʸ āʸ) with arithmetic-mean interpolation
//! discretizes (w·∇)a for discretely divergence-free w. With pure centered
//! means (upwind = 0) the induced trilinear form Σ b·adv(w, a) is exactly
//! antisymmetric in (a, b) up to rounding, which is what the spectral
//! module's advection tensor and the energy checks rely on. A configurable
//! upwind fraction blends in donor-cell interpolation of the advected field
//! for robustness at coarse resolution.

use crate::field::{Array2, VelocityField};

/// Blend of centered and donor-cell interpolation of the advected pair
/// (left, right) given the advecting speed at the flux point.
#[inline]
fn blend(w: f64, left: f64, right: f64, upwind: f64) -> f64 {
    let centered = 0.5 * (left + right);
    if upwind == 0.0 {
        return centered;
    }
    let donor = if w >= 0.0 { left } else { right };
    (1.0 - upwind) * centered + upwind * donor
}

/// Advection term (w·∇)a evaluated on the faces of `a`'s staggering.
/// Wall faces of a no-slip grid get zero (the value there is pinned anyway).
pub fn advection_term_of(
    w: &VelocityField,
    a: &VelocityField,
    upwind: f64,
) -> (Array2, Array2) {
    assert!((0.0..=1.0).contains(&upwind), "upwind fraction in [0,1]");
    assert!(w.bc == a.bc && w.nx == a.nx && w.ny == a.ny, "layout mismatch");
    let (hx, hy) = (a.hx, a.hy);
    let mut ax = Array2::zeros(a.ux.nx, a.ux.ny);
    let mut ay = Array2::zeros(a.uy.nx, a.uy.ny);

    let periodic = matches!(a.bc, crate::grid::FluidBc::Periodic);
    let (nx, ny) = (a.nx, a.ny);

    // x component: faces (i, j), i skipping walls when no-slip.
    let (i_lo, i_hi) = if periodic { (0, nx) } else { (1, nx) };
    for j in 0..ny {
        let sj = j as isize;
        for i in i_lo..i_hi {
            let si = i as isize;
            // x fluxes at the two neighboring cell centers c = i-1, i
            let mut flux_x = [0.0; 2];
            for (s, c) in [si - 1, si].iter().enumerate() {
                let wm = 0.5 * (w.ux_at(*c, sj) + w.ux_at(*c + 1, sj));
                let am = blend(wm, a.ux_at(*c, sj), a.ux_at(*c + 1, sj), upwind);
                flux_x[s] = wm * am;
            }
            // y fluxes at the two corners jc = j, j+1 on face line i
            let mut flux_y = [0.0; 2];
            for (s, jc) in [sj, sj + 1].iter().enumerate() {
                let wm = 0.5 * (w.uy_at(si - 1, *jc) + w.uy_at(si, *jc));
                let am = blend(wm, a.ux_at(si, *jc - 1), a.ux_at(si, *jc), upwind);
                flux_y[s] = wm * am;
            }
            *ax.at_mut(i, j) = (flux_x[1] - flux_x[0]) / hx + (flux_y[1] - flux_y[0]) / hy;
        }
    }

    // y component, mirrored.
    let (j_lo, j_hi) = if periodic { (0, ny) } else { (1, ny) };
    for j in j_lo..j_hi {
        let sj = j as isize;
        for i in 0..nx {
            let si = i as isize;
            let mut flux_y = [0.0; 2];
            for (s, c) in [sj - 1, sj].iter().enumerate() {
                let wm = 0.5 * (w.uy_at(si, *c) + w.uy_at(si, *c + 1));
                let am = blend(wm, a.uy_at(si, *c), a.uy_at(si, *c + 1), upwind);
                flux_y[s] = wm * am;
            }
            let mut flux_x = [0.0; 2];
            for (s, ic) in [si, si + 1].iter().enumerate() {
                let wm = 0.5 * (w.ux_at(*ic, sj - 1) + w.ux_at(*ic, sj));
                let am = blend(wm, a.uy_at(*ic - 1, sj), a.uy_at(*ic, sj), upwind);
                flux_x[s] = wm * am;
            }
            *ay.at_mut(i, j) = (flux_y[1] - flux_y[0]) / hy + (flux_x[1] - flux_x[0]) / hx;
        }
    }
    (ax, ay)
}

/// Self-advection term (u·∇)u.
pub fn advection_term(u: &VelocityField, upwind: f64) -> (Array2, Array2) {
    advection_term_of(u, u, upwind)
}

/// One explicit Euler advection substep: u - dt (u·∇)u.
pub fn advect(u: &VelocityField, dt: f64, upwind: f64) -> VelocityField {
    let (ax, ay) = advection_term(u, upwind);
    let mut out = u.clone();
    for (v, t) in out.ux.data.iter_mut().zip(&ax.data) {
        *v -= dt * t;
    }
    for (v, t) in out.uy.data.iter_mut().zip(&ay.data) {
        *v -= dt * t;
    }
    out.enforce_wall_normals();
    out
}
