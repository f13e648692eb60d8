//! Moment deposition: particles -> cell-centered moment fields.
//!
//! Cloud-in-cell splits each particle bilinearly over the four nearest cell
//! centers; the weights are a partition of unity, so the deposited mass
//! equals the ensemble mass to rounding. Near a wall the off-domain share is
//! folded into the boundary cell, which keeps the partition exact. Particles
//! are accumulated in storage order in one buffer: deposition is
//! deterministic and independent of worker count by construction.

use crate::field::MomentFields;
use crate::grid::{GridGeometry, KineticBc};
use crate::particles::ParticleEnsemble;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DepositionScheme {
    CloudInCell,
    NearestCell,
}

/// Deposits m0, m1, m2 of `ens` onto the cells of `grid` as densities per
/// unit area. `step_tag` marks the step the moments belong to.
pub fn deposit_moments(
    ens: &ParticleEnsemble,
    grid: &GridGeometry,
    scheme: DepositionScheme,
    step_tag: u64,
) -> MomentFields {
    let mut m = MomentFields::zeros(grid);
    m.step_tag = step_tag;
    let (nx, ny) = (grid.nx(), grid.ny());
    let periodic = grid.spec.bc_kinetic == KineticBc::Periodic;

    // (cell index, share) pairs per axis
    let split = |g: f64, n: usize| -> [(usize, f64); 2] {
        let i0 = g.floor();
        let t = g - i0;
        let i0 = i0 as isize;
        let wrap = |i: isize| -> usize {
            if periodic {
                i.rem_euclid(n as isize) as usize
            } else {
                i.clamp(0, n as isize - 1) as usize
            }
        };
        [(wrap(i0), 1.0 - t), (wrap(i0 + 1), t)]
    };

    for p in 0..ens.len() {
        let w = ens.w[p];
        let (vx, vy) = (ens.vx[p], ens.vy[p]);
        let vv = vx * vx + vy * vy;
        match scheme {
            DepositionScheme::CloudInCell => {
                let xs = split(ens.x[p] / grid.hx - 0.5, nx);
                let ys = split(ens.y[p] / grid.hy - 0.5, ny);
                for (i, wx) in xs {
                    for (j, wy) in ys {
                        let s = w * wx * wy;
                        *m.m0.at_mut(i, j) += s;
                        *m.m1x.at_mut(i, j) += s * vx;
                        *m.m1y.at_mut(i, j) += s * vy;
                        *m.m2.at_mut(i, j) += s * vv;
                    }
                }
            }
            DepositionScheme::NearestCell => {
                let i = ((ens.x[p] / grid.hx) as isize).clamp(0, nx as isize - 1) as usize;
                let j = ((ens.y[p] / grid.hy) as isize).clamp(0, ny as isize - 1) as usize;
                *m.m0.at_mut(i, j) += w;
                *m.m1x.at_mut(i, j) += w * vx;
                *m.m1y.at_mut(i, j) += w * vy;
                *m.m2.at_mut(i, j) += w * vv;
            }
        }
    }

    let inv_area = 1.0 / grid.cell_area();
    for a in [&mut m.m0, &mut m.m1x, &mut m.m1y, &mut m.m2] {
        for v in &mut a.data {
            *v *= inv_area;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_domain, DomainSpec, FluidBc};
    use crate::particles::sample_maxwellian;

    fn grid(n: usize) -> GridGeometry {
        build_domain(DomainSpec::unit_square(n, FluidBc::NoSlip, KineticBc::Specular)).unwrap()
    }

    #[test]
    fn single_particle_at_cell_center_fills_one_cell() {
        let g = grid(8);
        let mut ens = sample_maxwellian(&g, 1.0, (0.0, 0.0), 0.1, 1, 1).unwrap();
        ens.x[0] = g.xc(3);
        ens.y[0] = g.yc(5);
        ens.vx[0] = 2.0;
        ens.vy[0] = -1.0;
        ens.w[0] = 0.25;
        let m = deposit_moments(&ens, &g, DepositionScheme::CloudInCell, 7);
        assert_eq!(m.step_tag, 7);
        let area = g.cell_area();
        assert_eq!(m.m0.at(3, 5), 0.25 / area);
        assert_eq!(m.m1x.at(3, 5), 0.5 / area);
        assert_eq!(m.m1y.at(3, 5), -0.25 / area);
        assert_eq!(m.m2.at(3, 5), 0.25 * 5.0 / area);
        // nothing anywhere else
        let total: f64 = m.m0.data.iter().sum();
        assert_eq!(total, m.m0.at(3, 5));
    }

    #[test]
    fn partition_of_unity_preserves_mass() {
        let g = grid(16);
        let ens = sample_maxwellian(&g, 1.3, (0.4, -0.2), 0.3, 50_000, 21).unwrap();
        for scheme in [DepositionScheme::CloudInCell, DepositionScheme::NearestCell] {
            let m = deposit_moments(&ens, &g, scheme, 0);
            let total = m.total_mass();
            let want = ens.total_weight();
            assert!(
                (total - want).abs() <= 1e-13 * want,
                "{scheme:?}: {total} vs {want}"
            );
            assert!(m.m0.min() >= 0.0);
        }
    }

    #[test]
    fn momentum_tracks_mean_velocity() {
        // m1 ≈ v̄ m0 for a Maxwellian, within the Monte Carlo band.
        let g = grid(8);
        let n = 100_000;
        let theta = 0.25;
        let vbar = (0.6, -0.3);
        let ens = sample_maxwellian(&g, 1.0, vbar, theta, n, 33).unwrap();
        let m = deposit_moments(&ens, &g, DepositionScheme::CloudInCell, 0);
        let a = g.cell_area();
        let mass: f64 = m.m0.sum() * a;
        let px: f64 = m.m1x.sum() * a;
        let py: f64 = m.m1y.sum() * a;
        let tol = 4.0 * (theta / n as f64).sqrt();
        assert!((px / mass - vbar.0).abs() < tol, "px/m = {}", px / mass);
        assert!((py / mass - vbar.1).abs() < tol, "py/m = {}", py / mass);
    }

    #[test]
    fn deposition_is_reproducible_and_near_order_free() {
        let g = grid(8);
        let ens = sample_maxwellian(&g, 1.0, (0.1, 0.0), 0.2, 5_000, 9).unwrap();
        let a = deposit_moments(&ens, &g, DepositionScheme::CloudInCell, 0);
        let b = deposit_moments(&ens, &g, DepositionScheme::CloudInCell, 0);
        assert_eq!(a.m0.data, b.m0.data, "same input, same bits");

        // reversed storage order changes only rounding-level bits
        let mut rev = ens.clone();
        rev.x.reverse();
        rev.y.reverse();
        rev.vx.reverse();
        rev.vy.reverse();
        rev.w.reverse();
        let c = deposit_moments(&rev, &g, DepositionScheme::CloudInCell, 0);
        let scale = a.m0.max_abs();
        for (p, q) in a.m0.data.iter().zip(&c.m0.data) {
            assert!((p - q).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn wall_adjacent_particle_mass_folds_inward() {
        let g = grid(8);
        let mut ens = sample_maxwellian(&g, 1.0, (0.0, 0.0), 0.1, 1, 1).unwrap();
        // closer to the wall than half a cell: part of its cloud would leave
        ens.x[0] = 0.01;
        ens.y[0] = 0.5;
        ens.w[0] = 1.0;
        let m = deposit_moments(&ens, &g, DepositionScheme::CloudInCell, 0);
        assert!((m.total_mass() - 1.0).abs() < 1e-13);
    }
}
