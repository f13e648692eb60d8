//! Weighted particle ensemble and Maxwellian sampling.
//!
//! Weights are fixed at creation and never mutated by the dynamics, so the
//! total represented mass is conserved bit for bit over any run.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::field::kahan_sum;
use crate::grid::GridGeometry;

#[derive(Clone, Debug)]
pub struct ParticleEnsemble {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
    pub w: Vec<f64>,
    pub seed: u64,
    pub time: f64,
}

impl ParticleEnsemble {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Σ wᵢ, compensated summation in storage order. Deterministic, and
    /// constant over a run because weights never change.
    pub fn total_weight(&self) -> f64 {
        kahan_sum(self.w.iter().copied())
    }

    /// Σ wᵢ (1 + |vᵢ|²), the kinetic contribution to the system energy.
    pub fn kinetic_energy(&self) -> f64 {
        kahan_sum(
            self.w
                .iter()
                .zip(self.vx.iter().zip(&self.vy))
                .map(|(w, (vx, vy))| w * (1.0 + vx * vx + vy * vy)),
        )
    }

    pub fn has_nan(&self) -> bool {
        self.x
            .iter()
            .chain(&self.y)
            .chain(&self.vx)
            .chain(&self.vy)
            .chain(&self.w)
            .any(|v| !v.is_finite())
    }
}

/// Draws `n` particles with uniform positions on the domain and Gaussian
/// velocities (`mean` per axis, variance `theta`). Every particle carries the
/// same weight `rho · |Ω| / n`, so the ensemble represents a spatially uniform
/// density `rho`. Draws are a fixed per-particle sequence from one seeded
/// ChaCha stream: the same seed gives the same ensemble, bit for bit.
pub fn sample_maxwellian(
    grid: &GridGeometry,
    rho: f64,
    mean: (f64, f64),
    theta: f64,
    n: usize,
    seed: u64,
) -> Result<ParticleEnsemble> {
    if n == 0 {
        return Err(Error::Config("particle count must be positive".into()));
    }
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::Config(format!("density must be positive, got {rho}")));
    }
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::Config(format!(
            "temperature must be positive, got {theta}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, theta.sqrt())
        .map_err(|e| Error::Config(format!("bad velocity distribution: {e}")))?;
    let w = rho * grid.area() / n as f64;
    let mut ens = ParticleEnsemble {
        x: Vec::with_capacity(n),
        y: Vec::with_capacity(n),
        vx: Vec::with_capacity(n),
        vy: Vec::with_capacity(n),
        w: vec![w; n],
        seed,
        time: 0.0,
    };
    for _ in 0..n {
        ens.x.push(rng.gen::<f64>() * grid.lx());
        ens.y.push(rng.gen::<f64>() * grid.ly());
        ens.vx.push(mean.0 + normal.sample(&mut rng));
        ens.vy.push(mean.1 + normal.sample(&mut rng));
    }
    Ok(ens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_domain, DomainSpec, FluidBc, KineticBc};

    fn grid() -> GridGeometry {
        build_domain(DomainSpec::unit_square(8, FluidBc::NoSlip, KineticBc::Specular)).unwrap()
    }

    #[test]
    fn unit_mass_is_exact() {
        // rho = 1 on the unit square split over 10^4 equal weights.
        let ens = sample_maxwellian(&grid(), 1.0, (0.0, 0.0), 0.5, 10_000, 42).unwrap();
        assert_eq!(ens.w[0], 1e-4);
        assert_eq!(ens.total_weight(), 1.0);
    }

    #[test]
    fn rejects_empty_and_degenerate_input() {
        assert!(sample_maxwellian(&grid(), 1.0, (0.0, 0.0), 0.5, 0, 1).is_err());
        assert!(sample_maxwellian(&grid(), -1.0, (0.0, 0.0), 0.5, 10, 1).is_err());
        assert!(sample_maxwellian(&grid(), 1.0, (0.0, 0.0), 0.0, 10, 1).is_err());
    }

    #[test]
    fn sample_mean_within_clt_band() {
        let theta = 0.3;
        let n = 20_000;
        let ens = sample_maxwellian(&grid(), 1.0, (0.7, -0.2), theta, n, 7).unwrap();
        let tol = 4.0 * (theta / n as f64).sqrt();
        let mx = kahan_sum(ens.vx.iter().copied()) / n as f64;
        let my = kahan_sum(ens.vy.iter().copied()) / n as f64;
        assert!((mx - 0.7).abs() < tol, "mean vx {mx} off by more than {tol}");
        assert!((my + 0.2).abs() < tol, "mean vy {my} off by more than {tol}");
    }

    #[test]
    fn same_seed_same_bits() {
        let a = sample_maxwellian(&grid(), 1.0, (0.1, 0.2), 0.4, 500, 99).unwrap();
        let b = sample_maxwellian(&grid(), 1.0, (0.1, 0.2), 0.4, 500, 99).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.vx, b.vx);
        assert_eq!(a.vy, b.vy);
        let c = sample_maxwellian(&grid(), 1.0, (0.1, 0.2), 0.4, 500, 100).unwrap();
        assert_ne!(a.x, c.x);
    }

    #[test]
    fn positions_inside_domain() {
        let ens = sample_maxwellian(&grid(), 2.0, (0.0, 0.0), 1.0, 1000, 3).unwrap();
        assert!(ens
            .x
            .iter()
            .zip(&ens.y)
            .all(|(&x, &y)| (0.0..1.0).contains(&x) && (0.0..1.0).contains(&y)));
        assert!((ens.total_weight() - 2.0).abs() < 1e-12);
    }
}
