//! Orthonormal eigenbases of the 1-D second-difference operator under the
//! boundary rules that appear on a staggered grid, plus a 2-D tensor
//! transform built from two of them.
//!
//! Solving Poisson and Helmholtz problems in these bases is an exact discrete
//! solve: invert (or exponentiate) the eigenvalue per mode, no iteration.
//! Matrices are applied densely; grids here are a few hundred points per
//! direction at most, so this is cheap and keeps the solver free of
//! convergence state.

/// Orthonormal basis `fwd` (modes x points, row-major) with `eig[k]` the
/// eigenvalue of v ↦ (v_{i+1} - 2 v_i + v_{i-1})/h² on mode k under the
/// basis's boundary rule. Inverse transform is the transpose.
#[derive(Clone, Debug)]
pub struct Basis1d {
    pub n: usize,
    pub fwd: Vec<f64>,
    pub eig: Vec<f64>,
}

impl Basis1d {
    /// Periodic points i = 0..n-1: real Fourier basis.
    pub fn periodic(n: usize, h: f64) -> Self {
        assert!(n >= 2);
        let mut fwd = vec![0.0; n * n];
        let mut eig = vec![0.0; n];
        let mut k_row = 0usize;
        let push_row = |fwd: &mut Vec<f64>, row: usize, f: &dyn Fn(usize) -> f64| {
            for i in 0..n {
                fwd[row * n + i] = f(i);
            }
        };
        let lam = |k: usize| -(2.0 - 2.0 * (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos())
            / (h * h);
        // k = 0: constant mode.
        push_row(&mut fwd, k_row, &|_| 1.0 / (n as f64).sqrt());
        eig[k_row] = 0.0;
        k_row += 1;
        let half = (n - 1) / 2;
        for k in 1..=half {
            let c = (2.0 / n as f64).sqrt();
            let w = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            push_row(&mut fwd, k_row, &|i| c * (w * i as f64).cos());
            eig[k_row] = lam(k);
            k_row += 1;
            push_row(&mut fwd, k_row, &|i| c * (w * i as f64).sin());
            eig[k_row] = lam(k);
            k_row += 1;
        }
        if n % 2 == 0 {
            // Nyquist mode (-1)^i.
            let c = 1.0 / (n as f64).sqrt();
            push_row(&mut fwd, k_row, &|i| if i % 2 == 0 { c } else { -c });
            eig[k_row] = lam(n / 2);
            k_row += 1;
        }
        assert_eq!(k_row, n);
        Basis1d { n, fwd, eig }
    }

    /// Cell centers with even (Neumann) reflection at both walls: discrete
    /// cosine modes cos(πk(i+½)/n). Used for pressure with no-slip walls.
    pub fn neumann_cells(n: usize, h: f64) -> Self {
        assert!(n >= 2);
        let mut fwd = vec![0.0; n * n];
        let mut eig = vec![0.0; n];
        for k in 0..n {
            let c = if k == 0 {
                (1.0 / n as f64).sqrt()
            } else {
                (2.0 / n as f64).sqrt()
            };
            let w = std::f64::consts::PI * k as f64 / n as f64;
            for i in 0..n {
                fwd[k * n + i] = c * (w * (i as f64 + 0.5)).cos();
            }
            eig[k] = -(2.0 - 2.0 * w.cos()) / (h * h);
        }
        Basis1d { n, fwd, eig }
    }

    /// Interior face points i = 1..n-1 of a wall-bounded direction with the
    /// value pinned to zero on both walls: sine modes sin(πki/n), size n-1.
    pub fn dirichlet_faces(n_cells: usize, h: f64) -> Self {
        assert!(n_cells >= 2);
        let n = n_cells - 1;
        let mut fwd = vec![0.0; n * n];
        let mut eig = vec![0.0; n];
        for k in 1..=n {
            let c = (2.0 / n_cells as f64).sqrt();
            let w = std::f64::consts::PI * k as f64 / n_cells as f64;
            for i in 1..=n {
                fwd[(k - 1) * n + (i - 1)] = c * (w * i as f64).sin();
            }
            eig[k - 1] = -(2.0 - 2.0 * w.cos()) / (h * h);
        }
        Basis1d { n, fwd, eig }
    }

    /// Cell centers with odd reflection at both walls (ghost = -boundary
    /// value, so the interpolated wall value is zero): shifted sine modes
    /// sin(π(k+1)(i+½)/n).
    pub fn dirichlet_cells(n: usize, h: f64) -> Self {
        assert!(n >= 2);
        let mut fwd = vec![0.0; n * n];
        let mut eig = vec![0.0; n];
        for k in 0..n {
            let m = (k + 1) as f64;
            let c = if k + 1 == n {
                (1.0 / n as f64).sqrt()
            } else {
                (2.0 / n as f64).sqrt()
            };
            let w = std::f64::consts::PI * m / n as f64;
            for i in 0..n {
                fwd[k * n + i] = c * (w * (i as f64 + 0.5)).sin();
            }
            eig[k] = -(2.0 - 2.0 * w.cos()) / (h * h);
        }
        Basis1d { n, fwd, eig }
    }
}

/// Tensor transform on an nx x ny array (row-major, x fastest).
#[derive(Clone, Debug)]
pub struct Transform2d {
    pub bx: Basis1d,
    pub by: Basis1d,
}

impl Transform2d {
    pub fn new(bx: Basis1d, by: Basis1d) -> Self {
        Transform2d { bx, by }
    }

    pub fn nx(&self) -> usize {
        self.bx.n
    }

    pub fn ny(&self) -> usize {
        self.by.n
    }

    /// data (points) -> coefficients, both nx x ny row-major.
    pub fn forward(&self, data: &[f64]) -> Vec<f64> {
        self.apply(data, false)
    }

    /// coefficients -> data.
    pub fn inverse(&self, coef: &[f64]) -> Vec<f64> {
        self.apply(coef, true)
    }

    /// Eigenvalue of the separable second-difference operator for mode (k, l).
    #[inline]
    pub fn eig(&self, k: usize, l: usize) -> f64 {
        self.bx.eig[k] + self.by.eig[l]
    }

    fn apply(&self, input: &[f64], inverse: bool) -> Vec<f64> {
        let (nx, ny) = (self.bx.n, self.by.n);
        assert_eq!(input.len(), nx * ny, "transform shape mismatch");
        // x direction: out[j*nx + k] = Σ_i B[k,i] in[j*nx + i]  (or Bᵀ).
        let mut mid = vec![0.0; nx * ny];
        for j in 0..ny {
            let row_in = &input[j * nx..(j + 1) * nx];
            let row_out = &mut mid[j * nx..(j + 1) * nx];
            for k in 0..nx {
                let mut s = 0.0;
                if inverse {
                    for i in 0..nx {
                        s += self.bx.fwd[i * nx + k] * row_in[i];
                    }
                } else {
                    let b = &self.bx.fwd[k * nx..(k + 1) * nx];
                    for i in 0..nx {
                        s += b[i] * row_in[i];
                    }
                }
                row_out[k] = s;
            }
        }
        // y direction.
        let mut out = vec![0.0; nx * ny];
        for l in 0..ny {
            for j in 0..ny {
                let b = if inverse {
                    self.by.fwd[j * ny + l]
                } else {
                    self.by.fwd[l * ny + j]
                };
                if b == 0.0 {
                    continue;
                }
                let row_mid = &mid[j * nx..(j + 1) * nx];
                let row_out = &mut out[l * nx..(l + 1) * nx];
                for k in 0..nx {
                    row_out[k] += b * row_mid[k];
                }
            }
        }
        out
    }
}
