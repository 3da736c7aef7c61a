//! Finite-difference Bloch eigensolver on the same staggered grid the
//! frequency-domain solver uses, so that mode fields can be imposed as
//! boundary data without resampling.
//!
//! Unknowns are H_z on the nodes of a 1 × (2·half_height) supercell, periodic in
//! y and Bloch-periodic in x. The discrete operator
//! `Σ_e (1/ε_e)(H_n − H_o)` equals `(ωΔ)² H_n` at an eigenpair, with ω the
//! angular frequency for c = a = 1.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::geometry::{rasterize, CrystalGeometry};
use crate::linalg::{shift_invert_eigs, Csr, ShiftInvertOptions};
use crate::pwe::plane_wave::Parity;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// One eigenpair on the supercell grid.
#[derive(Clone, Debug)]
pub struct GridState {
    pub k: f64,
    pub omega: f64,
    pub parity: Parity,
    /// Full Bloch field H_z on nodes, index `i * ny + jj`.
    pub hz: Vec<C64>,
    pub residual: f64,
    pub concentration: f64,
}

#[derive(Clone, Debug)]
pub struct GridModeSolver {
    pub resolution: usize,
    /// Nodes per unit cell along x.
    pub nx: usize,
    /// Nodes along y; node `jj` sits at `y = (jj − ny/2)/resolution`.
    pub ny: usize,
    /// ε at E_x points (i, jj + 1/2).
    pub eps_ex: Vec<f64>,
    /// ε at E_y points (i + 1/2, jj).
    pub eps_ey: Vec<f64>,
    pub core_half_width: f64,
    pub cladding_index: f64,
}

impl GridModeSolver {
    /// Supercell covering the crystal slab plus `pad` of cladding on each side.
    pub fn new(geometry: &CrystalGeometry, resolution: usize, pad: f64) -> Result<Self> {
        let w = geometry.half_width();
        if !w.is_finite() {
            return Err(Error::InvalidInput("grid mode solver needs a finite slab".into()));
        }
        let res = resolution as f64;
        let jh = ((w + pad) * res).ceil() as usize;
        let ny = 2 * jh;
        let h = jh as f64 / res;
        let raster = rasterize(geometry, resolution, (0.0, 1.0, -h, h))?;
        let nx = resolution;
        let mut eps_ex = vec![0.0; nx * ny];
        let mut eps_ey = vec![0.0; nx * ny];
        for i in 0..nx {
            for jj in 0..ny {
                eps_ex[i * ny + jj] = raster.ex(i, jj);
                eps_ey[i * ny + jj] = raster.ey(i, jj);
            }
        }
        Ok(Self {
            resolution,
            nx,
            ny,
            eps_ex,
            eps_ey,
            core_half_width: 2.0 * crate::geometry::ROW_PITCH,
            cladding_index: geometry.cladding_index,
        })
    }

    /// Whether (k, ω) lies below the cladding light line, where a mode
    /// cannot leak into the cladding.
    pub fn below_light_line(&self, k: f64, omega: f64) -> bool {
        k.abs() > omega * self.cladding_index
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.resolution as f64
    }

    pub fn half_rows(&self) -> usize {
        self.ny / 2
    }

    pub fn y_of(&self, jj: usize) -> f64 {
        (jj as f64 - (self.ny / 2) as f64) * self.dx()
    }

    fn node(&self, i: usize, jj: usize) -> usize {
        i * self.ny + jj
    }

    /// Hermitian operator on the full node set.
    pub fn operator(&self, k: f64) -> Csr {
        let (nx, ny) = (self.nx, self.ny);
        let phase = C64::from_polar(1.0, TWO_PI * k);
        let mut t = Vec::with_capacity(nx * ny * 8);
        let mut edge = |n1: usize, n2: usize, g: f64, p: C64| {
            t.push((n1, n1, C64::new(g, 0.0)));
            t.push((n2, n2, C64::new(g, 0.0)));
            t.push((n1, n2, -g * p));
            t.push((n2, n1, -g * p.conj()));
        };
        for i in 0..nx {
            for jj in 0..ny {
                let n = self.node(i, jj);
                let (i2, p) = if i + 1 == nx { (0, phase) } else { (i + 1, C64::new(1.0, 0.0)) };
                edge(n, self.node(i2, jj), 1.0 / self.eps_ey[n], p);
                let j2 = (jj + 1) % ny;
                edge(n, self.node(i, j2), 1.0 / self.eps_ex[n], C64::new(1.0, 0.0));
            }
        }
        Csr::from_triplets(nx * ny, &t)
    }

    /// Basis of the mirror sector: each reduced unknown lists (node, coefficient).
    fn sector_basis(&self, parity: Parity) -> Vec<Vec<(usize, f64)>> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let sign = parity.hz_sign();
        let jh = self.ny / 2;
        let mut basis = Vec::new();
        for i in 0..self.nx {
            for jj in 0..self.ny {
                let mirror = (self.ny - jj) % self.ny;
                if jj == mirror {
                    if sign > 0.0 {
                        basis.push(vec![(self.node(i, jj), 1.0)]);
                    }
                } else if jj > jh {
                    basis.push(vec![(self.node(i, jj), s), (self.node(i, mirror), sign * s)]);
                }
            }
        }
        basis
    }

    /// Eigenpairs of one mirror sector nearest to `omega_guess` (a/λ).
    pub fn solve_k(
        &self,
        k: f64,
        parity: Parity,
        omega_guess: f64,
        nev: usize,
    ) -> Result<Vec<GridState>> {
        let full = self.operator(k);
        let basis = self.sector_basis(parity);
        let mut owner = vec![usize::MAX; full.n];
        let mut coef = vec![0.0; full.n];
        for (r, terms) in basis.iter().enumerate() {
            for &(node, c) in terms {
                owner[node] = r;
                coef[node] = c;
            }
        }
        let mut t = Vec::with_capacity(full.nnz());
        for n1 in 0..full.n {
            if owner[n1] == usize::MAX {
                continue;
            }
            for (n2, v) in full.row(n1) {
                if owner[n2] == usize::MAX {
                    continue;
                }
                t.push((owner[n1], owner[n2], v * (coef[n1] * coef[n2])));
            }
        }
        let reduced = Csr::from_triplets(basis.len(), &t);
        let scale = TWO_PI * self.dx();
        // σ sits 0.1% above the guess, never on an eigenvalue found earlier
        let shift = (omega_guess * 1.001 * scale).powi(2);
        let pairs = shift_invert_eigs(
            &reduced,
            ShiftInvertOptions {
                shift,
                nev,
                extra: nev.max(4),
                tol: 1e-12,
                max_iter: 400,
            },
        )
        .map_err(|e| match e {
            Error::EigenNonConvergence { detail, .. } => Error::EigenNonConvergence { k, detail },
            other => other,
        })?;
        let mut out = Vec::with_capacity(pairs.len());
        for p in pairs {
            let mut hz = vec![C64::new(0.0, 0.0); full.n];
            for (r, terms) in basis.iter().enumerate() {
                for &(node, c) in terms {
                    hz[node] = p.vector[r] * c;
                }
            }
            let concentration = self.concentration(&hz);
            out.push(GridState {
                k,
                omega: p.value.max(0.0).sqrt() / scale,
                parity,
                hz,
                residual: p.residual,
                concentration,
            });
        }
        Ok(out)
    }

    /// Fraction of Σ|H_z|² within the defect core |y| < core_half_width.
    pub fn concentration(&self, hz: &[C64]) -> f64 {
        let mut inside = 0.0;
        let mut total = 0.0;
        for i in 0..self.nx {
            for jj in 0..self.ny {
                let w = hz[self.node(i, jj)].norm_sqr();
                total += w;
                if self.y_of(jj).abs() < self.core_half_width {
                    inside += w;
                }
            }
        }
        inside / total.max(1e-300)
    }

    /// Electric field of a state: (E_x at (i, jj+1/2), E_y at (i+1/2, jj)),
    /// full Bloch fields.
    pub fn electric_field(&self, state: &GridState) -> (Vec<C64>, Vec<C64>) {
        let w = TWO_PI * state.omega;
        let h = self.dx();
        let phase = C64::from_polar(1.0, TWO_PI * state.k);
        let i_unit = C64::new(0.0, 1.0);
        let mut ex = vec![C64::new(0.0, 0.0); self.nx * self.ny];
        let mut ey = vec![C64::new(0.0, 0.0); self.nx * self.ny];
        for i in 0..self.nx {
            for jj in 0..self.ny {
                let n = self.node(i, jj);
                let right = if i + 1 == self.nx {
                    state.hz[self.node(0, jj)] * phase
                } else {
                    state.hz[self.node(i + 1, jj)]
                };
                ey[n] = -i_unit / (w * self.eps_ey[n] * h) * (right - state.hz[n]);
                let up = state.hz[self.node(i, (jj + 1) % self.ny)];
                ex[n] = i_unit / (w * self.eps_ex[n] * h) * (up - state.hz[n]);
            }
        }
        (ex, ey)
    }

    /// dω/dk of a state from the k-derivative of the operator (only the
    /// Bloch-wrapped x edges depend on k).
    pub fn group_velocity(&self, state: &GridState) -> f64 {
        let (nx, ny) = (self.nx, self.ny);
        let phase = C64::from_polar(1.0, TWO_PI * state.k);
        let mut num = 0.0;
        for jj in 0..ny {
            let n1 = self.node(nx - 1, jj);
            let n2 = self.node(0, jj);
            let g = 1.0 / self.eps_ey[n1];
            // d/dk of −g (p h1* h2 + p* h2* h1), p = e^{2πik}
            let t = state.hz[n1].conj() * state.hz[n2] * phase * C64::new(0.0, TWO_PI);
            num += -g * 2.0 * t.re;
        }
        let den: f64 = state.hz.iter().map(|v| v.norm_sqr()).sum();
        let s = TWO_PI * self.dx();
        num / den / (2.0 * s * s * state.omega)
    }

    /// Eigen-residual ‖L h − (ωΔ)² h‖/‖h‖ on the full node set.
    pub fn full_residual(&self, state: &GridState) -> f64 {
        let l = self.operator(state.k);
        let lam = (TWO_PI * state.omega * self.dx()).powi(2);
        let lh = l.mul_vec(&state.hz);
        let r: f64 = lh
            .iter()
            .zip(&state.hz)
            .map(|(a, b)| (a - lam * b).norm_sqr())
            .sum();
        let n: f64 = state.hz.iter().map(|v| v.norm_sqr()).sum();
        (r / n).sqrt()
    }
}
