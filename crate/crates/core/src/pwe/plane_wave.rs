//! Plane-wave expansion of the 2D TE problem in the out-of-plane magnetic field.
//!
//! The operator is Θ_{GG'} = (k+G)·(k+G') η_{GG'}, with η the inverse of the
//! permittivity Toeplitz matrix. Wavevectors are in units of 2π/a, so the
//! eigenvalues of Θ are (a/λ)².

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CrystalGeometry, ROW_PITCH};

/// Mirror parity about y = 0 of the profiles of E_y and H_z; E_x carries
/// the opposite parity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn as_str(self) -> &'static str {
        match self {
            Parity::Even => "even",
            Parity::Odd => "odd",
        }
    }

    /// Sign of H_z under y → −y.
    pub fn hz_sign(self) -> f64 {
        match self {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
        }
    }
}

/// Which periodic cell the expansion is built on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CellKind {
    /// 1 × (2·half_width + 2·pad) supercell around the line defect.
    Waveguide { pad: f64 },
    /// Rectangular 1 × √3 cell of the bulk crystal holding two holes.
    Bulk,
}

#[derive(Clone, Debug)]
pub struct PweState {
    pub omega: f64,
    pub parity: Option<Parity>,
    pub coeffs: Vec<C64>,
    pub residual: f64,
    pub n_g: f64,
}

pub struct PweSolver {
    pub lx: f64,
    pub ly: f64,
    px: i64,
    py: i64,
    eta: Mat<C64>,
    bulk: bool,
}

fn fft_2d(data: &mut [C64], nx: usize, ny: usize) {
    let mut planner = FftPlanner::<f64>::new();
    let fy = planner.plan_fft_forward(ny);
    for row in data.chunks_mut(ny) {
        fy.process(row);
    }
    let fx = planner.plan_fft_forward(nx);
    let mut col = vec![C64::new(0.0, 0.0); nx];
    for j in 0..ny {
        for i in 0..nx {
            col[i] = data[i * ny + j];
        }
        fx.process(&mut col);
        for i in 0..nx {
            data[i * ny + j] = col[i];
        }
    }
}

impl PweSolver {
    /// `cutoff` is the number of plane waves along x; the y count scales with
    /// the cell aspect ratio.
    pub fn new(geometry: &CrystalGeometry, cell: CellKind, cutoff: usize) -> Result<Self> {
        if cutoff < 7 {
            return Err(Error::InvalidInput(format!("plane-wave cutoff {cutoff} is below 7")));
        }
        let (lx, ly, bulk) = match cell {
            CellKind::Waveguide { pad } => {
                let w = geometry.half_width();
                let w = if w.is_finite() { w } else { 0.5 };
                (1.0, 2.0 * (w + pad), false)
            }
            CellKind::Bulk => (1.0, 2.0 * ROW_PITCH, true),
        };
        let px = (cutoff / 2) as i64;
        let py = ((px as f64) * ly / lx).round().max(1.0) as i64;
        let sx = (8 * px as usize + 8).next_power_of_two().max(64);
        let sy = (8 * py as usize + 8).next_power_of_two().max(64);

        let sample_geom = if bulk {
            let mut g = geometry.without_defect();
            g.rows_half = g.rows_half.max(2);
            g.edge_margin = g.edge_margin.max(10.0);
            g
        } else {
            geometry.clone()
        };
        let (hx, hy) = (lx / sx as f64, ly / sy as f64);
        let mut raster = vec![C64::new(0.0, 0.0); sx * sy];
        for i in 0..sx {
            for j in 0..sy {
                let x = (i as f64 + 0.5) * hx;
                let y = -0.5 * ly + (j as f64 + 0.5) * hy;
                raster[i * sy + j] = C64::new(pixel_eps(&sample_geom, x, y, hx, hy), 0.0);
            }
        }
        fft_2d(&mut raster, sx, sy);
        let norm = 1.0 / (sx * sy) as f64;
        let two_pi = 2.0 * std::f64::consts::PI;
        // Sample points sit at pixel centres offset from the origin; undo that shift.
        let eps_g = |dp: i64, dq: i64| -> C64 {
            let ix = dp.rem_euclid(sx as i64) as usize;
            let iy = dq.rem_euclid(sy as i64) as usize;
            let phase = two_pi
                * (dp as f64 * 0.5 * hx / lx + dq as f64 * (0.5 * hy - 0.5 * ly) / ly);
            raster[ix * sy + iy] * norm * C64::from_polar(1.0, -phase)
        };

        let nq = (2 * py + 1) as usize;
        let n = (2 * px + 1) as usize * nq;
        let idx = |p: i64, q: i64| ((p + px) as usize) * nq + (q + py) as usize;
        let mut toeplitz = Mat::<C64>::zeros(n, n);
        for p in -px..=px {
            for q in -py..=py {
                for p2 in -px..=px {
                    for q2 in -py..=py {
                        toeplitz[(idx(p, q), idx(p2, q2))] = eps_g(p - p2, q - q2);
                    }
                }
            }
        }
        let toeplitz =
            Mat::<C64>::from_fn(n, n, |i, j| 0.5 * (toeplitz[(i, j)] + toeplitz[(j, i)].conj()));
        let llt = toeplitz.llt(Side::Lower).map_err(|e| {
            Error::InvalidInput(format!("permittivity Toeplitz matrix not positive: {e:?}"))
        })?;
        let eta = llt.solve(Mat::<C64>::identity(n, n));
        let eta = Mat::<C64>::from_fn(n, n, |i, j| 0.5 * (eta[(i, j)] + eta[(j, i)].conj()));
        Ok(Self {
            lx,
            ly,
            px,
            py,
            eta,
            bulk,
        })
    }

    pub fn n_plane_waves(&self) -> usize {
        self.eta.nrows()
    }

    fn nq(&self) -> usize {
        (2 * self.py + 1) as usize
    }

    fn index(&self, p: i64, q: i64) -> usize {
        ((p + self.px) as usize) * self.nq() + (q + self.py) as usize
    }

    fn gx(&self, p: i64) -> f64 {
        p as f64 / self.lx
    }

    fn gy(&self, q: i64) -> f64 {
        q as f64 / self.ly
    }

    fn theta(&self, kx: f64, ky: f64, dkx: bool) -> Mat<C64> {
        let n = self.n_plane_waves();
        let nq = self.nq();
        let px = self.px;
        let py = self.py;
        Mat::<C64>::from_fn(n, n, |a, b| {
            let (p, q) = ((a / nq) as i64 - px, (a % nq) as i64 - py);
            let (p2, q2) = ((b / nq) as i64 - px, (b % nq) as i64 - py);
            let (ax, ay) = (kx + self.gx(p), ky + self.gy(q));
            let (bx, by) = (kx + self.gx(p2), ky + self.gy(q2));
            let w = if dkx { ax + bx } else { ax * bx + ay * by };
            self.eta[(a, b)] * w
        })
    }

    /// Mirror-adapted basis for H_z of the given sign under y → −y.
    fn parity_basis(&self, hz_sign: f64) -> Vec<Vec<(usize, f64)>> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut basis = Vec::new();
        for p in -self.px..=self.px {
            if hz_sign > 0.0 {
                basis.push(vec![(self.index(p, 0), 1.0)]);
            }
            for q in 1..=self.py {
                basis.push(vec![(self.index(p, q), s), (self.index(p, -q), hz_sign * s)]);
            }
        }
        basis
    }

    fn solve_block(
        &self,
        kx: f64,
        ky: f64,
        basis: Option<&[Vec<(usize, f64)>]>,
        n_keep: usize,
        parity: Option<Parity>,
    ) -> Result<Vec<PweState>> {
        let full = self.theta(kx, ky, false);
        let dfull = self.theta(kx, ky, true);
        let n = self.n_plane_waves();
        let project = |m: &Mat<C64>, basis: &[Vec<(usize, f64)>]| {
            let nb = basis.len();
            Mat::<C64>::from_fn(nb, nb, |a, b| {
                let mut acc = C64::new(0.0, 0.0);
                for &(i, ci) in &basis[a] {
                    for &(j, cj) in &basis[b] {
                        acc += m[(i, j)] * (ci * cj);
                    }
                }
                acc
            })
        };
        let (op, dop) = match basis {
            Some(b) => (project(&full, b), project(&dfull, b)),
            None => (full, dfull),
        };
        let m = op.nrows();
        let op = Mat::<C64>::from_fn(m, m, |i, j| 0.5 * (op[(i, j)] + op[(j, i)].conj()));
        let eig = op.self_adjoint_eigen(Side::Lower).map_err(|e| Error::EigenNonConvergence {
            k: kx,
            detail: format!("{e:?}"),
        })?;
        let u = eig.U();
        let mut out = Vec::new();
        for b in 0..m.min(n_keep) {
            let lam = eig.S().column_vector()[b].re;
            let v: Vec<C64> = (0..m).map(|i| u[(i, b)]).collect();
            let mut res = 0.0;
            let mut slope = C64::new(0.0, 0.0);
            for i in 0..m {
                let mut acc = C64::new(0.0, 0.0);
                let mut dacc = C64::new(0.0, 0.0);
                for j in 0..m {
                    acc += op[(i, j)] * v[j];
                    dacc += dop[(i, j)] * v[j];
                }
                res += (acc - lam * v[i]).norm_sqr();
                slope += v[i].conj() * dacc;
            }
            let omega = lam.max(0.0).sqrt();
            let domega = slope.re / (2.0 * omega.max(1e-300));
            let coeffs = match basis {
                Some(bs) => {
                    let mut c = vec![C64::new(0.0, 0.0); n];
                    for (a, terms) in bs.iter().enumerate() {
                        for &(i, ci) in terms {
                            c[i] += v[a] * ci;
                        }
                    }
                    c
                }
                None => v,
            };
            out.push(PweState {
                omega,
                parity,
                coeffs,
                residual: res.sqrt(),
                n_g: 1.0 / domega,
            });
        }
        Ok(out)
    }

    /// Lowest `n_bands` states at Bloch wavevector (kx, 0), both parity
    /// sectors merged and sorted.
    pub fn solve_k(&self, k: f64, n_bands: usize) -> Result<Vec<PweState>> {
        let mut states = Vec::new();
        for parity in [Parity::Even, Parity::Odd] {
            let basis = self.parity_basis(parity.hz_sign());
            states.extend(self.solve_block(k, 0.0, Some(&basis), n_bands, Some(parity))?);
        }
        states.sort_by(|a, b| a.omega.partial_cmp(&b.omega).unwrap());
        states.truncate(n_bands);
        for s in &states {
            if s.residual > 1e-8 {
                return Err(Error::EigenNonConvergence {
                    k,
                    detail: format!("eigenresidual {:.3e}", s.residual),
                });
            }
        }
        Ok(states)
    }

    /// Lowest frequencies at a general wavevector without parity reduction.
    pub fn frequencies_at(&self, kx: f64, ky: f64, n_bands: usize) -> Result<Vec<f64>> {
        Ok(self
            .solve_block(kx, ky, None, n_bands, None)?
            .into_iter()
            .map(|s| s.omega)
            .collect())
    }

    /// H_z of a state on an nx × ny grid of cell-centred points covering the
    /// cell, Bloch phase included.
    pub fn hz_grid(&self, k: f64, state: &PweState, nx: usize, ny: usize) -> Vec<C64> {
        let two_pi = 2.0 * std::f64::consts::PI;
        let xs: Vec<f64> = (0..nx).map(|i| (i as f64 + 0.5) * self.lx / nx as f64).collect();
        let ys: Vec<f64> =
            (0..ny).map(|j| -0.5 * self.ly + (j as f64 + 0.5) * self.ly / ny as f64).collect();
        let nq = self.nq();
        let np = (2 * self.px + 1) as usize;
        let mut partial = vec![C64::new(0.0, 0.0); np * ny];
        for pi in 0..np {
            for (j, &y) in ys.iter().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for qi in 0..nq {
                    let q = qi as i64 - self.py;
                    acc += state.coeffs[pi * nq + qi] * C64::from_polar(1.0, two_pi * self.gy(q) * y);
                }
                partial[pi * ny + j] = acc;
            }
        }
        let mut out = vec![C64::new(0.0, 0.0); nx * ny];
        for (i, &x) in xs.iter().enumerate() {
            for pi in 0..np {
                let p = pi as i64 - self.px;
                let e = C64::from_polar(1.0, two_pi * (k + self.gx(p)) * x);
                for j in 0..ny {
                    out[i * ny + j] += e * partial[pi * ny + j];
                }
            }
        }
        out
    }

    /// Fraction of ∫|H_z|² inside |y| < y_core.
    pub fn concentration(&self, k: f64, state: &PweState, y_core: f64) -> f64 {
        let ny = ((self.ly * 16.0).ceil() as usize).max(32);
        let nx = 16;
        let h = self.hz_grid(k, state, nx, ny);
        let mut inside = 0.0;
        let mut total = 0.0;
        for i in 0..nx {
            for j in 0..ny {
                let y = -0.5 * self.ly + (j as f64 + 0.5) * self.ly / ny as f64;
                let w = h[i * ny + j].norm_sqr();
                total += w;
                if y.abs() < y_core {
                    inside += w;
                }
            }
        }
        inside / total.max(1e-300)
    }

    pub fn is_bulk(&self) -> bool {
        self.bulk
    }
}

fn pixel_eps(g: &CrystalGeometry, x: f64, y: f64, hx: f64, hy: f64) -> f64 {
    if (hx - hy).abs() < 1e-12 * hx.max(hy) {
        return g.window_eps(x, y, hx, None);
    }
    // Rectangular pixel: average two square sub-windows along the long side.
    let h = hx.min(hy);
    let nx = (hx / h).round().max(1.0) as usize;
    let ny = (hy / h).round().max(1.0) as usize;
    let (sx, sy) = (hx / nx as f64, hy / ny as f64);
    let mut acc = 0.0;
    for a in 0..nx {
        for b in 0..ny {
            let cx = x - 0.5 * hx + (a as f64 + 0.5) * sx;
            let cy = y - 0.5 * hy + (b as f64 + 0.5) * sy;
            acc += rect_eps(g, cx, cy, sx, sy);
        }
    }
    acc / (nx * ny) as f64
}

fn rect_eps(g: &CrystalGeometry, x: f64, y: f64, hx: f64, hy: f64) -> f64 {
    use crate::geometry::circle_rect_area;
    let n2 = g.index * g.index;
    if !g.has_holes() {
        return n2;
    }
    let c2 = g.cladding_index * g.cladding_index;
    let (x0, x1, y0, y1) = (x - 0.5 * hx, x + 0.5 * hx, y - 0.5 * hy, y + 0.5 * hy);
    let w = g.half_width();
    let inside = (y1.min(w) - y0.max(-w)).max(0.0) / hy;
    let holes: f64 = g
        .holes_near(x0, x1, y0, y1, None)
        .into_iter()
        .map(|(cx, cy)| circle_rect_area(cx, cy, g.hole_radius, x0, x1, y0, y1))
        .sum();
    (c2 + (n2 - c2) * inside - (n2 - 1.0) * holes / (hx * hy)).clamp(1.0, n2)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BandStructure {
    pub k_points: Vec<f64>,
    pub bands: Vec<Vec<f64>>,
    pub parity: Vec<Vec<Parity>>,
    pub n_g: Vec<Vec<f64>>,
}

impl BandStructure {
    pub fn band(&self, index: usize) -> Vec<f64> {
        self.bands.iter().map(|b| b[index]).collect()
    }
}

/// Lowest `n_bands` TE bands of the waveguide supercell at each k.
pub fn solve_bands(
    geometry: &CrystalGeometry,
    k_list: &[f64],
    n_bands: usize,
    cutoff: usize,
    pad: f64,
) -> Result<BandStructure> {
    let solver = PweSolver::new(geometry, CellKind::Waveguide { pad }, cutoff)?;
    solver.bands(k_list, n_bands)
}

impl PweSolver {
    pub fn bands(&self, k_list: &[f64], n_bands: usize) -> Result<BandStructure> {
        let per_k: Vec<Result<Vec<PweState>>> =
            k_list.par_iter().map(|&k| self.solve_k(k, n_bands)).collect();
        let mut bs = BandStructure {
            k_points: k_list.to_vec(),
            bands: Vec::new(),
            parity: Vec::new(),
            n_g: Vec::new(),
        };
        for states in per_k {
            let states = states?;
            bs.bands.push(states.iter().map(|s| s.omega).collect());
            bs.parity.push(states.iter().map(|s| s.parity.unwrap_or(Parity::Even)).collect());
            bs.n_g.push(states.iter().map(|s| s.n_g).collect());
        }
        Ok(bs)
    }
}

/// Complete TE gap of the bulk crystal, scanning the rectangular-cell zone.
pub fn bulk_gap(geometry: &CrystalGeometry, cutoff: usize, nk: usize) -> Result<Option<(f64, f64)>> {
    let solver = PweSolver::new(geometry, CellKind::Bulk, cutoff)?;
    let nk = nk.max(2);
    let kys = 0.5 / solver.ly;
    let points: Vec<(f64, f64)> = (0..nk)
        .flat_map(|i| (0..nk).map(move |j| (i, j)))
        .map(|(i, j)| {
            (
                0.5 * i as f64 / (nk - 1) as f64,
                kys * j as f64 / (nk - 1) as f64,
            )
        })
        .collect();
    let nb = 8;
    let freqs: Vec<Result<Vec<f64>>> = points
        .par_iter()
        .map(|&(kx, ky)| solver.frequencies_at(kx, ky, nb))
        .collect();
    let freqs: Vec<Vec<f64>> = freqs.into_iter().collect::<Result<_>>()?;
    let mut best: Option<(f64, f64)> = None;
    for b in 0..nb - 1 {
        let top = freqs.iter().map(|f| f[b]).fold(f64::MIN, f64::max);
        let bottom = freqs.iter().map(|f| f[b + 1]).fold(f64::MAX, f64::min);
        if bottom > top {
            let better = best.map_or(true, |(lo, hi)| bottom - top > hi - lo);
            if better {
                best = Some((top, bottom));
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_dispersion_exact() {
        let g = CrystalGeometry::homogeneous(3.5).unwrap();
        let s = PweSolver::new(&g, CellKind::Waveguide { pad: 0.5 }, 9).unwrap();
        let states = s.solve_k(0.25, 3).unwrap();
        assert!((states[0].omega - 0.25 / 3.5).abs() < 1e-12);
        let states = s.solve_k(0.5, 3).unwrap();
        assert!((states[0].omega - states[1].omega).abs() < 1e-12);
        assert!((states[0].omega - 0.5 / 3.5).abs() < 1e-12);
    }

    #[test]
    fn analytic_group_index_uniform() {
        let g = CrystalGeometry::homogeneous(2.0).unwrap();
        let s = PweSolver::new(&g, CellKind::Waveguide { pad: 0.5 }, 7).unwrap();
        let st = s.solve_k(0.2, 1).unwrap();
        assert!((st[0].n_g - 2.0).abs() < 1e-10);
    }

    #[test]
    fn time_reversal() {
        let g = crate::geometry::build_w1(1.0, 0.3, 3.5, 2, 5).unwrap();
        let s = PweSolver::new(&g, CellKind::Waveguide { pad: 0.5 }, 7).unwrap();
        let a = s.solve_k(0.3, 6).unwrap();
        let b = s.solve_k(-0.3, 6).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x.omega - y.omega).abs() < 1e-10);
        }
    }
}
