//! Sparse assembly helpers, a thin wrapper over faer's sparse LU, and a
//! shift-invert block eigensolver for Hermitian matrices.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Compressed-row matrix used for products; duplicates are summed.
#[derive(Clone, Debug)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<C64>,
}

impl Csr {
    pub fn from_triplets(n: usize, entries: &[(usize, usize, C64)]) -> Self {
        let mut sorted: Vec<(usize, usize, C64)> = entries.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(sorted.len());
        let mut vals: Vec<C64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (self.cols[k], self.vals[k]))
    }

    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        (0..self.n)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    pub fn mul_mat(&self, x: &Mat<C64>) -> Mat<C64> {
        let mut y = Mat::<C64>::zeros(self.n, x.ncols());
        for j in 0..x.ncols() {
            for r in 0..self.n {
                let mut acc = C64::new(0.0, 0.0);
                for (c, v) in self.row(r) {
                    acc += v * x[(c, j)];
                }
                y[(r, j)] = acc;
            }
        }
        y
    }

    pub fn to_faer(&self) -> Result<SparseColMat<usize, C64>> {
        let mut t = Vec::with_capacity(self.nnz());
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                t.push(Triplet::new(r, c, v));
            }
        }
        SparseColMat::try_new_from_triplets(self.n, self.n, &t).map_err(|e| Error::Solver {
            unknowns: self.n,
            detail: format!("{e:?}"),
        })
    }

    /// Largest |a_ij − a_ji*| relative to the largest entry.
    pub fn hermitian_defect(&self) -> f64 {
        self.symmetry_defect(true)
    }

    /// Largest |a_ij − a_ji| relative to the largest entry.
    pub fn symmetric_defect(&self) -> f64 {
        self.symmetry_defect(false)
    }

    fn symmetry_defect(&self, conjugate: bool) -> f64 {
        let scale = self.vals.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
        let mut worst = 0.0f64;
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                let t = self
                    .row(c)
                    .find(|&(cc, _)| cc == r)
                    .map(|(_, w)| w)
                    .unwrap_or_default();
                let t = if conjugate { t.conj() } else { t };
                worst = worst.max((v - t).norm());
            }
        }
        worst / scale
    }
}

/// Sparse LU factorization of a square complex matrix.
pub struct SparseLu {
    n: usize,
    lu: Lu<usize, C64>,
}

impl SparseLu {
    pub fn factor(a: &Csr) -> Result<Self> {
        let m = a.to_faer()?;
        let lu = m.sp_lu().map_err(|e| Error::Solver {
            unknowns: a.n,
            detail: format!("{e:?}"),
        })?;
        Ok(Self { n: a.n, lu })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let rhs = Mat::<C64>::from_fn(self.n, 1, |i, _| b[i]);
        let x = self.lu.solve(&rhs);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }

    pub fn solve_mat(&self, b: &Mat<C64>) -> Mat<C64> {
        self.lu.solve(b)
    }
}

pub fn norm2(x: &[C64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// Relative residual ‖Ax − b‖/‖b‖.
pub fn relative_residual(a: &Csr, x: &[C64], b: &[C64]) -> f64 {
    let ax = a.mul_vec(x);
    let r: Vec<C64> = ax.iter().zip(b).map(|(p, q)| p - q).collect();
    norm2(&r) / norm2(b).max(1e-300)
}

#[derive(Clone, Debug)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<C64>,
    pub residual: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct ShiftInvertOptions {
    pub shift: f64,
    pub nev: usize,
    pub extra: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ShiftInvertOptions {
    fn default() -> Self {
        Self {
            shift: 0.0,
            nev: 4,
            extra: 4,
            tol: 1e-11,
            max_iter: 300,
        }
    }
}

/// Eigenpairs of a Hermitian matrix closest to `opts.shift`, sorted by
/// eigenvalue. Residuals are absolute, ‖Av − λv‖ with ‖v‖ = 1.
pub fn shift_invert_eigs(a: &Csr, opts: ShiftInvertOptions) -> Result<Vec<EigenPair>> {
    let n = a.n;
    let nev = opts.nev.min(n);
    let b = (nev + opts.extra).min(n);
    let mut shifted: Vec<(usize, usize, C64)> = Vec::with_capacity(a.nnz() + n);
    for r in 0..n {
        for (c, v) in a.row(r) {
            shifted.push((r, c, v));
        }
        shifted.push((r, r, C64::new(-opts.shift, 0.0)));
    }
    let m = Csr::from_triplets(n, &shifted);
    let lu = SparseLu::factor(&m)?;

    let mut state = 0x9E37_79B9_7F4A_7C15u64;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let mut y = lu.solve_mat(&Mat::<C64>::from_fn(n, b, |_, _| C64::new(next(), next())));
    let mut last = Vec::new();
    for _ in 0..opts.max_iter {
        // Rayleigh-Ritz on (A − σ)⁻¹, pairs ranked by |μ|
        let q = y.qr().compute_thin_Q();
        let z = lu.solve_mat(&q);
        let g = q.adjoint() * &z;
        let g = Mat::<C64>::from_fn(b, b, |i, j| 0.5 * (g[(i, j)] + g[(j, i)].conj()));
        let eig = g.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Solver {
            unknowns: b,
            detail: format!("Rayleigh-Ritz: {e:?}"),
        })?;
        let mu: Vec<f64> = (0..b).map(|i| eig.S().column_vector()[i].re).collect();
        let v = eig.U().to_owned();
        let x = &q * &v;
        y = &z * &v;
        let ax = a.mul_mat(&x);
        let mut order: Vec<usize> = (0..b).collect();
        order.sort_by(|&i, &j| mu[j].abs().partial_cmp(&mu[i].abs()).unwrap());
        let mut pairs: Vec<EigenPair> = order[..nev]
            .iter()
            .map(|&i| {
                let vec: Vec<C64> = (0..n).map(|r| x[(r, i)]).collect();
                let theta: f64 = (0..n).map(|r| (vec[r].conj() * ax[(r, i)]).re).sum();
                let res = (0..n)
                    .map(|r| (ax[(r, i)] - theta * vec[r]).norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                EigenPair {
                    value: theta,
                    vector: vec,
                    residual: res,
                }
            })
            .collect();
        if pairs.iter().all(|p| p.residual <= opts.tol) {
            pairs.sort_by(|p, q| p.value.partial_cmp(&q.value).unwrap());
            return Ok(pairs);
        }
        last = pairs;
    }
    let worst = last.iter().map(|p| p.residual).fold(0.0, f64::max);
    Err(Error::EigenNonConvergence {
        k: f64::NAN,
        detail: format!(
            "shift-invert stalled after {} iterations, worst residual {worst:.3e}",
            opts.max_iter
        ),
    })
}
