//! The discrete frequency-domain system for TE fields (E_x, E_y, H_z) with a
//! time dependence e^{−iωt}:
//!
//! ∇×E = iωH,  ∇×H = −iωεE + J,
//!
//! with ∂_x → ∂_x/s_x and ∂_y → ∂_y/s_y inside the absorbing layers.
//!
//! Production solves eliminate the edges and keep H_z on nodes: each free
//! edge is written as E = α(H₊ − H₋) + β from Ampère's law and substituted
//! into Faraday's law at every node, which gives a complex-symmetric system
//! with five nonzeros per row. [`FdfdProblem::assemble`] builds the
//! equivalent curl-curl system for E on edges.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::fdfd::domain::{BoundaryMode, Domain, EdgeKind};
use crate::fdfd::pml::StretchProfile;
use crate::linalg::{relative_residual, Csr, SparseLu};
use crate::pwe::{edge_index, Orientation};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Point current element on one grid edge; `current` is the dipole moment
/// ∫J dA, spread over the dual cell of the edge.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dipole {
    pub position: (f64, f64),
    pub orientation: Orientation,
    pub current: C64,
}

impl Dipole {
    pub fn unit(position: (f64, f64), orientation: Orientation) -> Self {
        Self {
            position,
            orientation,
            current: C64::new(1.0, 0.0),
        }
    }

    pub fn edge(&self, resolution: usize) -> (i64, i64) {
        edge_index(resolution, self.position, self.orientation)
    }
}

/// Dirichlet E_y on the two termination planes, row `j` stored at `j + j_half`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryValues {
    pub omega: f64,
    pub plus: Vec<C64>,
    pub minus: Vec<C64>,
}

/// Fields on the staggered grid of a domain. Values outside the node box
/// are zero.
#[derive(Clone, Debug)]
pub struct FieldSolution {
    pub omega: f64,
    pub resolution: usize,
    pub i_lo: i64,
    pub i_hi: i64,
    pub j_lo: i64,
    pub j_hi: i64,
    pub pml_thickness: usize,
    /// E_x edges, index `(i − i_lo)·(nj − 1) + (j − j_lo)`.
    pub ex: Vec<C64>,
    /// E_y edges, index `(i − i_lo)·nj + (j − j_lo)`.
    pub ey: Vec<C64>,
    /// H_z nodes, index `(i − i_lo)·nj + (j − j_lo)`.
    pub hz: Vec<C64>,
    pub source: Dipole,
    /// Source edge in global indices.
    pub source_edge: (i64, i64),
    /// Relative residual of the solved linear system.
    pub residual: f64,
}

impl FieldSolution {
    fn nj(&self) -> usize {
        (self.j_hi - self.j_lo + 1) as usize
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.resolution as f64
    }

    pub fn ex(&self, i: i64, j: i64) -> C64 {
        if i < self.i_lo || i > self.i_hi || j < self.j_lo || j >= self.j_hi {
            return C64::new(0.0, 0.0);
        }
        self.ex[(i - self.i_lo) as usize * (self.nj() - 1) + (j - self.j_lo) as usize]
    }

    pub fn ey(&self, i: i64, j: i64) -> C64 {
        if i < self.i_lo || i >= self.i_hi || j < self.j_lo || j > self.j_hi {
            return C64::new(0.0, 0.0);
        }
        self.ey[(i - self.i_lo) as usize * self.nj() + (j - self.j_lo) as usize]
    }

    pub fn hz(&self, i: i64, j: i64) -> C64 {
        if i < self.i_lo || i > self.i_hi || j < self.j_lo || j > self.j_hi {
            return C64::new(0.0, 0.0);
        }
        self.hz[(i - self.i_lo) as usize * self.nj() + (j - self.j_lo) as usize]
    }

    /// Field component along the source orientation at the source edge.
    pub fn source_field(&self) -> C64 {
        let (i, j) = self.source_edge;
        match self.source.orientation {
            Orientation::X => self.ex(i, j),
            Orientation::Y => self.ey(i, j),
        }
    }

    /// Time-averaged power delivered by the source, −½Re(E·I*).
    pub fn source_power(&self) -> f64 {
        -0.5 * (self.source_field() * self.source.current.conj()).re
    }

    /// |E| at cell centres with edges averaged: `(nx, ny, values)`, rows
    /// ordered from the top (largest y) down.
    pub fn e_magnitude(&self) -> (usize, usize, Vec<f64>) {
        let nx = (self.i_hi - self.i_lo) as usize;
        let ny = (self.j_hi - self.j_lo) as usize;
        let mut out = Vec::with_capacity(nx * ny);
        for j in (0..ny).rev() {
            for i in 0..nx {
                let (ig, jg) = (self.i_lo + i as i64, self.j_lo + j as i64);
                let ex = 0.5 * (self.ex(ig, jg) + self.ex(ig + 1, jg));
                let ey = 0.5 * (self.ey(ig, jg) + self.ey(ig, jg + 1));
                out.push((ex.norm_sqr() + ey.norm_sqr()).sqrt());
            }
        }
        (nx, ny, out)
    }

    /// Time-reversed fields (E*, −H*), which carry the opposite flux.
    pub fn time_reversed(&self) -> Self {
        let mut s = self.clone();
        for v in s.ex.iter_mut().chain(s.ey.iter_mut()) {
            *v = v.conj();
        }
        for v in s.hz.iter_mut() {
            *v = -v.conj();
        }
        s
    }

    /// Fields scaled by a complex factor, as from a source of scaled strength.
    pub fn scaled(&self, c: C64) -> Self {
        let mut s = self.clone();
        for v in s.ex.iter_mut().chain(s.ey.iter_mut()).chain(s.hz.iter_mut()) {
            *v *= c;
        }
        s.source.current *= c;
        s
    }
}

/// One of the four edges around a node, with its coefficient in the
/// node's Faraday equation `Σ c·E − iωΔ s_x s_y H_z = 0`.
#[derive(Clone, Copy, Debug)]
struct NodeEdge {
    o: Orientation,
    i: i64,
    j: i64,
    c: C64,
    lo: (i64, i64),
    hi: (i64, i64),
}

/// Factorized node-form operator of one domain at one frequency; reused for
/// every source position and boundary data set.
pub struct FdfdOperator {
    pub domain: Domain,
    /// Frequency in units of c/a (a/λ).
    pub omega: f64,
    w: f64,
    sx: StretchProfile,
    sy: StretchProfile,
    node_id: Vec<usize>,
    matrix: Csr,
    lu: Option<SparseLu>,
}

impl FdfdOperator {
    /// Assembles and factorizes.
    pub fn new(domain: &Domain, omega: f64) -> Result<Self> {
        let mut op = Self::unfactored(domain, omega)?;
        op.lu = Some(SparseLu::factor(&op.matrix).map_err(|e| Error::Solver {
            unknowns: op.matrix.n,
            detail: e.to_string(),
        })?);
        Ok(op)
    }

    /// Assembles without factorizing; [`FdfdOperator::solve`] is unavailable.
    pub fn unfactored(domain: &Domain, omega: f64) -> Result<Self> {
        if !(omega > 0.0) || !omega.is_finite() {
            return Err(Error::InvalidInput(format!("frequency must be positive, got {omega}")));
        }
        let w = TWO_PI * omega;
        let h = domain.dx();
        let sx = StretchProfile::new(&domain.pml, domain.ni() - 1, h, w, domain.pml_index.0);
        let sy = StretchProfile::new(&domain.pml, domain.nj() - 1, h, w, domain.pml_index.1);
        let mut op = Self {
            domain: domain.clone(),
            omega,
            w,
            sx,
            sy,
            node_id: Vec::new(),
            matrix: Csr::from_triplets(0, &[]),
            lu: None,
        };
        op.number_nodes();
        op.matrix = op.build_matrix();
        Ok(op)
    }

    pub fn unknowns(&self) -> usize {
        self.matrix.n
    }

    pub fn matrix(&self) -> &Csr {
        &self.matrix
    }

    fn local(&self, i: i64, j: i64) -> usize {
        (i - self.domain.i_lo) as usize * self.domain.nj() + (j - self.domain.j_lo) as usize
    }

    fn sx_node(&self, i: i64) -> C64 {
        self.sx.nodes[(i - self.domain.i_lo) as usize]
    }

    fn sy_node(&self, j: i64) -> C64 {
        self.sy.nodes[(j - self.domain.j_lo) as usize]
    }

    fn sx_half(&self, i: i64) -> C64 {
        self.sx.halves[(i - self.domain.i_lo) as usize]
    }

    fn sy_half(&self, j: i64) -> C64 {
        self.sy.halves[(j - self.domain.j_lo) as usize]
    }

    fn node_edges(&self, i: i64, j: i64) -> [NodeEdge; 4] {
        let sxn = self.sx_node(i);
        let syn = self.sy_node(j);
        [
            NodeEdge { o: Orientation::Y, i, j, c: syn, lo: (i, j), hi: (i + 1, j) },
            NodeEdge { o: Orientation::Y, i: i - 1, j, c: -syn, lo: (i - 1, j), hi: (i, j) },
            NodeEdge { o: Orientation::X, i, j, c: -sxn, lo: (i, j), hi: (i, j + 1) },
            NodeEdge { o: Orientation::X, i, j: j - 1, c: sxn, lo: (i, j - 1), hi: (i, j) },
        ]
    }

    /// iωΔ·α of a free edge, E = α(H₊ − H₋) + β.
    fn gamma(&self, o: Orientation, i: i64, j: i64) -> C64 {
        match o {
            Orientation::Y => 1.0 / (self.domain.eps_ey(i, j) * self.sx_half(i)),
            Orientation::X => -1.0 / (self.domain.eps_ex(i, j) * self.sy_half(j)),
        }
    }

    fn eps_edge(&self, o: Orientation, i: i64, j: i64) -> f64 {
        match o {
            Orientation::Y => self.domain.eps_ey(i, j),
            Orientation::X => self.domain.eps_ex(i, j),
        }
    }

    fn number_nodes(&mut self) {
        let d = &self.domain;
        let mut ids = vec![usize::MAX; d.ni() * d.nj()];
        let mut next = 0;
        for i in d.i_lo..=d.i_hi {
            for j in d.j_lo..=d.j_hi {
                let free = self
                    .node_edges(i, j)
                    .iter()
                    .any(|e| d.edge_kind(e.o, e.i, e.j) == EdgeKind::Free);
                if free {
                    ids[self.local(i, j)] = next;
                    next += 1;
                }
            }
        }
        self.node_id = ids;
    }

    fn id(&self, n: (i64, i64)) -> usize {
        self.node_id[self.local(n.0, n.1)]
    }

    fn build_matrix(&self) -> Csr {
        let d = &self.domain;
        let h = d.dx();
        let n = self.node_id.iter().filter(|&&v| v != usize::MAX).count();
        let mut t = Vec::with_capacity(5 * n);
        for i in d.i_lo..=d.i_hi {
            for j in d.j_lo..=d.j_hi {
                let r = self.id((i, j));
                if r == usize::MAX {
                    continue;
                }
                let diag = (self.w * h).powi(2) * self.sx_node(i) * self.sy_node(j);
                t.push((r, r, diag));
                for e in self.node_edges(i, j) {
                    if d.edge_kind(e.o, e.i, e.j) != EdgeKind::Free {
                        continue;
                    }
                    let g = e.c * self.gamma(e.o, e.i, e.j);
                    t.push((r, self.id(e.hi), g));
                    t.push((r, self.id(e.lo), -g));
                }
            }
        }
        Csr::from_triplets(n, &t)
    }

    fn driven_value(&self, values: Option<&BoundaryValues>, i: i64, j: i64) -> C64 {
        let (Some(v), Some(p)) = (values, self.domain.planes) else {
            return C64::new(0.0, 0.0);
        };
        let row = (j + p.j_half) as usize;
        if i == p.i_plus {
            v.plus[row]
        } else {
            v.minus[row]
        }
    }

    /// Solves for one source and one set of Dirichlet data.
    pub fn solve(&self, source: &Dipole, values: Option<&BoundaryValues>) -> Result<FieldSolution> {
        let lu = self
            .lu
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("operator was not factorized".into()))?;
        let d = &self.domain;
        let h = d.dx();
        let iw = C64::new(0.0, self.w);
        let (si, sj) = source.edge(d.resolution);
        if d.edge_kind(source.orientation, si, sj) != EdgeKind::Free {
            return Err(Error::InvalidInput(format!(
                "source edge {:?} at {:?} is not a free edge of the domain",
                (si, sj),
                source.position
            )));
        }
        if !d.is_physical(si - 1, si + 1, sj - 1, sj + 1) {
            return Err(Error::InvalidInput("source lies inside an absorbing layer".into()));
        }
        if let Some(p) = d.planes {
            let v = values.ok_or_else(|| {
                Error::InvalidInput("domain has driven planes but no boundary values".into())
            })?;
            if v.plus.len() != p.rows() || v.minus.len() != p.rows() {
                return Err(Error::InvalidInput(format!(
                    "boundary data has {} / {} rows, planes need {}",
                    v.plus.len(),
                    v.minus.len(),
                    p.rows()
                )));
            }
            if (v.omega - self.omega).abs() > 1e-10 {
                return Err(Error::InvalidInput(format!(
                    "boundary data at ω = {} for an operator at ω = {}",
                    v.omega, self.omega
                )));
            }
        }
        let j_src = source.current / (h * h);
        let beta = |o: Orientation, i: i64, j: i64| -> C64 {
            if o == source.orientation && i == si && j == sj {
                -C64::new(0.0, 1.0) * j_src / (self.w * self.eps_edge(o, i, j))
            } else {
                C64::new(0.0, 0.0)
            }
        };

        let mut rhs = vec![C64::new(0.0, 0.0); self.matrix.n];
        let touch = |i: i64, j: i64, rhs: &mut Vec<C64>| {
            if !d.contains_node(i, j) {
                return;
            }
            let r = self.id((i, j));
            if r == usize::MAX {
                return;
            }
            for e in self.node_edges(i, j) {
                match d.edge_kind(e.o, e.i, e.j) {
                    EdgeKind::Free => rhs[r] -= e.c * iw * h * beta(e.o, e.i, e.j),
                    EdgeKind::Driven => rhs[r] -= e.c * iw * h * self.driven_value(values, e.i, e.j),
                    EdgeKind::Zero => {}
                }
            }
        };
        let mut rows = vec![];
        match source.orientation {
            Orientation::Y => rows.extend([(si, sj), (si + 1, sj)]),
            Orientation::X => rows.extend([(si, sj), (si, sj + 1)]),
        }
        if let Some(p) = d.planes {
            for j in -p.j_half..=p.j_half {
                rows.extend([(p.i_plus, j), (p.i_plus + 1, j), (p.i_minus, j), (p.i_minus + 1, j)]);
            }
        }
        rows.sort();
        rows.dedup();
        for (i, j) in rows {
            touch(i, j, &mut rhs);
        }

        let x = lu.solve(&rhs);
        let residual = relative_residual(&self.matrix, &x, &rhs);

        let (ni, nj) = (d.ni(), d.nj());
        let mut hz = vec![C64::new(0.0, 0.0); ni * nj];
        for (loc, &id) in self.node_id.iter().enumerate() {
            if id != usize::MAX {
                hz[loc] = x[id];
            }
        }
        let hz_at = |n: (i64, i64)| hz[self.local(n.0, n.1)];
        let edge_value = |o: Orientation, i: i64, j: i64, lo: (i64, i64), hi: (i64, i64)| -> C64 {
            match d.edge_kind(o, i, j) {
                EdgeKind::Free => {
                    self.gamma(o, i, j) / (iw * h) * (hz_at(hi) - hz_at(lo)) + beta(o, i, j)
                }
                EdgeKind::Driven => self.driven_value(values, i, j),
                EdgeKind::Zero => C64::new(0.0, 0.0),
            }
        };
        let mut ey = vec![C64::new(0.0, 0.0); (ni - 1) * nj];
        for i in d.i_lo..d.i_hi {
            for j in d.j_lo..=d.j_hi {
                ey[(i - d.i_lo) as usize * nj + (j - d.j_lo) as usize] =
                    edge_value(Orientation::Y, i, j, (i, j), (i + 1, j));
            }
        }
        let mut ex = vec![C64::new(0.0, 0.0); ni * (nj - 1)];
        for i in d.i_lo..=d.i_hi {
            for j in d.j_lo..d.j_hi {
                ex[(i - d.i_lo) as usize * (nj - 1) + (j - d.j_lo) as usize] =
                    edge_value(Orientation::X, i, j, (i, j), (i, j + 1));
            }
        }
        let mut sol = FieldSolution {
            omega: self.omega,
            resolution: d.resolution,
            i_lo: d.i_lo,
            i_hi: d.i_hi,
            j_lo: d.j_lo,
            j_hi: d.j_hi,
            pml_thickness: d.pml.thickness,
            ex,
            ey,
            hz,
            source: *source,
            source_edge: (si, sj),
            residual,
        };
        // H_z on eliminated nodes from Faraday's law
        for i in d.i_lo..=d.i_hi {
            for j in d.j_lo..=d.j_hi {
                if self.id((i, j)) != usize::MAX {
                    continue;
                }
                let mut acc = C64::new(0.0, 0.0);
                for e in self.node_edges(i, j) {
                    let v = match e.o {
                        Orientation::X => sol.ex(e.i, e.j),
                        Orientation::Y => sol.ey(e.i, e.j),
                    };
                    acc += e.c * v;
                }
                let loc = self.local(i, j);
                sol.hz[loc] = acc / (iw * h * self.sx_node(i) * self.sy_node(j));
            }
        }
        Ok(sol)
    }

    /// Curl-curl system for E on every free edge:
    /// `ω² ε s_x s_y E + R·C·E = −iω s_x s_y J`, with C the discrete curl
    /// giving iωH_z on nodes and R its adjoint-like partner from Ampère's law.
    pub fn assemble_edges(
        &self,
        source: &Dipole,
        values: Option<&BoundaryValues>,
    ) -> Result<LinearSystem> {
        let d = &self.domain;
        let h = d.dx();
        let mut edges: Vec<(Orientation, i64, i64)> = Vec::new();
        for i in d.i_lo..d.i_hi {
            for j in d.j_lo..=d.j_hi {
                if d.ey_kind(i, j) == EdgeKind::Free {
                    edges.push((Orientation::Y, i, j));
                }
            }
        }
        for i in d.i_lo..=d.i_hi {
            for j in d.j_lo..d.j_hi {
                if d.ex_kind(i, j) == EdgeKind::Free {
                    edges.push((Orientation::X, i, j));
                }
            }
        }
        let index: std::collections::HashMap<(Orientation, i64, i64), usize> =
            edges.iter().enumerate().map(|(k, &e)| (e, k)).collect();
        let (si, sj) = source.edge(d.resolution);
        let j_src = source.current / (h * h);
        let mut t = Vec::with_capacity(7 * edges.len());
        let mut rhs = vec![C64::new(0.0, 0.0); edges.len()];
        for (r, &(o, i, j)) in edges.iter().enumerate() {
            let (sxe, sye, nodes) = match o {
                Orientation::Y => (self.sx_half(i), self.sy_node(j), [(i, j), (i + 1, j)]),
                Orientation::X => (self.sx_node(i), self.sy_half(j), [(i, j), (i, j + 1)]),
            };
            let eps = self.eps_edge(o, i, j);
            t.push((r, r, self.w * self.w * eps * sxe * sye));
            if o == source.orientation && i == si && j == sj {
                rhs[r] -= C64::new(0.0, self.w) * sxe * sye * j_src;
            }
            for (k, n) in nodes.iter().enumerate() {
                let sigma = if k == 0 { 1.0 } else { -1.0 };
                let r_en = match o {
                    Orientation::Y => -sigma * sye / h,
                    Orientation::X => sigma * sxe / h,
                };
                let (sxn, syn) = (self.sx_node(n.0), self.sy_node(n.1));
                for e in self.node_edges(n.0, n.1) {
                    let c_ne = e.c / (h * sxn * syn);
                    match d.edge_kind(e.o, e.i, e.j) {
                        EdgeKind::Free => t.push((r, index[&(e.o, e.i, e.j)], r_en * c_ne)),
                        EdgeKind::Driven => rhs[r] -= r_en * c_ne * self.driven_value(values, e.i, e.j),
                        EdgeKind::Zero => {}
                    }
                }
            }
        }
        Ok(LinearSystem {
            matrix: Csr::from_triplets(edges.len(), &t),
            rhs,
            edges,
        })
    }
}

/// Edge-unknown linear system `A x = b`.
#[derive(Clone, Debug)]
pub struct LinearSystem {
    pub matrix: Csr,
    pub rhs: Vec<C64>,
    /// Unknown k is the field on `edges[k]`.
    pub edges: Vec<(Orientation, i64, i64)>,
}

/// One dipole solve: domain, frequency, source and boundary treatment.
#[derive(Clone, Debug)]
pub struct FdfdProblem {
    pub domain: Domain,
    pub omega: f64,
    pub source: Dipole,
    pub boundary_mode: BoundaryMode,
    pub active_bc: Option<BoundaryValues>,
}

impl FdfdProblem {
    pub fn validate(&self) -> Result<()> {
        match (self.boundary_mode, self.domain.planes.is_some(), &self.active_bc) {
            (BoundaryMode::Active, true, Some(v)) => {
                if (v.omega - self.omega).abs() > 1e-10 {
                    return Err(Error::InvalidInput(format!(
                        "active boundary data at ω = {} differs from problem ω = {}",
                        v.omega, self.omega
                    )));
                }
                Ok(())
            }
            (BoundaryMode::Active, _, _) => Err(Error::InvalidInput(
                "active boundary mode needs termination planes and boundary data".into(),
            )),
            (BoundaryMode::PmlOnly, false, _) => Ok(()),
            (BoundaryMode::PmlOnly, true, _) => Err(Error::InvalidInput(
                "pml_only problem on a domain with termination planes".into(),
            )),
        }
    }

    /// Edge-form sparse system with the dipole right-hand side.
    pub fn assemble(&self) -> Result<LinearSystem> {
        self.validate()?;
        let op = FdfdOperator::unfactored(&self.domain, self.omega)?;
        op.assemble_edges(&self.source, self.active_bc.as_ref())
    }

    pub fn solve(&self) -> Result<FieldSolution> {
        self.validate()?;
        let op = FdfdOperator::new(&self.domain, self.omega)?;
        op.solve(&self.source, self.active_bc.as_ref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdfd::domain::TerminationPlanes;
    use crate::fdfd::pml::PmlSpec;
    use crate::geometry::{build_w1, CrystalGeometry};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_crystal() -> CrystalGeometry {
        build_w1(1.0, 0.3, 3.0, 1, 3).unwrap()
    }

    fn pml(t: usize) -> PmlSpec {
        PmlSpec { thickness: t, ..PmlSpec::default() }
    }

    #[test]
    fn plane_wave_satisfies_interior_stencil() {
        let n = 1.7;
        let res = 10;
        let h = 0.1;
        let (kx, ky) = (2.1, -0.8);
        let s2 = (0.5 * kx * h as f64).sin().powi(2) + (0.5 * ky * h as f64).sin().powi(2);
        let w = 2.0 * s2.sqrt() / (h * n);
        let d = Domain::homogeneous(n, res, (Orientation::Y, 0, 0), 8, PmlSpec::none()).unwrap();
        let op = FdfdOperator::unfactored(&d, w / TWO_PI).unwrap();
        let mut x = vec![C64::new(0.0, 0.0); op.unknowns()];
        for i in d.i_lo..=d.i_hi {
            for j in d.j_lo..=d.j_hi {
                let id = op.id((i, j));
                if id != usize::MAX {
                    x[id] = C64::from_polar(1.0, kx * i as f64 * h + ky * j as f64 * h);
                }
            }
        }
        let y = op.matrix().mul_vec(&x);
        for i in d.i_lo + 1..d.i_hi {
            for j in d.j_lo + 1..d.j_hi {
                assert!(y[op.id((i, j))].norm() < 1e-13, "row ({i},{j}): {}", y[op.id((i, j))]);
            }
        }
    }

    #[test]
    fn no_absorber_gives_real_unstretched_operator() {
        let d = Domain::from_nodes(&small_crystal(), 8, (-12, 12, -10, 10), PmlSpec::none(), (1.0, 1.0), None)
            .unwrap();
        let op = FdfdOperator::unfactored(&d, 0.3).unwrap();
        let w = TWO_PI * 0.3 * d.dx();
        for i in d.i_lo + 1..d.i_hi {
            for j in d.j_lo + 1..d.j_hi {
                let r = op.id((i, j));
                let mut sum = C64::new(0.0, 0.0);
                for (_, v) in op.matrix().row(r) {
                    assert_eq!(v.im, 0.0);
                    sum += v;
                }
                assert!((sum.re - w * w).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sparsity_and_symmetry() {
        let d = Domain::from_nodes(&small_crystal(), 8, (-20, 20, -16, 16), pml(6), (3.0, 1.0), None).unwrap();
        let op = FdfdOperator::unfactored(&d, 0.27).unwrap();
        let a = op.matrix();
        assert!((0..a.n).all(|r| a.row(r).count() <= 5));
        assert!(a.symmetric_defect() < 1e-14);
        let sys = op.assemble_edges(&Dipole::unit((0.1, 0.0), Orientation::Y), None).unwrap();
        assert!((0..sys.matrix.n).all(|r| sys.matrix.row(r).count() <= 9));
    }

    #[test]
    fn singular_frequency_rejected() {
        let d = Domain::homogeneous(1.5, 8, (Orientation::Y, 0, 0), 6, pml(4)).unwrap();
        assert!(FdfdOperator::new(&d, 0.0).is_err());
        assert!(FdfdOperator::new(&d, f64::NAN).is_err());
    }

    fn compare_forms(d: &Domain, omega: f64, dipole: &Dipole, values: Option<&BoundaryValues>) {
        let op = FdfdOperator::new(d, omega).unwrap();
        let sol = op.solve(dipole, values).unwrap();
        assert!(sol.residual < 1e-10);
        let sys = op.assemble_edges(dipole, values).unwrap();
        let lu = SparseLu::factor(&sys.matrix).unwrap();
        let e = lu.solve(&sys.rhs);
        let scale = crate::linalg::norm2(&e);
        let mut diff = 0.0f64;
        for (k, &(o, i, j)) in sys.edges.iter().enumerate() {
            let v = match o {
                Orientation::X => sol.ex(i, j),
                Orientation::Y => sol.ey(i, j),
            };
            diff = diff.max((v - e[k]).norm());
        }
        assert!(diff < 1e-9 * scale, "edge and node forms differ by {diff} (scale {scale})");
    }

    #[test]
    fn edge_form_matches_node_form() {
        let g = small_crystal();
        let d = Domain::from_nodes(&g, 8, (-20, 20, -16, 16), pml(6), (3.0, 1.0), None).unwrap();
        compare_forms(&d, 0.27, &Dipole::unit((0.13, 0.05), Orientation::Y), None);
        compare_forms(&d, 0.27, &Dipole::unit((-0.4, 0.3), Orientation::X), None);
    }

    #[test]
    fn edge_form_matches_node_form_with_driven_planes() {
        let g = small_crystal();
        let planes = TerminationPlanes { i_plus: 11, i_minus: -12, j_half: 9 };
        let d = Domain::from_nodes(&g, 8, (-20, 20, -16, 16), pml(6), (1.0, 1.0), Some(planes)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut draw = || C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let values = BoundaryValues {
            omega: 0.27,
            plus: (0..planes.rows()).map(|_| draw()).collect(),
            minus: (0..planes.rows()).map(|_| draw()).collect(),
        };
        compare_forms(&d, 0.27, &Dipole::unit((0.13, 0.05), Orientation::Y), Some(&values));
    }

    #[test]
    fn reciprocity_between_orientations() {
        let g = small_crystal();
        let d = Domain::from_nodes(&g, 8, (-20, 20, -16, 16), pml(6), (3.0, 1.0), None).unwrap();
        let op = FdfdOperator::new(&d, 0.27).unwrap();
        let p = Dipole::unit((0.13, 0.05), Orientation::Y);
        let q = Dipole::unit((-0.6, 0.45), Orientation::X);
        let sp = op.solve(&p, None).unwrap();
        let sq = op.solve(&q, None).unwrap();
        let (qi, qj) = q.edge(8);
        let (pi, pj) = p.edge(8);
        let a = sp.ex(qi, qj);
        let b = sq.ey(pi, pj);
        assert!((a - b).norm() < 1e-9 * a.norm(), "{a} vs {b}");
    }

    #[test]
    fn doubling_the_current_quadruples_the_power() {
        let d = Domain::homogeneous(2.0, 8, (Orientation::Y, 0, 0), 10, pml(8)).unwrap();
        let op = FdfdOperator::new(&d, 0.3).unwrap();
        let mut dip = Dipole::unit((0.01, 0.01), Orientation::Y);
        let p1 = op.solve(&dip, None).unwrap().source_power();
        dip.current *= 2.0;
        let p2 = op.solve(&dip, None).unwrap().source_power();
        assert!((p2 / p1 - 4.0).abs() < 1e-12);
    }

    #[test]
    fn source_edge_must_be_free_and_physical() {
        let d = Domain::homogeneous(1.5, 8, (Orientation::Y, 0, 0), 6, pml(4)).unwrap();
        let op = FdfdOperator::new(&d, 0.3).unwrap();
        assert!(op.solve(&Dipole::unit((1.4, 0.0), Orientation::Y), None).is_err());
        assert!(op.solve(&Dipole::unit((9.0, 0.0), Orientation::Y), None).is_err());
    }

    #[test]
    fn mismatched_boundary_frequency_rejected() {
        let g = small_crystal();
        let planes = TerminationPlanes { i_plus: 11, i_minus: -12, j_half: 9 };
        let d = Domain::from_nodes(&g, 8, (-20, 20, -16, 16), pml(6), (1.0, 1.0), Some(planes)).unwrap();
        let op = FdfdOperator::new(&d, 0.27).unwrap();
        let zeros = vec![C64::new(0.0, 0.0); planes.rows()];
        let v = BoundaryValues { omega: 0.2700001, plus: zeros.clone(), minus: zeros.clone() };
        let dip = Dipole::unit((0.13, 0.05), Orientation::Y);
        assert!(op.solve(&dip, Some(&v)).is_err());
        assert!(op.solve(&dip, None).is_err());
        let ok = BoundaryValues { omega: 0.27, plus: zeros.clone(), minus: zeros };
        assert!(op.solve(&dip, Some(&ok)).is_ok());
    }

    #[test]
    fn problem_validation() {
        let d = Domain::homogeneous(1.5, 8, (Orientation::Y, 0, 0), 6, pml(4)).unwrap();
        let mut p = FdfdProblem {
            domain: d,
            omega: 0.3,
            source: Dipole::unit((0.01, 0.01), Orientation::Y),
            boundary_mode: BoundaryMode::Active,
            active_bc: None,
        };
        assert!(p.validate().is_err());
        p.boundary_mode = BoundaryMode::PmlOnly;
        assert!(p.solve().unwrap().residual < 1e-10);
        assert!(p.assemble().unwrap().matrix.n > 0);
    }
}
