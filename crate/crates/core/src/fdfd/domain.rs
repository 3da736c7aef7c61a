//! Computational domains: the node box, its permittivity, absorbing layers
//! and the edges whose field is fixed.
//!
//! Global indices: node (i, j) sits at (iΔ, jΔ), the E_x edge (i, j) at
//! (iΔ, (j+1/2)Δ) and the E_y edge (i, j) at ((i+1/2)Δ, jΔ). Edges leaving the
//! node box are perfect conductors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdfd::pml::PmlSpec;
use crate::geometry::{rasterize, CrystalGeometry, RasterGrid};
use crate::pwe::Orientation;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryMode {
    Active,
    PmlOnly,
}

impl BoundaryMode {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryMode::Active => "active",
            BoundaryMode::PmlOnly => "pml_only",
        }
    }
}

impl std::str::FromStr for BoundaryMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "active" => Ok(BoundaryMode::Active),
            "pml_only" => Ok(BoundaryMode::PmlOnly),
            other => Err(Error::Config(format!("unknown boundary mode '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeKind {
    Free,
    /// Perfect conductor: the tangential field is zero.
    Zero,
    /// Dirichlet data supplied with each solve.
    Driven,
}

/// Waveguide terminations carrying Dirichlet E_y.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TerminationPlanes {
    /// E_y column of the right plane, at x = (i_plus + 1/2)Δ.
    pub i_plus: i64,
    /// E_y column of the left plane.
    pub i_minus: i64,
    /// Rows |j| ≤ j_half are driven; the slab beyond each plane is a conductor.
    pub j_half: i64,
}

impl TerminationPlanes {
    pub fn rows(&self) -> usize {
        (2 * self.j_half + 1) as usize
    }
}

#[derive(Clone, Debug)]
pub struct Domain {
    pub resolution: usize,
    pub i_lo: i64,
    pub i_hi: i64,
    pub j_lo: i64,
    pub j_hi: i64,
    /// Permittivity over the node box (cells `i_lo..i_hi`, `j_lo..j_hi`).
    pub eps: RasterGrid,
    pub pml: PmlSpec,
    /// Index used for σ_max of the x and y layers.
    pub pml_index: (f64, f64),
    pub planes: Option<TerminationPlanes>,
}

impl Domain {
    /// Node box `[i_lo, i_hi] × [j_lo, j_hi]` whose outer `pml.thickness`
    /// cells on every side absorb.
    pub fn from_nodes(
        geometry: &CrystalGeometry,
        resolution: usize,
        nodes: (i64, i64, i64, i64),
        pml: PmlSpec,
        pml_index: (f64, f64),
        planes: Option<TerminationPlanes>,
    ) -> Result<Self> {
        let (i_lo, i_hi, j_lo, j_hi) = nodes;
        let t = pml.thickness as i64;
        if i_hi - i_lo < 2 * t + 2 || j_hi - j_lo < 2 * t + 2 {
            return Err(Error::InvalidInput(format!(
                "node box {nodes:?} leaves no room inside {t}-cell absorbing layers"
            )));
        }
        let h = 1.0 / resolution as f64;
        let extent = (i_lo as f64 * h, i_hi as f64 * h, j_lo as f64 * h, j_hi as f64 * h);
        let eps = rasterize(geometry, resolution, extent)?;
        debug_assert_eq!((eps.i0, eps.j0), (i_lo, j_lo));
        Ok(Self {
            resolution,
            i_lo,
            i_hi,
            j_lo,
            j_hi,
            eps,
            pml,
            pml_index,
            planes,
        })
    }

    /// Uniform medium of index `n` centred on a source edge so that x- and
    /// y-oriented sources see mirror-image boxes. `half_cells` counts the
    /// physical cells between the source and the absorbing layer.
    pub fn homogeneous(
        n: f64,
        resolution: usize,
        edge: (Orientation, i64, i64),
        half_cells: i64,
        pml: PmlSpec,
    ) -> Result<Self> {
        let geometry = CrystalGeometry::homogeneous(n)?;
        let t = pml.thickness as i64;
        let (o, ig, j) = edge;
        let hw = half_cells + t;
        let nodes = match o {
            Orientation::Y => (ig - hw + 1, ig + hw, j - hw, j + hw),
            Orientation::X => (ig - hw, ig + hw, j - hw + 1, j + hw),
        };
        Self::from_nodes(&geometry, resolution, nodes, pml, (n, n), None)
    }

    /// The finite waveguide of `geometry.periods` periods centred on x = 0 with
    /// `pad_y` of cladding beyond the slab. In active mode the slab ends in
    /// driven planes half a period inside the outermost cells; otherwise the
    /// crystal runs into the absorbing layers.
    pub fn waveguide(
        geometry: &CrystalGeometry,
        resolution: usize,
        pml: PmlSpec,
        mode: BoundaryMode,
        pad_y: f64,
    ) -> Result<Self> {
        Self::waveguide_with(geometry, resolution, pml, mode, pad_y, 0.0)
    }

    /// As [`Domain::waveguide`], with the driven planes and the conductor
    /// behind them reaching `plane_pad` into the cladding.
    pub fn waveguide_with(
        geometry: &CrystalGeometry,
        resolution: usize,
        pml: PmlSpec,
        mode: BoundaryMode,
        pad_y: f64,
        plane_pad: f64,
    ) -> Result<Self> {
        if !(plane_pad >= 0.0 && plane_pad < pad_y) {
            return Err(Error::InvalidInput(format!(
                "plane extension {plane_pad} must lie in [0, {pad_y})"
            )));
        }
        let w = geometry.half_width();
        if !w.is_finite() {
            return Err(Error::InvalidInput("waveguide domain needs a finite slab".into()));
        }
        let res = resolution as f64;
        let l = geometry.length();
        let t = pml.thickness as i64;
        let ix = (0.5 * l * res).round() as i64;
        let jy = ((w + pad_y) * res).ceil() as i64;
        let nodes = (-ix - t, ix + t, -jy - t, jy + t);
        let (planes, index_x) = match mode {
            BoundaryMode::Active => {
                let half = (0.5 * (l - 1.0) * res).round() as i64;
                let planes = TerminationPlanes {
                    i_plus: half - 1,
                    i_minus: -half,
                    j_half: ((w + plane_pad) * res + 1e-9).floor() as i64,
                };
                (Some(planes), geometry.cladding_index)
            }
            BoundaryMode::PmlOnly => (None, geometry.index),
        };
        Self::from_nodes(
            geometry,
            resolution,
            nodes,
            pml,
            (index_x, geometry.cladding_index),
            planes,
        )
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.resolution as f64
    }

    /// Nodes along x and y.
    pub fn ni(&self) -> usize {
        (self.i_hi - self.i_lo + 1) as usize
    }

    pub fn nj(&self) -> usize {
        (self.j_hi - self.j_lo + 1) as usize
    }

    pub fn contains_node(&self, i: i64, j: i64) -> bool {
        i >= self.i_lo && i <= self.i_hi && j >= self.j_lo && j <= self.j_hi
    }

    /// Node index range outside the absorbing layers, inclusive.
    pub fn physical_nodes(&self) -> (i64, i64, i64, i64) {
        let t = self.pml.thickness as i64;
        (self.i_lo + t, self.i_hi - t, self.j_lo + t, self.j_hi - t)
    }

    pub fn ey_kind(&self, i: i64, j: i64) -> EdgeKind {
        if i < self.i_lo || i >= self.i_hi || j < self.j_lo || j > self.j_hi {
            return EdgeKind::Zero;
        }
        if let Some(p) = self.planes {
            if j.abs() <= p.j_half {
                if i == p.i_plus || i == p.i_minus {
                    return EdgeKind::Driven;
                }
                if i > p.i_plus || i < p.i_minus {
                    return EdgeKind::Zero;
                }
            }
        }
        EdgeKind::Free
    }

    pub fn ex_kind(&self, i: i64, j: i64) -> EdgeKind {
        if i < self.i_lo || i > self.i_hi || j < self.j_lo || j >= self.j_hi {
            return EdgeKind::Zero;
        }
        if let Some(p) = self.planes {
            if (i > p.i_plus || i <= p.i_minus) && j >= -p.j_half - 1 && j <= p.j_half {
                return EdgeKind::Zero;
            }
        }
        EdgeKind::Free
    }

    pub fn edge_kind(&self, o: Orientation, i: i64, j: i64) -> EdgeKind {
        match o {
            Orientation::X => self.ex_kind(i, j),
            Orientation::Y => self.ey_kind(i, j),
        }
    }

    /// ε at an E_x edge (inside the box).
    pub fn eps_ex(&self, i: i64, j: i64) -> f64 {
        self.eps.ex((i - self.i_lo) as usize, (j - self.j_lo) as usize)
    }

    pub fn eps_ey(&self, i: i64, j: i64) -> f64 {
        self.eps.ey((i - self.i_lo) as usize, (j - self.j_lo) as usize)
    }

    /// Whether the rectangle of nodes lies clear of the absorbing layers.
    pub fn is_physical(&self, i0: i64, i1: i64, j0: i64, j1: i64) -> bool {
        let (a, b, c, d) = self.physical_nodes();
        i0 >= a && i1 <= b && j0 >= c && j1 <= d
    }
}
