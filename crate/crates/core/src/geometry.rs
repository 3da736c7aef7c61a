//! Triangular-lattice crystals, the W1 line defect, and permittivity rasterization.
//!
//! All lengths are in units of the lattice constant. Hole rows sit at
//! `y = k·√3/2` with every odd row shifted by half a period along x; the
//! crystal slab ends `edge_margin` beyond the outermost row and is surrounded
//! by a cladding of index `cladding_index`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ROW_PITCH: f64 = 0.866_025_403_784_438_6;

/// Smallest resolution (grid points per a) accepted by [`rasterize`].
pub const MIN_RESOLUTION: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Defect {
    None,
    W1,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatticeType {
    Triangular,
    /// No holes at all: the reference medium of index `index` everywhere.
    Homogeneous,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrystalGeometry {
    pub lattice_constant: f64,
    pub hole_radius: f64,
    pub index: f64,
    pub cladding_index: f64,
    pub lattice: LatticeType,
    pub defect: Defect,
    pub rows_half: usize,
    pub periods: usize,
    /// Distance from the outermost row centres to the slab edge.
    pub edge_margin: f64,
    /// Line-defect width in units of the W1 width √3·a; the rows on each
    /// side move outward by (w − 1)·√3/2.
    #[serde(default = "unit_width")]
    pub defect_width: f64,
}

fn unit_width() -> f64 {
    1.0
}

/// One row of holes: its centre line and its x shift within the period.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HoleRow {
    pub index: i64,
    pub y: f64,
    pub shift: f64,
}

impl CrystalGeometry {
    pub fn triangular(
        a: f64,
        r: f64,
        n: f64,
        m: usize,
        l_periods: usize,
        defect: Defect,
    ) -> Result<Self> {
        let g = Self {
            lattice_constant: a,
            hole_radius: r,
            index: n,
            cladding_index: 1.0,
            lattice: LatticeType::Triangular,
            defect,
            rows_half: m,
            periods: l_periods,
            edge_margin: 0.5 * ROW_PITCH,
            defect_width: 1.0,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn homogeneous(n: f64) -> Result<Self> {
        let g = Self {
            lattice_constant: 1.0,
            hole_radius: 0.0,
            index: n,
            cladding_index: n,
            lattice: LatticeType::Homogeneous,
            defect: Defect::None,
            rows_half: 1,
            periods: 1,
            edge_margin: 0.0,
            defect_width: 1.0,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn with_cladding_index(mut self, n_out: f64) -> Result<Self> {
        self.cladding_index = n_out;
        self.validate()?;
        Ok(self)
    }

    pub fn with_edge_margin(mut self, margin: f64) -> Result<Self> {
        self.edge_margin = margin;
        self.validate()?;
        Ok(self)
    }

    pub fn with_defect_width(mut self, w: f64) -> Result<Self> {
        self.defect_width = w;
        self.validate()?;
        Ok(self)
    }

    /// Same lattice with the missing row restored.
    pub fn without_defect(&self) -> Self {
        Self {
            defect: Defect::None,
            defect_width: 1.0,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if (self.lattice_constant - 1.0).abs() > 1e-12 {
            return Err(Error::Geometry(
                "lengths are expressed in units of a; lattice_constant must be 1".into(),
            ));
        }
        if !(self.index > 1.0) || !self.index.is_finite() {
            return Err(Error::Geometry(format!("index must exceed 1, got {}", self.index)));
        }
        if !(self.cladding_index >= 1.0) || self.cladding_index > self.index {
            return Err(Error::Geometry(format!(
                "cladding index must lie in [1, n], got {}",
                self.cladding_index
            )));
        }
        if self.lattice == LatticeType::Homogeneous {
            return Ok(());
        }
        if !(self.hole_radius > 0.0) || self.hole_radius >= 0.5 {
            return Err(Error::Geometry(format!(
                "hole radius must satisfy 0 < r < a/2, got {}",
                self.hole_radius
            )));
        }
        if self.rows_half == 0 {
            return Err(Error::Geometry("need at least one row of holes per side".into()));
        }
        if self.periods == 0 {
            return Err(Error::Geometry("need at least one period along x".into()));
        }
        if self.defect == Defect::W1 && !(self.defect_width > 0.5 && self.defect_width < 2.0) {
            return Err(Error::Geometry(format!(
                "defect width {} outside (0.5, 2)",
                self.defect_width
            )));
        }
        if self.edge_margin < self.hole_radius {
            return Err(Error::Geometry(format!(
                "edge margin {} cuts the outer holes (r = {})",
                self.edge_margin, self.hole_radius
            )));
        }
        Ok(())
    }

    pub fn has_holes(&self) -> bool {
        self.lattice == LatticeType::Triangular
    }

    pub fn rows(&self) -> Vec<HoleRow> {
        if !self.has_holes() {
            return Vec::new();
        }
        let m = self.rows_half as i64;
        (-m..=m)
            .filter(|&k| !(k == 0 && self.defect == Defect::W1))
            .map(|k| HoleRow {
                index: k,
                y: (k as f64 + k.signum() as f64 * self.row_offset()) * ROW_PITCH,
                shift: if k.rem_euclid(2) == 1 { 0.5 } else { 0.0 },
            })
            .collect()
    }

    fn row_offset(&self) -> f64 {
        match self.defect {
            Defect::W1 => self.defect_width - 1.0,
            Defect::None => 0.0,
        }
    }

    pub fn outer_row_y(&self) -> f64 {
        (self.rows_half as f64 + self.row_offset()) * ROW_PITCH
    }

    /// Half width of the dielectric slab; infinite for the homogeneous medium.
    pub fn half_width(&self) -> f64 {
        if self.has_holes() {
            self.outer_row_y() + self.edge_margin
        } else {
            f64::INFINITY
        }
    }

    /// Nominal crystal length l = l_periods·a.
    pub fn length(&self) -> f64 {
        self.periods as f64
    }

    /// Relative permittivity at a point, without smoothing or grid snapping.
    pub fn eps_at(&self, x: f64, y: f64) -> f64 {
        let n2 = self.index * self.index;
        if !self.has_holes() {
            return n2;
        }
        if y.abs() > self.half_width() {
            return self.cladding_index * self.cladding_index;
        }
        let r = self.hole_radius;
        for row in self.rows() {
            if (y - row.y).abs() > r {
                continue;
            }
            let c = x - row.shift;
            let dx = c - c.round();
            if dx * dx + (y - row.y) * (y - row.y) < r * r {
                return 1.0;
            }
        }
        n2
    }

    /// Hole centres whose discs may touch the rectangle, optionally snapped to
    /// the grid nodes of spacing `1/resolution`.
    pub fn holes_near(
        &self,
        x_lo: f64,
        x_hi: f64,
        y_lo: f64,
        y_hi: f64,
        resolution: Option<usize>,
    ) -> Vec<(f64, f64)> {
        let r = self.hole_radius;
        let mut out = Vec::new();
        for row in self.rows() {
            let (cy, shift_cells) = match resolution {
                Some(res) => (
                    (row.y * res as f64).round() / res as f64,
                    Some((row.shift * res as f64).round() as i64),
                ),
                None => (row.y, None),
            };
            if cy + r < y_lo - 1e-12 || cy - r > y_hi + 1e-12 {
                continue;
            }
            let n_lo = (x_lo - r - row.shift).floor() as i64 - 1;
            let n_hi = (x_hi + r - row.shift).ceil() as i64 + 1;
            for n in n_lo..=n_hi {
                let cx = match (resolution, shift_cells) {
                    (Some(res), Some(s)) => (n * res as i64 + s) as f64 / res as f64,
                    _ => n as f64 + row.shift,
                };
                if cx + r < x_lo - 1e-12 || cx - r > x_hi + 1e-12 {
                    continue;
                }
                out.push((cx, cy));
            }
        }
        out
    }

    /// Area-averaged permittivity over the axis-aligned window centred at
    /// `(x, y)` with side `h`, holes snapped to the given resolution.
    pub fn window_eps(&self, x: f64, y: f64, h: f64, resolution: Option<usize>) -> f64 {
        let n2 = self.index * self.index;
        if !self.has_holes() {
            return n2;
        }
        let c2 = self.cladding_index * self.cladding_index;
        let (x0, x1, y0, y1) = (x - 0.5 * h, x + 0.5 * h, y - 0.5 * h, y + 0.5 * h);
        let w = self.half_width();
        let inside = (y1.min(w) - y0.max(-w)).max(0.0) / h;
        let mut holes = 0.0;
        for (cx, cy) in self.holes_near(x0, x1, y0, y1, resolution) {
            holes += circle_rect_area(cx, cy, self.hole_radius, x0, x1, y0, y1);
        }
        let eps = c2 + (n2 - c2) * inside - (n2 - 1.0) * holes / (h * h);
        eps.clamp(1.0, n2)
    }
}

/// The W1 waveguide: one row of holes removed along y = 0.
pub fn build_w1(a: f64, r: f64, n: f64, m: usize, l_periods: usize) -> Result<CrystalGeometry> {
    CrystalGeometry::triangular(a, r, n, m, l_periods, Defect::W1)
}

/// Exact area of the intersection of a disc with an axis-aligned rectangle.
pub fn circle_rect_area(cx: f64, cy: f64, r: f64, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    let (x0, x1, y0, y1) = (x0 - cx, x1 - cx, y0 - cy, y1 - cy);
    let lo = x0.max(-r);
    let hi = x1.min(r);
    if hi <= lo || y1 <= -r || y0 >= r {
        return 0.0;
    }
    let mut breaks = vec![lo, hi];
    for yb in [y0, y1] {
        if yb.abs() < r {
            let xb = (r * r - yb * yb).sqrt();
            breaks.extend([xb, -xb]);
        }
    }
    breaks.retain(|&b| b >= lo && b <= hi);
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breaks.dedup();

    let s = |x: f64| (r * r - x * x).max(0.0).sqrt();
    let prim = |x: f64| {
        let t = (x / r).clamp(-1.0, 1.0);
        0.5 * (x * s(x) + r * r * t.asin())
    };
    let mut area = 0.0;
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let sm = s(0.5 * (a + b));
        let top_is_circle = sm < y1;
        let bottom_is_circle = -sm > y0;
        let top = if top_is_circle { sm } else { y1 };
        let bottom = if bottom_is_circle { -sm } else { y0 };
        if top <= bottom {
            continue;
        }
        let upper = if top_is_circle { prim(b) - prim(a) } else { y1 * (b - a) };
        let lower = if bottom_is_circle { -(prim(b) - prim(a)) } else { y0 * (b - a) };
        area += upper - lower;
    }
    area.max(0.0)
}

/// Permittivity sampled on a staggered grid aligned with the lattice.
///
/// Nodes sit at `((i0 + i)/res, (j0 + j)/res)` for `i ∈ 0..=nx`, `j ∈ 0..=ny`.
/// `eps_ex` lives at `(x_i, y_{j+1/2})`, `eps_ey` at `(x_{i+1/2}, y_j)`, and
/// `eps_cell` at cell centres.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterGrid {
    pub resolution: usize,
    pub i0: i64,
    pub j0: i64,
    pub nx: usize,
    pub ny: usize,
    pub eps_ex: Vec<f64>,
    pub eps_ey: Vec<f64>,
    pub eps_cell: Vec<f64>,
}

impl RasterGrid {
    pub fn dx(&self) -> f64 {
        1.0 / self.resolution as f64
    }

    pub fn x_node(&self, i: usize) -> f64 {
        (self.i0 + i as i64) as f64 / self.resolution as f64
    }

    pub fn y_node(&self, j: usize) -> f64 {
        (self.j0 + j as i64) as f64 / self.resolution as f64
    }

    pub fn extent(&self) -> (f64, f64, f64, f64) {
        (self.x_node(0), self.x_node(self.nx), self.y_node(0), self.y_node(self.ny))
    }

    pub fn ex(&self, i: usize, j: usize) -> f64 {
        self.eps_ex[i * self.ny + j]
    }

    pub fn ey(&self, i: usize, j: usize) -> f64 {
        self.eps_ey[i * (self.ny + 1) + j]
    }

    pub fn cell(&self, i: usize, j: usize) -> f64 {
        self.eps_cell[i * self.ny + j]
    }
}

/// Samples the geometry onto a grid covering `extent = (x_min, x_max, y_min, y_max)`,
/// snapped outward-to-nearest grid nodes.
pub fn rasterize(
    geometry: &CrystalGeometry,
    resolution: usize,
    extent: (f64, f64, f64, f64),
) -> Result<RasterGrid> {
    if resolution < MIN_RESOLUTION {
        return Err(Error::InvalidInput(format!(
            "resolution {resolution} is below {MIN_RESOLUTION} points per a"
        )));
    }
    let (x_min, x_max, y_min, y_max) = extent;
    if !(x_max > x_min) || !(y_max > y_min) {
        return Err(Error::InvalidInput(format!("empty extent {extent:?}")));
    }
    let res = resolution as f64;
    let i0 = (x_min * res).round() as i64;
    let j0 = (y_min * res).round() as i64;
    let nx = ((x_max * res).round() as i64 - i0).max(1) as usize;
    let ny = ((y_max * res).round() as i64 - j0).max(1) as usize;
    let h = 1.0 / res;
    // The crystal is periodic along x, so sample in the reference period to
    // make translated rasters bit-identical.
    let xs = |i: f64| (i0 + i.floor() as i64).rem_euclid(resolution as i64) as f64 * h + i.fract() * h;
    let ys = |j: f64| (j0 as f64 + j) * h;
    let sample = |x: f64, y: f64| geometry.window_eps(x, y, h, Some(resolution));

    let mut eps_ex = Vec::with_capacity((nx + 1) * ny);
    for i in 0..=nx {
        for j in 0..ny {
            eps_ex.push(sample(xs(i as f64), ys(j as f64 + 0.5)));
        }
    }
    let mut eps_ey = Vec::with_capacity(nx * (ny + 1));
    for i in 0..nx {
        for j in 0..=ny {
            eps_ey.push(sample(xs(i as f64 + 0.5), ys(j as f64)));
        }
    }
    let mut eps_cell = Vec::with_capacity(nx * ny);
    for i in 0..nx {
        for j in 0..ny {
            eps_cell.push(sample(xs(i as f64 + 0.5), ys(j as f64 + 0.5)));
        }
    }
    Ok(RasterGrid {
        resolution,
        i0,
        j0,
        nx,
        ny,
        eps_ex,
        eps_ey,
        eps_cell,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w1() -> CrystalGeometry {
        build_w1(1.0, 0.3, 3.5, 4, 33).unwrap()
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(build_w1(1.0, 0.5, 3.5, 4, 33).is_err());
        assert!(build_w1(1.0, 0.3, 3.5, 0, 33).is_err());
        assert!(build_w1(1.0, 0.3, 3.5, 4, 0).is_err());
        assert!(build_w1(1.0, 0.3, 1.0, 4, 33).is_err());
    }

    #[test]
    fn w1_layout() {
        let g = w1();
        let rows = g.rows();
        assert_eq!(rows.len(), 8);
        assert!(rows.iter().all(|r| r.index != 0));
        assert_eq!(rows.iter().filter(|r| r.y > 0.0).count(), 4);
        assert_eq!(g.length(), 33.0);
    }

    #[test]
    fn point_queries() {
        let g = w1();
        assert_eq!(g.eps_at(0.5, ROW_PITCH), 1.0);
        assert_eq!(g.eps_at(0.0, 2.0 * ROW_PITCH), 1.0);
        assert_eq!(g.eps_at(0.0, ROW_PITCH), 12.25);
        assert_eq!(g.eps_at(0.3, 0.0), 12.25);
        assert_eq!(g.eps_at(0.0, 10.0), 1.0);
    }

    #[test]
    fn circle_area_cases() {
        let pi = std::f64::consts::PI;
        let full = circle_rect_area(0.0, 0.0, 0.3, -1.0, 1.0, -1.0, 1.0);
        assert!((full - pi * 0.09).abs() < 1e-14);
        let half = circle_rect_area(0.0, 0.0, 0.3, 0.0, 1.0, -1.0, 1.0);
        assert!((half - pi * 0.045).abs() < 1e-14);
        let quarter = circle_rect_area(0.0, 0.0, 0.3, 0.0, 1.0, 0.0, 1.0);
        assert!((quarter - pi * 0.0225).abs() < 1e-14);
        let inner = circle_rect_area(0.0, 0.0, 1.0, -0.1, 0.1, -0.2, 0.2);
        assert!((inner - 0.08).abs() < 1e-15);
        assert_eq!(circle_rect_area(0.0, 0.0, 0.3, 0.5, 1.0, -1.0, 1.0), 0.0);
    }

    #[test]
    fn circle_area_matches_monte_carlo_grid() {
        let (cx, cy, r) = (0.13, -0.07, 0.3);
        let (x0, x1, y0, y1) = (0.0, 0.25, -0.2, 0.05);
        let n = 2000;
        let mut hits = 0usize;
        for i in 0..n {
            for j in 0..n {
                let x = x0 + (i as f64 + 0.5) * (x1 - x0) / n as f64;
                let y = y0 + (j as f64 + 0.5) * (y1 - y0) / n as f64;
                if (x - cx).powi(2) + (y - cy).powi(2) < r * r {
                    hits += 1;
                }
            }
        }
        let est = hits as f64 / (n * n) as f64 * (x1 - x0) * (y1 - y0);
        let exact = circle_rect_area(cx, cy, r, x0, x1, y0, y1);
        assert!((est - exact).abs() < 2e-5 * (x1 - x0) * (y1 - y0), "{est} {exact}");
    }

    #[test]
    fn uniform_medium_raster() {
        let g = CrystalGeometry::homogeneous(3.5).unwrap();
        let r = rasterize(&g, 16, (-1.0, 1.0, -1.0, 1.0)).unwrap();
        assert!(r.eps_ex.iter().chain(&r.eps_ey).chain(&r.eps_cell).all(|&e| e == 12.25));
    }

    #[test]
    fn cell_inside_hole_is_air() {
        let g = w1();
        let res = 32;
        let r = rasterize(&g, res, (-1.0, 1.0, 0.0, 2.0)).unwrap();
        let j = (ROW_PITCH * res as f64).round() as usize;
        let i = 32 + 16;
        assert_eq!(r.cell(i, j), 1.0);
        assert_eq!(r.cell(i - 1, j - 1), 1.0);
    }

    #[test]
    fn half_covered_cell_at_slab_edge() {
        let g = w1().with_edge_margin(0.5).unwrap();
        let w = g.half_width();
        let h = 1.0 / 32.0;
        let e = g.window_eps(0.0, w, h, Some(32));
        assert!((e - 6.625).abs() < 1e-12);
    }

    #[test]
    fn too_coarse_rejected() {
        assert!(rasterize(&w1(), 7, (0.0, 1.0, 0.0, 1.0)).is_err());
    }

    #[test]
    fn mirror_symmetry_exact() {
        let g = w1();
        let r = rasterize(&g, 24, (-2.0, 2.0, -5.0, 5.0)).unwrap();
        for i in 0..r.nx {
            for j in 0..r.ny {
                assert_eq!(r.cell(i, j), r.cell(i, r.ny - 1 - j));
            }
            for j in 0..=r.ny {
                assert_eq!(r.ey(i, j), r.ey(i, r.ny - j));
            }
        }
    }

    #[test]
    fn period_translation() {
        let g = w1();
        let a = rasterize(&g, 20, (0.0, 3.0, -4.0, 4.0)).unwrap();
        let b = rasterize(&g, 20, (1.0, 4.0, -4.0, 4.0)).unwrap();
        assert_eq!(a.eps_cell, b.eps_cell);
        assert_eq!(a.eps_ex, b.eps_ex);
        assert_eq!(a.eps_ey, b.eps_ey);
    }

    #[test]
    fn refinement_keeps_area_integral() {
        let g = w1();
        let integral = |res: usize| {
            let r = rasterize(&g, res, (0.0, 2.0, -4.0, 4.0)).unwrap();
            let h = r.dx();
            r.eps_cell.iter().sum::<f64>() * h * h
        };
        let (c, f) = (integral(16), integral(32));
        assert!(((c - f) / f).abs() < 5e-3);
    }
}
