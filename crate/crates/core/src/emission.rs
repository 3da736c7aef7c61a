//! Emitted powers, Purcell factors and the β-factor from solved fields.
//!
//! Flux boxes lie on dual grid lines: the right face of a box over nodes
//! `i0..=i1` sits at x = (i1 + 1/2)Δ and crosses the E_y edges of column
//! `i1`, where S_x = ½Re(E_y H̄_z*) with H̄_z the average of the two
//! neighbouring nodes. With this choice the closed-box flux equals the power
//! delivered by the source exactly whenever the box interior is lossless.

use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdfd::{Dipole, Domain, FdfdOperator, FieldSolution, PmlSpec};
use crate::geometry::CrystalGeometry;
use crate::io::sci;
use crate::pwe::{BlochMode, Orientation};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaceSet {
    All,
    /// Only the two y-normal faces count.
    ExcludeXNormal,
}

/// Distance from the slab edge to the default radiation faces, in a.
pub const DEFAULT_CLADDING_GAP: f64 = 2.0;

/// Rectangle in units of a. Each side snaps to the nearest dual grid line,
/// ties going outward.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluxBox {
    pub x_lo: f64,
    pub x_hi: f64,
    pub y_lo: f64,
    pub y_hi: f64,
    pub faces: FaceSet,
}

impl FluxBox {
    pub fn closed(x_lo: f64, x_hi: f64, y_lo: f64, y_hi: f64) -> Self {
        Self { x_lo, x_hi, y_lo, y_hi, faces: FaceSet::All }
    }

    /// Enclosed node range `(i0, i1, j0, j1)`.
    pub fn nodes(&self, resolution: usize) -> (i64, i64, i64, i64) {
        let res = resolution as f64;
        (
            (self.x_lo * res + 0.5).floor() as i64,
            (self.x_hi * res - 0.5).ceil() as i64,
            (self.y_lo * res + 0.5).floor() as i64,
            (self.y_hi * res - 0.5).ceil() as i64,
        )
    }

    /// Radiation box of a waveguide: `l_b` long and centred on x = 0, with
    /// its y faces `gap` into the cladding beyond the slab edge.
    pub fn radiation(geometry: &CrystalGeometry, l_b: f64, gap: f64) -> Result<Self> {
        let y = geometry.half_width() + gap;
        if !(gap > 0.0) || !y.is_finite() {
            return Err(Error::FluxBox(format!(
                "radiation faces at |y| = {y} lie inside the crystal"
            )));
        }
        Ok(Self {
            x_lo: -0.5 * l_b,
            x_hi: 0.5 * l_b,
            y_lo: -y,
            y_hi: y,
            faces: FaceSet::ExcludeXNormal,
        })
    }

    /// Default radiation box: l_b = l − 2a, faces [`DEFAULT_CLADDING_GAP`]
    /// outside the slab.
    pub fn default_radiation(geometry: &CrystalGeometry) -> Result<Self> {
        Self::radiation(geometry, geometry.length() - 2.0, DEFAULT_CLADDING_GAP)
    }

    pub fn with_faces(mut self, faces: FaceSet) -> Self {
        self.faces = faces;
        self
    }
}

/// Outward flux through each face of a box.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct FaceFlux {
    pub right: f64,
    pub left: f64,
    pub top: f64,
    pub bottom: f64,
}

impl FaceFlux {
    pub fn x_normal(&self) -> f64 {
        self.right + self.left
    }

    pub fn y_normal(&self) -> f64 {
        self.top + self.bottom
    }

    pub fn total(&self) -> f64 {
        self.x_normal() + self.y_normal()
    }

    pub fn selected(&self, faces: FaceSet) -> f64 {
        match faces {
            FaceSet::All => self.total(),
            FaceSet::ExcludeXNormal => self.y_normal(),
        }
    }
}

/// Per-face outward flux; the box and its neighbouring nodes must lie in
/// the lossless interior and clear of the source cell.
pub fn face_fluxes(solution: &FieldSolution, b: &FluxBox) -> Result<FaceFlux> {
    let (i0, i1, j0, j1) = b.nodes(solution.resolution);
    if i1 <= i0 || j1 <= j0 {
        return Err(Error::FluxBox(format!("degenerate box {b:?}")));
    }
    let t = solution.pml_thickness as i64;
    let inside = |i: i64, j: i64| {
        i >= solution.i_lo + t && i <= solution.i_hi - t && j >= solution.j_lo + t && j <= solution.j_hi - t
    };
    if !inside(i0 - 1, j0 - 1) || !inside(i1 + 1, j1 + 1) {
        return Err(Error::FluxBox(format!(
            "box {b:?} reaches into the absorbing layers"
        )));
    }
    let (si, sj) = solution.source_edge;
    let (si1, sj1) = match solution.source.orientation {
        Orientation::X => (si, sj + 1),
        Orientation::Y => (si + 1, sj),
    };
    let strictly_inside = |i: i64, j: i64| i > i0 && i < i1 && j > j0 && j < j1;
    let clear = |i: i64, j: i64| i < i0 - 1 || i > i1 + 1 || j < j0 - 1 || j > j1 + 1;
    let ok = (strictly_inside(si, sj) && strictly_inside(si1, sj1)) || (clear(si, sj) && clear(si1, sj1));
    if !ok {
        return Err(Error::FluxBox("box face runs through the source cell".into()));
    }
    let h = solution.dx();
    let hbar_x = |i: i64, j: i64| 0.5 * (solution.hz(i, j) + solution.hz(i + 1, j));
    let hbar_y = |i: i64, j: i64| 0.5 * (solution.hz(i, j) + solution.hz(i, j + 1));
    let mut f = FaceFlux::default();
    for j in j0..=j1 {
        f.right += 0.5 * (solution.ey(i1, j) * hbar_x(i1, j).conj()).re * h;
        f.left -= 0.5 * (solution.ey(i0 - 1, j) * hbar_x(i0 - 1, j).conj()).re * h;
    }
    for i in i0..=i1 {
        f.top -= 0.5 * (solution.ex(i, j1) * hbar_y(i, j1).conj()).re * h;
        f.bottom += 0.5 * (solution.ex(i, j0 - 1) * hbar_y(i, j0 - 1).conj()).re * h;
    }
    Ok(f)
}

/// Time-averaged outward flux ½Re∮ E×H* through the selected faces.
pub fn poynting_flux(solution: &FieldSolution, b: &FluxBox) -> Result<f64> {
    Ok(face_fluxes(solution, b)?.selected(b.faces))
}

/// Flux through the two y-normal faces of a radiation box.
pub fn radiated_power(solution: &FieldSolution, rad_box: &FluxBox) -> Result<f64> {
    if rad_box.faces != FaceSet::ExcludeXNormal {
        return Err(Error::FluxBox("radiation box must exclude the x-normal faces".into()));
    }
    poynting_flux(solution, rad_box)
}

/// x-flux through the E_y column `i` over node rows `j0..=j1`.
pub fn column_flux(solution: &FieldSolution, i: i64, j0: i64, j1: i64) -> f64 {
    let h = solution.dx();
    (j0..=j1)
        .map(|j| {
            let hbar = 0.5 * (solution.hz(i, j) + solution.hz(i + 1, j));
            0.5 * (solution.ey(i, j) * hbar.conj()).re * h
        })
        .sum()
}

/// Power of a unit in-plane line dipole in a uniform medium, ω_ang/16 with
/// ω_ang = 2πω; independent of the index.
pub fn analytic_reference_power(omega: f64) -> f64 {
    std::f64::consts::PI * omega / 8.0
}

/// Physical cells between the reference dipole and the absorbing layer, per a.
const REFERENCE_HALF_WIDTH: f64 = 1.5;

/// Power of the unit grid dipole with the given orientation in a uniform
/// medium of index `n`, on the same grid as the structured solves.
pub fn reference_power_oriented(
    omega: f64,
    n: f64,
    resolution: usize,
    orientation: Orientation,
    pml: PmlSpec,
) -> Result<f64> {
    let half_cells = (REFERENCE_HALF_WIDTH * resolution as f64).ceil() as i64;
    let dipole = Dipole::unit((0.5 / resolution as f64, 0.5 / resolution as f64), orientation);
    let (ie, je) = dipole.edge(resolution);
    let domain = Domain::homogeneous(n, resolution, (orientation, ie, je), half_cells, pml)?;
    let op = FdfdOperator::new(&domain, omega)?;
    let p0 = op.solve(&dipole, None)?.source_power();
    if !(p0 > 0.0) {
        return Err(Error::NegativePower { name: "P0", value: p0 });
    }
    Ok(p0)
}

type ReferenceKey = (u64, u64, usize, usize, u64, u64);

static REFERENCE_CACHE: Mutex<Option<HashMap<ReferenceKey, f64>>> = Mutex::new(None);

/// P0 for a y-oriented unit dipole with the default absorbing layers,
/// cached per (ω, n, resolution).
pub fn reference_power(omega: f64, n: f64, resolution: usize) -> Result<f64> {
    reference_power_with(omega, n, resolution, PmlSpec::default())
}

pub fn reference_power_with(omega: f64, n: f64, resolution: usize, pml: PmlSpec) -> Result<f64> {
    let key = (
        omega.to_bits(),
        n.to_bits(),
        resolution,
        pml.thickness,
        pml.order.to_bits(),
        pml.r0.to_bits(),
    );
    if let Some(v) = REFERENCE_CACHE.lock().unwrap().as_ref().and_then(|m| m.get(&key)) {
        return Ok(*v);
    }
    let p0 = reference_power_oriented(omega, n, resolution, Orientation::Y, pml)?;
    REFERENCE_CACHE
        .lock()
        .unwrap()
        .get_or_insert_with(HashMap::new)
        .insert(key, p0);
    Ok(p0)
}

/// Power a unit dipole launches into one guided mode, both directions
/// together: |E·n_d|² / (4N).
pub fn guided_power(mode: &BlochMode, r0: (f64, f64), n_d: Orientation) -> f64 {
    mode.e_full_at(r0, n_d).norm_sqr() / (4.0 * mode.norm)
}

/// Waveguide Purcell factor from the eigenfield alone, P_wg / P0.
pub fn purcell_wg(mode: &BlochMode, r0: (f64, f64), n_d: Orientation, p0: f64) -> f64 {
    guided_power(mode, r0, n_d) / p0
}

/// Quantities a β-factor is composed from, all for one (ω, r0, n_d).
#[derive(Clone, Copy, Debug)]
pub struct BetaInputs {
    pub omega: f64,
    pub n_g: f64,
    pub r0: (f64, f64),
    pub n_d: Orientation,
    pub p_total: f64,
    pub p_rad: f64,
    pub p0: f64,
    /// F_p^wg of the primary mode.
    pub fp_wg: f64,
    /// F_p^wg summed over every guided mode at ω.
    pub fp_guided: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmissionReport {
    pub omega: f64,
    pub n_g: f64,
    pub x0: f64,
    pub y0: f64,
    pub n_d: Orientation,
    pub p_total: f64,
    pub p_rad: f64,
    pub p0: f64,
    pub fp_wg: f64,
    pub fp_rad: f64,
    pub fp_total: f64,
    /// F_wg / (F_wg + F_rad) for the primary mode.
    pub beta: f64,
    /// 1 − P_rad / P_total.
    pub beta_prime: f64,
    /// Same as `beta` with every guided mode in the numerator.
    pub beta_guided: f64,
    /// |β_guided − β'|.
    pub discrepancy: f64,
}

/// Negative powers beyond this fraction of P0 are treated as failures.
const NEGATIVE_POWER_TOL: f64 = 1e-6;

pub fn beta_factor(inp: &BetaInputs) -> Result<EmissionReport> {
    let floor = -NEGATIVE_POWER_TOL * inp.p0.abs();
    for (name, v) in [
        ("P0", inp.p0),
        ("P_total", inp.p_total),
        ("P_rad", inp.p_rad),
        ("F_wg", inp.fp_wg * inp.p0),
        ("F_guided", inp.fp_guided * inp.p0),
    ] {
        if !v.is_finite() || v < floor || (name == "P0" && v <= 0.0) {
            return Err(Error::NegativePower { name, value: v });
        }
    }
    let p_rad = inp.p_rad.max(0.0);
    let fp_rad = p_rad / inp.p0;
    let ratio = |num: f64| if num + fp_rad > 0.0 { num / (num + fp_rad) } else { 0.0 };
    let beta = ratio(inp.fp_wg.max(0.0));
    let beta_guided = ratio(inp.fp_guided.max(0.0));
    let beta_prime = if inp.p_total > 0.0 { 1.0 - p_rad / inp.p_total } else { 0.0 };
    Ok(EmissionReport {
        omega: inp.omega,
        n_g: inp.n_g,
        x0: inp.r0.0,
        y0: inp.r0.1,
        n_d: inp.n_d,
        p_total: inp.p_total,
        p_rad,
        p0: inp.p0,
        fp_wg: inp.fp_wg,
        fp_rad,
        fp_total: inp.p_total / inp.p0,
        beta,
        beta_prime,
        beta_guided,
        discrepancy: (beta_guided - beta_prime).abs(),
    })
}

pub const REPORT_HEADER: [&str; 16] = [
    "omega", "n_g", "x0", "y0", "n_d", "p_total", "p_rad", "p0", "fp_wg", "fp_rad", "fp_total", "beta",
    "beta_prime", "beta_guided", "discrepancy", "config_hash",
];

impl EmissionReport {
    pub fn csv_row(&self, config_hash: &str) -> Vec<String> {
        let n_d = match self.n_d {
            Orientation::X => "x",
            Orientation::Y => "y",
        };
        vec![
            sci(self.omega),
            sci(self.n_g),
            sci(self.x0),
            sci(self.y0),
            n_d.into(),
            sci(self.p_total),
            sci(self.p_rad),
            sci(self.p0),
            sci(self.fp_wg),
            sci(self.fp_rad),
            sci(self.fp_total),
            sci(self.beta),
            sci(self.beta_prime),
            sci(self.beta_guided),
            sci(self.discrepancy),
            config_hash.into(),
        ]
    }
}

pub fn reports_csv(reports: &[EmissionReport], config_hash: &str) -> Result<Vec<u8>> {
    crate::io::csv_bytes(&REPORT_HEADER, reports.iter().map(|r| r.csv_row(config_hash)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdfd::{FdfdOperator, PmlSpec};
    use num_complex::Complex64 as C64;

    fn homogeneous_solution(res: usize, omega: f64, o: Orientation) -> FieldSolution {
        let dip = Dipole::unit((0.5 / res as f64, 0.5 / res as f64), o);
        let (ie, je) = dip.edge(res);
        let d = Domain::homogeneous(2.0, res, (o, ie, je), 2 * res as i64, PmlSpec::default()).unwrap();
        FdfdOperator::new(&d, omega).unwrap().solve(&dip, None).unwrap()
    }

    #[test]
    fn nested_boxes_carry_the_source_power() {
        let s = homogeneous_solution(16, 0.3, Orientation::Y);
        let p = s.source_power();
        for half in [0.3, 0.8, 1.5] {
            let f = poynting_flux(&s, &FluxBox::closed(-half, half, -half, half)).unwrap();
            assert!((f - p).abs() < 1e-9 * p, "box {half}: {f} vs {p}");
        }
    }

    #[test]
    fn time_reversal_flips_and_zero_vanishes() {
        let s = homogeneous_solution(16, 0.3, Orientation::X);
        let b = FluxBox::closed(-0.5, 0.5, -0.5, 0.5);
        let f = poynting_flux(&s, &b).unwrap();
        let g = poynting_flux(&s.time_reversed(), &b).unwrap();
        assert!(f > 0.0 && (f + g).abs() < 1e-12 * f);
        let z = s.scaled(C64::new(0.0, 0.0));
        assert_eq!(poynting_flux(&z, &b).unwrap(), 0.0);
    }

    #[test]
    fn channels_add_up() {
        let s = homogeneous_solution(16, 0.3, Orientation::Y);
        let b = FluxBox::closed(-0.7, 0.9, -0.4, 1.1);
        let f = face_fluxes(&s, &b).unwrap();
        let rad = radiated_power(&s, &b.with_faces(FaceSet::ExcludeXNormal)).unwrap();
        let all = poynting_flux(&s, &b).unwrap();
        assert!((all - rad - f.x_normal()).abs() <= 1e-12 * all);
        assert!(radiated_power(&s, &b).is_err());
    }

    #[test]
    fn bad_boxes_rejected() {
        let s = homogeneous_solution(16, 0.3, Orientation::Y);
        assert!(poynting_flux(&s, &FluxBox::closed(-5.0, 0.5, -0.5, 0.5)).is_err());
        assert!(poynting_flux(&s, &FluxBox::closed(-0.5, 0.01, -0.5, 0.5)).is_err());
        assert!(poynting_flux(&s, &FluxBox::closed(0.2, 0.7, -0.5, 0.5)).unwrap().abs() < 1e-12);
    }

    #[test]
    fn reference_power_follows_the_line_dipole_law() {
        let res = 32;
        let p = |w: f64, o| reference_power_oriented(w, 3.5, res, o, PmlSpec::default()).unwrap();
        let (lo, hi) = (p(0.15, Orientation::Y), p(0.3, Orientation::Y));
        assert!(lo > 0.0 && hi > 0.0);
        assert!((lo / analytic_reference_power(0.15) - 1.0).abs() < 0.01);
        assert!((hi / analytic_reference_power(0.3) - 1.0).abs() < 0.01);
        assert!((lo / hi - 0.5).abs() < 0.5 * 0.005);
        assert!((p(0.3, Orientation::X) / hi - 1.0).abs() < 0.005);
    }

    #[test]
    fn reference_power_is_cached() {
        let a = reference_power(0.21, 3.5, 12).unwrap();
        let b = reference_power(0.21, 3.5, 12).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn beta_limits() {
        let base = BetaInputs {
            omega: 0.25,
            n_g: 10.0,
            r0: (0.5, 0.0),
            n_d: Orientation::Y,
            p_total: 2.0,
            p_rad: 0.0,
            p0: 1.0,
            fp_wg: 2.0,
            fp_guided: 2.0,
        };
        let r = beta_factor(&base).unwrap();
        assert_eq!((r.beta, r.beta_prime), (1.0, 1.0));
        let r = beta_factor(&BetaInputs { fp_wg: 0.0, fp_guided: 0.0, p_rad: 2.0, ..base }).unwrap();
        assert_eq!(r.beta, 0.0);
        assert!(beta_factor(&BetaInputs { p_rad: -0.5, ..base }).is_err());
        assert!(beta_factor(&BetaInputs { p0: 0.0, ..base }).is_err());
    }

    #[test]
    fn report_csv_has_fixed_header() {
        let r = beta_factor(&BetaInputs {
            omega: 0.25,
            n_g: 10.0,
            r0: (0.5, 0.0),
            n_d: Orientation::X,
            p_total: 2.0,
            p_rad: 0.5,
            p0: 1.0,
            fp_wg: 1.5,
            fp_guided: 1.5,
        })
        .unwrap();
        let text = String::from_utf8(reports_csv(&[r], "abc").unwrap()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), REPORT_HEADER.join(","));
        assert!(lines.next().unwrap().ends_with(",abc"));
    }
}
