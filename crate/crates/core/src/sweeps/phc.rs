//! Emission into the radiation continuum of the crystal without the line
//! defect, where absorbing layers alone terminate the domain.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::emission::{face_fluxes, reference_power_with, FaceSet, FluxBox};
use crate::error::{Error, Result};
use crate::fdfd::{BoundaryMode, Dipole, Domain, FdfdOperator};
use crate::geometry::CrystalGeometry;
use crate::io::{csv_bytes, sci};
use crate::pwe::Orientation;
use crate::sweeps::map::orientation_str;
use crate::sweeps::study::StudySettings;

/// Factorized defect-free problem at one frequency.
pub struct CrystalProbe {
    pub geometry: CrystalGeometry,
    pub omega: f64,
    pub operator: FdfdOperator,
    pub p0: f64,
    pub rad_box: FluxBox,
}

/// Power balance of one emitter in the defect-free crystal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadSample {
    pub omega: f64,
    pub x0: f64,
    pub y0: f64,
    pub n_d: Orientation,
    pub p0: f64,
    /// Everything leaving the closed box.
    pub p_total: f64,
    /// The y-normal faces only.
    pub p_faces: f64,
    /// P_total / P0; with no guided channel all emitted power is radiation.
    pub fp_rad: f64,
}

impl CrystalProbe {
    pub fn new(geometry: &CrystalGeometry, settings: &StudySettings, omega: f64) -> Result<Self> {
        let geometry = geometry.without_defect();
        let res = settings.resolution;
        let domain = Domain::waveguide(&geometry, res, settings.pml, BoundaryMode::PmlOnly, settings.pad_y)?;
        let operator = FdfdOperator::new(&domain, omega)?;
        let p0 = reference_power_with(omega, geometry.index, res, settings.pml)?;
        let rad_box = FluxBox::radiation(
            &geometry,
            settings.box_length.unwrap_or(geometry.length() - 2.0),
            settings.box_gap,
        )?;
        Ok(Self {
            geometry,
            omega,
            operator,
            p0,
            rad_box,
        })
    }

    pub fn in_dielectric(&self, r0: (f64, f64)) -> bool {
        let n2 = self.geometry.index * self.geometry.index;
        (self.geometry.eps_at(r0.0, r0.1) - n2).abs() < 1e-12
    }

    pub fn emit(&self, r0: (f64, f64), n_d: Orientation) -> Result<RadSample> {
        if !self.in_dielectric(r0) {
            return Err(Error::InvalidInput(format!(
                "r0 = {r0:?} lies inside a hole; emitters sit in the dielectric"
            )));
        }
        let solution = self.operator.solve(&Dipole::unit(r0, n_d), None)?;
        if solution.residual > 1e-10 {
            return Err(Error::Solver {
                unknowns: self.operator.unknowns(),
                detail: format!("relative residual {:.3e}", solution.residual),
            });
        }
        let f = face_fluxes(&solution, &self.rad_box.with_faces(FaceSet::All))?;
        let p_total = f.total();
        if p_total < -1e-6 * self.p0 {
            return Err(Error::NegativePower {
                name: "P_total",
                value: p_total,
            });
        }
        Ok(RadSample {
            omega: self.omega,
            x0: r0.0,
            y0: r0.1,
            n_d,
            p0: self.p0,
            p_total,
            p_faces: f.y_normal(),
            fp_rad: p_total.max(0.0) / self.p0,
        })
    }
}

/// Emitter used by the frequency scan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub position: (f64, f64),
    pub orientation: Orientation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhcSpec {
    /// Map frequency; the centre of the bulk gap when absent.
    pub omega: Option<f64>,
    pub grid: (usize, usize),
    pub orientations: Vec<Orientation>,
    pub scan: Vec<f64>,
    pub probes: Vec<Probe>,
}

impl Default for PhcSpec {
    fn default() -> Self {
        let h = 3f64.sqrt();
        Self {
            omega: None,
            grid: (16, 28),
            orientations: vec![Orientation::X, Orientation::Y],
            scan: (0..=24).map(|k| 0.12 + 0.01 * k as f64).collect(),
            probes: vec![
                Probe {
                    position: (0.5, 0.0),
                    orientation: Orientation::Y,
                },
                Probe {
                    position: (0.5, h / 6.0),
                    orientation: Orientation::X,
                },
            ],
        }
    }
}

pub fn mid_gap(gap: (f64, f64)) -> f64 {
    0.5 * (gap.0 + gap.1)
}

pub type RadRow = (f64, (f64, f64), Orientation, std::result::Result<RadSample, String>);

/// Mid-gap position map and frequency scan of the defect-free crystal.
#[derive(Clone, Debug)]
pub struct PhcDataset {
    pub omega: f64,
    pub map: Vec<RadRow>,
    pub scan: Vec<RadRow>,
}

impl PhcDataset {
    /// Smallest F_p^rad on the map.
    pub fn map_minimum(&self) -> Option<f64> {
        self.map
            .iter()
            .filter_map(|r| r.3.as_ref().ok().map(|s| s.fp_rad))
            .fold(None, |m, v| Some(m.map_or(v, |m: f64| m.min(v))))
    }
}

/// Map positions over one unit cell, as for the waveguide maps.
pub fn phc_positions(grid: (usize, usize)) -> Vec<(f64, f64)> {
    let spec = crate::sweeps::map::MapSpec {
        grid,
        ..Default::default()
    };
    spec.positions().into_iter().map(|(_, _, x, y)| (x, y)).collect()
}

pub fn phc_rad_map(
    spec: &PhcSpec,
    geometry: &CrystalGeometry,
    settings: &StudySettings,
    gap: (f64, f64),
    with_map: bool,
    with_scan: bool,
) -> Result<PhcDataset> {
    let omega = spec.omega.unwrap_or_else(|| mid_gap(gap));
    let mut map = Vec::new();
    if with_map {
        let probe = CrystalProbe::new(geometry, settings, omega)?;
        let jobs: Vec<((f64, f64), Orientation)> = spec
            .orientations
            .iter()
            .flat_map(|&o| phc_positions(spec.grid).into_iter().map(move |r| (r, o)))
            .collect();
        map = jobs
            .par_iter()
            .map(|&(r0, o)| {
                let s = if probe.in_dielectric(r0) {
                    probe.emit(r0, o).map_err(|e| e.to_string())
                } else {
                    Err("hole".to_string())
                };
                (omega, r0, o, s)
            })
            .collect();
    }
    let mut scan = Vec::new();
    if with_scan {
        for &w in &spec.scan {
            let probe = CrystalProbe::new(geometry, settings, w)?;
            for p in &spec.probes {
                let s = probe.emit(p.position, p.orientation).map_err(|e| e.to_string());
                scan.push((w, p.position, p.orientation, s));
            }
        }
    }
    Ok(PhcDataset { omega, map, scan })
}

pub const RAD_HEADER: [&str; 9] = ["omega", "x0", "y0", "n_d", "p0", "p_total", "p_faces", "fp_rad", "status"];

/// Rows of samples; a failed or skipped emitter keeps its position with
/// empty powers.
pub fn rad_csv(rows: &[RadRow]) -> Result<Vec<u8>> {
    let out = rows.iter().map(|(omega, r0, o, s)| match s {
        Ok(s) => vec![
            sci(s.omega),
            sci(s.x0),
            sci(s.y0),
            orientation_str(s.n_d).into(),
            sci(s.p0),
            sci(s.p_total),
            sci(s.p_faces),
            sci(s.fp_rad),
            "ok".into(),
        ],
        Err(e) => vec![
            sci(*omega),
            sci(r0.0),
            sci(r0.1),
            orientation_str(*o).into(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            e.clone(),
        ],
    });
    csv_bytes(&RAD_HEADER, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_w1;

    #[test]
    fn default_probes_sit_in_dielectric() {
        let g = build_w1(1.0, 0.3, 3.5, 4, 33).unwrap().without_defect();
        let n2 = 3.5f64 * 3.5;
        for p in PhcSpec::default().probes {
            assert_eq!(g.eps_at(p.position.0, p.position.1), n2);
        }
        assert!(g.eps_at(0.0, 0.0) < n2);
    }

    #[test]
    fn csv_keeps_failed_rows() {
        let b = rad_csv(&[(0.2, (0.0, 0.0), Orientation::X, Err("hole".into()))]).unwrap();
        let s = String::from_utf8(b).unwrap();
        assert!(s.lines().nth(1).unwrap().ends_with(",hole"));
    }
}
