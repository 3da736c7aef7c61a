//! Convergence sweeps: one quantity of the antinode emitter against one
//! numerical parameter.

use serde::{Deserialize, Serialize};

use crate::emission::{radiated_power, FluxBox};
use crate::error::{Error, Result};
use crate::geometry::CrystalGeometry;
use crate::io::{csv_bytes, sci};
use crate::pwe::{GuidedBand, Orientation};
use crate::sweeps::study::{trace_band, OperatingPoint, StudySettings, WaveguideStudy};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// Radiation box length l_b.
    LBox,
    /// Distance of the radiation faces from the slab edge.
    WBox,
    /// Waveguide length l in periods.
    L,
    /// Rows of holes on each side of the defect.
    W,
    Resolution,
    /// Absorbing layer thickness in cells.
    WPml,
}

impl SweepParameter {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParameter::LBox => "l_b",
            SweepParameter::WBox => "w_b",
            SweepParameter::L => "l",
            SweepParameter::W => "w",
            SweepParameter::Resolution => "resolution",
            SweepParameter::WPml => "w_pml",
        }
    }

    /// Whether every value can reuse one solution.
    fn box_only(self) -> bool {
        matches!(self, SweepParameter::LBox | SweepParameter::WBox)
    }
}

impl std::str::FromStr for SweepParameter {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "l_b" => SweepParameter::LBox,
            "w_b" => SweepParameter::WBox,
            "l" => SweepParameter::L,
            "w" => SweepParameter::W,
            "resolution" => SweepParameter::Resolution,
            "w_pml" => SweepParameter::WPml,
            other => return Err(Error::Config(format!("unknown sweep parameter '{other}'"))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    FpRad,
    Beta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    pub target: Target,
    pub n_g_target: f64,
    pub orientation: Orientation,
    /// Emitter position; the on-axis antinode of the primary mode when absent.
    pub position: Option<(f64, f64)>,
    /// Relative spread below which the tail counts as converged.
    pub tolerance: f64,
}

impl Default for ConvergenceSpec {
    fn default() -> Self {
        Self {
            parameter: SweepParameter::LBox,
            values: vec![7.0, 11.0, 15.0, 19.0, 23.0, 27.0, 31.0],
            target: Target::FpRad,
            n_g_target: 58.0,
            orientation: Orientation::Y,
            position: None,
            tolerance: 0.05,
        }
    }
}

impl ConvergenceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.len() < 2 {
            return Err(Error::Config("a convergence sweep needs at least two values".into()));
        }
        if self.values.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config(format!(
                "sweep values must increase strictly, got {:?}",
                self.values
            )));
        }
        let integral = matches!(
            self.parameter,
            SweepParameter::L | SweepParameter::W | SweepParameter::Resolution | SweepParameter::WPml
        );
        if integral && self.values.iter().any(|v| v.fract() != 0.0 || *v < 1.0) {
            return Err(Error::Config(format!(
                "{} takes positive integer values",
                self.parameter.as_str()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePoint {
    pub value: f64,
    pub omega: f64,
    pub n_g: f64,
    pub fp_wg: f64,
    pub fp_rad: f64,
    pub beta: f64,
    pub p_rad: f64,
    pub p_total: f64,
    pub target: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub parameter: SweepParameter,
    pub target: Target,
    pub points: Vec<ConvergencePoint>,
    /// Smallest value from which the remaining targets stay within tolerance.
    pub plateau_from: Option<f64>,
    /// Relative spread (max − min)/|mean| of the plateau, or of the last
    /// two points when there is none.
    pub fluctuation: f64,
}

impl ConvergenceReport {
    pub fn converged(&self) -> bool {
        self.plateau_from.is_some()
    }
}

/// Relative spread of a set of values.
pub fn spread(values: &[f64]) -> f64 {
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if mean == 0.0 {
        if hi == lo {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (hi - lo) / mean.abs()
    }
}

/// First index whose tail (at least two points) spreads less than `tol`.
pub fn plateau_start(values: &[f64], tol: f64) -> Option<usize> {
    if values.len() < 2 {
        return None;
    }
    (0..values.len() - 1).find(|&i| spread(&values[i..]) < tol)
}

pub fn report_from(parameter: SweepParameter, target: Target, points: Vec<ConvergencePoint>, tol: f64) -> ConvergenceReport {
    let t: Vec<f64> = points.iter().map(|p| p.target).collect();
    let start = plateau_start(&t, tol);
    let fluctuation = match start {
        Some(i) => spread(&t[i..]),
        None => spread(&t[t.len().saturating_sub(2)..]),
    };
    ConvergenceReport {
        parameter,
        target,
        plateau_from: start.map(|i| points[i].value),
        fluctuation,
        points,
    }
}

pub fn convergence_sweep(
    spec: &ConvergenceSpec,
    geometry: &CrystalGeometry,
    settings: &StudySettings,
    gap: (f64, f64),
) -> Result<ConvergenceReport> {
    spec.validate()?;
    let mut band_cache: Option<(usize, usize, GuidedBand)> = None;
    let mut band_for = |g: &CrystalGeometry, res: usize| -> Result<GuidedBand> {
        if let Some((m, r, b)) = &band_cache {
            if *m == g.rows_half && *r == res {
                return Ok(b.clone());
            }
        }
        let b = trace_band(g, gap, res, settings.mode_pad)?;
        band_cache = Some((g.rows_half, res, b.clone()));
        Ok(b)
    };
    let target_of = |p: &ConvergencePoint| match spec.target {
        Target::FpRad => p.fp_rad,
        Target::Beta => p.beta,
    };

    let mut points = Vec::with_capacity(spec.values.len());
    if spec.parameter.box_only() {
        let band = band_for(geometry, settings.resolution)?;
        let point = OperatingPoint::at_group_index(&band, spec.n_g_target, settings.mode_samples)?;
        let r0 = spec.position.unwrap_or_else(|| point.primary.axis_antinode());
        let study = WaveguideStudy::new(geometry, settings, point)?;
        let run = study.emit(r0, spec.orientation)?;
        let rep = &run.report;
        for &v in &spec.values {
            let (l_b, gap_b) = match spec.parameter {
                SweepParameter::LBox => (v, settings.box_gap),
                _ => (settings.box_length.unwrap_or(geometry.length() - 2.0), v),
            };
            let rad_box = FluxBox::radiation(geometry, l_b, gap_b)?;
            let p_rad = radiated_power(&run.solution, &rad_box)?;
            let fp_rad = p_rad.max(0.0) / rep.p0;
            let mut p = ConvergencePoint {
                value: v,
                omega: rep.omega,
                n_g: rep.n_g,
                fp_wg: rep.fp_wg,
                fp_rad,
                beta: if rep.fp_wg + fp_rad > 0.0 { rep.fp_wg / (rep.fp_wg + fp_rad) } else { 0.0 },
                p_rad,
                p_total: rep.p_total,
                target: 0.0,
            };
            p.target = target_of(&p);
            points.push(p);
        }
    } else {
        for &v in &spec.values {
            let mut g = geometry.clone();
            let mut s = settings.clone();
            match spec.parameter {
                SweepParameter::L => g.periods = v as usize,
                SweepParameter::W => g.rows_half = v as usize,
                SweepParameter::Resolution => s.resolution = v as usize,
                SweepParameter::WPml => s.pml.thickness = v as usize,
                SweepParameter::LBox | SweepParameter::WBox => unreachable!(),
            }
            g.validate()?;
            let band = band_for(&g, s.resolution)?;
            let point = OperatingPoint::at_group_index(&band, spec.n_g_target, s.mode_samples)?;
            let r0 = spec.position.unwrap_or_else(|| point.primary.axis_antinode());
            let study = WaveguideStudy::new(&g, &s, point)?;
            let rep = study.emit(r0, spec.orientation)?.report;
            let mut p = ConvergencePoint {
                value: v,
                omega: rep.omega,
                n_g: rep.n_g,
                fp_wg: rep.fp_wg,
                fp_rad: rep.fp_rad,
                beta: rep.beta,
                p_rad: rep.p_rad,
                p_total: rep.p_total,
                target: 0.0,
            };
            p.target = target_of(&p);
            points.push(p);
        }
    }
    Ok(report_from(spec.parameter, spec.target, points, spec.tolerance))
}

pub const CONVERGENCE_HEADER: [&str; 10] = [
    "value", "omega", "n_g", "fp_wg", "fp_rad", "beta", "p_rad", "p_total", "target", "ratio_to_last",
];

/// Table of the sweep; `ratio_to_last` divides by the target at the largest value.
pub fn convergence_csv(report: &ConvergenceReport) -> Result<Vec<u8>> {
    let last = report.points.last().map(|p| p.target).unwrap_or(1.0);
    let rows = report.points.iter().map(|p| {
        vec![
            sci(p.value),
            sci(p.omega),
            sci(p.n_g),
            sci(p.fp_wg),
            sci(p.fp_rad),
            sci(p.beta),
            sci(p.p_rad),
            sci(p.p_total),
            sci(p.target),
            sci(if last != 0.0 { p.target / last } else { f64::NAN }),
        ]
    });
    csv_bytes(&CONVERGENCE_HEADER, rows)
}
