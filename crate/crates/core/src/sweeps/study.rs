//! One waveguide at one operating point: the guided modes, the factorized
//! frequency-domain operator and the emission pipeline for any dipole.

use serde::{Deserialize, Serialize};

use crate::emission::{
    beta_factor, column_flux, DEFAULT_CLADDING_GAP, poynting_flux, purcell_wg, radiated_power, reference_power_with, BetaInputs,
    EmissionReport, FluxBox,
};
use crate::error::{Error, Result};
use crate::fdfd::{
    bc_amplitude_phase, reflection_metric, synthesize_active_bc, BoundaryMode, Dipole, Domain, FdfdOperator,
    FieldSolution, GuidedChannel, PmlSpec, ReflectionReport,
};
use crate::geometry::CrystalGeometry;
use crate::pwe::{guided_modes_at, BlochMode, GuidedBand, ModeSearchOptions, Orientation, Parity};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudySettings {
    pub resolution: usize,
    pub pml: PmlSpec,
    pub boundary: BoundaryMode,
    /// Cladding between the slab edge and the absorbing layer, in a.
    pub pad_y: f64,
    /// How far the driven planes reach past the slab edge, in a.
    pub plane_pad: f64,
    /// Radiation box length; l − 2a when absent.
    pub box_length: Option<f64>,
    /// Distance from the slab edge to the radiation faces.
    pub box_gap: f64,
    /// Cladding kept on each side of the mode supercell.
    pub mode_pad: f64,
    /// k samples used to bracket guided modes at the operating frequency.
    pub mode_samples: usize,
}

impl Default for StudySettings {
    fn default() -> Self {
        Self {
            resolution: 32,
            pml: PmlSpec::default(),
            boundary: BoundaryMode::Active,
            pad_y: 3.0,
            plane_pad: 1.5,
            box_length: None,
            box_gap: DEFAULT_CLADDING_GAP,
            mode_pad: 2.0,
            mode_samples: 17,
        }
    }
}

/// Primary mode at a target group index plus every guided mode sharing its
/// frequency.
#[derive(Clone, Debug)]
pub struct OperatingPoint {
    pub n_g_target: f64,
    pub primary: BlochMode,
    pub guided: Vec<BlochMode>,
}

impl OperatingPoint {
    pub fn at_group_index(band: &GuidedBand, n_g: f64, samples: usize) -> Result<Self> {
        let primary = band.mode_at_group_index(n_g)?;
        Self::with_primary(band, primary, n_g, samples)
    }

    pub fn with_primary(band: &GuidedBand, primary: BlochMode, n_g_target: f64, samples: usize) -> Result<Self> {
        let mut guided = guided_modes_at(&band.solver, primary.omega, band.gap, band.threshold, samples)?;
        let same = guided
            .iter()
            .position(|m| m.parity == Parity::Even && (m.k - primary.k).abs() < 1e-6);
        if let Some(i) = same {
            guided.remove(i);
        }
        guided.insert(0, primary.clone());
        Ok(Self {
            n_g_target,
            primary,
            guided,
        })
    }

    pub fn omega(&self) -> f64 {
        self.primary.omega
    }
}

/// Everything one dipole solve produces.
#[derive(Clone, Debug)]
pub struct EmissionRun {
    pub report: EmissionReport,
    pub solution: FieldSolution,
    pub channels: Vec<GuidedChannel>,
    pub reflection: Option<ReflectionReport>,
    /// |A0| of the primary mode for this dipole.
    pub a0: f64,
    pub phase: f64,
    /// x-flux through the slab four periods right and left of the dipole,
    /// outward positive.
    pub guided_flux: (f64, f64),
}

pub struct WaveguideStudy {
    pub geometry: CrystalGeometry,
    pub settings: StudySettings,
    pub point: OperatingPoint,
    pub operator: FdfdOperator,
    pub p0: f64,
    pub rad_box: FluxBox,
    pub closed_box: FluxBox,
}

impl WaveguideStudy {
    pub fn new(geometry: &CrystalGeometry, settings: &StudySettings, point: OperatingPoint) -> Result<Self> {
        let res = settings.resolution;
        if point.primary.resolution != res {
            return Err(Error::ResolutionMismatch {
                mode: point.primary.resolution,
                grid: res,
            });
        }
        let domain = Domain::waveguide_with(
            geometry,
            res,
            settings.pml,
            settings.boundary,
            settings.pad_y,
            settings.plane_pad,
        )?;
        let omega = point.omega();
        let operator = FdfdOperator::new(&domain, omega)?;
        let p0 = reference_power_with(omega, geometry.index, res, settings.pml)?;
        let rad_box = FluxBox::radiation(
            geometry,
            settings.box_length.unwrap_or(geometry.length() - 2.0),
            settings.box_gap,
        )?;
        let closed_box = rad_box.with_faces(crate::emission::FaceSet::All);
        Ok(Self {
            geometry: geometry.clone(),
            settings: settings.clone(),
            point,
            operator,
            p0,
            rad_box,
            closed_box,
        })
    }

    /// Whether r0 sits in dielectric; emitters in holes are rejected.
    pub fn in_dielectric(&self, r0: (f64, f64)) -> bool {
        let n2 = self.geometry.index * self.geometry.index;
        (self.geometry.eps_at(r0.0, r0.1) - n2).abs() < 1e-12
    }

    pub fn emit(&self, r0: (f64, f64), n_d: Orientation) -> Result<EmissionRun> {
        if !self.in_dielectric(r0) {
            return Err(Error::InvalidInput(format!(
                "r0 = {r0:?} lies inside a hole; emitters sit in the dielectric"
            )));
        }
        let dipole = Dipole::unit(r0, n_d);
        let res = self.settings.resolution;
        let (values, channels) = match self.settings.boundary {
            BoundaryMode::Active => {
                let planes = self
                    .operator
                    .domain
                    .planes
                    .ok_or_else(|| Error::InvalidInput("active study without termination planes".into()))?;
                let (v, c) = synthesize_active_bc(&self.point.guided, &planes, res, &dipole)?;
                (Some(v), c)
            }
            BoundaryMode::PmlOnly => (None, Vec::new()),
        };
        let solution = self.operator.solve(&dipole, values.as_ref())?;
        if solution.residual > 1e-10 {
            return Err(Error::Solver {
                unknowns: self.operator.unknowns(),
                detail: format!("relative residual {:.3e}", solution.residual),
            });
        }
        let p_total = poynting_flux(&solution, &self.closed_box)?;
        let p_rad = radiated_power(&solution, &self.rad_box)?;
        let fp_wg = purcell_wg(&self.point.primary, r0, n_d, self.p0);
        let fp_guided = self.point.guided.iter().map(|m| purcell_wg(m, r0, n_d, self.p0)).sum();
        let report = beta_factor(&BetaInputs {
            omega: self.point.omega(),
            n_g: self.point.primary.n_g,
            r0,
            n_d,
            p_total,
            p_rad,
            p0: self.p0,
            fp_wg,
            fp_guided,
        })?;
        let reflection = reflection_metric(&solution, &self.point.primary).ok();
        let (a0, phase) = bc_amplitude_phase(&self.point.primary, r0, n_d);
        let guided_flux = self.guided_flux(&solution, 4);
        Ok(EmissionRun {
            report,
            solution,
            channels,
            reflection,
            a0,
            phase,
            guided_flux,
        })
    }

    /// Outward x-flux across the radiation box height, `periods` periods to
    /// either side of the dipole cell.
    pub fn guided_flux(&self, solution: &FieldSolution, periods: i64) -> (f64, f64) {
        let res = self.settings.resolution as i64;
        let (_, _, j0, j1) = self.rad_box.nodes(self.settings.resolution);
        let cell = solution.source.position.0.floor() as i64;
        let i_ref = cell * res + res / 2;
        (
            column_flux(solution, i_ref + periods * res, j0, j1),
            -column_flux(solution, i_ref - periods * res, j0, j1),
        )
    }
}

/// Traces the primary band of `geometry` on the study grid.
pub fn trace_band(
    geometry: &CrystalGeometry,
    gap: (f64, f64),
    resolution: usize,
    pad: f64,
) -> Result<GuidedBand> {
    GuidedBand::trace(
        geometry,
        gap,
        &ModeSearchOptions {
            resolution,
            pad,
            ..ModeSearchOptions::default()
        },
    )
}
