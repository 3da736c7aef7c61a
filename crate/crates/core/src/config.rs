//! Run configuration: a TOML manifest with geometry, solver, study and
//! output blocks. Every key has a default and unknown keys are rejected.
//!
//! Precedence: built-in defaults, then the file, then command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fdfd::{BoundaryMode, PmlSpec};
use crate::geometry::{CrystalGeometry, Defect};
use crate::sweeps::{ConvergenceSpec, MapSpec, PhcSpec, StudySettings};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    W1,
    /// Triangular lattice without the missing row.
    Crystal,
    /// Uniform medium of index `n`.
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    pub structure: Structure,
    pub a: f64,
    pub r: f64,
    pub n: f64,
    pub m: usize,
    pub l_periods: usize,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            structure: Structure::W1,
            a: 1.0,
            r: 0.3,
            n: 3.5,
            m: 4,
            l_periods: 33,
        }
    }
}

impl GeometryConfig {
    pub fn build(&self) -> Result<CrystalGeometry> {
        match self.structure {
            Structure::W1 => CrystalGeometry::triangular(self.a, self.r, self.n, self.m, self.l_periods, Defect::W1),
            Structure::Crystal => {
                CrystalGeometry::triangular(self.a, self.r, self.n, self.m, self.l_periods, Defect::None)
            }
            Structure::Uniform => CrystalGeometry::homogeneous(self.n),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Grid cells per a.
    pub resolution: usize,
    pub pml: PmlSpec,
    pub boundary_mode: BoundaryMode,
    /// Cladding between the slab edge and the absorbing layer, in a.
    pub pad_y: f64,
    /// Reach of the driven planes past the slab edge, in a.
    pub plane_pad: f64,
    /// Cladding on each side of the guided-mode supercell, in a.
    pub mode_pad: f64,
    /// Radiation box length; l − 2a when absent.
    pub box_length: Option<f64>,
    /// Distance of the radiation faces from the slab edge, in a.
    pub box_gap: f64,
    /// k samples used to find every guided mode at a frequency.
    pub mode_samples: usize,
    /// Plane waves per direction for band diagrams and the bulk gap.
    pub pwe_cutoff: usize,
    /// Bulk TE gap (a/λ); computed by plane waves when absent.
    pub gap: Option<(f64, f64)>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let s = StudySettings::default();
        Self {
            resolution: s.resolution,
            pml: s.pml,
            boundary_mode: s.boundary,
            pad_y: s.pad_y,
            plane_pad: s.plane_pad,
            mode_pad: s.mode_pad,
            box_length: s.box_length,
            box_gap: s.box_gap,
            mode_samples: s.mode_samples,
            pwe_cutoff: 15,
            gap: None,
        }
    }
}

impl SolverConfig {
    pub fn settings(&self) -> StudySettings {
        StudySettings {
            resolution: self.resolution,
            pml: self.pml,
            boundary: self.boundary_mode,
            pad_y: self.pad_y,
            plane_pad: self.plane_pad,
            box_length: self.box_length,
            box_gap: self.box_gap,
            mode_samples: self.mode_samples,
            mode_pad: self.mode_pad,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmitConfig {
    pub n_g_target: f64,
    /// Emitter position; the on-axis antinode when absent.
    pub position: Option<(f64, f64)>,
    pub orientation: crate::pwe::Orientation,
}

impl Default for EmitConfig {
    fn default() -> Self {
        Self {
            n_g_target: 5.0,
            position: None,
            orientation: crate::pwe::Orientation::Y,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyConfig {
    /// Bloch wavenumbers (2π/a) of the band diagram.
    pub k_list: Vec<f64>,
    pub bands: usize,
    pub ng_targets: Vec<f64>,
    pub emit: EmitConfig,
    pub map: MapSpec,
    pub convergence: ConvergenceSpec,
    pub phc: PhcSpec,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            k_list: (0..=20).map(|i| 0.025 * i as f64).collect(),
            bands: 12,
            ng_targets: vec![5.0, 20.0, 58.0, 120.0],
            emit: EmitConfig::default(),
            map: MapSpec::default(),
            convergence: ConvergenceSpec::default(),
            phc: PhcSpec::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
    /// Any of "csv", "pnm".
    pub formats: Vec<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            formats: vec!["csv".into(), "pnm".into()],
        }
    }
}

impl OutputConfig {
    pub fn wants(&self, format: &str) -> bool {
        self.formats.iter().any(|f| f == format)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub solver: SolverConfig,
    pub study: StudyConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.build()?;
        if self.solver.resolution < crate::geometry::MIN_RESOLUTION {
            return Err(Error::Config(format!(
                "resolution {} is below {}",
                self.solver.resolution,
                crate::geometry::MIN_RESOLUTION
            )));
        }
        for f in &self.output.formats {
            if f != "csv" && f != "pnm" {
                return Err(Error::Config(format!("unknown output format '{f}'")));
            }
        }
        self.study.map.validate()?;
        self.study.convergence.validate()?;
        Ok(())
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest.iter().take(8).map(|b| format!("{b:02x}")).collect())
    }
}
