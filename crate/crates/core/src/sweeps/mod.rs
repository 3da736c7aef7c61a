//! Studies built from the solvers: operating points, position maps,
//! convergence sweeps and the defect-free crystal.

pub mod convergence;
pub mod map;
pub mod phc;
pub mod study;

pub use convergence::{convergence_sweep, ConvergenceReport, ConvergenceSpec, SweepParameter, Target};
pub use map::{map_operating_point, CellRecord, MapSpec, Quantity};
pub use phc::{phc_rad_map, CrystalProbe, PhcDataset, PhcSpec};
pub use study::{trace_band, EmissionRun, OperatingPoint, StudySettings, WaveguideStudy};
