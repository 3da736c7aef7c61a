//! Frequency-domain solver on the staggered grid: domains, absorbing layers,
//! the factorized operator, active waveguide terminations and field dumps.

pub mod active;
pub mod domain;
pub mod dump;
pub mod operator;
pub mod pml;
pub mod reflection;

pub use active::{bc_amplitude_phase, launch_amplitudes, synthesize_active_bc, GuidedChannel};
pub use domain::{BoundaryMode, Domain, EdgeKind, TerminationPlanes};
pub use operator::{BoundaryValues, Dipole, FdfdOperator, FdfdProblem, FieldSolution, LinearSystem};
pub use pml::{PmlSpec, StretchProfile};
pub use reflection::{reflection_metric, ReflectionReport};
