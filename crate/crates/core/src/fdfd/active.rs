//! Active waveguide terminations: the guided Bloch modes a dipole launches,
//! imposed as Dirichlet E_y on the two termination planes.
//!
//! For a right-going mode F with flux normalization N = ∫Re(E_y H_z*) dy,
//! reciprocity gives the launched amplitudes
//!
//! a₊ = −(n_d·E_F(r0))* I / (2N) towards +x, field a₊·F,
//! a₋ = −(n_d·E_F(r0)) I / (2N) towards −x, field a₋·F̄,
//!
//! where F̄ = (E*, −H*) is the time-reversed partner of F.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::fdfd::domain::TerminationPlanes;
use crate::fdfd::operator::{BoundaryValues, Dipole};
use crate::pwe::{BlochMode, Orientation};

/// One guided mode together with the amplitudes a dipole launches into it.
#[derive(Clone, Debug)]
pub struct GuidedChannel {
    pub mode: BlochMode,
    pub plus: C64,
    pub minus: C64,
}

impl GuidedChannel {
    /// Power carried away on both sides, |a₊|²N/2 + |a₋|²N/2.
    pub fn power(&self) -> f64 {
        0.5 * self.mode.norm * (self.plus.norm_sqr() + self.minus.norm_sqr())
    }
}

pub fn launch_amplitudes(mode: &BlochMode, dipole: &Dipole) -> (C64, C64) {
    let e = mode.e_full_at(dipole.position, dipole.orientation);
    let scale = -dipole.current / (2.0 * mode.norm);
    (e.conj() * scale, e * scale)
}

/// (|A0|, φ) for a unit dipole: |A0| = |E_pg·n_d| / (2N) and
/// φ = arg(−i E_pg·n_d) on the periodic part of the mode.
pub fn bc_amplitude_phase(mode: &BlochMode, r0: (f64, f64), n_d: Orientation) -> (f64, f64) {
    let e = mode.e_periodic_at(r0, n_d);
    let a0 = e.norm() / (2.0 * mode.norm);
    let phi = (C64::new(0.0, -1.0) * e).arg();
    (a0, phi)
}

/// Dirichlet data on both planes for the sum of all launched guided modes.
pub fn synthesize_active_bc(
    modes: &[BlochMode],
    planes: &TerminationPlanes,
    resolution: usize,
    dipole: &Dipole,
) -> Result<(BoundaryValues, Vec<GuidedChannel>)> {
    let first = modes
        .first()
        .ok_or_else(|| Error::InvalidInput("active boundary needs at least one guided mode".into()))?;
    let rows = planes.rows();
    let mut plus = vec![C64::new(0.0, 0.0); rows];
    let mut minus = vec![C64::new(0.0, 0.0); rows];
    let mut channels = Vec::with_capacity(modes.len());
    for mode in modes {
        if mode.resolution != resolution {
            return Err(Error::ResolutionMismatch {
                mode: mode.resolution,
                grid: resolution,
            });
        }
        if (mode.omega - first.omega).abs() > 1e-10 {
            return Err(Error::InvalidInput(format!(
                "guided modes at different frequencies {} and {}",
                mode.omega, first.omega
            )));
        }
        if (mode.ny / 2) as i64 <= planes.j_half {
            return Err(Error::InvalidInput(format!(
                "mode supercell (±{} rows) narrower than the termination planes (±{} rows)",
                mode.ny / 2,
                planes.j_half
            )));
        }
        let (ap, am) = launch_amplitudes(mode, dipole);
        for (r, j) in (-planes.j_half..=planes.j_half).enumerate() {
            plus[r] += ap * mode.ey_full(planes.i_plus, j);
            minus[r] += am * mode.ey_full(planes.i_minus, j).conj();
        }
        channels.push(GuidedChannel {
            mode: mode.clone(),
            plus: ap,
            minus: am,
        });
    }
    Ok((
        BoundaryValues {
            omega: first.omega,
            plus,
            minus,
        },
        channels,
    ))
}
