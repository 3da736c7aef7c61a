//! Standing-wave contrast of the primary guided mode along a solved waveguide.
//!
//! At an E_y column the solution is split into forward and backward parts of
//! the primary mode with the reciprocity form
//! R(A, B) = Σ_j (E_y^A H̄_z^B − E_y^B H̄_z^A) Δ, which vanishes between
//! modes of different wavevector.

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fdfd::operator::FieldSolution;
use crate::pwe::BlochMode;

/// Periods next to the dipole left out of the sampling.
pub const EXCLUDED_PERIODS: i64 = 3;
/// Periods sampled on each side at least.
pub const MIN_SAMPLED_PERIODS: usize = 5;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SectionAmplitudes {
    pub x: f64,
    pub forward: C64,
    pub backward: C64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReflectionReport {
    /// The larger of the two one-sided contrasts.
    pub contrast: f64,
    pub right: f64,
    pub left: f64,
    pub sections: Vec<SectionAmplitudes>,
}

fn hz_bar(get: &dyn Fn(i64, i64) -> C64, i: i64, j: i64) -> C64 {
    0.5 * (get(i, j) + get(i + 1, j))
}

struct Column<'a> {
    ey: Box<dyn Fn(i64, i64) -> C64 + 'a>,
    hz: Box<dyn Fn(i64, i64) -> C64 + 'a>,
}

fn form(a: &Column, b: &Column, i: i64, rows: (i64, i64), h: f64) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for j in rows.0..=rows.1 {
        acc += (a.ey)(i, j) * hz_bar(&*b.hz, i, j) - (b.ey)(i, j) * hz_bar(&*a.hz, i, j);
    }
    acc * h
}

/// (max − min)/(max + min) of the envelope (|a| ± |b|)² over sections one
/// period apart, per side, skipping the periods next to the dipole.
pub fn reflection_metric(solution: &FieldSolution, mode: &BlochMode) -> Result<ReflectionReport> {
    if mode.resolution != solution.resolution {
        return Err(Error::ResolutionMismatch {
            mode: mode.resolution,
            grid: solution.resolution,
        });
    }
    let res = solution.resolution as i64;
    let h = solution.dx();
    let t = solution.pml_thickness as i64;
    let half = (mode.ny / 2) as i64;
    let rows = (
        (-half).max(solution.j_lo + t),
        (half - 1).min(solution.j_hi - t),
    );
    let psi = Column {
        ey: Box::new(|i, j| solution.ey(i, j)),
        hz: Box::new(|i, j| solution.hz(i, j)),
    };
    let fwd = Column {
        ey: Box::new(|i, j| mode.ey_full(i, j)),
        hz: Box::new(|i, j| mode.hz_full(i, j)),
    };
    let bwd = Column {
        ey: Box::new(|i, j| mode.ey_full(i, j).conj()),
        hz: Box::new(|i, j| -mode.hz_full(i, j).conj()),
    };

    let x0 = solution.source.position.0;
    let cell = x0.floor() as i64;
    let i_ref = cell * res + res / 2;
    let (i_min, i_max) = (solution.i_lo + t, solution.i_hi - t - 1);
    let mut sections = Vec::new();
    let mut side = |dir: i64| -> Result<f64> {
        let mut env_max = f64::MIN;
        let mut env_min = f64::MAX;
        let mut count = 0;
        let mut p = EXCLUDED_PERIODS;
        loop {
            let i = i_ref + dir * p * res;
            if i < i_min || i > i_max {
                break;
            }
            let norm = form(&fwd, &bwd, i, rows, h);
            let a = form(&psi, &bwd, i, rows, h) / norm;
            let b = -form(&psi, &fwd, i, rows, h) / norm;
            // a zero column marks a conductor behind a termination plane
            if (solution.ey(i, 0).norm() + solution.hz(i, 0).norm()) == 0.0 {
                break;
            }
            env_max = env_max.max((a.norm() + b.norm()).powi(2));
            env_min = env_min.min((a.norm() - b.norm()).powi(2));
            sections.push(SectionAmplitudes {
                x: (i as f64 + 0.5) * h,
                forward: a,
                backward: b,
            });
            count += 1;
            p += 1;
        }
        if count < MIN_SAMPLED_PERIODS {
            return Err(Error::InvalidInput(format!(
                "waveguide too short: {count} sampled periods on one side, need {MIN_SAMPLED_PERIODS}"
            )));
        }
        Ok((env_max - env_min) / (env_max + env_min).max(1e-300))
    };
    let right = side(1)?;
    let left = side(-1)?;
    Ok(ReflectionReport {
        contrast: right.max(left),
        right,
        left,
        sections,
    })
}
