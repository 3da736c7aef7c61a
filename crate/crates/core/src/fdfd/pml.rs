//! Stretched-coordinate perfectly matched layers.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PmlSpec {
    /// Layer thickness in grid cells on each side.
    pub thickness: usize,
    /// Polynomial grading order of σ.
    pub order: f64,
    /// Target normal-incidence reflection of the ideal continuous layer.
    pub r0: f64,
}

impl Default for PmlSpec {
    fn default() -> Self {
        Self {
            thickness: 32,
            order: 3.0,
            r0: 1e-8,
        }
    }
}

impl PmlSpec {
    pub fn none() -> Self {
        Self {
            thickness: 0,
            ..Self::default()
        }
    }

    /// σ_max = −(m+1) ln R0 / (2 n d) for a layer of thickness d in a medium of index n.
    pub fn sigma_max(&self, depth: f64, index: f64) -> f64 {
        if depth <= 0.0 {
            return 0.0;
        }
        -(self.order + 1.0) * self.r0.ln() / (2.0 * index * depth)
    }
}

/// Stretch factors along one axis of a grid with `n` cells whose outer
/// `thickness` cells on both ends are absorbing.
#[derive(Clone, Debug)]
pub struct StretchProfile {
    /// At nodes 0..=n.
    pub nodes: Vec<C64>,
    /// At cell midpoints 0..n.
    pub halves: Vec<C64>,
}

impl StretchProfile {
    /// `omega` is the angular frequency (c = a = 1), `h` the grid spacing.
    pub fn new(spec: &PmlSpec, n: usize, h: f64, omega: f64, index: f64) -> Self {
        let t = spec.thickness.min(n / 2);
        let depth = t as f64 * h;
        let smax = spec.sigma_max(depth, index);
        let s_at = |u: f64| -> C64 {
            // u: distance from the domain start in cells
            if t == 0 {
                return C64::new(1.0, 0.0);
            }
            let d = if u < t as f64 {
                t as f64 - u
            } else if u > (n - t) as f64 {
                u - (n - t) as f64
            } else {
                0.0
            };
            let sigma = smax * (d / t as f64).powf(spec.order);
            C64::new(1.0, sigma / omega)
        };
        Self {
            nodes: (0..=n).map(|i| s_at(i as f64)).collect(),
            halves: (0..n).map(|i| s_at(i as f64 + 0.5)).collect(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nodes: vec![C64::new(1.0, 0.0); n + 1],
            halves: vec![C64::new(1.0, 0.0); n],
        }
    }
}
