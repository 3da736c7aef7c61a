//! Cross-checks between independent routes to the same quantity.

use pcwbeta::geometry::build_w1;
use pcwbeta::pwe::{bulk_gap, CellKind, GuidedBand, ModeSearchOptions, Parity, PweSolver};
use pcwbeta::sweeps::phc::{mid_gap, CrystalProbe};
use pcwbeta::sweeps::StudySettings;

const GAP: (f64, f64) = (0.20448, 0.27021);

#[test]
fn plane_wave_gap_matches_frozen_bounds() {
    let g = build_w1(1.0, 0.3, 3.5, 4, 33).unwrap();
    let gap = bulk_gap(&g, 15, 9).unwrap().unwrap();
    assert!((gap.0 / GAP.0 - 1.0).abs() < 5e-3, "{gap:?}");
    assert!((gap.1 / GAP.1 - 1.0).abs() < 5e-3, "{gap:?}");
}

/// The frequency-domain solver sees the plane-wave stop band: emission from
/// the bulk crystal collapses inside it and is of order one below it.
#[test]
fn stop_band_seen_by_frequency_domain_solver() {
    let g = build_w1(1.0, 0.3, 3.5, 4, 17).unwrap();
    let settings = StudySettings {
        resolution: 16,
        ..StudySettings::default()
    };
    let r0 = (0.5, 0.0);
    let inside = CrystalProbe::new(&g, &settings, mid_gap(GAP)).unwrap();
    let below = CrystalProbe::new(&g, &settings, 0.16).unwrap();
    let f_in = inside.emit(r0, pcwbeta::pwe::Orientation::Y).unwrap().fp_rad;
    let f_out = below.emit(r0, pcwbeta::pwe::Orientation::Y).unwrap().fp_rad;
    assert!(f_in < 0.01, "in gap {f_in}");
    assert!(f_out > 0.5, "below gap {f_out}");
}

/// Guided frequencies from the finite-difference supercell and from plane
/// waves agree.
#[test]
fn guided_band_agrees_between_discretizations() {
    let g = build_w1(1.0, 0.3, 3.5, 4, 33).unwrap();
    let band = GuidedBand::trace(
        &g,
        GAP,
        &ModeSearchOptions {
            resolution: 24,
            pad: 2.0,
            ..ModeSearchOptions::default()
        },
    )
    .unwrap();
    let pwe = PweSolver::new(&g, CellKind::Waveguide { pad: 2.0 }, 15).unwrap();
    for k in [0.3, 0.4, 0.45] {
        let w_grid = band.omega_at(k).unwrap();
        let w_pwe = pwe
            .solve_k(k, 30)
            .unwrap()
            .into_iter()
            .filter(|s| s.parity == Some(Parity::Even))
            .map(|s| s.omega)
            .min_by(|a, b| (a - w_grid).abs().partial_cmp(&(b - w_grid).abs()).unwrap())
            .unwrap();
        assert!((w_pwe / w_grid - 1.0).abs() < 0.02, "k {k}: grid {w_grid} vs plane waves {w_pwe}");
    }
}

#[test]
fn group_index_three_ways() {
    let g = build_w1(1.0, 0.3, 3.5, 4, 33).unwrap();
    let band = GuidedBand::trace(
        &g,
        GAP,
        &ModeSearchOptions {
            resolution: 16,
            pad: 2.0,
            ..ModeSearchOptions::default()
        },
    )
    .unwrap();
    for k in [0.35, 0.42, 0.46] {
        let hf = band.group_index_at(k).unwrap();
        let fd = band.group_index_fd_at(k).unwrap();
        let ev = band.mode_at_k(k).unwrap().energy_velocity_group_index();
        assert!((fd / hf - 1.0).abs() < 1e-3, "k {k}: {hf} vs differences {fd}");
        assert!((ev / hf - 1.0).abs() < 1e-2, "k {k}: {hf} vs energy velocity {ev}");
    }
}
