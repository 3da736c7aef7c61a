//! Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
//! fails. Criteria run one after another.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pcwbeta::emission::{
    analytic_reference_power, poynting_flux, purcell_wg, reference_power_with, FluxBox,
};
use pcwbeta::fdfd::{BoundaryMode, Dipole, Domain, FdfdOperator, PmlSpec};
use pcwbeta::geometry::{build_w1, CrystalGeometry};
use pcwbeta::pwe::{CellKind, GuidedBand, Orientation, PweSolver};
use pcwbeta::sweeps::map::{mirror_asymmetry, raster, CellRecord, CellStatus, RecordLog};
use pcwbeta::sweeps::phc::{mid_gap, phc_rad_map, PhcSpec};
use pcwbeta::sweeps::{
    convergence_sweep, map_operating_point, trace_band, ConvergenceSpec, MapSpec, OperatingPoint, Quantity,
    StudySettings, SweepParameter, Target, WaveguideStudy,
};

const GAP: (f64, f64) = (0.20448, 0.27021);
const NG: [f64; 4] = [5.0, 20.0, 58.0, 120.0];

fn w1() -> CrystalGeometry {
    build_w1(1.0, 0.3, 3.5, 4, 33).unwrap()
}

fn settings(resolution: usize, boundary: BoundaryMode) -> StudySettings {
    StudySettings {
        resolution,
        boundary,
        ..StudySettings::default()
    }
}

fn criterion_1() -> (bool, String) {
    let n = 3.5;
    let g = CrystalGeometry::homogeneous(n).unwrap();
    let pad = 0.5;
    let s = PweSolver::new(&g, CellKind::Waveguide { pad }, 15).unwrap();
    let ly = 2.0 * (0.5 + pad);
    let mut worst: f64 = 0.0;
    for i in 0..=10 {
        let k = 0.05 * i as f64;
        let states = s.solve_k(k, 4).unwrap();
        let mut exact: Vec<f64> = Vec::new();
        for p in -2i32..=2 {
            for q in -2i32..=2 {
                let kx = k + p as f64;
                let ky = q as f64 / ly;
                exact.push((kx * kx + ky * ky).sqrt() / n);
            }
        }
        exact.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (st, ex) in states.iter().zip(&exact) {
            let scale = ex.max(1e-3);
            worst = worst.max((st.omega - ex).abs() / scale);
        }
    }
    (worst <= 1e-8, format!("max relative error of the four lowest bands {worst:.2e}"))
}

fn criterion_2() -> (bool, String) {
    let (n, res, omega) = (3.5, 32, 0.25);
    let p0 = reference_power_with(omega, n, res, PmlSpec::default()).unwrap();
    let dip = Dipole::unit((0.01, 0.01), Orientation::Y);
    let (ie, je) = dip.edge(res);
    let d = Domain::homogeneous(n, res, (Orientation::Y, ie, je), 48, PmlSpec::default()).unwrap();
    let op = FdfdOperator::new(&d, omega).unwrap();
    let sol = op.solve(&dip, None).unwrap();
    let inner = poynting_flux(&sol, &FluxBox::closed(-0.25, 0.25, -0.25, 0.25)).unwrap();
    let outer = poynting_flux(&sol, &FluxBox::closed(-1.2, 1.25, -1.1, 1.2)).unwrap();
    let nested = (inner - outer).abs() / outer;
    let analytic = (p0 / analytic_reference_power(omega) - 1.0).abs();
    (
        nested < 0.01 && analytic < 0.01,
        format!("nested boxes differ by {nested:.2e}; P0 vs line-dipole law {analytic:.2e}"),
    )
}

fn criterion_3() -> (bool, String) {
    let g = w1();
    let res = 20;
    let pml = PmlSpec {
        thickness: 16,
        ..PmlSpec::default()
    };
    let d = Domain::from_nodes(&g, res, (-100, 100, -100, 100), pml, (3.5, 1.0), None).unwrap();
    let op = FdfdOperator::new(&d, 0.23).unwrap();
    let mut worst: f64 = 0.0;
    let pairs = [
        (Dipole::unit((0.52, 0.1), Orientation::Y), Dipole::unit((-1.7, 1.45), Orientation::X)),
        (Dipole::unit((0.52, 0.1), Orientation::Y), Dipole::unit((2.3, -0.95), Orientation::Y)),
        (Dipole::unit((-0.4, 0.6), Orientation::X), Dipole::unit((1.1, 2.05), Orientation::X)),
    ];
    for (p, q) in pairs {
        let sp = op.solve(&p, None).unwrap();
        let sq = op.solve(&q, None).unwrap();
        let (qi, qj) = q.edge(res);
        let (pi, pj) = p.edge(res);
        let at = |s: &pcwbeta::fdfd::FieldSolution, o: Orientation, i: i64, j: i64| match o {
            Orientation::X => s.ex(i, j),
            Orientation::Y => s.ey(i, j),
        };
        let a = at(&sp, q.orientation, qi, qj);
        let b = at(&sq, p.orientation, pi, pj);
        worst = worst.max((a - b).norm() / a.norm().max(b.norm()));
    }
    (
        worst <= 1e-6,
        format!("{} unknowns, worst relative asymmetry {worst:.2e}", op.unknowns()),
    )
}

/// The n_g = 58 operating point at 32 cells/a.
struct Ng58 {
    band: GuidedBand,
    active: WaveguideStudy,
    r0: (f64, f64),
}

fn criteria_4_5(s: &Ng58) -> ((bool, String), (bool, String)) {
    let run = s.active.emit(s.r0, Orientation::Y).unwrap();
    let active = run.reflection.as_ref().map(|r| r.contrast).unwrap_or(f64::INFINITY);
    let point = s.active.point.clone();
    let pml_only = WaveguideStudy::new(&w1(), &settings(32, BoundaryMode::PmlOnly), point).unwrap();
    let pml_run = pml_only.emit(s.r0, Orientation::Y).unwrap();
    let reference = pml_run.reflection.as_ref().map(|r| r.contrast).unwrap_or(f64::NAN);
    let c4 = (
        active < 0.1 && active < reference,
        format!(
            "n_g {:.2}: contrast {active:.2e} active vs {reference:.2e} pml_only",
            s.active.point.primary.n_g
        ),
    );
    let per_side = 0.5 * run.a0 * run.a0 * s.active.point.primary.norm;
    let (right, left) = run.guided_flux;
    let err = ((right - per_side) / per_side).abs().max(((left - per_side) / per_side).abs());
    let c5 = (
        err < 0.02,
        format!("guided flux {right:.5e} / {left:.5e} vs |A0|^2 N/2 = {per_side:.5e} (error {err:.2e})"),
    );
    (c4, c5)
}

fn criterion_6(s: &Ng58) -> (bool, String) {
    let mut ratios = Vec::new();
    for ng in NG {
        let m = s.band.mode_at_group_index(ng).unwrap();
        let p0 = reference_power_with(m.omega, 3.5, 32, PmlSpec::default()).unwrap();
        let f = purcell_wg(&m, m.axis_antinode(), Orientation::Y, p0);
        ratios.push((m.n_g, f, f / m.n_g));
    }
    let mean = ratios.iter().map(|r| r.2).sum::<f64>() / ratios.len() as f64;
    let worst = ratios.iter().map(|r| (r.2 / mean - 1.0).abs()).fold(0.0, f64::max);
    let list: Vec<String> = ratios.iter().map(|r| format!("{:.0}:{:.3}", r.0, r.1)).collect();
    (
        worst <= 0.25,
        format!("F_wg at n_g {} ; F_wg/n_g within {:.1}% of its mean", list.join(" "), 100.0 * worst),
    )
}

fn beta_map(s: &Ng58) -> (MapSpec, Vec<CellRecord>) {
    let spec = MapSpec {
        quantity: Quantity::Beta,
        grid: (8, 14),
        ng_targets: vec![58.0],
        ..MapSpec::default()
    };
    let log = RecordLog::open(None).unwrap();
    let recs = map_operating_point(&spec, &s.active, 58.0, &[], &log).unwrap();
    (spec, recs)
}

fn criterion_7(s: &Ng58, spec: &MapSpec, recs: &[CellRecord]) -> (bool, String) {
    let g = w1();
    let mut betas = Vec::new();
    for ng in NG {
        let beta = if ng == 58.0 {
            s.active.emit(s.r0, Orientation::Y).unwrap().report.beta
        } else {
            let point = OperatingPoint::at_group_index(&s.band, ng, s.active.settings.mode_samples).unwrap();
            let r0 = point.primary.axis_antinode();
            let study = WaveguideStudy::new(&g, &s.active.settings, point).unwrap();
            study.emit(r0, Orientation::Y).unwrap().report.beta
        };
        betas.push(beta);
    }
    let missing = recs.iter().filter(|r| r.status == CellStatus::Failed).count();
    let map_min = recs
        .iter()
        .filter(|r| r.y.abs() <= 1.0)
        .filter_map(|r| r.report.as_ref().map(|p| p.beta))
        .fold(f64::INFINITY, f64::min);
    let asym = [Orientation::X, Orientation::Y]
        .iter()
        .map(|&o| mirror_asymmetry(spec, &raster(spec, recs, 58.0, o)))
        .fold(0.0, f64::max);
    let monotone = betas.windows(2).all(|w| w[1] > w[0]);
    let list: Vec<String> = betas.iter().map(|b| format!("{b:.7}")).collect();
    (
        monotone && map_min >= 0.9 && missing == 0,
        format!(
            "antinode beta {} ; map min beta (|y|<=a) {map_min:.4}, failed cells {missing}, mirror asymmetry {asym:.1e}",
            list.join(" < ")
        ),
    )
}

fn criterion_8(s: &Ng58, recs: &[CellRecord]) -> (bool, String) {
    let g = w1();
    let pml_only = settings(s.active.settings.resolution, BoundaryMode::PmlOnly);
    let mut spec = PhcSpec {
        grid: (8, 14),
        scan: vec![0.12, 0.15, 0.18, 0.22, 0.2373, 0.255, 0.30, 0.33],
        ..PhcSpec::default()
    };
    let mid = phc_rad_map(&spec, &g, &pml_only, GAP, true, true).unwrap();
    let best_mid = mid.map_minimum().unwrap_or(f64::NAN);
    let inside = |w: f64| w > GAP.0 && w < GAP.1;
    let mut in_gap: f64 = 0.0;
    let mut below_gap = f64::INFINITY;
    for p in &spec.probes {
        let rows: Vec<(f64, f64)> = mid
            .scan
            .iter()
            .filter(|r| r.1 == p.position && r.2 == p.orientation)
            .filter_map(|r| r.3.as_ref().ok().map(|s| (r.0, s.fp_rad)))
            .collect();
        in_gap = in_gap.max(rows.iter().filter(|r| inside(r.0)).map(|r| r.1).fold(0.0, f64::max));
        below_gap = below_gap.min(rows.iter().filter(|r| r.0 < GAP.0).map(|r| r.1).fold(0.0, f64::max));
    }

    // W1 against the defect-free crystal at the W1 operating frequency
    let omega = s.active.point.omega();
    let w1_min = recs
        .iter()
        .filter_map(|r| r.report.as_ref().map(|p| p.fp_rad))
        .fold(f64::INFINITY, f64::min);
    spec.omega = Some(omega);
    let same = phc_rad_map(&spec, &g, &pml_only, GAP, true, false).unwrap();
    let phc_min = same.map_minimum().unwrap_or(f64::NAN);
    let ratio = (w1_min / phc_min).max(phc_min / w1_min);
    (
        best_mid < 0.1 && in_gap < 0.1 && below_gap >= 0.5 && ratio <= 2.0,
        format!(
            "defect-free min F_rad {best_mid:.2e} at mid-gap {:.4}; scan max in gap {in_gap:.2e}, below gap {below_gap:.2}; \
             minima at omega {omega:.4}: W1 {w1_min:.2e} vs defect-free {phc_min:.2e} (ratio {ratio:.2})",
            mid_gap(GAP)
        ),
    )
}

fn criterion_9(settings: &StudySettings, r0: (f64, f64)) -> (bool, String) {
    let g = w1();
    let spec = ConvergenceSpec {
        parameter: SweepParameter::LBox,
        values: vec![7.0, 11.0, 15.0, 19.0, 23.0, 27.0, 31.0],
        target: Target::FpRad,
        n_g_target: 58.0,
        position: Some(r0),
        ..ConvergenceSpec::default()
    };
    let boxes = convergence_sweep(&spec, &g, settings, GAP).unwrap();
    let length_spec = ConvergenceSpec {
        parameter: SweepParameter::L,
        values: vec![25.0, 29.0, 33.0, 37.0, 41.0, 45.0],
        ..spec.clone()
    };
    let lengths = convergence_sweep(&length_spec, &g, settings, GAP).unwrap();
    let default_length = g.periods as f64;
    let settled = lengths.plateau_from.is_some_and(|l| l <= default_length);
    let lb: Vec<String> = boxes.points.iter().map(|p| format!("{:.0}:{:.3e}", p.value, p.target)).collect();
    let ll: Vec<String> = lengths.points.iter().map(|p| format!("{:.0}:{:.3e}", p.value, p.target)).collect();
    (
        boxes.converged() && settled,
        format!(
            "F_rad vs l_b {} plateau from {:?} (spread {:.1}%); vs l {} plateau from {:?} (spread {:.1}%, default l {default_length})",
            lb.join(" "),
            boxes.plateau_from,
            100.0 * boxes.fluctuation,
            ll.join(" "),
            lengths.plateau_from,
            100.0 * lengths.fluctuation
        ),
    )
}

fn criterion_10(s: &Ng58) -> (bool, String) {
    let spec = MapSpec {
        grid: (16, 28),
        ..MapSpec::default()
    };
    let mut cells: Vec<((f64, f64), Orientation)> = spec
        .positions()
        .into_iter()
        .map(|(_, _, x, y)| (x, y))
        .filter(|&r| s.active.in_dielectric(r))
        .flat_map(|r| [(r, Orientation::X), (r, Orientation::Y)])
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_607);
    cells.shuffle(&mut rng);
    let mut worst: f64 = 0.0;
    for &(r0, o) in cells.iter().take(10) {
        let rep = s.active.emit(r0, o).unwrap().report;
        worst = worst.max(rep.discrepancy);
    }
    (worst < 0.02, format!("max |beta_guided - beta'| over 10 random cells {worst:.2e}"))
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut failed = Vec::new();
    let mut record = |id: usize, budget: f64, seconds: f64, r: (bool, String)| {
        let ok = r.0 && seconds <= budget;
        println!("criterion {id:>2}: {} ({seconds:.0} s of {budget:.0}) {}", if ok { "PASS" } else { "FAIL" }, r.1);
        if !ok {
            failed.push(id);
        }
    };
    let timed = |f: &dyn Fn() -> (bool, String)| {
        let t = Instant::now();
        let r = f();
        (t.elapsed().as_secs_f64(), r)
    };

    let (t, r) = timed(&criterion_1);
    record(1, 10.0, t, r);
    let (t, r) = timed(&criterion_2);
    record(2, 30.0, t, r);
    let (t, r) = timed(&criterion_3);
    record(3, 60.0, t, r);

    let start = Instant::now();
    let g = w1();
    let s = settings(32, BoundaryMode::Active);
    let band = trace_band(&g, GAP, 32, s.mode_pad).unwrap();
    let point = OperatingPoint::at_group_index(&band, 58.0, s.mode_samples).unwrap();
    let r0 = point.primary.axis_antinode();
    let active = WaveguideStudy::new(&g, &s, point).unwrap();
    let ng58 = Ng58 { band, active, r0 };
    let setup = start.elapsed().as_secs_f64();
    let (t, (r4, r5)) = {
        let t = Instant::now();
        let r = criteria_4_5(&ng58);
        (t.elapsed().as_secs_f64() + setup, r)
    };
    record(4, 600.0, t, r4);
    record(5, 600.0, t, r5);
    let (t, r) = timed(&|| criterion_6(&ng58));
    record(6, 300.0, t, r);
    let (t, r) = timed(&|| criterion_10(&ng58));
    record(10, 1200.0, t + setup, r);
    let t7 = Instant::now();
    let (spec58, map58) = beta_map(&ng58);
    let map_time = t7.elapsed().as_secs_f64();
    let (t, r) = timed(&|| criterion_7(&ng58, &spec58, &map58));
    record(7, 7200.0, t + map_time, r);
    let (t, r) = timed(&|| criterion_8(&ng58, &map58));
    record(8, 3600.0, t + map_time, r);
    let (settings58, r0) = (ng58.active.settings.clone(), ng58.r0);
    drop(ng58);
    let (t, r) = timed(&|| criterion_9(&settings58, r0));
    record(9, 3600.0, t, r);


    if failed.is_empty() {
        println!("acceptance: all criteria pass");
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
