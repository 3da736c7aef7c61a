use proptest::prelude::*;

use pcwbeta::config::RunConfig;
use pcwbeta::emission::{beta_factor, face_fluxes, poynting_flux, radiated_power, BetaInputs, FaceSet, FluxBox};
use pcwbeta::fdfd::{Dipole, Domain, FdfdOperator, PmlSpec};
use pcwbeta::geometry::{build_w1, circle_rect_area, CrystalGeometry};
use pcwbeta::pwe::{GridModeSolver, Orientation, Parity};
use pcwbeta::sweeps::convergence::{plateau_start, spread};

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 24,
        ..ProptestConfig::default()
    }
}

fn small_w1() -> CrystalGeometry {
    build_w1(1.0, 0.3, 3.0, 1, 5).unwrap()
}

fn orientation() -> impl Strategy<Value = Orientation> {
    prop_oneof![Just(Orientation::X), Just(Orientation::Y)]
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn permittivity_mirror_and_period(x in -10.0f64..10.0, y in -4.0f64..4.0, r in 0.2f64..0.4, m in 1usize..6) {
        let g = build_w1(1.0, r, 3.5, m, 33).unwrap();
        prop_assert_eq!(g.eps_at(x, y), g.eps_at(x, -y));
        prop_assert_eq!(g.eps_at(x, y), g.eps_at(x + 1.0, y));
        let e = g.eps_at(x, y);
        prop_assert!(e == 1.0 || e == 3.5 * 3.5);
    }

    #[test]
    fn circle_rect_area_splits_additively(
        cx in -1.0f64..1.0, cy in -1.0f64..1.0, r in 0.05f64..0.8,
        x0 in -1.5f64..0.0, w in 0.01f64..2.0, y0 in -1.5f64..0.0, h in 0.01f64..2.0, t in 0.0f64..1.0,
    ) {
        let (x1, y1) = (x0 + w, y0 + h);
        let xm = x0 + t * w;
        let whole = circle_rect_area(cx, cy, r, x0, x1, y0, y1);
        let parts = circle_rect_area(cx, cy, r, x0, xm, y0, y1) + circle_rect_area(cx, cy, r, xm, x1, y0, y1);
        prop_assert!((whole - parts).abs() < 1e-12);
        prop_assert!(whole >= 0.0 && whole <= (w * h).min(std::f64::consts::PI * r * r) + 1e-12);
    }

    #[test]
    fn beta_stays_in_unit_interval(fp_wg in 0.0f64..50.0, extra in 0.0f64..5.0, p_rad in 0.0f64..3.0, p0 in 0.1f64..2.0) {
        let r = beta_factor(&BetaInputs {
            omega: 0.22,
            n_g: 20.0,
            r0: (0.5, 0.0),
            n_d: Orientation::Y,
            p_total: p_rad + fp_wg * p0,
            p_rad,
            p0,
            fp_wg,
            fp_guided: fp_wg + extra,
        }).unwrap();
        for v in [r.beta, r.beta_prime, r.beta_guided] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(r.beta_guided >= r.beta);
        if p_rad == 0.0 && fp_wg > 0.0 {
            prop_assert_eq!(r.beta, 1.0);
        }
    }

    #[test]
    fn spread_is_scale_invariant(v in prop::collection::vec(0.5f64..2.0, 2..8), c in 0.01f64..100.0) {
        let scaled: Vec<f64> = v.iter().map(|x| c * x).collect();
        prop_assert!((spread(&v) - spread(&scaled)).abs() < 1e-12);
        prop_assert_eq!(plateau_start(&v, 0.05).is_some(), plateau_start(&scaled, 0.05).is_some());
    }

    #[test]
    fn config_round_trips(r in 0.2f64..0.42, m in 1usize..8, l in 5usize..60, res in 8usize..64, pad in 0.5f64..4.0) {
        let mut c = RunConfig::default();
        c.geometry.r = r;
        c.geometry.m = m;
        c.geometry.l_periods = l;
        c.solver.resolution = res;
        c.solver.pad_y = pad;
        let text = c.to_toml().unwrap();
        let back = RunConfig::parse(&text).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.hash().unwrap(), c.hash().unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn fdfd_reciprocity_and_linearity(
        x1 in -1.4f64..1.4, y1 in -1.4f64..1.4, o1 in orientation(),
        x2 in -1.4f64..1.4, y2 in -1.4f64..1.4, o2 in orientation(),
        scale in 0.1f64..10.0,
    ) {
        let res = 8;
        let pml = PmlSpec { thickness: 6, ..PmlSpec::default() };
        let d = Domain::from_nodes(&small_w1(), res, (-20, 20, -20, 20), pml, (3.0, 1.0), None).unwrap();
        let op = FdfdOperator::new(&d, 0.27).unwrap();
        let p = Dipole::unit((x1, y1), o1);
        let q = Dipole::unit((x2, y2), o2);
        prop_assume!(p.edge(res) != q.edge(res));
        let sp = op.solve(&p, None).unwrap();
        let sq = op.solve(&q, None).unwrap();
        let at = |s: &pcwbeta::fdfd::FieldSolution, d: &Dipole| {
            let (i, j) = d.edge(res);
            match d.orientation {
                Orientation::X => s.ex(i, j),
                Orientation::Y => s.ey(i, j),
            }
        };
        let (a, b) = (at(&sp, &q), at(&sq, &p));
        prop_assert!((a - b).norm() <= 1e-9 * a.norm().max(b.norm()));

        let mut big = p;
        big.current *= scale;
        let sb = op.solve(&big, None).unwrap();
        prop_assert!((at(&sb, &q) - a * scale).norm() <= 1e-9 * scale * a.norm());
    }

    #[test]
    fn channels_add_up_for_any_box(
        x0 in -1.5f64..-0.2, x1 in 0.2f64..1.5, y0 in -1.5f64..-0.2, y1 in 0.2f64..1.5, o in orientation(),
    ) {
        let res = 8;
        let pml = PmlSpec { thickness: 6, ..PmlSpec::default() };
        let d = Domain::from_nodes(&small_w1(), res, (-20, 20, -20, 20), pml, (3.0, 1.0), None).unwrap();
        let s = FdfdOperator::new(&d, 0.27).unwrap().solve(&Dipole::unit((0.05, 0.05), o), None).unwrap();
        let b = FluxBox::closed(x0, x1, y0, y1);
        let total = poynting_flux(&s, &b).unwrap();
        let rad = radiated_power(&s, &b.with_faces(FaceSet::ExcludeXNormal)).unwrap();
        let wg = face_fluxes(&s, &b).unwrap().x_normal();
        prop_assert!((total - rad - wg).abs() <= 1e-12 * total.abs().max(1e-300));
        prop_assert!((total - s.source_power()).abs() <= 1e-8 * s.source_power());
    }
}

#[test]
fn supercell_modes_have_definite_parity() {
    let g = build_w1(1.0, 0.3, 3.5, 3, 9).unwrap();
    let s = GridModeSolver::new(&g, 12, 1.0).unwrap();
    for parity in [Parity::Even, Parity::Odd] {
        for st in s.solve_k(0.4, parity, 0.22, 2).unwrap() {
            let sign = if parity == Parity::Even { 1.0 } else { -1.0 };
            let scale = st.hz.iter().map(|v| v.norm()).fold(0.0, f64::max);
            for i in 0..s.nx {
                for jj in 0..s.ny {
                    let a = st.hz[i * s.ny + jj];
                    let b = st.hz[i * s.ny + (s.ny - jj) % s.ny];
                    assert!((a - sign * b).norm() <= 1e-9 * scale, "{parity:?} at ({i}, {jj})");
                }
            }
            assert!(st.residual < 1e-8);
        }
    }
}

#[test]
fn sweeps_are_deterministic() {
    let res = 8;
    let pml = PmlSpec { thickness: 6, ..PmlSpec::default() };
    let run = || {
        let d = Domain::from_nodes(&small_w1(), res, (-20, 20, -20, 20), pml, (3.0, 1.0), None).unwrap();
        let s = FdfdOperator::new(&d, 0.27).unwrap().solve(&Dipole::unit((0.3, 0.4), Orientation::X), None).unwrap();
        poynting_flux(&s, &FluxBox::closed(-1.0, 1.0, -1.0, 1.0)).unwrap()
    };
    assert_eq!(run().to_bits(), run().to_bits());
}
