use mbgf::dyson::{default_window, solve_matrix, SelfEnergy, SolveOptions};
use mbgf::fci::{ExactPropagator, PoleKind};
use mbgf::model_io::{generate_model, parse_fcidump, write_fcidump, IntegralSet, ModelSpec};
use mbgf::perturbation::{sigma2_analytic, Sigma2};
use mbgf::resummation::{prune_poles, scgf2_cycle, ScPoleState, Tda2, DEFAULT_POLE_CAP};
use mbgf::taylor::{model_g, taylor_coefficients, taylor_partial_sum, ModelPoles};
use proptest::prelude::*;

fn model(t: f64, u: f64, sites: usize, v0: f64) -> IntegralSet {
    let spec = if sites == 2 {
        ModelSpec::dimer(t, u)
    } else {
        ModelSpec::chain(t, u, sites)
    };
    generate_model(&spec.with_site_energies(vec![v0])).unwrap()
}

fn is_symmetric(a: &nalgebra::DMatrix<f64>, tol: f64) -> bool {
    (a - a.transpose()).amax() <= tol * a.amax().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fcidump_roundtrip(t in 0.3f64..2.0, u in 0.0f64..5.0, four in any::<bool>(), v0 in -0.5f64..0.5) {
        let ints = model(t, u, if four { 4 } else { 2 }, v0);
        let back = parse_fcidump(&write_fcidump(&ints)).unwrap();
        prop_assert_eq!(back.m, ints.m);
        prop_assert_eq!(&back.eps, &ints.eps);
        for p in 0..ints.m {
            for q in 0..ints.m {
                for r in 0..ints.m {
                    for s in 0..ints.m {
                        prop_assert_eq!(back.v(p, q, r, s), ints.v(p, q, r, s));
                    }
                }
            }
        }
    }

    #[test]
    fn sigma2_is_symmetric_and_quadratic(u in 0.5f64..4.0, v0 in -0.5f64..0.5, w in -3.0f64..5.0, scale in 0.2f64..2.0) {
        let ints = model(1.0, u, 2, v0);
        let Ok(s) = sigma2_analytic(&ints, w) else { return Ok(()); };
        prop_assert!(is_symmetric(&s, 1e-14));
        let mut scaled = ints.scaled_interaction(scale);
        scaled.eps = ints.eps.clone();
        let s2 = sigma2_analytic(&scaled, w).unwrap();
        prop_assert!((s2 - s * (scale * scale)).amax() <= 1e-12 * (1.0 + scale * scale));
    }

    #[test]
    fn exact_poles_are_complete(u in 0.0f64..5.0, v0 in -0.5f64..0.5, four in any::<bool>()) {
        let ints = model(1.0, u, if four { 4 } else { 2 }, v0);
        let prop = ExactPropagator::new(&ints, 1.0, 20_000).unwrap();
        let total = prop.poles.total_weight();
        let ip: f64 = prop.poles.poles.iter().filter(|p| p.kind == PoleKind::Ip).map(|p| p.weight()).sum();
        prop_assert!((total - ints.m as f64).abs() < 1e-10);
        prop_assert!((ip - ints.n_e as f64).abs() < 1e-10);
    }

    #[test]
    fn tda_is_symmetric(u in 0.5f64..4.0, v0 in -0.5f64..0.5, cycles in 0usize..8, w in -4.0f64..6.0) {
        let ints = model(1.0, u, 2, v0);
        if let Ok(s) = Tda2::new(&ints, cycles).eval(w) {
            prop_assert!(is_symmetric(&s, 1e-12));
        }
    }

    #[test]
    fn scgf2_residue_sums_bounded(u in 0.5f64..4.0, v0 in 0.0f64..0.5) {
        let ints = model(1.0, u, 2, v0);
        let mut st = ScPoleState::initial(&ints);
        for _ in 0..2 {
            let (_, next, rep) = scgf2_cycle(&ints, &st, DEFAULT_POLE_CAP).unwrap();
            for s in next.residue_sums() {
                prop_assert!(s <= 1.0 + 1e-6);
            }
            prop_assert!(next.poles.iter().flatten().all(|p| p.residue > 0.0 && p.residue <= 1.0 + 1e-12));
            prop_assert!(rep.pole_count >= st.total());
            st = next;
        }
    }

    #[test]
    fn geometric_single_pole(c0 in -2.0f64..2.0, c1 in -0.5f64..0.5, w in -4.0f64..4.0, order in 0usize..30) {
        prop_assume!((w - c0).abs() > 0.6);
        let p = ModelPoles { coefficients: vec![(c0, c1, 0.0)] };
        let r = c1 / (w - c0);
        let closed = (1.0 - r.powi(order as i32 + 1)) / (1.0 - r) / (w - c0);
        let s = taylor_partial_sum(&p, w, order).unwrap();
        prop_assert!((s - closed).abs() <= 1e-13 * closed.abs().max(1.0));
    }
}

#[test]
fn taylor_coefficients_match_finite_differences() {
    let p = ModelPoles::standard();
    for w in [0.3, -2.9, 2.6, 1.2] {
        let c = taylor_coefficients(&p, w, 4).unwrap();
        let g = |l: f64| model_g(&p, w, l).unwrap();
        let h = 1e-3;
        let d1 = (g(h) - g(-h)) / (2.0 * h);
        let d2 = (g(h) - 2.0 * g(0.0) + g(-h)) / (h * h);
        assert!((d1 - c[1]).abs() <= 1e-6 * c[1].abs());
        assert!((d2 / 2.0 - c[2]).abs() <= 1e-6 * c[2].abs());
        // Third and fourth differences at h = 1e-3 lose about 1e-4 to
        // rounding, so these use Richardson-extrapolated wider stencils.
        let d3 = |h: f64| (g(2.0 * h) - 2.0 * g(h) + 2.0 * g(-h) - g(-2.0 * h)) / (2.0 * h * h * h);
        let d4 = |h: f64| (g(2.0 * h) - 4.0 * g(h) + 6.0 * g(0.0) - 4.0 * g(-h) + g(-2.0 * h)) / (h * h * h * h);
        let h = 0.02;
        let r3 = (4.0 * d3(h / 2.0) - d3(h)) / 3.0;
        let r4 = (4.0 * d4(h / 2.0) - d4(h)) / 3.0;
        assert!((r3 / 6.0 - c[3]).abs() <= 1e-6 * c[3].abs(), "{} {}", r3 / 6.0, c[3]);
        assert!((r4 / 24.0 - c[4]).abs() <= 1e-6 * c[4].abs(), "{} {}", r4 / 24.0, c[4]);
    }
}

#[test]
fn exact_root_count_matches_fci_poles() {
    for u in [1.0, 2.0, 4.0] {
        let ints = model(1.0, u, 2, 0.0);
        let ex = mbgf::fci::ExactSelfEnergy::new(&ints, 1.0, 20_000).unwrap();
        let vis: Vec<f64> = ex.prop.poles.visible(1e-12).iter().map(|p| p.omega).collect();
        let roots = solve_matrix(&ex, &SolveOptions::new(default_window(&ints.eps, &vis), ints.fermi_level)).unwrap();
        let mut distinct: Vec<f64> = roots.roots.iter().map(|r| r.omega).collect();
        distinct.dedup_by(|a, b| (*a - *b).abs() < 1e-8);
        assert_eq!(distinct.len(), vis.len());
    }
}

#[test]
fn free_model_is_a_fixed_point() {
    let ints = model(1.0, 0.0, 4, 0.3);
    let st = ScPoleState::initial(&ints);
    let (_, next, _) = scgf2_cycle(&ints, &st, DEFAULT_POLE_CAP).unwrap();
    for (q, ps) in next.poles.iter().enumerate() {
        assert_eq!(ps.len(), 1);
        assert!((ps[0].omega - ints.eps[q]).abs() < 1e-12);
        assert!((ps[0].residue - 1.0).abs() < 1e-12);
    }
    assert_eq!(Sigma2::pole_sum(&ints).eval(0.77).unwrap().amax(), 0.0);
}

#[test]
fn pruning_keeps_principal_roots() {
    // The symmetric dimer's cycle-1 residues all exceed 1e-6, so an
    // asymmetric dimer is used.
    let ints = model(1.0, 2.0, 2, 0.2);
    let (_, s0, _) = scgf2_cycle(&ints, &ScPoleState::initial(&ints), DEFAULT_POLE_CAP).unwrap();
    let (_, s1, _) = scgf2_cycle(&ints, &s0, DEFAULT_POLE_CAP).unwrap();
    let pruned = prune_poles(&s1, 1e-6);
    assert!(pruned.total() < s1.total());
    let (_, a, _) = scgf2_cycle(&ints, &s1, DEFAULT_POLE_CAP).unwrap();
    let (_, b, _) = scgf2_cycle(&ints, &pruned, DEFAULT_POLE_CAP).unwrap();
    for q in 0..ints.m {
        let best = |v: &Vec<mbgf::resummation::ScPole>| {
            v.iter().max_by(|x, y| x.residue.total_cmp(&y.residue)).unwrap().omega
        };
        assert!((best(&a.poles[q]) - best(&b.poles[q])).abs() <= 1e-6);
    }
}
