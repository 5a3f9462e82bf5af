use nalgebra::DVector;
use proptest::prelude::*;

use phbal::balancing;
use phbal::benchmarks::random_ph;
use phbal::io;
use phbal::linalg::{self, C64};
use phbal::lqg;
use phbal::mateq::{self, SolverTolerances};
use phbal::ph::{self, PhSystem};
use phbal::sweep::{self, Method, Prepared, Representation, SweepOptions};
use phbal::Mat;

fn system() -> impl Strategy<Value = PhSystem> {
    (2usize..8, 1usize..3, any::<u64>()).prop_map(|(n, m, seed)| random_ph(n, m, seed))
}

fn kron_lyapunov(a: &Mat, w: &Mat) -> Mat {
    let n = a.nrows();
    let i = Mat::identity(n, n);
    let k = i.kronecker(a) + a.kronecker(&i);
    let rhs = Mat::from_column_slice(n * n, 1, (-w).as_slice());
    let x = linalg::solve(&k, &rhs).unwrap();
    Mat::from_column_slice(n, n, x.as_slice())
}

fn tf_gap(a: &phbal::StateSpace, b: &phbal::StateSpace) -> f64 {
    [0.0, 0.4, 3.0, 25.0]
        .iter()
        .map(|&w| {
            let s = C64::new(0.05, w);
            let g1 = ph::transfer_eval(a, s).unwrap();
            let g2 = ph::transfer_eval(b, s).unwrap();
            (&g1 - &g2).norm() / g1.norm().max(1e-300)
        })
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn lyapunov_agrees_with_kronecker(sys in system()) {
        let a = sys.a();
        let n = a.nrows();
        let w = &sys.b * sys.b.transpose() + Mat::identity(n, n);
        let x = mateq::solve_lyapunov(&a, &w).unwrap();
        prop_assert!(linalg::rel_diff(&x, &kron_lyapunov(&a, &w)) < 1e-9);
        let xt = mateq::solve_lyapunov_t(&a, &w).unwrap();
        prop_assert!(linalg::rel_diff(&xt, &kron_lyapunov(&a.transpose(), &w)) < 1e-9);
    }

    #[test]
    fn psd_factor_reconstructs(n in 2usize..9, k in 1usize..4, seed in any::<u64>()) {
        let m = random_ph(n, k.min(n), seed).b;
        let s = &m * m.transpose();
        let f = mateq::psd_factor(&s, &SolverTolerances::default()).unwrap();
        prop_assert_eq!(f.rank, k.min(n));
        prop_assert!(linalg::rel_diff(&(f.factor.transpose() * &f.factor), &s) < 1e-10);
    }

    #[test]
    fn kyp_residual_at_q_is_dissipation(sys in system()) {
        let ss = ph::to_state_space(&sys);
        let n = sys.order();
        let w = ph::kyp_residual(&ss, &sys.q);
        let top = &sys.q * &sys.r * &sys.q * 2.0;
        prop_assert!(linalg::rel_diff(&w.view((0, 0), (n, n)).into_owned(), &top) < 1e-12);
        prop_assert!(w.view((0, n), (n, sys.inputs())).amax() < 1e-12 * top.amax().max(1.0));
    }

    #[test]
    fn representation_change_at_q_is_identity(sys in system()) {
        let back = ph::change_representation(&sys, &sys.q, 1e-8).unwrap();
        prop_assert!(linalg::rel_diff(&back.j, &sys.j) < 1e-9);
        prop_assert!(linalg::rel_diff(&back.r, &sys.r) < 1e-9);
    }

    #[test]
    fn state_transform_keeps_transfer_function(sys in system(), seed in any::<u64>()) {
        let t = random_ph(sys.order(), 1, seed).q;
        let moved = ph::state_transform(&sys, &t).unwrap();
        prop_assert!(ph::validate(&moved, 1e-9).is_empty());
        prop_assert!(tf_gap(&ph::to_state_space(&sys), &ph::to_state_space(&moved)) < 1e-9);
    }

    #[test]
    fn coenergy_round_trip(sys in system()) {
        let back = ph::from_coenergy(&ph::to_coenergy(&sys).unwrap()).unwrap();
        prop_assert!(linalg::rel_diff(&back.q, &sys.q) < 1e-10);
        prop_assert!(linalg::rel_diff(&back.j, &sys.j) < 1e-12);
    }

    #[test]
    fn modified_gramians_balance_to_common_diagonal(sys in system()) {
        let g = balancing::modified_bt_gramians(&sys).unwrap();
        let num = mateq::solve_lyapunov(&sys.a(), &(&sys.r * 2.0)).unwrap();
        prop_assert!(linalg::rel_diff(&num, &g.lc) < 1e-8);
        let bal = balancing::square_root_balance_trunc(&g.lc, &g.mo, 1e-11).unwrap();
        let s = Mat::from_diagonal(&DVector::from_vec(bal.sigma.clone()));
        prop_assert!(linalg::rel_diff(&(&bal.t * &g.lc * bal.t.transpose()), &s) < 1e-7);
        prop_assert!(linalg::rel_diff(&(bal.t_inv.transpose() * &g.mo * &bal.t_inv), &s) < 1e-7);
        prop_assert!(bal.sigma.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn truncation_keeps_structure(sys in system()) {
        let r = (sys.order() / 2).max(1);
        let res = balancing::modified_bt_reduce(&sys, r).unwrap();
        prop_assert!(ph::validate(&res.reduced, 1e-8).is_empty());
        prop_assert!(mateq::spectral_abscissa(&res.reduced.a()).unwrap() <= 1e-10);
    }

    #[test]
    fn filter_gramian_is_inverse_energy(sys in system()) {
        let g = lqg::solve_ph_lqg(&sys).unwrap();
        let qi = linalg::spd_inv(&sys.q).unwrap();
        prop_assert!(linalg::rel_diff(&g.p_f, &qi) < 1e-12);
        let c = sys.c();
        let qf = &sys.b * sys.b.transpose() + &sys.r * 2.0;
        let num = mateq::solve_care(&sys.a().transpose(), &c.transpose(), &qf, mateq::CareMode::Stabilizing).unwrap();
        prop_assert!(linalg::rel_diff(&num, &qi) < 1e-7);
    }

    #[test]
    fn ph_controller_closes_a_stable_loop(sys in system()) {
        let g = lqg::solve_ph_lqg(&sys).unwrap();
        let k = lqg::build_ph_controller(&sys, &g).unwrap();
        let real = k.ph_realization.as_ref().unwrap();
        prop_assert!(ph::validate(real, 1e-8).is_empty());
        let cc = real.b.transpose() * &real.q;
        prop_assert!(linalg::rel_diff(&cc, &k.state_space.c) < 1e-10);
        let cl = lqg::interconnect(&sys, &k).unwrap();
        prop_assert!(mateq::spectral_abscissa(&cl.a).unwrap() < 0.0);
    }

    #[test]
    fn characteristic_values_lie_in_unit_interval(sys in system()) {
        let g = lqg::solve_ph_lqg(&sys).unwrap();
        let (s, t) = lqg::characteristic_values(&g).unwrap();
        prop_assert!(t.iter().all(|x| *x > 0.0 && *x < 1.0));
        prop_assert!(s.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(t.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn energy_balance_in_simulation(sys in system()) {
        let n = sys.order();
        let m = sys.inputs();
        let x0 = DVector::from_fn(n, |i, _| (i as f64 * 0.7).cos());
        let u = move |t: f64| DVector::from_fn(m, |i, _| (t * (1.5 + i as f64)).sin());
        let tr = ph::simulate(&sys, &x0, &u, 1e-3, 1.0).unwrap();
        let h0 = tr.energy[0];
        let mut supplied = 0.0;
        for (e, w) in tr.energy[1..].iter().zip(&tr.supplied) {
            supplied += w;
            prop_assert!(e - h0 <= supplied + 1e-10 * (1.0 + h0));
        }
    }

    #[test]
    fn matrix_market_round_trip(n in 1usize..6, m in 1usize..6, seed in any::<u64>()) {
        let a = random_ph(n.max(m), 1, seed).j.view((0, 0), (n, m)).into_owned() * 1e-7;
        let text = io::format_matrix_market(&a);
        prop_assert_eq!(io::parse_matrix_market(&text, std::path::Path::new("mem")).unwrap(), a);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn bounds_dominate_errors(n in 4usize..8, seed in any::<u64>()) {
        let sys = random_ph(n, 2, seed);
        let prep = Prepared::new(&sys, SweepOptions::default()).unwrap();
        let orders: Vec<usize> = (1..=prep.order()).collect();
        for m in Method::ALL {
            for r in Representation::ALL {
                let rows = sweep::sweep(&prep, m, r, &orders).unwrap();
                for row in &rows {
                    let v = row.violations(1e-6);
                    prop_assert!(v.is_empty(), "{} {}: {:?}", m.name(), r.name(), v);
                }
            }
        }
    }
}
