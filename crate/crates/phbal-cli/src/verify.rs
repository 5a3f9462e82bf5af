//! Invariant suites run by `phbal verify` on small built-in fixtures.

use clap::ValueEnum;

use phbal::balancing;
use phbal::benchmarks::{self, MsdParams, WaveParams};
use phbal::bounds;
use phbal::io;
use phbal::kyp;
use phbal::linalg::{self, C64};
use phbal::lqg;
use phbal::mateq::{self, CareMode, SolverTolerances};
use phbal::ph::{self, PhSystem, Violation};
use phbal::sweep::{self, Method, Prepared, Representation, SweepOptions};
use phbal::Mat;

pub const MODULES: [&str; 8] = ["mateq", "ph-core", "kyp", "balancing", "lqg-control", "error-bounds", "benchmarks", "cli"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Fault {
    /// Break the skew-symmetry of J.
    SkewSymmetry,
    /// Make R indefinite.
    Dissipation,
}

pub struct Check {
    pub module: &'static str,
    pub name: &'static str,
    pub outcome: Result<(), String>,
}

type Outcome = Result<(), String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Outcome {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s(e: phbal::Error) -> String {
    e.to_string()
}

fn fixture(seed: u64, fault: Option<Fault>) -> PhSystem {
    let mut sys = benchmarks::random_ph(6, 2, seed);
    match fault {
        Some(Fault::SkewSymmetry) => sys.j[(0, 1)] += 0.5,
        Some(Fault::Dissipation) => sys.r[(0, 0)] -= 10.0,
        None => {}
    }
    sys
}

fn kron_lyapunov(a: &Mat, w: &Mat) -> Result<Mat, String> {
    let n = a.nrows();
    let i = Mat::identity(n, n);
    let k = i.kronecker(a) + a.kronecker(&i);
    let rhs = Mat::from_column_slice(n * n, 1, (-w).as_slice());
    let x = linalg::solve(&k, &rhs).map_err(e2s)?;
    Ok(Mat::from_column_slice(n, n, x.as_slice()))
}

fn mateq_checks(sys: &PhSystem, out: &mut Vec<Check>) {
    let a = sys.a();
    let c = sys.c();
    let push = |out: &mut Vec<Check>, name, outcome| out.push(Check { module: "mateq", name, outcome });
    let w = &sys.b * sys.b.transpose() + Mat::identity(a.nrows(), a.nrows());
    push(out, "Lyapunov solution matches Kronecker oracle", (|| {
        let x = mateq::solve_lyapunov(&a, &w).map_err(e2s)?;
        let d = linalg::rel_diff(&x, &kron_lyapunov(&a, &w)?);
        ensure(d < 1e-9, || format!("relative difference {d:.2e}"))
    })());
    push(out, "stabilizing Riccati solution", (|| {
        let p = mateq::solve_care(&a, &sys.b, &(c.transpose() * &c), CareMode::Stabilizing).map_err(e2s)?;
        let res = a.transpose() * &p + &p * &a - &p * &sys.b * sys.b.transpose() * &p + c.transpose() * &c;
        let rel = res.norm() / (2.0 * a.norm() * p.norm() + (c.transpose() * &c).norm());
        let ab = mateq::spectral_abscissa(&(&a - &sys.b * sys.b.transpose() * &p)).map_err(e2s)?;
        ensure(rel < 1e-10 && ab < 0.0, || format!("residual {rel:.2e}, closed-loop abscissa {ab:.3e}"))
    })());
    push(out, "H-infinity norm dominates a dense frequency sweep", (|| {
        let ss = ph::to_state_space(sys);
        let h = mateq::hinf_norm(&ss, &SolverTolerances::default()).map_err(e2s)?;
        let mut best: f64 = 0.0;
        for k in 0..=3000 {
            let om = if k == 0 { 0.0 } else { 10f64.powf(-3.0 + 6.0 * k as f64 / 3000.0) };
            let g = ph::transfer_eval(&ss, C64::new(0.0, om)).map_err(e2s)?;
            best = best.max(mateq::complex_norm2(&g));
        }
        ensure(h >= best * (1.0 - 1e-9) && h <= best * 1.01, || format!("norm {h:.8e} vs sweep {best:.8e}"))
    })());
}

fn violation_check(v: &[Violation], pred: fn(&Violation) -> bool) -> Outcome {
    match v.iter().find(|x| pred(x)) {
        Some(x) => Err(format!("{x:?}")),
        None => Ok(()),
    }
}

fn ph_checks(sys: &PhSystem, out: &mut Vec<Check>) {
    let push = |out: &mut Vec<Check>, name, outcome| out.push(Check { module: "ph-core", name, outcome });
    let v = ph::validate(sys, 1e-10);
    push(out, "J skew-symmetric", violation_check(&v, |x| matches!(x, Violation::JNotSkew(_))));
    push(out, "R symmetric positive semidefinite", violation_check(&v, |x| matches!(x, Violation::RNotSymmetric(_) | Violation::RNotPsd(_))));
    push(out, "Q symmetric positive definite", violation_check(&v, |x| matches!(x, Violation::QNotSymmetric(_) | Violation::QNotPositiveDefinite(_))));
    let ss = ph::to_state_space(sys);
    let n = sys.order();
    push(out, "KYP residual at Q is blkdiag(2QRQ, 0)", {
        let w = ph::kyp_residual(&ss, &sys.q);
        let mut expect = Mat::zeros(w.nrows(), w.ncols());
        expect.view_mut((0, 0), (n, n)).copy_from(&(&sys.q * &sys.r * &sys.q * 2.0));
        let d = (&w - &expect).norm() / expect.norm().max(1.0);
        ensure(d < 1e-12, || format!("deviation {d:.2e}"))
    });
    push(out, "state transform preserves the transfer function", (|| {
        let t = benchmarks::random_ph(n, 1, 99).q;
        let s2 = ph::to_state_space(&ph::state_transform(sys, &t).map_err(e2s)?);
        for om in [0.0, 0.3, 2.0, 17.0] {
            let z = C64::new(0.05, om);
            let g1 = ph::transfer_eval(&ss, z).map_err(e2s)?;
            let g2 = ph::transfer_eval(&s2, z).map_err(e2s)?;
            let d = (&g1 - &g2).norm() / g1.norm();
            if d > 1e-9 {
                return Err(format!("relative deviation {d:.2e} at ω={om}"));
            }
        }
        Ok(())
    })());
    push(out, "stored energy never exceeds supplied energy", (|| {
        let x0 = nalgebra::DVector::from_element(n, 0.3);
        let m = sys.inputs();
        let u = move |t: f64| nalgebra::DVector::from_fn(m, |i, _| (t * (1.0 + i as f64)).sin());
        let tr = ph::simulate(sys, &x0, &u, 1e-3, 2.0).map_err(e2s)?;
        let h0 = tr.energy[0];
        let mut s = 0.0;
        for (k, (e, w)) in tr.energy[1..].iter().zip(&tr.supplied).enumerate() {
            s += w;
            if e - h0 > s + 1e-9 * (1.0 + h0) {
                return Err(format!("step {k}: ΔH {:.6e} > supplied {s:.6e}", e - h0));
            }
        }
        Ok(())
    })());
}

fn kyp_checks(sys: &PhSystem, out: &mut Vec<Check>) {
    let push = |out: &mut Vec<Check>, name, outcome| out.push(Check { module: "kyp", name, outcome });
    push(out, "scalar extremal solutions in closed form", (|| {
        let one = Mat::from_element(1, 1, 1.0);
        let s = PhSystem::new(Mat::zeros(1, 1), one.clone(), one.clone(), one);
        let eps = 1e-6;
        let pair = kyp::solve_extremal(&ph::to_state_space(&s), eps).map_err(e2s)?;
        let root = (2.0 * eps + eps * eps).sqrt();
        let (lo, hi) = (1.0 + eps - root, 1.0 + eps + root);
        let ok = (pair.x_min[(0, 0)] - lo).abs() < 1e-9 && (pair.x_max[(0, 0)] - hi).abs() < 1e-9;
        ensure(ok, || format!("got ({:.9}, {:.9}), expected ({lo:.9}, {hi:.9})", pair.x_min[(0, 0)], pair.x_max[(0, 0)]))
    })());
    push(out, "X_min ⪯ Q ⪯ X_max and dual identities", (|| {
        let ss = ph::to_state_space(sys);
        let pair = kyp::solve_extremal(&ss, kyp::DEFAULT_EPS).map_err(e2s)?;
        let rep = kyp::check_extremal_identities(&pair, &ss, &sys.q);
        ensure(rep.all(), || format!("{rep:?}"))
    })());
}

fn balancing_checks(sys: &PhSystem, out: &mut Vec<Check>) {
    let push = |out: &mut Vec<Check>, name, outcome| out.push(Check { module: "balancing", name, outcome });
    let gram = balancing::modified_bt_gramians(sys);
    push(out, "reachability Gramian with 2R equals Q⁻¹", (|| {
        let g = gram.as_ref().map_err(|e| e.to_string())?;
        let num = mateq::solve_lyapunov(&sys.a(), &(&sys.r * 2.0)).map_err(e2s)?;
        let d = linalg::rel_diff(&num, &g.lc);
        ensure(d < 1e-9, || format!("relative difference {d:.2e}"))
    })());
    push(out, "balanced Gramians equal and diagonal", (|| {
        let g = gram.as_ref().map_err(|e| e.to_string())?;
        let bal = balancing::square_root_balance_trunc(&g.lc, &g.mo, 1e-11).map_err(e2s)?;
        let s = Mat::from_diagonal(&nalgebra::DVector::from_vec(bal.sigma.clone()));
        let gc = &bal.t * &g.lc * bal.t.transpose();
        let go = bal.t_inv.transpose() * &g.mo * &bal.t_inv;
        let d = linalg::rel_diff(&gc, &s).max(linalg::rel_diff(&go, &s));
        ensure(d < 1e-8, || format!("relative deviation {d:.2e}"))
    })());
    push(out, "truncation keeps the pH structure", (|| {
        let res = balancing::modified_bt_reduce(sys, 2).map_err(e2s)?;
        let v = ph::validate(&res.reduced, 1e-9);
        ensure(v.is_empty(), || format!("{v:?}"))
    })());
}

fn lqg_checks(sys: &PhSystem, out: &mut Vec<Check>) {
    let push = |out: &mut Vec<Check>, name, outcome| out.push(Check { module: "lqg-control", name, outcome });
    let a = sys.a();
    let c = sys.c();
    push(out, "filter Gramian equals Q⁻¹", (|| {
        let g = lqg::solve_ph_lqg(sys).map_err(e2s)?;
        let qf = &sys.b * sys.b.transpose() + &sys.r * 2.0;
        let num = mateq::solve_care(&a.transpose(), &c.transpose(), &qf, CareMode::Stabilizing).map_err(e2s)?;
        let d = linalg::rel_diff(&num, &g.p_f);
        ensure(d < 1e-7, || format!("relative difference {d:.2e}"))
    })());
    push(out, "controller is pH and the closed loop is stable", (|| {
        let g = lqg::solve_ph_lqg(sys).map_err(e2s)?;
        let k = lqg::build_ph_controller(sys, &g).map_err(e2s)?;
        let real = k.ph_realization.as_ref().ok_or("no pH realization")?;
        let v = ph::validate(real, 1e-8);
        let ab = mateq::spectral_abscissa(&lqg::interconnect(sys, &k).map_err(e2s)?.a).map_err(e2s)?;
        ensure(v.is_empty() && ab < 0.0, || format!("violations {v:?}, closed-loop abscissa {ab:.3e}"))
    })());
    push(out, "effort constraint equals truncation", (|| {
        let res = lqg::algorithm1_pipeline(sys, 3).map_err(e2s)?;
        let ec = balancing::effort_constraint_reduce(&res.balanced, res.order).map_err(e2s)?;
        let d = linalg::rel_diff(&ec.q, &res.reduced.q).max(linalg::rel_diff(&ec.a(), &res.reduced.a()));
        ensure(d < 1e-9, || format!("relative difference {d:.2e}"))
    })());
    push(out, "Q-conjugated Gramians: P_cQ⁻¹ = QP_f and Q_b = I", (|| {
        let (g, _) = lqg::q_conjugated_gramians(sys).map_err(e2s)?;
        let qi = linalg::spd_inv(&sys.q).map_err(e2s)?;
        let d = linalg::rel_diff(&(&g.p_c * &qi), &(&sys.q * &g.p_f));
        let res = lqg::q_conjugated_pipeline(sys, 3).map_err(e2s)?;
        ensure(d < 1e-8 && res.q_balanced_dev < 1e-7, || format!("relation {d:.2e}, ‖Q_b − I‖ {:.2e}", res.q_balanced_dev))
    })());
    push(out, "unstable Q-conjugated controller counterexample", (|| {
        let ex = PhSystem::new(
            Mat::zeros(2, 2),
            Mat::identity(2, 2),
            Mat::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]),
            Mat::from_row_slice(2, 2, &[1.0, 0.0, 2.0, 1.0]),
        );
        let qt = Mat::from_row_slice(2, 2, &[5.0, 4.0, 4.0, 7.0]);
        let res = lqg::q_conjugated_pipeline_weighted(&ex, 2, Some(&qt)).map_err(e2s)?;
        let ab = mateq::spectral_abscissa(&res.controller.state_space.a).map_err(e2s)?;
        ensure((ab - 1.0586).abs() < 1e-3, || format!("controller abscissa {ab:.5}"))
    })());
}

fn bounds_checks(sys: &PhSystem, seed: u64, out: &mut Vec<Check>) {
    let push = |out: &mut Vec<Check>, name, outcome| out.push(Check { module: "error-bounds", name, outcome });
    push(out, "sharp Lyapunov identity equals −2R", (|| {
        let g = lqg::solve_ph_lqg(sys).map_err(e2s)?;
        let cert = bounds::lyap_inequality_certificate(sys, &g.p_c, &g.p_f).map_err(e2s)?;
        ensure(cert.holds && cert.sharp_residual < 1e-8, || format!("λ_max {:.2e}, sharp residual {:.2e}", cert.lambda_max, cert.sharp_residual))
    })());
    push(out, "bounds dominate errors for every method", (|| {
        let s = benchmarks::random_ph(8, 2, seed.wrapping_add(1));
        let prep = Prepared::new(&s, SweepOptions::default()).map_err(e2s)?;
        let orders: Vec<usize> = (1..prep.order()).collect();
        for m in Method::ALL {
            for r in Representation::ALL {
                let rows = sweep::sweep(&prep, m, r, &orders).map_err(e2s)?;
                let v: Vec<String> = rows.iter().flat_map(|x| x.violations(1e-6)).collect();
                if !v.is_empty() {
                    return Err(format!("{} / {}: {}", m.name(), r.name(), v.join("; ")));
                }
            }
        }
        Ok(())
    })());
}

fn benchmark_checks(out: &mut Vec<Check>) {
    let push = |out: &mut Vec<Check>, name, outcome| out.push(Check { module: "benchmarks", name, outcome });
    push(out, "mass-spring-damper chain is a stable pH system", (|| {
        let s = benchmarks::msd_generate(&MsdParams { ell: 10, ..Default::default() });
        let v = ph::validate(&s, 1e-12);
        let ab = mateq::spectral_abscissa(&s.a()).map_err(e2s)?;
        ensure(s.order() == 20 && v.is_empty() && ab < 0.0, || format!("order {}, {v:?}, abscissa {ab:.3e}", s.order()))
    })());
    push(out, "wave energy and co-energy forms agree", (|| {
        let (raw, s) = benchmarks::wave_generate(&WaveParams { n: 10, ..Default::default() });
        let ss = ph::to_state_space(&s);
        for om in [0.0, 1.0, 30.0] {
            let z = C64::new(0.1, om);
            let g1 = ph::transfer_eval(&ss, z).map_err(e2s)?;
            let g2 = ph::coenergy_transfer(&raw, z).map_err(e2s)?;
            let d = (&g1 - &g2).norm() / g1.norm();
            if d > 1e-9 {
                return Err(format!("relative deviation {d:.2e} at ω={om}"));
            }
        }
        ensure(s.order() == 23 && ph::validate(&s, 1e-12).is_empty(), || "bad order or structure".into())
    })());
}

fn cli_checks(sys: &PhSystem, out: &mut Vec<Check>) {
    let push = |out: &mut Vec<Check>, name, outcome| out.push(Check { module: "cli", name, outcome });
    push(out, "Matrix Market round trip is exact", (|| {
        let text = io::format_matrix_market(&sys.q);
        let back = io::parse_matrix_market(&text, std::path::Path::new("<memory>")).map_err(|e| e.to_string())?;
        ensure(back == sys.q, || "round trip changed entries".into())
    })());
    push(out, "CSV output is deterministic", (|| {
        let run = || -> Result<String, String> {
            let prep = Prepared::new(sys, SweepOptions::default()).map_err(e2s)?;
            Ok(sweep::format_csv(&sweep::sweep(&prep, Method::ModBt, Representation::Q, &[1, 2, 3]).map_err(e2s)?))
        };
        let (a, b) = (run()?, run()?);
        ensure(a == b, || "two runs differ".into())
    })());
}

/// Runs the suites selected by `scope` (`all` or a module name).
pub fn run(scope: &str, seed: u64, fault: Option<Fault>) -> Result<Vec<Check>, String> {
    if scope != "all" && !MODULES.contains(&scope) {
        return Err(format!("unknown scope '{scope}', expected all or one of {}", MODULES.join(", ")));
    }
    let want = |m: &str| scope == "all" || scope == m;
    let sys = fixture(seed, fault);
    let mut out = vec![];
    if want("mateq") {
        mateq_checks(&sys, &mut out);
    }
    if want("ph-core") {
        ph_checks(&sys, &mut out);
    }
    if want("kyp") {
        kyp_checks(&sys, &mut out);
    }
    if want("balancing") {
        balancing_checks(&sys, &mut out);
    }
    if want("lqg-control") {
        lqg_checks(&sys, &mut out);
    }
    if want("error-bounds") {
        bounds_checks(&sys, seed, &mut out);
    }
    if want("benchmarks") {
        benchmark_checks(&mut out);
    }
    if want("cli") {
        cli_checks(&sys, &mut out);
    }
    Ok(out)
}
