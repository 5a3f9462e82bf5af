//! `phbal`: benchmark generation, bound sweeps, controller synthesis and
//! self-verification for port-Hamiltonian balancing.

mod svg;
mod verify;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::json;

use phbal::benchmarks::{self, MsdParams, WaveParams};
use phbal::io::{self, IoError};
use phbal::mateq::{self, SolverTolerances};
use phbal::sweep::{self, Method, Prepared, Representation, SweepOptions};
use phbal::{linalg, lqg, Mat, PhSystem};

#[derive(Parser)]
#[command(name = "phbal", version, about = "Structure-preserving balancing and LQG reduction for port-Hamiltonian systems")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone, Copy)]
struct Global {
    /// Relative residual accepted from the Riccati solvers.
    #[arg(long, global = true, default_value_t = 1e-10)]
    tol_riccati: f64,
    /// Feedthrough regularization of the KYP Riccati equations.
    #[arg(long, global = true, default_value_t = 1e-12)]
    eps_reg: f64,
    /// Relative threshold of the minimal-realization preprocessing.
    #[arg(long, global = true, default_value_t = 1e-11)]
    eps_trunc: f64,
    /// Worker threads for sweeps over reduced orders.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Seed for random verification fixtures.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a benchmark system as a manifest plus Matrix Market files.
    Benchmark {
        #[command(subcommand)]
        which: Bench,
    },
    /// Reduce over a range of orders and tabulate errors against bounds.
    Sweep {
        /// System manifest (`.phmanifest`).
        manifest: PathBuf,
        /// One of alg1, modbt, prbt, alg2, lqgbt.
        #[arg(long, value_parser = parse_method)]
        method: Method,
        /// Hamiltonian of the representation: q, xmin or xmax.
        #[arg(long = "repr", value_parser = parse_repr, default_value = "q")]
        representation: Representation,
        /// `start:stop:step`, inclusive; `n` stands for the system order.
        #[arg(long)]
        orders: String,
        /// CSV output (stdout when omitted).
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Log-scale plot of the same table.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Synthesize a reduced LQG controller and write its certificate.
    Controller {
        manifest: PathBuf,
        /// Controller order.
        #[arg(long)]
        r: usize,
        #[arg(long, value_enum, default_value_t = CtrlMethod::Alg1)]
        method: CtrlMethod,
        /// Control weight for `alg2` as a Matrix Market file (default CᵀC).
        #[arg(long)]
        weight: Option<PathBuf>,
        /// Directory for the controller matrices and certificate.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run the built-in invariant suites.
    Verify {
        #[arg(default_value = "all")]
        scope: String,
        /// Corrupt the fixture on purpose to see the named check fail.
        #[arg(long, value_enum)]
        inject_fault: Option<verify::Fault>,
    },
}

#[derive(Subcommand)]
enum Bench {
    Msd {
        #[arg(long, default_value_t = 500)]
        ell: usize,
        #[arg(long, default_value_t = 4.0)]
        mass: f64,
        #[arg(long, default_value_t = 4.0)]
        stiffness: f64,
        #[arg(long, default_value_t = 1.0)]
        damping: f64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    Wave {
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        a: f64,
        #[arg(long, default_value_t = 1.0)]
        b: f64,
        #[arg(long, default_value_t = 50.0)]
        d: f64,
        #[arg(long, default_value_t = 1.0)]
        length: f64,
        /// Write the co-energy form (E, J, R, B) instead of the energy form.
        #[arg(long)]
        coenergy: bool,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum CtrlMethod {
    /// Structure-preserving controller from the modified filter Gramian Q⁻¹
    Alg1,
    /// Q-conjugated weights; may fail to be port-Hamiltonian
    Alg2,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse()
}

fn parse_repr(s: &str) -> Result<Representation, String> {
    s.parse()
}

enum Failure {
    Usage(String),
    Verification,
    Violation(Vec<String>),
    Solver(phbal::Error),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) | Failure::Verification => 1,
            Failure::Violation(_) => 2,
            Failure::Solver(_) => 3,
            Failure::Io(_) => 4,
        }
    }
}

impl From<phbal::Error> for Failure {
    fn from(e: phbal::Error) -> Self {
        Failure::Solver(e)
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Failure::Io(e.to_string())
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<(), Failure> {
    fs::create_dir_all(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn load(manifest: &Path) -> Result<PhSystem, Failure> {
    let sys = io::read_manifest(manifest)?.into_energy()?;
    let bad = phbal::ph::validate(&sys, 1e-8);
    if !bad.is_empty() {
        return Err(Failure::Solver(phbal::Error::InvalidSystem(format!("{bad:?}"))));
    }
    Ok(sys)
}

fn tolerances(g: &Global) -> SolverTolerances {
    SolverTolerances { riccati_residual_rel: g.tol_riccati, ..Default::default() }
}

fn benchmark(which: Bench) -> Result<(), Failure> {
    match which {
        Bench::Msd { ell, mass, stiffness, damping, out } => {
            if ell < 2 || mass <= 0.0 || stiffness <= 0.0 || damping <= 0.0 {
                return Err(Failure::Usage("need ell ≥ 2 and positive parameters".into()));
            }
            create_dir(&out)?;
            let sys = benchmarks::msd_generate(&MsdParams { ell, m: mass, k: stiffness, c: damping });
            io::write_manifest(&out.join("system.phmanifest"), &sys)?;
            println!("msd: n={} written to {}", sys.order(), out.join("system.phmanifest").display());
        }
        Bench::Wave { n, a, b, d, length, coenergy, out } => {
            if n < 2 || a <= 0.0 || b <= 0.0 || d < 0.0 || length <= 0.0 {
                return Err(Failure::Usage("need n ≥ 2, positive a, b, length and d ≥ 0".into()));
            }
            create_dir(&out)?;
            let p = WaveParams { n, a, b, d, ell: length };
            let (raw, sys) = benchmarks::wave_generate(&p);
            let path = out.join("system.phmanifest");
            if coenergy {
                io::write_coenergy_manifest(&path, &raw)?;
            } else {
                io::write_manifest(&path, &sys)?;
            }
            println!("wave: n={} written to {}", sys.order(), path.display());
        }
    }
    Ok(())
}

fn run_sweep(
    g: &Global,
    manifest: &Path,
    method: Method,
    repr: Representation,
    orders: &str,
    csv: Option<&Path>,
    svg_path: Option<&Path>,
) -> Result<(), Failure> {
    let sys = load(manifest)?;
    let orders = sweep::parse_orders(orders, sys.order()).map_err(Failure::Usage)?;
    let opts = SweepOptions { eps_reg: g.eps_reg, eps_trunc: g.eps_trunc, tol: tolerances(g), threads: g.threads };
    let prep = Prepared::new(&sys, opts)?;
    let rows = sweep::sweep(&prep, method, repr, &orders)?;
    let text = sweep::format_csv(&rows);
    match csv {
        Some(p) => write_file(p, &text)?,
        None => print!("{text}"),
    }
    if let Some(p) = svg_path {
        let title = format!("{} / {}", method.name(), repr.name());
        write_file(p, &svg::plot(&rows, &title))?;
    }
    let violations: Vec<String> = rows.iter().flat_map(|r| r.violations(opts.tol.hinf_rel)).collect();
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Failure::Violation(violations))
    }
}

/// `λ_min(−A_cᵀQ_c − Q_cA_c)` relative to `‖A_c‖‖Q_c‖`.
fn kyp_margin(a: &Mat, q: &Mat) -> Result<f64, phbal::Error> {
    let w = linalg::symmetrize(&(-(a.transpose() * q) - q * a));
    let scale = (linalg::norm2(a) * linalg::norm2(q)).max(f64::MIN_POSITIVE);
    Ok(mateq::lambda_min(&w)? / scale)
}

fn controller(manifest: &Path, r: usize, method: CtrlMethod, weight: Option<&Path>, out: &Path) -> Result<(), Failure> {
    let sys = load(manifest)?;
    if r == 0 || r > sys.order() {
        return Err(Failure::Usage(format!("order must lie in 1..={}", sys.order())));
    }
    create_dir(out)?;
    let mut lines = vec![];
    let (ctrl, order, gap, margin) = match method {
        CtrlMethod::Alg1 => {
            if weight.is_some() {
                return Err(Failure::Usage("--weight applies to alg2 only".into()));
            }
            let res = lqg::algorithm1_pipeline(&sys, r)?;
            let ph = res.controller.ph_realization.clone().expect("algorithm 1 yields a pH controller");
            io::write_manifest(&out.join("controller.phmanifest"), &ph)?;
            let gap = phbal::bounds::gap_bound(res.transform.sigma.get(res.order..).unwrap_or(&[]));
            let margin = kyp_margin(&res.controller.state_space.a, &ph.q)?;
            (res.controller, res.order, gap, margin)
        }
        CtrlMethod::Alg2 => {
            let w = weight.map(io::read_matrix_market).transpose()?;
            let res = lqg::q_conjugated_pipeline_weighted(&sys, r, w.as_ref())?;
            let ups = &res.transform.sigma;
            let sig: Vec<f64> = ups.get(res.order..).unwrap_or(&[]).iter().map(|u| u.sqrt()).collect();
            let gap = phbal::bounds::gap_bound(&sig);
            let margin = kyp_margin(&res.controller.state_space.a, &res.reduced.q)?;
            (res.controller, res.order, gap, margin)
        }
    };
    let ss = &ctrl.state_space;
    for (key, m) in [("A", &ss.a), ("B", &ss.b), ("C", &ss.c)] {
        io::write_matrix_market(&out.join(format!("controller_{key}.mtx")), m)?;
    }
    let ctrl_abscissa = mateq::spectral_abscissa(&ss.a)?;
    let cl_abscissa = mateq::spectral_abscissa(&lqg::interconnect(&sys, &ctrl)?.a)?;
    let feasible = margin >= -1e-8;
    let method_name = match method {
        CtrlMethod::Alg1 => "alg1",
        CtrlMethod::Alg2 => "alg2",
    };
    lines.push(json!({"check": "order", "method": method_name, "requested": r, "value": order}));
    lines.push(json!({"check": "kyp_margin", "value": margin, "pass": feasible}));
    lines.push(json!({"check": "controller_abscissa", "value": ctrl_abscissa, "pass": ctrl_abscissa < 0.0}));
    lines.push(json!({"check": "closed_loop_abscissa", "value": cl_abscissa, "pass": cl_abscissa < 0.0}));
    lines.push(json!({"check": "gap_bound", "value": gap}));
    lines.push(json!({"check": "ph_controller", "pass": feasible && ctrl_abscissa < 0.0}));
    let text: String = lines.iter().map(|l| format!("{l}\n")).collect();
    write_file(&out.join("certificate.jsonl"), &text)?;
    print!("{text}");
    if !feasible {
        log::warn!("controller admits no pH realization with the reduced Hamiltonian (margin {margin:.4e})");
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let g = cli.global;
    match cli.cmd {
        Cmd::Benchmark { which } => benchmark(which),
        Cmd::Sweep { manifest, method, representation, orders, csv, svg } => {
            run_sweep(&g, &manifest, method, representation, &orders, csv.as_deref(), svg.as_deref())
        }
        Cmd::Controller { manifest, r, method, weight, out } => controller(&manifest, r, method, weight.as_deref(), &out),
        Cmd::Verify { scope, inject_fault } => {
            let checks = verify::run(&scope, g.seed, inject_fault).map_err(Failure::Usage)?;
            let mut ok = true;
            for c in &checks {
                match &c.outcome {
                    Ok(()) => println!("PASS {:<13} {}", c.module, c.name),
                    Err(msg) => {
                        ok = false;
                        println!("FAIL {:<13} {}: {msg}", c.module, c.name);
                    }
                }
            }
            if ok {
                Ok(())
            } else {
                Err(Failure::Verification)
            }
        }
    }
}

/// OpenBLAS picks a broken kernel set on some CPUs unless the core type is
/// pinned, so re-launch with it set when the caller did not choose one.
#[cfg(all(unix, target_arch = "x86_64"))]
fn pin_blas_core() {
    use std::os::unix::process::CommandExt;
    if std::env::var_os("OPENBLAS_CORETYPE").is_some() {
        return;
    }
    if let Ok(exe) = std::env::current_exe() {
        let err = std::process::Command::new(exe)
            .args(std::env::args_os().skip(1))
            .env("OPENBLAS_CORETYPE", "Haswell")
            .exec();
        eprintln!("warning: could not re-launch with OPENBLAS_CORETYPE set: {err}");
    }
}

#[cfg(not(all(unix, target_arch = "x86_64")))]
fn pin_blas_core() {}

fn main() -> ExitCode {
    pin_blas_core();
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PHBAL_LOG", "warn")).init();
    let cli = Cli::parse();
    info!("phbal {}", env!("CARGO_PKG_VERSION"));
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(m) => eprintln!("error: {m}"),
                Failure::Verification => eprintln!("error: verification failed"),
                Failure::Violation(v) => {
                    for line in v {
                        eprintln!("bound violated: {line}");
                    }
                }
                Failure::Solver(e) => eprintln!("solver failure: {e}"),
                Failure::Io(m) => eprintln!("i/o error: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}
