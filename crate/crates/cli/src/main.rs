//! `kinbody`: command-line front end for the kinbody library.
//!
//! Exit codes: 0 success, 1 configuration error, 2 numerical
//! non-convergence, 3 internal failure.

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use kinbody::analysis::{default_tail_window, detect_reversal, envelope_curves, fit_tail_exponent, verify_envelopes};
use kinbody::config::{parse_config, RunConfig};
use kinbody::criteria::{classify, sweep, Classification, Side, SweepGrid, DEFAULT_MARGINAL_TOL};
use kinbody::equilibrium::{motion_class_params, solve_equilibrium, MotionClassParams, MotionMode, EQUILIBRIUM_BRACKET};
use kinbody::kernels::{check_mass_conservation, check_power_law, Kernel};
use kinbody::solver::fixed_point_solve;
use kinbody::{fmt_f64, montecarlo, Error};

#[derive(Parser)]
#[command(name = "kinbody", version, about = "Body in a rarefied gas with diffuse reflection")]
struct Cli {
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Overrides `output_dir` from the config file.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mass conservation and small-velocity power law of the kernel.
    ValidateKernel {
        config: PathBuf,
        /// Upper end of the power-law window; defaults to `body.gamma` or 0.05.
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Reversal criterion at one equilibrium velocity.
    Criterion {
        config: PathBuf,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        v_inf: f64,
        #[arg(long, value_enum, default_value_t = SideArg::Right)]
        side: SideArg,
        #[arg(long, default_value_t = DEFAULT_MARGINAL_TOL)]
        tol: f64,
    },
    /// Equilibrium velocity and motion-class rates.
    Equilibrium {
        config: PathBuf,
        #[command(flatten)]
        mode: ModeArgs,
    },
    /// Fixed-point solution of the body trajectory.
    Solve {
        config: PathBuf,
        #[command(flatten)]
        mode: ModeArgs,
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long)]
        fp_tol: Option<f64>,
    },
    /// Particle simulation of the free body.
    Mc {
        config: PathBuf,
        #[arg(long)]
        particles: Option<usize>,
        #[arg(long)]
        replicas: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long, default_value_t = EQUILIBRIUM_BRACKET)]
        v_max: f64,
    },
    /// Z-scores of a deterministic trajectory against a particle run.
    Compare {
        mc_csv: PathBuf,
        solve_csv: PathBuf,
        /// Equilibrium velocity; read from the trajectory file when absent.
        #[arg(long, allow_negative_numbers = true)]
        v_inf: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Criterion over a parameter grid.
    Sweep {
        config: PathBuf,
        /// Comma list or `start:stop:n`.
        #[arg(long)]
        alpha: Option<String>,
        #[arg(long)]
        beta: Option<String>,
        #[arg(long)]
        v_inf: Option<String>,
        #[arg(long)]
        m: Option<String>,
        #[arg(long, value_enum, value_delimiter = ',')]
        side: Vec<SideArg>,
        #[arg(long, default_value_t = DEFAULT_MARGINAL_TOL)]
        tol: f64,
    },
    /// Tail exponent and crossings of a trajectory file.
    Fit {
        trajectory: PathBuf,
        /// Config used to derive `t0` and the expected exponent.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        mode: ModeArgs,
        #[arg(long)]
        t0: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        expected: Option<f64>,
        #[arg(long)]
        lo: Option<f64>,
        #[arg(long)]
        hi: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone, Copy)]
struct ModeArgs {
    #[arg(long, value_enum, default_value_t = ModeArg::Auto)]
    mode: ModeArg,
    /// Upper end of the equilibrium search bracket.
    #[arg(long, default_value_t = EQUILIBRIUM_BRACKET)]
    v_max: f64,
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Eq)]
enum ModeArg {
    Auto,
    Irreversal,
    Reversal,
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Eq)]
enum SideArg {
    Left,
    Right,
}

impl From<SideArg> for Side {
    fn from(s: SideArg) -> Self {
        match s {
            SideArg::Left => Side::Left,
            SideArg::Right => Side::Right,
        }
    }
}

#[derive(Debug)]
enum Failure {
    Config(String),
    NonConvergence(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::NonConvergence(_) => 2,
            Failure::Internal(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::NonConvergence(m) => write!(f, "no convergence: {m}"),
            Failure::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let m = e.to_string();
        match e {
            Error::Config(_) | Error::Domain(_) | Error::OutOfRange(_) => Failure::Config(m),
            Error::NonConvergence { .. } | Error::Quadrature { .. } | Error::Bracket { .. } => {
                Failure::NonConvergence(m)
            }
            Error::VelocityBounds { .. } | Error::DegenerateWindow(_) => Failure::Internal(m),
        }
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Internal(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let jobs = cli.jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if jobs == 0 {
        eprintln!("config error: --jobs must be >= 1");
        return ExitCode::from(1);
    }
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("internal error: {e}");
            return ExitCode::from(3);
        }
    };
    match pool.install(|| dispatch(cli.command, jobs, cli.output_dir.as_deref())) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.code())
        }
    }
}

fn dispatch(command: Command, jobs: usize, out_dir: Option<&Path>) -> Outcome {
    match command {
        Command::ValidateKernel { config, gamma } => validate_kernel(&load(&config, out_dir)?, gamma),
        Command::Criterion { config, v_inf, side, tol } => criterion(&load(&config, out_dir)?, v_inf, side.into(), tol),
        Command::Equilibrium { config, mode } => equilibrium(&load(&config, out_dir)?, mode),
        Command::Solve { config, mode, t_max, steps, depth, fp_tol } => {
            let mut cfg = load(&config, out_dir)?;
            if t_max.is_some() {
                cfg.solver.t_max = t_max;
            }
            if let Some(n) = steps {
                cfg.solver.n_steps = n;
            }
            if let Some(d) = depth {
                cfg.solver.depth_n = d;
            }
            if let Some(t) = fp_tol {
                cfg.solver.fp_tol = t;
            }
            cfg.solver.validate()?;
            solve(&cfg, mode)
        }
        Command::Mc { config, particles, replicas, seed, t_max, v_max } => {
            let mut cfg = load(&config, out_dir)?;
            if let Some(n) = particles {
                cfg.mc.n_particles = n;
            }
            if let Some(r) = replicas {
                cfg.mc.replicas = r;
            }
            if let Some(s) = seed {
                cfg.mc.seed = Some(s);
            }
            if let Some(t) = t_max {
                cfg.mc.t_max = t;
            }
            cfg.mc.validate()?;
            mc(&cfg, v_max)
        }
        Command::Compare { mc_csv, solve_csv, v_inf, out } => compare(&mc_csv, &solve_csv, v_inf, out.as_deref()),
        Command::Sweep { config, alpha, beta, v_inf, m, side, tol } => {
            let cfg = load(&config, out_dir)?;
            let grid = SweepGrid {
                alpha: parse_axis(alpha.as_deref(), "alpha")?,
                beta: parse_axis(beta.as_deref(), "beta")?,
                v_inf: parse_axis(v_inf.as_deref(), "v-inf")?,
                m: parse_axis(m.as_deref(), "m")?,
                sides: side.into_iter().map(Side::from).collect(),
            };
            run_sweep(&cfg, &grid, tol, jobs)
        }
        Command::Fit { trajectory, config, mode, t0, expected, lo, hi, out } => {
            let cfg = config.map(|c| load(&c, out_dir)).transpose()?;
            fit(&trajectory, cfg.as_ref(), mode, t0, expected, (lo, hi), out.as_deref())
        }
    }
}

fn load(path: &Path, out_dir: Option<&Path>) -> Result<RunConfig, Failure> {
    let mut cfg = parse_config(path)?;
    if let Some(d) = out_dir {
        cfg.output_dir = d.to_path_buf();
    }
    Ok(cfg)
}

/// `a,b,c` or `start:stop:n` (inclusive, `n >= 2`).
fn parse_axis(text: Option<&str>, name: &str) -> Result<Vec<f64>, Failure> {
    let Some(text) = text else { return Ok(Vec::new()) };
    let bad = || Failure::Config(format!("--{name}: cannot parse `{text}`"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() == 3 {
        let (a, b) = (num(parts[0])?, num(parts[1])?);
        let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
        if n < 2 {
            return Err(bad());
        }
        return Ok((0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect());
    }
    if parts.len() != 1 {
        return Err(bad());
    }
    text.split(',').map(num).collect()
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<usize, Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Internal(format!("{}: {e}", dir.display())))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    let mut n = 0;
    for row in rows {
        w.write_record(&row)?;
        n += 1;
    }
    w.flush().map_err(|e| Failure::Internal(e.to_string()))?;
    Ok(n)
}

fn print_csv(header: &[&str], row: &[String]) -> Result<(), Failure> {
    let mut w = csv::Writer::from_writer(std::io::stdout());
    w.write_record(header)?;
    w.write_record(row)?;
    w.flush().map_err(|e| Failure::Internal(e.to_string()))
}

/// Reads the named columns of a CSV file with a header row.
fn read_columns(path: &Path, names: &[&str]) -> Result<Vec<Vec<f64>>, Failure> {
    let cfg_err = |m: String| Failure::Config(format!("{}: {m}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| cfg_err(e.to_string()))?;
    let header = r.headers().map_err(|e| cfg_err(e.to_string()))?.clone();
    let idx: Vec<usize> = names
        .iter()
        .map(|n| header.iter().position(|h| h == *n).ok_or_else(|| cfg_err(format!("missing column `{n}`"))))
        .collect::<Result<_, _>>()?;
    let mut cols = vec![Vec::new(); names.len()];
    for rec in r.records() {
        let rec = rec.map_err(|e| cfg_err(e.to_string()))?;
        for (c, &i) in cols.iter_mut().zip(&idx) {
            let s = rec.get(i).unwrap_or("");
            c.push(s.parse::<f64>().map_err(|_| cfg_err(format!("bad number `{s}`")))?);
        }
    }
    Ok(cols)
}

fn resolve_mode(kernel: &Kernel, v_inf: f64, mode: ModeArg) -> Result<MotionMode, Failure> {
    match mode {
        ModeArg::Irreversal => Ok(MotionMode::Irreversal),
        ModeArg::Reversal => Ok(MotionMode::Reversal),
        ModeArg::Auto => {
            let rep = classify(kernel, v_inf, Side::Right, DEFAULT_MARGINAL_TOL)?;
            rep.class.mode().ok_or_else(|| {
                Failure::Config(format!("criterion is marginal (margin {:e}); pass --mode explicitly", rep.margin))
            })
        }
    }
}

fn setup(cfg: &RunConfig, mode: ModeArgs) -> Result<(Kernel, MotionClassParams), Failure> {
    let kernel = cfg.kernel()?;
    let body = cfg.body()?;
    let v_inf = solve_equilibrium(&kernel, body, mode.v_max)?;
    let m = resolve_mode(&kernel, v_inf, mode.mode)?;
    let params = motion_class_params(&kernel, body, v_inf, m)?;
    Ok((kernel, params))
}

fn validate_kernel(cfg: &RunConfig, gamma: Option<f64>) -> Outcome {
    let kernel = cfg.kernel()?;
    let gamma = gamma.or(cfg.body.as_ref().map(|b| b.gamma)).unwrap_or(0.05);
    let grid: Vec<f64> = [1e-3, 1e-2, 1e-1, 1.0].iter().flat_map(|&u| [-u, u]).collect();
    let mass = check_mass_conservation(&kernel, &grid, 1e-8)?;
    let power = check_power_law(&kernel, gamma)?;
    let path = cfg.output_dir.join("kernel_mass.csv");
    write_csv(
        &path,
        &["u", "integral", "target", "abs_error"],
        mass.rows.iter().map(|r| vec![fmt_f64(r.u), fmt_f64(r.integral), fmt_f64(r.target), fmt_f64(r.abs_error)]),
    )?;
    println!(
        "mass max_abs_error={:e} pass={} p_est={:.4} p_declared={} monotone={}; wrote {}",
        mass.max_abs_error,
        mass.pass,
        power.p_est,
        kernel.p_declared(),
        power.monotone_ok,
        path.display()
    );
    if !mass.pass {
        return Err(Failure::Config(format!("kernel violates mass conservation by {:e}", mass.max_abs_error)));
    }
    Ok(())
}

const SWEEP_HEADER: [&str; 9] = ["alpha", "beta", "v_inf", "m", "side", "integral", "threshold", "margin", "class"];

fn criterion(cfg: &RunConfig, v_inf: f64, side: Side, tol: f64) -> Outcome {
    let kernel = cfg.kernel()?;
    let rep = classify(&kernel, v_inf, side, tol)?;
    let s = kernel.spec();
    let path = cfg.output_dir.join("criterion.csv");
    write_csv(
        &path,
        &SWEEP_HEADER,
        [vec![
            fmt_f64(s.alpha),
            fmt_f64(s.beta),
            fmt_f64(v_inf),
            fmt_f64(s.m),
            side.to_string(),
            fmt_f64(rep.integral),
            fmt_f64(rep.threshold),
            fmt_f64(rep.margin),
            rep.class.to_string(),
        ]],
    )?;
    println!("{} (integral {:e}, threshold {:e}, margin {:e})", rep.class, rep.integral, rep.threshold, rep.margin);
    Ok(())
}

fn equilibrium(cfg: &RunConfig, mode: ModeArgs) -> Outcome {
    let (_, params) = setup(cfg, mode)?;
    let header = ["v_inf", "b0", "b_inf", "t0"];
    let row = vec![fmt_f64(params.v_inf), fmt_f64(params.b0), fmt_f64(params.b_inf), fmt_f64(params.t0)];
    write_csv(&cfg.output_dir.join("equilibrium.csv"), &header, [row.clone()])?;
    print_csv(&header, &row)
}

fn solve(cfg: &RunConfig, mode: ModeArgs) -> Outcome {
    let (kernel, params) = setup(cfg, mode)?;
    let body = cfg.body()?;
    let res = fixed_point_solve(&kernel, body, &params, &cfg.solver)?;
    for w in &res.warnings {
        eprintln!("warning: {w}");
    }
    let times = res.trajectory.times();
    let v = &res.trajectory.values;
    let env = verify_envelopes(&times, v, &params);
    let (lo, hi) = envelope_curves(&times, &params, env.fitted_constants);
    let rows = (0..times.len()).map(|i| {
        vec![
            fmt_f64(times[i]),
            fmt_f64(v[i]),
            fmt_f64(v[i] - params.v_inf),
            fmt_f64(res.residual.r[i]),
            fmt_f64(res.residual.r_l[i]),
            fmt_f64(res.residual.r_r[i]),
            fmt_f64(lo[i]),
            fmt_f64(hi[i]),
        ]
    });
    let path = cfg.output_dir.join("solve.csv");
    write_csv(&path, &["t", "V", "V_minus_Vinf", "R_W", "r_L", "r_R", "class_envelope_lo", "class_envelope_hi"], rows)?;
    println!(
        "{:?}: converged in {} iterations, residual {:e}, v_inf {}, t0 {:.6}; wrote {}",
        params.mode,
        res.iterations,
        res.final_residual,
        params.v_inf,
        params.t0,
        path.display()
    );
    Ok(())
}

fn mc(cfg: &RunConfig, v_max: f64) -> Outcome {
    let kernel = cfg.kernel()?;
    let body = cfg.body()?;
    let v_inf = solve_equilibrium(&kernel, body, v_max)?;
    let res = montecarlo::run(&kernel, body, v_inf, &cfg.mc, cfg.mc_seed())?;
    let rows = (0..res.times.len()).map(|i| {
        vec![fmt_f64(res.times[i]), fmt_f64(res.mean[i]), fmt_f64(res.se[i]), res.n_collisions[i].to_string()]
    });
    let path = cfg.output_dir.join("mc.csv");
    write_csv(&path, &["t", "V_mean", "V_se", "n_collisions_cum"], rows)?;
    println!(
        "{} replicas x {} particles, {} collisions, bookkeeping {:e}; wrote {}",
        cfg.mc.replicas,
        cfg.mc.n_particles,
        res.n_collisions.last().copied().unwrap_or(0),
        res.bookkeeping,
        path.display()
    );
    Ok(())
}

fn compare(mc_csv: &Path, solve_csv: &Path, v_inf: Option<f64>, out: Option<&Path>) -> Outcome {
    let m = read_columns(mc_csv, &["t", "V_mean", "V_se"])?;
    let d = read_columns(solve_csv, &["t", "V", "V_minus_Vinf"])?;
    let v_inf = match v_inf {
        Some(v) => v,
        None => {
            let (v, dv) = (d[1].first(), d[2].first());
            match (v, dv) {
                (Some(v), Some(dv)) => v - dv,
                _ => return Err(Failure::Config(format!("{}: no rows", solve_csv.display()))),
            }
        }
    };
    let rep = montecarlo::compare(&m[0], &m[1], &m[2], &d[0], &d[1], v_inf);
    let header =
        ["max_z_score", "frac_within_3se", "n_nodes", "class_agreement", "mc_crossed", "det_crossed", "z_threshold"];
    let row = vec![
        fmt_f64(rep.max_z_score),
        fmt_f64(rep.frac_within_3se),
        rep.n_nodes.to_string(),
        rep.class_agreement.to_string(),
        rep.mc_reversal.crossed.to_string(),
        rep.det_reversal.crossed.to_string(),
        fmt_f64(rep.z_threshold),
    ];
    if let Some(p) = out {
        write_csv(p, &header, [row.clone()])?;
    }
    print_csv(&header, &row)
}

fn run_sweep(cfg: &RunConfig, grid: &SweepGrid, tol: f64, jobs: usize) -> Outcome {
    let rows = sweep(&cfg.kernel, grid, tol, jobs)?;
    let n_err = rows.iter().filter(|r| r.result.is_err()).count();
    let csv_rows = rows.iter().map(|r| {
        let mut row = vec![fmt_f64(r.alpha), fmt_f64(r.beta), fmt_f64(r.v_inf), fmt_f64(r.m), r.side.to_string()];
        match &r.result {
            Ok(rep) => row.extend([
                fmt_f64(rep.integral),
                fmt_f64(rep.threshold),
                fmt_f64(rep.margin),
                rep.class.to_string(),
            ]),
            Err(e) => row.extend(["NaN".into(), "NaN".into(), "NaN".into(), format!("error: {e}")]),
        }
        row
    });
    let path = cfg.output_dir.join("sweep.csv");
    let n = write_csv(&path, &SWEEP_HEADER, csv_rows)?;
    let count = |c: Classification| rows.iter().filter(|r| matches!(&r.result, Ok(x) if x.class == c)).count();
    println!(
        "{n} points: {} reversal, {} irreversal, {} marginal, {n_err} failed; wrote {}",
        count(Classification::Reversal),
        count(Classification::Irreversal),
        count(Classification::Marginal),
        path.display()
    );
    Ok(())
}

fn fit(
    trajectory: &Path,
    cfg: Option<&RunConfig>,
    mode: ModeArgs,
    t0: Option<f64>,
    expected: Option<f64>,
    window: (Option<f64>, Option<f64>),
    out: Option<&Path>,
) -> Outcome {
    let cols = read_columns(trajectory, &["t", "V_minus_Vinf"])?;
    let (times, d) = (&cols[0], &cols[1]);
    let t_max = *times.last().ok_or_else(|| Failure::Config(format!("{}: no rows", trajectory.display())))?;
    let params = cfg.map(|c| setup(c, mode).map(|(_, p)| p)).transpose()?;
    let t0 = t0.or(params.as_ref().map(|p| p.t0));
    let expected = expected.or(params.as_ref().map(|p| -p.tail_exponent())).unwrap_or(f64::NAN);
    let window = match window {
        (Some(lo), Some(hi)) => (lo, hi),
        (lo, hi) => {
            let t0 = t0.ok_or_else(|| Failure::Config("need --config, --t0 or both --lo and --hi".into()))?;
            let (dlo, dhi) = default_tail_window(t0, t_max)?;
            (lo.unwrap_or(dlo), hi.unwrap_or(dhi))
        }
    };
    let rate = fit_tail_exponent(times, d, 0.0, window, expected).map_err(|e| match e {
        Error::DegenerateWindow(m) => Failure::Config(format!("degenerate fit window: {m}")),
        e => e.into(),
    })?;
    let rev = detect_reversal(times, d, 0.0, 0.0);
    let header = ["slope", "r2", "expected", "t_cross", "n_crossings"];
    let row = vec![
        fmt_f64(rate.slope),
        fmt_f64(rate.r_squared),
        fmt_f64(rate.expected),
        rev.t_cross.map_or("NaN".into(), fmt_f64),
        rev.n_crossings.to_string(),
    ];
    if let Some(p) = out {
        write_csv(p, &header, [row.clone()])?;
    }
    print_csv(&header, &row)
}
