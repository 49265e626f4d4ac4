//! `rhocert` — certified decay-rate analysis from the command line.
//!
//! Subcommands: `certify` (fixed-ρ or minimized certificates as JSON),
//! `sweep` (CSV over a gain grid × multiplier families), `simulate`
//! (seeded trajectories + fitted empirical rates), `linearize` (spectral
//! radius of the loop linearized at the origin), `selftest` (embedded
//! invariant checks).
//!
//! Exit codes: 0 success/certified, 2 a well-posed problem is not
//! certifiable (infeasible), 1 any error (bad input, solver failure).

// Parameter guards are written `!(x > 0.0)` on purpose: unlike `x <= 0.0`,
// the negated form also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rhocert_core::config::{self, CertificateJson, InfeasibleJson, ProblemConfig};
use rhocert_core::{
    certify_at, fit_decay_rate, linearized_closed_loop, matrix_eigenvalues, minimize_rho,
    simulate, spectral_radius, sweep_gain, CertifyOptions, CertifyOutcome, Error, FamilySpec,
    NonlinearityModel,
};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "rhocert",
    version,
    about = "Certified exponential decay rates for feedback loops with sector-bounded nonlinearities"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Certify a decay rate: fixed ρ with --rho, otherwise minimized by bisection
    Certify(CertifyArgs),
    /// Minimize certified rates over a gain grid × multiplier families (CSV)
    Sweep(SweepArgs),
    /// Simulate the nonlinear loop from seeded random initial states and fit decay rates
    Simulate(SimArgs),
    /// Spectral radius and eigenvalues of the loop linearized at the origin
    Linearize(LinArgs),
    /// Run the embedded invariant checks
    Selftest {
        /// Print one line per check
        #[arg(long)]
        verbose: bool,
    },
}

#[derive(Args)]
struct CertifyArgs {
    /// Problem description (JSON)
    config: PathBuf,
    /// Certify exactly this rate instead of minimizing
    #[arg(long)]
    rho: Option<f64>,
    /// Minimize the certified rate (the default when --rho is absent)
    #[arg(long, conflicts_with = "rho")]
    minimize: bool,
    /// Multiplier family, e.g. "sector+off_by_k:1" (default: first family in
    /// the config, else plain sector). Parts: sector[:a,b], norm[:g],
    /// off_by_k:K, zf_fir:h0,h1,...
    #[arg(long)]
    family: Option<String>,
    /// Bisection tolerance on ρ
    #[arg(long, default_value_t = 1e-3)]
    rho_tol: f64,
    /// Interior-point feasibility tolerance
    #[arg(long, default_value_t = 1e-7)]
    solver_tol: f64,
    /// Newton-iteration cap for each feasibility solve
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    /// Frequency-grid size for the independent certificate cross-check
    #[arg(long, default_value_t = 512)]
    grid_n: usize,
}

#[derive(Args)]
struct SweepArgs {
    /// Problem description (JSON)
    config: PathBuf,
    /// Gain grid "lo:hi:count" (count points, endpoints included)
    #[arg(long, value_name = "LO:HI:N")]
    b_grid: String,
    /// ';'-separated families, e.g. "sector;sector+off_by_k:1"
    /// (default: the families listed in the config)
    #[arg(long)]
    families: Option<String>,
    /// Bisection tolerance on ρ
    #[arg(long, default_value_t = 1e-3)]
    rho_tol: f64,
    /// Worker threads (the output is identical for any value)
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Write the CSV here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimArgs {
    /// Problem description (JSON); the nonlinearity must be executable
    /// (e.g. arctan), not bounds-only
    config: PathBuf,
    /// Number of random initial states
    #[arg(long, default_value_t = 5)]
    x0_count: usize,
    /// RNG seed; identical seeds reproduce identical output files
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Simulation horizon (steps)
    #[arg(long, default_value_t = 120)]
    steps: usize,
    /// The log-linear rate fit skips this many initial steps
    #[arg(long, default_value_t = 20)]
    burn_in: usize,
    /// Initial-state entries are drawn uniformly from [-amplitude, amplitude]
    #[arg(long, default_value_t = 15.0)]
    amplitude: f64,
    /// Output directory (per-trajectory CSVs plus summary.csv)
    #[arg(long, default_value = "sim_out")]
    out: PathBuf,
}

#[derive(Args)]
struct LinArgs {
    /// Problem description (JSON)
    config: PathBuf,
    /// Linearization slope (default: the nonlinearity's upper bound β)
    #[arg(long)]
    slope: Option<f64>,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let outcome = match cli.command {
        Cmd::Certify(a) => cmd_certify(a),
        Cmd::Sweep(a) => cmd_sweep(a),
        Cmd::Simulate(a) => cmd_simulate(a),
        Cmd::Linearize(a) => cmd_linearize(a),
        Cmd::Selftest { verbose } => cmd_selftest(verbose),
    };
    match outcome {
        Ok(code) => std::process::exit(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            std::process::exit(1);
        }
    }
}

/// Parses one family token: '+'-separated multipliers, each `name[:args]`.
fn parse_family(token: &str) -> Result<Vec<FamilySpec>, String> {
    let mut specs = Vec::new();
    for part in token.split('+') {
        let part = part.trim();
        if part.is_empty() {
            return Err(format!("empty multiplier in family '{token}'"));
        }
        let (name, args) = match part.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (part, None),
        };
        let spec = match name {
            "sector" => match args {
                None => FamilySpec::Sector {
                    alpha: None,
                    beta: None,
                },
                Some(a) => {
                    let v = parse_floats(a)?;
                    if v.len() != 2 {
                        return Err(format!("sector takes two bounds 'a,b', got '{a}'"));
                    }
                    FamilySpec::Sector {
                        alpha: Some(v[0]),
                        beta: Some(v[1]),
                    }
                }
            },
            "norm" => match args {
                None => FamilySpec::Norm { gamma: None },
                Some(a) => {
                    let v = parse_floats(a)?;
                    if v.len() != 1 {
                        return Err(format!("norm takes one gain 'g', got '{a}'"));
                    }
                    FamilySpec::Norm { gamma: Some(v[0]) }
                }
            },
            "off_by_k" => {
                let a = args.ok_or("off_by_k needs a delay, e.g. off_by_k:1")?;
                let k: usize = a
                    .parse()
                    .map_err(|_| format!("off_by_k delay must be a positive integer, got '{a}'"))?;
                FamilySpec::OffByK { k }
            }
            "zf_fir" => {
                let a = args.ok_or("zf_fir needs taps, e.g. zf_fir:0,0.81")?;
                FamilySpec::ZfFir { h: parse_floats(a)? }
            }
            other => {
                // Accept the display form `off_by_<k>` as well.
                if let Some(k) = other
                    .strip_prefix("off_by_")
                    .and_then(|t| t.parse::<usize>().ok())
                {
                    FamilySpec::OffByK { k }
                } else {
                    return Err(format!(
                        "unknown multiplier '{other}' (expected sector, norm, off_by_k, zf_fir)"
                    ));
                }
            }
        };
        specs.push(spec);
    }
    Ok(specs)
}

fn parse_floats(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| format!("'{}' is not a number", t.trim()))
        })
        .collect()
}

/// `lo:hi:count` → `count` evenly spaced gains, endpoints included.
fn parse_grid(s: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("gain grid must be 'lo:hi:count', got '{s}'"));
    }
    let lo: f64 = parts[0]
        .parse()
        .map_err(|_| format!("'{}' is not a number", parts[0]))?;
    let hi: f64 = parts[1]
        .parse()
        .map_err(|_| format!("'{}' is not a number", parts[1]))?;
    let n: usize = parts[2]
        .parse()
        .map_err(|_| format!("'{}' is not a count", parts[2]))?;
    if n == 0 {
        return Err("gain grid needs at least one point".into());
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    if !(hi > lo) {
        return Err(format!("gain grid needs hi > lo, got {lo}:{hi}"));
    }
    Ok((0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect())
}

fn certify_family(
    arg: Option<&str>,
    cfg: &ProblemConfig,
) -> Result<Vec<FamilySpec>, String> {
    match arg {
        Some(token) => parse_family(token),
        None => match cfg.families.first() {
            Some(f) => Ok(f.clone()),
            None => Ok(vec![FamilySpec::Sector {
                alpha: None,
                beta: None,
            }]),
        },
    }
}

fn sweep_families(
    arg: Option<&str>,
    cfg: &ProblemConfig,
) -> Result<Vec<Vec<FamilySpec>>, String> {
    match arg {
        Some(tokens) => tokens.split(';').map(parse_family).collect(),
        None if !cfg.families.is_empty() => Ok(cfg.families.clone()),
        None => Ok(vec![vec![FamilySpec::Sector {
            alpha: None,
            beta: None,
        }]]),
    }
}

fn load_problem(
    path: &std::path::Path,
) -> Result<(ProblemConfig, rhocert_core::StateSpace, NonlinearityModel), String> {
    let cfg = config::load(path).map_err(|e| e.to_string())?;
    let g = cfg.plant_ss().map_err(|e| e.to_string())?;
    let delta = cfg.delta().map_err(|e| e.to_string())?;
    Ok((cfg, g, delta))
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("reports serialize")
    );
}

fn cmd_certify(a: CertifyArgs) -> Result<i32, String> {
    let (cfg, g, delta) = load_problem(&a.config)?;
    let family = certify_family(a.family.as_deref(), &cfg)?;
    let opts = CertifyOptions {
        solver_tol: a.solver_tol,
        solver_max_iter: a.max_iter,
        grid_n: a.grid_n,
    };
    match a.rho {
        Some(rho) => match certify_at(&g, &delta, &family, rho, &opts).map_err(|e| e.to_string())? {
            CertifyOutcome::Certified(cert) => {
                print_json(&CertificateJson::from(&*cert));
                Ok(0)
            }
            CertifyOutcome::Infeasible(report) => {
                print_json(&InfeasibleJson::from(&report));
                Ok(2)
            }
        },
        None => match minimize_rho(&g, &delta, &family, a.rho_tol, &opts) {
            Ok(cert) => {
                print_json(&CertificateJson::from(&cert));
                Ok(0)
            }
            Err(Error::BiboUncertifiable {
                family,
                best_objective,
            }) => {
                print_json(&InfeasibleJson {
                    status: "uncertifiable".into(),
                    rho: 1.0,
                    best_objective,
                    family,
                    rho_lower_limit: spectral_radius(g.a()),
                });
                Ok(2)
            }
            Err(e) => Err(e.to_string()),
        },
    }
}

fn sig9(v: f64) -> String {
    format!("{v:.8e}")
}

fn cmd_sweep(a: SweepArgs) -> Result<i32, String> {
    let (cfg, g, _delta) = load_problem(&a.config)?;
    let b_values = parse_grid(&a.b_grid)?;
    let families = sweep_families(a.families.as_deref(), &cfg)?;
    for &b in &b_values {
        cfg.delta_at_gain(b).map_err(|e| e.to_string())?;
    }
    let delta_for_b = |b: f64| {
        cfg.delta_at_gain(b)
            .expect("every grid gain was validated above")
    };
    let rows = sweep_gain(
        &g,
        &b_values,
        &families,
        a.rho_tol,
        &delta_for_b,
        &CertifyOptions::default(),
        a.jobs.max(1),
    )
    .map_err(|e| e.to_string())?;

    let mut csv = String::from("b,family,rho_cert,rho_linearized,margin,status\n");
    for row in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            row.b,
            row.family,
            row.rho_certified.map(sig9).unwrap_or_default(),
            sig9(row.rho_linearized),
            row.margin.map(sig9).unwrap_or_default(),
            row.status
        );
    }
    match &a.out {
        Some(path) => {
            std::fs::write(path, csv).map_err(|e| format!("writing {}: {e}", path.display()))?;
            eprintln!("wrote {} rows to {}", rows.len(), path.display());
        }
        None => print!("{csv}"),
    }
    Ok(0)
}

fn cmd_simulate(a: SimArgs) -> Result<i32, String> {
    let (_cfg, g, delta) = load_problem(&a.config)?;
    if !(a.amplitude > 0.0) {
        return Err("amplitude must be positive".into());
    }
    if a.x0_count == 0 {
        return Err("x0-count must be at least 1".into());
    }
    std::fs::create_dir_all(&a.out)
        .map_err(|e| format!("creating {}: {e}", a.out.display()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut summary = String::from("trajectory,fitted_rate,hit_zero,points_used,final_state_norm\n");
    for i in 0..a.x0_count {
        let x0 = nalgebra_x0(&mut rng, g.nx(), a.amplitude);
        let traj = simulate(&g, &delta, &x0, a.steps).map_err(|e| e.to_string())?;
        let fit = fit_decay_rate(&traj, a.burn_in).map_err(|e| e.to_string())?;
        let norms = traj.state_norms();

        let path = a.out.join(format!("traj_{i:02}.csv"));
        let mut file = std::io::BufWriter::new(
            std::fs::File::create(&path).map_err(|e| format!("creating {}: {e}", path.display()))?,
        );
        writeln!(file, "k,state_norm,y,u").map_err(|e| e.to_string())?;
        for (k, ((norm, y), u)) in norms
            .iter()
            .zip(&traj.outputs)
            .zip(&traj.inputs)
            .enumerate()
        {
            writeln!(file, "{k},{},{},{}", sig9(*norm), sig9(*y), sig9(*u))
                .map_err(|e| e.to_string())?;
        }
        file.flush().map_err(|e| e.to_string())?;

        let _ = writeln!(
            summary,
            "{i},{},{},{},{}",
            sig9(fit.rate),
            fit.hit_zero,
            fit.points_used,
            sig9(*norms.last().expect("horizon >= 1"))
        );
        println!(
            "trajectory {i:02}: fitted rate {:.6}{}",
            fit.rate,
            if fit.hit_zero { " (hit zero)" } else { "" }
        );
    }
    let summary_path = a.out.join("summary.csv");
    std::fs::write(&summary_path, summary)
        .map_err(|e| format!("writing {}: {e}", summary_path.display()))?;
    println!("wrote {} trajectories and summary.csv to {}", a.x0_count, a.out.display());
    Ok(0)
}

fn nalgebra_x0(rng: &mut ChaCha8Rng, n: usize, amp: f64) -> nalgebra::DVector<f64> {
    nalgebra::DVector::from_fn(n, |_, _| rng.random_range(-amp..amp))
}

fn cmd_linearize(a: LinArgs) -> Result<i32, String> {
    let (_cfg, g, delta) = load_problem(&a.config)?;
    let slope = a.slope.unwrap_or(delta.beta);
    let cl = linearized_closed_loop(&g, slope).map_err(|e| e.to_string())?;
    let sr = spectral_radius(cl.a());
    let eigs: Vec<serde_json::Value> = matrix_eigenvalues(cl.a())
        .iter()
        .map(|e| serde_json::json!({ "re": e.re, "im": e.im, "abs": e.norm() }))
        .collect();
    print_json(&serde_json::json!({
        "slope": slope,
        "spectral_radius": sr,
        "stable": sr < 1.0,
        "eigenvalues": eigs,
    }));
    Ok(0)
}

fn cmd_selftest(verbose: bool) -> Result<i32, String> {
    let report = rhocert_core::selftest::run(verbose);
    println!(
        "self-test: {} passed, {} failed",
        report.passed, report.failed
    );
    for failure in &report.failures {
        println!("  failed: {failure}");
    }
    Ok(if report.ok() { 0 } else { 1 })
}
