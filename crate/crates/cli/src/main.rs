//! `weylflow`: run the identity suite, reduced Ricci flows and the steady
//! soliton solver.

mod output;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use weylflow::catalog::{default_entries, entry_from_toml, from_selector, CatalogEntry, FAMILIES};
use weylflow::flow::{flow_header, integrate_flow, singularity_type, FlowFamily, SingularityType};
use weylflow::identities::{run_suite_filtered, Status, REGISTRY};
use weylflow::soliton::{bryant_residual, bryant_solve};

#[derive(Parser, Debug)]
#[command(
    name = "weylflow",
    version,
    about = "Curvature identities, reduced Ricci flows and steady solitons"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FamilyArg {
    RoundSphere,
    ProductSpheres,
    Cylinder,
    Flat,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run identity checks over catalog metrics.
    Check {
        /// Every built-in catalog entry.
        #[arg(long)]
        all: bool,
        /// Metric selector `family` or `family:key=value,...` (repeatable).
        #[arg(long = "metric", value_name = "SELECTOR")]
        metrics: Vec<String>,
        /// TOML file describing one extra metric (repeatable).
        #[arg(long = "catalog-file", value_name = "PATH")]
        catalog_files: Vec<PathBuf>,
        /// Restrict to these check ids (repeatable).
        #[arg(long = "check", value_name = "ID")]
        checks: Vec<String>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        points: usize,
        #[arg(long, value_name = "PATH")]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Integrate a reduced Ricci flow and print its trajectory as CSV.
    Flow {
        #[arg(long, value_enum)]
        family: FamilyArg,
        /// Dimension of the round sphere, cylinder or flat space.
        #[arg(long, default_value_t = 4)]
        n: usize,
        /// Dimensions of the two sphere factors.
        #[arg(long, default_value_t = 2)]
        p: usize,
        #[arg(long, default_value_t = 2)]
        q: usize,
        /// Initial radii of the two sphere factors.
        #[arg(long, default_value_t = 1.0)]
        a0: f64,
        #[arg(long, default_value_t = 1.0)]
        b0: f64,
        /// Initial radius of the round sphere or of the cylinder cross-section.
        #[arg(long, default_value_t = 1.0)]
        r0: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        /// Step count; by default the flow runs until a scale collapses
        /// (or for 1000 steps when it is immortal).
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, value_name = "PATH")]
        output: Option<PathBuf>,
    },
    /// Solve the steady rotationally symmetric soliton; CSV profile on the
    /// output, JSON summary on stderr.
    Bryant {
        #[arg(long, default_value_t = 4)]
        n: usize,
        #[arg(long, default_value_t = 4.0)]
        length: f64,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Number of profile rows.
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, value_name = "PATH")]
        output: Option<PathBuf>,
    },
    /// List metric families and checks.
    List,
}

/// Failure with its exit code: 1 for failed checks or runtime errors,
/// 2 for unusable input.
struct Failure {
    code: u8,
    message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn runtime(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

fn emit(path: Option<&PathBuf>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| runtime(format!("writing {}: {e}", p.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| runtime(format!("writing stdout: {e}"))),
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("WEYLFLOW_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| usage(format!("WEYLFLOW_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| runtime(e.to_string()))
}

#[allow(clippy::too_many_arguments)]
fn check(
    all: bool,
    metrics: &[String],
    files: &[PathBuf],
    checks: &[String],
    seed: u64,
    points: usize,
    output: Option<&PathBuf>,
    format: Format,
) -> Result<(), Failure> {
    if !all && metrics.is_empty() && files.is_empty() {
        return Err(usage("check needs --all, --metric or --catalog-file"));
    }
    if let Some(bad) = checks.iter().find(|c| !REGISTRY.iter().any(|d| d.id == c.as_str())) {
        return Err(usage(format!("unknown check `{bad}`; see `weylflow list`")));
    }
    let mut entries: Vec<CatalogEntry> = if all { default_entries() } else { Vec::new() };
    for m in metrics {
        entries.push(from_selector(m).map_err(|e| usage(e.to_string()))?);
    }
    for f in files {
        let src = std::fs::read_to_string(f).map_err(|e| usage(format!("reading {}: {e}", f.display())))?;
        entries.push(entry_from_toml(&src).map_err(|e| usage(format!("{}: {e}", f.display())))?);
    }
    let reports = run_suite_filtered(&entries, seed, points, |d| checks.is_empty() || checks.iter().any(|c| c == d.id));
    let text = match format {
        Format::Json => {
            let labels: Vec<String> = entries.iter().map(CatalogEntry::label).collect();
            let header = json!({
                "tool": "weylflow",
                "version": env!("CARGO_PKG_VERSION"),
                "seed": seed,
                "points": points,
                "metrics": labels,
                "checks": checks,
            });
            output::reports_json(header, &reports)
        }
        Format::Csv => output::reports_csv(&reports),
    };
    emit(output, &text)?;
    let failed: Vec<String> = reports
        .iter()
        .filter(|r| !r.pass || r.status == Status::Error)
        .map(|r| format!("{} on {}", r.check_id, r.metric))
        .collect();
    eprintln!("{} reports, {} failed", reports.len(), failed.len());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(runtime(format!("failed: {}", failed.join("; "))))
    }
}

#[allow(clippy::too_many_arguments)]
fn flow(
    family: FamilyArg,
    n: usize,
    p: usize,
    q: usize,
    a0: f64,
    b0: f64,
    r0: f64,
    dt: f64,
    steps: Option<usize>,
    output: Option<&PathBuf>,
) -> Result<(), Failure> {
    let positive = |name: &str, v: f64| {
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(usage(format!("--{name} must be positive, got {v}")))
        }
    };
    let dims = |name: &str, v: usize, min: usize| {
        if (min..=8).contains(&v) {
            Ok(v)
        } else {
            Err(usage(format!("--{name} must lie in {min}..=8, got {v}")))
        }
    };
    let fam = match family {
        FamilyArg::RoundSphere => FlowFamily::RoundSphere {
            n: dims("n", n, 2)?,
            r2: positive("r0", r0)?.powi(2),
        },
        FamilyArg::ProductSpheres => FlowFamily::ProductSpheres {
            p: dims("p", p, 2)?,
            q: dims("q", q, 2)?,
            a2: positive("a0", a0)?.powi(2),
            b2: positive("b0", b0)?.powi(2),
        },
        FamilyArg::Cylinder => FlowFamily::Cylinder {
            n: dims("n", n, 3)?,
            s2: positive("r0", r0)?.powi(2),
        },
        FamilyArg::Flat => FlowFamily::Flat { n: dims("n", n, 2)? },
    };
    positive("dt", dt)?;
    let init = fam.initial_state();
    let steps = match steps {
        Some(s) => s,
        None => {
            // linear scales reach zero at min s0/|rate|
            let rate = fam.rhs(&init);
            let horizon = init
                .iter()
                .zip(&rate)
                .filter(|(_, r)| **r < 0.0)
                .map(|(s, r)| s / -r)
                .fold(f64::INFINITY, f64::min);
            if horizon.is_finite() {
                (horizon / dt).ceil() as usize + 1
            } else {
                1000
            }
        }
    };
    let traj = integrate_flow(&fam, &init, dt, steps).map_err(|e| usage(e.to_string()))?;
    let rows = traj.rows(&fam.base_point()).map_err(|e| runtime(e.to_string()))?;
    emit(output, &output::rows_csv(&flow_header(&fam), &rows))?;
    let kind = match singularity_type(&traj) {
        Ok(SingularityType::TypeI { limit }) => json!({"type": "type_i", "limit": limit}),
        Ok(SingularityType::TypeIIa) => json!({"type": "type_iia"}),
        Ok(SingularityType::NoSingularity) => json!({"type": "none"}),
        Err(e) => json!({"type": "inconclusive", "reason": e.to_string()}),
    };
    let summary = json!({
        "schema": output::SCHEMA,
        "family": fam.name(),
        "steps": traj.times.len() - 1,
        "end": traj.end(),
        "blowup": traj.blowup,
        "stopped_early": traj.stopped_early,
        "singularity": kind,
    });
    eprint!("{}", output::to_json(&summary));
    Ok(())
}

fn bryant(n: usize, length: f64, tol: f64, samples: usize, output: Option<&PathBuf>) -> Result<(), Failure> {
    if !(4..=6).contains(&n) {
        return Err(usage(format!("--n must lie in 4..=6, got {n}")));
    }
    if !(length > 0.0 && length.is_finite()) || tol.is_nan() || tol <= 0.0 || samples < 2 {
        return Err(usage("--length and --tol must be positive and --samples at least 2"));
    }
    let profile = bryant_solve(n, length, tol).map_err(|e| runtime(e.to_string()))?;
    let start = profile.t[0];
    let mut rows = Vec::with_capacity(samples);
    for k in 0..samples {
        let t = start + (length - start) * k as f64 / (samples - 1) as f64;
        rows.push(profile.row(t).map_err(|e| runtime(e.to_string()))?.to_vec());
    }
    let header: Vec<String> = ["t", "h", "h1", "h2", "f1", "R", "lambda", "mu"].map(String::from).to_vec();
    emit(output, &output::rows_csv(&header, &rows))?;
    let (worst_t, residual) = bryant_residual(&profile, 16).map_err(|e| runtime(e.to_string()))?;
    let tip = profile.row(start).map_err(|e| runtime(e.to_string()))?;
    let end = profile.row(length).map_err(|e| runtime(e.to_string()))?;
    let summary = json!({
        "schema": output::SCHEMA,
        "n": n,
        "length": length,
        "step": profile.step,
        "tip_scalar_curvature": tip[5],
        "end_h": end[1],
        "end_f1": end[4],
        "max_relative_residual": residual,
        "worst_t": worst_t,
        "tol": tol,
    });
    eprint!("{}", output::to_json(&summary));
    Ok(())
}

fn list() -> Result<(), Failure> {
    let mut out = String::from("families:\n");
    for f in FAMILIES {
        out.push_str(&format!("  {f}\n"));
    }
    out.push_str("checks:\n");
    for d in REGISTRY.iter() {
        let flow = if d.needs_flow { " [flow]" } else { "" };
        out.push_str(&format!("  {:<24} tol {:<8.0e} {}{flow}\n", d.id, d.tolerance, d.description));
    }
    emit(None, &out)
}

fn run(cli: Cli) -> Result<(), Failure> {
    configure_threads()?;
    match cli.command {
        Command::Check {
            all,
            metrics,
            catalog_files,
            checks,
            seed,
            points,
            output,
            format,
        } => check(all, &metrics, &catalog_files, &checks, seed, points, output.as_ref(), format),
        Command::Flow {
            family,
            n,
            p,
            q,
            a0,
            b0,
            r0,
            dt,
            steps,
            output,
        } => flow(family, n, p, q, a0, b0, r0, dt, steps, output.as_ref()),
        Command::Bryant {
            n,
            length,
            tol,
            samples,
            output,
        } => bryant(n, length, tol, samples, output.as_ref()),
        Command::List => list(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("weylflow: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
