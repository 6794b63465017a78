use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use kangle::ambient::AmbientSpec;
use kangle::dsl::{parse_immersion, ImmersionSpec};
use kangle::geometry::Snapshot;
use kangle::harness::catalog::{builtin_catalog, find_entry};
use kangle::harness::quadrature::{run_check, Check};
use kangle::harness::report::{to_json, RunReport};
use kangle::harness::{
    empty_report, run_suite, thread_pool, HarnessError, RunOptions, SnapshotView, Target,
};
use kangle::identities::{calibrate, Tolerances};

#[derive(Parser)]
#[command(
    name = "kangle",
    version,
    about = "Kähler angles, submanifold invariants and identity residuals"
)]
struct Cli {
    /// Override the ambient: `flat` or `space_form(RHO)`.
    #[arg(long, global = true)]
    ambient: Option<String>,
    /// Write the JSON report to this path.
    #[arg(long, global = true)]
    json: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the snapshot of an immersion at one point as JSON.
    Eval {
        file: PathBuf,
        /// Comma-separated domain coordinates.
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            required = true
        )]
        point: Vec<f64>,
        #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u8).range(3..=4))]
        order: u8,
    },
    /// Evaluate identity suites at sampled points. Without a file or entry
    /// the whole catalog is run.
    Verify {
        file: Option<PathBuf>,
        #[arg(long, conflicts_with = "file")]
        entry: Option<String>,
        /// Comma-separated suite names or identity ids, or `all`.
        #[arg(long, value_delimiter = ',', default_value = "all")]
        suite: Vec<String>,
        #[arg(long, default_value_t = 64)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-7)]
        tol_abs: f64,
        #[arg(long, default_value_t = 1e-5)]
        tol_rel: f64,
        #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u8).range(3..=4))]
        order: u8,
    },
    /// Integral checks on a periodic immersion by torus quadrature.
    Integrate {
        file: Option<PathBuf>,
        #[arg(long, conflicts_with = "file")]
        entry: Option<String>,
        #[arg(long, default_value_t = 64)]
        grid: usize,
        #[arg(long, value_enum)]
        check: CheckArg,
    },
    /// List the built-in catalog.
    Catalog,
}

#[derive(Clone, Copy, ValueEnum)]
enum CheckArg {
    Stokes,
    #[value(alias = "eq2.3")]
    Energy,
}

enum Failure {
    Usage(String),
    Failed(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Failure {
        match e {
            HarnessError::Usage(_) | HarnessError::Io { .. } | HarnessError::Parse { .. } => {
                Failure::Usage(e.to_string())
            }
            _ => Failure::Failed(e.to_string()),
        }
    }
}

fn parse_ambient(text: &str, complex_dim: usize) -> Result<AmbientSpec, Failure> {
    let t: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    if t == "flat" {
        return Ok(AmbientSpec::flat(complex_dim));
    }
    let rho = t
        .strip_prefix("space_form(")
        .and_then(|r| r.strip_suffix(')'))
        .and_then(|r| r.parse::<f64>().ok())
        .filter(|r| r.is_finite())
        .ok_or_else(|| {
            Failure::Usage(format!(
                "invalid --ambient `{text}`, expected `flat` or `space_form(RHO)`"
            ))
        })?;
    Ok(AmbientSpec::space_form(complex_dim, rho))
}

fn load_spec(path: &Path) -> Result<ImmersionSpec, Failure> {
    let text =
        fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let mut spec =
        parse_immersion(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    spec.name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(spec)
}

fn targets(
    file: Option<&Path>,
    entry: Option<&str>,
    ambient: Option<&str>,
) -> Result<Vec<Target>, Failure> {
    let mut out = match (file, entry) {
        (Some(f), _) => {
            let spec = load_spec(f)?;
            vec![Target::from_spec(&spec.name.clone(), spec)]
        }
        (None, Some(name)) => {
            let e = find_entry(name)
                .ok_or_else(|| Failure::Usage(format!("unknown catalog entry `{name}`")))?;
            vec![Target::from_entry(&e)]
        }
        (None, None) => builtin_catalog().iter().map(Target::from_entry).collect(),
    };
    if let Some(a) = ambient {
        for t in out.iter_mut() {
            let amb = parse_ambient(a, 2 * t.spec.n)?;
            *t = t.clone().with_ambient(amb);
        }
    }
    Ok(out)
}

fn write_json(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    if let Some(p) = path {
        fs::write(p, text).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
    }
    Ok(())
}

fn print_summary(rep: &RunReport) {
    let c = &rep.conventions.conventions;
    println!(
        "conventions: laplacian_sign {:+}, delta_sign {:+}, form_norm {}",
        c.laplacian_sign, c.delta_sign, c.form_norm
    );
    for e in &rep.entries {
        let applicable = e.records.iter().filter(|r| r.residual.applicable).count();
        let failed: Vec<_> = e.failed_records().collect();
        if e.points_sampled == 0 {
            println!("{}", e.name);
        } else {
            println!(
                "{:<36} points {:>4}/{:<4} applicable {:>6} failed {:>4} equal angles: {}",
                e.name,
                e.points_evaluated,
                e.points_sampled,
                applicable,
                failed.len(),
                e.equal_angle_gate
            );
        }
        for r in failed.iter().take(5) {
            println!(
                "    FAIL {} at point {} abs {:.3e} rel {:.3e}",
                r.residual.id, r.point_index, r.residual.abs_residual, r.residual.rel_residual
            );
        }
        for q in &e.quadrature {
            println!(
                "    {} grid {}: lhs {:.12e} rhs {:.12e} rel {:.3e} ratio {:.3e} {}",
                q.check.name(),
                q.grid,
                q.lhs,
                q.rhs,
                q.rel_error,
                q.convergence_ratio,
                if q.pass && q.spectral { "ok" } else { "FAIL" }
            );
        }
    }
    let s = &rep.summary;
    println!(
        "summary: {} entries, {} points, {} applicable records, {} failed, {} assertion failures, {} quadrature failures: {}",
        s.entries,
        s.points,
        s.applicable,
        s.failed,
        s.assertions_failed,
        s.quadrature_failed,
        if s.pass { "PASS" } else { "FAIL" }
    );
}

fn run(cli: Cli) -> Result<bool, Failure> {
    let json = cli.json.as_deref();
    match cli.cmd {
        Cmd::Eval { file, point, order } => {
            let mut spec = load_spec(&file)?;
            if let Some(a) = &cli.ambient {
                spec.ambient = parse_ambient(a, 2 * spec.n)?;
            }
            if point.len() != spec.domain_dim() {
                return Err(Failure::Usage(format!(
                    "--point has {} coordinates, the domain of {} has {}",
                    point.len(),
                    file.display(),
                    spec.domain_dim()
                )));
            }
            let s = Snapshot::compute(&spec, &point, order as usize).map_err(|e| {
                let msg = format!("{}: {e}", file.display());
                match e {
                    kangle::geometry::GeometryError::Usage(_) => Failure::Usage(msg),
                    _ => Failure::Failed(msg),
                }
            })?;
            let text = to_json(&SnapshotView::new(&s, &spec.name));
            print!("{text}");
            write_json(json, &text)?;
            Ok(true)
        }
        Cmd::Verify {
            file,
            entry,
            suite,
            points,
            seed,
            tol_abs,
            tol_rel,
            order,
        } => {
            let ts = targets(file.as_deref(), entry.as_deref(), cli.ambient.as_deref())?;
            let opts = RunOptions {
                suites: suite,
                points,
                seed,
                order: order as usize,
                tol: Tolerances {
                    abs: tol_abs,
                    rel: tol_rel,
                },
            };
            let rep = thread_pool().install(|| run_suite(&ts, &opts))?;
            print_summary(&rep);
            write_json(json, &to_json(&rep))?;
            Ok(rep.summary.pass)
        }
        Cmd::Integrate {
            file,
            entry,
            grid,
            check,
        } => {
            if file.is_none() && entry.is_none() {
                return Err(Failure::Usage("integrate needs a file or --entry".into()));
            }
            let ts = targets(file.as_deref(), entry.as_deref(), cli.ambient.as_deref())?;
            let check = match check {
                CheckArg::Stokes => Check::Stokes,
                CheckArg::Energy => Check::Energy,
            };
            let cal = calibrate().map_err(|e| Failure::Failed(e.to_string()))?;
            let opts = RunOptions {
                points: 0,
                suites: vec![],
                ..RunOptions::default()
            };
            let mut rep = empty_report(&cal, &opts);
            let pool = thread_pool();
            for t in &ts {
                let q = pool.install(|| run_check(&t.spec, check, grid, cal.conventions))?;
                let mut e = kangle::harness::report::EntryReport {
                    name: t.name.clone(),
                    ambient: t.spec.ambient,
                    n: t.spec.n,
                    points_sampled: 0,
                    points_evaluated: 0,
                    skipped_points: vec![],
                    classification_histogram: Default::default(),
                    angle_stats: Default::default(),
                    equal_angle_gate: "not evaluated".into(),
                    assertions: vec![],
                    records: vec![],
                    diagnostics: vec![],
                    quadrature: vec![],
                };
                e.quadrature.push(q);
                rep.entries.push(e);
            }
            rep.summarize();
            print_summary(&rep);
            write_json(json, &to_json(&rep))?;
            Ok(rep.summary.pass)
        }
        Cmd::Catalog => {
            for e in builtin_catalog() {
                let spec = e.spec();
                println!(
                    "{:<36} n={} {:<18} {}",
                    e.name,
                    spec.n,
                    spec.ambient.to_string(),
                    e.description
                );
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Failed(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
