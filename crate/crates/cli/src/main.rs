use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use cco_cli::commands::{self, Outcome, Overrides};
use cco_cli::fixtures;
use cco_cli::problem::{load_problem, Instance};
use cco_cli::report::{self, ResultRecord};
use cco_core::uncertainkit::sample;

/// Chance-constrained polynomial optimization through robust ellipsoidal
/// approximation and Moment-SOS relaxations.
#[derive(Parser)]
#[command(name = "cco", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Args, Clone, Default)]
struct Flags {
    /// Uncertainty set size.
    #[arg(long, global = true)]
    gamma: Option<f64>,
    /// Risk level.
    #[arg(long, global = true)]
    eps: Option<f64>,
    /// Confidence parameter of the quantile bound.
    #[arg(long, global = true)]
    beta: Option<f64>,
    /// Stopping tolerance of the sizing loop.
    #[arg(long, global = true)]
    rho: Option<f64>,
    /// Samples for the quantile estimate (N).
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Monte Carlo samples for the violation probability (N̂).
    #[arg(long, global = true)]
    mc: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Highest relaxation order.
    #[arg(long, global = true)]
    kmax: Option<usize>,
    /// Relative duality gap required for certification.
    #[arg(long = "gap-tol", global = true)]
    gap_tol: Option<f64>,
    /// Write `<name>.txt` and `<name>.ndjson` into this directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print result records instead of the table.
    #[arg(long, global = true)]
    ndjson: bool,
}

impl Flags {
    fn overrides(&self) -> Overrides {
        Overrides {
            gamma: self.gamma,
            eps: self.eps,
            beta: self.beta,
            rho: self.rho,
            samples: self.samples,
            mc: self.mc,
            seed: self.seed,
            kmax: self.kmax,
            gap_tol: self.gap_tol,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve the robust approximation for one set size (requires --gamma).
    SolveAtGamma { problem: String },
    /// Tune the set size until the violation probability matches eps.
    Size { problem: String },
    /// Solve at --gamma (or the fixture's published value) and verify the certificate.
    Certify { problem: String },
    /// Run a bundled fixture, or `all`.
    Reproduce { id: String },
    /// Draw samples of xi and print them as CSV (--samples rows).
    Sample { problem: String },
}

/// A path to a problem file, or a bundled fixture id.
fn open(problem: &str, ov: &Overrides) -> anyhow::Result<Instance> {
    let path = Path::new(problem);
    if !path.exists() {
        if let Ok(mut p) = fixtures::problem(problem) {
            ov.apply(&mut p);
            return fixtures::instantiate(p);
        }
    }
    let inst = load_problem(path)?;
    let mut p = inst.problem.clone();
    ov.apply(&mut p);
    if p == inst.problem {
        return Ok(inst);
    }
    let samples = match &inst.model {
        cco_core::uncertainkit::RandomModel::Empirical { rows } if p.random.samples_csv.is_some() => {
            Some(rows.clone())
        }
        _ => None,
    };
    Instance::new(p, samples)
}

fn emit(flags: &Flags, stem: &str, records: &[ResultRecord]) -> anyhow::Result<()> {
    if flags.ndjson {
        print!("{}", report::ndjson(records));
    } else {
        print!("{}", report::format_table(records));
    }
    if let Some(dir) = &flags.out {
        report::write_files(dir, stem, records).with_context(|| format!("writing into {}", dir.display()))?;
    }
    Ok(())
}

fn stem(problem: &str) -> String {
    Path::new(problem)
        .file_stem()
        .map_or_else(|| problem.to_string(), |s| s.to_string_lossy().into_owned())
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let flags = cli.flags;
    let ov = flags.overrides();
    match cli.command {
        Command::SolveAtGamma { problem } => {
            let gamma = flags.gamma.context("solve-at-gamma needs --gamma")?;
            let inst = open(&problem, &ov)?;
            let (rec, rep) = commands::solve_at_gamma(&inst, gamma, &inst.robust_options())?;
            emit(&flags, &stem(&problem), &[rec])?;
            Ok(rep.is_certified())
        }
        Command::Size { problem } => {
            let inst = open(&problem, &ov)?;
            let (recs, converged) = commands::size(&inst, &inst.robust_options())?;
            emit(&flags, &stem(&problem), &recs)?;
            Ok(converged)
        }
        Command::Certify { problem } => {
            let inst = open(&problem, &ov)?;
            let gamma = match flags.gamma {
                Some(g) => g,
                None => inst
                    .problem
                    .reference
                    .iter()
                    .find(|r| (r.eps - inst.problem.risk.eps).abs() < 1e-12)
                    .and_then(|r| r.gamma)
                    .context("certify needs --gamma (the problem has no published set size at this eps)")?,
            };
            let cert = commands::certify(&inst, gamma, &inst.robust_options())?;
            emit(&flags, &stem(&problem), std::slice::from_ref(&cert.record))?;
            if !flags.ndjson {
                for c in &cert.checks {
                    println!("{:<18} {:>12.4e}  {}", c.name, c.value, if c.pass { "ok" } else { "FAILED" });
                }
            }
            Ok(cert.passed())
        }
        Command::Reproduce { id } => {
            let outcomes: Vec<(String, anyhow::Result<Outcome>)> = if id == "all" {
                commands::reproduce_all(&ov)
            } else {
                vec![(id.clone(), commands::reproduce(&id, &ov))]
            };
            let mut ok = true;
            let mut all = Vec::new();
            for (name, outcome) in outcomes {
                match outcome {
                    Ok(o) => {
                        ok &= o.success;
                        if let Some(dir) = &flags.out {
                            report::write_files(dir, &name, &o.records)?;
                        }
                        for n in &o.notes {
                            eprintln!("note: {n}");
                        }
                        all.extend(o.records);
                    }
                    Err(e) => {
                        ok = false;
                        eprintln!("{name}: {e:#}");
                    }
                }
            }
            if flags.ndjson {
                print!("{}", report::ndjson(&all));
            } else {
                print!("{}", report::format_table(&all));
            }
            Ok(ok)
        }
        Command::Sample { problem } => {
            let inst = open(&problem, &ov)?;
            let n = flags.samples.unwrap_or(inst.problem.sizing.n);
            let s = sample(&inst.model, n, inst.problem.sizing.seed)?;
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record((1..=s.dim()).map(|i| format!("xi{i}")))?;
            for row in s.rows() {
                w.write_record(row.iter().map(|v| format!("{v:e}")))?;
            }
            let bytes = w.into_inner()?;
            match &flags.out {
                Some(dir) => {
                    std::fs::create_dir_all(dir)?;
                    std::fs::write(dir.join(format!("{}_samples.csv", stem(&problem))), bytes)?;
                }
                None => print!("{}", String::from_utf8(bytes)?),
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
