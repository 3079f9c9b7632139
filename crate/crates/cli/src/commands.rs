//! The work behind each subcommand, kept free of argument parsing so tests
//! can call it directly.

use std::cell::RefCell;
use std::time::Instant;

use anyhow::Context;
use cco_core::robustsolve::{
    check_robust_feasibility, relaxation_order_floor, ReportStatus, RobustOptions, SolveReport,
};
use cco_core::uncertainkit::{estimate_pvio, sample, size_uncertainty_set, SizingStatus};
use rayon::prelude::*;

use crate::fixtures;
use crate::problem::{Instance, ProblemFile, Reference};
use crate::report::{RecordKind, ResultRecord};

/// Command-line overrides of problem-file settings.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub gamma: Option<f64>,
    pub eps: Option<f64>,
    pub beta: Option<f64>,
    pub rho: Option<f64>,
    pub samples: Option<usize>,
    pub mc: Option<usize>,
    pub seed: Option<u64>,
    pub kmax: Option<usize>,
    pub gap_tol: Option<f64>,
}

impl Overrides {
    /// Everything except `gamma`, which is not a file setting.
    pub fn apply(&self, p: &mut ProblemFile) {
        if let Some(v) = self.eps {
            p.risk.eps = v;
        }
        if let Some(v) = self.beta {
            p.sizing.beta = v;
        }
        if let Some(v) = self.rho {
            p.sizing.rho = v;
        }
        if let Some(v) = self.samples {
            p.sizing.n = v;
        }
        if let Some(v) = self.mc {
            p.sizing.nhat = v;
        }
        if let Some(v) = self.seed {
            p.sizing.seed = v;
        }
        if self.kmax.is_some() {
            p.solver.k_max = self.kmax;
        }
        if let Some(v) = self.gap_tol {
            p.solver.gap_tol = v;
        }
    }
}

/// Records plus whether the run counts as a success for the exit code.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub label: String,
    pub records: Vec<ResultRecord>,
    pub success: bool,
    pub notes: Vec<String>,
}

fn fill_solve(rec: &mut ResultRecord, inst: &Instance, rep: &SolveReport) {
    rec.status = rep.status.to_string();
    rec.fstar = rep.fstar;
    rec.xstar = rep.xstar.clone();
    rec.gap = rep.gap.is_finite().then_some(rep.gap);
    rec.k0 = Some(relaxation_order_floor(inst.pc.d()));
    rec.k_used = Some(rep.k_used);
    rec.flat_t = rep.flat_t;
}

fn attach_reference(rec: &mut ResultRecord, r: &Reference) {
    rec.reference_gamma = r.gamma;
    rec.reference_fstar = Some(r.fstar);
    rec.reference_xstar = r.xstar.clone();
}

/// Empirical violation probability of `x` under `N̂` fresh samples.
pub fn violation_probability(inst: &Instance, x: &[f64]) -> anyhow::Result<f64> {
    let s = &inst.problem.sizing;
    let draws = sample(&inst.model, s.nhat, s.seed)?;
    Ok(estimate_pvio(&inst.pc, x, &draws)?)
}

/// One robust solve at a fixed `Γ`, with its violation probability.
pub fn solve_at_gamma(inst: &Instance, gamma: f64, opts: &RobustOptions) -> anyhow::Result<(ResultRecord, SolveReport)> {
    let start = Instant::now();
    let rep = inst
        .solve_at(gamma, opts)
        .with_context(|| format!("{}: robust solve at Γ = {gamma}", inst.problem.label()))?;
    let mut rec = ResultRecord::new(&inst.problem.label(), RecordKind::Solve, inst.problem.risk.eps, gamma);
    fill_solve(&mut rec, inst, &rep);
    if !rep.xstar.is_empty() {
        rec.pvio = Some(violation_probability(inst, &rep.xstar)?);
    }
    rec.wall_time = start.elapsed().as_secs_f64();
    Ok((rec, rep))
}

/// One certification check.
#[derive(Clone, Debug)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct Certification {
    pub record: ResultRecord,
    pub checks: Vec<Check>,
    /// `min_{ξ∈U} h(x*, ξ)` lower bound and the smallest sampled value.
    pub min_bound: f64,
    pub sample_min: f64,
}

impl Certification {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

pub const CERT_SAMPLES: usize = 10_000;

/// Solves at `Γ` and checks the certificate: small gap, flat truncation at
/// the first order, and robust feasibility of `x*` both by a Moment-SOS bound
/// and on points sampled inside `U`.
pub fn certify(inst: &Instance, gamma: f64, opts: &RobustOptions) -> anyhow::Result<Certification> {
    let (record, rep) = solve_at_gamma(inst, gamma, opts)?;
    let k0 = relaxation_order_floor(inst.pc.d());
    let mut checks = vec![
        Check {
            name: "gap",
            value: rep.gap,
            pass: rep.gap <= 1e-6,
        },
        Check {
            name: "flat_t = k0",
            value: rep.flat_t.map_or(f64::NAN, |t| t as f64),
            pass: rep.flat_t == Some(k0),
        },
    ];
    let (mut min_bound, mut sample_min) = (f64::NAN, f64::NAN);
    if rep.status == ReportStatus::Certified || rep.status == ReportStatus::MaxOrderReached {
        let u = inst.uncertainty_set(gamma)?;
        let fc = check_robust_feasibility(&rep.xstar, &inst.pc, &u, k0, CERT_SAMPLES, inst.problem.sizing.seed, opts)?;
        min_bound = fc.bound;
        sample_min = fc.sample_min;
    }
    checks.push(Check {
        name: "min_U h(x*,.)",
        value: min_bound,
        pass: min_bound >= -1e-6,
    });
    checks.push(Check {
        name: "sampled h(x*,.)",
        value: sample_min,
        pass: sample_min >= -1e-6,
    });
    Ok(Certification {
        record,
        checks,
        min_bound,
        sample_min,
    })
}

/// The bisection loop on `Γ`. Every step becomes a record, followed by a
/// summary record.
pub fn size(inst: &Instance, opts: &RobustOptions) -> anyhow::Result<(Vec<ResultRecord>, bool)> {
    let start = Instant::now();
    let label = inst.problem.label();
    let eps = inst.problem.risk.eps;
    let k0 = relaxation_order_floor(inst.pc.d());
    let mut solve_opts = opts.clone();
    // The explicit dual cross-check doubles the cost of every loop.
    solve_opts.cross_check_rows = 0;
    let last: RefCell<Option<SolveReport>> = RefCell::new(None);
    let mut steps: Vec<ResultRecord> = Vec::new();
    let mut lap = Instant::now();
    let report = size_uncertainty_set(
        &inst.pc,
        &inst.model,
        &inst.mu,
        &inst.lambda,
        &inst.sizing_options(),
        |u| {
            let rep = inst.solve_on(u, &solve_opts)?;
            if rep.xstar.is_empty() {
                return Err(cco_core::Error::Solver(format!(
                    "robust problem is {} at Γ = {}",
                    rep.status,
                    u.gamma()
                )));
            }
            let out = (rep.xstar.clone(), rep.fstar);
            *last.borrow_mut() = Some(rep);
            Ok(out)
        },
        |step| {
            let mut rec = ResultRecord::new(&label, RecordKind::SizingStep, eps, step.gamma);
            if let Some(rep) = last.borrow().as_ref() {
                fill_solve(&mut rec, inst, rep);
            }
            rec.k0 = Some(k0);
            rec.fstar = step.fstar;
            rec.xstar = step.xstar.clone();
            rec.pvio = Some(step.pvio);
            rec.loop_index = Some(step.loop_index);
            rec.wall_time = lap.elapsed().as_secs_f64();
            lap = Instant::now();
            steps.push(rec);
        },
    )
    .with_context(|| format!("{label}: sizing loop"))?;
    let fin = report.final_step();
    let mut rec = ResultRecord::new(&label, RecordKind::Sizing, eps, report.gamma_star);
    rec.status = match report.status {
        SizingStatus::Converged => "converged".into(),
        SizingStatus::MaxLoops => "max-loops".into(),
    };
    rec.fstar = fin.fstar;
    rec.xstar = fin.xstar.clone();
    rec.pvio = Some(fin.pvio);
    rec.loops = Some(report.loops);
    rec.initial_gamma = Some(report.initial_gamma);
    rec.initial_fstar = report.trace.first().map(|s| s.fstar);
    rec.lstar = Some(report.lstar);
    rec.beta_used = Some(report.beta_used);
    rec.k0 = Some(k0);
    rec.wall_time = start.elapsed().as_secs_f64();
    let converged = report.status == SizingStatus::Converged;
    steps.push(rec);
    Ok((steps, converged))
}

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * (1.0 + a.abs())
}

/// Runs a bundled fixture. With `--gamma`, one solve at that set size;
/// otherwise one solve per published row that prints a `Γ`, and the full
/// sizing loop for rows that do not. `--eps` selects rows.
pub fn reproduce(id: &str, ov: &Overrides) -> anyhow::Result<Outcome> {
    let mut base = fixtures::problem(id)?;
    ov.apply(&mut base);
    let rows: Vec<Reference> = base
        .reference
        .iter()
        .filter(|r| ov.eps.is_none_or(|e| same(e, r.eps)))
        .cloned()
        .collect();
    let mut records = Vec::new();
    let mut notes = Vec::new();
    let mut success = true;

    let plan: Vec<(f64, Option<f64>, Option<Reference>)> = match ov.gamma {
        Some(g) => vec![(base.risk.eps, Some(g), rows.first().cloned())],
        None if rows.is_empty() => vec![(base.risk.eps, None, None)],
        None => rows.iter().map(|r| (r.eps, r.gamma, Some(r.clone()))).collect(),
    };
    for (eps, gamma, reference) in plan {
        let mut p = base.clone();
        p.risk.eps = eps;
        let inst = fixtures::instantiate(p)?;
        let opts = inst.robust_options();
        match gamma {
            Some(g) => {
                let (mut rec, _) = solve_at_gamma(&inst, g, &opts)?;
                success &= rec.status == ReportStatus::Certified.to_string();
                if let Some(r) = &reference {
                    attach_reference(&mut rec, r);
                    if let Some(n) = &r.note {
                        notes.push(format!("{id}: {n}"));
                    }
                }
                records.push(rec);
            }
            None => {
                let (mut recs, converged) = size(&inst, &opts)?;
                success &= converged;
                if let (Some(r), Some(last)) = (&reference, recs.last_mut()) {
                    attach_reference(last, r);
                }
                records.extend(recs);
            }
        }
    }
    Ok(Outcome {
        label: id.to_string(),
        records,
        success,
        notes,
    })
}

/// All fixtures in parallel, results in corpus order.
pub fn reproduce_all(ov: &Overrides) -> Vec<(String, anyhow::Result<Outcome>)> {
    fixtures::IDS
        .par_iter()
        .map(|id| (id.to_string(), reproduce(id, ov)))
        .collect()
}
