//! Block-structured conic programs and the solvers that ship with them.
//!
//! A [`ConicProgram`] is `min cᵀx s.t. Ax = b` over a product of free,
//! nonnegative and PSD blocks. [`solve`] runs the bundled interior-point
//! method, or the backend named by `CCO_BACKEND` when that is set
//! (`ipm` or `admm`).

mod admm;
mod data;
mod ipm;
mod program;

use std::collections::BTreeMap;

use nalgebra::DMatrix;

pub use program::*;

use crate::error::{Error, Result};

/// Value of one variable block.
#[derive(Clone, Debug, PartialEq)]
pub enum BlockValue {
    Vector(Vec<f64>),
    Matrix(DMatrix<f64>),
}

impl BlockValue {
    pub fn as_vector(&self) -> Option<&[f64]> {
        match self {
            BlockValue::Vector(v) => Some(v),
            BlockValue::Matrix(_) => None,
        }
    }

    pub fn as_matrix(&self) -> Option<&DMatrix<f64>> {
        match self {
            BlockValue::Matrix(m) => Some(m),
            BlockValue::Vector(_) => None,
        }
    }

    /// Scalar at `(i, j)`; `j` is ignored for vector blocks.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        match self {
            BlockValue::Vector(v) => v[i],
            BlockValue::Matrix(m) => m[(i, j)],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    NumericalFailure,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::PrimalInfeasible => "primal-infeasible",
            SolveStatus::DualInfeasible => "dual-infeasible",
            SolveStatus::NumericalFailure => "numerical-failure",
        };
        f.write_str(s)
    }
}

/// Result of a conic solve.
///
/// `dual_rows[i]` multiplies equality `i`; `dual_cones` holds the dual slack
/// `s = c - Aᵀy` per block, so `dual_cones` lies in the dual cone. For the
/// infeasible statuses the vectors hold the (unnormalized) certificate.
#[derive(Clone, Debug)]
pub struct PrimalDualSolution {
    pub status: SolveStatus,
    pub primal: Vec<BlockValue>,
    pub dual_rows: Vec<f64>,
    pub dual_cones: Vec<BlockValue>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// `|primal_objective - dual_objective|`.
    pub gap: f64,
    /// `‖Ax - b‖ / (1 + ‖b‖)`.
    pub primal_residual: f64,
    /// `‖c - Aᵀy - s‖ / (1 + ‖c‖)`.
    pub dual_residual: f64,
    pub iterations: usize,
}

impl PrimalDualSolution {
    pub fn value(&self, v: Var) -> f64 {
        self.primal[v.block.0].at(v.i, v.j)
    }

    pub fn block(&self, id: BlockId) -> &BlockValue {
        &self.primal[id.0]
    }

    pub fn row_dual(&self, r: RowId) -> f64 {
        self.dual_rows[r.0]
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

#[derive(Clone, Debug)]
pub struct SolverOptions {
    /// Relative duality gap `|p - d| / (1 + |p|)`.
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub max_iter: usize,
    pub verbose: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            gap_tol: 1e-8,
            feas_tol: 1e-8,
            max_iter: 200,
            verbose: false,
        }
    }
}

/// Anything that can solve a [`ConicProgram`].
pub trait ConicBackend: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, prog: &ConicProgram, opts: &SolverOptions) -> Result<PrimalDualSolution>;
}

/// Dense homogeneous self-dual interior-point method with NT scaling.
#[derive(Clone, Copy, Debug, Default)]
pub struct InteriorPoint;

impl ConicBackend for InteriorPoint {
    fn name(&self) -> &'static str {
        "ipm"
    }

    fn solve(&self, prog: &ConicProgram, opts: &SolverOptions) -> Result<PrimalDualSolution> {
        check(prog)?;
        let data = data::Data::from_program(prog, true);
        ipm::solve(&data, opts)
    }
}

/// First-order alternating-direction method on the dual augmented
/// Lagrangian. Slow and only moderately accurate, but shares no code path
/// with [`InteriorPoint`] beyond the data layout.
#[derive(Clone, Copy, Debug)]
pub struct Admm {
    pub max_iter: usize,
    /// Stopping tolerance on residuals and relative gap; it replaces the
    /// solver options' tolerances, which are usually too tight for ADMM.
    pub tol: f64,
}

impl Default for Admm {
    fn default() -> Self {
        Admm {
            max_iter: 50_000,
            tol: 1e-7,
        }
    }
}

impl ConicBackend for Admm {
    fn name(&self) -> &'static str {
        "admm"
    }

    fn solve(&self, prog: &ConicProgram, opts: &SolverOptions) -> Result<PrimalDualSolution> {
        check(prog)?;
        let data = data::Data::from_program(prog, true);
        admm::solve(&data, self, opts.verbose)
    }
}

fn check(prog: &ConicProgram) -> Result<()> {
    prog.validate()?;
    if prog.blocks().is_empty() {
        return Err(Error::InvalidParameter("program has no variables".into()));
    }
    Ok(())
}

/// Backend chosen by the `CCO_BACKEND` environment variable.
pub fn backend_from_env() -> Result<Box<dyn ConicBackend>> {
    backend_named(std::env::var("CCO_BACKEND").ok().as_deref())
}

pub fn backend_named(name: Option<&str>) -> Result<Box<dyn ConicBackend>> {
    match name {
        None | Some("") | Some("ipm") => Ok(Box::new(InteriorPoint)),
        Some("admm") => Ok(Box::new(Admm::default())),
        Some(other) => Err(Error::InvalidParameter(format!(
            "unknown CCO_BACKEND '{other}' (expected ipm or admm)"
        ))),
    }
}

pub fn solve(prog: &ConicProgram, opts: &SolverOptions) -> Result<PrimalDualSolution> {
    backend_from_env()?.solve(prog, opts)
}

/// One entry of a relabeling map for [`dual_extract`].
#[derive(Clone, Debug)]
pub enum DualLabel {
    /// Multipliers of all rows whose label starts with `prefix`, in row
    /// order, multiplied by `sign`.
    Rows {
        name: String,
        prefix: String,
        sign: f64,
    },
    /// Dual slack of the block with this label.
    Cone { name: String, block: String },
}

impl DualLabel {
    pub fn rows(name: impl Into<String>, prefix: impl Into<String>, sign: f64) -> Self {
        DualLabel::Rows {
            name: name.into(),
            prefix: prefix.into(),
            sign,
        }
    }

    pub fn cone(name: impl Into<String>, block: impl Into<String>) -> Self {
        DualLabel::Cone {
            name: name.into(),
            block: block.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LabeledDual {
    Rows(Vec<f64>),
    Cone(BlockValue),
}

impl LabeledDual {
    pub fn as_rows(&self) -> Option<&[f64]> {
        match self {
            LabeledDual::Rows(v) => Some(v),
            LabeledDual::Cone(_) => None,
        }
    }
}

/// Relabels the duals of an optimal solve. An empty map returns every row
/// multiplier under the name `"rows"`.
pub fn dual_extract(
    prog: &ConicProgram,
    sol: &PrimalDualSolution,
    map: &[DualLabel],
) -> Result<BTreeMap<String, LabeledDual>> {
    if sol.status != SolveStatus::Optimal {
        return Err(Error::Solver(format!(
            "dual extraction needs an optimal solve, status is {}",
            sol.status
        )));
    }
    let mut out = BTreeMap::new();
    if map.is_empty() {
        out.insert("rows".to_string(), LabeledDual::Rows(sol.dual_rows.clone()));
        return Ok(out);
    }
    for entry in map {
        match entry {
            DualLabel::Rows { name, prefix, sign } => {
                let vals: Vec<f64> = prog
                    .rows_with_prefix(prefix)
                    .map(|r| sign * sol.dual_rows[r.0])
                    .collect();
                if vals.is_empty() {
                    return Err(Error::MissingLabel(prefix.clone()));
                }
                out.insert(name.clone(), LabeledDual::Rows(vals));
            }
            DualLabel::Cone { name, block } => {
                let k = prog
                    .blocks()
                    .iter()
                    .position(|b| &b.label == block)
                    .ok_or_else(|| Error::MissingLabel(block.clone()))?;
                out.insert(name.clone(), LabeledDual::Cone(sol.dual_cones[k].clone()));
            }
        }
    }
    Ok(out)
}

impl ConicProgram {
    /// `cᵀx` at the given block values.
    pub fn objective_value(&self, x: &[BlockValue]) -> f64 {
        self.objective()
            .iter()
            .map(|(v, c)| c * x[v.block.0].at(v.i, v.j))
            .sum()
    }

    /// `Ax - b` at the given block values.
    pub fn equality_residuals(&self, x: &[BlockValue]) -> Vec<f64> {
        self.equalities()
            .iter()
            .map(|e| {
                e.terms
                    .iter()
                    .map(|(v, c)| c * x[v.block.0].at(v.i, v.j))
                    .sum::<f64>()
                    - e.rhs
            })
            .collect()
    }

    /// Most negative cone violation of `x`: smallest nonneg entry or PSD
    /// eigenvalue, or 0 when every block is inside its cone.
    pub fn cone_violation(&self, x: &[BlockValue]) -> f64 {
        let mut worst: f64 = 0.0;
        for (b, v) in self.blocks().iter().zip(x) {
            match (b.cone, v) {
                (Cone::Nonneg, BlockValue::Vector(v)) => {
                    worst = v.iter().copied().fold(worst, f64::min);
                }
                (Cone::Psd, BlockValue::Matrix(m)) => {
                    let e = m.clone().symmetric_eigenvalues().min();
                    worst = worst.min(e);
                }
                _ => {}
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> SolverOptions {
        SolverOptions::default()
    }

    #[test]
    fn lp_as_cone() {
        let mut p = ConicProgram::new();
        let x = p.add_block(Cone::Nonneg, 2, "x");
        // x0 - x1 = 1 with x1 the surplus
        p.add_equality(vec![(p.var(x, 0), 1.0), (p.var(x, 1), -1.0)], 1.0, "lb");
        p.add_objective(p.var(x, 0), 1.0);
        let sol = InteriorPoint.solve(&p, &opts()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.value(p.var(x, 0)) - 1.0).abs() < 1e-7);
        assert!((sol.row_dual(RowId(0)) - 1.0).abs() < 1e-7);
    }

    #[test]
    fn two_by_two_psd() {
        let mut p = ConicProgram::new();
        let m = p.add_block(Cone::Psd, 2, "M");
        p.add_equality(vec![(p.entry(m, 0, 0), 1.0), (p.entry(m, 1, 1), -1.0)], 0.0, "diag");
        p.add_equality(vec![(p.entry(m, 0, 1), 1.0)], 1.0, "off");
        p.add_objective(p.entry(m, 0, 0), 1.0);
        let sol = InteriorPoint.solve(&p, &opts()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.primal_objective - 1.0).abs() < 1e-7);
        assert!(sol.gap <= 1e-8 * 2.0 + 1e-12);
    }

    #[test]
    fn negative_in_nonneg_is_infeasible() {
        let mut p = ConicProgram::new();
        let x = p.add_block(Cone::Nonneg, 1, "x");
        p.add_equality(vec![(p.var(x, 0), 1.0)], -1.0, "fix");
        p.add_objective(p.var(x, 0), 1.0);
        let sol = InteriorPoint.solve(&p, &opts()).unwrap();
        assert_eq!(sol.status, SolveStatus::PrimalInfeasible);
    }

    #[test]
    fn unbounded_is_dual_infeasible() {
        let mut p = ConicProgram::new();
        let x = p.add_block(Cone::Free, 1, "x");
        let s = p.add_block(Cone::Nonneg, 1, "s");
        // x - s = 0, min -x
        p.add_equality(vec![(p.var(x, 0), 1.0), (p.var(s, 0), -1.0)], 0.0, "link");
        p.add_objective(p.var(x, 0), -1.0);
        let sol = InteriorPoint.solve(&p, &opts()).unwrap();
        assert_eq!(sol.status, SolveStatus::DualInfeasible);
    }

    #[test]
    fn free_block_with_psd() {
        // min t s.t. [[t, x], [x, 1]] ⪰ 0, x = 2  →  t = 4
        let mut p = ConicProgram::new();
        let v = p.add_block(Cone::Free, 2, "tx");
        let m = p.add_block(Cone::Psd, 2, "M");
        p.add_equality(vec![(p.entry(m, 0, 0), 1.0), (p.var(v, 0), -1.0)], 0.0, "t");
        p.add_equality(vec![(p.entry(m, 0, 1), 1.0), (p.var(v, 1), -1.0)], 0.0, "x");
        p.add_equality(vec![(p.entry(m, 1, 1), 1.0)], 1.0, "one");
        p.add_equality(vec![(p.var(v, 1), 1.0)], 2.0, "fix");
        p.add_objective(p.var(v, 0), 1.0);
        let sol = InteriorPoint.solve(&p, &opts()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.value(p.var(v, 0)) - 4.0).abs() < 1e-6);
    }

    #[test]
    fn identity_relabeling_is_verbatim() {
        let mut p = ConicProgram::new();
        let x = p.add_block(Cone::Nonneg, 1, "x");
        p.add_equality(vec![(p.var(x, 0), 1.0)], 3.0, "fix");
        p.add_objective(p.var(x, 0), 2.0);
        let sol = InteriorPoint.solve(&p, &opts()).unwrap();
        let d = dual_extract(&p, &sol, &[]).unwrap();
        assert_eq!(d["rows"].as_rows().unwrap(), &sol.dual_rows[..]);
        let e = dual_extract(&p, &sol, &[DualLabel::rows("y", "nope", 1.0)]);
        assert!(matches!(e, Err(Error::MissingLabel(_))));
    }

    #[test]
    fn backend_names() {
        assert_eq!(backend_named(None).unwrap().name(), "ipm");
        assert_eq!(backend_named(Some("admm")).unwrap().name(), "admm");
        assert!(backend_named(Some("bogus")).is_err());
    }
}
