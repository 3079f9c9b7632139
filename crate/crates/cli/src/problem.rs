//! Problem files.
//!
//! A problem is a JSON document whose top-level sections mirror
//! [`ProblemFile`]. Empirical samples live in a sibling CSV file named by
//! `random.samples_csv`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use cco_core::polycore::{Exponent, Poly};
use cco_core::robustsolve::{DecisionSet, Lmi, PerturbedConstraint, RobustOptions, UncertaintySet};
use cco_core::uncertainkit::{moments_of, RandomModel, SizingOptions};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub decision: Decision,
    pub objective: Objective,
    #[serde(default)]
    pub chance: Vec<ChanceTerm>,
    #[serde(default)]
    pub decision_set: DecisionSection,
    pub random: RandomSection,
    pub risk: Risk,
    #[serde(default)]
    pub sizing: Sizing,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reference: Vec<Reference>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Decision {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub names: Vec<String>,
}

/// Either `linear` coefficients or a polynomial in `x`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Objective {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poly: Option<Vec<PolyTerm>>,
    #[serde(default)]
    pub sos_convex: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyTerm {
    pub exp: Vec<u32>,
    pub coef: f64,
}

/// `(aᵀx + b) ξ^α`; a missing `a` means the zero vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChanceTerm {
    pub alpha: Vec<u32>,
    pub a: Option<Vec<f64>>,
    #[serde(default)]
    pub b: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionSection {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub linear: Vec<LinearRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lmi: Vec<LmiBlock>,
    /// Each entry is `u(x) ≥ 0`, with `u` SOS-concave.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub poly: Vec<Vec<PolyTerm>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowKind {
    Ge,
    Eq,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearRow {
    pub kind: RowKind,
    pub a: Vec<f64>,
    pub c: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LmiBlock {
    pub f0: Vec<Vec<f64>>,
    pub fs: Vec<Vec<Vec<f64>>>,
}

/// A sampling model or a CSV of samples, plus optional explicit `μ`, `Λ`.
/// Without them, `μ` and `Λ` are the mean and covariance of the model.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<RandomModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples_csv: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Risk {
    pub eps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Sizing {
    pub beta: f64,
    pub rho: f64,
    pub n: usize,
    pub nhat: usize,
    pub seed: u64,
}

impl Default for Sizing {
    fn default() -> Self {
        let d = SizingOptions::default();
        Sizing {
            beta: d.beta,
            rho: d.rho,
            n: d.n,
            nhat: d.nhat,
            seed: d.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub k_max: Option<usize>,
    pub gap_tol: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            k_max: None,
            gap_tol: RobustOptions::default().gap_tol,
        }
    }
}

/// Published values to compare against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reference {
    pub eps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    pub fstar: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xstar: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// One problem with a problem file, located by field path and, for syntax
/// errors, by line.
#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostic {
    pub field: String,
    pub line: Option<usize>,
    pub message: String,
}

impl Diagnostic {
    fn at(field: impl Into<String>, message: impl Into<String>) -> Self {
        Diagnostic {
            field: field.into(),
            line: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}, {}: {}", self.field, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

#[derive(Debug)]
pub struct ProblemError {
    pub source: Option<PathBuf>,
    pub diagnostics: Vec<Diagnostic>,
}

impl fmt::Display for ProblemError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.source {
            Some(p) => write!(f, "invalid problem file {}", p.display())?,
            None => write!(f, "invalid problem")?,
        }
        for d in &self.diagnostics {
            write!(f, "\n  {d}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ProblemError {}

impl ProblemError {
    fn one(d: Diagnostic) -> Self {
        ProblemError {
            source: None,
            diagnostics: vec![d],
        }
    }

    /// Whether some diagnostic message contains `needle`.
    pub fn mentions(&self, needle: &str) -> bool {
        self.diagnostics.iter().any(|d| d.message.contains(needle) || d.field.contains(needle))
    }
}

fn exponent_label(e: &[u32]) -> String {
    let parts: Vec<String> = e.iter().map(u32::to_string).collect();
    format!("({})", parts.join(","))
}

fn check_matrix(diags: &mut Vec<Diagnostic>, field: &str, m: &[Vec<f64>], size: usize) {
    if m.len() != size || m.iter().any(|row| row.len() != size) {
        diags.push(Diagnostic::at(field, format!("expected a {size}×{size} matrix")));
        return;
    }
    for i in 0..size {
        for j in 0..i {
            if (m[i][j] - m[j][i]).abs() > 1e-12 * (1.0 + m[i][j].abs()) {
                diags.push(Diagnostic::at(field, format!("not symmetric at ({i},{j})")));
                return;
            }
        }
    }
}

fn check_poly(diags: &mut Vec<Diagnostic>, field: &str, terms: &[PolyTerm], n: usize) {
    let mut seen = BTreeMap::new();
    for (i, t) in terms.iter().enumerate() {
        if t.exp.len() != n {
            diags.push(Diagnostic::at(
                format!("{field}[{i}].exp"),
                format!("has {} entries, expected n = {n}", t.exp.len()),
            ));
        }
        if seen.insert(t.exp.clone(), i).is_some() {
            diags.push(Diagnostic::at(
                format!("{field}[{i}].exp"),
                format!("duplicate exponent {}", exponent_label(&t.exp)),
            ));
        }
    }
}

impl ProblemFile {
    /// Parses and validates.
    pub fn from_json_str(s: &str) -> Result<Self, ProblemError> {
        let de = &mut serde_json::Deserializer::from_str(s);
        let p: ProblemFile = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            let inner = e.into_inner();
            ProblemError::one(Diagnostic {
                field: if field == "." { "(document)".into() } else { field },
                line: (inner.line() > 0).then_some(inner.line()),
                message: inner.to_string(),
            })
        })?;
        p.validate().map_err(|diagnostics| ProblemError {
            source: None,
            diagnostics,
        })?;
        Ok(p)
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("problem files serialize");
        s.push('\n');
        s
    }

    pub fn n(&self) -> usize {
        self.decision.n
    }

    /// Dimension of `ξ`, read from the chance terms.
    pub fn r(&self) -> usize {
        self.chance.first().map_or(0, |t| t.alpha.len())
    }

    /// Degree of `h` in `ξ`.
    pub fn d(&self) -> usize {
        self.chance
            .iter()
            .map(|t| t.alpha.iter().map(|&p| p as usize).sum::<usize>())
            .max()
            .unwrap_or(0)
    }

    pub fn is_sos_convex(&self) -> bool {
        self.objective.poly.is_some() || !self.decision_set.poly.is_empty()
    }

    pub fn label(&self) -> String {
        self.id.clone().unwrap_or_else(|| "problem".into())
    }

    /// All diagnostics, empty when the file is consistent.
    pub fn validate(&self) -> Result<(), Vec<Diagnostic>> {
        let mut diags = Vec::new();
        let n = self.n();
        if n == 0 {
            diags.push(Diagnostic::at("decision.n", "must be positive"));
        }
        if !self.decision.names.is_empty() && self.decision.names.len() != n {
            diags.push(Diagnostic::at(
                "decision.names",
                format!("has {} names, expected n = {n}", self.decision.names.len()),
            ));
        }

        match (&self.objective.linear, &self.objective.poly) {
            (Some(_), Some(_)) => diags.push(Diagnostic::at("objective", "give either linear or poly, not both")),
            (None, None) => diags.push(Diagnostic::at("objective", "linear or poly is required")),
            (Some(c), None) => {
                if c.len() != n {
                    diags.push(Diagnostic::at(
                        "objective.linear",
                        format!("has {} coefficients, expected n = {n}", c.len()),
                    ));
                }
            }
            (None, Some(terms)) => {
                check_poly(&mut diags, "objective.poly", terms, n);
                if !self.objective.sos_convex {
                    diags.push(Diagnostic::at(
                        "objective.sos_convex",
                        "a polynomial objective must be declared sos_convex",
                    ));
                }
            }
        }

        if self.chance.is_empty() {
            diags.push(Diagnostic::at("chance", "chance constraint required"));
        }
        let r = self.r();
        if !self.chance.is_empty() && r == 0 {
            diags.push(Diagnostic::at("chance[0].alpha", "ξ must have at least one coordinate"));
        }
        let mut seen: BTreeMap<&[u32], usize> = BTreeMap::new();
        for (i, t) in self.chance.iter().enumerate() {
            if t.alpha.len() != r {
                diags.push(Diagnostic::at(
                    format!("chance[{i}].alpha"),
                    format!("has {} entries, expected r = {r}", t.alpha.len()),
                ));
            }
            if let Some(j) = seen.insert(&t.alpha, i) {
                diags.push(Diagnostic::at(
                    format!("chance[{i}].alpha"),
                    format!("duplicate exponent {} (also chance[{j}])", exponent_label(&t.alpha)),
                ));
            }
            if let Some(a) = &t.a {
                if a.len() != n {
                    diags.push(Diagnostic::at(
                        format!("chance[{i}].a"),
                        format!("has {} entries, expected n = {n}", a.len()),
                    ));
                }
            }
        }

        for (i, row) in self.decision_set.linear.iter().enumerate() {
            if row.a.len() != n {
                diags.push(Diagnostic::at(
                    format!("decision_set.linear[{i}].a"),
                    format!("has {} entries, expected n = {n}", row.a.len()),
                ));
            }
        }
        for (i, l) in self.decision_set.lmi.iter().enumerate() {
            let s = l.f0.len();
            check_matrix(&mut diags, &format!("decision_set.lmi[{i}].f0"), &l.f0, s);
            if l.fs.len() != n {
                diags.push(Diagnostic::at(
                    format!("decision_set.lmi[{i}].fs"),
                    format!("has {} matrices, expected n = {n}", l.fs.len()),
                ));
            }
            for (j, f) in l.fs.iter().enumerate() {
                check_matrix(&mut diags, &format!("decision_set.lmi[{i}].fs[{j}]"), f, s);
            }
        }
        for (i, u) in self.decision_set.poly.iter().enumerate() {
            check_poly(&mut diags, &format!("decision_set.poly[{i}]"), u, n);
        }
        if !self.decision_set.poly.is_empty() && self.objective.linear.is_none() && !self.objective.sos_convex {
            diags.push(Diagnostic::at("objective.sos_convex", "required with polynomial decision constraints"));
        }

        let rs = &self.random;
        match (&rs.model, &rs.samples_csv) {
            (Some(_), Some(_)) => diags.push(Diagnostic::at("random", "give either model or samples_csv, not both")),
            (None, None) => diags.push(Diagnostic::at("random", "model or samples_csv is required")),
            (Some(m), None) => {
                if m.dim() != r {
                    diags.push(Diagnostic::at("random.model", format!("has dimension {}, expected r = {r}", m.dim())));
                } else if let Err(e) = m.validate() {
                    diags.push(Diagnostic::at("random.model", e.to_string()));
                }
            }
            (None, Some(_)) => {}
        }
        match (&rs.mu, &rs.lambda) {
            (Some(mu), Some(lam)) => {
                if mu.len() != r {
                    diags.push(Diagnostic::at("random.mu", format!("has {} entries, expected r = {r}", mu.len())));
                }
                check_matrix(&mut diags, "random.lambda", lam, r);
            }
            (None, None) => {}
            _ => diags.push(Diagnostic::at("random", "mu and lambda must be given together")),
        }

        let eps = self.risk.eps;
        if !(eps > 0.0 && eps < 1.0) {
            diags.push(Diagnostic::at("risk.eps", format!("must lie in (0,1), got {eps}")));
        }
        let s = &self.sizing;
        if !(s.beta > 0.0 && s.beta < 1.0) {
            diags.push(Diagnostic::at("sizing.beta", format!("must lie in (0,1), got {}", s.beta)));
        }
        if !(s.rho >= 0.0) {
            diags.push(Diagnostic::at("sizing.rho", "must be nonnegative"));
        }
        if s.n == 0 || s.nhat == 0 {
            diags.push(Diagnostic::at("sizing", "n and nhat must be positive"));
        }
        if !(self.solver.gap_tol > 0.0) {
            diags.push(Diagnostic::at("solver.gap_tol", "must be positive"));
        }
        for (i, rf) in self.reference.iter().enumerate() {
            if let Some(x) = &rf.xstar {
                if x.len() != n {
                    diags.push(Diagnostic::at(
                        format!("reference[{i}].xstar"),
                        format!("has {} entries, expected n = {n}", x.len()),
                    ));
                }
            }
        }
        if diags.is_empty() {
            Ok(())
        } else {
            Err(diags)
        }
    }
}

/// Reads samples with an optional header row.
pub fn parse_samples_csv(text: &str) -> anyhow::Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parsed: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(v) => rows.push(v),
            Err(_) if i == 0 => continue,
            Err(e) => anyhow::bail!("samples CSV row {}: {e}", i + 1),
        }
    }
    if let Some(w) = rows.first().map(Vec::len) {
        if let Some(i) = rows.iter().position(|r| r.len() != w) {
            anyhow::bail!("samples CSV row {} has {} columns, expected {w}", i + 1, rows[i].len());
        }
    }
    Ok(rows)
}

pub enum ObjectiveKind {
    Linear(Vec<f64>),
    SosConvex(Poly),
}

/// A validated problem turned into solver inputs.
pub struct Instance {
    pub problem: ProblemFile,
    pub pc: PerturbedConstraint,
    pub set: DecisionSet,
    pub objective: ObjectiveKind,
    /// Sampling model; CSV samples become an empirical model.
    pub model: RandomModel,
    pub mu: DVector<f64>,
    pub lambda: DMatrix<f64>,
}

fn poly_from(n: usize, terms: &[PolyTerm]) -> cco_core::Result<Poly> {
    Poly::from_terms(n, terms.iter().map(|t| (Exponent::new(t.exp.clone()), t.coef)))
}

fn matrix(m: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(m.len(), m.len(), |i, j| m[i][j])
}

impl Instance {
    /// `samples` is the content of `random.samples_csv`, when present.
    pub fn new(problem: ProblemFile, samples: Option<Vec<Vec<f64>>>) -> anyhow::Result<Self> {
        problem.validate().map_err(|diagnostics| ProblemError {
            source: None,
            diagnostics,
        })?;
        let n = problem.n();
        let r = problem.r();
        let pc = PerturbedConstraint::from_terms(
            r,
            n,
            problem.chance.iter().map(|t| {
                (
                    Exponent::new(t.alpha.clone()),
                    t.a.clone().unwrap_or_else(|| vec![0.0; n]),
                    t.b,
                )
            }),
        )?;
        let mut set = DecisionSet::new(n);
        for row in &problem.decision_set.linear {
            match row.kind {
                RowKind::Ge => set.linear_ineqs.push((row.a.clone(), row.c)),
                RowKind::Eq => set.linear_eqs.push((row.a.clone(), row.c)),
            }
        }
        for l in &problem.decision_set.lmi {
            set.lmis.push(Lmi {
                f0: matrix(&l.f0),
                fs: l.fs.iter().map(|f| matrix(f)).collect(),
            });
        }
        for u in &problem.decision_set.poly {
            set.poly_ineqs.push(poly_from(n, u)?);
        }
        set.validate()?;

        let objective = match (&problem.objective.linear, &problem.objective.poly) {
            (_, Some(terms)) => ObjectiveKind::SosConvex(poly_from(n, terms)?),
            (Some(c), None) if !set.poly_ineqs.is_empty() => ObjectiveKind::SosConvex(Poly::from_terms(
                n,
                c.iter().enumerate().map(|(i, &v)| (Exponent::unit(n, i), v)),
            )?),
            (Some(c), None) => ObjectiveKind::Linear(c.clone()),
            (None, None) => unreachable!("validated"),
        };

        let model = match (&problem.random.model, samples) {
            (Some(m), _) => m.clone(),
            (None, Some(rows)) => {
                if rows.is_empty() {
                    anyhow::bail!("samples CSV is empty");
                }
                if rows[0].len() != r {
                    anyhow::bail!("samples CSV has {} columns, expected r = {r}", rows[0].len());
                }
                RandomModel::Empirical { rows }
            }
            (None, None) => anyhow::bail!("random.samples_csv was not loaded"),
        };
        let (mu, lambda) = match (&problem.random.mu, &problem.random.lambda) {
            (Some(mu), Some(lam)) => (DVector::from_vec(mu.clone()), matrix(lam)),
            _ => moments_of(&model)?,
        };
        // Checks positive definiteness once up front.
        UncertaintySet::new(1.0, mu.clone(), lambda.clone())?;
        Ok(Instance {
            problem,
            pc,
            set,
            objective,
            model,
            mu,
            lambda,
        })
    }

    pub fn uncertainty_set(&self, gamma: f64) -> cco_core::Result<UncertaintySet> {
        UncertaintySet::new(gamma, self.mu.clone(), self.lambda.clone())
    }

    pub fn robust_options(&self) -> RobustOptions {
        RobustOptions {
            k_max: self.problem.solver.k_max,
            gap_tol: self.problem.solver.gap_tol,
            ..RobustOptions::default()
        }
    }

    pub fn sizing_options(&self) -> SizingOptions {
        let s = &self.problem.sizing;
        SizingOptions {
            eps: self.problem.risk.eps,
            beta: s.beta,
            rho: s.rho,
            n: s.n,
            nhat: s.nhat,
            seed: s.seed,
            ..SizingOptions::default()
        }
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        match &self.objective {
            ObjectiveKind::Linear(c) => c.iter().zip(x).map(|(a, b)| a * b).sum(),
            ObjectiveKind::SosConvex(f) => f.eval(x).unwrap_or(f64::NAN),
        }
    }

    pub fn solve_at(&self, gamma: f64, opts: &RobustOptions) -> cco_core::Result<cco_core::robustsolve::SolveReport> {
        let u = self.uncertainty_set(gamma)?;
        self.solve_on(&u, opts)
    }

    pub fn solve_on(
        &self,
        u: &UncertaintySet,
        opts: &RobustOptions,
    ) -> cco_core::Result<cco_core::robustsolve::SolveReport> {
        match &self.objective {
            ObjectiveKind::Linear(c) => cco_core::robustsolve::solve_linear_cco(c, &self.pc, &self.set, u, opts),
            ObjectiveKind::SosConvex(f) => cco_core::robustsolve::solve_sosconvex_cco(f, &self.pc, &self.set, u, opts),
        }
    }
}

/// Reads a problem file and the samples it points to.
pub fn load_problem(path: &Path) -> anyhow::Result<Instance> {
    let text = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("reading {}: {e}", path.display()))?;
    let problem = ProblemFile::from_json_str(&text).map_err(|mut e| {
        e.source = Some(path.to_path_buf());
        e
    })?;
    let samples = match &problem.random.samples_csv {
        Some(rel) => {
            let p = path.parent().unwrap_or(Path::new(".")).join(rel);
            let csv = std::fs::read_to_string(&p).map_err(|e| anyhow::anyhow!("reading {}: {e}", p.display()))?;
            Some(parse_samples_csv(&csv)?)
        }
        None => None,
    };
    Instance::new(problem, samples)
}
