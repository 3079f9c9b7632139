//! Robust approximations of a single chance constraint `P(h(x, ξ) ≥ 0) ≥ 1 - ε`
//! by `h(x, ·) ≥ 0` on an ellipsoid `U`, solved with Moment-SOS relaxations.
//!
//! Two paths share the same loop over the relaxation order `k`:
//! a linear objective over a semidefinite-representable decision set, and an
//! SOS-convex objective with SOS-concave constraints lifted to a moment
//! vector `w`. Each order is certified when the duality gap closes and the
//! dual tms `z` has a flat truncation.
//!
//! Internally `ξ` is whitened to `η` with `ξ = μ + √Γ L η`, `LLᵀ = Λ`, so that
//! `U` becomes the unit ball. Reported duals are mapped back to `ξ`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::certkit::{build_c_alpha, encode_qmod, encode_qmod_membership, AffineExpr, QmodEncoding};
use crate::conicore::{
    backend_from_env, BlockId, Cone, ConicBackend, ConicProgram, PrimalDualSolution, RowId,
    SolveStatus, SolverOptions, Var,
};
use crate::error::{Error, Result};
use crate::momentkit::{flat_truncation, Tms, DEFAULT_RANK_TOL};
use crate::polycore::{basis_len, monomial_basis, Exponent, MonomialBasis, Poly};

/// Smallest eigenvalue (relative to the largest magnitude) accepted for `Λ`.
pub const PD_TOL: f64 = 1e-10;

/// `k0 = max(⌈d/2⌉, 1)`.
pub fn relaxation_order_floor(d: usize) -> usize {
    d.div_ceil(2).max(1)
}

/// `h(x, ξ) = (Ax + b)ᵀ[ξ]_d`.
#[derive(Clone, Debug)]
pub struct PerturbedConstraint {
    a: DMatrix<f64>,
    b: DVector<f64>,
    r: usize,
    d: usize,
}

impl PerturbedConstraint {
    /// Rows of `a` and `b` follow the graded order of `[ξ]_D` for some `D`;
    /// trailing all-zero degrees are dropped.
    pub fn new(r: usize, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if a.nrows() != b.len() {
            return Err(Error::DimensionMismatch {
                expected: a.nrows(),
                found: b.len(),
            });
        }
        let full = crate::certkit::degree_of_len(r, a.nrows());
        if basis_len(r, full) != a.nrows() {
            return Err(Error::DimensionMismatch {
                expected: basis_len(r, full),
                found: a.nrows(),
            });
        }
        let basis = monomial_basis(r, full);
        let d = (0..a.nrows())
            .filter(|&i| b[i] != 0.0 || a.row(i).iter().any(|v| *v != 0.0))
            .map(|i| basis.exponent_at(i).degree())
            .max()
            .unwrap_or(0);
        let keep = basis_len(r, d);
        Ok(PerturbedConstraint {
            a: a.rows(0, keep).into_owned(),
            b: b.rows(0, keep).into_owned(),
            r,
            d,
        })
    }

    /// From `(ξ-exponent, x-coefficients, constant)` triples.
    pub fn from_terms<I>(r: usize, n: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Exponent, Vec<f64>, f64)>,
    {
        let terms: Vec<_> = terms.into_iter().collect();
        let dmax = terms.iter().map(|(e, _, _)| e.degree()).max().unwrap_or(0);
        let basis = monomial_basis(r, dmax);
        let mut a = DMatrix::zeros(basis.len(), n);
        let mut b = DVector::zeros(basis.len());
        for (e, lin, c) in terms {
            if e.dim() != r {
                return Err(Error::DimensionMismatch {
                    expected: r,
                    found: e.dim(),
                });
            }
            if lin.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: lin.len(),
                });
            }
            let i = basis.index_of(&e).expect("degree bounded by the maximum");
            for (j, v) in lin.iter().enumerate() {
                a[(i, j)] += v;
            }
            b[i] += c;
        }
        PerturbedConstraint::new(r, a, b)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn basis(&self) -> MonomialBasis {
        monomial_basis(self.r, self.d)
    }

    /// `h(x, ·)` as a polynomial in `ξ`.
    pub fn poly_at(&self, x: &[f64]) -> Result<Poly> {
        let coeffs = self.coeffs_at(x)?;
        Poly::from_coeffs(&self.basis(), coeffs.as_slice())
    }

    fn coeffs_at(&self, x: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                found: x.len(),
            });
        }
        Ok(&self.a * DVector::from_column_slice(x) + &self.b)
    }

    pub fn eval(&self, x: &[f64], xi: &[f64]) -> Result<f64> {
        let c = self.coeffs_at(x)?;
        if xi.len() != self.r {
            return Err(Error::DimensionMismatch {
                expected: self.r,
                found: xi.len(),
            });
        }
        Ok(self.basis().eval(xi).iter().zip(c.iter()).map(|(m, v)| m * v).sum())
    }

    /// Evaluates `h(x, ξ_j)` for many rows at once.
    pub fn eval_many(&self, x: &[f64], xis: &[Vec<f64>]) -> Result<Vec<f64>> {
        let c = self.coeffs_at(x)?;
        let basis = self.basis();
        Ok(xis
            .iter()
            .map(|xi| basis.eval(xi).iter().zip(c.iter()).map(|(m, v)| m * v).sum())
            .collect())
    }
}

/// `U = {ξ : Γ - (ξ-μ)ᵀ Λ⁻¹ (ξ-μ) ≥ 0}`.
#[derive(Clone, Debug)]
pub struct UncertaintySet {
    gamma: f64,
    mu: DVector<f64>,
    lambda: DMatrix<f64>,
    lambda_inv: DMatrix<f64>,
    chol: DMatrix<f64>,
}

impl UncertaintySet {
    pub fn new(gamma: f64, mu: DVector<f64>, lambda: DMatrix<f64>) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "set size must be positive, got {gamma}"
            )));
        }
        let r = mu.len();
        if lambda.nrows() != r || lambda.ncols() != r {
            return Err(Error::DimensionMismatch {
                expected: r,
                found: lambda.nrows(),
            });
        }
        let scale = lambda.amax().max(1.0);
        if (&lambda - lambda.transpose()).amax() > 1e-12 * scale {
            return Err(Error::NotPositiveDefinite("Λ is not symmetric".into()));
        }
        let emin = SymmetricEigen::new(lambda.clone()).eigenvalues.min();
        if !(emin > PD_TOL * scale) {
            return Err(Error::NotPositiveDefinite(format!(
                "Λ has smallest eigenvalue {emin:e}"
            )));
        }
        let chol = lambda
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite("Cholesky factorization failed".into()))?;
        let lambda_inv = chol.inverse();
        Ok(UncertaintySet {
            gamma,
            mu,
            lambda,
            lambda_inv,
            chol: chol.l(),
        })
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        UncertaintySet::new(gamma, self.mu.clone(), self.lambda.clone())
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn lambda(&self) -> &DMatrix<f64> {
        &self.lambda
    }

    pub fn r(&self) -> usize {
        self.mu.len()
    }

    /// `g(ξ) = Γ - (ξ-μ)ᵀ Λ⁻¹ (ξ-μ)`.
    pub fn g(&self) -> Poly {
        let r = self.r();
        let li = &self.lambda_inv;
        let lm = li * &self.mu;
        let mut terms = vec![(Exponent::zero(r), self.gamma - self.mu.dot(&lm))];
        for i in 0..r {
            terms.push((Exponent::unit(r, i), 2.0 * lm[i]));
            for j in i..r {
                let c = if i == j { -li[(i, i)] } else { -2.0 * li[(i, j)] };
                terms.push((Exponent::unit(r, i).add(&Exponent::unit(r, j)), c));
            }
        }
        Poly::from_terms(r, terms).expect("dimension is consistent")
    }

    pub fn g_at(&self, xi: &[f64]) -> f64 {
        let d = DVector::from_column_slice(xi) - &self.mu;
        self.gamma - d.dot(&(&self.lambda_inv * &d))
    }

    pub fn contains(&self, xi: &[f64]) -> bool {
        self.g_at(xi) >= -1e-12 * self.gamma.max(1.0)
    }

    /// Points drawn uniformly inside `U`.
    pub fn sample_inside(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let r = self.r();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = self.gamma.sqrt();
        (0..n)
            .map(|_| {
                let u: DVector<f64> = DVector::from_fn(r, |_, _| rng.sample(StandardNormal));
                let norm = u.norm().max(f64::MIN_POSITIVE);
                let rad = rng.random::<f64>().powf(1.0 / r as f64);
                let eta = u * (rad / norm);
                (&self.mu + &self.chol * eta * s).iter().copied().collect()
            })
            .collect()
    }

    fn whitening(&self) -> Whitening {
        let s = self.gamma.sqrt();
        let m = &self.chol * s;
        Whitening {
            shift: self.mu.iter().copied().collect(),
            matrix: (0..self.r()).map(|i| m.row(i).iter().copied().collect()).collect(),
        }
    }
}

/// `ξ = shift + matrix · η`.
#[derive(Clone, Debug)]
struct Whitening {
    shift: Vec<f64>,
    matrix: Vec<Vec<f64>>,
}

impl Whitening {
    fn identity(r: usize) -> Self {
        Whitening {
            shift: vec![0.0; r],
            matrix: (0..r)
                .map(|i| (0..r).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
        }
    }

    fn r(&self) -> usize {
        self.shift.len()
    }

    /// `T[β, α]` = coefficient of `η^β` in `ξ^α`, over `N^r_d`.
    fn coeff_map(&self, d: usize) -> Result<DMatrix<f64>> {
        let basis = monomial_basis(self.r(), d);
        let mut t = DMatrix::zeros(basis.len(), basis.len());
        for (a, e) in basis.iter().enumerate() {
            let q = Poly::from_terms(self.r(), [(e.clone(), 1.0)])?
                .affine_substitute(&self.shift, &self.matrix)?;
            for (beta, c) in q.terms() {
                let bi = basis.index_of(beta).expect("substitution keeps the degree");
                t[(bi, a)] = c;
            }
        }
        Ok(t)
    }

    /// Maps a tms in `η` to the same functional in `ξ`.
    fn tms_to_xi(&self, z: &Tms) -> Result<Tms> {
        let t = self.coeff_map(z.degree())?;
        let ze = DVector::from_column_slice(z.entries());
        let out = t.transpose() * ze;
        Tms::new(z.dim(), z.degree(), out.iter().copied().collect())
    }

    fn poly_to_eta(&self, p: &Poly) -> Result<Poly> {
        p.affine_substitute(&self.shift, &self.matrix)
    }
}

/// `F0 + Σ_j x_j F_j ⪰ 0`.
#[derive(Clone, Debug)]
pub struct Lmi {
    pub f0: DMatrix<f64>,
    pub fs: Vec<DMatrix<f64>>,
}

impl Lmi {
    pub fn at(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = self.f0.clone();
        for (f, v) in self.fs.iter().zip(x) {
            m += f * *v;
        }
        m
    }
}

/// The deterministic decision set `X`.
#[derive(Clone, Debug, Default)]
pub struct DecisionSet {
    pub n: usize,
    /// `aᵀx ≥ c`.
    pub linear_ineqs: Vec<(Vec<f64>, f64)>,
    /// `aᵀx = c`.
    pub linear_eqs: Vec<(Vec<f64>, f64)>,
    pub lmis: Vec<Lmi>,
    /// `u_i(x) ≥ 0`, taken as SOS-concave.
    pub poly_ineqs: Vec<Poly>,
}

impl DecisionSet {
    pub fn new(n: usize) -> Self {
        DecisionSet {
            n,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, len: usize| {
            Err(Error::DimensionMismatch {
                expected: self.n,
                found: len,
            })
            .map_err(|e| Error::InvalidParameter(format!("{what}: {e}")))
        };
        for (a, _) in self.linear_ineqs.iter().chain(&self.linear_eqs) {
            if a.len() != self.n {
                return bad("linear row", a.len());
            }
        }
        for l in &self.lmis {
            if l.fs.len() != self.n {
                return bad("LMI", l.fs.len());
            }
            let s = l.f0.nrows();
            if l.f0.ncols() != s || l.fs.iter().any(|f| f.nrows() != s || f.ncols() != s) {
                return Err(Error::InvalidParameter("LMI matrices must share one square shape".into()));
            }
            for f in std::iter::once(&l.f0).chain(&l.fs) {
                if (f - f.transpose()).amax() > 1e-12 * f.amax().max(1.0) {
                    return Err(Error::InvalidParameter("LMI matrices must be symmetric".into()));
                }
            }
        }
        for u in &self.poly_ineqs {
            if u.dim() != self.n {
                return bad("polynomial constraint", u.dim());
            }
        }
        Ok(())
    }

    /// Largest violation of the deterministic constraints at `x` (0 if
    /// feasible).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let dot = |a: &[f64]| a.iter().zip(x).map(|(p, q)| p * q).sum::<f64>();
        let mut v: f64 = 0.0;
        for (a, c) in &self.linear_ineqs {
            v = v.max(c - dot(a));
        }
        for (a, c) in &self.linear_eqs {
            v = v.max((dot(a) - c).abs());
        }
        for l in &self.lmis {
            v = v.max(-l.at(x).symmetric_eigenvalues().min());
        }
        for u in &self.poly_ineqs {
            v = v.max(-u.eval(x).unwrap_or(f64::NEG_INFINITY));
        }
        v
    }
}

/// Which conic backend and tolerances the relaxation loop uses.
#[derive(Clone)]
pub struct RobustOptions {
    /// Highest relaxation order tried; `None` means `k0 + 3`.
    pub k_max: Option<usize>,
    /// Relative duality gap `|f_sos - f_mom| / (1 + |f_sos|)` for certification.
    pub gap_tol: f64,
    pub cert_tol: f64,
    pub rank_tol: f64,
    pub solver: SolverOptions,
    /// `None` resolves the backend from `CCO_BACKEND`.
    pub backend: Option<Arc<dyn ConicBackend>>,
    /// Cross-check the extracted dual against the explicitly assembled dual
    /// program when it has at most this many equality rows.
    pub cross_check_rows: usize,
    /// Work in whitened coordinates `η`.
    pub whiten: bool,
}

impl Default for RobustOptions {
    fn default() -> Self {
        RobustOptions {
            k_max: None,
            gap_tol: 1e-6,
            cert_tol: 1e-6,
            rank_tol: DEFAULT_RANK_TOL,
            solver: SolverOptions::default(),
            backend: None,
            cross_check_rows: 400,
            whiten: true,
        }
    }
}

impl std::fmt::Debug for RobustOptions {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RobustOptions")
            .field("k_max", &self.k_max)
            .field("gap_tol", &self.gap_tol)
            .field("cert_tol", &self.cert_tol)
            .field("rank_tol", &self.rank_tol)
            .field("solver", &self.solver)
            .field("backend", &self.backend.as_ref().map(|b| b.name()))
            .field("cross_check_rows", &self.cross_check_rows)
            .field("whiten", &self.whiten)
            .finish()
    }
}

impl RobustOptions {
    fn backend(&self) -> Result<Arc<dyn ConicBackend>> {
        match &self.backend {
            Some(b) => Ok(b.clone()),
            None => Ok(Arc::from(backend_from_env()?)),
        }
    }

    fn whitening(&self, u: &UncertaintySet) -> Whitening {
        if self.whiten {
            u.whitening()
        } else {
            Whitening::identity(u.r())
        }
    }
}

/// The relaxation of one order, with handles into its program.
#[derive(Clone, Debug)]
pub struct PrimalRelaxation {
    pub program: ConicProgram,
    pub k: usize,
    pub x: BlockId,
    pub qmod: QmodEncoding,
    /// Present on the SOS-convex path: the lifted moment vector.
    pub w: Option<BlockId>,
    whitening: Whitening,
    d: usize,
}

impl PrimalRelaxation {
    pub fn x_value(&self, sol: &PrimalDualSolution) -> Vec<f64> {
        sol.block(self.x).as_vector().expect("x is a vector block").to_vec()
    }

    /// The dual tms `z` in the original coordinates `ξ`.
    pub fn dual_z(&self, sol: &PrimalDualSolution) -> Result<Tms> {
        self.whitening.tms_to_xi(&self.qmod.dual_tms(sol))
    }

    fn dual_z_internal(&self, sol: &PrimalDualSolution) -> Tms {
        self.qmod.dual_tms(sol)
    }
}

fn check_k(pc: &PerturbedConstraint, k: usize) -> Result<()> {
    let k0 = relaxation_order_floor(pc.d());
    if k < k0 {
        return Err(Error::OrderTooSmall { k, needed: k0 });
    }
    Ok(())
}

/// `(A' , b')` with `h(x, ξ(η)) = (A'x + b')ᵀ[η]_d`.
fn whitened_data(pc: &PerturbedConstraint, w: &Whitening) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let t = w.coeff_map(pc.d())?;
    Ok((&t * pc.a(), &t * pc.b()))
}

fn whitened_g(w: &Whitening, u: &UncertaintySet, whiten: bool) -> Result<Poly> {
    if whiten {
        // g(ξ(η)) = Γ (1 - ‖η‖²); the positive factor does not change Q(g)
        let r = u.r();
        let mut terms = vec![(Exponent::zero(r), 1.0)];
        terms.extend((0..r).map(|i| (Exponent::unit(r, i).add(&Exponent::unit(r, i)), -1.0)));
        Poly::from_terms(r, terms)
    } else {
        w.poly_to_eta(&u.g())
    }
}

struct DecisionRows {
    ineq: Vec<RowId>,
    eq: Vec<RowId>,
}

/// Adds `X`'s linear and LMI description on the variables `x`.
fn add_decision_constraints(prog: &mut ConicProgram, xs: &[Var], set: &DecisionSet) -> DecisionRows {
    let mut rows = DecisionRows {
        ineq: Vec::new(),
        eq: Vec::new(),
    };
    if !set.linear_ineqs.is_empty() {
        let s = prog.add_block(Cone::Nonneg, set.linear_ineqs.len(), "ineq_slack");
        for (i, (a, c)) in set.linear_ineqs.iter().enumerate() {
            let mut terms: Vec<(Var, f64)> = xs.iter().zip(a).map(|(v, c)| (*v, *c)).collect();
            terms.push((prog.var(s, i), -1.0));
            rows.ineq.push(prog.add_equality(terms, *c, format!("ineq{i}")));
        }
    }
    for (i, (a, c)) in set.linear_eqs.iter().enumerate() {
        let terms: Vec<(Var, f64)> = xs.iter().zip(a).map(|(v, c)| (*v, *c)).collect();
        rows.eq.push(prog.add_equality(terms, *c, format!("eq{i}")));
    }
    for (l, lmi) in set.lmis.iter().enumerate() {
        let side = lmi.f0.nrows();
        let s = prog.add_block(Cone::Psd, side, format!("lmi{l}"));
        for i in 0..side {
            for j in i..side {
                let mut terms = vec![(prog.entry(s, i, j), 1.0)];
                for (xv, f) in xs.iter().zip(&lmi.fs) {
                    terms.push((*xv, -f[(i, j)]));
                }
                prog.add_equality(terms, lmi.f0[(i, j)], format!("lmi{l}_{i}_{j}"));
            }
        }
    }
    rows
}

/// Relaxation of order `k` of `min cᵀx s.t. h(x, ·) ≥ 0 on U, x ∈ X`.
pub fn build_primal_relaxation(
    c: &[f64],
    pc: &PerturbedConstraint,
    set: &DecisionSet,
    u: &UncertaintySet,
    k: usize,
    opts: &RobustOptions,
) -> Result<PrimalRelaxation> {
    if !set.poly_ineqs.is_empty() {
        return Err(Error::InvalidParameter(
            "polynomial constraints need the SOS-convex path".into(),
        ));
    }
    check_inputs(pc, set, u)?;
    if c.len() != pc.n() {
        return Err(Error::DimensionMismatch {
            expected: pc.n(),
            found: c.len(),
        });
    }
    check_k(pc, k)?;
    let wh = opts.whitening(u);
    let (a, b) = whitened_data(pc, &wh)?;
    let g = whitened_g(&wh, u, opts.whiten)?;
    let mut prog = ConicProgram::new();
    let x = prog.add_block(Cone::Free, pc.n(), "x");
    let xs: Vec<Var> = (0..pc.n()).map(|i| prog.var(x, i)).collect();
    for (v, ci) in xs.iter().zip(c) {
        prog.add_objective(*v, *ci);
    }
    let qmod = encode_qmod_membership(&mut prog, &a, &b, &xs, &g, k, "h")?;
    add_decision_constraints(&mut prog, &xs, set);
    Ok(PrimalRelaxation {
        program: prog,
        k,
        x,
        qmod,
        w: None,
        whitening: wh,
        d: pc.d(),
    })
}

fn check_inputs(pc: &PerturbedConstraint, set: &DecisionSet, u: &UncertaintySet) -> Result<()> {
    set.validate()?;
    if set.n != pc.n() {
        return Err(Error::DimensionMismatch {
            expected: pc.n(),
            found: set.n,
        });
    }
    if u.r() != pc.r() {
        return Err(Error::DimensionMismatch {
            expected: pc.r(),
            found: u.r(),
        });
    }
    Ok(())
}

/// The moment relaxation assembled directly:
///
/// ```text
///   max  -bᵀy + Σ c_i λ_i + Σ e_i ν_i - Σ ⟨F0_l, Z_l⟩
///   s.t. Aᵀy + Gᵀλ + Eᵀν + Σ F_l*(Z_l) = c,   y = z|_d,
///        M_k[z] ⪰ 0,  L_g[z] ⪰ 0,  λ ≥ 0,  Z_l ⪰ 0,
/// ```
///
/// posed as a minimization of the negated objective.
#[derive(Clone, Debug)]
pub struct DualRelaxation {
    pub program: ConicProgram,
    pub z: BlockId,
    pub k: usize,
    whitening: Whitening,
}

impl DualRelaxation {
    /// `f_k^{mom}`.
    pub fn value(&self, sol: &PrimalDualSolution) -> f64 {
        -sol.primal_objective
    }

    pub fn z(&self, sol: &PrimalDualSolution) -> Result<Tms> {
        let v = sol.block(self.z).as_vector().expect("z is a vector block");
        let r = self.whitening.r();
        self.whitening.tms_to_xi(&Tms::new(r, 2 * self.k, v.to_vec())?)
    }
}

pub fn build_dual_relaxation(
    c: &[f64],
    pc: &PerturbedConstraint,
    set: &DecisionSet,
    u: &UncertaintySet,
    k: usize,
    opts: &RobustOptions,
) -> Result<DualRelaxation> {
    if !set.poly_ineqs.is_empty() {
        return Err(Error::InvalidParameter(
            "polynomial constraints need the SOS-convex path".into(),
        ));
    }
    check_inputs(pc, set, u)?;
    check_k(pc, k)?;
    let wh = opts.whitening(u);
    let (a, b) = whitened_data(pc, &wh)?;
    let g = whitened_g(&wh, u, opts.whiten)?;
    let r = pc.r();
    let n = pc.n();
    let mut prog = ConicProgram::new();
    let zlen = basis_len(r, 2 * k);
    let z = prog.add_block(Cone::Free, zlen, "z");
    for (gi, gen) in [Poly::constant(r, 1.0), g].iter().enumerate() {
        let pat = crate::momentkit::LocalizingPattern::new(gen, k)?;
        let blk = prog.add_block(Cone::Psd, pat.side(), format!("L{gi}"));
        for (i, j, f) in pat.upper() {
            let mut terms = vec![(prog.entry(blk, i, j), 1.0)];
            terms.extend(f.iter().map(|&(idx, wgt)| (prog.var(z, idx), -wgt)));
            prog.add_equality(terms, 0.0, format!("loc{gi}_{i}_{j}"));
        }
    }
    // stationarity in x, one row per coordinate
    let mut stat: Vec<Vec<(Var, f64)>> = (0..n)
        .map(|j| {
            (0..a.nrows())
                .map(|al| (prog.var(z, al), a[(al, j)]))
                .collect()
        })
        .collect();
    for (al, bv) in b.iter().enumerate() {
        prog.add_objective(prog.var(z, al), *bv);
    }
    if !set.linear_ineqs.is_empty() {
        let lam = prog.add_block(Cone::Nonneg, set.linear_ineqs.len(), "lambda");
        for (i, (row, ci)) in set.linear_ineqs.iter().enumerate() {
            for j in 0..n {
                stat[j].push((prog.var(lam, i), row[j]));
            }
            prog.add_objective(prog.var(lam, i), -ci);
        }
    }
    if !set.linear_eqs.is_empty() {
        let nu = prog.add_block(Cone::Free, set.linear_eqs.len(), "nu");
        for (i, (row, ci)) in set.linear_eqs.iter().enumerate() {
            for j in 0..n {
                stat[j].push((prog.var(nu, i), row[j]));
            }
            prog.add_objective(prog.var(nu, i), -ci);
        }
    }
    for (l, lmi) in set.lmis.iter().enumerate() {
        let side = lmi.f0.nrows();
        let zb = prog.add_block(Cone::Psd, side, format!("Z{l}"));
        for i in 0..side {
            for jj in i..side {
                let m = if i == jj { 1.0 } else { 2.0 };
                let v = prog.entry(zb, i, jj);
                for j in 0..n {
                    stat[j].push((v, m * lmi.fs[j][(i, jj)]));
                }
                prog.add_objective(v, m * lmi.f0[(i, jj)]);
            }
        }
    }
    for (j, terms) in stat.into_iter().enumerate() {
        prog.add_equality(terms, c[j], format!("stat{j}"));
    }
    Ok(DualRelaxation {
        program: prog,
        z,
        k,
        whitening: wh,
    })
}

/// Lifted relaxation of order `k` for an SOS-convex objective `f` and
/// SOS-concave constraints `u_i`:
///
/// ```text
///   min ⟨f, w⟩  s.t.  M_{d1}[w] ⪰ 0, w_0 = 1, ⟨u_i, w⟩ ≥ 0, x = π(w),
///                     h(x, ·) ∈ Q(g)_{2k}, x ∈ X (linear and LMI parts).
/// ```
pub fn build_sosconvex_relaxation(
    f: &Poly,
    pc: &PerturbedConstraint,
    set: &DecisionSet,
    u: &UncertaintySet,
    k: usize,
    opts: &RobustOptions,
) -> Result<PrimalRelaxation> {
    check_inputs(pc, set, u)?;
    let n = pc.n();
    if f.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: f.dim(),
        });
    }
    check_k(pc, k)?;
    let d1 = sosconvex_half_degree(f, &set.poly_ineqs);
    let wh = opts.whitening(u);
    let (a, b) = whitened_data(pc, &wh)?;
    let g = whitened_g(&wh, u, opts.whiten)?;

    let mut prog = ConicProgram::new();
    let x = prog.add_block(Cone::Free, n, "x");
    let xs: Vec<Var> = (0..n).map(|i| prog.var(x, i)).collect();
    let calpha = build_c_alpha(n, d1);
    let wlen = calpha.len();
    let w = prog.add_block(Cone::Free, wlen, "w");
    let wm = prog.add_block(Cone::Psd, calpha.row_basis.len(), "Mw");
    let side = calpha.row_basis.len();
    for i in 0..side {
        for j in i..side {
            let a_idx = calpha.sum_index(i, j);
            prog.add_equality(
                vec![(prog.entry(wm, i, j), 1.0), (prog.var(w, a_idx), -1.0)],
                0.0,
                format!("hankel_{i}_{j}"),
            );
        }
    }
    prog.add_equality(vec![(prog.var(w, 0), 1.0)], 1.0, "w0");
    for (i, xv) in xs.iter().enumerate() {
        let e = calpha
            .alpha_basis
            .index_of(&Exponent::unit(n, i))
            .expect("degree one is in the basis");
        prog.add_equality(vec![(*xv, 1.0), (prog.var(w, e), -1.0)], 0.0, format!("pi{i}"));
    }
    let fc = f.coeffs_in(&calpha.alpha_basis)?;
    for (idx, v) in fc.iter().enumerate() {
        prog.add_objective(prog.var(w, idx), *v);
    }
    if !set.poly_ineqs.is_empty() {
        let s = prog.add_block(Cone::Nonneg, set.poly_ineqs.len(), "u_slack");
        for (i, ui) in set.poly_ineqs.iter().enumerate() {
            let uc = ui.coeffs_in(&calpha.alpha_basis)?;
            let mut terms: Vec<(Var, f64)> = uc
                .iter()
                .enumerate()
                .map(|(idx, v)| (prog.var(w, idx), *v))
                .collect();
            terms.push((prog.var(s, i), -1.0));
            prog.add_equality(terms, 0.0, format!("u{i}"));
        }
    }
    let qmod = encode_qmod_membership(&mut prog, &a, &b, &xs, &g, k, "h")?;
    add_decision_constraints(&mut prog, &xs, set);
    Ok(PrimalRelaxation {
        program: prog,
        k,
        x,
        qmod,
        w: Some(w),
        whitening: wh,
        d: pc.d(),
    })
}

/// `d1 = max(⌈max(deg f, deg u_i) / 2⌉, 1)`.
pub fn sosconvex_half_degree(f: &Poly, us: &[Poly]) -> usize {
    let m = us.iter().map(Poly::degree).fold(f.degree(), usize::max);
    m.div_ceil(2).max(1)
}

/// `π(w) = (w_{e_1}, …, w_{e_n})`.
pub fn project_moments(w: &Tms) -> Vec<f64> {
    let n = w.dim();
    (0..n)
        .map(|i| w.get(&Exponent::unit(n, i)).expect("degree one is present"))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportStatus {
    Certified,
    MaxOrderReached,
    Infeasible,
    RelaxationUnbounded,
}

impl std::fmt::Display for ReportStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ReportStatus::Certified => "certified",
            ReportStatus::MaxOrderReached => "max-order-reached",
            ReportStatus::Infeasible => "infeasible",
            ReportStatus::RelaxationUnbounded => "relaxation-unbounded",
        })
    }
}

/// One order of the relaxation loop.
#[derive(Clone, Debug)]
pub struct OrderRecord {
    pub k: usize,
    pub solver_status: SolveStatus,
    pub f_sos: f64,
    pub f_mom: f64,
    pub gap: f64,
    pub flat_t: Option<usize>,
    /// Value of the explicitly assembled dual, when it was cross-checked.
    pub explicit_dual: Option<f64>,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub status: ReportStatus,
    pub xstar: Vec<f64>,
    pub fstar: f64,
    pub k_used: usize,
    /// Relative gap `|f_sos - f_mom| / (1 + |f_sos|)` at `k_used`.
    pub gap: f64,
    pub flat_t: Option<usize>,
    /// `z|_d`.
    pub dual_y: Option<Tms>,
    pub dual_z: Option<Tms>,
    /// Lifted moment vector on the SOS-convex path.
    pub w: Option<Tms>,
    pub trace: Vec<OrderRecord>,
}

impl SolveReport {
    pub fn is_certified(&self) -> bool {
        self.status == ReportStatus::Certified
    }
}

fn relative_gap(sol: &PrimalDualSolution) -> f64 {
    sol.gap / (1.0 + sol.primal_objective.abs())
}

/// Accepts a stalled solve whose residuals and gap are still small.
fn usable(sol: &PrimalDualSolution, opts: &RobustOptions) -> bool {
    match sol.status {
        SolveStatus::Optimal => true,
        SolveStatus::NumericalFailure => {
            let tol = (opts.solver.feas_tol * 100.0).max(1e-7);
            sol.primal_residual <= tol
                && sol.dual_residual <= tol
                && relative_gap(sol) <= opts.gap_tol
        }
        _ => false,
    }
}

fn trace_summary(trace: &[OrderRecord]) -> String {
    trace
        .iter()
        .map(|t| format!("k={} f_sos={:.6e} gap={:.1e} status={:?}", t.k, t.f_sos, t.gap, t.solver_status))
        .collect::<Vec<_>>()
        .join("; ")
}

fn run_loop<B>(
    pc: &PerturbedConstraint,
    opts: &RobustOptions,
    mut build: B,
    cross_check: Option<&dyn Fn(usize) -> Result<Option<f64>>>,
) -> Result<SolveReport>
where
    B: FnMut(usize) -> Result<PrimalRelaxation>,
{
    let k0 = relaxation_order_floor(pc.d());
    let k_max = opts.k_max.unwrap_or(k0 + 3).max(k0);
    let backend = opts.backend()?;
    let mut trace = Vec::new();
    let mut last: Option<SolveReport> = None;
    for k in k0..=k_max {
        let relax = build(k)?;
        let sol = backend.solve(&relax.program, &opts.solver)?;
        let mut rec = OrderRecord {
            k,
            solver_status: sol.status,
            f_sos: sol.primal_objective,
            f_mom: sol.dual_objective,
            gap: relative_gap(&sol),
            flat_t: None,
            explicit_dual: None,
            iterations: sol.iterations,
        };
        match sol.status {
            SolveStatus::PrimalInfeasible | SolveStatus::DualInfeasible => {
                let status = if sol.status == SolveStatus::PrimalInfeasible {
                    ReportStatus::Infeasible
                } else {
                    ReportStatus::RelaxationUnbounded
                };
                let f = if status == ReportStatus::Infeasible {
                    f64::INFINITY
                } else {
                    f64::NEG_INFINITY
                };
                rec.f_sos = f;
                trace.push(rec);
                return Ok(SolveReport {
                    status,
                    xstar: Vec::new(),
                    fstar: f,
                    k_used: k,
                    gap: f64::NAN,
                    flat_t: None,
                    dual_y: None,
                    dual_z: None,
                    w: None,
                    trace,
                });
            }
            _ if !usable(&sol, opts) => {
                trace.push(rec);
                return Err(Error::Solver(format!(
                    "relaxation order {k}: numerical failure (primal residual {:.1e}, dual residual {:.1e}); trace: {}",
                    sol.primal_residual,
                    sol.dual_residual,
                    trace_summary(&trace)
                )));
            }
            _ => {}
        }
        let z_int = relax.dual_z_internal(&sol);
        rec.flat_t = flat_truncation(&z_int, k, k0, opts.rank_tol);
        if let Some(check) = cross_check {
            rec.explicit_dual = check(k)?;
        }
        let z = relax.dual_z(&sol)?;
        let y = z.truncate(relax.d)?;
        let w = match relax.w {
            Some(wb) => {
                let v = sol.block(wb).as_vector().expect("w is a vector block");
                let n = pc.n();
                let deg = crate::certkit::degree_of_len(n, v.len());
                Some(Tms::new(n, deg, v.to_vec())?)
            }
            None => None,
        };
        let certified = rec.gap <= opts.gap_tol && rec.flat_t.is_some();
        let report = SolveReport {
            status: if certified {
                ReportStatus::Certified
            } else {
                ReportStatus::MaxOrderReached
            },
            xstar: relax.x_value(&sol),
            fstar: sol.primal_objective,
            k_used: k,
            gap: rec.gap,
            flat_t: rec.flat_t,
            dual_y: Some(y),
            dual_z: Some(z),
            w,
            trace: Vec::new(),
        };
        trace.push(rec);
        last = Some(report);
        if certified {
            break;
        }
    }
    let mut report = last.expect("at least one order was solved");
    report.trace = trace;
    Ok(report)
}

/// Linear objective path: loops over `k` until the relaxation certifies.
pub fn solve_linear_cco(
    c: &[f64],
    pc: &PerturbedConstraint,
    set: &DecisionSet,
    u: &UncertaintySet,
    opts: &RobustOptions,
) -> Result<SolveReport> {
    let backend = opts.backend()?;
    let check = |k: usize| -> Result<Option<f64>> {
        let dual = build_dual_relaxation(c, pc, set, u, k, opts)?;
        if dual.program.num_rows() > opts.cross_check_rows {
            return Ok(None);
        }
        let sol = backend.solve(&dual.program, &opts.solver)?;
        Ok(usable(&sol, opts).then(|| dual.value(&sol)))
    };
    run_loop(
        pc,
        opts,
        |k| build_primal_relaxation(c, pc, set, u, k, opts),
        Some(&check),
    )
}

/// SOS-convex path; `x* = π(w*)` on certification.
pub fn solve_sosconvex_cco(
    f: &Poly,
    pc: &PerturbedConstraint,
    set: &DecisionSet,
    u: &UncertaintySet,
    opts: &RobustOptions,
) -> Result<SolveReport> {
    run_loop(
        pc,
        opts,
        |k| build_sosconvex_relaxation(f, pc, set, u, k, opts),
        None,
    )
}

/// Order-`k` Moment-SOS lower bound on `min_{ξ ∈ U} p(ξ)`.
#[derive(Clone, Debug)]
pub struct MinOnU {
    pub bound: f64,
    /// Dual moment vector in `ξ` coordinates, `v_0 = 1`.
    pub moments: Tms,
    pub flat: bool,
}

pub fn min_on_u(p: &Poly, u: &UncertaintySet, k: usize, opts: &RobustOptions) -> Result<MinOnU> {
    if p.dim() != u.r() {
        return Err(Error::DimensionMismatch {
            expected: u.r(),
            found: p.dim(),
        });
    }
    let needed = relaxation_order_floor(p.degree());
    if k < needed {
        return Err(Error::OrderTooSmall { k, needed });
    }
    let wh = opts.whitening(u);
    let g = whitened_g(&wh, u, opts.whiten)?;
    let pe = wh.poly_to_eta(p)?;
    let r = u.r();
    let mut prog = ConicProgram::new();
    let t = prog.add_block(Cone::Free, 1, "gamma");
    let basis = monomial_basis(r, pe.degree());
    let mut target: Vec<AffineExpr> = pe
        .coeffs_in(&basis)?
        .into_iter()
        .map(AffineExpr::constant)
        .collect();
    target[0].push(prog.var(t, 0), -1.0);
    prog.add_objective(prog.var(t, 0), -1.0);
    let enc = encode_qmod(&mut prog, r, &[g], k, &target, "p")?;
    let sol = opts.backend()?.solve(&prog, &opts.solver)?;
    if !usable(&sol, opts) {
        return Err(Error::Solver(format!(
            "minimum on the uncertainty set: solver status {}",
            sol.status
        )));
    }
    let z = enc.dual_tms(&sol);
    let flat = flat_truncation(&z, k, needed, opts.rank_tol).is_some();
    Ok(MinOnU {
        bound: sol.value(prog.var(t, 0)),
        moments: wh.tms_to_xi(&z)?,
        flat,
    })
}

/// A posteriori robust feasibility check of a decision `x`.
#[derive(Clone, Debug)]
pub struct FeasibilityCheck {
    /// Moment-SOS lower bound on `min_U h(x, ·)`.
    pub bound: f64,
    /// Smallest `h(x, ξ_j)` over points sampled inside `U`.
    pub sample_min: f64,
}

pub fn check_robust_feasibility(
    x: &[f64],
    pc: &PerturbedConstraint,
    u: &UncertaintySet,
    k: usize,
    samples: usize,
    seed: u64,
    opts: &RobustOptions,
) -> Result<FeasibilityCheck> {
    let p = pc.poly_at(x)?;
    let k = k.max(relaxation_order_floor(p.degree()));
    let m = min_on_u(&p, u, k, opts)?;
    let pts = u.sample_inside(samples, seed);
    let sample_min = pc.eval_many(x, &pts)?.into_iter().fold(f64::INFINITY, f64::min);
    Ok(FeasibilityCheck {
        bound: m.bound,
        sample_min,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interval(gamma: f64) -> UncertaintySet {
        UncertaintySet::new(gamma, DVector::from_vec(vec![0.0]), DMatrix::from_element(1, 1, 1.0)).unwrap()
    }

    /// `h = x - ξ` with one decision variable.
    fn toy() -> PerturbedConstraint {
        PerturbedConstraint::from_terms(
            1,
            1,
            [
                (Exponent::new(vec![0]), vec![1.0], 0.0),
                (Exponent::new(vec![1]), vec![0.0], -1.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn order_floor() {
        assert_eq!(relaxation_order_floor(4), 2);
        assert_eq!(relaxation_order_floor(1), 1);
        assert_eq!(relaxation_order_floor(5), 3);
        assert_eq!(relaxation_order_floor(0), 1);
    }

    #[test]
    fn constraint_trims_to_its_degree() {
        let pc = PerturbedConstraint::new(
            2,
            DMatrix::from_row_slice(6, 1, &[1.0, 2.0, 0.0, 0.0, 0.0, 0.0]),
            DVector::zeros(6),
        )
        .unwrap();
        assert_eq!(pc.d(), 1);
        assert_eq!(pc.a().nrows(), 3);
        assert!((pc.eval(&[2.0], &[3.0, 5.0]).unwrap() - (2.0 + 12.0)).abs() < 1e-12);
        assert!(PerturbedConstraint::new(2, DMatrix::zeros(5, 1), DVector::zeros(5)).is_err());
    }

    #[test]
    fn ellipsoid_polynomial_matches_direct_evaluation() {
        let u = UncertaintySet::new(
            1.5,
            DVector::from_vec(vec![1.0, -2.0]),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
        )
        .unwrap();
        let g = u.g();
        for xi in [[0.0, 0.0], [1.0, -2.0], [2.5, 0.5]] {
            assert!((g.eval(&xi).unwrap() - u.g_at(&xi)).abs() < 1e-12);
        }
        for p in u.sample_inside(200, 1) {
            assert!(u.contains(&p));
        }
    }

    #[test]
    fn lambda_must_be_positive_definite() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let e = UncertaintySet::new(1.0, DVector::zeros(2), bad);
        assert!(matches!(e, Err(Error::NotPositiveDefinite(_))));
        assert!(UncertaintySet::new(0.0, DVector::zeros(1), DMatrix::identity(1, 1)).is_err());
    }

    #[test]
    fn whitening_round_trips_a_dirac() {
        let u = UncertaintySet::new(
            2.0,
            DVector::from_vec(vec![0.5, 1.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]),
        )
        .unwrap();
        let wh = u.whitening();
        let eta = [0.3, -0.4];
        let xi: Vec<f64> = (0..2)
            .map(|i| wh.shift[i] + wh.matrix[i][0] * eta[0] + wh.matrix[i][1] * eta[1])
            .collect();
        let z = crate::momentkit::tms_of_point(&eta, 4);
        let back = wh.tms_to_xi(&z).unwrap();
        let want = crate::momentkit::tms_of_point(&xi, 4);
        for (a, b) in back.entries().iter().zip(want.entries()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn toy_linear_problem() {
        let pc = toy();
        let set = DecisionSet::new(1);
        let opts = RobustOptions::default();
        let rep = solve_linear_cco(&[1.0], &pc, &set, &interval(1.0), &opts).unwrap();
        assert_eq!(rep.status, ReportStatus::Certified);
        assert_eq!(rep.k_used, 1);
        assert!((rep.fstar - 1.0).abs() < 1e-6);
        assert!((rep.xstar[0] - 1.0).abs() < 1e-6);
        let y = rep.dual_y.unwrap();
        assert!((y.entries()[0] - 1.0).abs() < 1e-6 && (y.entries()[1] - 1.0).abs() < 1e-6);
        let ex = rep.trace[0].explicit_dual.unwrap();
        assert!((ex - 1.0).abs() < 1e-6);
    }

    #[test]
    fn toy_dual_program_alone() {
        let pc = toy();
        let set = DecisionSet::new(1);
        for whiten in [true, false] {
            let opts = RobustOptions {
                whiten,
                ..Default::default()
            };
            let dual = build_dual_relaxation(&[1.0], &pc, &set, &interval(1.0), 1, &opts).unwrap();
            let sol = crate::conicore::InteriorPoint
                .solve(&dual.program, &SolverOptions::default())
                .unwrap();
            assert!((dual.value(&sol) - 1.0).abs() < 1e-7);
            let z = dual.z(&sol).unwrap();
            assert!((z.entries()[1] - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_in_xi_reduces_to_sign_constraint() {
        let pc = PerturbedConstraint::from_terms(1, 1, [(Exponent::new(vec![0]), vec![2.0], 0.0)]).unwrap();
        assert_eq!(pc.d(), 0);
        let set = DecisionSet::new(1);
        let rep = solve_linear_cco(&[1.0], &pc, &set, &interval(1.0), &RobustOptions::default()).unwrap();
        // any probability measure on U is optimal for z; an interior-point
        // solution is not flat, so the gap closes without certification
        assert!(rep.fstar.abs() < 1e-6);
        assert!(rep.gap <= 1e-6);
        assert_eq!(rep.status, ReportStatus::MaxOrderReached);
        assert!(rep.flat_t.is_none());
    }

    #[test]
    fn empty_decision_set_is_infeasible() {
        let pc = toy();
        let mut set = DecisionSet::new(1);
        set.linear_ineqs.push((vec![1.0], 2.0));
        set.linear_ineqs.push((vec![-1.0], -1.0));
        let rep = solve_linear_cco(&[1.0], &pc, &set, &interval(1.0), &RobustOptions::default()).unwrap();
        assert_eq!(rep.status, ReportStatus::Infeasible);
    }

    #[test]
    fn toy_sosconvex_problem() {
        let pc = toy();
        let mut set = DecisionSet::new(1);
        set.poly_ineqs.push(Poly::from_terms(1, [(Exponent::new(vec![0]), 4.0), (Exponent::new(vec![2]), -1.0)]).unwrap());
        let f = Poly::from_terms(1, [(Exponent::new(vec![2]), 1.0)]).unwrap();
        let rep = solve_sosconvex_cco(&f, &pc, &set, &interval(1.0), &RobustOptions::default()).unwrap();
        assert!(rep.is_certified());
        assert!((rep.fstar - 1.0).abs() < 1e-6);
        let w = rep.w.unwrap();
        for v in w.entries() {
            assert!((v - 1.0).abs() < 1e-5);
        }
        assert!((project_moments(&w)[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn min_on_interval() {
        let opts = RobustOptions::default();
        let u = interval(1.0);
        let x2 = Poly::from_terms(1, [(Exponent::new(vec![2]), 1.0)]).unwrap();
        let g = u.g();
        let x1 = Poly::var(1, 0);
        for (p, want) in [(x2, 0.0), (g, 0.0), (x1, -1.0)] {
            let m = min_on_u(&p, &u, 1, &opts).unwrap();
            assert!((m.bound - want).abs() < 1e-6, "{p:?}: {}", m.bound);
            assert!((m.moments.entries()[0] - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn projection_of_dirac_moments() {
        let x = [0.3, -1.2, 2.0];
        let w = crate::momentkit::tms_of_point(&x, 4);
        assert_eq!(project_moments(&w), x.to_vec());
    }
}
