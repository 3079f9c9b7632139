//! Quadratic-module and SOS memberships as conic constraints.
//!
//! A target polynomial `p = Σ_α p_α ξ^α` whose coefficients are affine in
//! program variables is tied to Gram blocks `Q_0, Q_1, …` by one equality per
//! `α ∈ N^r_{2k}`:
//!
//! ```text
//!   coeff_α( [ξ]ᵀ Q_0 [ξ] + Σ_i g_i [ξ]ᵀ Q_i [ξ] ) = p_α.
//! ```
//!
//! The multipliers of those rows form a tms, and the dual cone condition on
//! the Gram blocks is exactly `M_k[z] ⪰ 0, L_{g_i}[z] ⪰ 0` for `z = -y`.

use nalgebra::{DMatrix, DVector};

use crate::conicore::{BlockId, Cone, ConicProgram, PrimalDualSolution, RowId, Var};
use crate::error::{Error, Result};
use crate::momentkit::{LocalizingPattern, Tms};
use crate::polycore::{basis_len, monomial_basis, Exponent, MonomialBasis, Poly};

/// `constant + Σ coeff · var` over program variables.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AffineExpr {
    pub constant: f64,
    pub terms: Vec<(Var, f64)>,
}

impl AffineExpr {
    pub fn constant(c: f64) -> Self {
        AffineExpr {
            constant: c,
            terms: Vec::new(),
        }
    }

    pub fn push(&mut self, v: Var, c: f64) {
        if c != 0.0 {
            self.terms.push((v, c));
        }
    }

    pub fn value(&self, sol: &PrimalDualSolution) -> f64 {
        self.constant + self.terms.iter().map(|(v, c)| c * sol.value(*v)).sum::<f64>()
    }
}

/// Gram blocks and matching rows of one module membership.
#[derive(Clone, Debug)]
pub struct QmodEncoding {
    pub k: usize,
    /// Multipliers: `1` first, then the module generators.
    pub generators: Vec<Poly>,
    /// One PSD block per generator, in the same order.
    pub blocks: Vec<BlockId>,
    pub patterns: Vec<LocalizingPattern>,
    /// Row for each exponent of `basis`.
    pub matchrows: Vec<RowId>,
    /// `N^r_{2k}`.
    pub basis: MonomialBasis,
}

impl QmodEncoding {
    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn q0(&self) -> BlockId {
        self.blocks[0]
    }

    /// Side of each Gram block.
    pub fn sides(&self) -> Vec<usize> {
        self.patterns.iter().map(|p| p.side()).collect()
    }

    /// The tms `z = -y` carried by the matching-row multipliers.
    pub fn dual_tms(&self, sol: &PrimalDualSolution) -> Tms {
        let entries = self.matchrows.iter().map(|r| -sol.row_dual(*r)).collect();
        Tms::new(self.dim(), self.basis.degree(), entries).expect("one row per exponent")
    }

    /// Gram matrices of the returned certificate.
    pub fn grams(&self, sol: &PrimalDualSolution) -> Vec<DMatrix<f64>> {
        self.blocks
            .iter()
            .map(|b| {
                sol.block(*b)
                    .as_matrix()
                    .expect("Gram blocks are PSD")
                    .clone()
            })
            .collect()
    }

    /// `σ_0 + Σ g_i σ_i` rebuilt from the Gram blocks of `sol`.
    pub fn reassemble(&self, sol: &PrimalDualSolution) -> Result<Poly> {
        let r = self.dim();
        let mut total = Poly::zero(r);
        for ((g, pat), q) in self.generators.iter().zip(&self.patterns).zip(self.grams(sol)) {
            let rb = pat.row_basis();
            let mut sigma = Poly::zero(r);
            for i in 0..rb.len() {
                for j in 0..rb.len() {
                    let e = rb.exponent_at(i).add(rb.exponent_at(j));
                    sigma = sigma.try_add(&Poly::from_terms(r, [(e, q[(i, j)])])?)?;
                }
            }
            total = total.try_add(&g.try_mul(&sigma)?)?;
        }
        Ok(total)
    }
}

/// Adds Gram blocks and matching rows forcing `target ∈ Σ + g_1 Σ + …`
/// truncated at degree `2k`. `target[i]` is the coefficient of the `i`-th
/// monomial of `N^r_{2k}`; a shorter slice pins the remaining coefficients
/// to zero.
pub fn encode_qmod(
    prog: &mut ConicProgram,
    r: usize,
    gs: &[Poly],
    k: usize,
    target: &[AffineExpr],
    label: &str,
) -> Result<QmodEncoding> {
    let basis = monomial_basis(r, 2 * k);
    if target.len() > basis.len() {
        return Err(Error::DegreeOverflow {
            what: "target polynomial".into(),
            degree: degree_of_len(r, target.len()),
            max: 2 * k,
        });
    }
    let mut generators = vec![Poly::constant(r, 1.0)];
    for g in gs {
        if g.dim() != r {
            return Err(Error::DimensionMismatch {
                expected: r,
                found: g.dim(),
            });
        }
        generators.push(g.clone());
    }
    let mut rows: Vec<Vec<(Var, f64)>> = vec![Vec::new(); basis.len()];
    let mut blocks = Vec::new();
    let mut patterns = Vec::new();
    for (gi, g) in generators.iter().enumerate() {
        let pat = LocalizingPattern::new(g, k)?;
        let blk = prog.add_block(Cone::Psd, pat.side(), format!("{label}Q{gi}"));
        for (i, j, f) in pat.upper() {
            let mult = if i == j { 1.0 } else { 2.0 };
            let v = prog.entry(blk, i, j);
            for &(idx, w) in f {
                rows[idx].push((v, mult * w));
            }
        }
        blocks.push(blk);
        patterns.push(pat);
    }
    let mut matchrows = Vec::with_capacity(basis.len());
    for (idx, mut terms) in rows.into_iter().enumerate() {
        let mut rhs = 0.0;
        if let Some(t) = target.get(idx) {
            rhs = t.constant;
            terms.extend(t.terms.iter().map(|(v, c)| (*v, -c)));
        }
        matchrows.push(prog.add_equality(terms, rhs, format!("{label}match{idx}")));
    }
    Ok(QmodEncoding {
        k,
        generators,
        blocks,
        patterns,
        matchrows,
        basis,
    })
}

/// Degree `d` with `basis_len(r, d) == len`, for coefficient vectors
/// expressed in a full graded basis.
pub fn degree_of_len(r: usize, len: usize) -> usize {
    let mut d = 0;
    while basis_len(r, d) < len {
        d += 1;
    }
    d
}

/// Membership `(Ax + b)ᵀ[ξ]_d ∈ Q(g)_{2k} ∩ R[ξ]_d` with decision variables
/// `x`. Rows of `a` and entries of `b` follow the graded order of `[ξ]_d`.
pub fn encode_qmod_membership(
    prog: &mut ConicProgram,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    x: &[Var],
    g: &Poly,
    k: usize,
    label: &str,
) -> Result<QmodEncoding> {
    let r = g.dim();
    let d = degree_of_len(r, a.nrows());
    if basis_len(r, d) != a.nrows() {
        return Err(Error::DimensionMismatch {
            expected: basis_len(r, d),
            found: a.nrows(),
        });
    }
    if b.len() != a.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: b.len(),
        });
    }
    if a.ncols() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: a.ncols(),
            found: x.len(),
        });
    }
    let needed = d.max(g.degree()).div_ceil(2);
    if k < needed {
        return Err(Error::OrderTooSmall { k, needed });
    }
    let target: Vec<AffineExpr> = (0..a.nrows())
        .map(|row| {
            let mut e = AffineExpr::constant(b[row]);
            for (j, v) in x.iter().enumerate() {
                e.push(*v, a[(row, j)]);
            }
            e
        })
        .collect();
    encode_qmod(prog, r, std::slice::from_ref(g), k, &target, label)
}

/// Membership of `target` (coefficients over `N^n_{2 d1}`) in `Σ[x]_{2 d1}`.
pub fn encode_sos_in_x(
    prog: &mut ConicProgram,
    n: usize,
    d1: usize,
    target: &[AffineExpr],
    label: &str,
) -> Result<QmodEncoding> {
    encode_qmod(prog, n, &[], d1, target, label)
}

/// The matrices `C_α` with `[x]_{d1}[x]_{d1}ᵀ = Σ_α x^α C_α`.
#[derive(Clone, Debug)]
pub struct CAlphaFamily {
    pub n: usize,
    pub d1: usize,
    /// Rows and columns: `[x]_{d1}`.
    pub row_basis: MonomialBasis,
    /// `N^n_{2 d1}`.
    pub alpha_basis: MonomialBasis,
    /// For each `β ≤ γ` of the row basis, the index of `β + γ`.
    sum_index: Vec<Vec<usize>>,
    multiplicity: Vec<usize>,
}

impl CAlphaFamily {
    pub fn len(&self) -> usize {
        self.alpha_basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha_basis.is_empty()
    }

    /// Index in `alpha_basis` of `β_i + β_j`.
    pub fn sum_index(&self, i: usize, j: usize) -> usize {
        self.sum_index[i][j]
    }

    /// Number of ordered pairs `(β, γ)` with `β + γ = α`.
    pub fn multiplicity(&self, a: usize) -> usize {
        self.multiplicity[a]
    }

    /// 0/1 indicator of `β + γ = α`; these recompose `[x][x]ᵀ` exactly.
    pub fn indicator(&self, a: usize) -> DMatrix<f64> {
        let s = self.row_basis.len();
        DMatrix::from_fn(s, s, |i, j| if self.sum_index[i][j] == a { 1.0 } else { 0.0 })
    }

    /// Indicator divided by the multiplicity, so every `C_α` has unit mass.
    pub fn normalized(&self, a: usize) -> DMatrix<f64> {
        self.indicator(a) / self.multiplicity[a] as f64
    }

    /// `Σ_α x^α C_α` with indicator matrices, which equals `[x][x]ᵀ`.
    pub fn outer_product_at(&self, x: &[f64]) -> DMatrix<f64> {
        let vals = self.alpha_basis.eval(x);
        let s = self.row_basis.len();
        DMatrix::from_fn(s, s, |i, j| vals[self.sum_index[i][j]])
    }

    /// `Σ_α q_α C_α` with normalized matrices, so that
    /// `⟨M_{d1}[w], recompose(q)⟩ = Σ_α q_α w_α`.
    pub fn recompose(&self, q: &[f64]) -> DMatrix<f64> {
        let s = self.row_basis.len();
        DMatrix::from_fn(s, s, |i, j| {
            let a = self.sum_index[i][j];
            q.get(a).copied().unwrap_or(0.0) / self.multiplicity[a] as f64
        })
    }
}

pub fn build_c_alpha(n: usize, d1: usize) -> CAlphaFamily {
    let row_basis = monomial_basis(n, d1);
    let alpha_basis = monomial_basis(n, 2 * d1);
    let s = row_basis.len();
    let mut multiplicity = vec![0; alpha_basis.len()];
    let sum_index: Vec<Vec<usize>> = (0..s)
        .map(|i| {
            (0..s)
                .map(|j| {
                    let e: Exponent = row_basis.exponent_at(i).add(row_basis.exponent_at(j));
                    let a = alpha_basis.index_of(&e).expect("degree at most 2 d1");
                    multiplicity[a] += 1;
                    a
                })
                .collect()
        })
        .collect();
    CAlphaFamily {
        n,
        d1,
        row_basis,
        alpha_basis,
        sum_index,
        multiplicity,
    }
}
