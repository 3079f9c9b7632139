//! Sparse multivariate polynomials over `f64` with a graded monomial basis.
//!
//! Monomials are ordered graded-lexicographically with `ξ1 ≻ ξ2 ≻ … ≻ ξr`, so
//! the degree-2 block in two variables reads `ξ1², ξ1ξ2, ξ2²`. This order is
//! the coefficient-vector contract used everywhere else in the crate.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponent vector `α ∈ N^r` of the monomial `ξ^α`.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Exponent(Vec<u32>);

impl Exponent {
    pub fn new(powers: Vec<u32>) -> Self {
        Exponent(powers)
    }

    pub fn zero(r: usize) -> Self {
        Exponent(vec![0; r])
    }

    /// The unit exponent `e_i` (monomial `ξ_i`).
    pub fn unit(r: usize, i: usize) -> Self {
        let mut e = vec![0; r];
        e[i] = 1;
        Exponent(e)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> usize {
        self.0.iter().map(|&a| a as usize).sum()
    }

    pub fn powers(&self) -> &[u32] {
        &self.0
    }

    /// Exponent of the product `ξ^α · ξ^β`.
    pub fn add(&self, other: &Exponent) -> Exponent {
        debug_assert_eq!(self.dim(), other.dim());
        Exponent(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// `α - β` when `β ≤ α` componentwise.
    pub fn checked_sub(&self, other: &Exponent) -> Option<Exponent> {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.checked_sub(*b))
            .collect::<Option<Vec<_>>>()
            .map(Exponent)
    }

    /// Evaluates `t^α`.
    pub fn eval(&self, t: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(t)
            .filter(|(a, _)| **a > 0)
            .map(|(&a, &v)| v.powi(a as i32))
            .product()
    }
}

impl Ord for Exponent {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            // higher power of the leading variable comes first within a degree
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for Exponent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

/// Number of monomials of degree at most `d` in `r` variables, `C(r+d, d)`.
pub fn basis_len(r: usize, d: usize) -> usize {
    let mut num: u128 = 1;
    for i in 1..=d as u128 {
        num = num * (r as u128 + i) / i;
    }
    num as usize
}

/// All exponents of exact degree `d` in `r` variables, leading variable first.
fn exponents_of_degree(r: usize, d: u32) -> Vec<Exponent> {
    fn fill(pos: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Exponent>) {
        if pos + 1 == cur.len() {
            cur[pos] = left;
            out.push(Exponent(cur.clone()));
            return;
        }
        for a in (0..=left).rev() {
            cur[pos] = a;
            fill(pos + 1, left - a, cur, out);
        }
    }
    let mut out = Vec::new();
    fill(0, d, &mut vec![0; r], &mut out);
    out
}

/// The graded basis `[ξ]_d` of `N^r_d`.
#[derive(Clone, Debug)]
pub struct MonomialBasis {
    r: usize,
    d: usize,
    order: Vec<Exponent>,
    index: HashMap<Exponent, usize>,
}

impl MonomialBasis {
    pub fn new(r: usize, d: usize) -> Self {
        assert!(r >= 1, "monomial basis needs at least one variable");
        let order: Vec<Exponent> = (0..=d as u32)
            .flat_map(|t| exponents_of_degree(r, t))
            .collect();
        let index = order
            .iter()
            .enumerate()
            .map(|(i, e)| (e.clone(), i))
            .collect();
        MonomialBasis { r, d, order, index }
    }

    pub fn dim(&self) -> usize {
        self.r
    }

    pub fn degree(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn exponent_at(&self, i: usize) -> &Exponent {
        &self.order[i]
    }

    pub fn index_of(&self, e: &Exponent) -> Option<usize> {
        self.index.get(e).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Exponent> {
        self.order.iter()
    }

    /// Evaluates every basis monomial at `t`, i.e. the vector `[t]_d`.
    pub fn eval(&self, t: &[f64]) -> Vec<f64> {
        self.order.iter().map(|e| e.eval(t)).collect()
    }
}

pub fn monomial_basis(r: usize, d: usize) -> MonomialBasis {
    MonomialBasis::new(r, d)
}

/// A sparse polynomial in `r` variables.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Poly {
    r: usize,
    terms: BTreeMap<Exponent, f64>,
}

impl Poly {
    pub fn zero(r: usize) -> Self {
        Poly {
            r,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(r: usize, c: f64) -> Self {
        Poly::from_terms(r, [(Exponent::zero(r), c)]).expect("dimension is consistent")
    }

    /// The coordinate polynomial `ξ_i`.
    pub fn var(r: usize, i: usize) -> Self {
        Poly::from_terms(r, [(Exponent::unit(r, i), 1.0)]).expect("dimension is consistent")
    }

    /// Builds a polynomial from `(exponent, coefficient)` pairs; repeated
    /// exponents are summed and zero coefficients dropped.
    pub fn from_terms<I>(r: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Exponent, f64)>,
    {
        let mut p = Poly::zero(r);
        for (e, c) in terms {
            if e.dim() != r {
                return Err(Error::DimensionMismatch {
                    expected: r,
                    found: e.dim(),
                });
            }
            p.add_term(e, c);
        }
        Ok(p)
    }

    /// Reads coefficients laid out along `basis`.
    pub fn from_coeffs(basis: &MonomialBasis, coeffs: &[f64]) -> Result<Self> {
        if coeffs.len() != basis.len() {
            return Err(Error::DimensionMismatch {
                expected: basis.len(),
                found: coeffs.len(),
            });
        }
        Poly::from_terms(basis.dim(), basis.iter().cloned().zip(coeffs.iter().copied()))
    }

    fn add_term(&mut self, e: Exponent, c: f64) {
        if c == 0.0 {
            return;
        }
        let v = self.terms.get(&e).copied().unwrap_or(0.0) + c;
        if v == 0.0 {
            self.terms.remove(&e);
        } else {
            self.terms.insert(e, v);
        }
    }

    pub fn dim(&self) -> usize {
        self.r
    }

    /// Total degree; the zero polynomial has degree 0.
    pub fn degree(&self) -> usize {
        self.terms.keys().map(Exponent::degree).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, e: &Exponent) -> f64 {
        self.terms.get(e).copied().unwrap_or(0.0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponent, f64)> {
        self.terms.iter().map(|(e, c)| (e, *c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn eval(&self, point: &[f64]) -> Result<f64> {
        if point.len() != self.r {
            return Err(Error::DimensionMismatch {
                expected: self.r,
                found: point.len(),
            });
        }
        Ok(self.terms.iter().map(|(e, c)| c * e.eval(point)).sum())
    }

    /// Coefficients laid out along `basis`.
    pub fn coeffs_in(&self, basis: &MonomialBasis) -> Result<Vec<f64>> {
        if basis.dim() != self.r {
            return Err(Error::DimensionMismatch {
                expected: basis.dim(),
                found: self.r,
            });
        }
        let mut out = vec![0.0; basis.len()];
        for (e, c) in &self.terms {
            let i = basis.index_of(e).ok_or_else(|| Error::DegreeOverflow {
                what: format!("monomial {e:?}"),
                degree: e.degree(),
                max: basis.degree(),
            })?;
            out[i] = *c;
        }
        Ok(out)
    }

    fn check_dim(&self, other: &Poly) -> Result<()> {
        if self.r != other.r {
            return Err(Error::DimensionMismatch {
                expected: self.r,
                found: other.r,
            });
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Poly) -> Result<Poly> {
        self.check_dim(other)?;
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), *c);
        }
        Ok(out)
    }

    pub fn try_mul(&self, other: &Poly) -> Result<Poly> {
        self.check_dim(other)?;
        let mut acc: BTreeMap<Exponent, f64> = BTreeMap::new();
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                *acc.entry(ea.add(eb)).or_insert(0.0) += ca * cb;
            }
        }
        acc.retain(|_, c| *c != 0.0);
        Ok(Poly {
            r: self.r,
            terms: acc,
        })
    }

    pub fn scale(&self, s: f64) -> Poly {
        if s == 0.0 {
            return Poly::zero(self.r);
        }
        Poly {
            r: self.r,
            terms: self.terms.iter().map(|(e, c)| (e.clone(), c * s)).collect(),
        }
    }

    /// Substitutes `ξ = shift + M η`, returning a polynomial in `η`.
    ///
    /// `matrix` is `r × s` in row-major order where `s` is the new dimension.
    pub fn affine_substitute(&self, shift: &[f64], matrix: &[Vec<f64>]) -> Result<Poly> {
        if shift.len() != self.r || matrix.len() != self.r {
            return Err(Error::DimensionMismatch {
                expected: self.r,
                found: shift.len(),
            });
        }
        let s = matrix.first().map_or(0, Vec::len);
        let images: Vec<Poly> = (0..self.r)
            .map(|i| {
                let mut terms = vec![(Exponent::zero(s), shift[i])];
                terms.extend((0..s).map(|j| (Exponent::unit(s, j), matrix[i][j])));
                Poly::from_terms(s, terms)
            })
            .collect::<Result<_>>()?;
        let mut out = Poly::zero(s);
        for (e, c) in &self.terms {
            let mut term = Poly::constant(s, *c);
            for (i, &a) in e.powers().iter().enumerate() {
                for _ in 0..a {
                    term = term.try_mul(&images[i])?;
                }
            }
            out = out.try_add(&term)?;
        }
        Ok(out)
    }
}

impl fmt::Debug for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(e, c)| format!("{c}*{e:?}"))
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        self.try_add(rhs).expect("polynomial dimensions differ")
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        self.try_add(&rhs.scale(-1.0))
            .expect("polynomial dimensions differ")
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        self.try_mul(rhs).expect("polynomial dimensions differ")
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        self.scale(-1.0)
    }
}

/// Arithmetic selector for [`poly_arith`].
#[derive(Clone, Copy, Debug)]
pub enum PolyOp {
    Add,
    Mul,
    /// Scale the first operand by the constant term of the second.
    Scale,
}

pub fn poly_arith(p: &Poly, q: &Poly, op: PolyOp) -> Result<Poly> {
    match op {
        PolyOp::Add => p.try_add(q),
        PolyOp::Mul => p.try_mul(q),
        PolyOp::Scale => {
            p.check_dim(q)?;
            Ok(p.scale(q.coeff(&Exponent::zero(q.dim()))))
        }
    }
}

pub fn poly_eval(p: &Poly, point: &[f64]) -> Result<f64> {
    p.eval(point)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn e(v: &[u32]) -> Exponent {
        Exponent::new(v.to_vec())
    }

    #[test]
    fn basis_r2_d2_order() {
        let b = monomial_basis(2, 2);
        let got: Vec<Vec<u32>> = b.iter().map(|x| x.powers().to_vec()).collect();
        assert_eq!(
            got,
            vec![
                vec![0, 0],
                vec![1, 0],
                vec![0, 1],
                vec![2, 0],
                vec![1, 1],
                vec![0, 2]
            ]
        );
    }

    #[test]
    fn basis_degree_zero_is_constant() {
        let b = monomial_basis(3, 0);
        assert_eq!(b.len(), 1);
        assert_eq!(b.exponent_at(0), &Exponent::zero(3));
    }

    #[test]
    fn basis_count_matches_enumeration() {
        // brute force: count all tuples in [0,4]^3 with sum <= 4
        let mut count = 0;
        for a in 0..=4 {
            for b in 0..=4 {
                for c in 0..=4 {
                    if a + b + c <= 4 {
                        count += 1;
                    }
                }
            }
        }
        assert_eq!(count, 35);
        assert_eq!(monomial_basis(3, 4).len(), count);
        assert_eq!(basis_len(3, 4), count);
    }

    #[test]
    fn basis_is_sorted_by_exponent_order() {
        let b = monomial_basis(3, 4);
        for w in b.order.windows(2) {
            assert!(w[0] < w[1]);
        }
    }

    #[test]
    fn eval_examples() {
        let p = Poly::from_terms(
            2,
            [(e(&[0, 0]), 1.0), (e(&[2, 0]), -1.0), (e(&[0, 2]), -1.0)],
        )
        .unwrap();
        assert_eq!(p.eval(&[0.0, 0.0]).unwrap(), 1.0);
        let q = Poly::from_terms(2, [(e(&[1, 1]), 1.0)]).unwrap();
        assert_eq!(poly_eval(&q, &[2.0, 3.0]).unwrap(), 6.0);
        assert!(matches!(
            q.eval(&[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn quadratic_form_vanishes_at_center() {
        // (ξ-μ)^T Λ^{-1} (ξ-μ) with the empirical μ, Λ of the two-dimensional example
        let mu = [0.0676, 0.0132];
        let (a, b, d) = (0.9887, -0.0057, 0.9848);
        let det = a * d - b * b;
        let inv = [[d / det, -b / det], [-b / det, a / det]];
        let shifted: Vec<Poly> = (0..2)
            .map(|i| &Poly::var(2, i) - &Poly::constant(2, mu[i]))
            .collect();
        let mut quad = Poly::zero(2);
        for i in 0..2 {
            for j in 0..2 {
                quad = &quad + &(&shifted[i] * &shifted[j]).scale(inv[i][j]);
            }
        }
        assert!(quad.eval(&mu).unwrap().abs() < 1e-15);
    }

    #[test]
    fn arith_examples() {
        let x = Poly::var(1, 0);
        assert!(poly_arith(&x, &x.scale(-1.0), PolyOp::Add).unwrap().is_zero());
        let one_minus = &Poly::constant(1, 1.0) - &(&x * &x);
        let prod = poly_arith(&one_minus, &(&x * &x), PolyOp::Mul).unwrap();
        let expect = Poly::from_terms(1, [(e(&[2]), 1.0), (e(&[4]), -1.0)]).unwrap();
        assert_eq!(prod, expect);
        let scaled = poly_arith(&x, &Poly::constant(1, 3.0), PolyOp::Scale).unwrap();
        assert_eq!(scaled.coeff(&e(&[1])), 3.0);
        assert!(poly_arith(&x, &Poly::var(2, 0), PolyOp::Add).is_err());
    }

    #[test]
    fn zero_polynomial_has_degree_zero() {
        assert_eq!(Poly::zero(3).degree(), 0);
    }

    #[test]
    fn coefficient_vector_roundtrip() {
        let b = monomial_basis(2, 3);
        let coeffs: Vec<f64> = (0..b.len()).map(|i| i as f64 - 3.0).collect();
        let p = Poly::from_coeffs(&b, &coeffs).unwrap();
        assert_eq!(p.coeffs_in(&b).unwrap(), coeffs);
        let small = monomial_basis(2, 1);
        assert!(matches!(
            p.coeffs_in(&small),
            Err(Error::DegreeOverflow { .. })
        ));
    }

    #[test]
    fn affine_substitution_matches_evaluation() {
        let p = Poly::from_terms(
            2,
            [(e(&[2, 1]), 2.0), (e(&[0, 3]), -1.0), (e(&[1, 0]), 0.5)],
        )
        .unwrap();
        let shift = [0.3, -1.2];
        let m = vec![vec![2.0, 0.1], vec![-0.4, 1.5]];
        let q = p.affine_substitute(&shift, &m).unwrap();
        let eta = [0.7, -0.2];
        let xi = [
            shift[0] + m[0][0] * eta[0] + m[0][1] * eta[1],
            shift[1] + m[1][0] * eta[0] + m[1][1] * eta[1],
        ];
        let lhs = q.eval(&eta).unwrap();
        let rhs = p.eval(&xi).unwrap();
        assert!((lhs - rhs).abs() < 1e-12 * (1.0 + rhs.abs()));
    }

    fn sparse_poly(r: usize, maxdeg: u32) -> impl Strategy<Value = Poly> {
        prop::collection::vec(
            (prop::collection::vec(0..=maxdeg, r), -3.0f64..3.0),
            1..6,
        )
        .prop_map(move |terms| {
            let terms = terms
                .into_iter()
                .filter(|(a, _)| a.iter().sum::<u32>() <= maxdeg)
                .map(|(a, c)| (Exponent::new(a), c));
            Poly::from_terms(r, terms).unwrap()
        })
    }

    proptest! {
        #[test]
        fn index_roundtrip(r in 1usize..4, d in 0usize..5) {
            let b = monomial_basis(r, d);
            prop_assert_eq!(b.len(), basis_len(r, d));
            for i in 0..b.len() {
                prop_assert_eq!(b.index_of(b.exponent_at(i)), Some(i));
            }
        }

        #[test]
        fn product_matches_evaluation(
            p in sparse_poly(3, 3),
            q in sparse_poly(3, 3),
            pts in prop::collection::vec(prop::collection::vec(-1.5f64..1.5, 3), 20),
        ) {
            let pq = &p * &q;
            if !p.is_zero() && !q.is_zero() {
                prop_assert_eq!(pq.degree(), p.degree() + q.degree());
            }
            for t in &pts {
                let lhs = pq.eval(t).unwrap();
                let rhs = p.eval(t).unwrap() * q.eval(t).unwrap();
                prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
            }
        }
    }
}
