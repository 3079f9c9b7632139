//! Truncated multi-sequences, moment and localizing matrices, and the flat
//! truncation rank test.
//!
//! Every matrix here is produced from a [`LocalizingPattern`], which lists for
//! each upper-triangular entry `(β, γ)` the tms entries `y_{β+γ+δ}` weighted by
//! the coefficients `g_δ`. The same pattern drives the coefficient-matching
//! rows in `certkit`, so the primal certificate blocks and the dual moment
//! matrices share one index rule.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::polycore::{monomial_basis, Exponent, MonomialBasis, Poly};

/// Default relative threshold for numerical rank decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-6;

/// A truncated multi-sequence `y ∈ R^{N^r_d}` indexed by the graded basis.
#[derive(Clone, Debug)]
pub struct Tms {
    basis: MonomialBasis,
    entries: Vec<f64>,
}

impl Tms {
    pub fn new(r: usize, degree: usize, entries: Vec<f64>) -> Result<Self> {
        let basis = monomial_basis(r, degree);
        if entries.len() != basis.len() {
            return Err(Error::DimensionMismatch {
                expected: basis.len(),
                found: entries.len(),
            });
        }
        Ok(Tms { basis, entries })
    }

    pub fn zeros(r: usize, degree: usize) -> Self {
        let basis = monomial_basis(r, degree);
        let entries = vec![0.0; basis.len()];
        Tms { basis, entries }
    }

    /// Builds a tms from a closure over exponents.
    pub fn from_fn(r: usize, degree: usize, f: impl Fn(&Exponent) -> f64) -> Self {
        let basis = monomial_basis(r, degree);
        let entries = basis.iter().map(f).collect();
        Tms { basis, entries }
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn degree(&self) -> usize {
        self.basis.degree()
    }

    pub fn basis(&self) -> &MonomialBasis {
        &self.basis
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, e: &Exponent) -> Option<f64> {
        self.basis.index_of(e).map(|i| self.entries[i])
    }

    /// The restriction `y|_d`, a prefix under the graded order.
    pub fn truncate(&self, d: usize) -> Result<Tms> {
        if d > self.degree() {
            return Err(Error::DegreeOverflow {
                what: "truncation degree".into(),
                degree: d,
                max: self.degree(),
            });
        }
        let basis = monomial_basis(self.dim(), d);
        let entries = self.entries[..basis.len()].to_vec();
        Ok(Tms { basis, entries })
    }

    pub fn scaled(&self, s: f64) -> Tms {
        Tms {
            basis: self.basis.clone(),
            entries: self.entries.iter().map(|v| v * s).collect(),
        }
    }

    /// `Σ_i w_i y_i` over tms of a common shape.
    pub fn combine(parts: &[(f64, &Tms)]) -> Result<Tms> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidParameter("empty combination".into()))?
            .1;
        let mut entries = vec![0.0; first.len()];
        for (w, y) in parts {
            if y.len() != first.len() || y.dim() != first.dim() {
                return Err(Error::DimensionMismatch {
                    expected: first.len(),
                    found: y.len(),
                });
            }
            for (acc, v) in entries.iter_mut().zip(&y.entries) {
                *acc += w * v;
            }
        }
        Ok(Tms {
            basis: first.basis.clone(),
            entries,
        })
    }
}

/// The Riesz functional `L_y(p) = Σ_α p_α y_α`.
pub fn riesz(y: &Tms, p: &Poly) -> Result<f64> {
    if p.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: y.dim(),
            found: p.dim(),
        });
    }
    p.terms()
        .map(|(e, c)| {
            y.get(e).map(|v| c * v).ok_or_else(|| Error::DegreeOverflow {
                what: format!("monomial {e:?}"),
                degree: e.degree(),
                max: y.degree(),
            })
        })
        .sum()
}

/// Dirac moments `y_α = t^α`.
pub fn tms_of_point(t: &[f64], degree: usize) -> Tms {
    Tms::from_fn(t.len(), degree, |e| e.eval(t))
}

/// Index rule of the localizing matrix `L_g^{(k)}[y]` as a linear map of `y`.
#[derive(Clone, Debug)]
pub struct LocalizingPattern {
    row_basis: MonomialBasis,
    tms_degree: usize,
    /// Upper triangle, row-major: entry `(i, j)` with `i <= j`.
    entries: Vec<Vec<(usize, f64)>>,
}

impl LocalizingPattern {
    /// Pattern for `g` at relaxation order `k`; rows are indexed by
    /// `[ξ]_{k - ⌈deg(g)/2⌉}` and entries reference `N^r_{2k}`.
    pub fn new(g: &Poly, k: usize) -> Result<Self> {
        let dg = g.degree();
        if dg > 2 * k {
            return Err(Error::DegreeOverflow {
                what: "localizing polynomial".into(),
                degree: dg,
                max: 2 * k,
            });
        }
        let r = g.dim();
        let s = k - dg.div_ceil(2);
        let row_basis = monomial_basis(r, s);
        let tms_basis = monomial_basis(r, 2 * k);
        let n = row_basis.len();
        let mut entries = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in i..n {
                let bg = row_basis.exponent_at(i).add(row_basis.exponent_at(j));
                let entry = g
                    .terms()
                    .map(|(d, c)| {
                        let idx = tms_basis
                            .index_of(&bg.add(d))
                            .expect("degree bounded by 2k");
                        (idx, c)
                    })
                    .collect();
                entries.push(entry);
            }
        }
        Ok(LocalizingPattern {
            row_basis,
            tms_degree: 2 * k,
            entries,
        })
    }

    pub fn side(&self) -> usize {
        self.row_basis.len()
    }

    pub fn row_basis(&self) -> &MonomialBasis {
        &self.row_basis
    }

    pub fn tms_degree(&self) -> usize {
        self.tms_degree
    }

    fn offset(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        let n = self.side();
        i * n - i * (i + 1) / 2 + j
    }

    /// Linear functional of entry `(i, j)`: pairs `(tms index, weight)`.
    pub fn entry(&self, i: usize, j: usize) -> &[(usize, f64)] {
        &self.entries[self.offset(i, j)]
    }

    /// Iterates `(i, j, functional)` over the upper triangle.
    pub fn upper(&self) -> impl Iterator<Item = (usize, usize, &[(usize, f64)])> {
        let n = self.side();
        (0..n)
            .flat_map(move |i| (i..n).map(move |j| (i, j)))
            .map(move |(i, j)| (i, j, self.entry(i, j)))
    }

    pub fn evaluate(&self, y: &Tms) -> Result<DMatrix<f64>> {
        if y.degree() < self.tms_degree {
            return Err(Error::DegreeOverflow {
                what: "localizing matrix order".into(),
                degree: self.tms_degree,
                max: y.degree(),
            });
        }
        let n = self.side();
        let mut m = DMatrix::zeros(n, n);
        for (i, j, f) in self.upper() {
            let v: f64 = f.iter().map(|(idx, c)| c * y.entries[*idx]).sum();
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
        Ok(m)
    }
}

/// `L_g^{(k)}[y]`, entry `(α, β) = L_y(g ξ^α ξ^β)`.
pub fn localizing_matrix(g: &Poly, y: &Tms, k: usize) -> Result<DMatrix<f64>> {
    if g.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: y.dim(),
            found: g.dim(),
        });
    }
    LocalizingPattern::new(g, k)?.evaluate(y)
}

/// `M_k[y] = L_1^{(k)}[y]`.
pub fn moment_matrix(y: &Tms, k: usize) -> Result<DMatrix<f64>> {
    localizing_matrix(&Poly::constant(y.dim(), 1.0), y, k)
}

/// Number of singular values above `rank_tol · σ_max · side`.
pub fn numeric_rank(m: &DMatrix<f64>, rank_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().singular_values();
    let smax = sv.max();
    if smax <= 0.0 {
        return 0;
    }
    let cut = rank_tol * smax * m.nrows() as f64;
    sv.iter().filter(|&&s| s > cut).count()
}

/// Smallest `t ∈ [k0, k]` with `rank M_t[z] = rank M_{t-1}[z]`.
pub fn flat_truncation(z: &Tms, k: usize, k0: usize, rank_tol: f64) -> Option<usize> {
    let k0 = k0.max(1);
    if k < k0 || z.degree() < 2 * k {
        return None;
    }
    let mut prev = numeric_rank(&moment_matrix(z, k0 - 1).ok()?, rank_tol);
    for t in k0..=k {
        let cur = numeric_rank(&moment_matrix(z, t).ok()?, rank_tol);
        if cur == prev {
            return Some(t);
        }
        prev = cur;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;
    use proptest::prelude::*;

    fn e(v: &[u32]) -> Exponent {
        Exponent::new(v.to_vec())
    }

    #[test]
    fn riesz_examples() {
        let y = Tms::from_fn(2, 2, |x| if x == &e(&[1, 1]) { 7.0 } else { 0.0 });
        let p = Poly::from_terms(2, [(e(&[1, 1]), 1.0)]).unwrap();
        assert_eq!(riesz(&y, &p).unwrap(), 7.0);

        let dirac = tms_of_point(&[2.0], 4);
        let cube = Poly::from_terms(1, [(e(&[3]), 1.0)]).unwrap();
        assert_eq!(riesz(&dirac, &cube).unwrap(), 8.0);

        let too_high = Poly::from_terms(1, [(e(&[5]), 1.0)]).unwrap();
        assert!(matches!(
            riesz(&dirac, &too_high),
            Err(Error::DegreeOverflow { .. })
        ));
    }

    #[test]
    fn localizing_matrix_of_disk() {
        // g = 2 - ξ1² - ξ2² with y_α = 100 a + 10 b + 1 encoded per exponent, so
        // the value identifies which entries were combined.
        let g = Poly::from_terms(
            2,
            [(e(&[0, 0]), 2.0), (e(&[2, 0]), -1.0), (e(&[0, 2]), -1.0)],
        )
        .unwrap();
        let code = |x: &Exponent| 1000.0 + 10.0 * x.powers()[0] as f64 + x.powers()[1] as f64;
        let y = Tms::from_fn(2, 4, code);
        let l = localizing_matrix(&g, &y, 2).unwrap();
        assert_eq!(l.nrows(), 3);
        let v = |a: u32, b: u32| code(&e(&[a, b]));
        assert_eq!(l[(0, 0)], 2.0 * v(0, 0) - v(2, 0) - v(0, 2));
        assert_eq!(l[(1, 2)], 2.0 * v(1, 1) - v(3, 1) - v(1, 3));
        assert_eq!(l[(2, 1)], l[(1, 2)]);
    }

    #[test]
    fn unit_localizer_is_moment_matrix() {
        let y = Tms::from_fn(2, 4, |x| x.degree() as f64 + 0.5 * x.powers()[0] as f64);
        let one = Poly::constant(2, 1.0);
        assert_eq!(
            localizing_matrix(&one, &y, 2).unwrap(),
            moment_matrix(&y, 2).unwrap()
        );
    }

    #[test]
    fn dirac_localizer_is_outer_product() {
        let t = [0.4, -1.3];
        let g = Poly::from_terms(
            2,
            [(e(&[0, 0]), 3.0), (e(&[2, 0]), -1.0), (e(&[1, 1]), 0.5)],
        )
        .unwrap();
        let y = tms_of_point(&t, 4);
        let l = localizing_matrix(&g, &y, 2).unwrap();
        let v = monomial_basis(2, 1).eval(&t);
        let gt = g.eval(&t).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = gt * v[i] * v[j];
                assert!((l[(i, j)] - want).abs() < 1e-12);
            }
        }
        assert!(numeric_rank(&l, DEFAULT_RANK_TOL) <= 1);
    }

    #[test]
    fn localizing_degree_overflow() {
        let g = Poly::from_terms(1, [(e(&[5]), 1.0)]).unwrap();
        let y = Tms::zeros(1, 4);
        assert!(localizing_matrix(&g, &y, 2).is_err());
    }

    #[test]
    fn tms_of_point_examples() {
        let y = tms_of_point(&[0.0, 0.0], 4);
        assert_eq!(y.entries()[0], 1.0);
        assert!(y.entries()[1..].iter().all(|&v| v == 0.0));
        let ones = tms_of_point(&[1.0, 1.0], 2);
        assert!(ones.entries().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn flat_truncation_examples() {
        let dirac = tms_of_point(&[0.3, -0.8], 6);
        assert_eq!(flat_truncation(&dirac, 3, 2, DEFAULT_RANK_TOL), Some(2));

        let zero = Tms::zeros(2, 4);
        assert_eq!(flat_truncation(&zero, 2, 1, DEFAULT_RANK_TOL), Some(1));

        // ½δ_{-1} + ½δ_{1}: moments 1, 0, 1, 0, 1
        let two_atoms = Tms::combine(&[
            (0.5, &tms_of_point(&[-1.0], 4)),
            (0.5, &tms_of_point(&[1.0], 4)),
        ])
        .unwrap();
        assert_eq!(two_atoms.entries(), &[1.0, 0.0, 1.0, 0.0, 1.0]);
        let m1 = moment_matrix(&two_atoms, 1).unwrap();
        let m2 = moment_matrix(&two_atoms, 2).unwrap();
        assert_eq!(numeric_rank(&m1, DEFAULT_RANK_TOL), 2);
        assert_eq!(numeric_rank(&m2, DEFAULT_RANK_TOL), 2);
        assert_eq!(flat_truncation(&two_atoms, 2, 2, DEFAULT_RANK_TOL), Some(2));
        // at t = 1 the ranks are 2 vs 1, so starting from k0 = 1 skips to t = 2
        assert_eq!(flat_truncation(&two_atoms, 2, 1, DEFAULT_RANK_TOL), Some(2));
    }

    #[test]
    fn truncation_is_prefix() {
        let y = Tms::from_fn(3, 4, |x| x.degree() as f64);
        let y2 = y.truncate(2).unwrap();
        assert_eq!(y2.len(), 10);
        assert_eq!(y2.entries(), &y.entries()[..10]);
    }

    fn dirac_mixture(
        r: usize,
        deg: usize,
    ) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>, Tms)> {
        prop::collection::vec(
            (prop::collection::vec(-1.0f64..1.0, r), 0.1f64..1.0),
            1..4,
        )
        .prop_map(move |atoms| {
            let total: f64 = atoms.iter().map(|(_, w)| w).sum();
            let pts: Vec<Vec<f64>> = atoms.iter().map(|(p, _)| p.clone()).collect();
            let ws: Vec<f64> = atoms.iter().map(|(_, w)| w / total).collect();
            let tms: Vec<Tms> = pts.iter().map(|p| tms_of_point(p, deg)).collect();
            let parts: Vec<(f64, &Tms)> = ws.iter().copied().zip(tms.iter()).collect();
            let y = Tms::combine(&parts).unwrap();
            (pts, ws, y)
        })
    }

    proptest! {
        #[test]
        fn riesz_is_linear(
            cp in prop::collection::vec(-2.0f64..2.0, 10),
            cq in prop::collection::vec(-2.0f64..2.0, 10),
            ys in prop::collection::vec(-2.0f64..2.0, 10),
        ) {
            let b2 = monomial_basis(2, 3);
            let p = Poly::from_coeffs(&b2, &cp).unwrap();
            let q = Poly::from_coeffs(&b2, &cq).unwrap();
            let y = Tms::new(2, 3, ys).unwrap();
            let lhs = riesz(&y, &(&p + &q)).unwrap();
            let rhs = riesz(&y, &p).unwrap() + riesz(&y, &q).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }

        #[test]
        fn dirac_moments_evaluate_polynomials(
            t in prop::collection::vec(-1.5f64..1.5, 2),
            c in prop::collection::vec(-2.0f64..2.0, 15),
        ) {
            let p = Poly::from_coeffs(&monomial_basis(2, 4), &c).unwrap();
            let y = tms_of_point(&t, 4);
            let lhs = riesz(&y, &p).unwrap();
            let rhs = p.eval(&t).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12 * (1.0 + rhs.abs()));
        }

        #[test]
        fn localizing_matrix_symmetric_and_linear(
            ya in prop::collection::vec(-2.0f64..2.0, 15),
            yb in prop::collection::vec(-2.0f64..2.0, 15),
            gc in prop::collection::vec(-2.0f64..2.0, 6),
            s in -3.0f64..3.0,
        ) {
            let g = Poly::from_coeffs(&monomial_basis(2, 2), &gc).unwrap();
            let a = Tms::new(2, 4, ya).unwrap();
            let b = Tms::new(2, 4, yb).unwrap();
            let la = localizing_matrix(&g, &a, 2).unwrap();
            let lb = localizing_matrix(&g, &b, 2).unwrap();
            prop_assert_eq!(la.clone(), la.transpose());
            let comb = Tms::combine(&[(1.0, &a), (s, &b)]).unwrap();
            let lc = localizing_matrix(&g, &comb, 2).unwrap();
            let diff = (&lc - (&la + lb * s)).amax();
            prop_assert!(diff < 1e-12);
        }

        #[test]
        fn dirac_mixture_moment_matrix_is_psd((_, _, y) in dirac_mixture(2, 6)) {
            let m = moment_matrix(&y, 3).unwrap();
            let ev = SymmetricEigen::new(m).eigenvalues;
            prop_assert!(ev.min() >= -1e-10);
        }

        #[test]
        fn flatness_survives_larger_tolerance(
            (_, _, y) in dirac_mixture(1, 8),
            lo in -9.0f64..-7.0,
            hi in -7.0f64..-5.0,
        ) {
            let small = 10f64.powf(lo);
            let large = 10f64.powf(hi);
            if flat_truncation(&y, 4, 3, small).is_some() {
                prop_assert!(flat_truncation(&y, 4, 3, large).is_some());
            }
        }
    }
}
