//! Alternating-direction augmented Lagrangian method on the dual
//!
//! ```text
//!   max bᵀy  s.t.  Aᵀy + S = C,  S ∈ K*
//! ```
//!
//! with the primal `X` as multiplier. Each sweep solves for `y` with a
//! cached Cholesky factor of `AAᵀ`, projects onto `K*` and updates `X`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::data::{Data, Point};
use super::{Admm, PrimalDualSolution, SolveStatus};
use crate::error::{Error, Result};

fn gram(data: &Data) -> DMatrix<f64> {
    let m = data.m;
    let width = data.nf + data.nl + data.sides.iter().map(|n| n * n).sum::<usize>();
    let mut a = DMatrix::<f64>::zeros(m, width);
    for r in 0..m {
        for &(i, v) in &data.rows_f[r] {
            a[(r, i)] += v;
        }
        for &(i, v) in &data.rows_l[r] {
            a[(r, data.nf + i)] += v;
        }
    }
    let mut off = data.nf + data.nl;
    for (k, rows) in data.rows_p.iter().enumerate() {
        let n = data.sides[k];
        for (r, ents) in rows {
            for &(i, j, v) in ents {
                a[(*r, off + i * n + j)] += v;
            }
        }
        off += n * n;
    }
    &a * a.transpose()
}

fn project_dual_cone(v: &Point) -> Point {
    Point {
        f: DVector::zeros(v.f.len()),
        l: v.l.map(|x| x.max(0.0)),
        p: v
            .p
            .iter()
            .map(|m| {
                let e = SymmetricEigen::new((m + m.transpose()) * 0.5);
                let d = e.eigenvalues.map(|x| x.max(0.0));
                &e.eigenvectors * DMatrix::from_diagonal(&d) * e.eigenvectors.transpose()
            })
            .collect(),
    }
}

struct Residuals {
    pres: f64,
    dres: f64,
    pobj: f64,
    dobj: f64,
}

fn residuals(data: &Data, x: &Point, y: &DVector<f64>, s: &Point) -> Residuals {
    let pr = (data.a_mul(x) - &data.b).component_div(&data.row_scale);
    let b_orig = data.b.component_div(&data.row_scale);
    let mut dr = data.c.clone();
    dr.axpy(-1.0, &data.at_mul(y));
    dr.axpy(-1.0, s);
    let cs = data.cost_scale;
    Residuals {
        pres: pr.norm() / (1.0 + b_orig.norm()),
        dres: dr.norm() * cs / (1.0 + data.c.norm() * cs),
        pobj: data.c.dot(x) * cs,
        dobj: data.b.dot(y) * cs,
    }
}

pub(crate) fn solve(data: &Data, cfg: &Admm, verbose: bool) -> Result<PrimalDualSolution> {
    let m = data.m;
    let mut g = gram(data);
    let gmax = g.diagonal().amax().max(1.0);
    for i in 0..m {
        g[(i, i)] += 1e-12 * gmax;
    }
    let chol = g
        .cholesky()
        .ok_or_else(|| Error::Solver("equality rows are linearly dependent".into()))?;

    let mut x = data.zero_point();
    let mut s = data.zero_point();
    let mut y = DVector::zeros(m);
    let mut mu = 1.0;
    let mut status = SolveStatus::NumericalFailure;
    let mut iterations = cfg.max_iter;
    let (mut p_acc, mut d_acc) = (0.0, 0.0);

    for it in 0..cfg.max_iter {
        // y-step
        let mut cs = data.c.clone();
        cs.axpy(-1.0, &s);
        let rhs = (&data.b - data.a_mul(&x)) * mu + data.a_mul(&cs);
        y = chol.solve(&rhs);
        // S-step
        let mut v = data.c.clone();
        v.axpy(-1.0, &data.at_mul(&y));
        v.axpy(-mu, &x);
        s = project_dual_cone(&v);
        // X-step
        let mut nx = s.clone();
        nx.axpy(-1.0, &v);
        x = nx.scaled(1.0 / mu);

        if it % 10 == 0 {
            let r = residuals(data, &x, &y, &s);
            let gap = (r.pobj - r.dobj).abs() / (1.0 + r.pobj.abs());
            if verbose && it % 500 == 0 {
                eprintln!(
                    "admm {it:6}: pobj {:+.8e} dobj {:+.8e} pres {:.2e} dres {:.2e} gap {:.2e} mu {:.2e}",
                    r.pobj, r.dobj, r.pres, r.dres, gap, mu
                );
            }
            if r.pres <= cfg.tol && r.dres <= cfg.tol && gap <= cfg.tol {
                status = SolveStatus::Optimal;
                iterations = it;
                break;
            }
            // balance the two residuals by adjusting the penalty
            p_acc += r.pres.max(1e-300).ln();
            d_acc += r.dres.max(1e-300).ln();
            if it % 50 == 0 && it > 0 {
                let ratio = (p_acc - d_acc) / 5.0;
                if ratio > 1.0 {
                    mu = (mu * 1.6).min(1e6);
                } else if ratio < -1.0 {
                    mu = (mu / 1.6).max(1e-6);
                }
                p_acc = 0.0;
                d_acc = 0.0;
            }
        }
    }

    let r = residuals(data, &x, &y, &s);
    Ok(PrimalDualSolution {
        status,
        primal: data.export_primal(&x),
        dual_rows: data.export_dual_rows(&y),
        dual_cones: data.export_slack(&s),
        primal_objective: r.pobj,
        dual_objective: r.dobj,
        gap: (r.pobj - r.dobj).abs(),
        primal_residual: r.pres,
        dual_residual: r.dres,
        iterations,
    })
}
