//! Dense primal-dual interior-point method on the homogeneous self-dual
//! embedding
//!
//! ```text
//!   A x - b τ = 0,   c τ - Aᵀ y - s = 0,   bᵀ y - cᵀ x - κ = 0,
//!   x ∈ K, s ∈ K*, τ, κ ≥ 0,
//! ```
//!
//! with Nesterov-Todd scaling and a Mehrotra predictor-corrector. Free
//! coordinates have a zero dual slack and are kept in an augmented normal
//! system instead of being split.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::data::{Data, Point};
use super::{PrimalDualSolution, SolveStatus, SolverOptions};
use crate::error::{Error, Result};

/// NT scaling of one PSD block: `W = G Gᵀ` with `G⁻¹ X G⁻ᵀ = Gᵀ S G = diag(λ)`.
struct PsdScaling {
    g: DMatrix<f64>,
    ginv: DMatrix<f64>,
    w: DMatrix<f64>,
    lambda: DVector<f64>,
}

fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let floor = 1e-300;
    let d = eig.eigenvalues.map(|v| v.max(floor).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

fn psd_scaling(x: &DMatrix<f64>, s: &DMatrix<f64>) -> PsdScaling {
    let lx = sym_sqrt(x);
    let ls = sym_sqrt(s);
    let svd = (ls.transpose() * &lx).svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested Vᵀ");
    let d = svd.singular_values.map(|v| v.max(1e-300));
    let dm12 = d.map(|v| 1.0 / v.sqrt());
    let g = &lx * vt.transpose() * DMatrix::from_diagonal(&dm12);
    let ginv = DMatrix::from_diagonal(&dm12) * u.transpose() * ls.transpose();
    let w = &g * g.transpose();
    PsdScaling {
        g,
        ginv,
        w,
        lambda: d,
    }
}

/// Largest `α` with `Diag(λ) + α D ⪰ 0` (capped at `f64::MAX`).
fn psd_step(lambda: &DVector<f64>, d: &DMatrix<f64>) -> f64 {
    let n = lambda.len();
    let inv = lambda.map(|v| 1.0 / v.sqrt());
    let mut m = d.clone();
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] *= inv[i] * inv[j];
        }
    }
    let m = (&m + m.transpose()) * 0.5;
    let min = SymmetricEigen::new(m).eigenvalues.min();
    if min < 0.0 {
        -1.0 / min
    } else {
        f64::MAX
    }
}

fn vec_step(x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    x.iter()
        .zip(dx.iter())
        .filter(|(_, d)| **d < 0.0)
        .map(|(v, d)| -v / d)
        .fold(f64::MAX, f64::min)
}

fn jordan(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    (a * b + b * a) * 0.5
}

struct Scalings {
    /// `x / s` for the nonnegative block (`H⁻¹`).
    l_ratio: DVector<f64>,
    /// `sqrt(x / s)`.
    l_w: DVector<f64>,
    l_lambda: DVector<f64>,
    psd: Vec<PsdScaling>,
}

/// Complementarity targets in scaled space: `λ ∘ (dx̃ + ds̃) = target`.
struct Targets {
    l: DVector<f64>,
    p: Vec<DMatrix<f64>>,
    tau_kappa: f64,
}

struct Direction {
    x: Point,
    s: Point,
    y: DVector<f64>,
    tau: f64,
    kappa: f64,
}

struct Kkt {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    mat: DMatrix<f64>,
}

impl Kkt {
    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let mut x = self.lu.solve(rhs).unwrap_or_else(|| DVector::zeros(rhs.len()));
        let scale = rhs.amax().max(f64::MIN_POSITIVE);
        for _ in 0..5 {
            let res = rhs - &self.mat * &x;
            if res.amax() <= 1e-15 * scale {
                break;
            }
            match self.lu.solve(&res) {
                Some(dx) => x += dx,
                None => break,
            }
        }
        x
    }
}

struct State {
    x: Point,
    s: Point,
    y: DVector<f64>,
    tau: f64,
    kappa: f64,
}

struct Metrics {
    pres: f64,
    dres: f64,
    pobj: f64,
    dobj: f64,
    rel_gap: f64,
    pinf: Option<f64>,
    dinf: Option<f64>,
}

pub(crate) fn solve(data: &Data, opts: &SolverOptions) -> Result<PrimalDualSolution> {
    let nu = data.degree() as f64;
    let mut st = State {
        x: data.unit_point(),
        s: data.unit_point(),
        y: DVector::zeros(data.m),
        tau: 1.0,
        kappa: 1.0,
    };
    st.s.f.fill(0.0);

    let cnorm = data.c.norm();

    let mut best: Option<(f64, State, Metrics)> = None;
    let mut stall = 0usize;
    let mut status = SolveStatus::NumericalFailure;
    let mut iterations = 0;

    for it in 0..opts.max_iter {
        iterations = it;
        let rp = data.a_mul(&st.x) - &data.b * st.tau;
        let mut rd = data.c.scaled(st.tau);
        rd.axpy(-1.0, &data.at_mul(&st.y));
        rd.axpy(-1.0, &st.s);
        let rg = data.c.dot(&st.x) - data.b.dot(&st.y) + st.kappa;
        let mu = (st.x.dot_cone(&st.s) + st.tau * st.kappa) / (nu + 1.0);

        let m = metrics(data, &st, cnorm);
        if opts.verbose {
            eprintln!(
                "ipm {it:3}: pobj {:+.8e} dobj {:+.8e} pres {:.2e} dres {:.2e} gap {:.2e} tau {:.2e} kappa {:.2e} mu {:.2e}",
                m.pobj, m.dobj, m.pres, m.dres, m.rel_gap, st.tau, st.kappa, mu
            );
        }
        if m.pres <= opts.feas_tol && m.dres <= opts.feas_tol && m.rel_gap <= opts.gap_tol {
            status = SolveStatus::Optimal;
            best = Some((0.0, st, m));
            break;
        }
        if let Some(p) = m.pinf {
            if p <= opts.feas_tol {
                status = SolveStatus::PrimalInfeasible;
                best = Some((0.0, st, m));
                break;
            }
        }
        if let Some(d) = m.dinf {
            if d <= opts.feas_tol {
                status = SolveStatus::DualInfeasible;
                best = Some((0.0, st, m));
                break;
            }
        }
        let merit = m.pres.max(m.dres).max(m.rel_gap);
        let improved = best.as_ref().is_none_or(|(b, _, _)| merit < *b);
        if improved {
            best = Some((
                merit,
                State {
                    x: st.x.clone(),
                    s: st.s.clone(),
                    y: st.y.clone(),
                    tau: st.tau,
                    kappa: st.kappa,
                },
                m,
            ));
        }

        let sc = scalings(&st);
        let kkt = match factor(data, &sc) {
            Some(k) => k,
            None => break,
        };

        // predictor
        let aff_targets = Targets {
            l: -sc.l_lambda.map(|v| v * v),
            p: sc
                .psd
                .iter()
                .map(|p| -DMatrix::from_diagonal(&p.lambda.map(|v| v * v)))
                .collect(),
            tau_kappa: -st.tau * st.kappa,
        };
        let aff = newton(data, &st, &sc, &kkt, &rp, &rd, rg, 1.0, &aff_targets);
        let alpha_aff = max_step(&st, &sc, &aff);
        let sigma = (1.0 - alpha_aff.min(1.0)).powi(3).clamp(0.0, 1.0);

        // corrector
        let (dxl, dsl) = scaled_l(&sc, &aff);
        let (dxp, dsp) = scaled_p(&sc, &aff);
        let targets = Targets {
            l: sc
                .l_lambda
                .map(|v| sigma * mu - v * v)
                - dxl.component_mul(&dsl),
            p: sc
                .psd
                .iter()
                .enumerate()
                .map(|(k, p)| {
                    let n = p.lambda.len();
                    DMatrix::identity(n, n) * (sigma * mu)
                        - DMatrix::from_diagonal(&p.lambda.map(|v| v * v))
                        - jordan(&dxp[k], &dsp[k])
                })
                .collect(),
            tau_kappa: sigma * mu - st.tau * st.kappa - aff.tau * aff.kappa,
        };
        let dir = newton(data, &st, &sc, &kkt, &rp, &rd, rg, 1.0 - sigma, &targets);
        let alpha_max = max_step(&st, &sc, &dir);
        let alpha = (0.99 * alpha_max).min(1.0);
        if !alpha.is_finite() || alpha < 1e-10 {
            stall += 1;
            if stall > 3 {
                break;
            }
            continue;
        }

        st.x.axpy(alpha, &dir.x);
        st.s.axpy(alpha, &dir.s);
        st.y.axpy(alpha, &dir.y, 1.0);
        st.tau += alpha * dir.tau;
        st.kappa += alpha * dir.kappa;
        // symmetrize against round-off drift
        for m in st.x.p.iter_mut().chain(st.s.p.iter_mut()) {
            let t = m.transpose();
            *m = (&*m + t) * 0.5;
        }
        if !(st.tau.is_finite() && st.kappa.is_finite()) {
            return Err(Error::Solver("non-finite iterate".into()));
        }
        // renormalize the homogeneous iterate to keep magnitudes sane
        let scale = st.tau + st.kappa;
        if !(1e-8..=1e8).contains(&scale) {
            let f = 1.0 / scale;
            st.x = st.x.scaled(f);
            st.s = st.s.scaled(f);
            st.y *= f;
            st.tau *= f;
            st.kappa *= f;
        }
    }

    let (_, st, m) = best.ok_or_else(|| Error::Solver("no iterate produced".into()))?;
    Ok(finish(data, st, m, status, iterations))
}

fn finish(
    data: &Data,
    st: State,
    m: Metrics,
    status: SolveStatus,
    iterations: usize,
) -> PrimalDualSolution {
    let (x, s, y) = match status {
        // certificates are reported unnormalized
        SolveStatus::PrimalInfeasible | SolveStatus::DualInfeasible => (st.x, st.s, st.y),
        _ => {
            let t = 1.0 / st.tau;
            (st.x.scaled(t), st.s.scaled(t), st.y * t)
        }
    };
    PrimalDualSolution {
        status,
        primal: data.export_primal(&x),
        dual_rows: data.export_dual_rows(&y),
        dual_cones: data.export_slack(&s),
        primal_objective: m.pobj,
        dual_objective: m.dobj,
        gap: (m.pobj - m.dobj).abs(),
        primal_residual: m.pres,
        dual_residual: m.dres,
        iterations,
    }
}

fn metrics(data: &Data, st: &State, cnorm: f64) -> Metrics {
    let t = st.tau;
    let ax = data.a_mul(&st.x);
    let aty = data.at_mul(&st.y);
    // residuals in program units: undo row and cost scaling
    let pr = (&ax / t - &data.b).component_div(&data.row_scale);
    let b_orig = data.b.component_div(&data.row_scale);
    let pres = pr.norm() / (1.0 + b_orig.norm());
    let mut dr = data.c.clone();
    dr.axpy(-1.0 / t, &aty);
    dr.axpy(-1.0 / t, &st.s);
    let dres = dr.norm() * data.cost_scale / (1.0 + cnorm * data.cost_scale);
    let pobj = data.c.dot(&st.x) / t * data.cost_scale;
    let dobj = data.b.dot(&st.y) / t * data.cost_scale;
    let rel_gap = (pobj - dobj).abs() / (1.0 + pobj.abs());

    let by = data.b.dot(&st.y);
    // certificates only count once τ has collapsed relative to κ
    let certificate = st.tau < st.kappa;
    let pinf = (certificate && by > 0.0).then(|| {
        let mut v = aty.clone();
        v.axpy(1.0, &st.s);
        v.norm() / by
    });
    let cx = data.c.dot(&st.x);
    let dinf = (certificate && cx < 0.0).then(|| ax.norm() / -cx);
    Metrics {
        pres,
        dres,
        pobj,
        dobj,
        rel_gap,
        pinf,
        dinf,
    }
}

fn scalings(st: &State) -> Scalings {
    let l_ratio = st.x.l.component_div(&st.s.l);
    let l_w = l_ratio.map(f64::sqrt);
    let l_lambda = st.x.l.component_mul(&st.s.l).map(f64::sqrt);
    let psd = st
        .x
        .p
        .iter()
        .zip(&st.s.p)
        .map(|(x, s)| psd_scaling(x, s))
        .collect();
    Scalings {
        l_ratio,
        l_w,
        l_lambda,
        psd,
    }
}

/// Assembles `[A_K H⁻¹ A_Kᵀ, A_f; A_fᵀ, 0]` and factors it.
fn factor(data: &Data, sc: &Scalings) -> Option<Kkt> {
    let m = data.m;
    let n = m + data.nf;
    let mut mat = DMatrix::<f64>::zeros(n, n);

    // nonnegative block: Σ_l (x/s)_l a_il a_jl
    for (l, col) in data.cols_l.iter().enumerate() {
        for &(i, vi) in col {
            for &(j, vj) in col {
                mat[(i, j)] += vi * vj * sc.l_ratio[l];
            }
        }
    }

    // PSD blocks: <A_i, W A_j W>
    for (k, rows) in data.rows_p.iter().enumerate() {
        let w = &sc.psd[k].w;
        let nside = w.nrows();
        let mut tmats: Vec<DMatrix<f64>> = Vec::with_capacity(rows.len());
        for (_, ents) in rows {
            let mut t = DMatrix::<f64>::zeros(nside, nside);
            for &(a, b, v) in ents {
                // t += v * W[:, a] W[b, :]
                let wa = w.column(a);
                let wb = w.column(b);
                t.ger(v, &wa, &wb, 1.0);
            }
            tmats.push(t);
        }
        for (ii, (ri, _)) in rows.iter().enumerate() {
            let t = &tmats[ii];
            for (rj, ents_j) in rows.iter().skip(ii) {
                let v: f64 = ents_j.iter().map(|&(p, q, val)| val * t[(q, p)]).sum();
                mat[(*ri, *rj)] += v;
                if ri != rj {
                    mat[(*rj, *ri)] += v;
                }
            }
        }
    }

    for r in 0..m {
        for &(i, v) in &data.rows_f[r] {
            mat[(r, m + i)] += v;
            mat[(m + i, r)] += v;
        }
    }
    // light regularization keeps degenerate systems factorable; refinement
    // against the unregularized matrix recovers accuracy
    let diag_max = (0..m).map(|i| mat[(i, i)].abs()).fold(0.0, f64::max).max(1.0);
    let mut reg = mat.clone();
    for i in 0..m {
        reg[(i, i)] += 1e-14 * diag_max;
    }
    // rows are normalized, so the free block needs no relative scaling
    for i in m..n {
        reg[(i, i)] -= 1e-14;
    }
    let lu = reg.lu();
    if !lu.is_invertible() {
        return None;
    }
    Some(Kkt { lu, mat })
}

/// `H⁻¹ v` blockwise on the cone coordinates.
fn hinv(sc: &Scalings, v: &Point) -> Point {
    Point {
        f: DVector::zeros(v.f.len()),
        l: v.l.component_mul(&sc.l_ratio),
        p: v
            .p
            .iter()
            .zip(&sc.psd)
            .map(|(m, s)| &s.w * m * &s.w)
            .collect(),
    }
}

/// `H v` blockwise on the cone coordinates.
fn hmul(sc: &Scalings, v: &Point) -> Point {
    Point {
        f: DVector::zeros(v.f.len()),
        l: v.l.component_div(&sc.l_ratio),
        p: v
            .p
            .iter()
            .zip(&sc.psd)
            .map(|(m, s)| {
                let winv = s.ginv.transpose() * &s.ginv;
                &winv * m * &winv
            })
            .collect(),
    }
}

/// Right-hand side of the linearized embedding
///
/// ```text
///   A dx - b dτ = p,   c dτ - Aᵀ dy - ds = d,   bᵀ dy - cᵀ dx - dκ = g,
///   ds + H dx = comp (cone part),   κ dτ + τ dκ = tk.
/// ```
struct Rhs {
    p: DVector<f64>,
    d: Point,
    g: f64,
    comp: Point,
    tk: f64,
}

#[allow(clippy::too_many_arguments)]
fn newton(
    data: &Data,
    st: &State,
    sc: &Scalings,
    kkt: &Kkt,
    rp: &DVector<f64>,
    rd: &Point,
    rg: f64,
    eta: f64,
    tg: &Targets,
) -> Direction {
    // complementarity in ds-space
    let mut comp = data.zero_point();
    comp.l = tg
        .l
        .component_div(&sc.l_lambda)
        .component_div(&sc.l_w);
    for (k, s) in sc.psd.iter().enumerate() {
        let n = s.lambda.len();
        let mut z = tg.p[k].clone();
        for i in 0..n {
            for j in 0..n {
                z[(i, j)] *= 2.0 / (s.lambda[i] + s.lambda[j]);
            }
        }
        comp.p[k] = s.ginv.transpose() * z * &s.ginv;
    }
    let rhs = Rhs {
        p: rp * -eta,
        d: rd.scaled(-eta),
        g: eta * rg,
        comp,
        tk: tg.tau_kappa,
    };
    let mut dir = newton_solve(data, st, sc, kkt, &rhs);
    // refinement on the full system: the reduced solve loses accuracy as
    // the scaling becomes ill-conditioned near the boundary
    for _ in 0..2 {
        let res = full_residual(data, st, sc, &rhs, &dir);
        let size = res.p.amax().max(res.d.norm()).max(res.comp.norm());
        if size <= 1e-15 {
            break;
        }
        let corr = newton_solve(data, st, sc, kkt, &res);
        dir.x.axpy(1.0, &corr.x);
        dir.s.axpy(1.0, &corr.s);
        dir.y += &corr.y;
        dir.tau += corr.tau;
        dir.kappa += corr.kappa;
    }
    dir
}

fn full_residual(data: &Data, st: &State, sc: &Scalings, rhs: &Rhs, d: &Direction) -> Rhs {
    let p = &rhs.p - (data.a_mul(&d.x) - &data.b * d.tau);
    let mut dd = rhs.d.clone();
    dd.axpy(-d.tau, &data.c);
    dd.axpy(1.0, &data.at_mul(&d.y));
    dd.axpy(1.0, &d.s);
    let g = rhs.g - (data.b.dot(&d.y) - data.c.dot(&d.x) - d.kappa);
    let mut comp = rhs.comp.clone();
    comp.axpy(-1.0, &d.s);
    comp.axpy(-1.0, &hmul(sc, &d.x));
    comp.f.fill(0.0);
    let tk = rhs.tk - (st.kappa * d.tau + st.tau * d.kappa);
    Rhs {
        p,
        d: dd,
        g,
        comp,
        tk,
    }
}

fn newton_solve(data: &Data, st: &State, sc: &Scalings, kkt: &Kkt, rhs: &Rhs) -> Direction {
    let m = data.m;
    // u = comp + d (cone part)
    let mut u = rhs.comp.clone();
    u.axpy(1.0, &rhs.d);
    u.f.fill(0.0);
    let hu = hinv(sc, &u);
    let mut ck = data.c.clone();
    ck.f.fill(0.0);
    let hc = hinv(sc, &ck);

    let mut rhs1 = DVector::zeros(m + data.nf);
    let top1 = &rhs.p - data.a_mul(&hu);
    rhs1.rows_mut(0, m).copy_from(&top1);
    rhs1.rows_mut(m, data.nf).copy_from(&(-&rhs.d.f));
    let mut rhs2 = DVector::zeros(m + data.nf);
    let top2 = &data.b + data.a_mul(&hc);
    rhs2.rows_mut(0, m).copy_from(&top2);
    rhs2.rows_mut(m, data.nf).copy_from(&data.c.f);

    let s1 = kkt.solve(&rhs1);
    let s2 = kkt.solve(&rhs2);
    let (u1y, u1f) = (s1.rows(0, m).into_owned(), s1.rows(m, data.nf).into_owned());
    let (u2y, u2f) = (s2.rows(0, m).into_owned(), s2.rows(m, data.nf).into_owned());

    let mut v1 = data.at_mul(&u1y);
    v1.axpy(1.0, &u);
    v1.f.fill(0.0);
    let v1 = hinv(sc, &v1);
    let mut v2 = data.at_mul(&u2y);
    v2.axpy(-1.0, &ck);
    v2.f.fill(0.0);
    let v2 = hinv(sc, &v2);

    let g1 = data.c.f.dot(&u1f) + data.c.dot_cone(&v1) - data.b.dot(&u1y);
    let g2 = data.c.f.dot(&u2f) + data.c.dot_cone(&v2) - data.b.dot(&u2y);
    let dtau = (rhs.g + g1 + rhs.tk / st.tau) / (st.kappa / st.tau - g2);
    let dkappa = (rhs.tk - st.kappa * dtau) / st.tau;

    let dy = &u1y + &u2y * dtau;
    let mut dx = v1;
    dx.axpy(dtau, &v2);
    dx.f = &u1f + &u2f * dtau;

    // ds from the dual equation: ds = c dτ - Aᵀ dy - d
    let mut ds = data.c.scaled(dtau);
    ds.axpy(-1.0, &data.at_mul(&dy));
    ds.axpy(-1.0, &rhs.d);
    ds.f.fill(0.0);

    Direction {
        x: dx,
        s: ds,
        y: dy,
        tau: dtau,
        kappa: dkappa,
    }
}

fn scaled_l(sc: &Scalings, d: &Direction) -> (DVector<f64>, DVector<f64>) {
    (
        d.x.l.component_div(&sc.l_w),
        d.s.l.component_mul(&sc.l_w),
    )
}

fn scaled_p(sc: &Scalings, d: &Direction) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
    sc.psd
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let dx = &s.ginv * &d.x.p[k] * s.ginv.transpose();
            let ds = s.g.transpose() * &d.s.p[k] * &s.g;
            (dx, ds)
        })
        .unzip()
}

fn max_step(st: &State, sc: &Scalings, d: &Direction) -> f64 {
    let mut a = f64::MAX;
    a = a.min(vec_step(&st.x.l, &d.x.l));
    a = a.min(vec_step(&st.s.l, &d.s.l));
    let (dxp, dsp) = scaled_p(sc, d);
    for (k, s) in sc.psd.iter().enumerate() {
        a = a.min(psd_step(&s.lambda, &dxp[k]));
        a = a.min(psd_step(&s.lambda, &dsp[k]));
    }
    if d.tau < 0.0 {
        a = a.min(-st.tau / d.tau);
    }
    if d.kappa < 0.0 {
        a = a.min(-st.kappa / d.kappa);
    }
    a
}
