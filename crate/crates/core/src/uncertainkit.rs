//! Random models for `ξ`, sampling, moments, the order-statistic set size
//! and the bisection loop that tunes `Γ` until the violation probability of
//! the robust solution matches `ε`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, ChiSquared, Distribution, Exp, Gamma, LogNormal, Normal, StandardNormal, StudentT, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use crate::error::{Error, Result};
use crate::robustsolve::{PerturbedConstraint, UncertaintySet, PD_TOL};

/// Rows drawn from one substream before switching to the next.
const CHUNK: usize = 4096;

/// One coordinate of a product model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Univariate {
    Gaussian { mean: f64, sd: f64 },
    Uniform { a: f64, b: f64 },
    /// Mean equals `scale`.
    Exponential { scale: f64 },
    Beta { alpha: f64, beta: f64 },
    Gamma { shape: f64, scale: f64 },
    ChiSquared { df: f64 },
    /// Parameters of the underlying normal.
    LogNormal { mu: f64, sigma: f64 },
    StudentT { df: f64 },
}

fn positive(what: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{what} must be positive, got {v}")))
    }
}

fn finite(what: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{what} must be finite, got {v}")))
    }
}

impl Univariate {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Univariate::Gaussian { mean, sd } => {
                finite("gaussian mean", mean)?;
                positive("gaussian sd", sd)
            }
            Univariate::Uniform { a, b } => {
                finite("uniform a", a)?;
                finite("uniform b", b)?;
                if a < b {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!("uniform needs a < b, got [{a}, {b}]")))
                }
            }
            Univariate::Exponential { scale } => positive("exponential scale", scale),
            Univariate::Beta { alpha, beta } => {
                positive("beta alpha", alpha)?;
                positive("beta beta", beta)
            }
            Univariate::Gamma { shape, scale } => {
                positive("gamma shape", shape)?;
                positive("gamma scale", scale)
            }
            Univariate::ChiSquared { df } => positive("chi-squared df", df),
            Univariate::LogNormal { mu, sigma } => {
                finite("log-normal mu", mu)?;
                positive("log-normal sigma", sigma)
            }
            Univariate::StudentT { df } => positive("student-t df", df),
        }
    }

    /// `(mean, variance)`.
    pub fn moments(&self) -> Result<(f64, f64)> {
        self.validate()?;
        Ok(match *self {
            Univariate::Gaussian { mean, sd } => (mean, sd * sd),
            Univariate::Uniform { a, b } => (0.5 * (a + b), (b - a).powi(2) / 12.0),
            Univariate::Exponential { scale } => (scale, scale * scale),
            Univariate::Beta { alpha, beta } => {
                let s = alpha + beta;
                (alpha / s, alpha * beta / (s * s * (s + 1.0)))
            }
            Univariate::Gamma { shape, scale } => (shape * scale, shape * scale * scale),
            Univariate::ChiSquared { df } => (df, 2.0 * df),
            Univariate::LogNormal { mu, sigma } => {
                let s2 = sigma * sigma;
                ((mu + 0.5 * s2).exp(), (s2.exp() - 1.0) * (2.0 * mu + s2).exp())
            }
            Univariate::StudentT { df } => {
                if df <= 2.0 {
                    return Err(Error::UndefinedMoments(format!(
                        "student-t with df = {df} has no finite covariance"
                    )));
                }
                (0.0, df / (df - 2.0))
            }
        })
    }

    fn sampler(&self) -> Result<Sampler> {
        self.validate()?;
        let bad = |e: &dyn std::fmt::Display| Error::InvalidParameter(e.to_string());
        Ok(match *self {
            Univariate::Gaussian { mean, sd } => Sampler::Normal(Normal::new(mean, sd).map_err(|e| bad(&e))?),
            Univariate::Uniform { a, b } => Sampler::Uniform(Uniform::new(a, b).map_err(|e| bad(&e))?),
            Univariate::Exponential { scale } => Sampler::Exp(Exp::new(1.0 / scale).map_err(|e| bad(&e))?),
            Univariate::Beta { alpha, beta } => Sampler::Beta(Beta::new(alpha, beta).map_err(|e| bad(&e))?),
            Univariate::Gamma { shape, scale } => Sampler::Gamma(Gamma::new(shape, scale).map_err(|e| bad(&e))?),
            Univariate::ChiSquared { df } => Sampler::ChiSquared(ChiSquared::new(df).map_err(|e| bad(&e))?),
            Univariate::LogNormal { mu, sigma } => {
                Sampler::LogNormal(LogNormal::new(mu, sigma).map_err(|e| bad(&e))?)
            }
            Univariate::StudentT { df } => Sampler::StudentT(StudentT::new(df).map_err(|e| bad(&e))?),
        })
    }
}

enum Sampler {
    Normal(Normal<f64>),
    Uniform(Uniform<f64>),
    Exp(Exp<f64>),
    Beta(Beta<f64>),
    Gamma(Gamma<f64>),
    ChiSquared(ChiSquared<f64>),
    LogNormal(LogNormal<f64>),
    StudentT(StudentT<f64>),
}

impl Sampler {
    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Sampler::Normal(d) => d.sample(rng),
            Sampler::Uniform(d) => d.sample(rng),
            Sampler::Exp(d) => d.sample(rng),
            Sampler::Beta(d) => d.sample(rng),
            Sampler::Gamma(d) => d.sample(rng),
            Sampler::ChiSquared(d) => d.sample(rng),
            Sampler::LogNormal(d) => d.sample(rng),
            Sampler::StudentT(d) => d.sample(rng),
        }
    }
}

/// Distribution of `ξ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RandomModel {
    /// Independent coordinates.
    Product { components: Vec<Univariate> },
    JointGaussian { mean: Vec<f64>, cov: Vec<Vec<f64>> },
    /// Multivariate t with location, scale matrix and degrees of freedom.
    JointT { df: f64, location: Vec<f64>, scale: Vec<Vec<f64>> },
    /// Uniform over the rows of a sample matrix.
    Empirical { rows: Vec<Vec<f64>> },
}

fn square(rows: &[Vec<f64>], r: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != r || rows.iter().any(|row| row.len() != r) {
        return Err(Error::InvalidParameter(format!("{what} must be {r}×{r}")));
    }
    Ok(DMatrix::from_fn(r, r, |i, j| rows[i][j]))
}

fn pd_factor(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > 1e-12 * scale {
        return Err(Error::NotPositiveDefinite(format!("{what} is not symmetric")));
    }
    let emin = m.clone().symmetric_eigenvalues().min();
    if !(emin > PD_TOL * scale) {
        return Err(Error::NotPositiveDefinite(format!(
            "{what} has smallest eigenvalue {emin:e}"
        )));
    }
    Cholesky::new(m.clone()).ok_or_else(|| Error::NotPositiveDefinite(format!("{what}: Cholesky failed")))
}

impl RandomModel {
    pub fn dim(&self) -> usize {
        match self {
            RandomModel::Product { components } => components.len(),
            RandomModel::JointGaussian { mean, .. } => mean.len(),
            RandomModel::JointT { location, .. } => location.len(),
            RandomModel::Empirical { rows } => rows.first().map_or(0, Vec::len),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.dim();
        if r == 0 {
            return Err(Error::InvalidParameter("random vector has dimension 0".into()));
        }
        match self {
            RandomModel::Product { components } => components.iter().try_for_each(Univariate::validate),
            RandomModel::JointGaussian { mean, cov } => {
                mean.iter().try_for_each(|v| finite("mean", *v))?;
                pd_factor(&square(cov, r, "covariance")?, "covariance").map(|_| ())
            }
            RandomModel::JointT { df, location, scale } => {
                positive("t df", *df)?;
                location.iter().try_for_each(|v| finite("location", *v))?;
                pd_factor(&square(scale, r, "scale matrix")?, "scale matrix").map(|_| ())
            }
            RandomModel::Empirical { rows } => {
                if rows.iter().any(|row| row.len() != r) {
                    return Err(Error::InvalidParameter("empirical rows differ in length".into()));
                }
                rows.iter().flatten().try_for_each(|v| finite("sample", *v))
            }
        }
    }
}

/// Row-major `n × r` sample matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Samples {
    r: usize,
    data: Vec<f64>,
}

impl Samples {
    pub fn from_rows(r: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * r);
        for row in rows {
            if row.len() != r {
                return Err(Error::DimensionMismatch {
                    expected: r,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Samples { r, data })
    }

    pub fn dim(&self) -> usize {
        self.r
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.r).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.r..(i + 1) * self.r]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.r)
    }

    pub fn to_vecs(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    /// Rows `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Samples {
        Samples {
            r: self.r,
            data: self.data[start * self.r..end * self.r].to_vec(),
        }
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.len(), self.r, &self.data)
    }

    /// Mean and covariance of the empirical measure (divisor `n`).
    pub fn moments(&self) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let n = self.len();
        if n == 0 {
            return Err(Error::InvalidParameter("no samples".into()));
        }
        let mut mu = DVector::zeros(self.r);
        for row in self.rows() {
            mu += DVector::from_column_slice(row);
        }
        mu /= n as f64;
        let mut cov = DMatrix::zeros(self.r, self.r);
        for row in self.rows() {
            let d = DVector::from_column_slice(row) - &mu;
            cov += &d * d.transpose();
        }
        cov /= n as f64;
        Ok((mu, cov))
    }
}

/// `n` i.i.d. draws, reproducible from `seed` regardless of thread count.
///
/// Rows are produced in chunks; chunk `j` uses ChaCha stream `j` of `seed`.
pub fn sample(model: &RandomModel, n: usize, seed: u64) -> Result<Samples> {
    if n == 0 {
        return Err(Error::InvalidParameter("sample size must be at least 1".into()));
    }
    model.validate()?;
    let r = model.dim();
    let draw: Box<dyn Fn(&mut ChaCha8Rng, &mut [f64]) + Sync> = match model {
        RandomModel::Product { components } => {
            let samplers = components.iter().map(Univariate::sampler).collect::<Result<Vec<_>>>()?;
            Box::new(move |rng, out| {
                for (o, s) in out.iter_mut().zip(&samplers) {
                    *o = s.draw(rng);
                }
            })
        }
        RandomModel::JointGaussian { mean, cov } => {
            let l = pd_factor(&square(cov, r, "covariance")?, "covariance")?.l();
            let mean = DVector::from_column_slice(mean);
            Box::new(move |rng, out| {
                let z = DVector::from_fn(r, |_, _| rng.sample::<f64, _>(StandardNormal));
                out.copy_from_slice((&mean + &l * z).as_slice());
            })
        }
        RandomModel::JointT { df, location, scale } => {
            let l = pd_factor(&square(scale, r, "scale matrix")?, "scale matrix")?.l();
            let loc = DVector::from_column_slice(location);
            let chi = ChiSquared::new(*df).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            let df = *df;
            Box::new(move |rng, out| {
                let z = DVector::from_fn(r, |_, _| rng.sample::<f64, _>(StandardNormal));
                let w: f64 = chi.sample(rng);
                out.copy_from_slice((&loc + &l * z * (df / w).sqrt()).as_slice());
            })
        }
        RandomModel::Empirical { rows } => {
            let rows = rows.clone();
            Box::new(move |rng, out| {
                let i = rng.random_range(0..rows.len());
                out.copy_from_slice(&rows[i]);
            })
        }
    };
    let mut data = vec![0.0; n * r];
    data.par_chunks_mut(CHUNK * r).enumerate().for_each(|(j, chunk)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(j as u64);
        for out in chunk.chunks_exact_mut(r) {
            draw(&mut rng, out);
        }
    });
    Ok(Samples { r, data })
}

/// Exact mean and covariance, or sample moments for an empirical model.
pub fn moments_of(model: &RandomModel) -> Result<(DVector<f64>, DMatrix<f64>)> {
    model.validate()?;
    let r = model.dim();
    match model {
        RandomModel::Product { components } => {
            let m = components.iter().map(Univariate::moments).collect::<Result<Vec<_>>>()?;
            Ok((
                DVector::from_iterator(r, m.iter().map(|p| p.0)),
                DMatrix::from_diagonal(&DVector::from_iterator(r, m.iter().map(|p| p.1))),
            ))
        }
        RandomModel::JointGaussian { mean, cov } => {
            Ok((DVector::from_column_slice(mean), square(cov, r, "covariance")?))
        }
        RandomModel::JointT { df, location, scale } => {
            if *df <= 2.0 {
                return Err(Error::UndefinedMoments(format!(
                    "multivariate t with df = {df} has no finite covariance"
                )));
            }
            Ok((
                DVector::from_column_slice(location),
                square(scale, r, "scale matrix")? * (df / (df - 2.0)),
            ))
        }
        RandomModel::Empirical { rows } => Samples::from_rows(r, rows)?.moments(),
    }
}

/// `Γ(ξ) = (ξ-μ)ᵀ Λ⁻¹ (ξ-μ)` with a cached factorization of `Λ`.
#[derive(Clone, Debug)]
pub struct GammaFn {
    mu: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl GammaFn {
    pub fn new(mu: &DVector<f64>, lambda: &DMatrix<f64>) -> Result<Self> {
        if lambda.nrows() != mu.len() || lambda.ncols() != mu.len() {
            return Err(Error::DimensionMismatch {
                expected: mu.len(),
                found: lambda.nrows(),
            });
        }
        Ok(GammaFn {
            mu: mu.clone(),
            chol: pd_factor(lambda, "Λ")?,
        })
    }

    pub fn value(&self, xi: &[f64]) -> f64 {
        let d = DVector::from_column_slice(xi) - &self.mu;
        // ‖L⁻¹(ξ-μ)‖² via one triangular solve
        let w = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&d)
            .expect("Cholesky factor has a nonzero diagonal");
        w.norm_squared()
    }
}

pub fn gamma_value(mu: &DVector<f64>, lambda: &DMatrix<f64>, xi: &[f64]) -> Result<f64> {
    if xi.len() != mu.len() {
        return Err(Error::DimensionMismatch {
            expected: mu.len(),
            found: xi.len(),
        });
    }
    Ok(GammaFn::new(mu, lambda)?.value(xi))
}

/// Smallest `L ≤ N` with `Σ_{i<L} C(N,i) (1-ε)^i ε^{N-i} ≥ 1 - β`, or `None`
/// when even `L = N` fails, i.e. `(1-ε)^N > β`.
///
/// Works with the complementary tail `Σ_{i≥L}`, summed from `i = N` down in
/// the log domain with compensated addition.
pub fn quantile_index(n: usize, eps: f64, beta: f64) -> Option<usize> {
    if n == 0 || !(eps > 0.0 && eps < 1.0) || !(0.0..1.0).contains(&beta) {
        return None;
    }
    let (lp, lq) = ((1.0 - eps).ln(), eps.ln());
    let term = |i: usize| (ln_binomial(n as u64, i as u64) + i as f64 * lp + (n - i) as f64 * lq).exp();
    // absorbs rounding of the log-domain terms when the tail equals β exactly
    let limit = beta * (1.0 + 1e-12);
    let (mut tail, mut comp) = (0.0f64, 0.0f64);
    let mut best = None;
    for l in (1..=n).rev() {
        let y = term(l) - comp;
        let t = tail + y;
        comp = (t - tail) - y;
        tail = t;
        if tail <= limit {
            best = Some(l);
        } else {
            break;
        }
    }
    best
}

/// `(Γ_1, L*)`: the `L*`-th smallest `Γ(ξ^{(i)})` over the rows.
pub fn initial_gamma(
    samples: &Samples,
    mu: &DVector<f64>,
    lambda: &DMatrix<f64>,
    eps: f64,
    beta: f64,
) -> Result<(f64, usize)> {
    let n = samples.len();
    let l = quantile_index(n, eps, beta).ok_or(Error::QuantileUnsolvable { n, eps, beta })?;
    let gf = GammaFn::new(mu, lambda)?;
    let mut values: Vec<f64> = samples.rows().map(|row| gf.value(row)).collect();
    values.sort_by(f64::total_cmp);
    Ok((values[l - 1], l))
}

/// Fraction of rows with `h(x, ζ) < 0`.
pub fn estimate_pvio(pc: &PerturbedConstraint, x: &[f64], samples: &Samples) -> Result<f64> {
    if samples.dim() != pc.r() {
        return Err(Error::DimensionMismatch {
            expected: pc.r(),
            found: samples.dim(),
        });
    }
    if samples.is_empty() {
        return Err(Error::InvalidParameter("no evaluation samples".into()));
    }
    let h = pc.poly_at(x)?;
    let terms: Vec<_> = h.terms().map(|(e, c)| (e.clone(), c)).collect();
    let bad = samples
        .data
        .par_chunks(samples.r * CHUNK)
        .map(|chunk| {
            chunk
                .chunks_exact(samples.r)
                .filter(|row| terms.iter().map(|(e, c)| c * e.eval(row)).sum::<f64>() < 0.0)
                .count()
        })
        .sum::<usize>();
    Ok(bad as f64 / samples.len() as f64)
}

#[derive(Clone, Debug)]
pub struct SizingOptions {
    pub eps: f64,
    pub beta: f64,
    pub rho: f64,
    /// Samples for the quantile estimate.
    pub n: usize,
    /// Samples for the violation probability.
    pub nhat: usize,
    pub seed: u64,
    pub max_loops: usize,
    pub max_beta_doublings: usize,
}

impl Default for SizingOptions {
    fn default() -> Self {
        SizingOptions {
            eps: 0.05,
            beta: 0.05,
            rho: 1e-6,
            n: 100,
            nhat: 1_000_000,
            seed: 0,
            max_loops: 60,
            max_beta_doublings: 10,
        }
    }
}

impl SizingOptions {
    fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::InvalidParameter(format!("ε must lie in (0,1), got {}", self.eps)));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::InvalidParameter(format!("β must lie in (0,1), got {}", self.beta)));
        }
        if !(self.rho >= 0.0) {
            return Err(Error::InvalidParameter(format!("ρ must be nonnegative, got {}", self.rho)));
        }
        if self.n == 0 || self.nhat == 0 || self.max_loops == 0 {
            return Err(Error::InvalidParameter("N, N̂ and max_loops must be positive".into()));
        }
        Ok(())
    }
}

/// One pass of the bisection loop.
#[derive(Clone, Debug, Serialize)]
pub struct SizingStep {
    pub loop_index: usize,
    pub gamma: f64,
    pub fstar: f64,
    pub xstar: Vec<f64>,
    pub pvio: f64,
    pub gamma_lower: f64,
    pub gamma_upper: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SizingStatus {
    Converged,
    MaxLoops,
}

#[derive(Clone, Debug, Serialize)]
pub struct SizingReport {
    pub gamma_star: f64,
    pub status: SizingStatus,
    pub trace: Vec<SizingStep>,
    pub loops: usize,
    pub initial_gamma: f64,
    pub lstar: usize,
    /// How often `β` was doubled before the quantile index became solvable.
    pub beta_doublings: usize,
    pub beta_used: f64,
}

impl SizingReport {
    /// The step whose set size was returned.
    pub fn final_step(&self) -> &SizingStep {
        self.trace
            .iter()
            .rev()
            .find(|s| s.gamma == self.gamma_star)
            .expect("gamma_star comes from the trace")
    }
}

/// The bisection on `Γ`. `solve` maps an uncertainty set to `(x*, f*)`;
/// `observe` sees every step as it completes.
///
/// All `N + N̂` samples are drawn once up front, so the loop is deterministic
/// given the seed.
pub fn size_uncertainty_set<S, O>(
    pc: &PerturbedConstraint,
    model: &RandomModel,
    mu: &DVector<f64>,
    lambda: &DMatrix<f64>,
    opts: &SizingOptions,
    mut solve: S,
    mut observe: O,
) -> Result<SizingReport>
where
    S: FnMut(&UncertaintySet) -> Result<(Vec<f64>, f64)>,
    O: FnMut(&SizingStep),
{
    opts.validate()?;
    if model.dim() != pc.r() || mu.len() != pc.r() {
        return Err(Error::DimensionMismatch {
            expected: pc.r(),
            found: model.dim(),
        });
    }
    let all = sample(model, opts.n + opts.nhat, opts.seed)?;
    let quant = all.slice(0, opts.n);
    let eval = all.slice(opts.n, opts.n + opts.nhat);

    let mut beta = opts.beta;
    let mut doublings = 0;
    let (gamma1, lstar) = loop {
        match initial_gamma(&quant, mu, lambda, opts.eps, beta) {
            Ok(v) => break v,
            Err(Error::QuantileUnsolvable { .. }) if doublings < opts.max_beta_doublings && beta < 0.5 => {
                beta = (2.0 * beta).min(0.999);
                doublings += 1;
            }
            Err(e) => return Err(e),
        }
    };
    if !(gamma1 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "initial set size is {gamma1}; the samples do not spread around μ"
        )));
    }

    let base = UncertaintySet::new(gamma1, mu.clone(), lambda.clone())?;
    let (mut lo, mut hi) = (0.0, gamma1);
    let mut gamma = gamma1;
    let mut trace: Vec<SizingStep> = Vec::new();
    let mut status = SizingStatus::MaxLoops;
    for l in 1..=opts.max_loops {
        let u = base.with_gamma(gamma)?;
        let (x, f) = solve(&u).map_err(|e| {
            Error::Solver(format!(
                "sizing loop {l} at Γ = {gamma}: {e}; completed loops: {}",
                trace
                    .iter()
                    .map(|s| format!("(Γ={:.6}, f={:.6}, p={:.6})", s.gamma, s.fstar, s.pvio))
                    .collect::<Vec<_>>()
                    .join(", ")
            ))
        })?;
        let p = estimate_pvio(pc, &x, &eval)?;
        let step = SizingStep {
            loop_index: l,
            gamma,
            fstar: f,
            xstar: x,
            pvio: p,
            gamma_lower: lo,
            gamma_upper: hi,
        };
        observe(&step);
        trace.push(step);
        if (p - opts.eps).abs() <= opts.rho {
            status = SizingStatus::Converged;
            break;
        }
        if p < opts.eps {
            hi = gamma;
        } else {
            lo = gamma;
        }
        gamma = 0.5 * (lo + hi);
    }
    let gamma_star = match status {
        SizingStatus::Converged => trace.last().expect("at least one loop").gamma,
        // smallest set size seen on the safe side, else the initial size
        SizingStatus::MaxLoops => trace
            .iter()
            .filter(|s| s.pvio <= opts.eps)
            .map(|s| s.gamma)
            .fold(None, |a: Option<f64>, g| Some(a.map_or(g, |a| a.min(g))))
            .unwrap_or(gamma1),
    };
    Ok(SizingReport {
        gamma_star,
        status,
        loops: trace.len(),
        trace,
        initial_gamma: gamma1,
        lstar,
        beta_doublings: doublings,
        beta_used: beta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform3() -> RandomModel {
        RandomModel::Product {
            components: vec![Univariate::Uniform { a: 0.0, b: 2.0 }; 3],
        }
    }

    #[test]
    fn family_moments() {
        let (mu, lam) = moments_of(&uniform3()).unwrap();
        assert_eq!(mu, DVector::from_element(3, 1.0));
        assert!((lam - DMatrix::identity(3, 3) / 3.0).amax() < 1e-15);
        let e = std::f64::consts::E;
        let (m, v) = Univariate::LogNormal { mu: 0.0, sigma: 1.0 }.moments().unwrap();
        assert!((m - e.sqrt()).abs() < 1e-14 && (v - (e * e - e)).abs() < 1e-13);
        let (m, v) = Univariate::LogNormal { mu: -1.0, sigma: 1.0 }.moments().unwrap();
        assert!((m - 1.0 / e.sqrt()).abs() < 1e-14 && (v - (1.0 - 1.0 / e)).abs() < 1e-14);
        let (m, v) = Univariate::Beta { alpha: 2.0, beta: 2.0 }.moments().unwrap();
        assert!((m - 0.5).abs() < 1e-15 && (v - 0.05).abs() < 1e-15);
        assert_eq!(Univariate::Exponential { scale: 2.0 }.moments().unwrap(), (2.0, 4.0));
        assert_eq!(Univariate::Gamma { shape: 2.0, scale: 1.0 }.moments().unwrap(), (2.0, 2.0));
        assert_eq!(Univariate::ChiSquared { df: 3.0 }.moments().unwrap(), (3.0, 6.0));
    }

    #[test]
    fn t_moments_need_df_above_two() {
        let lb = vec![vec![4.0, 2.0], vec![2.0, 3.0]];
        let t = RandomModel::JointT {
            df: 4.0,
            location: vec![1.0, 1.0],
            scale: lb.clone(),
        };
        let (_, lam) = moments_of(&t).unwrap();
        assert_eq!(lam, DMatrix::from_row_slice(2, 2, &[8.0, 4.0, 4.0, 6.0]));
        let t2 = RandomModel::JointT {
            df: 2.0,
            location: vec![1.0, 1.0],
            scale: lb,
        };
        assert!(matches!(moments_of(&t2), Err(Error::UndefinedMoments(_))));
        assert!(matches!(
            Univariate::StudentT { df: 1.5 }.moments(),
            Err(Error::UndefinedMoments(_))
        ));
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let m = RandomModel::Product {
            components: vec![Univariate::Gamma { shape: 2.0, scale: -1.0 }],
        };
        assert!(matches!(sample(&m, 3, 0), Err(Error::InvalidParameter(_))));
        assert!(sample(&uniform3(), 0, 0).is_err());
        let g = RandomModel::JointGaussian {
            mean: vec![0.0, 0.0],
            cov: vec![vec![1.0, 2.0], vec![2.0, 1.0]],
        };
        assert!(matches!(sample(&g, 3, 0), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn sampling_is_deterministic_and_in_support() {
        let a = sample(&uniform3(), 10_000, 42).unwrap();
        let b = sample(&uniform3(), 10_000, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.data.iter().all(|v| (0.0..=2.0).contains(v)));
        let c = sample(&uniform3(), 10_000, 43).unwrap();
        assert_ne!(a, c);
        // a prefix of a longer draw is the shorter draw
        let long = sample(&uniform3(), 20_000, 42).unwrap();
        assert_eq!(long.slice(0, 10_000), a);
    }

    #[test]
    fn quantile_index_examples() {
        assert_eq!(quantile_index(59, 0.05, 0.05), Some(59));
        assert_eq!(quantile_index(58, 0.05, 0.05), None);
        assert!(quantile_index(90, 0.05, 0.01).is_some());
        assert_eq!(quantile_index(89, 0.05, 0.01), None);
        assert_eq!(quantile_index(3, 0.5, 0.5), Some(2));
    }

    #[test]
    fn quantile_index_survives_large_n() {
        let l = quantile_index(10_000, 0.05, 0.01).unwrap();
        // normal approximation of the binomial upper quantile
        let sd = (10_000.0f64 * 0.05 * 0.95).sqrt();
        let approx = 9_500.0 + 2.326 * sd;
        assert!((l as f64 - approx).abs() < 5.0, "{l} vs {approx}");
    }

    #[test]
    fn initial_gamma_picks_the_order_statistic() {
        let mu = DVector::zeros(1);
        let lam = DMatrix::identity(1, 1);
        let s = Samples::from_rows(1, &[vec![2.0], vec![1.0], vec![3.0]]).unwrap();
        assert_eq!(initial_gamma(&s, &mu, &lam, 0.5, 0.5).unwrap(), (4.0, 2));
        let s = Samples::from_rows(1, &vec![vec![0.0]; 59]).unwrap();
        assert_eq!(initial_gamma(&s, &mu, &lam, 0.05, 0.05).unwrap().0, 0.0);
        let s = Samples::from_rows(1, &vec![vec![0.0]; 58]).unwrap();
        assert!(matches!(
            initial_gamma(&s, &mu, &lam, 0.05, 0.05),
            Err(Error::QuantileUnsolvable { n: 58, .. })
        ));
    }

    #[test]
    fn gamma_value_matches_a_direct_solve() {
        let mu = DVector::from_vec(vec![0.0676, 0.0132]);
        let lam = DMatrix::from_row_slice(2, 2, &[0.9887, -0.0057, -0.0057, 0.9848]);
        let d = DVector::from_vec(vec![1.0 - 0.0676, -0.0132]);
        let want = d.dot(&lam.clone().lu().solve(&d).unwrap());
        assert!((gamma_value(&mu, &lam, &[1.0, 0.0]).unwrap() - want).abs() < 1e-14);
        assert_eq!(gamma_value(&mu, &lam, &[0.0676, 0.0132]).unwrap(), 0.0);
        let eye = DMatrix::identity(3, 3);
        let v = gamma_value(&DVector::zeros(3), &eye, &[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(v, 5.25);
    }

    #[test]
    fn constant_constraints_have_trivial_violation() {
        let s = sample(&uniform3(), 1000, 1).unwrap();
        let one = PerturbedConstraint::from_terms(3, 1, [(crate::polycore::Exponent::zero(3), vec![0.0], 1.0)]).unwrap();
        assert_eq!(estimate_pvio(&one, &[0.0], &s).unwrap(), 0.0);
        let minus = PerturbedConstraint::from_terms(3, 1, [(crate::polycore::Exponent::zero(3), vec![0.0], -1.0)]).unwrap();
        assert_eq!(estimate_pvio(&minus, &[0.0], &s).unwrap(), 1.0);
    }
}
