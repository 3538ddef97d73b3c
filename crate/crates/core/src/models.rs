//! Parametric working models fitted by maximum likelihood.
//!
//! The propensity model is logistic in a design vector; the outcome model is
//! normal-linear, `Y | d ~ N(βᵀd, σ²)`, so the conditional CDF is
//! `Φ((y − βᵀd)/σ)`. Both fits keep the per-observation scores and the
//! information/Hessian matrices needed by the influence-function corrections.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::data::Record;
use crate::error::{FqteError, Result};
use crate::numeric::{dot, logistic, norm_cdf, norm_pdf};

/// Propensities are clamped to this band when forming inverse weights.
pub const PROPENSITY_CLAMP: f64 = 1e-3;

const LOGISTIC_TOL: f64 = 1e-8;
const LOGISTIC_MAX_ITER: usize = 100;
const SEPARATION_NORM: f64 = 1e4;

/// Dense row-major matrix, used for designs and per-observation scores.
#[derive(Debug, Clone, PartialEq)]
pub struct RowMatrix {
    ncols: usize,
    data: Vec<f64>,
}

impl RowMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            ncols,
            data: vec![0.0; nrows * ncols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let ncols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * ncols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != ncols {
                return Err(FqteError::DimensionMismatch(format!(
                    "row {i} has {} columns, expected {ncols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self { ncols, data })
    }

    pub fn nrows(&self) -> usize {
        self.data.len().checked_div(self.ncols).unwrap_or(0)
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.ncols.max(1))
    }

    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.ncols, "row width");
        self.data.extend_from_slice(row);
    }

    /// Column means in index order.
    pub fn column_means(&self) -> DVector<f64> {
        let n = self.nrows() as f64;
        let mut out = DVector::zeros(self.ncols);
        for r in self.rows() {
            for (o, v) in out.iter_mut().zip(r) {
                *o += v;
            }
        }
        out / n
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.nrows(), self.ncols, &self.data)
    }
}

type Transform = dyn Fn(&[f64], Option<&[f64]>, &mut Vec<f64>) + Send + Sync;

/// Maps a record's covariates to a model design vector.
#[derive(Clone)]
pub struct FeatureMap {
    name: String,
    uses_s: bool,
    transform: Arc<Transform>,
}

impl fmt::Debug for FeatureMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FeatureMap")
            .field("name", &self.name)
            .field("uses_s", &self.uses_s)
            .finish()
    }
}

impl FeatureMap {
    /// `(1, x, s)` or `(x, s)` without intercept.
    pub fn full(intercept: bool) -> Self {
        Self::custom(
            if intercept {
                "full"
            } else {
                "full-no-intercept"
            },
            true,
            move |x, s, out| {
                if intercept {
                    out.push(1.0);
                }
                out.extend_from_slice(x);
                out.extend_from_slice(s.unwrap_or(&[]));
            },
        )
    }

    /// `(1, x)`: the confounded working models only see commonly observed covariates.
    pub fn x_only(intercept: bool) -> Self {
        Self::custom(
            if intercept {
                "x-only"
            } else {
                "x-only-no-intercept"
            },
            false,
            move |x, _, out| {
                if intercept {
                    out.push(1.0);
                }
                out.extend_from_slice(x);
            },
        )
    }

    pub fn custom<F>(name: impl Into<String>, uses_s: bool, transform: F) -> Self
    where
        F: Fn(&[f64], Option<&[f64]>, &mut Vec<f64>) + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            uses_s,
            transform: Arc::new(transform),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn uses_s(&self) -> bool {
        self.uses_s
    }

    pub fn design_row(&self, record: &Record) -> Result<Vec<f64>> {
        let s = record.s.as_deref();
        if self.uses_s && s.is_none() {
            return Err(FqteError::InvalidDataset(format!(
                "feature map '{}' needs detailed covariates the record does not carry",
                self.name
            )));
        }
        let mut out = Vec::with_capacity(1 + record.x.len() + s.map_or(0, <[f64]>::len));
        (self.transform)(&record.x, s, &mut out);
        Ok(out)
    }

    pub fn design<'a>(&self, records: impl IntoIterator<Item = &'a Record>) -> Result<RowMatrix> {
        let mut out: Option<RowMatrix> = None;
        for r in records {
            let row = self.design_row(r)?;
            match out.as_mut() {
                Some(m) => {
                    if row.len() != m.ncols() {
                        return Err(FqteError::DimensionMismatch(format!(
                            "feature map '{}' produced rows of varying width",
                            self.name
                        )));
                    }
                    m.push_row(&row)
                }
                None => {
                    let mut m = RowMatrix::zeros(0, row.len());
                    m.push_row(&row);
                    out = Some(m);
                }
            }
        }
        out.ok_or_else(|| FqteError::InvalidDataset("no records to build a design from".into()))
    }
}

#[derive(Debug, Clone)]
pub struct LogisticFit {
    pub alpha: DVector<f64>,
    /// Per-observation scores `h_i = (t_i − e_i)·d_i`.
    pub scores: RowMatrix,
    /// `Σ_α = (1/n) Σ h_i h_iᵀ`.
    pub fisher: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl LogisticFit {
    /// Same fit with a replaced coefficient vector; scores are left as fitted.
    pub fn with_alpha(&self, alpha: DVector<f64>) -> Self {
        Self {
            alpha,
            ..self.clone()
        }
    }
}

fn log_likelihood(design: &RowMatrix, labels: &[u8], alpha: &[f64]) -> f64 {
    design
        .rows()
        .zip(labels)
        .map(|(d, &t)| {
            let u = dot(d, alpha);
            // log(1 + e^u), computed without overflow
            let softplus = if u > 0.0 {
                u + (-u).exp().ln_1p()
            } else {
                u.exp().ln_1p()
            };
            f64::from(t) * u - softplus
        })
        .sum()
}

/// Logistic regression by Newton iterations with step-halving.
pub fn fit_logistic(design: &RowMatrix, labels: &[u8]) -> Result<LogisticFit> {
    let n = design.nrows();
    let p = design.ncols();
    if n != labels.len() {
        return Err(FqteError::DimensionMismatch(format!(
            "design has {n} rows, labels have {}",
            labels.len()
        )));
    }
    if labels.iter().all(|&t| t == labels[0]) {
        return Err(FqteError::InvalidDataset(
            "logistic labels are all equal".into(),
        ));
    }
    let nf = n as f64;
    let mut alpha = vec![0.0; p];
    let mut ll = log_likelihood(design, labels, &alpha);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < LOGISTIC_MAX_ITER {
        let mut grad = DVector::<f64>::zeros(p);
        let mut info = DMatrix::<f64>::zeros(p, p);
        for (d, &t) in design.rows().zip(labels) {
            let e = logistic(dot(d, &alpha));
            let r = f64::from(t) - e;
            let w = e * (1.0 - e);
            for j in 0..p {
                grad[j] += r * d[j];
                for k in 0..=j {
                    info[(j, k)] += w * d[j] * d[k];
                }
            }
        }
        grad /= nf;
        info /= nf;
        if grad.amax() < LOGISTIC_TOL {
            converged = true;
            let fitted_exactly = design
                .rows()
                .zip(labels)
                .all(|(d, &t)| (f64::from(t) - logistic(dot(d, &alpha))).abs() < 1e-6);
            if fitted_exactly {
                let norm = alpha.iter().map(|a| a * a).sum::<f64>().sqrt();
                return Err(FqteError::Separation { norm });
            }
            break;
        }
        for j in 0..p {
            for k in 0..j {
                info[(k, j)] = info[(j, k)];
            }
        }
        let step = info
            .clone()
            .cholesky()
            .map(|c| c.solve(&grad))
            .ok_or(FqteError::Singular {
                what: "logistic information matrix",
                condition: condition_estimate(&info),
            })?;
        iterations += 1;

        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = alpha
                .iter()
                .zip(step.iter())
                .map(|(a, s)| a + scale * s)
                .collect();
            let trial_ll = log_likelihood(design, labels, &trial);
            if trial_ll >= ll - 1e-12 * ll.abs().max(1.0) {
                alpha = trial;
                ll = trial_ll;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        let norm = alpha.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > SEPARATION_NORM {
            return Err(FqteError::Separation { norm });
        }
        if !accepted {
            break;
        }
    }
    if !converged {
        log::warn!("logistic fit stopped after {iterations} iterations without reaching tolerance");
    }

    let mut scores = RowMatrix::zeros(n, p);
    let mut fisher = DMatrix::<f64>::zeros(p, p);
    for (i, (d, &t)) in design.rows().zip(labels).enumerate() {
        let e = logistic(dot(d, &alpha));
        let r = f64::from(t) - e;
        let h = scores.row_mut(i);
        for j in 0..p {
            h[j] = r * d[j];
        }
        for j in 0..p {
            for k in 0..p {
                fisher[(j, k)] += h[j] * h[k];
            }
        }
    }
    fisher /= nf;

    Ok(LogisticFit {
        alpha: DVector::from_vec(alpha),
        scores,
        fisher,
        converged,
        iterations,
    })
}

/// `e = logistic(αᵀd)`.
pub fn propensity(fit: &LogisticFit, design_row: &[f64]) -> f64 {
    logistic(dot(design_row, fit.alpha.as_slice()))
}

/// `∂e/∂α = e(1 − e)·d`.
pub fn propensity_grad(fit: &LogisticFit, design_row: &[f64]) -> DVector<f64> {
    let e = propensity(fit, design_row);
    DVector::from_iterator(
        design_row.len(),
        design_row.iter().map(|d| e * (1.0 - e) * d),
    )
}

#[derive(Debug, Clone)]
pub struct NormalLinearFit {
    pub beta: DVector<f64>,
    pub sigma: f64,
    /// Per-observation scores for `θ = (β, σ)` on the fitted rows.
    pub scores: RowMatrix,
    /// Mean over the fitted rows of `∂L/∂θᵀ`.
    pub hessian: DMatrix<f64>,
    pub arm: u8,
}

impl NormalLinearFit {
    pub fn mean(&self, design_row: &[f64]) -> f64 {
        dot(design_row, self.beta.as_slice())
    }

    /// Dimension of `θ = (β, σ)`.
    pub fn dim(&self) -> usize {
        self.beta.len() + 1
    }

    /// Same fit with replaced `(β, σ)`; scores and Hessian are left as fitted.
    pub fn with_params(&self, beta: DVector<f64>, sigma: f64) -> Self {
        Self {
            beta,
            sigma,
            ..self.clone()
        }
    }
}

/// Maximum likelihood for `y = βᵀd + σε`: least squares for β, RSS/m for σ².
pub fn fit_normal_linear(design: &RowMatrix, outcomes: &[f64], arm: u8) -> Result<NormalLinearFit> {
    let m = design.nrows();
    let p = design.ncols();
    if m != outcomes.len() {
        return Err(FqteError::DimensionMismatch(format!(
            "design has {m} rows, outcomes have {}",
            outcomes.len()
        )));
    }
    if m < p + 1 {
        return Err(FqteError::RankDeficient("outcome model (too few rows)"));
    }
    let x = design.to_dmatrix();
    let qr = x.qr();
    let r = qr.r();
    let rmax = r.diagonal().amax();
    if rmax == 0.0 || r.diagonal().iter().any(|d| d.abs() <= 1e-10 * rmax) {
        return Err(FqteError::RankDeficient("outcome model"));
    }
    let qty = qr.q().transpose() * DVector::from_column_slice(outcomes);
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or(FqteError::RankDeficient("outcome model"))?;

    let resid: Vec<f64> = design
        .rows()
        .zip(outcomes)
        .map(|(d, y)| y - dot(d, beta.as_slice()))
        .collect();
    let rss: f64 = resid.iter().map(|r| r * r).sum();
    let sigma = (rss / m as f64).sqrt();
    let scale = outcomes.iter().fold(1.0f64, |a, y| a.max(y.abs()));
    if sigma <= 1e-12 * scale {
        return Err(FqteError::DegenerateOutcome);
    }

    let k = p + 1;
    let s2 = sigma * sigma;
    let s3 = s2 * sigma;
    let s4 = s2 * s2;
    let mut scores = RowMatrix::zeros(m, k);
    let mut hessian = DMatrix::<f64>::zeros(k, k);
    for (i, (d, &r)) in design.rows().zip(&resid).enumerate() {
        let sc = scores.row_mut(i);
        for j in 0..p {
            sc[j] = r * d[j] / s2;
        }
        sc[p] = -1.0 / sigma + r * r / s3;
        for j in 0..p {
            for l in 0..p {
                hessian[(j, l)] -= d[j] * d[l] / s2;
            }
            let cross = -2.0 * r * d[j] / s3;
            hessian[(j, p)] += cross;
            hessian[(p, j)] += cross;
        }
        hessian[(p, p)] += 1.0 / s2 - 3.0 * r * r / s4;
    }
    hessian /= m as f64;

    Ok(NormalLinearFit {
        beta,
        sigma,
        scores,
        hessian,
        arm,
    })
}

/// `G(y | d; θ) = Φ((y − βᵀd)/σ)`.
pub fn conditional_cdf(fit: &NormalLinearFit, y: f64, design_row: &[f64]) -> f64 {
    norm_cdf((y - fit.mean(design_row)) / fit.sigma)
}

/// `∂G/∂θ` with `θ = (β, σ)`: `(−φ(z)/σ·d, −φ(z)·z/σ)`.
pub fn conditional_cdf_grad(fit: &NormalLinearFit, y: f64, design_row: &[f64]) -> DVector<f64> {
    let z = (y - fit.mean(design_row)) / fit.sigma;
    let dens = norm_pdf(z) / fit.sigma;
    let p = design_row.len();
    let mut g = DVector::zeros(p + 1);
    for j in 0..p {
        g[j] = -dens * design_row[j];
    }
    g[p] = -dens * z;
    g
}

/// Ratio of extreme absolute eigenvalues of a symmetric matrix.
pub fn condition_estimate(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigenvalues();
    let max = eig.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let min = eig.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}
