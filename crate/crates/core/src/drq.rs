//! Doubly robust quantile estimation.
//!
//! For arm `t` the estimating function is
//!
//! ```text
//! Ψ_t(O; q) = w_t {I(Y ≤ q) − G_t(q | d)} + G_t(q | d) − p
//! ```
//!
//! with `w_1 = T/e` and `w_0 = (1 − T)/(1 − e)`. On the validation sample the
//! working models use `(X, S)`; on the pooled sample the same form with
//! X-only models gives the confounded function `φ_t`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Record;
use crate::error::{FqteError, Result};
use crate::models::{
    condition_estimate, conditional_cdf, conditional_cdf_grad, fit_logistic, fit_normal_linear,
    propensity, FeatureMap, LogisticFit, NormalLinearFit, RowMatrix, PROPENSITY_CLAMP,
};
use crate::numeric::{dot, norm_cdf, norm_pdf, CompensatedSum, INV_SQRT_2PI};

pub const MIN_DENSITY_SAMPLE: usize = 10;
pub const DENSITY_FLOOR: f64 = 1e-6;

/// Working models and weighting choices for one treatment arm.
#[derive(Debug, Clone)]
pub struct EstimatingContext {
    pub arm: u8,
    pub outcome_fit: NormalLinearFit,
    pub ps_fit: LogisticFit,
    pub outcome_features: FeatureMap,
    pub ps_features: FeatureMap,
    pub normalize_weights: bool,
}

impl EstimatingContext {
    pub fn new(
        arm: u8,
        outcome_fit: NormalLinearFit,
        ps_fit: LogisticFit,
        outcome_features: FeatureMap,
        ps_features: FeatureMap,
        normalize_weights: bool,
    ) -> Result<Self> {
        if outcome_fit.arm != arm {
            return Err(FqteError::Config(format!(
                "outcome model fitted on arm {} used for arm {arm}",
                outcome_fit.arm
            )));
        }
        if outcome_features.uses_s() != ps_features.uses_s() {
            return Err(FqteError::Config(
                "outcome and propensity feature maps must both use (x, s) or both use x only"
                    .into(),
            ));
        }
        Ok(Self {
            arm,
            outcome_fit,
            ps_fit,
            outcome_features,
            ps_features,
            normalize_weights,
        })
    }

    /// Whether the context works on the full covariate set.
    pub fn uses_s(&self) -> bool {
        self.outcome_features.uses_s()
    }

    /// Clamped propensity for a propensity design row.
    pub fn clamped_propensity(&self, ps_row: &[f64]) -> f64 {
        let e = propensity(&self.ps_fit, ps_row);
        e.clamp(PROPENSITY_CLAMP, 1.0 - PROPENSITY_CLAMP)
    }

    /// Unnormalized inverse probability weight of a record for this arm.
    pub fn raw_weight(&self, t: u8, e: f64) -> f64 {
        match (self.arm, t) {
            (1, 1) => 1.0 / e,
            (0, 0) => 1.0 / (1.0 - e),
            _ => 0.0,
        }
    }

    /// Evaluates working models on a sample. With `normalize_weights` the arm
    /// weights are rescaled to sum to the sample size.
    pub fn prepare(&self, records: &[Record]) -> Result<PreparedSample> {
        let mut prepared = self.prepare_with_scale(records, 1.0)?;
        if self.normalize_weights {
            let total: f64 = prepared.weight.iter().sum();
            if total <= 0.0 {
                return Err(FqteError::EmptyArm {
                    sample: "estimating",
                    arm: self.arm,
                });
            }
            let scale = prepared.len() as f64 / total;
            prepared.rescale_weights(scale);
        }
        Ok(prepared)
    }

    /// Same as [`prepare`](Self::prepare) with an externally fixed weight scale.
    pub fn prepare_with_scale(
        &self,
        records: &[Record],
        weight_scale: f64,
    ) -> Result<PreparedSample> {
        let or_design = self.outcome_features.design(records)?;
        let ps_design = self.ps_features.design(records)?;
        let m = records.len();
        let mut y = Vec::with_capacity(m);
        let mut t = Vec::with_capacity(m);
        let mut mean = Vec::with_capacity(m);
        let mut prop = Vec::with_capacity(m);
        let mut weight = Vec::with_capacity(m);
        let mut clamped = 0usize;
        for (i, r) in records.iter().enumerate() {
            let raw_e = propensity(&self.ps_fit, ps_design.row(i));
            let e = raw_e.clamp(PROPENSITY_CLAMP, 1.0 - PROPENSITY_CLAMP);
            if e != raw_e {
                clamped += 1;
            }
            y.push(r.y);
            t.push(r.t);
            mean.push(self.outcome_fit.mean(or_design.row(i)));
            prop.push(e);
            weight.push(self.raw_weight(r.t, e) * weight_scale);
        }
        if clamped > 0 {
            log::warn!(
                "{clamped} propensities clamped to [{PROPENSITY_CLAMP}, {}]",
                1.0 - PROPENSITY_CLAMP
            );
        }
        Ok(PreparedSample {
            arm: self.arm,
            y,
            t,
            mean,
            sigma: self.outcome_fit.sigma,
            propensity: prop,
            weight,
            weight_scale,
            or_design,
            ps_design,
        })
    }
}

/// Per-row quantities of one arm's estimating function on a fixed sample.
#[derive(Debug, Clone)]
pub struct PreparedSample {
    pub arm: u8,
    pub y: Vec<f64>,
    pub t: Vec<u8>,
    /// Outcome-model means `βᵀd_i`.
    pub mean: Vec<f64>,
    pub sigma: f64,
    /// Clamped propensities.
    pub propensity: Vec<f64>,
    /// Inverse probability weights (already scaled).
    pub weight: Vec<f64>,
    pub weight_scale: f64,
    pub or_design: RowMatrix,
    pub ps_design: RowMatrix,
}

impl PreparedSample {
    /// Builds a sample from explicit weights, means and scale. Designs are
    /// left as single intercept columns; only the solver path is usable.
    pub fn from_parts(
        arm: u8,
        y: Vec<f64>,
        t: Vec<u8>,
        mean: Vec<f64>,
        sigma: f64,
        weight: Vec<f64>,
    ) -> Self {
        let m = y.len();
        let ones = RowMatrix::from_rows(&vec![vec![1.0]; m]).expect("uniform rows");
        Self {
            arm,
            y,
            t,
            mean,
            sigma,
            propensity: vec![0.5; m],
            weight,
            weight_scale: 1.0,
            or_design: ones.clone(),
            ps_design: ones,
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    fn rescale_weights(&mut self, scale: f64) {
        for w in &mut self.weight {
            *w *= scale;
        }
        self.weight_scale *= scale;
    }

    #[inline]
    fn cdf(&self, i: usize, q: f64) -> f64 {
        norm_cdf((q - self.mean[i]) / self.sigma)
    }

    /// Estimating function of row `i` at `q`.
    pub fn value(&self, i: usize, q: f64, level: f64) -> f64 {
        let g = self.cdf(i, q);
        let ind = if self.y[i] <= q { 1.0 } else { 0.0 };
        self.weight[i] * (ind - g) + g - level
    }

    /// Mean estimating function `M(q)`, index-ascending compensated sum.
    pub fn mean_value(&self, q: f64, level: f64) -> f64 {
        let mut acc = CompensatedSum::new();
        for i in 0..self.len() {
            acc.add(self.value(i, q, level));
        }
        acc.total() / self.len() as f64
    }

    /// Smooth part `(1/m) Σ (1 − w_i) G_i(q)`.
    fn smooth_part(&self, q: f64) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.len() {
            acc += (1.0 - self.weight[i]) * self.cdf(i, q);
        }
        acc / self.len() as f64
    }
}

/// Estimating function for a single record without sample-level weight
/// normalization. Shared by [`psi_estimating_function`] and
/// [`phi_estimating_function`].
fn record_estimating_function(
    ctx: &EstimatingContext,
    record: &Record,
    q: f64,
    level: f64,
) -> Result<f64> {
    let or_row = ctx.outcome_features.design_row(record)?;
    let ps_row = ctx.ps_features.design_row(record)?;
    let e = ctx.clamped_propensity(&ps_row);
    let w = ctx.raw_weight(record.t, e);
    let g = conditional_cdf(&ctx.outcome_fit, q, &or_row);
    let ind = if record.y <= q { 1.0 } else { 0.0 };
    Ok(w * (ind - g) + g - level)
}

/// `Ψ_t` on a validation record, with a full-covariate context.
pub fn psi_estimating_function(
    ctx: &EstimatingContext,
    record: &Record,
    q: f64,
    level: f64,
) -> Result<f64> {
    if !ctx.uses_s() {
        return Err(FqteError::Config(
            "Ψ needs a context on (x, s) features".into(),
        ));
    }
    record_estimating_function(ctx, record, q, level)
}

/// `φ_t` on any record, with an X-only context.
pub fn phi_estimating_function(
    ctx: &EstimatingContext,
    record: &Record,
    q: f64,
    level: f64,
) -> Result<f64> {
    if ctx.uses_s() {
        return Err(FqteError::Config(
            "φ needs a context on x-only features".into(),
        ));
    }
    record_estimating_function(ctx, record, q, level)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMethod {
    Crossing,
    BisectionFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrQuantileResult {
    pub q_hat: f64,
    pub arm: u8,
    pub level: f64,
    /// `M(q_hat)`.
    pub residual: f64,
    pub bracket: (f64, f64),
    pub method: SolveMethod,
}

pub fn solve_dr_quantile(
    ctx: &EstimatingContext,
    records: &[Record],
    level: f64,
) -> Result<DrQuantileResult> {
    if records.is_empty() {
        return Err(FqteError::InvalidDataset("empty sample".into()));
    }
    for arm in [0u8, 1] {
        if !records.iter().any(|r| r.t == arm) {
            return Err(FqteError::EmptyArm {
                sample: "estimating",
                arm,
            });
        }
    }
    let prepared = ctx.prepare(records)?;
    solve_prepared(&prepared, level)
}

/// Smallest `q` with `M(q) ≥ 0` on `[min y − 1, max y + 1]`.
///
/// `M = A + S − p` where `A` is a nondecreasing step function jumping at the
/// outcomes of positively weighted rows and `S` is smooth with upward slope at
/// most `L`. From a point `c` with `M(c) < 0`, no point before the first jump
/// `u_k` with `M(c) + A(u_k) − A(c) + L(u_k − c) ≥ 0` can reach zero, so the
/// scan skips straight to it. Inside the segment that ends at `u_k` the smooth
/// part is assumed monotone and the crossing is found by bisection.
pub fn solve_prepared(sample: &PreparedSample, level: f64) -> Result<DrQuantileResult> {
    let m = sample.len() as f64;
    let (ymin, ymax) = sample
        .y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &y| {
            (a.min(y), b.max(y))
        });
    let lo = ymin - 1.0;
    let hi = ymax + 1.0;

    // jump points: unique outcomes of positively weighted rows
    let mut pts: Vec<(f64, f64)> = sample
        .y
        .iter()
        .zip(&sample.weight)
        .filter(|(_, &w)| w > 0.0)
        .map(|(&y, &w)| (y, w / m))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut knots: Vec<f64> = Vec::with_capacity(pts.len());
    let mut cum: Vec<f64> = Vec::with_capacity(pts.len());
    let mut acc = CompensatedSum::new();
    for (y, j) in pts {
        acc.add(j);
        if knots.last() == Some(&y) {
            *cum.last_mut().expect("non-empty") = acc.total();
        } else {
            knots.push(y);
            cum.push(acc.total());
        }
    }
    let k_total = knots.len();
    let step_at = |k: usize| if k == 0 { 0.0 } else { cum[k - 1] };

    let lipschitz = sample
        .weight
        .iter()
        .map(|w| (1.0 - w).max(0.0))
        .sum::<f64>()
        / m
        * INV_SQRT_2PI
        / sample.sigma;
    let m_at = |q: f64, steps: f64| steps + sample.smooth_part(q) - level;

    let bisect = |mut a: f64, mut b: f64, steps: f64| -> f64 {
        for _ in 0..200 {
            if b - a <= 1e-13 * b.abs().max(1.0) {
                break;
            }
            let mid = 0.5 * (a + b);
            if m_at(mid, steps) >= 0.0 {
                b = mid;
            } else {
                a = mid;
            }
        }
        b
    };

    let mut c = lo;
    let mut m_c = m_at(lo, 0.0);
    if m_c >= 0.0 {
        return Err(FqteError::NoRoot { low: lo, high: hi });
    }
    let mut a_c = 0.0;
    // index of the first knot strictly above c
    let mut k_next = 0usize;

    let finish = |q_hat: f64, bracket: (f64, f64), inside: bool| DrQuantileResult {
        q_hat,
        arm: sample.arm,
        level,
        residual: sample.mean_value(q_hat, level),
        bracket,
        method: if inside {
            SolveMethod::Crossing
        } else {
            SolveMethod::BisectionFallback
        },
    };

    loop {
        let bound = |k: usize| m_c + (cum[k] - a_c) + lipschitz * (knots[k] - c);
        // first k >= k_next with bound(k) >= 0 (bound is nondecreasing in k)
        let (mut left, mut right) = (k_next, k_total);
        while left < right {
            let mid = (left + right) / 2;
            if bound(mid) >= 0.0 {
                right = mid;
            } else {
                left = mid + 1;
            }
        }
        let k = left;
        if k == k_total {
            // final segment up to hi
            let steps = step_at(k_total);
            if m_c + (steps - a_c) + lipschitz * (hi - c) < 0.0 || m_at(hi, steps) < 0.0 {
                return Err(FqteError::NoRoot { low: lo, high: hi });
            }
            let start = if k_total == 0 {
                c
            } else {
                c.max(knots[k_total - 1])
            };
            let q = bisect(start, hi, steps);
            return Ok(finish(q, (start, hi), false));
        }
        let before = step_at(k);
        let left_limit = m_at(knots[k], before);
        if left_limit >= 0.0 {
            let start = if k == 0 { c } else { c.max(knots[k - 1]) };
            let q = bisect(start, knots[k], before);
            return Ok(finish(q, (start, knots[k]), k > 0));
        }
        let at_knot = left_limit + (cum[k] - before);
        if at_knot >= 0.0 {
            let start = if k == 0 { lo } else { knots[k - 1] };
            return Ok(finish(knots[k], (start, knots[k]), true));
        }
        c = knots[k];
        m_c = at_knot;
        a_c = cum[k];
        k_next = k + 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub arm: u8,
    pub value: f64,
    pub bandwidth: f64,
    pub kernel: &'static str,
}

/// Smallest value whose cumulative normalized weight reaches `p`.
pub fn weighted_quantile(sorted: &[(f64, f64)], total: f64, p: f64) -> f64 {
    let mut cum = 0.0;
    for &(y, w) in sorted {
        cum += w;
        if cum >= p * total {
            return y;
        }
    }
    sorted.last().map_or(f64::NAN, |v| v.0)
}

/// Silverman's rule `0.9·min(sd, IQR/1.34)·n_eff^(−1/5)` with weighted
/// moments, weighted quartiles and Kish effective size. Reduces to the
/// textbook rule for equal weights.
pub fn silverman_bandwidth(ys: &[f64], ws: &[f64]) -> f64 {
    let total: f64 = ws.iter().sum();
    let total_sq: f64 = ws.iter().map(|w| w * w).sum();
    let n_eff = total * total / total_sq;
    let mean = ys.iter().zip(ws).map(|(y, w)| y * w).sum::<f64>() / total;
    let var = ys
        .iter()
        .zip(ws)
        .map(|(y, w)| w * (y - mean).powi(2))
        .sum::<f64>()
        / total;
    let sd = (var * n_eff / (n_eff - 1.0)).sqrt();
    let mut sorted: Vec<(f64, f64)> = ys.iter().copied().zip(ws.iter().copied()).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let iqr = weighted_quantile(&sorted, total, 0.75) - weighted_quantile(&sorted, total, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * n_eff.powf(-0.2)
}

/// Self-normalized weighted Gaussian KDE at `q` with a given bandwidth.
pub fn weighted_kde(ys: &[f64], ws: &[f64], q: f64, bandwidth: f64) -> f64 {
    let total: f64 = ws.iter().sum();
    ys.iter()
        .zip(ws)
        .map(|(y, w)| w * norm_pdf((q - y) / bandwidth))
        .sum::<f64>()
        / (total * bandwidth)
}

/// Inverse-probability-weighted Gaussian KDE of the arm outcomes at `q`,
/// an estimate of the marginal density of the potential outcome.
pub fn estimate_density(
    records: &[Record],
    ctx: &EstimatingContext,
    q: f64,
) -> Result<DensityEstimate> {
    let prepared = ctx.prepare_with_scale(records, 1.0)?;
    density_from_prepared(&prepared, q)
}

pub fn density_from_prepared(sample: &PreparedSample, q: f64) -> Result<DensityEstimate> {
    let (ys, ws): (Vec<f64>, Vec<f64>) = sample
        .y
        .iter()
        .zip(&sample.weight)
        .zip(&sample.t)
        .filter(|(_, &t)| t == sample.arm)
        .map(|((&y, &w), _)| (y, w))
        .unzip();
    density_from_weighted(sample.arm, &ys, &ws, q)
}

pub fn density_from_weighted(arm: u8, ys: &[f64], ws: &[f64], q: f64) -> Result<DensityEstimate> {
    if ys.len() < MIN_DENSITY_SAMPLE {
        return Err(FqteError::SampleTooSmall {
            arm,
            size: ys.len(),
            min: MIN_DENSITY_SAMPLE,
        });
    }
    let bandwidth = silverman_bandwidth(ys, ws);
    if bandwidth.is_nan() || bandwidth <= 0.0 {
        return Err(FqteError::InvalidDataset(format!(
            "arm {arm} outcomes have zero spread; density bandwidth undefined"
        )));
    }
    let mut value = weighted_kde(ys, ws, q, bandwidth);
    if value < DENSITY_FLOOR {
        log::warn!("density estimate {value:.3e} for arm {arm} floored at {DENSITY_FLOOR}");
        value = DENSITY_FLOOR;
    }
    Ok(DensityEstimate {
        arm,
        value,
        bandwidth,
        kernel: "gaussian",
    })
}

/// Analytic derivatives of the mean estimating function at a fixed `q`:
/// `∂M/∂θ = mean[(1 − w)·∂G/∂θ]` and `∂M/∂α = −H_t`.
#[derive(Debug, Clone)]
pub struct EstimatingGradients {
    pub d_theta: DVector<f64>,
    pub d_alpha: DVector<f64>,
}

pub fn estimating_gradients(
    ctx: &EstimatingContext,
    sample: &PreparedSample,
    q: f64,
) -> EstimatingGradients {
    let m = sample.len() as f64;
    let k = ctx.outcome_fit.dim();
    let pa = ctx.ps_fit.alpha.len();
    let mut d_theta = DVector::zeros(k);
    let mut d_alpha = DVector::zeros(pa);
    for i in 0..sample.len() {
        let or_row = sample.or_design.row(i);
        let ps_row = sample.ps_design.row(i);
        let w = sample.weight[i];
        let grad = conditional_cdf_grad(&ctx.outcome_fit, q, or_row);
        d_theta.axpy(1.0 - w, &grad, 1.0);

        let e = sample.propensity[i];
        let resid = if sample.y[i] <= q { 1.0 } else { 0.0 } - sample.cdf(i, q);
        // ∂w/∂α times the residual, with ė = e(1 − e)·d
        let factor = match (sample.arm, sample.t[i]) {
            (1, 1) => -(1.0 - e) / e,
            (0, 0) => e / (1.0 - e),
            _ => 0.0,
        } * sample.weight_scale;
        if factor != 0.0 {
            for j in 0..pa {
                d_alpha[j] += factor * resid * ps_row[j];
            }
        }
    }
    EstimatingGradients {
        d_theta: d_theta / m,
        d_alpha: d_alpha / m,
    }
}

/// Per-observation influence values `ψ_{t,i}` of the DR quantile estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceSet {
    pub arm: u8,
    pub level: f64,
    pub psi: Vec<f64>,
}

fn solve_linear(
    matrix: &DMatrix<f64>,
    rhs: &DVector<f64>,
    what: &'static str,
) -> Result<DVector<f64>> {
    let singular = || FqteError::Singular {
        what,
        condition: condition_estimate(matrix),
    };
    let cond = condition_estimate(matrix);
    if !cond.is_finite() || cond > 1e14 {
        return Err(singular());
    }
    matrix.clone().lu().solve(rhs).ok_or_else(singular)
}

/// Influence function of `q̂_t` with outcome-model and propensity-model
/// corrections, all expectations replaced by sample means at the estimates.
pub fn influence_psi(
    ctx: &EstimatingContext,
    records: &[Record],
    q_hat: f64,
    level: f64,
    density: &DensityEstimate,
) -> Result<InfluenceSet> {
    let sample = ctx.prepare(records)?;
    influence_from_prepared(ctx, &sample, q_hat, level, density)
}

pub fn influence_from_prepared(
    ctx: &EstimatingContext,
    sample: &PreparedSample,
    q_hat: f64,
    level: f64,
    density: &DensityEstimate,
) -> Result<InfluenceSet> {
    let m = sample.len();
    let mf = m as f64;
    let fit = &ctx.outcome_fit;
    let p_or = fit.beta.len();
    let k = p_or + 1;
    let p_ps = ctx.ps_fit.alpha.len();
    let sigma = fit.sigma;
    let (s2, s3, s4) = (sigma * sigma, sigma.powi(3), sigma.powi(4));

    // outcome scores (zero off-arm) and their mean Jacobian over the whole sample
    let mut or_scores = RowMatrix::zeros(m, k);
    let mut or_jac = DMatrix::<f64>::zeros(k, k);
    // propensity scores and Σ_α
    let mut ps_scores = RowMatrix::zeros(m, p_ps);
    let mut sigma_alpha = DMatrix::<f64>::zeros(p_ps, p_ps);
    for i in 0..m {
        let d = sample.or_design.row(i);
        if sample.t[i] == sample.arm {
            let r = sample.y[i] - sample.mean[i];
            let sc = or_scores.row_mut(i);
            for j in 0..p_or {
                sc[j] = r * d[j] / s2;
            }
            sc[p_or] = -1.0 / sigma + r * r / s3;
            for j in 0..p_or {
                for l in 0..p_or {
                    or_jac[(j, l)] -= d[j] * d[l] / s2;
                }
                let cross = -2.0 * r * d[j] / s3;
                or_jac[(j, p_or)] += cross;
                or_jac[(p_or, j)] += cross;
            }
            or_jac[(p_or, p_or)] += 1.0 / s2 - 3.0 * r * r / s4;
        }
        let a = sample.ps_design.row(i);
        let e = propensity(&ctx.ps_fit, a);
        let resid = f64::from(sample.t[i]) - e;
        let h = ps_scores.row_mut(i);
        for j in 0..p_ps {
            h[j] = resid * a[j];
        }
        for j in 0..p_ps {
            for l in 0..p_ps {
                sigma_alpha[(j, l)] += h[j] * h[l];
            }
        }
    }
    or_jac /= mf;
    sigma_alpha /= mf;

    let grads = estimating_gradients(ctx, sample, q_hat);
    // row vectors v_θ = ∂M/∂θ · (E L̇)^{-1} and v_α = ∂M/∂α · Σ_α^{-1}
    let v_theta = solve_linear(
        &or_jac.transpose(),
        &grads.d_theta,
        "outcome-model Jacobian E L̇",
    )?;
    let v_alpha = solve_linear(&sigma_alpha, &grads.d_alpha, "propensity information Σ_α")?;

    let inv_f = 1.0 / density.value;
    let psi = (0..m)
        .map(|i| {
            let core = sample.value(i, q_hat, level);
            let theta_term = dot(v_theta.as_slice(), or_scores.row(i));
            let alpha_term = dot(v_alpha.as_slice(), ps_scores.row(i));
            -inv_f * (core - theta_term + alpha_term)
        })
        .collect();
    Ok(InfluenceSet {
        arm: sample.arm,
        level,
        psi,
    })
}

/// Both arms' contexts built from one propensity fit.
#[derive(Debug, Clone)]
pub struct ContextPair {
    pub treated: EstimatingContext,
    pub control: EstimatingContext,
}

impl ContextPair {
    pub fn get(&self, arm: u8) -> &EstimatingContext {
        if arm == 1 {
            &self.treated
        } else {
            &self.control
        }
    }

    /// Fits the propensity model on all records and an outcome model per arm.
    pub fn fit(
        records: &[Record],
        outcome_features: &FeatureMap,
        ps_features: &FeatureMap,
        normalize_weights: bool,
    ) -> Result<Self> {
        let ps_design = ps_features.design(records)?;
        let labels: Vec<u8> = records.iter().map(|r| r.t).collect();
        let ps_fit = fit_logistic(&ps_design, &labels)?;
        let mut ctxs = Vec::with_capacity(2);
        for arm in [1u8, 0] {
            let arm_records: Vec<&Record> = records.iter().filter(|r| r.t == arm).collect();
            let design = outcome_features.design(arm_records.iter().copied())?;
            let y: Vec<f64> = arm_records.iter().map(|r| r.y).collect();
            let outcome_fit = fit_normal_linear(&design, &y, arm)?;
            ctxs.push(EstimatingContext::new(
                arm,
                outcome_fit,
                ps_fit.clone(),
                outcome_features.clone(),
                ps_features.clone(),
                normalize_weights,
            )?);
        }
        let control = ctxs.pop().expect("two contexts");
        let treated = ctxs.pop().expect("two contexts");
        Ok(Self { treated, control })
    }
}
