//! End-to-end estimation: fits, quantiles, densities, influence functions,
//! calibration, covariances, projection and optional sensitivity analysis.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::calib::{compute_calibration, CalibrationResult};
use crate::data::{FusedDataset, QuantileSpec};
use crate::drq::{
    density_from_prepared, influence_from_prepared, solve_prepared, ContextPair, DensityEstimate,
    DrQuantileResult, InfluenceSet,
};
use crate::error::Result;
use crate::fuse::{
    estimate_covariances, fuse_estimate, sensitivity_curve, FqteResult, SensitivityPoint,
};
use crate::models::FeatureMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateOptions {
    /// Confidence level of the Wald intervals.
    pub confidence: f64,
    pub normalize_weights: bool,
    /// Include an intercept column in every working model.
    pub intercept: bool,
    /// Center the cross moment used for `ϱ̂`.
    pub center_rho: bool,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            confidence: 0.95,
            normalize_weights: true,
            intercept: true,
            center_rho: false,
        }
    }
}

/// Validation-only DR estimate of `Δ_p` with its influence functions.
#[derive(Debug, Clone)]
pub struct InitialEstimate {
    pub treated: DrQuantileResult,
    pub control: DrQuantileResult,
    pub delta_v: f64,
    pub density_treated: DensityEstimate,
    pub density_control: DensityEstimate,
    pub psi_treated: InfluenceSet,
    pub psi_control: InfluenceSet,
}

pub fn initial_estimate(
    ds: &FusedDataset,
    validation: &ContextPair,
    level: f64,
) -> Result<InitialEstimate> {
    let records = ds.validation();
    let mut solved = Vec::with_capacity(2);
    for arm in [1u8, 0] {
        let ctx = validation.get(arm);
        let prepared = ctx.prepare(records)?;
        let q = solve_prepared(&prepared, level)?;
        let density = density_from_prepared(&prepared, q.q_hat)?;
        let psi = influence_from_prepared(ctx, &prepared, q.q_hat, level, &density)?;
        solved.push((q, density, psi));
    }
    let (control, density_control, psi_control) = solved.pop().expect("two arms");
    let (treated, density_treated, psi_treated) = solved.pop().expect("two arms");
    Ok(InitialEstimate {
        delta_v: treated.q_hat - control.q_hat,
        treated,
        control,
        density_treated,
        density_control,
        psi_treated,
        psi_control,
    })
}

/// Projects an initial estimate onto a calibration vector.
pub fn fuse_with_calibration(
    ds: &FusedDataset,
    initial: &InitialEstimate,
    calib: &CalibrationResult,
    options: &EstimateOptions,
) -> Result<FqteResult> {
    let cov = estimate_covariances(
        &initial.psi_treated,
        &initial.psi_control,
        calib,
        ds.nu(),
        options.center_rho,
    )?;
    fuse_estimate(
        initial.delta_v,
        &calib.c_hat,
        &cov,
        ds.n(),
        options.confidence,
    )
}

/// The JSON document written by the `estimate` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FqteReport {
    pub delta_p: f64,
    pub delta_v: f64,
    pub se: f64,
    pub se_v: f64,
    pub ci: (f64, f64),
    pub efficiency_gain: f64,
    pub c_hat: Vec<f64>,
    pub regularized: bool,
    pub p: f64,
    pub p_cal: Vec<f64>,
    pub n: usize,
    #[serde(rename = "N")]
    pub big_n: usize,
    pub confidence: f64,
    pub ci_v: (f64, f64),
    pub sigma_sq: f64,
    pub sigma_v_sq: f64,
    pub q_treated: f64,
    pub q_control: f64,
    pub conf_quantiles: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sensitivity: Vec<SensitivityPoint>,
}

/// Runs the full pipeline with `(x, s)` working models on the validation
/// sample and `x`-only models on the pooled sample.
pub fn estimate_fqte(
    ds: &FusedDataset,
    spec: &QuantileSpec,
    options: &EstimateOptions,
    delta_grid: &[DVector<f64>],
) -> Result<FqteReport> {
    let full = FeatureMap::full(options.intercept);
    let reduced = FeatureMap::x_only(options.intercept);
    let validation = ContextPair::fit(ds.validation(), &full, &full, options.normalize_weights)?;
    let confounded = ContextPair::fit(ds.entire(), &reduced, &reduced, options.normalize_weights)?;

    let initial = initial_estimate(ds, &validation, spec.p)?;
    let calib = compute_calibration(ds, spec, &confounded)?;
    let fused = fuse_with_calibration(ds, &initial, &calib, options)?;
    let sensitivity = sensitivity_curve(&fused, &calib.c_hat, delta_grid)?;

    Ok(FqteReport {
        delta_p: fused.delta_p,
        delta_v: fused.delta_v,
        se: fused.se,
        se_v: fused.se_v,
        ci: fused.ci,
        efficiency_gain: fused.efficiency_gain,
        c_hat: calib.c_hat.iter().copied().collect(),
        regularized: fused.regularized,
        p: spec.p,
        p_cal: spec.p_cal.clone(),
        n: ds.n(),
        big_n: ds.big_n(),
        confidence: options.confidence,
        ci_v: fused.ci_v,
        sigma_sq: fused.sigma_sq,
        sigma_v_sq: fused.sigma_v_sq,
        q_treated: initial.treated.q_hat,
        q_control: initial.control.q_hat,
        conf_quantiles: calib.conf_quantiles.iter().map(|q| q.q_hat).collect(),
        sensitivity,
    })
}
