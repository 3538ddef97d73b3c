//! Calibration vector linking the validation sample to pooled-sample
//! summaries through the confounded estimating functions.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::data::{FusedDataset, QuantileSpec};
use crate::drq::{solve_prepared, ContextPair, DrQuantileResult};
use crate::error::{FqteError, Result};
use crate::models::RowMatrix;
use crate::numeric::CompensatedSum;

#[derive(Debug, Clone)]
pub struct CalibrationResult {
    /// Length `2d`: arm-1 block then arm-0 block, each ordered as `p_cal`.
    pub c_hat: DVector<f64>,
    /// `n × 2d` values of `φ` on the validation rows.
    pub phi_validation: RowMatrix,
    /// `N × 2d` values of `φ` on all rows; the first `n` rows equal `phi_validation`.
    pub phi_entire: RowMatrix,
    /// Pseudo-quantiles in the same block order as `c_hat`.
    pub conf_quantiles: Vec<DrQuantileResult>,
}

impl CalibrationResult {
    pub fn dim(&self) -> usize {
        self.c_hat.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSummary {
    pub c_hat: Vec<f64>,
    pub conf_quantiles: Vec<f64>,
}

impl From<&CalibrationResult> for CalibrationSummary {
    fn from(c: &CalibrationResult) -> Self {
        Self {
            c_hat: c.c_hat.iter().copied().collect(),
            conf_quantiles: c.conf_quantiles.iter().map(|q| q.q_hat).collect(),
        }
    }
}

/// Solves the pseudo-quantiles on the pooled sample and averages the
/// confounded estimating functions over the validation rows.
///
/// `conf` must be fitted on the pooled sample with X-only features. The
/// values of `φ` on validation rows reuse the pooled estimates, including the
/// pooled weight normalization.
pub fn compute_calibration(
    ds: &FusedDataset,
    spec: &QuantileSpec,
    conf: &ContextPair,
) -> Result<CalibrationResult> {
    if conf.treated.uses_s() || conf.control.uses_s() {
        return Err(FqteError::Config(
            "calibration contexts must use x-only features".into(),
        ));
    }
    let n = ds.n();
    let big_n = ds.big_n();
    let d = spec.d();
    let cols = 2 * d;
    let mut phi_entire = RowMatrix::zeros(big_n, cols);
    let mut conf_quantiles = Vec::with_capacity(cols);

    for (block, arm) in [1u8, 0].into_iter().enumerate() {
        let ctx = conf.get(arm);
        let pooled = ctx.prepare(ds.entire())?;
        for (k, &level) in spec.p_cal.iter().enumerate() {
            let col = block * d + k;
            let solved = solve_prepared(&pooled, level)?;
            for i in 0..big_n {
                phi_entire.row_mut(i)[col] = pooled.value(i, solved.q_hat, level);
            }
            conf_quantiles.push(solved);
        }
    }

    let mut phi_validation = RowMatrix::zeros(n, cols);
    for i in 0..n {
        phi_validation.row_mut(i).copy_from_slice(phi_entire.row(i));
    }
    let c_hat = compensated_column_means(&phi_validation);
    Ok(CalibrationResult {
        c_hat,
        phi_validation,
        phi_entire,
        conf_quantiles,
    })
}

/// Column means with index-ascending compensated summation.
pub fn compensated_column_means(m: &RowMatrix) -> DVector<f64> {
    let mut sums = vec![CompensatedSum::new(); m.ncols()];
    for row in m.rows() {
        for (acc, v) in sums.iter_mut().zip(row) {
            acc.add(*v);
        }
    }
    let n = m.nrows() as f64;
    DVector::from_iterator(m.ncols(), sums.iter().map(|s| s.total() / n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::FeatureMap;
    use crate::sim::{generate, DgpConfig};

    fn conf_pair(ds: &FusedDataset) -> ContextPair {
        ContextPair::fit(
            ds.entire(),
            &FeatureMap::x_only(true),
            &FeatureMap::x_only(true),
            true,
        )
        .unwrap()
    }

    #[test]
    fn shape_and_block_order() {
        let ds = generate(&DgpConfig::new(300, 900, 11)).dataset;
        let spec = QuantileSpec::new(0.5, Some(vec![0.25, 0.5, 0.75])).unwrap();
        let cal = compute_calibration(&ds, &spec, &conf_pair(&ds)).unwrap();
        assert_eq!(cal.dim(), 6);
        assert_eq!(cal.phi_entire.nrows(), 900);
        assert_eq!(cal.phi_validation.nrows(), 300);
        let arms: Vec<u8> = cal.conf_quantiles.iter().map(|q| q.arm).collect();
        let levels: Vec<f64> = cal.conf_quantiles.iter().map(|q| q.level).collect();
        assert_eq!(arms, vec![1, 1, 1, 0, 0, 0]);
        assert_eq!(levels, vec![0.25, 0.5, 0.75, 0.25, 0.5, 0.75]);
        // pseudo-quantiles increase with the level within each arm
        assert!(cal.conf_quantiles[0].q_hat < cal.conf_quantiles[2].q_hat);
    }

    #[test]
    fn c_hat_is_exact_column_mean() {
        let ds = generate(&DgpConfig::new(200, 800, 12)).dataset;
        let spec = QuantileSpec::new(0.5, None).unwrap();
        let cal = compute_calibration(&ds, &spec, &conf_pair(&ds)).unwrap();
        let again = compensated_column_means(&cal.phi_validation);
        assert_eq!(cal.c_hat, again);
        // pooled column means vanish up to the solver residual
        let pooled = compensated_column_means(&cal.phi_entire);
        for (mean, q) in pooled.iter().zip(&cal.conf_quantiles) {
            assert!((mean - q.residual).abs() < 1e-12);
        }
    }

    #[test]
    fn same_sample_identity() {
        // validation rows evaluated at their own pooled solution: each entry is
        // bounded by the largest single jump
        let ds = generate(&DgpConfig::new(400, 401, 13)).dataset;
        let spec = QuantileSpec::new(0.5, Some(vec![0.3, 0.6])).unwrap();
        let pair = conf_pair(&ds);
        let cal = compute_calibration(&ds, &spec, &pair).unwrap();
        let pooled = compensated_column_means(&cal.phi_entire);
        for (col, mean) in pooled.iter().enumerate() {
            let arm = if col < 2 { 1 } else { 0 };
            let prepared = pair.get(arm).prepare(ds.entire()).unwrap();
            let max_w = prepared.weight.iter().fold(0.0f64, |a, &w| a.max(w));
            assert!(mean.abs() <= max_w / ds.big_n() as f64);
        }
    }

    #[test]
    fn invariant_to_validation_permutation() {
        let ds = generate(&DgpConfig::new(150, 600, 14)).dataset;
        let spec = QuantileSpec::new(0.5, None).unwrap();
        let cal = compute_calibration(&ds, &spec, &conf_pair(&ds)).unwrap();

        let mut val = ds.validation().to_vec();
        val.reverse();
        let permuted = FusedDataset::new(val, ds.auxiliary().to_vec()).unwrap();
        let cal2 = compute_calibration(&permuted, &spec, &conf_pair(&permuted)).unwrap();
        for (a, b) in cal.c_hat.iter().zip(cal2.c_hat.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
