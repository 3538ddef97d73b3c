//! Covariance estimation, projection onto the calibration vector, variance,
//! Wald intervals and δ-sensitivity analysis.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::calib::CalibrationResult;
use crate::drq::InfluenceSet;
use crate::error::{FqteError, Result};
use crate::models::RowMatrix;
use crate::numeric::norm_quantile;

/// Relative eigenvalue cutoff for the pseudo-solve.
pub const EIGEN_TRUNCATION: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimates {
    pub rho_hat: DVector<f64>,
    pub sigma_ep_hat: DMatrix<f64>,
    pub sigma_v_sq_hat: f64,
    pub nu_n: f64,
}

/// Moment estimators of `ϱ`, `Σ_ep` and `σ²_V`.
///
/// `psi_diff[i] = ψ̂_{1,i} − ψ̂_{0,i}` on the validation rows; `phi_validation`
/// and `phi_entire` hold `(φ̂_1ᵀ, φ̂_0ᵀ)` on validation and all rows. With
/// `center_rho`, the cross moment for `ϱ̂` is taken about the sample means.
pub fn covariance_moments(
    psi_diff: &[f64],
    phi_validation: &RowMatrix,
    phi_entire: &RowMatrix,
    nu_n: f64,
    center_rho: bool,
) -> Result<CovarianceEstimates> {
    let n = psi_diff.len();
    let cols = phi_entire.ncols();
    if phi_validation.nrows() != n || phi_validation.ncols() != cols {
        return Err(FqteError::DimensionMismatch(format!(
            "ψ has {n} rows; φ on validation rows is {}×{}, on all rows {}×{cols}",
            phi_validation.nrows(),
            phi_validation.ncols(),
            phi_entire.nrows()
        )));
    }
    if phi_entire.nrows() < n {
        return Err(FqteError::DimensionMismatch(
            "fewer pooled rows than validation rows".into(),
        ));
    }
    let nf = n as f64;
    let shrink = 1.0 - nu_n;

    let (psi_mean, phi_mean) = if center_rho {
        (
            psi_diff.iter().sum::<f64>() / nf,
            phi_validation.column_means(),
        )
    } else {
        (0.0, DVector::zeros(cols))
    };
    let mut rho = DVector::zeros(cols);
    for (i, &dpsi) in psi_diff.iter().enumerate() {
        let row = phi_validation.row(i);
        for j in 0..cols {
            rho[j] += (dpsi - psi_mean) * (row[j] - phi_mean[j]);
        }
    }
    rho *= shrink / nf;

    let big_n = phi_entire.nrows() as f64;
    let mut sigma_ep = DMatrix::zeros(cols, cols);
    for row in phi_entire.rows() {
        for j in 0..cols {
            for k in 0..=j {
                sigma_ep[(j, k)] += row[j] * row[k];
            }
        }
    }
    for j in 0..cols {
        for k in 0..j {
            sigma_ep[(k, j)] = sigma_ep[(j, k)];
        }
    }
    sigma_ep *= shrink / big_n;

    let sigma_v_sq = psi_diff.iter().map(|v| v * v).sum::<f64>() / nf;
    Ok(CovarianceEstimates {
        rho_hat: rho,
        sigma_ep_hat: sigma_ep,
        sigma_v_sq_hat: sigma_v_sq,
        nu_n,
    })
}

pub fn estimate_covariances(
    psi_treated: &InfluenceSet,
    psi_control: &InfluenceSet,
    calib: &CalibrationResult,
    nu_n: f64,
    center_rho: bool,
) -> Result<CovarianceEstimates> {
    if psi_treated.arm != 1 || psi_control.arm != 0 {
        return Err(FqteError::Config(
            "influence sets must be ordered (treated, control)".into(),
        ));
    }
    if psi_treated.psi.len() != psi_control.psi.len() {
        return Err(FqteError::DimensionMismatch(format!(
            "influence lengths {} and {}",
            psi_treated.psi.len(),
            psi_control.psi.len()
        )));
    }
    let diff: Vec<f64> = psi_treated
        .psi
        .iter()
        .zip(&psi_control.psi)
        .map(|(a, b)| a - b)
        .collect();
    covariance_moments(
        &diff,
        &calib.phi_validation,
        &calib.phi_entire,
        nu_n,
        center_rho,
    )
}

/// Solution of `Σ x = b` restricted to eigen-directions above the relative
/// cutoff. Returns `None` when `Σ` is numerically zero.
#[derive(Debug, Clone)]
pub struct ProjectionSolver {
    vectors: DMatrix<f64>,
    values: DVector<f64>,
    keep: Vec<bool>,
    pub regularized: bool,
}

impl ProjectionSolver {
    pub fn new(sigma: &DMatrix<f64>) -> Option<Self> {
        let sym = (sigma + sigma.transpose()) * 0.5;
        let eig = sym.symmetric_eigen();
        let largest = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v));
        if largest <= f64::MIN_POSITIVE {
            return None;
        }
        let keep: Vec<bool> = eig
            .eigenvalues
            .iter()
            .map(|&v| v > EIGEN_TRUNCATION * largest)
            .collect();
        let regularized = keep.iter().any(|k| !k);
        Some(Self {
            vectors: eig.eigenvectors,
            values: eig.eigenvalues,
            keep,
            regularized,
        })
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let coords = self.vectors.transpose() * rhs;
        let mut scaled = DVector::zeros(coords.len());
        for j in 0..coords.len() {
            if self.keep[j] {
                scaled[j] = coords[j] / self.values[j];
            }
        }
        &self.vectors * scaled
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FqteResult {
    pub delta_p: f64,
    pub delta_v: f64,
    pub sigma_sq: f64,
    pub sigma_v_sq: f64,
    pub se: f64,
    pub se_v: f64,
    pub ci: (f64, f64),
    pub ci_v: (f64, f64),
    pub efficiency_gain: f64,
    pub regularized: bool,
    /// `Σ̂_ep⁻¹ϱ̂`, the projection coefficients.
    pub coefficients: Vec<f64>,
}

/// Fused estimate `Δ̂_p = Δ̂^V_p − ϱ̂ᵀΣ̂_ep⁻¹Ĉ` with `σ̂² = σ̂²_V − ϱ̂ᵀΣ̂_ep⁻¹ϱ̂`.
pub fn fuse_estimate(
    delta_v: f64,
    c_hat: &DVector<f64>,
    cov: &CovarianceEstimates,
    n: usize,
    confidence: f64,
) -> Result<FqteResult> {
    let dim = c_hat.len();
    if cov.rho_hat.len() != dim
        || cov.sigma_ep_hat.nrows() != dim
        || cov.sigma_ep_hat.ncols() != dim
    {
        return Err(FqteError::DimensionMismatch(format!(
            "calibration vector of length {dim}, ϱ̂ of length {}, Σ̂_ep {}×{}",
            cov.rho_hat.len(),
            cov.sigma_ep_hat.nrows(),
            cov.sigma_ep_hat.ncols()
        )));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(FqteError::Config(format!(
            "confidence level {confidence} outside (0, 1)"
        )));
    }
    let rho_zero = cov.rho_hat.iter().all(|&v| v == 0.0);
    let (coefficients, regularized) = match ProjectionSolver::new(&cov.sigma_ep_hat) {
        Some(solver) => (solver.solve(&cov.rho_hat), solver.regularized),
        None if rho_zero => (DVector::zeros(dim), false),
        None => return Err(FqteError::CalibrationDegenerate),
    };
    if regularized {
        log::warn!("calibration covariance is near-singular; using eigen-truncated solve");
    }
    let gain = cov.rho_hat.dot(&coefficients).max(0.0);
    let delta_p = delta_v - coefficients.dot(c_hat);
    let mut sigma_sq = cov.sigma_v_sq_hat - gain;
    if sigma_sq < 0.0 {
        log::warn!("fused variance {sigma_sq:.3e} negative after rounding; floored at 0");
        sigma_sq = 0.0;
    }
    let nf = n as f64;
    let z = norm_quantile(0.5 + confidence / 2.0);
    let se = (sigma_sq / nf).sqrt();
    let se_v = (cov.sigma_v_sq_hat / nf).sqrt();
    Ok(FqteResult {
        delta_p,
        delta_v,
        sigma_sq,
        sigma_v_sq: cov.sigma_v_sq_hat,
        se,
        se_v,
        ci: (delta_p - z * se, delta_p + z * se),
        ci_v: (delta_v - z * se_v, delta_v + z * se_v),
        efficiency_gain: gain,
        regularized,
        coefficients: coefficients.iter().copied().collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityPoint {
    pub delta: Vec<f64>,
    pub estimate: f64,
    pub ci: (f64, f64),
}

/// `Δ̂^mod(δ) = Δ̂^V_p − ϱ̂ᵀΣ̂_ep⁻¹(Ĉ − δ)`; the standard error is unchanged.
pub fn sensitivity_curve(
    result: &FqteResult,
    c_hat: &DVector<f64>,
    delta_grid: &[DVector<f64>],
) -> Result<Vec<SensitivityPoint>> {
    let coef = DVector::from_column_slice(&result.coefficients);
    let half_width = 0.5 * (result.ci.1 - result.ci.0);
    delta_grid
        .iter()
        .map(|delta| {
            if delta.len() != c_hat.len() {
                return Err(FqteError::DimensionMismatch(format!(
                    "δ has length {}, calibration vector {}",
                    delta.len(),
                    c_hat.len()
                )));
            }
            let estimate = result.delta_v - coef.dot(&(c_hat - delta));
            Ok(SensitivityPoint {
                delta: delta.iter().copied().collect(),
                estimate,
                ci: (estimate - half_width, estimate + half_width),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(v: &[&[f64]]) -> RowMatrix {
        RowMatrix::from_rows(&v.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn zero_phi_gives_no_projection() {
        let psi = [0.5, -0.2, 0.1, -0.4];
        let zeros = rows(&[&[0.0, 0.0][..]; 4]);
        let zeros_all = rows(&[&[0.0, 0.0][..]; 6]);
        let cov = covariance_moments(&psi, &zeros, &zeros_all, 4.0 / 6.0, false).unwrap();
        assert!(cov.rho_hat.iter().all(|&v| v == 0.0));
        assert!(cov.sigma_ep_hat.iter().all(|&v| v == 0.0));
        let res = fuse_estimate(1.5, &DVector::from_vec(vec![0.1, -0.1]), &cov, 4, 0.95).unwrap();
        assert_eq!(res.delta_p, 1.5);
        assert_eq!(res.sigma_sq, cov.sigma_v_sq_hat);
    }

    #[test]
    fn degenerate_calibration_with_nonzero_rho() {
        let cov = CovarianceEstimates {
            rho_hat: DVector::from_vec(vec![0.3]),
            sigma_ep_hat: DMatrix::zeros(1, 1),
            sigma_v_sq_hat: 1.0,
            nu_n: 0.5,
        };
        let err = fuse_estimate(0.0, &DVector::from_vec(vec![0.1]), &cov, 10, 0.95).unwrap_err();
        assert!(matches!(err, FqteError::CalibrationDegenerate));
    }

    #[test]
    fn hand_computed_two_by_two_projection() {
        // Σ = [[2, 1], [1, 3]], Σ⁻¹ = [[3, −1], [−1, 2]] / 5
        let cov = CovarianceEstimates {
            rho_hat: DVector::from_vec(vec![0.5, 0.25]),
            sigma_ep_hat: DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]),
            sigma_v_sq_hat: 4.0,
            nu_n: 0.25,
        };
        let c = DVector::from_vec(vec![0.2, -0.1]);
        let res = fuse_estimate(1.0, &c, &cov, 100, 0.95).unwrap();
        let coef = [(3.0 * 0.5 - 0.25) / 5.0, (-0.5 + 2.0 * 0.25) / 5.0];
        assert!((res.coefficients[0] - coef[0]).abs() < 1e-12);
        assert!((res.coefficients[1] - coef[1]).abs() < 1e-12);
        let delta = 1.0 - (coef[0] * 0.2 - coef[1] * 0.1);
        assert!((res.delta_p - delta).abs() < 1e-12);
        let gain = 0.5 * coef[0] + 0.25 * coef[1];
        assert!((res.efficiency_gain - gain).abs() < 1e-12);
        assert!((res.sigma_sq - (4.0 - gain)).abs() < 1e-12);
        let z = 1.959_963_984_540_054;
        assert!((res.ci.1 - (delta + z * ((4.0 - gain) / 100.0).sqrt())).abs() < 1e-9);
        assert!(!res.regularized);
    }

    #[test]
    fn near_singular_covariance_is_regularized() {
        let cov = CovarianceEstimates {
            rho_hat: DVector::from_vec(vec![0.3, 0.3]),
            sigma_ep_hat: DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0 + 1e-13]),
            sigma_v_sq_hat: 1.0,
            nu_n: 0.5,
        };
        let res = fuse_estimate(0.0, &DVector::from_vec(vec![0.1, 0.1]), &cov, 10, 0.95).unwrap();
        assert!(res.regularized);
        assert!((res.efficiency_gain - 0.09).abs() < 1e-9);
    }

    #[test]
    fn shrink_factor_is_linear() {
        let psi = [0.3, -0.1, 0.2];
        let phi_v = rows(&[&[0.1], &[-0.2], &[0.05]]);
        let phi_all = rows(&[&[0.1], &[-0.2], &[0.05], &[0.3]]);
        let a = covariance_moments(&psi, &phi_v, &phi_all, 0.5, false).unwrap();
        let b = covariance_moments(&psi, &phi_v, &phi_all, 0.75, false).unwrap();
        assert!((b.rho_hat[0] - 0.5 * a.rho_hat[0]).abs() < 1e-15);
        assert!((b.sigma_ep_hat[(0, 0)] - 0.5 * a.sigma_ep_hat[(0, 0)]).abs() < 1e-15);
        assert_eq!(a.sigma_v_sq_hat, b.sigma_v_sq_hat);
    }

    #[test]
    fn sensitivity_identities() {
        let cov = CovarianceEstimates {
            rho_hat: DVector::from_vec(vec![0.4, -0.2]),
            sigma_ep_hat: DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]),
            sigma_v_sq_hat: 2.0,
            nu_n: 0.25,
        };
        let c = DVector::from_vec(vec![0.05, 0.02]);
        let res = fuse_estimate(0.7, &c, &cov, 50, 0.95).unwrap();
        let d1 = DVector::from_vec(vec![0.01, -0.03]);
        let grid = vec![DVector::zeros(2), c.clone(), d1.clone(), &d1 * 2.0];
        let curve = sensitivity_curve(&res, &c, &grid).unwrap();
        assert!((curve[0].estimate - res.delta_p).abs() < 1e-14);
        assert!((curve[1].estimate - res.delta_v).abs() < 1e-14);
        let lhs = curve[3].estimate - curve[2].estimate;
        let rhs = curve[2].estimate - curve[0].estimate;
        assert!((lhs - rhs).abs() < 1e-14);
        assert!((curve[2].ci.1 - curve[2].ci.0 - (res.ci.1 - res.ci.0)).abs() < 1e-14);
        assert!(sensitivity_curve(&res, &c, &[DVector::zeros(3)]).is_err());
    }
}
