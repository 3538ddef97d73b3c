//! Simulation design, model-specification scenarios and the Monte Carlo
//! harness.
//!
//! Data: `W_k ~ Unif(1 − √3, 1 + √3)` for `k = 1, 2, 3`, `X₁ = W₁`,
//! `S₁ = exp(W₂/2)`, `S₂ = log(W₃ + 1)`, `S₃ = sin(3W₁)`,
//! `logit P(T = 1) = 0.25X₁ − 0.25S₁ + 0.25S₂ − 0.25S₃`, and
//! `Y(t) = 0.5X₁ − 0.5S₁ + 0.5S₂ − 0.5S₃ + ε(t)` with `ε(1) ~ N(0, 4)`,
//! `ε(0) ~ N(0, 1)`. The first `n` rows form the validation sample.
//!
//! Randomness comes from ChaCha8 seeded with the configured 64-bit seed;
//! replication `r` draws from stream `r` of that generator, so its data
//! depend only on `(seed, r)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calib::compute_calibration;
use crate::data::{FusedDataset, QuantileSpec, Record};
use crate::drq::ContextPair;
use crate::error::{FqteError, Result};
use crate::estimate::{fuse_with_calibration, initial_estimate, EstimateOptions};
use crate::models::FeatureMap;

/// `Δ_p` of the default design at `p = 0.25, 0.5, 0.75`, from Gauss–Legendre
/// quadrature of the marginal potential-outcome CDFs.
pub const TRUE_QTE: [(f64, f64); 3] = [
    (0.25, -0.592_433_354_562_338_8),
    (0.5, -0.005_521_029_268_793_054),
    (0.75, 0.586_333_712_916_791_4),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpCoefficients {
    /// Logit coefficients on `(X₁, S₁, S₂, S₃)`.
    pub propensity: [f64; 4],
    /// Outcome mean coefficients on `(X₁, S₁, S₂, S₃)`.
    pub outcome: [f64; 4],
    pub sd_treated: f64,
    pub sd_control: f64,
}

impl Default for DgpCoefficients {
    fn default() -> Self {
        Self {
            propensity: [0.25, -0.25, 0.25, -0.25],
            outcome: [0.5, -0.5, 0.5, -0.5],
            sd_treated: 2.0,
            sd_control: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub n: usize,
    #[serde(rename = "N")]
    pub big_n: usize,
    pub seed: u64,
    /// ChaCha stream; the Monte Carlo harness uses the replication index.
    #[serde(default)]
    pub stream: u64,
    #[serde(default)]
    pub coefficients: DgpCoefficients,
}

impl DgpConfig {
    pub fn new(n: usize, big_n: usize, seed: u64) -> Self {
        Self {
            n,
            big_n,
            seed,
            stream: 0,
            coefficients: DgpCoefficients::default(),
        }
    }

    pub fn with_stream(&self, stream: u64) -> Self {
        Self {
            stream,
            ..self.clone()
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.n == 0 || self.n >= self.big_n {
            return Err(FqteError::Config(format!(
                "simulation sizes need 0 < n < N (got n = {}, N = {})",
                self.n, self.big_n
            )));
        }
        Ok(())
    }
}

/// Generated data together with both potential outcomes of every row.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedData {
    pub dataset: FusedDataset,
    pub y1: Vec<f64>,
    pub y0: Vec<f64>,
}

pub fn rng_for(config: &DgpConfig) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(config.stream);
    rng
}

/// Covariates `(X₁, S₁, S₂, S₃)` from one draw of `(W₁, W₂, W₃)`.
pub fn covariates<R: Rng>(rng: &mut R) -> [f64; 4] {
    let sqrt3 = 3f64.sqrt();
    let mut w = [0.0; 3];
    for wk in &mut w {
        *wk = 1.0 - sqrt3 + 2.0 * sqrt3 * rng.random::<f64>();
    }
    [
        w[0],
        (w[1] / 2.0).exp(),
        (w[2] + 1.0).ln(),
        (3.0 * w[0]).sin(),
    ]
}

pub fn generate(config: &DgpConfig) -> SimulatedData {
    let coef = &config.coefficients;
    let mut rng = rng_for(config);
    let mut validation = Vec::with_capacity(config.n);
    let mut auxiliary = Vec::with_capacity(config.big_n.saturating_sub(config.n));
    let mut y1s = Vec::with_capacity(config.big_n);
    let mut y0s = Vec::with_capacity(config.big_n);
    for i in 0..config.big_n {
        let c = covariates(&mut rng);
        let logit: f64 = c.iter().zip(&coef.propensity).map(|(a, b)| a * b).sum();
        let e = crate::numeric::logistic(logit);
        let t = u8::from(rng.random::<f64>() < e);
        let mean: f64 = c.iter().zip(&coef.outcome).map(|(a, b)| a * b).sum();
        let e1: f64 = rng.sample(StandardNormal);
        let e0: f64 = rng.sample(StandardNormal);
        let y1 = mean + coef.sd_treated * e1;
        let y0 = mean + coef.sd_control * e0;
        let y = if t == 1 { y1 } else { y0 };
        y1s.push(y1);
        y0s.push(y0);
        if i < config.n {
            validation.push(Record::validation(y, t, vec![c[0]], c[1..].to_vec()));
        } else {
            auxiliary.push(Record::auxiliary(y, t, vec![c[0]]));
        }
    }
    let dataset = FusedDataset::new(validation, auxiliary)
        .expect("simulated data satisfy dataset invariants");
    SimulatedData {
        dataset,
        y1: y1s,
        y0: y0s,
    }
}

/// Stored truth for the default design, if tabulated.
pub fn true_qte(p: f64) -> Option<f64> {
    TRUE_QTE
        .iter()
        .find(|(level, _)| (level - p).abs() < 1e-12)
        .map(|&(_, v)| v)
}

/// Large-sample Monte Carlo approximation of `Δ_p` under the default design.
pub fn monte_carlo_qte(p: f64, draws: usize, seed: u64) -> f64 {
    let coef = DgpCoefficients::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y1 = Vec::with_capacity(draws);
    let mut y0 = Vec::with_capacity(draws);
    for _ in 0..draws {
        let c = covariates(&mut rng);
        let mean: f64 = c.iter().zip(&coef.outcome).map(|(a, b)| a * b).sum();
        let e1: f64 = rng.sample(StandardNormal);
        let e0: f64 = rng.sample(StandardNormal);
        y1.push(mean + coef.sd_treated * e1);
        y0.push(mean + coef.sd_control * e0);
    }
    empirical_quantile(&mut y1, p) - empirical_quantile(&mut y0, p)
}

/// Generalized inverse of the empirical CDF.
fn empirical_quantile(values: &mut [f64], p: f64) -> f64 {
    let k = ((p * values.len() as f64).ceil() as usize).clamp(1, values.len()) - 1;
    *values.select_nth_unstable_by(k, f64::total_cmp).1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioName {
    Dr11,
    Dr10,
    Dr01,
    Dr00,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 4] = [
        ScenarioName::Dr11,
        ScenarioName::Dr10,
        ScenarioName::Dr01,
        ScenarioName::Dr00,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioName::Dr11 => "dr11",
            ScenarioName::Dr10 => "dr10",
            ScenarioName::Dr01 => "dr01",
            ScenarioName::Dr00 => "dr00",
        }
    }

    /// `(outcome model correct, propensity model correct)`.
    pub fn flags(self) -> (bool, bool) {
        match self {
            ScenarioName::Dr11 => (true, true),
            ScenarioName::Dr10 => (false, true),
            ScenarioName::Dr01 => (true, false),
            ScenarioName::Dr00 => (false, false),
        }
    }
}

impl std::str::FromStr for ScenarioName {
    type Err = FqteError;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| {
                FqteError::Config(format!(
                    "unknown scenario '{s}' (expected dr11, dr10, dr01 or dr00)"
                ))
            })
    }
}

/// Default substitute for a misspecified working model:
/// `(1, X₁, exp(S₁/2), S₂², |S₃|)`.
pub fn default_misspecified_map(intercept: bool) -> FeatureMap {
    FeatureMap::custom("misspecified", true, move |x, s, out| {
        let s = s.unwrap_or(&[]);
        if intercept {
            out.push(1.0);
        }
        out.extend_from_slice(x);
        if let [s1, s2, s3, ..] = *s {
            out.extend_from_slice(&[(s1 / 2.0).exp(), s2 * s2, s3.abs()]);
        }
    })
}

#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub name: ScenarioName,
    pub or_correct: bool,
    pub ps_correct: bool,
    pub misspec_feature_map: FeatureMap,
}

impl ScenarioSpec {
    pub fn new(name: ScenarioName, intercept: bool) -> Self {
        let (or_correct, ps_correct) = name.flags();
        Self {
            name,
            or_correct,
            ps_correct,
            misspec_feature_map: default_misspecified_map(intercept),
        }
    }

    pub fn all(intercept: bool) -> Vec<Self> {
        ScenarioName::ALL
            .into_iter()
            .map(|n| Self::new(n, intercept))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioContexts {
    pub validation: ContextPair,
    pub confounded: ContextPair,
}

/// Working-model contexts for a scenario: validation models on the correct
/// `(1, X₁, S₁, S₂, S₃)` design or the misspecified map, pooled models
/// always on `(1, X₁)`.
pub fn scenario_contexts(
    ds: &FusedDataset,
    scenario: &ScenarioSpec,
    options: &EstimateOptions,
) -> Result<ScenarioContexts> {
    Ok(ScenarioContexts {
        validation: validation_contexts(ds, scenario, options)?,
        confounded: confounded_contexts(ds, options)?,
    })
}

pub fn validation_contexts(
    ds: &FusedDataset,
    scenario: &ScenarioSpec,
    options: &EstimateOptions,
) -> Result<ContextPair> {
    let correct = FeatureMap::full(options.intercept);
    let or_map = if scenario.or_correct {
        &correct
    } else {
        &scenario.misspec_feature_map
    };
    let ps_map = if scenario.ps_correct {
        &correct
    } else {
        &scenario.misspec_feature_map
    };
    ContextPair::fit(ds.validation(), or_map, ps_map, options.normalize_weights)
}

pub fn confounded_contexts(ds: &FusedDataset, options: &EstimateOptions) -> Result<ContextPair> {
    let reduced = FeatureMap::x_only(options.intercept);
    ContextPair::fit(ds.entire(), &reduced, &reduced, options.normalize_weights)
}

/// Estimates from one scenario in one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDraw {
    pub delta_v: f64,
    pub se_v: f64,
    pub ci_v: (f64, f64),
    /// One entry per calibration set.
    pub fused: Vec<FusedDraw>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedDraw {
    pub delta_p: f64,
    pub se: f64,
    pub ci: (f64, f64),
    pub sigma_sq: f64,
    pub sigma_v_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationDraw {
    pub replication: u64,
    /// One entry per scenario, in the configured order.
    pub scenarios: Vec<ScenarioDraw>,
    /// `√n·Ĉ` per calibration set.
    pub scaled_c_hat: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRow {
    pub scenario: String,
    pub method: String,
    pub bias: f64,
    pub mse: f64,
    pub se: f64,
    pub cr: f64,
    /// Empirical standard deviation of the estimates.
    pub sd: f64,
    pub replications: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenteringRow {
    pub calibration: String,
    pub component: usize,
    /// Monte Carlo mean of `√n·Ĉ_k`.
    pub mean: f64,
    /// Standard error of that mean.
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub n: usize,
    #[serde(rename = "N")]
    pub big_n: usize,
    pub seed: u64,
    pub p: f64,
    pub p_cal: Vec<Vec<f64>>,
    pub truth: f64,
    pub replications: usize,
    pub failures: usize,
    pub rows: Vec<McRow>,
    pub centering: Vec<CenteringRow>,
    /// Fused runs checked for `σ̂² ≤ σ̂²_V`, and how many violated it.
    pub variance_checks: usize,
    pub variance_violations: usize,
    #[serde(skip)]
    pub draws: Vec<ReplicationDraw>,
}

impl McReport {
    pub fn row(&self, scenario: &str, method: &str) -> Option<&McRow> {
        self.rows
            .iter()
            .find(|r| r.scenario == scenario && r.method == method)
    }

    /// Rows as `Method,BIAS,MSE,SE,CR`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("Method,BIAS,MSE,SE,CR\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{}_{},{:.4},{:.4},{:.4},{:.4}\n",
                r.scenario, r.method, r.bias, r.mse, r.se, r.cr
            ));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct McSettings {
    pub dgp: DgpConfig,
    pub scenarios: Vec<ScenarioSpec>,
    /// Calibration sets sharing one target level; method `c{k}` uses set `k`.
    pub quantiles: Vec<QuantileSpec>,
    pub replications: usize,
    pub workers: usize,
    pub options: EstimateOptions,
    /// Overrides the stored truth.
    pub truth: Option<f64>,
    pub keep_draws: bool,
}

fn run_replication(settings: &McSettings, replication: u64) -> Result<ReplicationDraw> {
    let data = generate(&settings.dgp.with_stream(replication));
    let ds = &data.dataset;
    let p = settings.quantiles[0].p;
    let confounded = confounded_contexts(ds, &settings.options)?;
    let calibrations = settings
        .quantiles
        .iter()
        .map(|spec| compute_calibration(ds, spec, &confounded))
        .collect::<Result<Vec<_>>>()?;
    let root_n = (ds.n() as f64).sqrt();
    let scaled_c_hat = calibrations
        .iter()
        .map(|c| c.c_hat.iter().map(|v| v * root_n).collect())
        .collect();

    let mut scenarios = Vec::with_capacity(settings.scenarios.len());
    for scenario in &settings.scenarios {
        let validation = validation_contexts(ds, scenario, &settings.options)?;
        let initial = initial_estimate(ds, &validation, p)?;
        let mut fused = Vec::with_capacity(calibrations.len());
        let mut se_v = 0.0;
        let mut ci_v = (0.0, 0.0);
        for calib in &calibrations {
            let res = fuse_with_calibration(ds, &initial, calib, &settings.options)?;
            se_v = res.se_v;
            ci_v = res.ci_v;
            fused.push(FusedDraw {
                delta_p: res.delta_p,
                se: res.se,
                ci: res.ci,
                sigma_sq: res.sigma_sq,
                sigma_v_sq: res.sigma_v_sq,
            });
        }
        scenarios.push(ScenarioDraw {
            delta_v: initial.delta_v,
            se_v,
            ci_v,
            fused,
        });
    }
    Ok(ReplicationDraw {
        replication,
        scenarios,
        scaled_c_hat,
    })
}

fn summarize(scenario: &str, method: &str, draws: &[(f64, f64, (f64, f64))], truth: f64) -> McRow {
    let r = draws.len() as f64;
    let mean_err = draws.iter().map(|d| d.0 - truth).sum::<f64>() / r;
    let mse = draws.iter().map(|d| (d.0 - truth).powi(2)).sum::<f64>() / r;
    let mean_est = draws.iter().map(|d| d.0).sum::<f64>() / r;
    let var = if draws.len() > 1 {
        draws.iter().map(|d| (d.0 - mean_est).powi(2)).sum::<f64>() / (r - 1.0)
    } else {
        0.0
    };
    McRow {
        scenario: scenario.to_string(),
        method: method.to_string(),
        bias: mean_err.abs(),
        mse,
        se: draws.iter().map(|d| d.1).sum::<f64>() / r,
        cr: draws
            .iter()
            .filter(|d| d.2 .0 <= truth && truth <= d.2 .1)
            .count() as f64
            / r,
        sd: var.sqrt(),
        replications: draws.len(),
    }
}

pub fn run_monte_carlo(settings: &McSettings) -> Result<McReport> {
    settings.dgp.check()?;
    if settings.replications == 0 {
        return Err(FqteError::Config("replications must be at least 1".into()));
    }
    if settings.quantiles.is_empty() || settings.scenarios.is_empty() {
        return Err(FqteError::Config(
            "need at least one scenario and one calibration set".into(),
        ));
    }
    let p = settings.quantiles[0].p;
    if settings.quantiles.iter().any(|q| q.p != p) {
        return Err(FqteError::Config(
            "all calibration sets must share the target level".into(),
        ));
    }
    let truth = match settings.truth.or_else(|| true_qte(p)) {
        Some(t) => t,
        None => {
            log::info!("no stored truth for p = {p}; computing a 10^7-draw Monte Carlo oracle");
            monte_carlo_qte(p, 10_000_000, settings.dgp.seed ^ 0x5eed)
        }
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.workers.max(1))
        .build()
        .map_err(|e| FqteError::Config(format!("thread pool: {e}")))?;
    let outcomes: Vec<Result<ReplicationDraw>> = pool.install(|| {
        (0..settings.replications as u64)
            .into_par_iter()
            .map(|r| run_replication(settings, r))
            .collect()
    });

    let total = outcomes.len();
    let mut draws = Vec::with_capacity(total);
    let mut failures = Vec::new();
    for (r, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(d) => draws.push(d),
            Err(e) => {
                log::warn!("replication {r} failed: {e}");
                failures.push(format!("replication {r}: {e}"));
            }
        }
    }
    if failures.len() * 100 > total {
        return Err(FqteError::TooManyFailures {
            failed: failures.len(),
            total,
            first: failures[0].clone(),
        });
    }
    if draws.is_empty() {
        return Err(FqteError::TooManyFailures {
            failed: total,
            total,
            first: failures.first().cloned().unwrap_or_default(),
        });
    }

    let mut rows = Vec::new();
    let mut variance_checks = 0;
    let mut variance_violations = 0;
    for (s, scenario) in settings.scenarios.iter().enumerate() {
        let name = scenario.name.as_str();
        let initial: Vec<_> = draws
            .iter()
            .map(|d| {
                let sd = &d.scenarios[s];
                (sd.delta_v, sd.se_v, sd.ci_v)
            })
            .collect();
        rows.push(summarize(name, "v", &initial, truth));
        for k in 0..settings.quantiles.len() {
            let fused: Vec<_> = draws
                .iter()
                .map(|d| {
                    let f = &d.scenarios[s].fused[k];
                    (f.delta_p, f.se, f.ci)
                })
                .collect();
            rows.push(summarize(name, &format!("c{}", k + 1), &fused, truth));
            for d in &draws {
                let f = &d.scenarios[s].fused[k];
                variance_checks += 1;
                if f.sigma_sq > f.sigma_v_sq + 1e-12 {
                    variance_violations += 1;
                }
            }
        }
    }

    let reps = draws.len() as f64;
    let mut centering = Vec::new();
    for (k, spec) in settings.quantiles.iter().enumerate() {
        let dim = draws[0].scaled_c_hat[k].len();
        for j in 0..dim {
            let vals: Vec<f64> = draws.iter().map(|d| d.scaled_c_hat[k][j]).collect();
            let mean = vals.iter().sum::<f64>() / reps;
            let var = if vals.len() > 1 {
                vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1.0)
            } else {
                0.0
            };
            centering.push(CenteringRow {
                calibration: format!("c{} {:?}", k + 1, spec.p_cal),
                component: j,
                mean,
                se: (var / reps).sqrt(),
            });
        }
    }

    Ok(McReport {
        n: settings.dgp.n,
        big_n: settings.dgp.big_n,
        seed: settings.dgp.seed,
        p,
        p_cal: settings.quantiles.iter().map(|q| q.p_cal.clone()).collect(),
        truth,
        replications: draws.len(),
        failures: failures.len(),
        rows,
        centering,
        variance_checks,
        variance_violations,
        draws: if settings.keep_draws {
            draws
        } else {
            Vec::new()
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_data() {
        let cfg = DgpConfig::new(50, 200, 99);
        assert_eq!(generate(&cfg), generate(&cfg));
        assert_ne!(
            generate(&cfg).dataset,
            generate(&cfg.with_stream(1)).dataset
        );
    }

    #[test]
    fn validation_rows_come_first() {
        let data = generate(&DgpConfig::new(30, 100, 1));
        let ds = &data.dataset;
        assert_eq!(ds.n(), 30);
        assert_eq!(ds.big_n(), 100);
        assert!(ds
            .validation()
            .iter()
            .all(|r| r.s.as_ref().map(Vec::len) == Some(3)));
        assert!(ds.auxiliary().iter().all(|r| r.s.is_none()));
        for (i, r) in ds.entire().iter().enumerate() {
            let expect = if r.t == 1 { data.y1[i] } else { data.y0[i] };
            assert_eq!(r.y, expect);
        }
    }

    #[test]
    fn scenario_flags() {
        assert_eq!(ScenarioName::Dr10.flags(), (false, true));
        assert_eq!(ScenarioName::Dr01.flags(), (true, false));
        assert_eq!("dr00".parse::<ScenarioName>().unwrap(), ScenarioName::Dr00);
        assert!("dr2".parse::<ScenarioName>().is_err());
    }

    #[test]
    fn scenario_wiring() {
        let ds = generate(&DgpConfig::new(300, 900, 5)).dataset;
        let opts = EstimateOptions::default();
        let dr11 =
            scenario_contexts(&ds, &ScenarioSpec::new(ScenarioName::Dr11, true), &opts).unwrap();
        assert_eq!(dr11.validation.treated.outcome_features.name(), "full");
        assert_eq!(dr11.validation.treated.ps_features.name(), "full");
        assert_eq!(dr11.validation.treated.outcome_fit.beta.len(), 5);
        assert_eq!(dr11.confounded.treated.outcome_fit.beta.len(), 2);
        let dr10 =
            scenario_contexts(&ds, &ScenarioSpec::new(ScenarioName::Dr10, true), &opts).unwrap();
        assert_eq!(
            dr10.validation.control.outcome_features.name(),
            "misspecified"
        );
        assert_eq!(dr10.validation.control.ps_features.name(), "full");
        let dr01 =
            scenario_contexts(&ds, &ScenarioSpec::new(ScenarioName::Dr01, true), &opts).unwrap();
        assert_eq!(dr01.validation.control.outcome_features.name(), "full");
        assert_eq!(dr01.validation.control.ps_features.name(), "misspecified");
        assert_eq!(dr01.confounded.control.ps_features.name(), "x-only");
    }

    #[test]
    fn stored_truth_lookup() {
        assert_eq!(true_qte(0.5), Some(TRUE_QTE[1].1));
        assert_eq!(true_qte(0.6), None);
    }

    #[test]
    fn misspecified_map_shape() {
        let map = default_misspecified_map(true);
        let r = Record::validation(0.0, 1, vec![0.3], vec![2.0, 0.5, -0.4]);
        let row = map.design_row(&r).unwrap();
        assert_eq!(row, vec![1.0, 0.3, 1f64.exp(), 0.25, 0.4]);
    }
}
