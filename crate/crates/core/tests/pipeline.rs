use fqte::data::{QuantileSpec, Record};
use fqte::drq::{density_from_prepared, influence_from_prepared, solve_prepared, ContextPair};
use fqte::estimate::{estimate_fqte, EstimateOptions};
use fqte::models::FeatureMap;
use fqte::nalgebra::DVector;
use fqte::sim::{generate, run_monte_carlo, DgpConfig, McSettings, ScenarioName, ScenarioSpec};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn treated_quantile_and_psi(records: &[Record], level: f64) -> (f64, Vec<f64>) {
    let full = FeatureMap::full(true);
    let pair = ContextPair::fit(records, &full, &full, true).unwrap();
    let ctx = pair.get(1);
    let prepared = ctx.prepare(records).unwrap();
    let q = solve_prepared(&prepared, level).unwrap().q_hat;
    let f = density_from_prepared(&prepared, q).unwrap();
    let psi = influence_from_prepared(ctx, &prepared, q, level, &f)
        .unwrap()
        .psi;
    (q, psi)
}

/// Delete-d jackknife variance of the treated-arm quantile from random subsets.
fn delete_d_jackknife(records: &[Record], d: usize, subsets: usize, seed: u64) -> f64 {
    let n = records.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let estimates: Vec<f64> = (0..subsets)
        .map(|_| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            let mut keep = idx[d..].to_vec();
            keep.sort_unstable();
            let sub: Vec<Record> = keep.iter().map(|&i| records[i].clone()).collect();
            treated_quantile_and_psi(&sub, 0.5).0
        })
        .collect();
    let mean = estimates.iter().sum::<f64>() / subsets as f64;
    let ss = estimates.iter().map(|q| (q - mean).powi(2)).sum::<f64>();
    (n - d) as f64 / (d * subsets) as f64 * ss
}

#[test]
fn influence_variance_matches_jackknife() {
    // delete-1 is inconsistent for quantiles, and a single delete-d draw is too
    // noisy at n = 300, so both variances are averaged over 40 datasets
    let n = 300;
    let (mut infl, mut jack) = (0.0, 0.0);
    for k in 0..40u64 {
        let records = generate(&DgpConfig::new(n, n + 1, 3100 + k))
            .dataset
            .validation()
            .to_vec();
        let (_, psi) = treated_quantile_and_psi(&records, 0.5);
        infl += psi.iter().map(|v| v * v).sum::<f64>() / (n * n) as f64;
        jack += delete_d_jackknife(&records, 100, 400, 310 + k);
    }
    let rel = (infl - jack).abs() / jack;
    assert!(
        rel <= 0.25,
        "influence {:.5}, jackknife {:.5}, rel {rel:.3}",
        infl / 40.0,
        jack / 40.0
    );
}

#[test]
fn fused_estimate_gains_efficiency() {
    let ds = generate(&DgpConfig::new(500, 2000, 32)).dataset;
    let spec = QuantileSpec::new(0.5, None).unwrap();
    let report = estimate_fqte(&ds, &spec, &EstimateOptions::default(), &[]).unwrap();
    assert!(report.efficiency_gain > 0.0);
    assert!(report.se < report.se_v);
    assert!(report.sigma_sq <= report.sigma_v_sq);
    assert_eq!(report.c_hat.len(), 2);
    assert!(report.ci.0 < report.delta_p && report.delta_p < report.ci.1);
    assert_eq!(report.delta_v, report.q_treated - report.q_control);
    assert!(report.sensitivity.is_empty());
}

#[test]
fn sensitivity_curve_endpoints() {
    let ds = generate(&DgpConfig::new(400, 1600, 33)).dataset;
    let spec = QuantileSpec::new(0.5, Some(vec![0.25, 0.75])).unwrap();
    let base = estimate_fqte(&ds, &spec, &EstimateOptions::default(), &[]).unwrap();
    let grid = vec![DVector::zeros(4), DVector::from_vec(base.c_hat.clone())];
    let report = estimate_fqte(&ds, &spec, &EstimateOptions::default(), &grid).unwrap();
    assert_eq!(report.sensitivity.len(), 2);
    assert!((report.sensitivity[0].estimate - report.delta_p).abs() < 1e-12);
    assert!((report.sensitivity[1].estimate - report.delta_v).abs() < 1e-12);
}

#[test]
fn estimate_is_reproducible() {
    let ds = generate(&DgpConfig::new(300, 1200, 34)).dataset;
    let spec = QuantileSpec::new(0.25, Some(vec![0.25, 0.5])).unwrap();
    let a = estimate_fqte(&ds, &spec, &EstimateOptions::default(), &[]).unwrap();
    let b = estimate_fqte(&ds, &spec, &EstimateOptions::default(), &[]).unwrap();
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
}

#[test]
fn unnormalized_weights_also_work() {
    let ds = generate(&DgpConfig::new(500, 2000, 35)).dataset;
    let spec = QuantileSpec::new(0.5, None).unwrap();
    let opts = EstimateOptions {
        normalize_weights: false,
        ..EstimateOptions::default()
    };
    let report = estimate_fqte(&ds, &spec, &opts, &[]).unwrap();
    assert!(report.se < report.se_v);
}

fn single_scenario(reps: usize) -> McSettings {
    McSettings {
        dgp: DgpConfig::new(300, 1200, 36),
        scenarios: vec![ScenarioSpec::new(ScenarioName::Dr11, true)],
        quantiles: vec![QuantileSpec::new(0.5, None).unwrap()],
        replications: reps,
        workers: 1,
        options: EstimateOptions::default(),
        truth: None,
        keep_draws: true,
    }
}

#[test]
fn single_replication_report() {
    let report = run_monte_carlo(&single_scenario(1)).unwrap();
    assert_eq!(report.replications, 1);
    let draw = &report.draws[0].scenarios[0];
    for (method, est) in [("v", draw.delta_v), ("c1", draw.fused[0].delta_p)] {
        let row = report.row("dr11", method).unwrap();
        assert!(row.cr == 0.0 || row.cr == 1.0);
        assert!((row.mse - (est - report.truth).powi(2)).abs() < 1e-15);
        assert_eq!(row.sd, 0.0);
    }
}

#[test]
fn monte_carlo_rejects_bad_settings() {
    let mut s = single_scenario(0);
    assert!(run_monte_carlo(&s).unwrap_err().is_config_error());
    s.replications = 2;
    s.dgp = DgpConfig::new(100, 100, 1);
    assert!(run_monte_carlo(&s).unwrap_err().is_config_error());
    s.dgp = DgpConfig::new(100, 400, 1);
    s.quantiles.push(QuantileSpec::new(0.25, None).unwrap());
    assert!(run_monte_carlo(&s).unwrap_err().is_config_error());
}

#[test]
fn csv_report_layout() {
    let report = run_monte_carlo(&single_scenario(3)).unwrap();
    let csv = report.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "Method,BIAS,MSE,SE,CR");
    assert!(lines[1].starts_with("dr11_v,"));
    assert!(lines[2].starts_with("dr11_c1,"));
}
