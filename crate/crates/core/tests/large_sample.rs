use fqte::data::Record;
use fqte::drq::density_from_weighted;
use fqte::models::{fit_logistic, fit_normal_linear, FeatureMap};
use fqte::sim::{covariates, generate, monte_carlo_qte, DgpConfig, TRUE_QTE};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn within(got: &[f64], want: &[f64], tol: f64) -> bool {
    got.iter().zip(want).all(|(g, w)| (g - w).abs() <= tol)
}

#[test]
fn working_models_recover_generating_coefficients() {
    let ds = generate(&DgpConfig::new(100_000, 100_001, 21)).dataset;
    let records = ds.validation();
    let full = FeatureMap::full(true);
    let design = full.design(records).unwrap();
    let t: Vec<u8> = records.iter().map(|r| r.t).collect();
    let ps = fit_logistic(&design, &t).unwrap();
    assert!(ps.converged);
    let alpha: Vec<f64> = ps.alpha.iter().copied().collect();
    assert!(
        within(&alpha, &[0.0, 0.25, -0.25, 0.25, -0.25], 0.05),
        "{alpha:?}"
    );

    for (arm, sd) in [(1u8, 2.0), (0, 1.0)] {
        let rows: Vec<&Record> = records.iter().filter(|r| r.t == arm).collect();
        let design = full.design(rows.iter().copied()).unwrap();
        let y: Vec<f64> = rows.iter().map(|r| r.y).collect();
        let fit = fit_normal_linear(&design, &y, arm).unwrap();
        let beta: Vec<f64> = fit.beta.iter().copied().collect();
        assert!(
            within(&beta, &[0.0, 0.5, -0.5, 0.5, -0.5], 0.05),
            "arm {arm}: {beta:?}"
        );
        assert!(
            (fit.sigma - sd).abs() <= 0.05,
            "arm {arm}: sigma {}",
            fit.sigma
        );
    }
}

#[test]
fn first_covariate_has_unit_mean_and_variance() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let draws: Vec<f64> = (0..1_000_000).map(|_| covariates(&mut rng)[0]).collect();
    let m = draws.iter().sum::<f64>() / draws.len() as f64;
    let v = draws.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
    assert!((m - 1.0).abs() < 0.01, "mean {m}");
    assert!((v - 1.0).abs() < 0.02, "variance {v}");
}

#[test]
fn stored_truth_agrees_with_monte_carlo() {
    // each difference has Monte Carlo SD near 1e-3 at 10^7 draws
    for (k, &(p, truth)) in TRUE_QTE.iter().enumerate() {
        let mc = monte_carlo_qte(p, 10_000_000, 40 + k as u64);
        assert!(
            (mc - truth).abs() < 4e-3,
            "p = {p}: stored {truth}, Monte Carlo {mc}"
        );
    }
}

#[test]
fn density_of_standard_normal_at_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let ys: Vec<f64> = (0..100_000)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let ws = vec![1.0; ys.len()];
    let f = density_from_weighted(1, &ys, &ws, 0.0).unwrap();
    assert!((0.37..=0.43).contains(&f.value), "{}", f.value);
}
