use std::path::Path;

use minrisk::{compare, run_experiment, scan, Quantity, ScanAxis, Tolerances, TrialConfig};

fn bundled(name: &str) -> TrialConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

#[test]
fn bundled_configs_parse_and_validate() {
    for name in ["iid.json", "independent_variance.json", "factor.json"] {
        let cfg = bundled(name);
        cfg.validate().unwrap();
        assert_eq!((cfg.n, cfg.trials), (500, 200), "{name}");
    }
}

// Full-size doubling (N = 500 -> 1000) is too slow for a unit run; the same
// property is checked one octave lower with 100 trials per point.
#[test]
fn doubling_n_does_not_increase_the_risk_gap() {
    let mut small = bundled("iid.json");
    small.trials = 100;
    small.n = 250;
    let mut large = small.clone();
    large.n = 500;
    let a = run_experiment(&small).unwrap();
    let b = run_experiment(&large).unwrap();
    let gap_small = (a.epsilon.mean - 0.5).abs();
    let gap_large = (b.epsilon.mean - 0.5).abs();
    let pooled_se = (a.epsilon.se.powi(2) + b.epsilon.se.powi(2)).sqrt();
    assert!(
        gap_large <= gap_small + 2.0 * pooled_se,
        "N=250 gap {gap_small}, N=500 gap {gap_large}, pooled se {pooled_se}"
    );
}

#[test]
fn kappa_theory_is_constant_along_factor_scale() {
    let mut cfg = bundled("factor.json");
    cfg.n = 80;
    cfg.trials = 6;
    let points = scan(&cfg, ScanAxis::FScale, &[0.0, 0.5, 1.0, 2.0, 4.0]).unwrap();
    let kappa: Vec<f64> = points
        .iter()
        .map(|p| p.outcome.as_ref().unwrap().prediction.kappa)
        .collect();
    for k in &kappa {
        assert!((k - 1.5).abs() < 1e-12, "{kappa:?}");
    }
    // stronger factor, larger predicted risk
    let eps: Vec<f64> = points
        .iter()
        .map(|p| p.outcome.as_ref().unwrap().prediction.epsilon)
        .collect();
    assert!(eps.windows(2).all(|w| w[1] > w[0]), "{eps:?}");
}

#[test]
fn experiment_is_a_pure_function_of_its_config() {
    let mut cfg = bundled("factor.json");
    cfg.n = 50;
    cfg.trials = 5;
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    assert_eq!(a, b);
    cfg.base_seed += 1;
    assert_ne!(a.epsilon, run_experiment(&cfg).unwrap().epsilon);
}

#[test]
fn expected_risk_concentration_passes_on_factor_config() {
    let mut cfg = bundled("factor.json");
    cfg.trials = 20;
    let r = run_experiment(&cfg).unwrap();
    let report = compare(&r, &Tolerances::default());
    let v = report.verdicts.iter().find(|v| v.quantity == Quantity::QwOr).unwrap();
    assert!(v.pass, "{v:?}");
    assert!(r.kappa.mean >= 1.0);
}
