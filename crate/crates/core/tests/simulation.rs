mod common;

use dyadreg::simulate::{
    replication_rng, run_coverage_with_threads, run_replication, unit_mean_lognormal, SimError,
};
use dyadreg::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn config(n: usize, reps: usize, sigma_a: f64, seed: u64) -> SimConfig {
    SimConfig {
        n_nodes: n,
        n_reps: reps,
        sigma_a,
        master_seed: seed,
        ..Default::default()
    }
}

#[test]
fn lognormal_draws_have_unit_mean() {
    let mut rng = replication_rng(5, 1);
    for scale in [0.25, 1.0] {
        let n = 1_000_000;
        let draws: Vec<f64> = (0..n).map(|_| unit_mean_lognormal(&mut rng, scale)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let sd = ((scale * scale).exp() - 1.0).sqrt();
        assert!((mean - 1.0).abs() <= 3.0 * sd / (n as f64).sqrt(), "scale {scale}: {mean}");
    }
}

#[test]
fn generator_follows_documented_draw_order() {
    let cfg = SimConfig {
        n_nodes: 4,
        intercept: false,
        master_seed: 99,
        ..Default::default()
    };
    let (ds, truth) = gen_dataset(&cfg, 7);
    assert_eq!(truth.as_slice(), &cfg.theta_true);

    let mut rng = replication_rng(99, 7);
    let mut nodes = Vec::new();
    for _ in 0..4 {
        let x: f64 = rng.random();
        let y: f64 = rng.random();
        let w: f64 = rng.random();
        let z: f64 = rng.sample(StandardNormal);
        let a = (cfg.sigma_a * z).exp() / (cfg.sigma_a * cfg.sigma_a / 2.0).exp();
        nodes.push((x, y, w, a));
    }
    for i in 0..4 {
        for j in 0..4 {
            if i == j {
                continue;
            }
            let z: f64 = rng.sample(StandardNormal);
            let u = (cfg.sigma * z - cfg.sigma * cfg.sigma / 2.0).exp();
            let (xi, yi, wi, ai) = nodes[i];
            let (xj, yj, wj, aj) = nodes[j];
            let d = (xi - xj).hypot(yi - yj);
            let expected = (-d - 0.5 * wi + 0.5 * wj).exp() * ai * aj * u;
            assert!((ds.y(i, j) - expected).abs() <= 1e-12 * expected);
            let r = ds.r(i, j);
            assert!((r[0] - d).abs() < 1e-15);
            assert_eq!(&r[1..], &[wi, wj]);
        }
    }
}

#[test]
fn intercept_design_prepends_zero_truth() {
    let (ds, truth) = gen_dataset(&config(6, 1, 0.25, 1), 1);
    assert_eq!(ds.regressor_names()[0], "intercept");
    assert_eq!(truth.as_slice(), &[0.0, -1.0, -0.5, 0.5]);
    let mut cfg = config(6, 1, 0.25, 1);
    cfg.intercept = false;
    let (plain, _) = gen_dataset(&cfg, 1);
    assert_eq!(plain.y(2, 3), ds.y(2, 3));
}

#[test]
fn replications_use_independent_streams() {
    let cfg = config(5, 2, 0.25, 0);
    let (a, _) = gen_dataset(&cfg, 1);
    let (b, _) = gen_dataset(&cfg, 2);
    let (c, _) = gen_dataset(&cfg, 1);
    assert_ne!(a.y(0, 1), b.y(0, 1));
    assert_eq!(a, c);
}

#[test]
fn coverage_is_identical_across_thread_counts() {
    let cfg = config(30, 24, 0.25, 8);
    let one = run_coverage_with_threads(&cfg, 1).unwrap();
    let four = run_coverage_with_threads(&cfg, 4).unwrap();
    let json = |r: &CoverageReport| serde_json::to_string(r).unwrap();
    assert_eq!(json(&one), json(&four));
}

#[test]
fn invalid_configs_are_rejected() {
    for cfg in [
        config(2, 10, 0.25, 0),
        config(10, 0, 0.25, 0),
        config(10, 10, -1.0, 0),
        SimConfig {
            nominal_level: 1.0,
            ..Default::default()
        },
        SimConfig {
            estimators: vec![],
            ..Default::default()
        },
    ] {
        assert!(matches!(run_coverage(&cfg), Err(SimError::InvalidConfig(_))));
    }
}

#[test]
fn estimators_agree_without_node_heterogeneity() {
    let cfg = config(100, 200, 0.0, 2024);
    let report = run_coverage(&cfg).unwrap();
    for k in 0..3 {
        let dyad = report.coverage(k, Estimator::Dyad).unwrap().mean_se;
        for est in [Estimator::Fg, Estimator::Huber] {
            let ratio = report.coverage(k, est).unwrap().mean_se / dyad;
            assert!((0.8..=1.25).contains(&ratio), "param {k} {est}: ratio {ratio}");
        }
    }
}

#[test]
fn nominal_coverage_without_node_heterogeneity() {
    let cfg = config(100, 500, 0.0, 77);
    let report = run_coverage(&cfg).unwrap();
    assert!(report.n_excluded <= 5);
    for k in 0..3 {
        for est in [Estimator::Fg, Estimator::Dyad] {
            let c = report.coverage(k, est).unwrap().coverage;
            assert!((0.92..=0.97).contains(&c), "param {k} {est}: coverage {c}");
        }
    }
}

#[test]
fn fg_standard_errors_exceed_dyad_clustered_under_heterogeneity() {
    let cfg = SimConfig {
        n_nodes: 200,
        master_seed: 31,
        estimators: vec![Estimator::Dyad, Estimator::Fg],
        ..Default::default()
    };
    let draws: Vec<_> = (1..=40)
        .filter_map(|k| run_replication(&cfg, k).outcome.ok())
        .collect();
    assert!(draws.len() >= 38);
    for k in 0..3 {
        let wider = draws
            .iter()
            .filter(|d| {
                d.estimator(Estimator::Fg).unwrap().se[k] > d.estimator(Estimator::Dyad).unwrap().se[k]
            })
            .count();
        assert!(wider as f64 >= 0.95 * draws.len() as f64, "param {k}: {wider}/{}", draws.len());
    }
}
