use nashpl::diagnostics::{fit_rate, fit_trace, RateKind};
use nashpl::lqgame::{lq_cost_and_gradient, multiconvexity_counterexample, CostGradient};
use nashpl::problems::registry_get;
use nashpl::solvers::{expected_one_step, run, CaseTag, SolverConfig, Variant};

fn rbcd(alpha: f64, t: usize, seed: u64) -> SolverConfig {
    SolverConfig { variant: Variant::Rbcd, alpha, t, seed, ..SolverConfig::default() }
}

#[test]
fn rbcd_is_linear_on_f4_and_f6() {
    for name in ["f4", "f6"] {
        let p = registry_get(name).unwrap();
        for seed in 1..=5 {
            let r = run(p.game.as_ref(), &p.point(vec![1.5, 0.5]).unwrap(), &rbcd(0.05, 2000, seed)).unwrap();
            let f = fit_rate(&r.trace.iter().map(|x| x.sum_f).collect::<Vec<_>>()).unwrap();
            assert_eq!(f.kind, RateKind::Linear, "{name} seed {seed}: {f:?}");
        }
    }
}

#[test]
fn rbcd_is_sublinear_on_f3_from_the_figure_start() {
    let p = registry_get("f3").unwrap();
    let r = run(p.game.as_ref(), &p.point(vec![1.5, 0.5]).unwrap(), &rbcd(0.05, 2000, 2)).unwrap();
    let f = fit_rate(&r.trace.iter().map(|x| x.sum_f).collect::<Vec<_>>()).unwrap();
    assert_eq!(f.kind, RateKind::Sublinear, "{f:?}");
}

#[test]
fn adaptive_solver_reaches_the_strict_saddle_and_rbcd_escapes() {
    let p = registry_get("saddle").unwrap();
    let x0 = p.point(vec![1.2, -0.8]).unwrap();
    let cfg = SolverConfig { variant: Variant::ARbcd, alpha: 0.01, beta: 0.1, t_prime: 50, t: 3000, seed: 4, ..SolverConfig::default() };
    let a = run(p.game.as_ref(), &x0, &cfg).unwrap();
    assert!(a.final_residual <= 1e-6);
    assert_eq!(fit_trace(&a.trace).unwrap().kind, RateKind::Linear);
    let b = run(p.game.as_ref(), &x0, &SolverConfig { variant: Variant::Rbcd, t: 2000, ..cfg }).unwrap();
    assert_eq!(fit_trace(&b.trace).unwrap().kind, RateKind::Diverged);
}

#[test]
fn adaptive_solver_converges_on_the_resource_game() {
    let p = registry_get("resource").unwrap();
    for (seed, x0) in p.sample_points(10, 3).into_iter().enumerate() {
        let cfg = SolverConfig { variant: Variant::ARbcd, alpha: 0.05, beta: 0.25, t: 3000, seed: seed as u64, ..SolverConfig::default() };
        let r = run(p.game.as_ref(), &x0, &cfg).unwrap();
        assert!(r.final_residual <= 1e-6);
        assert!(r.trace[1..].iter().all(|x| x.tag == Some(CaseTag::Case1)));
    }
}

#[test]
fn lq_adaptive_run_decreases_in_expectation() {
    let p = registry_get("lq").unwrap();
    let x0 = p.point(vec![0.0; 6]).unwrap();
    let cfg = SolverConfig { variant: Variant::ARbcd, alpha: 0.01, beta: 0.02, t_prime: 20, t: 500, seed: 1, record_points: true, ..SolverConfig::default() };
    let r = run(p.game.as_ref(), &x0, &cfg).unwrap();
    assert!(r.trace.last().unwrap().gap <= 1e-4 * r.trace[0].gap);
    for (rec, pt) in r.trace.iter().zip(&r.points).step_by(25) {
        let e = expected_one_step(p.game.as_ref(), &p.point(pt.clone()).unwrap(), &cfg, Variant::ARbcd).unwrap();
        assert!(e <= rec.gap + 1e-10);
    }
}

#[test]
fn lq_counterexample_midpoint_is_unstable() {
    let (spec, k1, k1p, k2) = multiconvexity_counterexample();
    let cost = |k: &nalgebra::DMatrix<f64>| lq_cost_and_gradient(&spec, &[k.clone(), k2.clone()], 0).unwrap();
    assert!(matches!(cost(&k1), CostGradient::Finite { .. }));
    assert!(matches!(cost(&k1p), CostGradient::Finite { .. }));
    assert_eq!(cost(&((&k1 + &k1p) * 0.5)), CostGradient::Infinite);
}

#[test]
fn identical_seeds_give_identical_traces() {
    let p = registry_get("f6").unwrap();
    let x0 = p.point(vec![0.4, -1.1]).unwrap();
    for v in Variant::ALL {
        let cfg = SolverConfig { variant: v, alpha: 0.05, t: 300, seed: 99, beta: 0.25, ..SolverConfig::default() };
        let a = run(p.game.as_ref(), &x0, &cfg).unwrap();
        let b = run(p.game.as_ref(), &x0, &cfg).unwrap();
        assert_eq!(a.trace, b.trace, "{v}");
    }
}
