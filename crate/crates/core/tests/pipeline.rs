use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use vqsolve::encoding::{build_benchmark_encodings, EvalMode};
use vqsolve::loss::{BcStrategy, CollocationGrid, LossConfig, Model};
use vqsolve::optimize::{gradient_minimize, GradientConfig, GradientMethod};
use vqsolve::problems::{max_abs_error, BurgersProblem, DifferentialProblem};
use vqsolve::rng::Stream;

#[test]
fn burgers_case1_solves_in_exact_mode() {
    let p = BurgersProblem::new(0.5, 0.25).unwrap();
    let grid = CollocationGrid::uniform(&p.domain().unwrap(), &[8, 8]).unwrap();
    let config = LossConfig {
        strategy: BcStrategy::Shift,
        bc_weight: 0.0,
        grid,
    };
    let mut m = Model::new(
        p,
        build_benchmark_encodings("burgers-case1").unwrap(),
        config,
    )
    .unwrap();
    m.set_mode(EvalMode::Exact).unwrap();
    let q = m.functions()[0].circuit().num_qubits();
    let mut rng = Stream::new(4).rng();
    let x0: Vec<f64> = (0..m.num_params())
        .map(|i| rng.random_range(-0.05..0.05) + if i < q { FRAC_PI_2 } else { 0.0 })
        .collect();
    let s = Stream::new(0);
    let mut cfg = GradientConfig::new(GradientMethod::lbfgs(), 300);
    cfg.target_loss = Some(1e-7);
    let state = gradient_minimize(
        |x, _| Ok(m.loss(x, s)?.total),
        |x, _| {
            let (l, g) = m.loss_and_gradient(x, s)?;
            Ok((l.total, g))
        },
        x0,
        &cfg,
        1,
    )
    .unwrap();
    assert!(state.best_loss < 1e-5, "loss {}", state.best_loss);

    let points: Vec<Vec<f64>> = (0..=10)
        .flat_map(|i| (0..=10).map(move |j| vec![0.095 * i as f64, 0.095 * j as f64]))
        .collect();
    let pred: Vec<f64> = m
        .predict(&state.best_theta, &points)
        .unwrap()
        .iter()
        .map(|r| r[0])
        .collect();
    let exact: Vec<f64> = m.analytic(&points).unwrap().iter().map(|r| r[0]).collect();
    let err = max_abs_error(&pred, &exact).unwrap();
    assert!(err < 1e-2, "max error {err}");
}
