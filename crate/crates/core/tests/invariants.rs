use proptest::prelude::*;
use vqsolve::encoding::{build_benchmark_encodings, EvalMode};
use vqsolve::loss::{loss_bc, loss_pde, BcStrategy, CollocationGrid, LossConfig, Model};
use vqsolve::problems::{BurgersProblem, DifferentialProblem, HypoelasticProblem};
use vqsolve::rng::Stream;
use vqsolve::sim::{run_circuit, Gate, ParamCircuit};
use vqsolve::spectral::{cheb, ChebyshevBasis, ObservableSpec};

fn circuit_from(n: usize, ops: &[(u8, usize, usize)]) -> ParamCircuit {
    let mut gates = Vec::new();
    let mut p = 0;
    for &(kind, a, b) in ops {
        let (a, b) = (a % n, b % n);
        match kind % 4 {
            0 => {
                gates.push(Gate::ry(a, p));
                p += 1;
            }
            1 => {
                gates.push(Gate::rx(a, p));
                p += 1;
            }
            2 if a != b => gates.push(Gate::cnot(a, b)),
            3 if a != b => gates.push(Gate::cz(a, b)),
            _ => {}
        }
    }
    ParamCircuit::new(n, gates, 1).unwrap()
}

fn burgers_model(mode: EvalMode, counts: &[usize]) -> Model<BurgersProblem> {
    let p = BurgersProblem::new(0.5, 0.25).unwrap();
    let grid = CollocationGrid::uniform(&p.domain().unwrap(), counts).unwrap();
    let config = LossConfig {
        strategy: BcStrategy::Both,
        bc_weight: 1.0,
        grid,
    };
    let mut m = Model::new(
        p,
        build_benchmark_encodings("burgers-case1").unwrap(),
        config,
    )
    .unwrap();
    m.set_mode(mode).unwrap();
    m
}

fn hypo_model() -> Model<HypoelasticProblem> {
    let p = HypoelasticProblem::default();
    let grid = CollocationGrid::uniform(&p.domain().unwrap(), &[8]).unwrap();
    let config = LossConfig {
        strategy: BcStrategy::Shift,
        bc_weight: 0.0,
        grid,
    };
    Model::new(p, build_benchmark_encodings("hypoelastic").unwrap(), config).unwrap()
}

fn angles(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-std::f64::consts::PI..std::f64::consts::PI, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gates_preserve_the_norm(
        n in 1usize..=6,
        ops in proptest::collection::vec((any::<u8>(), 0usize..6, 0usize..6), 1..40),
        seed in any::<u64>(),
    ) {
        let circuit = circuit_from(n, &ops);
        let theta: Vec<f64> = {
            use rand::Rng;
            let mut rng = Stream::new(seed).rng();
            (0..circuit.num_params()).map(|_| rng.random_range(-10.0..10.0)).collect()
        };
        let state = run_circuit(&circuit, &theta).unwrap();
        prop_assert!((state.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chebyshev_at_minus_one_alternates(i in 0usize..=63) {
        let want = if i % 2 == 0 { 1.0 } else { -1.0 };
        prop_assert!((cheb(i, -1.0) - want).abs() < 1e-12);
    }

    #[test]
    fn global_table_flips_sign_with_the_leading_bit(
        registers in proptest::collection::vec(1usize..=3, 1..=2),
        a in 0.0f64..=1.0, b in 0.0f64..=1.0,
    ) {
        let spec = ObservableSpec::GlobalDiagonal { registers: registers.clone() };
        let bases = vec![ChebyshevBasis::new(0.0, 1.0).unwrap(); registers.len()];
        let point = [a, b][..registers.len()].to_vec();
        let orders = vec![0; registers.len()];
        let table = spec.diagonal_table(&bases, &point, &orders).unwrap();
        let values = table.values();
        let width = 1 + registers.iter().sum::<usize>();
        prop_assert_eq!(values.len(), 1 << width);
        let half = values.len() / 2;
        for i in 0..half {
            prop_assert_eq!(values[i + half], -values[i]);
        }
    }

    #[test]
    fn pde_loss_is_zero_exactly_when_every_residual_vanishes(
        rows in proptest::collection::vec(proptest::collection::vec(
            prop_oneof![Just(0.0), -5.0f64..5.0], 1..3), 1..20),
    ) {
        let loss = loss_pde(&rows).unwrap();
        prop_assert!(loss >= 0.0);
        let all_zero = rows.iter().flatten().all(|&r| r == 0.0);
        prop_assert_eq!(loss == 0.0, all_zero);
    }

    #[test]
    fn bc_loss_is_non_negative(
        pairs in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 0..10),
    ) {
        let (v, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        prop_assert!(loss_bc(&v, &t).unwrap() >= 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn shifts_hold_boundary_data_for_any_theta(th in angles(46), tb in angles(12)) {
        let hm = hypo_model();
        let at0 = &hm.predict(&th, &[vec![0.0]]).unwrap()[0];
        prop_assert_eq!(at0[0], 0.0);
        prop_assert_eq!(at0[1], hm.problem().g);

        let bm = burgers_model(EvalMode::Exact, &[6, 3]);
        let xs: Vec<Vec<f64>> = bm.config().grid.axes()[0].iter().map(|&x| vec![x, 0.0]).collect();
        for (p, v) in xs.iter().zip(bm.predict(&tb, &xs).unwrap()) {
            prop_assert!((v[0] - (0.5 * p[0] + 0.25)).abs() <= 4.0 * f64::EPSILON);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn losses_are_non_negative_in_every_mode(tb in angles(12), seed in any::<u64>()) {
        for mode in [EvalMode::Exact, EvalMode::Shots(50), EvalMode::Stacked { copies: 3, shots: 20 }] {
            let l = burgers_model(mode, &[4, 3]).loss(&tb, Stream::new(seed)).unwrap();
            prop_assert!(l.pde >= 0.0 && l.bc >= 0.0 && l.total >= 0.0);
        }
    }
}

// Squaring a noisy residual adds its variance, so the sampled loss is biased
// upward by an amount that falls like 1/shots.
#[test]
fn sampled_loss_bias_is_positive_and_shrinks_with_shots() {
    let theta: Vec<f64> = (0..12).map(|i| 0.3 * i as f64 - 1.0).collect();
    let exact = burgers_model(EvalMode::Exact, &[5, 4])
        .loss(&theta, Stream::new(0))
        .unwrap()
        .total;
    let repeats = 400;
    let mut bias = Vec::new();
    for shots in [200u64, 800] {
        let m = burgers_model(EvalMode::Shots(shots), &[5, 4]);
        let v: Vec<f64> = (0..repeats)
            .map(|r| m.loss(&theta, Stream::new(9).child(r)).unwrap().total)
            .collect();
        let mean = v.iter().sum::<f64>() / repeats as f64;
        let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (repeats - 1) as f64).sqrt();
        let se = sd / (repeats as f64).sqrt();
        assert!(mean >= exact - 3.0 * se, "shots {shots}: {mean} vs {exact}");
        bias.push(mean - exact);
    }
    let ratio = bias[0] / bias[1];
    assert!(
        bias[1] > 0.0 && (2.5..6.0).contains(&ratio),
        "bias {bias:?}, ratio {ratio}"
    );
}
