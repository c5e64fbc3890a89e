//! Parameter-shift gradients against central finite differences.
//!
//! Finite-difference error grows with the magnitude of the loss (rounding
//! in `L(θ±h)` is about `ε|L|/h`), so the pass criterion divides the largest
//! component deviation by `max(1, |L|)`. The absolute deviation is reported
//! alongside.

use std::fmt::Write as _;

use rand::Rng;
use vqsolve::loss::Model;
use vqsolve::problems::DifferentialProblem;
use vqsolve::rng::Stream;

use crate::config::{Benchmark, ModeKind, RunConfig};
use crate::error::{CliError, Result};
use crate::run::{build_model, CHECK_TAG};

pub const FD_STEP: f64 = 1e-4;
pub const TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradRow {
    pub index: usize,
    pub param_shift: f64,
    pub finite_diff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub loss: f64,
    pub rows: Vec<GradRow>,
    pub max_abs_deviation: f64,
    /// `max_abs_deviation / max(1, |loss|)`.
    pub max_deviation: f64,
    pub tolerance: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.max_deviation < self.tolerance
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "loss {:.6e}", self.loss);
        let _ = writeln!(
            s,
            "{:>5}  {:>24}  {:>24}  {:>10}",
            "param", "shift", "finite diff", "|diff|"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:>5}  {:>24.16e}  {:>24.16e}  {:>10.3e}",
                r.index,
                r.param_shift,
                r.finite_diff,
                (r.param_shift - r.finite_diff).abs()
            );
        }
        let _ = writeln!(s, "max abs deviation {:.3e}", self.max_abs_deviation);
        let _ = writeln!(
            s,
            "max deviation / max(1, |loss|) {:.3e} (tolerance {:.0e}): {}",
            self.max_deviation,
            self.tolerance,
            if self.passed() { "pass" } else { "FAIL" }
        );
        s
    }
}

/// Compares the model's exact gradient at `theta` with central differences.
pub fn check_gradient<P: DifferentialProblem>(
    model: &Model<P>,
    theta: &[f64],
) -> Result<GradcheckReport> {
    if !model.mode().is_exact() {
        return Err(CliError::Config(
            "gradient check needs exact expectations; set mode = exact".into(),
        ));
    }
    let stream = Stream::new(0);
    let (loss, grad) = model.loss_and_gradient(theta, stream)?;
    let mut rows = Vec::with_capacity(theta.len());
    let mut x = theta.to_vec();
    for (j, &g) in grad.iter().enumerate() {
        x[j] = theta[j] + FD_STEP;
        let up = model.loss(&x, stream)?.total;
        x[j] = theta[j] - FD_STEP;
        let down = model.loss(&x, stream)?.total;
        x[j] = theta[j];
        rows.push(GradRow {
            index: j,
            param_shift: g,
            finite_diff: (up - down) / (2.0 * FD_STEP),
        });
    }
    let max_abs_deviation = rows
        .iter()
        .fold(0.0f64, |m, r| m.max((r.param_shift - r.finite_diff).abs()));
    Ok(GradcheckReport {
        loss: loss.total,
        rows,
        max_abs_deviation,
        max_deviation: max_abs_deviation / loss.total.abs().max(1.0),
        tolerance: TOLERANCE,
    })
}

/// Angles uniform in `[-π, π]`.
pub fn random_theta(n: usize, stream: Stream) -> Vec<f64> {
    let mut rng = stream.rng();
    let pi = std::f64::consts::PI;
    (0..n).map(|_| rng.random_range(-pi..=pi)).collect()
}

/// Gradient check of the configured benchmark at a random `θ` drawn from the
/// config seed.
pub fn gradcheck(config: &RunConfig) -> Result<GradcheckReport> {
    if config.mode != ModeKind::Exact {
        return Err(CliError::Config(format!(
            "gradient check needs exact expectations, config has mode = {}",
            config.mode.as_str()
        )));
    }
    config.validate()?;
    let theta = random_theta(
        config.num_params()?,
        Stream::new(config.seed).child(CHECK_TAG),
    );
    match config.benchmark {
        Benchmark::Hypoelastic => check_gradient(&build_model(config, config.hypoelastic)?, &theta),
        _ => check_gradient(&build_model(config, config.burgers)?, &theta),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use vqsolve::encoding::{EncodedFunction, EvalMode};
    use vqsolve::loss::{BcStrategy, CollocationGrid, LossConfig};
    use vqsolve::problems::ToyProblem;
    use vqsolve::sim::{Gate, ParamCircuit};
    use vqsolve::spectral::{ChebyshevBasis, ObservableSpec};

    fn toy(mode: EvalMode) -> Model<ToyProblem> {
        let circuit = ParamCircuit::new(1, vec![Gate::ry(0, 0)], 1).unwrap();
        let f = EncodedFunction::new(
            "f",
            circuit,
            ObservableSpec::OneLocalZ { qubits: 1 },
            vec![ChebyshevBasis::new(-1.0, 1.0).unwrap()],
            1.0,
        )
        .unwrap()
        .with_mode(mode)
        .unwrap();
        let grid = CollocationGrid::scattered(vec![vec![0.0]]).unwrap();
        let config = LossConfig {
            strategy: BcStrategy::Shift,
            bc_weight: 0.0,
            grid,
        };
        Model::new(ToyProblem, vec![f], config).unwrap()
    }

    #[test]
    fn toy_gradient_is_minus_sine_of_double_angle() {
        for theta in [0.3, 1.1, -2.0] {
            let report = check_gradient(&toy(EvalMode::Exact), &[theta]).unwrap();
            // f = cos θ at the single point, so loss = cos²θ
            let want = -(2.0 * theta).sin();
            assert!((report.rows[0].param_shift - want).abs() < 1e-12);
            assert!(report.passed(), "{}", report.render());
        }
    }

    #[test]
    fn refuses_sampled_models() {
        let err = check_gradient(&toy(EvalMode::Shots(100)), &[0.3]).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        let mut cfg = RunConfig::preset(Benchmark::BurgersCase2);
        cfg.mode = ModeKind::Stacked;
        assert!(gradcheck(&cfg).is_err());
    }

    #[test]
    fn render_lists_every_parameter() {
        let report = check_gradient(&toy(EvalMode::Exact), &[0.7]).unwrap();
        let text = report.render();
        assert_eq!(text.lines().count(), 5);
        assert!(text.contains("pass"));
    }
}
