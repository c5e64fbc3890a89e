//! Model assembly, optimization and run artifacts.

use std::f64::consts::FRAC_PI_2;
use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use vqsolve::loss::{CollocationGrid, LossConfig, Model};
use vqsolve::optimize::{
    cmaes_minimize_observed, gradient_minimize_observed, staged_optimize_observed, CmaesConfig,
    GradientConfig, GradientMethod, IterationRecord, RunState, ShotSchedule,
};
use vqsolve::problems::{max_abs_error, DifferentialProblem};
use vqsolve::rng::Stream;

use crate::config::{Benchmark, InitKind, OptimizerKind, RunConfig};
use crate::error::{CliError, Result};

pub const CONVERGENCE_FILE: &str = "convergence.csv";
pub const SOLUTION_FILE: &str = "solution.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const CONFIG_ECHO_FILE: &str = "config.echo";
pub const OUTPUT_DIR_ENV: &str = "VQSOLVE_OUTPUT_DIR";

const INIT_TAG: u64 = 1;
const NOISE_TAG: u64 = 2;
const OPT_TAG: u64 = 3;
pub(crate) const CHECK_TAG: u64 = 4;

/// Points per axis of the hypoelastic solution table.
const LINE_POINTS: usize = 101;

pub fn build_model<P: DifferentialProblem>(config: &RunConfig, problem: P) -> Result<Model<P>> {
    let domain = problem.domain()?;
    let functions = config
        .encodings
        .iter()
        .map(|l| l.build(&domain, config.eval_mode()))
        .collect::<vqsolve::Result<Vec<_>>>()?;
    let grid = CollocationGrid::uniform(&domain, &config.grid)?;
    let loss = LossConfig {
        strategy: config.bc,
        bc_weight: config.bc_weight,
        grid,
    };
    Ok(Model::new(problem, functions, loss)?)
}

/// Starting angles drawn from the run's init stream.
pub fn initial_theta(config: &RunConfig) -> Result<Vec<f64>> {
    let init = &config.init;
    if init.kind == InitKind::Given {
        return Ok(init.theta.clone());
    }
    let mut rng = Stream::new(config.seed).child(INIT_TAG).rng();
    let s = init.scale;
    let mut theta = Vec::new();
    for layout in &config.encodings {
        let circuit = layout.ansatz.build(layout.qubits(), layout.depth)?;
        let first_layer = circuit.num_qubits();
        for i in 0..circuit.num_params() {
            let mut v = rng.random_range(-s..=s);
            if init.kind == InitKind::ZeroFunction && i < first_layer {
                v += FRAC_PI_2;
            }
            theta.push(v);
        }
    }
    Ok(theta)
}

/// Runs the configured optimizer on `model` from `x0`.
pub fn optimize<P: DifferentialProblem + Clone>(
    config: &RunConfig,
    model: &Model<P>,
    x0: Vec<f64>,
    observer: &mut dyn FnMut(&IterationRecord),
) -> Result<RunState> {
    let master = Stream::new(config.seed);
    let noise = master.child(NOISE_TAG);
    let opt = master.child(OPT_TAG);
    let o = &config.optimizer;
    let state = match o.kind {
        OptimizerKind::Lbfgs | OptimizerKind::Adam => {
            let method = match o.kind {
                OptimizerKind::Lbfgs => GradientMethod::Lbfgs { memory: o.memory },
                _ => GradientMethod::adam(o.lr),
            };
            let gc = GradientConfig {
                method,
                max_iterations: o.max_iterations,
                grad_tol: o.grad_tol,
                target_loss: o.target_loss,
            };
            gradient_minimize_observed(
                |x, i| Ok(model.loss(x, noise.child(i as u64))?.total),
                |x, i| {
                    let (l, g) = model.loss_and_gradient(x, noise.child(i as u64))?;
                    Ok((l.total, g))
                },
                x0,
                &gc,
                opt.key(),
                observer,
            )?
        }
        OptimizerKind::Cmaes => {
            let mut cc = CmaesConfig::new(x0, o.sigma_init);
            cc.population = o.population;
            cc.max_iterations = Some(o.max_iterations);
            cc.target_loss = o.target_loss;
            cmaes_minimize_observed(
                |x, i| Ok(model.loss(x, noise.child(i as u64))?.total),
                &cc,
                opt,
                observer,
            )?
        }
        OptimizerKind::Staged => {
            let schedule = ShotSchedule::new(o.stages.clone())?;
            staged_optimize_observed(
                |shots| {
                    let mut m = model.clone();
                    m.set_mode(config.stage_mode(shots))?;
                    Ok(move |x: &[f64], i: usize| Ok(m.loss(x, noise.child(i as u64))?.total))
                },
                &schedule,
                x0,
                o.population,
                opt,
                observer,
            )?
        }
    };
    Ok(state)
}

/// Field table of a finished run: coordinates, then predicted and exact
/// values per field.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionTable {
    pub fields: Vec<String>,
    pub points: Vec<Vec<f64>>,
    pub predicted: Vec<Vec<f64>>,
    pub exact: Vec<Vec<f64>>,
}

impl SolutionTable {
    pub fn evaluate<P: DifferentialProblem>(
        model: &Model<P>,
        theta: &[f64],
        points: Vec<Vec<f64>>,
    ) -> Result<Self> {
        Ok(Self {
            fields: model
                .problem()
                .fields()
                .iter()
                .map(|s| s.to_string())
                .collect(),
            predicted: model.predict(theta, &points)?,
            exact: model.analytic(&points)?,
            points,
        })
    }

    pub fn max_errors(&self) -> Result<Vec<(String, f64)>> {
        self.fields
            .iter()
            .enumerate()
            .map(|(j, name)| {
                let p: Vec<f64> = self.predicted.iter().map(|r| r[j]).collect();
                let e: Vec<f64> = self.exact.iter().map(|r| r[j]).collect();
                Ok((name.clone(), max_abs_error(&p, &e)?))
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub state: RunState,
    /// Loss of the last logged iteration.
    pub final_loss: f64,
    /// Noise-free loss at the returned parameters.
    pub exact_loss: f64,
    pub max_errors: Vec<(String, f64)>,
    pub wall_time: f64,
}

pub fn default_output_root() -> PathBuf {
    std::env::var_os(OUTPUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// Runs `config` into a fresh directory below its output root.
pub fn solve(config: &RunConfig) -> Result<RunOutcome> {
    let root = config
        .output_dir
        .clone()
        .unwrap_or_else(default_output_root);
    solve_in(config, &root)
}

pub fn solve_in(config: &RunConfig, root: &Path) -> Result<RunOutcome> {
    config.validate()?;
    let dir = create_run_dir(root, config)?;
    write_file(&dir.join(CONFIG_ECHO_FILE), &config.serialize())?;
    match config.benchmark {
        Benchmark::Hypoelastic => execute(config, build_model(config, config.hypoelastic)?, dir),
        Benchmark::BurgersCase1 | Benchmark::BurgersCase2 => {
            execute(config, build_model(config, config.burgers)?, dir)
        }
    }
}

fn create_run_dir(root: &Path, config: &RunConfig) -> Result<PathBuf> {
    fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
    let stamp = chrono::Local::now().format("%Y%m%dT%H%M%S");
    let base = format!("{}-{stamp}-{}", config.benchmark.as_str(), config.seed);
    let mut dir = root.join(&base);
    let mut n = 1;
    loop {
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                n += 1;
                dir = root.join(format!("{base}-{n}"));
            }
            Err(e) => return Err(CliError::io(&dir, e)),
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

struct ConvergenceLog {
    writer: csv::Writer<File>,
    error: Option<csv::Error>,
}

impl ConvergenceLog {
    fn create(path: &Path) -> Result<Self> {
        let mut writer = csv::Writer::from_path(path)?;
        writer.write_record([
            "iteration",
            "stage",
            "shots",
            "evaluations",
            "loss",
            "best_loss",
        ])?;
        writer.flush().map_err(|e| CliError::io(path, e))?;
        Ok(Self {
            writer,
            error: None,
        })
    }

    fn record(&mut self, r: &IterationRecord) {
        if self.error.is_some() {
            return;
        }
        let row = [
            r.iteration.to_string(),
            r.stage.to_string(),
            r.shots.unwrap_or(0).to_string(),
            r.evaluations.to_string(),
            fmt_float(r.loss),
            fmt_float(r.best_loss),
        ];
        let res = self
            .writer
            .write_record(&row)
            .and_then(|_| self.writer.flush().map_err(csv::Error::from));
        if let Err(e) = res {
            self.error = Some(e);
        }
    }

    fn finish(mut self) -> Result<()> {
        if let Some(e) = self.error.take() {
            return Err(e.into());
        }
        self.writer.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

fn solution_points<P: DifferentialProblem>(model: &Model<P>) -> Result<Vec<Vec<f64>>> {
    let domain = model.problem().domain()?;
    if domain.len() == 1 {
        let (lo, hi) = (domain[0].lo(), domain[0].hi());
        let step = (hi - lo) / (LINE_POINTS - 1) as f64;
        Ok((0..LINE_POINTS)
            .map(|i| {
                vec![if i + 1 == LINE_POINTS {
                    hi
                } else {
                    lo + step * i as f64
                }]
            })
            .collect())
    } else {
        Ok(model.config().grid.points().to_vec())
    }
}

fn execute<P: DifferentialProblem + Clone>(
    config: &RunConfig,
    model: Model<P>,
    dir: PathBuf,
) -> Result<RunOutcome> {
    let start = Instant::now();
    let x0 = initial_theta(config)?;
    let mut log = ConvergenceLog::create(&dir.join(CONVERGENCE_FILE))?;
    let result = optimize(config, &model, x0, &mut |r| log.record(r));
    let logged = log.finish();
    let state = result?;
    logged?;
    let wall_time = start.elapsed().as_secs_f64();

    let mut exact = model.clone();
    exact.set_mode(vqsolve::encoding::EvalMode::Exact)?;
    let exact_loss = exact.loss(&state.best_theta, Stream::new(0))?.total;
    let table = SolutionTable::evaluate(&model, &state.best_theta, solution_points(&model)?)?;
    write_solution(&dir.join(SOLUTION_FILE), &table, config.benchmark)?;
    let max_errors = table.max_errors()?;
    let final_loss = state.history.last().map_or(f64::NAN, |r| r.loss);
    let outcome = RunOutcome {
        dir,
        state,
        final_loss,
        exact_loss,
        max_errors,
        wall_time,
    };
    write_file(
        &outcome.dir.join(SUMMARY_FILE),
        &summary_text(config, &outcome),
    )?;
    Ok(outcome)
}

fn write_solution(path: &Path, table: &SolutionTable, benchmark: Benchmark) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = match benchmark {
        Benchmark::Hypoelastic => vec!["x".into()],
        _ => vec!["x".into(), "t".into()],
    };
    for f in &table.fields {
        header.extend([
            format!("{f}_pred"),
            format!("{f}_exact"),
            format!("{f}_abs_err"),
        ]);
    }
    w.write_record(&header)?;
    for ((p, pred), ex) in table.points.iter().zip(&table.predicted).zip(&table.exact) {
        let mut row: Vec<String> = p.iter().map(|&v| fmt_float(v)).collect();
        for (a, b) in pred.iter().zip(ex) {
            row.extend([fmt_float(*a), fmt_float(*b), fmt_float((a - b).abs())]);
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn summary_text(config: &RunConfig, o: &RunOutcome) -> String {
    let s = &o.state;
    let mut lines = vec![
        format!("benchmark = {}", config.benchmark.as_str()),
        format!("seed = {}", config.seed),
        format!("mode = {}", config.mode.as_str()),
        format!("optimizer = {}", config.optimizer.kind.as_str()),
        format!("iterations = {}", s.history.len()),
        format!("evaluations = {}", s.evaluations),
        format!("final_loss = {}", fmt_float(o.final_loss)),
        format!("best_loss = {}", fmt_float(s.best_loss)),
        format!("incumbent_loss = {}", fmt_float(s.incumbent_loss)),
        format!("exact_loss = {}", fmt_float(o.exact_loss)),
    ];
    for (name, err) in &o.max_errors {
        lines.push(format!("max_abs_error.{name} = {}", fmt_float(*err)));
    }
    lines.push(format!("wall_time_s = {:.3}", o.wall_time));
    for (i, st) in s.stages.iter().enumerate() {
        let pre = format!("stage{}", i + 1);
        lines.push(format!("{pre}.shots = {}", st.shots.unwrap_or(0)));
        lines.push(format!("{pre}.sigma_init = {:?}", st.sigma_init));
        lines.push(format!("{pre}.iterations = {}", st.iterations));
        lines.push(format!("{pre}.evaluations = {}", st.evaluations));
        lines.push(format!("{pre}.lowest_loss = {}", fmt_float(st.lowest_loss)));
    }
    let theta: Vec<String> = s.best_theta.iter().map(|v| format!("{v:?}")).collect();
    lines.push(format!("best_theta = {}", theta.join(", ")));
    lines.join("\n") + "\n"
}
