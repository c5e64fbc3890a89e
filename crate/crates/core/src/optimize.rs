//! Classical optimizers and shot scheduling.
//!
//! Objectives receive the running evaluation index alongside the point so
//! noisy objectives can derive a reproducible noise stream per call.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::Stream;

/// One optimizer iteration (a CMA-ES generation or a gradient step).
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub stage: usize,
    pub shots: Option<u64>,
    pub evaluations: usize,
    pub loss: f64,
    pub best_loss: f64,
}

/// Called once per iteration, as soon as the record exists.
pub type Observer<'a> = &'a mut dyn FnMut(&IterationRecord);

#[derive(Debug, Clone, PartialEq)]
pub struct RunState {
    /// Search mean (CMA-ES) or iterate (gradient methods).
    pub theta: Vec<f64>,
    pub best_theta: Vec<f64>,
    /// Running minimum of every loss seen.
    pub best_loss: f64,
    /// Loss of `best_theta` at the shot count it was last compared under.
    pub incumbent_loss: f64,
    pub evaluations: usize,
    pub history: Vec<IterationRecord>,
    pub stages: Vec<StageSummary>,
    pub seed: u64,
}

impl RunState {
    fn new(theta: Vec<f64>, seed: u64) -> Self {
        Self {
            best_theta: theta.clone(),
            theta,
            best_loss: f64::INFINITY,
            incumbent_loss: f64::INFINITY,
            evaluations: 0,
            history: Vec::new(),
            stages: Vec::new(),
            seed,
        }
    }

    fn record(&mut self, stage: usize, shots: Option<u64>, loss: f64, observer: Observer<'_>) {
        self.best_loss = self.best_loss.min(loss);
        let record = IterationRecord {
            iteration: self.history.len(),
            stage,
            shots,
            evaluations: self.evaluations,
            loss,
            best_loss: self.best_loss,
        };
        observer(&record);
        self.history.push(record);
    }

    fn offer(&mut self, theta: &[f64], loss: f64) {
        if loss < self.incumbent_loss {
            self.incumbent_loss = loss;
            self.best_theta.clear();
            self.best_theta.extend_from_slice(theta);
        }
    }
}

fn check_finite(value: f64, what: &str, x: &[f64]) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite(format!(
            "{what} returned {value} at a point with {} coordinates (first: {:?})",
            x.len(),
            x.first()
        )))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmaesConfig {
    /// `None` uses `4 + ⌊3 ln n⌋`.
    pub population: Option<usize>,
    pub sigma_init: f64,
    pub mean: Vec<f64>,
    pub max_evaluations: usize,
    pub max_iterations: Option<usize>,
    pub target_loss: Option<f64>,
}

impl CmaesConfig {
    pub fn new(mean: Vec<f64>, sigma_init: f64) -> Self {
        Self {
            population: None,
            sigma_init,
            mean,
            max_evaluations: usize::MAX,
            max_iterations: None,
            target_loss: None,
        }
    }

    pub fn default_population(n: usize) -> usize {
        4 + (3.0 * (n.max(1) as f64).ln()).floor() as usize
    }

    pub fn population_size(&self) -> usize {
        self.population
            .unwrap_or_else(|| Self::default_population(self.mean.len()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_init > 0.0 && self.sigma_init.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "sigma_init must be positive, got {}",
                self.sigma_init
            )));
        }
        if self.population_size() < 2 {
            return Err(Error::InvalidConfig("population must be at least 2".into()));
        }
        if self.mean.is_empty() {
            return Err(Error::InvalidConfig("empty initial mean".into()));
        }
        if self.mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("initial mean".into()));
        }
        Ok(())
    }
}

/// `(μ/μ_w, λ)`-CMA-ES with cumulative step-size adaptation.
#[derive(Debug, Clone)]
pub struct Cmaes {
    n: usize,
    lambda: usize,
    weights: Vec<f64>,
    mueff: f64,
    cc: f64,
    cs: f64,
    c1: f64,
    cmu: f64,
    damps: f64,
    chi_n: f64,
    mean: DVector<f64>,
    sigma: f64,
    cov: DMatrix<f64>,
    basis: DMatrix<f64>,
    scales: DVector<f64>,
    pc: DVector<f64>,
    ps: DVector<f64>,
    generation: usize,
}

impl Cmaes {
    pub fn new(config: &CmaesConfig) -> Result<Self> {
        config.validate()?;
        let n = config.mean.len();
        let nf = n as f64;
        let lambda = config.population_size();
        let mu = lambda / 2;
        let raw: Vec<f64> = (0..mu)
            .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - ((i + 1) as f64).ln())
            .collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mueff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let cc = (4.0 + mueff / nf) / (nf + 4.0 + 2.0 * mueff / nf);
        let cs = (mueff + 2.0) / (nf + mueff + 5.0);
        let c1 = 2.0 / ((nf + 1.3).powi(2) + mueff);
        let cmu = (1.0 - c1).min(2.0 * (mueff - 2.0 + 1.0 / mueff) / ((nf + 2.0).powi(2) + mueff));
        let damps = 1.0 + 2.0 * (((mueff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + cs;
        let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));
        Ok(Self {
            n,
            lambda,
            weights,
            mueff,
            cc,
            cs,
            c1,
            cmu,
            damps,
            chi_n,
            mean: DVector::from_column_slice(&config.mean),
            sigma: config.sigma_init,
            cov: DMatrix::identity(n, n),
            basis: DMatrix::identity(n, n),
            scales: DVector::from_element(n, 1.0),
            pc: DVector::zeros(n),
            ps: DVector::zeros(n),
            generation: 0,
        })
    }

    pub fn population(&self) -> usize {
        self.lambda
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.as_slice()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    /// `λ` candidates `m + σ B D z`.
    pub fn ask<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Vec<f64>> {
        (0..self.lambda)
            .map(|_| {
                let z = DVector::from_fn(self.n, |_, _| rng.sample::<f64, _>(StandardNormal));
                let y = &self.basis * self.scales.component_mul(&z);
                (&self.mean + y * self.sigma).as_slice().to_vec()
            })
            .collect()
    }

    /// Updates the distribution from evaluated candidates. Ranking is by
    /// fitness with ties kept in candidate order.
    pub fn tell(&mut self, candidates: &[Vec<f64>], fitness: &[f64]) -> Result<()> {
        if candidates.len() != self.lambda || fitness.len() != self.lambda {
            return Err(Error::LengthMismatch(format!(
                "expected {} candidates and fitness values, got {} and {}",
                self.lambda,
                candidates.len(),
                fitness.len()
            )));
        }
        if let Some(bad) = fitness.iter().find(|f| !f.is_finite()) {
            return Err(Error::NonFinite(format!("fitness value {bad}")));
        }
        let mut order: Vec<usize> = (0..self.lambda).collect();
        order.sort_by(|&a, &b| fitness[a].total_cmp(&fitness[b]));

        let nf = self.n as f64;
        let old = self.mean.clone();
        let ys: Vec<DVector<f64>> = order
            .iter()
            .take(self.weights.len())
            .map(|&i| (DVector::from_column_slice(&candidates[i]) - &old) / self.sigma)
            .collect();
        let mut step = DVector::zeros(self.n);
        for (w, y) in self.weights.iter().zip(&ys) {
            step += y * *w;
        }
        self.mean = &old + &step * self.sigma;

        // C^{-1/2} · step
        let inv_scales = self.scales.map(|d| 1.0 / d);
        let whitened = &self.basis * inv_scales.component_mul(&(self.basis.transpose() * &step));
        self.ps =
            &self.ps * (1.0 - self.cs) + whitened * (self.cs * (2.0 - self.cs) * self.mueff).sqrt();
        self.generation += 1;
        let ps_norm = self.ps.norm();
        let decay = 1.0 - (1.0 - self.cs).powi(2 * self.generation as i32);
        let hsig = ps_norm / decay.sqrt() / self.chi_n < 1.4 + 2.0 / (nf + 1.0);
        let hsig_f = if hsig { 1.0 } else { 0.0 };
        self.pc = &self.pc * (1.0 - self.cc)
            + &step * (hsig_f * (self.cc * (2.0 - self.cc) * self.mueff).sqrt());

        let mut rank_mu = DMatrix::zeros(self.n, self.n);
        for (w, y) in self.weights.iter().zip(&ys) {
            rank_mu += y * y.transpose() * *w;
        }
        let dh = (1.0 - hsig_f) * self.cc * (2.0 - self.cc);
        self.cov = &self.cov * (1.0 - self.c1 - self.cmu + self.c1 * dh)
            + &self.pc * self.pc.transpose() * self.c1
            + rank_mu * self.cmu;
        self.sigma *= ((self.cs / self.damps) * (ps_norm / self.chi_n - 1.0)).exp();
        if !self.sigma.is_finite() || self.sigma <= 0.0 {
            return Err(Error::NonFinite(format!("step size {}", self.sigma)));
        }
        self.decompose();
        Ok(())
    }

    fn decompose(&mut self) {
        // enforce symmetry before the eigensolve
        let sym = (&self.cov + self.cov.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym.clone());
        self.cov = sym;
        self.basis = eig.eigenvectors;
        self.scales = eig.eigenvalues.map(|v| v.max(1e-300).sqrt());
    }
}

/// Stage index, shot count and early-stop threshold of one CMA-ES run.
struct StageTag {
    index: usize,
    shots: Option<u64>,
    threshold: Option<f64>,
}

fn run_cmaes<F>(
    objective: &mut F,
    config: &CmaesConfig,
    stream: Stream,
    state: &mut RunState,
    tag: StageTag,
    observer: Observer<'_>,
) -> Result<f64>
where
    F: FnMut(&[f64], usize) -> Result<f64>,
{
    let mut es = Cmaes::new(config)?;
    let mut rng = stream.rng();
    let start = state.evaluations;
    let mut stage_best = f64::INFINITY;
    let mut iterations = 0;
    loop {
        let candidates = es.ask(&mut rng);
        let mut fitness = Vec::with_capacity(candidates.len());
        for x in &candidates {
            let f = check_finite(objective(x, state.evaluations)?, "objective", x)?;
            state.evaluations += 1;
            fitness.push(f);
        }
        let (best_idx, &gen_best) = fitness
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap_or((0, &f64::INFINITY));
        state.offer(&candidates[best_idx], gen_best);
        stage_best = stage_best.min(gen_best);
        es.tell(&candidates, &fitness)?;
        state.theta = es.mean().to_vec();
        state.record(tag.index, tag.shots, gen_best, observer);
        iterations += 1;
        let done = state.evaluations - start >= config.max_evaluations
            || config.max_iterations.is_some_and(|m| iterations >= m)
            || config.target_loss.is_some_and(|t| stage_best <= t)
            || tag.threshold.is_some_and(|t| stage_best <= t);
        if done {
            return Ok(stage_best);
        }
    }
}

/// Runs CMA-ES from `config.mean` until an evaluation, iteration or target
/// limit triggers.
pub fn cmaes_minimize<F>(objective: F, config: &CmaesConfig, stream: Stream) -> Result<RunState>
where
    F: FnMut(&[f64], usize) -> Result<f64>,
{
    cmaes_minimize_observed(objective, config, stream, &mut |_| {})
}

pub fn cmaes_minimize_observed<F>(
    mut objective: F,
    config: &CmaesConfig,
    stream: Stream,
    observer: Observer<'_>,
) -> Result<RunState>
where
    F: FnMut(&[f64], usize) -> Result<f64>,
{
    config.validate()?;
    let mut state = RunState::new(config.mean.clone(), stream.key());
    let best = run_cmaes(
        &mut objective,
        config,
        stream,
        &mut state,
        StageTag {
            index: 0,
            shots: None,
            threshold: None,
        },
        observer,
    )?;
    state.stages.push(StageSummary {
        shots: None,
        sigma_init: config.sigma_init,
        iterations: state.history.len(),
        evaluations: state.evaluations,
        lowest_loss: best,
        initial_mean: config.mean.clone(),
        best_theta: state.best_theta.clone(),
    });
    Ok(state)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GradientMethod {
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
    /// Limited-memory BFGS with Armijo backtracking.
    Lbfgs { memory: usize },
}

impl GradientMethod {
    pub fn adam(lr: f64) -> Self {
        GradientMethod::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn lbfgs() -> Self {
        GradientMethod::Lbfgs { memory: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientConfig {
    pub method: GradientMethod,
    pub max_iterations: usize,
    /// Stop once `‖∇L‖_∞` falls below this.
    pub grad_tol: f64,
    pub target_loss: Option<f64>,
}

impl GradientConfig {
    pub fn new(method: GradientMethod, max_iterations: usize) -> Self {
        Self {
            method,
            max_iterations,
            grad_tol: 1e-10,
            target_loss: None,
        }
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn vdot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gradient descent with Adam or L-BFGS. `value` is used for line searches;
/// `value_and_grad` at accepted iterates.
pub fn gradient_minimize<V, G>(
    value: V,
    value_and_grad: G,
    x0: Vec<f64>,
    config: &GradientConfig,
    seed: u64,
) -> Result<RunState>
where
    V: FnMut(&[f64], usize) -> Result<f64>,
    G: FnMut(&[f64], usize) -> Result<(f64, Vec<f64>)>,
{
    gradient_minimize_observed(value, value_and_grad, x0, config, seed, &mut |_| {})
}

pub fn gradient_minimize_observed<V, G>(
    mut value: V,
    mut value_and_grad: G,
    x0: Vec<f64>,
    config: &GradientConfig,
    seed: u64,
    observer: Observer<'_>,
) -> Result<RunState>
where
    V: FnMut(&[f64], usize) -> Result<f64>,
    G: FnMut(&[f64], usize) -> Result<(f64, Vec<f64>)>,
{
    if x0.is_empty() {
        return Err(Error::InvalidConfig("empty starting point".into()));
    }
    let x0_copy = x0.clone();
    let mut state = RunState::new(x0.clone(), seed);
    let mut x = x0;
    let mut eval = |x: &[f64], state: &mut RunState| -> Result<(f64, Vec<f64>)> {
        let (f, g) = value_and_grad(x, state.evaluations)?;
        state.evaluations += 1;
        check_finite(f, "objective", x)?;
        if let Some(bad) = g.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient component {bad}")));
        }
        if g.len() != x.len() {
            return Err(Error::DimensionMismatch(format!(
                "gradient has {} components for {} parameters",
                g.len(),
                x.len()
            )));
        }
        Ok((f, g))
    };
    let (mut f, mut g) = eval(&x, &mut state)?;
    state.offer(&x, f);
    let stop = |f: f64, g: &[f64]| {
        inf_norm(g) < config.grad_tol || config.target_loss.is_some_and(|t| f <= t)
    };
    match config.method {
        GradientMethod::Adam {
            lr,
            beta1,
            beta2,
            eps,
        } => {
            let mut m = vec![0.0; x.len()];
            let mut v = vec![0.0; x.len()];
            for t in 1..=config.max_iterations {
                if stop(f, &g) {
                    break;
                }
                let (b1t, b2t) = (1.0 - beta1.powi(t as i32), 1.0 - beta2.powi(t as i32));
                for i in 0..x.len() {
                    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                    x[i] -= lr * (m[i] / b1t) / ((v[i] / b2t).sqrt() + eps);
                }
                (f, g) = eval(&x, &mut state)?;
                state.offer(&x, f);
                state.theta = x.clone();
                state.record(0, None, f, observer);
            }
        }
        GradientMethod::Lbfgs { memory } => {
            let mut pairs: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();
            for _ in 0..config.max_iterations {
                if stop(f, &g) {
                    break;
                }
                let mut d = two_loop(&g, &pairs);
                if vdot(&d, &g) >= 0.0 {
                    pairs.clear();
                    d = g.iter().map(|v| -v).collect();
                }
                let slope = vdot(&d, &g);
                let mut step = if pairs.is_empty() {
                    (1.0 / inf_norm(&g)).min(1.0)
                } else {
                    1.0
                };
                let mut accepted = None;
                for _ in 0..40 {
                    let trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
                    let ft = value(&trial, state.evaluations)?;
                    state.evaluations += 1;
                    if ft.is_finite() && ft <= f + 1e-4 * step * slope {
                        accepted = Some(trial);
                        break;
                    }
                    step *= 0.5;
                }
                let Some(xn) = accepted else {
                    if pairs.is_empty() {
                        break;
                    }
                    pairs.clear();
                    continue;
                };
                let (fn_, gn) = eval(&xn, &mut state)?;
                let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sy = vdot(&s, &y);
                if sy > 1e-12 * vdot(&s, &s).sqrt() * vdot(&y, &y).sqrt() {
                    if pairs.len() == memory.max(1) {
                        pairs.remove(0);
                    }
                    pairs.push((s, y, 1.0 / sy));
                }
                x = xn;
                f = fn_;
                g = gn;
                state.offer(&x, f);
                state.theta = x.clone();
                state.record(0, None, f, observer);
            }
        }
    }
    state.theta = x;
    state.stages.push(StageSummary {
        shots: None,
        sigma_init: 0.0,
        iterations: state.history.len(),
        evaluations: state.evaluations,
        lowest_loss: state.incumbent_loss,
        initial_mean: x0_copy,
        best_theta: state.best_theta.clone(),
    });
    Ok(state)
}

fn two_loop(g: &[f64], pairs: &[(Vec<f64>, Vec<f64>, f64)]) -> Vec<f64> {
    let mut q: Vec<f64> = g.to_vec();
    let mut alphas = vec![0.0; pairs.len()];
    for (k, (s, y, rho)) in pairs.iter().enumerate().rev() {
        let a = rho * vdot(s, &q);
        alphas[k] = a;
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
    }
    if let Some((s, y, _)) = pairs.last() {
        let gamma = vdot(s, y) / vdot(y, y);
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
    }
    for ((s, y, rho), a) in pairs.iter().zip(&alphas) {
        let b = rho * vdot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter().map(|v| -v).collect()
}

/// One stage of an N-stage schedule. `shots = None` means exact evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stage {
    pub shots: Option<u64>,
    pub sigma_init: f64,
    pub max_iterations: usize,
    /// Advance once the stage's lowest loss reaches this.
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShotSchedule {
    stages: Vec<Stage>,
}

impl ShotSchedule {
    pub fn new(stages: Vec<Stage>) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::EmptySchedule);
        }
        for (i, w) in stages.windows(2).enumerate() {
            let shots_ok = match (w[0].shots, w[1].shots) {
                (Some(a), Some(b)) => a <= b,
                (_, None) => true,
                (None, Some(_)) => false,
            };
            if !shots_ok {
                return Err(Error::InvalidConfig(format!(
                    "stage {} lowers the shot count",
                    i + 2
                )));
            }
            if w[1].sigma_init > w[0].sigma_init {
                return Err(Error::InvalidConfig(format!(
                    "stage {} raises sigma_init",
                    i + 2
                )));
            }
        }
        for (i, s) in stages.iter().enumerate() {
            if s.shots == Some(0) {
                return Err(Error::ZeroShots);
            }
            if s.sigma_init.is_nan() || s.sigma_init <= 0.0 || s.max_iterations == 0 {
                return Err(Error::InvalidConfig(format!(
                    "stage {} needs sigma_init > 0 and max_iterations > 0",
                    i + 1
                )));
            }
        }
        Ok(Self { stages })
    }

    /// Four stages of 500/2500/5000/10000 shots with step sizes
    /// 0.5/0.25/0.1/0.05.
    pub fn four_stage(max_iterations: usize, thresholds: [Option<f64>; 4]) -> Self {
        let shots = [500, 2500, 5000, 10_000];
        let sigmas = [0.5, 0.25, 0.1, 0.05];
        Self {
            stages: (0..4)
                .map(|i| Stage {
                    shots: Some(shots[i]),
                    sigma_init: sigmas[i],
                    max_iterations,
                    threshold: thresholds[i],
                })
                .collect(),
        }
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageSummary {
    pub shots: Option<u64>,
    pub sigma_init: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub lowest_loss: f64,
    pub initial_mean: Vec<f64>,
    pub best_theta: Vec<f64>,
}

/// CMA-ES per stage, each warm-started from the incumbent `θ`. From the
/// second stage on the incumbent is first re-evaluated at the new shot
/// count, so it competes with new candidates on equal footing.
pub fn staged_optimize<M, F>(
    factory: M,
    schedule: &ShotSchedule,
    initial: Vec<f64>,
    population: Option<usize>,
    stream: Stream,
) -> Result<RunState>
where
    M: FnMut(Option<u64>) -> Result<F>,
    F: FnMut(&[f64], usize) -> Result<f64>,
{
    staged_optimize_observed(factory, schedule, initial, population, stream, &mut |_| {})
}

pub fn staged_optimize_observed<M, F>(
    mut factory: M,
    schedule: &ShotSchedule,
    initial: Vec<f64>,
    population: Option<usize>,
    stream: Stream,
    observer: Observer<'_>,
) -> Result<RunState>
where
    M: FnMut(Option<u64>) -> Result<F>,
    F: FnMut(&[f64], usize) -> Result<f64>,
{
    let mut state = RunState::new(initial, stream.key());
    for (s, stage) in schedule.stages().iter().enumerate() {
        let mut objective = factory(stage.shots)?;
        let before_iters = state.history.len();
        let before_evals = state.evaluations;
        let mut lowest = f64::INFINITY;
        if s > 0 {
            let theta = state.best_theta.clone();
            let f = check_finite(objective(&theta, state.evaluations)?, "objective", &theta)?;
            state.evaluations += 1;
            state.incumbent_loss = f;
            lowest = f;
        }
        let mean = if s == 0 {
            state.theta.clone()
        } else {
            state.best_theta.clone()
        };
        let config = CmaesConfig {
            population,
            sigma_init: stage.sigma_init,
            mean: mean.clone(),
            max_evaluations: usize::MAX,
            max_iterations: Some(stage.max_iterations),
            target_loss: None,
        };
        let best = run_cmaes(
            &mut objective,
            &config,
            stream.child(s as u64),
            &mut state,
            StageTag {
                index: s,
                shots: stage.shots,
                threshold: stage.threshold,
            },
            &mut *observer,
        )?;
        state.stages.push(StageSummary {
            shots: stage.shots,
            sigma_init: stage.sigma_init,
            iterations: state.history.len() - before_iters,
            evaluations: state.evaluations - before_evals,
            lowest_loss: lowest.min(best),
            initial_mean: mean,
            best_theta: state.best_theta.clone(),
        });
    }
    Ok(state)
}
