//! Run configuration in a flat `key = value` text format.
//!
//! Keys use dotted prefixes (`optimizer.stage1.shots = 500`). A file must
//! name its `benchmark`; every other key overrides that benchmark's preset.
//! Unknown keys, duplicates and keys of another benchmark are rejected.
//! `#` starts a comment.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use vqsolve::encoding::{benchmark_layouts, AnsatzKind, EvalMode, FormKind, FunctionLayout};
use vqsolve::loss::BcStrategy;
use vqsolve::optimize::{ShotSchedule, Stage};
use vqsolve::problems::{BurgersProblem, HypoelasticProblem};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Benchmark {
    Hypoelastic,
    BurgersCase1,
    BurgersCase2,
}

impl Benchmark {
    pub const ALL: [Benchmark; 3] = [
        Benchmark::Hypoelastic,
        Benchmark::BurgersCase1,
        Benchmark::BurgersCase2,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Benchmark::Hypoelastic => "hypoelastic",
            Benchmark::BurgersCase1 => "burgers-case1",
            Benchmark::BurgersCase2 => "burgers-case2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|b| b.as_str() == s)
    }

    pub fn is_burgers(self) -> bool {
        self != Benchmark::Hypoelastic
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeKind {
    Exact,
    Shots,
    Stacked,
}

impl ModeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModeKind::Exact => "exact",
            ModeKind::Shots => "shots",
            ModeKind::Stacked => "stacked",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "exact" => Some(ModeKind::Exact),
            "shots" => Some(ModeKind::Shots),
            "stacked" => Some(ModeKind::Stacked),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Lbfgs,
    Adam,
    Cmaes,
    Staged,
}

impl OptimizerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerKind::Lbfgs => "lbfgs",
            OptimizerKind::Adam => "adam",
            OptimizerKind::Cmaes => "cmaes",
            OptimizerKind::Staged => "staged",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "lbfgs" => Some(OptimizerKind::Lbfgs),
            "adam" => Some(OptimizerKind::Adam),
            "cmaes" => Some(OptimizerKind::Cmaes),
            "staged" => Some(OptimizerKind::Staged),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    /// Every angle uniform in `[-scale, scale]`.
    Uniform,
    /// First rotation layer at `π/2` plus a uniform `[-scale, scale]`
    /// perturbation everywhere, so every encoded function starts near zero.
    ZeroFunction,
    Given,
}

impl InitKind {
    pub fn as_str(self) -> &'static str {
        match self {
            InitKind::Uniform => "uniform",
            InitKind::ZeroFunction => "zero-function",
            InitKind::Given => "given",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "uniform" => Some(InitKind::Uniform),
            "zero-function" => Some(InitKind::ZeroFunction),
            "given" => Some(InitKind::Given),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerSettings {
    pub kind: OptimizerKind,
    pub max_iterations: usize,
    pub lr: f64,
    pub memory: usize,
    pub grad_tol: f64,
    pub sigma_init: f64,
    pub population: Option<usize>,
    pub target_loss: Option<f64>,
    pub stages: Vec<Stage>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitSettings {
    pub kind: InitKind,
    pub scale: f64,
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub benchmark: Benchmark,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub mode: ModeKind,
    pub shots: u64,
    pub stack: usize,
    pub hypoelastic: HypoelasticProblem,
    pub burgers: BurgersProblem,
    pub encodings: Vec<FunctionLayout>,
    pub grid: Vec<usize>,
    pub bc: BcStrategy,
    pub bc_weight: f64,
    pub optimizer: OptimizerSettings,
    pub init: InitSettings,
}

impl RunConfig {
    /// Preset for a benchmark.
    pub fn preset(benchmark: Benchmark) -> Self {
        let encodings = benchmark_layouts(benchmark.as_str()).expect("preset layouts exist");
        let mut optimizer = OptimizerSettings {
            kind: OptimizerKind::Lbfgs,
            max_iterations: 500,
            lr: 0.05,
            memory: 10,
            grad_tol: 1e-10,
            sigma_init: 0.5,
            population: None,
            target_loss: None,
            stages: Vec::new(),
        };
        let mut init = InitSettings {
            kind: InitKind::ZeroFunction,
            scale: 0.1,
            theta: Vec::new(),
        };
        let mut cfg = Self {
            benchmark,
            seed: 0,
            output_dir: None,
            mode: ModeKind::Stacked,
            shots: 10_000,
            stack: 10,
            hypoelastic: HypoelasticProblem::default(),
            burgers: BurgersProblem {
                a: 0.5,
                b: 0.25,
                extent: 0.95,
            },
            encodings,
            grid: vec![30, 51],
            bc: BcStrategy::Shift,
            bc_weight: 1.0,
            optimizer: optimizer.clone(),
            init: init.clone(),
        };
        match benchmark {
            Benchmark::Hypoelastic => {
                cfg.mode = ModeKind::Exact;
                cfg.grid = vec![16];
                optimizer.target_loss = Some(1e-6);
            }
            Benchmark::BurgersCase1 => {
                optimizer.kind = OptimizerKind::Staged;
                let thresholds = [0.1119, 0.0122, 0.00567, 0.00354].map(Some);
                optimizer.stages = ShotSchedule::four_stage(150, thresholds).stages().to_vec();
                init.scale = 0.05;
            }
            Benchmark::BurgersCase2 => {
                cfg.burgers.a = 1.0;
                cfg.burgers.b = 1.0;
                optimizer.kind = OptimizerKind::Cmaes;
                optimizer.max_iterations = 200;
                optimizer.sigma_init = 1.0;
                optimizer.population = Some(24);
                init.kind = InitKind::Uniform;
                init.scale = std::f64::consts::PI;
            }
        }
        cfg.optimizer = optimizer;
        cfg.init = init;
        cfg
    }

    pub fn eval_mode(&self) -> EvalMode {
        match self.mode {
            ModeKind::Exact => EvalMode::Exact,
            ModeKind::Shots => EvalMode::Shots(self.shots),
            ModeKind::Stacked => EvalMode::Stacked {
                copies: self.stack,
                shots: self.shots,
            },
        }
    }

    /// Evaluation mode of a stage with the given shot count.
    pub fn stage_mode(&self, shots: Option<u64>) -> EvalMode {
        match (shots, self.mode) {
            (None, _) | (_, ModeKind::Exact) => EvalMode::Exact,
            (Some(s), ModeKind::Shots) => EvalMode::Shots(s),
            (Some(s), ModeKind::Stacked) => EvalMode::Stacked {
                copies: self.stack,
                shots: s,
            },
        }
    }

    pub fn num_params(&self) -> Result<usize> {
        let mut total = 0;
        for layout in &self.encodings {
            total += layout
                .ansatz
                .build(layout.qubits(), layout.depth)?
                .num_params();
        }
        Ok(total)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.shots == 0 {
            return bad("shots must be positive".into());
        }
        if self.stack == 0 {
            return bad("stack must be positive".into());
        }
        let problem = match self.benchmark {
            Benchmark::Hypoelastic => self.hypoelastic.validate(),
            _ => self.burgers.validate(),
        };
        problem.map_err(|e| CliError::Config(e.to_string()))?;
        let vars = if self.benchmark.is_burgers() { 2 } else { 1 };
        if self.grid.len() != vars || self.grid.iter().any(|&n| n < 2) {
            return bad(format!(
                "loss.grid needs {vars} counts of at least 2, got {:?}",
                self.grid
            ));
        }
        if !(self.bc_weight >= 0.0 && self.bc_weight.is_finite()) {
            return bad(format!(
                "loss.bc_weight must be finite and >= 0, got {}",
                self.bc_weight
            ));
        }
        for l in &self.encodings {
            if !(l.scale.is_finite() && l.scale != 0.0) {
                return bad(format!(
                    "encoding.{}.scale must be finite and nonzero",
                    l.name
                ));
            }
            if l.depth == 0 || l.index_qubits.contains(&0) {
                return bad(format!(
                    "encoding.{}: depth and qubit counts must be positive",
                    l.name
                ));
            }
            if l.form == FormKind::Global && l.index_qubits.len() != vars {
                return bad(format!(
                    "encoding.{}.qubits needs {vars} register widths",
                    l.name
                ));
            }
            if l.form == FormKind::OneLocal && (vars != 1 || l.index_qubits.len() != 1) {
                return bad(format!(
                    "encoding.{}: one-local form needs a single width on a 1-variable domain",
                    l.name
                ));
            }
            if l.qubits() > 20 {
                return bad(format!("encoding.{} uses more than 20 qubits", l.name));
            }
        }
        let o = &self.optimizer;
        if o.max_iterations == 0 {
            return bad("optimizer.max_iterations must be positive".into());
        }
        if !(o.lr > 0.0 && o.lr.is_finite()) {
            return bad("optimizer.lr must be positive".into());
        }
        if o.memory == 0 {
            return bad("optimizer.memory must be positive".into());
        }
        if o.grad_tol.is_nan() || o.grad_tol < 0.0 {
            return bad("optimizer.grad_tol must be >= 0".into());
        }
        if !(o.sigma_init > 0.0 && o.sigma_init.is_finite()) {
            return bad("optimizer.sigma_init must be positive".into());
        }
        if o.population.is_some_and(|p| p < 2) {
            return bad("optimizer.population must be at least 2".into());
        }
        match o.kind {
            OptimizerKind::Lbfgs if self.mode != ModeKind::Exact => {
                return bad(
                    "optimizer lbfgs needs exact mode (its line search assumes a smooth loss)"
                        .into(),
                );
            }
            OptimizerKind::Staged => {
                if o.stages.is_empty() {
                    return bad("staged optimizer needs optimizer.stageN entries".into());
                }
                ShotSchedule::new(o.stages.clone())?;
                if self.mode == ModeKind::Exact && o.stages.iter().any(|s| s.shots.is_some()) {
                    return bad("stage shot counts need mode shots or stacked".into());
                }
            }
            _ => {}
        }
        let scale_ok = self.init.scale.is_finite() && self.init.scale >= 0.0;
        if !scale_ok {
            return bad("init.scale must be finite and >= 0".into());
        }
        let n = self.num_params()?;
        if self.init.kind == InitKind::Given && self.init.theta.len() != n {
            return bad(format!(
                "init.theta has {} angles, the encodings take {n}",
                self.init.theta.len()
            ));
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut seen = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(CliError::Parse {
                    line: i + 1,
                    message: format!("expected `key = value`, got `{line}`"),
                });
            };
            let (k, v) = (k.trim(), v.trim());
            if let Some(prev) = seen.insert(k.to_string(), i + 1) {
                return Err(CliError::Parse {
                    line: i + 1,
                    message: format!("duplicate key `{k}` (first on line {prev})"),
                });
            }
            entries.push((i + 1, k.to_string(), v.to_string()));
        }
        let Some((line, _, name)) = entries.iter().find(|(_, k, _)| k == "benchmark") else {
            return Err(CliError::Config("missing `benchmark` key".into()));
        };
        let benchmark = Benchmark::parse(name).ok_or_else(|| CliError::Parse {
            line: *line,
            message: format!("unknown benchmark `{name}`"),
        })?;
        let mut cfg = Self::preset(benchmark);
        let mut stages: BTreeMap<usize, PartialStage> = BTreeMap::new();
        for (line, key, value) in &entries {
            if key != "benchmark" {
                cfg.apply(key, value, &mut stages)
                    .map_err(|message| CliError::Parse {
                        line: *line,
                        message,
                    })?;
            }
        }
        if !stages.is_empty() {
            if entries.iter().any(|(_, k, _)| k == "optimizer.stages") {
                return Err(CliError::Config(
                    "optimizer.stages = none conflicts with optimizer.stageN keys".into(),
                ));
            }
            cfg.optimizer.stages = finish_stages(stages)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(
        &mut self,
        key: &str,
        value: &str,
        stages: &mut BTreeMap<usize, PartialStage>,
    ) -> std::result::Result<(), String> {
        let parts: Vec<&str> = key.split('.').collect();
        let unknown = || {
            Err(format!(
                "unknown key `{key}` for benchmark {}",
                self.benchmark.as_str()
            ))
        };
        match parts.as_slice() {
            ["seed"] => self.seed = num(key, value)?,
            ["output_dir"] => self.output_dir = Some(PathBuf::from(value)),
            ["mode"] => self.mode = ModeKind::parse(value).ok_or_else(|| bad_value(key, value))?,
            ["shots"] => self.shots = num(key, value)?,
            ["stack"] => self.stack = num(key, value)?,
            ["hypoelastic", field] if !self.benchmark.is_burgers() => {
                let p = &mut self.hypoelastic;
                match *field {
                    "k" => p.k = num(key, value)?,
                    "n" => p.n = num(key, value)?,
                    "b" => p.b = num(key, value)?,
                    "eps0" => p.eps0 = num(key, value)?,
                    "sigma0" => p.sigma0 = num(key, value)?,
                    "g" => p.g = num(key, value)?,
                    _ => return unknown(),
                }
            }
            ["burgers", field] if self.benchmark.is_burgers() => match *field {
                "a" => self.burgers.a = num(key, value)?,
                "b" => self.burgers.b = num(key, value)?,
                "extent" => self.burgers.extent = num(key, value)?,
                _ => return unknown(),
            },
            ["encoding", name, field] => {
                let Some(layout) = self.encodings.iter_mut().find(|l| l.name == *name) else {
                    return unknown();
                };
                match *field {
                    "form" => {
                        layout.form = match value {
                            "global" => FormKind::Global,
                            "one-local" => FormKind::OneLocal,
                            _ => return Err(bad_value(key, value)),
                        }
                    }
                    "qubits" => layout.index_qubits = list(key, value)?,
                    "ansatz" => {
                        layout.ansatz =
                            AnsatzKind::parse(value).map_err(|_| bad_value(key, value))?
                    }
                    "depth" => layout.depth = num(key, value)?,
                    "scale" => layout.scale = num(key, value)?,
                    _ => return unknown(),
                }
            }
            ["loss", "grid"] => self.grid = list(key, value)?,
            ["loss", "bc"] => {
                self.bc = BcStrategy::parse(value).map_err(|_| bad_value(key, value))?
            }
            ["loss", "bc_weight"] => self.bc_weight = num(key, value)?,
            ["optimizer", field] => {
                let o = &mut self.optimizer;
                match *field {
                    "kind" => {
                        o.kind = OptimizerKind::parse(value).ok_or_else(|| bad_value(key, value))?
                    }
                    "max_iterations" => o.max_iterations = num(key, value)?,
                    "lr" => o.lr = num(key, value)?,
                    "memory" => o.memory = num(key, value)?,
                    "grad_tol" => o.grad_tol = num(key, value)?,
                    "sigma_init" => o.sigma_init = num(key, value)?,
                    "population" => o.population = optional(key, value, "auto")?,
                    "target_loss" => o.target_loss = optional(key, value, "none")?,
                    "stages" if value == "none" => o.stages.clear(),
                    _ => return unknown(),
                }
            }
            ["optimizer", stage, field] if stage.starts_with("stage") => {
                let index: usize = stage["stage".len()..]
                    .parse()
                    .map_err(|_| format!("bad stage index in `{key}`"))?;
                if index == 0 {
                    return Err(format!("stages are numbered from 1 (`{key}`)"));
                }
                let s = stages.entry(index).or_default();
                match *field {
                    "shots" => s.shots = Some(optional(key, value, "exact")?),
                    "sigma_init" => s.sigma_init = Some(num(key, value)?),
                    "max_iterations" => s.max_iterations = Some(num(key, value)?),
                    "threshold" => s.threshold = Some(optional(key, value, "none")?),
                    _ => return unknown(),
                }
            }
            ["init", "kind"] => {
                self.init.kind = InitKind::parse(value).ok_or_else(|| bad_value(key, value))?
            }
            ["init", "scale"] => self.init.scale = num(key, value)?,
            ["init", "theta"] => self.init.theta = list(key, value)?,
            _ => return unknown(),
        }
        Ok(())
    }

    /// Text form accepted by [`RunConfig::parse`]. Floats use the shortest
    /// representation that parses back to the same value.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("benchmark", self.benchmark.as_str().into());
        put("seed", self.seed.to_string());
        if let Some(dir) = &self.output_dir {
            put("output_dir", dir.display().to_string());
        }
        put("mode", self.mode.as_str().into());
        put("shots", self.shots.to_string());
        put("stack", self.stack.to_string());
        if self.benchmark.is_burgers() {
            let p = &self.burgers;
            put("burgers.a", f(p.a));
            put("burgers.b", f(p.b));
            put("burgers.extent", f(p.extent));
        } else {
            let p = &self.hypoelastic;
            put("hypoelastic.k", f(p.k));
            put("hypoelastic.n", p.n.to_string());
            put("hypoelastic.b", f(p.b));
            put("hypoelastic.eps0", f(p.eps0));
            put("hypoelastic.sigma0", f(p.sigma0));
            put("hypoelastic.g", f(p.g));
        }
        for l in &self.encodings {
            let pre = format!("encoding.{}", l.name);
            let form = match l.form {
                FormKind::Global => "global",
                FormKind::OneLocal => "one-local",
            };
            put(&format!("{pre}.form"), form.into());
            put(
                &format!("{pre}.qubits"),
                join(&l.index_qubits, |q| q.to_string()),
            );
            put(&format!("{pre}.ansatz"), l.ansatz.as_str().into());
            put(&format!("{pre}.depth"), l.depth.to_string());
            put(&format!("{pre}.scale"), f(l.scale));
        }
        put("loss.grid", join(&self.grid, |n| n.to_string()));
        put("loss.bc", self.bc.as_str().into());
        put("loss.bc_weight", f(self.bc_weight));
        let o = &self.optimizer;
        put("optimizer.kind", o.kind.as_str().into());
        put("optimizer.max_iterations", o.max_iterations.to_string());
        put("optimizer.lr", f(o.lr));
        put("optimizer.memory", o.memory.to_string());
        put("optimizer.grad_tol", f(o.grad_tol));
        put("optimizer.sigma_init", f(o.sigma_init));
        put(
            "optimizer.population",
            o.population.map_or("auto".into(), |p| p.to_string()),
        );
        put(
            "optimizer.target_loss",
            o.target_loss.map_or("none".into(), f),
        );
        if o.stages.is_empty() {
            put("optimizer.stages", "none".into());
        }
        for (i, st) in o.stages.iter().enumerate() {
            let pre = format!("optimizer.stage{}", i + 1);
            put(
                &format!("{pre}.shots"),
                st.shots.map_or("exact".into(), |s| s.to_string()),
            );
            put(&format!("{pre}.sigma_init"), f(st.sigma_init));
            put(
                &format!("{pre}.max_iterations"),
                st.max_iterations.to_string(),
            );
            put(
                &format!("{pre}.threshold"),
                st.threshold.map_or("none".into(), f),
            );
        }
        put("init.kind", self.init.kind.as_str().into());
        put("init.scale", f(self.init.scale));
        if !self.init.theta.is_empty() {
            put("init.theta", join(&self.init.theta, |&x| f(x)));
        }
        s
    }
}

#[derive(Debug, Default)]
struct PartialStage {
    shots: Option<Option<u64>>,
    sigma_init: Option<f64>,
    max_iterations: Option<usize>,
    threshold: Option<Option<f64>>,
}

fn finish_stages(stages: BTreeMap<usize, PartialStage>) -> Result<Vec<Stage>> {
    let mut out = Vec::new();
    for (expected, (index, p)) in (1..).zip(stages) {
        if index != expected {
            return Err(CliError::Config(format!(
                "optimizer.stage{expected} is missing"
            )));
        }
        let need =
            |what: &str| CliError::Config(format!("optimizer.stage{index}.{what} is missing"));
        out.push(Stage {
            shots: p.shots.ok_or_else(|| need("shots"))?,
            sigma_init: p.sigma_init.ok_or_else(|| need("sigma_init"))?,
            max_iterations: p.max_iterations.ok_or_else(|| need("max_iterations"))?,
            threshold: p.threshold.unwrap_or(None),
        });
    }
    Ok(out)
}

fn f(x: f64) -> String {
    format!("{x:?}")
}

fn join<T>(items: &[T], g: impl Fn(&T) -> String) -> String {
    items.iter().map(g).collect::<Vec<_>>().join(", ")
}

fn bad_value(key: &str, value: &str) -> String {
    format!("invalid value `{value}` for `{key}`")
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| bad_value(key, value))
}

fn optional<T: std::str::FromStr>(
    key: &str,
    value: &str,
    none: &str,
) -> std::result::Result<Option<T>, String> {
    if value == none {
        Ok(None)
    } else {
        num(key, value).map(Some)
    }
}

fn list<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<Vec<T>, String> {
    if value.is_empty() {
        return Err(bad_value(key, value));
    }
    value.split(',').map(|p| num(key, p.trim())).collect()
}
