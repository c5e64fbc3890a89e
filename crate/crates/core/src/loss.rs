//! Collocation loss and its parameter-shift gradient.
//!
//! Every residual input at every grid point is a linear combination of raw
//! expectation queries ("probes") plus a constant, once boundary shifts are
//! unfolded. Probes are deduplicated across the grid when the model is
//! built, so a loss evaluation is one circuit run per unknown followed by
//! cheap dot products. In sampled modes each probe is an independent
//! measurement batch drawn from its own RNG substream.

use std::collections::HashMap;

use crate::encoding::{BcShift, EncodedFunction, EvalMode, PreparedFunction, Probe, ShiftedTerm};
use crate::error::{Error, Result};
use crate::problems::{BcCondition, DifferentialProblem};
use crate::rng::Stream;
use crate::sim::{for_each_parameter_shift, run_circuit};
use crate::spectral::ChebyshevBasis;

const LOSS_TAG: u64 = 0;
const GRAD_TAG: u64 = 1;

/// Collocation points. Product grids keep their per-variable axes; the
/// first variable varies slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct CollocationGrid {
    axes: Vec<Vec<f64>>,
    points: Vec<Vec<f64>>,
    product: bool,
}

impl CollocationGrid {
    pub fn product(axes: Vec<Vec<f64>>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::EmptyGrid);
        }
        for (v, axis) in axes.iter().enumerate() {
            if axis.len() < 2 {
                return Err(Error::InvalidConfig(format!(
                    "grid axis {v} needs at least 2 points, got {}",
                    axis.len()
                )));
            }
            if axis.iter().any(|x| !x.is_finite()) || axis.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidConfig(format!(
                    "grid axis {v} must be finite and strictly increasing"
                )));
            }
        }
        let mut points: Vec<Vec<f64>> = vec![Vec::new()];
        for axis in &axes {
            points = points
                .iter()
                .flat_map(|p| {
                    axis.iter().map(move |&x| {
                        let mut q = p.clone();
                        q.push(x);
                        q
                    })
                })
                .collect();
        }
        Ok(Self {
            axes,
            points,
            product: true,
        })
    }

    pub fn scattered(points: Vec<Vec<f64>>) -> Result<Self> {
        let dim = points.first().ok_or(Error::EmptyGrid)?.len();
        if dim == 0 || points.iter().any(|p| p.len() != dim) {
            return Err(Error::InvalidConfig(
                "points must share a non-zero dimension".into(),
            ));
        }
        let axes = (0..dim)
            .map(|v| {
                let mut a: Vec<f64> = points.iter().map(|p| p[v]).collect();
                a.sort_by(f64::total_cmp);
                a.dedup();
                a
            })
            .collect();
        Ok(Self {
            axes,
            points,
            product: false,
        })
    }

    /// `counts[v]` equally spaced points spanning each basis domain.
    pub fn uniform(domain: &[ChebyshevBasis], counts: &[usize]) -> Result<Self> {
        if domain.len() != counts.len() {
            return Err(Error::LengthMismatch(format!(
                "{} domain variables but {} grid sizes",
                domain.len(),
                counts.len()
            )));
        }
        let axes = domain
            .iter()
            .zip(counts)
            .map(|(b, &n)| {
                if n < 2 {
                    return Err(Error::InvalidConfig(format!(
                        "grid size must be at least 2, got {n}"
                    )));
                }
                let h = (b.hi() - b.lo()) / (n - 1) as f64;
                Ok((0..n)
                    .map(|i| {
                        if i + 1 == n {
                            b.hi()
                        } else {
                            b.lo() + h * i as f64
                        }
                    })
                    .collect())
            })
            .collect::<Result<_>>()?;
        Self::product(axes)
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_product(&self) -> bool {
        self.product
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcStrategy {
    Shift,
    Penalty,
    Both,
}

impl BcStrategy {
    pub fn uses_shift(self) -> bool {
        matches!(self, BcStrategy::Shift | BcStrategy::Both)
    }

    pub fn uses_penalty(self) -> bool {
        matches!(self, BcStrategy::Penalty | BcStrategy::Both)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BcStrategy::Shift => "shift",
            BcStrategy::Penalty => "penalty",
            BcStrategy::Both => "both",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "shift" => Ok(BcStrategy::Shift),
            "penalty" => Ok(BcStrategy::Penalty),
            "both" => Ok(BcStrategy::Both),
            other => Err(Error::InvalidConfig(format!(
                "unknown bc strategy '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub strategy: BcStrategy,
    pub bc_weight: f64,
    pub grid: CollocationGrid,
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bc_weight >= 0.0 && self.bc_weight.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "bc weight must be finite and non-negative, got {}",
                self.bc_weight
            )));
        }
        if self.grid.is_empty() {
            return Err(Error::EmptyGrid);
        }
        Ok(())
    }
}

/// Mean over points of the summed squared residual components.
pub fn loss_pde(residuals: &[Vec<f64>]) -> Result<f64> {
    if residuals.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let sum: f64 = residuals
        .iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>())
        .sum();
    Ok(sum / residuals.len() as f64)
}

/// `Σ_k (value_k − target_k)²`.
pub fn loss_bc(values: &[f64], targets: &[f64]) -> Result<f64> {
    if values.len() != targets.len() {
        return Err(Error::LengthMismatch(format!(
            "{} boundary values against {} targets",
            values.len(),
            targets.len()
        )));
    }
    Ok(values
        .iter()
        .zip(targets)
        .map(|(v, t)| (v - t) * (v - t))
        .sum())
}

/// `L_PDE + λ_BC L_BC`, with the penalty dropped under the pure shift strategy.
pub fn total_loss(strategy: BcStrategy, bc_weight: f64, pde: f64, bc: f64) -> f64 {
    if strategy.uses_penalty() {
        pde + bc_weight * bc
    } else {
        pde
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    pub pde: f64,
    pub bc: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct Term {
    parts: Vec<(f64, usize)>,
    constant: f64,
}

impl Term {
    fn value(&self, probes: &[f64]) -> f64 {
        let sum: f64 = self.parts.iter().map(|&(c, i)| c * probes[i]).sum();
        sum + self.constant
    }

    fn derivative(&self, dprobes: &[f64]) -> f64 {
        self.parts.iter().map(|&(c, i)| c * dprobes[i]).sum()
    }
}

/// Deduplicated probes and the terms that reference them.
#[derive(Debug, Clone)]
struct Plan {
    probes: Vec<Probe>,
    basis: Vec<Vec<f64>>,
    by_function: Vec<Vec<usize>>,
    residual_terms: Vec<Vec<Term>>,
    bc_terms: Vec<Term>,
    bc_targets: Vec<f64>,
}

struct PlanBuilder<'a> {
    functions: &'a [EncodedFunction],
    index: HashMap<(usize, Vec<u64>, Vec<u32>), usize>,
    probes: Vec<Probe>,
    basis: Vec<Vec<f64>>,
}

impl PlanBuilder<'_> {
    fn intern(&mut self, probe: Probe) -> Result<usize> {
        let key = (
            probe.function,
            probe.point.iter().map(|x| x.to_bits()).collect(),
            probe.orders.clone(),
        );
        if let Some(&i) = self.index.get(&key) {
            return Ok(i);
        }
        let f = self.functions.get(probe.function).ok_or_else(|| {
            Error::InvalidConfig(format!("no unknown with index {}", probe.function))
        })?;
        self.basis
            .push(f.scaled_basis(&probe.point, &probe.orders)?);
        self.probes.push(probe);
        let i = self.probes.len() - 1;
        self.index.insert(key, i);
        Ok(i)
    }

    fn term(&mut self, shifted: ShiftedTerm) -> Result<Term> {
        let parts = shifted
            .probes
            .into_iter()
            .map(|(c, p)| Ok((c, self.intern(p)?)))
            .collect::<Result<_>>()?;
        Ok(Term {
            parts,
            constant: shifted.constant,
        })
    }
}

fn decompose(
    shift: Option<&BcShift>,
    function: usize,
    point: &[f64],
    orders: &[u32],
) -> Result<ShiftedTerm> {
    match shift {
        Some(s) => s.decompose(function, point, orders),
        None => Ok(ShiftedTerm::plain(function, point, orders)),
    }
}

/// Loss, per-point request values and per-point residuals.
type Assembled = (LossValue, Vec<Vec<f64>>, Vec<Vec<f64>>);

/// A problem, its encoded unknowns and a loss configuration. The parameter
/// vector is the concatenation of each unknown's `θ`, in encoding order.
#[derive(Debug, Clone)]
pub struct Model<P> {
    problem: P,
    functions: Vec<EncodedFunction>,
    config: LossConfig,
    offsets: Vec<usize>,
    shifts: Vec<Option<BcShift>>,
    plan: Plan,
}

impl<P: DifferentialProblem> Model<P> {
    pub fn new(problem: P, functions: Vec<EncodedFunction>, config: LossConfig) -> Result<Self> {
        config.validate()?;
        let fields = problem.fields();
        if fields.len() != functions.len() {
            return Err(Error::LengthMismatch(format!(
                "{} needs {} unknowns, got {}",
                problem.name(),
                fields.len(),
                functions.len()
            )));
        }
        let domain = problem.domain()?;
        for f in &functions {
            if f.num_variables() != domain.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{} is {}-variate on a {}-variate problem",
                    f.name(),
                    f.num_variables(),
                    domain.len()
                )));
            }
        }
        let shifts: Vec<Option<BcShift>> = if config.strategy.uses_shift() {
            problem.shifts()
        } else {
            vec![None; functions.len()]
        };
        let mut offsets = Vec::with_capacity(functions.len() + 1);
        offsets.push(0);
        for f in &functions {
            offsets.push(offsets.last().copied().unwrap_or(0) + f.num_params());
        }

        let mut builder = PlanBuilder {
            functions: &functions,
            index: HashMap::new(),
            probes: Vec::new(),
            basis: Vec::new(),
        };
        let requests = problem.requests();
        let mut residual_terms = Vec::with_capacity(config.grid.len());
        for point in config.grid.points() {
            let terms = requests
                .iter()
                .map(|r| {
                    let shift = shifts.get(r.function).and_then(Option::as_ref);
                    builder.term(decompose(shift, r.function, point, &r.orders)?)
                })
                .collect::<Result<Vec<_>>>()?;
            residual_terms.push(terms);
        }
        let mut bc_terms = Vec::new();
        let mut bc_targets = Vec::new();
        if config.strategy.uses_penalty() {
            for BcCondition {
                function,
                point,
                target,
            } in problem.bc_conditions(config.grid.axes())
            {
                let orders = vec![0; point.len()];
                let shift = shifts.get(function).and_then(Option::as_ref);
                bc_terms.push(builder.term(decompose(shift, function, &point, &orders)?)?);
                bc_targets.push(target);
            }
        }
        let mut by_function = vec![Vec::new(); functions.len()];
        for (i, p) in builder.probes.iter().enumerate() {
            by_function[p.function].push(i);
        }
        let plan = Plan {
            probes: builder.probes,
            basis: builder.basis,
            by_function,
            residual_terms,
            bc_terms,
            bc_targets,
        };
        Ok(Self {
            problem,
            functions,
            config,
            offsets,
            shifts,
            plan,
        })
    }

    pub fn problem(&self) -> &P {
        &self.problem
    }

    pub fn functions(&self) -> &[EncodedFunction] {
        &self.functions
    }

    pub fn config(&self) -> &LossConfig {
        &self.config
    }

    pub fn num_params(&self) -> usize {
        self.offsets.last().copied().unwrap_or(0)
    }

    pub fn num_probes(&self) -> usize {
        self.plan.probes.len()
    }

    pub fn mode(&self) -> EvalMode {
        self.functions
            .first()
            .map(EncodedFunction::mode)
            .unwrap_or(EvalMode::Exact)
    }

    /// Switches every unknown to `mode`.
    pub fn set_mode(&mut self, mode: EvalMode) -> Result<()> {
        for f in &mut self.functions {
            f.set_mode(mode)?;
        }
        Ok(())
    }

    /// Parameter slice of each unknown.
    pub fn split<'t>(&self, theta: &'t [f64]) -> Result<Vec<&'t [f64]>> {
        if theta.len() != self.num_params() {
            return Err(Error::ParameterCount {
                expected: self.num_params(),
                actual: theta.len(),
            });
        }
        Ok(self
            .offsets
            .windows(2)
            .map(|w| &theta[w[0]..w[1]])
            .collect())
    }

    fn prepare(&self, theta: &[f64]) -> Result<Vec<PreparedFunction<'_>>> {
        self.split(theta)?
            .into_iter()
            .zip(&self.functions)
            .map(|(t, f)| f.prepare(t))
            .collect()
    }

    fn probe_value(
        &self,
        prepared: &PreparedFunction<'_>,
        probe: usize,
        stream: Stream,
    ) -> Result<f64> {
        let basis = &self.plan.basis[probe];
        if self.functions[self.plan.probes[probe].function]
            .mode()
            .is_exact()
        {
            Ok(prepared.exact_with_basis(basis))
        } else {
            prepared.value_with_basis(basis, &mut stream.child(probe as u64).rng())
        }
    }

    fn probe_values(&self, prepared: &[PreparedFunction<'_>], stream: Stream) -> Result<Vec<f64>> {
        self.plan
            .probes
            .iter()
            .enumerate()
            .map(|(i, p)| self.probe_value(&prepared[p.function], i, stream))
            .collect()
    }

    fn point_inputs(&self, probes: &[f64]) -> Vec<Vec<f64>> {
        self.plan
            .residual_terms
            .iter()
            .map(|terms| terms.iter().map(|t| t.value(probes)).collect())
            .collect()
    }

    fn assemble(&self, probes: &[f64]) -> Result<Assembled> {
        let inputs = self.point_inputs(probes);
        let residuals = self
            .config
            .grid
            .points()
            .iter()
            .zip(&inputs)
            .map(|(p, v)| self.problem.residuals(p, v))
            .collect::<Result<Vec<_>>>()?;
        let pde = loss_pde(&residuals)?;
        let bc_values: Vec<f64> = self.plan.bc_terms.iter().map(|t| t.value(probes)).collect();
        let bc = loss_bc(&bc_values, &self.plan.bc_targets)?;
        let total = total_loss(self.config.strategy, self.config.bc_weight, pde, bc);
        if !total.is_finite() {
            return Err(Error::NonFinite(format!("loss evaluated to {total}")));
        }
        Ok((LossValue { pde, bc, total }, inputs, residuals))
    }

    /// Residual vector at every grid point.
    pub fn residuals(&self, theta: &[f64], stream: Stream) -> Result<Vec<Vec<f64>>> {
        let prepared = self.prepare(theta)?;
        let probes = self.probe_values(&prepared, stream.child(LOSS_TAG))?;
        Ok(self.assemble(&probes)?.2)
    }

    pub fn loss(&self, theta: &[f64], stream: Stream) -> Result<LossValue> {
        let prepared = self.prepare(theta)?;
        let probes = self.probe_values(&prepared, stream.child(LOSS_TAG))?;
        Ok(self.assemble(&probes)?.0)
    }

    /// Loss and its gradient. Every shifted expectation is re-evaluated at
    /// `θ_j ± π/2`; residual derivatives follow by linearity and the chain
    /// rule, normalized like the loss.
    pub fn loss_and_gradient(
        &self,
        theta: &[f64],
        stream: Stream,
    ) -> Result<(LossValue, Vec<f64>)> {
        let prepared = self.prepare(theta)?;
        let probes = self.probe_values(&prepared, stream.child(LOSS_TAG))?;
        let (value, inputs, residuals) = self.assemble(&probes)?;

        // dR/dv per point, contracted with R: weight on each residual input
        let scale = 2.0 / self.config.grid.len() as f64;
        let mut input_weights = Vec::with_capacity(inputs.len());
        for ((point, v), r) in self
            .config
            .grid
            .points()
            .iter()
            .zip(&inputs)
            .zip(&residuals)
        {
            let jac = self.problem.jacobian(point, v)?;
            let w: Vec<f64> = (0..v.len())
                .map(|j| scale * jac.iter().zip(r).map(|(row, ri)| row[j] * ri).sum::<f64>())
                .collect();
            input_weights.push(w);
        }
        let bc_weights: Vec<f64> = if self.config.strategy.uses_penalty() {
            self.plan
                .bc_terms
                .iter()
                .zip(&self.plan.bc_targets)
                .map(|(t, g)| 2.0 * self.config.bc_weight * (t.value(&probes) - g))
                .collect()
        } else {
            Vec::new()
        };

        let dprobes = self.probe_derivatives(theta, stream.child(GRAD_TAG))?;
        let grad = dprobes
            .iter()
            .map(|d| {
                let mut g = 0.0;
                for (terms, w) in self.plan.residual_terms.iter().zip(&input_weights) {
                    for (t, wj) in terms.iter().zip(w) {
                        g += wj * t.derivative(d);
                    }
                }
                for (t, w) in self.plan.bc_terms.iter().zip(&bc_weights) {
                    g += w * t.derivative(d);
                }
                g
            })
            .collect::<Vec<f64>>();
        if let Some(bad) = grad.iter().find(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient component {bad}")));
        }
        Ok((value, grad))
    }

    pub fn gradient(&self, theta: &[f64], stream: Stream) -> Result<Vec<f64>> {
        Ok(self.loss_and_gradient(theta, stream)?.1)
    }

    /// `∂ probe / ∂θ_j` for every parameter, one dense row per parameter.
    fn probe_derivatives(&self, theta: &[f64], stream: Stream) -> Result<Vec<Vec<f64>>> {
        let mut rows = vec![vec![0.0; self.plan.probes.len()]; self.num_params()];
        let parts = self.split(theta)?;
        for (f, (function, t)) in self.functions.iter().zip(parts).enumerate() {
            let offset = self.offsets[f];
            let probes = &self.plan.by_function[f];
            let fstream = stream.child(f as u64);
            let exact = function.mode().is_exact();
            if exact {
                let mut dmoments: Vec<Option<Vec<f64>>> = vec![None; function.num_params()];
                for_each_parameter_shift(
                    function.circuit(),
                    t,
                    std::f64::consts::FRAC_PI_2,
                    |_, p, plus, minus| {
                        let mp = function.prepare_state(plus)?;
                        let mm = function.prepare_state(minus)?;
                        let slot = dmoments[p].get_or_insert_with(|| vec![0.0; mp.moments().len()]);
                        for ((s, a), b) in slot.iter_mut().zip(mp.moments()).zip(mm.moments()) {
                            *s += 0.5 * (a - b);
                        }
                        Ok(())
                    },
                )?;
                for (p, dm) in dmoments.iter().enumerate() {
                    let Some(dm) = dm else { continue };
                    let row = &mut rows[offset + p];
                    for &i in probes {
                        row[i] = crate::encoding::dot(dm, &self.plan.basis[i]);
                    }
                }
            } else {
                for_each_parameter_shift(
                    function.circuit(),
                    t,
                    std::f64::consts::FRAC_PI_2,
                    |g, p, plus, minus| {
                        let gstream = fstream.child(g as u64);
                        let mp = function.prepare_state(plus)?;
                        let mm = function.prepare_state(minus)?;
                        let row = &mut rows[offset + p];
                        for &i in probes {
                            let vp = self.probe_value(&mp, i, gstream.child(0))?;
                            let vm = self.probe_value(&mm, i, gstream.child(1))?;
                            row[i] += 0.5 * (vp - vm);
                        }
                        Ok(())
                    },
                )?;
            }
        }
        Ok(rows)
    }

    /// Noise-free shifted field values at arbitrary points, one row per point
    /// with one entry per unknown.
    pub fn predict(&self, theta: &[f64], points: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let parts = self.split(theta)?;
        let states = parts
            .iter()
            .zip(&self.functions)
            .map(|(t, f)| run_circuit(f.circuit(), t))
            .collect::<Result<Vec<_>>>()?;
        let prepared = states
            .iter()
            .zip(&self.functions)
            .map(|(s, f)| f.prepare_state(s))
            .collect::<Result<Vec<_>>>()?;
        points
            .iter()
            .map(|point| {
                (0..self.functions.len())
                    .map(|f| {
                        let orders = vec![0; point.len()];
                        let term = decompose(self.shifts[f].as_ref(), f, point, &orders)?;
                        let mut v = 0.0;
                        for (c, probe) in &term.probes {
                            let basis =
                                self.functions[f].scaled_basis(&probe.point, &probe.orders)?;
                            v += c * prepared[f].exact_with_basis(&basis);
                        }
                        Ok(v + term.constant)
                    })
                    .collect()
            })
            .collect()
    }

    /// Closed-form field values at `points`, shaped like [`Self::predict`].
    pub fn analytic(&self, points: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        points
            .iter()
            .map(|p| {
                let orders = vec![0; p.len()];
                (0..self.functions.len())
                    .map(|f| self.problem.analytic(f, p, &orders))
                    .collect()
            })
            .collect()
    }
}
