//! Functions encoded as scaled expectation values, plus boundary shifts.
//!
//! `f(x) = λ ⟨ψ(θ)| O(x) |ψ(θ)⟩`. The state depends only on `θ`, so a
//! [`PreparedFunction`] runs the circuit once and then answers any number of
//! point queries, exactly or with simulated shot noise.

use rand::Rng;

use crate::error::{Error, Result};
use crate::sim::{
    hardware_efficient, mixed_hardware_efficient, run_circuit, rx_cz_cascade, OutcomeSampler,
    ParamCircuit, Statevector,
};
use crate::spectral::{ChebyshevBasis, ObservableSpec};

/// How expectations are estimated.
///
/// `Stacked { copies, shots }` models a wide circuit of `copies` identical
/// blocks executed `shots` times: every execution yields one outcome per
/// block, so `copies × shots` block samples are split evenly over the copies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    Exact,
    Shots(u64),
    Stacked { copies: usize, shots: u64 },
}

impl EvalMode {
    pub fn validate(&self) -> Result<()> {
        match *self {
            EvalMode::Exact => Ok(()),
            EvalMode::Shots(0) | EvalMode::Stacked { shots: 0, .. } => Err(Error::ZeroShots),
            EvalMode::Stacked { copies: 0, .. } => Err(Error::EmptyStack),
            _ => Ok(()),
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, EvalMode::Exact)
    }

    /// Same mode with a different per-execution shot count.
    pub fn with_shots(self, shots: u64) -> Self {
        match self {
            EvalMode::Exact => EvalMode::Exact,
            EvalMode::Shots(_) => EvalMode::Shots(shots),
            EvalMode::Stacked { copies, .. } => EvalMode::Stacked { copies, shots },
        }
    }

    pub fn shots(&self) -> Option<u64> {
        match *self {
            EvalMode::Exact => None,
            EvalMode::Shots(s) | EvalMode::Stacked { shots: s, .. } => Some(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnsatzKind {
    /// `RY` + brick CNOT layers.
    Hea,
    /// `RY`+CNOT, then alternating `RX`+CZ / `RY`+CZ brick layers.
    MixedHea,
    /// `RX` + cascading CZ layers.
    RxCzCascade,
}

impl AnsatzKind {
    pub fn build(self, qubits: usize, depth: usize) -> Result<ParamCircuit> {
        match self {
            AnsatzKind::Hea => hardware_efficient(qubits, depth),
            AnsatzKind::MixedHea => mixed_hardware_efficient(qubits, depth),
            AnsatzKind::RxCzCascade => rx_cz_cascade(qubits, depth),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AnsatzKind::Hea => "hea",
            AnsatzKind::MixedHea => "mixed-hea",
            AnsatzKind::RxCzCascade => "rx-cz-cascade",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "hea" => Ok(AnsatzKind::Hea),
            "mixed-hea" => Ok(AnsatzKind::MixedHea),
            "rx-cz-cascade" => Ok(AnsatzKind::RxCzCascade),
            other => Err(Error::InvalidConfig(format!("unknown ansatz '{other}'"))),
        }
    }
}

/// Circuit, observable family, domain bases and scale `λ` of one unknown.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedFunction {
    name: String,
    circuit: ParamCircuit,
    observable: ObservableSpec,
    bases: Vec<ChebyshevBasis>,
    scale: f64,
    mode: EvalMode,
}

impl EncodedFunction {
    pub fn new(
        name: impl Into<String>,
        circuit: ParamCircuit,
        observable: ObservableSpec,
        bases: Vec<ChebyshevBasis>,
        scale: f64,
    ) -> Result<Self> {
        if scale == 0.0 || !scale.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "scale must be finite and non-zero, got {scale}"
            )));
        }
        observable.validate()?;
        observable.require_diagonal()?;
        if observable.num_qubits() != circuit.num_qubits() {
            return Err(Error::DimensionMismatch(format!(
                "observable spans {} qubits but the circuit has {}",
                observable.num_qubits(),
                circuit.num_qubits()
            )));
        }
        if observable.num_variables() != bases.len() {
            return Err(Error::LengthMismatch(format!(
                "{} variables but {} domain bases",
                observable.num_variables(),
                bases.len()
            )));
        }
        Ok(Self {
            name: name.into(),
            circuit,
            observable,
            bases,
            scale,
            mode: EvalMode::Exact,
        })
    }

    pub fn with_mode(mut self, mode: EvalMode) -> Result<Self> {
        mode.validate()?;
        self.mode = mode;
        Ok(self)
    }

    pub fn set_mode(&mut self, mode: EvalMode) -> Result<()> {
        mode.validate()?;
        self.mode = mode;
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn circuit(&self) -> &ParamCircuit {
        &self.circuit
    }

    pub fn observable(&self) -> &ObservableSpec {
        &self.observable
    }

    pub fn bases(&self) -> &[ChebyshevBasis] {
        &self.bases
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn mode(&self) -> EvalMode {
        self.mode
    }

    pub fn num_params(&self) -> usize {
        self.circuit.num_params()
    }

    pub fn num_variables(&self) -> usize {
        self.bases.len()
    }

    /// Qubits of the equivalent stacked circuit.
    pub fn total_qubits(&self) -> usize {
        match self.mode {
            EvalMode::Stacked { copies, .. } => copies * self.circuit.num_qubits(),
            _ => self.circuit.num_qubits(),
        }
    }

    /// `λ`-scaled basis values, ready to be dotted with moments.
    pub fn scaled_basis(&self, point: &[f64], orders: &[u32]) -> Result<Vec<f64>> {
        Ok(self
            .observable
            .basis_values(&self.bases, point, orders)?
            .into_iter()
            .map(|v| v * self.scale)
            .collect())
    }

    pub fn prepare(&self, theta: &[f64]) -> Result<PreparedFunction<'_>> {
        let state = run_circuit(&self.circuit, theta)?;
        self.prepare_state(&state)
    }

    pub fn prepare_state(&self, state: &Statevector) -> Result<PreparedFunction<'_>> {
        let probabilities = state.probabilities();
        let moments = self
            .observable
            .moments(probabilities.iter().copied().enumerate())?;
        let sampler = (!self.mode.is_exact()).then(|| OutcomeSampler::new(&probabilities));
        Ok(PreparedFunction {
            function: self,
            moments,
            sampler,
        })
    }

    /// `∂^orders f(point)` at `theta`.
    pub fn eval<R: Rng + ?Sized>(
        &self,
        theta: &[f64],
        point: &[f64],
        orders: &[u32],
        rng: &mut R,
    ) -> Result<f64> {
        self.prepare(theta)?.value(point, orders, rng)
    }
}

/// An encoded function with its state already simulated.
#[derive(Debug, Clone)]
pub struct PreparedFunction<'a> {
    function: &'a EncodedFunction,
    moments: Vec<f64>,
    sampler: Option<OutcomeSampler>,
}

impl PreparedFunction<'_> {
    pub fn moments(&self) -> &[f64] {
        &self.moments
    }

    pub fn value<R: Rng + ?Sized>(
        &self,
        point: &[f64],
        orders: &[u32],
        rng: &mut R,
    ) -> Result<f64> {
        let basis = self.function.scaled_basis(point, orders)?;
        self.value_with_basis(&basis, rng)
    }

    pub fn exact_with_basis(&self, basis: &[f64]) -> f64 {
        dot(&self.moments, basis)
    }

    /// Estimate for precomputed [`EncodedFunction::scaled_basis`] values.
    pub fn value_with_basis<R: Rng + ?Sized>(&self, basis: &[f64], rng: &mut R) -> Result<f64> {
        let sampler = match (&self.sampler, self.function.mode) {
            (_, EvalMode::Exact) => return Ok(self.exact_with_basis(basis)),
            (Some(s), _) => s,
            (None, _) => unreachable!("sampler is built for every sampled mode"),
        };
        match self.function.mode {
            EvalMode::Exact => unreachable!(),
            EvalMode::Shots(shots) => self.sampled_block(sampler, basis, shots, rng),
            // every block gets `shots`, so the mean of the block means is the
            // mean of the pooled counts, which are multinomial in the total
            EvalMode::Stacked { copies, shots } => {
                self.sampled_block(sampler, basis, shots * copies as u64, rng)
            }
        }
    }

    fn sampled_block<R: Rng + ?Sized>(
        &self,
        sampler: &OutcomeSampler,
        basis: &[f64],
        shots: u64,
        rng: &mut R,
    ) -> Result<f64> {
        let counts = sampler.counts(shots, rng);
        let inv = 1.0 / shots as f64;
        let moments = self
            .function
            .observable
            .moments(counts.into_iter().map(|(b, n)| (b, n as f64 * inv)))?;
        Ok(dot(&moments, basis))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Polynomial `Σ c_k x^k` differentiated `m` times.
pub fn poly_eval(coeffs: &[f64], x: f64, m: u32) -> f64 {
    let m = m as usize;
    coeffs
        .iter()
        .enumerate()
        .skip(m)
        .rev()
        .fold(0.0, |acc, (k, c)| {
            let falling: f64 = ((k - m + 1)..=k).map(|j| j as f64).product();
            acc * x + c * falling
        })
}

/// Functional boundary shift applied on top of an encoded function.
///
/// * `Point`: `f̂(x) = f(x) − f(anchor) + target`.
/// * `Slice`: for a bivariate `u(x, t)` sliced at `variable = at`,
///   `û(x, t) = u(x, t) − u(x, at) + profile(x)` with `profile` a polynomial
///   in the other variable.
#[derive(Debug, Clone, PartialEq)]
pub enum BcShift {
    Point {
        anchor: Vec<f64>,
        target: f64,
    },
    Slice {
        variable: usize,
        at: f64,
        profile: Vec<f64>,
    },
}

/// One expectation query: function index, physical point, derivative orders.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub function: usize,
    pub point: Vec<f64>,
    pub orders: Vec<u32>,
}

/// `Σ coeff · probe + constant`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedTerm {
    pub probes: Vec<(f64, Probe)>,
    pub constant: f64,
}

impl ShiftedTerm {
    pub fn plain(function: usize, point: &[f64], orders: &[u32]) -> Self {
        Self {
            probes: vec![(
                1.0,
                Probe {
                    function,
                    point: point.to_vec(),
                    orders: orders.to_vec(),
                },
            )],
            constant: 0.0,
        }
    }
}

impl BcShift {
    pub fn validate(&self, num_variables: usize) -> Result<()> {
        match self {
            BcShift::Point { anchor, .. } if anchor.len() != num_variables => {
                Err(Error::LengthMismatch(format!(
                    "anchor has {} coordinates for a {num_variables}-variable function",
                    anchor.len()
                )))
            }
            BcShift::Slice { variable, .. } if num_variables != 2 || *variable > 1 => Err(
                Error::InvalidConfig("slice shifts apply to bivariate functions".into()),
            ),
            _ => Ok(()),
        }
    }

    /// Expresses the shifted derivative as a combination of raw probes.
    pub fn decompose(&self, function: usize, point: &[f64], orders: &[u32]) -> Result<ShiftedTerm> {
        self.validate(point.len())?;
        if orders.len() != point.len() {
            return Err(Error::LengthMismatch(
                "orders and point differ in length".into(),
            ));
        }
        let mut term = ShiftedTerm::plain(function, point, orders);
        match self {
            BcShift::Point { anchor, target } => {
                if orders.iter().all(|&m| m == 0) {
                    term.probes.push((
                        -1.0,
                        Probe {
                            function,
                            point: anchor.clone(),
                            orders: orders.to_vec(),
                        },
                    ));
                    term.constant = *target;
                }
            }
            BcShift::Slice {
                variable,
                at,
                profile,
            } => {
                if orders[*variable] == 0 {
                    let other = 1 - variable;
                    let mut anchor = point.to_vec();
                    anchor[*variable] = *at;
                    term.probes.push((
                        -1.0,
                        Probe {
                            function,
                            point: anchor,
                            orders: orders.to_vec(),
                        },
                    ));
                    term.constant = poly_eval(profile, point[other], orders[other]);
                }
            }
        }
        Ok(term)
    }
}

/// `∂^orders f̂(point)`. Probes at coinciding points share one estimate.
pub fn eval_shifted<R: Rng + ?Sized>(
    function: &EncodedFunction,
    shift: Option<&BcShift>,
    theta: &[f64],
    point: &[f64],
    orders: &[u32],
    rng: &mut R,
) -> Result<f64> {
    let term = match shift {
        Some(s) => s.decompose(0, point, orders)?,
        None => ShiftedTerm::plain(0, point, orders),
    };
    let prepared = function.prepare(theta)?;
    let mut seen: Vec<(&Probe, f64)> = Vec::new();
    // probe parts first so that f(x₀) − f(x₀) cancels exactly
    let mut total = 0.0;
    for (coeff, probe) in &term.probes {
        let value = match seen.iter().find(|(p, _)| *p == probe) {
            Some(&(_, v)) => v,
            None => {
                let v = prepared.value(&probe.point, &probe.orders, rng)?;
                seen.push((probe, v));
                v
            }
        };
        total += coeff * value;
    }
    Ok(total + term.constant)
}

/// Observable family of one encoded unknown.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormKind {
    Global,
    OneLocal,
}

/// Sizes and ansatz of one unknown. For `Global`, `index_qubits` holds one
/// register width per variable and a leading `Z` qubit is added; for
/// `OneLocal` it holds the single register width.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionLayout {
    pub name: String,
    pub form: FormKind,
    pub index_qubits: Vec<usize>,
    pub ansatz: AnsatzKind,
    pub depth: usize,
    pub scale: f64,
}

impl FunctionLayout {
    pub fn qubits(&self) -> usize {
        let index: usize = self.index_qubits.iter().sum();
        match self.form {
            FormKind::Global => index + 1,
            FormKind::OneLocal => index,
        }
    }

    pub fn build(&self, domain: &[ChebyshevBasis], mode: EvalMode) -> Result<EncodedFunction> {
        let observable = match self.form {
            FormKind::Global => ObservableSpec::GlobalDiagonal {
                registers: self.index_qubits.clone(),
            },
            FormKind::OneLocal => {
                if self.index_qubits.len() != 1 {
                    return Err(Error::InvalidConfig(format!(
                        "{}: one-local encoding is univariate",
                        self.name
                    )));
                }
                ObservableSpec::OneLocalZ {
                    qubits: self.index_qubits[0],
                }
            }
        };
        if observable.num_variables() != domain.len() {
            return Err(Error::InvalidConfig(format!(
                "{}: {} registers for a {}-variable domain",
                self.name,
                observable.num_variables(),
                domain.len()
            )));
        }
        let circuit = self.ansatz.build(self.qubits(), self.depth)?;
        EncodedFunction::new(
            self.name.clone(),
            circuit,
            observable,
            domain.to_vec(),
            self.scale,
        )?
        .with_mode(mode)
    }
}

/// Benchmark presets.
pub fn benchmark_layouts(name: &str) -> Result<Vec<FunctionLayout>> {
    let layout =
        |name: &str, form, index_qubits: Vec<usize>, ansatz, depth, scale| FunctionLayout {
            name: name.into(),
            form,
            index_qubits,
            ansatz,
            depth,
            scale,
        };
    match name {
        "hypoelastic" => Ok(vec![
            layout("u", FormKind::OneLocal, vec![15], AnsatzKind::Hea, 2, 15.0),
            layout("sigma", FormKind::Global, vec![3], AnsatzKind::Hea, 4, 15.0),
        ]),
        "burgers-case1" => Ok(vec![layout(
            "u",
            FormKind::Global,
            vec![1, 2],
            AnsatzKind::MixedHea,
            3,
            2.0,
        )]),
        "burgers-case2" => Ok(vec![layout(
            "u",
            FormKind::Global,
            vec![1, 3],
            AnsatzKind::RxCzCascade,
            4,
            2.0,
        )]),
        other => Err(Error::UnknownBenchmark(other.into())),
    }
}

/// Encoded unknowns of a benchmark preset with its default domain and mode.
pub fn build_benchmark_encodings(name: &str) -> Result<Vec<EncodedFunction>> {
    let (domain, mode) = match name {
        "hypoelastic" => (vec![ChebyshevBasis::new(0.0, 1.0)?], EvalMode::Exact),
        "burgers-case1" | "burgers-case2" => {
            let b = ChebyshevBasis::new(0.0, 0.95)?;
            (
                vec![b, b],
                EvalMode::Stacked {
                    copies: 10,
                    shots: 10_000,
                },
            )
        }
        other => return Err(Error::UnknownBenchmark(other.into())),
    };
    benchmark_layouts(name)?
        .iter()
        .map(|l| l.build(&domain, mode))
        .collect()
}
