//! Minimal dense statevector simulator.
//!
//! Rotation conventions: `RY(θ) = exp(-iθY/2)` and `RX(θ) = exp(-iθX/2)`, so
//! `⟨Z⟩` of `RY(θ)|0⟩` is `cos θ`. Qubit 0 is the most significant bit of the
//! basis index: on three qubits, `|011⟩` has qubit 0 in `|0⟩` and index 3.
//!
//! Stacking of identical blocks on disjoint qubits is simulated as
//! independent shot batches of the block circuit; the wide state is never
//! built.

use std::ops::Range;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};

pub const MAX_QUBITS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GateKind {
    Ry,
    Rx,
    Cnot,
    Cz,
}

impl GateKind {
    pub fn name(self) -> &'static str {
        match self {
            GateKind::Ry => "RY",
            GateKind::Rx => "RX",
            GateKind::Cnot => "CNOT",
            GateKind::Cz => "CZ",
        }
    }

    pub fn is_rotation(self) -> bool {
        matches!(self, GateKind::Ry | GateKind::Rx)
    }
}

/// A single gate. Rotations carry an index into the parameter vector,
/// entanglers carry a control qubit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Gate {
    pub kind: GateKind,
    pub target: usize,
    pub control: Option<usize>,
    pub param: Option<usize>,
}

impl Gate {
    pub fn ry(target: usize, param: usize) -> Self {
        Self {
            kind: GateKind::Ry,
            target,
            control: None,
            param: Some(param),
        }
    }

    pub fn rx(target: usize, param: usize) -> Self {
        Self {
            kind: GateKind::Rx,
            target,
            control: None,
            param: Some(param),
        }
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        Self {
            kind: GateKind::Cnot,
            target,
            control: Some(control),
            param: None,
        }
    }

    pub fn cz(control: usize, target: usize) -> Self {
        Self {
            kind: GateKind::Cz,
            target,
            control: Some(control),
            param: None,
        }
    }

    pub fn validate(&self, width: usize) -> Result<()> {
        if self.target >= width {
            return Err(Error::QubitOutOfRange {
                index: self.target,
                width,
            });
        }
        if self.kind.is_rotation() {
            if self.control.is_some() || self.param.is_none() {
                return Err(Error::InvalidGate(format!(
                    "{} acts on one qubit and needs exactly one parameter",
                    self.kind.name()
                )));
            }
        } else {
            let control = self.control.ok_or_else(|| {
                Error::InvalidGate(format!("{} needs a control qubit", self.kind.name()))
            })?;
            if control >= width {
                return Err(Error::QubitOutOfRange {
                    index: control,
                    width,
                });
            }
            if control == self.target {
                return Err(Error::InvalidGate(format!(
                    "{} control and target coincide on qubit {control}",
                    self.kind.name()
                )));
            }
            if self.param.is_some() {
                return Err(Error::InvalidGate(format!(
                    "{} takes no parameter",
                    self.kind.name()
                )));
            }
        }
        Ok(())
    }
}

/// Ordered gate list over `num_qubits` qubits with `num_params` named angles.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamCircuit {
    num_qubits: usize,
    gates: Vec<Gate>,
    num_params: usize,
    depth: usize,
}

impl ParamCircuit {
    pub fn new(num_qubits: usize, gates: Vec<Gate>, depth: usize) -> Result<Self> {
        check_width(num_qubits)?;
        for gate in &gates {
            gate.validate(num_qubits)?;
        }
        let num_params = gates
            .iter()
            .filter_map(|g| g.param)
            .max()
            .map_or(0, |p| p + 1);
        let mut used = vec![false; num_params];
        for p in gates.iter().filter_map(|g| g.param) {
            used[p] = true;
        }
        if let Some(p) = used.iter().position(|u| !u) {
            return Err(Error::InvalidCircuit(format!(
                "parameter {p} is never referenced"
            )));
        }
        Ok(Self {
            num_qubits,
            gates,
            num_params,
            depth,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.num_params {
            return Err(Error::ParameterCount {
                expected: self.num_params,
                actual: theta.len(),
            });
        }
        Ok(())
    }

    fn apply_range(
        &self,
        state: &mut Statevector,
        theta: &[f64],
        range: Range<usize>,
    ) -> Result<()> {
        for gate in &self.gates[range] {
            state.apply_gate(gate, gate.param.map(|p| theta[p]))?;
        }
        Ok(())
    }
}

fn check_width(num_qubits: usize) -> Result<()> {
    if num_qubits > MAX_QUBITS {
        return Err(Error::TooManyQubits(num_qubits));
    }
    if num_qubits == 0 {
        return Err(Error::InvalidCircuit("register has no qubits".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rotation {
    Ry,
    Rx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Entangler {
    Cnot,
    Cz,
}

/// Brick: pairs (0,1),(2,3),… then (1,2),(3,4),…; cascade: (0,1),(1,2),(2,3),…
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pattern {
    Brick,
    Cascade,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub rotation: Rotation,
    pub entangler: Entangler,
    pub pattern: Pattern,
}

/// One rotation per qubit followed by a row of entanglers, per layer.
/// Parameters are numbered layer by layer, qubit by qubit.
pub fn layered_ansatz(num_qubits: usize, layers: &[LayerSpec]) -> Result<ParamCircuit> {
    check_width(num_qubits)?;
    let mut gates = Vec::new();
    let mut param = 0;
    for layer in layers {
        for q in 0..num_qubits {
            gates.push(match layer.rotation {
                Rotation::Ry => Gate::ry(q, param),
                Rotation::Rx => Gate::rx(q, param),
            });
            param += 1;
        }
        let pairs: Vec<(usize, usize)> = match layer.pattern {
            Pattern::Brick => (0..num_qubits.saturating_sub(1))
                .step_by(2)
                .chain((1..num_qubits.saturating_sub(1)).step_by(2))
                .map(|c| (c, c + 1))
                .collect(),
            Pattern::Cascade => (0..num_qubits.saturating_sub(1))
                .map(|c| (c, c + 1))
                .collect(),
        };
        for (c, t) in pairs {
            gates.push(match layer.entangler {
                Entangler::Cnot => Gate::cnot(c, t),
                Entangler::Cz => Gate::cz(c, t),
            });
        }
    }
    ParamCircuit::new(num_qubits, gates, layers.len())
}

/// `RY` layers with brick-pattern CNOTs.
pub fn hardware_efficient(num_qubits: usize, depth: usize) -> Result<ParamCircuit> {
    let layer = LayerSpec {
        rotation: Rotation::Ry,
        entangler: Entangler::Cnot,
        pattern: Pattern::Brick,
    };
    layered_ansatz(num_qubits, &vec![layer; depth])
}

/// `RY`+CNOT first layer, then alternating `RX`+CZ and `RY`+CZ brick layers.
pub fn mixed_hardware_efficient(num_qubits: usize, depth: usize) -> Result<ParamCircuit> {
    let layers: Vec<LayerSpec> = (0..depth)
        .map(|l| LayerSpec {
            rotation: if l % 2 == 1 {
                Rotation::Rx
            } else {
                Rotation::Ry
            },
            entangler: if l == 0 {
                Entangler::Cnot
            } else {
                Entangler::Cz
            },
            pattern: Pattern::Brick,
        })
        .collect();
    layered_ansatz(num_qubits, &layers)
}

/// `RX` layers with a CZ cascade down the register.
pub fn rx_cz_cascade(num_qubits: usize, depth: usize) -> Result<ParamCircuit> {
    let layer = LayerSpec {
        rotation: Rotation::Rx,
        entangler: Entangler::Cz,
        pattern: Pattern::Cascade,
    };
    layered_ansatz(num_qubits, &vec![layer; depth])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Statevector {
    num_qubits: usize,
    amps: Vec<Complex64>,
}

impl Statevector {
    /// `|0…0⟩` on `num_qubits` qubits.
    pub fn zero(num_qubits: usize) -> Result<Self> {
        check_width(num_qubits)?;
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << num_qubits];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(Self { num_qubits, amps })
    }

    /// Wraps amplitudes without renormalizing them.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let dim = amps.len();
        if dim < 2 || !dim.is_power_of_two() {
            return Err(Error::DimensionMismatch(format!(
                "{dim} amplitudes is not a power of two"
            )));
        }
        let num_qubits = dim.trailing_zeros() as usize;
        check_width(num_qubits)?;
        Ok(Self { num_qubits, amps })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    fn mask(&self, qubit: usize) -> usize {
        1 << (self.num_qubits - 1 - qubit)
    }

    pub fn apply_gate(&mut self, gate: &Gate, theta: Option<f64>) -> Result<()> {
        gate.validate(self.num_qubits)?;
        match (gate.kind, theta) {
            (GateKind::Ry | GateKind::Rx, None) => {
                return Err(Error::MissingAngle {
                    gate: gate.kind.name(),
                })
            }
            (GateKind::Cnot | GateKind::Cz, Some(_)) => {
                return Err(Error::UnexpectedAngle {
                    gate: gate.kind.name(),
                })
            }
            (GateKind::Ry, Some(angle)) => self.ry(gate.target, angle),
            (GateKind::Rx, Some(angle)) => self.rx(gate.target, angle),
            (GateKind::Cnot, None) => self.cnot(gate.control.unwrap_or_default(), gate.target),
            (GateKind::Cz, None) => self.cz(gate.control.unwrap_or_default(), gate.target),
        }
        Ok(())
    }

    fn ry(&mut self, qubit: usize, angle: f64) {
        let (s, c) = (angle / 2.0).sin_cos();
        let mask = self.mask(qubit);
        for base in (0..self.amps.len()).step_by(2 * mask) {
            let (lo, hi) = self.amps[base..base + 2 * mask].split_at_mut(mask);
            for (a0, a1) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x0, x1) = (*a0, *a1);
                *a0 = x0 * c - x1 * s;
                *a1 = x0 * s + x1 * c;
            }
        }
    }

    fn rx(&mut self, qubit: usize, angle: f64) {
        let (s, c) = (angle / 2.0).sin_cos();
        let mask = self.mask(qubit);
        for base in (0..self.amps.len()).step_by(2 * mask) {
            let (lo, hi) = self.amps[base..base + 2 * mask].split_at_mut(mask);
            for (a0, a1) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x0, x1) = (*a0, *a1);
                // -i s x = (s·x.im, -s·x.re)
                *a0 = Complex64::new(c * x0.re + s * x1.im, c * x0.im - s * x1.re);
                *a1 = Complex64::new(c * x1.re + s * x0.im, c * x1.im - s * x0.re);
            }
        }
    }

    fn cnot(&mut self, control: usize, target: usize) {
        let (cmask, tmask) = (self.mask(control), self.mask(target));
        for i in 0..self.amps.len() {
            if i & cmask != 0 && i & tmask == 0 {
                self.amps.swap(i, i | tmask);
            }
        }
    }

    fn cz(&mut self, control: usize, target: usize) {
        let both = self.mask(control) | self.mask(target);
        for (i, a) in self.amps.iter_mut().enumerate() {
            if i & both == both {
                *a = -*a;
            }
        }
    }
}

/// Value-semantics wrapper around [`Statevector::apply_gate`].
pub fn apply_gate(mut state: Statevector, gate: &Gate, theta: Option<f64>) -> Result<Statevector> {
    state.apply_gate(gate, theta)?;
    Ok(state)
}

/// Applies the circuit to `|0…0⟩`.
pub fn run_circuit(circuit: &ParamCircuit, theta: &[f64]) -> Result<Statevector> {
    circuit.check_theta(theta)?;
    let mut state = Statevector::zero(circuit.num_qubits)?;
    circuit.apply_range(&mut state, theta, 0..circuit.gates.len())?;
    Ok(state)
}

/// Calls `visit(gate_index, param_index, plus, minus)` for every rotation
/// gate, where `plus`/`minus` are the final states with only that gate's
/// angle shifted by `±shift`. The unshifted prefix is shared between gates.
pub fn for_each_parameter_shift<F>(
    circuit: &ParamCircuit,
    theta: &[f64],
    shift: f64,
    mut visit: F,
) -> Result<()>
where
    F: FnMut(usize, usize, &Statevector, &Statevector) -> Result<()>,
{
    circuit.check_theta(theta)?;
    let end = circuit.gates.len();
    let mut prefix = Statevector::zero(circuit.num_qubits)?;
    for (g, gate) in circuit.gates.iter().enumerate() {
        let angle = gate.param.map(|p| theta[p]);
        if let (Some(p), Some(a)) = (gate.param, angle) {
            let mut plus = prefix.clone();
            plus.apply_gate(gate, Some(a + shift))?;
            circuit.apply_range(&mut plus, theta, g + 1..end)?;
            let mut minus = prefix.clone();
            minus.apply_gate(gate, Some(a - shift))?;
            circuit.apply_range(&mut minus, theta, g + 1..end)?;
            visit(g, p, &plus, &minus)?;
        }
        prefix.apply_gate(gate, angle)?;
    }
    Ok(())
}

/// Observable diagonal in the computational basis, stored as its eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalObservable {
    values: Vec<f64>,
}

impl DiagonalObservable {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn constant(num_qubits: usize, value: f64) -> Self {
        Self::new(vec![value; 1 << num_qubits])
    }

    /// Pauli `Z` on one qubit of an `num_qubits` register.
    pub fn pauli_z(num_qubits: usize, qubit: usize) -> Self {
        let mask = 1 << (num_qubits - 1 - qubit);
        Self::new(
            (0..1usize << num_qubits)
                .map(|i| if i & mask == 0 { 1.0 } else { -1.0 })
                .collect(),
        )
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn check_dims(state: &Statevector, obs: &DiagonalObservable) -> Result<()> {
    if state.dim() != obs.len() {
        return Err(Error::DimensionMismatch(format!(
            "state has {} amplitudes, observable has {} eigenvalues",
            state.dim(),
            obs.len()
        )));
    }
    Ok(())
}

/// `Σ_i |a_i|² d_i`.
pub fn expectation_exact(state: &Statevector, obs: &DiagonalObservable) -> Result<f64> {
    check_dims(state, obs)?;
    Ok(state
        .amps
        .iter()
        .zip(&obs.values)
        .map(|(a, d)| a.norm_sqr() * d)
        .sum())
}

/// Mean eigenvalue over `shots` bitstrings drawn from `|a_i|²`.
pub fn expectation_sampled<R: Rng + ?Sized>(
    state: &Statevector,
    obs: &DiagonalObservable,
    shots: u64,
    rng: &mut R,
) -> Result<f64> {
    check_dims(state, obs)?;
    if shots == 0 {
        return Err(Error::ZeroShots);
    }
    let sampler = OutcomeSampler::new(&state.probabilities());
    let total: f64 = (0..shots).map(|_| obs.values[sampler.sample(rng)]).sum();
    Ok(total / shots as f64)
}

/// Inverse-CDF sampler over computational basis outcomes.
#[derive(Debug, Clone)]
pub struct OutcomeSampler {
    cdf: Vec<f64>,
}

impl OutcomeSampler {
    pub fn new(probabilities: &[f64]) -> Self {
        let mut acc = 0.0;
        let cdf = probabilities
            .iter()
            .map(|p| {
                acc += p.max(0.0);
                acc
            })
            .collect();
        Self { cdf }
    }

    pub fn dim(&self) -> usize {
        self.cdf.len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = self.cdf.last().copied().unwrap_or(0.0);
        let u = rng.random::<f64>() * total;
        self.cdf
            .partition_point(|&c| c <= u)
            .min(self.cdf.len() - 1)
    }

    /// Histogram of `shots` draws as sparse `(outcome, count)` pairs in
    /// increasing outcome order. Small budgets draw bitstrings one at a time;
    /// large ones draw the multinomial counts directly through conditional
    /// binomials. Both produce the same distribution.
    pub fn counts<R: Rng + ?Sized>(&self, shots: u64, rng: &mut R) -> Vec<(usize, u64)> {
        if (shots as usize) < self.cdf.len() {
            let mut draws: Vec<usize> = (0..shots).map(|_| self.sample(rng)).collect();
            draws.sort_unstable();
            let mut out: Vec<(usize, u64)> = Vec::new();
            for d in draws {
                match out.last_mut() {
                    Some((i, n)) if *i == d => *n += 1,
                    _ => out.push((d, 1)),
                }
            }
            return out;
        }
        let total = self.cdf.last().copied().unwrap_or(0.0);
        let mut out = Vec::new();
        let mut remaining = shots;
        let mut prev = 0.0;
        for (i, &c) in self.cdf.iter().enumerate() {
            if remaining == 0 {
                break;
            }
            let p = c - prev;
            let mass = total - prev;
            prev = c;
            if p <= 0.0 {
                continue;
            }
            // the tail beyond this outcome carries no mass: take everything left
            let q = if total - c <= total * 1e-15 {
                1.0
            } else {
                (p / mass).min(1.0)
            };
            let k = if q >= 1.0 {
                remaining
            } else {
                Binomial::new(remaining, q)
                    .map(|b| b.sample(rng))
                    .unwrap_or(remaining)
            };
            if k > 0 {
                out.push((i, k));
                remaining -= k;
            }
        }
        out
    }
}

/// `copies` identical blocks sharing one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct StackSpec {
    block: ParamCircuit,
    copies: usize,
}

impl StackSpec {
    pub fn new(block: ParamCircuit, copies: usize) -> Result<Self> {
        if copies < 1 {
            return Err(Error::EmptyStack);
        }
        Ok(Self { block, copies })
    }

    pub fn block(&self) -> &ParamCircuit {
        &self.block
    }

    pub fn copies(&self) -> usize {
        self.copies
    }

    /// Qubit count of the equivalent wide circuit.
    pub fn total_qubits(&self) -> usize {
        self.block.num_qubits * self.copies
    }
}

/// Shot budget for each block: `total / k`, remainder to the earliest blocks.
pub fn split_shots(total: u64, copies: usize) -> Result<Vec<u64>> {
    if copies < 1 {
        return Err(Error::EmptyStack);
    }
    let k = copies as u64;
    if total < k {
        return Err(Error::ZeroShots);
    }
    let (base, rem) = (total / k, total % k);
    Ok((0..k).map(|b| base + u64::from(b < rem)).collect())
}

/// Mean of the per-block estimates. `shots_total = None` evaluates every
/// block exactly; otherwise each block gets its share of `shots_total` and is
/// sampled independently from `rng` in block order.
pub fn stacked_estimate<R: Rng + ?Sized>(
    stack: &StackSpec,
    theta: &[f64],
    obs: &DiagonalObservable,
    shots_total: Option<u64>,
    rng: &mut R,
) -> Result<f64> {
    let state = run_circuit(&stack.block, theta)?;
    let per_block: Vec<f64> = match shots_total {
        None => {
            let e = expectation_exact(&state, obs)?;
            vec![e; stack.copies]
        }
        Some(total) => split_shots(total, stack.copies)?
            .into_iter()
            .map(|shots| expectation_sampled(&state, obs, shots, rng))
            .collect::<Result<_>>()?,
    };
    Ok(per_block.iter().sum::<f64>() / stack.copies as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4, PI};

    fn basis(n: usize, index: usize) -> Statevector {
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
        amps[index] = Complex64::new(1.0, 0.0);
        Statevector::from_amplitudes(amps).unwrap()
    }

    fn plus() -> Statevector {
        Statevector::from_amplitudes(vec![Complex64::new(FRAC_1_SQRT_2, 0.0); 2]).unwrap()
    }

    #[test]
    fn identity_rotation_keeps_zero_state() {
        let s = apply_gate(Statevector::zero(1).unwrap(), &Gate::ry(0, 0), Some(0.0)).unwrap();
        assert_abs_diff_eq!(s.amplitudes()[0].re, 1.0);
        assert_abs_diff_eq!(s.amplitudes()[1].norm(), 0.0);
    }

    #[test]
    fn ry_pi_flips() {
        let s = apply_gate(Statevector::zero(1).unwrap(), &Gate::ry(0, 0), Some(PI)).unwrap();
        assert_abs_diff_eq!(s.amplitudes()[1].norm_sqr(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn cnot_and_cz_on_basis_states() {
        // |10⟩: qubit 0 set, index 2
        let s = apply_gate(basis(2, 2), &Gate::cnot(0, 1), None).unwrap();
        assert_eq!(s.amplitudes()[3], Complex64::new(1.0, 0.0));
        let s = apply_gate(basis(2, 3), &Gate::cz(0, 1), None).unwrap();
        assert_eq!(s.amplitudes()[3], Complex64::new(-1.0, 0.0));
    }

    #[test]
    fn gate_errors() {
        let mut s = Statevector::zero(2).unwrap();
        assert!(matches!(
            s.apply_gate(&Gate::ry(2, 0), Some(0.1)),
            Err(Error::QubitOutOfRange { .. })
        ));
        assert!(matches!(
            s.apply_gate(&Gate::ry(0, 0), None),
            Err(Error::MissingAngle { .. })
        ));
        assert!(matches!(
            s.apply_gate(&Gate::cz(0, 1), Some(1.0)),
            Err(Error::UnexpectedAngle { .. })
        ));
        assert!(s.apply_gate(&Gate::cnot(1, 1), None).is_err());
        assert!(matches!(
            Statevector::zero(21),
            Err(Error::TooManyQubits(21))
        ));
    }

    #[test]
    fn run_circuit_examples() {
        let c = ParamCircuit::new(1, vec![Gate::ry(0, 0)], 1).unwrap();
        let s = run_circuit(&c, &[FRAC_PI_2]).unwrap();
        assert_abs_diff_eq!(s.amplitudes()[0].re, FRAC_PI_4.cos(), epsilon = 1e-15);
        assert_abs_diff_eq!(s.amplitudes()[1].re, FRAC_PI_4.sin(), epsilon = 1e-15);

        let empty = ParamCircuit::new(3, vec![], 0).unwrap();
        assert_eq!(
            run_circuit(&empty, &[]).unwrap(),
            Statevector::zero(3).unwrap()
        );

        let hea = hardware_efficient(5, 3).unwrap();
        let s = run_circuit(&hea, &vec![0.0; hea.num_params()]).unwrap();
        assert_abs_diff_eq!(s.amplitudes()[0].re, 1.0, epsilon = 1e-15);

        assert!(matches!(
            run_circuit(&hea, &[0.0]),
            Err(Error::ParameterCount {
                expected: 15,
                actual: 1
            })
        ));
    }

    #[test]
    fn circuit_rejects_unreferenced_parameter() {
        let err = ParamCircuit::new(2, vec![Gate::ry(0, 0), Gate::ry(1, 2)], 1).unwrap_err();
        assert!(matches!(err, Error::InvalidCircuit(_)));
    }

    #[test]
    fn ansatz_shapes() {
        let hea = hardware_efficient(15, 2).unwrap();
        assert_eq!(hea.num_params(), 30);
        let cnots: Vec<_> = hea.gates()[5..7]
            .iter()
            .map(|g| (g.control, g.target))
            .collect();
        assert_eq!(hea.gates().len(), 2 * (15 + 14));
        assert!(cnots.iter().all(|(c, _)| c.is_none()));

        let four = hardware_efficient(5, 1).unwrap();
        let pairs: Vec<_> = four.gates()[5..]
            .iter()
            .map(|g| (g.control.unwrap(), g.target))
            .collect();
        assert_eq!(pairs, vec![(0, 1), (2, 3), (1, 2), (3, 4)]);

        let mixed = mixed_hardware_efficient(4, 3).unwrap();
        assert_eq!(mixed.num_params(), 12);
        let kinds: Vec<_> = mixed.gates().iter().map(|g| g.kind).collect();
        assert_eq!(&kinds[4..7], &[GateKind::Cnot; 3]);
        assert_eq!(kinds[7], GateKind::Rx);
        assert_eq!(&kinds[18..21], &[GateKind::Cz; 3]);

        let cascade = rx_cz_cascade(5, 4).unwrap();
        assert_eq!(cascade.num_params(), 20);
        let pairs: Vec<_> = cascade.gates()[5..9]
            .iter()
            .map(|g| (g.control.unwrap(), g.target))
            .collect();
        assert_eq!(pairs, vec![(0, 1), (1, 2), (2, 3), (3, 4)]);
    }

    #[test]
    fn exact_expectations() {
        let z = DiagonalObservable::pauli_z(1, 0);
        assert_abs_diff_eq!(
            expectation_exact(&Statevector::zero(1).unwrap(), &z).unwrap(),
            1.0
        );
        assert_abs_diff_eq!(
            expectation_exact(&plus(), &z).unwrap(),
            0.0,
            epsilon = 1e-15
        );
        let c = ParamCircuit::new(1, vec![Gate::ry(0, 0)], 1).unwrap();
        for theta in [0.3, 1.2, -2.5] {
            let s = run_circuit(&c, &[theta]).unwrap();
            assert_abs_diff_eq!(
                expectation_exact(&s, &z).unwrap(),
                theta.cos(),
                epsilon = 1e-14
            );
        }
        let bad = DiagonalObservable::pauli_z(2, 0);
        assert!(matches!(
            expectation_exact(&plus(), &bad),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn rx_matches_convention() {
        // ⟨Z⟩ of RX(θ)|0⟩ is also cos θ; ⟨Y⟩-sign shows up as an imaginary amplitude.
        let c = ParamCircuit::new(1, vec![Gate::rx(0, 0)], 1).unwrap();
        let s = run_circuit(&c, &[0.7]).unwrap();
        assert_abs_diff_eq!(s.amplitudes()[0].re, 0.35f64.cos(), epsilon = 1e-15);
        assert_abs_diff_eq!(s.amplitudes()[1].im, -(0.35f64.sin()), epsilon = 1e-15);
    }

    #[test]
    fn sampled_expectation_edge_cases() {
        let mut rng = Stream::new(1).rng();
        let obs = DiagonalObservable::constant(2, 3.25);
        let hea = hardware_efficient(2, 2).unwrap();
        let s = run_circuit(&hea, &[0.1, 0.7, -1.0, 2.0]).unwrap();
        assert_eq!(expectation_sampled(&s, &obs, 17, &mut rng).unwrap(), 3.25);
        let z = DiagonalObservable::pauli_z(1, 0);
        let zero = Statevector::zero(1).unwrap();
        assert_eq!(expectation_sampled(&zero, &z, 100, &mut rng).unwrap(), 1.0);
        assert_eq!(
            expectation_sampled(&zero, &z, 0, &mut rng),
            Err(Error::ZeroShots)
        );
    }

    #[test]
    fn sampled_expectation_is_deterministic_per_seed() {
        let z = DiagonalObservable::pauli_z(1, 0);
        let a = expectation_sampled(&plus(), &z, 1000, &mut Stream::new(9).rng()).unwrap();
        let b = expectation_sampled(&plus(), &z, 1000, &mut Stream::new(9).rng()).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn sampled_std_follows_binomial_at_one_million_shots() {
        let z = DiagonalObservable::pauli_z(1, 0);
        let mut rng = Stream::new(5).rng();
        let est: Vec<f64> = (0..100)
            .map(|_| expectation_sampled(&plus(), &z, 1_000_000, &mut rng).unwrap())
            .collect();
        let std = sample_std(&est);
        assert!((0.7e-3..=1.3e-3).contains(&std), "std {std}");
    }

    #[test]
    fn sampled_mean_within_five_standard_errors() {
        let c = hardware_efficient(3, 2).unwrap();
        let s = run_circuit(&c, &[0.3, -0.8, 1.1, 0.4, 2.0, -0.5]).unwrap();
        let obs = DiagonalObservable::new((0..8).map(|i| (i as f64 - 3.0) * 0.7).collect());
        let exact = expectation_exact(&s, &obs).unwrap();
        let mut rng = Stream::new(11).rng();
        let est: Vec<f64> = (0..1000)
            .map(|_| expectation_sampled(&s, &obs, 1000, &mut rng).unwrap())
            .collect();
        let mean = est.iter().sum::<f64>() / est.len() as f64;
        let se = sample_std(&est) / (est.len() as f64).sqrt();
        assert!(
            (mean - exact).abs() < 5.0 * se,
            "mean {mean} exact {exact} se {se}"
        );
    }

    #[test]
    fn counts_match_distribution_and_total() {
        let probs = [0.1, 0.0, 0.6, 0.3];
        let sampler = OutcomeSampler::new(&probs);
        for shots in [3u64, 50_000] {
            let counts = sampler.counts(shots, &mut Stream::new(shots).rng());
            assert_eq!(counts.iter().map(|c| c.1).sum::<u64>(), shots);
            assert!(counts.iter().all(|&(i, _)| i != 1));
            if shots > 1000 {
                for &(i, n) in &counts {
                    let f = n as f64 / shots as f64;
                    assert!((f - probs[i]).abs() < 0.01, "{i}: {f}");
                }
            }
        }
    }

    #[test]
    fn stacking_exact_and_single_copy() {
        let block = hardware_efficient(4, 2).unwrap();
        let theta: Vec<f64> = (0..8).map(|i| 0.3 * i as f64 - 1.0).collect();
        let obs = DiagonalObservable::new((0..16).map(|i| (i as f64).sin()).collect());
        let exact = expectation_exact(&run_circuit(&block, &theta).unwrap(), &obs).unwrap();
        for k in [1, 5, 10] {
            let stack = StackSpec::new(block.clone(), k).unwrap();
            let e =
                stacked_estimate(&stack, &theta, &obs, None, &mut Stream::new(0).rng()).unwrap();
            assert_abs_diff_eq!(e, exact, epsilon = 1e-12);
        }
        let stack = StackSpec::new(block.clone(), 1).unwrap();
        let state = run_circuit(&block, &theta).unwrap();
        let a =
            stacked_estimate(&stack, &theta, &obs, Some(777), &mut Stream::new(3).rng()).unwrap();
        let b = expectation_sampled(&state, &obs, 777, &mut Stream::new(3).rng()).unwrap();
        assert_eq!(a, b);
        assert_eq!(StackSpec::new(block, 0).unwrap_err(), Error::EmptyStack);
    }

    #[test]
    fn shot_split_gives_remainder_to_earliest_blocks() {
        assert_eq!(split_shots(23, 5).unwrap(), vec![5, 5, 5, 4, 4]);
        assert_eq!(split_shots(10_000, 10).unwrap(), vec![1000; 10]);
        assert_eq!(split_shots(3, 5), Err(Error::ZeroShots));
    }

    #[test]
    fn parameter_shift_states_match_direct_runs() {
        let c = mixed_hardware_efficient(3, 3).unwrap();
        let theta: Vec<f64> = (0..c.num_params()).map(|i| 0.2 * i as f64 - 0.5).collect();
        let mut seen = 0;
        for_each_parameter_shift(&c, &theta, FRAC_PI_2, |_, p, plus, minus| {
            let mut tp = theta.clone();
            tp[p] += FRAC_PI_2;
            let mut tm = theta.clone();
            tm[p] -= FRAC_PI_2;
            assert_eq!(plus, &run_circuit(&c, &tp).unwrap());
            assert_eq!(minus, &run_circuit(&c, &tm).unwrap());
            seen += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, c.num_params());
    }

    fn sample_std(xs: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    }
}
