//! Chebyshev basis, domain mapping and the diagonal observable families.
//!
//! Derivatives come from the differentiated three-term recurrence
//! `T⁽ᵏ⁾ᵢ₊₁ = 2x T⁽ᵏ⁾ᵢ + 2k T⁽ᵏ⁻¹⁾ᵢ − T⁽ᵏ⁾ᵢ₋₁`, which stays finite at `x = ±1`.
//!
//! Every observable here is diagonal in the computational basis, so its
//! expectation reduces to `Σ_k b_k(x) m_k` where the *moments* `m_k` depend
//! only on the state and the *basis values* `b_k(x)` only on the point.

use crate::error::{Error, Result};
use crate::sim::DiagonalObservable;

/// `T_i(x)`, with `x` clamped to `[-1, 1]`.
pub fn cheb(i: usize, x: f64) -> f64 {
    cheb_deriv(i, x, 0)
}

/// `m`-th derivative of `T_i` at `x`.
pub fn cheb_deriv(i: usize, x: f64, m: u32) -> f64 {
    cheb_table(i + 1, x, m)[i]
}

/// `T_i^{(m)}(x)` for `i < count`.
pub fn cheb_table(count: usize, x: f64, m: u32) -> Vec<f64> {
    let x = x.clamp(-1.0, 1.0);
    let mut prev: Vec<f64> = Vec::new();
    for k in 0..=m {
        let mut row = vec![0.0; count];
        if count > 0 && k == 0 {
            row[0] = 1.0;
        }
        if count > 1 {
            row[1] = match k {
                0 => x,
                1 => 1.0,
                _ => 0.0,
            };
        }
        for i in 1..count.saturating_sub(1) {
            let lower = if k > 0 { 2.0 * k as f64 * prev[i] } else { 0.0 };
            row[i + 1] = 2.0 * x * row[i] + lower - row[i - 1];
        }
        prev = row;
    }
    prev
}

/// Physical interval `[lo, hi]` mapped affinely onto `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChebyshevBasis {
    lo: f64,
    hi: f64,
}

/// Canonical coordinate with the first-derivative chain-rule factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CanonicalPoint {
    pub x: f64,
    pub scale: f64,
}

impl CanonicalPoint {
    /// Chain-rule factor for an `m`-th derivative.
    pub fn scale_for(&self, m: u32) -> f64 {
        self.scale.powi(m as i32)
    }
}

impl ChebyshevBasis {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::InvalidConfig(format!("empty domain [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn contains(&self, x: f64) -> bool {
        let slack = 1e-12 * (self.hi - self.lo);
        x >= self.lo - slack && x <= self.hi + slack
    }

    pub fn map_to_canonical(&self, x: f64) -> Result<CanonicalPoint> {
        if !self.contains(x) {
            return Err(Error::OutOfDomain {
                value: x,
                lo: self.lo,
                hi: self.hi,
            });
        }
        let width = self.hi - self.lo;
        Ok(CanonicalPoint {
            x: (2.0 * (x - self.lo) / width - 1.0).clamp(-1.0, 1.0),
            scale: 2.0 / width,
        })
    }

    pub fn deriv_scale(&self, m: u32) -> f64 {
        (2.0 / (self.hi - self.lo)).powi(m as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

/// `coeff · T_{cheb_index}(x) · P₀⊗…⊗Pₙ₋₁`.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliTerm {
    pub coeff: f64,
    pub cheb_index: usize,
    pub paulis: Vec<Pauli>,
}

/// The three observable families.
///
/// * `GlobalDiagonal`: qubit 0 carries `Z`, followed by one index register
///   per variable (widths in `registers`). The eigenvalue of `|z, i, j, …⟩`
///   is `(−1)^z · T_i(x̃) · T_j(t̃) · …`.
/// * `OneLocalZ`: `Σ_i T_i(x̃) Z_i` over `qubits` qubits.
/// * `KLocalPauli`: `Σ_t α_t T_{c_t}(x̃) P_t`, each `P_t` with at most
///   `locality` non-identity atoms. Only `Z`/`I` atoms are diagonal.
#[derive(Debug, Clone, PartialEq)]
pub enum ObservableSpec {
    GlobalDiagonal {
        registers: Vec<usize>,
    },
    OneLocalZ {
        qubits: usize,
    },
    KLocalPauli {
        qubits: usize,
        locality: usize,
        terms: Vec<PauliTerm>,
    },
}

impl ObservableSpec {
    pub fn num_qubits(&self) -> usize {
        match self {
            ObservableSpec::GlobalDiagonal { registers } => 1 + registers.iter().sum::<usize>(),
            ObservableSpec::OneLocalZ { qubits } | ObservableSpec::KLocalPauli { qubits, .. } => {
                *qubits
            }
        }
    }

    pub fn num_variables(&self) -> usize {
        match self {
            ObservableSpec::GlobalDiagonal { registers } => registers.len(),
            _ => 1,
        }
    }

    /// Length of the moment vector (and of every basis-value vector).
    pub fn moment_count(&self) -> usize {
        match self {
            ObservableSpec::GlobalDiagonal { registers } => 1 << registers.iter().sum::<usize>(),
            ObservableSpec::OneLocalZ { qubits } => *qubits,
            ObservableSpec::KLocalPauli { terms, .. } => terms.len(),
        }
    }

    /// Structural checks; does not reject `X`/`Y` atoms.
    pub fn validate(&self) -> Result<()> {
        match self {
            ObservableSpec::GlobalDiagonal { registers } => {
                if registers.is_empty() || registers.contains(&0) {
                    return Err(Error::UnsupportedObservable(
                        "global observable needs non-empty registers".into(),
                    ));
                }
            }
            ObservableSpec::OneLocalZ { qubits } => {
                if *qubits == 0 {
                    return Err(Error::UnsupportedObservable("no qubits".into()));
                }
            }
            ObservableSpec::KLocalPauli {
                qubits,
                locality,
                terms,
            } => {
                for (t, term) in terms.iter().enumerate() {
                    if term.paulis.len() != *qubits {
                        return Err(Error::UnsupportedObservable(format!(
                            "term {t} has {} atoms for {qubits} qubits",
                            term.paulis.len()
                        )));
                    }
                    let active = term.paulis.iter().filter(|p| **p != Pauli::I).count();
                    if active > *locality {
                        return Err(Error::UnsupportedObservable(format!(
                            "term {t} is {active}-local, above the {locality}-local limit"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Rejects observables needing a measurement-basis rotation.
    pub fn require_diagonal(&self) -> Result<()> {
        if let ObservableSpec::KLocalPauli { terms, .. } = self {
            if let Some(t) = terms
                .iter()
                .position(|t| t.paulis.iter().any(|p| matches!(p, Pauli::X | Pauli::Y)))
            {
                return Err(Error::UnsupportedObservable(format!(
                    "term {t} has an X or Y atom, which needs a basis rotation"
                )));
            }
        }
        Ok(())
    }

    /// Per-moment coefficients at a physical point, including the domain
    /// chain-rule factors for derivative orders `orders` (one per variable).
    pub fn basis_values(
        &self,
        bases: &[ChebyshevBasis],
        point: &[f64],
        orders: &[u32],
    ) -> Result<Vec<f64>> {
        let vars = self.num_variables();
        if bases.len() != vars || point.len() != vars || orders.len() != vars {
            return Err(Error::LengthMismatch(format!(
                "observable has {vars} variables; got {} bases, {} coordinates, {} orders",
                bases.len(),
                point.len(),
                orders.len()
            )));
        }
        let canonical: Vec<CanonicalPoint> = bases
            .iter()
            .zip(point)
            .map(|(b, &x)| b.map_to_canonical(x))
            .collect::<Result<_>>()?;
        match self {
            ObservableSpec::GlobalDiagonal { registers } => {
                let mut values = vec![1.0];
                for ((&width, c), &m) in registers.iter().zip(&canonical).zip(orders) {
                    let scale = c.scale_for(m);
                    let table: Vec<f64> = cheb_table(1 << width, c.x, m)
                        .into_iter()
                        .map(|v| v * scale)
                        .collect();
                    values = values
                        .iter()
                        .flat_map(|outer| table.iter().map(move |inner| outer * inner))
                        .collect();
                }
                Ok(values)
            }
            ObservableSpec::OneLocalZ { qubits } => {
                let scale = canonical[0].scale_for(orders[0]);
                Ok(cheb_table(*qubits, canonical[0].x, orders[0])
                    .into_iter()
                    .map(|v| v * scale)
                    .collect())
            }
            ObservableSpec::KLocalPauli { terms, .. } => {
                self.require_diagonal()?;
                let top = terms.iter().map(|t| t.cheb_index + 1).max().unwrap_or(0);
                let scale = canonical[0].scale_for(orders[0]);
                let table = cheb_table(top, canonical[0].x, orders[0]);
                Ok(terms
                    .iter()
                    .map(|t| t.coeff * table[t.cheb_index] * scale)
                    .collect())
            }
        }
    }

    /// Moments `m_k = Σ_b w_b · e_k(b)` for outcome weights `w_b`
    /// (probabilities or normalized counts).
    pub fn moments<I>(&self, weights: I) -> Result<Vec<f64>>
    where
        I: IntoIterator<Item = (usize, f64)>,
    {
        let n = self.num_qubits();
        let mut m = vec![0.0; self.moment_count()];
        match self {
            ObservableSpec::GlobalDiagonal { .. } => {
                let index_bits = n - 1;
                let low = (1usize << index_bits) - 1;
                for (b, w) in weights {
                    if b >> index_bits == 0 {
                        m[b & low] += w;
                    } else {
                        m[b & low] -= w;
                    }
                }
            }
            ObservableSpec::OneLocalZ { qubits } => {
                for (b, w) in weights {
                    for (q, slot) in m.iter_mut().enumerate().take(*qubits) {
                        if b >> (n - 1 - q) & 1 == 0 {
                            *slot += w;
                        } else {
                            *slot -= w;
                        }
                    }
                }
            }
            ObservableSpec::KLocalPauli { terms, .. } => {
                self.require_diagonal()?;
                let masks: Vec<usize> = terms
                    .iter()
                    .map(|t| {
                        t.paulis
                            .iter()
                            .enumerate()
                            .filter(|(_, p)| **p == Pauli::Z)
                            .map(|(q, _)| 1usize << (n - 1 - q))
                            .fold(0, |acc, bit| acc | bit)
                    })
                    .collect();
                for (b, w) in weights {
                    for (slot, mask) in m.iter_mut().zip(&masks) {
                        if (b & mask).count_ones() % 2 == 0 {
                            *slot += w;
                        } else {
                            *slot -= w;
                        }
                    }
                }
            }
        }
        Ok(m)
    }

    /// Eigenvalue per computational basis state at `point`.
    pub fn diagonal_table(
        &self,
        bases: &[ChebyshevBasis],
        point: &[f64],
        orders: &[u32],
    ) -> Result<DiagonalObservable> {
        self.validate()?;
        self.require_diagonal()?;
        let basis = self.basis_values(bases, point, orders)?;
        let dim = 1usize << self.num_qubits();
        let values = (0..dim)
            .map(|b| {
                let e = self.moments(std::iter::once((b, 1.0)))?;
                Ok(e.iter().zip(&basis).map(|(e, v)| e * v).sum())
            })
            .collect::<Result<_>>()?;
        Ok(DiagonalObservable::new(values))
    }
}

/// Free-function form of [`ObservableSpec::diagonal_table`].
pub fn diagonal_table(
    spec: &ObservableSpec,
    bases: &[ChebyshevBasis],
    point: &[f64],
    orders: &[u32],
) -> Result<DiagonalObservable> {
    spec.diagonal_table(bases, point, orders)
}
