//! Benchmark differential problems and their closed-form solutions.
//!
//! A problem declares which derivatives of which unknowns its residuals need
//! (its [`Request`]s), maps those values to residuals, and supplies the
//! Jacobian of the residuals with respect to the requested values so the
//! loss gradient can be assembled by the chain rule.

use crate::encoding::{poly_eval, BcShift};
use crate::error::{Error, Result};
use crate::spectral::ChebyshevBasis;

/// `∂^orders f_function`, evaluated at every collocation point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Request {
    pub function: usize,
    pub orders: Vec<u32>,
}

impl Request {
    pub fn new(function: usize, orders: &[u32]) -> Self {
        Self {
            function,
            orders: orders.to_vec(),
        }
    }
}

/// Penalty-form boundary condition `f_function(point) = target`.
#[derive(Debug, Clone, PartialEq)]
pub struct BcCondition {
    pub function: usize,
    pub point: Vec<f64>,
    pub target: f64,
}

pub trait DifferentialProblem {
    fn name(&self) -> &str;

    /// Names of the unknowns, in encoding order.
    fn fields(&self) -> Vec<&'static str>;

    fn domain(&self) -> Result<Vec<ChebyshevBasis>>;

    fn requests(&self) -> Vec<Request>;

    /// Residual components from values ordered like [`Self::requests`].
    fn residuals(&self, point: &[f64], values: &[f64]) -> Result<Vec<f64>>;

    /// `∂R_i/∂v_j`, one row per residual component.
    fn jacobian(&self, point: &[f64], values: &[f64]) -> Result<Vec<Vec<f64>>>;

    /// Functional shift per unknown.
    fn shifts(&self) -> Vec<Option<BcShift>>;

    /// Boundary data for the penalty strategy. `axes` holds the grid points
    /// of each variable.
    fn bc_conditions(&self, axes: &[Vec<f64>]) -> Vec<BcCondition>;

    /// Closed-form `∂^orders f_function(point)`.
    fn analytic(&self, function: usize, point: &[f64], orders: &[u32]) -> Result<f64>;
}

fn check_arity(name: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::LengthMismatch(format!(
            "{name}: expected {expected} values, got {got}"
        )));
    }
    Ok(())
}

/// 1-D bar under body force with power-law hardening:
/// `u' − σ/K − (2/√3) ε₀ (σ/(√3 σ₀))ⁿ = 0`, `σ' + b = 0`, `u(0) = 0`,
/// `σ(0) = g` on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypoelasticProblem {
    pub k: f64,
    pub n: u32,
    pub b: f64,
    pub eps0: f64,
    pub sigma0: f64,
    pub g: f64,
}

impl Default for HypoelasticProblem {
    fn default() -> Self {
        Self {
            k: 100.0,
            n: 4,
            b: 10.0,
            eps0: 0.5,
            sigma0: 5.0,
            g: 12.0,
        }
    }
}

impl HypoelasticProblem {
    pub fn validate(&self) -> Result<()> {
        if self.k.is_nan() || self.k <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "K must be positive, got {}",
                self.k
            )));
        }
        if self.sigma0.is_nan() || self.sigma0 <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "sigma0 must be positive, got {}",
                self.sigma0
            )));
        }
        if self.n < 1 {
            return Err(Error::InvalidConfig("exponent n must be at least 1".into()));
        }
        for (name, v) in [("b", self.b), ("eps0", self.eps0), ("g", self.g)] {
            if !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be finite")));
            }
        }
        Ok(())
    }

    /// `(2/√3) ε₀ (1/(√3 σ₀))ⁿ`, the prefactor of `σⁿ`.
    fn power_coeff(&self) -> f64 {
        2.0 / 3f64.sqrt() * self.eps0 * (1.0 / (3f64.sqrt() * self.sigma0)).powi(self.n as i32)
    }

    /// `(D₁, D₂)` from `u'`, `σ`, `σ'`.
    pub fn hypoelastic_residuals(&self, du: f64, sigma: f64, dsigma: f64) -> (f64, f64) {
        let d1 = du - sigma / self.k - self.power_coeff() * sigma.powi(self.n as i32);
        (d1, dsigma + self.b)
    }

    pub fn sigma_poly(&self) -> Vec<f64> {
        vec![self.g, -self.b]
    }

    /// Coefficients of `u(x) = ∫₀ˣ σ/K + c σⁿ ds`, lowest degree first.
    pub fn u_poly(&self) -> Vec<f64> {
        let n = self.n as usize;
        let mut coeffs = vec![0.0; n + 2];
        // σ/K integrates to (g x − b x²/2)/K
        coeffs[1] += self.g / self.k;
        coeffs[2] += -self.b / (2.0 * self.k);
        let c = self.power_coeff();
        let mut binom = 1.0;
        for j in 0..=n {
            if j > 0 {
                binom = binom * (n + 1 - j) as f64 / j as f64;
            }
            let term = binom * self.g.powi((n - j) as i32) * (-self.b).powi(j as i32);
            coeffs[j + 1] += c * term / (j + 1) as f64;
        }
        coeffs
    }

    /// `(u(x), σ(x))`.
    pub fn hypoelastic_analytic(&self, x: f64) -> Result<(f64, f64)> {
        check_domain(x, 0.0, 1.0)?;
        Ok((
            poly_eval(&self.u_poly(), x, 0),
            poly_eval(&self.sigma_poly(), x, 0),
        ))
    }
}

fn check_domain(x: f64, lo: f64, hi: f64) -> Result<()> {
    if !(x >= lo - 1e-12 && x <= hi + 1e-12) {
        return Err(Error::OutOfDomain { value: x, lo, hi });
    }
    Ok(())
}

impl DifferentialProblem for HypoelasticProblem {
    fn name(&self) -> &str {
        "hypoelastic"
    }

    fn fields(&self) -> Vec<&'static str> {
        vec!["u", "sigma"]
    }

    fn domain(&self) -> Result<Vec<ChebyshevBasis>> {
        Ok(vec![ChebyshevBasis::new(0.0, 1.0)?])
    }

    fn requests(&self) -> Vec<Request> {
        vec![
            Request::new(0, &[1]),
            Request::new(1, &[0]),
            Request::new(1, &[1]),
        ]
    }

    fn residuals(&self, _point: &[f64], values: &[f64]) -> Result<Vec<f64>> {
        check_arity("hypoelastic", 3, values.len())?;
        let (d1, d2) = self.hypoelastic_residuals(values[0], values[1], values[2]);
        Ok(vec![d1, d2])
    }

    fn jacobian(&self, _point: &[f64], values: &[f64]) -> Result<Vec<Vec<f64>>> {
        check_arity("hypoelastic", 3, values.len())?;
        let n = self.n as i32;
        let dpow = self.power_coeff() * n as f64 * values[1].powi(n - 1);
        Ok(vec![
            vec![1.0, -1.0 / self.k - dpow, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
    }

    fn shifts(&self) -> Vec<Option<BcShift>> {
        vec![
            Some(BcShift::Point {
                anchor: vec![0.0],
                target: 0.0,
            }),
            Some(BcShift::Point {
                anchor: vec![0.0],
                target: self.g,
            }),
        ]
    }

    fn bc_conditions(&self, _axes: &[Vec<f64>]) -> Vec<BcCondition> {
        vec![
            BcCondition {
                function: 0,
                point: vec![0.0],
                target: 0.0,
            },
            BcCondition {
                function: 1,
                point: vec![0.0],
                target: self.g,
            },
        ]
    }

    fn analytic(&self, function: usize, point: &[f64], orders: &[u32]) -> Result<f64> {
        check_arity("hypoelastic point", 1, point.len())?;
        check_arity("hypoelastic orders", 1, orders.len())?;
        check_domain(point[0], 0.0, 1.0)?;
        let poly = match function {
            0 => self.u_poly(),
            1 => self.sigma_poly(),
            f => return Err(Error::InvalidConfig(format!("no unknown with index {f}"))),
        };
        Ok(poly_eval(&poly, point[0], orders[0]))
    }
}

/// Inviscid Burgers' equation `u_t + u u_x = 0` with `u(x, 0) = a x + b`
/// on `[0, 0.95]²`. Variables are ordered `(x, t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BurgersProblem {
    pub a: f64,
    pub b: f64,
    pub extent: f64,
}

impl BurgersProblem {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        let p = Self { a, b, extent: 0.95 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.extent.is_nan() || self.extent <= 0.0 {
            return Err(Error::InvalidConfig(
                "domain extent must be positive".into(),
            ));
        }
        let worst = 1.0 + self.a.min(0.0) * self.extent;
        if worst <= 0.0 {
            return Err(Error::Shock(worst));
        }
        Ok(())
    }

    pub fn burgers_residual(u: f64, du_dt: f64, du_dx: f64) -> f64 {
        du_dt + u * du_dx
    }

    pub fn burgers_analytic(&self, x: f64, t: f64) -> Result<f64> {
        self.derivative(x, t, 0, 0)
    }

    fn derivative(&self, x: f64, t: f64, px: u32, qt: u32) -> Result<f64> {
        let den = self.a * t + 1.0;
        if den <= 0.0 {
            return Err(Error::Shock(den));
        }
        let numer = match px {
            0 => self.a * x + self.b,
            1 => self.a,
            _ => return Ok(0.0),
        };
        // ∂_t^q (a t + 1)^{-1} = (−a)^q q! (a t + 1)^{-q-1}
        let fact: f64 = (1..=qt).map(f64::from).product();
        Ok(numer * (-self.a).powi(qt as i32) * fact / den.powi(qt as i32 + 1))
    }
}

impl DifferentialProblem for BurgersProblem {
    fn name(&self) -> &str {
        "burgers"
    }

    fn fields(&self) -> Vec<&'static str> {
        vec!["u"]
    }

    fn domain(&self) -> Result<Vec<ChebyshevBasis>> {
        let b = ChebyshevBasis::new(0.0, self.extent)?;
        Ok(vec![b, b])
    }

    fn requests(&self) -> Vec<Request> {
        vec![
            Request::new(0, &[0, 0]),
            Request::new(0, &[0, 1]),
            Request::new(0, &[1, 0]),
        ]
    }

    fn residuals(&self, _point: &[f64], values: &[f64]) -> Result<Vec<f64>> {
        check_arity("burgers", 3, values.len())?;
        Ok(vec![Self::burgers_residual(
            values[0], values[1], values[2],
        )])
    }

    fn jacobian(&self, _point: &[f64], values: &[f64]) -> Result<Vec<Vec<f64>>> {
        check_arity("burgers", 3, values.len())?;
        Ok(vec![vec![values[2], 1.0, values[0]]])
    }

    fn shifts(&self) -> Vec<Option<BcShift>> {
        vec![Some(BcShift::Slice {
            variable: 1,
            at: 0.0,
            profile: vec![self.b, self.a],
        })]
    }

    fn bc_conditions(&self, axes: &[Vec<f64>]) -> Vec<BcCondition> {
        axes.first()
            .map(|xs| {
                xs.iter()
                    .map(|&x| BcCondition {
                        function: 0,
                        point: vec![x, 0.0],
                        target: self.a * x + self.b,
                    })
                    .collect()
            })
            .unwrap_or_default()
    }

    fn analytic(&self, function: usize, point: &[f64], orders: &[u32]) -> Result<f64> {
        if function != 0 {
            return Err(Error::InvalidConfig(format!(
                "no unknown with index {function}"
            )));
        }
        check_arity("burgers point", 2, point.len())?;
        check_arity("burgers orders", 2, orders.len())?;
        for &v in point {
            check_domain(v, 0.0, self.extent)?;
        }
        self.derivative(point[0], point[1], orders[0], orders[1])
    }
}

/// Single unknown on `[−1, 1]` whose residual is the function value itself.
/// Encoded by one qubit with `⟨Z⟩` it gives the loss `⟨Z⟩²`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ToyProblem;

impl DifferentialProblem for ToyProblem {
    fn name(&self) -> &str {
        "toy"
    }

    fn fields(&self) -> Vec<&'static str> {
        vec!["f"]
    }

    fn domain(&self) -> Result<Vec<ChebyshevBasis>> {
        Ok(vec![ChebyshevBasis::new(-1.0, 1.0)?])
    }

    fn requests(&self) -> Vec<Request> {
        vec![Request::new(0, &[0])]
    }

    fn residuals(&self, _point: &[f64], values: &[f64]) -> Result<Vec<f64>> {
        check_arity("toy", 1, values.len())?;
        Ok(vec![values[0]])
    }

    fn jacobian(&self, _point: &[f64], values: &[f64]) -> Result<Vec<Vec<f64>>> {
        check_arity("toy", 1, values.len())?;
        Ok(vec![vec![1.0]])
    }

    fn shifts(&self) -> Vec<Option<BcShift>> {
        vec![None]
    }

    fn bc_conditions(&self, _axes: &[Vec<f64>]) -> Vec<BcCondition> {
        Vec::new()
    }

    fn analytic(&self, _function: usize, _point: &[f64], _orders: &[u32]) -> Result<f64> {
        Ok(0.0)
    }
}

/// ∞-norm of `predicted − exact`.
pub fn max_abs_error(predicted: &[f64], exact: &[f64]) -> Result<f64> {
    if predicted.len() != exact.len() {
        return Err(Error::LengthMismatch(format!(
            "{} predictions against {} reference values",
            predicted.len(),
            exact.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::EmptyGrid);
    }
    Ok(predicted
        .iter()
        .zip(exact)
        .map(|(p, e)| (p - e).abs())
        .fold(0.0, f64::max))
}

/// One error curve per distinct value of `points[_][cut]`: the remaining
/// coordinates paired with the absolute error, in input order.
#[derive(Debug, Clone, PartialEq)]
pub struct CutCurve {
    pub at: f64,
    pub samples: Vec<(Vec<f64>, f64)>,
}

pub fn cut_errors(points: &[Vec<f64>], errors: &[f64], cut: usize) -> Result<Vec<CutCurve>> {
    if points.len() != errors.len() {
        return Err(Error::LengthMismatch(format!(
            "{} points against {} errors",
            points.len(),
            errors.len()
        )));
    }
    let mut curves: Vec<CutCurve> = Vec::new();
    for (p, &e) in points.iter().zip(errors) {
        let at = *p
            .get(cut)
            .ok_or_else(|| Error::LengthMismatch(format!("point has no coordinate {cut}")))?;
        let rest: Vec<f64> = p
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != cut)
            .map(|(_, v)| *v)
            .collect();
        match curves.iter_mut().find(|c| c.at == at) {
            Some(c) => c.samples.push((rest, e)),
            None => curves.push(CutCurve {
                at,
                samples: vec![(rest, e)],
            }),
        }
    }
    Ok(curves)
}
