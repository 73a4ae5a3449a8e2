//! Truncated multivariate Taylor arithmetic.
//!
//! A [`Jet`] carries the Taylor coefficients of a scalar function around a
//! base point, in `nvars` variables and up to total degree `order`. Monomials
//! are stored in graded order (all degree-0 terms, then degree-1, ...), so the
//! coefficient vector of an order-k jet is a prefix of the order-(k+1) jet of
//! the same function. Arithmetic between jets of different orders truncates
//! to the smaller order.
//!
//! Internally coefficients are Taylor coefficients `f^(α)(p) / α!`;
//! [`Jet::derivative`] converts back to plain partial derivatives.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Mutex, OnceLock};

/// Largest supported number of variables.
pub const MAX_VARS: usize = 8;
/// Largest supported truncation order.
pub const MAX_ORDER: usize = 8;

/// Monomial layout and multiplication tables for a given `(nvars, order)`.
#[derive(Debug)]
pub struct JetSpace {
    nvars: usize,
    order: usize,
    exponents: Vec<Vec<u8>>,
    lookup: HashMap<Vec<u8>, usize>,
    /// `(a, b, c)`: monomial a times monomial b is monomial c.
    mul_table: Vec<(u32, u32, u32)>,
    /// Per variable, `(src, dst, factor)` for the partial derivative.
    diff_tables: Vec<Vec<(u32, u32, f64)>>,
    /// `α!` for every monomial.
    factorials: Vec<f64>,
}

fn space_registry() -> &'static Mutex<HashMap<(usize, usize), &'static JetSpace>> {
    static REGISTRY: OnceLock<Mutex<HashMap<(usize, usize), &'static JetSpace>>> = OnceLock::new();
    REGISTRY.get_or_init(|| Mutex::new(HashMap::new()))
}

fn monomials_of_degree(nvars: usize, degree: usize) -> Vec<Vec<u8>> {
    // Lexicographically descending in the exponent of x1, then x2, ...
    fn rec(nvars: usize, var: usize, remaining: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if var + 1 == nvars {
            cur.push(remaining as u8);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for e in (0..=remaining).rev() {
            cur.push(e as u8);
            rec(nvars, var + 1, remaining - e, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if nvars == 0 {
        if degree == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    rec(nvars, 0, degree, &mut Vec::with_capacity(nvars), &mut out);
    out
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

impl JetSpace {
    /// Shared space for `(nvars, order)`. Spaces are built once and live for
    /// the rest of the process.
    pub fn get(nvars: usize, order: usize) -> &'static JetSpace {
        assert!(nvars <= MAX_VARS, "jet spaces support at most {MAX_VARS} variables");
        assert!(order <= MAX_ORDER, "jet spaces support at most order {MAX_ORDER}");
        let mut reg = space_registry().lock().expect("jet space registry poisoned");
        if let Some(space) = reg.get(&(nvars, order)) {
            return space;
        }
        let space: &'static JetSpace = Box::leak(Box::new(JetSpace::build(nvars, order)));
        reg.insert((nvars, order), space);
        space
    }

    fn build(nvars: usize, order: usize) -> JetSpace {
        let exponents: Vec<Vec<u8>> = (0..=order).flat_map(|d| monomials_of_degree(nvars, d)).collect();
        let lookup: HashMap<Vec<u8>, usize> = exponents.iter().enumerate().map(|(i, e)| (e.clone(), i)).collect();
        let degree = |e: &[u8]| e.iter().map(|&v| v as usize).sum::<usize>();

        let mut mul_table = Vec::new();
        for (a, ea) in exponents.iter().enumerate() {
            let da = degree(ea);
            for (b, eb) in exponents.iter().enumerate() {
                if da + degree(eb) > order {
                    continue;
                }
                let ec: Vec<u8> = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
                mul_table.push((a as u32, b as u32, lookup[&ec] as u32));
            }
        }

        let mut diff_tables = vec![Vec::new(); nvars];
        for (var, table) in diff_tables.iter_mut().enumerate() {
            for (src, e) in exponents.iter().enumerate() {
                if e[var] == 0 {
                    continue;
                }
                let mut lowered = e.clone();
                lowered[var] -= 1;
                // Only targets that fit in the order-1 space are kept.
                if degree(&lowered) + 1 > order {
                    continue;
                }
                let dst = lookup[&lowered];
                table.push((src as u32, dst as u32, e[var] as f64));
            }
        }

        let factorials = exponents
            .iter()
            .map(|e| e.iter().map(|&v| factorial(v as usize)).product())
            .collect();

        JetSpace {
            nvars,
            order,
            exponents,
            lookup,
            mul_table,
            diff_tables,
            factorials,
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of monomials of total degree at most `order`.
    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    /// Exponent vectors in storage order.
    pub fn exponents(&self) -> &[Vec<u8>] {
        &self.exponents
    }

    /// Storage slot of a given exponent vector.
    pub fn index_of(&self, exponents: &[u8]) -> Option<usize> {
        self.lookup.get(exponents).copied()
    }
}

/// Domain violation raised by a jet primitive (value at the base point).
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum JetDomainError {
    #[error("division by zero (denominator value {0})")]
    DivisionByZero(f64),
    #[error("logarithm of non-positive value {0}")]
    LogNonPositive(f64),
    #[error("square root of value {0} (must be positive when derivatives are requested)")]
    SqrtDomain(f64),
    #[error("real power of non-positive base {0}")]
    PowNonPositive(f64),
    #[error("non-finite value produced")]
    NonFinite,
}

/// Truncated Taylor expansion of a scalar function at a point.
#[derive(Clone)]
pub struct Jet {
    space: &'static JetSpace,
    coeffs: Vec<f64>,
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Jet")
            .field("nvars", &self.space.nvars)
            .field("order", &self.space.order)
            .field("coeffs", &self.coeffs)
            .finish()
    }
}

impl PartialEq for Jet {
    fn eq(&self, other: &Self) -> bool {
        self.space.nvars == other.space.nvars && self.space.order == other.space.order && self.coeffs == other.coeffs
    }
}

impl Jet {
    pub fn constant(nvars: usize, order: usize, value: f64) -> Jet {
        let space = JetSpace::get(nvars, order);
        let mut coeffs = vec![0.0; space.len()];
        coeffs[0] = value;
        Jet { space, coeffs }
    }

    /// The coordinate function `x_var` expanded around `value`.
    pub fn variable(nvars: usize, order: usize, var: usize, value: f64) -> Jet {
        assert!(var < nvars, "variable index out of range");
        let mut jet = Jet::constant(nvars, order, value);
        if order >= 1 {
            let mut e = vec![0u8; nvars];
            e[var] = 1;
            let slot = jet.space.index_of(&e).expect("degree-1 monomial present");
            jet.coeffs[slot] = 1.0;
        }
        jet
    }

    /// Builds a jet from Taylor coefficients in storage order.
    pub fn from_taylor(nvars: usize, order: usize, coeffs: Vec<f64>) -> Jet {
        let space = JetSpace::get(nvars, order);
        assert_eq!(coeffs.len(), space.len(), "coefficient count mismatch");
        Jet { space, coeffs }
    }

    pub fn nvars(&self) -> usize {
        self.space.nvars
    }

    pub fn order(&self) -> usize {
        self.space.order
    }

    pub fn space(&self) -> &'static JetSpace {
        self.space
    }

    /// Value at the base point.
    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    /// Taylor coefficients in storage order.
    pub fn taylor_coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// All partial derivatives in storage order (`coeff * α!`).
    pub fn derivatives(&self) -> Vec<f64> {
        self.coeffs.iter().zip(&self.space.factorials).map(|(c, f)| c * f).collect()
    }

    /// Partial derivative given as a list of variable indices, e.g. `[0, 0, 2]`
    /// for ∂₁²∂₃. Returns `None` if the total degree exceeds the order.
    pub fn derivative(&self, vars: &[usize]) -> Option<f64> {
        let mut e = vec![0u8; self.space.nvars];
        for &v in vars {
            if v >= self.space.nvars {
                return None;
            }
            e[v] += 1;
        }
        let slot = self.space.index_of(&e)?;
        Some(self.coeffs[slot] * self.space.factorials[slot])
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    pub fn truncate(&self, order: usize) -> Jet {
        if order >= self.space.order {
            return self.clone();
        }
        let space = JetSpace::get(self.space.nvars, order);
        Jet {
            space,
            coeffs: self.coeffs[..space.len()].to_vec(),
        }
    }

    fn common_space(&self, other: &Jet) -> &'static JetSpace {
        assert_eq!(self.space.nvars, other.space.nvars, "jets over different variable counts");
        if self.space.order <= other.space.order {
            self.space
        } else {
            other.space
        }
    }

    /// Partial derivative with respect to `var`; the result has order − 1.
    pub fn diff(&self, var: usize) -> Jet {
        assert!(self.space.order >= 1, "cannot differentiate an order-0 jet");
        let space = JetSpace::get(self.space.nvars, self.space.order - 1);
        let mut coeffs = vec![0.0; space.len()];
        for &(src, dst, factor) in &self.space.diff_tables[var] {
            coeffs[dst as usize] += factor * self.coeffs[src as usize];
        }
        Jet { space, coeffs }
    }

    pub fn scale(&self, c: f64) -> Jet {
        Jet {
            space: self.space,
            coeffs: self.coeffs.iter().map(|v| v * c).collect(),
        }
    }

    pub fn add_scalar(&self, c: f64) -> Jet {
        let mut out = self.clone();
        out.coeffs[0] += c;
        out
    }

    /// `self += c * other`, truncating `other` to this jet's order.
    pub fn add_scaled_assign(&mut self, c: f64, other: &Jet) {
        let space = self.common_space(other);
        if space.order < self.space.order {
            *self = self.truncate(space.order);
        }
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += c * b;
        }
    }

    /// `self += a * b` without allocating the product.
    pub fn add_product_assign(&mut self, a: &Jet, b: &Jet) {
        let space = self.common_space(a).order.min(b.space.order);
        if space < self.space.order {
            *self = self.truncate(space);
        }
        for &(i, j, k) in &self.space.mul_table {
            self.coeffs[k as usize] += a.coeffs[i as usize] * b.coeffs[j as usize];
        }
    }

    /// Composes a univariate function with this jet, given the function's
    /// derivatives `f^(k)` at the base value for `k = 0..=order`.
    pub fn compose(&self, derivs: &[f64]) -> Jet {
        let order = self.space.order;
        assert!(derivs.len() > order, "need derivatives up to the jet order");
        let mut h = self.clone();
        h.coeffs[0] = 0.0;
        let mut acc = Jet::constant(self.space.nvars, order, derivs[order] / factorial(order));
        for k in (0..order).rev() {
            acc = &acc * &h;
            acc.coeffs[0] += derivs[k] / factorial(k);
        }
        acc
    }

    pub fn recip(&self) -> Result<Jet, JetDomainError> {
        let a = self.value();
        if a == 0.0 || !a.is_finite() {
            return Err(JetDomainError::DivisionByZero(a));
        }
        let order = self.space.order;
        let mut derivs = Vec::with_capacity(order + 1);
        let mut d = 1.0 / a;
        for k in 0..=order {
            derivs.push(d);
            d *= -((k + 1) as f64) / a;
        }
        Ok(self.compose(&derivs))
    }

    pub fn try_div(&self, other: &Jet) -> Result<Jet, JetDomainError> {
        Ok(self * &other.recip()?)
    }

    /// Integer power by repeated squaring; negative powers go through `recip`.
    pub fn powi(&self, k: i64) -> Result<Jet, JetDomainError> {
        if k < 0 {
            return self.powi(-k)?.recip();
        }
        let mut result = Jet::constant(self.space.nvars, self.space.order, 1.0);
        let mut base = self.clone();
        let mut e = k as u64;
        while e > 0 {
            if e & 1 == 1 {
                result = &result * &base;
            }
            e >>= 1;
            if e > 0 {
                base = &base * &base;
            }
        }
        Ok(result)
    }

    /// Real power; the base value must be positive.
    pub fn powf(&self, p: f64) -> Result<Jet, JetDomainError> {
        let a = self.value();
        if a <= 0.0 {
            return Err(JetDomainError::PowNonPositive(a));
        }
        let order = self.space.order;
        let mut derivs = Vec::with_capacity(order + 1);
        let mut falling = 1.0;
        for k in 0..=order {
            derivs.push(falling * a.powf(p - k as f64));
            falling *= p - k as f64;
        }
        Ok(self.compose(&derivs))
    }

    pub fn sqrt(&self) -> Result<Jet, JetDomainError> {
        let a = self.value();
        if a < 0.0 || (a == 0.0 && self.space.order > 0) {
            return Err(JetDomainError::SqrtDomain(a));
        }
        if self.space.order == 0 {
            return Ok(Jet::constant(self.space.nvars, 0, a.sqrt()));
        }
        self.powf(0.5).map_err(|_| JetDomainError::SqrtDomain(a))
    }

    pub fn exp(&self) -> Jet {
        let e = self.value().exp();
        self.compose(&vec![e; self.space.order + 1])
    }

    pub fn ln(&self) -> Result<Jet, JetDomainError> {
        let a = self.value();
        if a <= 0.0 {
            return Err(JetDomainError::LogNonPositive(a));
        }
        let order = self.space.order;
        let mut derivs = vec![a.ln()];
        // d^k/dx^k ln x = (-1)^(k-1) (k-1)! / x^k
        let mut d = 1.0 / a;
        for k in 1..=order {
            derivs.push(d);
            d *= -(k as f64) / a;
        }
        Ok(self.compose(&derivs))
    }

    pub fn sin(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        let cycle = [s, c, -s, -c];
        let derivs: Vec<f64> = (0..=self.space.order).map(|k| cycle[k % 4]).collect();
        self.compose(&derivs)
    }

    pub fn cos(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        let cycle = [c, -s, -c, s];
        let derivs: Vec<f64> = (0..=self.space.order).map(|k| cycle[k % 4]).collect();
        self.compose(&derivs)
    }
}

impl Add for &Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        let space = self.common_space(rhs);
        let coeffs = self.coeffs[..space.len()]
            .iter()
            .zip(&rhs.coeffs[..space.len()])
            .map(|(a, b)| a + b)
            .collect();
        Jet { space, coeffs }
    }
}

impl Sub for &Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        let space = self.common_space(rhs);
        let coeffs = self.coeffs[..space.len()]
            .iter()
            .zip(&rhs.coeffs[..space.len()])
            .map(|(a, b)| a - b)
            .collect();
        Jet { space, coeffs }
    }
}

impl Mul for &Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        let space = self.common_space(rhs);
        let mut coeffs = vec![0.0; space.len()];
        for &(i, j, k) in &space.mul_table {
            coeffs[k as usize] += self.coeffs[i as usize] * rhs.coeffs[j as usize];
        }
        Jet { space, coeffs }
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        &self + &rhs
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        &self - &rhs
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        &self * &rhs
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}
