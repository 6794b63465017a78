//! Truncated multivariate Taylor arithmetic.
//!
//! A [`Jet`] stores the Taylor coefficients `c_alpha = d^alpha f / alpha!` of a
//! scalar function at a point, for all multi-indices of total degree up to the
//! truncation order. Coefficients are kept densely in graded-lexicographic
//! order, so the coefficients of a lower-order truncation are always a prefix
//! of the full vector.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::OnceLock;

use thiserror::Error;

/// Largest supported number of variables.
pub const MAX_DIM: usize = 8;
/// Largest supported truncation order.
pub const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JetError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("singularity in {func}: constant term {value} is outside the domain")]
    Singularity { func: &'static str, value: f64 },
}

/// Index tables shared by every jet of a given (dim, order).
pub struct Layout {
    pub dim: usize,
    pub order: usize,
    exps: Vec<[u8; MAX_DIM]>,
    degree: Vec<u8>,
    /// First index of each degree, plus the total length at the end.
    deg_start: Vec<usize>,
    /// (i, j, k) with exps[i] + exps[j] = exps[k], sorted by k.
    mul: Vec<(u16, u16, u16)>,
    /// For each variable: (source index, factor) per target coefficient of
    /// the order-1 truncation.
    diff: Vec<Vec<(u16, f64)>>,
}

impl Layout {
    fn build(dim: usize, order: usize) -> Layout {
        let mut exps = Vec::new();
        let mut degree = Vec::new();
        let mut deg_start = Vec::new();
        for deg in 0..=order {
            deg_start.push(exps.len());
            let mut cur = [0u8; MAX_DIM];
            enumerate_degree(dim, deg, 0, &mut cur, &mut exps);
            degree.resize(exps.len(), deg as u8);
        }
        deg_start.push(exps.len());
        let index_of = |e: &[u8; MAX_DIM]| exps.iter().position(|x| x == e);
        let mut mul = Vec::new();
        for i in 0..exps.len() {
            for j in 0..exps.len() {
                if degree[i] as usize + degree[j] as usize > order {
                    continue;
                }
                let mut s = [0u8; MAX_DIM];
                for v in 0..MAX_DIM {
                    s[v] = exps[i][v] + exps[j][v];
                }
                let k = index_of(&s).expect("closed under addition");
                mul.push((i as u16, j as u16, k as u16));
            }
        }
        mul.sort_by_key(|t| t.2);
        let mut diff = Vec::with_capacity(dim);
        let lower = if order == 0 { 0 } else { deg_start[order] };
        for v in 0..dim {
            let mut tab = Vec::with_capacity(lower);
            for e in exps.iter().take(lower) {
                let mut s = *e;
                s[v] += 1;
                let src = index_of(&s).expect("raised index exists");
                tab.push((src as u16, (e[v] + 1) as f64));
            }
            diff.push(tab);
        }
        Layout {
            dim,
            order,
            exps,
            degree,
            deg_start,
            mul,
            diff,
        }
    }

    /// Number of coefficients, C(dim + order, order).
    pub fn len(&self) -> usize {
        self.exps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exps.is_empty()
    }

    /// Multi-index of coefficient `k`.
    pub fn multi_index(&self, k: usize) -> &[u8] {
        &self.exps[k][..self.dim]
    }

    pub fn degree(&self, k: usize) -> usize {
        self.degree[k] as usize
    }

    /// Position of a multi-index, if its degree is within the order.
    pub fn index(&self, alpha: &[usize]) -> Option<usize> {
        if alpha.len() != self.dim {
            return None;
        }
        let deg: usize = alpha.iter().sum();
        if deg > self.order {
            return None;
        }
        let range = self.deg_start[deg]..self.deg_start[deg + 1];
        range.into_iter().find(|&k| {
            self.exps[k][..self.dim]
                .iter()
                .zip(alpha)
                .all(|(a, b)| *a as usize == *b)
        })
    }

    /// Number of coefficients of total degree at most `order`.
    pub fn prefix_len(&self, order: usize) -> usize {
        self.deg_start[order.min(self.order) + 1]
    }
}

/// Multi-indices of one degree, lexicographically descending in the first
/// variable, so (1,0) comes before (0,1).
fn enumerate_degree(
    dim: usize,
    rem: usize,
    v: usize,
    cur: &mut [u8; MAX_DIM],
    out: &mut Vec<[u8; MAX_DIM]>,
) {
    if v + 1 == dim {
        cur[v] = rem as u8;
        out.push(*cur);
        cur[v] = 0;
        return;
    }
    for a in (0..=rem).rev() {
        cur[v] = a as u8;
        enumerate_degree(dim, rem - a, v + 1, cur, out);
    }
    cur[v] = 0;
}

static LAYOUTS: OnceLock<Vec<Layout>> = OnceLock::new();

/// Shared layout for (dim, order). Panics outside the supported range.
pub fn layout(dim: usize, order: usize) -> &'static Layout {
    assert!(
        (1..=MAX_DIM).contains(&dim) && order <= MAX_ORDER,
        "unsupported jet shape {dim}x{order}"
    );
    let all = LAYOUTS.get_or_init(|| {
        let mut v = Vec::new();
        for d in 1..=MAX_DIM {
            for o in 0..=MAX_ORDER {
                v.push(Layout::build(d, o));
            }
        }
        v
    });
    &all[(dim - 1) * (MAX_ORDER + 1) + order]
}

fn check_shape(dim: usize, order: usize) -> Result<(), JetError> {
    if !(1..=MAX_DIM).contains(&dim) {
        return Err(JetError::Usage(format!(
            "dimension {dim} outside 1..={MAX_DIM}"
        )));
    }
    if order > MAX_ORDER {
        return Err(JetError::Usage(format!(
            "order {order} exceeds {MAX_ORDER}"
        )));
    }
    Ok(())
}

/// Truncated Taylor expansion of a scalar function at a point.
#[derive(Clone)]
pub struct Jet {
    layout: &'static Layout,
    coeffs: Vec<f64>,
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Jet")
            .field("dim", &self.dim())
            .field("order", &self.order())
            .field("coeffs", &self.coeffs)
            .finish()
    }
}

impl PartialEq for Jet {
    fn eq(&self, other: &Jet) -> bool {
        self.dim() == other.dim() && self.order() == other.order() && self.coeffs == other.coeffs
    }
}

/// Univariate Taylor coefficients of `f` at `x`, up to `order`.
type Series = [f64; MAX_ORDER + 1];

impl Jet {
    pub fn constant(dim: usize, order: usize, value: f64) -> Jet {
        let layout = layout(dim, order);
        let mut coeffs = vec![0.0; layout.len()];
        coeffs[0] = value;
        Jet { layout, coeffs }
    }

    pub fn zero(dim: usize, order: usize) -> Jet {
        Jet::constant(dim, order, 0.0)
    }

    /// Coordinate function `u^var` expanded at `point`.
    pub fn seed(dim: usize, order: usize, point: &[f64], var: usize) -> Result<Jet, JetError> {
        check_shape(dim, order)?;
        if var >= dim {
            return Err(JetError::Domain(format!(
                "variable index {var} out of range for dimension {dim}"
            )));
        }
        if point.len() != dim {
            return Err(JetError::Domain(format!(
                "point has {} coordinates, expected {dim}",
                point.len()
            )));
        }
        let mut j = Jet::constant(dim, order, point[var]);
        if order >= 1 {
            j.coeffs[1 + var] = 1.0;
        }
        Ok(j)
    }

    /// Builds a jet from raw Taylor coefficients in graded-lex order.
    pub fn from_coeffs(dim: usize, order: usize, coeffs: Vec<f64>) -> Result<Jet, JetError> {
        check_shape(dim, order)?;
        let layout = layout(dim, order);
        if coeffs.len() != layout.len() {
            return Err(JetError::Usage(format!(
                "expected {} coefficients, got {}",
                layout.len(),
                coeffs.len()
            )));
        }
        Ok(Jet { layout, coeffs })
    }

    pub fn dim(&self) -> usize {
        self.layout.dim
    }

    pub fn order(&self) -> usize {
        self.layout.order
    }

    pub fn layout(&self) -> &'static Layout {
        self.layout
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Constant term.
    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    /// First partial derivative along `var` at the point.
    pub fn d1(&self, var: usize) -> f64 {
        self.coeffs[1 + var]
    }

    /// Second partial derivative along `(a, b)` at the point.
    pub fn d2(&self, a: usize, b: usize) -> f64 {
        let mut alpha = [0usize; MAX_DIM];
        alpha[a] += 1;
        alpha[b] += 1;
        self.extract(&alpha[..self.dim()]).expect("order >= 2")
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    /// Raw partial derivative `d^alpha f` at the point, i.e. `alpha! c_alpha`.
    pub fn extract(&self, alpha: &[usize]) -> Result<f64, JetError> {
        if alpha.len() != self.dim() {
            return Err(JetError::Usage(format!(
                "multi-index has {} entries, expected {}",
                alpha.len(),
                self.dim()
            )));
        }
        let deg: usize = alpha.iter().sum();
        if deg > self.order() {
            return Err(JetError::Usage(format!(
                "multi-index degree {deg} exceeds order {}",
                self.order()
            )));
        }
        let k = self.layout.index(alpha).expect("degree checked");
        let fact: f64 = alpha
            .iter()
            .map(|&a| (1..=a).product::<usize>() as f64)
            .product();
        Ok(self.coeffs[k] * fact)
    }

    /// Same jet truncated to a lower order.
    pub fn truncate(&self, order: usize) -> Jet {
        assert!(order <= self.order(), "cannot raise jet order");
        let layout = layout(self.dim(), order);
        Jet {
            layout,
            coeffs: self.coeffs[..layout.len()].to_vec(),
        }
    }

    /// Partial derivative along `var`; the result has order one less.
    pub fn diff(&self, var: usize) -> Jet {
        assert!(var < self.dim(), "variable out of range");
        assert!(self.order() >= 1, "cannot differentiate an order-0 jet");
        let layout = layout(self.dim(), self.order() - 1);
        let coeffs = self.layout.diff[var]
            .iter()
            .map(|&(s, f)| f * self.coeffs[s as usize])
            .collect();
        Jet { layout, coeffs }
    }

    fn same_shape(&self, other: &Jet) -> Result<(), JetError> {
        if self.dim() != other.dim() {
            return Err(JetError::Usage(format!(
                "dimension mismatch: {} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        if self.order() != other.order() {
            return Err(JetError::Usage(format!(
                "order mismatch: {} vs {}",
                self.order(),
                other.order()
            )));
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Jet) -> Result<Jet, JetError> {
        self.same_shape(other)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Jet {
            layout: self.layout,
            coeffs,
        })
    }

    pub fn try_sub(&self, other: &Jet) -> Result<Jet, JetError> {
        self.same_shape(other)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Jet {
            layout: self.layout,
            coeffs,
        })
    }

    pub fn try_mul(&self, other: &Jet) -> Result<Jet, JetError> {
        self.same_shape(other)?;
        let mut coeffs = vec![0.0; self.coeffs.len()];
        for &(i, j, k) in &self.layout.mul {
            coeffs[k as usize] += self.coeffs[i as usize] * other.coeffs[j as usize];
        }
        Ok(Jet {
            layout: self.layout,
            coeffs,
        })
    }

    pub fn try_div(&self, other: &Jet) -> Result<Jet, JetError> {
        self.same_shape(other)?;
        self.try_mul(&other.try_recip()?)
    }

    pub fn try_recip(&self) -> Result<Jet, JetError> {
        let x = self.value();
        if x == 0.0 || !x.is_finite() {
            return Err(JetError::Singularity {
                func: "division",
                value: x,
            });
        }
        let mut t = [0.0; MAX_ORDER + 1];
        let mut p = 1.0 / x;
        for (k, tk) in t.iter_mut().enumerate() {
            *tk = if k % 2 == 0 { p } else { -p };
            p /= x;
        }
        Ok(self.compose(&t))
    }

    /// `f(self)` from the univariate Taylor coefficients of `f` at the
    /// constant term, by Horner's rule in `self - self(0)`.
    fn compose(&self, t: &Series) -> Jet {
        let k = self.order();
        let mut hat = self.clone();
        hat.coeffs[0] = 0.0;
        let mut r = Jet::constant(self.dim(), k, t[k]);
        for i in (0..k).rev() {
            r = &r * &hat;
            r.coeffs[0] += t[i];
        }
        r
    }

    pub fn scale(&self, s: f64) -> Jet {
        Jet {
            layout: self.layout,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    pub fn add_scalar(&self, s: f64) -> Jet {
        let mut r = self.clone();
        r.coeffs[0] += s;
        r
    }

    /// In-place `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &Jet) {
        assert!(
            self.dim() == other.dim() && self.order() == other.order(),
            "jet shape mismatch"
        );
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += s * b;
        }
    }

    /// In-place `self += a * b`.
    pub fn add_mul(&mut self, a: &Jet, b: &Jet) {
        assert!(
            self.dim() == a.dim()
                && a.dim() == b.dim()
                && self.order() == a.order()
                && a.order() == b.order(),
            "jet shape mismatch"
        );
        for &(i, j, k) in &self.layout.mul {
            self.coeffs[k as usize] += a.coeffs[i as usize] * b.coeffs[j as usize];
        }
    }

    pub fn unary(&self, f: UnaryFn) -> Result<Jet, JetError> {
        match f {
            UnaryFn::Sin => Ok(self.sin()),
            UnaryFn::Cos => Ok(self.cos()),
            UnaryFn::Sinh => Ok(self.sinh()),
            UnaryFn::Cosh => Ok(self.cosh()),
            UnaryFn::Exp => Ok(self.exp()),
            UnaryFn::Log => self.try_log(),
            UnaryFn::Sqrt => self.try_sqrt(),
            UnaryFn::Atan => Ok(self.atan()),
            UnaryFn::PowInt(n) => Ok(self.powi(n)),
        }
    }

    pub fn sin(&self) -> Jet {
        let x = self.value();
        let mut t = [0.0; MAX_ORDER + 1];
        let mut fact = 1.0;
        for (k, tk) in t.iter_mut().enumerate() {
            if k > 0 {
                fact *= k as f64;
            }
            let d = match k % 4 {
                0 => x.sin(),
                1 => x.cos(),
                2 => -x.sin(),
                _ => -x.cos(),
            };
            *tk = d / fact;
        }
        self.compose(&t)
    }

    pub fn cos(&self) -> Jet {
        let x = self.value();
        let mut t = [0.0; MAX_ORDER + 1];
        let mut fact = 1.0;
        for (k, tk) in t.iter_mut().enumerate() {
            if k > 0 {
                fact *= k as f64;
            }
            let d = match k % 4 {
                0 => x.cos(),
                1 => -x.sin(),
                2 => -x.cos(),
                _ => x.sin(),
            };
            *tk = d / fact;
        }
        self.compose(&t)
    }

    pub fn sinh(&self) -> Jet {
        let x = self.value();
        let mut t = [0.0; MAX_ORDER + 1];
        let mut fact = 1.0;
        for (k, tk) in t.iter_mut().enumerate() {
            if k > 0 {
                fact *= k as f64;
            }
            *tk = if k % 2 == 0 { x.sinh() } else { x.cosh() } / fact;
        }
        self.compose(&t)
    }

    pub fn cosh(&self) -> Jet {
        let x = self.value();
        let mut t = [0.0; MAX_ORDER + 1];
        let mut fact = 1.0;
        for (k, tk) in t.iter_mut().enumerate() {
            if k > 0 {
                fact *= k as f64;
            }
            *tk = if k % 2 == 0 { x.cosh() } else { x.sinh() } / fact;
        }
        self.compose(&t)
    }

    pub fn exp(&self) -> Jet {
        let e = self.value().exp();
        let mut t = [0.0; MAX_ORDER + 1];
        let mut fact = 1.0;
        for (k, tk) in t.iter_mut().enumerate() {
            if k > 0 {
                fact *= k as f64;
            }
            *tk = e / fact;
        }
        self.compose(&t)
    }

    pub fn try_log(&self) -> Result<Jet, JetError> {
        let x = self.value();
        if !(x > 0.0) || !x.is_finite() {
            return Err(JetError::Singularity {
                func: "log",
                value: x,
            });
        }
        let mut t = [0.0; MAX_ORDER + 1];
        t[0] = x.ln();
        for k in 1..=MAX_ORDER {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            t[k] = sign / (k as f64 * x.powi(k as i32));
        }
        Ok(self.compose(&t))
    }

    pub fn try_sqrt(&self) -> Result<Jet, JetError> {
        let x = self.value();
        if !(x > 0.0) || !x.is_finite() {
            return Err(JetError::Singularity {
                func: "sqrt",
                value: x,
            });
        }
        let mut t = [0.0; MAX_ORDER + 1];
        // generalized binomial coefficients of (x + h)^(1/2)
        let mut binom = 1.0;
        for (k, tk) in t.iter_mut().enumerate() {
            if k > 0 {
                binom *= (0.5 - (k as f64 - 1.0)) / k as f64;
            }
            *tk = binom * x.powf(0.5 - k as f64);
        }
        Ok(self.compose(&t))
    }

    pub fn atan(&self) -> Jet {
        let x = self.value();
        // series of 1/(q0 + q1 h + h^2), then integrate termwise
        let q = [1.0 + x * x, 2.0 * x, 1.0];
        let mut r = [0.0; MAX_ORDER + 1];
        for k in 0..MAX_ORDER {
            let mut s = if k == 0 { 1.0 } else { 0.0 };
            for j in 1..=k.min(2) {
                s -= q[j] * r[k - j];
            }
            r[k] = s / q[0];
        }
        let mut t = [0.0; MAX_ORDER + 1];
        t[0] = x.atan();
        for k in 1..=MAX_ORDER {
            t[k] = r[k - 1] / k as f64;
        }
        self.compose(&t)
    }

    /// Non-negative integer power by repeated squaring.
    pub fn powi(&self, n: u32) -> Jet {
        let mut result = Jet::constant(self.dim(), self.order(), 1.0);
        let mut base = self.clone();
        let mut e = n;
        while e > 0 {
            if e & 1 == 1 {
                result = &result * &base;
            }
            e >>= 1;
            if e > 0 {
                base = &base * &base;
            }
        }
        result
    }
}

/// Elementary functions supported by [`Jet::unary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryFn {
    Sin,
    Cos,
    Sinh,
    Cosh,
    Exp,
    Log,
    Sqrt,
    Atan,
    PowInt(u32),
}

macro_rules! jet_binop {
    ($trait:ident, $method:ident, $checked:ident) => {
        impl $trait<&Jet> for &Jet {
            type Output = Jet;
            fn $method(self, rhs: &Jet) -> Jet {
                self.$checked(rhs).unwrap_or_else(|e| panic!("{e}"))
            }
        }
        impl $trait<Jet> for Jet {
            type Output = Jet;
            fn $method(self, rhs: Jet) -> Jet {
                (&self).$checked(&rhs).unwrap_or_else(|e| panic!("{e}"))
            }
        }
        impl $trait<&Jet> for Jet {
            type Output = Jet;
            fn $method(self, rhs: &Jet) -> Jet {
                (&self).$checked(rhs).unwrap_or_else(|e| panic!("{e}"))
            }
        }
        impl $trait<Jet> for &Jet {
            type Output = Jet;
            fn $method(self, rhs: Jet) -> Jet {
                self.$checked(&rhs).unwrap_or_else(|e| panic!("{e}"))
            }
        }
    };
}

jet_binop!(Add, add, try_add);
jet_binop!(Sub, sub, try_sub);
jet_binop!(Mul, mul, try_mul);
jet_binop!(Div, div, try_div);

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul<f64> for &Jet {
    type Output = Jet;
    fn mul(self, rhs: f64) -> Jet {
        self.scale(rhs)
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, rhs: f64) -> Jet {
        self.scale(rhs)
    }
}

impl Add<f64> for &Jet {
    type Output = Jet;
    fn add(self, rhs: f64) -> Jet {
        self.add_scalar(rhs)
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(self, rhs: f64) -> Jet {
        self.add_scalar(rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_sizes_are_binomial() {
        for d in 1..=MAX_DIM {
            for o in 0..=MAX_ORDER {
                let l = layout(d, o);
                let mut c = 1usize;
                for k in 0..o {
                    c = c * (d + o - k) / (k + 1);
                }
                assert_eq!(l.len(), c, "dim {d} order {o}");
            }
        }
        assert_eq!(layout(8, 4).len(), 495);
    }

    #[test]
    fn graded_order_is_a_prefix() {
        let hi = layout(3, 4);
        let lo = layout(3, 2);
        for k in 0..lo.len() {
            assert_eq!(hi.multi_index(k), lo.multi_index(k));
        }
        assert_eq!(hi.multi_index(1), &[1, 0, 0]);
        assert_eq!(hi.multi_index(3), &[0, 0, 1]);
    }

    #[test]
    fn seed_examples() {
        let j = Jet::seed(2, 2, &[3.0, 5.0], 0).unwrap();
        assert_eq!(j.coeffs(), &[3.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let j = Jet::seed(1, 3, &[0.0], 0).unwrap();
        assert_eq!(j.coeffs(), &[0.0, 1.0, 0.0, 0.0]);
        let j = Jet::seed(4, 3, &[0.1, 0.2, 0.3, 0.4], 3).unwrap();
        assert_eq!(j.value(), 0.4);
        assert_eq!(j.d1(3), 1.0);
        assert!(matches!(
            Jet::seed(2, 2, &[0.0, 0.0], 2),
            Err(JetError::Domain(_))
        ));
    }

    #[test]
    fn square_of_shifted_variable() {
        let x = Jet::seed(1, 2, &[2.0], 0).unwrap();
        let y = &x * &x;
        assert_eq!(y.coeffs(), &[4.0, 4.0, 1.0]);
        assert_eq!(y.extract(&[2]).unwrap(), 2.0);
        let one = &x / &x;
        assert!((one.value() - 1.0).abs() < 1e-15);
        assert!(one.coeffs()[1..].iter().all(|c| c.abs() < 1e-15));
    }

    #[test]
    fn elementary_maclaurin() {
        let x = Jet::seed(1, 3, &[0.0], 0).unwrap();
        let s = x.sinh();
        let want = [0.0, 1.0, 0.0, 1.0 / 6.0];
        for (a, b) in s.coeffs().iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        let e = Jet::zero(1, 3).exp();
        assert_eq!(e.coeffs(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn extract_mixed_partial() {
        let a = Jet::seed(2, 2, &[0.3, -0.2], 0).unwrap();
        let b = Jet::seed(2, 2, &[0.3, -0.2], 1).unwrap();
        assert_eq!((&a * &b).extract(&[1, 1]).unwrap(), 1.0);
        assert!(matches!(a.extract(&[2, 1]), Err(JetError::Usage(_))));
    }

    #[test]
    fn mismatch_and_singularities_are_errors() {
        let a = Jet::zero(2, 2);
        let b = Jet::zero(2, 3);
        let c = Jet::zero(3, 2);
        assert!(matches!(a.try_add(&b), Err(JetError::Usage(_))));
        assert!(matches!(a.try_mul(&c), Err(JetError::Usage(_))));
        assert!(matches!(a.try_div(&a), Err(JetError::Singularity { .. })));
        assert!(matches!(
            a.try_log(),
            Err(JetError::Singularity { func: "log", .. })
        ));
        assert!(
            matches!(a.add_scalar(-1.0).try_sqrt(), Err(JetError::Singularity { value, .. }) if value == -1.0)
        );
    }

    #[test]
    fn diff_lowers_order() {
        let x = Jet::seed(2, 3, &[0.5, 0.1], 0).unwrap();
        let y = Jet::seed(2, 3, &[0.5, 0.1], 1).unwrap();
        let f = &(&x * &x) * &y;
        let fx = f.diff(0);
        assert_eq!(fx.order(), 2);
        assert!((fx.value() - 2.0 * 0.5 * 0.1).abs() < 1e-15);
        assert!((fx.d1(1) - 1.0).abs() < 1e-15);
        assert!((f.d2(0, 1) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn powi_matches_repeated_product() {
        let x = Jet::seed(2, 4, &[0.7, -1.3], 1).unwrap().sin();
        let p5 = x.powi(5);
        let q = &(&(&(&x * &x) * &x) * &x) * &x;
        for (a, b) in p5.coeffs().iter().zip(q.coeffs()) {
            assert!((a - b).abs() < 1e-14);
        }
        assert_eq!(x.powi(0).coeffs()[0], 1.0);
    }
}
