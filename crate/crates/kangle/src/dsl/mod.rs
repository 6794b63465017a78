//! Text format for immersions and its evaluation over jets.
//!
//! Components are interleaved as `(x1, y1, x2, y2, ...)` so that the complex
//! structure acts blockwise by `(x, y) -> (-y, x)`.

mod parse;
mod print;

pub use parse::{parse_expr, parse_immersion, ParseError, ParseErrorKind};
pub use print::{print_expr, print_immersion};

use thiserror::Error;

use crate::ambient::AmbientSpec;
use crate::jets::{Jet, JetError, UnaryFn, MAX_ORDER};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Sinh,
    Cosh,
    Exp,
    Log,
    Sqrt,
    Atan,
}

impl Func {
    pub const ALL: [Func; 8] = [
        Func::Sin,
        Func::Cos,
        Func::Sinh,
        Func::Cosh,
        Func::Exp,
        Func::Log,
        Func::Sqrt,
        Func::Atan,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Atan => "atan",
        }
    }

    pub fn from_name(s: &str) -> Option<Func> {
        Func::ALL.iter().copied().find(|f| f.name() == s)
    }

    fn unary(self) -> UnaryFn {
        match self {
            Func::Sin => UnaryFn::Sin,
            Func::Cos => UnaryFn::Cos,
            Func::Sinh => UnaryFn::Sinh,
            Func::Cosh => UnaryFn::Cosh,
            Func::Exp => UnaryFn::Exp,
            Func::Log => UnaryFn::Log,
            Func::Sqrt => UnaryFn::Sqrt,
            Func::Atan => UnaryFn::Atan,
        }
    }

    pub fn eval_f64(self, x: f64) -> f64 {
        match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Sinh => x.sinh(),
            Func::Cosh => x.cosh(),
            Func::Exp => x.exp(),
            Func::Log => x.ln(),
            Func::Sqrt => x.sqrt(),
            Func::Atan => x.atan(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// Expression tree. Variables are zero-based (`u1` is `Var(0)`).
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Neg(Box<Expr>),
    Func(Func, Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
}

impl Expr {
    pub fn num(x: f64) -> Expr {
        Expr::Num(x)
    }

    pub fn var(i: usize) -> Expr {
        Expr::Var(i)
    }

    pub fn func(f: Func, e: Expr) -> Expr {
        Expr::Func(f, Box::new(e))
    }

    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Bin(op, Box::new(a), Box::new(b))
    }

    pub fn pow(e: Expr, k: u32) -> Expr {
        Expr::Pow(Box::new(e), k)
    }

    pub fn neg(e: Expr) -> Expr {
        Expr::Neg(Box::new(e))
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Num(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(a) | Expr::Func(_, a) | Expr::Pow(a, _) => a.max_var(),
            Expr::Bin(_, a, b) => match (a.max_var(), b.max_var()) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            },
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Var(_) => 1,
            Expr::Neg(a) | Expr::Func(_, a) | Expr::Pow(a, _) => 1 + a.depth(),
            Expr::Bin(_, a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    /// Plain floating-point evaluation.
    pub fn eval_f64(&self, u: &[f64]) -> f64 {
        match self {
            Expr::Num(x) => *x,
            Expr::Var(i) => u[*i],
            Expr::Neg(a) => -a.eval_f64(u),
            Expr::Func(f, a) => f.eval_f64(a.eval_f64(u)),
            Expr::Bin(op, a, b) => {
                let (x, y) = (a.eval_f64(u), b.eval_f64(u));
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => x / y,
                }
            }
            Expr::Pow(a, k) => a.eval_f64(u).powi(*k as i32),
        }
    }

    /// Evaluation over seeded coordinate jets.
    pub fn eval_jet(&self, vars: &[Jet]) -> Result<Jet, ExprJetError> {
        let dim = vars[0].dim();
        let order = vars[0].order();
        let wrap = |e: JetError, node: &Expr| ExprJetError {
            source: e,
            expr: print_expr(node),
        };
        match self {
            Expr::Num(x) => Ok(Jet::constant(dim, order, *x)),
            Expr::Var(i) => Ok(vars[*i].clone()),
            Expr::Neg(a) => Ok(-a.eval_jet(vars)?),
            Expr::Func(f, a) => a
                .eval_jet(vars)?
                .unary(f.unary())
                .map_err(|e| wrap(e, self)),
            Expr::Bin(op, a, b) => {
                let (x, y) = (a.eval_jet(vars)?, b.eval_jet(vars)?);
                match op {
                    BinOp::Add => Ok(&x + &y),
                    BinOp::Sub => Ok(&x - &y),
                    BinOp::Mul => Ok(&x * &y),
                    BinOp::Div => x.try_div(&y).map_err(|e| wrap(e, self)),
                }
            }
            Expr::Pow(a, k) => Ok(a.eval_jet(vars)?.powi(*k)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{source} in `{expr}`")]
pub struct ExprJetError {
    pub source: JetError,
    pub expr: String,
}

/// Parsed immersion `F: R^{2n} -> chart of N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImmersionSpec {
    pub name: String,
    pub n: usize,
    pub ambient: AmbientSpec,
    pub periodic: bool,
    pub components: Vec<Expr>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("component {component}: {error}")]
    Singularity {
        component: usize,
        error: ExprJetError,
    },
    #[error("usage error: {0}")]
    Usage(String),
}

impl ImmersionSpec {
    pub fn domain_dim(&self) -> usize {
        2 * self.n
    }

    pub fn ambient_dim(&self) -> usize {
        4 * self.n
    }

    /// Plain evaluation of `F` at a point.
    pub fn eval_point(&self, u: &[f64]) -> Vec<f64> {
        self.components.iter().map(|e| e.eval_f64(u)).collect()
    }

    /// Evaluates every component as a jet seeded at `point`.
    pub fn eval_components(&self, point: &[f64], order: usize) -> Result<Vec<Jet>, EvalError> {
        let d = self.domain_dim();
        if point.len() != d {
            return Err(EvalError::Usage(format!(
                "point has {} coordinates, expected {d}",
                point.len()
            )));
        }
        if order > MAX_ORDER {
            return Err(EvalError::Usage(format!(
                "order {order} exceeds {MAX_ORDER}"
            )));
        }
        if point.iter().any(|x| !x.is_finite()) {
            return Err(EvalError::Domain("point has non-finite coordinates".into()));
        }
        let vars: Vec<Jet> = (0..d)
            .map(|i| Jet::seed(d, order, point, i).expect("shape checked"))
            .collect();
        let mut out = Vec::with_capacity(self.components.len());
        for (k, e) in self.components.iter().enumerate() {
            let j = e.eval_jet(&vars).map_err(|error| EvalError::Singularity {
                component: k,
                error,
            })?;
            if !j.is_finite() {
                return Err(EvalError::Domain(format!(
                    "component {k} is not finite at the point"
                )));
            }
            out.push(j);
        }
        let z: Vec<f64> = out.iter().map(|j| j.value()).collect();
        self.ambient.check_chart(&z).map_err(EvalError::Domain)?;
        Ok(out)
    }
}
