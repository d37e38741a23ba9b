//! Expression language for coefficients, data, and exact solutions.
//!
//! Expressions are built over the variables `x, y, z` (space), `t` (time),
//! `T` and `C` (temperature and concentration state), with `+ - * / ^`,
//! integer powers, and `sin`, `cos`, `exp`. `pi` is a named constant.

mod forcing;
mod parse;

use std::fmt;
use std::sync::Arc;

pub use forcing::{mms_forcing, ExactSolution, MmsForcing};
pub use parse::{parse, ParseError};

/// Free variables an expression may reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    X,
    Y,
    Z,
    /// time
    T,
    /// temperature state
    Temp,
    /// concentration state
    Conc,
}

impl Var {
    pub const ALL: [Var; 6] = [Var::X, Var::Y, Var::Z, Var::T, Var::Temp, Var::Conc];

    /// Spatial coordinate for axis 0, 1, 2.
    pub fn space(axis: usize) -> Var {
        [Var::X, Var::Y, Var::Z][axis]
    }

    pub fn name(self) -> &'static str {
        match self {
            Var::X => "x",
            Var::Y => "y",
            Var::Z => "z",
            Var::T => "t",
            Var::Temp => "T",
            Var::Conc => "C",
        }
    }

    pub fn from_name(s: &str) -> Option<Var> {
        Var::ALL.into_iter().find(|v| v.name() == s)
    }

    fn slot(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
        }
    }

    pub fn from_name(s: &str) -> Option<Func> {
        match s {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            _ => None,
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Exp => v.exp(),
        }
    }
}

/// Expression tree. Constants are nonnegative; negation is explicit.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Pi,
    Var(Var),
    Neg(Arc<Expr>),
    Add(Arc<Expr>, Arc<Expr>),
    Sub(Arc<Expr>, Arc<Expr>),
    Mul(Arc<Expr>, Arc<Expr>),
    Div(Arc<Expr>, Arc<Expr>),
    Pow(Arc<Expr>, u32),
    Call(Func, Arc<Expr>),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("variable `{}` is not bound", .0.name())]
    Unbound(Var),
    #[error("division by zero")]
    DivisionByZero,
}

/// Variable bindings for evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Env {
    slots: [Option<f64>; 6],
}

impl Env {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, v: Var, value: f64) -> Self {
        self.slots[v.slot()] = Some(value);
        self
    }

    pub fn set(&mut self, v: Var, value: f64) {
        self.slots[v.slot()] = Some(value);
    }

    pub fn get(&self, v: Var) -> Option<f64> {
        self.slots[v.slot()]
    }

    /// Binds x, y, (z) from a point and t.
    pub fn at(point: &[f64], t: f64) -> Self {
        let mut env = Env::new().with(Var::T, t);
        for (axis, &c) in point.iter().enumerate() {
            env.set(Var::space(axis), c);
        }
        env
    }
}

impl Expr {
    pub fn num(c: f64) -> Expr {
        if c < 0.0 {
            Expr::Neg(Arc::new(Expr::Const(-c)))
        } else {
            Expr::Const(c)
        }
    }

    pub fn var(v: Var) -> Expr {
        Expr::Var(v)
    }

    pub fn zero() -> Expr {
        Expr::Const(0.0)
    }

    pub fn one() -> Expr {
        Expr::Const(1.0)
    }

    /// Numeric value if the expression is a (possibly negated) constant.
    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            Expr::Neg(e) => e.as_const().map(|c| -c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    pub fn eval(&self, env: &Env) -> Result<f64, EvalError> {
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Pi => std::f64::consts::PI,
            Expr::Var(v) => env.get(*v).ok_or(EvalError::Unbound(*v))?,
            Expr::Neg(e) => -e.eval(env)?,
            Expr::Add(a, b) => a.eval(env)? + b.eval(env)?,
            Expr::Sub(a, b) => a.eval(env)? - b.eval(env)?,
            Expr::Mul(a, b) => a.eval(env)? * b.eval(env)?,
            Expr::Div(a, b) => {
                let den = b.eval(env)?;
                if den == 0.0 {
                    return Err(EvalError::DivisionByZero);
                }
                a.eval(env)? / den
            }
            Expr::Pow(a, k) => a.eval(env)?.powi(*k as i32),
            Expr::Call(f, a) => f.apply(a.eval(env)?),
        })
    }

    /// Whether `v` occurs in the expression.
    pub fn depends_on(&self, v: Var) -> bool {
        match self {
            Expr::Const(_) | Expr::Pi => false,
            Expr::Var(w) => *w == v,
            Expr::Neg(e) | Expr::Pow(e, _) | Expr::Call(_, e) => e.depends_on(v),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.depends_on(v) || b.depends_on(v)
            }
        }
    }

    pub fn free_vars(&self) -> Vec<Var> {
        Var::ALL.into_iter().filter(|&v| self.depends_on(v)).collect()
    }

    /// Replaces every occurrence of `v` by `with`.
    pub fn substitute(&self, v: Var, with: &Expr) -> Expr {
        match self {
            Expr::Const(_) | Expr::Pi => self.clone(),
            Expr::Var(w) if *w == v => with.clone(),
            Expr::Var(_) => self.clone(),
            Expr::Neg(e) => neg(e.substitute(v, with)),
            Expr::Add(a, b) => add(a.substitute(v, with), b.substitute(v, with)),
            Expr::Sub(a, b) => sub(a.substitute(v, with), b.substitute(v, with)),
            Expr::Mul(a, b) => mul(a.substitute(v, with), b.substitute(v, with)),
            Expr::Div(a, b) => div(a.substitute(v, with), b.substitute(v, with)),
            Expr::Pow(a, k) => pow(a.substitute(v, with), *k),
            Expr::Call(f, a) => call(*f, a.substitute(v, with)),
        }
    }

    /// Symbolic partial derivative with respect to `v`.
    pub fn diff(&self, v: Var) -> Expr {
        match self {
            Expr::Const(_) | Expr::Pi => Expr::zero(),
            Expr::Var(w) => {
                if *w == v {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Expr::Neg(e) => neg(e.diff(v)),
            Expr::Add(a, b) => add(a.diff(v), b.diff(v)),
            Expr::Sub(a, b) => sub(a.diff(v), b.diff(v)),
            Expr::Mul(a, b) => add(
                mul(a.diff(v), (**b).clone()),
                mul((**a).clone(), b.diff(v)),
            ),
            Expr::Div(a, b) => {
                // (a'b - ab') / b²
                let num = sub(mul(a.diff(v), (**b).clone()), mul((**a).clone(), b.diff(v)));
                div(num, pow((**b).clone(), 2))
            }
            Expr::Pow(a, k) => match *k {
                0 => Expr::zero(),
                1 => a.diff(v),
                k => mul(
                    mul(Expr::num(k as f64), pow((**a).clone(), k - 1)),
                    a.diff(v),
                ),
            },
            Expr::Call(f, a) => {
                let inner = a.diff(v);
                let outer = match f {
                    Func::Sin => call(Func::Cos, (**a).clone()),
                    Func::Cos => neg(call(Func::Sin, (**a).clone())),
                    Func::Exp => call(Func::Exp, (**a).clone()),
                };
                mul(outer, inner)
            }
        }
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Pi | Expr::Var(_) => 1,
            Expr::Neg(e) | Expr::Pow(e, _) | Expr::Call(_, e) => 1 + e.size(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                1 + a.size() + b.size()
            }
        }
    }
}

impl std::str::FromStr for Expr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

// Smart constructors with light simplification: constant folding and the
// identities 0·e = 0, 1·e = e, e + 0 = e, e - 0 = e, e / 1 = e, e^1 = e.

pub fn neg(e: Expr) -> Expr {
    match e {
        Expr::Neg(inner) => (*inner).clone(),
        e => match e.as_const() {
            Some(c) => Expr::num(-c),
            None => Expr::Neg(Arc::new(e)),
        },
    }
}

pub fn add(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => Expr::num(x + y),
        (Some(x), _) if x == 0.0 => b,
        (_, Some(y)) if y == 0.0 => a,
        _ => match b {
            Expr::Neg(inner) => Expr::Sub(Arc::new(a), inner),
            b => Expr::Add(Arc::new(a), Arc::new(b)),
        },
    }
}

pub fn sub(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => Expr::num(x - y),
        (Some(x), _) if x == 0.0 => neg(b),
        (_, Some(y)) if y == 0.0 => a,
        _ => match b {
            Expr::Neg(inner) => Expr::Add(Arc::new(a), inner),
            b => Expr::Sub(Arc::new(a), Arc::new(b)),
        },
    }
}

pub fn mul(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => Expr::num(x * y),
        (Some(x), _) | (_, Some(x)) if x == 0.0 => Expr::zero(),
        (Some(x), _) if x == 1.0 => b,
        (_, Some(y)) if y == 1.0 => a,
        (Some(x), _) if x == -1.0 => neg(b),
        (_, Some(y)) if y == -1.0 => neg(a),
        _ => match (a, b) {
            // pull signs out so they can cancel in add/sub
            (Expr::Neg(x), Expr::Neg(y)) => Expr::Mul(x, y),
            (Expr::Neg(x), y) => neg(Expr::Mul(x, Arc::new(y))),
            (x, Expr::Neg(y)) => neg(Expr::Mul(Arc::new(x), y)),
            (x, y) => Expr::Mul(Arc::new(x), Arc::new(y)),
        },
    }
}

pub fn div(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) if y != 0.0 => Expr::num(x / y),
        (Some(x), _) if x == 0.0 => Expr::zero(),
        (_, Some(y)) if y == 1.0 => a,
        _ => Expr::Div(Arc::new(a), Arc::new(b)),
    }
}

pub fn pow(a: Expr, k: u32) -> Expr {
    match (k, a.as_const()) {
        (0, _) => Expr::one(),
        (1, _) => a,
        (k, Some(c)) => Expr::num(c.powi(k as i32)),
        (k, None) => Expr::Pow(Arc::new(a), k),
    }
}

pub fn call(f: Func, a: Expr) -> Expr {
    Expr::Call(f, Arc::new(a))
}

// Printing. Precedence levels mirror the parser: 1 = sum, 2 = product,
// 3 = unary minus, 4 = power base / atom.

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Add(..) | Expr::Sub(..) => 1,
        Expr::Mul(..) | Expr::Div(..) => 2,
        Expr::Neg(..) => 3,
        Expr::Pow(..) => 4,
        _ => 5,
    }
}

fn write_wrapped(f: &mut fmt::Formatter<'_>, e: &Expr, min: u8) -> fmt::Result {
    if prec(e) < min {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Pi => write!(f, "pi"),
            Expr::Var(v) => write!(f, "{}", v.name()),
            Expr::Neg(e) => {
                write!(f, "-")?;
                write_wrapped(f, e, 3)
            }
            Expr::Add(a, b) => {
                write_wrapped(f, a, 1)?;
                write!(f, " + ")?;
                write_wrapped(f, b, 2)
            }
            Expr::Sub(a, b) => {
                write_wrapped(f, a, 1)?;
                write!(f, " - ")?;
                write_wrapped(f, b, 2)
            }
            Expr::Mul(a, b) => {
                write_wrapped(f, a, 2)?;
                write!(f, "*")?;
                write_wrapped(f, b, 3)
            }
            Expr::Div(a, b) => {
                write_wrapped(f, a, 2)?;
                write!(f, "/")?;
                write_wrapped(f, b, 3)
            }
            Expr::Pow(a, k) => {
                write_wrapped(f, a, 5)?;
                write!(f, "^{k}")
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}
