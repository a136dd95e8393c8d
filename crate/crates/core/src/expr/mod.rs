//! Scalar expressions in chart coordinates.
//!
//! Every field, form and density component in the crate is an [`Expression`]:
//! a parsed formula over the chart variables `x0 .. x(n-1)`. Expressions are
//! immutable, cheap to clone (shared `Arc` nodes) and safe to evaluate from
//! many threads at once.
//!
//! Values come from [`Expression::eval`]; value plus exact gradient from
//! [`Expression::eval_grad`], which runs forward-mode dual numbers over the
//! tree. Derived fields (exterior derivatives, brackets, divergences) are
//! built with the folding arithmetic operators and [`Expression::partial`],
//! so they are expressions again and can be differentiated in turn.
//!
//! The textual grammar is documented in `docs/expression-grammar.md`.

mod dual;
mod parse;

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

use thiserror::Error;

pub use dual::{Dual, MAX_DIM};
pub use parse::ParseError;

/// Built-in unary functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Tanh,
    /// `max(u, 0)`.
    Pos,
    /// `1` for `u > 0`, else `0`.
    Heaviside,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Tanh => "tanh",
            Func::Pos => "pos",
            Func::Heaviside => "heaviside",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "tanh" => Func::Tanh,
            "pos" => Func::Pos,
            "heaviside" => Func::Heaviside,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Node {
    Const(f64),
    Var(usize),
    Neg(Arc<Node>),
    Add(Arc<Node>, Arc<Node>),
    Sub(Arc<Node>, Arc<Node>),
    Mul(Arc<Node>, Arc<Node>),
    Div(Arc<Node>, Arc<Node>),
    Pow(Arc<Node>, i32),
    Call(Func, Arc<Node>),
    Atan2(Arc<Node>, Arc<Node>),
}

/// Evaluation outside the function's domain.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("{op} of {value} is outside its domain")]
    Domain { op: &'static str, value: f64 },
    #[error("division by zero")]
    DivisionByZero,
    #[error("non-finite result ({value}) from {op}")]
    NonFinite { op: &'static str, value: f64 },
    #[error("point has {got} coordinates, expression needs {needed}")]
    Arity { needed: usize, got: usize },
}

/// A parsed (or derived) scalar formula over `x0 .. x(dim-1)`.
#[derive(Clone, PartialEq)]
pub struct Expression {
    root: Arc<Node>,
    dim: usize,
}

impl fmt::Debug for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expression[{}]({})", self.dim, self)
    }
}

impl Expression {
    /// Parse `source` as a function of `dimension` chart variables.
    pub fn parse(source: &str, dimension: usize) -> Result<Expression, ParseError> {
        let root = parse::parse(source, dimension)?;
        Ok(Expression {
            root: Arc::new(root),
            dim: dimension,
        })
    }

    /// A constant. Constants carry arity 0 and combine with any dimension.
    pub fn constant(value: f64) -> Expression {
        Expression {
            root: Arc::new(Node::Const(value)),
            dim: 0,
        }
    }

    pub fn zero() -> Expression {
        Expression::constant(0.0)
    }

    pub fn one() -> Expression {
        Expression::constant(1.0)
    }

    /// The coordinate function `x{index}` in a chart of dimension `dim`.
    pub fn var(index: usize, dim: usize) -> Expression {
        assert!(index < dim, "variable x{index} outside dimension {dim}");
        Expression {
            root: Arc::new(Node::Var(index)),
            dim,
        }
    }

    /// Number of chart variables this expression is declared over.
    pub fn dimension(&self) -> usize {
        self.dim
    }

    /// Canonical textual form; parses back to the same tree.
    pub fn source(&self) -> String {
        self.to_string()
    }

    pub fn as_constant(&self) -> Option<f64> {
        match *self.root {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    /// True only for a literal zero constant.
    pub fn is_zero(&self) -> bool {
        self.as_constant() == Some(0.0)
    }

    /// Number of tree nodes (shared subtrees counted once per use).
    pub fn node_count(&self) -> usize {
        fn count(n: &Node) -> usize {
            match n {
                Node::Const(_) | Node::Var(_) => 1,
                Node::Neg(a) | Node::Pow(a, _) | Node::Call(_, a) => 1 + count(a),
                Node::Add(a, b)
                | Node::Sub(a, b)
                | Node::Mul(a, b)
                | Node::Div(a, b)
                | Node::Atan2(a, b) => 1 + count(a) + count(b),
            }
        }
        count(&self.root)
    }

    fn wrap(root: Node, dim: usize) -> Expression {
        Expression {
            root: Arc::new(root),
            dim,
        }
    }

    fn from_arc(root: Arc<Node>, dim: usize) -> Expression {
        Expression { root, dim }
    }

    /// Re-declare the expression over `dim` variables (must not drop a used one).
    pub fn with_dimension(&self, dim: usize) -> Expression {
        assert!(
            self.max_var().is_none_or(|v| v < dim),
            "expression references a variable beyond dimension {dim}"
        );
        Expression::from_arc(self.root.clone(), dim)
    }

    fn max_var(&self) -> Option<usize> {
        fn walk(n: &Node) -> Option<usize> {
            match n {
                Node::Const(_) => None,
                Node::Var(i) => Some(*i),
                Node::Neg(a) | Node::Pow(a, _) | Node::Call(_, a) => walk(a),
                Node::Add(a, b)
                | Node::Sub(a, b)
                | Node::Mul(a, b)
                | Node::Div(a, b)
                | Node::Atan2(a, b) => walk(a).max(walk(b)),
            }
        }
        walk(&self.root)
    }

    /// Evaluate at `p` (`p.len()` must cover the declared dimension).
    pub fn eval(&self, p: &[f64]) -> Result<f64, EvalError> {
        if p.len() < self.dim {
            return Err(EvalError::Arity {
                needed: self.dim,
                got: p.len(),
            });
        }
        eval_node(&self.root, p)
    }

    /// Value and exact gradient at `p` by forward-mode dual numbers.
    ///
    /// The gradient has one entry per coordinate of `p`.
    pub fn eval_grad(&self, p: &[f64]) -> Result<(f64, Vec<f64>), EvalError> {
        if p.len() < self.dim {
            return Err(EvalError::Arity {
                needed: self.dim,
                got: p.len(),
            });
        }
        assert!(
            p.len() <= MAX_DIM,
            "dimension {} exceeds {MAX_DIM}",
            p.len()
        );
        let d = dual::eval_dual(&self.root, p)?;
        Ok((d.value, d.grad[..p.len()].to_vec()))
    }

    /// Symbolic partial derivative with respect to `x{var}`.
    ///
    /// Used to build derived fields; the result is folded but not simplified.
    pub fn partial(&self, var: usize) -> Expression {
        let root = partial_node(&self.root, var);
        Expression::from_arc(root, self.dim)
    }

    /// Replace `x{j}` by `args[j]`; the result lives in the arguments' chart.
    pub fn substitute(&self, args: &[Expression]) -> Expression {
        assert!(
            self.max_var().is_none_or(|v| v < args.len()),
            "substitution needs {} arguments",
            self.dim
        );
        let dim = args.iter().map(|a| a.dim).max().unwrap_or(0);
        let root = subst_node(&self.root, args);
        Expression::from_arc(root, dim)
    }

    pub fn powi(&self, exponent: i32) -> Expression {
        match exponent {
            0 => Expression::one(),
            1 => self.clone(),
            _ => match *self.root {
                Node::Const(c) => Expression::constant(c.powi(exponent)),
                _ => Expression::wrap(Node::Pow(self.root.clone(), exponent), self.dim),
            },
        }
    }

    pub fn call(func: Func, arg: &Expression) -> Expression {
        if let Node::Const(c) = *arg.root {
            if let Ok(v) = apply_func(func, c) {
                return Expression::constant(v);
            }
        }
        Expression::wrap(Node::Call(func, arg.root.clone()), arg.dim)
    }

    pub fn atan2(y: &Expression, x: &Expression) -> Expression {
        Expression::wrap(
            Node::Atan2(y.root.clone(), x.root.clone()),
            y.dim.max(x.dim),
        )
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(f, &self.root)
    }
}

// Precedence levels used by the serializer. Right operands of binary
// operators need strictly higher precedence so the reparse keeps the tree.
const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_NEG: u8 = 3;
const PREC_ATOM: u8 = 5;

fn prec(n: &Node) -> u8 {
    match n {
        Node::Add(..) | Node::Sub(..) => PREC_ADD,
        Node::Mul(..) | Node::Div(..) => PREC_MUL,
        Node::Neg(_) => PREC_NEG,
        Node::Pow(..) => 4,
        Node::Const(c) if *c < 0.0 || c.is_sign_negative() => PREC_NEG,
        _ => PREC_ATOM,
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, n: &Node, min: u8) -> fmt::Result {
    if prec(n) < min {
        f.write_str("(")?;
        write_node(f, n)?;
        f.write_str(")")
    } else {
        write_node(f, n)
    }
}

fn write_node(f: &mut fmt::Formatter<'_>, n: &Node) -> fmt::Result {
    match n {
        Node::Const(c) => {
            if c.is_sign_negative() {
                write!(f, "-{}", -c)
            } else {
                write!(f, "{c}")
            }
        }
        Node::Var(i) => write!(f, "x{i}"),
        Node::Neg(a) => {
            f.write_str("-")?;
            write_child(f, a, PREC_NEG)
        }
        Node::Add(a, b) => {
            write_child(f, a, PREC_ADD)?;
            f.write_str(" + ")?;
            write_child(f, b, PREC_ADD + 1)
        }
        Node::Sub(a, b) => {
            write_child(f, a, PREC_ADD)?;
            f.write_str(" - ")?;
            write_child(f, b, PREC_ADD + 1)
        }
        Node::Mul(a, b) => {
            write_child(f, a, PREC_MUL)?;
            f.write_str("*")?;
            write_child(f, b, PREC_MUL + 1)
        }
        Node::Div(a, b) => {
            write_child(f, a, PREC_MUL)?;
            f.write_str("/")?;
            write_child(f, b, PREC_MUL + 1)
        }
        Node::Pow(a, e) => {
            write_child(f, a, PREC_ATOM)?;
            write!(f, "^{e}")
        }
        Node::Call(func, a) => {
            write!(f, "{}(", func.name())?;
            write_node(f, a)?;
            f.write_str(")")
        }
        Node::Atan2(y, x) => {
            f.write_str("atan2(")?;
            write_node(f, y)?;
            f.write_str(", ")?;
            write_node(f, x)?;
            f.write_str(")")
        }
    }
}

pub(crate) fn apply_func(func: Func, x: f64) -> Result<f64, EvalError> {
    let v = match func {
        Func::Sin => x.sin(),
        Func::Cos => x.cos(),
        Func::Exp => x.exp(),
        Func::Log => {
            if x <= 0.0 {
                return Err(EvalError::Domain {
                    op: "log",
                    value: x,
                });
            }
            x.ln()
        }
        Func::Sqrt => {
            if x < 0.0 {
                return Err(EvalError::Domain {
                    op: "sqrt",
                    value: x,
                });
            }
            x.sqrt()
        }
        Func::Tanh => x.tanh(),
        Func::Pos => x.max(0.0),
        Func::Heaviside => {
            if x > 0.0 {
                1.0
            } else {
                0.0
            }
        }
    };
    finite(func.name(), v)
}

fn finite(op: &'static str, v: f64) -> Result<f64, EvalError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::NonFinite { op, value: v })
    }
}

fn eval_node(n: &Node, p: &[f64]) -> Result<f64, EvalError> {
    match n {
        Node::Const(c) => Ok(*c),
        Node::Var(i) => Ok(p[*i]),
        Node::Neg(a) => Ok(-eval_node(a, p)?),
        Node::Add(a, b) => finite("+", eval_node(a, p)? + eval_node(b, p)?),
        Node::Sub(a, b) => finite("-", eval_node(a, p)? - eval_node(b, p)?),
        Node::Mul(a, b) => finite("*", eval_node(a, p)? * eval_node(b, p)?),
        Node::Div(a, b) => {
            let num = eval_node(a, p)?;
            let den = eval_node(b, p)?;
            if den == 0.0 {
                return Err(EvalError::DivisionByZero);
            }
            finite("/", num / den)
        }
        Node::Pow(a, e) => {
            let base = eval_node(a, p)?;
            if base == 0.0 && *e < 0 {
                return Err(EvalError::DivisionByZero);
            }
            finite("^", base.powi(*e))
        }
        Node::Call(func, a) => apply_func(*func, eval_node(a, p)?),
        Node::Atan2(y, x) => {
            let (y, x) = (eval_node(y, p)?, eval_node(x, p)?);
            if x == 0.0 && y == 0.0 {
                return Err(EvalError::Domain {
                    op: "atan2",
                    value: 0.0,
                });
            }
            Ok(y.atan2(x))
        }
    }
}

// ---------------------------------------------------------------------------
// Folding builders on raw nodes.

fn konst(c: f64) -> Arc<Node> {
    Arc::new(Node::Const(c))
}

fn as_const(n: &Node) -> Option<f64> {
    match n {
        Node::Const(c) => Some(*c),
        _ => None,
    }
}

fn mk_neg(a: Arc<Node>) -> Arc<Node> {
    match &*a {
        Node::Const(c) => konst(-c),
        Node::Neg(inner) => inner.clone(),
        _ => Arc::new(Node::Neg(a)),
    }
}

fn mk_add(a: Arc<Node>, b: Arc<Node>) -> Arc<Node> {
    match (as_const(&a), as_const(&b)) {
        (Some(x), Some(y)) => konst(x + y),
        (Some(x), _) if x == 0.0 => b,
        (_, Some(y)) if y == 0.0 => a,
        _ => match &*b {
            Node::Neg(inner) => Arc::new(Node::Sub(a, inner.clone())),
            _ => Arc::new(Node::Add(a, b)),
        },
    }
}

fn mk_sub(a: Arc<Node>, b: Arc<Node>) -> Arc<Node> {
    match (as_const(&a), as_const(&b)) {
        (Some(x), Some(y)) => konst(x - y),
        (Some(x), _) if x == 0.0 => mk_neg(b),
        (_, Some(y)) if y == 0.0 => a,
        _ => match &*b {
            Node::Neg(inner) => Arc::new(Node::Add(a, inner.clone())),
            _ => Arc::new(Node::Sub(a, b)),
        },
    }
}

fn mk_mul(a: Arc<Node>, b: Arc<Node>) -> Arc<Node> {
    match (as_const(&a), as_const(&b)) {
        (Some(x), Some(y)) => konst(x * y),
        (Some(x), _) if x == 0.0 => konst(0.0),
        (_, Some(y)) if y == 0.0 => konst(0.0),
        (Some(x), _) if x == 1.0 => b,
        (_, Some(y)) if y == 1.0 => a,
        (Some(x), _) if x == -1.0 => mk_neg(b),
        (_, Some(y)) if y == -1.0 => mk_neg(a),
        _ => Arc::new(Node::Mul(a, b)),
    }
}

fn mk_div(a: Arc<Node>, b: Arc<Node>) -> Arc<Node> {
    match (as_const(&a), as_const(&b)) {
        (Some(x), Some(y)) if y != 0.0 => konst(x / y),
        (Some(x), _) if x == 0.0 => konst(0.0),
        (_, Some(y)) if y == 1.0 => a,
        _ => Arc::new(Node::Div(a, b)),
    }
}

fn mk_pow(a: Arc<Node>, e: i32) -> Arc<Node> {
    match e {
        0 => konst(1.0),
        1 => a,
        _ => match as_const(&a) {
            Some(c) => konst(c.powi(e)),
            None => Arc::new(Node::Pow(a, e)),
        },
    }
}

fn mk_call(func: Func, a: Arc<Node>) -> Arc<Node> {
    if let Some(c) = as_const(&a) {
        if let Ok(v) = apply_func(func, c) {
            return konst(v);
        }
    }
    Arc::new(Node::Call(func, a))
}

fn partial_node(n: &Node, var: usize) -> Arc<Node> {
    match n {
        Node::Const(_) => konst(0.0),
        Node::Var(i) => konst(if *i == var { 1.0 } else { 0.0 }),
        Node::Neg(a) => mk_neg(partial_node(a, var)),
        Node::Add(a, b) => mk_add(partial_node(a, var), partial_node(b, var)),
        Node::Sub(a, b) => mk_sub(partial_node(a, var), partial_node(b, var)),
        Node::Mul(a, b) => mk_add(
            mk_mul(partial_node(a, var), b.clone()),
            mk_mul(a.clone(), partial_node(b, var)),
        ),
        Node::Div(a, b) => {
            let da = partial_node(a, var);
            let db = partial_node(b, var);
            if as_const(&db) == Some(0.0) {
                mk_div(da, b.clone())
            } else {
                let quotient = Arc::new(Node::Div(a.clone(), b.clone()));
                mk_div(mk_sub(da, mk_mul(quotient, db)), b.clone())
            }
        }
        Node::Pow(a, e) => {
            let da = partial_node(a, var);
            if as_const(&da) == Some(0.0) {
                return konst(0.0);
            }
            mk_mul(mk_mul(konst(*e as f64), mk_pow(a.clone(), e - 1)), da)
        }
        Node::Call(func, a) => {
            let da = partial_node(a, var);
            if as_const(&da) == Some(0.0) {
                return konst(0.0);
            }
            let outer = match func {
                Func::Sin => mk_call(Func::Cos, a.clone()),
                Func::Cos => mk_neg(mk_call(Func::Sin, a.clone())),
                Func::Exp => mk_call(Func::Exp, a.clone()),
                Func::Log => mk_div(konst(1.0), a.clone()),
                Func::Sqrt => mk_div(konst(0.5), mk_call(Func::Sqrt, a.clone())),
                Func::Tanh => mk_sub(konst(1.0), mk_pow(mk_call(Func::Tanh, a.clone()), 2)),
                Func::Pos => mk_call(Func::Heaviside, a.clone()),
                Func::Heaviside => return konst(0.0),
            };
            mk_mul(outer, da)
        }
        Node::Atan2(y, x) => {
            let dy = partial_node(y, var);
            let dx = partial_node(x, var);
            let num = mk_sub(mk_mul(x.clone(), dy), mk_mul(y.clone(), dx));
            if as_const(&num) == Some(0.0) {
                return konst(0.0);
            }
            let den = mk_add(mk_pow(x.clone(), 2), mk_pow(y.clone(), 2));
            mk_div(num, den)
        }
    }
}

fn subst_node(n: &Node, args: &[Expression]) -> Arc<Node> {
    match n {
        Node::Const(c) => konst(*c),
        Node::Var(i) => args[*i].root.clone(),
        Node::Neg(a) => mk_neg(subst_node(a, args)),
        Node::Add(a, b) => mk_add(subst_node(a, args), subst_node(b, args)),
        Node::Sub(a, b) => mk_sub(subst_node(a, args), subst_node(b, args)),
        Node::Mul(a, b) => mk_mul(subst_node(a, args), subst_node(b, args)),
        Node::Div(a, b) => mk_div(subst_node(a, args), subst_node(b, args)),
        Node::Pow(a, e) => mk_pow(subst_node(a, args), *e),
        Node::Call(f, a) => mk_call(*f, subst_node(a, args)),
        Node::Atan2(y, x) => Arc::new(Node::Atan2(subst_node(y, args), subst_node(x, args))),
    }
}

// ---------------------------------------------------------------------------
// Operator overloads (folding). Dimensions combine by max so that constants
// mix freely with chart expressions.

macro_rules! binop {
    ($trait:ident, $method:ident, $mk:ident) => {
        impl $trait for Expression {
            type Output = Expression;
            fn $method(self, rhs: Expression) -> Expression {
                let dim = self.dim.max(rhs.dim);
                Expression::from_arc($mk(self.root, rhs.root), dim)
            }
        }
        impl<'a> $trait<&'a Expression> for &'a Expression {
            type Output = Expression;
            fn $method(self, rhs: &'a Expression) -> Expression {
                let dim = self.dim.max(rhs.dim);
                Expression::from_arc($mk(self.root.clone(), rhs.root.clone()), dim)
            }
        }
        impl $trait<f64> for Expression {
            type Output = Expression;
            fn $method(self, rhs: f64) -> Expression {
                let dim = self.dim;
                Expression::from_arc($mk(self.root, konst(rhs)), dim)
            }
        }
    };
}

binop!(Add, add, mk_add);
binop!(Sub, sub, mk_sub);
binop!(Mul, mul, mk_mul);
binop!(Div, div, mk_div);

impl Neg for Expression {
    type Output = Expression;
    fn neg(self) -> Expression {
        let dim = self.dim;
        Expression::from_arc(mk_neg(self.root), dim)
    }
}

impl Neg for &Expression {
    type Output = Expression;
    fn neg(self) -> Expression {
        Expression::from_arc(mk_neg(self.root.clone()), self.dim)
    }
}
