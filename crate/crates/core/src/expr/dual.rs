//! Forward-mode dual numbers carrying a full gradient.

use std::ops::{Add, Div, Mul, Neg, Sub};

use super::{apply_func, EvalError, Func, Node};

/// Largest chart dimension supported by gradient evaluation.
pub const MAX_DIM: usize = 16;

/// `value + Σ grad[i]·εᵢ` with `εᵢεⱼ = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub value: f64,
    pub grad: [f64; MAX_DIM],
}

impl Dual {
    pub fn constant(value: f64) -> Dual {
        Dual {
            value,
            grad: [0.0; MAX_DIM],
        }
    }

    /// The coordinate `x{index}` seeded with unit derivative.
    pub fn variable(value: f64, index: usize) -> Dual {
        let mut d = Dual::constant(value);
        d.grad[index] = 1.0;
        d
    }

    fn chain(self, value: f64, slope: f64) -> Dual {
        let mut grad = self.grad;
        for g in &mut grad {
            *g *= slope;
        }
        Dual { value, grad }
    }

    pub fn powi(self, e: i32) -> Dual {
        let value = self.value.powi(e);
        let slope = if e == 0 {
            0.0
        } else {
            e as f64 * self.value.powi(e - 1)
        };
        self.chain(value, slope)
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, rhs: Dual) -> Dual {
        let mut grad = self.grad;
        for (g, r) in grad.iter_mut().zip(rhs.grad) {
            *g += r;
        }
        Dual {
            value: self.value + rhs.value,
            grad,
        }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, rhs: Dual) -> Dual {
        let mut grad = self.grad;
        for (g, r) in grad.iter_mut().zip(rhs.grad) {
            *g -= r;
        }
        Dual {
            value: self.value - rhs.value,
            grad,
        }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, rhs: Dual) -> Dual {
        let mut grad = [0.0; MAX_DIM];
        for i in 0..MAX_DIM {
            grad[i] = self.grad[i] * rhs.value + self.value * rhs.grad[i];
        }
        Dual {
            value: self.value * rhs.value,
            grad,
        }
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, rhs: Dual) -> Dual {
        let q = self.value / rhs.value;
        let mut grad = [0.0; MAX_DIM];
        for i in 0..MAX_DIM {
            grad[i] = (self.grad[i] - q * rhs.grad[i]) / rhs.value;
        }
        Dual { value: q, grad }
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        self.chain(-self.value, -1.0)
    }
}

fn checked(op: &'static str, d: Dual) -> Result<Dual, EvalError> {
    if d.value.is_finite() && d.grad.iter().all(|g| g.is_finite()) {
        Ok(d)
    } else {
        Err(EvalError::NonFinite { op, value: d.value })
    }
}

fn apply(func: Func, a: Dual) -> Result<Dual, EvalError> {
    let x = a.value;
    let value = apply_func(func, x)?;
    let slope = match func {
        Func::Sin => x.cos(),
        Func::Cos => -x.sin(),
        Func::Exp => value,
        Func::Log => 1.0 / x,
        Func::Sqrt => {
            if x == 0.0 {
                return Err(EvalError::Domain {
                    op: "sqrt (derivative)",
                    value: x,
                });
            }
            0.5 / value
        }
        Func::Tanh => 1.0 - value * value,
        Func::Pos => {
            if x > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Func::Heaviside => 0.0,
    };
    checked(func.name(), a.chain(value, slope))
}

pub(super) fn eval_dual(n: &Node, p: &[f64]) -> Result<Dual, EvalError> {
    match n {
        Node::Const(c) => Ok(Dual::constant(*c)),
        Node::Var(i) => Ok(Dual::variable(p[*i], *i)),
        Node::Neg(a) => Ok(-eval_dual(a, p)?),
        Node::Add(a, b) => checked("+", eval_dual(a, p)? + eval_dual(b, p)?),
        Node::Sub(a, b) => checked("-", eval_dual(a, p)? - eval_dual(b, p)?),
        Node::Mul(a, b) => checked("*", eval_dual(a, p)? * eval_dual(b, p)?),
        Node::Div(a, b) => {
            let num = eval_dual(a, p)?;
            let den = eval_dual(b, p)?;
            if den.value == 0.0 {
                return Err(EvalError::DivisionByZero);
            }
            checked("/", num / den)
        }
        Node::Pow(a, e) => {
            let base = eval_dual(a, p)?;
            if base.value == 0.0 && *e < 0 {
                return Err(EvalError::DivisionByZero);
            }
            checked("^", base.powi(*e))
        }
        Node::Call(func, a) => apply(*func, eval_dual(a, p)?),
        Node::Atan2(y, x) => {
            let (y, x) = (eval_dual(y, p)?, eval_dual(x, p)?);
            let r2 = x.value * x.value + y.value * y.value;
            if r2 == 0.0 {
                return Err(EvalError::Domain {
                    op: "atan2",
                    value: 0.0,
                });
            }
            let mut grad = [0.0; MAX_DIM];
            for i in 0..MAX_DIM {
                grad[i] = (x.value * y.grad[i] - y.value * x.grad[i]) / r2;
            }
            checked(
                "atan2",
                Dual {
                    value: y.value.atan2(x.value),
                    grad,
                },
            )
        }
    }
}
