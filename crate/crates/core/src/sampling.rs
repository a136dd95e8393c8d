//! Seeded random fields, forms, tensors and points for the identity suites.

use rand::Rng;

use crate::exterior::{binomial, AlternatingTensor, Variance};
use crate::expr::Expression;
use crate::fields::{ChartDomain, DifferentialForm, MultiVectorField, Term, VectorField};

/// Family of random component functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    /// Polynomials of degree at most 2.
    Polynomial,
    /// `a sin(b·x + c) + d cos(e·x + f)`.
    Trig,
    /// Sum of one of each.
    Mixed,
}

fn coefficient(rng: &mut impl Rng) -> Expression {
    // Rounded so that serialized expressions stay short.
    let c: f64 = rng.gen_range(-1.0..1.0);
    Expression::constant((c * 1000.0).round() / 1000.0)
}

fn polynomial(rng: &mut impl Rng, n: usize) -> Expression {
    let x = |i| Expression::var(i, n);
    let mut acc = coefficient(rng);
    for i in 0..n {
        acc = acc + coefficient(rng) * x(i);
    }
    // A few quadratic monomials.
    for _ in 0..n.min(3) {
        let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
        acc = acc + coefficient(rng) * (x(i) * x(j));
    }
    acc.with_dimension(n)
}

fn linear(rng: &mut impl Rng, n: usize) -> Expression {
    let mut acc = coefficient(rng);
    for i in 0..n {
        acc = acc + coefficient(rng) * Expression::var(i, n);
    }
    acc
}

fn trig(rng: &mut impl Rng, n: usize) -> Expression {
    let s = Expression::call(crate::expr::Func::Sin, &linear(rng, n));
    let c = Expression::call(crate::expr::Func::Cos, &linear(rng, n));
    (coefficient(rng) * s + coefficient(rng) * c).with_dimension(n)
}

/// A random scalar expression over `n` variables.
pub fn random_expression(rng: &mut impl Rng, n: usize, kind: FieldKind) -> Expression {
    match kind {
        FieldKind::Polynomial => polynomial(rng, n),
        FieldKind::Trig => trig(rng, n),
        FieldKind::Mixed => polynomial(rng, n) + trig(rng, n),
    }
}

pub fn random_vector_field(rng: &mut impl Rng, domain: &ChartDomain, kind: FieldKind) -> VectorField {
    let n = domain.dimension();
    let comps = (0..n).map(|_| random_expression(rng, n, kind)).collect();
    VectorField::new(comps, domain.clone()).expect("dimensions agree")
}

/// A sum of `terms` random decomposable grade-`k` fields.
pub fn random_multivector(
    rng: &mut impl Rng,
    domain: &ChartDomain,
    grade: usize,
    terms: usize,
    kind: FieldKind,
) -> MultiVectorField {
    let n = domain.dimension();
    let terms = (0..terms)
        .map(|_| Term {
            coefficient: random_expression(rng, n, kind),
            factors: (0..grade).map(|_| random_vector_field(rng, domain, kind)).collect(),
        })
        .collect();
    MultiVectorField::new(grade, terms, domain).expect("shapes agree")
}

pub fn random_form(rng: &mut impl Rng, domain: &ChartDomain, grade: usize, kind: FieldKind) -> DifferentialForm {
    let n = domain.dimension();
    let comps = (0..binomial(n, grade)).map(|_| random_expression(rng, n, kind)).collect();
    DifferentialForm::new(grade, comps, domain).expect("shapes agree")
}

/// A form whose components are random constants.
pub fn random_constant_form(rng: &mut impl Rng, domain: &ChartDomain, grade: usize) -> DifferentialForm {
    let n = domain.dimension();
    let comps = (0..binomial(n, grade)).map(|_| coefficient(rng)).collect();
    DifferentialForm::new(grade, comps, domain).expect("shapes agree")
}

pub fn random_tensor(rng: &mut impl Rng, n: usize, grade: usize, variance: Variance) -> AlternatingTensor<f64> {
    let c = (0..binomial(n, grade)).map(|_| rng.gen_range(-1.0..1.0)).collect();
    AlternatingTensor::from_components(n, grade, variance, c).expect("shape from binomial")
}

/// Uniform points in the margin-shrunk box.
pub fn random_points(rng: &mut impl Rng, domain: &ChartDomain, count: usize) -> Vec<Vec<f64>> {
    let inner = domain.shrunk();
    (0..count)
        .map(|_| {
            inner
                .lower()
                .iter()
                .zip(inner.upper())
                .map(|(a, b)| rng.gen_range(*a..*b))
                .collect()
        })
        .collect()
}
