//! Scalar, vector and multivector fields and differential forms on a box chart.
//!
//! All component functions are [`Expression`]s, so derived objects (exterior
//! derivatives, brackets, Lie derivatives) are again fields of the same kind.
//! A [`MultiVectorField`] is a list of decomposable terms `f·Z_1∧…∧Z_k`; its
//! componentwise view is expanded symbolically on first use and both views
//! must agree pointwise.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::exterior::{AlternatingTensor, MultiIndex, Variance};
use crate::expr::Expression;

/// Tolerance on box membership, relative to the longest edge.
const CONTAINMENT_SLACK: f64 = 1e-9;

/// Axis-aligned closed box in chart coordinates with an inner margin.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
    margin: f64,
}

impl ChartDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<ChartDomain> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::Dimension(format!(
                "box bounds of lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (a, b)) in lower.iter().zip(&upper).enumerate() {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::Invalid(format!("empty interval [{a}, {b}] on axis {i}")));
            }
        }
        Ok(ChartDomain {
            lower,
            upper,
            margin: 0.0,
        })
    }

    /// The cube `[a, b]^n`.
    pub fn cube(dim: usize, a: f64, b: f64) -> Result<ChartDomain> {
        ChartDomain::new(vec![a; dim], vec![b; dim])
    }

    pub fn with_margin(mut self, margin: f64) -> Result<ChartDomain> {
        let shortest = self.edges().fold(f64::INFINITY, f64::min);
        if !(margin >= 0.0 && margin < 0.5 * shortest) {
            return Err(Error::Invalid(format!(
                "margin {margin} must lie in [0, {})",
                0.5 * shortest
            )));
        }
        self.margin = margin;
        Ok(self)
    }

    pub fn dimension(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    fn edges(&self) -> impl Iterator<Item = f64> + '_ {
        self.lower.iter().zip(&self.upper).map(|(a, b)| b - a)
    }

    pub fn volume(&self) -> f64 {
        self.edges().product()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        let slack = CONTAINMENT_SLACK * self.edges().fold(0.0, f64::max);
        p.len() == self.dimension()
            && p
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (a, b))| *x >= a - slack && *x <= b + slack)
    }

    /// The box shrunk by the margin on every side.
    pub fn shrunk(&self) -> ChartDomain {
        ChartDomain {
            lower: self.lower.iter().map(|a| a + self.margin).collect(),
            upper: self.upper.iter().map(|b| b - self.margin).collect(),
            margin: 0.0,
        }
    }

    /// Euclidean distance from `p` to the complement of the box (0 outside).
    pub fn depth(&self, p: &[f64]) -> f64 {
        p.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(x, (a, b))| (x - a).min(b - x))
            .fold(f64::INFINITY, f64::min)
            .max(0.0)
    }

    pub(crate) fn check(&self, p: &[f64]) -> Result<()> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(Error::OutsideDomain { point: p.to_vec() })
        }
    }
}

/// A scalar function on the chart.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    expr: Expression,
    domain: ChartDomain,
}

impl ScalarField {
    pub fn new(expr: Expression, domain: ChartDomain) -> Result<ScalarField> {
        check_expr_dim(&expr, domain.dimension())?;
        Ok(ScalarField {
            expr: expr.with_dimension(domain.dimension()),
            domain,
        })
    }

    pub fn parse(source: &str, domain: &ChartDomain) -> Result<ScalarField> {
        ScalarField::new(Expression::parse(source, domain.dimension())?, domain.clone())
    }

    pub fn expression(&self) -> &Expression {
        &self.expr
    }

    pub fn domain(&self) -> &ChartDomain {
        &self.domain
    }

    pub fn eval(&self, p: &[f64]) -> Result<f64> {
        self.domain.check(p)?;
        Ok(self.expr.eval(p)?)
    }

    pub fn eval_grad(&self, p: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.domain.check(p)?;
        Ok(self.expr.eval_grad(p)?)
    }

    /// `d f` as a 1-form.
    pub fn differential(&self) -> DifferentialForm {
        let n = self.domain.dimension();
        let comps = (0..n).map(|i| self.expr.partial(i)).collect();
        DifferentialForm::from_tensor(
            AlternatingTensor::vector(comps, Variance::Covector),
            self.domain.clone(),
        )
    }
}

fn check_expr_dim(e: &Expression, n: usize) -> Result<()> {
    if e.dimension() > n {
        return Err(Error::Dimension(format!(
            "expression over {} variables in a chart of dimension {n}",
            e.dimension()
        )));
    }
    Ok(())
}

/// A vector field `X = Σ X^i ∂_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    components: Vec<Expression>,
    domain: ChartDomain,
}

impl VectorField {
    pub fn new(components: Vec<Expression>, domain: ChartDomain) -> Result<VectorField> {
        let n = domain.dimension();
        if components.len() != n {
            return Err(Error::Dimension(format!(
                "vector field with {} components in dimension {n}",
                components.len()
            )));
        }
        for c in &components {
            check_expr_dim(c, n)?;
        }
        Ok(VectorField {
            components: components.into_iter().map(|c| c.with_dimension(n)).collect(),
            domain,
        })
    }

    pub fn parse(sources: &[&str], domain: &ChartDomain) -> Result<VectorField> {
        let n = domain.dimension();
        let comps = sources
            .iter()
            .map(|s| Expression::parse(s, n))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        VectorField::new(comps, domain.clone())
    }

    /// The constant coordinate field `∂_i`.
    pub fn basis(i: usize, domain: &ChartDomain) -> VectorField {
        let n = domain.dimension();
        let components = (0..n)
            .map(|j| Expression::constant(if i == j { 1.0 } else { 0.0 }))
            .collect();
        VectorField {
            components,
            domain: domain.clone(),
        }
    }

    pub fn zero(domain: &ChartDomain) -> VectorField {
        VectorField {
            components: vec![Expression::zero(); domain.dimension()],
            domain: domain.clone(),
        }
    }

    pub fn components(&self) -> &[Expression] {
        &self.components
    }

    pub fn domain(&self) -> &ChartDomain {
        &self.domain
    }

    pub fn dimension(&self) -> usize {
        self.components.len()
    }

    pub fn eval(&self, p: &[f64]) -> Result<Vec<f64>> {
        self.domain.check(p)?;
        eval_all(&self.components, p)
    }

    /// Value and Jacobian `J[i][j] = ∂_j X^i`.
    pub fn eval_jet(&self, p: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        self.domain.check(p)?;
        let mut value = Vec::with_capacity(self.dimension());
        let mut jac = Vec::with_capacity(self.dimension());
        for c in &self.components {
            let (v, g) = c.eval_grad(p)?;
            value.push(v);
            jac.push(g);
        }
        Ok((value, jac))
    }

    /// Directional derivative `X f = Σ X^i ∂_i f`.
    pub fn apply(&self, f: &Expression) -> Expression {
        self.components
            .iter()
            .enumerate()
            .fold(Expression::zero(), |acc, (i, x)| acc + x * &f.partial(i))
    }

    pub fn scale(&self, f: &Expression) -> VectorField {
        VectorField {
            components: self.components.iter().map(|c| f * c).collect(),
            domain: self.domain.clone(),
        }
    }

    pub fn add(&self, other: &VectorField) -> VectorField {
        VectorField {
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a + b)
                .collect(),
            domain: self.domain.clone(),
        }
    }

    pub fn to_multivector(&self) -> MultiVectorField {
        MultiVectorField::decomposable(Expression::one(), vec![self.clone()], &self.domain)
    }

    pub(crate) fn symbolic(&self) -> AlternatingTensor<Expression> {
        AlternatingTensor::vector(self.components.clone(), Variance::Vector)
    }
}

fn eval_all(es: &[Expression], p: &[f64]) -> Result<Vec<f64>> {
    es.iter()
        .map(|e| e.eval(p).map_err(Error::from))
        .collect()
}

/// `[X, Y]^i = X^j ∂_j Y^i − Y^j ∂_j X^i`.
pub fn lie_bracket(x: &VectorField, y: &VectorField) -> Result<VectorField> {
    if x.dimension() != y.dimension() {
        return Err(Error::Dimension("lie_bracket: dimension mismatch".into()));
    }
    let components = (0..x.dimension())
        .map(|i| x.apply(&y.components[i]) - y.apply(&x.components[i]))
        .collect();
    Ok(VectorField {
        components,
        domain: x.domain.clone(),
    })
}

/// One decomposable summand `coefficient · factor_1 ∧ … ∧ factor_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub coefficient: Expression,
    pub factors: Vec<VectorField>,
}

/// A grade-`k` multivector field as a finite sum of decomposable terms.
#[derive(Debug, Clone)]
pub struct MultiVectorField {
    grade: usize,
    domain: ChartDomain,
    terms: Vec<Term>,
    components: OnceLock<AlternatingTensor<Expression>>,
}

impl MultiVectorField {
    pub fn new(grade: usize, terms: Vec<Term>, domain: &ChartDomain) -> Result<MultiVectorField> {
        let n = domain.dimension();
        if grade > n {
            return Err(Error::Grade(format!("grade {grade} exceeds dimension {n}")));
        }
        for t in &terms {
            if t.factors.len() != grade {
                return Err(Error::Grade(format!(
                    "term with {} factors in a grade-{grade} field",
                    t.factors.len()
                )));
            }
            check_expr_dim(&t.coefficient, n)?;
            if t.factors.iter().any(|f| f.dimension() != n) {
                return Err(Error::Dimension("factor dimension mismatch".into()));
            }
        }
        Ok(MultiVectorField {
            grade,
            domain: domain.clone(),
            terms,
            components: OnceLock::new(),
        })
    }

    pub fn zero(grade: usize, domain: &ChartDomain) -> MultiVectorField {
        MultiVectorField {
            grade,
            domain: domain.clone(),
            terms: Vec::new(),
            components: OnceLock::new(),
        }
    }

    pub fn decomposable(
        coefficient: Expression,
        factors: Vec<VectorField>,
        domain: &ChartDomain,
    ) -> MultiVectorField {
        MultiVectorField {
            grade: factors.len(),
            domain: domain.clone(),
            terms: vec![Term {
                coefficient,
                factors,
            }],
            components: OnceLock::new(),
        }
    }

    /// `Σ_I c_I e_I`, one basis term per nonzero component.
    pub fn from_components(
        tensor: AlternatingTensor<Expression>,
        domain: &ChartDomain,
    ) -> Result<MultiVectorField> {
        if tensor.variance() != Variance::Vector || tensor.dimension() != domain.dimension() {
            return Err(Error::Invalid(
                "from_components expects a vector tensor of the chart dimension".into(),
            ));
        }
        let terms = tensor
            .iter()
            .filter(|(_, c)| !c.is_zero())
            .map(|(idx, c)| Term {
                coefficient: c.clone(),
                factors: idx
                    .indices()
                    .into_iter()
                    .map(|i| VectorField::basis(i, domain))
                    .collect(),
            })
            .collect();
        let field = MultiVectorField {
            grade: tensor.grade(),
            domain: domain.clone(),
            terms,
            components: OnceLock::new(),
        };
        let _ = field.components.set(tensor);
        Ok(field)
    }

    pub fn grade(&self) -> usize {
        self.grade
    }

    pub fn dimension(&self) -> usize {
        self.domain.dimension()
    }

    pub fn domain(&self) -> &ChartDomain {
        &self.domain
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// Symbolic componentwise view, expanded once and cached.
    pub fn components(&self) -> &AlternatingTensor<Expression> {
        self.components.get_or_init(|| {
            let n = self.dimension();
            let mut acc = AlternatingTensor::zeros(n, self.grade, Variance::Vector);
            for t in &self.terms {
                let mut w = AlternatingTensor::scalar(n, t.coefficient.clone(), Variance::Vector);
                for f in &t.factors {
                    w = w.wedge(&f.symbolic()).expect("factor shapes checked");
                }
                acc = acc.add(&w).expect("term shapes checked");
            }
            acc
        })
    }

    /// Value at `p` from the term list.
    pub fn eval(&self, p: &[f64]) -> Result<AlternatingTensor<f64>> {
        self.domain.check(p)?;
        let n = self.dimension();
        let mut acc = AlternatingTensor::zeros(n, self.grade, Variance::Vector);
        for t in &self.terms {
            let c = t.coefficient.eval(p)?;
            if c == 0.0 {
                continue;
            }
            let mut w = AlternatingTensor::scalar(n, c, Variance::Vector);
            for f in &t.factors {
                let v = AlternatingTensor::vector(eval_all(&f.components, p)?, Variance::Vector);
                w = w.wedge(&v)?;
            }
            acc = acc.add(&w)?;
        }
        Ok(acc)
    }

    /// Value at `p` from the componentwise view.
    pub fn eval_components(&self, p: &[f64]) -> Result<AlternatingTensor<f64>> {
        self.domain.check(p)?;
        Ok(self.components().try_map(|e| e.eval(p))?)
    }

    pub fn add(&self, other: &MultiVectorField) -> Result<MultiVectorField> {
        if self.grade != other.grade || self.dimension() != other.dimension() {
            return Err(Error::Grade(format!(
                "adding grade {} and grade {} fields",
                self.grade, other.grade
            )));
        }
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        MultiVectorField::new(self.grade, terms, &self.domain)
    }

    pub fn scale(&self, f: &Expression) -> MultiVectorField {
        let terms = self
            .terms
            .iter()
            .map(|t| Term {
                coefficient: f * &t.coefficient,
                factors: t.factors.clone(),
            })
            .collect();
        MultiVectorField {
            grade: self.grade,
            domain: self.domain.clone(),
            terms,
            components: OnceLock::new(),
        }
    }

    pub fn negate(&self) -> MultiVectorField {
        self.scale(&Expression::constant(-1.0))
    }

    /// `X ∧ self`, prepending `X` to every term.
    pub fn wedge_left(&self, x: &VectorField) -> MultiVectorField {
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let mut factors = Vec::with_capacity(t.factors.len() + 1);
                factors.push(x.clone());
                factors.extend(t.factors.iter().cloned());
                Term {
                    coefficient: t.coefficient.clone(),
                    factors,
                }
            })
            .collect();
        MultiVectorField {
            grade: self.grade + 1,
            domain: self.domain.clone(),
            terms,
            components: OnceLock::new(),
        }
    }

    /// The same field on a smaller box.
    pub fn restrict(&self, domain: &ChartDomain) -> MultiVectorField {
        let mut out = self.clone();
        out.domain = domain.clone();
        for t in &mut out.terms {
            for f in &mut t.factors {
                f.domain = domain.clone();
            }
        }
        out
    }
}

/// `L_X Z` on the term list:
/// `L_X(f Z_1∧…∧Z_k) = (Xf) Z_1∧…∧Z_k + Σ_r f Z_1∧…∧[X, Z_r]∧…∧Z_k`.
pub fn lie_derivative(x: &VectorField, z: &MultiVectorField) -> Result<MultiVectorField> {
    let mut terms = Vec::new();
    for t in &z.terms {
        let xf = x.apply(&t.coefficient);
        if !xf.is_zero() {
            terms.push(Term {
                coefficient: xf,
                factors: t.factors.clone(),
            });
        }
        if t.coefficient.is_zero() {
            continue;
        }
        for r in 0..t.factors.len() {
            let bracket = lie_bracket(x, &t.factors[r])?;
            if bracket.components.iter().all(Expression::is_zero) {
                continue;
            }
            let mut factors = t.factors.clone();
            factors[r] = bracket;
            terms.push(Term {
                coefficient: t.coefficient.clone(),
                factors,
            });
        }
    }
    MultiVectorField::new(z.grade, terms, &z.domain)
}

/// A differential `k`-form `Σ_I ω_I dx^I`.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferentialForm {
    components: AlternatingTensor<Expression>,
    domain: ChartDomain,
}

impl DifferentialForm {
    pub fn new(grade: usize, components: Vec<Expression>, domain: &ChartDomain) -> Result<DifferentialForm> {
        let n = domain.dimension();
        for c in &components {
            check_expr_dim(c, n)?;
        }
        let components = components.into_iter().map(|c| c.with_dimension(n)).collect();
        Ok(DifferentialForm {
            components: AlternatingTensor::from_components(n, grade, Variance::Covector, components)?,
            domain: domain.clone(),
        })
    }

    /// Parse components given as `(multi-index, source)` pairs; others are 0.
    pub fn parse(grade: usize, entries: &[(&[usize], &str)], domain: &ChartDomain) -> Result<DifferentialForm> {
        let n = domain.dimension();
        let mut t = AlternatingTensor::zeros(n, grade, Variance::Covector);
        for (ix, src) in entries {
            let idx = MultiIndex::new(ix, n)?;
            if idx.grade() != grade {
                return Err(Error::Grade(format!("index {idx} in a {grade}-form")));
            }
            t.set(idx, Expression::parse(src, n)?);
        }
        Ok(DifferentialForm::from_tensor(t, domain.clone()))
    }

    pub fn from_tensor(components: AlternatingTensor<Expression>, domain: ChartDomain) -> DifferentialForm {
        assert_eq!(components.variance(), Variance::Covector);
        DifferentialForm { components, domain }
    }

    pub fn zero(grade: usize, domain: &ChartDomain) -> DifferentialForm {
        DifferentialForm {
            components: AlternatingTensor::zeros(domain.dimension(), grade, Variance::Covector),
            domain: domain.clone(),
        }
    }

    pub fn grade(&self) -> usize {
        self.components.grade()
    }

    pub fn dimension(&self) -> usize {
        self.domain.dimension()
    }

    pub fn domain(&self) -> &ChartDomain {
        &self.domain
    }

    pub fn components(&self) -> &AlternatingTensor<Expression> {
        &self.components
    }

    pub fn eval(&self, p: &[f64]) -> Result<AlternatingTensor<f64>> {
        self.domain.check(p)?;
        Ok(self.components.try_map(|e| e.eval(p))?)
    }

    pub fn wedge(&self, other: &DifferentialForm) -> Result<DifferentialForm> {
        Ok(DifferentialForm {
            components: self.components.wedge(&other.components)?,
            domain: self.domain.clone(),
        })
    }

    pub fn add(&self, other: &DifferentialForm) -> Result<DifferentialForm> {
        Ok(DifferentialForm {
            components: self.components.add(&other.components)?,
            domain: self.domain.clone(),
        })
    }

    pub fn scale(&self, f: &Expression) -> DifferentialForm {
        DifferentialForm {
            components: self.components.times(f),
            domain: self.domain.clone(),
        }
    }

    /// Replace every component by `f(component)`.
    pub fn map(&self, f: impl Fn(&Expression) -> Expression) -> DifferentialForm {
        DifferentialForm {
            components: self.components.map(f),
            domain: self.domain.clone(),
        }
    }

    pub fn restrict(&self, domain: &ChartDomain) -> DifferentialForm {
        DifferentialForm {
            components: self.components.clone(),
            domain: domain.clone(),
        }
    }

    /// `i_X ω` for a multivector field `X` (symbolic, via the component view).
    pub fn interior(&self, x: &MultiVectorField) -> Result<DifferentialForm> {
        Ok(DifferentialForm {
            components: AlternatingTensor::interior_by_multivector(&self.components, x.components())?,
            domain: self.domain.clone(),
        })
    }

    /// `⟨ω, Z⟩` as a scalar expression.
    pub fn pair(&self, z: &MultiVectorField) -> Result<Expression> {
        AlternatingTensor::pair(&self.components, z.components())
    }
}

/// `(dω)_J = Σ_{i∈J} (−1)^{pos(i, J)} ∂_i ω_{J∖i}`, written as `Σ_i dx^i ∧ ∂_i ω`.
/// A top-degree input yields the zero form of grade `n + 1`.
pub fn exterior_derivative(omega: &DifferentialForm) -> DifferentialForm {
    let n = omega.dimension();
    let grade = omega.grade() + 1;
    let mut acc = AlternatingTensor::zeros(n, grade, Variance::Covector);
    if grade > n {
        return DifferentialForm::from_tensor(acc, omega.domain.clone());
    }
    for i in 0..n {
        let di = omega.components.map(|c| c.partial(i));
        if di.is_zero() {
            continue;
        }
        let dxi = AlternatingTensor::basis(MultiIndex::from_mask(1 << i, n), Variance::Covector);
        let term = dxi.wedge(&di).expect("shapes agree");
        acc = acc.add(&term).expect("shapes agree");
    }
    DifferentialForm::from_tensor(acc, omega.domain.clone())
}

/// `j(ω) Z` as a multivector field of grade `m − k` (zero grade 0 if `k > m`).
pub fn interior_by_form_field(omega: &DifferentialForm, z: &MultiVectorField) -> Result<MultiVectorField> {
    let t = AlternatingTensor::interior_by_form(&omega.components, z.components())?;
    MultiVectorField::from_components(t, z.domain())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{random_form, random_multivector, random_points, random_vector_field, FieldKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cube(n: usize) -> ChartDomain {
        ChartDomain::cube(n, -1.0, 1.0).unwrap()
    }

    fn max_diff(a: &AlternatingTensor<f64>, b: &AlternatingTensor<f64>) -> f64 {
        a.sub(b).unwrap().max_abs()
    }

    #[test]
    fn domain_validation() {
        assert!(ChartDomain::new(vec![0.0], vec![0.0]).is_err());
        assert!(ChartDomain::cube(2, 0.0, 1.0).unwrap().with_margin(0.5).is_err());
        let d = ChartDomain::cube(2, 0.0, 1.0).unwrap().with_margin(0.1).unwrap();
        assert_eq!(d.shrunk().lower(), &[0.1, 0.1]);
        assert!(!d.contains(&[1.5, 0.0]));
        let x = ScalarField::parse("x0", &d).unwrap();
        assert!(matches!(x.eval(&[2.0, 0.0]), Err(Error::OutsideDomain { .. })));
    }

    #[test]
    fn d_of_coordinate_one_form() {
        let d = cube(3);
        let w = DifferentialForm::parse(1, &[(&[1], "x0")], &d).unwrap();
        let dw = exterior_derivative(&w).eval(&[0.2, 0.3, 0.4]).unwrap();
        let expected = AlternatingTensor::basis(MultiIndex::new(&[0, 1], 3).unwrap(), Variance::Covector);
        assert_eq!(max_diff(&dw, &expected), 0.0);
    }

    #[test]
    fn d_of_function_is_gradient() {
        let d = cube(3);
        let f = ScalarField::parse("x0*x1^2 + sin(x2)", &d).unwrap();
        let w = DifferentialForm::new(0, vec![f.expression().clone()], &d).unwrap();
        let p = [0.3, -0.4, 0.8];
        let (_, g) = f.eval_grad(&p).unwrap();
        let dw = exterior_derivative(&w).eval(&p).unwrap();
        for i in 0..3 {
            assert!((dw.components()[i] - g[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn top_form_derivative_is_zero() {
        let d = cube(2);
        let w = DifferentialForm::parse(2, &[(&[0, 1], "x0*x1")], &d).unwrap();
        let dw = exterior_derivative(&w);
        assert_eq!(dw.grade(), 3);
        assert!(dw.components().components().is_empty());
    }

    #[test]
    fn d_squared_vanishes() {
        let d = cube(4);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let w = random_form(&mut rng, &d, 1, FieldKind::Mixed);
            let ddw = exterior_derivative(&exterior_derivative(&w));
            for p in random_points(&mut rng, &d, 50) {
                assert!(ddw.eval(&p).unwrap().max_abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bracket_examples() {
        let d = cube(3);
        let e1 = VectorField::basis(0, &d);
        let e2 = VectorField::basis(1, &d);
        let b = lie_bracket(&e1, &e2).unwrap();
        assert!(b.components().iter().all(Expression::is_zero));
        let x1e1 = VectorField::parse(&["x1", "0", "0"], &d).unwrap();
        let b = lie_bracket(&x1e1, &e2).unwrap().eval(&[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(b, vec![-1.0, 0.0, 0.0]);
    }

    #[test]
    fn jacobi_identity() {
        let d = cube(3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f: Vec<VectorField> = (0..3)
            .map(|_| random_vector_field(&mut rng, &d, FieldKind::Polynomial))
            .collect();
        let br = |a: &VectorField, b: &VectorField| lie_bracket(a, b).unwrap();
        let j = br(&br(&f[0], &f[1]), &f[2])
            .add(&br(&br(&f[1], &f[2]), &f[0]))
            .add(&br(&br(&f[2], &f[0]), &f[1]));
        for p in random_points(&mut rng, &d, 50) {
            let v = j.eval(&p).unwrap();
            assert!(v.iter().all(|c| c.abs() <= 1e-10), "{v:?}");
        }
    }

    #[test]
    fn cartan_formula_for_one_forms() {
        let d = cube(3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let w = random_form(&mut rng, &d, 1, FieldKind::Mixed);
            let x = random_vector_field(&mut rng, &d, FieldKind::Mixed);
            let y = random_vector_field(&mut rng, &d, FieldKind::Mixed);
            let wx = w.pair(&x.to_multivector()).unwrap();
            let wy = w.pair(&y.to_multivector()).unwrap();
            let wxy = w.pair(&lie_bracket(&x, &y).unwrap().to_multivector()).unwrap();
            let xy = MultiVectorField::decomposable(Expression::one(), vec![x.clone(), y.clone()], &d);
            let lhs = exterior_derivative(&w).pair(&xy).unwrap();
            let rhs = x.apply(&wy) - y.apply(&wx) - wxy;
            for p in random_points(&mut rng, &d, 20) {
                let (a, b) = (lhs.eval(&p).unwrap(), rhs.eval(&p).unwrap());
                assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn lie_derivative_examples() {
        let d = cube(3);
        let e = |i| VectorField::basis(i, &d);
        let z = MultiVectorField::decomposable(Expression::one(), vec![e(1), e(2)], &d);
        let l = lie_derivative(&e(0), &z).unwrap();
        assert!(l.eval(&[0.1, 0.2, 0.3]).unwrap().is_zero());
    }

    #[test]
    fn lie_derivative_product_rule() {
        let d = cube(3);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = random_vector_field(&mut rng, &d, FieldKind::Mixed);
        let z = random_multivector(&mut rng, &d, 2, 1, FieldKind::Mixed);
        let f = Expression::parse("x0*x2 + cos(x1)", 3).unwrap();
        let lhs = lie_derivative(&x, &z.scale(&f)).unwrap();
        let rhs = z.scale(&x.apply(&f)).add(&lie_derivative(&x, &z).unwrap().scale(&f)).unwrap();
        for p in random_points(&mut rng, &d, 20) {
            let diff = max_diff(&lhs.eval(&p).unwrap(), &rhs.eval(&p).unwrap());
            assert!(diff < 1e-10);
        }
    }

    #[test]
    fn lie_derivative_matches_dual_pairing() {
        // For constant ω: ⟨ω, L_X Z⟩ = X⟨ω, Z⟩ − ⟨L_X ω, Z⟩ and L_X ω = d i_X ω.
        let d = cube(3);
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let x1e1 = VectorField::parse(&["x1", "0", "0"], &d).unwrap();
        let cases = vec![
            (
                x1e1.clone(),
                MultiVectorField::decomposable(
                    Expression::one(),
                    vec![VectorField::basis(0, &d), VectorField::basis(1, &d)],
                    &d,
                ),
            ),
            (
                random_vector_field(&mut rng, &d, FieldKind::Mixed),
                random_multivector(&mut rng, &d, 2, 2, FieldKind::Mixed),
            ),
        ];
        for (x, z) in cases {
            let omega = DifferentialForm::parse(2, &[(&[0, 1], "1.5"), (&[1, 2], "-0.5"), (&[0, 2], "2")], &d).unwrap();
            let lxw = exterior_derivative(&omega.interior(&x.to_multivector()).unwrap());
            let lhs = omega.pair(&lie_derivative(&x, &z).unwrap()).unwrap();
            let rhs = x.apply(&omega.pair(&z).unwrap()) - lxw.pair(&z).unwrap();
            for p in random_points(&mut rng, &d, 20) {
                let (a, b) = (lhs.eval(&p).unwrap(), rhs.eval(&p).unwrap());
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn evaluation_views() {
        let d = cube(3);
        let e1e2 = MultiVectorField::decomposable(
            Expression::one(),
            vec![VectorField::basis(0, &d), VectorField::basis(1, &d)],
            &d,
        );
        let a = e1e2.eval(&[0.5, 0.5, 0.5]).unwrap();
        let b = e1e2.eval(&[-0.5, 0.1, 0.9]).unwrap();
        assert_eq!(a, b);
        let x0e1 = VectorField::parse(&["x0", "0", "0"], &d).unwrap();
        let big = ChartDomain::cube(3, -3.0, 3.0).unwrap();
        let z = MultiVectorField::decomposable(
            Expression::one(),
            vec![x0e1, VectorField::basis(1, &d)],
            &d,
        )
        .restrict(&big);
        assert_eq!(z.eval(&[2.0, 0.0, 0.0]).unwrap(), a.scale(2.0));

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for k in 0..=3 {
            let z = random_multivector(&mut rng, &d, k, 2, FieldKind::Mixed);
            for p in random_points(&mut rng, &d, 10) {
                let diff = max_diff(&z.eval(&p).unwrap(), &z.eval_components(&p).unwrap());
                assert!(diff <= 1e-12);
            }
        }
    }

    #[test]
    fn d_commutes_with_restriction() {
        let d = cube(3);
        let small = ChartDomain::cube(3, -0.5, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = random_form(&mut rng, &d, 1, FieldKind::Mixed);
        let a = exterior_derivative(&w).restrict(&small);
        let b = exterior_derivative(&w.restrict(&small));
        for p in random_points(&mut rng, &small, 10) {
            assert_eq!(a.eval(&p).unwrap(), b.eval(&p).unwrap());
        }
    }
}
