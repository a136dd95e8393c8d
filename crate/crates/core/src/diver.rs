//! Divergence of multivector fields with respect to a volume form
//! `Ω = ρ dx^0 ∧ ⋯ ∧ dx^{n-1}`, and residual checks for the identities that
//! tie it to the exterior algebra.
//!
//! Two independent operators are provided. [`div_strong`] solves
//! `i_{div Z} Ω = (−1)^{k−1} d i_Z Ω` componentwise through the flat/sharp
//! correspondence; [`div_recursive`] peels one factor at a time off each
//! decomposable term with `div(X∧W) = div X·W − X∧div W + L_X W`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exterior::{interior_by_form_permutation_sum, AlternatingTensor, MultiIndex, Variance};
use crate::expr::Expression;
use crate::fields::{
    exterior_derivative, interior_by_form_field, lie_derivative, ChartDomain, DifferentialForm,
    MultiVectorField, ScalarField, Term, VectorField,
};
use crate::quad::{integrate, BumpForm, Integral, IntegrationDomain, QuadratureSpec};

/// Density `ρ > 0` with its volume form and measure.
#[derive(Debug, Clone)]
pub struct VolumeStructure {
    density: ScalarField,
}

impl VolumeStructure {
    /// Validates positivity of `ρ` on a `grid^n` sample lattice of the box.
    pub fn new(density: ScalarField, grid: usize) -> Result<VolumeStructure> {
        let d = density.domain();
        let n = d.dimension();
        let grid = grid.max(2);
        let total = grid.pow(n as u32);
        for mut flat in 0..total {
            let p: Vec<f64> = (0..n)
                .map(|i| {
                    let j = flat % grid;
                    flat /= grid;
                    d.lower()[i] + (d.upper()[i] - d.lower()[i]) * j as f64 / (grid - 1) as f64
                })
                .collect();
            let v = density.eval(&p)?;
            if !(v > 0.0) {
                return Err(Error::NonPositiveDensity { point: p, value: v });
            }
        }
        Ok(VolumeStructure { density })
    }

    /// Checks positivity only at the given points, for densities that are
    /// meaningful on part of the box (near a surface, say).
    pub fn on_samples(density: ScalarField, points: &[Vec<f64>]) -> Result<VolumeStructure> {
        for p in points {
            let v = density.eval(p)?;
            if !(v > 0.0) {
                return Err(Error::NonPositiveDensity { point: p.clone(), value: v });
            }
        }
        Ok(VolumeStructure { density })
    }

    /// `ρ ≡ 1`.
    pub fn lebesgue(domain: &ChartDomain) -> VolumeStructure {
        VolumeStructure {
            density: ScalarField::new(Expression::one(), domain.clone()).expect("constant"),
        }
    }

    pub fn density(&self) -> &ScalarField {
        &self.density
    }

    pub fn domain(&self) -> &ChartDomain {
        self.density.domain()
    }

    pub fn dimension(&self) -> usize {
        self.domain().dimension()
    }

    pub fn rho(&self, p: &[f64]) -> Result<f64> {
        self.density.eval(p)
    }

    /// `Ω = ρ dx^0 ∧ ⋯ ∧ dx^{n−1}`.
    pub fn volume_form(&self) -> DifferentialForm {
        let n = self.dimension();
        DifferentialForm::new(n, vec![self.density.expression().clone()], self.domain())
            .expect("single top component")
    }

    /// `Ω` at a point, as a top-degree covector.
    pub fn volume_at(&self, p: &[f64]) -> Result<AlternatingTensor<f64>> {
        let n = self.dimension();
        AlternatingTensor::from_components(n, n, Variance::Covector, vec![self.rho(p)?])
    }

    /// `∫ f dμ = ∫ f ρ dx` over `region`.
    pub fn integrate(
        &self,
        f: &(impl Fn(&[f64]) -> Result<f64> + Sync),
        region: &IntegrationDomain,
        q: &QuadratureSpec,
    ) -> Result<Integral> {
        integrate(&|p: &[f64]| Ok(f(p)? * self.rho(p)?), region, q)
    }
}

/// Pointwise divergence of a vector field from its 1-jet and the density's:
/// `tr(DX) + X·∇ρ/ρ`.
pub fn divergence_from_jet(value: &[f64], jacobian: &[Vec<f64>], rho: f64, grad_rho: &[f64]) -> f64 {
    let trace: f64 = (0..value.len()).map(|i| jacobian[i][i]).sum();
    let drift: f64 = value.iter().zip(grad_rho).map(|(x, g)| x * g).sum();
    trace + drift / rho
}

/// `div X = Σ_i ∂_i X^i + X^i ∂_i ρ / ρ` as a scalar field.
pub fn div_vector(x: &VectorField, vs: &VolumeStructure) -> ScalarField {
    let rho = vs.density.expression();
    let mut acc = Expression::zero();
    for (i, c) in x.components().iter().enumerate() {
        acc = acc + c.partial(i);
        let dr = rho.partial(i);
        if !dr.is_zero() {
            acc = acc + c * &dr / rho.clone();
        }
    }
    ScalarField::new(acc, vs.domain().clone()).expect("same chart")
}

fn sign(e: usize) -> f64 {
    if e.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

fn check_grade(z: &MultiVectorField) -> Result<()> {
    if z.grade() == 0 {
        return Err(Error::Grade("divergence of a grade-0 field is undefined".into()));
    }
    Ok(())
}

/// `div Z = sharp((−1)^{k−1} d flat(Z))`, i.e. `i_{div Z} Ω = (−1)^{k−1} d i_Z Ω`.
pub fn div_strong(z: &MultiVectorField, vs: &VolumeStructure) -> Result<MultiVectorField> {
    check_grade(z)?;
    let k = z.grade();
    let rho = vs.density.expression();
    let flat = AlternatingTensor::omega_flat(z.components(), rho)?;
    let d = exterior_derivative(&DifferentialForm::from_tensor(flat, z.domain().clone()));
    let eta = d.components().scale(sign(k - 1));
    let out = MultiVectorField::from_components(AlternatingTensor::omega_sharp(&eta, rho)?, z.domain())?;
    assert_eq!(out.grade(), k - 1, "divergence lowers the grade by one");
    Ok(out)
}

/// `div Z` by the recursion `div(X∧W) = div X·W − X∧div W + L_X W` on each
/// decomposable term, with `X = f·Z_1` and `W = Z_2∧…∧Z_k`.
pub fn div_recursive(z: &MultiVectorField, vs: &VolumeStructure) -> Result<MultiVectorField> {
    check_grade(z)?;
    let mut out = MultiVectorField::zero(z.grade() - 1, z.domain());
    for t in z.terms() {
        out = out.add(&div_decomposable(&t.coefficient, &t.factors, vs)?)?;
    }
    assert_eq!(out.grade(), z.grade() - 1, "divergence lowers the grade by one");
    Ok(out)
}

fn div_decomposable(coefficient: &Expression, factors: &[VectorField], vs: &VolumeStructure) -> Result<MultiVectorField> {
    let domain = vs.domain();
    let x = factors[0].scale(coefficient);
    let div_x = div_vector(&x, vs).expression().clone();
    if factors.len() == 1 {
        return MultiVectorField::new(
            0,
            vec![Term {
                coefficient: div_x,
                factors: Vec::new(),
            }],
            domain,
        );
    }
    let rest = &factors[1..];
    let w = MultiVectorField::decomposable(Expression::one(), rest.to_vec(), domain);
    let div_w = div_decomposable(&Expression::one(), rest, vs)?;
    w.scale(&div_x)
        .add(&div_w.wedge_left(&x).negate())?
        .add(&lie_derivative(&x, &w)?)
}

/// Outcome of a pointwise identity sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub identity: String,
    pub samples: usize,
    pub max_abs_residual: f64,
    pub max_rel_residual: f64,
    /// Point achieving `max_rel_residual`.
    pub worst_point: Vec<f64>,
    /// Scale used for the relative residual at the worst point.
    pub worst_scale: f64,
    pub tolerance: Option<f64>,
    pub passed: Option<bool>,
}

impl IdentityReport {
    /// Record the tolerance on the relative residual and the verdict.
    pub fn judge(mut self, tolerance: f64) -> IdentityReport {
        self.tolerance = Some(tolerance);
        self.passed = Some(self.max_rel_residual <= tolerance);
        self
    }

    pub fn passed(&self) -> bool {
        self.passed.unwrap_or(false)
    }

    /// Combine two sweeps of the same identity.
    pub fn merge(mut self, other: &IdentityReport) -> IdentityReport {
        self.samples += other.samples;
        self.max_abs_residual = self.max_abs_residual.max(other.max_abs_residual);
        if other.max_rel_residual > self.max_rel_residual {
            self.max_rel_residual = other.max_rel_residual;
            self.worst_point = other.worst_point.clone();
            self.worst_scale = other.worst_scale;
        }
        self
    }
}

/// One point's residual and the scale it is measured against.
pub(crate) struct Sample {
    pub(crate) abs: f64,
    pub(crate) scale: f64,
}

/// Evaluate `f` at every point (in parallel) and reduce in point order.
pub(crate) fn sweep(name: &str, points: &[Vec<f64>], f: impl Fn(&[f64]) -> Result<Sample> + Sync) -> Result<IdentityReport> {
    let samples: Vec<Result<Sample>> = points.par_iter().map(|p| f(p)).collect();
    let mut report = IdentityReport {
        identity: name.to_string(),
        samples: points.len(),
        max_abs_residual: 0.0,
        max_rel_residual: 0.0,
        worst_point: points.first().cloned().unwrap_or_default(),
        worst_scale: 0.0,
        tolerance: None,
        passed: None,
    };
    for (p, s) in points.iter().zip(samples) {
        let s = s?;
        let rel = if s.scale > 0.0 { s.abs / s.scale } else { s.abs };
        report.max_abs_residual = report.max_abs_residual.max(s.abs);
        if rel > report.max_rel_residual || (report.worst_scale == 0.0 && s.scale > 0.0 && rel == 0.0) {
            report.max_rel_residual = rel;
            report.worst_point = p.clone();
            report.worst_scale = s.scale;
        }
    }
    Ok(report)
}

fn diff_norm(a: &AlternatingTensor<f64>, b: &AlternatingTensor<f64>) -> Result<f64> {
    Ok(a.sub(b)?.norm())
}

/// `Σ_I |ω_I| |Z^I|`, the magnitude of the pairing's individual products.
fn pairing_magnitude(omega: &AlternatingTensor<f64>, z: &AlternatingTensor<f64>) -> f64 {
    omega
        .components()
        .iter()
        .zip(z.components())
        .map(|(a, b)| (a * b).abs())
        .sum()
}

/// `ω ∧ i_Z Ω = ⟨ω, Z⟩ Ω` for a `k`-form and a `k`-vector field.
pub fn check_lemma1(
    omega: &DifferentialForm,
    z: &MultiVectorField,
    vs: &VolumeStructure,
    points: &[Vec<f64>],
) -> Result<IdentityReport> {
    if omega.grade() != z.grade() {
        return Err(Error::Grade(format!(
            "lemma 1 needs equal grades, got {} and {}",
            omega.grade(),
            z.grade()
        )));
    }
    sweep("lemma1", points, |p| {
        let w = omega.eval(p)?;
        let zv = z.eval(p)?;
        let vol = vs.volume_at(p)?;
        let lhs = w.wedge(&AlternatingTensor::interior_by_multivector(&vol, &zv)?)?;
        let rhs = vol.scale(AlternatingTensor::pair(&w, &zv)?);
        let rho = vol.components()[0];
        Ok(Sample {
            abs: diff_norm(&lhs, &rhs)?,
            scale: lhs.norm().max(rhs.norm()).max(rho * pairing_magnitude(&w, &zv)),
        })
    })
}

/// `i_{j(ω)X} Ω = (−1)^{k(m+1)} ω ∧ i_X Ω` for a `k`-form and an
/// `m`-vector field, `k ≤ m`. The left side applies `j` through its signed
/// permutation sum on each decomposable term; the right side uses the
/// componentwise contraction.
pub fn check_aux(
    omega: &DifferentialForm,
    x: &MultiVectorField,
    vs: &VolumeStructure,
    points: &[Vec<f64>],
) -> Result<IdentityReport> {
    let (k, m) = (omega.grade(), x.grade());
    if k > m {
        return Err(Error::Grade(format!("auxiliary formula needs k ≤ m, got k={k}, m={m}")));
    }
    let n = vs.dimension();
    sweep("auxiliary", points, |p| {
        let w = omega.eval(p)?;
        let vol = vs.volume_at(p)?;
        let mut jx = AlternatingTensor::zeros(n, m - k, Variance::Vector);
        for t in x.terms() {
            let c = t.coefficient.eval(p)?;
            let vectors = t
                .factors
                .iter()
                .map(|f| f.eval(p))
                .collect::<Result<Vec<_>>>()?;
            jx = jx.add(&interior_by_form_permutation_sum(&w, &vectors)?.scale(c))?;
        }
        let lhs = AlternatingTensor::interior_by_multivector(&vol, &jx)?;
        let xv = x.eval(p)?;
        let rhs = w
            .wedge(&AlternatingTensor::interior_by_multivector(&vol, &xv)?)?
            .scale(sign(k * (m + 1)));
        let rho = vol.components()[0];
        Ok(Sample {
            abs: diff_norm(&lhs, &rhs)?,
            scale: lhs.norm().max(rhs.norm()).max(rho * w.norm() * xv.norm()),
        })
    })
}

/// `div(j(ω)Z) = (−1)^k j(dω)Z + (−1)^k j(ω) div Z` for `k < m`.
pub fn check_leibniz_j(
    omega: &DifferentialForm,
    z: &MultiVectorField,
    vs: &VolumeStructure,
    points: &[Vec<f64>],
) -> Result<IdentityReport> {
    let (k, m) = (omega.grade(), z.grade());
    if k >= m {
        return Err(Error::Grade(format!("Leibniz rule for j needs k < m, got k={k}, m={m}")));
    }
    let lhs = div_strong(&interior_by_form_field(omega, z)?, vs)?;
    let first = interior_by_form_field(&exterior_derivative(omega), z)?;
    let second = interior_by_form_field(omega, &div_strong(z, vs)?)?;
    let s = sign(k);
    sweep("leibniz-j", points, |p| {
        let l = lhs.eval_components(p)?;
        let a = first.eval_components(p)?.scale(s);
        let b = second.eval_components(p)?.scale(s);
        let r = a.add(&b)?;
        Ok(Sample {
            abs: diff_norm(&l, &r)?,
            scale: l.norm().max(a.norm()).max(b.norm()),
        })
    })
}

/// Sum over components and axes of `|∂_i Z^I| + |Z^I ∂_i ρ| / ρ`: the
/// individual terms of the coordinate divergence formula.
fn divergence_magnitude(z: &MultiVectorField, vs: &VolumeStructure, p: &[f64]) -> Result<f64> {
    let (rho, grad_rho) = vs.density.eval_grad(p)?;
    let mut total = 0.0;
    for c in z.components().components() {
        let (v, g) = c.eval_grad(p)?;
        for (gi, ri) in g.iter().zip(&grad_rho) {
            total += gi.abs() + (v * ri).abs() / rho;
        }
    }
    Ok(total)
}

/// `div_strong ≡ div_recursive` at the sample points.
pub fn check_operator_agreement(
    z: &MultiVectorField,
    vs: &VolumeStructure,
    points: &[Vec<f64>],
) -> Result<IdentityReport> {
    let strong = div_strong(z, vs)?;
    let recursive = div_recursive(z, vs)?;
    sweep("operator-agreement", points, |p| {
        let a = strong.eval_components(p)?;
        let b = recursive.eval(p)?;
        Ok(Sample {
            abs: diff_norm(&a, &b)?,
            scale: a.norm().max(b.norm()).max(divergence_magnitude(z, vs, p)?),
        })
    })
}

/// `div X` of a vector field against the coordinate oracle
/// `(1/ρ) Σ_i ∂_i(ρ X^i)`, differentiating each product by forward mode.
pub fn check_div_vector(x: &VectorField, vs: &VolumeStructure, points: &[Vec<f64>]) -> Result<IdentityReport> {
    let div = div_vector(x, vs);
    let rho = vs.density.expression();
    let fluxes: Vec<Expression> = x.components().iter().map(|c| rho * c).collect();
    sweep("div-vector", points, |p| {
        let a = div.eval(p)?;
        let mut sum = 0.0;
        let mut mag = 0.0;
        for (i, f) in fluxes.iter().enumerate() {
            let (_, g) = f.eval_grad(p)?;
            sum += g[i];
            mag += g[i].abs();
        }
        let r = vs.rho(p)?;
        let b = sum / r;
        Ok(Sample {
            abs: (a - b).abs(),
            scale: a.abs().max(b.abs()).max(mag / r),
        })
    })
}

/// Both integrals of the weak identity `∫⟨dω, Z⟩dμ + ∫⟨ω, W⟩dμ = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakResidual {
    /// `|∫⟨dω, Z⟩dμ + ∫⟨ω, W⟩dμ|`.
    pub residual: f64,
    /// Sum of the two quadrature error estimates.
    pub error: f64,
    pub flux: Integral,
    pub candidate: Integral,
}

/// Weak-divergence residual of candidate `W` for `Z`, tested against a form
/// supported in a bump ball strictly inside the chart.
pub fn weak_div_residual(
    z: &MultiVectorField,
    w: &MultiVectorField,
    omega: &BumpForm,
    vs: &VolumeStructure,
    q: &QuadratureSpec,
) -> Result<WeakResidual> {
    let k = z.grade();
    if k == 0 || w.grade() + 1 != k || omega.form.grade() + 1 != k {
        return Err(Error::Grade(format!(
            "weak divergence needs grades (k, k−1, k−1), got ({k}, {}, {})",
            w.grade(),
            omega.form.grade()
        )));
    }
    let b = &omega.bump;
    let depth = vs.domain().depth(&b.center);
    if depth < b.radius * (1.0 + crate::quad::SUPPORT_SLACK) {
        return Err(Error::Precondition(format!(
            "test form support (center {:?}, radius {}) touches the domain boundary",
            b.center, b.radius
        )));
    }
    let dw = exterior_derivative(&omega.form);
    let flux_density = dw.pair(z)?;
    let cand_density = omega.form.pair(w)?;
    let region = b.support();
    let flux = vs.integrate(&|p: &[f64]| Ok(flux_density.eval(p)?), &region, q)?;
    let candidate = vs.integrate(&|p: &[f64]| Ok(cand_density.eval(p)?), &region, q)?;
    Ok(WeakResidual {
        residual: (flux.value + candidate.value).abs(),
        error: flux.error + candidate.error,
        flux,
        candidate,
    })
}

/// The constant basis field `e_0 ∧ … ∧ e_{g−1}` (the scalar 1 for `g = 0`),
/// used to corrupt a divergence candidate.
pub fn first_basis_field(grade: usize, domain: &ChartDomain) -> Result<MultiVectorField> {
    let idx = MultiIndex::new(&(0..grade).collect::<Vec<_>>(), domain.dimension())?;
    let t = AlternatingTensor::basis(idx, Variance::Vector);
    MultiVectorField::from_components(t, domain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{make_bump_form, Bump};
    use crate::sampling::{random_form, random_multivector, random_points, random_vector_field, FieldKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cube(n: usize) -> ChartDomain {
        ChartDomain::cube(n, -1.0, 1.0).unwrap()
    }

    fn gaussian(d: &ChartDomain, axes: usize) -> VolumeStructure {
        let mut src = String::from("exp(-(");
        for i in 0..axes {
            if i > 0 {
                src.push_str(" + ");
            }
            src.push_str(&format!("x{i}^2"));
        }
        src.push_str(")/2)");
        VolumeStructure::new(ScalarField::parse(&src, d).unwrap(), 5).unwrap()
    }

    fn e(i: usize, d: &ChartDomain) -> VectorField {
        VectorField::basis(i, d)
    }

    #[test]
    fn positivity_is_checked() {
        let d = cube(2);
        let bad = ScalarField::parse("x0", &d).unwrap();
        assert!(matches!(
            VolumeStructure::new(bad, 3),
            Err(Error::NonPositiveDensity { .. })
        ));
    }

    #[test]
    fn vector_divergence_examples() {
        let d = cube(3);
        let lebesgue = VolumeStructure::lebesgue(&d);
        let radial = VectorField::parse(&["x0", "x1", "x2"], &d).unwrap();
        let div = div_vector(&radial, &lebesgue);
        assert_eq!(div.eval(&[0.3, -0.2, 0.9]).unwrap(), 3.0);

        let g = gaussian(&d, 2);
        let div = div_vector(&e(0, &d), &g);
        for p in [[0.5, 0.1, 0.0], [-0.7, 0.4, 0.2]] {
            assert!((div.eval(&p).unwrap() + p[0]).abs() < 1e-15);
        }
        let c = VectorField::parse(&["1.5", "-2", "0.25"], &d).unwrap();
        assert_eq!(div_vector(&c, &lebesgue).eval(&[0.1, 0.1, 0.1]).unwrap(), 0.0);
    }

    #[test]
    fn vector_divergence_matches_flux_oracle() {
        let d = cube(3);
        let g = gaussian(&d, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let x = random_vector_field(&mut rng, &d, FieldKind::Mixed);
            let pts = random_points(&mut rng, &d, 20);
            let r = check_div_vector(&x, &g, &pts).unwrap();
            assert!(r.max_rel_residual < 1e-13, "{r:?}");
        }
    }

    #[test]
    fn jet_divergence_matches_symbolic() {
        let d = cube(3);
        let g = gaussian(&d, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_vector_field(&mut rng, &d, FieldKind::Mixed);
        let div = div_vector(&x, &g);
        for p in random_points(&mut rng, &d, 10) {
            let (v, j) = x.eval_jet(&p).unwrap();
            let (r, gr) = g.density().eval_grad(&p).unwrap();
            let a = divergence_from_jet(&v, &j, r, &gr);
            assert!((a - div.eval(&p).unwrap()).abs() < 1e-13);
        }
    }

    #[test]
    fn strong_divergence_examples() {
        let d = cube(3);
        let lebesgue = VolumeStructure::lebesgue(&d);
        let p = [0.2, -0.3, 0.4];

        let e12 = MultiVectorField::decomposable(Expression::one(), vec![e(0, &d), e(1, &d)], &d);
        assert!(div_strong(&e12, &lebesgue).unwrap().eval(&p).unwrap().is_zero());

        let x0e1 = VectorField::parse(&["x0", "0", "0"], &d).unwrap();
        let z = MultiVectorField::decomposable(Expression::one(), vec![x0e1, e(1, &d)], &d);
        let e2 = e(1, &d).to_multivector().eval(&p).unwrap();
        let strong = div_strong(&z, &lebesgue).unwrap();
        let recursive = div_recursive(&z, &lebesgue).unwrap();
        assert_eq!(strong.grade(), 1);
        assert_eq!(strong.eval(&p).unwrap(), e2);
        assert_eq!(recursive.eval(&p).unwrap(), e2);

        let e123 = MultiVectorField::decomposable(Expression::one(), vec![e(0, &d), e(1, &d), e(2, &d)], &d);
        let r = div_recursive(&e123, &lebesgue).unwrap();
        assert_eq!(r.grade(), 2);
        assert!(r.eval(&p).unwrap().is_zero());

        assert!(div_strong(&MultiVectorField::zero(0, &d), &lebesgue).is_err());
    }

    #[test]
    fn strong_divergence_of_vectors_is_div_vector() {
        let d = cube(4);
        let g = gaussian(&d, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..5 {
            let x = random_vector_field(&mut rng, &d, FieldKind::Mixed);
            let s = div_strong(&x.to_multivector(), &g).unwrap();
            let v = div_vector(&x, &g);
            for p in random_points(&mut rng, &d, 10) {
                let a = s.eval(&p).unwrap().components()[0];
                let b = v.eval(&p).unwrap();
                assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn alternative_contraction_convention() {
        // With i' = (−1)^{m(m−1)/2} i the defining equation reads
        // i'_{div Z} Ω = d i'_Z Ω.
        let d = cube(4);
        let g = gaussian(&d, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        for k in 1..=4 {
            let z = random_multivector(&mut rng, &d, k, 1, FieldKind::Polynomial);
            let div = div_strong(&z, &g).unwrap();
            let prime = |m: usize| sign(m * (m.saturating_sub(1)) / 2);
            let omega = g.volume_form();
            let lhs = omega.interior(&div).unwrap().scale(&Expression::constant(prime(k - 1)));
            let rhs = exterior_derivative(&omega.interior(&z).unwrap().scale(&Expression::constant(prime(k))));
            for p in random_points(&mut rng, &d, 10) {
                let diff = lhs.eval(&p).unwrap().sub(&rhs.eval(&p).unwrap()).unwrap().norm();
                assert!(diff < 1e-12, "k={k}: {diff}");
            }
        }
    }

    #[test]
    fn lemma1_examples() {
        let d = cube(3);
        let lebesgue = VolumeStructure::lebesgue(&d);
        let pts = vec![vec![0.1, 0.2, 0.3]];
        let w = DifferentialForm::parse(2, &[(&[0, 1], "1")], &d).unwrap();
        let z = MultiVectorField::decomposable(Expression::one(), vec![e(0, &d), e(1, &d)], &d);
        assert_eq!(check_lemma1(&w, &z, &lebesgue, &pts).unwrap().max_abs_residual, 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let d4 = cube(4);
        let g = gaussian(&d4, 4);
        for k in [2, 4] {
            let w = random_form(&mut rng, &d4, k, FieldKind::Mixed);
            let z = random_multivector(&mut rng, &d4, k, 2, FieldKind::Mixed);
            let pts = random_points(&mut rng, &d4, 100);
            let r = check_lemma1(&w, &z, &g, &pts).unwrap().judge(1e-10);
            assert!(r.passed(), "{r:?}");
        }
    }

    #[test]
    fn auxiliary_formula_examples() {
        let d = cube(3);
        let lebesgue = VolumeStructure::lebesgue(&d);
        let pts = vec![vec![0.1, 0.2, 0.3]];
        let w = DifferentialForm::parse(1, &[(&[0], "1")], &d).unwrap();
        let x = MultiVectorField::decomposable(Expression::one(), vec![e(0, &d), e(1, &d)], &d);
        assert_eq!(check_aux(&w, &x, &lebesgue, &pts).unwrap().max_abs_residual, 0.0);

        let c = DifferentialForm::parse(0, &[(&[], "2.5")], &d).unwrap();
        assert_eq!(check_aux(&c, &x, &lebesgue, &pts).unwrap().max_abs_residual, 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let d4 = cube(4);
        let g = gaussian(&d4, 4);
        for (k, m) in [(1, 2), (2, 3), (1, 4), (3, 3)] {
            let w = random_form(&mut rng, &d4, k, FieldKind::Mixed);
            let x = random_multivector(&mut rng, &d4, m, 2, FieldKind::Mixed);
            let pts = random_points(&mut rng, &d4, 30);
            let r = check_aux(&w, &x, &g, &pts).unwrap().judge(1e-10);
            assert!(r.passed(), "{r:?}");
        }
        assert!(check_aux(&random_form(&mut rng, &d4, 3, FieldKind::Mixed), &x.restrict(&d), &lebesgue, &pts).is_err());
    }

    #[test]
    fn leibniz_examples() {
        let d = cube(3);
        let lebesgue = VolumeStructure::lebesgue(&d);
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let pts = random_points(&mut rng, &d, 20);

        let w = DifferentialForm::parse(1, &[(&[0], "1"), (&[2], "-2")], &d).unwrap();
        let z = MultiVectorField::decomposable(Expression::one(), vec![e(0, &d), e(1, &d)], &d);
        let r = check_leibniz_j(&w, &z, &lebesgue, &pts).unwrap();
        assert_eq!(r.max_abs_residual, 0.0);

        let w = DifferentialForm::parse(1, &[(&[0], "1")], &d).unwrap();
        let x0e1 = VectorField::parse(&["x0", "0", "0"], &d).unwrap();
        let z = MultiVectorField::decomposable(Expression::one(), vec![x0e1, e(1, &d)], &d);
        let r = check_leibniz_j(&w, &z, &lebesgue, &pts).unwrap();
        assert!(r.max_abs_residual <= 1e-10);

        let d4 = cube(4);
        let g = gaussian(&d4, 3);
        let w = random_form(&mut rng, &d4, 1, FieldKind::Mixed);
        let z = random_multivector(&mut rng, &d4, 3, 1, FieldKind::Mixed);
        let r = check_leibniz_j(&w, &z, &g, &random_points(&mut rng, &d4, 30)).unwrap().judge(1e-9);
        assert!(r.passed(), "{r:?}");

        assert!(check_leibniz_j(&random_form(&mut rng, &d4, 3, FieldKind::Mixed), &z, &g, &pts).is_err());
    }

    #[test]
    fn operators_agree_on_random_fields() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for n in 1..=4 {
            let d = cube(n);
            let g = gaussian(&d, n);
            for k in 1..=n {
                let z = random_multivector(&mut rng, &d, k, 2, FieldKind::Mixed);
                let pts = random_points(&mut rng, &d, 10);
                let r = check_operator_agreement(&z, &g, &pts).unwrap().judge(1e-8);
                assert!(r.passed(), "n={n} k={k}: {r:?}");
            }
        }
    }

    fn weak_setup(k: usize) -> (ChartDomain, VolumeStructure, MultiVectorField, BumpForm) {
        let d = cube(3);
        let g = gaussian(&d, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + k as u64);
        let z = random_multivector(&mut rng, &d, k, 1, FieldKind::Mixed);
        let bump = Bump::new(vec![0.1, -0.05, 0.0], 0.6, &d).unwrap();
        let w = bump.localize(&random_form(&mut rng, &d, k - 1, FieldKind::Polynomial));
        (d, g, z, w)
    }

    #[test]
    fn weak_identity_holds_for_strong_divergence() {
        let q = QuadratureSpec::gauss(16);
        for k in 1..=3 {
            let (_, g, z, w) = weak_setup(k);
            let div = div_strong(&z, &g).unwrap();
            let r = weak_div_residual(&z, &div, &w, &g, &q).unwrap();
            assert!(r.residual <= 1e-6 * (r.flux.value.abs() + 1.0), "k={k}: {r:?}");
            assert!(r.residual <= 10.0 * r.error, "k={k}: {r:?}");
        }
    }

    #[test]
    fn corrupted_candidate_is_detected() {
        let q = QuadratureSpec::gauss(16);
        for k in 1..=3 {
            let (d, g, z, _) = weak_setup(k);
            let div = div_strong(&z, &g).unwrap();
            let bad = div.add(&first_basis_field(k - 1, &d).unwrap()).unwrap();
            let sel = [MultiIndex::new(&(0..k - 1).collect::<Vec<_>>(), 3).unwrap()];
            let witness = make_bump_form(k - 1, vec![0.0; 3], 0.5, &sel, &d).unwrap();
            let r = weak_div_residual(&z, &bad, &witness, &g, &q).unwrap();
            assert!(r.residual > 1e-3, "k={k}: {r:?}");
        }
    }

    #[test]
    fn zero_field_has_zero_weak_residual() {
        let (d, g, _, w) = weak_setup(2);
        let z = MultiVectorField::zero(2, &d);
        let r = weak_div_residual(&z, &MultiVectorField::zero(1, &d), &w, &g, &QuadratureSpec::gauss(6)).unwrap();
        assert_eq!(r.residual, 0.0);
    }

    #[test]
    fn boundary_touching_support_is_rejected() {
        let (d, g, z, _) = weak_setup(1);
        let b = Bump {
            center: vec![0.8, 0.0, 0.0],
            radius: 0.5,
        };
        let w = b.localize(&DifferentialForm::parse(0, &[(&[], "1")], &d).unwrap());
        let div = div_strong(&z, &g).unwrap();
        assert!(matches!(
            weak_div_residual(&z, &div, &w, &g, &QuadratureSpec::gauss(4)),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn integration_by_parts_for_vector_fields() {
        // ∫ X u dμ = −∫ u div X dμ.
        let d = cube(2);
        let g = gaussian(&d, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let x = random_vector_field(&mut rng, &d, FieldKind::Mixed);
        let b = Bump::new(vec![0.2, 0.1], 0.7, &d).unwrap();
        let u = b.expression();
        let xu = x.apply(&u);
        let div = div_vector(&x, &g);
        let q = QuadratureSpec::gauss(20);
        let a = g.integrate(&|p: &[f64]| Ok(xu.eval(p)?), &b.support(), &q).unwrap();
        let c = g
            .integrate(&|p: &[f64]| Ok(u.eval(p)? * div.eval(p)?), &b.support(), &q)
            .unwrap();
        assert!((a.value + c.value).abs() < 1e-10, "{a:?} {c:?}");
    }
}
