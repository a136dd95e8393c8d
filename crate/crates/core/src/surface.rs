//! Elementary surfaces, flows of commuting transversal fields, tube and
//! surface measures, and the divergence identities relating a surface to the
//! tube swept out by the flows.
//!
//! Coordinates: a straightening map `g(s, t)` takes surface parameters
//! `s ∈ R^d` and transversal parameters `t ∈ R^m` (`d + m = n`) to the
//! ambient chart, with `S = g(·, 0)`. The tube map `ψ(t, s) = Φ_t(g(s, 0))`
//! parametrizes `Φ_{B_r} A`, so tube integrals are evaluated by change of
//! variables over `B_r × A`, with `Dψ` taken from the variational equation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::diver::{div_strong, div_vector, divergence_from_jet, sweep, IdentityReport, Sample, VolumeStructure};
use crate::error::{Error, Result};
use crate::exterior::{AlternatingTensor, Variance};
use crate::expr::Expression;
use crate::fields::{
    exterior_derivative, lie_bracket, ChartDomain, DifferentialForm, MultiVectorField, ScalarField, VectorField,
};
use crate::quad::{ball_volume, integrate, Integral, IntegrationDomain, QuadratureSpec};

/// Step of the fourth-order central differences taken in `s`.
const FD_STEP: f64 = 1e-3;

/// Relative tolerance for "exactly zero" geometric checks (tangency,
/// commutation, adaptedness, inverse maps).
const GEOMETRY_TOL: f64 = 1e-8;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().chain(b).copied().collect()
}

fn to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), rows.first().map_or(0, Vec::len), |i, j| rows[i][j])
}

/// Rectilinear grid with `per_axis` cell midpoints along each axis.
fn midpoint_grid(lower: &[f64], upper: &[f64], per_axis: usize) -> Vec<Vec<f64>> {
    let per_axis = per_axis.max(1);
    let n = lower.len();
    let total = per_axis.pow(n as u32);
    (0..total)
        .map(|mut flat| {
            (0..n)
                .map(|i| {
                    let j = flat % per_axis;
                    flat /= per_axis;
                    lower[i] + (upper[i] - lower[i]) * (j as f64 + 0.5) / per_axis as f64
                })
                .collect()
        })
        .collect()
}

/// `f'(s)` along axis `axis` by the five-point stencil.
fn central_difference(f: impl Fn(&[f64]) -> Result<Vec<f64>>, s: &[f64], axis: usize) -> Result<Vec<f64>> {
    let at = |k: f64| {
        let mut p = s.to_vec();
        p[axis] += k * FD_STEP;
        f(&p)
    };
    let (m2, m1, p1, p2) = (at(-2.0)?, at(-1.0)?, at(1.0)?, at(2.0)?);
    Ok((0..m1.len())
        .map(|i| (m2[i] - 8.0 * m1[i] + 8.0 * p1[i] - p2[i]) / (12.0 * FD_STEP))
        .collect())
}

/// The straightening isomorphism `g: (s, t) ↦ x` with its inverse, both as
/// expressions.
#[derive(Debug, Clone)]
pub struct StraighteningMap {
    forward: Vec<Expression>,
    inverse: Vec<Expression>,
    codimension: usize,
    chart: ChartDomain,
}

impl StraighteningMap {
    /// `forward[i]` is `x_i` in the variables `(s_0, …, s_{d−1}, t_0, …)`
    /// written `x0…x{n−1}`; `inverse` lists `s` then `t` as functions of `x`.
    /// `chart` is the `(s, t)` box on which `g` is an isomorphism.
    pub fn new(
        forward: Vec<Expression>,
        inverse: Vec<Expression>,
        codimension: usize,
        chart: ChartDomain,
    ) -> Result<StraighteningMap> {
        let n = chart.dimension();
        if forward.len() != n || inverse.len() != n {
            return Err(Error::Dimension(format!(
                "straightening map on a {n}-dimensional chart needs {n} forward and inverse components, got {} and {}",
                forward.len(),
                inverse.len()
            )));
        }
        if codimension == 0 || codimension >= n {
            return Err(Error::Invalid(format!("codimension must lie in 1..{n}, got {codimension}")));
        }
        for e in forward.iter().chain(&inverse) {
            if e.dimension() > n {
                return Err(Error::Dimension(format!("expression over {} variables in dimension {n}", e.dimension())));
            }
        }
        let forward = forward.into_iter().map(|e| e.with_dimension(n)).collect();
        let inverse = inverse.into_iter().map(|e| e.with_dimension(n)).collect();
        Ok(StraighteningMap {
            forward,
            inverse,
            codimension,
            chart,
        })
    }

    pub fn parse(forward: &[&str], inverse: &[&str], codimension: usize, chart: ChartDomain) -> Result<StraighteningMap> {
        let n = chart.dimension();
        let parse = |src: &[&str]| -> Result<Vec<Expression>> {
            src.iter().map(|s| Ok(Expression::parse(s, n)?)).collect()
        };
        StraighteningMap::new(parse(forward)?, parse(inverse)?, codimension, chart)
    }

    pub fn dimension(&self) -> usize {
        self.chart.dimension()
    }

    pub fn codimension(&self) -> usize {
        self.codimension
    }

    pub fn surface_dimension(&self) -> usize {
        self.dimension() - self.codimension
    }

    /// The `(s, t)` parameter box.
    pub fn chart(&self) -> &ChartDomain {
        &self.chart
    }

    pub fn forward(&self) -> &[Expression] {
        &self.forward
    }

    pub fn inverse(&self) -> &[Expression] {
        &self.inverse
    }

    /// `g(s, t)`.
    pub fn apply(&self, s: &[f64], t: &[f64]) -> Result<Vec<f64>> {
        let u = concat(s, t);
        self.forward.iter().map(|e| Ok(e.eval(&u)?)).collect()
    }

    /// `g⁻¹(x) = (s, t)`.
    pub fn invert(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let u: Vec<f64> = self.inverse.iter().map(|e| e.eval(x)).collect::<std::result::Result<_, _>>()?;
        let d = self.surface_dimension();
        Ok((u[..d].to_vec(), u[d..].to_vec()))
    }

    /// `Dg(s, t)`, columns ordered `∂_s` then `∂_t`.
    pub fn jacobian(&self, s: &[f64], t: &[f64]) -> Result<DMatrix<f64>> {
        let u = concat(s, t);
        let rows = self
            .forward
            .iter()
            .map(|e| Ok(e.eval_grad(&u)?.1))
            .collect::<Result<Vec<_>>>()?;
        Ok(to_matrix(&rows))
    }

    /// Largest of `|g⁻¹(g(u)) − u|` and `|g(g⁻¹(x)) − x|` over the samples
    /// `u = (s, t)`. Fails on a residual above `1e−8` (relative) or a
    /// singular Jacobian.
    pub fn check_inverse(&self, samples: &[Vec<f64>]) -> Result<f64> {
        let d = self.surface_dimension();
        let mut worst: f64 = 0.0;
        for u in samples {
            let x = self.apply(&u[..d], &u[d..])?;
            let (s, t) = self.invert(&x)?;
            let back = concat(&s, &t);
            let again = self.apply(&s, &t)?;
            let e1 = norm(&back.iter().zip(u).map(|(a, b)| a - b).collect::<Vec<_>>()) / norm(u).max(1.0);
            let e2 = norm(&again.iter().zip(&x).map(|(a, b)| a - b).collect::<Vec<_>>()) / norm(&x).max(1.0);
            worst = worst.max(e1).max(e2);
            if e1.max(e2) > GEOMETRY_TOL {
                return Err(Error::Precondition(format!(
                    "straightening map is not inverted by its inverse at (s, t) = {u:?} (residual {:.3e})",
                    e1.max(e2)
                )));
            }
            let jac = self.jacobian(&u[..d], &u[d..])?;
            let det = jac.determinant();
            let scale: f64 = jac.column_iter().map(|c| c.norm()).product();
            if det.abs() <= 1e-12 * scale {
                return Err(Error::SingularJacobian { point: u.clone(), det });
            }
        }
        Ok(worst)
    }

    /// `g(s, 0)` as expressions in the surface parameters.
    pub fn embedding(&self) -> Vec<Expression> {
        let d = self.surface_dimension();
        let args = self.surface_arguments(d);
        self.forward.iter().map(|e| e.substitute(&args)).collect()
    }

    /// `(s_0, …, s_{d−1}, 0, …, 0)` over the `d`-dimensional surface chart.
    fn surface_arguments(&self, d: usize) -> Vec<Expression> {
        (0..self.dimension())
            .map(|i| if i < d { Expression::var(i, d) } else { Expression::zero() })
            .collect()
    }
}

/// `S = g(N × {0})` with a parameter box for `N`. The box's margin `ε`
/// defines `S_{−ε}` as the image of the box shrunk by `ε` on every side,
/// standing in for the points of `S` at distance at least `ε` from the
/// boundary of the straightening chart.
#[derive(Debug, Clone)]
pub struct ElementarySurface {
    map: StraighteningMap,
    parameters: ChartDomain,
}

impl ElementarySurface {
    pub fn new(map: StraighteningMap, parameters: ChartDomain) -> Result<ElementarySurface> {
        let d = map.surface_dimension();
        if parameters.dimension() != d {
            return Err(Error::Dimension(format!(
                "surface of dimension {d} needs a {d}-dimensional parameter box, got {}",
                parameters.dimension()
            )));
        }
        let chart = map.chart();
        for i in 0..d {
            if parameters.lower()[i] < chart.lower()[i] - 1e-12 || parameters.upper()[i] > chart.upper()[i] + 1e-12 {
                return Err(Error::Invalid(format!(
                    "surface parameter box exceeds the straightening chart along s{i}"
                )));
            }
        }
        let zero = vec![0.0; map.codimension()];
        let tchart_ok = (0..map.codimension()).all(|j| {
            let i = d + j;
            chart.lower()[i] < zero[j] && zero[j] < chart.upper()[i]
        });
        if !tchart_ok {
            return Err(Error::Invalid("straightening chart must contain t = 0 in its interior".into()));
        }
        Ok(ElementarySurface { map, parameters })
    }

    pub fn map(&self) -> &StraighteningMap {
        &self.map
    }

    pub fn dimension(&self) -> usize {
        self.map.surface_dimension()
    }

    pub fn codimension(&self) -> usize {
        self.map.codimension()
    }

    pub fn parameters(&self) -> &ChartDomain {
        &self.parameters
    }

    /// Parameter box of `S_{−ε}`.
    pub fn inner(&self) -> ChartDomain {
        self.parameters.shrunk()
    }

    /// `S_{−ε}` as an integration region in `s`.
    pub fn inner_region(&self) -> IntegrationDomain {
        IntegrationDomain::from_chart(&self.inner())
    }

    pub fn point(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.map.apply(s, &vec![0.0; self.codimension()])
    }

    /// Tangent vectors `∂_{s_j} g(s, 0)`.
    pub fn tangents(&self, s: &[f64]) -> Result<Vec<Vec<f64>>> {
        let jac = self.map.jacobian(s, &vec![0.0; self.codimension()])?;
        Ok((0..self.dimension())
            .map(|j| jac.column(j).iter().copied().collect())
            .collect())
    }

    /// Midpoint grid on `S_{−ε}` in surface parameters.
    pub fn samples(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let inner = self.inner();
        midpoint_grid(inner.lower(), inner.upper(), per_axis)
    }
}

/// Commuting fields `Y_1, …, Y_m` transversal to a surface, with its
/// associated `m`-form `α`.
#[derive(Debug, Clone)]
pub struct TransversalSystem {
    fields: Vec<VectorField>,
    alpha: DifferentialForm,
    floor: f64,
}

impl TransversalSystem {
    /// `floor` is the transversality bound `δ`: `|α(Y_1, …, Y_m)| ≥ δ` on `S_{−ε}`.
    pub fn new(fields: Vec<VectorField>, alpha: DifferentialForm, floor: f64) -> Result<TransversalSystem> {
        let Some(first) = fields.first() else {
            return Err(Error::Invalid("a transversal system needs at least one field".into()));
        };
        let n = first.dimension();
        if fields.iter().any(|f| f.dimension() != n) || alpha.dimension() != n {
            return Err(Error::Dimension("transversal fields and α must share the ambient chart".into()));
        }
        if alpha.grade() != fields.len() {
            return Err(Error::Grade(format!(
                "α must have grade {} (one per field), got {}",
                fields.len(),
                alpha.grade()
            )));
        }
        if !(floor > 0.0) {
            return Err(Error::Invalid("transversality floor must be positive".into()));
        }
        Ok(TransversalSystem { fields, alpha, floor })
    }

    /// `α = (g⁻¹)^* P^*(h dt_1 ∧ ⋯ ∧ dt_m)` with `h` an expression in `t`.
    pub fn associated_form(map: &StraighteningMap, h: &Expression, domain: &ChartDomain) -> Result<DifferentialForm> {
        let n = map.dimension();
        let (d, m) = (map.surface_dimension(), map.codimension());
        if domain.dimension() != n {
            return Err(Error::Dimension("ambient chart does not match the straightening map".into()));
        }
        if h.dimension() > m {
            return Err(Error::Dimension(format!("h must be a function of the {m} transversal parameters")));
        }
        let t_of_x = &map.inverse()[d..];
        let mut alpha = DifferentialForm::new(0, vec![h.substitute(t_of_x).with_dimension(n)], domain)?;
        for t in t_of_x {
            let dt = exterior_derivative(&DifferentialForm::new(0, vec![t.clone()], domain)?);
            alpha = alpha.wedge(&dt)?;
        }
        Ok(alpha)
    }

    pub fn fields(&self) -> &[VectorField] {
        &self.fields
    }

    pub fn alpha(&self) -> &DifferentialForm {
        &self.alpha
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn codimension(&self) -> usize {
        self.fields.len()
    }

    pub fn domain(&self) -> &ChartDomain {
        self.fields[0].domain()
    }

    /// Largest `‖[Y_i, Y_j]‖` over the points and pairs.
    pub fn commutator_defect(&self, points: &[Vec<f64>]) -> Result<(f64, Vec<f64>)> {
        let mut worst = (0.0, points.first().cloned().unwrap_or_default());
        for i in 0..self.fields.len() {
            for j in i + 1..self.fields.len() {
                let b = lie_bracket(&self.fields[i], &self.fields[j])?;
                for p in points {
                    let v = norm(&b.eval(p)?);
                    if v > worst.0 {
                        worst = (v, p.clone());
                    }
                }
            }
        }
        Ok(worst)
    }

    /// Rejects a system whose brackets exceed `tol` at any point.
    pub fn check_commuting(&self, points: &[Vec<f64>], tol: f64) -> Result<()> {
        let (defect, at) = self.commutator_defect(points)?;
        if defect > tol {
            return Err(Error::Precondition(format!(
                "transversal fields do not commute: ‖[Y_i, Y_j]‖ = {defect:.3e} at {at:?}"
            )));
        }
        Ok(())
    }

    /// `α(Y_1, …, Y_m)` at a point.
    pub fn transversality_at(&self, x: &[f64]) -> Result<f64> {
        let ys = self.fields.iter().map(|y| y.eval(x)).collect::<Result<Vec<_>>>()?;
        self.alpha.eval(x)?.evaluate_on(&ys)
    }

    /// Smallest `|α(Y)|` over surface samples; fails below the floor.
    pub fn check_transversal(&self, surface: &ElementarySurface, samples: &[Vec<f64>]) -> Result<f64> {
        let mut least = f64::INFINITY;
        for s in samples {
            let x = surface.point(s)?;
            let v = self.transversality_at(&x)?.abs();
            if v < self.floor {
                return Err(Error::Precondition(format!(
                    "system is not strictly transversal: |α(Y)| = {v:.3e} < {:.3e} at {x:?}",
                    self.floor
                )));
            }
            least = least.min(v);
        }
        Ok(least)
    }

    /// Largest `‖i_v α‖ / (‖v‖ ‖α‖)` over tangent vectors `v` of the surface.
    pub fn associated_defect(&self, surface: &ElementarySurface, samples: &[Vec<f64>]) -> Result<f64> {
        let n = surface.map().dimension();
        let mut worst: f64 = 0.0;
        for s in samples {
            let x = surface.point(s)?;
            let a = self.alpha.eval(&x)?;
            for v in surface.tangents(s)? {
                let scale = norm(&v) * a.norm();
                let iv = AlternatingTensor::interior_by_multivector(&a, &AlternatingTensor::vector(v, Variance::Vector))?;
                if scale > 0.0 {
                    worst = worst.max(iv.norm() / scale);
                }
                debug_assert_eq!(iv.dimension(), n);
            }
        }
        Ok(worst)
    }

    /// Largest `‖dα‖` over the points, with the point where it occurs.
    pub fn closedness_defect(&self, points: &[Vec<f64>]) -> Result<(f64, Vec<f64>)> {
        let d_alpha = exterior_derivative(&self.alpha);
        let mut worst = (0.0, points.first().cloned().unwrap_or_default());
        for p in points {
            let v = d_alpha.eval(p)?.norm();
            if v > worst.0 {
                worst = (v, p.clone());
            }
        }
        Ok(worst)
    }
}

/// Fixed-step classical Runge–Kutta for the composed flow
/// `Φ_t = Φ^{Y_1}_{t_1} ∘ ⋯ ∘ Φ^{Y_m}_{t_m}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowEngine {
    /// Largest step; each leg uses `⌈|t_i| / step⌉` equal steps.
    pub step: f64,
    pub max_steps: usize,
}

impl Default for FlowEngine {
    fn default() -> FlowEngine {
        FlowEngine {
            step: 1e-3,
            max_steps: 1_000_000,
        }
    }
}

fn exit_on_outside(e: Error) -> Error {
    match e {
        Error::OutsideDomain { point } => Error::FlowExit { point },
        other => other,
    }
}

impl FlowEngine {
    pub fn new(step: f64, max_steps: usize) -> Result<FlowEngine> {
        if !(step > 0.0) || max_steps == 0 {
            return Err(Error::Invalid("flow step must be positive with at least one step allowed".into()));
        }
        Ok(FlowEngine { step, max_steps })
    }

    /// `Φ_t(x)`; `t = 0` returns `x` unchanged.
    pub fn flow(&self, fields: &[VectorField], t: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        check_times(fields, t)?;
        let mut y = x.to_vec();
        for (field, &ti) in fields.iter().zip(t).rev() {
            y = self.advance(field, ti, &y, None)?;
        }
        Ok(y)
    }

    /// `Φ_t(x)` and `D_xΦ_t` from the variational equation `J' = DY·J`.
    pub fn flow_with_jacobian(&self, fields: &[VectorField], t: &[f64], x: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        check_times(fields, t)?;
        let mut jac = DMatrix::identity(x.len(), x.len());
        let mut y = x.to_vec();
        for (field, &ti) in fields.iter().zip(t).rev() {
            y = self.advance(field, ti, &y, Some(&mut jac))?;
        }
        Ok((y, jac))
    }

    /// `‖Φ_{t+s}x − Φ_t Φ_s x‖`.
    pub fn semigroup_residual(&self, fields: &[VectorField], t: &[f64], s: &[f64], x: &[f64]) -> Result<f64> {
        let ts: Vec<f64> = t.iter().zip(s).map(|(a, b)| a + b).collect();
        let once = self.flow(fields, &ts, x)?;
        let twice = self.flow(fields, t, &self.flow(fields, s, x)?)?;
        Ok(norm(&once.iter().zip(&twice).map(|(a, b)| a - b).collect::<Vec<_>>()))
    }

    fn advance(&self, field: &VectorField, time: f64, x: &[f64], mut jac: Option<&mut DMatrix<f64>>) -> Result<Vec<f64>> {
        if time == 0.0 {
            return Ok(x.to_vec());
        }
        let steps = (time.abs() / self.step).ceil().max(1.0);
        if steps > self.max_steps as f64 {
            return Err(Error::Precondition(format!(
                "flow time {time} needs {steps} steps, above the limit {}",
                self.max_steps
            )));
        }
        let h = time / steps;
        let mut y = x.to_vec();
        for _ in 0..steps as usize {
            let (next, next_jac) = rk4_step(field, &y, jac.as_deref(), h).map_err(exit_on_outside)?;
            if !field.domain().contains(&next) {
                return Err(Error::FlowExit { point: next });
            }
            y = next;
            if let (Some(j), Some(nj)) = (jac.as_deref_mut(), next_jac) {
                *j = nj;
            }
        }
        Ok(y)
    }
}

fn check_times(fields: &[VectorField], t: &[f64]) -> Result<()> {
    if fields.len() != t.len() {
        return Err(Error::Dimension(format!(
            "{} flow times for {} fields",
            t.len(),
            fields.len()
        )));
    }
    Ok(())
}

type Rate = (Vec<f64>, Option<DMatrix<f64>>);

fn rk4_step(field: &VectorField, y: &[f64], jac: Option<&DMatrix<f64>>, h: f64) -> Result<Rate> {
    let rate = |y: &[f64], j: Option<&DMatrix<f64>>| -> Result<Rate> {
        match j {
            None => Ok((field.eval(y)?, None)),
            Some(j) => {
                let (v, d) = field.eval_jet(y)?;
                Ok((v, Some(to_matrix(&d) * j)))
            }
        }
    };
    let shift = |k: &[f64], a: f64| -> Vec<f64> { y.iter().zip(k).map(|(y, k)| y + a * k).collect() };
    let shift_jac = |m: &Option<DMatrix<f64>>, a: f64| jac.zip(m.as_ref()).map(|(j, m)| j + m * a);

    let (k1, m1) = rate(y, jac)?;
    let j2 = shift_jac(&m1, 0.5 * h);
    let (k2, m2) = rate(&shift(&k1, 0.5 * h), j2.as_ref())?;
    let j3 = shift_jac(&m2, 0.5 * h);
    let (k3, m3) = rate(&shift(&k2, 0.5 * h), j3.as_ref())?;
    let j4 = shift_jac(&m3, h);
    let (k4, m4) = rate(&shift(&k3, h), j4.as_ref())?;

    let next = (0..y.len())
        .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    let next_jac = match (jac, m1, m2, m3, m4) {
        (Some(j), Some(a), Some(b), Some(c), Some(d)) => Some(j + (a + b * 2.0 + c * 2.0 + d) * (h / 6.0)),
        _ => None,
    };
    Ok((next, next_jac))
}

/// One node of the tube parametrization `ψ(t, s) = Φ_t(g(s, 0))`.
#[derive(Debug, Clone)]
pub struct TubePoint {
    pub t: Vec<f64>,
    pub s: Vec<f64>,
    /// `g(s, 0)`, the foot point on the surface.
    pub base: Vec<f64>,
    /// `ψ(t, s)`.
    pub x: Vec<f64>,
    /// `D_xΦ_t` at the foot point.
    pub flow_jacobian: DMatrix<f64>,
    /// `Dψ(t, s)`, columns `∂_s` then `∂_t`.
    pub jacobian: DMatrix<f64>,
    /// `ρ(ψ) |det Dψ|`, the density of `ψ^*μ`.
    pub density: f64,
}

/// A surface, a transversal system and a measure, with the flow integrator.
#[derive(Debug, Clone)]
pub struct Tube {
    surface: ElementarySurface,
    system: TransversalSystem,
    volume: VolumeStructure,
    engine: FlowEngine,
    certify_grid: usize,
}

/// Radii and tube quantities with their limit as `r → 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceMeasureReport {
    pub quantity: String,
    /// Strictly decreasing.
    pub radii: Vec<f64>,
    /// `(1/λ_m(B_r)) ∫_{Φ_{B_r}A} u dμ` for each radius.
    pub tube_values: Vec<Integral>,
    /// Polynomial extrapolation in `r²` to `r = 0`; absent when flagged.
    pub extrapolated: Option<Integral>,
    /// `∫_A u(g(s, 0)) ρ |det Dψ(0, s)| ds`.
    pub direct: Integral,
    /// `|extrapolated − direct|`.
    pub difference: Option<f64>,
    /// From the last three radii; absent when the differences are noise.
    pub observed_order: Option<f64>,
    /// Every successive difference is below the quadrature noise.
    pub exact_within_noise: bool,
    pub flag: Option<String>,
}

impl SurfaceMeasureReport {
    /// Convergence at order at least `p`, counting noise-level differences.
    pub fn converges_at_order(&self, p: f64) -> bool {
        self.exact_within_noise || self.observed_order.is_some_and(|o| o >= p)
    }
}

/// Both sides of a tube-limit identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeLimitReport {
    pub identity: String,
    /// Surface side, integrated against `σ`.
    pub lhs: Integral,
    /// Tube side and its `r → 0` limit.
    pub rhs: SurfaceMeasureReport,
    /// `|lhs − extrapolated rhs|`.
    pub difference: Option<f64>,
    /// Largest `|div Z̃|` seen on tube samples (boundedness evidence).
    pub max_abs_divergence: f64,
}

type Weight<'a> = dyn Fn(&TubePoint) -> Result<f64> + Sync + 'a;

/// Neville extrapolation to `x = 0` with Lagrange weights, for error propagation.
fn extrapolate_to_zero(x: &[f64], v: &[f64]) -> (f64, f64) {
    let mut value = 0.0;
    let mut gain = 0.0;
    for i in 0..x.len() {
        let mut l = 1.0;
        for j in 0..x.len() {
            if j != i {
                l *= x[j] / (x[j] - x[i]);
            }
        }
        value += l * v[i];
        gain += l.abs();
    }
    (value, gain)
}

/// Limit of tube values at radii `r` assuming an expansion in `r²`.
fn limit_report(quantity: &str, radii: &[f64], values: Vec<Integral>, direct: Integral) -> SurfaceMeasureReport {
    let n = radii.len();
    let v: Vec<f64> = values.iter().map(|i| i.value).collect();
    let noise: Vec<f64> = (0..n - 1)
        .map(|i| values[i].error + values[i + 1].error + 1e-13 * v[i].abs().max(v[i + 1].abs()))
        .collect();
    let diffs: Vec<f64> = (0..n - 1).map(|i| v[i] - v[i + 1]).collect();
    let significant: Vec<f64> = diffs.iter().zip(&noise).filter(|(d, e)| d.abs() > **e).map(|(d, _)| *d).collect();
    let exact_within_noise = significant.is_empty();
    let monotone = significant.iter().all(|d| d.signum() == significant[0].signum());

    let observed_order = if diffs[n - 3].abs() > noise[n - 3] && diffs[n - 2].abs() > noise[n - 2] {
        Some((diffs[n - 3] / diffs[n - 2]).abs().ln() / (radii[n - 2] / radii[n - 1]).ln())
    } else {
        None
    };

    let (extrapolated, flag) = if monotone {
        let x: Vec<f64> = radii.iter().map(|r| r * r).collect();
        let (full, gain) = extrapolate_to_zero(&x, &v);
        let (reduced, _) = extrapolate_to_zero(&x[1..], &v[1..]);
        let propagated: f64 = gain * values.iter().map(|i| i.error).fold(0.0, f64::max);
        (
            Some(Integral {
                value: full,
                error: (full - reduced).abs() + propagated,
            }),
            None,
        )
    } else {
        (None, Some(format!("{quantity}: tube values are not monotone in r beyond quadrature noise")))
    };
    SurfaceMeasureReport {
        quantity: quantity.to_string(),
        radii: radii.to_vec(),
        tube_values: values,
        difference: extrapolated.map(|e| (e.value - direct.value).abs()),
        extrapolated,
        direct,
        observed_order,
        exact_within_noise,
        flag,
    }
}

impl Tube {
    /// Validates the system: commutation at the surface samples and the
    /// transversality floor on `S_{−ε}`.
    pub fn new(
        surface: ElementarySurface,
        system: TransversalSystem,
        volume: VolumeStructure,
        engine: FlowEngine,
        certify_grid: usize,
    ) -> Result<Tube> {
        let n = surface.map().dimension();
        if system.domain().dimension() != n || volume.dimension() != n {
            return Err(Error::Dimension("surface, fields and density must share the ambient chart".into()));
        }
        if system.codimension() != surface.codimension() {
            return Err(Error::Invalid(format!(
                "codimension {} surface needs as many transversal fields, got {}",
                surface.codimension(),
                system.codimension()
            )));
        }
        let samples = surface.samples(certify_grid.max(2));
        let points = samples.iter().map(|s| surface.point(s)).collect::<Result<Vec<_>>>()?;
        system.check_commuting(&points, GEOMETRY_TOL)?;
        system.check_transversal(&surface, &samples)?;
        Ok(Tube {
            surface,
            system,
            volume,
            engine,
            certify_grid: certify_grid.max(2),
        })
    }

    pub fn surface(&self) -> &ElementarySurface {
        &self.surface
    }

    pub fn system(&self) -> &TransversalSystem {
        &self.system
    }

    pub fn volume(&self) -> &VolumeStructure {
        &self.volume
    }

    pub fn engine(&self) -> &FlowEngine {
        &self.engine
    }

    fn m(&self) -> usize {
        self.surface.codimension()
    }

    /// `ψ(t, s)` with its Jacobian and pulled-back density.
    pub fn point(&self, t: &[f64], s: &[f64]) -> Result<TubePoint> {
        let base = self.surface.point(s)?;
        let (x, flow_jacobian) = self.engine.flow_with_jacobian(self.system.fields(), t, &base)?;
        let tangents = self.surface.tangents(s)?;
        let n = x.len();
        let mut jacobian = DMatrix::zeros(n, n);
        for (j, v) in tangents.iter().enumerate() {
            jacobian.set_column(j, &(&flow_jacobian * DVector::from_column_slice(v)));
        }
        let d = tangents.len();
        for (i, y) in self.system.fields().iter().enumerate() {
            jacobian.set_column(d + i, &DVector::from_vec(y.eval(&x).map_err(exit_on_outside)?));
        }
        let det = jacobian.determinant();
        let scale: f64 = jacobian.column_iter().map(|c| c.norm()).product();
        if det.abs() <= 1e-12 * scale {
            return Err(Error::SingularJacobian { point: x, det });
        }
        let density = self.volume.rho(&x)? * det.abs();
        Ok(TubePoint {
            t: t.to_vec(),
            s: s.to_vec(),
            base,
            x,
            flow_jacobian,
            jacobian,
            density,
        })
    }

    /// Certifies `ψ` on `B_r × A` a posteriori: every grid node flows
    /// inside the chart with a nonsingular `Dψ` of constant orientation.
    pub fn certify(&self, r: f64, region: &IntegrationDomain) -> Result<()> {
        let m = self.m();
        let (lo, hi) = region.bounds();
        let ts: Vec<Vec<f64>> = midpoint_grid(&vec![-r; m], &vec![r; m], self.certify_grid)
            .into_iter()
            .filter(|t| norm(t) < r)
            .chain(std::iter::once(vec![0.0; m]))
            .collect();
        let mut orientation = 0.0;
        for s in midpoint_grid(&lo, &hi, self.certify_grid) {
            for t in &ts {
                let p = self.point(t, &s)?;
                let sign = p.jacobian.determinant().signum();
                if orientation == 0.0 {
                    orientation = sign;
                } else if sign != orientation {
                    return Err(Error::SingularJacobian {
                        point: p.x,
                        det: p.jacobian.determinant(),
                    });
                }
            }
        }
        Ok(())
    }

    fn check_region(&self, region: &IntegrationDomain) -> Result<()> {
        let inner = self.surface.inner();
        let ok = match region {
            IntegrationDomain::Box { lower, upper } => {
                lower.len() == inner.dimension()
                    && (0..lower.len()).all(|i| {
                        lower[i] >= inner.lower()[i] - 1e-12 && upper[i] <= inner.upper()[i] + 1e-12 && lower[i] < upper[i]
                    })
            }
            _ => false,
        };
        if !ok {
            return Err(Error::Invalid("the surface region must be a parameter box inside S_{-ε}".into()));
        }
        Ok(())
    }

    /// `∫_{B_r × A} w(P) ρ(ψ) |det Dψ| dt ds = ∫_{Φ_{B_r}A} w dμ` when
    /// `w` depends on the point only.
    pub fn integral(&self, weight: &Weight<'_>, r: f64, region: &IntegrationDomain, q: &QuadratureSpec) -> Result<Integral> {
        self.check_region(region)?;
        if !(r > 0.0) {
            return Err(Error::Invalid(format!("tube radius must be positive, got {r}")));
        }
        self.certify(r, region)?;
        let m = self.m();
        let domain = IntegrationDomain::Product(vec![
            IntegrationDomain::Ball {
                center: vec![0.0; m],
                radius: r,
            },
            region.clone(),
        ]);
        integrate(
            &|u: &[f64]| {
                let p = self.point(&u[..m], &u[m..])?;
                Ok(weight(&p)? * p.density)
            },
            &domain,
            q,
        )
    }

    /// `μ(Φ_{B_r}A)`.
    pub fn tube_measure(&self, region: &IntegrationDomain, r: f64, q: &QuadratureSpec) -> Result<Integral> {
        self.integral(&|_| Ok(1.0), r, region, q)
    }

    /// `∫_A w(P) ρ |det Dψ(0, s)| ds`, the `r = 0` oracle.
    pub fn surface_integral(&self, weight: &Weight<'_>, region: &IntegrationDomain, q: &QuadratureSpec) -> Result<Integral> {
        self.check_region(region)?;
        let zero = vec![0.0; self.m()];
        integrate(
            &|s: &[f64]| {
                let p = self.point(&zero, s)?;
                Ok(weight(&p)? * p.density)
            },
            region,
            q,
        )
    }

    /// Tube averages `(1/λ_m(B_r)) ∫ w dμ` over the radii, the direct
    /// surface integral and the extrapolated limit.
    pub fn limit(
        &self,
        quantity: &str,
        weight: &Weight<'_>,
        region: &IntegrationDomain,
        radii: &[f64],
        q: &QuadratureSpec,
    ) -> Result<SurfaceMeasureReport> {
        if radii.len() < 3 {
            return Err(Error::Invalid("extrapolation needs at least three radii".into()));
        }
        if radii.windows(2).any(|w| !(w[1] < w[0])) || radii[radii.len() - 1] <= 0.0 {
            return Err(Error::Invalid("radii must be positive and strictly decreasing".into()));
        }
        let m = self.m();
        let values = radii
            .iter()
            .map(|&r| {
                let i = self.integral(weight, r, region, q)?;
                let lambda = ball_volume(m, r);
                Ok(Integral {
                    value: i.value / lambda,
                    error: i.error / lambda,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let direct = self.surface_integral(weight, region, q)?;
        Ok(limit_report(quantity, radii, values, direct))
    }

    /// `σ_r(A)` over the radii and `σ(A)`.
    pub fn surface_measure(&self, region: &IntegrationDomain, radii: &[f64], q: &QuadratureSpec) -> Result<SurfaceMeasureReport> {
        self.limit("surface-measure", &|_| Ok(1.0), region, radii, q)
    }

    /// Tube averages of an ambient function `u` against `∫_A u dσ`.
    pub fn lemma3_average(
        &self,
        u: &ScalarField,
        region: &IntegrationDomain,
        radii: &[f64],
        q: &QuadratureSpec,
    ) -> Result<SurfaceMeasureReport> {
        self.limit("tube-average", &|p| u.eval(&p.x), region, radii, q)
    }

    /// The `q`-connected lift of a field tangent to the surface.
    pub fn lift<'a>(&'a self, z: &VectorField) -> Result<QLift<'a>> {
        let lift = QLift {
            tube: self,
            field: z.clone(),
        };
        for s in self.surface.samples(self.certify_grid) {
            let x = self.surface.point(&s)?;
            let a = self.system.alpha().eval(&x)?;
            let zv = z.eval(&x)?;
            let iz = AlternatingTensor::interior_by_multivector(&a, &AlternatingTensor::vector(zv.clone(), Variance::Vector))?;
            if iz.norm() > GEOMETRY_TOL * (norm(&zv) * a.norm()).max(f64::MIN_POSITIVE) {
                return Err(Error::Precondition(format!(
                    "field is not tangent to the surface: ‖i_Z α‖ = {:.3e} at {x:?}",
                    iz.norm()
                )));
            }
        }
        Ok(lift)
    }

    /// `∫_{S_{−ε}} u div_S Z dσ` against the limit of
    /// `(1/λ_m(B_r)) ∫_{Φ_{B_r}S_{−ε}} û div Z̃ dμ`, with `û(Φ_t x) = u(x)`.
    pub fn theorem2_check(
        &self,
        z: &VectorField,
        u: &ScalarField,
        radii: &[f64],
        q: &QuadratureSpec,
    ) -> Result<TubeLimitReport> {
        let lift = self.lift(z)?;
        let region = self.surface.inner_region();
        let zero = vec![0.0; self.m()];
        // σ has density J(0, s) in the s-chart, so u div_S Z dσ = u ∂_s(J z) ds.
        let lhs = integrate(
            &|s: &[f64]| {
                let base = self.surface.point(s)?;
                Ok(u.eval(&base)? * lift.chart_flux_divergence(&zero, s)?)
            },
            &region,
            q,
        )?;
        let rhs = self.limit(
            "theorem2",
            &|p| Ok(u.eval(&p.base)? * lift.divergence_at(p)?),
            &region,
            radii,
            q,
        )?;
        let max_abs_divergence = self.max_over_samples(radii[0], |p| lift.divergence_at(p))?;
        Ok(TubeLimitReport {
            identity: "theorem2".into(),
            difference: rhs.extrapolated.map(|e| (e.value - lhs.value).abs()),
            lhs,
            rhs,
            max_abs_divergence,
        })
    }

    fn max_over_samples(&self, r: f64, f: impl Fn(&TubePoint) -> Result<f64>) -> Result<f64> {
        let m = self.m();
        let mut worst: f64 = 0.0;
        for s in self.surface.samples(self.certify_grid) {
            for t in midpoint_grid(&vec![-r; m], &vec![r; m], self.certify_grid) {
                if norm(&t) < r {
                    worst = worst.max(f(&self.point(&t, &s)?)?.abs());
                }
            }
        }
        Ok(worst)
    }

    /// For a decomposable `Z̄ = Z_1 ∧ ⋯ ∧ Z_k` on the surface and a
    /// `(k−1)`-form `α` in surface parameters, `∫ ⟨α, div_S Z̄⟩ dσ` against
    /// the tube limit of `⟨q^*α, div Z̃⟩`. Needs a system adapted to the
    /// straightening map, so that lifts and pullbacks are symbolic.
    pub fn corollary_check(
        &self,
        factors: &[VectorField],
        alpha: &DifferentialForm,
        radii: &[f64],
        q: &QuadratureSpec,
    ) -> Result<TubeLimitReport> {
        let k = factors.len();
        if k == 0 || alpha.grade() + 1 != k {
            return Err(Error::Grade(format!(
                "a {k}-vector field pairs its divergence with a {}-form, got grade {}",
                k.saturating_sub(1),
                alpha.grade()
            )));
        }
        for z in factors {
            self.lift(z)?;
        }
        let adapted = AdaptedLift::new(self.surface.clone(), self.system.domain())?;
        adapted.check_system(&self.system, &self.surface.samples(self.certify_grid))?;
        let sigma = adapted.surface_density(self.volume.density())?;
        let chart = adapted.surface_chart();
        let samples = self.surface.samples(self.certify_grid);
        let surface_volume = VolumeStructure::on_samples(sigma.clone(), &samples)?;

        let chart_factors = factors.iter().map(|z| adapted.chart_field(z)).collect::<Result<Vec<_>>>()?;
        let z_s = MultiVectorField::decomposable(Expression::one(), chart_factors, chart);
        let surface_side = alpha.pair(&div_strong(&z_s, &surface_volume)?)?;
        let region = self.surface.inner_region();
        let lhs = integrate(
            &|s: &[f64]| Ok(surface_side.eval(s)? * sigma.eval(s)?),
            &region,
            q,
        )?;

        let lifted = factors.iter().map(|z| adapted.lift(z)).collect::<Result<Vec<_>>>()?;
        let z_tilde = MultiVectorField::decomposable(Expression::one(), lifted, self.system.domain());
        let div = div_strong(&z_tilde, &self.volume)?;
        let tube_side = adapted.pullback(alpha)?.pair(&div)?;
        let rhs = self.limit("corollary", &|p| Ok(tube_side.eval(&p.x)?), &region, radii, q)?;
        let max_abs_divergence = self.max_over_samples(radii[0], |p| Ok(div.eval(&p.x)?.max_abs()))?;
        Ok(TubeLimitReport {
            identity: "multivector-corollary".into(),
            difference: rhs.extrapolated.map(|e| (e.value - lhs.value).abs()),
            lhs,
            rhs,
            max_abs_divergence,
        })
    }
}

/// The `q`-connected lift `Z̃(Φ_t x) = D_xΦ_t · Z(x)` of a surface field.
pub struct QLift<'a> {
    tube: &'a Tube,
    field: VectorField,
}

impl QLift<'_> {
    /// `Z̃` at a tube point.
    pub fn value_at(&self, p: &TubePoint) -> Result<Vec<f64>> {
        let z = DVector::from_vec(self.field.eval(&p.base)?);
        Ok((&p.flow_jacobian * z).iter().copied().collect())
    }

    /// `(ψ(t, s), Z̃(ψ(t, s)))`.
    pub fn eval(&self, t: &[f64], s: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let p = self.tube.point(t, s)?;
        let v = self.value_at(&p)?;
        Ok((p.x, v))
    }

    /// Surface-chart components `z(s)` with `∂_s g(s, 0) · z = Z(g(s, 0))`.
    pub fn chart_components(&self, s: &[f64]) -> Result<Vec<f64>> {
        let surface = self.tube.surface();
        let jac = surface.map().jacobian(s, &vec![0.0; surface.codimension()])?;
        let z = DVector::from_vec(self.field.eval(&surface.point(s)?)?);
        let w = jac
            .lu()
            .solve(&z)
            .ok_or_else(|| Error::SingularJacobian { point: s.to_vec(), det: 0.0 })?;
        Ok(w.iter().take(surface.dimension()).copied().collect())
    }

    /// `‖D_yΦ_{−t} · Z̃(y) − Z(x)‖` at `y = Φ_t x`: `q` carries `Z̃` back to `Z`.
    pub fn pushforward_residual(&self, t: &[f64], s: &[f64]) -> Result<f64> {
        let p = self.tube.point(t, s)?;
        let lifted = DVector::from_vec(self.value_at(&p)?);
        let back: Vec<f64> = t.iter().map(|v| -v).collect();
        let (foot, jac) = self
            .tube
            .engine()
            .flow_with_jacobian(self.tube.system().fields(), &back, &p.x)?;
        let pushed = jac * lifted;
        let z = self.field.eval(&foot)?;
        Ok(norm(&pushed.iter().zip(&z).map(|(a, b)| a - b).collect::<Vec<_>>()))
    }

    /// Transversal part of `Z̃` in tube coordinates, `‖(Dψ⁻¹ Z̃)_t‖`; zero
    /// when `Z̃` is tangent to the leaf `Φ_t S`.
    pub fn leaf_defect(&self, t: &[f64], s: &[f64]) -> Result<f64> {
        let p = self.tube.point(t, s)?;
        let v = DVector::from_vec(self.value_at(&p)?);
        let u = p
            .jacobian
            .clone()
            .lu()
            .solve(&v)
            .ok_or_else(|| Error::SingularJacobian { point: p.x.clone(), det: 0.0 })?;
        let d = self.tube.surface().dimension();
        Ok(norm(&u.iter().skip(d).copied().collect::<Vec<_>>()))
    }

    /// `div Z̃` with respect to `μ` from the ambient Jacobian of `Z̃`.
    ///
    /// `∂_t(Z̃ ∘ ψ) = DY·Z̃` along each transversal direction and `∂_s(Z̃ ∘ ψ)`
    /// is differenced; then `DZ̃ = [∂_s | ∂_t] Dψ⁻¹`.
    pub fn divergence_at(&self, p: &TubePoint) -> Result<f64> {
        let n = p.x.len();
        let d = self.tube.surface().dimension();
        let value = self.value_at(p)?;
        let mut columns = DMatrix::zeros(n, n);
        for j in 0..d {
            let col = central_difference(|s| Ok(self.eval(&p.t, s)?.1), &p.s, j)?;
            columns.set_column(j, &DVector::from_vec(col));
        }
        let zt = DVector::from_column_slice(&value);
        for (i, y) in self.tube.system().fields().iter().enumerate() {
            let (_, dy) = y.eval_jet(&p.x)?;
            columns.set_column(d + i, &(to_matrix(&dy) * &zt));
        }
        let inverse = p
            .jacobian
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::SingularJacobian { point: p.x.clone(), det: 0.0 })?;
        let dz = columns * inverse;
        let rows: Vec<Vec<f64>> = dz.row_iter().map(|r| r.iter().copied().collect()).collect();
        let (rho, grad) = self.tube.volume().density().eval_grad(&p.x)?;
        Ok(divergence_from_jet(&value, &rows, rho, &grad))
    }

    /// `div Z̃(ψ(t, s))` at the given parameters.
    pub fn divergence(&self, t: &[f64], s: &[f64]) -> Result<f64> {
        self.divergence_at(&self.tube.point(t, s)?)
    }

    /// `Σ_j ∂_{s_j}(J z_j)` with `J = ρ(ψ) |det Dψ|`: in tube coordinates
    /// `Z̃ = (z(s), 0)` and `μ = J dt ds`.
    pub fn chart_flux_divergence(&self, t: &[f64], s: &[f64]) -> Result<f64> {
        let flux = |s: &[f64]| -> Result<Vec<f64>> {
            let p = self.tube.point(t, s)?;
            Ok(self.chart_components(s)?.into_iter().map(|z| p.density * z).collect())
        };
        let mut total = 0.0;
        for j in 0..s.len() {
            total += central_difference(flux, s, j)?[j];
        }
        Ok(total)
    }

    /// Coordinate oracle `(1/J) Σ_j ∂_{s_j}(J z_j)` for `div Z̃`.
    pub fn chart_divergence(&self, t: &[f64], s: &[f64]) -> Result<f64> {
        let j = self.tube.point(t, s)?.density;
        Ok(self.chart_flux_divergence(t, s)? / j)
    }
}

/// Symbolic lifts for systems whose flows are the straightening map's own
/// translations, `Φ_τ(g(s, t)) = g(s, t + τ)`. Then `q = g ∘ P_N ∘ g⁻¹`,
/// `Z̃(x) = ∂_s g(s(x), t(x)) · z(s(x))` and `q^*` acts by substitution.
#[derive(Debug, Clone)]
pub struct AdaptedLift {
    surface: ElementarySurface,
    ambient: ChartDomain,
}

impl AdaptedLift {
    pub fn new(surface: ElementarySurface, ambient: &ChartDomain) -> Result<AdaptedLift> {
        if ambient.dimension() != surface.map().dimension() {
            return Err(Error::Dimension("ambient chart does not match the straightening map".into()));
        }
        Ok(AdaptedLift {
            surface,
            ambient: ambient.clone(),
        })
    }

    pub fn surface_chart(&self) -> &ChartDomain {
        self.surface.parameters()
    }

    fn map(&self) -> &StraighteningMap {
        self.surface.map()
    }

    /// Rejects a system unless `Y_i(g(s, t)) = ∂_{t_i} g(s, t)` at the
    /// samples (taken at `t = 0` and `t = ±0.05` along each axis).
    pub fn check_system(&self, system: &TransversalSystem, samples: &[Vec<f64>]) -> Result<()> {
        let m = self.surface.codimension();
        let d = self.surface.dimension();
        let mut offsets = vec![vec![0.0; m]];
        for i in 0..m {
            for sign in [-1.0, 1.0] {
                let mut t = vec![0.0; m];
                t[i] = 0.05 * sign;
                offsets.push(t);
            }
        }
        for s in samples {
            for t in &offsets {
                let x = self.map().apply(s, t)?;
                let jac = self.map().jacobian(s, t)?;
                for (i, y) in system.fields().iter().enumerate() {
                    let yv = y.eval(&x)?;
                    let col: Vec<f64> = jac.column(d + i).iter().copied().collect();
                    let gap = norm(&yv.iter().zip(&col).map(|(a, b)| a - b).collect::<Vec<_>>());
                    if gap > GEOMETRY_TOL * norm(&col).max(1.0) {
                        return Err(Error::Precondition(format!(
                            "field Y{i} is not the straightening map's ∂_t{i} at {x:?} (gap {gap:.3e})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// `z(s) = (Z · ∇s(x))` at `x = g(s, 0)`, a field on the surface chart.
    pub fn chart_field(&self, z: &VectorField) -> Result<VectorField> {
        let d = self.surface.dimension();
        let embedding = self.map().embedding();
        let comps = self.map().inverse()[..d]
            .iter()
            .map(|s_of_x| z.apply(s_of_x).substitute(&embedding).with_dimension(d))
            .collect();
        VectorField::new(comps, self.surface_chart().clone())
    }

    /// `Z̃(x) = Σ_j z_j(s(x)) ∂_{s_j} g(g⁻¹ x)` on the ambient chart.
    pub fn lift(&self, z: &VectorField) -> Result<VectorField> {
        let n = self.ambient.dimension();
        let inverse = self.map().inverse();
        let z_s = self.chart_field(z)?;
        let s_of_x = &inverse[..self.surface.dimension()];
        let comps = self
            .map()
            .forward()
            .iter()
            .map(|g_i| {
                z_s.components()
                    .iter()
                    .enumerate()
                    .fold(Expression::zero(), |acc, (j, z_j)| {
                        acc + z_j.substitute(s_of_x) * g_i.partial(j).substitute(inverse)
                    })
                    .with_dimension(n)
            })
            .collect();
        VectorField::new(comps, self.ambient.clone())
    }

    /// `q^*α` for a form in surface parameters.
    pub fn pullback(&self, alpha: &DifferentialForm) -> Result<DifferentialForm> {
        let n = self.ambient.dimension();
        let d = self.surface.dimension();
        if alpha.dimension() != d {
            return Err(Error::Dimension(format!("form must live on the {d}-dimensional surface chart")));
        }
        let s_of_x = &self.map().inverse()[..d];
        let ds = s_of_x
            .iter()
            .map(|s| Ok(exterior_derivative(&DifferentialForm::new(0, vec![s.clone()], &self.ambient)?)))
            .collect::<Result<Vec<_>>>()?;
        let mut out = DifferentialForm::zero(alpha.grade(), &self.ambient);
        for (index, coefficient) in alpha.components().iter() {
            if coefficient.is_zero() {
                continue;
            }
            let mut term = DifferentialForm::new(0, vec![coefficient.substitute(s_of_x).with_dimension(n)], &self.ambient)?;
            for i in index.indices() {
                term = term.wedge(&ds[i])?;
            }
            out = out.add(&term)?;
        }
        Ok(out)
    }

    /// Density of `σ` in surface parameters, `ρ(g(s, 0)) |det Dg(s, 0)|`;
    /// the sign is fixed at the center of the parameter box.
    pub fn surface_density(&self, rho: &ScalarField) -> Result<ScalarField> {
        let n = self.ambient.dimension();
        let d = self.surface.dimension();
        let args: Vec<Expression> = (0..n)
            .map(|i| if i < d { Expression::var(i, d) } else { Expression::zero() })
            .collect();
        let columns = (0..n)
            .map(|j| {
                let c = self.map().forward().iter().map(|g| g.partial(j).substitute(&args).with_dimension(d)).collect();
                AlternatingTensor::vector(c, Variance::Vector)
            })
            .collect::<Vec<_>>();
        let det = AlternatingTensor::wedge_all(&columns, n, Variance::Vector)?.components()[0].clone();
        let density = rho.expression().substitute(&self.map().embedding()).with_dimension(d) * det;
        let sign = density.eval(&self.surface_chart().center())?.signum();
        ScalarField::new(density * sign, self.surface_chart().clone())
    }
}

/// `div_S Z = (div Z̃)|_S` where `div_S` is taken against the surface form
/// `Ω_S = ρ_S ds` and `div` against `β = q^*Ω_S ∧ α`. The surface side uses
/// the chart field and `ρ_S`; the ambient side builds `β` by pullback and
/// wedge and differentiates the symbolic lift. Samples are surface
/// parameters.
pub fn restriction_check(
    surface: &ElementarySurface,
    system: &TransversalSystem,
    z: &VectorField,
    surface_density: &ScalarField,
    samples: &[Vec<f64>],
) -> Result<IdentityReport> {
    let adapted = AdaptedLift::new(surface.clone(), system.domain())?;
    adapted.check_system(system, samples)?;
    let base = samples.iter().map(|s| surface.point(s)).collect::<Result<Vec<_>>>()?;
    let (defect, at) = system.closedness_defect(&base)?;
    let alpha_scale = base
        .iter()
        .map(|x| Ok(system.alpha().eval(x)?.norm()))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(1.0, f64::max);
    if defect > GEOMETRY_TOL * alpha_scale {
        return Err(Error::Precondition(format!(
            "associated form is not closed: ‖dα‖ = {defect:.3e} at {at:?}"
        )));
    }

    let d = surface.dimension();
    if surface_density.domain().dimension() != d {
        return Err(Error::Dimension(format!("surface density must live on the {d}-dimensional chart")));
    }
    let omega_s = DifferentialForm::new(d, vec![surface_density.expression().clone()], surface_density.domain())?;
    let beta = adapted.pullback(&omega_s)?.wedge(system.alpha())?;
    let beta_density = beta.components().components()[0].clone();
    let orientation = beta_density.eval(&base[0])?.signum();
    let ambient_volume = VolumeStructure::on_samples(
        ScalarField::new(beta_density * orientation, system.domain().clone())?,
        &base,
    )?;
    let ambient = div_vector(&adapted.lift(z)?, &ambient_volume);

    let surface_volume = VolumeStructure::on_samples(surface_density.clone(), samples)?;
    let intrinsic = div_vector(&adapted.chart_field(z)?, &surface_volume);

    sweep("restriction", samples, |s| {
        let a = ambient.eval(&surface.point(s)?)?;
        let b = intrinsic.eval(s)?;
        Ok(Sample {
            abs: (a - b).abs(),
            scale: 1.0 + a.abs().max(b.abs()),
        })
    })
}
