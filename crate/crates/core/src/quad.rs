//! Integration over boxes and balls, and compactly supported bump test forms.
//!
//! Tensor-grid rules are composite Gauss–Legendre. Ball domains use
//! hyperspherical coordinates, so an integrand that is smooth on the closed
//! ball (such as anything multiplied by a [`Bump`]) converges spectrally
//! without resolving the support boundary. Node values are computed in
//! parallel and summed in a fixed order, so results are reproducible.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exterior::MultiIndex;
use crate::expr::{Expression, Func};
use crate::fields::{ChartDomain, DifferentialForm};

/// Floor of the error estimate relative to `Σ |w f|` (rounding in the sum).
const ROUNDING_FLOOR: f64 = 1e-14;

/// Extra clearance required between a bump's support and the domain boundary.
pub const SUPPORT_SLACK: f64 = 0.01;

/// How an integral is discretized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum QuadratureSpec {
    /// Composite Gauss–Legendre with `panels` subintervals per axis.
    TensorGrid {
        nodes_per_axis: usize,
        #[serde(default = "one")]
        panels: usize,
    },
    /// Uniform sampling with a standard-error estimate.
    MonteCarlo { samples: usize, seed: u64 },
}

fn one() -> usize {
    1
}

impl QuadratureSpec {
    pub fn gauss(nodes_per_axis: usize) -> QuadratureSpec {
        QuadratureSpec::TensorGrid {
            nodes_per_axis,
            panels: 1,
        }
    }

    pub fn monte_carlo(samples: usize, seed: u64) -> QuadratureSpec {
        QuadratureSpec::MonteCarlo { samples, seed }
    }
}

/// Region of integration.
#[derive(Debug, Clone, PartialEq)]
pub enum IntegrationDomain {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    /// Cartesian product; points are the factors' coordinates concatenated.
    Product(Vec<IntegrationDomain>),
}

impl IntegrationDomain {
    pub fn from_chart(d: &ChartDomain) -> IntegrationDomain {
        IntegrationDomain::Box {
            lower: d.lower().to_vec(),
            upper: d.upper().to_vec(),
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            IntegrationDomain::Box { lower, .. } => lower.len(),
            IntegrationDomain::Ball { center, .. } => center.len(),
            IntegrationDomain::Product(factors) => factors.iter().map(|f| f.dimension()).sum(),
        }
    }

    /// Lebesgue measure of the region.
    pub fn volume(&self) -> f64 {
        match self {
            IntegrationDomain::Box { lower, upper } => {
                lower.iter().zip(upper).map(|(a, b)| b - a).product()
            }
            IntegrationDomain::Ball { center, radius } => ball_volume(center.len(), *radius),
            IntegrationDomain::Product(factors) => factors.iter().map(|f| f.volume()).product(),
        }
    }

    /// Axis-aligned bounding box.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            IntegrationDomain::Box { lower, upper } => (lower.clone(), upper.clone()),
            IntegrationDomain::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            IntegrationDomain::Product(factors) => {
                let (mut lo, mut hi) = (Vec::new(), Vec::new());
                for f in factors {
                    let (a, b) = f.bounds();
                    lo.extend(a);
                    hi.extend(b);
                }
                (lo, hi)
            }
        }
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        match self {
            IntegrationDomain::Box { lower, upper } => {
                p.iter().zip(lower.iter().zip(upper)).all(|(x, (a, b))| a <= x && x <= b)
            }
            IntegrationDomain::Ball { center, radius } => {
                let d2: f64 = p.iter().zip(center).map(|(x, c)| (x - c).powi(2)).sum();
                d2 <= radius * radius
            }
            IntegrationDomain::Product(factors) => {
                let mut offset = 0;
                factors.iter().all(|f| {
                    let k = f.dimension();
                    let inside = f.contains(&p[offset..offset + k]);
                    offset += k;
                    inside
                })
            }
        }
    }
}

/// Volume of the Euclidean ball of radius `r` in `R^m`.
pub fn ball_volume(m: usize, r: f64) -> f64 {
    // V_m = π^{m/2} / Γ(m/2 + 1) r^m, via V_m = 2π/m · V_{m−2}.
    let mut v = if m.is_multiple_of(2) { 1.0 } else { 2.0 };
    let mut k = if m.is_multiple_of(2) { 0 } else { 1 };
    while k < m {
        k += 2;
        v *= 2.0 * PI / k as f64;
    }
    v * r.powi(m as i32)
}

/// An integral value with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, cached per order.
pub fn gauss_legendre(order: usize) -> Arc<(Vec<f64>, Vec<f64>)> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<(Vec<f64>, Vec<f64>)>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(r) = cache.lock().unwrap().get(&order) {
        return r.clone();
    }
    let rule = Arc::new(compute_gauss_legendre(order));
    cache.lock().unwrap().insert(order, rule.clone());
    rule
}

fn compute_gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev-like initial guess, then Newton on P_n.
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            // p1 = P_n(z), p0 = P_{n-1}(z).
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// One-dimensional composite rule on `[a, b]`.
fn axis_rule(a: f64, b: f64, nodes: usize, panels: usize) -> (Vec<f64>, Vec<f64>) {
    let rule = gauss_legendre(nodes);
    let h = (b - a) / panels as f64;
    let mut xs = Vec::with_capacity(nodes * panels);
    let mut ws = Vec::with_capacity(nodes * panels);
    for p in 0..panels {
        let lo = a + p as f64 * h;
        for (x, w) in rule.0.iter().zip(&rule.1) {
            xs.push(lo + 0.5 * h * (x + 1.0));
            ws.push(0.5 * h * w);
        }
    }
    (xs, ws)
}

/// Integrand signature: value at a point, or a domain error.
pub trait Integrand: Fn(&[f64]) -> Result<f64> + Sync {}
impl<F: Fn(&[f64]) -> Result<f64> + Sync> Integrand for F {}

/// `∫_domain f dx` with an error estimate.
pub fn integrate(f: &impl Integrand, domain: &IntegrationDomain, q: &QuadratureSpec) -> Result<Integral> {
    match q {
        QuadratureSpec::TensorGrid {
            nodes_per_axis,
            panels,
        } => {
            if *nodes_per_axis == 0 || *panels == 0 {
                return Err(Error::Invalid("quadrature needs at least one node".into()));
            }
            let (fine, abs_sum) = tensor_rule(f, domain, *nodes_per_axis, *panels)?;
            let coarse_nodes = (*nodes_per_axis / 2).max(1);
            let (coarse, _) = tensor_rule(f, domain, coarse_nodes, *panels)?;
            let error = if coarse_nodes == *nodes_per_axis {
                f64::INFINITY
            } else {
                (fine - coarse).abs().max(ROUNDING_FLOOR * abs_sum)
            };
            Ok(Integral { value: fine, error })
        }
        QuadratureSpec::MonteCarlo { samples, seed } => monte_carlo(f, domain, *samples, *seed),
    }
}

/// Mixed-radix walk over a tensor grid; returns (Σ w f, Σ |w f|).
fn tensor_sum(f: &impl Integrand, axes: &[(Vec<f64>, Vec<f64>)], map: &(dyn Fn(&[f64]) -> (Vec<f64>, f64) + Sync)) -> Result<(f64, f64)> {
    let counts: Vec<usize> = axes.iter().map(|a| a.0.len()).collect();
    let total: usize = counts.iter().product();
    let values: Vec<Result<f64>> = (0..total)
        .into_par_iter()
        .map(|mut flat| {
            let mut u = Vec::with_capacity(axes.len());
            let mut w = 1.0;
            for (a, &c) in axes.iter().zip(&counts) {
                let i = flat % c;
                flat /= c;
                u.push(a.0[i]);
                w *= a.1[i];
            }
            let (x, jac) = map(&u);
            if jac == 0.0 || w == 0.0 {
                return Ok(0.0);
            }
            Ok(w * jac * f(&x)?)
        })
        .collect();
    let mut sum = 0.0;
    let mut abs = 0.0;
    for v in values {
        let v = v?;
        if !v.is_finite() {
            return Err(Error::Invalid("non-finite integrand value".into()));
        }
        sum += v;
        abs += v.abs();
    }
    Ok((sum, abs))
}

type CoordinateMap = Box<dyn Fn(&[f64]) -> (Vec<f64>, f64) + Sync>;

fn tensor_rule(f: &impl Integrand, domain: &IntegrationDomain, nodes: usize, panels: usize) -> Result<(f64, f64)> {
    let (axes, map) = grid(domain, nodes, panels);
    tensor_sum(f, &axes, &map)
}

/// Per-axis rules in the domain's parametrization, and the map from
/// parameters to a point with its volume Jacobian.
fn grid(domain: &IntegrationDomain, nodes: usize, panels: usize) -> (Vec<(Vec<f64>, Vec<f64>)>, CoordinateMap) {
    match domain {
        IntegrationDomain::Box { lower, upper } => {
            let axes = lower
                .iter()
                .zip(upper)
                .map(|(a, b)| axis_rule(*a, *b, nodes, panels))
                .collect();
            (axes, Box::new(|u: &[f64]| (u.to_vec(), 1.0)))
        }
        IntegrationDomain::Ball { center, radius } => {
            let n = center.len();
            let r = *radius;
            if n == 1 {
                let axes = vec![axis_rule(center[0] - r, center[0] + r, nodes, panels)];
                return (axes, Box::new(|u: &[f64]| (u.to_vec(), 1.0)));
            }
            // (radius, polar angles θ_1..θ_{n−2} ∈ [0, π], azimuth ∈ [0, 2π]).
            let mut axes = vec![axis_rule(0.0, r, nodes, panels)];
            for _ in 0..n - 2 {
                axes.push(axis_rule(0.0, PI, nodes, panels));
            }
            axes.push(axis_rule(0.0, 2.0 * PI, nodes, panels));
            let c = center.clone();
            (axes, Box::new(move |u: &[f64]| spherical(&c, u)))
        }
        IntegrationDomain::Product(factors) => {
            let mut axes = Vec::new();
            let mut maps = Vec::new();
            for f in factors {
                let (a, m) = grid(f, nodes, panels);
                maps.push((a.len(), m));
                axes.extend(a);
            }
            let map = move |u: &[f64]| {
                let mut x = Vec::with_capacity(u.len());
                let mut jac = 1.0;
                let mut offset = 0;
                for (k, m) in &maps {
                    let (p, j) = m(&u[offset..offset + k]);
                    x.extend(p);
                    jac *= j;
                    offset += k;
                }
                (x, jac)
            };
            (axes, Box::new(map))
        }
    }
}

/// Hyperspherical coordinates `u = (ρ, θ_1, …, θ_{n−1})` to a point and the
/// volume Jacobian `ρ^{n−1} Π_j sin^{n−1−j} θ_j`.
fn spherical(center: &[f64], u: &[f64]) -> (Vec<f64>, f64) {
    let n = center.len();
    let rho = u[0];
    let mut x = vec![0.0; n];
    let mut s = rho;
    let mut jac = rho.powi(n as i32 - 1);
    for j in 0..n - 1 {
        let th = u[j + 1];
        if j < n - 2 {
            x[j] = s * th.cos();
            jac *= th.sin().powi((n - 2 - j) as i32);
            s *= th.sin();
        } else {
            x[j] = s * th.cos();
            x[j + 1] = s * th.sin();
        }
    }
    for (xi, ci) in x.iter_mut().zip(center) {
        *xi += ci;
    }
    (x, jac)
}

fn monte_carlo(f: &impl Integrand, domain: &IntegrationDomain, samples: usize, seed: u64) -> Result<Integral> {
    if samples < 2 {
        return Err(Error::Invalid("monte carlo needs at least two samples".into()));
    }
    let (lower, upper) = domain.bounds();
    let box_volume: f64 = lower.iter().zip(&upper).map(|(a, b)| b - a).product();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Vec<f64>> = (0..samples)
        .map(|_| lower.iter().zip(&upper).map(|(a, b)| rng.gen_range(*a..*b)).collect())
        .collect();
    let values: Vec<Result<f64>> = points
        .par_iter()
        .map(|p| if domain.contains(p) { f(p) } else { Ok(0.0) })
        .collect();
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    for v in values {
        let v = v?;
        sum += v;
        sum2 += v * v;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = ((sum2 / n - mean * mean) * n / (n - 1.0)).max(0.0);
    Ok(Integral {
        value: box_volume * mean,
        error: box_volume * (var / n).sqrt(),
    })
}

/// The C¹ hump `(1 − |x − c|²/R²)²` inside the ball, zero outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Bump {
    /// A bump whose support, widened by [`SUPPORT_SLACK`], lies inside `domain`.
    pub fn new(center: Vec<f64>, radius: f64, domain: &ChartDomain) -> Result<Bump> {
        if center.len() != domain.dimension() {
            return Err(Error::Dimension("bump center dimension".into()));
        }
        if !(radius > 0.0) {
            return Err(Error::Invalid(format!("bump radius {radius} must be positive")));
        }
        let needed = radius * (1.0 + SUPPORT_SLACK);
        if domain.depth(&center) < needed {
            return Err(Error::Precondition(format!(
                "bump support (center {center:?}, radius {radius}) is not interior to the domain"
            )));
        }
        Ok(Bump { center, radius })
    }

    pub fn value(&self, p: &[f64]) -> f64 {
        let t = 1.0 - self.dist2(p) / (self.radius * self.radius);
        if t > 0.0 {
            t * t
        } else {
            0.0
        }
    }

    pub fn gradient(&self, p: &[f64]) -> Vec<f64> {
        let r2 = self.radius * self.radius;
        let t = 1.0 - self.dist2(p) / r2;
        p.iter()
            .zip(&self.center)
            .map(|(x, c)| if t > 0.0 { -4.0 * t * (x - c) / r2 } else { 0.0 })
            .collect()
    }

    fn dist2(&self, p: &[f64]) -> f64 {
        p.iter().zip(&self.center).map(|(x, c)| (x - c).powi(2)).sum()
    }

    /// The bump as an expression, `pos(1 − Σ(x_i − c_i)²/R²)^2`.
    pub fn expression(&self) -> Expression {
        let n = self.center.len();
        let mut d2 = Expression::zero();
        for (i, c) in self.center.iter().enumerate() {
            let xi = Expression::var(i, n) - Expression::constant(*c);
            d2 = d2 + xi.powi(2);
        }
        let inner = Expression::one() - d2 / Expression::constant(self.radius * self.radius);
        Expression::call(Func::Pos, &inner).powi(2).with_dimension(n)
    }

    /// The support ball as an integration domain.
    pub fn support(&self) -> IntegrationDomain {
        IntegrationDomain::Ball {
            center: self.center.clone(),
            radius: self.radius,
        }
    }

    /// Multiply every component of `form` by the bump.
    pub fn localize(&self, form: &DifferentialForm) -> BumpForm {
        let b = self.expression();
        BumpForm {
            form: form.map(|c| &b * c),
            bump: self.clone(),
        }
    }
}

/// A differential form supported in the ball of its bump.
#[derive(Debug, Clone)]
pub struct BumpForm {
    pub form: DifferentialForm,
    pub bump: Bump,
}

/// A grade-`k` form equal to the bump on each selected component, 0 elsewhere.
pub fn make_bump_form(
    grade: usize,
    center: Vec<f64>,
    radius: f64,
    selector: &[MultiIndex],
    domain: &ChartDomain,
) -> Result<BumpForm> {
    let bump = Bump::new(center, radius, domain)?;
    let n = domain.dimension();
    let mut comps = vec![Expression::zero(); crate::exterior::binomial(n, grade)];
    let b = bump.expression();
    let all = crate::exterior::multi_indices(n, grade);
    for idx in selector {
        let pos = all
            .iter()
            .position(|m| m == idx)
            .ok_or_else(|| Error::Grade(format!("selector {idx} is not a grade-{grade} index")))?;
        comps[pos] = b.clone();
    }
    Ok(BumpForm {
        form: DifferentialForm::new(grade, comps, domain)?,
        bump,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::exterior_derivative;

    fn bx(lo: f64, hi: f64, n: usize) -> IntegrationDomain {
        IntegrationDomain::Box {
            lower: vec![lo; n],
            upper: vec![hi; n],
        }
    }

    #[test]
    fn gauss_rule_sanity() {
        for n in 1..=20 {
            let r = gauss_legendre(n);
            let s: f64 = r.1.iter().sum();
            assert!((s - 2.0).abs() < 1e-14, "order {n}");
            assert!(r.0.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn constant_on_unit_square() {
        for q in [QuadratureSpec::gauss(1), QuadratureSpec::gauss(7)] {
            let i = integrate(&|_: &[f64]| Ok(1.0), &bx(0.0, 1.0, 2), &q).unwrap();
            assert!((i.value - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn three_point_rule_is_exact_to_degree_five() {
        // ∫_{[0,1]^2} x^5 y^4 + x^3 y = 1/30 + 1/8.
        let f = |p: &[f64]| Ok(p[0].powi(5) * p[1].powi(4) + p[0].powi(3) * p[1]);
        let i = integrate(&f, &bx(0.0, 1.0, 2), &QuadratureSpec::gauss(3)).unwrap();
        assert!((i.value - (1.0 / 30.0 + 1.0 / 8.0)).abs() < 1e-15);
        let g = |p: &[f64]| Ok(p[0].powi(6));
        let j = integrate(&g, &bx(0.0, 1.0, 1), &QuadratureSpec::gauss(3)).unwrap();
        assert!((j.value - 1.0 / 7.0).abs() > 1e-6);
    }

    #[test]
    fn gaussian_normalization() {
        let f = |p: &[f64]| Ok((-(p[0] * p[0] + p[1] * p[1]) / 2.0).exp() / (2.0 * PI));
        let i = integrate(&f, &bx(-6.0, 6.0, 2), &QuadratureSpec::gauss(64)).unwrap();
        // Truncation: 1 − (1 − 2Φ(−6))² ≈ 3.9e−9.
        assert!((i.value - 1.0).abs() < 1e-8, "{}", i.value);
        assert!(i.error < 1e-8);
    }

    #[test]
    fn ball_volumes_and_moments() {
        for n in 1..=5 {
            let d = IntegrationDomain::Ball {
                center: vec![0.3; n],
                radius: 0.7,
            };
            let i = integrate(&|_: &[f64]| Ok(1.0), &d, &QuadratureSpec::gauss(16)).unwrap();
            assert!((i.value - ball_volume(n, 0.7)).abs() < 1e-12, "n={n}");
        }
        // ∫_{unit disk} x^2 = π/4.
        let d = IntegrationDomain::Ball {
            center: vec![0.0, 0.0],
            radius: 1.0,
        };
        let i = integrate(&|p: &[f64]| Ok(p[0] * p[0]), &d, &QuadratureSpec::gauss(16)).unwrap();
        assert!((i.value - PI / 4.0).abs() < 1e-13);
        assert!((ball_volume(3, 1.0) - 4.0 * PI / 3.0).abs() < 1e-15);
    }

    #[test]
    fn product_of_disk_and_interval() {
        // ∫_{disk × [0,2]} (x0² + z) = (π/4)·2 + π·2 = 5π/2.
        let domain = IntegrationDomain::Product(vec![
            IntegrationDomain::Ball {
                center: vec![0.0, 0.0],
                radius: 1.0,
            },
            IntegrationDomain::Box {
                lower: vec![0.0],
                upper: vec![2.0],
            },
        ]);
        assert_eq!(domain.dimension(), 3);
        assert!((domain.volume() - 2.0 * PI).abs() < 1e-15);
        let r = integrate(&|p: &[f64]| Ok(p[0] * p[0] + p[2]), &domain, &QuadratureSpec::gauss(16)).unwrap();
        assert!((r.value - 2.5 * PI).abs() < 1e-13, "{r:?}");
        assert!(domain.contains(&[0.5, 0.5, 1.0]));
        assert!(!domain.contains(&[0.8, 0.8, 1.0]));
        let mc = integrate(&|_: &[f64]| Ok(1.0), &domain, &QuadratureSpec::monte_carlo(20_000, 1)).unwrap();
        assert!((mc.value - 2.0 * PI).abs() < 5.0 * mc.error);
    }

    #[test]
    fn bump_integral_over_its_support() {
        // ∫ (1 − |x|²)² over the unit disk = 2π ∫_0^1 (1 − r²)² r dr = π/3.
        let dom = ChartDomain::cube(2, -2.0, 2.0).unwrap();
        let b = Bump::new(vec![0.0, 0.0], 1.0, &dom).unwrap();
        let i = integrate(&|p: &[f64]| Ok(b.value(p)), &b.support(), &QuadratureSpec::gauss(6)).unwrap();
        assert!((i.value - PI / 3.0).abs() < 1e-14);
    }

    #[test]
    fn monte_carlo_is_deterministic_and_converges() {
        let f = |p: &[f64]| Ok((p[0] * p[1]).cos() + p[0]);
        let exact = integrate(&f, &bx(0.0, 1.0, 2), &QuadratureSpec::gauss(20)).unwrap().value;
        let a = integrate(&f, &bx(0.0, 1.0, 2), &QuadratureSpec::monte_carlo(1000, 7)).unwrap();
        let b = integrate(&f, &bx(0.0, 1.0, 2), &QuadratureSpec::monte_carlo(1000, 7)).unwrap();
        assert_eq!(a, b);
        // Average |error| over seeds at three sample sizes; slope ≈ −1/2.
        let mut logs = Vec::new();
        for &n in &[1000usize, 10_000, 100_000] {
            let mean_err: f64 = (0..16u64)
                .map(|s| {
                    let i = integrate(&f, &bx(0.0, 1.0, 2), &QuadratureSpec::monte_carlo(n, s)).unwrap();
                    (i.value - exact).powi(2)
                })
                .sum::<f64>()
                / 16.0;
            logs.push(((n as f64).ln(), mean_err.sqrt().ln()));
        }
        let slope = (logs[2].1 - logs[0].1) / (logs[2].0 - logs[0].0);
        assert!((slope + 0.5).abs() < 0.15, "slope {slope}");
    }

    #[test]
    fn integration_is_linear() {
        let f = |p: &[f64]| Ok(p[0].sin() * p[1]);
        let g = |p: &[f64]| Ok((p[0] + p[1]).exp());
        let h = |p: &[f64]| Ok(2.0 * f(p)? - 3.0 * g(p)?);
        let q = QuadratureSpec::gauss(9);
        let d = bx(-1.0, 1.0, 2);
        let (a, b, c) = (
            integrate(&f, &d, &q).unwrap().value,
            integrate(&g, &d, &q).unwrap().value,
            integrate(&h, &d, &q).unwrap().value,
        );
        assert!((c - (2.0 * a - 3.0 * b)).abs() <= 1e-12 * c.abs().max(1.0));
    }

    #[test]
    fn zero_nodes_rejected() {
        let r = integrate(&|_: &[f64]| Ok(1.0), &bx(0.0, 1.0, 1), &QuadratureSpec::gauss(0));
        assert!(r.is_err());
    }

    #[test]
    fn bump_form_properties() {
        let dom = ChartDomain::cube(3, -1.0, 1.0).unwrap();
        let w0 = make_bump_form(0, vec![0.0; 3], 0.5, &[MultiIndex::new(&[], 3).unwrap()], &dom)
            .unwrap()
            .form;
        assert_eq!(w0.eval(&[0.0; 3]).unwrap().components()[0], 1.0);
        assert!(make_bump_form(0, vec![0.6, 0.0, 0.0], 0.4, &[], &dom).is_err());

        // C¹ seam: finite-difference gradient at |x − c| = R is zero. The
        // one-sided second derivative makes the quotient O(h).
        let b = Bump::new(vec![0.1, 0.0, 0.0], 0.5, &dom).unwrap();
        let seam = [0.6, 0.0, 0.0];
        let h = 1e-8;
        for i in 0..3 {
            let mut a = seam;
            let mut c = seam;
            a[i] += h;
            c[i] -= h;
            let fd = (b.value(&a) - b.value(&c)) / (2.0 * h);
            assert!(fd.abs() <= 1e-6, "axis {i}: {fd}");
        }
        let (v, g) = b.expression().eval_grad(&seam).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.iter().all(|x| *x == 0.0));

        // d of a bump form vanishes outside the ball.
        let sel = [MultiIndex::new(&[0], 3).unwrap(), MultiIndex::new(&[2], 3).unwrap()];
        let w = make_bump_form(1, vec![0.0; 3], 0.5, &sel, &dom).unwrap().form;
        let dw = exterior_derivative(&w);
        for p in [[0.6, 0.0, 0.0], [0.0, -0.51, 0.2], [0.4, 0.4, 0.4]] {
            assert!(dw.eval(&p).unwrap().is_zero());
            assert!(w.eval(&p).unwrap().is_zero());
        }
        assert!(!dw.eval(&[0.1, 0.2, 0.0]).unwrap().is_zero());
    }
}
