//! Pointwise exterior algebra over `R^n`.
//!
//! An [`AlternatingTensor`] is a grade-`k` vector (element of `Λ^k R^n`) or
//! covector (`Λ^k (R^n)*`) stored densely, one coefficient per strictly
//! increasing multi-index, in lexicographic order. Coefficients are generic
//! so the same algebra runs on numbers and on symbolic [`Expression`]s.
//!
//! Sign conventions:
//!
//! * pairing `⟨ω, X⟩ = Σ_I ω_I X^I`, which equals `det[ω_a(X_b)]` on
//!   decomposables;
//! * `i_X ω` for `X = X_1 ∧ … ∧ X_m` is `i_{X_m} ⋯ i_{X_1} ω`, so
//!   `⟨i_X ω, Z⟩ = ⟨ω, X ∧ Z⟩`;
//! * `j_ω X` satisfies `⟨η, j_ω X⟩ = ⟨ω ∧ η, X⟩`.
//!
//! Every permutation sign is an explicit inversion count over bitmasks.

use std::fmt;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::expr::Expression;

/// Largest supported ambient dimension.
pub const MAX_DIMENSION: usize = 16;

/// Scalar type usable as a tensor coefficient.
pub trait Coefficient: Clone + fmt::Debug + Send + Sync {
    fn zero() -> Self;
    fn from_f64(v: f64) -> Self;
    fn is_zero(&self) -> bool;
    fn plus(&self, other: &Self) -> Self;
    fn minus(&self, other: &Self) -> Self;
    fn times(&self, other: &Self) -> Self;
    fn over(&self, other: &Self) -> Self;
    fn negated(&self) -> Self;
    fn scaled(&self, c: f64) -> Self;
}

impl Coefficient for f64 {
    fn zero() -> f64 {
        0.0
    }
    fn from_f64(v: f64) -> f64 {
        v
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn plus(&self, o: &f64) -> f64 {
        self + o
    }
    fn minus(&self, o: &f64) -> f64 {
        self - o
    }
    fn times(&self, o: &f64) -> f64 {
        self * o
    }
    fn over(&self, o: &f64) -> f64 {
        self / o
    }
    fn negated(&self) -> f64 {
        -self
    }
    fn scaled(&self, c: f64) -> f64 {
        self * c
    }
}

impl Coefficient for Expression {
    fn zero() -> Expression {
        Expression::zero()
    }
    fn from_f64(v: f64) -> Expression {
        Expression::constant(v)
    }
    fn is_zero(&self) -> bool {
        Expression::is_zero(self)
    }
    fn plus(&self, o: &Expression) -> Expression {
        self + o
    }
    fn minus(&self, o: &Expression) -> Expression {
        self - o
    }
    fn times(&self, o: &Expression) -> Expression {
        self * o
    }
    fn over(&self, o: &Expression) -> Expression {
        self / o
    }
    fn negated(&self) -> Expression {
        -self
    }
    fn scaled(&self, c: f64) -> Expression {
        self.clone() * c
    }
}

// ---------------------------------------------------------------------------
// Multi-indices and layouts.

/// Strictly increasing index set `i_1 < … < i_k` in `[0, n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex {
    mask: u32,
    dim: u8,
}

impl MultiIndex {
    pub fn new(indices: &[usize], dim: usize) -> Result<MultiIndex> {
        check_dim(dim)?;
        let mut mask = 0u32;
        let mut prev: Option<usize> = None;
        for &i in indices {
            if i >= dim {
                return Err(Error::Dimension(format!(
                    "index {i} outside dimension {dim}"
                )));
            }
            if prev.is_some_and(|p| p >= i) {
                return Err(Error::Invalid(format!(
                    "multi-index {indices:?} is not strictly increasing"
                )));
            }
            prev = Some(i);
            mask |= 1 << i;
        }
        Ok(MultiIndex {
            mask,
            dim: dim as u8,
        })
    }

    pub(crate) fn from_mask(mask: u32, dim: usize) -> MultiIndex {
        MultiIndex {
            mask,
            dim: dim as u8,
        }
    }

    pub fn dimension(&self) -> usize {
        self.dim as usize
    }

    pub fn grade(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn mask(&self) -> u32 {
        self.mask
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..self.dimension())
            .filter(|i| self.mask >> i & 1 == 1)
            .collect()
    }

    pub fn complement(&self) -> MultiIndex {
        MultiIndex {
            mask: full_mask(self.dimension()) & !self.mask,
            dim: self.dim,
        }
    }

    /// `sgn(I, Iᶜ)`: sign of the permutation sorting `(I, Iᶜ)`.
    pub fn complement_sign(&self) -> f64 {
        shuffle_sign(self.mask, self.complement().mask)
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.indices().iter().map(|i| i.to_string()).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

fn full_mask(dim: usize) -> u32 {
    if dim == 32 {
        u32::MAX
    } else {
        (1u32 << dim) - 1
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 || dim > MAX_DIMENSION {
        return Err(Error::Dimension(format!(
            "dimension {dim} outside 1..={MAX_DIMENSION}"
        )));
    }
    Ok(())
}

/// `sgn(I, J)`: the sign of the shuffle that sorts the concatenation `(I, J)`,
/// i.e. `(-1)^{#{(i, j) ∈ I × J : i > j}}`. Zero when `I` and `J` overlap.
pub fn shuffle_sign(i: u32, j: u32) -> f64 {
    if i & j != 0 {
        return 0.0;
    }
    let mut inversions = 0u32;
    let mut rest = i;
    while rest != 0 {
        let bit = rest.trailing_zeros();
        inversions += (j & ((1u32 << bit) - 1)).count_ones();
        rest &= rest - 1;
    }
    if inversions.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Binomial coefficient `C(n, k)`.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Lexicographic enumeration of all multi-indices of one dimension.
struct Layout {
    by_grade: Vec<Vec<u32>>,
    rank: Vec<u32>,
}

fn layout(dim: usize) -> &'static Layout {
    static CACHE: [OnceLock<Layout>; MAX_DIMENSION + 1] =
        [const { OnceLock::new() }; MAX_DIMENSION + 1];
    CACHE[dim].get_or_init(|| {
        let mut by_grade: Vec<Vec<u32>> = vec![Vec::new(); dim + 1];
        // Depth-first generation visits strictly increasing tuples in
        // lexicographic order.
        fn gen(dim: usize, start: usize, mask: u32, out: &mut [Vec<u32>]) {
            for i in start..dim {
                let m = mask | 1 << i;
                out[m.count_ones() as usize].push(m);
                gen(dim, i + 1, m, out);
            }
        }
        by_grade[0].push(0);
        gen(dim, 0, 0, &mut by_grade);
        let mut rank = vec![0u32; 1 << dim];
        for g in &by_grade {
            for (r, &m) in g.iter().enumerate() {
                rank[m as usize] = r as u32;
            }
        }
        Layout { by_grade, rank }
    })
}

/// All multi-indices of grade `k` in dimension `n`, in storage order.
pub fn multi_indices(dim: usize, grade: usize) -> Vec<MultiIndex> {
    if grade > dim {
        return Vec::new();
    }
    layout(dim).by_grade[grade]
        .iter()
        .map(|&m| MultiIndex::from_mask(m, dim))
        .collect()
}

// ---------------------------------------------------------------------------
// Tensors.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variance {
    Vector,
    Covector,
}

/// Grade-`k` element of `Λ^k R^n` or its dual, dense in lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct AlternatingTensor<T = f64> {
    dim: usize,
    grade: usize,
    variance: Variance,
    components: Vec<T>,
}

impl<T: Coefficient> AlternatingTensor<T> {
    pub fn zeros(dim: usize, grade: usize, variance: Variance) -> AlternatingTensor<T> {
        assert!(
            (1..=MAX_DIMENSION).contains(&dim),
            "dimension {dim} unsupported"
        );
        AlternatingTensor {
            dim,
            grade,
            variance,
            components: vec![T::zero(); binomial(dim, grade)],
        }
    }

    pub fn from_components(
        dim: usize,
        grade: usize,
        variance: Variance,
        components: Vec<T>,
    ) -> Result<AlternatingTensor<T>> {
        check_dim(dim)?;
        let expected = binomial(dim, grade);
        if components.len() != expected {
            return Err(Error::Dimension(format!(
                "grade {grade} in dimension {dim} has {expected} components, got {}",
                components.len()
            )));
        }
        Ok(AlternatingTensor {
            dim,
            grade,
            variance,
            components,
        })
    }

    pub fn scalar(dim: usize, value: T, variance: Variance) -> AlternatingTensor<T> {
        let mut t = AlternatingTensor::zeros(dim, 0, variance);
        t.components[0] = value;
        t
    }

    /// The grade-1 tensor with the given coordinates.
    pub fn vector(components: Vec<T>, variance: Variance) -> AlternatingTensor<T> {
        let dim = components.len();
        assert!(
            (1..=MAX_DIMENSION).contains(&dim),
            "dimension {dim} unsupported"
        );
        AlternatingTensor {
            dim,
            grade: 1,
            variance,
            components,
        }
    }

    /// `e_I` or `dx^I` with unit coefficient.
    pub fn basis(index: MultiIndex, variance: Variance) -> AlternatingTensor<T> {
        let mut t = AlternatingTensor::zeros(index.dimension(), index.grade(), variance);
        t.set(index, T::from_f64(1.0));
        t
    }

    /// `v_1 ∧ … ∧ v_k` of grade-1 tensors; the empty product is the scalar 1.
    pub fn wedge_all(
        factors: &[AlternatingTensor<T>],
        dim: usize,
        variance: Variance,
    ) -> Result<AlternatingTensor<T>> {
        let mut acc = AlternatingTensor::scalar(dim, T::from_f64(1.0), variance);
        for f in factors {
            acc = acc.wedge(f)?;
        }
        Ok(acc)
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn grade(&self) -> usize {
        self.grade
    }

    pub fn variance(&self) -> Variance {
        self.variance
    }

    pub fn components(&self) -> &[T] {
        &self.components
    }

    pub fn into_components(self) -> Vec<T> {
        self.components
    }

    pub fn indices(&self) -> Vec<MultiIndex> {
        multi_indices(self.dim, self.grade)
    }

    /// `(index, coefficient)` pairs in storage order.
    pub fn iter(&self) -> impl Iterator<Item = (MultiIndex, &T)> + '_ {
        let masks = masks(self.dim, self.grade);
        let dim = self.dim;
        self.components
            .iter()
            .enumerate()
            .map(move |(r, c)| (MultiIndex::from_mask(masks[r], dim), c))
    }

    pub fn get(&self, index: MultiIndex) -> T {
        debug_assert_eq!(index.dimension(), self.dim);
        if index.grade() != self.grade {
            return T::zero();
        }
        self.components[rank(self.dim, index.mask())].clone()
    }

    pub fn set(&mut self, index: MultiIndex, value: T) {
        assert_eq!(index.grade(), self.grade, "grade mismatch in set");
        let r = rank(self.dim, index.mask());
        self.components[r] = value;
    }

    fn add_at(&mut self, mask: u32, value: T) {
        let r = rank(self.dim, mask);
        self.components[r] = self.components[r].plus(&value);
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(|c| c.is_zero())
    }

    pub fn map<U: Coefficient>(&self, f: impl Fn(&T) -> U) -> AlternatingTensor<U> {
        AlternatingTensor {
            dim: self.dim,
            grade: self.grade,
            variance: self.variance,
            components: self.components.iter().map(f).collect(),
        }
    }

    pub fn try_map<U: Coefficient, E>(
        &self,
        f: impl Fn(&T) -> std::result::Result<U, E>,
    ) -> std::result::Result<AlternatingTensor<U>, E> {
        Ok(AlternatingTensor {
            dim: self.dim,
            grade: self.grade,
            variance: self.variance,
            components: self
                .components
                .iter()
                .map(f)
                .collect::<std::result::Result<_, E>>()?,
        })
    }

    pub fn scale(&self, c: f64) -> AlternatingTensor<T> {
        self.map(|x| x.scaled(c))
    }

    /// Multiply every coefficient by a coefficient-typed factor.
    pub fn times(&self, c: &T) -> AlternatingTensor<T> {
        self.map(|x| c.times(x))
    }

    pub fn negated(&self) -> AlternatingTensor<T> {
        self.map(|x| x.negated())
    }

    fn same_shape(&self, other: &AlternatingTensor<T>, op: &str) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::Dimension(format!(
                "{op}: dimensions {} and {}",
                self.dim, other.dim
            )));
        }
        if self.variance != other.variance {
            return Err(Error::Invalid(format!("{op}: variance mismatch")));
        }
        if self.grade != other.grade {
            return Err(Error::Grade(format!(
                "{op}: grades {} and {}",
                self.grade, other.grade
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &AlternatingTensor<T>) -> Result<AlternatingTensor<T>> {
        self.same_shape(other, "add")?;
        Ok(self.zip(other, |a, b| a.plus(b)))
    }

    pub fn sub(&self, other: &AlternatingTensor<T>) -> Result<AlternatingTensor<T>> {
        self.same_shape(other, "sub")?;
        Ok(self.zip(other, |a, b| a.minus(b)))
    }

    fn zip(&self, other: &AlternatingTensor<T>, f: impl Fn(&T, &T) -> T) -> AlternatingTensor<T> {
        AlternatingTensor {
            dim: self.dim,
            grade: self.grade,
            variance: self.variance,
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| f(a, b))
                .collect(),
        }
    }

    /// Exterior product; zero of grade `k + m` when that exceeds `n`.
    pub fn wedge(&self, other: &AlternatingTensor<T>) -> Result<AlternatingTensor<T>> {
        if self.dim != other.dim {
            return Err(Error::Dimension(format!(
                "wedge: dimensions {} and {}",
                self.dim, other.dim
            )));
        }
        if self.variance != other.variance {
            return Err(Error::Invalid("wedge: variance mismatch".into()));
        }
        let grade = self.grade + other.grade;
        let mut out = AlternatingTensor::zeros(self.dim, grade, self.variance);
        if grade > self.dim {
            return Ok(out);
        }
        let (ma, mb) = (masks(self.dim, self.grade), masks(self.dim, other.grade));
        for (ra, a) in self.components.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (rb, b) in other.components.iter().enumerate() {
                if b.is_zero() || ma[ra] & mb[rb] != 0 {
                    continue;
                }
                let term = a.times(b).scaled(shuffle_sign(ma[ra], mb[rb]));
                out.add_at(ma[ra] | mb[rb], term);
            }
        }
        Ok(out)
    }

    /// `⟨ω, X⟩ = Σ_I ω_I X^I` between a covector and a vector of equal grade.
    pub fn pair(omega: &AlternatingTensor<T>, x: &AlternatingTensor<T>) -> Result<T> {
        check_roles(omega, x, "pair")?;
        if omega.grade != x.grade {
            return Err(Error::Grade(format!(
                "pair: form of grade {} with vector of grade {}",
                omega.grade, x.grade
            )));
        }
        Ok(omega
            .components
            .iter()
            .zip(&x.components)
            .fold(T::zero(), |acc, (a, b)| acc.plus(&a.times(b))))
    }

    /// `i_X ω = i_{X_m} ⋯ i_{X_1} ω`; zero of grade 0 when `m > k`.
    ///
    /// Componentwise `(i_X ω)_J = Σ_I sgn(I, J) X^I ω_{I ∪ J}`.
    pub fn interior_by_multivector(
        omega: &AlternatingTensor<T>,
        x: &AlternatingTensor<T>,
    ) -> Result<AlternatingTensor<T>> {
        check_roles(omega, x, "interior_by_multivector")?;
        let dim = omega.dim;
        if x.grade > omega.grade {
            return Ok(AlternatingTensor::zeros(dim, 0, Variance::Covector));
        }
        let grade = omega.grade - x.grade;
        let mut out = AlternatingTensor::zeros(dim, grade, Variance::Covector);
        let (mx, mo) = (masks(dim, x.grade), masks(dim, omega.grade));
        for (rx, xi) in x.components.iter().enumerate() {
            if xi.is_zero() {
                continue;
            }
            let i = mx[rx];
            for (ro, w) in omega.components.iter().enumerate() {
                let full = mo[ro];
                if full & i != i || w.is_zero() {
                    continue;
                }
                let j = full & !i;
                out.add_at(j, xi.times(w).scaled(shuffle_sign(i, j)));
            }
        }
        Ok(out)
    }

    /// `j_ω X`; zero of grade 0 when `k > m`.
    ///
    /// Componentwise `(j_ω X)^J = Σ_I sgn(I, J) ω_I X^{I ∪ J}`.
    pub fn interior_by_form(
        omega: &AlternatingTensor<T>,
        x: &AlternatingTensor<T>,
    ) -> Result<AlternatingTensor<T>> {
        check_roles(omega, x, "interior_by_form")?;
        let dim = omega.dim;
        if omega.grade > x.grade {
            return Ok(AlternatingTensor::zeros(dim, 0, Variance::Vector));
        }
        let grade = x.grade - omega.grade;
        let mut out = AlternatingTensor::zeros(dim, grade, Variance::Vector);
        let (mo, mx) = (masks(dim, omega.grade), masks(dim, x.grade));
        for (ro, w) in omega.components.iter().enumerate() {
            if w.is_zero() {
                continue;
            }
            let i = mo[ro];
            for (rx, xv) in x.components.iter().enumerate() {
                let full = mx[rx];
                if full & i != i || xv.is_zero() {
                    continue;
                }
                let j = full & !i;
                out.add_at(j, w.times(xv).scaled(shuffle_sign(i, j)));
            }
        }
        Ok(out)
    }

    /// `i_X Ω` for `Ω = ρ dx^0 ∧ ⋯ ∧ dx^{n-1}`.
    pub fn omega_flat(x: &AlternatingTensor<T>, rho: &T) -> Result<AlternatingTensor<T>> {
        if x.variance != Variance::Vector {
            return Err(Error::Invalid("omega_flat expects a vector".into()));
        }
        let dim = x.dim;
        let mut out = AlternatingTensor::zeros(dim, dim - x.grade, Variance::Covector);
        let mx = masks(dim, x.grade);
        let full = full_mask(dim);
        for (r, xi) in x.components.iter().enumerate() {
            let i = mx[r];
            let c = full & !i;
            out.set(
                MultiIndex::from_mask(c, dim),
                xi.times(rho).scaled(shuffle_sign(i, c)),
            );
        }
        Ok(out)
    }

    /// Inverse of [`omega_flat`](Self::omega_flat).
    pub fn omega_sharp(eta: &AlternatingTensor<T>, rho: &T) -> Result<AlternatingTensor<T>> {
        if eta.variance != Variance::Covector {
            return Err(Error::Invalid("omega_sharp expects a covector".into()));
        }
        let dim = eta.dim;
        let mut out = AlternatingTensor::zeros(dim, dim - eta.grade, Variance::Vector);
        let me = masks(dim, eta.grade);
        let full = full_mask(dim);
        for (r, e) in eta.components.iter().enumerate() {
            let c = me[r];
            let i = full & !c;
            out.set(
                MultiIndex::from_mask(i, dim),
                e.over(rho).scaled(shuffle_sign(i, c)),
            );
        }
        Ok(out)
    }
}

impl AlternatingTensor<f64> {
    /// Euclidean norm of the component vector.
    pub fn norm(&self) -> f64 {
        self.components.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.components.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Evaluate a covector as a multilinear alternating function:
    /// `ω(v_1, …, v_k) = Σ_I ω_I det[v_b^{I_a}]`.
    pub fn evaluate_on(&self, vectors: &[Vec<f64>]) -> Result<f64> {
        if self.variance != Variance::Covector {
            return Err(Error::Invalid("evaluate_on expects a covector".into()));
        }
        if vectors.len() != self.grade {
            return Err(Error::Grade(format!(
                "{}-form evaluated on {} vectors",
                self.grade,
                vectors.len()
            )));
        }
        let mut total = 0.0;
        for (idx, w) in self.iter() {
            if *w == 0.0 {
                continue;
            }
            let rows = idx.indices();
            let k = rows.len();
            let m = nalgebra::DMatrix::from_fn(k, k, |a, b| vectors[b][rows[a]]);
            total += w * if k == 0 { 1.0 } else { m.determinant() };
        }
        Ok(total)
    }
}

fn check_roles<T>(omega: &AlternatingTensor<T>, x: &AlternatingTensor<T>, op: &str) -> Result<()> {
    if omega.dim != x.dim {
        return Err(Error::Dimension(format!(
            "{op}: dimensions {} and {}",
            omega.dim, x.dim
        )));
    }
    if omega.variance != Variance::Covector || x.variance != Variance::Vector {
        return Err(Error::Invalid(format!("{op}: expects (covector, vector)")));
    }
    Ok(())
}

fn masks(dim: usize, grade: usize) -> &'static [u32] {
    if grade > dim {
        return &[];
    }
    &layout(dim).by_grade[grade]
}

fn rank(dim: usize, mask: u32) -> usize {
    layout(dim).rank[mask as usize] as usize
}

/// Sign of a permutation given as a list of images, by inversion counting.
pub fn permutation_sign(perm: &[usize]) -> f64 {
    let mut inversions = 0usize;
    for a in 0..perm.len() {
        for b in a + 1..perm.len() {
            if perm[a] > perm[b] {
                inversions += 1;
            }
        }
    }
    if inversions.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// All permutations of `0..m` in lexicographic order.
pub fn permutations(m: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..m).collect();
    loop {
        out.push(cur.clone());
        // Next lexicographic permutation.
        let Some(i) = (1..m).rev().find(|&i| cur[i - 1] < cur[i]) else {
            return out;
        };
        let j = (i..m).rev().find(|&j| cur[j] > cur[i - 1]).unwrap();
        cur.swap(i - 1, j);
        cur[i..].reverse();
    }
}

/// `j_ω (X_1 ∧ … ∧ X_m)` by the signed permutation sum
/// `1/(k!(m-k)!) Σ_σ sgn(σ) ω(X_σ(1), …, X_σ(k)) X_σ(k+1) ∧ … ∧ X_σ(m)`.
pub fn interior_by_form_permutation_sum(
    omega: &AlternatingTensor<f64>,
    factors: &[Vec<f64>],
) -> Result<AlternatingTensor<f64>> {
    let (k, m, dim) = (omega.grade(), factors.len(), omega.dimension());
    if k > m {
        return Ok(AlternatingTensor::zeros(dim, 0, Variance::Vector));
    }
    let factorial = |n: usize| (1..=n).product::<usize>() as f64;
    let norm = 1.0 / (factorial(k) * factorial(m - k));
    let mut out = AlternatingTensor::zeros(dim, m - k, Variance::Vector);
    for perm in permutations(m) {
        let head: Vec<Vec<f64>> = perm[..k].iter().map(|&a| factors[a].clone()).collect();
        let w = omega.evaluate_on(&head)?;
        if w == 0.0 {
            continue;
        }
        let tail: Vec<AlternatingTensor<f64>> = perm[k..]
            .iter()
            .map(|&a| AlternatingTensor::vector(factors[a].clone(), Variance::Vector))
            .collect();
        let rest = AlternatingTensor::wedge_all(&tail, dim, Variance::Vector)?;
        out = out.add(&rest.scale(permutation_sign(&perm) * w * norm))?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    type T = AlternatingTensor<f64>;

    fn mi(ix: &[usize], n: usize) -> MultiIndex {
        MultiIndex::new(ix, n).unwrap()
    }

    fn e(ix: &[usize], n: usize) -> T {
        T::basis(mi(ix, n), Variance::Vector)
    }

    fn dx(ix: &[usize], n: usize) -> T {
        T::basis(mi(ix, n), Variance::Covector)
    }

    fn close(a: &T, b: &T, tol: f64) -> bool {
        a.grade() == b.grade() && a.sub(b).map(|d| d.max_abs() <= tol).unwrap_or(false)
    }

    #[test]
    fn lexicographic_layout() {
        let order: Vec<Vec<usize>> = multi_indices(4, 2).iter().map(|m| m.indices()).collect();
        assert_eq!(
            order,
            vec![
                vec![0, 1],
                vec![0, 2],
                vec![0, 3],
                vec![1, 2],
                vec![1, 3],
                vec![2, 3]
            ]
        );
        assert_eq!(multi_indices(5, 3).len(), 10);
        assert!(MultiIndex::new(&[2, 1], 3).is_err());
        assert!(MultiIndex::new(&[3], 3).is_err());
    }

    #[test]
    fn shuffle_signs() {
        assert_eq!(shuffle_sign(0b001, 0b010), 1.0);
        assert_eq!(shuffle_sign(0b010, 0b001), -1.0);
        assert_eq!(shuffle_sign(0b011, 0b011), 0.0);
        // sgn({1}, {0, 2}) = -1: one pair (1 > 0).
        assert_eq!(mi(&[1], 3).complement_sign(), -1.0);
    }

    #[test]
    fn wedge_basics() {
        let n = 3;
        let e12 = e(&[0], n).wedge(&e(&[1], n)).unwrap();
        assert!(close(&e12, &e(&[0, 1], n), 0.0));
        let e21 = e(&[1], n).wedge(&e(&[0], n)).unwrap();
        assert!(close(&e21, &e12.negated(), 0.0));
        let sum = e(&[0], n).add(&e(&[1], n)).unwrap();
        assert!(close(&sum.wedge(&e(&[1], n)).unwrap(), &e12, 0.0));
        let top = e(&[0, 1], n).wedge(&e(&[0, 2], n)).unwrap();
        assert_eq!(top.grade(), 4);
        assert!(top.components().is_empty());
        assert!(e(&[0], 3).wedge(&dx(&[0], 3)).is_err());
        assert!(e(&[0], 3).wedge(&e(&[0], 4)).is_err());
    }

    #[test]
    fn pairing_signs() {
        let n = 3;
        assert_eq!(T::pair(&dx(&[0, 1], n), &e(&[0, 1], n)).unwrap(), 1.0);
        let e21 = e(&[1], n).wedge(&e(&[0], n)).unwrap();
        assert_eq!(T::pair(&dx(&[0, 1], n), &e21).unwrap(), -1.0);
        assert!(T::pair(&dx(&[0], n), &e(&[0, 1], n)).is_err());
    }

    #[test]
    fn interior_by_multivector_examples() {
        let n = 3;
        let vol = dx(&[0, 1, 2], n);
        let a = T::interior_by_multivector(&vol, &e(&[0], n)).unwrap();
        assert!(close(&a, &dx(&[1, 2], n), 0.0));
        let b = T::interior_by_multivector(&vol, &e(&[0, 1], n)).unwrap();
        assert!(close(&b, &dx(&[2], n), 0.0));
        // i_{e1∧e2} = i_{e2} i_{e1}, checked by iterating single contractions.
        let iter = T::interior_by_multivector(
            &T::interior_by_multivector(&vol, &e(&[0], n)).unwrap(),
            &e(&[1], n),
        )
        .unwrap();
        assert!(close(&iter, &b, 0.0));
        let z = T::interior_by_multivector(&dx(&[0, 1], n), &e(&[0, 1, 2], n)).unwrap();
        assert!(z.is_zero() && z.grade() == 0);
    }

    #[test]
    fn interior_by_form_examples() {
        let n = 3;
        let r = T::interior_by_form(&dx(&[0], n), &e(&[0, 1], n)).unwrap();
        assert!(close(&r, &e(&[1], n), 0.0));
        let brute = interior_by_form_permutation_sum(
            &dx(&[0], n),
            &[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]],
        )
        .unwrap();
        assert!(close(&brute, &e(&[1], n), 1e-15));
        let z = T::interior_by_form(&dx(&[0, 1], n), &e(&[0], n)).unwrap();
        assert!(z.is_zero() && z.grade() == 0);
        let c = T::scalar(n, 2.5, Variance::Covector);
        let x = e(&[0, 2], n);
        assert!(close(
            &T::interior_by_form(&c, &x).unwrap(),
            &x.scale(2.5),
            0.0
        ));
    }

    #[test]
    fn flat_and_sharp_examples() {
        let n = 3;
        assert!(close(
            &T::omega_flat(&e(&[0], n), &1.0).unwrap(),
            &dx(&[1, 2], n),
            0.0
        ));
        assert!(close(
            &T::omega_flat(&e(&[0, 1], n), &1.0).unwrap(),
            &dx(&[2], n),
            0.0
        ));
        assert!(T::omega_flat(&T::zeros(n, 1, Variance::Vector), &1.0)
            .unwrap()
            .is_zero());
        assert!(close(
            &T::omega_sharp(&dx(&[1, 2], n), &1.0).unwrap(),
            &e(&[0], n),
            0.0
        ));
        // Flat agrees with contracting the volume form.
        let x = T::from_components(n, 2, Variance::Vector, vec![0.3, -1.2, 2.0]).unwrap();
        let vol = dx(&[0, 1, 2], n).scale(1.7);
        let a = T::interior_by_multivector(&vol, &x).unwrap();
        assert!(close(&T::omega_flat(&x, &1.7).unwrap(), &a, 1e-15));
    }

    #[test]
    fn alternating_evaluation_matches_pairing_on_decomposables() {
        let n = 3;
        let w = T::from_components(n, 2, Variance::Covector, vec![1.0, -2.0, 0.5]).unwrap();
        let vs = vec![vec![1.0, 2.0, 3.0], vec![-1.0, 0.5, 2.0]];
        let x = T::wedge_all(
            &vs.iter()
                .map(|v| T::vector(v.clone(), Variance::Vector))
                .collect::<Vec<_>>(),
            n,
            Variance::Vector,
        )
        .unwrap();
        let a = T::pair(&w, &x).unwrap();
        let b = w.evaluate_on(&vs).unwrap();
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn permutations_cover_symmetric_group() {
        let p = permutations(4);
        assert_eq!(p.len(), 24);
        let even = p.iter().filter(|q| permutation_sign(q) > 0.0).count();
        assert_eq!(even, 12);
    }

    #[test]
    fn symbolic_coefficients() {
        let n = 2;
        let x0 = Expression::var(0, n);
        let v = AlternatingTensor::<Expression>::vector(
            vec![x0.clone(), Expression::one()],
            Variance::Vector,
        );
        let flat = AlternatingTensor::omega_flat(&v, &Expression::constant(2.0)).unwrap();
        let at = flat.try_map(|c| c.eval(&[3.0, 0.0])).unwrap();
        assert_eq!(at.components(), &[-2.0, 6.0]);
    }

    fn scale_of(ts: &[f64]) -> f64 {
        ts.iter().fold(1.0, |m, t| m.max(t.abs()))
    }

    // (n, k, m) with m <= k <= n <= 5.
    fn grades() -> impl Strategy<Value = (usize, usize, usize)> {
        (1usize..=5)
            .prop_flat_map(|n| (Just(n), 0..=n))
            .prop_flat_map(|(n, k)| (Just(n), Just(k), 0..=k))
    }

    proptest! {
        #[test]
        fn wedge_is_graded_commutative(
            (n, a, b) in (1usize..=5).prop_flat_map(|n| (Just(n), 0..=n, 0..=n)),
            seed in any::<u64>(),
        ) {
            let x = random_tensor(n, a, Variance::Vector, seed);
            let y = random_tensor(n, b, Variance::Vector, seed ^ 0x9e37);
            let lhs = x.wedge(&y).unwrap();
            let rhs = y.wedge(&x).unwrap().scale(if (a * b) % 2 == 0 { 1.0 } else { -1.0 });
            prop_assert!(close(&lhs, &rhs, 1e-14));
        }

        #[test]
        fn wedge_is_associative(
            n in 1usize..=5,
            grades in proptest::collection::vec(0usize..=2, 3),
            seed in any::<u64>(),
        ) {
            let t: Vec<T> = grades
                .iter()
                .enumerate()
                .map(|(i, &g)| random_tensor(n, g.min(n), Variance::Covector, seed.wrapping_add(i as u64)))
                .collect();
            let l = t[0].wedge(&t[1]).unwrap().wedge(&t[2]).unwrap();
            let r = t[0].wedge(&t[1].wedge(&t[2]).unwrap()).unwrap();
            prop_assert_eq!(l.grade(), r.grade());
            prop_assert!(close(&l, &r, 1e-13));
        }

        #[test]
        fn interior_adjunction((n, k, m) in grades(), seed in any::<u64>()) {
            let w = random_tensor(n, k, Variance::Covector, seed);
            let x = random_tensor(n, m, Variance::Vector, seed ^ 1);
            let z = random_tensor(n, k - m, Variance::Vector, seed ^ 2);
            let lhs = T::pair(&T::interior_by_multivector(&w, &x).unwrap(), &z).unwrap();
            let rhs = T::pair(&w, &x.wedge(&z).unwrap()).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * scale_of(&[lhs, rhs]));
        }

        #[test]
        fn form_interior_adjunction((n, m, k) in grades(), seed in any::<u64>()) {
            let w = random_tensor(n, k, Variance::Covector, seed);
            let x = random_tensor(n, m, Variance::Vector, seed ^ 3);
            let eta = random_tensor(n, m - k, Variance::Covector, seed ^ 4);
            let lhs = T::pair(&eta, &T::interior_by_form(&w, &x).unwrap()).unwrap();
            let rhs = T::pair(&w.wedge(&eta).unwrap(), &x).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * scale_of(&[lhs, rhs]));
        }

        #[test]
        fn sharp_inverts_flat(
            (n, k) in (1usize..=6).prop_flat_map(|n| (Just(n), 0..=n)),
            rho in 0.1f64..3.0,
            seed in any::<u64>(),
        ) {
            let x = random_tensor(n, k, Variance::Vector, seed);
            let back = T::omega_sharp(&T::omega_flat(&x, &rho).unwrap(), &rho).unwrap();
            prop_assert!(close(&back, &x, 1e-14));
        }
    }

    fn random_tensor(n: usize, k: usize, variance: Variance, seed: u64) -> T {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let c = (0..binomial(n, k))
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        T::from_components(n, k, variance, c).unwrap()
    }

    fn random_vectors(n: usize, m: usize, seed: u64) -> Vec<Vec<f64>> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..m)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect()
    }

    fn decomposable(vs: &[Vec<f64>], n: usize) -> T {
        let f: Vec<T> = vs
            .iter()
            .map(|v| T::vector(v.clone(), Variance::Vector))
            .collect();
        T::wedge_all(&f, n, Variance::Vector).unwrap()
    }

    #[test]
    fn form_interior_matches_permutation_sum_exhaustively() {
        for n in 1..=5 {
            for m in 0..=n {
                for k in 0..=m {
                    for trial in 0..3u64 {
                        let seed = (n * 100 + m * 10 + k) as u64 * 7 + trial;
                        let w = random_tensor(n, k, Variance::Covector, seed);
                        let vs = random_vectors(n, m, seed ^ 0xabc);
                        let fast = T::interior_by_form(&w, &decomposable(&vs, n)).unwrap();
                        let slow = interior_by_form_permutation_sum(&w, &vs).unwrap();
                        assert!(close(&fast, &slow, 1e-12), "n={n} m={m} k={k}");
                    }
                }
            }
        }
    }

    #[test]
    fn decomposable_pairing_is_a_determinant() {
        for seed in 0..20u64 {
            let n = 5;
            let w = random_tensor(n, 3, Variance::Covector, seed);
            let vs = random_vectors(n, 3, seed + 100);
            let a = T::pair(&w, &decomposable(&vs, n)).unwrap();
            let b = w.evaluate_on(&vs).unwrap();
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn interior_matches_iterated_first_slot_contractions() {
        // Contracting a form into its first slot: (i_v ω)(w...) = ω(v, w...),
        // computed through the determinant evaluation on basis vectors.
        fn first_slot(w: &T, v: &[f64]) -> T {
            let n = w.dimension();
            let mut out = T::zeros(n, w.grade() - 1, Variance::Covector);
            for j in multi_indices(n, w.grade() - 1) {
                let mut args = vec![v.to_vec()];
                for i in j.indices() {
                    let mut b = vec![0.0; n];
                    b[i] = 1.0;
                    args.push(b);
                }
                out.set(j, w.evaluate_on(&args).unwrap());
            }
            out
        }
        for seed in 0..10u64 {
            let n = 5;
            for m in 1..=3 {
                let w = random_tensor(n, 4, Variance::Covector, seed);
                let vs = random_vectors(n, m, seed + 7);
                // i_{X_m} ⋯ i_{X_1} ω: X_1 goes in first.
                let mut iter = w.clone();
                for v in &vs {
                    iter = first_slot(&iter, v);
                }
                let direct = T::interior_by_multivector(&w, &decomposable(&vs, n)).unwrap();
                assert!(close(&iter, &direct, 1e-12));

                // Reverse order i_{X_1} ⋯ i_{X_m} differs by (-1)^{m(m-1)/2}.
                let mut rev = w.clone();
                for v in vs.iter().rev() {
                    rev = first_slot(&rev, v);
                }
                let sign = if (m * (m - 1) / 2) % 2 == 0 {
                    1.0
                } else {
                    -1.0
                };
                assert!(close(&rev, &direct.scale(sign), 1e-12));
            }
        }
    }
}
