//! JSON configuration: the ambient chart, density, named objects, an
//! optional surface block and the task list.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use multidiv::quad::QuadratureSpec;
use multidiv::sampling::FieldKind;
use multidiv::surface::FlowEngine;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub dimension: usize,
    pub domain: BoxSpec,
    /// Density `ρ` of `μ`, an expression in `x0…x{n−1}`.
    #[serde(default = "default_density")]
    pub density: String,
    /// Lattice points per axis for the positivity check of `ρ`.
    #[serde(default = "default_density_grid")]
    pub density_grid: usize,
    /// Vector fields by name, one expression per component.
    #[serde(default)]
    pub fields: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub multivectors: BTreeMap<String, MultivectorSpec>,
    #[serde(default)]
    pub forms: BTreeMap<String, FormSpec>,
    #[serde(default)]
    pub surface: Option<SurfaceSpec>,
    #[serde(default = "default_quadrature")]
    pub quadrature: QuadratureSpec,
    /// Strictly decreasing tube radii for extrapolation.
    #[serde(default = "default_radii")]
    pub radii: Vec<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Sample points per pointwise identity sweep.
    #[serde(default = "default_points")]
    pub points: usize,
    /// Relative tolerance for pointwise identities, replacing per-suite defaults.
    #[serde(default)]
    pub tolerance: Option<f64>,
    pub tasks: Vec<Task>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Inset used for sampling and, on surface parameters, the `ε` of `S_{−ε}`.
    #[serde(default)]
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultivectorSpec {
    pub terms: Vec<TermSpec>,
}

/// `coefficient · F_1 ∧ ⋯ ∧ F_k` with `F_i` named vector fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    #[serde(default = "default_one")]
    pub coefficient: String,
    pub factors: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormChart {
    #[default]
    Ambient,
    /// Surface parameters `s`, written `x0…x{d−1}`.
    Surface,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormSpec {
    pub grade: usize,
    #[serde(default)]
    pub chart: FormChart,
    /// Coefficients of `dx_I` for increasing index lists `I`; others are 0.
    pub entries: Vec<FormEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormEntry {
    pub index: Vec<usize>,
    pub expr: String,
}

/// Elementary surface `S = g(N × {0})` and its transversal system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceSpec {
    /// `g`, in variables `(s, t)` written `x0…x{n−1}`.
    pub forward: Vec<String>,
    /// `g⁻¹`, giving `s` then `t` in ambient variables.
    pub inverse: Vec<String>,
    pub codimension: usize,
    /// `(s, t)` box on which `g` is an isomorphism.
    pub chart: BoxSpec,
    /// Parameter box of `A`; its margin is `ε`.
    pub parameters: BoxSpec,
    /// Names of the fields `Y_1…Y_m`.
    pub transversal: Vec<String>,
    /// `h` in `α = (g⁻¹)^* P^*(h dt_1 ∧ ⋯ ∧ dt_m)`, in variables `t` written `x0…`.
    #[serde(default = "default_one")]
    pub h: String,
    /// Transversality floor `δ`.
    pub floor: f64,
    #[serde(default)]
    pub flow: FlowEngine,
    /// Grid points per axis for tube certification and tangency checks.
    #[serde(default = "default_certify_grid")]
    pub certify_grid: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Lemma1,
    Aux,
    Leibniz,
    Operators,
    DivVector,
    Weak,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::Lemma1,
        Suite::Aux,
        Suite::Leibniz,
        Suite::Operators,
        Suite::DivVector,
        Suite::Weak,
    ];

    /// Default relative tolerance of the suite.
    pub fn tolerance(self) -> f64 {
        match self {
            Suite::Lemma1 | Suite::Aux | Suite::DivVector => 1e-10,
            Suite::Leibniz => 1e-9,
            Suite::Operators => 1e-8,
            Suite::Weak => 1e-6,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Suite::Lemma1 => "lemma1",
            Suite::Aux => "aux",
            Suite::Leibniz => "leibniz",
            Suite::Operators => "operators",
            Suite::DivVector => "div-vector",
            Suite::Weak => "weak",
        }
    }
}

/// Parameter sub-box of the surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Task {
    /// Pointwise identity suites on seeded random fields, and the weak form.
    Check {
        #[serde(default)]
        suites: Option<Vec<Suite>>,
        #[serde(default = "default_configurations")]
        configurations: usize,
        #[serde(default = "default_kind")]
        kind: FieldKind,
        #[serde(default)]
        tolerance: Option<f64>,
        #[serde(default = "default_weak_tolerance")]
        weak_tolerance: f64,
    },
    /// Divergence components of a named field on a midpoint grid.
    Div {
        field: String,
        #[serde(default = "default_grid")]
        grid: usize,
        #[serde(default)]
        tolerance: Option<f64>,
    },
    /// Weak-form residual of a candidate divergence against a bump test form.
    Weakdiv {
        field: String,
        /// Named multivector; the strong divergence when absent.
        #[serde(default)]
        candidate: Option<String>,
        /// Add the first basis field of the candidate's grade.
        #[serde(default)]
        corrupt: bool,
        /// Named ambient form localized by the bump; `dx_0 ∧ ⋯` when absent.
        #[serde(default)]
        form: Option<String>,
        #[serde(default)]
        center: Option<Vec<f64>>,
        #[serde(default)]
        radius: Option<f64>,
        #[serde(default = "default_weak_tolerance")]
        tolerance: f64,
    },
    /// Tube measures `σ_r` and their limit `σ`.
    Surface {
        #[serde(default)]
        region: Option<RegionSpec>,
        #[serde(default)]
        expected: Option<f64>,
        #[serde(default = "default_limit_tolerance")]
        tolerance: f64,
    },
    /// Tube averages of `u` against `∫_A u dσ`.
    Lemma3 {
        u: String,
        #[serde(default)]
        region: Option<RegionSpec>,
        #[serde(default)]
        expected: Option<f64>,
        #[serde(default = "default_limit_tolerance")]
        tolerance: f64,
    },
    /// Surface divergence against the tube limit of the lifted divergence.
    Theorem2 {
        field: String,
        #[serde(default = "default_one")]
        u: String,
        #[serde(default = "default_limit_tolerance")]
        tolerance: f64,
    },
    /// `div_S Z = (div Z̃)|_S` for closed `α`.
    Restriction {
        field: String,
        /// Density of the surface volume form in `s`.
        surface_density: String,
        #[serde(default)]
        samples: Option<usize>,
        #[serde(default)]
        tolerance: Option<f64>,
    },
    /// Tube limit of `⟨q^*α, div Z̃⟩` for `Z̄ = Z_1 ∧ ⋯ ∧ Z_k`.
    Corollary {
        factors: Vec<String>,
        /// Named surface-chart form of grade `k − 1`.
        form: String,
        #[serde(default = "default_limit_tolerance")]
        tolerance: f64,
    },
}

impl Task {
    pub fn kind(&self) -> &'static str {
        match self {
            Task::Check { .. } => "check",
            Task::Div { .. } => "div",
            Task::Weakdiv { .. } => "weakdiv",
            Task::Surface { .. } => "surface",
            Task::Lemma3 { .. } => "lemma3",
            Task::Theorem2 { .. } => "theorem2",
            Task::Restriction { .. } => "restriction",
            Task::Corollary { .. } => "corollary",
        }
    }

    pub fn needs_surface(&self) -> bool {
        matches!(
            self,
            Task::Surface { .. } | Task::Lemma3 { .. } | Task::Theorem2 { .. } | Task::Restriction { .. } | Task::Corollary { .. }
        )
    }
}

fn default_density() -> String {
    "1".into()
}

fn default_one() -> String {
    "1".into()
}

fn default_density_grid() -> usize {
    5
}

fn default_quadrature() -> QuadratureSpec {
    QuadratureSpec::gauss(16)
}

fn default_radii() -> Vec<f64> {
    vec![0.2, 0.1, 0.05, 0.025]
}

fn default_points() -> usize {
    50
}

fn default_certify_grid() -> usize {
    4
}

fn default_configurations() -> usize {
    10
}

fn default_kind() -> FieldKind {
    FieldKind::Mixed
}

fn default_weak_tolerance() -> f64 {
    1e-6
}

fn default_grid() -> usize {
    3
}

fn default_limit_tolerance() -> f64 {
    1e-4
}
