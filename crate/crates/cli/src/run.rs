//! Task execution and the run report.

use std::time::Instant;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use multidiv::diver::{
    check_aux, check_div_vector, check_leibniz_j, check_lemma1, check_operator_agreement, div_recursive, div_strong,
    first_basis_field, weak_div_residual, IdentityReport,
};
use multidiv::exterior::{multi_indices, MultiIndex};
use multidiv::fields::{ChartDomain, ScalarField};
use multidiv::quad::{make_bump_form, Bump, BumpForm, Integral, IntegrationDomain, SUPPORT_SLACK};
use multidiv::sampling::{random_constant_form, random_form, random_multivector, random_points, random_vector_field, FieldKind};
use multidiv::surface::{restriction_check, SurfaceMeasureReport, TubeLimitReport};

use crate::config::{Config, RegionSpec, Suite, Task};
use crate::model::{midpoint_grid, ConfigError, Model};

/// Values that flags and the environment lay over the config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub points: Option<usize>,
    pub tolerance: Option<f64>,
    /// Keep only tasks of this kind.
    pub only: Option<String>,
    /// Record wall-clock times (breaks byte-identical reruns).
    pub timings: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub tool: String,
    pub versions: Versions,
    /// SHA-256 of the effective config as canonical JSON.
    pub config_digest: String,
    pub seed: u64,
    pub passed: bool,
    pub tasks: Vec<TaskReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Versions {
    pub multidiv: String,
    pub cli: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct TaskReport {
    pub index: usize,
    pub task: String,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<TaskResult>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum TaskResult {
    Check(CheckResult),
    Div(DivTable),
    Weakdiv(WeakRow),
    Limit(LimitResult),
    TubeLimit(TubeLimitResult),
    Identity(IdentityReport),
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub identities: Vec<IdentityReport>,
    pub weak: Vec<WeakRow>,
}

/// Weak-form residual `|∫⟨dω, Z⟩dμ + ∫⟨ω, W⟩dμ|` with its test form.
#[derive(Debug, Clone, Serialize)]
pub struct WeakRow {
    pub grade: usize,
    pub flux: Integral,
    pub candidate: Integral,
    pub residual: f64,
    pub error: f64,
    /// `residual / (|flux| + 1)`.
    pub relative: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub corrupted: bool,
    pub witness: Witness,
}

/// Test form `bump · ω` with `ω` named or a basis form.
#[derive(Debug, Clone, Serialize)]
pub struct Witness {
    pub center: Vec<f64>,
    pub radius: f64,
    pub form: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct DivTable {
    pub field: String,
    pub grade: usize,
    /// Component labels of the divergence, e.g. `{0,2}`.
    pub basis: Vec<String>,
    pub rows: Vec<DivRow>,
    /// Relative tolerance on the strong/recursive disagreement.
    pub tolerance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DivRow {
    pub point: Vec<f64>,
    pub components: Vec<f64>,
    /// `‖div_strong − div_recursive‖`, the error estimate of the row.
    pub error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LimitResult {
    pub report: SurfaceMeasureReport,
    pub expected: Option<f64>,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TubeLimitResult {
    pub report: TubeLimitReport,
    pub tolerance: f64,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            1
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Tidy table `task,row,column,value,bound`; `bound` is the tolerance or
    /// error estimate attached to the value.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for t in &self.tasks {
            for row in t.rows() {
                w.serialize(row).expect("rows serialize");
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
    }
}

#[derive(Debug, Serialize)]
struct Row {
    task: String,
    row: String,
    column: String,
    value: f64,
    bound: Option<f64>,
}

impl TaskReport {
    fn rows(&self) -> Vec<Row> {
        let label = format!("{}:{}", self.index, self.task);
        let row = |r: String, c: &str, value: f64, bound: Option<f64>| Row {
            task: label.clone(),
            row: r,
            column: c.to_string(),
            value,
            bound,
        };
        let mut out = Vec::new();
        let identity = |out: &mut Vec<Row>, r: &IdentityReport| {
            out.push(row(r.identity.clone(), "max_rel_residual", r.max_rel_residual, r.tolerance));
        };
        let limit = |out: &mut Vec<Row>, r: &SurfaceMeasureReport| {
            for (radius, v) in r.radii.iter().zip(&r.tube_values) {
                out.push(row(format!("r={radius}"), "tube_value", v.value, Some(v.error)));
            }
            if let Some(e) = r.extrapolated {
                out.push(row("limit".into(), "extrapolated", e.value, Some(e.error)));
            }
            out.push(row("limit".into(), "direct", r.direct.value, Some(r.direct.error)));
        };
        match &self.result {
            None => {}
            Some(TaskResult::Check(c)) => {
                for r in &c.identities {
                    identity(&mut out, r);
                }
                for w in &c.weak {
                    out.push(row(format!("weak-k{}", w.grade), "relative_residual", w.relative, Some(w.tolerance)));
                }
            }
            Some(TaskResult::Div(d)) => {
                for (i, r) in d.rows.iter().enumerate() {
                    for (j, x) in r.point.iter().enumerate() {
                        out.push(row(i.to_string(), &format!("x{j}"), *x, Some(0.0)));
                    }
                    for (b, v) in d.basis.iter().zip(&r.components) {
                        out.push(row(i.to_string(), &format!("div{b}"), *v, Some(r.error)));
                    }
                }
            }
            Some(TaskResult::Weakdiv(w)) => {
                out.push(row("flux".into(), "integral", w.flux.value, Some(w.flux.error)));
                out.push(row("candidate".into(), "integral", w.candidate.value, Some(w.candidate.error)));
                out.push(row("weak".into(), "relative_residual", w.relative, Some(w.tolerance)));
            }
            Some(TaskResult::Limit(l)) => limit(&mut out, &l.report),
            Some(TaskResult::TubeLimit(t)) => {
                out.push(row("lhs".into(), "integral", t.report.lhs.value, Some(t.report.lhs.error)));
                limit(&mut out, &t.report.rhs);
                if let Some(d) = t.report.difference {
                    out.push(row("limit".into(), "difference", d, Some(t.tolerance)));
                }
            }
            Some(TaskResult::Identity(r)) => identity(&mut out, r),
        }
        out
    }
}

/// Parse a config file; unreadable files and schema violations are config errors.
pub fn load(path: &std::path::Path) -> Result<Config, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
}

/// Apply overrides, validate, and run the selected tasks in order.
pub fn run(mut config: Config, overrides: &Overrides) -> Result<RunReport, ConfigError> {
    if let Some(s) = overrides.seed {
        config.seed = Some(s);
    }
    if let Some(p) = overrides.points {
        config.points = p;
    }
    if let Some(t) = overrides.tolerance {
        config.tolerance = Some(t);
    }
    if config.points == 0 {
        return Err(ConfigError("points must be positive".into()));
    }
    let seed = config.seed.unwrap_or(0);
    let digest = hex::encode(Sha256::digest(serde_json::to_vec(&config).expect("config serializes")));
    let model = Model::build(&config)?;

    let selected: Vec<(usize, &Task)> = config
        .tasks
        .iter()
        .enumerate()
        .filter(|(_, t)| overrides.only.as_deref().is_none_or(|k| t.kind() == k))
        .collect();
    if selected.is_empty() {
        return Err(ConfigError("no tasks".into()));
    }

    let mut tasks = Vec::new();
    for (index, task) in selected {
        let start = Instant::now();
        let outcome = execute(&model, &config, seed, index, task);
        let elapsed_ms = overrides.timings.then(|| start.elapsed().as_secs_f64() * 1e3);
        tasks.push(match outcome {
            Ok((passed, result)) => TaskReport {
                index,
                task: task.kind().into(),
                passed,
                error: None,
                elapsed_ms,
                result: Some(result),
            },
            Err(e) => TaskReport {
                index,
                task: task.kind().into(),
                passed: false,
                error: Some(e.to_string()),
                elapsed_ms,
                result: None,
            },
        });
    }
    Ok(RunReport {
        tool: "multidiv".into(),
        versions: Versions {
            multidiv: multidiv::VERSION.into(),
            cli: env!("CARGO_PKG_VERSION").into(),
        },
        config_digest: digest,
        seed,
        passed: tasks.iter().all(|t| t.passed),
        tasks,
    })
}

type Outcome = multidiv::Result<(bool, TaskResult)>;

fn execute(model: &Model, config: &Config, seed: u64, index: usize, task: &Task) -> Outcome {
    let pointwise_tol = |own: Option<f64>, default: f64| config.tolerance.or(own).unwrap_or(default);
    let tube = || model.tube.as_ref().expect("validated: surface tasks have a tube");
    match task {
        Task::Check {
            suites,
            configurations,
            kind,
            tolerance,
            weak_tolerance,
        } => {
            let suites = suites.clone().unwrap_or_else(|| Suite::ALL.to_vec());
            let mut result = CheckResult {
                identities: Vec::new(),
                weak: Vec::new(),
            };
            for suite in suites {
                let mut rng = ChaCha8Rng::seed_from_u64(suite_seed(seed, index, suite));
                if suite == Suite::Weak {
                    result.weak.extend(weak_suite(model, config, &mut rng, *kind, *weak_tolerance)?);
                } else {
                    let tol = config.tolerance.or(*tolerance).unwrap_or(suite.tolerance());
                    let report = pointwise_suite(model, suite, *configurations, *kind, config.points, &mut rng)?;
                    result.identities.push(report.judge(tol));
                }
            }
            let passed = result.identities.iter().all(IdentityReport::passed) && result.weak.iter().all(|w| w.passed);
            Ok((passed, TaskResult::Check(result)))
        }
        Task::Div { field, grid, tolerance } => {
            let z = model.multivector(field).map_err(config_to_core)?;
            let tol = pointwise_tol(*tolerance, 1e-8);
            let table = div_table(model, field, &z, *grid, tol)?;
            let passed = table.rows.iter().all(|r| r.error <= tol * (1.0 + norm(&r.components)));
            Ok((passed, TaskResult::Div(table)))
        }
        Task::Weakdiv {
            field,
            candidate,
            corrupt,
            form,
            center,
            radius,
            tolerance,
        } => {
            let row = weakdiv(model, config, field, candidate.as_deref(), *corrupt, form.as_deref(), center, *radius, *tolerance)?;
            Ok((row.passed, TaskResult::Weakdiv(row)))
        }
        Task::Surface {
            region,
            expected,
            tolerance,
        } => {
            let region = surface_region(model, region.as_ref());
            let report = tube().surface_measure(&region, &config.radii, &config.quadrature)?;
            Ok(limit_outcome(report, *expected, *tolerance))
        }
        Task::Lemma3 {
            u,
            region,
            expected,
            tolerance,
        } => {
            let u = ScalarField::parse(u, &model.domain)?;
            let region = surface_region(model, region.as_ref());
            let report = tube().lemma3_average(&u, &region, &config.radii, &config.quadrature)?;
            Ok(limit_outcome(report, *expected, *tolerance))
        }
        Task::Theorem2 { field, u, tolerance } => {
            let z = model.field(field).map_err(config_to_core)?;
            let u = ScalarField::parse(u, &model.domain)?;
            let report = tube().theorem2_check(z, &u, &config.radii, &config.quadrature)?;
            Ok(tube_limit_outcome(report, *tolerance))
        }
        Task::Restriction {
            field,
            surface_density,
            samples,
            tolerance,
        } => {
            let t = tube();
            let z = model.field(field).map_err(config_to_core)?;
            let surface = t.surface();
            let rho_s = ScalarField::parse(surface_density, surface.parameters())?;
            let count = samples.unwrap_or(config.points).max(1);
            let d = surface.dimension();
            let per_axis = (count as f64).powf(1.0 / d as f64).ceil() as usize;
            let inner = surface.inner();
            let points = midpoint_grid(inner.lower(), inner.upper(), per_axis);
            let report = restriction_check(surface, t.system(), z, &rho_s, &points)?.judge(pointwise_tol(*tolerance, 1e-6));
            Ok((report.passed(), TaskResult::Identity(report)))
        }
        Task::Corollary {
            factors,
            form,
            tolerance,
        } => {
            let zs = factors
                .iter()
                .map(|f| model.field(f).cloned())
                .collect::<Result<Vec<_>, _>>()
                .map_err(config_to_core)?;
            let alpha = model.form(form).map_err(config_to_core)?;
            let report = tube().corollary_check(&zs, alpha, &config.radii, &config.quadrature)?;
            Ok(tube_limit_outcome(report, *tolerance))
        }
    }
}

fn config_to_core(e: ConfigError) -> multidiv::Error {
    multidiv::Error::Invalid(e.0)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Independent stream per (task, suite) so suites can be added or reordered
/// without perturbing one another.
fn suite_seed(seed: u64, index: usize, suite: Suite) -> u64 {
    seed ^ ((index as u64) << 32) ^ (suite as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn pointwise_suite(
    model: &Model,
    suite: Suite,
    configurations: usize,
    kind: FieldKind,
    points: usize,
    rng: &mut ChaCha8Rng,
) -> multidiv::Result<IdentityReport> {
    let d = &model.domain;
    let n = d.dimension();
    let vs = &model.volume;
    // Grade pairs (k, m) with k ≤ m for the auxiliary formula and k < m for Leibniz.
    let aux_pairs: Vec<(usize, usize)> = (1..=n).flat_map(|m| (1..=m).map(move |k| (k, m))).collect();
    let leibniz_pairs: Vec<(usize, usize)> = (1..=n).flat_map(|m| (0..m).map(move |k| (k, m))).collect();
    let mut merged: Option<IdentityReport> = None;
    for c in 0..configurations {
        let report = match suite {
            Suite::Lemma1 => {
                let k = 1 + c % n;
                let omega = random_form(rng, d, k, kind);
                let z = random_multivector(rng, d, k, 2, kind);
                check_lemma1(&omega, &z, vs, &random_points(rng, d, points))?
            }
            Suite::Aux => {
                let (k, m) = aux_pairs[c % aux_pairs.len()];
                let omega = random_form(rng, d, k, kind);
                let x = random_multivector(rng, d, m, 2, kind);
                check_aux(&omega, &x, vs, &random_points(rng, d, points))?
            }
            Suite::Leibniz => {
                let (k, m) = leibniz_pairs[c % leibniz_pairs.len()];
                let omega = random_form(rng, d, k, kind);
                let z = random_multivector(rng, d, m, 2, kind);
                check_leibniz_j(&omega, &z, vs, &random_points(rng, d, points))?
            }
            Suite::Operators => {
                let k = 1 + c % n;
                let z = random_multivector(rng, d, k, 1, kind);
                check_operator_agreement(&z, vs, &random_points(rng, d, points))?
            }
            Suite::DivVector => {
                let x = random_vector_field(rng, d, kind);
                check_div_vector(&x, vs, &random_points(rng, d, points))?
            }
            Suite::Weak => unreachable!("weak suite is integrated, not swept"),
        };
        merged = Some(match merged {
            None => report,
            Some(m) => m.merge(&report),
        });
    }
    Ok(merged.expect("at least one configuration"))
}

/// Largest bump radius centred in the chart that keeps the required
/// clearance from its boundary.
fn default_bump(domain: &ChartDomain) -> (Vec<f64>, f64) {
    let half = domain
        .lower()
        .iter()
        .zip(domain.upper())
        .map(|(a, b)| (b - a) / 2.0)
        .fold(f64::INFINITY, f64::min);
    (domain.center(), 0.8 * half / (1.0 + SUPPORT_SLACK))
}

/// One weak-form configuration per grade `k = 1..=n`.
fn weak_suite(
    model: &Model,
    config: &Config,
    rng: &mut ChaCha8Rng,
    kind: FieldKind,
    tolerance: f64,
) -> multidiv::Result<Vec<WeakRow>> {
    let d = &model.domain;
    let (center, radius) = default_bump(d);
    (1..=d.dimension())
        .map(|k| {
            let z = random_multivector(rng, d, k, 1, kind);
            let w = div_strong(&z, &model.volume)?;
            let form = random_constant_form(rng, d, k - 1);
            let bump = Bump::new(center.clone(), radius, d)?;
            let test = bump.localize(&form);
            let r = weak_div_residual(&z, &w, &test, &model.volume, &config.quadrature)?;
            Ok(weak_row(k, r, tolerance, false, Witness {
                center: center.clone(),
                radius,
                form: format!("random constant {}-form", k - 1),
            }))
        })
        .collect()
}

fn weak_row(grade: usize, r: multidiv::diver::WeakResidual, tolerance: f64, corrupted: bool, witness: Witness) -> WeakRow {
    let relative = r.residual / (r.flux.value.abs() + 1.0);
    WeakRow {
        grade,
        flux: r.flux,
        candidate: r.candidate,
        residual: r.residual,
        error: r.error,
        relative,
        tolerance,
        passed: relative <= tolerance,
        corrupted,
        witness,
    }
}

#[allow(clippy::too_many_arguments)]
fn weakdiv(
    model: &Model,
    config: &Config,
    field: &str,
    candidate: Option<&str>,
    corrupt: bool,
    form: Option<&str>,
    center: &Option<Vec<f64>>,
    radius: Option<f64>,
    tolerance: f64,
) -> multidiv::Result<WeakRow> {
    let d = &model.domain;
    let z = model.multivector(field).map_err(config_to_core)?;
    let k = z.grade();
    let mut w = match candidate {
        Some(c) => model.multivector(c).map_err(config_to_core)?,
        None => div_strong(&z, &model.volume)?,
    };
    if corrupt {
        w = w.add(&first_basis_field(k - 1, d)?)?;
    }
    let (c0, r0) = default_bump(d);
    let center = center.clone().unwrap_or(c0);
    let radius = radius.unwrap_or(r0);
    let (test, label): (BumpForm, String) = match form {
        Some(name) => {
            let bump = Bump::new(center.clone(), radius, d)?;
            (bump.localize(model.form(name).map_err(config_to_core)?), name.to_string())
        }
        None => {
            let first = MultiIndex::new(&(0..k - 1).collect::<Vec<_>>(), d.dimension())?;
            (make_bump_form(k - 1, center.clone(), radius, &[first], d)?, format!("dx{first}"))
        }
    };
    let r = weak_div_residual(&z, &w, &test, &model.volume, &config.quadrature)?;
    Ok(weak_row(k, r, tolerance, corrupt, Witness { center, radius, form: label }))
}

fn div_table(model: &Model, name: &str, z: &multidiv::fields::MultiVectorField, grid: usize, tol: f64) -> multidiv::Result<DivTable> {
    let strong = div_strong(z, &model.volume)?;
    let recursive = div_recursive(z, &model.volume)?;
    let inner = model.domain.shrunk();
    let points = midpoint_grid(inner.lower(), inner.upper(), grid);
    let rows = points
        .into_iter()
        .map(|p| {
            let a = strong.eval(&p)?;
            let b = recursive.eval(&p)?;
            let error = a.sub(&b)?.norm();
            Ok(DivRow {
                point: p,
                components: a.components().to_vec(),
                error,
            })
        })
        .collect::<multidiv::Result<Vec<_>>>()?;
    Ok(DivTable {
        field: name.to_string(),
        grade: z.grade() - 1,
        basis: multi_indices(model.domain.dimension(), z.grade() - 1)
            .iter()
            .map(|i| i.to_string())
            .collect(),
        rows,
        tolerance: tol,
    })
}

fn surface_region(model: &Model, region: Option<&RegionSpec>) -> IntegrationDomain {
    match region {
        Some(r) => IntegrationDomain::Box {
            lower: r.lower.clone(),
            upper: r.upper.clone(),
        },
        None => model.tube.as_ref().expect("validated").surface().inner_region(),
    }
}

fn limit_outcome(report: SurfaceMeasureReport, expected: Option<f64>, tolerance: f64) -> (bool, TaskResult) {
    let passed = report.flag.is_none()
        && report.difference.is_some_and(|d| d <= tolerance)
        && match (expected, report.extrapolated) {
            (Some(e), Some(x)) => (x.value - e).abs() <= tolerance,
            (Some(_), None) => false,
            (None, _) => true,
        };
    (
        passed,
        TaskResult::Limit(LimitResult {
            report,
            expected,
            tolerance,
        }),
    )
}

fn tube_limit_outcome(report: TubeLimitReport, tolerance: f64) -> (bool, TaskResult) {
    let passed = report.rhs.flag.is_none() && report.difference.is_some_and(|d| d <= tolerance);
    (passed, TaskResult::TubeLimit(TubeLimitResult { report, tolerance }))
}
