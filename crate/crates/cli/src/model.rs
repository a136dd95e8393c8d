//! Validated objects built from a [`Config`].

use std::collections::BTreeMap;
use std::fmt;

use multidiv::diver::VolumeStructure;
use multidiv::fields::{ChartDomain, DifferentialForm, MultiVectorField, ScalarField, Term, VectorField};
use multidiv::surface::{ElementarySurface, StraighteningMap, TransversalSystem, Tube};
use multidiv::Expression;

use crate::config::{BoxSpec, Config, FormChart, SurfaceSpec, Task};

/// A configuration that cannot be run; maps to exit code 2.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

impl From<multidiv::Error> for ConfigError {
    fn from(e: multidiv::Error) -> ConfigError {
        ConfigError(e.to_string())
    }
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

pub struct Model {
    pub domain: ChartDomain,
    pub volume: VolumeStructure,
    pub fields: BTreeMap<String, VectorField>,
    pub multivectors: BTreeMap<String, MultiVectorField>,
    pub forms: BTreeMap<String, DifferentialForm>,
    pub tube: Option<Tube>,
}

fn chart(spec: &BoxSpec, what: &str) -> Result<ChartDomain, ConfigError> {
    ChartDomain::new(spec.lower.clone(), spec.upper.clone())
        .and_then(|d| d.with_margin(spec.margin))
        .map_err(|e| ConfigError(format!("{what}: {e}")))
}

impl Model {
    pub fn build(config: &Config) -> Result<Model, ConfigError> {
        let n = config.dimension;
        if n == 0 {
            return invalid("dimension must be at least 1");
        }
        let domain = chart(&config.domain, "domain")?;
        if domain.dimension() != n {
            return invalid(format!("domain has dimension {}, config declares {n}", domain.dimension()));
        }
        let density = ScalarField::parse(&config.density, &domain).map_err(|e| ConfigError(format!("density: {e}")))?;
        let volume = VolumeStructure::new(density, config.density_grid)?;

        let mut fields = BTreeMap::new();
        for (name, comps) in &config.fields {
            if comps.len() != n {
                return invalid(format!("field {name} has {} components, expected {n}", comps.len()));
            }
            let src: Vec<&str> = comps.iter().map(String::as_str).collect();
            let f = VectorField::parse(&src, &domain).map_err(|e| ConfigError(format!("field {name}: {e}")))?;
            fields.insert(name.clone(), f);
        }

        let mut multivectors = BTreeMap::new();
        for (name, spec) in &config.multivectors {
            let Some(first) = spec.terms.first() else {
                return invalid(format!("multivector {name} has no terms"));
            };
            let grade = first.factors.len();
            let mut terms = Vec::new();
            for t in &spec.terms {
                if t.factors.len() != grade {
                    return invalid(format!("multivector {name} mixes grades"));
                }
                let factors = t
                    .factors
                    .iter()
                    .map(|f| lookup(&fields, f, "field").cloned())
                    .collect::<Result<Vec<_>, _>>()?;
                let coefficient =
                    Expression::parse(&t.coefficient, n).map_err(|e| ConfigError(format!("multivector {name}: {e}")))?;
                terms.push(Term { coefficient, factors });
            }
            multivectors.insert(name.clone(), MultiVectorField::new(grade, terms, &domain)?);
        }

        let tube = config
            .surface
            .as_ref()
            .map(|s| build_tube(s, &domain, &volume, &fields))
            .transpose()?;

        let mut forms = BTreeMap::new();
        for (name, spec) in &config.forms {
            let form_domain = match spec.chart {
                FormChart::Ambient => domain.clone(),
                FormChart::Surface => match &tube {
                    Some(t) => t.surface().parameters().clone(),
                    None => return invalid(format!("form {name} lives on the surface chart but no surface is declared")),
                },
            };
            let entries: Vec<(&[usize], &str)> =
                spec.entries.iter().map(|e| (e.index.as_slice(), e.expr.as_str())).collect();
            let form = DifferentialForm::parse(spec.grade, &entries, &form_domain)
                .map_err(|e| ConfigError(format!("form {name}: {e}")))?;
            forms.insert(name.clone(), form);
        }

        let model = Model {
            domain,
            volume,
            fields,
            multivectors,
            forms,
            tube,
        };
        model.validate_tasks(config)?;
        Ok(model)
    }

    fn validate_tasks(&self, config: &Config) -> Result<(), ConfigError> {
        if config.tasks.is_empty() {
            return invalid("no tasks");
        }
        let limits = config.tasks.iter().any(|t| t.needs_surface() && !matches!(t, Task::Restriction { .. }));
        if limits {
            let r = &config.radii;
            if r.len() < 3 || r.windows(2).any(|w| !(w[1] < w[0])) || r.iter().any(|v| !(*v > 0.0)) {
                return invalid("radii must hold at least three positive, strictly decreasing values");
            }
        }
        for (i, task) in config.tasks.iter().enumerate() {
            let at = |msg: String| ConfigError(format!("task {i} ({}): {msg}", task.kind()));
            if task.needs_surface() && self.tube.is_none() {
                return Err(at("needs a surface block".into()));
            }
            match task {
                Task::Check { configurations, suites, .. } => {
                    if *configurations == 0 || suites.as_ref().is_some_and(Vec::is_empty) {
                        return Err(at("nothing to check".into()));
                    }
                }
                Task::Div { field, grid, .. } => {
                    self.multivector(field).map_err(|e| at(e.0))?;
                    if *grid == 0 {
                        return Err(at("grid must be positive".into()));
                    }
                }
                Task::Weakdiv { field, candidate, form, .. } => {
                    let z = self.multivector(field).map_err(|e| at(e.0))?;
                    if z.grade() == 0 {
                        return Err(at("field must have grade at least 1".into()));
                    }
                    if let Some(c) = candidate {
                        let w = self.multivector(c).map_err(|e| at(e.0))?;
                        if w.grade() + 1 != z.grade() {
                            return Err(at(format!("candidate {c} must have grade {}", z.grade() - 1)));
                        }
                    }
                    if let Some(f) = form {
                        let w = lookup(&self.forms, f, "form").map_err(|e| at(e.0))?;
                        if w.grade() + 1 != z.grade() || w.dimension() != self.domain.dimension() {
                            return Err(at(format!("form {f} must be an ambient form of grade {}", z.grade() - 1)));
                        }
                    }
                }
                Task::Theorem2 { field, .. } | Task::Restriction { field, .. } => {
                    lookup(&self.fields, field, "field").map_err(|e| at(e.0))?;
                }
                Task::Corollary { factors, form, .. } => {
                    for f in factors {
                        lookup(&self.fields, f, "field").map_err(|e| at(e.0))?;
                    }
                    let w = lookup(&self.forms, form, "form").map_err(|e| at(e.0))?;
                    let d = self.tube.as_ref().map_or(0, |t| t.surface().dimension());
                    if w.dimension() != d || w.grade() + 1 != factors.len() {
                        return Err(at(format!(
                            "form {form} must be a surface-chart form of grade {}",
                            factors.len().saturating_sub(1)
                        )));
                    }
                }
                Task::Surface { .. } | Task::Lemma3 { .. } => {}
            }
        }
        Ok(())
    }

    /// A named multivector, or a named vector field as a 1-vector.
    pub fn multivector(&self, name: &str) -> Result<MultiVectorField, ConfigError> {
        if let Some(m) = self.multivectors.get(name) {
            return Ok(m.clone());
        }
        match self.fields.get(name) {
            Some(f) => Ok(f.to_multivector()),
            None => invalid(format!("undeclared field or multivector {name}")),
        }
    }

    pub fn field(&self, name: &str) -> Result<&VectorField, ConfigError> {
        lookup(&self.fields, name, "field")
    }

    pub fn form(&self, name: &str) -> Result<&DifferentialForm, ConfigError> {
        lookup(&self.forms, name, "form")
    }
}

fn lookup<'a, T>(map: &'a BTreeMap<String, T>, name: &str, what: &str) -> Result<&'a T, ConfigError> {
    map.get(name).ok_or_else(|| ConfigError(format!("undeclared {what} {name}")))
}

fn build_tube(
    spec: &SurfaceSpec,
    domain: &ChartDomain,
    volume: &VolumeStructure,
    fields: &BTreeMap<String, VectorField>,
) -> Result<Tube, ConfigError> {
    let n = domain.dimension();
    let m = spec.codimension;
    let at = |e: multidiv::Error| ConfigError(format!("surface: {e}"));
    let st_chart = chart(&spec.chart, "surface chart")?;
    let forward: Vec<&str> = spec.forward.iter().map(String::as_str).collect();
    let inverse: Vec<&str> = spec.inverse.iter().map(String::as_str).collect();
    let map = StraighteningMap::parse(&forward, &inverse, m, st_chart.clone()).map_err(at)?;
    map.check_inverse(&midpoint_grid(st_chart.lower(), st_chart.upper(), spec.certify_grid.max(2)))
        .map_err(at)?;
    let parameters = chart(&spec.parameters, "surface parameters")?;
    let surface = ElementarySurface::new(map.clone(), parameters).map_err(at)?;
    if spec.transversal.len() != m {
        return invalid(format!("surface: codimension {m} needs {m} transversal fields"));
    }
    let ys = spec
        .transversal
        .iter()
        .map(|y| lookup(fields, y, "field").cloned())
        .collect::<Result<Vec<_>, _>>()?;
    let h = Expression::parse(&spec.h, m).map_err(|e| ConfigError(format!("surface h: {e}")))?;
    let alpha = TransversalSystem::associated_form(&map, &h, domain).map_err(at)?;
    let system = TransversalSystem::new(ys, alpha, spec.floor).map_err(at)?;
    debug_assert_eq!(system.domain().dimension(), n);
    Tube::new(surface, system, volume.clone(), spec.flow, spec.certify_grid).map_err(at)
}

/// Cell midpoints of a `per_axis^n` grid.
pub fn midpoint_grid(lower: &[f64], upper: &[f64], per_axis: usize) -> Vec<Vec<f64>> {
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
