//! Scenario files: one JSON document holding an atlas, a metric, named
//! sections, time-dependent curves, maps and command parameters.
//!
//! Per-chart entries are keyed by chart id; the key `"*"` applies to every
//! chart without an entry of its own.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diffeo::{exp_section, NeighborhoodBudget};
use crate::equivariant::{Composite, DiffeoLift, PolyMap};
use crate::error::{Error, Result};
use crate::metric::{build_polynomial, ChartMap, MetricField, MetricSpec, OrbifoldMetric, TermSpec, TOL_METRIC};
use crate::orbifold::{AffineMap, Atlas, AtlasSpec, ChartId, MapSpec, OrbifoldChart, TOL_ALG};
use crate::orbisection::{FieldSpec, Orbisection};
use crate::poly::PolyField;
use crate::regularity::TimeDependentSection;
use crate::scalar::Scalar;

/// Residual accepted when validating configured sections.
pub const SECTION_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub atlas: AtlasSpec,
    /// Chart id (or `"*"`) to metric; charts without an entry are flat.
    #[serde(default)]
    pub metric: BTreeMap<String, MetricSpec>,
    #[serde(default)]
    pub fields: BTreeMap<String, SectionSpec>,
    #[serde(default)]
    pub curves: BTreeMap<String, CurveSpec>,
    #[serde(default)]
    pub maps: BTreeMap<String, MapDef>,
    #[serde(default)]
    pub commands: Commands,
}

/// An orbisection: per-chart fields, or one field transported from chart `from`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectionSpec {
    pub charts: BTreeMap<String, FieldSpec>,
    #[serde(default)]
    pub from: Option<String>,
}

/// `t ↦ γ(t)`, as `Σ tᵏ σ_k` or as equally spaced slices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum CurveSpec {
    #[serde(rename = "poly_t")]
    PolyT {
        #[serde(default)]
        coefficients: Option<Vec<SectionSpec>>,
        #[serde(default)]
        slices: Option<Vec<SectionSpec>>,
    },
}

/// A map of one chart into itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapDef {
    Linear {
        matrix: Vec<Vec<f64>>,
    },
    Affine {
        matrix: Vec<Vec<f64>>,
        translation: Vec<f64>,
    },
    Polynomial {
        components: Vec<Vec<TermSpec>>,
    },
    /// Group element `index` of the chart.
    Element {
        index: usize,
    },
    /// The lift `exp ∘ σ` of a named section.
    ExpSection {
        field: String,
    },
    /// `maps[n-1] ∘ … ∘ maps[0]` by name.
    Composite {
        maps: Vec<String>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceCmd {
    pub chart: String,
    pub base: Vec<f64>,
    pub vector: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpmapCmd {
    pub chart: String,
    pub base: Vec<f64>,
    /// Radius of the tangent ball sampled on the grid.
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairCmd {
    pub sigma: String,
    pub tau: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvertCmd {
    pub sigma: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveCmd {
    pub curve: String,
    #[serde(default)]
    pub slices: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquivarianceCmd {
    pub map: String,
    #[serde(default)]
    pub chart: Option<String>,
}

/// Command parameters; CLI flags override the numeric ones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Commands {
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub trace: Vec<TraceCmd>,
    #[serde(default)]
    pub expmap: Option<ExpmapCmd>,
    #[serde(default)]
    pub compose: Option<PairCmd>,
    #[serde(default)]
    pub invert: Option<InvertCmd>,
    #[serde(default)]
    pub bracket: Option<PairCmd>,
    #[serde(default)]
    pub evolve: Option<EvolveCmd>,
    #[serde(default)]
    pub equivariance: Option<EquivarianceCmd>,
}

fn default_step() -> f64 {
    1e-3
}
fn default_horizon() -> f64 {
    3.0
}
fn default_grid() -> usize {
    9
}
fn default_tol() -> f64 {
    1e-6
}

impl Default for Commands {
    fn default() -> Self {
        Self {
            step: default_step(),
            horizon: default_horizon(),
            grid: default_grid(),
            tol: default_tol(),
            seed: 0,
            trace: Vec::new(),
            expmap: None,
            compose: None,
            invert: None,
            bracket: None,
            evolve: None,
            equivariance: None,
        }
    }
}

impl ScenarioSpec {
    /// Parse JSON, reporting the line, column and field path of the first error.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            Error::Config(format!(
                "line {} column {}, at `{}`: {}",
                inner.line(),
                inner.column(),
                path,
                inner
            ))
        })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario specs serialize")
    }
}

/// Pick the entry for `chart`, falling back to `"*"`.
fn per_chart<'a, V>(entries: &'a BTreeMap<String, V>, chart: &str) -> Option<&'a V> {
    entries.get(chart).or_else(|| entries.get("*"))
}

fn unknown_keys<T: Scalar, V>(atlas: &Atlas<T>, entries: &BTreeMap<String, V>, what: &str) -> Result<()> {
    match entries.keys().find(|k| *k != "*" && atlas.chart_by_name(k).is_none()) {
        Some(k) => Err(Error::Config(format!("{what}: unknown chart `{k}`"))),
        None => Ok(()),
    }
}

/// A loaded and validated scenario.
#[derive(Clone, Debug)]
pub struct Scenario<T: Scalar> {
    pub spec: ScenarioSpec,
    pub atlas: Atlas<T>,
    pub metric: OrbifoldMetric<T>,
    pub sections: BTreeMap<String, Orbisection<T>>,
    pub curves: BTreeMap<String, TimeDependentSection<T>>,
}

impl<T: Scalar> Scenario<T> {
    pub fn from_json(text: &str) -> Result<Self> {
        Self::build(ScenarioSpec::from_json(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::build(ScenarioSpec::from_path(path)?)
    }

    pub fn build(spec: ScenarioSpec) -> Result<Self> {
        let atlas = spec.atlas.build(T::of(TOL_ALG))?;
        unknown_keys(&atlas, &spec.metric, "metric")?;
        let fields = atlas
            .charts()
            .iter()
            .map(|c| match per_chart(&spec.metric, &c.name) {
                Some(m) => m.build(c),
                None => Ok(MetricField::flat(c.dim())),
            })
            .collect::<Result<Vec<_>>>()?;
        let metric = OrbifoldMetric::validated(&atlas, fields, T::of(TOL_METRIC))?;
        let mut sections = BTreeMap::new();
        for (name, s) in &spec.fields {
            let built = build_section(&atlas, s).map_err(|e| context(e, &format!("field `{name}`")))?;
            sections.insert(name.clone(), built);
        }
        let mut curves = BTreeMap::new();
        for (name, c) in &spec.curves {
            let built = build_curve(&atlas, c).map_err(|e| context(e, &format!("curve `{name}`")))?;
            curves.insert(name.clone(), built);
        }
        for (name, m) in &spec.maps {
            if let MapDef::ExpSection { field } = m {
                if !sections.contains_key(field) {
                    return Err(Error::Config(format!("map `{name}`: unknown field `{field}`")));
                }
            }
            if let MapDef::Composite { maps } = m {
                if let Some(k) = maps.iter().find(|k| !spec.maps.contains_key(*k)) {
                    return Err(Error::Config(format!("map `{name}`: unknown map `{k}`")));
                }
            }
        }
        let scenario = Self {
            spec,
            atlas,
            metric,
            sections,
            curves,
        };
        scenario.check_commands()?;
        Ok(scenario)
    }

    fn check_commands(&self) -> Result<()> {
        let c = &self.spec.commands;
        let field = |n: &str, what: &str| {
            if self.sections.contains_key(n) {
                Ok(())
            } else {
                Err(Error::Config(format!("{what}: unknown field `{n}`")))
            }
        };
        for t in &c.trace {
            self.chart(&t.chart)?;
        }
        if let Some(e) = &c.expmap {
            self.chart(&e.chart)?;
        }
        for p in c.compose.iter().chain(&c.bracket) {
            field(&p.sigma, "commands")?;
            field(&p.tau, "commands")?;
        }
        if let Some(i) = &c.invert {
            field(&i.sigma, "commands.invert")?;
        }
        if let Some(e) = &c.evolve {
            if !self.curves.contains_key(&e.curve) {
                return Err(Error::Config(format!("commands.evolve: unknown curve `{}`", e.curve)));
            }
        }
        if let Some(e) = &c.equivariance {
            if !self.spec.maps.contains_key(&e.map) {
                return Err(Error::Config(format!("commands.equivariance: unknown map `{}`", e.map)));
            }
            if let Some(ch) = &e.chart {
                self.chart(ch)?;
            }
        }
        if !(c.step > 0.0) || !(c.horizon >= 0.0) || c.grid < 2 || !(c.tol > 0.0) {
            return Err(Error::Config(
                "commands: step, tol must be positive, horizon non-negative, grid ≥ 2".into(),
            ));
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn commands(&self) -> &Commands {
        &self.spec.commands
    }

    pub fn chart(&self, name: &str) -> Result<ChartId> {
        self.atlas
            .chart_by_name(name)
            .ok_or_else(|| Error::Config(format!("unknown chart `{name}`")))
    }

    pub fn section(&self, name: &str) -> Result<&Orbisection<T>> {
        self.sections
            .get(name)
            .ok_or_else(|| Error::Config(format!("unknown field `{name}`")))
    }

    pub fn curve(&self, name: &str) -> Result<&TimeDependentSection<T>> {
        self.curves
            .get(name)
            .ok_or_else(|| Error::Config(format!("unknown curve `{name}`")))
    }

    /// Build a named map on `chart`; section lifts need a budget.
    pub fn map(
        &self,
        name: &str,
        chart: ChartId,
        budget: Option<&NeighborhoodBudget<T>>,
    ) -> Result<Arc<dyn ChartMap<T>>> {
        let def = self
            .spec
            .maps
            .get(name)
            .ok_or_else(|| Error::Config(format!("unknown map `{name}`")))?;
        let c = self.atlas.chart(chart);
        let d = c.dim();
        let affine = |matrix: &Vec<Vec<f64>>, translation: Option<Vec<f64>>| -> Result<Arc<dyn ChartMap<T>>> {
            if matrix.len() != d
                || matrix.iter().any(|r| r.len() != d)
                || translation.as_ref().is_some_and(|t| t.len() != d)
            {
                return Err(Error::Config(format!("map `{name}`: expected a {d}x{d} matrix")));
            }
            let m: AffineMap<T> = MapSpec {
                matrix: matrix.clone(),
                translation,
            }
            .build();
            Ok(Arc::new(m))
        };
        match def {
            MapDef::Linear { matrix } => affine(matrix, None),
            MapDef::Affine { matrix, translation } => affine(matrix, Some(translation.clone())),
            MapDef::Polynomial { components } => {
                if components.len() != d {
                    return Err(Error::Config(format!("map `{name}`: expected {d} components")));
                }
                let comps = components
                    .iter()
                    .map(|t| build_polynomial(d, t))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Arc::new(PolyMap(PolyField::new(comps))))
            }
            MapDef::Element { index } => {
                if *index >= c.group.order() {
                    return Err(Error::Config(format!(
                        "map `{name}`: group of chart `{}` has {} elements",
                        c.name,
                        c.group.order()
                    )));
                }
                Ok(Arc::new(c.group.element(*index).map().clone()))
            }
            MapDef::ExpSection { field } => {
                let budget = budget.ok_or_else(|| Error::InvalidArgument(format!("map `{name}` needs a budget")))?;
                let diffeo = exp_section(self.section(field)?, budget)?;
                Ok(Arc::new(DiffeoLift { diffeo, chart }))
            }
            MapDef::Composite { maps } => {
                if maps.iter().any(|m| m == name) {
                    return Err(Error::Config(format!("map `{name}` refers to itself")));
                }
                let parts = maps
                    .iter()
                    .map(|m| self.map(m, chart, budget))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Arc::new(Composite(parts)))
            }
        }
    }
}

fn context(e: Error, what: &str) -> Error {
    match e {
        Error::Config(m) => Error::Config(format!("{what}: {m}")),
        Error::Validation(m) => Error::Validation(format!("{what}: {m}")),
        other => other,
    }
}

fn build_field<T: Scalar>(
    chart: &OrbifoldChart<T>,
    spec: Option<&FieldSpec>,
) -> Result<crate::orbisection::ChartField<T>> {
    match spec {
        Some(f) => f.build(chart),
        None => Err(Error::Config(format!(
            "no field for chart `{}` (and no \"*\" entry)",
            chart.name
        ))),
    }
}

/// Build and validate an orbisection.
pub fn build_section<T: Scalar>(atlas: &Atlas<T>, spec: &SectionSpec) -> Result<Orbisection<T>> {
    unknown_keys(atlas, &spec.charts, "charts")?;
    let sigma = match &spec.from {
        Some(from) => {
            let id = atlas
                .chart_by_name(from)
                .ok_or_else(|| Error::Config(format!("unknown chart `{from}`")))?;
            if spec.charts.len() != 1 {
                return Err(Error::Config("`from` needs exactly one chart entry".into()));
            }
            let field = build_field(atlas.chart(id), per_chart(&spec.charts, from))?;
            Orbisection::propagate(atlas, id, field)?
        }
        None => {
            let fields = atlas
                .charts()
                .iter()
                .map(|c| build_field(c, per_chart(&spec.charts, &c.name)))
                .collect::<Result<Vec<_>>>()?;
            Orbisection::from_fields(atlas, fields)?
        }
    };
    let tol = T::of(SECTION_TOL);
    let (e, c) = (
        sigma.equivariance_residual(atlas)?,
        sigma.compatibility_residual(atlas)?,
    );
    if e > tol || c > tol {
        return Err(Error::Validation(format!(
            "not an orbisection: equivariance residual {:e}, compatibility residual {:e}",
            e.as_f64(),
            c.as_f64()
        )));
    }
    Ok(sigma)
}

pub fn build_curve<T: Scalar>(atlas: &Atlas<T>, spec: &CurveSpec) -> Result<TimeDependentSection<T>> {
    let CurveSpec::PolyT { coefficients, slices } = spec;
    let build = |v: &Vec<SectionSpec>| v.iter().map(|s| build_section(atlas, s)).collect::<Result<Vec<_>>>();
    match (coefficients, slices) {
        (Some(c), None) => TimeDependentSection::poly(build(c)?),
        (None, Some(s)) => TimeDependentSection::samples(build(s)?),
        _ => Err(Error::Config(
            "poly_t needs exactly one of `coefficients` and `slices`".into(),
        )),
    }
    .map_err(|e| match e {
        Error::InvalidArgument(m) => Error::Config(m),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINI: &str = r#"{
        "name": "mini",
        "atlas": {"dimension": 1, "charts": [
            {"id": "U", "region": {"kind": "ball", "center": [0.0], "radius": 2.0},
             "group": {"generators": [{"matrix": [[-1.0]]}]}}]},
        "fields": {"s": {"charts": {"*": {"kind": "linear", "matrix": [[0.1]]}}}}
    }"#;

    #[test]
    fn loads_and_defaults() {
        let s: Scenario<f64> = Scenario::from_json(MINI).unwrap();
        assert_eq!(s.commands().step, 1e-3);
        assert_eq!(s.section("s").unwrap().eval(ChartId(0), &[1.0]).unwrap(), vec![0.1]);
    }

    #[test]
    fn reports_location_of_errors() {
        let bad = MINI.replace("\"radius\": 2.0", "\"radius\": \"two\"");
        let err = ScenarioSpec::from_json(&bad).unwrap_err().to_string();
        assert!(
            err.contains("line 4") && err.contains("atlas.charts[0].region"),
            "{err}"
        );
    }

    #[test]
    fn rejects_non_equivariant_fields() {
        let bad = MINI.replace(
            "\"kind\": \"linear\", \"matrix\": [[0.1]]",
            "\"kind\": \"constant\", \"vector\": [0.1]",
        );
        assert!(matches!(Scenario::<f64>::from_json(&bad), Err(Error::Validation(_))));
    }
}
