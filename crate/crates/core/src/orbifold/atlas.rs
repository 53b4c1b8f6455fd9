//! Charts, changes of charts and atlases, plus their config form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::orbifold::group::{AffineMap, FiniteGroup, GroupElement};
use crate::region::{Region, RegionSpec};
use crate::scalar::Scalar;

/// Default tolerance for purely algebraic comparisons.
pub const TOL_ALG: f64 = 1e-9;

/// Index of a chart inside its [`Atlas`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChartId(pub usize);

/// Region with a finite isometric group action leaving it invariant.
#[derive(Clone, Debug)]
pub struct OrbifoldChart<T> {
    pub name: String,
    pub region: Region<T>,
    pub group: FiniteGroup<T>,
}

impl<T: Scalar> OrbifoldChart<T> {
    pub fn new(name: impl Into<String>, region: Region<T>, group: FiniteGroup<T>, tol: T) -> Result<Self> {
        let name = name.into();
        if region.dim() != group.dim() {
            return Err(Error::Validation(format!("chart `{name}`: dimension mismatch")));
        }
        let slack = tol * region.scale().max(T::one());
        for b in region.boundary_samples(9) {
            for g in group.elements() {
                let c = region.clearance(&g.apply(&b));
                if c.abs() > slack {
                    return Err(Error::Validation(format!(
                        "chart `{name}`: domain not invariant under the group (boundary residual {})",
                        c.as_f64()
                    )));
                }
            }
        }
        Ok(Self { name, region, group })
    }

    pub fn dim(&self) -> usize {
        self.region.dim()
    }

    pub fn check_inside(&self, x: &[T]) -> Result<()> {
        if x.len() == self.dim() && self.region.contains(x, T::zero()) {
            Ok(())
        } else {
            Err(Error::Domain {
                chart: self.name.clone(),
            })
        }
    }
}

/// Affine isometric embedding of a sub-region of `source` into `target`.
#[derive(Clone, Debug)]
pub struct ChangeOfCharts<T> {
    pub source: ChartId,
    pub target: ChartId,
    /// Domain, in source coordinates.
    pub region: Region<T>,
    pub map: GroupElement<T>,
}

#[derive(Clone, Debug)]
pub struct Atlas<T> {
    dim: usize,
    charts: Vec<OrbifoldChart<T>>,
    changes: Vec<ChangeOfCharts<T>>,
    tol: T,
}

impl<T: Scalar> Atlas<T> {
    pub fn new(charts: Vec<OrbifoldChart<T>>, changes: Vec<ChangeOfCharts<T>>, tol: T) -> Result<Self> {
        let dim = charts
            .first()
            .map(OrbifoldChart::dim)
            .ok_or_else(|| Error::Validation("atlas has no charts".into()))?;
        if charts.iter().any(|c| c.dim() != dim) {
            return Err(Error::Validation("charts of different dimensions".into()));
        }
        let atlas = Self {
            dim,
            charts,
            changes,
            tol,
        };
        atlas.validate_changes()?;
        Ok(atlas)
    }

    /// Single chart, no changes.
    pub fn global(chart: OrbifoldChart<T>, tol: T) -> Result<Self> {
        Self::new(vec![chart], Vec::new(), tol)
    }

    fn validate_changes(&self) -> Result<()> {
        let n = self.charts.len();
        for (k, ch) in self.changes.iter().enumerate() {
            if ch.source.0 >= n || ch.target.0 >= n {
                return Err(Error::Validation(format!("change {k} references a missing chart")));
            }
            let src = &self.charts[ch.source.0];
            let tgt = &self.charts[ch.target.0];
            let slack = self.tol * tgt.region.scale().max(T::one());
            let mut probes = ch.region.boundary_samples(7);
            probes.push(ch.region.center().to_vec());
            for p in &probes {
                if src.region.clearance(p) < -slack {
                    return Err(Error::Validation(format!(
                        "change {k}: domain not contained in chart `{}`",
                        src.name
                    )));
                }
                if tgt.region.clearance(&ch.map.apply(p)) < -slack {
                    return Err(Error::Validation(format!(
                        "change {k}: image not contained in chart `{}`",
                        tgt.name
                    )));
                }
            }
            // a declared inverse: reverse change whose composite is a source group element
            let has_inverse = self.changes.iter().any(|other| {
                other.source == ch.target
                    && other.target == ch.source
                    && src.group.index_of(&other.map.compose(&ch.map), self.tol).is_some()
            });
            if !has_inverse {
                return Err(Error::Validation(format!(
                    "change {k} (`{}` → `{}`) has no declared inverse",
                    src.name, tgt.name
                )));
            }
            // equivariance on overlaps: λ(g x) = h λ(x) for some target element h
            for x in ch.region.grid(5, 625) {
                let lx = ch.map.apply(&x);
                for g in src.group.elements() {
                    let gx = g.apply(&x);
                    if !ch.region.contains(&gx, T::zero()) {
                        continue;
                    }
                    let lgx = ch.map.apply(&gx);
                    let ok = tgt
                        .group
                        .elements()
                        .iter()
                        .any(|h| crate::linalg::dist(&h.apply(&lx), &lgx) < slack);
                    if !ok {
                        return Err(Error::Validation(format!(
                            "change {k} is not compatible with the group of `{}`",
                            src.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tol(&self) -> T {
        self.tol
    }

    pub fn set_tol(&mut self, tol: T) {
        self.tol = tol;
    }

    pub fn charts(&self) -> &[OrbifoldChart<T>] {
        &self.charts
    }

    pub fn chart(&self, id: ChartId) -> &OrbifoldChart<T> {
        &self.charts[id.0]
    }

    pub fn chart_ids(&self) -> impl Iterator<Item = ChartId> {
        (0..self.charts.len()).map(ChartId)
    }

    pub fn chart_by_name(&self, name: &str) -> Option<ChartId> {
        self.charts.iter().position(|c| c.name == name).map(ChartId)
    }

    pub fn changes(&self) -> &[ChangeOfCharts<T>] {
        &self.changes
    }

    pub fn changes_from(&self, source: ChartId) -> impl Iterator<Item = (usize, &ChangeOfCharts<T>)> {
        self.changes.iter().enumerate().filter(move |(_, c)| c.source == source)
    }
}

/// Point of the orbit space, represented in one chart.
#[derive(Clone, Debug, PartialEq)]
pub struct OrbitPoint<T> {
    pub chart: ChartId,
    pub rep: Vec<T>,
}

impl<T: Scalar> OrbitPoint<T> {
    pub fn new(atlas: &Atlas<T>, chart: ChartId, rep: Vec<T>) -> Result<Self> {
        atlas.chart(chart).check_inside(&rep)?;
        Ok(Self { chart, rep })
    }
}

/// Formal orbifold tangent vector `(chart, base, vec)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentOrbVector<T> {
    pub chart: ChartId,
    pub base: Vec<T>,
    pub vec: Vec<T>,
}

impl<T: Scalar> TangentOrbVector<T> {
    pub fn new(atlas: &Atlas<T>, chart: ChartId, base: Vec<T>, vec: Vec<T>) -> Result<Self> {
        atlas.chart(chart).check_inside(&base)?;
        if vec.len() != atlas.dim() {
            return Err(Error::InvalidArgument("tangent vector dimension mismatch".into()));
        }
        Ok(Self { chart, base, vec })
    }

    pub fn zero(chart: ChartId, base: Vec<T>) -> Self {
        let d = base.len();
        Self {
            chart,
            base,
            vec: vec![T::zero(); d],
        }
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            chart: self.chart,
            base: self.base.clone(),
            vec: crate::linalg::scale(&self.vec, s),
        }
    }

    pub fn point(&self) -> OrbitPoint<T> {
        OrbitPoint {
            chart: self.chart,
            rep: self.base.clone(),
        }
    }
}

// ---- config form -------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    pub matrix: Vec<Vec<f64>>,
    #[serde(default)]
    pub translation: Option<Vec<f64>>,
}

impl MapSpec {
    pub fn build<T: Scalar>(&self) -> AffineMap<T> {
        let m = Mat::from_rows(
            &self
                .matrix
                .iter()
                .map(|r| r.iter().map(|&x| T::of(x)).collect())
                .collect::<Vec<_>>(),
        );
        let t = self
            .translation
            .as_ref()
            .map(|t| t.iter().map(|&x| T::of(x)).collect())
            .unwrap_or_else(|| vec![T::zero(); m.rows()]);
        AffineMap::new(m, t)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSpec {
    #[serde(default)]
    pub generators: Vec<MapSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartSpec {
    pub id: String,
    pub region: RegionSpec,
    #[serde(default = "empty_group")]
    pub group: GroupSpec,
}

fn empty_group() -> GroupSpec {
    GroupSpec { generators: vec![] }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChangeSpec {
    pub source: String,
    pub target: String,
    pub region: RegionSpec,
    pub map: MapSpec,
}

/// Atlas description file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtlasSpec {
    pub dimension: usize,
    pub charts: Vec<ChartSpec>,
    #[serde(default)]
    pub changes: Vec<ChangeSpec>,
}

impl AtlasSpec {
    pub fn build<T: Scalar>(&self, tol: T) -> Result<Atlas<T>> {
        let d = self.dimension;
        let check_map = |m: &MapSpec, what: &str| -> Result<()> {
            if m.matrix.len() != d || m.matrix.iter().any(|r| r.len() != d) {
                return Err(Error::Config(format!("{what}: matrix must be {d}x{d}")));
            }
            if m.translation.as_ref().is_some_and(|t| t.len() != d) {
                return Err(Error::Config(format!("{what}: translation must have length {d}")));
            }
            Ok(())
        };
        let mut charts = Vec::new();
        for c in &self.charts {
            let region: Region<T> = c.region.build();
            if region.dim() != d {
                return Err(Error::Config(format!("chart `{}`: region dimension != {d}", c.id)));
            }
            let mut gens = Vec::new();
            for (i, g) in c.group.generators.iter().enumerate() {
                check_map(g, &format!("chart `{}` generator {i}", c.id))?;
                gens.push(GroupElement::new(g.build(), tol)?);
            }
            let group = FiniteGroup::generated_by(d, &gens, tol)?;
            charts.push(OrbifoldChart::new(c.id.clone(), region, group, tol)?);
        }
        let lookup = |name: &str| -> Result<ChartId> {
            charts
                .iter()
                .position(|c| c.name == name)
                .map(ChartId)
                .ok_or_else(|| Error::Config(format!("unknown chart id `{name}`")))
        };
        let mut changes = Vec::new();
        for (i, c) in self.changes.iter().enumerate() {
            check_map(&c.map, &format!("change {i}"))?;
            changes.push(ChangeOfCharts {
                source: lookup(&c.source)?,
                target: lookup(&c.target)?,
                region: c.region.build(),
                map: GroupElement::new(c.map.build(), tol)?,
            });
        }
        Atlas::new(charts, changes, tol)
    }
}
