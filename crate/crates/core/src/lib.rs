//! Riemannian orbifolds on finite atlases of isometric finite group actions:
//! geodesics and the orbifold exponential map, orbisections, and the local
//! group structure of the orbifold diffeomorphism group.
//!
//! All numerics are generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases at the crate root name the usual double-precision instances.

// `!(x < bound)` is used on purpose: NaN must fail these checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diffeo;
pub mod equivariant;
pub mod error;
pub mod fixtures;
pub mod geodesic;
pub mod linalg;
pub mod metric;
pub mod orbifold;
pub mod orbisection;
pub mod poly;
pub mod region;
pub mod regularity;
pub mod scalar;
pub mod scenario;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Atlas64 = orbifold::Atlas<f64>;
pub type Metric64 = metric::OrbifoldMetric<f64>;
pub type Geodesic64 = geodesic::OrbifoldGeodesic<f64>;
pub type Orbisection64 = orbisection::Orbisection<f64>;
pub type Budget64 = diffeo::NeighborhoodBudget<f64>;
pub type LocalDiffeo64 = diffeo::LocalDiffeo<f64>;
pub type Curve64 = regularity::TimeDependentSection<f64>;
pub type Scenario64 = scenario::Scenario<f64>;

pub type Atlas32 = orbifold::Atlas<f32>;
pub type Metric32 = metric::OrbifoldMetric<f32>;
pub type Orbisection32 = orbisection::Orbisection<f32>;
pub type Scenario32 = scenario::Scenario<f32>;
