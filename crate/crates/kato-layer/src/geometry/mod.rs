//! Curved boundary geometry: charts, cylinders, dyadic splits, triangulations,
//! tubular neighborhoods and quadrature.

pub mod chart;
pub mod domain;
pub mod mesh;
pub mod quadrature;

pub use chart::{validate_chart, Chart, ChartKind, ChartReport, Vec2, Vec3};
pub use domain::{Domain, DomainKind};
pub use mesh::{
    dyadic_split_cylinder, dyadic_split_triangle, midpoint_children, surface_quadrature,
    triangulate_boundary, CurvedCylinder, CurvedTriangle, MeshSummary, Region, Triangulation,
};
pub use quadrature::{gauss_legendre, Rule1D, TriangleRule};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid chart: {0}")]
    InvalidChart(String),
    #[error("infeasible size: {0}")]
    InfeasibleSize(String),
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("integration failed: {0}")]
    Integration(String),
}
