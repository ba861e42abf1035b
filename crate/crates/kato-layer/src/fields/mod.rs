//! Spacetime velocity and force fields, boundary traces, and the layer integrals built on them.

pub mod grid;

use nalgebra::{Matrix3, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

use crate::geometry::{Domain, DomainKind, Rule1D, TriangleRule, Triangulation, Vec2, Vec3};

pub use grid::{ingest_grid, write_grid, GridField, GridLayout, GRID_MAGIC};

/// ∇u with entry (i, j) = ∂_j u_i.
pub type Mat3 = Matrix3<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("trace error: {0}")]
    Trace(String),
    #[error("ingestion error at index {index}: {message}")]
    Ingestion { index: usize, message: String },
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Analytic,
    Gridded,
}

/// A vector field on (0, T) × Ω.
pub trait FieldSource: Send + Sync + fmt::Debug {
    fn value(&self, t: f64, x: &Vec3) -> Vec3;
    fn gradient(&self, t: f64, x: &Vec3) -> Mat3;
    fn time_range(&self) -> (f64, f64);
    fn kind(&self) -> SourceKind;

    /// ∂_t u; central differences unless a source knows better.
    fn time_derivative(&self, t: f64, x: &Vec3) -> Vec3 {
        let h = 1e-5 * (1.0 + t.abs());
        let lo = (t - h).max(0.0);
        (self.value(t + h, x) - self.value(lo, x)) / (t + h - lo)
    }

    /// Whether boundary gradients can be evaluated (one-sided stencils for grids).
    fn gradient_support(&self) -> Result<(), String> {
        Ok(())
    }

    /// True when the field depends only on t and the wall distance on channels,
    /// which lets integrators collapse tangential quadrature.
    fn tangentially_uniform(&self) -> bool {
        false
    }

    fn is_zero(&self) -> bool {
        false
    }
}

pub type Source = Arc<dyn FieldSource>;

pub fn curl(g: &Mat3) -> Vec3 {
    Vec3::new(g[(2, 1)] - g[(1, 2)], g[(0, 2)] - g[(2, 0)], g[(1, 0)] - g[(0, 1)])
}

/// Largest absolute eigenvalue of ½(G + Gᵀ).
pub fn strain_norm(g: &Mat3) -> f64 {
    let d = (g + g.transpose()) * 0.5;
    SymmetricEigen::new(d).eigenvalues.iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroField {
    pub t_max: f64,
}

impl FieldSource for ZeroField {
    fn value(&self, _: f64, _: &Vec3) -> Vec3 {
        Vec3::zeros()
    }
    fn gradient(&self, _: f64, _: &Vec3) -> Mat3 {
        Mat3::zeros()
    }
    fn time_range(&self) -> (f64, f64) {
        (0.0, self.t_max)
    }
    fn kind(&self) -> SourceKind {
        SourceKind::Analytic
    }
    fn time_derivative(&self, _: f64, _: &Vec3) -> Vec3 {
        Vec3::zeros()
    }
    fn tangentially_uniform(&self) -> bool {
        true
    }
    fn is_zero(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantField {
    pub value: Vec3,
    pub t_max: f64,
}

impl FieldSource for ConstantField {
    fn value(&self, _: f64, _: &Vec3) -> Vec3 {
        self.value
    }
    fn gradient(&self, _: f64, _: &Vec3) -> Mat3 {
        Mat3::zeros()
    }
    fn time_range(&self) -> (f64, f64) {
        (0.0, self.t_max)
    }
    fn kind(&self) -> SourceKind {
        SourceKind::Analytic
    }
    fn time_derivative(&self, _: f64, _: &Vec3) -> Vec3 {
        Vec3::zeros()
    }
    fn tangentially_uniform(&self) -> bool {
        true
    }
    fn is_zero(&self) -> bool {
        self.value == Vec3::zeros()
    }
}

type ValueFn = dyn Fn(f64, &Vec3) -> Vec3 + Send + Sync;
type GradFn = dyn Fn(f64, &Vec3) -> Mat3 + Send + Sync;

/// Analytic field from closures.
#[derive(Clone)]
pub struct FnField {
    pub name: String,
    pub t_max: f64,
    value: Arc<ValueFn>,
    gradient: Arc<GradFn>,
}

impl FnField {
    pub fn new(
        name: impl Into<String>,
        t_max: f64,
        value: impl Fn(f64, &Vec3) -> Vec3 + Send + Sync + 'static,
        gradient: impl Fn(f64, &Vec3) -> Mat3 + Send + Sync + 'static,
    ) -> Self {
        FnField { name: name.into(), t_max, value: Arc::new(value), gradient: Arc::new(gradient) }
    }
}

impl fmt::Debug for FnField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FnField({})", self.name)
    }
}

impl FieldSource for FnField {
    fn value(&self, t: f64, x: &Vec3) -> Vec3 {
        (self.value)(t, x)
    }
    fn gradient(&self, t: f64, x: &Vec3) -> Mat3 {
        (self.gradient)(t, x)
    }
    fn time_range(&self) -> (f64, f64) {
        (0.0, self.t_max)
    }
    fn kind(&self) -> SourceKind {
        SourceKind::Analytic
    }
}

/// Navier–Stokes data: u^ν, f^ν and ν.
#[derive(Debug, Clone)]
pub struct NSData {
    pub velocity: Source,
    pub force: Source,
    pub viscosity: f64,
    /// ‖u^ν(0)‖_{H¹}, when known.
    pub initial_h1: Option<f64>,
}

impl NSData {
    pub fn new(velocity: Source, force: Source, viscosity: f64, initial_h1: Option<f64>) -> Result<Self, FieldError> {
        if !(viscosity > 0.0) {
            return Err(FieldError::Contract(format!("viscosity must be positive, got {viscosity}")));
        }
        Ok(NSData { velocity, force, viscosity, initial_h1 })
    }

    pub fn zero(viscosity: f64, t_max: f64) -> Self {
        let z: Source = Arc::new(ZeroField { t_max });
        NSData { velocity: z.clone(), force: z, viscosity, initial_h1: Some(0.0) }
    }

    pub fn final_time(&self) -> f64 {
        self.velocity.time_range().1
    }

    fn uniform(&self) -> bool {
        self.velocity.tangentially_uniform() && self.force.tangentially_uniform()
    }
}

/// Euler background: ū, f̄ and A = ‖ū‖_{L∞((0,T)×∂Ω)}.
#[derive(Debug, Clone)]
pub struct EulerData {
    pub velocity: Source,
    pub force: Source,
    pub boundary_sup_a: f64,
}

impl EulerData {
    /// Measures A on boundary samples and checks ū·n = 0 there.
    pub fn new(velocity: Source, force: Source, domain: &Domain, tol: f64) -> Result<Self, FieldError> {
        let (_, t_max) = velocity.time_range();
        let mut a = 0.0f64;
        for k in 0..=8 {
            let t = t_max * k as f64 / 8.0;
            for x in domain.boundary_samples(12) {
                let u = velocity.value(t, &x);
                let un = u.dot(&domain.outward_normal(&x));
                if un.abs() > tol * (1.0 + u.norm()) {
                    return Err(FieldError::Contract(format!(
                        "impermeability fails at {x:?}, t = {t}: u·n = {un:e}"
                    )));
                }
                a = a.max(u.norm());
            }
        }
        Ok(EulerData { velocity, force, boundary_sup_a: a })
    }
}

/// Quadrature resolution for spacetime layer integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadConfig {
    pub time_levels: usize,
    pub time_order: usize,
    pub depth_levels: usize,
    pub depth_panels: usize,
    pub depth_order: usize,
    pub surface_panels: usize,
    pub surface_order: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig {
            time_levels: 48,
            time_order: 8,
            depth_levels: 48,
            depth_panels: 4,
            depth_order: 8,
            surface_panels: 4,
            surface_order: 4,
        }
    }
}

impl QuadConfig {
    pub fn time_rule(&self, t_max: f64) -> Rule1D {
        Rule1D::graded(0.0, t_max, self.time_levels, self.time_order)
    }

    /// Graded towards the wall inside the first panel, uniform beyond.
    pub fn depth_rule(&self, depth: f64) -> Rule1D {
        let p = self.depth_panels.max(1);
        let first = depth / p as f64;
        let mut breaks = vec![0.0];
        for k in (0..self.depth_levels).rev() {
            breaks.push(first * 0.5f64.powi(k as i32 + 1));
        }
        for i in 1..=p {
            breaks.push(first * i as f64);
        }
        Rule1D::composite(&breaks, self.depth_order)
    }
}

/// A boundary quadrature node: point, weight (area).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryNode {
    pub x: Vec3,
    pub weight: f64,
}

/// Tensor quadrature of ∂Ω; `collapse` keeps one node per channel wall.
pub fn boundary_rule(domain: &Domain, cfg: &QuadConfig, collapse: bool) -> Vec<BoundaryNode> {
    let mut out = Vec::new();
    match domain.kind {
        DomainKind::Channel { lx, lz, height } => {
            if collapse {
                for wall in [0.0, height] {
                    out.push(BoundaryNode { x: Vec3::new(0.5 * lx, wall, 0.5 * lz), weight: lx * lz });
                }
                return out;
            }
            let rx = Rule1D::uniform(0.0, lx, cfg.surface_panels, cfg.surface_order);
            let rz = Rule1D::uniform(0.0, lz, cfg.surface_panels, cfg.surface_order);
            for wall in [0.0, height] {
                for (x, wx) in rx.nodes.iter().zip(&rx.weights) {
                    for (z, wz) in rz.nodes.iter().zip(&rz.weights) {
                        out.push(BoundaryNode { x: Vec3::new(*x, wall, *z), weight: wx * wz });
                    }
                }
            }
        }
        DomainKind::Sphere { radius } => {
            let ru = Rule1D::uniform(-1.0, 1.0, 2 * cfg.surface_panels, cfg.surface_order);
            let nphi = 4 * cfg.surface_panels * cfg.surface_order;
            for (u, wu) in ru.nodes.iter().zip(&ru.weights) {
                let s = (1.0 - u * u).sqrt();
                for j in 0..nphi {
                    let phi = 2.0 * PI * (j as f64 + 0.5) / nphi as f64;
                    out.push(BoundaryNode {
                        x: radius * Vec3::new(s * phi.cos(), s * phi.sin(), *u),
                        weight: radius * radius * wu * 2.0 * PI / nphi as f64,
                    });
                }
            }
        }
        DomainKind::Torus { major, minor } => {
            let n = 4 * cfg.surface_panels * cfg.surface_order;
            for i in 0..n {
                let th = 2.0 * PI * (i as f64 + 0.5) / n as f64;
                for j in 0..n {
                    let ph = 2.0 * PI * (j as f64 + 0.5) / n as f64;
                    let x = crate::geometry::chart::torus_point(major, minor, th, ph);
                    let w = (major + minor * ph.cos()) * minor * (2.0 * PI / n as f64).powi(2);
                    out.push(BoundaryNode { x, weight: w });
                }
            }
        }
    }
    out
}

/// Depth of the shell from each boundary point that fills Ω.
pub fn full_depth(domain: &Domain) -> f64 {
    match domain.kind {
        DomainKind::Channel { height, .. } => 0.5 * height,
        DomainKind::Sphere { radius } => radius,
        DomainKind::Torus { minor, .. } => minor,
    }
}

/// ∫_{U_depth} f dx through x' − z n(x'), at one time.
pub fn shell_integral_at(
    domain: &Domain,
    depth: f64,
    cfg: &QuadConfig,
    collapse: bool,
    f: impl Fn(&Vec3) -> f64,
) -> f64 {
    let nodes = boundary_rule(domain, cfg, collapse);
    let zr = cfg.depth_rule(depth);
    let mut s = 0.0;
    for b in &nodes {
        let n = domain.outward_normal(&b.x);
        for (z, wz) in zr.nodes.iter().zip(&zr.weights) {
            let x = b.x - *z * n;
            s += b.weight * wz * domain.tubular_jacobian(&b.x, *z) * f(&x);
        }
    }
    s
}

/// ∫₀ᵀ ∫_{U_depth} f dx dt, parallel over time nodes.
pub fn shell_integral(
    domain: &Domain,
    depth: f64,
    t_max: f64,
    cfg: &QuadConfig,
    collapse: bool,
    f: impl Fn(f64, &Vec3) -> f64 + Sync,
) -> f64 {
    let tr = cfg.time_rule(t_max);
    tr.nodes
        .par_iter()
        .zip(&tr.weights)
        .map(|(t, w)| w * shell_integral_at(domain, depth, cfg, collapse, |x| f(*t, x)))
        .collect::<Vec<f64>>().iter().sum::<f64>()
}

/// ∫₀ᵀ∫_{U_δ} ν|∇u^ν|² dx dt.
pub fn layer_dissipation(ns: &NSData, domain: &Domain, delta: f64) -> Result<f64, FieldError> {
    layer_dissipation_with(ns, domain, delta, &QuadConfig::default())
}

pub fn layer_dissipation_with(ns: &NSData, domain: &Domain, delta: f64, cfg: &QuadConfig) -> Result<f64, FieldError> {
    check_depth(domain, delta)?;
    if ns.velocity.is_zero() {
        return Ok(0.0);
    }
    let nu = ns.viscosity;
    let v = shell_integral(domain, delta, ns.final_time(), cfg, ns.uniform(), |t, x| {
        nu * ns.velocity.gradient(t, x).norm_squared()
    });
    finite(v, "layer dissipation")
}

pub(crate) fn check_depth(domain: &Domain, delta: f64) -> Result<(), FieldError> {
    if !(delta > 0.0) || delta > full_depth(domain).min(domain.bar_delta) * (1.0 + 1e-12) {
        return Err(FieldError::Contract(format!(
            "layer width {delta} must lie in (0, {}]",
            domain.bar_delta.min(full_depth(domain))
        )));
    }
    Ok(())
}

pub(crate) fn finite(v: f64, what: &str) -> Result<f64, FieldError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(FieldError::Trace(format!("{what} is not finite")))
    }
}

/// Sample points of Ω used for L∞ norms: a wall-normal grid at every boundary sample.
pub fn interior_samples(domain: &Domain, tangential: usize, normal: usize) -> Vec<Vec3> {
    let depth = full_depth(domain);
    let mut out = Vec::new();
    for x0 in domain.boundary_samples(tangential) {
        let n = domain.outward_normal(&x0);
        for k in 0..=normal {
            let z = depth * k as f64 / normal as f64;
            out.push(x0 - z * n);
        }
    }
    out
}

/// ‖Dū(t)‖_{L∞(Ω)} on sample points.
pub fn strain_sup_norm(euler: &EulerData, domain: &Domain, t: f64) -> f64 {
    let tang = if euler.velocity.tangentially_uniform() { 1 } else { 8 };
    interior_samples(domain, tang, 512)
        .iter()
        .map(|x| strain_norm(&euler.velocity.gradient(t, x)))
        .fold(0.0, f64::max)
}

/// One sample of a boundary quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    /// Index of the mesh triangle carrying the sample.
    pub root: u32,
    /// Reference coordinates in that triangle's chart.
    pub xi: [f64; 2],
    pub t: f64,
    /// Measure (time × area) represented by the sample.
    pub weight: f64,
    pub value: [f64; 3],
}

impl TraceSample {
    pub fn value(&self) -> Vec3 {
        Vec3::from(self.value)
    }
    pub fn xi(&self) -> Vec2 {
        Vec2::from(self.xi)
    }
}

/// Weighted samples of a boundary vector quantity over (0, T) × ∂Ω.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryTrace {
    pub lineage: String,
    pub final_time: f64,
    pub samples: Vec<TraceSample>,
}

impl BoundaryTrace {
    pub fn total_weight(&self) -> f64 {
        self.samples.iter().map(|s| s.weight).sum()
    }

    pub fn integral(&self) -> Vec3 {
        self.samples.iter().fold(Vec3::zeros(), |a, s| a + s.weight * s.value())
    }

    /// Same nodes with values replaced.
    pub fn map_values(&self, mut f: impl FnMut(&TraceSample) -> Vec3) -> BoundaryTrace {
        let samples = self
            .samples
            .iter()
            .map(|s| TraceSample { value: f(s).into(), ..*s })
            .collect();
        BoundaryTrace { lineage: self.lineage.clone(), final_time: self.final_time, samples }
    }
}

/// Samples a boundary quantity at triangle quadrature nodes × uniform (midpoint) times.
pub fn boundary_trace(
    mesh: &Triangulation,
    t_max: f64,
    time_samples: usize,
    order: usize,
    f: impl Fn(f64, &Vec3) -> Vec3 + Sync,
) -> BoundaryTrace {
    let rule = TriangleRule::new(order);
    let dt = t_max / time_samples as f64;
    let samples = mesh
        .triangles
        .par_iter()
        .enumerate()
        .flat_map_iter(|(i, tri)| {
            let d = tri.domain();
            let ref_area = 0.5 * ((d[1] - d[0]).perp(&(d[2] - d[0]))).abs();
            let mut v = Vec::with_capacity(rule.len() * time_samples);
            for (b, w) in rule.bary.iter().zip(&rule.fractions) {
                let xi = d[0] * b[0] + d[1] * b[1] + d[2] * b[2];
                let x = tri.chart.map(&xi);
                let da = w * ref_area * tri.chart.area_element(&xi);
                for k in 0..time_samples {
                    let t = (k as f64 + 0.5) * dt;
                    v.push(TraceSample { root: i as u32, xi: xi.into(), t, weight: da * dt, value: f(t, &x).into() });
                }
            }
            v
        })
        .collect();
    BoundaryTrace { lineage: mesh.lineage(), final_time: t_max, samples }
}

/// curl u^ν at triangle quadrature nodes × uniform time nodes.
pub fn vorticity_trace(ns: &NSData, mesh: &Triangulation, time_samples: usize) -> Result<BoundaryTrace, FieldError> {
    ns.velocity.gradient_support().map_err(FieldError::Trace)?;
    if time_samples == 0 {
        return Err(FieldError::Trace("time_samples must be positive".into()));
    }
    let tr = boundary_trace(mesh, ns.final_time(), time_samples, crate::geometry::mesh::DEFAULT_ORDER, |t, x| {
        curl(&ns.velocity.gradient(t, x))
    });
    if tr.samples.iter().any(|s| s.value.iter().any(|v| !v.is_finite())) {
        return Err(FieldError::Trace("non-finite vorticity sample".into()));
    }
    Ok(tr)
}

/// ‖u(t)‖²_{H¹} = ‖u‖² + ‖∇u‖² by quadrature.
pub fn h1_squared(u: &dyn FieldSource, domain: &Domain, t: f64, cfg: &QuadConfig) -> f64 {
    shell_integral_at(domain, full_depth(domain), cfg, u.tangentially_uniform(), |x| {
        u.value(t, x).norm_squared() + u.gradient(t, x).norm_squared()
    })
}
