//! Supported fluid domains with analytic boundaries and tubular neighborhoods.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::chart::Vec3;
use super::GeometryError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainKind {
    /// (0, lx) × (0, height) × (0, lz), periodic in x and z, walls at y = 0 and y = height.
    Channel { lx: f64, lz: f64, height: f64 },
    /// Ball of the given radius centred at the origin.
    Sphere { radius: f64 },
    /// Solid torus about the z axis.
    Torus { major: f64, minor: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub kind: DomainKind,
    /// Validated width δ̄ of the tubular neighborhood.
    pub bar_delta: f64,
    pub boundary_area: f64,
}

impl Domain {
    pub fn new(kind: DomainKind, bar_delta: f64) -> Result<Self, GeometryError> {
        let bad = |m: String| Err(GeometryError::InvalidDomain(m));
        let (limit, inclusive, area) = match kind {
            DomainKind::Channel { lx, lz, height } => {
                if !(lx > 0.0 && lz > 0.0 && height > 0.0) {
                    return bad(format!("channel dimensions must be positive: {kind:?}"));
                }
                // The two wall layers only touch at the mid-plane, so ½·height is admissible.
                (0.5 * height, true, 2.0 * lx * lz)
            }
            DomainKind::Sphere { radius } => {
                if !(radius > 0.0) {
                    return bad(format!("sphere radius must be positive: {radius}"));
                }
                (radius, false, 4.0 * PI * radius * radius)
            }
            DomainKind::Torus { major, minor } => {
                if !(minor > 0.0 && major > minor) {
                    return bad(format!("torus needs major > minor > 0: {kind:?}"));
                }
                (minor, false, 4.0 * PI * PI * major * minor)
            }
        };
        let too_wide = if inclusive { bar_delta > limit } else { bar_delta >= limit };
        if !(bar_delta > 0.0) || too_wide {
            return bad(format!("bar_delta {bar_delta} must lie in (0, {limit})"));
        }
        let d = Domain { kind, bar_delta, boundary_area: area };
        d.check_tubular_rays(64)?;
        Ok(d)
    }

    /// Unit channel 1×1×1 with δ̄ = ½.
    pub fn unit_channel() -> Self {
        Domain::new(DomainKind::Channel { lx: 1.0, lz: 1.0, height: 1.0 }, 0.5)
            .expect("unit channel is valid")
    }

    pub fn id(&self) -> String {
        match self.kind {
            DomainKind::Channel { lx, lz, height } => format!("channel-{lx}x{lz}x{height}"),
            DomainKind::Sphere { radius } => format!("sphere-{radius}"),
            DomainKind::Torus { major, minor } => format!("torus-{major}-{minor}"),
        }
    }

    pub fn volume(&self) -> f64 {
        match self.kind {
            DomainKind::Channel { lx, lz, height } => lx * lz * height,
            DomainKind::Sphere { radius } => 4.0 / 3.0 * PI * radius.powi(3),
            DomainKind::Torus { major, minor } => 2.0 * PI * PI * major * minor * minor,
        }
    }

    /// Diameter used as the default fallback length (the period cell's diagonal for channels).
    pub fn diameter(&self) -> f64 {
        match self.kind {
            DomainKind::Channel { lx, lz, height } => (lx * lx + lz * lz + height * height).sqrt(),
            DomainKind::Sphere { radius } => 2.0 * radius,
            DomainKind::Torus { major, minor } => 2.0 * (major + minor),
        }
    }

    /// Outer unit normal at (or nearest to) a boundary point.
    pub fn outward_normal(&self, x: &Vec3) -> Vec3 {
        match self.kind {
            DomainKind::Channel { height, .. } => {
                if x.y < 0.5 * height {
                    -Vec3::y()
                } else {
                    Vec3::y()
                }
            }
            DomainKind::Sphere { .. } => x.normalize(),
            DomainKind::Torus { major, .. } => {
                let rho = (x.x * x.x + x.y * x.y).sqrt();
                let core = Vec3::new(major * x.x / rho, major * x.y / rho, 0.0);
                (x - core).normalize()
            }
        }
    }

    /// Principal curvatures (outer normal convention, convex positive) at a boundary point.
    pub fn curvatures(&self, x: &Vec3) -> (f64, f64) {
        match self.kind {
            DomainKind::Channel { .. } => (0.0, 0.0),
            DomainKind::Sphere { radius } => (1.0 / radius, 1.0 / radius),
            DomainKind::Torus { major, minor } => {
                let rho = (x.x * x.x + x.y * x.y).sqrt();
                let cos_phi = (rho - major) / minor;
                (1.0 / minor, cos_phi / rho)
            }
        }
    }

    /// x' − z n(x') for 0 ≤ z < δ̄.
    pub fn tubular_point(&self, x_boundary: &Vec3, z: f64) -> Result<Vec3, GeometryError> {
        if !(0.0..self.bar_delta).contains(&z) {
            return Err(GeometryError::Contract(format!(
                "depth {z} outside [0, {})",
                self.bar_delta
            )));
        }
        Ok(self.tubular_point_unchecked(x_boundary, z))
    }

    pub(crate) fn tubular_point_unchecked(&self, x_boundary: &Vec3, z: f64) -> Vec3 {
        x_boundary - z * self.outward_normal(x_boundary)
    }

    /// Volume density of (x', z) ↦ x' − z n(x') relative to dA dz.
    pub fn tubular_jacobian(&self, x_boundary: &Vec3, z: f64) -> f64 {
        let (k1, k2) = self.curvatures(x_boundary);
        (1.0 - z * k1) * (1.0 - z * k2)
    }

    /// Distance from an interior point to ∂Ω.
    pub fn distance_to_boundary(&self, x: &Vec3) -> f64 {
        match self.kind {
            DomainKind::Channel { height, .. } => x.y.min(height - x.y),
            DomainKind::Sphere { radius } => radius - x.norm(),
            DomainKind::Torus { major, minor } => {
                let rho = (x.x * x.x + x.y * x.y).sqrt();
                minor - ((rho - major).powi(2) + x.z * x.z).sqrt()
            }
        }
    }

    pub fn contains(&self, x: &Vec3) -> bool {
        self.distance_to_boundary(x) > 0.0
    }

    /// Displacement b − a with periodic directions wrapped to the nearest image.
    pub fn displacement(&self, a: &Vec3, b: &Vec3) -> Vec3 {
        let mut d = b - a;
        if let DomainKind::Channel { lx, lz, .. } = self.kind {
            d.x -= lx * (d.x / lx).round();
            d.z -= lz * (d.z / lz).round();
        }
        d
    }

    pub fn distance(&self, a: &Vec3, b: &Vec3) -> f64 {
        self.displacement(a, b).norm()
    }

    /// Deterministic boundary sample on an n×n parameter grid.
    pub fn boundary_samples(&self, n: usize) -> Vec<Vec3> {
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let u = (i as f64 + 0.5) / n as f64;
                let v = (j as f64 + 0.5) / n as f64;
                out.push(self.boundary_point(u, v));
            }
        }
        out
    }

    /// Boundary point from parameters (u, v) ∈ [0, 1)².
    pub fn boundary_point(&self, u: f64, v: f64) -> Vec3 {
        match self.kind {
            DomainKind::Channel { lx, lz, height } => {
                // u in [0, ½) is the lower wall, [½, 1) the upper one.
                let (wall, s) = if u < 0.5 { (0.0, 2.0 * u) } else { (height, 2.0 * u - 1.0) };
                Vec3::new(s * lx, wall, v * lz)
            }
            DomainKind::Sphere { radius } => {
                let z = 2.0 * u - 1.0;
                let phi = 2.0 * PI * v;
                let s = (1.0 - z * z).max(0.0).sqrt();
                radius * Vec3::new(s * phi.cos(), s * phi.sin(), z)
            }
            DomainKind::Torus { major, minor } => {
                super::chart::torus_point(major, minor, 2.0 * PI * u, 2.0 * PI * v)
            }
        }
    }

    // Every inward ray of length δ̄ from a sampled boundary point must stay in Ω
    // at the expected distance from the boundary.
    fn check_tubular_rays(&self, n: usize) -> Result<(), GeometryError> {
        for x in self.boundary_samples(n) {
            for k in 1..=8 {
                let z = self.bar_delta * k as f64 / 8.0 * (1.0 - 1e-9);
                let y = self.tubular_point_unchecked(&x, z);
                let d = self.distance_to_boundary(&y);
                if !(d > 0.0) || (d - z).abs() > 1e-9 * (1.0 + z) {
                    return Err(GeometryError::InvalidDomain(format!(
                        "inward ray from {x:?} leaves the tubular neighborhood at depth {z}"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_wall_tubular_point() {
        let d = Domain::new(DomainKind::Channel { lx: 1.0, lz: 1.0, height: 1.0 }, 0.4).unwrap();
        let p = d.tubular_point(&Vec3::new(0.3, 0.0, 0.7), 0.1).unwrap();
        assert!((p - Vec3::new(0.3, 0.1, 0.7)).norm() < 1e-15);
        let q = d.tubular_point(&Vec3::new(0.3, 1.0, 0.7), 0.0).unwrap();
        assert_eq!(q, Vec3::new(0.3, 1.0, 0.7));
        assert!(d.tubular_point(&Vec3::new(0.3, 0.0, 0.7), 0.5).is_err());
        assert_eq!(d.boundary_area, 2.0);
    }

    #[test]
    fn sphere_tubular_point_is_radial() {
        let d = Domain::new(DomainKind::Sphere { radius: 1.0 }, 0.5).unwrap();
        let x = Vec3::new(1.0, 2.0, -2.0) / 3.0;
        let p = d.tubular_point(&x, 0.2).unwrap();
        assert!((p.norm() - 0.8).abs() < 1e-15);
        assert!((d.distance_to_boundary(&p) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn invalid_bar_delta_rejected() {
        assert!(Domain::new(DomainKind::Sphere { radius: 1.0 }, 1.0).is_err());
        assert!(Domain::new(DomainKind::Channel { lx: 1.0, lz: 1.0, height: 1.0 }, 0.0).is_err());
    }

    #[test]
    fn periodic_displacement_wraps() {
        let d = Domain::unit_channel();
        let v = d.displacement(&Vec3::new(0.95, 0.0, 0.02), &Vec3::new(0.05, 0.0, 0.98));
        assert!((v - Vec3::new(0.1, 0.0, -0.04)).norm() < 1e-12);
    }
}
