//! Charts ψ: Δ₂ → ℝ³ and their validation against the shape window.
//!
//! A chart of size r maps reference coordinates ξ to space with χ(0) the
//! barycenter point and ∇χ(0) = r·(orthonormal frame). The curved triangle it
//! carries is χ(½Δ₂).

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::GeometryError;

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;

pub const SIDE_MIN: f64 = 5.0 / 3.0;
pub const SIDE_MAX: f64 = 7.0 / 3.0;
pub const HESSIAN_MAX: f64 = 1.0 / 9.0;

/// Step of the second differences, in reference units.
const FD_STEP: f64 = 1e-2;

pub(crate) fn v3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

pub(crate) fn a3(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

/// The analytic family a chart belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChartKind {
    /// Affine chart on a plane; e1 × e2 is the outer normal.
    Flat { origin: [f64; 3], e1: [f64; 3], e2: [f64; 3] },
    /// Gnomonic (central) projection onto a sphere, tangent frame at `dir`.
    Gnomonic {
        center: [f64; 3],
        radius: f64,
        dir: [f64; 3],
        e1: [f64; 3],
        e2: [f64; 3],
    },
    /// Angular parametrization of a torus about the z axis.
    Torus { major: f64, minor: f64, theta0: f64, phi0: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chart {
    #[serde(flatten)]
    pub kind: ChartKind,
    pub size_r: f64,
    /// Vertices of Dom ψ = Δ₂ in reference coordinates.
    pub reference: [[f64; 2]; 3],
}

/// Outcome of [`validate_chart`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartReport {
    pub pass: bool,
    pub side_lengths: [f64; 3],
    pub hessian_sup: f64,
    pub barycenter_offset: f64,
    pub differential_error: f64,
}

impl Chart {
    pub fn reference_vertices(&self) -> [Vec2; 3] {
        self.reference.map(|p| Vec2::new(p[0], p[1]))
    }

    /// χ(ξ) in space.
    pub fn map(&self, xi: &Vec2) -> Vec3 {
        let r = self.size_r;
        match &self.kind {
            ChartKind::Flat { origin, e1, e2 } => v3(*origin) + r * (xi.x * v3(*e1) + xi.y * v3(*e2)),
            ChartKind::Gnomonic { center, radius, dir, e1, e2 } => {
                let s = r / radius;
                let p = v3(*dir) + s * (xi.x * v3(*e1) + xi.y * v3(*e2));
                v3(*center) + *radius * p / p.norm()
            }
            ChartKind::Torus { major, minor, theta0, phi0 } => {
                let (th, ph) = self.torus_angles(xi, *major, *minor, *theta0, *phi0);
                torus_point(*major, *minor, th, ph)
            }
        }
    }

    /// (∂₁χ, ∂₂χ) at ξ.
    pub fn tangents(&self, xi: &Vec2) -> (Vec3, Vec3) {
        let r = self.size_r;
        match &self.kind {
            ChartKind::Flat { e1, e2, .. } => (r * v3(*e1), r * v3(*e2)),
            ChartKind::Gnomonic { radius, dir, e1, e2, .. } => {
                let s = r / radius;
                let (e1, e2) = (v3(*e1), v3(*e2));
                let p = v3(*dir) + s * (xi.x * e1 + xi.y * e2);
                let n = p.norm();
                let u = p / n;
                let d = |e: Vec3| *radius * s * (e - u * u.dot(&e)) / n;
                (d(e1), d(e2))
            }
            ChartKind::Torus { major, minor, theta0, phi0 } => {
                let (th, ph) = self.torus_angles(xi, *major, *minor, *theta0, *phi0);
                let rho = major + minor * ph.cos();
                let x_th = rho * Vec3::new(-th.sin(), th.cos(), 0.0);
                let x_ph = *minor * Vec3::new(-ph.sin() * th.cos(), -ph.sin() * th.sin(), ph.cos());
                let g = major + minor * phi0.cos();
                (x_th * r / g, x_ph * r / *minor)
            }
        }
    }

    /// Unit normal n(ξ) = ∂₁χ × ∂₂χ / |·|; outward for every chart built here.
    pub fn normal(&self, xi: &Vec2) -> Vec3 {
        let (a, b) = self.tangents(xi);
        a.cross(&b).normalize()
    }

    /// Surface element |∂₁χ × ∂₂χ|.
    pub fn area_element(&self, xi: &Vec2) -> f64 {
        let (a, b) = self.tangents(xi);
        a.cross(&b).norm()
    }

    /// Extended map ψ̃(ξ, z) = χ(ξ) − r z n(ξ).
    pub fn extended_map(&self, xi: &Vec2, z: f64) -> Vec3 {
        self.map(xi) - self.size_r * z * self.normal(xi)
    }

    fn torus_angles(&self, xi: &Vec2, major: f64, minor: f64, theta0: f64, phi0: f64) -> (f64, f64) {
        let g = major + minor * phi0.cos();
        (theta0 + self.size_r * xi.x / g, phi0 + self.size_r * xi.y / minor)
    }

    /// Torus angles of a reference point (only meaningful for torus charts).
    pub fn angles(&self, xi: &Vec2) -> Option<(f64, f64)> {
        match &self.kind {
            ChartKind::Torus { major, minor, theta0, phi0 } => {
                Some(self.torus_angles(xi, *major, *minor, *theta0, *phi0))
            }
            _ => None,
        }
    }

    /// Affine chart through three coplanar points with the given outer normal.
    pub fn flat(points: [Vec3; 3], outward: Vec3) -> Chart {
        let n = outward.normalize();
        let c = (points[0] + points[1] + points[2]) / 3.0;
        let d = points[1] - points[0];
        let e1 = (d - n * n.dot(&d)).normalize();
        let e2 = n.cross(&e1);
        let q = points.map(|p| Vec2::new((p - c).dot(&e1), (p - c).dot(&e2)));
        let r = chart_size(&q);
        Chart {
            kind: ChartKind::Flat { origin: a3(&c), e1: a3(&e1), e2: a3(&e2) },
            size_r: r,
            reference: q.map(|p| [2.0 * p.x / r, 2.0 * p.y / r]),
        }
    }

    /// Gnomonic chart for a geodesic triangle with the given vertices on a sphere.
    /// The tangent point is iterated until the gnomonic barycenter is the origin.
    pub fn gnomonic(center: Vec3, radius: f64, points: [Vec3; 3]) -> Chart {
        let p = points.map(|x| (x - center).normalize());
        let mut dir = (p[0] + p[1] + p[2]).normalize();
        let mut frame;
        let mut g;
        let mut iter = 0;
        loop {
            let d = p[1] - p[0];
            let e1 = (d - dir * dir.dot(&d)).normalize();
            let e2 = dir.cross(&e1);
            frame = (e1, e2);
            g = p.map(|x| {
                let y = x / x.dot(&dir);
                Vec2::new(y.dot(&e1), y.dot(&e2))
            });
            let bar = (g[0] + g[1] + g[2]) / 3.0;
            iter += 1;
            if bar.norm() < 1e-15 || iter > 60 {
                break;
            }
            dir = (dir + bar.x * e1 + bar.y * e2).normalize();
        }
        let q = g.map(|x| x * radius);
        let r = chart_size(&q);
        Chart {
            kind: ChartKind::Gnomonic {
                center: a3(&center),
                radius,
                dir: a3(&dir),
                e1: a3(&frame.0),
                e2: a3(&frame.1),
            },
            size_r: r,
            reference: q.map(|x| [2.0 * x.x / r, 2.0 * x.y / r]),
        }
    }

    /// Torus chart for the triangle with the given (θ, φ) vertices.
    pub fn torus(major: f64, minor: f64, angles: [(f64, f64); 3]) -> Chart {
        let theta0 = (angles[0].0 + angles[1].0 + angles[2].0) / 3.0;
        let phi0 = (angles[0].1 + angles[1].1 + angles[2].1) / 3.0;
        let g = major + minor * phi0.cos();
        let q = angles.map(|(t, p)| Vec2::new((t - theta0) * g, (p - phi0) * minor));
        let r = chart_size(&q);
        Chart {
            kind: ChartKind::Torus { major, minor, theta0, phi0 },
            size_r: r,
            reference: q.map(|x| [2.0 * x.x / r, 2.0 * x.y / r]),
        }
    }

    /// A chart of the same family carrying the triangle χ(verts).
    pub fn sub_chart(&self, verts: [Vec2; 3]) -> Chart {
        match &self.kind {
            ChartKind::Flat { .. } => Chart::flat(verts.map(|v| self.map(&v)), self.normal(&Vec2::zeros())),
            ChartKind::Gnomonic { center, radius, .. } => {
                Chart::gnomonic(v3(*center), *radius, verts.map(|v| self.map(&v)))
            }
            ChartKind::Torus { major, minor, .. } => {
                Chart::torus(*major, *minor, verts.map(|v| self.angles(&v).expect("torus chart")))
            }
        }
    }

    /// The same chart after scaling space by `s` about the origin.
    pub fn rescaled(&self, s: f64) -> Chart {
        let kind = match &self.kind {
            ChartKind::Flat { origin, e1, e2 } => ChartKind::Flat {
                origin: a3(&(s * v3(*origin))),
                e1: *e1,
                e2: *e2,
            },
            ChartKind::Gnomonic { center, radius, dir, e1, e2 } => ChartKind::Gnomonic {
                center: a3(&(s * v3(*center))),
                radius: s * radius,
                dir: *dir,
                e1: *e1,
                e2: *e2,
            },
            ChartKind::Torus { major, minor, theta0, phi0 } => ChartKind::Torus {
                major: s * major,
                minor: s * minor,
                theta0: *theta0,
                phi0: *phi0,
            },
        };
        Chart { kind, size_r: s * self.size_r, reference: self.reference }
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            ChartKind::Flat { .. } => "flat",
            ChartKind::Gnomonic { .. } => "gnomonic",
            ChartKind::Torus { .. } => "torus",
        }
    }
}

pub(crate) fn torus_point(major: f64, minor: f64, theta: f64, phi: f64) -> Vec3 {
    let rho = major + minor * phi.cos();
    Vec3::new(rho * theta.cos(), rho * theta.sin(), minor * phi.sin())
}

/// Scale r centring the reference sides 2s/r in the window [5/3, 7/3]
/// (geometric mean of the admissible interval [6 s_max/7, 6 s_min/5]).
fn chart_size(q: &[Vec2; 3]) -> f64 {
    let s = side_lengths(q);
    let smin = s.iter().cloned().fold(f64::INFINITY, f64::min);
    let smax = s.iter().cloned().fold(0.0, f64::max);
    6.0 * (smin * smax / 35.0).sqrt()
}

fn side_lengths(q: &[Vec2; 3]) -> [f64; 3] {
    [(q[1] - q[0]).norm(), (q[2] - q[1]).norm(), (q[0] - q[2]).norm()]
}

/// Checks the side window, the normalization at the barycenter and the sampled
/// operator norm of the normalized Hessian ∇²(χ/r) over Δ₂.
pub fn validate_chart(chart: &Chart, tolerance: f64) -> Result<ChartReport, GeometryError> {
    let refv = chart.reference_vertices();
    let sides = side_lengths(&refv);
    let bary = (refv[0] + refv[1] + refv[2]) / 3.0;
    let r = chart.size_r;
    if !(r.is_finite() && r > 0.0) {
        return Err(GeometryError::InvalidChart(format!("size {r}")));
    }

    let (t1, t2) = chart.tangents(&Vec2::zeros());
    let (a, b) = (t1 / r, t2 / r);
    let differential_error = (a.dot(&a) - 1.0)
        .abs()
        .max((b.dot(&b) - 1.0).abs())
        .max(a.dot(&b).abs());

    let h = FD_STEP;
    let level = 6;
    let mut sup: f64 = 0.0;
    for i in 0..=level {
        for j in 0..=(level - i) {
            let k = level - i - j;
            let xi = (refv[0] * i as f64 + refv[1] * j as f64 + refv[2] * k as f64) / level as f64;
            let f = |dx: f64, dy: f64| chart.map(&(xi + Vec2::new(dx, dy))) / r;
            let c = f(0.0, 0.0);
            let h11 = (f(h, 0.0) - 2.0 * c + f(-h, 0.0)) / (h * h);
            let h22 = (f(0.0, h) - 2.0 * c + f(0.0, -h)) / (h * h);
            let h12 = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4.0 * h * h);
            if !(h11.iter().chain(h22.iter()).chain(h12.iter()).all(|v| v.is_finite())) {
                return Err(GeometryError::InvalidChart(format!("non-finite map near {xi:?}")));
            }
            sup = sup.max(bilinear_norm(&h11, &h12, &h22));
        }
    }

    let eps = 1e-12;
    let window = sides.iter().all(|&s| s >= SIDE_MIN - eps && s <= SIDE_MAX + eps);
    let pass = window
        && sup <= HESSIAN_MAX * (1.0 + tolerance)
        && bary.norm() < 1e-9
        && differential_error < 1e-9;
    Ok(ChartReport {
        pass,
        side_lengths: sides,
        hessian_sup: sup,
        barycenter_offset: bary.norm(),
        differential_error,
    })
}

// sup over unit a, b of |Σ aᵢ bⱼ Hᵢⱼ| on an angular grid.
fn bilinear_norm(h11: &Vec3, h12: &Vec3, h22: &Vec3) -> f64 {
    let n = 48;
    let dirs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let t = std::f64::consts::PI * i as f64 / n as f64;
            (t.cos(), t.sin())
        })
        .collect();
    let mut best: f64 = 0.0;
    for &(a1, a2) in &dirs {
        let ha1 = a1 * h11 + a2 * h12;
        let ha2 = a1 * h12 + a2 * h22;
        for &(b1, b2) in &dirs {
            best = best.max((b1 * ha1 + b2 * ha2).norm());
        }
    }
    best
}
