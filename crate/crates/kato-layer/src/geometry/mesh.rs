//! Curved triangles, cylinders, their dyadic splits, and boundary triangulations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::chart::{validate_chart, Chart, ChartKind, Vec2, Vec3};
use super::domain::{Domain, DomainKind};
use super::quadrature::{Rule1D, TriangleRule};
use super::GeometryError;

pub const DEFAULT_ORDER: usize = 4;
/// Tolerance on the normalized Hessian bound used when meshing.
pub const MESH_HESSIAN_TOL: f64 = 1e-3;

/// χ(½Δ₂) for a chart χ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvedTriangle {
    pub chart: Chart,
    pub area: f64,
}

impl CurvedTriangle {
    pub fn new(chart: Chart) -> Self {
        let mut t = CurvedTriangle { chart, area: 0.0 };
        t.area = t.integrate(|_| 1.0, DEFAULT_ORDER);
        t
    }

    /// Δ₁ = ½ Dom ψ in reference coordinates.
    pub fn domain(&self) -> [Vec2; 3] {
        self.chart.reference_vertices().map(|v| v * 0.5)
    }

    pub fn vertices(&self) -> [Vec3; 3] {
        self.domain().map(|v| self.chart.map(&v))
    }

    pub fn barycenter(&self) -> Vec3 {
        self.chart.map(&Vec2::zeros())
    }

    pub fn size(&self) -> f64 {
        self.chart.size_r
    }

    /// ∫ f dA by the collapsed Gauss rule transported through the chart.
    pub fn integrate(&self, mut f: impl FnMut(&Vec3) -> f64, order: usize) -> f64 {
        let rule = TriangleRule::new(order);
        let d = self.domain();
        let ref_area = 0.5 * ((d[1] - d[0]).perp(&(d[2] - d[0]))).abs();
        let mut s = 0.0;
        for (b, w) in rule.bary.iter().zip(&rule.fractions) {
            let xi = d[0] * b[0] + d[1] * b[1] + d[2] * b[2];
            let x = self.chart.map(&xi);
            s += w * ref_area * self.chart.area_element(&xi) * f(&x);
        }
        s
    }

    /// Reference-coordinate point of a space point, for charts with an inverse.
    pub fn locate(&self, x: &Vec3) -> Option<Vec2> {
        chart_inverse(&self.chart, x)
    }

    /// Whether a boundary point lies in this curved triangle (strict barycentric test).
    pub fn contains(&self, x: &Vec3) -> bool {
        match self.locate(x) {
            Some(xi) => {
                let d = self.domain();
                barycentric(&d, &xi).iter().all(|&l| l > 0.0)
            }
            None => false,
        }
    }
}

pub(crate) fn barycentric(d: &[Vec2; 3], p: &Vec2) -> [f64; 3] {
    let det = (d[1] - d[0]).perp(&(d[2] - d[0]));
    let l1 = (p - d[0]).perp(&(d[2] - d[0])) / det;
    let l2 = (d[1] - d[0]).perp(&(p - d[0])) / det;
    [1.0 - l1 - l2, l1, l2]
}

/// Midpoint children of a reference triangle, corner children first.
pub fn midpoint_children(v: &[Vec2; 3]) -> [[Vec2; 3]; 4] {
    let m01 = (v[0] + v[1]) * 0.5;
    let m12 = (v[1] + v[2]) * 0.5;
    let m20 = (v[2] + v[0]) * 0.5;
    [[v[0], m01, m20], [m01, v[1], m12], [m20, m12, v[2]], [m12, m20, m01]]
}

fn chart_inverse(chart: &Chart, x: &Vec3) -> Option<Vec2> {
    let r = chart.size_r;
    match &chart.kind {
        ChartKind::Flat { origin, e1, e2 } => {
            let o = super::chart::v3(*origin);
            let d = x - o;
            let n = super::chart::v3(*e1).cross(&super::chart::v3(*e2));
            if d.dot(&n).abs() > 1e-9 * (1.0 + r) {
                return None;
            }
            Some(Vec2::new(d.dot(&super::chart::v3(*e1)) / r, d.dot(&super::chart::v3(*e2)) / r))
        }
        ChartKind::Gnomonic { center, radius, dir, e1, e2 } => {
            let p = (x - super::chart::v3(*center)).normalize();
            let dir = super::chart::v3(*dir);
            let c = p.dot(&dir);
            if c <= 0.0 {
                return None;
            }
            let y = p / c;
            let s = r / radius;
            Some(Vec2::new(y.dot(&super::chart::v3(*e1)) / s, y.dot(&super::chart::v3(*e2)) / s))
        }
        ChartKind::Torus { major, minor, theta0, phi0 } => {
            let th = x.y.atan2(x.x);
            let rho = (x.x * x.x + x.y * x.y).sqrt();
            let ph = x.z.atan2(rho - major);
            let wrap = |a: f64, a0: f64| a0 + (a - a0 + PI).rem_euclid(2.0 * PI) - PI;
            let g = major + minor * phi0.cos();
            Some(Vec2::new(
                (wrap(th, *theta0) - theta0) * g / r,
                (wrap(ph, *phi0) - phi0) * minor / r,
            ))
        }
    }
}

/// The four midpoint children, each carried by a fresh chart of half the size.
pub fn dyadic_split_triangle(tri: &CurvedTriangle) -> [CurvedTriangle; 4] {
    midpoint_children(&tri.domain()).map(|v| CurvedTriangle::new(tri.chart.sub_chart(v)))
}

/// ψ̃ restricted to base × depth range; depth in reference units of r/2, so the
/// canonical extension of a base of size r spans (0, 2), i.e. physical depth (0, r).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvedCylinder {
    pub base: CurvedTriangle,
    pub depth_range: (f64, f64),
}

impl CurvedCylinder {
    pub fn extension(base: CurvedTriangle) -> Self {
        CurvedCylinder { base, depth_range: (0.0, 2.0) }
    }

    /// Point at reference coordinate ξ (base chart) and reference depth z.
    pub fn extended_map(&self, xi: &Vec2, z: f64) -> Vec3 {
        self.base.chart.extended_map(xi, 0.5 * z)
    }

    fn physical_depths(&self) -> (f64, f64) {
        let h = 0.5 * self.base.chart.size_r;
        (h * self.depth_range.0, h * self.depth_range.1)
    }

    // Volume density of (ξ, s) ↦ χ(ξ) − s n(ξ) relative to dξ ds.
    fn volume_density(&self, xi: &Vec2, s: f64) -> f64 {
        let c = &self.base.chart;
        let (a, b) = c.tangents(xi);
        let h = 1e-6;
        let dn1 = (c.normal(&(xi + Vec2::new(h, 0.0))) - c.normal(&(xi - Vec2::new(h, 0.0)))) / (2.0 * h);
        let dn2 = (c.normal(&(xi + Vec2::new(0.0, h))) - c.normal(&(xi - Vec2::new(0.0, h)))) / (2.0 * h);
        let t1 = a - s * dn1;
        let t2 = b - s * dn2;
        t1.cross(&t2).dot(&c.normal(xi))
    }

    pub fn integrate(&self, mut f: impl FnMut(&Vec3) -> f64, order: usize) -> f64 {
        let rule = TriangleRule::new(order);
        let (s0, s1) = self.physical_depths();
        let zr = Rule1D::gauss(s0, s1, order);
        let d = self.base.domain();
        let ref_area = 0.5 * ((d[1] - d[0]).perp(&(d[2] - d[0]))).abs();
        let c = &self.base.chart;
        let mut total = 0.0;
        for (b, w) in rule.bary.iter().zip(&rule.fractions) {
            let xi = d[0] * b[0] + d[1] * b[1] + d[2] * b[2];
            let x0 = c.map(&xi);
            let n = c.normal(&xi);
            for (s, ws) in zr.nodes.iter().zip(&zr.weights) {
                let x = x0 - *s * n;
                total += w * ref_area * ws * self.volume_density(&xi, *s).abs() * f(&x);
            }
        }
        total
    }

    pub fn volume(&self) -> f64 {
        self.integrate(|_| 1.0, DEFAULT_ORDER)
    }

    /// Sampled positivity of the Jacobian of ψ̃ on Δ₂ × (0, 2) (chart units).
    pub fn jacobian_positive_sampled(&self) -> bool {
        let refv = self.base.chart.reference_vertices();
        let r = self.base.chart.size_r;
        let n = 6;
        for i in 0..=n {
            for j in 0..=(n - i) {
                let k = n - i - j;
                let xi = (refv[0] * i as f64 + refv[1] * j as f64 + refv[2] * k as f64) / n as f64;
                for m in 0..=8 {
                    let s = 2.0 * r * m as f64 / 8.0;
                    if self.volume_density(&xi, s) <= 0.0 {
                        return false;
                    }
                }
            }
        }
        true
    }
}

/// Four children over the base split with depth (0, 1) of the parent, and the
/// discarded top base × (1, 2). Curved children are not exactly half the parent's
/// size, so their depth ranges are rescaled to keep physical depths nested.
pub fn dyadic_split_cylinder(
    cyl: &CurvedCylinder,
) -> Result<([CurvedCylinder; 4], CurvedCylinder), GeometryError> {
    let (a, b) = cyl.depth_range;
    if a.abs() > 1e-12 || (b - 2.0).abs() > 0.05 {
        return Err(GeometryError::Contract(format!("cylinder depth range must be (0, 2), got ({a}, {b})")));
    }
    let rp = cyl.base.size();
    let kids = dyadic_split_triangle(&cyl.base).map(|base| {
        let top = b * rp / (2.0 * base.size());
        CurvedCylinder { base, depth_range: (0.0, top) }
    });
    let top = CurvedCylinder { base: cyl.base.clone(), depth_range: (0.5 * b, b) };
    Ok((kids, top))
}

/// A region for [`surface_quadrature`].
pub enum Region<'a> {
    Triangle(&'a CurvedTriangle),
    Cylinder(&'a CurvedCylinder),
}

/// Gauss product quadrature of a scalar over a curved triangle or cylinder.
pub fn surface_quadrature(
    region: Region<'_>,
    integrand: impl Fn(&Vec3) -> f64,
    order: usize,
) -> Result<f64, GeometryError> {
    let mut bad = None;
    let f = |x: &Vec3| {
        let v = integrand(x);
        if !v.is_finite() && bad.is_none() {
            bad = Some(*x);
        }
        v
    };
    let value = match region {
        Region::Triangle(t) => t.integrate(f, order),
        Region::Cylinder(c) => c.integrate(f, order),
    };
    match bad {
        Some(x) => Err(GeometryError::Integration(format!("non-finite integrand at {x:?}"))),
        None => Ok(value),
    }
}

/// A curved triangular decomposition of ∂Ω.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triangulation {
    pub triangles: Vec<CurvedTriangle>,
    pub size_r: f64,
    pub total_area: f64,
    pub domain_id: String,
    pub domain: Domain,
}

/// Mesh statistics emitted next to the triangles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshSummary {
    pub count: usize,
    pub total_area: f64,
    pub boundary_area: f64,
    pub min_size: f64,
    pub max_size: f64,
    pub max_hessian: f64,
}

impl Triangulation {
    pub fn sizes(&self) -> (f64, f64) {
        self.triangles.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), t| {
            (lo.min(t.size()), hi.max(t.size()))
        })
    }

    /// Identifier shared by every structure derived from this mesh.
    pub fn lineage(&self) -> String {
        format!("{}:{}:{:.12e}", self.domain_id, self.triangles.len(), self.size_r)
    }

    pub fn summary(&self) -> MeshSummary {
        let (lo, hi) = self.sizes();
        let max_hessian = self
            .triangles
            .iter()
            .filter_map(|t| validate_chart(&t.chart, MESH_HESSIAN_TOL).ok())
            .map(|r| r.hessian_sup)
            .fold(0.0, f64::max);
        MeshSummary {
            count: self.triangles.len(),
            total_area: self.total_area,
            boundary_area: self.domain.boundary_area,
            min_size: lo,
            max_size: hi,
            max_hessian,
        }
    }

    /// Indices of triangles containing the point, up to periodic images.
    pub fn containing(&self, x: &Vec3) -> Vec<usize> {
        let images = self.images(x);
        let mut out = Vec::new();
        for (i, t) in self.triangles.iter().enumerate() {
            let c = t.barycenter();
            for y in &images {
                if (y - c).norm() <= 2.0 * t.size() && t.contains(y) {
                    out.push(i);
                    break;
                }
            }
        }
        out
    }

    fn images(&self, x: &Vec3) -> Vec<Vec3> {
        match self.domain.kind {
            DomainKind::Channel { lx, lz, .. } => {
                let mut v = Vec::with_capacity(9);
                for a in -1..=1 {
                    for b in -1..=1 {
                        v.push(x + Vec3::new(a as f64 * lx, 0.0, b as f64 * lz));
                    }
                }
                v
            }
            _ => vec![*x],
        }
    }

    /// Monte Carlo membership census: (points in no triangle, points in more than one).
    pub fn membership_census(&self, samples: usize, seed: u64) -> (usize, usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut uncovered, mut overlapped) = (0, 0);
        for _ in 0..samples {
            let x = self.random_boundary_point(&mut rng);
            match self.containing(&x).len() {
                0 => uncovered += 1,
                1 => {}
                _ => overlapped += 1,
            }
        }
        (uncovered, overlapped)
    }

    fn random_boundary_point(&self, rng: &mut ChaCha8Rng) -> Vec3 {
        match self.domain.kind {
            DomainKind::Torus { major, minor } => {
                // Area-uniform: accept φ with density ∝ (R + ρ cos φ).
                loop {
                    let th = rng.random::<f64>() * 2.0 * PI;
                    let ph = rng.random::<f64>() * 2.0 * PI;
                    let w = (major + minor * ph.cos()) / (major + minor);
                    if rng.random::<f64>() < w {
                        return super::chart::torus_point(major, minor, th, ph);
                    }
                }
            }
            _ => self.domain.boundary_point(rng.random(), rng.random()),
        }
    }

    /// One JSON record per triangle.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "domain": self.domain,
            "domain_id": self.domain_id,
            "size_r": self.size_r,
            "summary": self.summary(),
            "triangles": self.triangles.iter().map(|t| serde_json::json!({
                "chart": t.chart,
                "area": t.area,
            })).collect::<Vec<_>>(),
        })
    }
}

/// Curved triangular decomposition of ∂Ω with charts of size close to `r`.
pub fn triangulate_boundary(domain: &Domain, r: f64) -> Result<Triangulation, GeometryError> {
    if !(r > 0.0) || r > domain.bar_delta {
        return Err(GeometryError::Contract(format!(
            "mesh size {r} must lie in (0, bar_delta = {}]",
            domain.bar_delta
        )));
    }
    let triangles = match domain.kind {
        DomainKind::Channel { lx, lz, height } => channel_mesh(lx, lz, height, r),
        DomainKind::Sphere { radius } => sphere_mesh(radius, r)?,
        DomainKind::Torus { major, minor } => torus_mesh(major, minor, r),
    };
    for (i, t) in triangles.iter().enumerate() {
        let rep = validate_chart(&t.chart, MESH_HESSIAN_TOL)?;
        if !rep.pass {
            return Err(GeometryError::InfeasibleSize(format!(
                "triangle {i} fails chart validation at r = {r} (sides {:?}, hessian {:.4})",
                rep.side_lengths, rep.hessian_sup
            )));
        }
        let s = t.size();
        if s < 0.8 * r || s > 1.25 * r {
            return Err(GeometryError::InfeasibleSize(format!(
                "triangle {i} has size {s:.5}, outside [0.8 r, 1.25 r] for r = {r}"
            )));
        }
    }
    let total_area = triangles.iter().map(|t| t.area).sum();
    Ok(Triangulation { triangles, size_r: r, total_area, domain_id: domain.id(), domain: domain.clone() })
}

// Rows of isosceles triangles (base hx, apex offset hx/2) on each periodic wall;
// the apex offset keeps every side ratio below 7/5, which right triangles cannot.
fn channel_mesh(lx: f64, lz: f64, height: f64, r: f64) -> Vec<CurvedTriangle> {
    let nx = ((lx / r).round() as usize).max(1);
    let nz = 2 * (((lz / r) / 2.0).round() as usize).max(1);
    let hx = lx / nx as f64;
    let hz = lz / nz as f64;
    let mut out = Vec::with_capacity(4 * nx * nz);
    for (wall, outward) in [(0.0, -Vec3::y()), (height, Vec3::y())] {
        for j in 0..nz {
            let ob = if j % 2 == 0 { 0.0 } else { 0.5 * hx };
            let zb = j as f64 * hz;
            let zt = zb + hz;
            for i in 0..nx {
                let xb = ob + i as f64 * hx;
                let p = |x: f64, z: f64| Vec3::new(x, wall, z);
                let up = [p(xb, zb), p(xb + hx, zb), p(xb + 0.5 * hx, zt)];
                let down = [p(xb + 0.5 * hx, zt), p(xb + hx, zb), p(xb + 1.5 * hx, zt)];
                out.push(CurvedTriangle::new(Chart::flat(up, outward)));
                out.push(CurvedTriangle::new(Chart::flat(down, outward)));
            }
        }
    }
    out
}

fn icosahedron() -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let p = (1.0 + 5f64.sqrt()) / 2.0;
    let v = vec![
        Vec3::new(-1.0, p, 0.0),
        Vec3::new(1.0, p, 0.0),
        Vec3::new(-1.0, -p, 0.0),
        Vec3::new(1.0, -p, 0.0),
        Vec3::new(0.0, -1.0, p),
        Vec3::new(0.0, 1.0, p),
        Vec3::new(0.0, -1.0, -p),
        Vec3::new(0.0, 1.0, -p),
        Vec3::new(p, 0.0, -1.0),
        Vec3::new(p, 0.0, 1.0),
        Vec3::new(-p, 0.0, -1.0),
        Vec3::new(-p, 0.0, 1.0),
    ]
    .into_iter()
    .map(|x| x.normalize())
    .collect();
    let f = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    (v, f)
}

fn slerp(p: &Vec3, q: &Vec3, s: f64) -> Vec3 {
    let om = p.dot(q).clamp(-1.0, 1.0).acos();
    if om < 1e-15 {
        return *p;
    }
    (p * ((1.0 - s) * om).sin() + q * (s * om).sin()) / om.sin()
}

fn icosphere(radius: f64, m: usize) -> Vec<CurvedTriangle> {
    let (v, faces) = icosahedron();
    let mut out = Vec::with_capacity(20 * m * m);
    for f in faces {
        let (a, b, c) = (v[f[0]], v[f[1]], v[f[2]]);
        // Great-circle interpolation spreads sizes more evenly than projecting
        // a planar grid; shared edges stay conforming since both sides slerp.
        let pt = |i: usize, j: usize| {
            let s = (i + j) as f64 / m as f64;
            let e1 = slerp(&a, &b, s);
            let e2 = slerp(&a, &c, s);
            let q = if i + j == 0 { a } else { slerp(&e1, &e2, j as f64 / (i + j) as f64) };
            radius * q
        };
        for i in 0..m {
            for j in 0..(m - i) {
                let tri = [pt(i, j), pt(i + 1, j), pt(i, j + 1)];
                out.push(CurvedTriangle::new(Chart::gnomonic(Vec3::zeros(), radius, tri)));
                if i + j + 1 < m {
                    let tri = [pt(i + 1, j), pt(i + 1, j + 1), pt(i, j + 1)];
                    out.push(CurvedTriangle::new(Chart::gnomonic(Vec3::zeros(), radius, tri)));
                }
            }
        }
    }
    out
}

// Frequency whose chart sizes best straddle r, preferring frequencies whose
// charts all validate.
fn sphere_mesh(radius: f64, r: f64) -> Result<Vec<CurvedTriangle>, GeometryError> {
    let edge = radius * 4.0 / (10.0 + 2.0 * 5f64.sqrt()).sqrt();
    let guess = ((edge / r).round() as usize).max(1);
    let mut best: Option<(bool, f64, Vec<CurvedTriangle>)> = None;
    for m in guess.saturating_sub(1).max(1)..=guess + 2 {
        let tris = icosphere(radius, m);
        let (lo, hi) = tris.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), t| (lo.min(t.size()), hi.max(t.size())));
        let score = (lo / r).ln().abs().max((hi / r).ln().abs());
        let sized = lo >= 0.8 * r && hi <= 1.25 * r;
        let ok = sized
            && tris.iter().all(|t| validate_chart(&t.chart, MESH_HESSIAN_TOL).map(|v| v.pass).unwrap_or(false));
        let better = match &best {
            None => true,
            Some((bok, bscore, _)) => (ok && !bok) || (ok == *bok && score < *bscore),
        };
        if better {
            best = Some((ok, score, tris));
        }
    }
    Ok(best.map(|b| b.2).unwrap_or_default())
}

// Bands in φ, each tiled independently (apex-offset rows in θ) so that the
// θ spacing follows the local circumference.
fn torus_mesh(major: f64, minor: f64, r: f64) -> Vec<CurvedTriangle> {
    let nphi = ((2.0 * PI * minor / r).round() as usize).max(3);
    let hphi = 2.0 * PI / nphi as f64;
    let mut out = Vec::new();
    for j in 0..nphi {
        let p0 = j as f64 * hphi;
        let p1 = p0 + hphi;
        let g = major + minor * (0.5 * (p0 + p1)).cos();
        let nth = ((2.0 * PI * g / r).round() as usize).max(3);
        let hth = 2.0 * PI / nth as f64;
        for i in 0..nth {
            let t = i as f64 * hth;
            let up = [(t, p0), (t + hth, p0), (t + 0.5 * hth, p1)];
            let down = [(t + 0.5 * hth, p1), (t + hth, p0), (t + 1.5 * hth, p1)];
            out.push(CurvedTriangle::new(Chart::torus(major, minor, up)));
            out.push(CurvedTriangle::new(Chart::torus(major, minor, down)));
        }
    }
    out
}
