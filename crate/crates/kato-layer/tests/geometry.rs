use std::f64::consts::PI;

use kato_layer::geometry::*;
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn sphere() -> Domain {
    Domain::new(DomainKind::Sphere { radius: 1.0 }, 0.5).unwrap()
}

// Spherical triangle of side ≈ r around a unit vector.
fn cap_triangle(axis: Vec3, r: f64, twist: f64) -> [Vec3; 3] {
    let a = axis.normalize();
    let helper = if a.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let e1 = a.cross(&helper).normalize();
    let e2 = a.cross(&e1);
    let theta = r / 3f64.sqrt();
    [0.0, 2.0, 4.0].map(|k: f64| {
        let phi = twist + k * PI / 3.0;
        a * theta.cos() + (e1 * phi.cos() + e2 * phi.sin()) * theta.sin()
    })
}

#[test]
fn channel_mesh_is_flat_with_exact_area() {
    let mesh = triangulate_boundary(&Domain::unit_channel(), 0.25).unwrap();
    assert!((mesh.total_area - 2.0).abs() <= 8.0 * f64::EPSILON);
    assert!(mesh.summary().max_hessian < 1e-8);
    assert_eq!(mesh.lineage(), "channel-1x1x1:64:2.500000000000e-1");
    let (lo, hi) = mesh.sizes();
    assert!(lo >= 0.8 * 0.25 && hi <= 1.25 * 0.25);
}

#[test]
fn sphere_mesh_area_and_infeasible_size() {
    let mesh = triangulate_boundary(&sphere(), 0.1).unwrap();
    assert!(rel(mesh.total_area, 4.0 * PI) < 1e-4);
    assert!(triangulate_boundary(&sphere(), 2.0).is_err());
    let far = Domain::new(DomainKind::Sphere { radius: 4.0 }, 3.5).unwrap();
    match triangulate_boundary(&far, 3.0) {
        Err(GeometryError::InfeasibleSize(m)) => assert!(m.contains("triangle")),
        other => panic!("expected an infeasible size, got {other:?}"),
    }
}

#[test]
fn torus_mesh_closes_area() {
    let torus = Domain::new(DomainKind::Torus { major: 1.0, minor: 0.5 }, 0.25).unwrap();
    let mesh = triangulate_boundary(&torus, 0.04).unwrap();
    assert!(rel(mesh.total_area, 2.0 * PI * PI) < 1e-4, "area {}", mesh.total_area);
}

#[test]
fn meshes_cover_the_boundary_once() {
    for (d, r) in [(Domain::unit_channel(), 0.25), (sphere(), 0.1)] {
        let mesh = triangulate_boundary(&d, r).unwrap();
        assert_eq!(mesh.membership_census(400, 5), (0, 0), "{}", d.id());
    }
}

#[test]
fn prism_split_volumes() {
    let pts = [Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.5, 0.0, 0.75f64.sqrt())];
    let base = CurvedTriangle::new(Chart::flat(pts, -Vec3::y()));
    let cyl = CurvedCylinder::extension(base);
    let v = cyl.volume();
    assert!(rel(v, cyl.base.area * cyl.base.size()) < 1e-12);
    let (kids, top) = dyadic_split_cylinder(&cyl).unwrap();
    for k in &kids {
        assert!(rel(k.volume(), v / 8.0) < 1e-12);
    }
    assert!(rel(top.volume(), v / 2.0) < 1e-12);
    let shallow = CurvedCylinder { depth_range: (0.0, 1.0), ..cyl.clone() };
    assert!(matches!(dyadic_split_cylinder(&shallow), Err(GeometryError::Contract(_))));
}

#[test]
fn curved_cylinder_volume_closure() {
    let tri = CurvedTriangle::new(Chart::gnomonic(Vec3::zeros(), 1.0, cap_triangle(Vec3::new(0.2, 0.3, 1.0), 0.1, 0.4)));
    let cyl = CurvedCylinder::extension(tri);
    assert!(cyl.jacobian_positive_sampled());
    let (kids, top) = dyadic_split_cylinder(&cyl).unwrap();
    assert!(dyadic_split_cylinder(&kids[0]).is_ok());
    let sum: f64 = kids.iter().map(|k| k.volume()).sum::<f64>() + top.volume();
    assert!(rel(sum, cyl.volume()) < 1e-6);
    let by_rule = surface_quadrature(Region::Cylinder(&cyl), |_| 1.0, 8).unwrap();
    assert!(rel(by_rule, cyl.volume()) < 1e-6);
}

#[test]
fn affine_integrand_matches_centroid() {
    let pts = [Vec3::new(0.1, 0.0, 0.2), Vec3::new(0.9, 0.0, 0.1), Vec3::new(0.4, 0.0, 0.8)];
    let tri = CurvedTriangle::new(Chart::flat(pts, -Vec3::y()));
    let c = (pts[0] + pts[1] + pts[2]) / 3.0;
    let area = 0.5 * (pts[1] - pts[0]).cross(&(pts[2] - pts[0])).norm();
    let q = surface_quadrature(Region::Triangle(&tri), |x| 3.0 * x.x - 2.0 * x.z + 1.0, 4).unwrap();
    assert!((q - area * (3.0 * c.x - 2.0 * c.z + 1.0)).abs() < 1e-14);
    assert!(rel(surface_quadrature(Region::Triangle(&tri), |_| 1.0, 3).unwrap(), area) < 1e-14);
    let bad = surface_quadrature(Region::Triangle(&tri), |x| if x.x > 0.5 { f64::NAN } else { 0.0 }, 4);
    assert!(matches!(bad, Err(GeometryError::Integration(_))));
}

#[test]
fn sphere_chart_at_tenth_radius_passes() {
    let c = Chart::gnomonic(Vec3::zeros(), 1.0, cap_triangle(Vec3::z(), 0.1, 0.0));
    let rep = validate_chart(&c, 1e-3).unwrap();
    assert!(rep.pass && rep.hessian_sup < 1.0 / 9.0 && rep.hessian_sup > 0.0);
}

#[test]
fn tubular_point_contracts() {
    let d = sphere();
    assert!(matches!(d.tubular_point(&Vec3::z(), 0.5), Err(GeometryError::Contract(_))));
    assert!(matches!(d.tubular_point(&Vec3::z(), -0.1), Err(GeometryError::Contract(_))));
    assert_eq!(d.tubular_point(&Vec3::z(), 0.0).unwrap(), Vec3::z());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flat_split_closes_exactly(ax in -1.0..1.0f64, az in -1.0..1.0f64, bx in -1.0..1.0f64, bz in -1.0..1.0f64) {
        let pts = [Vec3::zeros(), Vec3::new(ax, 0.0, az), Vec3::new(bx, 0.0, bz)];
        let area = 0.5 * (pts[1] - pts[0]).cross(&(pts[2] - pts[0])).norm();
        prop_assume!(area > 1e-2);
        let tri = CurvedTriangle::new(Chart::flat(pts, -Vec3::y()));
        prop_assert!(rel(tri.area, area) < 1e-12);
        let kids = dyadic_split_triangle(&tri);
        let s: f64 = kids.iter().map(|k| k.area).sum();
        prop_assert!(rel(s, tri.area) < 1e-12);
        for k in &kids {
            prop_assert!(rel(k.area, tri.area / 4.0) < 1e-12);
        }
    }

    #[test]
    fn curved_split_closes(x in -1.0..1.0f64, y in -1.0..1.0f64, z in -1.0..1.0f64, r in 0.02..0.1f64, twist in 0.0..6.0f64) {
        let axis = Vec3::new(x, y, z);
        prop_assume!(axis.norm() > 0.1);
        let tri = CurvedTriangle::new(Chart::gnomonic(Vec3::zeros(), 1.0, cap_triangle(axis, r, twist)));
        let s: f64 = dyadic_split_triangle(&tri).iter().map(|k| k.area).sum();
        prop_assert!(rel(s, tri.area) < 1e-6);
    }

    #[test]
    fn sphere_tubular_depth_is_distance(u in 0.0..1.0f64, v in 0.0..1.0f64, z in 0.0..0.49f64) {
        let d = sphere();
        let x = d.boundary_point(u, v);
        let p = d.tubular_point(&x, z).unwrap();
        prop_assert!((d.distance_to_boundary(&p) - z).abs() < 1e-12);
        prop_assert!((d.tubular_jacobian(&x, z) - (1.0 - z).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn channel_displacement_is_minimal_image(ax in 0.0..1.0f64, az in 0.0..1.0f64, bx in 0.0..1.0f64, bz in 0.0..1.0f64) {
        let d = Domain::unit_channel();
        let v = d.displacement(&Vec3::new(ax, 0.0, az), &Vec3::new(bx, 0.0, bz));
        prop_assert!(v.x.abs() <= 0.5 + 1e-12 && v.z.abs() <= 0.5 + 1e-12);
    }
}
