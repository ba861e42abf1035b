use std::f64::consts::PI;
use std::sync::Arc;

use kato_layer::fields::grid::*;
use kato_layer::fields::*;
use kato_layer::flows::erf_shear_field;
use kato_layer::geometry::*;
use proptest::prelude::*;

fn shear(name: &str, s: f64) -> FnField {
    FnField::new(name, 1.0, move |_, x| Vec3::new(s * x.y, 0.0, 0.0), move |_, _| {
        let mut g = Mat3::zeros();
        g[(0, 1)] = s;
        g
    })
}

#[test]
fn grid_round_trips_through_both_layouts() {
    let erf = erf_shear_field(1.0, 0.01, 1.0, 1.0).unwrap();
    let g = GridField::sample(erf.velocity.as_ref(), [3, 17, 2, 5], 1.0, 1.0, 1.0, 1.0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for name in ["f.bin", "f.csv"] {
        let p = dir.path().join(name);
        write_grid(&g, &p, GridLayout::from_path(&p)).unwrap();
        assert_eq!(ingest_grid(&p, GridLayout::from_path(&p)).unwrap(), g, "{name}");
    }
}

#[test]
fn ingestion_errors_carry_an_index() {
    let c = ConstantField { value: Vec3::new(1.0, -2.0, 0.5), t_max: 1.0 };
    let g = GridField::sample(&c, [2, 3, 2, 2], 1.0, 1.0, 1.0, 1.0).unwrap();
    let bytes = g.to_bytes();
    let short = GridField::from_bytes(&bytes[..bytes.len() - 8]);
    assert!(matches!(short, Err(FieldError::Ingestion { index: 71, .. })), "{short:?}");
    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert!(matches!(GridField::from_bytes(&magic), Err(FieldError::Ingestion { index: 0, .. })));
    let mut nan = bytes.clone();
    let at = bytes.len() - 8 * 5;
    nan[at..at + 8].copy_from_slice(&f64::NAN.to_le_bytes());
    assert!(matches!(GridField::from_bytes(&nan), Err(FieldError::Ingestion { index: 67, .. })));
    let mut csv = g.to_csv();
    csv.push_str("1,2\n");
    assert!(matches!(GridField::from_csv(&csv), Err(FieldError::Ingestion { index: 24, .. })));
    assert!(GridField::from_csv("").is_err());
}

#[test]
fn constant_file_is_constant_everywhere() {
    let v = Vec3::new(0.3, 0.0, -1.0);
    let g = GridField::sample(&ConstantField { value: v, t_max: 2.0 }, [4, 5, 3, 3], 2.0, 1.0, 1.0, 1.0).unwrap();
    for (t, x) in [(0.0, Vec3::new(0.1, 0.0, 0.9)), (1.3, Vec3::new(0.99, 0.5, 0.01)), (2.0, Vec3::new(0.5, 1.0, 0.5))] {
        assert!((g.value(t, &x) - v).norm() < 1e-14);
        assert!(g.gradient(t, &x).norm() < 1e-12);
    }
}

#[test]
fn sampled_erf_interpolates_within_tolerance() {
    let erf = erf_shear_field(1.0, 0.01, 1.0, 1.0).unwrap();
    let g = GridField::sample(erf.velocity.as_ref(), [2, 128, 2, 65], 1.0, 1.0, 1.0, 1.0).unwrap();
    let mut worst = 0.0f64;
    for i in 0..40 {
        let t = 0.25 + 0.75 * i as f64 / 39.0;
        for k in 0..200 {
            let x = Vec3::new(0.37, k as f64 / 199.0, 0.61);
            worst = worst.max((g.value(t, &x) - erf.velocity.value(t, &x)).norm());
        }
    }
    assert!(worst < 1e-3, "{worst}");
}

#[test]
fn grid_gradients_follow_the_data() {
    let s = shear("linear", 3.0);
    let g = GridField::sample(&s, [4, 9, 4, 2], 1.0, 1.0, 1.0, 1.0).unwrap();
    for y in [0.0, 0.31, 1.0] {
        let d = g.gradient(0.5, &Vec3::new(0.2, y, 0.7));
        assert!((d[(0, 1)] - 3.0).abs() < 1e-10, "{d}");
    }
    let thin = GridField::sample(&s, [4, 2, 4, 2], 1.0, 1.0, 1.0, 1.0).unwrap();
    let zero: Source = Arc::new(ZeroField { t_max: 1.0 });
    let ns = NSData::new(Arc::new(thin), zero, 1e-2, None).unwrap();
    let mesh = triangulate_boundary(&Domain::unit_channel(), 0.5).unwrap();
    assert!(matches!(vorticity_trace(&ns, &mesh, 4), Err(FieldError::Trace(_))));
}

#[test]
fn erf_wall_vorticity_in_the_trace() {
    let ns = erf_shear_field(1.0, 0.01, 1.0, 1.0).unwrap();
    let mesh = triangulate_boundary(&Domain::unit_channel(), 0.5).unwrap();
    let tr = vorticity_trace(&ns, &mesh, 4).unwrap();
    assert!((tr.total_weight() - 2.0).abs() < 1e-12);
    for s in &tr.samples {
        let w = 1.0 / (PI * 0.01 * s.t).sqrt();
        // Lower wall: ω = (0, 0, −V′); the upper wall mirrors it.
        assert!((s.value[2].abs() - w).abs() < 1e-9 * w && s.value[0] == 0.0 && s.value[1] == 0.0);
    }
    let at_one = 1.0 / (PI * 0.01f64).sqrt();
    assert!((at_one - 5.6419).abs() < 1e-4);
}

#[test]
fn strain_sup_norm_cases() {
    let d = Domain::unit_channel();
    let zero: Source = Arc::new(ZeroField { t_max: 1.0 });
    let plug: Source = Arc::new(ConstantField { value: Vec3::x(), t_max: 1.0 });
    let e = EulerData::new(plug, zero.clone(), &d, 1e-12).unwrap();
    assert_eq!(strain_sup_norm(&e, &d, 0.5), 0.0);
    assert_eq!(e.boundary_sup_a, 1.0);
    let e = EulerData::new(Arc::new(shear("s", 2.0)), zero.clone(), &d, 1e-12).unwrap();
    assert!((strain_sup_norm(&e, &d, 0.5) - 1.0).abs() < 1e-12);
    let rot = FnField::new("rot", 1.0, |_, x| Vec3::new(-x.z, 0.0, x.x), |_, _| {
        let mut g = Mat3::zeros();
        g[(0, 2)] = -1.0;
        g[(2, 0)] = 1.0;
        g
    });
    let e = EulerData::new(Arc::new(rot), zero.clone(), &d, 1e-12).unwrap();
    assert!(strain_sup_norm(&e, &d, 0.0) < 1e-15);
    let leaky: Source = Arc::new(ConstantField { value: Vec3::y(), t_max: 1.0 });
    assert!(matches!(EulerData::new(leaky, zero, &d, 1e-9), Err(FieldError::Contract(_))));
}

#[test]
fn layer_dissipation_closed_forms() {
    let d = Domain::unit_channel();
    assert_eq!(layer_dissipation(&NSData::zero(1e-3, 1.0), &d, 0.1).unwrap(), 0.0);
    let nu = 1e-3;
    let ns = erf_shear_field(1.0, nu, 1.0, 1.0).unwrap();
    let full = layer_dissipation(&ns, &d, 0.5).unwrap();
    let exact = 2.0 * (2.0 * nu / PI).sqrt();
    assert!((full - exact).abs() < 1e-6 * exact, "{full} vs {exact}");
    assert!(matches!(layer_dissipation(&ns, &d, 0.7), Err(FieldError::Contract(_))));
}

#[test]
fn shell_volume_of_sphere_and_torus() {
    let cfg = QuadConfig::default();
    let s = Domain::new(DomainKind::Sphere { radius: 1.0 }, 0.5).unwrap();
    let v = shell_integral_at(&s, 0.3, &cfg, false, |_| 1.0);
    let exact = 4.0 / 3.0 * PI * (1.0 - 0.7f64.powi(3));
    assert!((v - exact).abs() < 1e-6 * exact, "{v} {exact}");
    let t = Domain::new(DomainKind::Torus { major: 2.0, minor: 0.5 }, 0.4).unwrap();
    let v = shell_integral_at(&t, 0.5, &cfg, false, |_| 1.0);
    assert!((v - t.volume()).abs() < 1e-6 * t.volume(), "{v}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn binary_layout_round_trips(nx in 1usize..4, ny in 2usize..5, nz in 1usize..4, nt in 2usize..4, seed in any::<u64>()) {
        let n = nx * ny * nz * nt * 3;
        let data: Vec<f64> = (0..n).map(|i| ((seed.wrapping_add(i as u64) % 1000) as f64 - 500.0) * 1e-3).collect();
        let g = GridField::new([nx, ny, nz, nt], 1.5, 2.0, 1.0, 0.5, data).unwrap();
        prop_assert_eq!(&GridField::from_bytes(&g.to_bytes()).unwrap(), &g);
        prop_assert_eq!(&GridField::from_csv(&g.to_csv()).unwrap(), &g);
    }

    #[test]
    fn grid_interpolates_trilinear_fields_exactly(a in -2.0..2.0f64, b in -2.0..2.0f64, t in 0.0..1.0f64, y in 0.0..1.0f64) {
        let f = FnField::new("affine", 1.0, move |t, x| Vec3::new(a * x.y + t, b * x.y, 0.0), |_, _| Mat3::zeros());
        let g = GridField::sample(&f, [3, 5, 3, 3], 1.0, 1.0, 1.0, 1.0).unwrap();
        let x = Vec3::new(0.4, y, 0.2);
        prop_assert!((g.value(t, &x) - f.value(t, &x)).norm() < 1e-12);
    }
}
