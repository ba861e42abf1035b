//! Exact shear solutions and synthetic fields used as references.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;
use thiserror::Error;

use crate::fields::{ConstantField, EulerData, FieldSource, Mat3, NSData, Source, SourceKind, ZeroField};
use crate::geometry::{Domain, DomainKind, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid parameter: {0}")]
    Invalid(String),
}

/// Sine modes of a channel shear flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShearSpectrum {
    /// (k, b_k) pairs.
    pub modes: Vec<(u32, f64)>,
    pub viscosity: f64,
    pub height: f64,
    /// Channel periods (lx, lz), used for norms.
    #[serde(default = "unit_periods")]
    pub periods: (f64, f64),
}

fn unit_periods() -> (f64, f64) {
    (1.0, 1.0)
}

impl ShearSpectrum {
    pub fn single(k: u32, b: f64, viscosity: f64) -> Self {
        ShearSpectrum { modes: vec![(k, b)], viscosity, height: 1.0, periods: unit_periods() }
    }
}

/// u = (V(t, y), 0, 0) with V = Σ b_k e^{−ν(kπ/h)² t} sin(kπy/h).
#[derive(Debug, Clone, PartialEq)]
pub struct HeatShear {
    pub spectrum: ShearSpectrum,
    pub t_max: f64,
}

impl HeatShear {
    fn terms(&self, t: f64, y: f64) -> (f64, f64, f64) {
        let s = &self.spectrum;
        let (mut v, mut dv, mut vt) = (0.0, 0.0, 0.0);
        for &(k, b) in &s.modes {
            let q = k as f64 * PI / s.height;
            let decay = b * (-s.viscosity * q * q * t).exp();
            let (sn, cs) = (q * y).sin_cos();
            v += decay * sn;
            dv += decay * q * cs;
            vt -= s.viscosity * q * q * decay * sn;
        }
        (v, dv, vt)
    }

    pub fn profile(&self, t: f64, y: f64) -> f64 {
        self.terms(t, y).0
    }
}

impl FieldSource for HeatShear {
    fn value(&self, t: f64, x: &Vec3) -> Vec3 {
        Vec3::new(self.terms(t, x.y).0, 0.0, 0.0)
    }
    fn gradient(&self, t: f64, x: &Vec3) -> Mat3 {
        let mut g = Mat3::zeros();
        g[(0, 1)] = self.terms(t, x.y).1;
        g
    }
    fn time_derivative(&self, t: f64, x: &Vec3) -> Vec3 {
        Vec3::new(self.terms(t, x.y).2, 0.0, 0.0)
    }
    fn time_range(&self) -> (f64, f64) {
        (0.0, self.t_max)
    }
    fn kind(&self) -> SourceKind {
        SourceKind::Analytic
    }
    fn tangentially_uniform(&self) -> bool {
        true
    }
    fn is_zero(&self) -> bool {
        self.spectrum.modes.iter().all(|m| m.1 == 0.0)
    }
}

/// Exact heat-equation shear flow with zero force.
pub fn heat_shear_field(spec: &ShearSpectrum, t_max: f64) -> Result<NSData, FlowError> {
    if !(spec.height > 0.0 && spec.viscosity > 0.0 && t_max > 0.0) {
        return Err(FlowError::Invalid("height, viscosity and T must be positive".into()));
    }
    if spec.modes.iter().any(|m| !m.1.is_finite()) {
        return Err(FlowError::Invalid("non-finite amplitude".into()));
    }
    let (lx, lz) = spec.periods;
    let h = spec.height;
    let h1_sq: f64 = spec
        .modes
        .iter()
        .map(|&(k, b)| {
            let q = k as f64 * PI / h;
            lx * lz * b * b * 0.5 * h * (1.0 + q * q)
        })
        .sum();
    let u = HeatShear { spectrum: spec.clone(), t_max };
    let f: Source = Arc::new(ZeroField { t_max });
    Ok(NSData { velocity: Arc::new(u), force: f, viscosity: spec.viscosity, initial_h1: Some(h1_sq.sqrt()) })
}

/// V = A erf(d / (2√(νt))) with d the distance to the nearer wall: each half of
/// the channel carries the half-space profile, so the truncation at the mid-plane
/// is of size A erfc(h / (4√(νT))).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErfShear {
    pub a: f64,
    pub nu: f64,
    pub height: f64,
    pub t_max: f64,
}

impl ErfShear {
    fn dist(&self, y: f64) -> (f64, f64) {
        if y <= 0.5 * self.height {
            (y.max(0.0), 1.0)
        } else {
            ((self.height - y).max(0.0), -1.0)
        }
    }

    pub fn wall_vorticity(&self, t: f64) -> f64 {
        self.a / (PI * self.nu * t).sqrt()
    }

    /// Size of the mid-plane truncation at the final time.
    pub fn truncation_error(&self) -> f64 {
        self.a.abs() * libm::erfc(self.height / (4.0 * (self.nu * self.t_max).sqrt()))
    }
}

impl FieldSource for ErfShear {
    fn value(&self, t: f64, x: &Vec3) -> Vec3 {
        let (d, _) = self.dist(x.y);
        let v = if t <= 0.0 {
            if d > 0.0 { self.a } else { 0.0 }
        } else {
            self.a * libm::erf(d / (2.0 * (self.nu * t).sqrt()))
        };
        Vec3::new(v, 0.0, 0.0)
    }

    /// At t = 0 the wall gradient is reported as +∞.
    fn gradient(&self, t: f64, x: &Vec3) -> Mat3 {
        let (d, s) = self.dist(x.y);
        let dv = if t <= 0.0 {
            if d == 0.0 { f64::INFINITY } else { 0.0 }
        } else {
            let w = 2.0 * (self.nu * t).sqrt();
            self.a * 2.0 / (PI.sqrt() * w) * (-(d / w).powi(2)).exp()
        };
        let mut g = Mat3::zeros();
        g[(0, 1)] = s * dv;
        g
    }

    fn time_derivative(&self, t: f64, x: &Vec3) -> Vec3 {
        let (d, _) = self.dist(x.y);
        if t <= 0.0 {
            return Vec3::zeros();
        }
        let w = 2.0 * (self.nu * t).sqrt();
        let vt = -self.a * 2.0 / PI.sqrt() * (-(d / w).powi(2)).exp() * d / (2.0 * t * w);
        Vec3::new(vt, 0.0, 0.0)
    }

    fn time_range(&self) -> (f64, f64) {
        (0.0, self.t_max)
    }
    fn kind(&self) -> SourceKind {
        SourceKind::Analytic
    }
    fn tangentially_uniform(&self) -> bool {
        true
    }
    fn is_zero(&self) -> bool {
        self.a == 0.0
    }
}

/// Boundary-layer reference for a plug flow A e₁ switched on at t = 0, on a channel of height `height`.
pub fn erf_shear_field(a: f64, nu: f64, height: f64, t_max: f64) -> Result<NSData, FlowError> {
    if !(nu > 0.0 && height > 0.0 && t_max > 0.0) || !a.is_finite() {
        return Err(FlowError::Invalid("erf shear needs ν, h, T > 0 and finite A".into()));
    }
    let u = ErfShear { a, nu, height, t_max };
    let f: Source = Arc::new(ZeroField { t_max });
    // u(0) jumps at the wall, so it is not in H¹.
    Ok(NSData { velocity: Arc::new(u), force: f, viscosity: nu, initial_h1: None })
}

/// ū = A e₁ with f̄ = 0 on a channel.
pub fn plug_euler(a: f64, domain: &Domain, t_max: f64) -> Result<EulerData, FlowError> {
    if !matches!(domain.kind, DomainKind::Channel { .. }) {
        return Err(FlowError::Unsupported(format!("plug flow needs a channel, got {}", domain.id())));
    }
    Ok(EulerData {
        velocity: Arc::new(ConstantField { value: Vec3::new(a, 0.0, 0.0), t_max }),
        force: Arc::new(ZeroField { t_max }),
        boundary_sup_a: a.abs(),
    })
}

/// A spacetime Gaussian burst of ∂_y u_x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Burst {
    pub t: f64,
    pub x: [f64; 3],
    pub amplitude: f64,
    /// Spatial width w; the temporal width is w².
    pub width: f64,
}

/// Sum of bursts with ∂_y u_x = Σ a exp(−|x−c|²/2w² − (t−t_c)²/2w⁴).
/// Not a Navier–Stokes solution; it stresses the partition and norm machinery.
#[derive(Debug, Clone, PartialEq)]
pub struct BurstField {
    pub bursts: Vec<Burst>,
    pub t_max: f64,
}

impl BurstField {
    pub fn new(bursts: Vec<Burst>, t_max: f64) -> Result<Self, FlowError> {
        if bursts.iter().any(|b| !(b.width > 0.0)) {
            return Err(FlowError::Invalid("burst widths must be positive".into()));
        }
        Ok(BurstField { bursts, t_max })
    }

    /// The bump profile ∂_y u_x itself.
    pub fn density(&self, t: f64, x: &Vec3) -> f64 {
        self.bursts.iter().map(|b| b.amplitude * self.parts(b, t, x).0).sum()
    }

    // (full bump, tangential-temporal factor g, ∂_y-profile antiderivative factor)
    fn parts(&self, b: &Burst, t: f64, x: &Vec3) -> (f64, f64, f64) {
        let c = Vec3::from(b.x);
        let w = b.width;
        let dx = x - c;
        let g = (-(dx.x * dx.x + dx.z * dx.z) / (2.0 * w * w) - (t - b.t).powi(2) / (2.0 * w.powi(4))).exp();
        let ey = (-(dx.y * dx.y) / (2.0 * w * w)).exp();
        let iy = w * (PI / 2.0).sqrt() * libm::erf(dx.y / (2f64.sqrt() * w));
        (g * ey, g, iy)
    }
}

impl FieldSource for BurstField {
    fn value(&self, t: f64, x: &Vec3) -> Vec3 {
        let u: f64 = self.bursts.iter().map(|b| {
            let (_, g, iy) = self.parts(b, t, x);
            b.amplitude * g * iy
        }).sum();
        Vec3::new(u, 0.0, 0.0)
    }

    fn gradient(&self, t: f64, x: &Vec3) -> Mat3 {
        let mut m = Mat3::zeros();
        for b in &self.bursts {
            let (full, g, iy) = self.parts(b, t, x);
            let c = Vec3::from(b.x);
            let w2 = b.width * b.width;
            m[(0, 0)] -= b.amplitude * g * iy * (x.x - c.x) / w2;
            m[(0, 1)] += b.amplitude * full;
            m[(0, 2)] -= b.amplitude * g * iy * (x.z - c.z) / w2;
        }
        m
    }

    fn time_range(&self) -> (f64, f64) {
        (0.0, self.t_max)
    }
    fn kind(&self) -> SourceKind {
        SourceKind::Analytic
    }
    fn is_zero(&self) -> bool {
        self.bursts.is_empty()
    }
}

/// Burst data paired with zero force, for partition tests.
pub fn synthetic_burst_field(bursts: Vec<Burst>, viscosity: f64, t_max: f64) -> Result<NSData, FlowError> {
    let u = BurstField::new(bursts, t_max)?;
    Ok(NSData { velocity: Arc::new(u), force: Arc::new(ZeroField { t_max }), viscosity, initial_h1: None })
}
