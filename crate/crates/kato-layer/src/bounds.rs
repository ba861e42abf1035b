//! Term-by-term evaluation of the layer-separation bound, the energy identities
//! behind it, drag work and viscosity sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::{
    boundary_rule, curl, full_depth, layer_dissipation_with, shell_integral, shell_integral_at,
    BoundaryNode, EulerData, FieldError, NSData, QuadConfig,
};
use crate::geometry::{Domain, Rule1D, TriangleRule, Triangulation, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("contract violated: {0}")]
    Contract(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Constants the theory leaves unquantified, plus the L fallback.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConfig {
    pub c_omega: f64,
    pub universal_c: f64,
    /// Length used when A/L vanishes; the domain diameter when unset.
    pub l_fallback: Option<f64>,
    pub quad: QuadConfig,
}

impl Default for BoundConfig {
    fn default() -> Self {
        BoundConfig { c_omega: 1.0, universal_c: 1.0, l_fallback: None, quad: QuadConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicScales {
    pub a: f64,
    pub l: f64,
    pub re: f64,
    pub delta: f64,
    pub l_fallback_used: bool,
}

// Points of U_δ: boundary samples pushed inward at depths in [0, δ].
fn layer_points(domain: &Domain, delta: f64, uniform: bool) -> Vec<Vec3> {
    let n = if uniform { 2 } else { 10 };
    let mut out = Vec::new();
    for x in domain.boundary_samples(n) {
        let nrm = domain.outward_normal(&x);
        for k in 0..=32 {
            out.push(x - delta * k as f64 / 32.0 * nrm);
        }
    }
    out
}

fn time_grid(t_max: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| t_max * k as f64 / n as f64).collect()
}

/// A, L, Re and δ = min(δ̄, ν/A).
pub fn characteristic_scales(
    euler: &EulerData,
    domain: &Domain,
    nu: f64,
    t_max: f64,
    l_fallback: Option<f64>,
) -> CharacteristicScales {
    let a = euler.boundary_sup_a;
    let delta = if a > 0.0 { domain.bar_delta.min(nu / a) } else { domain.bar_delta };
    let fallback = l_fallback.unwrap_or_else(|| domain.diameter());
    if a == 0.0 {
        return CharacteristicScales { a, l: fallback, re: 0.0, delta, l_fallback_used: true };
    }
    let uniform = euler.velocity.tangentially_uniform();
    let bpts = domain.boundary_samples(if uniform { 2 } else { 12 });
    let lpts = layer_points(domain, delta, uniform);
    let times = time_grid(t_max, 16);
    let dt_sup = times
        .par_iter()
        .map(|t| bpts.iter().map(|x| euler.velocity.time_derivative(*t, x).norm()).fold(0.0, f64::max))
        .reduce(|| 0.0, f64::max);
    let grad_sup = times
        .par_iter()
        .map(|t| lpts.iter().map(|x| euler.velocity.gradient(*t, x).norm()).fold(0.0, f64::max))
        .reduce(|| 0.0, f64::max);
    let freq = dt_sup / a + grad_sup;
    let (l, used) = if freq > 0.0 { (a / freq, false) } else { (fallback, true) };
    CharacteristicScales { a, l, re: a * l / nu, delta, l_fallback_used: used }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyQuantities {
    /// ‖u^ν‖²_{L∞L²}.
    pub e_nu: f64,
    /// ν‖∇u^ν‖²_{L²L²}.
    pub d_nu: f64,
    /// ‖u^ν(0)‖²_{H¹}, when known.
    pub h_nu: Option<f64>,
    /// ν^{1/3}‖f^ν‖^{4/3}_{L^{4/3}}.
    pub f_nu: f64,
}

fn sq_norm_at(domain: &Domain, cfg: &QuadConfig, collapse: bool, f: impl Fn(&Vec3) -> f64) -> f64 {
    shell_integral_at(domain, full_depth(domain), cfg, collapse, f)
}

pub fn energy_quantities(ns: &NSData, domain: &Domain, cfg: &QuadConfig) -> EnergyQuantities {
    let u = &ns.velocity;
    let t_max = ns.final_time();
    let collapse = u.tangentially_uniform();
    let mut times = cfg.time_rule(t_max).nodes;
    times.extend([0.0, t_max]);
    let e_nu = times
        .par_iter()
        .map(|t| sq_norm_at(domain, cfg, collapse, |x| u.value(*t, x).norm_squared()))
        .reduce(|| 0.0, f64::max);
    let d_nu = if u.is_zero() {
        0.0
    } else {
        layer_dissipation_with(ns, domain, full_depth(domain), cfg).unwrap_or(f64::NAN)
    };
    let f_nu = force_43(ns, domain, cfg);
    EnergyQuantities { e_nu, d_nu, h_nu: ns.initial_h1.map(|h| h * h), f_nu }
}

fn force_43(ns: &NSData, domain: &Domain, cfg: &QuadConfig) -> f64 {
    if ns.force.is_zero() {
        return 0.0;
    }
    let nu = ns.viscosity;
    shell_integral(domain, full_depth(domain), ns.final_time(), cfg, ns.force.tangentially_uniform(), |t, x| {
        nu.cbrt() * ns.force.value(t, x).norm().powf(4.0 / 3.0)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemainderBreakdown {
    pub force_l1l2: f64,
    pub euler_dissipation: f64,
    pub force_43: f64,
    pub initial_h1: f64,
    pub initial_h1_available: bool,
    pub log_term: f64,
    pub slab_term: f64,
    pub energy_term: f64,
    pub boundary_factor: f64,
    pub l_fallback_used: bool,
    pub total: f64,
}

impl RemainderBreakdown {
    pub fn assembled(&self) -> f64 {
        self.force_l1l2
            + self.euler_dissipation
            + self.force_43
            + self.initial_h1
            + 2.0 * (self.log_term + self.slab_term + self.energy_term) * self.boundary_factor
    }
}

// t ↦ ‖f^ν − f̄‖_{L²}(t).
fn force_gap(ns: &NSData, euler: &EulerData, domain: &Domain, cfg: &QuadConfig, t: f64) -> f64 {
    if ns.force.is_zero() && euler.force.is_zero() {
        return 0.0;
    }
    let collapse = ns.force.tangentially_uniform() && euler.force.tangentially_uniform();
    sq_norm_at(domain, cfg, collapse, |x| (ns.force.value(t, x) - euler.force.value(t, x)).norm_squared()).sqrt()
}

fn smooth_time_rule(t_max: f64) -> Rule1D {
    Rule1D::uniform(0.0, t_max, 16, 6)
}

/// R_ν(T) term by term.
pub fn remainder_breakdown(
    ns: &NSData,
    euler: &EulerData,
    scales: &CharacteristicScales,
    domain: &Domain,
    t_max: f64,
    c_omega: f64,
    cfg: &QuadConfig,
) -> RemainderBreakdown {
    let nu = ns.viscosity;
    let force_l1l2 = if ns.force.is_zero() && euler.force.is_zero() {
        0.0
    } else {
        smooth_time_rule(t_max).nodes.par_iter().zip(&smooth_time_rule(t_max).weights)
            .map(|(t, w)| w * force_gap(ns, euler, domain, cfg, *t)).collect::<Vec<f64>>().iter().sum::<f64>()
    };
    let euler_dissipation = if euler.velocity.is_zero() {
        0.0
    } else {
        shell_integral(domain, full_depth(domain), t_max, cfg, euler.velocity.tangentially_uniform(), |t, x| {
            nu * euler.velocity.gradient(t, x).norm_squared()
        })
    };
    let force_43 = force_43(ns, domain, cfg);
    let initial_h1 = ns.initial_h1.map_or(0.0, |h| 2.0 * nu.powf(4.0 / 3.0) * h.powf(2.0 / 3.0));
    let (a, l) = (scales.a, scales.l);
    let boundary_factor = a * nu * domain.boundary_area;
    let (log_term, energy_term) = if a > 0.0 {
        let e = energy_quantities(ns, domain, cfg).e_nu;
        ((4.0 * (4.0 * a * l / nu).ln()).max(0.0), c_omega * (1.0 + nu * nu) * e * t_max / (a * l.powi(4)))
    } else {
        (0.0, 0.0)
    };
    let slab_term = nu * t_max / domain.bar_delta.powi(2);
    let mut r = RemainderBreakdown {
        force_l1l2,
        euler_dissipation,
        force_43,
        initial_h1,
        initial_h1_available: ns.initial_h1.is_some(),
        log_term,
        slab_term,
        energy_term,
        boundary_factor,
        l_fallback_used: scales.l_fallback_used,
        total: 0.0,
    };
    r.total = r.assembled();
    r
}

/// exp(∫₀ᵀ 2‖Dū‖_{L∞} + ‖f^ν − f̄‖_{L²} dt).
pub fn gronwall_factor(euler: &EulerData, ns: &NSData, domain: &Domain, t_max: f64, cfg: &QuadConfig) -> f64 {
    let tr = smooth_time_rule(t_max);
    let s: f64 = tr
        .nodes
        .par_iter()
        .zip(&tr.weights)
        .map(|(t, w)| {
            let strain = if euler.velocity.is_zero() { 0.0 } else { crate::fields::strain_sup_norm(euler, domain, *t) };
            w * (2.0 * strain + force_gap(ns, euler, domain, cfg, *t))
        })
        .collect::<Vec<f64>>().iter().sum::<f64>();
    s.exp()
}

/// A boundary node with its outward normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WallNode {
    pub x: Vec3,
    pub normal: Vec3,
    pub weight: f64,
}

pub fn wall_nodes_from_mesh(mesh: &Triangulation, order: usize) -> Vec<WallNode> {
    let rule = TriangleRule::new(order);
    let mut out = Vec::new();
    for tri in &mesh.triangles {
        let d = tri.domain();
        let ref_area = 0.5 * ((d[1] - d[0]).perp(&(d[2] - d[0]))).abs();
        for (b, w) in rule.bary.iter().zip(&rule.fractions) {
            let xi = d[0] * b[0] + d[1] * b[1] + d[2] * b[2];
            let x = tri.chart.map(&xi);
            out.push(WallNode { x, normal: mesh.domain.outward_normal(&x), weight: w * ref_area * tri.chart.area_element(&xi) });
        }
    }
    out
}

fn wall_nodes(domain: &Domain, cfg: &QuadConfig, collapse: bool) -> Vec<WallNode> {
    boundary_rule(domain, cfg, collapse)
        .into_iter()
        .map(|BoundaryNode { x, weight }| WallNode { x, normal: domain.outward_normal(&x), weight })
        .collect()
}

fn wall_integral(t_max: f64, cfg: &QuadConfig, nodes: &[WallNode], f: impl Fn(f64, &WallNode) -> f64 + Sync) -> f64 {
    let tr = cfg.time_rule(t_max);
    tr.nodes
        .par_iter()
        .zip(&tr.weights)
        .map(|(t, wt)| wt * nodes.iter().map(|n| n.weight * f(*t, n)).sum::<f64>())
        .collect::<Vec<f64>>().iter().sum::<f64>()
}

/// ν∫∫ ω^ν·(n×ū) with n the inward normal, so friction against the wall is positive.
pub fn drag_work_on(ns: &NSData, euler: &EulerData, nodes: &[WallNode], t_max: f64, cfg: &QuadConfig) -> f64 {
    let nu = ns.viscosity;
    wall_integral(t_max, cfg, nodes, |t, n| {
        let w = curl(&ns.velocity.gradient(t, &n.x));
        nu * w.dot(&(-n.normal).cross(&euler.velocity.value(t, &n.x)))
    })
}

/// ν∫∫ ∂_n u^ν·ū along the inward normal; equals the drag work on flat walls.
pub fn normal_derivative_work_on(ns: &NSData, euler: &EulerData, nodes: &[WallNode], t_max: f64, cfg: &QuadConfig) -> f64 {
    let nu = ns.viscosity;
    wall_integral(t_max, cfg, nodes, |t, n| {
        let dn = ns.velocity.gradient(t, &n.x) * (-n.normal);
        nu * dn.dot(&euler.velocity.value(t, &n.x))
    })
}

pub fn drag_work(ns: &NSData, euler: &EulerData, mesh: &Triangulation, t_max: f64, cfg: &QuadConfig) -> f64 {
    drag_work_on(ns, euler, &wall_nodes_from_mesh(mesh, 4), t_max, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyCheck {
    /// Positive part of ½‖u‖²(T′) + ∫∫ν|∇u|² − ½‖u‖²(0) − ∫∫u·f, maximized over T′.
    pub max_residual: f64,
    /// max_residual over ½‖u(0)‖² (or 1 when that vanishes).
    pub relative: f64,
    pub per_time: Vec<(f64, f64)>,
}

pub fn energy_inequality_check(ns: &NSData, domain: &Domain, t_grid: &[f64], cfg: &QuadConfig) -> EnergyCheck {
    let u = &ns.velocity;
    let nu = ns.viscosity;
    let collapse = u.tangentially_uniform() && ns.force.tangentially_uniform();
    let depth = full_depth(domain);
    let half_energy = |t: f64| 0.5 * sq_norm_at(domain, cfg, collapse, |x| u.value(t, x).norm_squared());
    let e0 = half_energy(0.0);
    let per_time: Vec<(f64, f64)> = t_grid
        .par_iter()
        .map(|&tp| {
            let integrand = |t: f64, x: &Vec3| {
                let mut v = nu * u.gradient(t, x).norm_squared();
                if !ns.force.is_zero() {
                    v -= u.value(t, x).dot(&ns.force.value(t, x));
                }
                v
            };
            let work = if u.is_zero() && ns.force.is_zero() { 0.0 } else { shell_integral(domain, depth, tp, cfg, collapse, integrand) };
            (tp, half_energy(tp) + work - e0)
        })
        .collect();
    let max_residual = per_time.iter().map(|p| p.1).fold(0.0, f64::max);
    let scale = if e0 > 0.0 { e0 } else { 1.0 };
    EnergyCheck { max_residual, relative: max_residual / scale, per_time }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalanceCheck {
    pub residual: f64,
    /// Residual over the sum of the absolute values of the terms.
    pub relative: f64,
}

/// Time-integrated identity for d/dt (u, ū) (outward normal in the wall term).
pub fn inner_product_balance_check(ns: &NSData, euler: &EulerData, domain: &Domain, t_max: f64, cfg: &QuadConfig) -> BalanceCheck {
    let (u, ub) = (&ns.velocity, &euler.velocity);
    let nu = ns.viscosity;
    let collapse = [u, ub, &ns.force, &euler.force].iter().all(|s| s.tangentially_uniform());
    let depth = full_depth(domain);
    let pairing = |t: f64| sq_norm_at(domain, cfg, collapse, |x| u.value(t, x).dot(&ub.value(t, x)));
    let jump = pairing(t_max) - pairing(0.0);
    let bulk = shell_integral(domain, depth, t_max, cfg, collapse, |t, x| {
        let w = u.value(t, x) - ub.value(t, x);
        let gb = ub.gradient(t, x);
        let gu = u.gradient(t, x);
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                s += (w[i] * w[j] - nu * gu[(i, j)]) * gb[(i, j)];
            }
        }
        s + ub.value(t, x).dot(&ns.force.value(t, x)) + u.value(t, x).dot(&euler.force.value(t, x))
    });
    let nodes = wall_nodes(domain, cfg, collapse);
    let wall = wall_integral(t_max, cfg, &nodes, |t, n| {
        nu * (u.gradient(t, &n.x) * n.normal).dot(&ub.value(t, &n.x))
    });
    let residual = (jump - bulk - wall).abs();
    let scale = jump.abs() + bulk.abs() + wall.abs();
    BalanceCheck { residual, relative: if scale > 0.0 { residual / scale } else { 0.0 } }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub nu: f64,
    pub t_final: f64,
    pub scales: CharacteristicScales,
    /// ‖u^ν − ū‖²(T) + (ν/2)‖∇u^ν‖².
    pub lhs: f64,
    /// ‖u^ν − ū‖²(T) alone.
    pub separation: f64,
    /// ν‖∇u^ν‖²_{L²L²}.
    pub dissipation: f64,
    pub initial_gap: f64,
    pub main_term_coeff: f64,
    pub remainder: RemainderBreakdown,
    pub gronwall_factor: f64,
    pub implied_c: Option<f64>,
    pub drag_work: f64,
    pub kato_layer_dissipation: f64,
    pub energy_inequality_residual: f64,
}

impl BoundReport {
    /// (initial_gap + c·A³T|∂Ω| + R_ν)·gronwall.
    pub fn rhs(&self, c: f64) -> f64 {
        (self.initial_gap + c * self.main_term_coeff + self.remainder.total) * self.gronwall_factor
    }

    pub fn holds(&self, c: f64) -> bool {
        self.lhs <= self.rhs(c) * (1.0 + 1e-12)
    }
}

pub fn main_bound_report(
    ns: &NSData,
    euler: &EulerData,
    domain: &Domain,
    t_max: f64,
    config: &BoundConfig,
) -> Result<BoundReport, BoundsError> {
    let cfg = &config.quad;
    let nu = ns.viscosity;
    let (u, ub) = (&ns.velocity, &euler.velocity);
    let collapse = u.tangentially_uniform() && ub.tangentially_uniform();
    let gap = |t: f64| sq_norm_at(domain, cfg, collapse, |x| (u.value(t, x) - ub.value(t, x)).norm_squared());
    let scales = characteristic_scales(euler, domain, nu, t_max, config.l_fallback);
    let separation = gap(t_max);
    let initial_gap = gap(0.0);
    let dissipation = energy_quantities(ns, domain, cfg).d_nu;
    let lhs = separation + 0.5 * dissipation;
    let main_term_coeff = scales.a.powi(3) * t_max * domain.boundary_area;
    let remainder = remainder_breakdown(ns, euler, &scales, domain, t_max, config.c_omega, cfg);
    let g = gronwall_factor(euler, ns, domain, t_max, cfg);
    let implied_c = (main_term_coeff > 0.0).then(|| (lhs / g - initial_gap - remainder.total) / main_term_coeff);
    let drag = drag_work_on(ns, euler, &wall_nodes(domain, cfg, collapse), t_max, cfg);
    let kato = if u.is_zero() { 0.0 } else { layer_dissipation_with(ns, domain, scales.delta.min(full_depth(domain)), cfg)? };
    let grid: Vec<f64> = (1..=4).map(|k| t_max * k as f64 / 4.0).collect();
    let energy = energy_inequality_check(ns, domain, &grid, cfg);
    let values = [lhs, initial_gap, remainder.total, g, drag, kato];
    if values.iter().any(|v| !v.is_finite()) {
        return Err(BoundsError::Contract(format!("non-finite bound ingredient at ν = {nu}")));
    }
    Ok(BoundReport {
        nu,
        t_final: t_max,
        scales,
        lhs,
        separation,
        dissipation,
        initial_gap,
        main_term_coeff,
        remainder,
        gronwall_factor: g,
        implied_c,
        drag_work: drag,
        kato_layer_dissipation: kato,
        energy_inequality_residual: energy.max_residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slopes {
    pub kato_layer_dissipation: Option<f64>,
    pub drag_work: Option<f64>,
    pub lhs: Option<f64>,
    pub separation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub nus: Vec<f64>,
    pub reports: Vec<Result<BoundReport, String>>,
    pub slopes: Slopes,
    /// R at ν_{i+1} over R at ν_i.
    pub remainder_ratios: Vec<f64>,
}

impl SweepReport {
    pub fn ok(&self) -> impl Iterator<Item = &BoundReport> {
        self.reports.iter().filter_map(|r| r.as_ref().ok())
    }
}

/// Least-squares slope of log y against log x over positive pairs.
pub fn loglog_slope(pts: &[(f64, f64)]) -> Option<f64> {
    let p: Vec<(f64, f64)> = pts.iter().filter(|(x, y)| *x > 0.0 && *y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if p.len() < 2 {
        return None;
    }
    let n = p.len() as f64;
    let mx = p.iter().map(|q| q.0).sum::<f64>() / n;
    let my = p.iter().map(|q| q.1).sum::<f64>() / n;
    let sxx: f64 = p.iter().map(|q| (q.0 - mx).powi(2)).sum();
    let sxy: f64 = p.iter().map(|q| (q.0 - mx) * (q.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub type Family<'a> = dyn Fn(f64) -> Result<(NSData, EulerData), String> + Sync + 'a;

/// One bound report per ν (strictly decreasing), in parallel; failures are recorded.
pub fn nu_sweep(
    family: &Family,
    nus: &[f64],
    domain: &Domain,
    t_max: f64,
    config: &BoundConfig,
) -> Result<SweepReport, BoundsError> {
    if nus.is_empty() {
        return Err(BoundsError::Contract("empty ν list".into()));
    }
    if nus.windows(2).any(|w| w[1] >= w[0]) || nus.iter().any(|v| !(*v > 0.0)) {
        return Err(BoundsError::Contract("ν list must be positive and strictly decreasing".into()));
    }
    let reports: Vec<Result<BoundReport, String>> = nus
        .par_iter()
        .map(|&nu| {
            let (ns, euler) = family(nu)?;
            main_bound_report(&ns, &euler, domain, t_max, config).map_err(|e| e.to_string())
        })
        .collect();
    let series = |f: fn(&BoundReport) -> f64| -> Vec<(f64, f64)> {
        reports.iter().filter_map(|r| r.as_ref().ok()).map(|r| (r.nu, f(r))).collect()
    };
    let slopes = Slopes {
        kato_layer_dissipation: loglog_slope(&series(|r| r.kato_layer_dissipation)),
        drag_work: loglog_slope(&series(|r| r.drag_work)),
        lhs: loglog_slope(&series(|r| r.lhs)),
        separation: loglog_slope(&series(|r| r.separation)),
    };
    let rem = series(|r| r.remainder.total);
    let remainder_ratios = rem.windows(2).map(|w| w[1].1 / w[0].1).collect();
    Ok(SweepReport { nus: nus.to_vec(), reports, slopes, remainder_ratios })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainRow {
    pub nu: f64,
    pub ls_proxy: f64,
    pub ad_proxy: f64,
    pub drag_work: f64,
    pub gronwall_factor: f64,
    pub initial_gap: f64,
    pub slack: f64,
    pub rhs: f64,
    pub margin: f64,
    pub holds: bool,
}

/// LS + AD ≤ (‖u−ū‖²(0) + 2W)·G + slack at each ν, from ½‖u−ū‖²(T) + ν‖∇u‖² ≤ ½‖u−ū‖²(0) + W + ….
pub fn ls_ad_drag_chain_report(sweep: &SweepReport) -> Vec<ChainRow> {
    sweep
        .ok()
        .map(|r| {
            let slack = r.remainder.force_l1l2 + r.remainder.euler_dissipation;
            let rhs = (r.initial_gap + 2.0 * r.drag_work) * r.gronwall_factor + slack;
            let lhs = r.separation + r.dissipation;
            let margin = rhs - lhs;
            ChainRow {
                nu: r.nu,
                ls_proxy: r.separation,
                ad_proxy: r.dissipation,
                drag_work: r.drag_work,
                gronwall_factor: r.gronwall_factor,
                initial_gap: r.initial_gap,
                slack,
                rhs,
                margin,
                holds: margin >= -1e-9 * rhs.abs().max(1e-300),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KatoVerdict {
    Satisfied,
    Violated,
    /// Layer dissipation vanishes but the separation proxy does not.
    Inconsistent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KatoReport {
    pub dissipation_slope: Option<f64>,
    pub separation_slope: Option<f64>,
    pub dissipation_vanishes: bool,
    pub separation_vanishes: bool,
    pub verdict: KatoVerdict,
}

// A positive series vanishes when it decreases along the sweep with a clearly positive slope.
fn vanishes(pts: &[(f64, f64)]) -> (Option<f64>, bool) {
    if pts.iter().all(|p| p.1.abs() <= 1e-300) {
        return (None, true);
    }
    let slope = loglog_slope(pts);
    let decreasing = pts.last().map(|l| l.1) < pts.first().map(|f| f.1);
    (slope, decreasing && slope.is_some_and(|s| s > 0.1))
}

/// Does the dissipation in the layer δ = ν/A vanish, and if so does the separation follow.
pub fn kato_criterion_report(sweep: &SweepReport) -> KatoReport {
    let diss: Vec<(f64, f64)> = sweep.ok().map(|r| (r.nu, r.kato_layer_dissipation)).collect();
    let sep: Vec<(f64, f64)> = sweep.ok().map(|r| (r.nu, r.separation)).collect();
    let (dissipation_slope, dissipation_vanishes) = vanishes(&diss);
    let (separation_slope, separation_vanishes) = vanishes(&sep);
    let verdict = match (dissipation_vanishes, separation_vanishes) {
        (false, _) => KatoVerdict::Violated,
        (true, true) => KatoVerdict::Satisfied,
        (true, false) => KatoVerdict::Inconsistent,
    };
    KatoReport { dissipation_slope, separation_slope, dissipation_vanishes, separation_vanishes, verdict }
}

/// C (A/U)³ |∂K| / S.
pub fn drag_coefficient_bound(a: f64, u: f64, boundary_area: f64, cross_section: f64, c: f64) -> Result<f64, BoundsError> {
    if !(u > 0.0 && cross_section > 0.0) {
        return Err(BoundsError::Contract("U and S must be positive".into()));
    }
    Ok(c * (a / u).powi(3) * boundary_area / cross_section)
}
