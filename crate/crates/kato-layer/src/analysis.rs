//! Lorentz norms of empirical distributions, the parabolic maximal function, the
//! layer functional and the truncated weak vorticity norm.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::{
    boundary_rule, check_depth, finite, full_depth, shell_integral, shell_integral_at, FieldError, NSData, QuadConfig,
};
use crate::geometry::{Domain, Rule1D, Vec3};
use crate::partition::{PartitionTree, PiecewiseBoundaryField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("contract violated: {0}")]
    Contract(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Values with non-negative measures; the discrete substrate of every norm here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedSamples {
    pub values: Vec<f64>,
    pub weights: Vec<f64>,
    pub total_measure: f64,
}

impl WeightedSamples {
    pub fn new(values: Vec<f64>, weights: Vec<f64>) -> Result<Self, AnalysisError> {
        if values.len() != weights.len() {
            return Err(AnalysisError::Contract(format!(
                "{} values but {} weights",
                values.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(AnalysisError::Contract(format!("weight {w} is not a finite non-negative number")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(AnalysisError::Contract("non-finite sample value".into()));
        }
        let total_measure = weights.iter().sum();
        Ok(WeightedSamples { values, weights, total_measure })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    // Distinct |values| in decreasing order with μ{|f| ≥ v} for each.
    fn levels(&self) -> Vec<(f64, f64)> {
        let mut pairs: Vec<(f64, f64)> = self
            .values
            .iter()
            .zip(&self.weights)
            .filter(|(_, w)| **w > 0.0)
            .map(|(v, w)| (v.abs(), *w))
            .collect();
        pairs.par_sort_unstable_by(|a, b| b.0.total_cmp(&a.0));
        let mut out: Vec<(f64, f64)> = Vec::new();
        let mut acc = 0.0;
        for (v, w) in pairs {
            acc += w;
            match out.last_mut() {
                Some(last) if last.0 == v => last.1 = acc,
                _ => out.push((v, acc)),
            }
        }
        out
    }
}

/// sup_λ λ μ{|f| > λ}^{1/p}, attained as λ ↑ a sample value.
pub fn weak_lorentz_norm(s: &WeightedSamples, p: f64) -> Result<f64, AnalysisError> {
    if !(p > 0.0) {
        return Err(AnalysisError::Contract(format!("exponent must be positive, got {p}")));
    }
    Ok(s.levels().iter().map(|(v, m)| v * m.powf(1.0 / p)).fold(0.0, f64::max))
}

/// ∫₀^∞ μ{|f| > λ}^{1/3} dλ (distribution-function form).
pub fn lorentz31_norm(s: &WeightedSamples) -> f64 {
    let lv = s.levels();
    lv.iter()
        .enumerate()
        .map(|(i, (v, m))| {
            let below = lv.get(i + 1).map_or(0.0, |n| n.0);
            (v - below) * m.cbrt()
        })
        .sum()
}

/// Radii for the parabolic maximal function, clipped to (0, T) × Ω (or U_δ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaximalConfig {
    pub radii: Vec<f64>,
    pub t_max: f64,
    /// Restrict averages to U_δ when set.
    pub layer: Option<f64>,
    /// Gauss order per direction of the cylinder quadrature.
    pub order: usize,
}

impl MaximalConfig {
    /// Dyadic radii from `spacing` up to `diameter`.
    pub fn dyadic(spacing: f64, diameter: f64, t_max: f64) -> Result<Self, AnalysisError> {
        if !(spacing > 0.0 && diameter >= spacing) {
            return Err(AnalysisError::Contract(format!("need 0 < spacing ≤ diameter, got {spacing}, {diameter}")));
        }
        let mut radii = vec![spacing];
        while radii.last().unwrap() * 2.0 <= diameter * (1.0 + 1e-12) {
            radii.push(radii.last().unwrap() * 2.0);
        }
        Ok(MaximalConfig { radii, t_max, layer: None, order: 8 })
    }

    pub fn validate(&self) -> Result<(), AnalysisError> {
        if self.radii.is_empty() || self.radii[0] <= 0.0 || self.radii.windows(2).any(|w| w[1] <= w[0]) {
            return Err(AnalysisError::Contract("radius grid must be positive and strictly increasing".into()));
        }
        Ok(())
    }
}

/// Clipped average of g over (t − r², t + r²) × B_r(x).
pub fn cylinder_average(
    g: &(dyn Fn(f64, &Vec3) -> f64 + Sync),
    domain: &Domain,
    t: f64,
    x: &Vec3,
    r: f64,
    cfg: &MaximalConfig,
) -> f64 {
    let (a, b) = ((t - r * r).max(0.0), (t + r * r).min(cfg.t_max));
    let n = cfg.order.max(2);
    let tr = Rule1D::gauss(a, b, n);
    // Ball in spherical coordinates; the radial rule is split to resolve the clip.
    let rr = Rule1D::uniform(0.0, r, 2, n);
    let cr = Rule1D::uniform(-1.0, 1.0, 2, n);
    let nphi = 2 * n;
    let inside = |y: &Vec3| domain.contains(y) && cfg.layer.is_none_or(|d| domain.distance_to_boundary(y) < d);
    let (mut num, mut den) = (0.0, 0.0);
    for (rho, wr) in rr.nodes.iter().zip(&rr.weights) {
        for (c, wc) in cr.nodes.iter().zip(&cr.weights) {
            let s = (1.0 - c * c).sqrt();
            for k in 0..nphi {
                let phi = std::f64::consts::TAU * (k as f64 + 0.5) / nphi as f64;
                let y = x + *rho * Vec3::new(s * phi.cos(), s * phi.sin(), *c);
                if !inside(&y) {
                    continue;
                }
                let w = wr * rho * rho * wc * std::f64::consts::TAU / nphi as f64;
                for (tt, wt) in tr.nodes.iter().zip(&tr.weights) {
                    num += w * wt * g(*tt, &y);
                    den += w * wt;
                }
            }
        }
    }
    if den > 0.0 { num / den } else { 0.0 }
}

/// max over the radius grid of clipped cylinder averages; a lower bound for the maximal function.
pub fn parabolic_maximal(
    g: &(dyn Fn(f64, &Vec3) -> f64 + Sync),
    domain: &Domain,
    t: f64,
    x: &Vec3,
    cfg: &MaximalConfig,
) -> Result<f64, AnalysisError> {
    cfg.validate()?;
    if !(t > 0.0 && t < cfg.t_max) || !domain.contains(x) {
        return Err(AnalysisError::Contract(format!("point ({t}, {x:?}) is not inside (0, T) × Ω")));
    }
    Ok(cfg
        .radii
        .par_iter()
        .map(|r| cylinder_average(g, domain, t, x, *r, cfg))
        .reduce(|| f64::NEG_INFINITY, f64::max))
}

/// ∫₀ᵀ∫_{U_δ} ν|∇u^ν|² + ν^{1/3}|f^ν|^{4/3} dx dt.
pub fn kato_functional(ns: &NSData, domain: &Domain, delta: f64) -> Result<f64, AnalysisError> {
    kato_functional_with(ns, domain, delta, &QuadConfig::default())
}

pub fn kato_functional_with(ns: &NSData, domain: &Domain, delta: f64, cfg: &QuadConfig) -> Result<f64, AnalysisError> {
    check_depth(domain, delta)?;
    let nu = ns.viscosity;
    let mut total = crate::fields::layer_dissipation_with(ns, domain, delta, cfg)?;
    if !ns.force.is_zero() {
        let collapse = ns.force.tangentially_uniform();
        total += shell_integral(domain, delta, ns.final_time(), cfg, collapse, |t, x| {
            nu.cbrt() * ns.force.value(t, x).norm().powf(4.0 / 3.0)
        });
    }
    Ok(finite(total, "layer functional")?)
}

/// ‖νω̃ 1{ν|ω̃| > γ max(ν/t, ν²/δ²)}‖^{3/2}_{L^{3/2,∞}}, thresholded at each leaf's earliest time.
pub fn truncated_weak_vorticity_norm(
    field: &PiecewiseBoundaryField,
    tree: &PartitionTree,
    gamma: f64,
    nu: f64,
    delta: f64,
) -> Result<f64, AnalysisError> {
    if (delta - tree.delta).abs() > 1e-12 * delta.abs().max(1.0) {
        return Err(AnalysisError::Contract(format!("δ = {delta} differs from the partition's δ = {}", tree.delta)));
    }
    if field.lineage != tree.lineage() || field.values.len() != tree.leaves.len() {
        return Err(AnalysisError::Contract("field was not built on this partition".into()));
    }
    let (values, weights): (Vec<f64>, Vec<f64>) = (0..tree.leaves.len())
        .into_par_iter()
        .map(|n| {
            let c = tree.leaf(n);
            let (t0, _) = tree.physical_interval(c);
            let threshold = gamma * (nu / t0).max(nu * nu / (delta * delta));
            let v = nu * field.values[n].norm();
            (if v > threshold { v } else { 0.0 }, tree.measure(c))
        })
        .unzip();
    Ok(weak_lorentz_norm(&WeightedSamples::new(values, weights)?, 1.5)?.powf(1.5))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NaiveEstimate {
    /// ∫∫_{∂Ω} |ν∇u^ν|^{4/3}.
    pub lhs: f64,
    pub force_term: f64,
    pub energy_sup: f64,
    pub dissipation: f64,
    /// ν^{1/3}‖u^ν(0)‖_{H¹}^{2/3}; absent when the initial H¹ norm is unknown.
    pub initial_term: Option<f64>,
    pub rhs: f64,
    pub implied_constant: Option<f64>,
}

/// Both sides of the global parabolic-regularity bound.
pub fn naive_global_estimate_report(ns: &NSData, domain: &Domain, cfg: &QuadConfig) -> NaiveEstimate {
    let nu = ns.viscosity;
    let t_max = ns.final_time();
    let u = &ns.velocity;
    let collapse = u.tangentially_uniform() && ns.force.tangentially_uniform();
    let depth = full_depth(domain);
    let tr = cfg.time_rule(t_max);
    let nodes = boundary_rule(domain, cfg, collapse);
    let lhs: f64 = tr
        .nodes
        .par_iter()
        .zip(&tr.weights)
        .map(|(t, wt)| {
            wt * nodes.iter().map(|b| b.weight * (nu * u.gradient(*t, &b.x).norm()).powf(4.0 / 3.0)).sum::<f64>()
        })
        .collect::<Vec<f64>>().iter().sum::<f64>();
    let force_term = if ns.force.is_zero() {
        0.0
    } else {
        tr.nodes
            .par_iter()
            .zip(&tr.weights)
            .map(|(t, wt)| {
                let s = shell_integral_at(domain, depth, cfg, collapse, |x| ns.force.value(*t, x).norm().powf(1.2));
                wt * s.powf(10.0 / 9.0)
            })
            .collect::<Vec<f64>>().iter().sum::<f64>()
    };
    let energy_sup = std::iter::once(0.0)
        .chain(tr.nodes.iter().copied())
        .collect::<Vec<_>>()
        .par_iter()
        .map(|t| shell_integral_at(domain, depth, cfg, collapse, |x| u.value(*t, x).norm_squared()))
        .reduce(|| 0.0, f64::max)
        .sqrt();
    let dissipation = shell_integral(domain, depth, t_max, cfg, collapse, |t, x| u.gradient(t, x).norm_squared());
    let initial_term = ns.initial_h1.map(|h| nu.cbrt() * h.powf(2.0 / 3.0));
    let rhs = force_term + energy_sup.powf(2.0 / 3.0) * (dissipation + initial_term.unwrap_or(0.0));
    NaiveEstimate {
        lhs,
        force_term,
        energy_sup,
        dissipation,
        initial_term,
        rhs,
        implied_constant: (rhs > 0.0).then(|| lhs / rhs),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weak_norm_small_example() {
        let s = WeightedSamples::new(vec![3.0, 2.0, 1.0], vec![1.0; 3]).unwrap();
        assert_eq!(weak_lorentz_norm(&s, 1.0).unwrap(), 4.0);
    }

    #[test]
    fn ties_merge_into_one_level() {
        let s = WeightedSamples::new(vec![2.0, -2.0, 1.0], vec![1.0, 1.0, 2.0]).unwrap();
        assert_eq!(weak_lorentz_norm(&s, 1.0).unwrap(), 4.0);
        assert!((lorentz31_norm(&s) - (2f64.cbrt() + 4f64.cbrt())).abs() < 1e-15);
    }

    #[test]
    fn empty_and_invalid() {
        let e = WeightedSamples::new(vec![], vec![]).unwrap();
        assert_eq!(weak_lorentz_norm(&e, 1.5).unwrap(), 0.0);
        assert_eq!(lorentz31_norm(&e), 0.0);
        assert!(WeightedSamples::new(vec![1.0], vec![-1.0]).is_err());
        assert!(WeightedSamples::new(vec![1.0], vec![]).is_err());
    }

    #[test]
    fn dyadic_radii_increase() {
        let c = MaximalConfig::dyadic(0.01, 1.0, 1.0).unwrap();
        assert_eq!(c.radii.len(), 7);
        assert!(c.validate().is_ok());
    }
}
