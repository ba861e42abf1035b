//! Gauss–Legendre rules, composite panels and the collapsed (Duffy) triangle rule.

use std::f64::consts::PI;

/// Nodes and weights of an n-point Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

// P_n(x) and P_n'(x) by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// A one-dimensional rule: parallel node and weight lists.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule1D {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule1D {
    /// Gauss–Legendre with `order` nodes on each panel between consecutive breakpoints.
    pub fn composite(breaks: &[f64], order: usize) -> Self {
        let (x, w) = gauss_legendre(order);
        let mut nodes = Vec::with_capacity(order * breaks.len());
        let mut weights = Vec::with_capacity(order * breaks.len());
        for pair in breaks.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let half = 0.5 * (b - a);
            if half <= 0.0 {
                continue;
            }
            let mid = 0.5 * (a + b);
            for (xi, wi) in x.iter().zip(&w) {
                nodes.push(mid + half * xi);
                weights.push(half * wi);
            }
        }
        Rule1D { nodes, weights }
    }

    pub fn gauss(a: f64, b: f64, order: usize) -> Self {
        Self::composite(&[a, b], order)
    }

    pub fn uniform(a: f64, b: f64, panels: usize, order: usize) -> Self {
        let breaks: Vec<f64> = (0..=panels)
            .map(|i| a + (b - a) * i as f64 / panels as f64)
            .collect();
        Self::composite(&breaks, order)
    }

    /// Panels shrinking geometrically (ratio ½) towards `a`; resolves layers and
    /// integrable endpoint singularities such as t^{-1/2}.
    pub fn graded(a: f64, b: f64, levels: usize, order: usize) -> Self {
        Self::composite(&graded_breaks(a, b, levels), order)
    }

    /// Geometric grading towards both endpoints.
    pub fn graded_both(a: f64, b: f64, levels: usize, order: usize) -> Self {
        let mid = 0.5 * (a + b);
        let left = graded_breaks(a, mid, levels);
        let mut breaks = left.clone();
        for x in left.iter().rev().skip(1) {
            breaks.push(a + b - x);
        }
        Self::composite(&breaks, order)
    }

    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

fn graded_breaks(a: f64, b: f64, levels: usize) -> Vec<f64> {
    let mut breaks = vec![a];
    for k in (0..levels).rev() {
        breaks.push(a + (b - a) * 0.5f64.powi(k as i32 + 1));
    }
    breaks.push(b);
    breaks
}

/// Collapsed tensor rule on a triangle: barycentric nodes and area fractions
/// summing to one. Exact for polynomials of degree 2·order − 2.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleRule {
    pub bary: Vec<[f64; 3]>,
    pub fractions: Vec<f64>,
}

impl TriangleRule {
    pub fn new(order: usize) -> Self {
        let (x, w) = gauss_legendre(order);
        let mut bary = Vec::with_capacity(order * order);
        let mut fractions = Vec::with_capacity(order * order);
        for (xu, wu) in x.iter().zip(&w) {
            let u = 0.5 * (xu + 1.0);
            for (xv, wv) in x.iter().zip(&w) {
                let v = 0.5 * (xv + 1.0);
                bary.push([1.0 - u, u * (1.0 - v), u * v]);
                // du dv carry 1/4; the collapse Jacobian is 2u per unit area.
                fractions.push(0.25 * wu * wv * 2.0 * u);
            }
        }
        TriangleRule { bary, fractions }
    }

    pub fn len(&self) -> usize {
        self.bary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bary.is_empty()
    }
}
