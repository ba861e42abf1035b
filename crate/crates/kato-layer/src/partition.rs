//! Stopping-time partition of (0, T) × ∂Ω into suitable spacetime cells, the
//! σ-algebra generated by the leaves, and conditional expectations over it.
//!
//! Work happens in unit-viscosity variables s = νt, u = ν⁻¹u^ν, f = ν⁻²f^ν; space
//! is not rescaled. A level-k cell is (j r_k², (j+1) r_k²) × T with T a level-k
//! sub-triangle of a mesh triangle, r_k = 2^{−k} r₀, so the look-back clause
//! t̂ ≥ 4r_k² reads j ≥ 3.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::sync::Arc;
use thiserror::Error;

use crate::fields::{curl, BoundaryTrace, NSData, TraceSample};
use crate::geometry::mesh::{barycentric, midpoint_children};
use crate::geometry::{Rule1D, TriangleRule, Triangulation, Vec2, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PartitionError {
    #[error("partition setup: {0}")]
    Setup(String),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("invalid config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionConfig {
    pub gamma: f64,
    /// The unspecified universal constant C in c₀ = γ²/C.
    pub cz_constant: f64,
    pub max_depth: u8,
    /// Gauss order per direction for cell integrals.
    pub order: usize,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        PartitionConfig { gamma: 1.0, cz_constant: 1.0, max_depth: 8, order: 3 }
    }
}

impl PartitionConfig {
    pub fn c0(&self) -> f64 {
        self.gamma * self.gamma / self.cz_constant
    }

    pub fn validate(&self) -> Result<(), PartitionError> {
        let bad = |m: String| Err(PartitionError::Config(m));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma must lie in (0, 1], got {}", self.gamma));
        }
        if !(self.cz_constant > 0.0) || self.c0() > 1.0 {
            return bad(format!("c0 = gamma²/cz_constant must lie in (0, 1], got {}", self.c0()));
        }
        if self.max_depth < 1 || self.max_depth > 30 {
            return bad(format!("max_depth must lie in 1..=30, got {}", self.max_depth));
        }
        if self.order == 0 {
            return bad("order must be positive".into());
        }
        Ok(())
    }
}

/// A sub-triangle of a mesh triangle: two bits per level select the midpoint
/// child (0–2 corner children, 3 the middle one).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TriId {
    pub root: u32,
    pub level: u8,
    pub path: u64,
}

impl TriId {
    pub fn root(root: u32) -> Self {
        TriId { root, level: 0, path: 0 }
    }

    pub fn child(&self, c: u8) -> Self {
        TriId { root: self.root, level: self.level + 1, path: self.path | ((c as u64) << (2 * self.level)) }
    }

    pub fn digit(&self, m: u8) -> u8 {
        ((self.path >> (2 * m)) & 3) as u8
    }

    pub fn ancestor(&self, level: u8) -> Self {
        let mask = if level == 0 { 0 } else { u64::MAX >> (64 - 2 * level as u32) };
        TriId { root: self.root, level, path: self.path & mask }
    }

    pub fn descends_from(&self, other: &TriId) -> bool {
        self.level >= other.level && self.ancestor(other.level) == *other
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Suitable,
    Refined,
    Unresolved,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpacetimeCell {
    pub level: u8,
    pub r_k: f64,
    pub tri: TriId,
    /// Time index: the cell spans (j r_k², (j+1) r_k²) in rescaled time.
    pub j: u64,
    /// (t̂ − r_k², t̂) in rescaled time s = νt.
    pub time_interval: (f64, f64),
    pub status: CellStatus,
    /// Measured average of |∇u|² + |f|^{4/3} over the look-back region (1/length⁴).
    pub suitability_value: f64,
}

impl SpacetimeCell {
    fn new(level: u8, r0: f64, tri: TriId, j: u64) -> Self {
        let r_k = r0 * 0.5f64.powi(level as i32);
        let d = r_k * r_k;
        SpacetimeCell {
            level,
            r_k,
            tri,
            j,
            time_interval: (j as f64 * d, (j + 1) as f64 * d),
            status: CellStatus::Unresolved,
            suitability_value: f64::NAN,
        }
    }

    pub fn key(&self) -> (TriId, u64) {
        (self.tri, self.j)
    }

    pub fn is_leaf(&self) -> bool {
        self.status != CellStatus::Refined
    }

    /// The 16 children: four midpoint sub-triangles × four time quarters.
    pub fn children(&self, r0: f64) -> Vec<SpacetimeCell> {
        let mut v = Vec::with_capacity(16);
        for c in 0..4 {
            for m in 0..4 {
                v.push(SpacetimeCell::new(self.level + 1, r0, self.tri.child(c), 4 * self.j + m));
            }
        }
        v
    }

    /// Whether `other` (any level) lies inside this cell.
    pub fn contains_cell(&self, other: &SpacetimeCell) -> bool {
        other.tri.descends_from(&self.tri) && (other.j >> (2 * (other.level - self.level) as u32)) == self.j
    }
}

/// K, L₀ and r₀ from the initial-partition formulas, in the partition's time units.
pub fn partition_scales(t: f64, delta: f64) -> Result<(u32, f64, f64), PartitionError> {
    if !(t > 0.0 && delta > 0.0) {
        return Err(PartitionError::Setup(format!("T = {t} and δ = {delta} must be positive")));
    }
    let mut k = 0u32;
    while 0.25f64.powi(k as i32) * t > delta * delta * (1.0 + 1e-12) {
        k += 1;
    }
    let l0 = 0.25f64.powi(k as i32) * t;
    let r0 = 0.5f64.powi(k as i32 + 1) * t.sqrt();
    let half = 0.5 * delta.min(t.sqrt());
    if !(r0 <= half * (1.0 + 1e-12) && half < 2.0 * r0) {
        return Err(PartitionError::Setup(format!("r0 = {r0} violates r0 ≤ ½min(δ, √T) < 2r0")));
    }
    Ok((k, l0, r0))
}

#[derive(Debug, Clone)]
pub struct InitialPartition {
    pub k: u32,
    pub l0: f64,
    pub r0: f64,
    /// Final time in partition units.
    pub t_final: f64,
    pub delta: f64,
    pub mesh: Arc<Triangulation>,
    pub roots: Vec<SpacetimeCell>,
}

/// Slabs of length L₀, each cut into four level-0 cells of length r₀², times mesh triangles.
pub fn initial_partition(t: f64, delta: f64, mesh: &Triangulation) -> Result<InitialPartition, PartitionError> {
    if delta > mesh.domain.bar_delta * (1.0 + 1e-12) {
        return Err(PartitionError::Setup(format!("δ = {delta} exceeds δ̄ = {}", mesh.domain.bar_delta)));
    }
    let (k, l0, r0) = partition_scales(t, delta)?;
    let (lo, hi) = mesh.sizes();
    if lo < 0.8 * r0 * (1.0 - 1e-9) || hi > 1.25 * r0 * (1.0 + 1e-9) {
        return Err(PartitionError::Setup(format!(
            "mesh sizes [{lo:.5}, {hi:.5}] incompatible with r0 = {r0:.5} (need [0.8 r0, 1.25 r0])"
        )));
    }
    let cells_per_tri = 4u64 << (2 * k);
    let mut roots = Vec::with_capacity(mesh.triangles.len() * cells_per_tri as usize);
    for i in 0..mesh.triangles.len() {
        for j in 0..cells_per_tri {
            roots.push(SpacetimeCell::new(0, r0, TriId::root(i as u32), j));
        }
    }
    Ok(InitialPartition { k, l0, r0, t_final: t, delta, mesh: Arc::new(mesh.clone()), roots })
}

#[derive(Debug, Clone, Copy)]
struct TriGeom {
    center: Vec3,
    points: [Vec3; 3],
    radius: f64,
}

fn ref_vertices(mesh: &Triangulation, id: TriId) -> [Vec2; 3] {
    let mut v = mesh.triangles[id.root as usize].domain();
    for m in 0..id.level {
        v = midpoint_children(&v)[id.digit(m) as usize];
    }
    v
}

fn tri_geom(mesh: &Triangulation, id: TriId) -> TriGeom {
    let chart = &mesh.triangles[id.root as usize].chart;
    let verts = ref_vertices(mesh, id);
    let c = (verts[0] + verts[1] + verts[2]) / 3.0;
    let center = chart.map(&c);
    let points = verts.map(|v| chart.map(&v));
    let radius = points.iter().map(|p| (p - center).norm()).fold(0.0, f64::max) * 1.1;
    TriGeom { center, points, radius }
}

/// Area of a (sub-)triangle by quadrature in its mesh triangle's chart.
pub fn tri_area(mesh: &Triangulation, id: TriId, order: usize) -> f64 {
    integrate_on_tri(mesh, id, order, |_, da| da)
}

fn integrate_on_tri(mesh: &Triangulation, id: TriId, order: usize, mut f: impl FnMut(&Vec2, f64) -> f64) -> f64 {
    let chart = &mesh.triangles[id.root as usize].chart;
    let d = ref_vertices(mesh, id);
    let ref_area = 0.5 * ((d[1] - d[0]).perp(&(d[2] - d[0]))).abs();
    let rule = TriangleRule::new(order);
    rule.bary
        .iter()
        .zip(&rule.fractions)
        .map(|(b, w)| {
            let xi = d[0] * b[0] + d[1] * b[1] + d[2] * b[2];
            let da = w * ref_area * chart.area_element(&xi);
            f(&xi, da)
        })
        .sum()
}

/// Time rule on (a, b); intervals starting at 0 use s = bσ² to absorb s^{-1/2} singularities.
pub(crate) fn cell_time_rule(a: f64, b: f64, order: usize) -> Rule1D {
    if a == 0.0 {
        let g = Rule1D::gauss(0.0, 1.0, order);
        Rule1D {
            nodes: g.nodes.iter().map(|s| b * s * s).collect(),
            weights: g.nodes.iter().zip(&g.weights).map(|(s, w)| 2.0 * b * s * w).collect(),
        }
    } else {
        Rule1D::gauss(a, b, order)
    }
}

/// Evaluates (S) with cached cell integrals.
pub struct SuitabilityEvaluator<'a> {
    mesh: &'a Triangulation,
    ns: &'a NSData,
    config: PartitionConfig,
    r0: f64,
    root_neighbors: Vec<Vec<u32>>,
    /// Cell integrals per triangle, sorted by time index.
    cache: HashMap<TriId, Vec<(u64, f64)>>,
    /// Areas of triangles in use.
    geom: HashMap<TriId, f64>,
}

impl<'a> SuitabilityEvaluator<'a> {
    pub fn new(mesh: &'a Triangulation, ns: &'a NSData, config: PartitionConfig, r0: f64) -> Self {
        let geos: Vec<TriGeom> = (0..mesh.triangles.len()).map(|i| tri_geom(mesh, TriId::root(i as u32))).collect();
        let dom = &mesh.domain;
        let root_neighbors = (0..geos.len())
            .into_par_iter()
            .map(|i| {
                (0..geos.len())
                    .filter(|&j| {
                        dom.distance(&geos[i].center, &geos[j].center)
                            <= geos[i].radius + geos[j].radius + 2.0 * r0 * 1.01
                    })
                    .map(|j| j as u32)
                    .collect()
            })
            .collect();
        SuitabilityEvaluator { mesh, ns, config, r0, root_neighbors, cache: HashMap::new(), geom: HashMap::new() }
    }

    fn geometry(&mut self, ids: &[TriId]) {
        let mesh = self.mesh;
        let todo: Vec<TriId> = ids.iter().copied().filter(|i| !self.geom.contains_key(i)).collect();
        let computed: Vec<_> = todo.par_iter().map(|&id| (id, tri_area(mesh, id, 4))).collect();
        self.geom.extend(computed);
    }

    /// Same-level triangles whose barycenter or a vertex lies within 2r_k of x̂.
    fn neighbors(&self, id: TriId) -> Vec<TriId> {
        let dom = &self.mesh.domain;
        let xh = tri_geom(self.mesh, id).center;
        let reach = 2.0 * self.r0 * 0.5f64.powi(id.level as i32);
        let mut out = Vec::new();
        let mut stack: Vec<TriId> = self.root_neighbors[id.root as usize].iter().map(|&r| TriId::root(r)).collect();
        while let Some(n) = stack.pop() {
            let g = tri_geom(self.mesh, n);
            if dom.distance(&xh, &g.center) > reach + g.radius + 1e-12 {
                continue;
            }
            if n.level == id.level {
                let hit = std::iter::once(&g.center)
                    .chain(g.points.iter())
                    .any(|p| dom.distance(&xh, p) <= reach);
                if hit {
                    out.push(n);
                }
            } else {
                stack.extend((0..4).map(|c| n.child(c)));
            }
        }
        out.sort();
        out
    }

    // ∫ over (j r², (j+1) r²) × tri × (0, 2r) of |∇u|² + |f|^{4/3} in unit-viscosity variables.
    fn cell_integral(mesh: &Triangulation, ns: &NSData, id: TriId, j: u64, r0: f64, order: usize) -> f64 {
        let r = r0 * 0.5f64.powi(id.level as i32);
        let nu = ns.viscosity;
        let chart = &mesh.triangles[id.root as usize].chart;
        let tr = cell_time_rule(j as f64 * r * r, (j + 1) as f64 * r * r, order);
        let zr = Rule1D::gauss(0.0, 2.0 * r, order);
        let force_zero = ns.force.is_zero();
        integrate_on_tri(mesh, id, order, |xi, da| {
            let x0 = chart.map(xi);
            let n = chart.normal(xi);
            let mut s = 0.0;
            for (z, wz) in zr.nodes.iter().zip(&zr.weights) {
                let x = x0 - *z * n;
                for (ts, wt) in tr.nodes.iter().zip(&tr.weights) {
                    let t = ts / nu;
                    let mut g = ns.velocity.gradient(t, &x).norm_squared() / (nu * nu);
                    if !force_zero {
                        g += (ns.force.value(t, &x).norm() / (nu * nu)).powf(4.0 / 3.0);
                    }
                    s += wz * wt * g;
                }
            }
            s * da
        })
    }

    fn ensure(&mut self, mut need: HashMap<TriId, Vec<u64>>) {
        let (mesh, ns, r0, order) = (self.mesh, self.ns, self.r0, self.config.order);
        let mut todo = Vec::new();
        for (n, js) in need.iter_mut() {
            js.sort_unstable();
            js.dedup();
            let have = self.cache.get(n);
            for &j in js.iter() {
                if have.is_none_or(|v| v.binary_search_by_key(&j, |e| e.0).is_err()) {
                    todo.push((*n, j));
                }
            }
        }
        let vals: Vec<_> = todo
            .par_iter()
            .map(|&(id, j)| (id, j, Self::cell_integral(mesh, ns, id, j, r0, order)))
            .collect();
        for (id, j, v) in vals {
            self.cache.entry(id).or_default().push((j, v));
        }
        for n in need.keys() {
            if let Some(v) = self.cache.get_mut(n) {
                v.sort_unstable_by_key(|e| e.0);
            }
        }
    }

    /// Evaluates every cell of one level; they must share the level.
    pub fn evaluate(&mut self, cells: &[SpacetimeCell]) -> Vec<(bool, f64)> {
        // Cells on one triangle share its neighbour list.
        let mut by_tri: HashMap<TriId, Vec<u64>> = HashMap::new();
        for c in cells {
            by_tri.entry(c.tri).or_default().push(c.j);
        }
        let tris: Vec<TriId> = by_tri.keys().copied().collect();
        let nbrs: HashMap<TriId, Vec<TriId>> = tris.par_iter().map(|&t| (t, self.neighbors(t))).collect();
        let mut need: HashMap<TriId, Vec<u64>> = HashMap::new();
        for (t, js) in &by_tri {
            let mut w: Vec<u64> = js.iter().flat_map(|&j| j.saturating_sub(3)..=j).collect();
            w.sort_unstable();
            w.dedup();
            for n in &nbrs[t] {
                need.entry(*n).or_default().extend_from_slice(&w);
            }
        }
        let ids: Vec<TriId> = need.keys().copied().collect();
        self.geometry(&ids);
        self.ensure(need);
        let c0 = self.config.c0();
        cells
            .par_iter()
            .map(|c| {
                let r = c.r_k;
                let j_lo = c.j.saturating_sub(3);
                let mut total = 0.0;
                let mut area = 0.0;
                for n in &nbrs[&c.tri] {
                    area += self.geom[n];
                    for jj in j_lo..=c.j {
                        total += self.cached(n, jj);
                    }
                }
                let window = (c.j + 1 - j_lo) as f64 * r * r;
                let avg = total / (window * area * 2.0 * r);
                (c.j >= 3 && avg <= c0 * r.powi(-4), avg)
            })
            .collect()
    }

    fn cached(&self, n: &TriId, j: u64) -> f64 {
        let v = &self.cache[n];
        v[v.binary_search_by_key(&j, |e| e.0).expect("cell integral was computed")].1
    }
}

/// (S) for one cell, from scratch.
pub fn suitability_test(
    mesh: &Triangulation,
    r0: f64,
    cell: &SpacetimeCell,
    ns: &NSData,
    config: &PartitionConfig,
) -> (bool, f64) {
    SuitabilityEvaluator::new(mesh, ns, *config, r0).evaluate(std::slice::from_ref(cell))[0]
}

/// The finished partition; leaves generate the σ-algebra.
#[derive(Debug, Clone)]
pub struct PartitionTree {
    /// Every evaluated cell, level by level.
    pub cells: Vec<SpacetimeCell>,
    /// Indices into `cells` of suitable and unresolved cells.
    pub leaves: Vec<usize>,
    pub delta: f64,
    pub nu: f64,
    pub k: u32,
    pub r0: f64,
    /// Final time in rescaled units.
    pub t_final: f64,
    pub max_depth: u8,
    pub config: PartitionConfig,
    pub mesh: Arc<Triangulation>,
    leaf_index: HashMap<(TriId, u64), usize>,
    refined: HashSet<(TriId, u64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelCount {
    pub level: u8,
    pub suitable: usize,
    pub refined: usize,
    pub unresolved: usize,
}

/// Breadth-first refinement of non-suitable cells into 16 children until suitable or max_depth.
pub fn refine_to_suitable(
    init: &InitialPartition,
    ns: &NSData,
    config: &PartitionConfig,
) -> Result<PartitionTree, PartitionError> {
    config.validate()?;
    let mesh = init.mesh.clone();
    let mut ev = SuitabilityEvaluator::new(&mesh, ns, *config, init.r0);
    let mut active = init.roots.clone();
    let mut cells = Vec::new();
    for level in 0..=config.max_depth {
        if active.is_empty() {
            break;
        }
        let res = ev.evaluate(&active);
        // Cell integrals of past levels are not needed again.
        ev.cache.retain(|k, _| k.level >= level);
        ev.geom.retain(|k, _| k.level >= level);
        let mut next = Vec::new();
        for (mut c, (ok, avg)) in active.into_iter().zip(res) {
            c.suitability_value = avg;
            c.status = if ok {
                CellStatus::Suitable
            } else if level == config.max_depth {
                CellStatus::Unresolved
            } else {
                next.extend(c.children(init.r0));
                CellStatus::Refined
            };
            cells.push(c);
        }
        active = next;
    }
    Ok(PartitionTree::from_cells(cells, init, ns.viscosity, *config))
}

impl PartitionTree {
    pub fn from_cells(cells: Vec<SpacetimeCell>, init: &InitialPartition, nu: f64, config: PartitionConfig) -> Self {
        let mut t = PartitionTree {
            cells,
            leaves: Vec::new(),
            delta: init.delta,
            nu,
            k: init.k,
            r0: init.r0,
            t_final: init.t_final,
            max_depth: config.max_depth,
            config,
            mesh: init.mesh.clone(),
            leaf_index: HashMap::new(),
            refined: HashSet::new(),
        };
        t.reindex();
        t
    }

    /// Rebuilds lookup tables after `cells` were edited.
    pub fn reindex(&mut self) {
        self.leaves = (0..self.cells.len()).filter(|&i| self.cells[i].is_leaf()).collect();
        self.leaf_index = self.leaves.iter().enumerate().map(|(n, &i)| (self.cells[i].key(), n)).collect();
        self.refined = self.cells.iter().filter(|c| !c.is_leaf()).map(|c| c.key()).collect();
    }

    pub fn lineage(&self) -> String {
        self.mesh.lineage()
    }

    pub fn leaf(&self, n: usize) -> &SpacetimeCell {
        &self.cells[self.leaves[n]]
    }

    pub fn unresolved(&self) -> usize {
        self.leaves.iter().filter(|&&i| self.cells[i].status == CellStatus::Unresolved).count()
    }

    pub fn level_counts(&self) -> Vec<LevelCount> {
        let mut v: Vec<LevelCount> = (0..=self.max_depth)
            .map(|level| LevelCount { level, suitable: 0, refined: 0, unresolved: 0 })
            .collect();
        for c in &self.cells {
            let e = &mut v[c.level as usize];
            match c.status {
                CellStatus::Suitable => e.suitable += 1,
                CellStatus::Refined => e.refined += 1,
                CellStatus::Unresolved => e.unresolved += 1,
            }
        }
        v.retain(|e| e.suitable + e.refined + e.unresolved > 0);
        v
    }

    /// Original-time interval of a cell.
    pub fn physical_interval(&self, c: &SpacetimeCell) -> (f64, f64) {
        (c.time_interval.0 / self.nu, c.time_interval.1 / self.nu)
    }

    /// Spacetime measure of a cell in original time units.
    pub fn measure(&self, c: &SpacetimeCell) -> f64 {
        (c.time_interval.1 - c.time_interval.0) / self.nu * tri_area(&self.mesh, c.tri, 4)
    }

    /// |Σ leaf measures − T|∂Ω|| / T|∂Ω|.
    pub fn coverage_residual(&self) -> f64 {
        let total: f64 = self.leaves.par_iter().map(|&i| self.measure(&self.cells[i])).collect::<Vec<f64>>().iter().sum::<f64>();
        let want = self.t_final / self.nu * self.mesh.total_area;
        (total - want).abs() / want
    }

    /// Leaf containing the point with mesh triangle `root`, chart coordinates ξ and rescaled time s.
    pub fn locate(&self, root: u32, xi: &Vec2, s: f64) -> Option<usize> {
        let mut r2 = self.r0 * self.r0;
        let mut key = (TriId::root(root), (s / r2).floor().max(0.0) as u64);
        let mut verts = self.mesh.triangles.get(root as usize)?.domain();
        loop {
            if let Some(&n) = self.leaf_index.get(&key) {
                return Some(n);
            }
            if !self.refined.contains(&key) {
                return None;
            }
            let kids = midpoint_children(&verts);
            let c = (0..4)
                .max_by(|&a, &b| {
                    let ma = barycentric(&kids[a], xi).iter().cloned().fold(f64::INFINITY, f64::min);
                    let mb = barycentric(&kids[b], xi).iter().cloned().fold(f64::INFINITY, f64::min);
                    ma.total_cmp(&mb)
                })
                .unwrap();
            verts = kids[c];
            let start = key.1 as f64 * r2;
            r2 *= 0.25;
            let m = ((s - start) / r2).floor().clamp(0.0, 3.0) as u64;
            key = (key.0.child(c as u8), 4 * key.1 + m);
        }
    }

    /// Number of leaves containing the point, by brute-force scan.
    pub fn membership_count(&self, root: u32, xi: &Vec2, s: f64) -> usize {
        self.leaves
            .par_iter()
            .filter(|&&i| {
                let c = &self.cells[i];
                if c.tri.root != root || s < c.time_interval.0 || s >= c.time_interval.1 {
                    return false;
                }
                let v = ref_vertices(&self.mesh, c.tri);
                barycentric(&v, xi).iter().all(|&l| l >= 0.0)
            })
            .count()
    }

    /// Integers l with 4^{−l}T ≤ δ² that the depth-capped tree resolves: K ≤ l < K + max_depth.
    pub fn admissible_levels(&self) -> std::ops::Range<u32> {
        self.k..self.k + self.max_depth as u32
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "lineage": self.lineage(),
            "delta": self.delta,
            "nu": self.nu,
            "K": self.k,
            "r0": self.r0,
            "t_final_rescaled": self.t_final,
            "max_depth": self.max_depth,
            "levels": self.level_counts(),
            "leaves": self.leaves.iter().map(|&i| {
                let c = &self.cells[i];
                serde_json::json!({
                    "level": c.level,
                    "time_interval": self.physical_interval(c),
                    "triangle": {"root": c.tri.root, "path": c.tri.path},
                    "status": c.status,
                    "suitability_value": c.suitability_value,
                })
            }).collect::<Vec<_>>(),
        })
    }
}

/// Whether every leaf lies inside or outside (0, 4^{−l−1}T) × ∂Ω.
pub fn slab_measurability_check(tree: &PartitionTree, l: u32) -> Result<bool, PartitionError> {
    if 0.25f64.powi(l as i32) * tree.t_final > tree.delta * tree.delta * (1.0 + 1e-12) {
        return Err(PartitionError::Contract(format!("l = {l} violates 4^(-l) T ≤ δ²")));
    }
    if l > 60 || tree.k as usize + tree.max_depth as usize > 60 {
        return Err(PartitionError::Contract("levels beyond 60 are not representable".into()));
    }
    // Slab end is 4^{K−l} r₀²; a level-k leaf is (j, j+1)·r₀² 4^{−k}.
    let p = |e: u32| 4u128.pow(e);
    Ok(tree.leaves.iter().all(|&i| {
        let c = &tree.cells[i];
        let lhs_in = (c.j as u128 + 1) * p(l);
        let lhs_out = c.j as u128 * p(l);
        let rhs = p(tree.k + c.level as u32);
        lhs_in <= rhs || lhs_out >= rhs
    }))
}

/// Per-leaf averages of a boundary trace.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseBoundaryField {
    pub lineage: String,
    pub values: Vec<Vec3>,
    /// Trace measure falling in each leaf.
    pub weights: Vec<f64>,
}

impl PiecewiseBoundaryField {
    /// Measure-weighted average over the leaves inside `node`.
    pub fn average_over(&self, tree: &PartitionTree, node: &SpacetimeCell) -> Vec3 {
        let (mut s, mut w) = (Vec3::zeros(), 0.0);
        for (n, &i) in tree.leaves.iter().enumerate() {
            if node.contains_cell(&tree.cells[i]) {
                let m = tree.measure(&tree.cells[i]);
                s += m * self.values[n];
                w += m;
            }
        }
        s / w
    }
}

fn check_lineage(trace: &BoundaryTrace, tree: &PartitionTree) -> Result<(), PartitionError> {
    if trace.lineage != tree.lineage() {
        return Err(PartitionError::Contract(format!(
            "trace lineage {} does not match tree lineage {}",
            trace.lineage,
            tree.lineage()
        )));
    }
    Ok(())
}

/// E[trace | F]: per-leaf weighted averages.
pub fn conditional_expectation(trace: &BoundaryTrace, tree: &PartitionTree) -> Result<PiecewiseBoundaryField, PartitionError> {
    check_lineage(trace, tree)?;
    let n = tree.leaves.len();
    let homes: Vec<Option<usize>> = trace
        .samples
        .par_iter()
        .map(|s| tree.locate(s.root, &s.xi(), s.t * tree.nu))
        .collect();
    let mut sums = vec![Vec3::zeros(); n];
    let mut weights = vec![0.0; n];
    for (s, h) in trace.samples.iter().zip(homes) {
        let h = h.ok_or_else(|| PartitionError::Contract(format!("sample at t = {} lies in no leaf", s.t)))?;
        sums[h] += s.weight * s.value();
        weights[h] += s.weight;
    }
    if let Some(e) = weights.iter().position(|&w| w <= 0.0) {
        return Err(PartitionError::Contract(format!("leaf {e} has no trace samples")));
    }
    let values = sums.iter().zip(&weights).map(|(s, w)| s / *w).collect();
    Ok(PiecewiseBoundaryField { lineage: trace.lineage.clone(), values, weights })
}

/// Direct weighted trace average over a cell.
pub fn trace_average(trace: &BoundaryTrace, tree: &PartitionTree, node: &SpacetimeCell) -> Vec3 {
    let nodes = tree.cell_samples(trace, node);
    let w: f64 = nodes.iter().map(|s| s.weight).sum();
    nodes.iter().fold(Vec3::zeros(), |a, s| a + s.weight * s.value()) / w
}

impl PartitionTree {
    fn cell_samples<'t>(&self, trace: &'t BoundaryTrace, node: &SpacetimeCell) -> Vec<&'t TraceSample> {
        let v = ref_vertices(&self.mesh, node.tri);
        trace
            .samples
            .iter()
            .filter(|s| {
                let st = s.t * self.nu;
                s.root == node.tri.root
                    && st >= node.time_interval.0
                    && st < node.time_interval.1
                    && barycentric(&v, &s.xi()).iter().all(|&l| l >= 0.0)
            })
            .collect()
    }
}

/// A boundary quantity sampled with a Gauss rule inside every leaf.
pub fn trace_on_tree(
    tree: &PartitionTree,
    order: usize,
    f: impl Fn(f64, &Vec3) -> Vec3 + Sync,
) -> BoundaryTrace {
    let mesh = &tree.mesh;
    let rule = TriangleRule::new(order);
    let samples = tree
        .leaves
        .par_iter()
        .flat_map_iter(|&i| {
            let c = &tree.cells[i];
            let chart = &mesh.triangles[c.tri.root as usize].chart;
            let d = ref_vertices(mesh, c.tri);
            let ref_area = 0.5 * ((d[1] - d[0]).perp(&(d[2] - d[0]))).abs();
            let (a, b) = tree.physical_interval(c);
            let tr = cell_time_rule(a, b, order);
            let mut v = Vec::with_capacity(rule.len() * tr.len());
            for (bc, w) in rule.bary.iter().zip(&rule.fractions) {
                let xi = d[0] * bc[0] + d[1] * bc[1] + d[2] * bc[2];
                let x = chart.map(&xi);
                let da = w * ref_area * chart.area_element(&xi);
                for (t, wt) in tr.nodes.iter().zip(&tr.weights) {
                    v.push(TraceSample { root: c.tri.root, xi: xi.into(), t: *t, weight: da * wt, value: f(*t, &x).into() });
                }
            }
            v
        })
        .collect();
    BoundaryTrace { lineage: tree.lineage(), final_time: tree.t_final / tree.nu, samples }
}

/// curl u^ν sampled inside every leaf.
pub fn vorticity_trace_on_tree(ns: &NSData, tree: &PartitionTree, order: usize) -> BoundaryTrace {
    trace_on_tree(tree, order, |t, x| curl(&ns.velocity.gradient(t, x)))
}

pub type ScalarFn = dyn Fn(f64, &Vec3) -> f64 + Send + Sync;

/// A C¹ scalar on (0, T) × ∂Ω with known sup norms of ∂_tφ and the tangential gradient.
pub struct BoundaryScalar {
    pub value: Box<ScalarFn>,
    pub dt_sup: f64,
    pub grad_sup: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillationReport {
    pub measured: f64,
    pub bound: f64,
    pub violations: usize,
}

/// sup |φ − E[φ|F]| on leaf sample points against δ(δ/ν ‖∂_tφ‖ + ‖∇φ‖).
pub fn oscillation_margin(phi: &BoundaryScalar, tree: &PartitionTree, nu: f64, delta: f64) -> OscillationReport {
    let bound = delta * (delta / nu * phi.dt_sup + phi.grad_sup);
    let mesh = &tree.mesh;
    let rule = TriangleRule::new(3);
    let per_leaf: Vec<(f64, f64)> = tree
        .leaves
        .par_iter()
        .map(|&i| {
            let c = &tree.cells[i];
            let chart = &mesh.triangles[c.tri.root as usize].chart;
            let d = ref_vertices(mesh, c.tri);
            let (a, b) = tree.physical_interval(c);
            let tr = Rule1D::gauss(a, b, 3);
            let (mut s, mut w) = (0.0, 0.0);
            for (bc, wf) in rule.bary.iter().zip(&rule.fractions) {
                let xi = d[0] * bc[0] + d[1] * bc[1] + d[2] * bc[2];
                let x = chart.map(&xi);
                let da = wf * chart.area_element(&xi);
                for (t, wt) in tr.nodes.iter().zip(&tr.weights) {
                    s += da * wt * (phi.value)(*t, &x);
                    w += da * wt;
                }
            }
            let mean = s / w;
            let probes = [
                d[0], d[1], d[2],
                (d[0] + d[1]) * 0.5, (d[1] + d[2]) * 0.5, (d[2] + d[0]) * 0.5,
                (d[0] + d[1] + d[2]) / 3.0,
            ];
            let (mut worst, mut scale) = (0.0f64, mean.abs());
            for p in probes {
                let x = chart.map(&p);
                for t in [a, 0.5 * (a + b), b] {
                    let v = (phi.value)(t, &x);
                    worst = worst.max((v - mean).abs());
                    scale = scale.max(v.abs());
                }
            }
            (worst, scale)
        })
        .collect();
    let measured = per_leaf.iter().map(|p| p.0).fold(0.0, f64::max);
    // Rounding in the leaf mean is not an oscillation.
    let violations = per_leaf.iter().filter(|&&(m, s)| m > bound + 1e-12 * s).count();
    OscillationReport { measured, bound, violations }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellVorticity {
    /// Average of ω^ν over the cell.
    pub average: [f64; 3],
    /// r² |average of ω| in unit-viscosity variables (canonically scaled).
    pub scaled_average: f64,
    /// (r⁻¹ ∫∫ |∇u|²)^{1/2} over the look-back region, unit-viscosity variables.
    pub scaled_gradient_norm: f64,
    /// scaled_average / scaled_gradient_norm when the latter is positive.
    pub implied_constant: Option<f64>,
    /// The look-back window was cut at t = 0.
    pub clipped: bool,
}

/// Average boundary vorticity on a cell with the gradient norm of its extension region.
pub fn cell_average_vorticity(
    tree: &PartitionTree,
    cell: &SpacetimeCell,
    trace: &BoundaryTrace,
    ns: &NSData,
) -> Result<CellVorticity, PartitionError> {
    check_lineage(trace, tree)?;
    if tree.cell_samples(trace, cell).is_empty() {
        return Err(PartitionError::Contract("cell holds no trace samples".into()));
    }
    let avg = trace_average(trace, tree, cell);
    let r = cell.r_k;
    let nu = tree.nu;
    let mut ev = SuitabilityEvaluator::new(&tree.mesh, ns, PartitionConfig { order: tree.config.order.max(4), ..tree.config }, tree.r0);
    let nbrs = ev.neighbors(cell.tri);
    let j_lo = cell.j.saturating_sub(3);
    let need: HashMap<TriId, Vec<u64>> = nbrs.iter().map(|n| (*n, (j_lo..=cell.j).collect())).collect();
    let gradient_only = NSData { force: Arc::new(crate::fields::ZeroField { t_max: ns.final_time() }), ..ns.clone() };
    ev.ns = &gradient_only;
    ev.ensure(need);
    let integral: f64 = nbrs.iter().flat_map(|n| (j_lo..=cell.j).map(|jj| ev.cached(n, jj))).sum();
    let scaled_average = r * r * avg.norm() / nu;
    let scaled_gradient_norm = (integral / r).sqrt();
    Ok(CellVorticity {
        average: avg.into(),
        scaled_average,
        scaled_gradient_norm,
        implied_constant: (scaled_gradient_norm > 0.0).then(|| scaled_average / scaled_gradient_norm),
        clipped: cell.j < 3,
    })
}
