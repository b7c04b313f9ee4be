//! Graph-based depth correction.
//!
//! Pixels of an initial depth map (on a strided grid) are lifted to 3D and linked to their `k`
//! nearest neighbors. Each node gets affine reconstruction weights `w_ij` (`Σ_j w_ij = 1`) from
//! its neighborhood. The corrected depths solve
//!
//! ```text
//! min_z  Σ_i (z_i − Σ_j w_ij z_j)²  +  s · Σ_{a ∈ anchors} (z_a − Z_a)²
//! ```
//!
//! where anchors are nodes within one pixel of a projected LiDAR return and `Z_a` its depth.
//! `s = ∞` pins the anchors (variable elimination). Only depth is corrected; the remaining
//! pixels are rescaled by the interpolated per-node correction ratio.

mod kdtree;
pub mod solver;

use nalgebra::{DMatrix, DVector, Point3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{project, CameraIntrinsics, DepthMap, PointCloud};

pub use kdtree::KdTree;
pub use solver::{pcg, CgStats};

/// Graph construction and solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GdcConfig {
    pub k: usize,
    pub stride: usize,
    /// Ridge added to the local Gram matrix, relative to its trace.
    pub ridge: f64,
    /// Weight of the anchor term; `inf` pins anchors exactly.
    pub anchor_strength: f64,
    /// Target for `‖normal-equation residual‖ / ‖rhs‖`.
    pub tolerance: f64,
    /// Iteration budget as a multiple of the node count.
    pub max_iter_factor: usize,
}

impl Default for GdcConfig {
    fn default() -> Self {
        Self {
            k: 10,
            stride: 2,
            ridge: 1e-4,
            anchor_strength: f64::INFINITY,
            tolerance: 1e-10,
            max_iter_factor: 10,
        }
    }
}

/// A graph vertex: a lifted pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphNode {
    pub pixel: (usize, usize),
    pub point: Point3<f64>,
}

impl GraphNode {
    pub fn depth(&self) -> f64 {
        self.point.z
    }
}

/// The raster a graph was sampled from, needed to produce a full-resolution output.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub initial: DepthMap,
    pub intrinsics: CameraIntrinsics,
    pub stride: usize,
    /// Node index of each strided grid position, if that pixel had depth.
    grid: Vec<Option<usize>>,
    grid_w: usize,
}

impl Raster {
    fn node_at(&self, gx: usize, gy: usize) -> Option<usize> {
        self.grid.get(gy * self.grid_w + gx).copied().flatten()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthGraph {
    nodes: Vec<GraphNode>,
    /// Row `i` of `W` is `cols[offsets[i]..offsets[i + 1]]` with values `vals[..]` (CSR).
    offsets: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    /// `(node, LiDAR depth)`, sorted by node.
    anchors: Vec<(usize, f64)>,
    raster: Option<Raster>,
}

impl DepthGraph {
    /// Assembles a graph from explicit parts, validating the structural invariants.
    pub fn from_parts(
        nodes: Vec<GraphNode>,
        neighbors: Vec<Vec<usize>>,
        weights: Vec<Vec<f64>>,
        mut anchors: Vec<(usize, f64)>,
    ) -> Result<Self> {
        let m = nodes.len();
        if neighbors.len() != m || weights.len() != m {
            return Err(Error::param("neighbor/weight lists must have one entry per node"));
        }
        for (i, (nb, w)) in neighbors.iter().zip(&weights).enumerate() {
            if nb.len() != w.len() {
                return Err(Error::param(format!("node {i}: neighbor and weight counts differ")));
            }
            if nb.iter().any(|j| *j >= m || *j == i) {
                return Err(Error::param(format!("node {i}: invalid neighbor index")));
            }
            let s: f64 = w.iter().sum();
            if !nb.is_empty() && (s - 1.0).abs() > 1e-9 {
                return Err(Error::param(format!("node {i}: weights sum to {s}, not 1")));
            }
        }
        anchors.sort_by_key(|a| a.0);
        anchors.dedup_by_key(|a| a.0);
        for &(a, z) in &anchors {
            if a >= m || !(z > 0.0 && z.is_finite()) {
                return Err(Error::param(format!("invalid anchor ({a}, {z})")));
            }
        }
        let mut offsets = Vec::with_capacity(m + 1);
        offsets.push(0);
        for nb in &neighbors {
            offsets.push(offsets.last().unwrap() + nb.len());
        }
        Ok(Self {
            nodes,
            offsets,
            cols: neighbors.concat(),
            vals: weights.concat(),
            anchors,
            raster: None,
        })
    }

    pub fn nodes(&self) -> &[GraphNode] {
        &self.nodes
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.cols[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn weights(&self, i: usize) -> &[f64] {
        &self.vals[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn anchors(&self) -> &[(usize, f64)] {
        &self.anchors
    }

    pub fn raster(&self) -> Option<&Raster> {
        self.raster.as_ref()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn initial_depths(&self) -> Vec<f64> {
        self.nodes.iter().map(GraphNode::depth).collect()
    }

    /// `z_i − Σ_j w_ij z_j` for every node.
    pub fn reconstruction_residuals(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.apply_l(z, &mut out);
        out
    }

    /// `out = (I − W) v`
    fn apply_l(&self, v: &[f64], out: &mut [f64]) {
        for i in 0..self.nodes.len() {
            let mut s = v[i];
            for (j, w) in self.neighbors(i).iter().zip(self.weights(i)) {
                s -= w * v[*j];
            }
            out[i] = s;
        }
    }

    /// `out = (I − W)ᵀ t`
    fn apply_lt(&self, t: &[f64], out: &mut [f64]) {
        out.copy_from_slice(t);
        for (i, ti) in t.iter().enumerate() {
            for (j, w) in self.neighbors(i).iter().zip(self.weights(i)) {
                out[*j] -= w * ti;
            }
        }
    }

    /// Diagonal of `(I − W)ᵀ(I − W)`.
    fn normal_diagonal(&self) -> Vec<f64> {
        let mut d = vec![1.0; self.len()];
        for i in 0..self.nodes.len() {
            for (j, w) in self.neighbors(i).iter().zip(self.weights(i)) {
                d[*j] += w * w;
            }
        }
        d
    }

    /// Dense normal equations `(A, rhs)` of the correction problem for finite anchor strength
    /// `s`. Intended for small graphs and oracle checks.
    pub fn dense_normal_equations(&self, anchor_strength: f64) -> (DMatrix<f64>, DVector<f64>) {
        let m = self.len();
        let mut l = DMatrix::<f64>::identity(m, m);
        for i in 0..m {
            for (j, w) in self.neighbors(i).iter().zip(self.weights(i)) {
                l[(i, *j)] -= *w;
            }
        }
        let mut a = l.transpose() * &l;
        let mut rhs = DVector::zeros(m);
        for &(i, z) in &self.anchors {
            a[(i, i)] += anchor_strength;
            rhs[i] += anchor_strength * z;
        }
        (a, rhs)
    }

    /// Dense direct solution with hard anchors. Intended for small graphs and oracle checks.
    pub fn dense_solve_hard(&self) -> Result<Vec<f64>> {
        let m = self.len();
        let is_anchor = self.anchor_flags();
        let free: Vec<usize> = (0..m).filter(|i| !is_anchor[*i]).collect();
        let mut l = DMatrix::<f64>::identity(m, m);
        for i in 0..m {
            for (j, w) in self.neighbors(i).iter().zip(self.weights(i)) {
                l[(i, *j)] -= *w;
            }
        }
        let mut za = DVector::zeros(m);
        for &(i, z) in &self.anchors {
            za[i] = z;
        }
        let b = -(&l * &za);
        let lf = l.select_columns(&free);
        let a = lf.transpose() * &lf;
        let rhs = lf.transpose() * b;
        let sol = a
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Numerical("dense normal matrix is singular".into()))?;
        let mut z = za.as_slice().to_vec();
        for (k, i) in free.iter().enumerate() {
            z[*i] = sol[k];
        }
        Ok(z)
    }

    fn anchor_flags(&self) -> Vec<bool> {
        let mut f = vec![false; self.len()];
        for &(i, _) in &self.anchors {
            f[i] = true;
        }
        f
    }
}

/// Affine reconstruction weights of `center` from `neighbors`.
///
/// Solves the ridge-regularized local Gram system of the 3D offsets (trace-relative ridge),
/// normalizes to unit sum, then applies the smallest correction that makes the weights
/// reproduce the center depth exactly. The correction is skipped when the neighbors share one
/// depth (nothing to fix, or nothing fixable) or when it would exceed 1 in any weight.
pub fn reconstruction_weights(center: &Point3<f64>, neighbors: &[Point3<f64>], ridge: f64) -> Vec<f64> {
    let k = neighbors.len();
    if k == 0 {
        return Vec::new();
    }
    let offsets: Vec<_> = neighbors.iter().map(|p| p - center).collect();
    let mut gram = DMatrix::<f64>::from_fn(k, k, |a, b| offsets[a].dot(&offsets[b]));
    let trace = gram.trace();
    let eps = if trace > 0.0 { ridge * trace } else { 1.0 };
    for a in 0..k {
        gram[(a, a)] += eps;
    }
    let ones = DVector::from_element(k, 1.0);
    let mut w = match gram.cholesky() {
        Some(ch) => ch.solve(&ones),
        None => ones.clone(),
    };
    let s = w.sum();
    if s.abs() < 1e-300 || !s.is_finite() {
        w = ones.clone();
    }
    let s = w.sum();
    w /= s;

    // Minimal-norm δ with Σδ = 0 and Σ δ_j z_j = z_c − Σ w_j z_j.
    let z: Vec<f64> = neighbors.iter().map(|p| p.z).collect();
    let zc = center.z;
    let residual = zc - z.iter().zip(w.iter()).map(|(a, b)| a * b).sum::<f64>();
    let mean_z = z.iter().sum::<f64>() / k as f64;
    let spread: f64 = z.iter().map(|v| (v - mean_z).powi(2)).sum();
    let scale = z.iter().map(|v| v * v).sum::<f64>().max(zc * zc);
    if residual != 0.0 && spread > 1e-20 * scale {
        // Row space of [1ᵀ; zᵀ] restricted to Σδ = 0 is spanned by (z − z̄).
        let coef = residual / spread;
        let delta: Vec<f64> = z.iter().map(|v| coef * (v - mean_z)).collect();
        if delta.iter().all(|d| d.abs() <= 1.0) {
            for (wi, d) in w.iter_mut().zip(&delta) {
                *wi += d;
            }
        }
    }
    w.as_slice().to_vec()
}

/// Builds the correction graph from an initial depth map and camera-frame LiDAR points.
pub fn build_graph(
    initial_depth: &DepthMap,
    intrinsics: &CameraIntrinsics,
    lidar: &PointCloud,
    config: &GdcConfig,
) -> Result<DepthGraph> {
    intrinsics.validate()?;
    if config.k < 3 {
        return Err(Error::param(format!("GDC needs k >= 3 (got {})", config.k)));
    }
    if config.stride == 0 {
        return Err(Error::param("GDC stride must be >= 1"));
    }
    let (w, h) = (initial_depth.width(), initial_depth.height());
    let s = config.stride;
    let grid_w = w.div_ceil(s);
    let grid_h = h.div_ceil(s);
    let mut grid = vec![None; grid_w * grid_h];
    let mut nodes = Vec::new();
    for gy in 0..grid_h {
        for gx in 0..grid_w {
            let (x, y) = (gx * s, gy * s);
            let d = initial_depth.get(x, y);
            if d > 0.0 {
                grid[gy * grid_w + gx] = Some(nodes.len());
                nodes.push(GraphNode {
                    pixel: (x, y),
                    point: intrinsics.backproject_pixel(x as f64, y as f64, d),
                });
            }
        }
    }
    if nodes.len() < config.k + 1 {
        return Err(Error::param(format!(
            "graph has {} nodes, needs at least k + 1 = {}",
            nodes.len(),
            config.k + 1
        )));
    }

    let points: Vec<Point3<f64>> = nodes.iter().map(|n| n.point).collect();
    let tree = KdTree::build(&points);
    let mut neighbors = Vec::with_capacity(nodes.len());
    let mut weights = Vec::with_capacity(nodes.len());
    let mut local = Vec::with_capacity(config.k);
    for i in 0..nodes.len() {
        let nb = tree.nearest_excluding(i, config.k);
        local.clear();
        local.extend(nb.iter().map(|j| points[*j]));
        weights.push(reconstruction_weights(&points[i], &local, config.ridge));
        neighbors.push(nb);
    }

    // Anchors: average LiDAR depth of the points within one pixel of a node.
    let mut sum = vec![0.0; nodes.len()];
    let mut count = vec![0u32; nodes.len()];
    for p in project(lidar, intrinsics)? {
        let gx = (p.u / s as f64).round();
        let gy = (p.v / s as f64).round();
        if gx < 0.0 || gy < 0.0 || gx >= grid_w as f64 || gy >= grid_h as f64 {
            continue;
        }
        let (gx, gy) = (gx as usize, gy as usize);
        let Some(node) = grid[gy * grid_w + gx] else { continue };
        let (nx, ny) = nodes[node].pixel;
        let dist = ((p.u - nx as f64).powi(2) + (p.v - ny as f64).powi(2)).sqrt();
        if dist <= 1.0 {
            sum[node] += p.z;
            count[node] += 1;
        }
    }
    let anchors = (0..nodes.len())
        .filter(|i| count[*i] > 0)
        .map(|i| (i, sum[i] / count[i] as f64))
        .collect();

    let mut graph = DepthGraph::from_parts(nodes, neighbors, weights, anchors)?;
    graph.raster = Some(Raster {
        initial: initial_depth.clone(),
        intrinsics: *intrinsics,
        stride: s,
        grid,
        grid_w,
    });
    Ok(graph)
}

/// Output of [`solve_correction`].
#[derive(Debug, Clone, PartialEq)]
pub struct Correction {
    /// Corrected depth per graph node.
    pub node_depth: Vec<f64>,
    /// Full-resolution corrected map, when the graph was built from a raster.
    pub dense: Option<DepthMap>,
    pub iterations: usize,
    /// Final `‖rhs − A z‖ / ‖rhs‖` of the normal equations.
    pub relative_residual: f64,
}

/// Solves the anchored correction problem with the default tolerance and budget.
pub fn solve_correction(graph: &DepthGraph, anchor_strength: f64) -> Result<Correction> {
    let cfg = GdcConfig::default();
    solve_correction_with(graph, anchor_strength, cfg.tolerance, cfg.max_iter_factor)
}

/// [`solve_correction`] with an explicit tolerance and iteration budget (`factor × nodes`).
pub fn solve_correction_with(
    graph: &DepthGraph,
    anchor_strength: f64,
    tolerance: f64,
    max_iter_factor: usize,
) -> Result<Correction> {
    if graph.anchors.is_empty() {
        return Err(Error::Unanchored);
    }
    if anchor_strength.is_nan() || anchor_strength < 0.0 {
        return Err(Error::param(format!("anchor strength must be >= 0 (got {anchor_strength})")));
    }
    if anchor_strength == 0.0 {
        return Err(Error::Unanchored);
    }
    let m = graph.len();
    let max_iter = max_iter_factor.saturating_mul(m).max(1);
    let initial = warm_start(graph);
    let (z, stats) = if anchor_strength.is_infinite() {
        solve_hard(graph, &initial, tolerance, max_iter)?
    } else {
        solve_soft(graph, &initial, anchor_strength, tolerance, max_iter)?
    };
    if let Some(bad) = z.iter().find(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("corrected depth is {bad}")));
    }
    let dense = graph.raster.as_ref().map(|r| densify(graph, r, &z)).transpose()?;
    Ok(Correction {
        node_depth: z,
        dense,
        iterations: stats.iterations,
        relative_residual: stats.relative_residual,
    })
}

/// Initial depths rescaled by the median anchor-to-initial ratio.
fn warm_start(graph: &DepthGraph) -> Vec<f64> {
    let mut z = graph.initial_depths();
    let mut ratios: Vec<f64> = graph.anchors.iter().map(|&(i, d)| d / z[i]).collect();
    ratios.sort_by(f64::total_cmp);
    let s = ratios[ratios.len() / 2];
    if s.is_finite() && s > 0.0 {
        z.iter_mut().for_each(|v| *v *= s);
    }
    z
}

fn solve_soft(
    graph: &DepthGraph,
    initial: &[f64],
    s: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, CgStats)> {
    let m = graph.len();
    let is_anchor = graph.anchor_flags();
    let mut rhs = vec![0.0; m];
    for &(i, z) in &graph.anchors {
        rhs[i] = s * z;
    }
    let mut diag = graph.normal_diagonal();
    for &(i, _) in &graph.anchors {
        diag[i] += s;
    }
    let mut tmp = vec![0.0; m];
    let apply = |v: &[f64], out: &mut [f64]| {
        graph.apply_l(v, &mut tmp);
        graph.apply_lt(&tmp, out);
        for i in 0..m {
            if is_anchor[i] {
                out[i] += s * v[i];
            }
        }
    };
    let mut z = initial.to_vec();
    let stats = pcg(apply, &rhs, &diag, &mut z, tol, max_iter)?;
    Ok((z, stats))
}

fn solve_hard(graph: &DepthGraph, initial: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, CgStats)> {
    let m = graph.len();
    let is_anchor = graph.anchor_flags();
    let free: Vec<usize> = (0..m).filter(|i| !is_anchor[*i]).collect();
    let mut full = vec![0.0; m];
    for &(i, z) in &graph.anchors {
        full[i] = z;
    }
    if free.is_empty() {
        return Ok((
            full,
            CgStats {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }
    // rhs = −L_fᵀ L_a z_a
    let mut t = vec![0.0; m];
    graph.apply_l(&full, &mut t);
    let mut back = vec![0.0; m];
    graph.apply_lt(&t, &mut back);
    let rhs: Vec<f64> = free.iter().map(|i| -back[*i]).collect();
    let diag_full = graph.normal_diagonal();
    let diag: Vec<f64> = free.iter().map(|i| diag_full[*i]).collect();

    let mut embed = vec![0.0; m];
    let mut tmp = vec![0.0; m];
    let mut out_full = vec![0.0; m];
    let apply = |v: &[f64], out: &mut [f64]| {
        for (k, i) in free.iter().enumerate() {
            embed[*i] = v[k];
        }
        graph.apply_l(&embed, &mut tmp);
        graph.apply_lt(&tmp, &mut out_full);
        for (k, i) in free.iter().enumerate() {
            out[k] = out_full[*i];
        }
    };
    let mut x: Vec<f64> = free.iter().map(|i| initial[*i]).collect();
    let stats = pcg(apply, &rhs, &diag, &mut x, tol, max_iter)?;
    for (k, i) in free.iter().enumerate() {
        full[*i] = x[k];
    }
    Ok((full, stats))
}

/// Multiplies the initial map by the bilinearly interpolated per-node ratio `z_new / z_init`.
fn densify(graph: &DepthGraph, raster: &Raster, z: &[f64]) -> Result<DepthMap> {
    let init = &raster.initial;
    let s = raster.stride;
    let (w, h) = (init.width(), init.height());
    let grid_h = raster.grid.len() / raster.grid_w;
    let ratio: Vec<f64> = graph
        .nodes
        .iter()
        .zip(z)
        .map(|(n, z)| z / n.depth())
        .collect();
    DepthMap::from_fn(w, h, |x, y| {
        let d = init.get(x, y);
        if d <= 0.0 {
            return 0.0;
        }
        let (gx0, gy0) = (x / s, y / s);
        let gx1 = (gx0 + 1).min(raster.grid_w - 1);
        let gy1 = (gy0 + 1).min(grid_h - 1);
        let fx = (x - gx0 * s) as f64 / s as f64;
        let fy = (y - gy0 * s) as f64 / s as f64;
        let taps = [
            (gx0, gy0, (1.0 - fx) * (1.0 - fy)),
            (gx1, gy0, fx * (1.0 - fy)),
            (gx0, gy1, (1.0 - fx) * fy),
            (gx1, gy1, fx * fy),
        ];
        let (mut acc, mut wsum) = (0.0, 0.0);
        for (gx, gy, wt) in taps {
            if wt == 0.0 {
                continue;
            }
            if let Some(n) = raster.node_at(gx, gy) {
                acc += wt * ratio[n];
                wsum += wt;
            }
        }
        if wsum > 0.0 {
            d * acc / wsum
        } else {
            d
        }
    })
}
