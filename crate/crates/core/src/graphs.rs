//! Graph carriers for the variational problem and the renewal walks:
//! truncated balls of the (d+1)-regular tree, the renewal unit with
//! tadpole loops, and the depth chain on `{0, ..., R+1}`.
//!
//! Vertices are indexed breadth-first from the root, so children of a
//! vertex occupy a contiguous index range and a ball of radius `R` is an
//! index-prefix of every larger ball with the same `d`.  All jump kernels
//! are stored as integer weights over a common denominator, which keeps
//! row sums exact and makes sampling a matter of drawing a uniform
//! integer below the denominator.

use crate::error::Error;
use crate::Result;

/// Largest vertex count a builder will accept by default.
pub const DEFAULT_VERTEX_CAP: u64 = 20_000_000;

/// Offspring number `d` of the (d+1)-regular tree; every vertex has
/// `d + 1` neighbours.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RegularTreeSpec {
    d: u32,
}

impl RegularTreeSpec {
    pub fn new(d: u32) -> Result<Self> {
        if d < 2 {
            return Err(Error::DegreeTooSmall(d));
        }
        Ok(RegularTreeSpec { d })
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    /// Common vertex degree `d + 1`.
    pub fn degree(&self) -> u32 {
        self.d + 1
    }

    /// |B_R| = 1 + (d+1)(d^R - 1)/(d - 1), computed exactly.
    pub fn ball_size(&self, radius: u32) -> u128 {
        let d = self.d as u128;
        1 + (d + 1) * (d.pow(radius) - 1) / (d - 1)
    }

    /// |∂B_r| = (d+1) d^(r-1) for r >= 1 and 1 for r = 0.
    pub fn sphere_size(&self, r: u32) -> u128 {
        let d = self.d as u128;
        if r == 0 {
            1
        } else {
            (d + 1) * d.pow(r - 1)
        }
    }
}

/// Undirected edge list of a graph together with per-vertex "exit"
/// multiplicities: edges that leave the vertex set and act as killing
/// (Dirichlet) terms in the energy.
#[derive(Clone, Debug)]
pub struct EdgeData {
    pub n: usize,
    pub pairs: Vec<(u32, u32)>,
    /// Number of exit edges per vertex, as a float weight.
    pub exit: Vec<f64>,
    /// Degree of each vertex within `pairs`.
    pub degree: Vec<u32>,
}

impl EdgeData {
    fn new(n: usize, pairs: Vec<(u32, u32)>, exit: Vec<f64>) -> Self {
        let mut degree = vec![0u32; n];
        for &(a, b) in &pairs {
            degree[a as usize] += 1;
            degree[b as usize] += 1;
        }
        EdgeData { n, pairs, exit, degree }
    }
}

/// One row of a jump kernel: integer `weights` over denominator `denom`,
/// so the row sums to one exactly by construction.
#[derive(Clone, Debug)]
pub struct KernelRow {
    pub targets: Vec<u32>,
    pub weights: Vec<u32>,
    pub denom: u32,
}

impl KernelRow {
    pub fn prob(&self, idx: usize) -> f64 {
        self.weights[idx] as f64 / self.denom as f64
    }

    /// Probability of jumping to `target`, accumulated over parallel edges.
    pub fn prob_to(&self, target: u32) -> f64 {
        let w: u32 = self
            .targets
            .iter()
            .zip(&self.weights)
            .filter(|(t, _)| **t == target)
            .map(|(_, w)| *w)
            .sum();
        w as f64 / self.denom as f64
    }

    pub fn weight_sum(&self) -> u32 {
        self.weights.iter().sum()
    }

    /// Maps a uniform draw in `0..denom` to the jump target.
    pub fn pick(&self, roll: u32) -> u32 {
        debug_assert!(roll < self.denom);
        let mut acc = 0u32;
        for (t, w) in self.targets.iter().zip(&self.weights) {
            acc += w;
            if roll < acc {
                return *t;
            }
        }
        unreachable!("kernel row weights do not cover the denominator")
    }
}

/// Ball of radius `R` around the root of the (d+1)-regular tree, with
/// exit-degree bookkeeping for the killing boundary.
#[derive(Clone, Debug)]
pub struct TruncatedTree {
    spec: RegularTreeSpec,
    radius: u32,
    depth: Vec<u32>,
    parent: Vec<u32>,
    child_lo: Vec<u32>,
    child_hi: Vec<u32>,
    exit_degree: Vec<u32>,
    /// First vertex index of each depth shell; length `radius + 2`.
    shell_start: Vec<u32>,
    edges: EdgeData,
}

const NO_PARENT: u32 = u32::MAX;

pub fn build_truncated_tree(d: u32, radius: u32) -> Result<TruncatedTree> {
    build_truncated_tree_capped(d, radius, DEFAULT_VERTEX_CAP)
}

pub fn build_truncated_tree_capped(d: u32, radius: u32, cap: u64) -> Result<TruncatedTree> {
    let spec = RegularTreeSpec::new(d)?;
    let needed = spec.ball_size(radius);
    if needed > cap as u128 {
        return Err(Error::InstanceTooLarge { d, radius, needed, cap });
    }
    let n = needed as usize;

    let mut depth = vec![0u32; n];
    let mut parent = vec![NO_PARENT; n];
    let mut child_lo = vec![0u32; n];
    let mut child_hi = vec![0u32; n];

    // Breadth-first layout: the root gets d+1 children, every later
    // vertex d, until the shell at distance `radius`.
    let mut next = 1u32;
    for v in 0..n as u32 {
        let dep = depth[v as usize];
        if dep < radius {
            let fanout = if v == 0 { d + 1 } else { d };
            child_lo[v as usize] = next;
            child_hi[v as usize] = next + fanout;
            for c in next..next + fanout {
                parent[c as usize] = v;
                depth[c as usize] = dep + 1;
            }
            next += fanout;
        } else {
            child_lo[v as usize] = next;
            child_hi[v as usize] = next;
        }
    }
    // Depths are non-decreasing along the layout, so the first index of
    // each shell is recovered by a reverse sweep.
    let mut shell_start = vec![n as u32; radius as usize + 2];
    for v in (0..n).rev() {
        shell_start[depth[v] as usize] = v as u32;
    }

    let exit_degree: Vec<u32> = (0..n)
        .map(|v| {
            let in_ball = (child_hi[v] - child_lo[v]) + u32::from(parent[v] != NO_PARENT);
            d + 1 - in_ball
        })
        .collect();

    let pairs: Vec<(u32, u32)> = (1..n as u32).map(|v| (parent[v as usize], v)).collect();
    let exit: Vec<f64> = exit_degree.iter().map(|&e| e as f64).collect();
    let edges = EdgeData::new(n, pairs, exit);

    Ok(TruncatedTree {
        spec,
        radius,
        depth,
        parent,
        child_lo,
        child_hi,
        exit_degree,
        shell_start,
        edges,
    })
}

impl TruncatedTree {
    pub fn n(&self) -> usize {
        self.depth.len()
    }

    pub fn d(&self) -> u32 {
        self.spec.d()
    }

    pub fn spec(&self) -> RegularTreeSpec {
        self.spec
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn depth(&self, v: u32) -> u32 {
        self.depth[v as usize]
    }

    pub fn depths(&self) -> &[u32] {
        &self.depth
    }

    pub fn parent(&self, v: u32) -> Option<u32> {
        let p = self.parent[v as usize];
        (p != NO_PARENT).then_some(p)
    }

    pub fn children(&self, v: u32) -> std::ops::Range<u32> {
        self.child_lo[v as usize]..self.child_hi[v as usize]
    }

    pub fn neighbours(&self, v: u32) -> impl Iterator<Item = u32> + '_ {
        self.parent(v).into_iter().chain(self.children(v))
    }

    /// Edges to vertices outside the ball; these kill the walk and act as
    /// diagonal terms in the Dirichlet energy.
    pub fn exit_degree(&self, v: u32) -> u32 {
        self.exit_degree[v as usize]
    }

    /// Index range of the shell at distance `r` from the root.
    pub fn shell(&self, r: u32) -> std::ops::Range<usize> {
        let lo = self.shell_start[r as usize] as usize;
        let hi = self.shell_start[r as usize + 1] as usize;
        lo..hi
    }

    /// Ball edges plus exit multiplicities, the carrier of the Dirichlet
    /// energy with killing outside the ball.
    pub fn dirichlet_edges(&self) -> &EdgeData {
        &self.edges
    }

    /// Distances from `start` to every vertex, through the ball only.
    pub fn distances_from(&self, start: u32) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.n()];
        let mut queue = std::collections::VecDeque::new();
        dist[start as usize] = 0;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            for w in self.neighbours(v) {
                if dist[w as usize] == u32::MAX {
                    dist[w as usize] = dist[v as usize] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// One line per vertex: `index depth parent child_list exit_degree`.
    pub fn to_adjacency_text(&self) -> String {
        let mut out = String::new();
        for v in 0..self.n() as u32 {
            out.push_str(&adjacency_line(
                v,
                self.depth(v),
                self.parent(v),
                self.children(v),
                self.exit_degree(v),
            ));
        }
        out
    }
}

fn adjacency_line(
    v: u32,
    depth: u32,
    parent: Option<u32>,
    children: impl Iterator<Item = u32>,
    exit: u32,
) -> String {
    let parent = parent.map_or("-".to_string(), |p| p.to_string());
    let kids: Vec<String> = children.map(|c| c.to_string()).collect();
    let kids = if kids.is_empty() { "-".to_string() } else { kids.join(",") };
    format!("{} {} {} {} {}\n", v, depth, parent, kids, exit)
}

/// Renewal unit: a rooted tree with offspring number `d` and depth
/// `R - 1`, a tadpole loop glued below every bottom leaf except the
/// star (the lexicographically last leaf, where the backbone continues),
/// and a wrap edge between the root and the star that closes the
/// periodised dynamics.
///
/// Core vertices come first in breadth-first order, tadpoles after them
/// in the order of their host leaves.  The boundary consists of the root
/// and all bottom leaves.
#[derive(Clone, Debug)]
pub struct UnitGraph {
    spec: RegularTreeSpec,
    radius: u32,
    n_core: usize,
    depth: Vec<u32>,
    parent: Vec<u32>,
    child_lo: Vec<u32>,
    child_hi: Vec<u32>,
    star: u32,
    /// Tadpole vertex attached to a core leaf, if any.
    tadpole_of: Vec<u32>,
    /// Host leaf of each tadpole, indexed from `n_core`.
    leaf_of_tadpole: Vec<u32>,
    boundary: Vec<bool>,
    hat: EdgeData,
    tilde: EdgeData,
    kernel: Vec<KernelRow>,
}

const NO_TADPOLE: u32 = u32::MAX;

pub fn build_unit_graph(d: u32, radius: u32) -> Result<UnitGraph> {
    build_unit_graph_capped(d, radius, DEFAULT_VERTEX_CAP)
}

pub fn build_unit_graph_capped(d: u32, radius: u32, cap: u64) -> Result<UnitGraph> {
    let spec = RegularTreeSpec::new(d)?;
    if radius < 2 {
        return Err(Error::UnitRadiusTooSmall(radius));
    }
    let du = d as u128;
    let n_core_big = (du.pow(radius) - 1) / (du - 1);
    let n_leaves_big = du.pow(radius - 1);
    let needed = n_core_big + n_leaves_big - 1;
    if needed > cap as u128 {
        return Err(Error::InstanceTooLarge { d, radius, needed, cap });
    }
    let n_core = n_core_big as usize;
    let n_tad = (n_leaves_big - 1) as usize;
    let n = n_core + n_tad;

    let mut depth = vec![0u32; n];
    let mut parent = vec![NO_PARENT; n];
    let mut child_lo = vec![0u32; n];
    let mut child_hi = vec![0u32; n];

    // Core: every vertex, the root included, has d children down to
    // depth R-1.
    let mut next = 1u32;
    for v in 0..n_core as u32 {
        let dep = depth[v as usize];
        if dep < radius - 1 {
            child_lo[v as usize] = next;
            child_hi[v as usize] = next + d;
            for c in next..next + d {
                parent[c as usize] = v;
                depth[c as usize] = dep + 1;
            }
            next += d;
        } else {
            child_lo[v as usize] = next;
            child_hi[v as usize] = next;
        }
    }

    let leaf_lo = (n_core - n_leaves_big as usize) as u32;
    let star = (n_core - 1) as u32;

    let mut tadpole_of = vec![NO_TADPOLE; n];
    let mut leaf_of_tadpole = Vec::with_capacity(n_tad);
    for (i, leaf) in (leaf_lo..star).enumerate() {
        let t = (n_core + i) as u32;
        tadpole_of[leaf as usize] = t;
        leaf_of_tadpole.push(leaf);
        parent[t as usize] = leaf;
        depth[t as usize] = radius;
        child_lo[t as usize] = 0;
        child_hi[t as usize] = 0;
    }

    let mut boundary = vec![false; n];
    boundary[0] = true;
    for leaf in leaf_lo..=star {
        boundary[leaf as usize] = true;
    }

    let core_pairs: Vec<(u32, u32)> = (1..n_core as u32).map(|v| (parent[v as usize], v)).collect();
    let mut tilde_pairs = core_pairs.clone();
    for (i, &leaf) in leaf_of_tadpole.iter().enumerate() {
        tilde_pairs.push((leaf, (n_core + i) as u32));
    }
    let hat = EdgeData::new(n, core_pairs, vec![0.0; n]);
    let tilde = EdgeData::new(n, tilde_pairs, vec![0.0; n]);

    // Jump kernel of the walk on the unit, all rows over denominator d+1.
    // Re-routing of edges that leave the unit in the periodised tree:
    // the d would-be children of a non-star leaf collapse onto its
    // tadpole, the d would-be children of the star wrap to the root of
    // the next unit (identified with this root), and the missing parent
    // edge of the root wraps to the star of the previous unit.  Parallel
    // edges (R = 2 makes the star a child of the root) accumulate weight.
    let denom = d + 1;
    let mut kernel = Vec::with_capacity(n);
    for v in 0..n as u32 {
        let mut targets: Vec<u32> = Vec::new();
        let mut weights: Vec<u32> = Vec::new();
        let add = |t: u32, w: u32, targets: &mut Vec<u32>, weights: &mut Vec<u32>| {
            if let Some(pos) = targets.iter().position(|&x| x == t) {
                weights[pos] += w;
            } else {
                targets.push(t);
                weights.push(w);
            }
        };
        if v >= n_core as u32 {
            add(parent[v as usize], denom, &mut targets, &mut weights);
        } else {
            if let Some(p) = (parent[v as usize] != NO_PARENT).then_some(parent[v as usize]) {
                add(p, 1, &mut targets, &mut weights);
            }
            for c in child_lo[v as usize]..child_hi[v as usize] {
                add(c, 1, &mut targets, &mut weights);
            }
            if v == 0 {
                add(star, 1, &mut targets, &mut weights);
            } else if v == star {
                add(0, d, &mut targets, &mut weights);
            } else if tadpole_of[v as usize] != NO_TADPOLE {
                add(tadpole_of[v as usize], d, &mut targets, &mut weights);
            }
        }
        debug_assert_eq!(weights.iter().sum::<u32>(), denom);
        kernel.push(KernelRow { targets, weights, denom });
    }

    Ok(UnitGraph {
        spec,
        radius,
        n_core,
        depth,
        parent,
        child_lo,
        child_hi,
        star,
        tadpole_of,
        leaf_of_tadpole,
        boundary,
        hat,
        tilde,
        kernel,
    })
}

impl UnitGraph {
    pub fn n(&self) -> usize {
        self.depth.len()
    }

    pub fn n_core(&self) -> usize {
        self.n_core
    }

    pub fn n_tadpoles(&self) -> usize {
        self.n() - self.n_core
    }

    pub fn d(&self) -> u32 {
        self.spec.d()
    }

    pub fn spec(&self) -> RegularTreeSpec {
        self.spec
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn depth(&self, v: u32) -> u32 {
        self.depth[v as usize]
    }

    pub fn depths(&self) -> &[u32] {
        &self.depth
    }

    pub fn parent(&self, v: u32) -> Option<u32> {
        let p = self.parent[v as usize];
        (p != NO_PARENT).then_some(p)
    }

    pub fn star(&self) -> u32 {
        self.star
    }

    pub fn is_tadpole(&self, v: u32) -> bool {
        v as usize >= self.n_core
    }

    pub fn tadpole_of(&self, leaf: u32) -> Option<u32> {
        let t = self.tadpole_of[leaf as usize];
        (t != NO_TADPOLE).then_some(t)
    }

    pub fn leaf_of_tadpole(&self, t: u32) -> u32 {
        self.leaf_of_tadpole[t as usize - self.n_core]
    }

    /// Root plus bottom leaves (star included).
    pub fn is_boundary(&self, v: u32) -> bool {
        self.boundary[v as usize]
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    /// Index range of the bottom leaves (depth R-1 core vertices).
    pub fn bottom_leaves(&self) -> std::ops::Range<u32> {
        (self.n_core - self.spec.d().pow(self.radius - 1) as usize) as u32..self.n_core as u32
    }

    /// Core tree edges only.
    pub fn hat_edges(&self) -> &EdgeData {
        &self.hat
    }

    /// Core tree edges plus tadpole edges.
    pub fn tilde_edges(&self) -> &EdgeData {
        &self.tilde
    }

    /// Jump kernel with the root-star wrap edges enabled.
    pub fn kernel(&self) -> &[KernelRow] {
        &self.kernel
    }

    pub fn to_adjacency_text(&self) -> String {
        let mut out = String::new();
        for v in 0..self.n() as u32 {
            let kids: Vec<u32> = (self.child_lo[v as usize]..self.child_hi[v as usize])
                .chain(self.tadpole_of(v))
                .collect();
            out.push_str(&adjacency_line(
                v,
                self.depth(v),
                self.parent(v),
                kids.into_iter(),
                0,
            ));
        }
        out
    }
}

/// Markov-renewal chain on `{0, ..., R+1}` describing the distance
/// coordinate of the periodised walk: holding times are exponential of
/// rate d+1 at states `0..=R` and the tree-return law at state `R+1`.
#[derive(Clone, Debug)]
pub struct DepthLine {
    spec: RegularTreeSpec,
    radius: u32,
    kernel: Vec<KernelRow>,
}

pub fn build_depth_line(d: u32, radius: u32) -> Result<DepthLine> {
    let spec = RegularTreeSpec::new(d)?;
    if radius < 1 {
        return Err(Error::DepthRadiusTooSmall(radius));
    }
    let denom = d + 1;
    let r = radius as usize;
    let mut kernel = Vec::with_capacity(r + 2);
    kernel.push(KernelRow { targets: vec![0, 1], weights: vec![2, d - 1], denom });
    for k in 1..=r {
        kernel.push(KernelRow {
            targets: vec![k as u32 - 1, k as u32 + 1],
            weights: vec![d, 1],
            denom,
        });
    }
    kernel.push(KernelRow { targets: vec![r as u32], weights: vec![denom], denom });
    Ok(DepthLine { spec, radius, kernel })
}

impl DepthLine {
    /// Number of states, `R + 2`.
    pub fn n(&self) -> usize {
        self.kernel.len()
    }

    pub fn d(&self) -> u32 {
        self.spec.d()
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn kernel(&self) -> &[KernelRow] {
        &self.kernel
    }

    /// State whose sojourns follow the tree-return law.
    pub fn tadpole_state(&self) -> u32 {
        self.radius + 1
    }

    pub fn to_adjacency_text(&self) -> String {
        let mut out = String::new();
        let last = self.n() as u32 - 1;
        for v in 0..=last {
            let parent = (v > 0).then(|| v - 1);
            let child = (v < last).then(|| v + 1);
            out.push_str(&adjacency_line(v, v, parent, child.into_iter(), 0));
        }
        out
    }
}
