//! Undirected graphs with a per-node forwarding mask, plus the generators for
//! the topologies studied here: rectangular grids (optionally row-pruned),
//! random geometric graphs on a rectangle and complete d-ary trees.
//!
//! Node ids are dense `0..N`. Grids are numbered row-major and trees in level
//! order, so ids are stable across runs and easy to reason about in tests.

use std::collections::VecDeque;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Planar position of an RGG node.
pub type Position = [f64; 2];

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    adjacency: Vec<Vec<usize>>,
    forward_mask: Vec<bool>,
    positions: Option<Vec<Position>>,
    source_hint: Option<usize>,
}

impl Graph {
    /// Builds a graph from an undirected edge list. Every node may forward.
    pub fn from_edges(node_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        Self::with_mask(node_count, edges, vec![true; node_count])
    }

    /// Builds a graph from an undirected edge list and an explicit forwarding mask.
    ///
    /// Self-loops and repeated edges are rejected rather than silently dropped.
    pub fn with_mask(node_count: usize, edges: &[(usize, usize)], forward_mask: Vec<bool>) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::InvalidGraph("a graph needs at least one node".into()));
        }
        if forward_mask.len() != node_count {
            return Err(Error::InvalidGraph(format!(
                "forward mask has length {} but the graph has {} nodes",
                forward_mask.len(),
                node_count
            )));
        }
        let mut adjacency = vec![Vec::new(); node_count];
        for &(u, v) in edges {
            if u >= node_count || v >= node_count {
                return Err(Error::NodeOutOfRange { node: u.max(v), nodes: node_count });
            }
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop on node {u}")));
            }
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for (u, nbrs) in adjacency.iter_mut().enumerate() {
            nbrs.sort_unstable();
            if let Some(w) = nbrs.windows(2).find(|w| w[0] == w[1]) {
                return Err(Error::InvalidGraph(format!("duplicate edge {u}-{}", w[0])));
            }
        }
        Ok(Graph { adjacency, forward_mask, positions: None, source_hint: None })
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Sorted neighbour list of `node`.
    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn forward_mask(&self) -> &[bool] {
        &self.forward_mask
    }

    pub fn can_forward(&self, node: usize) -> bool {
        self.forward_mask[node]
    }

    pub fn positions(&self) -> Option<&[Position]> {
        self.positions.as_deref()
    }

    /// Natural source for the topology: grid centre or tree root. `None` for
    /// RGGs and hand-built graphs.
    pub fn source_hint(&self) -> Option<usize> {
        self.source_hint
    }

    pub fn set_source_hint(&mut self, source: Option<usize>) -> Result<()> {
        if let Some(s) = source {
            self.check_node(s)?;
        }
        self.source_hint = source;
        Ok(())
    }

    /// Edges as `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(u, nbrs)| nbrs.iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
    }

    pub fn check_node(&self, node: usize) -> Result<()> {
        if node < self.node_count() {
            Ok(())
        } else {
            Err(Error::NodeOutOfRange { node, nodes: self.node_count() })
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let file = GraphFile {
            nodes: self.node_count(),
            edges: self.edges().map(|(u, v)| [u, v]).collect(),
            forward_mask: self.forward_mask.clone(),
            positions: self.positions.clone(),
            source: self.source_hint,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(text)?;
        let edges: Vec<(usize, usize)> = file.edges.iter().map(|e| (e[0], e[1])).collect();
        let mut g = Graph::with_mask(file.nodes, &edges, file.forward_mask)?;
        if let Some(pos) = file.positions {
            if pos.len() != file.nodes {
                return Err(Error::Format(format!("{} positions given for {} nodes", pos.len(), file.nodes)));
            }
            g.positions = Some(pos);
        }
        g.set_source_hint(file.source)?;
        Ok(g)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// On-disk JSON layout of a [`Graph`].
#[derive(Debug, Serialize, Deserialize)]
struct GraphFile {
    nodes: usize,
    edges: Vec<[usize; 2]>,
    forward_mask: Vec<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    positions: Option<Vec<Position>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source: Option<usize>,
}

/// Rectangular grid, optionally keeping horizontal edges only in every
/// `horizontal_row_period`-th row (the `Gq` family).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    #[serde(default)]
    pub horizontal_row_period: Option<usize>,
}

impl GridSpec {
    pub fn new(rows: usize, cols: usize) -> Self {
        GridSpec { rows, cols, horizontal_row_period: None }
    }

    pub fn with_row_period(mut self, q: usize) -> Self {
        self.horizontal_row_period = Some(q);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidParameter("grid rows and cols must be at least 1".into()));
        }
        if let Some(q) = self.horizontal_row_period {
            if q == 0 || q + 1 > self.rows {
                return Err(Error::InvalidParameter(format!("row period {q} must lie in 1..={}", self.rows - 1)));
            }
        }
        Ok(())
    }

    /// Id of the node at `(rows/2, cols/2)`.
    pub fn center(&self) -> usize {
        (self.rows / 2) * self.cols + self.cols / 2
    }

    fn keeps_horizontal(&self, row: usize) -> bool {
        self.horizontal_row_period.is_none_or(|q| row.is_multiple_of(q))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RggSpec {
    pub node_count: usize,
    pub width: f64,
    pub height: f64,
    pub radius: f64,
    pub seed: u64,
}

impl RggSpec {
    pub fn validate(&self) -> Result<()> {
        if self.node_count == 0 {
            return Err(Error::InvalidParameter("an RGG needs at least one node".into()));
        }
        if !(self.width > 0.0 && self.height > 0.0) {
            return Err(Error::InvalidParameter("deployment region must have positive width and height".into()));
        }
        if !(self.radius >= 0.0) {
            return Err(Error::InvalidParameter("radius must be non-negative".into()));
        }
        Ok(())
    }
}

/// Complete rooted tree: every node above level `height` has `degree` children.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeSpec {
    pub degree: usize,
    pub height: usize,
}

impl TreeSpec {
    pub fn binary(height: usize) -> Self {
        TreeSpec { degree: 2, height }
    }

    pub fn validate(&self) -> Result<()> {
        if self.degree < 2 {
            return Err(Error::InvalidParameter("tree degree must be at least 2".into()));
        }
        if self.height < 1 {
            return Err(Error::InvalidParameter("tree height must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of nodes on levels `0..=level`.
    fn nodes_through(&self, level: usize) -> usize {
        (0..=level).map(|l| self.degree.pow(l as u32)).sum()
    }

    pub fn node_count(&self) -> usize {
        self.nodes_through(self.height)
    }

    /// Level of a node under level-order numbering (root is level 0).
    pub fn level_of(&self, node: usize) -> usize {
        let mut level = 0;
        let mut end = 1;
        let mut width = 1;
        while node >= end {
            width *= self.degree;
            end += width;
            level += 1;
        }
        level
    }

    /// First id on the leaf level.
    pub fn first_leaf(&self) -> usize {
        self.nodes_through(self.height - 1)
    }
}

pub fn gen_grid(spec: &GridSpec) -> Result<Graph> {
    spec.validate()?;
    let id = |r: usize, c: usize| r * spec.cols + c;
    let mut edges = Vec::new();
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            if c + 1 < spec.cols && spec.keeps_horizontal(r) {
                edges.push((id(r, c), id(r, c + 1)));
            }
            if r + 1 < spec.rows {
                edges.push((id(r, c), id(r + 1, c)));
            }
        }
    }
    let mut g = Graph::from_edges(spec.rows * spec.cols, &edges)?;
    g.source_hint = Some(spec.center());
    Ok(g)
}

/// Samples node positions uniformly on `[0, width] x [0, height]` and joins
/// every pair at Euclidean distance at most `radius`. The result may be
/// disconnected.
pub fn gen_rgg(spec: &RggSpec) -> Result<Graph> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let positions: Vec<Position> =
        (0..spec.node_count).map(|_| [rng.gen::<f64>() * spec.width, rng.gen::<f64>() * spec.height]).collect();
    let r2 = spec.radius * spec.radius;
    let mut edges = Vec::new();
    for u in 0..positions.len() {
        for v in u + 1..positions.len() {
            let dx = positions[u][0] - positions[v][0];
            let dy = positions[u][1] - positions[v][1];
            if dx * dx + dy * dy <= r2 {
                edges.push((u, v));
            }
        }
    }
    let mut g = Graph::from_edges(spec.node_count, &edges)?;
    g.positions = Some(positions);
    Ok(g)
}

/// Level-order complete tree rooted at node 0. Leaves do not forward.
pub fn gen_tree(spec: &TreeSpec) -> Result<Graph> {
    spec.validate()?;
    let n = spec.node_count();
    let first_leaf = spec.first_leaf();
    let edges: Vec<(usize, usize)> = (1..n).map(|child| ((child - 1) / spec.degree, child)).collect();
    let mask = (0..n).map(|v| v < first_leaf).collect();
    let mut g = Graph::with_mask(n, &edges, mask)?;
    g.source_hint = Some(0);
    Ok(g)
}

/// Connected component containing `source`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub size: usize,
    /// Sorted node ids.
    pub members: Vec<usize>,
}

impl Component {
    pub fn contains(&self, node: usize) -> bool {
        self.members.binary_search(&node).is_ok()
    }
}

/// Component of `source`. Forwarding masks are ignored: this is plain
/// graph connectivity, used to decide whether a coverage target is reachable
/// at all.
pub fn largest_component(g: &Graph, source: usize) -> Result<Component> {
    g.check_node(source)?;
    let mut seen = vec![false; g.node_count()];
    let mut queue = VecDeque::from([source]);
    seen[source] = true;
    while let Some(u) = queue.pop_front() {
        for &v in g.neighbors(u) {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    let members: Vec<usize> = (0..g.node_count()).filter(|&v| seen[v]).collect();
    Ok(Component { size: members.len(), members })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_well_formed(g: &Graph) {
        assert_eq!(g.forward_mask().len(), g.node_count());
        for u in 0..g.node_count() {
            let nbrs = g.neighbors(u);
            assert!(nbrs.windows(2).all(|w| w[0] < w[1]), "unsorted or duplicate at {u}");
            for &v in nbrs {
                assert_ne!(u, v);
                assert!(g.neighbors(v).binary_search(&u).is_ok(), "asymmetric {u}-{v}");
            }
        }
    }

    /// Brute-force count of grid edges: every pair of lattice points at
    /// Manhattan distance one, filtered by the row rule.
    fn brute_grid_edges(rows: usize, cols: usize, q: Option<usize>) -> usize {
        let mut count = 0;
        for a in 0..rows * cols {
            for b in a + 1..rows * cols {
                let (ra, ca) = (a / cols, a % cols);
                let (rb, cb) = (b / cols, b % cols);
                let vertical = ca == cb && rb == ra + 1;
                let horizontal = ra == rb && cb == ca + 1 && q.is_none_or(|q| ra % q == 0);
                if vertical || horizontal {
                    count += 1;
                }
            }
        }
        count
    }

    #[test]
    fn grid_edge_counts() {
        let g = gen_grid(&GridSpec::new(2, 2)).unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (4, 4));

        let cases = [(None, 1860), (Some(5), 1140), (Some(15), 1020)];
        for (q, expected) in cases {
            assert_eq!(brute_grid_edges(31, 31, q), expected);
            let mut spec = GridSpec::new(31, 31);
            spec.horizontal_row_period = q;
            let g = gen_grid(&spec).unwrap();
            assert_eq!(g.edge_count(), expected, "q = {q:?}");
            assert_well_formed(&g);
            assert!(g.forward_mask().iter().all(|&m| m));
        }
        assert_eq!(gen_grid(&GridSpec::new(31, 31)).unwrap().source_hint(), Some(480));
    }

    #[test]
    fn grid_period_one_is_full_grid() {
        let full = gen_grid(&GridSpec::new(7, 9)).unwrap();
        let q1 = gen_grid(&GridSpec::new(7, 9).with_row_period(1)).unwrap();
        assert_eq!(full, q1);
    }

    #[test]
    fn grid_rejects_bad_specs() {
        assert!(gen_grid(&GridSpec::new(0, 3)).is_err());
        assert!(gen_grid(&GridSpec::new(5, 5).with_row_period(0)).is_err());
        assert!(gen_grid(&GridSpec::new(5, 5).with_row_period(5)).is_err());
        assert!(gen_grid(&GridSpec::new(5, 5).with_row_period(4)).is_ok());
    }

    #[test]
    fn rgg_extremes_and_determinism() {
        let spec = RggSpec { node_count: 25, width: 3.0, height: 4.0, radius: 5.0, seed: 11 };
        let g = gen_rgg(&spec).unwrap();
        assert_eq!(g.edge_count(), 25 * 24 / 2);

        let g = gen_rgg(&RggSpec { radius: 0.0, ..spec }).unwrap();
        assert_eq!(g.edge_count(), 0);

        let fig = RggSpec { node_count: 60, width: 20.0, height: 20.0, radius: 5.5, seed: 2019 };
        let a = gen_rgg(&fig).unwrap();
        let b = gen_rgg(&fig).unwrap();
        assert_eq!(a, b);
        assert_well_formed(&a);
        assert_eq!(a.positions().unwrap().len(), 60);
        assert!(a.edge_count() > 0);
        let c = gen_rgg(&RggSpec { seed: 2020, ..fig }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rgg_edges_match_distances() {
        let spec = RggSpec { node_count: 40, width: 10.0, height: 6.0, radius: 2.5, seed: 3 };
        let g = gen_rgg(&spec).unwrap();
        let pos = g.positions().unwrap();
        for u in 0..40 {
            for v in 0..40 {
                if u == v {
                    continue;
                }
                let d = ((pos[u][0] - pos[v][0]).powi(2) + (pos[u][1] - pos[v][1]).powi(2)).sqrt();
                let linked = g.neighbors(u).contains(&v);
                assert_eq!(linked, d <= 2.5, "{u}-{v} at distance {d}");
            }
        }
    }

    #[test]
    fn rgg_rejects_bad_specs() {
        let ok = RggSpec { node_count: 5, width: 1.0, height: 1.0, radius: 0.5, seed: 0 };
        assert!(gen_rgg(&RggSpec { radius: -1.0, ..ok }).is_err());
        assert!(gen_rgg(&RggSpec { width: 0.0, ..ok }).is_err());
        assert!(gen_rgg(&RggSpec { node_count: 0, ..ok }).is_err());
    }

    #[test]
    fn tree_shapes() {
        let g = gen_tree(&TreeSpec::binary(1)).unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (3, 2));
        assert_eq!(g.forward_mask(), &[true, false, false]);

        let g = gen_tree(&TreeSpec::binary(10)).unwrap();
        assert_eq!(g.node_count(), 2047);
        assert_eq!(g.forward_mask().iter().filter(|&&m| !m).count(), 1024);
        assert_well_formed(&g);

        let spec = TreeSpec { degree: 3, height: 2 };
        let g = gen_tree(&spec).unwrap();
        assert_eq!(g.node_count(), 13);
        assert_eq!(g.forward_mask().iter().filter(|&&m| !m).count(), 9);
        assert_eq!(g.neighbors(0), &[1, 2, 3]);
        assert_eq!((0..13).map(|v| spec.level_of(v)).collect::<Vec<_>>(), [0, 1, 1, 1, 2, 2, 2, 2, 2, 2, 2, 2, 2]);

        assert!(gen_tree(&TreeSpec { degree: 1, height: 3 }).is_err());
        assert!(gen_tree(&TreeSpec { degree: 2, height: 0 }).is_err());
    }

    #[test]
    fn components() {
        let g = gen_grid(&GridSpec::new(4, 6)).unwrap();
        assert_eq!(largest_component(&g, 5).unwrap().size, 24);

        let g = Graph::from_edges(4, &[]).unwrap();
        let c = largest_component(&g, 2).unwrap();
        assert_eq!((c.size, c.members.clone()), (1, vec![2]));

        let g = Graph::from_edges(6, &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]).unwrap();
        let c = largest_component(&g, 1).unwrap();
        assert_eq!(c.members, vec![0, 1, 2]);
        assert!(c.contains(2) && !c.contains(3));
        assert!(largest_component(&g, 6).is_err());
    }

    #[test]
    fn constructor_rejects_malformed_input() {
        assert!(Graph::from_edges(3, &[(0, 0)]).is_err());
        assert!(Graph::from_edges(3, &[(0, 1), (1, 0)]).is_err());
        assert!(Graph::from_edges(3, &[(0, 3)]).is_err());
        assert!(Graph::with_mask(3, &[], vec![true]).is_err());
        assert!(Graph::from_edges(0, &[]).is_err());
    }

    #[test]
    fn json_round_trip_keeps_positions_and_mask() {
        let g = gen_rgg(&RggSpec { node_count: 12, width: 5.0, height: 5.0, radius: 2.0, seed: 9 }).unwrap();
        assert_eq!(Graph::from_json(&g.to_json().unwrap()).unwrap(), g);
        let t = gen_tree(&TreeSpec::binary(3)).unwrap();
        let text = t.to_json().unwrap();
        assert!(!text.contains("positions"));
        assert_eq!(Graph::from_json(&text).unwrap(), t);
    }

    #[test]
    fn json_schema_fields() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let v: serde_json::Value = serde_json::from_str(&g.to_json().unwrap()).unwrap();
        assert_eq!(v["nodes"], 3);
        assert_eq!(v["edges"], serde_json::json!([[0, 1], [1, 2]]));
        assert_eq!(v["forward_mask"], serde_json::json!([true, true, true]));
        assert!(Graph::from_json(r#"{"nodes":2,"edges":[[0,1]],"forward_mask":[true]}"#).is_err());
        assert!(Graph::from_json(r#"{"nodes":2,"edges":[[0,1]],"forward_mask":[true,true],"positions":[[0.0,0.0]]}"#)
            .is_err());
    }
}
