//! Network topologies and per-iteration pruning.
//!
//! Nodes are indexed `0..K`. Text exports use 1-based indices.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, weighted::WeightedIndex};
use thiserror::Error;

/// Resampling budget for Erdős–Rényi graphs that come out disconnected.
pub const ER_MAX_RETRIES: usize = 64;

/// Child-count distribution of the random tree generator: `P(c)` for
/// `c = 0..=4`.
pub const TREE_CHILD_PROBABILITIES: [f64; 5] = [0.2, 0.3, 0.2, 0.2, 0.1];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("network must contain at least one node")]
    Empty,
    #[error("channel list has {got} entries for {nodes} nodes")]
    ChannelCount { nodes: usize, got: usize },
    #[error("node {node} has zero sensor channels")]
    ZeroChannels { node: usize },
    #[error("edge probability {0} outside (0, 1]")]
    Probability(f64),
    #[error("no connected Erdős–Rényi sample after {retries} draws (K = {nodes}, p = {p})")]
    RetriesExhausted { nodes: usize, p: f64, retries: usize },
    #[error("graph is not connected")]
    Disconnected,
    #[error("node index {node} out of range for {nodes} nodes")]
    NodeOutOfRange { node: usize, nodes: usize },
    #[error("invalid edge ({0}, {1})")]
    InvalidEdge(usize, usize),
}

/// Undirected, connected sensor network with per-node channel counts.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGraph {
    channels: Vec<usize>,
    neighbors: Vec<Vec<usize>>,
}

impl NetworkGraph {
    /// Builds a graph from an explicit edge list (0-based). Rejects
    /// self-loops, duplicate edges and disconnected graphs.
    pub fn from_edges(channels: Vec<usize>, edges: &[(usize, usize)]) -> Result<Self, NetworkError> {
        validate_channels(&channels)?;
        let k = channels.len();
        let mut neighbors = vec![Vec::new(); k];
        for &(a, b) in edges {
            if a == b || a >= k || b >= k || neighbors[a].contains(&b) {
                return Err(NetworkError::InvalidEdge(a, b));
            }
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for n in &mut neighbors {
            n.sort_unstable();
        }
        let graph = Self { channels, neighbors };
        if !graph.is_connected() {
            return Err(NetworkError::Disconnected);
        }
        Ok(graph)
    }

    pub fn node_count(&self) -> usize {
        self.channels.len()
    }

    /// Channel count `M_k` of every node.
    pub fn channels(&self) -> &[usize] {
        &self.channels
    }

    /// Total channel count `M = Σ M_k`.
    pub fn total_channels(&self) -> usize {
        self.channels.iter().sum()
    }

    /// Sorted neighbour list of `node`.
    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.neighbors[node].len()
    }

    pub fn is_adjacent(&self, a: usize, b: usize) -> bool {
        self.neighbors[a].binary_search(&b).is_ok()
    }

    /// Edges `(a, b)` with `a < b`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (a, ns) in self.neighbors.iter().enumerate() {
            out.extend(ns.iter().filter(|&&b| b > a).map(|&b| (a, b)));
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn is_complete(&self) -> bool {
        let k = self.node_count();
        self.neighbors.iter().all(|n| n.len() == k - 1)
    }

    pub fn is_tree(&self) -> bool {
        self.edge_count() + 1 == self.node_count() && self.is_connected()
    }

    pub fn is_connected(&self) -> bool {
        let k = self.node_count();
        if k == 0 {
            return false;
        }
        let mut seen = vec![false; k];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(a) = stack.pop() {
            for &b in &self.neighbors[a] {
                if !seen[b] {
                    seen[b] = true;
                    count += 1;
                    stack.push(b);
                }
            }
        }
        count == k
    }

    /// Edge list text, one `u v` pair per line with 1-based indices.
    pub fn to_edge_list(&self) -> String {
        let mut s = String::new();
        for (a, b) in self.edges() {
            let _ = writeln!(s, "{} {}", a + 1, b + 1);
        }
        s
    }
}

fn validate_channels(channels: &[usize]) -> Result<(), NetworkError> {
    if channels.is_empty() {
        return Err(NetworkError::Empty);
    }
    if let Some(node) = channels.iter().position(|&m| m == 0) {
        return Err(NetworkError::ZeroChannels { node });
    }
    Ok(())
}

fn build_unchecked(channels: Vec<usize>, edges: impl IntoIterator<Item = (usize, usize)>) -> NetworkGraph {
    let mut neighbors = vec![Vec::new(); channels.len()];
    for (a, b) in edges {
        neighbors[a].push(b);
        neighbors[b].push(a);
    }
    for n in &mut neighbors {
        n.sort_unstable();
    }
    NetworkGraph { channels, neighbors }
}

/// Complete graph on `channels.len()` nodes.
pub fn make_fully_connected(channels: Vec<usize>) -> Result<NetworkGraph, NetworkError> {
    validate_channels(&channels)?;
    let k = channels.len();
    let edges = (0..k).flat_map(|a| (a + 1..k).map(move |b| (a, b)));
    Ok(build_unchecked(channels, edges))
}

/// Erdős–Rényi graph `G(K, p)`; disconnected samples are redrawn up to
/// [`ER_MAX_RETRIES`] times.
pub fn make_erdos_renyi(channels: Vec<usize>, p: f64, seed: u64) -> Result<NetworkGraph, NetworkError> {
    validate_channels(&channels)?;
    if !(p > 0.0 && p <= 1.0) {
        return Err(NetworkError::Probability(p));
    }
    let k = channels.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 0..ER_MAX_RETRIES {
        let mut edges = Vec::new();
        for a in 0..k {
            for b in a + 1..k {
                if rng.random::<f64>() < p {
                    edges.push((a, b));
                }
            }
        }
        let graph = build_unchecked(channels.clone(), edges);
        if graph.is_connected() {
            if attempt > 0 {
                log::debug!("ER(K={k}, p={p}) connected after {} redraws", attempt);
            }
            return Ok(graph);
        }
    }
    Err(NetworkError::RetriesExhausted { nodes: k, p, retries: ER_MAX_RETRIES })
}

/// Random tree grown breadth-first: each dequeued node draws its number of
/// children from [`TREE_CHILD_PROBABILITIES`], truncated once `K` nodes are
/// placed. If every frontier node draws zero children before `K` nodes
/// exist, the most recently expanded node is given one child.
pub fn make_random_tree(channels: Vec<usize>, seed: u64) -> Result<NetworkGraph, NetworkError> {
    validate_channels(&channels)?;
    let k = channels.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = WeightedIndex::new(TREE_CHILD_PROBABILITIES).expect("valid weights");
    let mut edges = Vec::with_capacity(k.saturating_sub(1));
    let mut frontier = VecDeque::from([0usize]);
    let mut placed = 1;
    let mut last_expanded = 0;
    while placed < k {
        let Some(parent) = frontier.pop_front() else {
            // Early termination: force one child below the last expanded node.
            edges.push((last_expanded, placed));
            frontier.push_back(placed);
            placed += 1;
            continue;
        };
        last_expanded = parent;
        let children = dist.sample(&mut rng).min(k - placed);
        for _ in 0..children {
            edges.push((parent, placed));
            frontier.push_back(placed);
            placed += 1;
        }
    }
    Ok(build_unchecked(channels, edges))
}

/// Path graph `0 – 1 – … – K−1`.
pub fn make_path(channels: Vec<usize>) -> Result<NetworkGraph, NetworkError> {
    validate_channels(&channels)?;
    let k = channels.len();
    Ok(build_unchecked(channels, (1..k).map(|b| (b - 1, b))))
}

/// Spanning tree of a connected graph rooted at the updating node.
#[derive(Debug, Clone, PartialEq)]
pub struct PrunedTree {
    root: usize,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    branch_of: Vec<Option<usize>>,
    depth: Vec<usize>,
}

impl PrunedTree {
    pub fn root(&self) -> usize {
        self.root
    }

    pub fn node_count(&self) -> usize {
        self.parent.len()
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        self.parent[node]
    }

    /// Children in ascending index order.
    pub fn children(&self, node: usize) -> &[usize] {
        &self.children[node]
    }

    /// Neighbour `n` of the root such that `node ∈ B_nq`; `None` for the root.
    pub fn branch_of(&self, node: usize) -> Option<usize> {
        self.branch_of[node]
    }

    pub fn depth(&self, node: usize) -> usize {
        self.depth[node]
    }

    /// Branch roots, i.e. the root's children, ascending.
    pub fn branches(&self) -> &[usize] {
        &self.children[self.root]
    }

    /// Members of branch `B_nq`, ascending.
    pub fn branch_members(&self, branch: usize) -> Vec<usize> {
        (0..self.node_count()).filter(|&k| self.branch_of[k] == Some(branch)).collect()
    }

    /// Tree edges `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<_> = self
            .parent
            .iter()
            .enumerate()
            .filter_map(|(k, p)| p.map(|p| (k.min(p), k.max(p))))
            .collect();
        out.sort_unstable();
        out
    }

    /// Nodes from `node` up to and including the root.
    pub fn path_to_root(&self, node: usize) -> Vec<usize> {
        let mut path = vec![node];
        let mut cur = node;
        while let Some(p) = self.parent[cur] {
            path.push(p);
            cur = p;
        }
        path
    }

    /// Nodes ordered so that every child precedes its parent (the root last).
    pub fn post_order(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.node_count());
        let mut stack = vec![(self.root, false)];
        while let Some((node, expanded)) = stack.pop() {
            if expanded {
                out.push(node);
            } else {
                stack.push((node, true));
                for &c in self.children[node].iter().rev() {
                    stack.push((c, false));
                }
            }
        }
        out
    }

    /// The tree as a [`NetworkGraph`] with the given channel counts.
    pub fn to_graph(&self, channels: Vec<usize>) -> Result<NetworkGraph, NetworkError> {
        NetworkGraph::from_edges(channels, &self.edges())
    }
}

/// Prunes `graph` into a tree rooted at `q` by simulating the token flood:
/// `q` sends a token to all neighbours, every node adopts as parent a node
/// from which the token arrived first and floods it further. Arrival order
/// is modelled as breadth-first layers; ties within a layer go to the lowest
/// parent index, or to a uniformly random candidate when `tie_seed` is given.
/// All links between `q` and its neighbours survive.
pub fn prune_to_tree(graph: &NetworkGraph, q: usize, tie_seed: Option<u64>) -> Result<PrunedTree, NetworkError> {
    let k = graph.node_count();
    if q >= k {
        return Err(NetworkError::NodeOutOfRange { node: q, nodes: k });
    }
    let mut rng = tie_seed.map(ChaCha8Rng::seed_from_u64);
    let mut parent = vec![None; k];
    let mut depth = vec![usize::MAX; k];
    depth[q] = 0;
    let mut layer = vec![q];
    let mut reached = 1;
    while !layer.is_empty() {
        let d = depth[layer[0]] + 1;
        let mut next: Vec<usize> = layer
            .iter()
            .flat_map(|&a| graph.neighbors(a).iter().copied())
            .filter(|&b| depth[b] == usize::MAX)
            .collect();
        next.sort_unstable();
        next.dedup();
        for &b in &next {
            depth[b] = d;
            let candidates: Vec<usize> =
                graph.neighbors(b).iter().copied().filter(|&a| depth[a] == d - 1).collect();
            let chosen = match rng.as_mut() {
                Some(rng) => *candidates.choose(rng).expect("at least one parent"),
                None => candidates[0],
            };
            parent[b] = Some(chosen);
        }
        reached += next.len();
        layer = next;
    }
    if reached != k {
        return Err(NetworkError::Disconnected);
    }
    let mut children = vec![Vec::new(); k];
    for (b, p) in parent.iter().enumerate() {
        if let Some(p) = p {
            children[*p].push(b);
        }
    }
    let branch_of = (0..k)
        .map(|b| {
            if b == q {
                return None;
            }
            let mut cur = b;
            while parent[cur] != Some(q) {
                cur = parent[cur].expect("non-root has parent");
            }
            Some(cur)
        })
        .collect();
    Ok(PrunedTree { root: q, parent, children, branch_of, depth })
}

/// Star rooted at `q` over a complete graph (every other node a singleton
/// branch). Equivalent to [`prune_to_tree`] on a complete graph.
pub fn star_at(node_count: usize, q: usize) -> PrunedTree {
    let mut parent = vec![Some(q); node_count];
    parent[q] = None;
    let mut children = vec![Vec::new(); node_count];
    children[q] = (0..node_count).filter(|&k| k != q).collect();
    let mut branch_of: Vec<Option<usize>> = (0..node_count).map(Some).collect();
    branch_of[q] = None;
    let mut depth = vec![1; node_count];
    depth[q] = 0;
    PrunedTree { root: q, parent, children, branch_of, depth }
}
