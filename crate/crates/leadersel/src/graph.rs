//! Directed interaction topologies and their Laplacians.
//!
//! Agents are indexed 1..=N everywhere a graph crosses an API boundary. An
//! edge `(j, i)` is a directed link from agent `j` to agent `i`, so `j`
//! appears in the neighbor set of `i` and contributes to `i`'s in-degree.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::linalg::Mat;
use crate::{Error, Result};

/// Simple directed graph over `n_agents` nodes, 1-based indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Digraph {
    n_agents: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl Digraph {
    /// Builds a graph, rejecting self-loops, duplicate edges and
    /// out-of-range endpoints.
    pub fn new(n_agents: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n_agents == 0 {
            return Err(Error::InvalidGraph("graph needs at least one agent".into()));
        }
        let mut set = BTreeSet::new();
        for &(j, i) in edges {
            if j == i {
                return Err(Error::InvalidGraph(format!("self-loop on agent {}", i)));
            }
            if j == 0 || i == 0 || j > n_agents || i > n_agents {
                return Err(Error::InvalidGraph(format!(
                    "edge ({}, {}) leaves the agent range 1..={}",
                    j, i, n_agents
                )));
            }
            if !set.insert((j, i)) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({}, {})", j, i)));
            }
        }
        Ok(Self { n_agents, edges: set })
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, j: usize, i: usize) -> bool {
        self.edges.contains(&(j, i))
    }

    /// In-degree of agent `i` (1-based).
    pub fn in_degree(&self, i: usize) -> usize {
        self.edges.iter().filter(|&&(_, to)| to == i).count()
    }

    /// Adjacency in successor form: `succ[j-1]` lists all `i` with `(j, i)` present.
    fn successors(&self) -> Vec<Vec<usize>> {
        let mut succ = vec![Vec::new(); self.n_agents];
        for &(j, i) in &self.edges {
            succ[j - 1].push(i);
        }
        succ
    }
}

/// Laplacian of `g`: off-diagonal entry `(i, j)` is -1 when `(j, i)` is an
/// edge, and each diagonal entry equals the in-degree, so rows sum to zero.
pub fn laplacian(g: &Digraph) -> Mat {
    let n = g.n_agents();
    let mut l = Mat::zeros(n, n);
    for (j, i) in g.edges() {
        l[(i - 1, j - 1)] = -1.0;
        l[(i - 1, i - 1)] += 1.0;
    }
    l
}

/// Edge-set union of a family of graphs over the same agent set.
pub fn union_graph(gs: &[Digraph]) -> Result<Digraph> {
    let first = gs
        .first()
        .ok_or_else(|| Error::InvalidGraph("union of an empty graph list".into()))?;
    let n = first.n_agents();
    let mut edges = BTreeSet::new();
    for g in gs {
        if g.n_agents() != n {
            return Err(Error::Dimension(format!(
                "union_graph: agent counts differ ({} vs {})",
                n,
                g.n_agents()
            )));
        }
        edges.extend(g.edges());
    }
    let edges: Vec<_> = edges.into_iter().collect();
    Digraph::new(n, &edges)
}

/// Strongly-connected-component decomposition plus its condensation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SccDecomposition {
    /// Each component is a sorted list of 1-based agent indices.
    pub components: Vec<Vec<usize>>,
    /// Deduplicated edges between component indices.
    pub condensation_edges: BTreeSet<(usize, usize)>,
    /// Components with no incoming condensation edge.
    pub source_components: Vec<usize>,
}

/// Tarjan's algorithm, iterative to keep the stack flat.
pub fn scc(g: &Digraph) -> SccDecomposition {
    let n = g.n_agents();
    let succ = g.successors();

    const UNSET: usize = usize::MAX;
    let mut index = vec![UNSET; n];
    let mut lowlink = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    let mut next_index = 0usize;
    let mut comp_of = vec![UNSET; n];
    let mut components: Vec<Vec<usize>> = Vec::new();

    // Work items: (node, next child position).
    let mut work: Vec<(usize, usize)> = Vec::new();
    for start in 0..n {
        if index[start] != UNSET {
            continue;
        }
        work.push((start, 0));
        index[start] = next_index;
        lowlink[start] = next_index;
        next_index += 1;
        stack.push(start);
        on_stack[start] = true;

        while let Some(&mut (v, ref mut child)) = work.last_mut() {
            if *child < succ[v].len() {
                let w = succ[v][*child] - 1;
                *child += 1;
                if index[w] == UNSET {
                    index[w] = next_index;
                    lowlink[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    work.push((w, 0));
                } else if on_stack[w] {
                    lowlink[v] = lowlink[v].min(index[w]);
                }
            } else {
                work.pop();
                if let Some(&(parent, _)) = work.last() {
                    lowlink[parent] = lowlink[parent].min(lowlink[v]);
                }
                if lowlink[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().expect("Tarjan stack underflow");
                        on_stack[w] = false;
                        comp_of[w] = components.len();
                        comp.push(w + 1);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    components.push(comp);
                }
            }
        }
    }

    let mut condensation_edges = BTreeSet::new();
    for (j, i) in g.edges() {
        let cj = comp_of[j - 1];
        let ci = comp_of[i - 1];
        if cj != ci {
            condensation_edges.insert((cj, ci));
        }
    }
    let mut has_incoming = vec![false; components.len()];
    for &(_, to) in &condensation_edges {
        has_incoming[to] = true;
    }
    let source_components = (0..components.len()).filter(|&c| !has_incoming[c]).collect();

    SccDecomposition { components, condensation_edges, source_components }
}

/// Agents unreachable from every other agent in the union of the given
/// graphs: exactly the singleton source components of the union's
/// condensation. These form the mandatory initial leader set.
pub fn initial_leader_set(gs: &[Digraph]) -> Result<BTreeSet<usize>> {
    let union = union_graph(gs)?;
    let dec = scc(&union);
    Ok(dec
        .source_components
        .iter()
        .filter(|&&c| dec.components[c].len() == 1)
        .map(|&c| dec.components[c][0])
        .collect())
}
