use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An undirected edge stored with `u < v`, oriented `u -> v`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    #[serde(default = "unit_weight")]
    pub weight: f64,
}

fn unit_weight() -> f64 {
    1.0
}

impl Edge {
    pub fn new(u: usize, v: usize) -> Self {
        Edge { u, v, weight: 1.0 }
    }

    pub fn weighted(u: usize, v: usize, weight: f64) -> Self {
        Edge { u, v, weight }
    }
}

/// Simple undirected graph with optional signed edge weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GraphRecord", into = "GraphRecord")]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<Edge>,
}

#[derive(Serialize, Deserialize)]
struct GraphRecord {
    num_nodes: usize,
    edges: Vec<Edge>,
}

impl TryFrom<GraphRecord> for Graph {
    type Error = Error;

    fn try_from(r: GraphRecord) -> Result<Self> {
        Graph::new(r.num_nodes, r.edges)
    }
}

impl From<Graph> for GraphRecord {
    fn from(g: Graph) -> Self {
        GraphRecord {
            num_nodes: g.num_nodes,
            edges: g.edges,
        }
    }
}

impl Graph {
    /// Validates and canonicalizes the edge list (endpoints swapped so `u < v`;
    /// edge order is preserved).
    pub fn new(num_nodes: usize, edges: Vec<Edge>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(edges.len());
        let mut canon = Vec::with_capacity(edges.len());
        for (i, e) in edges.into_iter().enumerate() {
            if e.u == e.v {
                return Err(Error::InvalidGraph(format!("edge {i} is a self-loop at {}", e.u)));
            }
            if e.u >= num_nodes || e.v >= num_nodes {
                return Err(Error::InvalidGraph(format!(
                    "edge {i} = ({}, {}) references a node >= {num_nodes}",
                    e.u, e.v
                )));
            }
            if !e.weight.is_finite() {
                return Err(Error::InvalidGraph(format!("edge {i} has non-finite weight")));
            }
            let (u, v) = if e.u < e.v { (e.u, e.v) } else { (e.v, e.u) };
            if !seen.insert((u, v)) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({u}, {v})")));
            }
            canon.push(Edge {
                u,
                v,
                weight: e.weight,
            });
        }
        Ok(Graph {
            num_nodes,
            edges: canon,
        })
    }

    /// Unit-weight graph from endpoint pairs.
    pub fn from_pairs(num_nodes: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        Graph::new(num_nodes, pairs.iter().map(|&(u, v)| Edge::new(u, v)).collect())
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Unweighted degree of every node.
    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.num_nodes];
        for e in &self.edges {
            d[e.u] += 1;
            d[e.v] += 1;
        }
        d
    }

    pub fn max_degree(&self) -> usize {
        self.degrees().into_iter().max().unwrap_or(0)
    }

    /// Sum of `|w|` over incident edges.
    pub fn weighted_degrees(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.num_nodes];
        for e in &self.edges {
            d[e.u] += e.weight.abs();
            d[e.v] += e.weight.abs();
        }
        d
    }

    pub fn isolated_nodes(&self) -> Vec<usize> {
        self.degrees()
            .iter()
            .enumerate()
            .filter(|(_, &d)| d == 0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_nodes];
        for e in &self.edges {
            adj[e.u].push(e.v);
            adj[e.v].push(e.u);
        }
        adj
    }

    /// Hop distance from `source` to every node (`None` when unreachable).
    pub fn hop_distances(&self, source: usize) -> Vec<Option<usize>> {
        let adj = self.neighbors();
        let mut dist = vec![None; self.num_nodes];
        let mut queue = std::collections::VecDeque::new();
        dist[source] = Some(0);
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].expect("queued nodes have a distance");
            for &v in &adj[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn connected_components(&self) -> usize {
        let mut parent: Vec<usize> = (0..self.num_nodes).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let mut count = self.num_nodes;
        for e in &self.edges {
            let (a, b) = (find(&mut parent, e.u), find(&mut parent, e.v));
            if a != b {
                parent[a] = b;
                count -= 1;
            }
        }
        count
    }

    /// Dense adjacency matrix holding edge weights.
    pub fn adjacency(&self) -> crate::linalg::Matrix {
        let mut a = crate::linalg::Matrix::zeros(self.num_nodes, self.num_nodes);
        for e in &self.edges {
            a.set(e.u, e.v, e.weight);
            a.set(e.v, e.u, e.weight);
        }
        a
    }
}
