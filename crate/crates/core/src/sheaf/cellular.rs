use serde::{Deserialize, Serialize};

use super::graph::{Edge, Graph};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Restriction maps of one edge `e = (u, v)`: `tail` is `F_{u ⊴ e}`, `head`
/// is `F_{v ⊴ e}`. Both are `k_e x k`.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeMaps {
    pub tail: Matrix,
    pub head: Matrix,
}

impl EdgeMaps {
    pub fn new(tail: Matrix, head: Matrix) -> Self {
        EdgeMaps { tail, head }
    }

    pub fn scalar(tail: f64, head: f64) -> Self {
        EdgeMaps {
            tail: Matrix::from_vec(1, 1, vec![tail]).expect("1x1"),
            head: Matrix::from_vec(1, 1, vec![head]).expect("1x1"),
        }
    }

    pub fn edge_dim(&self) -> usize {
        self.tail.rows()
    }
}

/// Cellular sheaf on a graph with constant vertex stalk dimension `k`.
///
/// Each edge is oriented `u -> v` with `u < v` unless it has been explicitly
/// reversed with [`CellularSheaf::with_reversed_edges`]. Orientation only
/// affects the sign of the coboundary; the Laplacian does not see it.
#[derive(Clone, Debug, PartialEq)]
pub struct CellularSheaf {
    graph: Graph,
    stalk_dim: usize,
    maps: Vec<EdgeMaps>,
    reversed: Vec<bool>,
    edge_offsets: Vec<usize>,
}

impl CellularSheaf {
    pub fn new(graph: Graph, stalk_dim: usize, maps: Vec<EdgeMaps>) -> Result<Self> {
        if stalk_dim == 0 {
            return Err(Error::InvalidSheaf("vertex stalk dimension must be positive".into()));
        }
        if maps.len() != graph.num_edges() {
            return Err(Error::InvalidSheaf(format!(
                "{} edges but {} restriction pairs",
                graph.num_edges(),
                maps.len()
            )));
        }
        for (i, m) in maps.iter().enumerate() {
            let ke = m.tail.rows();
            if ke == 0 {
                return Err(Error::InvalidSheaf(format!("edge {i} has an empty stalk")));
            }
            if m.tail.shape() != (ke, stalk_dim) || m.head.shape() != (ke, stalk_dim) {
                return Err(Error::InvalidSheaf(format!(
                    "edge {i}: restriction shapes {:?} and {:?}, expected {ke}x{stalk_dim}",
                    m.tail.shape(),
                    m.head.shape()
                )));
            }
            if !m.tail.is_finite() || !m.head.is_finite() {
                return Err(Error::InvalidSheaf(format!("edge {i} has non-finite restriction")));
            }
        }
        let mut edge_offsets = Vec::with_capacity(maps.len() + 1);
        edge_offsets.push(0);
        for m in &maps {
            edge_offsets.push(edge_offsets.last().unwrap() + m.edge_dim());
        }
        let reversed = vec![false; maps.len()];
        Ok(CellularSheaf {
            graph,
            stalk_dim,
            maps,
            reversed,
            edge_offsets,
        })
    }

    /// All stalks `R^k`, all restriction maps the identity.
    pub fn constant(graph: Graph, k: usize) -> Result<Self> {
        let maps = (0..graph.num_edges())
            .map(|_| EdgeMaps::new(Matrix::identity(k), Matrix::identity(k)))
            .collect();
        CellularSheaf::new(graph, k, maps)
    }

    /// Copy of this sheaf with the orientation of the listed edges flipped.
    pub fn with_reversed_edges(&self, edges: &[usize]) -> Result<Self> {
        let mut out = self.clone();
        for &e in edges {
            let flag = out
                .reversed
                .get_mut(e)
                .ok_or_else(|| Error::InvalidSheaf(format!("no edge {e}")))?;
            *flag = !*flag;
        }
        Ok(out)
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn stalk_dim(&self) -> usize {
        self.stalk_dim
    }

    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    pub fn maps(&self) -> &[EdgeMaps] {
        &self.maps
    }

    pub fn edge_dims(&self) -> Vec<usize> {
        self.maps.iter().map(EdgeMaps::edge_dim).collect()
    }

    pub fn edge_offset(&self, e: usize) -> usize {
        self.edge_offsets[e]
    }

    /// Oriented endpoints `(tail, head)` of edge `e` with their restriction maps.
    pub fn oriented(&self, e: usize) -> (usize, &Matrix, usize, &Matrix) {
        let edge = self.graph.edges()[e];
        let m = &self.maps[e];
        if self.reversed[e] {
            (edge.v, &m.head, edge.u, &m.tail)
        } else {
            (edge.u, &m.tail, edge.v, &m.head)
        }
    }

    /// Dimension of `C^0`, `num_nodes * k`.
    pub fn vertex_cochain_dim(&self) -> usize {
        self.num_nodes() * self.stalk_dim
    }

    /// Dimension of `C^1`, the sum of edge stalk dimensions.
    pub fn edge_cochain_dim(&self) -> usize {
        *self.edge_offsets.last().unwrap_or(&0)
    }

    /// Restriction of the sheaf to its non-isolated nodes, plus the kept
    /// node indices in their original numbering.
    pub fn without_isolated_nodes(&self) -> Result<(CellularSheaf, Vec<usize>)> {
        let isolated = self.graph.isolated_nodes();
        let mut new_index = vec![usize::MAX; self.num_nodes()];
        let mut kept = Vec::new();
        let mut next = 0;
        for v in 0..self.num_nodes() {
            if isolated.binary_search(&v).is_err() {
                new_index[v] = next;
                kept.push(v);
                next += 1;
            }
        }
        let edges = self
            .graph
            .edges()
            .iter()
            .map(|e| Edge::weighted(new_index[e.u], new_index[e.v], e.weight))
            .collect();
        let graph = Graph::new(kept.len(), edges)?;
        let mut out = CellularSheaf::new(graph, self.stalk_dim, self.maps.clone())?;
        out.reversed = self.reversed.clone();
        Ok((out, kept))
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: SheafFile = serde_json::from_str(s)?;
        file.into_sheaf()
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string(&SheafFile::from_sheaf(self))?)
    }
}

/// On-disk sheaf description; matrices are row-major nested arrays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SheafFile {
    pub num_nodes: usize,
    pub k: usize,
    pub edges: Vec<SheafEdgeRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SheafEdgeRecord {
    pub u: usize,
    pub v: usize,
    pub k_e: usize,
    #[serde(rename = "F_u")]
    pub f_u: Vec<Vec<f64>>,
    #[serde(rename = "F_v")]
    pub f_v: Vec<Vec<f64>>,
    #[serde(default = "default_weight")]
    pub weight: f64,
}

fn default_weight() -> f64 {
    1.0
}

impl SheafFile {
    pub fn into_sheaf(self) -> Result<CellularSheaf> {
        let mut edges = Vec::with_capacity(self.edges.len());
        let mut maps = Vec::with_capacity(self.edges.len());
        let mut flipped = Vec::new();
        for (i, rec) in self.edges.into_iter().enumerate() {
            let f_u = Matrix::from_rows(&rec.f_u)?;
            let f_v = Matrix::from_rows(&rec.f_v)?;
            if f_u.rows() != rec.k_e {
                return Err(Error::InvalidSheaf(format!(
                    "edge {i}: k_e = {} but F_u has {} rows",
                    rec.k_e,
                    f_u.rows()
                )));
            }
            // Keep maps attached to their endpoints; the listed direction is
            // preserved as the edge orientation.
            if rec.u > rec.v {
                maps.push(EdgeMaps::new(f_v, f_u));
                flipped.push(i);
            } else {
                maps.push(EdgeMaps::new(f_u, f_v));
            }
            edges.push(Edge::weighted(rec.u, rec.v, rec.weight));
        }
        let graph = Graph::new(self.num_nodes, edges)?;
        CellularSheaf::new(graph, self.k, maps)?.with_reversed_edges(&flipped)
    }

    pub fn from_sheaf(sheaf: &CellularSheaf) -> Self {
        let edges = (0..sheaf.graph.num_edges())
            .map(|e| {
                let (u, f_u, v, f_v) = sheaf.oriented(e);
                SheafEdgeRecord {
                    u,
                    v,
                    k_e: f_u.rows(),
                    f_u: f_u.to_rows(),
                    f_v: f_v.to_rows(),
                    weight: sheaf.graph.edges()[e].weight,
                }
            })
            .collect();
        SheafFile {
            num_nodes: sheaf.num_nodes(),
            k: sheaf.stalk_dim,
            edges,
        }
    }
}

/// A 0-cochain: one `k`-vector per node, stored contiguously.
#[derive(Clone, Debug, PartialEq)]
pub struct Cochain0(Vec<f64>);

impl Cochain0 {
    pub fn new(sheaf: &CellularSheaf, values: Vec<f64>) -> Result<Self> {
        if values.len() != sheaf.vertex_cochain_dim() {
            return Err(crate::error::shape_err(
                "Cochain0::new",
                sheaf.vertex_cochain_dim(),
                values.len(),
            ));
        }
        Ok(Cochain0(values))
    }

    /// Wraps raw values without a sheaf to validate against.
    pub fn from_vec(values: Vec<f64>) -> Self {
        Cochain0(values)
    }

    pub fn node(&self, v: usize, k: usize) -> &[f64] {
        &self.0[v * k..(v + 1) * k]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// A 1-cochain: one `k_e`-vector per edge.
#[derive(Clone, Debug, PartialEq)]
pub struct Cochain1(Vec<f64>);

impl Cochain1 {
    pub fn new(sheaf: &CellularSheaf, values: Vec<f64>) -> Result<Self> {
        if values.len() != sheaf.edge_cochain_dim() {
            return Err(crate::error::shape_err(
                "Cochain1::new",
                sheaf.edge_cochain_dim(),
                values.len(),
            ));
        }
        Ok(Cochain1(values))
    }

    pub fn edge<'a>(&'a self, sheaf: &CellularSheaf, e: usize) -> &'a [f64] {
        &self.0[sheaf.edge_offset(e)..sheaf.edge_offset(e + 1)]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}
