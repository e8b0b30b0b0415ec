//! Undirected prosumer topology.
//!
//! Nodes are indexed `0..n` in input order. Every node's closed neighborhood
//! (its neighbors plus itself) is kept sorted ascending; allocation vectors are
//! indexed by position in that list.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// A facility position in abstract distance units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Closed neighborhood of `center`: sorted members, center included.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Neighborhood {
    pub center: usize,
    pub members: Vec<usize>,
}

impl Neighborhood {
    pub fn local_dim(&self) -> usize {
        self.members.len()
    }

    /// Position of `node` inside `members`, if present.
    pub fn slot(&self, node: usize) -> Option<usize> {
        self.members.binary_search(&node).ok()
    }

    /// Position of the center inside `members`.
    pub fn self_slot(&self) -> usize {
        self.slot(self.center).expect("center is always a member")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGraph {
    n: usize,
    adjacency: Vec<bool>,
    closed: Vec<Vec<usize>>,
    positions: Option<Vec<Point>>,
}

impl NetworkGraph {
    /// Connects every pair of distinct facilities within `threshold` of each other.
    pub fn from_positions(positions: &[Point], threshold: f64) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidInput("no positions given".into()));
        }
        if threshold.is_nan() || threshold < 0.0 {
            return Err(Error::param("threshold", format!("must be >= 0, got {threshold}")));
        }
        if let Some(k) = positions.iter().position(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::InvalidInput(format!("position {k} has a non-finite coordinate")));
        }
        let n = positions.len();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if positions[i].distance(&positions[j]) <= threshold {
                    edges.push((i, j));
                }
            }
        }
        let mut g = Self::from_edges(n, &edges)?;
        g.positions = Some(positions.to_vec());
        Ok(g)
    }

    /// Builds a graph from an explicit edge list. Duplicate edges are idempotent.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("graph needs at least one node".into()));
        }
        let mut adjacency = vec![false; n * n];
        for &(i, j) in edges {
            for node in [i, j] {
                if node >= n {
                    return Err(Error::NodeOutOfRange { node, nodes: n });
                }
            }
            if i == j {
                return Err(Error::SelfLoop(i));
            }
            adjacency[i * n + j] = true;
            adjacency[j * n + i] = true;
        }
        let closed = (0..n)
            .map(|i| (0..n).filter(|&j| j == i || adjacency[i * n + j]).collect())
            .collect();
        Ok(NetworkGraph {
            n,
            adjacency,
            closed,
            positions: None,
        })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn positions(&self) -> Option<&[Point]> {
        self.positions.as_deref()
    }

    /// `A[i][j]`; false on the diagonal.
    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.n + j]
    }

    /// Open-neighborhood size `|N_i|` (excludes the node itself).
    pub fn degree(&self, i: usize) -> usize {
        self.closed[i].len() - 1
    }

    pub fn max_degree(&self) -> usize {
        (0..self.n).map(|i| self.degree(i)).max().unwrap_or(0)
    }

    /// Sorted closed-neighborhood members of `i`, without bounds checking.
    pub fn members(&self, i: usize) -> &[usize] {
        &self.closed[i]
    }

    pub fn neighborhood(&self, i: usize) -> Result<Neighborhood> {
        if i >= self.n {
            return Err(Error::NodeOutOfRange { node: i, nodes: self.n });
        }
        Ok(Neighborhood {
            center: i,
            members: self.closed[i].clone(),
        })
    }

    /// Position of `j` within node `i`'s closed neighborhood.
    pub fn slot(&self, i: usize, j: usize) -> Option<usize> {
        self.closed[i].binary_search(&j).ok()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if self.adjacent(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

/// Uniform random facility positions on a `side x side` square.
///
/// Stands in for a real facility map; pair with [`NetworkGraph::from_positions`].
pub fn synthetic_positions(n: usize, side: f64, seed: u64) -> Vec<Point> {
    let mut rng = rng::stream(seed, 0x706f_7369_7469_6f6e, 0);
    (0..n)
        .map(|_| Point::new(rng.random::<f64>() * side, rng.random::<f64>() * side))
        .collect()
}
