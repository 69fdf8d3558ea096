use std::cmp::Ordering;
use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// A point in 3D space.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Component-wise `other - self`.
    pub fn offset_to(&self, other: &Point3) -> [f64; 3] {
        [other.x - self.x, other.y - self.y, other.z - self.z]
    }

    pub fn distance_sq(&self, other: &Point3) -> f64 {
        let [dx, dy, dz] = self.offset_to(other);
        dx * dx + dy * dy + dz * dz
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        self.distance_sq(other).sqrt()
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn centroid(points: &[Point3]) -> Point3 {
        let n = points.len().max(1) as f64;
        let (x, y, z) = points
            .iter()
            .fold((0.0, 0.0, 0.0), |(x, y, z), p| (x + p.x, y + p.y, z + p.z));
        Point3::new(x / n, y / n, z / n)
    }

    fn lexical_cmp(&self, other: &Point3) -> Ordering {
        self.x
            .total_cmp(&other.x)
            .then(self.y.total_cmp(&other.y))
            .then(self.z.total_cmp(&other.z))
    }
}

/// Geometric graph over a point cloud with per-edge pseudo-coordinates.
///
/// Edges are stored as sorted adjacency lists and are always symmetric.
/// `pseudo[i][n]` belongs to the directed edge `(i, neighbors[i][n])`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeshGraph {
    positions: Vec<Point3>,
    neighbors: Vec<Vec<usize>>,
    pseudo: Vec<Vec<[f64; 3]>>,
    k: usize,
}

impl MeshGraph {
    /// Builds a graph from explicit undirected edges. Reversed pairs are added
    /// automatically and pseudo-coordinates are computed.
    pub fn from_edges(positions: Vec<Point3>, edges: &[(usize, usize)], k: usize) -> Result<Self> {
        validate_points(&positions)?;
        let n = positions.len();
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidInput(format!(
                    "edge ({i}, {j}) out of range for {n} vertices"
                )));
            }
            if i == j {
                return Err(Error::InvalidInput(format!("self-loop at vertex {i}")));
            }
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        let mut graph = MeshGraph {
            positions,
            neighbors,
            pseudo: Vec::new(),
            k,
        };
        graph.compute_pseudo_coords()?;
        Ok(graph)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Neighbor count requested at construction.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn positions(&self) -> &[Point3] {
        &self.positions
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Pseudo-coordinates of the edges leaving `i`, parallel to [`Self::neighbors`].
    pub fn pseudo(&self, i: usize) -> &[[f64; 3]] {
        &self.pseudo[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    /// Pseudo-coordinate of the directed edge `(i, j)`, if present.
    pub fn edge_pseudo(&self, i: usize, j: usize) -> Option<[f64; 3]> {
        self.neighbors[i]
            .binary_search(&j)
            .ok()
            .map(|n| self.pseudo[i][n])
    }

    /// Number of directed edges (twice the undirected count).
    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum()
    }

    /// Directed edges in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, list)| list.iter().map(move |&j| (i, j)))
    }

    /// Dense 0/1 adjacency, row-major `N x N`.
    pub fn adjacency_dense(&self) -> Vec<u8> {
        let n = self.len();
        let mut adj = vec![0u8; n * n];
        for (i, j) in self.edges() {
            adj[i * n + j] = 1;
        }
        adj
    }

    /// Connected components as a label per vertex, numbered by first vertex.
    pub fn components(&self) -> (usize, Vec<usize>) {
        let n = self.len();
        let mut label = vec![usize::MAX; n];
        let mut count = 0;
        let mut queue = VecDeque::new();
        for start in 0..n {
            if label[start] != usize::MAX {
                continue;
            }
            label[start] = count;
            queue.push_back(start);
            while let Some(v) = queue.pop_front() {
                for &w in &self.neighbors[v] {
                    if label[w] == usize::MAX {
                        label[w] = count;
                        queue.push_back(w);
                    }
                }
            }
            count += 1;
        }
        (count, label)
    }

    pub fn is_connected(&self) -> bool {
        self.components().0 <= 1
    }

    /// Hop distances from `source`; unreachable vertices get `usize::MAX`.
    pub fn hop_distances(&self, source: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.len()];
        let mut queue = VecDeque::from([source]);
        dist[source] = 0;
        while let Some(v) = queue.pop_front() {
            for &w in &self.neighbors[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// SHA-256 over positions and adjacency lists, hex encoded.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.len() as u64).to_le_bytes());
        for p in &self.positions {
            for c in p.as_array() {
                hasher.update(c.to_le_bytes());
            }
        }
        for list in &self.neighbors {
            hasher.update((list.len() as u64).to_le_bytes());
            for &j in list {
                hasher.update((j as u64).to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }

    /// Fills the pseudo-coordinates: `(pos(j) - pos(i)) / (2L) + 0.5` with `L`
    /// the largest absolute offset component over all edges.
    pub fn compute_pseudo_coords(&mut self) -> Result<()> {
        let mut scale = 0.0f64;
        for (i, list) in self.neighbors.iter().enumerate() {
            for &j in list {
                let delta = self.positions[i].offset_to(&self.positions[j]);
                scale = delta.iter().fold(scale, |m, d| m.max(d.abs()));
            }
        }
        if self.edge_count() > 0 && scale == 0.0 {
            return Err(Error::Degenerate(
                "all edge offsets are zero; pseudo-coordinates undefined".into(),
            ));
        }
        let inv = if scale > 0.0 { 1.0 / (2.0 * scale) } else { 0.0 };
        self.pseudo = self
            .neighbors
            .iter()
            .enumerate()
            .map(|(i, list)| {
                list.iter()
                    .map(|&j| {
                        let d = self.positions[i].offset_to(&self.positions[j]);
                        [
                            (d[0] * inv + 0.5).clamp(0.0, 1.0),
                            (d[1] * inv + 0.5).clamp(0.0, 1.0),
                            (d[2] * inv + 0.5).clamp(0.0, 1.0),
                        ]
                    })
                    .collect()
            })
            .collect();
        Ok(())
    }
}

fn validate_points(points: &[Point3]) -> Result<()> {
    if let Some(i) = points.iter().position(|p| !p.is_finite()) {
        return Err(Error::InvalidInput(format!("point {i} has non-finite coordinates")));
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].lexical_cmp(&points[b]).then(a.cmp(&b)));
    for pair in order.windows(2) {
        if points[pair[0]] == points[pair[1]] {
            let (first, second) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
            return Err(Error::DuplicatePoints { first, second });
        }
    }
    Ok(())
}

/// Builds the symmetrized k-nearest-neighbor graph of a point cloud.
///
/// Each vertex links to its `k` nearest distinct points (distance ties go to
/// the lower index); the edge set is then closed under reversal.
pub fn build_knn_graph(points: &[Point3], k: usize) -> Result<MeshGraph> {
    let n = points.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 points, got {n}")));
    }
    if k == 0 || k >= n {
        return Err(Error::InvalidInput(format!(
            "k must satisfy 1 <= k < N (k = {k}, N = {n})"
        )));
    }
    validate_points(points)?;

    let mut edges = Vec::with_capacity(n * k);
    let mut candidates: Vec<(f64, usize)> = Vec::with_capacity(n);
    let by_distance = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    for (i, p) in points.iter().enumerate() {
        candidates.clear();
        candidates.extend(
            points
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(j, q)| (p.distance_sq(q), j)),
        );
        candidates.select_nth_unstable_by(k - 1, by_distance);
        edges.extend(candidates[..k].iter().map(|&(_, j)| (i, j)));
    }
    MeshGraph::from_edges(points.to_vec(), &edges, k)
}
