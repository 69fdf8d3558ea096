use ndarray::Array2;
use sha2::{Digest, Sha256};

use super::graph::{MeshGraph, Point3};
use crate::error::{Error, Result};

/// One-hot fine-to-coarse cluster membership (`N1 x N2` binary matrix).
///
/// Stored as the column index of the single 1 in each row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AssignmentMatrix {
    cluster: Vec<usize>,
    sizes: Vec<usize>,
}

impl AssignmentMatrix {
    pub fn new(cluster: Vec<usize>, n_coarse: usize) -> Result<Self> {
        let n_fine = cluster.len();
        if n_coarse == 0 || n_coarse >= n_fine {
            return Err(Error::InvalidInput(format!(
                "assignment must shrink: {n_fine} -> {n_coarse}"
            )));
        }
        let mut sizes = vec![0usize; n_coarse];
        for (row, &c) in cluster.iter().enumerate() {
            if c >= n_coarse {
                return Err(Error::InvalidInput(format!(
                    "row {row} assigned to cluster {c} >= {n_coarse}"
                )));
            }
            sizes[c] += 1;
        }
        if let Some(empty) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidInput(format!("cluster {empty} is empty")));
        }
        Ok(AssignmentMatrix { cluster, sizes })
    }

    /// Builds from a dense row-major 0/1 matrix.
    pub fn from_dense(rows: usize, cols: usize, entries: &[u8]) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::mismatch(rows * cols, entries.len()));
        }
        let mut cluster = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = &entries[r * cols..(r + 1) * cols];
            let ones: Vec<usize> = (0..cols).filter(|&c| row[c] != 0).collect();
            if ones.len() != 1 || row[ones[0]] != 1 {
                return Err(Error::InvalidInput(format!("row {r} is not one-hot")));
            }
            cluster.push(ones[0]);
        }
        AssignmentMatrix::new(cluster, cols)
    }

    pub fn fine_len(&self) -> usize {
        self.cluster.len()
    }

    pub fn coarse_len(&self) -> usize {
        self.sizes.len()
    }

    /// Coarse vertex containing fine vertex `i`.
    pub fn cluster_of(&self, i: usize) -> usize {
        self.cluster[i]
    }

    pub fn clusters(&self) -> &[usize] {
        &self.cluster
    }

    pub fn cluster_size(&self, c: usize) -> usize {
        self.sizes[c]
    }

    pub fn to_dense(&self) -> Vec<u8> {
        let cols = self.coarse_len();
        let mut out = vec![0u8; self.fine_len() * cols];
        for (r, &c) in self.cluster.iter().enumerate() {
            out[r * cols + c] = 1;
        }
        out
    }
}

/// Cluster-average pooling, `P_n^T F` with `P_n` the column-normalized `P`.
pub fn pool(p: &AssignmentMatrix, features: &Array2<f64>) -> Result<Array2<f64>> {
    if features.nrows() != p.fine_len() {
        return Err(Error::mismatch(
            format!("{} rows", p.fine_len()),
            format!("{} rows", features.nrows()),
        ));
    }
    let mut out = Array2::zeros((p.coarse_len(), features.ncols()));
    for (i, row) in features.outer_iter().enumerate() {
        let mut target = out.row_mut(p.cluster[i]);
        target += &row;
    }
    for (c, mut row) in out.outer_iter_mut().enumerate() {
        row /= p.sizes[c] as f64;
    }
    Ok(out)
}

/// Unpooling `P F_c`: every fine vertex receives its cluster's row.
pub fn unpool(p: &AssignmentMatrix, coarse: &Array2<f64>) -> Result<Array2<f64>> {
    if coarse.nrows() != p.coarse_len() {
        return Err(Error::mismatch(
            format!("{} rows", p.coarse_len()),
            format!("{} rows", coarse.nrows()),
        ));
    }
    let mut out = Array2::zeros((p.fine_len(), coarse.ncols()));
    for (i, mut row) in out.outer_iter_mut().enumerate() {
        row.assign(&coarse.row(p.cluster[i]));
    }
    Ok(out)
}

/// One level of greedy normalized-cut matching.
///
/// Vertices are visited in ascending index. An unmatched vertex `i` merges
/// with the unmatched neighbor `j` maximizing `w(i,j) (1/d(i) + 1/d(j))`,
/// where `w` is inverse Euclidean distance and `d` the weighted degree.
pub fn coarsen(graph: &MeshGraph) -> Result<(MeshGraph, AssignmentMatrix)> {
    let n = graph.len();
    if n < 2 {
        return Err(Error::InvalidInput("cannot coarsen a single-vertex graph".into()));
    }
    if graph.edge_count() == 0 {
        return Err(Error::InvalidInput("cannot coarsen a graph without edges".into()));
    }
    let pos = graph.positions();
    let weight = |i: usize, j: usize| 1.0 / pos[i].distance(&pos[j]);
    let degree: Vec<f64> = (0..n)
        .map(|i| graph.neighbors(i).iter().map(|&j| weight(i, j)).sum())
        .collect();

    const UNSET: usize = usize::MAX;
    let mut cluster = vec![UNSET; n];
    let mut next = 0;
    for i in 0..n {
        if cluster[i] != UNSET {
            continue;
        }
        let mut best: Option<(f64, usize)> = None;
        for &j in graph.neighbors(i) {
            if cluster[j] != UNSET {
                continue;
            }
            let score = weight(i, j) * (1.0 / degree[i] + 1.0 / degree[j]);
            if best.map_or(true, |(s, _)| score > s) {
                best = Some((score, j));
            }
        }
        cluster[i] = next;
        if let Some((_, j)) = best {
            cluster[j] = next;
        }
        next += 1;
    }

    let assignment = AssignmentMatrix::new(cluster, next)?;
    let mut members: Vec<Vec<Point3>> = vec![Vec::with_capacity(2); next];
    for (i, &c) in assignment.clusters().iter().enumerate() {
        members[c].push(pos[i]);
    }
    let coarse_pos: Vec<Point3> = members.iter().map(|m| Point3::centroid(m)).collect();
    let mut coarse_edges = Vec::new();
    for (i, j) in graph.edges() {
        let (a, b) = (assignment.cluster_of(i), assignment.cluster_of(j));
        if a < b {
            coarse_edges.push((a, b));
        }
    }
    coarse_edges.sort_unstable();
    coarse_edges.dedup();
    let min_degree = {
        let mut deg = vec![0usize; next];
        for &(a, b) in &coarse_edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg.into_iter().min().unwrap_or(0)
    };
    let coarse = MeshGraph::from_edges(coarse_pos, &coarse_edges, min_degree)?;
    Ok((coarse, assignment))
}

/// Multilevel coarsening ladder, finest graph first.
#[derive(Clone, Debug, PartialEq)]
pub struct CoarseningHierarchy {
    graphs: Vec<MeshGraph>,
    assignments: Vec<AssignmentMatrix>,
}

impl CoarseningHierarchy {
    /// Assembles a hierarchy from parts, checking that consecutive levels agree.
    pub fn from_parts(graphs: Vec<MeshGraph>, assignments: Vec<AssignmentMatrix>) -> Result<Self> {
        if graphs.len() != assignments.len() + 1 {
            return Err(Error::mismatch(
                format!("{} graphs", assignments.len() + 1),
                format!("{} graphs", graphs.len()),
            ));
        }
        for (l, p) in assignments.iter().enumerate() {
            if p.fine_len() != graphs[l].len() || p.coarse_len() != graphs[l + 1].len() {
                return Err(Error::InvalidInput(format!(
                    "level {l} assignment is {}x{} but graphs have {} and {} vertices",
                    p.fine_len(),
                    p.coarse_len(),
                    graphs[l].len(),
                    graphs[l + 1].len()
                )));
            }
        }
        Ok(CoarseningHierarchy {
            graphs,
            assignments,
        })
    }

    pub fn depth(&self) -> usize {
        self.assignments.len()
    }

    /// Graph at `level` (0 is the finest).
    pub fn graph(&self, level: usize) -> &MeshGraph {
        &self.graphs[level]
    }

    pub fn graphs(&self) -> &[MeshGraph] {
        &self.graphs
    }

    /// Assignment from `level` to `level + 1`.
    pub fn assignment(&self, level: usize) -> &AssignmentMatrix {
        &self.assignments[level]
    }

    pub fn assignments(&self) -> &[AssignmentMatrix] {
        &self.assignments
    }

    pub fn finest(&self) -> &MeshGraph {
        &self.graphs[0]
    }

    pub fn coarsest(&self) -> &MeshGraph {
        self.graphs.last().expect("hierarchy always holds the input graph")
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.graphs.iter().map(MeshGraph::len).collect()
    }

    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for g in &self.graphs {
            hasher.update(g.checksum().as_bytes());
        }
        for p in &self.assignments {
            for &c in p.clusters() {
                hasher.update((c as u64).to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }
}

/// Applies [`coarsen`] `depth` times.
pub fn build_hierarchy(graph: MeshGraph, depth: usize) -> Result<CoarseningHierarchy> {
    let mut graphs = vec![graph];
    let mut assignments = Vec::with_capacity(depth);
    for level in 0..depth {
        let current = &graphs[level];
        if current.len() < 2 || current.edge_count() == 0 {
            return Err(Error::DepthInfeasible {
                requested: depth,
                achievable: level,
            });
        }
        let (coarse, p) = coarsen(current)?;
        graphs.push(coarse);
        assignments.push(p);
    }
    CoarseningHierarchy::from_parts(graphs, assignments)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn cycle(n: usize) -> MeshGraph {
        let pts: Vec<Point3> = (0..n)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / n as f64;
                Point3::new(a.cos(), a.sin(), 0.0)
            })
            .collect();
        let edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        MeshGraph::from_edges(pts, &edges, 2).unwrap()
    }

    #[test]
    fn two_vertices_merge() {
        let g = MeshGraph::from_edges(
            vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0)],
            &[(0, 1)],
            1,
        )
        .unwrap();
        let (c, p) = coarsen(&g).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(p.to_dense(), vec![1, 1]);
        assert_eq!(c.positions()[0], Point3::new(0.5, 0.0, 0.0));
    }

    #[test]
    fn eight_cycle_halves() {
        let (c, p) = coarsen(&cycle(8)).unwrap();
        assert_eq!(c.len(), 4);
        // equal weights everywhere, so each vertex takes its lowest free neighbor
        assert_eq!(p.clusters(), &[0, 0, 1, 1, 2, 2, 3, 3]);
        assert_eq!(c.degree(0), 2);
    }

    #[test]
    fn single_vertex_rejected() {
        let g = MeshGraph::from_edges(vec![Point3::default()], &[], 0).unwrap();
        assert!(coarsen(&g).is_err());
    }

    #[test]
    fn depth_zero_is_identity() {
        let g = cycle(6);
        let h = build_hierarchy(g.clone(), 0).unwrap();
        assert_eq!(h.depth(), 0);
        assert_eq!(h.finest(), &g);
    }

    #[test]
    fn too_deep_reports_achievable() {
        match build_hierarchy(cycle(8), 4) {
            Err(Error::DepthInfeasible {
                requested,
                achievable,
            }) => {
                assert_eq!(requested, 4);
                assert_eq!(achievable, 3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn pool_and_unpool_small() {
        let p = AssignmentMatrix::new(vec![0, 0], 1).unwrap();
        let pooled = pool(&p, &array![[1.0], [3.0]]).unwrap();
        assert_eq!(pooled, array![[2.0]]);
        assert_eq!(unpool(&p, &array![[2.0]]).unwrap(), array![[2.0], [2.0]]);
        assert!(pool(&p, &array![[1.0]]).is_err());
        assert!(unpool(&p, &array![[1.0], [2.0]]).is_err());
    }

    #[test]
    fn assignment_validation() {
        assert!(AssignmentMatrix::new(vec![0, 2, 1], 3).is_err());
        assert!(AssignmentMatrix::new(vec![0, 0, 2], 3).is_err());
        assert!(AssignmentMatrix::from_dense(2, 1, &[1, 1]).is_ok());
        assert!(AssignmentMatrix::from_dense(2, 1, &[1, 0]).is_err());
    }
}
