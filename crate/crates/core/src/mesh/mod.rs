//! Geometric graphs over point clouds and their coarsening hierarchies.

mod coarsen;
mod graph;
mod shell;

pub use coarsen::{build_hierarchy, coarsen, pool, unpool, AssignmentMatrix, CoarseningHierarchy};
pub use graph::{build_knn_graph, MeshGraph, Point3};
pub use shell::{ellipsoid_shell, ShellSpec};
