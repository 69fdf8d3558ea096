#![allow(dead_code)]

pub mod oracle;

use cardio::mesh::{build_hierarchy, build_knn_graph, ellipsoid_shell, CoarseningHierarchy, MeshGraph, Point3, ShellSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform points in the unit cube.
pub fn random_points(n: usize, seed: u64) -> Vec<Point3> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| Point3::new(r.gen(), r.gen(), r.gen()))
        .collect()
}

pub fn shell(vertices: usize, seed: u64) -> Vec<Point3> {
    ellipsoid_shell(&ShellSpec {
        vertices,
        seed,
        ..ShellSpec::default()
    })
    .unwrap()
}

pub fn shell_graph(vertices: usize, k: usize) -> MeshGraph {
    build_knn_graph(&shell(vertices, 0), k).unwrap()
}

pub fn hierarchy(points: &[Point3], k: usize, depth: usize) -> CoarseningHierarchy {
    build_hierarchy(build_knn_graph(points, k).unwrap(), depth).unwrap()
}

/// Fresh scratch directory under the target dir, removed first if present.
pub fn scratch_dir(name: &str) -> std::path::PathBuf {
    let dir = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
