//! Builds the k-NN graph of a layered ellipsoidal shell and coarsens it into
//! a pooling hierarchy.
//!
//! ```text
//! cargo run --release --example mesh_hierarchy
//! ```

use cardio::mesh::{build_hierarchy, build_knn_graph, ellipsoid_shell, pool, unpool, ShellSpec};
use ndarray::Array2;

fn main() -> cardio::Result<()> {
    let points = ellipsoid_shell(&ShellSpec::default())?;
    let graph = build_knn_graph(&points, 6)?;
    println!(
        "{} vertices, {} edges, connected: {}",
        graph.len(),
        graph.edge_count(),
        graph.is_connected()
    );

    let hierarchy = build_hierarchy(graph, 3)?;
    for (level, g) in hierarchy.graphs().iter().enumerate() {
        let mean_degree = (0..g.len()).map(|i| g.degree(i)).sum::<usize>() as f64 / g.len() as f64;
        println!("level {level}: {:>4} vertices, mean degree {mean_degree:.2}", g.len());
    }

    // pool the vertex heights down one level and bring them back up
    let p = hierarchy.assignment(0);
    let heights = Array2::from_shape_fn((points.len(), 1), |(i, _)| points[i].z);
    let coarse = pool(p, &heights)?;
    let back = unpool(p, &coarse)?;
    let err = (&back - &heights).iter().map(|v| v * v).sum::<f64>().sqrt();
    println!("pool/unpool residual on z: {err:.4}");
    println!("hierarchy checksum {}", hierarchy.checksum());
    Ok(())
}
