use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::Point3;
use crate::error::{Error, Result};

/// Parameters of the built-in thick ellipsoidal shell point cloud.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShellSpec {
    pub vertices: usize,
    /// Outer semi-axes.
    pub axes: [f64; 3],
    /// Wall thickness as a fraction of the outer radius.
    pub thickness: f64,
    pub layers: usize,
    /// Jitter amplitude relative to the mean point spacing.
    pub jitter: f64,
    pub seed: u64,
}

impl Default for ShellSpec {
    fn default() -> Self {
        ShellSpec {
            vertices: 300,
            axes: [1.0, 1.0, 1.5],
            thickness: 0.3,
            layers: 3,
            jitter: 0.1,
            seed: 0,
        }
    }
}

/// Generates a layered ellipsoidal shell: each layer is a Fibonacci spiral
/// scaled to its radius, with point counts proportional to layer area.
pub fn ellipsoid_shell(spec: &ShellSpec) -> Result<Vec<Point3>> {
    if spec.vertices < spec.layers.max(2) || spec.layers == 0 {
        return Err(Error::InvalidInput(format!(
            "shell needs at least one vertex per layer ({} vertices, {} layers)",
            spec.vertices, spec.layers
        )));
    }
    if !(0.0..1.0).contains(&spec.thickness) || spec.axes.iter().any(|a| !(*a > 0.0)) {
        return Err(Error::InvalidInput("shell axes must be positive and thickness in [0,1)".into()));
    }
    let radii: Vec<f64> = (0..spec.layers)
        .map(|l| {
            if spec.layers == 1 {
                1.0
            } else {
                1.0 - spec.thickness * l as f64 / (spec.layers - 1) as f64
            }
        })
        .collect();
    let area: f64 = radii.iter().map(|r| r * r).sum();
    let mut counts: Vec<usize> = radii
        .iter()
        .map(|r| ((r * r / area) * spec.vertices as f64).floor().max(1.0) as usize)
        .collect();
    let assigned: usize = counts.iter().sum();
    counts[0] += spec.vertices.saturating_sub(assigned);

    let mean_axis = spec.axes.iter().sum::<f64>() / 3.0;
    let spacing = mean_axis * (4.0 * std::f64::consts::PI / (counts[0] as f64)).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let mut points = Vec::with_capacity(spec.vertices);
    for (layer, (&count, &radius)) in counts.iter().zip(&radii).enumerate() {
        let twist = layer as f64 * 0.5 * golden;
        for i in 0..count {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
            let rho = (1.0 - z * z).sqrt();
            let phi = golden * i as f64 + twist;
            let mut p = [
                spec.axes[0] * radius * rho * phi.cos(),
                spec.axes[1] * radius * rho * phi.sin(),
                spec.axes[2] * radius * z,
            ];
            for c in &mut p {
                *c += spec.jitter * spacing * rng.gen_range(-0.5..0.5);
            }
            points.push(Point3::new(p[0], p[1], p[2]));
        }
    }
    Ok(points)
}
