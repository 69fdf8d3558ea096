use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Degree and per-dimension size of the open B-spline kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSpec {
    pub degree: usize,
    pub size: [usize; 3],
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec {
            degree: 1,
            size: [5, 5, 5],
        }
    }
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.size.iter().any(|&k| k < self.degree + 1) {
            return Err(Error::InvalidInput(format!(
                "kernel size {:?} too small for degree {}",
                self.size, self.degree
            )));
        }
        Ok(())
    }

    /// Total number of control points `k1 k2 k3`.
    pub fn control_points(&self) -> usize {
        self.size.iter().product()
    }

    /// Control points touched by one pseudo-coordinate, `(m + 1)^3`.
    pub fn active(&self) -> usize {
        (self.degree + 1).pow(3)
    }

    /// Flat index of a control point; the first dimension varies fastest.
    pub fn flat_index(&self, idx: [usize; 3]) -> usize {
        idx[0] + self.size[0] * (idx[1] + self.size[1] * idx[2])
    }
}

/// Nonzero open-uniform B-spline bases of degree `m` among `k` functions at
/// `v`: returns the index of the first one and the `m + 1` values.
pub fn basis_1d(v: f64, m: usize, k: usize) -> Result<(usize, Vec<f64>)> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::InvalidInput(format!("coordinate {v} outside [0, 1]")));
    }
    if k < m + 1 {
        return Err(Error::InvalidInput(format!("{k} bases cannot carry degree {m}")));
    }
    let segments = k - m;
    let knot = |i: usize| -> f64 {
        if i <= m {
            0.0
        } else if i >= k {
            1.0
        } else {
            (i - m) as f64 / segments as f64
        }
    };
    // knot span s with knot(s) <= v < knot(s + 1); v = 1 belongs to the last span
    let span = (m + (v * segments as f64).floor() as usize).min(k - 1);

    // Cox-de Boor triangle for the m + 1 nonzero functions
    let mut values = vec![0.0; m + 1];
    let mut left = vec![0.0; m + 1];
    let mut right = vec![0.0; m + 1];
    values[0] = 1.0;
    for j in 1..=m {
        left[j] = v - knot(span + 1 - j);
        right[j] = knot(span + j) - v;
        let mut saved = 0.0;
        for r in 0..j {
            let denom = right[r + 1] + left[j - r];
            let temp = if denom != 0.0 { values[r] / denom } else { 0.0 };
            values[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        values[j] = saved;
    }
    Ok((span - m, values))
}

/// Tensor-product basis at a pseudo-coordinate: `(m + 1)^3` pairs of
/// (flat control point index, weight); weights sum to one.
pub fn bspline_basis(v: [f64; 3], spec: &KernelSpec) -> Result<Vec<(usize, f64)>> {
    spec.validate()?;
    let m = spec.degree;
    let per_dim: Vec<(usize, Vec<f64>)> = (0..3)
        .map(|d| basis_1d(v[d], m, spec.size[d]))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(spec.active());
    for c in 0..=m {
        for b in 0..=m {
            for a in 0..=m {
                let idx = [per_dim[0].0 + a, per_dim[1].0 + b, per_dim[2].0 + c];
                let w = per_dim[0].1[a] * per_dim[1].1[b] * per_dim[2].1[c];
                out.push((spec.flat_index(idx), w));
            }
        }
    }
    Ok(out)
}
