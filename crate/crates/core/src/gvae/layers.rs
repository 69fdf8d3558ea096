use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::mesh::AssignmentMatrix;

/// Fully connected layer, `y = W x + b` with `W` stored row-major `out x in`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct DenseGrad {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn init(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        Dense {
            in_dim,
            out_dim,
            weight: (0..in_dim * out_dim).map(|_| rng.gen_range(-bound..bound)).collect(),
            bias: vec![0.0; out_dim],
        }
    }

    pub fn zero_grad(&self) -> DenseGrad {
        DenseGrad {
            weight: vec![0.0; self.weight.len()],
            bias: vec![0.0; self.bias.len()],
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        self.weight
            .chunks_exact(self.in_dim)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }

    /// Accumulates into `grad`; returns `dL/dx`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: Option<&mut DenseGrad>) -> Vec<f64> {
        if let Some(g) = grad {
            for (o, &d) in dy.iter().enumerate() {
                g.bias[o] += d;
                let row = &mut g.weight[o * self.in_dim..(o + 1) * self.in_dim];
                for (gw, &xv) in row.iter_mut().zip(x) {
                    *gw += d * xv;
                }
            }
        }
        let mut dx = vec![0.0; self.in_dim];
        for (row, &d) in self.weight.chunks_exact(self.in_dim).zip(dy) {
            for (dxv, &w) in dx.iter_mut().zip(row) {
                *dxv += d * w;
            }
        }
        dx
    }
}

pub fn elu_in_place(a: &mut Array2<f64>) {
    a.mapv_inplace(|x| if x > 0.0 { x } else { x.exp_m1() });
}

/// Multiplies `grad` by the ELU derivative, recovered from the activation.
pub fn elu_backward(activated: &Array2<f64>, grad: &mut Array2<f64>) {
    grad.zip_mut_with(activated, |g, &y| {
        if y <= 0.0 {
            *g *= y + 1.0;
        }
    });
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Gradient of cluster-average pooling: each fine row gets its cluster's
/// gradient divided by the cluster size.
pub fn pool_backward(p: &AssignmentMatrix, d_coarse: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((p.fine_len(), d_coarse.ncols()));
    for (i, mut row) in out.outer_iter_mut().enumerate() {
        let c = p.cluster_of(i);
        let scale = 1.0 / p.cluster_size(c) as f64;
        row.zip_mut_with(&d_coarse.row(c), |o, &d| *o = d * scale);
    }
    out
}

/// Gradient of unpooling: sum over cluster members.
pub fn unpool_backward(p: &AssignmentMatrix, d_fine: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((p.coarse_len(), d_fine.ncols()));
    for (i, row) in d_fine.outer_iter().enumerate() {
        let mut target = out.row_mut(p.cluster_of(i));
        target += &row;
    }
    out
}
