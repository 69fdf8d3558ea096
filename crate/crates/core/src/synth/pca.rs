use nalgebra::{DMatrix, DVector};
use ndarray::Array2;

use crate::error::{Error, Result};

/// Linear baseline: sample mean plus principal directions of the centered data.
#[derive(Clone, Debug)]
pub struct PcaModel {
    mean: DVector<f64>,
    /// `N x r` with orthonormal columns, ordered by decreasing singular value.
    components: DMatrix<f64>,
    singular_values: Vec<f64>,
    samples: usize,
}

impl PcaModel {
    /// Fits on a sample matrix whose rows are fields.
    pub fn fit(data: &Array2<f64>) -> Result<Self> {
        let (samples, n) = data.dim();
        if samples == 0 || n == 0 {
            return Err(Error::InvalidInput("PCA needs a nonempty sample matrix".into()));
        }
        let x = DMatrix::from_row_iterator(samples, n, data.iter().copied());
        let mean = x.row_mean().transpose();
        let mut centered = x;
        for mut row in centered.row_iter_mut() {
            row -= mean.transpose();
        }
        let rank = samples.min(n);
        // thin SVD wants the tall orientation
        let (vectors, values) = if samples >= n {
            let svd = centered.svd(false, true);
            let v_t = svd.v_t.ok_or_else(|| Error::Factorization("SVD failed".into()))?;
            (v_t.transpose(), svd.singular_values)
        } else {
            let svd = centered.transpose().svd(true, false);
            let u = svd.u.ok_or_else(|| Error::Factorization("SVD failed".into()))?;
            (u, svd.singular_values)
        };
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
        order.truncate(rank);
        let components = DMatrix::from_fn(n, order.len(), |r, c| vectors[(r, order[c])]);
        Ok(PcaModel {
            mean,
            singular_values: order.iter().map(|&i| values[i]).collect(),
            components,
            samples,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Largest usable `q`, i.e. `min(N, samples)`.
    pub fn max_components(&self) -> usize {
        self.components.ncols()
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.as_slice()
    }

    pub fn components(&self) -> &DMatrix<f64> {
        &self.components
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    /// `mean + V_q V_q^T (theta - mean)`.
    pub fn reconstruct(&self, theta: &[f64], q: usize) -> Result<Vec<f64>> {
        if theta.len() != self.dim() {
            return Err(Error::mismatch(self.dim(), theta.len()));
        }
        if q > self.max_components() {
            return Err(Error::InvalidInput(format!(
                "q = {q} exceeds min(N, samples) = {}",
                self.max_components()
            )));
        }
        let centered = DVector::from_column_slice(theta) - &self.mean;
        let basis = self.components.columns(0, q);
        let coeffs = basis.transpose() * &centered;
        Ok((&self.mean + basis * coeffs).as_slice().to_vec())
    }
}
