use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gvae::GVaeModel;
use crate::synth::{dice, otsu_segment, sse, Dataset, PcaModel, Split};

/// Mean segmentation and field error over a set of samples.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub dice: f64,
    pub sse: f64,
    pub count: usize,
}

/// Otsu segmentation that treats a constant field as "no abnormal tissue".
pub fn segment(theta: &[f64]) -> Result<Vec<usize>> {
    match otsu_segment(theta) {
        Ok(s) => Ok(s),
        Err(Error::Degenerate(_)) => Ok(Vec::new()),
        Err(e) => Err(e),
    }
}

/// Dice of the Otsu segmentation of `estimate` against `truth_set`, and SSE
/// of `estimate` against `truth`.
pub fn score(estimate: &[f64], truth: &[f64], truth_set: &[usize]) -> Result<(f64, f64)> {
    Ok((dice(&segment(estimate)?, truth_set), sse(estimate, truth)?))
}

fn mean_over(
    dataset: &Dataset,
    split: Split,
    mut reconstruct: impl FnMut(&[f64]) -> Result<Vec<f64>>,
) -> Result<Metrics> {
    let idx = dataset.indices(split);
    let mut m = Metrics {
        count: idx.len(),
        ..Metrics::default()
    };
    for &i in &idx {
        let truth = dataset.fields[i].values();
        let (d, s) = score(&reconstruct(truth)?, truth, &dataset.labels[i].abnormal)?;
        m.dice += d;
        m.sse += s;
    }
    if m.count > 0 {
        m.dice /= m.count as f64;
        m.sse /= m.count as f64;
    }
    Ok(m)
}

/// `decode(encode(theta).mu)` scored against every sample of `split`.
pub fn gvae_metrics(model: &GVaeModel, dataset: &Dataset, split: Split) -> Result<Metrics> {
    mean_over(dataset, split, |t| model.reconstruct(t))
}

/// Rank-`q` PCA reconstruction scored against every sample of `split`.
pub fn pca_metrics(pca: &PcaModel, q: usize, dataset: &Dataset, split: Split) -> Result<Metrics> {
    mean_over(dataset, split, |t| pca.reconstruct(t, q))
}
