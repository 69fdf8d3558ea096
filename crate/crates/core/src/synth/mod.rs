//! Synthetic excitability fields by random region growing, evaluation
//! metrics, and the PCA baseline.

mod metrics;
mod pca;

pub use metrics::{dice, otsu_segment, otsu_threshold, sse, OTSU_BINS};
pub use pca::PcaModel;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::MeshGraph;
use crate::sim::ExcitabilityField;

/// A connected set of abnormal vertices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionLabel {
    /// Sorted vertex indices.
    pub abnormal: Vec<usize>,
    pub fraction: f64,
}

impl RegionLabel {
    pub fn new(mut abnormal: Vec<usize>, n: usize) -> Result<Self> {
        abnormal.sort_unstable();
        abnormal.dedup();
        if abnormal.is_empty() || abnormal.last().is_some_and(|&v| v >= n) {
            return Err(Error::InvalidInput(format!(
                "region must be a nonempty subset of 0..{n}"
            )));
        }
        let fraction = abnormal.len() as f64 / n as f64;
        Ok(RegionLabel { abnormal, fraction })
    }

    pub fn len(&self) -> usize {
        self.abnormal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.abnormal.is_empty()
    }
}

/// Vertex count reached when growing to `fraction` of `n` vertices.
pub fn target_size(fraction: f64, n: usize) -> usize {
    // guard against f * n landing a hair above an integer
    ((fraction * n as f64) - 1e-9).ceil().max(1.0) as usize
}

/// Grows a connected region from `seed_vertex` by repeatedly absorbing a
/// uniformly chosen frontier vertex.
pub fn grow_region(
    graph: &MeshGraph,
    seed_vertex: usize,
    target_fraction: f64,
    rng_seed: u64,
) -> Result<RegionLabel> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    grow_region_with(graph, seed_vertex, target_fraction, &mut rng)
}

pub fn grow_region_with(
    graph: &MeshGraph,
    seed_vertex: usize,
    target_fraction: f64,
    rng: &mut impl Rng,
) -> Result<RegionLabel> {
    let n = graph.len();
    if seed_vertex >= n {
        return Err(Error::InvalidInput(format!("seed vertex {seed_vertex} out of range")));
    }
    if !(target_fraction >= 1.0 / n as f64 - 1e-12 && target_fraction <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "target fraction {target_fraction} outside [1/N, 1]"
        )));
    }
    let target = target_size(target_fraction, n);

    const NONE: usize = usize::MAX;
    let mut in_region = vec![false; n];
    // position of each vertex inside `frontier`, or NONE
    let mut slot = vec![NONE; n];
    let mut frontier: Vec<usize> = Vec::new();
    let mut region = Vec::with_capacity(target);

    let mut absorb = |v: usize, in_region: &mut Vec<bool>, frontier: &mut Vec<usize>, slot: &mut Vec<usize>| {
        in_region[v] = true;
        region.push(v);
        for &w in graph.neighbors(v) {
            if !in_region[w] && slot[w] == NONE {
                slot[w] = frontier.len();
                frontier.push(w);
            }
        }
    };
    absorb(seed_vertex, &mut in_region, &mut frontier, &mut slot);
    for _ in 1..target {
        if frontier.is_empty() {
            return Err(Error::Disconnected(format!(
                "region stalled at {} of {target} vertices",
                in_region.iter().filter(|&&b| b).count()
            )));
        }
        let pick = rng.gen_range(0..frontier.len());
        let v = frontier.swap_remove(pick);
        slot[v] = NONE;
        if pick < frontier.len() {
            slot[frontier[pick]] = pick;
        }
        absorb(v, &mut in_region, &mut frontier, &mut slot);
    }
    RegionLabel::new(region, n)
}

/// Piecewise-constant field: `theta_abnormal` on the label, `theta_healthy` elsewhere.
pub fn make_field(
    label: &RegionLabel,
    theta_healthy: f64,
    theta_abnormal: f64,
    n: usize,
) -> Result<ExcitabilityField> {
    let mut theta = vec![theta_healthy; n];
    for &v in &label.abnormal {
        if v >= n {
            return Err(Error::InvalidInput(format!("label vertex {v} out of range")));
        }
        theta[v] = theta_abnormal;
    }
    ExcitabilityField::new(theta)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    /// 70/15/15 split by draw order (at least one training sample).
    pub fn for_index(index: usize, count: usize) -> Split {
        let train = ((0.70 * count as f64).round() as usize).max(1);
        let val = (0.15 * count as f64).round() as usize;
        if index < train {
            Split::Train
        } else if index < train + val {
            Split::Val
        } else {
            Split::Test
        }
    }
}

/// Settings for [`gen_dataset`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    pub count: usize,
    pub fraction_range: (f64, f64),
    pub theta_healthy: f64,
    pub theta_abnormal: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            count: 2000,
            fraction_range: (0.02, 0.40),
            theta_healthy: 0.15,
            theta_abnormal: 0.5,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub fields: Vec<ExcitabilityField>,
    pub labels: Vec<RegionLabel>,
    pub splits: Vec<Split>,
    pub graph_checksum: String,
    pub theta_healthy: f64,
    pub theta_abnormal: f64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn field_len(&self) -> usize {
        self.fields.first().map_or(0, ExcitabilityField::len)
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }

    /// Rows are samples.
    pub fn matrix(&self, split: Split) -> Array2<f64> {
        let idx = self.indices(split);
        let n = self.field_len();
        let mut m = Array2::zeros((idx.len(), n));
        for (r, &i) in idx.iter().enumerate() {
            m.row_mut(r).assign(&ndarray::ArrayView1::from(self.fields[i].values()));
        }
        m
    }

    /// Restricts to the first `count` draws, re-splitting 70/15/15.
    pub fn truncated(&self, count: usize) -> Dataset {
        let count = count.min(self.len());
        Dataset {
            fields: self.fields[..count].to_vec(),
            labels: self.labels[..count].to_vec(),
            splits: (0..count).map(|i| Split::for_index(i, count)).collect(),
            graph_checksum: self.graph_checksum.clone(),
            theta_healthy: self.theta_healthy,
            theta_abnormal: self.theta_abnormal,
        }
    }
}

/// Per-draw generator: one ChaCha stream per draw index.
pub fn draw_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Draws `count` region-grown fields with uniform seed vertex and uniform
/// target fraction.
pub fn gen_dataset(graph: &MeshGraph, spec: &DatasetSpec) -> Result<Dataset> {
    if spec.count == 0 {
        return Err(Error::InvalidInput("dataset count must be >= 1".into()));
    }
    let n = graph.len();
    let (lo, hi) = spec.fraction_range;
    let min_fraction = 1.0 / n as f64;
    if !(lo <= hi && hi <= 1.0 && lo > 0.0) {
        return Err(Error::InvalidInput(format!("bad fraction range ({lo}, {hi})")));
    }
    let mut fields = Vec::with_capacity(spec.count);
    let mut labels = Vec::with_capacity(spec.count);
    for index in 0..spec.count {
        let mut rng = draw_rng(spec.seed, index);
        let seed_vertex = rng.gen_range(0..n);
        let fraction = if hi > lo { rng.gen_range(lo..hi) } else { lo };
        let label = grow_region_with(graph, seed_vertex, fraction.max(min_fraction), &mut rng)?;
        fields.push(make_field(&label, spec.theta_healthy, spec.theta_abnormal, n)?);
        labels.push(label);
    }
    Ok(Dataset {
        fields,
        labels,
        splits: (0..spec.count).map(|i| Split::for_index(i, spec.count)).collect(),
        graph_checksum: graph.checksum(),
        theta_healthy: spec.theta_healthy,
        theta_abnormal: spec.theta_abnormal,
    })
}
