use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::model::{Architecture, GVaeGrads, GVaeModel, GVaeParams, ModelGeometry, Readout};
use crate::error::{Error, Result};
use crate::mesh::{CoarseningHierarchy, Point3};
use crate::synth::{Dataset, Split};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub kl_weight: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 200,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            kl_weight: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.batch_size == 0 {
            return Err(Error::InvalidInput(
                "learning_rate must be > 0 and batch_size >= 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return Err(Error::InvalidInput("Adam moments must lie in [0, 1) and epsilon > 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-sample loss over the epoch's mini-batches.
    pub train_loss: f64,
    /// Mean deterministic (`z = mu`) loss on the validation split.
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Deterministic losses before the first update.
    pub initial_train_loss: f64,
    pub initial_val_loss: Option<f64>,
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn final_val_loss(&self) -> Option<f64> {
        self.epochs
            .last()
            .map_or(self.initial_val_loss, |e| e.val_loss)
    }
}

struct Adam {
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: i32,
}

impl Adam {
    fn new(model: &GVaeModel) -> Self {
        let shapes: Vec<usize> = model.params.tensors().iter().map(|t| t.len()).collect();
        Adam {
            first: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    fn update(&mut self, model: &mut GVaeModel, grads: &GVaeGrads, config: &TrainConfig, skip: usize) {
        self.step += 1;
        let bc1 = 1.0 - config.beta1.powi(self.step);
        let bc2 = 1.0 - config.beta2.powi(self.step);
        let lr = config.learning_rate;
        let grads = grads.tensors();
        for (t, param) in model.params.tensors_mut().into_iter().enumerate().skip(skip) {
            let (m, v) = (&mut self.first[t], &mut self.second[t]);
            for (((p, &g), mi), vi) in param.iter_mut().zip(grads[t]).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = config.beta1 * *mi + (1.0 - config.beta1) * g;
                *vi = config.beta2 * *vi + (1.0 - config.beta2) * g * g;
                *p -= lr * (*mi / bc1) / ((*vi / bc2).sqrt() + config.epsilon);
            }
        }
    }
}

/// Mean deterministic loss (`z = mu`) over the given samples.
pub fn mean_loss(model: &GVaeModel, dataset: &Dataset, indices: &[usize], kl_weight: f64) -> Result<Option<f64>> {
    if indices.is_empty() {
        return Ok(None);
    }
    let zeros = vec![0.0; model.latent_dim()];
    let mut total = 0.0;
    for &i in indices {
        total += model.loss(dataset.fields[i].values(), &zeros, kl_weight)?.total;
    }
    Ok(Some(total / indices.len() as f64))
}

fn check_dataset(model: &GVaeModel, dataset: &Dataset) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::InvalidInput("empty dataset".into()));
    }
    if dataset.field_len() != model.field_len() {
        return Err(Error::mismatch(
            format!("fields of length {}", model.field_len()),
            dataset.field_len(),
        ));
    }
    if dataset.graph_checksum != model.geometry().finest_checksum() {
        return Err(Error::InvalidInput(
            "dataset was generated on a different graph than the model's hierarchy".into(),
        ));
    }
    Ok(())
}

/// Mini-batch Adam on the mean per-sample loss.
pub fn train(model: &mut GVaeModel, dataset: &Dataset, config: &TrainConfig) -> Result<TrainHistory> {
    run_training(model, dataset, config, false)
}

fn run_training(
    model: &mut GVaeModel,
    dataset: &Dataset,
    config: &TrainConfig,
    freeze_encoder_convs: bool,
) -> Result<TrainHistory> {
    config.validate()?;
    check_dataset(model, dataset)?;
    let train_idx = dataset.indices(Split::Train);
    let val_idx = dataset.indices(Split::Val);
    if train_idx.is_empty() {
        return Err(Error::InvalidInput("dataset has no training samples".into()));
    }
    let skip = if freeze_encoder_convs {
        model.params.encoder_conv_tensors()
    } else {
        0
    };
    let initial_train_loss = mean_loss(model, dataset, &train_idx, config.kl_weight)?.expect("nonempty");
    let initial_val_loss = mean_loss(model, dataset, &val_idx, config.kl_weight)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(model);
    let mut grads = GVaeGrads::zeros(&model.params);
    let mut order = train_idx.clone();
    let q = model.latent_dim();
    let mut eps = vec![0.0; q];
    let mut epochs = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch_no, batch) in order.chunks(config.batch_size).enumerate() {
            grads.fill_zero();
            let mut batch_loss = 0.0;
            for &i in batch {
                eps.iter_mut().for_each(|e| *e = StandardNormal.sample(&mut rng));
                let parts = model.accumulate_gradient(
                    dataset.fields[i].values(),
                    &eps,
                    config.kl_weight,
                    freeze_encoder_convs,
                    &mut grads,
                )?;
                batch_loss += parts.total;
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_no,
                });
            }
            let scale = 1.0 / batch.len() as f64;
            for g in grads.tensors_mut() {
                g.iter_mut().for_each(|v| *v *= scale);
            }
            adam.update(model, &grads, config, skip);
            epoch_loss += batch_loss;
        }
        let record = EpochRecord {
            epoch: epoch + 1,
            train_loss: epoch_loss / order.len() as f64,
            val_loss: mean_loss(model, dataset, &val_idx, config.kl_weight)?,
        };
        log::debug!(
            "epoch {} train {:.4} val {:?}",
            record.epoch,
            record.train_loss,
            record.val_loss
        );
        epochs.push(record);
    }
    Ok(TrainHistory {
        initial_train_loss,
        initial_val_loss,
        epochs,
    })
}

/// Transfers a trained model to a new geometry: encoder convolutions stay
/// frozen, every other tensor is retrained on `dataset`.
///
/// When the coarsest level changes, each new coarse vertex starts from the
/// dense weights attached to the nearest old coarse vertex.
pub fn fine_tune(
    source: &GVaeModel,
    hierarchy: &CoarseningHierarchy,
    dataset: &Dataset,
    config: &TrainConfig,
) -> Result<(GVaeModel, TrainHistory)> {
    let arch = source.architecture();
    if hierarchy.depth() != arch.depth() {
        return Err(Error::InvalidInput(format!(
            "fine-tuning needs hierarchy depth {} (got {})",
            arch.depth(),
            hierarchy.depth()
        )));
    }
    let geometry = Arc::new(ModelGeometry::new(hierarchy, arch.kernel)?);
    let params = remap_dense_layers(
        arch,
        source.params.clone(),
        source.geometry().coarsest_positions(),
        geometry.coarsest_positions(),
    );
    let mut model = source.with_geometry(geometry, params)?;
    let history = run_training(&mut model, dataset, config, true)?;
    Ok((model, history))
}

/// Moves the dense layers attached to the coarsest level from the `old`
/// coarse vertices to the `new` ones: every new vertex takes the weights of
/// its nearest old vertex. Flattened encoder-head columns are rescaled so the
/// head sees the same total input mass on a differently sized level.
pub fn remap_dense_layers(arch: &Architecture, mut params: GVaeParams, old: &[Point3], new: &[Point3]) -> GVaeParams {
    if old == new || old.is_empty() {
        return params;
    }
    let top = arch.widths[arch.depth() - 1];
    let nearest: Vec<usize> = new
        .iter()
        .map(|p| {
            (0..old.len())
                .min_by(|&a, &b| p.distance_sq(&old[a]).total_cmp(&p.distance_sq(&old[b])))
                .expect("old level is nonempty")
        })
        .collect();

    let dense = &params.dec_dense;
    let q = dense.in_dim;
    let mut weight = Vec::with_capacity(new.len() * top * q);
    let mut bias = Vec::with_capacity(new.len() * top);
    for &v in &nearest {
        let rows = v * top..(v + 1) * top;
        weight.extend_from_slice(&dense.weight[rows.start * q..rows.end * q]);
        bias.extend_from_slice(&dense.bias[rows]);
    }
    params.dec_dense.out_dim = new.len() * top;
    params.dec_dense.weight = weight;
    params.dec_dense.bias = bias;

    if arch.readout == Readout::Flatten {
        let head = &params.enc_head;
        let scale = old.len() as f64 / new.len() as f64;
        let in_dim = new.len() * top;
        let mut weight = Vec::with_capacity(head.out_dim * in_dim);
        for row in head.weight.chunks_exact(head.in_dim) {
            for &v in &nearest {
                weight.extend(row[v * top..(v + 1) * top].iter().map(|w| w * scale));
            }
        }
        params.enc_head.in_dim = in_dim;
        params.enc_head.weight = weight;
    }
    params
}
