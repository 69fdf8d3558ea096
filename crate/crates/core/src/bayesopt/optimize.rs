use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::acquisition::{maximize_ei, Bounds};
use super::gp::{gp_fit, GpHyperparams};
use crate::error::{Error, Result};
use crate::gvae::GVaeModel;
use crate::sim::{measure, ExcitabilityField, LeadField, MeasurementSeries, Simulator};

/// Objective value recorded when an evaluation fails numerically.
pub const SENTINEL: f64 = -1e12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoConfig {
    pub budget: usize,
    pub n_init: usize,
    /// Half-width of the cubic search box `[-b, b]^q`.
    pub bound: f64,
    pub seed: u64,
}

impl Default for BoConfig {
    fn default() -> Self {
        BoConfig {
            budget: 100,
            n_init: 10,
            bound: 3.0,
            seed: 0,
        }
    }
}

impl BoConfig {
    pub fn bounds(&self, dim: usize) -> Bounds {
        Bounds::cube(dim, -self.bound, self.bound)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_init < 2 || self.budget < self.n_init {
            return Err(Error::InvalidInput(format!(
                "need budget >= n_init >= 2 (budget {}, n_init {})",
                self.budget, self.n_init
            )));
        }
        if !(self.bound > 0.0 && self.bound.is_finite()) {
            return Err(Error::InvalidInput("search bound must be positive".into()));
        }
        Ok(())
    }
}

/// One objective evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoRecord {
    pub iteration: usize,
    pub z: Vec<f64>,
    pub value: f64,
    pub best_so_far: f64,
    /// Seconds since the start of the run.
    pub wall_time: f64,
    /// The evaluation failed numerically and `value` is [`SENTINEL`].
    pub sentinel: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoResult {
    pub best_z: Vec<f64>,
    pub best_value: f64,
    /// Decoded field at `best_z`, filled in by latent-space callers.
    pub best_theta: Option<ExcitabilityField>,
    pub history: Vec<BoRecord>,
}

impl BoResult {
    pub fn evaluation_count(&self) -> usize {
        self.history.len()
    }

    pub fn best_so_far(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.best_so_far).collect()
    }

    /// `iteration,z0,..,objective,best_so_far,wall_time,sentinel` rows.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        let q = self.best_z.len();
        let z_cols: Vec<String> = (0..q).map(|d| format!("z{d}")).collect();
        writeln!(out, "iteration,{},objective,best_so_far,wall_time,sentinel", z_cols.join(","))?;
        for r in &self.history {
            let z: Vec<String> = r.z.iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(
                out,
                "{},{},{:.17e},{:.17e},{:.6},{}",
                r.iteration,
                z.join(","),
                r.value,
                r.best_so_far,
                r.wall_time,
                r.sentinel
            )?;
        }
        Ok(())
    }
}

/// Seeded Latin-hypercube design: each axis is split into `n` strata, each
/// stratum gets exactly one point at a uniform offset.
pub fn latin_hypercube(n: usize, bounds: &Bounds, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = bounds.dim();
    let mut unit = vec![vec![0.0; dim]; n];
    for d in 0..dim {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(&mut rng);
        for (point, s) in unit.iter_mut().zip(strata) {
            point[d] = (s as f64 + rng.gen::<f64>()) / n as f64;
        }
    }
    unit.iter().map(|u| bounds.scale(u)).collect()
}

/// Maximizes `objective` over the box with a GP surrogate and expected
/// improvement. Numerical failures (see [`Error::is_numerical`]) are recorded
/// as [`SENTINEL`] values; other errors abort the run.
pub fn bayes_opt(
    mut objective: impl FnMut(&[f64]) -> Result<f64>,
    dim: usize,
    config: &BoConfig,
) -> Result<BoResult> {
    config.validate()?;
    if dim == 0 {
        return Err(Error::InvalidInput("search dimension must be >= 1".into()));
    }
    let bounds = config.bounds(dim);
    let start = Instant::now();
    let mut history: Vec<BoRecord> = Vec::with_capacity(config.budget);
    let mut record = |z: Vec<f64>, history: &mut Vec<BoRecord>| -> Result<()> {
        let (value, sentinel) = match objective(&z) {
            Ok(v) if v.is_finite() => (v, false),
            Ok(_) => (SENTINEL, true),
            Err(e) if e.is_numerical() => {
                log::warn!("objective failed at {z:?}: {e}");
                (SENTINEL, true)
            }
            Err(e) => return Err(e),
        };
        let best_so_far = history.last().map_or(value, |r| r.best_so_far.max(value));
        history.push(BoRecord {
            iteration: history.len(),
            z,
            value,
            best_so_far,
            wall_time: start.elapsed().as_secs_f64(),
            sentinel,
        });
        Ok(())
    };

    for z in latin_hypercube(config.n_init, &bounds, config.seed) {
        record(z, &mut history)?;
    }
    let mut hyp: Option<GpHyperparams> = None;
    while history.len() < config.budget {
        let (inputs, values) = surrogate_data(&history);
        let init = hyp.clone().unwrap_or_else(|| {
            GpHyperparams::isotropic(dim, 0.25 * 2.0 * config.bound, 1.0, 1e-6)
        });
        let next = if inputs.len() >= 2 {
            let gp = gp_fit(inputs, values, &init)?;
            hyp = Some(gp.hyperparams().clone());
            let step_seed = config.seed ^ (history.len() as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
            maximize_ei(&gp, &bounds, step_seed)?
        } else {
            // not enough distinct data to fit; fall back to a fresh design point
            latin_hypercube(1, &bounds, config.seed.wrapping_add(history.len() as u64)).remove(0)
        };
        record(next, &mut history)?;
    }

    let best = history
        .iter()
        .fold(None::<&BoRecord>, |b, r| match b {
            Some(b) if b.value >= r.value => Some(b),
            _ => Some(r),
        })
        .expect("nonempty history");
    Ok(BoResult {
        best_z: best.z.clone(),
        best_value: best.value,
        best_theta: None,
        history,
    })
}

/// GP training data: distinct inputs only (first occurrence wins), with
/// sentinel values replaced by the worst real value so one failed run does
/// not dominate the surrogate's scale.
fn surrogate_data(history: &[BoRecord]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let worst = history
        .iter()
        .filter(|r| !r.sentinel)
        .map(|r| r.value)
        .fold(f64::INFINITY, f64::min);
    let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(history.len());
    let mut values = Vec::with_capacity(history.len());
    for r in history {
        if inputs.contains(&r.z) {
            continue;
        }
        let v = if r.sentinel {
            if worst.is_finite() {
                worst
            } else {
                continue;
            }
        } else {
            r.value
        };
        inputs.push(r.z.clone());
        values.push(v);
    }
    (inputs, values)
}

/// `J(z) = -sum_t ||y_d(t) - H u(decode(z))(t)||^2`.
pub struct LatentObjective<'a> {
    pub model: &'a GVaeModel,
    pub simulator: &'a Simulator,
    pub lead: &'a LeadField,
    pub target: &'a MeasurementSeries,
}

impl LatentObjective<'_> {
    /// Decoded field and its noise-free measurements.
    pub fn predict(&self, z: &[f64]) -> Result<(ExcitabilityField, MeasurementSeries)> {
        let theta = ExcitabilityField::new(self.model.decode(z)?)?;
        let history = self.simulator.run(&theta)?;
        let y = measure(self.lead, &history, self.target.dt_frame, None, 0)?;
        Ok((theta, y))
    }

    pub fn evaluate(&self, z: &[f64]) -> Result<f64> {
        let (_, y) = self.predict(z)?;
        if y.frames.dim() != self.target.frames.dim() {
            return Err(Error::mismatch(
                format!("{:?} measurement frames", self.target.frames.dim()),
                format!("{:?}", y.frames.dim()),
            ));
        }
        let sse: f64 = self
            .target
            .frames
            .iter()
            .zip(&y.frames)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok(-sse)
    }

    /// Runs [`bayes_opt`] in the decoder's latent space and decodes the optimum.
    pub fn optimize(&self, config: &BoConfig) -> Result<BoResult> {
        let mut result = bayes_opt(|z| self.evaluate(z), self.model.latent_dim(), config)?;
        result.best_theta = Some(ExcitabilityField::new(self.model.decode(&result.best_z)?)?);
        Ok(result)
    }
}
