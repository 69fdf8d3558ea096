use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::mesh::{MeshGraph, Point3};

/// Linear map from vertex potentials to surface channels (`L x N`).
#[derive(Clone, Debug, PartialEq)]
pub struct LeadField {
    h: Array2<f64>,
}

impl LeadField {
    pub fn new(h: Array2<f64>) -> Result<Self> {
        if h.nrows() == 0 {
            return Err(Error::InvalidInput("lead field needs at least one channel".into()));
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("lead field entries must be finite".into()));
        }
        Ok(LeadField { h })
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.h
    }

    pub fn channels(&self) -> usize {
        self.h.nrows()
    }

    pub fn vertices(&self) -> usize {
        self.h.ncols()
    }
}

/// Channel values over time (`L x T`).
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementSeries {
    pub frames: Array2<f64>,
    pub dt_frame: f64,
    pub snr_db: Option<f64>,
}

/// Pseudo-electrodes on a sphere of twice the cloud's bounding radius,
/// placed on a Fibonacci spiral whose orientation is drawn from `seed`.
/// Entries are inverse distances with each row's mean removed.
pub fn synth_lead_field(graph: &MeshGraph, n_channels: usize, seed: u64) -> Result<LeadField> {
    if n_channels == 0 {
        return Err(Error::InvalidInput("n_channels must be >= 1".into()));
    }
    let pos = graph.positions();
    if pos.is_empty() {
        return Err(Error::InvalidInput("empty graph".into()));
    }
    let center = Point3::centroid(pos);
    let radius = 2.0 * pos.iter().map(|p| center.distance(p)).fold(0.0, f64::max);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rotation = random_rotation(&mut rng);
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let mut h = Array2::zeros((n_channels, pos.len()));
    for l in 0..n_channels {
        let z = 1.0 - 2.0 * (l as f64 + 0.5) / n_channels as f64;
        let rho = (1.0 - z * z).sqrt();
        let phi = golden * l as f64;
        let dir = apply(&rotation, [rho * phi.cos(), rho * phi.sin(), z]);
        let electrode = Point3::new(
            center.x + radius * dir[0],
            center.y + radius * dir[1],
            center.z + radius * dir[2],
        );
        let mut row = h.row_mut(l);
        for (i, p) in pos.iter().enumerate() {
            row[i] = 1.0 / electrode.distance(p);
        }
        let mean = row.sum() / pos.len() as f64;
        row -= mean;
    }
    LeadField::new(h)
}

/// Rotation matrix from a random unit quaternion.
fn random_rotation(rng: &mut impl Rng) -> [[f64; 3]; 3] {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut q: [f64; 4] = std::array::from_fn(|_| normal.sample(rng));
    let norm = q.iter().map(|c| c * c).sum::<f64>().sqrt();
    q.iter_mut().for_each(|c| *c /= norm);
    let [w, x, y, z] = q;
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

fn apply(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    std::array::from_fn(|r| m[r][0] * v[0] + m[r][1] * v[1] + m[r][2] * v[2])
}

/// `y = H u`, optionally corrupted with white Gaussian noise at `snr_db`
/// relative to the mean signal power.
pub fn measure(
    lead: &LeadField,
    history: &Array2<f64>,
    dt_frame: f64,
    snr_db: Option<f64>,
    seed: u64,
) -> Result<MeasurementSeries> {
    if history.nrows() != lead.vertices() {
        return Err(Error::mismatch(
            format!("history with {} rows", lead.vertices()),
            history.nrows(),
        ));
    }
    let mut frames = lead.matrix().dot(history);
    if let Some(snr) = snr_db {
        let power = frames.iter().map(|v| v * v).sum::<f64>() / frames.len().max(1) as f64;
        let sigma = (power * 10f64.powf(-snr / 10.0)).sqrt();
        if sigma > 0.0 {
            let noise = Normal::new(0.0, sigma)
                .map_err(|e| Error::InvalidInput(format!("noise level: {e}")))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            frames.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
        }
    }
    Ok(MeasurementSeries {
        frames,
        dt_frame,
        snr_db,
    })
}
