use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bayesopt::BoConfig;
use crate::error::{Error, Result};
use crate::gvae::{Architecture, TrainConfig};
use crate::mesh::ShellSpec;
use crate::sim::ApParams;

/// Where the point cloud comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    /// CSV (`x,y,z` rows) or `N x 3` tensor; when absent the built-in shell
    /// generator is used.
    pub points: Option<PathBuf>,
    pub shell: ShellSpec,
    pub k: usize,
    pub depth: usize,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            points: None,
            shell: ShellSpec::default(),
            k: 6,
            depth: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StimulusConfig {
    /// Explicit vertex indices; when empty, `site_count` sites are spread
    /// over the mesh by farthest-point sampling from vertex 0.
    pub sites: Vec<usize>,
    pub site_count: usize,
    pub t_on: f64,
    pub t_off: f64,
    pub amplitude: f64,
}

impl Default for StimulusConfig {
    fn default() -> Self {
        StimulusConfig {
            sites: Vec::new(),
            site_count: 3,
            t_on: 0.0,
            t_off: 2.0,
            amplitude: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub model: ApParams,
    pub stimulus: StimulusConfig,
    pub channels: usize,
    /// Measurement noise for estimation cases.
    pub snr_db: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            model: ApParams::default(),
            stimulus: StimulusConfig::default(),
            channels: 64,
            snr_db: 20.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub count: usize,
    pub fraction_range: (f64, f64),
    pub theta_healthy: f64,
    pub theta_abnormal: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            count: 2000,
            fraction_range: (0.02, 0.40),
            theta_healthy: 0.15,
            theta_abnormal: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeConfig {
    pub budget: usize,
    pub n_init: usize,
    /// Latent search box `[-bound, bound]^q`.
    pub bound: f64,
    /// Held-out test-split cases to estimate.
    pub cases: usize,
    /// Also run the noise-free decoded-latent case.
    pub self_consistency: bool,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        let bo = BoConfig::default();
        OptimizeConfig {
            budget: bo.budget,
            n_init: bo.n_init,
            bound: bo.bound,
            cases: 10,
            self_consistency: true,
        }
    }
}

impl OptimizeConfig {
    pub fn bo(&self, seed: u64) -> BoConfig {
        BoConfig {
            budget: self.budget,
            n_init: self.n_init,
            bound: self.bound,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    /// PCA latent sizes compared against the gVAE.
    pub pca_dims: Vec<usize>,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            pca_dims: vec![1, 2, 3, 4, 6, 8, 10, 13, 16, 20, 30, 40],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferConfig {
    /// Second geometry (same k and depth as the source).
    pub shell: ShellSpec,
    pub points: Option<PathBuf>,
    pub count: usize,
    /// Epochs for both the fine-tuned and the scratch run.
    pub epochs: usize,
}

impl Default for TransferConfig {
    fn default() -> Self {
        TransferConfig {
            shell: ShellSpec {
                vertices: 260,
                axes: [1.1, 0.9, 1.4],
                seed: 1,
                ..ShellSpec::default()
            },
            points: None,
            count: 500,
            epochs: 30,
        }
    }
}

/// Everything one experiment needs, read from a TOML file.
///
/// Component-level `seed` keys (shell, training) are ignored by the
/// pipeline: every stage derives its seed from the master `seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every stage derives its own seed from it.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub geometry: GeometryConfig,
    pub simulation: SimulationConfig,
    pub data: DataConfig,
    pub model: Architecture,
    pub train: TrainConfig,
    pub optimize: OptimizeConfig,
    pub evaluate: EvaluateConfig,
    pub transfer: TransferConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            out_dir: PathBuf::from("runs/default"),
            geometry: GeometryConfig::default(),
            simulation: SimulationConfig::default(),
            data: DataConfig::default(),
            model: Architecture::default(),
            train: TrainConfig::default(),
            optimize: OptimizeConfig::default(),
            evaluate: EvaluateConfig::default(),
            transfer: TransferConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parses `path`; relative point-cloud and output paths are resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut config.out_dir);
        if let Some(p) = config.geometry.points.as_mut() {
            resolve(p);
        }
        if let Some(p) = config.transfer.points.as_mut() {
            resolve(p);
        }
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Checks ranges and that referenced input files exist.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        for p in [&self.geometry.points, &self.transfer.points].into_iter().flatten() {
            if !p.exists() {
                return bad(format!("point cloud {} does not exist", p.display()));
            }
        }
        if self.geometry.k == 0 || self.geometry.depth == 0 {
            return bad("geometry.k and geometry.depth must be >= 1".into());
        }
        if self.model.depth() != self.geometry.depth {
            return bad(format!(
                "model.widths has {} levels but geometry.depth is {}",
                self.model.depth(),
                self.geometry.depth
            ));
        }
        self.model.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.simulation.model.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.train.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.optimize.bo(0).validate().map_err(|e| Error::Config(e.to_string()))?;
        let (lo, hi) = self.data.fraction_range;
        if !(0.0 < lo && lo <= hi && hi <= 1.0) {
            return bad(format!("data.fraction_range ({lo}, {hi}) must satisfy 0 < lo <= hi <= 1"));
        }
        let theta_ok = |t: f64| (0.0..=1.0).contains(&t);
        if !theta_ok(self.data.theta_healthy) || !theta_ok(self.data.theta_abnormal) {
            return bad("data.theta_* must lie in [0, 1]".into());
        }
        if self.data.count == 0 || self.transfer.count == 0 {
            return bad("dataset counts must be >= 1".into());
        }
        if self.simulation.channels == 0 {
            return bad("simulation.channels must be >= 1".into());
        }
        let s = &self.simulation.stimulus;
        if s.sites.is_empty() && s.site_count == 0 {
            return bad("stimulus needs explicit sites or site_count >= 1".into());
        }
        if !(s.t_on < s.t_off && s.t_off <= self.simulation.model.t_end) {
            return bad("stimulus window must satisfy t_on < t_off <= t_end".into());
        }
        if self.evaluate.pca_dims.contains(&0) {
            return bad("evaluate.pca_dims entries must be >= 1".into());
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical TOML rendering, excluding `out_dir` so
    /// the same experiment written to two places has one checksum.
    pub fn checksum(&self) -> String {
        let mut canonical = self.clone();
        canonical.out_dir = PathBuf::new();
        hex::encode(Sha256::digest(canonical.to_toml_string().as_bytes()))
    }

    /// Hex SHA-256 over the master seed and the configuration sections a
    /// stage's outputs depend on; stages record it so that editing the
    /// configuration marks exactly the affected artifacts stale.
    pub fn fingerprint(&self, stage: &str) -> String {
        let mut parts = vec![serde_json::to_value(self.seed).expect("serializable")];
        let mut push = |v: serde_json::Result<serde_json::Value>| parts.push(v.expect("serializable"));
        push(serde_json::to_value(&self.geometry));
        if stage != "geometry" {
            push(serde_json::to_value(&self.data));
        }
        if stage != "geometry" && stage != "gendata" {
            push(serde_json::to_value(&self.model));
            push(serde_json::to_value(&self.train));
        }
        hex::encode(Sha256::digest(serde_json::to_vec(&parts).expect("serializable")))
    }

    /// Per-stage seed derived from the master seed.
    pub fn stage_seed(&self, stage: &str) -> u64 {
        derive_seed(self.seed, stage)
    }
}

/// First eight bytes of `SHA-256(seed || label)`.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}
