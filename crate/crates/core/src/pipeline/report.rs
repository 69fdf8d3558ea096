use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::eval::Metrics;
use crate::error::Result;
use crate::io::{sha256_hex, write_file, write_json};

/// Which ground truth an estimation case uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CaseKind {
    /// A test-split field, measured with noise.
    HeldOut { index: usize },
    /// A decoded latent point, measured without noise.
    SelfConsistency,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub id: String,
    #[serde(flatten)]
    pub kind: CaseKind,
    pub best_z: Vec<f64>,
    pub best_value: f64,
    pub evaluations: usize,
    pub sentinels: usize,
    pub dice: f64,
    pub sse: f64,
    /// Best-so-far objective never decreased.
    pub monotone: bool,
    pub snr_db: Option<f64>,
    pub wall_time: f64,
    /// Parameters the case was estimated with.
    pub model_checksum: String,
    /// Configuration the case was run under.
    pub config_checksum: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaRow {
    pub q: usize,
    pub val: Metrics,
    pub test: Metrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub gvae_val: Metrics,
    pub gvae_test: Metrics,
    pub pca: Vec<PcaRow>,
    /// Smallest evaluated PCA size whose test SSE is at most the gVAE's.
    pub pca_sse_crossover: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub source_hierarchy: String,
    pub target_hierarchy: String,
    pub samples: usize,
    pub epochs: usize,
    /// Validation loss per epoch; entry 0 is before any update.
    pub fine_tuned_curve: Vec<f64>,
    pub scratch_curve: Vec<f64>,
    pub fine_tuned_final_val: Option<f64>,
    pub scratch_final_val: Option<f64>,
    pub fine_tuned_val: Metrics,
    pub scratch_val: Metrics,
    /// Encoder convolution weights before and after fine-tuning.
    pub frozen_checksum_before: String,
    pub frozen_checksum_after: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config_checksum: String,
    pub seed: u64,
    pub hierarchy_checksum: String,
    pub dataset_checksum: String,
    pub model_checksum: String,
    pub latent_dim: usize,
    pub reconstruction: ReconstructionReport,
    pub cases: Vec<CaseResult>,
    /// Median Dice over the held-out cases.
    pub median_case_dice: Option<f64>,
    /// Output-relative artifact locations.
    pub artifacts: BTreeMap<String, String>,
    /// Seconds per phase; excluded from [`ExperimentReport::checksum`].
    pub timings: BTreeMap<String, f64>,
}

impl ExperimentReport {
    pub fn new(
        config: &ExperimentConfig,
        hierarchy_checksum: String,
        dataset_checksum: String,
        model_checksum: String,
        latent_dim: usize,
        reconstruction: ReconstructionReport,
        cases: Vec<CaseResult>,
    ) -> Self {
        let mut dice: Vec<f64> = cases
            .iter()
            .filter(|c| matches!(c.kind, CaseKind::HeldOut { .. }))
            .map(|c| c.dice)
            .collect();
        dice.sort_by(f64::total_cmp);
        let median_case_dice = match dice.len() {
            0 => None,
            n if n % 2 == 1 => Some(dice[n / 2]),
            n => Some(0.5 * (dice[n / 2 - 1] + dice[n / 2])),
        };
        ExperimentReport {
            config_checksum: config.checksum(),
            seed: config.seed,
            hierarchy_checksum,
            dataset_checksum,
            model_checksum,
            latent_dim,
            reconstruction,
            cases,
            median_case_dice,
            artifacts: BTreeMap::new(),
            timings: BTreeMap::new(),
        }
    }

    pub fn self_consistency(&self) -> Option<&CaseResult> {
        self.cases.iter().find(|c| c.kind == CaseKind::SelfConsistency)
    }

    /// Hex SHA-256 of the report with timings and wall-clock fields cleared,
    /// so reruns with the same seed agree.
    pub fn checksum(&self) -> String {
        let mut canonical = self.clone();
        canonical.timings.clear();
        for c in &mut canonical.cases {
            c.wall_time = 0.0;
        }
        sha256_hex(&serde_json::to_vec(&canonical).expect("report serializes"))
    }

    /// `report.json`, `cases.csv` and `pca.csv` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join("report.json"), self)?;
        write_file(&dir.join("cases.csv"), self.cases_csv().as_bytes())?;
        write_file(&dir.join("pca.csv"), self.pca_csv().as_bytes())
    }

    pub fn cases_csv(&self) -> String {
        let mut out = String::from("id,kind,best_value,evaluations,sentinels,dice,sse,monotone\n");
        for c in &self.cases {
            let kind = match c.kind {
                CaseKind::HeldOut { index } => format!("heldout:{index}"),
                CaseKind::SelfConsistency => "self_consistency".into(),
            };
            let _ = writeln!(
                out,
                "{},{kind},{:e},{},{},{},{},{}",
                c.id, c.best_value, c.evaluations, c.sentinels, c.dice, c.sse, c.monotone
            );
        }
        out
    }

    pub fn pca_csv(&self) -> String {
        let r = &self.reconstruction;
        let mut out = String::from("model,q,val_dice,val_sse,test_dice,test_sse\n");
        let _ = writeln!(
            out,
            "gvae,{},{},{},{},{}",
            self.latent_dim, r.gvae_val.dice, r.gvae_val.sse, r.gvae_test.dice, r.gvae_test.sse
        );
        for row in &r.pca {
            let _ = writeln!(
                out,
                "pca,{},{},{},{},{}",
                row.q, row.val.dice, row.val.sse, row.test.dice, row.test.sse
            );
        }
        out
    }
}
