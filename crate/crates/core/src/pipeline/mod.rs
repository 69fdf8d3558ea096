//! Experiment orchestration: configuration, the staged pipeline
//! (geometry → gendata → train → optimize → evaluate, plus transfer), and
//! the reports it writes.
//!
//! Every stage reads its inputs from the output directory, checks that they
//! still belong together (checksums recorded by the stage that wrote them),
//! and fails with [`Error::StaleArtifact`] naming the offending artifact when
//! they do not.

mod config;
mod eval;
mod report;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{
    derive_seed, DataConfig, EvaluateConfig, ExperimentConfig, GeometryConfig, OptimizeConfig, SimulationConfig,
    StimulusConfig, TransferConfig,
};
pub use eval::{gvae_metrics, pca_metrics, score, segment, Metrics};
pub use report::{CaseKind, CaseResult, ExperimentReport, PcaRow, ReconstructionReport, TransferReport};

use crate::bayesopt::{latin_hypercube, LatentObjective};
use crate::error::{Error, Result};
use crate::gvae::{fine_tune, train, GVaeModel, TrainConfig, TrainHistory};
use crate::io::{
    self, load_checkpoint, load_dataset, load_field, load_hierarchy, read_json, read_tensor, save_checkpoint,
    save_dataset, save_field, save_hierarchy, write_file, write_json, write_tensor, LoadMode,
};
use crate::mesh::{build_hierarchy, build_knn_graph, ellipsoid_shell, CoarseningHierarchy, MeshGraph, Point3, ShellSpec};
use crate::sim::{measure, synth_lead_field, ExcitabilityField, LeadField, Simulator, StimulusProtocol};
use crate::synth::{gen_dataset, Dataset, DatasetSpec, PcaModel, Split};

/// Provenance written next to every stage's outputs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    /// Checksums of the inputs the stage consumed.
    pub inputs: BTreeMap<String, String>,
    /// Checksums of what it wrote.
    pub outputs: BTreeMap<String, String>,
}

const STAGE_FILE: &str = "stage.json";

fn stale(path: impl Into<PathBuf>, reason: impl Into<String>) -> Error {
    Error::StaleArtifact {
        path: path.into(),
        reason: reason.into(),
    }
}

fn require(path: &Path, producer: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(stale(path, format!("missing; run `{producer}` first")))
    }
}

fn read_stage(dir: &Path, producer: &str) -> Result<StageRecord> {
    let path = dir.join(STAGE_FILE);
    require(&path, producer)?;
    read_json(&path)
}

impl StageRecord {
    fn new(stage: &str, config: &ExperimentConfig) -> Self {
        let mut record = StageRecord {
            stage: stage.into(),
            ..Default::default()
        };
        record.inputs.insert("config".into(), config.fingerprint(stage));
        record
    }

    /// Fails unless the record was written under the same configuration.
    fn check_config(&self, dir: &Path, config: &ExperimentConfig) -> Result<()> {
        if self.inputs.get("config") == Some(&config.fingerprint(&self.stage)) {
            Ok(())
        } else {
            Err(stale(
                dir,
                format!("written under a different configuration; rerun `{}`", self.stage),
            ))
        }
    }
}

/// Artifact locations below the output directory.
#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }
    pub fn geometry(&self) -> PathBuf {
        self.root.join("geometry")
    }
    pub fn hierarchy(&self) -> PathBuf {
        self.geometry().join("hierarchy")
    }
    pub fn data(&self) -> PathBuf {
        self.root.join("data")
    }
    pub fn model(&self) -> PathBuf {
        self.root.join("model")
    }
    pub fn cases(&self) -> PathBuf {
        self.root.join("cases")
    }
    pub fn case(&self, id: &str) -> PathBuf {
        self.cases().join(id)
    }
    pub fn report(&self) -> PathBuf {
        self.root.join("report")
    }
    pub fn transfer(&self) -> PathBuf {
        self.root.join("transfer")
    }

    /// `path` relative to the root, for portable reports.
    pub fn relative(&self, path: &Path) -> String {
        path.strip_prefix(&self.root).unwrap_or(path).display().to_string()
    }
}

/// Everything downstream of the geometry stage that simulation needs.
pub struct SimContext {
    pub simulator: Simulator,
    pub lead: LeadField,
    pub dt_frame: f64,
}

/// `count` vertices spread by greedy farthest-point sampling from vertex 0.
pub fn spread_sites(points: &[Point3], count: usize) -> Vec<usize> {
    let count = count.min(points.len());
    if count == 0 {
        return Vec::new();
    }
    let mut sites = vec![0];
    let mut dist: Vec<f64> = points.iter().map(|p| p.distance_sq(&points[0])).collect();
    while sites.len() < count {
        // farthest remaining vertex, lowest index on ties
        let next = (0..points.len())
            .fold(0, |best, i| if dist[i] > dist[best] { i } else { best });
        sites.push(next);
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min(p.distance_sq(&points[next]));
        }
    }
    sites
}

/// The staged pipeline for one configuration.
#[derive(Debug)]
pub struct Pipeline {
    pub config: ExperimentConfig,
    pub layout: Layout,
    /// Worker cap for the independent estimation cases.
    pub jobs: usize,
}

/// Loss curves of a transfer run.
#[derive(Clone, Debug)]
pub struct TransferOutcome {
    pub report: TransferReport,
    pub fine_tuned: GVaeModel,
    pub scratch: GVaeModel,
}

impl Pipeline {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(config.out_dir.clone());
        Ok(Pipeline {
            config,
            layout,
            jobs: 1,
        })
    }

    pub fn with_jobs(mut self, jobs: usize) -> Self {
        self.jobs = jobs.max(1);
        self
    }

    fn seed(&self, stage: &str) -> u64 {
        self.config.stage_seed(stage)
    }

    // ------------------------------------------------------------ geometry

    fn point_cloud(&self, points: Option<&Path>, shell: &ShellSpec, seed_label: &str) -> Result<Vec<Point3>> {
        match points {
            Some(path) => io::read_point_cloud(path),
            None => ellipsoid_shell(&ShellSpec {
                seed: self.seed(seed_label),
                ..shell.clone()
            }),
        }
    }

    fn build_geometry(&self, points: Vec<Point3>) -> Result<CoarseningHierarchy> {
        let graph = build_knn_graph(&points, self.config.geometry.k)?;
        build_hierarchy(graph, self.config.geometry.depth)
    }

    /// Builds the graph and hierarchy and writes them.
    pub fn geometry(&self) -> Result<CoarseningHierarchy> {
        let g = &self.config.geometry;
        let points = self.point_cloud(g.points.as_deref(), &g.shell, "geometry")?;
        let hierarchy = self.build_geometry(points)?;
        let dir = self.layout.geometry();
        io::write_point_cloud_csv(&dir.join("points.csv"), hierarchy.finest().positions())?;
        save_hierarchy(&self.layout.hierarchy(), &hierarchy)?;
        let mut record = StageRecord::new("geometry", &self.config);
        record.outputs.insert("hierarchy".into(), hierarchy.checksum());
        record.outputs.insert("graph".into(), hierarchy.finest().checksum());
        write_json(&dir.join(STAGE_FILE), &record)?;
        log::info!("geometry: levels {:?}", hierarchy.sizes());
        Ok(hierarchy)
    }

    pub fn load_geometry(&self) -> Result<CoarseningHierarchy> {
        let root = self.layout.geometry();
        read_stage(&root, "geometry")?.check_config(&root, &self.config)?;
        let dir = self.layout.hierarchy();
        require(&dir.join(io::HIERARCHY_MANIFEST), "geometry")?;
        load_hierarchy(&dir)
    }

    pub fn sim_context(&self, graph: &MeshGraph) -> Result<SimContext> {
        let s = &self.config.simulation;
        let sites = if s.stimulus.sites.is_empty() {
            spread_sites(graph.positions(), s.stimulus.site_count)
        } else {
            s.stimulus.sites.clone()
        };
        let stimulus = StimulusProtocol::new(sites, s.stimulus.t_on, s.stimulus.t_off, s.stimulus.amplitude);
        let simulator = Simulator::new(graph, s.model.clone(), stimulus).map_err(|e| match e {
            Error::InvalidInput(m) => Error::Config(m),
            other => other,
        })?;
        let lead = synth_lead_field(graph, s.channels, self.seed("lead"))?;
        Ok(SimContext {
            simulator,
            lead,
            dt_frame: s.model.dt * s.model.record_stride as f64,
        })
    }

    // ------------------------------------------------------------ data

    fn dataset_spec(&self, count: usize, seed_label: &str) -> DatasetSpec {
        let d = &self.config.data;
        DatasetSpec {
            count,
            fraction_range: d.fraction_range,
            theta_healthy: d.theta_healthy,
            theta_abnormal: d.theta_abnormal,
            seed: self.seed(seed_label),
        }
    }

    pub fn gendata(&self) -> Result<Dataset> {
        let hierarchy = self.load_geometry()?;
        let dataset = gen_dataset(hierarchy.finest(), &self.dataset_spec(self.config.data.count, "gendata"))?;
        let manifest = save_dataset(&self.layout.data(), &dataset)?;
        let mut record = StageRecord::new("gendata", &self.config);
        record.inputs.insert("graph".into(), hierarchy.finest().checksum());
        record.outputs.insert("fields".into(), manifest.fields_checksum);
        write_json(&self.layout.data().join(STAGE_FILE), &record)?;
        log::info!("gendata: {} fields", dataset.len());
        Ok(dataset)
    }

    pub fn load_data(&self, hierarchy: &CoarseningHierarchy) -> Result<Dataset> {
        let dir = self.layout.data();
        read_stage(&dir, "gendata")?.check_config(&dir, &self.config)?;
        require(&dir.join(io::DATASET_MANIFEST), "gendata")?;
        let dataset = load_dataset(&dir)?;
        if dataset.graph_checksum != hierarchy.finest().checksum() {
            return Err(stale(&dir, "dataset was generated on a different geometry; rerun `gendata`"));
        }
        Ok(dataset)
    }

    fn data_checksum(&self) -> Result<String> {
        Ok(io::read_json::<io::DatasetManifest>(&self.layout.data().join(io::DATASET_MANIFEST))?.fields_checksum)
    }

    // ------------------------------------------------------------ train

    fn train_config(&self, seed_label: &str) -> TrainConfig {
        TrainConfig {
            seed: self.seed(seed_label),
            ..self.config.train.clone()
        }
    }

    pub fn train(&self) -> Result<(GVaeModel, TrainHistory)> {
        let hierarchy = self.load_geometry()?;
        let dataset = self.load_data(&hierarchy)?;
        let mut model = GVaeModel::new(self.config.model.clone(), &hierarchy, self.seed("init"))?;
        let start = Instant::now();
        let history = train(&mut model, &dataset, &self.train_config("train"))?;
        let dir = self.layout.model();
        save_checkpoint(&dir, &model)?;
        write_json(&dir.join("history.json"), &history)?;
        write_file(&dir.join("loss.csv"), loss_csv(&[("train", &history)]).as_bytes())?;
        let mut record = StageRecord::new("train", &self.config);
        record.inputs.insert("hierarchy".into(), hierarchy.checksum());
        record.inputs.insert("fields".into(), self.data_checksum()?);
        record.outputs.insert("parameters".into(), parameter_checksum(&model));
        write_json(&dir.join(STAGE_FILE), &record)?;
        log::info!(
            "train: {} epochs in {:.1}s, final validation loss {:?}",
            history.epochs.len(),
            start.elapsed().as_secs_f64(),
            history.final_val_loss()
        );
        Ok((model, history))
    }

    pub fn load_model(&self, hierarchy: &CoarseningHierarchy) -> Result<GVaeModel> {
        let dir = self.layout.model();
        let record = read_stage(&dir, "train")?;
        record.check_config(&dir, &self.config)?;
        if record.inputs.get("fields") != Some(&self.data_checksum()?) {
            return Err(stale(&dir, "checkpoint was trained on a different dataset; rerun `train`"));
        }
        let model = load_checkpoint(&dir, hierarchy, LoadMode::Strict)?;
        if record.outputs.get("parameters") != Some(&parameter_checksum(&model)) {
            return Err(stale(&dir, "checkpoint weights differ from the recorded training run"));
        }
        Ok(model)
    }

    // ------------------------------------------------------------ optimize

    /// The estimation cases the configuration asks for, in report order.
    pub fn cases(&self, dataset: &Dataset) -> Vec<(String, CaseKind)> {
        let mut out: Vec<(String, CaseKind)> = dataset
            .indices(Split::Test)
            .into_iter()
            .take(self.config.optimize.cases)
            .enumerate()
            .map(|(k, i)| (format!("heldout_{k:02}"), CaseKind::HeldOut { index: i }))
            .collect();
        if self.config.optimize.self_consistency {
            out.push(("self_consistency".into(), CaseKind::SelfConsistency));
        }
        out
    }

    /// Runs Bayesian optimization for every case (or only `only`), writing
    /// one directory per case.
    pub fn optimize(&self, only: Option<&str>) -> Result<Vec<CaseResult>> {
        let hierarchy = self.load_geometry()?;
        let dataset = self.load_data(&hierarchy)?;
        let model = self.load_model(&hierarchy)?;
        let ctx = self.sim_context(hierarchy.finest())?;
        let mut cases = self.cases(&dataset);
        if let Some(id) = only {
            cases.retain(|(c, _)| c == id);
            if cases.is_empty() {
                return Err(Error::Config(format!("unknown case {id:?}")));
            }
        }
        self.run_cases(&cases, &model, &dataset, &ctx, hierarchy.finest())
    }

    fn run_cases(
        &self,
        cases: &[(String, CaseKind)],
        model: &GVaeModel,
        dataset: &Dataset,
        ctx: &SimContext,
        graph: &MeshGraph,
    ) -> Result<Vec<CaseResult>> {
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<Result<CaseResult>>>> = Mutex::new((0..cases.len()).map(|_| None).collect());
        let workers = self.jobs.min(cases.len()).max(1);
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let k = next.fetch_add(1, Ordering::SeqCst);
                    if k >= cases.len() {
                        break;
                    }
                    let (id, kind) = &cases[k];
                    let result = self.run_case(id, *kind, model, dataset, ctx, graph);
                    slots.lock().expect("no poisoned workers")[k] = Some(result);
                });
            }
        });
        slots
            .into_inner()
            .expect("no poisoned workers")
            .into_iter()
            .map(|r| r.expect("every case ran"))
            .collect()
    }

    fn run_case(
        &self,
        id: &str,
        kind: CaseKind,
        model: &GVaeModel,
        dataset: &Dataset,
        ctx: &SimContext,
        graph: &MeshGraph,
    ) -> Result<CaseResult> {
        let start = Instant::now();
        let seed = self.seed(&format!("case:{id}"));
        let bo = self.config.optimize.bo(seed);
        let q = model.latent_dim();
        let (truth, truth_set, snr) = match kind {
            CaseKind::HeldOut { index } => (
                dataset.fields[index].clone(),
                dataset.labels[index].abnormal.clone(),
                Some(self.config.simulation.snr_db),
            ),
            CaseKind::SelfConsistency => {
                // the first design point, so the optimizer evaluates it exactly
                let z0 = latin_hypercube(bo.n_init, &bo.bounds(q), seed).remove(0);
                let theta = ExcitabilityField::new(model.decode(&z0)?)?;
                let set = segment(theta.values())?;
                (theta, set, None)
            }
        };
        let history = ctx.simulator.run(&truth)?;
        let target = measure(&ctx.lead, &history, ctx.dt_frame, snr, seed)?;
        let objective = LatentObjective {
            model,
            simulator: &ctx.simulator,
            lead: &ctx.lead,
            target: &target,
        };
        let result = objective.optimize(&bo)?;
        let estimate = result.best_theta.clone().expect("latent optimization decodes its optimum");
        let (dice, sse) = score(estimate.values(), truth.values(), &truth_set)?;
        let best = result.best_so_far();
        let monotone = best.windows(2).all(|w| w[1] >= w[0]);

        let dir = self.layout.case(id);
        let graph_checksum = graph.checksum();
        save_field(&dir.join("truth.bin"), &truth, &graph_checksum)?;
        save_field(&dir.join("estimate.bin"), &estimate, &graph_checksum)?;
        let frames = &target.frames;
        write_tensor(
            &dir.join("measurements.bin"),
            &[frames.nrows(), frames.ncols()],
            frames.as_slice().expect("standard layout"),
        )?;
        let mut csv = Vec::new();
        result
            .write_csv(&mut csv)
            .map_err(|e| Error::io(dir.join("history.csv"), e))?;
        write_file(&dir.join("history.csv"), &csv)?;
        let truth_lines: Vec<String> = truth_set.iter().map(usize::to_string).collect();
        write_file(&dir.join("truth_set.txt"), format!("{}\n", truth_lines.join(" ")).as_bytes())?;

        let case = CaseResult {
            id: id.to_string(),
            kind,
            best_z: result.best_z.clone(),
            best_value: result.best_value,
            evaluations: result.evaluation_count(),
            sentinels: result.history.iter().filter(|r| r.sentinel).count(),
            dice,
            sse,
            monotone,
            snr_db: snr,
            wall_time: start.elapsed().as_secs_f64(),
            model_checksum: parameter_checksum(model),
            config_checksum: self.config.checksum(),
        };
        write_json(&dir.join("result.json"), &case)?;
        log::info!(
            "case {id}: best {:.4e} after {} evaluations, dice {:.3}",
            case.best_value,
            case.evaluations,
            case.dice
        );
        Ok(case)
    }

    // ------------------------------------------------------------ evaluate

    /// Reconstruction metrics, PCA baseline and estimation cases; writes the
    /// JSON and CSV report. Case results already on disk for the current
    /// model are reused.
    pub fn evaluate(&self) -> Result<ExperimentReport> {
        let start = Instant::now();
        let hierarchy = self.load_geometry()?;
        let dataset = self.load_data(&hierarchy)?;
        let model = self.load_model(&hierarchy)?;
        let reconstruction = self.reconstruction(&model, &dataset)?;
        let recon_time = start.elapsed().as_secs_f64();

        let model_checksum = parameter_checksum(&model);
        let config_checksum = self.config.checksum();
        let cases = self.cases(&dataset);
        let mut results: Vec<Option<CaseResult>> = cases
            .iter()
            .map(|(id, _)| {
                read_json::<CaseResult>(&self.layout.case(id).join("result.json"))
                    .ok()
                    .filter(|c| c.model_checksum == model_checksum && c.config_checksum == config_checksum)
            })
            .collect();
        let missing: Vec<(String, CaseKind)> = cases
            .iter()
            .zip(&results)
            .filter(|(_, r)| r.is_none())
            .map(|(c, _)| c.clone())
            .collect();
        if !missing.is_empty() {
            let ctx = self.sim_context(hierarchy.finest())?;
            let fresh = self.run_cases(&missing, &model, &dataset, &ctx, hierarchy.finest())?;
            let mut fresh = fresh.into_iter();
            for r in results.iter_mut().filter(|r| r.is_none()) {
                *r = fresh.next();
            }
        }
        let cases: Vec<CaseResult> = results.into_iter().map(|r| r.expect("filled")).collect();

        let mut report = ExperimentReport::new(
            &self.config,
            hierarchy.checksum(),
            self.data_checksum()?,
            model_checksum,
            model.latent_dim(),
            reconstruction,
            cases,
        );
        report.timings.insert("reconstruction".into(), recon_time);
        report.timings.insert("evaluate".into(), start.elapsed().as_secs_f64());
        for (name, path) in [
            ("hierarchy", self.layout.hierarchy()),
            ("dataset", self.layout.data()),
            ("checkpoint", self.layout.model()),
            ("cases", self.layout.cases()),
        ] {
            report.artifacts.insert(name.into(), self.layout.relative(&path));
        }
        report.write(&self.layout.report())?;
        Ok(report)
    }

    fn reconstruction(&self, model: &GVaeModel, dataset: &Dataset) -> Result<ReconstructionReport> {
        let val = gvae_metrics(model, dataset, Split::Val)?;
        let test = gvae_metrics(model, dataset, Split::Test)?;
        let pca = PcaModel::fit(&dataset.matrix(Split::Train))?;
        let mut rows = Vec::new();
        for &q in &self.config.evaluate.pca_dims {
            if q > pca.max_components() {
                continue;
            }
            rows.push(PcaRow {
                q,
                val: pca_metrics(&pca, q, dataset, Split::Val)?,
                test: pca_metrics(&pca, q, dataset, Split::Test)?,
            });
        }
        let crossover = rows.iter().find(|r| r.test.sse <= test.sse).map(|r| r.q);
        Ok(ReconstructionReport {
            gvae_val: val,
            gvae_test: test,
            pca: rows,
            pca_sse_crossover: crossover,
        })
    }

    /// Re-reads the evaluation report and recomputes every case metric from
    /// the stored fields; a disagreement means an artifact changed.
    pub fn report(&self) -> Result<ExperimentReport> {
        let dir = self.layout.report();
        let path = dir.join("report.json");
        require(&path, "evaluate")?;
        let report: ExperimentReport = read_json(&path)?;
        if report.config_checksum != self.config.checksum() {
            return Err(stale(&path, "written under a different configuration; rerun `evaluate`"));
        }
        for case in &report.cases {
            let case_dir = self.layout.case(&case.id);
            let (truth, _) = load_field(&case_dir.join("truth.bin"))?;
            let (estimate, _) = load_field(&case_dir.join("estimate.bin"))?;
            let set_path = case_dir.join("truth_set.txt");
            let text = String::from_utf8(io::read_file(&set_path)?).map_err(|_| stale(&set_path, "not UTF-8"))?;
            let set: Vec<usize> = text
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| stale(&set_path, "bad vertex index")))
                .collect::<Result<_>>()?;
            let (dice, sse) = score(estimate.values(), truth.values(), &set)?;
            if dice != case.dice || sse != case.sse {
                return Err(stale(&case_dir, "stored fields no longer reproduce the reported metrics"));
            }
            let (shape, _) = read_tensor::<f64>(&case_dir.join("measurements.bin"))?;
            if shape.len() != 2 {
                return Err(stale(case_dir.join("measurements.bin"), "measurements must be a matrix"));
            }
        }
        Ok(report)
    }

    // ------------------------------------------------------------ transfer

    /// Fine-tunes the trained model on the second geometry and trains a
    /// scratch model with the same budget; writes both checkpoints, the loss
    /// curves and a comparison report.
    pub fn transfer(&self) -> Result<TransferOutcome> {
        let source_hierarchy = self.load_geometry()?;
        let source = self.load_model(&source_hierarchy)?;
        let t = &self.config.transfer;
        let points = self.point_cloud(t.points.as_deref(), &t.shell, "transfer-geometry")?;
        let hierarchy = self.build_geometry(points)?;
        let dataset = gen_dataset(hierarchy.finest(), &self.dataset_spec(t.count, "transfer-data"))?;
        let cfg = TrainConfig {
            epochs: t.epochs,
            ..self.train_config("transfer-train")
        };

        let frozen_before = encoder_checksum(&source);
        let (fine_tuned, ft_history) = fine_tune(&source, &hierarchy, &dataset, &cfg)?;
        let frozen_after = encoder_checksum(&fine_tuned);

        let mut scratch = GVaeModel::new(self.config.model.clone(), &hierarchy, self.seed("transfer-init"))?;
        let scratch_history = train(&mut scratch, &dataset, &cfg)?;

        let dir = self.layout.transfer();
        save_hierarchy(&dir.join("hierarchy"), &hierarchy)?;
        save_dataset(&dir.join("data"), &dataset)?;
        save_checkpoint(&dir.join("fine_tuned"), &fine_tuned)?;
        save_checkpoint(&dir.join("scratch"), &scratch)?;
        write_file(
            &dir.join("curves.csv"),
            loss_csv(&[("fine_tuned", &ft_history), ("scratch", &scratch_history)]).as_bytes(),
        )?;
        let report = TransferReport {
            source_hierarchy: source_hierarchy.checksum(),
            target_hierarchy: hierarchy.checksum(),
            samples: dataset.len(),
            epochs: t.epochs,
            fine_tuned_curve: val_curve(&ft_history),
            scratch_curve: val_curve(&scratch_history),
            fine_tuned_final_val: ft_history.final_val_loss(),
            scratch_final_val: scratch_history.final_val_loss(),
            fine_tuned_val: gvae_metrics(&fine_tuned, &dataset, Split::Val)?,
            scratch_val: gvae_metrics(&scratch, &dataset, Split::Val)?,
            frozen_checksum_before: frozen_before,
            frozen_checksum_after: frozen_after,
        };
        write_json(&dir.join("transfer.json"), &report)?;
        log::info!(
            "transfer: fine-tuned {:?} vs scratch {:?}",
            report.fine_tuned_final_val,
            report.scratch_final_val
        );
        Ok(TransferOutcome {
            report,
            fine_tuned,
            scratch,
        })
    }

    /// geometry → gendata → train → evaluate.
    pub fn run_all(&self) -> Result<ExperimentReport> {
        self.geometry()?;
        self.gendata()?;
        self.train()?;
        self.evaluate()
    }
}

/// SHA-256 over every trainable tensor, in canonical order.
pub fn parameter_checksum(model: &GVaeModel) -> String {
    tensor_checksum(&model.params.tensors())
}

/// SHA-256 over the encoder convolution tensors (the ones transfer freezes).
pub fn encoder_checksum(model: &GVaeModel) -> String {
    let n = model.params.encoder_conv_tensors();
    tensor_checksum(&model.params.tensors()[..n])
}

fn tensor_checksum(tensors: &[&[f64]]) -> String {
    let mut h = Sha256::new();
    for t in tensors {
        h.update((t.len() as u64).to_le_bytes());
        for v in *t {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

fn val_curve(history: &TrainHistory) -> Vec<f64> {
    std::iter::once(history.initial_val_loss)
        .chain(history.epochs.iter().map(|e| e.val_loss))
        .map(|v| v.unwrap_or(f64::NAN))
        .collect()
}

/// `epoch,<name>_train,<name>_val,...`; epoch 0 holds the initial losses.
fn loss_csv(runs: &[(&str, &TrainHistory)]) -> String {
    let mut out = String::from("epoch");
    for (name, _) in runs {
        out.push_str(&format!(",{name}_train,{name}_val"));
    }
    out.push('\n');
    let epochs = runs.iter().map(|(_, h)| h.epochs.len()).max().unwrap_or(0);
    let fmt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.10e}"));
    for e in 0..=epochs {
        out.push_str(&e.to_string());
        for (_, h) in runs {
            let (tr, va) = if e == 0 {
                (Some(h.initial_train_loss), h.initial_val_loss)
            } else {
                h.epochs.get(e - 1).map_or((None, None), |r| (Some(r.train_loss), r.val_loss))
            };
            out.push_str(&format!(",{},{}", fmt(tr), fmt(va)));
        }
        out.push('\n');
    }
    out
}
