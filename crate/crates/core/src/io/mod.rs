//! On-disk formats: a tensor container (little-endian blob plus JSON
//! sidecar), hierarchies, datasets, fields, checkpoints and point clouds.

mod tensor;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use tensor::{read_tensor, sha256_hex, sidecar_path, write_tensor, Element, TensorMeta};
pub(crate) use tensor::{read_file, read_json, write_file, write_json};

use crate::error::{Error, Result};
use crate::gvae::{remap_dense_layers, Architecture, GVaeModel, GVaeParams};
use crate::mesh::{AssignmentMatrix, CoarseningHierarchy, MeshGraph, Point3};
use crate::sim::ExcitabilityField;
use crate::synth::{Dataset, RegionLabel, Split};

fn stale(path: &Path, reason: impl Into<String>) -> Error {
    Error::StaleArtifact {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

// ---------------------------------------------------------------- point clouds

/// Reads `x,y,z` rows. Blank lines and lines starting with `#` are skipped,
/// as is a first line that does not parse as numbers (a header).
pub fn read_point_cloud_csv(path: &Path) -> Result<Vec<Point3>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut points = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let values: std::result::Result<Vec<f64>, _> = line.split(',').map(|v| v.trim().parse::<f64>()).collect();
        match values {
            Ok(v) if v.len() == 3 => points.push(Point3::new(v[0], v[1], v[2])),
            Err(_) if points.is_empty() && line_no == 0 => continue,
            _ => {
                return Err(Error::InvalidInput(format!(
                    "{}:{}: expected three comma-separated numbers",
                    path.display(),
                    line_no + 1
                )))
            }
        }
    }
    if points.is_empty() {
        return Err(Error::InvalidInput(format!("{}: no points", path.display())));
    }
    Ok(points)
}

/// Reads points from a CSV file or, for `.bin`, an `N x 3` tensor.
pub fn read_point_cloud(path: &Path) -> Result<Vec<Point3>> {
    if !path.exists() {
        return Err(Error::io(path, std::io::Error::from(std::io::ErrorKind::NotFound)));
    }
    if path.extension().is_some_and(|e| e == "bin") {
        let (shape, data) = read_tensor::<f64>(path)?;
        if shape.len() != 2 || shape[1] != 3 {
            return Err(Error::InvalidInput(format!(
                "{}: point tensor must be N x 3, got {shape:?}",
                path.display()
            )));
        }
        Ok(data.chunks_exact(3).map(|c| Point3::new(c[0], c[1], c[2])).collect())
    } else {
        read_point_cloud_csv(path)
    }
}

pub fn write_point_cloud_csv(path: &Path, points: &[Point3]) -> Result<()> {
    let mut text = String::from("x,y,z\n");
    for p in points {
        text.push_str(&format!("{:.17e},{:.17e},{:.17e}\n", p.x, p.y, p.z));
    }
    write_file(path, text.as_bytes())
}

// ----------------------------------------------------------------- hierarchy

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierarchyManifest {
    pub depth: usize,
    pub sizes: Vec<usize>,
    /// Neighbor count `k` of each level's graph.
    pub k: Vec<usize>,
    pub checksum: String,
}

pub const HIERARCHY_MANIFEST: &str = "hierarchy.json";

/// Writes `hierarchy.json` and `level{l}_{positions,adjacency,P}.bin` into `dir`.
pub fn save_hierarchy(dir: &Path, hierarchy: &CoarseningHierarchy) -> Result<HierarchyManifest> {
    for (l, g) in hierarchy.graphs().iter().enumerate() {
        let n = g.len();
        let positions: Vec<f64> = g.positions().iter().flat_map(|p| p.as_array()).collect();
        write_tensor(&dir.join(format!("level{l}_positions.bin")), &[n, 3], &positions)?;
        write_tensor(&dir.join(format!("level{l}_adjacency.bin")), &[n, n], &g.adjacency_dense())?;
    }
    for (l, p) in hierarchy.assignments().iter().enumerate() {
        write_tensor(
            &dir.join(format!("level{l}_P.bin")),
            &[p.fine_len(), p.coarse_len()],
            &p.to_dense(),
        )?;
    }
    let manifest = HierarchyManifest {
        depth: hierarchy.depth(),
        sizes: hierarchy.sizes(),
        k: hierarchy.graphs().iter().map(MeshGraph::k).collect(),
        checksum: hierarchy.checksum(),
    };
    write_json(&dir.join(HIERARCHY_MANIFEST), &manifest)?;
    Ok(manifest)
}

pub fn load_hierarchy(dir: &Path) -> Result<CoarseningHierarchy> {
    let manifest_path = dir.join(HIERARCHY_MANIFEST);
    let manifest: HierarchyManifest = read_json(&manifest_path)?;
    if manifest.sizes.len() != manifest.depth + 1 || manifest.k.len() != manifest.depth + 1 {
        return Err(stale(&manifest_path, "sizes/k do not match depth"));
    }
    let mut graphs = Vec::with_capacity(manifest.depth + 1);
    for l in 0..=manifest.depth {
        let pos_path = dir.join(format!("level{l}_positions.bin"));
        let (shape, pos) = read_tensor::<f64>(&pos_path)?;
        if shape != [manifest.sizes[l], 3] {
            return Err(stale(&pos_path, format!("shape {shape:?} disagrees with the manifest")));
        }
        let positions: Vec<Point3> = pos.chunks_exact(3).map(|c| Point3::new(c[0], c[1], c[2])).collect();
        let adj_path = dir.join(format!("level{l}_adjacency.bin"));
        let (shape, adj) = read_tensor::<u8>(&adj_path)?;
        let n = positions.len();
        if shape != [n, n] {
            return Err(stale(&adj_path, format!("shape {shape:?} disagrees with the manifest")));
        }
        let edges: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| adj[i * n + j] != 0)
            .collect();
        graphs.push(MeshGraph::from_edges(positions, &edges, manifest.k[l])?);
    }
    let mut assignments = Vec::with_capacity(manifest.depth);
    for l in 0..manifest.depth {
        let p_path = dir.join(format!("level{l}_P.bin"));
        let (shape, dense) = read_tensor::<u8>(&p_path)?;
        if shape != [manifest.sizes[l], manifest.sizes[l + 1]] {
            return Err(stale(&p_path, format!("shape {shape:?} disagrees with the manifest")));
        }
        assignments.push(AssignmentMatrix::from_dense(shape[0], shape[1], &dense)?);
    }
    let hierarchy = CoarseningHierarchy::from_parts(graphs, assignments)?;
    if hierarchy.checksum() != manifest.checksum {
        return Err(stale(&manifest_path, "reloaded hierarchy checksum differs from the manifest"));
    }
    Ok(hierarchy)
}

// ---------------------------------------------------------------- fields

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldMeta {
    pub length: usize,
    pub units: String,
    pub graph_checksum: String,
    pub checksum: String,
}

/// Writes a field as a flat `f64` vector with a sidecar carrying its length,
/// units and the checksum of the graph it lives on.
pub fn save_field(path: &Path, field: &ExcitabilityField, graph_checksum: &str) -> Result<FieldMeta> {
    let mut bytes = Vec::with_capacity(field.len() * 8);
    for &v in field.values() {
        v.write_le(&mut bytes);
    }
    let meta = FieldMeta {
        length: field.len(),
        units: "dimensionless excitability".into(),
        graph_checksum: graph_checksum.to_string(),
        checksum: sha256_hex(&bytes),
    };
    write_file(path, &bytes)?;
    write_json(&sidecar_path(path), &meta)?;
    Ok(meta)
}

pub fn load_field(path: &Path) -> Result<(ExcitabilityField, FieldMeta)> {
    let meta: FieldMeta = read_json(&sidecar_path(path))?;
    let bytes = read_file(path)?;
    if bytes.len() != meta.length * 8 || sha256_hex(&bytes) != meta.checksum {
        return Err(stale(path, "field contents do not match the sidecar"));
    }
    let values = bytes.chunks_exact(8).map(f64::read_le).collect();
    Ok((ExcitabilityField::new(values)?, meta))
}

// ---------------------------------------------------------------- datasets

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub count: usize,
    pub vertices: usize,
    pub graph_checksum: String,
    pub theta_healthy: f64,
    pub theta_abnormal: f64,
    pub splits: Vec<Split>,
    pub fractions: Vec<f64>,
    pub fields_checksum: String,
    pub labels_checksum: String,
}

pub const DATASET_MANIFEST: &str = "dataset.json";

/// `dataset.json`, `fields.bin` (count x N) and `labels.txt` (one
/// space-separated vertex list per line) in `dir`.
pub fn save_dataset(dir: &Path, dataset: &Dataset) -> Result<DatasetManifest> {
    let n = dataset.field_len();
    let flat: Vec<f64> = dataset.fields.iter().flat_map(|f| f.values().iter().copied()).collect();
    let meta = write_tensor(&dir.join("fields.bin"), &[dataset.len(), n], &flat)?;
    let mut labels = String::new();
    for l in &dataset.labels {
        let line: Vec<String> = l.abnormal.iter().map(usize::to_string).collect();
        labels.push_str(&line.join(" "));
        labels.push('\n');
    }
    write_file(&dir.join("labels.txt"), labels.as_bytes())?;
    let manifest = DatasetManifest {
        count: dataset.len(),
        vertices: n,
        graph_checksum: dataset.graph_checksum.clone(),
        theta_healthy: dataset.theta_healthy,
        theta_abnormal: dataset.theta_abnormal,
        splits: dataset.splits.clone(),
        fractions: dataset.labels.iter().map(|l| l.fraction).collect(),
        fields_checksum: meta.checksum,
        labels_checksum: sha256_hex(labels.as_bytes()),
    };
    write_json(&dir.join(DATASET_MANIFEST), &manifest)?;
    Ok(manifest)
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join(DATASET_MANIFEST);
    let m: DatasetManifest = read_json(&manifest_path)?;
    let fields_path = dir.join("fields.bin");
    let (shape, flat) = read_tensor::<f64>(&fields_path)?;
    if shape != [m.count, m.vertices] {
        return Err(stale(&fields_path, format!("shape {shape:?} disagrees with the manifest")));
    }
    let labels_path = dir.join("labels.txt");
    let labels_bytes = read_file(&labels_path)?;
    if sha256_hex(&labels_bytes) != m.labels_checksum {
        return Err(stale(&labels_path, "labels do not match the manifest checksum"));
    }
    let text = String::from_utf8(labels_bytes).map_err(|_| stale(&labels_path, "labels are not UTF-8"))?;
    let lines: Vec<&str> = text.lines().collect();
    if lines.len() != m.count || m.splits.len() != m.count || m.fractions.len() != m.count {
        return Err(stale(&manifest_path, "per-sample lists disagree with count"));
    }
    let mut labels = Vec::with_capacity(m.count);
    for (line, &fraction) in lines.iter().zip(&m.fractions) {
        let abnormal = line
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| stale(&labels_path, format!("bad vertex index: {e}")))?;
        let mut label = RegionLabel::new(abnormal, m.vertices)?;
        label.fraction = fraction;
        labels.push(label);
    }
    let fields = if m.vertices == 0 {
        Vec::new()
    } else {
        flat.chunks_exact(m.vertices)
            .map(|c| ExcitabilityField::new(c.to_vec()))
            .collect::<Result<_>>()?
    };
    Ok(Dataset {
        fields,
        labels,
        splits: m.splits,
        graph_checksum: m.graph_checksum,
        theta_healthy: m.theta_healthy,
        theta_abnormal: m.theta_abnormal,
    })
}

// ---------------------------------------------------------------- checkpoints

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub architecture: Architecture,
    /// Checksum of the hierarchy the weights were trained against.
    pub hierarchy_checksum: String,
    /// Coarsest-level vertex positions of that hierarchy, needed to move the
    /// dense layers onto a new geometry.
    pub coarsest_positions: Vec<[f64; 3]>,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub file: String,
    pub len: usize,
    pub checksum: String,
}

pub const CHECKPOINT_MANIFEST: &str = "checkpoint.json";

/// How strictly a checkpoint must match the hierarchy it is loaded onto.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LoadMode {
    /// The hierarchy checksum must equal the training hierarchy's.
    Strict,
    /// Any hierarchy of the same depth; coarse-level dense layers are
    /// remapped by nearest coarse vertex.
    FineTune,
}

pub fn save_checkpoint(dir: &Path, model: &GVaeModel) -> Result<CheckpointManifest> {
    let params = &model.params;
    let mut tensors = Vec::new();
    for (name, data) in params.tensor_names().into_iter().zip(params.tensors()) {
        let file = format!("{name}.bin");
        let meta = write_tensor(&dir.join(&file), &[data.len()], data)?;
        tensors.push(TensorEntry {
            name,
            file,
            len: data.len(),
            checksum: meta.checksum,
        });
    }
    let manifest = CheckpointManifest {
        architecture: model.architecture().clone(),
        hierarchy_checksum: model.hierarchy_checksum().to_string(),
        coarsest_positions: model.geometry().coarsest_positions().iter().map(|p| p.as_array()).collect(),
        tensors,
    };
    write_json(&dir.join(CHECKPOINT_MANIFEST), &manifest)?;
    Ok(manifest)
}

pub fn load_checkpoint(dir: &Path, hierarchy: &CoarseningHierarchy, mode: LoadMode) -> Result<GVaeModel> {
    let manifest_path = dir.join(CHECKPOINT_MANIFEST);
    let m: CheckpointManifest = read_json(&manifest_path)?;
    let same = m.hierarchy_checksum == hierarchy.checksum();
    if mode == LoadMode::Strict && !same {
        return Err(stale(
            &manifest_path,
            "checkpoint was trained on a different hierarchy (load in fine-tune mode to transfer)",
        ));
    }
    // fresh parameters of the training shapes, then overwritten tensor by tensor
    let coarsest: Vec<Point3> = m.coarsest_positions.iter().map(|a| Point3::new(a[0], a[1], a[2])).collect();
    let mut params = GVaeParams::shaped(&m.architecture, coarsest.len())?;
    {
        let names = params.tensor_names();
        let slots = params.tensors_mut();
        if names.len() != m.tensors.len() {
            return Err(stale(&manifest_path, "tensor list does not match the architecture"));
        }
        for ((slot, name), entry) in slots.into_iter().zip(names).zip(&m.tensors) {
            if entry.name != name {
                return Err(stale(&manifest_path, format!("expected tensor {name}, found {}", entry.name)));
            }
            let path = dir.join(&entry.file);
            let (_, data) = read_tensor::<f64>(&path)?;
            if data.len() != slot.len() || data.len() != entry.len {
                return Err(stale(&path, format!("{} values where {} were expected", data.len(), slot.len())));
            }
            *slot = data;
        }
    }
    if !same {
        params = remap_dense_layers(&m.architecture, params, &coarsest, hierarchy.coarsest().positions());
    }
    GVaeModel::from_params(m.architecture, hierarchy, params)
}

/// Reads just the manifest of a checkpoint.
pub fn checkpoint_manifest(dir: &Path) -> Result<CheckpointManifest> {
    read_json(&dir.join(CHECKPOINT_MANIFEST))
}

/// Hex SHA-256 of a file on disk.
pub fn file_checksum(path: &Path) -> Result<String> {
    Ok(sha256_hex(&read_file(path)?))
}
