//! Two-variable Aliev-Panfilov reaction-diffusion dynamics on a mesh graph,
//! plus the linear measurement model.

mod lead;

pub use lead::{measure, synth_lead_field, LeadField, MeasurementSeries};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::MeshGraph;

/// Model coefficients and time stepping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApParams {
    /// Repolarization coefficient.
    pub c: f64,
    pub e0: f64,
    pub mu1: f64,
    pub mu2: f64,
    /// Isotropic diffusion coefficient (length^2 / time).
    pub d_coeff: f64,
    pub dt: f64,
    pub t_end: f64,
    pub record_stride: usize,
}

impl Default for ApParams {
    fn default() -> Self {
        ApParams {
            c: 8.0,
            e0: 0.002,
            mu1: 0.2,
            mu2: 0.3,
            d_coeff: 0.02,
            dt: 0.1,
            t_end: 120.0,
            record_stride: 10,
        }
    }
}

impl ApParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.c, self.e0, self.mu1, self.mu2, self.d_coeff, self.dt, self.t_end]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidInput("model coefficients must be finite".into()));
        }
        if self.dt <= 0.0 || self.t_end < self.dt {
            return Err(Error::InvalidInput(format!(
                "need dt > 0 and t_end >= dt (dt = {}, t_end = {})",
                self.dt, self.t_end
            )));
        }
        if self.d_coeff < 0.0 {
            return Err(Error::InvalidInput("d_coeff must be non-negative".into()));
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidInput("record_stride must be >= 1".into()));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    /// Recovery coupling `e0 + mu1 v / (u + mu2)`.
    #[inline]
    pub fn epsilon(&self, u: f64, v: f64) -> f64 {
        self.e0 + self.mu1 * v / (u + self.mu2)
    }
}

/// Per-vertex tissue excitability, every entry in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ExcitabilityField(Vec<f64>);

impl ExcitabilityField {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if let Some(i) = theta.iter().position(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::InvalidInput(format!(
                "excitability {} at vertex {i} outside [0, 1]",
                theta[i]
            )));
        }
        Ok(ExcitabilityField(theta))
    }

    pub fn constant(n: usize, value: f64) -> Result<Self> {
        ExcitabilityField::new(vec![value; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for ExcitabilityField {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        ExcitabilityField::new(v)
    }
}

impl From<ExcitabilityField> for Vec<f64> {
    fn from(f: ExcitabilityField) -> Self {
        f.0
    }
}

/// Transmembrane potential `u` and recovery variable `v`.
#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl SimState {
    pub fn rest(n: usize) -> Self {
        SimState {
            u: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

/// Current injection at a set of vertices during `[t_on, t_off)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StimulusProtocol {
    pub sites: Vec<usize>,
    pub t_on: f64,
    pub t_off: f64,
    pub amplitude: f64,
}

impl StimulusProtocol {
    pub fn new(sites: Vec<usize>, t_on: f64, t_off: f64, amplitude: f64) -> Self {
        StimulusProtocol {
            sites,
            t_on,
            t_off,
            amplitude,
        }
    }

    pub fn validate(&self, n: usize, t_end: f64) -> Result<()> {
        if self.sites.is_empty() {
            return Err(Error::InvalidInput("stimulus needs at least one site".into()));
        }
        if let Some(&s) = self.sites.iter().find(|&&s| s >= n) {
            return Err(Error::InvalidInput(format!("stimulus site {s} out of range ({n} vertices)")));
        }
        if !(self.t_on < self.t_off && self.t_off <= t_end) {
            return Err(Error::InvalidInput(format!(
                "stimulus window [{}, {}) must satisfy t_on < t_off <= t_end = {t_end}",
                self.t_on, self.t_off
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn active(&self, t: f64) -> bool {
        self.t_on <= t && t < self.t_off
    }
}

/// Sparse diffusion operator in compressed-row form.
#[derive(Clone, Debug)]
pub struct DiffusionOperator {
    row_start: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    diag: Vec<f64>,
}

impl DiffusionOperator {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Off-diagonal entries of row `i` as `(column, value)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_start[i]..self.row_start[i + 1];
        self.cols[span.clone()].iter().copied().zip(self.vals[span].iter().copied())
    }

    pub fn diagonal(&self, i: usize) -> f64 {
        self.diag[i]
    }

    /// `out = L u`.
    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        for i in 0..self.diag.len() {
            let mut acc = self.diag[i] * u[i];
            for k in self.row_start[i]..self.row_start[i + 1] {
                acc += self.vals[k] * u[self.cols[k]];
            }
            out[i] = acc;
        }
    }

    /// Dense row-major copy, for inspection and tests.
    pub fn to_dense(&self) -> Array2<f64> {
        let n = self.len();
        let mut m = Array2::zeros((n, n));
        for i in 0..n {
            m[[i, i]] = self.diag[i];
            for (j, v) in self.row(i) {
                m[[i, j]] = v;
            }
        }
        m
    }
}

/// Weighted graph Laplacian with inverse-square-distance weights.
///
/// Each row's off-diagonal weights are rescaled so their mean equals
/// `d_coeff` times the graph-wide mean inverse-square spacing; the diagonal
/// is the negative row sum.
pub fn graph_laplacian(graph: &MeshGraph, d_coeff: f64) -> DiffusionOperator {
    let n = graph.len();
    let pos = graph.positions();
    if !graph.is_connected() {
        log::warn!("diffusion operator built on a disconnected graph; waves cannot cross components");
    }
    let weights: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            graph
                .neighbors(i)
                .iter()
                .map(|&j| 1.0 / pos[i].distance_sq(&pos[j]))
                .collect()
        })
        .collect();
    let edge_count = graph.edge_count().max(1) as f64;
    let global_mean = weights.iter().flatten().sum::<f64>() / edge_count;

    let mut row_start = Vec::with_capacity(n + 1);
    let mut cols = Vec::with_capacity(graph.edge_count());
    let mut vals = Vec::with_capacity(graph.edge_count());
    let mut diag = vec![0.0; n];
    row_start.push(0);
    for i in 0..n {
        let row = &weights[i];
        if !row.is_empty() {
            let row_mean = row.iter().sum::<f64>() / row.len() as f64;
            let scale = d_coeff * global_mean / row_mean;
            let mut sum = 0.0;
            for (&j, &w) in graph.neighbors(i).iter().zip(row) {
                let v = w * scale;
                cols.push(j);
                vals.push(v);
                sum += v;
            }
            diag[i] = -sum;
        }
        row_start.push(cols.len());
    }
    DiffusionOperator {
        row_start,
        cols,
        vals,
        diag,
    }
}

/// Everything needed to advance the model, bundled so repeated simulations on
/// one geometry reuse the diffusion operator.
#[derive(Clone, Debug)]
pub struct Simulator {
    pub params: ApParams,
    pub stimulus: StimulusProtocol,
    laplacian: DiffusionOperator,
}

impl Simulator {
    pub fn new(graph: &MeshGraph, params: ApParams, stimulus: StimulusProtocol) -> Result<Self> {
        params.validate()?;
        stimulus.validate(graph.len(), params.t_end)?;
        let laplacian = graph_laplacian(graph, params.d_coeff);
        Ok(Simulator {
            params,
            stimulus,
            laplacian,
        })
    }

    pub fn len(&self) -> usize {
        self.laplacian.len()
    }

    pub fn is_empty(&self) -> bool {
        self.laplacian.is_empty()
    }

    pub fn laplacian(&self) -> &DiffusionOperator {
        &self.laplacian
    }

    /// Runs from rest to `t_end`; returns the recorded `N x T` potential history.
    pub fn run(&self, theta: &ExcitabilityField) -> Result<Array2<f64>> {
        simulate_with(&self.laplacian, theta, &self.params, &self.stimulus)
    }
}

/// One explicit Euler step in place. `scratch` receives the diffusion term.
pub fn step_in_place(
    state: &mut SimState,
    theta: &[f64],
    params: &ApParams,
    lap: &DiffusionOperator,
    stim: &StimulusProtocol,
    t: f64,
    scratch: &mut Vec<f64>,
) {
    let n = state.u.len();
    scratch.resize(n, 0.0);
    lap.apply(&state.u, scratch);
    if stim.active(t) {
        for &s in &stim.sites {
            scratch[s] += stim.amplitude;
        }
    }
    let (c, dt) = (params.c, params.dt);
    for i in 0..n {
        let (u, v, th) = (state.u[i], state.v[i], theta[i]);
        let du = scratch[i] - c * u * (u - th) * (u - 1.0) - u * v;
        let dv = params.epsilon(u, v) * (-v - c * u * (u - th - 1.0));
        state.u[i] = u + dt * du;
        state.v[i] = v + dt * dv;
    }
}

/// One explicit Euler step of the model at time `t`.
pub fn step(
    state: &SimState,
    theta: &ExcitabilityField,
    params: &ApParams,
    lap: &DiffusionOperator,
    stim: &StimulusProtocol,
    t: f64,
) -> Result<SimState> {
    let n = lap.len();
    if state.u.len() != n || state.v.len() != n || theta.len() != n {
        return Err(Error::mismatch(
            format!("state and theta of length {n}"),
            format!("u {}, v {}, theta {}", state.u.len(), state.v.len(), theta.len()),
        ));
    }
    let mut next = state.clone();
    let mut scratch = Vec::with_capacity(n);
    step_in_place(&mut next, theta.values(), params, lap, stim, t, &mut scratch);
    if next.u.iter().chain(&next.v).any(|x| !x.is_finite()) {
        return Err(Error::Instability { step: 0, time: t });
    }
    Ok(next)
}

/// Iterates from rest to `t_end`, recording every `record_stride` steps.
pub fn simulate(
    graph: &MeshGraph,
    theta: &ExcitabilityField,
    params: &ApParams,
    stim: &StimulusProtocol,
) -> Result<Array2<f64>> {
    Simulator::new(graph, params.clone(), stim.clone())?.run(theta)
}

fn simulate_with(
    lap: &DiffusionOperator,
    theta: &ExcitabilityField,
    params: &ApParams,
    stim: &StimulusProtocol,
) -> Result<Array2<f64>> {
    let n = lap.len();
    if theta.len() != n {
        return Err(Error::mismatch(format!("theta of length {n}"), theta.len()));
    }
    let n_steps = params.n_steps();
    let stride = params.record_stride;
    let n_frames = (n_steps / stride).max(1);
    let mut history = Array2::zeros((n, n_frames));
    let mut state = SimState::rest(n);
    let mut scratch = Vec::with_capacity(n);
    let mut frame = 0;
    for s in 0..n_steps {
        let t = s as f64 * params.dt;
        step_in_place(&mut state, theta.values(), params, lap, stim, t, &mut scratch);
        let done = s + 1;
        let record = done % stride == 0 || (done == n_steps && frame == 0);
        if record && frame < n_frames {
            if state.u.iter().chain(&state.v).any(|x| !x.is_finite()) {
                return Err(Error::Instability {
                    step: done,
                    time: done as f64 * params.dt,
                });
            }
            history.column_mut(frame).assign(&ndarray::ArrayView1::from(&state.u));
            frame += 1;
        }
    }
    if state.u.iter().chain(&state.v).any(|x| !x.is_finite()) {
        return Err(Error::Instability {
            step: n_steps,
            time: params.t_end,
        });
    }
    Ok(history)
}
