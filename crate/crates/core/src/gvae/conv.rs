use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::bspline::{bspline_basis, KernelSpec};
use crate::error::{Error, Result};
use crate::mesh::MeshGraph;

/// Per-graph data the spline convolution needs.
///
/// For every vertex the distinct control points touched by its incident
/// edges are collected once ("slots"), and every nonzero basis term is stored
/// as `(neighbor, slot, weight / degree)`. A forward pass then sums neighbor
/// features per slot and multiplies each slot by its kernel matrix once.
#[derive(Clone, Debug)]
pub struct ConvGeometry {
    kernel: KernelSpec,
    /// Per vertex, range into `slot_point`.
    slot_start: Vec<usize>,
    slot_point: Vec<u32>,
    /// Per vertex, range into the term arrays.
    term_start: Vec<usize>,
    term_neighbor: Vec<u32>,
    term_slot: Vec<u32>,
    term_weight: Vec<f64>,
    max_slots: usize,
}

impl ConvGeometry {
    pub fn new(graph: &MeshGraph, kernel: KernelSpec) -> Result<Self> {
        kernel.validate()?;
        let n = graph.len();
        let mut geom = ConvGeometry {
            kernel,
            slot_start: Vec::with_capacity(n + 1),
            slot_point: Vec::new(),
            term_start: Vec::with_capacity(n + 1),
            term_neighbor: Vec::new(),
            term_slot: Vec::new(),
            term_weight: Vec::new(),
            max_slots: 0,
        };
        let mut slot_of = vec![u32::MAX; kernel.control_points()];
        geom.slot_start.push(0);
        geom.term_start.push(0);
        for i in 0..n {
            let inv_deg = if graph.degree(i) > 0 {
                1.0 / graph.degree(i) as f64
            } else {
                0.0
            };
            let first = geom.slot_point.len();
            for (&j, &pseudo) in graph.neighbors(i).iter().zip(graph.pseudo(i)) {
                for (p, b) in bspline_basis(pseudo, &kernel)? {
                    if b == 0.0 {
                        continue;
                    }
                    if slot_of[p] == u32::MAX {
                        slot_of[p] = (geom.slot_point.len() - first) as u32;
                        geom.slot_point.push(p as u32);
                    }
                    geom.term_neighbor.push(j as u32);
                    geom.term_slot.push(slot_of[p]);
                    geom.term_weight.push(b * inv_deg);
                }
            }
            for &p in &geom.slot_point[first..] {
                slot_of[p as usize] = u32::MAX;
            }
            geom.max_slots = geom.max_slots.max(geom.slot_point.len() - first);
            geom.slot_start.push(geom.slot_point.len());
            geom.term_start.push(geom.term_weight.len());
        }
        Ok(geom)
    }

    pub fn len(&self) -> usize {
        self.slot_start.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kernel(&self) -> KernelSpec {
        self.kernel
    }

    fn slots(&self, i: usize) -> &[u32] {
        &self.slot_point[self.slot_start[i]..self.slot_start[i + 1]]
    }

    /// Nonzero basis terms `(neighbor, slot, weight / degree)` of vertex `i`.
    fn terms(&self, i: usize) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let range = self.term_start[i]..self.term_start[i + 1];
        self.term_neighbor[range.clone()]
            .iter()
            .zip(&self.term_slot[range.clone()])
            .zip(&self.term_weight[range])
            .map(|((&j, &s), &b)| (j as usize, s as usize, b))
    }

    /// Sums `b F(j)` per slot of vertex `i` into `buf` (`slots x m`).
    fn gather(&self, i: usize, x: &[f64], m: usize, buf: &mut [f64]) {
        let used = self.slot_start[i + 1] - self.slot_start[i];
        buf[..used * m].fill(0.0);
        for (j, s, b) in self.terms(i) {
            axpy(b, &x[j * m..(j + 1) * m], &mut buf[s * m..(s + 1) * m]);
        }
    }
}

/// B-spline kernel graph convolution with a root (self) weight and bias.
///
/// `out(i) = bias + F(i) R + 1/|N(i)| sum_j sum_p B_p(u(i,j)) F(j) W_p`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplineConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: KernelSpec,
    /// `[p][l][o]`, length `P * M * O`.
    pub weight: Vec<f64>,
    /// `[l][o]`.
    pub root: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Gradient buffers shaped like a [`SplineConvLayer`].
#[derive(Clone, Debug, Default)]
pub struct ConvGrad {
    pub weight: Vec<f64>,
    pub root: Vec<f64>,
    pub bias: Vec<f64>,
}

impl SplineConvLayer {
    pub fn zeros(in_channels: usize, out_channels: usize, kernel: KernelSpec) -> Self {
        SplineConvLayer {
            in_channels,
            out_channels,
            kernel,
            weight: vec![0.0; kernel.control_points() * in_channels * out_channels],
            root: vec![0.0; in_channels * out_channels],
            bias: vec![0.0; out_channels],
        }
    }

    /// Uniform initialization in `±sqrt(6 / (M + O))`, zero bias.
    pub fn init(in_channels: usize, out_channels: usize, kernel: KernelSpec, rng: &mut impl Rng) -> Self {
        let mut layer = Self::zeros(in_channels, out_channels, kernel);
        let bound = (6.0 / (in_channels + out_channels) as f64).sqrt();
        for w in layer.weight.iter_mut().chain(layer.root.iter_mut()) {
            *w = rng.gen_range(-bound..bound);
        }
        layer
    }

    pub fn zero_grad(&self) -> ConvGrad {
        ConvGrad {
            weight: vec![0.0; self.weight.len()],
            root: vec![0.0; self.root.len()],
            bias: vec![0.0; self.bias.len()],
        }
    }

    fn check(&self, geom: &ConvGeometry, input: &Array2<f64>) -> Result<()> {
        if geom.kernel != self.kernel {
            return Err(Error::InvalidInput("layer and geometry kernels differ".into()));
        }
        if input.dim() != (geom.len(), self.in_channels) {
            return Err(Error::mismatch(
                format!("{}x{}", geom.len(), self.in_channels),
                format!("{}x{}", input.nrows(), input.ncols()),
            ));
        }
        Ok(())
    }

    pub fn forward(&self, geom: &ConvGeometry, input: &Array2<f64>) -> Result<Array2<f64>> {
        self.check(geom, input)?;
        let (m, o) = (self.in_channels, self.out_channels);
        let n = geom.len();
        let x = input.as_slice().expect("standard layout");
        let mut out = Array2::zeros((n, o));
        let y = out.as_slice_mut().expect("standard layout");
        let mut buf = vec![0.0; geom.max_slots * m];
        for i in 0..n {
            let yi = &mut y[i * o..(i + 1) * o];
            yi.copy_from_slice(&self.bias);
            let xi = &x[i * m..(i + 1) * m];
            for (l, &xv) in xi.iter().enumerate() {
                axpy(xv, &self.root[l * o..(l + 1) * o], yi);
            }
            geom.gather(i, x, m, &mut buf);
            for (s, &p) in geom.slots(i).iter().enumerate() {
                let p = p as usize;
                let gp = &buf[s * m..(s + 1) * m];
                let wp = &self.weight[p * m * o..(p + 1) * m * o];
                for (l, &g) in gp.iter().enumerate() {
                    if g != 0.0 {
                        axpy(g, &wp[l * o..(l + 1) * o], yi);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Accumulates parameter gradients into `grad` and returns the input
    /// gradient when `want_input` is set.
    pub fn backward(
        &self,
        geom: &ConvGeometry,
        input: &Array2<f64>,
        d_out: &Array2<f64>,
        grad: Option<&mut ConvGrad>,
        want_input: bool,
    ) -> Result<Option<Array2<f64>>> {
        self.check(geom, input)?;
        let (m, o) = (self.in_channels, self.out_channels);
        let n = geom.len();
        if d_out.dim() != (n, o) {
            return Err(Error::mismatch(format!("{n}x{o}"), format!("{:?}", d_out.dim())));
        }
        let x = input.as_slice().expect("standard layout");
        let dy = d_out.as_slice().expect("standard layout");
        let mut d_in = want_input.then(|| Array2::<f64>::zeros((n, m)));
        let mut grad = grad;
        let mut buf = vec![0.0; geom.max_slots * m];
        for i in 0..n {
            let dyi = &dy[i * o..(i + 1) * o];
            let xi = &x[i * m..(i + 1) * m];
            if let Some(g) = grad.as_deref_mut() {
                axpy(1.0, dyi, &mut g.bias);
                for (l, &xv) in xi.iter().enumerate() {
                    if xv != 0.0 {
                        axpy(xv, dyi, &mut g.root[l * o..(l + 1) * o]);
                    }
                }
                geom.gather(i, x, m, &mut buf);
                for (s, &p) in geom.slots(i).iter().enumerate() {
                    let p = p as usize;
                    let gp = &buf[s * m..(s + 1) * m];
                    let gw = &mut g.weight[p * m * o..(p + 1) * m * o];
                    for (l, &gv) in gp.iter().enumerate() {
                        if gv != 0.0 {
                            axpy(gv, dyi, &mut gw[l * o..(l + 1) * o]);
                        }
                    }
                }
            }
            if let Some(d_in) = d_in.as_mut() {
                let dx = d_in.as_slice_mut().expect("standard layout");
                let dxi = &mut dx[i * m..(i + 1) * m];
                for (l, d) in dxi.iter_mut().enumerate() {
                    *d += dot(&self.root[l * o..(l + 1) * o], dyi);
                }
                // dG_p = W_p dy_i for the touched control points, then scatter
                for (s, &p) in geom.slots(i).iter().enumerate() {
                    let wp = &self.weight[p as usize * m * o..(p as usize + 1) * m * o];
                    for l in 0..m {
                        buf[s * m + l] = dot(&wp[l * o..(l + 1) * o], dyi);
                    }
                }
                for (j, s, b) in geom.terms(i) {
                    axpy(b, &buf[s * m..(s + 1) * m], &mut dx[j * m..(j + 1) * m]);
                }
            }
        }
        Ok(d_in)
    }
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yv, xv) in y.iter_mut().zip(x) {
        *yv += a * xv;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Stand-alone convolution of `features` over `graph`.
pub fn spline_conv(graph: &MeshGraph, features: &Array2<f64>, layer: &SplineConvLayer) -> Result<Array2<f64>> {
    let geom = ConvGeometry::new(graph, layer.kernel)?;
    layer.forward(&geom, features)
}
