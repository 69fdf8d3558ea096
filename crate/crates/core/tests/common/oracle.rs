//! Slow, obviously-correct reference implementations shared by the test
//! suites and the acceptance run.

use cardio::bayesopt::{GpHyperparams, GpSurrogate};
use cardio::gvae::{Architecture, GVaeGrads, GVaeModel, KernelSpec, Readout, SplineConvLayer};
use cardio::mesh::{MeshGraph, Point3};
use cardio::synth::OTSU_BINS;
use ndarray::Array2;
use rand::Rng;

use super::{hierarchy, random_points, rng};

/// Neighbor sets by sorting all distances, with ties to the lower index.
pub fn brute_force_knn(points: &[Point3], k: usize) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut adj = vec![Vec::new(); n];
    for i in 0..n {
        let mut all: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let d = [points[i].x - points[j].x, points[i].y - points[j].y, points[i].z - points[j].z];
                (d[0] * d[0] + d[1] * d[1] + d[2] * d[2], j)
            })
            .collect();
        all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        for &(_, j) in &all[..k] {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    for list in &mut adj {
        list.sort();
        list.dedup();
    }
    adj
}

/// Tries every histogram split and keeps the first maximizer of the
/// between-class variance computed directly from the class members.
pub fn exhaustive_otsu(theta: &[f64]) -> Vec<usize> {
    let min = theta.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = theta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = (max - min) / OTSU_BINS as f64;
    let bin = |v: f64| (((v - min) / width).floor().max(0.0) as usize).min(OTSU_BINS - 1);
    let center = |b: usize| min + (b as f64 + 0.5) * width;
    let n = theta.len() as f64;
    let mut best = (f64::NEG_INFINITY, 0);
    for split in 1..OTSU_BINS {
        let lower: Vec<f64> = theta.iter().filter(|&&v| bin(v) < split).map(|&v| center(bin(v))).collect();
        let upper: Vec<f64> = theta.iter().filter(|&&v| bin(v) >= split).map(|&v| center(bin(v))).collect();
        if lower.is_empty() || upper.is_empty() {
            continue;
        }
        let m0 = lower.iter().sum::<f64>() / lower.len() as f64;
        let m1 = upper.iter().sum::<f64>() / upper.len() as f64;
        let between = (lower.len() as f64 / n) * (upper.len() as f64 / n) * (m0 - m1).powi(2);
        // strictly greater keeps the first maximizer, up to rounding noise
        if between > best.0 * (1.0 + 1e-12) {
            best = (between, split);
        }
    }
    (0..theta.len()).filter(|&i| bin(theta[i]) >= best.1).collect()
}

pub fn matern_oracle(a: &[f64], b: &[f64], hyp: &GpHyperparams) -> f64 {
    let r = a
        .iter()
        .zip(b)
        .zip(&hyp.lengthscales)
        .map(|((x, y), l)| ((x - y) / l).powi(2))
        .sum::<f64>()
        .sqrt();
    let s5 = 5f64.sqrt();
    hyp.amplitude * (1.0 + s5 * r + 5.0 * r * r / 3.0) * (-s5 * r).exp()
}

/// Stratified Monte Carlo estimate of `E[max(f - f_plus, 0)]`,
/// `f ~ N(mu, sigma^2)`: one uniform draw inside each of `samples` equal
/// probability strata, mapped through the inverse normal CDF.
pub fn ei_monte_carlo(mu: f64, sigma: f64, f_plus: f64, samples: usize, seed: u64) -> f64 {
    use statrs::distribution::ContinuousCDF;
    let unit = statrs::distribution::Normal::new(0.0, 1.0).unwrap();
    let mut r = rng(seed);
    (0..samples)
        .map(|i| {
            let u = (i as f64 + r.gen::<f64>()) / samples as f64;
            (mu + sigma * unit.inverse_cdf(u) - f_plus).max(0.0)
        })
        .sum::<f64>()
        / samples as f64
}

/// Cox-de Boor recursion on the full open-uniform knot vector.
pub fn bspline_recursive(i: usize, m: usize, v: f64, knots: &[f64]) -> f64 {
    if m == 0 {
        let last = knots[knots.len() - 1];
        // the final nonempty span is closed at the right end
        let in_span = knots[i] <= v && (v < knots[i + 1] || (v == last && knots[i + 1] == last && knots[i] < last));
        return if in_span { 1.0 } else { 0.0 };
    }
    let mut out = 0.0;
    let d1 = knots[i + m] - knots[i];
    if d1 > 0.0 {
        out += (v - knots[i]) / d1 * bspline_recursive(i, m - 1, v, knots);
    }
    let d2 = knots[i + m + 1] - knots[i + 1];
    if d2 > 0.0 {
        out += (knots[i + m + 1] - v) / d2 * bspline_recursive(i + 1, m - 1, v, knots);
    }
    out
}

pub fn full_basis(v: f64, m: usize, k: usize) -> Vec<f64> {
    let segments = k - m;
    let knots: Vec<f64> = (0..k + m + 1)
        .map(|i| if i <= m { 0.0 } else if i >= k { 1.0 } else { (i - m) as f64 / segments as f64 })
        .collect();
    (0..k).map(|i| bspline_recursive(i, m, v, &knots)).collect()
}

/// `out(i) = bias + F(i) R + 1/|N(i)| sum_j sum_p B_p(u(i,j)) F(j) W_p`,
/// evaluated with the full tensor-product basis and explicit loops.
pub fn spline_conv_oracle(graph: &MeshGraph, f: &Array2<f64>, layer: &SplineConvLayer) -> Array2<f64> {
    let (m, o) = (layer.in_channels, layer.out_channels);
    let spec = layer.kernel;
    let mut out = Array2::zeros((graph.len(), o));
    for i in 0..graph.len() {
        for c in 0..o {
            let mut acc = layer.bias[c];
            for l in 0..m {
                acc += f[[i, l]] * layer.root[l * o + c];
            }
            let deg = graph.neighbors(i).len() as f64;
            for (&j, u) in graph.neighbors(i).iter().zip(graph.pseudo(i)) {
                let b: Vec<Vec<f64>> = (0..3).map(|d| full_basis(u[d], spec.degree, spec.size[d])).collect();
                for p2 in 0..spec.size[2] {
                    for p1 in 0..spec.size[1] {
                        for p0 in 0..spec.size[0] {
                            let w = b[0][p0] * b[1][p1] * b[2][p2];
                            let p = spec.flat_index([p0, p1, p2]);
                            for l in 0..m {
                                acc += w * f[[j, l]] * layer.weight[(p * m + l) * o + c] / deg;
                            }
                        }
                    }
                }
            }
            out[[i, c]] = acc;
        }
    }
    out
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < 1e-7 {
        // both vanish: compare absolutely
        (analytic - numeric).abs()
    } else {
        (analytic - numeric).abs() / scale
    }
}

/// First recorded frame at which each vertex exceeds `level`.
pub fn activation_frames(history: &Array2<f64>, level: f64) -> Vec<Option<usize>> {
    history
        .outer_iter()
        .map(|row| row.iter().position(|&u| u > level))
        .collect()
}

/// Dijkstra over Euclidean edge lengths (quadratic scan; tests only).
pub fn path_lengths(g: &MeshGraph, source: usize) -> Vec<f64> {
    let n = g.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    dist[source] = 0.0;
    for _ in 0..n {
        let u = (0..n).filter(|&i| !done[i]).min_by(|&a, &b| dist[a].total_cmp(&dist[b])).unwrap();
        done[u] = true;
        for &v in g.neighbors(u) {
            let d = dist[u] + g.positions()[u].distance(&g.positions()[v]);
            if d < dist[v] {
                dist[v] = d;
            }
        }
    }
    dist
}

pub fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        for k in i..=j {
            r[idx[k]] = (i + j) as f64 / 2.0;
        }
        i = j + 1;
    }
    r
}

pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}


/// Central finite-difference check of every trainable tensor of a
/// 10-vertex, depth-1 gVAE. Returns the worst relative error and where it
/// occurred.
pub fn gvae_gradient_error(readout: Readout, kl_weight: f64) -> (f64, String) {
    let h = hierarchy(&random_points(10, 3), 3, 1);
    let arch = Architecture {
        widths: vec![3],
        latent_dim: 2,
        kernel: KernelSpec { degree: 1, size: [3, 3, 3] },
        readout,
    };
    let mut model = GVaeModel::new(arch, &h, 7).unwrap();
    let mut r = rng(8);
    // nonzero biases so every path carries signal
    for t in model.params.tensors_mut() {
        if t.iter().all(|&v| v == 0.0) {
            t.iter_mut().for_each(|v| *v = r.gen_range(-0.3..0.3));
        }
    }
    let theta: Vec<f64> = (0..10).map(|_| r.gen_range(0.1..0.6)).collect();
    let eps = [0.7, -1.3];

    let mut grads = GVaeGrads::zeros(&model.params);
    model.accumulate_gradient(&theta, &eps, kl_weight, false, &mut grads).unwrap();
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();
    let names = model.params.tensor_names();

    let step = 1e-6;
    let mut worst = (0.0f64, String::new());
    for (t, name) in names.iter().enumerate() {
        for e in 0..analytic[t].len() {
            let original = model.params.tensors()[t][e];
            model.params.tensors_mut()[t][e] = original + step;
            let up = model.loss(&theta, &eps, kl_weight).unwrap().total;
            model.params.tensors_mut()[t][e] = original - step;
            let down = model.loss(&theta, &eps, kl_weight).unwrap().total;
            model.params.tensors_mut()[t][e] = original;
            let numeric = (up - down) / (2.0 * step);
            let err = relative_error(analytic[t][e], numeric);
            if err > worst.0 || worst.1.is_empty() {
                worst = (err, format!("{name}[{e}]: analytic {} vs numeric {numeric}", analytic[t][e]));
            }
        }
    }
    worst
}

/// Worst relative error of the GP log marginal likelihood gradient (with
/// respect to log length scales and log amplitude) over random problems.
pub fn gp_gradient_error() -> (f64, String) {
    let mut r = rng(9);
    let mut worst = (0.0f64, String::new());
    for trial in 0..6 {
        let dim = 1 + trial % 3;
        let n = 6 + 3 * trial;
        let inputs: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| r.gen_range(-3.0..3.0)).collect()).collect();
        let values: Vec<f64> = inputs.iter().map(|z| -z.iter().map(|v| v * v).sum::<f64>() + z[0].sin()).collect();
        let base = GpHyperparams {
            lengthscales: (0..dim).map(|_| r.gen_range(0.5..3.0)).collect(),
            amplitude: r.gen_range(0.5..5.0),
            noise: 1e-4,
        };
        let gp = GpSurrogate::new(inputs.clone(), values.clone(), base.clone()).unwrap();
        let analytic = gp.log_marginal_likelihood_gradient();

        let lml = |log: &[f64]| {
            let hyp = GpHyperparams {
                lengthscales: log[..dim].iter().map(|v| v.exp()).collect(),
                amplitude: log[dim].exp(),
                noise: base.noise,
            };
            GpSurrogate::new(inputs.clone(), values.clone(), hyp).unwrap().log_marginal_likelihood()
        };
        let x0: Vec<f64> = base.lengthscales.iter().map(|l| l.ln()).chain([base.amplitude.ln()]).collect();
        let step = 1e-5;
        for d in 0..=dim {
            let mut up = x0.clone();
            up[d] += step;
            let mut down = x0.clone();
            down[d] -= step;
            let numeric = (lml(&up) - lml(&down)) / (2.0 * step);
            let err = relative_error(analytic[d], numeric);
            if err > worst.0 || worst.1.is_empty() {
                worst = (err, format!("trial {trial} coordinate {d}: {} vs {numeric}", analytic[d]));
            }
        }
    }
    worst
}
