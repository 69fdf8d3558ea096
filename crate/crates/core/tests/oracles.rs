//! Each fast operation checked against a slow, obviously-correct oracle.

mod common;

use cardio::bayesopt::{ei_from_moments, expected_improvement, GpHyperparams, GpSurrogate};
use cardio::gvae::{basis_1d, bspline_basis, spline_conv, KernelSpec, SplineConvLayer};
use cardio::mesh::{build_knn_graph, coarsen, pool, unpool};
use cardio::synth::{otsu_segment, otsu_threshold, PcaModel};
use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use common::oracle::{brute_force_knn, ei_monte_carlo, exhaustive_otsu, full_basis, matern_oracle, spline_conv_oracle};
use common::{random_points, rng, shell};

// ---------------------------------------------------------------- k-NN


#[test]
fn knn_graph_matches_brute_force() {
    for (n, k, seed) in [(50, 3, 1), (120, 6, 2), (300, 6, 3), (40, 39, 4)] {
        let pts = random_points(n, seed);
        let g = build_knn_graph(&pts, k).unwrap();
        let oracle = brute_force_knn(&pts, k);
        for i in 0..n {
            assert_eq!(g.neighbors(i), oracle[i].as_slice(), "vertex {i} (n={n}, k={k})");
        }
    }
}

#[test]
fn knn_graph_on_shell_matches_brute_force() {
    let pts = shell(300, 0);
    let g = build_knn_graph(&pts, 6).unwrap();
    let oracle = brute_force_knn(&pts, 6);
    for i in 0..pts.len() {
        assert_eq!(g.neighbors(i), oracle[i].as_slice());
    }
}

#[test]
fn pseudo_coordinates_match_definition() {
    let pts = random_points(60, 9);
    let g = build_knn_graph(&pts, 5).unwrap();
    let mut scale = 0.0f64;
    for (i, j) in g.edges() {
        for d in pts[i].offset_to(&pts[j]) {
            scale = scale.max(d.abs());
        }
    }
    for (i, j) in g.edges() {
        let u = g.edge_pseudo(i, j).unwrap();
        let d = pts[i].offset_to(&pts[j]);
        for c in 0..3 {
            assert!((u[c] - (d[c] / (2.0 * scale) + 0.5)).abs() < 1e-15);
        }
    }
}

// ---------------------------------------------------------------- Otsu


#[test]
fn otsu_matches_exhaustive_search() {
    let mut r = rng(5);
    for trial in 0..40 {
        let n = r.gen_range(20..400);
        let theta: Vec<f64> = match trial % 3 {
            // two noisy modes
            0 => (0..n)
                .map(|_| if r.gen_bool(0.3) { 0.5 + 0.05 * r.gen::<f64>() } else { 0.15 + 0.05 * r.gen::<f64>() })
                .collect(),
            1 => (0..n).map(|_| r.gen()).collect(),
            _ => (0..n).map(|_| r.gen::<f64>().powi(3)).collect(),
        };
        let fast = otsu_segment(&theta).unwrap();
        assert_eq!(fast, exhaustive_otsu(&theta), "trial {trial}");
        let t = otsu_threshold(&theta).unwrap();
        for (i, &v) in theta.iter().enumerate() {
            // the threshold separates the classes (up to the bin-edge rounding)
            if fast.binary_search(&i).is_ok() {
                assert!(v >= t - 1e-12);
            } else {
                assert!(v < t + 1e-12);
            }
        }
    }
}

#[test]
fn otsu_recovers_two_level_field() {
    let mut theta = vec![0.15; 100];
    for i in (10..40).step_by(3) {
        theta[i] = 0.5;
    }
    let expected: Vec<usize> = (10..40).step_by(3).collect();
    assert_eq!(otsu_segment(&theta).unwrap(), expected);
}

// ---------------------------------------------------------------- pooling

#[test]
fn pooling_matches_per_cluster_loop() {
    let graph = build_knn_graph(&random_points(80, 11), 5).unwrap();
    let (_, p) = coarsen(&graph).unwrap();
    let mut r = rng(12);
    let f = Array2::from_shape_fn((80, 3), |_| r.gen::<f64>());
    let pooled = pool(&p, &f).unwrap();
    for c in 0..p.coarse_len() {
        let members: Vec<usize> = (0..80).filter(|&i| p.cluster_of(i) == c).collect();
        assert!(!members.is_empty());
        for ch in 0..3 {
            let mean = members.iter().map(|&i| f[[i, ch]]).sum::<f64>() / members.len() as f64;
            assert!((pooled[[c, ch]] - mean).abs() < 1e-14);
        }
    }
    let back = unpool(&p, &pooled).unwrap();
    for i in 0..80 {
        for ch in 0..3 {
            assert_eq!(back[[i, ch]], pooled[[p.cluster_of(i), ch]]);
        }
    }
}

// ---------------------------------------------------------------- GP


#[test]
fn gp_posterior_matches_dense_direct_solve() {
    let mut r = rng(21);
    for trial in 0..10 {
        let dim = 1 + trial % 3;
        let n = 5 + 4 * trial;
        let inputs: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| r.gen_range(-3.0..3.0)).collect()).collect();
        let values: Vec<f64> = inputs.iter().map(|z| z.iter().map(|v| v.sin()).sum::<f64>() + 2.0).collect();
        let hyp = GpHyperparams {
            lengthscales: (0..dim).map(|_| r.gen_range(0.5..2.0)).collect(),
            amplitude: r.gen_range(0.5..2.0),
            noise: 1e-6,
        };
        let gp = GpSurrogate::new(inputs.clone(), values.clone(), hyp.clone()).unwrap();

        let mean = values.iter().sum::<f64>() / n as f64;
        let k = DMatrix::from_fn(n, n, |i, j| {
            matern_oracle(&inputs[i], &inputs[j], &hyp) + if i == j { hyp.noise + gp.jitter() } else { 0.0 }
        });
        let lu = k.lu();
        let y = DVector::from_iterator(n, values.iter().map(|v| v - mean));
        let alpha = lu.solve(&y).unwrap();
        for _ in 0..20 {
            let z: Vec<f64> = (0..dim).map(|_| r.gen_range(-3.0..3.0)).collect();
            let ks = DVector::from_iterator(n, inputs.iter().map(|x| matern_oracle(x, &z, &hyp)));
            let mu = mean + ks.dot(&alpha);
            let var = hyp.amplitude - ks.dot(&lu.solve(&ks).unwrap());
            let (m, s) = gp.predict(&z);
            assert!((m - mu).abs() <= 1e-10, "mean {m} vs {mu}");
            assert!((s * s - var.max(0.0)).abs() <= 1e-10, "variance {} vs {var}", s * s);
        }
    }
}

// ---------------------------------------------------------------- EI


#[test]
fn expected_improvement_matches_monte_carlo() {
    for (k, &(mu, sigma, f_plus)) in [(0.0, 1.0, 0.0), (0.3, 0.5, 1.0), (-1.0, 2.0, -0.5), (2.0, 0.1, 1.9), (0.0, 1e-3, 0.5)]
        .iter()
        .enumerate()
    {
        let mc = ei_monte_carlo(mu, sigma, f_plus, 1_000_000, 31 + k as u64);
        let ei = ei_from_moments(mu, sigma, f_plus);
        assert!((ei - mc).abs() <= 1e-3, "EI {ei} vs Monte Carlo {mc} at ({mu}, {sigma}, {f_plus})");
    }
}

#[test]
fn plain_monte_carlo_agrees_within_its_standard_error() {
    let (mu, sigma, f_plus): (f64, f64, f64) = (0.3, 0.8, 0.5);
    let normal = Normal::new(mu, sigma).unwrap();
    let mut r = rng(33);
    let draws: Vec<f64> = (0..1_000_000).map(|_| (normal.sample(&mut r) - f_plus).max(0.0)).collect();
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
    let se = (var / draws.len() as f64).sqrt();
    assert!((ei_from_moments(mu, sigma, f_plus) - mean).abs() <= 4.0 * se);
}

#[test]
fn expected_improvement_of_gp_matches_monte_carlo() {
    let inputs = vec![vec![-1.0], vec![0.0], vec![1.5]];
    let gp = GpSurrogate::new(inputs, vec![0.2, 1.0, 0.4], GpHyperparams::isotropic(1, 1.0, 1.0, 1e-6)).unwrap();
    let z = [0.7];
    let (mu, sigma) = gp.predict(&z);
    let mc = ei_monte_carlo(mu, sigma, 1.0, 1_000_000, 34);
    assert!((expected_improvement(&gp, &z, 1.0) - mc).abs() <= 1e-3);
}

// ---------------------------------------------------------------- B-splines



#[test]
fn basis_matches_recursive_definition() {
    let mut r = rng(41);
    for (m, k) in [(1, 5), (2, 5), (3, 7), (1, 2), (2, 3)] {
        let mut vs: Vec<f64> = (0..50).map(|_| r.gen()).collect();
        vs.extend([0.0, 1.0, 0.5, 0.25]);
        for v in vs {
            let (first, vals) = basis_1d(v, m, k).unwrap();
            let mut fast = vec![0.0; k];
            for (a, b) in vals.iter().enumerate() {
                fast[first + a] = *b;
            }
            let oracle = full_basis(v, m, k);
            for (a, b) in fast.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-13, "m={m} k={k} v={v}: {fast:?} vs {oracle:?}");
            }
        }
    }
}

// ---------------------------------------------------------------- spline conv


#[test]
fn spline_conv_matches_nested_loops() {
    let mut r = rng(51);
    for (kernel, m, o) in [
        (KernelSpec::default(), 2, 3),
        (KernelSpec { degree: 2, size: [4, 3, 5] }, 1, 2),
        (KernelSpec { degree: 1, size: [2, 2, 2] }, 3, 1),
    ] {
        let graph = build_knn_graph(&random_points(40, 52), 5).unwrap();
        let mut layer = SplineConvLayer::init(m, o, kernel, &mut r);
        layer.bias.iter_mut().for_each(|b| *b = r.gen_range(-1.0..1.0));
        let f = Array2::from_shape_fn((40, m), |_| r.gen_range(-1.0..1.0));
        let fast = spline_conv(&graph, &f, &layer).unwrap();
        let slow = spline_conv_oracle(&graph, &f, &layer);
        for (a, b) in fast.iter().zip(slow.iter()) {
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn tensor_basis_is_partition_of_unity() {
    let mut r = rng(61);
    let spec = KernelSpec { degree: 2, size: [5, 4, 6] };
    for _ in 0..100 {
        let v = [r.gen(), r.gen(), r.gen()];
        let b = bspline_basis(v, &spec).unwrap();
        assert_eq!(b.len(), spec.active());
        assert!((b.iter().map(|x| x.1).sum::<f64>() - 1.0).abs() < 1e-13);
    }
}

// ---------------------------------------------------------------- PCA

#[test]
fn pca_matches_covariance_eigendecomposition() {
    let mut r = rng(71);
    let (samples, n) = (60, 12);
    // low-rank structure plus noise so the spectrum is well separated
    let basis: Vec<Vec<f64>> = (0..3).map(|_| (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
    let data = Array2::from_shape_fn((samples, n), |_| 0.0);
    let mut data = data;
    for s in 0..samples {
        let w: Vec<f64> = (0..3).map(|k| r.gen_range(-1.0..1.0) * (3 - k) as f64).collect();
        for c in 0..n {
            data[[s, c]] = (0..3).map(|k| w[k] * basis[k][c]).sum::<f64>() + 0.01 * r.gen_range(-1.0..1.0);
        }
    }
    let pca = PcaModel::fit(&data).unwrap();

    let mean: Vec<f64> = (0..n).map(|c| data.column(c).sum() / samples as f64).collect();
    let cov = DMatrix::from_fn(n, n, |a, b| {
        (0..samples).map(|s| (data[[s, a]] - mean[a]) * (data[[s, b]] - mean[b])).sum::<f64>()
    });
    let eig = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());

    for q in [1, 2, 3, 5] {
        let vq = DMatrix::from_fn(n, q, |r_, c| eig.eigenvectors[(r_, order[c])]);
        for s in [0, 17, 42] {
            let x: Vec<f64> = data.row(s).to_vec();
            let centered = DVector::from_iterator(n, x.iter().zip(&mean).map(|(a, b)| a - b));
            let proj = &vq * (vq.transpose() * &centered);
            let fast = pca.reconstruct(&x, q).unwrap();
            for c in 0..n {
                assert!((fast[c] - (mean[c] + proj[c])).abs() < 1e-9, "q={q}");
            }
        }
        assert!((pca.singular_values()[q - 1].powi(2) - eig.eigenvalues[order[q - 1]]).abs() < 1e-8);
    }
}
