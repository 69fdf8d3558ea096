//! Physical sanity of the reaction-diffusion simulator.

mod common;

use cardio::mesh::{build_knn_graph, MeshGraph, Point3};
use cardio::pipeline::spread_sites;
use cardio::sim::{graph_laplacian, simulate, ApParams, ExcitabilityField, SimState, StimulusProtocol, step};
use ndarray::Array2;

use common::oracle::{activation_frames, path_lengths, spearman};
use common::shell_graph;


fn fine_recording() -> ApParams {
    ApParams {
        record_stride: 1,
        t_end: 80.0,
        ..ApParams::default()
    }
}

#[test]
fn rest_state_is_exact_without_stimulus() {
    let g = shell_graph(300, 6);
    let theta = ExcitabilityField::constant(300, 0.15).unwrap();
    let stim = StimulusProtocol::new(vec![0], 0.0, 2.0, 0.0);
    let history = simulate(&g, &theta, &ApParams::default(), &stim).unwrap();
    assert!(history.iter().all(|&u| u == 0.0));

    let lap = graph_laplacian(&g, 0.02);
    let next = step(&SimState::rest(300), &theta, &ApParams::default(), &lap, &stim, 0.0).unwrap();
    assert!(next.u.iter().chain(&next.v).all(|&x| x == 0.0));
}

#[test]
fn activation_follows_distance_along_a_strand() {
    let pts: Vec<Point3> = (0..40).map(|i| Point3::new(0.1 * i as f64, 0.0, 0.0)).collect();
    let g = build_knn_graph(&pts, 2).unwrap();
    let theta = ExcitabilityField::constant(40, 0.15).unwrap();
    let stim = StimulusProtocol::new(vec![0], 0.0, 2.0, 1.0);
    let history = simulate(&g, &theta, &fine_recording(), &stim).unwrap();
    let act = activation_frames(&history, 0.5);
    let times: Vec<usize> = act.iter().map(|a| a.expect("every vertex activates")).collect();
    assert!(times.windows(2).all(|w| w[0] <= w[1]), "{times:?}");
    assert!(times[39] > times[0]);
}

#[test]
fn activation_time_grows_with_graph_distance_on_shell() {
    let g = shell_graph(300, 6);
    let theta = ExcitabilityField::constant(300, 0.15).unwrap();
    let stim = StimulusProtocol::new(vec![0], 0.0, 2.0, 1.0);
    let history = simulate(&g, &theta, &fine_recording(), &stim).unwrap();
    let act = activation_frames(&history, 0.5);
    let hops = g.hop_distances(0);
    let max_hop = *hops.iter().max().unwrap();
    let mut ring_means = Vec::new();
    for h in 0..=max_hop {
        let ring: Vec<f64> = (0..300)
            .filter(|&i| hops[i] == h)
            .map(|i| act[i].expect("homogeneous tissue activates everywhere") as f64)
            .collect();
        ring_means.push(ring.iter().sum::<f64>() / ring.len() as f64);
    }
    assert!(
        ring_means.windows(2).all(|w| w[0] <= w[1]),
        "mean activation frame per hop ring: {ring_means:?}"
    );
    // activation order tracks path length along edges
    let geodesic = path_lengths(&g, 0);
    let times: Vec<f64> = act.iter().map(|a| a.unwrap() as f64).collect();
    let rho = spearman(&geodesic, &times);
    assert!(rho > 0.95, "rank correlation {rho}");
}




#[test]
fn explicit_euler_converges_at_first_order() {
    let g = shell_graph(120, 6);
    let mut theta = vec![0.15; 120];
    for t in theta.iter_mut().skip(60).take(20) {
        *t = 0.5;
    }
    let theta = ExcitabilityField::new(theta).unwrap();
    let stim = StimulusProtocol::new(spread_sites(g.positions(), 2), 0.0, 2.0, 1.0);
    // dt halves while frames stay at integer times
    let run = |dt: f64, stride: usize| {
        let params = ApParams {
            dt,
            t_end: 20.0,
            record_stride: stride,
            ..ApParams::default()
        };
        simulate(&g, &theta, &params, &stim).unwrap()
    };
    let coarse = run(0.125, 8);
    let mid = run(0.0625, 16);
    let fine = run(0.03125, 32);
    let diff = |a: &Array2<f64>, b: &Array2<f64>| (a - b).iter().map(|v| v * v).sum::<f64>().sqrt();
    let e1 = diff(&coarse, &mid);
    let e2 = diff(&mid, &fine);
    let order = (e1 / e2).log2();
    assert!((0.8..1.3).contains(&order), "observed order {order} ({e1:e}, {e2:e})");
}

fn interior(g: &MeshGraph, region: &[usize]) -> Vec<usize> {
    region
        .iter()
        .copied()
        .filter(|&i| g.neighbors(i).iter().all(|j| region.contains(j)))
        .collect()
}

#[test]
fn unexcitable_region_never_activates() {
    let g = shell_graph(300, 6);
    // a ball of vertices around the vertex farthest from the stimulus
    let far = spread_sites(g.positions(), 2)[1];
    let hops = g.hop_distances(far);
    let region: Vec<usize> = (0..300).filter(|&i| hops[i] <= 3).collect();
    let mut theta = vec![0.15; 300];
    for &i in &region {
        theta[i] = 1.0;
    }
    let theta = ExcitabilityField::new(theta).unwrap();
    let stim = StimulusProtocol::new(vec![0], 0.0, 2.0, 1.0);
    let history = simulate(&g, &theta, &fine_recording(), &stim).unwrap();

    let core = interior(&g, &region);
    assert!(!core.is_empty());
    for &i in &core {
        let peak = history.row(i).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(peak < 0.5, "vertex {i} inside the theta = 1 region peaked at {peak}");
    }
    // the rest of the tissue did activate
    let healthy_active = (0..300)
        .filter(|i| !region.contains(i))
        .filter(|&i| history.row(i).iter().any(|&u| u > 0.5))
        .count();
    assert!(healthy_active > 250);
}

#[test]
fn simulation_is_deterministic() {
    let g = shell_graph(100, 6);
    let theta = ExcitabilityField::constant(100, 0.2).unwrap();
    let stim = StimulusProtocol::new(vec![3], 0.0, 2.0, 1.0);
    let a = simulate(&g, &theta, &ApParams::default(), &stim).unwrap();
    let b = simulate(&g, &theta, &ApParams::default(), &stim).unwrap();
    assert_eq!(a, b);
}
