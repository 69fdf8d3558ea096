//! Runs the Aliev-Panfilov model on a shell with a scar of unexcitable
//! tissue and records synthetic body-surface measurements.
//!
//! ```text
//! cargo run --release --example simulate_activation
//! ```

use cardio::mesh::{build_knn_graph, ellipsoid_shell, ShellSpec};
use cardio::pipeline::spread_sites;
use cardio::sim::{measure, synth_lead_field, ApParams, ExcitabilityField, Simulator, StimulusProtocol};
use cardio::synth::grow_region;

fn main() -> cardio::Result<()> {
    let graph = build_knn_graph(&ellipsoid_shell(&ShellSpec::default())?, 6)?;
    let n = graph.len();
    let scar = grow_region(&graph, 150, 0.2, 7)?;
    let mut theta = vec![0.15; n];
    for &i in &scar.abnormal {
        theta[i] = 0.5;
    }
    let theta = ExcitabilityField::new(theta)?;

    let params = ApParams::default();
    let stimulus = StimulusProtocol::new(spread_sites(graph.positions(), 3), 0.0, 2.0, 1.0);
    let simulator = Simulator::new(&graph, params.clone(), stimulus)?;
    let history = simulator.run(&theta)?;
    let dt_frame = params.dt * params.record_stride as f64;

    let activation = |i: usize| history.row(i).iter().position(|&u| u > 0.5).map(|f| f as f64 * dt_frame);
    let (mut healthy, mut scarred) = ((0, 0), (0, 0));
    for i in 0..n {
        let slot = if scar.abnormal.binary_search(&i).is_ok() { &mut scarred } else { &mut healthy };
        slot.1 += 1;
        if activation(i).is_some() {
            slot.0 += 1;
        }
    }
    println!("{} frames of {n} vertices ({dt_frame} time units apart)", history.ncols());
    println!("activated: healthy {}/{}, scar {}/{}", healthy.0, healthy.1, scarred.0, scarred.1);
    let latest = (0..n).filter_map(activation).fold(0.0, f64::max);
    println!("last activation at t = {latest:.1}");

    let lead = synth_lead_field(&graph, 64, 3)?;
    let clean = measure(&lead, &history, dt_frame, None, 0)?;
    let noisy = measure(&lead, &history, dt_frame, Some(20.0), 0)?;
    let noise = (&noisy.frames - &clean.frames).iter().map(|v| v * v).sum::<f64>();
    let signal = clean.frames.iter().map(|v| v * v).sum::<f64>();
    println!(
        "{} channels x {} frames, realized SNR {:.1} dB",
        clean.frames.nrows(),
        clean.frames.ncols(),
        10.0 * (signal / noise).log10()
    );
    Ok(())
}
