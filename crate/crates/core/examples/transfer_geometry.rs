//! Transfers a trained gVAE to a differently shaped shell: the encoder
//! convolutions are frozen and the rest is fine-tuned, against a model
//! trained from scratch on the same small corpus.
//!
//! ```text
//! cargo run --release --example transfer_geometry
//! ```

use cardio::gvae::{fine_tune, train, Architecture, GVaeModel, TrainConfig};
use cardio::mesh::{build_hierarchy, build_knn_graph, ellipsoid_shell, CoarseningHierarchy, ShellSpec};
use cardio::pipeline::encoder_checksum;
use cardio::synth::{gen_dataset, DatasetSpec};

fn shell_hierarchy(spec: &ShellSpec) -> cardio::Result<CoarseningHierarchy> {
    build_hierarchy(build_knn_graph(&ellipsoid_shell(spec)?, 6)?, 3)
}

fn main() -> cardio::Result<()> {
    let arch = Architecture {
        widths: vec![4, 8, 16],
        ..Architecture::default()
    };
    let config = TrainConfig {
        epochs: 15,
        kl_weight: 0.01,
        ..TrainConfig::default()
    };

    let source_h = shell_hierarchy(&ShellSpec::default())?;
    let source_data = gen_dataset(source_h.finest(), &DatasetSpec { count: 800, ..DatasetSpec::default() })?;
    let mut source = GVaeModel::new(arch.clone(), &source_h, 0)?;
    train(&mut source, &source_data, &config)?;

    let target_spec = ShellSpec {
        vertices: 260,
        axes: [1.1, 0.9, 1.4],
        seed: 1,
        ..ShellSpec::default()
    };
    let target_h = shell_hierarchy(&target_spec)?;
    let target_data = gen_dataset(target_h.finest(), &DatasetSpec { count: 200, seed: 1, ..DatasetSpec::default() })?;

    let frozen = encoder_checksum(&source);
    let (tuned, tuned_history) = fine_tune(&source, &target_h, &target_data, &config)?;
    let mut scratch = GVaeModel::new(arch, &target_h, 1)?;
    let scratch_history = train(&mut scratch, &target_data, &config)?;

    println!("epoch  fine-tuned  scratch");
    for (a, b) in tuned_history.epochs.iter().zip(&scratch_history.epochs).step_by(3) {
        let (ft, sc) = (a.val_loss.unwrap_or(f64::NAN), b.val_loss.unwrap_or(f64::NAN));
        println!("{:>5}  {ft:>10.3}  {sc:>7.3}", a.epoch);
    }
    println!("frozen encoder unchanged: {}", encoder_checksum(&tuned) == frozen);
    Ok(())
}
