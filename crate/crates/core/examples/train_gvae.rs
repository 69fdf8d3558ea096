//! Trains the graph-convolutional VAE on a small corpus and reports
//! reconstruction quality on the validation split.
//!
//! ```text
//! cargo run --release --example train_gvae [EPOCHS]
//! ```

use cardio::gvae::{train, Architecture, GVaeModel, TrainConfig};
use cardio::mesh::{build_hierarchy, build_knn_graph, ellipsoid_shell, ShellSpec};
use cardio::synth::{dice, gen_dataset, otsu_segment, DatasetSpec, Split};

fn main() -> cardio::Result<()> {
    let epochs = std::env::args().nth(1).map_or(20, |a| a.parse().expect("EPOCHS is a number"));
    let graph = build_knn_graph(&ellipsoid_shell(&ShellSpec::default())?, 6)?;
    let hierarchy = build_hierarchy(graph, 3)?;
    let dataset = gen_dataset(hierarchy.finest(), &DatasetSpec { count: 600, ..DatasetSpec::default() })?;

    let arch = Architecture {
        widths: vec![4, 8, 16],
        latent_dim: 2,
        ..Architecture::default()
    };
    let mut model = GVaeModel::new(arch, &hierarchy, 0)?;
    println!("{} trainable parameters", model.parameter_count());

    let config = TrainConfig {
        epochs,
        kl_weight: 0.01,
        ..TrainConfig::default()
    };
    let history = train(&mut model, &dataset, &config)?;
    for record in history.epochs.iter().step_by((epochs / 10).max(1)) {
        let val = record.val_loss.unwrap_or(f64::NAN);
        println!("epoch {:>3}  train {:.3}  val {val:.3}", record.epoch, record.train_loss);
    }

    let val = dataset.indices(Split::Val);
    let mean_dice = val
        .iter()
        .map(|&i| {
            let rec = model.reconstruct(dataset.fields[i].values())?;
            Ok(dice(&otsu_segment(&rec).unwrap_or_default(), &dataset.labels[i].abnormal))
        })
        .sum::<cardio::Result<f64>>()?
        / val.len() as f64;
    println!("validation reconstruction Dice {mean_dice:.3}");

    let z = model.encode(dataset.fields[val[0]].values())?;
    println!("first validation field encodes to mu {:.3?}", z.mu);
    Ok(())
}
