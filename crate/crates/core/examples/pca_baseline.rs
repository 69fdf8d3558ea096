//! Generates the region-grown excitability corpus and scores the PCA
//! reconstruction baseline across latent sizes.
//!
//! ```text
//! cargo run --release --example pca_baseline
//! ```

use cardio::mesh::{build_knn_graph, ellipsoid_shell, ShellSpec};
use cardio::synth::{dice, gen_dataset, otsu_segment, sse, DatasetSpec, PcaModel, Split};

fn main() -> cardio::Result<()> {
    let graph = build_knn_graph(&ellipsoid_shell(&ShellSpec::default())?, 6)?;
    let dataset = gen_dataset(&graph, &DatasetSpec::default())?;
    let sizes: Vec<usize> = dataset.labels.iter().map(|l| l.len()).collect();
    println!(
        "{} fields; abnormal region sizes {}..{}",
        dataset.len(),
        sizes.iter().min().unwrap(),
        sizes.iter().max().unwrap()
    );

    let pca = PcaModel::fit(&dataset.matrix(Split::Train))?;
    let val = dataset.indices(Split::Val);
    println!("{:>3}  {:>6}  {:>7}", "q", "dice", "sse");
    for q in [1, 2, 4, 8, 13, 20, 40] {
        let (mut d, mut s) = (0.0, 0.0);
        for &i in &val {
            let truth = dataset.fields[i].values();
            let rec = pca.reconstruct(truth, q)?;
            d += dice(&otsu_segment(&rec).unwrap_or_default(), &dataset.labels[i].abnormal);
            s += sse(&rec, truth)?;
        }
        let k = val.len() as f64;
        println!("{q:>3}  {:>6.3}  {:>7.3}", d / k, s / k);
    }
    Ok(())
}
