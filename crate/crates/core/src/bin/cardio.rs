//! Command-line front end for the experiment pipeline.
//!
//! Exit codes: 0 success, 2 configuration error, 3 stale or missing
//! artifact, 4 numerical failure, 1 anything else. Logging is controlled by
//! `CARDIO_LOG` (e.g. `CARDIO_LOG=debug`).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cardio::pipeline::{ExperimentConfig, Pipeline};
use cardio::Error;

#[derive(Parser, Debug)]
#[command(name = "cardio", version, about = "Tissue-excitability estimation on 3D meshes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for independent estimation cases.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the k-NN graph and coarsening hierarchy.
    Geometry,
    /// Generate the synthetic excitability dataset.
    Gendata,
    /// Train the graph VAE.
    Train,
    /// Run latent-space Bayesian optimization for the estimation cases.
    Optimize {
        /// Only this case id (e.g. `heldout_03`, `self_consistency`).
        #[arg(long)]
        case: Option<String>,
    },
    /// Reconstruction metrics, PCA baseline and case summary.
    Evaluate,
    /// Fine-tune on a second geometry and compare with training from scratch.
    Transfer,
    /// Verify and print the evaluation report.
    Report,
}

fn run(cli: Cli) -> Result<(), Error> {
    let path = cli
        .config
        .ok_or_else(|| Error::Config("--config PATH is required".into()))?;
    let mut config = ExperimentConfig::load(&path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = cli.out {
        config.out_dir = out;
    }
    if cli.jobs == 0 {
        return Err(Error::Config("--jobs must be >= 1".into()));
    }
    let pipeline = Pipeline::new(config)?.with_jobs(cli.jobs);
    match cli.command {
        Command::Geometry => {
            let h = pipeline.geometry()?;
            println!("levels {:?}  checksum {}", h.sizes(), h.checksum());
        }
        Command::Gendata => {
            let d = pipeline.gendata()?;
            println!("{} fields of {} vertices", d.len(), d.field_len());
        }
        Command::Train => {
            let (_, history) = pipeline.train()?;
            println!(
                "{} epochs, validation loss {:?} -> {:?}",
                history.epochs.len(),
                history.initial_val_loss,
                history.final_val_loss()
            );
        }
        Command::Optimize { case } => {
            for c in pipeline.optimize(case.as_deref())? {
                println!("{:<18} best {:>12.5e}  dice {:.3}  sse {:.3}", c.id, c.best_value, c.dice, c.sse);
            }
        }
        Command::Evaluate => {
            let r = pipeline.evaluate()?;
            println!("{}", pipeline.layout.report().join("report.json").display());
            println!("checksum {}", r.checksum());
        }
        Command::Transfer => {
            let t = pipeline.transfer()?.report;
            println!(
                "fine-tuned {:?}  scratch {:?}",
                t.fine_tuned_final_val, t.scratch_final_val
            );
        }
        Command::Report => {
            let r = pipeline.report()?;
            let rec = &r.reconstruction;
            println!("gVAE q={}  test dice {:.3}  test sse {:.3}", r.latent_dim, rec.gvae_test.dice, rec.gvae_test.sse);
            print!("{}", r.pca_csv());
            print!("{}", r.cases_csv());
            if let Some(m) = r.median_case_dice {
                println!("median case dice {m:.3}");
            }
            println!("checksum {}", r.checksum());
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::StaleArtifact { .. } => 3,
        e if e.is_numerical() => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CARDIO_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
