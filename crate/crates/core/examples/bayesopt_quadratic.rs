//! Maximizes a shifted quadratic with GP / expected-improvement Bayesian
//! optimization and compares it with random search.
//!
//! ```text
//! cargo run --release --example bayesopt_quadratic
//! ```

use cardio::bayesopt::{bayes_opt, BoConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const Z_STAR: [f64; 2] = [1.2, -0.7];

fn objective(z: &[f64]) -> cardio::Result<f64> {
    Ok(-z.iter().zip(Z_STAR).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
}

fn main() -> cardio::Result<()> {
    let config = BoConfig { budget: 50, ..BoConfig::default() };
    let result = bayes_opt(objective, 2, &config)?;
    for record in result.history.iter().filter(|r| r.iteration % 5 == 0) {
        println!("eval {:>2}  best so far {:>10.3e}", record.iteration, record.best_so_far);
    }
    println!("best z {:.4?} (optimum {Z_STAR:?}), value {:.3e}", result.best_z, result.best_value);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let random_best = (0..config.budget)
        .map(|_| objective(&[rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)]).unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    println!("random search with the same budget: {random_best:.3e}");
    Ok(())
}
