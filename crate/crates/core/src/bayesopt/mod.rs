//! Gaussian-process surrogate, expected improvement, and the Bayesian
//! optimization loop over a generative model's latent space.

mod acquisition;
mod gp;
mod optimize;

pub use acquisition::{
    candidate_points, ei_from_moments, expected_improvement, maximize_ei, Bounds, CANDIDATES, MIN_STEP,
    REFINED, SIGMA_FLOOR,
};
pub use gp::{
    gp_fit, gp_predict, matern52, GpHyperparams, GpSurrogate, AMPLITUDE_BOUNDS, LENGTHSCALE_BOUNDS,
    NOISE_FRACTION,
};
pub use optimize::{bayes_opt, latin_hypercube, BoConfig, BoRecord, BoResult, LatentObjective, SENTINEL};
