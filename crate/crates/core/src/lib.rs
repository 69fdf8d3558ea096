pub mod bayesopt;
pub mod error;
pub mod gvae;
pub mod io;
pub mod mesh;
pub mod pipeline;
pub mod sim;
pub mod synth;

pub use error::{Error, Result};
