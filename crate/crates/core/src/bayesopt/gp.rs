use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SQRT5: f64 = 2.236_067_977_499_79;
const JITTER: f64 = 1e-8;
const MAX_JITTER: f64 = 1e-4;
const RESTARTS: usize = 5;
const MAX_ASCENT_STEPS: usize = 100;

/// Length-scale bounds (absolute, latent units).
pub const LENGTHSCALE_BOUNDS: (f64, f64) = (1e-2, 1e2);
/// Amplitude bounds, relative to the variance of the fitted values.
pub const AMPLITUDE_BOUNDS: (f64, f64) = (1e-4, 1e4);
/// Fixed observation noise, relative to the variance of the fitted values.
pub const NOISE_FRACTION: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpHyperparams {
    pub lengthscales: Vec<f64>,
    /// Signal variance.
    pub amplitude: f64,
    /// Observation noise variance.
    pub noise: f64,
}

impl GpHyperparams {
    pub fn isotropic(dim: usize, lengthscale: f64, amplitude: f64, noise: f64) -> Self {
        GpHyperparams {
            lengthscales: vec![lengthscale; dim],
            amplitude,
            noise,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if self.lengthscales.is_empty()
            || !self.lengthscales.iter().all(|&l| positive(l))
            || !positive(self.amplitude)
            || !positive(self.noise)
        {
            return Err(Error::InvalidInput(format!(
                "GP hyperparameters must be finite and positive: {self:?}"
            )));
        }
        Ok(())
    }

    /// `[log l_1, .., log l_q, log amplitude]`, the optimized coordinates.
    fn to_log(&self) -> Vec<f64> {
        self.lengthscales
            .iter()
            .map(|l| l.ln())
            .chain(std::iter::once(self.amplitude.ln()))
            .collect()
    }

    fn from_log(x: &[f64], noise: f64) -> Self {
        let (ls, amp) = x.split_at(x.len() - 1);
        GpHyperparams {
            lengthscales: ls.iter().map(|v| v.exp()).collect(),
            amplitude: amp[0].exp(),
            noise,
        }
    }
}

/// Anisotropic Matérn 5/2 covariance.
pub fn matern52(z1: &[f64], z2: &[f64], hyp: &GpHyperparams) -> f64 {
    debug_assert_eq!(z1.len(), z2.len());
    let r2: f64 = z1
        .iter()
        .zip(z2)
        .zip(&hyp.lengthscales)
        .map(|((a, b), l)| ((a - b) / l).powi(2))
        .sum();
    let r = r2.sqrt();
    hyp.amplitude * (1.0 + SQRT5 * r + 5.0 / 3.0 * r2) * (-SQRT5 * r).exp()
}

/// Gaussian-process posterior over an objective, values centered by their mean.
#[derive(Clone, Debug)]
pub struct GpSurrogate {
    inputs: Vec<Vec<f64>>,
    values: Vec<f64>,
    hyperparams: GpHyperparams,
    center: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    jitter: f64,
}

impl GpSurrogate {
    /// Conditions on the data with fixed hyperparameters (no fitting).
    pub fn new(inputs: Vec<Vec<f64>>, values: Vec<f64>, hyperparams: GpHyperparams) -> Result<Self> {
        check_data(&inputs, &values, 1)?;
        hyperparams.validate()?;
        if hyperparams.lengthscales.len() != inputs[0].len() {
            return Err(Error::mismatch(inputs[0].len(), hyperparams.lengthscales.len()));
        }
        let center = values.iter().sum::<f64>() / values.len() as f64;
        let y = DVector::from_iterator(values.len(), values.iter().map(|v| v - center));
        let (chol, jitter) = factorize(&inputs, &hyperparams)?;
        let alpha = chol.solve(&y);
        Ok(GpSurrogate {
            inputs,
            values,
            hyperparams,
            center,
            chol,
            alpha,
            jitter,
        })
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn hyperparams(&self) -> &GpHyperparams {
        &self.hyperparams
    }

    pub fn dim(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Diagonal jitter that made the kernel matrix factorizable.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    /// `log p(y | X, hyp)` of the centered values.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.len() as f64;
        let y = DVector::from_iterator(self.len(), self.values.iter().map(|v| v - self.center));
        let log_det = 2.0 * self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        -0.5 * y.dot(&self.alpha) - 0.5 * log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }

    /// Gradient of the log marginal likelihood with respect to
    /// `[log l_1, .., log l_q, log amplitude]` (noise held fixed).
    pub fn log_marginal_likelihood_gradient(&self) -> Vec<f64> {
        let n = self.len();
        let q = self.dim();
        let hyp = &self.hyperparams;
        let k_inv = self.chol.inverse();
        let mut grad = vec![0.0; q + 1];
        for i in 0..n {
            for j in 0..n {
                let w = self.alpha[i] * self.alpha[j] - k_inv[(i, j)];
                if i == j {
                    // dK_ii / d log amplitude = amplitude; lengthscales do not act on the diagonal
                    grad[q] += w * hyp.amplitude;
                    continue;
                }
                let (a, b) = (&self.inputs[i], &self.inputs[j]);
                let mut r2 = 0.0;
                for d in 0..q {
                    r2 += ((a[d] - b[d]) / hyp.lengthscales[d]).powi(2);
                }
                let r = r2.sqrt();
                let e = (-SQRT5 * r).exp();
                grad[q] += w * hyp.amplitude * (1.0 + SQRT5 * r + 5.0 / 3.0 * r2) * e;
                let radial = hyp.amplitude * 5.0 / 3.0 * (1.0 + SQRT5 * r) * e;
                for d in 0..q {
                    grad[d] += w * radial * ((a[d] - b[d]) / hyp.lengthscales[d]).powi(2);
                }
            }
        }
        grad.iter_mut().for_each(|g| *g *= 0.5);
        grad
    }

    /// Posterior mean and standard deviation of the latent function at `z`.
    pub fn predict(&self, z: &[f64]) -> (f64, f64) {
        let k = DVector::from_iterator(self.len(), self.inputs.iter().map(|x| matern52(x, z, &self.hyperparams)));
        let mu = self.center + k.dot(&self.alpha);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&k)
            .expect("Cholesky factor has a positive diagonal");
        let var = (self.hyperparams.amplitude - v.norm_squared()).max(0.0);
        (mu, var.sqrt())
    }
}

/// `(mu, sigma)` of the posterior at `z`.
pub fn gp_predict(gp: &GpSurrogate, z: &[f64]) -> (f64, f64) {
    gp.predict(z)
}

fn check_data(inputs: &[Vec<f64>], values: &[f64], min_points: usize) -> Result<()> {
    if inputs.len() != values.len() {
        return Err(Error::mismatch(inputs.len(), values.len()));
    }
    if inputs.len() < min_points {
        return Err(Error::InvalidInput(format!(
            "GP needs at least {min_points} points, got {}",
            inputs.len()
        )));
    }
    let q = inputs[0].len();
    if q == 0 || inputs.iter().any(|x| x.len() != q) {
        return Err(Error::InvalidInput("GP inputs must share a nonzero dimension".into()));
    }
    if inputs.iter().flatten().chain(values).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("GP data must be finite".into()));
    }
    for i in 0..inputs.len() {
        for j in 0..i {
            if inputs[i] == inputs[j] {
                return Err(Error::InvalidInput(format!("duplicate GP inputs at {j} and {i}")));
            }
        }
    }
    Ok(())
}

fn factorize(inputs: &[Vec<f64>], hyp: &GpHyperparams) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = inputs.len();
    let mut k = DMatrix::from_fn(n, n, |i, j| matern52(&inputs[i], &inputs[j], hyp));
    let mut added = 0.0;
    let mut jitter = JITTER;
    loop {
        for i in 0..n {
            k[(i, i)] += hyp.noise + jitter - added;
        }
        added = hyp.noise + jitter;
        if let Some(chol) = Cholesky::new(k.clone()) {
            return Ok((chol, jitter));
        }
        if jitter >= MAX_JITTER {
            return Err(Error::Factorization(format!(
                "GP kernel matrix not positive definite with jitter {jitter:e}"
            )));
        }
        jitter *= 10.0;
    }
}

/// Fits hyperparameters by maximizing the log marginal likelihood over log
/// length-scales and log amplitude: projected gradient ascent with
/// backtracking from `init` plus four seeded log-uniform restarts.
///
/// The noise variance is not optimized; it is fixed at a small fraction of
/// the data variance, and the amplitude is bounded relative to that variance.
pub fn gp_fit(inputs: Vec<Vec<f64>>, values: Vec<f64>, init: &GpHyperparams) -> Result<GpSurrogate> {
    check_data(&inputs, &values, 2)?;
    let q = inputs[0].len();
    if init.lengthscales.len() != q {
        return Err(Error::mismatch(q, init.lengthscales.len()));
    }
    let scale = data_variance(&values);
    let noise = NOISE_FRACTION * scale;
    let lower: Vec<f64> = std::iter::repeat(LENGTHSCALE_BOUNDS.0.ln())
        .take(q)
        .chain(std::iter::once((AMPLITUDE_BOUNDS.0 * scale).ln()))
        .collect();
    let upper: Vec<f64> = std::iter::repeat(LENGTHSCALE_BOUNDS.1.ln())
        .take(q)
        .chain(std::iter::once((AMPLITUDE_BOUNDS.1 * scale).ln()))
        .collect();
    let project = |x: &mut [f64]| {
        for ((v, lo), hi) in x.iter_mut().zip(&lower).zip(&upper) {
            *v = v.clamp(*lo, *hi);
        }
    };

    let mut starts = Vec::with_capacity(RESTARTS);
    let mut first = init.to_log();
    if first.iter().any(|v| !v.is_finite()) {
        first = vec![0.0; q + 1];
        first[q] = scale.ln();
    }
    project(&mut first);
    starts.push(first);
    let mut rng = ChaCha8Rng::seed_from_u64(0x6d61_7465_726e);
    for _ in 1..RESTARTS {
        starts.push(lower.iter().zip(&upper).map(|(lo, hi)| rng.gen_range(*lo..*hi)).collect());
    }

    let evaluate = |x: &[f64]| -> Option<GpSurrogate> {
        GpSurrogate::new(inputs.clone(), values.clone(), GpHyperparams::from_log(x, noise)).ok()
    };

    let mut best: Option<(f64, GpSurrogate)> = None;
    for start in starts {
        let Some(mut gp) = evaluate(&start) else { continue };
        let mut x = start;
        let mut f = gp.log_marginal_likelihood();
        let mut step = 0.5;
        for _ in 0..MAX_ASCENT_STEPS {
            let g = gp.log_marginal_likelihood_gradient();
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm > 1e-10) {
                break;
            }
            let mut accepted = None;
            while step > 1e-8 {
                let mut cand: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi + step * gi / norm).collect();
                project(&mut cand);
                if cand == x {
                    break;
                }
                if let Some(next) = evaluate(&cand) {
                    let fc = next.log_marginal_likelihood();
                    if fc > f {
                        accepted = Some((cand, next, fc));
                        break;
                    }
                }
                step *= 0.5;
            }
            let Some((cand, next, fc)) = accepted else { break };
            let gain = fc - f;
            x = cand;
            gp = next;
            f = fc;
            step = (step * 2.0).min(2.0);
            if gain < 1e-9 * (1.0 + f.abs()) {
                break;
            }
        }
        // strict improvement keeps the lowest restart index on ties
        if best.as_ref().map_or(true, |(bf, _)| f > *bf) {
            best = Some((f, gp));
        }
    }
    best.map(|(_, gp)| gp).ok_or_else(|| {
        Error::Factorization("GP kernel matrix not factorizable at any restart".into())
    })
}

/// Population variance, falling back to 1 for constant data.
fn data_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var > 0.0 && var.is_finite() {
        var
    } else {
        1.0
    }
}
