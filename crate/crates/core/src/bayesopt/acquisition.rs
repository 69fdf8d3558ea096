use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::gp::GpSurrogate;
use crate::error::{Error, Result};

/// Below this predictive standard deviation EI uses its `sigma -> 0` limit.
pub const SIGMA_FLOOR: f64 = 1e-12;
pub const CANDIDATES: usize = 1024;
pub const REFINED: usize = 8;
pub const MIN_STEP: f64 = 1e-4;

/// Axis-aligned search box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    /// `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        Bounds {
            lower: vec![lo; dim],
            upper: vec![hi; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.is_empty() || self.lower.len() != self.upper.len() {
            return Err(Error::InvalidInput("bounds need matching nonempty lower/upper".into()));
        }
        if self
            .lower
            .iter()
            .zip(&self.upper)
            .any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo < hi))
        {
            return Err(Error::InvalidInput(format!("degenerate or infinite bounds {self:?}")));
        }
        Ok(())
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        z.len() == self.dim()
            && z.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| (lo..=hi).contains(&v))
    }

    pub fn clamp(&self, z: &mut [f64]) {
        for (v, (lo, hi)) in z.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*lo, *hi);
        }
    }

    /// Maps a point of the unit cube into the box.
    pub fn scale(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(u, (lo, hi))| lo + u * (hi - lo))
            .collect()
    }
}

/// Expected improvement of the posterior at `z` over the incumbent `f_plus`
/// (maximization).
pub fn expected_improvement(gp: &GpSurrogate, z: &[f64], f_plus: f64) -> f64 {
    let (mu, sigma) = gp.predict(z);
    ei_from_moments(mu, sigma, f_plus)
}

/// EI for a Gaussian with mean `mu` and standard deviation `sigma`.
pub fn ei_from_moments(mu: f64, sigma: f64, f_plus: f64) -> f64 {
    let delta = mu - f_plus;
    if sigma <= SIGMA_FLOOR {
        return delta.max(0.0);
    }
    let unit = Normal::new(0.0, 1.0).expect("standard normal");
    let u = delta / sigma;
    (delta * unit.cdf(u) + sigma * unit.pdf(u)).max(0.0)
}

/// Halton sequence point `index` (1-based internally) in `dim` dimensions.
fn halton(index: usize, dim: usize) -> Vec<f64> {
    const PRIMES: [usize; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];
    assert!(dim <= PRIMES.len(), "Halton sampling supports up to 16 dimensions");
    PRIMES[..dim]
        .iter()
        .map(|&base| {
            let (mut f, mut r, mut i) = (1.0, 0.0, index + 1);
            while i > 0 {
                f /= base as f64;
                r += f * (i % base) as f64;
                i /= base;
            }
            r
        })
        .collect()
}

/// The quasi-random candidate set [`maximize_ei`] scores: a Halton sequence
/// with a seeded Cranley-Patterson shift, mapped into `bounds`.
pub fn candidate_points(bounds: &Bounds, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let dim = bounds.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
    (0..count)
        .map(|i| {
            let u: Vec<f64> = halton(i, dim)
                .iter()
                .zip(&shift)
                .map(|(h, s)| (h + s).fract())
                .collect();
            bounds.scale(&u)
        })
        .collect()
}

/// Coordinate pattern search from `start`: tries `±step` along each axis,
/// keeps strict improvements and halves the step when none is found.
fn pattern_search(f: &impl Fn(&[f64]) -> f64, start: Vec<f64>, value: f64, bounds: &Bounds) -> (Vec<f64>, f64) {
    let mut x = start;
    let mut fx = value;
    let mut step: Vec<f64> = bounds
        .lower
        .iter()
        .zip(&bounds.upper)
        .map(|(lo, hi)| 0.125 * (hi - lo))
        .collect();
    while step.iter().any(|&s| s >= MIN_STEP) {
        let mut improved = false;
        for d in 0..x.len() {
            for sign in [1.0, -1.0] {
                let mut cand = x.clone();
                cand[d] += sign * step[d];
                bounds.clamp(&mut cand);
                if cand == x {
                    continue;
                }
                let fc = f(&cand);
                if fc > fx {
                    x = cand;
                    fx = fc;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step.iter_mut().for_each(|s| *s *= 0.5);
        }
    }
    (x, fx)
}

/// Next query point: EI over [`CANDIDATES`] quasi-random points, the best
/// [`REFINED`] polished by pattern search, the best polished point returned.
pub fn maximize_ei(gp: &GpSurrogate, bounds: &Bounds, seed: u64) -> Result<Vec<f64>> {
    bounds.validate()?;
    if bounds.dim() != gp.dim() {
        return Err(Error::mismatch(gp.dim(), bounds.dim()));
    }
    let f_plus = gp.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ei = |z: &[f64]| expected_improvement(gp, z, f_plus);
    let candidates = candidate_points(bounds, CANDIDATES, seed);
    let mut scored: Vec<(usize, f64)> = candidates.iter().map(|z| ei(z)).enumerate().collect();
    // descending EI, lower index first among equals
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut best: Option<(Vec<f64>, f64)> = None;
    for &(i, value) in scored.iter().take(REFINED) {
        let (x, fx) = pattern_search(&ei, candidates[i].clone(), value, bounds);
        if best.as_ref().map_or(true, |(_, bf)| fx > *bf) {
            best = Some((x, fx));
        }
    }
    Ok(best.expect("at least one candidate").0)
}
