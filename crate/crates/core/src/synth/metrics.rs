use crate::error::{Error, Result};

pub const OTSU_BINS: usize = 256;

struct Histogram {
    min: f64,
    width: f64,
    counts: [u64; OTSU_BINS],
}

impl Histogram {
    fn new(values: &[f64]) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("field contains non-finite values".into()));
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if values.len() < 2 || !(max > min) {
            return Err(Error::Degenerate("need at least two distinct values".into()));
        }
        let width = (max - min) / OTSU_BINS as f64;
        let mut h = Histogram {
            min,
            width,
            counts: [0; OTSU_BINS],
        };
        for &v in values {
            h.counts[h.bin(v)] += 1;
        }
        Ok(h)
    }

    fn bin(&self, v: f64) -> usize {
        (((v - self.min) / self.width).floor().max(0.0) as usize).min(OTSU_BINS - 1)
    }

    fn center(&self, b: usize) -> f64 {
        self.min + (b as f64 + 0.5) * self.width
    }

    /// First bin of the upper class maximizing between-class variance.
    fn best_split(&self) -> usize {
        let total: f64 = self.counts.iter().sum::<u64>() as f64;
        let total_mass: f64 = (0..OTSU_BINS).map(|b| self.counts[b] as f64 * self.center(b)).sum();
        let (mut w0, mut m0) = (0.0, 0.0);
        let mut best = (f64::NEG_INFINITY, 1);
        for k in 1..OTSU_BINS {
            w0 += self.counts[k - 1] as f64;
            m0 += self.counts[k - 1] as f64 * self.center(k - 1);
            let w1 = total - w0;
            if w0 == 0.0 || w1 == 0.0 {
                continue;
            }
            let diff = m0 / w0 - (total_mass - m0) / w1;
            let between = w0 * w1 * diff * diff / (total * total);
            if between > best.0 {
                best = (between, k);
            }
        }
        best.1
    }
}

/// Otsu threshold over a 256-bin histogram spanning `[min, max]`.
///
/// Returns the lower edge of the first upper-class bin; ties resolve to the
/// lowest threshold.
pub fn otsu_threshold(theta: &[f64]) -> Result<f64> {
    let h = Histogram::new(theta)?;
    Ok(h.min + h.best_split() as f64 * h.width)
}

/// Vertices falling in the upper Otsu class, ascending.
pub fn otsu_segment(theta: &[f64]) -> Result<Vec<usize>> {
    let h = Histogram::new(theta)?;
    let k = h.best_split();
    Ok((0..theta.len()).filter(|&i| h.bin(theta[i]) >= k).collect())
}

/// Dice overlap `2|a ∩ b| / (|a| + |b|)`; two empty sets score 1.
pub fn dice(a: &[usize], b: &[usize]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_unstable();
    a.dedup();
    b.sort_unstable();
    b.dedup();
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let (mut i, mut j, mut common) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                common += 1;
                i += 1;
                j += 1;
            }
        }
    }
    2.0 * common as f64 / (a.len() + b.len()) as f64
}

/// Sum of squared differences.
pub fn sse(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::mismatch(truth.len(), estimate.len()));
    }
    Ok(estimate
        .iter()
        .zip(truth)
        .map(|(e, t)| (e - t) * (e - t))
        .sum())
}
