//! Log-domain weight normalization and low-variance resampling.

use super::Particle;
use crate::geom::RngStream;

/// `log Σ exp(x_i)` with the maximum factored out.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Shifts log weights so that `Σ exp(w) = 1`.
pub fn normalize_log_weights(particles: &mut [Particle]) {
    let lw: Vec<f64> = particles.iter().map(|p| p.log_weight).collect();
    let lse = log_sum_exp(&lw);
    if lse.is_finite() {
        for p in particles.iter_mut() {
            p.log_weight -= lse;
        }
    } else {
        // every hypothesis was ruled out; restart from uniform weights
        let uniform = -(particles.len() as f64).ln();
        for p in particles.iter_mut() {
            p.log_weight = uniform;
        }
    }
}

/// `1 / Σ w²` for normalized weights.
pub fn effective_sample_size(particles: &[Particle]) -> f64 {
    1.0 / particles.iter().map(|p| (2.0 * p.log_weight).exp()).sum::<f64>()
}

/// Source index for each of `n = weights.len()` output slots, given the
/// single uniform offset `u` in `[0, 1)`.
pub fn systematic_indices(weights: &[f64], u: f64) -> Vec<usize> {
    let n = weights.len();
    let total: f64 = weights.iter().sum();
    let mut out = Vec::with_capacity(n);
    let mut cumulative = weights.first().copied().unwrap_or(0.0) / total;
    let mut i = 0;
    for k in 0..n {
        let position = (k as f64 + u) / n as f64;
        while position >= cumulative && i + 1 < n {
            i += 1;
            cumulative += weights[i] / total;
        }
        out.push(i);
    }
    out
}

/// Systematic resampling. Every output particle gets weight `1/N` and a
/// deep copy of its source map.
pub fn resample_systematic(particles: &[Particle], rng: &mut RngStream) -> Vec<Particle> {
    let n = particles.len();
    let weights: Vec<f64> = particles.iter().map(|p| p.log_weight.exp()).collect();
    let uniform = -(n as f64).ln();
    systematic_indices(&weights, rng.uniform())
        .into_iter()
        .map(|i| Particle {
            log_weight: uniform,
            ..particles[i].clone()
        })
        .collect()
}
