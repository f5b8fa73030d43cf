//! Adaptive intensity parameter `β(k)`.

use super::{penalty_value, Penalty};

/// Tracks the reference estimate `ŵ` and produces `β(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaAdapter {
    reference: Vec<f64>,
    period: u64,
    zeta: f64,
    delta_min: f64,
    penalty: Penalty,
    current: f64,
}

impl BetaAdapter {
    /// `zeta` is 1 for projected variants and `1 - μN/M` for quasi variants;
    /// the refresh period is `⌊M/N⌋` frames (at least one).
    pub fn new(filter_len: usize, subbands: usize, zeta: f64, delta_min: f64, penalty: Penalty) -> Self {
        Self {
            reference: vec![0.0; filter_len],
            period: (filter_len / subbands).max(1) as u64,
            zeta,
            delta_min,
            penalty,
            current: 0.0,
        }
    }

    pub fn reference(&self) -> &[f64] {
        &self.reference
    }

    pub fn period(&self) -> u64 {
        self.period
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    /// The most recent `β(k)` (0 before the first call).
    pub fn current_beta(&self) -> f64 {
        self.current
    }

    /// `β(k) = ζ max{F(w) - F(ŵ), δ_min} / ||f||²`, or 0 when `f(w) = 0`.
    pub fn adapt_beta(&mut self, weights: &[f64], gradient: &[f64]) -> f64 {
        let energy: f64 = gradient.iter().map(|g| g * g).sum();
        self.current = if energy == 0.0 {
            0.0
        } else {
            let gap = penalty_value(weights, self.penalty) - penalty_value(&self.reference, self.penalty);
            self.zeta * gap.max(self.delta_min) / energy
        };
        self.current
    }

    /// `ŵ ← w(k)` every `period` frames, `ŵ ← (ŵ + w(k))/2` otherwise.
    pub fn refresh_reference(&mut self, weights: &[f64], frame: u64) {
        if frame % self.period == 0 {
            self.reference.copy_from_slice(weights);
        } else {
            for (r, w) in self.reference.iter_mut().zip(weights) {
                *r = 0.5 * *r + 0.5 * w;
            }
        }
    }

    #[cfg(test)]
    pub(crate) fn set_reference(&mut self, r: &[f64]) {
        self.reference.copy_from_slice(r);
    }
}
