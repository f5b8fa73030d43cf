use serde::Serialize;

use crate::error::{Error, Result};

use super::simulate::run_simulation_with_snapshots;
use super::spec::ExperimentSpec;

/// Fewest runs accepted for a normality check.
pub const MIN_RUNS: usize = 100;
/// `|skewness|` above this is flagged.
pub const SKEW_LIMIT: f64 = 0.5;
/// `|excess kurtosis|` above this is flagged.
pub const KURTOSIS_LIMIT: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalityStats {
    pub count: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub skewness_ok: bool,
    pub kurtosis_ok: bool,
}

impl NormalityStats {
    pub fn passes(&self) -> bool {
        self.skewness_ok && self.kurtosis_ok
    }
}

/// Sample moments and the two Gaussianity flags.
pub fn normality_stats(samples: &[f64]) -> Result<NormalityStats> {
    let n = samples.len();
    if n < 3 {
        return Err(Error::invalid("samples", format!("need at least 3 values, got {n}")));
    }
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in samples {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    let (skewness, excess_kurtosis) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    } else {
        (0.0, 0.0)
    };
    Ok(NormalityStats {
        count: n,
        mean,
        std_dev: m2.sqrt(),
        skewness,
        excess_kurtosis,
        skewness_ok: skewness.abs() <= SKEW_LIMIT,
        kurtosis_ok: excess_kurtosis.abs() <= KURTOSIS_LIMIT,
    })
}

/// Equal-width histogram over the sample range.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    /// `bins + 1` edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

pub fn histogram(samples: &[f64], bins: usize) -> Result<Histogram> {
    if bins == 0 || samples.is_empty() {
        return Err(Error::invalid("histogram", "need samples and at least one bin"));
    }
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|b| lo + width * b as f64).collect();
    let mut counts = vec![0; bins];
    for &x in samples {
        let b = (((x - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    Ok(Histogram { edges, counts })
}

impl Histogram {
    /// `bin_lo,bin_hi,count` rows under a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,count\n");
        for (b, c) in self.counts.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", self.edges[b], self.edges[b + 1], c));
        }
        out
    }
}

/// Statistics of `w̃_m(k)` across runs for one (algorithm, coefficient, frame).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Checkpoint {
    pub algorithm: String,
    /// Zero-based tap index.
    pub coefficient: usize,
    pub frame: usize,
    pub stats: NormalityStats,
    pub histogram: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianityReport {
    pub runs: usize,
    pub system: Vec<f64>,
    pub checkpoints: Vec<Checkpoint>,
}

impl GaussianityReport {
    pub fn all_pass(&self) -> bool {
        self.checkpoints.iter().all(|c| c.stats.passes())
    }
}

/// Collects weight errors across `spec.runs` runs at each frame in `frames`
/// for the zero-based `coefficients`, and tests them for Gaussianity.
pub fn gaussianity_check(
    spec: &ExperimentSpec,
    coefficients: &[usize],
    frames: &[usize],
    bins: usize,
) -> Result<GaussianityReport> {
    let runs = spec.effective_runs();
    if runs < MIN_RUNS {
        return Err(Error::invalid("runs", format!("need at least {MIN_RUNS} runs, got {runs}")));
    }
    let (result, snaps) = run_simulation_with_snapshots(spec, frames)?;
    let m = result.manifest.system.as_ref().map(Vec::len).or(spec.system.taps()).unwrap_or(0);
    if let Some(&c) = coefficients.iter().find(|&&c| c >= m) {
        return Err(Error::invalid("coefficient", format!("index {c} outside 0..{m}")));
    }
    let mut checkpoints = Vec::new();
    for (a, cfg) in spec.algorithms.iter().enumerate() {
        for &coefficient in coefficients {
            for (c, &frame) in frames.iter().enumerate() {
                let samples: Vec<f64> = snaps[c][a].iter().map(|e| e[coefficient]).collect();
                checkpoints.push(Checkpoint {
                    algorithm: cfg.name(),
                    coefficient,
                    frame,
                    stats: normality_stats(&samples)?,
                    histogram: histogram(&samples, bins)?,
                });
            }
        }
    }
    Ok(GaussianityReport {
        runs,
        system: result.manifest.system.unwrap_or_default(),
        checkpoints,
    })
}
