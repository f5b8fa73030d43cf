//! Sparse target systems, input sources and SNR-calibrated measurement noise.

use std::io::Read;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filterbank::DelayLine;
use crate::rng::{stream_rng, Substream};

/// Unknown system `w°` with its zero / nonzero index partition (0-based).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSystem {
    weights: Vec<f64>,
    nonzero: Vec<usize>,
    zero: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct SystemFile {
    #[serde(rename = "M")]
    len: usize,
    weights: Vec<f64>,
}

impl SparseSystem {
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("weights", "empty system"));
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite()) {
            return Err(Error::invalid("weights", format!("non-finite coefficient at {i}")));
        }
        let (nonzero, zero) = (0..weights.len()).partition(|&m| weights[m] != 0.0);
        Ok(Self { weights, nonzero, zero })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn nonzero_indices(&self) -> &[usize] {
        &self.nonzero
    }

    pub fn zero_indices(&self) -> &[usize] {
        &self.zero
    }

    /// `Q = |NZ|`.
    pub fn sparsity(&self) -> usize {
        self.nonzero.len()
    }

    pub fn norm_sq(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum()
    }

    /// `||w° - w||²`.
    pub fn deviation(&self, w: &[f64]) -> f64 {
        self.weights.iter().zip(w).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    /// Noise-free output `w°ᵀ u` for a newest-first regressor.
    pub fn output(&self, regressor: &[f64]) -> f64 {
        self.nonzero.iter().map(|&m| self.weights[m] * regressor[m]).sum()
    }

    /// Delays the response by `taps`; coefficients pushed past `M` are dropped.
    pub fn shifted(&self, taps: usize) -> Self {
        let m = self.weights.len();
        let mut weights = vec![0.0; m];
        if taps < m {
            weights[taps..].copy_from_slice(&self.weights[..m - taps]);
        }
        Self::from_weights(weights).expect("shifted weights stay finite")
    }

    /// Returns a copy with every weight multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::from_weights(self.weights.iter().map(|w| w * c).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&SystemFile {
            len: self.weights.len(),
            weights: self.weights.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SystemFile = serde_json::from_str(text)?;
        if file.weights.len() != file.len {
            return Err(Error::DimensionMismatch {
                context: "system weights",
                expected: file.len,
                got: file.weights.len(),
            });
        }
        Self::from_weights(file.weights)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

fn unit_norm(mut weights: Vec<f64>) -> Result<SparseSystem> {
    let norm = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::invalid("weights", "cannot normalise a zero system"));
    }
    for w in &mut weights {
        *w /= norm;
    }
    SparseSystem::from_weights(weights)
}

/// `Q` Gaussian taps at uniformly random positions, scaled to unit norm.
pub fn gen_sparse_system(m: usize, q: usize, seed: u64) -> Result<SparseSystem> {
    if q == 0 || q > m {
        return Err(Error::invalid("sparsity", format!("need 1 <= Q <= M, got Q={q}, M={m}")));
    }
    let mut rng = stream_rng(seed, Substream::System);
    let mut positions = sample(&mut rng, m, q).into_vec();
    positions.sort_unstable();
    let mut weights = vec![0.0; m];
    for p in positions {
        // a Gaussian draw is zero with probability zero, but keep the count exact
        let mut g: f64 = rng.sample(StandardNormal);
        while g == 0.0 {
            g = rng.sample(StandardNormal);
        }
        weights[p] = g;
    }
    unit_norm(weights)
}

/// Synthetic echo path: `Q` taps in the first half of the support, magnitudes
/// `decay^position` times a random factor in `[0.5, 1.5)`, random signs, unit norm.
pub fn gen_echo_channel(m: usize, q: usize, decay: f64, seed: u64) -> Result<SparseSystem> {
    if q == 0 || q > m {
        return Err(Error::invalid("sparsity", format!("need 1 <= Q <= M, got Q={q}, M={m}")));
    }
    if !(decay > 0.0 && decay < 1.0) {
        return Err(Error::invalid("decay", format!("must lie in (0, 1), got {decay}")));
    }
    let region = (m / 2).max(q);
    let mut rng = stream_rng(seed, Substream::System);
    let mut positions = sample(&mut rng, region, q).into_vec();
    positions.sort_unstable();
    let first = positions[0];
    let mut weights = vec![0.0; m];
    for p in positions {
        let envelope = decay.powi((p - first) as i32);
        let spread: f64 = 0.5 + rng.random::<f64>();
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let w = sign * envelope * spread;
        if w == 0.0 {
            return Err(Error::invalid("decay", format!("envelope {decay}^{} underflows", p - first)));
        }
        weights[p] = w;
    }
    unit_norm(weights)
}

/// Input signal description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SignalSource {
    /// `u(n) = a u(n-1) + g(n)`, `g` unit-variance white Gaussian.
    Ar1 {
        pole: f64,
        #[serde(default)]
        seed: u64,
    },
    /// 16-bit signed little-endian mono, raw or WAV (PCM format 1).
    PcmFile { path: PathBuf },
}

impl SignalSource {
    pub fn ar1(pole: f64, seed: u64) -> Self {
        SignalSource::Ar1 { pole, seed }
    }

    pub fn pcm(path: impl Into<PathBuf>) -> Self {
        SignalSource::PcmFile { path: path.into() }
    }

    /// Same source re-keyed with `seed` (PCM sources are returned unchanged).
    pub fn with_seed(&self, seed: u64) -> Self {
        match self {
            SignalSource::Ar1 { pole, .. } => SignalSource::Ar1 { pole: *pole, seed },
            other => other.clone(),
        }
    }

    pub fn is_pcm(&self) -> bool {
        matches!(self, SignalSource::PcmFile { .. })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SignalSource::Ar1 { pole, .. } if !(pole.abs() < 1.0) => {
                Err(Error::invalid("pole", format!("must lie in (-1, 1), got {pole}")))
            }
            _ => Ok(()),
        }
    }

    /// Opens the input stream.
    pub fn open(&self) -> Result<SourceStream> {
        self.open_substream(Substream::Input)
    }

    /// Opens the stream on a named sub-stream; PCM files ignore the sub-stream.
    pub fn open_substream(&self, substream: Substream) -> Result<SourceStream> {
        self.validate()?;
        match self {
            SignalSource::Ar1 { pole, seed } => {
                let mut rng = stream_rng(*seed, substream);
                // start in the stationary distribution
                let g: f64 = rng.sample(StandardNormal);
                let state = g / (1.0 - pole * pole).sqrt();
                Ok(SourceStream::Ar1 { pole: *pole, state, rng })
            }
            SignalSource::PcmFile { path } => Ok(SourceStream::Pcm {
                samples: read_pcm(path)?,
                pos: 0,
            }),
        }
    }
}

/// Running sample stream.
#[derive(Debug, Clone)]
pub enum SourceStream {
    Ar1 {
        pole: f64,
        state: f64,
        rng: ChaCha20Rng,
    },
    Pcm {
        samples: Vec<f64>,
        pos: usize,
    },
}

impl SourceStream {
    /// Fills `out` with the next samples.
    pub fn fill(&mut self, out: &mut [f64]) -> Result<()> {
        match self {
            SourceStream::Ar1 { pole, state, rng } => {
                for x in out.iter_mut() {
                    let g: f64 = rng.sample(StandardNormal);
                    *state = *pole * *state + g;
                    *x = *state;
                }
                Ok(())
            }
            SourceStream::Pcm { samples, pos } => {
                let available = samples.len() - *pos;
                if out.len() > available {
                    return Err(Error::SourceExhausted {
                        requested: out.len(),
                        available,
                    });
                }
                out.copy_from_slice(&samples[*pos..*pos + out.len()]);
                *pos += out.len();
                Ok(())
            }
        }
    }

    /// Next `count` samples.
    pub fn take(&mut self, count: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; count];
        self.fill(&mut out)?;
        Ok(out)
    }

    /// Samples left, `None` for unbounded generators.
    pub fn remaining(&self) -> Option<usize> {
        match self {
            SourceStream::Ar1 { .. } => None,
            SourceStream::Pcm { samples, pos } => Some(samples.len() - pos),
        }
    }
}

/// Reads 16-bit mono PCM, WAV when the file starts with a RIFF header, raw
/// little-endian otherwise. Samples are scaled into `[-1, 1)`.
pub fn read_pcm(path: &Path) -> Result<Vec<f64>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let format_err = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let samples: Vec<i16> = if bytes.starts_with(b"RIFF") {
        let reader = hound::WavReader::new(std::io::Cursor::new(&bytes)).map_err(|e| format_err(e.to_string()))?;
        let spec = reader.spec();
        if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 || spec.channels != 1 {
            return Err(format_err(format!(
                "need 16-bit integer mono PCM, got {} channel(s), {} bits, {:?}",
                spec.channels, spec.bits_per_sample, spec.sample_format
            )));
        }
        reader
            .into_samples::<i16>()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| format_err(e.to_string()))?
    } else {
        if bytes.len() % 2 != 0 {
            return Err(format_err(format!("odd byte count {} for 16-bit raw PCM", bytes.len())));
        }
        bytes.chunks_exact(2).map(|b| i16::from_le_bytes([b[0], b[1]])).collect()
    };
    if samples.is_empty() {
        return Err(format_err("no samples".into()));
    }
    Ok(samples.into_iter().map(|s| s as f64 / 32768.0).collect())
}

/// Measurement-noise level derived from a target SNR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// `σ_η²`.
    pub variance: f64,
    pub snr_db: f64,
    /// Measured `E{y²(n)}` the variance was derived from.
    pub output_power: f64,
}

impl NoiseModel {
    /// `σ_η² = E{y²} 10^(-SNR/10)`.
    pub fn from_output_power(output_power: f64, snr_db: f64) -> Result<Self> {
        if !(output_power > 0.0) {
            return Err(Error::invalid("output_power", format!("must be positive, got {output_power}")));
        }
        Ok(Self {
            variance: output_power * 10f64.powf(-snr_db / 10.0),
            snr_db,
            output_power,
        })
    }

    /// Noise-free model (`σ_η² = 0`), used for deterministic checks.
    pub fn silent() -> Self {
        Self {
            variance: 0.0,
            snr_db: f64::INFINITY,
            output_power: 0.0,
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    /// Per-subband noise variance `σ_η²/N` under a paraunitary bank.
    pub fn subband_variance(&self, subbands: usize) -> f64 {
        self.variance / subbands as f64
    }
}

/// Estimates `E{y²(n)}` for `y = uᵀ w°` on the calibration sub-stream and sets
/// the noise variance for `snr_db`.
pub fn calibrate_noise(system: &SparseSystem, source: &SignalSource, snr_db: f64, samples: usize) -> Result<NoiseModel> {
    let m = system.len();
    if samples < 10 * m {
        return Err(Error::invalid("calibration_samples", format!("need at least 10M = {}, got {samples}", 10 * m)));
    }
    let mut stream = source.open_substream(Substream::Calibration)?;
    // PCM files are finite: fall back to whatever the file holds past the warm-up
    let total = match stream.remaining() {
        Some(r) if r < samples + m => {
            if r < 11 * m {
                return Err(Error::SourceExhausted {
                    requested: samples + m,
                    available: r,
                });
            }
            r
        }
        _ => samples + m,
    };
    let mut line = DelayLine::new(m);
    let mut block = vec![0.0; 4096];
    let mut power = 0.0;
    let mut counted = 0usize;
    let mut seen = 0usize;
    while seen < total {
        let take = block.len().min(total - seen);
        stream.fill(&mut block[..take])?;
        for &x in &block[..take] {
            line.push(x);
            seen += 1;
            if seen > m {
                let y = system.output(line.window());
                power += y * y;
                counted += 1;
            }
        }
    }
    let power = power / counted as f64;
    if power <= 0.0 {
        return Err(Error::ZeroPowerSignal { samples: counted });
    }
    NoiseModel::from_output_power(power, snr_db)
}

/// Default calibration length `max(10M, 200000)`.
pub fn default_calibration_samples(m: usize) -> usize {
    (10 * m).max(200_000)
}
