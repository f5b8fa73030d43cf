use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adaptive::AlgoConfig;
use crate::error::{Error, Result};
use crate::filterbank::{AnalysisBank, DEFAULT_LENGTH_FACTOR};
use crate::signals::{gen_echo_channel, gen_sparse_system, SignalSource, SparseSystem};

/// Where the unknown system comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemSpec {
    /// `nonzeros` Gaussian taps at random positions, unit norm.
    Sparse { taps: usize, nonzeros: usize },
    /// Exponentially decaying sparse echo path.
    Echo { taps: usize, nonzeros: usize, decay: f64 },
    /// JSON file `{ "M": .., "weights": [..] }`.
    File { path: PathBuf },
}

impl SystemSpec {
    pub fn build(&self, seed: u64) -> Result<SparseSystem> {
        match self {
            SystemSpec::Sparse { taps, nonzeros } => gen_sparse_system(*taps, *nonzeros, seed),
            SystemSpec::Echo { taps, nonzeros, decay } => gen_echo_channel(*taps, *nonzeros, *decay, seed),
            SystemSpec::File { path } => SparseSystem::load(path),
        }
    }

    /// Filter length, when known without loading a file.
    pub fn taps(&self) -> Option<usize> {
        match self {
            SystemSpec::Sparse { taps, .. } | SystemSpec::Echo { taps, .. } => Some(*taps),
            SystemSpec::File { .. } => None,
        }
    }

    pub fn is_random(&self) -> bool {
        !matches!(self, SystemSpec::File { .. })
    }
}

impl Default for SystemSpec {
    fn default() -> Self {
        SystemSpec::Sparse { taps: 32, nonzeros: 2 }
    }
}

/// Analysis bank: designed from `(subbands, length)` or loaded from a file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankSpec {
    pub subbands: usize,
    /// Defaults to `8 N`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

impl BankSpec {
    pub fn new(subbands: usize) -> Self {
        Self {
            subbands,
            length: None,
            file: None,
        }
    }

    pub fn length(&self) -> usize {
        self.length.unwrap_or(DEFAULT_LENGTH_FACTOR * self.subbands)
    }

    pub fn build(&self) -> Result<AnalysisBank> {
        match &self.file {
            Some(path) => {
                let bank = AnalysisBank::load(path)?;
                if bank.subbands() != self.subbands {
                    return Err(Error::DimensionMismatch {
                        context: "bank file subbands",
                        expected: self.subbands,
                        got: bank.subbands(),
                    });
                }
                Ok(bank)
            }
            None => AnalysisBank::design(self.subbands, self.length()),
        }
    }
}

impl Default for BankSpec {
    fn default() -> Self {
        Self::new(4)
    }
}

/// Abrupt change of the unknown system: circular shift by `taps` at frame `at`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tracking {
    /// Defaults to `frames / 2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at: Option<usize>,
    #[serde(default = "default_shift")]
    pub taps: usize,
}

fn default_shift() -> usize {
    12
}

impl Tracking {
    pub fn frame(&self, frames: usize) -> usize {
        self.at.unwrap_or(frames / 2)
    }
}

fn default_source() -> SignalSource {
    SignalSource::ar1(0.9, 0)
}
fn default_snr() -> f64 {
    30.0
}
fn default_frames() -> usize {
    1500
}
fn default_runs() -> usize {
    200
}
fn default_seed() -> u64 {
    1
}
fn default_outputs() -> PathBuf {
    PathBuf::from("out")
}
fn default_ensemble() -> usize {
    5000
}

/// Everything needed to reproduce one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub system: SystemSpec,
    /// Draw a fresh system for every run instead of one per experiment.
    #[serde(default)]
    pub redraw_system: bool,
    #[serde(default = "default_source")]
    pub source: SignalSource,
    #[serde(default = "default_snr")]
    pub snr_db: f64,
    #[serde(default)]
    pub bank: BankSpec,
    #[serde(default)]
    pub algorithms: Vec<AlgoConfig>,
    #[serde(default = "default_frames")]
    pub frames: usize,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_outputs")]
    pub outputs: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tracking: Option<Tracking>,
    /// Frames averaged for the theory's input moments.
    #[serde(default = "default_ensemble")]
    pub ensemble: usize,
    /// Start every filter at `w°` instead of zero.
    #[serde(default)]
    pub start_at_optimum: bool,
    /// Samples for the SNR calibration; defaults to `max(10 M, 200000)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration_samples: Option<usize>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::invalid("runs", "need at least one run"));
        }
        if self.frames == 0 {
            return Err(Error::invalid("frames", "need at least one frame"));
        }
        if !self.snr_db.is_finite() && self.snr_db != f64::INFINITY {
            return Err(Error::invalid("snr_db", format!("got {}", self.snr_db)));
        }
        if self.bank.subbands == 0 {
            return Err(Error::invalid("subbands", "need at least one subband"));
        }
        self.source.validate()?;
        for a in &self.algorithms {
            a.validate()?;
        }
        let mut names: Vec<String> = self.algorithms.iter().map(AlgoConfig::name).collect();
        names.sort();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::invalid("algorithms", format!("duplicate name {}: set a label", w[0])));
        }
        if let Some(t) = &self.tracking {
            if t.frame(self.frames) >= self.frames {
                return Err(Error::invalid("tracking.at", "shift frame lies beyond the run"));
            }
        }
        Ok(())
    }

    /// PCM input is a single recording: Monte-Carlo averaging is skipped.
    pub fn effective_runs(&self) -> usize {
        if self.source.is_pcm() {
            1
        } else {
            self.runs
        }
    }

    /// Steady-state window `min(500, frames / 5)`, at least one frame.
    pub fn steady_window(&self) -> usize {
        steady_window(self.frames)
    }
}

pub fn steady_window(frames: usize) -> usize {
    (frames / 5).clamp(1, 500).min(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adaptive::Variant;

    #[test]
    fn empty_config_takes_defaults() {
        let s = ExperimentSpec::default();
        assert_eq!(s.frames, 1500);
        assert_eq!(s.runs, 200);
        assert_eq!(s.bank.length(), 32);
        assert_eq!(s.system, SystemSpec::Sparse { taps: 32, nonzeros: 2 });
        assert_eq!(s.steady_window(), 300);
        s.validate().unwrap();
    }

    #[test]
    fn json_round_trip() {
        let mut s = ExperimentSpec::default();
        s.algorithms.push(AlgoConfig::new(Variant::L1Qrnsaf, 0.5).with_intensity(5e-5).with_shrinkage(0.05));
        s.tracking = Some(Tracking { at: None, taps: 12 });
        let back = ExperimentSpec::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = ExperimentSpec::default();
        s.runs = 0;
        assert!(s.validate().is_err());
        let mut s = ExperimentSpec::default();
        s.algorithms = vec![AlgoConfig::new(Variant::Nsaf, 0.5), AlgoConfig::new(Variant::Nsaf, 0.1)];
        assert!(s.validate().is_err());
        s.algorithms[1].label = Some("slow".into());
        s.validate().unwrap();
    }

    #[test]
    fn steady_window_rule() {
        assert_eq!(steady_window(1), 1);
        assert_eq!(steady_window(100), 20);
        assert_eq!(steady_window(10_000), 500);
    }
}
