//! Ensemble estimates of `E{A}`, `E{A ⊗ A}` and the noise matrix `D`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::filterbank::{AnalysisBank, Analyzer};
use crate::rng::Substream;
use crate::signals::{NoiseModel, SignalSource};

use super::linalg::symmetrize;

/// Largest filter length for which dense `M² × M²` matrices are built.
pub const MAX_THEORY_TAPS: usize = 128;

/// Frames accumulated per matrix-product batch.
const BATCH: usize = 256;

/// Input statistics driving the theoretical recursions.
#[derive(Debug, Clone)]
pub struct InputMoments {
    mean_a: DMatrix<f64>,
    kron_aa: DMatrix<f64>,
    unit_noise: DMatrix<f64>,
    noise_variance: f64,
    ensemble_size: usize,
    skipped: usize,
    subbands: usize,
    filter_len: usize,
}

pub(crate) fn check_theory_size(m: usize) -> Result<()> {
    if m > MAX_THEORY_TAPS {
        return Err(Error::TheoryTooLarge {
            m,
            limit: MAX_THEORY_TAPS,
        });
    }
    Ok(())
}

impl InputMoments {
    /// Builds moments from known matrices; `unit_noise` is `D` for `σ_η² = 1`.
    pub fn from_parts(
        mean_a: DMatrix<f64>,
        kron_aa: DMatrix<f64>,
        unit_noise: DMatrix<f64>,
        noise_variance: f64,
        subbands: usize,
    ) -> Result<Self> {
        let m = mean_a.nrows();
        check_theory_size(m)?;
        let square = |x: &DMatrix<f64>, n: usize, what: &'static str| {
            if x.nrows() != n || x.ncols() != n {
                Err(Error::DimensionMismatch {
                    context: what,
                    expected: n,
                    got: x.nrows().max(x.ncols()),
                })
            } else {
                Ok(())
            }
        };
        square(&mean_a, m, "E{A} dimension")?;
        square(&kron_aa, m * m, "E{A⊗A} dimension")?;
        square(&unit_noise, m, "D dimension")?;
        Ok(Self {
            mean_a,
            kron_aa,
            unit_noise,
            noise_variance,
            ensemble_size: 0,
            skipped: 0,
            subbands,
            filter_len: m,
        })
    }

    /// `E{A(k)}`.
    pub fn mean_a(&self) -> &DMatrix<f64> {
        &self.mean_a
    }

    /// `E{A(k) ⊗ A(k)}`.
    pub fn kron_aa(&self) -> &DMatrix<f64> {
        &self.kron_aa
    }

    /// `D = (σ_η²/N) Σ_i E{u_i u_iᵀ / ||u_i||⁴}`.
    pub fn noise_d(&self) -> DMatrix<f64> {
        &self.unit_noise * self.noise_variance
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    /// Same input statistics with another noise level.
    pub fn with_noise_variance(&self, variance: f64) -> Self {
        Self {
            noise_variance: variance,
            ..self.clone()
        }
    }

    pub fn ensemble_size(&self) -> usize {
        self.ensemble_size
    }

    /// Frames dropped because a subband regressor had zero power.
    pub fn skipped_frames(&self) -> usize {
        self.skipped
    }

    pub fn subbands(&self) -> usize {
        self.subbands
    }

    pub fn filter_len(&self) -> usize {
        self.filter_len
    }
}

/// Averages `A(k)`, `A(k) ⊗ A(k)` and `Σ_i u_i u_iᵀ/||u_i||⁴` over
/// `ensemble_size` consecutive decimated frames of `source`, after discarding
/// `L + M N` warm-up samples.
pub fn estimate_moments(
    bank: &AnalysisBank,
    source: &SignalSource,
    noise: &NoiseModel,
    filter_len: usize,
    ensemble_size: usize,
) -> Result<InputMoments> {
    let m = filter_len;
    let n = bank.subbands();
    check_theory_size(m)?;
    if ensemble_size < 100 {
        return Err(Error::invalid("ensemble_size", format!("need at least 100 frames, got {ensemble_size}")));
    }
    let mut stream = source.open_substream(Substream::Moments)?;
    let mut analyzer = Analyzer::new(bank.clone(), m)?;
    let zeros = vec![0.0; n];
    let warmup_frames = (bank.length() + m * n).div_ceil(n);
    let mut block = vec![0.0; n];
    for _ in 0..warmup_frames {
        stream.fill(&mut block)?;
        analyzer.analyze(&block, &zeros)?;
    }

    let m2 = m * m;
    let mut mean_a = DMatrix::<f64>::zeros(m, m);
    let mut unit_noise = DMatrix::<f64>::zeros(m, m);
    let mut second = DMatrix::<f64>::zeros(m2, m2);
    let mut batch = DMatrix::<f64>::zeros(m2, BATCH);
    let mut filled = 0;
    let mut accepted = 0;
    let mut skipped = 0;
    let mut a = DMatrix::<f64>::zeros(m, m);

    let flush = |batch: &DMatrix<f64>, filled: usize, second: &mut DMatrix<f64>| {
        let cols = batch.columns(0, filled);
        second.gemm(1.0, &cols, &cols.transpose(), 1.0);
    };

    while accepted < ensemble_size {
        stream.fill(&mut block)?;
        let frame = analyzer.analyze(&block, &zeros)?;
        let norms: Vec<f64> = frame.regressors().map(|u| u.iter().map(|x| x * x).sum()).collect();
        if norms.iter().any(|&p| p <= 0.0) {
            skipped += 1;
            if skipped > 10 * ensemble_size {
                return Err(Error::ZeroPowerSignal { samples: skipped * n });
            }
            continue;
        }
        a.fill(0.0);
        for (u, &p) in frame.regressors().zip(&norms) {
            let u = nalgebra::DVectorView::from_slice(u, m);
            a.ger(1.0 / p, &u, &u, 1.0);
            unit_noise.ger(1.0 / (p * p), &u, &u, 1.0);
        }
        mean_a += &a;
        batch.column_mut(filled).copy_from_slice(a.as_slice());
        filled += 1;
        accepted += 1;
        if filled == BATCH {
            flush(&batch, filled, &mut second);
            filled = 0;
        }
    }
    if filled > 0 {
        flush(&batch, filled, &mut second);
    }

    let count = accepted as f64;
    mean_a /= count;
    symmetrize(&mut mean_a);
    unit_noise /= count * n as f64;
    symmetrize(&mut unit_noise);
    second /= count;

    // E{A_ij A_kl} sits at S[j M + i, l M + k] and belongs at (i M + k, j M + l)
    let mut kron_aa = DMatrix::<f64>::zeros(m2, m2);
    for j in 0..m {
        for l in 0..m {
            for i in 0..m {
                for k in 0..m {
                    kron_aa[(i * m + k, j * m + l)] = second[(j * m + i, l * m + k)];
                }
            }
        }
    }
    symmetrize(&mut kron_aa);

    Ok(InputMoments {
        mean_a,
        kron_aa,
        unit_noise,
        noise_variance: noise.variance,
        ensemble_size: accepted,
        skipped,
        subbands: n,
        filter_len: m,
    })
}
