//! Arithmetic operation accounting.
//!
//! The update routines are generic over an [`OpSink`]; the unit sink `()` is
//! free, [`OpTally`] counts. Counting conventions:
//!
//! - multiplying by `±β` chosen from a sign is a selection, not a multiplication;
//! - applying the zero-attractor `w - β P f` costs `M` additions in total;
//! - the reweighted attractor costs `M` divisions plus one addition for the
//!   shrinkage offset;
//! - the analysis stage is charged as three full-rate `N`-filter banks of
//!   length `L` (input, desired and error paths) via [`charge_filter_banks`].
//!
//! Counts are integers per decimated frame; [`OpCount`] divides them by the
//! number of fullband samples, which yields fractional per-sample counts.

use super::{AlgoConfig, Variant};

/// Receiver of arithmetic operation counts.
pub trait OpSink {
    fn mul(&mut self, n: u64);
    fn add(&mut self, n: u64);
    fn div(&mut self, n: u64);
}

impl OpSink for () {
    #[inline(always)]
    fn mul(&mut self, _: u64) {}
    #[inline(always)]
    fn add(&mut self, _: u64) {}
    #[inline(always)]
    fn div(&mut self, _: u64) {}
}

/// Running operation totals.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpTally {
    pub multiplications: u64,
    pub additions: u64,
    pub divisions: u64,
}

impl OpSink for OpTally {
    fn mul(&mut self, n: u64) {
        self.multiplications += n;
    }
    fn add(&mut self, n: u64) {
        self.additions += n;
    }
    fn div(&mut self, n: u64) {
        self.divisions += n;
    }
}

impl OpTally {
    /// Average per fullband sample over `samples` samples.
    pub fn per_sample(&self, samples: u64) -> OpCount {
        let s = samples as f64;
        OpCount {
            multiplications: self.multiplications as f64 / s,
            additions: self.additions as f64 / s,
            divisions: self.divisions as f64 / s,
        }
    }
}

/// Operations per fullband input sample.
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize)]
pub struct OpCount {
    pub multiplications: f64,
    pub additions: f64,
    pub divisions: f64,
}

/// Charges one decimated frame of the analysis stage.
pub fn charge_filter_banks<S: OpSink>(ops: &mut S, subbands: usize, length: usize) {
    let (n, l) = (subbands as u64, length as u64);
    ops.mul(3 * n * n * l);
    ops.add(3 * n * n * (l - 1));
}

/// Closed-form per-sample complexity of `config` for filter length `m`,
/// `n` subbands and analysis filters of length `l`.
pub fn op_count(config: &AlgoConfig, m: usize, n: usize, l: usize) -> OpCount {
    let (m, n, l) = (m as f64, n as f64, l as f64);
    let reg = if config.regularizer != 0.0 { 1.0 } else { 0.0 };
    let nlms = OpCount {
        multiplications: 3.0 * m + 1.0,
        additions: 3.0 * m - 1.0 + reg,
        divisions: 1.0,
    };
    let bank = OpCount {
        multiplications: 3.0 * n * l,
        additions: 3.0 * n * (l - 1.0),
        divisions: 0.0,
    };
    let plus = |a: OpCount, mul: f64, add: f64, div: f64| OpCount {
        multiplications: a.multiplications + mul,
        additions: a.additions + add,
        divisions: a.divisions + div,
    };
    let nsaf = plus(nlms, bank.multiplications, bank.additions, 0.0);
    match config.variant {
        Variant::Nlms => nlms,
        Variant::ZaNlms => plus(nlms, 0.0, m, 0.0),
        Variant::RzaNlms => plus(nlms, 0.0, m + 1.0, m),
        Variant::Nsaf => nsaf,
        Variant::L1Nsaf => plus(nsaf, 2.0 * m, 2.0 * m - 1.0, 1.0),
        Variant::L1Rnsaf => plus(nsaf, 2.0 * m, 2.0 * m - 1.0 + 1.0 / n, 1.0 + m / n),
        Variant::L1Qnsaf => plus(nsaf, 0.0, m / n, 0.0),
        Variant::L1Qrnsaf => plus(nsaf, 0.0, (m + 1.0) / n, m / n),
    }
}
