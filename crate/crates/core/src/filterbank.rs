//! Cosine-modulated (pseudo-QMF) analysis filter banks and multiband subband
//! decomposition.
//!
//! A linear-phase lowpass prototype `p` of length `L` is modulated into `N`
//! bandpass filters
//!
//! ```text
//! h_i(l) = 2 p(l) cos( (pi/N)(i + 0.5)(l - (L-1)/2) + (-1)^i pi/4 ),  l = 0..L-1
//! ```
//!
//! The [`Analyzer`] runs both the input and the desired signal through the same
//! bank. Each call consumes `N` fullband samples and yields one decimated
//! [`SubbandFrame`]: the `N` full-rate subband regressors `u_i(k)` of length `M`
//! and the decimated desired samples `d_i(kN)`.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Worst-case paraunitarity deviation accepted for designed banks.
pub const PARAUNITARY_TOLERANCE: f64 = 1e-2;

/// Default prototype length multiplier: `L = 8N`.
pub const DEFAULT_LENGTH_FACTOR: usize = 8;

/// Cutoff search range, as multiples of `pi/(2N)`.
const CUTOFF_SEARCH: (f64, f64) = (1.0, 1.6);

/// Symmetric lowpass prototype for an `N`-band cosine-modulated bank.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeFilter {
    taps: Vec<f64>,
    subbands: usize,
}

impl PrototypeFilter {
    /// Wraps existing taps, checking length and linear-phase symmetry.
    pub fn new(taps: Vec<f64>, subbands: usize) -> Result<Self> {
        check_shape(subbands, taps.len())?;
        let len = taps.len();
        for l in 0..len / 2 {
            let (a, b) = (taps[l], taps[len - 1 - l]);
            if (a - b).abs() > 1e-12 * (1.0 + a.abs()) {
                return Err(Error::invalid("prototype", format!("taps not symmetric at {l}")));
            }
        }
        Ok(Self { taps, subbands })
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn subbands(&self) -> usize {
        self.subbands
    }

    /// Returns a copy with every tap multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            taps: self.taps.iter().map(|t| t * c).collect(),
            subbands: self.subbands,
        }
    }
}

fn check_shape(subbands: usize, length: usize) -> Result<()> {
    if subbands < 2 {
        return Err(Error::invalid("subbands", format!("need N >= 2, got {subbands}")));
    }
    if length == 0 || length % (2 * subbands) != 0 {
        return Err(Error::invalid(
            "length",
            format!("L = {length} is not a positive multiple of 2N = {}", 2 * subbands),
        ));
    }
    Ok(())
}

fn windowed_sinc(length: usize, cutoff: f64) -> Vec<f64> {
    let centre = (length as f64 - 1.0) / 2.0;
    (0..length)
        .map(|l| {
            let t = l as f64 - centre;
            let ideal = if t == 0.0 {
                cutoff / PI
            } else {
                (cutoff * t).sin() / (PI * t)
            };
            let hamming = 0.54 - 0.46 * (2.0 * PI * l as f64 / (length as f64 - 1.0)).cos();
            ideal * hamming
        })
        .collect()
}

/// Hamming-windowed ideal lowpass scaled so the modulated bank has unit total
/// energy (zero residual at shift 0 of the paraunitary identity).
fn normalized_prototype(subbands: usize, length: usize, cutoff: f64) -> PrototypeFilter {
    let raw = PrototypeFilter {
        taps: windowed_sinc(length, cutoff),
        subbands,
    };
    let energy: f64 = modulate(&raw).filters.iter().flatten().map(|h| h * h).sum();
    raw.scaled(1.0 / energy.sqrt())
}

/// Designs a pseudo-QMF prototype for `subbands` bands of `length` taps.
///
/// The cutoff is tuned within `[1.0, 1.6] * pi/(2N)` to minimise the bank's
/// [`paraunitarity_error`](AnalysisBank::paraunitarity_error); a windowed sinc
/// cut exactly at `pi/(2N)` is only half-amplitude at the band edge and is far
/// from power complementary.
pub fn design_prototype(subbands: usize, length: usize) -> Result<PrototypeFilter> {
    check_shape(subbands, length)?;
    let base = PI / (2.0 * subbands as f64);
    let error_at = |ratio: f64| modulate(&normalized_prototype(subbands, length, ratio * base)).paraunitarity_error();

    let (lo, hi) = CUTOFF_SEARCH;
    let steps = 60;
    let mut best = (f64::INFINITY, lo);
    for s in 0..=steps {
        let r = lo + (hi - lo) * s as f64 / steps as f64;
        let e = error_at(r);
        if e < best.0 {
            best = (e, r);
        }
    }
    // golden-section refinement around the best grid point
    let width = (hi - lo) / steps as f64;
    let (mut a, mut b) = ((best.1 - width).max(lo), (best.1 + width).min(hi));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (error_at(c), error_at(d));
    for _ in 0..40 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = error_at(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = error_at(d);
        }
    }
    let refined = if fc < fd { (fc, c) } else { (fd, d) };
    let ratio = if refined.0 < best.0 { refined.1 } else { best.1 };
    Ok(normalized_prototype(subbands, length, ratio * base))
}

/// Cosine-modulates a prototype into its analysis bank.
pub fn modulate(prototype: &PrototypeFilter) -> AnalysisBank {
    let n = prototype.subbands;
    let len = prototype.taps.len();
    let centre = (len as f64 - 1.0) / 2.0;
    let filters = (0..n)
        .map(|i| {
            let phase = if i % 2 == 0 { PI / 4.0 } else { -PI / 4.0 };
            prototype
                .taps
                .iter()
                .enumerate()
                .map(|(l, p)| {
                    2.0 * p * ((PI / n as f64) * (i as f64 + 0.5) * (l as f64 - centre) + phase).cos()
                })
                .collect()
        })
        .collect();
    AnalysisBank {
        filters,
        subbands: n,
        length: len,
        prototype: Some(prototype.taps.clone()),
    }
}

/// `N` analysis filters of common length `L`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisBank {
    filters: Vec<Vec<f64>>,
    subbands: usize,
    length: usize,
    prototype: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct BankFile {
    #[serde(rename = "N")]
    subbands: usize,
    #[serde(rename = "L")]
    length: usize,
    prototype: Vec<f64>,
    filters: Vec<Vec<f64>>,
}

impl AnalysisBank {
    /// Designs and modulates the default bank for `subbands` bands and `length` taps.
    pub fn design(subbands: usize, length: usize) -> Result<Self> {
        Ok(modulate(&design_prototype(subbands, length)?))
    }

    /// Builds a bank from explicit filters (no prototype attached).
    ///
    /// Only requires a common nonzero length; the single-band identity bank
    /// `[[1.0]]` is accepted, which turns NSAF into NLMS.
    pub fn from_filters(filters: Vec<Vec<f64>>) -> Result<Self> {
        let subbands = filters.len();
        if subbands == 0 {
            return Err(Error::invalid("filters", "empty bank"));
        }
        let length = filters[0].len();
        if length == 0 {
            return Err(Error::invalid("filters", "zero-length filter"));
        }
        if let Some(bad) = filters.iter().find(|f| f.len() != length) {
            return Err(Error::DimensionMismatch {
                context: "analysis filter length",
                expected: length,
                got: bad.len(),
            });
        }
        Ok(Self {
            filters,
            subbands,
            length,
            prototype: None,
        })
    }

    pub fn subbands(&self) -> usize {
        self.subbands
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn filters(&self) -> &[Vec<f64>] {
        &self.filters
    }

    pub fn filter(&self, i: usize) -> &[f64] {
        &self.filters[i]
    }

    pub fn prototype(&self) -> Option<&[f64]> {
        self.prototype.as_deref()
    }

    /// `max_s | sum_i sum_l h_i(l) h_i(l + sN) - delta(s) |`.
    pub fn paraunitarity_error(&self) -> f64 {
        let n = self.subbands;
        let len = self.length;
        let mut worst: f64 = 0.0;
        let mut s = 0;
        while s * n < len || s == 0 {
            let shift = s * n;
            let mut total = 0.0;
            for h in &self.filters {
                for l in 0..len.saturating_sub(shift) {
                    total += h[l] * h[l + shift];
                }
            }
            let target = if s == 0 { 1.0 } else { 0.0 };
            worst = worst.max((total - target).abs());
            s += 1;
        }
        worst
    }

    pub fn to_json(&self) -> Result<String> {
        let file = BankFile {
            subbands: self.subbands,
            length: self.length,
            prototype: self.prototype.clone().unwrap_or_default(),
            filters: self.filters.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: BankFile = serde_json::from_str(text)?;
        let mut bank = Self::from_filters(file.filters)?;
        if bank.subbands != file.subbands || bank.length != file.length {
            return Err(Error::invalid(
                "bank",
                format!(
                    "header N={}, L={} disagrees with filters ({} x {})",
                    file.subbands, file.length, bank.subbands, bank.length
                ),
            ));
        }
        if !file.prototype.is_empty() {
            bank.prototype = Some(file.prototype);
        }
        Ok(bank)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Fixed-length newest-first window over a sample stream.
///
/// `window()[0]` is the most recent sample. Pushing is amortised O(1): the
/// window slides left through slack space and is copied back only when the
/// slack runs out.
#[derive(Debug, Clone)]
pub struct DelayLine {
    buf: Vec<f64>,
    start: usize,
    len: usize,
    slack: usize,
}

impl DelayLine {
    /// Zero-filled line of `len` samples.
    pub fn new(len: usize) -> Self {
        let slack = len.max(16);
        Self {
            buf: vec![0.0; len + slack],
            start: slack,
            len,
            slack,
        }
    }

    pub fn push(&mut self, x: f64) {
        if self.len == 0 {
            return;
        }
        if self.start == 0 {
            let keep = self.len - 1;
            self.buf.copy_within(0..keep, self.slack + 1);
            self.start = self.slack + 1;
        }
        self.start -= 1;
        self.buf[self.start] = x;
    }

    pub fn window(&self) -> &[f64] {
        &self.buf[self.start..self.start + self.len]
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// One decimated frame of subband data.
#[derive(Debug, Clone, PartialEq)]
pub struct SubbandFrame {
    regressors: Vec<f64>,
    desired: Vec<f64>,
    subbands: usize,
    filter_len: usize,
    frame_index: u64,
}

impl SubbandFrame {
    /// Builds a frame from explicit per-subband regressors.
    pub fn from_parts(regressors: Vec<Vec<f64>>, desired: Vec<f64>, frame_index: u64) -> Result<Self> {
        let subbands = regressors.len();
        if subbands == 0 {
            return Err(Error::invalid("regressors", "no subbands"));
        }
        if desired.len() != subbands {
            return Err(Error::DimensionMismatch {
                context: "desired samples per subband",
                expected: subbands,
                got: desired.len(),
            });
        }
        let filter_len = regressors[0].len();
        if let Some(bad) = regressors.iter().find(|r| r.len() != filter_len) {
            return Err(Error::DimensionMismatch {
                context: "regressor length",
                expected: filter_len,
                got: bad.len(),
            });
        }
        Ok(Self {
            regressors: regressors.concat(),
            desired,
            subbands,
            filter_len,
            frame_index,
        })
    }

    /// `u_i(k) = [u_i(kN), u_i(kN-1), ..., u_i(kN-M+1)]`.
    pub fn regressor(&self, i: usize) -> &[f64] {
        &self.regressors[i * self.filter_len..(i + 1) * self.filter_len]
    }

    pub fn regressors(&self) -> impl Iterator<Item = &[f64]> {
        self.regressors.chunks_exact(self.filter_len.max(1))
    }

    /// `d_{i,D}(k) = d_i(kN)` for every subband.
    pub fn desired(&self) -> &[f64] {
        &self.desired
    }

    pub fn subbands(&self) -> usize {
        self.subbands
    }

    pub fn filter_len(&self) -> usize {
        self.filter_len
    }

    pub fn frame_index(&self) -> u64 {
        self.frame_index
    }
}

/// Running subband decomposition of an input/desired pair.
#[derive(Debug, Clone)]
pub struct Analyzer {
    bank: AnalysisBank,
    input_history: DelayLine,
    desired_history: DelayLine,
    subband_lines: Vec<DelayLine>,
    next_frame: u64,
}

impl Analyzer {
    /// Analyzer producing regressors of `filter_len` taps, all state zeroed.
    pub fn new(bank: AnalysisBank, filter_len: usize) -> Result<Self> {
        if filter_len == 0 {
            return Err(Error::invalid("filter_len", "must be positive"));
        }
        let n = bank.subbands;
        let len = bank.length;
        Ok(Self {
            input_history: DelayLine::new(len),
            desired_history: DelayLine::new(len),
            subband_lines: (0..n).map(|_| DelayLine::new(filter_len)).collect(),
            next_frame: 0,
            bank,
        })
    }

    pub fn bank(&self) -> &AnalysisBank {
        &self.bank
    }

    pub fn subbands(&self) -> usize {
        self.bank.subbands
    }

    /// Consumes exactly `N` new fullband samples of input and desired signal.
    pub fn analyze(&mut self, input: &[f64], desired: &[f64]) -> Result<SubbandFrame> {
        let n = self.bank.subbands;
        for (what, got) in [("input window", input.len()), ("desired window", desired.len())] {
            if got != n {
                return Err(Error::DimensionMismatch {
                    context: what,
                    expected: n,
                    got,
                });
            }
        }
        for (&x, &d) in input.iter().zip(desired) {
            self.input_history.push(x);
            self.desired_history.push(d);
            let hist = self.input_history.window();
            for (h, line) in self.bank.filters.iter().zip(&mut self.subband_lines) {
                line.push(dot(h, hist));
            }
        }
        // the desired branch is only needed at the decimated instant
        let dhist = self.desired_history.window();
        let desired_sub: Vec<f64> = self.bank.filters.iter().map(|h| dot(h, dhist)).collect();

        let m = self.subband_lines[0].len();
        let mut regressors = Vec::with_capacity(n * m);
        for line in &self.subband_lines {
            regressors.extend_from_slice(line.window());
        }
        let frame = SubbandFrame {
            regressors,
            desired: desired_sub,
            subbands: n,
            filter_len: m,
            frame_index: self.next_frame,
        };
        self.next_frame += 1;
        Ok(frame)
    }

    /// Consumes any whole number of frames' worth of samples.
    pub fn analyze_block(&mut self, input: &[f64], desired: &[f64]) -> Result<Vec<SubbandFrame>> {
        let n = self.bank.subbands;
        if input.len() != desired.len() || input.len() % n != 0 {
            return Err(Error::DimensionMismatch {
                context: "block length (multiple of N, equal input/desired)",
                expected: n * (input.len() / n).max(1),
                got: desired.len(),
            });
        }
        input
            .chunks_exact(n)
            .zip(desired.chunks_exact(n))
            .map(|(x, d)| self.analyze(x, d))
            .collect()
    }

    /// Contents of every delay line: input history, desired history, then
    /// the `N` subband regressor lines.
    pub fn delay_lines(&self) -> Vec<Vec<f64>> {
        std::iter::once(&self.input_history)
            .chain(std::iter::once(&self.desired_history))
            .chain(self.subband_lines.iter())
            .map(|d| d.window().to_vec())
            .collect()
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
