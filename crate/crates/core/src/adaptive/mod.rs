//! NSAF, its sparsity-aware variants and the fullband NLMS family.
//!
//! All subband variants share one update
//!
//! ```text
//! w(k+1) = w(k) + μ Σ_i e_i(k) u_i(k) / (||u_i(k)||² + δ_reg) - β P(k) f(w(k))
//! ```
//!
//! with `P = I` for the quasi variants and `P = I - Σ_i u_i u_iᵀ / ||u_i||²`
//! for the projected originals, and `f` either `sgn(w)` or
//! `sgn(w) / (|w| + ε)`.

mod beta;
mod ops;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filterbank::{dot, SubbandFrame};

pub use beta::BetaAdapter;
pub use ops::{charge_filter_banks, op_count, OpCount, OpSink, OpTally};

/// Algorithm selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "nlms")]
    Nlms,
    #[serde(rename = "za_nlms")]
    ZaNlms,
    #[serde(rename = "rza_nlms")]
    RzaNlms,
    #[serde(rename = "nsaf")]
    Nsaf,
    #[serde(rename = "l1_nsaf")]
    L1Nsaf,
    #[serde(rename = "l1_rnsaf")]
    L1Rnsaf,
    #[serde(rename = "l1_qnsaf")]
    L1Qnsaf,
    #[serde(rename = "l1_qrnsaf")]
    L1Qrnsaf,
}

impl Variant {
    pub const ALL: [Variant; 8] = [
        Variant::Nlms,
        Variant::ZaNlms,
        Variant::RzaNlms,
        Variant::Nsaf,
        Variant::L1Nsaf,
        Variant::L1Rnsaf,
        Variant::L1Qnsaf,
        Variant::L1Qrnsaf,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Variant::Nlms => "nlms",
            Variant::ZaNlms => "za_nlms",
            Variant::RzaNlms => "rza_nlms",
            Variant::Nsaf => "nsaf",
            Variant::L1Nsaf => "l1_nsaf",
            Variant::L1Rnsaf => "l1_rnsaf",
            Variant::L1Qnsaf => "l1_qnsaf",
            Variant::L1Qrnsaf => "l1_qrnsaf",
        }
    }

    pub fn is_fullband(self) -> bool {
        matches!(self, Variant::Nlms | Variant::ZaNlms | Variant::RzaNlms)
    }

    /// Projected sparsity-aware subband variant (`P ≠ I`).
    pub fn is_projected(self) -> bool {
        matches!(self, Variant::L1Nsaf | Variant::L1Rnsaf)
    }

    pub fn is_quasi(self) -> bool {
        matches!(self, Variant::L1Qnsaf | Variant::L1Qrnsaf)
    }

    pub fn is_reweighted(self) -> bool {
        matches!(self, Variant::RzaNlms | Variant::L1Rnsaf | Variant::L1Qrnsaf)
    }

    /// Carries a zero-attractor term.
    pub fn is_sparse(self) -> bool {
        !matches!(self, Variant::Nlms | Variant::Nsaf)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        Variant::ALL
            .into_iter()
            .find(|v| v.key() == norm)
            .ok_or_else(|| Error::invalid("variant", format!("unknown variant `{s}`")))
    }
}

/// Zero-attractor gradient family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Penalty {
    /// `f(w) = sgn(w)`, penalty `||w||₁`.
    L1,
    /// `f(w) = sgn(w)/(|w| + ε)`, penalty `Σ ln(1 + |w|/ε)`.
    Reweighted { eps: f64 },
}

#[inline]
fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Writes `f(w)` into `out` (`sgn(0) = 0`).
pub fn zero_attractor_gradient_into(weights: &[f64], penalty: Penalty, out: &mut [f64]) {
    match penalty {
        Penalty::L1 => {
            for (o, &w) in out.iter_mut().zip(weights) {
                *o = sgn(w);
            }
        }
        Penalty::Reweighted { eps } => {
            for (o, &w) in out.iter_mut().zip(weights) {
                *o = sgn(w) / (w.abs() + eps);
            }
        }
    }
}

pub fn zero_attractor_gradient(weights: &[f64], penalty: Penalty) -> Vec<f64> {
    let mut out = vec![0.0; weights.len()];
    zero_attractor_gradient_into(weights, penalty, &mut out);
    out
}

/// `F(w)` whose subgradient is `f(w)`.
pub fn penalty_value(weights: &[f64], penalty: Penalty) -> f64 {
    match penalty {
        Penalty::L1 => weights.iter().map(|w| w.abs()).sum(),
        Penalty::Reweighted { eps } => weights.iter().map(|w| (w.abs() / eps).ln_1p()).sum(),
    }
}

/// Parameters of one adaptive filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgoConfig {
    pub variant: Variant,
    /// `μ`.
    pub step_size: f64,
    /// `β` for subband variants, `ρ` for the fullband family.
    #[serde(default)]
    pub intensity: f64,
    /// `ε` of the reweighted attractor.
    #[serde(default)]
    pub shrinkage: f64,
    /// `δ_reg` added to the normalisation denominators.
    #[serde(default)]
    pub regularizer: f64,
    #[serde(default)]
    pub adaptive_beta: bool,
    /// `δ_min` of the adaptive intensity rule.
    #[serde(default)]
    pub delta_min: f64,
    /// Display name; defaults to the variant key (prefixed `a_` when adaptive).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl AlgoConfig {
    pub fn new(variant: Variant, step_size: f64) -> Self {
        Self {
            variant,
            step_size,
            intensity: 0.0,
            shrinkage: 0.0,
            regularizer: 0.0,
            adaptive_beta: false,
            delta_min: 0.0,
            label: None,
        }
    }

    pub fn with_intensity(mut self, beta: f64) -> Self {
        self.intensity = beta;
        self
    }

    pub fn with_shrinkage(mut self, eps: f64) -> Self {
        self.shrinkage = eps;
        self
    }

    pub fn with_regularizer(mut self, delta: f64) -> Self {
        self.regularizer = delta;
        self
    }

    pub fn with_adaptive_beta(mut self, delta_min: f64) -> Self {
        self.adaptive_beta = true;
        self.delta_min = delta_min;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn name(&self) -> String {
        match &self.label {
            Some(l) => l.clone(),
            None if self.adaptive_beta => format!("a_{}", self.variant.key()),
            None => self.variant.key().to_string(),
        }
    }

    pub fn penalty(&self) -> Option<Penalty> {
        if !self.variant.is_sparse() {
            None
        } else if self.variant.is_reweighted() {
            Some(Penalty::Reweighted { eps: self.shrinkage })
        } else {
            Some(Penalty::L1)
        }
    }

    /// `ζ` of the adaptive intensity rule.
    pub fn zeta(&self, filter_len: usize, subbands: usize) -> f64 {
        if self.variant.is_quasi() {
            1.0 - self.step_size * subbands as f64 / filter_len as f64
        } else {
            1.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::invalid("step_size", format!("μ must be positive, got {}", self.step_size)));
        }
        if !(self.intensity >= 0.0 && self.intensity.is_finite()) {
            return Err(Error::invalid("intensity", format!("must be nonnegative, got {}", self.intensity)));
        }
        if self.variant.is_reweighted() && !(self.shrinkage > 0.0 && self.shrinkage.is_finite()) {
            return Err(Error::invalid("shrinkage", format!("ε must be positive, got {}", self.shrinkage)));
        }
        if !(self.regularizer >= 0.0 && self.regularizer.is_finite()) {
            return Err(Error::invalid("regularizer", format!("must be nonnegative, got {}", self.regularizer)));
        }
        if self.adaptive_beta {
            if self.variant.is_fullband() || !self.variant.is_sparse() {
                return Err(Error::invalid(
                    "adaptive_beta",
                    format!("only sparsity-aware subband variants adapt β, not {}", self.variant),
                ));
            }
            if !(self.delta_min > 0.0) {
                return Err(Error::invalid("delta_min", format!("must be positive, got {}", self.delta_min)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
struct Scratch {
    steps: Vec<f64>,
    norms: Vec<f64>,
    gradient: Vec<f64>,
    projection: Vec<f64>,
}

/// Weight vector and per-filter adaptation state.
#[derive(Debug, Clone)]
pub struct FilterState {
    weights: Vec<f64>,
    frame: u64,
    beta: Option<BetaAdapter>,
    last_beta: f64,
    scratch: Scratch,
}

impl FilterState {
    /// `w(0) = 0`; builds the β adapter when `config` asks for one.
    pub fn new(filter_len: usize, subbands: usize, config: &AlgoConfig) -> Result<Self> {
        config.validate()?;
        if filter_len == 0 || subbands == 0 {
            return Err(Error::invalid("filter_len", "filter length and subband count must be positive"));
        }
        let beta = match (config.adaptive_beta, config.penalty()) {
            (true, Some(p)) => Some(BetaAdapter::new(
                filter_len,
                subbands,
                config.zeta(filter_len, subbands),
                config.delta_min,
                p,
            )),
            _ => None,
        };
        Ok(Self {
            weights: vec![0.0; filter_len],
            frame: 0,
            beta,
            last_beta: if config.adaptive_beta { 0.0 } else { config.intensity },
            scratch: Scratch::default(),
        })
    }

    /// Replaces the weights (e.g. to start at `w°`).
    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                context: "initial weights",
                expected: self.weights.len(),
                got: weights.len(),
            });
        }
        self.weights = weights;
        Ok(self)
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

    /// Number of subband updates (or fullband samples) applied.
    pub fn frame(&self) -> u64 {
        self.frame
    }

    /// Intensity used by the latest update.
    pub fn beta(&self) -> f64 {
        self.last_beta
    }

    pub fn beta_adapter(&self) -> Option<&BetaAdapter> {
        self.beta.as_ref()
    }
}

/// `e_i(k) = d_i(k) - u_i(k)ᵀ w(k)` for every subband.
pub fn subband_errors(frame: &SubbandFrame, weights: &[f64]) -> Result<Vec<f64>> {
    check_len(frame.filter_len(), weights.len())?;
    Ok(frame
        .regressors()
        .zip(frame.desired())
        .map(|(u, d)| d - dot(u, weights))
        .collect())
}

fn check_len(got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::DimensionMismatch {
            context: "regressor length",
            expected,
            got,
        });
    }
    Ok(())
}

/// One subband update of `state` with `frame`; returns the `β` applied.
pub fn update_unified<S: OpSink>(
    state: &mut FilterState,
    frame: &SubbandFrame,
    config: &AlgoConfig,
    ops: &mut S,
) -> Result<f64> {
    if config.variant.is_fullband() {
        return Err(Error::invalid("variant", format!("{} is a fullband algorithm", config.variant)));
    }
    let m = state.weights.len();
    let n = frame.subbands();
    check_len(frame.filter_len(), m)?;
    let mu = config.step_size;
    let reg = config.regularizer;
    let mm = m as u64;

    let Scratch {
        steps,
        norms,
        gradient,
        projection,
    } = &mut state.scratch;
    steps.clear();
    norms.clear();
    for (i, (u, &d)) in frame.regressors().zip(frame.desired()).enumerate() {
        let e = d - dot(u, &state.weights);
        let norm = dot(u, u);
        ops.mul(2 * mm + 1);
        ops.add(2 * (mm - 1) + 1);
        ops.div(1);
        if reg != 0.0 {
            ops.add(1);
        }
        let denom = norm + reg;
        if denom <= 0.0 {
            return Err(Error::ZeroPowerRegressor { subband: i });
        }
        steps.push(mu * e / denom);
        norms.push(norm);
    }

    let penalty = config.penalty();
    let beta = if let Some(p) = penalty {
        gradient.resize(m, 0.0);
        zero_attractor_gradient_into(&state.weights, p, gradient);
        if let Penalty::Reweighted { .. } = p {
            ops.div(mm);
            ops.add(1);
        }
        if config.variant.is_projected() {
            // Σ_i u_i (u_iᵀ f) / ||u_i||², skipping silent subbands
            projection.clear();
            projection.resize(m, 0.0);
            for (u, &norm) in frame.regressors().zip(norms.iter()) {
                let t = dot(u, gradient);
                ops.mul(2 * mm);
                ops.add(mm - 1);
                ops.div(1);
                if norm > 0.0 {
                    let c = t / norm;
                    for (p, x) in projection.iter_mut().zip(u) {
                        *p += c * x;
                    }
                }
            }
            ops.add((n as u64 - 1) * mm);
            for (g, p) in gradient.iter_mut().zip(projection.iter()) {
                *g -= p;
            }
        }
        match state.beta.as_mut() {
            Some(adapter) => {
                let b = adapter.adapt_beta(&state.weights, gradient);
                adapter.refresh_reference(&state.weights, state.frame);
                b
            }
            None => config.intensity,
        }
    } else {
        0.0
    };

    for (u, &s) in frame.regressors().zip(steps.iter()) {
        for (w, x) in state.weights.iter_mut().zip(u) {
            *w += s * x;
        }
    }
    ops.mul(n as u64 * mm);
    ops.add(n as u64 * mm);
    if penalty.is_some() {
        for (w, g) in state.weights.iter_mut().zip(gradient.iter()) {
            *w -= beta * g;
        }
        ops.add(mm);
    }
    state.frame += 1;
    state.last_beta = beta;
    Ok(beta)
}

/// One fullband NLMS / ZA-NLMS / RZA-NLMS update with regressor `u(n)`
/// (newest first) and desired sample `d(n)`.
pub fn update_fullband<S: OpSink>(
    state: &mut FilterState,
    regressor: &[f64],
    desired: f64,
    config: &AlgoConfig,
    ops: &mut S,
) -> Result<()> {
    if !config.variant.is_fullband() {
        return Err(Error::invalid("variant", format!("{} is a subband algorithm", config.variant)));
    }
    let m = state.weights.len();
    check_len(regressor.len(), m)?;
    let mm = m as u64;
    let e = desired - dot(regressor, &state.weights);
    let norm = dot(regressor, regressor);
    ops.mul(2 * mm + 1);
    ops.add(2 * (mm - 1) + 1);
    ops.div(1);
    if config.regularizer != 0.0 {
        ops.add(1);
    }
    let denom = norm + config.regularizer;
    if denom <= 0.0 {
        return Err(Error::ZeroPowerRegressor { subband: 0 });
    }
    let s = config.step_size * e / denom;

    let penalty = config.penalty();
    if let Some(p) = penalty {
        let gradient = &mut state.scratch.gradient;
        gradient.resize(m, 0.0);
        zero_attractor_gradient_into(&state.weights, p, gradient);
        if let Penalty::Reweighted { .. } = p {
            ops.div(mm);
            ops.add(1);
        }
    }
    for (w, x) in state.weights.iter_mut().zip(regressor) {
        *w += s * x;
    }
    ops.mul(mm);
    ops.add(mm);
    if penalty.is_some() {
        let rho = config.intensity;
        for (w, g) in state.weights.iter_mut().zip(state.scratch.gradient.iter()) {
            *w -= rho * g;
        }
        ops.add(mm);
    }
    state.frame += 1;
    state.last_beta = config.intensity;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filterbank::{AnalysisBank, Analyzer};
    use crate::rng::{stream_rng, Substream};
    use crate::signals::{gen_sparse_system, SignalSource};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_frame(n: usize, m: usize, seed: u64) -> SubbandFrame {
        let mut rng = stream_rng(seed, Substream::Input);
        let regs = (0..n).map(|_| (0..m).map(|_| rng.sample(StandardNormal)).collect()).collect();
        let d = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        SubbandFrame::from_parts(regs, d, 0).unwrap()
    }

    #[test]
    fn gradient_examples() {
        assert_eq!(zero_attractor_gradient(&[0.0, 0.0], Penalty::L1), vec![0.0, 0.0]);
        assert_eq!(zero_attractor_gradient(&[0.0], Penalty::Reweighted { eps: 0.1 }), vec![0.0]);
        assert_eq!(zero_attractor_gradient(&[2.0, -3.0], Penalty::L1), vec![1.0, -1.0]);
        let r = zero_attractor_gradient(&[0.05], Penalty::Reweighted { eps: 0.05 });
        assert!((r[0] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.key().parse::<Variant>().unwrap(), v);
            let json = serde_json::to_string(&v).unwrap();
            assert_eq!(json, format!("\"{}\"", v.key()));
        }
        assert_eq!("L1-qNSAF".parse::<Variant>().unwrap(), Variant::L1Qnsaf);
        assert!("pnlms".parse::<Variant>().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(AlgoConfig::new(Variant::Nsaf, 0.0).validate().is_err());
        assert!(AlgoConfig::new(Variant::L1Qrnsaf, 0.5).validate().is_err());
        assert!(AlgoConfig::new(Variant::L1Qrnsaf, 0.5).with_shrinkage(0.05).validate().is_ok());
        assert!(AlgoConfig::new(Variant::Nsaf, 0.5).with_adaptive_beta(0.1).validate().is_err());
        assert!(AlgoConfig::new(Variant::L1Qnsaf, 0.5).with_adaptive_beta(0.0).validate().is_err());
        assert!(AlgoConfig::new(Variant::L1Qnsaf, 0.5).with_intensity(-1.0).validate().is_err());
    }

    #[test]
    fn errors_match_dot_product_oracle() {
        let frame = random_frame(2, 4, 1);
        let w = [0.3, -0.1, 0.7, 0.2];
        let e = subband_errors(&frame, &w).unwrap();
        for i in 0..2 {
            let u = frame.regressor(i);
            let y = u[0] * w[0] + u[1] * w[1] + u[2] * w[2] + u[3] * w[3];
            assert_eq!(e[i], frame.desired()[i] - y);
        }
        let zero = subband_errors(&frame, &[0.0; 4]).unwrap();
        assert_eq!(zero, frame.desired());
        assert!(subband_errors(&frame, &[0.0; 3]).is_err());
    }

    #[test]
    fn perfect_model_has_zero_error() {
        let sys = gen_sparse_system(16, 3, 4).unwrap();
        let bank = AnalysisBank::design(4, 32).unwrap();
        let mut an = Analyzer::new(bank, 16).unwrap();
        let x = SignalSource::ar1(0.9, 1).open().unwrap().take(400).unwrap();
        let mut line = crate::filterbank::DelayLine::new(16);
        let d: Vec<f64> = x
            .iter()
            .map(|&v| {
                line.push(v);
                sys.output(line.window())
            })
            .collect();
        for f in an.analyze_block(&x, &d).unwrap().iter().skip(20) {
            for e in subband_errors(f, sys.weights()).unwrap() {
                assert!(e.abs() < 1e-12, "{e}");
            }
        }
    }

    #[test]
    fn zero_beta_matches_reference_nsaf() {
        let m = 8;
        let frames: Vec<_> = (0..50).map(|k| random_frame(4, m, 100 + k)).collect();
        let mut reference = vec![0.0; m];
        let mu = 0.4;
        let mut traj_ref = Vec::new();
        for f in &frames {
            let mut steps = Vec::new();
            for i in 0..4 {
                let u = f.regressor(i);
                let mut y = 0.0;
                let mut p = 0.0;
                for j in 0..m {
                    y += u[j] * reference[j];
                    p += u[j] * u[j];
                }
                steps.push(mu * (f.desired()[i] - y) / p);
            }
            for (i, s) in steps.iter().enumerate() {
                for j in 0..m {
                    reference[j] += s * f.regressor(i)[j];
                }
            }
            traj_ref.push(reference.clone());
        }
        for v in [Variant::Nsaf, Variant::L1Nsaf, Variant::L1Rnsaf, Variant::L1Qnsaf, Variant::L1Qrnsaf] {
            let cfg = AlgoConfig::new(v, mu).with_shrinkage(0.05);
            let mut st = FilterState::new(m, 4, &cfg).unwrap();
            for (f, expect) in frames.iter().zip(&traj_ref) {
                update_unified(&mut st, f, &cfg, &mut ()).unwrap();
                assert_eq!(st.weights(), expect.as_slice(), "{v}");
            }
        }
    }

    #[test]
    fn single_band_identity_bank_is_nlms() {
        let m = 6;
        let bank = AnalysisBank::from_filters(vec![vec![1.0]]).unwrap();
        let mut an = Analyzer::new(bank, m).unwrap();
        let x = SignalSource::ar1(0.5, 3).open().unwrap().take(200).unwrap();
        let d: Vec<f64> = x.iter().map(|v| 0.5 * v).collect();
        let sub = AlgoConfig::new(Variant::Nsaf, 0.7);
        let full = AlgoConfig::new(Variant::Nlms, 0.7);
        let mut a = FilterState::new(m, 1, &sub).unwrap();
        let mut b = FilterState::new(m, 1, &full).unwrap();
        let mut line = crate::filterbank::DelayLine::new(m);
        for (&xi, &di) in x.iter().zip(&d) {
            let f = an.analyze(&[xi], &[di]).unwrap();
            line.push(xi);
            update_unified(&mut a, &f, &sub, &mut ()).unwrap();
            update_fullband(&mut b, line.window(), di, &full, &mut ()).unwrap();
            assert_eq!(a.weights(), b.weights());
        }
    }

    #[test]
    fn zero_power_regressor_is_an_error() {
        let frame = SubbandFrame::from_parts(vec![vec![0.0; 4], vec![1.0; 4]], vec![0.0, 1.0], 0).unwrap();
        let cfg = AlgoConfig::new(Variant::Nsaf, 0.5);
        let mut st = FilterState::new(4, 2, &cfg).unwrap();
        assert!(matches!(
            update_unified(&mut st, &frame, &cfg, &mut ()),
            Err(Error::ZeroPowerRegressor { subband: 0 })
        ));
        let cfg = cfg.with_regularizer(0.1);
        let mut st = FilterState::new(4, 2, &cfg).unwrap();
        assert!(update_unified(&mut st, &frame, &cfg, &mut ()).is_ok());
    }

    #[test]
    fn projection_annihilates_orthogonal_regressors() {
        // orthogonal regressors: P u_j = 0, so the original attractor lies in
        // their orthogonal complement
        let m = 4;
        let regs = vec![vec![1.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 2.0, -2.0]];
        let w0 = vec![0.3, -0.5, 0.2, 0.9];
        // zero errors: d_i = u_iᵀ w0
        let d: Vec<f64> = regs.iter().map(|u| dot(u, &w0)).collect();
        let frame = SubbandFrame::from_parts(regs.clone(), d, 0).unwrap();
        let cfg = AlgoConfig::new(Variant::L1Nsaf, 1.0).with_intensity(0.01);
        let mut st = FilterState::new(m, 2, &cfg).unwrap().with_weights(w0.clone()).unwrap();
        update_unified(&mut st, &frame, &cfg, &mut ()).unwrap();
        let delta: Vec<f64> = st.weights().iter().zip(&w0).map(|(a, b)| a - b).collect();
        for u in &regs {
            assert!(dot(u, &delta).abs() < 1e-15);
        }
        assert!(delta.iter().any(|d| d.abs() > 1e-3));
    }

    #[test]
    fn silent_input_shrinks_l1_norm_by_beta() {
        let m = 4;
        let frame = SubbandFrame::from_parts(vec![vec![0.0; m]; 2], vec![0.0; 2], 0).unwrap();
        let beta = 0.01;
        for v in [Variant::L1Qnsaf, Variant::L1Nsaf] {
            let cfg = AlgoConfig::new(v, 0.5).with_intensity(beta).with_regularizer(1e-3);
            let w0 = vec![0.5, -0.3, 0.0, 0.2];
            let mut st = FilterState::new(m, 2, &cfg).unwrap().with_weights(w0.clone()).unwrap();
            let l1 = |w: &[f64]| w.iter().map(|x| x.abs()).sum::<f64>();
            let mut prev = l1(&w0);
            for _ in 0..10 {
                update_unified(&mut st, &frame, &cfg, &mut ()).unwrap();
                let now = l1(st.weights());
                assert!((prev - now - 3.0 * beta).abs() < 1e-12, "{v}");
                prev = now;
            }
        }
    }

    #[test]
    fn instrumented_counts_match_closed_form() {
        for (m, n, l) in [(32usize, 4usize, 32usize), (512, 8, 64)] {
            for v in [Variant::Nsaf, Variant::L1Nsaf, Variant::L1Rnsaf, Variant::L1Qnsaf, Variant::L1Qrnsaf] {
                let cfg = AlgoConfig::new(v, 0.5).with_intensity(1e-4).with_shrinkage(0.05);
                let mut st = FilterState::new(m, n, &cfg).unwrap();
                let frame = random_frame(n, m, 5);
                let mut tally = OpTally::default();
                charge_filter_banks(&mut tally, n, l);
                update_unified(&mut st, &frame, &cfg, &mut tally).unwrap();
                assert_eq!(tally.per_sample(n as u64), op_count(&cfg, m, n, l), "{v} {m} {n} {l}");
            }
            let cfg = AlgoConfig::new(Variant::Nlms, 0.5);
            let mut st = FilterState::new(m, 1, &cfg).unwrap();
            let u = random_frame(1, m, 6);
            let mut tally = OpTally::default();
            update_fullband(&mut st, u.regressor(0), 0.3, &cfg, &mut tally).unwrap();
            assert_eq!(tally.per_sample(1), op_count(&cfg, m, n, l));
        }
    }

    #[test]
    fn fullband_nlms_converges_noiselessly() {
        let m = 8;
        let sys = gen_sparse_system(m, 3, 2).unwrap();
        let cfg = AlgoConfig::new(Variant::Nlms, 1.0);
        let mut st = FilterState::new(m, 1, &cfg).unwrap();
        let x = SignalSource::ar1(0.0, 8).open().unwrap().take(20 * m).unwrap();
        let mut line = crate::filterbank::DelayLine::new(m);
        for &v in &x {
            line.push(v);
            let d = sys.output(line.window());
            update_fullband(&mut st, line.window(), d, &cfg, &mut ()).unwrap();
        }
        assert!(crate::to_db(sys.deviation(st.weights())) < -60.0);
    }

    #[test]
    fn fullband_nlms_matches_textbook_recursion() {
        let m = 5;
        let mu = 0.3;
        let cfg = AlgoConfig::new(Variant::Nlms, mu).with_regularizer(1e-2);
        let mut st = FilterState::new(m, 1, &cfg).unwrap();
        let mut w = vec![0.0; m];
        let mut rng = stream_rng(1, Substream::Input);
        for _ in 0..100 {
            let u: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
            let d: f64 = rng.sample(StandardNormal);
            let y: f64 = (0..m).map(|j| u[j] * w[j]).sum();
            let p: f64 = (0..m).map(|j| u[j] * u[j]).sum();
            let s = mu * (d - y) / (p + 1e-2);
            for j in 0..m {
                w[j] += s * u[j];
            }
            update_fullband(&mut st, &u, d, &cfg, &mut ()).unwrap();
            assert_eq!(st.weights(), w.as_slice());
        }
    }

    #[test]
    fn adaptive_beta_starts_at_zero() {
        let cfg = AlgoConfig::new(Variant::L1Qnsaf, 0.5).with_adaptive_beta(1e-3);
        let mut st = FilterState::new(8, 4, &cfg).unwrap();
        let frame = random_frame(4, 8, 9);
        assert_eq!(update_unified(&mut st, &frame, &cfg, &mut ()).unwrap(), 0.0);
        let b1 = update_unified(&mut st, &frame, &cfg, &mut ()).unwrap();
        assert!(b1 > 0.0);
    }

    #[test]
    fn kind_mismatch_is_rejected() {
        let frame = random_frame(2, 4, 1);
        let full = AlgoConfig::new(Variant::Nlms, 0.5);
        let mut st = FilterState::new(4, 2, &full).unwrap();
        assert!(update_unified(&mut st, &frame, &full, &mut ()).is_err());
        let sub = AlgoConfig::new(Variant::Nsaf, 0.5);
        assert!(update_fullband(&mut st, &[1.0; 4], 0.0, &sub, &mut ()).is_err());
    }
}
