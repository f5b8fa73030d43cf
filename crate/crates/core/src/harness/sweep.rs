use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::signals::NoiseModel;
use crate::theory::estimate_moments;

use super::simulate::{run_simulation, shared_system};
use super::spec::{ExperimentSpec, SystemSpec};
use super::theory_run::run_theory_with;

/// Parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Intensity of every sparsity-aware algorithm.
    Beta,
    /// Step size of every algorithm.
    Mu,
    /// Number of nonzero taps of a generated system.
    Q,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Beta => "beta",
            SweepAxis::Mu => "mu",
            SweepAxis::Q => "q",
        })
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "beta" => Ok(SweepAxis::Beta),
            "mu" => Ok(SweepAxis::Mu),
            "q" => Ok(SweepAxis::Q),
            other => Err(Error::invalid("axis", format!("expected beta, mu or q, got {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: f64,
    pub algorithm: String,
    pub sim_steady_db: Option<f64>,
    pub sim_stderr_db: Option<f64>,
    pub theory_steady_db: Option<f64>,
    pub beta_star: Option<f64>,
}

/// `spec` with `axis` set to `value`.
pub fn apply_axis(spec: &ExperimentSpec, axis: SweepAxis, value: f64) -> Result<ExperimentSpec> {
    let mut s = spec.clone();
    match axis {
        SweepAxis::Beta => {
            for a in s.algorithms.iter_mut().filter(|a| a.variant.is_sparse() && !a.adaptive_beta) {
                a.intensity = value;
            }
        }
        SweepAxis::Mu => {
            for a in &mut s.algorithms {
                a.step_size = value;
            }
        }
        SweepAxis::Q => {
            if value < 1.0 || value.fract() != 0.0 {
                return Err(Error::invalid("q", format!("need a positive integer, got {value}")));
            }
            match &mut s.system {
                SystemSpec::Sparse { nonzeros, .. } | SystemSpec::Echo { nonzeros, .. } => *nonzeros = value as usize,
                SystemSpec::File { .. } => return Err(Error::invalid("q", "cannot change the sparsity of a loaded system")),
            }
        }
    }
    Ok(s)
}

/// Runs simulation and/or theory at every value of `axis`.
pub fn sweep(spec: &ExperimentSpec, axis: SweepAxis, values: &[f64], simulate: bool, theory: bool) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    // moments depend only on the input and bank; rescale their noise per point
    let base_moments = if theory {
        let (system, _) = shared_system(spec)?;
        Some(estimate_moments(
            &spec.bank.build()?,
            &spec.source.with_seed(spec.seed),
            &NoiseModel::silent(),
            system.len(),
            spec.ensemble,
        )?)
    } else {
        None
    };
    let mut rows = Vec::new();
    for &value in values {
        let point = apply_axis(spec, axis, value)?;
        let sim = if simulate { Some(run_simulation(&point)?) } else { None };
        let th = match &base_moments {
            Some(m) => {
                let (system, noise) = shared_system(&point)?;
                let mut frames_free = point.clone();
                frames_free.frames = 1;
                frames_free.tracking = None;
                Some(run_theory_with(&frames_free, m.with_noise_variance(noise.variance), system, noise)?)
            }
            None => None,
        };
        for cfg in &point.algorithms {
            let name = cfg.name();
            let sc = sim.as_ref().and_then(|r| r.curve(&name));
            let steady = th.as_ref().and_then(|t| t.curve(&name)).and_then(|c| c.steady.as_ref());
            rows.push(SweepRow {
                axis: axis.to_string(),
                value,
                algorithm: name,
                sim_steady_db: sc.map(|c| c.steady_msd_db),
                sim_stderr_db: sc.map(|c| c.steady_stderr_db),
                theory_steady_db: steady.map(|s| s.msd_inf_db),
                beta_star: steady.and_then(|s| s.beta_star),
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adaptive::{AlgoConfig, Variant};

    fn spec() -> ExperimentSpec {
        ExperimentSpec {
            system: SystemSpec::Sparse { taps: 8, nonzeros: 2 },
            algorithms: vec![
                AlgoConfig::new(Variant::Nsaf, 0.5),
                AlgoConfig::new(Variant::L1Qnsaf, 0.5).with_intensity(1e-4),
            ],
            frames: 100,
            runs: 2,
            ensemble: 500,
            calibration_samples: Some(20_000),
            ..ExperimentSpec::default()
        }
    }

    #[test]
    fn axis_parsing_and_application() {
        assert_eq!("Beta".parse::<SweepAxis>().unwrap(), SweepAxis::Beta);
        assert!("rho".parse::<SweepAxis>().is_err());
        let s = apply_axis(&spec(), SweepAxis::Beta, 3e-4).unwrap();
        assert_eq!(s.algorithms[0].intensity, 0.0);
        assert_eq!(s.algorithms[1].intensity, 3e-4);
        let s = apply_axis(&spec(), SweepAxis::Mu, 0.1).unwrap();
        assert!(s.algorithms.iter().all(|a| a.step_size == 0.1));
        let s = apply_axis(&spec(), SweepAxis::Q, 3.0).unwrap();
        assert_eq!(s.system, SystemSpec::Sparse { taps: 8, nonzeros: 3 });
        assert!(apply_axis(&spec(), SweepAxis::Q, 2.5).is_err());
    }

    #[test]
    fn theory_sweep_has_interior_step_size_optimum() {
        let mut s = spec();
        s.algorithms.truncate(1);
        s.algorithms[0] = AlgoConfig::new(Variant::L1Qnsaf, 0.5).with_intensity(1e-3);
        let mus = [0.02, 0.1, 0.3, 0.6, 1.0];
        let rows = sweep(&s, SweepAxis::Mu, &mus, false, true).unwrap();
        let msd: Vec<f64> = rows.iter().map(|r| r.theory_steady_db.unwrap()).collect();
        let best = msd.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert!(best > 0 && best < mus.len() - 1, "{msd:?}");
    }

    #[test]
    fn simulation_rows_per_algorithm() {
        let rows = sweep(&spec(), SweepAxis::Beta, &[0.0, 1e-4], true, false).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.sim_steady_db.is_some() && r.theory_steady_db.is_none()));
    }
}
