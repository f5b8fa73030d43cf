use serde::Serialize;

use crate::adaptive::{AlgoConfig, Penalty};
use crate::error::{Error, Result};
use crate::signals::{NoiseModel, SparseSystem};
use crate::theory::{
    build_variant_matrices, estimate_moments, msd, stability_bounds, transient_step, AttractorForm, InputMoments,
    StabilityBounds, SteadySolver, TransientState,
};
use crate::to_db;

use super::simulate::shared_system;
use super::spec::ExperimentSpec;

/// Steady-state summary of one algorithm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SteadyReport {
    pub msd_inf_db: f64,
    pub sigma_z2: f64,
    pub sigma_nz2: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_star: Option<f64>,
    /// `[mean, mean-square]` step-size limits.
    pub mu_bounds: [f64; 2],
    pub clamp_count: u64,
    pub iterations: usize,
    pub converged: bool,
    /// Off-diagonal subband cross terms are neglected in the fixed point.
    pub diagonal_approximation: bool,
}

/// Theory output for one configured algorithm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryCurve {
    pub name: String,
    pub config: AlgoConfig,
    /// Predicted `MSD(k)` in dB, `k = 0..frames`; empty when not modelled.
    pub msd_db: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steady: Option<SteadyReport>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TheoryResult {
    pub frames: usize,
    pub bounds: StabilityBounds,
    pub system: Vec<f64>,
    pub noise: NoiseModel,
    pub ensemble: usize,
    pub curves: Vec<TheoryCurve>,
    #[serde(skip)]
    pub moments: InputMoments,
}

impl TheoryResult {
    pub fn curve(&self, name: &str) -> Option<&TheoryCurve> {
        self.curves.iter().find(|c| c.name == name)
    }
}

/// Input moments, system and noise for the theory of `spec`.
pub fn theory_inputs(spec: &ExperimentSpec) -> Result<(InputMoments, SparseSystem, NoiseModel)> {
    spec.validate()?;
    let (system, noise) = shared_system(spec)?;
    let bank = spec.bank.build()?;
    let moments = estimate_moments(&bank, &spec.source.with_seed(spec.seed), &noise, system.len(), spec.ensemble)?;
    Ok((moments, system, noise))
}

/// Transient curves and steady-state reports for every subband algorithm.
pub fn run_theory(spec: &ExperimentSpec) -> Result<TheoryResult> {
    let (moments, system, noise) = theory_inputs(spec)?;
    run_theory_with(spec, moments, system, noise)
}

/// As [`run_theory`] with precomputed inputs.
pub fn run_theory_with(
    spec: &ExperimentSpec,
    moments: InputMoments,
    system: SparseSystem,
    noise: NoiseModel,
) -> Result<TheoryResult> {
    let bounds = stability_bounds(&moments)?;
    let mut curves = Vec::with_capacity(spec.algorithms.len());
    for cfg in &spec.algorithms {
        curves.push(theory_for(spec, cfg, &moments, &system, &bounds)?);
    }
    Ok(TheoryResult {
        frames: spec.frames,
        bounds,
        system: system.weights().to_vec(),
        noise,
        ensemble: moments.ensemble_size(),
        curves,
        moments,
    })
}

fn theory_for(
    spec: &ExperimentSpec,
    cfg: &AlgoConfig,
    moments: &InputMoments,
    system: &SparseSystem,
    bounds: &StabilityBounds,
) -> Result<TheoryCurve> {
    let mut out = TheoryCurve {
        name: cfg.name(),
        config: cfg.clone(),
        msd_db: Vec::new(),
        steady: None,
        warnings: Vec::new(),
    };
    if cfg.variant.is_fullband() {
        out.warnings.push(format!("{} is fullband: no subband model", cfg.variant));
        return Ok(out);
    }
    if cfg.adaptive_beta {
        out.warnings.push("adaptive intensity is not modelled".into());
        return Ok(out);
    }
    if cfg.regularizer != 0.0 {
        out.warnings.push("regularizer ignored by the model".into());
    }
    if spec.redraw_system {
        out.warnings.push("model conditioned on the master-seed system".into());
    }
    let mu = cfg.step_size;
    if mu >= bounds.mean_square {
        out.warnings.push(format!(
            "μ = {mu} is outside the mean-square stability bound {:.6}",
            bounds.mean_square
        ));
    }
    let form = match cfg.variant.is_sparse() {
        true => AttractorForm::of(cfg.variant)?,
        false => AttractorForm::Quasi,
    };
    let penalty = cfg.penalty();
    let beta = if penalty.is_some() { cfg.intensity } else { 0.0 };
    let matrices = build_variant_matrices(moments, mu, form)?;

    // transient recursion, following the configured shift if any
    let noise_d = moments.noise_d();
    let w0 = if spec.start_at_optimum {
        system.weights().to_vec()
    } else {
        vec![0.0; system.len()]
    };
    let mut current = system.clone();
    let shift = spec.tracking.as_ref().map(|t| (t.frame(spec.frames), t.taps));
    let mut state = TransientState::initial(current.weights(), &w0)?;
    out.msd_db.reserve(spec.frames);
    for k in 0..spec.frames {
        if let Some((at, taps)) = shift {
            if k == at {
                let next = current.shifted(taps);
                let delta: Vec<f64> = next.weights().iter().zip(current.weights()).map(|(a, b)| a - b).collect();
                state.shift_optimum(&delta)?;
                current = next;
            }
        }
        out.msd_db.push(to_db(msd(&state)));
        state = transient_step(&state, &matrices, &noise_d, moments.mean_a(), beta, penalty, current.weights())?;
    }

    let solver = match SteadySolver::new(moments, &matrices) {
        Ok(s) => s,
        Err(Error::ModelInvalid(why)) => {
            out.warnings.push(why);
            return Ok(out);
        }
        Err(e) => return Err(e),
    };
    let p = penalty.unwrap_or(Penalty::L1);
    let steady = match solver.steady_state_msd(&current, beta, p) {
        Ok(s) => s,
        Err(Error::ModelInvalid(why)) => {
            out.warnings.push(why);
            return Ok(out);
        }
        Err(e) => return Err(e),
    };
    if !steady.converged {
        out.warnings.push(format!("fixed point not converged after {} iterations", steady.iterations));
    }
    let beta_star = match penalty {
        Some(p) => match solver.beta_star(&current, p) {
            Ok(b) => Some(b.beta_star),
            Err(Error::ModelInvalid(why)) => {
                out.warnings.push(why);
                None
            }
            Err(e) => return Err(e),
        },
        None => None,
    };
    out.steady = Some(SteadyReport {
        msd_inf_db: steady.msd_db,
        sigma_z2: steady.sigma_z2,
        sigma_nz2: steady.sigma_nz2,
        beta_star,
        mu_bounds: [bounds.mean, bounds.mean_square],
        clamp_count: state.clamp_count,
        iterations: steady.iterations,
        converged: steady.converged,
        diagonal_approximation: true,
    });
    Ok(out)
}
