use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::adaptive::{op_count, update_fullband, update_unified, AlgoConfig, FilterState, OpCount};
use crate::error::{Error, Result};
use crate::filterbank::{AnalysisBank, Analyzer, DelayLine};
use crate::rng::{derive_seed, stream_rng, Substream};
use crate::signals::{calibrate_noise, default_calibration_samples, NoiseModel, SparseSystem};
use crate::to_db;

use super::spec::ExperimentSpec;

/// Environment variable capping run-level parallelism (`0` or unset = all cores).
pub const THREADS_ENV: &str = "SAF_THREADS";

/// Averaged learning curve of one algorithm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlgoCurve {
    pub name: String,
    pub config: AlgoConfig,
    /// `10 log10` of the run-averaged MSD, one value per frame.
    pub msd_db: Vec<f64>,
    /// Mean over the steady window, in dB.
    pub steady_msd_db: f64,
    /// Standard error of the steady mean across runs, in dB about the mean.
    pub steady_stderr_db: f64,
    /// Run-averaged `β(k)` for adaptive-intensity filters.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_traj: Option<Vec<f64>>,
    pub ops: OpCount,
    /// Steady-window mean of each run (linear).
    #[serde(skip)]
    pub steady_msd_runs: Vec<f64>,
}

/// Seeds and configuration sufficient to reproduce a result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub version: &'static str,
    pub seed: u64,
    pub runs: usize,
    pub run_seeds: Vec<u64>,
    pub steady_window: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shift_frame: Option<usize>,
    /// Noise level of the shared system (absent when systems are re-drawn).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_variance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub system: Option<Vec<f64>>,
    pub config: ExperimentSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub frames: usize,
    pub curves: Vec<AlgoCurve>,
    pub manifest: Manifest,
}

impl RunResult {
    pub fn curve(&self, name: &str) -> Option<&AlgoCurve> {
        self.curves.iter().find(|c| c.name == name)
    }
}

/// Weight-error vectors `w° - w(k)` captured at chosen frames:
/// `[checkpoint][algorithm][run]`.
pub type Snapshots = Vec<Vec<Vec<Vec<f64>>>>;

/// Bank, shared system and noise resolved from a spec.
pub(crate) struct Prepared {
    pub bank: AnalysisBank,
    pub system: Option<(SparseSystem, NoiseModel)>,
    pub calibration_samples: Option<usize>,
}

pub(crate) fn prepare(spec: &ExperimentSpec) -> Result<Prepared> {
    spec.validate()?;
    let bank = spec.bank.build()?;
    let system = if spec.redraw_system && spec.system.is_random() {
        None
    } else {
        Some(shared_system(spec)?)
    };
    Ok(Prepared {
        bank,
        system,
        calibration_samples: spec.calibration_samples,
    })
}

/// System drawn from the master seed, with its calibrated noise.
pub fn shared_system(spec: &ExperimentSpec) -> Result<(SparseSystem, NoiseModel)> {
    system_for_seed(spec, spec.seed, spec.calibration_samples)
}

fn system_for_seed(spec: &ExperimentSpec, seed: u64, samples: Option<usize>) -> Result<(SparseSystem, NoiseModel)> {
    let system = spec.system.build(seed)?;
    let noise = if spec.snr_db == f64::INFINITY {
        NoiseModel::silent()
    } else {
        let samples = samples.unwrap_or_else(|| default_calibration_samples(system.len()));
        calibrate_noise(&system, &spec.source.with_seed(seed), spec.snr_db, samples)?
    };
    Ok((system, noise))
}

fn run_seed(spec: &ExperimentSpec, run: usize) -> u64 {
    derive_seed(spec.seed, run as u64)
}

/// Per-run raw output.
struct RunTrace {
    /// `[algorithm][frame]`, linear.
    msd: Vec<Vec<f64>>,
    /// `[algorithm][frame]`, empty for fixed-intensity filters.
    beta: Vec<Vec<f64>>,
    /// `[checkpoint][algorithm]`.
    snapshots: Vec<Vec<Vec<f64>>>,
}

fn weight_error(system: &SparseSystem, w: &[f64]) -> Vec<f64> {
    system.weights().iter().zip(w).map(|(a, b)| a - b).collect()
}

fn run_once(spec: &ExperimentSpec, prep: &Prepared, run: usize, checkpoints: &[usize]) -> Result<RunTrace> {
    let seed = run_seed(spec, run);
    let (mut system, noise) = match &prep.system {
        Some(shared) => shared.clone(),
        None => system_for_seed(spec, seed, prep.calibration_samples).map_err(|e| e.in_run(run, 0))?,
    };
    let m = system.len();
    let n = prep.bank.subbands();
    let frames = spec.frames;
    let shift = spec.tracking.as_ref().map(|t| (t.frame(frames), t.taps));

    let mut input = spec.source.with_seed(seed).open().map_err(|e| e.in_run(run, 0))?;
    let mut noise_rng: ChaCha20Rng = stream_rng(seed, Substream::Noise);
    let sigma = noise.std_dev();
    let mut analyzer = Analyzer::new(prep.bank.clone(), m)?;
    let mut line = DelayLine::new(m);

    let mut states = Vec::with_capacity(spec.algorithms.len());
    for a in &spec.algorithms {
        let mut s = FilterState::new(m, n, a)?;
        if spec.start_at_optimum {
            s = s.with_weights(system.weights().to_vec())?;
        }
        states.push(s);
    }
    let algos = spec.algorithms.len();
    let mut msd = vec![Vec::with_capacity(frames); algos];
    let mut beta: Vec<Vec<f64>> = spec
        .algorithms
        .iter()
        .map(|a| if a.adaptive_beta { Vec::with_capacity(frames) } else { Vec::new() })
        .collect();
    let mut snapshots = vec![Vec::new(); checkpoints.len()];
    let capture = |k: usize, states: &[FilterState], system: &SparseSystem, snapshots: &mut Vec<Vec<Vec<f64>>>| {
        for (c, _) in checkpoints.iter().enumerate().filter(|(_, &f)| f == k) {
            snapshots[c] = states.iter().map(|s| weight_error(system, s.weights())).collect();
        }
    };

    let mut x_block = vec![0.0; n];
    let mut d_block = vec![0.0; n];
    for k in 0..frames {
        if let Some((at, taps)) = shift {
            if k == at {
                system = system.shifted(taps);
            }
        }
        for (a, s) in states.iter().enumerate() {
            msd[a].push(system.deviation(s.weights()));
        }
        capture(k, &states, &system, &mut snapshots);

        input.fill(&mut x_block).map_err(|e| e.in_run(run, k))?;
        for (x, d) in x_block.iter().zip(d_block.iter_mut()) {
            line.push(*x);
            let eta: f64 = if sigma > 0.0 {
                sigma * noise_rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            *d = system.output(line.window()) + eta;
            for (s, a) in states.iter_mut().zip(&spec.algorithms) {
                if a.variant.is_fullband() {
                    update_fullband(s, line.window(), *d, a, &mut ()).map_err(|e| e.in_run(run, k))?;
                }
            }
        }
        let frame = analyzer.analyze(&x_block, &d_block).map_err(|e| e.in_run(run, k))?;
        for (a, (s, cfg)) in states.iter_mut().zip(&spec.algorithms).enumerate() {
            if !cfg.variant.is_fullband() {
                let b = update_unified(s, &frame, cfg, &mut ()).map_err(|e| e.in_run(run, k))?;
                if cfg.adaptive_beta {
                    beta[a].push(b);
                }
            }
        }
    }
    capture(frames, &states, &system, &mut snapshots);
    Ok(RunTrace { msd, beta, snapshots })
}

/// Thread pool sized by `SAF_THREADS`.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::invalid(THREADS_ENV, format!("expected a thread count, got {v:?}")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid(THREADS_ENV, e.to_string()))
}

/// Monte-Carlo learning curves for every configured algorithm.
pub fn run_simulation(spec: &ExperimentSpec) -> Result<RunResult> {
    run_simulation_with_snapshots(spec, &[]).map(|(r, _)| r)
}

/// As [`run_simulation`], additionally capturing `w° - w(k)` at each frame
/// in `checkpoints` (`k = frames` means after the final update).
pub fn run_simulation_with_snapshots(spec: &ExperimentSpec, checkpoints: &[usize]) -> Result<(RunResult, Snapshots)> {
    if let Some(&k) = checkpoints.iter().find(|&&k| k > spec.frames) {
        return Err(Error::invalid("checkpoint", format!("frame {k} lies beyond the run length {}", spec.frames)));
    }
    let prep = prepare(spec)?;
    let runs = spec.effective_runs();
    let frames = spec.frames;
    let algos = spec.algorithms.len();
    let window = spec.steady_window();
    let pool = thread_pool()?;
    let chunk = (pool.current_num_threads() * 4).max(1);

    let mut msd_sum = vec![vec![0.0; frames]; algos];
    let mut beta_sum = vec![vec![0.0; frames]; algos];
    let mut steady_runs = vec![Vec::with_capacity(runs); algos];
    let mut snapshots: Snapshots = vec![vec![Vec::with_capacity(runs); algos]; checkpoints.len()];

    let mut start = 0;
    while start < runs {
        let end = (start + chunk).min(runs);
        let traces: Vec<Result<RunTrace>> =
            pool.install(|| (start..end).into_par_iter().map(|r| run_once(spec, &prep, r, checkpoints)).collect());
        // fold in run order so the sums do not depend on scheduling
        for trace in traces {
            let trace = trace?;
            for a in 0..algos {
                for (acc, v) in msd_sum[a].iter_mut().zip(&trace.msd[a]) {
                    *acc += v;
                }
                for (acc, v) in beta_sum[a].iter_mut().zip(&trace.beta[a]) {
                    *acc += v;
                }
                let tail = &trace.msd[a][frames - window..];
                steady_runs[a].push(tail.iter().sum::<f64>() / window as f64);
            }
            for (c, snap) in trace.snapshots.into_iter().enumerate() {
                for (a, e) in snap.into_iter().enumerate() {
                    snapshots[c][a].push(e);
                }
            }
        }
        start = end;
    }

    let (m, n, l) = (
        prep.system
            .as_ref()
            .map(|(s, _)| s.len())
            .or(spec.system.taps())
            .unwrap_or_default(),
        prep.bank.subbands(),
        prep.bank.length(),
    );
    let scale = 1.0 / runs as f64;
    let curves = spec
        .algorithms
        .iter()
        .enumerate()
        .map(|(a, cfg)| {
            let mean: Vec<f64> = msd_sum[a].iter().map(|v| v * scale).collect();
            let steady = mean[frames - window..].iter().sum::<f64>() / window as f64;
            AlgoCurve {
                name: cfg.name(),
                config: cfg.clone(),
                msd_db: mean.iter().map(|&v| to_db(v)).collect(),
                steady_msd_db: to_db(steady),
                steady_stderr_db: stderr_db(&steady_runs[a]),
                beta_traj: cfg.adaptive_beta.then(|| beta_sum[a].iter().map(|v| v * scale).collect()),
                ops: op_count(cfg, m, n, l),
                steady_msd_runs: std::mem::take(&mut steady_runs[a]),
            }
        })
        .collect();

    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        seed: spec.seed,
        runs,
        run_seeds: (0..runs).map(|r| run_seed(spec, r)).collect(),
        steady_window: window,
        shift_frame: spec.tracking.as_ref().map(|t| t.frame(frames)),
        noise_variance: prep.system.as_ref().map(|(_, n)| n.variance),
        system: prep.system.as_ref().map(|(s, _)| s.weights().to_vec()),
        config: spec.clone(),
    };
    Ok((
        RunResult {
            frames,
            curves,
            manifest,
        },
        snapshots,
    ))
}

/// Half-width of a one-standard-error band around the mean, in dB.
fn stderr_db(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if !(mean > 0.0) {
        return 0.0;
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    10.0 * (1.0 + se / mean).log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adaptive::Variant;
    use crate::harness::spec::{BankSpec, Tracking};

    fn small_spec() -> ExperimentSpec {
        ExperimentSpec {
            algorithms: vec![
                AlgoConfig::new(Variant::Nsaf, 0.5),
                AlgoConfig::new(Variant::L1Qnsaf, 0.5).with_intensity(4e-4),
                AlgoConfig::new(Variant::Nlms, 0.5),
            ],
            frames: 200,
            runs: 3,
            calibration_samples: Some(20_000),
            ..ExperimentSpec::default()
        }
    }

    #[test]
    fn zero_msd_at_optimum_without_noise() {
        let spec = ExperimentSpec {
            algorithms: vec![AlgoConfig::new(Variant::Nsaf, 0.5)],
            frames: 1,
            runs: 1,
            snr_db: f64::INFINITY,
            start_at_optimum: true,
            ..ExperimentSpec::default()
        };
        let r = run_simulation(&spec).unwrap();
        assert_eq!(r.curves[0].msd_db, vec![crate::ZERO_DB_SENTINEL]);
    }

    #[test]
    fn deterministic_and_thread_independent() {
        let spec = small_spec();
        let a = run_simulation(&spec).unwrap();
        let b = run_simulation(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.curves[0].msd_db.len(), 200);
        // first frame is the unit-norm system itself
        assert!(a.curves.iter().all(|c| c.msd_db[0].abs() < 1e-12));
        assert!(a.curves.iter().all(|c| c.msd_db[199] < -15.0));
    }

    #[test]
    fn snapshots_match_checkpoints() {
        let spec = small_spec();
        let (r, snaps) = run_simulation_with_snapshots(&spec, &[0, 200]).unwrap();
        assert_eq!(snaps.len(), 2);
        assert_eq!(snaps[0][0].len(), 3);
        let w = r.manifest.system.clone().unwrap();
        assert_eq!(snaps[0][1][2], w);
        assert!(run_simulation_with_snapshots(&spec, &[201]).is_err());
    }

    #[test]
    fn tracking_shift_raises_msd() {
        let mut spec = small_spec();
        spec.frames = 400;
        spec.tracking = Some(Tracking { at: None, taps: 12 });
        let r = run_simulation(&spec).unwrap();
        for c in &r.curves {
            assert!(c.msd_db[200] > c.msd_db[199] + 10.0, "{}", c.name);
        }
    }

    #[test]
    fn redrawn_systems_and_errors_carry_context() {
        let mut spec = small_spec();
        spec.redraw_system = true;
        let r = run_simulation(&spec).unwrap();
        assert!(r.manifest.system.is_none());
        spec.bank = BankSpec::new(4);
        spec.source = crate::signals::SignalSource::pcm("/nonexistent/input.pcm");
        let err = run_simulation(&spec).unwrap_err();
        assert!(err.to_string().contains("run 0"), "{err}");
    }
}
