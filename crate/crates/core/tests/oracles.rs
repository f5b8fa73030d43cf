//! Checks against independent oracles: brute-force estimates, long simulations
//! and hand-written recursions that do not share code with the library.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use sparse_saf::adaptive::{update_unified, AlgoConfig, FilterState, Penalty, Variant};
use sparse_saf::filterbank::{AnalysisBank, Analyzer, DelayLine};
use sparse_saf::harness::{run_simulation, run_theory, ExperimentSpec, SystemSpec, Tracking};
use sparse_saf::rng::{stream_rng, Substream};
use sparse_saf::signals::{calibrate_noise, default_calibration_samples, gen_sparse_system, NoiseModel, SignalSource};
use sparse_saf::theory::{
    build_variant_matrices, erf, estimate_moments, gaussian_moments_case1, spectral_radius_f1, stability_bounds,
    AttractorForm, SteadySolver,
};

#[test]
fn noise_calibration_matches_long_run_power() {
    let sys = gen_sparse_system(32, 2, 11).unwrap();
    let model = calibrate_noise(&sys, &SignalSource::ar1(0.9, 4), 30.0, default_calibration_samples(32)).unwrap();

    // independent AR(1) recursion on a different generator
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut u = vec![0.0; 32];
    let mut x = 0.0;
    for _ in 0..1000 {
        x = 0.9 * x + rng.sample::<f64, _>(StandardNormal);
    }
    let mut power = 0.0;
    let n = 1_000_000;
    for _ in 0..n {
        x = 0.9 * x + rng.sample::<f64, _>(StandardNormal);
        u.rotate_right(1);
        u[0] = x;
        let y: f64 = u.iter().zip(sys.weights()).map(|(a, b)| a * b).sum();
        power += y * y;
    }
    let oracle = power / n as f64 / 1e3;
    assert!((model.variance / oracle - 1.0).abs() < 0.02, "{} vs {oracle}", model.variance);
}

#[test]
fn support_positions_are_uniform() {
    let (m, q, seeds) = (32usize, 2usize, 10_000u64);
    let mut counts = vec![0f64; m];
    for s in 0..seeds {
        for &k in gen_sparse_system(m, q, s).unwrap().nonzero_indices() {
            counts[k] += 1.0;
        }
    }
    let expected = (q as u64 * seeds) as f64 / m as f64;
    let chi2: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
    // 99th percentile of chi-square with 31 degrees of freedom
    assert!(chi2 < 52.19, "chi2 = {chi2}");
}

#[test]
fn erf_and_price_identity() {
    assert!((erf(1.0) - 0.842_700_792_949_714_9).abs() < 1e-12);
    for sigma in [1e-3, 0.05, 0.7, 3.0] {
        let m = gaussian_moments_case1(0.4, 0.4, sigma * sigma);
        assert_eq!(m.abs, (2.0 / std::f64::consts::PI).sqrt() * sigma);
    }
}

fn example_moments(ensemble: usize) -> (sparse_saf::theory::InputMoments, sparse_saf::signals::SparseSystem) {
    let sys = gen_sparse_system(32, 2, 3).unwrap();
    let noise = calibrate_noise(&sys, &SignalSource::ar1(0.9, 3), 30.0, 200_000).unwrap();
    let bank = AnalysisBank::design(4, 32).unwrap();
    let mom = estimate_moments(&bank, &SignalSource::ar1(0.9, 3), &noise, 32, ensemble).unwrap();
    (mom, sys)
}

#[test]
fn f1_is_stable_inside_the_bound() {
    let (mom, _) = example_moments(2000);
    let b = stability_bounds(&mom).unwrap();
    assert!(b.mean_square > 0.0 && b.mean_square <= b.mean);
    for frac in [0.1, 0.5, 0.95] {
        let vm = build_variant_matrices(&mom, frac * b.mean_square, AttractorForm::Quasi).unwrap();
        let rho = spectral_radius_f1(&vm);
        assert!(rho < 1.0, "μ = {frac} bound: ρ = {rho}");
    }
    let vm = build_variant_matrices(&mom, 1.05 * b.from_l_psi * 2.0, AttractorForm::Quasi).unwrap();
    assert!(spectral_radius_f1(&vm) >= 1.0);
}

#[test]
fn half_beta_star_beats_nsaf_in_the_model() {
    let (mom, sys) = example_moments(3000);
    let vm = build_variant_matrices(&mom, 0.5, AttractorForm::Quasi).unwrap();
    let solver = SteadySolver::new(&mom, &vm).unwrap();
    for p in [Penalty::L1, Penalty::Reweighted { eps: 0.05 }] {
        let star = solver.beta_star(&sys, p).unwrap().beta_star;
        let base = solver.steady_state_msd(&sys, 0.0, p).unwrap().msd;
        let half = solver.steady_state_msd(&sys, 0.5 * star, p).unwrap().msd;
        assert!(base > half, "{p:?}: {base} <= {half}");
    }
}

#[test]
fn steady_bias_matches_long_simulation() {
    let (m, n, mu, beta) = (32usize, 4usize, 0.5, 2e-3);
    let sys = gen_sparse_system(m, 2, 3).unwrap();
    let src = SignalSource::ar1(0.9, 3);
    let noise = calibrate_noise(&sys, &src, 30.0, 200_000).unwrap();
    let bank = AnalysisBank::design(n, 8 * n).unwrap();
    let mom = estimate_moments(&bank, &src, &noise, m, 5000).unwrap();
    let vm = build_variant_matrices(&mom, mu, AttractorForm::Quasi).unwrap();
    let predicted = SteadySolver::new(&mom, &vm).unwrap().steady_state_mean(&sys, beta, Penalty::L1);

    let cfg = AlgoConfig::new(Variant::L1Qnsaf, mu).with_intensity(beta);
    let mut state = FilterState::new(m, n, &cfg).unwrap();
    let mut analyzer = Analyzer::new(bank, m).unwrap();
    let mut input = src.with_seed(77).open().unwrap();
    let mut eta = stream_rng(77, Substream::Noise);
    let mut line = DelayLine::new(m);
    let (warmup, frames) = (2000usize, 50_000usize);
    let mut mean = vec![0.0; m];
    let mut x = vec![0.0; n];
    let mut d = vec![0.0; n];
    for k in 0..warmup + frames {
        input.fill(&mut x).unwrap();
        for (xi, di) in x.iter().zip(d.iter_mut()) {
            line.push(*xi);
            *di = sys.output(line.window()) + noise.std_dev() * eta.sample::<f64, _>(StandardNormal);
        }
        let frame = analyzer.analyze(&x, &d).unwrap();
        update_unified(&mut state, &frame, &cfg, &mut ()).unwrap();
        if k >= warmup {
            for (acc, w) in mean.iter_mut().zip(state.weights()) {
                *acc += w / frames as f64;
            }
        }
    }
    for &k in sys.nonzero_indices() {
        let sim_bias = sys.weights()[k] - mean[k];
        let th_bias = sys.weights()[k] - predicted[k];
        assert!(
            ((sim_bias - th_bias) / th_bias).abs() < 0.15,
            "tap {k}: simulated bias {sim_bias:.3e}, predicted {th_bias:.3e}"
        );
    }
}

#[test]
fn tracking_shift_recovers_and_beta_decays() {
    let spec = ExperimentSpec {
        system: SystemSpec::Sparse { taps: 32, nonzeros: 2 },
        algorithms: vec![
            AlgoConfig::new(Variant::Nsaf, 0.5),
            AlgoConfig::new(Variant::L1Qnsaf, 0.5).with_adaptive_beta(1e-3),
        ],
        frames: 3000,
        runs: 100,
        tracking: Some(Tracking { at: None, taps: 12 }),
        seed: 5,
        ..ExperimentSpec::default()
    };
    let r = run_simulation(&spec).unwrap();
    let shift = 1500;
    for c in &r.curves {
        let ma = |k: usize| c.msd_db[k..k + 10].iter().sum::<f64>() / 10.0;
        let pre = ma(shift - 10);
        let peak = ma(shift);
        assert!(peak > pre + 10.0, "{}: no spike", c.name);
        // trend falls back: each 100-frame step lower until the floor is reached
        let floor = c.steady_msd_db;
        let mut prev = peak;
        for k in (shift + 100..2900).step_by(100) {
            let now = ma(k);
            if prev > floor + 2.0 {
                assert!(now < prev, "{} rises at {k}: {prev} -> {now}", c.name);
            }
            prev = now;
        }
        assert!((ma(2990) - pre).abs() < 1.5, "{}: {} vs {pre}", c.name, ma(2990));
    }
    let beta = r.curves[1].beta_traj.as_ref().unwrap();
    assert_eq!(beta[0], 0.0);
    let early = beta[1..100].iter().sum::<f64>() / 99.0;
    let late = beta[1300..1500].iter().sum::<f64>() / 200.0;
    assert!(late < early, "β does not decay: {early} -> {late}");
    // refreshing ŵ every ⌊M/N⌋ frames leaves ripples in the steady trajectory
    let tail = &beta[1300..1500];
    let spread = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - tail.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(spread > 0.1 * late, "flat β: spread {spread}, level {late}");
}

#[test]
fn theory_needs_no_noise_model_for_silent_runs() {
    let spec = ExperimentSpec {
        snr_db: f64::INFINITY,
        algorithms: vec![AlgoConfig::new(Variant::Nsaf, 0.5)],
        frames: 200,
        ensemble: 1000,
        start_at_optimum: true,
        calibration_samples: Some(20_000),
        ..ExperimentSpec::default()
    };
    let th = run_theory(&spec).unwrap();
    assert_eq!(th.noise, NoiseModel::silent());
    assert!(th.curves[0].msd_db.iter().all(|v| *v < -300.0));
}
