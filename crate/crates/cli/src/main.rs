use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use sparse_saf::adaptive::{AlgoConfig, Variant};
use sparse_saf::filterbank::{AnalysisBank, PARAUNITARY_TOLERANCE};
use sparse_saf::harness::{
    compare_curves, emit_gaussianity, emit_simulation, emit_sweep, emit_theory, gaussianity_check, read_column,
    run_simulation, run_theory, sweep, ExperimentSpec, SweepAxis,
};

/// Sparsity-aware subband adaptive filter experiments.
#[derive(Parser)]
#[command(name = "saf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design a cosine-modulated analysis bank and write it as JSON.
    DesignBank {
        #[arg(long, default_value_t = 4)]
        subbands: usize,
        /// Filter length (default 8 × subbands).
        #[arg(long)]
        length: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Monte-Carlo MSD curves.
    Simulate(Common),
    /// Model MSD curves and steady-state reports.
    Theory(Common),
    /// Steady-state reports only (no transient curves).
    Steady(Common),
    /// Steady-state MSD over a grid of β, μ or Q.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated grid values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long)]
        no_simulation: bool,
        #[arg(long)]
        no_theory: bool,
    },
    /// Weight-error histograms and normality flags across runs.
    Hist {
        #[command(flatten)]
        common: Common,
        /// Zero-based tap indices.
        #[arg(long, value_delimiter = ',', default_value = "4,9")]
        coefficients: Vec<usize>,
        /// Frames at which to take the snapshots.
        #[arg(long = "at", value_delimiter = ',', default_value = "80,500")]
        at: Vec<usize>,
        #[arg(long, default_value_t = 40)]
        bins: usize,
    },
    /// Join a simulated and a theoretical curve and report their gap.
    Compare {
        #[arg(long)]
        simulation: PathBuf,
        /// Column of the simulation CSV (an algorithm name).
        #[arg(long)]
        column: String,
        #[arg(long)]
        theory: PathBuf,
        /// Frames ignored at the start (default: the first 10%).
        #[arg(long)]
        skip: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

/// Experiment file plus overrides.
#[derive(Args)]
struct Common {
    /// JSON experiment description; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    snr_db: Option<f64>,
    #[arg(long)]
    subbands: Option<usize>,
    /// Replace the algorithm list with this single variant.
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long, allow_negative_numbers = true)]
    mu: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    beta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    eps: Option<f64>,
}

impl Common {
    fn spec(&self) -> Result<ExperimentSpec> {
        let mut spec = match &self.config {
            Some(p) => ExperimentSpec::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => ExperimentSpec::default(),
        };
        if let Some(v) = self.seed {
            spec.seed = v;
        }
        if let Some(v) = &self.out {
            spec.outputs = v.clone();
        }
        if let Some(v) = self.runs {
            spec.runs = v;
        }
        if let Some(v) = self.frames {
            spec.frames = v;
        }
        if let Some(v) = self.snr_db {
            spec.snr_db = v;
        }
        if let Some(v) = self.subbands {
            spec.bank.subbands = v;
            spec.bank.length = None;
        }
        if let Some(v) = self.variant {
            let mut cfg = AlgoConfig::new(v, self.mu.unwrap_or(0.5));
            if v.is_reweighted() {
                cfg.shrinkage = 0.05;
            }
            spec.algorithms = vec![cfg];
        }
        for a in &mut spec.algorithms {
            if let Some(mu) = self.mu {
                a.step_size = mu;
            }
            if let Some(beta) = self.beta {
                if a.variant.is_sparse() && !a.adaptive_beta {
                    a.intensity = beta;
                }
            }
            if let Some(eps) = self.eps {
                if a.variant.is_reweighted() {
                    a.shrinkage = eps;
                }
            }
        }
        if spec.algorithms.is_empty() {
            bail!("no algorithms configured: pass --variant or list them in the config file");
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn report(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn write_spec(spec: &ExperimentSpec) -> Result<()> {
    std::fs::create_dir_all(&spec.outputs).with_context(|| format!("creating {}", spec.outputs.display()))?;
    let path = spec.outputs.join("config.json");
    std::fs::write(&path, spec.to_json()?).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn design_bank(subbands: usize, length: Option<usize>, out: &Path) -> Result<()> {
    let length = length.unwrap_or(8 * subbands);
    let bank = AnalysisBank::design(subbands, length)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join(format!("bank_n{subbands}_l{length}.json"));
    bank.save(&path)?;
    let err = bank.paraunitarity_error();
    println!("paraunitarity error {err:.3e} (tolerance {PARAUNITARY_TOLERANCE:.0e})");
    report(&[path]);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::DesignBank { subbands, length, out } => design_bank(subbands, length, &out)?,
        Command::Simulate(c) => {
            let spec = c.spec()?;
            let r = run_simulation(&spec)?;
            write_spec(&spec)?;
            for curve in &r.curves {
                println!(
                    "{:<14} steady {:8.2} dB ± {:.2}",
                    curve.name, curve.steady_msd_db, curve.steady_stderr_db
                );
            }
            report(&emit_simulation(&r, &spec.outputs)?);
        }
        Command::Theory(c) => {
            let spec = c.spec()?;
            let r = run_theory(&spec)?;
            write_spec(&spec)?;
            print_theory(&r);
            report(&emit_theory(&r, &spec.outputs)?);
        }
        Command::Steady(c) => {
            let mut spec = c.spec()?;
            spec.frames = 1;
            spec.tracking = None;
            let r = run_theory(&spec)?;
            print_theory(&r);
            let path = spec.outputs.join("steady.json");
            std::fs::create_dir_all(&spec.outputs)?;
            let steady: Vec<_> = r.curves.iter().map(|c| (&c.name, &c.steady, &c.warnings)).collect();
            std::fs::write(&path, serde_json::to_string_pretty(&steady)? + "\n")
                .with_context(|| format!("writing {}", path.display()))?;
            report(&[path]);
        }
        Command::Sweep {
            common,
            axis,
            values,
            no_simulation,
            no_theory,
        } => {
            let spec = common.spec()?;
            let rows = sweep(&spec, axis, &values, !no_simulation, !no_theory)?;
            let fmt = |v: Option<f64>| v.map(|x| format!("{x:8.2}")).unwrap_or_else(|| "       -".into());
            println!("{:>10} {:<14} {:>8} {:>8}", axis, "algorithm", "sim dB", "model dB");
            for r in &rows {
                println!("{:>10.3e} {:<14} {} {}", r.value, r.algorithm, fmt(r.sim_steady_db), fmt(r.theory_steady_db));
            }
            report(&[emit_sweep(&rows, &spec.outputs)?]);
        }
        Command::Hist {
            common,
            coefficients,
            at,
            bins,
        } => {
            let spec = common.spec()?;
            let r = gaussianity_check(&spec, &coefficients, &at, bins)?;
            for c in &r.checkpoints {
                println!(
                    "{:<14} m={:<3} k={:<5} skew {:+.3} excess kurtosis {:+.3} {}",
                    c.algorithm,
                    c.coefficient,
                    c.frame,
                    c.stats.skewness,
                    c.stats.excess_kurtosis,
                    if c.stats.passes() { "ok" } else { "NOT GAUSSIAN" }
                );
            }
            report(&emit_gaussianity(&r, &spec.outputs)?);
        }
        Command::Compare {
            simulation,
            column,
            theory,
            skip,
            out,
        } => {
            let sim = read_column(&simulation, &column)?;
            let th = read_column(&theory, "msd_db_theory")?;
            let skip = skip.unwrap_or(sim.len().min(th.len()) / 10);
            let c = compare_curves(&sim, &th, skip, Some(&out))?;
            println!(
                "{} frames, skipping {}: max |diff| {:.3} dB, mean |diff| {:.3} dB",
                c.frames, c.skip, c.max_abs_diff_db, c.mean_abs_diff_db
            );
            report(&[out.join("compare.csv")]);
        }
    }
    Ok(())
}

fn print_theory(r: &sparse_saf::harness::TheoryResult) {
    println!(
        "step-size bounds: mean {:.4}, mean-square {:.4}",
        r.bounds.mean, r.bounds.mean_square
    );
    for c in &r.curves {
        match &c.steady {
            Some(s) => println!(
                "{:<14} MSD(∞) {:8.2} dB{}",
                c.name,
                s.msd_inf_db,
                s.beta_star.map(|b| format!(", β* {b:.3e}")).unwrap_or_default()
            ),
            None => println!("{:<14} no steady-state model", c.name),
        }
        for w in &c.warnings {
            eprintln!("warning: {}: {w}", c.name);
        }
    }
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
