use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use frappe_core::cone::{ConeSpec, Dominance};
use frappe_core::frappe::{RunConfig, Runner, Sampler, TraceRow};
use frappe_core::fw::{optimize_allocation, FwOptions};
use frappe_core::harness::{self, Experiment, RunRecord};
use frappe_core::objective::{ThresholdMode, ZMode};
use frappe_core::pareto::{candidate_pairs, pareto_set, PairMode};
use frappe_core::{Error, Result};

#[derive(Parser)]
#[command(name = "frappe", about = "Pareto set identification under preference cones")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the Pareto set and a dominating witness for every other arm.
    Pareto {
        /// Registry name (covboost, gaussian-rho[:rho]) or instance file.
        #[arg(long)]
        instance: String,
        /// Override the instance cone: `orthant` or `angle:LO,HI` (radians).
        #[arg(long)]
        cone: Option<String>,
        /// Also write `arm,pareto,witness` rows to this file.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Optimal allocation and inverse characteristic time by Frank-Wolfe.
    Oracle {
        #[arg(long)]
        instance: String,
        #[arg(long, default_value_t = 10_000)]
        iters: usize,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value = "rays")]
        zmode: ZMode,
    },
    /// One seeded identification run.
    Run {
        #[arg(long)]
        instance: String,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, default_value = "frappe")]
        sampler: Sampler,
        #[arg(long, default_value = "practical")]
        threshold: ThresholdMode,
        #[arg(long, default_value = "rays")]
        zmode: ZMode,
        #[arg(long, default_value = "nonpareto")]
        pairs: PairMode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1_000_000)]
        max_t: u64,
        /// Record a trace row every N steps (0 disables).
        #[arg(long, default_value_t = 0)]
        trace_every: u64,
        /// Result CSV; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Trace CSV; printed to stdout when absent and tracing is on.
        #[arg(long)]
        trace_out: Option<PathBuf>,
    },
    /// Batch experiments writing runs.csv, aggregate.csv and plot.script.
    Bench {
        #[arg(long)]
        experiment: Experiment,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, default_value_t = 50)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated subset of frappe,uniform,oracle.
        #[arg(long, value_delimiter = ',')]
        samplers: Option<Vec<Sampler>>,
    },
}

fn parse_cone(s: &str) -> Result<ConeSpec> {
    if s == "orthant" {
        return Ok(ConeSpec::Orthant);
    }
    let bad = || Error::InvalidArgument(format!("cone must be `orthant` or `angle:LO,HI`, got `{s}`"));
    let rest = s.strip_prefix("angle:").ok_or_else(bad)?;
    let (lo, hi) = rest.split_once(',').ok_or_else(bad)?;
    Ok(ConeSpec::Angle {
        lo: lo.trim().parse().map_err(|_| bad())?,
        hi: hi.trim().parse().map_err(|_| bad())?,
    })
}

fn pareto_cmd(instance: &str, cone: Option<&str>, csv_path: Option<&PathBuf>) -> Result<()> {
    let (inst, mut c) = harness::load_instance(instance)?;
    if let Some(spec) = cone {
        c = parse_cone(spec)?.build(inst.objectives())?;
    }
    let p = pareto_set(inst.means(), &c)?;
    println!("pareto {p}");
    let mut rows = Vec::new();
    for a in 0..inst.arms() {
        let witness = if p.contains(a) {
            None
        } else {
            let mu = inst.mean(a);
            (0..inst.arms()).find(|&b| {
                b != a
                    && c.dominates(&mu, &inst.mean(b), Dominance::Weak).unwrap_or(false)
                    && !c.dominates(&inst.mean(b), &mu, Dominance::Weak).unwrap_or(false)
            })
        };
        match witness {
            Some(b) => println!("arm {a}: dominated by {b}"),
            None if p.contains(a) => println!("arm {a}: pareto"),
            None => return Err(Error::Internal(format!("arm {a} is dominated but has no witness"))),
        }
        rows.push((a, p.contains(a), witness));
    }
    if let Some(path) = csv_path {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["arm", "pareto", "witness"])?;
        for (a, inside, witness) in rows {
            let wit = witness.map(|b| b.to_string()).unwrap_or_default();
            w.write_record([a.to_string(), inside.to_string(), wit])?;
        }
        w.flush()?;
    }
    Ok(())
}

fn oracle_cmd(instance: &str, iters: usize, tol: f64, zmode: ZMode) -> Result<()> {
    let (inst, cone) = harness::load_instance(instance)?;
    let p = pareto_set(inst.means(), &cone)?;
    let pairs = candidate_pairs(&p, PairMode::NonPareto);
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("a single-arm instance has no allocation problem".into()));
    }
    let out = optimize_allocation(
        inst.means(),
        inst.covariance(),
        &cone,
        &pairs,
        &FwOptions { iters, gap_tol: tol, zmode },
    )?;
    let w: Vec<String> = out.allocation.as_slice().iter().map(|v| format!("{v:.6}")).collect();
    println!("omega_star {}", w.join(","));
    println!("tinv {}", out.value);
    let stdout = std::io::stdout();
    let mut csv = csv::Writer::from_writer(stdout.lock());
    csv.write_record(["iter", "value", "best_value", "gap"])?;
    for r in &out.trace {
        csv.write_record([r.iter.to_string(), r.value.to_string(), r.best_value.to_string(), r.gap.to_string()])?;
    }
    csv.flush()?;
    Ok(())
}

fn write_trace<W: Write>(w: W, rows: &[TraceRow]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["t", "F_hat", "statistic", "threshold", "err_indicator", "arm_pulled"])?;
    for r in rows {
        csv.write_record([
            r.t.to_string(),
            r.f_hat.to_string(),
            r.statistic.to_string(),
            r.threshold.to_string(),
            u8::from(r.err).to_string(),
            r.arm.map(|a| a.to_string()).unwrap_or_default(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

fn run_cmd(instance: &str, cfg: RunConfig, out: Option<&PathBuf>, trace_out: Option<&PathBuf>) -> Result<()> {
    let (inst, cone) = harness::load_instance(instance)?;
    let cfg = RunConfig { m_max: inst.m_max(), ..cfg };
    let result = Runner::new(inst, cone, cfg)?.run(cfg.seed)?;
    eprintln!(
        "stopping_time {} timed_out {} recommended {} correct {}",
        result.stopping_time,
        result.timed_out,
        result.recommended,
        result.correct.map_or("n/a".to_string(), |c| c.to_string())
    );
    let record = RunRecord {
        run_id: 0,
        sampler: cfg.sampler,
        param: None,
        seed: cfg.seed,
        result: Ok(result.clone()),
    };
    match out {
        Some(path) => harness::write_runs_csv(path, std::slice::from_ref(&record))?,
        None => harness::write_runs(std::io::stdout().lock(), std::slice::from_ref(&record))?,
    }
    if let Some(rows) = &result.trace {
        match trace_out {
            Some(path) => write_trace(std::fs::File::create(path)?, rows)?,
            None => write_trace(std::io::stdout().lock(), rows)?,
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Pareto { instance, cone, csv } => pareto_cmd(&instance, cone.as_deref(), csv.as_ref()),
        Command::Oracle { instance, iters, tol, zmode } => oracle_cmd(&instance, iters, tol, zmode),
        Command::Run {
            instance,
            delta,
            sampler,
            threshold,
            zmode,
            pairs,
            seed,
            max_t,
            trace_every,
            out,
            trace_out,
        } => {
            let cfg = RunConfig {
                delta,
                threshold_mode: threshold,
                zmode,
                pair_mode: pairs,
                sampler,
                max_t,
                seed,
                trace_every,
                ..RunConfig::default()
            };
            run_cmd(&instance, cfg, out.as_ref(), trace_out.as_ref())
        }
        Command::Bench { experiment, delta, runs, seed, out, samplers } => {
            harness::run_experiment(experiment, delta, runs, seed, &out, samplers).map(|rows| {
                for r in rows {
                    let param = r.param.map(|p| format!(" param {p}")).unwrap_or_default();
                    println!(
                        "{}{param}: runs {} mean {:.1} median {:.1} error_rate {:.3} timeouts {}",
                        r.sampler, r.runs, r.mean, r.median, r.error_rate, r.timeouts
                    );
                }
            })
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
