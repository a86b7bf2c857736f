use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wideconv::config::{CorrelationConfig, ExperimentConfig};
use wideconv::experiments::{exponent_of, oracle_inputs, oracle_row, resolve_correlation, run_experiment, RunOutput};
use wideconv::persist::persist;
use wideconv::report::{render, report};
use wideconv_core::graph::SpecDocument;
use wideconv_core::NetworkSpec;

#[derive(Parser)]
#[command(name = "wideconv", version, about = "Width-scaling experiments for wide convolutional networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write its artifacts.
    Run {
        config: PathBuf,
        /// Override the config's output directory.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Summarize every run under a results directory.
    Report {
        dir: PathBuf,
        /// Merge runs whose files carry mismatched config digests.
        #[arg(long)]
        force: bool,
    },
    /// Width exponents of a correlation function.
    PredictExponent {
        /// `ntk`, `pair`, `dtheta_dt` or `ntk_squared`.
        #[arg(long, conflicts_with = "spec")]
        builtin: Option<String>,
        /// JSON document with `factors`, `pairs` and optional `depths`.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Comma-separated per-factor depths.
        #[arg(long, value_delimiter = ',')]
        depths: Option<Vec<usize>>,
    },
    /// Exact deep-linear second moments with a Monte Carlo check.
    Oracle {
        /// Architecture JSON.
        arch: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        samples: u64,
    },
}

fn print_run(out: &RunOutput) {
    if let Some(e) = &out.exponent {
        println!("m = {}, depths = {:?}", e.m, e.depths);
        println!("s_C = {}", e.display["conjecture"]);
        match (&e.display.get("deep_linear"), &e.vanishing) {
            (Some(s), _) => println!("deep-linear s = {s}"),
            (None, Some(v)) => println!("deep-linear: vanishes ({v})"),
            _ => {}
        }
        if let Some(c) = e.display.get("component_bound") {
            println!("component bound = {c}");
        }
        println!("diagrams = {}", e.diagrams);
    }
    for r in &out.oracle {
        println!(
            "n = {:>5}  chains = {}  E[ff] = {:.6e} (mc {:.6e} +- {:.1e})  E[Theta] = {:.6e} (mc {:.6e} +- {:.1e})",
            r.width, r.chains, r.wick_pair, r.mc_pair, r.mc_pair_stderr, r.wick_ntk, r.mc_ntk, r.mc_ntk_stderr
        );
    }
    for s in &out.series {
        match &s.fit {
            Some(f) => println!(
                "{}: alpha = {:.4}, r2 = {:.4}, range = {:?}",
                s.series.observable, f.alpha, f.r_squared, f.fit_range
            ),
            None => println!("{}: no fit ({})", s.series.observable, s.fit_error.as_deref().unwrap_or("")),
        }
    }
    if let Some(g) = &out.gap {
        for p in &g.points {
            println!(
                "n = {:>5}  early step {} gap {:.4e}  late step {} gap {:.4e}",
                p.width, p.early_step, p.gap_early, p.late_step, p.gap_late
            );
        }
    }
    for f in &out.findings {
        println!("finding: {f}");
    }
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Run { config, output, threads } => {
            let mut cfg = ExperimentConfig::load(&config).map_err(|e| e.to_string())?;
            if let Some(o) = output {
                cfg.output_dir = o;
            }
            let mut pool = rayon::ThreadPoolBuilder::new();
            if let Some(t) = threads {
                pool = pool.num_threads(t);
            }
            let pool = pool.build().map_err(|e| e.to_string())?;
            let out = pool.install(|| run_experiment(&cfg)).map_err(|e| e.to_string())?;
            print_run(&out);
            let files = persist(&cfg.output_dir, &cfg, &out).map_err(|e| e.to_string())?;
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Command::Report { dir, force } => {
            let rows = report(&dir, force).map_err(|e| e.to_string())?;
            print!("{}", render(&rows));
        }
        Command::PredictExponent { builtin, spec, depths } => {
            let corr = match (builtin, spec) {
                (Some(name), None) => CorrelationConfig::Builtin(name),
                (None, Some(path)) => {
                    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
                    let de = &mut serde_json::Deserializer::from_str(&text);
                    let doc: SpecDocument = serde_path_to_error::deserialize(de)
                        .map_err(|e| format!("{}: at `{}`: {}", path.display(), e.path(), e.inner()))?;
                    CorrelationConfig::Document(doc)
                }
                _ => return Err("give exactly one of --builtin or --spec".into()),
            };
            let corr = resolve_correlation(&corr).map_err(|e| e.to_string())?;
            let e = exponent_of(&corr, depths.as_deref()).map_err(|e| e.to_string())?;
            print_run(&RunOutput::from_exponent(e));
        }
        Command::Oracle { arch, seed, samples } => {
            let text = std::fs::read_to_string(&arch).map_err(|e| format!("{}: {e}", arch.display()))?;
            let de = &mut serde_json::Deserializer::from_str(&text);
            let spec: NetworkSpec = serde_path_to_error::deserialize(de)
                .map_err(|e| format!("{}: at `{}`: {}", arch.display(), e.path(), e.inner()))?;
            let (x1, x2) = oracle_inputs(&spec, None, seed);
            let row = oracle_row(&spec, &x1, &x2, samples, seed).map_err(|e| e.to_string())?;
            println!("chains = {}", row.chains);
            println!("E[f(x1) f(x2)] = {:.10e}  (mc {:.6e} +- {:.1e})", row.wick_pair, row.mc_pair, row.mc_pair_stderr);
            println!("E[Theta(x1, x2)] = {:.10e}  (mc {:.6e} +- {:.1e})", row.wick_ntk, row.mc_ntk, row.mc_ntk_stderr);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
