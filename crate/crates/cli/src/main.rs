mod config;
mod experiment;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use zncode::gauge_prcm::critical_constants;

#[derive(Debug, Parser)]
#[command(name = "zncode", version, about = "Exact spacetime experiments for P-form Z_N homological codes")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config
    Run {
        config: PathBuf,
        /// Output directory for report.json and CSV files [default: config
        /// `output`, else ./out]
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (overrides ZNCODE_THREADS)
        #[arg(long)]
        threads: Option<usize>,
        /// Overrides the config seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print p_sd, beta_sd and the non-local cube probability
    Constants {
        #[arg(long = "N")]
        n: u32,
        #[arg(long = "P", default_value_t = 1)]
        p: usize,
    },
}

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

fn threads(flag: Option<usize>) -> Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("ZNCODE_THREADS") {
        Ok(v) => Ok(Some(v.trim().parse().with_context(|| format!("ZNCODE_THREADS={v:?}"))?)),
        Err(_) => Ok(None),
    }
}

fn run(config: PathBuf, out: Option<PathBuf>, thread_flag: Option<usize>, seed: Option<u64>) -> ExitCode {
    let cfg = std::fs::read_to_string(&config)
        .with_context(|| format!("reading {}", config.display()))
        .and_then(|text| config::parse(&text));
    let mut cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let out = out.unwrap_or_else(|| PathBuf::from(cfg.output.as_deref().unwrap_or("out")));
    let pool = threads(thread_flag).and_then(|k| {
        if let Some(k) = k {
            rayon::ThreadPoolBuilder::new().num_threads(k).build_global()?;
        }
        Ok(())
    });
    if let Err(e) = pool.and_then(|_| std::fs::create_dir_all(&out).with_context(|| out.display().to_string())) {
        eprintln!("error: {e:#}");
        return ExitCode::from(EXIT_CONFIG);
    }

    let start = Instant::now();
    let outcome = match experiment::run(&cfg, &out) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    };
    let elapsed = start.elapsed().as_secs_f64();
    let pass = outcome.checks.iter().all(|c| c.pass);
    for c in &outcome.checks {
        println!(
            "[{}] {}: {:.3e} (tol {:.1e})",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.tolerance
        );
    }
    let report = json!({
        "version": zncode::VERSION,
        "config": cfg,
        "checks": outcome.checks,
        "pass": pass,
        "results": outcome.results,
    });
    let path = out.join("report.json");
    let written = serde_json::to_string_pretty(&report)
        .map_err(anyhow::Error::from)
        .and_then(|s| std::fs::write(&path, s).with_context(|| path.display().to_string()));
    if let Err(e) = written {
        eprintln!("error: {e:#}");
        return ExitCode::from(EXIT_RUNTIME);
    }
    println!("report: {} ({elapsed:.2} s)", path.display());
    if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_CHECK_FAILED)
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match args.command {
        Command::Run {
            config,
            out,
            threads,
            seed,
        } => run(config, out, threads, seed),
        Command::Constants { n, p } => match critical_constants(n, p) {
            Ok(c) => {
                println!("{}", serde_json::to_string_pretty(&c).expect("constants serialize"));
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_CONFIG)
            }
        },
    }
}
