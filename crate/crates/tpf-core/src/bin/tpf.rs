//! Command-line entry point: data generation, the three training/synthesis
//! stages, rollouts, evaluation, oracle tables, and the validation suite.
//!
//! Exit codes: 0 ok, 2 configuration error, 3 data/generator error,
//! 4 missing artifact, 5 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;
use tpf_core::config::RunConfig;
use tpf_core::error::Error;
use tpf_core::gaussian::{h1_bound_check, oracle_u, symmetry_criterion, GaussianPath};
use tpf_core::interpolant::Schedule;
use tpf_core::io;
use tpf_core::pipeline::{validate, EvalOptions, Pipeline};

const USAGE: &str = "\
tpf - two-parameter flows for population dynamics

USAGE:
    tpf <SUBCOMMAND> [FLAGS]

SUBCOMMANDS:
    gen-data     generate datasets from the [data] section
    train-v      train the sampling-time velocity (stage 1)
    synth-traj   synthesize coherent trajectories (stage 2)
    train-u      regress the physics-time velocity (stage 3)
    rollout      roll new initial samples forward with u
    eval         write W2 and population-statistics CSV reports
    oracle       dump closed-form Gaussian oracle tables as CSV
    validate     run the oracle/property suite, exit 1 on failure
    pipeline     run every stage in order with timing

FLAGS:
    --config PATH     run configuration (required except for validate/oracle)
    --out DIR         output directory (default tpf-out; env TPF_OUT wins)
    --seed N          override every section seed with N, N+1, ...
    --resume          fail with exit 4 if a stage artifact is missing
    --threads N       override the threads key of every section
    --inject-fault X  validate only: deliberately break check X
";

struct Cli {
    cmd: String,
    config: Option<PathBuf>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    resume: bool,
    threads: Option<usize>,
    inject_fault: Option<String>,
}

fn parse_args(args: &[String]) -> Result<Cli, String> {
    if args.is_empty() {
        return Err("missing subcommand".into());
    }
    let cmd = args[0].clone();
    let known = [
        "gen-data", "train-v", "synth-traj", "train-u", "rollout", "eval", "oracle", "validate",
        "pipeline",
    ];
    if !known.contains(&cmd.as_str()) {
        return Err(format!("unknown subcommand '{cmd}'"));
    }
    let mut cli = Cli {
        cmd,
        config: None,
        out: None,
        seed: None,
        resume: false,
        threads: None,
        inject_fault: None,
    };
    let mut it = args[1..].iter();
    while let Some(flag) = it.next() {
        let mut value = |name: &str| -> Result<String, String> {
            it.next()
                .cloned()
                .ok_or_else(|| format!("flag {name} needs a value"))
        };
        match flag.as_str() {
            "--config" => cli.config = Some(PathBuf::from(value("--config")?)),
            "--out" => cli.out = Some(PathBuf::from(value("--out")?)),
            "--seed" => {
                cli.seed = Some(
                    value("--seed")?
                        .parse()
                        .map_err(|_| "bad --seed value".to_string())?,
                )
            }
            "--threads" => {
                cli.threads = Some(
                    value("--threads")?
                        .parse()
                        .map_err(|_| "bad --threads value".to_string())?,
                )
            }
            "--resume" => cli.resume = true,
            "--inject-fault" => cli.inject_fault = Some(value("--inject-fault")?),
            other => return Err(format!("unknown flag '{other}'")),
        }
    }
    Ok(cli)
}

fn out_dir(cli: &Cli) -> PathBuf {
    if let Ok(env) = std::env::var("TPF_OUT") {
        return PathBuf::from(env);
    }
    cli.out.clone().unwrap_or_else(|| PathBuf::from("tpf-out"))
}

fn apply_overrides(cfg: &mut RunConfig, cli: &Cli) {
    if let Some(seed) = cli.seed {
        match &mut cfg.data {
            tpf_core::config::DataConfig::Gaussian { seed: s, .. } => *s = seed,
            tpf_core::config::DataConfig::Mixture(m) => m.seed = seed,
            tpf_core::config::DataConfig::Vlasov { base, .. } => base.seed = seed,
            tpf_core::config::DataConfig::Vorticity(v) => v.seed = seed,
        }
        cfg.cfm.seed = seed.wrapping_add(1);
        cfg.regression.seed = seed.wrapping_add(2);
        cfg.eval.seed = seed.wrapping_add(3);
    }
    if let Some(threads) = cli.threads {
        cfg.cfm.threads = threads;
        cfg.flow.threads = threads;
        cfg.regression.threads = threads;
        if let tpf_core::config::DataConfig::Vorticity(v) = &mut cfg.data {
            v.threads = threads;
        }
    }
}

fn load_pipeline(cli: &Cli) -> Result<Pipeline, Error> {
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required for this subcommand".into()))?;
    let mut cfg = RunConfig::load(config_path)?;
    apply_overrides(&mut cfg, cli);
    Pipeline::new(cfg, out_dir(cli))
}

fn run(cli: &Cli) -> Result<(), Error> {
    match cli.cmd.as_str() {
        "gen-data" => {
            let p = load_pipeline(cli)?;
            let datasets = p.gen_data().map_err(generator_error)?;
            println!(
                "wrote {} dataset(s) to {}",
                datasets.len(),
                p.out.join("data").display()
            );
            Ok(())
        }
        "train-v" => {
            let p = load_pipeline(cli)?;
            let params = p.run_train_v(cli.resume)?;
            println!(
                "sampling-time velocity: {} parameters -> {}",
                params.param_count(),
                p.v_checkpoint().display()
            );
            Ok(())
        }
        "synth-traj" => {
            let p = load_pipeline(cli)?;
            let bundles = p.run_synth(cli.resume)?;
            println!("synthesized {} bundle(s)", bundles.len());
            Ok(())
        }
        "train-u" => {
            let p = load_pipeline(cli)?;
            let params = p.run_train_u(cli.resume)?;
            println!(
                "physics-time velocity: {} parameters -> {}",
                params.param_count(),
                p.u_checkpoint().display()
            );
            Ok(())
        }
        "rollout" => {
            let p = load_pipeline(cli)?;
            p.run_rollout(cli.resume)?;
            println!("rollouts written to {}", p.out.display());
            Ok(())
        }
        "eval" => {
            let p = load_pipeline(cli)?;
            let opts = EvalOptions {
                test_mus: p.cfg.eval.test_mu.clone(),
            };
            let reports = p.run_eval(&opts)?;
            for r in &reports {
                println!(
                    "mu={} average W2 {:.6e} final {:.6e}",
                    r.mu.map(|m| m.to_string()).unwrap_or_else(|| "-".into()),
                    r.average,
                    r.final_value
                );
            }
            Ok(())
        }
        "oracle" => {
            let out = out_dir(cli);
            std::fs::create_dir_all(&out).map_err(|e| Error::io(out.display().to_string(), e))?;
            let path = GaussianPath::default_rotating();
            let mut rows = Vec::new();
            for i in 0..10 {
                let t = (i as f64 + 0.5) / 10.0;
                let (comm, _) = symmetry_criterion(&path, t)?;
                let (lhs, rhs) = h1_bound_check(&path, Schedule::Trig, t)?;
                for j in 0..10 {
                    let s = (j as f64 + 0.5) / 10.0;
                    let u = oracle_u(&path, Schedule::Trig, t, s)?;
                    rows.push(vec![
                        format!("{t:?}"),
                        format!("{s:?}"),
                        format!("{:?}", u[(0, 0)]),
                        format!("{:?}", u[(0, 1)]),
                        format!("{:?}", u[(1, 0)]),
                        format!("{:?}", u[(1, 1)]),
                        format!("{comm:?}"),
                        format!("{lhs:?}"),
                        format!("{rhs:?}"),
                    ]);
                }
            }
            let csv = out.join("oracle.csv");
            io::write_csv(
                &csv,
                &["t", "s", "u00", "u01", "u10", "u11", "commutator", "h1_lhs", "h1_rhs"],
                &rows,
            )?;
            println!("oracle table -> {}", csv.display());
            Ok(())
        }
        "validate" => {
            let results = validate(cli.inject_fault.as_deref());
            let mut failed = 0;
            for r in &results {
                let tag = if r.passed { "PASS" } else { "FAIL" };
                println!("{tag} {}: {}", r.name, r.detail);
                if !r.passed {
                    failed += 1;
                }
            }
            if failed > 0 {
                eprintln!("{failed} validation check(s) failed");
                std::process::exit(1);
            }
            Ok(())
        }
        "pipeline" => {
            let p = load_pipeline(cli)?;
            let opts = EvalOptions {
                test_mus: p.cfg.eval.test_mu.clone(),
            };
            let reports = p.run_all(cli.resume, &opts)?;
            for r in &reports {
                println!(
                    "mu={} average W2 {:.6e} final {:.6e}",
                    r.mu.map(|m| m.to_string()).unwrap_or_else(|| "-".into()),
                    r.average,
                    r.final_value
                );
            }
            println!("artifacts in {}", p.out.display());
            Ok(())
        }
        _ => unreachable!("subcommand validated in parse_args"),
    }
}

/// gen-data failures are generator errors (exit 3) unless they are config
/// problems.
fn generator_error(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        Error::Io { .. } | Error::Format { .. } | Error::MissingArtifact(_) => e,
        other => Error::CflViolation(format!("generator failed: {other}")),
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--help" || a == "-h") || args.is_empty() {
        print!("{USAGE}");
        return if args.is_empty() {
            ExitCode::from(2)
        } else {
            ExitCode::SUCCESS
        };
    }
    let cli = match parse_args(&args) {
        Ok(cli) => cli,
        Err(msg) => {
            eprintln!("error: {msg}\n\n{USAGE}");
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
