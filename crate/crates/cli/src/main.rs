//! `pencilbench`: generate instances, decompose tensors, measure condition
//! numbers, and run the distribution / instability experiments from the
//! command line. Every command is deterministic given its flags: re-running
//! with the same arguments (any `--threads`) reproduces output files byte for
//! byte. Each CSV gets a sibling `.manifest.json` recording the invocation.

use clap::{Args, Parser, Subcommand, ValueEnum};
use pencilbench_core::adversarial::{adversarial_sweep, fit_powerlaw, make_bad_odeco, OdecoSpec};
use pencilbench_core::conditioning::{condition_number, DEFAULT_INF_THRESHOLD};
use pencilbench_core::io::{format_float, read_cpd_json, read_tns3, write_cpd_json, write_tns3};
use pencilbench_core::mc::{run_forward_error_ccdf, run_kappa_ccdf, sample_cpd, FwdSolver, McConfig, Sampling};
use pencilbench_core::pba::{pba_decompose, PbaConfig, ProjectionStrategy};
use pencilbench_core::properties;
use pencilbench_core::seeds;
use pencilbench_core::tensor::reconstruct;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "pencilbench", version, about = "Pencil-based tensor decomposition bench")]
struct Cli {
    /// Worker threads for trial-parallel commands (default: all cores).
    /// Has no effect on output bytes.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random or adversarial instance and write it to disk.
    Gen(GenArgs),
    /// Decompose a tensor with the pencil-based pipeline.
    Decompose(DecomposeArgs),
    /// Condition number and identifiability diagnostics of a decomposition.
    Condition(ConditionArgs),
    /// Monte Carlo ccdf experiments (condition number or forward error).
    Ccdf(CcdfArgs),
    /// Adversarial perturbation sweep around the bad odeco tensor.
    Sweep(SweepArgs),
    /// Run the numerical property checks and write a JSON report.
    Properties(PropertiesArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum GenModel {
    Gaussian,
    Orthoab,
    OdecoBad,
}

#[derive(Args)]
struct GenArgs {
    /// Dimensions, e.g. 8x7x6
    #[arg(long)]
    dims: String,
    #[arg(long)]
    rank: usize,
    #[arg(long, value_enum)]
    model: GenModel,
    #[arg(long)]
    seed: Option<u64>,
    /// Output prefix; writes PREFIX.cpd.json and PREFIX.tns3
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyFlag {
    Random,
    Hosvd,
}

#[derive(Args)]
struct DecomposeArgs {
    /// Input tensor (.tns3)
    #[arg(long)]
    tensor: PathBuf,
    #[arg(long)]
    rank: usize,
    #[arg(long, value_enum, default_value = "random")]
    strategy: StrategyFlag,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 5)]
    retries: usize,
    #[arg(long, default_value_t = 1e-10)]
    pencil_tol: f64,
    /// Output prefix; writes PREFIX.cpd.json and PREFIX.report.csv
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ConditionArgs {
    /// Input decomposition (.cpd.json)
    #[arg(long)]
    cpd: PathBuf,
    /// Optional output prefix; also prints the CSV to stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum CcdfKind {
    Kappa,
    Forward,
}

#[derive(Clone, Copy, ValueEnum)]
enum McModel {
    Gaussian,
    Orthoab,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverFlag {
    PbaRandom,
    PbaHosvd,
    PbaAls,
}

#[derive(Args)]
struct CcdfArgs {
    #[arg(long)]
    dims: String,
    #[arg(long)]
    rank: usize,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long, value_enum, default_value = "gaussian")]
    model: McModel,
    #[arg(long, value_enum, default_value = "kappa")]
    kind: CcdfKind,
    #[arg(long, value_enum, default_value = "pba-hosvd")]
    solver: SolverFlag,
    /// Bound abscissas in threshold units, comma separated
    #[arg(long, default_value = "1,2,4,8,16,32,64")]
    alphas: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    dims: String,
    #[arg(long)]
    rank: usize,
    #[arg(long, default_value_t = 1)]
    kmin: u32,
    #[arg(long, default_value_t = 50)]
    kmax: u32,
    #[arg(long)]
    seed: Option<u64>,
    /// Skip the refinement pass
    #[arg(long)]
    no_refine: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PropertiesArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_dims(s: &str) -> Result<(usize, usize, usize), String> {
    let parts: Vec<&str> = s.split('x').collect();
    if parts.len() != 3 {
        return Err(format!("expected N1xN2xN3, got `{s}`"));
    }
    let mut d = [0usize; 3];
    for (i, p) in parts.iter().enumerate() {
        d[i] = p
            .parse()
            .map_err(|e| format!("bad dimension `{p}`: {e}"))?;
        if d[i] == 0 {
            return Err("dimensions must be positive".into());
        }
    }
    Ok((d[0], d[1], d[2]))
}

fn resolve_seed(flag: Option<u64>) -> u64 {
    flag.or_else(|| {
        std::env::var("PENCILBENCH_SEED")
            .ok()
            .and_then(|s| s.parse().ok())
    })
    .unwrap_or(0)
}

/// Run manifest written next to every output file set.
#[derive(serde::Serialize)]
struct RunManifest {
    command: String,
    config: serde_json::Value,
    master_seed: u64,
    version: String,
    wall_time_secs: f64,
}

fn write_manifest(prefix: &Path, manifest: &RunManifest) -> std::io::Result<()> {
    let path = prefix.with_extension("manifest.json");
    std::fs::write(path, serde_json::to_string_pretty(manifest).unwrap() + "\n")
}

fn write_lines(path: &Path, lines: &[String]) -> std::io::Result<()> {
    std::fs::write(path, lines.join("\n") + "\n")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        // ignore failure if a pool already exists (e.g. under a test harness)
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let started = Instant::now();
    let result = match cli.command {
        Command::Gen(args) => cmd_gen(args, started),
        Command::Decompose(args) => cmd_decompose(args, started),
        Command::Condition(args) => cmd_condition(args, started),
        Command::Ccdf(args) => cmd_ccdf(args, started),
        Command::Sweep(args) => cmd_sweep(args, started),
        Command::Properties(args) => cmd_properties(args, started),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("pencilbench: {e}");
            ExitCode::from(1)
        }
    }
}

type CmdResult = Result<ExitCode, Box<dyn std::error::Error>>;

fn cmd_gen(args: GenArgs, started: Instant) -> CmdResult {
    let dims = parse_dims(&args.dims).map_err(usage)?;
    let seed = resolve_seed(args.seed);
    let cpd = match args.model {
        GenModel::Gaussian => sample_cpd(
            dims,
            args.rank,
            Sampling::GaussianAll,
            &mut seeds::rng_from_seed(seeds::mix_seed(seed, 0)),
        )?,
        GenModel::Orthoab => sample_cpd(
            dims,
            args.rank,
            Sampling::OrthonormalAbGaussianC,
            &mut seeds::rng_from_seed(seeds::mix_seed(seed, 0)),
        )?,
        GenModel::OdecoBad => {
            let spec = OdecoSpec::from_seed(dims, args.rank, seed)?;
            make_bad_odeco(&spec)?
        }
    };
    let tensor = reconstruct(&cpd);
    write_cpd_json(&args.out.with_extension("cpd.json"), &cpd)?;
    write_tns3(&args.out.with_extension("tns3"), &tensor)?;
    write_manifest(
        &args.out,
        &RunManifest {
            command: "gen".into(),
            config: serde_json::json!({
                "dims": args.dims,
                "rank": args.rank,
                "model": match args.model {
                    GenModel::Gaussian => "gaussian",
                    GenModel::Orthoab => "orthoab",
                    GenModel::OdecoBad => "odeco-bad",
                },
            }),
            master_seed: seed,
            version: env!("CARGO_PKG_VERSION").into(),
            wall_time_secs: started.elapsed().as_secs_f64(),
        },
    )?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_decompose(args: DecomposeArgs, started: Instant) -> CmdResult {
    let t = read_tns3(&args.tensor)?;
    let seed = resolve_seed(args.seed);
    let cfg = PbaConfig {
        rank: args.rank,
        projection_strategy: match args.strategy {
            StrategyFlag::Random => ProjectionStrategy::RandomOrthonormal,
            StrategyFlag::Hosvd => ProjectionStrategy::HosvdLeadingTwo,
        },
        max_projection_retries: args.retries,
        pencil_tol: args.pencil_tol,
        seed,
    };
    let report = pba_decompose(&t, &cfg)?;
    write_cpd_json(&args.out.with_extension("cpd.json"), &report.cpd)?;
    let csv = vec![
        "backward_residual,retries_used,pencil_separation".to_string(),
        format!(
            "{},{},{}",
            format_float(report.backward_residual),
            report.retries_used,
            format_float(report.pencil_separation)
        ),
    ];
    write_lines(&args.out.with_extension("report.csv"), &csv)?;
    write_manifest(
        &args.out,
        &RunManifest {
            command: "decompose".into(),
            config: serde_json::json!({
                "tensor": args.tensor.display().to_string(),
                "rank": args.rank,
                "strategy": match args.strategy {
                    StrategyFlag::Random => "random",
                    StrategyFlag::Hosvd => "hosvd",
                },
                "retries": args.retries,
                "pencil_tol": args.pencil_tol,
            }),
            master_seed: seed,
            version: env!("CARGO_PKG_VERSION").into(),
            wall_time_secs: started.elapsed().as_secs_f64(),
        },
    )?;
    println!(
        "decomposed: backward residual {:.3e}, {} retries",
        report.backward_residual, report.retries_used
    );
    Ok(ExitCode::SUCCESS)
}

fn condition_csv(rep: &pencilbench_core::conditioning::ConditionReport) -> Vec<String> {
    vec![
        "kappa,sigma_min,pair_lower_bound,k_a,k_b,k_c,kruskal_identifiable,sglp_ok,entry_nonzero_ok"
            .to_string(),
        format!(
            "{},{},{},{},{},{},{},{},{}",
            format_float(rep.kappa),
            format_float(rep.sigma_min),
            format_float(rep.pair_lower_bound),
            rep.kruskal_ranks.0,
            rep.kruskal_ranks.1,
            rep.kruskal_ranks.2,
            rep.kruskal_identifiable,
            rep.sglp_ok,
            rep.entry_nonzero_ok
        ),
    ]
}

fn cmd_condition(args: ConditionArgs, started: Instant) -> CmdResult {
    let cpd = read_cpd_json(&args.cpd)?;
    let rep = condition_number(&cpd, DEFAULT_INF_THRESHOLD)?;
    let csv = condition_csv(&rep);
    for line in &csv {
        println!("{line}");
    }
    if let Some(out) = args.out {
        write_lines(&out.with_extension("csv"), &csv)?;
        write_manifest(
            &out,
            &RunManifest {
                command: "condition".into(),
                config: serde_json::json!({ "cpd": args.cpd.display().to_string() }),
                master_seed: 0,
                version: env!("CARGO_PKG_VERSION").into(),
                wall_time_secs: started.elapsed().as_secs_f64(),
            },
        )?;
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_alphas(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|e| format!("bad alpha `{p}`: {e}"))
        })
        .collect()
}

fn cmd_ccdf(args: CcdfArgs, started: Instant) -> CmdResult {
    let dims = parse_dims(&args.dims).map_err(usage)?;
    let seed = resolve_seed(args.seed);
    let alphas = parse_alphas(&args.alphas).map_err(usage)?;
    let cfg = McConfig {
        dims,
        rank: args.rank,
        trials: args.trials,
        sampling: match args.model {
            McModel::Gaussian => Sampling::GaussianAll,
            McModel::Orthoab => Sampling::OrthonormalAbGaussianC,
        },
        master_seed: seed,
        alpha_grid: alphas,
    };
    match args.kind {
        CcdfKind::Kappa => {
            let series = run_kappa_ccdf(&cfg)?;
            // raw dump
            let mut raw = vec!["trial,kappa".to_string()];
            // re-derive per-trial values in trial order for the dump
            let kappas: Vec<f64> = {
                use pencilbench_core::conditioning;
                pencilbench_core::par::par_map(cfg.trials, |i| {
                    let mut rng =
                        seeds::rng_from_seed(seeds::mix_seed(cfg.master_seed, i as u64));
                    let cpd = sample_cpd(cfg.dims, cfg.rank, cfg.sampling, &mut rng)
                        .expect("sampling failed");
                    conditioning::kappa(&cpd, conditioning::DEFAULT_INF_THRESHOLD)
                        .expect("kappa failed")
                })
            };
            for (i, k) in kappas.iter().enumerate() {
                raw.push(format!("{i},{}", format_float(*k)));
            }
            write_lines(&args.out.with_extension("raw.csv"), &raw)?;

            // series dump on a merged grid: sample quantiles plus bound abscissas
            let mut grid: Vec<f64> = series.bound_points.iter().map(|p| p.1).collect();
            let step = (series.samples.len() / 512).max(1);
            for v in series.samples.iter().step_by(step) {
                grid.push(*v);
            }
            grid.retain(|x| x.is_finite() && *x > 0.0);
            grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
            grid.dedup();
            let n3 = dims.2;
            let scale = (cfg.rank as f64).powf(2.0 / (n3 as f64 - 1.0));
            let mut csv = vec!["x,empirical_ccdf,bound_ccdf".to_string()];
            for x in grid {
                let alpha = x / scale;
                let bound = pencilbench_core::conditioning::limiting_ccdf(n3, alpha)?;
                csv.push(format!(
                    "{},{},{}",
                    format_float(x),
                    format_float(series.ccdf(x)),
                    format_float(bound)
                ));
            }
            write_lines(&args.out.with_extension("csv"), &csv)?;
            write_gnuplot_ccdf(&args.out)?;
            println!(
                "{} trials, {} infinite, P[kappa > 1e5] = {:.4}",
                series.trials,
                series.infinite_count,
                series.ccdf(1e5)
            );
        }
        CcdfKind::Forward => {
            let solver = match args.solver {
                SolverFlag::PbaRandom => FwdSolver::PbaRandom,
                SolverFlag::PbaHosvd => FwdSolver::PbaHosvd,
                SolverFlag::PbaAls => FwdSolver::PbaPlusAls,
            };
            let out = run_forward_error_ccdf(&cfg, solver)?;
            let write_series = |s: &pencilbench_core::mc::CcdfSeries| {
                let mut csv = vec!["x,empirical_ccdf".to_string()];
                let step = (s.samples.len() / 1024).max(1);
                for v in s.samples.iter().step_by(step) {
                    csv.push(format!("{},{}", format_float(*v), format_float(s.ccdf(*v))));
                }
                csv
            };
            write_lines(
                &args.out.with_extension("errors.csv"),
                &write_series(&out.errors),
            )?;
            write_lines(
                &args.out.with_extension("omega.csv"),
                &write_series(&out.omegas),
            )?;
            write_gnuplot_forward(&args.out)?;
            println!(
                "{} trials: {} solver failures, {} omega-censored",
                cfg.trials, out.solver_failures, out.omega_censored
            );
        }
    }
    write_manifest(
        &args.out,
        &RunManifest {
            command: "ccdf".into(),
            config: serde_json::json!({
                "dims": args.dims,
                "rank": args.rank,
                "trials": args.trials,
                "model": match args.model { McModel::Gaussian => "gaussian", McModel::Orthoab => "orthoab" },
                "kind": match args.kind { CcdfKind::Kappa => "kappa", CcdfKind::Forward => "forward" },
                "alphas": args.alphas,
            }),
            master_seed: seed,
            version: env!("CARGO_PKG_VERSION").into(),
            wall_time_secs: started.elapsed().as_secs_f64(),
        },
    )?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(args: SweepArgs, started: Instant) -> CmdResult {
    let dims = parse_dims(&args.dims).map_err(usage)?;
    let seed = resolve_seed(args.seed);
    let spec = OdecoSpec::from_seed(dims, args.rank, seed)?;
    let rows = adversarial_sweep(&spec, (args.kmin, args.kmax), !args.no_refine)?;

    let mut csv = vec!["k,epsilon,pba_forward_error,refined_forward_error,omega".to_string()];
    for row in &rows {
        csv.push(format!(
            "{},{},{},{},{}",
            row.k,
            format_float(row.epsilon_k),
            format_float(row.pba_forward_error),
            format_float(row.refined_forward_error),
            format_float(row.omega)
        ));
    }
    write_lines(&args.out.with_extension("csv"), &csv)?;
    write_gnuplot_sweep(&args.out)?;

    let fit_points: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.epsilon_k >= 1e-12 && r.epsilon_k <= 1e-4 && r.pba_forward_error > 0.0)
        .map(|r| (r.epsilon_k, r.pba_forward_error))
        .collect();
    if fit_points.len() >= 2 {
        let (coeff, exponent) = fit_powerlaw(&fit_points)?;
        println!(
            "fitted forward error ~ {:.3e} * epsilon^({:.3}) over {} points",
            coeff,
            exponent,
            fit_points.len()
        );
    } else {
        println!("not enough points in [1e-12, 1e-4] for a power-law fit");
    }

    write_manifest(
        &args.out,
        &RunManifest {
            command: "sweep".into(),
            config: serde_json::json!({
                "dims": args.dims,
                "rank": args.rank,
                "kmin": args.kmin,
                "kmax": args.kmax,
                "refine": !args.no_refine,
            }),
            master_seed: seed,
            version: env!("CARGO_PKG_VERSION").into(),
            wall_time_secs: started.elapsed().as_secs_f64(),
        },
    )?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_properties(args: PropertiesArgs, started: Instant) -> CmdResult {
    let seed = resolve_seed(args.seed);
    let report = properties::run_default_suite(seed)?;
    std::fs::write(
        args.out.with_extension("json"),
        serde_json::to_string_pretty(&report)? + "\n",
    )?;
    for check in &report.checks {
        println!(
            "{}: {}/{} failures, worst margin {:.3e}",
            check.name, check.failures, check.trials, check.worst_margin
        );
    }
    write_manifest(
        &args.out,
        &RunManifest {
            command: "properties".into(),
            config: serde_json::json!({}),
            master_seed: seed,
            version: env!("CARGO_PKG_VERSION").into(),
            wall_time_secs: started.elapsed().as_secs_f64(),
        },
    )?;
    if report.failures() > 0 {
        eprintln!("property checks failed");
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn file_name(prefix: &Path, ext: &str) -> String {
    prefix
        .with_extension(ext)
        .file_name()
        .unwrap()
        .to_string_lossy()
        .into_owned()
}

fn write_gnuplot_sweep(prefix: &Path) -> std::io::Result<()> {
    let csv = file_name(prefix, "csv");
    let gp = format!(
        "set datafile separator ','\n\
         set logscale xy\n\
         set xlabel 'epsilon'\n\
         set ylabel 'forward error'\n\
         set key left top\n\
         plot '{csv}' using 2:3 every ::1 with points pt 7 title 'pencil pipeline', \\\n\
         \x20    '{csv}' using 2:4 every ::1 with points pt 5 title 'refined', \\\n\
         \x20    3.5e-14/x with lines dt 2 title '3.5e-14 / epsilon'\n"
    );
    std::fs::write(prefix.with_extension("gp"), gp)
}

fn write_gnuplot_ccdf(prefix: &Path) -> std::io::Result<()> {
    let csv = file_name(prefix, "csv");
    let gp = format!(
        "set datafile separator ','\n\
         set logscale xy\n\
         set xlabel 'threshold'\n\
         set ylabel 'P[kappa > threshold]'\n\
         set key right top\n\
         plot '{csv}' using 1:2 every ::1 with lines title 'empirical', \\\n\
         \x20    '{csv}' using 1:3 every ::1 with lines dt 2 title 'limiting bound'\n"
    );
    std::fs::write(prefix.with_extension("gp"), gp)
}

fn write_gnuplot_forward(prefix: &Path) -> std::io::Result<()> {
    let errors = file_name(prefix, "errors.csv");
    let omega = file_name(prefix, "omega.csv");
    let gp = format!(
        "set datafile separator ','\n\
         set logscale xy\n\
         set xlabel 'x'\n\
         set ylabel 'P[X > x]'\n\
         set key right top\n\
         plot '{errors}' using 1:2 every ::1 with lines title 'forward error', \\\n\
         \x20    '{omega}' using 1:2 every ::1 with lines title 'excess factor'\n"
    );
    std::fs::write(prefix.with_extension("gp"), gp)
}

fn usage(msg: String) -> Box<dyn std::error::Error> {
    // report and exit with the usage code, like a parse failure would
    eprintln!("pencilbench: {msg}");
    std::process::exit(2);
}
