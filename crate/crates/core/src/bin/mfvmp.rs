use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mfvmp::bench::{self, RunReport, Solver, SweepParam};
use mfvmp::format;
use mfvmp::{generate_instance, Instance, MfeaConfig, PsAvailability, Result};

/// Cost-driven VM placement: instance generation, solving, sweeps and verification.
#[derive(Parser)]
#[command(name = "mfvmp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random instance from the built-in VM catalog and server types.
    Gen {
        #[arg(long)]
        vms: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Servers available per type (default: one per VM, i.e. unbounded).
        #[arg(long)]
        ps_per_type: Option<u32>,
    },
    /// Solve an instance, possibly several times, and write a report.
    Solve {
        /// One solver or a comma-separated list, e.g. `mfea,sfea,ffd`.
        #[arg(long, value_parser = parse_solver, value_delimiter = ',', required = true)]
        solver: Vec<Solver>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Grid over one MFEA parameter; one report row per value and repeat.
    Sweep {
        #[arg(long, value_parser = parse_param)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long, value_parser = parse_solver, default_value = "mfea")]
        solver: Solver,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Re-check a placement file against an instance and print its metrics.
    Verify {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        placement: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    #[arg(long)]
    rmp: Option<f64>,
    #[arg(long)]
    task_size: Option<usize>,
    #[arg(long)]
    pop_per_task: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    mutation_prob: Option<f64>,
    /// Also record the merged cost at every iteration (MFEA only).
    #[arg(long)]
    track_merged: bool,
    /// Report CSV, one row per run.
    #[arg(long)]
    out: PathBuf,
    /// Convergence trace CSV. With several runs each file gets a `-<solver>-r<k>` suffix.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Directory for one placement file per run.
    #[arg(long)]
    placements: Option<PathBuf>,
    /// Summary CSV with mean and standard deviation per solver.
    #[arg(long)]
    summary: Option<PathBuf>,
}

fn parse_solver(s: &str) -> std::result::Result<Solver, String> {
    s.parse().map_err(|e: mfvmp::Error| e.to_string())
}

fn parse_param(s: &str) -> std::result::Result<SweepParam, String> {
    s.parse().map_err(|e: mfvmp::Error| e.to_string())
}

impl RunArgs {
    fn config(&self) -> Result<MfeaConfig> {
        let d = MfeaConfig::default();
        let cfg = MfeaConfig {
            rmp: self.rmp.unwrap_or(d.rmp),
            n_per_task: self.task_size.unwrap_or(d.n_per_task),
            individuals_per_task: self.pop_per_task.unwrap_or(d.individuals_per_task),
            max_iterations: self.iters.unwrap_or(d.max_iterations),
            mutation_prob: self.mutation_prob.unwrap_or(d.mutation_prob),
            seed: self.seed,
            track_merged: self.track_merged,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}{suffix}.{}", ext.to_string_lossy()),
        None => format!("{stem}{suffix}"),
    };
    path.with_file_name(name)
}

fn instance_label(path: &Path) -> String {
    path.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Runs every `(label, config)` cell and writes all requested outputs at once.
fn execute(
    solvers: &[Solver],
    instance: &Instance,
    run: &RunArgs,
    cells: &[(String, MfeaConfig)],
) -> Result<()> {
    let name = instance_label(&run.instance);
    let mut reports = Vec::new();
    let mut extra: Vec<(PathBuf, String)> = Vec::new();
    let single_run = solvers.len() * cells.len() * run.repeats == 1;
    for &solver in solvers {
        for (cell, (label, cfg)) in cells.iter().enumerate() {
            for (repeat, (seed, out)) in bench::run_repeats(solver, instance, cfg, run.repeats)?
                .into_iter()
                .enumerate()
            {
                reports.push(RunReport::new(
                    solver, &name, label, seed, repeat, instance, &out,
                ));
                let tag = if cells.len() > 1 {
                    format!("-{solver}-c{cell}-r{repeat}")
                } else {
                    format!("-{solver}-r{repeat}")
                };
                if let (Some(path), Some(trace)) = (&run.trace, &out.trace) {
                    let path = if single_run {
                        path.clone()
                    } else {
                        with_suffix(path, &tag)
                    };
                    extra.push((path, trace.to_csv()));
                }
                if let Some(dir) = &run.placements {
                    let text =
                        format::placement_to_string(instance, solver.name(), seed, &out.placement);
                    extra.push((dir.join(format!("{}.placement", &tag[1..])), text));
                }
            }
        }
    }
    let mut files = vec![(run.out.clone(), bench::reports_to_csv(&reports)?)];
    if let Some(path) = &run.summary {
        files.push((
            path.clone(),
            bench::summary_to_csv(&bench::summarize(&reports))?,
        ));
    }
    files.extend(extra);
    if let Some(dir) = &run.placements {
        std::fs::create_dir_all(dir)?;
    }
    let refs: Vec<(&Path, &[u8])> = files
        .iter()
        .map(|(p, c)| (p.as_path(), c.as_bytes()))
        .collect();
    format::write_all_atomic(&refs)?;
    for r in &reports {
        let label = if r.label.is_empty() {
            String::new()
        } else {
            format!(" {}", r.label)
        };
        println!(
            "{}{label} seed={} servers={} cost={} util={:.4} time={:.1}ms",
            r.solver, r.seed, r.servers, r.cost, r.utilization, r.wall_time_ms
        );
    }
    Ok(())
}

fn real_main(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen {
            vms,
            seed,
            out,
            ps_per_type,
        } => {
            let availability =
                ps_per_type.map_or(PsAvailability::Unbounded, PsAvailability::PerType);
            let instance = generate_instance(vms, seed, availability)?;
            format::write_all_atomic(&[(&out, format::instance_to_string(&instance).as_bytes())])?;
            println!("wrote {} VMs to {}", vms, out.display());
        }
        Command::Solve { solver, run } => {
            let instance = format::read_instance(&run.instance)?;
            let cfg = run.config()?;
            execute(&solver, &instance, &run, &[(String::new(), cfg)])?;
        }
        Command::Sweep {
            param,
            values,
            solver,
            run,
        } => {
            let instance = format::read_instance(&run.instance)?;
            let base = run.config()?;
            let cells = values
                .iter()
                .map(|v| Ok((format!("{}={v}", param.name()), param.apply(&base, v)?)))
                .collect::<Result<Vec<_>>>()?;
            execute(&[solver], &instance, &run, &cells)?;
        }
        Command::Verify {
            instance,
            placement,
        } => {
            let instance = format::read_instance(&instance)?;
            let file = format::verify(&std::fs::read_to_string(&placement)?, &instance)?;
            let p = &file.placement;
            let u = p.utilization();
            println!("OK solver={} seed={}", file.solver, file.seed);
            println!(
                "servers={} per_type={:?} cost={}",
                p.len(),
                p.servers_per_type(instance.ps_types.len()),
                p.cost()
            );
            println!(
                "utilization={:.6} cpu={:.6} ram={:.6} disk={:.6}",
                u.comprehensive, u.cpu, u.ram, u.disk
            );
            println!(
                "lower_bound={:.2}",
                mfvmp::baselines::lower_bound(&instance)
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Ok(v) = std::env::var("MFVMP_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                {
                    eprintln!("warning: could not set thread count: {e}");
                }
            }
            _ => {
                eprintln!("error: MFVMP_THREADS must be a positive integer, got {v:?}");
                return ExitCode::FAILURE;
            }
        }
    }
    match real_main(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
