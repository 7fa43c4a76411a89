use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use meshsim::config::ExperimentConfig;
use meshsim::experiment::{
    cell_seed, load_results, prepare_setup, run_sweep, setup_seed, simulation_input, ResultsWriter,
    Scenario, SimResult,
};
use meshsim::metrics::{run_simulation, write_ledger, write_series, SimOutput};
use meshsim::pareto::{analyze, verify_front, write_scored};
use meshsim::topology::TopologyExport;
use meshsim::Error;

const EXIT_VIOLATION: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_CONFIG: u8 = 4;

#[derive(Parser)]
#[command(
    name = "meshsim",
    version,
    about = "Gossip-learning sensor mesh simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one traced simulation of the configured trial scenario.
    Trial {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides `base_seed` from the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every scenario x grid cell x repetition and write results.csv.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; defaults to the available cores.
        #[arg(long)]
        parallelism: Option<usize>,
        /// Keep a per-generation series CSV for every run.
        #[arg(long)]
        trace: bool,
        /// Write into a non-empty output directory.
        #[arg(long)]
        force: bool,
        /// Only run the named scenario(s).
        #[arg(long)]
        scenario: Vec<String>,
        /// Overrides `base_seed` from the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Extract the Pareto front of a results file.
    Pareto {
        results: PathBuf,
        /// Front CSV; defaults to front.csv next to the results file.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write every scored candidate here.
        #[arg(long)]
        points: Option<PathBuf>,
        /// Average repetitions per configuration before filtering.
        #[arg(long)]
        aggregate: bool,
        /// Recheck the front with the all-pairs filter.
        #[arg(long)]
        verify: bool,
    },
    /// Print the default configuration as JSON.
    DefaultConfig,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Trial { config, seed, out } => cmd_trial(config.as_deref(), seed, &out),
        Command::Sweep {
            config,
            out,
            parallelism,
            trace,
            force,
            scenario,
            seed,
        } => cmd_sweep(
            config.as_deref(),
            seed,
            &out,
            parallelism,
            trace,
            force,
            &scenario,
        ),
        Command::Pareto {
            results,
            out,
            points,
            aggregate,
            verify,
        } => cmd_pareto(
            &results,
            out.as_deref(),
            points.as_deref(),
            aggregate,
            verify,
        ),
        Command::DefaultConfig => {
            println!("{}", ExperimentConfig::default().to_json());
            Ok(0)
        }
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::InvalidConfig(_) | Error::Json(_) | Error::NonSquareCount(_)) => EXIT_CONFIG,
        Some(Error::TopologyInfeasible { .. }) => EXIT_INFEASIBLE,
        _ => 1,
    }
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> anyhow::Result<ExperimentConfig> {
    let mut config = match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = seed {
        config.base_seed = seed;
    }
    Ok(config)
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn write_topology(
    config: &ExperimentConfig,
    scenario: &Scenario,
    setup: &meshsim::experiment::Setup,
    path: &Path,
) -> anyhow::Result<()> {
    let names: Vec<String> = (0..scenario.n_nodes)
        .map(|i| config.profiles[i % config.profiles.len()].name.clone())
        .collect();
    let export = TopologyExport::new(
        &setup.topology,
        scenario.side_m,
        config.node.tx_range_m,
        config.node.detect_range_m,
        &names,
    );
    serde_json::to_writer_pretty(create(path)?, &export)?;
    Ok(())
}

fn cmd_trial(config_path: Option<&Path>, seed: Option<u64>, out: &Path) -> anyhow::Result<u8> {
    let config = load_config(config_path, seed)?;
    let scenario = &config.trial.scenario;
    let vars = config.trial.vars;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("config.json"), config.to_json())?;

    let setup = prepare_setup(&config, scenario, setup_seed(config.base_seed, scenario, 0))?;
    write_topology(&config, scenario, &setup, &out.join("topology.json"))?;
    setup.field.write_csv(create(&out.join("field.csv"))?)?;

    let seed = cell_seed(config.base_seed, scenario, &vars, 0);
    let output = run_simulation(&simulation_input(&config, &setup, vars, seed))?;
    write_series(&output.history, create(&out.join("series.csv"))?)?;
    write_ledger(&output.history, create(&out.join("ledger.csv"))?)?;

    let o = &output.objectives;
    println!(
        "scenario {} ({} nodes, {} m, {}), frequency {}, threshold {}, {}",
        scenario.name,
        scenario.n_nodes,
        scenario.side_m,
        scenario.placement,
        vars.sharing_frequency,
        vars.resend_threshold,
        vars.strategy
    );
    println!("seed           {seed}");
    println!("reliability    {:.6}", o.reliability);
    println!("energy_j       {:.6}", o.energy_j_per_node_per_gen);
    println!("latency_gens   {}", o.latency_generations);
    if let Some(v) = &output.violation {
        println!("violation      {}", v.kind());
        eprintln!("aborted: {v}");
        return Ok(EXIT_VIOLATION);
    }
    if o.converged {
        println!("converged      yes");
    } else {
        println!(
            "converged      no (stopped at max_rounds = {})",
            config.convergence.max_rounds
        );
    }
    Ok(0)
}

fn trace_name(r: &SimResult) -> String {
    format!(
        "{}__f{}_t{}_{}__rep{}.csv",
        r.scenario.name,
        r.vars.sharing_frequency,
        r.vars.resend_threshold,
        r.vars.strategy,
        r.repetition
    )
}

fn cmd_sweep(
    config_path: Option<&Path>,
    seed: Option<u64>,
    out: &Path,
    parallelism: Option<usize>,
    trace: bool,
    force: bool,
    only: &[String],
) -> anyhow::Result<u8> {
    let mut config = load_config(config_path, seed)?;
    if !only.is_empty() {
        for name in only {
            if !config.scenarios.iter().any(|s| &s.name == name) {
                return Err(Error::InvalidConfig(format!("no scenario named {name:?}")).into());
            }
        }
        config.scenarios.retain(|s| only.contains(&s.name));
    }
    if out.exists() && fs::read_dir(out)?.next().is_some() && !force {
        bail!("{} is not empty; pass --force to overwrite", out.display());
    }
    for sub in ["topologies", "traces"] {
        let dir = out.join(sub);
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
    }
    fs::create_dir_all(out.join("topologies"))?;
    if trace {
        fs::create_dir_all(out.join("traces"))?;
    }
    fs::write(out.join("config.json"), config.to_json())?;

    for scenario in &config.scenarios {
        for rep in 0..config.repetitions {
            match prepare_setup(
                &config,
                scenario,
                setup_seed(config.base_seed, scenario, rep),
            ) {
                Ok(setup) => {
                    let path = out
                        .join("topologies")
                        .join(format!("{}__rep{rep}.json", scenario.name));
                    write_topology(&config, scenario, &setup, &path)?;
                }
                Err(Error::TopologyInfeasible { attempts }) => {
                    eprintln!("warning: {} repetition {rep}: no connected topology in {attempts} attempts", scenario.name);
                }
                Err(e) => return Err(e.into()),
            }
        }
    }

    let workers = parallelism
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1);
    let grid = config.grid.expand();
    let started = Instant::now();
    let mut writer = ResultsWriter::create(&out.join("results.csv"))?;
    let traces = out.join("traces");
    let results = run_sweep(
        &config,
        &config.scenarios,
        &grid,
        workers,
        trace,
        |r, output: Option<&SimOutput>| {
            writer.append(r)?;
            if let Some(output) = output {
                let path = traces.join(trace_name(r));
                let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
                write_series(&output.history, BufWriter::new(file))?;
            }
            Ok(())
        },
    )?;

    let violations = results.iter().filter(|r| r.violation.is_some()).count();
    let not_converged = results
        .iter()
        .filter(|r| r.violation.is_none() && !r.objectives.converged)
        .count();
    println!("rows           {}", results.len());
    println!("violations     {violations}");
    println!("not converged  {not_converged}");
    println!(
        "wall time      {:.1} s ({workers} workers)",
        started.elapsed().as_secs_f64()
    );
    println!("results        {}", out.join("results.csv").display());
    Ok(0)
}

fn cmd_pareto(
    results_path: &Path,
    out: Option<&Path>,
    points: Option<&Path>,
    aggregate: bool,
    verify: bool,
) -> anyhow::Result<u8> {
    let results = load_results(results_path)?;
    let analysis = analyze(&results, aggregate)?;
    if verify {
        let mismatches = verify_front(&analysis);
        if mismatches > 0 {
            bail!("front disagrees with the all-pairs filter on {mismatches} row(s)");
        }
        println!("verified: front matches the all-pairs filter");
    }
    let out = match out {
        Some(p) => p.to_path_buf(),
        None => results_path.with_file_name("front.csv"),
    };
    write_scored(analysis.front(), create(&out)?)?;
    if let Some(points) = points {
        write_scored(&analysis.rows, create(points)?)?;
    }

    let front: Vec<_> = analysis.front().collect();
    println!(
        "{} candidate(s), {} excluded (violation or no convergence), {} on the front",
        analysis.rows.len(),
        analysis.excluded,
        front.len()
    );
    println!(
        "{:>6}  {:<20} {:>4} {:>4} {:<17} {:>4} {:>11} {:>11} {:>8} {:>6}",
        "id",
        "scenario",
        "freq",
        "thr",
        "strategy",
        "rep",
        "reliability",
        "energy_j",
        "latency",
        "score"
    );
    for r in front {
        println!(
            "{:>6}  {:<20} {:>4} {:>4} {:<17} {:>4} {:>11.4} {:>11.4} {:>8.2} {:>6.3}",
            r.id,
            r.scenario,
            r.sharing_frequency,
            r.resend_threshold,
            r.strategy.as_str(),
            r.repetition,
            r.reliability,
            r.energy_j,
            r.latency_gens,
            r.score
        );
    }
    println!("front written to {}", out.display());
    Ok(0)
}
