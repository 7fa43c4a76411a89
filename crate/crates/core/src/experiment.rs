//! Sweep driver: scenarios x decision-variable grid x repetitions.
//!
//! Each `(scenario, repetition)` pair gets one field and one topology, reused
//! by every grid cell so decision-variable effects are not confounded by
//! placement randomness. Every cell has its own derived seed and can be
//! re-run in isolation with [`run_cell`].

use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::metrics::{run_simulation, ObjectiveTriple, SimOutput, SimulationInput, ViolationKind};
use crate::protocol::Strategy;
use crate::region::{generate_field, TemperatureField};
use crate::seed;
use crate::topology::{build_valid_topology, PlacementKind, Topology, TopologyRequest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub side_m: f64,
    pub n_nodes: usize,
    pub placement: PlacementKind,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            side_m: 300.0,
            n_nodes: 81,
            placement: PlacementKind::Uniform,
        }
    }
}

impl Scenario {
    pub fn new(name: &str, side_m: f64, n_nodes: usize, placement: PlacementKind) -> Self {
        Self {
            name: name.into(),
            side_m,
            n_nodes,
            placement,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains([',', '/', '\\', '\n']) {
            return Err(Error::InvalidConfig(format!(
                "scenario name {:?} must be non-empty without separators",
                self.name
            )));
        }
        if self.n_nodes == 0 {
            return Err(Error::InvalidConfig(format!(
                "scenario {:?} has no nodes",
                self.name
            )));
        }
        if !(self.side_m > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "scenario {:?} needs a positive side",
                self.name
            )));
        }
        if self.placement == PlacementKind::Uniform {
            let r = (self.n_nodes as f64).sqrt().round() as usize;
            if r * r != self.n_nodes {
                return Err(Error::InvalidConfig(format!(
                    "scenario {:?}: uniform placement needs a perfect-square node count, got {}",
                    self.name, self.n_nodes
                )));
            }
        }
        Ok(())
    }
}

/// The four evaluation scenarios (side lengths in meters).
pub fn standard_scenarios() -> Vec<Scenario> {
    vec![
        Scenario::new("300m-81-uniform", 300.0, 81, PlacementKind::Uniform),
        Scenario::new("300m-100-random", 300.0, 100, PlacementKind::Random),
        Scenario::new("500m-121-uniform", 500.0, 121, PlacementKind::Uniform),
        Scenario::new("500m-250-random", 500.0, 250, PlacementKind::Random),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionVars {
    pub sharing_frequency: u32,
    pub resend_threshold: u32,
    pub strategy: Strategy,
}

impl Default for DecisionVars {
    fn default() -> Self {
        Self {
            sharing_frequency: 1,
            resend_threshold: 0,
            strategy: Strategy::Random,
        }
    }
}

impl DecisionVars {
    pub fn validate(&self) -> Result<()> {
        if self.sharing_frequency == 0 {
            return Err(Error::InvalidConfig(
                "sharing_frequency must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Frequency 1..=5 x threshold 0,5,..,50 x {random, least-interacted}.
pub fn default_grid() -> Vec<DecisionVars> {
    crate::config::GridConfig::default().expand()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub scenario: Scenario,
    pub vars: DecisionVars,
    pub repetition: u32,
    pub seed: u64,
    pub objectives: ObjectiveTriple,
    pub violation: Option<ViolationKind>,
    pub wall_time_s: f64,
}

impl SimResult {
    /// Usable as a Pareto candidate.
    pub fn is_candidate(&self) -> bool {
        self.violation.is_none() && self.objectives.converged
    }
}

pub type ResultSet = Vec<SimResult>;

pub fn cell_seed(base_seed: u64, scenario: &Scenario, vars: &DecisionVars, repetition: u32) -> u64 {
    seed::derive(
        base_seed,
        &[
            "cell".into(),
            scenario.name.as_str().into(),
            vars.sharing_frequency.into(),
            vars.resend_threshold.into(),
            vars.strategy.as_str().into(),
            repetition.into(),
        ],
    )
}

/// Seed shared by the field and topology of one `(scenario, repetition)`.
pub fn setup_seed(base_seed: u64, scenario: &Scenario, repetition: u32) -> u64 {
    seed::derive(
        base_seed,
        &[
            "setup".into(),
            scenario.name.as_str().into(),
            repetition.into(),
        ],
    )
}

/// Field and topology shared by every grid cell of a `(scenario, repetition)`.
#[derive(Debug, Clone)]
pub struct Setup {
    pub field: TemperatureField,
    pub topology: Topology,
}

pub fn prepare_setup(
    config: &ExperimentConfig,
    scenario: &Scenario,
    setup_seed: u64,
) -> Result<Setup> {
    let region = config
        .region
        .region_config(scenario.side_m, seed::derive(setup_seed, &["field".into()]));
    let field = generate_field(&region)?;
    let request = TopologyRequest {
        n_nodes: scenario.n_nodes,
        side_m: scenario.side_m,
        kind: scenario.placement,
        tx_range_m: config.node.tx_range_m,
        max_placement_attempts: config.max_placement_attempts,
    };
    let topology = build_valid_topology(&request, seed::derive(setup_seed, &["topology".into()]))?;
    Ok(Setup { field, topology })
}

pub fn simulation_input<'a>(
    config: &'a ExperimentConfig,
    setup: &'a Setup,
    vars: DecisionVars,
    seed: u64,
) -> SimulationInput<'a> {
    SimulationInput {
        field: &setup.field,
        topology: &setup.topology,
        profiles: &config.profiles,
        node_params: &config.node,
        vars,
        radio: &config.radio,
        convergence: &config.convergence,
        phi: config.phi,
        epsilon_c: config.epsilon_c,
        seed,
    }
}

fn infeasible_result(
    scenario: &Scenario,
    vars: DecisionVars,
    repetition: u32,
    seed: u64,
) -> SimResult {
    SimResult {
        scenario: scenario.clone(),
        vars,
        repetition,
        seed,
        objectives: ObjectiveTriple {
            reliability: 0.0,
            energy_j_per_node_per_gen: 0.0,
            latency_generations: 0,
            converged: false,
        },
        violation: Some(ViolationKind::TopologyInfeasible),
        wall_time_s: 0.0,
    }
}

fn execute(
    config: &ExperimentConfig,
    setup: std::result::Result<&Setup, ()>,
    scenario: &Scenario,
    vars: DecisionVars,
    repetition: u32,
) -> Result<(SimResult, Option<SimOutput>)> {
    let seed = cell_seed(config.base_seed, scenario, &vars, repetition);
    let Ok(setup) = setup else {
        return Ok((infeasible_result(scenario, vars, repetition, seed), None));
    };
    let started = Instant::now();
    let output = run_simulation(&simulation_input(config, setup, vars, seed))?;
    let wall_time_s = if config.record_wall_time {
        started.elapsed().as_secs_f64()
    } else {
        0.0
    };
    let result = SimResult {
        scenario: scenario.clone(),
        vars,
        repetition,
        seed,
        objectives: output.objectives,
        violation: output.violation.as_ref().map(|v| v.kind()),
        wall_time_s,
    };
    Ok((result, Some(output)))
}

/// Re-run a single sweep cell from scratch.
pub fn run_cell(
    config: &ExperimentConfig,
    scenario: &Scenario,
    vars: DecisionVars,
    repetition: u32,
) -> Result<(SimResult, Option<SimOutput>)> {
    let setup = match prepare_setup(
        config,
        scenario,
        setup_seed(config.base_seed, scenario, repetition),
    ) {
        Ok(s) => Some(s),
        Err(Error::TopologyInfeasible { .. }) => None,
        Err(e) => return Err(e),
    };
    execute(config, setup.as_ref().ok_or(()), scenario, vars, repetition)
}

/// Job order: scenario, then grid cell, then repetition.
pub fn sweep_jobs(
    scenarios: &[Scenario],
    grid: &[DecisionVars],
    repetitions: u32,
) -> Vec<(usize, DecisionVars, u32)> {
    let mut jobs = Vec::new();
    for s in 0..scenarios.len() {
        for &vars in grid {
            for rep in 0..repetitions {
                jobs.push((s, vars, rep));
            }
        }
    }
    jobs
}

/// Run every `(scenario, vars, repetition)` cell on `parallelism` workers.
///
/// `sink` sees each result in job order as soon as it and all earlier jobs
/// are done, along with the full simulation output when `keep_output` is set.
/// Constraint violations and infeasible topologies are rows, not errors.
pub fn run_sweep<F>(
    config: &ExperimentConfig,
    scenarios: &[Scenario],
    grid: &[DecisionVars],
    parallelism: usize,
    keep_output: bool,
    mut sink: F,
) -> Result<ResultSet>
where
    F: FnMut(&SimResult, Option<&SimOutput>) -> Result<()>,
{
    let repetitions = config.repetitions;
    let jobs = sweep_jobs(scenarios, grid, repetitions);

    let mut seen = HashSet::with_capacity(jobs.len());
    for &(s, vars, rep) in &jobs {
        if !seen.insert(cell_seed(config.base_seed, &scenarios[s], &vars, rep)) {
            return Err(Error::InvalidConfig(format!(
                "derived seed collision at scenario {:?} {vars:?} repetition {rep}",
                scenarios[s].name
            )));
        }
    }

    let mut setups: BTreeMap<(usize, u32), std::result::Result<Setup, ()>> = BTreeMap::new();
    for (s, scenario) in scenarios.iter().enumerate() {
        for rep in 0..repetitions {
            let setup = match prepare_setup(
                config,
                scenario,
                setup_seed(config.base_seed, scenario, rep),
            ) {
                Ok(setup) => Ok(setup),
                Err(Error::TopologyInfeasible { .. }) => Err(()),
                Err(e) => return Err(e),
            };
            setups.insert((s, rep), setup);
        }
    }

    let workers = parallelism.clamp(1, jobs.len().max(1));
    let next = AtomicUsize::new(0);
    let mut results: Vec<Option<SimResult>> = vec![None; jobs.len()];

    std::thread::scope(|scope| -> Result<()> {
        let (tx, rx) = mpsc::channel::<(usize, Result<(SimResult, Option<SimOutput>)>)>();
        for _ in 0..workers {
            let tx = tx.clone();
            let (jobs, setups, next) = (&jobs, &setups, &next);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(s, vars, rep)) = jobs.get(i) else {
                    break;
                };
                let setup = setups[&(s, rep)].as_ref().map_err(|_| ());
                let out = execute(config, setup, &scenarios[s], vars, rep)
                    .map(|(r, o)| (r, if keep_output { o } else { None }));
                if tx.send((i, out)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        let mut pending: BTreeMap<usize, (SimResult, Option<SimOutput>)> = BTreeMap::new();
        let mut cursor = 0;
        for (i, out) in rx {
            match out {
                Ok(done) => {
                    pending.insert(i, done);
                }
                Err(e) => {
                    // Stop handing out work; in-flight jobs finish and are dropped.
                    next.store(jobs.len(), Ordering::Relaxed);
                    return Err(e);
                }
            }
            while let Some((result, output)) = pending.remove(&cursor) {
                sink(&result, output.as_ref())?;
                results[cursor] = Some(result);
                cursor += 1;
            }
        }
        Ok(())
    })?;

    Ok(results
        .into_iter()
        .map(|r| r.expect("every job reported"))
        .collect())
}

pub const RESULT_COLUMNS: [&str; 15] = [
    "scenario",
    "side_m",
    "n_nodes",
    "placement",
    "sharing_frequency",
    "resend_threshold",
    "strategy",
    "repetition",
    "seed",
    "reliability",
    "energy_j",
    "latency_gens",
    "converged",
    "violation",
    "wall_time_s",
];

#[derive(Debug, Serialize, Deserialize)]
struct ResultRow {
    scenario: String,
    side_m: f64,
    n_nodes: usize,
    placement: PlacementKind,
    sharing_frequency: u32,
    resend_threshold: u32,
    strategy: Strategy,
    repetition: u32,
    seed: u64,
    reliability: f64,
    energy_j: f64,
    latency_gens: usize,
    converged: bool,
    violation: Option<ViolationKind>,
    wall_time_s: f64,
}

impl From<&SimResult> for ResultRow {
    fn from(r: &SimResult) -> Self {
        Self {
            scenario: r.scenario.name.clone(),
            side_m: r.scenario.side_m,
            n_nodes: r.scenario.n_nodes,
            placement: r.scenario.placement,
            sharing_frequency: r.vars.sharing_frequency,
            resend_threshold: r.vars.resend_threshold,
            strategy: r.vars.strategy,
            repetition: r.repetition,
            seed: r.seed,
            reliability: r.objectives.reliability,
            energy_j: r.objectives.energy_j_per_node_per_gen,
            latency_gens: r.objectives.latency_generations,
            converged: r.objectives.converged,
            violation: r.violation,
            wall_time_s: r.wall_time_s,
        }
    }
}

impl From<ResultRow> for SimResult {
    fn from(r: ResultRow) -> Self {
        Self {
            scenario: Scenario {
                name: r.scenario,
                side_m: r.side_m,
                n_nodes: r.n_nodes,
                placement: r.placement,
            },
            vars: DecisionVars {
                sharing_frequency: r.sharing_frequency,
                resend_threshold: r.resend_threshold,
                strategy: r.strategy,
            },
            repetition: r.repetition,
            seed: r.seed,
            objectives: ObjectiveTriple {
                reliability: r.reliability,
                energy_j_per_node_per_gen: r.energy_j,
                latency_generations: r.latency_gens,
                converged: r.converged,
            },
            violation: r.violation,
            wall_time_s: r.wall_time_s,
        }
    }
}

/// Appends result rows to a CSV file, flushing after every row.
pub struct ResultsWriter {
    inner: csv::Writer<BufWriter<File>>,
    path: PathBuf,
}

impl ResultsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = OpenOptions::new()
            .write(true)
            .create(true)
            .truncate(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let mut inner = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(BufWriter::new(file));
        inner.write_record(RESULT_COLUMNS)?;
        inner.flush().map_err(|e| Error::io(path, e))?;
        Ok(Self {
            inner,
            path: path.to_path_buf(),
        })
    }

    pub fn append(&mut self, result: &SimResult) -> Result<()> {
        self.inner.serialize(ResultRow::from(result))?;
        self.inner.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn write_results(path: &Path, results: &[SimResult]) -> Result<()> {
    let mut w = ResultsWriter::create(path)?;
    for r in results {
        w.append(r)?;
    }
    Ok(())
}

pub fn load_results(path: &Path) -> Result<ResultSet> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    if file.metadata().map_err(|e| Error::io(path, e))?.len() == 0 {
        return Ok(Vec::new());
    }
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader.headers()?.clone();
    if headers.iter().ne(RESULT_COLUMNS) {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            message: format!(
                "expected columns {}, found {}",
                RESULT_COLUMNS.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut out = Vec::new();
    for row in reader.deserialize::<ResultRow>() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            let message = match e.kind() {
                csv::ErrorKind::UnequalLengths {
                    expected_len, len, ..
                } => {
                    format!("expected {expected_len} fields, found {len} (truncated row?)")
                }
                _ => e.to_string(),
            };
            Error::Parse {
                path: path.to_path_buf(),
                line,
                message,
            }
        })?;
        out.push(row.into());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_shape() {
        let grid = default_grid();
        assert_eq!(grid.len(), 110);
        assert_eq!(
            grid[0],
            DecisionVars {
                sharing_frequency: 1,
                resend_threshold: 0,
                strategy: Strategy::Random
            }
        );
        let unique: HashSet<_> = grid.iter().collect();
        assert_eq!(unique.len(), grid.len());
    }

    #[test]
    fn job_counts() {
        let grid = default_grid();
        assert_eq!(sweep_jobs(&standard_scenarios()[..1], &grid, 3).len(), 330);
        assert_eq!(sweep_jobs(&standard_scenarios(), &grid, 3).len(), 1320);
    }

    #[test]
    fn seeds_are_distinct_over_the_full_sweep() {
        let base = 2025;
        let mut seen = HashSet::new();
        for (s, vars, rep) in sweep_jobs(&standard_scenarios(), &default_grid(), 3) {
            assert!(seen.insert(cell_seed(base, &standard_scenarios()[s], &vars, rep)));
        }
    }

    fn sample(rep: u32, violation: Option<ViolationKind>) -> SimResult {
        SimResult {
            scenario: Scenario::new("desk", 100.0, 16, PlacementKind::Uniform),
            vars: DecisionVars {
                sharing_frequency: 3,
                resend_threshold: 25,
                strategy: Strategy::LeastInteracted,
            },
            repetition: rep,
            seed: u64::MAX - rep as u64,
            objectives: ObjectiveTriple {
                reliability: 0.1 + 0.2,
                energy_j_per_node_per_gen: 1.0 / 3.0,
                latency_generations: 7,
                converged: violation.is_none(),
            },
            violation,
            wall_time_s: 0.012345678901234,
        }
    }

    #[test]
    fn results_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.csv");
        let rows = vec![
            sample(0, None),
            sample(1, Some(ViolationKind::Energy)),
            sample(2, Some(ViolationKind::TopologyInfeasible)),
        ];
        write_results(&path, &rows).unwrap();
        assert_eq!(load_results(&path).unwrap(), rows);
    }

    #[test]
    fn truncated_last_line_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.csv");
        write_results(&path, &[sample(0, None), sample(1, None)]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let cut = &text[..text.len() - 40];
        std::fs::write(&path, cut).unwrap();
        match load_results(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn empty_and_mismatched_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        std::fs::write(&path, "").unwrap();
        assert!(load_results(&path).unwrap().is_empty());

        std::fs::write(&path, "a,b,c\n1,2,3\n").unwrap();
        assert!(matches!(load_results(&path), Err(Error::Schema { .. })));
    }
}
