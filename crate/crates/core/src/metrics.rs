//! Objectives, convergence detection, constraint enforcement and the
//! single-simulation driver.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::DecisionVars;
use crate::nodemodel::{sense, McuProfile, NodeParams, NodeState};
use crate::protocol::{run_generation, GenerationContext, GenerationStats, RadioConfig};
use crate::region::TemperatureField;
use crate::topology::{is_connected, MeshGraph, Topology};

/// Constraint breach that terminates a simulation.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// A node's battery reached zero.
    Activity {
        node: usize,
    },
    /// Mean battery fraction fell below the floor.
    Energy {
        mean_battery: f64,
    },
    Connectivity,
}

impl Violation {
    pub fn kind(&self) -> ViolationKind {
        match self {
            Violation::Activity { .. } => ViolationKind::Activity,
            Violation::Energy { .. } => ViolationKind::Energy,
            Violation::Connectivity => ViolationKind::Connectivity,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Activity { node } => {
                write!(f, "activity constraint: node {node} ran out of energy")
            }
            Violation::Energy { mean_battery } => write!(
                f,
                "energy constraint: mean battery fell to {:.2}%",
                mean_battery * 100.0
            ),
            Violation::Connectivity => {
                f.write_str("connectivity constraint: graph is disconnected")
            }
        }
    }
}

/// Why a run has no usable objectives, as recorded in result rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Activity,
    Energy,
    Connectivity,
    TopologyInfeasible,
}

impl ViolationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationKind::Activity => "activity",
            ViolationKind::Energy => "energy",
            ViolationKind::Connectivity => "connectivity",
            ViolationKind::TopologyInfeasible => "topology_infeasible",
        }
    }
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ViolationKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "activity" => Ok(ViolationKind::Activity),
            "energy" => Ok(ViolationKind::Energy),
            "connectivity" => Ok(ViolationKind::Connectivity),
            "topology_infeasible" => Ok(ViolationKind::TopologyInfeasible),
            other => Err(format!("unknown violation kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceConfig {
    /// Average-accuracy threshold.
    pub psi: f64,
    /// Minimum-accuracy threshold.
    pub theta: f64,
    pub max_rounds: usize,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            psi: 0.95,
            theta: 0.80,
            max_rounds: 50,
        }
    }
}

impl ConvergenceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta <= self.psi && self.psi < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "need 0 < theta <= psi < 1, got theta={} psi={}",
                self.theta, self.psi
            )));
        }
        if self.max_rounds == 0 {
            return Err(Error::InvalidConfig("max_rounds must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTriple {
    pub reliability: f64,
    pub energy_j_per_node_per_gen: f64,
    pub latency_generations: usize,
    pub converged: bool,
}

/// Mean over generations of the per-generation mean delivery ratio.
/// Generations in which no node sent anything are skipped.
pub fn reliability(history: &[GenerationStats]) -> f64 {
    let per_gen: Vec<f64> = history
        .iter()
        .filter_map(GenerationStats::generation_reliability)
        .collect();
    if per_gen.is_empty() {
        return 0.0;
    }
    per_gen.iter().sum::<f64>() / per_gen.len() as f64
}

/// Mean over generations of the mean per-node energy.
pub fn energy_consumption(history: &[GenerationStats]) -> f64 {
    if history.is_empty() {
        return 0.0;
    }
    history
        .iter()
        .map(GenerationStats::mean_energy_j)
        .sum::<f64>()
        / history.len() as f64
}

/// Accuracy predicate for convergence. The fallback clause accepts an average
/// within one percentage point of the best node.
pub fn check_convergence(min_g: f64, avg_g: f64, max_g: f64, cfg: &ConvergenceConfig) -> bool {
    (avg_g > cfg.psi || avg_g + 0.01 >= max_g) && min_g > cfg.theta
}

pub fn enforce_constraints(
    nodes: &[NodeState],
    graph: &MeshGraph,
    phi: f64,
) -> std::result::Result<(), Violation> {
    if let Some(dead) = nodes.iter().find(|n| n.energy_j <= 0.0) {
        return Err(Violation::Activity { node: dead.node_id });
    }
    let mean_battery =
        nodes.iter().map(NodeState::battery_fraction).sum::<f64>() / nodes.len() as f64;
    if mean_battery < phi {
        return Err(Violation::Energy { mean_battery });
    }
    if !is_connected(graph) {
        return Err(Violation::Connectivity);
    }
    Ok(())
}

/// Everything needed to run one simulation.
#[derive(Debug, Clone, Copy)]
pub struct SimulationInput<'a> {
    pub field: &'a TemperatureField,
    pub topology: &'a Topology,
    /// Assigned round-robin by node id.
    pub profiles: &'a [McuProfile],
    pub node_params: &'a NodeParams,
    pub vars: DecisionVars,
    pub radio: &'a RadioConfig,
    pub convergence: &'a ConvergenceConfig,
    /// Floor on the mean battery fraction.
    pub phi: f64,
    pub epsilon_c: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub objectives: ObjectiveTriple,
    pub violation: Option<Violation>,
    pub history: Vec<GenerationStats>,
    pub initial_energy_j: Vec<f64>,
    pub final_energy_j: Vec<f64>,
}

pub fn build_nodes(input: &SimulationInput<'_>) -> Result<Vec<NodeState>> {
    if input.profiles.is_empty() {
        return Err(Error::InvalidConfig(
            "at least one MCU profile is required".into(),
        ));
    }
    let positions = &input.topology.placement.positions;
    positions
        .iter()
        .enumerate()
        .map(|(id, &pos)| {
            let mut node = NodeState::new(
                id,
                pos,
                input.profiles[id % input.profiles.len()].clone(),
                input.node_params,
                input.topology.graph.neighbors(id),
                input.vars.resend_threshold,
                input.field.dim(),
            );
            node.model = sense(&node, input.field)?;
            Ok(node)
        })
        .collect()
}

/// Sense, then run generations until the convergence predicate holds, a
/// constraint is violated, or `max_rounds` elapse.
pub fn run_simulation(input: &SimulationInput<'_>) -> Result<SimOutput> {
    input.convergence.validate()?;
    input.radio.validate()?;
    input.node_params.validate()?;
    if input.vars.sharing_frequency == 0 {
        return Err(Error::InvalidConfig(
            "sharing_frequency must be at least 1".into(),
        ));
    }
    let mut nodes = build_nodes(input)?;
    let initial_energy_j: Vec<f64> = nodes.iter().map(|n| n.energy_j).collect();
    let graph = &input.topology.graph;
    let ctx = GenerationContext {
        graph,
        field: input.field,
        radio: input.radio,
        strategy: input.vars.strategy,
        sharing_frequency: input.vars.sharing_frequency as usize,
        epsilon_c: input.epsilon_c,
        seed: input.seed,
    };

    let mut history = Vec::new();
    let mut violation = enforce_constraints(&nodes, graph, input.phi).err();
    let mut latency = None;
    if violation.is_none() {
        for round in 1..=input.convergence.max_rounds {
            let stats = match run_generation(&mut nodes, &ctx, round) {
                Ok(stats) => stats,
                Err(v) => {
                    violation = Some(v);
                    break;
                }
            };
            let done = check_convergence(
                stats.min_accuracy,
                stats.avg_accuracy,
                stats.max_accuracy,
                input.convergence,
            );
            history.push(stats);
            if let Err(v) = enforce_constraints(&nodes, graph, input.phi) {
                violation = Some(v);
                break;
            }
            if done {
                latency = Some(round);
                break;
            }
        }
    }

    let objectives = ObjectiveTriple {
        reliability: reliability(&history),
        energy_j_per_node_per_gen: energy_consumption(&history),
        latency_generations: latency.unwrap_or(history.len()),
        converged: latency.is_some() && violation.is_none(),
    };
    Ok(SimOutput {
        objectives,
        violation,
        history,
        initial_energy_j,
        final_energy_j: nodes.iter().map(|n| n.energy_j).collect(),
    })
}

pub const SERIES_HEADER: [&str; 8] = [
    "generation",
    "min_reliability",
    "avg_reliability",
    "max_reliability",
    "energy_j",
    "min_accuracy",
    "avg_accuracy",
    "max_accuracy",
];

/// Per-generation time series: one row per executed generation.
pub fn write_series<W: Write>(history: &[GenerationStats], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SERIES_HEADER)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for g in history {
        let range = g.reliability_range();
        w.write_record([
            g.round_index.to_string(),
            opt(range.map(|r| r.0)),
            opt(g.generation_reliability()),
            opt(range.map(|r| r.1)),
            g.mean_energy_j().to_string(),
            g.min_accuracy.to_string(),
            g.avg_accuracy.to_string(),
            g.max_accuracy.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<series csv>", e))?;
    Ok(())
}

/// Raw per-send ledger across all generations.
pub fn write_ledger<W: Write>(history: &[GenerationStats], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "generation",
        "sender",
        "target",
        "num_successful",
        "total_messages",
        "retries",
        "sender_energy_j",
        "target_energy_j",
    ])?;
    for g in history {
        for s in &g.sends {
            w.write_record([
                g.round_index.to_string(),
                s.sender.to_string(),
                s.target.to_string(),
                s.num_successful.to_string(),
                s.total_messages.to_string(),
                s.retries.to_string(),
                s.sender_energy_j.to_string(),
                s.target_energy_j.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<ledger csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{SendRecord, Strategy};
    use crate::region::{generate_field, RegionConfig};
    use crate::topology::{
        build_graph, build_valid_topology, Placement, PlacementKind, TopologyRequest,
    };

    fn gen(round: usize, rel: &[Option<f64>], energy: &[f64]) -> GenerationStats {
        GenerationStats {
            round_index: round,
            per_node_reliability: rel.to_vec(),
            per_node_energy_j: energy.to_vec(),
            min_accuracy: 0.0,
            avg_accuracy: 0.0,
            max_accuracy: 0.0,
            sends: Vec::<SendRecord>::new(),
        }
    }

    #[test]
    fn reliability_examples() {
        let full = [gen(1, &[Some(1.0), Some(1.0)], &[0.0, 0.0])];
        assert_eq!(reliability(&full), 1.0);
        let two = [
            gen(1, &[Some(1.0), Some(1.0)], &[0.0, 0.0]),
            gen(2, &[Some(0.25), Some(0.75)], &[0.0, 0.0]),
        ];
        assert_eq!(reliability(&two), 0.75);
        // Non-sending nodes contribute no ratio.
        let partial = [gen(1, &[Some(0.5), None], &[0.0, 0.0])];
        assert_eq!(reliability(&partial), 0.5);
    }

    #[test]
    fn energy_examples() {
        assert_eq!(
            energy_consumption(&[gen(1, &[None, None], &[0.0, 0.0])]),
            0.0
        );
        let one = [gen(1, &[None, None], &[0.2, 0.4])];
        assert!((energy_consumption(&one) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn convergence_predicate() {
        let cfg = ConvergenceConfig {
            psi: 0.95,
            theta: 0.80,
            max_rounds: 50,
        };
        assert!(check_convergence(0.85, 0.96, 0.99, &cfg));
        assert!(check_convergence(0.85, 0.60, 0.605, &cfg));
        assert!(!check_convergence(0.79, 0.99, 1.0, &cfg));
        assert!(!check_convergence(0.85, 0.90, 0.95, &cfg));
    }

    #[test]
    fn convergence_config_validation() {
        assert!(ConvergenceConfig::default().validate().is_ok());
        for (psi, theta, rounds) in [(1.0, 0.8, 5), (0.7, 0.8, 5), (0.9, 0.0, 5), (0.9, 0.8, 0)] {
            let cfg = ConvergenceConfig {
                psi,
                theta,
                max_rounds: rounds,
            };
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    fn lattice_nodes(energies: &[f64]) -> (Vec<NodeState>, MeshGraph) {
        let placement = Placement {
            positions: (0..energies.len())
                .map(|i| (10.0 * i as f64 + 1.0, 1.0))
                .collect(),
            kind: PlacementKind::Random,
        };
        let graph = build_graph(&placement, 50.0);
        let profile = McuProfile {
            name: "p".into(),
            voltage_v: 3.3,
            tx_current_a: 0.01,
            rx_current_a: 0.01,
        };
        let nodes = energies
            .iter()
            .enumerate()
            .map(|(i, &e)| {
                let mut n = NodeState::new(
                    i,
                    placement.positions[i],
                    profile.clone(),
                    &NodeParams::default(),
                    graph.neighbors(i),
                    0,
                    2,
                );
                n.energy_j = e;
                n
            })
            .collect();
        (nodes, graph)
    }

    #[test]
    fn constraint_examples() {
        let (nodes, graph) = lattice_nodes(&[1000.0, 1000.0, 1000.0]);
        assert_eq!(enforce_constraints(&nodes, &graph, 0.7), Ok(()));

        let (nodes, graph) = lattice_nodes(&[640.0, 640.0]);
        assert!(matches!(
            enforce_constraints(&nodes, &graph, 0.7),
            Err(Violation::Energy { .. })
        ));

        let (nodes, graph) = lattice_nodes(&[1000.0, 0.0, 1000.0]);
        assert_eq!(
            enforce_constraints(&nodes, &graph, 0.5),
            Err(Violation::Activity { node: 1 })
        );

        let (nodes, _) = lattice_nodes(&[1000.0, 1000.0]);
        let split = MeshGraph::from_adjacency(vec![vec![], vec![]]);
        assert_eq!(
            enforce_constraints(&nodes, &split, 0.5),
            Err(Violation::Connectivity)
        );
    }

    fn default_profiles() -> Vec<McuProfile> {
        vec![McuProfile {
            name: "p".into(),
            voltage_v: 3.3,
            tx_current_a: 0.0134,
            rx_current_a: 0.0054,
        }]
    }

    #[test]
    fn clique_converges_in_one_generation() {
        // 4 nodes within range of each other, every node sends to all others.
        let field = generate_field(&RegionConfig {
            side_m: 40.0,
            ..RegionConfig::default()
        })
        .unwrap();
        let placement = Placement {
            positions: vec![(10.0, 10.0), (30.0, 10.0), (10.0, 30.0), (30.0, 30.0)],
            kind: PlacementKind::Random,
        };
        let topology = Topology {
            graph: build_graph(&placement, 50.0),
            placement,
            attempts: 1,
        };
        let node_params = NodeParams {
            message_send_success_rate: 1.0,
            ack_send_success_rate: 1.0,
            ..NodeParams::default()
        };
        let profiles = default_profiles();
        let radio = RadioConfig::default();
        let conv = ConvergenceConfig::default();
        let input = SimulationInput {
            field: &field,
            topology: &topology,
            profiles: &profiles,
            node_params: &node_params,
            vars: DecisionVars {
                sharing_frequency: 3,
                resend_threshold: 5,
                strategy: Strategy::LeastInteracted,
            },
            radio: &radio,
            convergence: &conv,
            phi: 0.7,
            epsilon_c: 1.0,
            seed: 1,
        };
        let out = run_simulation(&input).unwrap();
        assert!(out.violation.is_none());
        assert!(
            out.objectives.converged,
            "{:?}",
            out.history.last().map(|g| (g.min_accuracy, g.avg_accuracy))
        );
        assert_eq!(out.objectives.latency_generations, 1);
        assert_eq!(out.objectives.reliability, 1.0);
    }

    #[test]
    fn impossible_theta_hits_cap_and_is_deterministic() {
        let field = generate_field(&RegionConfig {
            side_m: 100.0,
            seed: 4,
            ..RegionConfig::default()
        })
        .unwrap();
        let topology = build_valid_topology(
            &TopologyRequest {
                n_nodes: 9,
                side_m: 100.0,
                kind: PlacementKind::Uniform,
                tx_range_m: 50.0,
                max_placement_attempts: 1,
            },
            0,
        )
        .unwrap();
        let profiles = default_profiles();
        let node_params = NodeParams::default();
        let radio = RadioConfig::default();
        let conv = ConvergenceConfig {
            psi: 0.999,
            theta: 0.999,
            max_rounds: 12,
        };
        let input = SimulationInput {
            field: &field,
            topology: &topology,
            profiles: &profiles,
            node_params: &node_params,
            vars: DecisionVars {
                sharing_frequency: 1,
                resend_threshold: 0,
                strategy: Strategy::Random,
            },
            radio: &radio,
            convergence: &conv,
            phi: 0.5,
            epsilon_c: 0.0,
            seed: 8,
        };
        let a = run_simulation(&input).unwrap();
        assert!(!a.objectives.converged);
        assert_eq!(a.objectives.latency_generations, 12);
        assert_eq!(a.history.len(), 12);
        let b = run_simulation(&input).unwrap();
        assert_eq!(a.objectives, b.objectives);
        assert_eq!(a.history, b.history);

        let mut series = Vec::new();
        write_series(&a.history, &mut series).unwrap();
        assert_eq!(String::from_utf8(series).unwrap().lines().count(), 13);
    }
}
