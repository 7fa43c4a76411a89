use meshsim::config::ExperimentConfig;
use meshsim::experiment::{prepare_setup, simulation_input, DecisionVars, Scenario, Setup};
use meshsim::metrics::{energy_consumption, run_simulation, SimOutput, Violation};
use meshsim::nodemodel::NodeParams;
use meshsim::protocol::Strategy;
use meshsim::topology::{MeshGraph, PlacementKind};

fn desk() -> Scenario {
    Scenario::new("desk", 100.0, 16, PlacementKind::Uniform)
}

fn run(
    config: &ExperimentConfig,
    scenario: &Scenario,
    vars: DecisionVars,
    seed: u64,
) -> (Setup, SimOutput) {
    let setup = prepare_setup(config, scenario, seed).unwrap();
    let out = run_simulation(&simulation_input(config, &setup, vars, seed)).unwrap();
    (setup, out)
}

fn vars(k: u32, t: u32, strategy: Strategy) -> DecisionVars {
    DecisionVars {
        sharing_frequency: k,
        resend_threshold: t,
        strategy,
    }
}

#[test]
fn energy_ledger_balances() {
    let config = ExperimentConfig::default();
    let scenarios = [
        desk(),
        Scenario::new("rand", 150.0, 30, PlacementKind::Random),
    ];
    for scenario in &scenarios {
        for (k, t) in [(1, 0), (3, 5), (5, 50)] {
            for strategy in [Strategy::Random, Strategy::LeastInteracted] {
                let (_, out) = run(&config, scenario, vars(k, t, strategy), 11 + k as u64);
                assert!(out.violation.is_none());

                let drained: f64 = out
                    .initial_energy_j
                    .iter()
                    .zip(&out.final_energy_j)
                    .map(|(a, b)| a - b)
                    .sum();
                let charged: f64 = out
                    .history
                    .iter()
                    .flat_map(|g| &g.sends)
                    .map(|s| s.sender_energy_j + s.target_energy_j)
                    .sum();
                assert!((drained - charged).abs() < 1e-9, "{drained} vs {charged}");

                // Mean per node, then mean over generations, straight from the send ledger.
                let n = scenario.n_nodes as f64;
                let per_gen: Vec<f64> = out
                    .history
                    .iter()
                    .map(|g| {
                        g.sends
                            .iter()
                            .map(|s| s.sender_energy_j + s.target_energy_j)
                            .sum::<f64>()
                            / n
                    })
                    .collect();
                let ec = per_gen.iter().sum::<f64>() / per_gen.len() as f64;
                let reported = out.objectives.energy_j_per_node_per_gen;
                assert!((ec - reported).abs() < 1e-12, "{ec} vs {reported}");
                assert_eq!(reported, energy_consumption(&out.history));
            }
        }
    }
}

#[test]
fn unacknowledged_send_costs_follow_airtime() {
    let config = ExperimentConfig::default();
    let (_, out) = run(&config, &desk(), vars(2, 0, Strategy::Random), 3);
    let profiles = &config.profiles;
    for send in out.history.iter().flat_map(|g| &g.sends) {
        let tx = &profiles[send.sender % profiles.len()];
        let rx = &profiles[send.target % profiles.len()];
        let airtime = |count: usize| count as f64 * 80.0 * 8.0 / 250_000.0;
        let sender = tx.voltage_v * tx.tx_current_a * airtime(send.total_messages);
        let target = rx.voltage_v * rx.rx_current_a * airtime(send.num_successful);
        assert!((send.sender_energy_j - sender).abs() < 1e-15);
        assert!((send.target_energy_j - target).abs() < 1e-15);
        assert_eq!(send.retries, 0);
    }
}

#[test]
fn certain_links_give_full_reliability() {
    let mut config = ExperimentConfig::default();
    config.node.message_send_success_rate = 1.0;
    config.node.ack_send_success_rate = 1.0;
    for (t, strategy) in [
        (0, Strategy::Random),
        (25, Strategy::LeastInteracted),
        (50, Strategy::Random),
    ] {
        let (_, out) = run(&config, &desk(), vars(3, t, strategy), 5);
        assert_eq!(out.objectives.reliability, 1.0);
        assert!(out
            .history
            .iter()
            .flat_map(|g| &g.sends)
            .all(|s| s.retries == 0));
        assert!(out.objectives.converged);
    }
}

#[test]
fn tiny_battery_is_an_activity_violation() {
    let mut config = ExperimentConfig::default();
    config.node = NodeParams {
        max_energy_j: 1e-4,
        ..NodeParams::default()
    };
    config.phi = 0.0;
    let (_, out) = run(&config, &desk(), vars(3, 5, Strategy::Random), 1);
    assert!(matches!(out.violation, Some(Violation::Activity { .. })));
    assert!(out.final_energy_j.iter().all(|&e| e >= 0.0));
    assert!(!out.objectives.converged);
}

#[test]
fn high_energy_floor_is_an_energy_violation() {
    let mut config = ExperimentConfig::default();
    config.phi = 0.99;
    config.node.max_energy_j = 100.0;
    config.convergence.psi = 0.999;
    config.convergence.theta = 0.999;
    let (_, out) = run(&config, &desk(), vars(5, 50, Strategy::Random), 2);
    match out.violation {
        Some(Violation::Energy { mean_battery }) => assert!(mean_battery < 0.99),
        other => panic!("expected an energy violation, got {other:?}"),
    }
    assert!(out.final_energy_j.iter().all(|&e| e > 0.0));
}

#[test]
fn disconnected_graph_stops_before_the_first_generation() {
    let config = ExperimentConfig::default();
    let mut setup = prepare_setup(&config, &desk(), 9).unwrap();
    setup.topology.graph = MeshGraph::from_adjacency(vec![Vec::new(); 16]);
    let out = run_simulation(&simulation_input(
        &config,
        &setup,
        vars(1, 0, Strategy::Random),
        9,
    ))
    .unwrap();
    assert_eq!(out.violation, Some(Violation::Connectivity));
    assert!(out.history.is_empty());
}

#[test]
fn same_seed_same_run() {
    let config = ExperimentConfig::default();
    let scenario = Scenario::new("rand", 150.0, 30, PlacementKind::Random);
    let (_, a) = run(
        &config,
        &scenario,
        vars(2, 10, Strategy::LeastInteracted),
        77,
    );
    let (_, b) = run(
        &config,
        &scenario,
        vars(2, 10, Strategy::LeastInteracted),
        77,
    );
    assert_eq!(a.objectives, b.objectives);
    assert_eq!(a.history, b.history);
    let (_, c) = run(
        &config,
        &scenario,
        vars(2, 10, Strategy::LeastInteracted),
        78,
    );
    assert_ne!(a.history, c.history);
}
