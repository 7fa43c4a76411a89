//! Node placement and the transmission-range graph.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementKind {
    Uniform,
    Random,
}

impl PlacementKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PlacementKind::Uniform => "uniform",
            PlacementKind::Random => "random",
        }
    }
}

impl fmt::Display for PlacementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PlacementKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(PlacementKind::Uniform),
            "random" => Ok(PlacementKind::Random),
            other => Err(format!("unknown placement kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub positions: Vec<(f64, f64)>,
    pub kind: PlacementKind,
}

impl Placement {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

fn exact_sqrt(n: usize) -> Option<usize> {
    let r = (n as f64).sqrt().round() as usize;
    (r * r == n).then_some(r)
}

/// Square lattice with half-spacing offset from the region edges.
pub fn place_uniform(n: usize, side_m: f64) -> Result<Placement> {
    if n == 0 {
        return Err(Error::InvalidConfig("node count must be at least 1".into()));
    }
    let per_side = exact_sqrt(n).ok_or(Error::NonSquareCount(n))?;
    let spacing = side_m / per_side as f64;
    let positions = (0..n)
        .map(|id| {
            let (row, col) = (id / per_side, id % per_side);
            (spacing * (col as f64 + 0.5), spacing * (row as f64 + 0.5))
        })
        .collect();
    Ok(Placement {
        positions,
        kind: PlacementKind::Uniform,
    })
}

/// `n` i.i.d. uniform positions over `[0, side_m)^2`.
pub fn place_random(n: usize, side_m: f64, seed: u64) -> Placement {
    let mut rng = seed::rng(seed);
    let positions = (0..n)
        .map(|_| (rng.random_range(0.0..side_m), rng.random_range(0.0..side_m)))
        .collect();
    Placement {
        positions,
        kind: PlacementKind::Random,
    }
}

/// Undirected graph; `adjacency[i]` is sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeshGraph {
    adjacency: Vec<Vec<usize>>,
}

impl MeshGraph {
    pub fn from_adjacency(adjacency: Vec<Vec<usize>>) -> Self {
        Self { adjacency }
    }

    pub fn n_nodes(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].binary_search(&b).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }
}

pub fn build_graph(placement: &Placement, tx_range_m: f64) -> MeshGraph {
    let n = placement.len();
    let r2 = tx_range_m * tx_range_m;
    let mut adjacency = vec![Vec::new(); n];
    for i in 0..n {
        let (xi, yi) = placement.positions[i];
        for j in (i + 1)..n {
            let (xj, yj) = placement.positions[j];
            let (dx, dy) = (xi - xj, yi - yj);
            if dx * dx + dy * dy <= r2 {
                adjacency[i].push(j);
                adjacency[j].push(i);
            }
        }
    }
    for list in &mut adjacency {
        list.sort_unstable();
    }
    MeshGraph { adjacency }
}

/// Breadth-first reachability from node 0 covers every node.
pub fn is_connected(graph: &MeshGraph) -> bool {
    let n = graph.n_nodes();
    if n == 0 {
        return false;
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut reached = 1;
    while let Some(node) = queue.pop_front() {
        for &next in graph.neighbors(node) {
            if !seen[next] {
                seen[next] = true;
                reached += 1;
                queue.push_back(next);
            }
        }
    }
    reached == n
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopologyRequest {
    pub n_nodes: usize,
    pub side_m: f64,
    pub kind: PlacementKind,
    pub tx_range_m: f64,
    pub max_placement_attempts: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub placement: Placement,
    pub graph: MeshGraph,
    /// Placement attempts consumed (1 for a first-try success).
    pub attempts: u32,
}

/// Place nodes and build the graph, re-placing random layouts until the graph
/// is connected. Uniform layouts are deterministic and get a single attempt.
pub fn build_valid_topology(request: &TopologyRequest, seed: u64) -> Result<Topology> {
    if request.n_nodes == 0 {
        return Err(Error::InvalidConfig("node count must be at least 1".into()));
    }
    if !(request.tx_range_m > 0.0) {
        return Err(Error::InvalidConfig("tx_range_m must be positive".into()));
    }
    match request.kind {
        PlacementKind::Uniform => {
            let placement = place_uniform(request.n_nodes, request.side_m)?;
            let graph = build_graph(&placement, request.tx_range_m);
            if is_connected(&graph) {
                Ok(Topology {
                    placement,
                    graph,
                    attempts: 1,
                })
            } else {
                Err(Error::TopologyInfeasible { attempts: 1 })
            }
        }
        PlacementKind::Random => {
            let attempts = request.max_placement_attempts.max(1);
            for attempt in 0..attempts {
                let sub = seed::derive(seed, &["placement".into(), attempt.into()]);
                let placement = place_random(request.n_nodes, request.side_m, sub);
                let graph = build_graph(&placement, request.tx_range_m);
                if is_connected(&graph) {
                    return Ok(Topology {
                        placement,
                        graph,
                        attempts: attempt + 1,
                    });
                }
            }
            Err(Error::TopologyInfeasible { attempts })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyNode {
    pub id: usize,
    pub x_m: f64,
    pub y_m: f64,
    pub profile: String,
    pub neighbors: Vec<usize>,
}

/// JSON snapshot of a topology for the plotting tools.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyExport {
    pub side_m: f64,
    pub placement: PlacementKind,
    pub tx_range_m: f64,
    pub detect_range_m: f64,
    pub nodes: Vec<TopologyNode>,
}

impl TopologyExport {
    pub fn new(
        topology: &Topology,
        side_m: f64,
        tx_range_m: f64,
        detect_range_m: f64,
        profile_names: &[String],
    ) -> Self {
        let nodes = topology
            .placement
            .positions
            .iter()
            .enumerate()
            .map(|(id, &(x_m, y_m))| TopologyNode {
                id,
                x_m,
                y_m,
                profile: profile_names[id].clone(),
                neighbors: topology.graph.neighbors(id).to_vec(),
            })
            .collect();
        Self {
            side_m,
            placement: topology.placement.kind,
            tx_range_m,
            detect_range_m,
            nodes,
        }
    }
}
