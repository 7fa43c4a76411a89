//! Gossip engine: one generation of model exchange and the per-pair send
//! procedure with its two acknowledgment modes.

use std::fmt;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::Violation;
use crate::nodemodel::{CellRecord, LocalModel, NodeState};
use crate::region::TemperatureField;
use crate::seed::{self, SimRng};
use crate::topology::MeshGraph;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioConfig {
    pub data_rate_bps: f64,
    pub data_message_bytes: u32,
    pub ack_message_bytes: u32,
    pub cell_record_bytes: u32,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            data_rate_bps: 250_000.0,
            data_message_bytes: 80,
            ack_message_bytes: 5,
            cell_record_bytes: 8,
        }
    }
}

impl RadioConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.data_rate_bps > 0.0 && self.data_rate_bps.is_finite()) {
            return Err(Error::InvalidConfig(
                "data_rate_bps must be positive".into(),
            ));
        }
        if self.data_message_bytes == 0
            || self.ack_message_bytes == 0
            || self.cell_record_bytes == 0
        {
            return Err(Error::InvalidConfig(
                "message sizes must be positive".into(),
            ));
        }
        if self.cell_record_bytes > self.data_message_bytes {
            return Err(Error::InvalidConfig(
                "cell_record_bytes exceeds data_message_bytes".into(),
            ));
        }
        Ok(())
    }

    /// Whole cell records that fit in one data message.
    pub fn records_per_message(&self) -> usize {
        (self.data_message_bytes / self.cell_record_bytes) as usize
    }
}

/// Data messages needed to carry `num_cells` records.
pub fn calculate_num_messages(num_cells: usize, radio: &RadioConfig) -> usize {
    num_cells.div_ceil(radio.records_per_message())
}

/// Airtime in seconds for `count` messages of `size_bytes` each.
pub fn message_send_time(count: usize, size_bytes: u32, radio: &RadioConfig) -> f64 {
    count as f64 * f64::from(size_bytes) * 8.0 / radio.data_rate_bps
}

/// Known cells sorted by `(row, col)` and packed greedily into message-sized
/// chunks. Chunk `i` travels as message `i`.
pub fn chunk_model(model: &LocalModel, radio: &RadioConfig) -> Vec<Vec<CellRecord>> {
    model
        .known_records()
        .chunks(radio.records_per_message())
        .map(<[CellRecord]>::to_vec)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "random")]
    Random,
    #[serde(rename = "least-interacted")]
    LeastInteracted,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::LeastInteracted => "least-interacted",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "random" => Ok(Strategy::Random),
            "least-interacted" | "least_interacted" => Ok(Strategy::LeastInteracted),
            other => Err(format!("unknown communication strategy {other:?}")),
        }
    }
}

/// Choose up to `k` neighbors for this generation.
///
/// Least-interacted takes the head of the rotating list and moves it to the
/// back; random samples without replacement from the adjacency.
pub fn select_neighbors<R: Rng + ?Sized>(
    node: &mut NodeState,
    strategy: Strategy,
    k: usize,
    rng: &mut R,
) -> Vec<usize> {
    let deg = node.neighbor_order.len();
    let take = k.min(deg);
    match strategy {
        Strategy::LeastInteracted => {
            let selected = node.neighbor_order[..take].to_vec();
            node.neighbor_order.rotate_left(take);
            selected
        }
        Strategy::Random => index::sample(rng, deg, take)
            .into_iter()
            .map(|i| node.neighbor_order[i])
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SendOutcome {
    pub num_successful: usize,
    pub total_messages: usize,
    pub sender_energy_j: f64,
    pub target_energy_j: f64,
    pub per_message_success: Vec<bool>,
    pub retries: u32,
}

/// Deliver `records` from `sender` to `target` following the send procedure.
///
/// With `resend_threshold == 0` messages are fire-and-forget. Otherwise a
/// message only counts once its acknowledgment comes back, and up to
/// `resend_threshold` retries are spent on unacknowledged messages, each
/// flipping the first outstanding flag on a full round trip.
fn transmit(
    sender: &mut NodeState,
    target: &mut NodeState,
    records: &[CellRecord],
    radio: &RadioConfig,
    rng: &mut SimRng,
) -> Result<SendOutcome, Violation> {
    let total = calculate_num_messages(records.len(), radio);
    let msg_rate = sender.message_send_success_rate;
    let ack_rate = sender.ack_send_success_rate;
    let data = radio.data_message_bytes;
    let ack = radio.ack_message_bytes;

    let (flags, sender_energy, target_energy, retries) = if sender.resend_threshold == 0 {
        let flags: Vec<bool> = (0..total).map(|_| rng.random_bool(msg_rate)).collect();
        let delivered = flags.iter().filter(|&&f| f).count();

        let sender_energy = sender.profile.tx_power_w() * message_send_time(total, data, radio);
        sender.consume_energy(sender_energy);
        if !sender.active {
            return Err(Violation::Activity {
                node: sender.node_id,
            });
        }
        let target_energy = target.profile.rx_power_w() * message_send_time(delivered, data, radio);
        target.consume_energy(target_energy);
        if !target.active {
            return Err(Violation::Activity {
                node: target.node_id,
            });
        }
        (flags, sender_energy, target_energy, 0)
    } else {
        let sent: Vec<bool> = (0..total).map(|_| rng.random_bool(msg_rate)).collect();
        let mut acked: Vec<bool> = sent
            .iter()
            .map(|&s| s && rng.random_bool(ack_rate))
            .collect();
        let initial_sent = sent.iter().filter(|&&s| s).count();
        let initial_acks = acked.iter().filter(|&&a| a).count();
        let mut outstanding = total - initial_acks;
        let mut retries = 0u32;
        let mut extra_acks_sent = 0usize;
        let mut extra_acks_received = 0usize;
        let mut cursor = 0usize;
        while outstanding > 0 && retries < sender.resend_threshold {
            retries += 1;
            if rng.random_bool(msg_rate) {
                extra_acks_sent += 1;
                if rng.random_bool(ack_rate) {
                    extra_acks_received += 1;
                    outstanding -= 1;
                    while acked[cursor] {
                        cursor += 1;
                    }
                    acked[cursor] = true;
                }
            }
        }

        let sender_tx =
            sender.profile.tx_power_w() * message_send_time(total + retries as usize, data, radio);
        let sender_rx = sender.profile.rx_power_w()
            * message_send_time(initial_acks + extra_acks_received, ack, radio);
        let sender_energy = sender_tx + sender_rx;
        sender.consume_energy(sender_energy);
        if !sender.active {
            return Err(Violation::Activity {
                node: sender.node_id,
            });
        }
        let target_rx = target.profile.rx_power_w()
            * message_send_time(initial_sent + extra_acks_sent, data, radio);
        let target_tx = target.profile.tx_power_w()
            * message_send_time(initial_acks + extra_acks_sent, ack, radio);
        let target_energy = target_rx + target_tx;
        target.consume_energy(target_energy);
        if !target.active {
            return Err(Violation::Activity {
                node: target.node_id,
            });
        }
        (acked, sender_energy, target_energy, retries)
    };

    let per_message = radio.records_per_message();
    for (chunk, _) in records
        .chunks(per_message)
        .zip(&flags)
        .filter(|(_, &ok)| ok)
    {
        target.model.merge_records(chunk);
    }
    sender.record_interaction(target.node_id);

    Ok(SendOutcome {
        num_successful: flags.iter().filter(|&&f| f).count(),
        total_messages: total,
        sender_energy_j: sender_energy,
        target_energy_j: target_energy,
        per_message_success: flags,
        retries,
    })
}

/// Send the sender's whole known model to `target`.
pub fn send_model(
    sender: &mut NodeState,
    target: &mut NodeState,
    radio: &RadioConfig,
    rng: &mut SimRng,
) -> Result<SendOutcome, Violation> {
    let records = sender.model.known_records();
    transmit(sender, target, &records, radio, rng)
}

/// Ledger entry for one send.
#[derive(Debug, Clone, PartialEq)]
pub struct SendRecord {
    pub sender: usize,
    pub target: usize,
    pub num_successful: usize,
    pub total_messages: usize,
    pub retries: u32,
    pub sender_energy_j: f64,
    pub target_energy_j: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationStats {
    /// 1-based generation number.
    pub round_index: usize,
    /// Delivered/total ratio for each node that sent at least one message.
    pub per_node_reliability: Vec<Option<f64>>,
    /// Sender and receiver costs charged to each node this generation.
    pub per_node_energy_j: Vec<f64>,
    pub min_accuracy: f64,
    pub avg_accuracy: f64,
    pub max_accuracy: f64,
    pub sends: Vec<SendRecord>,
}

impl GenerationStats {
    /// Mean ratio over sending nodes, or `None` when nobody sent anything.
    pub fn generation_reliability(&self) -> Option<f64> {
        let ratios: Vec<f64> = self
            .per_node_reliability
            .iter()
            .flatten()
            .copied()
            .collect();
        (!ratios.is_empty()).then(|| ratios.iter().sum::<f64>() / ratios.len() as f64)
    }

    pub fn reliability_range(&self) -> Option<(f64, f64)> {
        self.per_node_reliability
            .iter()
            .flatten()
            .fold(None, |acc, &r| match acc {
                None => Some((r, r)),
                Some((lo, hi)) => Some((lo.min(r), hi.max(r))),
            })
    }

    /// Mean per-node energy across all nodes.
    pub fn mean_energy_j(&self) -> f64 {
        self.per_node_energy_j.iter().sum::<f64>() / self.per_node_energy_j.len() as f64
    }
}

fn pair_mut(nodes: &mut [NodeState], a: usize, b: usize) -> (&mut NodeState, &mut NodeState) {
    assert_ne!(a, b, "a node cannot send to itself");
    if a < b {
        let (lo, hi) = nodes.split_at_mut(b);
        (&mut lo[a], &mut hi[0])
    } else {
        let (lo, hi) = nodes.split_at_mut(a);
        (&mut hi[0], &mut lo[b])
    }
}

/// Everything a generation needs besides the mutable node set.
#[derive(Debug, Clone, Copy)]
pub struct GenerationContext<'a> {
    pub graph: &'a MeshGraph,
    pub field: &'a TemperatureField,
    pub radio: &'a RadioConfig,
    pub strategy: Strategy,
    pub sharing_frequency: usize,
    pub epsilon_c: f64,
    /// Master seed of the simulation; per-step streams derive from it.
    pub seed: u64,
}

/// One gossip generation: shuffle the node order, then every node sends its
/// model to its selected neighbors. Accuracies are measured after all sends.
pub fn run_generation(
    nodes: &mut [NodeState],
    ctx: &GenerationContext<'_>,
    round_index: usize,
) -> Result<GenerationStats, Violation> {
    let n = nodes.len();
    debug_assert_eq!(n, ctx.graph.n_nodes());
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::stream(
        ctx.seed,
        &["shuffle".into(), round_index.into()],
    ));

    let mut per_node_reliability = vec![None; n];
    let mut per_node_energy_j = vec![0.0; n];
    let mut sends = Vec::new();

    for &id in &order {
        let mut select_rng =
            seed::stream(ctx.seed, &["select".into(), round_index.into(), id.into()]);
        let selected = select_neighbors(
            &mut nodes[id],
            ctx.strategy,
            ctx.sharing_frequency,
            &mut select_rng,
        );
        let records = nodes[id].model.known_records();
        let (mut delivered, mut total) = (0usize, 0usize);
        for target in selected {
            debug_assert!(ctx.graph.has_edge(id, target));
            let mut rng = seed::stream(
                ctx.seed,
                &["send".into(), round_index.into(), id.into(), target.into()],
            );
            let (sender, receiver) = pair_mut(nodes, id, target);
            let outcome = transmit(sender, receiver, &records, ctx.radio, &mut rng)?;
            delivered += outcome.num_successful;
            total += outcome.total_messages;
            per_node_energy_j[id] += outcome.sender_energy_j;
            per_node_energy_j[target] += outcome.target_energy_j;
            sends.push(SendRecord {
                sender: id,
                target,
                num_successful: outcome.num_successful,
                total_messages: outcome.total_messages,
                retries: outcome.retries,
                sender_energy_j: outcome.sender_energy_j,
                target_energy_j: outcome.target_energy_j,
            });
        }
        if total > 0 {
            per_node_reliability[id] = Some(delivered as f64 / total as f64);
        }
    }

    let accuracies: Vec<f64> = nodes
        .iter()
        .map(|node| node.model.accuracy(ctx.field, ctx.epsilon_c))
        .collect();
    let min_accuracy = accuracies.iter().copied().fold(f64::INFINITY, f64::min);
    let max_accuracy = accuracies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let avg_accuracy = accuracies.iter().sum::<f64>() / n as f64;

    Ok(GenerationStats {
        round_index,
        per_node_reliability,
        per_node_energy_j,
        min_accuracy,
        avg_accuracy,
        max_accuracy,
        sends,
    })
}
