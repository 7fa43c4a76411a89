//! Node state, local sensing, model merging and accuracy scoring.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::region::{cell_of, TemperatureField};

/// Electrical profile of a node's radio MCU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McuProfile {
    pub name: String,
    pub voltage_v: f64,
    pub tx_current_a: f64,
    pub rx_current_a: f64,
}

impl McuProfile {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if ok(self.voltage_v) && ok(self.tx_current_a) && ok(self.rx_current_a) {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "MCU profile {:?} needs positive voltage and currents",
                self.name
            )))
        }
    }

    /// Transmit power in watts.
    pub fn tx_power_w(&self) -> f64 {
        self.voltage_v * self.tx_current_a
    }

    /// Receive power in watts.
    pub fn rx_power_w(&self) -> f64 {
        self.voltage_v * self.rx_current_a
    }
}

/// One serialized model cell: flat row-major index and estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellRecord {
    pub index: u32,
    pub value: f32,
}

/// Per-cell temperature estimates; `NaN` marks an unknown cell.
#[derive(Debug, Clone)]
pub struct LocalModel {
    values: Vec<f32>,
    known: usize,
    dim: usize,
}

/// Unknown cells compare equal to each other.
impl PartialEq for LocalModel {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.known == other.known
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a == b || (a.is_nan() && b.is_nan()))
    }
}

impl LocalModel {
    pub fn empty(dim: usize) -> Self {
        Self {
            values: vec![f32::NAN; dim * dim],
            known: 0,
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn known_count(&self) -> usize {
        self.known
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let v = self.values[row * self.dim + col];
        (!v.is_nan()).then_some(f64::from(v))
    }

    pub fn is_known(&self, index: usize) -> bool {
        !self.values[index].is_nan()
    }

    /// Known cells in row-major order.
    pub fn known_records(&self) -> Vec<CellRecord> {
        let mut out = Vec::with_capacity(self.known);
        for (i, &v) in self.values.iter().enumerate() {
            if !v.is_nan() {
                out.push(CellRecord {
                    index: i as u32,
                    value: v,
                });
            }
        }
        out
    }

    fn absorb(&mut self, index: usize, incoming: f32) {
        let own = &mut self.values[index];
        if own.is_nan() {
            *own = incoming;
            self.known += 1;
        } else {
            *own = (*own + incoming) * 0.5;
        }
    }

    /// Merge `(row, col, value)` cells: adopt unknown cells, average known ones
    /// with the incoming value. Rejects the whole batch if any cell is out of
    /// range.
    pub fn merge(&mut self, incoming: &[(usize, usize, f64)]) -> Result<()> {
        if let Some(&(row, col, _)) = incoming
            .iter()
            .find(|&&(r, c, _)| r >= self.dim || c >= self.dim)
        {
            return Err(Error::CellOutOfRange {
                row,
                col,
                dim: self.dim,
            });
        }
        for &(row, col, value) in incoming {
            self.absorb(row * self.dim + col, value as f32);
        }
        Ok(())
    }

    /// Merge wire records. Indices come from a model of the same dimensions.
    pub fn merge_records(&mut self, records: &[CellRecord]) {
        for rec in records {
            self.absorb(rec.index as usize, rec.value);
        }
    }

    /// Fraction of all region cells that are known and within `epsilon_c`
    /// of ground truth.
    pub fn accuracy(&self, field: &TemperatureField, epsilon_c: f64) -> f64 {
        accuracy(self, field, epsilon_c)
    }
}

pub fn accuracy(model: &LocalModel, field: &TemperatureField, epsilon_c: f64) -> f64 {
    debug_assert_eq!(model.dim, field.dim());
    let eps = epsilon_c as f32;
    let hits = model
        .values
        .iter()
        .zip(field.values())
        .filter(|(est, &truth)| (**est - truth as f32).abs() <= eps)
        .count();
    hits as f64 / field.len() as f64
}

/// Per-node constants shared by every node of a simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NodeParams {
    pub max_energy_j: f64,
    pub tx_range_m: f64,
    pub detect_range_m: f64,
    pub message_send_success_rate: f64,
    pub ack_send_success_rate: f64,
}

impl Default for NodeParams {
    fn default() -> Self {
        Self {
            max_energy_j: 1000.0,
            tx_range_m: 50.0,
            detect_range_m: 30.0,
            message_send_success_rate: 0.95,
            ack_send_success_rate: 0.98,
        }
    }
}

impl NodeParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        let prob = |v: f64| (0.0..=1.0).contains(&v);
        if !positive(self.max_energy_j) {
            return Err(Error::InvalidConfig("max_energy_j must be positive".into()));
        }
        if !positive(self.tx_range_m) || !(self.detect_range_m >= 0.0) {
            return Err(Error::InvalidConfig(
                "tx_range_m must be positive and detect_range_m non-negative".into(),
            ));
        }
        if !prob(self.message_send_success_rate) || !prob(self.ack_send_success_rate) {
            return Err(Error::InvalidConfig(
                "success rates must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct NodeState {
    pub node_id: usize,
    pub position: (f64, f64),
    pub profile: McuProfile,
    pub max_energy_j: f64,
    pub energy_j: f64,
    pub tx_range_m: f64,
    pub detect_range_m: f64,
    pub model: LocalModel,
    /// Rotating neighbor list used by the least-interacted strategy.
    pub neighbor_order: Vec<usize>,
    /// Sends to each neighbor, parallel to the sorted adjacency list.
    pub interaction_counts: Vec<(usize, u32)>,
    pub active: bool,
    pub message_send_success_rate: f64,
    pub ack_send_success_rate: f64,
    pub resend_threshold: u32,
}

impl NodeState {
    pub fn new(
        node_id: usize,
        position: (f64, f64),
        profile: McuProfile,
        params: &NodeParams,
        neighbors: &[usize],
        resend_threshold: u32,
        dim: usize,
    ) -> Self {
        Self {
            node_id,
            position,
            profile,
            max_energy_j: params.max_energy_j,
            energy_j: params.max_energy_j,
            tx_range_m: params.tx_range_m,
            detect_range_m: params.detect_range_m,
            model: LocalModel::empty(dim),
            neighbor_order: neighbors.to_vec(),
            interaction_counts: neighbors.iter().map(|&n| (n, 0)).collect(),
            active: true,
            message_send_success_rate: params.message_send_success_rate,
            ack_send_success_rate: params.ack_send_success_rate,
            resend_threshold,
        }
    }

    /// Drain up to `joules` from the battery, never below zero. Returns the
    /// amount actually drained.
    pub fn consume_energy(&mut self, joules: f64) -> f64 {
        let drained = joules.min(self.energy_j);
        self.energy_j -= drained;
        if self.energy_j <= 0.0 {
            self.energy_j = 0.0;
            self.active = false;
        }
        drained
    }

    pub fn battery_fraction(&self) -> f64 {
        self.energy_j / self.max_energy_j
    }

    pub(crate) fn record_interaction(&mut self, neighbor: usize) {
        if let Some(entry) = self
            .interaction_counts
            .iter_mut()
            .find(|(n, _)| *n == neighbor)
        {
            entry.1 += 1;
        }
    }
}

/// Initial local model: every cell whose center lies within the detection
/// range takes the reading of the node's own cell.
pub fn sense(node: &NodeState, field: &TemperatureField) -> Result<LocalModel> {
    let config = field.config();
    let (own_row, own_col) = cell_of(node.position, config)?;
    let reading = field.get(own_row, own_col) as f32;
    let dim = field.dim();
    let mut model = LocalModel::empty(dim);

    let (x, y) = node.position;
    let r = node.detect_range_m;
    let cs = config.cell_size_m;
    let span = |c: f64| {
        let lo = ((c - r) / cs - 0.5).floor().max(0.0) as usize;
        let hi = (((c + r) / cs - 0.5).ceil().max(0.0) as usize).min(dim - 1);
        lo..=hi
    };
    for row in span(y) {
        for col in span(x) {
            let (cx, cy) = config.cell_center(row, col);
            if (cx - x).powi(2) + (cy - y).powi(2) <= r * r {
                model.values[row * dim + col] = reading;
                model.known += 1;
            }
        }
    }
    Ok(model)
}
