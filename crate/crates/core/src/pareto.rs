//! Non-dominated filtering and performance scoring over objective triples.
//!
//! Reliability is maximized; energy and latency are minimized.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::experiment::{DecisionVars, SimResult};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectivePoint {
    pub reliability: f64,
    pub energy: f64,
    pub latency: f64,
    /// Index of the source row.
    pub id: usize,
}

/// `a` is at least as good as `b` everywhere and strictly better somewhere.
pub fn dominates(a: &ObjectivePoint, b: &ObjectivePoint) -> bool {
    let no_worse = a.reliability >= b.reliability && a.energy <= b.energy && a.latency <= b.latency;
    let better = a.reliability > b.reliability || a.energy < b.energy || a.latency < b.latency;
    no_worse && better
}

fn best_first(a: &ObjectivePoint, b: &ObjectivePoint) -> Ordering {
    b.reliability
        .total_cmp(&a.reliability)
        .then(a.energy.total_cmp(&b.energy))
        .then(a.latency.total_cmp(&b.latency))
}

/// Indices (into `points`, ascending) of the non-dominated points.
///
/// After a best-first lexicographic sort a point can only be dominated by an
/// earlier one, and by transitivity some earlier front member, so comparing
/// against the front built so far suffices. Equal points never dominate each
/// other and are all kept.
pub fn pareto_front(points: &[ObjectivePoint]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| best_first(&points[i], &points[j]).then(i.cmp(&j)));
    let mut front: Vec<usize> = Vec::new();
    for i in order {
        if !front.iter().any(|&f| dominates(&points[f], &points[i])) {
            front.push(i);
        }
    }
    front.sort_unstable();
    front
}

/// All-pairs O(n^2) filter; reference for [`pareto_front`].
pub fn pareto_front_brute_force(points: &[ObjectivePoint]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| !points.iter().any(|q| dominates(q, &points[i])))
        .collect()
}

/// Equal-weight mean of min-max normalized objectives, oriented so 1 is best.
/// An objective that is constant over the set normalizes to 1.
pub fn performance_score(points: &[ObjectivePoint]) -> Vec<f64> {
    fn normalizer(
        values: impl Iterator<Item = f64> + Clone,
        higher_is_better: bool,
    ) -> impl Fn(f64) -> f64 {
        let lo = values.clone().fold(f64::INFINITY, f64::min);
        let hi = values.fold(f64::NEG_INFINITY, f64::max);
        move |v| {
            if hi <= lo {
                1.0
            } else if higher_is_better {
                (v - lo) / (hi - lo)
            } else {
                (hi - v) / (hi - lo)
            }
        }
    }
    let r = normalizer(points.iter().map(|p| p.reliability), true);
    let e = normalizer(points.iter().map(|p| p.energy), false);
    let l = normalizer(points.iter().map(|p| p.latency), false);
    points
        .iter()
        .map(|p| (r(p.reliability) + e(p.energy) + l(p.latency)) / 3.0)
        .collect()
}

/// Points for every violation-free, converged row; `id` is the row index.
pub fn candidate_points(results: &[SimResult]) -> Vec<ObjectivePoint> {
    results
        .iter()
        .enumerate()
        .filter(|(_, r)| r.is_candidate())
        .map(|(id, r)| ObjectivePoint {
            reliability: r.objectives.reliability,
            energy: r.objectives.energy_j_per_node_per_gen,
            latency: r.objectives.latency_generations as f64,
            id,
        })
        .collect()
}

/// One row per `(scenario, vars)` with candidate objectives averaged over
/// repetitions; only candidate rows contribute.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedRow {
    pub scenario: String,
    pub vars: DecisionVars,
    pub repetitions: usize,
    pub reliability: f64,
    pub energy: f64,
    pub latency: f64,
}

pub fn aggregate_repetitions(results: &[SimResult]) -> Vec<AggregatedRow> {
    let mut groups: BTreeMap<(String, DecisionVars), Vec<&SimResult>> = BTreeMap::new();
    let mut first_seen = Vec::new();
    for r in results.iter().filter(|r| r.is_candidate()) {
        let key = (r.scenario.name.clone(), r.vars);
        if !groups.contains_key(&key) {
            first_seen.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    first_seen
        .into_iter()
        .map(|key| {
            let rows = &groups[&key];
            let n = rows.len() as f64;
            let mean = |f: fn(&SimResult) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
            AggregatedRow {
                reliability: mean(|r| r.objectives.reliability),
                energy: mean(|r| r.objectives.energy_j_per_node_per_gen),
                latency: mean(|r| r.objectives.latency_generations as f64),
                scenario: key.0,
                vars: key.1,
                repetitions: rows.len(),
            }
        })
        .collect()
}

/// A scored analysis row as exported to CSV.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScoredRow {
    pub id: usize,
    pub scenario: String,
    pub sharing_frequency: u32,
    pub resend_threshold: u32,
    pub strategy: crate::protocol::Strategy,
    /// Repetition index, or the number of averaged repetitions in aggregate mode.
    pub repetition: u32,
    pub reliability: f64,
    pub energy_j: f64,
    pub latency_gens: f64,
    pub score: f64,
    pub on_front: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParetoAnalysis {
    /// Every candidate, scored against the candidates of its scenario.
    pub rows: Vec<ScoredRow>,
    pub excluded: usize,
}

impl ParetoAnalysis {
    pub fn front(&self) -> impl Iterator<Item = &ScoredRow> {
        self.rows.iter().filter(|r| r.on_front)
    }
}

fn score_rows(mut rows: Vec<ScoredRow>) -> Vec<ScoredRow> {
    let points: Vec<ObjectivePoint> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| ObjectivePoint {
            reliability: r.reliability,
            energy: r.energy_j,
            latency: r.latency_gens,
            id: i,
        })
        .collect();
    let scores = performance_score(&points);
    for i in pareto_front(&points) {
        rows[i].on_front = true;
    }
    for (row, score) in rows.iter_mut().zip(scores) {
        row.score = score;
    }
    rows
}

/// Score and filter each scenario separately, on per-repetition rows or on
/// repetition means when `aggregate`. Rows keep input order within a scenario.
pub fn analyze(results: &[SimResult], aggregate: bool) -> Result<ParetoAnalysis> {
    if results.is_empty() {
        return Err(Error::EmptyInput("no result rows".into()));
    }
    let mut scenarios: Vec<&str> = Vec::new();
    for r in results {
        if !scenarios.contains(&r.scenario.name.as_str()) {
            scenarios.push(&r.scenario.name);
        }
    }
    let mut rows = Vec::new();
    for name in scenarios {
        let group: Vec<(usize, &SimResult)> = results
            .iter()
            .enumerate()
            .filter(|(_, r)| r.scenario.name == name)
            .collect();
        rows.extend(score_rows(scenario_rows(&group, aggregate, rows.len())));
    }
    let excluded = results.iter().filter(|r| !r.is_candidate()).count();
    if rows.is_empty() {
        return Err(Error::EmptyInput(format!(
            "none of the {} result rows converged without a violation",
            results.len()
        )));
    }
    Ok(ParetoAnalysis { rows, excluded })
}

/// `group` holds `(input row index, result)` pairs of one scenario. In
/// aggregate mode ids are sequential from `next_id`; otherwise they are the
/// input row indices.
fn scenario_rows(group: &[(usize, &SimResult)], aggregate: bool, next_id: usize) -> Vec<ScoredRow> {
    if aggregate {
        let owned: Vec<SimResult> = group.iter().map(|(_, r)| (*r).clone()).collect();
        return aggregate_repetitions(&owned)
            .into_iter()
            .enumerate()
            .map(|(i, a)| ScoredRow {
                id: next_id + i,
                scenario: a.scenario,
                sharing_frequency: a.vars.sharing_frequency,
                resend_threshold: a.vars.resend_threshold,
                strategy: a.vars.strategy,
                repetition: a.repetitions as u32,
                reliability: a.reliability,
                energy_j: a.energy,
                latency_gens: a.latency,
                score: 0.0,
                on_front: false,
            })
            .collect();
    }
    group
        .iter()
        .filter(|(_, r)| r.is_candidate())
        .map(|&(id, r)| ScoredRow {
            id,
            scenario: r.scenario.name.clone(),
            sharing_frequency: r.vars.sharing_frequency,
            resend_threshold: r.vars.resend_threshold,
            strategy: r.vars.strategy,
            repetition: r.repetition,
            reliability: r.objectives.reliability,
            energy_j: r.objectives.energy_j_per_node_per_gen,
            latency_gens: r.objectives.latency_generations as f64,
            score: 0.0,
            on_front: false,
        })
        .collect()
}

/// Recompute the front of every scenario by the all-pairs filter and compare
/// with the flags in `analysis`. Returns the number of mismatched rows.
pub fn verify_front(analysis: &ParetoAnalysis) -> usize {
    let mut mismatches = 0;
    let mut start = 0;
    while start < analysis.rows.len() {
        let name = &analysis.rows[start].scenario;
        let end = start
            + analysis.rows[start..]
                .iter()
                .take_while(|r| &r.scenario == name)
                .count();
        let rows = &analysis.rows[start..end];
        let points: Vec<ObjectivePoint> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| ObjectivePoint {
                reliability: r.reliability,
                energy: r.energy_j,
                latency: r.latency_gens,
                id: i,
            })
            .collect();
        let brute = pareto_front_brute_force(&points);
        mismatches += rows
            .iter()
            .enumerate()
            .filter(|(i, r)| r.on_front != brute.contains(i))
            .count();
        start = end;
    }
    mismatches
}

pub fn write_scored<'a, W: Write>(
    rows: impl IntoIterator<Item = &'a ScoredRow>,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut any = false;
    for row in rows {
        w.serialize(row)?;
        any = true;
    }
    if !any {
        w.write_record(SCORED_COLUMNS)?;
    }
    w.flush().map_err(|e| Error::io("<scored csv>", e))?;
    Ok(())
}

pub const SCORED_COLUMNS: [&str; 11] = [
    "id",
    "scenario",
    "sharing_frequency",
    "resend_threshold",
    "strategy",
    "repetition",
    "reliability",
    "energy_j",
    "latency_gens",
    "score",
    "on_front",
];
