//! Ground-truth temperature field over the square region.
//!
//! The region is a `dim x dim` grid of square cells. Values are integer
//! degrees Celsius and 4-adjacent cells never differ by more than
//! `max_adjacent_delta_c`.
//!
//! Generation is a seeded random-walk fill on a coarse anchor lattice: each
//! anchor is drawn uniformly from the temperature range intersected with
//! `west ± delta` and `north ± delta`, in row-major order. Cells between
//! anchors are bilinearly interpolated (exact integer arithmetic, round half
//! up). With `anchor_spacing_m == cell_size_m` every cell is an anchor and the
//! fill is a plain per-cell random walk.

use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionConfig {
    pub side_m: f64,
    pub cell_size_m: f64,
    pub temp_min_c: i32,
    pub temp_max_c: i32,
    pub max_adjacent_delta_c: i32,
    /// Spacing of the random-walk anchors; a multiple of `cell_size_m`.
    pub anchor_spacing_m: f64,
    pub seed: u64,
}

impl Default for RegionConfig {
    fn default() -> Self {
        Self {
            side_m: 300.0,
            cell_size_m: 1.0,
            temp_min_c: 10,
            temp_max_c: 35,
            max_adjacent_delta_c: 2,
            anchor_spacing_m: 50.0,
            seed: 0,
        }
    }
}

fn integral_ratio(num: f64, den: f64) -> Option<usize> {
    let ratio = num / den;
    let rounded = ratio.round();
    if rounded >= 1.0 && (ratio - rounded).abs() < 1e-9 {
        Some(rounded as usize)
    } else {
        None
    }
}

impl RegionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.side_m > 0.0 && self.side_m.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "side_m must be positive, got {}",
                self.side_m
            )));
        }
        if !(self.cell_size_m > 0.0 && self.cell_size_m.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "cell_size_m must be positive, got {}",
                self.cell_size_m
            )));
        }
        if integral_ratio(self.side_m, self.cell_size_m).is_none() {
            return Err(Error::InvalidConfig(format!(
                "side_m {} is not an integer multiple of cell_size_m {}",
                self.side_m, self.cell_size_m
            )));
        }
        if integral_ratio(self.anchor_spacing_m, self.cell_size_m).is_none() {
            return Err(Error::InvalidConfig(format!(
                "anchor_spacing_m {} is not a positive multiple of cell_size_m {}",
                self.anchor_spacing_m, self.cell_size_m
            )));
        }
        if self.temp_min_c > self.temp_max_c {
            return Err(Error::InvalidConfig(format!(
                "temp_min_c {} exceeds temp_max_c {}",
                self.temp_min_c, self.temp_max_c
            )));
        }
        if self.max_adjacent_delta_c < 0 {
            return Err(Error::InvalidConfig(
                "max_adjacent_delta_c must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Cells per side.
    pub fn dim(&self) -> usize {
        integral_ratio(self.side_m, self.cell_size_m).unwrap_or(0)
    }

    fn anchor_step(&self) -> usize {
        integral_ratio(self.anchor_spacing_m, self.cell_size_m).unwrap_or(1)
    }

    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            (col as f64 + 0.5) * self.cell_size_m,
            (row as f64 + 0.5) * self.cell_size_m,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureField {
    cells: Vec<i32>,
    dim: usize,
    config: RegionConfig,
}

impl TemperatureField {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn config(&self) -> &RegionConfig {
        &self.config
    }

    pub fn get(&self, row: usize, col: usize) -> i32 {
        self.cells[row * self.dim + col]
    }

    /// Row-major cell values.
    pub fn values(&self) -> &[i32] {
        &self.cells
    }

    /// Largest |a - b| over all 4-adjacent pairs.
    pub fn max_adjacent_delta(&self) -> i32 {
        let d = self.dim;
        let mut worst = 0;
        for r in 0..d {
            for c in 0..d {
                let v = self.get(r, c);
                if c + 1 < d {
                    worst = worst.max((v - self.get(r, c + 1)).abs());
                }
                if r + 1 < d {
                    worst = worst.max((v - self.get(r + 1, c)).abs());
                }
            }
        }
        worst
    }

    /// Writes one CSV line per grid row, no header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(out);
        for row in self.cells.chunks(self.dim) {
            writer.write_record(row.iter().map(|v| v.to_string()))?;
        }
        writer.flush().map_err(|e| Error::io("<field csv>", e))?;
        Ok(())
    }

    /// Reads a field snapshot written by [`TemperatureField::write_csv`].
    /// The grid must match `config`'s dimensions.
    pub fn read_csv<R: Read>(input: R, config: RegionConfig) -> Result<Self> {
        config.validate()?;
        let dim = config.dim();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_reader(input);
        let mut cells = Vec::with_capacity(dim * dim);
        for (i, record) in reader.records().enumerate() {
            let record = record?;
            if record.len() != dim {
                return Err(Error::Parse {
                    path: "<field csv>".into(),
                    line: i as u64 + 1,
                    message: format!("expected {dim} cells, found {}", record.len()),
                });
            }
            for field in record.iter() {
                let v = field.trim().parse::<i32>().map_err(|e| Error::Parse {
                    path: "<field csv>".into(),
                    line: i as u64 + 1,
                    message: format!("bad cell value {field:?}: {e}"),
                })?;
                cells.push(v);
            }
        }
        if cells.len() != dim * dim {
            return Err(Error::Schema {
                path: "<field csv>".into(),
                message: format!("expected {dim} rows, found {}", cells.len() / dim.max(1)),
            });
        }
        Ok(Self { cells, dim, config })
    }
}

/// Random-walk fill of an `n x n` integer lattice.
fn random_walk(n: usize, config: &RegionConfig) -> Vec<i32> {
    let mut rng = seed::stream(config.seed, &["region".into()]);
    let (lo, hi, delta) = (
        config.temp_min_c,
        config.temp_max_c,
        config.max_adjacent_delta_c,
    );
    let mut grid = vec![0i32; n * n];
    for r in 0..n {
        for c in 0..n {
            let (mut a, mut b) = (lo, hi);
            if c > 0 {
                let w = grid[r * n + c - 1];
                a = a.max(w - delta);
                b = b.min(w + delta);
            }
            if r > 0 {
                let north = grid[(r - 1) * n + c];
                a = a.max(north - delta);
                b = b.min(north + delta);
            }
            // Non-empty: west and north are both adjacent to the north-west
            // cell, so they differ by at most 2*delta.
            debug_assert!(a <= b);
            grid[r * n + c] = rng.random_range(a..=b);
        }
    }
    grid
}

pub fn generate_field(config: &RegionConfig) -> Result<TemperatureField> {
    config.validate()?;
    let dim = config.dim();
    let step = config.anchor_step();
    let last = dim - 1;
    let n_anchor = last / step + 1 + usize::from(!last.is_multiple_of(step));
    let anchors = random_walk(n_anchor, config);

    let s = step as i64;
    let denom = s * s;
    let mut cells = Vec::with_capacity(dim * dim);
    for r in 0..dim {
        let (r0, fr) = (r / step, (r % step) as i64);
        let r1 = (r0 + 1).min(n_anchor - 1);
        for c in 0..dim {
            let (c0, fc) = (c / step, (c % step) as i64);
            let c1 = (c0 + 1).min(n_anchor - 1);
            let a = |i: usize, j: usize| i64::from(anchors[i * n_anchor + j]);
            let num = a(r0, c0) * (s - fr) * (s - fc)
                + a(r1, c0) * fr * (s - fc)
                + a(r0, c1) * (s - fr) * fc
                + a(r1, c1) * fr * fc;
            // round half up: floor((2*num + denom) / (2*denom))
            let v = (2 * num + denom).div_euclid(2 * denom);
            cells.push(v as i32);
        }
    }
    Ok(TemperatureField {
        cells,
        dim,
        config: config.clone(),
    })
}

/// Grid cell `(row, col)` containing a position.
pub fn cell_of(position: (f64, f64), config: &RegionConfig) -> Result<(usize, usize)> {
    let (x, y) = position;
    let side = config.side_m;
    if !(x >= 0.0 && y >= 0.0 && x < side && y < side) {
        return Err(Error::OutOfRegion { x, y, side });
    }
    let dim = config.dim();
    let row = ((y / config.cell_size_m).floor() as usize).min(dim - 1);
    let col = ((x / config.cell_size_m).floor() as usize).min(dim - 1);
    Ok((row, col))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn config(side: f64, lo: i32, hi: i32) -> RegionConfig {
        RegionConfig {
            side_m: side,
            temp_min_c: lo,
            temp_max_c: hi,
            ..RegionConfig::default()
        }
    }

    // Exhaustive scan of every 4-adjacent pair, independent of max_adjacent_delta().
    fn brute_force_violations(field: &TemperatureField, delta: i32) -> usize {
        let d = field.dim();
        let v = field.values();
        let mut bad = 0;
        for i in 0..d * d {
            let (r, c) = (i / d, i % d);
            for (dr, dc) in [(0i64, 1i64), (1, 0), (0, -1), (-1, 0)] {
                let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                if nr < 0 || nc < 0 || nr >= d as i64 || nc >= d as i64 {
                    continue;
                }
                if (v[i] - v[nr as usize * d + nc as usize]).abs() > delta {
                    bad += 1;
                }
            }
        }
        bad
    }

    #[test]
    fn single_cell_forced_value() {
        let cfg = RegionConfig {
            side_m: 1.0,
            anchor_spacing_m: 1.0,
            ..config(1.0, 20, 20)
        };
        let field = generate_field(&cfg).unwrap();
        assert_eq!(field.dim(), 1);
        assert_eq!(field.values(), &[20]);
    }

    #[test]
    fn three_hundred_meter_region_has_ninety_thousand_cells() {
        let field = generate_field(&config(300.0, 10, 35)).unwrap();
        assert_eq!(field.dim(), 300);
        assert_eq!(field.len(), 90_000);
    }

    #[test]
    fn adjacency_bound_holds_by_exhaustive_scan() {
        for anchor in [1.0, 7.0, 50.0] {
            for s in 0..4 {
                let cfg = RegionConfig {
                    anchor_spacing_m: anchor,
                    seed: s,
                    ..config(120.0, 10, 35)
                };
                let field = generate_field(&cfg).unwrap();
                assert_eq!(
                    brute_force_violations(&field, 2),
                    0,
                    "anchor {anchor} seed {s}"
                );
                assert!(field.values().iter().all(|&v| (10..=35).contains(&v)));
            }
        }
    }

    #[test]
    fn unit_anchor_spacing_is_a_plain_walk() {
        let cfg = RegionConfig {
            anchor_spacing_m: 1.0,
            ..config(40.0, 10, 35)
        };
        let field = generate_field(&cfg).unwrap();
        assert_eq!(field.values(), random_walk(40, &cfg).as_slice());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = [
            RegionConfig {
                side_m: 0.0,
                ..RegionConfig::default()
            },
            RegionConfig {
                side_m: 10.5,
                ..RegionConfig::default()
            },
            RegionConfig {
                temp_min_c: 40,
                ..RegionConfig::default()
            },
            RegionConfig {
                max_adjacent_delta_c: -1,
                ..RegionConfig::default()
            },
            RegionConfig {
                anchor_spacing_m: 2.5,
                ..RegionConfig::default()
            },
        ];
        for cfg in bad {
            assert!(
                matches!(generate_field(&cfg), Err(Error::InvalidConfig(_))),
                "{cfg:?}"
            );
        }
    }

    #[test]
    fn cell_of_examples() {
        let cfg = config(300.0, 10, 35);
        assert_eq!(cell_of((0.0, 0.0), &cfg).unwrap(), (0, 0));
        assert_eq!(cell_of((299.9, 0.0), &cfg).unwrap(), (0, 299));
        assert_eq!(cell_of((150.5, 42.3), &cfg).unwrap(), (42, 150));
        assert!(matches!(
            cell_of((300.0, 1.0), &cfg),
            Err(Error::OutOfRegion { .. })
        ));
        assert!(matches!(
            cell_of((-0.1, 1.0), &cfg),
            Err(Error::OutOfRegion { .. })
        ));
    }

    #[test]
    fn csv_snapshot_round_trips() {
        let cfg = config(25.0, 10, 35);
        let field = generate_field(&cfg).unwrap();
        let mut buf = Vec::new();
        field.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8_lossy(&buf).lines().count(), 25);
        let back = TemperatureField::read_csv(buf.as_slice(), cfg.clone()).unwrap();
        assert_eq!(back, field);

        let wrong = RegionConfig {
            side_m: 24.0,
            ..cfg
        };
        assert!(TemperatureField::read_csv(buf.as_slice(), wrong).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn generated_fields_satisfy_invariants(
            side in 1usize..60,
            anchor in 1usize..20,
            lo in -10i32..30,
            span in 0i32..20,
            delta in 0i32..4,
            seed in any::<u64>(),
        ) {
            let cfg = RegionConfig {
                side_m: side as f64,
                cell_size_m: 1.0,
                temp_min_c: lo,
                temp_max_c: lo + span,
                max_adjacent_delta_c: delta,
                anchor_spacing_m: anchor as f64,
                seed,
            };
            let field = generate_field(&cfg).unwrap();
            prop_assert_eq!(field.len(), side * side);
            prop_assert!(field.values().iter().all(|v| (lo..=lo + span).contains(v)));
            prop_assert_eq!(brute_force_violations(&field, delta), 0);
            prop_assert_eq!(&generate_field(&cfg).unwrap(), &field);
        }
    }
}
