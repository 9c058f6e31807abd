//! Consumption ingestion, ensemble synthesis, state discretization and
//! estimation of the default transition matrix.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{data_err, param_err, Error, Result};
use crate::seed::{split_seed, STREAM_SYNTHESIS};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

/// Power time series of one building (or of an aggregate), MW per interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsumptionSeries {
    pub building_id: Option<String>,
    /// Strictly increasing epoch seconds, constant spacing.
    pub timestamps: Vec<i64>,
    pub power_mw: Vec<f64>,
    pub interval_s: i64,
}

impl ConsumptionSeries {
    pub fn len(&self) -> usize {
        self.power_mw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.power_mw.is_empty()
    }
}

/// Discrete power states: `n` equal-width bins with midpoint representatives.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateSpace {
    /// Ascending bin edges, length n+1.
    pub bin_edges: Vec<f64>,
    /// Midpoint power of each bin, MW, length n.
    pub representative_power: Vec<f64>,
}

impl StateSpace {
    pub fn n(&self) -> usize {
        self.representative_power.len()
    }

    /// Bin index of a power value. Interior edge ties go to the higher bin;
    /// the maximum maps to the top bin.
    pub fn state_of(&self, x: f64) -> usize {
        let n = self.n();
        let lo = self.bin_edges[0];
        let width = (self.bin_edges[n] - lo) / n as f64;
        let mut idx = (((x - lo) / width).floor() as isize).clamp(0, n as isize - 1) as usize;
        while idx + 1 < n && x >= self.bin_edges[idx + 1] {
            idx += 1;
        }
        while idx > 0 && x < self.bin_edges[idx] {
            idx -= 1;
        }
        idx
    }
}

/// Row-stochastic transition matrix. `rows[beta][alpha]` is the probability
/// of moving from source state `beta` to destination `alpha`; entries outside
/// `support_mask` are exactly zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub n: usize,
    pub rows: Vec<Vec<f64>>,
    pub support_mask: Vec<Vec<bool>>,
}

const ROW_SUM_TOL: f64 = 1e-12;

impl TransitionMatrix {
    /// Builds a matrix from rows, deriving the support from nonzero entries.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let support_mask = rows
            .iter()
            .map(|r| r.iter().map(|&p| p > 0.0).collect())
            .collect();
        let m = TransitionMatrix {
            n,
            rows,
            support_mask,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn identity(n: usize) -> Self {
        let rows = (0..n)
            .map(|i| {
                let mut r = vec![0.0; n];
                r[i] = 1.0;
                r
            })
            .collect();
        let support_mask = (0..n)
            .map(|i| {
                let mut r = vec![false; n];
                r[i] = true;
                r
            })
            .collect();
        TransitionMatrix {
            n,
            rows,
            support_mask,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 || self.rows.len() != self.n || self.support_mask.len() != self.n {
            return param_err("transition matrix dimensions are inconsistent");
        }
        for (b, (row, mask)) in self.rows.iter().zip(&self.support_mask).enumerate() {
            if row.len() != self.n || mask.len() != self.n {
                return param_err(format!("row {b} has wrong length"));
            }
            let mut sum = 0.0;
            for (a, (&p, &m)) in row.iter().zip(mask).enumerate() {
                if !(0.0..=1.0).contains(&p) || !p.is_finite() {
                    return param_err(format!("entry [{b}][{a}] = {p} outside [0,1]"));
                }
                if !m && p != 0.0 {
                    return param_err(format!("entry [{b}][{a}] nonzero outside support"));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return param_err(format!("row {b} sums to {sum}, expected 1"));
            }
        }
        Ok(())
    }

    /// Indices of structurally possible destinations from `beta`.
    pub fn support_of(&self, beta: usize) -> impl Iterator<Item = usize> + '_ {
        self.support_mask[beta]
            .iter()
            .enumerate()
            .filter_map(|(a, &m)| m.then_some(a))
    }

    /// True if every supported entry of `self` is also supported in `other`.
    pub fn support_within(&self, other: &TransitionMatrix) -> bool {
        self.n == other.n
            && self
                .support_mask
                .iter()
                .zip(&other.support_mask)
                .all(|(s, o)| s.iter().zip(o).all(|(&a, &b)| !a || b))
    }

    /// Largest row-wise L1 distance to `other`.
    pub fn max_row_l1(&self, other: &TransitionMatrix) -> f64 {
        self.rows
            .iter()
            .zip(&other.rows)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Parses a consumption CSV with header `timestamp,power_mw[,building_id]`.
/// Returns one series per building id, in first-appearance order.
pub fn load_consumption_csv(path: &Path) -> Result<Vec<ConsumptionSeries>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Data(format!("cannot read header: {e}")))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let ts_col = col("timestamp")
        .ok_or_else(|| Error::Data("missing column `timestamp`".to_string()))?;
    let pw_col = col("power_mw").ok_or_else(|| Error::Data("missing column `power_mw`".to_string()))?;
    let id_col = col("building_id");

    // Keyed by building id in first-appearance order.
    let mut order: Vec<String> = Vec::new();
    let mut per_building: std::collections::HashMap<String, (Vec<i64>, Vec<f64>)> =
        std::collections::HashMap::new();

    for (i, record) in reader.records().enumerate() {
        let row = i + 1; // 1-based data row, matching error messages
        let record = record.map_err(|e| Error::Data(format!("row {row}: {e}")))?;
        let ts: i64 = record
            .get(ts_col)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| Error::Data(format!("row {row}: invalid timestamp")))?;
        let power: f64 = record
            .get(pw_col)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| Error::Data(format!("row {row}: invalid power_mw")))?;
        if !power.is_finite() || power < 0.0 {
            return data_err(format!("negative power at row {row}"));
        }
        let id = match id_col {
            Some(c) => record.get(c).unwrap_or("").trim().to_string(),
            None => String::new(),
        };
        let entry = per_building.entry(id.clone()).or_insert_with(|| {
            order.push(id);
            (Vec::new(), Vec::new())
        });
        let series_row = entry.0.len() + 1;
        if let Some(&last) = entry.0.last() {
            if ts <= last {
                return data_err(format!("non-monotone timestamp at row {series_row}"));
            }
        }
        entry.0.push(ts);
        entry.1.push(power);
    }

    if order.is_empty() {
        return data_err("no samples");
    }

    let mut out = Vec::with_capacity(order.len());
    for id in order {
        let (timestamps, power_mw) = per_building.remove(&id).unwrap();
        if timestamps.len() < 2 {
            return data_err(format!(
                "series `{id}` needs at least 2 samples to infer the interval"
            ));
        }
        let interval_s = timestamps[1] - timestamps[0];
        for (i, w) in timestamps.windows(2).enumerate() {
            if w[1] - w[0] != interval_s {
                return data_err(format!("non-constant interval at row {}", i + 2));
            }
        }
        out.push(ConsumptionSeries {
            building_id: (!id.is_empty()).then_some(id),
            timestamps,
            power_mw,
            interval_s,
        });
    }

    // All series of an ensemble must share identical timestamps.
    let first = out[0].timestamps.clone();
    for s in &out[1..] {
        if s.timestamps != first {
            return data_err(format!(
                "series `{}` does not share the ensemble timestamps",
                s.building_id.as_deref().unwrap_or("?")
            ));
        }
    }
    Ok(out)
}

/// Sums an ensemble into one aggregate series.
pub fn aggregate_series(series: &[ConsumptionSeries]) -> Result<ConsumptionSeries> {
    if series.is_empty() {
        return data_err("no samples");
    }
    let first = &series[0];
    let mut power = vec![0.0; first.len()];
    for s in series {
        if s.timestamps != first.timestamps {
            return data_err("ensemble series do not share identical timestamps");
        }
        for (acc, p) in power.iter_mut().zip(&s.power_mw) {
            *acc += p;
        }
    }
    Ok(ConsumptionSeries {
        building_id: None,
        timestamps: first.timestamps.clone(),
        power_mw: power,
        interval_s: first.interval_s,
    })
}

/// Generates `n_buildings` synthetic copies of `base`, each point scaled by
/// 1+g with Gaussian g resampled until |g| ≤ noise_frac. Deterministic in
/// `seed`; each building draws from its own split stream, so the result does
/// not depend on scheduling.
pub fn synthesize_ensemble(
    base: &ConsumptionSeries,
    n_buildings: usize,
    noise_frac: f64,
    seed: u64,
) -> Result<Vec<ConsumptionSeries>> {
    if n_buildings < 1 {
        return param_err("n_buildings must be at least 1");
    }
    if !(0.0..1.0).contains(&noise_frac) {
        return param_err(format!("noise_frac must be in [0,1), got {noise_frac}"));
    }
    if base.is_empty() {
        return data_err("no samples");
    }
    let synth_seed = split_seed(seed, STREAM_SYNTHESIS);
    let out: Vec<ConsumptionSeries> = (0..n_buildings)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha12Rng::seed_from_u64(split_seed(synth_seed, b as u64));
            let power = if noise_frac == 0.0 {
                base.power_mw.clone()
            } else {
                let normal = Normal::new(0.0, noise_frac / 2.0).expect("valid sigma");
                base.power_mw
                    .iter()
                    .map(|&p| {
                        let mut g = normal.sample(&mut rng);
                        while g.abs() > noise_frac {
                            g = normal.sample(&mut rng);
                        }
                        p * (1.0 + g)
                    })
                    .collect()
            };
            ConsumptionSeries {
                building_id: Some(format!("synth-{b:03}")),
                timestamps: base.timestamps.clone(),
                power_mw: power,
                interval_s: base.interval_s,
            }
        })
        .collect();
    Ok(out)
}

/// Equal-width discretization of an aggregate series over its observed range.
/// Returns the state space and the per-sample state path.
pub fn discretize(aggregate: &ConsumptionSeries, n_states: usize) -> Result<(StateSpace, Vec<usize>)> {
    if n_states < 2 {
        return param_err(format!("n_states must be at least 2, got {n_states}"));
    }
    if aggregate.is_empty() {
        return data_err("no samples");
    }
    let lo = aggregate.power_mw.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = aggregate
        .power_mw
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return data_err("degenerate range: aggregate power is constant");
    }
    let width = (hi - lo) / n_states as f64;
    let mut bin_edges: Vec<f64> = (0..=n_states).map(|i| lo + i as f64 * width).collect();
    bin_edges[n_states] = hi;
    let representative_power = (0..n_states)
        .map(|i| 0.5 * (bin_edges[i] + bin_edges[i + 1]))
        .collect();
    let space = StateSpace {
        bin_edges,
        representative_power,
    };
    let path = aggregate.power_mw.iter().map(|&x| space.state_of(x)).collect();
    Ok((space, path))
}

/// Maximum-likelihood transition estimate from one or more state paths.
/// Unvisited source states fall back to a self-loop row.
pub fn estimate_default_matrix(paths: &[Vec<usize>], n_states: usize) -> Result<TransitionMatrix> {
    if n_states < 1 {
        return param_err("n_states must be at least 1");
    }
    let mut counts = vec![vec![0u64; n_states]; n_states];
    let mut total = 0u64;
    for path in paths {
        for (i, &s) in path.iter().enumerate() {
            if s >= n_states {
                return param_err(format!("state index {s} out of range (n={n_states})"));
            }
            if i + 1 < path.len() {
                counts[s][path[i + 1]] += 1;
                total += 1;
            }
        }
    }
    if total == 0 {
        return data_err("no transitions observed");
    }
    let mut rows = vec![vec![0.0; n_states]; n_states];
    let mut support_mask = vec![vec![false; n_states]; n_states];
    for b in 0..n_states {
        let visits: u64 = counts[b].iter().sum();
        if visits == 0 {
            rows[b][b] = 1.0;
            support_mask[b][b] = true;
        } else {
            for a in 0..n_states {
                if counts[b][a] > 0 {
                    rows[b][a] = counts[b][a] as f64 / visits as f64;
                    support_mask[b][a] = true;
                }
            }
        }
    }
    Ok(TransitionMatrix {
        n: n_states,
        rows,
        support_mask,
    })
}
