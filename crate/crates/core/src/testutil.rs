//! Shared helpers for unit and integration tests.

use crate::ensemble::TransitionMatrix;
use crate::lsmdp::UtilitySchedule;
use rand::Rng;
use rand_chacha::ChaCha12Rng;

/// Random dense row-stochastic matrix with entries bounded away from zero.
pub fn random_matrix(rng: &mut ChaCha12Rng, n: usize) -> TransitionMatrix {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let mut row: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.05).collect();
            let s: f64 = row.iter().sum();
            for v in row.iter_mut() {
                *v /= s;
            }
            let s2: f64 = row.iter().sum();
            row[n - 1] += 1.0 - s2;
            row
        })
        .collect();
    TransitionMatrix::from_rows(rows).unwrap()
}

/// Random sparse row-stochastic matrix: each row keeps `row_support` entries.
pub fn random_sparse_matrix(rng: &mut ChaCha12Rng, n: usize, row_support: usize) -> TransitionMatrix {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|b| {
            let mut row = vec![0.0; n];
            let mut picked = vec![b % n]; // keep the chain connected via self-loops
            while picked.len() < row_support.min(n) {
                let c = (rng.random::<u32>() as usize) % n;
                if !picked.contains(&c) {
                    picked.push(c);
                }
            }
            let mut total = 0.0;
            for &c in &picked {
                let w = rng.random::<f64>() + 0.1;
                row[c] = w;
                total += w;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
            let s2: f64 = row.iter().sum();
            let last = *picked.last().unwrap();
            row[last] += 1.0 - s2;
            row
        })
        .collect();
    TransitionMatrix::from_rows(rows).unwrap()
}

pub fn random_utility(rng: &mut ChaCha12Rng, horizon: usize, n: usize, scale: f64) -> UtilitySchedule {
    UtilitySchedule::new(
        (0..horizon)
            .map(|_| (0..n).map(|_| (rng.random::<f64>() - 0.5) * scale).collect())
            .collect(),
    )
    .unwrap()
}
