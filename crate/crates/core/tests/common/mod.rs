//! Shared fixtures for the integration suites: the synthetic case-study
//! instance (100 buildings, 20 states) and small random problem generators.

use std::io::Write;
use std::path::Path;

use drmdp::dr::DrEvent;
use drmdp::ensemble::{
    aggregate_series, discretize, estimate_default_matrix, ConsumptionSeries, StateSpace,
    TransitionMatrix,
};
use drmdp::lsmdp::UtilitySchedule;
use rand::Rng;
use rand_chacha::ChaCha12Rng;

pub const CASE_STUDY_GAMMA: f64 = 15.0;
pub const CASE_STUDY_H: f64 = 0.03;
pub const CASE_STUDY_HORIZON: usize = 25;
pub const CASE_STUDY_SEED: u64 = 7;

/// Base daily profile in MW at 15-minute resolution: overnight floor,
/// a daylight ramp and a midday peak.
pub fn base_profile_mw(step_of_day: usize) -> f64 {
    let h = step_of_day as f64 / 4.0;
    let ramp = ((h - 6.0) / 24.0 * 2.0 * std::f64::consts::PI).sin().powi(2);
    let peak = (-0.5 * ((h - 13.0) / 2.5).powi(2)).exp();
    0.30 + 0.12 * ramp + 0.18 * peak
}

/// One building's consumption over `days` days with a mild day-to-day wobble.
pub fn base_series(days: usize) -> ConsumptionSeries {
    let steps = days * 96;
    let mut timestamps = Vec::with_capacity(steps);
    let mut power = Vec::with_capacity(steps);
    for d in 0..days {
        let wob = 1.0
            + 0.002 * (2.0 * std::f64::consts::PI * d as f64 / 9.0 + 1.3).sin()
            + 0.001 * (2.0 * std::f64::consts::PI * d as f64 / 4.0).cos();
        for s in 0..96 {
            timestamps.push(((d * 96 + s) as i64) * 900);
            power.push(base_profile_mw(s) * wob);
        }
    }
    ConsumptionSeries {
        building_id: None,
        timestamps,
        power_mw: power,
        interval_s: 900,
    }
}

pub fn write_base_csv(path: &Path, days: usize) {
    let series = base_series(days);
    let mut out = String::from("timestamp,power_mw\n");
    for (ts, p) in series.timestamps.iter().zip(&series.power_mw) {
        out.push_str(&format!("{ts},{p}\n"));
    }
    let mut f = std::fs::File::create(path).unwrap();
    f.write_all(out.as_bytes()).unwrap();
}

pub struct CaseStudy {
    pub matrix: TransitionMatrix,
    pub space: StateSpace,
    pub rho0: Vec<f64>,
    pub event: DrEvent,
    pub utility: UtilitySchedule,
    pub baseline: drmdp::dr::PowerTrajectory,
}

/// The 100-building, 20-state instance simulated from 10:00, with the event
/// covering 11:00–15:00 and the policy activating 30 minutes early.
pub fn case_study() -> CaseStudy {
    let base = base_series(30);
    let ensemble =
        drmdp::ensemble::synthesize_ensemble(&base, 100, 0.10, CASE_STUDY_SEED).unwrap();
    let aggregate = aggregate_series(&ensemble).unwrap();
    let (space, path) = discretize(&aggregate, 20).unwrap();
    let matrix = estimate_default_matrix(&[path.clone()], 20).unwrap();
    // 10:00 of the first day is sample 40
    let mut rho0 = vec![0.0; 20];
    rho0[path[40]] = 1.0;
    let event = DrEvent {
        start: 4,
        end: 20,
        lead_time: 2,
        incentive_per_mw: 0.5,
        tariff_per_mwh: 2.0,
    };
    let default_policy =
        drmdp::lsmdp::Policy::from_default(&matrix, CASE_STUDY_GAMMA, CASE_STUDY_HORIZON);
    let baseline = drmdp::dr::simulate_event(&default_policy, &rho0, &space).unwrap();
    let utility = drmdp::dr::build_utility_schedule(
        &space,
        &event,
        CASE_STUDY_HORIZON,
        900,
        baseline.expected_power_mw[event.start],
    )
    .unwrap();
    CaseStudy {
        matrix,
        space,
        rho0,
        event,
        utility,
        baseline,
    }
}

/// Dense random row-stochastic matrix with entries bounded away from zero.
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

pub fn random_utility(
    rng: &mut ChaCha12Rng,
    horizon: usize,
    n: usize,
    scale: f64,
) -> UtilitySchedule {
    UtilitySchedule::new(
        (0..horizon)
            .map(|_| (0..n).map(|_| (rng.random::<f64>() - 0.5) * scale).collect())
            .collect(),
    )
    .unwrap()
}

/// Random policy on the support of `p_bar` (a feasible competitor).
pub fn random_feasible_policy(
    rng: &mut ChaCha12Rng,
    p_bar: &TransitionMatrix,
    horizon: usize,
    gamma: f64,
) -> drmdp::lsmdp::Policy {
    let n = p_bar.n;
    let matrices = (0..horizon - 1)
        .map(|_| {
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|b| {
                    let mut row = vec![0.0; n];
                    let support: Vec<usize> = p_bar.support_of(b).collect();
                    let mut total = 0.0;
                    for &a in &support {
                        let w: f64 = rng.random::<f64>() + 0.01;
                        row[a] = w;
                        total += w;
                    }
                    for v in row.iter_mut() {
                        *v /= total;
                    }
                    let s2: f64 = row.iter().sum();
                    let last = *support.last().unwrap();
                    row[last] += 1.0 - s2;
                    row
                })
                .collect();
            TransitionMatrix {
                n,
                rows,
                support_mask: p_bar.support_mask.clone(),
            }
        })
        .collect();
    drmdp::lsmdp::Policy { gamma, matrices }
}
