//! Demand-response events: utility schedules from tariffs and incentives,
//! ensemble simulation under a policy, and extracted-capacity metrics.

use serde::{Deserialize, Serialize};

use crate::ensemble::{StateSpace, TransitionMatrix};
use crate::error::{param_err, Result};
use crate::lsmdp::{propagate, Policy, UtilitySchedule};

/// One utility-called curtailment window. Indices are MDP time steps; the
/// policy activates `lead_time` steps before `start` and the incentive pays
/// on [start, end).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DrEvent {
    pub start: usize,
    pub end: usize,
    pub lead_time: usize,
    /// Currency per MW of reduction below the baseline, per step in the event.
    pub incentive_per_mw: f64,
    /// Currency per MWh consumed, applied over the active window.
    pub tariff_per_mwh: f64,
}

impl DrEvent {
    pub fn validate(&self, horizon: usize) -> Result<()> {
        if self.start >= self.end {
            return param_err(format!(
                "event start {} must be before end {}",
                self.start, self.end
            ));
        }
        if self.end > horizon {
            return param_err(format!(
                "event end {} exceeds horizon {horizon}",
                self.end
            ));
        }
        if self.incentive_per_mw < 0.0 || self.tariff_per_mwh < 0.0 {
            return param_err("prices must be nonnegative");
        }
        Ok(())
    }

    /// Steps during which the optimized policy is in force.
    pub fn active_range(&self) -> std::ops::Range<usize> {
        self.start.saturating_sub(self.lead_time)..self.end
    }
}

/// Expected ensemble power per time step, MW.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerTrajectory {
    pub expected_power_mw: Vec<f64>,
}

/// Builds the aggregator utility: inside the active window every state pays
/// the tariff on its representative power; during the event each MW below
/// the baseline reference earns the incentive. Zero outside the window.
pub fn build_utility_schedule(
    space: &StateSpace,
    event: &DrEvent,
    horizon: usize,
    interval_s: i64,
    baseline_power_mw: f64,
) -> Result<UtilitySchedule> {
    event.validate(horizon)?;
    if interval_s <= 0 {
        return param_err("interval must be positive");
    }
    let dt_hours = interval_s as f64 / 3600.0;
    let n = space.n();
    let active = event.active_range();
    let mut values = vec![vec![0.0; n]; horizon];
    for (t, row) in values.iter_mut().enumerate() {
        for (b, u) in row.iter_mut().enumerate() {
            let power = space.representative_power[b];
            if active.contains(&t) {
                *u -= event.tariff_per_mwh * power * dt_hours;
            }
            if (event.start..event.end).contains(&t) {
                *u += event.incentive_per_mw * (baseline_power_mw - power).max(0.0);
            }
        }
    }
    UtilitySchedule::new(values)
}

/// Propagates the occupation measure under `policy` and maps it to expected
/// MW through the representative powers.
pub fn simulate_event(
    policy: &Policy,
    rho0: &[f64],
    space: &StateSpace,
) -> Result<PowerTrajectory> {
    if policy.n() != space.n() {
        return param_err("policy and state space disagree on the state count");
    }
    let traj = propagate(policy, rho0)?;
    let expected_power_mw = traj
        .rho
        .iter()
        .map(|row| {
            row.iter()
                .zip(&space.representative_power)
                .map(|(&r, &p)| r * p)
                .sum()
        })
        .collect();
    Ok(PowerTrajectory { expected_power_mw })
}

/// Splices the optimized policy into the default dynamics: the controlled
/// matrices are used exactly from `lead_time` steps before the event through
/// its end, and the default matrix everywhere else.
pub fn compose_event_policy(
    p_bar: &TransitionMatrix,
    optimized: &Policy,
    event: &DrEvent,
) -> Result<Policy> {
    let steps = optimized.matrices.len();
    event.validate(steps + 1)?;
    let active = event.active_range();
    let matrices = (0..steps)
        .map(|t| {
            if active.contains(&t) {
                optimized.matrices[t].clone()
            } else {
                p_bar.clone()
            }
        })
        .collect();
    Ok(Policy {
        gamma: optimized.gamma,
        matrices,
    })
}

/// Reduction of a controlled trajectory against the baseline over the event.
#[derive(Debug, Clone, Serialize)]
pub struct CapacityMetrics {
    pub per_step_reduction_mw: Vec<f64>,
    pub peak_reduction_mw: f64,
    pub mean_reduction_mw: f64,
}

pub fn capacity_metrics(
    baseline: &PowerTrajectory,
    controlled: &PowerTrajectory,
    event: &DrEvent,
) -> Result<CapacityMetrics> {
    if baseline.expected_power_mw.len() != controlled.expected_power_mw.len() {
        return param_err("trajectories must have equal length");
    }
    if event.end > baseline.expected_power_mw.len() {
        return param_err("event window exceeds the trajectory length");
    }
    let per_step_reduction_mw: Vec<f64> = (event.start..event.end)
        .map(|t| baseline.expected_power_mw[t] - controlled.expected_power_mw[t])
        .collect();
    let peak_reduction_mw = per_step_reduction_mw
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let mean_reduction_mw =
        per_step_reduction_mw.iter().sum::<f64>() / per_step_reduction_mw.len() as f64;
    Ok(CapacityMetrics {
        per_step_reduction_mw,
        peak_reduction_mw,
        mean_reduction_mw,
    })
}

/// Peak-capacity ratio of two controlled trajectories against one baseline.
pub fn relative_capacity(
    baseline: &PowerTrajectory,
    a: &PowerTrajectory,
    b: &PowerTrajectory,
    event: &DrEvent,
) -> Result<f64> {
    let ma = capacity_metrics(baseline, a, event)?;
    let mb = capacity_metrics(baseline, b, event)?;
    if mb.peak_reduction_mw == 0.0 {
        return param_err("reference trajectory extracts no capacity");
    }
    Ok(ma.peak_reduction_mw / mb.peak_reduction_mw)
}
