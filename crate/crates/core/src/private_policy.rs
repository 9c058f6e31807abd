//! Differentially private policies by the stochastic route: the backward
//! recursion runs on exp(E[log]) weights in place of the default rows, with
//! the expected log supplied either by a second-order Taylor approximation or
//! by the exact digamma identity for Dirichlet marginals.

use serde::Serialize;

use crate::ensemble::TransitionMatrix;
use crate::error::{numerical_err, param_err, Result};
use crate::lsmdp::{
    log_weights, logsumexp, policy_from_log_weights, solve_log_weights, Desirability, Policy,
    UtilitySchedule,
};
use crate::special::digamma_unchecked;

/// How the expected log of the privatized default entries was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ElogMethod {
    Taylor,
    Digamma,
    /// Plain log of the default entries; the no-noise (k → ∞) reference.
    ExactLog,
}

impl ElogMethod {
    pub fn name(&self) -> &'static str {
        match self {
            ElogMethod::Taylor => "taylor",
            ElogMethod::Digamma => "digamma",
            ElogMethod::ExactLog => "exact_log",
        }
    }
}

/// E[log of the privatized default entry] per (source, destination);
/// −∞ off the support. Supported values are ≤ 0, with equality only for
/// deterministic entries.
#[derive(Debug, Clone)]
pub struct ExpectedLogMatrix {
    pub values: Vec<Vec<f64>>,
    pub method: ElogMethod,
}

impl ExpectedLogMatrix {
    /// True when the finite entries coincide exactly with `m`'s support.
    pub fn support_matches(&self, m: &TransitionMatrix) -> bool {
        self.values.len() == m.n
            && self
                .values
                .iter()
                .zip(&m.support_mask)
                .all(|(row, mask)| {
                    row.len() == m.n
                        && row
                            .iter()
                            .zip(mask)
                            .all(|(&v, &s)| (v > f64::NEG_INFINITY) == s)
                })
    }

    /// The exact-log reference (no privatization).
    pub fn exact_log(p_bar: &TransitionMatrix) -> Self {
        ExpectedLogMatrix {
            values: log_weights(p_bar),
            method: ElogMethod::ExactLog,
        }
    }
}

/// The Taylor correction −(1−p)/(2p(k+1)) diverges as p → 0; it is clamped
/// at this value in the log domain (exp(−30) ≈ 1e-13 kills the weight).
const TAYLOR_CORRECTION_CLAMP: f64 = 30.0;

fn check_inputs(p_bar: &TransitionMatrix, k: f64) -> Result<()> {
    if !(k > 0.0) {
        return param_err(format!("k must be positive, got {k}"));
    }
    for b in 0..p_bar.n {
        for a in p_bar.support_of(b) {
            if p_bar.rows[b][a] <= 0.0 {
                return param_err(format!("supported entry [{b}][{a}] must be positive"));
            }
        }
    }
    Ok(())
}

/// Second-order approximation: E[log P̃] ≈ log p − (1−p)/(2p(k+1)) entrywise.
pub fn expected_log_taylor(p_bar: &TransitionMatrix, k: f64) -> Result<ExpectedLogMatrix> {
    check_inputs(p_bar, k)?;
    let values = p_bar
        .rows
        .iter()
        .zip(&p_bar.support_mask)
        .map(|(row, mask)| {
            row.iter()
                .zip(mask)
                .map(|(&p, &m)| {
                    if !m {
                        return f64::NEG_INFINITY;
                    }
                    let correction = ((1.0 - p) / (2.0 * p * (k + 1.0))).min(TAYLOR_CORRECTION_CLAMP);
                    p.ln() - correction
                })
                .collect()
        })
        .collect();
    Ok(ExpectedLogMatrix {
        values,
        method: ElogMethod::Taylor,
    })
}

/// Exact Dirichlet identity: E[log P̃] = ψ(k·p) − ψ(k) entrywise.
pub fn expected_log_digamma(p_bar: &TransitionMatrix, k: f64) -> Result<ExpectedLogMatrix> {
    check_inputs(p_bar, k)?;
    let psi_k = digamma_unchecked(k);
    let values = p_bar
        .rows
        .iter()
        .zip(&p_bar.support_mask)
        .map(|(row, mask)| {
            row.iter()
                .zip(mask)
                .map(|(&p, &m)| {
                    if !m {
                        f64::NEG_INFINITY
                    } else {
                        digamma_unchecked(k * p) - psi_k
                    }
                })
                .collect()
        })
        .collect();
    Ok(ExpectedLogMatrix {
        values,
        method: ElogMethod::Digamma,
    })
}

/// Runs the backward recursion with effective weights exp(E[log P̃]) in place
/// of the default rows. The weights stay sub-normalized inside the recursion;
/// only the returned policy rows are renormalized to the simplex.
pub fn solve_private(
    p_bar: &TransitionMatrix,
    u: &UtilitySchedule,
    gamma: f64,
    horizon: usize,
    elog: &ExpectedLogMatrix,
) -> Result<(Policy, Desirability)> {
    if u.horizon() != horizon {
        return param_err(format!(
            "utility schedule covers {} steps, expected horizon {horizon}",
            u.horizon()
        ));
    }
    if !elog.support_matches(p_bar) {
        return param_err("expected-log support does not match the default matrix");
    }
    let z = solve_log_weights(&elog.values, u, gamma)?;
    let policy = policy_from_log_weights(&elog.values, &z, gamma, p_bar)?;
    Ok((policy, z))
}

/// Cost-of-privacy report: per (transition step, source state) value
/// differences, plus the expected total under the initial distribution.
#[derive(Debug, Clone, Serialize)]
pub struct CostReport {
    pub method: String,
    pub k: f64,
    /// delta_c[t][beta], currency, for t = 0..T-2.
    pub delta_c: Vec<Vec<f64>>,
    /// rho0-weighted total at the initial step.
    pub total: f64,
    /// Monte Carlo reference total (average-value route only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc_total: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc_stderr: Option<f64>,
    /// |total − mc_total| when a reference run is attached.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap: Option<f64>,
}

/// Closed-form cost of privacy for the stochastic route, cross-checked
/// against the generic value-function difference.
///
/// Per (t,β) the closed form is
///   γ·Σ_α P̃[β][α]·(elog[β][α] − ln P̄[β][α])
///   + γ·logΣ_α P̄[β][α]·z[t+1][α] − γ·logΣ_α exp(elog[β][α])·z̃[t+1][α],
/// while the check recomputes φ̃ − φ from the realized policy entries:
///   φ̃ = −U + Σ_α P̃·(γ ln P̃ − γ ln P̄ − γ log z̃[t+1]),
///   φ  = −U − γ·logΣ_α P̄·z[t+1].
/// The two expression trees agree algebraically; a mismatch beyond 1e-8
/// signals a transcription bug and is an error, not a warning.
pub fn cost_of_privacy_stochastic(
    p_bar: &TransitionMatrix,
    u: &UtilitySchedule,
    gamma: f64,
    horizon: usize,
    elog: &ExpectedLogMatrix,
    private_solution: (&Policy, &Desirability),
    nonprivate_solution: (&Policy, &Desirability),
    rho0: &[f64],
) -> Result<CostReport> {
    let (private_policy, z_tilde) = private_solution;
    let (_, z) = nonprivate_solution;
    if u.horizon() != horizon || z.horizon() != horizon || z_tilde.horizon() != horizon {
        return param_err("horizon mismatch between inputs");
    }
    if !elog.support_matches(p_bar) {
        return param_err("expected-log support does not match the default matrix");
    }
    let n = p_bar.n;
    let log_p = log_weights(p_bar);
    let mut delta_c = vec![vec![0.0; n]; horizon - 1];
    for t in 0..horizon - 1 {
        let zt1 = &z.log_z[t + 1];
        let zt1_tilde = &z_tilde.log_z[t + 1];
        let rows = &private_policy.matrices[t].rows;
        for b in 0..n {
            let log_s = logsumexp(log_p[b].iter().zip(zt1).map(|(&w, &lz)| w + lz));
            let log_s_tilde =
                logsumexp(elog.values[b].iter().zip(zt1_tilde).map(|(&w, &lz)| w + lz));
            let mut weighted = 0.0;
            for a in p_bar.support_of(b) {
                weighted += rows[b][a] * (elog.values[b][a] - log_p[b][a]);
            }
            let closed_form = gamma * weighted + gamma * log_s - gamma * log_s_tilde;

            // independent route: value functions from the realized policy
            let mut phi_tilde = -u.values[t][b];
            for a in p_bar.support_of(b) {
                let p = rows[b][a];
                if p > 0.0 {
                    phi_tilde += p * (gamma * p.ln() - gamma * log_p[b][a] - gamma * zt1_tilde[a]);
                }
            }
            let phi = -u.values[t][b] - gamma * log_s;
            let direct = phi_tilde - phi;
            if (closed_form - direct).abs() > 1e-8 {
                return numerical_err(format!(
                    "cost cross-check mismatch at t={t}, state={b}: {closed_form} vs {direct}"
                ));
            }
            delta_c[t][b] = closed_form;
        }
    }
    let total = rho0
        .iter()
        .zip(&delta_c[0])
        .map(|(&r, &dc)| r * dc)
        .sum();
    Ok(CostReport {
        method: elog.method.name().to_string(),
        k: f64::NAN,
        delta_c,
        total,
        mc_total: None,
        mc_stderr: None,
        gap: None,
    })
}
