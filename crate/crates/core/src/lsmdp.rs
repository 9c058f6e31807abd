//! Finite-horizon KL-control solver: desirability recursion, optimal policy,
//! distribution propagation and objective evaluation.
//!
//! All recursions run in the log domain with logsumexp; utilities divided by
//! the penalty weight would otherwise overflow `exp` for realistic tariffs.

use crate::ensemble::TransitionMatrix;
use crate::error::{numerical_err, param_err, Result};

/// Aggregator utility per (time step, state), currency units. T×n.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilitySchedule {
    pub values: Vec<Vec<f64>>,
}

impl UtilitySchedule {
    pub fn new(values: Vec<Vec<f64>>) -> Result<Self> {
        if values.is_empty() {
            return param_err("utility schedule must cover at least one time step");
        }
        let n = values[0].len();
        for (t, row) in values.iter().enumerate() {
            if row.len() != n {
                return param_err(format!("utility row {t} has wrong length"));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return param_err(format!("utility row {t} contains non-finite values"));
            }
        }
        Ok(UtilitySchedule { values })
    }

    pub fn zeros(horizon: usize, n: usize) -> Self {
        UtilitySchedule {
            values: vec![vec![0.0; n]; horizon],
        }
    }

    pub fn horizon(&self) -> usize {
        self.values.len()
    }

    pub fn n(&self) -> usize {
        self.values[0].len()
    }
}

/// Log-domain desirability per (time step, state). T×n.
#[derive(Debug, Clone, PartialEq)]
pub struct Desirability {
    pub log_z: Vec<Vec<f64>>,
}

impl Desirability {
    pub fn horizon(&self) -> usize {
        self.log_z.len()
    }
}

/// Time-varying controlled transition matrices, one per transition step,
/// together with the KL penalty weight they were solved under.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub gamma: f64,
    pub matrices: Vec<TransitionMatrix>,
}

impl Policy {
    pub fn horizon(&self) -> usize {
        self.matrices.len() + 1
    }

    pub fn n(&self) -> usize {
        self.matrices.first().map_or(0, |m| m.n)
    }

    /// A constant policy that follows the default dynamics at every step.
    pub fn from_default(p_bar: &TransitionMatrix, gamma: f64, horizon: usize) -> Policy {
        Policy {
            gamma,
            matrices: vec![p_bar.clone(); horizon.saturating_sub(1)],
        }
    }
}

/// State occupation probabilities per time step. T×n, rows on the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionTrajectory {
    pub rho: Vec<Vec<f64>>,
}

const SIMPLEX_TOL: f64 = 1e-9;

pub(crate) fn logsumexp(terms: impl Iterator<Item = f64>) -> f64 {
    let vals: Vec<f64> = terms.filter(|v| *v > f64::NEG_INFINITY).collect();
    if vals.is_empty() {
        return f64::NEG_INFINITY;
    }
    let m = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + vals.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Per-row log weights of the default matrix: ln P̄ on the support, −∞ off it.
pub(crate) fn log_weights(p_bar: &TransitionMatrix) -> Vec<Vec<f64>> {
    p_bar
        .rows
        .iter()
        .zip(&p_bar.support_mask)
        .map(|(row, mask)| {
            row.iter()
                .zip(mask)
                .map(|(&p, &m)| if m && p > 0.0 { p.ln() } else { f64::NEG_INFINITY })
                .collect()
        })
        .collect()
}

/// Backward recursion over arbitrary log weights; shared by the non-private
/// and the privatized solvers.
pub(crate) fn solve_log_weights(
    log_w: &[Vec<f64>],
    u: &UtilitySchedule,
    gamma: f64,
) -> Result<Desirability> {
    let horizon = u.horizon();
    let n = u.n();
    if gamma <= 0.0 || !gamma.is_finite() {
        return param_err(format!("gamma must be positive, got {gamma}"));
    }
    if log_w.len() != n || log_w.iter().any(|r| r.len() != n) {
        return param_err("weight matrix does not match the state count");
    }
    for (b, row) in log_w.iter().enumerate() {
        if row.iter().all(|w| *w == f64::NEG_INFINITY) {
            return numerical_err(format!(
                "absorbing state with no transitions (state {b})"
            ));
        }
    }
    let mut log_z = vec![vec![0.0; n]; horizon];
    for b in 0..n {
        log_z[horizon - 1][b] = u.values[horizon - 1][b] / gamma;
    }
    for t in (0..horizon - 1).rev() {
        let (head, tail) = log_z.split_at_mut(t + 1);
        let next = &tail[0];
        for b in 0..n {
            let lse = logsumexp(log_w[b].iter().zip(next).map(|(&w, &z)| w + z));
            head[t][b] = u.values[t][b] / gamma + lse;
        }
    }
    Ok(Desirability { log_z })
}

/// Policy rows as the softmax of log weights plus next-step log desirability,
/// restricted to the support.
pub(crate) fn policy_from_log_weights(
    log_w: &[Vec<f64>],
    z: &Desirability,
    gamma: f64,
    support: &TransitionMatrix,
) -> Result<Policy> {
    let horizon = z.horizon();
    if horizon < 2 {
        return param_err("policy requires a horizon of at least 2 steps");
    }
    let n = support.n;
    let mut matrices = Vec::with_capacity(horizon - 1);
    for t in 0..horizon - 1 {
        let next = &z.log_z[t + 1];
        let mut rows = vec![vec![0.0; n]; n];
        for b in 0..n {
            let lse = logsumexp(log_w[b].iter().zip(next).map(|(&w, &z)| w + z));
            if !lse.is_finite() {
                return numerical_err(format!(
                    "absorbing state with no transitions (state {b})"
                ));
            }
            for a in 0..n {
                if log_w[b][a] > f64::NEG_INFINITY {
                    rows[b][a] = (log_w[b][a] + next[a] - lse).exp();
                }
            }
            // absorb rounding so each row is exactly on the simplex
            let s: f64 = rows[b].iter().sum();
            for v in rows[b].iter_mut() {
                *v /= s;
            }
        }
        matrices.push(TransitionMatrix {
            n,
            rows,
            support_mask: support.support_mask.clone(),
        });
    }
    Ok(Policy { gamma, matrices })
}

/// Desirability of the default dynamics: log z is computed backward from the
/// terminal condition log z[T-1] = U[T-1]/γ.
pub fn solve_desirability(
    p_bar: &TransitionMatrix,
    u: &UtilitySchedule,
    gamma: f64,
    horizon: usize,
) -> Result<Desirability> {
    if u.horizon() != horizon {
        return param_err(format!(
            "utility schedule covers {} steps, expected horizon {horizon}",
            u.horizon()
        ));
    }
    if u.n() != p_bar.n {
        return param_err("utility schedule does not match the state count");
    }
    solve_log_weights(&log_weights(p_bar), u, gamma)
}

/// Optimal controlled matrices: each default row reweighted by the next-step
/// desirability and renormalized. Zero-support entries stay zero.
pub fn optimal_policy(p_bar: &TransitionMatrix, z: &Desirability, gamma: f64) -> Result<Policy> {
    if z.log_z.first().map_or(0, Vec::len) != p_bar.n {
        return param_err("desirability does not match the state count");
    }
    policy_from_log_weights(&log_weights(p_bar), z, gamma, p_bar)
}

/// Pushes an initial distribution through the policy. Row-sum drift beyond
/// 1e-9 is an error rather than silently renormalized.
pub fn propagate(policy: &Policy, rho0: &[f64]) -> Result<DistributionTrajectory> {
    let n = policy.n();
    if rho0.len() != n {
        return param_err("initial distribution does not match the state count");
    }
    if rho0.iter().any(|&p| p < 0.0 || !p.is_finite()) {
        return param_err("initial distribution has negative or non-finite entries");
    }
    let s0: f64 = rho0.iter().sum();
    if (s0 - 1.0).abs() > SIMPLEX_TOL {
        return param_err(format!("initial distribution sums to {s0}, expected 1"));
    }
    let mut rho = Vec::with_capacity(policy.horizon());
    rho.push(rho0.to_vec());
    for (t, m) in policy.matrices.iter().enumerate() {
        let cur = &rho[t];
        let mut next = vec![0.0; n];
        for b in 0..n {
            if cur[b] == 0.0 {
                continue;
            }
            for a in 0..n {
                next[a] += m.rows[b][a] * cur[b];
            }
        }
        let s: f64 = next.iter().sum();
        if (s - 1.0).abs() > SIMPLEX_TOL {
            return numerical_err(format!(
                "row-sum drift {} at step {t} exceeds 1e-9",
                (s - 1.0).abs()
            ));
        }
        for v in next.iter_mut() {
            *v /= s;
        }
        rho.push(next);
    }
    Ok(DistributionTrajectory { rho })
}

/// KL divergence Σ p_i ln(p_i/q_i) with the 0·ln(0/0) = 0 convention.
/// Errors when p puts mass where q has none.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return param_err("KL divergence requires vectors of equal length");
    }
    let mut acc = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return numerical_err(format!("KL undefined: support violation at index {i}"));
        }
        acc += pi * (pi / qi).ln();
    }
    Ok(acc)
}

/// Expected control objective of a policy: the propagated occupation measure
/// weighs, at every transition step, the KL discomfort against the utility
/// collected at the next state. Utilities are counted at times 1..T-1.
pub fn evaluate_objective(
    policy: &Policy,
    p_bar: &TransitionMatrix,
    u: &UtilitySchedule,
    rho0: &[f64],
    gamma: f64,
) -> Result<f64> {
    if u.horizon() != policy.horizon() {
        return param_err(format!(
            "utility schedule covers {} steps, policy implies {}",
            u.horizon(),
            policy.horizon()
        ));
    }
    if !policy
        .matrices
        .iter()
        .all(|m| m.support_within(p_bar))
    {
        return numerical_err("KL undefined: policy mass outside the default support");
    }
    let traj = propagate(policy, rho0)?;
    let n = p_bar.n;
    let mut total = 0.0;
    for (t, m) in policy.matrices.iter().enumerate() {
        for b in 0..n {
            let w = traj.rho[t][b];
            if w == 0.0 {
                continue;
            }
            let kl = kl_divergence(&m.rows[b], &p_bar.rows[b])?;
            let eu: f64 = m.rows[b]
                .iter()
                .zip(&u.values[t + 1])
                .map(|(&p, &uv)| p * uv)
                .sum();
            total += w * (gamma * kl - eu);
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    use crate::testutil::{random_matrix, random_utility};

    fn uniform2() -> TransitionMatrix {
        TransitionMatrix::from_rows(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap()
    }

    #[test]
    fn zero_utility_gives_zero_log_desirability() {
        let p = uniform2();
        let u = UtilitySchedule::zeros(4, 2);
        let z = solve_desirability(&p, &u, 3.0, 4).unwrap();
        for row in &z.log_z {
            for &v in row {
                assert!(v.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_state_hand_case() {
        // T=2, uniform rows, terminal utility (γ·ln2, 0) ⇒ z0 = (1.5, 1.5)
        let gamma = 3.0;
        let p = uniform2();
        let u = UtilitySchedule::new(vec![vec![0.0, 0.0], vec![gamma * 2f64.ln(), 0.0]]).unwrap();
        let z = solve_desirability(&p, &u, gamma, 2).unwrap();
        for b in 0..2 {
            assert!((z.log_z[0][b].exp() - 1.5).abs() < 1e-12);
        }
        // policy row reweights (0.5,0.5) by z1=(2,1): (2/3, 1/3)
        let pol = optimal_policy(&p, &z, gamma).unwrap();
        assert!((pol.matrices[0].rows[0][0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((pol.matrices[0].rows[0][1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn single_state_chain_accumulates_utilities() {
        let p = TransitionMatrix::from_rows(vec![vec![1.0]]).unwrap();
        let gamma = 2.0;
        let u = UtilitySchedule::new(vec![vec![1.0], vec![-0.5], vec![2.0]]).unwrap();
        let z = solve_desirability(&p, &u, gamma, 3).unwrap();
        // log z[t] = Σ_{s≥t} U[s]/γ
        assert!((z.log_z[2][0] - 1.0).abs() < 1e-12);
        assert!((z.log_z[1][0] - 0.75).abs() < 1e-12);
        assert!((z.log_z[0][0] - 1.25).abs() < 1e-12);
    }

    #[test]
    fn terminal_condition_is_exact() {
        let p = uniform2();
        let u = UtilitySchedule::new(vec![vec![0.3, -0.2], vec![1.7, 0.4]]).unwrap();
        let z = solve_desirability(&p, &u, 5.0, 2).unwrap();
        assert_eq!(z.log_z[1][0], 1.7 / 5.0);
        assert_eq!(z.log_z[1][1], 0.4 / 5.0);
    }

    #[test]
    fn uniform_desirability_recovers_default_rows() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let p = random_matrix(&mut rng, 4);
        let z = Desirability {
            log_z: vec![vec![0.7; 4]; 3],
        };
        let pol = optimal_policy(&p, &z, 1.0).unwrap();
        for t in 0..2 {
            for b in 0..4 {
                for a in 0..4 {
                    assert!((pol.matrices[t].rows[b][a] - p.rows[b][a]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn deterministic_row_is_fixed_point_of_reweighting() {
        let p = TransitionMatrix::from_rows(vec![vec![0.0, 1.0], vec![0.5, 0.5]]).unwrap();
        let z = Desirability {
            log_z: vec![vec![3.0, -1.0]; 2],
        };
        let pol = optimal_policy(&p, &z, 1.0).unwrap();
        assert_eq!(pol.matrices[0].rows[0], vec![0.0, 1.0]);
    }

    #[test]
    fn empty_support_row_errors() {
        let m = TransitionMatrix {
            n: 2,
            rows: vec![vec![0.0, 0.0], vec![0.5, 0.5]],
            support_mask: vec![vec![false, false], vec![true, true]],
        };
        let u = UtilitySchedule::zeros(3, 2);
        let err = solve_desirability(&m, &u, 1.0, 3).unwrap_err();
        assert!(err.to_string().contains("absorbing state"), "{err}");
    }

    #[test]
    fn identity_policy_keeps_distribution_fixed() {
        let pol = Policy::from_default(&TransitionMatrix::identity(3), 1.0, 5);
        let traj = propagate(&pol, &[0.2, 0.5, 0.3]).unwrap();
        for row in &traj.rho {
            assert_eq!(row, &vec![0.2, 0.5, 0.3]);
        }
    }

    #[test]
    fn permutation_chain_alternates() {
        let swap = TransitionMatrix::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let pol = Policy::from_default(&swap, 1.0, 4);
        let traj = propagate(&pol, &[1.0, 0.0]).unwrap();
        assert_eq!(traj.rho[0], vec![1.0, 0.0]);
        assert_eq!(traj.rho[1], vec![0.0, 1.0]);
        assert_eq!(traj.rho[2], vec![1.0, 0.0]);
    }

    #[test]
    fn propagate_matches_dense_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let n = 4;
        let mats: Vec<TransitionMatrix> = (0..9).map(|_| random_matrix(&mut rng, n)).collect();
        let pol = Policy {
            gamma: 1.0,
            matrices: mats.clone(),
        };
        let rho0 = vec![0.25; 4];
        let traj = propagate(&pol, &rho0).unwrap();
        // independent dense matrix-vector oracle
        let mut cur = rho0.clone();
        for (t, m) in mats.iter().enumerate() {
            let mut next = vec![0.0; n];
            for a in 0..n {
                for b in 0..n {
                    next[a] += m.rows[b][a] * cur[b];
                }
            }
            for (x, y) in next.iter().zip(&traj.rho[t + 1]) {
                assert!((x - y).abs() < 1e-12);
            }
            cur = next;
        }
    }

    #[test]
    fn propagate_rejects_off_simplex_start() {
        let pol = Policy::from_default(&uniform2(), 1.0, 3);
        assert!(propagate(&pol, &[0.5, 0.6]).is_err());
        assert!(propagate(&pol, &[-0.1, 1.1]).is_err());
    }

    #[test]
    fn kl_closed_forms() {
        assert_eq!(kl_divergence(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        let v = kl_divergence(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-15);
        assert!(kl_divergence(&[0.5, 0.5], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn kl_matches_compensated_summation_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        for _ in 0..50 {
            let mut p: Vec<f64> = (0..6).map(|_| rng.random::<f64>() + 1e-3).collect();
            let mut q: Vec<f64> = (0..6).map(|_| rng.random::<f64>() + 1e-3).collect();
            let (sp, sq): (f64, f64) = (p.iter().sum(), q.iter().sum());
            p.iter_mut().for_each(|v| *v /= sp);
            q.iter_mut().for_each(|v| *v /= sq);
            // Neumaier-compensated summation as the high-precision oracle
            let mut sum = 0.0;
            let mut comp = 0.0;
            for (pi, qi) in p.iter().zip(&q) {
                let term = pi * (pi / qi).ln();
                let t = sum + term;
                comp += if sum.abs() >= term.abs() {
                    (sum - t) + term
                } else {
                    (term - t) + sum
                };
                sum = t;
            }
            let oracle = sum + comp;
            let got = kl_divergence(&p, &q).unwrap();
            assert!((got - oracle).abs() < 1e-14);
        }
    }

    #[test]
    fn objective_of_default_policy_is_pure_utility() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        let p = random_matrix(&mut rng, 3);
        let u = random_utility(&mut rng, 5, 3, 2.0);
        let pol = Policy::from_default(&p, 1.5, 5);
        let rho0 = vec![1.0, 0.0, 0.0];
        let obj = evaluate_objective(&pol, &p, &u, &rho0, 1.5).unwrap();
        let traj = propagate(&pol, &rho0).unwrap();
        let want: f64 = -(1..5)
            .map(|t| {
                traj.rho[t]
                    .iter()
                    .zip(&u.values[t])
                    .map(|(&r, &uv)| r * uv)
                    .sum::<f64>()
            })
            .sum::<f64>();
        assert!((obj - want).abs() < 1e-12);
        // with zero utility the default policy costs nothing
        let zeros = UtilitySchedule::zeros(5, 3);
        let zero_obj = evaluate_objective(&pol, &p, &zeros, &rho0, 1.5).unwrap();
        assert!(zero_obj.abs() < 1e-12);
    }

    #[test]
    fn optimal_policy_beats_random_feasible_policies() {
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let gamma = 1.2;
        for _ in 0..5 {
            let n = 2 + (rng.random::<u32>() % 3) as usize;
            let horizon = 3 + (rng.random::<u32>() % 3) as usize;
            let p = random_matrix(&mut rng, n);
            let u = random_utility(&mut rng, horizon, n, 3.0);
            let rho0 = {
                let mut v = vec![0.0; n];
                v[0] = 1.0;
                v
            };
            let z = solve_desirability(&p, &u, gamma, horizon).unwrap();
            let pol = optimal_policy(&p, &z, gamma).unwrap();
            let best = evaluate_objective(&pol, &p, &u, &rho0, gamma).unwrap();
            let default = Policy::from_default(&p, gamma, horizon);
            let default_obj = evaluate_objective(&default, &p, &u, &rho0, gamma).unwrap();
            assert!(best <= default_obj + 1e-9, "optimal must beat the default");
            for _ in 0..100 {
                let mats: Vec<TransitionMatrix> =
                    (0..horizon - 1).map(|_| random_matrix(&mut rng, n)).collect();
                let candidate = Policy {
                    gamma,
                    matrices: mats,
                };
                let obj = evaluate_objective(&candidate, &p, &u, &rho0, gamma).unwrap();
                assert!(best <= obj + 1e-9, "optimal {best} beaten by {obj}");
            }
        }
    }

    #[test]
    fn zero_utility_fixed_point_recovers_default() {
        let mut rng = ChaCha12Rng::seed_from_u64(37);
        for n in [2usize, 4, 7] {
            let p = random_matrix(&mut rng, n);
            let u = UtilitySchedule::zeros(5, n);
            let z = solve_desirability(&p, &u, 2.0, 5).unwrap();
            let pol = optimal_policy(&p, &z, 2.0).unwrap();
            for m in &pol.matrices {
                assert!(m.max_row_l1(&p) < 1e-12);
            }
        }
    }

    #[test]
    fn policy_approaches_default_as_gamma_grows() {
        let mut rng = ChaCha12Rng::seed_from_u64(41);
        let p = random_matrix(&mut rng, 4);
        let u = random_utility(&mut rng, 5, 4, 10.0);
        let dev = |gamma: f64| {
            let z = solve_desirability(&p, &u, gamma, 5).unwrap();
            let pol = optimal_policy(&p, &z, gamma).unwrap();
            pol.matrices
                .iter()
                .map(|m| m.max_row_l1(&p))
                .fold(0.0, f64::max)
        };
        let d6 = dev(1e6);
        let d8 = dev(1e8);
        assert!(d8 < d6, "deviation must shrink as gamma grows: {d8} vs {d6}");
    }

    #[test]
    fn bellman_consistency_of_value_function() {
        // −γ log z_t must equal the one-step utility-plus-KL lookahead under
        // the optimal policy.
        let mut rng = ChaCha12Rng::seed_from_u64(43);
        let gamma = 1.7;
        let n = 4;
        let horizon = 6;
        let p = random_matrix(&mut rng, n);
        let u = random_utility(&mut rng, horizon, n, 2.0);
        let z = solve_desirability(&p, &u, gamma, horizon).unwrap();
        let pol = optimal_policy(&p, &z, gamma).unwrap();
        for t in 0..horizon - 1 {
            for b in 0..n {
                let phi_t = -gamma * z.log_z[t][b];
                let row = &pol.matrices[t].rows[b];
                let kl = kl_divergence(row, &p.rows[b]).unwrap();
                let cont: f64 = row
                    .iter()
                    .zip(&z.log_z[t + 1])
                    .map(|(&pp, &lz)| pp * (-gamma * lz))
                    .sum();
                let lookahead = -u.values[t][b] + gamma * kl + cont;
                assert!(
                    (phi_t - lookahead).abs() < 1e-9,
                    "Bellman mismatch at t={t}, b={b}: {phi_t} vs {lookahead}"
                );
            }
        }
    }

    #[test]
    fn log_space_matches_linear_space_where_representable() {
        let mut rng = ChaCha12Rng::seed_from_u64(47);
        let n = 3;
        let horizon = 5;
        let gamma = 4.0;
        let p = random_matrix(&mut rng, n);
        let u = random_utility(&mut rng, horizon, n, 1.0);
        let z = solve_desirability(&p, &u, gamma, horizon).unwrap();
        // independent linear-space recursion
        let mut zz = vec![vec![0.0; n]; horizon];
        for b in 0..n {
            zz[horizon - 1][b] = (u.values[horizon - 1][b] / gamma).exp();
        }
        for t in (0..horizon - 1).rev() {
            for b in 0..n {
                let s: f64 = (0..n).map(|a| p.rows[b][a] * zz[t + 1][a]).sum();
                zz[t][b] = (u.values[t][b] / gamma).exp() * s;
            }
        }
        for t in 0..horizon {
            for b in 0..n {
                let rel = (z.log_z[t][b] - zz[t][b].ln()).abs() / zz[t][b].ln().abs().max(1.0);
                assert!(rel < 1e-10, "t={t} b={b}");
            }
        }
    }
}
