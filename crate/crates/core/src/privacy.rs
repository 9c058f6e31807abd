//! Dirichlet mechanism over simplex rows, adjacency, and (ε,δ) accounting.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::Serialize;

use crate::ensemble::TransitionMatrix;
use crate::error::{numerical_err, param_err, Result};
use crate::seed::{split_seed, STREAM_DELTA};
use crate::special::log_beta;

/// A probability vector with an explicit structural support. Entries outside
/// the support are exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexVector {
    pub entries: Vec<f64>,
    pub support: Vec<usize>,
}

const SIMPLEX_TOL: f64 = 1e-12;

impl SimplexVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        let support = entries
            .iter()
            .enumerate()
            .filter_map(|(i, &p)| (p != 0.0).then_some(i))
            .collect();
        let v = SimplexVector { entries, support };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        let mut sum = 0.0;
        for (i, &p) in self.entries.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) || !p.is_finite() {
                return param_err(format!("entry {i} = {p} outside [0,1]"));
            }
            if p != 0.0 && !self.support.contains(&i) {
                return param_err(format!("entry {i} nonzero outside support"));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return param_err(format!("entries sum to {sum}, expected 1"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn l1_distance(&self, other: &SimplexVector) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }

    /// Row `beta` of a transition matrix as a simplex vector.
    pub fn from_matrix_row(m: &TransitionMatrix, beta: usize) -> Self {
        SimplexVector {
            entries: m.rows[beta].clone(),
            support: m.support_of(beta).collect(),
        }
    }
}

/// Dirichlet-mechanism parameters together with the accounting outcome.
#[derive(Debug, Clone, Serialize)]
pub struct PrivacyParams {
    /// Concentration scale of the mechanism.
    pub k: f64,
    /// Adjacency bound in (0,1].
    pub h: f64,
    /// Probability of breaching the ε guarantee, in [0,1].
    pub delta: Option<f64>,
    /// Component threshold splitting the output space, in (0,1).
    pub psi: Option<f64>,
    /// Privacy loss; present only after accounting runs.
    pub epsilon: Option<f64>,
}

impl PrivacyParams {
    pub fn new(k: f64, h: f64) -> Result<Self> {
        if !(k > 0.0) {
            return param_err(format!("k must be positive, got {k}"));
        }
        if !(h > 0.0 && h <= 1.0) {
            return param_err(format!("h must be in (0,1], got {h}"));
        }
        Ok(PrivacyParams {
            k,
            h,
            delta: None,
            psi: None,
            epsilon: None,
        })
    }
}

/// One draw of the Dirichlet mechanism: Gamma(k·ζ_i, 1) draws on the support,
/// normalized by their sum. Zeros off the support are preserved, and a
/// support smaller than two is passed through unchanged (the distribution is
/// degenerate there).
pub fn sample_mechanism(
    zeta: &SimplexVector,
    k: f64,
    rng: &mut impl Rng,
) -> Result<SimplexVector> {
    if !(k > 0.0) {
        return param_err(format!("k must be positive, got {k}"));
    }
    if zeta.support.len() < 2 {
        return Ok(zeta.clone());
    }
    for &i in &zeta.support {
        if zeta.entries[i] <= 0.0 {
            return param_err(format!("supported entry {i} must be positive"));
        }
    }
    let mut entries = vec![0.0; zeta.len()];
    // a zero or non-finite draw would break the normalization; retry bounded
    for attempt in 0.. {
        if attempt >= 100 {
            return numerical_err("Dirichlet draw kept collapsing to zero");
        }
        let mut sum = 0.0;
        for &i in &zeta.support {
            let g = Gamma::new(k * zeta.entries[i], 1.0)
                .map_err(|e| crate::error::Error::InvalidParameter(format!("gamma shape: {e}")))?;
            let d = g.sample(rng);
            entries[i] = d;
            sum += d;
        }
        if sum > 0.0 && sum.is_finite() {
            for &i in &zeta.support {
                entries[i] /= sum;
            }
            break;
        }
    }
    Ok(SimplexVector {
        entries,
        support: zeta.support.clone(),
    })
}

/// Applies the mechanism row-wise to a transition matrix. Degenerate rows
/// (support < 2) pass through unchanged.
pub fn sample_matrix(
    p_bar: &TransitionMatrix,
    k: f64,
    rng: &mut impl Rng,
) -> Result<TransitionMatrix> {
    let mut rows = Vec::with_capacity(p_bar.n);
    for b in 0..p_bar.n {
        let zeta = SimplexVector::from_matrix_row(p_bar, b);
        rows.push(sample_mechanism(&zeta, k, rng)?.entries);
    }
    Ok(TransitionMatrix {
        n: p_bar.n,
        rows,
        support_mask: p_bar.support_mask.clone(),
    })
}

/// Moves h/2 of mass from entry `i` to entry `j`, producing a vector at L1
/// distance exactly h that still sums to one.
pub fn adjacent_vector(zeta: &SimplexVector, h: f64, i: usize, j: usize) -> Result<SimplexVector> {
    if !(0.0..=1.0).contains(&h) {
        return param_err(format!("h must be in [0,1], got {h}"));
    }
    if i == j || !zeta.support.contains(&i) || !zeta.support.contains(&j) {
        return param_err("i and j must be distinct supported indices");
    }
    if zeta.entries[i] < h / 2.0 {
        return param_err(format!(
            "entry {i} = {} cannot give up h/2 = {}",
            zeta.entries[i],
            h / 2.0
        ));
    }
    let mut entries = zeta.entries.clone();
    entries[i] -= h / 2.0;
    entries[j] += h / 2.0;
    Ok(SimplexVector {
        entries,
        support: zeta.support.clone(),
    })
}

/// True iff the vectors differ in at most two coordinates with L1 distance
/// at most h.
pub fn is_adjacent(zeta: &SimplexVector, eta: &SimplexVector, h: f64) -> bool {
    if zeta.len() != eta.len() {
        return false;
    }
    let differing = zeta
        .entries
        .iter()
        .zip(&eta.entries)
        .filter(|(a, b)| a != b)
        .count();
    differing <= 2 && zeta.l1_distance(eta) <= h + 1e-15
}

/// Privacy loss of the Dirichlet mechanism:
/// ε = log B(kω, k(1−ω̄−ω)) − log B(k(ω+h/2), k(1−ω̄−ω−h/2))
///     + (kh/2)·log((1−(|W|−1)ψ)/ψ),
/// evaluated with log-gamma throughout.
pub fn epsilon_guarantee(
    params: &PrivacyParams,
    omega: f64,
    omega_bar: f64,
    w_size: usize,
) -> Result<f64> {
    let (k, h) = (params.k, params.h);
    let psi = params
        .psi
        .ok_or_else(|| crate::error::Error::InvalidParameter("psi is required".into()))?;
    if !(omega > 0.0 && omega < 1.0) || !(omega_bar > 0.0 && omega_bar < 1.0) {
        return param_err("omega and omega_bar must lie in (0,1)");
    }
    if !(psi > 0.0 && psi < 1.0) {
        return param_err(format!("psi must lie in (0,1), got {psi}"));
    }
    let a1 = k * omega;
    let b1 = k * (1.0 - omega_bar - omega);
    let a2 = k * (omega + h / 2.0);
    let b2 = k * (1.0 - omega_bar - omega - h / 2.0);
    if a1 <= 0.0 || b1 <= 0.0 || a2 <= 0.0 || b2 <= 0.0 {
        return param_err("parameters outside Theorem 2 domain");
    }
    let ratio = (1.0 - (w_size as f64 - 1.0) * psi) / psi;
    if ratio <= 0.0 {
        return param_err("parameters outside Theorem 2 domain");
    }
    Ok(log_beta(a1, b1) - log_beta(a2, b2) + (k * h / 2.0) * ratio.ln())
}

/// Default accounting inputs for one matrix row: ω is the smallest supported
/// entry, ω̄ the largest, |W| the support size minus one. These are
/// conventions; the guarantee formula takes them as explicit inputs.
pub fn row_accounting_defaults(zeta: &SimplexVector) -> Option<(f64, f64, usize)> {
    if zeta.support.len() < 2 {
        return None;
    }
    let supported: Vec<f64> = zeta.support.iter().map(|&i| zeta.entries[i]).collect();
    let omega = supported.iter().cloned().fold(f64::INFINITY, f64::min);
    let omega_bar = supported.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Some((omega, omega_bar, zeta.support.len() - 1))
}

/// Monte Carlo estimate of δ = 1 − P[every output component ≤ ψ].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DeltaEstimate {
    pub delta: f64,
    pub std_error: f64,
}

pub fn estimate_delta(
    zeta: &SimplexVector,
    k: f64,
    psi: f64,
    n_samples: usize,
    seed: u64,
) -> Result<DeltaEstimate> {
    if n_samples < 1000 {
        return param_err("estimate_delta requires at least 1000 samples");
    }
    if !(psi > 0.0 && psi <= 1.0) {
        return param_err(format!("psi must lie in (0,1], got {psi}"));
    }
    let maxima = mechanism_maxima(zeta, k, n_samples, seed)?;
    let breaches = maxima.iter().filter(|&&m| m > psi).count();
    let delta = breaches as f64 / n_samples as f64;
    let std_error = (delta * (1.0 - delta) / n_samples as f64).sqrt();
    Ok(DeltaEstimate { delta, std_error })
}

/// Smallest ψ whose empirical breach probability does not exceed `delta`,
/// found by bisection on the sorted Monte Carlo maxima (common random
/// numbers across candidate ψ values).
pub fn psi_for_delta(
    zeta: &SimplexVector,
    k: f64,
    delta: f64,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    if n_samples < 1000 {
        return param_err("psi_for_delta requires at least 1000 samples");
    }
    if !(0.0..=1.0).contains(&delta) {
        return param_err(format!("delta must lie in [0,1], got {delta}"));
    }
    let mut maxima = mechanism_maxima(zeta, k, n_samples, seed)?;
    maxima.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let allowed = (delta * n_samples as f64).floor() as usize;
    // the (n - allowed)-th order statistic leaves at most `allowed` breaches
    let idx = n_samples - allowed.min(n_samples);
    if idx == 0 {
        return Ok(maxima[0]);
    }
    Ok(maxima[idx - 1])
}

fn mechanism_maxima(
    zeta: &SimplexVector,
    k: f64,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let chunk = 4096usize;
    let chunks: Vec<(usize, usize)> = (0..n_samples)
        .step_by(chunk)
        .map(|lo| (lo, (lo + chunk).min(n_samples)))
        .collect();
    let results: Result<Vec<Vec<f64>>> = chunks
        .par_iter()
        .enumerate()
        .map(|(ci, &(lo, hi))| {
            let mut rng = ChaCha12Rng::seed_from_u64(split_seed(seed, STREAM_DELTA + ci as u64));
            (lo..hi)
                .map(|_| {
                    let draw = sample_mechanism(zeta, k, &mut rng)?;
                    Ok(draw
                        .entries
                        .iter()
                        .cloned()
                        .fold(f64::NEG_INFINITY, f64::max))
                })
                .collect()
        })
        .collect();
    Ok(results?.into_iter().flatten().collect())
}

/// Closed-form Dirichlet moments of the mechanism output.
#[derive(Debug, Clone)]
pub struct DirichletMoments {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
}

/// mean = ζ, Var_i = ζ_i(1−ζ_i)/(k+1), Cov_ij = −ζ_iζ_j/(k+1) for i≠j.
pub fn dirichlet_moments(zeta: &SimplexVector, k: f64) -> Result<DirichletMoments> {
    if !(k > 0.0) {
        return param_err(format!("k must be positive, got {k}"));
    }
    let n = zeta.len();
    let mut variance = vec![0.0; n];
    let mut covariance = vec![vec![0.0; n]; n];
    for &i in &zeta.support {
        let zi = zeta.entries[i];
        variance[i] = zi * (1.0 - zi) / (k + 1.0);
        covariance[i][i] = variance[i];
        for &j in &zeta.support {
            if j != i {
                covariance[i][j] = -zi * zeta.entries[j] / (k + 1.0);
            }
        }
    }
    Ok(DirichletMoments {
        mean: zeta.entries.clone(),
        variance,
        covariance,
    })
}

/// Fraction of `other` samples whose L1 distance to the mean of `reference`
/// lies within the given quantile radius of the reference cloud. Used to
/// compare mechanism output clouds for adjacent inputs.
pub fn overlap_fraction(
    reference: &[SimplexVector],
    other: &[SimplexVector],
    quantile: f64,
) -> f64 {
    if reference.is_empty() || other.is_empty() {
        return 0.0;
    }
    let n = reference[0].len();
    let mut mean = vec![0.0; n];
    for s in reference {
        for (m, &e) in mean.iter_mut().zip(&s.entries) {
            *m += e;
        }
    }
    for m in mean.iter_mut() {
        *m /= reference.len() as f64;
    }
    let dist =
        |s: &SimplexVector| -> f64 { s.entries.iter().zip(&mean).map(|(a, b)| (a - b).abs()).sum() };
    let mut ref_d: Vec<f64> = reference.iter().map(dist).collect();
    ref_d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let idx = ((quantile * ref_d.len() as f64).ceil() as usize).clamp(1, ref_d.len());
    let radius = ref_d[idx - 1];
    other.iter().filter(|s| dist(s) <= radius).count() as f64 / other.len() as f64
}

/// Accounting report for a whole matrix: per-row ε under the default
/// (ω, ω̄, |W|) conventions, the worst row as the headline guarantee, and a
/// Monte Carlo δ at the reported ψ.
#[derive(Debug, Clone, Serialize)]
pub struct PrivacyReport {
    pub k: f64,
    pub h: f64,
    pub psi: f64,
    pub delta: f64,
    pub delta_stderr: f64,
    pub epsilon: Option<f64>,
    pub per_row_epsilon: Vec<Option<f64>>,
    /// Rows the mechanism passes through untouched (support < 2); these are
    /// not privatized and are excluded from the headline numbers.
    pub degenerate_rows: Vec<usize>,
}

/// Accounting inputs: ψ given directly, or a δ target from which ψ is found
/// per row by bisection on the Monte Carlo output maxima.
#[derive(Debug, Clone, Copy)]
pub enum AccountingTarget {
    Psi(f64),
    Delta(f64),
}

pub fn matrix_privacy_report(
    p_bar: &TransitionMatrix,
    params: &PrivacyParams,
    target: AccountingTarget,
    n_samples: usize,
    seed: u64,
    overrides: Option<(f64, f64, usize)>,
) -> Result<PrivacyReport> {
    let rows: Vec<SimplexVector> = (0..p_bar.n)
        .map(|b| SimplexVector::from_matrix_row(p_bar, b))
        .collect();
    let degenerate_rows: Vec<usize> = rows
        .iter()
        .enumerate()
        .filter_map(|(b, r)| (r.support.len() < 2).then_some(b))
        .collect();
    let active: Vec<usize> = (0..p_bar.n).filter(|b| !degenerate_rows.contains(b)).collect();
    if active.is_empty() {
        return numerical_err("no row has enough support for the mechanism");
    }

    let psi = match target {
        AccountingTarget::Psi(psi) => psi,
        AccountingTarget::Delta(delta) => {
            // one ψ must hold for every row: take the worst row requirement
            let mut psi = 0.0f64;
            for &b in &active {
                let row_psi =
                    psi_for_delta(&rows[b], params.k, delta, n_samples, split_seed(seed, b as u64))?;
                psi = psi.max(row_psi);
            }
            psi.min(1.0)
        }
    };

    // worst-case δ across rows at the chosen ψ
    let mut delta = 0.0;
    let mut delta_stderr = 0.0;
    for &b in &active {
        let est = estimate_delta(&rows[b], params.k, psi, n_samples, split_seed(seed, b as u64))?;
        if est.delta > delta {
            delta = est.delta;
            delta_stderr = est.std_error;
        }
    }

    let with_psi = PrivacyParams {
        psi: Some(psi),
        ..params.clone()
    };
    let mut per_row_epsilon = vec![None; p_bar.n];
    for &b in &active {
        let inputs = overrides.or_else(|| row_accounting_defaults(&rows[b]));
        if let Some((omega, omega_bar, w_size)) = inputs {
            per_row_epsilon[b] = epsilon_guarantee(&with_psi, omega, omega_bar, w_size).ok();
        }
    }
    let epsilon = per_row_epsilon
        .iter()
        .flatten()
        .cloned()
        .fold(None, |acc: Option<f64>, e| Some(acc.map_or(e, |a| a.max(e))));

    Ok(PrivacyReport {
        k: params.k,
        h: params.h,
        psi,
        delta,
        delta_stderr,
        epsilon,
        per_row_epsilon,
        degenerate_rows,
    })
}
