//! Serialization of the pipeline artifacts: matrix and policy JSON, state
//! space and trajectory CSVs, cost and privacy reports, plot data.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::dr::CapacityMetrics;
use crate::ensemble::{StateSpace, TransitionMatrix};
use crate::error::{Error, Result};
use crate::lsmdp::{Desirability, Policy};
use crate::private_policy::CostReport;

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes)
        .map_err(|e| Error::Data(format!("cannot write {}: {e}", path.display())))
}

fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| Error::Data(format!("serialization failed: {e}")))?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Pretty-prints any serializable value to a file with a trailing newline.
pub fn write_atomic_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &to_json_bytes(value)?)
}

pub fn write_matrix_json(path: &Path, m: &TransitionMatrix) -> Result<()> {
    write_atomic(path, &to_json_bytes(m)?)
}

pub fn read_matrix_json(path: &Path) -> Result<TransitionMatrix> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    let m: TransitionMatrix =
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    m.validate()?;
    Ok(m)
}

pub fn write_state_space_csv(path: &Path, space: &StateSpace) -> Result<()> {
    let mut out = String::from("state,lower_mw,upper_mw,representative_mw\n");
    for i in 0..space.n() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            i,
            space.bin_edges[i],
            space.bin_edges[i + 1],
            space.representative_power[i]
        ));
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_state_space_csv(path: &Path) -> Result<StateSpace> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    let mut rep = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Data(format!("{}: malformed row {i}", path.display())));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Data(format!("{}: bad number in row {i}", path.display())))
        };
        lower.push(parse(fields[1])?);
        upper.push(parse(fields[2])?);
        rep.push(parse(fields[3])?);
    }
    if rep.is_empty() {
        return Err(Error::Data(format!("{}: no states", path.display())));
    }
    let mut bin_edges = lower;
    bin_edges.push(*upper.last().unwrap());
    Ok(StateSpace {
        bin_edges,
        representative_power: rep,
    })
}

/// Policy file schema: `{gamma, T, matrices}` with row-major n×n matrices.
#[derive(Debug, Serialize, Deserialize)]
pub struct PolicyFile {
    pub gamma: f64,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub matrices: Vec<Vec<Vec<f64>>>,
}

impl PolicyFile {
    pub fn from_policy(policy: &Policy) -> PolicyFile {
        PolicyFile {
            gamma: policy.gamma,
            horizon: policy.horizon(),
            matrices: policy.matrices.iter().map(|m| m.rows.clone()).collect(),
        }
    }
}

pub fn write_policy_json(path: &Path, policy: &Policy) -> Result<()> {
    write_atomic(path, &to_json_bytes(&PolicyFile::from_policy(policy))?)
}

pub fn read_policy_json(path: &Path) -> Result<PolicyFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

pub fn write_desirability_csv(path: &Path, z: &Desirability) -> Result<()> {
    let mut out = String::from("t,state,log_z\n");
    for (t, row) in z.log_z.iter().enumerate() {
        for (b, &v) in row.iter().enumerate() {
            out.push_str(&format!("{t},{b},{v}\n"));
        }
    }
    write_atomic(path, out.as_bytes())
}

/// Cost report file schema: `{method, k, per_state, total}` with one entry
/// per (transition step, source state).
#[derive(Debug, Serialize, Deserialize)]
pub struct CostReportFile {
    pub method: String,
    pub k: f64,
    pub per_state: Vec<CostEntry>,
    pub total: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc_total: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc_stderr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CostEntry {
    pub t: usize,
    pub beta: usize,
    pub delta_c: f64,
}

impl CostReportFile {
    pub fn from_report(report: &CostReport, k: f64) -> CostReportFile {
        let per_state = report
            .delta_c
            .iter()
            .enumerate()
            .flat_map(|(t, row)| {
                row.iter()
                    .enumerate()
                    .map(move |(beta, &delta_c)| CostEntry { t, beta, delta_c })
            })
            .collect();
        CostReportFile {
            method: report.method.clone(),
            k,
            per_state,
            total: report.total,
            mc_total: report.mc_total,
            mc_stderr: report.mc_stderr,
            gap: report.gap,
        }
    }
}

pub fn write_cost_report(path: &Path, report: &CostReport, k: f64) -> Result<()> {
    write_atomic(path, &to_json_bytes(&CostReportFile::from_report(report, k))?)
}

pub fn write_trajectory_csv(path: &Path, power: &[f64]) -> Result<()> {
    let mut out = String::from("t,expected_power_mw\n");
    for (t, &p) in power.iter().enumerate() {
        out.push_str(&format!("{t},{p}\n"));
    }
    write_atomic(path, out.as_bytes())
}

/// Capacity metrics for a set of named scenarios.
#[derive(Debug, Serialize)]
pub struct CapacityReport {
    pub scenarios: BTreeMap<String, CapacityMetrics>,
}

pub fn write_capacity_report(path: &Path, report: &CapacityReport) -> Result<()> {
    write_atomic(path, &to_json_bytes(report)?)
}

/// Sample-set summary for the average-value route.
#[derive(Debug, Serialize)]
pub struct SamplesSummary {
    pub k: f64,
    #[serde(rename = "N")]
    pub n_samples: usize,
    pub seed: u64,
    pub redraws: usize,
    pub mean_policy: Vec<Vec<Vec<f64>>>,
    pub analytical_policy: Vec<Vec<Vec<f64>>>,
    pub row_sum_diagnostics: Vec<Vec<f64>>,
    /// Largest row-wise L1 distance between the two policies.
    pub l1_gap: f64,
}

pub fn write_samples_summary(path: &Path, summary: &SamplesSummary) -> Result<()> {
    write_atomic(path, &to_json_bytes(summary)?)
}

/// Bundle manifest: every artifact a command writes, relative to `out_dir`.
#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub method: Option<String>,
    pub artifacts: Vec<String>,
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    write_atomic(path, &to_json_bytes(manifest)?)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// Writer for the Fig-style plot CSVs; keeps formatting in one place.
pub struct CsvWriter {
    out: String,
}

impl CsvWriter {
    pub fn new(header: &str) -> CsvWriter {
        CsvWriter {
            out: format!("{header}\n"),
        }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.out.push_str(&fields.join(","));
        self.out.push('\n');
    }

    pub fn finish(self, path: &Path) -> Result<()> {
        write_atomic(path, self.out.as_bytes())
    }
}

pub fn file_sha_like_digest(path: &Path) -> Result<u64> {
    // cheap content fingerprint for determinism checks in tests
    let bytes =
        std::fs::read(path).map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    Ok(h)
}

pub fn print_summary(mut w: impl Write, lines: &[String]) {
    for line in lines {
        let _ = writeln!(w, "{line}");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_space_csv_round_trip() {
        let space = StateSpace {
            bin_edges: vec![0.0, 1.5, 3.0],
            representative_power: vec![0.75, 2.25],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("space.csv");
        write_state_space_csv(&path, &space).unwrap();
        let back = read_state_space_csv(&path).unwrap();
        assert_eq!(back.bin_edges, space.bin_edges);
        assert_eq!(back.representative_power, space.representative_power);
    }

    #[test]
    fn policy_file_schema_fields() {
        let p = TransitionMatrix::from_rows(vec![vec![0.5, 0.5], vec![0.2, 0.8]]).unwrap();
        let policy = Policy {
            gamma: 15.0,
            matrices: vec![p.clone(), p],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("policy.json");
        write_policy_json(&path, &policy).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["gamma"], 15.0);
        assert_eq!(v["T"], 3);
        assert_eq!(v["matrices"].as_array().unwrap().len(), 2);
        let back = read_policy_json(&path).unwrap();
        assert_eq!(back.horizon, 3);
    }

    #[test]
    fn matrix_json_schema_fields() {
        let m = TransitionMatrix::from_rows(vec![vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("matrix.json");
        write_matrix_json(&path, &m).unwrap();
        let back = read_matrix_json(&path).unwrap();
        assert_eq!(back, m);
    }
}
