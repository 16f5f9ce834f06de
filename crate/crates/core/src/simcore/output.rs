//! Output files for a bootstrapping run: the summary file (one
//! `key = value;` record per link endpoint) and the `_dm` file holding the
//! reconstructed density matrix as separate REAL and IMAGINARY blocks.
//! Both formats ship with parsers, and writer/parser round-trips are
//! exact because floats print with shortest-round-trip formatting.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::qstate::DensityMatrix;
use crate::tomography::ErrorDecomposition;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("summary line {line} is malformed: {reason}")]
    MalformedSummary { line: usize, reason: String },
    #[error("density file is malformed: {0}")]
    MalformedDensity(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Everything one trial reports. The summary file shows the link from
/// each endpoint's perspective; scalar fields are shared while the
/// density matrix and channel distance are per-endpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutput {
    pub node_names: [String; 2],
    /// Channel cost, reserved for route selection; not yet derived from
    /// anything, always written as 0.
    pub cost: f64,
    /// Each endpoint's own fibre span to the analyzer, in km.
    pub distance_km: [f64; 2],
    pub fidelity: f64,
    pub bellpair_per_sec: f64,
    pub tomography_time_s: f64,
    pub tomography_measurements: u64,
    pub actual_measurements: u64,
    pub god_clean_pair_total: u64,
    pub god_x_pair_total: u64,
    pub god_y_pair_total: u64,
    pub god_z_pair_total: u64,
    pub decomposition: ErrorDecomposition,
}

/// One parsed summary record.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRecord {
    pub left: String,
    pub right: String,
    pub cost: f64,
    pub distance_km: f64,
    pub fidelity: f64,
    pub bellpair_per_sec: f64,
    pub tomography_time_s: f64,
    pub tomography_measurements: u64,
    pub actual_measurements: u64,
    pub god_clean_pair_total: u64,
    pub god_x_pair_total: u64,
    pub god_y_pair_total: u64,
    pub god_z_pair_total: u64,
    pub f: f64,
    pub x: f64,
    pub z: f64,
    pub y: f64,
}

fn summary_line(out: &TrialOutput, perspective: usize) -> String {
    let left = &out.node_names[perspective];
    let right = &out.node_names[1 - perspective];
    format!(
        "{left}<-->QuantumChannel{{cost = {}; distance = {}km; fidelity = {}; \
         bellpair_per_sec = {}; tomography_time = {}; tomography_measurements = {}; \
         actualmeas = {}; GOD_clean_pair_total = {}; GOD_X_pair_total = {}; \
         GOD_Y_pair_total = {}; GOD_Z_pair_total = {};}}<-->{right}; F = {}; X = {}; Z = {}; Y = {}",
        out.cost,
        out.distance_km[perspective],
        out.fidelity,
        out.bellpair_per_sec,
        out.tomography_time_s,
        out.tomography_measurements,
        out.actual_measurements,
        out.god_clean_pair_total,
        out.god_x_pair_total,
        out.god_y_pair_total,
        out.god_z_pair_total,
        out.decomposition.f,
        out.decomposition.x,
        out.decomposition.z,
        out.decomposition.y,
    )
}

pub fn write_summary(out: &TrialOutput) -> String {
    format!("{}\n{}\n", summary_line(out, 0), summary_line(out, 1))
}

pub fn parse_summary_file(text: &str) -> Result<Vec<SummaryRecord>, OutputError> {
    let mut records = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        records.push(parse_summary_line(line, idx + 1)?);
    }
    Ok(records)
}

fn parse_summary_line(line: &str, line_no: usize) -> Result<SummaryRecord, OutputError> {
    let bad = |reason: &str| OutputError::MalformedSummary {
        line: line_no,
        reason: reason.to_string(),
    };
    let (left, rest) = line.split_once("<-->").ok_or_else(|| bad("missing left node"))?;
    let rest = rest
        .trim_start()
        .strip_prefix("QuantumChannel")
        .ok_or_else(|| bad("missing QuantumChannel"))?;
    let open = rest.find('{').ok_or_else(|| bad("missing '{'"))?;
    let close = rest.find('}').ok_or_else(|| bad("missing '}'"))?;
    let body = &rest[open + 1..close];
    let tail = rest[close + 1..]
        .trim_start()
        .strip_prefix("<-->")
        .ok_or_else(|| bad("missing right node"))?;
    let (right, scalars) = tail.split_once(';').ok_or_else(|| bad("missing ';' after node"))?;

    let mut fields = std::collections::HashMap::new();
    for part in body.split(';').chain(scalars.split(';')) {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (k, v) = part.split_once('=').ok_or_else(|| bad("field missing '='"))?;
        fields.insert(k.trim().to_string(), v.trim().to_string());
    }
    let float = |k: &str| -> Result<f64, OutputError> {
        let v = fields.get(k).ok_or_else(|| bad(&format!("missing {k}")))?;
        let v = v.strip_suffix("km").unwrap_or(v).trim();
        v.parse().map_err(|_| bad(&format!("bad number in {k}")))
    };
    let int = |k: &str| -> Result<u64, OutputError> { Ok(float(k)?.round() as u64) };

    Ok(SummaryRecord {
        left: left.trim().to_string(),
        right: right.trim().to_string(),
        cost: float("cost")?,
        distance_km: float("distance")?,
        fidelity: float("fidelity")?,
        bellpair_per_sec: float("bellpair_per_sec")?,
        tomography_time_s: float("tomography_time")?,
        tomography_measurements: int("tomography_measurements")?,
        actual_measurements: int("actualmeas")?,
        god_clean_pair_total: int("GOD_clean_pair_total")?,
        god_x_pair_total: int("GOD_X_pair_total")?,
        god_y_pair_total: int("GOD_Y_pair_total")?,
        god_z_pair_total: int("GOD_Z_pair_total")?,
        f: float("F")?,
        x: float("X")?,
        z: float("Z")?,
        y: float("Y")?,
    })
}

/// Writes one density-matrix block: link header, REAL rows, IMAGINARY
/// rows.
fn density_block(left: &str, right: &str, rho: &DensityMatrix) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{left}<--->{right}");
    out.push_str("REAL\n");
    for row in &rho.0 {
        let cells: Vec<String> = row.iter().map(|c| format!("{}", c.re)).collect();
        let _ = writeln!(out, "{}", cells.join("  "));
    }
    out.push_str("IMAGINARY\n");
    for row in &rho.0 {
        let cells: Vec<String> = row.iter().map(|c| format!("{}", c.im)).collect();
        let _ = writeln!(out, "{}", cells.join("  "));
    }
    out
}

/// The full `_dm` file: the link from both endpoints' perspectives (the
/// partner sees the same matrix with the qubits reordered).
pub fn write_density(out: &TrialOutput, rho_node0: &DensityMatrix) -> String {
    let mut text = density_block(&out.node_names[0], &out.node_names[1], rho_node0);
    text.push_str(&density_block(
        &out.node_names[1],
        &out.node_names[0],
        &rho_node0.swapped(),
    ));
    text
}

pub fn parse_density_file(
    text: &str,
) -> Result<Vec<(String, String, DensityMatrix)>, OutputError> {
    let bad = |reason: &str| OutputError::MalformedDensity(reason.to_string());
    let mut blocks = Vec::new();
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty()).peekable();
    while let Some(header) = lines.next() {
        let (left, right) = header
            .split_once("<--->")
            .ok_or_else(|| bad("expected link header"))?;
        if lines.next() != Some("REAL") {
            return Err(bad("expected REAL"));
        }
        let mut rho = DensityMatrix::zero();
        for i in 0..4 {
            let row = lines.next().ok_or_else(|| bad("missing REAL row"))?;
            for (j, cell) in row.split_whitespace().enumerate() {
                if j >= 4 {
                    return Err(bad("too many REAL columns"));
                }
                rho.0[i][j].re = cell.parse().map_err(|_| bad("bad REAL number"))?;
            }
        }
        if lines.next() != Some("IMAGINARY") {
            return Err(bad("expected IMAGINARY"));
        }
        for i in 0..4 {
            let row = lines.next().ok_or_else(|| bad("missing IMAGINARY row"))?;
            for (j, cell) in row.split_whitespace().enumerate() {
                if j >= 4 {
                    return Err(bad("too many IMAGINARY columns"));
                }
                rho.0[i][j].im = cell.parse().map_err(|_| bad("bad IMAGINARY number"))?;
            }
        }
        blocks.push((left.trim().to_string(), right.trim().to_string(), rho));
    }
    Ok(blocks)
}

/// Writes `<name>` and `<name>_dm` next to each other.
pub fn write_outputs(
    out: &TrialOutput,
    rho_node0: &DensityMatrix,
    path: &Path,
) -> Result<(), OutputError> {
    std::fs::write(path, write_summary(out))?;
    let mut dm_path = path.as_os_str().to_owned();
    dm_path.push("_dm");
    std::fs::write(Path::new(&dm_path), write_density(out, rho_node0))?;
    Ok(())
}

/// Per-trial CSV for plotting: one row per trial.
pub const CSV_HEADER: &str = "trial,seed,rounds,method,architecture,total_km,num_measure,\
fidelity,fidelity_actual,bellpair_per_sec,tomography_time,god_clean,god_x,god_y,god_z,god_other,\
decomp_f,decomp_x,decomp_z,decomp_y,timed_out";

#[derive(Debug, Clone)]
pub struct CsvRow {
    pub trial: u32,
    pub seed: u64,
    pub rounds: u32,
    pub method: String,
    pub architecture: String,
    pub total_km: f64,
    pub num_measure: u64,
    pub fidelity: f64,
    pub fidelity_actual: f64,
    pub bellpair_per_sec: f64,
    pub tomography_time_s: f64,
    pub god_clean: u64,
    pub god_x: u64,
    pub god_y: u64,
    pub god_z: u64,
    pub god_other: u64,
    pub decomposition: ErrorDecomposition,
    pub timed_out: bool,
}

pub fn write_csv(rows: &[CsvRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.trial,
            r.seed,
            r.rounds,
            r.method,
            r.architecture,
            r.total_km,
            r.num_measure,
            r.fidelity,
            r.fidelity_actual,
            r.bellpair_per_sec,
            r.tomography_time_s,
            r.god_clean,
            r.god_x,
            r.god_y,
            r.god_z,
            r.god_other,
            r.decomposition.f,
            r.decomposition.x,
            r.decomposition.z,
            r.decomposition.y,
            r.timed_out,
        );
    }
    out
}
