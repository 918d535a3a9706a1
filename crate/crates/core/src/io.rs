//! On-disk formats.
//!
//! * CSV tables start with one metadata line,
//!   `# hyperion-csv v1 kind=<kind>`, followed by a column-name row. Numbers
//!   are written in Rust's shortest round-trip form, so identical data give
//!   identical bytes.
//! * Binary snapshots hold a fixed header followed by little-endian `f64`s:
//!
//!   | bytes | content                                   |
//!   |-------|-------------------------------------------|
//!   | 8     | magic `HYPSNAP1`                          |
//!   | 4     | kind, u32 LE (0 classical, 1 quantum)     |
//!   | 4     | columns per record, u32 LE                |
//!   | 8     | record count, u64 LE                      |
//!   | 8     | tau, f64 LE                               |
//!   | 8     | beta, f64 LE (0 for classical)            |
//!   | 8     | first index (`m_min` for quantum), i64 LE |
//!   | ...   | records, f64 LE, row major                |
//!
//!   Classical records are `(phi, jz)`; quantum records are `(re, im)` of the
//!   amplitude at consecutive `m` starting from `m_min`.

use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::classical::EnsembleSnapshot;
use crate::error::{Error, Result};
use crate::quantum::QuantumState;

pub const CSV_VERSION: u32 = 1;
const CSV_PREFIX: &str = "# hyperion-csv v";
const SNAPSHOT_MAGIC: &[u8; 8] = b"HYPSNAP1";
const SNAPSHOT_HEADER: usize = 48;

/// A numeric table with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub kind: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn new(kind: &str, columns: &[&str]) -> Self {
        CsvTable {
            kind: kind.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let i = self
            .columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Integrity {
                file: self.kind.clone(),
                reason: format!("missing column {name}"),
            })?;
        Ok(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = String::new();
        out.push_str(&format!("{CSV_PREFIX}{CSV_VERSION} kind={}\n", self.kind));
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out.into_bytes()
    }

    pub fn parse(text: &str, file: &str) -> Result<Self> {
        let bad = |reason: String| Error::Integrity {
            file: file.to_string(),
            reason,
        };
        let mut lines = text.lines();
        let meta = lines.next().ok_or_else(|| bad("empty file".into()))?;
        let rest = meta
            .strip_prefix(CSV_PREFIX)
            .ok_or_else(|| bad("missing version header".into()))?;
        let (version, kind) = rest
            .split_once(" kind=")
            .ok_or_else(|| bad("malformed version header".into()))?;
        if version.parse::<u32>().ok() != Some(CSV_VERSION) {
            return Err(bad(format!("unsupported version {version}")));
        }
        let columns: Vec<String> = lines
            .next()
            .ok_or_else(|| bad("missing column row".into()))?
            .split(',')
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let row = line
                .split(',')
                .map(|c| c.parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| bad(format!("row {}: {e}", i + 1)))?;
            if row.len() != columns.len() {
                return Err(bad(format!("row {} has {} cells", i + 1, row.len())));
            }
            rows.push(row);
        }
        Ok(CsvTable {
            kind: kind.to_string(),
            columns,
            rows,
        })
    }

    pub fn write(&self, path: &Path) -> Result<String> {
        write_bytes(path, &self.to_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }
}

/// Writes `bytes` and returns their SHA-256 in hex.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<String> {
    let mut f = fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(sha256_hex(bytes))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

/// Trajectory samples as rows `(trajectory_id, tau, phi, jz)`.
pub fn classical_snapshot_table(snapshots: &[EnsembleSnapshot]) -> CsvTable {
    let mut t = CsvTable::new("classical_snapshot", &["trajectory_id", "tau", "phi", "jz"]);
    for s in snapshots {
        for (i, (phi, jz)) in s.phi.iter().zip(&s.jz).enumerate() {
            t.push(vec![i as f64, s.tau, *phi, *jz]);
        }
    }
    t
}

/// Amplitudes as rows `(tau, m, beta_m, re_c, im_c, prob)`.
pub fn quantum_snapshot_table(states: &[QuantumState]) -> CsvTable {
    let mut t = CsvTable::new("quantum_snapshot", &["tau", "m", "beta_m", "re_c", "im_c", "prob"]);
    for s in states {
        for (i, c) in s.c.iter().enumerate() {
            let m = s.m_of(i);
            t.push(vec![s.tau, m as f64, s.beta * m as f64, c.re, c.im, c.norm_sqr()]);
        }
    }
    t
}

fn snapshot_header(kind: u32, cols: u32, count: u64, tau: f64, beta: f64, first: i64) -> Vec<u8> {
    let mut out = Vec::with_capacity(SNAPSHOT_HEADER);
    out.extend_from_slice(SNAPSHOT_MAGIC);
    out.extend_from_slice(&kind.to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&tau.to_le_bytes());
    out.extend_from_slice(&beta.to_le_bytes());
    out.extend_from_slice(&first.to_le_bytes());
    out
}

pub fn encode_classical_snapshot(s: &EnsembleSnapshot) -> Vec<u8> {
    let mut out = snapshot_header(0, 2, s.phi.len() as u64, s.tau, 0.0, 0);
    for (phi, jz) in s.phi.iter().zip(&s.jz) {
        out.extend_from_slice(&phi.to_le_bytes());
        out.extend_from_slice(&jz.to_le_bytes());
    }
    out
}

pub fn encode_quantum_snapshot(s: &QuantumState) -> Vec<u8> {
    let mut out = snapshot_header(1, 2, s.c.len() as u64, s.tau, s.beta, s.m_of(0));
    for c in &s.c {
        out.extend_from_slice(&c.re.to_le_bytes());
        out.extend_from_slice(&c.im.to_le_bytes());
    }
    out
}

/// A decoded binary snapshot.
#[derive(Debug, Clone, PartialEq)]
pub enum Snapshot {
    Classical(EnsembleSnapshot),
    Quantum { tau: f64, beta: f64, m_min: i64, amplitudes: Vec<(f64, f64)> },
}

pub fn decode_snapshot(bytes: &[u8], file: &str) -> Result<Snapshot> {
    let bad = |reason: &str| Error::Integrity {
        file: file.to_string(),
        reason: reason.to_string(),
    };
    if bytes.len() < SNAPSHOT_HEADER || &bytes[..8] != SNAPSHOT_MAGIC {
        return Err(bad("not a snapshot file"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let (kind, cols, count) = (u32_at(8), u32_at(12) as usize, u64_at(16) as usize);
    let (tau, beta, first) = (f64_at(24), f64_at(32), u64_at(40) as i64);
    if cols != 2 || bytes.len() != SNAPSHOT_HEADER + 16 * count {
        return Err(bad("size does not match header"));
    }
    let pairs: Vec<(f64, f64)> = (0..count)
        .map(|i| {
            let o = SNAPSHOT_HEADER + 16 * i;
            (f64_at(o), f64_at(o + 8))
        })
        .collect();
    match kind {
        0 => Ok(Snapshot::Classical(EnsembleSnapshot {
            tau,
            phi: pairs.iter().map(|p| p.0).collect(),
            jz: pairs.iter().map(|p| p.1).collect(),
        })),
        1 => Ok(Snapshot::Quantum {
            tau,
            beta,
            m_min: first,
            amplitudes: pairs,
        }),
        _ => Err(bad("unknown snapshot kind")),
    }
}
