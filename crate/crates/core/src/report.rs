//! Output formats: CSV tables, the JSON run manifest and binary state snapshots.
//!
//! Floats are written with Rust's shortest round-trip formatting, so identical
//! computations give byte-identical files.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Basis, GridSpec2, SpectralField2, SpinorField2, C64};
use crate::harness::ScalingReport;
use crate::solver::{DKGState, TrajectoryRow};

/// Plain comma-separated table; cells must not contain commas or newlines.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) -> Result<()> {
        if row.len() != self.header.len() {
            return Err(Error::InvalidParameter(format!(
                "row has {} cells, header has {}",
                row.len(),
                self.header.len()
            )));
        }
        if row.iter().any(|c| c.contains(',') || c.contains('\n')) {
            return Err(Error::InvalidParameter("CSV cells may not contain commas or newlines".into()));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }
}

pub const SCALING_HEADER: [&str; 10] =
    ["family", "s", "r", "L", "lhs", "rhs", "ratio", "fitted_slope", "predicted_slope", "pass"];

/// One row per `(report, L)`.
pub fn scaling_csv(reports: &[ScalingReport]) -> String {
    let mut t = CsvTable::new(&SCALING_HEADER);
    for rep in reports {
        for row in &rep.rows {
            t.push(vec![
                rep.family.to_string(),
                rep.s.to_string(),
                rep.r.to_string(),
                row.l.to_string(),
                row.lhs.to_string(),
                row.rhs.to_string(),
                row.ratio.to_string(),
                rep.fitted_slope.to_string(),
                rep.predicted_slope.to_string(),
                rep.pass.to_string(),
            ])
            .expect("fixed width");
        }
    }
    t.render()
}

pub const TRAJECTORY_HEADER: [&str; 4] = ["time", "charge", "psi_hs", "phi_hr"];

pub fn trajectory_csv(rows: &[TrajectoryRow]) -> String {
    let mut t = CsvTable::new(&TRAJECTORY_HEADER);
    for r in rows {
        t.push(vec![r.time.to_string(), r.charge.to_string(), r.psi_hs.to_string(), r.phi_hr.to_string()])
            .expect("fixed width");
    }
    t.render()
}

/// Written before any computation so that crashed runs stay diagnosable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub params: BTreeMap<String, String>,
    pub seed: u64,
    pub grid: Option<serde_json::Value>,
    pub code_version: String,
    pub started_at: String,
}

impl Manifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Format(format!("manifest: {e}")))
    }
}

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"DKGS";
pub const SNAPSHOT_VERSION: u32 = 1;

/// Binary snapshot, little-endian:
///
/// ```text
/// "DKGS" | version u32 | n u32 | n u32 | box_len f64 | time f64 | count u32 |
/// count arrays of n*n complex64 (f32 re, f32 im)
/// ```
///
/// Arrays are the frequency values of `psi_+` (two components), `psi_-` (two
/// components), `phi` and `phi_t`. Values are stored in single precision.
pub fn write_snapshot(w: &mut impl Write, state: &DKGState) -> Result<()> {
    let g = state.phi.grid();
    let n = u32::try_from(g.n()).map_err(|_| Error::Format("grid too large".into()))?;
    w.write_all(SNAPSHOT_MAGIC)?;
    w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
    w.write_all(&n.to_le_bytes())?;
    w.write_all(&n.to_le_bytes())?;
    w.write_all(&g.box_len().to_le_bytes())?;
    w.write_all(&state.time.to_le_bytes())?;
    w.write_all(&6u32.to_le_bytes())?;
    let fields = [
        &state.psi_plus.c[0],
        &state.psi_plus.c[1],
        &state.psi_minus.c[0],
        &state.psi_minus.c[1],
        &state.phi,
        &state.phi_t,
    ];
    let mut buf = Vec::with_capacity(g.len() * 8);
    for f in fields {
        buf.clear();
        for z in f.to_frequency().values() {
            buf.extend_from_slice(&(z.re as f32).to_le_bytes());
            buf.extend_from_slice(&(z.im as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(|e| Error::Format(format!("truncated snapshot: {e}")))?;
    Ok(b)
}

pub fn read_snapshot(r: &mut impl Read) -> Result<DKGState> {
    if &read_array::<4>(r)? != SNAPSHOT_MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(read_array(r)?);
    if version != SNAPSHOT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let n1 = u32::from_le_bytes(read_array(r)?) as usize;
    let n2 = u32::from_le_bytes(read_array(r)?) as usize;
    if n1 != n2 {
        return Err(Error::Format(format!("non-square grid {n1} x {n2}")));
    }
    let box_len = f64::from_le_bytes(read_array(r)?);
    let time = f64::from_le_bytes(read_array(r)?);
    let count = u32::from_le_bytes(read_array(r)?);
    if count != 6 {
        return Err(Error::Format(format!("expected 6 arrays, found {count}")));
    }
    let grid = GridSpec2::new(n1, box_len).map_err(|e| Error::Format(e.to_string()))?;
    let mut bytes = vec![0u8; grid.len() * 8];
    let mut fields = Vec::with_capacity(6);
    for _ in 0..6 {
        r.read_exact(&mut bytes).map_err(|e| Error::Format(format!("truncated snapshot: {e}")))?;
        let values = bytes
            .chunks_exact(8)
            .map(|c| {
                let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
                let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
                C64::new(re as f64, im as f64)
            })
            .collect();
        fields.push(SpectralField2::new(grid, values, Basis::Frequency)?);
    }
    let mut it = fields.into_iter();
    let mut next = || it.next().expect("six fields");
    Ok(DKGState {
        psi_plus: SpinorField2 { c: [next(), next()] },
        psi_minus: SpinorField2 { c: [next(), next()] },
        phi: next(),
        phi_t: next(),
        time,
    })
}
