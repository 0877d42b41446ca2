//! Macroscopic history records and their CSV form.
//!
//! Columns: `time_s,cycle,strain_axial,stress_axial_MPa,phi_max,crack_length_um,damaged_fraction`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::SimError;

/// Header row of the history CSV.
pub const HISTORY_HEADER: &str = "time_s,cycle,strain_axial,stress_axial_MPa,phi_max,crack_length_um,damaged_fraction";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    #[serde(rename = "time_s")]
    pub time: f64,
    pub cycle: usize,
    /// Prescribed axial strain.
    pub strain_axial: f64,
    /// Mean axial first Piola-Kirchhoff stress.
    #[serde(rename = "stress_axial_MPa")]
    pub stress_axial: f64,
    pub phi_max: f64,
    #[serde(rename = "crack_length_um")]
    pub crack_length: f64,
    /// Fraction of voxels at or above the crack threshold.
    pub damaged_fraction: f64,
}

/// Streams records to CSV, header first.
pub struct HistoryWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> HistoryWriter<W> {
    pub fn new(w: W) -> Self {
        Self { inner: csv::Writer::from_writer(w) }
    }

    pub fn write(&mut self, record: &HistoryRecord) -> Result<(), SimError> {
        self.inner.serialize(record)?;
        self.inner.flush()?;
        Ok(())
    }
}

pub fn write_history(w: impl Write, records: &[HistoryRecord]) -> Result<(), SimError> {
    let mut out = csv::Writer::from_writer(w);
    if records.is_empty() {
        out.write_record(HISTORY_HEADER.split(','))?;
    }
    for r in records {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_history(r: impl Read) -> Result<Vec<HistoryRecord>, SimError> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != HISTORY_HEADER {
        return Err(SimError::Config(format!("unexpected history header `{}`", header.join(","))));
    }
    rdr.deserialize().map(|r| r.map_err(SimError::from)).collect()
}
