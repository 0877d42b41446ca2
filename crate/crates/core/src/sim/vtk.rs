//! Voxel snapshots in the legacy VTK structured-points format.
//!
//! Layout (ASCII header lines end in `\n`; binary values are big-endian):
//!
//! ```text
//! # vtk DataFile Version 3.0
//! <title>
//! BINARY
//! DATASET STRUCTURED_POINTS
//! DIMENSIONS <nx> <ny> <nz>
//! ORIGIN <h/2> <h/2> <h/2>
//! SPACING <h> <h> <h>
//! POINT_DATA <nx*ny*nz>
//! ```
//!
//! followed, for each array, by
//!
//! ```text
//! SCALARS <name> double 1      (or `int` for integer arrays)
//! LOOKUP_TABLE default
//! <N f64 or i32 values, x fastest>\n
//! ```
//!
//! Points sit at voxel centres, so each array holds one value per voxel.
//! Lengths are in micrometres and numbers in the header use the shortest
//! representation that parses back to the same `f64`.

use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::grid::VoxelGrid;

use super::SimError;

#[derive(Debug, Clone, PartialEq)]
pub enum FieldData {
    Float(Vec<f64>),
    Int(Vec<i32>),
}

impl FieldData {
    pub fn len(&self) -> usize {
        match self {
            FieldData::Float(v) => v.len(),
            FieldData::Int(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Named per-voxel arrays on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub title: String,
    pub dims: [usize; 3],
    pub spacing: f64,
    pub arrays: Vec<(String, FieldData)>,
}

fn format_error(msg: impl Into<String>) -> SimError {
    SimError::Snapshot(msg.into())
}

impl Snapshot {
    pub fn new(grid: &VoxelGrid, title: &str) -> Self {
        let title = title.replace(['\n', '\r'], " ");
        Self { title, dims: grid.dims(), spacing: grid.voxel_length(), arrays: Vec::new() }
    }

    fn points(&self) -> usize {
        self.dims.iter().product()
    }

    fn push(&mut self, name: &str, data: FieldData) -> Result<(), SimError> {
        if data.len() != self.points() {
            return Err(format_error(format!("array `{name}` has {} values for {} voxels", data.len(), self.points())));
        }
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(format_error(format!("array name `{name}` must be non-empty without whitespace")));
        }
        self.arrays.push((name.to_string(), data));
        Ok(())
    }

    pub fn add_float(&mut self, name: &str, values: Vec<f64>) -> Result<(), SimError> {
        self.push(name, FieldData::Float(values))
    }

    pub fn add_int(&mut self, name: &str, values: Vec<i32>) -> Result<(), SimError> {
        self.push(name, FieldData::Int(values))
    }

    pub fn get(&self, name: &str) -> Option<&FieldData> {
        self.arrays.iter().find(|(n, _)| n == name).map(|(_, d)| d)
    }

    pub fn write_to(&self, w: impl Write) -> Result<(), SimError> {
        let mut w = BufWriter::new(w);
        let [nx, ny, nz] = self.dims;
        let (h, o) = (self.spacing, 0.5 * self.spacing);
        write!(
            w,
            "# vtk DataFile Version 3.0\n{}\nBINARY\nDATASET STRUCTURED_POINTS\nDIMENSIONS {nx} {ny} {nz}\nORIGIN {o} {o} {o}\nSPACING {h} {h} {h}\nPOINT_DATA {}\n",
            self.title,
            self.points()
        )?;
        for (name, data) in &self.arrays {
            match data {
                FieldData::Float(v) => {
                    write!(w, "SCALARS {name} double 1\nLOOKUP_TABLE default\n")?;
                    for x in v {
                        w.write_all(&x.to_be_bytes())?;
                    }
                }
                FieldData::Int(v) => {
                    write!(w, "SCALARS {name} int 1\nLOOKUP_TABLE default\n")?;
                    for x in v {
                        w.write_all(&x.to_be_bytes())?;
                    }
                }
            }
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, SimError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let mut cur = Cursor { bytes: &bytes, pos: 0 };
        if cur.line()? != "# vtk DataFile Version 3.0" {
            return Err(format_error("not a legacy VTK file"));
        }
        let title = cur.line()?.to_string();
        cur.expect("BINARY")?;
        cur.expect("DATASET STRUCTURED_POINTS")?;
        let dims = parse_triple::<usize>(cur.line()?, "DIMENSIONS")?;
        let origin = parse_triple::<f64>(cur.line()?, "ORIGIN")?;
        let spacing = parse_triple::<f64>(cur.line()?, "SPACING")?;
        if spacing[0] != spacing[1] || spacing[0] != spacing[2] || origin.iter().any(|&o| o != 0.5 * spacing[0]) {
            return Err(format_error("only cubic voxels with centred points are supported"));
        }
        let n: usize = keyword_value(cur.line()?, "POINT_DATA")?;
        if n != dims.iter().product::<usize>() {
            return Err(format_error("POINT_DATA does not match DIMENSIONS"));
        }
        let mut snap = Snapshot { title, dims, spacing: spacing[0], arrays: Vec::new() };
        while cur.pos < bytes.len() {
            let header = cur.line()?;
            if header.is_empty() {
                continue;
            }
            let parts: Vec<&str> = header.split_whitespace().collect();
            if parts.len() != 4 || parts[0] != "SCALARS" || parts[3] != "1" {
                return Err(format_error(format!("unsupported array header `{header}`")));
            }
            let (name, kind) = (parts[1].to_string(), parts[2].to_string());
            cur.expect("LOOKUP_TABLE default")?;
            let data = match kind.as_str() {
                "double" => FieldData::Float(
                    cur.take(8 * n)?.chunks_exact(8).map(|c| f64::from_be_bytes(c.try_into().unwrap())).collect(),
                ),
                "int" => FieldData::Int(
                    cur.take(4 * n)?.chunks_exact(4).map(|c| i32::from_be_bytes(c.try_into().unwrap())).collect(),
                ),
                other => return Err(format_error(format!("unsupported data type `{other}`"))),
            };
            snap.arrays.push((name, data));
        }
        Ok(snap)
    }

    pub fn save(&self, path: &Path) -> Result<(), SimError> {
        let file = std::fs::File::create(path)
            .map_err(|e| SimError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        self.write_to(file)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        Self::read_from(std::fs::File::open(path)?)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn line(&mut self) -> Result<&'a str, SimError> {
        let rest = &self.bytes[self.pos..];
        let end = rest.iter().position(|&b| b == b'\n').ok_or_else(|| format_error("truncated header"))?;
        self.pos += end + 1;
        std::str::from_utf8(&rest[..end]).map_err(|_| format_error("header is not UTF-8"))
    }

    fn expect(&mut self, want: &str) -> Result<(), SimError> {
        let got = self.line()?;
        if got != want {
            return Err(format_error(format!("expected `{want}`, found `{got}`")));
        }
        Ok(())
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], SimError> {
        if self.pos + n > self.bytes.len() {
            return Err(format_error("truncated array data"));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }
}

fn parse_triple<T: std::str::FromStr>(line: &str, keyword: &str) -> Result<[T; 3], SimError> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(keyword) {
        return Err(format_error(format!("expected {keyword}, found `{line}`")));
    }
    let vals: Vec<T> = parts.map(|p| p.parse().map_err(|_| format_error(format!("bad {keyword} line")))).collect::<Result<_, _>>()?;
    vals.try_into().map_err(|_| format_error(format!("{keyword} needs three values")))
}

fn keyword_value<T: std::str::FromStr>(line: &str, keyword: &str) -> Result<T, SimError> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(keyword) {
        return Err(format_error(format!("expected {keyword}, found `{line}`")));
    }
    parts
        .next()
        .and_then(|p| p.parse().ok())
        .ok_or_else(|| format_error(format!("bad {keyword} line")))
}
