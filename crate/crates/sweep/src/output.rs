//! Result files: `#`-headed columnar text, binary state snapshots and
//! per-trajectory record files. Every file is written to a temporary name
//! and renamed into place, so a reader never sees a partial file.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use dtc_sync::num_complex::Complex64 as C64;
use dtc_sync::spin::SpinMagnitude;
use dtc_sync::trajectory::{PureState, Snapshot, TrajectoryRecord};

use crate::error::{Result, SweepError};

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(SweepError::io(dir))?;
    }
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.partial"));
    let mut f = fs::File::create(&tmp).map_err(SweepError::io(&tmp))?;
    f.write_all(bytes).map_err(SweepError::io(&tmp))?;
    f.sync_all().map_err(SweepError::io(&tmp))?;
    drop(f);
    fs::rename(&tmp, path).map_err(SweepError::io(path))
}

/// A column with its unit.
#[derive(Clone, Debug)]
pub struct Column {
    pub name: &'static str,
    pub unit: &'static str,
}

pub const fn col(name: &'static str, unit: &'static str) -> Column {
    Column { name, unit }
}

/// Plain-text table: `# key: value` metadata lines, a `# columns:` line,
/// then tab-separated rows. Floats use the shortest round-trip form.
#[derive(Clone, Debug)]
pub struct Table {
    meta: Vec<(String, String)>,
    columns: Vec<Column>,
    rows: Vec<Vec<String>>,
}

/// A cell value.
pub enum Cell {
    F(f64),
    I(i64),
    U(u64),
    B(bool),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::U(v as u64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::U(v)
    }
}

impl From<i8> for Cell {
    fn from(v: i8) -> Self {
        Cell::I(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::B(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        Cell::F(v.unwrap_or(f64::NAN))
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(v) if v.is_nan() => "nan".into(),
            Cell::F(v) => format!("{v:e}"),
            Cell::I(v) => v.to_string(),
            Cell::U(v) => v.to_string(),
            Cell::B(v) => (*v as u8).to_string(),
        }
    }
}

impl Table {
    pub fn new(title: &str, columns: Vec<Column>) -> Self {
        Self { meta: vec![("table".into(), title.into())], columns, rows: Vec::new() }
    }

    pub fn meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.into(), value.to_string()));
        self
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width differs from header");
        self.rows.push(row.iter().map(Cell::render).collect());
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.meta {
            s.push_str(&format!("# {k}: {v}\n"));
        }
        let header: Vec<String> = self.columns.iter().map(|c| format!("{}[{}]", c.name, c.unit)).collect();
        s.push_str(&format!("# columns: {}\n", header.join("\t")));
        for r in &self.rows {
            s.push_str(&r.join("\t"));
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.render().as_bytes())
    }
}

/// Parses a table written by [`Table::write`] into `(column names, rows)`.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path).map_err(SweepError::io(path))?;
    let mut names = Vec::new();
    let mut rows = Vec::new();
    for line in text.lines() {
        if let Some(h) = line.strip_prefix("# columns: ") {
            names = h.split('\t').map(|c| c.split('[').next().unwrap_or(c).to_string()).collect();
        } else if !line.starts_with('#') && !line.is_empty() {
            let row: std::result::Result<Vec<f64>, _> = line.split('\t').map(str::parse::<f64>).collect();
            rows.push(row.map_err(|e| SweepError::Corrupt { path: path.into(), reason: e.to_string() })?);
        }
    }
    Ok((names, rows))
}

struct Writer(Vec<u8>);

impl Writer {
    fn f(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn fs(&mut self, v: &[f64]) {
        v.iter().for_each(|x| self.f(*x));
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    path: &'a Path,
}

impl Reader<'_> {
    fn take8(&mut self) -> Result<[u8; 8]> {
        if self.bytes.len() < 8 {
            return Err(SweepError::Corrupt { path: self.path.into(), reason: "truncated".into() });
        }
        let (head, rest) = self.bytes.split_at(8);
        self.bytes = rest;
        Ok(head.try_into().unwrap())
    }
    fn f(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take8()?))
    }
    fn u(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take8()?))
    }
    fn fs(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f()).collect()
    }
    fn bad(&self, reason: &str) -> SweepError {
        SweepError::Corrupt { path: self.path.into(), reason: reason.into() }
    }
}

/// Snapshot layout: `dimension, S, time, re_0, im_0, re_1, …`, all
/// little-endian `f64`.
pub fn encode_snapshot(time: f64, psi: &PureState) -> Vec<u8> {
    let mut w = Writer(Vec::with_capacity(8 * (3 + 2 * psi.amplitudes.len())));
    w.f(psi.amplitudes.len() as f64);
    w.f(psi.spin.value());
    w.f(time);
    for z in &psi.amplitudes {
        w.f(z.re);
        w.f(z.im);
    }
    w.0
}

pub fn decode_snapshot(bytes: &[u8], path: &Path) -> Result<(f64, PureState)> {
    let mut r = Reader { bytes, path };
    let dim = r.f()?;
    let s = SpinMagnitude::new(r.f()?).map_err(|e| r.bad(&e.to_string()))?;
    let time = r.f()?;
    if dim != s.product_dim() as f64 {
        return Err(r.bad("dimension does not match spin"));
    }
    let amps: Vec<C64> = (0..s.product_dim()).map(|_| Ok(C64::new(r.f()?, r.f()?))).collect::<Result<_>>()?;
    if !r.bytes.is_empty() {
        return Err(r.bad("trailing bytes"));
    }
    Ok((time, PureState { spin: s, amplitudes: amps }))
}

const RECORD_MAGIC: u64 = u64::from_le_bytes(*b"DTCREC01");

/// Lossless binary form of a trajectory record, used for resume.
pub fn encode_record(rec: &TrajectoryRecord) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.u(RECORD_MAGIC);
    w.u(rec.trajectory_index);
    w.u(rec.times.len() as u64);
    w.u(rec.entropy.len() as u64);
    w.fs(&rec.times);
    w.fs(&rec.saz);
    w.fs(&rec.sbz);
    w.fs(&rec.sazsbz);
    w.fs(&rec.entropy);
    w.u(rec.snapshots.len() as u64);
    for s in &rec.snapshots {
        w.u(s.slot as u64);
        w.0.extend(encode_snapshot(s.time, &s.state));
    }
    w.0
}

pub fn decode_record(bytes: &[u8], path: &Path) -> Result<TrajectoryRecord> {
    let mut r = Reader { bytes, path };
    if r.u()? != RECORD_MAGIC {
        return Err(r.bad("not a trajectory record"));
    }
    let trajectory_index = r.u()?;
    let n = r.u()? as usize;
    let ne = r.u()? as usize;
    if n > bytes.len() || ne > bytes.len() {
        return Err(r.bad("implausible length"));
    }
    let times = r.fs(n)?;
    let saz = r.fs(n)?;
    let sbz = r.fs(n)?;
    let sazsbz = r.fs(n)?;
    let entropy = r.fs(ne)?;
    let count = r.u()? as usize;
    let mut snapshots = Vec::new();
    for _ in 0..count.min(bytes.len()) {
        let slot = r.u()? as usize;
        let dim = f64::from_le_bytes(r.bytes.get(..8).ok_or_else(|| r.bad("truncated"))?.try_into().unwrap());
        let len = 8 * (3 + 2 * dim as usize);
        let chunk = r.bytes.get(..len).ok_or_else(|| r.bad("truncated snapshot"))?;
        let (time, state) = decode_snapshot(chunk, path)?;
        r.bytes = &r.bytes[len..];
        snapshots.push(Snapshot { trajectory_index, time, slot, state });
    }
    if !r.bytes.is_empty() {
        return Err(r.bad("trailing bytes"));
    }
    Ok(TrajectoryRecord { trajectory_index, times, saz, sbz, sazsbz, entropy, snapshots })
}

pub fn point_dir(root: &Path, kind: &str, point: usize) -> PathBuf {
    root.join(kind).join(format!("point_{point:04}"))
}

pub fn trajectory_file(dir: &Path, index: u64) -> PathBuf {
    dir.join(format!("traj_{index:06}.bin"))
}
