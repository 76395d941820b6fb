//! File formats: CSV curve matrices, the `FCOV` binary volume format and
//! eigensystem dumps.
//!
//! `FCOV` layout, little-endian: magic `b"FCOV"`, `u32` n, X, Y, Z, a `u8`
//! dtype (0 = f32, 1 = f64), then `n * X * Y * Z` values, time slowest and
//! `z` fastest.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::covspec::EigenSystem;
use crate::error::{FcovError, Result};
use crate::fts::{FunctionalSample, GridDomain, VolumeSeries};

pub const MAGIC: &[u8; 4] = b"FCOV";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(Dtype::F32),
            1 => Ok(Dtype::F64),
            other => Err(FcovError::Format(format!("unknown dtype code {other}"))),
        }
    }
}

/// Rows of numbers, as written by [`write_csv_matrix`]. A first row that
/// does not parse as numbers is taken as a header and skipped.
pub fn read_csv_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(r) => rows.push(r),
            Err(_) if i == 0 => continue,
            Err(e) => return Err(FcovError::Format(format!("{}: row {}: {e}", path.display(), i + 1))),
        }
    }
    let g = rows.first().map_or(0, Vec::len);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != g) {
        return Err(FcovError::Format(format!("{}: row {} has {} fields, expected {g}", path.display(), i + 1, r.len())));
    }
    Ok(DMatrix::from_fn(rows.len(), g, |t, j| rows[t][j]))
}

pub fn write_csv_matrix(path: &Path, m: &DMatrix<f64>, header: Option<&[String]>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    if let Some(h) = header {
        writer.write_record(h)?;
    }
    for row in m.row_iter() {
        writer.write_record(row.iter().map(|v| format!("{v:e}")))?;
    }
    writer.flush()?;
    Ok(())
}

/// Curves stored one per row, on a uniform grid over `[0, 1]`.
pub fn read_sample_csv(path: &Path) -> Result<FunctionalSample> {
    let m = read_csv_matrix(path)?;
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(FcovError::EmptySample);
    }
    let domain = GridDomain::unit_interval(m.ncols())?;
    FunctionalSample::new(m, domain)
}

pub fn write_volume(path: &Path, x: &VolumeSeries, dtype: Dtype) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    let [a, b, c] = x.dims();
    for v in [x.n(), a, b, c] {
        let v = u32::try_from(v).map_err(|_| FcovError::Format(format!("size {v} exceeds u32")))?;
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&[dtype.code()])?;
    let values = x.values();
    for t in 0..x.n() {
        for j in 0..values.ncols() {
            let v = values[(t, j)];
            match dtype {
                Dtype::F32 => w.write_all(&(v as f32).to_le_bytes())?,
                Dtype::F64 => w.write_all(&v.to_le_bytes())?,
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

pub fn read_volume(path: &Path) -> Result<(VolumeSeries, Dtype)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| FcovError::Format("file too short for an FCOV header".into()))?;
    if &magic != MAGIC {
        return Err(FcovError::Format(format!("{}: bad magic {:?}", path.display(), magic)));
    }
    let n = read_u32(&mut r)? as usize;
    let dims = [read_u32(&mut r)? as usize, read_u32(&mut r)? as usize, read_u32(&mut r)? as usize];
    let mut code = [0u8; 1];
    r.read_exact(&mut code)?;
    let dtype = Dtype::from_code(code[0])?;
    let m: usize = dims.iter().product();
    let width = if dtype == Dtype::F32 { 4 } else { 8 };
    let mut bytes = Vec::with_capacity(n * m * width);
    r.read_to_end(&mut bytes)?;
    if bytes.len() != n * m * width {
        return Err(FcovError::Format(format!(
            "{}: expected {} value bytes, found {}",
            path.display(),
            n * m * width,
            bytes.len()
        )));
    }
    let value = |i: usize| -> f64 {
        let s = &bytes[i * width..(i + 1) * width];
        match dtype {
            Dtype::F32 => f32::from_le_bytes(s.try_into().expect("4 bytes")) as f64,
            Dtype::F64 => f64::from_le_bytes(s.try_into().expect("8 bytes")),
        }
    };
    let values = DMatrix::from_fn(n, m, |t, j| value(t * m + j));
    Ok((VolumeSeries::new(values, dims)?, dtype))
}

/// Paths written by [`write_eigensystem`].
pub fn eigensystem_paths(prefix: &Path) -> (PathBuf, PathBuf) {
    let with = |ext: &str| {
        let mut s = prefix.as_os_str().to_owned();
        s.push(ext);
        PathBuf::from(s)
    };
    (with(".eigenvalues.csv"), with(".functions.bin"))
}

/// Eigenvalues as CSV (`index,eigenvalue,explained`) and eigenfunctions as
/// a binary matrix: `u32` rows, `u32` cols, then f64 values column by
/// column.
pub fn write_eigensystem(prefix: &Path, e: &EigenSystem) -> Result<()> {
    let (vals, funcs) = eigensystem_paths(prefix);
    let mut writer = csv::Writer::from_path(vals)?;
    writer.write_record(["index", "eigenvalue", "explained"])?;
    for (i, (l, x)) in e.eigenvalues().iter().zip(e.explained()).enumerate() {
        writer.write_record([(i + 1).to_string(), format!("{l:e}"), format!("{x:e}")])?;
    }
    writer.flush()?;
    let m = e.eigenfunctions();
    let mut w = BufWriter::new(File::create(funcs)?);
    w.write_all(&(m.nrows() as u32).to_le_bytes())?;
    w.write_all(&(m.ncols() as u32).to_le_bytes())?;
    for v in m.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Eigenvalues and eigenfunction matrix from a [`write_eigensystem`] dump.
pub fn read_eigensystem(prefix: &Path) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let (vals, funcs) = eigensystem_paths(prefix);
    let mut reader = csv::Reader::from_path(vals)?;
    let mut eigenvalues = Vec::new();
    for record in reader.records() {
        let record = record?;
        let v = record.get(1).ok_or_else(|| FcovError::Format("eigenvalue column missing".into()))?;
        eigenvalues.push(v.parse::<f64>().map_err(|e| FcovError::Format(e.to_string()))?);
    }
    let mut r = BufReader::new(File::open(funcs)?);
    let rows = read_u32(&mut r)? as usize;
    let cols = read_u32(&mut r)? as usize;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != rows * cols * 8 {
        return Err(FcovError::Format("eigenfunction matrix truncated".into()));
    }
    let data: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Ok((eigenvalues, DMatrix::from_vec(rows, cols, data)))
}
