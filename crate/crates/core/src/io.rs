//! Matrix, permutation and embedding files.
//!
//! Matrices are stored either as dense CSV (one row per line, `#` comment
//! lines ignored) or in a little-endian binary layout:
//!
//! ```text
//! b"LRGM"  u32 n  u32 flags  [u32 ncols if flags & RECTANGULAR]  n*ncols f64, row-major
//! ```
//!
//! Readers detect the format from the magic bytes, not the file name.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graphon::Permutation;
use crate::laplace::FrequencySample;
use crate::spectral::{Embedding, EmbeddingMeta};

pub const MAGIC: &[u8; 4] = b"LRGM";
/// The matrix is symmetric.
pub const FLAG_SYMMETRIC: u32 = 1;
/// A column count follows the flags; otherwise the matrix is `n x n`.
pub const FLAG_RECTANGULAR: u32 = 2;

pub fn write_csv<W: Write>(mut out: W, m: &DMatrix<f64>) -> Result<()> {
    let mut line = String::new();
    for i in 0..m.nrows() {
        line.clear();
        for j in 0..m.ncols() {
            if j > 0 {
                line.push(',');
            }
            // shortest representation that parses back to the same bits
            line.push_str(&m[(i, j)].to_string());
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .map(|field| {
                field
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("line {}: {:?}: {e}", k + 1, field.trim())))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Format(format!(
                    "line {}: {} fields, expected {}",
                    k + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn write_binary<W: Write>(mut out: W, m: &DMatrix<f64>) -> Result<()> {
    let n = u32::try_from(m.nrows()).map_err(|_| Error::Format("too many rows".into()))?;
    let ncols = u32::try_from(m.ncols()).map_err(|_| Error::Format("too many columns".into()))?;
    let square = m.is_square();
    let mut flags = 0;
    if square && m == &m.transpose() {
        flags |= FLAG_SYMMETRIC;
    }
    if !square {
        flags |= FLAG_RECTANGULAR;
    }
    out.write_all(MAGIC)?;
    out.write_all(&n.to_le_bytes())?;
    out.write_all(&flags.to_le_bytes())?;
    if !square {
        out.write_all(&ncols.to_le_bytes())?;
    }
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.write_all(&m[(i, j)].to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    input
        .read_exact(&mut buf)
        .map_err(|_| Error::Format("truncated binary header".into()))?;
    Ok(u32::from_le_bytes(buf))
}

pub fn read_binary<R: Read>(mut input: R) -> Result<DMatrix<f64>> {
    let mut magic = [0u8; 4];
    input
        .read_exact(&mut magic)
        .map_err(|_| Error::Format("truncated binary header".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format("missing LRGM magic".into()));
    }
    let n = read_u32(&mut input)? as usize;
    let flags = read_u32(&mut input)?;
    if flags & !(FLAG_SYMMETRIC | FLAG_RECTANGULAR) != 0 {
        return Err(Error::Format(format!("unknown flags {flags:#x}")));
    }
    let ncols = if flags & FLAG_RECTANGULAR != 0 {
        read_u32(&mut input)? as usize
    } else {
        n
    };
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let expected = n
        .checked_mul(ncols)
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| Error::Format("matrix size overflows".into()))?;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "payload of {} bytes for a {n}x{ncols} matrix ({expected} expected)",
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunks of eight")))
        .collect();
    let m = DMatrix::from_row_slice(n, ncols, &values);
    if flags & FLAG_SYMMETRIC != 0 && m != m.transpose() {
        return Err(Error::Format("matrix flagged symmetric is not".into()));
    }
    Ok(m)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    Binary,
}

impl MatrixFormat {
    /// Binary for `.bin` and `.lrgm` paths, CSV otherwise.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") | Some("lrgm") => MatrixFormat::Binary,
            _ => MatrixFormat::Csv,
        }
    }
}

pub fn save_matrix(path: &Path, m: &DMatrix<f64>, format: MatrixFormat) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    match format {
        MatrixFormat::Csv => write_csv(&mut out, m)?,
        MatrixFormat::Binary => write_binary(&mut out, m)?,
    }
    out.flush()?;
    Ok(())
}

pub fn load_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(MAGIC) {
        read_binary(bytes.as_slice())
    } else {
        read_csv(bytes.as_slice())
    }
}

/// One image per line: line `i` holds `perm[i]`.
pub fn save_permutation(path: &Path, perm: &Permutation) -> Result<()> {
    let mut text = String::with_capacity(perm.len() * 5);
    for &p in perm.as_slice() {
        text.push_str(&p.to_string());
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn load_permutation(path: &Path) -> Result<Permutation> {
    let text = fs::read_to_string(path)?;
    let images = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.parse::<usize>().map_err(|e| Error::Format(format!("{l:?}: {e}"))))
        .collect::<Result<Vec<usize>>>()?;
    Permutation::new(images)
}

fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

/// Writes the positions in the requested format and the eigenvalues and
/// signature to `<path>.json`.
pub fn save_embedding(path: &Path, e: &Embedding, format: MatrixFormat) -> Result<()> {
    save_matrix(path, &e.positions, format)?;
    fs::write(sidecar(path), serde_json::to_string_pretty(&e.meta())?)?;
    Ok(())
}

pub fn load_embedding(path: &Path) -> Result<Embedding> {
    let positions = load_matrix(path)?;
    let meta: EmbeddingMeta = serde_json::from_str(&fs::read_to_string(sidecar(path))?)?;
    let d = meta.d_pos + meta.d_neg;
    if positions.ncols() != d || meta.eigenvalues.len() != d || meta.signs.len() != d {
        return Err(Error::Format(format!(
            "embedding with {} columns but signature ({}, {})",
            positions.ncols(),
            meta.d_pos,
            meta.d_neg
        )));
    }
    Ok(Embedding {
        positions,
        eigenvalues: meta.eigenvalues,
        d_pos: meta.d_pos,
        d_neg: meta.d_neg,
    })
}

/// CSV of frequency imaginary parts, one frequency per row, with the real
/// part and truncation in a leading comment.
pub fn save_frequencies(path: &Path, freqs: &FrequencySample) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "# gamma={} r={}", freqs.gamma(), freqs.r())?;
    write_csv(&mut out, &freqs.to_matrix())?;
    out.flush()?;
    Ok(())
}

pub fn load_frequencies(path: &Path) -> Result<FrequencySample> {
    let text = fs::read_to_string(path)?;
    let header = text
        .lines()
        .next()
        .and_then(|l| l.strip_prefix('#'))
        .ok_or_else(|| Error::Format("missing frequency header".into()))?;
    let mut gamma = None;
    let mut r = None;
    for field in header.split_whitespace() {
        match field.split_once('=') {
            Some(("gamma", v)) => gamma = v.parse::<f64>().ok(),
            Some(("r", v)) => r = v.parse::<f64>().ok(),
            _ => {}
        }
    }
    let (gamma, r) = gamma
        .zip(r)
        .ok_or_else(|| Error::Format(format!("bad frequency header {header:?}")))?;
    FrequencySample::from_matrix(&read_csv(text.as_bytes())?, gamma, r)
}
