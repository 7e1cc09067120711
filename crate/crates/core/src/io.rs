//! Binary matrix files and little-endian helpers shared by the cache formats.
//!
//! Matrix layout (`NAQF`): magic, `u32` rows, `u32` cols, then row-major
//! `f32` values, all little-endian. Values are widened to `f64` on read.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

pub const MATRIX_MAGIC: &[u8; 4] = b"NAQF";

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8], path: &'a Path) -> Self {
        Reader { buf, pos: 0, path }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Parse {
                path: self.path.to_path_buf(),
                line: 0,
                msg: format!("unexpected end of file at byte {}", self.pos),
            });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(crate) fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let got = self.take(4)?;
        if got != expected {
            return Err(Error::Parse {
                path: self.path.to_path_buf(),
                line: 0,
                msg: format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(got),
                    String::from_utf8_lossy(expected)
                ),
            });
        }
        Ok(())
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Parse {
                path: self.path.to_path_buf(),
                line: 0,
                msg: format!("{} trailing bytes", self.buf.len() - self.pos),
            });
        }
        Ok(())
    }
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(bytes).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn usize_to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::domain(format!("{what} = {v} does not fit in u32")))
}

/// Encodes a matrix in the `NAQF` binary layout (values narrowed to `f32`).
pub fn encode_matrix(m: &Array2<f64>) -> Result<Vec<u8>> {
    let (rows, cols) = m.dim();
    let mut out = Vec::with_capacity(12 + rows * cols * 4);
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&usize_to_u32(rows, "rows")?.to_le_bytes());
    out.extend_from_slice(&usize_to_u32(cols, "cols")?.to_le_bytes());
    for v in m.iter() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn write_matrix(path: &Path, m: &Array2<f64>) -> Result<()> {
    write_bytes(path, &encode_matrix(m)?)
}

/// Reads a feature matrix, either `NAQF` binary or CSV text (one row per line).
pub fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    let bytes = read_bytes(path)?;
    if bytes.starts_with(MATRIX_MAGIC) {
        decode_matrix(&bytes, path)
    } else {
        parse_csv_matrix(&bytes, path)
    }
}

pub(crate) fn decode_matrix(bytes: &[u8], path: &Path) -> Result<Array2<f64>> {
    let mut r = Reader::new(bytes, path);
    r.magic(MATRIX_MAGIC)?;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        data.push(r.f32()? as f64);
    }
    r.finish()?;
    Ok(Array2::from_shape_vec((rows, cols), data).expect("shape checked"))
}

fn parse_csv_matrix(bytes: &[u8], path: &Path) -> Result<Array2<f64>> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        msg: format!("neither NAQF binary nor UTF-8 text: {e}"),
    })?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut n = 0;
        for field in line.split(',') {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("invalid number {:?}", field.trim()),
            })?;
            data.push(v);
            n += 1;
        }
        match cols {
            None => cols = Some(n),
            Some(c) if c != n => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: format!("expected {c} columns, found {n}"),
                })
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.unwrap_or(0);
    Ok(Array2::from_shape_vec((rows, cols), data).expect("row lengths checked"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn binary_and_csv_agree() {
        let dir = tempfile::tempdir().unwrap();
        let m = array![[1.0, 0.0, 0.5], [0.0, 2.0, -1.0]];
        let bin = dir.path().join("x.naqf");
        write_matrix(&bin, &m).unwrap();
        let csv = dir.path().join("x.csv");
        std::fs::write(&csv, "1,0,0.5\n0, 2, -1\n").unwrap();
        assert_eq!(read_matrix(&bin).unwrap(), m);
        assert_eq!(read_matrix(&csv).unwrap(), m);
    }

    #[test]
    fn ragged_csv_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("x.csv");
        std::fs::write(&csv, "1,0\n# comment\n1\n").unwrap();
        match read_matrix(&csv) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncated_binary_is_rejected() {
        let m = array![[1.0, 2.0]];
        let mut bytes = encode_matrix(&m).unwrap();
        bytes.pop();
        assert!(decode_matrix(&bytes, Path::new("t")).is_err());
    }
}
