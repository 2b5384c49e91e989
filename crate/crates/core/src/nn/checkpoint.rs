//! Parameter checkpoints.
//!
//! Layout, little endian: `"SUBCRCKP"`, format version `u32`, metadata length
//! `u32` followed by that many bytes of UTF-8 JSON, parameter count `u32`, then
//! per parameter: name length `u32`, UTF-8 name, rows `u64`, cols `u64`, and
//! `rows·cols` row-major `f64` values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SUBCRCKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub metadata: String,
    pub params: Vec<(String, Array2<f64>)>,
}

impl Checkpoint {
    pub fn get(&self, name: &str) -> Option<&Array2<f64>> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, p)| p)
    }
}

pub fn write_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    out.write_all(MAGIC).map_err(io)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(io)?;
    out.write_all(&(ckpt.metadata.len() as u32).to_le_bytes()).map_err(io)?;
    out.write_all(ckpt.metadata.as_bytes()).map_err(io)?;
    out.write_all(&(ckpt.params.len() as u32).to_le_bytes()).map_err(io)?;
    for (name, value) in &ckpt.params {
        out.write_all(&(name.len() as u32).to_le_bytes()).map_err(io)?;
        out.write_all(name.as_bytes()).map_err(io)?;
        out.write_all(&(value.nrows() as u64).to_le_bytes()).map_err(io)?;
        out.write_all(&(value.ncols() as u64).to_le_bytes()).map_err(io)?;
        for v in value.iter() {
            out.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    out.flush().map_err(io)
}

struct Reader<'a, R> {
    inner: R,
    path: &'a Path,
}

impl<R: Read> Reader<'_, R> {
    fn bytes(&mut self, len: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; len];
        self.inner.read_exact(&mut buf).map_err(|e| Error::Format {
            path: self.path.into(),
            message: format!("truncated checkpoint: {e}"),
        })?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        String::from_utf8(self.bytes(len)?).map_err(|_| Error::Format {
            path: self.path.into(),
            message: "invalid UTF-8 in checkpoint".into(),
        })
    }
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader {
        inner: BufReader::new(file),
        path,
    };
    if r.bytes(8)? != MAGIC {
        return Err(Error::Format {
            path: path.into(),
            message: "not a checkpoint file".into(),
        });
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format {
            path: path.into(),
            message: format!("unsupported checkpoint version {version}"),
        });
    }
    let metadata = r.string()?;
    let count = r.u32()? as usize;
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        let name = r.string()?;
        let rows = r.u64()? as usize;
        let cols = r.u64()? as usize;
        let raw = r.bytes(rows * cols * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let value = Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::Dimension(e.to_string()))?;
        params.push((name, value));
    }
    Ok(Checkpoint { metadata, params })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let ckpt = Checkpoint {
            metadata: r#"{"d":2}"#.into(),
            params: vec![
                ("w".into(), ndarray::array![[1.5, -2.0], [0.0, 1e-300]]),
                ("b".into(), Array2::zeros((1, 3))),
            ],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        write_checkpoint(&ckpt, &path).unwrap();
        let back = read_checkpoint(&path).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(back.get("b").unwrap().dim(), (1, 3));
    }

    #[test]
    fn rejects_foreign_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad");
        std::fs::write(&path, b"SUBCRCKP\x09\x00\x00\x00").unwrap();
        assert!(matches!(read_checkpoint(&path), Err(Error::Format { .. })));
        std::fs::write(&path, b"hello").unwrap();
        assert!(matches!(read_checkpoint(&path), Err(Error::Format { .. })));
    }
}
