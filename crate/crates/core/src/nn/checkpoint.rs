//! `HRNN` parameter files: magic `HRNN`, version `u32`, tensor count `u32`,
//! then per tensor `rows u32`, `cols u32` and little-endian `f64` data.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::matrix::DenseMatrix;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"HRNN";
pub const VERSION: u32 = 1;

pub fn write_tensors<W: Write>(mut w: W, tensors: &[&DenseMatrix]) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for t in tensors {
        w.write_all(&(t.rows() as u32).to_le_bytes())?;
        w.write_all(&(t.cols() as u32).to_le_bytes())?;
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

pub fn read_tensors<R: Read>(mut r: R) -> std::result::Result<Vec<DenseMatrix>, String> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| e.to_string())?;
    if &magic != MAGIC {
        return Err(format!("bad magic {magic:?}"));
    }
    let version = read_u32(&mut r).map_err(|e| e.to_string())?;
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let count = read_u32(&mut r).map_err(|e| e.to_string())?;
    let mut tensors = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let rows = read_u32(&mut r).map_err(|e| e.to_string())? as usize;
        let cols = read_u32(&mut r).map_err(|e| e.to_string())? as usize;
        let mut bytes = vec![0u8; rows * cols * 8];
        r.read_exact(&mut bytes)
            .map_err(|e| format!("truncated tensor: {e}"))?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(DenseMatrix::new(rows, cols, data).map_err(|e| e.to_string())?);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(|e| e.to_string())? != 0 {
        return Err("trailing bytes after last tensor".into());
    }
    Ok(tensors)
}

pub fn save(path: &Path, tensors: &[&DenseMatrix]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_tensors(BufWriter::new(file), tensors).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Vec<DenseMatrix>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_tensors(BufReader::new(file)).map_err(|m| Error::format(path, m))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout_is_exact() {
        let t = DenseMatrix::new(1, 2, vec![1.0, -2.5]).unwrap();
        let mut buf = Vec::new();
        write_tensors(&mut buf, &[&t]).unwrap();
        let mut expected = b"HRNN".to_vec();
        expected.extend(1u32.to_le_bytes());
        expected.extend(1u32.to_le_bytes());
        expected.extend(1u32.to_le_bytes());
        expected.extend(2u32.to_le_bytes());
        expected.extend(1.0f64.to_le_bytes());
        expected.extend((-2.5f64).to_le_bytes());
        assert_eq!(buf, expected);
        assert_eq!(read_tensors(&buf[..]).unwrap(), vec![t]);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        assert!(read_tensors(&b"HRNX\x01\0\0\0\0\0\0\0"[..]).is_err());
        let t = DenseMatrix::zeros(2, 2);
        let mut buf = Vec::new();
        write_tensors(&mut buf, &[&t]).unwrap();
        assert!(read_tensors(&buf[..buf.len() - 1]).is_err());
        buf.push(0);
        assert!(read_tensors(&buf[..]).is_err());
    }
}
