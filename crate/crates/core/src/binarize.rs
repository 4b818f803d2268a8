//! Continuous embeddings to packed ±1 codes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::DenseMatrix;

const MAGIC: &[u8; 4] = b"HRBC";
const VERSION: u32 = 1;

/// Bit-packed ±1 codes, one `code_bits`-wide row per entity. Bit `j` set
/// means coordinate `j` is +1; bits past `code_bits` are always zero.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryCodeMatrix {
    rows: usize,
    code_bits: usize,
    words_per_row: usize,
    words: Vec<u64>,
}

pub(crate) fn words_for(bits: usize) -> usize {
    bits.div_ceil(64)
}

fn tail_mask(bits: usize) -> u64 {
    match bits % 64 {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

impl BinaryCodeMatrix {
    pub fn from_words(rows: usize, code_bits: usize, words: Vec<u64>) -> Result<Self> {
        let wpr = words_for(code_bits);
        if words.len() != rows * wpr {
            return Err(Error::Shape(format!(
                "{} words for {rows} rows of {code_bits} bits",
                words.len()
            )));
        }
        if wpr > 0 {
            let mask = tail_mask(code_bits);
            if words.chunks_exact(wpr).any(|w| w[wpr - 1] & !mask != 0) {
                return Err(Error::Contract("unused code bits must be zero".into()));
            }
        }
        Ok(BinaryCodeMatrix {
            rows,
            code_bits,
            words_per_row: wpr,
            words,
        })
    }

    /// Packs rows of signs; `true` is +1.
    pub fn from_signs(
        rows: usize,
        code_bits: usize,
        mut positive: impl FnMut(usize, usize) -> bool,
    ) -> Self {
        let wpr = words_for(code_bits);
        let mut words = vec![0u64; rows * wpr];
        for i in 0..rows {
            for j in 0..code_bits {
                if positive(i, j) {
                    words[i * wpr + j / 64] |= 1u64 << (j % 64);
                }
            }
        }
        BinaryCodeMatrix {
            rows,
            code_bits,
            words_per_row: wpr,
            words,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn code_bits(&self) -> usize {
        self.code_bits
    }

    pub fn words_per_row(&self) -> usize {
        self.words_per_row
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[u64] {
        &self.words[i * self.words_per_row..(i + 1) * self.words_per_row]
    }

    pub fn bit(&self, i: usize, j: usize) -> bool {
        self.row(i)[j / 64] >> (j % 64) & 1 == 1
    }

    /// Selects rows into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> BinaryCodeMatrix {
        let mut words = Vec::with_capacity(indices.len() * self.words_per_row);
        for &i in indices {
            words.extend_from_slice(self.row(i));
        }
        BinaryCodeMatrix {
            rows: indices.len(),
            code_bits: self.code_bits,
            words_per_row: self.words_per_row,
            words,
        }
    }

    /// ±1.0 entries.
    pub fn unpack(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.rows, self.code_bits, |i, j| {
            if self.bit(i, j) {
                1.0
            } else {
                -1.0
            }
        })
    }

    /// Sum of each row's ±1 entries.
    pub fn row_sums(&self) -> Vec<i64> {
        (0..self.rows)
            .map(|i| {
                let ones: u32 = self.row(i).iter().map(|w| w.count_ones()).sum();
                2 * ones as i64 - self.code_bits as i64
            })
            .collect()
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.rows as u32).to_le_bytes())?;
        w.write_all(&(self.code_bits as u32).to_le_bytes())?;
        for word in &self.words {
            w.write_all(&word.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> std::result::Result<Self, String> {
        let mut head = [0u8; 16];
        r.read_exact(&mut head)
            .map_err(|_| "truncated header".to_string())?;
        if &head[..4] != MAGIC {
            return Err("bad magic".into());
        }
        let field = |k: usize| u32::from_le_bytes(head[k..k + 4].try_into().unwrap());
        if field(4) != VERSION {
            return Err(format!("unsupported version {}", field(4)));
        }
        let rows = field(8) as usize;
        let bits = field(12) as usize;
        let n = rows * words_for(bits);
        let mut buf = Vec::new();
        r.read_to_end(&mut buf).map_err(|e| e.to_string())?;
        if buf.len() != n * 8 {
            return Err(format!(
                "expected {} payload bytes, found {}",
                n * 8,
                buf.len()
            ));
        }
        let words = buf
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        BinaryCodeMatrix::from_words(rows, bits, words).map_err(|e| e.to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        BinaryCodeMatrix::read_from(&mut BufReader::new(file)).map_err(|m| Error::format(path, m))
    }
}

/// +1 where `f >= 0`, else −1.
pub fn sign_binarize(f: &DenseMatrix) -> BinaryCodeMatrix {
    BinaryCodeMatrix::from_signs(f.rows(), f.cols(), |i, j| f.get(i, j) >= 0.0)
}

/// Element-wise `tanh(α f)`.
pub fn scaled_tanh(f: &DenseMatrix, alpha: f64) -> Result<DenseMatrix> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Contract(format!("α must be positive, got {alpha}")));
    }
    Ok(f.map(|v| (alpha * v).tanh()))
}

pub fn sst_binarize(f: &DenseMatrix, alpha_final: f64) -> Result<BinaryCodeMatrix> {
    Ok(sign_binarize(&scaled_tanh(f, alpha_final)?))
}

/// Per-column threshold at the lower median; +1 where the value is at least
/// the threshold.
pub fn median_binarize(f: &DenseMatrix) -> Result<BinaryCodeMatrix> {
    if f.rows() == 0 {
        return Err(Error::Contract(
            "median binarization needs at least one row".into(),
        ));
    }
    let thresholds: Vec<f64> = (0..f.cols())
        .map(|j| {
            let mut col: Vec<f64> = (0..f.rows()).map(|i| f.get(i, j)).collect();
            let mid = (col.len() - 1) / 2;
            *col.select_nth_unstable_by(mid, f64::total_cmp).1
        })
        .collect();
    Ok(BinaryCodeMatrix::from_signs(f.rows(), f.cols(), |i, j| {
        f.get(i, j) >= thresholds[j]
    }))
}

/// `α(e) = α0 · γ^e` for epochs `e = 1..=E`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaSchedule {
    pub alpha0: f64,
    pub gamma: f64,
}

impl AlphaSchedule {
    pub fn new(alpha0: f64, gamma: f64) -> Result<Self> {
        if !(alpha0 > 0.0) || !(gamma > 1.0) || !gamma.is_finite() {
            return Err(Error::Config(format!(
                "α schedule needs α0 > 0 and γ > 1 (got {alpha0}, {gamma})"
            )));
        }
        Ok(AlphaSchedule { alpha0, gamma })
    }

    /// Growth chosen so that `α(epochs) = alpha_final` with `α0 = 1`.
    pub fn reaching(alpha_final: f64, epochs: usize) -> Result<Self> {
        AlphaSchedule::between(1.0, alpha_final, epochs)
    }

    pub fn between(alpha0: f64, alpha_final: f64, epochs: usize) -> Result<Self> {
        if epochs == 0 {
            return Err(Error::Config("α schedule needs at least one epoch".into()));
        }
        AlphaSchedule::new(alpha0, (alpha_final / alpha0).powf(1.0 / epochs as f64))
    }

    pub fn alpha(&self, epoch: usize) -> f64 {
        self.alpha0 * self.gamma.powi(epoch as i32)
    }
}
