use crate::error::{Error, Result};

/// Row-major dense matrix of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Checks that `data.len() == rows * cols` and that every value is finite.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix data".into()));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        DenseMatrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        DenseMatrix::new(rows.len(), cols, rows.concat())
    }

    pub fn identity(n: usize) -> Self {
        DenseMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    /// Copies the selected rows into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> DenseMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        DenseMatrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn transpose(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&mut self, c: f64) {
        self.data.iter_mut().for_each(|v| *v *= c);
    }

    /// `self += c * other`
    pub fn add_scaled(&mut self, other: &DenseMatrix, c: f64) -> Result<()> {
        self.check_same_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
        Ok(())
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn check_same_shape(&self, other: &DenseMatrix) -> Result<()> {
        if self.shape() == other.shape() {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{:?} vs {:?}",
                self.shape(),
                other.shape()
            )))
        }
    }

    /// `self * rhs`. Zero entries of `self` are skipped, which makes sparse
    /// rating inputs cheap.
    pub fn matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::Shape(format!(
                "matmul {:?} x {:?}",
                self.shape(),
                rhs.shape()
            )));
        }
        let mut out = DenseMatrix::zeros(self.rows, rhs.cols);
        gemm(
            Lhs {
                data: &self.data,
                row_stride: self.cols,
                col_stride: 1,
            },
            self.rows,
            self.cols,
            &rhs.data,
            rhs.cols,
            &mut out.data,
        );
        Ok(out)
    }

    /// `selfᵀ * rhs`
    pub fn t_matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != rhs.rows {
            return Err(Error::Shape(format!(
                "t_matmul {:?}ᵀ x {:?}",
                self.shape(),
                rhs.shape()
            )));
        }
        let mut out = DenseMatrix::zeros(self.cols, rhs.cols);
        gemm(
            Lhs {
                data: &self.data,
                row_stride: 1,
                col_stride: self.cols,
            },
            self.cols,
            self.rows,
            &rhs.data,
            rhs.cols,
            &mut out.data,
        );
        Ok(out)
    }

    /// `self * rhsᵀ`
    pub fn matmul_t(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != rhs.cols {
            return Err(Error::Shape(format!(
                "matmul_t {:?} x {:?}ᵀ",
                self.shape(),
                rhs.shape()
            )));
        }
        self.matmul(&rhs.transpose())
    }

    pub fn add_row_vector(&mut self, v: &[f64]) {
        debug_assert_eq!(v.len(), self.cols);
        for row in self.data.chunks_exact_mut(self.cols.max(1)) {
            for (x, b) in row.iter_mut().zip(v) {
                *x += b;
            }
        }
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for row in self.data.chunks_exact(self.cols.max(1)) {
            for (s, x) in sums.iter_mut().zip(row) {
                *s += x;
            }
        }
        sums
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().sum()).collect()
    }
}

#[derive(Clone, Copy)]
struct Lhs<'a> {
    data: &'a [f64],
    row_stride: usize,
    col_stride: usize,
}

impl Lhs<'_> {
    #[inline(always)]
    fn at(&self, i: usize, p: usize) -> f64 {
        self.data[i * self.row_stride + p * self.col_stride]
    }
}

const ROW_BLOCK: usize = 4;
const LANES: usize = 8;
const COL_BLOCK: usize = 256;
const DEPTH_BLOCK: usize = 128;

/// `out (m x n) += a (m x k) * b (k x n)`. Uses fused multiply-add when the
/// CPU supports it, so results are reproducible per machine but not across
/// instruction sets.
fn gemm(a: Lhs<'_>, m: usize, k: usize, b: &[f64], n: usize, out: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma") {
        // SAFETY: the required CPU features were detected above.
        unsafe { gemm_fma(a, m, k, b, n, out) };
        return;
    }
    gemm_blocked::<false>(a, m, k, b, n, out);
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn gemm_fma(a: Lhs<'_>, m: usize, k: usize, b: &[f64], n: usize, out: &mut [f64]) {
    gemm_blocked::<true>(a, m, k, b, n, out);
}

#[inline(always)]
fn madd<const FUSED: bool>(acc: f64, x: f64, y: f64) -> f64 {
    if FUSED {
        x.mul_add(y, acc)
    } else {
        acc + x * y
    }
}

/// Register-blocked kernel: a 4 x 8 tile of `out` is accumulated in
/// registers over a depth panel, then added back. Rows of `a` whose four
/// entries are all zero at a given depth are skipped, which keeps sparse
/// rating inputs cheap.
#[inline(always)]
fn gemm_blocked<const FUSED: bool>(
    a: Lhs<'_>,
    m: usize,
    k: usize,
    b: &[f64],
    n: usize,
    out: &mut [f64],
) {
    for jc in (0..n).step_by(COL_BLOCK) {
        let nc = COL_BLOCK.min(n - jc);
        for pc in (0..k).step_by(DEPTH_BLOCK) {
            let kend = DEPTH_BLOCK.min(k - pc) + pc;
            let kc = kend - pc;
            let mut packed = vec![0.0f64; kc * ROW_BLOCK];
            let mut i = 0;
            while i + ROW_BLOCK <= m {
                let mut live = Vec::with_capacity(kc);
                for p in pc..kend {
                    let av = [a.at(i, p), a.at(i + 1, p), a.at(i + 2, p), a.at(i + 3, p)];
                    if av != [0.0; ROW_BLOCK] {
                        packed[live.len() * ROW_BLOCK..(live.len() + 1) * ROW_BLOCK]
                            .copy_from_slice(&av);
                        live.push(p);
                    }
                }
                let lhs = &packed[..live.len() * ROW_BLOCK];
                let mut j = jc;
                while j + LANES <= jc + nc {
                    let mut acc = [[0.0f64; LANES]; ROW_BLOCK];
                    for (av, &p) in lhs.chunks_exact(ROW_BLOCK).zip(&live) {
                        let br: &[f64; LANES] = b[p * n + j..p * n + j + LANES].try_into().unwrap();
                        for r in 0..ROW_BLOCK {
                            for c in 0..LANES {
                                acc[r][c] = madd::<FUSED>(acc[r][c], av[r], br[c]);
                            }
                        }
                    }
                    for (r, acc_row) in acc.iter().enumerate() {
                        let o = &mut out[(i + r) * n + j..(i + r) * n + j + LANES];
                        for c in 0..LANES {
                            o[c] += acc_row[c];
                        }
                    }
                    j += LANES;
                }
                for jj in j..jc + nc {
                    for r in 0..ROW_BLOCK {
                        let mut s = 0.0;
                        for p in pc..kend {
                            s = madd::<FUSED>(s, a.at(i + r, p), b[p * n + jj]);
                        }
                        out[(i + r) * n + jj] += s;
                    }
                }
                i += ROW_BLOCK;
            }
            for i in i..m {
                let c = &mut out[i * n + jc..i * n + jc + nc];
                for p in pc..kend {
                    let av = a.at(i, p);
                    if av != 0.0 {
                        let br = &b[p * n + jc..p * n + jc + nc];
                        for (ci, bi) in c.iter_mut().zip(br) {
                            *ci = madd::<FUSED>(*ci, av, *bi);
                        }
                    }
                }
            }
        }
    }
}

/// Inner product, accumulated in four lanes.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in chunks * 4..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += a * x`
#[inline]
pub fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
        DenseMatrix::from_fn(a.rows(), b.cols(), |i, j| {
            (0..a.cols()).map(|k| a.get(i, k) * b.get(k, j)).sum()
        })
    }

    #[test]
    fn products_agree_with_naive() {
        let a = DenseMatrix::from_fn(3, 5, |i, j| {
            if (i + j) % 3 == 0 {
                0.0
            } else {
                (i * 5 + j) as f64 * 0.1 - 0.7
            }
        });
        let b = DenseMatrix::from_fn(5, 4, |i, j| (i as f64 - j as f64) * 0.3);
        let c = DenseMatrix::from_fn(3, 4, |i, j| (i * j) as f64 - 1.0);
        let expected = naive(&a, &b);
        let got = a.matmul(&b).unwrap();
        for (x, y) in got.data().iter().zip(expected.data()) {
            assert!((x - y).abs() < 1e-12);
        }
        let expected = naive(&a.transpose(), &c);
        let got = a.t_matmul(&c).unwrap();
        for (x, y) in got.data().iter().zip(expected.data()) {
            assert!((x - y).abs() < 1e-12);
        }
        let expected = naive(&b, &c.transpose());
        let got = b.matmul_t(&c).unwrap();
        for (x, y) in got.data().iter().zip(expected.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn blocked_products_cross_panel_edges() {
        let a = DenseMatrix::from_fn(9, 300, |i, j| {
            if (i * 7 + j) % 5 == 0 {
                0.0
            } else {
                ((i * 31 + j * 17) % 23) as f64 * 0.05 - 0.5
            }
        });
        let b = DenseMatrix::from_fn(300, 270, |i, j| ((i * 13 + j * 11) % 19) as f64 * 0.1 - 0.9);
        let expected = naive(&a, &b);
        for (x, y) in a.matmul(&b).unwrap().data().iter().zip(expected.data()) {
            assert!((x - y).abs() < 1e-9);
        }
        let c = DenseMatrix::from_fn(9, 261, |i, j| ((i + 3 * j) % 7) as f64 - 3.0);
        let expected = naive(&a.transpose(), &c);
        for (x, y) in a.t_matmul(&c).unwrap().data().iter().zip(expected.data()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn shape_errors() {
        let a = DenseMatrix::zeros(2, 3);
        assert!(a.matmul(&a).is_err());
        assert!(DenseMatrix::new(2, 2, vec![1.0]).is_err());
        assert!(DenseMatrix::new(1, 1, vec![f64::NAN]).is_err());
    }
}
