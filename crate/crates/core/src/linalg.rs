//! Dense and CSR sparse matrix kernels.
//!
//! Every kernel sums in a fixed order (row-major, column index ascending) so a
//! given input always produces bitwise identical output.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense matrix of finite `f64` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDense")]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct RawDense {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<RawDense> for DenseMatrix {
    type Error = Error;

    fn try_from(raw: RawDense) -> Result<Self> {
        DenseMatrix::new(raw.rows, raw.cols, raw.data)
    }
}

impl DenseMatrix {
    /// Builds a matrix, rejecting wrong lengths and non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::BadLength {
                rows,
                cols,
                len: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / cols.max(1),
                col: pos % cols.max(1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_raw(rows, cols, vec![0.0; rows * cols])
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self::from_raw(rows, cols, vec![value; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::from_raw(rows, cols, data)
    }

    /// Builds a matrix from nested rows; ragged input is an error.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::BadLength {
                    rows: rows.len(),
                    cols,
                    len: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
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

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub(crate) fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub(crate) fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// `self * other`.
    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::dims("matmul", self.shape(), other.shape()));
        }
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ * other` without materializing the transpose.
    pub fn matmul_tn(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != other.rows {
            return Err(Error::dims("matmul_tn", (self.cols, self.rows), other.shape()));
        }
        let mut out = DenseMatrix::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let b_row = other.row(k);
            for (i, &a) in self.row(k).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self * otherᵀ` without materializing the transpose.
    pub fn matmul_nt(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.cols {
            return Err(Error::dims("matmul_nt", self.shape(), (other.cols, other.rows)));
        }
        let mut out = DenseMatrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a_row = self.row(i);
            for j in 0..other.rows {
                out.data[i * other.rows + j] =
                    a_row.iter().zip(other.row(j)).map(|(a, b)| a * b).sum();
            }
        }
        Ok(out)
    }

    pub fn hadamard(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.shape() != other.shape() {
            return Err(Error::dims("hadamard", self.shape(), other.shape()));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b)
            .collect();
        Ok(DenseMatrix::from_raw(self.rows, self.cols, data))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> DenseMatrix {
        DenseMatrix::from_raw(self.rows, self.cols, self.data.iter().map(|&v| f(v)).collect())
    }

    pub(crate) fn add_assign(&mut self, other: &DenseMatrix) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub(crate) fn scale_assign(&mut self, s: f64) {
        for a in &mut self.data {
            *a *= s;
        }
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    offsets: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Validates raw CSR arrays.
    pub fn from_csr(
        rows: usize,
        cols: usize,
        offsets: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if offsets.len() != rows + 1 || offsets[0] != 0 {
            return Err(Error::MalformedSparse(format!(
                "expected {} offsets starting at 0",
                rows + 1
            )));
        }
        if indices.len() != values.len() || *offsets.last().unwrap() != indices.len() {
            return Err(Error::MalformedSparse(
                "offsets, indices and values disagree on nnz".into(),
            ));
        }
        for r in 0..rows {
            if offsets[r] > offsets[r + 1] {
                return Err(Error::MalformedSparse(format!("offsets decrease at row {r}")));
            }
            let cols_in_row = &indices[offsets[r]..offsets[r + 1]];
            if cols_in_row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::MalformedSparse(format!(
                    "column indices in row {r} are not strictly increasing"
                )));
            }
            if let Some(&c) = cols_in_row.last() {
                if c >= cols {
                    return Err(Error::MalformedSparse(format!(
                        "column index {c} out of range in row {r}"
                    )));
                }
            }
            for (k, v) in values[offsets[r]..offsets[r + 1]].iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        row: r,
                        col: cols_in_row[k],
                    });
                }
            }
        }
        Ok(Self {
            rows,
            cols,
            offsets,
            indices,
            values,
        })
    }

    /// Builds from (row, col, value) triplets; duplicate positions are summed.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        for &(r, c, _) in &sorted {
            if r >= rows || c >= cols {
                return Err(Error::MalformedSparse(format!(
                    "triplet ({r}, {c}) outside {rows}x{cols}"
                )));
            }
        }
        sorted.sort_by_key(|t| (t.0, t.1));
        let mut offsets = vec![0usize; rows + 1];
        let mut indices: Vec<usize> = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            indices.push(c);
            values.push(v);
            offsets[r + 1] += 1;
            last = Some((r, c));
        }
        for r in 0..rows {
            offsets[r + 1] += offsets[r];
        }
        Self::from_csr(rows, cols, offsets, indices, values)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            offsets: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            offsets: vec![0; rows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Iterates `(col, value)` over the stored entries of row `r`.
    pub fn row_iter(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.offsets[r]..self.offsets[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.offsets[r]..self.offsets[r + 1];
        match self.indices[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row_iter(r) {
                out.set(r, c, v);
            }
        }
        out
    }

    /// Sparse-dense product `self * dense`.
    pub fn spmm(&self, dense: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != dense.rows() {
            return Err(Error::dims("spmm", (self.rows, self.cols), dense.shape()));
        }
        let width = dense.cols();
        let mut out = DenseMatrix::zeros(self.rows, width);
        for r in 0..self.rows {
            let out_row = out.row_mut(r);
            for (c, v) in self.row_iter(r) {
                for (o, &d) in out_row.iter_mut().zip(dense.row(c)) {
                    *o += v * d;
                }
            }
        }
        Ok(out)
    }

    /// Same sparsity pattern with every stored value squared.
    pub fn hadamard_square(&self) -> SparseMatrix {
        SparseMatrix {
            values: self.values.iter().map(|v| v * v).collect(),
            ..self.clone()
        }
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut triplets = Vec::with_capacity(self.nnz());
        for r in 0..self.rows {
            for (c, v) in self.row_iter(r) {
                triplets.push((c, r, v));
            }
        }
        SparseMatrix::from_triplets(self.cols, self.rows, &triplets)
            .expect("transpose of a valid matrix is valid")
    }
}

/// Sparse-dense product; free-function form of [`SparseMatrix::spmm`].
pub fn spmm(s: &SparseMatrix, d: &DenseMatrix) -> Result<DenseMatrix> {
    s.spmm(d)
}

pub fn matmul(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    a.matmul(b)
}

pub fn hadamard_sparse(s: &SparseMatrix) -> SparseMatrix {
    s.hadamard_square()
}

pub fn hadamard_dense(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    a.hadamard(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive_matmul(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
        let mut out = vec![0.0; a.rows() * b.cols()];
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a.get(i, k) * b.get(k, j);
                }
                out[i * b.cols() + j] = s;
            }
        }
        DenseMatrix::new(a.rows(), b.cols(), out).unwrap()
    }

    fn random_dense(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DenseMatrix {
        DenseMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_sparse(rng: &mut ChaCha8Rng, r: usize, c: usize, density: f64) -> SparseMatrix {
        let mut t = Vec::new();
        for i in 0..r {
            for j in 0..c {
                if rng.random::<f64>() < density {
                    t.push((i, j, rng.random_range(-2.0..2.0)));
                }
            }
        }
        SparseMatrix::from_triplets(r, c, &t).unwrap()
    }

    #[test]
    fn rejects_non_finite_and_bad_length() {
        assert!(matches!(
            DenseMatrix::new(1, 2, vec![1.0, f64::NAN]),
            Err(Error::NonFinite { row: 0, col: 1 })
        ));
        assert!(DenseMatrix::new(2, 2, vec![1.0]).is_err());
        assert!(SparseMatrix::from_csr(1, 2, vec![0, 2], vec![1, 0], vec![1.0, 1.0]).is_err());
        assert!(SparseMatrix::from_csr(1, 2, vec![0, 1], vec![2], vec![1.0]).is_err());
    }

    #[test]
    fn spmm_identity_and_zero() {
        let d = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        assert_eq!(SparseMatrix::identity(3).spmm(&d).unwrap(), d);
        assert_eq!(
            SparseMatrix::zeros(3, 3).spmm(&d).unwrap(),
            DenseMatrix::zeros(3, 2)
        );
        assert!(matches!(
            SparseMatrix::identity(2).spmm(&d),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn spmm_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = random_sparse(&mut rng, 5, 5, 0.4);
        let d = random_dense(&mut rng, 5, 3);
        let got = s.spmm(&d).unwrap();
        let want = naive_matmul(&s.to_dense(), &d);
        assert!(got.max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn matmul_cases() {
        let one = |v| DenseMatrix::new(1, 1, vec![v]).unwrap();
        assert_eq!(one(2.0).matmul(&one(3.0)).unwrap(), one(6.0));

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_dense(&mut rng, 4, 3);
        let b = random_dense(&mut rng, 3, 2);
        assert_eq!(a.matmul(&DenseMatrix::identity(3)).unwrap(), a);
        assert!(a.matmul(&b).unwrap().max_abs_diff(&naive_matmul(&a, &b)) < 1e-12);
        assert!(a.matmul(&a).is_err());

        let c = random_dense(&mut rng, 4, 2);
        let tn = a.matmul_tn(&c).unwrap();
        assert!(tn.max_abs_diff(&naive_matmul(&a.transpose(), &c)) < 1e-12);
        let nt = c.matmul_nt(&b).unwrap();
        assert!(nt.max_abs_diff(&naive_matmul(&c, &b.transpose())) < 1e-12);
    }

    #[test]
    fn hadamard_cases() {
        let s = SparseMatrix::from_triplets(2, 2, &[(0, 1, 0.5)]).unwrap();
        assert_eq!(s.hadamard_square().get(0, 1), 0.25);
        assert_eq!(SparseMatrix::identity(4).hadamard_square(), SparseMatrix::identity(4));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = random_sparse(&mut rng, 6, 4, 0.5);
        let want = r.to_dense().map(|v| v * v);
        assert_eq!(hadamard_sparse(&r).to_dense(), want);

        let a = random_dense(&mut rng, 3, 4);
        let b = random_dense(&mut rng, 3, 4);
        assert_eq!(a.hadamard(&DenseMatrix::filled(3, 4, 1.0)).unwrap(), a);
        assert_eq!(a.hadamard(&DenseMatrix::zeros(3, 4)).unwrap(), DenseMatrix::zeros(3, 4));
        let got = hadamard_dense(&a, &b).unwrap();
        for i in 0..3 {
            for j in 0..4 {
                assert_eq!(got.get(i, j), a.get(i, j) * b.get(i, j));
            }
        }
        assert!(a.hadamard(&DenseMatrix::zeros(4, 3)).is_err());
    }

    #[test]
    fn triplets_sum_duplicates_and_transpose() {
        let s = SparseMatrix::from_triplets(2, 3, &[(1, 2, 1.0), (0, 0, 2.0), (1, 2, 0.5)]).unwrap();
        assert_eq!(s.nnz(), 2);
        assert_eq!(s.get(1, 2), 1.5);
        assert_eq!(s.transpose().to_dense(), s.to_dense().transpose());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn spmm_agrees_with_densified_matmul(
            seed in any::<u64>(),
            r in 1usize..50,
            c in 1usize..50,
            w in 1usize..8,
            density in 0.0f64..1.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_sparse(&mut rng, r, c, density);
            let d = random_dense(&mut rng, c, w);
            let got = s.spmm(&d).unwrap();
            let want = naive_matmul(&s.to_dense(), &d);
            let scale = want.data().iter().fold(1.0f64, |m, v| m.max(v.abs()));
            prop_assert!(got.max_abs_diff(&want) <= 1e-12 * scale);
            // fixed summation order
            prop_assert_eq!(got, s.spmm(&d).unwrap());
        }
    }
}
