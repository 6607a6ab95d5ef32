//! Dense row-major f64 matrices sized for small-model math.
//!
//! Everything downstream treats feature vectors as matrix rows, so a linear
//! layer with weights `W` (in x out) is `x.matmul(&w)`. The `*_acc` free
//! functions accumulate into an existing matrix; backward passes use them to
//! sum gradients without reallocating.

use alloc::vec;
use alloc::vec::Vec;

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "shape/data mismatch");
        Mat { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Mat { rows: r, cols: c, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.at(i, j));
            }
        }
        out
    }

    /// self (m x k) times rhs (k x n).
    pub fn matmul(&self, rhs: &Mat) -> Mat {
        let mut out = Mat::zeros(self.rows, rhs.cols);
        matmul_acc(self, rhs, &mut out);
        out
    }

    pub fn add_assign(&mut self, other: &Mat) {
        assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in &mut self.data {
            *a *= s;
        }
    }

    /// Adds `b` to every row; used for bias terms.
    pub fn add_row_bias(&mut self, b: &[f64]) {
        assert_eq!(b.len(), self.cols);
        for i in 0..self.rows {
            for (x, bj) in self.row_mut(i).iter_mut().zip(b) {
                *x += bj;
            }
        }
    }
}

impl core::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

/// out += a (m x k) * b (k x n). The i-k-j loop keeps the inner update a
/// contiguous axpy over rows of `b`, which the optimizer vectorizes.
pub fn matmul_acc(a: &Mat, b: &Mat, out: &mut Mat) {
    assert_eq!(a.cols, b.rows, "inner dims");
    assert_eq!(out.rows, a.rows);
    assert_eq!(out.cols, b.cols);
    let n = b.cols;
    for i in 0..a.rows {
        let arow = a.row(i);
        let orow = out.row_mut(i);
        for (k, &aik) in arow.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let brow = &b.data[k * n..(k + 1) * n];
            for j in 0..n {
                orow[j] += aik * brow[j];
            }
        }
    }
}

/// out += a^T (a is k x m) * b (k x n); the usual form for weight gradients.
pub fn matmul_tn_acc(a: &Mat, b: &Mat, out: &mut Mat) {
    assert_eq!(a.rows, b.rows, "inner dims");
    assert_eq!(out.rows, a.cols);
    assert_eq!(out.cols, b.cols);
    let n = b.cols;
    for k in 0..a.rows {
        let arow = a.row(k);
        let brow = b.row(k);
        for (i, &aki) in arow.iter().enumerate() {
            if aki == 0.0 {
                continue;
            }
            let orow = &mut out.data[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += aki * brow[j];
            }
        }
    }
}

/// out += a (m x k) * b^T (b is n x k); the usual form for input gradients.
pub fn matmul_nt_acc(a: &Mat, b: &Mat, out: &mut Mat) {
    assert_eq!(a.cols, b.cols, "inner dims");
    assert_eq!(out.rows, a.rows);
    assert_eq!(out.cols, b.rows);
    for i in 0..a.rows {
        let arow = a.row(i);
        let orow = out.row_mut(i);
        for j in 0..b.rows {
            orow[j] += dot(arow, b.row(j));
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// dst += s * src.
pub fn axpy(dst: &mut [f64], src: &[f64], s: f64) {
    assert_eq!(dst.len(), src.len());
    for (d, x) in dst.iter_mut().zip(src) {
        *d += s * x;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[Vec<f64>]) -> Mat {
        Mat::from_rows(rows)
    }

    #[test]
    fn matmul_matches_hand_product() {
        let a = m(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let b = m(&[vec![5.0, 6.0], vec![7.0, 8.0]]);
        let c = a.matmul(&b);
        assert_eq!(c.row(0), &[19.0, 22.0]);
        assert_eq!(c.row(1), &[43.0, 50.0]);
    }

    #[test]
    fn transposed_products_agree_with_explicit_transpose() {
        let a = m(&[vec![1.0, -2.0, 0.5], vec![0.0, 3.0, 1.0]]); // 2x3
        let b = m(&[vec![2.0, 1.0], vec![-1.0, 4.0]]); // 2x2
        let mut tn = Mat::zeros(3, 2);
        matmul_tn_acc(&a, &b, &mut tn);
        assert_eq!(tn, a.transpose().matmul(&b));

        let c = m(&[vec![1.0, 0.0, 2.0], vec![0.5, -1.0, 3.0]]); // 2x3
        let mut nt = Mat::zeros(2, 2);
        matmul_nt_acc(&a, &c, &mut nt);
        assert_eq!(nt, a.matmul(&c.transpose()));
    }

    #[test]
    fn bias_adds_to_every_row() {
        let mut a = Mat::zeros(2, 3);
        a.add_row_bias(&[1.0, 2.0, 3.0]);
        assert_eq!(a.row(0), &[1.0, 2.0, 3.0]);
        assert_eq!(a.row(1), &[1.0, 2.0, 3.0]);
    }

    #[test]
    #[should_panic(expected = "inner dims")]
    fn mismatched_shapes_panic() {
        let a = Mat::zeros(2, 3);
        let b = Mat::zeros(2, 2);
        let _ = a.matmul(&b);
    }
}
