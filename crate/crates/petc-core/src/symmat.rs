//! Dense symmetric-matrix kernel: block assembly, Jacobi eigendecomposition,
//! semidefiniteness margins and projection onto the negative-semidefinite cone.
//!
//! Everything here is small and dense (problem sizes stay below ~20), so the
//! implementation favors robustness and determinism over asymptotics.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MatError {
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("matrix is singular or not positive definite")]
    Singular,
    #[error("block ({row},{col}) has size {got_rows}x{got_cols}, layout expects {want_rows}x{want_cols}")]
    BadBlock {
        row: usize,
        col: usize,
        got_rows: usize,
        got_cols: usize,
        want_rows: usize,
        want_cols: usize,
    },
    #[error("block ({0},{1}) lies below the diagonal; supply only upper-triangle blocks")]
    LowerBlock(usize, usize),
}

/// General dense matrix, row-major. Plumbing for the rectangular factors
/// (gains, observer matrices, stacked closed-loop blocks).
#[derive(Debug, Clone, PartialEq)]
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

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            data.extend_from_slice(row);
        }
        Mat {
            rows: r,
            cols: c,
            data,
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Mat { rows, cols, data }
    }

    /// Column vector from a slice.
    pub fn col_vec(v: &[f64]) -> Self {
        Mat {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    /// Row vector from a slice.
    pub fn row_vec(v: &[f64]) -> Self {
        Mat {
            rows: 1,
            cols: v.len(),
            data: v.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn scale(&self, s: f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Mat {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn sub(&self, other: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Mat {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn mul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "inner dimension mismatch");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len());
        let mut out = vec![0.0; self.rows];
        for i in 0..self.rows {
            let mut acc = 0.0;
            for j in 0..self.cols {
                acc += self[(i, j)] * v[j];
            }
            out[i] = acc;
        }
        out
    }

    /// Vertical stack: `[self; other]`.
    pub fn vstack(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.cols);
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Mat {
            rows: self.rows + other.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    /// Solve `X * A = B` for X (i.e. X = B A^{-1}) by Gaussian elimination
    /// with partial pivoting on `A^T X^T = B^T`.
    pub fn div_right(b: &Mat, a: &Mat) -> Result<Mat, MatError> {
        if a.rows != a.cols {
            return Err(MatError::DimMismatch("A must be square".into()));
        }
        if b.cols != a.rows {
            return Err(MatError::DimMismatch("B cols must match A".into()));
        }
        let xt = solve_multi(&a.transpose(), &b.transpose())?;
        Ok(xt.transpose())
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Solve `A X = B` for X with partial pivoting; A square.
fn solve_multi(a: &Mat, b: &Mat) -> Result<Mat, MatError> {
    let n = a.rows;
    assert_eq!(b.rows, n);
    let mut lu = a.clone();
    let mut x = b.clone();
    for col in 0..n {
        let mut piv = col;
        let mut best = lu[(col, col)].abs();
        for r in col + 1..n {
            if lu[(r, col)].abs() > best {
                best = lu[(r, col)].abs();
                piv = r;
            }
        }
        if best == 0.0 {
            return Err(MatError::Singular);
        }
        if piv != col {
            for j in 0..n {
                let t = lu[(col, j)];
                lu[(col, j)] = lu[(piv, j)];
                lu[(piv, j)] = t;
            }
            for j in 0..x.cols {
                let t = x[(col, j)];
                x[(col, j)] = x[(piv, j)];
                x[(piv, j)] = t;
            }
        }
        for r in col + 1..n {
            let f = lu[(r, col)] / lu[(col, col)];
            if f == 0.0 {
                continue;
            }
            lu[(r, col)] = 0.0;
            for j in col + 1..n {
                lu[(r, j)] -= f * lu[(col, j)];
            }
            for j in 0..x.cols {
                x[(r, j)] -= f * x[(col, j)];
            }
        }
    }
    for col in (0..n).rev() {
        for j in 0..x.cols {
            let mut acc = x[(col, j)];
            for k in col + 1..n {
                acc -= lu[(col, k)] * x[(k, j)];
            }
            x[(col, j)] = acc / lu[(col, col)];
        }
    }
    Ok(x)
}

/// Dense symmetric matrix. Symmetry holds exactly: all mutation paths write
/// both (i,j) and (j,i) from a single value.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        SymMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = SymMatrix::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn scaled_identity(n: usize, s: f64) -> Self {
        let mut m = SymMatrix::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = s;
        }
        m
    }

    pub fn diag(d: &[f64]) -> Self {
        let n = d.len();
        let mut m = SymMatrix::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = d[i];
        }
        m
    }

    /// Build from the upper triangle, row-major: `[a00, a01, .., a0{n-1}, a11, ..]`.
    pub fn from_upper(n: usize, upper: &[f64]) -> Self {
        assert_eq!(upper.len(), n * (n + 1) / 2);
        let mut m = SymMatrix::zeros(n);
        let mut k = 0;
        for i in 0..n {
            for j in i..n {
                m.data[i * n + j] = upper[k];
                m.data[j * n + i] = upper[k];
                k += 1;
            }
        }
        m
    }

    /// Build from full row data; the upper triangle is authoritative, the
    /// lower triangle is mirrored from it.
    pub fn from_rows_upper(rows: &[&[f64]]) -> Self {
        let n = rows.len();
        let mut m = SymMatrix::zeros(n);
        for i in 0..n {
            assert_eq!(rows[i].len(), n);
            for j in i..n {
                m.data[i * n + j] = rows[i][j];
                m.data[j * n + i] = rows[i][j];
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set_sym(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn add_sym(&mut self, i: usize, j: usize, v: f64) {
        if i == j {
            self.data[i * self.n + i] += v;
        } else {
            self.data[i * self.n + j] += v;
            self.data[j * self.n + i] += v;
        }
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        assert_eq!(self.n, other.n);
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        SymMatrix { n: self.n, data }
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        assert_eq!(self.n, other.n);
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        SymMatrix { n: self.n, data }
    }

    pub fn scale(&self, s: f64) -> SymMatrix {
        SymMatrix {
            n: self.n,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// In-place `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &SymMatrix) {
        assert_eq!(self.n, other.n);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Frobenius inner product `<self, other>`.
    pub fn dot(&self, other: &SymMatrix) -> f64 {
        assert_eq!(self.n, other.n);
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// Quadratic form x' M x.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.n);
        let mut acc = 0.0;
        for i in 0..self.n {
            let mut row = 0.0;
            for j in 0..self.n {
                row += self.get(i, j) * x[j];
            }
            acc += x[i] * row;
        }
        acc
    }

    pub fn to_mat(&self) -> Mat {
        Mat {
            rows: self.n,
            cols: self.n,
            data: self.data.clone(),
        }
    }

    /// Symmetrize a square matrix exactly: (M + M')/2 with mirrored writes.
    pub fn from_mat_symmetrized(m: &Mat) -> SymMatrix {
        assert_eq!(m.rows(), m.cols());
        let n = m.rows();
        let mut out = SymMatrix::zeros(n);
        for i in 0..n {
            out.data[i * n + i] = m[(i, i)];
            for j in i + 1..n {
                let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                out.data[i * n + j] = v;
                out.data[j * n + i] = v;
            }
        }
        out
    }

    /// Congruence S' M S for rectangular S (rows of S match M's dimension).
    /// The result is made exactly symmetric by mirrored writes.
    pub fn congruence(&self, s: &Mat) -> SymMatrix {
        assert_eq!(s.rows(), self.n, "S rows must match M dimension");
        let ms = self.to_mat().mul(s);
        let n = s.cols();
        let mut out = SymMatrix::zeros(n);
        for i in 0..n {
            for j in i..n {
                let mut acc = 0.0;
                for k in 0..s.rows() {
                    acc += s[(k, i)] * ms[(k, j)];
                }
                out.data[i * n + j] = acc;
                out.data[j * n + i] = acc;
            }
        }
        out
    }
}

/// Eigendecomposition of a symmetric matrix: ascending eigenvalues with an
/// orthonormal basis stored as columns of `vectors`.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub vectors: Mat,
}

impl Spectrum {
    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// Rebuild Q diag(v) Q' for modified eigenvalues.
    pub fn reconstruct(&self, values: &[f64]) -> SymMatrix {
        let n = self.values.len();
        assert_eq!(values.len(), n);
        let q = &self.vectors;
        let mut out = SymMatrix::zeros(n);
        for i in 0..n {
            for j in i..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += q[(i, k)] * values[k] * q[(j, k)];
                }
                out.set_sym(i, j, acc);
            }
        }
        out
    }
}

const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigendecomposition. Converges for every symmetric input;
/// the sweep stops when the off-diagonal Frobenius norm falls below
/// `1e-12` relative to the matrix norm.
pub fn eig_sym(m: &SymMatrix) -> Spectrum {
    let n = m.n();
    let mut a = m.clone();
    let mut q = Mat::identity(n);
    if n == 0 {
        return Spectrum {
            values: vec![],
            vectors: q,
        };
    }
    let scale = a.frobenius().max(1.0);
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += a.get(i, j) * a.get(i, j);
            }
        }
        if (2.0 * off).sqrt() <= JACOBI_TOL * scale {
            break;
        }
        for p in 0..n {
            for r in p + 1..n {
                let apq = a.get(p, r);
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(r, r);
                let theta = 0.5 * (aqq - app) / apq;
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                    sign / (theta.abs() + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // rotate rows/cols p and r
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, r);
                    a.set_sym(k, p, c * akp - s * akq);
                    a.set_sym(k, r, s * akp + c * akq);
                }
                // fix the 2x2 pivot block analytically
                let new_pp = c * c * app - 2.0 * s * c * apq + s * s * aqq;
                let new_qq = s * s * app + 2.0 * s * c * apq + c * c * aqq;
                a.set_sym(p, p, new_pp);
                a.set_sym(r, r, new_qq);
                a.set_sym(p, r, 0.0);
                for k in 0..n {
                    let qkp = q[(k, p)];
                    let qkq = q[(k, r)];
                    q[(k, p)] = c * qkp - s * qkq;
                    q[(k, r)] = s * qkp + c * qkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(i, i).partial_cmp(&a.get(j, j)).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| a.get(i, i)).collect();
    let mut vectors = Mat::zeros(n, n);
    for (newcol, &oldcol) in order.iter().enumerate() {
        for k in 0..n {
            vectors[(k, newcol)] = q[(k, oldcol)];
        }
    }
    Spectrum { values, vectors }
}

/// Largest eigenvalue: the matrix is accepted as negative semidefinite when
/// this margin is at or below the caller's tolerance.
pub fn nsd_margin(m: &SymMatrix) -> f64 {
    eig_sym(m).max()
}

/// Nearest (Frobenius) symmetric matrix whose eigenvalues all lie at or
/// below `margin`, obtained by eigenvalue clamping.
pub fn project_nsd(m: &SymMatrix, margin: f64) -> SymMatrix {
    let spec = eig_sym(m);
    let clamped: Vec<f64> = spec.values.iter().map(|&v| v.min(margin)).collect();
    spec.reconstruct(&clamped)
}

/// Projection onto matrices with eigenvalues at or above `floor` (used for
/// positive-definite variable domains).
pub fn project_eig_floor(m: &SymMatrix, floor: f64) -> SymMatrix {
    let spec = eig_sym(m);
    let clamped: Vec<f64> = spec.values.iter().map(|&v| v.max(floor)).collect();
    spec.reconstruct(&clamped)
}

/// Check positive definiteness with a relative eigenvalue tolerance.
pub fn is_positive_definite(m: &SymMatrix) -> bool {
    let spec = eig_sym(m);
    spec.min() > 1e-12 * spec.max().abs().max(1.0)
}

/// Block partition of a symmetric matrix: `sizes[i]` is the side of block
/// row/column `i`. Lower-triangle blocks always mirror (transposed) their
/// upper counterparts.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockLayout {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
}

impl BlockLayout {
    pub fn new(sizes: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(sizes.len() + 1);
        let mut acc = 0;
        for &s in sizes {
            offsets.push(acc);
            acc += s;
        }
        offsets.push(acc);
        BlockLayout {
            sizes: sizes.to_vec(),
            offsets,
        }
    }

    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn n_blocks(&self) -> usize {
        self.sizes.len()
    }

    pub fn size(&self, i: usize) -> usize {
        self.sizes[i]
    }

    pub fn offset(&self, i: usize) -> usize {
        self.offsets[i]
    }
}

/// Assemble a symmetric matrix from named upper-triangle blocks; mirrored
/// blocks are filled with the transpose, and diagonal blocks take their
/// upper triangle as authoritative so the result is symmetric bit-for-bit.
pub fn assemble(
    layout: &BlockLayout,
    blocks: &[(usize, usize, Mat)],
) -> Result<SymMatrix, MatError> {
    let mut out = SymMatrix::zeros(layout.dim());
    for (bi, bj, m) in blocks {
        let (bi, bj) = (*bi, *bj);
        if bi > bj {
            return Err(MatError::LowerBlock(bi, bj));
        }
        let (wr, wc) = (layout.size(bi), layout.size(bj));
        if m.rows() != wr || m.cols() != wc {
            return Err(MatError::BadBlock {
                row: bi,
                col: bj,
                got_rows: m.rows(),
                got_cols: m.cols(),
                want_rows: wr,
                want_cols: wc,
            });
        }
        let (ro, co) = (layout.offset(bi), layout.offset(bj));
        if bi == bj {
            for i in 0..wr {
                for j in i..wc {
                    out.add_sym(ro + i, co + j, m[(i, j)]);
                }
            }
        } else {
            for i in 0..wr {
                for j in 0..wc {
                    out.add_sym(ro + i, co + j, m[(i, j)]);
                }
            }
        }
    }
    Ok(out)
}
