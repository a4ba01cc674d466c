use super::matrix::{dot, Matrix};
use crate::error::{Error, Result};

/// Relative tolerance on the diagonal of `R` below which a column counts as
/// linearly dependent on its predecessors.
pub const RANK_TOL: f64 = 1e-12;

/// Householder QR factorization of a tall matrix.
#[derive(Clone, Debug)]
pub struct Qr {
    rows: usize,
    cols: usize,
    /// Unit Householder vectors; reflector `j` acts on rows `j..rows`.
    reflectors: Vec<Vec<f64>>,
    r: Matrix,
}

impl Qr {
    pub fn new(a: &Matrix) -> Result<Qr> {
        let (n, k) = (a.nrows(), a.ncols());
        if n < k {
            return Err(Error::DimensionMismatch { expected: k, found: n });
        }
        if !a.is_finite() {
            return Err(Error::NonFinite);
        }
        // Column-major working copy keeps the reflector updates contiguous.
        let mut cols: Vec<Vec<f64>> = (0..k).map(|j| a.column(j)).collect();
        let mut reflectors = Vec::with_capacity(k);
        for j in 0..k {
            let x = &cols[j][j..];
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut v = x.to_vec();
            if norm > 0.0 {
                let alpha = if x[0] >= 0.0 { -norm } else { norm };
                v[0] -= alpha;
                let vn = v.iter().map(|t| t * t).sum::<f64>().sqrt();
                if vn > 0.0 {
                    v.iter_mut().for_each(|t| *t /= vn);
                } else {
                    v.iter_mut().for_each(|t| *t = 0.0);
                }
            } else {
                v.iter_mut().for_each(|t| *t = 0.0);
            }
            for col in cols.iter_mut().skip(j) {
                reflect(&v, &mut col[j..]);
            }
            reflectors.push(v);
        }
        let r = Matrix::from_fn(k, k, |i, j| if i <= j { cols[j][i] } else { 0.0 });
        Ok(Qr { rows: n, cols: k, reflectors, r })
    }

    pub fn r(&self) -> &Matrix {
        &self.r
    }

    /// Index of the first diagonal entry of `R` failing the rank tolerance.
    pub fn rank_deficiency(&self) -> Option<usize> {
        let d: Vec<f64> = self.r.diagonal().iter().map(|v| v.abs()).collect();
        let largest = d.iter().cloned().fold(0.0, f64::max);
        d.iter().position(|&v| !(v > RANK_TOL * largest))
    }

    pub fn check_rank(&self) -> Result<()> {
        match self.rank_deficiency() {
            Some(index) => Err(Error::RankDeficient { index }),
            None => Ok(()),
        }
    }

    /// `Qᵀ b` for the full orthogonal `Q`.
    pub fn qt_apply(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.rows, "qt_apply length mismatch");
        let mut out = b.to_vec();
        for (j, v) in self.reflectors.iter().enumerate() {
            reflect(v, &mut out[j..]);
        }
        out
    }

    /// `Q c` for the full orthogonal `Q`.
    pub fn q_apply(&self, c: &[f64]) -> Vec<f64> {
        assert_eq!(c.len(), self.rows, "q_apply length mismatch");
        let mut out = c.to_vec();
        for (j, v) in self.reflectors.iter().enumerate().rev() {
            reflect(v, &mut out[j..]);
        }
        out
    }

    /// Orthonormal basis of the column space, `n×k`.
    pub fn q_thin(&self) -> Matrix {
        let mut q = Matrix::zeros(self.rows, self.cols);
        let mut e = vec![0.0; self.rows];
        for j in 0..self.cols {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            q.set_column(j, &self.q_apply(&e));
        }
        q
    }

    /// Orthogonal projection of `b` onto the column space.
    pub fn project(&self, b: &[f64]) -> Vec<f64> {
        let mut c = self.qt_apply(b);
        c[self.cols..].iter_mut().for_each(|v| *v = 0.0);
        self.q_apply(&c)
    }

    /// Least-squares solution of `A x ≈ b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.check_rank()?;
        let c = self.qt_apply(b);
        Ok(back_substitute(&self.r, &c[..self.cols]))
    }

    /// `(AᵀA)^{-1} = R^{-1} R^{-T}`.
    pub fn gram_inverse(&self) -> Result<Matrix> {
        self.check_rank()?;
        let k = self.cols;
        let mut rinv = Matrix::zeros(k, k);
        let mut e = vec![0.0; k];
        for j in 0..k {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            rinv.set_column(j, &back_substitute(&self.r, &e));
        }
        let mut g = rinv.matmul(&rinv.transpose());
        g.symmetrize();
        Ok(g)
    }
}

fn reflect(v: &[f64], x: &mut [f64]) {
    let s = 2.0 * dot(v, x);
    if s != 0.0 {
        for (xi, vi) in x.iter_mut().zip(v) {
            *xi -= s * vi;
        }
    }
}

fn back_substitute(r: &Matrix, c: &[f64]) -> Vec<f64> {
    let k = c.len();
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = c[i];
        for j in (i + 1)..k {
            s -= r[(i, j)] * x[j];
        }
        x[i] = s / r[(i, i)];
    }
    x
}

/// Least-squares solve of `A x ≈ b` through Householder QR.
///
/// ```
/// use sketchreg::linalg::{qr_solve, Matrix};
/// let a = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0]]).unwrap();
/// let x = qr_solve(&a, &[0.0, 1.0, 2.0]).unwrap();
/// assert!((x[0]).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
/// ```
pub fn qr_solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.nrows() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), found: b.len() });
    }
    Qr::new(a)?.solve(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_mean() {
        let x = qr_solve(&Matrix::identity(3), &[1.0, 2.0, 3.0]).unwrap();
        for (a, b) in x.iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-14);
        }
        let ones = Matrix::from_fn(5, 1, |_, _| 1.0);
        let m = qr_solve(&ones, &[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert!((m[0] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn line_fit_matches_normal_equations() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let x = qr_solve(&a, &[0.0, 1.0, 2.0]).unwrap();
        assert!(x[0].abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn reports_the_dependent_column() {
        let a = Matrix::from_rows(&[
            vec![1.0, 2.0, 1.0],
            vec![1.0, 2.0, 0.0],
            vec![1.0, 2.0, 3.0],
            vec![1.0, 2.0, 1.0],
        ])
        .unwrap();
        assert_eq!(qr_solve(&a, &[1.0; 4]), Err(Error::RankDeficient { index: 1 }));
    }

    #[test]
    fn gram_inverse_inverts() {
        let a = Matrix::from_rows(&[vec![1.0, 0.5], vec![1.0, -1.0], vec![1.0, 2.0], vec![1.0, 0.0]])
            .unwrap();
        let g = a.gram();
        let prod = g.matmul(&Qr::new(&a).unwrap().gram_inverse().unwrap());
        assert!(prod.sub(&Matrix::identity(2)).max_abs() < 1e-13);
    }

    #[test]
    fn q_thin_is_orthonormal_and_projects() {
        let a = Matrix::from_fn(6, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 - 1.5 + (i == j) as u8 as f64);
        let qr = Qr::new(&a).unwrap();
        let q = qr.q_thin();
        assert!(q.gram().sub(&Matrix::identity(3)).max_abs() < 1e-14);
        assert!(q.matmul(qr.r()).sub(&a).max_abs() < 1e-13);
        let col = a.column(2);
        let p = qr.project(&col);
        for (x, y) in p.iter().zip(&col) {
            assert!((x - y).abs() < 1e-13);
        }
    }
}
