use super::matrix::{dot, norm2, Matrix};
use super::qr::Qr;
use crate::error::{Error, Result};

/// Sweep cap for the one-sided Jacobi iteration.
pub const JACOBI_SWEEP_CAP: usize = 100;
/// Iteration cap for power iteration.
pub const POWER_ITER_CAP: usize = 10_000;

/// Thin singular value decomposition `A = U diag(s) Vt`.
#[derive(Clone, Debug)]
pub struct ThinSvd {
    pub u: Matrix,
    pub singular_values: Vec<f64>,
    pub vt: Matrix,
}

impl ThinSvd {
    pub fn sigma_max(&self) -> f64 {
        self.singular_values.first().copied().unwrap_or(0.0)
    }

    pub fn sigma_min(&self) -> f64 {
        self.singular_values.last().copied().unwrap_or(0.0)
    }

    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for i in 0..us.nrows() {
            for (v, s) in us.row_mut(i).iter_mut().zip(&self.singular_values) {
                *v *= s;
            }
        }
        us.matmul(&self.vt)
    }
}

/// Thin SVD by Householder QR followed by one-sided Jacobi on `R`.
///
/// ```
/// use sketchreg::linalg::{thin_svd, Matrix};
/// let a = Matrix::from_rows(&[vec![3.0, 0.0], vec![0.0, 1.0]]).unwrap();
/// let s = thin_svd(&a).unwrap();
/// assert!((s.singular_values[0] - 3.0).abs() < 1e-14);
/// assert!((s.singular_values[1] - 1.0).abs() < 1e-14);
/// ```
pub fn thin_svd(a: &Matrix) -> Result<ThinSvd> {
    if !a.is_finite() {
        return Err(Error::NonFinite);
    }
    if a.nrows() < a.ncols() {
        let t = thin_svd(&a.transpose())?;
        return Ok(ThinSvd { u: t.vt.transpose(), singular_values: t.singular_values, vt: t.u.transpose() });
    }
    let qr = Qr::new(a)?;
    let (ur, s, v) = jacobi(qr.r())?;
    Ok(ThinSvd { u: qr.q_thin().matmul(&ur), singular_values: s, vt: v.transpose() })
}

/// One-sided (Hestenes) Jacobi on a square matrix; returns `(U, s, V)`.
fn jacobi(r: &Matrix) -> Result<(Matrix, Vec<f64>, Matrix)> {
    let k = r.ncols();
    let mut w: Vec<Vec<f64>> = (0..k).map(|j| r.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..k)
        .map(|j| {
            let mut e = vec![0.0; k];
            e[j] = 1.0;
            e
        })
        .collect();
    let tol = 1e-15 * (k.max(1) as f64);
    let mut converged = k < 2;
    for _ in 0..JACOBI_SWEEP_CAP {
        let mut rotated = false;
        for p in 0..k {
            for q in (p + 1)..k {
                let alpha = dot(&w[p], &w[p]);
                let beta = dot(&w[q], &w[q]);
                let gamma = dot(&w[p], &w[q]);
                if alpha == 0.0 || beta == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence { cap: JACOBI_SWEEP_CAP });
    }

    let mut order: Vec<usize> = (0..k).collect();
    let norms: Vec<f64> = w.iter().map(|c| norm2(c)).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
    let smax = order.first().map_or(0.0, |&i| norms[i]);
    let floor = smax * f64::EPSILON * (k.max(1) as f64);

    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut s = Vec::with_capacity(k);
    let mut vm = Matrix::zeros(k, k);
    for (dst, &src) in order.iter().enumerate() {
        let sigma = norms[src];
        vm.set_column(dst, &v[src]);
        if sigma > floor {
            s.push(sigma);
            u_cols.push(w[src].iter().map(|x| x / sigma).collect());
        } else {
            s.push(0.0);
            u_cols.push(Vec::new());
        }
    }
    complete_orthonormal(&mut u_cols, k);
    let mut um = Matrix::zeros(k, k);
    for (j, c) in u_cols.iter().enumerate() {
        um.set_column(j, c);
    }
    Ok((um, s, vm))
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    for (a, b) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
        let (x, y) = (*a, *b);
        *a = c * x - s * y;
        *b = s * x + c * y;
    }
}

/// Fills empty slots with unit vectors orthogonal to the filled ones.
fn complete_orthonormal(cols: &mut [Vec<f64>], dim: usize) {
    let mut candidate = 0;
    for j in 0..cols.len() {
        if !cols[j].is_empty() {
            continue;
        }
        while candidate < dim {
            let mut e = vec![0.0; dim];
            e[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for c in cols.iter().filter(|c| !c.is_empty()) {
                    let d = dot(&e, c);
                    e.iter_mut().zip(c).for_each(|(x, y)| *x -= d * y);
                }
            }
            let n = norm2(&e);
            if n > 0.5 {
                cols[j] = e.iter().map(|x| x / n).collect();
                break;
            }
        }
    }
}

/// Largest singular value by power iteration on `AᵀA`, stopping once the
/// estimate changes by less than `1e-10` relative.
pub fn spectral_norm(a: &Matrix) -> Result<f64> {
    if !a.is_finite() {
        return Err(Error::NonFinite);
    }
    let k = a.ncols();
    if k == 0 || a.nrows() == 0 || a.max_abs() == 0.0 {
        return Ok(0.0);
    }
    let mut v: Vec<f64> = (0..k).map(|i| 1.0 + ((i as u64 * 2_654_435_761) % 997) as f64 / 997.0).collect();
    let n0 = norm2(&v);
    v.iter_mut().for_each(|x| *x /= n0);
    let mut sigma = 0.0;
    for _ in 0..POWER_ITER_CAP {
        let w = a.t_matvec(&a.matvec(&v));
        let lambda = norm2(&w);
        if lambda == 0.0 {
            return Ok(0.0);
        }
        let next = lambda.sqrt();
        v = w.into_iter().map(|x| x / lambda).collect();
        if (next - sigma).abs() <= 1e-10 * next {
            return Ok(next);
        }
        sigma = next;
    }
    Err(Error::NoConvergence { cap: POWER_ITER_CAP })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_orthonormal_cols(u: &Matrix) {
        let g = u.gram();
        assert!(g.sub(&Matrix::identity(u.ncols())).max_abs() < 1e-12, "{g:?}");
    }

    #[test]
    fn orthonormal_input_has_unit_singular_values() {
        let c = 0.6;
        let s = 0.8;
        let u = Matrix::from_rows(&[vec![c, -s], vec![s, c], vec![0.0, 0.0]]).unwrap();
        let svd = thin_svd(&u).unwrap();
        for v in &svd.singular_values {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn small_fixture_reconstructs() {
        let a = Matrix::from_rows(&[vec![0.3, -1.2], vec![2.0, 0.7], vec![-0.4, 1.1]]).unwrap();
        let svd = thin_svd(&a).unwrap();
        assert!(svd.reconstruct().sub(&a).max_abs() < 1e-12);
        assert_orthonormal_cols(&svd.u);
        assert_orthonormal_cols(&svd.vt.transpose());
        assert!(svd.singular_values[0] >= svd.singular_values[1]);
    }

    #[test]
    fn rank_deficient_keeps_orthonormal_u() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]]).unwrap();
        let svd = thin_svd(&a).unwrap();
        assert_eq!(svd.singular_values[1], 0.0);
        assert_orthonormal_cols(&svd.u);
        assert!(svd.reconstruct().sub(&a).max_abs() < 1e-12);
    }

    #[test]
    fn wide_input_is_transposed() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0, 2.0], vec![0.0, 1.0, -1.0]]).unwrap();
        let svd = thin_svd(&a).unwrap();
        assert_eq!(svd.u.nrows(), 2);
        assert_eq!(svd.vt.ncols(), 3);
        assert!(svd.reconstruct().sub(&a).max_abs() < 1e-12);
    }

    #[test]
    fn power_iteration_matches_svd() {
        let a = Matrix::from_fn(7, 4, |i, j| ((i * 5 + j * 11) % 13) as f64 / 3.0 - 2.0);
        let p = spectral_norm(&a).unwrap();
        let s = thin_svd(&a).unwrap().sigma_max();
        assert!((p - s).abs() <= 1e-8 * s);
        assert_eq!(spectral_norm(&Matrix::zeros(3, 2)).unwrap(), 0.0);
    }
}
