//! Dense complex linear algebra helpers.
//!
//! General-purpose routines work on `nalgebra::DMatrix<C64>`. The few kernels
//! on the planning hot path (`log2_det_hpd_in_place`) operate on flat
//! row-major slices to avoid allocation.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

/// Eigenvalues below `-PSD_TOL * max(1, |λ_max|)` reject a matrix as not PSD;
/// anything above is clamped to zero.
pub const PSD_TOL: f64 = 1e-12;

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Hermitian part `(A + Aᴴ) / 2`.
pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()).scale(0.5)
}

/// Principal square root of a Hermitian PSD matrix via eigendecomposition,
/// with slightly negative eigenvalues clamped to zero.
pub fn psd_sqrt(a: &CMat) -> Result<CMat> {
    let (vals, vecs) = hermitian_eigen(a)?;
    let d: Vec<C64> = vals.iter().map(|&v| C64::new(v.sqrt(), 0.0)).collect();
    let d = CMat::from_diagonal(&nalgebra::DVector::from_vec(d));
    Ok(&vecs * d * vecs.adjoint())
}

/// Eigenvalues (clamped at zero, ascending) and eigenvectors of a Hermitian
/// PSD matrix. Errors when an eigenvalue is significantly negative.
pub fn hermitian_eigen(a: &CMat) -> Result<(Vec<f64>, CMat)> {
    let eig = nalgebra::SymmetricEigen::new(hermitian_part(a));
    let scale = eig.eigenvalues.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let mut vals = Vec::with_capacity(order.len());
    let mut vecs = CMat::zeros(a.nrows(), a.ncols());
    for (dst, &src) in order.iter().enumerate() {
        let v = eig.eigenvalues[src];
        if v < -PSD_TOL * scale {
            return Err(Error::NotPsd { min_eigenvalue: v });
        }
        vals.push(v.max(0.0));
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((vals, vecs))
}

/// `log₂ det(A)` for Hermitian positive definite `A`.
pub fn log2_det_hpd(a: &CMat) -> Result<f64> {
    let n = a.nrows();
    let mut buf: Vec<C64> = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            buf.push(a[(i, j)]);
        }
    }
    log2_det_hpd_in_place(&mut buf, n)
}

/// Cholesky-based `log₂ det` of an `n×n` Hermitian PD matrix stored
/// row-major in `a`. Only the lower triangle is read; `a` is overwritten.
pub fn log2_det_hpd_in_place(a: &mut [C64], n: usize) -> Result<f64> {
    let mut log_det = 0.0;
    for j in 0..n {
        let mut d = a[j * n + j].re;
        for k in 0..j {
            d -= a[j * n + k].norm_sqr();
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite);
        }
        let l = d.sqrt();
        a[j * n + j] = C64::new(l, 0.0);
        log_det += d.ln();
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k].conj();
            }
            a[i * n + j] = s / l;
        }
    }
    Ok(log_det / std::f64::consts::LN_2)
}

/// Determinant of a Hermitian PD `n × n` row-major matrix as the product
/// of squared Cholesky pivots (one `ln` for the caller instead of `n`).
/// Overwrites `a`; only the lower triangle is read.
pub fn det_hpd_in_place(a: &mut [C64], n: usize) -> Result<f64> {
    let mut det = 1.0;
    for j in 0..n {
        let mut d = a[j * n + j].re;
        for k in 0..j {
            d -= a[j * n + k].norm_sqr();
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite);
        }
        let l = d.sqrt();
        a[j * n + j] = C64::new(l, 0.0);
        det *= d;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k].conj();
            }
            a[i * n + j] = s / l;
        }
    }
    Ok(det)
}

/// Lower Cholesky factor of a Hermitian PD row-major matrix, in place
/// (upper triangle left untouched).
pub fn cholesky_in_place(a: &mut [C64], n: usize) -> Result<()> {
    det_hpd_in_place(a, n).map(|_| ())
}

/// Solves `L x = b` in place for the lower factor from
/// [`cholesky_in_place`].
pub fn forward_substitute(l: &[C64], n: usize, b: &mut [C64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i].re;
    }
}

/// Moore–Penrose pseudo-inverse via SVD.
pub fn pinv(a: &CMat) -> CMat {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().fold(0.0_f64, |m, &s| m.max(s));
    let eps = smax * (a.nrows().max(a.ncols()) as f64) * f64::EPSILON;
    svd.pseudo_inverse(eps).expect("svd computed with u and v")
}

/// Singular values of `a`, sorted in descending order.
pub fn singular_values(a: &CMat) -> Vec<f64> {
    let mut s: Vec<f64> = a.singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Symmetric Toeplitz matrix with first column `[1, β, β², …]`.
pub fn toeplitz_exponential(beta: f64, n: usize) -> CMat {
    CMat::from_fn(n, n, |i, j| C64::new(beta.powi((i as i32 - j as i32).abs()), 0.0))
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    CMat::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

/// Column-major vectorization, `vec(X)`.
pub fn vec_col_major(x: &CMat) -> nalgebra::DVector<C64> {
    nalgebra::DVector::from_iterator(x.len(), x.iter().copied())
}

pub fn unvec_col_major(v: &nalgebra::DVector<C64>, rows: usize, cols: usize) -> CMat {
    CMat::from_iterator(rows, cols, v.iter().copied())
}

/// Largest absolute entry.
pub fn max_abs(a: &CMat) -> f64 {
    a.iter().fold(0.0_f64, |m, z| m.max(z.norm()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_hpd(n: usize, seed: u64) -> CMat {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
        let a = CMat::from_fn(n, n, |_, _| C64::new(draw(), draw()));
        &a * a.adjoint() + identity(n)
    }

    #[test]
    fn cholesky_logdet_matches_lu_determinant() {
        for seed in 0..10 {
            let a = random_hpd(5, seed);
            let det = a.clone().determinant();
            let ours = log2_det_hpd(&a).unwrap();
            assert!((ours - det.re.log2()).abs() < 1e-10, "{ours} vs {}", det.re.log2());
        }
    }

    #[test]
    fn logdet_rejects_indefinite() {
        let mut a = identity(3);
        a[(1, 1)] = C64::new(-1.0, 0.0);
        assert!(matches!(log2_det_hpd(&a), Err(Error::NotPositiveDefinite)));
    }

    #[test]
    fn sqrt_squares_back() {
        let a = random_hpd(4, 7);
        let s = psd_sqrt(&a).unwrap();
        assert!(max_abs(&(&s * &s - &a)) < 1e-10);
        assert!(max_abs(&(&s - s.adjoint())) < 1e-12);
    }

    #[test]
    fn sqrt_rejects_negative_definite() {
        let a = identity(2).scale(-1.0);
        assert!(matches!(psd_sqrt(&a), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn sqrt_of_singular_psd_is_fine() {
        let v = CMat::from_column_slice(2, 1, &[C64::new(1.0, 0.0), C64::new(0.0, 1.0)]);
        let a = &v * v.adjoint();
        let s = psd_sqrt(&a).unwrap();
        assert!(max_abs(&(&s * &s - &a)) < 1e-10);
    }

    #[test]
    fn kron_vec_identity() {
        // vec(A X B) = (Bᵀ ⊗ A) vec(X)
        let a = random_hpd(2, 1);
        let b = random_hpd(3, 2);
        let x = CMat::from_fn(2, 3, |i, j| C64::new(i as f64 + 0.5, j as f64 - 1.0));
        let lhs = vec_col_major(&(&a * &x * &b));
        let rhs = kron(&b.transpose(), &a) * vec_col_major(&x);
        assert!((lhs - rhs).camax() < 1e-10);
    }

    #[test]
    fn toeplitz_shape() {
        let t = toeplitz_exponential(0.5, 3);
        assert_eq!(t[(0, 2)].re, 0.25);
        assert_eq!(t[(2, 1)].re, 0.5);
        assert_eq!(t.trace().re, 3.0);
    }

    #[test]
    fn pinv_is_right_inverse_for_full_row_rank() {
        let a = CMat::from_fn(2, 4, |i, j| C64::new((i * 4 + j) as f64, (j as f64).sin()));
        let p = pinv(&a);
        assert!(max_abs(&(&a * &p - identity(2))) < 1e-10);
    }
}
