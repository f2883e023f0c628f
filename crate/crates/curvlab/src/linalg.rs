//! Small dense linear-algebra helpers shared by the graph and matrix-algebra
//! modules.

use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type RMat = DMatrix<f64>;
pub type CVec = DVector<Complex64>;

pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn eigh<T>(m: &DMatrix<T>) -> (Vec<f64>, DMatrix<T>)
where
    T: ComplexField<RealField = f64>,
{
    let n = m.nrows();
    if n == 0 {
        return (vec![], DMatrix::zeros(0, 0));
    }
    let h = (m + m.adjoint()) * T::from_real(0.5);
    let eig = h.symmetric_eigen();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(n, n, |r, col| eig.eigenvectors[(r, idx[col])].clone());
    (vals, vecs)
}

/// Largest entrywise modulus.
pub fn max_abs<T>(m: &DMatrix<T>) -> f64
where
    T: ComplexField<RealField = f64>,
{
    m.iter().map(|x| x.clone().modulus()).fold(0.0, f64::max)
}

pub fn hermitian_defect<T>(m: &DMatrix<T>) -> f64
where
    T: ComplexField<RealField = f64>,
{
    max_abs(&(m - m.adjoint()))
}

/// Apply a real function to the spectrum of a Hermitian matrix.
pub fn herm_fn(m: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let (vals, u) = eigh(m);
    let d = CVec::from_iterator(vals.len(), vals.iter().map(|&v| c(f(v))));
    &u * CMat::from_diagonal(&d) * u.adjoint()
}

/// Kronecker product.
pub fn kron<T>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T>
where
    T: ComplexField,
{
    a.kronecker(b)
}

/// Moore-Penrose inverse of a Hermitian positive semidefinite matrix,
/// discarding eigenvalues below `rel * max`.
pub fn psd_pinv<T>(m: &DMatrix<T>, rel: f64) -> DMatrix<T>
where
    T: ComplexField<RealField = f64>,
{
    let (vals, u) = eigh(m);
    let top = vals.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
    let n = vals.len();
    let mut out = DMatrix::<T>::zeros(n, n);
    if top == 0.0 {
        return out;
    }
    for (k, &v) in vals.iter().enumerate() {
        if v.abs() > rel * top {
            let col = u.column(k);
            out += (&col * col.adjoint()) * T::from_real(1.0 / v);
        }
    }
    out
}

/// Row-major vectorisation of a square matrix: `vec[p*n+q] = a[(p,q)]`.
pub fn vec_rm(a: &CMat) -> CVec {
    let n = a.nrows();
    CVec::from_fn(n * a.ncols(), |k, _| a[(k / n, k % n)])
}

pub fn unvec_rm(v: &CVec, n: usize) -> CMat {
    CMat::from_fn(n, n, |p, q| v[p * n + q])
}

/// Superoperator matrix of `A ↦ X A Y` in the row-major matrix-unit basis.
pub fn sandwich(x: &CMat, y: &CMat) -> CMat {
    kron(x, &y.transpose())
}

pub fn to_complex(m: &RMat) -> CMat {
    m.map(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sandwich_matches_direct_product() {
        let n = 3;
        let x = CMat::from_fn(n, n, |i, j| Complex64::new(i as f64 + 1.0, j as f64 - 0.5));
        let y = CMat::from_fn(n, n, |i, j| Complex64::new((i * j) as f64, 1.0));
        let a = CMat::from_fn(n, n, |i, j| Complex64::new(j as f64, i as f64 * 0.3));
        let direct = &x * &a * &y;
        let via = unvec_rm(&(sandwich(&x, &y) * vec_rm(&a)), n);
        assert!(max_abs(&(direct - via)) < 1e-12);
    }

    #[test]
    fn eigh_sorted_and_reconstructs() {
        let m = RMat::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 1.0]);
        let (vals, u) = eigh(&m);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        let back = &u * RMat::from_diagonal(&DVector::from_vec(vals)) * u.transpose();
        assert!(max_abs(&(back - m)) < 1e-12);
    }
}
