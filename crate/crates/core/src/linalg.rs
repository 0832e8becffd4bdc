//! Small dense complex linear algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Canonical symplectic matrix `[[0, -I_d], [I_d, 0]]`.
pub fn symplectic_j(d: usize) -> CMat {
    let mut j = CMat::zeros(2 * d, 2 * d);
    for k in 0..d {
        j[(k, d + k)] = C64::new(-1.0, 0.0);
        j[(d + k, k)] = C64::new(1.0, 0.0);
    }
    j
}

pub fn fro(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `‖M - M*‖_F`.
pub fn hermitian_defect(m: &CMat) -> f64 {
    fro(&(m - m.adjoint()))
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

/// `(M - M*) / 2i`.
pub fn imag_part(m: &CMat) -> CMat {
    (m - m.adjoint()) / C64::new(0.0, 2.0)
}

/// Eigen-decomposition of the Hermitian part of `m`, eigenvalues ascending.
pub fn eigh(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), CMat::zeros(0, 0));
    }
    let eig = hermitian_part(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(k));
    }
    (values, vectors)
}

pub fn min_eig(m: &CMat) -> f64 {
    eigh(m).0.first().copied().unwrap_or(0.0)
}

pub fn max_eig(m: &CMat) -> f64 {
    eigh(m).0.last().copied().unwrap_or(0.0)
}

/// Apply `f` to the eigenvalues of a Hermitian matrix.
pub fn hermitian_fn(m: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let (vals, vecs) = eigh(m);
    let diag = CMat::from_diagonal(&CVec::from_iterator(vals.len(), vals.iter().map(|&v| C64::new(f(v), 0.0))));
    &vecs * diag * vecs.adjoint()
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn det(m: &CMat) -> C64 {
    if m.nrows() == 0 {
        return C64::new(1.0, 0.0);
    }
    m.clone().lu().determinant()
}

/// Singular values in descending order.
pub fn singular_values(m: &CMat) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Orthonormal basis of the numerical null space: right singular vectors whose
/// singular value is at most `rel_tol * σ_max`.
pub fn null_space(m: &CMat, rel_tol: f64) -> Vec<CVec> {
    let n = m.ncols();
    if m.nrows() < n {
        // Wide matrices: pad with zero rows so every direction has a singular value.
        let padded = m.clone().resize(n, n, C64::new(0.0, 0.0));
        return null_space(&padded, rel_tol);
    }
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested v_t");
    let smax = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let thresh = rel_tol * smax.max(f64::MIN_POSITIVE);
    (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] <= thresh)
        .map(|k| v_t.row(k).adjoint().into_owned())
        .collect()
}

pub fn rank(m: &CMat, rel_tol: f64) -> usize {
    let s = singular_values(m);
    let smax = s.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > rel_tol * smax).count()
}

/// Solve `a x = b` by LU with partial pivoting.
pub fn solve(a: &CMat, b: &CMat) -> Option<CMat> {
    a.clone().lu().solve(b)
}

pub fn block(m: &CMat, r: usize, c: usize, nr: usize, nc: usize) -> CMat {
    m.view((r, c), (nr, nc)).into_owned()
}

pub fn from_blocks(a: &CMat, b: &CMat, c_: &CMat, d: &CMat) -> CMat {
    let (r1, c1) = a.shape();
    let (r2, c2) = d.shape();
    let mut m = CMat::zeros(r1 + r2, c1 + c2);
    m.view_mut((0, 0), (r1, c1)).copy_from(a);
    m.view_mut((0, c1), (r1, c2)).copy_from(b);
    m.view_mut((r1, 0), (r2, c1)).copy_from(c_);
    m.view_mut((r1, c1), (r2, c2)).copy_from(d);
    m
}

pub fn hstack(a: &CMat, b: &CMat) -> CMat {
    let mut m = CMat::zeros(a.nrows(), a.ncols() + b.ncols());
    m.view_mut((0, 0), a.shape()).copy_from(a);
    m.view_mut((0, a.ncols()), b.shape()).copy_from(b);
    m
}

pub fn vstack(a: &CMat, b: &CMat) -> CMat {
    let mut m = CMat::zeros(a.nrows() + b.nrows(), a.ncols());
    m.view_mut((0, 0), a.shape()).copy_from(a);
    m.view_mut((a.nrows(), 0), b.shape()).copy_from(b);
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn j_squares_to_minus_identity() {
        let j = symplectic_j(3);
        assert_eq!(&j * &j, -identity(6));
        assert_eq!(j.adjoint(), -j.clone());
    }

    #[test]
    fn eigh_sorts_ascending() {
        let m = CMat::from_row_slice(2, 2, &[c(3.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(1.0, 0.0)]);
        let (v, _) = eigh(&m);
        assert!(v[0] < v[1]);
        assert!((v[0] + v[1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn null_space_of_rank_one() {
        let m = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(4.0, 0.0)]);
        let ns = null_space(&m, 1e-8);
        assert_eq!(ns.len(), 1);
        assert!((&m * &ns[0]).norm() < 1e-12);
    }
}
