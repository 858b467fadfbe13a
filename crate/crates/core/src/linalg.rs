//! Small dense complex linear algebra for per-frequency beamformer solves.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{ArrayView2, Array2};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;

/// Singular values below this fraction of the largest one mark the matrix singular.
const RANK_TOLERANCE: f64 = 1e-13;

pub fn to_matrix(a: ArrayView2<'_, Complex64>) -> CMatrix {
    let (r, c) = a.dim();
    DMatrix::from_fn(r, c, |i, j| a[[i, j]])
}

pub fn to_array(m: &CMatrix) -> Array2<Complex64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

pub fn trace(m: &CMatrix) -> Complex64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)]).sum()
}

/// `(A + A^H) / 2`
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).map(|v| v * 0.5)
}

/// `A + ε · (Re tr A / n) · I`
pub fn load_diagonal(a: &CMatrix, epsilon: f64) -> CMatrix {
    let n = a.nrows();
    let level = epsilon * trace(a).re / n as f64;
    let mut out = a.clone();
    for i in 0..n {
        out[(i, i)] += Complex64::new(level, 0.0);
    }
    out
}

/// Solves `A X = B` for Hermitian `A`: Cholesky first, falling back to an SVD
/// solve when `A` is indefinite. Returns `None` when `A` is numerically singular.
pub fn hermitian_solve(a: &CMatrix, b: &CMatrix) -> Option<CMatrix> {
    if a.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return None;
    }
    if let Some(chol) = a.clone().cholesky() {
        // Complex square roots never fail, so positive definiteness is read
        // off the pivots: real, positive and not vanishingly small.
        let diag = chol.l_dirty().diagonal();
        let real = diag.iter().all(|v| v.re > 0.0 && v.im.abs() <= 1e-12 * v.re);
        let pivots = diag.map(|v| v.norm_sqr());
        if real && pivots.min() >= RANK_TOLERANCE * pivots.max() {
            let x = chol.solve(b);
            if x.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
                return Some(x);
            }
        }
    }
    let svd = a.clone().svd(true, true);
    let sigma = &svd.singular_values;
    let (lo, hi) = (sigma.min(), sigma.max());
    if !(hi > 0.0) || lo < RANK_TOLERANCE * hi {
        return None;
    }
    let (u, v_t) = (svd.u?, svd.v_t?);
    let mut y = u.adjoint() * b;
    for (i, mut row) in y.row_iter_mut().enumerate() {
        row /= Complex64::new(sigma[i], 0.0);
    }
    Some(v_t.adjoint() * y)
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(a: &CMatrix) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(hermitian_part(a)).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, rng: &mut impl Rng) -> CMatrix {
        DMatrix::from_fn(n, n, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    #[test]
    fn solves_positive_definite() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = random(6, &mut rng);
        let a = &b * b.adjoint() + CMatrix::identity(6, 6);
        let rhs = random(6, &mut rng);
        let x = hermitian_solve(&a, &rhs).unwrap();
        assert!((&a * &x - &rhs).norm() < 1e-12);
    }

    #[test]
    fn solves_indefinite_via_fallback() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = random(5, &mut rng);
        let mut a = hermitian_part(&b);
        a[(0, 0)] = Complex64::new(-3.0, 0.0);
        let rhs = random(5, &mut rng);
        let x = hermitian_solve(&a, &rhs).unwrap();
        assert!((&a * &x - &rhs).norm() < 1e-10, "{}", (&a * &x - &rhs).norm());
    }

    #[test]
    fn singular_is_reported() {
        let a = CMatrix::zeros(3, 3);
        assert!(hermitian_solve(&a, &CMatrix::identity(3, 3)).is_none());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v = random(4, &mut rng).column(0).into_owned();
        let rank_one = &v * v.adjoint();
        assert!(hermitian_solve(&rank_one, &CMatrix::identity(4, 4)).is_none());
    }

    #[test]
    fn loading_scales_with_mean_diagonal() {
        let a = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            Complex64::new(2.0, 0.0),
            Complex64::new(4.0, 0.0),
        ]));
        let l = load_diagonal(&a, 0.5);
        assert_eq!(l[(0, 0)], Complex64::new(3.5, 0.0));
        assert_eq!(l[(1, 1)], Complex64::new(5.5, 0.0));
    }

    #[test]
    fn eigenvalues_of_gram_are_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = random(5, &mut rng);
        let ev = hermitian_eigenvalues(&(&b * b.adjoint()));
        assert!(ev[0] > -1e-12);
    }
}
