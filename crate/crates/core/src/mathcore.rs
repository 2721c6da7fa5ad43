//! Complex dense linear algebra.
//!
//! Matrices are `nalgebra` dense matrices over `Complex<f64>`, stored
//! column-major, so `vec(F)` is simply the column-major entry order of `F`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;
pub type RMatrix = DMatrix<f64>;

/// Tolerances shared by the factorizations.
pub mod tol {
    /// Orthonormality and residual checks on factorizations.
    pub const FACTORIZATION: f64 = 1e-10;
    /// Reconstruction residuals (eigen-decompositions).
    pub const RECONSTRUCTION: f64 = 1e-9;
    /// Relative pivot or singular value below which a matrix is rank deficient.
    pub const RANK_CUTOFF: f64 = 1e-12;
}

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn cvec(entries: &[(f64, f64)]) -> CVector {
    CVector::from_iterator(entries.len(), entries.iter().map(|&(re, im)| c(re, im)))
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// `x xᴴ`.
pub fn outer(x: &CVector) -> CMatrix {
    x * x.adjoint()
}

/// Column-major stacking of the columns of `a`.
pub fn vec_of(a: &CMatrix) -> CVector {
    CVector::from_column_slice(a.as_slice())
}

/// Inverse of [`vec_of`] for a `rows × cols` matrix.
pub fn unvec(v: &CVector, rows: usize, cols: usize) -> Result<CMatrix> {
    if v.len() != rows * cols {
        return Err(Error::DimensionMismatch(format!(
            "cannot reshape length {} into {rows}x{cols}",
            v.len()
        )));
    }
    Ok(CMatrix::from_column_slice(rows, cols, v.as_slice()))
}

/// `(h + hᴴ)/2`.
pub fn hermitian_part(h: &CMatrix) -> CMatrix {
    (h + h.adjoint()) * c(0.5, 0.0)
}

/// Real part of `Tr(a b)`.
pub fn trace_prod(a: &CMatrix, b: &CMatrix) -> f64 {
    let mut s = 0.0;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            s += (a[(i, k)] * b[(k, i)]).re;
        }
    }
    s
}

/// `xᴴ A x`, real part.
pub fn quad_form(a: &CMatrix, x: &CVector) -> f64 {
    (x.adjoint() * a * x)[(0, 0)].re
}

pub fn is_finite(a: &CMatrix) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Thin QR factorization `M = Q R` with a real nonnegative diagonal on `R`.
pub fn qr_thin(m: &CMatrix) -> Result<(CMatrix, CMatrix)> {
    let (rows, cols) = m.shape();
    if rows < cols {
        return Err(Error::DimensionMismatch(format!(
            "thin QR needs rows >= cols, got {rows}x{cols}"
        )));
    }
    let qr = m.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for i in 0..cols {
        let d = r[(i, i)];
        let mag = d.norm();
        if mag > 0.0 {
            let phase = d / mag;
            for k in 0..rows {
                q[(k, i)] *= phase;
            }
            for k in 0..cols {
                r[(i, k)] *= phase.conj();
            }
            r[(i, i)] = c(mag, 0.0);
        }
    }
    let largest = (0..cols).map(|i| r[(i, i)].re).fold(0.0, f64::max);
    let pivot = (0..cols).map(|i| r[(i, i)].re).fold(f64::INFINITY, f64::min);
    if cols > 0 && (largest == 0.0 || pivot < tol::RANK_CUTOFF * largest) {
        return Err(Error::RankDeficient { pivot, largest });
    }
    Ok((q, r))
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
///
/// The input is symmetrized as `(H + Hᴴ)/2` first.
pub fn herm_eig(h: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    let n = h.nrows();
    if n != h.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "eigen-decomposition needs a square matrix, got {}x{}",
            n,
            h.ncols()
        )));
    }
    if n == 0 {
        return Ok((Vec::new(), CMatrix::zeros(0, 0)));
    }
    let sym = hermitian_part(h);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((values, vectors))
}

/// Largest eigenvalue and a unit eigenvector of a Hermitian matrix.
pub fn dominant_eig(h: &CMatrix) -> Result<(f64, CVector)> {
    let (vals, vecs) = herm_eig(h)?;
    let n = vals.len();
    if n == 0 {
        return Err(Error::DimensionMismatch("empty matrix".into()));
    }
    Ok((vals[n - 1], vecs.column(n - 1).into_owned()))
}

/// Lower Cholesky factor of a Hermitian positive definite matrix.
pub fn cholesky(d: &CMatrix) -> Result<CMatrix> {
    let sym = hermitian_part(d);
    let n = sym.nrows();
    let scale = (0..n).map(|i| sym[(i, i)].re.abs()).fold(0.0, f64::max);
    match sym.cholesky() {
        Some(ch) => {
            let l = ch.l();
            let min_pivot = (0..n).map(|i| l[(i, i)].re).fold(f64::INFINITY, f64::min);
            if min_pivot * min_pivot <= tol::RANK_CUTOFF * scale.max(f64::MIN_POSITIVE) {
                Err(Error::NotPositiveDefinite)
            } else {
                Ok(l)
            }
        }
        None => Err(Error::NotPositiveDefinite),
    }
}

/// Largest generalized eigenvalue of the pencil `(cm, dm)` and a unit-norm
/// maximizer of the quotient `aᴴ cm a / aᴴ dm a`.
pub fn generalized_eig_max(cm: &CMatrix, dm: &CMatrix) -> Result<(f64, CVector)> {
    let n = cm.nrows();
    if cm.shape() != dm.shape() || n != cm.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "pencil shapes {:?} and {:?}",
            cm.shape(),
            dm.shape()
        )));
    }
    let l = cholesky(dm)?;
    let id = identity(n);
    let linv = l.solve_lower_triangular(&id).ok_or(Error::NotPositiveDefinite)?;
    let whitened = &linv * hermitian_part(cm) * linv.adjoint();
    let (lambda, u) = dominant_eig(&whitened)?;
    let mut v = linv.adjoint() * u;
    let norm = v.norm();
    v /= c(norm, 0.0);
    Ok((lambda, v))
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// The `mn × mn` permutation `P` with `P vec(F) = vec(Fᵀ)` for every `m × n` matrix `F`.
pub fn commutation_matrix(m: usize, n: usize) -> CMatrix {
    let mut p = CMatrix::zeros(m * n, m * n);
    for i in 0..m {
        for j in 0..n {
            p[(j + n * i, i + m * j)] = c(1.0, 0.0);
        }
    }
    p
}

/// The block mask `I_m ⊗ J_m`, where `J_m` is the all-ones `m × m` matrix.
pub fn block_ones_mask(m: usize) -> CMatrix {
    let mut e = CMatrix::zeros(m * m, m * m);
    for blk in 0..m {
        for r in 0..m {
            for s in 0..m {
                e[(blk * m + r, blk * m + s)] = c(1.0, 0.0);
            }
        }
    }
    e
}

/// Orthonormal basis of the right null space of a wide matrix, via the SVD.
pub fn null_space_basis(m: &CMatrix) -> Result<CMatrix> {
    let (rows, cols) = m.shape();
    if cols == 0 {
        return Err(Error::EmptyNullSpace);
    }
    // Pad to square so the SVD yields a complete right basis.
    let mut sq = CMatrix::zeros(cols.max(rows), cols);
    sq.view_mut((0, 0), (rows, cols)).copy_from(m);
    let svd = sq.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::NumericalFailure("svd failed".into()))?;
    let sv = &svd.singular_values;
    let largest = sv.iter().cloned().fold(0.0, f64::max);
    let cutoff = if largest > 0.0 { 1e-10 * largest } else { 0.0 };
    let null: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] <= cutoff).collect();
    if null.is_empty() {
        return Err(Error::EmptyNullSpace);
    }
    let mut basis = CMatrix::zeros(cols, null.len());
    for (k, &i) in null.iter().enumerate() {
        for r in 0..cols {
            basis[(r, k)] = v_t[(i, r)].conj();
        }
    }
    // Canonical phase: largest-magnitude entry of each column made real positive.
    for k in 0..basis.ncols() {
        let mut best = 0;
        for r in 0..cols {
            if basis[(r, k)].norm() > basis[(best, k)].norm() + 1e-12 {
                best = r;
            }
        }
        let z = basis[(best, k)];
        if z.norm() > 0.0 {
            let phase = z.conj() / z.norm();
            for r in 0..cols {
                basis[(r, k)] *= phase;
            }
        }
    }
    Ok(basis)
}

/// Real symmetric embedding `[[Re A, -Im A], [Im A, Re A]]` of a complex matrix.
pub fn real_embed(a: &CMatrix) -> RMatrix {
    let (r, cc) = a.shape();
    let mut out = RMatrix::zeros(2 * r, 2 * cc);
    for i in 0..r {
        for j in 0..cc {
            let z = a[(i, j)];
            out[(i, j)] = z.re;
            out[(i + r, j + cc)] = z.re;
            out[(i, j + cc)] = -z.im;
            out[(i + r, j)] = z.im;
        }
    }
    out
}

/// Hermitian matrix represented by a real symmetric `2n × 2n` matrix under
/// [`real_embed`], i.e. `((Y11 + Y22) + i (Y21 - Y12)) / 2`.
pub fn real_unembed(y: &RMatrix) -> CMatrix {
    let n = y.nrows() / 2;
    let mut out = CMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = c(
                0.5 * (y[(i, j)] + y[(i + n, j + n)]),
                0.5 * (y[(i + n, j)] - y[(i, j + n)]),
            );
        }
    }
    out
}

/// Principal square root of a Hermitian PSD matrix (negative eigenvalues clipped).
pub fn psd_sqrt(h: &CMatrix) -> Result<CMatrix> {
    let (vals, vecs) = herm_eig(h)?;
    let n = vals.len();
    let mut d = CMatrix::zeros(n, n);
    for (i, &v) in vals.iter().enumerate() {
        d[(i, i)] = c(v.max(0.0).sqrt(), 0.0);
    }
    Ok(&vecs * d * vecs.adjoint())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn rand_c(rng: &mut ChaCha8Rng, r: usize, cc: usize) -> CMatrix {
        CMatrix::from_fn(r, cc, |_, _| c(StandardNormal.sample(rng), StandardNormal.sample(rng)))
    }

    #[test]
    fn qr_trivial_cases() {
        let m = CMatrix::from_fn(3, 2, |i, j| if i == j { c(1.0, 0.0) } else { c(0.0, 0.0) });
        let (q, r) = qr_thin(&m).unwrap();
        assert!((q - &m).norm() < 1e-14);
        assert!((r - identity(2)).norm() < 1e-14);

        let m = CMatrix::from_column_slice(2, 1, &[c(2.0, 0.0), c(0.0, 0.0)]);
        let (q, r) = qr_thin(&m).unwrap();
        assert!((q[(0, 0)] - c(1.0, 0.0)).norm() < 1e-14);
        assert!((r[(0, 0)] - c(2.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn qr_random_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let m = rand_c(&mut rng, 4, 2);
            let (q, r) = qr_thin(&m).unwrap();
            assert!((&m - &q * &r).norm() < 1e-10 * m.norm());
            assert!((q.adjoint() * &q - identity(2)).norm() < 1e-10);
            for i in 0..2 {
                assert!(r[(i, i)].im == 0.0 && r[(i, i)].re > 0.0);
                for k in 0..i {
                    assert!(r[(i, k)].norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn qr_rank_deficient() {
        let col = cvec(&[(1.0, 1.0), (2.0, 0.0), (0.0, -1.0)]);
        let mut m = CMatrix::zeros(3, 2);
        m.set_column(0, &col);
        m.set_column(1, &(col.clone() * c(0.0, 2.0)));
        assert!(matches!(qr_thin(&m), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn eig_small_spectra() {
        let d = CMatrix::from_diagonal(&cvec(&[(1.0, 0.0), (3.0, 0.0)]));
        assert_eq!(herm_eig(&d).unwrap().0, vec![1.0, 3.0]);
        let x = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        let vals = herm_eig(&x).unwrap().0;
        assert!((vals[0] + 1.0).abs() < 1e-14 && (vals[1] - 1.0).abs() < 1e-14);
        assert!(matches!(
            herm_eig(&CMatrix::zeros(2, 3)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn eig_random_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let a = rand_c(&mut rng, 6, 6);
            let h = hermitian_part(&a);
            let (vals, v) = herm_eig(&h).unwrap();
            let lam = CMatrix::from_diagonal(&CVector::from_iterator(6, vals.iter().map(|&x| c(x, 0.0))));
            assert!((&h - &v * lam * v.adjoint()).norm() < 1e-9 * h.norm().max(1.0));
            assert!((v.adjoint() * &v - identity(6)).norm() < 1e-10);
            assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn generalized_eig_examples() {
        let cm = CMatrix::from_diagonal(&cvec(&[(2.0, 0.0), (1.0, 0.0)]));
        let (l, v) = generalized_eig_max(&cm, &identity(2)).unwrap();
        assert!((l - 2.0).abs() < 1e-12 && (v[0].norm() - 1.0).abs() < 1e-12);
        let cm = CMatrix::from_diagonal(&cvec(&[(4.0, 0.0), (1.0, 0.0)]));
        let dm = CMatrix::from_diagonal(&cvec(&[(2.0, 0.0), (1.0, 0.0)]));
        let (l, v) = generalized_eig_max(&cm, &dm).unwrap();
        assert!((l - 2.0).abs() < 1e-12 && (v[0].norm() - 1.0).abs() < 1e-12);
        let sing = CMatrix::from_diagonal(&cvec(&[(1.0, 0.0), (0.0, 0.0)]));
        assert_eq!(generalized_eig_max(&cm, &sing).unwrap_err(), Error::NotPositiveDefinite);
    }

    #[test]
    fn generalized_eig_beats_random_quotients() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = rand_c(&mut rng, 2, 1).column(0).into_owned();
        let cm = outer(&x);
        let b = rand_c(&mut rng, 2, 2);
        let dm = &b * b.adjoint() + identity(2) * c(0.5, 0.0);
        let (l, v) = generalized_eig_max(&cm, &dm).unwrap();
        let q = |a: &CVector| quad_form(&cm, a) / quad_form(&dm, a);
        assert!((q(&v) - l).abs() < 1e-10 * l);
        let mut best: f64 = 0.0;
        for _ in 0..100_000 {
            let a = rand_c(&mut rng, 2, 1).column(0).into_owned();
            best = best.max(q(&a));
        }
        assert!(best <= l * (1.0 + 1e-12));
        assert!(best >= l * (1.0 - 1e-3), "random search {best} vs {l}");
    }

    #[test]
    fn generalized_eig_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = rand_c(&mut rng, 3, 3);
        let cm = &a * a.adjoint();
        let b = rand_c(&mut rng, 3, 3);
        let dm = &b * b.adjoint() + identity(3);
        let (l1, v1) = generalized_eig_max(&cm, &dm).unwrap();
        let (l2, v2) = generalized_eig_max(&(cm * c(7.5, 0.0)), &dm).unwrap();
        assert!((l2 - 7.5 * l1).abs() < 1e-9 * l2);
        assert!(((v1.adjoint() * v2)[(0, 0)].norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn kron_and_commutation_examples() {
        assert_eq!(kron(&identity(2), &identity(2)), identity(4));
        let n = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        assert_eq!(kron(&n, &identity(1)), n);
        assert_eq!(commutation_matrix(1, 1), identity(1));
        let p = commutation_matrix(2, 2);
        let mut expect = CMatrix::zeros(4, 4);
        for (i, j) in [(0, 0), (1, 2), (2, 1), (3, 3)] {
            expect[(i, j)] = c(1.0, 0.0);
        }
        assert_eq!(p, expect);
        let p = commutation_matrix(3, 2);
        assert_eq!(p.transpose() * &p, identity(6));
    }

    #[test]
    fn mask_examples() {
        assert_eq!(block_ones_mask(1), identity(1));
        let e = block_ones_mask(2);
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i / 2 == j / 2 { 1.0 } else { 0.0 };
                assert_eq!(e[(i, j)], c(expect, 0.0));
            }
        }
    }

    #[test]
    fn null_space_examples() {
        let m = CMatrix::from_row_slice(1, 3, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let v = null_space_basis(&m).unwrap();
        assert_eq!(v.ncols(), 2);
        assert!((&m * &v).norm() < 1e-12);
        let m = CMatrix::from_row_slice(
            2,
            3,
            &[
                c(1.0, 0.0),
                c(0.0, 0.0),
                c(0.0, 0.0),
                c(0.0, 0.0),
                c(1.0, 0.0),
                c(0.0, 0.0),
            ],
        );
        let v = null_space_basis(&m).unwrap();
        assert_eq!(v.ncols(), 1);
        assert!((v[(2, 0)].norm() - 1.0).abs() < 1e-12);
        assert_eq!(null_space_basis(&identity(3)).unwrap_err(), Error::EmptyNullSpace);
    }

    #[test]
    fn null_space_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let m = rand_c(&mut rng, 2, 4);
            let v = null_space_basis(&m).unwrap();
            assert_eq!(v.ncols(), 2);
            assert!((&m * &v).norm() < 1e-10);
            assert!((v.adjoint() * &v - identity(2)).norm() < 1e-10);
        }
    }

    #[test]
    fn embedding_round_trip_preserves_traces() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = hermitian_part(&rand_c(&mut rng, 3, 3));
        let x = hermitian_part(&rand_c(&mut rng, 3, 3));
        let ea = real_embed(&a);
        let ex = real_embed(&x);
        assert!((real_unembed(&ex) - &x).norm() < 1e-14);
        let lhs = trace_prod(&a, &x);
        let rhs = 0.5 * (ea.transpose() * ex).trace();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
