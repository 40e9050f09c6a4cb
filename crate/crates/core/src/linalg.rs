//! Pointwise dense linear algebra on small complex matrices.

use nalgebra::{Cholesky, DMatrixView, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::field::CMatrix;

/// Eigen-decomposition of a Hermitian matrix, eigenvalues descending.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// Unitary; column `k` belongs to `values[k]`.
    pub vectors: CMatrix,
}

pub fn hermitian_eigen(m: &CMatrix) -> HermitianEigen {
    if m.nrows() == 2 {
        return hermitian_eigen_2x2(m);
    }
    let sym = crate::field::hermitian_part(m);
    let eig = SymmetricEigen::new(sym);
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    HermitianEigen { values, vectors }
}

fn hermitian_eigen_2x2(m: &CMatrix) -> HermitianEigen {
    let a = m[(0, 0)].re;
    let d = m[(1, 1)].re;
    let b = (m[(0, 1)] + m[(1, 0)].conj()) * 0.5;
    let mean = 0.5 * (a + d);
    let half = 0.5 * (a - d);
    let s = half.hypot(b.norm());
    let zero = Complex64::new(0.0, 0.0);
    let vectors = if s == 0.0 {
        CMatrix::identity(2, 2)
    } else {
        // Pick the form whose leading component cannot cancel.
        let (v1, v2) = if half >= 0.0 {
            let p = Complex64::new(half + s, 0.0);
            ([p, b.conj()], [-b, p])
        } else {
            let p = Complex64::new(s - half, 0.0);
            ([b, p], [p, -b.conj()])
        };
        let n1 = (v1[0].norm_sqr() + v1[1].norm_sqr()).sqrt();
        let n2 = (v2[0].norm_sqr() + v2[1].norm_sqr()).sqrt();
        let mut v = CMatrix::from_element(2, 2, zero);
        v[(0, 0)] = v1[0] / n1;
        v[(1, 0)] = v1[1] / n1;
        v[(0, 1)] = v2[0] / n2;
        v[(1, 1)] = v2[1] / n2;
        v
    };
    HermitianEigen {
        values: vec![mean + s, mean - s],
        vectors,
    }
}

/// Lower Cholesky factor `L` with `H = L L*`.
pub fn cholesky(h: &CMatrix) -> Option<CMatrix> {
    Cholesky::new(crate::field::hermitian_part(h)).map(|c| c.l())
}

/// Decomposition of an `H`-self-adjoint endomorphism `w` (i.e. `H w` Hermitian).
///
/// With `H = L L*` the matrix `L* w L^{-*}` is Hermitian; its unitary
/// eigenvectors `Q` give the `H`-orthonormal eigenframe `L^{-*} Q`.
#[derive(Clone, Debug)]
pub struct SelfAdjointEigen {
    pub values: Vec<f64>,
    /// `L^{-*} Q`: columns are `H`-orthonormal eigenvectors.
    pub frame: CMatrix,
    /// `Q* L*`, the inverse of `frame`.
    pub frame_inv: CMatrix,
    /// `L Q`, so that `H e^{tw} = lq · e^{tΛ} · lq*`.
    pub lq: CMatrix,
}

pub fn selfadjoint_eigen(h: &CMatrix, w: &CMatrix) -> Option<SelfAdjointEigen> {
    let l = cholesky(h)?;
    let l_adj = l.adjoint();
    let l_adj_inv = l_adj.clone().try_inverse()?;
    let unitary_rep = &l_adj * w * &l_adj_inv;
    let eig = hermitian_eigen(&unitary_rep);
    let frame = &l_adj_inv * &eig.vectors;
    let frame_inv = eig.vectors.adjoint() * &l_adj;
    let lq = &l * &eig.vectors;
    Some(SelfAdjointEigen {
        values: eig.values,
        frame,
        frame_inv,
        lq,
    })
}

/// `H e^{t w}` for `H`-self-adjoint `w`, returned exactly Hermitian.
pub fn metric_along(h: &CMatrix, w: &CMatrix, t: f64) -> Option<CMatrix> {
    let e = selfadjoint_eigen(h, w)?;
    let scaled = DVector::from_iterator(
        e.values.len(),
        e.values.iter().map(|l| Complex64::new((t * l).exp(), 0.0)),
    );
    let mut left = e.lq.clone();
    for (j, s) in scaled.iter().enumerate() {
        let mut col = left.column_mut(j);
        col *= *s;
    }
    Some(crate::field::hermitian_part(&(left * e.lq.adjoint())))
}

/// `H`-adjoint `H^{-1} X* H`.
pub fn h_adjoint(h: &CMatrix, x: &CMatrix) -> Option<CMatrix> {
    let hinv = h.clone().try_inverse()?;
    Some(hinv * x.adjoint() * h)
}

/// `tr(X X†)` with `†` the `H`-adjoint: the squared `H`-Frobenius norm.
pub fn h_norm_sqr(h: DMatrixView<'_, Complex64>, x: &CMatrix) -> f64 {
    let h = h.into_owned();
    match h.clone().try_inverse() {
        Some(hinv) => (x * hinv * x.adjoint() * h).trace().re,
        None => f64::NAN,
    }
}

/// `(e^x − x − 1)/x²`, equal to `1/2` at `x = 0`.
pub fn phi(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        0.5 + x / 6.0 + x * x / 24.0 + x * x * x / 120.0
    } else {
        (x.exp_m1() - x) / (x * x)
    }
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(h: &CMatrix) -> f64 {
    hermitian_eigen(h).values.last().copied().unwrap_or(f64::NAN)
}

/// Spectral condition number of a positive Hermitian matrix.
pub fn condition_number(h: &CMatrix) -> f64 {
    let v = hermitian_eigen(h).values;
    v[0] / v[v.len() - 1]
}

/// Largest deviation of `u u*` from the identity.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let n = u.nrows();
    (u * u.adjoint() - CMatrix::identity(n, n)).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::real_diag;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn phi_is_continuous_at_zero() {
        assert_eq!(phi(0.0), 0.5);
        for x in [1e-4f64, -1e-4, 9.9e-4, 1.01e-3, -1.01e-3] {
            let direct = (x.exp() - x - 1.0) / (x * x);
            assert!((phi(x) - direct).abs() < 1e-7);
        }
        assert!((phi(1.0) - (1f64.exp() - 2.0)).abs() < 1e-15);
    }

    #[test]
    fn closed_form_2x2_matches_general_solver() {
        let cases = [
            [c(2.0, 0.0), c(0.3, 0.4), c(1.0, 0.0)],
            [c(-1.0, 0.0), c(0.0, -2.0), c(3.0, 0.0)],
            [c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)],
            [c(1.0, 0.0), c(1e-9, 0.0), c(1.0, 0.0)],
        ];
        for [a, b, d] in cases {
            let m = CMatrix::from_row_slice(2, 2, &[a, b, b.conj(), d]);
            let e = hermitian_eigen(&m);
            let mut reference: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
            reference.sort_by(|x, y| y.total_cmp(x));
            for (x, y) in e.values.iter().zip(&reference) {
                assert!((x - y).abs() < 1e-13);
            }
            let rebuilt = &e.vectors * real_diag(&e.values) * e.vectors.adjoint();
            assert!((rebuilt - &m).norm() < 1e-13);
            assert!(unitarity_defect(&e.vectors) < 1e-14);
        }
    }

    #[test]
    fn selfadjoint_eigen_reconstructs() {
        let h = CMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.3, 0.4), c(0.3, -0.4), c(1.0, 0.0)]);
        // w = H^{-1} S with S Hermitian is H-self-adjoint.
        let s = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(-0.5, 0.0)]);
        let w = h.clone().try_inverse().unwrap() * s;
        let e = selfadjoint_eigen(&h, &w).unwrap();
        let rebuilt = &e.frame * real_diag(&e.values) * &e.frame_inv;
        assert!((rebuilt - &w).norm() < 1e-12);
        assert!(e.values[0] >= e.values[1]);
        // eigenframe is H-orthonormal
        let gram = e.frame.adjoint() * &h * &e.frame;
        assert!((gram - CMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn metric_along_matches_series() {
        let h = CMatrix::from_row_slice(2, 2, &[c(1.5, 0.0), c(0.2, 0.1), c(0.2, -0.1), c(0.7, 0.0)]);
        let s = CMatrix::from_row_slice(2, 2, &[c(0.3, 0.0), c(0.1, 0.2), c(0.1, -0.2), c(-0.4, 0.0)]);
        let w = h.clone().try_inverse().unwrap() * s;
        let t = 0.8;
        let mut term = CMatrix::identity(2, 2);
        let mut exp = term.clone();
        for k in 1..40 {
            term = term * &w * c(t / k as f64, 0.0);
            exp += &term;
        }
        let expected = &h * exp;
        let got = metric_along(&h, &w, t).unwrap();
        assert!((got - expected).norm() < 1e-12);
    }
}
