//! Hermitian metrics and their Chern connection, curvature and second
//! fundamental forms.
//!
//! A metric is stored in each chart's holomorphic frame as the matrix `H`
//! with `h(u, v) = v* H u`. Endomorphisms act on coefficient columns, so an
//! endomorphism `w` is `h`-self-adjoint when `H w` is Hermitian and the ray
//! `e^{tw} h` has matrix `H e^{tw}`.
//!
//! Conventions: the Chern connection is `D = d + A` with
//! `A = H^{-1} ∂H` a matrix of (1,0)-forms, and curvature is
//! `Θ = √−1 ∂̄A`. We store Θ by its coefficient against `i dz∧dz̄`,
//! `Θ_c = −∂_{z̄}(H^{-1} ∂_z H)`, and its ω-trace `ΛΘ = Θ_c / ρ`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;

use crate::bundle::{BundleSpec, Filtration};
use crate::endo::{self, EndoField};
use crate::error::{Error, Result};
use crate::field::{identity, CMatrix, MatrixField};
use crate::geometry::{BaseGeometry, Chart};
use crate::linalg;

/// Above this condition number a metric is treated as degenerate.
pub const MAX_CONDITION: f64 = 1e12;

/// Allowed disagreement of curvature across the chart seam.
pub const SEAM_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct MetricField {
    bundle: BundleSpec,
    values: MatrixField,
}

/// Invariant violations found by [`MetricField::validate`].
#[derive(Clone, Debug, PartialEq)]
pub struct MetricDiagnostics {
    pub hermitian_defect: f64,
    pub min_eigenvalue: f64,
    pub seam_mismatch: f64,
}

impl MetricField {
    pub fn new(geom: &BaseGeometry, bundle: &BundleSpec, values: MatrixField) -> Result<Self> {
        if values.rank() != bundle.rank() {
            return Err(Error::RankMismatch {
                expected: bundle.rank(),
                got: values.rank(),
            });
        }
        if values.n_nodes() != geom.n_nodes() {
            return Err(Error::NodeCountMismatch {
                expected: geom.n_nodes(),
                got: values.n_nodes(),
            });
        }
        if !values.is_finite() {
            return Err(Error::NonFinite("metric"));
        }
        Ok(Self {
            bundle: bundle.clone(),
            values,
        })
    }

    pub fn bundle(&self) -> &BundleSpec {
        &self.bundle
    }

    pub fn rank(&self) -> usize {
        self.bundle.rank()
    }

    pub fn values(&self) -> &MatrixField {
        &self.values
    }

    pub fn at(&self, node: usize) -> CMatrix {
        self.values.at(node)
    }

    pub fn validate(&self, geom: &BaseGeometry) -> Result<MetricDiagnostics> {
        let hermitian_defect = self
            .values
            .scalar_map(|_, m| (m - m.adjoint()).norm() / m.norm().max(1e-300))
            .into_iter()
            .fold(0.0, f64::max);
        let mins = self.values.scalar_map(|_, m| linalg::min_eigenvalue(&m.into_owned()));
        let (node, min_eigenvalue) = mins
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (n, v)| if v < acc.1 { (n, v) } else { acc });
        if min_eigenvalue.is_nan() || min_eigenvalue <= 0.0 {
            return Err(Error::NotPositiveDefinite {
                node,
                min_eigenvalue,
            });
        }
        Ok(MetricDiagnostics {
            hermitian_defect,
            min_eigenvalue,
            seam_mismatch: metric_seam_mismatch(geom, self)?,
        })
    }

    /// Largest pointwise condition number, rejecting degenerate metrics.
    pub fn check_conditioning(&self) -> Result<f64> {
        let conds = self.values.scalar_map(|_, m| linalg::condition_number(&m.into_owned()));
        let mut worst = 0.0f64;
        for (node, c) in conds.into_iter().enumerate() {
            if !c.is_finite() || c > MAX_CONDITION || c <= 0.0 {
                return Err(Error::IllConditioned { node, condition: c });
            }
            worst = worst.max(c);
        }
        Ok(worst)
    }

    /// The metric `e^{t w} h`.
    pub fn along(&self, w: &EndoField, t: f64) -> Result<Self> {
        let vals = self.values.zip_map(w.values(), |_, h, wv| {
            linalg::metric_along(&h.into_owned(), &wv.into_owned(), t)
                .unwrap_or_else(|| CMatrix::from_element(h.nrows(), h.nrows(), Complex64::new(f64::NAN, 0.0)))
        })?;
        if !vals.is_finite() {
            return Err(Error::NonFinite("metric along ray"));
        }
        Ok(Self {
            bundle: self.bundle.clone(),
            values: vals,
        })
    }

    /// Conjugates by a constant matrix: `g* H g`.
    pub fn gauge(&self, g: &CMatrix) -> Self {
        Self {
            bundle: self.bundle.clone(),
            values: self.values.map(|_, h| g.adjoint() * h * g),
        }
    }
}

/// The product Fubini-Study metric `diag((1+|u|²)^{-k_i})` in either chart.
pub fn fs_metric(geom: &BaseGeometry, bundle: &BundleSpec) -> MetricField {
    let ks = bundle.splitting().to_vec();
    let values = MatrixField::from_fn(geom, ks.len(), |n| {
        let r2 = geom.point(n).r2();
        let d: Vec<f64> = ks.iter().map(|&k| (1.0 + r2).powi(-(k as i32))).collect();
        crate::field::real_diag(&d)
    });
    MetricField {
        bundle: bundle.clone(),
        values,
    }
}

/// `e^{s} h_FS` for a seeded random smooth self-adjoint `s` with
/// off-diagonal components, scaled so that `sup |s| = amplitude`.
pub fn twisted_metric(
    geom: &BaseGeometry,
    bundle: &BundleSpec,
    rng: &mut impl Rng,
    amplitude: f64,
) -> Result<MetricField> {
    let fs = fs_metric(geom, bundle);
    let s = endo::random_endo(geom, &fs, rng, amplitude, 2, false)?;
    fs.along(&s, 1.0)
}

/// Disagreement of a metric with the transition rule `H = g* H' g` on the seam.
pub fn metric_seam_mismatch(geom: &BaseGeometry, h: &MetricField) -> Result<f64> {
    seam_mismatch_with(geom, h.values(), |k, inner, outer| {
        let w = Complex64::from_polar(1.0, -geom.angles()[k]);
        let g = h.bundle().transition(w);
        (inner - g.adjoint() * outer * g).norm()
    })
}

/// Disagreement of an endomorphism field with `X' = g X g^{-1}` on the seam.
pub fn endo_seam_mismatch(geom: &BaseGeometry, bundle: &BundleSpec, x: &MatrixField) -> Result<f64> {
    seam_mismatch_with(geom, x, |k, inner, outer| {
        let w = Complex64::from_polar(1.0, -geom.angles()[k]);
        let g = bundle.transition(w);
        let ginv = g.clone().try_inverse().expect("transition is invertible");
        (outer - g * inner * ginv).norm()
    })
}

fn seam_mismatch_with(
    geom: &BaseGeometry,
    field: &MatrixField,
    cmp: impl Fn(usize, &CMatrix, &CMatrix) -> f64,
) -> Result<f64> {
    let r = field.rank();
    let mut inner = vec![CMatrix::zeros(r, r); geom.n_angular()];
    let mut outer = inner.clone();
    for i in 0..r {
        for j in 0..r {
            let e = field.entry(i, j);
            let bi = geom.boundary_values(&e, Chart::Origin)?;
            let bo = geom.boundary_values(&e, Chart::Infinity)?;
            for k in 0..geom.n_angular() {
                inner[k][(i, j)] = bi[k];
                outer[geom.seam_partner(k)][(i, j)] = bo[geom.seam_partner(k)];
            }
        }
    }
    Ok((0..geom.n_angular())
        .map(|k| cmp(k, &inner[k], &outer[geom.seam_partner(k)]))
        .fold(0.0, f64::max))
}

/// `A = H^{-1} ∂_z H`, the coefficient of `dz` in the Chern connection form.
#[derive(Clone, Debug)]
pub struct ConnectionField {
    pub dz: MatrixField,
}

pub fn chern_connection(geom: &BaseGeometry, h: &MetricField) -> Result<ConnectionField> {
    h.check_conditioning()?;
    let dh = h.values.d_dz(geom)?;
    let a = h.values.zip_map(&dh, |_, hv, d| {
        hv.into_owned().try_inverse().expect("conditioned metric is invertible") * d
    })?;
    Ok(ConnectionField { dz: a })
}

/// Curvature of a Hermitian metric.
#[derive(Clone, Debug)]
pub struct CurvatureField {
    /// Coefficient of `i dz∧dz̄`.
    pub coefficient: MatrixField,
    /// `ΛΘ`, the endomorphism `Θ_c / ρ`.
    pub mean: MatrixField,
}

pub fn curvature(geom: &BaseGeometry, h: &MetricField) -> Result<CurvatureField> {
    let a = chern_connection(geom, h)?;
    let coefficient = a.dz.d_dzbar(geom)?.scale(-1.0);
    let rho = geom.kahler_density();
    let mean = coefficient.map(|n, m| m * Complex64::new(1.0 / rho[n], 0.0));
    Ok(CurvatureField { coefficient, mean })
}

/// `(1/2π r) ∫ tr ΛΘ ω`.
pub fn slope(geom: &BaseGeometry, h: &MetricField) -> Result<f64> {
    let curv = curvature(geom, h)?;
    Ok(degree_of(geom, &curv)? / h.rank() as f64)
}

/// Chern-Weil degree `(1/2π) ∫ tr ΛΘ ω`.
pub fn degree_of(geom: &BaseGeometry, curv: &CurvatureField) -> Result<f64> {
    let tr: Vec<f64> = curv.mean.scalar_map(|_, m| m.trace().re);
    Ok(geom.integrate(&tr)? / (2.0 * PI))
}

/// Curvature disagreement across the seam; above [`SEAM_TOLERANCE`] the grid
/// is too coarse for the metric.
pub fn curvature_seam_diagnostic(geom: &BaseGeometry, h: &MetricField, curv: &CurvatureField) -> Result<f64> {
    endo_seam_mismatch(geom, h.bundle(), &curv.mean)
}

/// The Chern connection of `h₀` in an `h₀`-orthonormal frame adapted to a
/// filtration.
///
/// The frame `f = e·T` is obtained by Gram-Schmidt on the holomorphic frame
/// ordered by [`Filtration::adapted_order`], processed from the last vector
/// (inside `E_m`) backwards, so the trailing vectors span each stage. In this
/// frame the connection form is `P dz + Q dz̄` with
/// `P = T^{-1}(∂T + A T)` and `Q = T^{-1} ∂̄T`.
#[derive(Clone, Debug)]
pub struct SecondFundamentalForm {
    /// `T` at each node (columns are the adapted frame in holomorphic coordinates).
    pub frame: MatrixField,
    pub dz: MatrixField,
    pub dzbar: MatrixField,
    /// Column ranges of the blocks `G_1, …, G_m`.
    pub blocks: Vec<std::ops::Range<usize>>,
    pub order: Vec<usize>,
}

/// Gram-Schmidt adapted frame (in the permuted holomorphic basis order).
pub fn adapted_frame(h: &CMatrix, order: &[usize]) -> CMatrix {
    let r = order.len();
    let mut t = CMatrix::zeros(r, r);
    for col in (0..r).rev() {
        let mut v = CMatrix::zeros(r, 1);
        v[(order[col], 0)] = Complex64::new(1.0, 0.0);
        for later in col + 1..r {
            let f = t.column(later).into_owned();
            let coeff = (f.adjoint() * h * &v)[(0, 0)];
            v -= f * coeff;
        }
        let norm = (v.adjoint() * h * &v)[(0, 0)].re.sqrt();
        t.set_column(col, &(v.column(0) / Complex64::new(norm, 0.0)));
    }
    t
}

pub fn second_fundamental_form(
    geom: &BaseGeometry,
    h0: &MetricField,
    filtration: &Filtration,
) -> Result<SecondFundamentalForm> {
    if filtration.bundle() != h0.bundle() {
        return Err(Error::InvalidFiltration(
            "filtration and metric live on different bundles".into(),
        ));
    }
    let order = filtration.adapted_order();
    let conn = chern_connection(geom, h0)?;
    let frame = h0.values.map(|_, h| adapted_frame(&h.into_owned(), &order));
    let d_frame = frame.d_dz(geom)?;
    let dbar_frame = frame.d_dzbar(geom)?;
    let tinv = frame.map(|_, t| t.into_owned().try_inverse().expect("adapted frame is invertible"));
    let dz = tinv
        .zip_map(&d_frame, |n, ti, dt| ti * (dt + conn.dz.view(n) * frame.view(n)))?;
    let dzbar = tinv.zip_map(&dbar_frame, |_, ti, dt| ti * dt)?;
    let mut blocks = Vec::new();
    let mut start = 0;
    for q in filtration.quotient_ranks() {
        blocks.push(start..start + q);
        start += q;
    }
    Ok(SecondFundamentalForm {
        frame,
        dz,
        dzbar,
        blocks,
        order,
    })
}

impl SecondFundamentalForm {
    pub fn block(m: &CMatrix, rows: &std::ops::Range<usize>, cols: &std::ops::Range<usize>) -> CMatrix {
        m.view((rows.start, cols.start), (rows.len(), cols.len())).into_owned()
    }

    /// The (0,1) block mapping `G_j` into the deeper `G_i` (`i > j`): the
    /// second fundamental form pairing quotient `j` with quotient `i`.
    pub fn dzbar_block(&self, node: usize, i: usize, j: usize) -> CMatrix {
        Self::block(&self.dzbar.at(node), &self.blocks[i], &self.blocks[j])
    }

    /// `sup ‖P_{ji} + Q_{ij}*‖` over nodes and pairs `i > j`: the adjoint
    /// relation between the (1,0) and (0,1) off-diagonal blocks.
    pub fn adjoint_residual(&self) -> f64 {
        let m = self.blocks.len();
        let mut worst = 0.0f64;
        for n in 0..self.frame.n_nodes() {
            let p = self.dz.at(n);
            let q = self.dzbar.at(n);
            for i in 0..m {
                for j in 0..i {
                    let pji = Self::block(&p, &self.blocks[j], &self.blocks[i]);
                    let qij = Self::block(&q, &self.blocks[i], &self.blocks[j]);
                    worst = worst.max((pji + qij.adjoint()).norm());
                }
            }
        }
        worst
    }

    /// `sup` of the blocks that must vanish for any holomorphic filtration:
    /// (1,0) blocks below the diagonal and (0,1) blocks above it.
    pub fn type_defect(&self) -> f64 {
        let m = self.blocks.len();
        let mut worst = 0.0f64;
        for n in 0..self.frame.n_nodes() {
            let p = self.dz.at(n);
            let q = self.dzbar.at(n);
            for i in 0..m {
                for j in 0..i {
                    worst = worst.max(Self::block(&p, &self.blocks[i], &self.blocks[j]).norm());
                    worst = worst.max(Self::block(&q, &self.blocks[j], &self.blocks[i]).norm());
                }
            }
        }
        worst
    }
}

/// Metric induced on the coordinate quotient line `[e_k]` modulo the span of
/// `deeper`: the Schur complement `det H[k ∪ deeper] / det H[deeper]`.
pub fn quotient_line_metric(h: &CMatrix, k: usize, deeper: &[usize]) -> f64 {
    let minor = |idx: &[usize]| -> f64 {
        if idx.is_empty() {
            return 1.0;
        }
        let n = idx.len();
        let mut m = CMatrix::zeros(n, n);
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                m[(a, b)] = h[(i, j)];
            }
        }
        m.determinant().re
    };
    let mut all = vec![k];
    all.extend_from_slice(deeper);
    minor(&all) / minor(deeper)
}

/// Checks `dh(v,w) = h(Dv,w) + h(v,Dw)` for constant sections `v`, `w`:
/// returns `sup |∂_z(w* H v) − w* H A v|`.
pub fn compatibility_defect(
    geom: &BaseGeometry,
    h: &MetricField,
    v: &CMatrix,
    w: &CMatrix,
) -> Result<f64> {
    let conn = chern_connection(geom, h)?;
    let pairing: Vec<Complex64> = (0..geom.n_nodes())
        .map(|n| (w.adjoint() * h.values.view(n) * v)[(0, 0)])
        .collect();
    let lhs = geom.d_dz(&pairing)?;
    Ok((0..geom.n_nodes())
        .map(|n| {
            let rhs = (w.adjoint() * h.values.view(n) * conn.dz.view(n) * v)[(0, 0)];
            (lhs[n] - rhs).norm()
        })
        .fold(0.0, f64::max))
}

/// `sup ‖H Θ_c − (H Θ_c)*‖`.
pub fn curvature_hermitian_defect(h: &MetricField, curv: &CurvatureField) -> Result<f64> {
    let d = h
        .values
        .zip_map(&curv.coefficient, |_, hv, th| {
            let x = hv * th;
            &x - x.adjoint()
        })?;
    Ok(d.sup_norm())
}

/// `ΛΘ − γ Id` with `γ = 2π μ(E)` (unit volume).
pub fn he_defect(h: &MetricField, curv: &CurvatureField) -> MatrixField {
    let gamma = 2.0 * PI * h.bundle().slope();
    let r = h.rank();
    curv.mean.map(|_, m| m - identity(r) * Complex64::new(gamma, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn geom() -> BaseGeometry {
        BaseGeometry::new(32, 64).unwrap()
    }

    fn bundle(s: &[i64]) -> BundleSpec {
        BundleSpec::new(s.to_vec()).unwrap()
    }

    #[test]
    fn fs_metric_is_valid() {
        let g = geom();
        for s in [vec![0], vec![1], vec![1, -1], vec![2, 0, -1]] {
            let h = fs_metric(&g, &bundle(&s));
            let d = h.validate(&g).unwrap();
            assert!(d.hermitian_defect < 1e-13);
            assert!(d.min_eigenvalue > 0.0);
            assert!(d.seam_mismatch < 1e-8, "{s:?}: {}", d.seam_mismatch);
        }
    }

    #[test]
    fn trivial_metric_is_flat() {
        let g = geom();
        let h = fs_metric(&g, &bundle(&[0]));
        assert!(h.values().entry(0, 0).iter().all(|v| (v - 1.0).norm() < 1e-15));
        let c = curvature(&g, &h).unwrap();
        assert!(c.mean.sup_norm() < 1e-9, "{}", c.mean.sup_norm());
        assert!(chern_connection(&g, &h).unwrap().dz.sup_norm() < 1e-12);
    }

    #[test]
    fn fs_connection_on_o1() {
        let g = geom();
        let h = fs_metric(&g, &bundle(&[1]));
        let a = chern_connection(&g, &h).unwrap();
        for n in 0..g.n_nodes() {
            let z = g.point(n).coord;
            let expected = -z.conj() / (1.0 + z.norm_sqr());
            assert!((a.dz.at(n)[(0, 0)] - expected).norm() < 1e-8);
        }
    }

    #[test]
    fn fs_curvature_is_2pi_k_omega() {
        let g = geom();
        for k in [1i64, 2, -3] {
            let h = fs_metric(&g, &bundle(&[k]));
            let c = curvature(&g, &h).unwrap();
            for n in 0..g.n_nodes() {
                assert!((c.mean.at(n)[(0, 0)] - 2.0 * PI * k as f64).norm() < 1e-7);
            }
            assert!((slope(&g, &h).unwrap() - k as f64).abs() < 1e-8);
        }
    }

    #[test]
    fn chern_weil_degree_of_split_bundles() {
        let g = geom();
        for s in [vec![1, -1], vec![2, 2], vec![2, 0, -1]] {
            let b = bundle(&s);
            let h = fs_metric(&g, &b);
            let deg = slope(&g, &h).unwrap() * b.rank() as f64;
            assert!((deg - b.degree() as f64).abs() < 1e-8);
        }
    }

    #[test]
    fn degree_is_metric_independent() {
        let g = geom();
        let b = bundle(&[1, -1]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..3 {
            let h = twisted_metric(&g, &b, &mut rng, 0.4).unwrap();
            let c = curvature(&g, &h).unwrap();
            let deg = degree_of(&g, &c).unwrap();
            assert!(deg.abs() < 1e-6, "{deg}");
            let hd = curvature_hermitian_defect(&h, &c).unwrap(); assert!(hd < 1e-6, "{hd}");
            assert!(curvature_seam_diagnostic(&g, &h, &c).unwrap() < SEAM_TOLERANCE);
        }
    }

    #[test]
    fn conformal_change_shifts_curvature() {
        // h = e^φ h_FS on O(1) with φ = |z|²/(1+|z|²): ΛΘ changes by −∂∂̄φ/ρ.
        let g = geom();
        let b = bundle(&[1]);
        let fs = fs_metric(&g, &b);
        let phi = g.sample(|p| match p.chart {
            Chart::Origin => p.r2() / (1.0 + p.r2()),
            Chart::Infinity => 1.0 / (1.0 + p.r2()),
        });
        let h = MetricField::new(
            &g,
            &b,
            fs.values().map(|n, m| m * Complex64::new(phi[n].exp(), 0.0)),
        )
        .unwrap();
        let c = curvature(&g, &h).unwrap();
        // finite-difference oracle for ∂∂̄φ: φ is radial, φ(r) with Δ = 4∂∂̄.
        let rho = g.kahler_density();
        for n in 0..g.n_nodes() {
            let p = g.point(n);
            let r = p.coord.norm();
            let f = |r: f64| {
                let s = r * r;
                match p.chart {
                    Chart::Origin => s / (1.0 + s),
                    Chart::Infinity => 1.0 / (1.0 + s),
                }
            };
            let hstep = 1e-4;
            let f_rr = (f(r + hstep) - 2.0 * f(r) + f(r - hstep)) / (hstep * hstep);
            let f_r = (f(r + hstep) - f(r - hstep)) / (2.0 * hstep);
            let lap = f_rr + f_r / r;
            let ddbar = lap / 4.0;
            let expected = 2.0 * PI - ddbar / rho[n];
            assert!((c.mean.at(n)[(0, 0)].re - expected).abs() < 1e-5 * (1.0 + expected.abs()));
        }
    }

    #[test]
    fn connection_is_metric_compatible() {
        let g = geom();
        let b = bundle(&[1, -1]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = twisted_metric(&g, &b, &mut rng, 0.3).unwrap();
        let v = CMatrix::from_column_slice(2, 1, &[Complex64::new(0.3, 1.0), Complex64::new(-0.7, 0.2)]);
        let w = CMatrix::from_column_slice(2, 1, &[Complex64::new(1.1, -0.4), Complex64::new(0.5, 0.9)]);
        assert!(compatibility_defect(&g, &h, &v, &w).unwrap() < 1e-8);
    }

    #[test]
    fn connection_trace_is_unitary_gauge_invariant() {
        let g = BaseGeometry::new(16, 32).unwrap();
        let b = bundle(&[1, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = twisted_metric(&g, &b, &mut rng, 0.3).unwrap();
        let u = endo::random_unitary(2, &mut rng);
        let a = chern_connection(&g, &h).unwrap();
        let hg = h.gauge(&u);
        let ag = chern_connection(&g, &hg).unwrap();
        for n in 0..g.n_nodes() {
            assert!((a.dz.at(n).trace() - ag.dz.at(n).trace()).norm() < 1e-10);
        }
        let c = curvature(&g, &h).unwrap();
        let cg = curvature(&g, &hg).unwrap();
        let uinv = u.adjoint();
        for n in 0..g.n_nodes() {
            let expected = &uinv * c.coefficient.at(n) * &u;
            assert!((cg.coefficient.at(n) - &expected).norm() < 1e-8, "{}", (cg.coefficient.at(n) - &expected).norm());
        }
    }

    #[test]
    fn product_metric_has_no_second_fundamental_form() {
        let g = geom();
        let b = bundle(&[1, -1]);
        let f = Filtration::new(&b, vec![vec![0, 1], vec![0]], vec![1.0, 0.0]).unwrap();
        let sff = second_fundamental_form(&g, &fs_metric(&g, &b), &f).unwrap();
        assert!(sff.dzbar.sup_norm() < 1e-10 || sff.dzbar_block(0, 1, 0).norm() < 1e-10);
        let worst = (0..g.n_nodes())
            .map(|n| sff.dzbar_block(n, 1, 0).norm())
            .fold(0.0, f64::max);
        assert!(worst < 1e-10);
    }

    #[test]
    fn twisted_metric_second_fundamental_form() {
        let g = geom();
        let b = bundle(&[1, -1]);
        let f = Filtration::new(&b, vec![vec![0, 1], vec![0]], vec![1.0, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = twisted_metric(&g, &b, &mut rng, 0.5).unwrap();
        let sff = second_fundamental_form(&g, &h, &f).unwrap();
        let worst = (0..g.n_nodes())
            .map(|n| sff.dzbar_block(n, 1, 0).norm())
            .fold(0.0, f64::max);
        assert!(worst > 1e-3);
        assert!(sff.adjoint_residual() < 1e-8);
        assert!(sff.type_defect() < 1e-8);
    }

    #[test]
    fn diagonal_blocks_are_quotient_connections() {
        let g = geom();
        let b = bundle(&[2, 1, 0]);
        let f = Filtration::new(&b, vec![vec![0, 1, 2], vec![0, 1], vec![0]], vec![2.0, 1.0, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = twisted_metric(&g, &b, &mut rng, 0.4).unwrap();
        let sff = second_fundamental_form(&g, &h, &f).unwrap();
        let order = f.adapted_order();
        for (pos, &k) in order.iter().enumerate() {
            let deeper = &order[pos + 1..];
            let log_hf: Vec<Complex64> = (0..g.n_nodes())
                .map(|n| Complex64::new(quotient_line_metric(&h.at(n), k, deeper).ln(), 0.0))
                .collect();
            let d = g.d_dz(&log_hf).unwrap();
            let dbar = g.d_dzbar(&log_hf).unwrap();
            for n in 0..g.n_nodes() {
                let p = sff.dz.at(n)[(pos, pos)];
                let q = sff.dzbar.at(n)[(pos, pos)];
                assert!((p - d[n] * 0.5).norm() < 1e-8, "node {n} pos {pos}");
                assert!((q + dbar[n] * 0.5).norm() < 1e-8);
            }
        }
    }
}
