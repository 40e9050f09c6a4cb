//! Self-adjoint endomorphism fields, their spectral data and norms.

use num_complex::Complex64;
use rand::Rng;

use crate::bundle::SectionMonomial;
use crate::calculus::{self, MetricField};
use crate::error::{Error, Result};
use crate::field::{hermitian_part, identity, CMatrix, MatrixField};
use crate::geometry::BaseGeometry;
use crate::linalg;

/// Pointwise tolerance for `h₀`-self-adjointness (relative to `|H w|`).
pub const SELF_ADJOINT_TOL: f64 = 1e-12;
pub const TRACE_FREE_TOL: f64 = 1e-10;
/// Default eigenvalue clustering tolerance.
pub const CLUSTER_TOL: f64 = 1e-8;

/// An endomorphism field, self-adjoint with respect to the metric it was
/// built against.
#[derive(Clone, Debug, PartialEq)]
pub struct EndoField {
    values: MatrixField,
    trace_free: bool,
}

impl EndoField {
    /// Validates self-adjointness against `h0` (and tracelessness if asked).
    pub fn new(h0: &MetricField, values: MatrixField, trace_free: bool) -> Result<Self> {
        if values.rank() != h0.rank() {
            return Err(Error::RankMismatch {
                expected: h0.rank(),
                got: values.rank(),
            });
        }
        if values.n_nodes() != h0.values().n_nodes() {
            return Err(Error::NodeCountMismatch {
                expected: h0.values().n_nodes(),
                got: values.n_nodes(),
            });
        }
        if !values.is_finite() {
            return Err(Error::NonFinite("endomorphism"));
        }
        let defect = h0
            .values()
            .zip_map(&values, |_, h, w| {
                let hw = h * w;
                let scale = hw.norm().max(1.0);
                CMatrix::from_element(1, 1, Complex64::new((&hw - hw.adjoint()).norm() / scale, 0.0))
            })?
            .sup_norm();
        if defect > SELF_ADJOINT_TOL {
            return Err(Error::Precondition(format!(
                "endomorphism is not h0-self-adjoint (defect {defect:.3e})"
            )));
        }
        if trace_free {
            let tr = values.scalar_map(|_, w| w.trace().norm()).into_iter().fold(0.0, f64::max);
            if tr > TRACE_FREE_TOL {
                return Err(Error::Precondition(format!("trace-free field has |tr w| = {tr:.3e}")));
            }
        }
        Ok(Self { values, trace_free })
    }

    /// Projects arbitrary matrices onto `h0`-self-adjoint ones,
    /// `w ↦ H^{-1} herm(H w)`, removing the trace if asked.
    pub fn project(h0: &MetricField, values: &MatrixField, trace_free: bool) -> Result<Self> {
        let r = h0.rank();
        let projected = h0.values().zip_map(values, |_, h, w| {
            let h = h.into_owned();
            let s = hermitian_part(&(&h * w));
            let mut p = h.clone().try_inverse().unwrap_or_else(|| h.clone() * Complex64::new(f64::NAN, 0.0)) * s;
            if trace_free {
                let tr = p.trace() / r as f64;
                p -= identity(r) * Complex64::new(tr.re, 0.0);
            }
            // restore exact self-adjointness lost in the inverse
            let hinv = h.clone().try_inverse().unwrap_or_else(|| h.clone());
            hinv * hermitian_part(&(&h * p))
        })?;
        Self::new(h0, projected, trace_free)
    }

    pub fn zero(h0: &MetricField) -> Self {
        Self {
            values: MatrixField::zeros(h0.rank(), h0.values().n_nodes()),
            trace_free: true,
        }
    }

    /// A constant matrix `w` (in the chart at the origin) transported to both
    /// charts; only meaningful when `w` commutes with the transition functions.
    pub fn constant(geom: &BaseGeometry, h0: &MetricField, w: &CMatrix, trace_free: bool) -> Result<Self> {
        let values = MatrixField::from_fn(geom, w.nrows(), |_| w.clone());
        Self::new(h0, values, trace_free)
    }

    pub fn values(&self) -> &MatrixField {
        &self.values
    }

    pub fn trace_free(&self) -> bool {
        self.trace_free
    }

    pub fn rank(&self) -> usize {
        self.values.rank()
    }

    pub fn scale(&self, t: f64) -> Self {
        Self {
            values: self.values.scale(t),
            trace_free: self.trace_free,
        }
    }

    /// `a·self + b·other`; both must be self-adjoint for the same metric.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        Ok(Self {
            values: self.values.zip_map(&other.values, |_, x, y| x * Complex64::new(a, 0.0) + y * Complex64::new(b, 0.0))?,
            trace_free: self.trace_free && other.trace_free,
        })
    }

    /// Pointwise `sup` of the `h₀`-Frobenius norm.
    pub fn sup_norm(&self, h0: &MetricField) -> f64 {
        pointwise_norm_sqr(h0, &self.values)
            .into_iter()
            .fold(0.0, f64::max)
            .sqrt()
    }
}

/// `H^{-1} herm(H w)`, the nearest `H`-self-adjoint matrix in the `H`-norm.
pub fn self_adjoint_part(h: &CMatrix, w: &CMatrix) -> CMatrix {
    match h.clone().try_inverse() {
        Some(hinv) => hinv * hermitian_part(&(h * w)),
        None => w.map(|_| Complex64::new(f64::NAN, 0.0)),
    }
}

fn pointwise_norm_sqr(h0: &MetricField, x: &MatrixField) -> Vec<f64> {
    x.scalar_map(|n, m| linalg::h_norm_sqr(h0.values().view(n), &m.into_owned()).max(0.0))
}

/// Haar-like random unitary from the QR factorisation of a random matrix.
pub fn random_unitary(n: usize, rng: &mut impl Rng) -> CMatrix {
    let m = CMatrix::from_fn(n, n, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let qr = m.qr();
    let q = qr.q();
    let r = qr.r();
    let mut out = q.clone();
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        let mut col = out.column_mut(j);
        col *= phase;
    }
    out
}

/// Seeded random smooth `h0`-self-adjoint endomorphism.
///
/// Entries are combinations of the sections `z^a z̄^b/(1+|z|²)^N` of
/// `Hom(O(k_j), O(k_i))` with `a, b ≤ max_degree`, made self-adjoint for the
/// product Fubini-Study metric and then transported to `h0`. The result is
/// scaled so that its pointwise `h0`-norm peaks at `amplitude`.
pub fn random_endo(
    geom: &BaseGeometry,
    h0: &MetricField,
    rng: &mut impl Rng,
    amplitude: f64,
    max_degree: u32,
    trace_free: bool,
) -> Result<EndoField> {
    let ks = h0.bundle().splitting().to_vec();
    let r = ks.len();
    let fs = calculus::fs_metric(geom, h0.bundle());
    let mut terms: Vec<(usize, usize, SectionMonomial, Complex64)> = Vec::new();
    for i in 0..r {
        for j in i..r {
            let d = ks[i] - ks[j];
            for a in 0..=max_degree {
                for b in 0..=max_degree {
                    let c = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                    terms.push((i, j, SectionMonomial::minimal(a, b, d), c));
                }
            }
        }
    }
    let tilde = MatrixField::from_fn(geom, r, |n| {
        let p = geom.point(n);
        let r2 = p.r2();
        let mut m = CMatrix::zeros(r, r);
        for (i, j, mono, c) in &terms {
            m[(*i, *j)] += c * mono.eval(p);
        }
        for i in 0..r {
            m[(i, i)] = Complex64::new(2.0 * m[(i, i)].re, 0.0);
            for j in i + 1..r {
                m[(j, i)] = m[(i, j)].conj() * (1.0 + r2).powi((ks[j] - ks[i]) as i32);
            }
        }
        m
    });
    let values = h0.values().zip_map(&tilde, |n, h, wt| {
        h.into_owned().try_inverse().expect("metric is invertible") * fs.values().view(n) * wt
    })?;
    let w = EndoField::project(h0, &values, trace_free)?;
    let sup = w.sup_norm(h0);
    if sup == 0.0 {
        return Ok(w);
    }
    Ok(w.scale(amplitude / sup))
}

/// Per-node eigen-structure of `w` together with `∂̄w` in the eigenframe.
#[derive(Clone, Debug)]
pub struct SpectralData {
    /// Descending eigenvalues at each node.
    pub eigenvalues: Vec<Vec<f64>>,
    /// Sizes of consecutive eigenvalue clusters at each node.
    pub clusters: Vec<Vec<usize>>,
    /// The `dz̄` coefficient of `∂̄w` in the `h₀`-unitary eigenframe.
    pub eta: MatrixField,
}

impl SpectralData {
    /// Block `η^i_j` at a node.
    pub fn eta_block(&self, node: usize, i: usize, j: usize) -> CMatrix {
        let ranges = cluster_ranges(&self.clusters[node]);
        let (ri, rj) = (&ranges[i], &ranges[j]);
        self.eta
            .view(node)
            .view((ri.start, rj.start), (ri.len(), rj.len()))
            .into_owned()
    }
}

fn cluster_ranges(sizes: &[usize]) -> Vec<std::ops::Range<usize>> {
    let mut start = 0;
    sizes
        .iter()
        .map(|s| {
            let r = start..start + s;
            start += s;
            r
        })
        .collect()
}

fn cluster(values: &[f64], tol: f64) -> Vec<usize> {
    let mut sizes = vec![1usize];
    for k in 1..values.len() {
        if values[k - 1] - values[k] <= tol {
            *sizes.last_mut().unwrap() += 1;
        } else {
            sizes.push(1);
        }
    }
    sizes
}

struct NodeSpectrum {
    values: Vec<f64>,
    clusters: Vec<usize>,
    eta: CMatrix,
}

fn node_spectrum(h: &CMatrix, w: &CMatrix, dbar: &CMatrix, tol: f64) -> Option<NodeSpectrum> {
    let e = linalg::selfadjoint_eigen(h, w)?;
    let eta = &e.frame_inv * dbar * &e.frame;
    let clusters = cluster(&e.values, tol);
    Some(NodeSpectrum {
        values: e.values,
        clusters,
        eta,
    })
}

pub fn eigen_cluster(geom: &BaseGeometry, h0: &MetricField, w: &EndoField, tol: f64) -> Result<SpectralData> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("clustering tolerance must be positive, got {tol}")));
    }
    let dbar = w.values.d_dzbar(geom)?;
    let spectra: Vec<Option<NodeSpectrum>> = (0..geom.n_nodes())
        .map(|n| node_spectrum(&h0.at(n), &w.values.at(n), &dbar.at(n), tol))
        .collect();
    let mut eigenvalues = Vec::with_capacity(spectra.len());
    let mut clusters = Vec::with_capacity(spectra.len());
    let mut etas = Vec::with_capacity(spectra.len());
    for s in spectra {
        let s = s.ok_or(Error::NonFinite("eigen-decomposition"))?;
        if s.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("eigenvalues"));
        }
        eigenvalues.push(s.values);
        clusters.push(s.clusters);
        etas.push(s.eta);
    }
    Ok(SpectralData {
        eigenvalues,
        clusters,
        eta: MatrixField::from_matrices(w.rank(), etas),
    })
}

/// `Σ_{k,l} |η_kl|² φ(λ_k − λ_l)` at one node, with `|dz̄|² = 1/ρ`.
#[cfg(test)]
fn density_entries(values: &[f64], eta: &CMatrix, rho: f64) -> f64 {
    let r = values.len();
    let mut s = 0.0;
    for k in 0..r {
        for l in 0..r {
            s += eta[(k, l)].norm_sqr() * linalg::phi(values[k] - values[l]);
        }
    }
    s / rho
}

/// Block form: eigenvalues replaced by their cluster means.
pub(crate) fn density_blocks(values: &[f64], clusters: &[usize], eta: &CMatrix, rho: f64) -> f64 {
    let ranges = cluster_ranges(clusters);
    let means: Vec<f64> = ranges
        .iter()
        .map(|r| values[r.clone()].iter().sum::<f64>() / r.len() as f64)
        .collect();
    let mut s = 0.0;
    for (i, ri) in ranges.iter().enumerate() {
        for (j, rj) in ranges.iter().enumerate() {
            let block = eta.view((ri.start, rj.start), (ri.len(), rj.len()));
            s += block.norm_squared() * linalg::phi(means[i] - means[j]);
        }
    }
    s / rho
}

/// The density `f_w` at every node (block form, default clustering).
pub fn f_w(geom: &BaseGeometry, h0: &MetricField, w: &EndoField) -> Result<Vec<f64>> {
    let sd = eigen_cluster(geom, h0, w, CLUSTER_TOL)?;
    Ok(f_w_from(geom, &sd))
}

pub fn f_w_from(geom: &BaseGeometry, sd: &SpectralData) -> Vec<f64> {
    let rho = geom.kahler_density();
    (0..geom.n_nodes())
        .map(|n| density_blocks(&sd.eigenvalues[n], &sd.clusters[n], &sd.eta.at(n), rho[n]))
        .collect()
}

/// Recomputes `f_w` after the frame change `e ↦ e·u` (so `H ↦ u*Hu` and
/// `w ↦ u^{-1}wu`, `∂̄w` transforming as a tensor) and returns the largest
/// pointwise difference from the original.
pub fn gauge_invariance_check(
    geom: &BaseGeometry,
    h0: &MetricField,
    w: &EndoField,
    u: &MatrixField,
) -> Result<f64> {
    let worst_unitary = u.scalar_map(|_, m| linalg::unitarity_defect(&m.into_owned())).into_iter().fold(0.0, f64::max);
    if worst_unitary > 1e-10 {
        return Err(Error::NotUnitary(worst_unitary));
    }
    let dbar = w.values.d_dzbar(geom)?;
    let rho = geom.kahler_density();
    let diffs: Vec<f64> = (0..geom.n_nodes())
        .map(|n| {
            let h = h0.at(n);
            let wv = w.values.at(n);
            let d = dbar.at(n);
            let un = u.at(n);
            let uinv = un.adjoint();
            let orig = node_spectrum(&h, &wv, &d, CLUSTER_TOL)?;
            let moved = node_spectrum(&(un.adjoint() * &h * &un), &(&uinv * &wv * &un), &(&uinv * &d * &un), CLUSTER_TOL)?;
            let a = density_blocks(&orig.values, &orig.clusters, &orig.eta, rho[n]);
            let b = density_blocks(&moved.values, &moved.clusters, &moved.eta, rho[n]);
            Some((a - b).abs())
        })
        .collect::<Option<_>>()
        .ok_or(Error::NonFinite("eigen-decomposition"))?;
    Ok(diffs.into_iter().fold(0.0, f64::max))
}

fn check_p(p: f64) -> Result<()> {
    if p >= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("Lebesgue exponent must be at least 1, got {p}")))
    }
}

fn lp_of(geom: &BaseGeometry, sq: &[f64], p: f64) -> Result<f64> {
    let integrand: Vec<f64> = sq.iter().map(|s| s.powf(p / 2.0)).collect();
    Ok(geom.integrate(&integrand)?.max(0.0).powf(1.0 / p))
}

/// `(∫ tr(w w†)^{p/2} ω)^{1/p}`.
pub fn lp_norm(geom: &BaseGeometry, h0: &MetricField, w: &EndoField, p: f64) -> Result<f64> {
    check_p(p)?;
    lp_of(geom, &pointwise_norm_sqr(h0, &w.values), p)
}

/// `‖w‖_{L^p} + ‖∂̄w‖_{L^p}`, with `|∂̄w|² = tr(b b†)/ρ` for `∂̄w = b dz̄`.
pub fn w1p_norm(geom: &BaseGeometry, h0: &MetricField, w: &EndoField, p: f64) -> Result<f64> {
    check_p(p)?;
    let dbar = w.values.d_dzbar(geom)?;
    let rho = geom.kahler_density();
    let sq: Vec<f64> = pointwise_norm_sqr(h0, &dbar)
        .into_iter()
        .zip(rho)
        .map(|(s, r)| s / r)
        .collect();
    Ok(lp_norm(geom, h0, w, p)? + lp_of(geom, &sq, p)?)
}

/// `‖w‖_{L^{p*}} / ‖w‖_{W^{1,p}}`, a sample of the Sobolev constant.
pub fn sobolev_ratio(geom: &BaseGeometry, h0: &MetricField, w: &EndoField, p: f64, p_star: f64) -> Result<f64> {
    let top = lp_norm(geom, h0, w, p_star)?;
    let bottom = w1p_norm(geom, h0, w, p)?;
    Ok(if bottom == 0.0 { 0.0 } else { top / bottom })
}

/// `∫ tr(w u†) ω + i ∫ tr(D'w ∧ ∂̄u)`, with `†` the `h₀`-adjoint and
/// `D'w = ∂w + [A, w]`.
pub fn duality_pairing(
    geom: &BaseGeometry,
    h0: &MetricField,
    w: &MatrixField,
    u: &MatrixField,
) -> Result<Complex64> {
    if w.n_nodes() != geom.n_nodes() || u.n_nodes() != geom.n_nodes() {
        return Err(Error::NodeCountMismatch {
            expected: geom.n_nodes(),
            got: w.n_nodes().min(u.n_nodes()),
        });
    }
    let conn = calculus::chern_connection(geom, h0)?;
    let dw = w.d_dz(geom)?;
    let du = u.d_dzbar(geom)?;
    let rho = geom.kahler_density();
    let zeroth: Vec<Complex64> = (0..geom.n_nodes())
        .map(|n| {
            let h = h0.at(n);
            let uadj = linalg::h_adjoint(&h, &u.at(n)).unwrap_or_else(|| h.clone() * Complex64::new(f64::NAN, 0.0));
            (w.at(n) * uadj).trace()
        })
        .collect();
    // i dz∧dz̄ = ω/ρ
    let first: Vec<Complex64> = (0..geom.n_nodes())
        .map(|n| {
            let a = conn.dz.at(n);
            let wn = w.at(n);
            let dprime = dw.at(n) + &a * &wn - &wn * &a;
            (dprime * du.at(n)).trace() / rho[n]
        })
        .collect();
    Ok(geom.integrate_complex(&zeroth)? + geom.integrate_complex(&first)?)
}
