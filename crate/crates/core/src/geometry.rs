//! The Riemann sphere as two unit disks glued along the unit circle.
//!
//! Chart [`Chart::Origin`] uses the coordinate `z` on `|z| <= 1`, chart
//! [`Chart::Infinity`] uses `w = 1/z` on `|w| <= 1`. Each disk carries a
//! polar product grid: Gauss-Legendre nodes in the radius and equispaced
//! angles. The Kähler form is the Fubini-Study form scaled to total volume 1,
//!
//! ```text
//! ω = (1/π) dx dy / (1 + |z|²)²  =  ρ(z) · i dz∧dz̄,   ρ = 1 / (2π (1 + |z|²)²)
//! ```
//!
//! and the same expression in `w` on the second chart. Angular derivatives are
//! taken spectrally (FFT per ring); radial derivatives use the polynomial
//! interpolant through all radial nodes of a ray.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Smallest accepted number of radial or angular nodes.
pub const MIN_GRID: usize = 8;

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Chart {
    /// `|z| <= 1`.
    Origin,
    /// `|w| <= 1`, `w = 1/z`.
    Infinity,
}

impl Chart {
    pub const ALL: [Chart; 2] = [Chart::Origin, Chart::Infinity];

    pub fn index(self) -> usize {
        match self {
            Chart::Origin => 0,
            Chart::Infinity => 1,
        }
    }
}

/// A grid node expressed in the coordinate of its own chart.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChartPoint {
    pub chart: Chart,
    pub coord: Complex64,
}

impl ChartPoint {
    /// The affine coordinate `z` of the point, `None` at `z = ∞`.
    pub fn global_z(&self) -> Option<Complex64> {
        match self.chart {
            Chart::Origin => Some(self.coord),
            Chart::Infinity => {
                if self.coord.norm_sqr() == 0.0 {
                    None
                } else {
                    Some(self.coord.inv())
                }
            }
        }
    }

    /// `|coord|²`.
    pub fn r2(&self) -> f64 {
        self.coord.norm_sqr()
    }
}

/// Discretized CP¹ with quadrature and differentiation data.
#[derive(Clone)]
pub struct BaseGeometry {
    n_radial: usize,
    n_angular: usize,
    radii: Vec<f64>,
    radial_weights: Vec<f64>,
    angles: Vec<f64>,
    weights: Vec<f64>,
    kahler_density: Vec<f64>,
    volume: f64,
    // row-major n_radial x n_radial
    radial_diff: Vec<f64>,
    boundary_interp: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for BaseGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BaseGeometry")
            .field("n_radial", &self.n_radial)
            .field("n_angular", &self.n_angular)
            .field("volume", &self.volume)
            .finish_non_exhaustive()
    }
}

impl PartialEq for BaseGeometry {
    fn eq(&self, other: &Self) -> bool {
        self.n_radial == other.n_radial && self.n_angular == other.n_angular
    }
}

/// Gauss-Legendre nodes and weights on `[0, 1]`, ascending.
///
/// Golub-Welsch: the nodes are the eigenvalues of the Jacobi matrix of the
/// Legendre recurrence, the weights come from the first eigenvector components.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let kf = k as f64;
        let beta = kf / (4.0 * kf * kf - 1.0).sqrt();
        jacobi[(k - 1, k)] = beta;
        jacobi[(k, k - 1)] = beta;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|j| {
            let v0 = eig.eigenvectors[(0, j)];
            (0.5 * (eig.eigenvalues[j] + 1.0), v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

fn barycentric_weights(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|j| {
            let prod: f64 = (0..n).filter(|&k| k != j).map(|k| x[j] - x[k]).product();
            1.0 / prod
        })
        .collect()
}

impl BaseGeometry {
    pub fn new(n_radial: usize, n_angular: usize) -> Result<Self> {
        if n_radial < MIN_GRID || n_angular < MIN_GRID {
            return Err(Error::GridTooSmall {
                n_radial,
                n_angular,
                min: MIN_GRID,
            });
        }
        let (radii, radial_weights) = gauss_legendre_unit(n_radial);
        let angles: Vec<f64> = (0..n_angular)
            .map(|k| 2.0 * PI * k as f64 / n_angular as f64)
            .collect();

        let dtheta = 2.0 * PI / n_angular as f64;
        let per_chart = n_radial * n_angular;
        let mut weights = Vec::with_capacity(2 * per_chart);
        let mut kahler_density = Vec::with_capacity(2 * per_chart);
        for _chart in Chart::ALL {
            for (&r, &wr) in radii.iter().zip(&radial_weights) {
                let fs = 1.0 / (PI * (1.0 + r * r).powi(2));
                for _ in 0..n_angular {
                    weights.push(wr * r * dtheta * fs);
                    kahler_density.push(fs / 2.0);
                }
            }
        }
        let volume = weights.iter().sum();

        let bary = barycentric_weights(&radii);
        let mut radial_diff = vec![0.0; n_radial * n_radial];
        for i in 0..n_radial {
            let mut diag = 0.0;
            for j in 0..n_radial {
                if i != j {
                    let d = (bary[j] / bary[i]) / (radii[i] - radii[j]);
                    radial_diff[i * n_radial + j] = d;
                    diag -= d;
                }
            }
            radial_diff[i * n_radial + i] = diag;
        }
        let terms: Vec<f64> = radii
            .iter()
            .zip(&bary)
            .map(|(&x, &b)| b / (1.0 - x))
            .collect();
        let total: f64 = terms.iter().sum();
        let boundary_interp = terms.iter().map(|t| t / total).collect();

        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n_angular);
        let ifft = planner.plan_fft_inverse(n_angular);

        Ok(Self {
            n_radial,
            n_angular,
            radii,
            radial_weights,
            angles,
            weights,
            kahler_density,
            volume,
            radial_diff,
            boundary_interp,
            fft,
            ifft,
        })
    }

    pub fn n_radial(&self) -> usize {
        self.n_radial
    }

    pub fn n_angular(&self) -> usize {
        self.n_angular
    }

    pub fn nodes_per_chart(&self) -> usize {
        self.n_radial * self.n_angular
    }

    pub fn n_nodes(&self) -> usize {
        2 * self.nodes_per_chart()
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn radial_weights(&self) -> &[f64] {
        &self.radial_weights
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    /// Quadrature weights including the Fubini-Study density.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// ω expressed against `i dz∧dz̄` (resp. `i dw∧dw̄`) at each node.
    pub fn kahler_density(&self) -> &[f64] {
        &self.kahler_density
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn node_index(&self, chart: Chart, ring: usize, k: usize) -> usize {
        chart.index() * self.nodes_per_chart() + ring * self.n_angular + k
    }

    pub fn point(&self, node: usize) -> ChartPoint {
        let per = self.nodes_per_chart();
        let chart = if node < per {
            Chart::Origin
        } else {
            Chart::Infinity
        };
        let local = node % per;
        let r = self.radii[local / self.n_angular];
        let theta = self.angles[local % self.n_angular];
        ChartPoint {
            chart,
            coord: Complex64::from_polar(r, theta),
        }
    }

    pub fn points(&self) -> impl Iterator<Item = ChartPoint> + '_ {
        (0..self.n_nodes()).map(|n| self.point(n))
    }

    /// Samples a function of the chart point at every node.
    pub fn sample<T>(&self, f: impl Fn(ChartPoint) -> T) -> Vec<T> {
        self.points().map(f).collect()
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n_nodes() {
            return Err(Error::NodeCountMismatch {
                expected: self.n_nodes(),
                got: len,
            });
        }
        Ok(())
    }

    /// `∫_X field · ω`, summed in node order.
    pub fn integrate(&self, field: &[f64]) -> Result<f64> {
        self.check_len(field.len())?;
        Ok(field.iter().zip(&self.weights).map(|(f, w)| f * w).sum())
    }

    pub fn integrate_complex(&self, field: &[Complex64]) -> Result<Complex64> {
        self.check_len(field.len())?;
        Ok(field.iter().zip(&self.weights).map(|(f, w)| f * w).sum())
    }

    /// Per-ring forward DFT of one chart's samples, unnormalized.
    pub(crate) fn rings_forward(&self, chart_data: &[Complex64]) -> Vec<Complex64> {
        let mut out = chart_data.to_vec();
        for ring in out.chunks_mut(self.n_angular) {
            self.fft.process(ring);
        }
        out
    }

    /// Inverse of [`Self::rings_forward`], including the `1/n` factor.
    pub(crate) fn rings_inverse(&self, modes: &[Complex64]) -> Vec<Complex64> {
        let mut out = modes.to_vec();
        let scale = 1.0 / self.n_angular as f64;
        for ring in out.chunks_mut(self.n_angular) {
            self.ifft.process(ring);
            for v in ring.iter_mut() {
                *v *= scale;
            }
        }
        out
    }

    /// Signed angular wavenumber of DFT bin `k`; the Nyquist bin maps to `None`.
    pub(crate) fn wavenumber(&self, k: usize) -> Option<i64> {
        let n = self.n_angular;
        if n % 2 == 0 && k == n / 2 {
            None
        } else if k <= n / 2 {
            Some(k as i64)
        } else {
            Some(k as i64 - n as i64)
        }
    }

    pub(crate) fn bin_of(&self, m: i64) -> usize {
        m.rem_euclid(self.n_angular as i64) as usize
    }

    fn chart_radial_and_angular(&self, data: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let (nr, na) = (self.n_radial, self.n_angular);
        let mut modes = self.rings_forward(data);
        for (ring, &r) in modes.chunks_mut(na).zip(&self.radii) {
            // A smooth field's mode m is O(r^|m|) near the centre; modes below
            // roundoff there are pure noise that 1/r would amplify.
            let cutoff = (36.0 / -r.ln()).max(2.0);
            for (k, v) in ring.iter_mut().enumerate() {
                *v *= match self.wavenumber(k) {
                    Some(m) if (m.abs() as f64) <= cutoff => I * m as f64,
                    _ => Complex64::new(0.0, 0.0),
                };
            }
        }
        let d_theta = self.rings_inverse(&modes);

        let mut d_r = vec![Complex64::new(0.0, 0.0); nr * na];
        for i in 0..nr {
            let row = &self.radial_diff[i * nr..(i + 1) * nr];
            let out = &mut d_r[i * na..(i + 1) * na];
            for (j, &dij) in row.iter().enumerate() {
                let src = &data[j * na..(j + 1) * na];
                for (o, s) in out.iter_mut().zip(src) {
                    *o += s * dij;
                }
            }
        }
        (d_r, d_theta)
    }

    fn wirtinger(&self, field: &[Complex64], sign: f64) -> Result<Vec<Complex64>> {
        self.check_len(field.len())?;
        let per = self.nodes_per_chart();
        let mut out = Vec::with_capacity(field.len());
        for chart in 0..2 {
            let data = &field[chart * per..(chart + 1) * per];
            let (d_r, d_theta) = self.chart_radial_and_angular(data);
            for (local, (fr, ft)) in d_r.iter().zip(&d_theta).enumerate() {
                let r = self.radii[local / self.n_angular];
                let theta = self.angles[local % self.n_angular];
                let phase = Complex64::from_polar(0.5, sign * theta);
                out.push(phase * (fr + I * sign * ft / r));
            }
        }
        Ok(out)
    }

    /// `∂f/∂z` in each chart's own coordinate.
    pub fn d_dz(&self, field: &[Complex64]) -> Result<Vec<Complex64>> {
        self.wirtinger(field, -1.0)
    }

    /// `∂f/∂z̄` in each chart's own coordinate.
    pub fn d_dzbar(&self, field: &[Complex64]) -> Result<Vec<Complex64>> {
        self.wirtinger(field, 1.0)
    }

    /// Values on the rim `|coord| = 1` of one chart, one per grid angle.
    pub fn boundary_values(&self, field: &[Complex64], chart: Chart) -> Result<Vec<Complex64>> {
        self.check_len(field.len())?;
        let per = self.nodes_per_chart();
        let data = &field[chart.index() * per..(chart.index() + 1) * per];
        let na = self.n_angular;
        Ok((0..na)
            .map(|k| {
                self.boundary_interp
                    .iter()
                    .enumerate()
                    .map(|(j, b)| data[j * na + k] * b)
                    .sum()
            })
            .collect())
    }

    /// Index of the chart-`Infinity` rim angle that meets chart-`Origin` rim angle `k`.
    ///
    /// On the seam `w = 1/z = e^{-iθ}`.
    pub fn seam_partner(&self, k: usize) -> usize {
        (self.n_angular - k) % self.n_angular
    }

    /// Largest disagreement of a global scalar field across the seam circle.
    pub fn seam_mismatch(&self, field: &[Complex64]) -> Result<f64> {
        let inner = self.boundary_values(field, Chart::Origin)?;
        let outer = self.boundary_values(field, Chart::Infinity)?;
        Ok((0..self.n_angular)
            .map(|k| (inner[k] - outer[self.seam_partner(k)]).norm())
            .fold(0.0, f64::max))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn rejects_small_grids() {
        assert!(matches!(
            BaseGeometry::new(4, 4),
            Err(Error::GridTooSmall { .. })
        ));
        assert!(BaseGeometry::new(8, 7).is_err());
    }

    #[test]
    fn volume_is_one() {
        let g = BaseGeometry::new(32, 64).unwrap();
        assert!((g.volume() - 1.0).abs() < 1e-10);
        assert!(g.weights().iter().all(|&w| w > 0.0));
        let coarse = BaseGeometry::new(8, 8).unwrap();
        assert!((coarse.volume() - 1.0).abs() < 1e-4);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre_unit(10);
        for deg in 0..19 {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg)).sum();
            assert!((q - 1.0 / (deg as f64 + 1.0)).abs() < 1e-14, "degree {deg}");
        }
    }

    #[test]
    fn integrates_inverse_conformal_factor() {
        let g = BaseGeometry::new(32, 64).unwrap();
        let f = g.sample(|p| match p.global_z() {
            Some(z) => 1.0 / (1.0 + z.norm_sqr()),
            None => 0.0,
        });
        assert!((g.integrate(&f).unwrap() - 0.5).abs() < 1e-8);
    }

    #[test]
    fn fourier_modes_integrate_to_zero() {
        let g = BaseGeometry::new(16, 32).unwrap();
        for m in 1..10 {
            let f = g.sample(|p| Complex64::from_polar(1.0, m as f64 * p.coord.arg()));
            assert!(g.integrate_complex(&f).unwrap().norm() < 1e-12);
        }
    }

    #[test]
    fn integration_is_linear_and_checks_length() {
        let g = BaseGeometry::new(16, 16).unwrap();
        let f = g.sample(|p| p.coord.re);
        let h = g.sample(|p| p.r2());
        let combo: Vec<f64> = f.iter().zip(&h).map(|(a, b)| 2.0 * a - 3.0 * b).collect();
        let lhs = g.integrate(&combo).unwrap();
        let rhs = 2.0 * g.integrate(&f).unwrap() - 3.0 * g.integrate(&h).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
        assert!(matches!(
            g.integrate(&[1.0; 3]),
            Err(Error::NodeCountMismatch { .. })
        ));
    }

    #[test]
    fn wirtinger_derivatives_of_simple_fields() {
        let g = BaseGeometry::new(32, 64).unwrap();
        let zbar = g.sample(|p| p.coord.conj());
        let z = g.sample(|p| p.coord);
        let r2 = g.sample(|p| c(p.r2()));
        let d = g.d_dzbar(&zbar).unwrap();
        assert!(d.iter().all(|v| (v - c(1.0)).norm() < 1e-10));
        assert!(g.d_dzbar(&z).unwrap().iter().all(|v| v.norm() < 1e-10));
        let dr2 = g.d_dzbar(&r2).unwrap();
        for (n, v) in dr2.iter().enumerate() {
            assert!((v - g.point(n).coord).norm() < 1e-8);
        }
        let dz = g.d_dz(&r2).unwrap();
        for (n, v) in dz.iter().enumerate() {
            assert!((v - g.point(n).coord.conj()).norm() < 1e-8);
        }
    }

    #[test]
    fn holomorphic_polynomials_are_annihilated() {
        let g = BaseGeometry::new(32, 64).unwrap();
        for deg in 0..=5 {
            let f = g.sample(|p| p.coord.powu(deg) * Complex64::new(0.3, -1.2) + 2.0);
            let d = g.d_dzbar(&f).unwrap();
            let worst = d.iter().map(|v| v.norm()).fold(0.0, f64::max);
            assert!(worst < 1e-8, "degree {deg}: {worst:e}");
        }
    }

    #[test]
    fn global_field_agrees_across_seam() {
        let g = BaseGeometry::new(24, 32).unwrap();
        // |z|²/(1+|z|²) extended by continuity, plus a real angular harmonic.
        let f = g.sample(|p| match p.chart {
            Chart::Origin => {
                let z = p.coord;
                c(z.norm_sqr() / (1.0 + z.norm_sqr())) + z * z.conj().powu(0) / (1.0 + z.norm_sqr())
            }
            Chart::Infinity => {
                let w = p.coord;
                c(1.0 / (1.0 + w.norm_sqr())) + w.conj() / (1.0 + w.norm_sqr())
            }
        });
        assert!(g.seam_mismatch(&f).unwrap() < 1e-10);
    }

    #[test]
    fn radial_derivative_converges_under_refinement() {
        let mut errs = Vec::new();
        for nr in [8, 12, 16] {
            let g = BaseGeometry::new(nr, 16).unwrap();
            let f = g.sample(|p| c(1.0 / (1.0 + p.r2())));
            let d = g.d_dzbar(&f).unwrap();
            let err = d
                .iter()
                .enumerate()
                .map(|(n, v)| {
                    let z = g.point(n).coord;
                    (v + z / (1.0 + z.norm_sqr()).powi(2)).norm()
                })
                .fold(0.0, f64::max);
            errs.push(err);
        }
        assert!(errs[1] < errs[0] && errs[2] < errs[1], "{errs:?}");
        assert!(errs[2] < 1e-6);
    }
}
