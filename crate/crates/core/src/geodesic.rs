//! Geodesic rays `h_t = e^{tw} h₀` built from filtrations by coordinate
//! subbundles, and the closed form of the Donaldson functional along them.
//!
//! `w` acts by `λ_i` on the `h₀`-orthogonal complement `G_i` of `E_{i+1}` in
//! `E_i`, so `M(tw) = c·t − Σ_{j<i} B_ji (1 − e^{−t(λ_j − λ_i)})` where `c` is
//! [`Filtration::slope_coefficient`] and `B_ji = ∫ |β_ji|² ω` measures the
//! second fundamental form between `G_j` and the deeper `G_i`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bundle::Filtration;
use crate::calculus::{self, adapted_frame, MetricField, SecondFundamentalForm};
use crate::donaldson::{self, Route};
use crate::endo::EndoField;
use crate::error::{Error, Result};
use crate::field::{CMatrix, MatrixField};
use crate::geometry::BaseGeometry;
use crate::lemmas::{self, WitnessResult};

fn check_bundle(f: &Filtration, h0: &MetricField) -> Result<()> {
    if f.bundle() != h0.bundle() {
        return Err(Error::InvalidFiltration(
            "filtration and metric live on different bundles".into(),
        ));
    }
    Ok(())
}

/// Weight of each adapted-frame position.
fn position_weights(f: &Filtration) -> Vec<f64> {
    f.quotient_ranks()
        .iter()
        .zip(f.weights())
        .flat_map(|(&r, &l)| std::iter::repeat_n(l, r))
        .collect()
}

/// `w = T Λ T^{-1}` with `T` the `h₀`-orthonormal adapted frame.
pub fn ray_from_filtration(geom: &BaseGeometry, f: &Filtration, h0: &MetricField) -> Result<EndoField> {
    check_bundle(f, h0)?;
    let order = f.adapted_order();
    let lambda = crate::field::real_diag(&position_weights(f));
    let values = MatrixField::from_fn(geom, h0.rank(), |n| {
        let t = adapted_frame(&h0.at(n), &order);
        let tinv = t.clone().try_inverse().expect("adapted frame is invertible");
        t * &lambda * tinv
    });
    EndoField::project(h0, &values, false)
}

/// `B_ji = ∫ |β_ji|² ω` for outer quotient `j` and deeper quotient `i`,
/// returned as `b[j][i]` (zero for `i <= j`).
pub fn b_coefficients(geom: &BaseGeometry, f: &Filtration, h0: &MetricField) -> Result<Vec<Vec<f64>>> {
    let sff = calculus::second_fundamental_form(geom, h0, f)?;
    b_from_sff(geom, &sff)
}

fn b_from_sff(geom: &BaseGeometry, sff: &SecondFundamentalForm) -> Result<Vec<Vec<f64>>> {
    let m = sff.blocks.len();
    let rho = geom.kahler_density();
    let mut b = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..i {
            let dens: Vec<f64> = (0..geom.n_nodes())
                .map(|n| sff.dzbar_block(n, i, j).norm_squared() / rho[n])
                .collect();
            b[j][i] = geom.integrate(&dens)?;
        }
    }
    Ok(b)
}

/// `c·t − Σ_{j<i} B_ji (1 − e^{−t(λ_j − λ_i)})`.
pub fn closed_form_m(f: &Filtration, b: &[Vec<f64>], t: f64) -> f64 {
    let l = f.weights();
    let mut correction = 0.0;
    for i in 0..l.len() {
        for j in 0..i {
            correction += b[j][i] * -(-(t * (l[j] - l[i]))).exp_m1();
        }
    }
    f.slope_coefficient() * t - correction
}

/// The slope coefficient rewritten over stages:
/// `−2π Σ_{i≥1} (λ_{i−1} − λ_i) rk(E_i)(μ(E_i) − μ(E))`.
pub fn stage_form_slope(f: &Filtration) -> f64 {
    let bundle = f.bundle();
    let mu = bundle.slope();
    let l = f.weights();
    -2.0 * PI
        * (1..f.len())
            .map(|i| {
                let s = &f.stages()[i];
                (l[i - 1] - l[i]) * s.len() as f64 * (bundle.sub_slope(s) - mu)
            })
            .sum::<f64>()
}

/// Largest deviation of the Chern connection of `h_t`, written in the fixed
/// frame `T₀` adapted to `h₀`, from the block-rescaled connection of `h₀`:
/// the `(j, i)` block with `j < i` is predicted to scale by `e^{−t(λ_j − λ_i)}`
/// and all other blocks to stay fixed.
pub fn ray_connection_check(geom: &BaseGeometry, f: &Filtration, h0: &MetricField, t: f64) -> Result<f64> {
    check_bundle(f, h0)?;
    let sff = calculus::second_fundamental_form(geom, h0, f)?;
    let w = ray_from_filtration(geom, f, h0)?;
    let ht = h0.along(&w, t)?;
    let at = calculus::chern_connection(geom, &ht)?;
    let d_frame = sff.frame.d_dz(geom)?;
    let l = f.weights();
    let worst = (0..geom.n_nodes())
        .into_par_iter()
        .map(|n| {
            let t0 = sff.frame.at(n);
            let tinv = t0.clone().try_inverse().expect("adapted frame is invertible");
            let direct = &tinv * (d_frame.at(n) + at.dz.at(n) * &t0);
            let mut predicted = sff.dz.at(n);
            for (i, bi) in sff.blocks.iter().enumerate() {
                for (j, bj) in sff.blocks.iter().enumerate().take(i) {
                    let s = Complex64::new((-t * (l[j] - l[i])).exp(), 0.0);
                    let mut blk = predicted.view_mut((bj.start, bi.start), (bj.len(), bi.len()));
                    blk *= s;
                }
            }
            (direct - predicted).norm()
        })
        .reduce(|| 0.0, f64::max);
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RaySample {
    pub t: f64,
    pub m_direct: f64,
    pub m_closed: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RayReport {
    pub slope_coefficient: f64,
    /// `b_matrix[j][i]` for `j < i`.
    pub b_matrix: Vec<Vec<f64>>,
    pub m_samples: Vec<RaySample>,
    /// Limit of `dM/dt` from the closed form.
    pub asymptotic_slope: f64,
    /// Finite-difference slope of the direct values over the last two samples.
    pub terminal_slope: Option<f64>,
    pub max_residual: f64,
    /// Largest residual relative to `max(1, |M_closed|)`.
    pub max_relative_residual: f64,
}

impl RayReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,m_direct,m_closed,residual\n");
        for s in &self.m_samples {
            let _ = writeln!(out, "{:.16e},{:.16e},{:.16e},{:.16e}", s.t, s.m_direct, s.m_closed, s.residual);
        }
        out
    }
}

/// Evaluates `M(tw)` directly at each `t` and compares with the closed form.
pub fn ray_report(
    geom: &BaseGeometry,
    f: &Filtration,
    h0: &MetricField,
    ts: &[f64],
    route: Route,
) -> Result<RayReport> {
    if ts.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::InvalidArgument("ray parameters must be non-negative".into()));
    }
    let w = ray_from_filtration(geom, f, h0)?;
    let b = b_coefficients(geom, f, h0)?;
    let m_samples: Vec<RaySample> = ts
        .iter()
        .map(|&t| {
            let m_direct = donaldson::evaluate(geom, h0, &w.scale(t), route)?;
            let m_closed = closed_form_m(f, &b, t);
            Ok(RaySample {
                t,
                m_direct,
                m_closed,
                residual: (m_direct - m_closed).abs(),
            })
        })
        .collect::<Result<_>>()?;
    let terminal_slope = match m_samples.as_slice() {
        [.., a, z] if z.t > a.t => Some((z.m_direct - a.m_direct) / (z.t - a.t)),
        _ => None,
    };
    Ok(RayReport {
        slope_coefficient: f.slope_coefficient(),
        asymptotic_slope: f.slope_coefficient(),
        max_residual: m_samples.iter().map(|s| s.residual).fold(0.0, f64::max),
        max_relative_residual: m_samples
            .iter()
            .map(|s| s.residual / s.m_closed.abs().max(1.0))
            .fold(0.0, f64::max),
        b_matrix: b,
        m_samples,
        terminal_slope,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Destabilizer {
    /// 0-based stage index, at least 1.
    pub stage: usize,
    pub stage_slope: f64,
    pub bundle_slope: f64,
    pub witness: WitnessResult,
}

/// When the slope coefficient is non-positive, finds a stage `E_i` (`i ≥ 1`)
/// with `μ(E_i) ≥ μ(E)`, strictly when the coefficient is negative.
pub fn destabilizer_report(f: &Filtration, slope_coefficient: f64) -> Result<Option<Destabilizer>> {
    if slope_coefficient > 0.0 {
        return Ok(None);
    }
    let bundle = f.bundle();
    let mu = bundle.slope();
    let s = f.slopes();
    let a: Vec<f64> = s
        .quotients
        .iter()
        .zip(&s.quotient_ranks)
        .map(|(mq, &r)| r as f64 * (mq - mu))
        .collect();
    let witness = lemmas::alpha_sum_witness(f.weights(), &a, slope_coefficient < 0.0)?;
    Ok(witness.index.map(|stage| Destabilizer {
        stage,
        stage_slope: s.stages[stage],
        bundle_slope: mu,
        witness: witness.clone(),
    }))
}

/// Constant-frame endomorphism `T Λ T^{-1}` at a single node, for tests
/// and diagnostics.
pub fn ray_matrix(h: &CMatrix, f: &Filtration) -> CMatrix {
    let t = adapted_frame(h, &f.adapted_order());
    let tinv = t.clone().try_inverse().expect("adapted frame is invertible");
    t * crate::field::real_diag(&position_weights(f)) * tinv
}
