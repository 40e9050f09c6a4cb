//! The Donaldson functional `M(w) = M(e^w h₀, h₀)`.
//!
//! Both formulations include the normalisation `−γ ∫ tr w ω` with
//! `γ = 2π μ(E)`, so `M` vanishes on pure rescalings `w = c·Id`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calculus::{self, MetricField};
use crate::endo::{self, EndoField};
use crate::error::{Error, Result};
use crate::geometry::BaseGeometry;

pub const DEFAULT_PATH_STEPS: usize = 64;
/// Relative agreement expected between the two formulations on smooth input.
pub const ORACLE_REL_TOL: f64 = 1e-4;
pub const ORACLE_ABS_TOL: f64 = 1e-6;

/// `2π μ(E)`, the Einstein constant for a unit-volume curve.
pub fn gamma(h0: &MetricField) -> f64 {
    2.0 * PI * h0.bundle().slope()
}

fn integrate_trace_product(geom: &BaseGeometry, w: &EndoField, mean: &crate::field::MatrixField) -> Result<f64> {
    let tr: Vec<f64> = w.values().zip_map(mean, |_, a, b| {
        crate::field::CMatrix::from_element(1, 1, (a * b).trace())
    })?.raw().iter().map(|c| c.re).collect();
    geom.integrate(&tr)
}

fn integrate_trace(geom: &BaseGeometry, w: &EndoField) -> Result<f64> {
    let tr = w.values().scalar_map(|_, m| m.trace().re);
    geom.integrate(&tr)
}

/// `∫₀¹ ∫ tr(w ΛΘ_s) ω ds − γ ∫ tr w ω` along `h_s = e^{sw}h₀`, composite
/// Simpson in `s` (the step count is rounded up to an even number).
pub fn m_path(geom: &BaseGeometry, h0: &MetricField, w: &EndoField, n_steps: usize) -> Result<f64> {
    if n_steps < 4 {
        return Err(Error::InvalidArgument(format!("path quadrature needs at least 4 steps, got {n_steps}")));
    }
    let n = n_steps + n_steps % 2;
    let samples: Vec<f64> = (0..=n)
        .into_par_iter()
        .map(|k| {
            let s = k as f64 / n as f64;
            let hs = h0.along(w, s)?;
            let curv = calculus::curvature(geom, &hs)?;
            integrate_trace_product(geom, w, &curv.mean)
        })
        .collect::<Result<_>>()?;
    let h = 1.0 / n as f64;
    let mut acc = samples[0] + samples[n];
    for (k, v) in samples.iter().enumerate().take(n).skip(1) {
        acc += if k % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    Ok(acc * h / 3.0 - gamma(h0) * integrate_trace(geom, w)?)
}

/// `∫ f_w ω + ∫ tr(w ΛΘ₀) ω − γ ∫ tr w ω`.
pub fn m_spectral(geom: &BaseGeometry, h0: &MetricField, w: &EndoField) -> Result<f64> {
    let curv = calculus::curvature(geom, h0)?;
    m_spectral_with(geom, h0, &curv.mean, w)
}

/// [`m_spectral`] with the mean curvature of `h0` already known.
pub(crate) fn m_spectral_with(
    geom: &BaseGeometry,
    h0: &MetricField,
    mean_curvature: &crate::field::MatrixField,
    w: &EndoField,
) -> Result<f64> {
    let f = endo::f_w(geom, h0, w)?;
    Ok(geom.integrate(&f)? + integrate_trace_product(geom, w, mean_curvature)? - gamma(h0) * integrate_trace(geom, w)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionalReport {
    pub value_path: f64,
    pub value_spectral: f64,
    pub gamma: f64,
    pub discrepancy: f64,
}

impl FunctionalReport {
    pub fn within(&self, rel: f64, abs: f64) -> bool {
        self.discrepancy <= abs.max(rel * self.value_path.abs())
    }
}

pub fn functional_report(geom: &BaseGeometry, h0: &MetricField, w: &EndoField, n_steps: usize) -> Result<FunctionalReport> {
    let value_path = m_path(geom, h0, w, n_steps)?;
    let value_spectral = m_spectral(geom, h0, w)?;
    Ok(FunctionalReport {
        value_path,
        value_spectral,
        gamma: gamma(h0),
        discrepancy: (value_path - value_spectral).abs(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Route {
    Path,
    Spectral,
}

/// Values of `t ↦ M(tw)` and their second divided differences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexityProbe {
    pub ts: Vec<f64>,
    pub values: Vec<f64>,
    pub second_differences: Vec<f64>,
    pub min_second_difference: f64,
}

pub fn evaluate(geom: &BaseGeometry, h0: &MetricField, w: &EndoField, route: Route) -> Result<f64> {
    match route {
        Route::Path => m_path(geom, h0, w, DEFAULT_PATH_STEPS),
        Route::Spectral => m_spectral(geom, h0, w),
    }
}

pub fn convexity_probe(
    geom: &BaseGeometry,
    h0: &MetricField,
    w: &EndoField,
    ts: &[f64],
    route: Route,
) -> Result<ConvexityProbe> {
    if ts.len() < 3 {
        return Err(Error::InvalidArgument("convexity probe needs at least 3 points".into()));
    }
    if ts.windows(2).any(|p| !(p[1] > p[0])) {
        return Err(Error::InvalidArgument("probe points must be strictly increasing".into()));
    }
    let values: Vec<f64> = ts
        .iter()
        .map(|&t| evaluate(geom, h0, &w.scale(t), route))
        .collect::<Result<_>>()?;
    let second_differences: Vec<f64> = (1..ts.len() - 1)
        .map(|i| {
            let left = (values[i] - values[i - 1]) / (ts[i] - ts[i - 1]);
            let right = (values[i + 1] - values[i]) / (ts[i + 1] - ts[i]);
            2.0 * (right - left) / (ts[i + 1] - ts[i - 1])
        })
        .collect();
    let min_second_difference = second_differences.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(ConvexityProbe {
        ts: ts.to_vec(),
        values,
        second_differences,
        min_second_difference,
    })
}

/// One sample of the reverse Sobolev inequality
/// `‖w‖_{W^{1,p}} ≤ C·M(w) + C·(‖w‖_{L^{p*}} + 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SobolevSample {
    pub w1p: f64,
    pub lp_star: f64,
    pub m: f64,
    /// `M + ‖w‖_{L^{p*}} + 1`.
    pub denominator: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReverseSobolevReport {
    pub p: f64,
    pub p_star: f64,
    /// Smallest constant satisfying every sample, infinite if some sample
    /// has a non-positive denominator but a positive left-hand side.
    pub constant: f64,
    pub samples: Vec<SobolevSample>,
    /// `‖w‖_{W^{1,p}} − C·denominator` per sample.
    pub residuals: Vec<f64>,
}

pub fn reverse_sobolev_check(
    geom: &BaseGeometry,
    h0: &MetricField,
    samples: &[EndoField],
    p: f64,
) -> Result<ReverseSobolevReport> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("reverse Sobolev check needs samples".into()));
    }
    if !(p > 1.0 && p < 2.0) {
        return Err(Error::InvalidArgument(format!("exponent must lie in (1, 2), got {p}")));
    }
    let p_star = p / (2.0 - p);
    let data: Vec<SobolevSample> = samples
        .iter()
        .map(|w| {
            let w1p = endo::w1p_norm(geom, h0, w, p)?;
            let lp_star = endo::lp_norm(geom, h0, w, p_star)?;
            let m = m_spectral(geom, h0, w)?;
            Ok(SobolevSample {
                w1p,
                lp_star,
                m,
                denominator: m + lp_star + 1.0,
            })
        })
        .collect::<Result<_>>()?;
    let mut constant = 0.0f64;
    for s in &data {
        if s.denominator > 0.0 {
            constant = constant.max(s.w1p / s.denominator);
        } else if s.w1p > 0.0 {
            constant = f64::INFINITY;
        }
    }
    let residuals = data.iter().map(|s| s.w1p - constant * s.denominator).collect();
    Ok(ReverseSobolevReport {
        p,
        p_star,
        constant,
        samples: data,
        residuals,
    })
}
