//! Hermitian-Yang-Mills flow `∂_t h · h^{-1} = −(ΛΘ − γ Id)`.
//!
//! Steps are explicit, `H ← H e^{−dt K}` with `K = ΛΘ − γ Id`, but the
//! increment of the global endomorphism `P = H_FS^{-1} H` is projected onto
//! sections of bounded degree before it is applied. Entry `(i, j)` of `P` is a
//! section of `O(d)`, `d = k_i − k_j`, and is projected in `L²(ω)` onto
//! `span{ z^a z̄^b/(1+|z|²)^N : a ≤ N + d, b ≤ N }` with
//! `N = L − ⌈d/2⌉`. This keeps the stiff high modes of the grid out of the
//! explicit scheme, so `dt` is limited by the degree `L` rather than by the
//! node spacing near the chart seam.
//!
//! `M(h_k, h₀)` is accumulated through the cocycle identity
//! `M(h_{k+1}, h₀) = M(h_k, h₀) + M(h_{k+1}, h_k)`.

use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::calculus::{self, MetricField};
use crate::donaldson;
use crate::endo::EndoField;
use crate::error::{Error, Result};
use crate::field::{hermitian_part, identity, CMatrix, MatrixField};
use crate::geometry::BaseGeometry;
use crate::linalg;

/// Sup over nodes of the `h`-norm of `ΛΘ − γ Id`.
pub fn he_residual(geom: &BaseGeometry, h: &MetricField) -> Result<f64> {
    let curv = calculus::curvature(geom, h)?;
    Ok(residual_of(h, &calculus::he_defect(h, &curv)))
}

fn residual_of(h: &MetricField, k: &MatrixField) -> f64 {
    k.scalar_map(|n, m| linalg::h_norm_sqr(h.values().view(n), &m.into_owned()).max(0.0).sqrt())
        .into_iter()
        .fold(0.0, f64::max)
}

/// `L²(ω)` projection of sections of `O(d)` onto bounded-degree sections,
/// one angular mode at a time.
#[derive(Clone, Debug)]
pub struct DegreeFilter {
    degree: usize,
    /// For each `d`, per chart-0 wavenumber `m`, an orthonormal basis of the
    /// weighted radial samples (chart 0 rings followed by chart 1 rings).
    bases: HashMap<i64, Vec<(i64, DMatrix<f64>)>>,
    /// `√W_j (1+r_j²)^{-d/2}` for each `d`.
    scales: HashMap<i64, Vec<f64>>,
}

impl DegreeFilter {
    pub fn new(geom: &BaseGeometry, degrees: &[i64], degree: usize) -> Result<Self> {
        let nr = geom.n_radial();
        let radii = geom.radii();
        let mut bases = HashMap::new();
        let mut scales = HashMap::new();
        for &d in degrees {
            if bases.contains_key(&d) {
                continue;
            }
            let ceil_half = -(-d).div_euclid(2);
            let n = (degree as i64 - ceil_half).max(0).max(-d);
            let half = geom.n_angular() as i64 / 2;
            if n.max(n + d) >= half {
                return Err(Error::InvalidArgument(format!(
                    "filter degree {degree} needs more than {} angular nodes",
                    geom.n_angular()
                )));
            }
            let scale: Vec<f64> = radii
                .iter()
                .zip(geom.radial_weights())
                .map(|(&r, &w)| {
                    let weight = 2.0 * w * r / (1.0 + r * r).powi(2);
                    weight.sqrt() * (1.0 + r * r).powf(-(d as f64) / 2.0)
                })
                .collect();
            let mut per_mode = Vec::new();
            for m in -n..=n + d {
                let cols: Vec<(i64, i64)> = (0..=n)
                    .map(|b| (b + m, b))
                    .filter(|&(a, _)| a >= 0 && a <= n + d)
                    .collect();
                if cols.is_empty() {
                    continue;
                }
                let mut basis = DMatrix::<f64>::zeros(2 * nr, cols.len());
                for (c, &(a, b)) in cols.iter().enumerate() {
                    for j in 0..nr {
                        let r = radii[j];
                        let den = (1.0 + r * r).powi(n as i32);
                        basis[(j, c)] = scale[j] * r.powi((a + b) as i32) / den;
                        let p1 = (d - a + n) + (n - b);
                        basis[(nr + j, c)] = scale[j] * r.powi(p1 as i32) / den;
                    }
                }
                let svd = basis.svd(true, false);
                let u = svd.u.expect("requested U");
                let smax = svd.singular_values.max();
                let keep: Vec<usize> = (0..svd.singular_values.len())
                    .filter(|&k| svd.singular_values[k] > 1e-12 * smax)
                    .collect();
                let ortho = DMatrix::from_fn(2 * nr, keep.len(), |i, k| u[(i, keep[k])]);
                per_mode.push((m, ortho));
            }
            bases.insert(d, per_mode);
            scales.insert(d, scale);
        }
        Ok(Self { degree, bases, scales })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Projects samples of a section of `O(d)` (both charts, node order).
    pub fn apply(&self, geom: &BaseGeometry, d: i64, field: &[Complex64]) -> Result<Vec<Complex64>> {
        let (bases, scale) = match (self.bases.get(&d), self.scales.get(&d)) {
            (Some(b), Some(s)) => (b, s),
            _ => return Err(Error::InvalidArgument(format!("filter has no basis for O({d})"))),
        };
        let nr = geom.n_radial();
        let na = geom.n_angular();
        let per = geom.nodes_per_chart();
        let inner = geom.rings_forward(&field[..per]);
        let outer = geom.rings_forward(&field[per..]);
        let mut inner_out = vec![Complex64::new(0.0, 0.0); per];
        let mut outer_out = vec![Complex64::new(0.0, 0.0); per];
        let mut x = nalgebra::DVector::<Complex64>::zeros(2 * nr);
        for (m, basis) in bases {
            let b0 = geom.bin_of(*m);
            let b1 = geom.bin_of(d - m);
            for j in 0..nr {
                x[j] = inner[j * na + b0] * scale[j];
                x[nr + j] = outer[j * na + b1] * scale[j];
            }
            let basis_c = basis.map(|v| Complex64::new(v, 0.0));
            let y = &basis_c * (basis_c.adjoint() * &x);
            for j in 0..nr {
                inner_out[j * na + b0] = y[j] / scale[j];
                outer_out[j * na + b1] = y[nr + j] / scale[j];
            }
        }
        let mut out = geom.rings_inverse(&inner_out);
        out.extend(geom.rings_inverse(&outer_out));
        Ok(out)
    }

    /// Entrywise projection of an endomorphism field of a split bundle.
    pub fn apply_endo(&self, geom: &BaseGeometry, splitting: &[i64], x: &MatrixField) -> Result<MatrixField> {
        let r = splitting.len();
        let mut out = MatrixField::zeros(r, x.n_nodes());
        for i in 0..r {
            for j in 0..r {
                let filtered = self.apply(geom, splitting[i] - splitting[j], &x.entry(i, j))?;
                out.set_entry(i, j, &filtered);
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub dt: f64,
    pub max_steps: usize,
    pub target_residual: f64,
    /// Degree `L` of the increment filter.
    pub filter_degree: usize,
    /// Consecutive step halvings allowed before giving up.
    pub max_halvings: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            dt: 1.5e-3,
            max_steps: 10_000,
            target_residual: 1e-6,
            filter_degree: 12,
            max_halvings: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub step: usize,
    pub time: f64,
    pub he_residual: f64,
    pub m_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FlowStatus {
    Converged,
    MaxSteps,
    Diverged { reason: String },
}

#[derive(Clone, Debug)]
pub struct FlowState {
    pub h: MetricField,
    pub time: f64,
    pub he_residual: f64,
    pub m_value: f64,
    pub step_count: usize,
}

#[derive(Clone, Debug)]
pub struct FlowOutcome {
    pub status: FlowStatus,
    pub trajectory: Vec<FlowRecord>,
    /// Last accepted state.
    pub state: FlowState,
}

impl FlowOutcome {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,time,he_residual,m_value\n");
        for r in &self.trajectory {
            let _ = writeln!(out, "{},{:.16e},{:.16e},{:.16e}", r.step, r.time, r.he_residual, r.m_value);
        }
        out
    }

    /// Largest increase of `M` between consecutive records.
    pub fn max_m_increase(&self) -> f64 {
        self.trajectory
            .windows(2)
            .map(|p| p[1].m_value - p[0].m_value)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `log(H^{-1} H_next)`, the `h`-self-adjoint endomorphism with
/// `H_next = H e^{w}`.
fn log_ratio(h: &MetricField, next: &MetricField) -> Result<EndoField> {
    let values = h.values().zip_map(next.values(), |_, a, b| {
        let a = a.into_owned();
        let ratio = a.clone().try_inverse().expect("metric is invertible") * b;
        match linalg::selfadjoint_eigen(&a, &ratio) {
            Some(e) => {
                let logs: Vec<f64> = e.values.iter().map(|v| v.ln()).collect();
                &e.frame * crate::field::real_diag(&logs) * &e.frame_inv
            }
            None => CMatrix::from_element(a.nrows(), a.nrows(), Complex64::new(f64::NAN, 0.0)),
        }
    })?;
    EndoField::project(h, &values, false)
}

fn fs_values(geom: &BaseGeometry, h: &MetricField) -> MatrixField {
    calculus::fs_metric(geom, h.bundle()).values().clone()
}

struct Step {
    next: MetricField,
    dt: f64,
}

fn try_step(
    geom: &BaseGeometry,
    h: &MetricField,
    k: &MatrixField,
    fs: &MatrixField,
    fs_inv: &MatrixField,
    filter: &DegreeFilter,
    dt: f64,
) -> Option<MetricField> {
    let raw = h
        .values()
        .zip_map(k, |_, hv, kv| {
            let hv = hv.into_owned();
            let step = crate::endo::self_adjoint_part(&hv, &(kv * Complex64::new(-dt, 0.0)));
            linalg::metric_along(&hv, &step, 1.0).unwrap_or_else(|| hv.map(|_| Complex64::new(f64::NAN, 0.0)))
        })
        .ok()?;
    let dp = raw.sub(h.values()).ok()?.zip_map(fs_inv, |_, d, f| f * d).ok()?;
    let dp = filter.apply_endo(geom, h.bundle().splitting(), &dp).ok()?;
    let next = h
        .values()
        .zip_map(&dp, |n, hv, d| hermitian_part(&(hv + fs.view(n) * d)))
        .ok()?;
    if !next.is_finite() {
        return None;
    }
    let positive = next
        .scalar_map(|_, m| linalg::min_eigenvalue(&m.into_owned()))
        .into_iter()
        .all(|v| v > 0.0);
    if !positive {
        return None;
    }
    MetricField::new(geom, h.bundle(), next).ok()
}

/// Runs the flow from `h0`, recording every accepted step.
pub fn hym_run(geom: &BaseGeometry, h0: &MetricField, config: &FlowConfig) -> Result<FlowOutcome> {
    if !(config.dt > 0.0) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {}", config.dt)));
    }
    let splitting = h0.bundle().splitting().to_vec();
    let degrees: Vec<i64> = splitting
        .iter()
        .flat_map(|a| splitting.iter().map(move |b| a - b))
        .collect();
    let filter = DegreeFilter::new(geom, &degrees, config.filter_degree)?;
    let fs = fs_values(geom, h0);
    let fs_inv = fs.map(|_, m| m.into_owned().try_inverse().expect("FS metric is invertible"));
    let r = h0.rank();

    let mut h = h0.clone();
    let mut time = 0.0;
    let mut m_value = 0.0;
    let mut trajectory = Vec::new();
    let mut step_count = 0;
    let status = loop {
        let curv = calculus::curvature(geom, &h)?;
        let defect = calculus::he_defect(&h, &curv);
        let residual = residual_of(&h, &defect);
        let mean_trace = geom.integrate(&defect.scalar_map(|_, m| m.trace().re))?;
        let k = defect.map(|_, m| m - identity(r) * Complex64::new(mean_trace / r as f64, 0.0));
        trajectory.push(FlowRecord {
            step: step_count,
            time,
            he_residual: residual,
            m_value,
        });
        if !residual.is_finite() {
            break FlowStatus::Diverged {
                reason: "non-finite residual".into(),
            };
        }
        if residual < config.target_residual {
            break FlowStatus::Converged;
        }
        if step_count >= config.max_steps {
            break FlowStatus::MaxSteps;
        }
        let mut dt = config.dt;
        let mut accepted = None;
        for _ in 0..=config.max_halvings {
            if let Some(next) = try_step(geom, &h, &k, &fs, &fs_inv, &filter, dt) {
                accepted = Some(Step { next, dt });
                break;
            }
            dt /= 2.0;
        }
        let Some(step) = accepted else {
            break FlowStatus::Diverged {
                reason: format!("no admissible step down to dt = {dt:e}"),
            };
        };
        let w = log_ratio(&h, &step.next)?;
        m_value += donaldson::m_spectral_with(geom, &h, &curv.mean, &w)?;
        h = step.next;
        time += step.dt;
        step_count += 1;
    };
    let last = trajectory.last().cloned().expect("trajectory has the initial record");
    Ok(FlowOutcome {
        status,
        state: FlowState {
            h,
            time: last.time,
            he_residual: last.he_residual,
            m_value: last.m_value,
            step_count,
        },
        trajectory,
    })
}
