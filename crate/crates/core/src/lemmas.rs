//! Finite-dimensional checks for the auxiliary lemmas: the suffix-sum
//! witness, block convergence of unitary conjugations, weak holomorphic
//! projections, and recovery of a filtration from a ray endomorphism.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::calculus::MetricField;
use crate::donaldson;
use crate::endo::{self, EndoField, CLUSTER_TOL};
use crate::error::{Error, Result};
use crate::field::{identity, CMatrix, MatrixField};
use crate::geometry::{BaseGeometry, ChartPoint};
use crate::linalg;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessResult {
    pub found: bool,
    /// 0-based start of the suffix, at least 1.
    pub index: Option<usize>,
    pub suffix_value: f64,
}

/// Given strictly decreasing `λ` and `a` summing to zero with
/// `Σ λ_i a_i ≤ 0` (`< 0` when `strict`), finds the smallest `i ≥ 1` whose
/// suffix sum `a_i + … + a_{m-1}` is `≥ 0` (`> 0` when `strict`).
pub fn alpha_sum_witness(lambdas: &[f64], a: &[f64], strict: bool) -> Result<WitnessResult> {
    if lambdas.len() != a.len() {
        return Err(Error::Precondition(format!(
            "{} weights but {} coefficients",
            lambdas.len(),
            a.len()
        )));
    }
    if lambdas.len() < 2 {
        return Err(Error::Precondition("need at least two terms".into()));
    }
    if lambdas.windows(2).any(|p| !(p[0] > p[1])) {
        return Err(Error::Precondition("weights must be strictly decreasing".into()));
    }
    let scale = a.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
    let total: f64 = a.iter().sum();
    if total.abs() > 1e-12 * scale {
        return Err(Error::Precondition(format!("coefficients sum to {total:e}, not 0")));
    }
    let pairing: f64 = lambdas.iter().zip(a).map(|(l, x)| l * x).sum();
    if pairing > 0.0 || (strict && pairing >= 0.0) {
        return Err(Error::Precondition(format!(
            "Σ λ_i a_i = {pairing} is not {}",
            if strict { "negative" } else { "non-positive" }
        )));
    }
    let mut best = f64::NEG_INFINITY;
    for i in 1..a.len() {
        let s: f64 = a[i..].iter().sum();
        if s > 0.0 || (!strict && s >= 0.0) {
            return Ok(WitnessResult {
                found: true,
                index: Some(i),
                suffix_value: s,
            });
        }
        best = best.max(s);
    }
    Ok(WitnessResult {
        found: false,
        index: None,
        suffix_value: best,
    })
}

/// Least-squares slope of `log y` against `log x`, ignoring non-positive values.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0 && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Confirmed,
    ConclusionFailed,
    HypothesisViolated,
}

/// Tail size and fitted decay rate of one norm sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailStat {
    pub tail: f64,
    pub rate: Option<f64>,
}

impl TailStat {
    fn new(ks: &[f64], values: &[f64]) -> Self {
        let start = values.len() - values.len().div_ceil(10);
        Self {
            tail: values[start..].iter().copied().fold(0.0, f64::max),
            rate: loglog_slope(ks, values).map(|s| -s),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockConvergence {
    /// `‖A_k D_k A_k* − D‖`.
    pub hypothesis: TailStat,
    /// `‖D_k − D‖`.
    pub diagonal: TailStat,
    /// Largest off-diagonal block of `A_k`.
    pub off_diagonal: TailStat,
    /// Largest `‖(A_k)_ii (A_k)_ii* − Id‖`.
    pub block_unitarity: TailStat,
    pub verdict: Verdict,
}

pub const CONVERGENCE_TOL: f64 = 1e-6;

/// Checks the block structure of unitary sequences with `A_k D_k A_k* → D`
/// for `D = diag(λ_1 Id, …, λ_m Id)`, `λ_1 > … > λ_m`. `ks` gives the
/// sequence positions used for the decay-rate fit.
pub fn block_convergence_check(
    ks: &[f64],
    a_seq: &[CMatrix],
    d_seq: &[CMatrix],
    d: &CMatrix,
) -> Result<BlockConvergence> {
    if a_seq.is_empty() || a_seq.len() != d_seq.len() || ks.len() != a_seq.len() {
        return Err(Error::InvalidArgument("sequences must be nonempty and of equal length".into()));
    }
    let r = d.nrows();
    if a_seq.iter().chain(d_seq).any(|m| m.shape() != (r, r)) {
        return Err(Error::InvalidArgument("block structure mismatch".into()));
    }
    let diag: Vec<f64> = (0..r).map(|i| d[(i, i)].re).collect();
    let mut blocks: Vec<std::ops::Range<usize>> = Vec::new();
    for i in 0..r {
        match blocks.last_mut() {
            Some(b) if diag[i] == diag[b.start] => b.end = i + 1,
            Some(b) if diag[i] > diag[b.start] => {
                return Err(Error::InvalidArgument("block values must be strictly decreasing".into()))
            }
            _ => blocks.push(i..i + 1),
        }
    }
    let off_diag_mass = (d - crate::field::real_diag(&diag)).norm();
    if off_diag_mass > 0.0 {
        return Err(Error::InvalidArgument("limit matrix must be diagonal".into()));
    }
    for a in a_seq {
        let defect = linalg::unitarity_defect(a);
        if defect > 1e-10 {
            return Err(Error::NotUnitary(defect));
        }
    }
    let mut hyp = Vec::new();
    let mut dd = Vec::new();
    let mut off = Vec::new();
    let mut uni = Vec::new();
    for (a, dk) in a_seq.iter().zip(d_seq) {
        hyp.push((a * dk * a.adjoint() - d).norm());
        dd.push((dk - d).norm());
        let mut worst_off = 0.0f64;
        let mut worst_uni = 0.0f64;
        for (i, bi) in blocks.iter().enumerate() {
            for (j, bj) in blocks.iter().enumerate() {
                let blk = a.view((bi.start, bj.start), (bi.len(), bj.len())).into_owned();
                if i == j {
                    worst_uni = worst_uni.max((&blk * blk.adjoint() - identity(bi.len())).norm());
                } else {
                    worst_off = worst_off.max(blk.norm());
                }
            }
        }
        off.push(worst_off);
        uni.push(worst_uni);
    }
    let hypothesis = TailStat::new(ks, &hyp);
    let diagonal = TailStat::new(ks, &dd);
    let off_diagonal = TailStat::new(ks, &off);
    let block_unitarity = TailStat::new(ks, &uni);
    let verdict = if hypothesis.tail >= CONVERGENCE_TOL {
        Verdict::HypothesisViolated
    } else if [&diagonal, &off_diagonal, &block_unitarity]
        .iter()
        .all(|s| s.tail < CONVERGENCE_TOL)
    {
        Verdict::Confirmed
    } else {
        Verdict::ConclusionFailed
    };
    Ok(BlockConvergence {
        hypothesis,
        diagonal,
        off_diagonal,
        block_unitarity,
        verdict,
    })
}

pub const PROJECTION_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionDiagnostics {
    /// `sup ‖π − π†‖` with `†` the `h₀`-adjoint.
    pub self_adjoint: f64,
    pub idempotent: f64,
    /// `sup ‖(I − π) ∂̄π‖`.
    pub holomorphic: f64,
    pub pass: bool,
}

pub fn weak_projection_check(geom: &BaseGeometry, h0: &MetricField, pi: &MatrixField) -> Result<ProjectionDiagnostics> {
    let r = pi.rank();
    let sa = pi
        .zip_map(h0.values(), |_, p, h| {
            let p = p.into_owned();
            let adj = linalg::h_adjoint(&h.into_owned(), &p).unwrap_or_else(|| p.map(|_| Complex64::new(f64::NAN, 0.0)));
            p - adj
        })?
        .sup_norm();
    let idem = pi.map(|_, p| p * p - p).sup_norm();
    let dbar = pi.d_dzbar(geom)?;
    let hol = pi.zip_map(&dbar, |_, p, d| (identity(r) - p) * d)?.sup_norm();
    let pass = [sa, idem, hol].iter().all(|v| *v <= PROJECTION_TOL);
    Ok(ProjectionDiagnostics {
        self_adjoint: sa,
        idempotent: idem,
        holomorphic: hol,
        pass,
    })
}

/// A stage recovered from a ray endomorphism.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveredStage {
    /// Splitting indices spanned by the projection.
    pub indices: Vec<usize>,
    pub slope: f64,
    pub projection: ProjectionDiagnostics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractionAnalysis {
    /// Largest spread `max − min` over the sphere of any eigenvalue branch.
    pub eigenvalue_spread: f64,
    pub eigenvalues_constant: bool,
    /// `sup` of the pointwise norm of the `η` blocks on and above the diagonal.
    pub upper_eta: f64,
    pub upper_eta_vanishes: bool,
    /// Distinct eigenvalues, descending (only when constant).
    pub weights: Vec<f64>,
    /// Stages `E_2, …, E_m`; empty unless both tests pass.
    pub stages: Vec<RecoveredStage>,
    pub bundle_slope: f64,
    pub witness: Option<WitnessResult>,
    pub t_probe: Vec<f64>,
    pub m_values: Vec<f64>,
    pub f_integrals: Vec<f64>,
    /// Fitted exponent of `t ↦ ∫ f_{tw}`.
    pub growth_exponent: Option<f64>,
}

fn modal<T: Clone + PartialEq>(items: &[T]) -> T {
    let mut best = (0usize, 0usize);
    for (i, x) in items.iter().enumerate() {
        let c = items.iter().filter(|y| *y == x).count();
        if c > best.1 {
            best = (i, c);
        }
    }
    items[best.0].clone()
}

pub fn ray_extraction_analysis(
    geom: &BaseGeometry,
    h0: &MetricField,
    w: &EndoField,
    t_probe: &[f64],
) -> Result<ExtractionAnalysis> {
    let r = w.rank();
    let sd = endo::eigen_cluster(geom, h0, w, CLUSTER_TOL)?;
    let sup_w = sd.eigenvalues.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let eigenvalue_spread = (0..r)
        .map(|k| {
            let (lo, hi) = sd
                .eigenvalues
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v[k]), hi.max(v[k])));
            hi - lo
        })
        .fold(0.0, f64::max);
    let eigenvalues_constant = eigenvalue_spread <= 1e-6 * (1.0 + sup_w);

    // Nodes whose cluster pattern differs from the typical one sit near
    // eigenvalue crossings and are skipped.
    let pattern = modal(&sd.clusters);
    let rho = geom.kahler_density();
    let dbar_sup = w.values().d_dzbar(geom)?.sup_norm();
    let mut upper_eta = 0.0f64;
    for n in 0..geom.n_nodes() {
        if sd.clusters[n] != pattern {
            continue;
        }
        for i in 0..pattern.len() {
            for j in i..pattern.len() {
                upper_eta = upper_eta.max(sd.eta_block(n, i, j).norm() / rho[n].sqrt());
            }
        }
    }
    let upper_eta_vanishes = upper_eta <= 1e-6 * (1.0 + dbar_sup);

    let bundle = h0.bundle();
    let mut weights = Vec::new();
    let mut stages = Vec::new();
    let mut witness = None;
    if eigenvalues_constant {
        let mut start = 0;
        for size in &pattern {
            weights.push(sd.eigenvalues[0][start..start + size].iter().sum::<f64>() / *size as f64);
            start += size;
        }
    }
    if eigenvalues_constant && upper_eta_vanishes && pattern.len() > 1 {
        let ranks: Vec<usize> = pattern.clone();
        for s in 1..pattern.len() {
            let offset: usize = ranks[..s].iter().sum();
            let pi = MatrixField::from_fn(geom, r, |n| {
                let e = linalg::selfadjoint_eigen(&h0.at(n), &w.values().at(n)).expect("metric is positive");
                let mut sel = CMatrix::zeros(r, r);
                for k in offset..r {
                    sel[(k, k)] = Complex64::new(1.0, 0.0);
                }
                &e.frame * sel * &e.frame_inv
            });
            let projection = weak_projection_check(geom, h0, &pi)?;
            let indices: Vec<usize> = (0..r)
                .filter(|&i| (0..r).any(|j| pi.entry(i, j).iter().any(|v| v.norm() > 1e-6)))
                .collect();
            stages.push(RecoveredStage {
                slope: bundle.sub_slope(&indices),
                indices,
                projection,
            });
        }
        // a_i = rk(F_i)(μ(F_i) − μ(E)) = deg(E_i) − deg(E_{i+1}) − rk(F_i) μ(E)
        let mu = bundle.slope();
        let mut degs = vec![bundle.degree() as f64];
        degs.extend(stages.iter().map(|s| bundle.sub_degree(&s.indices) as f64));
        degs.push(0.0);
        let a: Vec<f64> = (0..pattern.len())
            .map(|i| degs[i] - degs[i + 1] - ranks[i] as f64 * mu)
            .collect();
        let pairing: f64 = weights.iter().zip(&a).map(|(l, x)| l * x).sum();
        if pairing <= 0.0 {
            witness = alpha_sum_witness(&weights, &a, pairing < 0.0).ok();
        }
    }

    let mut m_values = Vec::new();
    let mut f_integrals = Vec::new();
    for &t in t_probe {
        let wt = w.scale(t);
        m_values.push(donaldson::m_spectral(geom, h0, &wt)?);
        f_integrals.push(geom.integrate(&endo::f_w(geom, h0, &wt)?)?);
    }
    let growth_exponent = loglog_slope(t_probe, &f_integrals);
    Ok(ExtractionAnalysis {
        eigenvalue_spread,
        eigenvalues_constant,
        upper_eta,
        upper_eta_vanishes,
        weights,
        stages,
        bundle_slope: bundle.slope(),
        witness,
        t_probe: t_probe.to_vec(),
        m_values,
        f_integrals,
        growth_exponent,
    })
}

/// Seeded instance for the suffix-sum lemma.
///
/// Integer-valued so that `Σ λ_i a_i = 0` occurs exactly; `a` is negated
/// when the pairing is positive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessInstance {
    pub lambdas: Vec<f64>,
    pub a: Vec<f64>,
    pub pairing: f64,
}

pub fn random_witness_instance(rng: &mut impl Rng, max_terms: usize) -> WitnessInstance {
    let m = rng.random_range(2..=max_terms.max(2));
    let mut lambdas: Vec<i64> = Vec::with_capacity(m);
    while lambdas.len() < m {
        let v = rng.random_range(-10..=10);
        if !lambdas.contains(&v) {
            lambdas.push(v);
        }
    }
    lambdas.sort_unstable_by(|x, y| y.cmp(x));
    let mut a: Vec<i64> = (0..m - 1).map(|_| rng.random_range(-5..=5)).collect();
    a.push(-a.iter().sum::<i64>());
    let mut pairing: i64 = lambdas.iter().zip(&a).map(|(l, x)| l * x).sum();
    if pairing > 0 {
        a.iter_mut().for_each(|x| *x = -*x);
        pairing = -pairing;
    }
    WitnessInstance {
        lambdas: lambdas.into_iter().map(|v| v as f64).collect(),
        a: a.into_iter().map(|v| v as f64).collect(),
        pairing: pairing as f64,
    }
}

/// Sequences `A_k = exp(iX/k)` and `D_k = D + diag(e)/k` with planted decay
/// rates 1 for `D_k − D` and the off-diagonal blocks of `A_k`, and 2 for the
/// unitarity defect of its diagonal blocks.
#[derive(Clone, Debug)]
pub struct PlantedSequence {
    pub ks: Vec<f64>,
    pub a: Vec<CMatrix>,
    pub d: Vec<CMatrix>,
    pub limit: CMatrix,
}

pub fn planted_block_sequence(
    rng: &mut impl Rng,
    block_values: &[(f64, usize)],
    ks: &[f64],
    scale: f64,
) -> PlantedSequence {
    let diag: Vec<f64> = block_values
        .iter()
        .flat_map(|&(v, n)| std::iter::repeat_n(v, n))
        .collect();
    let r = diag.len();
    let mut x = CMatrix::zeros(r, r);
    for i in 0..r {
        x[(i, i)] = Complex64::new(scale * rng.random_range(-1.0..1.0), 0.0);
        for j in i + 1..r {
            let c = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale;
            x[(i, j)] = c;
            x[(j, i)] = c.conj();
        }
    }
    let e: Vec<f64> = (0..r).map(|_| rng.random_range(-1.0..1.0)).collect();
    let eig = linalg::hermitian_eigen(&x);
    let limit = crate::field::real_diag(&diag);
    let a = ks
        .iter()
        .map(|&k| {
            let phases = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                r,
                eig.values.iter().map(|v| Complex64::new(0.0, v / k).exp()),
            ));
            &eig.vectors * phases * eig.vectors.adjoint()
        })
        .collect();
    let d = ks
        .iter()
        .map(|&k| crate::field::real_diag(&diag.iter().zip(&e).map(|(v, x)| v + x / k).collect::<Vec<_>>()))
        .collect();
    PlantedSequence {
        ks: ks.to_vec(),
        a,
        d,
        limit,
    }
}

/// Orthogonal projection onto the line spanned by `v`, given in the chart
/// frame at each node.
pub fn line_projection(
    geom: &BaseGeometry,
    h0: &MetricField,
    v: impl Fn(ChartPoint) -> Vec<Complex64> + Sync,
) -> MatrixField {
    MatrixField::from_fn(geom, h0.rank(), |n| {
        let col = nalgebra::DVector::from_vec(v(geom.point(n)));
        let h = h0.at(n);
        let hv = &h * &col;
        let norm = col.dotc(&hv);
        &col * hv.adjoint() / norm
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn witness_examples() {
        let w = alpha_sum_witness(&[1.0, 0.0], &[-1.0, 1.0], false).unwrap();
        assert_eq!(w.index, Some(1));
        assert_eq!(w.suffix_value, 1.0);
        let w = alpha_sum_witness(&[3.0, 2.0, 1.0], &[-2.0, 1.0, 1.0], true).unwrap();
        assert_eq!(w.index, Some(1));
        assert_eq!(w.suffix_value, 2.0);
        assert!(alpha_sum_witness(&[2.0, 1.0], &[1.0, -1.0], false).is_err());
    }

    #[test]
    fn witness_preconditions() {
        assert!(alpha_sum_witness(&[1.0, 1.0], &[0.0, 0.0], false).is_err());
        assert!(alpha_sum_witness(&[1.0, 0.0], &[1.0, 0.0], false).is_err());
        assert!(alpha_sum_witness(&[1.0, 0.0], &[0.0, 0.0], true).is_err());
        assert!(alpha_sum_witness(&[1.0], &[0.0], false).is_err());
        assert!(alpha_sum_witness(&[1.0, 0.0], &[0.0], false).is_err());
    }

    #[test]
    fn loglog_recovers_power() {
        let xs: Vec<f64> = (1..20).map(|k| k as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x.powf(-1.5)).collect();
        assert!((loglog_slope(&xs, &ys).unwrap() + 1.5).abs() < 1e-12);
        assert!(loglog_slope(&[1.0], &[1.0]).is_none());
    }

    #[test]
    fn identity_sequence_converges_trivially() {
        let d = crate::field::real_diag(&[2.0, 1.0]);
        let ks = [1.0, 2.0, 3.0];
        let a = vec![identity(2); 3];
        let ds = vec![d.clone(); 3];
        let r = block_convergence_check(&ks, &a, &ds, &d).unwrap();
        assert_eq!(r.verdict, Verdict::Confirmed);
        assert_eq!(r.off_diagonal.tail, 0.0);
    }

    #[test]
    fn increasing_limit_is_rejected() {
        let d = crate::field::real_diag(&[1.0, 2.0]);
        assert!(block_convergence_check(&[1.0], &[identity(2)], &[d.clone()], &d).is_err());
    }
}
