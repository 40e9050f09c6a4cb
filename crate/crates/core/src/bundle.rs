//! Split bundles `O(k₁) ⊕ … ⊕ O(k_r)` over CP¹ and coordinate filtrations.
//!
//! Coordinates index the summands from 0. In the chart at the origin the
//! summand `O(k)` is framed by `e_i`, in the chart at infinity by `e'_i`, with
//! `e_i = w^{k_i} e'_i`. Section coefficients therefore transform as
//! `c' = diag(w^{k_i}) c`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::CMatrix;
use crate::geometry::{Chart, ChartPoint};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleSpec {
    splitting: Vec<i64>,
}

impl BundleSpec {
    pub fn new(splitting: Vec<i64>) -> Result<Self> {
        if splitting.is_empty() {
            return Err(Error::InvalidBundle("splitting type is empty".into()));
        }
        Ok(Self { splitting })
    }

    pub fn splitting(&self) -> &[i64] {
        &self.splitting
    }

    pub fn rank(&self) -> usize {
        self.splitting.len()
    }

    pub fn degree(&self) -> i64 {
        self.splitting.iter().sum()
    }

    pub fn slope(&self) -> f64 {
        self.degree() as f64 / self.rank() as f64
    }

    /// Degree of the coordinate subbundle spanned by `indices`.
    pub fn sub_degree(&self, indices: &[usize]) -> i64 {
        indices.iter().map(|&i| self.splitting[i]).sum()
    }

    pub fn sub_slope(&self, indices: &[usize]) -> f64 {
        self.sub_degree(indices) as f64 / indices.len() as f64
    }

    /// All summands have the same degree.
    pub fn is_polystable(&self) -> bool {
        self.splitting.iter().all(|&k| k == self.splitting[0])
    }

    /// The coordinate subbundle of summands whose degree exceeds the slope,
    /// if any. Its slope is strictly larger than the bundle's.
    pub fn destabilizing_subbundle(&self) -> Option<Vec<usize>> {
        let mu = self.slope();
        let idx: Vec<usize> = (0..self.rank())
            .filter(|&i| self.splitting[i] as f64 > mu)
            .collect();
        (!idx.is_empty()).then_some(idx)
    }

    /// Transition `diag(w^{k_i})` taking origin-chart coefficients to
    /// infinity-chart coefficients, as a function of `w = 1/z`.
    pub fn transition(&self, w: Complex64) -> CMatrix {
        let r = self.rank();
        let mut g = CMatrix::zeros(r, r);
        for (i, &k) in self.splitting.iter().enumerate() {
            g[(i, i)] = w.powi(k as i32);
        }
        g
    }
}

/// The smooth section `z^a z̄^b / (1+|z|²)^n` of `O(d)`, written in the
/// holomorphic frame of either chart.
///
/// In the chart at infinity it reads `w^{d-a+n} w̄^{n-b} / (1+|w|²)^n`, so it
/// is smooth on the whole sphere when `n >= a - d` and `n >= b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SectionMonomial {
    pub a: u32,
    pub b: u32,
    pub n: u32,
    pub d: i64,
}

impl SectionMonomial {
    pub fn new(a: u32, b: u32, n: u32, d: i64) -> Result<Self> {
        if (n as i64) < a as i64 - d || n < b {
            return Err(Error::InvalidArgument(format!(
                "z^{a} z̄^{b}/(1+|z|²)^{n} is not a smooth section of O({d})"
            )));
        }
        Ok(Self { a, b, n, d })
    }

    /// Smallest admissible denominator power for `z^a z̄^b` in `O(d)`.
    pub fn minimal(a: u32, b: u32, d: i64) -> Self {
        let n = (a as i64 - d).max(b as i64).max(0) as u32;
        Self { a, b, n, d }
    }

    pub fn eval(&self, p: ChartPoint) -> Complex64 {
        let u = p.coord;
        let den = (1.0 + u.norm_sqr()).powi(self.n as i32);
        match p.chart {
            Chart::Origin => u.powu(self.a) * u.conj().powu(self.b) / den,
            Chart::Infinity => {
                let hol = (self.d - self.a as i64 + self.n as i64) as u32;
                let anti = self.n - self.b;
                u.powu(hol) * u.conj().powu(anti) / den
            }
        }
    }
}

/// A strictly decreasing chain of coordinate subbundles with weights.
///
/// `stages[0]` is the whole bundle; quotient `F_i = E_i / E_{i+1}` carries
/// `weights[i]`, so the outermost quotient gets the largest weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Filtration {
    bundle: BundleSpec,
    stages: Vec<Vec<usize>>,
    weights: Vec<f64>,
    quotients: Vec<Vec<usize>>,
}

/// Slopes attached to a filtration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiltrationSlopes {
    pub bundle: f64,
    /// `μ(E_i)` for each stage, starting with `E_1 = E`.
    pub stages: Vec<f64>,
    /// `μ(F_i)` for each quotient.
    pub quotients: Vec<f64>,
    pub quotient_ranks: Vec<usize>,
}

impl Filtration {
    pub fn new(bundle: &BundleSpec, stages: Vec<Vec<usize>>, weights: Vec<f64>) -> Result<Self> {
        let r = bundle.rank();
        if stages.is_empty() {
            return Err(Error::InvalidFiltration("no stages".into()));
        }
        if stages.len() != weights.len() {
            return Err(Error::InvalidFiltration(format!(
                "{} stages but {} weights",
                stages.len(),
                weights.len()
            )));
        }
        let mut sorted = Vec::with_capacity(stages.len());
        for (s, stage) in stages.into_iter().enumerate() {
            let mut st = stage;
            st.sort_unstable();
            st.dedup();
            if st.is_empty() {
                return Err(Error::InvalidFiltration(format!("stage {} is empty", s + 1)));
            }
            if let Some(&bad) = st.iter().find(|&&i| i >= r) {
                return Err(Error::InvalidFiltration(format!(
                    "stage {} uses coordinate {bad} but the rank is {r}",
                    s + 1
                )));
            }
            sorted.push(st);
        }
        if sorted[0].len() != r {
            return Err(Error::InvalidFiltration(
                "the first stage must be the whole bundle".into(),
            ));
        }
        for s in 1..sorted.len() {
            let (outer, inner) = (&sorted[s - 1], &sorted[s]);
            if inner.len() >= outer.len() || !inner.iter().all(|i| outer.contains(i)) {
                return Err(Error::InvalidFiltration(format!(
                    "stage {} is not strictly contained in stage {}",
                    s + 1,
                    s
                )));
            }
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidFiltration("weights must be finite".into()));
        }
        if weights.windows(2).any(|p| p[1] >= p[0]) {
            return Err(Error::InvalidFiltration(
                "weights must strictly decrease".into(),
            ));
        }
        let quotients = (0..sorted.len())
            .map(|s| match sorted.get(s + 1) {
                Some(next) => sorted[s].iter().copied().filter(|i| !next.contains(i)).collect(),
                None => sorted[s].clone(),
            })
            .collect();
        Ok(Self {
            bundle: bundle.clone(),
            stages: sorted,
            weights,
            quotients,
        })
    }

    pub fn bundle(&self) -> &BundleSpec {
        &self.bundle
    }

    pub fn stages(&self) -> &[Vec<usize>] {
        &self.stages
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Number of stages `m`.
    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    /// Coordinates spanning a complement of `E_{i+1}` in `E_i`.
    pub fn quotient_indices(&self) -> &[Vec<usize>] {
        &self.quotients
    }

    pub fn quotient_ranks(&self) -> Vec<usize> {
        self.quotients.iter().map(Vec::len).collect()
    }

    pub fn quotient_degrees(&self) -> Vec<i64> {
        self.quotients.iter().map(|q| self.bundle.sub_degree(q)).collect()
    }

    /// Frame ordering with the outermost quotient first and `E_m` last.
    pub fn adapted_order(&self) -> Vec<usize> {
        self.quotients.iter().flatten().copied().collect()
    }

    pub fn slopes(&self) -> FiltrationSlopes {
        FiltrationSlopes {
            bundle: self.bundle.slope(),
            stages: self.stages.iter().map(|s| self.bundle.sub_slope(s)).collect(),
            quotients: self.quotients.iter().map(|q| self.bundle.sub_slope(q)).collect(),
            quotient_ranks: self.quotient_ranks(),
        }
    }

    /// `2π Σ λ_i rk(F_i) (μ(F_i) − μ(E))`, the linear growth rate of the
    /// Donaldson functional along the ray built from this filtration.
    pub fn slope_coefficient(&self) -> f64 {
        let mu = self.bundle.slope();
        let s = self.slopes();
        2.0 * std::f64::consts::PI
            * self
                .weights
                .iter()
                .zip(&s.quotients)
                .zip(&s.quotient_ranks)
                .map(|((l, mq), &rq)| l * rq as f64 * (mq - mu))
                .sum::<f64>()
    }
}
