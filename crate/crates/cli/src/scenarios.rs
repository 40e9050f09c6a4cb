use hymlab_core::calculus::{fs_metric, twisted_metric};
use hymlab_core::donaldson::{self, ORACLE_REL_TOL};
use hymlab_core::endo::random_endo;
use hymlab_core::field::{identity, real_diag};
use hymlab_core::flow::{hym_run, FlowStatus};
use hymlab_core::geodesic::{destabilizer_report, ray_from_filtration, ray_report};
use hymlab_core::lemmas::{
    alpha_sum_witness, block_convergence_check, line_projection, planted_block_sequence, random_witness_instance,
    ray_extraction_analysis, weak_projection_check, Verdict,
};
use hymlab_core::{BaseGeometry, CMatrix, Error, Filtration, MatrixField, MetricField};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::config::{ExperimentConfig, FlowExpectation, MetricSpec, Scenario};
use crate::report::{Assertion, Series, FLOW_CSV, FLOW_HEADER, RAY_CSV, RAY_HEADER};

pub const CONVEXITY_TOL: f64 = 1e-5;
pub const DISSIPATION_TOL: f64 = 1e-8;
pub const RATE_TOL: f64 = 0.2;

pub struct ScenarioOutput {
    pub assertions: Vec<Assertion>,
    pub results: serde_json::Value,
    pub series: Vec<Series>,
}

fn one_based(indices: &[usize]) -> Vec<usize> {
    indices.iter().map(|i| i + 1).collect()
}

fn reference_metric(geom: &BaseGeometry, cfg: &ExperimentConfig) -> Result<MetricField, Error> {
    let bundle = cfg.bundle.as_ref().expect("scenario requires a bundle");
    match cfg.metric {
        MetricSpec::Fs => Ok(fs_metric(geom, bundle)),
        MetricSpec::Twisted { amplitude } => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            twisted_metric(geom, bundle, &mut rng, amplitude)
        }
    }
}

/// Sample stream, independent of the one used for the reference metric.
fn sample_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

pub fn run(cfg: &ExperimentConfig) -> Result<ScenarioOutput, Error> {
    if cfg.scenario == Scenario::VerifyLemmas {
        return verify_lemmas(cfg);
    }
    let geom = BaseGeometry::new(cfg.n_radial, cfg.n_angular)?;
    let h0 = reference_metric(&geom, cfg)?;
    match cfg.scenario {
        Scenario::FunctionalCompare => functional_compare(&geom, &h0, cfg),
        Scenario::SlopeRay => slope_ray(&geom, &h0, cfg),
        Scenario::Flow => flow(&geom, &h0, cfg),
        Scenario::Extract => extract(&geom, &h0, cfg),
        Scenario::VerifyLemmas => unreachable!(),
    }
}

fn functional_compare(geom: &BaseGeometry, h0: &MetricField, cfg: &ExperimentConfig) -> Result<ScenarioOutput, Error> {
    let rel = cfg.rel_tol.unwrap_or(ORACLE_REL_TOL);
    let abs = cfg.abs_tol;
    let mut rng = sample_rng(cfg.seed);
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    for _ in 0..cfg.samples {
        let w = random_endo(geom, h0, &mut rng, cfg.amplitude, 2, true)?;
        let r = donaldson::functional_report(geom, h0, &w, cfg.path_steps)?;
        worst = worst.max(r.discrepancy / abs.max(rel * r.value_path.abs()));
        rows.push(r);
    }
    Ok(ScenarioOutput {
        assertions: vec![Assertion::at_most("functional_equivalence", worst, 1.0)],
        results: json!({ "gamma": donaldson::gamma(h0), "relative_tolerance": rel, "absolute_tolerance": abs, "samples": rows }),
        series: Vec::new(),
    })
}

fn filtration(cfg: &ExperimentConfig) -> &Filtration {
    cfg.filtration.as_ref().expect("scenario requires a filtration")
}

/// Minimum second divided difference of sampled values.
fn min_second_difference(ts: &[f64], values: &[f64]) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = ts.iter().copied().zip(values.iter().copied()).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.dedup_by(|a, b| a.0 == b.0);
    pts.windows(3)
        .map(|p| {
            let left = (p[1].1 - p[0].1) / (p[1].0 - p[0].0);
            let right = (p[2].1 - p[1].1) / (p[2].0 - p[1].0);
            2.0 * (right - left) / (p[2].0 - p[0].0)
        })
        .reduce(f64::min)
}

fn slope_ray(geom: &BaseGeometry, h0: &MetricField, cfg: &ExperimentConfig) -> Result<ScenarioOutput, Error> {
    let f = filtration(cfg);
    let rel = cfg.rel_tol.unwrap_or(1e-2);
    let report = ray_report(geom, f, h0, &cfg.ts, cfg.route)?;
    let mut assertions = vec![Assertion::at_most("closed_form", report.max_relative_residual, rel)];
    let values: Vec<f64> = report.m_samples.iter().map(|s| s.m_direct).collect();
    let convexity = min_second_difference(&cfg.ts, &values);
    if let Some(c) = convexity {
        assertions.push(Assertion::at_least("convexity", c, -CONVEXITY_TOL));
    }
    let destabilizer = destabilizer_report(f, report.slope_coefficient)?;
    let mu = f.bundle().slope();
    let consistent = match &destabilizer {
        None => report.slope_coefficient > 0.0,
        Some(d) if report.slope_coefficient < 0.0 => d.stage_slope > mu,
        Some(d) => d.stage_slope >= mu,
    };
    assertions.push(Assertion::check(
        "destabilizer",
        consistent,
        match &destabilizer {
            Some(d) => format!("stage {} has slope {} against {}", d.stage + 1, d.stage_slope, mu),
            None => "no destabilizing stage".to_string(),
        },
    ));
    let stages: Vec<Vec<usize>> = f.stages().iter().map(|s| one_based(s)).collect();
    let results = json!({
        "stages": stages,
        "weights": f.weights(),
        "bundle_slope": mu,
        "slope_coefficient": report.slope_coefficient,
        "asymptotic_slope": report.asymptotic_slope,
        "terminal_slope": report.terminal_slope,
        "b_matrix": report.b_matrix,
        "max_residual": report.max_residual,
        "max_relative_residual": report.max_relative_residual,
        "min_second_difference": convexity,
        "samples": report.m_samples,
        "destabilizer": destabilizer.as_ref().map(|d| json!({
            "stage": d.stage + 1,
            "stage_slope": d.stage_slope,
            "bundle_slope": d.bundle_slope,
            "suffix_value": d.witness.suffix_value,
        })),
    });
    let series = if cfg.write_csv {
        vec![Series::from_csv(RAY_CSV, RAY_HEADER, &report.to_csv())]
    } else {
        Vec::new()
    };
    Ok(ScenarioOutput {
        assertions,
        results,
        series,
    })
}

fn flow(geom: &BaseGeometry, h0: &MetricField, cfg: &ExperimentConfig) -> Result<ScenarioOutput, Error> {
    let outcome = hym_run(geom, h0, &cfg.flow)?;
    let mut assertions = vec![Assertion::at_most(
        "energy_dissipation",
        outcome.max_m_increase().max(0.0),
        DISSIPATION_TOL,
    )];
    let min_residual = outcome
        .trajectory
        .iter()
        .map(|r| r.he_residual)
        .fold(f64::INFINITY, f64::min);
    match cfg.flow_expect {
        FlowExpectation::Converge => {
            assertions.push(Assertion::check(
                "converged",
                outcome.status == FlowStatus::Converged,
                format!("{:?} after {} steps", outcome.status, outcome.state.step_count),
            ));
            assertions.push(Assertion::at_most(
                "final_residual",
                outcome.state.he_residual,
                cfg.flow.target_residual,
            ));
        }
        FlowExpectation::Unbounded => {
            assertions.push(Assertion::at_least("residual_bounded_below", min_residual, cfg.flow_min_residual));
            assertions.push(Assertion::at_most("energy_unbounded", outcome.state.m_value, cfg.flow_m_below));
        }
    }
    let late_slope = outcome
        .trajectory
        .len()
        .checked_sub(1)
        .filter(|&n| n >= 10)
        .map(|n| {
            let a = &outcome.trajectory[n - n / 10];
            let z = &outcome.trajectory[n];
            (z.m_value - a.m_value) / (z.time - a.time)
        });
    let results = json!({
        "status": outcome.status,
        "steps": outcome.state.step_count,
        "time": outcome.state.time,
        "initial_residual": outcome.trajectory[0].he_residual,
        "final_residual": outcome.state.he_residual,
        "min_residual": min_residual,
        "final_m": outcome.state.m_value,
        "max_m_increase": outcome.max_m_increase(),
        "late_m_slope": late_slope,
        "config": cfg.flow,
    });
    let series = if cfg.write_csv {
        vec![Series::from_csv(FLOW_CSV, FLOW_HEADER, &outcome.to_csv())]
    } else {
        Vec::new()
    };
    Ok(ScenarioOutput {
        assertions,
        results,
        series,
    })
}

fn extract(geom: &BaseGeometry, h0: &MetricField, cfg: &ExperimentConfig) -> Result<ScenarioOutput, Error> {
    let f = filtration(cfg);
    let w = ray_from_filtration(geom, f, h0)?;
    let analysis = ray_extraction_analysis(geom, h0, &w, &cfg.ts)?;
    let expected: Vec<Vec<usize>> = f.stages()[1..].to_vec();
    let recovered: Vec<Vec<usize>> = analysis.stages.iter().map(|s| s.indices.clone()).collect();
    let weight_error = if analysis.weights.len() == f.weights().len() {
        analysis
            .weights
            .iter()
            .zip(f.weights())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };
    let mu = f.bundle().slope();
    let slopes = f.slopes();
    let pairing: f64 = f
        .weights()
        .iter()
        .zip(slopes.quotients.iter().zip(&slopes.quotient_ranks))
        .map(|(l, (mq, &r))| l * r as f64 * (mq - mu))
        .sum();
    let destabilizer = analysis
        .witness
        .as_ref()
        .and_then(|wit| wit.index)
        .and_then(|i| analysis.stages.get(i - 1).map(|s| (i + 1, s.slope)));
    let destabilizer_ok = if pairing <= 0.0 {
        destabilizer.is_some_and(|(_, s)| s >= mu)
    } else {
        destabilizer.is_none()
    };
    let assertions = vec![
        Assertion::check(
            "eigenvalues_constant",
            analysis.eigenvalues_constant,
            format!("spread {:e}", analysis.eigenvalue_spread),
        ),
        Assertion::check(
            "upper_eta_vanishes",
            analysis.upper_eta_vanishes,
            format!("sup {:e}", analysis.upper_eta),
        ),
        Assertion::at_most("weights_recovered", weight_error, 1e-8),
        Assertion::check(
            "stages_recovered",
            recovered == expected,
            format!(
                "recovered {:?}, expected {:?}",
                recovered.iter().map(|s| one_based(s)).collect::<Vec<_>>(),
                expected.iter().map(|s| one_based(s)).collect::<Vec<_>>()
            ),
        ),
        Assertion::check(
            "projections_weakly_holomorphic",
            !analysis.stages.is_empty() && analysis.stages.iter().all(|s| s.projection.pass),
            format!("{} projections", analysis.stages.len()),
        ),
        Assertion::check(
            "destabilizer",
            destabilizer_ok,
            match destabilizer {
                Some((stage, slope)) => format!("stage {stage} has slope {slope} against {mu}"),
                None => format!("none reported, pairing {pairing}"),
            },
        ),
    ];
    let stages: Vec<serde_json::Value> = analysis
        .stages
        .iter()
        .map(|s| json!({ "indices": one_based(&s.indices), "slope": s.slope, "projection": s.projection }))
        .collect();
    let results = json!({
        "eigenvalue_spread": analysis.eigenvalue_spread,
        "upper_eta": analysis.upper_eta,
        "weights": analysis.weights,
        "stages": stages,
        "bundle_slope": mu,
        "pairing": pairing,
        "destabilizer_stage": destabilizer.map(|d| d.0),
        "t_probe": analysis.t_probe,
        "m_values": analysis.m_values,
        "f_integrals": analysis.f_integrals,
        "growth_exponent": analysis.growth_exponent,
    });
    Ok(ScenarioOutput {
        assertions,
        results,
        series: Vec::new(),
    })
}

/// Smallest 0-based `i ≥ 1` with a qualifying suffix sum, by enumerating all
/// suffix sums from the back.
pub fn brute_force_witness(a: &[f64], strict: bool) -> Option<usize> {
    let mut sums = vec![0.0; a.len() + 1];
    for i in (0..a.len()).rev() {
        sums[i] = sums[i + 1] + a[i];
    }
    let hits: Vec<usize> = (1..a.len())
        .filter(|&i| if strict { sums[i] > 0.0 } else { sums[i] >= 0.0 })
        .collect();
    hits.into_iter().min()
}

pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

fn verify_lemmas(cfg: &ExperimentConfig) -> Result<ScenarioOutput, Error> {
    let mut rng = sample_rng(cfg.seed);
    let mut assertions = Vec::new();

    let mut not_found = 0usize;
    let mut mismatches = 0usize;
    let mut not_strict = 0usize;
    let mut strict_runs = 0usize;
    for _ in 0..cfg.lemma_instances {
        let inst = random_witness_instance(&mut rng, cfg.lemma_max_terms);
        let mut variants = vec![false];
        if inst.pairing < 0.0 {
            variants.push(true);
        }
        for strict in variants {
            let w = alpha_sum_witness(&inst.lambdas, &inst.a, strict)?;
            if !w.found {
                not_found += 1;
            }
            if w.index != brute_force_witness(&inst.a, strict) {
                mismatches += 1;
            }
            if strict {
                strict_runs += 1;
                if w.found && !(w.suffix_value > 0.0) {
                    not_strict += 1;
                }
            }
        }
    }
    assertions.push(Assertion::check(
        "witness_found",
        not_found == 0,
        format!("{not_found} of {} instances without witness", cfg.lemma_instances),
    ));
    assertions.push(Assertion::check(
        "witness_matches_brute_force",
        mismatches == 0,
        format!("{mismatches} mismatches"),
    ));
    assertions.push(Assertion::check(
        "strict_witness_strict",
        not_strict == 0,
        format!("{not_strict} of {strict_runs} strict runs"),
    ));

    let ks = log_spaced(10.0, 1e8, 57);
    let planted = planted_block_sequence(&mut rng, &[(1.0, 2), (0.5, 1), (-0.5, 1)], &ks, 2.0);
    let bc = block_convergence_check(&planted.ks, &planted.a, &planted.d, &planted.limit)?;
    assertions.push(Assertion::check("block_convergence", bc.verdict == Verdict::Confirmed, format!("{:?}", bc.verdict)));
    for (name, stat, planted_rate) in [
        ("diagonal_rate", &bc.diagonal, 1.0),
        ("off_diagonal_rate", &bc.off_diagonal, 1.0),
        ("block_unitarity_rate", &bc.block_unitarity, 2.0),
    ] {
        let rate = stat.rate.unwrap_or(f64::NAN);
        let err = ((rate - planted_rate) / planted_rate).abs();
        let mut a = Assertion::at_most(name, if err.is_nan() { f64::INFINITY } else { err }, RATE_TOL);
        a.detail = format!("rate {rate} against planted {planted_rate}");
        assertions.push(a);
    }
    // A fixed rotation mixing the blocks never satisfies the hypothesis.
    let c = (0.3f64).cos();
    let s = (0.3f64).sin();
    let mut rot = identity(4);
    rot[(0, 0)] = Complex64::new(c, 0.0);
    rot[(0, 3)] = Complex64::new(-s, 0.0);
    rot[(3, 0)] = Complex64::new(s, 0.0);
    rot[(3, 3)] = Complex64::new(c, 0.0);
    let rotated = block_convergence_check(
        &planted.ks,
        &vec![rot; planted.ks.len()],
        &vec![planted.limit.clone(); planted.ks.len()],
        &planted.limit,
    )?;
    assertions.push(Assertion::check(
        "hypothesis_violation_detected",
        rotated.verdict == Verdict::HypothesisViolated,
        format!("{:?}", rotated.verdict),
    ));

    let geom = BaseGeometry::new(cfg.n_radial, cfg.n_angular)?;
    let bundle = hymlab_core::BundleSpec::new(vec![0, 0])?;
    let h0 = fs_metric(&geom, &bundle);
    let projections = projection_examples(&geom, &h0)?;
    for (name, expected, diag) in &projections {
        assertions.push(Assertion::check(
            name,
            diag.pass == *expected,
            format!(
                "self-adjoint {:e}, idempotent {:e}, holomorphic {:e}",
                diag.self_adjoint, diag.idempotent, diag.holomorphic
            ),
        ));
    }

    let results = json!({
        "witness": { "instances": cfg.lemma_instances, "max_terms": cfg.lemma_max_terms, "strict_runs": strict_runs,
                     "not_found": not_found, "mismatches": mismatches },
        "block_convergence": bc,
        "rotated_control": rotated.verdict,
        "projections": projections.iter().map(|(n, e, d)| json!({ "name": n, "expected_pass": e, "diagnostics": d })).collect::<Vec<_>>(),
    });
    Ok(ScenarioOutput {
        assertions,
        results,
        series: Vec::new(),
    })
}

type ProjectionCase = (String, bool, hymlab_core::lemmas::ProjectionDiagnostics);

/// Line subbundles of the trivial rank-2 bundle: the span of `(1, z)` is
/// holomorphic, the span of `(1, z̄)` is not, and `Id/2` is not idempotent.
pub fn projection_examples(geom: &BaseGeometry, h0: &MetricField) -> Result<Vec<ProjectionCase>, Error> {
    let one = Complex64::new(1.0, 0.0);
    let holomorphic = line_projection(geom, h0, |p| match p.chart.index() {
        0 => vec![one, p.coord],
        _ => vec![p.coord, one],
    });
    let antiholomorphic = line_projection(geom, h0, |p| match p.chart.index() {
        0 => vec![one, p.coord.conj()],
        _ => vec![p.coord.conj(), one],
    });
    let half: CMatrix = real_diag(&[0.5, 0.5]);
    let half = MatrixField::from_fn(geom, 2, |_| half.clone());
    Ok(vec![
        ("projection_holomorphic_line".to_string(), true, weak_projection_check(geom, h0, &holomorphic)?),
        ("projection_antiholomorphic_line".to_string(), false, weak_projection_check(geom, h0, &antiholomorphic)?),
        ("projection_half_identity".to_string(), false, weak_projection_check(geom, h0, &half)?),
    ])
}
