//! Flat `key = value` experiment configs.
//!
//! ```text
//! # comment
//! scenario = slope-ray
//! geometry.n_radial = 64
//! bundle.splitting = 1, -1
//! filtration.stages = 1,2; 1
//! filtration.weights = 1, 0
//! metric = twisted
//! metric.amplitude = 0.5
//! ```
//!
//! Stage indices are 1-based. Lists are comma-separated; stage lists are
//! separated by `;`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use hymlab_core::donaldson::Route;
use hymlab_core::flow::FlowConfig;
use hymlab_core::{BundleSpec, Filtration};
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: String, reason: String },
    #[error("unknown key `{0}`")]
    Unknown(String),
}

impl ConfigError {
    fn invalid(key: &str, reason: impl fmt::Display) -> Self {
        Self::Invalid {
            key: key.to_string(),
            reason: reason.to_string(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    FunctionalCompare,
    SlopeRay,
    Flow,
    VerifyLemmas,
    Extract,
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "functional-compare" => Self::FunctionalCompare,
            "slope-ray" => Self::SlopeRay,
            "flow" => Self::Flow,
            "verify-lemmas" => Self::VerifyLemmas,
            "extract" => Self::Extract,
            other => return Err(format!("unknown scenario `{other}`")),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MetricSpec {
    Fs,
    Twisted { amplitude: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowExpectation {
    Converge,
    Unbounded,
}

const KNOWN: &[&str] = &[
    "scenario",
    "seed",
    "geometry.n_radial",
    "geometry.n_angular",
    "bundle.splitting",
    "filtration.stages",
    "filtration.weights",
    "metric",
    "metric.amplitude",
    "numeric.rel_tol",
    "numeric.abs_tol",
    "numeric.path_steps",
    "numeric.ts",
    "numeric.route",
    "numeric.samples",
    "numeric.amplitude",
    "flow.dt",
    "flow.max_steps",
    "flow.target",
    "flow.filter_degree",
    "flow.expect",
    "flow.min_residual",
    "flow.m_below",
    "lemmas.instances",
    "lemmas.max_terms",
    "output.report",
    "output.csv",
];

/// Raw key-value pairs in file order, with line numbers.
#[derive(Clone, Debug, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, (usize, String)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (k, v) = content.split_once('=').ok_or(ConfigError::Syntax { line: line_no })?;
            let key = k.trim().to_string();
            if key.is_empty() {
                return Err(ConfigError::Syntax { line: line_no });
            }
            if entries.contains_key(&key) {
                return Err(ConfigError::Duplicate { line: line_no, key });
            }
            entries.insert(key, (line_no, v.trim().to_string()));
        }
        Ok(Self { entries })
    }

    pub fn set(&mut self, key: &str, value: String) {
        self.entries.insert(key.to_string(), (0, value));
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    fn required(&self, key: &str) -> Result<&str, ConfigError> {
        self.get(key).ok_or_else(|| ConfigError::Missing(key.to_string()))
    }

    fn parse_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e| ConfigError::invalid(key, e)),
        }
    }

    fn list<T: FromStr>(&self, key: &str, text: &str) -> Result<Vec<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        text.split(',')
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|e| ConfigError::invalid(key, format!("`{s}`: {e}"))))
            .collect()
    }

    pub fn as_map(&self) -> BTreeMap<String, String> {
        self.entries.iter().map(|(k, (_, v))| (k.clone(), v.clone())).collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub seed: u64,
    pub n_radial: usize,
    pub n_angular: usize,
    pub bundle: Option<BundleSpec>,
    pub filtration: Option<Filtration>,
    pub metric: MetricSpec,
    /// Scenario default when unset.
    pub rel_tol: Option<f64>,
    pub abs_tol: f64,
    pub path_steps: usize,
    pub ts: Vec<f64>,
    pub route: Route,
    pub samples: usize,
    pub amplitude: f64,
    pub flow: FlowConfig,
    pub flow_expect: FlowExpectation,
    pub flow_min_residual: f64,
    pub flow_m_below: f64,
    pub lemma_instances: usize,
    pub lemma_max_terms: usize,
    pub report_name: String,
    pub write_csv: bool,
}

fn positive(key: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::invalid(key, "must be positive"))
    }
}

impl ExperimentConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self, ConfigError> {
        for key in raw.entries.keys() {
            if !KNOWN.contains(&key.as_str()) {
                return Err(ConfigError::Unknown(key.clone()));
            }
        }
        let scenario: Scenario = raw
            .required("scenario")?
            .parse()
            .map_err(|e| ConfigError::invalid("scenario", e))?;
        let needs_bundle = scenario != Scenario::VerifyLemmas;
        let needs_filtration = matches!(scenario, Scenario::SlopeRay | Scenario::Extract);

        let bundle = match raw.get("bundle.splitting") {
            Some(text) => {
                let ks: Vec<i64> = raw.list("bundle.splitting", text)?;
                Some(BundleSpec::new(ks).map_err(|e| ConfigError::invalid("bundle.splitting", e))?)
            }
            None if needs_bundle => return Err(ConfigError::Missing("bundle.splitting".into())),
            None => None,
        };

        let filtration = if needs_filtration {
            let stages_text = raw.required("filtration.stages")?;
            let weights_text = raw.required("filtration.weights")?;
            let bundle = bundle.as_ref().expect("checked above");
            let mut stages = Vec::new();
            for part in stages_text.split(';') {
                let one_based: Vec<usize> = raw.list("filtration.stages", part)?;
                if one_based.contains(&0) {
                    return Err(ConfigError::invalid("filtration.stages", "indices are 1-based"));
                }
                stages.push(one_based.into_iter().map(|i| i - 1).collect());
            }
            let weights: Vec<f64> = raw.list("filtration.weights", weights_text)?;
            Some(Filtration::new(bundle, stages, weights).map_err(|e| ConfigError::invalid("filtration", e))?)
        } else {
            None
        };

        let metric = match raw.get("metric").unwrap_or("fs") {
            "fs" => MetricSpec::Fs,
            "twisted" => MetricSpec::Twisted {
                amplitude: positive("metric.amplitude", raw.parse_or("metric.amplitude", 0.5)?)?,
            },
            other => return Err(ConfigError::invalid("metric", format!("expected `fs` or `twisted`, got `{other}`"))),
        };

        let route = match raw.get("numeric.route").unwrap_or("path") {
            "path" => Route::Path,
            "spectral" => Route::Spectral,
            other => return Err(ConfigError::invalid("numeric.route", format!("unknown route `{other}`"))),
        };

        let ts = match raw.get("numeric.ts") {
            Some(text) => raw.list("numeric.ts", text)?,
            None => vec![0.25, 0.5, 1.0, 2.0, 4.0],
        };
        if ts.iter().any(|t: &f64| !(*t >= 0.0)) {
            return Err(ConfigError::invalid("numeric.ts", "parameters must be non-negative"));
        }

        let defaults = FlowConfig::default();
        let flow = FlowConfig {
            dt: positive("flow.dt", raw.parse_or("flow.dt", defaults.dt)?)?,
            max_steps: raw.parse_or("flow.max_steps", defaults.max_steps)?,
            target_residual: positive("flow.target", raw.parse_or("flow.target", defaults.target_residual)?)?,
            filter_degree: raw.parse_or("flow.filter_degree", defaults.filter_degree)?,
            max_halvings: defaults.max_halvings,
        };
        let flow_expect = match raw.get("flow.expect").unwrap_or("converge") {
            "converge" => FlowExpectation::Converge,
            "unbounded" => FlowExpectation::Unbounded,
            other => return Err(ConfigError::invalid("flow.expect", format!("expected `converge` or `unbounded`, got `{other}`"))),
        };

        let n_radial = raw.parse_or("geometry.n_radial", 64usize)?;
        let n_angular = raw.parse_or("geometry.n_angular", 128usize)?;
        let path_steps = raw.parse_or("numeric.path_steps", 64usize)?;
        if path_steps < 4 {
            return Err(ConfigError::invalid("numeric.path_steps", "must be at least 4"));
        }
        let write_csv = match raw.get("output.csv").unwrap_or("true") {
            "true" => true,
            "false" => false,
            other => return Err(ConfigError::invalid("output.csv", format!("expected `true` or `false`, got `{other}`"))),
        };

        Ok(Self {
            scenario,
            seed: raw.parse_or("seed", 0u64)?,
            n_radial,
            n_angular,
            bundle,
            filtration,
            metric,
            rel_tol: raw
                .get("numeric.rel_tol")
                .map(|v| v.parse::<f64>().map_err(|e| ConfigError::invalid("numeric.rel_tol", e)))
                .transpose()?
                .map(|v| positive("numeric.rel_tol", v))
                .transpose()?,
            abs_tol: positive("numeric.abs_tol", raw.parse_or("numeric.abs_tol", 1e-6)?)?,
            path_steps,
            ts,
            route,
            samples: raw.parse_or("numeric.samples", 5usize)?,
            amplitude: positive("numeric.amplitude", raw.parse_or("numeric.amplitude", 0.5)?)?,
            flow,
            flow_expect,
            flow_min_residual: positive("flow.min_residual", raw.parse_or("flow.min_residual", 0.1)?)?,
            flow_m_below: raw.parse_or("flow.m_below", -50.0)?,
            lemma_instances: raw.parse_or("lemmas.instances", 100_000usize)?,
            lemma_max_terms: raw.parse_or("lemmas.max_terms", 6usize)?,
            report_name: raw.get("output.report").unwrap_or("report.json").to_string(),
            write_csv,
        })
    }
}

/// Parses `RxA` grid overrides such as `64x128`.
pub fn parse_grid(text: &str) -> Result<(usize, usize), String> {
    let (r, a) = text
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected RxA, got `{text}`"))?;
    let r = r.trim().parse().map_err(|e| format!("radial count: {e}"))?;
    let a = a.trim().parse().map_err(|e| format!("angular count: {e}"))?;
    Ok((r, a))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
        ExperimentConfig::from_raw(&RawConfig::parse(text)?)
    }

    #[test]
    fn slope_ray_config() {
        let c = parse(
            "scenario = slope-ray\nbundle.splitting = 1, -1\nfiltration.stages = 1,2; 1\nfiltration.weights = 1, 0 # outer first\n",
        )
        .unwrap();
        let f = c.filtration.unwrap();
        assert_eq!(f.stages(), &[vec![0, 1], vec![0]]);
        assert_eq!(c.metric, MetricSpec::Fs);
        assert_eq!((c.n_radial, c.n_angular), (64, 128));
    }

    #[test]
    fn missing_weights_names_key() {
        let err = parse("scenario = slope-ray\nbundle.splitting = 1, -1\nfiltration.stages = 1,2; 1\n").unwrap_err();
        assert!(err.to_string().contains("filtration.weights"), "{err}");
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(parse("scenario = dance"), Err(ConfigError::Invalid { .. })));
        assert!(matches!(parse("scenario = flow\nbundle.splitting = 1\nbogus = 1"), Err(ConfigError::Unknown(_))));
        assert!(matches!(parse("scenario"), Err(ConfigError::Syntax { line: 1 })));
        assert!(matches!(
            parse("scenario = flow\nscenario = flow"),
            Err(ConfigError::Duplicate { line: 2, .. })
        ));
        let err = parse("scenario = flow\nbundle.splitting = 1\nflow.dt = -1").unwrap_err();
        assert!(err.to_string().contains("flow.dt"));
        let err = parse("scenario = slope-ray\nbundle.splitting = 1, -1\nfiltration.stages = 0,1\nfiltration.weights = 0").unwrap_err();
        assert!(err.to_string().contains("filtration.stages"));
    }

    #[test]
    fn lemmas_need_no_bundle() {
        let c = parse("scenario = verify-lemmas\nseed = 42").unwrap();
        assert_eq!(c.seed, 42);
        assert!(c.bundle.is_none());
    }

    #[test]
    fn grid_override() {
        assert_eq!(parse_grid("32x64").unwrap(), (32, 64));
        assert!(parse_grid("32").is_err());
    }
}
