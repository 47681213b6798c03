//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # comments start with '#'
//! problem.n_components = 10
//! problem.batch_profile = half_double
//! algo[0].name = nestt_g
//! algo[0].sampling = sqrt_lipschitz
//! algo[0].passes = 100
//! algo[0].seeds = 1, 2, 3
//! output.dir = out
//! output.record_stride_passes = 1
//! ```
//!
//! `problem.path` loads a saved instance instead of generating one; it cannot be combined
//! with generator keys. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::baselines::StepsizeRule;
use crate::error::{NesttError, Result};
use crate::problem::{BatchProfile, RegressionConfig};
use crate::sampling::Sampling;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    NesttG,
    NesttE,
    Sgd,
    Saga,
    ProxGd,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::NesttG => "nestt_g",
            Algorithm::NesttE => "nestt_e",
            Algorithm::Sgd => "sgd",
            Algorithm::Saga => "saga",
            Algorithm::ProxGd => "prox_gd",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            Algorithm::NesttG,
            Algorithm::NesttE,
            Algorithm::Sgd,
            Algorithm::Saga,
            Algorithm::ProxGd,
        ]
        .into_iter()
        .find(|a| a.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSource {
    Generate(RegressionConfig),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgoConfig {
    pub algorithm: Algorithm,
    pub sampling: Sampling,
    /// Multiplier on the default `alpha_i = 1` of the exact variant.
    pub alpha_scale: f64,
    /// Penalty safety factor of the exact variant.
    pub safety: f64,
    /// Stepsize of the SGD baseline; `None` uses `inv_sqrt(0.1 beta)`.
    pub stepsize: Option<StepsizeRule>,
    pub passes: u64,
    pub seeds: Vec<u64>,
    /// Value of the `algorithm` column; derived from the method when absent.
    pub label: Option<String>,
}

impl AlgoConfig {
    pub fn new(algorithm: Algorithm, sampling: Sampling, passes: u64, seeds: Vec<u64>) -> Self {
        AlgoConfig {
            algorithm,
            sampling,
            alpha_scale: 1.0,
            safety: 1.5,
            stepsize: None,
            passes,
            seeds,
            label: None,
        }
    }

    pub fn display_name(&self) -> String {
        match (&self.label, self.algorithm) {
            (Some(l), _) => l.clone(),
            (None, Algorithm::NesttE) if self.alpha_scale != 1.0 => {
                format!("nestt_e@alpha={}", self.alpha_scale)
            }
            (None, a) => a.name().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemSource,
    pub algorithms: Vec<AlgoConfig>,
    pub output_dir: PathBuf,
    pub record_stride_passes: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            problem: ProblemSource::Generate(RegressionConfig::default()),
            algorithms: Vec::new(),
            output_dir: PathBuf::from("nestt-out"),
            record_stride_passes: 1.0,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| NesttError::config(key, format!("cannot parse `{value}`")))
}

fn parse_stepsize(key: &str, value: &str) -> Result<StepsizeRule> {
    let (kind, c) = value
        .split_once(':')
        .ok_or_else(|| NesttError::config(key, "expected `constant:<c>` or `inv_sqrt:<c>`"))?;
    let c: f64 = parse_value(key, c.trim())?;
    let rule = match kind.trim() {
        "constant" => StepsizeRule::Constant(c),
        "inv_sqrt" => StepsizeRule::InvSqrt(c),
        other => return Err(NesttError::config(key, format!("unknown stepsize rule `{other}`"))),
    };
    rule.validate().map_err(|e| NesttError::config(key, e.to_string()))?;
    Ok(rule)
}

fn format_stepsize(rule: StepsizeRule) -> String {
    match rule {
        StepsizeRule::Constant(c) => format!("constant:{c:e}"),
        StepsizeRule::InvSqrt(c) => format!("inv_sqrt:{c:e}"),
    }
}

fn batch_profile_name(b: BatchProfile) -> &'static str {
    match b {
        BatchProfile::Uniform => "uniform",
        BatchProfile::HalfDouble => "half_double",
    }
}

/// Splits `algo[3].name` into `(3, "name")`.
fn algo_key(key: &str) -> Option<(usize, &str)> {
    let rest = key.strip_prefix("algo[")?;
    let (idx, field) = rest.split_once("].")?;
    Some((idx.parse().ok()?, field))
}

#[derive(Default)]
struct AlgoDraft {
    fields: BTreeMap<String, (String, String)>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut regression = RegressionConfig::default();
        let mut generator_keys = Vec::new();
        let mut path: Option<PathBuf> = None;
        let mut drafts: BTreeMap<usize, AlgoDraft> = BTreeMap::new();
        let mut seen = std::collections::HashSet::new();

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| NesttError::Parse {
                line: lineno + 1,
                message: "expected `key = value`".into(),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(NesttError::config(key, "duplicate key"));
            }
            if let Some(field) = key.strip_prefix("problem.") {
                match field {
                    "path" => path = Some(PathBuf::from(value)),
                    "m_total" => regression.m_total = parse_value(key, value)?,
                    "p_dim" => regression.p_dim = parse_value(key, value)?,
                    "n_components" => regression.n_components = parse_value(key, value)?,
                    "k_sparse" => regression.k_sparse = parse_value(key, value)?,
                    "noise_std" => regression.noise_std = parse_value(key, value)?,
                    "covariate_noise_std" => regression.covariate_noise_std = parse_value(key, value)?,
                    "seed" => regression.seed = parse_value(key, value)?,
                    "batch_profile" => {
                        regression.batch_profile = match value {
                            "uniform" => BatchProfile::Uniform,
                            "half_double" => BatchProfile::HalfDouble,
                            _ => return Err(NesttError::config(key, format!("unknown profile `{value}`"))),
                        }
                    }
                    _ => return Err(NesttError::config(key, "unknown key")),
                }
                if field != "path" {
                    generator_keys.push(key.to_string());
                }
            } else if let Some(field) = key.strip_prefix("output.") {
                match field {
                    "dir" => cfg.output_dir = PathBuf::from(value),
                    "record_stride_passes" => {
                        let v: f64 = parse_value(key, value)?;
                        if !(v > 0.0 && v.is_finite()) {
                            return Err(NesttError::config(key, "must be positive"));
                        }
                        cfg.record_stride_passes = v;
                    }
                    _ => return Err(NesttError::config(key, "unknown key")),
                }
            } else if let Some((idx, field)) = algo_key(key) {
                drafts
                    .entry(idx)
                    .or_default()
                    .fields
                    .insert(field.to_string(), (key.to_string(), value.to_string()));
            } else {
                return Err(NesttError::config(key, "unknown key"));
            }
        }

        cfg.problem = match path {
            Some(p) => {
                if let Some(k) = generator_keys.first() {
                    return Err(NesttError::config(k.clone(), "cannot be combined with problem.path"));
                }
                ProblemSource::File(p)
            }
            None => {
                regression.validate()?;
                ProblemSource::Generate(regression)
            }
        };
        for (idx, draft) in drafts {
            cfg.algorithms.push(Self::build_algo(idx, draft)?);
        }
        Ok(cfg)
    }

    fn build_algo(idx: usize, draft: AlgoDraft) -> Result<AlgoConfig> {
        let prefix = format!("algo[{idx}]");
        let name = draft
            .fields
            .get("name")
            .ok_or_else(|| NesttError::config(format!("{prefix}.name"), "missing"))?;
        let algorithm = Algorithm::parse(&name.1)
            .ok_or_else(|| NesttError::config(&name.0, format!("unknown algorithm `{}`", name.1)))?;
        let mut algo = AlgoConfig::new(algorithm, Sampling::Uniform, 100, vec![0]);
        for (field, (key, value)) in &draft.fields {
            match field.as_str() {
                "name" => {}
                "sampling" => {
                    algo.sampling = Sampling::parse(value)
                        .ok_or_else(|| NesttError::config(key, format!("unknown sampling `{value}`")))?
                }
                "alpha_scale" => algo.alpha_scale = parse_value(key, value)?,
                "safety" => algo.safety = parse_value(key, value)?,
                "stepsize" => algo.stepsize = Some(parse_stepsize(key, value)?),
                "passes" => algo.passes = parse_value(key, value)?,
                "label" => algo.label = Some(value.clone()),
                "seeds" => {
                    algo.seeds = value
                        .split(',')
                        .map(|s| parse_value(key, s.trim()))
                        .collect::<Result<_>>()?
                }
                _ => return Err(NesttError::config(key, "unknown key")),
            }
        }
        if !(algo.alpha_scale > 0.0 && algo.alpha_scale.is_finite()) {
            return Err(NesttError::config(format!("{prefix}.alpha_scale"), "must be positive"));
        }
        if !(algo.safety >= 1.0 && algo.safety.is_finite()) {
            return Err(NesttError::config(format!("{prefix}.safety"), "must be at least 1"));
        }
        if algo.passes == 0 {
            return Err(NesttError::config(format!("{prefix}.passes"), "must be positive"));
        }
        if algo.seeds.is_empty() {
            return Err(NesttError::config(format!("{prefix}.seeds"), "must not be empty"));
        }
        Ok(algo)
    }

    /// Checks the requirements of a run: at least one algorithm.
    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() {
            return Err(NesttError::config("algo", "at least one algorithm is required"));
        }
        Ok(())
    }

    /// Sorted `key=value` lines with every default made explicit.
    pub fn canonical_text(&self) -> String {
        let mut entries: BTreeMap<String, String> = BTreeMap::new();
        match &self.problem {
            ProblemSource::File(p) => {
                entries.insert("problem.path".into(), p.display().to_string());
            }
            ProblemSource::Generate(r) => {
                for (k, v) in [
                    ("m_total", r.m_total.to_string()),
                    ("p_dim", r.p_dim.to_string()),
                    ("n_components", r.n_components.to_string()),
                    ("k_sparse", r.k_sparse.to_string()),
                    ("noise_std", format!("{:e}", r.noise_std)),
                    ("covariate_noise_std", format!("{:e}", r.covariate_noise_std)),
                    ("batch_profile", batch_profile_name(r.batch_profile).to_string()),
                    ("seed", r.seed.to_string()),
                ] {
                    entries.insert(format!("problem.{k}"), v);
                }
            }
        }
        for (k, a) in self.algorithms.iter().enumerate() {
            let seeds: Vec<String> = a.seeds.iter().map(u64::to_string).collect();
            let mut fields = vec![
                ("name", a.algorithm.name().to_string()),
                ("sampling", a.sampling.name().to_string()),
                ("alpha_scale", format!("{:e}", a.alpha_scale)),
                ("safety", format!("{:e}", a.safety)),
                ("passes", a.passes.to_string()),
                ("seeds", seeds.join(",")),
            ];
            if let Some(rule) = a.stepsize {
                fields.push(("stepsize", format_stepsize(rule)));
            }
            if let Some(label) = &a.label {
                fields.push(("label", label.clone()));
            }
            for (f, v) in fields {
                entries.insert(format!("algo[{k}].{f}"), v);
            }
        }
        entries.insert("output.dir".into(), self.output_dir.display().to_string());
        entries.insert(
            "output.record_stride_passes".into(),
            format!("{:e}", self.record_stride_passes),
        );
        entries.iter().fold(String::new(), |mut s, (k, v)| {
            let _ = writeln!(s, "{k}={v}");
            s
        })
    }

    /// Hex SHA-256 of [`Self::canonical_text`].
    pub fn fingerprint(&self) -> String {
        Sha256::digest(self.canonical_text().as_bytes())
            .iter()
            .fold(String::with_capacity(64), |mut s, b| {
                let _ = write!(s, "{b:02x}");
                s
            })
    }
}
