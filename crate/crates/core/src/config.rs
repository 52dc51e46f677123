//! Experiment configuration, deserialised from the runner's config file.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Deserializer, Serialize};

use crate::dynamics::SamplerSettings;
use crate::error::{Error, Result};
use crate::exact::DEFAULT_ENUMERATION_CAP;
use crate::meanfield::SolverSettings;
use crate::model::ThetaParams;
use crate::network::SimilarityKernel;

/// Allocation rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Brute,
    Bfva,
    Greedy,
    Random,
    None,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Brute, Method::Bfva, Method::Greedy, Method::Random, Method::None];

    pub fn name(self) -> &'static str {
        match self {
            Method::Brute => "brute",
            Method::Bfva => "bfva",
            Method::Greedy => "greedy",
            Method::Random => "random",
            Method::None => "none",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How the welfare of an allocation is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Evaluator {
    Exact,
    Va,
    Mcmc,
}

impl Evaluator {
    pub fn name(self) -> &'static str {
        match self {
            Evaluator::Exact => "exact",
            Evaluator::Va => "va",
            Evaluator::Mcmc => "mcmc",
        }
    }
}

impl fmt::Display for Evaluator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Spillover scaling: a fixed value or `1/N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum AnRule {
    Fixed(f64),
    InverseN,
}

impl AnRule {
    pub fn value(self, n: usize) -> f64 {
        match self {
            AnRule::Fixed(v) => v,
            AnRule::InverseN => 1.0 / n.max(1) as f64,
        }
    }
}

impl<'de> Deserialize<'de> for AnRule {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(de)? {
            Raw::Num(v) if v > 0.0 && v.is_finite() => Ok(AnRule::Fixed(v)),
            Raw::Num(v) => Err(serde::de::Error::custom(format!("a_n must be positive, got {v}"))),
            Raw::Text(s) if matches!(s.to_ascii_lowercase().as_str(), "1/n" | "inverse-n") => {
                Ok(AnRule::InverseN)
            }
            Raw::Text(s) => Err(serde::de::Error::custom(format!(
                "a_n must be a positive number or \"1/n\", got {s:?}"
            ))),
        }
    }
}

impl std::str::FromStr for AnRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if matches!(s.to_ascii_lowercase().as_str(), "1/n" | "inverse-n") {
            return Ok(AnRule::InverseN);
        }
        match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(AnRule::Fixed(v)),
            _ => Err(Error::invalid(format!("a_n must be a positive number or 1/n, got {s:?}"))),
        }
    }
}

/// How `fraction · N` is turned into a unit count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KappaRounding {
    #[default]
    Floor,
    /// Round half up.
    Nearest,
}

impl KappaRounding {
    pub fn apply(self, n: usize, fraction: f64) -> usize {
        let raw = fraction * n as f64;
        let k = match self {
            KappaRounding::Floor => (raw + 1e-9).floor(),
            KappaRounding::Nearest => (raw + 0.5 + 1e-9).floor(),
        };
        (k.max(0.0) as usize).min(n)
    }
}

/// Structural parameters without the scaling, which comes from `a_n`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaSpec {
    pub theta0: f64,
    pub theta1: f64,
    #[serde(deserialize_with = "crate::model::scalar_or_vec")]
    pub theta2: Vec<f64>,
    #[serde(deserialize_with = "crate::model::scalar_or_vec")]
    pub theta3: Vec<f64>,
    pub theta4: f64,
    pub theta5: f64,
    pub theta6: f64,
}

fn one_or_many<'de, D, T>(de: D) -> std::result::Result<Vec<T>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany<T> {
        One(T),
        Many(Vec<T>),
    }
    Ok(match OneOrMany::deserialize(de)? {
        OneOrMany::One(v) => vec![v],
        OneOrMany::Many(v) => v,
    })
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Network sizes for generated instances.
    #[serde(deserialize_with = "one_or_many")]
    pub n: Vec<usize>,
    #[serde(deserialize_with = "one_or_many")]
    pub density: Vec<f64>,
    pub replications: usize,
    pub param_set: u8,
    /// Explicit parameters; overrides `param_set`.
    pub theta: Option<ThetaSpec>,
    /// Defaults to `1/n` for generated networks and for loaded networks
    /// not declared sparse, `1` for loaded networks declared sparse.
    pub a_n: Option<AnRule>,
    pub kernel: SimilarityKernel,
    /// Success probability of the Bernoulli covariate of generated units.
    pub covariate_p: f64,
    /// Explicit capacity; overrides `kappa_frac`.
    pub kappa: Option<usize>,
    pub kappa_frac: f64,
    pub kappa_rounding: KappaRounding,
    pub methods: Vec<Method>,
    pub evaluators: Vec<Evaluator>,
    /// Random-rule draws; defaults to 50 for N <= 15 and 10 above.
    pub random_draws: Option<usize>,
    /// Largest N for exact enumeration.
    pub exact_cap: usize,
    /// Largest N for brute-force searches over allocations.
    pub brute_cap: usize,
    /// Largest N for the stationarity check in `validate`.
    pub stationarity_cap: usize,
    pub network: Option<PathBuf>,
    pub covariates: Option<PathBuf>,
    pub sparse: bool,
    /// Rule used by `allocate`.
    pub method: Method,
    /// Cross-check the allocation's welfare by MCMC in `allocate`.
    pub mcmc_check: bool,
    pub out: Option<PathBuf>,
    pub solver: SolverSettings,
    pub sampler: SamplerSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            n: vec![15],
            density: vec![0.3],
            replications: 100,
            param_set: 1,
            theta: None,
            a_n: None,
            kernel: SimilarityKernel::AbsDiff,
            covariate_p: 0.5,
            kappa: None,
            kappa_frac: 0.3,
            kappa_rounding: KappaRounding::Floor,
            methods: Method::ALL.to_vec(),
            evaluators: vec![Evaluator::Exact, Evaluator::Va],
            random_draws: None,
            exact_cap: DEFAULT_ENUMERATION_CAP,
            brute_cap: 16,
            stationarity_cap: 12,
            network: None,
            covariates: None,
            sparse: false,
            method: Method::Greedy,
            mcmc_check: false,
            out: None,
            solver: SolverSettings::default(),
            sampler: SamplerSettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::invalid("replications must be at least 1"));
        }
        if self.n.is_empty() || self.n.contains(&0) {
            return Err(Error::invalid("n must list at least one positive size"));
        }
        if self.density.is_empty() || self.density.iter().any(|&d| !(d > 0.0 && d <= 1.0)) {
            return Err(Error::invalid("densities must lie in (0, 1]"));
        }
        if self.theta.is_none() && ThetaParams::param_set(self.param_set, 1.0).is_none() {
            return Err(Error::invalid(format!("unknown parameter set {}", self.param_set)));
        }
        if !(0.0..=1.0).contains(&self.kappa_frac) {
            return Err(Error::invalid("kappa_frac must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.covariate_p) {
            return Err(Error::invalid("covariate_p must lie in [0, 1]"));
        }
        if self.random_draws == Some(0) {
            return Err(Error::invalid("random_draws must be at least 1"));
        }
        if self.methods.is_empty() || self.evaluators.is_empty() {
            return Err(Error::invalid("methods and evaluators must not be empty"));
        }
        if self.covariates.is_some() && self.network.is_none() {
            return Err(Error::invalid("a covariates file needs a network file"));
        }
        for path in self.network.iter().chain(&self.covariates) {
            if !path.exists() {
                return Err(Error::invalid(format!("input file {} does not exist", path.display())));
            }
        }
        self.kernel.validate()?;
        self.solver.validate()?;
        self.sampler.validate()
    }

    /// Parameters for a network of `n` units, with `default_an` used when
    /// the config leaves `a_n` unset.
    pub fn theta_for(&self, n: usize, default_an: AnRule) -> Result<ThetaParams> {
        let a_n = self.a_n.unwrap_or(default_an).value(n);
        match &self.theta {
            Some(t) => Ok(ThetaParams {
                theta0: t.theta0,
                theta1: t.theta1,
                theta2: t.theta2.clone(),
                theta3: t.theta3.clone(),
                theta4: t.theta4,
                theta5: t.theta5,
                theta6: t.theta6,
                a_n,
            }),
            None => ThetaParams::param_set(self.param_set, a_n)
                .ok_or_else(|| Error::invalid(format!("unknown parameter set {}", self.param_set))),
        }
    }

    pub fn kappa_for(&self, n: usize) -> Result<usize> {
        match self.kappa {
            Some(k) if k > n => Err(Error::invalid(format!("kappa {k} exceeds the number of units {n}"))),
            Some(k) => Ok(k),
            None => Ok(self.kappa_rounding.apply(n, self.kappa_frac)),
        }
    }

    pub fn draws_for(&self, n: usize) -> usize {
        self.random_draws.unwrap_or(if n <= 15 { 50 } else { 10 })
    }

    /// Label for the parameter column of reports.
    pub fn param_label(&self) -> String {
        if self.theta.is_some() {
            "custom".into()
        } else {
            self.param_set.to_string()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_rules() {
        let floor: Vec<usize> = [5, 7, 9, 11, 13, 15].iter().map(|&n| KappaRounding::Floor.apply(n, 0.3)).collect();
        assert_eq!(floor, vec![1, 2, 2, 3, 3, 4]);
        let near: Vec<usize> = [5, 7, 9, 11, 13, 15].iter().map(|&n| KappaRounding::Nearest.apply(n, 0.3)).collect();
        assert_eq!(near, vec![2, 2, 3, 3, 4, 5]);
        assert_eq!(KappaRounding::Floor.apply(50, 0.3), 15);
    }

    #[test]
    fn an_rule_parsing() {
        assert_eq!("1/N".parse::<AnRule>().unwrap(), AnRule::InverseN);
        assert_eq!("0.5".parse::<AnRule>().unwrap(), AnRule::Fixed(0.5));
        assert!("-1".parse::<AnRule>().is_err());
        assert_eq!(AnRule::InverseN.value(20), 0.05);
    }

    #[test]
    fn defaults_validate() {
        ExperimentConfig::default().validate().unwrap();
        let mut c = ExperimentConfig { replications: 0, ..Default::default() };
        assert!(c.validate().is_err());
        c.replications = 1;
        c.density = vec![1.5];
        assert!(c.validate().is_err());
    }

    #[test]
    fn kappa_and_draw_defaults() {
        let c = ExperimentConfig::default();
        assert_eq!(c.kappa_for(15).unwrap(), 4);
        assert_eq!(c.draws_for(15), 50);
        assert_eq!(c.draws_for(50), 10);
        let c = ExperimentConfig { kappa: Some(9), ..Default::default() };
        assert!(c.kappa_for(5).is_err());
    }

    #[test]
    fn theta_resolution() {
        let c = ExperimentConfig::default();
        let t = c.theta_for(10, AnRule::InverseN).unwrap();
        assert_eq!(t, ThetaParams::set1(0.1));
        let c = ExperimentConfig { a_n: Some(AnRule::Fixed(1.0)), param_set: 2, ..Default::default() };
        assert_eq!(c.theta_for(10, AnRule::InverseN).unwrap(), ThetaParams::set2(1.0));
    }
}
