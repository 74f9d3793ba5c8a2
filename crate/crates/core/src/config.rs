//! Experiment description read from JSON: the network plus run settings.

use serde::{Deserialize, Serialize};

use crate::backward::SamplerConfig;
use crate::error::{Error, Result};
use crate::model::{DistributionSpec, NetworkModel, Station};
use crate::stats::Quantity;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Output {
    Sojourn,
    Counts,
    Gradient,
}

impl Output {
    pub fn selects(&self, q: Quantity) -> bool {
        match self {
            Output::Sojourn => matches!(q, Quantity::Sojourn),
            Output::Counts => matches!(q, Quantity::TotalUnsync | Quantity::InStation(_) | Quantity::Unsync(_)),
            Output::Gradient => matches!(q, Quantity::Gradient(_) | Quantity::GradientSum),
        }
    }
}

fn default_outputs() -> Vec<Output> {
    vec![Output::Sojourn, Output::Counts, Output::Gradient]
}

fn default_reps() -> usize {
    10_000
}

fn default_c() -> f64 {
    SamplerConfig::default().milestone_c
}

fn default_budget() -> u64 {
    SamplerConfig::default().step_budget
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageSpec {
    pub n_cis: usize,
    pub reps_per_ci: usize,
    /// Defaults to the closed form when the model is the two-station Markovian network.
    #[serde(default)]
    pub truth: Option<f64>,
    /// One of the report names (`S`, `D_total`, `Q_1`, `H_sum`, ...); defaults to `S`.
    #[serde(default)]
    pub quantity: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub arrival: DistributionSpec,
    pub stations: Vec<Station>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_outputs")]
    pub outputs: Vec<Output>,
    #[serde(default = "default_c")]
    pub milestone_c: f64,
    #[serde(default = "default_budget")]
    pub budget: u64,
    #[serde(default)]
    pub coverage: Option<CoverageSpec>,
}

impl ExperimentConfig {
    pub fn from_model(model: NetworkModel) -> Self {
        ExperimentConfig {
            arrival: model.arrival,
            stations: model.stations,
            reps: default_reps(),
            seed: None,
            outputs: default_outputs(),
            milestone_c: default_c(),
            budget: default_budget(),
            coverage: None,
        }
    }

    pub fn model(&self) -> NetworkModel {
        NetworkModel { arrival: self.arrival.clone(), stations: self.stations.clone() }
    }

    /// Parses without validating the model.
    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        SamplerConfig { milestone_c: self.milestone_c, step_budget: self.budget }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps < 2 {
            return Err(Error::InsufficientSamples { n: self.reps });
        }
        if !(self.milestone_c > 0.0 && self.milestone_c.is_finite()) {
            return Err(Error::InvalidParameter(format!("milestone_c must be positive, got {}", self.milestone_c)));
        }
        if self.budget == 0 {
            return Err(Error::InvalidParameter("budget must be positive".into()));
        }
        if let Some(c) = &self.coverage {
            if c.n_cis == 0 || c.reps_per_ci < 2 {
                return Err(Error::InvalidParameter("coverage needs n_cis >= 1 and reps_per_ci >= 2".into()));
            }
            if let Some(name) = &c.quantity {
                parse_quantity(name, self.stations.len())?;
            }
        }
        self.model().validate()
    }

    /// Report quantities selected by `outputs`, in report order.
    pub fn selected(&self) -> Vec<Quantity> {
        Quantity::all(self.stations.len()).into_iter().filter(|q| self.outputs.iter().any(|o| o.selects(*q))).collect()
    }
}

/// Inverse of [`Quantity::name`] for a `k`-station network.
pub fn parse_quantity(name: &str, k: usize) -> Result<Quantity> {
    Quantity::all(k)
        .into_iter()
        .find(|q| q.name() == name)
        .ok_or_else(|| Error::InvalidParameter(format!("unknown quantity {name:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_STATION: &str = r#"{
        "arrival": {"family": "exponential", "params": {"rate": 1.0}},
        "stations": [
            {"service": {"family": "exponential", "params": {"rate": 1.0}}, "rate": 1.4},
            {"service": {"family": "erlang", "params": {"shape": 2, "rate": 2.0}}, "rate": 1.4}
        ],
        "reps": 500,
        "seed": 3,
        "outputs": ["sojourn", "gradient"]
    }"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = ExperimentConfig::from_json(TWO_STATION).unwrap();
        assert_eq!(cfg.model().k(), 2);
        assert_eq!(cfg.stations[1].service, DistributionSpec::Erlang { shape: 2, rate: 2.0 });
        assert_eq!(cfg.reps, 500);
        assert_eq!(cfg.seed, Some(3));
        assert_eq!(cfg.milestone_c, 2.0);
        assert_eq!(cfg.budget, 100_000_000);
        cfg.validate().unwrap();
        let names: Vec<String> = cfg.selected().iter().map(|q| q.name()).collect();
        assert_eq!(names, ["S", "H_1", "H_2", "H_sum"]);
    }

    #[test]
    fn round_trips() {
        let cfg = ExperimentConfig::from_json(TWO_STATION).unwrap();
        let back = ExperimentConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_settings() {
        assert!(ExperimentConfig::from_json(&TWO_STATION.replace("\"reps\"", "\"repz\"")).is_err());
        let mut cfg = ExperimentConfig::from_model(NetworkModel::markovian(1.0, &[1.4, 1.4]));
        cfg.reps = 1;
        assert_eq!(cfg.validate(), Err(Error::InsufficientSamples { n: 1 }));
        cfg.reps = 10;
        cfg.milestone_c = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unstable_model_fails_validation() {
        let cfg = ExperimentConfig::from_model(NetworkModel::markovian(1.0, &[2.0, 0.9]));
        assert!(matches!(cfg.validate(), Err(Error::UnstableStation { station: 1, .. })));
    }

    #[test]
    fn quantity_names_parse() {
        assert_eq!(parse_quantity("H_3", 4).unwrap(), Quantity::Gradient(2));
        assert_eq!(parse_quantity("D_total", 1).unwrap(), Quantity::TotalUnsync);
        assert!(parse_quantity("H_5", 4).is_err());
    }
}
