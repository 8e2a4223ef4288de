use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::causal::{Category, SignificanceConfig, SignificanceMode};
use crate::coupling::{Coupling, PruneGroup};
use crate::error::{Error, Result};
use crate::graph::ModelGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Cswap,
    Cbp,
    Amp,
    Omp,
    Random,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Cswap, Method::Cbp, Method::Amp, Method::Omp, Method::Random];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Cswap => "cswap",
            Method::Cbp => "cbp",
            Method::Amp => "amp",
            Method::Omp => "omp",
            Method::Random => "random",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Method::ALL.into_iter().find(|m| m.as_str() == s)
    }

    /// Whether the method produces causal results.
    pub fn is_causal(self) -> bool {
        matches!(self, Method::Cswap | Method::Cbp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NeuronOrder {
    AscendingMagnitude,
    RandomPermutation { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrunerConfig {
    pub significance: SignificanceConfig,
    pub samples_per_class: usize,
    pub neuron_order: NeuronOrder,
    /// KL threshold for AMP; `inf` is written as the string `"inf"`.
    #[serde(with = "tau_serde")]
    pub amp_tau: f64,
    pub seed: u64,
}

impl Default for PrunerConfig {
    fn default() -> Self {
        PrunerConfig {
            significance: SignificanceConfig { alpha: 0.05, mode: SignificanceMode::PerClassVote },
            samples_per_class: 128,
            neuron_order: NeuronOrder::AscendingMagnitude,
            amp_tau: 0.0575,
            seed: 0,
        }
    }
}

impl PrunerConfig {
    pub fn validate(&self) -> Result<()> {
        self.significance.validate()?;
        if self.samples_per_class < 2 {
            return Err(Error::InvalidArgument(format!(
                "samples per class must be at least 2, got {}",
                self.samples_per_class
            )));
        }
        // zero is allowed as the degenerate "strict improvement only" setting
        if self.amp_tau.is_nan() || self.amp_tau < 0.0 {
            return Err(Error::InvalidArgument(format!("amp tau must be non-negative, got {}", self.amp_tau)));
        }
        Ok(())
    }
}

mod tau_serde {
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) if s == "inf" => Ok(f64::INFINITY),
            Repr::Str(s) => Err(D::Error::custom(format!("expected a number or \"inf\", got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEntry {
    pub group: PruneGroup,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<Category>,
    /// `ξ` for causal methods, KL increase for AMP, norm for OMP, draw
    /// position for random.
    pub score: f64,
}

/// A group that was skipped because removing it would empty a layer.
/// `position` is the schedule length at the moment it was skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Withheld {
    pub group: PruneGroup,
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PruneSchedule {
    pub method: Method,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<PrunerConfig>,
    pub entries: Vec<ScheduleEntry>,
    #[serde(default)]
    pub withheld: Vec<Withheld>,
}

impl PruneSchedule {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn groups(&self) -> impl Iterator<Item = &PruneGroup> {
        self.entries.iter().map(|e| &e.group)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("schedules serialize");
        s.push('\n');
        s
    }

    /// Parses a schedule and checks that no group occurs twice.
    pub fn from_json(text: &str) -> Result<Self> {
        let s: PruneSchedule = serde_json::from_str(text).map_err(|e| Error::format("schedule", e.to_string()))?;
        let mut seen = HashSet::new();
        for g in s.groups().chain(s.withheld.iter().map(|w| &w.group)) {
            if !seen.insert(g) {
                return Err(Error::format("schedule", format!("group {g:?} appears twice")));
            }
        }
        if s.withheld.iter().any(|w| w.position > s.entries.len()) {
            return Err(Error::format("schedule", "withheld position past the end of the schedule"));
        }
        Ok(s)
    }

    /// Checks that every group belongs to `model`.
    pub fn validate_for(&self, model: &ModelGraph) -> Result<()> {
        let coupling = Coupling::build(model)?;
        let known: HashSet<&PruneGroup> = coupling.groups().iter().collect();
        for g in self.groups().chain(self.withheld.iter().map(|w| &w.group)) {
            if !known.contains(g) {
                return Err(Error::InvalidArgument(format!(
                    "schedule group {g:?} is not a group of model {}",
                    model.name()
                )));
            }
        }
        Ok(())
    }
}
