//! Per-variant energy profiles and their evaluation.
//!
//! A profile samples one variant's energy (and output metrics such as the
//! compressed size) over the runtime parameter of its concern. Values between
//! samples are interpolated linearly; values outside the sampled range are an
//! error unless the repository was loaded with clamped extrapolation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{NodeId, VariabilityModel};
use crate::pwl::{self, Locate};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePoint {
    pub param: f64,
    pub energy_j: f64,
    #[serde(default)]
    pub outputs: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyProfile {
    pub concern: NodeId,
    pub variant: NodeId,
    pub parameter: Parameter,
    pub samples: Vec<SamplePoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

/// Behaviour outside a profile's sampled range.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Extrapolation {
    #[default]
    None,
    /// Hold the endpoint value.
    Clamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepositoryDocument {
    pub profiles: Vec<EnergyProfile>,
    #[serde(default)]
    pub extrapolation: Extrapolation,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RepositoryError {
    #[error("repository document does not parse: {0}")]
    Parse(String),
    #[error("profile {concern}/{variant} has {count} samples, at least 2 are required")]
    TooFewSamples { concern: NodeId, variant: NodeId, count: usize },
    #[error("profile {concern}/{variant}: sample params must be strictly increasing (at {param})")]
    UnsortedParams { concern: NodeId, variant: NodeId, param: f64 },
    #[error("profile {concern}/{variant}: negative or non-finite energy {energy} at {param}")]
    InvalidEnergy { concern: NodeId, variant: NodeId, param: f64, energy: f64 },
    #[error("profile {concern}/{variant}: output `{metric}` is negative or non-finite at {param}")]
    InvalidOutput { concern: NodeId, variant: NodeId, param: f64, metric: String },
    #[error("duplicate profile for {concern}/{variant}")]
    DuplicateProfile { concern: NodeId, variant: NodeId },
    #[error("no profile for {concern}/{variant}")]
    MissingProfile { concern: NodeId, variant: NodeId },
    #[error("{param} is outside the sampled range [{lo}, {hi}] of {variant}")]
    OutOfRange { variant: NodeId, param: f64, lo: f64, hi: f64 },
    #[error("profile {variant} has no output metric `{metric}`")]
    UnknownMetric { variant: NodeId, metric: String },
    #[error("chain stage {stage} ({variant}): {source}")]
    Stage {
        stage: usize,
        variant: NodeId,
        #[source]
        source: Box<RepositoryError>,
    },
    #[error("composition chain is empty")]
    EmptyChain,
    #[error("profile {concern}/{variant} does not match the model: {reason}")]
    ModelMismatch { concern: NodeId, variant: NodeId, reason: String },
}

impl EnergyProfile {
    fn params(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.param).collect()
    }

    pub fn range(&self) -> (f64, f64) {
        (self.samples[0].param, self.samples[self.samples.len() - 1].param)
    }

    fn check(&self) -> Result<(), RepositoryError> {
        let (concern, variant) = (self.concern.clone(), self.variant.clone());
        if self.samples.len() < 2 {
            return Err(RepositoryError::TooFewSamples {
                concern,
                variant,
                count: self.samples.len(),
            });
        }
        for w in self.samples.windows(2) {
            if w[0].param >= w[1].param || !w[1].param.is_finite() || !w[0].param.is_finite() {
                return Err(RepositoryError::UnsortedParams {
                    concern,
                    variant,
                    param: w[1].param,
                });
            }
        }
        for s in &self.samples {
            if s.energy_j < 0.0 || !s.energy_j.is_finite() {
                return Err(RepositoryError::InvalidEnergy {
                    concern,
                    variant,
                    param: s.param,
                    energy: s.energy_j,
                });
            }
            if let Some((metric, _)) = s.outputs.iter().find(|(_, v)| **v < 0.0 || !v.is_finite()) {
                return Err(RepositoryError::InvalidOutput {
                    concern,
                    variant,
                    param: s.param,
                    metric: metric.clone(),
                });
            }
        }
        Ok(())
    }

    fn resolve(&self, x: f64, mode: Extrapolation) -> Result<Locate, RepositoryError> {
        if x.is_nan() {
            let (lo, hi) = self.range();
            return Err(RepositoryError::OutOfRange {
                variant: self.variant.clone(),
                param: x,
                lo,
                hi,
            });
        }
        let params = self.params();
        match (pwl::locate(&params, x), mode) {
            (Locate::Below, Extrapolation::Clamp) => Ok(Locate::Knot(0)),
            (Locate::Above, Extrapolation::Clamp) => Ok(Locate::Knot(params.len() - 1)),
            (Locate::Below | Locate::Above, Extrapolation::None) => {
                let (lo, hi) = self.range();
                Err(RepositoryError::OutOfRange {
                    variant: self.variant.clone(),
                    param: x,
                    lo,
                    hi,
                })
            }
            (loc, _) => Ok(loc),
        }
    }

    fn interpolate(&self, loc: Locate, x: f64, value: impl Fn(&SamplePoint) -> f64) -> f64 {
        match loc {
            Locate::Knot(i) => value(&self.samples[i]),
            Locate::Between(i) => {
                let (a, b) = (&self.samples[i], &self.samples[i + 1]);
                pwl::lerp(a.param, value(a), b.param, value(b), x)
            }
            Locate::Below | Locate::Above => unreachable!("resolved before interpolation"),
        }
    }

    /// Energy at `x`: the stored value at a knot, linear between knots.
    pub fn energy_at(&self, x: f64) -> Result<f64, RepositoryError> {
        self.energy_at_with(x, Extrapolation::None)
    }

    pub fn energy_at_with(&self, x: f64, mode: Extrapolation) -> Result<f64, RepositoryError> {
        let loc = self.resolve(x, mode)?;
        Ok(self.interpolate(loc, x, |s| s.energy_j))
    }

    /// Output metric at `x`, interpolated over the same knots as energy.
    pub fn output_at(&self, metric: &str, x: f64) -> Result<f64, RepositoryError> {
        self.output_at_with(metric, x, Extrapolation::None)
    }

    pub fn output_at_with(&self, metric: &str, x: f64, mode: Extrapolation) -> Result<f64, RepositoryError> {
        if !self.samples.iter().all(|s| s.outputs.contains_key(metric)) {
            return Err(RepositoryError::UnknownMetric {
                variant: self.variant.clone(),
                metric: metric.to_string(),
            });
        }
        let loc = self.resolve(x, mode)?;
        Ok(self.interpolate(loc, x, |s| s.outputs[metric]))
    }
}

/// How a stage's result feeds the next stage's parameter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coupling {
    /// The next stage consumes this stage's output metric.
    Output(String),
    /// The next stage consumes the chain's external parameter.
    Passthrough,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainStage {
    pub concern: NodeId,
    pub variant: NodeId,
    #[serde(default = "passthrough")]
    pub coupling: Coupling,
}

fn passthrough() -> Coupling {
    Coupling::Passthrough
}

/// Ordered stages whose energies add up, e.g. compress then upload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompositionChain {
    pub stages: Vec<ChainStage>,
}

impl CompositionChain {
    pub fn single(concern: impl Into<NodeId>, variant: impl Into<NodeId>) -> Self {
        Self {
            stages: vec![ChainStage {
                concern: concern.into(),
                variant: variant.into(),
                coupling: Coupling::Passthrough,
            }],
        }
    }

    /// Appends a stage fed by `metric` of the current last stage.
    pub fn then_via(mut self, metric: &str, concern: impl Into<NodeId>, variant: impl Into<NodeId>) -> Self {
        if let Some(last) = self.stages.last_mut() {
            last.coupling = Coupling::Output(metric.to_string());
        }
        self.stages.push(ChainStage {
            concern: concern.into(),
            variant: variant.into(),
            coupling: Coupling::Passthrough,
        });
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEnergy {
    pub concern: NodeId,
    pub variant: NodeId,
    pub input: f64,
    pub energy_j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComposedEnergy {
    pub total_j: f64,
    pub stages: Vec<StageEnergy>,
}

/// Indexed, immutable set of energy profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileRepository {
    profiles: BTreeMap<(NodeId, NodeId), EnergyProfile>,
    extrapolation: Extrapolation,
}

impl ProfileRepository {
    pub fn from_json(text: &str) -> Result<Self, RepositoryError> {
        let doc: RepositoryDocument = serde_json::from_str(text).map_err(|e| RepositoryError::Parse(e.to_string()))?;
        Self::from_document(doc)
    }

    pub fn from_document(doc: RepositoryDocument) -> Result<Self, RepositoryError> {
        let mut profiles = BTreeMap::new();
        for p in doc.profiles {
            p.check()?;
            let key = (p.concern.clone(), p.variant.clone());
            if profiles.contains_key(&key) {
                return Err(RepositoryError::DuplicateProfile {
                    concern: key.0,
                    variant: key.1,
                });
            }
            profiles.insert(key, p);
        }
        Ok(Self {
            profiles,
            extrapolation: doc.extrapolation,
        })
    }

    pub fn to_document(&self) -> RepositoryDocument {
        RepositoryDocument {
            profiles: self.profiles.values().cloned().collect(),
            extrapolation: self.extrapolation,
        }
    }

    pub fn with_extrapolation(mut self, mode: Extrapolation) -> Self {
        self.extrapolation = mode;
        self
    }

    pub fn extrapolation(&self) -> Extrapolation {
        self.extrapolation
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn profiles(&self) -> impl Iterator<Item = &EnergyProfile> {
        self.profiles.values()
    }

    pub fn profile(&self, concern: &str, variant: &str) -> Result<&EnergyProfile, RepositoryError> {
        self.profiles
            .get(&(concern.to_string(), variant.to_string()))
            .ok_or_else(|| RepositoryError::MissingProfile {
                concern: concern.to_string(),
                variant: variant.to_string(),
            })
    }

    /// Profiles must name model nodes and use the parameter their concern declares.
    pub fn check_against(&self, model: &VariabilityModel) -> Result<(), RepositoryError> {
        for p in self.profiles.values() {
            let mismatch = |reason: String| RepositoryError::ModelMismatch {
                concern: p.concern.clone(),
                variant: p.variant.clone(),
                reason,
            };
            let concern = model
                .node(&p.concern)
                .ok_or_else(|| mismatch(format!("unknown concern `{}`", p.concern)))?;
            if !model.contains(&p.variant) {
                return Err(mismatch(format!("unknown variant `{}`", p.variant)));
            }
            match &concern.parameter {
                Some(decl) if decl.name == p.parameter.name && decl.unit == p.parameter.unit => {}
                Some(decl) => {
                    return Err(mismatch(format!(
                        "parameter {} [{}] differs from declared {} [{}]",
                        p.parameter.name, p.parameter.unit, decl.name, decl.unit
                    )))
                }
                None => return Err(mismatch(format!("concern `{}` declares no parameter", p.concern))),
            }
        }
        Ok(())
    }

    pub fn energy_at(&self, concern: &str, variant: &str, x: f64) -> Result<f64, RepositoryError> {
        self.profile(concern, variant)?.energy_at_with(x, self.extrapolation)
    }

    pub fn output_at(&self, concern: &str, variant: &str, metric: &str, x: f64) -> Result<f64, RepositoryError> {
        self.profile(concern, variant)?.output_at_with(metric, x, self.extrapolation)
    }

    /// Sums stage energies left to right, feeding each stage the coupled
    /// output of the previous one.
    pub fn compose_energy(&self, chain: &CompositionChain, x: f64) -> Result<ComposedEnergy, RepositoryError> {
        if chain.stages.is_empty() {
            return Err(RepositoryError::EmptyChain);
        }
        let mut input = x;
        let mut total_j = 0.0;
        let mut stages = Vec::with_capacity(chain.stages.len());
        for (i, stage) in chain.stages.iter().enumerate() {
            let wrap = |e: RepositoryError| RepositoryError::Stage {
                stage: i,
                variant: stage.variant.clone(),
                source: Box::new(e),
            };
            let profile = self.profile(&stage.concern, &stage.variant).map_err(wrap)?;
            let energy_j = profile.energy_at_with(input, self.extrapolation).map_err(wrap)?;
            total_j += energy_j;
            stages.push(StageEnergy {
                concern: stage.concern.clone(),
                variant: stage.variant.clone(),
                input,
                energy_j,
            });
            if i + 1 < chain.stages.len() {
                input = match &stage.coupling {
                    Coupling::Output(metric) => profile.output_at_with(metric, input, self.extrapolation).map_err(wrap)?,
                    Coupling::Passthrough => x,
                };
            }
        }
        Ok(ComposedEnergy { total_j, stages })
    }
}
