//! Request documents and the artifacts built from them. The CLI and the HTTP
//! API both go through these functions, so identical requests produce
//! identical bytes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use ecoloop_core::analysis::{
    self, AnalysisError, Candidate, ComparisonSeries, CrossoverPoint, GreenPartition, RuleTemplate, SIMILARITY_BAND,
};
use ecoloop_core::mediastore::{self, COMPRESSION, FILE_SIZE, GRID, LAME, LOCAL, STORAGE_GUARD, STORE};
use ecoloop_core::model::{ConfigError, Configuration, VariabilityModel};
use ecoloop_core::repository::ProfileRepository;
use ecoloop_core::rules::RuleSet;
use ecoloop_core::runtime::RuntimeParams;
use ecoloop_core::sim::{
    self, compare_all, generate_workload, report, SimulationResult, WorkloadSpec, WorkloadTrace, ADAPTIVE_LABEL,
};

#[derive(Debug, Error)]
pub enum ArtifactError {
    /// The request itself is malformed or names things that do not exist.
    #[error("{0}")]
    Input(String),
    /// The request is well formed but cannot be carried out.
    #[error("{0}")]
    Domain(String),
}

/// Pretty JSON with a trailing newline, the form of every JSON artifact.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("artifact serializes");
    s.push('\n');
    s
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub name: String,
    pub media_type: String,
    pub content: String,
}

impl Artifact {
    fn new(name: &str, content: String) -> Self {
        let media_type = match name.rsplit('.').next() {
            Some("json") => "application/json",
            Some("jsonl") => "application/x-ndjson",
            Some("csv") => "text/csv",
            _ => "text/plain",
        };
        Self {
            name: name.to_string(),
            media_type: media_type.to_string(),
            content,
        }
    }
}

/// A grid as explicit points or as `lo:hi:steps` / comma-list text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Points(Vec<f64>),
    Text(String),
}

impl GridSpec {
    pub fn resolve(&self) -> Result<Vec<f64>, AnalysisError> {
        match self {
            GridSpec::Points(p) => Ok(p.clone()),
            GridSpec::Text(t) => analysis::parse_grid(t),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// The three codecs storing locally.
    Local,
    /// The three codecs followed by transmission to the server.
    Remote,
}

/// What to compare and how to turn the result into rules. Exactly one of
/// `preset`, `candidates` and `configurations` must be given.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<Vec<Candidate>>,
    /// Node selections, each completed by propagation and mapped to its chain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub configurations: Option<Vec<Vec<String>>>,
    /// Defaults to the profiled grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<RuleTemplate>,
    #[serde(default)]
    pub hysteresis: f64,
    /// Similarity band folded into the partition; the remote preset defaults to 10%.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonDocument {
    pub series: Vec<ComparisonSeries>,
    /// Crossovers of every pair of series, in input order.
    pub crossovers: Vec<CrossoverPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub comparison: ComparisonDocument,
    pub partition: GreenPartition,
    pub rules: RuleSet,
}

impl Analysis {
    pub fn comparison_json(&self) -> String {
        to_json(&self.comparison)
    }

    pub fn partition_json(&self) -> String {
        to_json(&self.partition)
    }

    pub fn rules_json(&self) -> String {
        self.rules.to_json()
    }

    pub fn files(&self) -> Vec<Artifact> {
        vec![
            Artifact::new("comparison.csv", analysis::series_csv(&self.comparison.series)),
            Artifact::new("comparison.json", self.comparison_json()),
            Artifact::new("crossovers.json", to_json(&self.comparison.crossovers)),
            Artifact::new("partition.json", self.partition_json()),
            Artifact::new("rules.json", self.rules_json()),
        ]
    }
}

fn template(prefix: &str, mode: Option<&str>, priority_base: i64) -> RuleTemplate {
    RuleTemplate {
        id_prefix: prefix.into(),
        event: FILE_SIZE.into(),
        guard: mode.map(|m| (STORAGE_GUARD.to_string(), m.to_string())).into_iter().collect(),
        priority_base,
    }
}

fn configuration_candidate(model: &VariabilityModel, selection: &[String]) -> Result<Candidate, ArtifactError> {
    let config = complete_configuration(model, selection)?;
    let chain = mediastore::chain_for(&config)
        .ok_or_else(|| ArtifactError::Input(format!("configuration {config} does not bind a store and a codec")))?;
    let store = config.binding(STORE).unwrap_or(LOCAL);
    let codec = config.binding(COMPRESSION).unwrap_or_default();
    Ok(Candidate {
        label: sim::static_label(store, codec),
        variant: codec.to_string(),
        chain,
    })
}

fn analysis_error(e: AnalysisError) -> ArtifactError {
    match e {
        AnalysisError::GridSyntax(_)
        | AnalysisError::UnsortedGrid
        | AnalysisError::TooFewPoints(_)
        | AnalysisError::NoSeries
        | AnalysisError::UnknownNode { .. } => ArtifactError::Input(e.to_string()),
        _ => ArtifactError::Domain(e.to_string()),
    }
}

pub fn analyze(
    model: &VariabilityModel,
    repo: &ProfileRepository,
    req: &AnalysisRequest,
) -> Result<Analysis, ArtifactError> {
    let sources = [req.preset.is_some(), req.candidates.is_some(), req.configurations.is_some()];
    if sources.iter().filter(|s| **s).count() != 1 {
        return Err(ArtifactError::Input(
            "give exactly one of preset, candidates or configurations".into(),
        ));
    }
    let (candidates, default_template, default_band) = match (&req.preset, &req.candidates, &req.configurations) {
        (Some(Preset::Local), _, _) => (
            mediastore::local_candidates(),
            template("local-codec", Some("local"), 10),
            None,
        ),
        (Some(Preset::Remote), _, _) => (
            mediastore::remote_candidates(),
            template("remote-codec", Some("remote"), 20),
            Some(SIMILARITY_BAND),
        ),
        (_, Some(c), _) => (c.clone(), template("rule", None, 0), None),
        (_, _, Some(configs)) => (
            configs
                .iter()
                .map(|s| configuration_candidate(model, s))
                .collect::<Result<Vec<_>, _>>()?,
            template("rule", None, 0),
            None,
        ),
        _ => unreachable!("one source checked above"),
    };
    if !req.hysteresis.is_finite() || req.hysteresis < 0.0 {
        return Err(ArtifactError::Input(format!("invalid hysteresis {}", req.hysteresis)));
    }
    let band = req.band.or(default_band);
    if band.is_some_and(|b| !b.is_finite() || b < 0.0) {
        return Err(ArtifactError::Input("band must be a nonnegative fraction".into()));
    }

    let grid = match &req.grid {
        Some(g) => g.resolve().map_err(analysis_error)?,
        None => GRID.to_vec(),
    };
    let series = analysis::compare(repo, model, &candidates, &grid).map_err(analysis_error)?;
    let mut crossovers = Vec::new();
    for (i, a) in series.iter().enumerate() {
        for b in &series[i + 1..] {
            crossovers.extend(analysis::find_crossovers(a, b).map_err(analysis_error)?);
        }
    }
    let mut partition = analysis::partition_greenest(&series).map_err(analysis_error)?;
    if let Some(band) = band {
        partition = analysis::simplify_within_band(&partition, &series, band).map_err(analysis_error)?;
    }
    let template = req.template.clone().unwrap_or(default_template);
    let rules = analysis::derive_rules(&partition, &template, req.hysteresis);
    Ok(Analysis {
        comparison: ComparisonDocument { series, crossovers },
        partition,
        rules,
    })
}

/// Where the saves come from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum WorkloadInput {
    /// The generated reference workload.
    #[default]
    Reference,
    /// A generated workload.
    Spec { spec: WorkloadSpec },
    /// A trace in its JSONL form.
    Trace { jsonl: String },
    /// Explicit file sizes in MB.
    Sizes {
        #[serde(default = "default_capacity")]
        capacity_mb: f64,
        sizes: Vec<f64>,
    },
}

fn default_capacity() -> f64 {
    sim::DEFAULT_CAPACITY_MB
}

impl WorkloadInput {
    pub fn trace(&self) -> Result<WorkloadTrace, ArtifactError> {
        let trace = match self {
            WorkloadInput::Reference => generate_workload(&WorkloadSpec::reference()),
            WorkloadInput::Spec { spec } => generate_workload(spec),
            WorkloadInput::Trace { jsonl } => WorkloadTrace::from_jsonl(jsonl),
            WorkloadInput::Sizes { capacity_mb, sizes } => WorkloadTrace::new(*capacity_mb, sizes),
        };
        trace.map_err(|e| ArtifactError::Input(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimMode {
    /// Keep the initial configuration; no rules.
    Static,
    #[default]
    Adaptive,
    /// Every static configuration, the adaptive run and the oracle bound.
    Compare,
}

fn default_initial() -> Vec<String> {
    vec![LOCAL.to_string(), LAME.to_string()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationRequest {
    #[serde(default)]
    pub workload: WorkloadInput,
    /// Partial selection completed by propagation.
    #[serde(default = "default_initial")]
    pub initial: Vec<String>,
    /// Defaults to the storage-full rule plus the derived codec rules.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rules: Option<RuleSet>,
    #[serde(default)]
    pub mode: SimMode,
    #[serde(default)]
    pub params: RuntimeParams,
}

impl Default for SimulationRequest {
    fn default() -> Self {
        Self {
            workload: WorkloadInput::Reference,
            initial: default_initial(),
            rules: None,
            mode: SimMode::Adaptive,
            params: RuntimeParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub files: Vec<Artifact>,
    /// Human-readable report.
    pub text: String,
}

impl Simulation {
    pub fn file(&self, name: &str) -> Option<&Artifact> {
        self.files.iter().find(|a| a.name == name)
    }
}

/// Closure of `selection`, which must leave no choice open and be valid.
pub fn complete_configuration(model: &VariabilityModel, selection: &[String]) -> Result<Configuration, ArtifactError> {
    let p = model.propagate_selection(selection.iter().cloned()).map_err(|e| match e {
        ConfigError::Model(m) => ArtifactError::Input(m.to_string()),
        other => ArtifactError::Domain(other.to_string()),
    })?;
    if !p.open_choices.is_empty() {
        return Err(ArtifactError::Domain(ConfigError::Incomplete(p.open_choices).to_string()));
    }
    Ok(p.configuration)
}

pub fn simulate(
    model: &VariabilityModel,
    repo: &ProfileRepository,
    req: &SimulationRequest,
) -> Result<Simulation, ArtifactError> {
    let domain = |e: sim::SimError| ArtifactError::Domain(e.to_string());
    let trace = req.workload.trace()?;
    let initial = complete_configuration(model, &req.initial)?;
    let rules = match &req.rules {
        Some(r) => RuleSet::new(r.rules.clone()).map_err(|e| ArtifactError::Input(e.to_string()))?,
        None => mediastore::reference_rules(repo, model).map_err(|e| ArtifactError::Domain(e.to_string()))?,
    };
    if req.mode != SimMode::Static {
        rules.check_targets(model).map_err(|e| ArtifactError::Domain(e.to_string()))?;
    }

    let mut files = vec![Artifact::new("workload.jsonl", trace.to_jsonl())];
    let text = match req.mode {
        SimMode::Static | SimMode::Adaptive => {
            let result = if req.mode == SimMode::Static {
                let store = initial.binding(STORE).unwrap_or(LOCAL);
                let codec = initial.binding(COMPRESSION).unwrap_or_default();
                sim::run_static(&sim::static_label(store, codec), &trace, &initial, repo, model)
            } else {
                sim::run_adaptive(ADAPTIVE_LABEL, &trace, &initial, &rules, repo, model, req.params)
            }
            .map_err(domain)?;
            let report = report(std::slice::from_ref(&result)).map_err(domain)?;
            files.push(Artifact::new("result.json", to_json(&result)));
            files.push(Artifact::new("report.csv", report.runs_csv()));
            push_log(&mut files, &result);
            report.to_text()
        }
        SimMode::Compare => {
            let comparison = compare_all(&trace, &initial, &rules, repo, model, req.params).map_err(domain)?;
            files.push(Artifact::new("result.json", to_json(&comparison)));
            files.push(Artifact::new("report.csv", comparison.report.runs_csv()));
            files.push(Artifact::new("savings.csv", comparison.report.savings_csv()));
            push_log(&mut files, comparison.adaptive());
            comparison.to_text()
        }
    };
    files.push(Artifact::new("report.txt", text.clone()));
    Ok(Simulation { files, text })
}

fn push_log(files: &mut Vec<Artifact>, result: &SimulationResult) {
    if result.kind == sim::RunKind::Adaptive {
        files.push(Artifact::new("adaptation.jsonl", result.log.to_jsonl()));
    }
}
