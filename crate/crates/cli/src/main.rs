use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use ecoloop::api::{self, AppState, DEFAULT_CONCURRENCY};
use ecoloop::artifacts::{
    self, AnalysisRequest, Artifact, ArtifactError, GridSpec, Preset, SimMode, SimulationRequest, WorkloadInput,
};
use ecoloop_core::analysis::{Candidate, RuleTemplate};
use ecoloop_core::bundled;
use ecoloop_core::model::{Configuration, VariabilityModel};
use ecoloop_core::repository::ProfileRepository;
use ecoloop_core::rules::RuleSet;
use ecoloop_core::runtime::RuntimeParams;
use ecoloop_core::sim::{generate_workload, WorkloadSpec};

#[derive(Parser)]
#[command(name = "ecoloop", version, about = "Energy-aware variability analysis and self-adaptation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Inputs {
    /// Variability model JSON; defaults to the bundled media store model.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Energy profile repository JSON; defaults to the bundled dataset.
    #[arg(long)]
    profiles: Option<PathBuf>,
}

#[derive(Args)]
struct OutDir {
    /// Directory receiving every written file.
    #[arg(long, env = "ECOLOOP_OUT")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Check a selection against the model constraints.
    Validate {
        /// Variability model JSON; defaults to the bundled media store model.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Comma-separated node ids; ancestors are added.
        #[arg(long, value_delimiter = ',', required = true)]
        select: Vec<String>,
    },
    /// Complete a partial selection.
    Propagate {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', required = true)]
        select: Vec<String>,
    },
    /// Compare candidates over a grid, then write crossovers, partition and rules.
    Analyze {
        #[command(flatten)]
        inputs: Inputs,
        /// Full analysis request document; excludes the flags below.
        #[arg(long, conflicts_with_all = ["preset", "candidates", "config", "grid", "template", "hysteresis", "band"])]
        request: Option<PathBuf>,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        /// JSON array of candidates.
        #[arg(long)]
        candidates: Option<PathBuf>,
        /// Comma-separated selection, repeatable; each is one candidate.
        #[arg(long)]
        config: Vec<String>,
        /// `lo:hi:steps` or a comma-separated list.
        #[arg(long)]
        grid: Option<String>,
        /// Rule template JSON.
        #[arg(long)]
        template: Option<PathBuf>,
        #[arg(long)]
        hysteresis: Option<f64>,
        /// Similarity band as a fraction, e.g. 0.1.
        #[arg(long)]
        band: Option<f64>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Replay a workload statically, adaptively, or both.
    Simulate {
        #[command(flatten)]
        inputs: Inputs,
        /// Full simulation request document; excludes the flags below.
        #[arg(long, conflicts_with_all = ["workload", "rules", "static_run", "compare", "initial", "window"])]
        request: Option<PathBuf>,
        /// JSONL trace; defaults to the reference workload.
        #[arg(long)]
        workload: Option<PathBuf>,
        /// Rule set JSON; defaults to the derived reference rules.
        #[arg(long)]
        rules: Option<PathBuf>,
        /// Keep the initial configuration and ignore rules.
        #[arg(long = "static", conflicts_with = "compare")]
        static_run: bool,
        /// Run every static configuration and the adaptive run.
        #[arg(long)]
        compare: bool,
        /// Comma-separated initial selection.
        #[arg(long, value_delimiter = ',')]
        initial: Option<Vec<String>>,
        /// Moving-average window of the file-size monitor.
        #[arg(long)]
        window: Option<usize>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Write a generated workload trace.
    Workload {
        /// Workload spec JSON; defaults to the reference workload.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Overrides the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Serve the HTTP API.
    Serve {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        /// Simulations allowed to run at once.
        #[arg(long, default_value_t = DEFAULT_CONCURRENCY)]
        max_concurrent: usize,
    },
}

/// An error with its exit status: 1 for domain failures, 2 for unreadable input.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn input(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 2,
        error: error.into(),
    }
}

fn domain(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 1,
        error: error.into(),
    }
}

impl From<ArtifactError> for Failure {
    fn from(e: ArtifactError) -> Self {
        match e {
            ArtifactError::Input(_) => input(e),
            ArtifactError::Domain(_) => domain(e),
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(input)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = read(path)?;
    serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(input)
}

fn load_model(path: Option<&Path>) -> Result<VariabilityModel, Failure> {
    match path {
        None => Ok(bundled::mediastore_model()),
        Some(p) => VariabilityModel::from_json(&read(p)?)
            .with_context(|| format!("loading model {}", p.display()))
            .map_err(input),
    }
}

fn load_inputs(inputs: &Inputs) -> Result<(VariabilityModel, ProfileRepository), Failure> {
    let model = load_model(inputs.model.as_deref())?;
    let repo = match &inputs.profiles {
        None => bundled::mediastore_repository(),
        Some(p) => ProfileRepository::from_json(&read(p)?)
            .with_context(|| format!("loading profiles {}", p.display()))
            .map_err(input)?,
    };
    repo.check_against(&model).context("profiles do not match the model").map_err(input)?;
    Ok((model, repo))
}

fn write_artifacts(out: &Path, files: &[Artifact]) -> Result<(), Failure> {
    fs::create_dir_all(out)
        .with_context(|| format!("creating {}", out.display()))
        .map_err(input)?;
    for a in files {
        let path = out.join(&a.name);
        fs::write(&path, &a.content)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(input)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode, Failure> {
    match cli.command {
        Command::Validate { model, select } => {
            let model = load_model(model.as_deref())?;
            let config = Configuration::from_selection(&model, select).map_err(input)?;
            let report = model.validate_configuration(&config).map_err(input)?;
            if report.is_valid() {
                println!("valid: {config}");
                Ok(ExitCode::SUCCESS)
            } else {
                for v in &report.violations {
                    println!("violation: {v}");
                }
                Ok(ExitCode::from(1))
            }
        }
        Command::Propagate { model, select } => {
            let model = load_model(model.as_deref())?;
            let p = model.propagate_selection(select).map_err(domain)?;
            print!("{}", artifacts::to_json(&p));
            Ok(ExitCode::SUCCESS)
        }
        Command::Analyze {
            inputs,
            request,
            preset,
            candidates,
            config,
            grid,
            template,
            hysteresis,
            band,
            out,
        } => {
            let (model, repo) = load_inputs(&inputs)?;
            let req = match request {
                Some(p) => read_json(&p)?,
                None => AnalysisRequest {
                    preset,
                    candidates: candidates.map(|p| read_json::<Vec<Candidate>>(&p)).transpose()?,
                    configurations: (!config.is_empty()).then(|| {
                        config
                            .iter()
                            .map(|c| c.split(',').map(|s| s.trim().to_string()).collect())
                            .collect()
                    }),
                    grid: grid.map(GridSpec::Text),
                    template: template.map(|p| read_json::<RuleTemplate>(&p)).transpose()?,
                    hysteresis: hysteresis.unwrap_or(0.0),
                    band,
                },
            };
            let analysis = artifacts::analyze(&model, &repo, &req)?;
            write_artifacts(&out.out, &analysis.files())?;
            for c in &analysis.comparison.crossovers {
                println!("crossover at {:.3}: {} below, {} above", c.param, c.below_label, c.above_label);
            }
            for i in &analysis.partition.intervals {
                println!("[{}, {}] {}", i.lo, i.hi, i.label);
            }
            println!("{} rules written to {}", analysis.rules.len(), out.out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate {
            inputs,
            request,
            workload,
            rules,
            static_run,
            compare,
            initial,
            window,
            out,
        } => {
            let (model, repo) = load_inputs(&inputs)?;
            let req = match request {
                Some(p) => read_json(&p)?,
                None => {
                    let mut req = SimulationRequest::default();
                    if let Some(p) = workload {
                        req.workload = WorkloadInput::Trace { jsonl: read(&p)? };
                    }
                    if let Some(p) = rules {
                        req.rules = Some(RuleSet::from_json(&read(&p)?).map_err(input)?);
                    }
                    if let Some(sel) = initial {
                        req.initial = sel;
                    }
                    req.mode = if static_run {
                        SimMode::Static
                    } else if compare {
                        SimMode::Compare
                    } else {
                        SimMode::Adaptive
                    };
                    req.params = RuntimeParams {
                        window: window.unwrap_or(req.params.window),
                        ..req.params
                    };
                    req
                }
            };
            let sim = artifacts::simulate(&model, &repo, &req)?;
            write_artifacts(&out.out, &sim.files)?;
            print!("{}", sim.text);
            Ok(ExitCode::SUCCESS)
        }
        Command::Workload { spec, seed, out } => {
            let mut spec = match spec {
                Some(p) => read_json::<WorkloadSpec>(&p)?,
                None => WorkloadSpec::reference(),
            };
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            let trace = generate_workload(&spec).map_err(input)?;
            let file = Artifact {
                name: "workload.jsonl".into(),
                media_type: "application/x-ndjson".into(),
                content: trace.to_jsonl(),
            };
            write_artifacts(&out.out, std::slice::from_ref(&file))?;
            println!("{} events, digest {}", trace.len(), trace.digest());
            Ok(ExitCode::SUCCESS)
        }
        Command::Serve {
            inputs,
            bind,
            max_concurrent,
        } => {
            let (model, repo) = load_inputs(&inputs)?;
            let app = api::router(AppState::new(model, repo, max_concurrent));
            let rt = tokio::runtime::Runtime::new().context("starting runtime").map_err(domain)?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(&bind)
                    .await
                    .with_context(|| format!("binding {bind}"))?;
                eprintln!("listening on {}", listener.local_addr()?);
                axum::serve(listener, app).await.map_err(|e| anyhow!(e))
            })
            .map_err(domain)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
