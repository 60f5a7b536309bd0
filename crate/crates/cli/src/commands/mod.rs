//! Subcommand implementations. Each returns the process exit code.

mod analyze;
mod dataset;
mod eval;
mod review;

use std::io::Read;
use std::path::Path;

use anyhow::{bail, Context as _, Result};
use kmreview::backend::{Classifier, HttpBackend, MockBackend, MockMode};
use kmreview::corpus::{load_dataset_with, CodeSample, Label, LoadOptions, Polarity};
use kmreview::knowledge_map::{default_map, load_map, KnowledgeMap};
use kmreview::promptkit::{ScenarioConfig, ScenarioKind};

use crate::cli::{BackendArgs, Cli, Command, DatasetCommand, EvalCommand, PromptCommand, ScenarioArg, ScenarioArgs};
use crate::config::Config;

pub const EXIT_OK: u8 = 0;
pub const EXIT_PROBLEM: u8 = 1;
pub const EXIT_ERROR: u8 = 2;

/// Settings shared by all subcommands after config and global flags merge.
pub struct Context {
    pub config: Config,
    pub seed: u64,
    pub map: KnowledgeMap,
}

impl Context {
    fn new(cli: &Cli) -> Result<Context> {
        let config = Config::load(cli.config.as_deref())?;
        let seed = cli.seed.unwrap_or(config.seed);
        let map = match cli.map.as_ref().or(config.knowledge_map.as_ref()) {
            Some(path) => {
                let loaded = load_map(path).with_context(|| format!("loading knowledge map {}", path.display()))?;
                for warning in &loaded.warnings {
                    log::warn!("{}: {warning}", path.display());
                }
                loaded.map
            }
            None => default_map(),
        };
        Ok(Context { config, seed, map })
    }

    pub fn load_options(&self) -> LoadOptions {
        LoadOptions {
            polarity: if self.config.inverted_labels {
                Polarity::Inverted
            } else {
                Polarity::Standard
            },
            ..LoadOptions::default()
        }
    }

    pub fn load_dataset(&self, path: &Path, limit: Option<usize>) -> Result<Vec<CodeSample>> {
        let options = LoadOptions {
            limit,
            ..self.load_options()
        };
        load_dataset_with(path, &options).with_context(|| format!("loading dataset {}", path.display()))
    }

    pub fn polarity(&self) -> Polarity {
        self.load_options().polarity
    }

    /// Merges config defaults and flags into a validated scenario.
    pub fn scenario(&self, args: &ScenarioArgs) -> Result<ScenarioConfig> {
        let defaults = &self.config.scenario;
        let kind = match args.scenario {
            Some(ScenarioArg::Base) => ScenarioKind::BaseOneShot,
            Some(ScenarioArg::FewShot) => ScenarioKind::FewShot,
            Some(ScenarioArg::FineTuned) => ScenarioKind::FineTunedDirect,
            Some(ScenarioArg::Hybrid) => ScenarioKind::Hybrid,
            None => defaults.kind.unwrap_or(ScenarioKind::Hybrid),
        };
        let mut scenario = ScenarioConfig::new(kind).with_seed(self.seed);
        scenario.budget = self.config.budget;
        let shot_scenario = matches!(kind, ScenarioKind::FewShot | ScenarioKind::Hybrid);
        if shot_scenario {
            if let Some(shots) = defaults.shots {
                scenario.shots = shots;
            }
            if let Some(findings) = defaults.include_findings {
                scenario.include_findings = findings;
            }
        }
        if let Some(shots) = args.shots {
            scenario.shots = shots;
        }
        if args.no_findings {
            scenario.include_findings = false;
        }
        scenario
            .validate()
            .with_context(|| format!("conflicting flags for scenario {kind}"))?;
        Ok(scenario)
    }

    /// `--backend-url` or `--mock`; with neither, the configured endpoint.
    pub fn backend(&self, args: &BackendArgs) -> Result<Box<dyn Classifier>> {
        if let Some(mode) = &args.mock {
            let mode: MockMode = mode.parse()?;
            return Ok(Box::new(MockBackend::new(mode, &self.map)?));
        }
        let mut config = self.config.backend.clone();
        if let Some(url) = &args.backend_url {
            config.endpoint = url.clone();
        }
        Ok(Box::new(HttpBackend::new(config)?))
    }
}

pub fn mock_needs_gold(args: &BackendArgs) -> bool {
    matches!(
        args.mock.as_deref().map(str::parse::<MockMode>),
        Some(Ok(MockMode::EchoGold | MockMode::InvertGold))
    )
}

/// Reads a file, or stdin for `-`.
pub fn read_source(path: &str) -> Result<String> {
    if path == "-" {
        let mut text = String::new();
        std::io::stdin().read_to_string(&mut text).context("reading stdin")?;
        return Ok(text);
    }
    std::fs::read_to_string(path).with_context(|| format!("reading {path}"))
}

/// A review target plus its gold label when it came from a dataset.
pub struct Target {
    pub sample: CodeSample,
    pub gold: Option<Label>,
    pub dataset: Option<Vec<CodeSample>>,
}

/// Id given to targets read from a bare file, so no pool sample is excluded.
pub const BARE_TARGET_ID: u64 = u64::MAX;

pub fn resolve_target(ctx: &Context, args: &crate::cli::TargetArgs) -> Result<Target> {
    match (&args.path, &args.dataset, args.sample_id) {
        (Some(path), _, _) => Ok(Target {
            // The label is a placeholder; `gold` is what backends see.
            sample: CodeSample::new(BARE_TARGET_ID, read_source(path)?, Label::Clean),
            gold: None,
            dataset: None,
        }),
        (None, Some(dataset), Some(id)) => {
            let samples = ctx.load_dataset(dataset, None)?;
            let Some(sample) = samples.iter().find(|s| s.id == id).cloned() else {
                bail!("sample {id} not found in {}", dataset.display());
            };
            Ok(Target {
                gold: Some(sample.label),
                sample,
                dataset: Some(samples),
            })
        }
        _ => bail!("give a source PATH (or `-`), or --dataset with --sample-id"),
    }
}

/// Exemplar pool: `--pool`, else the target's own dataset, else empty.
pub fn resolve_pool(ctx: &Context, args: &ScenarioArgs, target: &Target) -> Result<Vec<CodeSample>> {
    if let Some(pool) = &args.pool {
        return ctx.load_dataset(pool, None);
    }
    Ok(target.dataset.clone().unwrap_or_default())
}

pub fn run(cli: Cli) -> Result<u8> {
    let ctx = Context::new(&cli)?;
    match &cli.command {
        Command::Analyze(args) => analyze::run(&ctx, args),
        Command::Review(args) => review::review(&ctx, args),
        Command::Prompt(PromptCommand::Preview(args)) => review::preview(&ctx, args),
        Command::Eval(EvalCommand::Run(args)) => eval::run(&ctx, args),
        Command::Eval(EvalCommand::Compare(args)) => eval::compare(args),
        Command::Eval(EvalCommand::CheckTables(args)) => eval::check_tables(args),
        Command::Eval(EvalCommand::Reference) => eval::reference(),
        Command::Dataset(DatasetCommand::Stats(args)) => dataset::stats(&ctx, args),
        Command::Dataset(DatasetCommand::Resample(args)) => dataset::resample(&ctx, args),
        Command::Dataset(DatasetCommand::Split(args)) => dataset::split(&ctx, args),
    }
}
