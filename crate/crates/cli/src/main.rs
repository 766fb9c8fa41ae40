use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use pbw_core::dataset::{builtin_template, matrix_prompts, render_query, UncertaintyTier};
use pbw_core::exec::Execution;
use pbw_core::harness::{
    persist, prepare, run_query_uncertainty, run_sample_efficiency, run_syntax_uncertainty, Aggregator, ExperimentConfig,
    ExperimentKind, Manifest, ProviderConfig, RunOutput, DEFAULT_N_VALUES, MANIFEST_FILE, REPORT_CSV, RESULTS_FILE,
    TRANSCRIPTS_FILE,
};
use pbw_core::llm::{DomainTag, HttpProviderConfig, VariantId};
use pbw_core::order::{RankedAnswer, Universe};
use pbw_core::voting::{score_table, Profile};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "pbw", version, about = "Rank aggregation and robustness experiments for repeated LLM ranking queries")]
struct Cli {
    #[command(flatten)]
    global: Global,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// JSON experiment config; flags below override it
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (default: runs/<experiment>)
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    provider: Option<ProviderKind>,

    /// Transcript file for --provider replay
    #[arg(long, global = true)]
    transcripts: Option<PathBuf>,

    /// Chat-completions base URL for --provider http
    #[arg(long, global = true)]
    base_url: Option<String>,

    /// Model name for --provider http
    #[arg(long, global = true)]
    model: Option<String>,

    #[arg(long, global = true)]
    domain: Option<DomainTag>,

    #[arg(long, global = true)]
    tier: Option<UncertaintyTier>,

    #[arg(long, global = true)]
    aggregator: Option<Aggregator>,

    /// Number of symptom sets (queries)
    #[arg(long, global = true)]
    queries: Option<usize>,

    /// Run everything on one thread
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ProviderKind {
    Http,
    Mock,
    Replay,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample symptom sets and write them with their rendered queries
    GenerateQueries,
    /// Same query repeated K times, N samples aggregated per repetition
    RunQueryUncertainty,
    /// One aggregation per template variant of each query
    RunSyntaxUncertainty,
    /// Robustness as a function of the number of aggregated samples
    RunSampleEfficiency {
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_N_VALUES)]
        n_values: Vec<usize>,
    },
    /// Score a profile file {"universe": [...], "answers": [[...], ...]}
    ScoreProfile {
        profile: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Print the prompts for drafting a symptom-cause matrix by hand
    EmitMatrixPrompts,
    /// Re-run a recorded run from its directory using only its transcripts
    Replay { run_dir: PathBuf },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(err) = run(Cli::parse()) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    let exec = if g.sequential { Execution::Sequential } else { Execution::default() };
    match &cli.command {
        Command::GenerateQueries => generate_queries(&config(g)?, exec),
        Command::RunQueryUncertainty => {
            let config = config(g)?;
            finish(&config, ExperimentKind::QueryUncertainty, run_query_uncertainty(&config, exec)?)
        }
        Command::RunSyntaxUncertainty => {
            let config = config(g)?;
            finish(&config, ExperimentKind::SyntaxUncertainty, run_syntax_uncertainty(&config, exec)?)
        }
        Command::RunSampleEfficiency { n_values } => {
            let config = config(g)?;
            finish(&config, ExperimentKind::SampleEfficiency, run_sample_efficiency(&config, n_values, exec)?)
        }
        Command::ScoreProfile { profile, format } => score_profile(profile, *format),
        Command::EmitMatrixPrompts => emit_matrix_prompts(g.domain),
        Command::Replay { run_dir } => replay(g, run_dir, exec),
    }
}

fn config(g: &Global) -> Result<ExperimentConfig> {
    let mut config = match &g.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    apply_overrides(&mut config, g)?;
    config.validate()?;
    Ok(config)
}

fn apply_overrides(config: &mut ExperimentConfig, g: &Global) -> Result<()> {
    if let Some(seed) = g.seed {
        config.seed = seed;
    }
    if let Some(dir) = &g.out_dir {
        config.out_dir = Some(dir.clone());
    }
    if let Some(domain) = g.domain {
        config.domain = domain;
    }
    if let Some(tier) = g.tier {
        config.tier = tier;
    }
    if let Some(aggregator) = g.aggregator {
        config.aggregator = aggregator;
    }
    if let Some(queries) = g.queries {
        config.query_count = queries;
    }
    match g.provider {
        None => {}
        Some(ProviderKind::Mock) => {
            if !matches!(config.provider, ProviderConfig::Mock(_)) {
                config.provider = ProviderConfig::default();
            }
        }
        Some(ProviderKind::Replay) => {
            let transcripts = g.transcripts.clone().or_else(|| match &config.provider {
                ProviderConfig::Replay { transcripts } => Some(transcripts.clone()),
                _ => None,
            });
            let Some(transcripts) = transcripts else { bail!("--provider replay needs --transcripts <file>") };
            config.provider = ProviderConfig::Replay { transcripts };
        }
        Some(ProviderKind::Http) => {
            let mut http = match &config.provider {
                ProviderConfig::Http(http) => http.clone(),
                _ => HttpProviderConfig::new("https://api.openai.com/v1", ""),
            };
            if let Some(url) = &g.base_url {
                http.base_url = url.clone();
            }
            if let Some(model) = &g.model {
                http.model = model.clone();
            }
            if http.model.is_empty() {
                bail!("--provider http needs --model (or a model in the config file)");
            }
            config.provider = ProviderConfig::Http(http);
        }
    }
    Ok(())
}

fn out_dir(config: &ExperimentConfig, kind: &str) -> PathBuf {
    config.out_dir.clone().unwrap_or_else(|| Path::new("runs").join(kind))
}

fn finish(config: &ExperimentConfig, kind: ExperimentKind, output: RunOutput) -> Result<()> {
    let dir = out_dir(config, kind.name());
    let rendered = persist(&dir, &output)?;
    let mut stdout = io::stdout().lock();
    write!(stdout, "{}", rendered.text)?;
    if !output.manifest.queries_excluded.is_empty() {
        writeln!(stdout, "{} queries excluded after provider failures", output.manifest.queries_excluded.len())?;
    }
    writeln!(stdout, "wrote {}", dir.display())?;
    Ok(())
}

fn generate_queries(config: &ExperimentConfig, exec: Execution) -> Result<()> {
    let prepared = prepare(config, exec)?;
    let dir = out_dir(config, "queries");
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let sets_path = dir.join("sets.json");
    fs::write(&sets_path, serde_json::to_string_pretty(&prepared.sets)? + "\n")?;
    let mut lines = String::new();
    for set in &prepared.sets {
        for variant in VariantId::ALL {
            let query = render_query(&builtin_template(config.domain, variant), set);
            lines += &serde_json::to_string(&json!({
                "symptom_set_id": set.id(),
                "uncertainty": set.uncertainty,
                "variant": variant,
                "text": query.text,
            }))?;
            lines.push('\n');
        }
    }
    fs::write(dir.join("queries.jsonl"), lines)?;
    let tier = match config.tier {
        UncertaintyTier::Low => "low",
        UncertaintyTier::High => "high",
    };
    println!("{} symptom sets ({} {tier}) written to {}", prepared.sets.len(), config.domain, dir.display());
    println!("use \"sets_file\": {:?} in a config to run on exactly these sets", sets_path);
    Ok(())
}

fn score_profile(path: &Path, format: Format) -> Result<()> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let bad = |name: &str| format!("{}: missing or malformed `{name}`", path.display());
    let names: Vec<String> = serde_json::from_value(value["universe"].clone()).with_context(|| bad("universe"))?;
    let answers: Vec<Vec<String>> = serde_json::from_value(value["answers"].clone()).with_context(|| bad("answers"))?;
    let universe = Arc::new(Universe::from_names(&names)?);
    let answers = answers.iter().map(|a| RankedAnswer::from_names(a)).collect::<Result<Vec<_>, _>>()?;
    let table = score_table(&Profile::from_answers(&answers, universe)?);
    let stdout = io::stdout().lock();
    match format {
        Format::Csv => table.write_csv(stdout)?,
        Format::Json => serde_json::to_writer_pretty(stdout, &table)?,
    }
    if format == Format::Json {
        println!();
    }
    Ok(())
}

fn emit_matrix_prompts(domain: Option<DomainTag>) -> Result<()> {
    let domains = domain.map_or(DomainTag::ALL.to_vec(), |d| vec![d]);
    for d in domains {
        let prompts = matrix_prompts(d);
        println!("# {d}\ncauses: {}\nsymptoms: {}\n", prompts.causes, prompts.symptoms);
    }
    Ok(())
}

fn replay(g: &Global, run_dir: &Path, exec: Execution) -> Result<()> {
    let manifest_path = run_dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).with_context(|| format!("reading {}", manifest_path.display()))?;
    let manifest: Manifest = serde_json::from_str(&text).with_context(|| format!("parsing {}", manifest_path.display()))?;
    let transcripts = g.transcripts.clone().unwrap_or_else(|| run_dir.join(TRANSCRIPTS_FILE));
    let config = ExperimentConfig {
        provider: ProviderConfig::Replay { transcripts },
        out_dir: Some(g.out_dir.clone().unwrap_or_else(|| run_dir.join("replay"))),
        ..manifest.config
    };
    let output = match manifest.experiment {
        ExperimentKind::QueryUncertainty => run_query_uncertainty(&config, exec)?,
        ExperimentKind::SyntaxUncertainty => run_syntax_uncertainty(&config, exec)?,
        ExperimentKind::SampleEfficiency => run_sample_efficiency(&config, &manifest.n_values, exec)?,
    };
    finish(&config, manifest.experiment, output)?;
    let dir = out_dir(&config, manifest.experiment.name());
    for file in [RESULTS_FILE, REPORT_CSV] {
        let same = fs::read(run_dir.join(file)).ok() == fs::read(dir.join(file)).ok();
        println!("{file}: {}", if same { "identical to the recorded run" } else { "differs from the recorded run" });
    }
    Ok(())
}
