//! `cxg`: every pipeline stage as a subcommand. Stages talk through
//! JSON-lines files so any of them can be re-run or fed hand-edited data.
//!
//! Exit status is 0 on success, 1 on bad input or usage, 2 when the
//! text-generation backend fails.

mod config;

use std::collections::BTreeSet;
use std::fs::{File, OpenOptions};
use std::io::{BufReader, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use cxg_core::conllu::{ConlluReader, ParseMode};
use cxg_core::cost::{
    self, comparison_table, cost_curve, cost_per_tp, expected_human_workload, parse_decimal, required_corpus_size,
    select_prompt, CostParams, DevSet, Money, PromptMetrics,
};
use cxg_core::gateway::{
    self, bundled_shots, classify, Backend, ClassifyOptions, HttpBackend, LabelLine, RecordingBackend, ReplayBackend,
    Usage,
};
use cxg_core::pattern::{self, compile, LabelInventory, Pattern};
use cxg_core::probe::{render_table, run_probe, ProbeOptions};
use cxg_core::store::{ExportFilter, QueueMode, Store};
use cxg_core::{jsonl, CandidateInstance, PatternSpec, Sentence};
use serde::{Deserialize, Serialize};

use crate::config::Config;

#[derive(Parser)]
#[command(name = "cxg", version, about = "Mine rare constructions from parsed corpora")]
struct Cli {
    /// TOML settings file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Read CoNLL-U and write sentences as JSON lines.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Fail on the first malformed tree instead of skipping it.
        #[arg(long)]
        strict: bool,
    },
    /// Extract pattern matches as candidate JSON lines.
    Match {
        /// `cmc`, `cmc-ud` or a pattern file.
        #[arg(long)]
        pattern: Option<String>,
        /// Label inventory for a pattern file: `clearnlp`, `ud` or a file.
        #[arg(long, default_value = "clearnlp")]
        labels: String,
        /// CoNLL-U, or sentence JSON lines from `ingest`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        strict: bool,
    },
    /// Label candidates with a prompt preset.
    Classify {
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long)]
        prompt: u32,
        #[arg(long)]
        candidates: PathBuf,
        /// Label JSON lines.
        #[arg(long)]
        out: PathBuf,
        /// Usage, unresolved ids and errors as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Replace the preset's model.
        #[arg(long)]
        model: Option<String>,
    },
    /// Score labels against gold and append the prompt's metrics.
    Metrics {
        /// `{candidate_id, label}` JSON lines; a store export works.
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Report written by `classify`, for token usage.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        prompt: Option<u32>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cheapest prompt per true positive at the given prices.
    SelectPrompt {
        #[command(flatten)]
        source: MetricsSource,
        #[command(flatten)]
        prices: PriceArgs,
        #[arg(long)]
        tp_req: Option<u64>,
    },
    /// Raw sentences needed to reach a number of true positives.
    SizeCorpus {
        #[arg(long)]
        devset_size: u64,
        #[arg(long)]
        devset_tp: u64,
        #[arg(long)]
        tp_req: u64,
        /// Also print the human review workload at this precision.
        #[arg(long)]
        precision: Option<String>,
    },
    /// Cost per true positive as a function of the human price.
    CostCurve {
        #[command(flatten)]
        source: MetricsSource,
        #[arg(long, default_value = "0")]
        from: Money,
        #[arg(long, default_value = "2")]
        to: Money,
        #[arg(long, default_value_t = 200)]
        steps: u32,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        c_api_in: Option<Money>,
        #[arg(long)]
        c_api_out: Option<Money>,
    },
    /// Run the annotation service. The token comes from CXG_ANNOTATION_TOKEN.
    Serve {
        #[arg(long)]
        store: Option<PathBuf>,
        /// Candidates to add before serving.
        #[arg(long)]
        candidates: Option<PathBuf>,
        /// Model labels to add before serving, for the cost projection.
        #[arg(long)]
        import_labels: Option<PathBuf>,
        /// `classify` report whose usage goes with `--import-labels`.
        #[arg(long)]
        import_report: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        static_dir: Option<PathBuf>,
        /// Offer every candidate in order instead of the diversity queue.
        #[arg(long)]
        sequential: bool,
    },
    /// Label unlabeled candidates from single-class verb/object/preposition/object quads.
    Extrapolate {
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long, default_value = "extrapolation")]
        annotator: String,
        /// Conflicting quads as JSON lines.
        #[arg(long)]
        conflicts: Option<PathBuf>,
    },
    /// Write labeled candidates as JSON lines.
    Export {
        #[arg(long)]
        store: Option<PathBuf>,
        /// e.g. `human+positive`, `extrapolated`, `all`.
        #[arg(long, default_value = "all")]
        filter: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ask each instance "is X moving?" before and after swapping the verb.
    Probe {
        #[command(flatten)]
        backend: BackendArgs,
        /// Candidate JSON lines.
        #[arg(long)]
        instances: PathBuf,
        /// Keep only instances labeled positive in this export.
        #[arg(long)]
        positives_from: Option<PathBuf>,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        family: Option<String>,
        /// Per-instance records as JSON lines.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Args)]
struct BackendArgs {
    /// `http`, `replay:<transcript>` or `mock:<name>`.
    #[arg(long)]
    backend: String,
    /// Append every exchange to this transcript.
    #[arg(long)]
    record: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    concurrency: usize,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct MetricsSource {
    /// PromptMetrics JSON lines from `metrics`.
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// The bundled 18-prompt reference table.
    #[arg(long)]
    reference: bool,
}

#[derive(Args)]
struct PriceArgs {
    #[arg(long)]
    c_hr: Option<Money>,
    #[arg(long)]
    c_api_in: Option<Money>,
    #[arg(long)]
    c_api_out: Option<Money>,
}

/// Exit status 2.
#[derive(Debug)]
struct BackendFailure(String);

impl std::fmt::Display for BackendFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "backend failure: {}", self.0)
    }
}

impl std::error::Error for BackendFailure {}

#[derive(Debug, Default, Serialize, Deserialize)]
struct ClassifyReport {
    prompt_id: u32,
    model_id: String,
    labeled: usize,
    unresolved: Vec<String>,
    usage: Usage,
    errors: Vec<String>,
    warnings: Vec<String>,
}

#[derive(Deserialize)]
struct GoldLine {
    candidate_id: String,
    label: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<BackendFailure>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    match cli.command {
        Command::Ingest { input, out, strict } => {
            let (sentences, skipped) = read_conllu(&input, strict)?;
            jsonl::write(&out, &sentences)?;
            println!(
                "{} sentences written to {}, {} skipped",
                sentences.len(),
                out.display(),
                skipped
            );
        }
        Command::Match {
            pattern,
            labels,
            input,
            out,
            strict,
        } => {
            let pattern = load_pattern(pattern.as_deref(), config.pattern.as_deref(), &labels)?;
            let sentences = read_sentences(&input, strict)?;
            let found: Vec<CandidateInstance> = sentences.iter().flat_map(|s| pattern.find_matches(s)).collect();
            jsonl::write(&out, &found)?;
            println!("{} candidates written to {}", found.len(), out.display());
        }
        Command::Classify {
            backend,
            prompt,
            candidates,
            out,
            report,
            model,
        } => {
            let mut spec = gateway::preset(prompt)?;
            if let Some(m) = model.or(config.model.clone()) {
                spec.model_id = m;
            }
            let candidates: Vec<CandidateInstance> = jsonl::read(&candidates)?;
            let client = open_backend(&backend, &config)?;
            let opts = ClassifyOptions {
                concurrency: backend.concurrency.max(1),
                ..ClassifyOptions::default()
            };
            let outcome = classify(&client, &spec, &bundled_shots(), &candidates, &opts)?;
            let lines: Vec<LabelLine> = outcome
                .results
                .iter()
                .map(|r| LabelLine::from_result(r, &spec))
                .collect();
            jsonl::write(&out, &lines)?;
            let summary = ClassifyReport {
                prompt_id: spec.id,
                model_id: spec.model_id.clone(),
                labeled: lines.len(),
                unresolved: outcome.unresolved.clone(),
                usage: outcome.usage,
                errors: outcome.errors.clone(),
                warnings: outcome.warnings.clone(),
            };
            if let Some(path) = report {
                write_json(&path, &summary)?;
            }
            println!(
                "prompt {}: {} labeled ({} positive), {} unresolved, {} input + {} output tokens",
                spec.id,
                lines.len(),
                lines.iter().filter(|l| l.label).count(),
                outcome.unresolved.len(),
                outcome.usage.input_tokens,
                outcome.usage.output_tokens
            );
            if !outcome.errors.is_empty() {
                return Err(BackendFailure(outcome.errors.join("; ")).into());
            }
        }
        Command::Metrics {
            gold,
            labels,
            report,
            prompt,
            out,
        } => {
            let gold: Vec<GoldLine> = jsonl::read(&gold)?;
            let gold = DevSet::new(gold.into_iter().map(|g| (g.candidate_id, g.label)));
            let labels: Vec<LabelLine> = jsonl::read(&labels)?;
            let report: Option<ClassifyReport> = report.map(|p| read_json(&p)).transpose()?;
            let prompt_id = prompt
                .or(report.as_ref().map(|r| r.prompt_id))
                .or(labels.first().map(|l| l.prompt_id))
                .unwrap_or(0);
            let usage = report.map(|r| r.usage).unwrap_or_default();
            let predicted: Vec<_> = labels.iter().map(LabelLine::to_result).collect();
            let eval = cost::devset_metrics(&gold, &predicted, &usage, prompt_id)?;
            append_jsonl(&out, &eval.metrics)?;
            println!(
                "prompt {prompt_id}: precision {:.4} recall {:.4} f1 {:.4} (tp {} fp {} fn {} tn {}), {} unresolved",
                eval.precision,
                eval.recall,
                eval.f1,
                eval.metrics.tp,
                eval.metrics.fp,
                eval.metrics.fn_,
                eval.metrics.tn,
                eval.unresolved.len()
            );
        }
        Command::SelectPrompt { source, prices, tp_req } => {
            let (ms, default_prices) = load_metrics(&source, &config)?;
            let params = CostParams::new(
                prices.c_hr.unwrap_or(config.prices.c_hr),
                prices.c_api_in.unwrap_or(default_prices.c_api_in),
                prices.c_api_out.unwrap_or(default_prices.c_api_out),
            )?;
            let tp_req = tp_req.unwrap_or(config.tp_required);
            print!("{}", comparison_table(&ms, &params.prices(), &[params.c_hr], tp_req));
            let best = &ms[select_prompt(&ms, &params)?];
            println!(
                "selected prompt {} at c_hr {}: {} per true positive",
                best.prompt_id,
                params.c_hr,
                cost_per_tp(best, &params)?.to_decimal_string(6)
            );
        }
        Command::SizeCorpus {
            devset_size,
            devset_tp,
            tp_req,
            precision,
        } => {
            println!("{}", required_corpus_size(devset_size, devset_tp, tp_req)?);
            if let Some(p) = precision {
                let p = parse_decimal(&p)?;
                let p = if p > cost::Rational::from_integer(1) {
                    p / cost::Rational::from_integer(100)
                } else {
                    p
                };
                println!("human workload: {}", expected_human_workload(tp_req, p)?);
            }
        }
        Command::CostCurve {
            source,
            from,
            to,
            steps,
            csv,
            c_api_in,
            c_api_out,
        } => {
            let (ms, default_prices) = load_metrics(&source, &config)?;
            let prices = cost::TokenPrices {
                input: c_api_in.unwrap_or(default_prices.c_api_in),
                output: c_api_out.unwrap_or(default_prices.c_api_out),
            };
            let curves = cost_curve(&ms, from, to, &prices)?;
            println!("lower envelope over c_hr in [{from}, {to}]:");
            for s in &curves.envelope {
                println!("  prompt {:>3}  {:.6} .. {:.6}", s.prompt_id, s.from, s.to);
            }
            let schedule: Vec<String> = curves.schedule().iter().map(u32::to_string).collect();
            println!("schedule: {}", schedule.join(" -> "));
            if !curves.excluded.is_empty() {
                println!("excluded (no true positives): {:?}", curves.excluded);
            }
            if let Some(path) = csv {
                std::fs::write(&path, curves.to_csv(steps)).with_context(|| format!("writing {}", path.display()))?;
                println!("curve written to {}", path.display());
            }
        }
        Command::Serve {
            store,
            candidates,
            import_labels,
            import_report,
            host,
            port,
            static_dir,
            sequential,
        } => {
            let mut store_config = config.sampler.clone();
            if sequential {
                store_config.mode = QueueMode::Sequential;
            }
            let path = store
                .or(config.store.clone())
                .ok_or_else(|| anyhow!("--store is required"))?;
            let mut store = Store::open(&path, store_config)?;
            if let Some(c) = candidates {
                let added = store.add_candidates(jsonl::read::<CandidateInstance>(&c)?)?;
                log::info!("{added} new candidates from {}", c.display());
            }
            if let Some(l) = import_labels {
                let lines: Vec<LabelLine> = jsonl::read(&l)?;
                let fresh: Vec<LabelLine> = lines
                    .into_iter()
                    .filter(|l| !store.state().llm.contains_key(&l.candidate_id))
                    .collect();
                if !fresh.is_empty() {
                    let usage = import_report
                        .map(|p| read_json::<ClassifyReport>(&p))
                        .transpose()?
                        .map(|r| r.usage);
                    store.import_llm_labels(&fresh, usage)?;
                }
                log::info!("{} new model labels from {}", fresh.len(), l.display());
            }
            let mut state = cxg_service::AppState::new(store, config.prices.clone(), config.tp_required);
            state.token = std::env::var("CXG_ANNOTATION_TOKEN").ok().filter(|t| !t.is_empty());
            let addr: SocketAddr = format!("{host}:{}", port.unwrap_or(config.port)).parse()?;
            let static_dir = static_dir.or(config.static_dir.clone());
            tokio::runtime::Runtime::new()?.block_on(cxg_service::serve(addr, Arc::new(state), static_dir))?;
        }
        Command::Extrapolate {
            store,
            annotator,
            conflicts,
        } => {
            let path = store
                .or(config.store.clone())
                .ok_or_else(|| anyhow!("--store is required"))?;
            let mut store = Store::open(&path, config.sampler.clone())?;
            let report = store.extrapolate(&annotator)?;
            println!(
                "{} labels added, {} retracted, {} conflicting quads",
                report.added.len(),
                report.retracted.len(),
                report.conflicts.len()
            );
            if let Some(p) = conflicts {
                jsonl::write(&p, &report.conflicts)?;
            }
        }
        Command::Export { store, filter, out } => {
            let filter = ExportFilter::parse(&filter).map_err(|e| anyhow!(e))?;
            let path = store
                .or(config.store.clone())
                .ok_or_else(|| anyhow!("--store is required"))?;
            let store = Store::open(&path, config.sampler.clone())?;
            let export = store.export(&filter);
            jsonl::write(&out, &export.lines)?;
            for c in &export.counts {
                println!("{:<12} {:<8} {}", c.source.as_str(), c.label, c.count);
            }
            println!("{} lines written to {}", export.lines.len(), out.display());
        }
        Command::Probe {
            backend,
            instances,
            positives_from,
            model,
            family,
            out,
            report,
        } => {
            let mut instances: Vec<CandidateInstance> = jsonl::read(&instances)?;
            if let Some(p) = positives_from {
                let keep: BTreeSet<String> = jsonl::read::<GoldLine>(&p)?
                    .into_iter()
                    .filter(|g| g.label)
                    .map(|g| g.candidate_id)
                    .collect();
                instances.retain(|c| keep.contains(&c.candidate_id));
            }
            let model = model
                .or(config.model.clone())
                .unwrap_or_else(|| backend.backend.clone());
            let client = open_backend(&backend, &config)?;
            let opts = ProbeOptions {
                calls: ClassifyOptions {
                    concurrency: backend.concurrency.max(1),
                    ..ClassifyOptions::default()
                },
                ..ProbeOptions::default()
            };
            let mut run = run_probe(&client, &model, &instances, &opts);
            run.report.family = family;
            if let Some(p) = out {
                jsonl::write(&p, &run.records)?;
            }
            if let Some(p) = report {
                write_json(&p, &run.report)?;
            }
            print!("{}", render_table(std::slice::from_ref(&run.report)));
            println!(
                "{} instances, {} unresolved",
                run.report.instances, run.report.unresolved
            );
            // a record with questions but no answers lost its calls
            let failed: Vec<&str> = run
                .records
                .iter()
                .filter(|r| r.questions.is_some() && r.answers.is_none())
                .filter_map(|r| r.error.as_deref())
                .collect();
            if !failed.is_empty() {
                return Err(BackendFailure(format!("{} instances, first: {}", failed.len(), failed[0])).into());
            }
        }
    }
    Ok(())
}

fn read_conllu(path: &Path, strict: bool) -> Result<(Vec<Sentence>, usize)> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mode = if strict { ParseMode::Strict } else { ParseMode::Lenient };
    let mut reader = ConlluReader::new(BufReader::new(file), path.display().to_string(), mode);
    let sentences = reader.by_ref().collect::<Result<Vec<_>, _>>()?;
    for (id, problem) in reader.skipped() {
        log::warn!("skipped sentence {id}: {problem}");
    }
    Ok((sentences, reader.skipped().len()))
}

fn read_sentences(path: &Path, strict: bool) -> Result<Vec<Sentence>> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl" | "json") => Ok(jsonl::read(path)?),
        _ => Ok(read_conllu(path, strict)?.0),
    }
}

fn load_pattern(arg: Option<&str>, configured: Option<&Path>, labels: &str) -> Result<Pattern> {
    let path = match (arg, configured) {
        (Some(name), _) => {
            if let Some(p) = pattern::preset(name) {
                return Ok(p);
            }
            PathBuf::from(name)
        }
        (None, Some(p)) => p.to_path_buf(),
        (None, None) => return Ok(pattern::cmc()),
    };
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading pattern {}", path.display()))?;
    let spec = PatternSpec::from_toml_str(&text)?;
    let inventory = match labels {
        "clearnlp" => LabelInventory::clear_nlp(),
        "ud" => LabelInventory::universal(),
        file => {
            LabelInventory::from_toml_str(&std::fs::read_to_string(file).with_context(|| format!("reading {file}"))?)?
        }
    };
    let pattern = compile(&spec, &inventory)?;
    for w in pattern.warnings() {
        log::warn!("{w}");
    }
    Ok(pattern)
}

fn open_backend(args: &BackendArgs, config: &Config) -> Result<Box<dyn Backend>> {
    let failed = |e: gateway::BackendError| BackendFailure(e.to_string());
    let inner: Box<dyn Backend> = match args.backend.split_once(':') {
        None if args.backend == "http" => Box::new(HttpBackend::new(&config.backend).map_err(failed)?),
        Some(("replay", path)) => Box::new(ReplayBackend::open(path).map_err(failed)?),
        Some(("mock", name)) => gateway::mock::named(name).ok_or_else(|| anyhow!("unknown mock backend {name:?}"))?,
        _ => bail!(
            "backend must be http, replay:<file> or mock:<name>, got {:?}",
            args.backend
        ),
    };
    Ok(match &args.record {
        Some(path) => Box::new(RecordingBackend::new(inner, path).map_err(failed)?),
        None => inner,
    })
}

/// Metrics plus the token prices they are meant to be read with.
fn load_metrics(source: &MetricsSource, config: &Config) -> Result<(Vec<PromptMetrics>, CostParams)> {
    if source.reference {
        let p = cost::reference::reference_prices();
        let params = CostParams {
            c_hr: config.prices.c_hr,
            c_api_in: p.input,
            c_api_out: p.output,
        };
        return Ok((cost::reference::bundled().metrics(), params));
    }
    let path = source.metrics.as_ref().expect("clap group");
    let ms: Vec<PromptMetrics> = jsonl::read(path)?;
    if ms.is_empty() {
        bail!("{} holds no metrics", path.display());
    }
    for m in &ms {
        m.validate()?;
    }
    Ok((ms, config.prices.clone()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn append_jsonl<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    writeln!(f, "{}", serde_json::to_string(value)?)?;
    Ok(())
}
