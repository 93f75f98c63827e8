//! Command-line front end and HTTP session service.

pub mod server;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use pragma_core::harness::session::{Directions, SessionStore};
use pragma_core::harness::{
    eval_listener, eval_speaker_bleu, lambda_grid, listener_lambda_curve, proxy_speaker_eval, run_experiment,
    speaker_lambda_curve, train_listener, train_segmenter, train_speaker, tune_lambda, accuracy, ExperimentSpec,
    Role, TrainConfig,
};
use pragma_core::listener::Listener;
use pragma_core::neural::checkpoint::Checkpoint;
use pragma_core::pragmatics::{rational_listener, rational_speaker, Mode, PragmaticsConfig};
use pragma_core::sail::map_format::{load_map_dir, save_map};
use pragma_core::sail::synth::sail_generate;
use pragma_core::sail::StartMode;
use pragma_core::scone::synth::synth_generate;
use pragma_core::speaker::{Segmenter, Speaker};
use pragma_core::world::{load_instances, save_instances, Format, MapLibrary};
use pragma_core::{Domain, Instance};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Parser, Debug)]
#[command(name = "pragma", about = "Base and rational listeners and speakers for grounded instructions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic corpus.
    Synth(SynthArgs),
    /// Train one base model.
    Train(TrainArgs),
    /// Evaluate listener accuracy or speaker BLEU and proxy accuracy.
    Eval(EvalArgs),
    /// Run a system over a corpus and write its outputs as jsonl.
    Infer(EvalArgs),
    /// Sweep lambda on dev data.
    TuneLambda(EvalArgs),
    /// Train and compare systems under a model budget.
    Experiment(ExperimentArgs),
    /// Serve human-evaluation sessions over HTTP.
    Serve(ServeArgs),
    /// Convert native SAIL routes into canonical jsonl.
    SailConvert(SailConvertArgs),
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Corpus file.
    #[arg(long)]
    pub data: PathBuf,
    /// jsonl, scone_tsv or sail_native.
    #[arg(long, default_value = "jsonl")]
    pub format: String,
    /// Directory of `.map` files for SAIL corpora.
    #[arg(long)]
    pub maps: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub domain: Domain,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Sentences per instance.
    #[arg(long, default_value_t = 5)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.5)]
    pub ambiguity: f64,
    /// SAIL only: number of random maps.
    #[arg(long, default_value_t = 4)]
    pub num_maps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// SAIL only: where to write the generated maps.
    #[arg(long)]
    pub maps_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub domain: Domain,
    #[arg(long)]
    pub role: Role,
    /// JSON object (inline or a file path) overriding config fields.
    #[arg(long)]
    pub config: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub dev: Option<PathBuf>,
    #[arg(long, default_value = "jsonl")]
    pub format: String,
    #[arg(long)]
    pub maps: Option<PathBuf>,
    /// Checkpoint path; the training log goes next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub domain: Option<Domain>,
    #[arg(long)]
    pub role: Role,
    #[command(flatten)]
    pub data: DataArgs,
    /// Listener checkpoints (repeatable).
    #[arg(long = "listener")]
    pub listeners: Vec<PathBuf>,
    /// Speaker checkpoints (repeatable).
    #[arg(long = "speaker")]
    pub speakers: Vec<PathBuf>,
    /// Held-out listeners that follow generated directions (repeatable).
    #[arg(long = "proxy")]
    pub proxies: Vec<PathBuf>,
    #[arg(long, default_value = "base")]
    pub mode: Mode,
    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,
    /// Beam width of the generating model.
    #[arg(long)]
    pub beam: Option<usize>,
    /// Comma-separated lambda grid for tune-lambda.
    #[arg(long)]
    pub grid: Option<String>,
    /// SAIL start heading resolution: rel or abs.
    #[arg(long)]
    pub start_mode: Option<String>,
    /// Name recorded for inferred directions.
    #[arg(long, default_value = "system")]
    pub system: String,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub config: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    /// JSON object (inline or a file path) overriding the default spec.
    #[arg(long)]
    pub config: Option<String>,
    #[arg(long)]
    pub domain: Option<Domain>,
    /// Run a single seed instead of the spec's list.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// jsonl of `{system, instance_id, sentences}` rows from `infer`.
    #[arg(long)]
    pub directions: Option<PathBuf>,
    /// Append finished sessions here.
    #[arg(long)]
    pub results: Option<PathBuf>,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
}

#[derive(Args, Debug)]
pub struct SailConvertArgs {
    #[arg(long)]
    pub maps: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// One system's directions for one instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionsRow {
    pub system: String,
    pub instance_id: String,
    pub sentences: Vec<Vec<String>>,
}

fn json_arg(arg: &Option<String>) -> Result<Option<Value>> {
    let Some(s) = arg else { return Ok(None) };
    let text = if s.trim_start().starts_with('{') {
        s.clone()
    } else {
        std::fs::read_to_string(s).with_context(|| format!("reading config {s}"))?
    };
    Ok(Some(serde_json::from_str(&text).context("parsing config JSON")?))
}

fn merge(base: &mut Value, patch: Value, path: &str) -> Result<()> {
    match (base, patch) {
        (Value::Object(m), Value::Object(p)) => {
            for (k, x) in p {
                let here = format!("{path}{k}");
                match m.get_mut(&k) {
                    Some(slot) if slot.is_object() && x.is_object() => merge(slot, x, &format!("{here}."))?,
                    Some(slot) => *slot = x,
                    None => bail!("unknown config field {here:?}"),
                }
            }
            Ok(())
        }
        _ => bail!("config must be a JSON object"),
    }
}

/// Overlay the keys of `patch` on the serialized `base`; nested objects
/// merge key by key.
pub fn overlay<T: Serialize + for<'de> Deserialize<'de>>(base: &T, patch: Option<Value>) -> Result<T> {
    let mut v = serde_json::to_value(base)?;
    if let Some(p) = patch {
        merge(&mut v, p, "")?;
    }
    Ok(serde_json::from_value(v)?)
}

pub fn load_data(path: &Path, format: &str, maps: Option<&Path>) -> Result<Vec<Instance>> {
    let format: Format = format.parse()?;
    let lib = match maps {
        Some(d) => load_map_dir(d)?,
        None => MapLibrary::new(),
    };
    load_instances(path, format, &lib).with_context(|| format!("loading {}", path.display()))
}

fn load_listeners(paths: &[PathBuf]) -> Result<Vec<Listener>> {
    paths
        .iter()
        .map(|p| Ok(Listener::from_checkpoint(&Checkpoint::load(p).with_context(|| format!("{}", p.display()))?)?))
        .collect()
}

fn load_speakers(paths: &[PathBuf]) -> Result<Vec<Speaker>> {
    paths
        .iter()
        .map(|p| Ok(Speaker::from_checkpoint(&Checkpoint::load(p).with_context(|| format!("{}", p.display()))?)?))
        .collect()
}

fn write_out(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                so.write_all(b"\n")?;
            }
        }
    }
    Ok(())
}

fn parse_start_mode(s: &Option<String>) -> Result<Option<StartMode>> {
    match s.as_deref() {
        None => Ok(None),
        Some("rel") => Ok(Some(StartMode::Rel)),
        Some("abs") => Ok(Some(StartMode::Abs)),
        Some(o) => bail!("start mode must be rel or abs, not {o:?}"),
    }
}

fn pragmatics_config(a: &EvalArgs) -> Result<PragmaticsConfig> {
    let mut cfg = overlay(&PragmaticsConfig::default(), json_arg(&a.config)?)?;
    cfg.mode = a.mode;
    cfg.lambda = a.lambda;
    if let Some(b) = a.beam {
        match a.role {
            Role::Speaker => cfg.speaker_beam = b,
            _ => cfg.listener_beam = b,
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn filter_domain(data: Vec<Instance>, domain: Option<Domain>) -> Vec<Instance> {
    match domain {
        Some(d) => data.into_iter().filter(|i| i.domain == d).collect(),
        None => data,
    }
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let insts = match a.domain {
        Domain::Sail => {
            let (maps, insts) = sail_generate(a.n, a.steps, a.num_maps, a.seed)?;
            let dir = a.maps_out.as_ref().context("SAIL synthesis needs --maps-out")?;
            std::fs::create_dir_all(dir)?;
            for (name, m) in &maps {
                save_map(m, &dir.join(format!("{name}.map")))?;
            }
            insts
        }
        d => synth_generate(d, a.n, a.steps, a.ambiguity, a.seed)?,
    };
    save_instances(&insts, &a.out)?;
    Ok(())
}

pub fn train_config(a: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = overlay(&TrainConfig::new(a.domain, a.role), json_arg(&a.config)?)?;
    cfg.domain = a.domain;
    cfg.role = a.role;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if a.train.is_some() {
        cfg.train_path = a.train.clone();
    }
    if a.dev.is_some() {
        cfg.dev_path = a.dev.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let cfg = train_config(a)?;
    let train_path = cfg.train_path.clone().context("training data path missing (--train)")?;
    let train = filter_domain(load_data(&train_path, &a.format, a.maps.as_deref())?, Some(cfg.domain));
    let dev = match &cfg.dev_path {
        Some(p) => filter_domain(load_data(p, &a.format, a.maps.as_deref())?, Some(cfg.domain)),
        None => bail!("dev data path missing (--dev)"),
    };
    let (ckpt, log) = match cfg.role {
        Role::Listener => {
            let t = train_listener(&cfg, &train, &dev)?;
            (t.checkpoint_with(t.model.to_checkpoint())?, t.log)
        }
        Role::Speaker => {
            let t = train_speaker(&cfg, &train, &dev)?;
            (t.checkpoint_with(t.model.to_checkpoint())?, t.log)
        }
        Role::Segmenter => {
            let t = train_segmenter(&cfg, &train, &dev)?;
            (t.checkpoint_with(t.model.to_checkpoint())?, t.log)
        }
    };
    ckpt.save(&a.out)?;
    let log_path = a.out.with_extension("log.json");
    std::fs::write(&log_path, serde_json::to_string_pretty(&log)?)?;
    println!("best dev {:.2} at epoch {} -> {}", log.best_dev, log.best_epoch, a.out.display());
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let data = filter_domain(load_data(&a.data.data, &a.data.format, a.data.maps.as_deref())?, a.domain);
    let cfg = pragmatics_config(a)?;
    let listeners = load_listeners(&a.listeners)?;
    let speakers = load_speakers(&a.speakers)?;
    let report = match a.role {
        Role::Listener => eval_listener(&listeners, &speakers, &data, &cfg, parse_start_mode(&a.start_mode)?)?,
        Role::Speaker if a.proxies.is_empty() => eval_speaker_bleu(&speakers, &listeners, &data, &cfg)?,
        Role::Speaker => proxy_speaker_eval(&speakers, &listeners, &load_listeners(&a.proxies)?, &data, &cfg)?,
        Role::Segmenter => bail!("evaluate the segmenter through training dev F1"),
    };
    write_out(&a.out, &report.to_json()?)
}

fn cmd_infer(a: &EvalArgs) -> Result<()> {
    let data = filter_domain(load_data(&a.data.data, &a.data.format, a.data.maps.as_deref())?, a.domain);
    let cfg = pragmatics_config(a)?;
    let listeners = if a.role == Role::Segmenter { Vec::new() } else { load_listeners(&a.listeners)? };
    let speakers = load_speakers(&a.speakers)?;
    let segmenter = match a.role {
        Role::Segmenter => {
            let ckpt = a.listeners.first().context("pass the segmenter checkpoint with --listener")?;
            Some(Segmenter::from_checkpoint(&Checkpoint::load(ckpt)?)?)
        }
        _ => None,
    };
    let mut out = String::new();
    for inst in &data {
        let line = match a.role {
            Role::Listener => {
                let actions = rational_listener(&listeners, &speakers, &inst.sentences(), &inst.initial_state, &cfg)?;
                serde_json::to_string(&serde_json::json!({"system": a.system, "instance_id": inst.id, "actions": actions}))?
            }
            Role::Speaker => {
                let segs = pragma_core::harness::instance_segments(inst);
                let sentences = rational_speaker(&speakers, &listeners, &segs, &cfg)?;
                serde_json::to_string(&DirectionsRow {
                    system: a.system.clone(),
                    instance_id: inst.id.clone(),
                    sentences,
                })?
            }
            Role::Segmenter => {
                let seg = segmenter.as_ref().expect("loaded above");
                let route: Vec<_> = inst
                    .actions()
                    .into_iter()
                    .filter_map(|x| match x {
                        pragma_core::Action::Sail(s) => Some(s),
                        _ => None,
                    })
                    .collect();
                let segs = seg.segment_route(&inst.initial_state, &route, 0.5)?;
                serde_json::to_string(&serde_json::json!({"instance_id": inst.id, "segments": segs}))?
            }
        };
        out.push_str(&line);
        out.push('\n');
    }
    write_out(&a.out, &out)
}

fn parse_grid(s: &Option<String>) -> Result<Vec<f64>> {
    match s {
        None => Ok(lambda_grid()),
        Some(s) => s
            .split(',')
            .map(|x| x.trim().parse::<f64>().with_context(|| format!("bad grid value {x:?}")))
            .collect(),
    }
}

fn cmd_tune(a: &EvalArgs) -> Result<()> {
    let data = filter_domain(load_data(&a.data.data, &a.data.format, a.data.maps.as_deref())?, a.domain);
    let cfg = pragmatics_config(a)?;
    let grid = parse_grid(&a.grid)?;
    let listeners = load_listeners(&a.listeners)?;
    let speakers = load_speakers(&a.speakers)?;
    let metrics: Vec<f64> = match a.role {
        Role::Listener => listener_lambda_curve(&listeners, &speakers, &data, &grid, &cfg)?
            .iter()
            .map(|o| accuracy(o))
            .collect(),
        Role::Speaker => speaker_lambda_curve(&speakers, &listeners, &data, &grid, &cfg)?
            .iter()
            .map(|g| {
                let c: Vec<_> = g.iter().map(|s| pragma_core::harness::join_sentences(s)).collect();
                let r: Vec<_> = data.iter().map(|i| pragma_core::harness::join_sentences(&i.sentences())).collect();
                pragma_core::harness::corpus_bleu(&c, &r)
            })
            .collect(),
        Role::Segmenter => bail!("lambda applies to listeners and speakers"),
    };
    let curve = tune_lambda(&grid, &metrics)?;
    write_out(&a.out, &serde_json::to_string_pretty(&curve)?)
}

fn cmd_experiment(a: &ExperimentArgs) -> Result<()> {
    let mut spec = overlay(&ExperimentSpec::default(), json_arg(&a.config)?)?;
    if let Some(d) = a.domain {
        spec.domain = d;
    }
    if let Some(s) = a.seed {
        spec.seeds = vec![s];
    }
    let report = run_experiment(&spec)?;
    eprint!("{}", report.table());
    write_out(&a.out, &report.to_json()?)
}

/// Rows from `infer --role speaker` grouped by system and instance.
pub fn load_directions(path: &Path) -> Result<Directions> {
    let mut d: Directions = BTreeMap::new();
    for (k, line) in std::fs::read_to_string(path)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: DirectionsRow = serde_json::from_str(line).with_context(|| format!("{}:{}", path.display(), k + 1))?;
        d.entry(row.system).or_default().insert(row.instance_id, row.sentences);
    }
    Ok(d)
}

pub fn session_store(a: &ServeArgs) -> Result<SessionStore> {
    let data = load_data(&a.data.data, &a.data.format, a.data.maps.as_deref())?;
    let directions = match &a.directions {
        Some(p) => load_directions(p)?,
        None => Directions::new(),
    };
    Ok(SessionStore::new(data, directions, a.results.clone()))
}

fn cmd_serve(a: &ServeArgs) -> Result<()> {
    let store = Arc::new(session_store(a)?);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(("127.0.0.1", a.port)).await?;
        eprintln!("serving on http://{}", listener.local_addr()?);
        axum::serve(listener, server::router(store)).await?;
        Ok(())
    })
}

fn cmd_sail_convert(a: &SailConvertArgs) -> Result<()> {
    let lib = load_map_dir(&a.maps)?;
    let insts = load_instances(&a.input, Format::SailNative, &lib)?;
    save_instances(&insts, &a.out)?;
    eprintln!("{} routes -> {}", insts.len(), a.out.display());
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Infer(a) => cmd_infer(a),
        Command::TuneLambda(a) => cmd_tune(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Serve(a) => cmd_serve(a),
        Command::SailConvert(a) => cmd_sail_convert(a),
    }
}
