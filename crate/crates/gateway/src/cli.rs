//! `noetic` command line.
//!
//! Exit codes: 0 success, 1 user error (bad flags, unreadable or invalid
//! input), 2 internal error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use serde::Serialize;
use serde_json::{json, Value as Json};

use noetic_core::classify::ClassifierModel;
use noetic_core::io::csv_import::read_csv_file;
use noetic_core::io::{read_recording, synth_recording, write_atomic, write_recording, Recording, SynthSpec};
use noetic_core::preprocess::{design_butterworth, DesignSpec, FilterKind};
use noetic_core::select::{score_channels, select_top_n, SelectMethod, SelectionReport};
use noetic_core::signal::epoch_by_markers;
use noetic_core::sim::{new_session, SimConfig, SimSession};
use noetic_flow::{catalog, load_graph, run_offline, FlowGraph, SinkOutput};

use crate::api::{serve, AppState};
use crate::store::Store;

#[derive(Debug)]
pub enum CliError {
    User(String),
    Internal(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::User(_) => 1,
            CliError::Internal(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::User(m) | CliError::Internal(m) => m,
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn user(e: impl std::fmt::Display) -> CliError {
    CliError::User(e.to_string())
}

fn at(path: &Path) -> impl Fn(noetic_core::Error) -> CliError + '_ {
    move |e| {
        let msg = e.to_string();
        let shown = path.display().to_string();
        if msg.contains(&shown) {
            CliError::User(msg)
        } else {
            CliError::User(format!("{shown}: {msg}"))
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "noetic", version, about = "EEG BCI pipeline engine")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// List every registered node kind.
    Nodes(NodesArgs),
    /// Generate a synthetic recording from a JSON spec.
    Synth(SynthArgs),
    /// Run a pipeline offline and write its sink outputs.
    Run(RunArgs),
    /// Score channels and choose the best n.
    Select(SelectArgs),
    /// Run a training pipeline and save the model.
    Train(TrainArgs),
    /// Run the obstacle simulator from a decision trace or a simulated decoder.
    Sim(SimArgs),
    /// Serve the HTTP/WebSocket API.
    Serve(ServeArgs),
    /// Design a Butterworth filter and print its response.
    FilterDesign(FilterArgs),
}

#[derive(Args, Debug)]
struct NodesArgs {
    /// Print the full catalog as JSON.
    #[arg(long, conflicts_with = "schema")]
    json: bool,
    /// Print the JSON Schema for pipeline documents.
    #[arg(long)]
    schema: bool,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Synthesis spec (JSON).
    #[arg(long)]
    input: PathBuf,
    /// Output `.neeg` file.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the synthesis seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Subject tag stored in the header.
    #[arg(long)]
    tag: Option<String>,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Pipeline document (JSON).
    #[arg(long)]
    pipeline: PathBuf,
    /// Recording fed to every non-synthetic source (`.neeg` or `.csv`).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Sampling rate for CSV input.
    #[arg(long)]
    fs: Option<f64>,
    /// Directory receiving one file per sink.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Correlation,
    MutualInformation,
    ChiSquared,
    Csp,
}

impl From<MethodArg> for SelectMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Correlation => SelectMethod::Correlation,
            MethodArg::MutualInformation => SelectMethod::MutualInformation,
            MethodArg::ChiSquared => SelectMethod::ChiSquared,
            MethodArg::Csp => SelectMethod::Csp,
        }
    }
}

#[derive(Args, Debug)]
struct SelectArgs {
    /// Labeled `.neeg` recording; markers with a class id define the epochs.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Number of channels to keep.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pre_s: f64,
    #[arg(long, default_value_t = 1.0)]
    post_s: f64,
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Pipeline containing a trainer whose model reaches a file sink.
    #[arg(long)]
    pipeline: PathBuf,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    fs: Option<f64>,
    /// Model output (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SimArgs {
    /// Simulator config (JSON).
    #[arg(long)]
    input: PathBuf,
    /// Decision trace: JSON array of `[t, class_id | null]`.
    #[arg(long, conflicts_with = "accuracy")]
    trace: Option<PathBuf>,
    /// Simulated decoder accuracy in [0, 1].
    #[arg(long)]
    accuracy: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-obstacle log (JSON lines).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Store root; overrides `NOETIC_DATA_DIR`.
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KindArg {
    Lowpass,
    Highpass,
    Bandpass,
    Bandstop,
}

impl From<KindArg> for FilterKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Lowpass => FilterKind::Lowpass,
            KindArg::Highpass => FilterKind::Highpass,
            KindArg::Bandpass => FilterKind::Bandpass,
            KindArg::Bandstop => FilterKind::Bandstop,
        }
    }
}

#[derive(Args, Debug)]
struct FilterArgs {
    #[arg(long, value_enum)]
    kind: KindArg,
    #[arg(long)]
    order: usize,
    /// One cutoff, or two for band filters, in Hz.
    #[arg(long, value_delimiter = ',', num_args = 1..=2, required = true)]
    cutoffs: Vec<f64>,
    #[arg(long)]
    fs: f64,
    /// Frequencies at which to print the magnitude response; 0 to fs/2 in
    /// 32 steps when absent.
    #[arg(long, value_delimiter = ',')]
    freqs: Vec<f64>,
    /// Writes the design (JSON) here as well.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `argv` (program name first), runs the command and returns the exit
/// code.
pub fn dispatch<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    0
                }
                _ => {
                    let _ = write!(err, "{text}");
                    if !text.contains("Usage:") {
                        let _ = writeln!(err, "\n{}", <Cli as clap::CommandFactory>::command().render_usage());
                    }
                    1
                }
            };
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            e.code()
        }
    }
}

fn execute(cli: Cli, out: &mut dyn Write) -> CliResult {
    match cli.command {
        Command::Nodes(a) => nodes(a, out),
        Command::Synth(a) => synth(a, out),
        Command::Run(a) => run(a, out),
        Command::Select(a) => select(a, out),
        Command::Train(a) => train(a, out),
        Command::Sim(a) => sim(a, out),
        Command::Serve(a) => serve_cmd(a, out),
        Command::FilterDesign(a) => filter_design(a, out),
    }
}

/// Write failures on stdout; a closed pipe is not an error.
fn out_err(e: std::io::Error) -> CliResult {
    match e.kind() {
        std::io::ErrorKind::BrokenPipe => Ok(()),
        _ => Err(CliError::Internal(e.to_string())),
    }
}

fn print_json(out: &mut dyn Write, v: &impl Serialize) -> CliResult {
    let text = serde_json::to_string_pretty(v).map_err(|e| CliError::Internal(e.to_string()))?;
    writeln!(out, "{text}").or_else(out_err)
}

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| user(format!("{}: {e}", path.display())))
}

fn read_json<T: for<'de> serde::Deserialize<'de>>(path: &Path) -> CliResult<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| user(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult {
    write_atomic(path, bytes).map_err(at(path))
}

fn load_input(path: &Path, fs: Option<f64>) -> CliResult<Recording> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        let fs = fs.ok_or_else(|| user(format!("{}: CSV input needs --fs", path.display())))?;
        let block = read_csv_file(path, fs).map_err(at(path))?;
        Ok(Recording { block, markers: Vec::new(), subject_tag: String::new() })
    } else {
        read_recording(path).map_err(at(path))
    }
}

fn load_pipeline(path: &Path) -> CliResult<FlowGraph> {
    load_graph(&read_text(path)?, &path.display().to_string()).map_err(user)
}

fn nodes(a: NodesArgs, out: &mut dyn Write) -> CliResult {
    if a.schema {
        return write!(out, "{}", noetic_flow::schema::schema_text()).or_else(out_err);
    }
    let cat = catalog();
    if a.json {
        return print_json(out, &cat);
    }
    let width = cat.iter().map(|n| n.kind.len()).max().unwrap_or(0);
    for n in &cat {
        if let Err(e) = writeln!(out, "{:width$}  {}", n.kind, n.doc) {
            return out_err(e);
        }
    }
    Ok(())
}

fn synth(a: SynthArgs, out: &mut dyn Write) -> CliResult {
    let mut spec: SynthSpec = read_json(&a.input)?;
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let (block, markers) = synth_recording(&spec).map_err(at(&a.input))?;
    let tag = a.tag.unwrap_or_else(|| format!("synth-{}", spec.seed));
    write_recording(&block, &markers, &tag, &a.out).map_err(at(&a.out))?;
    print_json(
        out,
        &json!({
            "path": a.out.display().to_string(),
            "channels": block.n_channels(),
            "samples": block.len(),
            "fs": block.fs,
            "markers": markers.len(),
        }),
    )
}

fn extension(media: &str) -> &'static str {
    match media {
        "application/x-neeg" => "neeg",
        "text/csv" => "csv",
        "application/json" => "json",
        "application/x-ndjson" => "jsonl",
        _ => "bin",
    }
}

fn jsonl<T: Serialize>(items: &[T]) -> Vec<u8> {
    items.iter().flat_map(|i| serde_json::to_string(i).expect("serializes").into_bytes().into_iter().chain([b'\n'])).collect()
}

fn run(a: RunArgs, out: &mut dyn Write) -> CliResult {
    let graph = load_pipeline(&a.pipeline)?;
    let input = a.input.as_deref().map(|p| load_input(p, a.fs)).transpose()?;
    let result = run_offline(&graph, input.as_ref()).map_err(user)?;
    let mut written = BTreeMap::new();
    for (node, sink) in &result.sinks {
        let (name, bytes) = match sink {
            SinkOutput::File { media, bytes, .. } => (format!("{node}.{}", extension(media)), bytes.clone()),
            SinkOutput::Plot { frames } => (format!("{node}.plot.jsonl"), jsonl(frames)),
            SinkOutput::Decisions { events } => (format!("{node}.events.jsonl"), jsonl(events)),
        };
        if let Some(dir) = &a.out {
            let path = dir.join(&name);
            write_file(&path, &bytes)?;
            written.insert(node.clone(), json!({ "path": path.display().to_string(), "size": bytes.len() }));
        } else if let SinkOutput::File { path: Some(p), size, .. } = sink {
            written.insert(node.clone(), json!({ "path": p, "size": size }));
        }
    }
    print_json(
        out,
        &json!({
            "sinks": written,
            "reports": result.reports,
            "decisions": result.decisions().len(),
        }),
    )
}

fn select(a: SelectArgs, out: &mut dyn Write) -> CliResult {
    let rec = read_recording(&a.input).map_err(at(&a.input))?;
    let labeled: Vec<_> = rec.markers.iter().filter(|m| m.class_id.is_some()).cloned().collect();
    if labeled.is_empty() {
        return Err(user(format!("{}: no markers carry a class id", a.input.display())));
    }
    let (epochs, _) = epoch_by_markers(&rec.block, &labeled, a.pre_s, a.post_s, 0.0).map_err(user)?;
    let labels = epochs.labels().map_err(user)?;
    let method = SelectMethod::from(a.method);
    let scores = score_channels(&epochs, &labels, method).map_err(user)?;
    let chosen = select_top_n(&scores, a.n).map_err(user)?;
    let report = SelectionReport {
        method,
        chosen_names: chosen.iter().map(|&i| rec.block.channels[i].name.clone()).collect(),
        scores: scores.scores,
        chosen,
    };
    match &a.out {
        Some(p) => {
            let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Internal(e.to_string()))?;
            write_file(p, text.as_bytes())?;
            print_json(out, &json!({ "path": p.display().to_string(), "chosen": report.chosen }))
        }
        None => print_json(out, &report),
    }
}

fn train(a: TrainArgs, out: &mut dyn Write) -> CliResult {
    let graph = load_pipeline(&a.pipeline)?;
    if !graph.doc.nodes.iter().any(|n| n.kind.starts_with("train.")) {
        return Err(user(format!("{}: pipeline has no train.* node", a.pipeline.display())));
    }
    let input = a.input.as_deref().map(|p| load_input(p, a.fs)).transpose()?;
    let result = run_offline(&graph, input.as_ref()).map_err(user)?;
    let model = result
        .sinks
        .values()
        .find_map(|s| match s {
            SinkOutput::File { media, bytes, .. } if media == "application/json" => {
                ClassifierModel::from_json(std::str::from_utf8(bytes).ok()?).ok()
            }
            _ => None,
        })
        .ok_or_else(|| user("no trained model reached a sink.file node"))?;
    write_file(&a.out, model.to_json().as_bytes())?;
    print_json(out, &json!({ "path": a.out.display().to_string(), "kind": model.kind, "reports": result.reports }))
}

/// Decisions from a decoder that is right with probability `accuracy`,
/// made halfway through each decision window.
fn simulated_trace(config: &SimConfig, accuracy: f64, seed: u64) -> Vec<(f64, Option<u32>)> {
    let mut rng = noetic_core::rng::seeded(seed);
    let s = new_session(config.clone()).expect("validated");
    config
        .classes()
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            let t = s.announce_time(k) + config.decision_window_s / 2.0;
            let d = if rng.random::<f64>() < accuracy { c } else { 1 - c };
            (t, Some(d))
        })
        .collect()
}

fn sim(a: SimArgs, out: &mut dyn Write) -> CliResult {
    let config: SimConfig = read_json(&a.input)?;
    config.validate().map_err(at(&a.input))?;
    let trace: Vec<(f64, Option<u32>)> = match (&a.trace, a.accuracy) {
        (Some(p), _) => read_json(p)?,
        (None, Some(acc)) if (0.0..=1.0).contains(&acc) => simulated_trace(&config, acc, a.seed),
        (None, Some(acc)) => return Err(user(format!("--accuracy {acc} must be in [0, 1]"))),
        (None, None) => Vec::new(),
    };
    let mut session = SimSession::replay(config, &trace).map_err(user)?;
    session.finish().map_err(user)?;
    if let Some(p) = &a.out {
        write_file(p, session.log_jsonl().as_bytes())?;
    }
    print_json(out, &session.score())
}

fn serve_cmd(a: ServeArgs, out: &mut dyn Write) -> CliResult {
    let store = match &a.data_dir {
        Some(d) => Store::open(d),
        None => Store::from_env(),
    }
    .map_err(user)?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Internal(e.to_string()))?;
    rt.block_on(async {
        let addr = format!("{}:{}", a.host, a.port);
        let listener = tokio::net::TcpListener::bind(&addr).await.map_err(|e| user(format!("bind {addr}: {e}")))?;
        let local = listener.local_addr().map_err(|e| CliError::Internal(e.to_string()))?;
        let _ = writeln!(out, "listening on http://{local} (store {})", store.root().display());
        let _ = out.flush();
        serve(AppState::new(store), listener).await.map_err(|e| CliError::Internal(e.to_string()))
    })
}

fn default_freqs(fs: f64) -> Vec<f64> {
    (0..=32).map(|i| fs / 2.0 * i as f64 / 32.0).collect()
}

fn filter_design(a: FilterArgs, out: &mut dyn Write) -> CliResult {
    let kind = FilterKind::from(a.kind);
    let spec = design_butterworth(kind, &DesignSpec::Order { order: a.order, cutoffs: a.cutoffs }, a.fs).map_err(user)?;
    if let Some(p) = &a.out {
        let text = serde_json::to_string_pretty(&spec).map_err(|e| CliError::Internal(e.to_string()))?;
        write_file(p, text.as_bytes())?;
    }
    let freqs = if a.freqs.is_empty() { default_freqs(a.fs) } else { a.freqs };
    let response: Vec<Json> = freqs
        .iter()
        .map(|&f| json!({ "f_hz": f, "magnitude": spec.magnitude(f), "magnitude_db": spec.magnitude_db(f) }))
        .collect();
    print_json(
        out,
        &json!({
            "kind": spec.kind,
            "order": spec.order,
            "cutoffs": spec.cutoffs,
            "fs": spec.fs,
            "sections": spec.sections,
            "stable": spec.is_stable(),
            "response": response,
        }),
    )
}
