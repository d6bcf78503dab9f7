//! The `driftforest` command line: `drift-gen`, `run`, `bench` and `report`.
//!
//! Exit codes: 0 success, 1 usage, 2 data or configuration, 3 internal
//! invariant.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::adf::AdfModel;
use crate::arf::AdaptiveRandomForest;
use crate::config::{
    compose_drift, read_toml, DriftConfig, DriftManifest, DriftMode, LearnerKind, ModelConfig, RunManifest,
    StreamConfig,
};
use crate::error::{Error, Result};
use crate::eval::{
    average_ranks, bonferroni_dunn, run_prequential, Learner, PrequentialOptions, PrequentialOutcome,
};
use crate::hoeffding::{HoeffdingTree, TreeConfig};
use crate::stream::{double_dataset, read_csv, Instance, Shape, StreamMeta};

/// Seed fallback read when no `--seed` flag is given.
pub const SEED_ENV: &str = "DRIFTFOREST_SEED";

pub const SERIES_HEADER: &str = "idx,win_acc,cum_acc,pred,true,update_ms,predict_ms";
pub const SUMMARY_HEADER: &str = "algo,stream,acc,kappa,total_update_ms,total_predict_ms";

#[derive(Debug, Parser)]
#[command(
    name = "driftforest",
    version,
    about = "Drift-aware online forests for data streams"
)]
pub struct Cli {
    /// Seed override for every learner and generator; DRIFTFOREST_SEED
    /// is consulted only when no other seed is configured.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a drifting stream CSV from one or two source CSVs.
    DriftGen(DriftGenArgs),
    /// Evaluate one learner prequentially on one stream.
    Run(RunArgs),
    /// Run several manifests into a shared output directory.
    Bench(BenchArgs),
    /// Rank algorithms over summary CSVs and test them against a control.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GenMode {
    Sudden,
    Sigmoid,
}

#[derive(Debug, Args)]
pub struct DriftGenArgs {
    /// Source CSV (`f_1,...,f_L,label`); repeat once for a second concept.
    #[arg(long = "stream", required = true)]
    pub streams: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Class count; inferred from the largest label when absent.
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long, value_enum, default_value_t = GenMode::Sigmoid)]
    pub mode: GenMode,
    /// Change point of a sudden drift.
    #[arg(long)]
    pub at: Option<usize>,
    /// Centre of a sigmoid drift.
    #[arg(long)]
    pub center: Option<f64>,
    /// Sigmoid width as a fraction of the output length.
    #[arg(long, default_value_t = 0.1)]
    pub width_frac: f64,
    /// Use two shuffled copies of a single source as the two concepts.
    #[arg(long)]
    pub double: bool,
    /// Rotate the labels of the second copy by one class.
    #[arg(long)]
    pub shift: bool,
    /// Skip the first line of every source.
    #[arg(long)]
    pub header: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Run manifest (TOML); replaces the individual flags below.
    #[arg(long, conflicts_with_all = ["stream", "model", "learner", "out"])]
    pub manifest: Option<PathBuf>,
    /// Stream config (TOML).
    #[arg(long, required_unless_present = "manifest")]
    pub stream: Option<PathBuf>,
    /// Model config (TOML).
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum, required_unless_present = "manifest")]
    pub learner: Option<LearnerKind>,
    /// Output directory.
    #[arg(long, required_unless_present = "manifest")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub emit_every: Option<usize>,
    /// Algorithm label in the summary.
    #[arg(long)]
    pub name: Option<String>,
    /// Report zero times so outputs are reproducible byte for byte.
    #[arg(long)]
    pub no_timing: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Run manifests; their `out` entries are replaced.
    #[arg(required = true)]
    pub manifests: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub no_timing: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    Kappa,
    Acc,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Summary CSVs; rows are pooled across files.
    #[arg(required = true)]
    pub summaries: Vec<PathBuf>,
    /// Control algorithm; the first one seen by default.
    #[arg(long)]
    pub control: Option<String>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = Metric::Kappa)]
    pub metric: Metric,
    /// Also write the rank table as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Invariant(_) => 3,
        _ => 2,
    }
}

/// Runs a parsed command and returns what it prints on success.
pub fn execute(cli: &Cli) -> Result<String> {
    let seed = cli.seed;
    match &cli.command {
        Command::DriftGen(args) => {
            let seed = match seed {
                Some(s) => s,
                None => env_seed()?.unwrap_or(0),
            };
            let m = drift_gen(args, seed)?;
            Ok(format!(
                "wrote {} rows to {} (t0 = {}, w = {})\n",
                m.rows,
                args.out.display(),
                fmt_opt(m.t0),
                fmt_opt(m.w)
            ))
        }
        Command::Run(args) => {
            let manifest = run_manifest(args)?;
            let row = execute_run(&manifest, seed)?;
            Ok(format!("{}\n{}\n", SUMMARY_HEADER, row.csv_line()))
        }
        Command::Bench(args) => {
            let rows = bench(args, seed)?;
            let mut text = format!("{SUMMARY_HEADER}\n");
            for r in &rows {
                text.push_str(&r.csv_line());
                text.push('\n');
            }
            Ok(text)
        }
        Command::Report(args) => report(args),
    }
}

fn fmt_opt(v: Option<u64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| v.to_string())
}

/// Seed from [`SEED_ENV`], if set.
pub fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::config(format!("{SEED_ENV}={s:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn create_file(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    }
    let f = fs::File::create(path).map_err(|e| Error::file(path, e))?;
    Ok(BufWriter::new(f))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create_file(path)?;
    w.write_all(text.as_bytes()).map_err(|e| Error::file(path, e))?;
    w.flush().map_err(|e| Error::file(path, e))
}

/// Sidecar written next to a generated stream.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenManifest {
    pub sources: Vec<PathBuf>,
    pub mode: DriftMode,
    pub seed: u64,
    pub t0: Option<u64>,
    pub w: Option<u64>,
    pub rows: u64,
    pub class_count: usize,
    pub features: usize,
    pub double: bool,
    pub shift: bool,
}

/// Path of the sidecar for a generated stream: `x.csv` -> `x.manifest.json`.
pub fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("manifest.json")
}

/// Feature count of a headerless-or-not CSV, from its first data row.
fn csv_arity(path: &Path, header: bool) -> Result<usize> {
    let f = fs::File::open(path).map_err(|e| Error::file(path, e))?;
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::file(path, e))?;
        if (header && i == 0) || line.trim().is_empty() {
            continue;
        }
        let fields = line.split(',').count();
        if fields < 2 {
            return Err(Error::Parse {
                row: i + 1,
                field: 1,
                message: "a row needs at least one feature and a label".into(),
            });
        }
        return Ok(fields - 1);
    }
    Err(Error::input(format!("{}: no data rows", path.display())))
}

fn load_source(path: &Path, features: usize, header: bool) -> Result<Vec<Instance>> {
    let f = fs::File::open(path).map_err(|e| Error::file(path, e))?;
    let meta = StreamMeta::new(usize::MAX, Shape::Vec(features));
    read_csv(BufReader::new(f), meta, header).map_err(|e| match e {
        Error::Parse { row, field, message } => Error::Parse {
            row,
            field,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

pub fn drift_gen(args: &DriftGenArgs, seed: u64) -> Result<GenManifest> {
    let streams = &args.streams;
    if streams.is_empty() || streams.len() > 2 {
        return Err(Error::config("drift-gen takes one or two --stream sources"));
    }
    match args.mode {
        GenMode::Sudden if args.center.is_some() => {
            return Err(Error::config("--center applies to sigmoid drift; use --at"))
        }
        GenMode::Sigmoid if args.at.is_some() => {
            return Err(Error::config("--at applies to sudden drift; use --center"))
        }
        _ => {}
    }
    let features = csv_arity(&streams[0], args.header)?;
    let a = load_source(&streams[0], features, args.header)?;
    let b = match streams.get(1) {
        Some(p) => Some(load_source(p, features, args.header)?),
        None => None,
    };
    let max_label = a.iter().chain(b.iter().flatten()).map(|x| x.label).max();
    let class_count = match (args.classes, max_label) {
        (_, None) => return Err(Error::input("sources hold no rows")),
        (Some(c), Some(m)) if m >= c => {
            return Err(Error::input(format!("label {m} not below --classes {c}")))
        }
        (Some(c), _) => c,
        (None, Some(m)) => m + 1,
    };
    let meta = StreamMeta::new(class_count, Shape::Vec(features));
    let retag = |v: Vec<Instance>| -> Vec<Instance> {
        v.into_iter()
            .map(|x| Instance {
                shape: meta.shape,
                ..x
            })
            .collect()
    };
    let (a, b) = match b {
        Some(b) => {
            if args.double || args.shift {
                return Err(Error::config("--double and --shift apply to a single source"));
            }
            (retag(a), retag(b))
        }
        None => {
            if !args.double {
                return Err(Error::config("a single source needs --double"));
            }
            if args.shift && class_count < 2 {
                return Err(Error::config("--shift needs at least two classes"));
            }
            let mut both = double_dataset(&retag(a), class_count, seed, args.shift)?;
            let b = both.split_off(both.len() / 2);
            (both, b)
        }
    };
    let drift = DriftConfig {
        mode: match args.mode {
            GenMode::Sudden => DriftMode::Sudden,
            GenMode::Sigmoid => DriftMode::Sigmoid,
        },
        center: match args.mode {
            GenMode::Sudden => args.at.map(|t| t as f64),
            GenMode::Sigmoid => args.center,
        },
        width_frac: args.width_frac,
        class_shift: None,
        source_b: None,
    };
    if !(drift.width_frac > 0.0 && drift.width_frac.is_finite()) {
        return Err(Error::config("--width-frac must be positive"));
    }
    let (stream, m): (_, DriftManifest) = compose_drift(meta, a, b, &drift, seed, None)?;

    let mut w = create_file(&args.out)?;
    let mut rows = 0u64;
    let mut line = String::new();
    for x in stream {
        line.clear();
        for v in &x.features {
            write!(line, "{v},").expect("writing to a String");
        }
        writeln!(line, "{}", x.label).expect("writing to a String");
        w.write_all(line.as_bytes())
            .map_err(|e| Error::file(&args.out, e))?;
        rows += 1;
    }
    w.flush().map_err(|e| Error::file(&args.out, e))?;

    let manifest = GenManifest {
        sources: streams.clone(),
        mode: m.mode,
        seed,
        t0: m.t0,
        w: m.w,
        rows,
        class_count,
        features,
        double: args.double,
        shift: args.shift,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Invariant(e.to_string()))?;
    write_text(&sidecar_path(&args.out), &(json + "\n"))?;
    Ok(manifest)
}

fn run_manifest(args: &RunArgs) -> Result<RunManifest> {
    let mut m = match &args.manifest {
        Some(path) => RunManifest::load(path)?,
        None => RunManifest {
            stream: args.stream.clone().expect("required by clap"),
            model: args.model.clone(),
            learner: args.learner.expect("required by clap"),
            out: args.out.clone().expect("required by clap"),
            emit_every: 100,
            seed: None,
            name: None,
            timing: true,
        },
    };
    if let Some(e) = args.emit_every {
        m.emit_every = e;
    }
    if args.name.is_some() {
        m.name = args.name.clone();
    }
    if args.no_timing {
        m.timing = false;
    }
    Ok(m)
}

/// One `summary.csv` line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub algo: String,
    pub stream: String,
    pub acc: f64,
    pub kappa: f64,
    pub total_update_ms: f64,
    pub total_predict_ms: f64,
}

impl SummaryRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{:.6},{:.6},{:.3},{:.3}",
            self.algo, self.stream, self.acc, self.kappa, self.total_update_ms, self.total_predict_ms
        )
    }
}

enum AnyLearner {
    Deep(AdfModel),
    Forest(AdaptiveRandomForest),
    Tree(HoeffdingTree),
}

impl AnyLearner {
    fn as_learner(&mut self) -> &mut dyn Learner {
        match self {
            AnyLearner::Deep(m) => m,
            AnyLearner::Forest(f) => f,
            AnyLearner::Tree(t) => t,
        }
    }
}

/// Builds the learner and a JSON echo of its resolved settings.
fn build_learner(
    kind: LearnerKind,
    model: &ModelConfig,
    meta: StreamMeta,
    seed: Option<u64>,
) -> Result<(AnyLearner, serde_json::Value)> {
    let seed = match seed.or(model.seed) {
        Some(s) => Some(s),
        None => env_seed()?,
    };
    let features = meta.shape.len();
    Ok(match kind {
        LearnerKind::Adf | LearnerKind::Carf => {
            let mut cfg = model.adf_config(meta, kind == LearnerKind::Carf)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let echo = json!({
                "depth": cfg.depth,
                "input_forests": cfg.input_forests,
                "cascade_forests": cfg.cascade_forests,
                "trees": cfg.forest.trees,
                "append_original_inner": cfg.append_original_inner,
                "carf": cfg.carf,
                "padded_shape": cfg.padded_shape().to_string(),
                "cascade_input_lengths": (0..cfg.depth).map(|i| cfg.cascade_input_len(i)).collect::<Vec<_>>(),
                "seed": cfg.seed,
                "drift_detection": cfg.forest.drift_detection,
                "grace_period": cfg.forest.tree.grace_period,
            });
            (AnyLearner::Deep(AdfModel::new(cfg)?), echo)
        }
        LearnerKind::Arf => {
            let cfg = model.forest_config(10);
            let seed = seed.unwrap_or(1);
            let echo = json!({
                "trees": cfg.trees,
                "lambda": cfg.lambda,
                "warning_delta": cfg.warning_delta,
                "drift_delta": cfg.drift_delta,
                "drift_detection": cfg.drift_detection,
                "seed": seed,
            });
            (
                AnyLearner::Forest(AdaptiveRandomForest::new(cfg, features, meta.class_count, seed)),
                echo,
            )
        }
        LearnerKind::Hoeffding => {
            let cfg = model.tree_config(TreeConfig::default());
            let seed = seed.unwrap_or(1);
            let echo = json!({
                "grace_period": cfg.grace_period,
                "split_confidence": cfg.split_confidence,
                "tie_threshold": cfg.tie_threshold,
                "split_points": cfg.split_points,
                "seed": seed,
            });
            (
                AnyLearner::Tree(HoeffdingTree::new(cfg, features, meta.class_count, seed)),
                echo,
            )
        }
    })
}

fn series_csv(outcome: &PrequentialOutcome) -> String {
    let mut s = format!("{SERIES_HEADER}\n");
    for r in &outcome.records {
        writeln!(
            s,
            "{},{:.6},{:.6},{},{},{:.3},{:.3}",
            r.index,
            r.windowed_accuracy,
            r.cumulative_accuracy,
            r.predicted,
            r.truth,
            r.update_ms,
            r.predict_ms
        )
        .expect("writing to a String");
    }
    s
}

fn check_label(what: &str, s: &str) -> Result<()> {
    if s.is_empty() || s.contains([',', '\n', '\r']) {
        return Err(Error::config(format!(
            "{what} {s:?} must be nonempty and free of commas"
        )));
    }
    Ok(())
}

/// Executes one manifest, writing `series.csv`, `summary.csv` and
/// `report.json` into its output directory. The learner seed is the first
/// of `seed`, the manifest seed, the model seed and [`SEED_ENV`].
pub fn execute_run(manifest: &RunManifest, seed: Option<u64>) -> Result<SummaryRow> {
    manifest.validate()?;
    let algo = manifest.algorithm();
    let stream_name = manifest.stream_name();
    check_label("algorithm name", &algo)?;
    check_label("stream name", &stream_name)?;

    let stream_cfg: StreamConfig = read_toml(&manifest.stream)?;
    let base = manifest.stream.parent().unwrap_or(Path::new("."));
    let (stream, drift) = stream_cfg.build(base)?;
    let model: ModelConfig = match &manifest.model {
        Some(p) => read_toml(p)?,
        None => ModelConfig::default(),
    };
    let seed = seed.or(manifest.seed);
    let (mut learner, resolved) = build_learner(manifest.learner, &model, stream.meta(), seed)?;
    log::info!("{algo} on {stream_name}: starting");

    let options = PrequentialOptions {
        emit_every: manifest.emit_every,
        timing: manifest.timing,
    };
    let outcome = run_prequential(learner.as_learner(), stream, &options)?;
    if outcome.instances() == 0 {
        return Err(Error::input(format!("stream {stream_name} is empty")));
    }
    let row = SummaryRow {
        algo: algo.clone(),
        stream: stream_name.clone(),
        acc: outcome.accuracy(),
        kappa: outcome.kappa(),
        total_update_ms: outcome.update_ms,
        total_predict_ms: outcome.predict_ms,
    };

    let (depth_report, replacements) = match &learner {
        AnyLearner::Deep(m) => {
            let r = m.depth_report();
            (
                json!({"input": r.input, "cascade": r.cascade, "entries": r.entries()}),
                m.replacements(),
            )
        }
        AnyLearner::Forest(f) => (serde_json::Value::Null, f.replacements()),
        AnyLearner::Tree(_) => (serde_json::Value::Null, 0),
    };
    let n = outcome.instances() as f64;
    let report = json!({
        "algorithm": algo,
        "learner": manifest.learner.name(),
        "stream": stream_name,
        "stream_config": stream_cfg,
        "model_config": model,
        "resolved": resolved,
        "drift": drift,
        "emit_every": manifest.emit_every,
        "timing": manifest.timing,
        "instances": outcome.instances(),
        "accuracy": row.acc,
        "kappa": row.kappa,
        "total_update_ms": row.total_update_ms,
        "total_predict_ms": row.total_predict_ms,
        "mean_update_ms": row.total_update_ms / n,
        "mean_predict_ms": row.total_predict_ms / n,
        "replacements": replacements,
        "depth_report": depth_report,
    });

    let out = &manifest.out;
    fs::create_dir_all(out).map_err(|e| Error::file(out, e))?;
    write_text(&out.join("series.csv"), &series_csv(&outcome))?;
    write_text(
        &out.join("summary.csv"),
        &format!("{SUMMARY_HEADER}\n{}\n", row.csv_line()),
    )?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Invariant(e.to_string()))?;
    write_text(&out.join("report.json"), &(json + "\n"))?;
    log::info!("{algo} on {stream_name}: kappa {:.4}", row.kappa);
    Ok(row)
}

/// Runs every manifest on a pool of `jobs` workers. Job `i` writes into
/// `<out>/<i>_<algo>_<stream>`; the pooled summary goes to
/// `<out>/summary.csv` in manifest order.
pub fn bench(args: &BenchArgs, seed: Option<u64>) -> Result<Vec<SummaryRow>> {
    if args.jobs == 0 {
        return Err(Error::config("--jobs must be positive"));
    }
    let mut manifests = Vec::with_capacity(args.manifests.len());
    for (i, path) in args.manifests.iter().enumerate() {
        let mut m = RunManifest::load(path)?;
        m.out = args
            .out
            .join(format!("{i:02}_{}_{}", m.algorithm(), m.stream_name()));
        if args.no_timing {
            m.timing = false;
        }
        m.validate()?;
        manifests.push(m);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .map_err(|e| Error::config(format!("cannot start {} workers: {e}", args.jobs)))?;
    let results: Vec<Result<SummaryRow>> =
        pool.install(|| manifests.par_iter().map(|m| execute_run(m, seed)).collect());
    let rows = results.into_iter().collect::<Result<Vec<_>>>()?;

    let mut text = format!("{SUMMARY_HEADER}\n");
    for r in &rows {
        text.push_str(&r.csv_line());
        text.push('\n');
    }
    write_text(&args.out.join("summary.csv"), &text)?;
    Ok(rows)
}

/// Reads summary rows; the header must match [`SUMMARY_HEADER`].
pub fn read_summaries(paths: &[PathBuf]) -> Result<Vec<SummaryRow>> {
    let mut rows = Vec::new();
    for path in paths {
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == SUMMARY_HEADER => {}
            _ => {
                return Err(Error::Parse {
                    row: 1,
                    field: 1,
                    message: format!("{}: expected header {SUMMARY_HEADER:?}", path.display()),
                })
            }
        }
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 6 {
                return Err(Error::Parse {
                    row: i + 1,
                    field: fields.len().min(6),
                    message: format!("{}: expected 6 fields", path.display()),
                });
            }
            let num = |k: usize| -> Result<f64> {
                fields[k].parse().map_err(|_| Error::Parse {
                    row: i + 1,
                    field: k + 1,
                    message: format!("{}: non-numeric value {:?}", path.display(), fields[k]),
                })
            };
            rows.push(SummaryRow {
                algo: fields[0].to_string(),
                stream: fields[1].to_string(),
                acc: num(2)?,
                kappa: num(3)?,
                total_update_ms: num(4)?,
                total_predict_ms: num(5)?,
            });
        }
    }
    Ok(rows)
}

fn first_seen<'a>(items: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in items {
        if !out.iter().any(|o| o == s) {
            out.push(s.to_string());
        }
    }
    out
}

pub fn report(args: &ReportArgs) -> Result<String> {
    let rows = read_summaries(&args.summaries)?;
    let algorithms = first_seen(rows.iter().map(|r| r.algo.as_str()));
    let streams = first_seen(rows.iter().map(|r| r.stream.as_str()));
    if algorithms.len() < 2 {
        return Err(Error::input(format!(
            "a report needs at least 2 algorithms, found {}",
            algorithms.len()
        )));
    }
    let mut scores = vec![vec![None; streams.len()]; algorithms.len()];
    for r in &rows {
        let a = algorithms.iter().position(|x| *x == r.algo).expect("collected");
        let s = streams.iter().position(|x| *x == r.stream).expect("collected");
        if scores[a][s].is_some() {
            return Err(Error::input(format!(
                "duplicate row for ({}, {})",
                r.algo, r.stream
            )));
        }
        scores[a][s] = Some(match args.metric {
            Metric::Kappa => r.kappa,
            Metric::Acc => r.acc,
        });
    }
    let mut missing = Vec::new();
    for (a, row) in scores.iter().enumerate() {
        for (s, cell) in row.iter().enumerate() {
            if cell.is_none() {
                missing.push(format!("({}, {})", algorithms[a], streams[s]));
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::input(format!(
            "incomplete score matrix, missing {}",
            missing.join(", ")
        )));
    }
    let summary = average_ranks(&algorithms, &scores, true)?;
    let control = match &args.control {
        Some(name) => algorithms
            .iter()
            .position(|a| a == name)
            .ok_or_else(|| Error::input(format!("control {name:?} is not among the algorithms")))?,
        None => 0,
    };
    let metric = match args.metric {
        Metric::Kappa => "kappa",
        Metric::Acc => "acc",
    };

    let mut text = String::new();
    writeln!(
        text,
        "{} algorithms over {} streams, ranked by {metric} (1 = best)",
        algorithms.len(),
        streams.len()
    )
    .expect("writing to a String");
    let width = algorithms.iter().map(String::len).max().unwrap_or(0).max(9);
    writeln!(text, "{:<width$}  avg_rank", "algorithm").expect("writing to a String");
    for (name, rank) in algorithms.iter().zip(&summary.average_ranks) {
        writeln!(text, "{name:<width$}  {rank:.4}").expect("writing to a String");
    }

    let mut csv = String::from("algo,avg_rank,rank_diff,z,significant\n");
    if streams.len() < 2 {
        writeln!(
            text,
            "Bonferroni-Dunn test skipped: it needs at least 2 streams, found {}",
            streams.len()
        )
        .expect("writing to a String");
        for (name, rank) in algorithms.iter().zip(&summary.average_ranks) {
            writeln!(csv, "{name},{rank:.6},,,").expect("writing to a String");
        }
    } else {
        let bd = bonferroni_dunn(&summary, args.alpha, control)?;
        writeln!(
            text,
            "control {}: alpha = {}, critical value = {:.6}, CD = {:.6}",
            bd.control, bd.alpha, bd.critical_value, bd.critical_difference
        )
        .expect("writing to a String");
        writeln!(
            csv,
            "{},{:.6},0.000000,0.000000,",
            bd.control, summary.average_ranks[control]
        )
        .expect("writing to a String");
        for v in &bd.comparisons {
            writeln!(
                text,
                "  {:<width$}  diff {:+.4}  z {:+.4}  {}",
                v.algorithm,
                v.rank_difference,
                v.z,
                if v.significant {
                    "significant"
                } else {
                    "not significant"
                }
            )
            .expect("writing to a String");
            let rank = summary.average_ranks[control] + v.rank_difference;
            writeln!(
                csv,
                "{},{rank:.6},{:.6},{:.6},{}",
                v.algorithm, v.rank_difference, v.z, v.significant
            )
            .expect("writing to a String");
        }
    }
    if let Some(out) = &args.out {
        write_text(out, &csv)?;
    }
    Ok(text)
}
