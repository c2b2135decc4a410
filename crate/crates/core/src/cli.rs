//! The `nrc` command line: prepare, evaluate, compare, analyze and table
//! regeneration. Flags override values from `--config` (a TOML file with the
//! same names, dashes replaced by underscores).

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::analysis::{emit_plot_data, frequency_contribution_from, question_diff_distribution, PlotData};
use crate::backend::{Backend, FixtureBackend, Overflow};
use crate::corpus::{
    descriptor, load_dataset, read_instances, validate_stats, write_instances, DatasetName, Instance, LoadWarnings,
    StatsReport,
};
use crate::error::{Error, Result};
use crate::eval::{
    self, ablate_stopwords, read_report, significance, sweep_delta_w, tables, write_report_csv, write_report_json,
    DeltaWSweep, EvalOptions, EvalReport, StopwordAblation, DEFAULT_DELTA_W_GRID,
};
use crate::metrics::{MetricKind, RtdReading, Scorer, Target, WeightPolicy};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "nrc", version, about = "Zero-shot commonsense scoring and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a published dataset into the unified JSONL format.
    Prepare {
        #[arg(long)]
        dataset: String,
        /// Data file or the directory containing it.
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a dataset and write the report.
    Evaluate(RunArgs),
    /// Paired permutation test between two reports.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        alpha: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Produce plot data for rank, difference or frequency analyses.
    Analyze {
        #[arg(long, value_enum)]
        kind: AnalysisKind,
        /// Stored report (for `ranks`).
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        bin_width: f64,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Compare accuracy with and without stop-word removal.
    AblateStopwords(RunArgs),
    /// Evaluate across concept weights ΔW.
    SweepDeltaW {
        /// Comma-separated ΔW values.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Regenerate accuracy tables from stored JSON results.
    MakeTables {
        /// Directories or files holding reports, ablations or sweeps.
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a model bundle against its golden probe.
    VerifyBundle {
        #[arg(long)]
        backend: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AnalysisKind {
    Ranks,
    DiffDist,
    FreqContrib,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML file with defaults for the flags below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model bundle directory.
    #[arg(long)]
    pub backend: Option<PathBuf>,
    /// Fixture file standing in for a model.
    #[arg(long, conflicts_with = "backend")]
    pub fixture: Option<PathBuf>,
    /// ppl-clm, ppl-mlm or nrc.
    #[arg(long)]
    pub metric: Option<MetricKind>,
    #[arg(long)]
    pub dataset: Option<String>,
    /// Prepared JSONL file, or raw data understood by `prepare`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// q, a or qa.
    #[arg(long)]
    pub target: Option<Target>,
    #[arg(long, conflicts_with = "no_stopwords")]
    pub remove_stopwords: bool,
    #[arg(long)]
    pub no_stopwords: bool,
    #[arg(long)]
    pub delta_w: Option<f64>,
    #[arg(long, value_enum)]
    pub rtd_reading: Option<ReadingArg>,
    /// Drop leading context tokens instead of rejecting long inputs.
    #[arg(long)]
    pub trim_context: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadingArg {
    Replaced,
    Original,
}

/// Contents of a `--config` file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub backend: Option<PathBuf>,
    pub fixture: Option<PathBuf>,
    pub metric: Option<String>,
    pub dataset: Option<String>,
    pub data: Option<PathBuf>,
    pub target: Option<String>,
    pub remove_stopwords: Option<bool>,
    pub delta_w: Option<f64>,
    pub rtd_reading: Option<ReadingArg>,
    pub trim_context: Option<bool>,
    pub seed: Option<u64>,
    pub batch: Option<usize>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelSource {
    Bundle(PathBuf),
    Fixture(PathBuf),
}

/// Fully resolved settings for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelSource,
    pub metric: MetricKind,
    pub dataset: Option<String>,
    pub data: PathBuf,
    pub policy: WeightPolicy,
    pub rtd_reading: RtdReading,
    pub overflow: Overflow,
    pub seed: u64,
    pub out: PathBuf,
    pub options: EvalOptions,
}

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn parse_opt<T: std::str::FromStr<Err = Error>>(v: Option<&String>) -> Result<Option<T>> {
    v.map(|s| s.parse()).transpose()
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let file = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                toml::from_str::<FileConfig>(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?
            }
            None => FileConfig::default(),
        };
        let model = match (&self.backend, &self.fixture) {
            (Some(b), _) => ModelSource::Bundle(b.clone()),
            (None, Some(f)) => ModelSource::Fixture(f.clone()),
            (None, None) => match (&file.backend, &file.fixture) {
                (Some(b), _) => ModelSource::Bundle(b.clone()),
                (None, Some(f)) => ModelSource::Fixture(f.clone()),
                (None, None) => return Err(usage("one of --backend or --fixture is required")),
            },
        };
        let metric = match self.metric {
            Some(m) => m,
            None => parse_opt(file.metric.as_ref())?.ok_or_else(|| usage("--metric is required"))?,
        };
        let target = match self.target {
            Some(t) => t,
            None => parse_opt(file.target.as_ref())?.unwrap_or(Target::Qa),
        };
        let stopword_removal = if self.remove_stopwords {
            true
        } else if self.no_stopwords {
            false
        } else {
            file.remove_stopwords.unwrap_or(false)
        };
        let policy =
            WeightPolicy { target, stopword_removal, concept_delta_w: self.delta_w.or(file.delta_w).unwrap_or(0.0) };
        policy.validate()?;
        let rtd_reading = match self.rtd_reading.or(file.rtd_reading) {
            Some(ReadingArg::Original) => RtdReading::Original,
            _ => RtdReading::Replaced,
        };
        let batch = self.batch.or(file.batch).unwrap_or(16);
        if batch == 0 {
            return Err(usage("--batch must be at least 1"));
        }
        let data = self.data.clone().or(file.data).ok_or_else(|| usage("--data is required"))?;
        Ok(RunConfig {
            model,
            metric,
            dataset: self.dataset.clone().or(file.dataset),
            data,
            policy,
            rtd_reading,
            overflow: if self.trim_context || file.trim_context.unwrap_or(false) {
                Overflow::TrimContext
            } else {
                Overflow::Reject
            },
            seed: self.seed.or(file.seed).unwrap_or(0),
            out: self.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from("out")),
            options: EvalOptions { workers: self.workers.or(file.workers).unwrap_or(1), batch },
        })
    }
}

impl RunConfig {
    pub fn scorer(&self) -> Scorer {
        let mut s = Scorer::new(self.metric, self.policy);
        s.rtd_reading = self.rtd_reading;
        s
    }

    pub fn open_backend(&self) -> Result<Box<dyn Backend>> {
        match &self.model {
            ModelSource::Fixture(p) => {
                Ok(Box::new(FixtureBackend::load(p, self.metric.backend_kind())?.with_overflow(self.overflow)))
            }
            ModelSource::Bundle(p) => open_bundle(p, self.overflow),
        }
    }

    /// Instances plus the split label, if known.
    pub fn load_instances(&self) -> Result<(Vec<Instance>, Option<String>)> {
        if self.data.extension().is_some_and(|e| e == "jsonl") && self.data.is_file() {
            let instances = read_instances(&self.data)?;
            let split = read_sidecar(&self.data).map(|m| m.split);
            return Ok((instances, split));
        }
        let name: DatasetName =
            self.dataset.as_deref().ok_or_else(|| usage("--dataset is required for raw data"))?.parse()?;
        let loaded = load_dataset(name, &self.data)?;
        Ok((loaded.instances, Some(loaded.split)))
    }

    fn create_out(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))
    }

    fn stem(&self, dataset: &str) -> String {
        let mut s = format!("{dataset}-{}-{}", self.metric.cli_name(), self.policy.target.to_string().to_lowercase());
        if self.policy.stopword_removal {
            s.push_str("-nostop");
        }
        if self.policy.concept_delta_w != 0.0 {
            s.push_str(&format!("-dw{}", self.policy.concept_delta_w));
        }
        if self.rtd_reading == RtdReading::Original {
            s.push_str("-original");
        }
        s
    }
}

#[cfg(feature = "onnx")]
fn open_bundle(path: &Path, overflow: Overflow) -> Result<Box<dyn Backend>> {
    Ok(Box::new(crate::backend::BundleBackend::load(path)?.with_overflow(overflow)))
}

#[cfg(not(feature = "onnx"))]
fn open_bundle(path: &Path, _overflow: Overflow) -> Result<Box<dyn Backend>> {
    Err(Error::Unsupported(format!("cannot open {}: built without the `onnx` feature", path.display())))
}

/// Written next to a prepared JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareMeta {
    pub dataset: DatasetName,
    pub split: String,
    pub instances: usize,
    pub warnings: LoadWarnings,
    pub stats: Option<StatsReport>,
}

fn sidecar_path(jsonl: &Path) -> PathBuf {
    jsonl.with_extension("meta.json")
}

fn read_sidecar(jsonl: &Path) -> Option<PrepareMeta> {
    let text = std::fs::read_to_string(sidecar_path(jsonl)).ok()?;
    serde_json::from_str(&text).ok()
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn cmd_prepare(dataset: &str, source: &Path, out: &Path, stdout: &mut dyn std::io::Write) -> Result<()> {
    let name: DatasetName = dataset.parse()?;
    let loaded = load_dataset(name, source)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let path = out.join(format!("{}.jsonl", name.id()));
    write_instances(&path, &loaded.instances)?;
    let stats = descriptor(name).map(|d| validate_stats(&loaded.instances, &d));
    let meta = PrepareMeta {
        dataset: name,
        split: loaded.split.clone(),
        instances: loaded.instances.len(),
        warnings: loaded.warnings.clone(),
        stats: stats.clone(),
    };
    write_json(&meta, &sidecar_path(&path))?;
    let _ = writeln!(stdout, "wrote {} instances to {}", loaded.instances.len(), path.display());
    if let Some(s) = stats {
        let _ = writeln!(stdout, "{s}");
    }
    if loaded.warnings.skipped_tuples() > 0 {
        let _ = writeln!(stdout, "skipped {} tuples with unsupported relations", loaded.warnings.skipped_tuples());
    }
    Ok(())
}

fn run_evaluation(cfg: &RunConfig) -> Result<EvalReport> {
    let backend = cfg.open_backend()?;
    let scorer = cfg.scorer();
    scorer.check(backend.as_ref())?;
    let (instances, split) = cfg.load_instances()?;
    let mut report = eval::evaluate(&instances, backend.as_ref(), &scorer, cfg.options)?;
    report.split = split;
    Ok(report)
}

fn summary_line(r: &EvalReport) -> String {
    format!("{} {} {} {:.4}", r.dataset, r.metric, r.target, r.accuracy)
}

fn cmd_evaluate(cfg: &RunConfig, stdout: &mut dyn std::io::Write) -> Result<EvalReport> {
    let report = run_evaluation(cfg)?;
    cfg.create_out()?;
    let stem = cfg.stem(&report.dataset);
    write_report_json(&report, cfg.out.join(format!("{stem}.json")))?;
    write_report_csv(&report, cfg.out.join(format!("{stem}.csv")))?;
    let _ = writeln!(stdout, "{}", summary_line(&report));
    for (k, v) in &report.warnings {
        let _ = writeln!(stdout, "warning: {k} x{v}");
    }
    Ok(report)
}

fn cmd_compare(
    a: &Path,
    b: &Path,
    alpha: f64,
    seed: u64,
    out: Option<&Path>,
    stdout: &mut dyn std::io::Write,
) -> Result<()> {
    let (ra, rb) = (read_report(a)?, read_report(b)?);
    let result = significance(&ra, &rb, alpha, seed)?;
    let verdict = if result.significant { "significant" } else { "not significant" };
    let _ = writeln!(
        stdout,
        "{} vs {}: diff {:+.4} p={} over {} pairs, {verdict} at {}",
        ra.label(),
        rb.label(),
        result.statistic,
        result.p_value,
        result.n_pairs,
        alpha
    );
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_json(&result, &dir.join("compare.json"))?;
    }
    Ok(())
}

fn cmd_analyze(
    kind: AnalysisKind,
    report: Option<&Path>,
    bin_width: f64,
    run: &RunArgs,
    stdout: &mut dyn std::io::Write,
) -> Result<()> {
    if kind == AnalysisKind::Ranks {
        if let Some(path) = report {
            let out = run.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            let r = read_report(path)?;
            for p in emit_plot_data(PlotData::Ranks(&r), &out)? {
                let _ = writeln!(stdout, "wrote {}", p.display());
            }
            return Ok(());
        }
    }
    let cfg = run.resolve()?;
    let written = match kind {
        AnalysisKind::Ranks => {
            let r = run_evaluation(&cfg)?;
            emit_plot_data(PlotData::Ranks(&r), &cfg.out)?
        }
        AnalysisKind::DiffDist | AnalysisKind::FreqContrib => {
            let backend = cfg.open_backend()?;
            let (instances, _) = cfg.load_instances()?;
            let diffs = question_diff_distribution(&instances, backend.as_ref(), cfg.metric, bin_width)?;
            if kind == AnalysisKind::DiffDist {
                let _ = writeln!(stdout, "mean difference {:.6} over {} words", diffs.mean, diffs.samples.len());
                emit_plot_data(PlotData::Differences(&diffs), &cfg.out)?
            } else {
                let curve = frequency_contribution_from(&instances, &diffs);
                emit_plot_data(PlotData::Frequency(&curve), &cfg.out)?
            }
        }
    };
    for p in written {
        let _ = writeln!(stdout, "wrote {}", p.display());
    }
    Ok(())
}

fn cmd_ablate(cfg: &RunConfig, stdout: &mut dyn std::io::Write) -> Result<StopwordAblation> {
    let backend = cfg.open_backend()?;
    let (instances, split) = cfg.load_instances()?;
    let mut a = ablate_stopwords(&instances, backend.as_ref(), &cfg.scorer(), cfg.options, cfg.seed)?;
    a.base.split.clone_from(&split);
    a.removed.split = split;
    cfg.create_out()?;
    let mut base = cfg.clone();
    base.policy.stopword_removal = false;
    write_json(&a, &cfg.out.join(format!("ablation-{}.json", base.stem(&a.base.dataset))))?;
    let _ = writeln!(stdout, "{} {}: {} p={}", a.base.dataset, a.base.label(), a.cell(), a.significance.p_value);
    Ok(a)
}

fn cmd_sweep(cfg: &RunConfig, grid: &[f64], stdout: &mut dyn std::io::Write) -> Result<DeltaWSweep> {
    if let Some(w) = grid.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(usage(format!("ΔW {w} must be finite and non-negative")));
    }
    let backend = cfg.open_backend()?;
    let (instances, split) = cfg.load_instances()?;
    let mut sweep = sweep_delta_w(&instances, backend.as_ref(), &cfg.scorer(), grid, cfg.options)?;
    for p in &mut sweep.points {
        p.report.split.clone_from(&split);
    }
    cfg.create_out()?;
    let mut base = cfg.clone();
    base.policy.concept_delta_w = 0.0;
    let dataset = instances.first().map(|i| i.dataset.as_str()).unwrap_or("empty");
    write_json(&sweep, &cfg.out.join(format!("sweep-{}.json", base.stem(dataset))))?;
    for (w, acc) in sweep.accuracies() {
        let _ = writeln!(stdout, "ΔW={w} {}", tables::percent(acc));
    }
    Ok(sweep)
}

#[derive(Default)]
struct Stored {
    reports: Vec<EvalReport>,
    ablations: Vec<StopwordAblation>,
    sweeps: Vec<DeltaWSweep>,
}

fn collect_json(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(input)
                .map_err(|e| Error::io(input, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e == "json"))
                .collect();
            entries.sort();
            files.extend(entries);
        } else {
            files.push(input.clone());
        }
    }
    Ok(files)
}

fn cmd_make_tables(inputs: &[PathBuf], out: &Path, stdout: &mut dyn std::io::Write) -> Result<()> {
    let mut stored = Stored::default();
    for path in collect_json(inputs)? {
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        if let Ok(r) = serde_json::from_str::<EvalReport>(&text) {
            stored.reports.push(r);
        } else if let Ok(a) = serde_json::from_str::<StopwordAblation>(&text) {
            stored.ablations.push(a);
        } else if let Ok(s) = serde_json::from_str::<DeltaWSweep>(&text) {
            stored.sweeps.push(s);
        }
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut md = String::new();
    let mut emit = |name: &str, t: tables::Table| -> Result<()> {
        if t.rows.is_empty() {
            return Ok(());
        }
        write_text(&out.join(format!("{name}.csv")), &t.to_csv())?;
        md.push_str(&t.to_markdown());
        md.push('\n');
        Ok(())
    };
    emit("accuracy", tables::accuracy_table("Accuracy (%)", &stored.reports))?;
    emit("stopword_ablation", tables::ablation_table("Stop-word removal: accuracy (delta)", &stored.ablations))?;
    emit("delta_w_sweep", tables::sweep_table("Concept weight ΔW", &stored.sweeps))?;
    write_text(&out.join("tables.md"), &md)?;
    let _ = write!(stdout, "{md}");
    Ok(())
}

#[cfg(feature = "onnx")]
fn cmd_verify_bundle(path: &Path, stdout: &mut dyn std::io::Write) -> Result<()> {
    let bundle = crate::backend::BundleBackend::load(path)?;
    let report = bundle.verify()?;
    let _ = writeln!(stdout, "{report}");
    if report.passed {
        Ok(())
    } else {
        Err(Error::Bundle(format!(
            "golden probe deviates by {} (tolerance {})",
            report.max_abs_deviation, report.tolerance
        )))
    }
}

#[cfg(not(feature = "onnx"))]
fn cmd_verify_bundle(path: &Path, _stdout: &mut dyn std::io::Write) -> Result<()> {
    open_bundle(path, Overflow::Reject).map(|_| ())
}

/// Runs one parsed command.
pub fn execute(cli: Cli, stdout: &mut dyn std::io::Write) -> Result<()> {
    match cli.command {
        Command::Prepare { dataset, source, out } => cmd_prepare(&dataset, &source, &out, stdout),
        Command::Evaluate(run) => cmd_evaluate(&run.resolve()?, stdout).map(|_| ()),
        Command::Compare { a, b, alpha, seed, out } => cmd_compare(&a, &b, alpha, seed, out.as_deref(), stdout),
        Command::Analyze { kind, report, bin_width, run } => {
            cmd_analyze(kind, report.as_deref(), bin_width, &run, stdout)
        }
        Command::AblateStopwords(run) => cmd_ablate(&run.resolve()?, stdout).map(|_| ()),
        Command::SweepDeltaW { grid, run } => {
            let grid = grid.unwrap_or_else(|| DEFAULT_DELTA_W_GRID.to_vec());
            cmd_sweep(&run.resolve()?, &grid, stdout).map(|_| ())
        }
        Command::MakeTables { inputs, out } => cmd_make_tables(&inputs, &out, stdout),
        Command::VerifyBundle { backend } => cmd_verify_bundle(&backend, stdout),
    }
}

pub fn exit_code(err: &Error) -> i32 {
    if err.is_usage() {
        EXIT_USAGE
    } else {
        EXIT_FAILURE
    }
}

/// Parses `args` (including the program name), runs, and returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn std::io::Write, stderr: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(stdout, "{text}");
            } else {
                let _ = write!(stderr, "{text}");
            }
            return code;
        }
    };
    match execute(cli, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(list: &[&str]) -> RunArgs {
        let mut full = vec!["nrc", "evaluate"];
        full.extend_from_slice(list);
        match Cli::try_parse_from(full).unwrap().command {
            Command::Evaluate(r) => r,
            _ => unreachable!(),
        }
    }

    #[test]
    fn flags_resolve() {
        let cfg = args(&[
            "--fixture",
            "f.json",
            "--metric",
            "nrc",
            "--data",
            "x.jsonl",
            "--target",
            "a",
            "--remove-stopwords",
        ])
        .resolve()
        .unwrap();
        assert_eq!(cfg.model, ModelSource::Fixture("f.json".into()));
        assert_eq!(cfg.metric, MetricKind::Nrc);
        assert_eq!(cfg.policy.target, Target::A);
        assert!(cfg.policy.stopword_removal);
        assert_eq!(cfg.options, EvalOptions { workers: 1, batch: 16 });
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "fixture = \"cfg.json\"\nmetric = \"ppl-mlm\"\ndata = \"d.jsonl\"\ndelta_w = 0.5\nbatch = 4\nremove_stopwords = true\n",
        )
        .unwrap();
        let p = path.to_str().unwrap();
        let cfg = args(&["--config", p, "--metric", "nrc", "--no-stopwords"]).resolve().unwrap();
        assert_eq!(cfg.metric, MetricKind::Nrc);
        assert_eq!(cfg.model, ModelSource::Fixture("cfg.json".into()));
        assert_eq!(cfg.policy.concept_delta_w, 0.5);
        assert!(!cfg.policy.stopword_removal);
        assert_eq!(cfg.options.batch, 4);
    }

    #[test]
    fn missing_pieces_are_usage_errors() {
        let e = args(&["--metric", "nrc", "--data", "x.jsonl"]).resolve().unwrap_err();
        assert_eq!(exit_code(&e), EXIT_USAGE);
        let e = args(&["--fixture", "f", "--metric", "nrc", "--data", "x", "--batch", "0"]).resolve().unwrap_err();
        assert_eq!(exit_code(&e), EXIT_USAGE);
        let e = args(&["--fixture", "f", "--metric", "nrc", "--data", "x", "--delta-w=-1"]).resolve().unwrap_err();
        assert_eq!(exit_code(&e), EXIT_USAGE);
    }

    #[test]
    fn bad_metric_name_exits_two() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(["nrc", "evaluate", "--metric", "bleu"], &mut out, &mut err);
        assert_eq!(code, EXIT_USAGE);
    }

    #[test]
    fn unknown_dataset_exits_two() {
        let dir = tempfile::tempdir().unwrap();
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let o = dir.path().to_str().unwrap();
        let code = run(["nrc", "prepare", "--dataset", "nope", "--source", o, "--out", o], &mut out, &mut err);
        assert_eq!(code, EXIT_USAGE, "{}", String::from_utf8_lossy(&err));
    }
}
