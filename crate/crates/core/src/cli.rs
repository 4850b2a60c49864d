//! `txreid` command-line front end.
//!
//! Exit status is 0 on success, 1 on data or numerical failures and 2 on usage
//! errors. Diagnostics go to stderr; results only to the files named by flags.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::Error;
use crate::eval::{plan_experiment, load_descriptors, run_on, synth_dataset, ExperimentConfig, ModeDim};
use crate::features::{
    encode_binary, fuse_tensors, load_features, split_to_tensor, write_csv, FeatureFormat, FeatureSet, View,
    ViewTensor,
};
use crate::matching::{distance_matrix, normalize_scores, rank_gallery, Normalization};
use crate::txqda::{fit, TxqdaConfig, TxqdaModel};
use crate::xqda::Alignment;

#[derive(Debug, Parser)]
#[command(name = "txreid", version, about = "Tensor XQDA person re-identification toolkit")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Seed for every random draw.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 keeps runs bit-reproducible by construction.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Feature file format: csv or raw-binary.
    #[arg(long, global = true)]
    format: Option<FeatureFormat>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a (fused) view tensor from feature files.
    Ingest(IngestArgs),
    /// Train a model from view-A and view-B feature files.
    Fit(FitArgs),
    /// Match probes against a gallery with a trained model.
    Rank(RankArgs),
    /// Run the cross-validation protocol described by a config file.
    Eval(EvalArgs),
    /// Generate synthetic two-view feature files.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Feature file; repeat to fuse descriptors in the given order.
    #[arg(long = "input", required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    view: View,
    #[arg(long)]
    part_len: usize,
    /// Tensor container (TXT1) to write.
    #[arg(long)]
    out: PathBuf,
    /// Optional JSON statistics file.
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// View-A feature file; repeat to fuse descriptors.
    #[arg(long = "view-a", required = true)]
    view_a: Vec<PathBuf>,
    /// View-B feature file; repeat in the same descriptor order.
    #[arg(long = "view-b", required = true)]
    view_b: Vec<PathBuf>,
    #[arg(long)]
    part_len: usize,
    /// Parts-mode output dimension: a count, auto or full.
    #[arg(long, default_value = "auto")]
    dim1: ModeDim,
    /// Features-mode output dimension: a count, auto or full.
    #[arg(long, default_value = "auto")]
    dim2: ModeDim,
    #[arg(long, default_value_t = 5)]
    max_itr: usize,
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    #[arg(long, default_value_t = 1e-3)]
    lambda: f64,
    #[arg(long, default_value = "aligned")]
    alignment: Alignment,
    /// Model file (TXM1) to write.
    #[arg(long)]
    out: PathBuf,
    /// Optional JSON model summary.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RankArgs {
    #[arg(long)]
    model: PathBuf,
    /// Probe feature file; repeat to fuse descriptors.
    #[arg(long = "probe", required = true)]
    probes: Vec<PathBuf>,
    /// Gallery feature file; repeat to fuse descriptors.
    #[arg(long = "gallery", required = true)]
    galleries: Vec<PathBuf>,
    #[arg(long, default_value = "A")]
    probe_view: View,
    #[arg(long, default_value = "B")]
    gallery_view: View,
    #[arg(long, default_value = "minmax")]
    normalization: Normalization,
    /// Distance matrix CSV to write.
    #[arg(long)]
    out: PathBuf,
    /// Optional CSV of gallery labels in rank order per probe.
    #[arg(long)]
    rankings: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    config: PathBuf,
    /// Report JSON to write.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for per-Dim mean CMC curves.
    #[arg(long)]
    curves_dir: Option<PathBuf>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    normalization: Option<Normalization>,
    /// Leave the timestamp out of the report.
    #[arg(long)]
    no_timestamp: bool,
    /// Print the resolved folds and cells without computing anything.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    ids: usize,
    #[arg(long)]
    dim: usize,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long)]
    out_a: PathBuf,
    #[arg(long)]
    out_b: PathBuf,
}

/// An error tagged with the stage that raised it.
struct Failure {
    stage: String,
    error: Error,
}

trait InStage<T> {
    fn stage(self, stage: impl Into<String>) -> Result<T, Failure>;
}

impl<T> InStage<T> for Result<T, Error> {
    fn stage(self, stage: impl Into<String>) -> Result<T, Failure> {
        self.map_err(|error| Failure {
            stage: stage.into(),
            error,
        })
    }
}

/// Parse `args` (including the program name) and run the chosen verb.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let (verb, result) = match &cli.command {
        Command::Ingest(a) => ("ingest", ingest(&cli.common, a)),
        Command::Fit(a) => ("fit", fit_cmd(&cli.common, a)),
        Command::Rank(a) => ("rank", rank(&cli.common, a)),
        Command::Eval(a) => ("eval", eval(&cli.common, a)),
        Command::Synth(a) => ("synth", synth(&cli.common, a)),
    };
    match result {
        Ok(()) => 0,
        Err(Failure { stage, error }) => {
            eprintln!("txreid {verb}: {stage}: {error}");
            error.exit_code()
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    std::fs::write(path, bytes)
        .map_err(|e| Error::io(path, e))
        .stage(format!("writing {}", path.display()))
}

fn to_json(value: &impl Serialize) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

fn load(path: &Path, format: FeatureFormat) -> Result<FeatureSet, Failure> {
    load_features(path, format).stage(format!("loading features from {}", path.display()))
}

/// Split each file's `view` records and fuse them in order.
fn fused_view(paths: &[PathBuf], view: View, part_len: usize, format: FeatureFormat) -> Result<ViewTensor, Failure> {
    let mut fused: Option<ViewTensor> = None;
    for path in paths {
        let fs = load(path, format)?;
        let t = split_to_tensor(&fs, view, part_len).stage(format!("building view-{view} tensor from {}", path.display()))?;
        fused = Some(match fused {
            None => t,
            Some(prev) => fuse_tensors(&prev, &t).stage(format!("fusing {}", path.display()))?,
        });
    }
    fused.ok_or_else(|| Failure {
        stage: "building tensor".into(),
        error: Error::usage("no feature files given"),
    })
}

#[derive(Serialize)]
struct TensorStats {
    inputs: Vec<String>,
    view: View,
    dims: [usize; 3],
    persons: usize,
    identities: usize,
    min: f64,
    max: f64,
    mean: f64,
}

fn ingest(common: &Common, a: &IngestArgs) -> Result<(), Failure> {
    if a.part_len == 0 {
        return Err(Error::usage("--part-len must be at least 1")).stage("parsing arguments");
    }
    let format = common.format.unwrap_or(FeatureFormat::Csv);
    let t = fused_view(&a.inputs, a.view, a.part_len, format)?;
    write_file(&a.out, &t.to_bytes())?;
    if let Some(stats_path) = &a.stats {
        let data = t.tensor.data();
        let stats = TensorStats {
            inputs: a.inputs.iter().map(|p| p.display().to_string()).collect(),
            view: t.view,
            dims: t.dims(),
            persons: t.labels.len(),
            identities: t.labels.iter().collect::<std::collections::BTreeSet<_>>().len(),
            min: data.iter().copied().fold(f64::INFINITY, f64::min),
            max: data.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean: data.iter().sum::<f64>() / data.len() as f64,
        };
        write_file(stats_path, &to_json(&stats))?;
    }
    Ok(())
}

fn fit_cmd(common: &Common, a: &FitArgs) -> Result<(), Failure> {
    if a.view_a.len() != a.view_b.len() {
        return Err(Error::usage("--view-a and --view-b must be given the same number of times"))
            .stage("parsing arguments");
    }
    if a.part_len == 0 {
        return Err(Error::usage("--part-len must be at least 1")).stage("parsing arguments");
    }
    let format = common.format.unwrap_or(FeatureFormat::Csv);
    let x = fused_view(&a.view_a, View::A, a.part_len, format)?;
    let y = fused_view(&a.view_b, View::B, a.part_len, format)?;
    let [n1, n2, _] = x.dims();
    let cfg = TxqdaConfig {
        target_dims: [a.dim1.resolve(n1), a.dim2.resolve(n2)],
        max_itr: a.max_itr,
        epsilon: a.epsilon,
        lambda: a.lambda,
        alignment: a.alignment,
    };
    let model = fit(&x, &y, &cfg).stage("training")?;
    write_file(&a.out, &model.to_bytes())?;
    if let Some(path) = &a.summary {
        write_file(path, &to_json(&model.summary()))?;
    }
    Ok(())
}

fn rank(common: &Common, a: &RankArgs) -> Result<(), Failure> {
    let format = common.format.unwrap_or(FeatureFormat::Csv);
    let model = TxqdaModel::load(&a.model).stage("loading model")?;
    let part_len = model.projections.source_dims()[1];
    let probes = fused_view(&a.probes, a.probe_view, part_len, format)?;
    let gallery = fused_view(&a.galleries, a.gallery_view, part_len, format)?;
    let d = distance_matrix(&probes, &gallery, &model).stage("matching")?;
    let d = normalize_scores(&d, a.normalization);
    let mut buf = Vec::new();
    d.write_csv(&mut buf).expect("writing to memory");
    write_file(&a.out, &buf)?;
    if let Some(path) = &a.rankings {
        let mut out = String::from("probe");
        for r in 1..=d.gallery_labels.len() {
            out.push_str(&format!(",rank{r}"));
        }
        out.push('\n');
        for (label, order) in d.probe_labels.iter().zip(rank_gallery(&d)) {
            out.push_str(&label.to_string());
            for g in order {
                out.push_str(&format!(",{}", d.gallery_labels[g]));
            }
            out.push('\n');
        }
        write_file(path, out.as_bytes())?;
    }
    Ok(())
}

fn eval(common: &Common, a: &EvalArgs) -> Result<(), Failure> {
    let mut cfg = ExperimentConfig::load(&a.config).stage(format!("reading config {}", a.config.display()))?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(format) = common.format {
        cfg.format = format;
    }
    if let Some(folds) = a.folds {
        cfg.folds = folds;
    }
    if let Some(n) = a.normalization {
        cfg.normalization = n;
    }
    cfg.validate().stage("validating config")?;
    if common.threads == 0 {
        return Err(Error::usage("--threads must be at least 1")).stage("parsing arguments");
    }
    let descriptors = load_descriptors(&cfg).stage("loading descriptors")?;

    if a.dry_run {
        let plan = plan_experiment(&cfg, &descriptors).stage("planning")?;
        eprintln!(
            "plan: {} identities, {} folds, {} cells (dims {:?})",
            plan.identities,
            plan.folds.k,
            plan.cells.len(),
            cfg.dims
        );
        for (i, f) in plan.folds.folds.iter().enumerate() {
            eprintln!("fold {i}: {} test identities {:?}", f.len(), f);
        }
        for (dim, fold) in &plan.cells {
            eprintln!("cell dim={dim} fold={fold}");
        }
        return Ok(());
    }

    let out = a
        .out
        .as_ref()
        .ok_or_else(|| Error::usage("--out is required unless --dry-run is given"))
        .stage("parsing arguments")?;
    let mut report = run_on(&cfg, &descriptors, common.threads).stage("running experiment")?;
    if !a.no_timestamp {
        report.timestamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .ok()
            .map(|d| d.as_secs());
    }
    write_file(out, report.to_json().as_bytes())?;
    if let Some(dir) = &a.curves_dir {
        report.write_curves(dir).stage("writing curves")?;
    }
    let failed = report.cells.iter().filter(|c| c.cmc.is_none()).count();
    eprintln!(
        "eval: {} cells, {} failed, report written to {}",
        report.cells.len(),
        failed,
        out.display()
    );
    Ok(())
}

fn synth(common: &Common, a: &SynthArgs) -> Result<(), Failure> {
    let (fa, fb) = synth_dataset(a.ids, a.dim, a.noise, common.seed.unwrap_or(0)).stage("generating")?;
    let format = common.format.unwrap_or(FeatureFormat::Csv);
    for (fs, path) in [(&fa, &a.out_a), (&fb, &a.out_b)] {
        let bytes = match format {
            FeatureFormat::Csv => {
                let mut buf = Vec::new();
                write_csv(fs, &mut buf).expect("writing to memory");
                buf
            }
            FeatureFormat::RawBinary => encode_binary(fs),
        };
        write_file(path, &bytes)?;
    }
    Ok(())
}
