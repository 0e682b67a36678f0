//! `normscale` — fit per-class logit statistics, run OoD evaluations,
//! sweep calibration temperatures, and generate synthetic logit datasets.
//!
//! Exit codes: 0 success, 2 input/validation error, 3 metric undefined on
//! the given data.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use normscale::detector::{DetectorConfig, PredictionSource, Scaling, ScoreKind, StatsMode};
use normscale::ingest::{
    read_logits, write_logits, DatasetManifest, FileFormat, ManifestEntry, Role,
};
use normscale::pipeline::{
    default_tau_grid, run_eval, sweep_tau, EvalInputs, RunOutput, DEFAULT_BINS,
};
use normscale::record::LogitRecord;
use normscale::stats::{fit_class_stats, ClassStats, StatsFile, DEFAULT_EPSILON};
use normscale::synthgen::{generate, SynthConfig};
use normscale::{Error, Result};

#[derive(Parser)]
#[command(name = "normscale", version, about = "Out-of-distribution detection over classifier logits via per-class normalization")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit per-class mean/std on the manifest's training logits and write
    /// a statistics JSON file.
    Fit(FitArgs),
    /// Score shuffled test streams and emit a metrics report plus curve CSVs.
    Eval(EvalArgs),
    /// Sweep the temperature parameter and report in-distribution ECE for
    /// tau-parameterized norm-scaling vs plain temperature scaling.
    SweepTau(SweepArgs),
    /// Generate a synthetic logit dataset and a manifest referencing it.
    Synth(SynthArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Dataset manifest (JSON); the single train entry is fitted.
    #[arg(long)]
    manifest: PathBuf,
    /// Output statistics file (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Divisor floor recorded in the statistics file.
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum DetectorArg {
    Msp,
    Energy,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScalingArg {
    None,
    Norm,
    TauNorm,
    Temp,
}

#[derive(Clone, Copy, ValueEnum)]
enum StatsModeArg {
    Frozen,
    RunningLiteral,
    RunningStandard,
}

#[derive(Clone, Copy, ValueEnum)]
enum PredictionSourceArg {
    Unscaled,
    Scaled,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Statistics file produced by `fit`.
    #[arg(long)]
    stats: PathBuf,
    #[arg(long, value_enum, default_value = "msp")]
    detector: DetectorArg,
    #[arg(long, value_enum, default_value = "none")]
    scaling: ScalingArg,
    /// Temperature for tau-norm/temp scaling.
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    #[arg(long, value_enum, default_value = "frozen")]
    stats_mode: StatsModeArg,
    /// Which logits the predicted class comes from.
    #[arg(long, value_enum, default_value = "unscaled")]
    prediction_source: PredictionSourceArg,
    /// Stream-shuffle seeds, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    seeds: Vec<u64>,
    /// Reliability bin count.
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    /// Override the statistics file's divisor floor.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Output directory for report.json and curve CSVs.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    stats: PathBuf,
    /// Temperature grid, comma separated; defaults to 24 log-spaced points
    /// in [0.1, 100].
    #[arg(long, value_delimiter = ',')]
    tau: Option<Vec<f64>>,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Output CSV file (`tau,ece_norm,ece_temp`).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Generator configuration (JSON). Omit to use the built-in benchmark.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration name.
    #[arg(long, value_parser = ["fig1-like"])]
    preset: Option<String>,
    /// Seed for the built-in preset.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// File format for the generated logit files.
    #[arg(long, value_enum, default_value = "bin")]
    format: FormatArg,
    /// Output directory for the dataset files and manifest.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Bin,
}

impl FormatArg {
    fn to_format(self) -> FileFormat {
        match self {
            FormatArg::Csv => FileFormat::Csv,
            FormatArg::Bin => FileFormat::Bin,
        }
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Fit(a) => cmd_fit(a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::SweepTau(a) => cmd_sweep_tau(a),
        Cmd::Synth(a) => cmd_synth(a),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        let code = match e {
            Error::Metric(_) => 3,
            _ => 2,
        };
        std::process::exit(code);
    }
}

fn load_entry(manifest_path: &Path, m: &DatasetManifest, e: &ManifestEntry) -> Result<Vec<LogitRecord>> {
    read_logits(&m.resolve(manifest_path, e), e.format, e.role.origin())
}

fn load_inputs(manifest_path: &Path) -> Result<EvalInputs> {
    let m = DatasetManifest::load(manifest_path)?;
    let train = load_entry(manifest_path, &m, m.train())?;
    let in_test = load_entry(manifest_path, &m, m.in_test())?;
    let mut ood_sets = Vec::new();
    for e in m.ood_tests() {
        ood_sets.push((e.name.clone(), load_entry(manifest_path, &m, e)?));
    }
    Ok(EvalInputs {
        train,
        in_test,
        ood_sets,
    })
}

fn load_stats(path: &Path) -> Result<(ClassStats, f64)> {
    let text = fs::read_to_string(path)?;
    let file: StatsFile = serde_json::from_str(&text)?;
    file.into_stats()
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    if !(a.epsilon > 0.0) {
        return Err(Error::InvalidParam(format!(
            "epsilon must be > 0, got {}",
            a.epsilon
        )));
    }
    let m = DatasetManifest::load(&a.manifest)?;
    let train = load_entry(&a.manifest, &m, m.train())?;
    let stats = fit_class_stats(&train)?;
    let mut text = serde_json::to_string_pretty(&StatsFile::new(&stats, a.epsilon))?;
    text.push('\n');
    fs::write(&a.out, text)?;
    println!(
        "fitted {} classes from {} records -> {}",
        stats.num_classes,
        stats.sample_count,
        a.out.display()
    );
    Ok(())
}

fn detector_config(a: &EvalArgs, file_epsilon: f64) -> DetectorConfig {
    DetectorConfig {
        score_kind: match a.detector {
            DetectorArg::Msp => ScoreKind::Msp,
            DetectorArg::Energy => ScoreKind::Energy,
        },
        scaling: match a.scaling {
            ScalingArg::None => Scaling::None,
            ScalingArg::Norm => Scaling::Norm,
            ScalingArg::TauNorm => Scaling::TauNorm,
            ScalingArg::Temp => Scaling::Temp,
        },
        tau: a.tau,
        stats_mode: match a.stats_mode {
            StatsModeArg::Frozen => StatsMode::Frozen,
            StatsModeArg::RunningLiteral => StatsMode::RunningLiteral,
            StatsModeArg::RunningStandard => StatsMode::RunningStandard,
        },
        prediction_source: match a.prediction_source {
            PredictionSourceArg::Unscaled => PredictionSource::UnscaledLogits,
            PredictionSourceArg::Scaled => PredictionSource::ScaledLogits,
        },
        epsilon: a.epsilon.unwrap_or(file_epsilon),
    }
}

/// Dataset names go into curve filenames; keep them filesystem-safe.
fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' })
        .collect()
}

fn fmt_f64(v: f64) -> String {
    // shortest representation that round-trips
    let mut s = format!("{v}");
    if !s.contains('.') && !s.contains('e') && !s.contains("inf") && !s.contains("NaN") {
        s.push_str(".0");
    }
    s
}

fn write_curves(out_dir: &Path, output: &RunOutput) -> Result<()> {
    let curve_dir = out_dir.join("curves");
    fs::create_dir_all(&curve_dir)?;
    for c in &output.curves {
        let stem = format!("seed{}_{}", c.seed, sanitize(&c.dataset));
        let mut roc = String::from("fpr,tpr\n");
        for (fpr, tpr) in &c.roc {
            roc.push_str(&format!("{},{}\n", fmt_f64(*fpr), fmt_f64(*tpr)));
        }
        fs::write(curve_dir.join(format!("roc_{stem}.csv")), roc)?;
        let mut pr = String::from("recall,precision\n");
        for (r, p) in &c.pr {
            pr.push_str(&format!("{},{}\n", fmt_f64(*r), fmt_f64(*p)));
        }
        fs::write(curve_dir.join(format!("pr_{stem}.csv")), pr)?;
        if let Some(rb) = &c.reliability {
            let mut rel = String::from("bin,count,acc,conf\n");
            for (i, b) in rb.bins.iter().enumerate() {
                let acc = b.acc.map(fmt_f64).unwrap_or_default();
                let conf = b.conf.map(fmt_f64).unwrap_or_default();
                rel.push_str(&format!("{},{},{},{}\n", i + 1, b.count, acc, conf));
            }
            fs::write(curve_dir.join(format!("reliability_{stem}.csv")), rel)?;
        }
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let inputs = load_inputs(&a.manifest)?;
    let (stats, file_epsilon) = load_stats(&a.stats)?;
    let detector = detector_config(&a, file_epsilon);
    let output = run_eval(&inputs, &stats, &detector, &a.seeds, a.bins)?;
    fs::create_dir_all(&a.out)?;
    let mut text = serde_json::to_string_pretty(&output.report)?;
    text.push('\n');
    fs::write(a.out.join("report.json"), text)?;
    write_curves(&a.out, &output)?;
    let agg = &output.report.aggregate.single;
    println!(
        "auroc {:.4} +/- {:.4} | aupr {:.4} +/- {:.4} | fpr95 {:.4} +/- {:.4} ({} seeds) -> {}",
        agg.auroc.mean,
        agg.auroc.std,
        agg.aupr.mean,
        agg.aupr.std,
        agg.fpr95.mean,
        agg.fpr95.std,
        a.seeds.len(),
        a.out.display()
    );
    Ok(())
}

fn cmd_sweep_tau(a: SweepArgs) -> Result<()> {
    let inputs = load_inputs(&a.manifest)?;
    let (stats, file_epsilon) = load_stats(&a.stats)?;
    let epsilon = a.epsilon.unwrap_or(file_epsilon);
    let grid = a.tau.unwrap_or_else(default_tau_grid);
    let rows = sweep_tau(&inputs.in_test, &stats, &grid, a.bins, epsilon)?;
    let mut csv = String::from("tau,ece_norm,ece_temp\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{}\n",
            fmt_f64(r.tau),
            fmt_f64(r.ece_norm),
            fmt_f64(r.ece_temp)
        ));
    }
    fs::write(&a.out, csv)?;
    let best = rows
        .iter()
        .min_by(|x, y| x.ece_norm.total_cmp(&y.ece_norm))
        .unwrap();
    println!(
        "{} taus swept; ece_norm minimized at tau={} (ece={:.4}) -> {}",
        rows.len(),
        fmt_f64(best.tau),
        best.ece_norm,
        a.out.display()
    );
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let config: SynthConfig = match (&a.config, &a.preset) {
        (Some(path), _) => serde_json::from_str(&fs::read_to_string(path)?)?,
        (None, _) => SynthConfig::fig1_like(a.seed),
    };
    let data = generate(&config)?;
    fs::create_dir_all(&a.out)?;
    let format = a.format.to_format();
    let ext = match format {
        FileFormat::Csv => "csv",
        FileFormat::Bin => "bin",
    };
    let splits: [(&str, Role, &[LogitRecord]); 3] = [
        ("train", Role::Train, &data.train),
        ("in_test", Role::InTest, &data.in_test),
        ("ood_test", Role::OodTest, &data.ood_test),
    ];
    let mut entries = Vec::new();
    for (name, role, records) in splits {
        let file = format!("{name}.{ext}");
        write_logits(&a.out.join(&file), format, records)?;
        entries.push(ManifestEntry {
            name: name.to_string(),
            role,
            path: file,
            format,
        });
    }
    let manifest = DatasetManifest { entries };
    manifest.save(&a.out.join("manifest.json"))?;
    println!(
        "wrote {} train / {} in_test / {} ood_test rows -> {}",
        data.train.len(),
        data.in_test.len(),
        data.ood_test.len(),
        a.out.display()
    );
    Ok(())
}
