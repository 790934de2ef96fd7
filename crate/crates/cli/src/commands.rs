use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use agitation::data::{load_annotations, load_dataset, save_dataset_with_preamble, LabeledDataset};
use agitation::decide::{effective_threshold_range, sweep_thresholds, EffectiveRange, SweepResult, SweepRow};
use agitation::eval::{run_cv_experiment, CvReport};
use agitation::resample::Strategy;
use agitation::signal::{frame_to_instances, read_frame, write_frame, FeatureCatalog, PipelineConfig, CATALOG_VERSION};
use agitation::synth::{generate_cohort, inject_boundary_jitter};
use agitation::{write_atomic, Dataset};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, Point};
use crate::Failure;

pub const REPORT_FORMAT: &str = "agitation-report/v1";
pub const RUN_INDEX: &str = "run_index.csv";

#[derive(Debug, Parser)]
#[command(name = "agitation", version, about = "Agitation detection experiments on wearable-sensor minutes")]
pub struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort and its feature dataset.
    Synth(SynthArgs),
    /// Extract features from raw frame files.
    Features(FeaturesArgs),
    /// Run cross-validated experiments and write reports.
    Run(Overrides),
    /// Threshold sweep of Original vs CCR decisions.
    Sweep(SweepArgs),
    /// Collect reports of a directory into summary tables.
    Report(ReportArgs),
}

/// Config file plus flags that override its keys.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub strategy: Option<Strategy>,
    #[arg(long = "proportion")]
    pub proportions: Vec<f64>,
    #[arg(long = "k")]
    pub k_values: Vec<f64>,
    #[arg(long)]
    pub seed1: Option<u64>,
    #[arg(long = "seed2")]
    pub seeds2: Vec<u64>,
    #[arg(long)]
    pub n_folds: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the raw signals of every participant-day.
    #[arg(long)]
    pub frames: bool,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    /// Directory of `*.frame` files.
    #[arg(long)]
    pub frames: PathBuf,
    #[arg(long)]
    pub annotations: PathBuf,
    /// Output dataset file; annotations are copied next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10.0)]
    pub cutoff_hz: f64,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub overrides: Overrides,
    /// Sweep precomputed scores (participant_id,date,minute_index,score,label)
    /// instead of running an experiment.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long)]
    pub win: Option<usize>,
    #[arg(long = "threshold")]
    pub thresholds: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub dir: PathBuf,
}

pub fn run_cli(cli: Cli) -> Result<(), Failure> {
    let work = move || match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Features(a) => cmd_features(&a),
        Command::Run(o) => cmd_run(&o).map(|_| ()),
        Command::Sweep(a) => cmd_sweep(&a).map(|_| ()),
        Command::Report(a) => cmd_report(&a).map(|_| ()),
    };
    match cli.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Failure::Usage(format!("cannot start {n} threads: {e}")))?
            .install(work),
        None => work(),
    }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, Failure> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

impl Overrides {
    pub fn resolve(&self) -> Result<ExperimentConfig, Failure> {
        let mut c = load_config(self.config.as_deref())?;
        if let Some(s) = self.strategy {
            c.strategy = s;
        }
        if !self.proportions.is_empty() {
            c.proportions = self.proportions.clone();
        }
        if !self.k_values.is_empty() {
            c.k_values = self.k_values.clone();
        }
        if let Some(s) = self.seed1 {
            c.seed1 = s;
        }
        if !self.seeds2.is_empty() {
            c.seeds2 = self.seeds2.clone();
        }
        if let Some(n) = self.n_folds {
            c.n_folds = n;
        }
        if let Some(o) = &self.out {
            c.output_dir = o.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Data(format!("{}: {e}", path.display()))
}

fn create_dir(path: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(path).map_err(|e| io_failure(path, e))
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::Data(e.to_string()))?;
    text.push('\n');
    write_atomic(path, |w| w.write_all(text.as_bytes()))?;
    Ok(())
}

fn provenance_lines(config: &ExperimentConfig) -> String {
    format!(
        "config_hash={}\nseed1={}\nseeds2={}",
        config.hash(),
        config.seed1,
        config.seeds2.iter().map(u64::to_string).collect::<Vec<_>>().join(";")
    )
}

fn file_sha256(path: &Path) -> Result<String, Failure> {
    let bytes = std::fs::read(path).map_err(|e| io_failure(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SynthManifest {
    pub format: String,
    pub config_hash: String,
    pub seed: u64,
    pub cohort: agitation::synth::CohortConfig,
    pub catalog_version: String,
    pub participant_days: usize,
    pub episodes: usize,
    pub total_minutes: u64,
    pub agitation_minutes: u64,
    pub realized_prevalence: f64,
    pub mean_episode_minutes: Option<f64>,
    pub files: BTreeMap<String, String>,
}

pub fn cmd_synth(args: &SynthArgs) -> Result<(), Failure> {
    let mut config = load_config(args.config.as_deref())?;
    if let Some(o) = &args.out {
        config.output_dir = o.clone();
    }
    config.synth.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let out = &config.output_dir;
    create_dir(out)?;
    let cohort = generate_cohort(&config.synth)?;
    eprintln!("rendering {} participant-days", cohort.days().len());
    let dataset: Dataset = cohort.build_dataset(None, &FeatureCatalog::v1(), &config.pipeline)?;
    let inst = out.join("instances.csv");
    let ann = out.join("annotations.csv");
    let preamble = format!("config_hash={}\nseed={}", config.hash(), config.synth.seed);
    save_dataset_with_preamble(&dataset, &inst, &ann, &preamble)?;
    if args.frames {
        let dir = out.join("frames");
        create_dir(&dir)?;
        for (i, day) in cohort.days().iter().enumerate() {
            let frame = cohort.frame::<f64>(i)?;
            write_frame(&frame, &dir.join(format!("{}_{}.frame", day.key.participant_id, day.key.day)))?;
        }
    }
    let mut files = BTreeMap::new();
    files.insert("instances.csv".to_string(), file_sha256(&inst)?);
    files.insert("annotations.csv".to_string(), file_sha256(&ann)?);
    let manifest = SynthManifest {
        format: "agitation-synth/v1".into(),
        config_hash: config.hash(),
        seed: config.synth.seed,
        cohort: config.synth.clone(),
        catalog_version: CATALOG_VERSION.into(),
        participant_days: cohort.days().len(),
        episodes: cohort.annotations().len(),
        total_minutes: cohort.total_minutes(),
        agitation_minutes: cohort.agitation_minutes(),
        realized_prevalence: cohort.realized_prevalence(),
        mean_episode_minutes: cohort.mean_episode_duration(),
        files,
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    println!(
        "{} instances, {} agitation minutes, realized prevalence {:.4}",
        dataset.len(),
        cohort.agitation_minutes(),
        cohort.realized_prevalence()
    );
    Ok(())
}

pub fn cmd_features(args: &FeaturesArgs) -> Result<(), Failure> {
    let annotations = load_annotations(&args.annotations)?;
    let index = agitation::data::AnnotationIndex::new(&annotations);
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&args.frames)
        .map_err(|e| io_failure(&args.frames, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "frame"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Failure::Data(format!("no .frame files in {}", args.frames.display())));
    }
    let catalog = FeatureCatalog::v1();
    let pipeline = PipelineConfig { cutoff_hz: args.cutoff_hz };
    let mut instances = Vec::new();
    for p in &paths {
        let frame = read_frame::<f64>(p)?;
        instances.extend(frame_to_instances(&frame, &index, None, &catalog, &pipeline)?);
    }
    let dataset = LabeledDataset::new(instances, annotations)?;
    let ann_out = args.out.with_file_name(format!(
        "{}_annotations.csv",
        args.out.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset")
    ));
    let preamble = format!("catalog={CATALOG_VERSION}\ncutoff_hz={}", args.cutoff_hz);
    save_dataset_with_preamble(&dataset, &args.out, &ann_out, &preamble)?;
    println!("{} instances from {} frames", dataset.len(), paths.len());
    Ok(())
}

/// Training dataset plus the labels used for evaluation, when they differ.
fn experiment_data(config: &ExperimentConfig) -> Result<(Dataset, Option<Vec<u8>>), Failure> {
    let dataset: Dataset = match &config.data {
        Some(files) => load_dataset(&files.instances, &files.annotations)?,
        None => {
            let cohort = generate_cohort(&config.synth)?;
            eprintln!("rendering {} participant-days", cohort.days().len());
            cohort.build_dataset(None, &FeatureCatalog::v1(), &config.pipeline)?
        }
    };
    if config.jitter_max_shift == 0 {
        return Ok((dataset, None));
    }
    let truth = dataset.instances().iter().map(|i| i.label.as_u8()).collect();
    let jittered = inject_boundary_jitter(dataset.annotations(), config.jitter_max_shift, config.jitter_seed);
    Ok((dataset.relabel(jittered.annotations)?, Some(truth)))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub instances: usize,
    pub agitation_instances: usize,
    pub participant_days: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReportFile {
    pub format: String,
    pub config_hash: String,
    pub tag: String,
    pub strategy: Strategy,
    pub parameter: f64,
    pub seed1: u64,
    pub seeds2: Vec<u64>,
    pub n_folds: usize,
    pub jitter_max_shift: u32,
    pub dataset: DatasetSummary,
    pub report: CvReport,
}

/// One finished experiment of a batch.
pub struct RunOutcome {
    pub point: Point,
    pub report: CvReport,
    pub report_path: PathBuf,
}

fn write_timings(path: &Path, config: &ExperimentConfig, report: &CvReport) -> Result<(), Failure> {
    let preamble = provenance_lines(config);
    write_atomic(path, |w| {
        for line in preamble.lines() {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "seed,fold,resample_ms,tune_ms,train_ms")?;
        for t in &report.timings {
            writeln!(w, "{},{},{:.3},{:.3},{:.3}", t.seed, t.fold, t.resample_ms, t.tune_ms, t.train_ms)?;
        }
        Ok(())
    })?;
    Ok(())
}

const RUN_INDEX_HEADER: &str = "config_hash,tag,strategy,parameter,mean_auroc,best_f1_original,best_f1_ccr,report";

/// Inserts or replaces the row of `(config_hash, tag)`; rows stay sorted so
/// reruns leave the file unchanged.
fn upsert_run_index(dir: &Path, key: (&str, &str), row: String) -> Result<(), Failure> {
    let path = dir.join(RUN_INDEX);
    let mut rows: BTreeMap<(String, String), String> = BTreeMap::new();
    if path.exists() {
        let text = std::fs::read_to_string(&path).map_err(|e| io_failure(&path, e))?;
        for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
            let mut parts = line.splitn(3, ',');
            let (h, t) = (parts.next().unwrap_or(""), parts.next().unwrap_or(""));
            rows.insert((h.to_string(), t.to_string()), line.to_string());
        }
    }
    rows.insert((key.0.to_string(), key.1.to_string()), row);
    write_atomic(&path, |w| {
        writeln!(w, "{RUN_INDEX_HEADER}")?;
        for line in rows.values() {
            writeln!(w, "{line}")?;
        }
        Ok(())
    })?;
    Ok(())
}

fn best_f1(sweep: &SweepResult) -> (f64, f64) {
    (
        sweep.best_original().map_or(0.0, |r| r.original.f1),
        sweep.best_ccr().map_or(0.0, |r| r.ccr.f1),
    )
}

pub fn cmd_run(overrides: &Overrides) -> Result<Vec<RunOutcome>, Failure> {
    let config = overrides.resolve()?;
    let out = config.output_dir.clone();
    create_dir(&out)?;
    let (dataset, truth) = experiment_data(&config)?;
    let hash = config.hash();
    let summary = || DatasetSummary {
        instances: dataset.len(),
        agitation_instances: dataset.count(agitation::data::Label::Agitation),
        participant_days: dataset.day_keys().len(),
    };
    let mut outcomes = Vec::new();
    for point in config.points() {
        let tag = point.tag();
        eprintln!("running {tag}");
        let report = run_cv_experiment(&dataset, &config.cv_settings(point), truth.as_deref())?;
        let file = ReportFile {
            format: REPORT_FORMAT.into(),
            config_hash: hash.clone(),
            tag: tag.clone(),
            strategy: point.strategy,
            parameter: point.value,
            seed1: config.seed1,
            seeds2: config.seeds2.clone(),
            n_folds: config.n_folds,
            jitter_max_shift: config.jitter_max_shift,
            dataset: summary(),
            report,
        };
        let report_path = out.join(format!("report_{tag}.json"));
        write_json(&report_path, &file)?;
        write_timings(&out.join(format!("timings_{tag}.csv")), &config, &file.report)?;
        let (f1_o, f1_c) = best_f1(&file.report.sweep);
        let row = format!(
            "{hash},{tag},{},{},{:.6},{:.6},{:.6},report_{tag}.json",
            point.strategy, point.value, file.report.mean_auroc, f1_o, f1_c
        );
        upsert_run_index(&out, (&hash, &tag), row)?;
        println!(
            "{tag}: mean AUROC {:.4}, best F1 original {:.4}, CCR {:.4}, mean fit {:.0} ms",
            file.report.mean_auroc,
            f1_o,
            f1_c,
            file.report.mean_train_ms()
        );
        outcomes.push(RunOutcome { point, report: file.report, report_path });
    }
    Ok(outcomes)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SweepSummary {
    pub format: String,
    pub config_hash: String,
    pub win: usize,
    pub best_original: Option<SweepRow>,
    pub best_ccr: Option<SweepRow>,
    pub effective_range: EffectiveRange,
}

/// Scores and labels of a score file, with the per-day chronological order.
fn read_scores(path: &Path) -> Result<(Vec<f64>, Vec<u8>, Vec<Vec<usize>>), Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().filter(|l| !l.starts_with('#')).skip(1).enumerate() {
        let bad = |m: &str| Failure::Data(format!("{}: row {}: {m}", path.display(), i + 1));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(bad("expected participant_id,date,minute_index,score,label"));
        }
        let minute: u32 = f[2].trim().parse().map_err(|_| bad("bad minute_index"))?;
        let score: f64 = f[3].trim().parse().map_err(|_| bad("bad score"))?;
        let label: u8 = match f[4].trim() {
            "0" => 0,
            "1" => 1,
            _ => return Err(bad("label must be 0 or 1")),
        };
        if !(0.0..=1.0).contains(&score) {
            return Err(bad("score outside [0, 1]"));
        }
        rows.push(((f[0].to_string(), f[1].to_string()), minute, score, label));
    }
    let mut days: BTreeMap<(String, String), Vec<usize>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        days.entry(r.0.clone()).or_default().push(i);
    }
    let days = days
        .into_values()
        .map(|mut d| {
            d.sort_by_key(|&i| rows[i].1);
            d
        })
        .collect();
    Ok((rows.iter().map(|r| r.2).collect(), rows.iter().map(|r| r.3).collect(), days))
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<SweepSummary, Failure> {
    let mut config = args.overrides.resolve()?;
    if let Some(w) = args.win {
        config.win = w;
    }
    if !args.thresholds.is_empty() {
        config.thresholds = args.thresholds.clone();
    }
    config.validate()?;
    let out = config.output_dir.clone();
    create_dir(&out)?;
    let (sweep, name) = match &args.scores {
        Some(path) => {
            let (scores, truth, days) = read_scores(path)?;
            (sweep_thresholds(&scores, &truth, &days, &config.thresholds, config.win)?, "sweep".to_string())
        }
        None => {
            let point = config.points()[0];
            let (dataset, truth) = experiment_data(&config)?;
            eprintln!("running {}", point.tag());
            let report = run_cv_experiment(&dataset, &config.cv_settings(point), truth.as_deref())?;
            (report.sweep, format!("sweep_{}", point.tag()))
        }
    };
    sweep.write_csv(&out.join(format!("{name}.csv")), &provenance_lines(&config))?;
    let summary = SweepSummary {
        format: "agitation-sweep/v1".into(),
        config_hash: config.hash(),
        win: config.win,
        best_original: sweep.best_original().cloned(),
        best_ccr: sweep.best_ccr().cloned(),
        effective_range: effective_threshold_range(&sweep),
    };
    write_json(&out.join(format!("{name}.json")), &summary)?;
    if let (Some(o), Some(c)) = (&summary.best_original, &summary.best_ccr) {
        println!(
            "original: best F1 {:.4} at {}; CCR: best F1 {:.4} at {}; effective range {}",
            o.original.f1,
            o.threshold,
            c.ccr.f1,
            c.threshold,
            match summary.effective_range.range {
                Some((lo, hi)) => format!("[{lo}, {hi}]"),
                None => "empty".into(),
            }
        );
    }
    Ok(summary)
}

pub fn cmd_report(args: &ReportArgs) -> Result<String, Failure> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&args.dir)
        .map_err(|e| io_failure(&args.dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("report_") && n.ends_with(".json"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Failure::Data(format!("no report files in {}", args.dir.display())));
    }
    let mut table = String::from(
        "tag,strategy,parameter,mean_auroc,seed_aurocs,best_f1_original,th_original,best_f1_ccr,th_ccr,effective_lo,effective_hi\n",
    );
    let mut timing = String::from("tag,mean_resample_ms,mean_tune_ms,mean_train_ms\n");
    for p in &paths {
        let text = std::fs::read_to_string(p).map_err(|e| io_failure(p, e))?;
        let f: ReportFile =
            serde_json::from_str(&text).map_err(|e| Failure::Data(format!("{}: {e}", p.display())))?;
        let r = &f.report;
        let seeds: Vec<String> = r.seeds.iter().map(|s| format!("{:.6}", s.mean_auroc)).collect();
        let (o, c) = (r.sweep.best_original(), r.sweep.best_ccr());
        let (lo, hi) = r.effective_range.range.map_or((String::new(), String::new()), |(a, b)| (a.to_string(), b.to_string()));
        table += &format!(
            "{},{},{},{:.6},{},{:.6},{},{:.6},{},{},{}\n",
            f.tag,
            f.strategy,
            f.parameter,
            r.mean_auroc,
            seeds.join(";"),
            o.map_or(0.0, |x| x.original.f1),
            o.map_or(String::new(), |x| x.threshold.to_string()),
            c.map_or(0.0, |x| x.ccr.f1),
            c.map_or(String::new(), |x| x.threshold.to_string()),
            lo,
            hi
        );
        let tpath = args.dir.join(format!("timings_{}.csv", f.tag));
        if let Ok(t) = std::fs::read_to_string(&tpath) {
            let rows: Vec<Vec<f64>> = t
                .lines()
                .filter(|l| !l.starts_with('#'))
                .skip(1)
                .map(|l| l.split(',').skip(2).filter_map(|v| v.parse().ok()).collect())
                .collect();
            let n = rows.len().max(1) as f64;
            let mean = |k: usize| rows.iter().map(|r| r.get(k).copied().unwrap_or(0.0)).sum::<f64>() / n;
            timing += &format!("{},{:.3},{:.3},{:.3}\n", f.tag, mean(0), mean(1), mean(2));
        }
    }
    write_atomic(&args.dir.join("summary.csv"), |w| w.write_all(table.as_bytes()))?;
    write_atomic(&args.dir.join("timing_summary.csv"), |w| w.write_all(timing.as_bytes()))?;
    print!("{table}");
    Ok(table)
}
