//! Command-line front end for the `ttaverify` engine.

pub mod error;
pub mod report;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;
use ttaverify::manifest::{self, blob_path};
use ttaverify::pipeline::{coverage_gaps, plan_pairs, score_pairs, verify_scores, ScoringMode};
use ttaverify::protocol::{compare_runs, DEFAULT_FOLDS};
use ttaverify::records::{parse_plan_file, parse_score_file, write_lines, PlanRecord, ScoreRecord};
use ttaverify::synthworld::{
    generate_world_with, run_ablation, run_flip_ablation, AnimatorMode, SyntheticWorldConfig,
};
use ttaverify::{AggregationWeights, FallbackPolicy, Manifest};

pub use error::CliError;
use report::{
    AblateFlipReport, AblateWeightsReport, CompareReport, InputDigest, Inputs, ResolvedConfig, RunSummary,
    VerifyReport, REPORT_VERSION,
};

#[derive(Debug, Parser)]
#[command(name = "ttaverify", version, about = "Pose-aligned test-time augmentation for face verification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write one augmentation plan line per manifest pair.
    Plan(PlanArgs),
    /// Score every pair of a manifest according to a plan.
    Aggregate(AggregateArgs),
    /// Evaluate a score file with the k-fold protocol.
    Verify(VerifyArgs),
    /// Accuracy deltas between two verify reports.
    Compare(CompareArgs),
    /// Generate a synthetic world manifest.
    Simulate(SimulateArgs),
    /// Sweep aggregation weights over seeds of a synthetic world.
    AblateWeights(AblateWeightsArgs),
    /// Compare honoring and ignoring the source flip over seeds.
    AblateFlip(AblateFlipArgs),
    /// plan, coverage check, aggregate and verify in one run.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Strict,
    RealFallback,
}

impl From<PolicyArg> for FallbackPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Strict => FallbackPolicy::Strict,
            PolicyArg::RealFallback => FallbackPolicy::RealFallback,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    /// Plan-driven weighted aggregation.
    Tta,
    /// Original and flipped views only.
    Baseline,
}

#[derive(Debug, Args)]
pub struct WeightArgs {
    #[arg(long, default_value_t = 0.75)]
    pub w_real: f64,
    #[arg(long, default_value_t = 0.25)]
    pub w_syn: f64,
}

impl WeightArgs {
    fn resolve(&self) -> Result<AggregationWeights, CliError> {
        AggregationWeights::new(self.w_real, self.w_syn).map_err(|e| CliError::validation(e.to_string()))
    }
}

#[derive(Debug, Args)]
pub struct ScoringArgs {
    #[command(flatten)]
    pub weights: WeightArgs,
    #[arg(long, value_enum, default_value_t = PolicyArg::RealFallback)]
    pub policy: PolicyArg,
    #[arg(long, value_enum, default_value_t = ModeArg::Tta)]
    pub mode: ModeArg,
    /// Worker threads for pair scoring (0 = one per core).
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
}

#[derive(Debug, Args)]
pub struct WorldArgs {
    /// Plain-text `key = value` world config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one config key, e.g. `--set dim=32`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub plan: PathBuf,
    #[command(flatten)]
    pub scoring: ScoringArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    pub folds: usize,
    /// Row label in the summary table (default: score file stem).
    #[arg(long)]
    pub label: Option<String>,
    /// Report path; the report goes to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Report of the method under test.
    pub candidate: PathBuf,
    /// Report of the reference method.
    pub reference: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub world: WorldArgs,
    /// Simulate an extractor that never mirrors the source.
    #[arg(long)]
    pub ignore_flip: bool,
    /// Index path; the blob is written next to it with a `.bin` extension.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblateWeightsArgs {
    #[command(flatten)]
    pub world: WorldArgs,
    /// Seeds as `a..b`, `a..=b` or a comma list.
    #[arg(long, default_value = "0..20")]
    pub seeds: String,
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateFlipArgs {
    #[command(flatten)]
    pub world: WorldArgs,
    #[command(flatten)]
    pub weights: WeightArgs,
    #[arg(long, default_value = "0..20")]
    pub seeds: String,
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub scoring: ScoringArgs,
    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    pub folds: usize,
    /// Output directory for plan.jsonl, scores.jsonl and report.json.
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `a..b`, `a..=b`, a single seed or a comma-separated list.
pub fn parse_seeds(spec: &str) -> Result<Vec<u64>, String> {
    let num = |s: &str| {
        s.trim()
            .parse::<u64>()
            .map_err(|e| format!("bad seed {s:?}: {e}"))
    };
    let seeds: Vec<u64> = if let Some((a, b)) = spec.split_once("..=") {
        (num(a)?..=num(b)?).collect()
    } else if let Some((a, b)) = spec.split_once("..") {
        (num(a)?..num(b)?).collect()
    } else {
        spec.split(',').map(num).collect::<Result<_, _>>()?
    };
    if seeds.is_empty() {
        return Err(format!("seed list {spec:?} is empty"));
    }
    let mut sorted = seeds.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != seeds.len() {
        return Err(format!("seed list {spec:?} repeats a seed"));
    }
    Ok(seeds)
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

fn read_text(path: &Path) -> Result<(String, Vec<u8>), CliError> {
    let bytes = read_bytes(path)?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| CliError::validation(format!("{}: not valid UTF-8", path.display())))?;
    Ok((text, bytes))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

struct LoadedManifest {
    manifest: Manifest,
    inputs: Inputs,
    dataset: String,
}

fn load_manifest(path: &Path) -> Result<LoadedManifest, CliError> {
    let (text, index_bytes) = read_text(path)?;
    let blob = blob_path(path);
    let blob_bytes = fs::read(&blob).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::from_manifest(path, manifest::ManifestError::MissingBlob(blob.clone()))
        } else {
            CliError::io(&blob, e)
        }
    })?;
    let manifest = manifest::decode(&text, &blob_bytes).map_err(|e| CliError::from_manifest(path, e))?;
    let dataset = manifest
        .metadata
        .get("dataset")
        .cloned()
        .or_else(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "dataset".into());
    let inputs = [
        ("manifest".to_string(), InputDigest::new(path, &index_bytes)),
        ("manifest_blob".to_string(), InputDigest::new(&blob, &blob_bytes)),
    ]
    .into();
    Ok(LoadedManifest {
        manifest,
        inputs,
        dataset,
    })
}

fn load_world_config(args: &WorldArgs, inputs: &mut Inputs) -> Result<SyntheticWorldConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let (text, bytes) = read_text(path)?;
            inputs.insert("world_config".into(), InputDigest::new(path, &bytes));
            SyntheticWorldConfig::parse(&text).map_err(CliError::from_world)?
        }
        None => SyntheticWorldConfig::default(),
    };
    for o in &args.overrides {
        cfg.apply_override(o).map_err(CliError::from_world)?;
    }
    cfg.validate().map_err(CliError::from_world)?;
    Ok(cfg)
}

fn world_config_echo(cfg: &SyntheticWorldConfig, config: &mut ResolvedConfig) {
    for (k, v) in cfg.entries() {
        config.insert(format!("world.{k}"), Value::from(v));
    }
}

fn scoring_mode(args: &ScoringArgs) -> Result<ScoringMode, CliError> {
    Ok(match args.mode {
        ModeArg::Tta => ScoringMode::Tta(args.weights.resolve()?),
        ModeArg::Baseline => ScoringMode::Baseline,
    })
}

fn scoring_echo(args: &ScoringArgs, config: &mut ResolvedConfig) {
    let policy: FallbackPolicy = args.policy.into();
    config.insert("mode".into(), Value::from(format!("{:?}", args.mode).to_lowercase()));
    config.insert("policy".into(), Value::from(policy.to_string()));
    if args.mode == ModeArg::Tta {
        config.insert("w_real".into(), Value::from(args.weights.w_real));
        config.insert("w_syn".into(), Value::from(args.weights.w_syn));
    }
}

fn scoring_label(args: &ScoringArgs) -> String {
    match args.mode {
        ModeArg::Tta => format!("TTA w_real={:.2} w_syn={:.2}", args.weights.w_real, args.weights.w_syn),
        ModeArg::Baseline => "No TTA".into(),
    }
}

/// Sidecar next to a JSON-lines output recording how it was produced.
fn write_sidecar(out: &Path, command: &str, config: &ResolvedConfig, inputs: &Inputs) -> Result<(), CliError> {
    let mut name = out.as_os_str().to_owned();
    name.push(".meta.json");
    let meta = serde_json::json!({
        "command": command,
        "config": config,
        "inputs": inputs,
        "version": REPORT_VERSION,
    });
    write_file(Path::new(&name), report::to_json(&meta).as_bytes())
}

fn emit(out: Option<&Path>, json: &str, table: &str, stdout: &mut dyn Write) -> Result<(), CliError> {
    let io_err = |e| CliError::io(Path::new("<stdout>"), e);
    match out {
        Some(path) => {
            write_file(path, json.as_bytes())?;
            stdout.write_all(table.as_bytes()).map_err(io_err)
        }
        None => stdout.write_all(json.as_bytes()).map_err(io_err),
    }
}

fn score_with_checks(
    m: &Manifest,
    plans: &[PlanRecord],
    args: &ScoringArgs,
) -> Result<Vec<ScoreRecord>, CliError> {
    let policy: FallbackPolicy = args.policy.into();
    let mode = scoring_mode(args)?;
    if policy == FallbackPolicy::Strict && args.mode == ModeArg::Tta {
        let gaps = coverage_gaps(m, plans).map_err(|e| CliError::from_pipeline(e, policy))?;
        if !gaps.is_empty() {
            return Err(CliError::from_pipeline(
                ttaverify::pipeline::PipelineError::CoverageGap(gaps),
                policy,
            ));
        }
    }
    score_pairs(m, plans, mode, policy, args.workers).map_err(|e| CliError::from_pipeline(e, policy))
}

fn verify_report(
    command: &str,
    loaded: &LoadedManifest,
    scores: &[ScoreRecord],
    folds: usize,
    label: String,
    mut config: ResolvedConfig,
    inputs: Inputs,
) -> Result<VerifyReport, CliError> {
    let run = verify_scores(&loaded.manifest, scores, folds)
        .map_err(|e| CliError::from_pipeline(e, FallbackPolicy::RealFallback))?;
    config.insert("folds".into(), Value::from(folds));
    let result = RunSummary::from_run(&run);
    Ok(VerifyReport {
        version: REPORT_VERSION,
        command: command.into(),
        dataset: loaded.dataset.clone(),
        table: VerifyReport::table_for(&loaded.dataset, &label, &result),
        label,
        config,
        inputs,
        result,
    })
}

fn cmd_plan(a: &PlanArgs) -> Result<(), CliError> {
    let loaded = load_manifest(&a.manifest)?;
    let plans = plan_pairs(&loaded.manifest).map_err(|e| CliError::from_pipeline(e, FallbackPolicy::Strict))?;
    write_file(&a.out, write_lines(&plans).as_bytes())?;
    write_sidecar(&a.out, "plan", &ResolvedConfig::new(), &loaded.inputs)
}

fn cmd_aggregate(a: &AggregateArgs) -> Result<(), CliError> {
    let loaded = load_manifest(&a.manifest)?;
    let (text, bytes) = read_text(&a.plan)?;
    let plans = parse_plan_file(&text).map_err(|e| CliError::from_records(&a.plan, e))?;
    let scores = score_with_checks(&loaded.manifest, &plans, &a.scoring)?;
    write_file(&a.out, write_lines(&scores).as_bytes())?;
    let mut inputs = loaded.inputs;
    inputs.insert("plan".into(), InputDigest::new(&a.plan, &bytes));
    let mut config = ResolvedConfig::new();
    scoring_echo(&a.scoring, &mut config);
    write_sidecar(&a.out, "aggregate", &config, &inputs)
}

fn cmd_verify(a: &VerifyArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let loaded = load_manifest(&a.manifest)?;
    let (text, bytes) = read_text(&a.scores)?;
    let scores = parse_score_file(&text).map_err(|e| CliError::from_records(&a.scores, e))?;
    let mut inputs = loaded.inputs.clone();
    inputs.insert("scores".into(), InputDigest::new(&a.scores, &bytes));
    let label = a.label.clone().unwrap_or_else(|| {
        a.scores
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "scores".into())
    });
    let report = verify_report("verify", &loaded, &scores, a.folds, label, ResolvedConfig::new(), inputs)?;
    emit(a.out.as_deref(), &report::to_json(&report), &report.table, stdout)
}

fn cmd_compare(a: &CompareArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let load = |p: &Path| -> Result<(VerifyReport, InputDigest), CliError> {
        let (text, bytes) = read_text(p)?;
        let r = report::parse_verify_report(&text)
            .map_err(|e| CliError::validation(format!("{}: {e}", p.display())))?;
        Ok((r, InputDigest::new(p, &bytes)))
    };
    let (cand, cand_digest) = load(&a.candidate)?;
    let (reference, ref_digest) = load(&a.reference)?;
    if cand.dataset != reference.dataset {
        return Err(CliError::validation(format!(
            "reports are for different datasets: {:?} vs {:?}",
            cand.dataset, reference.dataset
        )));
    }
    let delta = compare_runs(&cand.result.to_run(), &reference.result.to_run()).map_err(CliError::from_protocol)?;
    let table = report::compare_table(
        &cand.dataset,
        (&cand.label, cand.result.mean_accuracy_pct),
        (&reference.label, reference.result.mean_accuracy_pct),
        delta.mean_delta_pp,
    );
    let out = CompareReport {
        version: REPORT_VERSION,
        command: "compare".into(),
        dataset: cand.dataset.clone(),
        candidate: cand.label,
        reference: reference.label,
        inputs: [("candidate".to_string(), cand_digest), ("reference".to_string(), ref_digest)].into(),
        delta,
        table,
    };
    emit(a.out.as_deref(), &report::to_json(&out), &out.table, stdout)
}

fn cmd_simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let mut inputs = Inputs::new();
    let cfg = load_world_config(&a.world, &mut inputs)?;
    let mode = if a.ignore_flip {
        AnimatorMode::IgnoreFlip
    } else {
        AnimatorMode::HonorFlip
    };
    let world = generate_world_with(&cfg, mode).map_err(CliError::from_world)?;
    let (text, blob) = manifest::encode(&world).map_err(|e| CliError::from_manifest(&a.out, e))?;
    write_file(&a.out, text.as_bytes())?;
    write_file(&blob_path(&a.out), &blob)
}

fn with_pool<T>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T, CliError>
where
    T: Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::computation(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

fn cmd_ablate_weights(a: &AblateWeightsArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let mut inputs = Inputs::new();
    let cfg = load_world_config(&a.world, &mut inputs)?;
    let seeds = parse_seeds(&a.seeds).map_err(CliError::validation)?;
    let grid = AggregationWeights::ablation_grid();
    let table = with_pool(a.workers, || run_ablation(&cfg, &grid, &seeds, 1))?.map_err(CliError::from_world)?;
    let mut config = ResolvedConfig::new();
    world_config_echo(&cfg, &mut config);
    config.insert("seeds".into(), Value::from(seeds.clone()));
    config.insert("folds".into(), Value::from(DEFAULT_FOLDS));
    config.insert("policy".into(), Value::from(FallbackPolicy::Strict.to_string()));
    let baseline_mean_accuracy =
        table.baseline_per_seed.iter().sum::<f64>() / table.baseline_per_seed.len() as f64;
    let text = report::weights_table(&table);
    let out = AblateWeightsReport {
        version: REPORT_VERSION,
        command: "ablate-weights".into(),
        config,
        inputs,
        result: table,
        baseline_mean_accuracy,
        table: text,
    };
    emit(a.out.as_deref(), &report::to_json(&out), &out.table, stdout)
}

fn cmd_ablate_flip(a: &AblateFlipArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let mut inputs = Inputs::new();
    let cfg = load_world_config(&a.world, &mut inputs)?;
    let seeds = parse_seeds(&a.seeds).map_err(CliError::validation)?;
    let weights = a.weights.resolve()?;
    let result =
        with_pool(a.workers, || run_flip_ablation(&cfg, weights, &seeds, 1))?.map_err(CliError::from_world)?;
    let mut config = ResolvedConfig::new();
    world_config_echo(&cfg, &mut config);
    config.insert("seeds".into(), Value::from(seeds.clone()));
    config.insert("folds".into(), Value::from(DEFAULT_FOLDS));
    config.insert("policy".into(), Value::from(FallbackPolicy::Strict.to_string()));
    config.insert("w_real".into(), Value::from(weights.w_real()));
    config.insert("w_syn".into(), Value::from(weights.w_syn()));
    let out = AblateFlipReport {
        version: REPORT_VERSION,
        command: "ablate-flip".into(),
        config,
        inputs,
        mean_with_flip: result.mean_with_flip(),
        mean_without_flip: result.mean_without_flip(),
        mean_baseline: result.mean_baseline(),
        flip_win_rate: result.flip_win_rate(),
        table: report::flip_table(&result),
        result,
    };
    emit(a.out.as_deref(), &report::to_json(&out), &out.table, stdout)
}

fn cmd_pipeline(a: &PipelineArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let loaded = load_manifest(&a.manifest)?;
    let policy: FallbackPolicy = a.scoring.policy.into();
    let plans = plan_pairs(&loaded.manifest).map_err(|e| CliError::from_pipeline(e, policy))?;
    let scores = score_with_checks(&loaded.manifest, &plans, &a.scoring)?;
    let mut config = ResolvedConfig::new();
    scoring_echo(&a.scoring, &mut config);
    let report = verify_report(
        "pipeline",
        &loaded,
        &scores,
        a.folds,
        scoring_label(&a.scoring),
        config,
        loaded.inputs.clone(),
    )?;
    fs::create_dir_all(&a.out).map_err(|e| CliError::io(&a.out, e))?;
    write_file(&a.out.join("plan.jsonl"), write_lines(&plans).as_bytes())?;
    write_file(&a.out.join("scores.jsonl"), write_lines(&scores).as_bytes())?;
    write_file(&a.out.join("report.json"), report::to_json(&report).as_bytes())?;
    stdout
        .write_all(report.table.as_bytes())
        .map_err(|e| CliError::io(Path::new("<stdout>"), e))
}

/// Runs one parsed command, writing human-readable output to `stdout`.
pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Plan(a) => cmd_plan(a),
        Command::Aggregate(a) => cmd_aggregate(a),
        Command::Verify(a) => cmd_verify(a, stdout),
        Command::Compare(a) => cmd_compare(a, stdout),
        Command::Simulate(a) => cmd_simulate(a),
        Command::AblateWeights(a) => cmd_ablate_weights(a, stdout),
        Command::AblateFlip(a) => cmd_ablate_flip(a, stdout),
        Command::Pipeline(a) => cmd_pipeline(a, stdout),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_specs() {
        assert_eq!(parse_seeds("0..3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("2..=4").unwrap(), vec![2, 3, 4]);
        assert_eq!(parse_seeds("7, 1,3").unwrap(), vec![7, 1, 3]);
        assert_eq!(parse_seeds("5").unwrap(), vec![5]);
        assert!(parse_seeds("3..3").is_err());
        assert!(parse_seeds("1,1").is_err());
        assert!(parse_seeds("a..b").is_err());
        assert!(parse_seeds("").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
