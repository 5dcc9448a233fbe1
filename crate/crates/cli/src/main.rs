//! Command-line front end: runs the pipeline or individual stages from a
//! JSON config, writing checkpoints, traces, reports, and a manifest with
//! content hashes into the output directory.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or config error.

mod manifest;
mod overrides;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use manifest::ManifestBuilder;
use unlearn_core::checkpoint::{load_checkpoint, save_checkpoint};
use unlearn_core::config::ResolvedConfig;
use unlearn_core::data::{partition_forget, Dataset};
use unlearn_core::error::Error as CoreError;
use unlearn_core::eval::{
    compare_methods, emit_report, emit_trace, evaluate, render_class_report_csv, render_trace_csv,
    ComparisonSummary, EvalReport, RecoveryTrace, ReportFormat,
};
use unlearn_core::net::Network;
use unlearn_core::unlearn::{
    knowledge_erase, reconstruct, retrain_baseline, train_original, unlearn_pipeline, EvalProbe,
    StageTrace,
};

#[derive(Parser)]
#[command(
    name = "unlearn",
    version,
    about = "Train, erase, reconstruct, and evaluate class-forgetting experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override a resolved config value by dotted key, e.g. unlearn.alpha=0.5.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (overrides the config's out_dir).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the original model on the full dataset.
    Train(CommonArgs),
    /// Erase the forget set from a trained model via the stochastic teacher.
    Erase {
        #[command(flatten)]
        common: CommonArgs,
        /// Trained-model checkpoint (default: <out_dir>/m_d.unlf).
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Rebuild accuracy on the remaining data from the erased model.
    Reconstruct {
        #[command(flatten)]
        common: CommonArgs,
        /// Erased-model checkpoint (default: <out_dir>/m_u_scratch.unlf).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Teacher checkpoint (default: <out_dir>/m_d.unlf).
        #[arg(long)]
        teacher: Option<PathBuf>,
    },
    /// Train the retrain baseline on the remaining data only.
    Retrain(CommonArgs),
    /// Run every stage end to end.
    Pipeline(CommonArgs),
    /// Evaluate a checkpoint on the test set.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        /// Checkpoint to evaluate.
        #[arg(long)]
        model: PathBuf,
        /// Model id used in the report (default: checkpoint file stem).
        #[arg(long)]
        id: Option<String>,
    },
    /// Regenerate combined reports from a finished run's artifacts.
    Report(CommonArgs),
}

enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

/// Parse, resolve, override, and validate the config. Failures here are
/// usage errors (exit 2).
fn load_config(common: &CommonArgs) -> Result<ResolvedConfig, CliError> {
    let cfg = ResolvedConfig::from_file(&common.config)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let mut cfg = overrides::apply_overrides(cfg, &common.set).map_err(CliError::Usage)?;
    if let Some(dir) = &common.out_dir {
        cfg.out_dir = dir.display().to_string();
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn runtime(e: impl ToString) -> CliError {
    CliError::Runtime(e.to_string())
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Train(common) => run_stage(&common, "train", cmd_train),
        Command::Erase { common, model } => run_stage(&common, "erase", move |ctx| {
            cmd_erase(ctx, model.as_deref())
        }),
        Command::Reconstruct {
            common,
            model,
            teacher,
        } => run_stage(&common, "reconstruct", move |ctx| {
            cmd_reconstruct(ctx, model.as_deref(), teacher.as_deref())
        }),
        Command::Retrain(common) => run_stage(&common, "retrain", cmd_retrain),
        Command::Pipeline(common) => run_stage(&common, "pipeline", cmd_pipeline),
        Command::Eval { common, model, id } => run_stage(&common, "eval", move |ctx| {
            cmd_eval(ctx, &model, id.as_deref())
        }),
        Command::Report(common) => run_stage(&common, "report", cmd_report),
    }
}

struct StageCtx<'a> {
    cfg: &'a ResolvedConfig,
    out_dir: &'a Path,
    manifest: &'a mut ManifestBuilder,
}

/// Shared command wrapper: load config, prepare the output directory, run
/// the body, and finish the manifest as complete or incomplete.
fn run_stage<F>(common: &CommonArgs, name: &str, body: F) -> Result<(), CliError>
where
    F: FnOnce(&mut StageCtx) -> Result<(), CoreError>,
{
    let cfg = load_config(common)?;
    let out_dir = PathBuf::from(&cfg.out_dir);
    fs::create_dir_all(&out_dir).map_err(runtime)?;

    let config_value = serde_json::to_value(&cfg).map_err(runtime)?;
    let mut builder = ManifestBuilder::new(name, config_value.clone());
    fs::write(
        out_dir.join("resolved_config.json"),
        serde_json::to_string_pretty(&config_value).map_err(runtime)? + "\n",
    )
    .map_err(runtime)?;
    builder
        .add_file(&out_dir, "resolved_config.json", "config")
        .map_err(runtime)?;

    let mut ctx = StageCtx {
        cfg: &cfg,
        out_dir: &out_dir,
        manifest: &mut builder,
    };
    match body(&mut ctx) {
        Ok(()) => {
            builder.write_complete(&out_dir).map_err(runtime)?;
            println!("done: artifacts and manifest written to {}", out_dir.display());
            Ok(())
        }
        Err(e) => {
            let msg = e.to_string();
            let _ = builder.write_incomplete(&out_dir, &msg);
            Err(CliError::Runtime(msg))
        }
    }
}

fn print_trace(trace: &StageTrace) {
    for r in &trace.epochs {
        let mut line = format!("[{}] epoch {}", trace.stage, r.epoch);
        if let Some(ce) = r.loss_ce {
            line += &format!(" ce={ce:.4}");
        }
        if let Some(kl) = r.loss_kl {
            line += &format!(" kl={kl:.4}");
        }
        if let Some(eval) = &r.eval {
            line += &format!(" remaining={:.2}%", eval.remaining_avg * 100.0);
            if let Some(f) = eval.forgotten_avg {
                line += &format!(" forgotten={f:.2}%", f = f * 100.0);
            }
        }
        line += &format!(" ({:.1}s)", r.wall_seconds);
        println!("{line}");
    }
}

fn canonical_trace_json(trace: &StageTrace) -> Vec<u8> {
    let mut canonical = trace.clone();
    for e in &mut canonical.epochs {
        e.wall_seconds = 0.0;
    }
    (serde_json::to_string_pretty(&canonical).expect("trace serializes") + "\n").into_bytes()
}

fn write_stage_trace(ctx: &mut StageCtx, trace: &StageTrace) -> Result<(), CoreError> {
    let json_name = format!("trace_{}.json", trace.stage);
    fs::write(
        ctx.out_dir.join(&json_name),
        serde_json::to_string_pretty(trace)? + "\n",
    )?;
    ctx.manifest
        .add_canonical(&json_name, "trace", &canonical_trace_json(trace));

    if let Ok(recovery) = trace.to_recovery_trace() {
        let csv_name = format!("trace_{}.csv", trace.stage);
        let traces = [recovery];
        emit_trace(&traces, ctx.out_dir.join(&csv_name), ReportFormat::Csv)?;
        ctx.manifest.add_canonical(
            &csv_name,
            "trace",
            render_trace_csv(&traces, true).as_bytes(),
        );
    }
    Ok(())
}

fn write_checkpoint_artifact(
    ctx: &mut StageCtx,
    name: &str,
    net: &Network,
) -> Result<(), CoreError> {
    let file = format!("{name}.unlf");
    save_checkpoint(net, ctx.out_dir.join(&file))?;
    ctx.manifest.add_file(ctx.out_dir, &file, "checkpoint")?;
    Ok(())
}

fn write_eval_report(ctx: &mut StageCtx, report: &EvalReport) -> Result<(), CoreError> {
    let file = format!("report_{}.json", report.model_id);
    fs::write(
        ctx.out_dir.join(&file),
        serde_json::to_string_pretty(report)? + "\n",
    )?;
    ctx.manifest.add_file(ctx.out_dir, &file, "report")?;
    println!(
        "[{}] remaining={:.2}%{}",
        report.model_id,
        report.remaining_avg * 100.0,
        report
            .forgotten_avg
            .map_or(String::new(), |f| format!(" forgotten={:.2}%", f * 100.0))
    );
    Ok(())
}

fn load_data_and_probe(cfg: &ResolvedConfig) -> Result<(Dataset, Dataset, BTreeSet<usize>), CoreError> {
    let (train, test) = cfg.load_datasets()?;
    let forgotten = cfg.forgotten_classes();
    Ok((train, test, forgotten))
}

fn cmd_train(ctx: &mut StageCtx) -> Result<(), CoreError> {
    let (train, test, forgotten) = load_data_and_probe(ctx.cfg)?;
    let pipeline_cfg = ctx.cfg.pipeline_config();
    let probe = EvalProbe {
        test: &test,
        forgotten: &forgotten,
    };
    let mut model = unlearn_core::net::build_conv_net(train.input_shape(), train.num_classes())?;
    model.init_random(pipeline_cfg.train.seed);
    let (m_d, trace) = train_original(&train, model, &pipeline_cfg.train, Some(&probe))?;
    print_trace(&trace);
    write_checkpoint_artifact(ctx, "m_d", &m_d)?;
    write_stage_trace(ctx, &trace)?;
    write_eval_report(ctx, &evaluate(&m_d, &test, &forgotten, "original")?)?;
    Ok(())
}

fn cmd_erase(ctx: &mut StageCtx, model: Option<&Path>) -> Result<(), CoreError> {
    let (train, test, forgotten) = load_data_and_probe(ctx.cfg)?;
    let pipeline_cfg = ctx.cfg.pipeline_config();
    let default_model = ctx.out_dir.join("m_d.unlf");
    let m_d = load_checkpoint(model.unwrap_or(&default_model))?;
    let partition = partition_forget(&train, &pipeline_cfg.forget)?;
    let probe = EvalProbe {
        test: &test,
        forgotten: &forgotten,
    };
    let (m_u, trace) = knowledge_erase(&m_d, &partition.forget, &pipeline_cfg.unlearn, Some(&probe))?;
    print_trace(&trace);
    write_checkpoint_artifact(ctx, "m_u_scratch", &m_u)?;
    write_stage_trace(ctx, &trace)?;
    write_eval_report(ctx, &evaluate(&m_u, &test, &forgotten, "scratch")?)?;
    Ok(())
}

fn cmd_reconstruct(
    ctx: &mut StageCtx,
    model: Option<&Path>,
    teacher: Option<&Path>,
) -> Result<(), CoreError> {
    let (train, test, forgotten) = load_data_and_probe(ctx.cfg)?;
    let pipeline_cfg = ctx.cfg.pipeline_config();
    let default_model = ctx.out_dir.join("m_u_scratch.unlf");
    let default_teacher = ctx.out_dir.join("m_d.unlf");
    let m_u = load_checkpoint(model.unwrap_or(&default_model))?;
    let m_d = load_checkpoint(teacher.unwrap_or(&default_teacher))?;
    let partition = partition_forget(&train, &pipeline_cfg.forget)?;
    let probe = EvalProbe {
        test: &test,
        forgotten: &forgotten,
    };
    let (m_u, trace) = reconstruct(m_u, &m_d, &partition.remain, &pipeline_cfg.unlearn, Some(&probe))?;
    print_trace(&trace);
    write_checkpoint_artifact(ctx, "m_u_final", &m_u)?;
    write_stage_trace(ctx, &trace)?;
    write_eval_report(ctx, &evaluate(&m_u, &test, &forgotten, "ours")?)?;
    Ok(())
}

fn cmd_retrain(ctx: &mut StageCtx) -> Result<(), CoreError> {
    let (train, test, forgotten) = load_data_and_probe(ctx.cfg)?;
    let pipeline_cfg = ctx.cfg.pipeline_config();
    let partition = partition_forget(&train, &pipeline_cfg.forget)?;
    let probe = EvalProbe {
        test: &test,
        forgotten: &forgotten,
    };
    let (m_r, trace) = retrain_baseline(&partition.remain, &pipeline_cfg.retrain, Some(&probe))?;
    print_trace(&trace);
    write_checkpoint_artifact(ctx, "m_r", &m_r)?;
    write_stage_trace(ctx, &trace)?;
    write_eval_report(ctx, &evaluate(&m_r, &test, &forgotten, "retrained")?)?;
    Ok(())
}

fn canonical_comparison_json(summary: &ComparisonSummary) -> Vec<u8> {
    let mut canonical = summary.clone();
    canonical.ours.total_seconds = 0.0;
    canonical.retrain.total_seconds = 0.0;
    (serde_json::to_string_pretty(&canonical).expect("summary serializes") + "\n").into_bytes()
}

fn write_combined_reports(
    ctx: &mut StageCtx,
    reports: &[EvalReport],
    ours: Option<&RecoveryTrace>,
    retrain: Option<&RecoveryTrace>,
) -> Result<(), CoreError> {
    let class_names = ctx.cfg.dataset.class_names();
    emit_report(
        reports,
        ctx.out_dir.join("class_report.csv"),
        ReportFormat::Csv,
        class_names.as_deref(),
    )?;
    ctx.manifest.add_file(ctx.out_dir, "class_report.csv", "report")?;
    emit_report(
        reports,
        ctx.out_dir.join("class_report.json"),
        ReportFormat::Json,
        class_names.as_deref(),
    )?;
    ctx.manifest.add_file(ctx.out_dir, "class_report.json", "report")?;
    print!("{}", render_class_report_csv(reports, class_names.as_deref()));

    if let (Some(ours), Some(retrain)) = (ours, retrain) {
        let threshold = retrain.final_remaining().unwrap_or(0.0);
        let summary = compare_methods(ours, retrain, threshold)?;
        fs::write(
            ctx.out_dir.join("comparison.json"),
            serde_json::to_string_pretty(&summary)? + "\n",
        )?;
        ctx.manifest.add_canonical(
            "comparison.json",
            "report",
            &canonical_comparison_json(&summary),
        );
        let traces = [ours.clone(), retrain.clone()];
        emit_trace(
            &traces,
            ctx.out_dir.join("recovery_traces.csv"),
            ReportFormat::Csv,
        )?;
        ctx.manifest.add_canonical(
            "recovery_traces.csv",
            "trace",
            render_trace_csv(&traces, true).as_bytes(),
        );
        match (summary.ours.epochs_to_threshold, summary.retrain.epochs_to_threshold) {
            (Some(a), Some(b)) => println!(
                "recovery to {:.2}%: ours {a} epoch(s), retrained {b} epoch(s)",
                threshold * 100.0
            ),
            _ => println!("recovery threshold {:.2}% not reached by both methods", threshold * 100.0),
        }
    }
    Ok(())
}

fn cmd_pipeline(ctx: &mut StageCtx) -> Result<(), CoreError> {
    let (train, test, _) = load_data_and_probe(ctx.cfg)?;
    let pipeline_cfg = ctx.cfg.pipeline_config();
    let result = unlearn_pipeline(&train, &test, &pipeline_cfg, Some(ctx.out_dir))?;

    for trace in result.traces.all() {
        print_trace(trace);
        write_stage_trace(ctx, trace)?;
    }
    for name in ["m_d", "m_u_scratch", "m_u_final", "m_r"] {
        ctx.manifest
            .add_file(ctx.out_dir, &format!("{name}.unlf"), "checkpoint")?;
    }
    for report in &result.reports {
        write_eval_report(ctx, report)?;
    }
    let ours = result.traces.reconstruct.to_recovery_trace()?;
    let retrain = result.traces.retrain.to_recovery_trace()?;
    write_combined_reports(ctx, &result.reports, Some(&ours), Some(&retrain))?;
    Ok(())
}

fn cmd_eval(ctx: &mut StageCtx, model: &Path, id: Option<&str>) -> Result<(), CoreError> {
    let (_, test, forgotten) = load_data_and_probe(ctx.cfg)?;
    let net = load_checkpoint(model)?;
    let id = id
        .map(str::to_string)
        .or_else(|| model.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "model".to_string());
    let report = evaluate(&net, &test, &forgotten, id)?;
    write_eval_report(ctx, &report)?;
    let csv_name = format!("report_{}.csv", report.model_id);
    emit_report(
        std::slice::from_ref(&report),
        ctx.out_dir.join(&csv_name),
        ReportFormat::Csv,
        ctx.cfg.dataset.class_names().as_deref(),
    )?;
    ctx.manifest.add_file(ctx.out_dir, &csv_name, "report")?;
    Ok(())
}

fn cmd_report(ctx: &mut StageCtx) -> Result<(), CoreError> {
    let mut reports = Vec::new();
    for id in ["original", "scratch", "retrained", "ours"] {
        let path = ctx.out_dir.join(format!("report_{id}.json"));
        if path.is_file() {
            let report: EvalReport = serde_json::from_str(&fs::read_to_string(&path)?)?;
            reports.push(report);
        }
    }
    if reports.is_empty() {
        return Err(CoreError::InvalidArgument(format!(
            "no report_*.json artifacts found in {}; run the stages first",
            ctx.out_dir.display()
        )));
    }
    let load_trace = |stage: &str| -> Result<Option<RecoveryTrace>, CoreError> {
        let path = ctx.out_dir.join(format!("trace_{stage}.json"));
        if !path.is_file() {
            return Ok(None);
        }
        let trace: StageTrace = serde_json::from_str(&fs::read_to_string(&path)?)?;
        Ok(trace.to_recovery_trace().ok())
    };
    let ours = load_trace("reconstruct")?;
    let retrain = load_trace("retrain")?;
    write_combined_reports(ctx, &reports, ours.as_ref(), retrain.as_ref())?;
    Ok(())
}
