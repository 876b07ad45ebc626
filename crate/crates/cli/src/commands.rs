use std::path::{Path, PathBuf};

use chrono::Utc;
use phyauth::auth::{train_initial, AuthenticatorState, Verdict};
use phyauth::channel::{load_trace, write_trace, TraceFormat};
use phyauth::config::{seed_from_env, FlatConfig};
use phyauth::eval::{
    build_stream, m_sweep_on, sweep_roc_on, write_roc_csv, DetectorKind, ExperimentConfig, ExperimentSummary, RocCurve,
    Stream,
};
use serde::Serialize;

use crate::args::{ClassifyArgs, ConfigArgs, DetectorArg, EvaluateArgs, FormatArg, SimulateArgs, TrainArgs};
use crate::output::{io_error, CliError, CliResult, Outputs, RunManifest};

pub const CLASSIFY_HEADER: &str = "msg_index,bob_posterior,verdict";

pub fn resolve_config(args: &ConfigArgs) -> CliResult<ExperimentConfig> {
    let file = match &args.config {
        Some(path) => FlatConfig::load(path)?,
        None => FlatConfig::default(),
    };
    let flat = file.overlay(&args.overrides.to_flat());
    Ok(flat.resolve(seed_from_env()?)?)
}

fn trace_format(path: &Path, explicit: Option<FormatArg>) -> TraceFormat {
    match explicit {
        Some(FormatArg::Csv) => TraceFormat::Csv,
        Some(FormatArg::Jsonl) => TraceFormat::Jsonl,
        None => TraceFormat::from_path(path).unwrap_or(TraceFormat::Csv),
    }
}

fn load_stream(path: &Path, format: Option<FormatArg>, expected_dim: usize) -> CliResult<Stream> {
    let records = load_trace(path, trace_format(path, format))?;
    let stream = Stream::from_records(records);
    match stream.dim() {
        Some(d) if d != expected_dim => Err(CliError::Validation(format!(
            "{} has {d} carriers per estimate, config expects {expected_dim}",
            path.display()
        ))),
        _ => Ok(stream),
    }
}

fn source_stream(trace: Option<&PathBuf>, format: Option<FormatArg>, config: &ExperimentConfig) -> CliResult<Stream> {
    match trace {
        Some(path) => load_stream(path, format, config.m_subcarriers),
        None => Ok(build_stream(config)?),
    }
}

pub fn simulate(args: &SimulateArgs) -> CliResult<()> {
    let started = Utc::now();
    let config = resolve_config(&args.config)?;
    let stream = build_stream(&config)?;
    let mut trace = Vec::new();
    write_trace(&mut trace, &stream.to_records(), trace_format(&args.out, args.format))?;
    let mut outputs = Outputs::default();
    outputs.add(&args.out, trace);
    let manifest = RunManifest::new("simulate", &config, started, &outputs);
    outputs.add(manifest_path(&args.out), manifest.to_bytes()?);
    outputs.commit()
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

#[derive(Serialize)]
struct EvaluationSummary {
    config: FlatConfig,
    results: Vec<ExperimentSummary>,
}

fn roc_bytes(curve: &RocCurve) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    write_roc_csv(&mut buf, curve).map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(buf)
}

pub fn evaluate(args: &EvaluateArgs) -> CliResult<()> {
    let started = Utc::now();
    let config = resolve_config(&args.config)?;
    let kinds: &[DetectorKind] = match args.detector {
        DetectorArg::Gmm => &[DetectorKind::Gmm],
        DetectorArg::Mse => &[DetectorKind::Mse],
        DetectorArg::Both => &[DetectorKind::Gmm, DetectorKind::Mse],
    };
    let mut outputs = Outputs::default();
    let mut results = Vec::new();
    if args.m_sweep {
        let full = ExperimentConfig {
            m_subcarriers: config.profile.active_carriers,
            ..config.clone()
        };
        let stream = source_stream(args.trace.as_ref(), args.format, &full)?;
        for &kind in kinds {
            for (m, curve) in m_sweep_on(&stream, &config, kind)? {
                let cfg = ExperimentConfig {
                    m_subcarriers: m,
                    ..config.clone()
                };
                results.push(ExperimentSummary::new(&cfg, kind, &curve)?);
                outputs.add(args.out_dir.join(format!("roc_{kind}_m{m}.csv")), roc_bytes(&curve)?);
            }
        }
    } else {
        let stream = source_stream(args.trace.as_ref(), args.format, &config)?;
        for &kind in kinds {
            let curve = sweep_roc_on(&stream, &config, kind)?;
            results.push(ExperimentSummary::new(&config, kind, &curve)?);
            outputs.add(args.out_dir.join(format!("roc_{kind}.csv")), roc_bytes(&curve)?);
        }
    }
    let summary = EvaluationSummary {
        config: FlatConfig::from_experiment(&config),
        results,
    };
    let mut text = serde_json::to_vec_pretty(&summary).map_err(|e| CliError::Runtime(e.to_string()))?;
    text.push(b'\n');
    outputs.add(args.out_dir.join("summary.json"), text);
    let manifest = RunManifest::new("evaluate", &config, started, &outputs);
    outputs.add(args.out_dir.join("manifest.json"), manifest.to_bytes()?);
    outputs.commit()
}

pub fn train(args: &TrainArgs) -> CliResult<()> {
    let config = resolve_config(&args.config)?;
    let stream = source_stream(args.trace.as_ref(), args.format, &config)?;
    let state = train_initial(&stream.training, &config.auth_config(args.threshold))?;
    let mut outputs = Outputs::default();
    outputs.add(&args.out, state.to_json()?.into_bytes());
    outputs.commit()
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::AcceptBob => "accept_bob",
        Verdict::FlagEve => "flag_eve",
    }
}

pub fn classify(args: &ClassifyArgs) -> CliResult<()> {
    let text = std::fs::read_to_string(&args.state).map_err(|e| io_error(&args.state, e))?;
    let mut state = AuthenticatorState::from_json(&text)?;
    if let Some(t) = args.threshold {
        if !(0.0..=1.0).contains(&t) {
            return Err(CliError::Validation(format!("threshold {t} is outside [0, 1]")));
        }
        state.set_threshold(t);
    }
    let records = load_trace(&args.trace, trace_format(&args.trace, args.format))?;
    let mut out = String::from(CLASSIFY_HEADER);
    out.push('\n');
    for r in &records {
        let d = state.score(&r.estimate)?;
        out.push_str(&format!(
            "{},{},{}\n",
            r.msg_index,
            d.bob_posterior,
            verdict_name(d.verdict)
        ));
    }
    let mut outputs = Outputs::default();
    outputs.add(&args.out, out.into_bytes());
    outputs.commit()
}
