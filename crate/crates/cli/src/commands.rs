use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, ensure, Context as _, Result};
use log::info;

use rulemine_core::bench::{
    hotpot_predicates, load_hotpot, run_curves, sweep_csv, synth_sweep, write_curve_files, write_sweep_csv, CurveOptions,
    HotpotExample, MAX_SWEEP_WIDTH,
};
use rulemine_core::lattice::{Interpretation, SourceMask};
use rulemine_core::miner::{DualMiner, DualOptions, MineError, MonoMiner};
use rulemine_core::model::{
    ChatModel, ChatSettings, HttpChatModel, RagModel, RecordingChatModel, RemoteConfig,
    TranscriptReplay,
};
use rulemine_core::oracle::Oracle;
use rulemine_core::report::{
    explain_json, explain_report, MaskRecord, OracleDump, Report, RuleSetReport, VerifyRecord,
};

use crate::config::{interpolate_env, Mode, RunConfig};

/// Configuration problems: reported with a usage hint and exit status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Prints to stdout; a reader that closed the pipe early is not an error.
fn out(text: &str) -> Result<()> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn usage(err: anyhow::Error) -> anyhow::Error {
    anyhow::Error::new(UsageError(format!("{err:#}")))
}

pub struct RunArgs {
    pub config: PathBuf,
    pub interpretation: Option<Interpretation>,
    pub parallelism: Option<usize>,
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
}

fn load(args: &RunArgs, mode: Mode) -> Result<RunConfig> {
    let mut config = RunConfig::load(&args.config).map_err(usage)?;
    if let Some(i) = args.interpretation {
        config.interpretation = Some(i);
    }
    if let Some(p) = args.parallelism {
        config.parallelism = Some(p);
    }
    if let Some(o) = &args.output {
        config.output = Some(o.clone());
    }
    if let Some(s) = args.seed {
        config.seed = Some(s);
    }
    config.validate(mode).map_err(usage)?;
    Ok(config)
}

/// Abort diagnostics name the failing node by its 1-based sources.
fn mine_failure(err: MineError) -> anyhow::Error {
    match err.failing_mask() {
        Some(mask) => anyhow::Error::new(err).context(format!(
            "run aborted at node {mask} (sources {:?}, mask {:#b})",
            mask.indices(),
            mask.bits()
        )),
        None => anyhow::Error::new(err),
    }
}

/// Writes the report if an output path is set, otherwise prints it.
fn emit(report: &Report, output: Option<&Path>) -> Result<()> {
    let json = report.to_json();
    match output {
        Some(path) => {
            fs::write(path, &json).with_context(|| format!("cannot write {}", path.display()))?;
            out(&explain_report(report)?)?;
            info!("report written to {}", path.display());
        }
        None => out(&json)?,
    }
    Ok(())
}

pub fn mine_mono(args: &RunArgs) -> Result<()> {
    let config = load(args, Mode::Mono)?;
    let interpretation = config.interpretation.unwrap_or(Interpretation::Retention);
    let input = config.input_set()?;
    let chat = config.chat_backend()?;
    let client = config.build_client(chat.clone())?;
    let pconf = config.predicate_for(interpretation)?;
    let predicate = config.build_predicate(pconf, chat.as_ref())?;

    let outcome = MonoMiner::new(&input, &predicate, client.as_ref(), interpretation)
        .parallelism(config.parallelism.unwrap_or(1))
        .run()
        .map_err(mine_failure)?;

    let mut report = Report::new(Mode::Mono.as_str(), &input, config.digest());
    report.rule_sets.push(RuleSetReport::new(
        interpretation,
        pconf.description(),
        &outcome.valid,
        &outcome.minimal,
        Some(outcome.telemetry),
    ));
    emit(&report, config.output.as_deref())
}

pub fn mine_dual(args: &RunArgs, cache: bool, cache_max_bytes: Option<usize>) -> Result<()> {
    let mut config = load(args, Mode::Dual)?;
    if !cache {
        config.cache = Some(false);
    }
    let input = config.input_set()?;
    let chat = config.chat_backend()?;
    let client = config.build_client(chat.clone())?;
    let predicates = config.build_pair(chat.as_ref())?;

    let outcome = DualMiner::new(&input, &predicates, client.as_ref())
        .options(DualOptions {
            cache: config.cache.unwrap_or(true),
            cache_max_bytes,
            parallelism: config.parallelism.unwrap_or(1),
            trace: false,
        })
        .run()
        .map_err(mine_failure)?;

    let mut report = Report::new(Mode::Dual.as_str(), &input, config.digest());
    for (side, pconf) in [
        (outcome.retention, config.retention_predicate.as_ref()),
        (outcome.omission, config.omission_predicate.as_ref()),
    ] {
        report.rule_sets.push(RuleSetReport::new(
            side.interpretation,
            pconf.expect("validated").description(),
            &side.valid,
            &side.minimal,
            Some(side.telemetry),
        ));
    }
    report.dual = Some(outcome.telemetry);
    emit(&report, config.output.as_deref())
}

/// Accepts `0b101`, `0x5` or a decimal mask value.
pub fn parse_mask(text: &str, width: usize) -> Result<SourceMask> {
    let t = text.trim();
    let bits = if let Some(b) = t.strip_prefix("0b") {
        u64::from_str_radix(b, 2)
    } else if let Some(h) = t.strip_prefix("0x") {
        u64::from_str_radix(h, 16)
    } else {
        t.parse()
    }
    .with_context(|| format!("cannot parse mask {text:?}"))?;
    SourceMask::new(bits, width).with_context(|| format!("mask {text} does not fit {width} sources"))
}

/// Parses a 1-based source list such as `2,4` or `[2, 4]`.
pub fn parse_sources(text: &str, width: usize) -> Result<SourceMask> {
    let inner = text.trim().trim_start_matches('[').trim_end_matches(']');
    let indices = inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>().with_context(|| format!("bad source index {s:?}")))
        .collect::<Result<Vec<_>>>()?;
    SourceMask::from_indices(indices.iter().copied(), width)
        .with_context(|| format!("sources {indices:?} do not fit {width} sources"))
}

pub fn verify(args: &RunArgs, mask: Option<&str>, sources: Option<&str>) -> Result<()> {
    let config = load(args, Mode::Verify)?;
    let interpretation = config.interpretation.unwrap_or(Interpretation::Retention);
    let input = config.input_set()?;
    let mask = match (mask, sources) {
        (Some(m), None) => parse_mask(m, input.len()),
        (None, Some(s)) => parse_sources(s, input.len()),
        _ => Err(anyhow::anyhow!("give exactly one of --mask or --sources")),
    }
    .map_err(usage)?;
    let chat = config.chat_backend()?;
    let client = config.build_client(chat.clone())?;
    let pconf = config.predicate_for(interpretation)?;
    let predicate = config.build_predicate(pconf, chat.as_ref())?;

    let oracle = Oracle::new(&input, &predicate, client.as_ref())?;
    let valid = oracle.verify_rule(mask, interpretation)?;
    let mut report = Report::new(Mode::Verify.as_str(), &input, config.digest());
    report.verify = Some(VerifyRecord {
        interpretation,
        rule: MaskRecord::from(mask),
        predicate: pconf.description(),
        valid,
    });
    let output = config.output.as_deref();
    if let Some(path) = output {
        fs::write(path, report.to_json())
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    out(if valid { "valid\n" } else { "invalid\n" })?;
    if output.is_none() {
        out(&report.to_json())?;
    }
    Ok(())
}

pub fn oracle(args: &RunArgs) -> Result<()> {
    let config = load(args, Mode::Oracle)?;
    let interpretation = config.interpretation.unwrap_or(Interpretation::Retention);
    let input = config.input_set()?;
    let chat = config.chat_backend()?;
    let client = config.build_client(chat.clone())?;
    let pconf = config.predicate_for(interpretation)?;
    let predicate = config.build_predicate(pconf, chat.as_ref())?;

    let result = Oracle::new(&input, &predicate, client.as_ref())?.brute_force_valid(interpretation)?;
    let mut report = Report::new(Mode::Oracle.as_str(), &input, config.digest());
    report.rule_sets.push(RuleSetReport::new(
        interpretation,
        pconf.description(),
        &result.valid,
        &result.minimal,
        None,
    ));
    report.oracle = Some(OracleDump {
        interpretation,
        evaluations: result.evaluations,
        per_node_satisfaction: result.per_node_satisfaction,
    });
    emit(&report, config.output.as_deref())
}

pub fn sweep(n: usize, output: Option<&Path>) -> Result<()> {
    if n > MAX_SWEEP_WIDTH {
        return Err(usage(anyhow::anyhow!(
            "sweep --n {n} would run 2^(2^{n}) assignments; the limit is n = {MAX_SWEEP_WIDTH}"
        )));
    }
    let rows = synth_sweep(n)?;
    match output {
        Some(path) => {
            write_sweep_csv(path, &rows)?;
            out(&format!("{} rows written to {}\n", rows.len(), path.display()))?;
        }
        None => out(&sweep_csv(&rows))?,
    }
    Ok(())
}

pub struct CurveArgs {
    pub dataset: PathBuf,
    pub replay: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub api_key: Option<String>,
    pub model: String,
    pub judge_model: Option<String>,
    pub seed: Option<u64>,
    pub record: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub k_min: usize,
    pub k_max: usize,
    pub limit: Option<usize>,
    pub any_support: bool,
    pub parallel: bool,
}

pub fn hotpot_curves(args: &CurveArgs) -> Result<()> {
    ensure!(args.k_min <= args.k_max, "--k-min must not exceed --k-max");
    let load = load_hotpot(&args.dataset)?;
    let mut examples: Vec<HotpotExample> = load
        .examples
        .into_iter()
        .filter(|e| args.any_support || e.supporting_fact_count() == 3)
        .collect();
    if let Some(limit) = args.limit {
        examples.truncate(limit);
    }
    ensure!(!examples.is_empty(), "no usable examples in {}", args.dataset.display());
    info!(
        "{} examples loaded, {} skipped",
        examples.len(),
        load.skipped.len()
    );

    let backend: Arc<dyn ChatModel> = match (&args.replay, &args.endpoint) {
        (Some(path), None) => Arc::new(
            TranscriptReplay::load(path)
                .with_context(|| format!("cannot load transcript {}", path.display()))?,
        ),
        (None, Some(endpoint)) => {
            let mut remote = RemoteConfig::new(endpoint.clone());
            remote.api_key = args.api_key.as_deref().map(interpolate_env).transpose()?;
            Arc::new(HttpChatModel::new(remote)?)
        }
        _ => bail!("give exactly one of --replay or --endpoint"),
    };
    let recorder = args
        .record
        .as_ref()
        .map(|_| Arc::new(RecordingChatModel::new(backend.clone())));
    let chat: Arc<dyn ChatModel> = match &recorder {
        Some(r) => r.clone(),
        None => backend,
    };

    let mut reader = ChatSettings::new(args.model.clone());
    reader.seed = args.seed;
    let mut judge = reader.clone();
    if let Some(name) = &args.judge_model {
        judge.model = name.clone();
    }
    let client = RagModel::new(chat.clone(), reader);
    let options = CurveOptions {
        ks: args.k_min..=args.k_max,
        parallel_examples: args.parallel,
    };
    let report = run_curves(
        &examples,
        &client,
        |ex| hotpot_predicates(ex, &chat, &judge),
        &options,
    );
    write_curve_files(&args.out_dir, &report)?;
    if let (Some(rec), Some(path)) = (&recorder, &args.record) {
        rec.save(path)?;
    }

    let mut summary = format!(
        "{} runs over {} examples, {} excluded; CSVs in {}\n",
        report.runs.len(),
        examples.len(),
        report.excluded.len(),
        args.out_dir.display()
    );
    for m in &report.metrics {
        summary += &format!(
            "k={} explored(ret/omi/dual)={:.3}/{:.3}/{:.3} dual_duplicate_fraction={:.3}\n",
            m.n,
            m.mono_retention_explored,
            m.mono_omission_explored,
            m.dual_explored,
            m.duplicate_subset_fraction
        );
    }
    out(&summary)
}

pub fn explain(report: &Path) -> Result<()> {
    let text = fs::read_to_string(report)
        .with_context(|| format!("cannot read report {}", report.display()))?;
    out(&explain_json(&text)?)
}
