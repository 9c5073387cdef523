//! Implementations behind the `cocreate` subcommands. Each returns a
//! [`CliError`] whose kind decides the process exit code.

use std::fs;
use std::io::{self, Read, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use cocreate_core::demo::run_demo;
use cocreate_core::evaluation::ablation::{run_ablation, AblationConfig};
use cocreate_core::evaluation::metrics::{metrics_csv, BehavioralMetrics};
use cocreate_core::evaluation::survey::{aggregate_ratings, compare_systems, ImageRating};
use cocreate_core::evaluation::{behavioral_metrics, CsiDimension, ScoreRecord, System};
use cocreate_core::ideation::NewIdea;
use cocreate_core::ids::{IdGenerator, SessionId};
use cocreate_core::providers::{ProviderConfig, Providers};
use cocreate_core::session::{events_from_jsonl, Event};
use cocreate_core::instructions::Instructions;
use cocreate_core::Studio;
use serde::Deserialize;
use serde_json::json;
use thiserror::Error;

use crate::api::{router, App};
use crate::store::{FsBlobStore, SessionStore};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0:#}")]
    Data(anyhow::Error),
    #[error("{0:#}")]
    Provider(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Provider(_) => 3,
        }
    }
}

fn data(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Data(e.into())
}

fn provider(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Provider(e.into())
}

pub type CliResult<T = ()> = Result<T, CliError>;

/// `-` reads stdin.
fn read_input(path: &Path) -> CliResult<String> {
    if path == Path::new("-") {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s).map_err(data)?;
        Ok(s)
    } else {
        fs::read_to_string(path)
            .map_err(|e| data(anyhow::anyhow!("{}: {e}", path.display())))
    }
}

fn read_log(path: &Path) -> CliResult<Vec<Event>> {
    let text = read_input(path)?;
    events_from_jsonl(&text).map_err(|e| data(anyhow::anyhow!("{}: {e}", path.display())))
}

fn providers(mock: bool, seed: u64) -> CliResult<Providers> {
    if mock {
        return Ok(Providers::mock(seed));
    }
    let config = ProviderConfig::from_env().map_err(provider)?;
    Providers::from_config(&config).map_err(provider)
}

fn open_store(dir: &Path) -> CliResult<SessionStore> {
    SessionStore::open(dir).map_err(data)
}

pub struct ServeOptions {
    pub addr: SocketAddr,
    pub data: PathBuf,
    pub mock: bool,
    pub seed: u64,
    pub wait: Duration,
}

pub fn serve(opts: ServeOptions) -> CliResult {
    let store = open_store(&opts.data)?;
    let blobs = FsBlobStore::open(opts.data.join("blobs")).map_err(data)?;
    let mut studio = Studio::new(providers(opts.mock, opts.seed)?, Arc::new(blobs));
    if opts.mock {
        log::info!("serving with mock providers (seed {})", opts.seed);
    }
    studio.ids = Arc::new(IdGenerator::random());
    let app = App::new(studio, store, opts.wait);
    let runtime = tokio::runtime::Runtime::new().map_err(data)?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(opts.addr).await.map_err(data)?;
        log::info!("listening on {}", listener.local_addr().map_err(data)?);
        axum::serve(listener, router(app))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(data)
    })
}

pub fn metrics_for_events(events: &[Event]) -> CliResult<BehavioralMetrics> {
    behavioral_metrics(events).map_err(data)
}

/// Metrics CSV for one log file (or stdin).
pub fn metrics_from_log(path: &Path, out: &mut dyn Write) -> CliResult {
    let events = read_log(path)?;
    let row = metrics_for_events(&events)?;
    out.write_all(metrics_csv(&[row]).as_bytes()).map_err(data)
}

/// Metrics CSV for sessions in a store; all of them when `session` is None.
pub fn metrics_from_store(dir: &Path, session: Option<&str>, out: &mut dyn Write) -> CliResult {
    let store = open_store(dir)?;
    let ids = match session {
        Some(id) => vec![SessionId::new(id)],
        None => store.ids(),
    };
    let mut rows = Vec::new();
    for id in ids {
        let handle = store
            .get(&id)
            .ok_or_else(|| data(anyhow::anyhow!("session {id} not found")))?;
        rows.push(metrics_for_events(&handle.events())?);
    }
    out.write_all(metrics_csv(&rows).as_bytes()).map_err(data)
}

pub fn export(dir: &Path, session: &str, out: &mut dyn Write) -> CliResult {
    let store = open_store(dir)?;
    let handle = store
        .get(&SessionId::new(session))
        .ok_or_else(|| data(anyhow::anyhow!("session {session} not found")))?;
    out.write_all(handle.export_jsonl().as_bytes()).map_err(data)
}

pub fn import(dir: &Path, log: &Path) -> CliResult<SessionId> {
    let events = read_log(log)?;
    let store = open_store(dir)?;
    let handle = store.import(events).map_err(data)?;
    Ok(handle.session_id())
}

/// Scripted offline session with mock providers. Persisted to `data` when
/// given; the event log is written to `log_out` when given.
pub fn demo(seed: u64, data_dir: Option<&Path>, log_out: Option<&Path>) -> CliResult<SessionId> {
    let mut studio = Studio::mock(seed);
    let store = match data_dir {
        Some(dir) => {
            studio.blobs = Arc::new(FsBlobStore::open(dir.join("blobs")).map_err(data)?);
            studio.ids = Arc::new(IdGenerator::random());
            Some(open_store(dir)?)
        }
        None => None,
    };
    let sink = store.as_ref().map(|s| s.sink());
    let run = run_demo(&studio, sink).map_err(|e| match e {
        cocreate_core::StudioError::Provider(_) => provider(e),
        other => data(other),
    })?;
    if let Some(path) = log_out {
        fs::write(path, run.session.export_jsonl())
            .map_err(|e| data(anyhow::anyhow!("{}: {e}", path.display())))?;
    }
    Ok(run.session.session_id())
}

pub struct AblateOptions {
    pub prompts: PathBuf,
    pub out: PathBuf,
    pub mock: bool,
    pub seed: u64,
    pub config: AblationConfig,
}

/// Read prompts one per line; blank lines and `#` comments are skipped.
pub fn read_prompts(path: &Path) -> CliResult<Vec<String>> {
    let text = read_input(path)?;
    let prompts: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect();
    if prompts.is_empty() {
        return Err(data(anyhow::anyhow!("{}: no prompts", path.display())));
    }
    Ok(prompts)
}

pub fn ablate(opts: &AblateOptions, summary_out: &mut dyn Write) -> CliResult {
    if opts.config.runs == 0 || opts.config.count < 2 {
        return Err(CliError::Usage("--runs must be ≥ 1 and --count ≥ 2".into()));
    }
    let prompts = read_prompts(&opts.prompts)?;
    let providers = providers(opts.mock, opts.seed)?;
    let report = run_ablation(
        providers.text.as_ref(),
        providers.embed.as_ref(),
        &Instructions::builtin(),
        &prompts,
        &opts.config,
    )
    .map_err(data)?;
    if report.missing_cells() == report.cells.len() {
        let first = report.cells.iter().find_map(|c| c.error.clone()).unwrap_or_default();
        return Err(provider(anyhow::anyhow!("every ablation cell failed; first error: {first}")));
    }
    fs::create_dir_all(&opts.out).map_err(data)?;
    let write = |name: &str, body: &str| {
        let p = opts.out.join(name);
        fs::write(&p, body).map_err(|e| data(anyhow::anyhow!("{}: {e}", p.display())))
    };
    write("cells.csv", &report.cells_csv())?;
    write("scores.csv", &report.scores_csv())?;
    let summary = json!({
        "prompts": prompts.len(),
        "runs": opts.config.runs,
        "count": opts.config.count,
        "mock": opts.mock,
        "seed": opts.seed,
        "aggregated_scores": report.aggregated_score_count(),
        "missing_cells": report.missing_cells(),
        "associative_mean": report.associative_mean,
        "plain_mean": report.plain_mean,
        "wilcoxon": match &report.wilcoxon {
            Ok(w) => serde_json::to_value(w).expect("serializes"),
            Err(e) => json!({ "error": e }),
        },
    });
    write(
        "summary.json",
        &format!("{}\n", serde_json::to_string_pretty(&summary).expect("serializes")),
    )?;

    let f = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
    let mut text = format!(
        "prompts: {}  cells: {} ({} missing)  scores: {}\n\
         mean diversity  associative: {}  plain: {}\n",
        prompts.len(),
        report.cells.len(),
        report.missing_cells(),
        report.aggregated_score_count(),
        f(report.associative_mean),
        f(report.plain_mean),
    );
    match &report.wilcoxon {
        Ok(w) => text.push_str(&format!(
            "wilcoxon signed-rank: n={} W+={} p={:.4} ({:?})\n",
            w.n_nonzero, w.w_plus, w.p_two_sided, w.method
        )),
        Err(e) => text.push_str(&format!("wilcoxon signed-rank: not computed ({e})\n")),
    }
    summary_out.write_all(text.as_bytes()).map_err(data)
}

/// Flat survey row: one participant × system.
#[derive(Debug, Deserialize)]
struct SurveyRow {
    participant_id: String,
    condition: System,
    enjoyment: f64,
    exploration: f64,
    expressiveness: f64,
    immersion: f64,
    results_worth_effort: f64,
    umux_capabilities: f64,
    umux_ease: f64,
    learning: f64,
}

impl From<SurveyRow> for ScoreRecord {
    fn from(r: SurveyRow) -> Self {
        let dims = [
            r.enjoyment,
            r.exploration,
            r.expressiveness,
            r.immersion,
            r.results_worth_effort,
        ];
        ScoreRecord {
            participant_id: r.participant_id,
            condition: r.condition,
            csi_dimensions: CsiDimension::ALL.into_iter().zip(dims).collect(),
            umux_items: (r.umux_capabilities, r.umux_ease),
            learning_item: r.learning,
        }
    }
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<Vec<T>> {
    let text = read_input(path)?;
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| data(anyhow::anyhow!("{}: {e}", path.display())))
}

pub const SURVEY_HEADER: &str =
    "measure,structured_n,structured_mean,structured_sd,chat_n,chat_mean,chat_sd,pairs,w_plus,p,method";
pub const RATINGS_HEADER: &str = "participant_id,condition,novelty,usefulness,images";

/// Per-measure comparison CSV from questionnaire scores; optional external
/// ratings are aggregated per participant.
pub fn survey(scores: &Path, ratings: Option<&Path>, out: &mut dyn Write) -> CliResult {
    let rows: Vec<SurveyRow> = read_csv(scores)?;
    let records: Vec<ScoreRecord> = rows.into_iter().map(Into::into).collect();
    let comparisons = compare_systems(&records).map_err(data)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SURVEY_HEADER.split(',')).map_err(data)?;
    let num = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
    for c in &comparisons {
        w.write_record([
            c.measure.clone(),
            c.structured.map(|s| s.n.to_string()).unwrap_or_default(),
            num(c.structured.map(|s| s.mean)),
            num(c.structured.map(|s| s.sd)),
            c.chat.map(|s| s.n.to_string()).unwrap_or_default(),
            num(c.chat.map(|s| s.mean)),
            num(c.chat.map(|s| s.sd)),
            c.wilcoxon.as_ref().map(|t| t.n_nonzero.to_string()).unwrap_or_default(),
            c.wilcoxon.as_ref().map(|t| t.w_plus.to_string()).unwrap_or_default(),
            c.wilcoxon
                .as_ref()
                .map(|t| format!("{:.6}", t.p_two_sided))
                .unwrap_or_default(),
            c.wilcoxon
                .as_ref()
                .map(|t| format!("{:?}", t.method))
                .unwrap_or_default(),
        ])
        .map_err(data)?;
    }
    out.write_all(&w.into_inner().map_err(|e| data(anyhow::anyhow!("{e}")))?)
        .map_err(data)?;
    if let Some(path) = ratings {
        let ratings: Vec<ImageRating> = read_csv(path)?;
        let agg = aggregate_ratings(&ratings).map_err(data)?;
        writeln!(out, "\n{RATINGS_HEADER}").map_err(data)?;
        for r in agg {
            writeln!(
                out,
                "{},{:?},{:.4},{:.4},{}",
                r.participant_id, r.condition, r.novelty, r.usefulness, r.images
            )
            .map_err(data)?;
        }
    }
    Ok(())
}

/// Append idea events forever (or `count` times), printing
/// `ack <session> <seq>` once each event is durable. Resumes the first
/// session in the store if there is one. Used by the crash-safety harness.
pub fn stress_append(dir: &Path, count: Option<u64>) -> CliResult {
    let store = open_store(dir)?;
    let mut studio = Studio::mock(0);
    studio.ids = Arc::new(IdGenerator::random());
    let handle = match store.ids().first() {
        Some(id) => store.get(id).expect("listed"),
        None => store.create(&studio, "stress").map_err(data)?,
    };
    let id = handle.session_id();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "ack {id} {}", handle.read(|s| s.last_seq)).map_err(data)?;
    out.flush().map_err(data)?;
    let mut n = 0u64;
    while count.is_none_or(|c| n < c) {
        n += 1;
        studio
            .create_idea(
                &handle,
                NewIdea {
                    title: format!("stress idea {n}"),
                    description: "x".repeat(64 + (n as usize % 200)),
                    ..Default::default()
                },
            )
            .map_err(data)?;
        writeln!(out, "ack {id} {}", handle.read(|s| s.last_seq)).map_err(data)?;
        out.flush().map_err(data)?;
    }
    Ok(())
}

/// Parse an `ack <session> <seq>` line.
pub fn parse_ack(line: &str) -> Option<(String, u64)> {
    let mut parts = line.split_whitespace();
    (parts.next()? == "ack").then_some(())?;
    let id = parts.next()?.to_string();
    let seq = parts.next()?.parse().ok()?;
    Some((id, seq))
}
