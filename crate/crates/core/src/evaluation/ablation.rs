//! Associative vs plain ideation: generate idea sets per prompt, embed the
//! titles and compare mean diversity per prompt with a paired test.

use std::sync::atomic::{AtomicUsize, Ordering};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::diversity::diversity;
use super::wilcoxon::{wilcoxon_signed_rank, WilcoxonResult};
use super::EvalError;
use crate::ideation::{build_ideation_instruction, parse_ideas, IdeationMode, IdeationRequest};
use crate::ids::IdGenerator;
use crate::instructions::Instructions;
use crate::providers::{EmbedInput, Embedder, TextProvider};
use crate::structured::generate_with_repair;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AblationConfig {
    pub runs: u32,
    pub count: usize,
    /// Worker threads; keep at or below the provider in-flight cap.
    pub parallelism: usize,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            runs: 3,
            count: 9,
            parallelism: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub prompt_index: usize,
    pub mode: IdeationMode,
    pub run: u32,
    pub titles: Vec<String>,
    /// Absent when the cell failed twice.
    pub diversity: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptScores {
    pub prompt_index: usize,
    pub prompt: String,
    /// Mean over the runs that completed.
    pub associative: Option<f64>,
    pub plain: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub cells: Vec<AblationCell>,
    pub scores: Vec<PromptScores>,
    pub associative_mean: Option<f64>,
    pub plain_mean: Option<f64>,
    /// Paired over prompts with both scores (associative first).
    pub wilcoxon: Result<WilcoxonResult, String>,
}

impl AblationReport {
    pub fn aggregated_score_count(&self) -> usize {
        self.scores
            .iter()
            .map(|s| s.associative.is_some() as usize + s.plain.is_some() as usize)
            .sum()
    }

    pub fn missing_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.diversity.is_none()).count()
    }

    pub fn cells_csv(&self) -> String {
        let mut out = String::from("prompt_index,mode,run,diversity,error\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                c.prompt_index,
                mode_name(c.mode),
                c.run,
                c.diversity.map(|d| format!("{d:.6}")).unwrap_or_default(),
                csv_field(c.error.as_deref().unwrap_or_default()),
            ));
        }
        out
    }

    pub fn scores_csv(&self) -> String {
        let mut out = String::from("prompt_index,prompt,associative,plain\n");
        let f = |v: Option<f64>| v.map(|d| format!("{d:.6}")).unwrap_or_default();
        for s in &self.scores {
            out.push_str(&format!(
                "{},{},{},{}\n",
                s.prompt_index,
                csv_field(&s.prompt),
                f(s.associative),
                f(s.plain)
            ));
        }
        out
    }
}

fn mode_name(m: IdeationMode) -> &'static str {
    match m {
        IdeationMode::Associative => "associative",
        IdeationMode::Plain => "plain",
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn run_cell(
    text: &dyn TextProvider,
    embed: &dyn Embedder,
    instructions: &Instructions,
    prompt: &str,
    mode: IdeationMode,
    run: u32,
    count: usize,
) -> Result<(Vec<String>, f64), String> {
    let req = IdeationRequest {
        count,
        sample: run,
        ..IdeationRequest::new(prompt, mode)
    };
    let instruction = build_ideation_instruction(&req, instructions);
    let ids = IdGenerator::seeded(0);
    let ideas = generate_with_repair(text, instructions, &instruction, |raw| {
        parse_ideas(raw, count, &[], &ids)
    })
    .map_err(|e| e.to_string())?;
    let titles: Vec<String> = ideas.into_iter().map(|i| i.title).collect();
    let inputs: Vec<EmbedInput> = titles.iter().cloned().map(EmbedInput::Text).collect();
    let vectors = embed.embed(&inputs).map_err(|e| e.to_string())?;
    let score = diversity(&vectors).map_err(|e| e.to_string())?.score;
    Ok((titles, score))
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Run every prompt × mode × run cell. A failed cell is retried once and
/// then recorded as missing; per-prompt scores average completed runs.
pub fn run_ablation(
    text: &dyn TextProvider,
    embed: &dyn Embedder,
    instructions: &Instructions,
    prompts: &[String],
    config: &AblationConfig,
) -> Result<AblationReport, EvalError> {
    if prompts.is_empty() {
        return Err(EvalError::EmptySample);
    }
    let modes = [IdeationMode::Associative, IdeationMode::Plain];
    let jobs: Vec<(usize, IdeationMode, u32)> = (0..prompts.len())
        .flat_map(|p| modes.iter().flat_map(move |m| (0..config.runs).map(move |r| (p, *m, r))))
        .collect();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<AblationCell>>> = Mutex::new(vec![None; jobs.len()]);
    std::thread::scope(|scope| {
        for _ in 0..config.parallelism.clamp(1, jobs.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(p, mode, run)) = jobs.get(i) else {
                    break;
                };
                let attempt =
                    || run_cell(text, embed, instructions, &prompts[p], mode, run, config.count);
                let outcome = attempt().or_else(|first| {
                    log::warn!("ablation cell {p}/{}/{run} failed, retrying: {first}", mode_name(mode));
                    attempt()
                });
                let cell = match outcome {
                    Ok((titles, score)) => AblationCell {
                        prompt_index: p,
                        mode,
                        run,
                        titles,
                        diversity: Some(score),
                        error: None,
                    },
                    Err(e) => AblationCell {
                        prompt_index: p,
                        mode,
                        run,
                        titles: Vec::new(),
                        diversity: None,
                        error: Some(e),
                    },
                };
                results.lock()[i] = Some(cell);
            });
        }
    });
    let cells: Vec<AblationCell> = results
        .into_inner()
        .into_iter()
        .map(|c| c.expect("every job ran"))
        .collect();

    let scores: Vec<PromptScores> = prompts
        .iter()
        .enumerate()
        .map(|(i, prompt)| {
            let of = |m: IdeationMode| {
                let v: Vec<f64> = cells
                    .iter()
                    .filter(|c| c.prompt_index == i && c.mode == m)
                    .filter_map(|c| c.diversity)
                    .collect();
                mean(&v)
            };
            PromptScores {
                prompt_index: i,
                prompt: prompt.clone(),
                associative: of(IdeationMode::Associative),
                plain: of(IdeationMode::Plain),
            }
        })
        .collect();
    let pairs: Vec<(f64, f64)> = scores
        .iter()
        .filter_map(|s| Some((s.associative?, s.plain?)))
        .collect();
    let wilcoxon = if pairs.is_empty() {
        Err(EvalError::InsufficientPairs.to_string())
    } else {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        wilcoxon_signed_rank(&a, &b).map_err(|e| e.to_string())
    };
    let column = |f: fn(&PromptScores) -> Option<f64>| {
        let v: Vec<f64> = scores.iter().filter_map(f).collect();
        mean(&v)
    };
    Ok(AblationReport {
        associative_mean: column(|s| s.associative),
        plain_mean: column(|s| s.plain),
        cells,
        scores,
        wilcoxon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::mock::{MockEmbedder, MockText, ScriptedText};
    use crate::providers::ProviderError;

    fn prompts(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("poster idea number {i} about sleeping early")).collect()
    }

    #[test]
    fn shape_and_determinism() {
        let cfg = AblationConfig::default();
        let run = || {
            run_ablation(&MockText::new(5), &MockEmbedder::new(5), &Instructions::builtin(), &prompts(4), &cfg)
                .unwrap()
        };
        let r = run();
        assert_eq!(r.cells.len(), 4 * 2 * 3);
        assert_eq!(r.aggregated_score_count(), 8);
        assert!(r.cells.iter().all(|c| c.titles.len() == 9));
        assert!(r.wilcoxon.is_ok());
        assert_eq!(r, run());
    }

    #[test]
    fn mode_blind_provider_is_degenerate() {
        let r = run_ablation(
            &MockText::new(5).mode_blind(),
            &MockEmbedder::new(5),
            &Instructions::builtin(),
            &prompts(3),
            &AblationConfig::default(),
        )
        .unwrap();
        assert_eq!(r.wilcoxon, Err(EvalError::DegenerateSample.to_string()));
    }

    #[test]
    fn failing_cells_retry_once_then_go_missing() {
        // every request fails: each cell makes exactly two provider calls
        let script = (0..4).map(|_| Err(ProviderError::refusal("no"))).collect();
        let text = ScriptedText::new(script);
        let cfg = AblationConfig { runs: 1, count: 9, parallelism: 1 };
        let r = run_ablation(&text, &MockEmbedder::new(1), &Instructions::builtin(), &prompts(1), &cfg).unwrap();
        assert_eq!(r.missing_cells(), 2);
        assert_eq!(text.requests().len(), 4);
        assert_eq!(r.wilcoxon, Err(EvalError::InsufficientPairs.to_string()));
    }
}
