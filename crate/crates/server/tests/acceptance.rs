//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero if
//! any criterion fails. Runs fully offline.

#[path = "../../core/tests/common/oracles.rs"]
mod oracles;

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader};
use std::process::{Command, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use cocreate_core::demo::run_demo;
use cocreate_core::evaluation::ablation::{run_ablation, AblationConfig};
use cocreate_core::evaluation::bibd::{bibd_table, System, Task, TaskPair};
use cocreate_core::evaluation::diversity::diversity;
use cocreate_core::evaluation::wilcoxon::wilcoxon_signed_rank;
use cocreate_core::evaluation::{behavioral_metrics, umux_lite_overall};
use cocreate_core::ideation::{build_ideation_instruction, IdeationMode, IdeationRequest};
use cocreate_core::instructions::Instructions;
use cocreate_core::providers::mock::{MockEmbedder, MockText};
use cocreate_core::providers::{ProviderError, TextCapabilities, TextProvider, TextRequest, TextTask};
use cocreate_core::refinement::VariationRequest;
use cocreate_core::sketch::{parse_sketch, render, serialize_sketch};
use cocreate_core::studio::SketchBounds;
use cocreate_core::tiling::{bands, slice_grid, slice_image, stitch};
use cocreate_core::{Studio, StudioError};
use cocreate_server::store::SessionStore;
use image::{Rgba, RgbaImage};
use oracles::{brute_force_wilcoxon, independent_render, random_pairs, random_selections, random_sketch, selected_values};
use parking_lot::Mutex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn sketch_round_trip() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..1000 {
        let sketch = random_sketch(&mut rng);
        let wire = serialize_sketch(&sketch);
        let back = parse_sketch(&wire).map_err(|e| format!("case {i}: {e}"))?;
        ensure(back == sketch && serialize_sketch(&back) == wire, || format!("case {i}: round trip differs"))?;
        let sel = random_selections(&mut rng, &sketch);
        let rendered = render(&sketch, &sel).map_err(|e| format!("case {i}: {e}"))?;
        ensure(rendered.reconstruct_template() == sketch.template(), || {
            format!("case {i}: spans do not reconstruct the template")
        })?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!("1000 sketches in {:.2}s", elapsed.as_secs_f64()))
}

/// Text provider whose sketch responses are set by the test.
struct Loaded(Mutex<String>);

impl TextProvider for Loaded {
    fn capabilities(&self) -> TextCapabilities {
        TextCapabilities::default()
    }
    fn generate(&self, req: &TextRequest) -> Result<String, ProviderError> {
        match req.task {
            TextTask::SketchSynthesis => Ok(self.0.lock().clone()),
            _ => MockText::new(0).generate(req),
        }
    }
}

fn render_fidelity() -> Check {
    let loaded = Arc::new(Loaded(Mutex::new(String::new())));
    let mut studio = Studio::mock(10);
    studio.providers.text = loaded.clone();
    studio.config.sketch_bounds = SketchBounds {
        min_params: 0,
        max_params: usize::MAX,
        min_options: 1,
        max_options: usize::MAX,
    };
    let s = studio.create_session("Poster for a library book swap", None).map_err(|e| e.to_string())?;
    let ideas = studio.brainstorm(&s, None, None).map_err(|e| e.to_string())?;
    let base = studio.generate_idea_image(&s, &ideas[0].idea_id).map_err(|e| e.to_string())?;
    let tab = studio.open_refine_tab(&s, &base.image_id).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let sketch = random_sketch(&mut rng);
        *loaded.0.lock() = serialize_sketch(&sketch);
        studio.refine(&s, &tab.tab_id, "vary it").map_err(|e| e.to_string())?;
        let sel = random_selections(&mut rng, &sketch);
        let expected = independent_render(sketch.template(), &selected_values(&sketch, &sel));
        let req = VariationRequest {
            selections: Some(sel),
            manual_prompt: None,
        };
        match studio.generate_variation(&s, &tab.tab_id, &req) {
            // a blank prompt is refused by the image provider after the round is recorded
            Ok(_) | Err(StudioError::Provider(_)) => {}
            Err(e) => return Err(e.to_string()),
        }
        let recorded = s.read(|x| x.rounds.last().map(|r| r.final_prompt.clone()));
        if recorded.as_deref() != Some(expected.as_str()) {
            mismatches += 1;
        }
    }
    ensure(mismatches == 0, || format!("{mismatches} mismatches"))?;
    Ok("1000 recorded prompts, 0 mismatches".into())
}

fn tiling() -> Check {
    let widths: Vec<u32> = bands(1024, 3).iter().map(|b| b.1).collect();
    ensure(widths == [341, 341, 342], || format!("1024 → {widths:?}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pattern = |x: u32, y: u32| Rgba([(x % 251) as u8, (y % 241) as u8, ((x ^ y) % 239) as u8, 255]);
    for i in 0..200 {
        let (w, h) = (rng.gen_range(3..=2048), rng.gen_range(3..=2048));
        let img = RgbaImage::from_fn(w, h, pattern);
        let tiles = slice_image(&img, 3, 3).map_err(|e| e.to_string())?;
        let back = stitch(&tiles, 3, 3).map_err(|e| e.to_string())?;
        ensure(tiles.len() == 9 && back == img, || format!("case {i} ({w}x{h}) differs"))?;
    }
    // the PNG path, on the common sheet size
    let sheet = RgbaImage::from_fn(1024, 1024, pattern);
    let mut png = Vec::new();
    sheet
        .write_to(&mut std::io::Cursor::new(&mut png), image::ImageFormat::Png)
        .map_err(|e| e.to_string())?;
    let tiles = slice_grid(&png, 3, 3).map_err(|e| e.to_string())?;
    ensure(stitch(&tiles, 3, 3).map_err(|e| e.to_string())? == sheet, || "png sheet differs".into())?;
    Ok("200 sizes restitched; 1024 → 341/341/342".into())
}

fn diversity_oracle() -> Check {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let cases = [
        (vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![1.0, 0.0]], 0.0),
        (vec![vec![1.0, 0.0], vec![0.0, 1.0]], 1.0),
        (vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![h, h]], 0.528595),
    ];
    for (vs, want) in &cases {
        let got = diversity(vs).map_err(|e| e.to_string())?.score;
        ensure((got - want).abs() < 1e-6, || format!("expected {want}, got {got}"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for i in 0..100 {
        let dim = rng.gen_range(2..8);
        let n = rng.gen_range(2..12);
        let mut vs: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.into_iter().map(|x| x / norm).collect()
            })
            .collect();
        let a = diversity(&vs).map_err(|e| e.to_string())?.score;
        use rand::seq::SliceRandom;
        vs.shuffle(&mut rng);
        let b = diversity(&vs).map_err(|e| e.to_string())?.score;
        ensure((a - b).abs() < 1e-12, || format!("set {i}: {a} vs {b} after permutation"))?;
    }
    Ok("3 worked examples within 1e-6; 100 permuted sets".into())
}

fn wilcoxon_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut compared = 0;
    for i in 0..500 {
        let n = rng.gen_range(1..=10);
        let (a, b) = random_pairs(&mut rng, n);
        let diffs: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        match (wilcoxon_signed_rank(&a, &b), brute_force_wilcoxon(&diffs)) {
            (Ok(r), Some((w, p))) => {
                ensure((r.w_plus - w).abs() < 1e-9 && (r.p_two_sided - p).abs() < 1e-12, || {
                    format!("case {i}: W+ {} vs {w}, p {} vs {p}", r.w_plus, r.p_two_sided)
                })?;
                compared += 1;
            }
            (Err(_), None) => {}
            (x, y) => return Err(format!("case {i}: {x:?} vs {y:?}")),
        }
    }
    let r = wilcoxon_signed_rank(&[2.0, 3.0, 4.0, 5.0, 6.0], &[1.0; 5]).map_err(|e| e.to_string())?;
    ensure((r.p_two_sided - 0.0625).abs() < 1e-12, || format!("n=5 all positive: p={}", r.p_two_sided))?;
    Ok(format!("500 cases ({compared} testable) match enumeration; n=5 all positive p=0.0625"))
}

fn umux() -> Check {
    let structured = umux_lite_overall(5.92, 6.17).map_err(|e| e.to_string())?;
    let chat = umux_lite_overall(3.92, 6.00).map_err(|e| e.to_string())?;
    ensure((structured - 84.03).abs() <= 0.2 && (chat - 65.97).abs() <= 0.2, || {
        format!("{structured:.2} / {chat:.2}")
    })?;
    Ok(format!("{structured:.2} vs 84.03, {chat:.2} vs 65.97"))
}

fn bibd() -> Check {
    use System::{ChatBaseline as C, StructuredSystem as S};
    use Task::{A, B, C as TC};
    // transcribed from the published condition table
    let expected = [
        (TaskPair::AB, (A, B), (S, C)),
        (TaskPair::AB, (A, B), (C, S)),
        (TaskPair::AB, (B, A), (S, C)),
        (TaskPair::AB, (B, A), (C, S)),
        (TaskPair::BC, (B, TC), (S, C)),
        (TaskPair::BC, (B, TC), (C, S)),
        (TaskPair::BC, (TC, B), (S, C)),
        (TaskPair::BC, (TC, B), (C, S)),
        (TaskPair::AC, (A, TC), (S, C)),
        (TaskPair::AC, (A, TC), (C, S)),
        (TaskPair::AC, (TC, A), (S, C)),
        (TaskPair::AC, (TC, A), (C, S)),
    ];
    let table = bibd_table();
    for (i, (row, want)) in table.iter().zip(&expected).enumerate() {
        ensure(
            row.condition_id as usize == i + 1
                && (row.task_pair, row.task_order, row.system_order) == *want,
            || format!("row {} differs: {row:?}", i + 1),
        )?;
    }
    let mut pairs: HashMap<TaskPair, usize> = HashMap::new();
    let mut orders: HashMap<(System, System), usize> = HashMap::new();
    let mut tasks: BTreeMap<&str, usize> = BTreeMap::new();
    for row in table {
        *pairs.entry(row.task_pair).or_default() += 1;
        *orders.entry(row.system_order).or_default() += 1;
        for t in [row.task_order.0, row.task_order.1] {
            *tasks.entry(match t {
                A => "A",
                B => "B",
                TC => "C",
            })
            .or_default() += 1;
        }
    }
    ensure(pairs.len() == 3 && pairs.values().all(|c| *c == 4), || format!("pairs {pairs:?}"))?;
    ensure(orders.len() == 2 && orders.values().all(|c| *c == 6), || format!("orders {orders:?}"))?;
    ensure(tasks.len() == 3 && tasks.values().all(|c| *c == 8), || format!("tasks {tasks:?}"))?;
    Ok("12 rows exact; pairs 4x, system orders 6x, tasks 8x".into())
}

fn offline_demo() -> Check {
    let start = Instant::now();
    let run = run_demo(&Studio::mock(7), None).map_err(|e| e.to_string())?;
    let m = behavioral_metrics(&run.session.events()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let got = (m.image_clusters, m.user_created_ideas, m.user_edited_ideas, m.default_adoption_rate, m.downloads);
    ensure(got == (2, 1, 1, Some(0.5), 1), || format!("metrics {got:?}"))?;
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "clusters=2 created=1 edited=1 adoption=0.5 downloads=1 in {:.2}s",
        elapsed.as_secs_f64()
    ))
}

fn crash_safety() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut acked: BTreeMap<String, u64> = BTreeMap::new();
    let mut total = 0;
    for run in 0..50 {
        let mut child = Command::new(env!("CARGO_BIN_EXE_cocreate"))
            .args(["stress-append", "--data"])
            .arg(dir.path())
            .env("RUST_LOG", "error")
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| e.to_string())?;
        let target = rng.gen_range(1..=40);
        let mut lines = BufReader::new(child.stdout.take().expect("piped")).lines();
        let mut seen = 0;
        while seen < target {
            let Some(Ok(line)) = lines.next() else {
                let _ = child.kill();
                return Err(format!("run {run}: writer exited early"));
            };
            if let Some((id, seq)) = cocreate_server::commands::parse_ack(&line) {
                let e = acked.entry(id).or_default();
                *e = (*e).max(seq);
                seen += 1;
            }
        }
        if rng.gen_bool(0.5) {
            std::thread::sleep(Duration::from_micros(rng.gen_range(0..2000)));
        }
        child.kill().map_err(|e| e.to_string())?; // SIGKILL
        let _ = child.wait();
        total += seen;

        let store = SessionStore::open(dir.path()).map_err(|e| format!("run {run}: reload failed: {e}"))?;
        for (id, seq) in &acked {
            let durable = store
                .get(&cocreate_core::ids::SessionId::new(id.as_str()))
                .map(|h| h.read(|s| s.last_seq))
                .unwrap_or(0);
            ensure(durable >= *seq, || format!("run {run}: {id} acked {seq}, only {durable} survived"))?;
        }
    }
    Ok(format!("50 kills, {total} acks observed, 0 acknowledged events lost"))
}

fn ablation() -> Check {
    let prompts: Vec<String> = [
        "a poster encouraging students to put their phones away",
        "an ad for a neighbourhood bike repair cafe",
        "a book cover about urban beekeeping",
        "a campaign against food waste in dorms",
        "a flyer for a community garden open day",
        "an illustration promoting public libraries",
        "a poster about getting enough sleep before exams",
        "a banner for a river clean-up weekend",
        "a mural concept celebrating local musicians",
        "a postcard inviting people to a stargazing night",
        "an ad for reusable coffee cups",
        "a poster encouraging taking the stairs",
    ]
    .map(String::from)
    .to_vec();
    let report = run_ablation(
        &MockText::new(12),
        &MockEmbedder::new(12),
        &Instructions::builtin(),
        &prompts,
        &AblationConfig {
            runs: 3,
            count: 9,
            parallelism: 4,
        },
    )
    .map_err(|e| e.to_string())?;
    ensure(report.cells.len() == 72 && report.missing_cells() == 0, || {
        format!("{} cells, {} missing", report.cells.len(), report.missing_cells())
    })?;
    ensure(report.cells.iter().all(|c| c.titles.len() == 9), || "a cell lacks 9 ideas".into())?;
    ensure(report.aggregated_score_count() == 24, || {
        format!("{} aggregated scores", report.aggregated_score_count())
    })?;
    let w = report.wilcoxon.as_ref().map_err(|e| format!("no Wilcoxon result: {e}"))?;

    let texts = Instructions::builtin();
    let text_of = |mode| {
        let r = build_ideation_instruction(&IdeationRequest::new("a poster about recycling", mode), &texts);
        format!("{}\n{}", r.system, r.user).to_lowercase()
    };
    let plain = text_of(IdeationMode::Plain);
    let assoc = text_of(IdeationMode::Associative);
    for term in ["associat", "artwork", "historical event", "mytholog", "metaphor"] {
        ensure(!plain.contains(term), || format!("plain instructions mention `{term}`"))?;
    }
    for domain in ["artworks", "historical events", "mythology", "metaphors"] {
        ensure(assoc.contains(domain), || format!("associative instructions lack `{domain}`"))?;
    }
    Ok(format!(
        "72 cells, 24 scores, one Wilcoxon (n={}, p={:.4}); instruction vocab checked",
        w.n_nonzero, w.p_two_sided
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("sketch round-trip and span reconstruction", sketch_round_trip),
        ("render fidelity", render_fidelity),
        ("grid slicing exact cover", tiling),
        ("diversity oracle", diversity_oracle),
        ("wilcoxon oracle", wilcoxon_oracle),
        ("usability score reconstruction", umux),
        ("counterbalancing table", bibd),
        ("offline end-to-end session", offline_demo),
        ("crash safety (kill after ack)", crash_safety),
        ("ablation harness shape", ablation),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
