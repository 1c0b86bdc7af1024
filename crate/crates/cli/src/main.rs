mod manifest;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use docground::annotate::{build_sample, AnnotateStats, GeneratedItem, PromptChoice};
use docground::dataset::{
    emit_parsing_tasks, load_corpus, parse_jsonl, partition, read_jsonl, write_jsonl, Page, ParsingGranularity, Record,
    Sample,
};
use docground::eval::{evaluate, render_table, threshold_sweep, EvalConfig, EvalReport, Prediction};
use docground::index::TextIndex;
use docground::layout::{merge, Block, MergeConfig, Source};
use docground::raster::{extract_block_boxes, render_scene, Scene, Toggle, DEFAULT_TOLERANCE};
use docground::synth::{self, BenchMix};
use docground::templates::TemplateSet;
use docground::verify::{derive_plain_qa, relabel, validate_sample, Verdict, VerifyOptions};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::manifest::RunManifest;

#[derive(Parser)]
#[command(name = "docground", version, about = "Grounded document data pipeline and bench scoring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ToggleArg {
    Opacity,
    Color,
}

#[derive(Subcommand)]
enum Command {
    /// Recover layer boxes of a scene by toggling each layer.
    ExtractBoxes {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, value_enum, default_value = "opacity")]
        toggle: ToggleArg,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tolerance: u8,
        /// Also write the baseline render as render.png.
        #[arg(long)]
        png: bool,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Merge an ordered and an unordered block list into one reading order.
    MergeLayout {
        #[arg(long)]
        ordered: PathBuf,
        #[arg(long)]
        unordered: PathBuf,
        /// JSON file with merge thresholds; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dup_iou: Option<f64>,
        #[arg(long)]
        dup_text_sim: Option<f64>,
        #[arg(long)]
        trunc_iou: Option<f64>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        col_overlap: Option<f64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Emit localization, recognition and full-page parsing records.
    GenParsingTasks {
        #[arg(long)]
        pages: PathBuf,
        #[arg(long)]
        templates: Option<PathBuf>,
        /// Comma-separated subset of word,phrase,line,paragraph,full_page.
        #[arg(long, value_delimiter = ',', default_values = ["word", "phrase", "line", "paragraph", "full_page"])]
        granularity: Vec<String>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Ground generated answers against page text and build samples.
    PostAnnotate {
        #[arg(long)]
        generated: PathBuf,
        #[arg(long)]
        pages: PathBuf,
        #[arg(long)]
        templates: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Split samples into accepted and rejected sets.
    Verify {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        pages: Option<PathBuf>,
        #[arg(long)]
        strict_pdf: bool,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Recompute task labels from the question markup.
    Classify {
        #[arg(long)]
        samples: PathBuf,
        /// Also add plain-answer copies of grounding samples.
        #[arg(long)]
        derive_plain_qa: bool,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Score predictions against ground truth.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        iou: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        sweep: Vec<f64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// F1_all at several IoU thresholds.
    Sweep {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.3, 0.5, 0.7, 0.9])]
        thresholds: Vec<f64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Write random scenes (JSON and PNG) and optionally a synthetic bench.
    RenderSynthetic {
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 6)]
        max_layers: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write bench.jsonl with the default task mix.
        #[arg(long)]
        bench: bool,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Print the table of a saved evaluation report.
    Report {
        #[arg(long)]
        report: PathBuf,
    },
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn write_lines<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    write_jsonl(path, items).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_pages(path: &Path) -> Result<HashMap<String, Page>> {
    let records = load_corpus(path).with_context(|| format!("loading {}", path.display()))?;
    let (pages, _, _) = partition(records);
    Ok(pages.into_iter().map(|p| (p.id().to_string(), p)).collect())
}

fn load_templates(path: Option<&Path>) -> Result<TemplateSet> {
    match path {
        Some(p) => TemplateSet::load(p).with_context(|| format!("loading templates {}", p.display())),
        None => Ok(TemplateSet::default()),
    }
}

fn read_samples(path: &Path) -> Result<Vec<Sample>> {
    read_jsonl(path).with_context(|| format!("reading {}", path.display()))
}

fn read_blocks(path: &Path, source: Source) -> Result<Vec<Block>> {
    let blocks: Vec<Block> = read_jsonl(path).with_context(|| format!("reading {}", path.display()))?;
    for (i, b) in blocks.iter().enumerate() {
        b.validate().with_context(|| format!("{} line {}", path.display(), i + 1))?;
        if b.source != source {
            bail!("{} line {}: block {:?} has source {:?}", path.display(), i + 1, b.id, b.source);
        }
    }
    Ok(blocks)
}

fn parse_granularity(s: &str) -> Result<ParsingGranularity> {
    serde_json::from_value(json!(s)).with_context(|| format!("unknown granularity {s:?}"))
}

fn sample_record(s: Sample) -> Record {
    Record::Sample(s)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::ExtractBoxes {
            scene,
            toggle,
            tolerance,
            png,
            out_dir,
        } => {
            let parsed: Scene = read_json(&scene)?;
            parsed.validate()?;
            let toggle = match toggle {
                ToggleArg::Opacity => Toggle::Opacity,
                ToggleArg::Color => Toggle::Color,
            };
            let boxes = extract_block_boxes(&parsed, toggle, tolerance)?;
            create_dir(&out_dir)?;
            write_json(&out_dir.join("boxes.json"), &boxes)?;
            if png {
                render_scene(&parsed)?.write_png(&out_dir.join("render.png"))?;
            }
            RunManifest::new(
                "extract-boxes",
                json!({ "toggle": toggle, "tolerance": tolerance }),
                &[&scene],
            )?
            .write(&out_dir)
        }
        Command::MergeLayout {
            ordered,
            unordered,
            config,
            dup_iou,
            dup_text_sim,
            trunc_iou,
            eps,
            col_overlap,
            out_dir,
        } => {
            let mut cfg: MergeConfig = match &config {
                Some(p) => read_json(p)?,
                None => MergeConfig::default(),
            };
            for (slot, flag) in [
                (&mut cfg.dup_iou, dup_iou),
                (&mut cfg.dup_text_sim, dup_text_sim),
                (&mut cfg.trunc_iou, trunc_iou),
                (&mut cfg.eps, eps),
                (&mut cfg.col_overlap, col_overlap),
            ] {
                if let Some(v) = flag {
                    *slot = v;
                }
            }
            cfg.validate()?;
            let o = read_blocks(&ordered, Source::Ordered)?;
            let u = read_blocks(&unordered, Source::Unordered)?;
            let merged = merge(&o, &u, &cfg);
            log::info!("merged {} ordered and {} unordered blocks into {}", o.len(), u.len(), merged.len());
            create_dir(&out_dir)?;
            write_lines(&out_dir.join("merged.jsonl"), &merged)?;
            let mut inputs = vec![ordered.as_path(), unordered.as_path()];
            inputs.extend(config.as_deref());
            RunManifest::new("merge-layout", serde_json::to_value(cfg)?, &inputs)?.write(&out_dir)
        }
        Command::GenParsingTasks {
            pages,
            templates,
            granularity,
            out_dir,
        } => {
            let levels = granularity.iter().map(|g| parse_granularity(g)).collect::<Result<Vec<_>>>()?;
            let set = load_templates(templates.as_deref())?;
            let (page_list, _, _) = partition(load_corpus(&pages).with_context(|| format!("loading {}", pages.display()))?);
            let mut records = Vec::new();
            for page in &page_list {
                for &g in &levels {
                    records.extend(emit_parsing_tasks(page, g, &set).into_iter().map(Record::Parsing));
                }
            }
            log::info!("{} records from {} pages", records.len(), page_list.len());
            create_dir(&out_dir)?;
            write_lines(&out_dir.join("parsing.jsonl"), &records)?;
            let mut inputs = vec![pages.as_path()];
            inputs.extend(templates.as_deref());
            RunManifest::new("gen-parsing-tasks", json!({ "granularity": levels }), &inputs)?.write(&out_dir)
        }
        Command::PostAnnotate {
            generated,
            pages,
            templates,
            seed,
            out_dir,
        } => {
            let set = load_templates(templates.as_deref())?;
            let page_map = load_pages(&pages)?;
            let items: Vec<GeneratedItem> =
                read_jsonl(&generated).with_context(|| format!("reading {}", generated.display()))?;
            let mut indexes: HashMap<&str, TextIndex> = HashMap::new();
            let mut stats = AnnotateStats::default();
            let mut samples = Vec::new();
            #[derive(Serialize)]
            struct PromptRow<'a> {
                id: &'a str,
                #[serde(flatten)]
                choice: PromptChoice,
            }
            let mut prompts = Vec::new();
            for item in &items {
                stats.items += 1;
                let Some(page) = page_map.get(item.page.as_str()) else {
                    log::warn!("{}: unknown page {:?}", item.id, item.page);
                    stats.dropped += 1;
                    continue;
                };
                let index = indexes.entry(page.id()).or_insert_with(|| TextIndex::build(page));
                match build_sample(item, page.doc_type(), index, &set, seed) {
                    Ok((sample, outcome, choice)) => {
                        stats.add(&outcome);
                        stats.emitted += 1;
                        prompts.push(PromptRow { id: &item.id, choice });
                        samples.push(sample_record(sample));
                    }
                    Err(e) => {
                        log::warn!("{}: {e}", item.id);
                        stats.dropped += 1;
                    }
                }
            }
            create_dir(&out_dir)?;
            write_lines(&out_dir.join("samples.jsonl"), &samples)?;
            write_lines(&out_dir.join("prompts.jsonl"), &prompts)?;
            write_json(&out_dir.join("stats.json"), &stats)?;
            println!(
                "emitted {} of {} (located {}, degraded {}, multiline {})",
                stats.emitted, stats.items, stats.located, stats.degraded, stats.multiline
            );
            let mut inputs = vec![generated.as_path(), pages.as_path()];
            inputs.extend(templates.as_deref());
            RunManifest::new("post-annotate", json!({ "seed": seed }), &inputs)?.write(&out_dir)
        }
        Command::Verify {
            samples,
            pages,
            strict_pdf,
            out_dir,
        } => {
            let list = read_samples(&samples)?;
            let page_map = match &pages {
                Some(p) => load_pages(p)?,
                None => HashMap::new(),
            };
            let opts = VerifyOptions { strict_pdf };
            #[derive(Serialize)]
            struct Rejected {
                sample: Sample,
                verdict: Verdict,
            }
            let mut accepted = Vec::new();
            let mut rejected = Vec::new();
            for s in list {
                let page = s.page.as_deref().and_then(|id| page_map.get(id));
                let verdict = validate_sample(&s.question, &s.answer, s.doc_type, page, opts);
                if verdict.accepted {
                    accepted.push(sample_record(s));
                } else {
                    rejected.push(Rejected { sample: s, verdict });
                }
            }
            create_dir(&out_dir)?;
            write_lines(&out_dir.join("accepted.jsonl"), &accepted)?;
            write_lines(&out_dir.join("rejected.jsonl"), &rejected)?;
            println!("accepted {} rejected {}", accepted.len(), rejected.len());
            let mut inputs = vec![samples.as_path()];
            inputs.extend(pages.as_deref());
            RunManifest::new("verify", json!({ "strict_pdf": strict_pdf }), &inputs)?.write(&out_dir)
        }
        Command::Classify {
            samples,
            derive_plain_qa: derive,
            out_dir,
        } => {
            let list = read_samples(&samples)?;
            let mut out = Vec::with_capacity(list.len());
            for s in &list {
                let labeled = relabel(s).map_err(|d| anyhow::anyhow!("sample {:?}: question defects {d:?}", s.id))?;
                if labeled.task != s.task {
                    log::info!("{}: {} -> {}", s.id, s.task, labeled.task);
                }
                let plain = if derive && labeled.task == docground::taxonomy::TaskKind::Ga {
                    Some(derive_plain_qa(&labeled)?)
                } else {
                    None
                };
                out.push(sample_record(labeled));
                out.extend(plain.map(sample_record));
            }
            create_dir(&out_dir)?;
            write_lines(&out_dir.join("classified.jsonl"), &out)?;
            RunManifest::new("classify", json!({ "derive_plain_qa": derive }), &[&samples])?.write(&out_dir)
        }
        Command::Evaluate {
            pred,
            gt,
            config,
            iou,
            sweep,
            out_dir,
        } => {
            let mut cfg: EvalConfig = match &config {
                Some(p) => read_json(p)?,
                None => EvalConfig::default(),
            };
            if let Some(t) = iou {
                cfg.iou_threshold = t;
            }
            let (preds, gts) = load_eval_inputs(&pred, &gt)?;
            let mut report = evaluate(&preds, &gts, &cfg)?;
            if !sweep.is_empty() {
                report.sweep = Some(threshold_sweep(&preds, &gts, &sweep)?);
            }
            for id in &report.unknown_ids {
                log::warn!("prediction for unknown sample {id:?} ignored");
            }
            print!("{}", render_table(&report));
            if let Some(dir) = out_dir {
                create_dir(&dir)?;
                write_json(&dir.join("report.json"), &report)?;
                fs::write(dir.join("report.txt"), render_table(&report))?;
                let mut inputs = vec![pred.as_path(), gt.as_path()];
                inputs.extend(config.as_deref());
                RunManifest::new(
                    "evaluate",
                    json!({ "iou_threshold": cfg.iou_threshold, "sweep": sweep }),
                    &inputs,
                )?
                .write(&dir)?;
            }
            Ok(())
        }
        Command::Sweep {
            pred,
            gt,
            thresholds,
            out_dir,
        } => {
            let (preds, gts) = load_eval_inputs(&pred, &gt)?;
            let points = threshold_sweep(&preds, &gts, &thresholds)?;
            println!("threshold  F1_all");
            for p in &points {
                println!("{:<10} {:.3}", p.threshold, p.f1_all);
            }
            if let Some(dir) = out_dir {
                create_dir(&dir)?;
                write_json(&dir.join("sweep.json"), &points)?;
                RunManifest::new("sweep", json!({ "thresholds": thresholds }), &[&pred, &gt])?.write(&dir)?;
            }
            Ok(())
        }
        Command::RenderSynthetic {
            count,
            max_layers,
            seed,
            bench,
            out_dir,
        } => {
            create_dir(&out_dir)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in 0..count {
                let (scene, _) = synth::random_scene(&mut rng, max_layers);
                write_json(&out_dir.join(format!("scene_{i:04}.json")), &scene)?;
                render_scene(&scene)?.write_png(&out_dir.join(format!("scene_{i:04}.png")))?;
            }
            if bench {
                let samples: Vec<Record> = synth::synthetic_bench(&mut rng, BenchMix::default())
                    .into_iter()
                    .map(sample_record)
                    .collect();
                write_lines(&out_dir.join("bench.jsonl"), &samples)?;
            }
            RunManifest::new(
                "render-synthetic",
                json!({ "count": count, "max_layers": max_layers, "seed": seed, "bench": bench }),
                &[],
            )?
            .write(&out_dir)
        }
        Command::Report { report } => {
            let parsed: EvalReport = read_json(&report)?;
            print!("{}", render_table(&parsed));
            Ok(())
        }
    }
}

/// Predictions (schema only) and ground truth (fully validated).
fn load_eval_inputs(pred: &Path, gt: &Path) -> Result<(Vec<Prediction>, Vec<Sample>)> {
    let preds: Vec<Prediction> = read_jsonl(pred).with_context(|| format!("reading {}", pred.display()))?;
    let text = fs::read_to_string(gt).with_context(|| format!("reading {}", gt.display()))?;
    let gts: Vec<Sample> = parse_jsonl(&text).with_context(|| format!("reading {}", gt.display()))?;
    for s in &gts {
        s.validate().with_context(|| format!("ground-truth sample {:?}", s.id))?;
    }
    Ok((preds, gts))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DOCGROUND_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
